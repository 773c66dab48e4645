//! Guide chapters compiled as doctests.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}
#[doc = include_str!("../../../book/src/statics.md")]
pub mod statics {}
#[doc = include_str!("../../../book/src/collapse.md")]
pub mod collapse {}
#[doc = include_str!("../../../book/src/registration.md")]
pub mod registration {}
#[doc = include_str!("../../../book/src/final_state.md")]
pub mod final_state {}
#[doc = include_str!("../../../book/src/oracles.md")]
pub mod oracles {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
