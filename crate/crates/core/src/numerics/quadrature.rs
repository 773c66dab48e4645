//! Globally adaptive 10/21-point Gauss-Kronrod quadrature.
//!
//! The interval with the largest error estimate is bisected until the summed
//! error meets `max(abs_tol, rel_tol * |I|)`. Semi-infinite ranges are mapped
//! onto `[0, 1)` with `x = a + u / (1 - u)`.

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_980_627_020,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the odd-indexed Kronrod nodes XGK[1], XGK[3], ...
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { abs_tol: 1e-14, rel_tol: 1e-11, max_intervals: 4000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// One 21-point Kronrod panel on `[a, b]`: (estimate, error estimate).
fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[10] * fc;
    let mut gauss = 0.0;
    for (j, (&x, &w)) in XGK[..10].iter().zip(&WGK[..10]).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let value = kronrod * half;
    let err = ((kronrod - gauss) * half).abs();
    (value, err)
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

/// Integrates `f` over `[a, b]`, starting from `initial_panels` equal panels.
pub fn integrate_panels<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    initial_panels: usize,
    opts: QuadOptions,
) -> Result<QuadResult> {
    let n0 = initial_panels.max(1);
    let width = (b - a) / n0 as f64;
    let mut panels: Vec<Panel> = (0..n0)
        .map(|i| {
            let lo = a + i as f64 * width;
            let hi = if i + 1 == n0 { b } else { lo + width };
            let (value, error) = gk21(&f, lo, hi);
            Panel { a: lo, b: hi, value, error }
        })
        .collect();
    let mut evaluations = 21 * n0;
    loop {
        let total: f64 = super::compensated_sum(panels.iter().map(|p| p.value));
        let err: f64 = panels.iter().map(|p| p.error).sum();
        if err <= opts.abs_tol.max(opts.rel_tol * total.abs()) {
            return Ok(QuadResult { value: total, error: err, evaluations });
        }
        if panels.len() >= opts.max_intervals {
            return Err(Error::QuadratureNotConverged { estimate: total, error: err });
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("at least one panel");
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            return Err(Error::QuadratureNotConverged { estimate: total, error: err });
        }
        let (lv, le) = gk21(&f, p.a, mid);
        let (rv, re) = gk21(&f, mid, p.b);
        evaluations += 42;
        panels.push(Panel { a: p.a, b: mid, value: lv, error: le });
        panels.push(Panel { a: mid, b: p.b, value: rv, error: re });
    }
}

pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<QuadResult> {
    integrate_panels(f, a, b, 1, opts)
}

/// `int_a^inf f(x) dx` through `x = a + u/(1-u)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, opts: QuadOptions) -> Result<QuadResult> {
    let mapped = |u: f64| {
        let w = 1.0 - u;
        let x = a + u / w;
        f(x) / (w * w)
    };
    integrate_panels(mapped, 0.0, 1.0, 4, opts)
}
