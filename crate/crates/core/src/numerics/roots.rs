//! Grid bracketing followed by bisection.
//!
//! Bisection is slow but cannot leave its bracket, which matters for fixed
//! point maps with several crossings close together.

/// Bisects `f` on `[a, b]` (with `f(a) f(b) <= 0`) until the bracket is
/// narrower than `xtol`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, xtol: f64) -> f64 {
    let mut fa = f(a);
    if fa == 0.0 {
        return a;
    }
    let fb = f(b);
    if fb == 0.0 {
        return b;
    }
    debug_assert!(fa * fb < 0.0, "bisect called without a sign change");
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if (b - a).abs() <= xtol || mid == a || mid == b {
            return mid;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// All roots of `f` on `[a, b]` found by sign changes on a uniform grid of
/// `points` nodes, each refined by bisection to `xtol`. Roots closer together
/// than the grid spacing can be missed in pairs.
pub fn grid_roots<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, points: usize, xtol: f64) -> Vec<f64> {
    assert!(points >= 2);
    let dx = (b - a) / (points - 1) as f64;
    let node = |i: usize| if i == points - 1 { b } else { a + i as f64 * dx };
    let mut roots: Vec<f64> = Vec::new();
    let mut x_prev = node(0);
    let mut f_prev = f(x_prev);
    if f_prev == 0.0 {
        roots.push(x_prev);
    }
    for i in 1..points {
        let x = node(i);
        let fx = f(x);
        if fx == 0.0 {
            roots.push(x);
        } else if f_prev != 0.0 && (fx < 0.0) != (f_prev < 0.0) {
            roots.push(bisect(&f, x_prev, x, xtol));
        }
        x_prev = x;
        f_prev = fx;
    }
    roots
}
