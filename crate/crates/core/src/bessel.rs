//! Integer-order Bessel functions `J_n` and `K_n` for real arguments.
//!
//! Both come from integral representations evaluated with the trapezoid rule:
//!
//! * `J_n(x) = (1/2 pi) int_0^{2 pi} cos(n t - x sin t) dt`, periodic, so the
//!   rule converges geometrically once the node count exceeds `x + n`;
//! * `K_n(x) = int_0^inf exp(-x cosh t) cosh(n t) dt`, analytic in a strip and
//!   doubly-exponentially decaying, so a fixed step is accurate to rounding.

use std::f64::consts::TAU;

/// Bessel function of the first kind, integer order.
pub fn bessel_j(n: i32, x: f64) -> f64 {
    if n < 0 {
        let v = bessel_j(-n, x);
        return if n % 2 == 0 { v } else { -v };
    }
    if x < 0.0 {
        let v = bessel_j(n, -x);
        return if n % 2 == 0 { v } else { -v };
    }
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    if x <= 2.0 {
        return j_series(n, x);
    }
    let nodes = 2 * (x.ceil() as usize + n as usize) + 64;
    let h = TAU / nodes as f64;
    let nf = n as f64;
    let sum: f64 = (0..nodes)
        .map(|k| {
            let t = k as f64 * h;
            (nf * t - x * t.sin()).cos()
        })
        .sum();
    sum / nodes as f64
}

/// Ascending series; terms shrink monotonically for `x <= 2`, so the result
/// keeps full relative accuracy where the quadrature only has absolute.
fn j_series(n: i32, x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = (1..=n).fold(1.0, |t, k| t * 0.5 * x / k as f64);
    let mut sum = term;
    for k in 1..60 {
        term *= q / (k as f64 * (k + n) as f64);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// Modified Bessel function of the second kind, integer order, `x > 0`.
pub fn bessel_k(n: i32, x: f64) -> f64 {
    assert!(x > 0.0, "bessel_k needs x > 0, got {x}");
    let n = n.unsigned_abs() as f64;
    const STEP: f64 = 0.05;
    // log of exp(-x cosh t) cosh(n t), overflow-free
    let log_term = |t: f64| -x * t.cosh() + n * t + (0.5 * (1.0 + (-2.0 * n * t).exp())).ln();
    // scale by the peak so tiny values (large x) keep full relative precision
    let peak_t = if n > x { (n / x).asinh() } else { 0.0 };
    let scale = log_term(peak_t);
    let mut sum = 0.5 * (log_term(0.0) - scale).exp();
    let mut k = 1;
    loop {
        let t = k as f64 * STEP;
        let term = (log_term(t) - scale).exp();
        sum += term;
        if t > peak_t && term < 1e-18 * sum {
            break;
        }
        k += 1;
    }
    sum * STEP * scale.exp()
}

/// `J_n'(x)`.
pub fn bessel_j_prime(n: i32, x: f64) -> f64 {
    0.5 * (bessel_j(n - 1, x) - bessel_j(n + 1, x))
}

/// `K_n'(x)`.
pub fn bessel_k_prime(n: i32, x: f64) -> f64 {
    -0.5 * (bessel_k(n - 1, x) + bessel_k(n + 1, x))
}
