//! Density-matrix oracle for the entanglement-fidelity bound.

#![allow(dead_code)]

use std::f64::consts::TAU;

use mplc_core::CMatrix;
use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian<R: Rng>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// `(1/sqrt d) sum_m |m m>`, index `m * d + n`.
pub fn phi_plus(d: usize) -> DVector<Complex64> {
    let mut v = DVector::zeros(d * d);
    for m in 0..d {
        v[m * d + m] = Complex64::new(1.0 / (d as f64).sqrt(), 0.0);
    }
    v
}

/// Random mixed state on `C^d (x) C^d`: a Wishart matrix of random rank,
/// mixed with `|Phi+>` at a random weight so that high fidelities are sampled
/// as well as low ones.
pub fn random_state<R: Rng>(d: usize, rng: &mut R) -> CMatrix {
    let n = d * d;
    let rank = rng.random_range(1..=n);
    let g = CMatrix::from_fn(n, rank, |_, _| gaussian(rng));
    let mut w = &g * g.adjoint();
    let tr = w.trace();
    w /= tr;
    let phi = phi_plus(d);
    let p: f64 = rng.random::<f64>().powi(2);
    let proj = &phi * phi.adjoint();
    w * Complex64::new(1.0 - p, 0.0) + proj * Complex64::new(p, 0.0)
}

pub fn fidelity(rho: &CMatrix, d: usize) -> f64 {
    let phi = phi_plus(d);
    (phi.adjoint() * rho * &phi)[(0, 0)].re
}

/// `exp(2 pi i s j k / d) / sqrt d`.
pub fn fourier(d: usize, sign: f64) -> CMatrix {
    CMatrix::from_fn(d, d, |j, k| {
        Complex64::from_polar(1.0 / (d as f64).sqrt(), sign * TAU * (j * k) as f64 / d as f64)
    })
}

/// `p(j, k) = <jk| (U (x) V) rho (U (x) V)^dagger |jk>`.
pub fn measure(rho: &CMatrix, u: &CMatrix, v: &CMatrix) -> Vec<Vec<f64>> {
    let d = u.nrows();
    let uv = u.kronecker(v);
    let out = &uv * rho * uv.adjoint();
    (0..d)
        .map(|j| (0..d).map(|k| out[(j * d + k, j * d + k)].re.max(0.0)).collect())
        .collect()
}

pub fn normalize(t: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let s: f64 = t.iter().flatten().sum();
    t.into_iter().map(|r| r.into_iter().map(|p| p / s).collect()).collect()
}
