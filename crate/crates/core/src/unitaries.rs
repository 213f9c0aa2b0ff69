//! Target transformations: DFT bases, Haar-random unitaries, direct sums and
//! diagonal input phases.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::CMatrix;

/// Max-norm tolerance on `U^dagger U - I` for constructed unitaries.
pub const CONSTRUCTION_TOLERANCE: f64 = 1e-12;

/// `max |(U^dagger U - I)_ij|`.
pub fn unitarity_error(m: &CMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let g = m.adjoint() * m;
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// Square complex matrix known to be unitary.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix(CMatrix);

impl UnitaryMatrix {
    /// Accepts `m` if `max |U^dagger U - I| < tolerance`.
    pub fn from_matrix(m: CMatrix, tolerance: f64) -> Result<Self> {
        let err = unitarity_error(&m);
        if err < tolerance {
            Ok(Self(m))
        } else {
            Err(Error::NotUnitary(err))
        }
    }

    pub fn identity(n: usize) -> Self {
        Self(CMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn compose(&self, then: &UnitaryMatrix) -> Self {
        Self(&then.0 * &self.0)
    }

    pub fn to_record(&self) -> UnitaryRecord {
        UnitaryRecord {
            n: self.dim(),
            entries: self.0.transpose().iter().map(|z| [z.re, z.im]).collect(),
        }
    }

    pub fn from_record(record: &UnitaryRecord, tolerance: f64) -> Result<Self> {
        if record.entries.len() != record.n * record.n {
            return Err(Error::LengthMismatch {
                expected: record.n * record.n,
                got: record.entries.len(),
            });
        }
        let m = CMatrix::from_row_iterator(
            record.n,
            record.n,
            record.entries.iter().map(|&[re, im]| Complex64::new(re, im)),
        );
        Self::from_matrix(m, tolerance)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: UnitaryRecord =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_record(&record, 1e-9)
    }
}

/// Text form of a unitary: row-major `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitaryRecord {
    pub n: usize,
    pub entries: Vec<[f64; 2]>,
}

/// DFT matrix with entry `(j, m) = w^(j m) / sqrt(N)`, `w = exp(+-2 pi i / N)`,
/// indices from zero; `conjugated` selects the minus sign.
pub fn dft(n: usize, conjugated: bool) -> Result<UnitaryMatrix> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("DFT dimension must be >= 2, got {n}")));
    }
    let sign = if conjugated { -1.0 } else { 1.0 };
    let norm = 1.0 / (n as f64).sqrt();
    let m = CMatrix::from_fn(n, n, |j, k| {
        // reduce the exponent mod n so large products stay exact
        let e = ((j * k) % n) as f64;
        Complex64::from_polar(norm, sign * TAU * e / n as f64)
    });
    UnitaryMatrix::from_matrix(m, CONSTRUCTION_TOLERANCE)
}

/// Haar-distributed unitary from the QR factorization of a Ginibre matrix,
/// with the phases of `R`'s diagonal moved into `Q`.
pub fn haar_random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<UnitaryMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1".into()));
    }
    let g = CMatrix::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    UnitaryMatrix::from_matrix(q, CONSTRUCTION_TOLERANCE)
}

/// Direct sum of the blocks along the diagonal.
pub fn block_diag(blocks: &[UnitaryMatrix]) -> Result<UnitaryMatrix> {
    if blocks.is_empty() {
        return Err(Error::InvalidArgument("block_diag needs at least one block".into()));
    }
    let n: usize = blocks.iter().map(UnitaryMatrix::dim).sum();
    let mut m = CMatrix::zeros(n, n);
    let mut offset = 0;
    for b in blocks {
        let d = b.dim();
        m.view_mut((offset, offset), (d, d)).copy_from(b.matrix());
        offset += d;
    }
    Ok(UnitaryMatrix(m))
}

/// `diag(exp(i phases_m))`.
pub fn input_phase_ramp(phases: &[f64]) -> UnitaryMatrix {
    let n = phases.len();
    let mut m = CMatrix::zeros(n, n);
    for (k, &p) in phases.iter().enumerate() {
        m[(k, k)] = Complex64::from_polar(1.0, p);
    }
    UnitaryMatrix(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, task_rng};
    use std::f64::consts::FRAC_1_SQRT_2;

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn dft_two_is_hadamard() {
        let u = dft(2, false).unwrap();
        let h = FRAC_1_SQRT_2;
        let m = u.matrix();
        assert!(close(m[(0, 0)], h.into()));
        assert!(close(m[(0, 1)], h.into()));
        assert!(close(m[(1, 0)], h.into()));
        assert!(close(m[(1, 1)], (-h).into()));
    }

    #[test]
    fn dft_properties() {
        assert!(dft(1, false).is_err());
        for n in 2..9 {
            let u = dft(n, false).unwrap();
            let v = dft(n, true).unwrap();
            assert!(unitarity_error(u.matrix()) < 1e-12);
            for z in u.matrix().iter() {
                assert!((z.norm() - 1.0 / (n as f64).sqrt()).abs() < 1e-12);
            }
            // the conjugated DFT is the inverse of the DFT (DFT is symmetric)
            let p = u.matrix() * v.matrix();
            assert!(unitarity_error(&p) < 1e-12);
            for i in 0..n {
                for j in 0..n {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!(close(p[(i, j)], e.into()));
                }
            }
        }
    }

    #[test]
    fn haar_samples_are_unitary_and_reproducible() {
        for n in [1, 2, 4, 7, 16] {
            let u = haar_random(n, &mut seeded(5)).unwrap();
            assert!(unitarity_error(u.matrix()) < 1e-12);
            let v = haar_random(n, &mut seeded(5)).unwrap();
            assert_eq!(u, v);
        }
        assert!(haar_random(0, &mut seeded(0)).is_err());
    }

    #[test]
    fn haar_first_moment() {
        // E|U_00|^2 = 1/N
        let n = 4;
        let count = 10_000;
        let mean: f64 = (0..count)
            .map(|i| haar_random(n, &mut task_rng(17, i)).unwrap().matrix()[(0, 0)].norm_sqr())
            .sum::<f64>()
            / count as f64;
        assert!((mean - 0.25).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn haar_entry_distribution_matches_beta_law() {
        // For Haar U of size N, x = |U_00|^2 ~ Beta(1, N-1), whose CDF is
        // 1 - (1-x)^(N-1). Compare by KS distance.
        let n = 4;
        let count = 10_000;
        let mut xs: Vec<f64> = (0..count)
            .map(|i| haar_random(n, &mut task_rng(3, i)).unwrap().matrix()[(0, 0)].norm_sqr())
            .collect();
        xs.sort_by(f64::total_cmp);
        let mut d = 0.0f64;
        for (k, &x) in xs.iter().enumerate() {
            let cdf = 1.0 - (1.0 - x).powi(n as i32 - 1);
            d = d.max((cdf - k as f64 / count as f64).abs());
            d = d.max((cdf - (k + 1) as f64 / count as f64).abs());
        }
        assert!(d < 0.05, "KS distance {d}");
    }

    #[test]
    fn different_seeds_are_not_aligned() {
        let n = 4;
        for i in 0..20 {
            let u = haar_random(n, &mut task_rng(1, i)).unwrap();
            let v = haar_random(n, &mut task_rng(1, i + 100)).unwrap();
            let tr = (u.matrix().adjoint() * v.matrix()).trace().norm() / n as f64;
            assert!(tr < 0.95, "trace overlap {tr}");
        }
    }

    #[test]
    fn block_diag_structure() {
        let i2 = UnitaryMatrix::identity(2);
        assert_eq!(block_diag(&[i2.clone(), i2]).unwrap(), UnitaryMatrix::identity(4));
        let m = block_diag(&[dft(2, false).unwrap(), dft(2, true).unwrap()]).unwrap();
        assert!(unitarity_error(m.matrix()) < 1e-12);
        for i in 0..2 {
            for j in 2..4 {
                assert_eq!(m.matrix()[(i, j)], Complex64::new(0.0, 0.0));
                assert_eq!(m.matrix()[(j, i)], Complex64::new(0.0, 0.0));
            }
        }
        assert!(block_diag(&[]).is_err());
    }

    #[test]
    fn phase_ramp() {
        assert_eq!(input_phase_ramp(&[0.0; 3]), UnitaryMatrix::identity(3));
        let r = input_phase_ramp(&[0.0, 1.0]);
        assert!(close(r.matrix()[(1, 1)], Complex64::from_polar(1.0, 1.0)));
    }

    #[test]
    fn record_round_trip() {
        let u = haar_random(3, &mut seeded(9)).unwrap();
        let back = UnitaryMatrix::from_json(&u.to_json()).unwrap();
        assert_eq!(back, u);
        let bad = r#"{"n":2,"entries":[[1,0],[1,0],[0,0],[1,0]]}"#;
        assert!(matches!(UnitaryMatrix::from_json(bad), Err(Error::NotUnitary(_))));
    }
}
