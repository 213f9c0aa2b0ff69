//! Fidelity lower bound to the maximally entangled state from a standard-basis
//! and a DFT-basis coincidence table, and the Schmidt dimension it certifies.
//!
//! With `p(m, n)` the standard-basis table and `S` the summed correlated
//! outcomes of the DFT (photon A) / conjugate DFT (photon B) measurement,
//!
//! ```text
//! S = F + (1/d) sum_{m != n} p(m, n)
//!       + (1/d) sum' <m n| rho |m' n'>
//! ```
//!
//! where `sum'` runs over ordered pairs `(m, n) != (m', n')` of off-diagonal
//! index pairs with `n - m = n' - m' (mod d)`. Bounding each coherence by
//! `sqrt(p(m, n) p(m', n'))` gives
//!
//! ```text
//! F >= S - (1/d) [ sum_{m != n} p(m, n) + sum' sqrt(p(m, n) p(m', n')) ].
//! ```

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::twophoton::CoincidenceTable;

/// Which DFT convention the second photon was measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MubConvention {
    /// Conjugate DFT on photon B: correlations on the diagonal `j = k`.
    #[default]
    Conjugated,
    /// Plain DFT on both photons: correlations on `j + k = 0 (mod d)`.
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationResult {
    pub d: usize,
    /// Diagonal contribution `(1/d) sum_m p(m, m)`.
    pub f1: f64,
    /// Lower bound on the coherence contribution, `F_bound - F1` before clipping.
    pub f2_bound: f64,
    /// Certified fidelity lower bound, clipped at 0.
    pub f_bound: f64,
    /// Largest `m` with `F_bound > (m - 1)/d`.
    pub certified_dimension: usize,
    /// Summed correlated outcomes in the DFT basis.
    pub mub_correlation: f64,
    pub convention: MubConvention,
    pub digest: String,
}

/// Thresholds `(m - 1)/d` for `m = 1..=d`.
pub fn certification_thresholds(d: usize) -> Result<Vec<f64>> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!("dimension must be >= 2, got {d}")));
    }
    Ok((1..=d).map(|m| (m - 1) as f64 / d as f64).collect())
}

/// Largest `m` in `1..=d` with `f > (m - 1)/d`, at least 1.
pub fn certified_dimension(f: f64, d: usize) -> usize {
    (1..=d)
        .rev()
        .find(|&m| f > (m - 1) as f64 / d as f64)
        .unwrap_or(1)
}

fn check_table(name: &str, t: &[Vec<f64>], d: usize) -> Result<()> {
    if t.len() != d || t.iter().any(|r| r.len() != d) {
        return Err(Error::DimensionMismatch(format!("{name} table is not {d}x{d}")));
    }
    if t.iter().flatten().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::InvalidArgument(format!("{name} table has negative entries")));
    }
    let sum: f64 = t.iter().flatten().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalized(sum));
    }
    Ok(())
}

/// Fidelity bound from `d x d` probability tables indexed `[a][b]`.
pub fn certify_matrices(
    p_std: &[Vec<f64>],
    p_mub: &[Vec<f64>],
    d: usize,
    convention: MubConvention,
) -> Result<CertificationResult> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!("dimension must be >= 2, got {d}")));
    }
    check_table("standard", p_std, d)?;
    check_table("MUB", p_mub, d)?;
    let df = d as f64;

    let diagonal: f64 = (0..d).map(|m| p_std[m][m]).sum();
    let off_diagonal = 1.0 - diagonal;
    let mub_correlation: f64 = (0..d)
        .map(|j| match convention {
            MubConvention::Conjugated => p_mub[j][j],
            MubConvention::Plain => p_mub[j][(d - j) % d],
        })
        .sum();

    // sum' over ordered pairs within each nonzero difference class: the full
    // ordered double sum minus its diagonal.
    let mut cross = 0.0;
    for delta in 1..d {
        let roots: Vec<f64> = (0..d).map(|m| p_std[m][(m + delta) % d].sqrt()).collect();
        let s: f64 = roots.iter().sum();
        let s2: f64 = roots.iter().map(|r| r * r).sum();
        cross += s * s - s2;
    }

    let raw = mub_correlation - (off_diagonal + cross) / df;
    let f1 = diagonal / df;
    let f_bound = raw.max(0.0);
    Ok(CertificationResult {
        d,
        f1,
        f2_bound: raw - f1,
        f_bound,
        certified_dimension: certified_dimension(f_bound, d),
        mub_correlation,
        convention,
        digest: String::new(),
    })
}

/// Fidelity bound from cross-block coincidence tables. Each table must cover a
/// `d x d` domain and be normalized over it.
pub fn certify(
    p_std: &CoincidenceTable,
    p_mub: &CoincidenceTable,
    d: usize,
    convention: MubConvention,
) -> Result<CertificationResult> {
    let a = p_std.block_matrix()?;
    let b = p_mub.block_matrix()?;
    if a.len() != d || b.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "tables have {} and {} rows, expected {d}",
            a.len(),
            b.len()
        )));
    }
    let mut r = certify_matrices(&a, &b, d, convention)?;
    r.digest = format!(
        "standard: {} [{}]; mub: {} [{}]; convention: {:?}",
        describe(p_std),
        p_std.normalization(),
        describe(p_mub),
        p_mub.normalization(),
        convention
    );
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountCertification {
    pub result: CertificationResult,
    /// Standard deviation of `F_bound` over Poisson resamples of the counts.
    pub f_bound_std: f64,
    pub resamples: usize,
}

fn normalize_counts(name: &str, counts: &[Vec<f64>], d: usize) -> Result<Vec<Vec<f64>>> {
    if counts.len() != d || counts.iter().any(|r| r.len() != d) {
        return Err(Error::DimensionMismatch(format!("{name} counts are not {d}x{d}")));
    }
    if counts.iter().flatten().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(Error::InvalidArgument(format!("{name} counts must be finite and >= 0")));
    }
    let total: f64 = counts.iter().flatten().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument(format!("{name} counts are all zero")));
    }
    Ok(counts.iter().map(|r| r.iter().map(|c| c / total).collect()).collect())
}

fn resample<R: Rng + ?Sized>(counts: &[Vec<f64>], rng: &mut R) -> Vec<Vec<f64>> {
    counts
        .iter()
        .map(|r| {
            r.iter()
                .map(|&c| if c > 0.0 { Poisson::new(c).map(|p| p.sample(rng)).unwrap_or(c) } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Fidelity bound from raw `d x d` coincidence counts, with an error bar from
/// Poisson resampling of every cell. Resamples with an empty table are
/// skipped.
pub fn certify_counts<R: Rng + ?Sized>(
    counts_std: &[Vec<f64>],
    counts_mub: &[Vec<f64>],
    d: usize,
    convention: MubConvention,
    resamples: usize,
    rng: &mut R,
) -> Result<CountCertification> {
    let p_std = normalize_counts("standard", counts_std, d)?;
    let p_mub = normalize_counts("MUB", counts_mub, d)?;
    let mut result = certify_matrices(&p_std, &p_mub, d, convention)?;
    let total = |c: &[Vec<f64>]| c.iter().flatten().sum::<f64>();
    result.digest = format!(
        "standard: {} counts; mub: {} counts; each table normalized to unit sum; convention: {:?}",
        total(counts_std),
        total(counts_mub),
        convention
    );
    let mut values = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let a = resample(counts_std, rng);
        let b = resample(counts_mub, rng);
        let (Ok(a), Ok(b)) = (normalize_counts("standard", &a, d), normalize_counts("MUB", &b, d)) else {
            continue;
        };
        values.push(certify_matrices(&a, &b, d, convention)?.f_bound);
    }
    let f_bound_std = if values.len() > 1 {
        let m = values.iter().sum::<f64>() / values.len() as f64;
        (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(CountCertification {
        result,
        f_bound_std,
        resamples: values.len(),
    })
}

fn describe(t: &CoincidenceTable) -> String {
    let sum: f64 = t.probabilities().iter().sum();
    format!("{} pairs, sum {:.12}", t.pairs().len(), sum)
}
