//! Two-photon states over `M` spatial modes and their detection statistics.
//!
//! A state is stored in first quantization: `coeff[(p, q)]` is the amplitude
//! for photon 1 in mode `p` and photon 2 in mode `q`. Indistinguishable boson
//! states are kept symmetric. A linear device `T` acts as `c -> T c T^T`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::CMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Statistics {
    #[default]
    IndistinguishableBosons,
    Distinguishable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhotonState {
    coeff: CMatrix,
    statistics: Statistics,
    /// `sum |c|^2`; below 1 after a lossy device.
    survival: f64,
}

impl TwoPhotonState {
    /// Builds a normalized state; boson states are symmetrized first.
    pub fn new(coeff: CMatrix, statistics: Statistics) -> Result<Self> {
        if !coeff.is_square() || coeff.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "coefficient matrix must be square and non-empty, got {}x{}",
                coeff.nrows(),
                coeff.ncols()
            )));
        }
        let coeff = match statistics {
            Statistics::IndistinguishableBosons => (&coeff + coeff.transpose()) * Complex64::new(0.5, 0.0),
            Statistics::Distinguishable => coeff,
        };
        let norm = coeff.iter().map(|z| z.norm_sqr()).sum::<f64>();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidArgument("state has zero norm".into()));
        }
        Ok(Self {
            coeff: coeff / Complex64::new(norm.sqrt(), 0.0),
            statistics,
            survival: 1.0,
        })
    }

    pub fn modes(&self) -> usize {
        self.coeff.nrows()
    }

    pub fn coeff(&self) -> &CMatrix {
        &self.coeff
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    pub fn with_statistics(&self, statistics: Statistics) -> Result<Self> {
        Self::new(self.coeff.clone(), statistics)
    }

    pub fn survival(&self) -> f64 {
        self.survival
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coeff.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// `(1/sqrt N) sum_p exp(i phases_p) |a_p>|b_p>` over the given `(a, b)` pairs.
pub fn pixel_entangled_state(
    modes: usize,
    pairing: &[(usize, usize)],
    phases: &[f64],
    statistics: Statistics,
) -> Result<TwoPhotonState> {
    if pairing.is_empty() {
        return Err(Error::InvalidArgument("empty pairing".into()));
    }
    if phases.len() != pairing.len() {
        return Err(Error::LengthMismatch {
            expected: pairing.len(),
            got: phases.len(),
        });
    }
    let a: BTreeSet<usize> = pairing.iter().map(|p| p.0).collect();
    let b: BTreeSet<usize> = pairing.iter().map(|p| p.1).collect();
    if a.len() != pairing.len() || b.len() != pairing.len() {
        return Err(Error::NonInjectivePairing(format!("{pairing:?}")));
    }
    if !a.is_disjoint(&b) {
        return Err(Error::NonInjectivePairing(format!(
            "photon blocks overlap: {pairing:?}"
        )));
    }
    if let Some(&(p, q)) = pairing.iter().find(|&&(p, q)| p >= modes || q >= modes) {
        return Err(Error::DimensionMismatch(format!(
            "pair ({p}, {q}) outside {modes} modes"
        )));
    }
    let mut c = CMatrix::zeros(modes, modes);
    let amp = 1.0 / (pairing.len() as f64).sqrt();
    for (&(p, q), &phi) in pairing.iter().zip(phases) {
        c[(p, q)] = Complex64::from_polar(amp, phi);
    }
    TwoPhotonState::new(c, statistics)
}

/// Output state `T c T^T`; not renormalized, the lost norm is kept in
/// [`TwoPhotonState::survival`].
pub fn evolve(state: &TwoPhotonState, t: &CMatrix) -> Result<TwoPhotonState> {
    if t.nrows() != state.modes() || t.ncols() != state.modes() {
        return Err(Error::DimensionMismatch(format!(
            "device is {}x{}, state has {} modes",
            t.nrows(),
            t.ncols(),
            state.modes()
        )));
    }
    let coeff = t * &state.coeff * t.transpose();
    let survival = coeff.iter().map(|z| z.norm_sqr()).sum();
    Ok(TwoPhotonState {
        coeff,
        statistics: state.statistics,
        survival,
    })
}

/// Which detector pairs a coincidence table covers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Domain {
    /// Unordered pairs `i < j`, plus `i == i` when bunched events are counted.
    AllPairs { modes: usize, include_bunched: bool },
    /// Ordered pairs `(a, b)` with `a` in one detector block and `b` in the other.
    CrossBlock { a: Vec<usize>, b: Vec<usize> },
}

impl Domain {
    pub fn distinct_pairs(modes: usize) -> Self {
        Domain::AllPairs {
            modes,
            include_bunched: false,
        }
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        match self {
            Domain::AllPairs {
                modes,
                include_bunched,
            } => {
                let mut v = Vec::new();
                for i in 0..*modes {
                    for j in i..*modes {
                        if i != j || *include_bunched {
                            v.push((i, j));
                        }
                    }
                }
                v
            }
            Domain::CrossBlock { a, b } => a
                .iter()
                .flat_map(|&i| b.iter().map(move |&j| (i, j)))
                .collect(),
        }
    }

    fn describe(&self) -> String {
        match self {
            Domain::AllPairs {
                modes,
                include_bunched,
            } => format!("all-pairs modes={modes} bunched={include_bunched}"),
            Domain::CrossBlock { a, b } => {
                let join = |v: &[usize]| {
                    v.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
                };
                format!("cross-block a={} b={}", join(a), join(b))
            }
        }
    }

    fn parse(text: &str) -> Result<Self> {
        let err = || Error::Parse(format!("bad domain line: {text}"));
        let mut words = text.split_whitespace();
        let kind = words.next().ok_or_else(err)?;
        let mut field = |key: &str| -> Result<String> {
            let w = words.next().ok_or_else(err)?;
            w.strip_prefix(key)
                .and_then(|s| s.strip_prefix('='))
                .map(str::to_string)
                .ok_or_else(err)
        };
        match kind {
            "all-pairs" => {
                let modes = field("modes")?.parse().map_err(|_| err())?;
                let include_bunched = field("bunched")?.parse().map_err(|_| err())?;
                Ok(Domain::AllPairs {
                    modes,
                    include_bunched,
                })
            }
            "cross-block" => {
                let list = |s: String| -> Result<Vec<usize>> {
                    s.split(';').map(|x| x.parse().map_err(|_| err())).collect()
                };
                let a = list(field("a")?)?;
                let b = list(field("b")?)?;
                Ok(Domain::CrossBlock { a, b })
            }
            _ => Err(err()),
        }
    }
}

/// Joint detection probabilities over a [`Domain`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceTable {
    domain: Domain,
    pairs: Vec<(usize, usize)>,
    probabilities: Vec<f64>,
    normalization: String,
}

pub const POST_SELECTED: &str = "post-selected over domain";

impl CoincidenceTable {
    /// Normalizes `values` to unit sum over the domain.
    pub fn from_rates(domain: Domain, values: Vec<f64>) -> Result<Self> {
        let pairs = domain.pairs();
        if pairs.is_empty() {
            return Err(Error::EmptyDomain);
        }
        if values.len() != pairs.len() {
            return Err(Error::LengthMismatch {
                expected: pairs.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("rates must be finite and >= 0".into()));
        }
        let total: f64 = values.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument("all rates are zero".into()));
        }
        Ok(Self {
            domain,
            pairs,
            probabilities: values.into_iter().map(|v| v / total).collect(),
            normalization: POST_SELECTED.into(),
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn normalization(&self) -> &str {
        &self.normalization
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.pairs
            .iter()
            .position(|&p| p == (i, j))
            .map(|k| self.probabilities[k])
    }

    /// Cross-block table as a `|a| x |b|` matrix indexed by block position.
    pub fn block_matrix(&self) -> Result<Vec<Vec<f64>>> {
        match &self.domain {
            Domain::CrossBlock { a, b } => Ok(a
                .iter()
                .enumerate()
                .map(|(ia, _)| {
                    (0..b.len())
                        .map(|ib| self.probabilities[ia * b.len() + ib])
                        .collect()
                })
                .collect()),
            Domain::AllPairs { .. } => Err(Error::DomainMismatch(
                "block matrix needs a cross-block table".into(),
            )),
        }
    }

    /// Delimited text: `#` header lines for domain and normalization, then
    /// `i,j,probability` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# domain: {}", self.domain.describe());
        let _ = writeln!(s, "# normalization: {}", self.normalization);
        s.push_str("i,j,probability\n");
        for (&(i, j), p) in self.pairs.iter().zip(&self.probabilities) {
            let _ = writeln!(s, "{i},{j},{p:.17e}");
        }
        s
    }

    /// Parses [`Self::to_csv`] output or externally measured rates in the same
    /// layout; values are renormalized over the domain.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut domain = None;
        let mut rows = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(h) = line.strip_prefix('#') {
                if let Some(d) = h.trim().strip_prefix("domain:") {
                    domain = Some(Domain::parse(d.trim())?);
                }
                continue;
            }
            if line.starts_with("i,") {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 3 {
                return Err(Error::Parse(format!("expected 3 columns: {line}")));
            }
            let bad = |_| Error::Parse(format!("bad row: {line}"));
            let i: usize = cols[0].parse().map_err(|_| Error::Parse(line.into()))?;
            let j: usize = cols[1].parse().map_err(|_| Error::Parse(line.into()))?;
            let p: f64 = cols[2].parse().map_err(bad)?;
            rows.push(((i, j), p));
        }
        let domain = domain.ok_or_else(|| Error::Parse("missing domain header".into()))?;
        let pairs = domain.pairs();
        let mut values = Vec::with_capacity(pairs.len());
        for pair in &pairs {
            let v = rows
                .iter()
                .find(|(p, _)| p == pair)
                .map(|r| r.1)
                .ok_or_else(|| Error::Parse(format!("missing row for {pair:?}")))?;
            values.push(v);
        }
        if rows.len() != pairs.len() {
            return Err(Error::Parse(format!(
                "{} rows for a domain of {} pairs",
                rows.len(),
                pairs.len()
            )));
        }
        Self::from_rates(domain, values)
    }
}

/// Unnormalized probability of one photon at `i` and one at `j`.
fn pair_probability(c: &CMatrix, statistics: Statistics, i: usize, j: usize) -> f64 {
    if i == j {
        return c[(i, i)].norm_sqr();
    }
    match statistics {
        Statistics::IndistinguishableBosons => (c[(i, j)] + c[(j, i)]).norm_sqr() / 2.0,
        Statistics::Distinguishable => c[(i, j)].norm_sqr() + c[(j, i)].norm_sqr(),
    }
}

/// Detection probabilities over `domain` without renormalization.
pub fn coincidence_rates(state: &TwoPhotonState, domain: &Domain) -> Result<Vec<f64>> {
    let pairs = domain.pairs();
    if pairs.is_empty() {
        return Err(Error::EmptyDomain);
    }
    let m = state.modes();
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= m || j >= m) {
        return Err(Error::DimensionMismatch(format!(
            "pair ({i}, {j}) outside {m} modes"
        )));
    }
    if let Domain::CrossBlock { a, b } = domain {
        if a.iter().any(|x| b.contains(x)) {
            return Err(Error::DomainMismatch("cross-block blocks overlap".into()));
        }
    }
    Ok(pairs
        .iter()
        .map(|&(i, j)| pair_probability(&state.coeff, state.statistics, i, j))
        .collect())
}

/// Coincidence table post-selected on `domain`.
pub fn coincidences(state: &TwoPhotonState, domain: &Domain) -> Result<CoincidenceTable> {
    let rates = coincidence_rates(state, domain)?;
    CoincidenceTable::from_rates(domain.clone(), rates)
}

/// Bhattacharyya coefficient `sum_i sqrt(P_exp,i P_th,i)`.
pub fn statistical_fidelity(exp: &CoincidenceTable, th: &CoincidenceTable) -> Result<f64> {
    if exp.domain != th.domain {
        return Err(Error::DomainMismatch(format!(
            "{} vs {}",
            exp.domain.describe(),
            th.domain.describe()
        )));
    }
    let f: f64 = exp
        .probabilities
        .iter()
        .zip(&th.probabilities)
        .map(|(p, q)| (p * q).sqrt())
        .sum();
    Ok(f.clamp(0.0, 1.0))
}

/// Least-squares fit `A (1 + V cos(phi + phi0))` of a fringe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeFit {
    pub mean: f64,
    /// Fitted visibility clamped to `[0, 1]`.
    pub visibility: f64,
    /// `(max - min) / (max + min)` of the fitted curve, unclamped.
    pub contrast: f64,
    pub phase_offset: f64,
}

/// Fits a sinusoidal fringe to `rates[k]` sampled at `phases[k]`.
pub fn fringe_visibility(phases: &[f64], rates: &[f64]) -> Result<FringeFit> {
    if phases.len() != rates.len() {
        return Err(Error::LengthMismatch {
            expected: phases.len(),
            got: rates.len(),
        });
    }
    let n = phases.len();
    if n < 8 {
        return Err(Error::TooFewSamples { needed: 8, got: n });
    }
    let lo = phases.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = phases.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // a uniform grid over one period spans 2 pi (1 - 1/n)
    let coverage = (hi - lo) * n as f64 / (n - 1) as f64;
    if coverage < std::f64::consts::TAU - 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "phase samples cover {coverage:.4} rad, need a full period"
        )));
    }
    // normal equations for rates ~ a + b cos + c sin
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut atb = nalgebra::Vector3::<f64>::zeros();
    for (&phi, &r) in phases.iter().zip(rates) {
        let row = nalgebra::Vector3::new(1.0, phi.cos(), phi.sin());
        ata += row * row.transpose();
        atb += row * r;
    }
    let sol = ata
        .lu()
        .solve(&atb)
        .ok_or_else(|| Error::DegenerateFit("singular design matrix".into()))?;
    let (a, b, c) = (sol[0], sol[1], sol[2]);
    if !(a > 0.0) {
        return Err(Error::DegenerateFit(format!("fitted mean {a} <= 0")));
    }
    let amp = b.hypot(c);
    let contrast = amp / a;
    Ok(FringeFit {
        mean: a,
        visibility: contrast.clamp(0.0, 1.0),
        contrast,
        // a + amp cos(phi + phi0) = a + b cos + c sin  =>  phi0 = atan2(-c, b)
        phase_offset: (-c).atan2(b),
    })
}

/// `(max - min) / (max + min)` of sampled rates.
pub fn sampled_contrast(rates: &[f64]) -> f64 {
    let max = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    if max + min > 0.0 {
        (max - min) / (max + min)
    } else {
        0.0
    }
}

pub const DEFAULT_PORTER_THOMAS_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PorterThomasResult {
    pub ks_statistic: f64,
    pub threshold: f64,
    pub samples: usize,
    pub pass: bool,
}

/// One-sample Kolmogorov-Smirnov statistic against the CDF `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0f64, |d, (k, &x)| {
        let f = cdf(x);
        d.max(f - k as f64 / n).max((k + 1) as f64 / n - f)
    })
}

/// KS test of mean-normalized rates against the unit-mean exponential.
pub fn porter_thomas_test(samples: &[f64], threshold: f64) -> Result<PorterThomasResult> {
    if samples.len() < 100 {
        return Err(Error::TooFewSamples {
            needed: 100,
            got: samples.len(),
        });
    }
    if samples.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidArgument("samples must be finite and >= 0".into()));
    }
    let d = ks_statistic(samples, |x| 1.0 - (-x).exp());
    Ok(PorterThomasResult {
        ks_statistic: d,
        threshold,
        samples: samples.len(),
        pass: d < threshold,
    })
}

/// Each probability divided by the table mean.
pub fn mean_normalized(table: &CoincidenceTable) -> Vec<f64> {
    let mean = table.probabilities.iter().sum::<f64>() / table.probabilities.len() as f64;
    table.probabilities.iter().map(|p| p / mean).collect()
}
