//! Wavefront-matching design of phase-mask stacks.
//!
//! Every iteration sweeps the planes first-to-last and then last-to-first.
//! At plane `k` the inputs, propagated through masks `0..k`, are compared
//! with the targets adjoint-propagated from the output plane back through
//! masks `k+1..`; the new mask is the phase of their weighted coherent
//! overlap, low-pass filtered to the allowed diffraction angle.
//!
//! During the sweeps each target is re-phased by its current overlap with its
//! input, so the optimization ignores per-mode global phases. Those phases are
//! fixed afterwards by pistons on the first mask over each (spatially
//! disjoint) input spot.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{superpose, ComplexField, Grid, ModeSet};
use crate::mplc::{
    apply_mask_slice, extract_transfer_matrix, extract_with_engine, wrap_phase, MaskStack, MplcEngine, MplcGeometry,
    PhaseMask, TransferMatrix,
};
use crate::propagation::{fft_frequencies, Fft2};
use crate::unitaries::UnitaryMatrix;
use crate::CMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignOptions {
    pub iterations: usize,
    /// Iterations run before the convergence test may stop the design.
    pub min_iterations: usize,
    /// Fraction of the pixel-limited diffraction angle the masks may use.
    pub angle_fraction: f64,
    /// Per-mode weights; uniform when unset.
    pub mode_weights: Option<Vec<f64>>,
    /// Stop once the mean mode fidelity improves by less than this.
    pub convergence_tolerance: f64,
    /// Largest number of modes accepted.
    pub capacity: usize,
    /// Real offset, relative to the peak overlap, added before taking the
    /// phase so unlit pixels settle at zero phase.
    pub dark_offset: f64,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            iterations: 30,
            min_iterations: 20,
            angle_fraction: 0.25,
            mode_weights: None,
            convergence_tolerance: 1e-5,
            capacity: 16,
            dark_offset: 1e-3,
        }
    }
}

impl DesignOptions {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be >= 1".into()));
        }
        if !(self.angle_fraction > 0.0 && self.angle_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "angle_fraction must be in (0, 1], got {}",
                self.angle_fraction
            )));
        }
        if let Some(w) = &self.mode_weights {
            if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::InvalidArgument("mode weights must be > 0".into()));
            }
        }
        if !(self.dark_offset >= 0.0 && self.dark_offset.is_finite()) {
            return Err(Error::InvalidArgument("dark_offset must be >= 0".into()));
        }
        Ok(())
    }

    fn weights(&self, n: usize) -> Result<Vec<f64>> {
        match &self.mode_weights {
            None => Ok(vec![1.0; n]),
            Some(w) if w.len() == n => Ok(w.clone()),
            Some(w) => Err(Error::LengthMismatch {
                expected: n,
                got: w.len(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    /// Mean mode fidelity after every iteration.
    pub fidelity_trace: Vec<f64>,
    /// Final `|<target_j | forward(input_j)>|^2`.
    pub mode_fidelities: Vec<f64>,
    /// Mean over inputs of the Bhattacharyya coefficient between the output
    /// distributions `|T_ij|^2` and `|U_ij|^2`.
    pub statistical_fidelity: f64,
    /// `|Tr(U^dagger T)|^2 / (n Tr(T^dagger T))`, sensitive to all phases.
    pub matrix_fidelity: f64,
    pub efficiency: f64,
    pub unitarity_deviation: f64,
    pub iterations_run: usize,
    pub converged: bool,
}

impl DesignReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}

/// Circular pass band in the FFT frequency lattice.
#[derive(Debug, Clone)]
pub struct BandLimit {
    fft: Fft2,
    pass: Vec<bool>,
    kept: usize,
}

impl BandLimit {
    /// Passes spatial frequencies up to `fraction` of the grid Nyquist radius.
    pub fn new(grid: &Grid, fraction: f64) -> Self {
        let cutoff = fraction / (2.0 * grid.pitch());
        let fx = fft_frequencies(grid.nx(), grid.pitch());
        let fy = fft_frequencies(grid.ny(), grid.pitch());
        let pass: Vec<bool> = fy
            .iter()
            .flat_map(|&v| fx.iter().map(move |&u| u * u + v * v <= cutoff * cutoff))
            .collect();
        let kept = pass.iter().filter(|&&p| p).count();
        Self {
            fft: Fft2::new(grid.nx(), grid.ny()),
            pass,
            kept,
        }
    }

    pub fn filter(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        if self.kept == self.pass.len() {
            return;
        }
        self.fft.forward(buf, scratch);
        let norm = 1.0 / buf.len() as f64;
        for (a, &keep) in buf.iter_mut().zip(&self.pass) {
            *a = if keep { *a * norm } else { Complex64::new(0.0, 0.0) };
        }
        self.fft.inverse(buf, scratch);
    }

    /// Fraction of the power spectrum of `field` inside the pass band.
    pub fn energy_fraction(&self, field: &[Complex64]) -> f64 {
        let mut buf = field.to_vec();
        self.fft.forward(&mut buf, &mut Vec::new());
        let total: f64 = buf.iter().map(|z| z.norm_sqr()).sum();
        let inside: f64 = buf
            .iter()
            .zip(&self.pass)
            .filter(|(_, &p)| p)
            .map(|(z, _)| z.norm_sqr())
            .sum();
        inside / total
    }
}

/// Phase of the filtered coherent sum `sum_m w_m conj(F_m) B_m`.
fn update_from_slices(
    forward: &[&[Complex64]],
    backward: &[&[Complex64]],
    weights: &[Complex64],
    band: &BandLimit,
    dark_offset: f64,
) -> PhaseMask {
    let len = forward[0].len();
    let mut sum = vec![Complex64::new(0.0, 0.0); len];
    for ((f, b), &w) in forward.iter().zip(backward).zip(weights) {
        for ((s, x), y) in sum.iter_mut().zip(f.iter()).zip(b.iter()) {
            *s += w * x.conj() * y;
        }
    }
    SCRATCH.with(|s| band.filter(&mut sum, &mut s.borrow_mut()));
    let peak = sum.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let offset = dark_offset * peak;
    sum.iter().map(|z| wrap_phase((z + offset).arg())).collect()
}

/// One wavefront-matching mask update. `forward[m]` is input `m` arriving at
/// the plane (before its mask), `backward[m]` target `m` adjoint-propagated to
/// the same plane; the returned mask `phi` makes `exp(i phi) F_m` match `B_m`
/// in the weighted least-squares sense, band-limited per `options`.
pub fn mask_update(
    forward: &[ComplexField],
    backward: &[ComplexField],
    options: &DesignOptions,
) -> Result<PhaseMask> {
    if forward.len() != backward.len() {
        return Err(Error::LengthMismatch {
            expected: forward.len(),
            got: backward.len(),
        });
    }
    if forward.is_empty() {
        return Err(Error::InvalidArgument("no fields".into()));
    }
    options.validate()?;
    let grid = *forward[0].grid();
    for f in forward.iter().chain(backward) {
        grid.ensure_same(f.grid())?;
    }
    let weights: Vec<Complex64> = options
        .weights(forward.len())?
        .into_iter()
        .map(|w| Complex64::new(w, 0.0))
        .collect();
    let band = BandLimit::new(&grid, options.angle_fraction);
    let fwd: Vec<&[Complex64]> = forward.iter().map(|f| f.data()).collect();
    let bwd: Vec<&[Complex64]> = backward.iter().map(|f| f.data()).collect();
    Ok(update_from_slices(
        &fwd,
        &bwd,
        &weights,
        &band,
        options.dark_offset,
    ))
}

/// Target `m` adjoint-propagated to plane `k`, just after mask `k`.
pub fn backward_to_plane(
    engine: &MplcEngine,
    stack: &MaskStack,
    target: &ComplexField,
    plane: usize,
) -> Result<ComplexField> {
    let p = stack.geometry().plane_count;
    if plane >= p {
        return Err(Error::InvalidArgument(format!("plane {plane} of {p}")));
    }
    stack.geometry().grid.ensure_same(target.grid())?;
    let mut buf = target.data().to_vec();
    let mut scratch = Vec::new();
    for k in (plane..p).rev() {
        engine.propagator_after(k).backward_in_place(&mut buf, &mut scratch);
        if k > plane {
            apply_mask_slice(&mut buf, stack.mask(k), true);
        }
    }
    ComplexField::from_vec(target.grid().to_owned(), buf)
}

/// Effective output targets `E_j = sum_k U_kj output_k`.
pub fn effective_targets(outputs: &ModeSet, target: &UnitaryMatrix) -> Result<Vec<ComplexField>> {
    let u = target.matrix();
    (0..u.ncols())
        .map(|j| {
            let column: Vec<Complex64> = u.column(j).iter().copied().collect();
            superpose(outputs, &column)
        })
        .collect()
}

fn check_task(
    inputs: &ModeSet,
    outputs: &ModeSet,
    target: &CMatrix,
    geometry: &MplcGeometry,
) -> Result<usize> {
    let n = inputs.len();
    if outputs.len() != n || target.nrows() != n || target.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} inputs, {} outputs, {}x{} target",
            n,
            outputs.len(),
            target.nrows(),
            target.ncols()
        )));
    }
    geometry.grid.ensure_same(inputs.grid())?;
    geometry.grid.ensure_same(outputs.grid())?;
    Ok(n)
}

/// Runs wavefront matching for `inputs -> U outputs` and returns the
/// phase-corrected stack with its report.
pub fn design(
    inputs: &ModeSet,
    outputs: &ModeSet,
    target: &UnitaryMatrix,
    geometry: &MplcGeometry,
    options: &DesignOptions,
) -> Result<(MaskStack, DesignReport)> {
    options.validate()?;
    geometry.validate()?;
    let err = crate::unitaries::unitarity_error(target.matrix());
    if err >= 1e-9 {
        return Err(Error::NotUnitary(err));
    }
    let n = check_task(inputs, outputs, target.matrix(), geometry)?;
    if n > options.capacity {
        return Err(Error::Capacity {
            modes: n,
            limit: options.capacity,
        });
    }
    let weights = options.weights(n)?;
    let engine = MplcEngine::new(geometry)?;
    let targets = effective_targets(outputs, target)?;
    let band = BandLimit::new(&geometry.grid, options.angle_fraction);
    let planes = geometry.plane_count;
    let area = geometry.grid.pixel_area();

    let mut stack = MaskStack::flat(*geometry)?;
    let mut phasors: Vec<Vec<Complex64>> = stack.masks().iter().map(|m| phasors_of(m)).collect();

    // forward[k][m]: input m just before mask k; backward[k][m]: target m just
    // after mask k.
    let mut forward: Vec<Vec<Vec<Complex64>>> = vec![vec![Vec::new(); n]; planes];
    forward[0] = inputs.modes().iter().map(|u| u.data().to_vec()).collect();
    for k in 1..planes {
        let (done, rest) = forward.split_at_mut(k);
        step_forward(&engine, &phasors[k - 1], k - 1, &done[k - 1], &mut rest[0]);
    }
    let mut backward: Vec<Vec<Vec<Complex64>>> = vec![vec![Vec::new(); n]; planes];
    backward[planes - 1] = targets
        .par_iter()
        .map(|t| {
            let mut b = t.data().to_vec();
            engine
                .propagator_after(planes - 1)
                .backward_in_place(&mut b, &mut Vec::new());
            b
        })
        .collect();
    for k in (0..planes - 1).rev() {
        let (head, done) = backward.split_at_mut(k + 1);
        step_backward(&engine, &phasors[k + 1], k + 1, &done[0], &mut head[k]);
    }

    let update = |stack: &mut MaskStack,
                  phasors: &mut [Vec<Complex64>],
                  k: usize,
                  fwd: &[Vec<Complex64>],
                  bwd: &[Vec<Complex64>]| {
        // re-phase each target by its current overlap so only relative
        // structure drives the update
        let overlaps: Vec<Complex64> = fwd
            .par_iter()
            .zip(bwd.par_iter())
            .map(|(f, b)| masked_overlap(f, b, &phasors[k]))
            .collect();
        let phased: Vec<Complex64> = overlaps
            .iter()
            .zip(&weights)
            .map(|(o, &w)| if o.norm() > 0.0 { o / o.norm() * w } else { Complex64::new(w, 0.0) })
            .collect();
        let f: Vec<&[Complex64]> = fwd.iter().map(Vec::as_slice).collect();
        let b: Vec<&[Complex64]> = bwd.iter().map(Vec::as_slice).collect();
        let mask = update_from_slices(&f, &b, &phased, &band, options.dark_offset);
        let candidate = phasors_of(&mask);
        // the mode fidelity can be read off at any plane; an update that
        // lowers it (possible through the band limit) is skipped
        let before: f64 = overlaps.iter().zip(&weights).map(|(o, w)| w * o.norm_sqr()).sum();
        let after: f64 = fwd
            .par_iter()
            .zip(bwd.par_iter())
            .zip(weights.par_iter())
            .map(|((f, b), w)| w * masked_overlap(f, b, &candidate).norm_sqr())
            .sum();
        if after >= before {
            phasors[k] = candidate;
            *stack.mask_mut(k) = mask;
        }
    };

    let fidelities = |forward: &[Vec<Complex64>], backward: &[Vec<Complex64>], phasors: &[Complex64]| {
        forward
            .iter()
            .zip(backward)
            .map(|(f, b)| (masked_overlap(f, b, phasors) * area).norm_sqr())
            .collect::<Vec<f64>>()
    };

    let mut trace = Vec::with_capacity(options.iterations);
    let mut mode_fid = fidelities(&forward[0], &backward[0], &phasors[0]);
    let mut converged = false;
    for it in 0..options.iterations {
        for k in 0..planes {
            update(&mut stack, &mut phasors, k, &forward[k], &backward[k]);
            if k + 1 < planes {
                let (done, rest) = forward.split_at_mut(k + 1);
                step_forward(&engine, &phasors[k], k, &done[k], &mut rest[0]);
            }
        }
        for k in (0..planes).rev() {
            update(&mut stack, &mut phasors, k, &forward[k], &backward[k]);
            if k > 0 {
                let (head, done) = backward.split_at_mut(k);
                step_backward(&engine, &phasors[k], k, &done[0], &mut head[k - 1]);
            }
        }
        mode_fid = fidelities(&forward[0], &backward[0], &phasors[0]);
        let mean = weighted_mean(&mode_fid, &weights);
        let improvement = trace.last().map(|&prev| mean - prev);
        let settled = it + 1 >= options.min_iterations.min(options.iterations);
        match improvement {
            Some(delta) if settled && delta < options.convergence_tolerance => {
                trace.push(mean);
                converged = true;
                break;
            }
            _ => trace.push(mean),
        }
    }

    let supports = input_supports(inputs)?;
    let mut t = extract_with_engine(&engine, &stack, inputs, outputs)?;
    for _ in 0..4 {
        let pistons = correcting_pistons(&t, target);
        if pistons.iter().all(|&p| p == 0.0) {
            break;
        }
        stack = apply_input_pistons(&stack, &supports, &pistons)?;
        t = extract_with_engine(&engine, &stack, inputs, outputs)?;
    }
    let report = DesignReport {
        iterations_run: trace.len(),
        fidelity_trace: trace,
        mode_fidelities: mode_fid,
        statistical_fidelity: column_statistical_fidelity(t.entries(), target.matrix()),
        matrix_fidelity: matrix_fidelity(t.entries(), target.matrix()),
        efficiency: t.efficiency(),
        unitarity_deviation: t.unitarity_deviation(),
        converged,
    };
    Ok((stack, report))
}

fn phasors_of(mask: &[f32]) -> Vec<Complex64> {
    mask.iter()
        .map(|&p| Complex64::from_polar(1.0, p as f64))
        .collect()
}

/// `sum conj(b) exp(i phi) f` without the pixel area.
fn masked_overlap(f: &[Complex64], b: &[Complex64], phasors: &[Complex64]) -> Complex64 {
    f.iter()
        .zip(b)
        .zip(phasors)
        .map(|((x, y), p)| y.conj() * x * p)
        .sum()
}

thread_local! {
    static SCRATCH: std::cell::RefCell<Vec<Complex64>> = const { std::cell::RefCell::new(Vec::new()) };
}

/// `dst[m] = P_k(exp(i phi_k) src[m])`.
fn step_forward(
    engine: &MplcEngine,
    phasors: &[Complex64],
    k: usize,
    src: &[Vec<Complex64>],
    dst: &mut [Vec<Complex64>],
) {
    dst.par_iter_mut().zip(src.par_iter()).for_each(|(d, f)| {
        d.clear();
        d.extend(f.iter().zip(phasors).map(|(x, p)| x * p));
        SCRATCH.with(|s| {
            engine
                .propagator_after(k)
                .forward_in_place(d, &mut s.borrow_mut())
        });
    });
}

/// From just after mask `k` to just after mask `k - 1`.
fn step_backward(
    engine: &MplcEngine,
    phasors: &[Complex64],
    k: usize,
    src: &[Vec<Complex64>],
    dst: &mut [Vec<Complex64>],
) {
    dst.par_iter_mut().zip(src.par_iter()).for_each(|(d, f)| {
        d.clear();
        d.extend(f.iter().zip(phasors).map(|(x, p)| x * p.conj()));
        SCRATCH.with(|s| {
            engine
                .propagator_after(k - 1)
                .backward_in_place(d, &mut s.borrow_mut())
        });
    });
}

fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total
}

/// Mean over columns of `sum_i sqrt(p_ij q_ij)` with `p` the normalized
/// column intensities of `t` and `q = |U_ij|^2`.
pub fn column_statistical_fidelity(t: &CMatrix, u: &CMatrix) -> f64 {
    let n = t.ncols();
    let mut total = 0.0;
    for j in 0..n {
        let norm: f64 = t.column(j).iter().map(|z| z.norm_sqr()).sum();
        if norm == 0.0 {
            continue;
        }
        total += t
            .column(j)
            .iter()
            .zip(u.column(j).iter())
            .map(|(a, b)| (a.norm_sqr() / norm * b.norm_sqr()).sqrt())
            .sum::<f64>();
    }
    total / n as f64
}

/// `|Tr(U^dagger T)|^2 / (n Tr(T^dagger T))`.
pub fn matrix_fidelity(t: &CMatrix, u: &CMatrix) -> f64 {
    let n = u.ncols() as f64;
    let tr = (u.adjoint() * t).trace();
    let norm: f64 = t.iter().map(|z| z.norm_sqr()).sum();
    if norm == 0.0 {
        0.0
    } else {
        tr.norm_sqr() / (n * norm)
    }
}

/// Pistons smaller than this are left out; they are below the resolution of
/// `f32` phases on `[0, 2 pi)`.
pub const PISTON_RESOLUTION: f64 = 1e-6;

/// Relative intensity below which a pixel is outside every input support.
const SUPPORT_THRESHOLD: f64 = 1e-10;

/// Assigns each pixel to the brightest input mode, or `None` where every input
/// is negligible. Fails if two inputs overlap beyond the crosstalk tolerance.
pub fn input_supports(inputs: &ModeSet) -> Result<Vec<Option<usize>>> {
    let area = inputs.grid().pixel_area();
    for i in 0..inputs.len() {
        for j in i + 1..inputs.len() {
            let o: f64 = inputs
                .get(i)
                .data()
                .iter()
                .zip(inputs.get(j).data())
                .map(|(a, b)| a.norm() * b.norm())
                .sum::<f64>()
                * area;
            if o > crate::field::DEFAULT_CROSSTALK_TOLERANCE {
                return Err(Error::OverlappingSupports(i, j));
            }
        }
    }
    let peaks: Vec<f64> = inputs
        .modes()
        .iter()
        .map(|m| m.data().iter().map(|z| z.norm_sqr()).fold(0.0, f64::max))
        .collect();
    let len = inputs.grid().len();
    Ok((0..len)
        .map(|p| {
            let mut best: Option<(usize, f64)> = None;
            for (j, m) in inputs.modes().iter().enumerate() {
                let v = m.data()[p].norm_sqr();
                if v >= SUPPORT_THRESHOLD * peaks[j] && best.is_none_or(|(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
            best.map(|b| b.0)
        })
        .collect())
}

/// Adds `pistons[j]` to the first mask over the support of input `j`.
pub fn apply_input_pistons(
    stack: &MaskStack,
    supports: &[Option<usize>],
    pistons: &[f64],
) -> Result<MaskStack> {
    let mut out = stack.clone();
    let mask = out.mask_mut(0);
    if supports.len() != mask.len() {
        return Err(Error::DimensionMismatch("support map size".into()));
    }
    for (p, s) in mask.iter_mut().zip(supports) {
        if let Some(j) = *s {
            if pistons[j] != 0.0 {
                *p = wrap_phase(*p as f64 + pistons[j]);
            }
        }
    }
    Ok(out)
}

/// Column phase errors `arg(sum_i conj(U_ij) T_ij)`.
pub fn column_phase_errors(t: &TransferMatrix, target: &UnitaryMatrix) -> Vec<f64> {
    let (t, u) = (t.entries(), target.matrix());
    (0..t.ncols())
        .map(|j| {
            t.column(j)
                .iter()
                .zip(u.column(j).iter())
                .map(|(a, b)| b.conj() * a)
                .sum::<Complex64>()
                .arg()
        })
        .collect()
}

fn correcting_pistons(t: &TransferMatrix, target: &UnitaryMatrix) -> Vec<f64> {
    column_phase_errors(t, target)
        .into_iter()
        .map(|a| if a.abs() < PISTON_RESOLUTION { 0.0 } else { -a })
        .collect()
}

/// Adds a piston over each input spot on the first mask so that every column
/// of the transfer matrix is in phase with the corresponding target column.
pub fn correct_global_phases(
    stack: &MaskStack,
    inputs: &ModeSet,
    outputs: &ModeSet,
    target: &UnitaryMatrix,
) -> Result<MaskStack> {
    check_task(inputs, outputs, target.matrix(), stack.geometry())?;
    let supports = input_supports(inputs)?;
    let t = extract_transfer_matrix(stack, inputs, outputs)?;
    apply_input_pistons(stack, &supports, &correcting_pistons(&t, target))
}
