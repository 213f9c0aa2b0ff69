//! End-to-end experiment runners behind the command line.
//!
//! Each runner reads an [`ExperimentConfig`], does its computation and writes
//! tables (CSV), a JSON summary, the config it ran with and a manifest into an
//! output directory. Tables and summaries depend only on the config and seed;
//! timing goes to the manifest alone.

mod config;

pub use config::{
    CertifyConfig, EfficiencyConfig, ExperimentConfig, HaarConfig, ModeConvertConfig,
    PhaseScanConfig, SweepConfig, TaskConfig, TaskKind, SCHEMA,
};

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::certification::{certify, CertificationResult};
use crate::error::{Error, Result};
use crate::fiber::{lp_field_at, Orientation};
use crate::field::{overlap, ComplexField, ModeSet};
use crate::mplc::{extract_transfer_matrix, MaskStack, MplcEngine, MplcGeometry, TransferMatrix};
use crate::rng::task_rng;
use crate::twophoton::{
    coincidence_rates, coincidences, evolve, fringe_visibility, mean_normalized,
    pixel_entangled_state, porter_thomas_test, sampled_contrast, statistical_fidelity,
    CoincidenceTable, Domain, PorterThomasResult, Statistics, TwoPhotonState,
};
use crate::unitaries::{block_diag, dft, haar_random, input_phase_ramp, UnitaryMatrix};
use crate::wfm::{design, DesignReport};
use crate::CMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Design,
    Certify,
    PhaseScan,
    HaarBench,
    PlanesSweep,
    ModeConvert,
    Efficiency,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Design => "design",
            Command::Certify => "certify",
            Command::PhaseScan => "phase-scan",
            Command::HaarBench => "haar-bench",
            Command::PlanesSweep => "planes-sweep",
            Command::ModeConvert => "mode-convert",
            Command::Efficiency => "efficiency",
        }
    }

    /// Spots the command places on the grid.
    fn spot_count(self, cfg: &ExperimentConfig) -> usize {
        match self {
            Command::Design => cfg.task.modes,
            Command::Certify => 2 * cfg.certify.d,
            Command::PhaseScan => 2 * cfg.phase_scan.d,
            Command::HaarBench | Command::PlanesSweep | Command::Efficiency => cfg.haar.modes,
            Command::ModeConvert => 4,
        }
    }
}

/// A device realizing a target: designed optics or, at matrix level, the
/// target itself.
#[derive(Debug, Clone)]
pub struct Device {
    pub target: UnitaryMatrix,
    pub transfer: TransferMatrix,
    pub stack: Option<MaskStack>,
    pub report: Option<DesignReport>,
}

impl Device {
    pub fn exact(target: UnitaryMatrix) -> Self {
        Self {
            transfer: TransferMatrix::from_entries(target.matrix().clone()),
            target,
            stack: None,
            report: None,
        }
    }
}

/// Designs `target` between two columns of `n` spots, or returns the exact
/// matrix when `cfg.matrix_level` is set.
pub fn realize(
    cfg: &ExperimentConfig,
    geometry: &MplcGeometry,
    target: UnitaryMatrix,
) -> Result<Device> {
    if cfg.matrix_level {
        return Ok(Device::exact(target));
    }
    let spots = cfg.layout.modes(geometry.grid, target.dim())?;
    realize_between(cfg, geometry, target, &spots, &spots)
}

fn realize_between(
    cfg: &ExperimentConfig,
    geometry: &MplcGeometry,
    target: UnitaryMatrix,
    inputs: &ModeSet,
    outputs: &ModeSet,
) -> Result<Device> {
    let (stack, report) = design(inputs, outputs, &target, geometry, &cfg.design)?;
    let transfer = extract_transfer_matrix(&stack, inputs, outputs)?;
    Ok(Device {
        target,
        transfer,
        stack: Some(stack),
        report: Some(report),
    })
}

/// `(1/sqrt k) sum_i |i>|k + i>` on `2k` modes.
pub fn paired_state(modes: usize, statistics: Statistics) -> Result<TwoPhotonState> {
    let k = modes / 2;
    let pairing: Vec<(usize, usize)> = (0..k).map(|i| (i, k + i)).collect();
    pixel_entangled_state(modes, &pairing, &vec![0.0; k], statistics)
}

fn cross_block(d: usize) -> Domain {
    Domain::CrossBlock {
        a: (0..d).collect(),
        b: (d..2 * d).collect(),
    }
}

/// Two-photon statistical fidelity of the paired state through `t` against
/// the same state through `u`, over distinct output pairs.
pub fn two_photon_fidelity(
    t: &CMatrix,
    u: &CMatrix,
    statistics: Statistics,
) -> Result<(f64, CoincidenceTable)> {
    let state = paired_state(t.ncols(), statistics)?;
    let domain = Domain::distinct_pairs(t.ncols());
    let measured = coincidences(&evolve(&state, t)?, &domain)?;
    let ideal = coincidences(&evolve(&state, u)?, &domain)?;
    Ok((statistical_fidelity(&measured, &ideal)?, measured))
}

pub fn task_target(cfg: &ExperimentConfig) -> Result<UnitaryMatrix> {
    let n = cfg.task.modes;
    match cfg.task.kind {
        TaskKind::Identity => Ok(UnitaryMatrix::identity(n)),
        TaskKind::Dft => dft(n, false),
        TaskKind::DftConjugated => dft(n, true),
        TaskKind::Haar => haar_random(n, &mut task_rng(cfg.seed, cfg.task.haar_index)),
        TaskKind::MubPair => mub_pair(n / 2),
    }
}

/// `dft(d) (+) conj dft(d)`.
pub fn mub_pair(d: usize) -> Result<UnitaryMatrix> {
    block_diag(&[dft(d, false)?, dft(d, true)?])
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignSummary {
    pub task: TaskKind,
    pub modes: usize,
    pub matrix_level: bool,
    pub efficiency: f64,
    pub unitarity_deviation: f64,
    pub report: Option<DesignReport>,
}

// ---------------------------------------------------------------- certify

#[derive(Debug, Clone)]
pub struct CertificationDevices {
    pub d: usize,
    pub standard: Device,
    pub mub: Device,
}

pub fn certification_devices(cfg: &ExperimentConfig, d: usize) -> Result<CertificationDevices> {
    let standard = realize(cfg, &cfg.geometry, UnitaryMatrix::identity(2 * d))?;
    let mub = realize(cfg, &cfg.geometry, mub_pair(d)?)?;
    Ok(CertificationDevices { d, standard, mub })
}

#[derive(Debug, Clone)]
pub struct CertificationRun {
    pub result: CertificationResult,
    pub standard_table: CoincidenceTable,
    pub mub_table: CoincidenceTable,
}

pub fn run_certification(
    cfg: &ExperimentConfig,
    devices: &CertificationDevices,
) -> Result<CertificationRun> {
    let d = devices.d;
    let state = paired_state(2 * d, cfg.statistics)?;
    let domain = cross_block(d);
    let standard_table = coincidences(&evolve(&state, devices.standard.transfer.entries())?, &domain)?;
    let mub_table = coincidences(&evolve(&state, devices.mub.transfer.entries())?, &domain)?;
    let result = certify(&standard_table, &mub_table, d, cfg.certify.convention)?;
    Ok(CertificationRun {
        result,
        standard_table,
        mub_table,
    })
}

// ------------------------------------------------------------- phase scan

#[derive(Debug, Clone, Serialize)]
pub struct PairVisibility {
    pub a: usize,
    pub b: usize,
    pub visibility: f64,
    /// Fitted fringe phase at which the rate peaks; absent for 2-D scans.
    pub phase_offset: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseScan {
    pub d: usize,
    /// Scanned phases: one column per scanned mode.
    pub phases: Vec<Vec<f64>>,
    /// `rates[k][p]` for phase setting `k` and cross-block pair `p`.
    pub rates: Vec<Vec<f64>>,
    pub pairs: Vec<(usize, usize)>,
    pub per_pair: Vec<PairVisibility>,
    pub mean_visibility: f64,
}

/// Scans the phase of photon-A modes `1..d` before the MUB device. For `d = 2`
/// each pair fringe is fitted; for `d = 3` the contrast over the 2-D grid of
/// post-selected probabilities is used.
pub fn phase_scan(
    cfg: &ExperimentConfig,
    mub: &Device,
    d: usize,
    samples: usize,
) -> Result<PhaseScan> {
    if !(2..=3).contains(&d) {
        return Err(Error::InvalidArgument(format!("phase scan for d = {d}")));
    }
    let state = paired_state(2 * d, cfg.statistics)?;
    let domain = cross_block(d);
    let pairs = domain.pairs();
    let axis: Vec<f64> = (0..samples)
        .map(|k| std::f64::consts::TAU * k as f64 / samples as f64)
        .collect();
    let settings: Vec<Vec<f64>> = if d == 2 {
        axis.iter().map(|&p| vec![p]).collect()
    } else {
        axis.iter()
            .flat_map(|&p1| axis.iter().map(move |&p2| vec![p1, p2]))
            .collect()
    };
    let t = mub.transfer.entries();
    let rates = settings
        .iter()
        .map(|phis| {
            let mut ramp = vec![0.0; 2 * d];
            ramp[1..d].copy_from_slice(phis);
            let device = t * input_phase_ramp(&ramp).matrix();
            let out = evolve(&state, &device)?;
            Ok(coincidences(&out, &domain)?.probabilities().to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut per_pair = Vec::with_capacity(pairs.len());
    for (p, &(a, b)) in pairs.iter().enumerate() {
        let series: Vec<f64> = rates.iter().map(|r| r[p]).collect();
        let (visibility, phase_offset) = if d == 2 {
            let fit = fringe_visibility(&axis, &series)?;
            (fit.visibility, Some(fit.phase_offset))
        } else {
            (sampled_contrast(&series), None)
        };
        per_pair.push(PairVisibility {
            a,
            b,
            visibility,
            phase_offset,
        });
    }
    let mean_visibility = per_pair.iter().map(|v| v.visibility).sum::<f64>() / per_pair.len() as f64;
    Ok(PhaseScan {
        d,
        phases: settings,
        rates,
        pairs,
        per_pair,
        mean_visibility,
    })
}

// ------------------------------------------------------------------- Haar

#[derive(Debug, Clone)]
pub struct HaarSample {
    pub index: u64,
    pub planes: usize,
    pub device: Device,
    pub fidelity: f64,
    pub table: CoincidenceTable,
}

/// Designs (or, at matrix level, takes exactly) Haar targets `0..count` of
/// the seeded stream with `planes` masks. Sample `i` uses the same target for
/// every plane count.
pub fn haar_samples(cfg: &ExperimentConfig, planes: usize, count: usize) -> Result<Vec<HaarSample>> {
    let geometry = cfg.geometry.with_planes(planes);
    geometry.validate()?;
    (0..count as u64)
        .into_par_iter()
        .map(|index| {
            let target = haar_random(cfg.haar.modes, &mut task_rng(cfg.seed, index))?;
            let device = realize(cfg, &geometry, target)?;
            let (fidelity, table) = two_photon_fidelity(
                device.transfer.entries(),
                device.target.matrix(),
                cfg.statistics,
            )?;
            Ok(HaarSample {
                index,
                planes,
                device,
                fidelity,
                table,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            count: n,
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Pooled mean-normalized coincidences of all samples.
pub fn pooled_coincidences(samples: &[HaarSample]) -> Vec<f64> {
    samples.iter().flat_map(|s| mean_normalized(&s.table)).collect()
}

pub fn porter_thomas(samples: &[HaarSample], threshold: f64) -> Result<PorterThomasResult> {
    porter_thomas_test(&pooled_coincidences(samples), threshold)
}

// ----------------------------------------------------------- mode convert

#[derive(Debug, Clone)]
pub struct ModeConversion {
    pub device: Device,
    /// `|T_jj|^2`: spots 0, 1 onto themselves, spots 2, 3 onto LP01, LP11.
    pub overlaps: Vec<f64>,
    /// For photon A detected in spot `a`, the fraction of the heralded B
    /// photon's fiber-mode power in the LP mode it is not paired with.
    pub conditional_crosstalk: Vec<f64>,
    /// Heralded B-photon fields at the output plane (optics only).
    pub conditional_fields: Vec<ComplexField>,
}

/// Output basis: A spots unchanged, B spots replaced by LP01 and LP11 centered
/// between the two B spots.
pub fn mode_convert_outputs(cfg: &ExperimentConfig) -> Result<(ModeSet, ModeSet)> {
    let grid = cfg.geometry.grid;
    let inputs = cfg.layout.modes(grid, 4)?;
    let centers = cfg.layout.centers(4);
    let mid = (
        0.5 * (centers[2].0 + centers[3].0),
        0.5 * (centers[2].1 + centers[3].1),
    );
    let fiber = &cfg.mode_convert.fiber;
    let lp01 = lp_field_at(fiber, 0, 1, Orientation::Cos, grid, mid)?;
    let lp11 = lp_field_at(fiber, 1, 1, cfg.mode_convert.lp11_orientation, grid, mid)?;
    let modes = vec![
        inputs.get(0).clone(),
        inputs.get(1).clone(),
        lp01,
        lp11,
    ];
    let labels = ["spot0", "spot1", "LP01", "LP11"].map(String::from).to_vec();
    let outputs = ModeSet::new(modes, labels)?;
    Ok((inputs, outputs))
}

pub fn mode_conversion(cfg: &ExperimentConfig) -> Result<ModeConversion> {
    let target = UnitaryMatrix::identity(4);
    let state = paired_state(4, cfg.statistics)?;
    if cfg.matrix_level {
        let device = Device::exact(target);
        let cross = heralded_crosstalk(&state, device.transfer.entries())?;
        return Ok(ModeConversion {
            overlaps: vec![1.0; 4],
            conditional_crosstalk: cross,
            device,
            conditional_fields: Vec::new(),
        });
    }
    let (inputs, outputs) = mode_convert_outputs(cfg)?;
    let device = realize_between(cfg, &cfg.geometry, target, &inputs, &outputs)?;
    let t = device.transfer.entries();
    let overlaps = (0..4).map(|j| t[(j, j)].norm_sqr()).collect();
    let conditional_crosstalk = heralded_crosstalk(&state, t)?;

    // heralded field: project photon 1 of sum c_mn f_m(x1) f_n(x2) onto the
    // A detector mode
    let stack = device.stack.as_ref().expect("designed device");
    let engine = MplcEngine::new(stack.geometry())?;
    let fields = inputs
        .modes()
        .iter()
        .map(|u| engine.forward(u, stack))
        .collect::<Result<Vec<_>>>()?;
    let c = state.coeff();
    let mut conditional_fields = Vec::new();
    for a in 0..2 {
        let proj: Vec<Complex64> = fields
            .iter()
            .map(|f| overlap(outputs.get(a), f))
            .collect::<Result<_>>()?;
        let mut psi = ComplexField::zeros(cfg.geometry.grid);
        for (m, pm) in proj.iter().enumerate() {
            for (n, f) in fields.iter().enumerate() {
                psi.add_scaled(c[(m, n)] * pm, f)?;
            }
        }
        conditional_fields.push(psi);
    }
    Ok(ModeConversion {
        device,
        overlaps,
        conditional_crosstalk,
        conditional_fields,
    })
}

/// Conditional crosstalk from the output coefficients `T c T^T`: for A
/// detector `a`, the B-side probability of the unpaired fiber mode relative to
/// both fiber modes.
fn heralded_crosstalk(state: &TwoPhotonState, t: &CMatrix) -> Result<Vec<f64>> {
    let out = evolve(state, t)?;
    let domain = cross_block(2);
    let rates = coincidence_rates(&out, &domain)?;
    let pairs = domain.pairs();
    let rate = |a: usize, b: usize| {
        pairs
            .iter()
            .position(|&p| p == (a, b))
            .map(|k| rates[k])
            .unwrap_or(0.0)
    };
    Ok((0..2)
        .map(|a| {
            let wanted = rate(a, 2 + a);
            let other = rate(a, 3 - a);
            if wanted + other > 0.0 {
                other / (wanted + other)
            } else {
                1.0
            }
        })
        .collect())
}

// ----------------------------------------------------------------- output

/// Output directory writer.
pub struct RunOutput {
    dir: PathBuf,
    files: Vec<String>,
}

impl RunOutput {
    pub fn create(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.dir.join(name), contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
        self.write(name, &(text + "\n"))
    }

    pub fn write_bundle(&mut self, name: &str, stack: &MaskStack, creation: serde_json::Value) -> Result<()> {
        stack.save_bundle(self.dir.join(name), creation)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_field(&mut self, name: &str, field: &ComplexField) -> Result<()> {
        field.save(self.dir.join(name))?;
        self.files.push(name.to_string());
        Ok(())
    }
}

fn matrix_csv(m: &CMatrix) -> String {
    let mut s = String::from("i,j,re,im\n");
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            let _ = writeln!(s, "{i},{j},{},{}", z.re, z.im);
        }
    }
    s
}

fn write_device(out: &mut RunOutput, prefix: &str, device: &Device, creation: serde_json::Value) -> Result<()> {
    out.write(&format!("{prefix}target.csv"), &matrix_csv(device.target.matrix()))?;
    out.write(&format!("{prefix}transfer.csv"), &matrix_csv(device.transfer.entries()))?;
    if let Some(stack) = &device.stack {
        out.write_bundle(&format!("{prefix}stack.mplc"), stack, creation)?;
    }
    if let Some(report) = &device.report {
        out.write_json(&format!("{prefix}report.json"), report)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct Manifest<'a> {
    schema: &'a str,
    command: &'a str,
    seed: u64,
    matrix_level: bool,
    version: &'a str,
    threads: usize,
    started_unix_seconds: u64,
    wall_clock_seconds: f64,
    files: &'a [String],
}

/// Runs `command` and writes its outputs into `dir`; returns the summary.
pub fn run(command: Command, cfg: &ExperimentConfig, dir: impl AsRef<Path>) -> Result<serde_json::Value> {
    cfg.validate()?;
    let spots = command.spot_count(cfg);
    if !cfg.matrix_level {
        cfg.check_spots(spots)?;
    }
    if command == Command::PlanesSweep {
        for &p in &cfg.sweep.planes {
            cfg.geometry.with_planes(p).validate()?;
        }
    }
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let clock = Instant::now();
    let mut out = RunOutput::create(dir)?;
    out.write("config.toml", &cfg.to_toml())?;

    let summary = match command {
        Command::Design => run_design(cfg, &mut out)?,
        Command::Certify => run_certify(cfg, &mut out)?,
        Command::PhaseScan => run_phase_scan(cfg, &mut out)?,
        Command::HaarBench => run_haar_bench(cfg, &mut out)?,
        Command::PlanesSweep => run_planes_sweep(cfg, &mut out)?,
        Command::ModeConvert => run_mode_convert(cfg, &mut out)?,
        Command::Efficiency => run_efficiency(cfg, &mut out)?,
    };
    let summary = json!({
        "schema": SCHEMA,
        "command": command.name(),
        "seed": cfg.seed,
        "matrix_level": cfg.matrix_level,
        "result": summary,
    });
    out.write_json("summary.json", &summary)?;
    let files = out.files.clone();
    let manifest = Manifest {
        schema: SCHEMA,
        command: command.name(),
        seed: cfg.seed,
        matrix_level: cfg.matrix_level,
        version: env!("CARGO_PKG_VERSION"),
        threads: rayon::current_num_threads(),
        started_unix_seconds: started,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        files: &files,
    };
    out.write_json("manifest.json", &manifest)?;
    Ok(summary)
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::Parse(e.to_string()))
}

fn run_design(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<serde_json::Value> {
    let device = realize(cfg, &cfg.geometry, task_target(cfg)?)?;
    write_device(out, "", &device, json!({ "task": cfg.task, "design": cfg.design }))?;
    to_value(&DesignSummary {
        task: cfg.task.kind,
        modes: cfg.task.modes,
        matrix_level: cfg.matrix_level,
        efficiency: device.transfer.efficiency(),
        unitarity_deviation: device.transfer.unitarity_deviation(),
        report: device.report.clone(),
    })
}

fn run_certify(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<serde_json::Value> {
    let d = cfg.certify.d;
    let devices = certification_devices(cfg, d)?;
    let run = run_certification(cfg, &devices)?;
    write_device(out, "standard_", &devices.standard, json!({ "role": "standard", "d": d }))?;
    write_device(out, "mub_", &devices.mub, json!({ "role": "mub", "d": d }))?;
    out.write("p_standard.csv", &run.standard_table.to_csv())?;
    out.write("p_mub.csv", &run.mub_table.to_csv())?;
    to_value(&run.result)
}

fn run_phase_scan(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<serde_json::Value> {
    let d = cfg.phase_scan.d;
    let mub = realize(cfg, &cfg.geometry, mub_pair(d)?)?;
    let scan = phase_scan(cfg, &mub, d, cfg.phase_scan.samples)?;
    write_device(out, "mub_", &mub, json!({ "role": "mub", "d": d }))?;
    let mut csv = String::new();
    csv.push_str(if d == 2 { "phi1,a,b,probability\n" } else { "phi1,phi2,a,b,probability\n" });
    for (phis, rates) in scan.phases.iter().zip(&scan.rates) {
        for (&(a, b), r) in scan.pairs.iter().zip(rates) {
            for p in phis {
                let _ = write!(csv, "{p},");
            }
            let _ = writeln!(csv, "{a},{b},{r}");
        }
    }
    out.write("fringe.csv", &csv)?;
    Ok(json!({
        "d": d,
        "samples_per_axis": cfg.phase_scan.samples,
        "per_pair": scan.per_pair,
        "mean_visibility": scan.mean_visibility,
    }))
}

fn haar_tables(samples: &[HaarSample], out: &mut RunOutput, prefix: &str) -> Result<()> {
    let mut rows = String::from("index,planes,statistical_fidelity,efficiency,unitarity_deviation\n");
    let mut coinc = String::from("index,planes,i,j,probability,normalized\n");
    for s in samples {
        let _ = writeln!(
            rows,
            "{},{},{},{},{}",
            s.index,
            s.planes,
            s.fidelity,
            s.device.transfer.efficiency(),
            s.device.transfer.unitarity_deviation()
        );
        for ((&(i, j), p), q) in s
            .table
            .pairs()
            .iter()
            .zip(s.table.probabilities())
            .zip(mean_normalized(&s.table))
        {
            let _ = writeln!(coinc, "{},{},{i},{j},{p},{q}", s.index, s.planes);
        }
    }
    out.write(&format!("{prefix}samples.csv"), &rows)?;
    out.write(&format!("{prefix}coincidences.csv"), &coinc)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct PorterThomasSummary {
    ks_statistic: f64,
    threshold: f64,
    samples: usize,
    pass: bool,
}

impl From<PorterThomasResult> for PorterThomasSummary {
    fn from(r: PorterThomasResult) -> Self {
        Self {
            ks_statistic: r.ks_statistic,
            threshold: r.threshold,
            samples: r.samples,
            pass: r.pass,
        }
    }
}

fn run_haar_bench(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<serde_json::Value> {
    let samples = haar_samples(cfg, cfg.geometry.plane_count, cfg.haar.count)?;
    haar_tables(&samples, out, "")?;
    let fs: Vec<f64> = samples.iter().map(|s| s.fidelity).collect();
    let eta: Vec<f64> = samples.iter().map(|s| s.device.transfer.efficiency()).collect();
    let pooled = pooled_coincidences(&samples);
    let pt = if pooled.len() >= 100 {
        Some(PorterThomasSummary::from(porter_thomas_test(&pooled, cfg.haar.ks_threshold)?))
    } else {
        None
    };
    Ok(json!({
        "planes": cfg.geometry.plane_count,
        "modes": cfg.haar.modes,
        "statistical_fidelity": Stats::of(&fs),
        "efficiency": Stats::of(&eta),
        "porter_thomas": pt,
        "pooled_samples": pooled.len(),
    }))
}

fn run_planes_sweep(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<serde_json::Value> {
    let mut table = String::from("planes,samples,mean_fidelity,std_fidelity,mean_efficiency\n");
    let mut points = Vec::new();
    let mut all = Vec::new();
    for &p in &cfg.sweep.planes {
        let samples = haar_samples(cfg, p, cfg.sweep.samples)?;
        let fs = Stats::of(&samples.iter().map(|s| s.fidelity).collect::<Vec<_>>());
        let eta = Stats::of(
            &samples
                .iter()
                .map(|s| s.device.transfer.efficiency())
                .collect::<Vec<_>>(),
        );
        let _ = writeln!(table, "{p},{},{},{},{}", fs.count, fs.mean, fs.std, eta.mean);
        points.push(json!({ "planes": p, "statistical_fidelity": fs, "efficiency": eta }));
        all.extend(samples);
    }
    out.write("sweep.csv", &table)?;
    haar_tables(&all, out, "")?;
    Ok(json!({ "modes": cfg.haar.modes, "points": points }))
}

fn run_mode_convert(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<serde_json::Value> {
    let conv = mode_conversion(cfg)?;
    write_device(out, "", &conv.device, json!({ "task": "mode-convert", "fiber": cfg.mode_convert.fiber }))?;
    for (a, f) in conv.conditional_fields.iter().enumerate() {
        out.write_field(&format!("conditional_a{a}.cfd"), f)?;
    }
    Ok(json!({
        "labels": ["spot0", "spot1", "LP01", "LP11"],
        "overlaps": conv.overlaps,
        "conditional_crosstalk": conv.conditional_crosstalk,
        "efficiency": conv.device.transfer.efficiency(),
    }))
}

fn run_efficiency(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<serde_json::Value> {
    let samples = haar_samples(cfg, cfg.geometry.plane_count, cfg.efficiency.count)?;
    let mut csv = String::from("index,efficiency,max_singular_value\n");
    let mut eta = Vec::new();
    for s in &samples {
        let e = s.device.transfer.efficiency();
        let smax = s
            .device
            .transfer
            .singular_values()
            .into_iter()
            .fold(0.0, f64::max);
        let _ = writeln!(csv, "{},{e},{smax}", s.index);
        eta.push(e);
    }
    out.write("efficiency.csv", &csv)?;
    Ok(json!({
        "planes": cfg.geometry.plane_count,
        "modes": cfg.haar.modes,
        "efficiency": Stats::of(&eta),
    }))
}
