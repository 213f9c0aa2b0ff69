//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs the full optics pipeline, so expect several minutes.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::time::Instant;

use mplc_core::certification::{certify_matrices, MubConvention};
use mplc_core::experiments::{
    certification_devices, haar_samples, mode_conversion, phase_scan, porter_thomas, run,
    run_certification, Command, ExperimentConfig, HaarSample, Stats, TaskKind,
};
use mplc_core::fiber::{
    boundary_derivative_mismatch, guided_modes, lp_field, radial_profile, v_number, FiberSpec,
    Orientation,
};
use mplc_core::field::{gaussian_spot, overlap, ComplexField, Grid};
use mplc_core::mplc::{MaskStack, MplcEngine, MplcGeometry};
use mplc_core::propagation::Propagator;
use mplc_core::CMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

type Checks = Vec<(String, bool)>;

struct Line {
    id: u32,
    name: &'static str,
    checks: Checks,
    seconds: f64,
}

impl Line {
    fn pass(&self) -> bool {
        self.checks.iter().all(|(_, ok)| *ok)
    }
}

fn check(checks: &mut Checks, ok: bool, what: String) {
    checks.push((what, ok));
}

fn optics_cfg() -> ExperimentConfig {
    ExperimentConfig::default()
}

fn matrix_cfg() -> ExperimentConfig {
    ExperimentConfig {
        matrix_level: true,
        ..ExperimentConfig::default()
    }
}

/// Six spots need a wider grid at the default pitch.
fn wide_cfg() -> ExperimentConfig {
    let mut cfg = optics_cfg();
    cfg.geometry.grid = Grid::square(320, cfg.geometry.grid.pitch()).unwrap();
    cfg
}

fn mean_fidelity(samples: &[HaarSample]) -> Stats {
    Stats::of(&samples.iter().map(|s| s.fidelity).collect::<Vec<_>>())
}

fn criterion_1(five: &[HaarSample]) -> Checks {
    let mut c = Vec::new();
    let s5 = mean_fidelity(five);
    check(&mut c, (0.84..=0.94).contains(&s5.mean), format!("5 planes: mean F_s {:.4} over {} in [0.84, 0.94]", s5.mean, s5.count));
    let ten = haar_samples(&optics_cfg(), 10, 20).expect("10-plane designs");
    let s10 = mean_fidelity(&ten);
    check(&mut c, s10.mean >= 0.95, format!("10 planes: mean F_s {:.4} over {} >= 0.95", s10.mean, s10.count));
    c
}

fn criterion_2_3() -> (Checks, Checks) {
    let mut c2 = Vec::new();
    let mut c3 = Vec::new();
    for d in [2, 3] {
        let mcfg = matrix_cfg();
        let exact = certification_devices(&mcfg, d).unwrap();
        let r = run_certification(&mcfg, &exact).unwrap().result;
        check(&mut c2, (r.f_bound - 1.0).abs() <= 1e-9, format!("d={d} matrix-level F {:.12} = 1 +- 1e-9", r.f_bound));
        let scan = phase_scan(&mcfg, &exact.mub, d, 12).unwrap();
        check(&mut c3, (scan.mean_visibility - 1.0).abs() <= 1e-6, format!("d={d} matrix-level V {:.9} = 1 +- 1e-6", scan.mean_visibility));

        let cfg = if d == 2 { optics_cfg() } else { wide_cfg() };
        let devices = certification_devices(&cfg, d).unwrap();
        let r = run_certification(&cfg, &devices).unwrap().result;
        let floor = if d == 2 { 0.95 } else { 0.90 };
        check(
            &mut c2,
            r.f_bound >= floor && r.certified_dimension == d,
            format!("d={d} optics F {:.4} >= {floor}, m = {} (want {d})", r.f_bound, r.certified_dimension),
        );
        let scan = phase_scan(&cfg, &devices.mub, d, if d == 2 { 24 } else { 12 }).unwrap();
        let floor = if d == 2 { 0.94 } else { 0.93 };
        check(&mut c3, scan.mean_visibility >= floor, format!("d={d} optics mean V {:.4} >= {floor}", scan.mean_visibility));
    }
    (c2, c3)
}

fn criterion_4(five: &[HaarSample]) -> Checks {
    let mut c = Vec::new();
    let exact = haar_samples(&matrix_cfg(), 5, 400).unwrap();
    let pt = porter_thomas(&exact, 0.1).unwrap();
    check(&mut c, pt.ks_statistic < 0.1, format!("matrix-level 400 runs: KS {:.4} < 0.1 ({} values)", pt.ks_statistic, pt.samples));
    let pt = porter_thomas(five, 0.15).unwrap();
    check(&mut c, pt.ks_statistic < 0.15, format!("optics 5 planes: KS {:.4} < 0.15 ({} values)", pt.ks_statistic, pt.samples));
    c
}

fn criterion_5() -> Checks {
    let mut c = Vec::new();
    let mut rng = Pcg64::seed_from_u64(5);
    for d in [2, 3, 4] {
        let id = CMatrix::identity(d, d);
        let f = common::fourier(d, 1.0);
        let fc = f.conjugate();
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..1000 {
            let rho = common::random_state(d, &mut rng);
            let std = common::measure(&rho, &id, &id);
            let mub = common::measure(&rho, &f, &fc);
            let r = certify_matrices(&std, &mub, d, MubConvention::Conjugated).unwrap();
            worst = worst.max(r.f_bound - common::fidelity(&rho, d));
        }
        check(&mut c, worst <= 1e-9, format!("d={d}: max(F_bound - F) {worst:.3e} <= 1e-9 over 1000 states"));
    }
    c
}

fn criterion_6(five: &[HaarSample]) -> Checks {
    let mut c = Vec::new();
    let eta: Vec<f64> = five.iter().map(|s| s.device.transfer.efficiency()).collect();
    let s = Stats::of(&eta);
    check(&mut c, (0.55..=0.85).contains(&s.mean), format!("mean efficiency {:.4} over {} in [0.55, 0.85]", s.mean, s.count));
    check(&mut c, s.max <= 1.0 + 1e-6, format!("max efficiency {:.6} <= 1 + 1e-6", s.max));
    c
}

fn smooth_random_field(grid: Grid, rng: &mut Pcg64) -> ComplexField {
    let mut f = ComplexField::zeros(grid);
    for _ in 0..5 {
        let c = (rng.random_range(-6e-4..6e-4), rng.random_range(-6e-4..6e-4));
        let w = rng.random_range(80e-6..200e-6);
        let a = Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI));
        f.add_scaled(a, &gaussian_spot(grid, c, w).unwrap()).unwrap();
    }
    f.normalized().unwrap()
}

fn criterion_7() -> Checks {
    let mut c = Vec::new();
    let geometry = MplcGeometry::default();
    let grid = geometry.grid;
    let lambda = geometry.wavelength;

    let w0 = 100e-6;
    let zr = PI * w0 * w0 / lambda;
    let out = Propagator::new(grid, lambda, 2.0 * zr)
        .unwrap()
        .forward(&gaussian_spot(grid, (0.0, 0.0), w0).unwrap())
        .unwrap();
    let expected = w0 * 5f64.sqrt();
    let rel = (out.second_moment_radius() - expected).abs() / expected;
    check(&mut c, rel < 0.01, format!("waist at 2 z_R: relative error {rel:.2e} < 1e-2"));

    let mut rng = Pcg64::seed_from_u64(7);
    let masks = (0..geometry.plane_count)
        .map(|_| (0..grid.len()).map(|_| rng.random_range(-PI..PI) as f32).collect())
        .collect();
    let stack = MaskStack::new(geometry, masks).unwrap();
    let engine = MplcEngine::new(&geometry).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let f = smooth_random_field(grid, &mut rng);
        let g = smooth_random_field(grid, &mut rng);
        let lhs = overlap(&g, &engine.forward(&f, &stack).unwrap()).unwrap();
        let rhs = overlap(&engine.backward(&g, &stack).unwrap(), &f).unwrap();
        worst = worst.max((lhs - rhs).norm());
    }
    check(&mut c, worst < 1e-8, format!("adjoint identity |<g|Tf> - <T'g|f>| {worst:.2e} < 1e-8"));

    let mut field = gaussian_spot(grid, (0.0, 2e-4), 150e-6).unwrap();
    let mut drift = 0.0f64;
    for k in 0..geometry.plane_count {
        // smooth masks keep the light inside the band
        let (a, b) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let before = field.power();
        for (z, (x, y)) in field.data_mut().iter_mut().zip(grid.coords()) {
            *z *= Complex64::from_polar(1.0, a * x / 1.6e-3 + b * (y / 1.6e-3).powi(2));
        }
        field = engine.propagator_after(k).forward(&field).unwrap();
        drift = drift.max((field.power() - before).abs() / before);
    }
    check(&mut c, drift < 1e-6, format!("energy drift per plane {drift:.2e} < 1e-6"));
    c
}

fn criterion_8() -> Checks {
    let mut c = Vec::new();
    let spec = FiberSpec::default();
    let v = v_number(&spec);
    check(&mut c, (v - 38.88).abs() <= 0.01, format!("V {v:.4} = 38.88 +- 0.01"));
    let (mut residual, mut value, mut slope) = (0.0f64, 0.0f64, 0.0f64);
    for l in 0..4 {
        for s in guided_modes(&spec, l).unwrap() {
            residual = residual.max(s.residual);
            let inside = radial_profile(&s, 1.0 - 1e-12);
            let outside = radial_profile(&s, 1.0 + 1e-12);
            value = value.max((inside - outside).abs() / inside.abs());
            slope = slope.max(boundary_derivative_mismatch(&s));
        }
    }
    check(&mut c, residual < 1e-10, format!("max characteristic residual {residual:.2e} < 1e-10"));
    check(&mut c, value.max(slope) < 1e-6, format!("boundary continuity value {value:.2e}, slope {slope:.2e} < 1e-6"));
    let grid = Grid::default();
    let lp01 = lp_field(&spec, 0, 1, Orientation::Cos, grid).unwrap();
    let lp11 = lp_field(&spec, 1, 1, Orientation::Cos, grid).unwrap();
    let o = overlap(&lp01, &lp11).unwrap().norm();
    check(&mut c, o < 1e-6, format!("|<LP01|LP11>| {o:.2e} < 1e-6"));

    let conv = mode_conversion(&optics_cfg()).unwrap();
    let ov = &conv.overlaps;
    check(
        &mut c,
        ov[0] >= 0.95 && ov[1] >= 0.95 && ov[2] >= 0.9 && ov[3] >= 0.9,
        format!("overlaps spot {:.3} {:.3} (>= 0.95), LP01 {:.3} LP11 {:.3} (>= 0.9)", ov[0], ov[1], ov[2], ov[3]),
    );
    let x = conv.conditional_crosstalk.iter().copied().fold(0.0, f64::max);
    check(&mut c, x <= 0.1, format!("heralded crosstalk {x:.2e} <= 0.1"));
    c
}

fn outputs_equal(a: &Path, b: &Path) -> Result<usize, String> {
    let mut n = 0;
    for entry in fs::read_dir(a).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        let name = entry.file_name();
        if name == "manifest.json" {
            continue;
        }
        let pa = entry.path();
        let pb = b.join(&name);
        if pa.is_dir() {
            n += outputs_equal(&pa, &pb)?;
        } else {
            let (x, y) = (fs::read(&pa).map_err(|e| e.to_string())?, fs::read(&pb).map_err(|e| e.to_string())?);
            if x != y {
                return Err(format!("{} differs", pa.display()));
            }
            n += 1;
        }
    }
    Ok(n)
}

fn criterion_9() -> Checks {
    let mut c = Vec::new();
    let mut design = optics_cfg();
    design.task.kind = TaskKind::Haar;
    design.task.modes = 4;
    design.seed = 9;
    let mut bench = matrix_cfg();
    bench.haar.count = 100;
    for (name, command, cfg) in [("design", Command::Design, design), ("haar-bench", Command::HaarBench, bench)] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run(command, &cfg, a.path()).unwrap();
        run(command, &cfg, b.path()).unwrap();
        match outputs_equal(a.path(), b.path()) {
            Ok(n) => check(&mut c, n > 0, format!("{name}: {n} output files byte-identical")),
            Err(e) => check(&mut c, false, format!("{name}: {e}")),
        }
    }
    c
}

fn timed(id: u32, name: &'static str, f: impl FnOnce() -> Checks) -> Line {
    let t = Instant::now();
    let checks = f();
    Line { id, name, checks, seconds: t.elapsed().as_secs_f64() }
}

fn main() {
    // `cargo test` passes harness flags; a name filter that is not ours skips the suite
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !filters.is_empty() && !filters.iter().any(|f| "acceptance".contains(f.as_str())) {
        return;
    }
    let t = Instant::now();
    let shared = Instant::now();
    let five = haar_samples(&optics_cfg(), 5, 50).expect("5-plane designs");
    let shared = shared.elapsed().as_secs_f64();
    println!("designed {} Haar 4-mode targets at 5 planes in {shared:.0} s", five.len());

    let mut lines = vec![timed(1, "planes sweep", || criterion_1(&five))];
    let t23 = Instant::now();
    let (c2, c3) = criterion_2_3();
    let s23 = t23.elapsed().as_secs_f64();
    lines.push(Line { id: 2, name: "certification", checks: c2, seconds: s23 });
    lines.push(Line { id: 3, name: "visibility", checks: c3, seconds: 0.0 });
    lines.push(timed(4, "Porter-Thomas", || criterion_4(&five)));
    lines.push(timed(5, "bound soundness", criterion_5));
    lines.push(timed(6, "efficiency", || criterion_6(&five)));
    lines.push(timed(7, "optics oracles", criterion_7));
    lines.push(timed(8, "fiber modes", criterion_8));
    lines.push(timed(9, "determinism", criterion_9));

    println!();
    for l in &lines {
        let details: Vec<&str> = l.checks.iter().map(|(s, _)| s.as_str()).collect();
        println!(
            "criterion {}: {} {} ({:.0} s): {}",
            l.id,
            if l.pass() { "PASS" } else { "FAIL" },
            l.name,
            l.seconds,
            details.join("; ")
        );
    }
    let failed = lines.iter().filter(|l| !l.pass()).count();
    println!("\n{} of {} criteria passed in {:.0} s", lines.len() - failed, lines.len(), t.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
