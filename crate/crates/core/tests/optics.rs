use std::f64::consts::PI;

use mplc_core::field::{gaussian_spot, overlap, ComplexField, Grid};
use mplc_core::mplc::{MaskStack, MplcEngine, MplcGeometry};
use mplc_core::propagation::Propagator;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

const LAMBDA: f64 = 810e-9;

fn grid() -> Grid {
    Grid::square(256, 12.5e-6).unwrap()
}

fn random_field(grid: Grid, seed: u64) -> ComplexField {
    // smooth random field: a few random Gaussians with random phases
    let mut rng = Pcg64::seed_from_u64(seed);
    let mut f = ComplexField::zeros(grid);
    for _ in 0..5 {
        let c = (rng.random_range(-6e-4..6e-4), rng.random_range(-6e-4..6e-4));
        let w = rng.random_range(80e-6..200e-6);
        let a = Complex64::from_polar(rng.random_range(0.2..1.0), rng.random_range(0.0..2.0 * PI));
        f.add_scaled(a, &gaussian_spot(grid, c, w).unwrap()).unwrap();
    }
    f.normalized().unwrap()
}

#[test]
fn gaussian_waist_follows_free_space_law() {
    let w0 = 100e-6;
    let zr = PI * w0 * w0 / LAMBDA;
    let spot = gaussian_spot(grid(), (0.0, 0.0), w0).unwrap();
    for z in [0.5 * zr, zr, 2.0 * zr] {
        let out = Propagator::new(grid(), LAMBDA, z).unwrap().forward(&spot).unwrap();
        let expected = w0 * (1.0 + (z / zr).powi(2)).sqrt();
        let rel = (out.second_moment_radius() - expected).abs() / expected;
        assert!(rel < 0.01, "z = {z}: relative waist error {rel}");
    }
}

#[test]
fn tilted_beam_walks_off_by_angle_times_distance() {
    let fx = 1.0 / (20.0 * 12.5e-6);
    let mut f = gaussian_spot(grid(), (0.0, 0.0), 150e-6).unwrap();
    let g = *f.grid();
    for (i, (x, _)) in g.coords().enumerate() {
        f.data_mut()[i] *= Complex64::from_polar(1.0, 2.0 * PI * fx * x);
    }
    let z = 76e-3;
    let out = Propagator::new(g, LAMBDA, z).unwrap().forward(&f).unwrap();
    let (cx, cy) = out.centroid();
    let expected = LAMBDA * fx * z / (1.0 - (LAMBDA * fx).powi(2)).sqrt();
    assert!((cx - expected).abs() < 0.01 * expected, "{cx} vs {expected}");
    assert!(cy.abs() < 1e-9);
}

#[test]
fn energy_is_conserved_per_plane() {
    let geometry = MplcGeometry::default();
    let mut rng = Pcg64::seed_from_u64(11);
    let masks = (0..geometry.plane_count)
        .map(|_| {
            // slowly varying masks keep the light inside the band
            let (a, b) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            geometry
                .grid
                .coords()
                .map(|(x, y)| (a * x / 1.6e-3 + b * (y / 1.6e-3).powi(2)) as f32)
                .collect()
        })
        .collect();
    let stack = MaskStack::new(geometry, masks).unwrap();
    let engine = MplcEngine::new(&geometry).unwrap();
    let input = gaussian_spot(geometry.grid, (0.0, 0.0), 150e-6).unwrap();
    let mut field = input.clone();
    for k in 0..geometry.plane_count {
        let before = field.power();
        for (a, &p) in field.data_mut().iter_mut().zip(stack.mask(k)) {
            *a *= Complex64::from_polar(1.0, p as f64);
        }
        field = engine.propagator_after(k).forward(&field).unwrap();
        assert!((field.power() - before).abs() < 1e-6 * before, "plane {k}");
    }
    let out = engine.forward(&input, &stack).unwrap();
    assert!((out.power() - field.power()).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn propagation_adjoint_identity(seed in 0u64..1000, z in 1e-3f64..0.2) {
        let p = Propagator::new(grid(), LAMBDA, z).unwrap();
        let f = random_field(grid(), seed);
        let g = random_field(grid(), seed + 1000);
        let lhs = overlap(&g, &p.forward(&f).unwrap()).unwrap();
        let rhs = overlap(&p.backward(&g).unwrap(), &f).unwrap();
        prop_assert!((lhs - rhs).norm() < 1e-8);
    }

    #[test]
    fn stack_adjoint_identity(seed in 0u64..1000) {
        let geometry = MplcGeometry::default().with_planes(3);
        let mut rng = Pcg64::seed_from_u64(seed);
        let masks = (0..3)
            .map(|_| (0..geometry.grid.len()).map(|_| rng.random_range(-PI..PI) as f32).collect())
            .collect();
        let stack = MaskStack::new(geometry, masks).unwrap();
        let engine = MplcEngine::new(&geometry).unwrap();
        let f = random_field(geometry.grid, seed);
        let g = random_field(geometry.grid, seed + 7);
        let lhs = overlap(&g, &engine.forward(&f, &stack).unwrap()).unwrap();
        let rhs = overlap(&engine.backward(&g, &stack).unwrap(), &f).unwrap();
        prop_assert!((lhs - rhs).norm() < 1e-8);
    }
}
