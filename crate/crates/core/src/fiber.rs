//! Scalar LP modes of a weakly guiding step-index fiber.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bessel::{bessel_j, bessel_j_prime, bessel_k, bessel_k_prime};
use crate::error::{Error, Result};
use crate::field::{ComplexField, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FiberSpec {
    pub core_radius: f64,
    pub numerical_aperture: f64,
    pub wavelength: f64,
    /// Magnification applied when a mode is rendered onto a grid.
    pub render_scale: f64,
}

impl Default for FiberSpec {
    fn default() -> Self {
        Self {
            core_radius: 25e-6,
            numerical_aperture: 0.2,
            wavelength: 808e-9,
            render_scale: 10.0,
        }
    }
}

impl FiberSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.core_radius)
            && ok(self.numerical_aperture)
            && ok(self.wavelength)
            && ok(self.render_scale))
        {
            return Err(Error::InvalidArgument(format!(
                "fiber parameters must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Normalized frequency `V = 2 pi a NA / lambda`.
pub fn v_number(spec: &FiberSpec) -> f64 {
    TAU * spec.core_radius * spec.numerical_aperture / spec.wavelength
}

/// Transverse parameters of a guided LP mode, `u^2 + w^2 = V^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub l: u32,
    pub m: u32,
    pub u: f64,
    pub w: f64,
    pub v: f64,
    /// `|u J_{l+1}(u)/J_l(u) - w K_{l+1}(w)/K_l(w)| / max(1, |rhs|)`.
    pub residual: f64,
}

fn core_side(l: i32, u: f64) -> f64 {
    u * bessel_j(l + 1, u) / bessel_j(l, u)
}

fn cladding_side(l: i32, w: f64) -> f64 {
    w * bessel_k(l + 1, w) / bessel_k(l, w)
}

/// Relative mismatch of the characteristic equation at `(u, w)`.
pub fn characteristic_residual(l: u32, u: f64, w: f64) -> f64 {
    let l = l as i32;
    let rhs = cladding_side(l, w);
    (core_side(l, u) - rhs).abs() / rhs.abs().max(1.0)
}

/// Zeros of `J_l` in `(0, limit)`.
fn bessel_zeros(l: i32, limit: f64) -> Vec<f64> {
    const STEP: f64 = 0.05;
    let mut zeros = Vec::new();
    let mut a = 1e-6;
    let mut fa = bessel_j(l, a);
    while a < limit {
        let b = (a + STEP).min(limit);
        let fb = bessel_j(l, b);
        if fa * fb < 0.0 {
            zeros.push(bisect(|x| bessel_j(l, x), a, b));
        }
        a = b;
        fa = fb;
    }
    zeros
}

/// Root of `f` in `[lo, hi]` given a sign change, refined to adjacent floats.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) * flo > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// All guided LP_l modes, ordered by increasing `u` (so `m = 1, 2, ...`).
pub fn guided_modes(spec: &FiberSpec, l: u32) -> Result<Vec<LpSolution>> {
    spec.validate()?;
    let v = v_number(spec);
    let li = l as i32;
    let w_of = |u: f64| (v * v - u * u).max(0.0).sqrt();
    let g = |u: f64| core_side(li, u) - cladding_side(li, w_of(u));

    // Between consecutive zeros of J_l the core side rises from -inf (or 0 in
    // the first interval) to +inf while the cladding side is positive and
    // decreasing, so each full interval holds exactly one root.
    let mut edges = vec![0.0];
    edges.extend(bessel_zeros(li, v));
    edges.push(v);
    let mut out = Vec::new();
    for pair in edges.windows(2) {
        let eps = 1e-9 * pair[0].max(1.0);
        let (lo, hi) = (pair[0] + eps, pair[1] - 1e-9 * pair[1].max(1.0));
        if hi <= lo {
            continue;
        }
        if !(g(lo) < 0.0 && g(hi) > 0.0) {
            continue;
        }
        let u = bisect(g, lo, hi);
        let w = w_of(u);
        out.push(LpSolution {
            l,
            m: out.len() as u32 + 1,
            u,
            w,
            v,
            residual: characteristic_residual(l, u, w),
        });
    }
    Ok(out)
}

/// The `m`-th (1-based) root of the LP_l characteristic equation.
pub fn solve_lp(spec: &FiberSpec, l: u32, m: u32) -> Result<LpSolution> {
    let modes = guided_modes(spec, l)?;
    if m == 0 {
        return Err(Error::InvalidArgument("radial index starts at 1".into()));
    }
    modes
        .get(m as usize - 1)
        .copied()
        .ok_or(Error::NotGuided {
            l,
            m,
            v: v_number(spec),
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// `cos(l phi)`, lobes along x.
    #[default]
    Cos,
    Sin,
}

/// Radial profile at normalized radius `rho = r / a`, continuous at `rho = 1`.
pub fn radial_profile(sol: &LpSolution, rho: f64) -> f64 {
    let l = sol.l as i32;
    if rho < 1.0 {
        bessel_j(l, sol.u * rho)
    } else {
        bessel_j(l, sol.u) / bessel_k(l, sol.w) * bessel_k(l, sol.w * rho)
    }
}

/// Relative mismatch of the radial derivative across the core boundary.
pub fn boundary_derivative_mismatch(sol: &LpSolution) -> f64 {
    let l = sol.l as i32;
    let inside = sol.u * bessel_j_prime(l, sol.u);
    let outside = sol.w * bessel_k_prime(l, sol.w) * bessel_j(l, sol.u) / bessel_k(l, sol.w);
    (inside - outside).abs() / inside.abs().max(outside.abs())
}

/// Normalized real LP_lm field centered on `center`, rendered with core
/// radius `render_scale * core_radius`.
pub fn lp_field_at(
    spec: &FiberSpec,
    l: u32,
    m: u32,
    orientation: Orientation,
    grid: Grid,
    center: (f64, f64),
) -> Result<ComplexField> {
    if l == 0 && orientation == Orientation::Sin {
        return Err(Error::InvalidArgument("LP0m has no sin orientation".into()));
    }
    let sol = solve_lp(spec, l, m)?;
    let radius = spec.render_scale * spec.core_radius;
    let (x0, x1, y0, y1) = grid.bounds();
    let reach = 1.25 * radius;
    let (cx, cy) = center;
    if cx - reach < x0 || cx + reach > x1 || cy - reach < y0 || cy + reach > y1 {
        return Err(Error::Clipped(format!(
            "LP{l}{m} of rendered radius {radius:.3e} m at ({cx:.3e}, {cy:.3e})"
        )));
    }
    let lf = l as f64;
    ComplexField::from_fn(grid, |x, y| {
        let (dx, dy) = (x - cx, y - cy);
        let rho = dx.hypot(dy) / radius;
        let phi = dy.atan2(dx);
        let angular = match orientation {
            Orientation::Cos => (lf * phi).cos(),
            Orientation::Sin => (lf * phi).sin(),
        };
        Complex64::new(radial_profile(&sol, rho) * angular, 0.0)
    })
    .normalized()
}

/// [`lp_field_at`] centered on the optical axis.
pub fn lp_field(
    spec: &FiberSpec,
    l: u32,
    m: u32,
    orientation: Orientation,
    grid: Grid,
) -> Result<ComplexField> {
    lp_field_at(spec, l, m, orientation, grid, (0.0, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::overlap;

    #[test]
    fn v_number_of_default_fiber() {
        assert!((v_number(&FiberSpec::default()) - 38.88).abs() < 0.01);
        let mut s = FiberSpec::default();
        s.core_radius *= 2.0;
        assert!((v_number(&s) - 2.0 * v_number(&FiberSpec::default())).abs() < 1e-12);
        s.numerical_aperture = 1e-9;
        assert!(v_number(&s) < 1e-6);
    }

    #[test]
    fn fundamental_mode_always_guided() {
        for na in [0.01, 0.05, 0.2] {
            let spec = FiberSpec {
                numerical_aperture: na,
                ..FiberSpec::default()
            };
            let sol = solve_lp(&spec, 0, 1).unwrap();
            assert!(sol.u > 0.0 && sol.u < sol.v);
            assert!(sol.residual < 1e-10);
        }
    }

    #[test]
    fn single_mode_fiber_cuts_off_lp11() {
        // V below 2.405 guides only LP01
        let spec = FiberSpec {
            core_radius: 2.0e-6,
            numerical_aperture: 0.12,
            ..FiberSpec::default()
        };
        assert!(v_number(&spec) < 2.405);
        assert!(solve_lp(&spec, 0, 1).is_ok());
        assert!(matches!(solve_lp(&spec, 1, 1), Err(Error::NotGuided { .. })));
    }

    #[test]
    fn solutions_satisfy_invariants() {
        let spec = FiberSpec::default();
        for l in 0..4 {
            for sol in guided_modes(&spec, l).unwrap() {
                assert!(sol.residual < 1e-10, "{sol:?}");
                let v2 = sol.u * sol.u + sol.w * sol.w;
                assert!((v2 - sol.v * sol.v).abs() < 1e-12 * sol.v * sol.v);
                assert!(boundary_derivative_mismatch(&sol) < 1e-6, "{sol:?}");
                let inside = radial_profile(&sol, 1.0 - 1e-12);
                let outside = radial_profile(&sol, 1.0 + 1e-12);
                assert!((inside - outside).abs() <= 1e-6 * inside.abs().max(1e-12));
            }
        }
    }

    #[test]
    fn lp01_and_lp11_shapes() {
        let spec = FiberSpec::default();
        let g = Grid::default();
        let lp01 = lp_field(&spec, 0, 1, Orientation::Cos, g).unwrap();
        let lp11 = lp_field(&spec, 1, 1, Orientation::Cos, g).unwrap();
        assert!((lp01.power() - 1.0).abs() < 1e-9);
        assert!(overlap(&lp01, &lp11).unwrap().norm() < 1e-6);
        let (cx, cy) = (g.nx() / 2, g.ny() / 2);
        let peak = lp01.data().iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert_eq!(lp01.at(cx, cy).norm(), peak);
        assert!(lp11.at(cx, cy).norm() < 1e-12);
        // two lobes along x with opposite sign
        let off = 10;
        assert!(lp11.at(cx + off, cy).re * lp11.at(cx - off, cy).re < 0.0);
        assert!(lp11.at(cx, cy + off).norm() < 1e-9);
        assert!(lp01.data().iter().all(|z| z.im == 0.0));
    }

    #[test]
    fn lp_field_errors() {
        let spec = FiberSpec::default();
        let g = Grid::default();
        assert!(lp_field(&spec, 0, 1, Orientation::Sin, g).is_err());
        let edge = g.bounds().1;
        assert!(matches!(
            lp_field_at(&spec, 0, 1, Orientation::Cos, g, (edge, 0.0)),
            Err(Error::Clipped(_))
        ));
        assert!(solve_lp(&spec, 0, 0).is_err());
    }
}
