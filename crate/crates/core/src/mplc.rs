//! Forward model of a multi-plane light converter.
//!
//! A device is an unfolded transmissive stack: the input plane carries mask 0,
//! each mask is followed by free-space propagation to the next plane, and the
//! last mask is followed by propagation to the output (detection) plane.

use std::f64::consts::TAU;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{overlap_slices, ComplexField, Grid, ModeSet};
use crate::propagation::Propagator;
use crate::CMatrix;

pub const DEFAULT_WAVELENGTH: f64 = 810e-9;
pub const DEFAULT_PLANE_COUNT: usize = 5;
pub const DEFAULT_PLANE_SPACING: f64 = 76e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MplcGeometry {
    pub wavelength: f64,
    pub plane_count: usize,
    pub plane_spacing: f64,
    /// Distance from the last mask to the detection plane; one plane spacing
    /// when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_distance: Option<f64>,
    pub grid: Grid,
}

impl Default for MplcGeometry {
    fn default() -> Self {
        Self {
            wavelength: DEFAULT_WAVELENGTH,
            plane_count: DEFAULT_PLANE_COUNT,
            plane_spacing: DEFAULT_PLANE_SPACING,
            output_distance: None,
            grid: Grid::default(),
        }
    }
}

impl MplcGeometry {
    pub fn new(grid: Grid, plane_count: usize) -> Result<Self> {
        let g = Self {
            plane_count,
            grid,
            ..Self::default()
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_planes(mut self, plane_count: usize) -> Self {
        self.plane_count = plane_count;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.plane_count < 1 {
            return Err(Error::InvalidGeometry("plane_count must be >= 1".into()));
        }
        if !(self.plane_spacing.is_finite() && self.plane_spacing > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "plane_spacing must be > 0, got {}",
                self.plane_spacing
            )));
        }
        if !(self.wavelength.is_finite() && self.wavelength > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "wavelength must be > 0, got {}",
                self.wavelength
            )));
        }
        if let Some(d) = self.output_distance {
            if !(d.is_finite() && d >= 0.0) {
                return Err(Error::InvalidGeometry(format!(
                    "output_distance must be >= 0, got {d}"
                )));
            }
        }
        // Re-checks grid invariants for deserialized values.
        Grid::new(self.grid.nx(), self.grid.ny(), self.grid.pitch())?;
        Ok(())
    }

    pub fn output_distance(&self) -> f64 {
        self.output_distance.unwrap_or(self.plane_spacing)
    }
}

/// A single phase mask in radians, row-major on the geometry grid.
pub type PhaseMask = Vec<f32>;

/// Ordered phase masks plus the geometry they were designed for.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskStack {
    geometry: MplcGeometry,
    masks: Vec<PhaseMask>,
}

impl MaskStack {
    pub fn new(geometry: MplcGeometry, masks: Vec<PhaseMask>) -> Result<Self> {
        geometry.validate()?;
        if masks.len() != geometry.plane_count {
            return Err(Error::DimensionMismatch(format!(
                "{} masks for {} planes",
                masks.len(),
                geometry.plane_count
            )));
        }
        for (k, m) in masks.iter().enumerate() {
            if m.len() != geometry.grid.len() {
                return Err(Error::DimensionMismatch(format!(
                    "mask {k} has {} samples, grid has {}",
                    m.len(),
                    geometry.grid.len()
                )));
            }
            if m.iter().any(|p| !p.is_finite()) {
                return Err(Error::InvalidArgument(format!("mask {k} has non-finite phase")));
            }
        }
        Ok(Self { geometry, masks })
    }

    /// All-zero masks: the stack reduces to free-space propagation.
    pub fn flat(geometry: MplcGeometry) -> Result<Self> {
        let masks = vec![vec![0.0; geometry.grid.len()]; geometry.plane_count];
        Self::new(geometry, masks)
    }

    pub fn geometry(&self) -> &MplcGeometry {
        &self.geometry
    }

    pub fn masks(&self) -> &[PhaseMask] {
        &self.masks
    }

    pub fn mask(&self, k: usize) -> &PhaseMask {
        &self.masks[k]
    }

    pub(crate) fn mask_mut(&mut self, k: usize) -> &mut PhaseMask {
        &mut self.masks[k]
    }

    pub fn into_masks(self) -> Vec<PhaseMask> {
        self.masks
    }
}

/// Wraps a phase into `[0, 2 pi)` as `f32`.
pub fn wrap_phase(phi: f64) -> f32 {
    let w = phi.rem_euclid(TAU) as f32;
    // rounding to f32 can land exactly on 2 pi
    if w >= std::f32::consts::TAU {
        0.0
    } else {
        w
    }
}

pub(crate) fn apply_mask_slice(buf: &mut [Complex64], mask: &[f32], conjugate: bool) {
    let sign = if conjugate { -1.0 } else { 1.0 };
    for (a, &p) in buf.iter_mut().zip(mask) {
        let (s, c) = (sign * p as f64).sin_cos();
        *a *= Complex64::new(c, s);
    }
}

/// Pointwise multiplication by `exp(i mask)`.
pub fn apply_mask(field: &ComplexField, mask: &[f32]) -> Result<ComplexField> {
    if mask.len() != field.grid().len() {
        return Err(Error::DimensionMismatch(format!(
            "mask has {} samples, field has {}",
            mask.len(),
            field.grid().len()
        )));
    }
    let mut out = field.clone();
    apply_mask_slice(out.data_mut(), mask, false);
    Ok(out)
}

/// Propagators for one geometry, reusable across many passes.
#[derive(Debug, Clone)]
pub struct MplcEngine {
    geometry: MplcGeometry,
    between: Propagator,
    to_output: Propagator,
}

impl MplcEngine {
    pub fn new(geometry: &MplcGeometry) -> Result<Self> {
        geometry.validate()?;
        let between = Propagator::new(geometry.grid, geometry.wavelength, geometry.plane_spacing)?;
        let to_output = if geometry.output_distance() == geometry.plane_spacing {
            between.clone()
        } else {
            Propagator::new(geometry.grid, geometry.wavelength, geometry.output_distance())?
        };
        Ok(Self {
            geometry: *geometry,
            between,
            to_output,
        })
    }

    pub fn geometry(&self) -> &MplcGeometry {
        &self.geometry
    }

    /// Propagator that follows mask `k`.
    pub fn propagator_after(&self, k: usize) -> &Propagator {
        if k + 1 == self.geometry.plane_count {
            &self.to_output
        } else {
            &self.between
        }
    }

    fn check(&self, stack: &MaskStack, grid: &Grid) -> Result<()> {
        if stack.geometry != self.geometry {
            return Err(Error::InvalidGeometry(
                "stack geometry differs from engine geometry".into(),
            ));
        }
        self.geometry.grid.ensure_same(grid)
    }

    /// Input plane to output plane.
    pub fn forward(&self, input: &ComplexField, stack: &MaskStack) -> Result<ComplexField> {
        self.check(stack, input.grid())?;
        let mut out = input.clone();
        let mut scratch = Vec::new();
        for (k, mask) in stack.masks.iter().enumerate() {
            apply_mask_slice(out.data_mut(), mask, false);
            self.propagator_after(k).forward_in_place(out.data_mut(), &mut scratch);
        }
        Ok(out)
    }

    /// Adjoint pass, output plane to input plane: reversed order, backward
    /// propagation and conjugated masks.
    pub fn backward(&self, output: &ComplexField, stack: &MaskStack) -> Result<ComplexField> {
        self.check(stack, output.grid())?;
        let mut out = output.clone();
        let mut scratch = Vec::new();
        for (k, mask) in stack.masks.iter().enumerate().rev() {
            self.propagator_after(k).backward_in_place(out.data_mut(), &mut scratch);
            apply_mask_slice(out.data_mut(), mask, true);
        }
        Ok(out)
    }
}

pub fn mplc_forward(input: &ComplexField, stack: &MaskStack) -> Result<ComplexField> {
    MplcEngine::new(stack.geometry())?.forward(input, stack)
}

pub fn mplc_backward(output: &ComplexField, stack: &MaskStack) -> Result<ComplexField> {
    MplcEngine::new(stack.geometry())?.backward(output, stack)
}

/// Effective matrix from input-mode amplitudes to output-mode amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    entries: CMatrix,
    efficiency: f64,
    unitarity_deviation: f64,
}

impl TransferMatrix {
    /// Wraps `entries` and computes the metrics.
    pub fn from_entries(entries: CMatrix) -> Self {
        let n_in = entries.ncols().max(1) as f64;
        let efficiency = entries.iter().map(|z| z.norm_sqr()).sum::<f64>() / n_in;
        let gram = entries.adjoint() * &entries;
        let mut dev = 0.0;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let target = if i == j { efficiency } else { 0.0 };
                dev += (gram[(i, j)] - Complex64::new(target, 0.0)).norm_sqr();
            }
        }
        Self {
            entries,
            efficiency,
            unitarity_deviation: dev.sqrt() / n_in,
        }
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    /// `(1/n_in) sum |T_ij|^2`.
    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    /// `||T^dagger T - eta I||_F / n_in`.
    pub fn unitarity_deviation(&self) -> f64 {
        self.unitarity_deviation
    }

    pub fn singular_values(&self) -> Vec<f64> {
        self.entries.clone().singular_values().iter().copied().collect()
    }
}

/// `T_ij = <output_i | forward(input_j)>`.
pub fn extract_transfer_matrix(
    stack: &MaskStack,
    inputs: &ModeSet,
    outputs: &ModeSet,
) -> Result<TransferMatrix> {
    let engine = MplcEngine::new(stack.geometry())?;
    extract_with_engine(&engine, stack, inputs, outputs)
}

pub fn extract_with_engine(
    engine: &MplcEngine,
    stack: &MaskStack,
    inputs: &ModeSet,
    outputs: &ModeSet,
) -> Result<TransferMatrix> {
    let grid = stack.geometry().grid;
    grid.ensure_same(inputs.grid())?;
    grid.ensure_same(outputs.grid())?;
    let area = grid.pixel_area();
    let mut t = CMatrix::zeros(outputs.len(), inputs.len());
    for (j, input) in inputs.modes().iter().enumerate() {
        let out = engine.forward(input, stack)?;
        for (i, target) in outputs.modes().iter().enumerate() {
            t[(i, j)] = overlap_slices(target.data(), out.data()) * area;
        }
    }
    Ok(TransferMatrix::from_entries(t))
}

const BUNDLE_FORMAT: &str = "mplc-bundle/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BundleMetadata {
    format: String,
    geometry: MplcGeometry,
    plane_count: usize,
    mask_files: Vec<String>,
    #[serde(default)]
    creation: serde_json::Value,
}

impl MaskStack {
    /// Writes a `.mplc` bundle directory: `metadata.json` plus one
    /// little-endian `f32` row-major file per plane.
    pub fn save_bundle(&self, dir: impl AsRef<Path>, creation: serde_json::Value) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut mask_files = Vec::with_capacity(self.masks.len());
        for (k, mask) in self.masks.iter().enumerate() {
            let name = format!("plane_{k:02}.f32");
            let mut w = BufWriter::new(fs::File::create(dir.join(&name))?);
            for p in mask {
                w.write_all(&p.to_le_bytes())?;
            }
            w.flush()?;
            mask_files.push(name);
        }
        let meta = BundleMetadata {
            format: BUNDLE_FORMAT.into(),
            geometry: self.geometry,
            plane_count: self.masks.len(),
            mask_files,
            creation,
        };
        let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(dir.join("metadata.json"), text + "\n")?;
        Ok(())
    }

    /// Reads a bundle written by [`Self::save_bundle`]; returns the stack and
    /// its creation parameters.
    pub fn load_bundle(dir: impl AsRef<Path>) -> Result<(Self, serde_json::Value)> {
        let dir = dir.as_ref();
        let text = fs::read_to_string(dir.join("metadata.json"))?;
        let meta: BundleMetadata =
            serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        if meta.format != BUNDLE_FORMAT {
            return Err(Error::Parse(format!("unknown bundle format {}", meta.format)));
        }
        if meta.plane_count != meta.mask_files.len() {
            return Err(Error::Parse("plane_count disagrees with mask file list".into()));
        }
        let n = meta.geometry.grid.len();
        let mut masks = Vec::with_capacity(meta.plane_count);
        for name in &meta.mask_files {
            let bytes = fs::read(dir.join(name))?;
            if bytes.len() != 4 * n {
                return Err(Error::Parse(format!(
                    "{name}: expected {} bytes, found {}",
                    4 * n,
                    bytes.len()
                )));
            }
            masks.push(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            );
        }
        Ok((Self::new(meta.geometry, masks)?, meta.creation))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{gaussian_spot, overlap};
    use crate::propagation::propagate;

    fn small_geometry(planes: usize) -> MplcGeometry {
        MplcGeometry {
            plane_count: planes,
            grid: Grid::square(64, 12.5e-6).unwrap(),
            plane_spacing: 20e-3,
            ..MplcGeometry::default()
        }
    }

    fn random_stack(geometry: MplcGeometry, seed: u64) -> MaskStack {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64 * TAU) as f32
        };
        let masks = (0..geometry.plane_count)
            .map(|_| (0..geometry.grid.len()).map(|_| next()).collect())
            .collect();
        MaskStack::new(geometry, masks).unwrap()
    }

    #[test]
    fn zero_and_constant_masks() {
        let g = Grid::default();
        let u = gaussian_spot(g, (0.0, 0.0), 150e-6).unwrap();
        assert_eq!(apply_mask(&u, &vec![0.0; g.len()]).unwrap(), u);
        let c = 1.3f32;
        let v = apply_mask(&u, &vec![c; g.len()]).unwrap();
        let phase = Complex64::from_polar(1.0, c as f64);
        for (a, b) in v.data().iter().zip(u.data()) {
            assert!((a - b * phase).norm() < 1e-15);
        }
        assert!((v.power() - u.power()).abs() < 1e-15);
        assert!(apply_mask(&u, &[0.0; 4]).is_err());
    }

    #[test]
    fn flat_stack_reduces_to_propagation() {
        let geometry = MplcGeometry::default().with_planes(3);
        let stack = MaskStack::flat(geometry).unwrap();
        let u = gaussian_spot(geometry.grid, (0.0, 0.0), 150e-6).unwrap();
        let out = mplc_forward(&u, &stack).unwrap();
        let reference = propagate(&u, 3.0 * geometry.plane_spacing, geometry.wavelength).unwrap();
        let peak = reference.data().iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (a, b) in out.data().iter().zip(reference.data()) {
            assert!((a - b).norm() < 1e-9 * peak);
        }
    }

    #[test]
    fn forward_is_linear() {
        let geometry = small_geometry(3);
        let stack = random_stack(geometry, 7);
        let u = gaussian_spot(geometry.grid, (0.0, 50e-6), 60e-6).unwrap();
        let v = gaussian_spot(geometry.grid, (-40e-6, 0.0), 50e-6).unwrap();
        let mut sum = u.clone();
        sum.add_scaled(Complex64::new(0.5, 2.0), &v).unwrap();
        let lhs = mplc_forward(&sum, &stack).unwrap();
        let mut rhs = mplc_forward(&u, &stack).unwrap();
        rhs.add_scaled(Complex64::new(0.5, 2.0), &mplc_forward(&v, &stack).unwrap())
            .unwrap();
        for (a, b) in lhs.data().iter().zip(rhs.data()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn backward_is_the_adjoint() {
        let geometry = small_geometry(4);
        let stack = random_stack(geometry, 11);
        let u = gaussian_spot(geometry.grid, (0.0, 50e-6), 60e-6).unwrap();
        let v = gaussian_spot(geometry.grid, (30e-6, -70e-6), 50e-6).unwrap();
        let lhs = overlap(&v, &mplc_forward(&u, &stack).unwrap()).unwrap();
        let rhs = overlap(&mplc_backward(&v, &stack).unwrap(), &u).unwrap();
        assert!((lhs - rhs).norm() < 1e-8);
    }

    #[test]
    fn flat_stack_transfer_matrix_is_identity() {
        let geometry = MplcGeometry::default().with_planes(2);
        let stack = MaskStack::flat(geometry).unwrap();
        let inputs: Vec<_> = [-300e-6, 300e-6]
            .iter()
            .map(|&y| gaussian_spot(geometry.grid, (0.0, y), 150e-6).unwrap())
            .collect();
        let inputs = ModeSet::unlabelled(inputs).unwrap();
        let outputs = ModeSet::unlabelled(
            inputs
                .modes()
                .iter()
                .map(|u| mplc_forward(u, &stack).unwrap())
                .collect(),
        )
        .unwrap();
        let t = extract_transfer_matrix(&stack, &inputs, &outputs).unwrap();
        let e = t.entries();
        assert!((e[(0, 0)] - 1.0).norm() < 1e-6);
        assert!((e[(1, 1)] - 1.0).norm() < 1e-6);
        // off-diagonals equal the (tiny) input crosstalk
        assert!(e[(0, 1)].norm() < 1e-3);
        assert!(t.efficiency() <= 1.0 + 1e-6);
        // spot crosstalk splits the singular values slightly
        assert!(t.singular_values().iter().all(|&s| (s - 1.0).abs() < 1e-3));
    }

    #[test]
    fn transfer_matrix_metrics() {
        let mut m = CMatrix::identity(3, 3);
        m *= Complex64::new(0.0, 0.5f64.sqrt());
        let t = TransferMatrix::from_entries(m);
        assert!((t.efficiency() - 0.5).abs() < 1e-15);
        assert!(t.unitarity_deviation() < 1e-15);
        let mut skew = CMatrix::zeros(2, 2);
        skew[(0, 0)] = Complex64::new(1.0, 0.0);
        let t = TransferMatrix::from_entries(skew);
        assert!((t.efficiency() - 0.5).abs() < 1e-15);
        // T^dagger T - 0.5 I = diag(0.5, -0.5)
        assert!((t.unitarity_deviation() - 0.5f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn geometry_validation() {
        assert!(MplcGeometry::default().with_planes(0).validate().is_err());
        let g = MplcGeometry {
            plane_spacing: 0.0,
            ..MplcGeometry::default()
        };
        assert!(g.validate().is_err());
        let g = MplcGeometry {
            wavelength: -1.0,
            ..MplcGeometry::default()
        };
        assert!(g.validate().is_err());
        assert!(MaskStack::new(MplcGeometry::default(), vec![]).is_err());
    }

    #[test]
    fn bundle_round_trip_is_bit_exact() {
        let geometry = small_geometry(2);
        let stack = random_stack(geometry, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("test.mplc");
        stack
            .save_bundle(&path, serde_json::json!({"task": "unit"}))
            .unwrap();
        let (back, creation) = MaskStack::load_bundle(&path).unwrap();
        assert_eq!(back, stack);
        assert_eq!(creation["task"], "unit");
        let bytes = std::fs::read(path.join("plane_01.f32")).unwrap();
        assert_eq!(bytes.len(), 4 * geometry.grid.len());
    }

    #[test]
    fn wrap_phase_range() {
        for phi in [-7.0, -1e-12, 0.0, 3.0, TAU, TAU - 1e-9, 100.0] {
            let w = wrap_phase(phi);
            assert!((0.0..std::f32::consts::TAU).contains(&w), "{phi} -> {w}");
        }
    }
}
