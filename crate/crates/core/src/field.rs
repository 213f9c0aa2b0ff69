//! Sampled complex scalar fields on a centered square-pixel grid.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default sample count per axis.
pub const DEFAULT_GRID_SIZE: usize = 256;
/// Default pitch, one SLM pixel.
pub const DEFAULT_PITCH: f64 = 12.5e-6;

/// Square-pixel sampling grid centered on the optical axis.
///
/// Sample `(ix, iy)` sits at `((ix - nx/2) * pitch, (iy - ny/2) * pitch)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    nx: usize,
    ny: usize,
    pitch: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, pitch: f64) -> Result<Self> {
        if nx < 16 || ny < 16 || !nx.is_multiple_of(2) || !ny.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "sample counts must be even and >= 16, got {nx}x{ny}"
            )));
        }
        if !(pitch.is_finite() && pitch > 0.0) {
            return Err(Error::InvalidGrid(format!("pitch must be > 0, got {pitch}")));
        }
        Ok(Self { nx, ny, pitch })
    }

    pub fn square(n: usize, pitch: f64) -> Result<Self> {
        Self::new(n, n, pitch)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, ix: usize) -> f64 {
        (ix as f64 - (self.nx / 2) as f64) * self.pitch
    }

    pub fn y(&self, iy: usize) -> f64 {
        (iy as f64 - (self.ny / 2) as f64) * self.pitch
    }

    /// Coordinate extent `(x_min, x_max, y_min, y_max)` of the sample centers.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        (self.x(0), self.x(self.nx - 1), self.y(0), self.y(self.ny - 1))
    }

    pub fn pixel_area(&self) -> f64 {
        self.pitch * self.pitch
    }

    /// Iterator over `(x, y)` in storage order.
    pub fn coords(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.ny).flat_map(move |iy| (0..self.nx).map(move |ix| (self.x(ix), self.y(iy))))
    }

    pub fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            nx: DEFAULT_GRID_SIZE,
            ny: DEFAULT_GRID_SIZE,
            pitch: DEFAULT_PITCH,
        }
    }
}

/// Complex amplitude sampled on a [`Grid`], stored row-major (rows along y).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: Grid,
    data: Vec<Complex64>,
}

impl ComplexField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            data: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_vec(grid: Grid, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: data.len(),
            });
        }
        Ok(Self { grid, data })
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64, f64) -> Complex64) -> Self {
        let data = grid.coords().map(|(x, y)| f(x, y)).collect();
        Self { grid, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn at(&self, ix: usize, iy: usize) -> Complex64 {
        self.data[iy * self.grid.nx + ix]
    }

    /// Integrated intensity `sum |a|^2 * pitch^2`.
    pub fn power(&self) -> f64 {
        self.data.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.pixel_area()
    }

    pub fn normalized(mut self) -> Result<Self> {
        let p = self.power();
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "cannot normalize field with power {p}"
            )));
        }
        let s = 1.0 / p.sqrt();
        self.data.iter_mut().for_each(|a| *a *= s);
        Ok(self)
    }

    pub fn scale(&mut self, c: Complex64) {
        self.data.iter_mut().for_each(|a| *a *= c);
    }

    pub fn scaled(mut self, c: Complex64) -> Self {
        self.scale(c);
        self
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, c: Complex64, other: &ComplexField) -> Result<()> {
        self.grid.ensure_same(&other.grid)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.data.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Intensity-weighted centroid `(x, y)`.
    pub fn centroid(&self) -> (f64, f64) {
        let mut total = 0.0;
        let (mut sx, mut sy) = (0.0, 0.0);
        for ((x, y), a) in self.grid.coords().zip(&self.data) {
            let w = a.norm_sqr();
            total += w;
            sx += w * x;
            sy += w * y;
        }
        (sx / total, sy / total)
    }

    /// Second-moment radius: `sqrt(2 <r^2>)`, equal to the 1/e^2 intensity
    /// radius for a Gaussian beam.
    pub fn second_moment_radius(&self) -> f64 {
        let (cx, cy) = self.centroid();
        let mut total = 0.0;
        let mut r2 = 0.0;
        for ((x, y), a) in self.grid.coords().zip(&self.data) {
            let w = a.norm_sqr();
            total += w;
            r2 += w * ((x - cx).powi(2) + (y - cy).powi(2));
        }
        (2.0 * r2 / total).sqrt()
    }

    /// Writes the `.cfd` binary format: little-endian `u32 nx`, `u32 ny`,
    /// `f64 pitch`, then interleaved `(re, im)` `f64` pairs row-major.
    pub fn write_cfd<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.grid.nx as u32).to_le_bytes())?;
        w.write_all(&(self.grid.ny as u32).to_le_bytes())?;
        w.write_all(&self.grid.pitch.to_le_bytes())?;
        for a in &self.data {
            w.write_all(&a.re.to_le_bytes())?;
            w.write_all(&a.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_cfd<R: Read>(mut r: R) -> Result<Self> {
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let nx = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let ny = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let pitch = f64::from_le_bytes(b8);
        let grid = Grid::new(nx, ny, pitch)?;
        let mut data = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            r.read_exact(&mut b8)?;
            let re = f64::from_le_bytes(b8);
            r.read_exact(&mut b8)?;
            let im = f64::from_le_bytes(b8);
            data.push(Complex64::new(re, im));
        }
        Ok(Self { grid, data })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_cfd(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_cfd(BufReader::new(File::open(path)?))
    }
}

/// `sum conj(u) * v * pitch^2`.
pub fn overlap(u: &ComplexField, v: &ComplexField) -> Result<Complex64> {
    u.grid.ensure_same(&v.grid)?;
    Ok(overlap_slices(&u.data, &v.data) * u.grid.pixel_area())
}

pub(crate) fn overlap_slices(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

/// Normalized Gaussian spot `exp(-r^2 / waist^2)` centered at `center`.
pub fn gaussian_spot(grid: Grid, center: (f64, f64), waist: f64) -> Result<ComplexField> {
    if !(waist >= 2.0 * grid.pitch()) {
        return Err(Error::Resolution(format!(
            "waist {waist:.3e} m is below two pixels ({:.3e} m)",
            2.0 * grid.pitch()
        )));
    }
    let (x0, x1, y0, y1) = grid.bounds();
    let (cx, cy) = center;
    let r = 3.0 * waist;
    if cx - r < x0 || cx + r > x1 || cy - r < y0 || cy + r > y1 {
        return Err(Error::Clipped(format!(
            "spot at ({cx:.3e}, {cy:.3e}) with waist {waist:.3e} leaves the grid"
        )));
    }
    let inv = 1.0 / (waist * waist);
    ComplexField::from_fn(grid, |x, y| {
        Complex64::new((-((x - cx).powi(2) + (y - cy).powi(2)) * inv).exp(), 0.0)
    })
    .normalized()
}

/// Ordered, labelled set of fields sharing one grid.
#[derive(Debug, Clone)]
pub struct ModeSet {
    modes: Vec<ComplexField>,
    labels: Vec<String>,
}

/// Pairwise overlap bound for spot bases.
pub const DEFAULT_CROSSTALK_TOLERANCE: f64 = 1e-3;

impl ModeSet {
    pub fn new(modes: Vec<ComplexField>, labels: Vec<String>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::InvalidArgument("empty mode set".into()));
        }
        if labels.len() != modes.len() {
            return Err(Error::LengthMismatch {
                expected: modes.len(),
                got: labels.len(),
            });
        }
        let grid = *modes[0].grid();
        for (m, label) in modes.iter().zip(&labels) {
            grid.ensure_same(m.grid())?;
            let p = m.power();
            if (p - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidArgument(format!(
                    "mode {label} is not normalized (power {p})"
                )));
            }
        }
        Ok(Self { modes, labels })
    }

    /// Labels default to the mode index.
    pub fn unlabelled(modes: Vec<ComplexField>) -> Result<Self> {
        let labels = (0..modes.len()).map(|i| i.to_string()).collect();
        Self::new(modes, labels)
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn grid(&self) -> &Grid {
        self.modes[0].grid()
    }

    pub fn modes(&self) -> &[ComplexField] {
        &self.modes
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn get(&self, i: usize) -> &ComplexField {
        &self.modes[i]
    }

    /// Largest `|<u_i|u_j>|` over distinct pairs.
    pub fn max_crosstalk(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                let o = overlap_slices(self.modes[i].data(), self.modes[j].data())
                    * self.grid().pixel_area();
                worst = worst.max(o.norm());
            }
        }
        worst
    }
}

/// Linear combination `sum_k coefficients[k] * modes[k]`.
pub fn superpose(modes: &ModeSet, coefficients: &[Complex64]) -> Result<ComplexField> {
    if coefficients.len() != modes.len() {
        return Err(Error::LengthMismatch {
            expected: modes.len(),
            got: coefficients.len(),
        });
    }
    let mut out = ComplexField::zeros(*modes.grid());
    for (c, m) in coefficients.iter().zip(modes.modes()) {
        out.add_scaled(*c, m)?;
    }
    Ok(out)
}
