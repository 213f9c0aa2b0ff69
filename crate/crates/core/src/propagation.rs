//! Angular-spectrum free-space propagation.
//!
//! The transfer function is `exp(i 2 pi z sqrt(1/lambda^2 - fx^2 - fy^2))`
//! on the FFT frequency lattice, zero for evanescent components. The lattice
//! itself stops at the grid Nyquist frequency, so the operator is unitary on
//! the sampled, propagating subspace.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{ComplexField, Grid};

/// Forward/inverse 2-D FFT over a row-major `ny x nx` buffer.
#[derive(Clone)]
pub struct Fft2 {
    nx: usize,
    ny: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2")
            .field("nx", &self.nx)
            .field("ny", &self.ny)
            .finish()
    }
}

impl Fft2 {
    pub fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            nx,
            ny,
            row_fwd: planner.plan_fft_forward(nx),
            row_inv: planner.plan_fft_inverse(nx),
            col_fwd: planner.plan_fft_forward(ny),
            col_inv: planner.plan_fft_inverse(ny),
        }
    }

    /// Unnormalized forward transform, in place.
    pub fn forward(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        self.run(buf, scratch, &self.row_fwd, &self.col_fwd);
    }

    /// Unnormalized inverse transform, in place.
    pub fn inverse(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        self.run(buf, scratch, &self.row_inv, &self.col_inv);
    }

    fn run(
        &self,
        buf: &mut [Complex64],
        scratch: &mut Vec<Complex64>,
        rows: &Arc<dyn Fft<f64>>,
        cols: &Arc<dyn Fft<f64>>,
    ) {
        debug_assert_eq!(buf.len(), self.nx * self.ny);
        let zero = Complex64::new(0.0, 0.0);
        let work = rows
            .get_inplace_scratch_len()
            .max(cols.get_inplace_scratch_len());
        scratch.resize(buf.len() + work, zero);
        let (tbuf, fft_scratch) = scratch.split_at_mut(buf.len());
        rows.process_with_scratch(buf, &mut fft_scratch[..rows.get_inplace_scratch_len()]);
        transpose::transpose(buf, tbuf, self.nx, self.ny);
        cols.process_with_scratch(tbuf, &mut fft_scratch[..cols.get_inplace_scratch_len()]);
        transpose::transpose(tbuf, buf, self.ny, self.nx);
    }
}

/// FFT sample frequencies in cycles per meter, in FFT order.
pub fn fft_frequencies(n: usize, pitch: f64) -> Vec<f64> {
    let df = 1.0 / (n as f64 * pitch);
    (0..n)
        .map(|i| {
            let k = if i < n.div_ceil(2) { i as f64 } else { i as f64 - n as f64 };
            k * df
        })
        .collect()
}

/// Precomputed propagator for one grid, wavelength and distance.
#[derive(Debug, Clone)]
pub struct Propagator {
    grid: Grid,
    distance: f64,
    fft: Fft2,
    /// Transfer function with the `1/(nx ny)` inverse-FFT normalization folded in.
    transfer: Vec<Complex64>,
}

impl Propagator {
    pub fn new(grid: Grid, wavelength: f64, distance: f64) -> Result<Self> {
        if !(distance.is_finite() && distance >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "propagation distance must be >= 0, got {distance}"
            )));
        }
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "wavelength must be > 0, got {wavelength}"
            )));
        }
        let fx = fft_frequencies(grid.nx(), grid.pitch());
        let fy = fft_frequencies(grid.ny(), grid.pitch());
        let k2 = 1.0 / (wavelength * wavelength);
        let norm = 1.0 / grid.len() as f64;
        let mut transfer = Vec::with_capacity(grid.len());
        for &v in &fy {
            for &u in &fx {
                let arg = k2 - u * u - v * v;
                transfer.push(if arg > 0.0 {
                    Complex64::from_polar(norm, 2.0 * PI * distance * arg.sqrt())
                } else {
                    Complex64::new(0.0, 0.0)
                });
            }
        }
        Ok(Self {
            grid,
            distance,
            fft: Fft2::new(grid.nx(), grid.ny()),
            transfer,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    /// Propagates `buf` forward by the stored distance.
    pub fn forward_in_place(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        self.apply(buf, scratch, false);
    }

    /// Adjoint of [`Self::forward_in_place`]: propagation by `-distance`.
    pub fn backward_in_place(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        self.apply(buf, scratch, true);
    }

    fn apply(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>, adjoint: bool) {
        if self.distance == 0.0 {
            return;
        }
        self.fft.forward(buf, scratch);
        if adjoint {
            for (a, h) in buf.iter_mut().zip(&self.transfer) {
                *a *= h.conj();
            }
        } else {
            for (a, h) in buf.iter_mut().zip(&self.transfer) {
                *a *= h;
            }
        }
        self.fft.inverse(buf, scratch);
    }

    pub fn forward(&self, field: &ComplexField) -> Result<ComplexField> {
        self.grid.ensure_same(field.grid())?;
        let mut out = field.clone();
        self.forward_in_place(out.data_mut(), &mut Vec::new());
        Ok(out)
    }

    pub fn backward(&self, field: &ComplexField) -> Result<ComplexField> {
        self.grid.ensure_same(field.grid())?;
        let mut out = field.clone();
        self.backward_in_place(out.data_mut(), &mut Vec::new());
        Ok(out)
    }
}

/// Propagates `field` over `distance` (meters) at `wavelength` (meters).
pub fn propagate(field: &ComplexField, distance: f64, wavelength: f64) -> Result<ComplexField> {
    Propagator::new(*field.grid(), wavelength, distance)?.forward(field)
}
