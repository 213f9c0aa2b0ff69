//! Columns of Gaussian spots used as input and output mode bases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{gaussian_spot, Grid, ModeSet};

pub const DEFAULT_SPOT_WAIST: f64 = 150e-6;
pub const DEFAULT_SPOT_SPACING: f64 = 600e-6;
pub const MAX_SPOTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpotLayout {
    pub waist: f64,
    /// Center-to-center distance along y.
    pub spacing: f64,
    /// x position of the column.
    pub x: f64,
}

impl Default for SpotLayout {
    fn default() -> Self {
        Self {
            waist: DEFAULT_SPOT_WAIST,
            spacing: DEFAULT_SPOT_SPACING,
            x: 0.0,
        }
    }
}

impl SpotLayout {
    /// Centers of `n` spots, symmetric about `y = 0`.
    pub fn centers(&self, n: usize) -> Vec<(f64, f64)> {
        let mid = (n as f64 - 1.0) / 2.0;
        (0..n)
            .map(|i| (self.x, (i as f64 - mid) * self.spacing))
            .collect()
    }

    /// `n` normalized spots labelled `spot{i}`.
    pub fn modes(&self, grid: Grid, n: usize) -> Result<ModeSet> {
        if n == 0 || n > MAX_SPOTS {
            return Err(Error::Capacity {
                modes: n,
                limit: MAX_SPOTS,
            });
        }
        if !(self.spacing > 0.0 && self.waist > 0.0) {
            return Err(Error::InvalidArgument(format!("bad spot layout {self:?}")));
        }
        let modes = self
            .centers(n)
            .into_iter()
            .map(|c| gaussian_spot(grid, c, self.waist))
            .collect::<Result<Vec<_>>>()?;
        let labels = (0..n).map(|i| format!("spot{i}")).collect();
        ModeSet::new(modes, labels)
    }

    /// Smallest square grid side (even, in pixels) holding `n` spots.
    pub fn required_grid(&self, n: usize, pitch: f64) -> usize {
        let half = (n as f64 - 1.0) / 2.0 * self.spacing + 3.0 * self.waist;
        let half_px = (half / pitch).ceil() as usize + 1;
        2 * half_px
    }
}
