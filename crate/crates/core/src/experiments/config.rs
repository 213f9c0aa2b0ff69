//! TOML run configuration shared by all experiment commands.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::certification::MubConvention;
use crate::error::{Error, Result};
use crate::fiber::{FiberSpec, Orientation};
use crate::layout::{SpotLayout, MAX_SPOTS};
use crate::mplc::MplcGeometry;
use crate::twophoton::Statistics;
use crate::wfm::DesignOptions;

/// Version tag written into every manifest and summary.
pub const SCHEMA: &str = "mplc-run/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    #[default]
    Identity,
    Dft,
    DftConjugated,
    Haar,
    /// `dft(d) (+) conj dft(d)` on `2d` modes, the MUB measurement.
    MubPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub kind: TaskKind,
    pub modes: usize,
    /// Sample index of the Haar stream.
    pub haar_index: u64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            kind: TaskKind::Identity,
            modes: 2,
            haar_index: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyConfig {
    pub d: usize,
    pub convention: MubConvention,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            d: 2,
            convention: MubConvention::Conjugated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseScanConfig {
    pub d: usize,
    /// Phase samples per scanned axis, uniform over one period.
    pub samples: usize,
}

impl Default for PhaseScanConfig {
    fn default() -> Self {
        Self { d: 2, samples: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HaarConfig {
    pub count: usize,
    pub modes: usize,
    pub ks_threshold: f64,
}

impl Default for HaarConfig {
    fn default() -> Self {
        Self {
            count: 50,
            modes: 4,
            ks_threshold: crate::twophoton::DEFAULT_PORTER_THOMAS_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub planes: Vec<usize>,
    pub samples: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            planes: vec![1, 2, 3, 5, 7, 10],
            samples: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeConvertConfig {
    pub fiber: FiberSpec,
    /// LP11 lobe orientation; `sin` puts the lobes along the spot column.
    pub lp11_orientation: Orientation,
}

impl Default for ModeConvertConfig {
    fn default() -> Self {
        Self {
            fiber: FiberSpec::default(),
            lp11_orientation: Orientation::Sin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EfficiencyConfig {
    pub count: usize,
}

impl Default for EfficiencyConfig {
    fn default() -> Self {
        Self { count: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Skip the optics and use the exact target matrices.
    pub matrix_level: bool,
    pub statistics: Statistics,
    pub geometry: MplcGeometry,
    pub layout: SpotLayout,
    pub design: DesignOptions,
    pub task: TaskConfig,
    pub certify: CertifyConfig,
    pub phase_scan: PhaseScanConfig,
    pub haar: HaarConfig,
    pub sweep: SweepConfig,
    pub mode_convert: ModeConvertConfig,
    pub efficiency: EfficiencyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            matrix_level: false,
            statistics: Statistics::default(),
            geometry: MplcGeometry::default(),
            layout: SpotLayout::default(),
            design: DesignOptions::default(),
            task: TaskConfig::default(),
            certify: CertifyConfig::default(),
            phase_scan: PhaseScanConfig::default(),
            haar: HaarConfig::default(),
            sweep: SweepConfig::default(),
            mode_convert: ModeConvertConfig::default(),
            efficiency: EfficiencyConfig::default(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks everything that does not depend on the command.
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.design.validate()?;
        self.mode_convert.fiber.validate()?;
        if !(self.layout.waist > 0.0 && self.layout.spacing > 0.0) {
            return Err(invalid("layout waist and spacing must be > 0"));
        }
        if self.task.modes == 0 || self.task.modes > MAX_SPOTS {
            return Err(invalid(format!("task.modes must be in 1..={MAX_SPOTS}")));
        }
        if self.task.kind == TaskKind::MubPair && !self.task.modes.is_multiple_of(2) {
            return Err(invalid("mub-pair task needs an even mode count"));
        }
        for (name, d) in [("certify.d", self.certify.d), ("phase_scan.d", self.phase_scan.d)] {
            if d < 2 || 2 * d > MAX_SPOTS {
                return Err(invalid(format!("{name} must be in 2..={}", MAX_SPOTS / 2)));
            }
        }
        if self.phase_scan.d > 3 {
            return Err(invalid("phase scans are defined for d = 2 and d = 3"));
        }
        if self.phase_scan.samples < 8 {
            return Err(invalid("phase_scan.samples must be >= 8"));
        }
        if self.haar.modes < 2 || !self.haar.modes.is_multiple_of(2) || self.haar.modes > MAX_SPOTS {
            return Err(invalid("haar.modes must be even and in 2..=16"));
        }
        if self.haar.count == 0 || self.efficiency.count == 0 || self.sweep.samples == 0 {
            return Err(invalid("sample counts must be >= 1"));
        }
        if !(self.haar.ks_threshold > 0.0 && self.haar.ks_threshold <= 1.0) {
            return Err(invalid("haar.ks_threshold must be in (0, 1]"));
        }
        if self.sweep.planes.is_empty() || self.sweep.planes.contains(&0) {
            return Err(invalid("sweep.planes must be a non-empty list of positive counts"));
        }
        Ok(())
    }

    /// Checks that `n` spots of the layout fit on the grid.
    pub fn check_spots(&self, n: usize) -> Result<()> {
        let grid = self.geometry.grid;
        let need = self.layout.required_grid(n, grid.pitch());
        if grid.nx().min(grid.ny()) < need {
            return Err(invalid(format!(
                "{n} spots need a grid of at least {need}x{need} samples at this pitch, \
                 got {}x{}",
                grid.nx(),
                grid.ny()
            )));
        }
        Ok(())
    }
}
