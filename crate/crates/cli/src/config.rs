use std::path::{Path, PathBuf};

use oam_thermo::process::demon_kernel;
use oam_thermo::{BetaGrid, LRange, NoiseModel, ProcessSpec, SolverOptions, SorterGeometry};
use serde::{Deserialize, Serialize};

use crate::CliError;

fn default_cutoff() -> u32 {
    7
}
fn default_trials() -> usize {
    1000
}
fn default_seed() -> u64 {
    20_160_901
}
fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}
fn default_work_beta() -> f64 {
    2.0
}
fn default_information() -> f64 {
    std::f64::consts::LN_2
}

/// Experiment description. Every field has a default, so `{}` runs the
/// ±5 shift-superposition experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub geometry: SorterGeometry,
    #[serde(default)]
    pub process: ProcessSpec,
    #[serde(default)]
    pub noise: NoiseModel,
    /// Thermal ensembles and process inputs cover |ℓ| ≤ cutoff.
    #[serde(default = "default_cutoff")]
    pub cutoff: u32,
    #[serde(default)]
    pub beta_grid: BetaGrid,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    /// β̃ at which work distributions are reported.
    #[serde(default = "default_work_beta")]
    pub work_beta: f64,
    /// Information gain per run (nats) used by the feedback curve.
    #[serde(default = "default_information")]
    pub information: f64,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(invalid)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn input_range(&self) -> LRange {
        LRange::symmetric(self.cutoff)
    }

    /// Checks every sub-config; the message names the offending field.
    pub fn validate(&self) -> Result<(), CliError> {
        self.geometry.validate().map_err(invalid)?;
        self.process.validate().map_err(invalid)?;
        self.noise.validate().map_err(invalid)?;
        self.beta_grid.validate().map_err(invalid)?;
        self.solver.validate().map_err(invalid)?;
        if self.trials < 2 {
            return Err(invalid(format!("trials must be at least 2, got {}", self.trials)));
        }
        if !(self.work_beta.is_finite() && self.work_beta > 0.0) {
            return Err(invalid(format!("work_beta must be positive, got {}", self.work_beta)));
        }
        if !(self.information.is_finite() && self.information >= 0.0) {
            return Err(invalid(format!("information must be nonnegative, got {}", self.information)));
        }
        let kernel = self.process.kernel(self.input_range()).map_err(invalid)?;
        let out = kernel.output_range();
        let calib = self.geometry.ell_range;
        if !calib.contains_range(&out) {
            return Err(invalid(format!(
                "cutoff {} sends the process to ℓ′ in [{}, {}], outside geometry.ell_range [{}, {}]",
                self.cutoff,
                out.lo(),
                out.hi(),
                calib.lo(),
                calib.hi()
            )));
        }
        if self.process.demon_shift == 0 {
            return Err(invalid("process.demon_shift must be at least 1"));
        }
        let demon = demon_kernel(self.process.demon_shift, self.input_range()).map_err(invalid)?;
        if !calib.contains_range(&demon.output_range()) {
            return Err(invalid(format!(
                "process.demon_shift {} with cutoff {} leaves geometry.ell_range",
                self.process.demon_shift, self.cutoff
            )));
        }
        Ok(())
    }
}
