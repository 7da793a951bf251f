//! Two-point-measurement work statistics.
//!
//! A transition ℓ → ℓ′ does work W = (|ℓ′| − |ℓ|)ħω and occurs with
//! probability p_ℓ·p(ℓ′|ℓ). From the resulting distribution we evaluate the
//! Jarzynski average ⟨e^{−β(W−ΔF)}⟩, its feedback-corrected form
//! ⟨e^{−σ−I}⟩ and the mean work, and propagate camera noise into confidence
//! bands by Monte Carlo.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{calibration_profiles, simulate_observations, NoiseModel, SorterGeometry};
use crate::oscillator::{thermal_distribution, ThermalEnsemble};
use crate::process::TransitionKernel;
use crate::reconstruct::{fit_transition_matrix, SolverOptions};
use crate::rng::{self, tag};

/// Work in units of ħω for ℓ → ℓ′.
pub fn work_value(ell_in: i64, ell_out: i64) -> f64 {
    work_quanta(ell_in, ell_out) as f64
}

/// Integer form of [`work_value`].
pub fn work_quanta(ell_in: i64, ell_out: i64) -> i64 {
    ell_out.abs() - ell_in.abs()
}

/// Discrete P(W) with integer support in units of ħω.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WorkDistribution {
    atoms: BTreeMap<i64, f64>,
}

impl WorkDistribution {
    pub fn atoms(&self) -> &BTreeMap<i64, f64> {
        &self.atoms
    }

    pub fn prob(&self, w: i64) -> f64 {
        self.atoms.get(&w).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.atoms.values().sum()
    }
}

/// P(W) = Σ_{ℓ,ℓ′: |ℓ′|−|ℓ| = W} p_ℓ·p(ℓ′|ℓ).
pub fn work_distribution(ensemble: &ThermalEnsemble, kernel: &TransitionKernel) -> Result<WorkDistribution> {
    let support = ensemble.support();
    let inputs = kernel.input_range();
    if !(inputs.contains(*support.start()) && inputs.contains(*support.end())) {
        return Err(Error::Input(format!(
            "ensemble support [{}, {}] exceeds kernel inputs [{}, {}]",
            support.start(),
            support.end(),
            inputs.lo(),
            inputs.hi()
        )));
    }
    let mut atoms = BTreeMap::new();
    for (ell, p) in ensemble.iter() {
        for (out, q) in kernel.row_support(ell) {
            *atoms.entry(work_quanta(ell, out)).or_insert(0.0) += p * q;
        }
    }
    Ok(WorkDistribution { atoms })
}

/// ⟨e^{−σ}⟩ = Σ_W P(W)·e^{−β̃(W − ΔF)}.
pub fn exp_avg(dist: &WorkDistribution, beta_hw: f64, delta_f: f64) -> f64 {
    dist.atoms.iter().map(|(w, p)| p * (-beta_hw * (*w as f64 - delta_f)).exp()).sum()
}

/// ⟨e^{−σ−I}⟩ for a fixed information gain `information` (nats) per run.
///
/// # Panics
///
/// If `information` is negative.
pub fn demon_avg(dist: &WorkDistribution, beta_hw: f64, delta_f: f64, information: f64) -> f64 {
    assert!(information >= 0.0, "information must be nonnegative, got {information}");
    (-information).exp() * exp_avg(dist, beta_hw, delta_f)
}

pub fn mean_work(dist: &WorkDistribution) -> f64 {
    dist.atoms.iter().map(|(w, p)| *w as f64 * p).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluctuationResult {
    pub beta_hw: f64,
    /// ⟨e^{−σ}⟩, or ⟨e^{−σ−I}⟩ when `information > 0`.
    pub value: f64,
    pub mean_work: f64,
    pub delta_f: f64,
    pub information: f64,
}

/// Evenly spaced β̃ values from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaGrid {
    #[serde(default = "default_beta_min")]
    pub min: f64,
    #[serde(default = "default_beta_max")]
    pub max: f64,
    #[serde(default = "default_beta_step")]
    pub step: f64,
}

fn default_beta_min() -> f64 {
    0.05
}
fn default_beta_max() -> f64 {
    5.0
}
fn default_beta_step() -> f64 {
    0.05
}

impl Default for BetaGrid {
    fn default() -> Self {
        Self { min: default_beta_min(), max: default_beta_max(), step: default_beta_step() }
    }
}

impl BetaGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.min > 0.0) {
            return Err(Error::Domain(format!("beta_grid.min must be positive, got {}", self.min)));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::Domain(format!("beta_grid.step must be positive, got {}", self.step)));
        }
        if !(self.max.is_finite() && self.max >= self.min) {
            return Err(Error::Domain(format!("beta_grid.max must be at least min, got {}", self.max)));
        }
        Ok(())
    }

    /// Grid points, snapped to a 1e-12 lattice so that e.g. 2.0 is exact.
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| ((self.min + i as f64 * self.step) * 1e12).round() / 1e12).collect()
    }
}

/// Cutoff whose omitted Boltzmann tail is below 1e-12 at `beta_min`.
pub fn tail_complete_cutoff(beta_min: f64) -> u32 {
    (30.0 / beta_min).ceil() as u32
}

/// Jarzynski (or feedback) average over a β̃ grid with a truncated ensemble.
pub fn fluctuation_curve(
    kernel: &TransitionKernel,
    cutoff: u32,
    beta_grid: &[f64],
    delta_f: f64,
    information: f64,
) -> Result<Vec<FluctuationResult>> {
    if information < 0.0 {
        return Err(Error::Domain(format!("information must be nonnegative, got {information}")));
    }
    beta_grid
        .iter()
        .map(|&beta| {
            let ens = thermal_distribution(beta, cutoff)?;
            let dist = work_distribution(&ens, kernel)?;
            let value = if information > 0.0 {
                demon_avg(&dist, beta, delta_f, information)
            } else {
                exp_avg(&dist, beta, delta_f)
            };
            Ok(FluctuationResult { beta_hw: beta, value, mean_work: mean_work(&dist), delta_f, information })
        })
        .collect()
}

/// Everything one Monte Carlo uncertainty run needs.
#[derive(Debug, Clone)]
pub struct McConfig {
    pub geometry: SorterGeometry,
    /// Process whose noisy observations are refit every trial.
    pub kernel: TransitionKernel,
    pub noise: NoiseModel,
    pub cutoff: u32,
    pub beta_grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub delta_f: f64,
    pub information: f64,
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyBand {
    pub beta_grid: Vec<f64>,
    pub mean: Vec<f64>,
    /// Sample standard deviation (n − 1 denominator).
    pub std: Vec<f64>,
    pub ci95_lo: Vec<f64>,
    pub ci95_hi: Vec<f64>,
    /// Trials that entered the statistics.
    pub trials: usize,
    /// Trials dropped because the fit did not converge.
    pub excluded: usize,
}

impl UncertaintyBand {
    pub const Z95: f64 = 1.96;

    /// Band with zero width around a deterministic curve.
    pub fn from_curve(curve: &[FluctuationResult]) -> Self {
        let beta_grid: Vec<f64> = curve.iter().map(|r| r.beta_hw).collect();
        let mean: Vec<f64> = curve.iter().map(|r| r.value).collect();
        Self {
            std: vec![0.0; mean.len()],
            ci95_lo: mean.clone(),
            ci95_hi: mean.clone(),
            beta_grid,
            mean,
            trials: 1,
            excluded: 0,
        }
    }

    fn from_samples(beta_grid: Vec<f64>, samples: &[Vec<f64>], excluded: usize) -> Self {
        let n = samples.len() as f64;
        let points = beta_grid.len();
        let mut mean = vec![0.0; points];
        let mut std = vec![0.0; points];
        for i in 0..points {
            // Shifted by the first sample: identical samples give exactly zero spread.
            let origin = samples[0][i];
            let (sum, sum_sq) = samples.iter().fold((0.0, 0.0), |(s, q), x| {
                let d = x[i] - origin;
                (s + d, q + d * d)
            });
            mean[i] = origin + sum / n;
            std[i] = ((sum_sq - sum * sum / n) / (n - 1.0)).max(0.0).sqrt();
        }
        let ci95_lo = mean.iter().zip(&std).map(|(m, s)| m - Self::Z95 * s).collect();
        let ci95_hi = mean.iter().zip(&std).map(|(m, s)| m + Self::Z95 * s).collect();
        Self { beta_grid, mean, std, ci95_lo, ci95_hi, trials: samples.len(), excluded }
    }

    /// Grid index of `beta_hw`, if it is a grid point (to 1e-9).
    pub fn index_of(&self, beta_hw: f64) -> Option<usize> {
        self.beta_grid.iter().position(|b| (b - beta_hw).abs() < 1e-9)
    }
}

/// Regenerates noisy observations, refits the kernel and recomputes the
/// fluctuation curve `trials` times; trials are seeded from `(seed, index)`
/// so the result does not depend on scheduling.
pub fn monte_carlo_band(config: &McConfig) -> Result<UncertaintyBand> {
    if config.trials < 2 {
        return Err(Error::Domain(format!("trials must be at least 2, got {}", config.trials)));
    }
    let calib = calibration_profiles(&config.geometry)?;
    let outcomes: Vec<Option<Vec<f64>>> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| -> Result<Option<Vec<f64>>> {
            let seed = rng::derive_seed(config.seed, tag::MC_TRIAL, t);
            let obs = simulate_observations(&config.kernel, &calib, &config.noise, seed)?;
            let fit = fit_transition_matrix(&calib, &obs, &config.solver)?;
            if !fit.converged {
                return Ok(None);
            }
            let curve =
                fluctuation_curve(&fit.kernel, config.cutoff, &config.beta_grid, config.delta_f, config.information)?;
            Ok(Some(curve.into_iter().map(|r| r.value).collect()))
        })
        .collect::<Result<_>>()?;
    let excluded = outcomes.iter().filter(|o| o.is_none()).count();
    let samples: Vec<Vec<f64>> = outcomes.into_iter().flatten().collect();
    if samples.len() < 2 {
        return Err(Error::NonConvergence(format!(
            "only {} of {} Monte Carlo trials converged",
            samples.len(),
            config.trials
        )));
    }
    Ok(UncertaintyBand::from_samples(config.beta_grid.clone(), &samples, excluded))
}
