//! Spectrum and thermal states of the 2-D isotropic harmonic oscillator
//! restricted to the radial ground state (p = 0).
//!
//! With p = 0 the energy is ε_ℓ = (|ℓ| + 1)ħω, so every level above the ground
//! state is doubly degenerate (±ℓ) and a projective OAM measurement is an
//! energy measurement.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeIndex {
    /// Azimuthal quantum number.
    pub ell: i64,
    /// Radial quantum number.
    pub p: u32,
}

impl ModeIndex {
    pub fn new(ell: i64) -> Self {
        Self { ell, p: 0 }
    }

    /// General (ℓ, p) mode. Only [`energy`] accepts p > 0; the rest of the
    /// crate works in the p = 0 subspace.
    pub fn with_radial(ell: i64, p: u32) -> Self {
        Self { ell, p }
    }
}

/// Energy in units of ħω.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct EnergyValue(pub f64);

/// ε = (|ℓ| + 2p + 1)ħω.
pub fn energy(mode: ModeIndex) -> EnergyValue {
    EnergyValue((mode.ell.unsigned_abs() + 2 * u64::from(mode.p) + 1) as f64)
}

/// Support of a thermal sum over ℓ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cutoff {
    /// |ℓ| ≤ L.
    Finite(u32),
    Unbounded,
}

fn check_beta(beta_hw: f64) -> Result<()> {
    if beta_hw.is_finite() && beta_hw > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("beta_hw must be positive and finite, got {beta_hw}")))
    }
}

/// Σ_{|ℓ|≤L} e^{−β̃(|ℓ|+1)}, or the geometric-series closed form
/// e^{−β̃}(1 + e^{−β̃})/(1 − e^{−β̃}) for an unbounded cutoff.
pub fn partition_sum(beta_hw: f64, cutoff: Cutoff) -> Result<f64> {
    check_beta(beta_hw)?;
    let ground = (-beta_hw).exp();
    Ok(match cutoff {
        Cutoff::Unbounded => ground / (0.5 * beta_hw).tanh(),
        Cutoff::Finite(l) => ground * relative_partition_sum(beta_hw, l),
    })
}

// Σ_{|ℓ|≤L} e^{−β̃|ℓ|}, summed tail-first.
fn relative_partition_sum(beta_hw: f64, cutoff: u32) -> f64 {
    let tail: f64 = (1..=cutoff).rev().map(|k| (-beta_hw * f64::from(k)).exp()).sum();
    1.0 + 2.0 * tail
}

/// Truncated, renormalized Boltzmann distribution over |ℓ| ≤ cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalEnsemble {
    beta_hw: f64,
    cutoff: u32,
    /// P(ℓ) for a single state with |ℓ| = k, indexed by k.
    level: Vec<f64>,
}

/// Builds p_ℓ ∝ e^{−β̃(|ℓ|+1)} on |ℓ| ≤ cutoff, normalized by direct summation.
pub fn thermal_distribution(beta_hw: f64, cutoff: u32) -> Result<ThermalEnsemble> {
    check_beta(beta_hw)?;
    let z = relative_partition_sum(beta_hw, cutoff);
    let level = (0..=cutoff).map(|k| (-beta_hw * f64::from(k)).exp() / z).collect();
    Ok(ThermalEnsemble { beta_hw, cutoff, level })
}

impl ThermalEnsemble {
    pub fn beta_hw(&self) -> f64 {
        self.beta_hw
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    /// p_ℓ; zero outside the support.
    pub fn prob(&self, ell: i64) -> f64 {
        self.level.get(ell.unsigned_abs() as usize).copied().unwrap_or(0.0)
    }

    /// `(ℓ, p_ℓ)` pairs ordered from −cutoff to +cutoff.
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let l = i64::from(self.cutoff);
        (-l..=l).map(move |ell| (ell, self.prob(ell)))
    }

    pub fn support(&self) -> std::ops::RangeInclusive<i64> {
        let l = i64::from(self.cutoff);
        -l..=l
    }

    /// Expected per-state occupation n·p_ℓ for each |ℓ|, the quantity
    /// [`fit_boltzmann`] takes.
    pub fn occupation_counts(&self, n: f64) -> BTreeMap<u32, f64> {
        (0..=self.cutoff).map(|k| (k, n * self.level[k as usize])).collect()
    }
}

/// Draws `n` modes by inverse CDF over ℓ = −cutoff..=cutoff.
pub fn sample_modes(ensemble: &ThermalEnsemble, n: usize, seed: u64) -> Vec<ModeIndex> {
    let mut cdf: Vec<(i64, f64)> = Vec::with_capacity(2 * ensemble.cutoff as usize + 1);
    let mut acc = 0.0;
    for (ell, p) in ensemble.iter() {
        acc += p;
        cdf.push((ell, acc));
    }
    let last = cdf.len() - 1;
    let mut rng = rng::stream(seed, tag::SAMPLE_MODES, 0);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * acc;
            let idx = cdf.partition_point(|&(_, c)| c <= u).min(last);
            ModeIndex::new(cdf[idx].0)
        })
        .collect()
}

/// Histogram of |ℓ| divided by level degeneracy (1 for ℓ = 0, 2 otherwise),
/// with explicit zero bins up to `cutoff`.
pub fn occupation_histogram(samples: &[ModeIndex], cutoff: u32) -> BTreeMap<u32, f64> {
    let mut hist: BTreeMap<u32, f64> = (0..=cutoff).map(|k| (k, 0.0)).collect();
    for m in samples {
        let k = m.ell.unsigned_abs() as u32;
        *hist.entry(k).or_insert(0.0) += if k == 0 { 1.0 } else { 0.5 };
    }
    hist
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoltzmannFit {
    pub beta_hw_est: f64,
    /// Prefactor N of N·e^{−β̃(|ℓ|+1)} on the normalized histogram.
    pub normalization: f64,
    /// NaN when the fit has no residual degrees of freedom.
    pub stderr_beta: f64,
}

/// Least-squares fit of the normalized histogram to N·e^{−β̃(|ℓ|+1)}.
///
/// `counts` maps |ℓ| to a per-state occupation count (see
/// [`occupation_histogram`]). All bins enter with unit weight, zero bins
/// included. Nondecreasing data yields β̃ ≤ 0 without error.
pub fn fit_boltzmann(counts: &BTreeMap<u32, f64>) -> Result<BoltzmannFit> {
    if let Some((k, c)) = counts.iter().find(|(_, c)| !(c.is_finite() && **c >= 0.0)) {
        return Err(Error::Domain(format!("count for |ℓ| = {k} is {c}")));
    }
    let nonzero = counts.values().filter(|c| **c > 0.0).count();
    if nonzero < 2 {
        return Err(Error::UnderdeterminedFit(format!(
            "need at least two nonzero |ℓ| bins, got {nonzero}"
        )));
    }
    let total: f64 = counts.values().sum();
    let pts: Vec<(f64, f64)> = counts.iter().map(|(k, c)| (f64::from(*k) + 1.0, c / total)).collect();

    // Log-linear start on the nonzero bins.
    let logs: Vec<(f64, f64)> = pts.iter().filter(|(_, y)| *y > 0.0).map(|(x, y)| (*x, y.ln())).collect();
    let m = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / m;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let mut beta = -sxy / sxx;
    let mut norm = (my + beta * mx).exp();

    let rss = |n: f64, b: f64| -> f64 { pts.iter().map(|(x, y)| (n * (-b * x).exp() - y).powi(2)).sum() };

    // Levenberg–Marquardt on (N, β̃).
    let mut lambda = 1e-3;
    let mut cost = rss(norm, beta);
    for _ in 0..500 {
        let (mut a11, mut a12, mut a22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (x, y) in &pts {
            let e = (-beta * x).exp();
            let r = norm * e - y;
            let (j1, j2) = (e, -norm * x * e);
            a11 += j1 * j1;
            a12 += j1 * j2;
            a22 += j2 * j2;
            g1 += j1 * r;
            g2 += j2 * r;
        }
        if cost == 0.0 || (g1.abs() + g2.abs()) < 1e-18 {
            break;
        }
        let mut improved = false;
        while lambda < 1e12 {
            let (d11, d22) = (a11 * (1.0 + lambda), a22 * (1.0 + lambda));
            let det = d11 * d22 - a12 * a12;
            let dn = -(d22 * g1 - a12 * g2) / det;
            let db = -(d11 * g2 - a12 * g1) / det;
            let (n_new, b_new) = (norm + dn, beta + db);
            let c_new = rss(n_new, b_new);
            if c_new < cost {
                let small = dn.abs() <= 1e-15 * norm.abs().max(1e-300) && db.abs() <= 1e-15 * beta.abs().max(1.0);
                norm = n_new;
                beta = b_new;
                cost = c_new;
                lambda = (lambda * 0.1).max(1e-12);
                improved = !small;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }

    let dof = pts.len() as f64 - 2.0;
    let stderr_beta = if dof > 0.0 {
        let (mut a11, mut a12, mut a22) = (0.0, 0.0, 0.0);
        for (x, _) in &pts {
            let e = (-beta * x).exp();
            let (j1, j2) = (e, -norm * x * e);
            a11 += j1 * j1;
            a12 += j1 * j2;
            a22 += j2 * j2;
        }
        let det = a11 * a22 - a12 * a12;
        (cost / dof * a11 / det).sqrt()
    } else {
        f64::NAN
    };

    Ok(BoltzmannFit { beta_hw_est: beta, normalization: norm, stderr_beta })
}
