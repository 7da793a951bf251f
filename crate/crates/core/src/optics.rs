//! Synthetic mode-sorter measurement channel.
//!
//! The sorter maps OAM order ℓ to a horizontal position on the camera; after
//! integrating over the vertical axis each order leaves a bump in an
//! `pixels`-bin marginal. Process outputs are rendered as intensity-weighted
//! sums of the calibration bumps (no interference between orders), then
//! perturbed by a per-bin Gaussian noise model.

use std::collections::BTreeMap;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::{LRange, TransitionKernel};
use crate::rng::{self, tag};

fn default_pixels() -> usize {
    80
}
fn default_center0() -> f64 {
    40.0
}
fn default_slope() -> f64 {
    2.5
}
fn default_width() -> f64 {
    1.8
}
fn default_ell_range() -> LRange {
    LRange::symmetric(15)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SorterGeometry {
    #[serde(default = "default_pixels")]
    pub pixels: usize,
    /// Pixel coordinate of the ℓ = 0 spot; bin k is centered at coordinate k.
    #[serde(default = "default_center0")]
    pub center0: f64,
    /// Pixels per unit ℓ.
    #[serde(default = "default_slope")]
    pub slope: f64,
    /// Gaussian standard deviation of a sorted spot, in pixels.
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default = "default_ell_range")]
    pub ell_range: LRange,
}

impl Default for SorterGeometry {
    fn default() -> Self {
        Self {
            pixels: default_pixels(),
            center0: default_center0(),
            slope: default_slope(),
            width: default_width(),
            ell_range: default_ell_range(),
        }
    }
}

impl SorterGeometry {
    pub fn center(&self, ell: i64) -> f64 {
        self.center0 + self.slope * ell as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.pixels == 0 {
            return Err(Error::Geometry("geometry.pixels must be positive".into()));
        }
        if !(self.slope.is_finite() && self.slope > 0.0) {
            return Err(Error::Geometry(format!("geometry.slope must be positive, got {}", self.slope)));
        }
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(Error::Geometry(format!("geometry.width must be positive, got {}", self.width)));
        }
        for ell in [self.ell_range.lo(), self.ell_range.hi()] {
            let c = self.center(ell);
            if !(c >= 0.0 && c < self.pixels as f64) {
                return Err(Error::Geometry(format!(
                    "geometry.center0: spot for ℓ = {ell} at {c} lies outside [0, {})",
                    self.pixels
                )));
            }
        }
        Ok(())
    }
}

/// Nonnegative camera marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityProfile {
    bins: Vec<f64>,
}

impl IntensityProfile {
    pub fn new(bins: Vec<f64>) -> Result<Self> {
        if let Some((k, v)) = bins.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!("bin {k} has intensity {v}")));
        }
        Ok(Self { bins })
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.bins.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.bins.iter().copied().fold(0.0, f64::max)
    }

    /// Index of the maximum; exact ties go to the bin farther from `reference`.
    pub fn peak_bin_from(&self, reference: f64) -> usize {
        let mut best = 0;
        for (k, v) in self.bins.iter().enumerate() {
            let b = self.bins[best];
            if *v > b || (*v == b && (k as f64 - reference).abs() > (best as f64 - reference).abs()) {
                best = k;
            }
        }
        best
    }

    /// Σ_k min(a_k, b_k).
    pub fn overlap(&self, other: &IntensityProfile) -> f64 {
        self.bins.iter().zip(&other.bins).map(|(a, b)| a.min(*b)).sum()
    }
}

/// One unit-power profile per ℓ in the geometry's range.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    geometry: SorterGeometry,
    profiles: Vec<IntensityProfile>,
}

impl CalibrationSet {
    pub fn geometry(&self) -> &SorterGeometry {
        &self.geometry
    }

    pub fn ell_range(&self) -> LRange {
        self.geometry.ell_range
    }

    pub fn pixels(&self) -> usize {
        self.geometry.pixels
    }

    pub fn profile(&self, ell: i64) -> Option<&IntensityProfile> {
        self.geometry.ell_range.index_of(ell).map(|i| &self.profiles[i])
    }

    /// Profiles in ℓ order: the rows of X.
    pub fn profiles(&self) -> &[IntensityProfile] {
        &self.profiles
    }

    /// Spot position with ties resolved away from the ℓ = 0 center.
    pub fn peak_bin(&self, ell: i64) -> Option<usize> {
        self.profile(ell).map(|p| p.peak_bin_from(self.geometry.center0))
    }
}

/// Discretized Gaussian bumps at `center0 + slope·ℓ`, normalized to unit sum.
pub fn calibration_profiles(geometry: &SorterGeometry) -> Result<CalibrationSet> {
    geometry.validate()?;
    let mut profiles = Vec::with_capacity(geometry.ell_range.len());
    for ell in geometry.ell_range.iter() {
        let c = geometry.center(ell);
        let raw: Vec<f64> = (0..geometry.pixels)
            .map(|k| {
                let z = (k as f64 - c) / geometry.width;
                (-0.5 * z * z).exp()
            })
            .collect();
        let s: f64 = raw.iter().sum();
        if s <= 0.0 {
            return Err(Error::Geometry(format!("geometry.width too small: spot for ℓ = {ell} has no power")));
        }
        profiles.push(IntensityProfile { bins: raw.into_iter().map(|v| v / s).collect() });
    }
    Ok(CalibrationSet { geometry: geometry.clone(), profiles })
}

/// Σ_ℓ′ w(ℓ′)·x_ℓ′: incoherent, intensity-additive mixing.
pub fn render_output(weights: &BTreeMap<i64, f64>, calib: &CalibrationSet) -> Result<IntensityProfile> {
    render_pairs(weights.iter().map(|(l, w)| (*l, *w)), calib)
}

fn render_pairs(weights: impl Iterator<Item = (i64, f64)>, calib: &CalibrationSet) -> Result<IntensityProfile> {
    let range = calib.ell_range();
    let mut bins = vec![0.0; calib.pixels()];
    let mut total = 0.0;
    for (ell, w) in weights {
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::Domain(format!("weight {w} for ℓ′ = {ell}")));
        }
        if w == 0.0 {
            continue;
        }
        let x = calib.profile(ell).ok_or(Error::OutOfRange { ell, lo: range.lo(), hi: range.hi() })?;
        for (b, v) in bins.iter_mut().zip(x.bins()) {
            *b += w * v;
        }
        total += w;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("output weights sum to {total}")));
    }
    Ok(IntensityProfile { bins })
}

fn default_rel_std() -> f64 {
    0.05
}
fn default_floor_frac() -> f64 {
    0.001
}

/// Per-bin σ_k = rel_std·μ_k + floor_frac·max_k μ_k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    #[serde(default = "default_rel_std")]
    pub rel_std: f64,
    #[serde(default = "default_floor_frac")]
    pub floor_frac: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { rel_std: default_rel_std(), floor_frac: default_floor_frac() }
    }
}

impl NoiseModel {
    pub const MAX_REL_STD: f64 = 0.10;

    pub fn none() -> Self {
        Self { rel_std: 0.0, floor_frac: 0.0 }
    }

    pub fn is_zero(&self) -> bool {
        self.rel_std == 0.0 && self.floor_frac == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=Self::MAX_REL_STD).contains(&self.rel_std) {
            return Err(Error::Domain(format!("noise.rel_std must lie in [0, 0.10], got {}", self.rel_std)));
        }
        if !(self.floor_frac.is_finite() && self.floor_frac >= 0.0) {
            return Err(Error::Domain(format!("noise.floor_frac must be nonnegative, got {}", self.floor_frac)));
        }
        Ok(())
    }
}

/// Independent normal draw per bin, clamped at zero.
pub fn apply_noise(profile: &IntensityProfile, model: &NoiseModel, seed: u64) -> IntensityProfile {
    let floor = model.floor_frac * profile.max();
    let mut rng = rng::stream(seed, tag::NOISE, 0);
    let bins = profile
        .bins
        .iter()
        .map(|mu| {
            let sd = model.rel_std * mu + floor;
            let z: f64 = StandardNormal.sample(&mut rng);
            if sd == 0.0 {
                *mu
            } else {
                (mu + sd * z).max(0.0)
            }
        })
        .collect();
    IntensityProfile { bins }
}

/// Output profiles keyed by input ℓ.
pub type Observations = BTreeMap<i64, IntensityProfile>;

/// Synthetic Y: for each input ℓ, noise(render(kernel row ℓ)).
pub fn simulate_observations(
    kernel: &TransitionKernel,
    calib: &CalibrationSet,
    model: &NoiseModel,
    seed: u64,
) -> Result<Observations> {
    let range = calib.ell_range();
    let out = kernel.output_range();
    if !range.contains_range(&out) {
        let ell = if out.lo() < range.lo() { out.lo() } else { out.hi() };
        return Err(Error::OutOfRange { ell, lo: range.lo(), hi: range.hi() });
    }
    kernel
        .rows()
        .map(|(ell, row)| {
            let clean = render_pairs(out.iter().zip(row.iter().copied()), calib)?;
            let noisy = apply_noise(&clean, model, rng::derive_seed_signed(seed, tag::OBSERVE, ell));
            Ok((ell, noisy))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::shift_superposition_kernel;

    fn calib() -> CalibrationSet {
        calibration_profiles(&SorterGeometry::default()).unwrap()
    }

    #[test]
    fn default_peaks() {
        let c = calib();
        assert_eq!(c.peak_bin(0), Some(40));
        assert_eq!(c.peak_bin(-15), Some(2));
        assert_eq!(c.peak_bin(15), Some(78));
        for p in c.profiles() {
            assert!((p.total() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn adjacent_orders_overlap() {
        let c = calib();
        for w in c.profiles().windows(2) {
            assert!(w[0].overlap(&w[1]) > 0.15);
        }
    }

    #[test]
    fn bad_geometry() {
        let g = SorterGeometry { center0: 10.0, ..Default::default() };
        assert!(matches!(calibration_profiles(&g), Err(Error::Geometry(_))));
        let g = SorterGeometry { width: 0.0, ..Default::default() };
        assert!(calibration_profiles(&g).is_err());
        let g = SorterGeometry { slope: -1.0, ..Default::default() };
        assert!(calibration_profiles(&g).is_err());
    }

    #[test]
    fn render_single_order() {
        let c = calib();
        let p = render_output(&[(5, 1.0)].into(), &c).unwrap();
        assert_eq!(&p, c.profile(5).unwrap());
    }

    #[test]
    fn render_two_bumps() {
        let c = calib();
        let p = render_output(&[(-12, 0.5), (-2, 0.5)].into(), &c).unwrap();
        let (a, b) = (c.geometry().center(-12) as usize, c.geometry().center(-2) as usize);
        assert!(p.bins()[a] > 10.0 * p.bins()[(a + b) / 2]);
        assert!(p.bins()[b] > 10.0 * p.bins()[(a + b) / 2]);
        assert!((p.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn render_rejects_out_of_range() {
        let c = calib();
        assert!(matches!(render_output(&[(16, 1.0)].into(), &c), Err(Error::OutOfRange { ell: 16, .. })));
        assert!(render_output(&[(0, 0.7)].into(), &c).is_err());
    }

    #[test]
    fn zero_noise_is_exact() {
        let c = calib();
        let p = c.profile(3).unwrap();
        assert_eq!(&apply_noise(p, &NoiseModel::none(), 42), p);
    }

    #[test]
    fn noise_bounds_validated() {
        assert!(NoiseModel { rel_std: 0.2, floor_frac: 0.0 }.validate().is_err());
        assert!(NoiseModel { rel_std: 0.05, floor_frac: -1.0 }.validate().is_err());
        assert!(NoiseModel::default().validate().is_ok());
    }

    #[test]
    fn observations_of_split_mode() {
        let c = calib();
        let k = shift_superposition_kernel(&[(5, 0.5), (-5, 0.5)], LRange::symmetric(7)).unwrap();
        let obs = simulate_observations(&k, &c, &NoiseModel::none(), 0).unwrap();
        let y = &obs[&3];
        // Local maxima at the ℓ′ = −2 and ℓ′ = 8 spots.
        let peaks: Vec<usize> = (1..79).filter(|&i| y.bins()[i] > y.bins()[i - 1] && y.bins()[i] >= y.bins()[i + 1]).collect();
        assert_eq!(peaks, vec![35, 60]);

        let id = TransitionKernel::identity(LRange::symmetric(7));
        let obs = simulate_observations(&id, &c, &NoiseModel::none(), 0).unwrap();
        for (ell, y) in &obs {
            assert_eq!(y, c.profile(*ell).unwrap());
        }
    }

    #[test]
    fn observation_range_checked() {
        let c = calib();
        let k = shift_superposition_kernel(&[(10, 1.0)], LRange::symmetric(7)).unwrap();
        assert!(matches!(simulate_observations(&k, &c, &NoiseModel::none(), 0), Err(Error::OutOfRange { .. })));
    }
}
