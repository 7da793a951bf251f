mod common;

use oam_thermo::oscillator::thermal_distribution;
use oam_thermo::process::{demon_kernel, perturb_kernel, shift_superposition_kernel};
use oam_thermo::stats::{
    exp_avg, fluctuation_curve, mean_work, monte_carlo_band, tail_complete_cutoff, work_distribution,
};
use oam_thermo::{BetaGrid, LRange, McConfig, NoiseModel, PerturbMode, SolverOptions, SorterGeometry, TransitionKernel};
use proptest::prelude::*;

fn split(l: u32) -> TransitionKernel {
    shift_superposition_kernel(&[(5, 0.5), (-5, 0.5)], LRange::symmetric(l)).unwrap()
}

/// Convex combination of permutation matrices on [−l, l].
fn doubly_stochastic(l: u32) -> impl Strategy<Value = TransitionKernel> {
    let n = 2 * l as usize + 1;
    let perm = Just((0..n).collect::<Vec<usize>>()).prop_shuffle();
    prop::collection::vec((perm, 0.05f64..1.0), 1..5).prop_map(move |parts| {
        let total: f64 = parts.iter().map(|(_, w)| w).sum();
        let mut m = vec![vec![0.0; n]; n];
        for (p, w) in &parts {
            for (i, &j) in p.iter().enumerate() {
                m[i][j] += w / total;
            }
        }
        TransitionKernel::from_rows(LRange::symmetric(l), LRange::symmetric(l), &m).unwrap()
    })
}

proptest! {
    #[test]
    fn distributions_are_normalized(beta in 0.05f64..5.0, l in 0u32..20, leak in 0.0f64..0.5, seed in any::<u64>()) {
        let ens = thermal_distribution(beta, l).unwrap();
        for k in [split(l), demon_kernel(5, LRange::symmetric(l)).unwrap(),
                  perturb_kernel(&split(l), leak, seed, PerturbMode::Jitter).unwrap()] {
            prop_assert!((work_distribution(&ens, &k).unwrap().total() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unital_kernels_satisfy_jarzynski(k in doubly_stochastic(6), beta in 0.05f64..5.0) {
        let ens = thermal_distribution(beta, 6).unwrap();
        let dist = work_distribution(&ens, &k).unwrap();
        prop_assert!((exp_avg(&dist, beta, 0.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn matches_double_sum(beta in 0.05f64..5.0, l in 0u32..12) {
        let ens = thermal_distribution(beta, l).unwrap();
        let li = l as i64;
        let s = work_distribution(&ens, &split(l)).unwrap();
        prop_assert!((exp_avg(&s, beta, 0.0) - common::double_sum(beta, li, (-li - 5, li + 5), common::split)).abs() < 1e-12);
        prop_assert!((mean_work(&s) - common::mean_work(beta, li, (-li - 5, li + 5), common::split)).abs() < 1e-12);
        let d = work_distribution(&ens, &demon_kernel(5, LRange::symmetric(l)).unwrap()).unwrap();
        let wide = (-li - 5, li + 5);
        prop_assert!((exp_avg(&d, beta, 0.0) - common::double_sum(beta, li, wide, common::demon)).abs() < 1e-12);
        prop_assert!((mean_work(&d) - common::mean_work(beta, li, wide, common::demon)).abs() < 1e-12);
    }
}

#[test]
fn identity_and_wide_split_satisfy_jarzynski() {
    let grid = BetaGrid::default().values();
    let big = tail_complete_cutoff(grid[0]);
    let id = fluctuation_curve(&TransitionKernel::identity(LRange::symmetric(7)), 7, &grid, 0.0, 0.0).unwrap();
    let wide = fluctuation_curve(&split(big), big, &grid, 0.0, 0.0).unwrap();
    for r in id.iter().chain(&wide) {
        assert!((r.value - 1.0).abs() < 1e-9, "β̃ = {}: {}", r.beta_hw, r.value);
    }
}

#[test]
fn second_law_and_demon_bound() {
    let grid = BetaGrid::default().values();
    for k in [split(7), TransitionKernel::identity(LRange::symmetric(7))] {
        for r in fluctuation_curve(&k, 7, &grid, 0.0, 0.0).unwrap() {
            assert!(r.mean_work >= -1e-15, "β̃ = {}: ⟨W⟩ = {}", r.beta_hw, r.mean_work);
        }
    }
    let demon = demon_kernel(5, LRange::symmetric(7)).unwrap();
    for r in fluctuation_curve(&demon, 7, &grid, 0.0, 0.0).unwrap() {
        assert!(r.beta_hw * r.mean_work >= -std::f64::consts::LN_2, "β̃ = {}", r.beta_hw);
    }
}

#[test]
fn leakage_pulls_the_average_down() {
    let ens = thermal_distribution(2.0, 7).unwrap();
    let ideal = exp_avg(&work_distribution(&ens, &split(7)).unwrap(), 2.0, 0.0);
    let noisy = perturb_kernel(&split(7).embed(LRange::symmetric(15)).unwrap(), 0.1, 0, PerturbMode::Uniform).unwrap();
    let perturbed = exp_avg(&work_distribution(&ens, &noisy).unwrap(), 2.0, 0.0);
    assert!(perturbed < ideal, "{perturbed} vs {ideal}");
}

fn mc(noise: NoiseModel, trials: usize, seed: u64) -> McConfig {
    McConfig {
        geometry: SorterGeometry::default(),
        kernel: split(7),
        noise,
        cutoff: 7,
        beta_grid: vec![0.5, 1.0, 2.0],
        trials,
        seed,
        delta_f: 0.0,
        information: 0.0,
        solver: SolverOptions::default(),
    }
}

#[test]
fn noiseless_band_collapses_to_the_curve() {
    let cfg = mc(NoiseModel::none(), 5, 1);
    let band = monte_carlo_band(&cfg).unwrap();
    let curve = fluctuation_curve(&cfg.kernel, 7, &cfg.beta_grid, 0.0, 0.0).unwrap();
    assert_eq!(band.std, vec![0.0; 3]);
    for (m, r) in band.mean.iter().zip(&curve) {
        assert!((m - r.value).abs() < 1e-7);
    }
}

#[test]
fn band_is_seed_deterministic() {
    let a = monte_carlo_band(&mc(NoiseModel::default(), 8, 3)).unwrap();
    assert_eq!(a, monte_carlo_band(&mc(NoiseModel::default(), 8, 3)).unwrap());
    assert_ne!(a, monte_carlo_band(&mc(NoiseModel::default(), 8, 4)).unwrap());
    assert_eq!(a.excluded, 0);
    assert!(a.std.iter().all(|s| *s > 0.0));
}
