use oam_thermo::optics::{calibration_profiles, simulate_observations};
use oam_thermo::process::shift_superposition_kernel;
use oam_thermo::reconstruct::{fit_simplex_row, fit_transition_matrix, residual_norm, row_kkt_violation};
use oam_thermo::{LRange, NoiseModel, SolverOptions, SorterGeometry, TransitionKernel};
use proptest::prelude::*;

/// Rows with a random support size, so both interior and boundary optima occur.
fn simplex_matrix() -> impl Strategy<Value = TransitionKernel> {
    prop::collection::vec(prop::collection::vec((0.0f64..1.0, prop::bool::weighted(0.4)), 31), 15).prop_map(|rows| {
        let rows: Vec<Vec<f64>> = rows
            .into_iter()
            .map(|row| {
                let mut r: Vec<f64> = row.iter().map(|(u, keep)| if *keep { *u } else { 0.0 }).collect();
                if r.iter().sum::<f64>() == 0.0 {
                    r[15] = 1.0;
                }
                let s: f64 = r.iter().sum();
                r.into_iter().map(|v| v / s).collect()
            })
            .collect();
        TransitionKernel::from_rows(LRange::symmetric(7), LRange::symmetric(15), &rows).unwrap()
    })
}

fn split() -> TransitionKernel {
    shift_superposition_kernel(&[(5, 0.5), (-5, 0.5)], LRange::symmetric(7)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn noiseless_data_is_recovered(truth in simplex_matrix()) {
        let calib = calibration_profiles(&SorterGeometry::default()).unwrap();
        let obs = simulate_observations(&truth, &calib, &NoiseModel::none(), 0).unwrap();
        let fit = fit_transition_matrix(&calib, &obs, &SolverOptions::default()).unwrap();
        prop_assert!(fit.converged);
        prop_assert!(fit.kernel.max_abs_diff(&truth) <= 1e-6, "error {}", fit.kernel.max_abs_diff(&truth));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn noisy_fits_are_certified(truth in simplex_matrix(), seed in any::<u64>()) {
        let calib = calibration_profiles(&SorterGeometry::default()).unwrap();
        let opts = SolverOptions::default();
        let obs = simulate_observations(&truth, &calib, &NoiseModel::default(), seed).unwrap();
        let fit = fit_transition_matrix(&calib, &obs, &opts).unwrap();
        prop_assert!(fit.converged);
        for (ell, row) in fit.kernel.rows() {
            prop_assert!(row.iter().all(|v| *v >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            let kkt = row_kkt_violation(&calib, obs[&ell].bins(), row);
            prop_assert!(kkt <= opts.tol, "row {}: KKT violation {}", ell, kkt);
        }
        let true_residual = residual_norm(&truth, &calib, &obs).unwrap();
        prop_assert!(fit.residual <= true_residual + 1e-12);
    }

    #[test]
    fn column_order_does_not_matter(seed in any::<u64>(), ell in -7i64..=7, rot in 1usize..31) {
        let calib = calibration_profiles(&SorterGeometry::default()).unwrap();
        let obs = simulate_observations(&split(), &calib, &NoiseModel::default(), seed).unwrap();
        let y = obs[&ell].bins();
        let cols: Vec<&[f64]> = calib.profiles().iter().map(|p| p.bins()).collect();
        let n = cols.len();
        // A rotation composed with a reversal exercises a non-trivial permutation.
        let perm: Vec<usize> = (0..n).map(|i| (n - 1 - i + rot) % n).collect();
        let permuted: Vec<&[f64]> = perm.iter().map(|&j| cols[j]).collect();
        let opts = SolverOptions::default();
        let a = fit_simplex_row(&cols, y, &opts);
        let b = fit_simplex_row(&permuted, y, &opts);
        for (i, &j) in perm.iter().enumerate() {
            prop_assert!((b.weights[i] - a.weights[j]).abs() < 1e-8);
        }
    }
}

#[test]
fn residual_examples() {
    let calib = calibration_profiles(&SorterGeometry::default()).unwrap();
    let obs = simulate_observations(&split(), &calib, &NoiseModel::none(), 0).unwrap();
    assert!(residual_norm(&split(), &calib, &obs).unwrap() < 1e-12);
    let id = TransitionKernel::identity(LRange::symmetric(7)).embed(LRange::symmetric(15)).unwrap();
    assert!(residual_norm(&id, &calib, &obs).unwrap() > 0.0);
}

#[test]
fn fit_is_seed_deterministic() {
    let calib = calibration_profiles(&SorterGeometry::default()).unwrap();
    let obs = simulate_observations(&split(), &calib, &NoiseModel::default(), 5).unwrap();
    let opts = SolverOptions::default();
    assert_eq!(fit_transition_matrix(&calib, &obs, &opts).unwrap(), fit_transition_matrix(&calib, &obs, &opts).unwrap());
}
