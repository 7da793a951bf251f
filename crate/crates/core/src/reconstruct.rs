//! Recovery of a transition matrix A from Y ≈ A·X.
//!
//! Rows decouple: each observed output profile y is explained as a convex
//! combination of the calibration profiles, i.e.
//!
//! ```text
//! minimize ½‖y − Σ_j a_j x_j‖²   subject to  a_j ≥ 0,  Σ_j a_j = 1
//! ```
//!
//! solved by projected gradient on the probability simplex with
//! Barzilai–Borwein steps. A fixed 1/L step replaces any BB step that fails
//! to decrease the objective. Every few iterations the current support is
//! solved exactly as an equality-constrained problem; the result is accepted
//! only if it satisfies the KKT conditions, which also cleans tiny positive
//! entries to exact zeros.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::optics::{CalibrationSet, Observations};
use crate::process::{LRange, TransitionKernel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    /// Bound on the projected-gradient norm ‖a − P(a − ∇f)‖₂.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    10_000
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: default_tol(), max_iter: default_max_iter() }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::Domain(format!("solver.tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Domain("solver.max_iter must be positive".into()));
        }
        Ok(())
    }
}

const POLISH_EVERY: usize = 25;

/// Euclidean projection onto {a ≥ 0, Σa = 1}.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Normal-equation data of one least-squares row: Q = X·Xᵀ, b = X·y.
struct Normal<'a> {
    q: &'a [f64],
    n: usize,
}

impl Normal<'_> {
    fn grad(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let row = &self.q[i * self.n..(i + 1) * self.n];
                row.iter().zip(a).map(|(q, x)| q * x).sum::<f64>() - b[i]
            })
            .collect()
    }

    // ½aᵀQa − bᵀa; the constant ½yᵀy is dropped.
    fn objective(&self, a: &[f64], b: &[f64]) -> f64 {
        let g = self.grad(a, b);
        // ½aᵀQa − bᵀa = ½aᵀ(Qa − b) − ½bᵀa
        0.5 * a.iter().zip(&g).map(|(x, gi)| x * gi).sum::<f64>() - 0.5 * a.iter().zip(b).map(|(x, bi)| x * bi).sum::<f64>()
    }
}

fn pg_norm(a: &[f64], g: &[f64]) -> f64 {
    let v: Vec<f64> = a.iter().zip(g).map(|(x, gi)| x - gi).collect();
    let p = project_simplex(&v);
    a.iter().zip(&p).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Largest violation of the simplex KKT conditions for weights `a` with
/// gradient `g`: |g_j − μ| on the support and (μ − g_j)₊ off it, where μ is
/// the mean gradient over the support.
pub fn kkt_violation(a: &[f64], g: &[f64]) -> f64 {
    let support: Vec<usize> = (0..a.len()).filter(|&j| a[j] > 0.0).collect();
    if support.is_empty() {
        return f64::INFINITY;
    }
    let mu = support.iter().map(|&j| g[j]).sum::<f64>() / support.len() as f64;
    (0..a.len())
        .map(|j| if a[j] > 0.0 { (g[j] - mu).abs() } else { (mu - g[j]).max(0.0) })
        .fold(0.0, f64::max)
}

/// Solves M·x = r in place by Gaussian elimination with partial pivoting.
fn solve_dense(mut m: Vec<f64>, mut r: Vec<f64>) -> Option<Vec<f64>> {
    let n = r.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i * n + c].abs().total_cmp(&m[j * n + c].abs()))?;
        if m[p * n + c].abs() < 1e-300 {
            return None;
        }
        if p != c {
            for k in 0..n {
                m.swap(c * n + k, p * n + k);
            }
            r.swap(c, p);
        }
        for i in c + 1..n {
            let f = m[i * n + c] / m[c * n + c];
            if f != 0.0 {
                for k in c..n {
                    m[i * n + k] -= f * m[c * n + k];
                }
                r[i] -= f * r[c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| m[i * n + k] * x[k]).sum();
        x[i] = (r[i] - s) / m[i * n + i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Exact minimizer restricted to the support of `a` (with Σ = 1), if it is
/// feasible and KKT-optimal within `tol`.
fn polish(normal: &Normal<'_>, b: &[f64], a: &[f64], tol: f64) -> Option<Vec<f64>> {
    let n = normal.n;
    let s: Vec<usize> = (0..n).filter(|&j| a[j] > 0.0).collect();
    let m = s.len();
    // [Q_SS  −1; 1ᵀ 0] [a_S; μ] = [b_S; 1]
    let mut sys = vec![0.0; (m + 1) * (m + 1)];
    let mut rhs = vec![0.0; m + 1];
    for (r, &i) in s.iter().enumerate() {
        for (c, &j) in s.iter().enumerate() {
            sys[r * (m + 1) + c] = normal.q[i * n + j];
        }
        sys[r * (m + 1) + m] = -1.0;
        sys[m * (m + 1) + r] = 1.0;
        rhs[r] = b[i];
    }
    rhs[m] = 1.0;
    let sol = solve_dense(sys, rhs)?;
    if sol[..m].iter().any(|v| *v <= 0.0) {
        return None;
    }
    let mut out = vec![0.0; n];
    for (r, &j) in s.iter().enumerate() {
        out[j] = sol[r];
    }
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    let g = normal.grad(&out, b);
    (pg_norm(&out, &g) <= tol && kkt_violation(&out, &g) <= tol).then_some(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowSolution {
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Projected-gradient norm at the returned iterate.
    pub pg_norm: f64,
}

/// Gram matrix Q_ij = ⟨x_i, x_j⟩ of the calibration columns.
pub fn gram(columns: &[&[f64]]) -> Vec<f64> {
    let n = columns.len();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v: f64 = columns[i].iter().zip(columns[j]).map(|(a, b)| a * b).sum();
            q[i * n + j] = v;
            q[j * n + i] = v;
        }
    }
    q
}

/// Simplex-constrained least squares for one observed profile, starting from
/// the uniform row.
pub fn fit_simplex_row(columns: &[&[f64]], y: &[f64], opts: &SolverOptions) -> RowSolution {
    let q = gram(columns);
    fit_simplex_row_with_gram(&q, columns, y, opts)
}

fn fit_simplex_row_with_gram(q: &[f64], columns: &[&[f64]], y: &[f64], opts: &SolverOptions) -> RowSolution {
    let n = columns.len();
    let normal = Normal { q, n };
    let b: Vec<f64> = columns.iter().map(|x| x.iter().zip(y).map(|(a, b)| a * b).sum()).collect();
    // Gershgorin bound on the largest eigenvalue of Q.
    let lip = (0..n)
        .map(|i| q[i * n..(i + 1) * n].iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);

    let mut a = vec![1.0 / n as f64; n];
    let mut g = normal.grad(&a, &b);
    let mut f = normal.objective(&a, &b);
    let mut step = 1.0 / lip;
    let mut best = (f, a.clone());

    for it in 0..opts.max_iter {
        let res = pg_norm(&a, &g);
        if res <= opts.tol {
            return RowSolution { weights: a, iterations: it, converged: true, pg_norm: res };
        }
        if it % POLISH_EVERY == POLISH_EVERY - 1 {
            if let Some(p) = polish(&normal, &b, &a, opts.tol) {
                let gp = normal.grad(&p, &b);
                let r = pg_norm(&p, &gp);
                return RowSolution { weights: p, iterations: it + 1, converged: true, pg_norm: r };
            }
        }

        let trial_point = |s: f64| -> Vec<f64> {
            let v: Vec<f64> = a.iter().zip(&g).map(|(x, gi)| x - s * gi).collect();
            project_simplex(&v)
        };
        let mut next = trial_point(step);
        let mut f_next = normal.objective(&next, &b);
        if f_next > f {
            next = trial_point(1.0 / lip);
            f_next = normal.objective(&next, &b);
        }
        let g_next = normal.grad(&next, &b);
        let s: Vec<f64> = next.iter().zip(&a).map(|(x, y)| x - y).collect();
        let dg: Vec<f64> = g_next.iter().zip(&g).map(|(x, y)| x - y).collect();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        let sy: f64 = s.iter().zip(&dg).map(|(x, y)| x * y).sum();
        step = if sy > 0.0 { (ss / sy).clamp(1e-3 / lip, 1e6 / lip) } else { 1.0 / lip };

        a = next;
        g = g_next;
        f = f_next;
        if f < best.0 {
            best = (f, a.clone());
        }
    }

    if let Some(p) = polish(&normal, &b, &a, opts.tol) {
        let gp = normal.grad(&p, &b);
        let r = pg_norm(&p, &gp);
        return RowSolution { weights: p, iterations: opts.max_iter, converged: true, pg_norm: r };
    }
    let res = pg_norm(&a, &g);
    if res <= opts.tol {
        return RowSolution { weights: a, iterations: opts.max_iter, converged: true, pg_norm: res };
    }
    let weights = best.1;
    let gb = normal.grad(&weights, &b);
    RowSolution { pg_norm: pg_norm(&weights, &gb), weights, iterations: opts.max_iter, converged: false }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub kernel: TransitionKernel,
    /// Frobenius norm of Y − A·X for the assembled A.
    pub residual: f64,
    /// Largest per-row iteration count.
    pub iterations: usize,
    pub converged: bool,
}

fn input_range_of(observations: &Observations, pixels: usize) -> Result<LRange> {
    let (Some(lo), Some(hi)) = (observations.keys().next(), observations.keys().next_back()) else {
        return Err(Error::Input("no observations".into()));
    };
    let range = LRange::new(*lo, *hi)?;
    if range.len() != observations.len() {
        return Err(Error::Input(format!("observed inputs are not contiguous over [{lo}, {hi}]")));
    }
    if let Some((ell, y)) = observations.iter().find(|(_, y)| y.len() != pixels) {
        return Err(Error::Input(format!(
            "observation for ℓ = {ell} has {} bins, calibration has {pixels}",
            y.len()
        )));
    }
    Ok(range)
}

/// Fits one simplex row per observed input ℓ; the output range is the
/// calibration range.
pub fn fit_transition_matrix(
    calib: &CalibrationSet,
    observations: &Observations,
    opts: &SolverOptions,
) -> Result<FitReport> {
    opts.validate()?;
    let input_range = input_range_of(observations, calib.pixels())?;
    let columns: Vec<&[f64]> = calib.profiles().iter().map(|p| p.bins()).collect();
    let q = gram(&columns);

    let mut entries = Vec::with_capacity(input_range.len() * columns.len());
    let mut iterations = 0;
    let mut converged = true;
    for y in observations.values() {
        let sol = fit_simplex_row_with_gram(&q, &columns, y.bins(), opts);
        iterations = iterations.max(sol.iterations);
        converged &= sol.converged;
        let total: f64 = sol.weights.iter().sum();
        entries.extend(sol.weights.iter().map(|v| v / total));
    }
    let kernel = TransitionKernel::new(input_range, calib.ell_range(), entries)?;
    let residual = residual_norm(&kernel, calib, observations)?;
    Ok(FitReport { kernel, residual, iterations, converged })
}

/// ‖Y − A·X‖_F over the observed inputs.
pub fn residual_norm(kernel: &TransitionKernel, calib: &CalibrationSet, observations: &Observations) -> Result<f64> {
    let input_range = input_range_of(observations, calib.pixels())?;
    if input_range != kernel.input_range() {
        return Err(Error::Input(format!(
            "kernel inputs [{}, {}] differ from observed inputs [{}, {}]",
            kernel.input_range().lo(),
            kernel.input_range().hi(),
            input_range.lo(),
            input_range.hi()
        )));
    }
    let k = kernel.embed(calib.ell_range()).map_err(|_| {
        Error::Input("kernel outputs exceed the calibration range".into())
    })?;
    let mut ss = 0.0;
    for ((_, row), y) in k.rows().zip(observations.values()) {
        let mut model = vec![0.0; calib.pixels()];
        for (w, x) in row.iter().zip(calib.profiles()) {
            if *w != 0.0 {
                for (m, v) in model.iter_mut().zip(x.bins()) {
                    *m += w * v;
                }
            }
        }
        ss += model.iter().zip(y.bins()).map(|(m, v)| (v - m).powi(2)).sum::<f64>();
    }
    Ok(ss.sqrt())
}

/// KKT violation of one fitted row against its observation.
pub fn row_kkt_violation(calib: &CalibrationSet, y: &[f64], weights: &[f64]) -> f64 {
    let columns: Vec<&[f64]> = calib.profiles().iter().map(|p| p.bins()).collect();
    let q = gram(&columns);
    let normal = Normal { q: &q, n: columns.len() };
    let b: Vec<f64> = columns.iter().map(|x| x.iter().zip(y).map(|(a, b)| a * b).sum()).collect();
    kkt_violation(weights, &normal.grad(weights, &b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{calibration_profiles, simulate_observations, NoiseModel, SorterGeometry};
    use crate::process::shift_superposition_kernel;

    fn calib() -> CalibrationSet {
        calibration_profiles(&SorterGeometry::default()).unwrap()
    }

    #[test]
    fn projection_basics() {
        assert_eq!(project_simplex(&[0.2, 0.3, 0.5]), vec![0.2, 0.3, 0.5]);
        assert_eq!(project_simplex(&[5.0, 0.0, 0.0]), vec![1.0, 0.0, 0.0]);
        let p = project_simplex(&[0.5, 0.5, 0.5, -3.0]);
        for v in &p[..3] {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(p[3], 0.0);
    }

    #[test]
    fn identity_recovered() {
        let c = calib();
        let id = TransitionKernel::identity(LRange::symmetric(7));
        let obs = simulate_observations(&id, &c, &NoiseModel::none(), 0).unwrap();
        let rep = fit_transition_matrix(&c, &obs, &SolverOptions::default()).unwrap();
        assert!(rep.converged);
        assert!(rep.kernel.max_abs_diff(&id) < 1e-6);
        assert!(rep.residual < 1e-9);
    }

    #[test]
    fn split_process_recovered() {
        let c = calib();
        let k = shift_superposition_kernel(&[(5, 0.5), (-5, 0.5)], LRange::symmetric(7)).unwrap();
        let obs = simulate_observations(&k, &c, &NoiseModel::none(), 0).unwrap();
        let rep = fit_transition_matrix(&c, &obs, &SolverOptions::default()).unwrap();
        assert!(rep.converged);
        for (ell, row) in rep.kernel.rows() {
            for (j, p) in rep.kernel.output_range().iter().zip(row) {
                if j == ell + 5 || j == ell - 5 {
                    assert!((p - 0.5).abs() < 1e-6);
                } else {
                    assert!(*p <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn residual_examples() {
        let c = calib();
        let k = shift_superposition_kernel(&[(5, 0.5), (-5, 0.5)], LRange::symmetric(7)).unwrap();
        let obs = simulate_observations(&k, &c, &NoiseModel::none(), 0).unwrap();
        assert!(residual_norm(&k, &c, &obs).unwrap() < 1e-12);
        let id = TransitionKernel::identity(LRange::symmetric(7));
        assert!(residual_norm(&id, &c, &obs).unwrap() > 0.1);
    }

    #[test]
    fn dimension_errors() {
        let c = calib();
        let id = TransitionKernel::identity(LRange::symmetric(2));
        let mut obs = simulate_observations(&id, &c, &NoiseModel::none(), 0).unwrap();
        let wrong = TransitionKernel::identity(LRange::symmetric(1));
        assert!(matches!(residual_norm(&wrong, &c, &obs), Err(Error::Input(_))));
        obs.remove(&0);
        assert!(matches!(fit_transition_matrix(&c, &obs, &SolverOptions::default()), Err(Error::Input(_))));
        assert!(fit_transition_matrix(&c, &Observations::new(), &SolverOptions::default()).is_err());
        let short = crate::optics::IntensityProfile::new(vec![1.0; 10]).unwrap();
        let bad: Observations = [(0, short)].into();
        assert!(matches!(fit_transition_matrix(&c, &bad, &SolverOptions::default()), Err(Error::Input(_))));
    }

    #[test]
    fn iteration_cap_reports_nonconvergence() {
        let c = calib();
        let k = shift_superposition_kernel(&[(5, 0.5), (-5, 0.5)], LRange::symmetric(7)).unwrap();
        let obs = simulate_observations(&k, &c, &NoiseModel::default(), 3).unwrap();
        let opts = SolverOptions { tol: 1e-14, max_iter: 2 };
        let rep = fit_transition_matrix(&c, &obs, &opts).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 2);
        for (_, row) in rep.kernel.rows() {
            assert!(((row.iter().sum::<f64>()) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dense_solver() {
        let x = solve_dense(vec![0.0, 2.0, 1.0, 1.0], vec![4.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
        assert!(solve_dense(vec![1.0, 2.0, 2.0, 4.0], vec![1.0, 1.0]).is_none());
    }
}
