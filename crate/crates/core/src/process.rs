//! Row-stochastic transition kernels p(ℓ′|ℓ) between OAM orders.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Tolerance for row sums accepted by [`TransitionKernel::new`].
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Closed integer interval `lo..=hi` of ℓ values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawRange", into = "RawRange")]
pub struct LRange {
    lo: i64,
    hi: i64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRange {
    lo: i64,
    hi: i64,
}

impl TryFrom<RawRange> for LRange {
    type Error = Error;
    fn try_from(r: RawRange) -> Result<Self> {
        LRange::new(r.lo, r.hi)
    }
}

impl From<LRange> for RawRange {
    fn from(r: LRange) -> Self {
        RawRange { lo: r.lo, hi: r.hi }
    }
}

impl LRange {
    pub fn new(lo: i64, hi: i64) -> Result<Self> {
        if lo > hi {
            return Err(Error::Domain(format!("empty ℓ range [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    /// `[-l, l]`.
    pub fn symmetric(l: u32) -> Self {
        let l = i64::from(l);
        Self { lo: -l, hi: l }
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, ell: i64) -> bool {
        (self.lo..=self.hi).contains(&ell)
    }

    pub fn contains_range(&self, other: &LRange) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn iter(&self) -> std::ops::RangeInclusive<i64> {
        self.lo..=self.hi
    }

    /// Position of `ell` inside the range.
    pub fn index_of(&self, ell: i64) -> Option<usize> {
        self.contains(ell).then(|| (ell - self.lo) as usize)
    }

    pub fn translate(&self, t: i64) -> Self {
        Self { lo: self.lo + t, hi: self.hi + t }
    }
}

/// Dense conditional-probability matrix; rows are inputs ℓ, columns outputs ℓ′.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    input_range: LRange,
    output_range: LRange,
    entries: Vec<f64>,
}

impl TransitionKernel {
    /// Validates nonnegativity and unit row sums (within [`ROW_SUM_TOL`]).
    pub fn new(input_range: LRange, output_range: LRange, entries: Vec<f64>) -> Result<Self> {
        let cols = output_range.len();
        if entries.len() != input_range.len() * cols {
            return Err(Error::Input(format!(
                "{} entries for a {}x{} kernel",
                entries.len(),
                input_range.len(),
                cols
            )));
        }
        for (i, row) in entries.chunks(cols).enumerate() {
            let ell = input_range.lo + i as i64;
            if let Some(v) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::Domain(format!("row ℓ = {ell} has entry {v}")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Domain(format!("row ℓ = {ell} sums to {s}")));
            }
        }
        Ok(Self { input_range, output_range, entries })
    }

    pub fn from_rows(input_range: LRange, output_range: LRange, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.iter().any(|r| r.len() != output_range.len()) {
            return Err(Error::Input(format!("every row needs {} columns", output_range.len())));
        }
        Self::new(input_range, output_range, rows.concat())
    }

    pub fn identity(range: LRange) -> Self {
        let n = range.len();
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self { input_range: range, output_range: range, entries }
    }

    pub fn input_range(&self) -> LRange {
        self.input_range
    }

    pub fn output_range(&self) -> LRange {
        self.output_range
    }

    /// p(ℓ′|ℓ); zero when either index lies outside the kernel.
    pub fn get(&self, ell_in: i64, ell_out: i64) -> f64 {
        match (self.input_range.index_of(ell_in), self.output_range.index_of(ell_out)) {
            (Some(i), Some(j)) => self.entries[i * self.output_range.len() + j],
            _ => 0.0,
        }
    }

    pub fn row(&self, ell_in: i64) -> Option<&[f64]> {
        let cols = self.output_range.len();
        self.input_range.index_of(ell_in).map(|i| &self.entries[i * cols..(i + 1) * cols])
    }

    /// `(ℓ, row)` pairs in input order.
    pub fn rows(&self) -> impl Iterator<Item = (i64, &[f64])> + '_ {
        self.entries.chunks(self.output_range.len()).zip(self.input_range.iter()).map(|(r, l)| (l, r))
    }

    /// Nonzero `(ℓ′, p)` of one row.
    pub fn row_support(&self, ell_in: i64) -> impl Iterator<Item = (i64, f64)> + '_ {
        let lo = self.output_range.lo;
        self.row(ell_in)
            .unwrap_or(&[])
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(move |(j, p)| (lo + j as i64, *p))
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Same kernel with its columns widened to `output_range`, new columns zero.
    pub fn embed(&self, output_range: LRange) -> Result<Self> {
        if !output_range.contains_range(&self.output_range) {
            return Err(Error::Input(format!(
                "cannot embed outputs [{}, {}] into [{}, {}]",
                self.output_range.lo, self.output_range.hi, output_range.lo, output_range.hi
            )));
        }
        let cols = output_range.len();
        let offset = (self.output_range.lo - output_range.lo) as usize;
        let mut entries = vec![0.0; self.input_range.len() * cols];
        for (i, (_, row)) in self.rows().enumerate() {
            entries[i * cols + offset..i * cols + offset + row.len()].copy_from_slice(row);
        }
        Ok(Self { input_range: self.input_range, output_range, entries })
    }

    /// Largest |p(ℓ′|ℓ) − q(ℓ′|ℓ)| over the union of both supports.
    pub fn max_abs_diff(&self, other: &TransitionKernel) -> f64 {
        let lo_in = self.input_range.lo.min(other.input_range.lo);
        let hi_in = self.input_range.hi.max(other.input_range.hi);
        let lo_out = self.output_range.lo.min(other.output_range.lo);
        let hi_out = self.output_range.hi.max(other.output_range.hi);
        let mut worst: f64 = 0.0;
        for i in lo_in..=hi_in {
            for j in lo_out..=hi_out {
                worst = worst.max((self.get(i, j) - other.get(i, j)).abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    ShiftSuperposition,
    Demon,
    Identity,
    Custom,
}

fn default_shifts() -> Vec<(i64, f64)> {
    vec![(5, 0.5), (-5, 0.5)]
}

fn default_demon_shift() -> u32 {
    5
}

/// Declarative description of a process, as stored in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSpec {
    pub kind: ProcessKind,
    /// `(shift, weight)` branches for `shift_superposition` and `custom`.
    #[serde(default = "default_shifts")]
    pub shifts: Vec<(i64, f64)>,
    #[serde(default = "default_demon_shift")]
    pub demon_shift: u32,
    /// Free-energy change in units of ħω.
    #[serde(default)]
    pub delta_f: f64,
}

impl Default for ProcessSpec {
    fn default() -> Self {
        Self::shift_superposition()
    }
}

impl ProcessSpec {
    /// (L₊₅ + L₋₅)/√2, measured incoherently: ±5 with probability ½ each.
    pub fn shift_superposition() -> Self {
        Self { kind: ProcessKind::ShiftSuperposition, shifts: default_shifts(), demon_shift: 5, delta_f: 0.0 }
    }

    /// Sign-sorted feedback: ℓ < 0 gets +shift, ℓ > 0 gets −shift.
    pub fn demon(shift: u32) -> Self {
        Self { kind: ProcessKind::Demon, demon_shift: shift, ..Self::shift_superposition() }
    }

    pub fn identity() -> Self {
        Self { kind: ProcessKind::Identity, shifts: vec![(0, 1.0)], ..Self::shift_superposition() }
    }

    pub fn custom(shifts: Vec<(i64, f64)>, delta_f: f64) -> Self {
        Self { kind: ProcessKind::Custom, shifts, demon_shift: 5, delta_f }
    }

    /// Checks the spec; the error names the offending field.
    pub fn validate(&self) -> Result<()> {
        if !self.delta_f.is_finite() {
            return Err(Error::Domain("process.delta_f must be finite".into()));
        }
        if self.kind != ProcessKind::Custom && self.delta_f != 0.0 {
            return Err(Error::Domain("process.delta_f must be 0 for built-in processes".into()));
        }
        match self.kind {
            ProcessKind::ShiftSuperposition | ProcessKind::Custom => check_shifts(&self.shifts),
            ProcessKind::Demon if self.demon_shift == 0 => {
                Err(Error::Domain("process.demon_shift must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn kernel(&self, input_range: LRange) -> Result<TransitionKernel> {
        self.validate()?;
        match self.kind {
            ProcessKind::ShiftSuperposition | ProcessKind::Custom => {
                shift_superposition_kernel(&self.shifts, input_range)
            }
            ProcessKind::Demon => demon_kernel(self.demon_shift, input_range),
            ProcessKind::Identity => Ok(TransitionKernel::identity(input_range)),
        }
    }
}

fn check_shifts(shifts: &[(i64, f64)]) -> Result<()> {
    if shifts.is_empty() {
        return Err(Error::Domain("process.shifts is empty".into()));
    }
    if let Some((s, w)) = shifts.iter().find(|(_, w)| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Domain(format!("process.shifts: weight {w} for shift {s}")));
    }
    let total: f64 = shifts.iter().map(|(_, w)| w).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("process.shifts: weights sum to {total}")));
    }
    let mut seen: Vec<i64> = shifts.iter().map(|(s, _)| *s).collect();
    seen.sort_unstable();
    if seen.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Domain("process.shifts: duplicate shift".into()));
    }
    Ok(())
}

/// p(ℓ′|ℓ) = Σ_{s: ℓ+s=ℓ′} weight(s), with outputs spanning every reachable ℓ′.
pub fn shift_superposition_kernel(shifts: &[(i64, f64)], input_range: LRange) -> Result<TransitionKernel> {
    check_shifts(shifts)?;
    let min = shifts.iter().map(|(s, _)| *s).min().unwrap_or(0);
    let max = shifts.iter().map(|(s, _)| *s).max().unwrap_or(0);
    let output_range = LRange::new(input_range.lo + min, input_range.hi + max)?;
    let cols = output_range.len();
    let mut entries = vec![0.0; input_range.len() * cols];
    for (i, ell) in input_range.iter().enumerate() {
        for (s, w) in shifts {
            let j = (ell + s - output_range.lo) as usize;
            entries[i * cols + j] += w;
        }
    }
    Ok(TransitionKernel { input_range, output_range, entries })
}

/// Feedback kernel: ℓ < 0 → ℓ + shift, ℓ > 0 → ℓ − shift, ℓ = 0 → ±shift with ½ each.
pub fn demon_kernel(shift: u32, input_range: LRange) -> Result<TransitionKernel> {
    if shift == 0 {
        return Err(Error::Domain("demon shift must be at least 1".into()));
    }
    let s = i64::from(shift);
    let branches = |ell: i64| -> Vec<(i64, f64)> {
        match ell.signum() {
            -1 => vec![(ell + s, 1.0)],
            1 => vec![(ell - s, 1.0)],
            _ => vec![(s, 0.5), (-s, 0.5)],
        }
    };
    let reachable: Vec<i64> = input_range.iter().flat_map(|l| branches(l).into_iter().map(|b| b.0)).collect();
    let output_range = LRange::new(
        reachable.iter().copied().min().unwrap_or(0),
        reachable.iter().copied().max().unwrap_or(0),
    )?;
    let cols = output_range.len();
    let mut entries = vec![0.0; input_range.len() * cols];
    for (i, ell) in input_range.iter().enumerate() {
        for (out, p) in branches(ell) {
            entries[i * cols + (out - output_range.lo) as usize] += p;
        }
    }
    Ok(TransitionKernel { input_range, output_range, entries })
}

/// Σ_ℓ p(ℓ′|ℓ) for each output ℓ′.
pub fn column_sums(kernel: &TransitionKernel) -> BTreeMap<i64, f64> {
    let mut sums: BTreeMap<i64, f64> = kernel.output_range.iter().map(|l| (l, 0.0)).collect();
    for (_, row) in kernel.rows() {
        for (ell, p) in kernel.output_range.iter().zip(row) {
            *sums.get_mut(&ell).expect("column in range") += p;
        }
    }
    sums
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbMode {
    /// Mix each row with the uniform distribution over the outputs.
    Uniform,
    /// Mix each row with a seeded random distribution over the outputs.
    Jitter,
}

/// Leaks a fraction `leakage` of every row's mass onto the output range.
pub fn perturb_kernel(
    kernel: &TransitionKernel,
    leakage: f64,
    seed: u64,
    mode: PerturbMode,
) -> Result<TransitionKernel> {
    if !(0.0..=1.0).contains(&leakage) {
        return Err(Error::Domain(format!("leakage must lie in [0, 1], got {leakage}")));
    }
    if leakage == 0.0 {
        return Ok(kernel.clone());
    }
    let cols = kernel.output_range.len();
    let mut entries = Vec::with_capacity(kernel.entries.len());
    let mut rng = rng::stream(seed, tag::PERTURB, 0);
    for (_, row) in kernel.rows() {
        let leak: Vec<f64> = match mode {
            PerturbMode::Uniform => vec![1.0 / cols as f64; cols],
            PerturbMode::Jitter => {
                let raw: Vec<f64> = (0..cols).map(|_| rng.random::<f64>()).collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|u| u / s).collect()
            }
        };
        let mixed: Vec<f64> = row.iter().zip(&leak).map(|(p, u)| (1.0 - leakage) * p + leakage * u).collect();
        let s: f64 = mixed.iter().sum();
        entries.extend(mixed.into_iter().map(|p| p / s));
    }
    Ok(TransitionKernel { input_range: kernel.input_range, output_range: kernel.output_range, entries })
}
