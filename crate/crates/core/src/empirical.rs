//! Weighted empirical distributions and first-order dominance comparisons.
//!
//! [`compare_cdfs`] evaluates `F_a - F_b` on a bounded grid and classifies the
//! relation; [`dominance_bands`] adds pointwise bootstrap percentile bands.
//! Differences within the report's `tolerance` are treated as ties when
//! counting crossings, so a noisy sample can be asked for crossing *regions*
//! rather than every flicker of sign. With `tolerance = 0` the comparison is
//! exact.

use std::fmt::Write as _;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

pub const DEFAULT_GRID_SIZE: usize = 512;
pub const DEFAULT_REPLICATES: usize = 1000;
pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmpiricalError {
    #[error("sample is empty")]
    EmptySample,
    #[error("sample weights sum to zero")]
    ZeroWeight,
    #[error("invalid point ({value}, {weight}): values must be finite and weights non-negative")]
    InvalidPoint { value: f64, weight: f64 },
    #[error("grid size must be at least 2, got {0}")]
    GridTooSmall(usize),
    #[error("at least 100 bootstrap replicates are required, got {0}")]
    TooFewReplicates(usize),
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("tolerance must be finite and non-negative, got {0}")]
    InvalidTolerance(f64),
}

/// A weighted sample with a right-continuous step CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    /// Raw points sorted by value; weights normalized to sum to one.
    points: Vec<(f64, f64)>,
    /// Distinct support values.
    support: Vec<f64>,
    /// Cumulative normalized weight at each support value.
    cum: Vec<f64>,
    effective_size: f64,
}

/// Builds a weighted ECDF. Zero-weight points are kept for resampling
/// bookkeeping but carry no mass.
pub fn empirical_cdf(
    sample: impl IntoIterator<Item = (f64, f64)>,
) -> Result<EmpiricalDistribution, EmpiricalError> {
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (value, weight) in sample {
        if !value.is_finite() || !weight.is_finite() || weight < 0.0 {
            return Err(EmpiricalError::InvalidPoint { value, weight });
        }
        points.push((value, weight));
    }
    if points.is_empty() {
        return Err(EmpiricalError::EmptySample);
    }
    let total: f64 = points.iter().map(|p| p.1).sum();
    if total <= 0.0 {
        return Err(EmpiricalError::ZeroWeight);
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let sum_sq: f64 = points.iter().map(|p| (p.1 / total).powi(2)).sum();
    for p in &mut points {
        p.1 /= total;
    }

    let mut support: Vec<f64> = Vec::new();
    let mut cum: Vec<f64> = Vec::new();
    let mut acc = 0.0;
    for &(v, w) in &points {
        acc += w;
        if w == 0.0 {
            continue;
        }
        if support.last() == Some(&v) {
            *cum.last_mut().unwrap() = acc;
        } else {
            support.push(v);
            cum.push(acc);
        }
    }
    *cum.last_mut().unwrap() = 1.0;
    Ok(EmpiricalDistribution {
        points,
        support,
        cum,
        effective_size: 1.0 / sum_sq,
    })
}

impl EmpiricalDistribution {
    /// Equal-weight sample.
    pub fn unweighted(values: &[f64]) -> Result<Self, EmpiricalError> {
        empirical_cdf(values.iter().map(|&v| (v, 1.0)))
    }

    pub fn cdf(&self, v: f64) -> f64 {
        let idx = self.support.partition_point(|&x| x <= v);
        if idx == 0 {
            0.0
        } else {
            self.cum[idx - 1]
        }
    }

    /// Smallest support value with `F >= p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let idx = self.cum.partition_point(|&c| c < p - 1e-12);
        self.support[idx.min(self.support.len() - 1)]
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    /// Sorted points with normalized weights.
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Kish effective sample size `(Σw)² / Σw²`.
    pub fn effective_size(&self) -> f64 {
        self.effective_size
    }

    pub fn mean(&self) -> f64 {
        self.points.iter().map(|&(v, w)| v * w).sum()
    }

    /// Same weights, values moved by `shift`.
    pub fn shifted(&self, shift: f64) -> Self {
        empirical_cdf(self.points.iter().map(|&(v, w)| (v + shift, w)))
            .expect("shifting preserves validity")
    }

    /// Draws `len()` points with probability proportional to weight and
    /// returns the resampled CDF evaluated at `grid`.
    fn resampled_cdf_at(&self, grid: &[f64], cum_weights: &[f64], rng: &mut impl Rng) -> Vec<f64> {
        let n = self.points.len();
        let mut counts = vec![0u32; n];
        for _ in 0..n {
            let u: f64 = rng.random::<f64>();
            let idx = cum_weights.partition_point(|&c| c <= u).min(n - 1);
            counts[idx] += 1;
        }
        let mut prefix = Vec::with_capacity(n);
        let mut acc = 0u32;
        for c in counts {
            acc += c;
            prefix.push(acc);
        }
        grid.iter()
            .map(|&g| {
                let k = self.points.partition_point(|p| p.0 <= g);
                if k == 0 {
                    0.0
                } else {
                    prefix[k - 1] as f64 / n as f64
                }
            })
            .collect()
    }

    fn cumulative_weights(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out: Vec<f64> = self
            .points
            .iter()
            .map(|p| {
                acc += p.1;
                acc
            })
            .collect();
        *out.last_mut().unwrap() = 1.0;
        out
    }
}

/// Two-sample Dvoretzky–Kiefer–Wolfowitz noise floor: with probability at
/// least `1 - 2·alpha` neither ECDF strays from its population CDF by more
/// than its share of the returned bound, regardless of dependence between
/// the samples.
pub fn dkw_tolerance(n_a: f64, n_b: f64, alpha: f64) -> f64 {
    let c = ((2.0 / alpha).ln() / 2.0).sqrt();
    c * (1.0 / n_a.sqrt() + 1.0 / n_b.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    ADominates,
    BDominates,
    Cross,
    Equal,
}

impl Verdict {
    pub fn swapped(self) -> Self {
        match self {
            Verdict::ADominates => Verdict::BDominates,
            Verdict::BDominates => Verdict::ADominates,
            other => other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::ADominates => "ADominates",
            Verdict::BDominates => "BDominates",
            Verdict::Cross => "Cross",
            Verdict::Equal => "Equal",
        }
    }
}

/// Pointwise comparison of two CDFs on a common grid. `diff[i]` is
/// `F_a(grid[i]) - F_b(grid[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct DominanceReport {
    pub grid: Vec<f64>,
    pub diff: Vec<f64>,
    pub crossings: Vec<f64>,
    pub verdict: Verdict,
    pub tolerance: f64,
    pub bands: Option<Vec<(f64, f64)>>,
    pub level: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareOptions {
    pub grid_size: usize,
    pub tolerance: f64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            grid_size: DEFAULT_GRID_SIZE,
            tolerance: 0.0,
        }
    }
}

fn sign_of(d: f64, tol: f64) -> i8 {
    if d > tol {
        1
    } else if d < -tol {
        -1
    } else {
        0
    }
}

/// Sign changes of `diff` (ties skipped): `(last index of old sign, first
/// index of new sign)` pairs.
fn crossing_brackets(diff: &[f64], tol: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut last: Option<(usize, i8)> = None;
    for (i, &d) in diff.iter().enumerate() {
        let s = sign_of(d, tol);
        if s == 0 {
            continue;
        }
        if let Some((j, prev)) = last {
            if prev != s {
                out.push((j, i));
            }
        }
        last = Some((i, s));
    }
    out
}

fn verdict_from(diff: &[f64], tol: f64) -> Verdict {
    let pos = diff.iter().any(|&d| sign_of(d, tol) > 0);
    let neg = diff.iter().any(|&d| sign_of(d, tol) < 0);
    match (neg, pos) {
        (true, true) => Verdict::Cross,
        (true, false) => Verdict::ADominates,
        (false, true) => Verdict::BDominates,
        (false, false) => Verdict::Equal,
    }
}

/// Compares `F_a` against `F_b` on the merged support, thinned to at most
/// `grid_size` quantile-spaced points plus every point bracketing a crossing.
pub fn compare_cdfs(
    a: &EmpiricalDistribution,
    b: &EmpiricalDistribution,
    opts: CompareOptions,
) -> Result<DominanceReport, EmpiricalError> {
    if opts.grid_size < 2 {
        return Err(EmpiricalError::GridTooSmall(opts.grid_size));
    }
    if !opts.tolerance.is_finite() || opts.tolerance < 0.0 {
        return Err(EmpiricalError::InvalidTolerance(opts.tolerance));
    }
    let tol = opts.tolerance;
    let mut full: Vec<f64> = a.support.iter().chain(&b.support).copied().collect();
    full.sort_by(f64::total_cmp);
    full.dedup();
    let fa: Vec<f64> = full.iter().map(|&v| a.cdf(v)).collect();
    let fb: Vec<f64> = full.iter().map(|&v| b.cdf(v)).collect();
    let diff_full: Vec<f64> = fa.iter().zip(&fb).map(|(x, y)| x - y).collect();
    let brackets = crossing_brackets(&diff_full, tol);
    let verdict = verdict_from(&diff_full, tol);

    let keep: Vec<usize> = if full.len() <= opts.grid_size {
        (0..full.len()).collect()
    } else {
        let pooled: Vec<f64> = fa.iter().zip(&fb).map(|(x, y)| 0.5 * (x + y)).collect();
        let mut idx: Vec<usize> = (0..opts.grid_size)
            .map(|k| {
                let level = k as f64 / (opts.grid_size - 1) as f64;
                pooled
                    .partition_point(|&h| h < level - 1e-12)
                    .min(full.len() - 1)
            })
            .collect();
        idx.push(0);
        idx.push(full.len() - 1);
        for &(i, j) in &brackets {
            idx.push(i);
            idx.push(j);
        }
        // Keep the strongest deviation on each side so the thinned grid
        // still witnesses the verdict.
        let argmax = (0..full.len()).max_by(|&i, &j| diff_full[i].total_cmp(&diff_full[j]));
        let argmin = (0..full.len()).min_by(|&i, &j| diff_full[i].total_cmp(&diff_full[j]));
        idx.extend(argmax);
        idx.extend(argmin);
        idx.sort_unstable();
        idx.dedup();
        idx
    };

    let grid: Vec<f64> = keep.iter().map(|&i| full[i]).collect();
    let diff: Vec<f64> = keep.iter().map(|&i| diff_full[i]).collect();
    let crossings = brackets
        .iter()
        .map(|&(i, j)| 0.5 * (full[i] + full[j]))
        .collect();
    Ok(DominanceReport {
        grid,
        diff,
        crossings,
        verdict,
        tolerance: tol,
        bands: None,
        level: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandOptions {
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
    pub compare: CompareOptions,
}

impl Default for BandOptions {
    fn default() -> Self {
        Self {
            replicates: DEFAULT_REPLICATES,
            level: DEFAULT_LEVEL,
            seed: 0,
            compare: CompareOptions::default(),
        }
    }
}

/// [`compare_cdfs`] plus pointwise bootstrap percentile bands for `F_a - F_b`.
///
/// Each sample is resampled independently with replacement, with selection
/// probability proportional to weight. Replicate `r` draws from its own
/// ChaCha stream `r` under `seed`, so the result does not depend on how the
/// replicates are scheduled across threads.
pub fn dominance_bands(
    a: &EmpiricalDistribution,
    b: &EmpiricalDistribution,
    opts: BandOptions,
) -> Result<DominanceReport, EmpiricalError> {
    if opts.replicates < 100 {
        return Err(EmpiricalError::TooFewReplicates(opts.replicates));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(EmpiricalError::InvalidLevel(opts.level));
    }
    let mut report = compare_cdfs(a, b, opts.compare)?;
    let cw_a = a.cumulative_weights();
    let cw_b = b.cumulative_weights();
    let grid = &report.grid;

    let replicates: Vec<Vec<f64>> = (0..opts.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(r as u64);
            let ra = a.resampled_cdf_at(grid, &cw_a, &mut rng);
            let rb = b.resampled_cdf_at(grid, &cw_b, &mut rng);
            ra.iter().zip(&rb).map(|(x, y)| x - y).collect()
        })
        .collect();

    let alpha = 1.0 - opts.level;
    let r = opts.replicates;
    let lo_rank = ((alpha / 2.0) * r as f64).floor() as usize;
    let hi_rank = (((1.0 - alpha / 2.0) * r as f64).ceil() as usize).clamp(1, r) - 1;
    let mut column = vec![0.0; r];
    let bands = (0..grid.len())
        .map(|g| {
            for (slot, rep) in column.iter_mut().zip(&replicates) {
                *slot = rep[g];
            }
            column.sort_by(f64::total_cmp);
            (column[lo_rank.min(r - 1)], column[hi_rank])
        })
        .collect();
    report.bands = Some(bands);
    report.level = Some(opts.level);
    Ok(report)
}

impl DominanceReport {
    /// Same comparison with the roles of `a` and `b` exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            diff: self.diff.iter().map(|d| -d).collect(),
            crossings: self.crossings.clone(),
            verdict: self.verdict.swapped(),
            tolerance: self.tolerance,
            bands: self
                .bands
                .as_ref()
                .map(|b| b.iter().map(|&(lo, hi)| (-hi, -lo)).collect()),
            level: self.level,
        }
    }

    /// Whether the band at grid index `i` excludes zero. `None` without bands.
    pub fn band_excludes_zero(&self, i: usize) -> Option<bool> {
        self.bands
            .as_ref()
            .map(|b| b[i].0 > 0.0 || b[i].1 < 0.0)
    }

    /// True when bands exist and every one of them contains zero.
    pub fn bands_contain_zero_everywhere(&self) -> bool {
        match &self.bands {
            Some(b) => b.iter().all(|&(lo, hi)| lo <= 0.0 && hi >= 0.0),
            None => false,
        }
    }

    /// Sign of `diff` at grid index `i` after applying the tie tolerance.
    pub fn sign_at(&self, i: usize) -> i8 {
        sign_of(self.diff[i], self.tolerance)
    }

    /// Header comment line used by the CSV serialization.
    pub fn header_comment(&self) -> String {
        let mut s = format!("# verdict={} crossings=", self.verdict.as_str());
        let joined: Vec<String> = self.crossings.iter().map(|c| c.to_string()).collect();
        s.push_str(&joined.join(";"));
        let _ = write!(s, " tolerance={}", self.tolerance);
        if let Some(level) = self.level {
            let _ = write!(s, " level={level}");
        }
        s
    }

    /// Writes `grid_value,diff,band_lo,band_hi` rows behind a header comment.
    /// Band columns are empty when no bands were computed.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", self.header_comment())?;
        writeln!(w, "grid_value,diff,band_lo,band_hi")?;
        for i in 0..self.grid.len() {
            match &self.bands {
                Some(b) => writeln!(
                    w,
                    "{},{},{},{}",
                    self.grid[i], self.diff[i], b[i].0, b[i].1
                )?,
                None => writeln!(w, "{},{},,", self.grid[i], self.diff[i])?,
            }
        }
        Ok(())
    }
}
