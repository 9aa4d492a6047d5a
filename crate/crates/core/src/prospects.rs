//! Discrete lotteries and the preference criteria defined over them.
//!
//! A [`Lottery`] is a finite set of monetary outcomes with probabilities. On
//! top of it this module provides expected utility, probability-weighted
//! utility, τ-quantile preferences (with maxmin and maxmax as the two
//! extremes), mean-preserving spreads and first-order stochastic dominance.
//!
//! Everything here is immutable after construction and free of shared state.

use std::cmp::Ordering;
use std::fmt;
use std::io::Read;

use thiserror::Error;

/// Tolerance on the sum-to-one invariant once a lottery is stored.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// Largest deviation of the raw probability sum that is silently renormalized.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-9;

/// Slack used when comparing cumulative probabilities against a quantile level.
const CDF_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LotteryError {
    #[error("lottery has no outcomes with positive probability")]
    Empty,
    #[error("outcome value {0} is not finite")]
    NonFiniteValue(f64),
    #[error("probability {0} is negative or not finite")]
    InvalidProbability(f64),
    #[error("probabilities sum to {0}, expected 1")]
    BadTotal(f64),
    #[error("quantile level {0} is outside [0, 1]")]
    InvalidTau(f64),
    #[error("utility evaluated to a non-finite value at outcome {0}")]
    NonFiniteUtility(f64),
    #[error("malformed lottery literal at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// A finite prospect: outcomes sorted ascending, duplicates merged, zero-mass
/// atoms removed.
#[derive(Debug, Clone, PartialEq)]
pub struct Lottery {
    values: Vec<f64>,
    probs: Vec<f64>,
    cum: Vec<f64>,
}

impl Lottery {
    /// Builds a lottery from `(value, probability)` pairs.
    ///
    /// Probabilities whose total deviates from one by at most
    /// [`RENORMALIZE_TOLERANCE`] are rescaled; larger deviations are rejected.
    pub fn new<I>(outcomes: I) -> Result<Self, LotteryError>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut pairs: Vec<(f64, f64)> = Vec::new();
        for (v, p) in outcomes {
            if !v.is_finite() {
                return Err(LotteryError::NonFiniteValue(v));
            }
            if !p.is_finite() || p < 0.0 {
                return Err(LotteryError::InvalidProbability(p));
            }
            pairs.push((v, p));
        }
        let total: f64 = pairs.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > RENORMALIZE_TOLERANCE {
            if pairs.iter().all(|&(_, p)| p == 0.0) {
                return Err(LotteryError::Empty);
            }
            return Err(LotteryError::BadTotal(total));
        }
        pairs.retain(|&(_, p)| p > 0.0);
        if pairs.is_empty() {
            return Err(LotteryError::Empty);
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut values: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut probs: Vec<f64> = Vec::with_capacity(pairs.len());
        for (v, p) in pairs {
            match values.last() {
                Some(&last) if last == v => *probs.last_mut().unwrap() += p,
                _ => {
                    values.push(v);
                    probs.push(p);
                }
            }
        }
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        let mut cum = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cum.push(acc);
        }
        *cum.last_mut().unwrap() = 1.0;
        Ok(Self { values, probs, cum })
    }

    /// A lottery paying `value` with certainty.
    pub fn degenerate(value: f64) -> Result<Self, LotteryError> {
        Self::new([(value, 1.0)])
    }

    /// Equally likely outcomes.
    pub fn uniform(values: &[f64]) -> Result<Self, LotteryError> {
        let p = 1.0 / values.len() as f64;
        Self::new(values.iter().map(|&v| (v, p)))
    }

    /// Parses the `value,probability` CSV literal (header required).
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, LotteryError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| LotteryError::Parse {
            line: 1,
            reason: e.to_string(),
        })?;
        if headers.len() != 2 || &headers[0] != "value" || &headers[1] != "probability" {
            return Err(LotteryError::Parse {
                line: 1,
                reason: "expected header `value,probability`".into(),
            });
        }
        let mut pairs = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| LotteryError::Parse {
                line,
                reason: e.to_string(),
            })?;
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| LotteryError::Parse {
                    line,
                    reason: format!("{s:?}: {e}"),
                })
            };
            pairs.push((parse(&rec[0])?, parse(&rec[1])?));
        }
        Self::new(pairs)
    }

    /// Writes the lottery in the `value,probability` literal format.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("value,probability\n");
        for (v, p) in self.outcomes() {
            out.push_str(&format!("{v},{p}\n"));
        }
        out
    }

    pub fn outcomes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn mean(&self) -> f64 {
        self.outcomes().map(|(v, p)| v * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.outcomes().map(|(v, p)| p * (v - m) * (v - m)).sum()
    }

    /// Applies `f` to every outcome. `f` need not be monotone; the result is
    /// re-sorted and merged.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self, LotteryError> {
        Self::new(self.outcomes().map(|(v, p)| (f(v), p)))
    }

    /// `F(v)`: total probability of outcomes `<= v`.
    pub fn cdf_at(&self, v: f64) -> f64 {
        let idx = self.values.partition_point(|&x| x <= v);
        if idx == 0 {
            0.0
        } else {
            self.cum[idx - 1]
        }
    }

    /// Generalized inverse of the CDF.
    ///
    /// For `tau > 0` this is the smallest outcome with `F >= tau`; `tau = 0`
    /// maps to the support minimum.
    pub fn quantile(&self, tau: f64) -> Result<f64, LotteryError> {
        check_tau(tau)?;
        if tau == 0.0 {
            return Ok(self.min());
        }
        let idx = self.cum.partition_point(|&c| c < tau - CDF_SLACK);
        Ok(self.values[idx.min(self.values.len() - 1)])
    }
}

impl fmt::Display for Lottery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (v, p)) in self.outcomes().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}:{p}")?;
        }
        write!(f, "}}")
    }
}

fn check_tau(tau: f64) -> Result<(), LotteryError> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(LotteryError::InvalidTau(tau))
    }
}

/// A utility function over money. Callers are expected to supply a strictly
/// increasing map; [`UtilityFn::is_increasing_on`] spot-checks it.
pub struct UtilityFn {
    eval: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl UtilityFn {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { eval: Box::new(f) }
    }

    pub fn identity() -> Self {
        Self::new(|v| v)
    }

    pub fn eval(&self, v: f64) -> f64 {
        (self.eval)(v)
    }

    pub fn is_increasing_on(&self, points: &[f64]) -> bool {
        let mut pts = points.to_vec();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts.windows(2).all(|w| self.eval(w[0]) < self.eval(w[1]))
    }
}

/// A probability weighting function with `w(0) = 0` and `w(1) = 1`.
pub struct WeightFn {
    eval: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl WeightFn {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { eval: Box::new(f) }
    }

    pub fn identity() -> Self {
        Self::new(|p| p)
    }

    pub fn eval(&self, p: f64) -> f64 {
        (self.eval)(p)
    }

    /// Checks the endpoint conditions and monotonicity on a uniform grid.
    pub fn is_valid(&self, grid_points: usize) -> bool {
        let n = grid_points.max(2);
        if self.eval(0.0).abs() > 1e-12 || (self.eval(1.0) - 1.0).abs() > 1e-12 {
            return false;
        }
        let ws: Vec<f64> = (0..n)
            .map(|i| self.eval(i as f64 / (n - 1) as f64))
            .collect();
        ws.iter().all(|w| (0.0..=1.0).contains(w)) && ws.windows(2).all(|w| w[0] <= w[1])
    }
}

/// `Σ π_i u(x_i)`.
pub fn expected_utility(lottery: &Lottery, u: &UtilityFn) -> Result<f64, LotteryError> {
    weighted_sum(lottery, u, |p| p)
}

/// `Σ w(π_i) u(x_i)`, the weights applied to each stored (merged) outcome.
pub fn weighted_utility(
    lottery: &Lottery,
    u: &UtilityFn,
    w: &WeightFn,
) -> Result<f64, LotteryError> {
    weighted_sum(lottery, u, |p| w.eval(p))
}

fn weighted_sum(
    lottery: &Lottery,
    u: &UtilityFn,
    weight: impl Fn(f64) -> f64,
) -> Result<f64, LotteryError> {
    let mut total = 0.0;
    for (v, p) in lottery.outcomes() {
        let uv = u.eval(v);
        if !uv.is_finite() {
            return Err(LotteryError::NonFiniteUtility(v));
        }
        total += weight(p) * uv;
    }
    Ok(total)
}

/// Outcome of a pairwise comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preference {
    First,
    Second,
    Indifferent,
}

impl Preference {
    fn from_ordering(ord: Ordering) -> Self {
        match ord {
            Ordering::Greater => Preference::First,
            Ordering::Less => Preference::Second,
            Ordering::Equal => Preference::Indifferent,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Preference::First => Preference::Second,
            Preference::Second => Preference::First,
            Preference::Indifferent => Preference::Indifferent,
        }
    }
}

/// τ-quantile maximizer's ranking of `x` against `y`. Equal quantiles are
/// reported as [`Preference::Indifferent`].
pub fn prefers_tau(x: &Lottery, y: &Lottery, tau: f64) -> Result<Preference, LotteryError> {
    let qx = x.quantile(tau)?;
    let qy = y.quantile(tau)?;
    Ok(Preference::from_ordering(qx.total_cmp(&qy)))
}

/// Worst-case comparison.
pub fn maxmin_choice(x: &Lottery, y: &Lottery) -> Preference {
    Preference::from_ordering(x.min().total_cmp(&y.min()))
}

/// Best-case comparison.
pub fn maxmax_choice(x: &Lottery, y: &Lottery) -> Preference {
    Preference::from_ordering(x.max().total_cmp(&y.max()))
}

/// Merged, sorted support of two lotteries.
fn merged_support(x: &Lottery, y: &Lottery) -> Vec<f64> {
    let mut grid: Vec<f64> = x.values().iter().chain(y.values()).copied().collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Whether `y` is a mean-preserving spread of `x`.
///
/// Means must agree within 1e-9 and the running integral of `F_y - F_x` over
/// the merged support must never go negative.
pub fn is_mean_preserving_spread(y: &Lottery, x: &Lottery) -> bool {
    let scale = 1.0 + x.max().abs().max(y.max().abs()).max(x.min().abs()).max(y.min().abs());
    if (y.mean() - x.mean()).abs() > 1e-9 * scale {
        return false;
    }
    let grid = merged_support(x, y);
    let tol = 1e-9 * scale;
    let mut integral = 0.0;
    for w in grid.windows(2) {
        integral += (y.cdf_at(w[0]) - x.cdf_at(w[0])) * (w[1] - w[0]);
        if integral < -tol {
            return false;
        }
    }
    integral.abs() <= tol
}

/// First-order stochastic dominance relation between two lotteries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fosd {
    XDominates,
    YDominates,
    Cross,
    Equal,
}

pub fn fosd(x: &Lottery, y: &Lottery) -> Fosd {
    let mut x_below = false;
    let mut y_below = false;
    for v in merged_support(x, y) {
        let d = x.cdf_at(v) - y.cdf_at(v);
        if d < -CDF_SLACK {
            x_below = true;
        } else if d > CDF_SLACK {
            y_below = true;
        }
    }
    match (x_below, y_below) {
        (true, true) => Fosd::Cross,
        (true, false) => Fosd::XDominates,
        (false, true) => Fosd::YDominates,
        (false, false) => Fosd::Equal,
    }
}
