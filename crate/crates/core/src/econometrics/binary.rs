use nalgebra::{DMatrix, DVector};
use statrs::function::erf::erfc;

use super::ols::{independent_columns, symmetrize};
use super::{normalized_weights, Design, EstimationError, ModelFit, ModelKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Probit,
    Logit,
}

#[derive(Debug, Clone, Copy)]
pub struct MleOptions {
    pub robust: bool,
    pub max_iter: usize,
    /// Convergence when the max-norm of the score falls below this.
    pub score_tol: f64,
    /// Or when the Newton step's max-norm falls below this.
    pub step_tol: f64,
    /// A standardized coefficient `|β_j · sd(x_j)|` above this signals
    /// separation.
    pub separation_bound: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            robust: true,
            max_iter: 100,
            score_tol: 1e-8,
            step_tol: 1e-10,
            separation_bound: 30.0,
        }
    }
}

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const FRAC_SQRT_2_PI: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)

/// `ln Φ(q)` and the inverse Mills ratio `φ(q)/Φ(q)`, stable far in the
/// lower tail.
fn probit_terms(q: f64) -> (f64, f64) {
    if q < -35.0 {
        // Φ(q) ≈ φ(q)/(-q) · (1 - 1/q² + 3/q⁴)
        let q2 = q * q;
        let series = 1.0 - 1.0 / q2 + 3.0 / (q2 * q2);
        let log_phi = -0.5 * q2 - 0.5 * (2.0 * std::f64::consts::PI).ln();
        let log_cdf = log_phi - (-q).ln() + series.ln();
        return (log_cdf, -q / series);
    }
    let c = erfc(-q / SQRT_2);
    let log_cdf = (0.5 * c).ln();
    let lambda = FRAC_SQRT_2_PI * (-0.5 * q * q).exp() / c;
    (log_cdf, lambda)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Weighted binary-response log-likelihood with analytic derivatives.
#[derive(Debug, Clone)]
pub struct BinaryModel {
    pub link: Link,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub w: DVector<f64>,
}

impl BinaryModel {
    pub fn new(
        link: Link,
        x: DMatrix<f64>,
        y: DVector<f64>,
        w: DVector<f64>,
    ) -> Result<Self, EstimationError> {
        if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(EstimationError::InvalidData(format!(
                "response must be 0 or 1, row {i} has {}",
                y[i]
            )));
        }
        Ok(Self { link, x, y, w })
    }

    /// Per-row log-likelihood contribution, score multiplier `g_i` (so the
    /// row score is `g_i x_i`) and Hessian multiplier `h_i` (row Hessian is
    /// `-h_i x_i x_i'`), all unweighted.
    fn row_terms(&self, eta: f64, y: f64) -> (f64, f64, f64) {
        match self.link {
            Link::Logit => {
                let p = sigmoid(eta);
                (y * eta - softplus(eta), y - p, p * (1.0 - p))
            }
            Link::Probit => {
                let s = 2.0 * y - 1.0;
                let q = s * eta;
                let (log_cdf, lambda) = probit_terms(q);
                (log_cdf, s * lambda, lambda * (lambda + q))
            }
        }
    }

    fn eta(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.x * beta
    }

    pub fn log_likelihood(&self, beta: &DVector<f64>) -> f64 {
        let eta = self.eta(beta);
        (0..self.y.len())
            .map(|i| self.w[i] * self.row_terms(eta[i], self.y[i]).0)
            .sum()
    }

    pub fn gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        let eta = self.eta(beta);
        let g = DVector::from_fn(self.y.len(), |i, _| {
            self.w[i] * self.row_terms(eta[i], self.y[i]).1
        });
        self.x.transpose() * g
    }

    pub fn hessian(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let eta = self.eta(beta);
        let k = self.x.ncols();
        let scaled = DMatrix::from_fn(self.x.nrows(), k, |i, j| {
            self.x[(i, j)] * self.w[i] * self.row_terms(eta[i], self.y[i]).2
        });
        -(self.x.transpose() * scaled)
    }

    /// Row scores `w_i g_i x_i`, one row per observation.
    fn scores(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let eta = self.eta(beta);
        DMatrix::from_fn(self.x.nrows(), self.x.ncols(), |i, j| {
            self.x[(i, j)] * self.w[i] * self.row_terms(eta[i], self.y[i]).1
        })
    }
}

fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    match a.clone().cholesky() {
        Some(c) => Some(c.solve(b)),
        None => a.clone().lu().solve(b),
    }
}

fn invert_spd(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    match a.clone().cholesky() {
        Some(c) => Some(c.inverse()),
        None => a.clone().try_inverse(),
    }
}

fn column_sd(x: &DMatrix<f64>, j: usize) -> f64 {
    let n = x.nrows() as f64;
    let c = x.column(j);
    let m = c.sum() / n;
    (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
}

/// Probit or logit by damped Newton.
///
/// Each iteration takes the full Newton step and halves it until the
/// log-likelihood does not decrease. Weights are rescaled to mean one before
/// fitting. The pseudo-R² is McFadden's `1 - ℓ/ℓ₀` against the
/// intercept-only likelihood.
pub fn binary_mle_fit(
    design: &Design,
    link: Link,
    opts: MleOptions,
) -> Result<ModelFit, EstimationError> {
    let n = design.nrows();
    let w = normalized_weights(&design.w);
    let (keep, dropped) = independent_columns(&design.x, &w.map(f64::sqrt));
    if keep.is_empty() {
        return Err(EstimationError::NoColumns);
    }
    if n < keep.len() + 1 {
        return Err(EstimationError::TooFewRows {
            rows: n,
            cols: keep.len(),
        });
    }
    let x = design.x.select_columns(&keep);
    let labels: Vec<String> = keep.iter().map(|&j| design.labels[j].clone()).collect();
    let model = BinaryModel::new(link, x, design.y.clone(), w.clone())?;

    let wsum = w.sum();
    let p0 = w.dot(&design.y) / wsum;
    if p0 <= 0.0 || p0 >= 1.0 {
        return Err(EstimationError::Separation(
            "response is constant".to_string(),
        ));
    }

    let k = keep.len();
    let mut beta = DVector::zeros(k);
    let mut ll = model.log_likelihood(&beta);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        iterations = it;
        let g = model.gradient(&beta);
        if g.amax() < opts.score_tol {
            converged = true;
            break;
        }
        let info = -model.hessian(&beta);
        let step = solve_spd(&info, &g)
            .ok_or_else(|| EstimationError::Numerical("singular information matrix".into()))?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &beta + &step * t;
            let cll = model.log_likelihood(&cand);
            if cll.is_finite() && cll >= ll - 1e-12 * ll.abs() {
                beta = cand;
                ll = cll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        if (&step * t).amax() < opts.step_tol {
            converged = true;
            break;
        }
    }

    for (j, label) in labels.iter().enumerate() {
        let sd = column_sd(&model.x, j);
        if sd > 0.0 && (beta[j] * sd).abs() > opts.separation_bound {
            return Err(EstimationError::Separation(label.clone()));
        }
    }

    let info = -model.hessian(&beta);
    let bread = invert_spd(&info)
        .ok_or_else(|| EstimationError::Numerical("singular information matrix".into()))?;
    let covariance = if opts.robust {
        let s = model.scores(&beta);
        let meat = s.transpose() * &s;
        &bread * meat * &bread * (n as f64 / (n as f64 - 1.0))
    } else {
        bread
    };

    let ll0: f64 = (0..n)
        .map(|i| {
            let y = design.y[i];
            w[i] * (y * p0.ln() + (1.0 - y) * (1.0 - p0).ln())
        })
        .sum();
    let eta = model.eta(&beta);
    let residuals = (0..n)
        .map(|i| {
            let p = match link {
                Link::Logit => sigmoid(eta[i]),
                Link::Probit => 0.5 * erfc(-eta[i] / SQRT_2),
            };
            design.y[i] - p
        })
        .collect();

    Ok(ModelFit {
        kind: match link {
            Link::Probit => ModelKind::Probit,
            Link::Logit => ModelKind::Logit,
        },
        labels,
        coefficients: beta.iter().copied().collect(),
        covariance: symmetrize(covariance),
        robust: opts.robust,
        residuals,
        r_squared: 1.0 - ll / ll0,
        n_obs: n,
        df_resid: n - k,
        converged,
        iterations,
        log_likelihood: Some(ll),
        smearing_factor: None,
        dropped_columns: dropped.iter().map(|&j| design.labels[j].clone()).collect(),
        dropped_rows: design.dropped_rows,
        notes: Vec::new(),
    })
}
