//! Estimation engine: design matrices, weighted OLS with HC1 covariance,
//! log-model retransformation, probit/logit maximum likelihood,
//! difference-in-differences and two-group mean tests.

mod binary;
mod design;
mod did;
mod meantest;
mod ols;

use std::io::Write;

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

pub use binary::{binary_mle_fit, BinaryModel, Link, MleOptions};
pub use design::{build_design, Design, DesignSpec, Encoder, Term, INTERCEPT};
pub use did::{did_fit, DidSpec};
pub use meantest::{mean_equality_test, mean_equality_test_frame, MeanTest};
pub use ols::{ols_fit, predict_log, smearing_factor, smearing_retransform};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("no rows left after listwise deletion")]
    NoRows,
    #[error("{rows} rows cannot identify {cols} coefficients")]
    TooFewRows { rows: usize, cols: usize },
    #[error("design has no usable columns")]
    NoColumns,
    #[error("perfect separation: coefficient on `{0}` diverges")]
    Separation(String),
    #[error("design columns {got:?} do not match fitted coefficients {expected:?}")]
    ColumnMismatch {
        expected: Vec<String>,
        got: Vec<String>,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Ols,
    Probit,
    Logit,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Ols => "ols",
            ModelKind::Probit => "probit",
            ModelKind::Logit => "logit",
        }
    }
}

/// Estimated model. Coefficients are aligned with `labels`; columns removed
/// for rank deficiency are listed in `dropped_columns` and carry no entry.
#[derive(Debug, Clone)]
pub struct ModelFit {
    pub kind: ModelKind,
    pub labels: Vec<String>,
    pub coefficients: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub robust: bool,
    pub residuals: Vec<f64>,
    /// R² for OLS, McFadden pseudo-R² for binary models.
    pub r_squared: f64,
    pub n_obs: usize,
    pub df_resid: usize,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: Option<f64>,
    pub smearing_factor: Option<f64>,
    pub dropped_columns: Vec<String>,
    pub dropped_rows: usize,
    pub notes: Vec<String>,
}

impl ModelFit {
    fn index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn coef(&self, label: &str) -> Option<f64> {
        self.index(label).map(|i| self.coefficients[i])
    }

    pub fn se(&self, label: &str) -> Option<f64> {
        self.index(label).map(|i| self.covariance[(i, i)].max(0.0).sqrt())
    }

    /// Coefficient over standard error.
    pub fn stat(&self, label: &str) -> Option<f64> {
        Some(self.coef(label)? / self.se(label)?)
    }

    /// Two-sided p-value: Student t with residual degrees of freedom for OLS,
    /// standard normal for the likelihood models.
    pub fn p_value(&self, label: &str) -> Option<f64> {
        let z = self.stat(label)?;
        Some(two_sided_p(z, self.kind, self.df_resid))
    }

    pub fn is_pseudo_r_squared(&self) -> bool {
        self.kind != ModelKind::Ols
    }

    fn footer(&self) -> String {
        let r2 = if self.is_pseudo_r_squared() {
            "pseudo_r_squared"
        } else {
            "r_squared"
        };
        format!(
            "# n_obs={} {r2}={} converged={}",
            self.n_obs, self.r_squared, self.converged
        )
    }

    /// Writes `term,coef,se,z_or_t,p` rows and a footer comment line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "term,coef,se,z_or_t,p")?;
        for label in &self.labels {
            writeln!(w, "{},{}", label, self.row_values(label))?;
        }
        writeln!(w, "{}", self.footer())
    }

    fn row_values(&self, label: &str) -> String {
        format!(
            "{},{},{},{}",
            self.coef(label).unwrap(),
            self.se(label).unwrap(),
            self.stat(label).unwrap(),
            self.p_value(label).unwrap()
        )
    }
}

/// Several fits side by side: a leading `model` column, then the fit layout.
pub fn write_fits_csv<W: Write>(mut w: W, fits: &[(&str, &ModelFit)]) -> std::io::Result<()> {
    writeln!(w, "model,term,coef,se,z_or_t,p")?;
    for (name, fit) in fits {
        for label in &fit.labels {
            writeln!(w, "{name},{label},{}", fit.row_values(label))?;
        }
    }
    for (name, fit) in fits {
        writeln!(w, "{} model={name}", fit.footer())?;
    }
    Ok(())
}

pub(crate) fn two_sided_p(z: f64, kind: ModelKind, df: usize) -> f64 {
    if !z.is_finite() {
        return if z.is_nan() { f64::NAN } else { 0.0 };
    }
    let tail = match kind {
        ModelKind::Ols if df > 0 => StudentsT::new(0.0, 1.0, df as f64)
            .expect("positive degrees of freedom")
            .cdf(-z.abs()),
        _ => Normal::standard().cdf(-z.abs()),
    };
    2.0 * tail
}

/// Weights rescaled to mean one. Point estimates and sandwich covariances are
/// invariant to the scale; classical covariances become comparable to the
/// unweighted case.
pub(crate) fn normalized_weights(w: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
    let mean = w.sum() / w.len() as f64;
    w / mean
}
