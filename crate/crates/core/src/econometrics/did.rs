use super::{build_design, ols_fit, DesignSpec, EstimationError, ModelFit, Term};
use crate::frame::Frame;

/// Difference-in-differences with binary `treat` and `group` indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct DidSpec {
    pub outcome: String,
    pub treat: String,
    pub group: String,
    pub covariates: Vec<Term>,
    pub weight: Option<String>,
}

impl DidSpec {
    pub fn new(outcome: &str, treat: &str, group: &str) -> Self {
        Self {
            outcome: outcome.to_string(),
            treat: treat.to_string(),
            group: group.to_string(),
            covariates: Vec::new(),
            weight: None,
        }
    }

    pub fn with_covariates(mut self, terms: Vec<Term>) -> Self {
        self.covariates = terms;
        self
    }

    pub fn weighted(mut self, weight: Option<&str>) -> Self {
        self.weight = weight.map(str::to_string);
        self
    }

    /// Label of the interaction coefficient θ.
    pub fn theta_label(&self) -> String {
        format!("{}*{}", self.treat, self.group)
    }
}

/// OLS of the outcome on `[1, C, M, C·M, X]`.
pub fn did_fit(frame: &Frame, spec: &DidSpec, robust: bool) -> Result<ModelFit, EstimationError> {
    let mut terms = vec![
        Term::continuous(&spec.treat),
        Term::continuous(&spec.group),
        Term::interaction(&spec.treat, &spec.group),
    ];
    terms.extend(spec.covariates.iter().cloned());
    let ds = DesignSpec::new(&spec.outcome, terms).weighted(spec.weight.as_deref());
    let design = build_design(frame, &ds)?;

    let c = design.column_index(&spec.treat);
    let m = design.column_index(&spec.group);
    let (Some(c), Some(m)) = (c, m) else {
        return Err(EstimationError::InvalidSpec(
            "treatment and group indicators must enter the design".into(),
        ));
    };
    let mut cells = [0usize; 4];
    for i in 0..design.nrows() {
        let (cv, mv) = (design.x[(i, c)], design.x[(i, m)]);
        for (name, v) in [(&spec.treat, cv), (&spec.group, mv)] {
            if v != 0.0 && v != 1.0 {
                return Err(EstimationError::InvalidData(format!(
                    "`{name}` must be binary, found {v}"
                )));
            }
        }
        cells[(cv as usize) * 2 + mv as usize] += 1;
    }
    let empty: Vec<String> = cells
        .iter()
        .enumerate()
        .filter(|(_, &n)| n == 0)
        .map(|(k, _)| format!("{}={},{}={}", spec.treat, k / 2, spec.group, k % 2))
        .collect();
    if !empty.is_empty() && spec.covariates.is_empty() {
        return Err(EstimationError::InvalidData(format!(
            "empty cell(s): {}",
            empty.join("; ")
        )));
    }
    let mut fit = ols_fit(&design, robust)?;
    if !empty.is_empty() {
        fit.notes
            .push(format!("warning: empty cell(s) {}", empty.join("; ")));
    }
    Ok(fit)
}
