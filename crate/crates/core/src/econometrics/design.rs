use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use super::EstimationError;
use crate::frame::Frame;

pub const INTERCEPT: &str = "const";

/// One right-hand-side term of a model.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Continuous(String),
    /// One-hot encoding that omits `baseline`.
    Categorical { name: String, baseline: f64 },
    /// Elementwise product of two raw numeric variables.
    Interaction(String, String),
    /// Level dummies with the smallest level as baseline.
    FixedEffect(String),
}

impl Term {
    pub fn continuous(name: &str) -> Self {
        Term::Continuous(name.to_string())
    }

    pub fn categorical(name: &str, baseline: f64) -> Self {
        Term::Categorical {
            name: name.to_string(),
            baseline,
        }
    }

    pub fn interaction(a: &str, b: &str) -> Self {
        Term::Interaction(a.to_string(), b.to_string())
    }

    pub fn fixed_effect(name: &str) -> Self {
        Term::FixedEffect(name.to_string())
    }

    /// Parses the compact config syntax: `name`, `cat:name:baseline`,
    /// `int:a:b` or `fe:name`.
    pub fn parse(s: &str) -> Result<Self, EstimationError> {
        let parts: Vec<&str> = s.trim().split(':').map(str::trim).collect();
        let bad = || EstimationError::InvalidSpec(format!("cannot parse term `{s}`"));
        match parts.as_slice() {
            [name] if !name.is_empty() => Ok(Term::continuous(name)),
            ["cat", name, base] => Ok(Term::categorical(name, base.parse().map_err(|_| bad())?)),
            ["int", a, b] => Ok(Term::interaction(a, b)),
            ["fe", name] => Ok(Term::fixed_effect(name)),
            _ => Err(bad()),
        }
    }

    fn variables(&self) -> Vec<&str> {
        match self {
            Term::Continuous(n) | Term::FixedEffect(n) => vec![n],
            Term::Categorical { name, .. } => vec![name],
            Term::Interaction(a, b) => vec![a, b],
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Continuous(n) => write!(f, "{n}"),
            Term::Categorical { name, baseline } => write!(f, "cat:{name}:{}", level_str(*baseline)),
            Term::Interaction(a, b) => write!(f, "int:{a}:{b}"),
            Term::FixedEffect(n) => write!(f, "fe:{n}"),
        }
    }
}

pub(crate) fn level_str(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Response, right-hand side and optional weight variable.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    pub response: String,
    pub terms: Vec<Term>,
    pub weight: Option<String>,
    pub intercept: bool,
}

impl DesignSpec {
    pub fn new(response: &str, terms: Vec<Term>) -> Self {
        Self {
            response: response.to_string(),
            terms,
            weight: None,
            intercept: true,
        }
    }

    pub fn weighted(mut self, weight: Option<&str>) -> Self {
        self.weight = weight.map(str::to_string);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Encoded {
    Column(String),
    Dummies { name: String, levels: Vec<f64> },
    Product(String, String),
}

/// Column layout learned from the estimation sample; re-applied to new data
/// for prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    intercept: bool,
    parts: Vec<Encoded>,
    labels: Vec<String>,
}

impl Encoder {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    fn variables(&self) -> Vec<&str> {
        let mut v = Vec::new();
        for p in &self.parts {
            match p {
                Encoded::Column(n) | Encoded::Dummies { name: n, .. } => v.push(n.as_str()),
                Encoded::Product(a, b) => {
                    v.push(a.as_str());
                    v.push(b.as_str());
                }
            }
        }
        v
    }

    fn row(&self, frame: &Frame, i: usize, out: &mut Vec<f64>) {
        if self.intercept {
            out.push(1.0);
        }
        for p in &self.parts {
            match p {
                Encoded::Column(n) => out.push(frame.value(n, i).unwrap()),
                Encoded::Product(a, b) => {
                    out.push(frame.value(a, i).unwrap() * frame.value(b, i).unwrap())
                }
                Encoded::Dummies { name, levels } => {
                    let v = frame.value(name, i).unwrap();
                    out.extend(levels.iter().map(|&l| if v == l { 1.0 } else { 0.0 }));
                }
            }
        }
    }

    /// Builds the design matrix for `frame` with this layout. Rows with a
    /// missing covariate are skipped; levels unseen during fitting get zero
    /// on every dummy of that term.
    pub fn encode(&self, frame: &Frame) -> Result<(DMatrix<f64>, Vec<usize>), EstimationError> {
        for v in self.variables() {
            frame
                .column(v)
                .map_err(|_| EstimationError::UnknownVariable(v.to_string()))?;
        }
        let vars = self.variables();
        let rows: Vec<usize> = (0..frame.nrows())
            .filter(|&i| vars.iter().all(|v| frame.value(v, i).is_some()))
            .collect();
        let k = self.labels.len();
        let mut data = Vec::with_capacity(rows.len() * k);
        let mut buf = Vec::with_capacity(k);
        for &i in &rows {
            buf.clear();
            self.row(frame, i, &mut buf);
            data.extend_from_slice(&buf);
        }
        Ok((DMatrix::from_row_slice(rows.len(), k, &data), rows))
    }
}

/// Design matrix with response and weights for the rows that survived
/// listwise deletion.
#[derive(Debug, Clone)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub w: DVector<f64>,
    pub labels: Vec<String>,
    /// Indices into the source frame.
    pub rows: Vec<usize>,
    pub dropped_rows: usize,
    /// Terms removed because they had a single level in the sample.
    pub dropped_terms: Vec<String>,
    pub encoder: Encoder,
}

impl Design {
    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    pub fn has_intercept(&self) -> bool {
        self.encoder.intercept
    }

    /// Index of a column by label.
    pub fn column_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Encodes `spec` against `frame`.
pub fn build_design(frame: &Frame, spec: &DesignSpec) -> Result<Design, EstimationError> {
    let mut seen = BTreeSet::new();
    for t in &spec.terms {
        if !seen.insert(t.to_string()) {
            return Err(EstimationError::InvalidSpec(format!("duplicate term `{t}`")));
        }
    }
    let mut vars: Vec<&str> = vec![spec.response.as_str()];
    if let Some(w) = &spec.weight {
        vars.push(w);
    }
    for t in &spec.terms {
        vars.extend(t.variables());
    }
    for v in &vars {
        frame
            .column(v)
            .map_err(|_| EstimationError::UnknownVariable(v.to_string()))?;
    }
    let rows: Vec<usize> = (0..frame.nrows())
        .filter(|&i| vars.iter().all(|v| frame.value(v, i).is_some()))
        .collect();
    if rows.is_empty() {
        return Err(EstimationError::NoRows);
    }
    let dropped_rows = frame.nrows() - rows.len();
    if let Some(wname) = &spec.weight {
        if let Some(&i) = rows.iter().find(|&&i| frame.value(wname, i).unwrap() < 0.0) {
            return Err(EstimationError::InvalidData(format!(
                "negative weight in row {i}"
            )));
        }
    }

    let mut parts = Vec::new();
    let mut labels = Vec::new();
    let mut dropped_terms = Vec::new();
    if spec.intercept {
        labels.push(INTERCEPT.to_string());
    }
    for t in &spec.terms {
        match t {
            Term::Continuous(n) => {
                labels.push(n.clone());
                parts.push(Encoded::Column(n.clone()));
            }
            Term::Interaction(a, b) => {
                labels.push(format!("{a}*{b}"));
                parts.push(Encoded::Product(a.clone(), b.clone()));
            }
            Term::Categorical { name, .. } | Term::FixedEffect(name) => {
                let mut levels: Vec<f64> = rows
                    .iter()
                    .map(|&i| frame.value(name, i).unwrap())
                    .collect();
                levels.sort_by(f64::total_cmp);
                levels.dedup();
                if levels.len() < 2 {
                    dropped_terms.push(t.to_string());
                    continue;
                }
                let baseline = match t {
                    Term::Categorical { baseline, .. } => {
                        if !levels.contains(baseline) {
                            return Err(EstimationError::InvalidSpec(format!(
                                "baseline {} of `{name}` does not occur in the sample",
                                level_str(*baseline)
                            )));
                        }
                        *baseline
                    }
                    _ => levels[0],
                };
                levels.retain(|&l| l != baseline);
                for &l in &levels {
                    labels.push(format!("{name}={}", level_str(l)));
                }
                parts.push(Encoded::Dummies {
                    name: name.clone(),
                    levels,
                });
            }
        }
    }
    let encoder = Encoder {
        intercept: spec.intercept,
        parts,
        labels: labels.clone(),
    };
    let (x, _) = encoder.encode(&frame.filter(&row_mask(frame.nrows(), &rows)))?;
    let y = DVector::from_iterator(
        rows.len(),
        rows.iter().map(|&i| frame.value(&spec.response, i).unwrap()),
    );
    let w = match &spec.weight {
        Some(wn) => DVector::from_iterator(rows.len(), rows.iter().map(|&i| frame.value(wn, i).unwrap())),
        None => DVector::from_element(rows.len(), 1.0),
    };
    if w.sum() <= 0.0 {
        return Err(EstimationError::InvalidData("weights sum to zero".into()));
    }
    Ok(Design {
        x,
        y,
        w,
        labels,
        rows,
        dropped_rows,
        dropped_terms,
        encoder,
    })
}

fn row_mask(n: usize, rows: &[usize]) -> Vec<bool> {
    let mut m = vec![false; n];
    for &i in rows {
        m[i] = true;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame() -> Frame {
        let mut f = Frame::new(8);
        f.insert_dense("y", vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        f.insert_dense("lang", vec![1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        f.insert_dense("a", vec![0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        f.insert_dense("b", vec![1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        f.insert_dense("one", vec![1.0; 8]).unwrap();
        f.insert(
            "gappy",
            vec![Some(1.0), None, Some(2.0), Some(3.0), Some(1.0), Some(5.0), None, Some(0.5)],
        )
        .unwrap();
        f
    }

    #[test]
    fn categorical_drops_baseline() {
        let spec = DesignSpec::new("y", vec![Term::categorical("lang", 1.0)]);
        let d = build_design(&frame(), &spec).unwrap();
        assert_eq!(d.labels, vec!["const", "lang=2", "lang=3", "lang=4"]);
        assert_eq!(d.ncols(), 4);
        assert_eq!(d.x.row(1).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(d.x.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn state_fixed_effect_has_36_columns() {
        let n = 74;
        let mut f = Frame::new(n);
        f.insert_dense("y", (0..n).map(|i| i as f64).collect()).unwrap();
        f.insert_dense("state", (0..n).map(|i| (i % 37 + 1) as f64).collect()).unwrap();
        let spec = DesignSpec {
            intercept: false,
            ..DesignSpec::new("y", vec![Term::fixed_effect("state")])
        };
        let d = build_design(&f, &spec).unwrap();
        assert_eq!(d.ncols(), 36);
        assert_eq!(d.labels[0], "state=2");
    }

    #[test]
    fn interaction_is_elementwise_product() {
        let spec = DesignSpec::new("y", vec![Term::interaction("a", "b")]);
        let f = frame();
        let d = build_design(&f, &spec).unwrap();
        for i in 0..8 {
            let expect = f.value("a", i).unwrap() * f.value("b", i).unwrap();
            assert_eq!(d.x[(i, 1)], expect);
        }
        assert_eq!(d.labels[1], "a*b");
    }

    #[test]
    fn listwise_deletion_counts_rows() {
        let spec = DesignSpec::new("y", vec![Term::continuous("gappy")]);
        let d = build_design(&frame(), &spec).unwrap();
        assert_eq!(d.nrows(), 6);
        assert_eq!(d.dropped_rows, 2);
        assert_eq!(d.rows, vec![0, 2, 3, 4, 5, 7]);
    }

    #[test]
    fn single_level_categorical_is_dropped_and_reported() {
        let spec = DesignSpec::new(
            "y",
            vec![Term::continuous("a"), Term::categorical("one", 1.0)],
        );
        let d = build_design(&frame(), &spec).unwrap();
        assert_eq!(d.labels, vec!["const", "a"]);
        assert_eq!(d.dropped_terms, vec!["cat:one:1"]);
    }

    #[test]
    fn spec_errors() {
        let f = frame();
        let unknown = DesignSpec::new("y", vec![Term::continuous("nope")]);
        assert!(matches!(
            build_design(&f, &unknown),
            Err(EstimationError::UnknownVariable(v)) if v == "nope"
        ));
        let dup = DesignSpec::new("y", vec![Term::continuous("a"), Term::continuous("a")]);
        assert!(matches!(build_design(&f, &dup), Err(EstimationError::InvalidSpec(_))));
        let base = DesignSpec::new("y", vec![Term::categorical("lang", 9.0)]);
        assert!(matches!(build_design(&f, &base), Err(EstimationError::InvalidSpec(_))));

        let mut empty = Frame::new(2);
        empty.insert("y", vec![None, Some(1.0)]).unwrap();
        empty.insert("x", vec![Some(1.0), None]).unwrap();
        let spec = DesignSpec::new("y", vec![Term::continuous("x")]);
        assert!(matches!(build_design(&empty, &spec), Err(EstimationError::NoRows)));
    }

    #[test]
    fn term_syntax_roundtrip() {
        for s in ["hhsize", "cat:dwel_wall:1", "int:hh_sex:hh_marstat", "fe:state_id"] {
            assert_eq!(Term::parse(s).unwrap().to_string(), s);
        }
        assert!(Term::parse("cat:x").is_err());
        assert!(Term::parse("cat:x:abc").is_err());
    }

    #[test]
    fn encoder_reapplies_training_levels() {
        let f = frame();
        let spec = DesignSpec::new("y", vec![Term::categorical("lang", 1.0)]);
        let d = build_design(&f.filter(&[true, true, true, false, true, true, true, false]), &spec)
            .unwrap();
        assert_eq!(d.labels, vec!["const", "lang=2", "lang=3"]);
        let (x, rows) = d.encoder.encode(&f).unwrap();
        assert_eq!(rows.len(), 8);
        // Level 4 never appeared in fitting; it loads on no dummy.
        assert_eq!(x.row(3).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0]);
    }
}
