use nalgebra::{DMatrix, DVector};

use super::{normalized_weights, Design, EstimationError, ModelFit, ModelKind};

/// Relative size of an R diagonal below which a column counts as a linear
/// combination of the columns before it.
const RANK_TOL: f64 = 1e-10;

struct Solved {
    beta: DVector<f64>,
    /// (X'WX)^{-1}
    bread: DMatrix<f64>,
}

/// Solves weighted least squares for the kept columns by Householder QR of
/// `sqrt(W) X`. Returns the index of the first dependent column instead when
/// one is found.
fn solve_qr(x: &DMatrix<f64>, y: &DVector<f64>, sw: &DVector<f64>) -> Result<Solved, usize> {
    let xw = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * sw[i]);
    let yw = y.component_mul(sw);
    let norms: Vec<f64> = (0..xw.ncols()).map(|j| xw.column(j).norm()).collect();
    let qr = xw.qr();
    let r = qr.r();
    for j in 0..r.ncols() {
        if norms[j] == 0.0 || r[(j, j)].abs() <= RANK_TOL * norms[j] {
            return Err(j);
        }
    }
    let qty = qr.q().transpose() * yw;
    let beta = r
        .solve_upper_triangular(&qty)
        .expect("full-rank triangular factor");
    let k = r.ncols();
    let rinv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .expect("full-rank triangular factor");
    let bread = &rinv * rinv.transpose();
    Ok(Solved { beta, bread })
}

/// Weighted least squares.
///
/// Columns that are linear combinations of earlier columns are removed one at
/// a time, last first, and reported in `dropped_columns`. With `robust` the
/// covariance is HC1: `n/(n-k) · B (Σ w_i² e_i² x_i x_i') B` with
/// `B = (X'WX)^{-1}`; otherwise `σ² B` with `σ² = Σ w_i e_i² / (n-k)`.
pub fn ols_fit(design: &Design, robust: bool) -> Result<ModelFit, EstimationError> {
    let n = design.nrows();
    let w = normalized_weights(&design.w);
    let sw = w.map(f64::sqrt);
    let mut keep: Vec<usize> = (0..design.ncols()).collect();
    let mut dropped = Vec::new();
    let solved = loop {
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
        match solve_qr(&x, &design.y, &sw) {
            Ok(s) => break s,
            Err(j) => {
                dropped.push(design.labels[keep[j]].clone());
                keep.remove(j);
            }
        }
    };
    let x = design.x.select_columns(&keep);
    let k = keep.len();
    let fitted = &x * &solved.beta;
    let resid = &design.y - &fitted;

    let wsum = w.sum();
    let ybar = w.dot(&design.y) / wsum;
    let sse: f64 = (0..n).map(|i| w[i] * resid[i] * resid[i]).sum();
    let sst: f64 = if design.has_intercept() {
        (0..n).map(|i| w[i] * (design.y[i] - ybar).powi(2)).sum()
    } else {
        (0..n).map(|i| w[i] * design.y[i].powi(2)).sum()
    };
    let r_squared = if sst > 0.0 { 1.0 - sse / sst } else { 1.0 };
    let df = n - k;

    let covariance = if robust {
        let mut meat = DMatrix::zeros(k, k);
        for i in 0..n {
            let s = w[i] * resid[i];
            let xi = x.row(i);
            meat += (xi.transpose() * xi) * (s * s);
        }
        let scale = n as f64 / df as f64;
        &solved.bread * meat * &solved.bread * scale
    } else {
        &solved.bread * (sse / df as f64)
    };
    let covariance = symmetrize(covariance);

    Ok(ModelFit {
        kind: ModelKind::Ols,
        labels: keep.iter().map(|&j| design.labels[j].clone()).collect(),
        coefficients: solved.beta.iter().copied().collect(),
        covariance,
        robust,
        residuals: resid.iter().copied().collect(),
        r_squared,
        n_obs: n,
        df_resid: df,
        converged: true,
        iterations: 1,
        log_likelihood: None,
        smearing_factor: None,
        dropped_columns: dropped,
        dropped_rows: design.dropped_rows,
        notes: Vec::new(),
    })
}

/// Indices of the columns of `x` kept after repeatedly dropping the first
/// column that is a linear combination of its predecessors, together with the
/// dropped indices in drop order.
pub(crate) fn independent_columns(x: &DMatrix<f64>, sw: &DVector<f64>) -> (Vec<usize>, Vec<usize>) {
    let mut keep: Vec<usize> = (0..x.ncols()).collect();
    let mut dropped = Vec::new();
    loop {
        let xs = x.select_columns(&keep);
        let xw = DMatrix::from_fn(xs.nrows(), xs.ncols(), |i, j| xs[(i, j)] * sw[i]);
        let norms: Vec<f64> = (0..xw.ncols()).map(|j| xw.column(j).norm()).collect();
        let r = xw.qr().r();
        let bad = (0..r.ncols().min(r.nrows()))
            .find(|&j| norms[j] == 0.0 || r[(j, j)].abs() <= RANK_TOL * norms[j])
            .or_else(|| (r.nrows() < r.ncols()).then_some(r.nrows()));
        match bad {
            Some(j) => dropped.push(keep.remove(j)),
            None => return (keep, dropped),
        }
        if keep.is_empty() {
            return (keep, dropped);
        }
    }
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Linear index `x_i'β` per row of `x`, whose columns are labelled `labels`.
///
/// Columns the fit dropped contribute nothing; a fitted coefficient with no
/// matching column is an error.
pub fn predict_log(
    fit: &ModelFit,
    x: &DMatrix<f64>,
    labels: &[String],
) -> Result<Vec<f64>, EstimationError> {
    if x.ncols() != labels.len() {
        return Err(EstimationError::ColumnMismatch {
            expected: fit.labels.clone(),
            got: labels.to_vec(),
        });
    }
    let mut idx = Vec::with_capacity(fit.labels.len());
    for l in &fit.labels {
        match labels.iter().position(|m| m == l) {
            Some(j) => idx.push(j),
            None => {
                return Err(EstimationError::ColumnMismatch {
                    expected: fit.labels.clone(),
                    got: labels.to_vec(),
                })
            }
        }
    }
    Ok((0..x.nrows())
        .map(|i| {
            idx.iter()
                .zip(&fit.coefficients)
                .map(|(&j, b)| x[(i, j)] * b)
                .sum()
        })
        .collect())
}

/// Duan's smearing factor: the mean of `exp(residual)`.
pub fn smearing_factor(residuals: &[f64]) -> Result<f64, EstimationError> {
    if residuals.is_empty() {
        return Err(EstimationError::InvalidData("no residuals to smear".into()));
    }
    let s = residuals.iter().map(|r| r.exp()).sum::<f64>() / residuals.len() as f64;
    if !s.is_finite() {
        return Err(EstimationError::Numerical(
            "exponentiated residuals overflow".into(),
        ));
    }
    Ok(s)
}

/// Level predictions `exp(ŷ_i) · S`. Stores `S` on the fit.
pub fn smearing_retransform(
    fit: &mut ModelFit,
    log_predictions: &[f64],
) -> Result<Vec<f64>, EstimationError> {
    let s = smearing_factor(&fit.residuals)?;
    fit.smearing_factor = Some(s);
    Ok(log_predictions.iter().map(|p| p.exp() * s).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::econometrics::{build_design, DesignSpec, Term};
    use crate::frame::Frame;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn design_from(cols: &[(&str, Vec<f64>)], response: &str, weight: Option<&str>) -> Design {
        let n = cols[0].1.len();
        let mut f = Frame::new(n);
        for (name, v) in cols {
            f.insert_dense(name, v.clone()).unwrap();
        }
        let terms = cols
            .iter()
            .filter(|(name, _)| *name != response && Some(*name) != weight)
            .map(|(name, _)| Term::continuous(name))
            .collect();
        build_design(&f, &DesignSpec::new(response, terms).weighted(weight)).unwrap()
    }

    /// Normal equations solved by LU: an independent route to the WLS solution.
    fn normal_equations(d: &Design) -> DVector<f64> {
        let w = DMatrix::from_diagonal(&d.w);
        let xtwx = d.x.transpose() * &w * &d.x;
        let xtwy = d.x.transpose() * &w * &d.y;
        xtwx.lu().solve(&xtwy).unwrap()
    }

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let d = design_from(&[("y", y), ("x", x)], "y", None);
        let fit = ols_fit(&d, true).unwrap();
        assert!((fit.coef("const").unwrap() - 1.0).abs() < 1e-12);
        assert!((fit.coef("x").unwrap() - 2.0).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-12));
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn intercept_only_is_weighted_mean() {
        let y = vec![1.0, 2.0, 3.0, 10.0];
        let w = vec![1.0, 1.0, 1.0, 3.0];
        let d = design_from(&[("y", y.clone()), ("w", w.clone())], "y", Some("w"));
        let fit = ols_fit(&d, false).unwrap();
        let wm = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>();
        assert!((fit.coef("const").unwrap() - wm).abs() < 1e-12);
    }

    #[test]
    fn matches_normal_equations_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 50;
        let cols: Vec<(&str, Vec<f64>)> = vec![
            ("y", (0..n).map(|_| rng.random::<f64>() * 10.0).collect()),
            ("a", (0..n).map(|_| rng.random::<f64>()).collect()),
            ("b", (0..n).map(|_| rng.random::<f64>() * 3.0 - 1.0).collect()),
            ("c", (0..n).map(|_| rng.random::<f64>().powi(2)).collect()),
            ("w", (0..n).map(|_| 0.5 + rng.random::<f64>()).collect()),
        ];
        let d = design_from(&cols, "y", Some("w"));
        assert_eq!(d.ncols(), 4);
        let fit = ols_fit(&d, true).unwrap();
        let oracle = normal_equations(&d);
        for (b, o) in fit.coefficients.iter().zip(oracle.iter()) {
            assert!((b - o).abs() <= 1e-8 * (1.0 + o.abs()));
        }
    }

    #[test]
    fn residual_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200;
        let a: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = a.iter().map(|v| 3.0 - v + rng.random::<f64>()).collect();
        let w: Vec<f64> = (0..n).map(|_| 1.0 + rng.random::<f64>() * 4.0).collect();
        let d = design_from(&[("y", y), ("a", a), ("w", w)], "y", Some("w"));
        let fit = ols_fit(&d, true).unwrap();
        let pred = predict_log(&fit, &d.x, &d.labels).unwrap();
        for i in 0..n {
            let back = pred[i] + fit.residuals[i];
            assert!((back - d.y[i]).abs() <= 1e-10 * d.y[i].abs().max(1.0));
        }
        let scale: f64 = d.y.iter().map(|v| v.abs()).sum();
        for j in 0..d.ncols() {
            let ip: f64 = (0..n).map(|i| d.w[i] * fit.residuals[i] * d.x[(i, j)]).sum();
            assert!(ip.abs() <= 1e-8 * scale, "column {j}: {ip}");
        }
        let mean_resid: f64 =
            (0..n).map(|i| d.w[i] * fit.residuals[i]).sum::<f64>() / d.w.sum();
        assert!(mean_resid.abs() < 1e-10);
    }

    #[test]
    fn dependent_column_dropped_last_first() {
        let a: Vec<f64> = (0..20).map(|i| (i % 7) as f64).collect();
        let b: Vec<f64> = (0..20).map(|i| (i % 3) as f64).collect();
        let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + 2.0 * y).collect();
        let y: Vec<f64> = (0..20).map(|i| (i * i % 11) as f64).collect();
        let d = design_from(&[("y", y), ("a", a), ("b", b), ("c", c)], "y", None);
        let fit = ols_fit(&d, false).unwrap();
        assert_eq!(fit.dropped_columns, vec!["c"]);
        assert_eq!(fit.labels, vec!["const", "a", "b"]);
        assert_eq!(fit.covariance.nrows(), 3);
        // The dropped column is ignored at prediction time.
        let p = predict_log(&fit, &d.x, &d.labels).unwrap();
        assert_eq!(p.len(), 20);
    }

    #[test]
    fn all_zero_column_is_dropped() {
        let d = design_from(
            &[
                ("y", vec![1.0, 2.0, 4.0, 3.0]),
                ("a", vec![1.0, 2.0, 3.0, 4.0]),
                ("z", vec![0.0; 4]),
            ],
            "y",
            None,
        );
        let fit = ols_fit(&d, false).unwrap();
        assert_eq!(fit.dropped_columns, vec!["z"]);
    }

    #[test]
    fn too_few_rows() {
        let d = design_from(&[("y", vec![1.0, 2.0]), ("a", vec![0.0, 1.0])], "y", None);
        assert!(matches!(ols_fit(&d, false), Err(EstimationError::TooFewRows { .. })));
    }

    #[test]
    fn covariance_is_symmetric_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100;
        let cols = vec![
            ("y", (0..n).map(|_| rng.random::<f64>()).collect::<Vec<_>>()),
            ("a", (0..n).map(|_| rng.random::<f64>()).collect()),
            ("b", (0..n).map(|_| rng.random::<f64>()).collect()),
        ];
        let d = design_from(&cols, "y", None);
        for robust in [true, false] {
            let fit = ols_fit(&d, robust).unwrap();
            let c = &fit.covariance;
            assert!((c - c.transpose()).abs().max() < 1e-15);
            let eig = c.clone().symmetric_eigen();
            assert!(eig.eigenvalues.iter().all(|&e| e > -1e-8));
        }
    }

    #[test]
    fn hc1_matches_classical_under_homoskedasticity() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut ratio_sum = 0.0;
        for seed in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let n = 2000;
            let a: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
            let y: Vec<f64> = a.iter().map(|v| 1.0 + 0.5 * v + normal.sample(&mut rng)).collect();
            let d = design_from(&[("y", y), ("a", a)], "y", None);
            let r = ols_fit(&d, true).unwrap().se("a").unwrap();
            let c = ols_fit(&d, false).unwrap().se("a").unwrap();
            ratio_sum += r / c;
        }
        let mean_ratio = ratio_sum / 50.0;
        assert!((mean_ratio - 1.0).abs() < 0.05, "{mean_ratio}");
    }

    #[test]
    fn prediction_errors_on_mismatch() {
        let d = design_from(
            &[("y", vec![1.0, 2.0, 4.0, 3.0]), ("a", vec![1.0, 2.0, 3.0, 5.0])],
            "y",
            None,
        );
        let fit = ols_fit(&d, false).unwrap();
        let wrong = vec!["const".to_string(), "b".to_string()];
        assert!(matches!(
            predict_log(&fit, &d.x, &wrong),
            Err(EstimationError::ColumnMismatch { .. })
        ));
        let row = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert_eq!(
            predict_log(&fit, &row, &d.labels).unwrap()[0],
            fit.coef("const").unwrap()
        );
        let hand = DMatrix::from_row_slice(1, 2, &[1.0, 2.5]);
        let expect = fit.coef("const").unwrap() + 2.5 * fit.coef("a").unwrap();
        assert!((predict_log(&fit, &hand, &d.labels).unwrap()[0] - expect).abs() < 1e-14);
    }

    #[test]
    fn smearing_examples() {
        let d = design_from(
            &[("y", vec![1.0, 3.0, 5.0, 7.0]), ("a", vec![0.0, 1.0, 2.0, 3.0])],
            "y",
            None,
        );
        let mut fit = ols_fit(&d, false).unwrap();
        let levels = smearing_retransform(&mut fit, &[0.0, 1.0]).unwrap();
        assert!((fit.smearing_factor.unwrap() - 1.0).abs() < 1e-12);
        assert!((levels[1] - 1f64.exp()).abs() < 1e-10);

        let s = smearing_factor(&[2f64.ln(), 0.5f64.ln()]).unwrap();
        assert!((s - 1.25).abs() < 1e-15);
        assert!(smearing_factor(&[1000.0]).is_err());
        assert!(smearing_factor(&[]).is_err());
    }

    #[test]
    fn smearing_is_exact_for_intercept_only_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y: Vec<f64> = (0..500).map(|_| rng.random::<f64>() * 2.0).collect();
        let d = design_from(&[("y", y.clone())], "y", None);
        let mut fit = ols_fit(&d, false).unwrap();
        let pred = predict_log(&fit, &d.x, &d.labels).unwrap();
        let levels = smearing_retransform(&mut fit, &pred).unwrap();
        let mean_levels = levels.iter().sum::<f64>() / levels.len() as f64;
        let mean_exp = y.iter().map(|v| v.exp()).sum::<f64>() / y.len() as f64;
        assert!((mean_levels - mean_exp).abs() <= 1e-10 * mean_exp);
    }
}
