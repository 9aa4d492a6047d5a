use std::collections::BTreeSet;
use std::fs::File;
use std::io::Write;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::data::{column_masks, PanelData};
use super::{io_err, write_artifact, PipelineConfig, PipelineError};
use crate::econometrics::{
    binary_mle_fit, build_design, did_fit, ols_fit, predict_log, smearing_retransform,
    write_fits_csv, DesignSpec, DidSpec, EstimationError, MleOptions, ModelFit, Term,
};
use crate::empirical::{
    dkw_tolerance, dominance_bands, empirical_cdf, BandOptions, CompareOptions, DominanceReport,
    Verdict,
};
use crate::frame::Frame;

/// Stream of the residual draws that spread step-1 predictions into a
/// counterfactual distribution.
const RESIDUAL_STREAM: u64 = 10;

/// One conflict-area observation with its counterfactual expenditure.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualRow {
    pub household_id: u64,
    pub wave: u32,
    pub lga_id: u32,
    pub weight: f64,
    /// Expenditure recorded in the panel.
    pub observed: f64,
    /// Smeared conditional mean `exp(x'β) · S`.
    pub predicted: f64,
    /// `exp(x'β + e)` with `e` a randomly drawn training residual: one draw
    /// from the predicted conditional distribution.
    pub counterfactual: f64,
}

#[derive(Debug, Clone)]
pub struct Step1Output {
    pub fit: ModelFit,
    pub rows: Vec<CounterfactualRow>,
    pub artifacts: Vec<PathBuf>,
}

/// Fits log expenditure on covariates over observed rows in conflict-free
/// LGAs, then predicts what households living in conflict LGAs would spend
/// under that model. Writes `table4.csv` and `counterfactual.csv`.
pub fn step1_welfare(cfg: &PipelineConfig) -> Result<Step1Output, PipelineError> {
    cfg.validate()?;
    let data = PanelData::load(cfg)?;
    let obs = data.observed_rows();
    let class = obs.column("lga_class")?;
    let has_exp = obs.column("ln_pcexp")?;
    let train_mask: Vec<bool> = class.iter().map(|c| *c == Some(0.0)).collect();
    let conflict_mask: Vec<bool> = class
        .iter()
        .zip(has_exp)
        .map(|(c, y)| c.is_some_and(|c| c > 0.0) && y.is_some())
        .collect();
    if !train_mask.contains(&true) {
        return Err(PipelineError::Data("no observations in conflict-free LGAs".into()));
    }
    if !conflict_mask.contains(&true) {
        return Err(PipelineError::Data("no observations in conflict LGAs".into()));
    }
    let train = obs.filter(&train_mask);
    let conflict = obs.filter(&conflict_mask);

    let spec = DesignSpec::new("ln_pcexp", cfg.welfare_terms()?).weighted(cfg.weight_column());
    let design = build_design(&train, &spec)?;
    let mut fit = ols_fit(&design, cfg.welfare.robust)?;
    let (x, rows) = design.encoder.encode(&conflict)?;
    let log_pred = predict_log(&fit, &x, design.encoder.labels())?;
    let predicted = smearing_retransform(&mut fit, &log_pred)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(RESIDUAL_STREAM);
    let value = |name: &str, i: usize| conflict.value(name, i);
    let out_rows: Vec<CounterfactualRow> = rows
        .iter()
        .zip(log_pred.iter().zip(&predicted))
        .map(|(&i, (&lp, &pred))| {
            let e = fit.residuals[rng.random_range(0..fit.residuals.len())];
            CounterfactualRow {
                household_id: value("household_id", i).unwrap() as u64,
                wave: value("wave", i).unwrap() as u32,
                lga_id: value("lga_id", i).unwrap() as u32,
                weight: value("weight", i).unwrap_or(1.0),
                observed: value("pcexp", i).unwrap(),
                predicted: pred,
                counterfactual: (lp + e).exp(),
            }
        })
        .collect();

    let table = write_artifact(&cfg.out, "table4.csv", |w| {
        fit.write_csv(&mut *w)?;
        writeln!(w, "# smearing_factor={}", fit.smearing_factor.unwrap())
    })?;
    let cf = write_artifact(&cfg.out, "counterfactual.csv", |w| {
        writeln!(w, "household_id,wave,lga_id,weight,observed,predicted,counterfactual")?;
        for r in &out_rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.household_id, r.wave, r.lga_id, r.weight, r.observed, r.predicted, r.counterfactual
            )?;
        }
        Ok(())
    })?;
    Ok(Step1Output {
        fit,
        rows: out_rows,
        artifacts: vec![table, cf],
    })
}

#[derive(Debug, Clone)]
pub struct Step2Output {
    /// `F_counterfactual − F_observed`.
    pub report: DominanceReport,
    pub prediction: String,
    pub artifacts: Vec<PathBuf>,
}

/// Tie tolerance for comparing two samples of `n_a` and `n_b` independent
/// units.
pub(crate) fn tolerance(cfg: &PipelineConfig, n_a: usize, n_b: usize) -> f64 {
    dkw_tolerance(n_a as f64, n_b as f64, cfg.dominance.tolerance_alpha)
}

pub(crate) fn band_options(cfg: &PipelineConfig, seed: u64, tolerance: f64) -> BandOptions {
    BandOptions {
        replicates: cfg.dominance.replicates,
        level: cfg.dominance.level,
        seed,
        compare: CompareOptions {
            grid_size: cfg.dominance.grid_size,
            tolerance,
        },
    }
}

/// Compares the counterfactual and observed expenditure distributions of
/// conflict-area households. Writes `figure6.csv` and `qm_prediction.txt`.
pub fn step2_dominance(cfg: &PipelineConfig) -> Result<Step2Output, PipelineError> {
    cfg.validate()?;
    let path = cfg.out.join("counterfactual.csv");
    if !path.exists() {
        return Err(PipelineError::Data(format!(
            "step-1 output {} is missing; run step1 first",
            path.display()
        )));
    }
    let f = Frame::from_csv_reader(File::open(&path).map_err(io_err(&path))?)?;
    let col = |name: &str| {
        f.column(name)
            .map_err(|_| PipelineError::Data(format!("{} has no `{name}` column", path.display())))
    };
    let ids = col("household_id")?;
    let weights = col("weight")?;
    let observed = col("observed")?;
    let cf = col("counterfactual")?;
    let w = |i: usize| if cfg.weighted { weights[i].unwrap_or(0.0) } else { 1.0 };
    let sample = |v: &[Option<f64>]| {
        empirical_cdf((0..f.nrows()).filter_map(|i| v[i].map(|x| (x, w(i)))))
    };
    let a = sample(cf)?;
    let b = sample(observed)?;
    let households: BTreeSet<u64> = ids.iter().flatten().map(|&h| h as u64).collect();
    let tol = tolerance(cfg, households.len(), households.len());
    let report = dominance_bands(&a, &b, band_options(cfg, cfg.seed, tol))?;
    let prediction = qm_prediction(&report);
    let fig = write_artifact(&cfg.out, "figure6.csv", |w| report.write_csv(w))?;
    let text = write_artifact(&cfg.out, "qm_prediction.txt", |w| writeln!(w, "{prediction}"))?;
    Ok(Step2Output {
        report,
        prediction,
        artifacts: vec![fig, text],
    })
}

/// Reads the quantile-maximization prediction off a comparison of
/// `F_counterfactual − F_observed`.
///
/// Only grid points whose difference clears the tolerance, and whose band
/// excludes zero when bands exist, count. The lowest such point speaks for
/// the maxmin agent: counterfactual ahead (negative difference) means
/// "maxmin leave". The highest speaks for the maxmax agent: observed ahead
/// (positive difference) means "maxmax stay". Without any such point the
/// answer is "indeterminate".
pub fn qm_prediction(report: &DominanceReport) -> String {
    if report.verdict == Verdict::Equal || report.bands_contain_zero_everywhere() {
        return "indeterminate".into();
    }
    let significant: Vec<usize> = (0..report.grid.len())
        .filter(|&i| report.sign_at(i) != 0 && report.band_excludes_zero(i) != Some(false))
        .collect();
    let (Some(&lo), Some(&hi)) = (significant.first(), significant.last()) else {
        return "indeterminate".into();
    };
    let low = if report.sign_at(lo) < 0 { "leave" } else { "stay" };
    let high = if report.sign_at(hi) > 0 { "stay" } else { "leave" };
    format!("maxmin {low}; maxmax {high}")
}

/// One column of the migration table.
#[derive(Debug, Clone)]
pub struct MigrationColumn {
    pub name: String,
    /// Households in the column's sample.
    pub households: Vec<u64>,
    pub fit: Result<ModelFit, EstimationError>,
    /// Linear probability model on the same sample, when enabled.
    pub lpm: Option<Result<ModelFit, EstimationError>>,
}

#[derive(Debug, Clone)]
pub struct Step3Output {
    pub columns: Vec<MigrationColumn>,
    pub artifacts: Vec<PathBuf>,
}

fn column_name(k: usize) -> String {
    format!("({})", k + 1)
}

fn write_with_failures<'a>(
    w: &mut Vec<u8>,
    fits: impl Iterator<Item = (&'a str, &'a Result<ModelFit, EstimationError>)>,
) -> std::io::Result<()> {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (name, fit) in fits {
        match fit {
            Ok(f) => ok.push((name, f)),
            Err(e) => failed.push((name, e)),
        }
    }
    write_fits_csv(&mut *w, &ok)?;
    for (name, e) in failed {
        writeln!(w, "# model={name} error={e}")?;
    }
    Ok(())
}

/// Binary models of migration status (0 = migrant, 1 = non-migrant) on the
/// risk answer over the nested samples. A model that fails is reported in
/// `table6.csv` and does not stop the others.
pub fn step3_migration_models(cfg: &PipelineConfig) -> Result<Step3Output, PipelineError> {
    cfg.validate()?;
    let data = PanelData::load(cfg)?;
    let sample = data.final_sample();
    let risk = sample.column("risk_averse").map_err(|_| {
        PipelineError::Data("panel has no `risk_averse` column".into())
    })?;
    if risk.iter().all(Option::is_none) {
        return Err(PipelineError::Data("no risk answers in the final wave".into()));
    }
    let mut terms = vec![Term::continuous("risk_averse")];
    terms.extend(cfg.risk_terms()?);
    let spec = DesignSpec::new("migrant_status", terms).weighted(cfg.weight_column());
    let link = cfg.link()?;

    let masks = column_masks(&sample, &cfg.column_thresholds()?);
    let columns: Vec<MigrationColumn> = masks
        .iter()
        .enumerate()
        .map(|(k, mask)| {
            let sub = sample.filter(mask);
            let households = sub
                .column("household_id")
                .map(|c| c.iter().flatten().map(|&h| h as u64).collect())
                .unwrap_or_default();
            let design = build_design(&sub, &spec);
            let fit = design
                .as_ref()
                .map_err(Clone::clone)
                .and_then(|d| binary_mle_fit(d, link, MleOptions::default()));
            let lpm = cfg.migration.lpm_check.then(|| {
                design.as_ref().map_err(Clone::clone).and_then(|d| ols_fit(d, true))
            });
            MigrationColumn {
                name: column_name(k),
                households,
                fit,
                lpm,
            }
        })
        .collect();

    let mut artifacts = vec![write_artifact(&cfg.out, "table6.csv", |w| {
        write_with_failures(w, columns.iter().map(|c| (c.name.as_str(), &c.fit)))
    })?];
    if cfg.migration.lpm_check {
        artifacts.push(write_artifact(&cfg.out, "table6_lpm.csv", |w| {
            write_with_failures(
                w,
                columns
                    .iter()
                    .filter_map(|c| c.lpm.as_ref().map(|l| (c.name.as_str(), l))),
            )
        })?);
    }
    Ok(Step3Output { columns, artifacts })
}

#[derive(Debug, Clone)]
pub struct Step4Output {
    /// Without and with covariates.
    pub fits: Vec<ModelFit>,
    /// Label of the interaction coefficient.
    pub theta_label: String,
    pub artifacts: Vec<PathBuf>,
}

/// Difference in differences of the risk answer: exposure to conflict
/// (`conflict_exposed`, origin class at or above the threshold) against
/// never having migrated (`never_migrated`). Writes `table7.csv`.
pub fn step4_did(cfg: &PipelineConfig) -> Result<Step4Output, PipelineError> {
    cfg.validate()?;
    let data = PanelData::load(cfg)?;
    let mut sample = data.final_sample();
    let threshold = cfg.did_threshold()?.index() as f64;
    let exposed: Vec<Option<f64>> = sample
        .column("origin_class")?
        .iter()
        .map(|c| c.map(|c| f64::from(u8::from(c >= threshold))))
        .collect();
    let never = sample.column("migrant_status")?.to_vec();
    sample.insert("conflict_exposed", exposed)?;
    sample.insert("never_migrated", never)?;
    if !sample.has_column("risk_averse") {
        return Err(PipelineError::Data("panel has no `risk_averse` column".into()));
    }

    let base = DidSpec::new("risk_averse", "conflict_exposed", "never_migrated")
        .weighted(cfg.weight_column());
    let plain = did_fit(&sample, &base, true)?;
    let full = did_fit(&sample, &base.clone().with_covariates(cfg.did_terms()?), true)?;
    let fits = vec![plain, full];
    let table = write_artifact(&cfg.out, "table7.csv", |w| {
        write_fits_csv(w, &[("(1)", &fits[0]), ("(2)", &fits[1])])
    })?;
    Ok(Step4Output {
        fits,
        theta_label: base.theta_label(),
        artifacts: vec![table],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::empirical::EmpiricalDistribution;

    fn report(a: &[f64], b: &[f64], bands: bool) -> DominanceReport {
        let a = EmpiricalDistribution::unweighted(a).unwrap();
        let b = EmpiricalDistribution::unweighted(b).unwrap();
        if bands {
            dominance_bands(&a, &b, BandOptions { replicates: 200, ..BandOptions::default() }).unwrap()
        } else {
            crate::empirical::compare_cdfs(&a, &b, CompareOptions::default()).unwrap()
        }
    }

    fn spread(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn identical_samples_are_indeterminate() {
        let v = spread(200, 1.0, 10.0);
        assert_eq!(qm_prediction(&report(&v, &v, true)), "indeterminate");
        assert_eq!(qm_prediction(&report(&v, &v, false)), "indeterminate");
    }

    #[test]
    fn upward_shift_means_leave_everywhere() {
        let obs = spread(400, 1.0, 10.0);
        let cf: Vec<f64> = obs.iter().map(|v| v + 3.0).collect();
        assert_eq!(qm_prediction(&report(&cf, &obs, true)), "maxmin leave; maxmax leave");
    }

    #[test]
    fn narrower_counterfactual_gives_the_crossing_prediction() {
        let obs = spread(400, 0.0, 10.0);
        let cf = spread(400, 3.0, 7.0);
        assert_eq!(qm_prediction(&report(&cf, &obs, true)), "maxmin leave; maxmax stay");
        // Swapping the roles swaps both answers.
        assert_eq!(qm_prediction(&report(&obs, &cf, true)), "maxmin stay; maxmax leave");
    }

    #[test]
    fn prediction_is_a_function_of_the_report() {
        let r = report(&spread(300, 3.0, 7.0), &spread(300, 0.0, 10.0), true);
        assert_eq!(qm_prediction(&r), qm_prediction(&r.clone()));
    }
}
