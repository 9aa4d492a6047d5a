use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use super::data::PanelData;
use super::steps::{band_options, tolerance};
use super::{write_artifact, PipelineConfig, PipelineError};
use crate::econometrics::{
    binary_mle_fit, build_design, mean_equality_test, ols_fit, predict_log, smearing_retransform,
    DesignSpec, Link, MeanTest, MleOptions, ModelFit, Term,
};
use crate::empirical::{dominance_bands, empirical_cdf, DominanceReport};
use crate::frame::Frame;

/// Mean comparison of one variable between survivors and the full first
/// wave.
#[derive(Debug, Clone, PartialEq)]
pub struct MeansRow {
    pub variable: String,
    /// Survivors with attrition-adjusted weights against everyone with base
    /// weights.
    pub weighted: MeanTest,
    pub unweighted: MeanTest,
}

#[derive(Debug, Clone)]
pub struct AttritionOutput {
    pub means: Vec<MeansRow>,
    /// First-wave log expenditure model on the full sample.
    pub expenditure_fit: ModelFit,
    /// Logit of the final-wave risk answer on first-wave covariates, fitted
    /// on survivors.
    pub risk_fit: ModelFit,
    /// `F_full − F_survivors` of predicted expenditure.
    pub expenditure: DominanceReport,
    /// `F_full − F_survivors` of the predicted probability of being risk
    /// tolerant.
    pub risk: DominanceReport,
    pub artifacts: Vec<PathBuf>,
}

/// Variables the mean tests cover: continuous terms as they are, one
/// indicator per level of categorical terms. Interactions and fixed effects
/// are skipped.
fn mean_test_columns(frame: &Frame, terms: &[Term]) -> Result<Vec<(String, Vec<Option<f64>>)>, PipelineError> {
    let mut out = Vec::new();
    for t in terms {
        match t {
            Term::Continuous(name) => {
                let col = frame.column(name).map_err(|_| {
                    PipelineError::Data(format!("panel has no `{name}` column"))
                })?;
                out.push((name.clone(), col.to_vec()));
            }
            Term::Categorical { name, .. } => {
                let col = frame.column(name).map_err(|_| {
                    PipelineError::Data(format!("panel has no `{name}` column"))
                })?;
                let mut levels: Vec<f64> = col.iter().flatten().copied().collect();
                levels.sort_by(f64::total_cmp);
                levels.dedup();
                for l in levels {
                    let ind = col.iter().map(|v| v.map(|v| f64::from(u8::from(v == l)))).collect();
                    out.push((format!("{name}={l}"), ind));
                }
            }
            Term::Interaction(..) | Term::FixedEffect(_) => {}
        }
    }
    Ok(out)
}

fn compare(
    cfg: &PipelineConfig,
    values: &[f64],
    rows: &[usize],
    survivor: &[bool],
    base_w: &[f64],
    final_w: &[f64],
    seed: u64,
) -> Result<DominanceReport, PipelineError> {
    let full = empirical_cdf(rows.iter().zip(values).map(|(&i, &v)| (v, base_w[i])))?;
    let kept: Vec<(f64, f64)> = rows
        .iter()
        .zip(values)
        .filter(|(&i, _)| survivor[i])
        .map(|(&i, &v)| (v, final_w[i]))
        .collect();
    let n_kept = kept.len();
    let surv = empirical_cdf(kept)?;
    let tol = tolerance(cfg, rows.len(), n_kept);
    Ok(dominance_bands(&full, &surv, band_options(cfg, seed, tol))?)
}

/// Checks whether losing households by the final wave distorts the sample:
/// mean tests on first-wave covariates (`table3.csv`), and CDF comparisons of
/// predicted expenditure (`figure4.csv`) and predicted risk tolerance
/// (`figure5_risk.csv`) between the full first wave and the survivors. The
/// underlying fits go to `table4_attrition.csv` and `table5.csv`.
pub fn attrition_checks(cfg: &PipelineConfig) -> Result<AttritionOutput, PipelineError> {
    cfg.validate()?;
    let data = PanelData::load(cfg)?;
    if data.frame.text("attrition_status").is_err() {
        return Err(PipelineError::Data("panel has no `attrition_status` column".into()));
    }
    let terms = cfg.attrition_terms()?;
    let first_wave = data
        .frame
        .column("wave")?
        .iter()
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min);

    // Final-wave status, weight and risk answer per household.
    let mut last: BTreeMap<u64, (bool, Option<f64>, Option<f64>)> = BTreeMap::new();
    for i in 0..data.frame.nrows() {
        if data.wave_of(i) == data.last_wave {
            let id = data.frame.value("household_id", i).unwrap() as u64;
            let observed = data.is_observed(i);
            last.insert(
                id,
                (observed, data.frame.value("weight", i), data.frame.value("risk_averse", i)),
            );
        }
    }
    let mut base = data.wave_rows(first_wave);
    let n = base.nrows();
    let ids: Vec<u64> = base
        .column("household_id")?
        .iter()
        .map(|v| v.unwrap() as u64)
        .collect();
    let survivor: Vec<bool> = ids.iter().map(|h| last.get(h).is_some_and(|l| l.0)).collect();
    if !survivor.contains(&true) {
        return Err(PipelineError::Data("no household survives to the final wave".into()));
    }
    let weighted = cfg.weighted;
    let base_w: Vec<f64> = (0..n)
        .map(|i| if weighted { base.value("weight", i).unwrap_or(0.0) } else { 1.0 })
        .collect();
    let final_w: Vec<f64> = ids
        .iter()
        .zip(&survivor)
        .map(|(h, &s)| match (weighted, s) {
            (_, false) => 0.0,
            (false, true) => 1.0,
            (true, true) => last[h].1.unwrap_or(0.0),
        })
        .collect();
    let risk: Vec<Option<f64>> = ids
        .iter()
        .zip(&survivor)
        .map(|(h, &s)| if s { last[h].2 } else { None })
        .collect();
    base.insert_dense("final_weight", final_w.clone())?;
    base.insert("risk_averse", risk)?;

    let mut means = Vec::new();
    for (variable, col) in mean_test_columns(&base, &terms)? {
        let pairs = |keep: &dyn Fn(usize) -> bool, w: &dyn Fn(usize) -> f64| -> Vec<(f64, f64)> {
            (0..n).filter(|&i| keep(i)).filter_map(|i| col[i].map(|v| (v, w(i)))).collect()
        };
        let all = |_: usize| true;
        let kept = |i: usize| survivor[i];
        let one = |_: usize| 1.0;
        let weighted_test = mean_equality_test(
            &pairs(&kept, &|i| final_w[i]),
            &pairs(&all, &|i| base_w[i]),
        )?;
        let unweighted_test = mean_equality_test(&pairs(&kept, &one), &pairs(&all, &one))?;
        means.push(MeansRow {
            variable,
            weighted: weighted_test,
            unweighted: unweighted_test,
        });
    }

    let wcol = weighted.then_some("weight");
    let exp_spec = DesignSpec::new("ln_pcexp", terms.clone()).weighted(wcol);
    let exp_design = build_design(&base, &exp_spec)?;
    let mut expenditure_fit = ols_fit(&exp_design, true)?;
    let (x, rows) = exp_design.encoder.encode(&base)?;
    let log_pred = predict_log(&expenditure_fit, &x, exp_design.encoder.labels())?;
    let exp_pred = smearing_retransform(&mut expenditure_fit, &log_pred)?;
    let expenditure = compare(cfg, &exp_pred, &rows, &survivor, &base_w, &final_w, cfg.seed.wrapping_add(1))?;

    let respondents = base.filter(&survivor);
    let risk_spec = DesignSpec::new("risk_averse", terms).weighted(weighted.then_some("final_weight"));
    let risk_design = build_design(&respondents, &risk_spec)?;
    let risk_fit = binary_mle_fit(&risk_design, Link::Logit, MleOptions::default())?;
    let (x, rows) = risk_design.encoder.encode(&base)?;
    let index = predict_log(&risk_fit, &x, risk_design.encoder.labels())?;
    let tolerant: Vec<f64> = index.iter().map(|z| 1.0 - 1.0 / (1.0 + (-z).exp())).collect();
    let risk = compare(cfg, &tolerant, &rows, &survivor, &base_w, &final_w, cfg.seed.wrapping_add(2))?;

    let mut artifacts = Vec::new();
    artifacts.push(write_artifact(&cfg.out, "table3.csv", |w| {
        writeln!(w, "variable,mean_survivors,mean_overall,f,p,f_unweighted,p_unweighted")?;
        for m in &means {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                m.variable,
                m.weighted.mean_a,
                m.weighted.mean_b,
                m.weighted.f_stat,
                m.weighted.p_value,
                m.unweighted.f_stat,
                m.unweighted.p_value
            )?;
        }
        Ok(())
    })?);
    artifacts.push(write_artifact(&cfg.out, "table4_attrition.csv", |w| expenditure_fit.write_csv(w))?);
    artifacts.push(write_artifact(&cfg.out, "table5.csv", |w| risk_fit.write_csv(w))?);
    artifacts.push(write_artifact(&cfg.out, "figure4.csv", |w| expenditure.write_csv(w))?);
    artifacts.push(write_artifact(&cfg.out, "figure5_risk.csv", |w| risk.write_csv(w))?);
    Ok(AttritionOutput {
        means,
        expenditure_fit,
        risk_fit,
        expenditure,
        risk,
        artifacts,
    })
}
