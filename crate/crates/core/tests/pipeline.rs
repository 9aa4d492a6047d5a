use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use quantmig::empirical::Verdict;
use quantmig::pipeline::{
    attrition_checks, generate, run_all, step1_welfare, step2_dominance, step3_migration_models,
    step4_did, PipelineConfig,
};
use quantmig::synthdata::synthesize;

fn small(seed: u64, dir: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        seed,
        out: dir.to_path_buf(),
        input: Some(dir.join("panel.csv")),
        ..PipelineConfig::default()
    };
    cfg.generate.n_households = 1500;
    cfg.generate.n_lgas = 60;
    cfg.generate.n_states = 10;
    cfg.dominance.replicates = 200;
    cfg
}

fn manifest_names(dir: &Path) -> Vec<String> {
    fs::read_to_string(dir.join("manifest.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect()
}

#[test]
fn run_all_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(3, dir.path());
    cfg.input = None;
    let summary = run_all(&cfg).unwrap();
    let names = manifest_names(dir.path());
    for want in [
        "panel.csv",
        "table4.csv",
        "counterfactual.csv",
        "figure6.csv",
        "table6.csv",
        "table7.csv",
        "table3.csv",
        "figure4.csv",
        "figure5_risk.csv",
    ] {
        assert!(names.iter().any(|n| n == want), "{want} missing from {names:?}");
    }
    assert_eq!(names.len(), summary.manifest.len());
    assert!(summary.prediction.is_some());
    for e in &summary.manifest {
        assert_eq!(e.sha256.len(), 64);
        assert!(dir.path().join(&e.artifact).exists());
    }
}

#[test]
fn toggles_skip_steps() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(4, dir.path());
    generate(&cfg).unwrap();
    cfg.steps.generate = Some(false);
    cfg.steps.step3 = false;
    cfg.steps.step4 = false;
    cfg.steps.attrition = false;
    run_all(&cfg).unwrap();
    let names: BTreeSet<String> = manifest_names(dir.path()).into_iter().collect();
    let want: BTreeSet<String> = ["table4.csv", "counterfactual.csv", "figure6.csv", "qm_prediction.txt"]
        .into_iter()
        .map(String::from)
        .collect();
    assert_eq!(names, want);
    assert!(!dir.path().join("table6.csv").exists());
}

#[test]
fn step2_without_counterfactual_fails_as_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(5, dir.path());
    generate(&cfg).unwrap();
    cfg.steps.generate = Some(false);
    cfg.steps.step1 = false;
    let err = run_all(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().starts_with("step2 failed"), "{err}");
    // The panel written earlier is left alone.
    assert!(dir.path().join("panel.csv").exists());
}

#[test]
fn welfare_model_recovers_planted_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(21, dir.path());
    cfg.generate.n_households = 20_000;
    cfg.generate.n_lgas = 300;
    cfg.generate.n_states = 37;
    generate(&cfg).unwrap();
    let truth = synthesize(&cfg.generate, cfg.seed).unwrap().welfare;
    let fit = step1_welfare(&cfg).unwrap().fit;
    let mut checked = 0;
    for label in &fit.labels {
        if label == "const" || label.starts_with("state_id") {
            continue;
        }
        let (b, se) = (fit.coef(label).unwrap(), fit.se(label).unwrap());
        let want = truth.coefficient(label);
        assert!((b - want).abs() <= 3.0 * se, "{label}: {b} ± {se}, planted {want}");
        checked += 1;
    }
    assert!(checked > 20);
}

#[test]
fn noiseless_welfare_model_fits_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(6, dir.path());
    cfg.generate.sigma_none = 0.0;
    cfg.generate.sigma_migrant = 0.0;
    generate(&cfg).unwrap();
    let s = step1_welfare(&cfg).unwrap();
    assert!(s.fit.r_squared > 0.999, "{}", s.fit.r_squared);
    assert!((s.fit.smearing_factor.unwrap() - 1.0).abs() < 1e-6, "{:?} {}", s.fit.smearing_factor, s.fit.r_squared);
}

#[test]
fn shifted_counterfactual_is_dominated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(7, dir.path());
    generate(&cfg).unwrap();
    step1_welfare(&cfg).unwrap();
    // Replace the counterfactual with observed expenditure raised by a
    // fixed amount, so leaving is better at every quantile.
    let path = dir.path().join("counterfactual.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    let cols: Vec<&str> = header.split(',').collect();
    let obs = cols.iter().position(|c| *c == "observed").unwrap();
    let cf = cols.iter().position(|c| *c == "counterfactual").unwrap();
    let mut rewritten = format!("{header}\n");
    for line in lines {
        let mut f: Vec<String> = line.split(',').map(String::from).collect();
        let y: f64 = f[obs].parse().unwrap();
        f[cf] = (y * 1.5 + 500.0).to_string();
        rewritten.push_str(&f.join(","));
        rewritten.push('\n');
    }
    fs::write(&path, rewritten).unwrap();
    let out = step2_dominance(&cfg).unwrap();
    assert_eq!(out.report.verdict, Verdict::ADominates);
    assert_eq!(out.prediction, "maxmin leave; maxmax leave");
}

#[test]
fn migration_samples_nest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(8, dir.path());
    generate(&cfg).unwrap();
    let out = step3_migration_models(&cfg).unwrap();
    assert_eq!(out.columns.len(), 3);
    let sets: Vec<BTreeSet<u64>> = out
        .columns
        .iter()
        .map(|c| c.households.iter().copied().collect())
        .collect();
    assert!(sets[2].is_subset(&sets[1]) && sets[1].is_subset(&sets[0]));
    assert!(sets[2].len() < sets[0].len());
}

#[test]
fn risk_attitude_irrelevant_to_moving_gives_no_effect() {
    // Leaving is better at every quantile, so everyone with the chance to
    // move does so whatever their attitude to risk.
    let significant = (0..10)
        .filter(|&seed| {
            let dir = tempfile::tempdir().unwrap();
            let mut cfg = small(100 + seed, dir.path());
            cfg.generate.n_households = 3000;
            cfg.generate.sigma_conflict = 0.5;
            cfg.generate.sigma_migrant = 0.5;
            cfg.generate.conflict_penalty = 0.0;
            cfg.generate.leave_cost = -0.3;
            cfg.migration.columns = vec!["none".into()];
            generate(&cfg).unwrap();
            let out = step3_migration_models(&cfg).unwrap();
            let fit = out.columns[0].fit.as_ref().unwrap();
            fit.p_value("risk_averse").unwrap() < 0.05
        })
        .count();
    assert!(significant <= 2, "{significant}/10 significant");
}

#[test]
fn unweighted_did_matches_cell_means() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(9, dir.path());
    cfg.weighted = false;
    cfg.generate.opportunity = [0.3; 3];
    generate(&cfg).unwrap();
    let out = step4_did(&cfg).unwrap();
    let theta = out.fits[0].coef(&out.theta_label).unwrap();

    // Independent oracle: the final-wave cell means straight from the CSV.
    let mut rdr = csv::Reader::from_path(dir.path().join("panel.csv")).unwrap();
    let head = rdr.headers().unwrap().clone();
    let col = |n: &str| head.iter().position(|h| h == n).unwrap();
    let (hid, wave, lga, risk, status, migrated, conflict) = (
        col("household_id"),
        col("wave"),
        col("lga_id"),
        col("risk_averse"),
        col("attrition_status"),
        col("migrated"),
        col("conflict"),
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    let num = |r: &csv::StringRecord, i: usize| r[i].parse::<f64>().ok();
    let last = rows.iter().filter_map(|r| num(r, wave)).fold(0.0, f64::max);
    let first = rows.iter().filter_map(|r| num(r, wave)).fold(f64::INFINITY, f64::min);

    // Conflict class from the fatality flags over all waves.
    let mut flags: std::collections::BTreeMap<(u64, u64), bool> = Default::default();
    for r in &rows {
        let key = (num(r, lga).unwrap() as u64, num(r, wave).unwrap() as u64);
        let f = num(r, conflict).unwrap_or(0.0) > 0.0;
        let e = flags.entry(key).or_insert(false);
        *e |= f;
    }
    let mut class: std::collections::BTreeMap<u64, (usize, usize)> = Default::default();
    for (&(l, _), &f) in &flags {
        let e = class.entry(l).or_insert((0, 0));
        e.0 += 1;
        e.1 += usize::from(f);
    }
    let exposed_lga = |l: u64| class[&l].1 > 0;

    let mut origin: std::collections::BTreeMap<u64, u64> = Default::default();
    let mut moved: BTreeSet<u64> = BTreeSet::new();
    let mut lga_seen: std::collections::BTreeMap<u64, BTreeSet<u64>> = Default::default();
    for r in &rows {
        let h = num(r, hid).unwrap() as u64;
        if num(r, wave) == Some(first) {
            origin.insert(h, num(r, lga).unwrap() as u64);
        }
        lga_seen.entry(h).or_default().insert(num(r, lga).unwrap() as u64);
        if num(r, migrated).unwrap_or(0.0) > 0.0 {
            moved.insert(h);
        }
    }
    let mut cells = [[(0.0, 0usize); 2]; 2];
    for r in &rows {
        if num(r, wave) != Some(last) {
            continue;
        }
        let st = &r[status];
        if !(st == "interviewed" || st == "tracked") {
            continue;
        }
        let Some(y) = num(r, risk) else { continue };
        let h = num(r, hid).unwrap() as u64;
        let migrant = moved.contains(&h) || lga_seen[&h].len() > 1;
        let e = usize::from(exposed_lga(origin[&h]));
        let s = usize::from(!migrant);
        cells[e][s].0 += y;
        cells[e][s].1 += 1;
    }
    let m = |e: usize, s: usize| cells[e][s].0 / cells[e][s].1 as f64;
    let oracle = (m(1, 1) - m(1, 0)) - (m(0, 1) - m(0, 0));
    assert!((theta - oracle).abs() < 1e-9, "{theta} vs {oracle}");
}

#[test]
fn no_attrition_means_no_differences() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(10, dir.path());
    cfg.weighted = false;
    cfg.generate.attrition_rate = 0.0;
    generate(&cfg).unwrap();
    let a = attrition_checks(&cfg).unwrap();
    assert!(!a.means.is_empty());
    for m in &a.means {
        assert!(m.unweighted.f_stat.abs() < 1e-9, "{}: F = {}", m.variable, m.unweighted.f_stat);
        assert!(m.unweighted.p_value > 1.0 - 1e-9);
    }
    assert_eq!(a.expenditure.verdict, Verdict::Equal);
    assert_eq!(a.risk.verdict, Verdict::Equal);
}
