use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use quantmig::pipeline::{
    self, attrition_checks, run_all, step1_welfare, step2_dominance, step3_migration_models,
    step4_did, PipelineConfig, PipelineError,
};

/// Quantile-maximization analysis of conflict migration on household panels.
#[derive(Debug, Parser)]
#[command(name = "quantmig", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Panel CSV. Defaults to `<out>/panel.csv`.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Drop the dwelling-quality covariates from the welfare model.
    #[arg(long, global = true)]
    no_dwelling: bool,
    /// Ignore survey weights everywhere.
    #[arg(long, global = true)]
    unweighted: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a panel with planted truth.
    Generate,
    /// Welfare model in conflict-free areas and counterfactual expenditure.
    Step1,
    /// Dominance analysis of observed against counterfactual expenditure.
    Step2,
    /// Migration status on risk aversion over the nested samples.
    Step3,
    /// Difference in differences of risk aversion.
    Step4,
    /// Attrition mean tests and prediction CDF comparisons.
    Attrition,
    /// Every enabled step in order, plus a manifest of digests.
    RunAll,
}

fn config(c: &Common) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &c.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.out = out.clone();
    }
    if let Some(input) = &c.input {
        cfg.input = Some(input.clone());
    }
    if c.no_dwelling {
        cfg.welfare.dwelling = false;
    }
    if c.unweighted {
        cfg.weighted = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn coef_line(name: &str, fit: &quantmig::econometrics::ModelFit, label: &str) -> String {
    format!(
        "{name}: {label} = {:.4} (se {:.4}, p {:.4}), n = {}",
        fit.coef(label).unwrap_or(f64::NAN),
        fit.se(label).unwrap_or(f64::NAN),
        fit.p_value(label).unwrap_or(f64::NAN),
        fit.n_obs
    )
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let cfg = config(&cli.common)?;
    match cli.command {
        Command::Generate => {
            let g = pipeline::generate(&cfg)?;
            for p in g.artifacts {
                println!("wrote {}", p.display());
            }
        }
        Command::Step1 => {
            let s = step1_welfare(&cfg)?;
            println!(
                "welfare model: n = {}, R² = {:.4}, smearing factor = {:.4}; {} counterfactual rows",
                s.fit.n_obs,
                s.fit.r_squared,
                s.fit.smearing_factor.unwrap_or(f64::NAN),
                s.rows.len()
            );
        }
        Command::Step2 => {
            let s = step2_dominance(&cfg)?;
            let crossings: Vec<String> = s.report.crossings.iter().map(|c| format!("{c:.2}")).collect();
            println!(
                "verdict: {}; crossings: [{}]; prediction: {}",
                s.report.verdict.as_str(),
                crossings.join(", "),
                s.prediction
            );
        }
        Command::Step3 => {
            let s = step3_migration_models(&cfg)?;
            for c in &s.columns {
                match &c.fit {
                    Ok(f) => println!("{}", coef_line(&c.name, f, "risk_averse")),
                    Err(e) => println!("{}: failed: {e}", c.name),
                }
            }
        }
        Command::Step4 => {
            let s = step4_did(&cfg)?;
            for (name, f) in ["(1)", "(2)"].iter().zip(&s.fits) {
                println!("{}", coef_line(name, f, &s.theta_label));
            }
        }
        Command::Attrition => {
            let a = attrition_checks(&cfg)?;
            let flagged = a.means.iter().filter(|m| m.weighted.p_value < 0.05).count();
            println!("mean tests: {flagged} of {} variables differ at 5%", a.means.len());
            for (name, r) in [("expenditure", &a.expenditure), ("risk tolerance", &a.risk)] {
                println!(
                    "{name}: verdict {}, bands contain 0 everywhere: {}",
                    r.verdict.as_str(),
                    r.bands_contain_zero_everywhere()
                );
            }
        }
        Command::RunAll => {
            let s = run_all(&cfg)?;
            println!("{} artifacts in {}", s.manifest.len(), cfg.out.display());
            if let Some(p) = s.prediction {
                println!("prediction: {p}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
