//! The four-step analysis plus attrition checks, run over a panel CSV.
//!
//! Every step reads the panel (and step 2 the step-1 output) from disk and
//! writes its artifacts to the output directory, so steps can be rerun one at
//! a time. [`run_all`] chains them and records a digest of every artifact in
//! `manifest.csv`.
//!
//! Migration status is coded as in the published tables: 0 = migrant,
//! 1 = non-migrant.

mod attrition;
mod config;
mod data;
mod steps;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::econometrics::EstimationError;
use crate::empirical::EmpiricalError;
use crate::frame::FrameError;
use crate::synthdata::{self, SynthError};

pub use attrition::{attrition_checks, AttritionOutput, MeansRow};
pub use config::{
    AttritionSettings, DidSettings, DominanceSettings, MigrationSettings, PipelineConfig,
    StepToggles, WelfareSettings,
};
pub use data::{column_masks, PanelData, MIGRANT, NON_MIGRANT};
pub use steps::{
    qm_prediction, step1_welfare, step2_dominance, step3_migration_models, step4_did,
    CounterfactualRow, MigrationColumn, Step1Output, Step2Output, Step3Output, Step4Output,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid data: {0}")]
    Data(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Empirical(#[from] EmpiricalError),
    #[error("{step} failed: {source}")]
    Step {
        step: &'static str,
        source: Box<PipelineError>,
    },
}

impl PipelineError {
    /// Process exit status: 2 for bad input or configuration, 3 when an
    /// estimator fails on valid input.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Estimation(_) | PipelineError::Empirical(_) => 3,
            PipelineError::Step { source, .. } => source.exit_code(),
            _ => 2,
        }
    }

    fn in_step(self, step: &'static str) -> Self {
        match self {
            e @ PipelineError::Step { .. } => e,
            e => PipelineError::Step {
                step,
                source: Box::new(e),
            },
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Renders an artifact in memory and writes it to `out/name`.
pub(crate) fn write_artifact(
    out: &Path,
    name: &str,
    render: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
) -> Result<PathBuf, PipelineError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let path = out.join(name);
    let mut buf = Vec::new();
    render(&mut buf).map_err(io_err(&path))?;
    fs::write(&path, buf).map_err(io_err(&path))?;
    Ok(path)
}

/// Paths of the generated files.
#[derive(Debug, Clone)]
pub struct GenerateOutput {
    pub panel: PathBuf,
    pub artifacts: Vec<PathBuf>,
}

/// Synthesizes a panel with the `[generate]` settings and writes
/// `panel.csv`, `agents.csv` and `lgas.csv`.
pub fn generate(config: &PipelineConfig) -> Result<GenerateOutput, PipelineError> {
    let pop = synthdata::synthesize(&config.generate, config.seed)?;
    let out = &config.out;
    let panel = write_artifact(out, "panel.csv", |w| {
        synthdata::write_panel_csv(&pop.panel, w)
    })?;
    let agents = write_artifact(out, "agents.csv", |w| {
        synthdata::write_agents_csv(&pop.agents, w)
    })?;
    let lgas = write_artifact(out, "lgas.csv", |w| synthdata::write_lgas_csv(&pop.lgas, w))?;
    Ok(GenerateOutput {
        panel: panel.clone(),
        artifacts: vec![panel, agents, lgas],
    })
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub artifact: String,
    pub sha256: String,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub manifest: Vec<ManifestEntry>,
    pub prediction: Option<String>,
}

fn digest(path: &Path) -> Result<String, PipelineError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let hash = Sha256::digest(&bytes);
    Ok(hash.iter().map(|b| format!("{b:02x}")).collect())
}

/// Runs the enabled steps in order and writes `manifest.csv`. The first
/// failure aborts the run; files already written stay in place.
pub fn run_all(config: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    config.validate()?;
    let mut cfg = config.clone();
    let mut artifacts: Vec<PathBuf> = Vec::new();
    let mut prediction = None;

    if cfg.should_generate() {
        let g = generate(&cfg).map_err(|e| e.in_step("generate"))?;
        cfg.input = Some(g.panel);
        artifacts.extend(g.artifacts);
    }
    if cfg.steps.step1 {
        let s = step1_welfare(&cfg).map_err(|e| e.in_step("step1"))?;
        artifacts.extend(s.artifacts);
    }
    if cfg.steps.step2 {
        let s = step2_dominance(&cfg).map_err(|e| e.in_step("step2"))?;
        prediction = Some(s.prediction);
        artifacts.extend(s.artifacts);
    }
    if cfg.steps.step3 {
        let s = step3_migration_models(&cfg).map_err(|e| e.in_step("step3"))?;
        artifacts.extend(s.artifacts);
    }
    if cfg.steps.step4 {
        let s = step4_did(&cfg).map_err(|e| e.in_step("step4"))?;
        artifacts.extend(s.artifacts);
    }
    if cfg.steps.attrition {
        let s = attrition_checks(&cfg).map_err(|e| e.in_step("attrition"))?;
        artifacts.extend(s.artifacts);
    }

    let mut manifest = Vec::with_capacity(artifacts.len());
    for path in &artifacts {
        let name = path
            .strip_prefix(&cfg.out)
            .unwrap_or(path)
            .to_string_lossy()
            .into_owned();
        manifest.push(ManifestEntry {
            artifact: name,
            sha256: digest(path)?,
        });
    }
    write_artifact(&cfg.out, "manifest.csv", |w| {
        writeln!(w, "artifact,sha256")?;
        for e in &manifest {
            writeln!(w, "{},{}", e.artifact, e.sha256)?;
        }
        Ok(())
    })?;
    Ok(RunSummary {
        manifest,
        prediction,
    })
}
