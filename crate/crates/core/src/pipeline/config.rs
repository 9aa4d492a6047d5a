use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::econometrics::{Link, Term};
use crate::synthdata::{ConflictClass, SynthConfig};

const WELFARE_TERMS: &[&str] = &[
    "rururb",
    "hhsize",
    "dep_share",
    "hh_sex",
    "hh_agey",
    "hh_eduyrs",
    "hh_empl",
    "hh_marstat",
    "int:hh_sex:hh_marstat",
    "cat:hh_language:1",
    "dwel_rooms",
    "cat:dwel_roof:1",
    "cat:dwel_wall:1",
    "cat:dwel_floor:1",
    "cat:dwel_toilet:1",
    "cat:dwel_fuellight:1",
    "cat:dwel_fuelcook:1",
    "cat:dwel_gdisp:1",
    "own_tv",
    "own_fridge",
    "own_stove",
    "own_bcycle",
    "own_car",
    "own_iron",
    "fe:state_id",
];

// Language is left out: it nearly predicts conflict exposure.
const RISK_TERMS: &[&str] = &[
    "hhsize",
    "dep_share",
    "hh_sex",
    "hh_agey",
    "hh_eduyrs",
    "hh_empl",
    "hh_marstat",
    "int:hh_sex:hh_marstat",
    "dwel_rooms",
    "cat:dwel_wall:1",
    "own_tv",
    "own_fridge",
    "own_stove",
    "own_bcycle",
    "own_car",
    "own_iron",
];

const ATTRITION_TERMS: &[&str] = &[
    "rururb",
    "hhsize",
    "dep_share",
    "hh_sex",
    "hh_agey",
    "hh_eduyrs",
    "hh_empl",
    "hh_marstat",
    "cat:hh_language:1",
    "dwel_rooms",
    "cat:dwel_roof:1",
    "cat:dwel_wall:1",
    "cat:dwel_floor:1",
    "cat:dwel_toilet:1",
    "own_tv",
    "own_fridge",
    "own_stove",
    "own_bcycle",
    "own_car",
    "own_iron",
];

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepToggles {
    /// Synthesize the input panel first. Unset means "only when no input is
    /// configured".
    pub generate: Option<bool>,
    pub step1: bool,
    pub step2: bool,
    pub step3: bool,
    pub step4: bool,
    pub attrition: bool,
}

impl Default for StepToggles {
    fn default() -> Self {
        Self {
            generate: None,
            step1: true,
            step2: true,
            step3: true,
            step4: true,
            attrition: true,
        }
    }
}

/// Step 1: log expenditure on covariates in conflict-free LGAs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WelfareSettings {
    pub terms: Vec<String>,
    /// Keep the dwelling-quality covariates (`dwel_*`).
    pub dwelling: bool,
    pub robust: bool,
}

impl Default for WelfareSettings {
    fn default() -> Self {
        Self {
            terms: strings(WELFARE_TERMS),
            dwelling: true,
            robust: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DominanceSettings {
    pub grid_size: usize,
    pub replicates: usize,
    pub level: f64,
    /// Significance of the two-sample DKW bound used as the tie tolerance
    /// when reading signs and crossings off the CDF difference.
    pub tolerance_alpha: f64,
}

impl Default for DominanceSettings {
    fn default() -> Self {
        Self {
            grid_size: crate::empirical::DEFAULT_GRID_SIZE,
            replicates: crate::empirical::DEFAULT_REPLICATES,
            level: crate::empirical::DEFAULT_LEVEL,
            tolerance_alpha: 0.05,
        }
    }
}

/// Step 3: probits of migration status on the risk answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MigrationSettings {
    /// `probit` or `logit`.
    pub link: String,
    pub terms: Vec<String>,
    /// One entry per column: the least conflict class of origin a
    /// non-migrant needs to enter that column's sample. Migrants enter every
    /// column. Entries must be non-decreasing so the samples nest.
    pub columns: Vec<String>,
    /// Also fit linear probability models.
    pub lpm_check: bool,
}

impl Default for MigrationSettings {
    fn default() -> Self {
        Self {
            link: "probit".into(),
            terms: strings(RISK_TERMS),
            columns: strings(&["none", "some", "always"]),
            lpm_check: true,
        }
    }
}

/// Step 4: difference in differences on the risk answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DidSettings {
    /// Least origin class that counts as exposed to conflict.
    pub conflict_min_class: String,
    pub terms: Vec<String>,
}

impl Default for DidSettings {
    fn default() -> Self {
        Self {
            conflict_min_class: "some".into(),
            terms: strings(RISK_TERMS),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttritionSettings {
    /// Predictors of the expenditure and risk models; the mean tests run on
    /// each variable (and each level of a categorical one).
    pub terms: Vec<String>,
}

impl Default for AttritionSettings {
    fn default() -> Self {
        Self {
            terms: strings(ATTRITION_TERMS),
        }
    }
}

/// Everything a run needs. Every key has a default, so an empty file is a
/// valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Panel CSV. Without it the panel is synthesized into `out`.
    pub input: Option<PathBuf>,
    /// Optional LGA table (`lga_id,...,conflict_class`) overriding the
    /// classes derived from the panel's per-wave conflict flags.
    pub lgas: Option<PathBuf>,
    pub out: PathBuf,
    /// Use the panel's `weight` column in every estimator and ECDF.
    pub weighted: bool,
    pub steps: StepToggles,
    pub generate: SynthConfig,
    pub welfare: WelfareSettings,
    pub dominance: DominanceSettings,
    pub migration: MigrationSettings,
    pub did: DidSettings,
    pub attrition: AttritionSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            input: None,
            lgas: None,
            out: PathBuf::from("out"),
            weighted: true,
            steps: StepToggles::default(),
            generate: SynthConfig::default(),
            welfare: WelfareSettings::default(),
            dominance: DominanceSettings::default(),
            migration: MigrationSettings::default(),
            did: DidSettings::default(),
            attrition: AttritionSettings::default(),
        }
    }
}

fn parse_terms(list: &[String]) -> Result<Vec<Term>, PipelineError> {
    list.iter()
        .map(|s| Term::parse(s).map_err(|e| PipelineError::Config(e.to_string())))
        .collect()
}

fn parse_class(s: &str) -> Result<ConflictClass, PipelineError> {
    ConflictClass::parse(s)
        .ok_or_else(|| PipelineError::Config(format!("unknown conflict class `{s}`")))
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(super::io_err(path))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn should_generate(&self) -> bool {
        self.steps.generate.unwrap_or(self.input.is_none())
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let d = &self.dominance;
        if d.grid_size < 2 {
            return Err(PipelineError::Config("dominance.grid_size must be at least 2".into()));
        }
        if d.replicates < 100 {
            return Err(PipelineError::Config("dominance.replicates must be at least 100".into()));
        }
        if !(d.level > 0.0 && d.level < 1.0) {
            return Err(PipelineError::Config("dominance.level must lie in (0, 1)".into()));
        }
        if !(d.tolerance_alpha > 0.0 && d.tolerance_alpha < 1.0) {
            return Err(PipelineError::Config(
                "dominance.tolerance_alpha must lie in (0, 1)".into(),
            ));
        }
        self.welfare_terms()?;
        self.risk_terms()?;
        self.did_terms()?;
        self.attrition_terms()?;
        self.link()?;
        self.did_threshold()?;
        self.column_thresholds()?;
        if self.should_generate() {
            self.generate.validate()?;
        }
        Ok(())
    }

    /// Step-1 terms, without `dwel_*` variables when dwelling is off.
    pub fn welfare_terms(&self) -> Result<Vec<Term>, PipelineError> {
        let kept: Vec<String> = self
            .welfare
            .terms
            .iter()
            .filter(|t| self.welfare.dwelling || !t.contains("dwel_"))
            .cloned()
            .collect();
        parse_terms(&kept)
    }

    pub fn risk_terms(&self) -> Result<Vec<Term>, PipelineError> {
        parse_terms(&self.migration.terms)
    }

    pub fn did_terms(&self) -> Result<Vec<Term>, PipelineError> {
        parse_terms(&self.did.terms)
    }

    pub fn attrition_terms(&self) -> Result<Vec<Term>, PipelineError> {
        parse_terms(&self.attrition.terms)
    }

    pub fn link(&self) -> Result<Link, PipelineError> {
        match self.migration.link.as_str() {
            "probit" => Ok(Link::Probit),
            "logit" => Ok(Link::Logit),
            other => Err(PipelineError::Config(format!("unknown link `{other}`"))),
        }
    }

    pub fn did_threshold(&self) -> Result<ConflictClass, PipelineError> {
        let c = parse_class(&self.did.conflict_min_class)?;
        if c == ConflictClass::None {
            return Err(PipelineError::Config(
                "did.conflict_min_class must be `some` or `always`".into(),
            ));
        }
        Ok(c)
    }

    pub fn column_thresholds(&self) -> Result<Vec<ConflictClass>, PipelineError> {
        let cols = self
            .migration
            .columns
            .iter()
            .map(|s| parse_class(s))
            .collect::<Result<Vec<_>, _>>()?;
        if cols.is_empty() {
            return Err(PipelineError::Config("migration.columns is empty".into()));
        }
        if cols.windows(2).any(|w| w[1] < w[0]) {
            return Err(PipelineError::Config(
                "migration.columns must be non-decreasing so the samples nest".into(),
            ));
        }
        Ok(cols)
    }

    pub(crate) fn weight_column(&self) -> Option<&'static str> {
        self.weighted.then_some("weight")
    }

    pub(crate) fn input_path(&self) -> Result<PathBuf, PipelineError> {
        let path = match &self.input {
            Some(p) => p.clone(),
            None => self.out.join("panel.csv"),
        };
        if !path.exists() {
            return Err(PipelineError::Config(format!(
                "input panel {} does not exist",
                path.display()
            )));
        }
        Ok(path)
    }
}
