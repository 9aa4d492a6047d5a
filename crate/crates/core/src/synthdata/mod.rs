//! Synthetic household panel with planted ground truth.
//!
//! Households live in LGAs classified by conflict exposure, carry a quantile
//! preference τ and decide between staying and leaving by comparing
//! τ-quantiles of two expenditure prospects. The panel has six waves and the
//! column layout of the survey it imitates.

mod attrition;
mod io;
mod migration;
mod population;
mod risk;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prospects::LotteryError;

pub use attrition::apply_attrition;
pub use io::{write_agents_csv, write_lgas_csv, write_panel_csv, PANEL_COLUMNS};
pub use migration::{
    simulate_migration, LeaveProspect, LotteryBuilder, ProspectInputs, StayProspect,
};
pub use population::{generate_population, WelfareModel};
pub use risk::{assign_risk_answers, RiskOptions};

pub const WAVES: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid generator setting `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("prospect for LGA {lga}: {source}")]
    Lottery { lga: u32, source: LotteryError },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> SynthError {
    SynthError::InvalidConfig {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttritionMode {
    /// Lost households drawn at random, crisis-area cases from
    /// always-in-conflict LGAs.
    #[default]
    Random,
    /// The poorest households by first-wave expenditure are lost.
    Poorest,
}

/// Generator settings. Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_households: usize,
    pub n_lgas: usize,
    pub n_states: usize,
    /// Share of LGAs with fatalities in some but not all waves.
    pub share_some: f64,
    /// Share of LGAs with fatalities in every wave.
    pub share_always: f64,
    /// Point mass of τ at 0 (maxmin agents).
    pub tau_zero_mass: f64,
    /// Point mass of τ at 1 (maxmax agents). The remainder is uniform on (0, 1).
    pub tau_one_mass: f64,
    /// Probability of facing a move decision, by origin class none/some/always.
    pub opportunity: [f64; 3],
    pub within_state_share: f64,
    pub sigma_none: f64,
    pub sigma_conflict: f64,
    pub sigma_migrant: f64,
    /// Log-expenditure penalty of living in a conflict LGA.
    pub conflict_penalty: f64,
    /// Log-expenditure cost of having moved.
    pub leave_cost: f64,
    pub state_effect_sd: f64,
    /// Normal quantile nodes per household when building prospects.
    pub lottery_nodes: usize,
    /// Atoms of each discretized prospect.
    pub lottery_atoms: usize,
    pub attrition_rate: f64,
    /// Relative frequencies of refused, not found, dead, moved (untracked)
    /// and crisis area among lost households.
    pub attrition_mix: [f64; 5],
    pub attrition_mode: AttritionMode,
    pub risk_threshold: f64,
    pub risk_noise: f64,
    /// Added to the probability of the risk-averse answer for households
    /// from conflict LGAs that never moved.
    pub conflict_risk_effect: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_households: 5000,
            n_lgas: 200,
            n_states: 37,
            share_some: 0.2,
            share_always: 0.05,
            tau_zero_mass: 0.5,
            tau_one_mass: 0.5,
            opportunity: [0.05, 0.15, 0.35],
            within_state_share: 0.9,
            sigma_none: 0.5,
            sigma_conflict: 1.2,
            sigma_migrant: 0.35,
            conflict_penalty: 0.2,
            leave_cost: 0.0,
            state_effect_sd: 0.15,
            lottery_nodes: 20,
            lottery_atoms: 100,
            attrition_rate: 0.083,
            attrition_mix: [47.0, 100.0, 84.0, 48.0, 139.0],
            attrition_mode: AttritionMode::Random,
            risk_threshold: 0.5,
            risk_noise: 0.1,
            conflict_risk_effect: 0.0,
        }
    }
}

fn check_unit(field: &'static str, v: f64) -> Result<(), SynthError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} is outside [0, 1]")))
    }
}

fn check_nonneg(field: &'static str, v: f64) -> Result<(), SynthError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} must be finite and non-negative")))
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_households < 100 {
            return Err(invalid("n_households", "at least 100 households are required"));
        }
        if self.n_lgas < 10 {
            return Err(invalid("n_lgas", "at least 10 LGAs are required"));
        }
        if self.n_states == 0 || self.n_states > self.n_lgas {
            return Err(invalid("n_states", "must lie in 1..=n_lgas"));
        }
        check_unit("share_some", self.share_some)?;
        check_unit("share_always", self.share_always)?;
        if self.share_some + self.share_always > 1.0 {
            return Err(invalid("share_some", "conflict shares sum above 1"));
        }
        check_unit("tau_zero_mass", self.tau_zero_mass)?;
        check_unit("tau_one_mass", self.tau_one_mass)?;
        if self.tau_zero_mass + self.tau_one_mass > 1.0 + 1e-12 {
            return Err(invalid("tau_one_mass", "τ point masses sum above 1"));
        }
        for p in self.opportunity {
            check_unit("opportunity", p)?;
        }
        check_unit("within_state_share", self.within_state_share)?;
        check_nonneg("sigma_none", self.sigma_none)?;
        check_nonneg("sigma_conflict", self.sigma_conflict)?;
        check_nonneg("sigma_migrant", self.sigma_migrant)?;
        check_nonneg("state_effect_sd", self.state_effect_sd)?;
        if !self.conflict_penalty.is_finite() {
            return Err(invalid("conflict_penalty", "must be finite"));
        }
        if !self.leave_cost.is_finite() {
            return Err(invalid("leave_cost", "must be finite"));
        }
        if self.lottery_nodes == 0 {
            return Err(invalid("lottery_nodes", "must be positive"));
        }
        if self.lottery_atoms == 0 {
            return Err(invalid("lottery_atoms", "must be positive"));
        }
        if !(0.0..=0.3).contains(&self.attrition_rate) {
            return Err(invalid("attrition_rate", "must lie in [0, 0.3]"));
        }
        if self.attrition_mix.iter().any(|m| !m.is_finite() || *m < 0.0)
            || self.attrition_mix.iter().sum::<f64>() <= 0.0
        {
            return Err(invalid("attrition_mix", "needs non-negative entries with a positive sum"));
        }
        if !(self.risk_threshold > 0.0 && self.risk_threshold < 1.0) {
            return Err(invalid("risk_threshold", "must lie in (0, 1)"));
        }
        if !(0.0..0.5).contains(&self.risk_noise) {
            return Err(invalid("risk_noise", "must lie in [0, 0.5)"));
        }
        if !self.conflict_risk_effect.is_finite() {
            return Err(invalid("conflict_risk_effect", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConflictClass {
    None,
    Some,
    Always,
}

impl ConflictClass {
    pub const ALL: [ConflictClass; 3] = [ConflictClass::None, ConflictClass::Some, ConflictClass::Always];

    pub fn as_str(self) -> &'static str {
        match self {
            ConflictClass::None => "none",
            ConflictClass::Some => "some",
            ConflictClass::Always => "always",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Class implied by per-wave fatality counts.
    pub fn from_fatalities(counts: &[u32]) -> Self {
        let positive = counts.iter().filter(|&&c| c > 0).count();
        if positive == 0 {
            ConflictClass::None
        } else if positive == counts.len() {
            ConflictClass::Always
        } else {
            ConflictClass::Some
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LgaProfile {
    pub lga_id: u32,
    pub state_id: u32,
    pub fatalities: [u32; WAVES],
    pub class: ConflictClass,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentProfile {
    pub household_id: u32,
    pub tau: f64,
    pub risk_averse_truth: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttritionStatus {
    Interviewed,
    Tracked,
    Refused,
    NotFound,
    Dead,
    MovedUntracked,
    CrisisArea,
}

impl AttritionStatus {
    /// The five reasons a household is lost, in the order of
    /// [`SynthConfig::attrition_mix`].
    pub const LOST: [AttritionStatus; 5] = [
        AttritionStatus::Refused,
        AttritionStatus::NotFound,
        AttritionStatus::Dead,
        AttritionStatus::MovedUntracked,
        AttritionStatus::CrisisArea,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttritionStatus::Interviewed => "interviewed",
            AttritionStatus::Tracked => "tracked",
            AttritionStatus::Refused => "refused",
            AttritionStatus::NotFound => "not_found",
            AttritionStatus::Dead => "dead",
            AttritionStatus::MovedUntracked => "moved_untracked",
            AttritionStatus::CrisisArea => "crisis_area",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [AttritionStatus::Interviewed, AttritionStatus::Tracked]
            .into_iter()
            .chain(Self::LOST)
            .find(|a| a.as_str() == s)
    }

    pub fn is_interviewed(self) -> bool {
        matches!(self, AttritionStatus::Interviewed | AttritionStatus::Tracked)
    }
}

/// Time-invariant household characteristics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariates {
    pub is_rural: bool,
    pub hhsize: u32,
    pub dep_share: f64,
    pub hh_sex: u8,
    pub hh_agey: u32,
    pub hh_eduyrs: u32,
    pub hh_empl: u8,
    pub hh_marstat: u8,
    pub hh_language: u8,
    pub dwel_rooms: u32,
    pub dwel_roof: u8,
    pub dwel_wall: u8,
    pub dwel_floor: u8,
    pub dwel_toilet: u8,
    pub dwel_fuellight: u8,
    pub dwel_fuelcook: u8,
    pub dwel_gdisp: u8,
    pub own_tv: u8,
    pub own_fridge: u8,
    pub own_stove: u8,
    pub own_bcycle: u8,
    pub own_car: u8,
    pub own_iron: u8,
}

impl Covariates {
    /// Value of a numeric covariate by its column name.
    pub fn get(&self, name: &str) -> Option<f64> {
        let v = match name {
            "rururb" => f64::from(u8::from(self.is_rural)),
            "hhsize" => f64::from(self.hhsize),
            "dep_share" => self.dep_share,
            "hh_sex" => f64::from(self.hh_sex),
            "hh_agey" => f64::from(self.hh_agey),
            "hh_eduyrs" => f64::from(self.hh_eduyrs),
            "hh_empl" => f64::from(self.hh_empl),
            "hh_marstat" => f64::from(self.hh_marstat),
            "hh_language" => f64::from(self.hh_language),
            "dwel_rooms" => f64::from(self.dwel_rooms),
            "dwel_roof" => f64::from(self.dwel_roof),
            "dwel_wall" => f64::from(self.dwel_wall),
            "dwel_floor" => f64::from(self.dwel_floor),
            "dwel_toilet" => f64::from(self.dwel_toilet),
            "dwel_fuellight" => f64::from(self.dwel_fuellight),
            "dwel_fuelcook" => f64::from(self.dwel_fuelcook),
            "dwel_gdisp" => f64::from(self.dwel_gdisp),
            "own_tv" => f64::from(self.own_tv),
            "own_fridge" => f64::from(self.own_fridge),
            "own_stove" => f64::from(self.own_stove),
            "own_bcycle" => f64::from(self.own_bcycle),
            "own_car" => f64::from(self.own_car),
            "own_iron" => f64::from(self.own_iron),
            _ => return None,
        };
        Some(v)
    }
}

/// One household in one wave.
#[derive(Debug, Clone, PartialEq)]
pub struct HouseholdRecord {
    pub household_id: u32,
    pub wave: u8,
    pub lga_id: u32,
    pub state_id: u32,
    pub weight: f64,
    pub expenditure_pc: f64,
    pub covariates: Covariates,
    /// Fatalities in the current LGA during this wave.
    pub conflict: bool,
    /// The household arrived in its current LGA this wave.
    pub migrated: bool,
    pub risk_averse: Option<bool>,
    pub attrition_status: AttritionStatus,
}

/// Household-wave records ordered by household, then wave.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PanelDataset {
    pub records: Vec<HouseholdRecord>,
}

impl PanelDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Record of household index `h` (0-based position) in `wave` (1-based).
    pub fn record(&self, h: usize, wave: usize) -> &HouseholdRecord {
        &self.records[h * WAVES + wave - 1]
    }

    pub fn record_mut(&mut self, h: usize, wave: usize) -> &mut HouseholdRecord {
        &mut self.records[h * WAVES + wave - 1]
    }

    pub fn n_households(&self) -> usize {
        self.records.len() / WAVES
    }

    /// Whether household `h` ever changed LGA.
    pub fn ever_migrated(&self, h: usize) -> bool {
        (1..=WAVES).any(|t| self.record(h, t).migrated)
    }
}

/// Everything the generator produces. `shocks` holds the standard normal
/// expenditure shock of each record so that expenditures can be recomputed
/// after households move.
#[derive(Debug, Clone)]
pub struct Population {
    pub config: SynthConfig,
    pub panel: PanelDataset,
    pub agents: Vec<AgentProfile>,
    pub lgas: Vec<LgaProfile>,
    pub welfare: WelfareModel,
    pub(crate) shocks: Vec<f64>,
}

impl Population {
    pub fn lga(&self, lga_id: u32) -> &LgaProfile {
        &self.lgas[lga_id as usize - 1]
    }

    /// Class of the LGA household `h` lived in at wave 1.
    pub fn origin_class(&self, h: usize) -> ConflictClass {
        self.lga(self.panel.record(h, 1).lga_id).class
    }

    /// Log-expenditure location of household `h` at its first-wave address,
    /// before class effects.
    pub fn welfare_index(&self, h: usize) -> f64 {
        let r = self.panel.record(h, 1);
        self.welfare.index(&r.covariates, r.state_id)
    }

    /// Recomputes expenditure of one record from its current location.
    pub(crate) fn refresh_expenditure(&mut self, h: usize, wave: usize) {
        let idx = h * WAVES + wave - 1;
        let rec = &self.panel.records[idx];
        // The state effect follows the household to where it lives now.
        let mu = self.welfare.index(&rec.covariates, rec.state_id);
        let moved = (1..=wave).any(|t| self.panel.record(h, t).migrated);
        let class = self.lga(rec.lga_id).class;
        let (shift, sigma) = expenditure_law(&self.config, class, moved);
        self.panel.records[idx].expenditure_pc = (mu + shift + sigma * self.shocks[idx]).exp();
    }
}

/// Log-expenditure shift and dispersion of a household living in `class`.
pub(crate) fn expenditure_law(cfg: &SynthConfig, class: ConflictClass, moved: bool) -> (f64, f64) {
    if moved {
        (-cfg.leave_cost, cfg.sigma_migrant)
    } else if class == ConflictClass::None {
        (0.0, cfg.sigma_none)
    } else {
        (-cfg.conflict_penalty, cfg.sigma_conflict)
    }
}

/// Independent random stream for one generator stage.
pub(crate) fn stage_rng(seed: u64, stage: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage);
    rng
}

/// Runs every generator stage with the default prospect builders.
pub fn synthesize(config: &SynthConfig, seed: u64) -> Result<Population, SynthError> {
    let mut pop = generate_population(config, seed)?;
    let stay = StayProspect::from_config(config);
    let leave = LeaveProspect::from_config(config);
    simulate_migration(&mut pop, &stay, &leave, seed)?;
    apply_attrition(&mut pop, seed)?;
    assign_risk_answers(&mut pop, RiskOptions::from_config(config), seed)?;
    Ok(pop)
}
