use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal, Poisson, StandardNormal};

use super::{
    expenditure_law, stage_rng, AgentProfile, AttritionStatus, ConflictClass, Covariates,
    HouseholdRecord, LgaProfile, PanelDataset, Population, SynthConfig, SynthError, WAVES,
};

/// Planted log-expenditure equation:
/// `intercept + Σ slope·x + Σ level effects + state effect`.
#[derive(Debug, Clone, PartialEq)]
pub struct WelfareModel {
    pub intercept: f64,
    pub slopes: Vec<(&'static str, f64)>,
    /// `(variable, level, effect)` relative to every other level.
    pub level_effects: Vec<(&'static str, f64, f64)>,
    /// Indexed by `state_id - 1`.
    pub state_effects: Vec<f64>,
}

impl WelfareModel {
    fn planted(state_effects: Vec<f64>) -> Self {
        Self {
            intercept: 10.0,
            slopes: vec![
                ("rururb", -0.15),
                ("hhsize", -0.07),
                ("dep_share", -0.35),
                ("hh_sex", 0.04),
                ("hh_agey", 0.003),
                ("hh_eduyrs", 0.025),
                ("hh_empl", 0.08),
                ("hh_marstat", 0.05),
                ("dwel_rooms", 0.04),
                ("own_tv", 0.15),
                ("own_fridge", 0.2),
                ("own_stove", 0.1),
                ("own_bcycle", 0.03),
                ("own_car", 0.25),
                ("own_iron", 0.08),
            ],
            level_effects: vec![
                ("dwel_wall", 3.0, 0.08),
                ("dwel_toilet", 2.0, 0.12),
                ("dwel_fuellight", 2.0, -0.1),
            ],
            state_effects,
        }
    }

    pub fn index(&self, x: &Covariates, state_id: u32) -> f64 {
        let mut v = self.intercept + self.state_effects[state_id as usize - 1];
        for (name, b) in &self.slopes {
            v += b * x.get(name).expect("planted slope names a covariate");
        }
        for (name, level, b) in &self.level_effects {
            if x.get(name) == Some(*level) {
                v += b;
            }
        }
        v
    }

    /// Planted coefficient of a continuous term or a `name=level` dummy
    /// (relative to any baseline level without an effect); zero otherwise.
    pub fn coefficient(&self, label: &str) -> f64 {
        if let Some((_, b)) = self.slopes.iter().find(|(n, _)| *n == label) {
            return *b;
        }
        if let Some((name, level)) = label.split_once('=') {
            if let Ok(level) = level.parse::<f64>() {
                return self
                    .level_effects
                    .iter()
                    .find(|(n, l, _)| *n == name && *l == level)
                    .map_or(0.0, |e| e.2);
            }
        }
        0.0
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn bern(rng: &mut ChaCha8Rng, p: f64) -> u8 {
    u8::from(rng.random_bool(p.clamp(0.0, 1.0)))
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u32 {
    Poisson::new(mean).expect("positive mean").sample(rng) as u32
}

fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws covariates from a latent wealth factor `z`.
fn draw_covariates(rng: &mut ChaCha8Rng, state_id: u32) -> Covariates {
    let z = std_normal(rng);
    let is_rural = rng.random_bool(logistic(0.8 - 0.8 * z));
    let hhsize = (1 + poisson(rng, if is_rural { 4.5 } else { 3.5 })).min(20);
    let dependents = Binomial::new(u64::from(hhsize - 1), 0.45)
        .expect("valid binomial")
        .sample(rng) as f64;
    let dep_share = dependents / f64::from(hhsize);
    let hh_sex = bern(rng, 0.85);
    let hh_agey = (46.0 + 13.0 * std_normal(rng)).round().clamp(15.0, 100.0) as u32;
    let hh_eduyrs = (6.0 + 3.0 * z + 3.0 * std_normal(rng)).round().clamp(0.0, 18.0) as u32;
    let hh_empl = bern(rng, 0.75);
    let hh_marstat = bern(rng, if hh_sex == 1 { 0.88 } else { 0.4 });
    let dominant = ((state_id - 1) % 4 + 1) as u8;
    let hh_language = if rng.random_bool(0.85) {
        dominant
    } else {
        rng.random_range(1..=4)
    };
    let dwel_rooms = (1 + poisson(rng, 1.5 + 0.5 * z.max(0.0))).min(15);

    let quality = |rng: &mut ChaCha8Rng| z + std_normal(rng);
    let three = |q: f64| if q < -0.5 { 1 } else if q < 0.7 { 2 } else { 3 };
    let dwel_roof = three(quality(rng));
    let dwel_wall = three(quality(rng));
    let dwel_floor = three(quality(rng));
    let q = quality(rng);
    let dwel_toilet = if rng.random_bool(0.05) {
        5
    } else if q < -0.8 {
        1
    } else if q < 0.2 {
        4
    } else if q < 1.0 {
        3
    } else {
        2
    };
    let q = quality(rng);
    let dwel_fuellight = if rng.random_bool(0.03) {
        4
    } else if q > -0.2 {
        1
    } else if q > -1.2 {
        2
    } else {
        3
    };
    let q = quality(rng);
    let dwel_fuelcook = if rng.random_bool(0.03) {
        5
    } else if q < 0.0 {
        1
    } else if q < 0.6 {
        2
    } else if q < 1.3 {
        3
    } else {
        4
    };
    let q = quality(rng);
    let dwel_gdisp = if q > 1.0 {
        1
    } else if q > -0.3 {
        2
    } else {
        3
    };
    let mut own = |a: f64, b: f64| bern(rng, logistic(a + b * z));
    Covariates {
        is_rural,
        hhsize,
        dep_share,
        hh_sex,
        hh_agey,
        hh_eduyrs,
        hh_empl,
        hh_marstat,
        hh_language,
        dwel_rooms,
        dwel_roof,
        dwel_wall,
        dwel_floor,
        dwel_toilet,
        dwel_fuellight,
        dwel_fuelcook,
        dwel_gdisp,
        own_tv: own(-0.3, 1.2),
        own_fridge: own(-1.5, 1.3),
        own_stove: own(-1.0, 1.0),
        own_bcycle: own(-1.0, -0.2),
        own_car: own(-2.5, 1.2),
        own_iron: own(-0.6, 1.0),
    }
}

/// Fatality counts for a class: all zero, all positive, or positive in a
/// non-empty proper subset of waves.
fn draw_fatalities(rng: &mut ChaCha8Rng, class: ConflictClass) -> [u32; WAVES] {
    let mut f = [0u32; WAVES];
    match class {
        ConflictClass::None => {}
        ConflictClass::Always => {
            for c in &mut f {
                *c = 1 + poisson(rng, 5.0);
            }
        }
        ConflictClass::Some => loop {
            let mask: Vec<bool> = (0..WAVES).map(|_| rng.random_bool(0.4)).collect();
            let k = mask.iter().filter(|&&m| m).count();
            if k == 0 || k == WAVES {
                continue;
            }
            for (c, m) in f.iter_mut().zip(mask) {
                if m {
                    *c = 1 + poisson(rng, 3.0);
                }
            }
            break;
        },
    }
    f
}

fn draw_tau(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> f64 {
    let u: f64 = rng.random();
    if u < cfg.tau_zero_mass {
        0.0
    } else if u < cfg.tau_zero_mass + cfg.tau_one_mass {
        1.0
    } else {
        rng.random()
    }
}

/// Builds LGAs, households and six waves of records before any migration,
/// attrition or risk answers. Deterministic in `(config, seed)`.
pub fn generate_population(config: &SynthConfig, seed: u64) -> Result<Population, SynthError> {
    config.validate()?;
    let mut rng = stage_rng(seed, 0);
    let cfg = config;

    let n_always = (cfg.share_always * cfg.n_lgas as f64).round() as usize;
    let n_some = ((cfg.share_some * cfg.n_lgas as f64).round() as usize).min(cfg.n_lgas - n_always);
    let mut classes: Vec<ConflictClass> = std::iter::repeat_n(ConflictClass::Always, n_always)
        .chain(std::iter::repeat_n(ConflictClass::Some, n_some))
        .chain(std::iter::repeat_n(
            ConflictClass::None,
            cfg.n_lgas - n_always - n_some,
        ))
        .collect();
    classes.shuffle(&mut rng);
    let lgas: Vec<LgaProfile> = classes
        .into_iter()
        .enumerate()
        .map(|(j, class)| LgaProfile {
            lga_id: j as u32 + 1,
            state_id: (j % cfg.n_states) as u32 + 1,
            fatalities: draw_fatalities(&mut rng, class),
            class,
        })
        .collect();

    let state_sd = Normal::new(0.0, cfg.state_effect_sd).expect("finite sd");
    let welfare = WelfareModel::planted((0..cfg.n_states).map(|_| state_sd.sample(&mut rng)).collect());

    let mut records = Vec::with_capacity(cfg.n_households * WAVES);
    let mut agents = Vec::with_capacity(cfg.n_households);
    let mut shocks = Vec::with_capacity(cfg.n_households * WAVES);
    for h in 0..cfg.n_households {
        let household_id = h as u32 + 1;
        let lga = &lgas[rng.random_range(0..lgas.len())];
        let covariates = draw_covariates(&mut rng, lga.state_id);
        let weight = 1000.0 * (0.25 * std_normal(&mut rng)).exp();
        let tau = draw_tau(&mut rng, cfg);
        agents.push(AgentProfile {
            household_id,
            tau,
            risk_averse_truth: tau < cfg.risk_threshold,
        });
        let mu = welfare.index(&covariates, lga.state_id);
        let (shift, sigma) = expenditure_law(cfg, lga.class, false);
        for wave in 1..=WAVES {
            let shock = std_normal(&mut rng);
            shocks.push(shock);
            records.push(HouseholdRecord {
                household_id,
                wave: wave as u8,
                lga_id: lga.lga_id,
                state_id: lga.state_id,
                weight,
                expenditure_pc: (mu + shift + sigma * shock).exp(),
                covariates,
                conflict: lga.fatalities[wave - 1] > 0,
                migrated: false,
                risk_averse: None,
                attrition_status: AttritionStatus::Interviewed,
            });
        }
    }
    Ok(Population {
        config: cfg.clone(),
        panel: PanelDataset { records },
        agents,
        lgas,
        welfare,
        shocks,
    })
}
