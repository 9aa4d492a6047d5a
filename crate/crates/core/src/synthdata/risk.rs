use rand::Rng;

use super::{invalid, stage_rng, ConflictClass, Population, SynthConfig, SynthError, WAVES};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskOptions {
    /// Agents with τ below this answer the risk-averse option.
    pub threshold: f64,
    /// Probability that an answer is flipped.
    pub noise: f64,
    /// Added to the probability of the risk-averse answer for never-moved
    /// households from conflict LGAs, after the flip.
    pub conflict_effect: f64,
}

impl RiskOptions {
    pub fn from_config(cfg: &SynthConfig) -> Self {
        Self {
            threshold: cfg.risk_threshold,
            noise: cfg.risk_noise,
            conflict_effect: cfg.conflict_risk_effect,
        }
    }
}

/// Fills the final-wave risk answer of every interviewed household:
/// `P(averse) = 1 − noise` when τ is below the threshold and `noise`
/// otherwise, plus the conflict effect where it applies, clamped to [0, 1].
pub fn assign_risk_answers(pop: &mut Population, opts: RiskOptions, seed: u64) -> Result<(), SynthError> {
    if !(opts.threshold > 0.0 && opts.threshold < 1.0) {
        return Err(invalid("risk_threshold", "must lie in (0, 1)"));
    }
    if !(0.0..0.5).contains(&opts.noise) {
        return Err(invalid("risk_noise", "must lie in [0, 0.5)"));
    }
    let mut rng = stage_rng(seed, 3);
    for h in 0..pop.panel.n_households() {
        let u: f64 = rng.random();
        let averse = pop.agents[h].tau < opts.threshold;
        let mut p = if averse { 1.0 - opts.noise } else { opts.noise };
        if pop.origin_class(h) != ConflictClass::None && !pop.panel.ever_migrated(h) {
            p += opts.conflict_effect;
        }
        let rec = pop.panel.record_mut(h, WAVES);
        rec.risk_averse = rec
            .attrition_status
            .is_interviewed()
            .then_some(u < p.clamp(0.0, 1.0));
    }
    Ok(())
}
