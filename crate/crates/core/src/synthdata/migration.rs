use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use super::{stage_rng, ConflictClass, LgaProfile, Population, SynthConfig, SynthError, WAVES};
use crate::prospects::{prefers_tau, Lottery, LotteryError, Preference};

/// What a builder sees when constructing the prospect for one LGA: the LGA
/// and the welfare indices (log-expenditure locations) of its first-wave
/// residents.
#[derive(Debug, Clone, Copy)]
pub struct ProspectInputs<'a> {
    pub lga: &'a LgaProfile,
    pub index: &'a [f64],
}

/// Builds the expenditure prospect households in one LGA compare.
pub trait LotteryBuilder {
    fn build(&self, inputs: &ProspectInputs<'_>) -> Result<Lottery, LotteryError>;
}

/// Pools `exp(μ_i + shift + σ z_j)` over residents `i` and normal quantile
/// nodes `z_j`, then keeps `atoms` equally likely quantiles of the pool.
fn lognormal_prospect(
    index: &[f64],
    shift: f64,
    sigma: f64,
    nodes: usize,
    atoms: usize,
) -> Result<Lottery, LotteryError> {
    if index.is_empty() {
        return Err(LotteryError::Empty);
    }
    let normal = Normal::standard();
    let z: Vec<f64> = (0..nodes)
        .map(|j| normal.inverse_cdf((j as f64 + 0.5) / nodes as f64))
        .collect();
    let mut pool: Vec<f64> = index
        .iter()
        .flat_map(|mu| z.iter().map(move |zj| (mu + shift + sigma * zj).exp()))
        .collect();
    pool.sort_by(f64::total_cmp);
    let values: Vec<f64> = (0..atoms)
        .map(|k| pool[((k as f64 + 0.5) / atoms as f64 * pool.len() as f64) as usize])
        .collect();
    Lottery::uniform(&values)
}

/// The local expenditure distribution: conflict LGAs carry the penalty and
/// their own dispersion.
#[derive(Debug, Clone, PartialEq)]
pub struct StayProspect {
    /// Indexed by [`ConflictClass::index`].
    pub shift: [f64; 3],
    pub sigma: [f64; 3],
    pub nodes: usize,
    pub atoms: usize,
}

impl StayProspect {
    pub fn from_config(cfg: &SynthConfig) -> Self {
        let p = -cfg.conflict_penalty;
        Self {
            shift: [0.0, p, p],
            sigma: [cfg.sigma_none, cfg.sigma_conflict, cfg.sigma_conflict],
            nodes: cfg.lottery_nodes,
            atoms: cfg.lottery_atoms,
        }
    }
}

impl LotteryBuilder for StayProspect {
    fn build(&self, inputs: &ProspectInputs<'_>) -> Result<Lottery, LotteryError> {
        let k = inputs.lga.class.index();
        lognormal_prospect(inputs.index, self.shift[k], self.sigma[k], self.nodes, self.atoms)
    }
}

/// The counterfactual distribution after moving to a peaceful LGA.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaveProspect {
    pub shift: f64,
    pub sigma: f64,
    pub nodes: usize,
    pub atoms: usize,
}

impl LeaveProspect {
    pub fn from_config(cfg: &SynthConfig) -> Self {
        Self {
            shift: -cfg.leave_cost,
            sigma: cfg.sigma_migrant,
            nodes: cfg.lottery_nodes,
            atoms: cfg.lottery_atoms,
        }
    }
}

impl LotteryBuilder for LeaveProspect {
    fn build(&self, inputs: &ProspectInputs<'_>) -> Result<Lottery, LotteryError> {
        lognormal_prospect(inputs.index, self.shift, self.sigma, self.nodes, self.atoms)
    }
}

fn pick_destination<R: Rng>(pop: &Population, origin: &LgaProfile, within: f64, rng: &mut R) -> u32 {
    let peaceful = |same_state: bool| -> Vec<u32> {
        pop.lgas
            .iter()
            .filter(|l| {
                l.class == ConflictClass::None
                    && l.lga_id != origin.lga_id
                    && (l.state_id == origin.state_id) == same_state
            })
            .map(|l| l.lga_id)
            .collect()
    };
    let inside = peaceful(true);
    let outside = peaceful(false);
    let pool = if !inside.is_empty() && (outside.is_empty() || rng.random_bool(within)) {
        inside
    } else if !outside.is_empty() {
        outside
    } else {
        pop.lgas
            .iter()
            .map(|l| l.lga_id)
            .filter(|&id| id != origin.lga_id)
            .collect()
    };
    pool[rng.random_range(0..pool.len())]
}

/// Lets every household with a move opportunity choose by its τ-quantile
/// between the leave and stay prospects of its first-wave LGA. Indifference
/// means staying. A mover relocates after a wave drawn uniformly from 1..=5,
/// so the first wave in the new LGA is flagged `migrated`. Returns the number
/// of movers.
pub fn simulate_migration(
    pop: &mut Population,
    stay: &dyn LotteryBuilder,
    leave: &dyn LotteryBuilder,
    seed: u64,
) -> Result<usize, SynthError> {
    let n = pop.panel.n_households();
    let mut residents: Vec<Vec<f64>> = vec![Vec::new(); pop.lgas.len()];
    for h in 0..n {
        let lga = pop.panel.record(h, 1).lga_id as usize - 1;
        residents[lga].push(pop.welfare_index(h));
    }
    let mut prospects: Vec<Option<(Lottery, Lottery)>> = Vec::with_capacity(pop.lgas.len());
    for (lga, index) in pop.lgas.iter().zip(&residents) {
        if index.is_empty() {
            prospects.push(None);
            continue;
        }
        let inputs = ProspectInputs { lga, index };
        let wrap = |source| SynthError::Lottery {
            lga: lga.lga_id,
            source,
        };
        let s = stay.build(&inputs).map_err(wrap)?;
        let l = leave.build(&inputs).map_err(wrap)?;
        prospects.push(Some((l, s)));
    }

    let mut rng = stage_rng(seed, 1);
    let mut movers = 0;
    for h in 0..n {
        let origin = pop.lga(pop.panel.record(h, 1).lga_id).clone();
        if !rng.random_bool(pop.config.opportunity[origin.class.index()]) {
            continue;
        }
        let (l, s) = prospects[origin.lga_id as usize - 1]
            .as_ref()
            .expect("origin LGA has residents");
        let tau = pop.agents[h].tau;
        let choice = prefers_tau(l, s, tau).map_err(|source| SynthError::Lottery {
            lga: origin.lga_id,
            source,
        })?;
        if choice != Preference::First {
            continue;
        }
        movers += 1;
        let arrival = rng.random_range(2..=WAVES);
        let dest = pop.lga(pick_destination(pop, &origin, pop.config.within_state_share, &mut rng)).clone();
        for wave in arrival..=WAVES {
            let rec = pop.panel.record_mut(h, wave);
            rec.lga_id = dest.lga_id;
            rec.state_id = dest.state_id;
            rec.conflict = dest.fatalities[wave - 1] > 0;
            rec.migrated = wave == arrival;
        }
        for wave in arrival..=WAVES {
            pop.refresh_expenditure(h, wave);
        }
    }
    Ok(movers)
}
