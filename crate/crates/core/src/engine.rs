//! Simulation runs: draw pairs, apply the protocol, record every useful
//! interaction.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{balance_tvd_with, weight_distribution};
use crate::model::{AgentState, Beta, Population};
use crate::protocol::{Protocol, ProtocolRunner};
use crate::scheduler::{PairSchedule, ProbabilisticScheduler, StreamDomain, StreamKey};

/// Default cap on scheduler draws, as a multiple of the useful-interaction budget.
pub const DEFAULT_DRAWS_PER_USEFUL: u64 = 10_000;

/// How initial energies are assigned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnergySpec {
    /// i.i.d. continuous uniform on `[min, max]`.
    Uniform {
        min: f64,
        max: f64,
    },
    Constant {
        value: f64,
    },
    Explicit {
        values: Vec<f64>,
    },
}

impl Default for EnergySpec {
    fn default() -> Self {
        EnergySpec::Uniform { min: 1.0, max: 100.0 }
    }
}

/// How weights are assigned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSpec {
    /// Every agent has weight 1.
    Uniform,
    /// The first `round(fraction * m)` agents get `high`, the rest `low`.
    TwoTier {
        fraction: f64,
        high: f64,
        low: f64,
    },
    /// i.i.d. continuous uniform on `[min, max]`.
    Range {
        min: f64,
        max: f64,
    },
    Explicit {
        values: Vec<f64>,
    },
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::TwoTier {
            fraction: 0.1,
            high: 10.0,
            low: 1.0,
        }
    }
}

/// Population initialization recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub m: usize,
    #[serde(default)]
    pub energy: EnergySpec,
    #[serde(default)]
    pub weights: WeightSpec,
}

impl InitSpec {
    /// 100 agents, energies uniform on `[1, 100]`, 10% at weight 10 and the
    /// rest at weight 1.
    pub fn standard() -> Self {
        Self {
            m: 100,
            energy: EnergySpec::default(),
            weights: WeightSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidPopulation(self.m));
        }
        let bad_range = |lo: f64, hi: f64| !(lo.is_finite() && hi.is_finite() && lo <= hi);
        match &self.energy {
            EnergySpec::Uniform { min, max } if bad_range(*min, *max) || *min < 0.0 => {
                return Err(Error::Config(format!("bad energy range [{min}, {max}]")))
            }
            EnergySpec::Constant { value } if !(*value >= 0.0) => {
                return Err(Error::Config(format!("bad constant energy {value}")))
            }
            EnergySpec::Explicit { values } if values.len() != self.m => {
                return Err(Error::Config(format!(
                    "{} explicit energies for {} agents",
                    values.len(),
                    self.m
                )))
            }
            _ => {}
        }
        match &self.weights {
            WeightSpec::TwoTier { fraction, high, low }
                if !(0.0..=1.0).contains(fraction) || !(*high > 0.0) || !(*low > 0.0) =>
            {
                return Err(Error::Config(format!(
                    "bad two-tier weights (fraction {fraction}, high {high}, low {low})"
                )))
            }
            WeightSpec::Range { min, max } if bad_range(*min, *max) || !(*min > 0.0) => {
                return Err(Error::Config(format!("bad weight range [{min}, {max}]")))
            }
            WeightSpec::Explicit { values } if values.len() != self.m => {
                return Err(Error::Config(format!(
                    "{} explicit weights for {} agents",
                    values.len(),
                    self.m
                )))
            }
            _ => {}
        }
        Ok(())
    }
}

/// Builds a population. Energies are drawn before weights.
pub fn initialize_population<R: Rng + ?Sized>(spec: &InitSpec, beta: Beta, rng: &mut R) -> Result<Population> {
    spec.validate()?;
    let m = spec.m;
    let energies: Vec<f64> = match &spec.energy {
        EnergySpec::Uniform { min, max } => (0..m).map(|_| uniform(rng, *min, *max)).collect(),
        EnergySpec::Constant { value } => vec![*value; m],
        EnergySpec::Explicit { values } => values.clone(),
    };
    let weights: Vec<f64> = match &spec.weights {
        WeightSpec::Uniform => vec![1.0; m],
        WeightSpec::TwoTier { fraction, high, low } => {
            let critical = (fraction * m as f64).round() as usize;
            (0..m).map(|i| if i < critical { *high } else { *low }).collect()
        }
        WeightSpec::Range { min, max } => (0..m).map(|_| uniform(rng, *min, *max)).collect(),
        WeightSpec::Explicit { values } => values.clone(),
    };
    let agents = energies
        .into_iter()
        .zip(weights)
        .map(|(e, w)| AgentState::new(e, w))
        .collect::<Result<Vec<_>>>()?;
    Population::new(agents, beta)
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Everything needed for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub beta: Beta,
    pub protocol: Protocol,
    pub budget: u64,
    pub max_draws: u64,
    pub seed: u64,
    pub init: InitSpec,
}

impl RunConfig {
    pub fn new(init: InitSpec, beta: Beta, protocol: Protocol, budget: u64, seed: u64) -> Self {
        Self {
            beta,
            protocol,
            budget,
            max_draws: budget.saturating_mul(DEFAULT_DRAWS_PER_USEFUL),
            seed,
            init,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.init.validate()?;
        validate_limits(self.budget, self.max_draws)
    }
}

fn validate_limits(budget: u64, max_draws: u64) -> Result<()> {
    if budget == 0 {
        return Err(Error::Config("useful-interaction budget must be >= 1".into()));
    }
    if max_draws < budget {
        return Err(Error::Config(format!(
            "max_draws ({max_draws}) must be >= budget ({budget})"
        )));
    }
    Ok(())
}

/// State after the `k`-th useful interaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub k: u64,
    /// Scheduler draws consumed up to and including this interaction.
    pub draws: u64,
    pub total_energy: f64,
    pub tvd: f64,
    pub cumulative_loss: f64,
}

/// One run, indexed by useful interactions.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial_total_energy: f64,
    pub initial_tvd: f64,
    pub rows: Vec<TrajectoryRow>,
    /// Scheduler draws consumed by the whole run.
    pub draws: u64,
    /// Set when the run stopped before reaching its budget.
    pub truncated: bool,
    pub final_population: Population,
}

impl Trajectory {
    pub fn useful_interactions(&self) -> u64 {
        self.rows.len() as u64
    }

    /// Balance after `draws` scheduler steps (the last recorded change at or
    /// before that draw count).
    pub fn tvd_at_draw(&self, draws: u64) -> f64 {
        let idx = self.rows.partition_point(|r| r.draws <= draws);
        if idx == 0 {
            self.initial_tvd
        } else {
            self.rows[idx - 1].tvd
        }
    }

    /// Total energy at useful interaction `k` (`k = 0` is the initial state).
    pub fn total_energy_at(&self, k: usize) -> f64 {
        if k == 0 {
            self.initial_total_energy
        } else {
            self.rows[k - 1].total_energy
        }
    }

    pub fn final_total_energy(&self) -> f64 {
        self.rows.last().map_or(self.initial_total_energy, |r| r.total_energy)
    }

    pub fn total_loss(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cumulative_loss)
    }
}

/// Runs `config` on its own seed: initialization and scheduling use separate
/// streams derived from `config.seed`.
pub fn run(config: &RunConfig) -> Result<Trajectory> {
    config.validate()?;
    let mut init_rng = StreamKey::new(config.seed, StreamDomain::Initialization, 0, 0).rng();
    let pop = initialize_population(&config.init, config.beta, &mut init_rng)?;
    let mut schedule = ProbabilisticScheduler::from_seed(config.seed);
    simulate(pop, config.protocol, &mut schedule, config.budget, config.max_draws)
}

/// Drives `pop` with `protocol` under `schedule` until `budget` useful
/// interactions have happened or `max_draws` pairs have been drawn. An
/// exhausted scripted schedule ends the run like the draw cap does.
pub fn simulate<S: PairSchedule + ?Sized>(
    pop: Population,
    protocol: Protocol,
    schedule: &mut S,
    budget: u64,
    max_draws: u64,
) -> Result<Trajectory> {
    validate_limits(budget, max_draws)?;
    let runner = ProtocolRunner::new(protocol, &pop);
    simulate_with(pop, runner, schedule, budget, max_draws)
}

/// Like [`simulate`] with an explicit protocol state (e.g. pre-loaded registers).
pub fn simulate_with<S: PairSchedule + ?Sized>(
    mut pop: Population,
    mut runner: ProtocolRunner,
    schedule: &mut S,
    budget: u64,
    max_draws: u64,
) -> Result<Trajectory> {
    let m = pop.len();
    let shares = weight_distribution(&pop).probs().to_vec();
    let initial_total_energy = pop.total_energy();
    let initial_tvd = balance_tvd_with(&pop, &shares)?;

    let mut rows = Vec::with_capacity(budget.min(1 << 20) as usize);
    let mut draws = 0u64;
    let mut cumulative_loss = 0.0;
    while (rows.len() as u64) < budget && draws < max_draws {
        let (i, j) = match schedule.next_pair(m) {
            Ok(pair) => pair,
            Err(Error::ScheduleExhausted(_)) => break,
            Err(e) => return Err(e),
        };
        draws += 1;
        let outcome = runner.interact(&mut pop, i, j)?;
        if !outcome.useful {
            continue;
        }
        cumulative_loss += outcome.lost;
        rows.push(TrajectoryRow {
            k: rows.len() as u64 + 1,
            draws,
            total_energy: pop.total_energy(),
            tvd: balance_tvd_with(&pop, &shares)?,
            cumulative_loss,
        });
    }
    Ok(Trajectory {
        initial_total_energy,
        initial_tvd,
        truncated: (rows.len() as u64) < budget,
        rows,
        draws,
        final_population: pop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::balance_tvd;
    use crate::protocol::SwtConfig;
    use crate::scheduler::ScriptedSchedule;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ows() -> Protocol {
        Protocol::Ows { threshold: None }
    }

    #[test]
    fn two_agents_balance_in_one_step() {
        let pop = Population::uniform(&[10.0, 0.0], 0.0).unwrap();
        let mut sched = ProbabilisticScheduler::from_seed(1);
        let t = simulate(pop, ows(), &mut sched, 5, 1000).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].tvd, 0.0);
        assert_eq!(t.rows[0].draws, 1);
        assert_eq!(t.final_population.energies().collect::<Vec<_>>(), vec![5.0, 5.0]);
        assert!(t.truncated);
        assert_eq!(t.draws, 1000);
    }

    #[test]
    fn balanced_population_truncates() {
        let pop = Population::from_vectors(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0], 0.3).unwrap();
        let mut sched = ProbabilisticScheduler::from_seed(3);
        let t = simulate(pop, ows(), &mut sched, 1, 50).unwrap();
        assert!(t.truncated);
        assert!(t.rows.is_empty());
        assert_eq!(t.draws, 50);
    }

    #[test]
    fn limits_validated() {
        let pop = Population::uniform(&[1.0, 2.0], 0.0).unwrap();
        let mut sched = ProbabilisticScheduler::from_seed(3);
        assert!(simulate(pop.clone(), ows(), &mut sched, 0, 10).is_err());
        assert!(simulate(pop, ows(), &mut sched, 10, 9).is_err());
    }

    #[test]
    fn exhausted_script_ends_run() {
        let pop = Population::uniform(&[4.0, 0.0, 2.0], 0.0).unwrap();
        let mut sched = ScriptedSchedule::new(vec![(0, 1)]);
        let t = simulate(pop, ows(), &mut sched, 10, 100).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert!(t.truncated);
        assert_eq!(t.draws, 1);
    }

    #[test]
    fn initialization_standard() {
        let spec = InitSpec::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pop = initialize_population(&spec, Beta::new(0.2).unwrap(), &mut rng).unwrap();
        assert_eq!(pop.len(), 100);
        assert!(pop.energies().all(|e| (1.0..=100.0).contains(&e)));
        assert_eq!(pop.weights().filter(|&w| w == 10.0).count(), 10);
        assert_eq!(pop.weights().filter(|&w| w == 1.0).count(), 90);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let again = initialize_population(&spec, Beta::new(0.2).unwrap(), &mut rng).unwrap();
        assert_eq!(pop, again);
    }

    #[test]
    fn initialization_explicit_and_errors() {
        let m = 6;
        let mut values = vec![m as f64; m];
        values[m - 1] = 0.0;
        let spec = InitSpec {
            m,
            energy: EnergySpec::Explicit { values },
            weights: WeightSpec::Uniform,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pop = initialize_population(&spec, Beta::new(0.5).unwrap(), &mut rng).unwrap();
        assert_eq!(pop.agent(m - 1).energy(), 0.0);
        assert!((balance_tvd(&pop).unwrap() - 1.0 / m as f64).abs() < 1e-15);

        let bad = InitSpec {
            m: 3,
            energy: EnergySpec::Explicit { values: vec![1.0] },
            weights: WeightSpec::Uniform,
        };
        assert!(matches!(
            initialize_population(&bad, Beta::LOSSLESS, &mut rng),
            Err(Error::Config(_))
        ));
        let bad = InitSpec {
            m: 1,
            ..InitSpec::standard()
        };
        assert!(initialize_population(&bad, Beta::LOSSLESS, &mut rng).is_err());
        let bad = InitSpec {
            weights: WeightSpec::TwoTier {
                fraction: 1.5,
                high: 10.0,
                low: 1.0,
            },
            ..InitSpec::standard()
        };
        assert!(bad.validate().is_err());
    }

    fn check_ledger(t: &Trajectory) {
        let mut prev = t.initial_total_energy;
        for (idx, r) in t.rows.iter().enumerate() {
            assert_eq!(r.k, idx as u64 + 1);
            assert!(r.total_energy <= prev * (1.0 + 1e-12));
            prev = r.total_energy;
            let rel = (t.initial_total_energy - r.total_energy - r.cumulative_loss).abs() / t.initial_total_energy;
            assert!(rel <= 1e-9, "ledger off by {rel}");
        }
        assert!(t.useful_interactions() <= t.draws);
    }

    #[test]
    fn run_invariants_all_protocols() {
        let swt = SwtConfig::default();
        for protocol in [ows(), Protocol::Swt(swt), Protocol::Owa, Protocol::Quantum(swt)] {
            for beta in [0.0, 0.4] {
                let init = InitSpec {
                    m: 20,
                    ..InitSpec::standard()
                };
                let cfg = RunConfig::new(init, Beta::new(beta).unwrap(), protocol, 300, 77);
                let t = run(&cfg).unwrap();
                check_ledger(&t);
                if beta == 0.0 {
                    for r in &t.rows {
                        assert!((r.total_energy - t.initial_total_energy).abs() <= 1e-9 * t.initial_total_energy);
                    }
                }
                // recorded tvd matches the allocating metric
                assert_eq!(
                    t.rows.last().unwrap().tvd.to_bits(),
                    balance_tvd(&t.final_population).unwrap().to_bits()
                );
                assert_eq!(run(&cfg).unwrap(), t);
            }
        }
    }

    #[test]
    fn tvd_at_draw_lookup() {
        let pop = Population::uniform(&[9.0, 0.0, 3.0], 0.0).unwrap();
        let mut sched = ScriptedSchedule::new(vec![(0, 2), (0, 1), (0, 2), (1, 2)]);
        let t = simulate(pop, ows(), &mut sched, 10, 100).unwrap();
        assert_eq!(t.tvd_at_draw(0), t.initial_tvd);
        assert_eq!(t.tvd_at_draw(1), t.rows[0].tvd);
        assert_eq!(t.tvd_at_draw(1000), t.rows.last().unwrap().tvd);
    }
}
