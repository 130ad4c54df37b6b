//! Replicated experiment grids over (protocol x beta).
//!
//! Replication `r` of every cell starts from the same initial population,
//! drawn from the initialization stream `(master_seed, r)`. Pair schedules
//! are drawn from `(master_seed, cell, r)`, where the cell id is a hash of the
//! protocol and beta. Neither depends on the replication count or the grid
//! layout, so growing `replications` or adding cells leaves existing runs
//! untouched.

pub mod aggregate;
pub mod analysis;
pub mod output;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{initialize_population, simulate, EnergySpec, InitSpec, Trajectory, WeightSpec};
use crate::error::{Error, Result};
use crate::model::Beta;
use crate::par::{map_indexed, Execution};
use crate::protocol::{Protocol, ProtocolKind, DEFAULT_D_EPSILON};
use crate::scheduler::{label_id, ProbabilisticScheduler, StreamDomain, StreamKey};

pub use aggregate::{AggregateRow, AggregateSeries, Summary};
pub use analysis::{early_loss_share, efficiency_series, linear_fit_r2, tvd_at_energy};

fn default_d_epsilon() -> f64 {
    DEFAULT_D_EPSILON
}

fn default_draws_factor() -> u64 {
    crate::engine::DEFAULT_DRAWS_PER_USEFUL
}

/// Experiment description, loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub m: usize,
    pub budget: u64,
    pub betas: Vec<f64>,
    pub protocols: Vec<ProtocolKind>,
    pub replications: u32,
    pub seed: u64,
    #[serde(default = "default_d_epsilon")]
    pub d_epsilon: f64,
    #[serde(default)]
    pub ows_threshold: Option<f64>,
    /// Draw cap per run, as a multiple of `budget`.
    #[serde(default = "default_draws_factor")]
    pub max_draws_factor: u64,
    #[serde(default)]
    pub energy: EnergySpec,
    #[serde(default)]
    pub weights: WeightSpec,
    /// Also write every replication's trajectory and efficiency curve.
    #[serde(default)]
    pub write_raw: bool,
}

impl ExperimentSpec {
    /// 100 agents, 1000 useful interactions, beta in {0.2, 0.4, 0.6, 0.8},
    /// 100 replications of each of the three protocols.
    pub fn standard() -> Self {
        Self {
            m: 100,
            budget: 1000,
            betas: vec![0.2, 0.4, 0.6, 0.8],
            protocols: vec![ProtocolKind::Ows, ProtocolKind::Swt, ProtocolKind::Owa],
            replications: 100,
            seed: 2016,
            d_epsilon: DEFAULT_D_EPSILON,
            ows_threshold: None,
            max_draws_factor: default_draws_factor(),
            energy: EnergySpec::default(),
            weights: WeightSpec::default(),
            write_raw: false,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec is always representable")
    }

    pub fn init(&self) -> InitSpec {
        InitSpec {
            m: self.m,
            energy: self.energy.clone(),
            weights: self.weights.clone(),
        }
    }

    pub fn max_draws(&self) -> u64 {
        self.budget.saturating_mul(self.max_draws_factor)
    }

    pub fn validate(&self) -> Result<()> {
        self.init().validate()?;
        if self.replications == 0 {
            return Err(Error::Config("replications must be >= 1".into()));
        }
        if self.budget == 0 {
            return Err(Error::Config("budget must be >= 1".into()));
        }
        if self.max_draws_factor == 0 {
            return Err(Error::Config("max_draws_factor must be >= 1".into()));
        }
        if self.betas.is_empty() || self.protocols.is_empty() {
            return Err(Error::Config("grid needs at least one beta and one protocol".into()));
        }
        for &b in &self.betas {
            Beta::new(b).map_err(|_| Error::Config(format!("beta {b} outside [0, 1)")))?;
        }
        for &k in &self.protocols {
            Protocol::from_kind(k, self.d_epsilon, self.ows_threshold).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Grid cells in protocol-major order.
    pub fn cells(&self) -> Vec<Cell> {
        self.protocols
            .iter()
            .flat_map(|&p| {
                self.betas.iter().map(move |&b| Cell {
                    protocol: p,
                    beta: Beta::new(b).expect("validated"),
                })
            })
            .collect()
    }
}

/// One (protocol, beta) combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub protocol: ProtocolKind,
    pub beta: Beta,
}

impl Cell {
    pub fn id(&self) -> u64 {
        let code = ProtocolKind::ALL
            .iter()
            .position(|&k| k == self.protocol)
            .expect("listed") as u64;
        label_id(&[code, self.beta.get().to_bits()])
    }

    /// File-name stem, e.g. `swt_b0.4`.
    pub fn label(&self) -> String {
        format!("{}_b{}", self.protocol, self.beta.get())
    }
}

/// Seed material for one replication of one cell.
pub fn init_stream(master_seed: u64, replication: u32) -> StreamKey {
    StreamKey::new(master_seed, StreamDomain::Initialization, 0, replication as u64)
}

pub fn schedule_stream(master_seed: u64, cell: &Cell, replication: u32) -> StreamKey {
    StreamKey::new(master_seed, StreamDomain::Scheduling, cell.id(), replication as u64)
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: Cell,
    /// In replication order.
    pub trajectories: Vec<Trajectory>,
    pub aggregate: AggregateSeries,
}

impl CellResult {
    pub fn truncated_runs(&self) -> usize {
        self.trajectories.iter().filter(|t| t.truncated).count()
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub cells: Vec<CellResult>,
}

impl ExperimentResult {
    pub fn cell(&self, protocol: ProtocolKind, beta: f64) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.cell.protocol == protocol && c.cell.beta.get() == beta)
    }

    pub fn truncated_runs(&self) -> usize {
        self.cells.iter().map(CellResult::truncated_runs).sum()
    }
}

/// Runs one replication of one cell.
pub fn run_replication(spec: &ExperimentSpec, cell: &Cell, replication: u32) -> Result<Trajectory> {
    let mut init_rng = init_stream(spec.seed, replication).rng();
    let pop = initialize_population(&spec.init(), cell.beta, &mut init_rng)?;
    let protocol = Protocol::from_kind(cell.protocol, spec.d_epsilon, spec.ows_threshold)?;
    let mut schedule = ProbabilisticScheduler::new(schedule_stream(spec.seed, cell, replication).rng());
    simulate(pop, protocol, &mut schedule, spec.budget, spec.max_draws())
}

/// Runs every replication of every cell and aggregates per cell. Results
/// are collected in (cell, replication) order whatever `exec` is.
pub fn run_experiment(spec: &ExperimentSpec, exec: Execution) -> Result<ExperimentResult> {
    spec.validate()?;
    let cells = spec.cells();
    let reps = spec.replications as usize;
    let mut runs = map_indexed(exec, cells.len() * reps, |job| {
        run_replication(spec, &cells[job / reps], (job % reps) as u32)
    })
    .into_iter();

    let mut out = Vec::with_capacity(cells.len());
    for cell in cells {
        let trajectories = runs.by_ref().take(reps).collect::<Result<Vec<_>>>()?;
        let aggregate = AggregateSeries::from_trajectories(&trajectories);
        out.push(CellResult {
            cell,
            trajectories,
            aggregate,
        });
    }
    Ok(ExperimentResult { cells: out })
}

/// Reproducibility sidecar written next to the CSV files.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata<'a> {
    pub software: &'static str,
    pub version: &'static str,
    pub spec: &'a ExperimentSpec,
    pub seed_scheme: &'static str,
    pub assumptions: Vec<&'static str>,
    pub cells: Vec<CellMetadata>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellMetadata {
    pub label: String,
    pub protocol: ProtocolKind,
    pub beta: f64,
    pub cell_id: u64,
    pub truncated_runs: usize,
    pub mean_draws: f64,
}

/// Files written by [`write_outputs`].
#[derive(Debug, Clone, Default)]
pub struct OutputFiles {
    pub paths: Vec<PathBuf>,
}

/// Writes aggregate and efficiency CSVs for every cell, a `summary.csv`,
/// `metadata.json`, and, with `write_raw`, per-replication files under
/// `raw/`.
pub fn write_outputs(spec: &ExperimentSpec, result: &ExperimentResult, dir: &Path) -> Result<OutputFiles> {
    std::fs::create_dir_all(dir)?;
    let mut files = OutputFiles::default();
    let mut summary = csv::Writer::from_path(dir.join("summary.csv"))?;
    summary.write_record([
        "protocol",
        "beta",
        "replications",
        "truncated_runs",
        "mean_final_total_energy",
        "mean_final_tvd",
        "mean_draws",
    ])?;
    let mut cells_meta = Vec::new();
    for c in &result.cells {
        let label = c.cell.label();
        let agg_path = dir.join(format!("{label}_aggregate.csv"));
        output::write_aggregate_csv(&c.aggregate, &agg_path)?;
        let eff_path = dir.join(format!("{label}_efficiency.csv"));
        output::write_efficiency_csv(&c.aggregate.mean_efficiency(), &eff_path)?;
        files.paths.extend([agg_path, eff_path]);

        if spec.write_raw {
            for (r, t) in c.trajectories.iter().enumerate() {
                let traj = dir.join("raw").join(format!("{label}_r{r}_trajectory.csv"));
                let eff = dir.join("raw").join(format!("{label}_r{r}_efficiency.csv"));
                output::write_trajectory_csv(t, &traj)?;
                output::write_efficiency_csv(&efficiency_series(t), &eff)?;
                files.paths.extend([traj, eff]);
            }
        }

        let n = c.trajectories.len() as f64;
        let mean = |f: &dyn Fn(&Trajectory) -> f64| c.trajectories.iter().map(f).sum::<f64>() / n;
        let mean_draws = mean(&|t| t.draws as f64);
        summary.write_record([
            c.cell.protocol.to_string(),
            c.cell.beta.get().to_string(),
            c.trajectories.len().to_string(),
            c.truncated_runs().to_string(),
            output::fmt_f64(mean(&|t| t.final_total_energy())),
            output::fmt_f64(mean(&|t| t.rows.last().map_or(t.initial_tvd, |r| r.tvd))),
            output::fmt_f64(mean_draws),
        ])?;
        cells_meta.push(CellMetadata {
            label,
            protocol: c.cell.protocol,
            beta: c.cell.beta.get(),
            cell_id: c.cell.id(),
            truncated_runs: c.truncated_runs(),
            mean_draws,
        });
    }
    summary.flush()?;
    files.paths.push(dir.join("summary.csv"));

    let meta = Metadata {
        software: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        spec,
        seed_scheme: "ChaCha8 keyed by SplitMix64(master_seed, domain, cell_id, replication); \
                      initialization uses domain 1 with cell 0 (shared by all cells), \
                      scheduling uses domain 2 with the cell id",
        assumptions: vec![
            "initial energies are continuous uniform on the configured range",
            "two-tier weights: the first round(fraction * m) agents are critical",
            "d_epsilon defaults to 0.01 energy units",
            "max draws per run = budget * max_draws_factor",
        ],
        cells: cells_meta,
    };
    let meta_path = dir.join("metadata.json");
    output::write_json(&meta, &meta_path)?;
    files.paths.push(meta_path);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentSpec {
        ExperimentSpec {
            m: 5,
            budget: 10,
            betas: vec![0.2, 0.6],
            protocols: vec![ProtocolKind::Ows, ProtocolKind::Swt, ProtocolKind::Owa],
            replications: 4,
            ..ExperimentSpec::standard()
        }
    }

    #[test]
    fn smoke_run() {
        let spec = small();
        let res = run_experiment(&spec, Execution::Parallel).unwrap();
        assert_eq!(res.cells.len(), 6);
        for c in &res.cells {
            assert_eq!(c.trajectories.len(), 4);
            assert_eq!(c.aggregate.rows.len(), 11);
            for r in &c.aggregate.rows {
                assert!(r.tvd.q1 <= r.tvd.median && r.tvd.median <= r.tvd.q3);
            }
        }
    }

    #[test]
    fn replications_are_prefix_stable() {
        let spec = small();
        let more = ExperimentSpec {
            replications: 7,
            ..small()
        };
        let a = run_experiment(&spec, Execution::Sequential).unwrap();
        let b = run_experiment(&more, Execution::Parallel).unwrap();
        for (ca, cb) in a.cells.iter().zip(&b.cells) {
            assert_eq!(ca.trajectories[..], cb.trajectories[..4]);
        }
    }

    #[test]
    fn cells_share_initial_populations() {
        let res = run_experiment(&small(), Execution::Parallel).unwrap();
        let first = &res.cells[0].trajectories;
        for c in &res.cells[1..] {
            for (a, b) in first.iter().zip(&c.trajectories) {
                assert_eq!(a.initial_total_energy, b.initial_total_energy);
                assert_eq!(a.initial_tvd, b.initial_tvd);
            }
        }
    }

    #[test]
    fn cell_ids_distinct() {
        let spec = ExperimentSpec {
            protocols: ProtocolKind::ALL.to_vec(),
            ..ExperimentSpec::standard()
        };
        let mut ids: Vec<u64> = spec.cells().iter().map(Cell::id).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 16);
    }

    #[test]
    fn spec_validation() {
        assert!(ExperimentSpec {
            replications: 0,
            ..small()
        }
        .validate()
        .is_err());
        assert!(ExperimentSpec {
            betas: vec![1.0],
            ..small()
        }
        .validate()
        .is_err());
        assert!(ExperimentSpec { budget: 0, ..small() }.validate().is_err());
        assert!(ExperimentSpec {
            d_epsilon: 0.0,
            ..small()
        }
        .validate()
        .is_err());
        assert!(ExperimentSpec { m: 1, ..small() }.validate().is_err());
    }

    #[test]
    fn toml_round_trip_and_defaults() {
        let spec = ExperimentSpec::standard();
        assert_eq!(ExperimentSpec::from_toml(&spec.to_toml()).unwrap(), spec);

        let text = r#"
            m = 10
            budget = 50
            betas = [0.5]
            protocols = ["owa"]
            replications = 3
            seed = 9
        "#;
        let spec = ExperimentSpec::from_toml(text).unwrap();
        assert_eq!(spec.d_epsilon, DEFAULT_D_EPSILON);
        assert_eq!(spec.weights, WeightSpec::default());
        assert!(ExperimentSpec::from_toml("m = 10\nbogus = 1").is_err());
    }

    #[test]
    fn outputs_written() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ExperimentSpec {
            write_raw: true,
            ..small()
        };
        let res = run_experiment(&spec, Execution::Parallel).unwrap();
        let files = write_outputs(&spec, &res, dir.path()).unwrap();
        assert_eq!(files.paths.len(), 6 * 2 + 6 * 4 * 2 + 2);
        let agg = std::fs::read_to_string(dir.path().join("swt_b0.2_aggregate.csv")).unwrap();
        assert_eq!(agg.lines().count(), 12);
        assert!(agg
            .starts_with("k,mean_total_energy,mean_tvd,median_tvd,q1_tvd,q3_tvd,mean_cumulative_loss,tvd_outliers\n"));
        let meta: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("metadata.json")).unwrap()).unwrap();
        assert_eq!(meta["spec"]["m"], 5);
    }
}
