use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use peercharge::engine::{initialize_population, simulate, EnergySpec, InitSpec, RunConfig, WeightSpec};
use peercharge::experiments::output::write_trajectory_csv;
use peercharge::experiments::{init_stream, run_experiment, schedule_stream, write_outputs, Cell, ExperimentSpec};
use peercharge::metrics::balance_tvd;
use peercharge::oracle::{
    adversarial_instance, contraction_bound_check, convergence_time_bound, drift_bound_check, drift_scaled_check,
};
use peercharge::par::{map_indexed, Execution};
use peercharge::scheduler::{ProbabilisticScheduler, ScriptedSchedule, StreamDomain, StreamKey};
use peercharge::{Beta, Protocol, ProtocolKind};

const EXIT_CONFIG: u8 = 1;
const EXIT_TRUNCATED: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(
    name = "peercharge",
    version,
    about = "Peer-to-peer wireless energy balancing simulator"
)]
struct Cli {
    /// Run everything on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a replicated experiment grid and write CSV + JSON outputs.
    Run(RunArgs),
    /// Run a single simulation and dump its full trajectory.
    Once(OnceArgs),
    /// Check the analytical bounds numerically.
    Verify(VerifyArgs),
    /// Print the default experiment spec as TOML.
    Spec,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment spec (TOML). Defaults to the built-in 100-agent grid.
    spec: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    /// Comma-separated list of loss constants.
    #[arg(long, value_delimiter = ',')]
    beta: Option<Vec<f64>>,
    /// Comma-separated list of protocols.
    #[arg(long, value_delimiter = ',')]
    protocol: Option<Vec<ProtocolKind>>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Transfer quantum of the small-transfer protocol.
    #[arg(long)]
    deps: Option<f64>,
    #[arg(long)]
    reps: Option<u32>,
    /// Also write per-replication files under `raw/`.
    #[arg(long)]
    raw: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct OnceArgs {
    #[arg(long, default_value_t = 100)]
    m: usize,
    #[arg(long, default_value_t = 0.2)]
    beta: f64,
    #[arg(long, default_value = "ows")]
    protocol: ProtocolKind,
    #[arg(long, default_value_t = 1000)]
    budget: u64,
    #[arg(long, default_value_t = 2016)]
    seed: u64,
    #[arg(long, default_value_t = peercharge::protocol::DEFAULT_D_EPSILON)]
    deps: f64,
    /// Trajectory CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Check {
    Contraction,
    Drift,
    Convergence,
    Adversarial,
    All,
}

#[derive(Args)]
struct VerifyArgs {
    check: Check,
    /// Random instances for the one-step bounds.
    #[arg(long, default_value_t = 1000)]
    instances: usize,
    /// Replications for the convergence-time check.
    #[arg(long, default_value_t = 100)]
    reps: u32,
    #[arg(long, default_value_t = 2016)]
    seed: u64,
    #[arg(long, default_value_t = peercharge::protocol::DEFAULT_D_EPSILON)]
    deps: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args, exec),
        Command::Once(args) => cmd_once(args),
        Command::Verify(args) => cmd_verify(args, exec),
        Command::Spec => {
            print!("{}", ExperimentSpec::standard().to_toml());
            Ok(ExitCode::SUCCESS)
        }
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(EXIT_CONFIG)
    })
}

fn cmd_run(args: RunArgs, exec: Execution) -> anyhow::Result<ExitCode> {
    let mut spec = match &args.spec {
        Some(path) => ExperimentSpec::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentSpec::standard(),
    };
    if let Some(m) = args.m {
        spec.m = m;
    }
    if let Some(b) = args.beta {
        spec.betas = b;
    }
    if let Some(p) = args.protocol {
        spec.protocols = p;
    }
    if let Some(b) = args.budget {
        spec.budget = b;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(d) = args.deps {
        spec.d_epsilon = d;
    }
    if let Some(r) = args.reps {
        spec.replications = r;
    }
    spec.write_raw |= args.raw;
    spec.validate()?;

    let result = run_experiment(&spec, exec)?;
    let files = write_outputs(&spec, &result, &args.out)?;
    println!("wrote {} files to {}", files.paths.len(), args.out.display());
    for c in &result.cells {
        let t = c.truncated_runs();
        if t > 0 {
            eprintln!(
                "warning: {}: {t} of {} runs truncated",
                c.cell.label(),
                c.trajectories.len()
            );
        }
    }
    Ok(if result.truncated_runs() > 0 {
        ExitCode::from(EXIT_TRUNCATED)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_once(args: OnceArgs) -> anyhow::Result<ExitCode> {
    let beta = Beta::new(args.beta)?;
    let protocol = Protocol::from_kind(args.protocol, args.deps, None)?;
    let init = InitSpec {
        m: args.m,
        ..InitSpec::standard()
    };
    let cfg = RunConfig::new(init, beta, protocol, args.budget, args.seed);
    let t = peercharge::engine::run(&cfg)?;
    match &args.out {
        Some(path) => {
            write_trajectory_csv(&t, path)?;
            eprintln!("wrote {} rows to {}", t.rows.len(), path.display());
        }
        None => {
            if let Err(e) = dump_rows(&t.rows) {
                // a closed pipe (e.g. `| head`) is not an error
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(e.into());
                }
            }
        }
    }
    eprintln!(
        "initial energy {:.4}, final energy {:.4}, initial tvd {:.6}, final tvd {:.6}, draws {}",
        t.initial_total_energy,
        t.final_total_energy(),
        t.initial_tvd,
        t.rows.last().map_or(t.initial_tvd, |r| r.tvd),
        t.draws
    );
    Ok(if t.truncated {
        ExitCode::from(EXIT_TRUNCATED)
    } else {
        ExitCode::SUCCESS
    })
}

fn dump_rows(rows: &[peercharge::engine::TrajectoryRow]) -> std::io::Result<()> {
    let mut out = BufWriter::new(std::io::stdout().lock());
    writeln!(out, "k,draws,total_energy,tvd,cumulative_loss")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.k, r.draws, r.total_energy, r.tvd, r.cumulative_loss
        )?;
    }
    out.flush()
}

fn cmd_verify(args: VerifyArgs, exec: Execution) -> anyhow::Result<ExitCode> {
    if args.instances == 0 {
        bail!("--instances must be >= 1");
    }
    let checks: &[Check] = match args.check {
        Check::All => &[Check::Contraction, Check::Drift, Check::Convergence, Check::Adversarial],
        Check::Contraction => &[Check::Contraction],
        Check::Drift => &[Check::Drift],
        Check::Convergence => &[Check::Convergence],
        Check::Adversarial => &[Check::Adversarial],
    };
    let mut all_ok = true;
    for &check in checks {
        let ok = match check {
            Check::Contraction => verify_contraction(&args, exec)?,
            Check::Drift => verify_drift(&args, exec)?,
            Check::Convergence => verify_convergence(&args, exec)?,
            Check::Adversarial => verify_adversarial()?,
            Check::All => unreachable!(),
        };
        all_ok &= ok;
    }
    Ok(if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VERIFY)
    })
}

fn status(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn random_population(
    seed: u64,
    n: usize,
    m: usize,
    weights: WeightSpec,
    beta: f64,
) -> anyhow::Result<peercharge::Population> {
    let spec = InitSpec {
        m,
        energy: EnergySpec::Uniform { min: 1.0, max: 100.0 },
        weights,
    };
    let mut rng = StreamKey::new(seed, StreamDomain::Sampling, m as u64, n as u64).rng();
    Ok(initialize_population(&spec, Beta::new(beta)?, &mut rng)?)
}

fn verify_contraction(args: &VerifyArgs, exec: Execution) -> anyhow::Result<bool> {
    let sizes = [3usize, 5, 10, 20, 50];
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for n in 0..args.instances {
        let weights = WeightSpec::Range { min: 1.0, max: 10.0 };
        let pop = random_population(args.seed, n, sizes[n % sizes.len()], weights, 0.0)?;
        let c = contraction_bound_check(&pop, exec)?;
        violations += usize::from(!c.holds);
        worst = worst.max(c.lhs - c.rhs);
    }
    let ok = violations == 0;
    println!(
        "[{}] contraction: {violations}/{} violations, max(lhs - rhs) = {worst:.3e}",
        status(ok),
        args.instances
    );
    Ok(ok)
}

fn verify_drift(args: &VerifyArgs, exec: Execution) -> anyhow::Result<bool> {
    let combos = [(5usize, 0.1), (5, 0.5), (10, 0.1), (10, 0.5), (20, 0.1), (20, 0.5)];
    let mut literal = [0usize; 6];
    let mut scaled = 0;
    for n in 0..args.instances {
        let (m, beta) = combos[n % combos.len()];
        let pop = random_population(args.seed, n, m, WeightSpec::Uniform, beta)?;
        literal[n % combos.len()] += usize::from(!drift_bound_check(&pop, args.deps, exec)?.holds);
        scaled += usize::from(!drift_scaled_check(&pop, args.deps, exec)?.holds);
    }
    let ok = literal.iter().all(|&v| v == 0);
    let detail: Vec<String> = combos
        .iter()
        .zip(literal)
        .map(|((m, b), v)| format!("m={m} b={b}: {v}"))
        .collect();
    println!("[{}] drift: violations [{}]", status(ok), detail.join(", "));
    println!(
        "[{}] drift (quantum-scaled L1 form): {scaled}/{} violations",
        status(scaled == 0),
        args.instances
    );
    Ok(ok)
}

fn verify_convergence(args: &VerifyArgs, exec: Execution) -> anyhow::Result<bool> {
    let spec = ExperimentSpec::standard();
    let cell = Cell {
        protocol: ProtocolKind::Ows,
        beta: Beta::LOSSLESS,
    };
    let runs = map_indexed(exec, args.reps as usize, |r| -> anyhow::Result<f64> {
        let r = r as u32;
        let pop = initialize_population(&spec.init(), Beta::LOSSLESS, &mut init_stream(args.seed, r).rng())?;
        let horizon = convergence_time_bound(pop.len(), balance_tvd(&pop)?, 0.01)?.ceil() as u64;
        let mut sched = ProbabilisticScheduler::new(schedule_stream(args.seed, &cell, r).rng());
        let t = simulate(pop, Protocol::Ows { threshold: None }, &mut sched, horizon, horizon)?;
        Ok(t.tvd_at_draw(horizon))
    })
    .into_iter()
    .collect::<anyhow::Result<Vec<_>>>()?;
    let mean = runs.iter().sum::<f64>() / runs.len() as f64;
    let ok = mean <= 0.01;
    println!(
        "[{}] convergence: mean tvd at the bound = {mean:.3e} over {} runs (<= 0.01)",
        status(ok),
        runs.len()
    );
    Ok(ok)
}

fn verify_adversarial() -> anyhow::Result<bool> {
    let (m, beta) = (20usize, 0.2);
    let inst = adversarial_instance(m, beta)?;
    let mut sched = ScriptedSchedule::for_population(vec![(0, m - 1)], m)?;
    let t = simulate(inst.population, Protocol::Ows { threshold: None }, &mut sched, 1, 1)?;
    let after = t.rows[0].tvd;
    let ok = (after - inst.predicted_tvd_after).abs() <= 1e-12 && after > inst.initial_tvd;
    println!(
        "[{}] adversarial: m={m} beta={beta}, tvd {:.6} -> {after:.6} (predicted {:.6})",
        status(ok),
        inst.initial_tvd,
        inst.predicted_tvd_after
    );
    Ok(ok)
}
