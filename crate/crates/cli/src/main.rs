use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand};
use uav_mtfl::alloc::{bcd_solve, links_for, BcdOptions, Medium};
use uav_mtfl::association::{evaluate, two_stage_assign, utility_table, RoundInputs};
use uav_mtfl::sim::{self, ScenarioConfig};
use uav_mtfl::{par, validate};

/// Sets the worker pool size; nothing else is read from the environment.
const THREADS_VAR: &str = "UAV_MTFL_THREADS";

#[derive(Parser)]
#[command(name = "uav-mtfl", version, about = "Energy-aware multi-task federated learning over a UAV swarm")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its CSVs.
    Simulate {
        /// Scenario TOML; the stock scenario when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Config overrides, `dotted.key=value` in TOML syntax.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run the same scenario for each V and print one summary row per value.
    SweepV {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.1,1,10,100")]
        v: Vec<f64>,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Cross-check every solver against its reference oracle.
    Validate,
    /// Time BCD and the two-stage association at N = 10, M = 3.
    Bench {
        #[arg(long, default_value_t = 200)]
        reps: usize,
    },
}

fn load(config: Option<&Path>, seed: Option<u64>, mut overrides: Vec<String>) -> uav_mtfl::Result<ScenarioConfig> {
    if let Some(s) = seed {
        overrides.push(format!("seed={s}"));
    }
    match config {
        Some(path) => ScenarioConfig::load(path, &overrides),
        None => ScenarioConfig::with_overrides(sim::config::DEFAULT_SCENARIO, &overrides),
    }
}

fn simulate(cfg: &ScenarioConfig, out: &Path) -> uav_mtfl::Result<()> {
    std::fs::create_dir_all(out)?;
    let start = Instant::now();
    let report = sim::run_to_dir(cfg, out)?;
    let s = &report.summary;
    println!(
        "{} rounds in {:.1?}: accuracy {:.4}, gap {:.2}, violation {:.4} J, energy {:.3} J, bound {}",
        s.rounds,
        start.elapsed(),
        s.final_avg_acc,
        s.performance_gap,
        s.mean_violation,
        s.total_energy,
        if s.bound_holds() { "holds" } else { "VIOLATED" }
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn sweep(cfg: &ScenarioConfig, v: &[f64], out: Option<&Path>) -> uav_mtfl::Result<()> {
    let rows = sim::sweep_v(cfg, v)?;
    match out {
        Some(path) => sim::write_summaries(&rows, std::fs::File::create(path)?),
        None => sim::write_summaries(&rows, std::io::stdout().lock()),
    }
}

fn run_validate() -> bool {
    let checks = validate::run_all();
    println!("{:<34} {:>11} {:>9}  result  detail", "check", "worst", "tol");
    for c in &checks {
        let verdict = if c.passed { "pass" } else { "FAIL" };
        println!("{:<34} {:>11.3e} {:>9.1e}  {verdict:<6}  {}", c.name, c.worst, c.tolerance, c.detail);
    }
    checks.iter().all(|c| c.passed)
}

fn timed<F: FnMut()>(reps: usize, mut f: F) -> (Duration, Duration) {
    let mut best = Duration::MAX;
    let start = Instant::now();
    for _ in 0..reps {
        let t = Instant::now();
        f();
        best = best.min(t.elapsed());
    }
    (start.elapsed() / reps.max(1) as u32, best)
}

fn bench(reps: usize) -> uav_mtfl::Result<()> {
    let model = validate::random_model(11, 10, 3);
    let gains = model.gain_matrix()?;
    let queues: Vec<f64> = (0..10).map(|n| 0.5 + 0.3 * n as f64).collect();
    let alpha = [0.5, 0.3, 0.2];
    let inputs = RoundInputs {
        model: &model,
        gains: &gains,
        queues: &queues,
        alpha: &alpha,
        data: &model.compute.data_sizes,
        v: 0.01,
        min_per_task: &[2, 2, 2],
    };
    let opts = BcdOptions::default();
    let assoc = two_stage_assign(&utility_table(&inputs), &queues, &alpha, inputs.min_per_task)?;
    let links = links_for(&model, &gains, &assoc.assignment);
    let medium = Medium::from_model(&model);
    bcd_solve(&links, &queues, &medium, &opts)
        .map_err(|reason| uav_mtfl::Error::InfeasibleRound { round: 0, reason })?;

    println!("N = 10, M = 3, {reps} reps, parallel = {}", par::PARALLEL);
    let (mean, best) = timed(reps, || {
        bcd_solve(&links, &queues, &medium, &opts).expect("feasible");
    });
    println!("bcd                 mean {mean:>10.1?}  best {best:>10.1?}");
    let (mean, best) = timed(reps, || {
        let a = two_stage_assign(&utility_table(&inputs), &queues, &alpha, inputs.min_per_task).expect("feasible");
        evaluate(&inputs, &a.assignment, &opts).expect("feasible");
    });
    println!("two-stage + bcd     mean {mean:>10.1?}  best {best:>10.1?}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    if let Ok(raw) = std::env::var(THREADS_VAR) {
        match raw.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = par::set_threads(n) {
                    eprintln!("warning: {THREADS_VAR}: {e}");
                }
            }
            _ => {
                eprintln!("error: {THREADS_VAR} must be a positive integer, got {raw:?}");
                return ExitCode::from(2);
            }
        }
    }

    let result = match Cli::parse().command {
        Command::Simulate { config, seed, out, overrides } => {
            load(config.as_deref(), seed, overrides).and_then(|cfg| simulate(&cfg, &out))
        }
        Command::SweepV { config, seed, v, out, overrides } => {
            load(config.as_deref(), seed, overrides).and_then(|cfg| sweep(&cfg, &v, out.as_deref()))
        }
        Command::Validate => {
            return if run_validate() { ExitCode::SUCCESS } else { ExitCode::FAILURE };
        }
        Command::Bench { reps } => bench(reps),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
