//! Command-line front door: generate tasksets, schedule them, derive server
//! programs, assemble/inspect instruction streams, simulate, and run sweeps.
//!
//! Exit codes: 0 success, 1 infeasible (a valid analytical answer), 2 usage
//! error, 3 data error (malformed input files).

use crate::bench::{self, Algorithm, SweepPoint};
use crate::domain::{TaskSet, Tick};
use crate::isa;
use crate::server_config::finalize;
use crate::sim::{self, DefectPlan, SimInput};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Default master seed; every subcommand is reproducible under it.
pub const DEFAULT_SEED: u64 = 0x0E75_5EED;

#[derive(Parser)]
#[command(name = "etserve", about = "Execution-time-server scheduling toolkit", version)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SeedArg {
    /// Master seed (integer, or `now` for a clock-derived seed).
    #[arg(long, env = "ETSERVE_SEED", default_value_t = SeedSpec::Fixed(DEFAULT_SEED))]
    seed: SeedSpec,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum SeedSpec {
    Fixed(u64),
    Now,
}

impl std::fmt::Display for SeedSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SeedSpec::Fixed(v) => write!(f, "{v}"),
            SeedSpec::Now => f.write_str("now"),
        }
    }
}

impl std::str::FromStr for SeedSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "now" {
            return Ok(SeedSpec::Now);
        }
        s.parse::<u64>()
            .map(SeedSpec::Fixed)
            .map_err(|e| format!("seed must be an integer or `now`: {e}"))
    }
}

impl SeedSpec {
    fn resolve(self) -> u64 {
        match self {
            SeedSpec::Fixed(v) => v,
            SeedSpec::Now => std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_nanos() as u64)
                .unwrap_or(DEFAULT_SEED),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random taskset (JSON).
    Gen {
        /// Number of tasks.
        #[arg(long, default_value_t = 8)]
        n: u32,
        /// Total utilization.
        #[arg(long, default_value_t = 0.4)]
        u: f64,
        #[command(flatten)]
        seed: SeedArg,
        /// Output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Schedule a taskset into servers (JSON solution).
    Sched {
        /// Taskset JSON path.
        #[arg(long = "in")]
        input: PathBuf,
        /// Scheduling algorithm.
        #[arg(long, default_value = "proposed")]
        algo: Algorithm,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Derive the final server program (windows, priorities, robustness).
    Config {
        /// Taskset JSON path.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "proposed")]
        algo: Algorithm,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Assemble or inspect configuration instruction streams.
    Isa {
        #[command(subcommand)]
        action: IsaAction,
    },
    /// Simulate a scheduled taskset on the behavioral hardware model.
    Sim {
        /// Taskset JSON path.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "proposed")]
        algo: Algorithm,
        /// Per-job defect probability.
        #[arg(long, default_value_t = 0.0)]
        pr: f64,
        /// Execution inflation factor for defective jobs.
        #[arg(long, default_value_t = 0.0)]
        pe: f64,
        /// Simulation horizon in ticks (default: one hyperperiod).
        #[arg(long)]
        horizon: Option<Tick>,
        /// Print a human-readable per-tick dump.
        #[arg(long)]
        timeline: bool,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment sweep and emit CSV.
    Bench {
        /// Optional key=value config file; flags override it.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// Task count (default: round(u / 0.05) per point).
        #[arg(long)]
        n: Option<u32>,
        /// Utilization points (comma separated).
        #[arg(long, value_delimiter = ',')]
        u: Vec<f64>,
        /// Defect probability points (comma separated).
        #[arg(long, value_delimiter = ',')]
        pr: Vec<f64>,
        /// Inflation factor points (comma separated).
        #[arg(long, value_delimiter = ',')]
        pe: Vec<f64>,
        /// Systems per grid point.
        #[arg(long)]
        systems: Option<u32>,
        /// Algorithms to run (comma separated).
        #[arg(long, value_delimiter = ',')]
        algo: Vec<Algorithm>,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum IsaAction {
    /// Assemble text to a little-endian binary stream.
    Encode {
        /// Assembly text path.
        #[arg(long = "in")]
        input: PathBuf,
        /// Allow privileged c-type instructions.
        #[arg(long)]
        kernel: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Disassemble a binary stream back to text.
    Decode {
        /// Binary stream path.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Errors past argument parsing, mapped onto the exit-code taxonomy.
enum CliError {
    /// Infeasibility reported as a result, not a failure.
    Infeasible,
    Data(String),
}

type CliResult = Result<(), CliError>;

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn emit(out: &Option<PathBuf>, content: &str) -> CliResult {
    match out {
        Some(path) => fs::write(path, content).map_err(data_err),
        None => {
            print!("{content}");
            if !content.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn load_taskset(path: &Path) -> Result<TaskSet, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let ts: TaskSet = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: line {}: {e}", path.display(), e.line())))?;
    let violations = ts.validate();
    if !violations.is_empty() {
        let msgs: Vec<String> = violations
            .iter()
            .map(|v| format!("task {:?}: {}: {}", v.task, v.field, v.message))
            .collect();
        return Err(CliError::Data(format!(
            "{}: invalid taskset: {}",
            path.display(),
            msgs.join("; ")
        )));
    }
    Ok(ts)
}

fn schedule_taskset(
    ts: &TaskSet,
    algo: Algorithm,
) -> Result<(Vec<crate::domain::JobInstance>, Tick, crate::sched::ScheduleSolution), CliError> {
    let jobs = ts.expand_hyperperiod().map_err(data_err)?;
    let hyperperiod = ts.hyperperiod().map_err(data_err)?;
    let sol = bench::schedule(algo, ts, &jobs, hyperperiod);
    Ok((jobs, hyperperiod, sol))
}

fn run_gen(n: u32, u: f64, seed: u64, out: &Option<PathBuf>) -> CliResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ts = bench::generate_system(n, u, &mut rng).ok_or_else(|| {
        CliError::Data(format!("could not draw a valid system for n={n}, u={u}"))
    })?;
    let json = serde_json::to_string_pretty(&ts).map_err(data_err)?;
    emit(out, &json)
}

fn run_sched(input: &Path, algo: Algorithm, out: &Option<PathBuf>) -> CliResult {
    let ts = load_taskset(input)?;
    let (_, _, sol) = schedule_taskset(&ts, algo)?;
    let json = serde_json::to_string_pretty(&sol).map_err(data_err)?;
    emit(out, &json)?;
    if sol.feasible {
        Ok(())
    } else {
        Err(CliError::Infeasible)
    }
}

fn run_config(input: &Path, algo: Algorithm, out: &Option<PathBuf>) -> CliResult {
    let ts = load_taskset(input)?;
    let (jobs, hyperperiod, sol) = schedule_taskset(&ts, algo)?;
    if !sol.feasible {
        return Err(CliError::Infeasible);
    }
    let prog = finalize(&sol, &jobs, hyperperiod).map_err(data_err)?;
    let json = serde_json::to_string_pretty(&prog).map_err(data_err)?;
    emit(out, &json)
}

fn run_isa(action: &IsaAction) -> CliResult {
    match action {
        IsaAction::Encode { input, kernel, out } => {
            let text = fs::read_to_string(input)
                .map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
            let instructions = isa::parse_asm(&text)
                .map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
            if !kernel {
                if let Some(p) = instructions.iter().find(|i| i.is_privileged()) {
                    return Err(CliError::Data(format!(
                        "privileged instruction `{p}` requires --kernel"
                    )));
                }
            }
            let words: Result<Vec<u32>, _> = instructions.iter().map(isa::encode).collect();
            let bytes = isa::to_bytes(&words.map_err(data_err)?);
            match out {
                Some(path) => fs::write(path, &bytes).map_err(data_err),
                None => {
                    use std::io::Write;
                    std::io::stdout().write_all(&bytes).map_err(data_err)
                }
            }
        }
        IsaAction::Decode { input, out } => {
            let bytes = fs::read(input)
                .map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
            let instructions = isa::decode_stream(&bytes)
                .map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
            let mut text = String::new();
            for i in &instructions {
                text.push_str(&i.to_string());
                text.push('\n');
            }
            emit(out, &text)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_sim(
    input: &Path,
    algo: Algorithm,
    pr: f64,
    pe: f64,
    horizon: Option<Tick>,
    timeline: bool,
    seed: u64,
    out: &Option<PathBuf>,
) -> CliResult {
    let ts = load_taskset(input)?;
    let (jobs, hyperperiod, sol) = schedule_taskset(&ts, algo)?;
    if !sol.feasible {
        return Err(CliError::Infeasible);
    }
    let prog = finalize(&sol, &jobs, hyperperiod).map_err(data_err)?;
    let horizon = horizon.unwrap_or(hyperperiod);
    let plan = if pr > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        bench::defect_plan(&jobs, pr, pe, &mut rng)
    } else {
        DefectPlan::none()
    };
    let sim_input = SimInput::from_program(&prog, &jobs, &plan);
    let trace = sim::run(&sim_input, &ts, horizon);
    let mut lines = String::new();
    for r in &trace.records {
        lines.push_str(&serde_json::to_string(r).map_err(data_err)?);
        lines.push('\n');
    }
    let metrics = bench::compute_metrics(&trace, &jobs, &sol);
    lines.push_str(&serde_json::to_string(&metrics).map_err(data_err)?);
    lines.push('\n');
    emit(out, &lines)?;
    if timeline {
        print!("{}", sim::timeline(&sim_input, &ts, horizon));
    }
    Ok(())
}

/// Parsed `key = value` experiment file; flags override any field.
#[derive(Default)]
struct BenchFile {
    n: Option<u32>,
    u: Vec<f64>,
    pr: Vec<f64>,
    pe: Vec<f64>,
    systems: Option<u32>,
    algo: Vec<Algorithm>,
    seed: Option<u64>,
}

fn parse_bench_file(text: &str, path: &Path) -> Result<BenchFile, CliError> {
    let mut cfg = BenchFile::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| {
            CliError::Data(format!("{}: line {}: {msg}", path.display(), idx + 1))
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err("expected `key = value`".into()))?;
        let (key, value) = (key.trim(), value.trim());
        let floats = |v: &str| -> Result<Vec<f64>, CliError> {
            v.split(',')
                .map(|p| p.trim().parse::<f64>().map_err(|e| err(format!("{key}: {e}"))))
                .collect()
        };
        match key {
            "n" => cfg.n = Some(value.parse().map_err(|e| err(format!("n: {e}")))?),
            "u" => cfg.u = floats(value)?,
            "pr" => cfg.pr = floats(value)?,
            "pe" => cfg.pe = floats(value)?,
            "systems" => {
                cfg.systems = Some(value.parse().map_err(|e| err(format!("systems: {e}")))?)
            }
            "seed" => cfg.seed = Some(value.parse().map_err(|e| err(format!("seed: {e}")))?),
            "algo" => {
                cfg.algo = value
                    .split(',')
                    .map(|p| p.trim().parse::<Algorithm>().map_err(&err))
                    .collect::<Result<_, _>>()?
            }
            other => return Err(err(format!("unknown key {other:?}"))),
        }
    }
    Ok(cfg)
}

/// Builds the sweep grid: algorithms × utilizations × inflation × defect
/// probability, in that nesting order.
fn bench_points(
    n: Option<u32>,
    u: &[f64],
    pr: &[f64],
    pe: &[f64],
    systems: u32,
    algos: &[Algorithm],
) -> Vec<SweepPoint> {
    let mut points = Vec::new();
    for &algorithm in algos {
        for &u in u {
            let n = n.unwrap_or_else(|| ((u / 0.05).round() as u32).max(1));
            for &pe in pe {
                for &pr in pr {
                    points.push(SweepPoint {
                        algorithm,
                        n,
                        u,
                        pr,
                        pe,
                        systems,
                    });
                }
            }
        }
    }
    points
}

#[allow(clippy::too_many_arguments)]
fn run_bench(
    input: &Option<PathBuf>,
    n: Option<u32>,
    u: &[f64],
    pr: &[f64],
    pe: &[f64],
    systems: Option<u32>,
    algo: &[Algorithm],
    seed: SeedSpec,
    out: &Option<PathBuf>,
) -> CliResult {
    let file = match input {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            parse_bench_file(&text, path)?
        }
        None => BenchFile::default(),
    };
    let pick_list = |flag: &[f64], file: &[f64], default: f64| -> Vec<f64> {
        if !flag.is_empty() {
            flag.to_vec()
        } else if !file.is_empty() {
            file.to_vec()
        } else {
            vec![default]
        }
    };
    let u = pick_list(u, &file.u, 0.4);
    let pr = pick_list(pr, &file.pr, 0.0);
    let pe = pick_list(pe, &file.pe, 0.0);
    let n = n.or(file.n);
    let systems = systems.or(file.systems).unwrap_or(100);
    let algos = if !algo.is_empty() {
        algo.to_vec()
    } else if !file.algo.is_empty() {
        file.algo.clone()
    } else {
        vec![Algorithm::Proposed, Algorithm::Fifo, Algorithm::Binpack]
    };
    let master_seed = match seed {
        SeedSpec::Fixed(DEFAULT_SEED) => file.seed.unwrap_or(DEFAULT_SEED),
        other => other.resolve(),
    };
    let points = bench_points(n, &u, &pr, &pe, systems, &algos);
    let csv = bench::run_sweep(&points, master_seed);
    emit(out, &csv)
}

/// Parses argv and runs the selected subcommand, returning the process exit
/// code.
pub fn dispatch() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap exits 2 on usage errors and 0 on --help/--version
            return match e.exit_code() {
                0 => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                _ => {
                    let _ = e.print();
                    ExitCode::from(2)
                }
            };
        }
    };
    let result = match &cli.command {
        Command::Gen { n, u, seed, out } => run_gen(*n, *u, seed.seed.resolve(), out),
        Command::Sched { input, algo, out } => run_sched(input, *algo, out),
        Command::Config { input, algo, out } => run_config(input, *algo, out),
        Command::Isa { action } => run_isa(action),
        Command::Sim {
            input,
            algo,
            pr,
            pe,
            horizon,
            timeline,
            seed,
            out,
        } => run_sim(
            input,
            *algo,
            *pr,
            *pe,
            *horizon,
            *timeline,
            seed.seed.resolve(),
            out,
        ),
        Command::Bench {
            input,
            n,
            u,
            pr,
            pe,
            systems,
            algo,
            seed,
            out,
        } => run_bench(input, *n, u, pr, pe, *systems, algo, seed.seed, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Infeasible) => {
            eprintln!("infeasible");
            ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
