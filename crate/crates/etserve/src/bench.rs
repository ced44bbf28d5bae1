//! Experiment harness: UUniFast task-set generation, timing-defect plans,
//! baseline schedulers, an exhaustive small-instance oracle, metric
//! computation, and deterministic sweep execution.

use crate::domain::{JobInstance, ModelShape, TaskSet, TaskSpec, Tick, TimingAccuracyModel};
use crate::sched::{allocate_and_schedule, AllocatedJob, ScheduleSolution, ServerDraft, ServerKind};
use crate::server_config::finalize;
use crate::sim::{run, DefectPlan, SimInput, SimTrace};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;

/// Default period menu: divisors of the 1440-tick hyperperiod.
pub const PERIOD_MENU: [Tick; 10] = [120, 144, 160, 180, 240, 288, 360, 480, 720, 1440];

pub const DEFAULT_HYPERPERIOD: Tick = 1440;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Proposed,
    Fifo,
    Binpack,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Algorithm::Proposed => "proposed",
            Algorithm::Fifo => "fifo",
            Algorithm::Binpack => "binpack",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "proposed" => Ok(Algorithm::Proposed),
            "fifo" => Ok(Algorithm::Fifo),
            "binpack" => Ok(Algorithm::Binpack),
            other => Err(format!("unknown algorithm {other:?}")),
        }
    }
}

/// One grid point of an experiment sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub algorithm: Algorithm,
    pub n: u32,
    pub u: f64,
    pub pr: f64,
    pub pe: f64,
    pub systems: u32,
}

/// Aggregate metrics of one simulated system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schedulable: bool,
    pub acceptance: f64,
    pub exact_fraction: f64,
    pub norm_quality: f64,
}

/// Standard UUniFast: `n` utilizations summing to `u`.
pub fn uunifast(n: u32, u: f64, rng: &mut impl Rng) -> Vec<f64> {
    assert!(n >= 1 && u > 0.0);
    let mut out = Vec::with_capacity(n as usize);
    let mut sum = u;
    for i in 1..n {
        let next = sum * rng.gen::<f64>().powf(1.0 / (n - i) as f64);
        out.push(sum - next);
        sum = next;
    }
    out.push(sum);
    out
}

const GEN_RETRIES: usize = 16;

/// Draws a random task set with the given size and total utilization.
/// Returns `None` when a task stays degenerate after bounded resampling.
pub fn generate_system(n: u32, u: f64, rng: &mut impl Rng) -> Option<TaskSet> {
    let utils = uunifast(n, u, rng);
    let mut tasks = Vec::with_capacity(n as usize);
    for (i, ui) in utils.iter().enumerate() {
        let mut ok = None;
        for _ in 0..GEN_RETRIES {
            let period = PERIOD_MENU[rng.gen_range(0..PERIOD_MENU.len())];
            let wcet = ((ui * period as f64).round() as Tick).max(1);
            if wcet > period {
                continue;
            }
            let ideal_offset = rng.gen_range(0..=period - wcet);
            let shape = match rng.gen_range(0..4) {
                0 => ModelShape::SymmetricLinear { w: rng.gen_range(1..=period) },
                1 => ModelShape::Spike,
                2 => ModelShape::RightSidedLinear { w_r: rng.gen_range(1..=period) },
                _ => ModelShape::AsymmetricLinear {
                    w_l: rng.gen_range(1..=period),
                    w_r: rng.gen_range(1..=period),
                },
            };
            let v_max = rng.gen_range(1.0..=100.0);
            let v_min = rng.gen_range(0.0..=v_max);
            ok = Some(TaskSpec {
                id: i as u8,
                wcet,
                period,
                deadline: None,
                ideal_offset,
                model: TimingAccuracyModel { shape, v_max, v_min },
            });
            break;
        }
        tasks.push(ok?);
    }
    Some(TaskSet { tick_ms: 1, tasks })
}

/// Inflated actual duration `ceil(C · (1 + pe))`, computed with a rounding
/// guard so exact products do not tip over.
pub fn inflated_duration(wcet: Tick, pe: f64) -> Tick {
    let x = wcet as f64 * (1.0 + pe);
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as Tick
    } else {
        x.ceil() as Tick
    }
}

/// Marks each job independently with probability `pr`; marked jobs run for
/// the inflated duration.
pub fn defect_plan(jobs: &[JobInstance], pr: f64, pe: f64, rng: &mut impl Rng) -> DefectPlan {
    let mut plan = DefectPlan::none();
    for j in jobs {
        if rng.gen::<f64>() < pr {
            plan.set(j.task, j.index, inflated_duration(j.wcet, pe));
        }
    }
    plan
}

/// FIFO baseline: one shared server over the whole hyperperiod, jobs packed
/// back-to-back in release order with no ideal-offset preference.
pub fn schedule_fifo(jobs: &[JobInstance], hyperperiod: Tick) -> ScheduleSolution {
    let mut order: Vec<&JobInstance> = jobs.iter().collect();
    order.sort_by_key(|j| (j.release, j.task, j.index));
    let mut allocated = Vec::new();
    let mut cursor: Tick = 0;
    for job in order {
        let theta = job.release.max(cursor);
        if theta + job.wcet > job.deadline || theta + job.wcet > hyperperiod {
            return ScheduleSolution::infeasible(job);
        }
        cursor = theta + job.wcet;
        allocated.push(AllocatedJob {
            task: job.task,
            index: job.index,
            theta,
        });
    }
    ScheduleSolution {
        feasible: true,
        servers: vec![ServerDraft {
            kind: ServerKind::Quality,
            alpha: 0,
            lambda: hyperperiod,
            jobs: allocated,
        }],
        unplaceable: None,
    }
}

/// Bin-packing baseline: jobs sorted by ideal offset, first-fit at the
/// ideal start, then scanning later and finally earlier slots, without
/// regard to deadline tightness. One wall-clock bin over the hyperperiod.
pub fn schedule_binpack(jobs: &[JobInstance], hyperperiod: Tick) -> ScheduleSolution {
    let mut order: Vec<&JobInstance> = jobs.iter().collect();
    order.sort_by_key(|j| (j.ideal_start, j.task, j.index));
    let mut occupied: Vec<(Tick, Tick)> = Vec::new(); // sorted disjoint intervals
    let free = |occupied: &[(Tick, Tick)], s: Tick, e: Tick| {
        e <= hyperperiod && occupied.iter().all(|&(a, b)| e <= a || b <= s)
    };
    let mut allocated = Vec::new();
    for job in order {
        let latest = job.deadline - job.wcet;
        let mut slot = None;
        for theta in job.ideal_start..=latest {
            if free(&occupied, theta, theta + job.wcet) {
                slot = Some(theta);
                break;
            }
        }
        if slot.is_none() {
            for theta in (job.release..job.ideal_start).rev() {
                if free(&occupied, theta, theta + job.wcet) {
                    slot = Some(theta);
                    break;
                }
            }
        }
        let Some(theta) = slot else {
            return ScheduleSolution::infeasible(job);
        };
        occupied.push((theta, theta + job.wcet));
        occupied.sort_unstable();
        allocated.push(AllocatedJob {
            task: job.task,
            index: job.index,
            theta,
        });
    }
    allocated.sort_by_key(|a| a.theta);
    ScheduleSolution {
        feasible: true,
        servers: vec![ServerDraft {
            kind: ServerKind::Quality,
            alpha: 0,
            lambda: hyperperiod,
            jobs: allocated,
        }],
        unplaceable: None,
    }
}

pub fn schedule(algorithm: Algorithm, ts: &TaskSet, jobs: &[JobInstance], hyperperiod: Tick) -> ScheduleSolution {
    match algorithm {
        Algorithm::Proposed => allocate_and_schedule(ts, jobs, hyperperiod),
        Algorithm::Fifo => schedule_fifo(jobs, hyperperiod),
        Algorithm::Binpack => schedule_binpack(jobs, hyperperiod),
    }
}

/// Oracle guard rails: exhaustive search only on tiny instances.
pub const ORACLE_MAX_JOBS: usize = 6;
pub const ORACLE_MAX_HYPERPERIOD: Tick = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResult {
    pub feasible: bool,
    /// Maximum achievable total quality over all non-preemptive schedules;
    /// zero when infeasible.
    pub max_quality: f64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("instance too large for the exhaustive oracle ({jobs} jobs, hyperperiod {hyperperiod})")]
pub struct OracleTooLarge {
    pub jobs: usize,
    pub hyperperiod: Tick,
}

/// Exhaustive search over every job ordering and every integer start offset
/// on the tick grid. Memoized on (scheduled set, earliest next start).
pub fn oracle_schedule(
    ts: &TaskSet,
    jobs: &[JobInstance],
    hyperperiod: Tick,
) -> Result<OracleResult, OracleTooLarge> {
    if jobs.len() > ORACLE_MAX_JOBS || hyperperiod > ORACLE_MAX_HYPERPERIOD {
        return Err(OracleTooLarge {
            jobs: jobs.len(),
            hyperperiod,
        });
    }
    let quality_at = |job: &JobInstance, theta: Tick| {
        let task = ts.task(job.task).expect("task exists");
        task.model.quality(
            theta - job.release,
            task.ideal_offset,
            task.wcet,
            task.deadline(),
        )
    };
    fn search(
        mask: u32,
        end: Tick,
        jobs: &[JobInstance],
        quality_at: &dyn Fn(&JobInstance, Tick) -> f64,
        memo: &mut HashMap<(u32, Tick), Option<f64>>,
    ) -> Option<f64> {
        if mask == (1 << jobs.len()) - 1 {
            return Some(0.0);
        }
        if let Some(&hit) = memo.get(&(mask, end)) {
            return hit;
        }
        let mut best: Option<f64> = None;
        for (i, job) in jobs.iter().enumerate() {
            if mask & (1 << i) != 0 {
                continue;
            }
            let lo = job.release.max(end);
            if lo + job.wcet > job.deadline {
                continue;
            }
            for theta in lo..=job.deadline - job.wcet {
                if let Some(rest) = search(
                    mask | (1 << i),
                    theta + job.wcet,
                    jobs,
                    quality_at,
                    memo,
                ) {
                    let total = quality_at(job, theta) + rest;
                    if best.is_none_or(|b| total > b) {
                        best = Some(total);
                    }
                }
            }
        }
        memo.insert((mask, end), best);
        best
    }
    let mut memo = HashMap::new();
    let best = search(0, 0, jobs, &quality_at, &mut memo);
    Ok(OracleResult {
        feasible: best.is_some(),
        max_quality: best.unwrap_or(0.0),
    })
}

/// Metrics over one simulated hyperperiod.
pub fn compute_metrics(trace: &SimTrace, jobs: &[JobInstance], sol: &ScheduleSolution) -> MetricsReport {
    let total = jobs.len().max(1) as f64;
    let met = trace.records.iter().filter(|r| r.met).count() as f64;
    let exact = trace
        .records
        .iter()
        .filter(|r| {
            jobs.iter()
                .any(|j| j.task == r.task && j.index == r.j && r.dispatch == Some(j.ideal_start))
        })
        .count() as f64;
    let max_quality: f64 = jobs.iter().map(|j| j.v_max).sum();
    let achieved: f64 = trace.records.iter().map(|r| r.quality).sum();
    MetricsReport {
        schedulable: sol.feasible,
        acceptance: met / total,
        exact_fraction: exact / total,
        norm_quality: if max_quality > 0.0 {
            achieved / max_quality
        } else {
            0.0
        },
    }
}

/// Outcome of evaluating one generated system under one algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SystemOutcome {
    /// Generator gave up on the draw.
    GenerationFailed,
    Infeasible,
    Feasible(MetricsReport),
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Per-system seed: independent of the algorithm so every scheduler faces
/// the same systems and defect plans.
pub fn system_seed(master: u64, n: u32, u: f64, pr: f64, pe: f64, index: u32) -> u64 {
    let mut h = splitmix64(master);
    for part in [
        n as u64,
        u.to_bits(),
        pr.to_bits(),
        pe.to_bits(),
        index as u64,
    ] {
        h = splitmix64(h ^ part);
    }
    h
}

/// Generates, schedules, simulates, and measures one system.
pub fn evaluate_system(algorithm: Algorithm, n: u32, u: f64, pr: f64, pe: f64, seed: u64) -> SystemOutcome {
    let mut gen_rng = ChaCha8Rng::seed_from_u64(seed);
    let Some(ts) = generate_system(n, u, &mut gen_rng) else {
        return SystemOutcome::GenerationFailed;
    };
    let Ok(jobs) = ts.expand_hyperperiod() else {
        return SystemOutcome::GenerationFailed;
    };
    let hyperperiod = ts.hyperperiod().expect("validated");
    let sol = schedule(algorithm, &ts, &jobs, hyperperiod);
    if !sol.feasible {
        return SystemOutcome::Infeasible;
    }
    let prog = finalize(&sol, &jobs, hyperperiod).expect("feasible solution configures");
    let mut defect_rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x00de_fec7));
    let plan = defect_plan(&jobs, pr, pe, &mut defect_rng);
    let input = SimInput::from_program(&prog, &jobs, &plan);
    let trace = run(&input, &ts, hyperperiod);
    SystemOutcome::Feasible(compute_metrics(&trace, &jobs, &sol))
}

/// One aggregated CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: SweepPoint,
    /// Fraction of systems that were feasible and met every deadline under
    /// the injected defects.
    pub schedulable_ratio: f64,
    pub acceptance: f64,
    pub exact_fraction: f64,
    pub norm_quality: f64,
}

/// Runs one grid point; systems evaluate in parallel, aggregation follows
/// seed order.
pub fn run_point(point: &SweepPoint, master_seed: u64) -> SweepRow {
    let outcomes: Vec<SystemOutcome> = (0..point.systems)
        .into_par_iter()
        .map(|s| {
            let seed = system_seed(master_seed, point.n, point.u, point.pr, point.pe, s);
            evaluate_system(point.algorithm, point.n, point.u, point.pr, point.pe, seed)
        })
        .collect();

    let total = point.systems.max(1) as f64;
    let mut no_miss = 0u32;
    let mut feasible = 0u32;
    let (mut acc, mut exact, mut quality) = (0.0, 0.0, 0.0);
    for o in &outcomes {
        if let SystemOutcome::Feasible(m) = o {
            feasible += 1;
            if m.acceptance == 1.0 {
                no_miss += 1;
            }
            acc += m.acceptance;
            exact += m.exact_fraction;
            quality += m.norm_quality;
        }
    }
    let over_feasible = |x: f64| if feasible > 0 { x / feasible as f64 } else { 0.0 };
    SweepRow {
        point: point.clone(),
        schedulable_ratio: no_miss as f64 / total,
        acceptance: over_feasible(acc),
        exact_fraction: over_feasible(exact),
        norm_quality: over_feasible(quality),
    }
}

pub const CSV_HEADER: &str =
    "algorithm,n,U,P_r,P_e,systems,schedulable_ratio,acceptance,exact_fraction,norm_quality";

pub fn csv_row(row: &SweepRow) -> String {
    format!(
        "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
        row.point.algorithm,
        row.point.n,
        row.point.u,
        row.point.pr,
        row.point.pe,
        row.point.systems,
        row.schedulable_ratio,
        row.acceptance,
        row.exact_fraction,
        row.norm_quality
    )
}

/// Runs every grid point and renders the CSV. Deterministic for a fixed
/// master seed.
pub fn run_sweep(points: &[SweepPoint], master_seed: u64) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&csv_row(&run_point(p, master_seed)));
        out.push('\n');
    }
    out
}
