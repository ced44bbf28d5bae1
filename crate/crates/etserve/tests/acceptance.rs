//! Acceptance gate: one test per criterion, each printing a single
//! `criterion N (<name>): PASS|FAIL` line (run with `-- --nocapture` to see
//! the lines on success).

use etserve::bench::{
    self, evaluate_system, oracle_schedule, system_seed, Algorithm, SweepPoint, SystemOutcome,
};
use etserve::domain::{JobInstance, ModelShape, TaskSet, TaskSpec, Tick, TimingAccuracyModel};
use etserve::isa;
use etserve::sched::{allocate_and_schedule, ServerKind};
use etserve::server_config::{finalize, EtsProgram};
use etserve::sim::{run, DefectPlan, SimInput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn report(n: u32, name: &str, result: Result<(), String>) {
    match &result {
        Ok(()) => println!("criterion {n} ({name}): PASS"),
        Err(e) => println!("criterion {n} ({name}): FAIL — {e}"),
    }
    if let Err(e) = result {
        panic!("criterion {n} ({name}) failed: {e}");
    }
}

struct BuiltSystem {
    ts: TaskSet,
    jobs: Vec<JobInstance>,
    hyperperiod: Tick,
    prog: EtsProgram,
}

/// Generates one system and schedules it with the proposed algorithm;
/// `None` when generation fails or the system is infeasible.
fn build_system(n: u32, u: f64, seed: u64) -> Option<BuiltSystem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ts = bench::generate_system(n, u, &mut rng)?;
    let jobs = ts.expand_hyperperiod().ok()?;
    let hyperperiod = ts.hyperperiod().ok()?;
    let sol = allocate_and_schedule(&ts, &jobs, hyperperiod);
    if !sol.feasible {
        return None;
    }
    let prog = finalize(&sol, &jobs, hyperperiod).ok()?;
    Some(BuiltSystem {
        ts,
        jobs,
        hyperperiod,
        prog,
    })
}

/// A pool of feasible systems over n ∈ [lo, hi] with U = 0.05·n.
fn feasible_pool(lo: u32, hi: u32, want: usize, salt: u64) -> Vec<BuiltSystem> {
    let attempts: Vec<(u32, u64)> = (0..want as u64 * 12)
        .map(|i| {
            let n = lo + (i as u32 % (hi - lo + 1));
            (n, system_seed(salt, n, 0.05 * n as f64, 0.0, 0.0, i as u32))
        })
        .collect();
    let mut pool: Vec<BuiltSystem> = attempts
        .par_iter()
        .filter_map(|&(n, seed)| build_system(n, 0.05 * n as f64, seed))
        .collect();
    pool.truncate(want.max(pool.len().min(want)));
    pool
}

fn job_of(jobs: &[JobInstance], task: u8, index: u32) -> &JobInstance {
    jobs.iter()
        .find(|j| j.task == task && j.index == index)
        .expect("allocated job exists")
}

#[test]
fn c1_conformance() {
    let result = (|| -> Result<(), String> {
        let checked: Vec<Result<(), String>> = (0..5000u64)
            .into_par_iter()
            .filter_map(|i| {
                let n = 4 + (i as u32 % 13); // n ∈ [4, 16]
                let u = 0.05 * n as f64;
                let seed = system_seed(0xC1, n, u, 0.0, 0.0, i as u32);
                let sys = build_system(n, u, seed)?;
                let input = SimInput::from_program(&sys.prog, &sys.jobs, &DefectPlan::none());
                let trace = run(&input, &sys.ts, sys.hyperperiod);
                if trace.records.iter().any(|r| !r.met) {
                    return Some(Err(format!("deadline miss without defects (seed {seed})")));
                }
                for server in &sys.prog.servers {
                    if server.kind != ServerKind::Exact {
                        continue;
                    }
                    for a in &server.jobs {
                        let job = job_of(&sys.jobs, a.task, a.index);
                        let rec = trace.record(a.task, a.index).expect("record");
                        if rec.dispatch != Some(job.ideal_start) {
                            return Some(Err(format!(
                                "exact job ({}, {}) dispatched at {:?}, ideal {} (seed {seed})",
                                a.task, a.index, rec.dispatch, job.ideal_start
                            )));
                        }
                    }
                }
                Some(Ok(()))
            })
            .collect();
        let feasible = checked.len();
        if feasible < 1000 {
            return Err(format!("only {feasible} feasible systems, need 1000"));
        }
        for c in checked {
            c?;
        }
        Ok(())
    })();
    report(1, "defect-free conformance", result);
}

#[test]
fn c2_server_delay_tolerance() {
    let result = (|| -> Result<(), String> {
        let pool = feasible_pool(4, 12, 300, 0xC2);
        if pool.len() < 300 {
            return Err(format!("only {} feasible systems, need 300", pool.len()));
        }
        let mut servers_checked = 0u64;
        let mut tight_misses = 0u64;
        let mut rng = ChaCha8Rng::seed_from_u64(0x2C2);
        for sys in pool.iter().take(300) {
            for server in &sys.prog.servers {
                // delaying the whole content by x ≤ Υ must keep every
                // in-server deadline
                let x = rng.gen_range(0..=server.upsilon);
                for a in &server.jobs {
                    let job = job_of(&sys.jobs, a.task, a.index);
                    if a.theta + x + job.wcet > job.deadline {
                        return Err(format!(
                            "delay {x} ≤ Υ={} missed job ({}, {})",
                            server.upsilon, a.task, a.index
                        ));
                    }
                }
                // Υ + 1 must produce at least one miss
                let over = server.upsilon + 1;
                if server.jobs.iter().any(|a| {
                    let job = job_of(&sys.jobs, a.task, a.index);
                    a.theta + over + job.wcet > job.deadline
                }) {
                    tight_misses += 1;
                }
                servers_checked += 1;
            }
        }
        let ratio = tight_misses as f64 / servers_checked as f64;
        if ratio < 0.95 {
            return Err(format!(
                "Υ+1 produced misses in only {ratio:.3} of {servers_checked} servers"
            ));
        }
        Ok(())
    })();
    report(2, "server delay tolerance (tight)", result);
}

#[test]
fn c3_interference_tolerance() {
    let result = (|| -> Result<(), String> {
        let pool = feasible_pool(4, 10, 300, 0xC3);
        if pool.len() < 300 {
            return Err(format!("only {} feasible systems, need 300", pool.len()));
        }
        let checks: Vec<Result<(), String>> = pool
            .par_iter()
            .take(300)
            .enumerate()
            .map(|(i, sys)| {
                let mut rng = ChaCha8Rng::seed_from_u64(0x3C3 ^ i as u64);
                // (a) fill any single server's window: no miss outside it
                let picks: Vec<usize> = (0..3)
                    .map(|_| rng.gen_range(0..sys.prog.servers.len()))
                    .collect();
                for &k in &picks {
                    let server = &sys.prog.servers[k];
                    let first = server
                        .jobs
                        .iter()
                        .min_by_key(|a| a.theta)
                        .expect("server has jobs");
                    let job = job_of(&sys.jobs, first.task, first.index);
                    let mut plan = DefectPlan::none();
                    plan.set(
                        first.task,
                        first.index,
                        (server.window_end - first.theta).max(job.wcet),
                    );
                    let input = SimInput::from_program(&sys.prog, &sys.jobs, &plan);
                    let trace = run(&input, &sys.ts, sys.hyperperiod);
                    for r in &trace.records {
                        let inside = server
                            .jobs
                            .iter()
                            .any(|a| a.task == r.task && a.index == r.j);
                        if !inside && !r.met {
                            return Err(format!(
                                "filling server {k} missed outside job ({}, {}) in system {i}",
                                r.task, r.j
                            ));
                        }
                    }
                }
                // (b) total interference below the robustness bound: no
                // miss anywhere
                let rho = sys
                    .prog
                    .servers
                    .iter()
                    .map(|s| s.omega.min(s.upsilon))
                    .min()
                    .unwrap();
                if rho > 0 {
                    let victim = &sys.jobs[rng.gen_range(0..sys.jobs.len())];
                    let mut plan = DefectPlan::none();
                    plan.set(victim.task, victim.index, victim.wcet + rho - 1);
                    let input = SimInput::from_program(&sys.prog, &sys.jobs, &plan);
                    let trace = run(&input, &sys.ts, sys.hyperperiod);
                    if let Some(r) = trace.records.iter().find(|r| !r.met) {
                        return Err(format!(
                            "interference {} < ρ={rho} missed job ({}, {}) in system {i}",
                            rho - 1,
                            r.task,
                            r.j
                        ));
                    }
                }
                Ok(())
            })
            .collect();
        for c in checks {
            c?;
        }
        Ok(())
    })();
    report(3, "window and robustness guarantees", result);
}

/// Tiny instance for the exhaustive oracle: ≤ 6 jobs, hyperperiod ≤ 64.
fn tiny_taskset(rng: &mut impl Rng) -> Option<TaskSet> {
    const MENU: [Tick; 3] = [16, 32, 64];
    let n = rng.gen_range(1..=3);
    let mut tasks = Vec::new();
    for id in 0..n {
        let period = MENU[rng.gen_range(0..MENU.len())];
        let wcet = rng.gen_range(1..=4u64);
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
        tasks.push(TaskSpec {
            id,
            wcet,
            period,
            deadline: None,
            ideal_offset,
            model: TimingAccuracyModel {
                shape,
                v_max,
                v_min: rng.gen_range(0.0..=v_max),
            },
        });
    }
    let ts = TaskSet { tick_ms: 1, tasks };
    let jobs = ts.expand_hyperperiod().ok()?;
    (jobs.len() <= 6).then_some(ts)
}

#[test]
fn c4_oracle_soundness() {
    let result = (|| -> Result<(), String> {
        let instances: Vec<TaskSet> = (0..2000u64)
            .filter_map(|i| tiny_taskset(&mut ChaCha8Rng::seed_from_u64(0xC4 ^ i)))
            .take(500)
            .collect();
        if instances.len() < 500 {
            return Err(format!("only {} tiny instances", instances.len()));
        }
        let checks: Vec<Result<(), String>> = instances
            .par_iter()
            .enumerate()
            .map(|(i, ts)| {
                let jobs = ts.expand_hyperperiod().unwrap();
                let h = ts.hyperperiod().unwrap();
                let oracle = oracle_schedule(ts, &jobs, h)
                    .map_err(|e| format!("instance {i}: {e}"))?;
                for algo in [Algorithm::Proposed, Algorithm::Fifo, Algorithm::Binpack] {
                    let sol = bench::schedule(algo, ts, &jobs, h);
                    if !sol.feasible {
                        continue;
                    }
                    if !oracle.feasible {
                        return Err(format!(
                            "instance {i}: {algo} feasible but oracle infeasible"
                        ));
                    }
                    let q = sol.planned_quality(ts, &jobs);
                    if q > oracle.max_quality + 1e-6 {
                        return Err(format!(
                            "instance {i}: {algo} quality {q} exceeds oracle {}",
                            oracle.max_quality
                        ));
                    }
                }
                Ok(())
            })
            .collect();
        for c in checks {
            c?;
        }
        Ok(())
    })();
    report(4, "exhaustive oracle soundness", result);
}

const U_GRID: [f64; 7] = [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
const PAPER_PROPOSED_DEFECT_SCHED: [f64; 7] = [0.77, 0.53, 0.33, 0.17, 0.06, 0.02, 0.00];
const ALGOS: [Algorithm; 3] = [Algorithm::Proposed, Algorithm::Fifo, Algorithm::Binpack];

fn sched_curve(algorithm: Algorithm, pr: f64, pe: f64, systems: u32, seed: u64) -> Vec<f64> {
    U_GRID
        .iter()
        .map(|&u| {
            let n = ((u / 0.05).round() as u32).max(1);
            let point = SweepPoint {
                algorithm,
                n,
                u,
                pr,
                pe,
                systems,
            };
            bench::run_point(&point, seed).schedulable_ratio
        })
        .collect()
}

#[test]
fn c5_schedulability_trends() {
    let result = {
        let systems = 1000;
        let clean: Vec<(Algorithm, Vec<f64>)> = ALGOS
            .iter()
            .map(|&a| (a, sched_curve(a, 0.0, 0.0, systems, 0xC5)))
            .collect();
        let defect: Vec<(Algorithm, Vec<f64>)> = ALGOS
            .iter()
            .map(|&a| (a, sched_curve(a, 0.3, 0.5, systems, 0xC5)))
            .collect();
        // the reference table reports two decimals; compare at half that
        // resolution so one-in-a-thousand sampling blips don't register
        const TOL: f64 = 0.005;
        let mut failures: Vec<String> = Vec::new();
        for (algo, curve) in clean.iter().chain(defect.iter()) {
            for w in curve.windows(2) {
                if w[1] > w[0] + TOL {
                    failures.push(format!("{algo} schedulability not monotone in U: {curve:?}"));
                    break;
                }
            }
        }
        let get = |set: &[(Algorithm, Vec<f64>)], a: Algorithm| -> Vec<f64> {
            set.iter().find(|(x, _)| *x == a).unwrap().1.clone()
        };
        let (bp, ff) = (get(&clean, Algorithm::Binpack), get(&clean, Algorithm::Fifo));
        for (i, &u) in U_GRID.iter().enumerate() {
            if bp[i] < ff[i] - TOL {
                failures.push(format!(
                    "defect-free: binpack {} < fifo {} at U={u}",
                    bp[i], ff[i]
                ));
            }
        }
        let (p, bp, ff) = (
            get(&defect, Algorithm::Proposed),
            get(&defect, Algorithm::Binpack),
            get(&defect, Algorithm::Fifo),
        );
        for (i, &u) in U_GRID.iter().enumerate() {
            if p[i] < bp[i] - TOL {
                failures.push(format!(
                    "with defects: proposed {} < binpack {} at U={u}",
                    p[i], bp[i]
                ));
            }
            if bp[i] < ff[i] - TOL {
                failures.push(format!(
                    "with defects: binpack {} < fifo {} at U={u}",
                    bp[i], ff[i]
                ));
            }
        }
        // soft numeric target: proposed within ±0.15 of the reference row
        let worst = p
            .iter()
            .zip(PAPER_PROPOSED_DEFECT_SCHED.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        println!(
            "criterion 5 soft target: max |Δ| = {worst:.3} vs reference row ({})",
            if worst <= 0.15 { "within ±0.15" } else { "outside ±0.15, trend-only" }
        );
        if failures.is_empty() {
            Ok(())
        } else {
            Err(failures.join("; "))
        }
    };
    report(5, "schedulability trends under varied U", result);
}

#[test]
fn c6_acceptance_trends() {
    let result = (|| -> Result<(), String> {
        const PE_GRID: [f64; 7] = [0.0, 0.4, 0.8, 1.2, 1.6, 2.0, 3.0];
        let systems = 1000;
        let curves: Vec<(Algorithm, Vec<f64>)> = ALGOS
            .iter()
            .map(|&a| {
                let c: Vec<f64> = PE_GRID
                    .iter()
                    .map(|&pe| {
                        let point = SweepPoint {
                            algorithm: a,
                            n: 12,
                            u: 0.6,
                            pr: 0.3,
                            pe,
                            systems,
                        };
                        bench::run_point(&point, 0xC6).acceptance
                    })
                    .collect();
                (a, c)
            })
            .collect();
        for (algo, curve) in &curves {
            for w in curve.windows(2) {
                if w[1] > w[0] + 1e-12 {
                    return Err(format!("{algo} acceptance not monotone in P_e: {curve:?}"));
                }
            }
        }
        let last = |a: Algorithm| curves.iter().find(|(x, _)| *x == a).unwrap().1[6];
        let proposed = last(Algorithm::Proposed);
        for a in [Algorithm::Fifo, Algorithm::Binpack] {
            if proposed < last(a) + 0.25 {
                return Err(format!(
                    "at P_e=3.0 proposed {proposed:.3} does not exceed {a} {:.3} by 0.25",
                    last(a)
                ));
            }
        }
        println!(
            "criterion 6 soft target: proposed acceptance at P_e=3.0 is {proposed:.3} ({})",
            if proposed >= 0.75 { "≥ 0.75" } else { "< 0.75, trend-only" }
        );
        Ok(())
    })();
    report(6, "acceptance trends under varied P_e", result);
}

#[test]
fn c7_codec_exhaustive() {
    let result = (|| -> Result<(), String> {
        let roundtrip = |instr: isa::Instruction| -> Result<(), String> {
            let word = isa::encode(&instr).map_err(|e| format!("{instr:?}: {e}"))?;
            let back = isa::decode(word).map_err(|e| format!("{instr:?}: {e}"))?;
            if back != instr {
                return Err(format!("{instr:?} decoded as {back:?}"));
            }
            Ok(())
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0xC7);
        let value_samples: Vec<u32> = [0, 1, isa::MAX_VALUE - 1, isa::MAX_VALUE]
            .into_iter()
            .chain((0..10_000).map(|_| rng.gen_range(0..=isa::MAX_VALUE)))
            .collect();
        for ets in 0..=isa::MAX_ETS {
            for &v in &value_samples {
                roundtrip(isa::Instruction::CSet { ets, budget: v })?;
                roundtrip(isa::Instruction::CEnr { ets, start: v })?;
            }
        }
        let prio_samples = [0, 1, isa::MAX_PRIO - 1, isa::MAX_PRIO];
        for ets in 0..=isa::MAX_ETS {
            for tid in 0..=isa::MAX_TID {
                for plen in 1..=isa::MAX_PLEN {
                    for &prio in &prio_samples {
                        roundtrip(isa::Instruction::PLd { ets, tid, plen, prio })?;
                        roundtrip(isa::Instruction::ILd { ets, tid, plen, prio })?;
                    }
                }
            }
        }
        for tid in 0..=isa::MAX_TID {
            roundtrip(isa::Instruction::IRun { tid })?;
        }
        // SRAM mapping: bijective onto [0, 4096)
        let mut seen = vec![false; 4096];
        for tid in 0..=isa::MAX_TID {
            for op in 0..32u8 {
                let addr = isa::sram_address(tid, op).map_err(|e| e.to_string())? as usize;
                if addr >= 4096 || seen[addr] {
                    return Err(format!("sram_address({tid}, {op}) = {addr} not bijective"));
                }
                seen[addr] = true;
            }
        }
        if !seen.iter().all(|&b| b) {
            return Err("sram_address does not cover [0, 4096)".into());
        }
        Ok(())
    })();
    report(7, "codec round-trip and SRAM bijectivity", result);
}

#[test]
fn c8_bench_determinism() {
    let result = (|| -> Result<(), String> {
        let points: Vec<SweepPoint> = ALGOS
            .iter()
            .flat_map(|&algorithm| {
                [0.3, 0.6].into_iter().map(move |u| SweepPoint {
                    algorithm,
                    n: ((u / 0.05) as u32).max(1),
                    u,
                    pr: 0.3,
                    pe: 0.5,
                    systems: 200,
                })
            })
            .collect();
        let a = bench::run_sweep(&points, 0xC8);
        let b = bench::run_sweep(&points, 0xC8);
        if a.as_bytes() != b.as_bytes() {
            return Err("repeated sweeps differ".into());
        }
        Ok(())
    })();
    report(8, "byte-identical sweep determinism", result);
}

#[test]
fn outcome_equality_sanity() {
    // keeps the helper honest: identical seeds give identical outcomes
    let seed = system_seed(1, 8, 0.4, 0.3, 0.5, 0);
    assert_eq!(
        evaluate_system(Algorithm::Proposed, 8, 0.4, 0.3, 0.5, seed),
        evaluate_system(Algorithm::Proposed, 8, 0.4, 0.3, 0.5, seed)
    );
    // and SystemOutcome distinguishes generation failure from infeasibility
    match evaluate_system(Algorithm::Proposed, 16, 0.8, 0.0, 0.0, seed) {
        SystemOutcome::GenerationFailed | SystemOutcome::Infeasible | SystemOutcome::Feasible(_) => {}
    }
}
