//! Deterministic tick-level behavioral model of the two-level hardware
//! scheduler: server containers with wall-clock budget windows, per-server
//! job selection, non-preemptive execution, termination on budget
//! exhaustion, and timing-defect injection via inflated execution times.

use crate::domain::{JobInstance, TaskSet, Tick};
use crate::isa::{Instruction, Sidecar};
use crate::server_config::EtsProgram;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Per-job actual execution durations. Jobs absent from the plan run for
/// exactly their WCET.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DefectPlan {
    durations: BTreeMap<(u8, u32), Tick>,
}

impl DefectPlan {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn set(&mut self, task: u8, index: u32, duration: Tick) {
        assert!(duration >= 1, "actual duration must be at least one tick");
        self.durations.insert((task, index), duration);
    }

    pub fn duration(&self, task: u8, index: u32, wcet: Tick) -> Tick {
        self.durations.get(&(task, index)).copied().unwrap_or(wcet)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(u8, u32), &Tick)> {
        self.durations.iter()
    }
}

/// A job as the simulator sees it.
#[derive(Debug, Clone)]
pub struct SimJob {
    pub task: u8,
    pub index: u32,
    pub release: Tick,
    pub deadline: Tick,
    pub theta: Tick,
    pub actual: Tick,
    pub prio: u32,
}

/// A configured server container: wall-clock budget window plus its queue.
#[derive(Debug, Clone)]
pub struct SimServer {
    pub alpha: Tick,
    pub window_end: Tick,
    pub priority: u32,
    /// Jobs sorted by within-server priority.
    pub jobs: Vec<SimJob>,
}

/// Fully resolved simulation input for one hyperperiod.
#[derive(Debug, Clone)]
pub struct SimInput {
    pub hyperperiod: Tick,
    pub servers: Vec<SimServer>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LoadError {
    #[error("instruction {index}: {source}")]
    Decode {
        index: usize,
        #[source]
        source: crate::isa::StreamError,
    },
    #[error("instruction {0}: privileged c-type instruction in user mode")]
    Privilege(usize),
    #[error("instruction {index}: server S{ets} is not configured")]
    UnknownServer { index: usize, ets: u8 },
    #[error("instruction {index}: no sidecar entry for task {tid} on S{ets}")]
    MissingSidecar { index: usize, tid: u8, ets: u8 },
    #[error("sidecar references task {tid} job {j} absent from the job list")]
    UnknownJob { tid: u8, j: u32 },
    #[error("i-type run/load instructions are not accepted by the batch loader")]
    UnsupportedInstruction(usize),
}

impl SimInput {
    /// Builds the input directly from a finalized server program.
    pub fn from_program(prog: &EtsProgram, jobs: &[JobInstance], plan: &DefectPlan) -> Self {
        let servers = prog
            .servers
            .iter()
            .map(|s| {
                let mut sim_jobs: Vec<SimJob> = s
                    .jobs
                    .iter()
                    .map(|a| {
                        let j = jobs
                            .iter()
                            .find(|j| j.task == a.task && j.index == a.index)
                            .expect("program job exists");
                        SimJob {
                            task: a.task,
                            index: a.index,
                            release: j.release,
                            deadline: j.deadline,
                            theta: a.theta,
                            actual: plan.duration(a.task, a.index, j.wcet),
                            prio: 0,
                        }
                    })
                    .collect();
                sim_jobs.sort_by_key(|j| j.theta);
                for (rank, j) in sim_jobs.iter_mut().enumerate() {
                    j.prio = rank as u32;
                }
                SimServer {
                    alpha: s.alpha,
                    window_end: s.window_end,
                    priority: s.priority,
                    jobs: sim_jobs,
                }
            })
            .collect();
        SimInput {
            hyperperiod: prog.hyperperiod,
            servers,
        }
    }

    /// Reconstructs the input from an instruction stream plus its sidecar,
    /// the way the co-processor's initialisation phase would. `kernel`
    /// gates the privileged c-type instructions.
    pub fn load_program(
        instructions: &[Instruction],
        sidecar: &Sidecar,
        jobs: &[JobInstance],
        plan: &DefectPlan,
        hyperperiod: Tick,
        kernel: bool,
    ) -> Result<Self, LoadError> {
        struct Draft {
            budget: Option<Tick>,
            start: Option<Tick>,
            loads: Vec<(u8, u16)>, // (tid, prio)
        }
        let mut drafts: BTreeMap<u8, Draft> = BTreeMap::new();
        for (index, ins) in instructions.iter().enumerate() {
            if ins.is_privileged() && !kernel {
                return Err(LoadError::Privilege(index));
            }
            match *ins {
                Instruction::CSet { ets, budget } => {
                    drafts
                        .entry(ets)
                        .or_insert(Draft { budget: None, start: None, loads: vec![] })
                        .budget = Some(budget as Tick);
                }
                Instruction::CEnr { ets, start } => {
                    drafts
                        .entry(ets)
                        .or_insert(Draft { budget: None, start: None, loads: vec![] })
                        .start = Some(start as Tick);
                }
                Instruction::PLd { ets, tid, prio, .. } => {
                    let draft = drafts
                        .get_mut(&ets)
                        .filter(|d| d.budget.is_some() && d.start.is_some())
                        .ok_or(LoadError::UnknownServer { index, ets })?;
                    draft.loads.push((tid, prio));
                }
                Instruction::ILd { .. } | Instruction::IRun { .. } => {
                    return Err(LoadError::UnsupportedInstruction(index));
                }
            }
        }

        let mut consumed = vec![false; sidecar.jobs.len()];
        let mut servers = Vec::new();
        for (ets, draft) in drafts {
            let alpha = draft.start.expect("checked above");
            let budget = draft.budget.expect("checked above");
            let mut sim_jobs = Vec::new();
            for (load_idx, (tid, prio)) in draft.loads.iter().enumerate() {
                let pos = sidecar
                    .jobs
                    .iter()
                    .enumerate()
                    .position(|(i, s)| !consumed[i] && s.tid == *tid && s.server == ets)
                    .ok_or(LoadError::MissingSidecar {
                        index: load_idx,
                        tid: *tid,
                        ets,
                    })?;
                consumed[pos] = true;
                let entry = sidecar.jobs[pos];
                let j = jobs
                    .iter()
                    .find(|j| j.task == entry.tid && j.index == entry.j)
                    .ok_or(LoadError::UnknownJob { tid: entry.tid, j: entry.j })?;
                sim_jobs.push(SimJob {
                    task: entry.tid,
                    index: entry.j,
                    release: j.release,
                    deadline: j.deadline,
                    theta: entry.theta,
                    actual: plan.duration(entry.tid, entry.j, j.wcet),
                    prio: *prio as u32,
                });
            }
            sim_jobs.sort_by_key(|j| j.prio);
            servers.push(SimServer {
                alpha,
                window_end: alpha + budget,
                priority: 0,
                jobs: sim_jobs,
            });
        }
        servers.sort_by_key(|s| s.alpha);
        for (rank, s) in servers.iter_mut().enumerate() {
            s.priority = rank as u32;
        }
        Ok(SimInput {
            hyperperiod,
            servers,
        })
    }
}

/// Outcome of one job in a simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub task: u8,
    pub j: u32,
    /// Hyperperiod instance the record belongs to (0 unless the horizon
    /// spans several hyperperiods).
    pub hp: u32,
    pub dispatch: Option<Tick>,
    pub finish: Option<Tick>,
    pub terminated: Option<Tick>,
    pub met: bool,
    pub quality: f64,
}

/// Complete result of a run: per-job records plus per-server busy intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub records: Vec<JobRecord>,
    /// Busy intervals `[from, to)` per server, in server order.
    pub busy: Vec<Vec<(Tick, Tick)>>,
}

impl SimTrace {
    pub fn record(&self, task: u8, j: u32) -> Option<&JobRecord> {
        self.records.iter().find(|r| r.task == task && r.j == j)
    }
}

struct RunServer {
    alpha: Tick,
    window_end: Tick,
    order: (u32, u32), // (hp, priority)
    base: usize,       // index of this server in the trace's busy vector
    pending: Vec<usize>,
    running: Option<(usize, Tick)>, // (job id, remaining)
}

struct RunJob {
    job: SimJob,
    hp: u32,
    dispatch: Option<Tick>,
    finish: Option<Tick>,
    terminated: Option<Tick>,
}

/// Runs the tick loop over `[0, horizon)`. Horizons longer than one
/// hyperperiod repeat the program and the defect plan each period.
pub fn run(input: &SimInput, ts: &TaskSet, horizon: Tick) -> SimTrace {
    let copies = if input.hyperperiod == 0 {
        1
    } else {
        horizon.div_ceil(input.hyperperiod).max(1)
    };

    let mut jobs: Vec<RunJob> = Vec::new();
    let mut servers: Vec<RunServer> = Vec::new();
    for m in 0..copies {
        let shift = m * input.hyperperiod;
        for (si, s) in input.servers.iter().enumerate() {
            let mut pending = Vec::new();
            for j in &s.jobs {
                let mut job = j.clone();
                job.release += shift;
                job.deadline += shift;
                job.theta += shift;
                pending.push(jobs.len());
                jobs.push(RunJob {
                    job,
                    hp: m as u32,
                    dispatch: None,
                    finish: None,
                    terminated: None,
                });
            }
            // queue order = within-server priority
            pending.sort_by_key(|&id| jobs[id].job.prio);
            servers.push(RunServer {
                alpha: s.alpha + shift,
                window_end: s.window_end + shift,
                order: (m as u32, s.priority),
                base: si,
                pending,
                running: None,
            });
        }
    }

    let mut busy: Vec<Vec<(Tick, Tick)>> = vec![Vec::new(); input.servers.len()];

    for t in 0..horizon {
        // Budget exhaustion: a closing window terminates its running and
        // pending jobs; they cannot run again this hyperperiod.
        for s in servers.iter_mut() {
            if s.window_end == t {
                if let Some((id, _)) = s.running.take() {
                    jobs[id].terminated = Some(t);
                }
                for id in s.pending.drain(..) {
                    jobs[id].terminated = Some(t);
                }
            }
        }

        // Global selection: highest-priority open window with runnable work.
        // Drained servers are skipped even with budget remaining.
        let chosen = servers
            .iter()
            .enumerate()
            .filter(|(_, s)| {
                s.alpha <= t
                    && t < s.window_end
                    && (s.running.is_some()
                        || s.pending
                            .iter()
                            .any(|&id| jobs[id].job.release.max(jobs[id].job.theta) <= t))
            })
            .min_by_key(|(_, s)| s.order)
            .map(|(i, _)| i);

        if let Some(si) = chosen {
            let s = &mut servers[si];
            // Local selection: non-preemptive, else highest-priority
            // eligible pending job.
            if s.running.is_none() {
                let pick = s
                    .pending
                    .iter()
                    .position(|&id| jobs[id].job.release.max(jobs[id].job.theta) <= t)
                    .expect("filter guarantees an eligible job");
                let id = s.pending.remove(pick);
                jobs[id].dispatch = Some(t);
                s.running = Some((id, jobs[id].job.actual));
            }
            let (id, remaining) = s.running.as_mut().expect("set above");
            *remaining -= 1;
            let done = *remaining == 0;
            let id = *id;
            if done {
                jobs[id].finish = Some(t + 1);
                s.running = None;
            }
            match busy[s.base].last_mut() {
                Some(interval) if interval.1 == t => interval.1 = t + 1,
                _ => busy[s.base].push((t, t + 1)),
            }
        }
    }

    // Anything unfinished at the horizon is terminated.
    for s in servers.iter_mut() {
        if let Some((id, _)) = s.running.take() {
            jobs[id].terminated = Some(horizon);
        }
        for id in s.pending.drain(..) {
            jobs[id].terminated = Some(horizon);
        }
    }

    let mut records: Vec<JobRecord> = jobs
        .into_iter()
        .map(|rj| {
            let met = matches!(rj.finish, Some(f) if f <= rj.job.deadline);
            let quality = if met {
                let task = ts.task(rj.job.task).expect("task exists");
                let dispatch = rj.dispatch.expect("finished implies dispatched");
                task.model.curve(dispatch - rj.job.release, task.ideal_offset)
            } else {
                0.0
            };
            JobRecord {
                task: rj.job.task,
                j: rj.job.index,
                hp: rj.hp,
                dispatch: rj.dispatch,
                finish: rj.finish,
                terminated: rj.terminated,
                met,
                quality,
            }
        })
        .collect();
    records.sort_by_key(|r| (r.hp, r.task, r.j));
    SimTrace { records, busy }
}

/// Renders a human-readable timeline, one row per tick.
pub fn timeline(input: &SimInput, ts: &TaskSet, horizon: Tick) -> String {
    let trace = run(input, ts, horizon);
    let mut rows = String::new();
    for t in 0..horizon {
        let mut cell = String::from("idle");
        for (si, intervals) in trace.busy.iter().enumerate() {
            if intervals.iter().any(|&(a, b)| a <= t && t < b) {
                let running = trace
                    .records
                    .iter()
                    .find(|r| match (r.dispatch, r.finish.or(r.terminated)) {
                        (Some(d), Some(e)) => d <= t && t < e,
                        (Some(d), None) => d <= t,
                        _ => false,
                    });
                cell = match running {
                    Some(r) => format!("S{} τ{}^{}", si, r.task, r.j),
                    None => format!("S{}", si),
                };
            }
        }
        rows.push_str(&format!("{:>6}  {}\n", t, cell));
    }
    rows
}
