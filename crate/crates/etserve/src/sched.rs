//! Hyperperiod job allocation onto execution-time servers.
//!
//! The pipeline: build a conflict graph over jobs placed at their ideal
//! offsets, greedily demote the jobs whose exact-accurate execution would
//! cost the most neighbour quality, give every surviving job a dedicated
//! exact server, generate quality servers from the remaining free time, fill
//! them earliest-deadline-first, and finally nudge start offsets towards
//! each job's quality peak.

use crate::domain::{JobInstance, TaskSet, Tick};
use serde::{Deserialize, Serialize};

/// Undirected conflict graph over job indices. An edge means the two jobs'
/// ideal-offset execution intervals overlap, so they cannot both be
/// exact-accurate.
#[derive(Debug, Clone)]
pub struct ConflictGraph {
    adj: Vec<Vec<usize>>,
}

impl ConflictGraph {
    pub fn vertex_count(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|n| n.len()).sum::<usize>() / 2
    }
}

/// Builds the conflict graph for jobs executed at their ideal offsets.
/// Intervals are half-open, so touching intervals do not conflict.
pub fn build_conflict_graph(jobs: &[JobInstance]) -> ConflictGraph {
    let mut adj = vec![Vec::new(); jobs.len()];
    for a in 0..jobs.len() {
        for b in a + 1..jobs.len() {
            let (sa, ea) = (jobs[a].ideal_start, jobs[a].ideal_start + jobs[a].wcet);
            let (sb, eb) = (jobs[b].ideal_start, jobs[b].ideal_start + jobs[b].wcet);
            if sa < eb && sb < ea {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
    }
    ConflictGraph { adj }
}

/// Total quality of the jobs a vertex can affect by starting at its ideal
/// offset: the sum of peak qualities over its neighbours.
pub fn zeta(graph: &ConflictGraph, jobs: &[JobInstance], v: usize) -> f64 {
    graph.neighbors(v).iter().map(|&n| jobs[n].v_max).sum()
}

/// Iteratively removes the highest-ζ vertex until no edges remain.
/// Returns `(exact, demoted)` job indices. ζ is recomputed on the surviving
/// subgraph after every removal; ties break on earliest ideal start, then
/// lowest task id, then lowest job index.
pub fn decompose(graph: &ConflictGraph, jobs: &[JobInstance]) -> (Vec<usize>, Vec<usize>) {
    let n = graph.vertex_count();
    let mut alive = vec![true; n];
    let mut degree: Vec<usize> = (0..n).map(|v| graph.neighbors(v).len()).collect();
    let mut zeta_live: Vec<f64> = (0..n).map(|v| zeta(graph, jobs, v)).collect();
    let mut edges = graph.edge_count();
    let mut demoted = Vec::new();

    while edges > 0 {
        // Only vertices that still carry an edge are candidates; removing an
        // isolated vertex cannot shrink E.
        let victim = (0..n)
            .filter(|&v| alive[v] && degree[v] > 0)
            .max_by(|&a, &b| {
                zeta_live[a]
                    .partial_cmp(&zeta_live[b])
                    .unwrap()
                    .then_with(|| {
                        let ka = (jobs[a].ideal_start, jobs[a].task, jobs[a].index);
                        let kb = (jobs[b].ideal_start, jobs[b].task, jobs[b].index);
                        kb.cmp(&ka)
                    })
            })
            .expect("edges > 0 implies a positive-degree vertex");
        alive[victim] = false;
        demoted.push(victim);
        for &nb in graph.neighbors(victim) {
            if alive[nb] {
                degree[nb] -= 1;
                zeta_live[nb] -= jobs[victim].v_max;
                edges -= 1;
            }
        }
        degree[victim] = 0;
    }

    let exact = (0..n).filter(|&v| alive[v]).collect();
    (exact, demoted)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServerKind {
    Exact,
    Quality,
}

/// A job placed in a server with its assigned start offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocatedJob {
    pub task: u8,
    #[serde(rename = "j")]
    pub index: u32,
    pub theta: Tick,
}

/// A server under construction: its nominal window `[alpha, alpha+lambda)`
/// and the jobs allocated so far, ordered by start offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerDraft {
    pub kind: ServerKind,
    pub alpha: Tick,
    /// Window length: the job's WCET for exact servers, the free-gap length
    /// for quality servers.
    pub lambda: Tick,
    pub jobs: Vec<AllocatedJob>,
}

/// The output of the allocation: all servers sorted by start time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSolution {
    pub feasible: bool,
    pub servers: Vec<ServerDraft>,
    /// First job that could not be placed, when infeasible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unplaceable: Option<AllocatedJobRef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocatedJobRef {
    pub task: u8,
    #[serde(rename = "j")]
    pub index: u32,
}

impl ScheduleSolution {
    pub fn infeasible(job: &JobInstance) -> Self {
        ScheduleSolution {
            feasible: false,
            servers: Vec::new(),
            unplaceable: Some(AllocatedJobRef {
                task: job.task,
                index: job.index,
            }),
        }
    }

    /// Looks up the assigned start of a job.
    pub fn theta(&self, task: u8, index: u32) -> Option<Tick> {
        self.servers.iter().flat_map(|s| &s.jobs).find_map(|a| {
            (a.task == task && a.index == index).then_some(a.theta)
        })
    }

    pub fn job_count(&self) -> usize {
        self.servers.iter().map(|s| s.jobs.len()).sum()
    }

    /// Planned total quality of the schedule under the given task set.
    pub fn planned_quality(&self, ts: &TaskSet, jobs: &[JobInstance]) -> f64 {
        self.servers
            .iter()
            .flat_map(|s| &s.jobs)
            .map(|a| {
                let job = jobs
                    .iter()
                    .find(|j| j.task == a.task && j.index == a.index)
                    .expect("allocated job exists");
                let task = ts.task(a.task).expect("task exists");
                task.model.quality(
                    a.theta - job.release,
                    task.ideal_offset,
                    task.wcet,
                    task.deadline(),
                )
            })
            .sum()
    }
}

/// Acceptance test for adding `job` to a quality server: the earliest start
/// after everything already allocated, accepted when the execution fits both
/// the server window and the job deadline. `all_jobs` resolves the WCET of
/// the last allocated job.
pub fn feasibility_test(
    server: &ServerDraft,
    job: &JobInstance,
    all_jobs: &[JobInstance],
) -> Option<Tick> {
    let last_end = server
        .jobs
        .last()
        .map(|a| {
            let wcet = all_jobs
                .iter()
                .find(|j| j.task == a.task && j.index == a.index)
                .map(|j| j.wcet)
                .unwrap_or(0);
            a.theta + wcet
        })
        .unwrap_or(0);
    feasibility_test_with_end(server.alpha, server.lambda, last_end, job)
}

/// Variant of [`feasibility_test`] taking the end of the last allocated job
/// explicitly; this is what the allocator uses internally.
pub fn feasibility_test_with_end(
    alpha: Tick,
    lambda: Tick,
    last_end: Tick,
    job: &JobInstance,
) -> Option<Tick> {
    let theta = job.release.max(alpha).max(last_end);
    if theta + job.wcet <= job.deadline.min(alpha + lambda) {
        Some(theta)
    } else {
        None
    }
}

/// Runs the full allocation over expanded hyperperiod jobs.
pub fn allocate_and_schedule(ts: &TaskSet, jobs: &[JobInstance], hyperperiod: Tick) -> ScheduleSolution {
    let graph = build_conflict_graph(jobs);
    let (mut exact, demoted) = decompose(&graph, jobs);
    exact.sort_by_key(|&v| (jobs[v].ideal_start, jobs[v].task, jobs[v].index));

    let mut servers: Vec<ServerDraft> = exact
        .iter()
        .map(|&v| ServerDraft {
            kind: ServerKind::Exact,
            alpha: jobs[v].ideal_start,
            lambda: jobs[v].wcet,
            jobs: vec![AllocatedJob {
                task: jobs[v].task,
                index: jobs[v].index,
                theta: jobs[v].ideal_start,
            }],
        })
        .collect();

    // Quality servers cover the free spaces between (and around) the exact
    // windows, including [0, alpha_first).
    let mut gaps = Vec::new();
    let mut cursor: Tick = 0;
    for s in &servers {
        if s.alpha > cursor {
            gaps.push((cursor, s.alpha - cursor));
        }
        cursor = s.alpha + s.lambda;
    }
    if cursor < hyperperiod {
        gaps.push((cursor, hyperperiod - cursor));
    }

    let mut pending: Vec<usize> = demoted;
    pending.sort_by_key(|&v| (jobs[v].deadline, jobs[v].release, jobs[v].task, jobs[v].index));

    for (alpha, lambda) in gaps {
        let mut allocated = Vec::new();
        let mut last_end: Tick = 0;
        pending.retain(|&v| {
            let job = &jobs[v];
            if !(job.release < alpha + lambda && job.deadline > alpha) {
                return true;
            }
            match feasibility_test_with_end(alpha, lambda, last_end, job) {
                Some(theta) => {
                    last_end = theta + job.wcet;
                    allocated.push(AllocatedJob {
                        task: job.task,
                        index: job.index,
                        theta,
                    });
                    false
                }
                None => true,
            }
        });
        servers.push(ServerDraft {
            kind: ServerKind::Quality,
            alpha,
            lambda,
            jobs: allocated,
        });
    }

    if let Some(&v) = pending.first() {
        return ScheduleSolution::infeasible(&jobs[v]);
    }

    servers.sort_by_key(|s| s.alpha);
    let mut sol = ScheduleSolution {
        feasible: true,
        servers,
        unplaceable: None,
    };
    optimize_offsets(&mut sol, ts, jobs);
    sol
}

/// Postpones quality-server jobs towards their quality peaks. Jobs are
/// visited latest start first so each job may slide up to its successor;
/// the smallest offset achieving the maximum quality wins, so a flat
/// objective leaves the schedule untouched.
pub fn optimize_offsets(sol: &mut ScheduleSolution, ts: &TaskSet, jobs: &[JobInstance]) {
    for server in sol
        .servers
        .iter_mut()
        .filter(|s| s.kind == ServerKind::Quality)
    {
        for i in (0..server.jobs.len()).rev() {
            let next_start = server
                .jobs
                .get(i + 1)
                .map(|a| a.theta)
                .unwrap_or(server.alpha + server.lambda);
            let a = server.jobs[i];
            let job = jobs
                .iter()
                .find(|j| j.task == a.task && j.index == a.index)
                .expect("allocated job exists");
            let task = ts.task(a.task).expect("task exists");
            let hi = next_start
                .min(server.alpha + server.lambda)
                .min(job.deadline)
                .saturating_sub(job.wcet);
            if hi <= a.theta {
                continue;
            }
            let mut best_theta = a.theta;
            let mut best_q = task.model.quality(
                a.theta - job.release,
                task.ideal_offset,
                task.wcet,
                task.deadline(),
            );
            for cand in a.theta + 1..=hi {
                let q = task.model.quality(
                    cand - job.release,
                    task.ideal_offset,
                    task.wcet,
                    task.deadline(),
                );
                if q > best_q {
                    best_q = q;
                    best_theta = cand;
                }
            }
            server.jobs[i].theta = best_theta;
        }
    }
}
