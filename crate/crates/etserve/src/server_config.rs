//! Server parameter configuration: initial capacities, per-server delay
//! tolerance (Υ), inter-server slack (Ψ), safe capacity extensions (ω), the
//! system robustness bound, and the final execution windows the hardware
//! scheduler enforces.

use crate::domain::{JobInstance, Tick};
use crate::sched::{AllocatedJob, ScheduleSolution, ServerKind};
use serde::{Deserialize, Serialize};

/// One configured server: nominal window plus the derived robustness
/// quantities. Priorities follow ascending start time (0 = highest); every
/// server shares the hyperperiod as its replenishment period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtsServer {
    pub kind: ServerKind,
    pub alpha: Tick,
    pub lambda_init: Tick,
    pub upsilon: Tick,
    pub psi: Tick,
    pub omega: Tick,
    pub lambda_final: Tick,
    pub window_end: Tick,
    pub priority: u32,
    pub period: Tick,
    pub jobs: Vec<AllocatedJob>,
}

/// The complete server program for one hyperperiod.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtsProgram {
    pub hyperperiod: Tick,
    /// System-level interference tolerance: the minimum ω over all servers.
    pub robustness: Tick,
    pub servers: Vec<EtsServer>,
}

/// Per-job data a server needs for configuration.
#[derive(Debug, Clone, Copy)]
pub struct JobTiming {
    pub theta: Tick,
    pub wcet: Tick,
    pub deadline: Tick,
}

/// Initial capacity: latest job finish minus the server start.
pub fn initial_capacity(alpha: Tick, jobs: &[JobTiming]) -> Tick {
    jobs.iter()
        .map(|j| j.theta + j.wcet)
        .max()
        .expect("server holds at least one job")
        - alpha
}

/// Highest delay the server can absorb without an in-server deadline miss:
/// the minimum job slack.
pub fn max_delay(jobs: &[JobTiming]) -> Tick {
    jobs.iter()
        .map(|j| j.deadline - j.theta - j.wcet)
        .min()
        .expect("server holds at least one job")
}

/// Largest safe slack after each server, computed backwards. The last server
/// is bounded by the hyperperiod; every other server by its successor's
/// latest safe start.
pub fn slacks(servers: &[(Tick, Tick, Tick)], hyperperiod: Tick) -> Vec<Tick> {
    // servers: (alpha, lambda_init, upsilon), sorted by alpha
    let n = servers.len();
    let mut psi = vec![0; n];
    for k in (0..n).rev() {
        let (alpha, lambda, _) = servers[k];
        psi[k] = if k == n - 1 {
            hyperperiod - alpha - lambda
        } else {
            let (alpha_next, _, upsilon_next) = servers[k + 1];
            alpha_next + upsilon_next.min(psi[k + 1]) - alpha - lambda
        };
    }
    psi
}

/// Safe capacity extension per server. Non-last servers are bounded by the
/// successor's delay tolerance and slack; the last wraps to the next
/// hyperperiod's first server.
pub fn extra_capacities(
    servers: &[(Tick, Tick, Tick)],
    psi: &[Tick],
    hyperperiod: Tick,
) -> Vec<Tick> {
    let n = servers.len();
    let mut omega = vec![0; n];
    for k in 0..n {
        omega[k] = if k == n - 1 {
            let (alpha, lambda, _) = servers[k];
            let (alpha_first, _, upsilon_first) = servers[0];
            upsilon_first.min(hyperperiod + alpha_first - alpha - lambda)
        } else {
            let (_, _, upsilon_next) = servers[k + 1];
            upsilon_next.min(psi[k + 1])
        };
    }
    omega
}

/// The system tolerates at least this much interference in any one server.
pub fn robustness_bound(omegas: &[Tick]) -> Tick {
    omegas.iter().copied().min().expect("at least one server")
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("solution is infeasible; nothing to configure")]
    Infeasible,
    #[error("solution has no allocated jobs")]
    Empty,
}

/// Turns a feasible schedule into the final server program. Jobless quality
/// servers are dropped; the remaining servers get priorities by ascending
/// start time and execution windows extended by their safe ω.
pub fn finalize(
    sol: &ScheduleSolution,
    jobs: &[JobInstance],
    hyperperiod: Tick,
) -> Result<EtsProgram, ConfigError> {
    if !sol.feasible {
        return Err(ConfigError::Infeasible);
    }
    let lookup = |a: &AllocatedJob| -> JobTiming {
        let j = jobs
            .iter()
            .find(|j| j.task == a.task && j.index == a.index)
            .expect("allocated job exists in the job list");
        JobTiming {
            theta: a.theta,
            wcet: j.wcet,
            deadline: j.deadline,
        }
    };

    let mut occupied: Vec<(&crate::sched::ServerDraft, Vec<JobTiming>)> = sol
        .servers
        .iter()
        .filter(|s| !s.jobs.is_empty())
        .map(|s| (s, s.jobs.iter().map(lookup).collect()))
        .collect();
    if occupied.is_empty() {
        return Err(ConfigError::Empty);
    }
    occupied.sort_by_key(|(s, _)| s.alpha);

    let params: Vec<(Tick, Tick, Tick)> = occupied
        .iter()
        .map(|(s, t)| (s.alpha, initial_capacity(s.alpha, t), max_delay(t)))
        .collect();
    let psi = slacks(&params, hyperperiod);
    let omega = extra_capacities(&params, &psi, hyperperiod);
    let robustness = robustness_bound(&omega);

    let n = occupied.len();
    let servers = occupied
        .iter()
        .enumerate()
        .map(|(k, (s, _))| {
            let (alpha, lambda_init, upsilon) = params[k];
            let window_end = if k == n - 1 {
                alpha + lambda_init + omega[k]
            } else {
                params[k + 1].0 + omega[k]
            };
            EtsServer {
                kind: s.kind,
                alpha,
                lambda_init,
                upsilon,
                psi: psi[k],
                omega: omega[k],
                lambda_final: window_end - alpha,
                window_end,
                priority: k as u32,
                period: hyperperiod,
                jobs: s.jobs.clone(),
            }
        })
        .collect();

    Ok(EtsProgram {
        hyperperiod,
        robustness,
        servers,
    })
}
