//! Periodic I/O task model: task sets, hyperperiod job expansion, and the
//! timing-accuracy quality curves that map a job's start time to delivered
//! control quality.
//!
//! Time is measured in integer ticks (1 tick = 1 ms by convention); quality
//! values are dimensionless floats.

use num_integer::Integer;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Integer model time. All releases, deadlines, offsets and budgets are ticks.
pub type Tick = u64;

/// Maximum task id representable in the 7-bit TID field.
pub const MAX_TASK_ID: u8 = 127;

/// Shape of a timing-accuracy curve. Every shape peaks at the ideal offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum ModelShape {
    /// Linear decay on both sides of the ideal offset with half-width `w`.
    SymmetricLinear { w: Tick },
    /// Maximum quality only at the exact ideal instant, minimum elsewhere.
    Spike,
    /// Early starts saturate at the minimum; late starts decay over `w_r`.
    RightSidedLinear { w_r: Tick },
    /// Linear decay with independent widths left (`w_l`) and right (`w_r`).
    AsymmetricLinear { w_l: Tick, w_r: Tick },
}

/// Quality curve of one task: shape plus the peak and floor values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingAccuracyModel {
    #[serde(flatten)]
    pub shape: ModelShape,
    pub v_max: f64,
    pub v_min: f64,
}

impl TimingAccuracyModel {
    /// Raw curve value at start time `t` (relative to release) for a task
    /// whose ideal start is `ideal`. Does not apply the deadline-miss rule.
    pub fn curve(&self, t: Tick, ideal: Tick) -> f64 {
        let span = self.v_max - self.v_min;
        let late = t.saturating_sub(ideal) as f64;
        let early = ideal.saturating_sub(t) as f64;
        match self.shape {
            ModelShape::SymmetricLinear { w } => {
                let dist = late.max(early);
                self.v_min.max(self.v_max - span * dist / w as f64)
            }
            ModelShape::Spike => {
                if t == ideal {
                    self.v_max
                } else {
                    self.v_min
                }
            }
            ModelShape::RightSidedLinear { w_r } => {
                if t < ideal {
                    self.v_min
                } else {
                    self.v_min.max(self.v_max - span * late / w_r as f64)
                }
            }
            ModelShape::AsymmetricLinear { w_l, w_r } => {
                if t <= ideal {
                    self.v_min.max(self.v_max - span * early / w_l as f64)
                } else {
                    self.v_min.max(self.v_max - span * late / w_r as f64)
                }
            }
        }
    }

    /// Quality of a start at `t` (relative to release): zero when the
    /// execution cannot finish by the relative deadline, the curve value
    /// otherwise.
    pub fn quality(&self, t: Tick, ideal: Tick, wcet: Tick, rel_deadline: Tick) -> f64 {
        if t + wcet > rel_deadline {
            return 0.0;
        }
        self.curve(t, ideal)
    }
}

/// A periodic I/O task with implicit deadline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: u8,
    pub wcet: Tick,
    pub period: Tick,
    #[serde(default)]
    pub deadline: Option<Tick>,
    pub ideal_offset: Tick,
    pub model: TimingAccuracyModel,
}

impl TaskSpec {
    pub fn deadline(&self) -> Tick {
        self.deadline.unwrap_or(self.period)
    }
}

/// The system task set. The hyperperiod is derived, not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSet {
    #[serde(default = "default_tick_ms")]
    pub tick_ms: u64,
    pub tasks: Vec<TaskSpec>,
}

fn default_tick_ms() -> u64 {
    1
}

/// One job of a task inside a hyperperiod. `start` is unset until a
/// scheduler assigns it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobInstance {
    pub task: u8,
    /// 1-based job index within the hyperperiod.
    pub index: u32,
    pub release: Tick,
    pub deadline: Tick,
    pub ideal_start: Tick,
    #[serde(default)]
    pub start: Option<Tick>,
    /// Copied from the owning task for convenience.
    pub wcet: Tick,
    pub v_max: f64,
}

/// A single invariant violation found by [`TaskSet::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub task: Option<u8>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.task {
            Some(id) => write!(f, "task {}: {}: {}", id, self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DomainError {
    #[error("task set is invalid: {0:?}")]
    Invalid(Vec<Violation>),
    #[error("hyperperiod overflows the tick counter")]
    HyperperiodOverflow,
    #[error("task set is empty")]
    Empty,
}

impl TaskSet {
    /// Collects every invariant violation. An empty list means the set is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen = [false; 256];
        for t in &self.tasks {
            let d = t.deadline();
            let v = |field: &str, message: String| Violation {
                task: Some(t.id),
                field: field.to_string(),
                message,
            };
            if t.id > MAX_TASK_ID {
                out.push(v("id", format!("{} does not fit in 7 bits", t.id)));
            }
            if seen[t.id as usize] {
                out.push(v("id", "duplicate id".to_string()));
            }
            seen[t.id as usize] = true;
            if t.wcet == 0 {
                out.push(v("wcet", "C must be positive".to_string()));
            }
            if t.wcet > d {
                out.push(v("wcet", format!("C = {} exceeds D = {}", t.wcet, d)));
            }
            if d != t.period {
                out.push(v("deadline", format!("D = {} but T = {} (implicit deadlines)", d, t.period)));
            }
            if t.period == 0 {
                out.push(v("period", "T must be positive".to_string()));
            }
            if t.wcet <= d && t.ideal_offset > d - t.wcet {
                out.push(v(
                    "ideal_offset",
                    format!("δ = {} > D − C = {}", t.ideal_offset, d - t.wcet),
                ));
            }
            let m = &t.model;
            if m.v_min < 0.0 || m.v_min > m.v_max {
                out.push(v("model", format!("v_min = {} outside [0, v_max = {}]", m.v_min, m.v_max)));
            }
            let widths: &[Tick] = match m.shape {
                ModelShape::SymmetricLinear { w } => &[w],
                ModelShape::Spike => &[],
                ModelShape::RightSidedLinear { w_r } => &[w_r],
                ModelShape::AsymmetricLinear { w_l, w_r } => &[w_l, w_r],
            };
            if widths.contains(&0) {
                out.push(v("model", "widths must be ≥ 1".to_string()));
            }
        }
        out
    }

    /// Least common multiple of all periods.
    pub fn hyperperiod(&self) -> Result<Tick, DomainError> {
        if self.tasks.is_empty() {
            return Err(DomainError::Empty);
        }
        let mut h: Tick = 1;
        for t in &self.tasks {
            let g = h.gcd(&t.period);
            h = (h / g)
                .checked_mul(t.period)
                .ok_or(DomainError::HyperperiodOverflow)?;
        }
        Ok(h)
    }

    pub fn task(&self, id: u8) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.id == id)
    }

    /// Expands every task into its hyperperiod jobs, sorted by ideal start
    /// then task id.
    pub fn expand_hyperperiod(&self) -> Result<Vec<JobInstance>, DomainError> {
        let violations = self.validate();
        if !violations.is_empty() {
            return Err(DomainError::Invalid(violations));
        }
        let h = self.hyperperiod()?;
        let mut jobs = Vec::new();
        for t in &self.tasks {
            let n = h / t.period;
            for j in 1..=n {
                let release = t.period * (j - 1);
                jobs.push(JobInstance {
                    task: t.id,
                    index: j as u32,
                    release,
                    deadline: release + t.deadline(),
                    ideal_start: release + t.ideal_offset,
                    start: None,
                    wcet: t.wcet,
                    v_max: t.model.v_max,
                });
            }
        }
        jobs.sort_by_key(|j| (j.ideal_start, j.task, j.index));
        Ok(jobs)
    }
}
