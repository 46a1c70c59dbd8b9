//! Stochastic simulation of the sensitive/resistant populations.
//!
//! Two engines share the same output type:
//!
//! * [`simulate_exact`]: event-driven exact simulation, one state change per
//!   recorded event;
//! * [`simulate_hybrid`]: tau-leaping for large populations with exact
//!   event-level simulation of small ones, recorded on the step grid.
//!
//! A mutation adds one resistant cell and leaves the sensitive count alone,
//! so `Z0` is an autonomous subcritical birth-death process. Sensitive
//! events draw only from [`Stream::Sensitive`](crate::rng::Stream), which
//! makes the `Z0` trajectory for a given seed the same for every mutation
//! rate.

mod exact;
mod extinction;
mod hybrid;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use exact::{simulate_exact, simulate_exact_with};
pub use extinction::{clone_size_at, sample_extinction_time, simulate_clone, CloneFate};
pub use hybrid::{simulate_hybrid, simulate_hybrid_with, HybridControl};

/// Population state at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathEvent {
    pub time: f64,
    pub z0: u64,
    pub z1: u64,
}

impl PathEvent {
    pub fn total(&self) -> u64 {
        self.z0 + self.z1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Both populations died out.
    TotalExtinction,
    /// The total population recovered after resistant cells took over.
    ReboundDetected,
    /// The sensitive population died out (only with
    /// [`StopPolicy::stop_at_sensitive_extinction`]).
    SensitiveExtinction,
    HorizonReached,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::TotalExtinction => "total_extinction",
            StopReason::ReboundDetected => "rebound_detected",
            StopReason::SensitiveExtinction => "sensitive_extinction",
            StopReason::HorizonReached => "horizon_reached",
        }
    }
}

/// When to stop following the resistant population.
///
/// A rebound is declared once resistant cells (at least `detect_threshold`
/// of them) outnumber sensitive cells and the total is back to
/// `rebound_multiplier * x`. After any stop other than the horizon the
/// sensitive population is still run to extinction on its own, so the
/// extinction time is known even when the path ends earlier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopPolicy {
    pub horizon: f64,
    pub rebound_multiplier: f64,
    pub detect_threshold: u64,
    /// Stop as soon as the sensitive population dies out, keeping the
    /// resistant count at that time as the final state.
    #[serde(default)]
    pub stop_at_sensitive_extinction: bool,
}

impl Default for StopPolicy {
    fn default() -> Self {
        StopPolicy {
            horizon: 1e6,
            rebound_multiplier: 1.0,
            detect_threshold: 1,
            stop_at_sensitive_extinction: false,
        }
    }
}

impl StopPolicy {
    /// Follow both populations up to the sensitive extinction time.
    pub fn to_sensitive_extinction() -> Self {
        StopPolicy {
            rebound_multiplier: f64::INFINITY,
            stop_at_sensitive_extinction: true,
            ..Default::default()
        }
    }

    /// Follow both populations up to a fixed time.
    pub fn to_horizon(horizon: f64) -> Self {
        StopPolicy {
            horizon,
            rebound_multiplier: f64::INFINITY,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.rebound_multiplier > 0.0) {
            return Err(Error::Config(format!(
                "rebound_multiplier must be positive, got {}",
                self.rebound_multiplier
            )));
        }
        Ok(())
    }

    fn rebound(&self, x: u64, z0: u64, z1: u64) -> bool {
        z1 >= self.detect_threshold.max(1)
            && z1 >= z0
            && (z0 + z1) as f64 >= self.rebound_multiplier * x as f64
    }
}

/// Which states to keep in [`PathRecord::events`]. Marks are always
/// computed from every state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Recording {
    #[default]
    Full,
    /// Every `n`-th state plus the first and last.
    Stride(usize),
    /// Only the first and last states.
    Endpoints,
}

/// The random times read off one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathMarks {
    /// First time the sensitive population is empty.
    pub t_extinct_sensitive: Option<f64>,
    /// First time resistant cells are at least as many as sensitive cells.
    pub crossover: Option<f64>,
    /// Whether the crossover happened with at least one resistant cell.
    pub crossover_escaped: bool,
    /// First and last attainment of the minimal total population.
    #[serde(rename = "tau_first")]
    pub turnaround_first: f64,
    #[serde(rename = "tau_last")]
    pub turnaround_last: f64,
    pub min_total: u64,
    pub stop_reason: StopReason,
    pub seed: u64,
}

/// One simulated trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub events: Vec<PathEvent>,
    pub marks: PathMarks,
    /// State when the simulation of both populations stopped.
    pub final_state: PathEvent,
}

impl PathRecord {
    /// State in force at time `t`: the last recorded state at or before `t`.
    pub fn state_at(&self, t: f64) -> PathEvent {
        let idx = self.events.partition_point(|e| e.time <= t);
        self.events[idx.saturating_sub(1)]
    }

    /// Write the `time,z0,z1` dump.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "z0", "z1"])?;
        for e in &self.events {
            w.write_record(&[e.time.to_string(), e.z0.to_string(), e.z1.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Crossover read off the recorded path by a literal first-passage scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossover {
    pub xi: Option<f64>,
    pub escaped: bool,
}

pub fn extract_crossover(path: &PathRecord) -> Crossover {
    path.events
        .iter()
        .skip_while(|e| e.time <= 0.0)
        .find(|e| e.z1 >= e.z0)
        .map(|e| Crossover {
            xi: Some(e.time),
            escaped: e.z1 > 0,
        })
        .unwrap_or(Crossover {
            xi: None,
            escaped: false,
        })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Turnaround {
    pub tau_first: f64,
    pub tau_last: f64,
    pub min_total: u64,
}

/// Running-minimum scan of `z0 + z1` over the recorded path.
pub fn extract_turnaround(path: &PathRecord) -> Turnaround {
    let first = path.events[0];
    let mut best = Turnaround {
        tau_first: first.time,
        tau_last: first.time,
        min_total: first.total(),
    };
    for e in &path.events[1..] {
        let total = e.total();
        if total < best.min_total {
            best = Turnaround {
                tau_first: e.time,
                tau_last: e.time,
                min_total: total,
            };
        } else if total == best.min_total {
            best.tau_last = e.time;
        }
    }
    best
}

/// Incremental computation of the marks while a path is generated.
#[derive(Debug, Clone)]
struct MarkTracker {
    min_total: u64,
    tau_first: f64,
    tau_last: f64,
    crossover: Option<f64>,
    escaped: bool,
    t_extinct: Option<f64>,
}

impl MarkTracker {
    fn new(x: u64) -> Self {
        MarkTracker {
            min_total: x,
            tau_first: 0.0,
            tau_last: 0.0,
            crossover: None,
            escaped: false,
            t_extinct: None,
        }
    }

    #[inline]
    fn observe(&mut self, t: f64, z0: u64, z1: u64) {
        let total = z0 + z1;
        if total < self.min_total {
            self.min_total = total;
            self.tau_first = t;
            self.tau_last = t;
        } else if total == self.min_total {
            self.tau_last = t;
        }
        if self.crossover.is_none() && z1 >= z0 {
            self.crossover = Some(t);
            self.escaped = z1 > 0;
        }
        if z0 == 0 && self.t_extinct.is_none() {
            self.t_extinct = Some(t);
        }
    }

    fn finish(self, stop_reason: StopReason, seed: u64) -> PathMarks {
        PathMarks {
            t_extinct_sensitive: self.t_extinct,
            crossover: self.crossover,
            crossover_escaped: self.escaped,
            turnaround_first: self.tau_first,
            turnaround_last: self.tau_last,
            min_total: self.min_total,
            stop_reason,
            seed,
        }
    }
}

/// Collects the recorded states according to a [`Recording`] mode.
#[derive(Debug)]
struct Recorder {
    mode: Recording,
    events: Vec<PathEvent>,
    seen: usize,
    last: PathEvent,
}

impl Recorder {
    fn new(mode: Recording, start: PathEvent) -> Self {
        Recorder {
            mode,
            events: vec![start],
            seen: 0,
            last: start,
        }
    }

    #[inline]
    fn push(&mut self, e: PathEvent) {
        self.seen += 1;
        self.last = e;
        match self.mode {
            Recording::Full => self.events.push(e),
            Recording::Stride(n) if self.seen.is_multiple_of(n.max(1)) => self.events.push(e),
            _ => {}
        }
    }

    fn finish(mut self) -> (Vec<PathEvent>, PathEvent) {
        let last = self.last;
        if self.events.last() != Some(&last) {
            self.events.push(last);
        }
        (self.events, last)
    }
}
