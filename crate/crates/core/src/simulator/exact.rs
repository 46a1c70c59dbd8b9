//! Exact event-driven simulation.
//!
//! The sensitive population runs on its own clock ([`SensitiveClock`]).
//! Mutations and resistant births and deaths share a second clock whose
//! total rate `mu_x * z0 + (r1 + d1) * z1` changes whenever `z0` does; it
//! carries a remaining unit-exponential hazard that is spent at the current
//! rate between events, which keeps the combined process exact.

use rand::Rng;
use rand_distr::Exp1;

use super::extinction::SensitiveClock;
use super::{MarkTracker, PathEvent, PathRecord, Recorder, Recording, StopPolicy, StopReason};
use crate::error::Result;
use crate::params::ModelParams;
use crate::rng::{stream_rng, Stream};

/// Simulate one trajectory keeping every event.
pub fn simulate_exact(params: &ModelParams, seed: u64, policy: &StopPolicy) -> Result<PathRecord> {
    simulate_exact_with(params, seed, policy, Recording::Full)
}

pub fn simulate_exact_with(
    params: &ModelParams,
    seed: u64,
    policy: &StopPolicy,
    recording: Recording,
) -> Result<PathRecord> {
    policy.validate()?;
    let x = params.x();
    let mut clock = SensitiveClock::new(params, seed);
    let mut rng = stream_rng(seed, Stream::Mutation);
    let mu_x = params.mu_x();
    let (r1, gross1) = (params.r1(), params.r1() + params.d1());

    let start = PathEvent { time: 0.0, z0: x, z1: 0 };
    let mut recorder = Recorder::new(recording, start);
    let mut marks = MarkTracker::new(x);
    let mut t = 0.0;
    let mut z1: u64 = 0;
    let mut hazard: f64 = rng.sample(Exp1);

    let reason = if x == 0 {
        marks.observe(0.0, 0, 0);
        StopReason::TotalExtinction
    } else {
        loop {
            let mutation_rate = mu_x * clock.z0 as f64;
            let rate1 = mutation_rate + gross1 * z1 as f64;
            let t1 = if rate1 > 0.0 { t + hazard / rate1 } else { f64::INFINITY };
            if clock.next <= t1 {
                if clock.next > policy.horizon {
                    break StopReason::HorizonReached;
                }
                let now = clock.fire();
                hazard = (hazard - rate1 * (now - t)).max(0.0);
                t = now;
            } else {
                if t1 > policy.horizon {
                    break StopReason::HorizonReached;
                }
                t = t1;
                let u = rng.random::<f64>() * rate1;
                // a mutation or a resistant birth both add a resistant cell
                if u < mutation_rate + r1 * z1 as f64 {
                    z1 += 1;
                } else {
                    z1 -= 1;
                }
                hazard = rng.sample(Exp1);
            }
            let z0 = clock.z0;
            recorder.push(PathEvent { time: t, z0, z1 });
            marks.observe(t, z0, z1);
            if z0 == 0 && z1 == 0 {
                break StopReason::TotalExtinction;
            }
            if z0 == 0 && policy.stop_at_sensitive_extinction {
                break StopReason::SensitiveExtinction;
            }
            if policy.rebound(x, z0, z1) {
                break StopReason::ReboundDetected;
            }
        }
    };

    if reason == StopReason::ReboundDetected && marks.t_extinct.is_none() {
        marks.t_extinct = clock.run_to_extinction(policy.horizon);
    }
    let (events, final_state) = recorder.finish();
    Ok(PathRecord {
        events,
        marks: marks.finish(reason, seed),
        final_state,
    })
}
