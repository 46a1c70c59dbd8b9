//! Hybrid simulation: tau-leaping for large populations, exact events for
//! small ones.
//!
//! Time advances on a grid of step `step_fraction / max(r0 + d0, r1 + d1)`.
//! Over one step:
//!
//! * the sensitive population is leaped while it has at least
//!   `exact_clone_cutoff` cells and simulated event by event below that;
//! * mutation arrivals are Poisson with the integrated intensity of the
//!   sensitive mean over the step (exact integral over each constant piece
//!   in the event-driven phase);
//! * each new resistant clone is simulated exactly until it dies or reaches the cutoff, after which it is leaped for the rest of
//!   the step and merged into the aggregate resistant population, which is
//!   leaped as a whole.
//!
//! A leap draws births and deaths as Poisson variables whose difference has
//! the exact mean and variance of a linear birth-death process over the
//! step; when the step variance is below its mean decrease (near pure death)
//! deaths are binomial instead. If deaths would exceed the population the
//! step is split in halves.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp1, Poisson, StandardNormal};

use super::extinction::SensitiveClock;
use super::{MarkTracker, PathEvent, PathRecord, Recorder, Recording, StopPolicy, StopReason};
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::rng::{stream_rng, SimRng, Stream};

/// Accuracy controls of the hybrid engine.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HybridControl {
    /// Step length as a fraction of the fastest per-cell event time.
    pub step_fraction: f64,
    /// Populations and clones below this size are simulated exactly.
    pub exact_clone_cutoff: u64,
    /// Smallest leap allowed when halving.
    pub min_step: f64,
}

impl Default for HybridControl {
    fn default() -> Self {
        HybridControl {
            step_fraction: 0.05,
            exact_clone_cutoff: 100,
            min_step: 1e-9,
        }
    }
}

impl HybridControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_fraction > 0.0 && self.step_fraction <= 0.1) {
            return Err(Error::Config(format!(
                "step_fraction must lie in (0, 0.1], got {}",
                self.step_fraction
            )));
        }
        if self.exact_clone_cutoff < 10 {
            return Err(Error::Config(format!(
                "exact_clone_cutoff must be at least 10, got {}",
                self.exact_clone_cutoff
            )));
        }
        if !(self.min_step > 0.0) {
            return Err(Error::Config("min_step must be positive".into()));
        }
        Ok(())
    }
}

const OVERFLOW_LIMIT: u64 = 1_000_000_000_000_000_000;
const NORMAL_POISSON_MEAN: f64 = 1e9;

fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if !(mean > 0.0) {
        0
    } else if mean > NORMAL_POISSON_MEAN {
        let z: f64 = rng.sample(StandardNormal);
        (mean + mean.sqrt() * z).round().max(0.0) as u64
    } else {
        Poisson::new(mean).expect("positive finite mean").sample(rng) as u64
    }
}

/// Leap `n` cells of a birth-death process with rates `(birth, death)` over
/// `len`, halving on negative outcomes.
fn leap<R: Rng + ?Sized>(
    rng: &mut R,
    n: u64,
    birth: f64,
    death: f64,
    len: f64,
    min_step: f64,
    time: f64,
) -> Result<u64> {
    if n == 0 || len <= 0.0 {
        return Ok(n);
    }
    let lambda = birth - death;
    let g = (lambda * len).exp_m1();
    let nf = n as f64;
    let mean = nf * g;
    let var = nf * ((birth + death) / lambda) * (1.0 + g) * g;
    if var + mean < 0.0 {
        // Less variable than any Poisson pair (close to pure death): thin the
        // population binomially, which keeps the mean exact.
        let q = (-g).clamp(0.0, 1.0);
        return Ok(n - Binomial::new(n, q).expect("probability in [0, 1]").sample(rng));
    }
    let births = poisson(rng, 0.5 * (var + mean));
    let deaths = poisson(rng, 0.5 * (var - mean));
    if deaths <= n + births {
        return Ok(n + births - deaths);
    }
    let half = 0.5 * len;
    if half < min_step {
        return Err(Error::LeapInstability { time, min_step });
    }
    let mid = leap(rng, n, birth, death, half, min_step, time)?;
    leap(rng, mid, birth, death, half, min_step, time + half)
}

/// A resistant clone below the cutoff, with its next scheduled event.
#[derive(Debug, Clone, Copy)]
struct SmallClone {
    size: u64,
    next: f64,
}

enum CloneStep {
    Alive,
    Dead,
    Reached(f64),
}

struct Engine<'a> {
    params: &'a ModelParams,
    control: HybridControl,
    clock: SensitiveClock,
    mutation_rng: SimRng,
    aggregate_rng: SimRng,
    clone_rng: SimRng,
    aggregate: u64,
    clones: Vec<SmallClone>,
    arrivals: Vec<f64>,
}

impl<'a> Engine<'a> {
    fn small_total(&self) -> u64 {
        self.clones.iter().map(|c| c.size).sum()
    }

    fn z1(&self) -> u64 {
        self.aggregate + self.small_total()
    }

    /// Advance the sensitive population over `[t, t + len]`, stopping early
    /// at its extinction. Mutation arrival times are collected when
    /// `mutations` is set. Returns the end of the step.
    fn sensitive_step(&mut self, t: f64, len: f64, mutations: bool) -> Result<f64> {
        let p = self.params;
        let end = t + len;
        let mu_x = p.mu_x();
        self.arrivals.clear();
        let z0 = self.clock.z0;
        if z0 >= self.control.exact_clone_cutoff {
            let next = leap(&mut self.clock.rng, z0, p.r0(), p.d0(), len, self.control.min_step, t)?;
            self.clock.resync(next, end);
            if mutations {
                let l0 = p.lambda0();
                let g = (l0 * len).exp_m1();
                let count = poisson(&mut self.mutation_rng, mu_x * z0 as f64 * g / l0);
                for _ in 0..count {
                    let u: f64 = self.mutation_rng.random();
                    self.arrivals.push(t + (u * g).ln_1p() / l0);
                }
            }
            return Ok(end);
        }
        let mut from = t;
        loop {
            let stop = self.clock.next.min(end);
            let z0 = self.clock.z0;
            if mutations && z0 > 0 {
                let seg = stop - from;
                let count = poisson(&mut self.mutation_rng, mu_x * z0 as f64 * seg);
                for _ in 0..count {
                    let u: f64 = self.mutation_rng.random();
                    self.arrivals.push(from + u * seg);
                }
            }
            if self.clock.next > end {
                return Ok(end);
            }
            from = self.clock.fire();
            if self.clock.z0 == 0 {
                return Ok(from);
            }
        }
    }

    /// Run one clone up to `to`, keeping its pending event if it falls later.
    fn evolve_clone<R: Rng + ?Sized>(
        rng: &mut R,
        clone: &mut SmallClone,
        to: f64,
        gross: f64,
        p_birth: f64,
        cutoff: u64,
    ) -> CloneStep {
        while clone.next <= to {
            let now = clone.next;
            if rng.random::<f64>() < p_birth {
                clone.size += 1;
                if clone.size >= cutoff {
                    return CloneStep::Reached(now);
                }
            } else {
                clone.size -= 1;
                if clone.size == 0 {
                    return CloneStep::Dead;
                }
            }
            let e: f64 = rng.sample(Exp1);
            clone.next = now + e / (gross * clone.size as f64);
        }
        CloneStep::Alive
    }

    /// Advance the resistant population over `[t, end]`, seeding clones at
    /// the collected arrival times.
    fn resistant_step(&mut self, t: f64, end: f64) -> Result<()> {
        let p = self.params;
        let (r1, d1) = (p.r1(), p.d1());
        let gross = r1 + d1;
        let p_birth = r1 / gross;
        let cutoff = self.control.exact_clone_cutoff;
        let min_step = self.control.min_step;

        self.aggregate = leap(&mut self.aggregate_rng, self.aggregate, r1, d1, end - t, min_step, t)?;

        for &a in &self.arrivals {
            let e: f64 = self.clone_rng.sample(Exp1);
            self.clones.push(SmallClone {
                size: 1,
                next: a + e / gross,
            });
        }
        let mut i = 0;
        while i < self.clones.len() {
            match Self::evolve_clone(&mut self.clone_rng, &mut self.clones[i], end, gross, p_birth, cutoff) {
                CloneStep::Alive => i += 1,
                CloneStep::Dead => {
                    self.clones.swap_remove(i);
                }
                CloneStep::Reached(at) => {
                    let size = self.clones.swap_remove(i).size;
                    self.aggregate += leap(&mut self.aggregate_rng, size, r1, d1, end - at, min_step, at)?;
                }
            }
        }
        if self.aggregate > OVERFLOW_LIMIT {
            return Err(Error::Overflow { time: end });
        }
        Ok(())
    }
}

/// Simulate one trajectory recording every grid step.
pub fn simulate_hybrid(
    params: &ModelParams,
    seed: u64,
    policy: &StopPolicy,
    control: &HybridControl,
) -> Result<PathRecord> {
    simulate_hybrid_with(params, seed, policy, control, Recording::Full)
}

pub fn simulate_hybrid_with(
    params: &ModelParams,
    seed: u64,
    policy: &StopPolicy,
    control: &HybridControl,
    recording: Recording,
) -> Result<PathRecord> {
    policy.validate()?;
    control.validate()?;
    let x = params.x();
    let dt = control.step_fraction / (params.r0() + params.d0()).max(params.r1() + params.d1());
    let mut engine = Engine {
        params,
        control: *control,
        clock: SensitiveClock::new(params, seed),
        mutation_rng: stream_rng(seed, Stream::Mutation),
        aggregate_rng: stream_rng(seed, Stream::Resistant),
        clone_rng: stream_rng(seed, Stream::Clone(0)),
        aggregate: 0,
        clones: Vec::new(),
        arrivals: Vec::new(),
    };
    let mut recorder = Recorder::new(recording, PathEvent { time: 0.0, z0: x, z1: 0 });
    let mut marks = MarkTracker::new(x);
    let mut t = 0.0;

    let reason = if x == 0 {
        marks.observe(0.0, 0, 0);
        StopReason::TotalExtinction
    } else {
        loop {
            if t >= policy.horizon {
                break StopReason::HorizonReached;
            }
            let end = engine.sensitive_step(t, dt.min(policy.horizon - t), true)?;
            engine.resistant_step(t, end)?;
            t = end;
            let (z0, z1) = (engine.clock.z0, engine.z1());
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

    if reason == StopReason::ReboundDetected {
        while engine.clock.z0 > 0 && t < policy.horizon {
            t = engine.sensitive_step(t, dt.min(policy.horizon - t), false)?;
        }
        if engine.clock.z0 == 0 {
            marks.t_extinct = Some(t);
        }
    }
    let (events, final_state) = recorder.finish();
    Ok(PathRecord {
        events,
        marks: marks.finish(reason, seed),
        final_state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive_params, Rates, RawParams};
    use crate::simulator::simulate_exact_with;
    use rand::SeedableRng;

    fn example(x: u64) -> ModelParams {
        derive_params(RawParams {
            x,
            rates: Rates {
                r0: 1.0,
                d0: 1.5,
                r1: 1.0,
                d1: 0.5,
            },
            mu: 1.0,
            alpha: 0.5,
        })
        .unwrap()
    }

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, v.iter().map(|z| (z - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn leap_moments_match_birth_death_process() {
        let mut rng = SimRng::seed_from_u64(4);
        for (birth, death) in [(1.0, 1.5), (1.0, 0.5), (0.0, 1.0)] {
            let (n, len) = (1000u64, 0.1);
            let draws: Vec<f64> = (0..40_000)
                .map(|_| leap(&mut rng, n, birth, death, len, 1e-9, 0.0).unwrap() as f64)
                .collect();
            let (m, v) = mean_var(&draws);
            let lambda: f64 = birth - death;
            let mean = n as f64 * (lambda * len).exp();
            assert!((m - mean).abs() < 0.5, "({birth}, {death}): mean {m} vs {mean}");
            {
                let var = n as f64 * ((birth + death) / lambda) * (lambda * len).exp() * (lambda * len).exp_m1();
                assert!((v / var - 1.0).abs() < 0.04, "({birth}, {death}): var {v} vs {var}");
            }
        }
    }

    #[test]
    fn leap_splits_instead_of_going_negative() {
        let mut rng = SimRng::seed_from_u64(1);
        for _ in 0..1000 {
            // a single cell with a long step forces frequent halving
            let _ = leap(&mut rng, 2, 5.0, 6.0, 3.0, 1e-12, 0.0).unwrap();
        }
        let err = (0..1000).find_map(|_| leap(&mut rng, 1, 5.0, 6.0, 1.0, 0.4, 0.0).err());
        assert!(matches!(err, Some(Error::LeapInstability { .. })));
    }

    #[test]
    fn control_validation() {
        assert!(HybridControl::default().validate().is_ok());
        for bad in [
            HybridControl {
                step_fraction: 0.0,
                ..Default::default()
            },
            HybridControl {
                step_fraction: 0.2,
                ..Default::default()
            },
            HybridControl {
                exact_clone_cutoff: 9,
                ..Default::default()
            },
            HybridControl {
                min_step: 0.0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn reproducible_and_sensitive_path_independent_of_mutation_rate() {
        let p = example(5000);
        let control = HybridControl::default();
        let policy = StopPolicy::to_sensitive_extinction();
        let a = simulate_hybrid(&p, 9, &policy, &control).unwrap();
        assert_eq!(a, simulate_hybrid(&p, 9, &policy, &control).unwrap());
        let b = simulate_hybrid(&p.with_mu(20.0).unwrap(), 9, &policy, &control).unwrap();
        let z0 = |r: &PathRecord| r.events.iter().map(|e| (e.time, e.z0)).collect::<Vec<_>>();
        assert_eq!(z0(&a), z0(&b));
        assert_eq!(a.marks.t_extinct_sensitive, b.marks.t_extinct_sensitive);
        assert!(b.final_state.z1 > a.final_state.z1);
    }

    #[test]
    fn means_at_fixed_time_match_closed_forms() {
        let p = example(10_000).with_mu(10.0).unwrap();
        let t = 3.0;
        let control = HybridControl::default();
        let n = 4000;
        let (mut z0s, mut z1s) = (Vec::new(), Vec::new());
        for seed in 0..n {
            let path = simulate_hybrid_with(&p, seed, &StopPolicy::to_horizon(t), &control, Recording::Endpoints).unwrap();
            z0s.push(path.final_state.z0 as f64);
            z1s.push(path.final_state.z1 as f64);
        }
        let (l0, l1) = (p.lambda0(), p.lambda1());
        let mean0 = 1e4 * (l0 * t).exp();
        let var0 = 1e4 * (2.5 / l0) * ((2.0 * l0 * t).exp() - (l0 * t).exp());
        let mean1 = p.mu_x() * 1e4 * ((l1 * t).exp() - (l0 * t).exp()) / (l1 - l0);
        let (m0, v0) = mean_var(&z0s);
        let (m1, v1) = mean_var(&z1s);
        assert!((m0 - mean0).abs() < 4.0 * (var0 / n as f64).sqrt(), "z0 mean {m0} vs {mean0}");
        assert!((v0 / var0 - 1.0).abs() < 0.1, "z0 var {v0} vs {var0}");
        assert!((m1 - mean1).abs() < 4.0 * (v1 / n as f64).sqrt(), "z1 mean {m1} vs {mean1}");
    }

    #[test]
    fn extinction_times_agree_with_exact_engine() {
        // few mutants keep the comparison about the sensitive population
        let p = example(2000).with_mu(0.01).unwrap();
        let n = 3000;
        let policy = StopPolicy::to_sensitive_extinction();
        let control = HybridControl::default();
        let exact: Vec<f64> = (0..n)
            .map(|s| {
                let r = simulate_exact_with(&p, s, &policy, Recording::Endpoints).unwrap();
                r.marks.t_extinct_sensitive.unwrap()
            })
            .collect();
        let hybrid: Vec<f64> = (n..2 * n)
            .map(|s| {
                let r = simulate_hybrid_with(&p, s, &policy, &control, Recording::Endpoints).unwrap();
                r.marks.t_extinct_sensitive.unwrap()
            })
            .collect();
        let (me, ve) = mean_var(&exact);
        let (mh, vh) = mean_var(&hybrid);
        let se = ((ve + vh) / n as f64).sqrt();
        assert!((me - mh).abs() < 4.0 * se, "exact {me} hybrid {mh}");
        assert!((ve / vh - 1.0).abs() < 0.15, "variances {ve} {vh}");
    }
}
