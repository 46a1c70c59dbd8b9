//! Single-population pieces: the sensitive clock shared by the engines, the
//! extinction time sampler and single resistant clones.

use rand::Rng;
use rand_distr::Exp1;

use crate::params::ModelParams;
use crate::rng::{stream_rng, SimRng, Stream};

/// Event clock of the sensitive population alone.
///
/// Consumes one exponential per scheduled event and one uniform per applied
/// event, always in that order, so any routine driving it sees the same
/// trajectory for the same seed.
#[derive(Debug, Clone)]
pub(crate) struct SensitiveClock {
    pub(crate) rng: SimRng,
    pub(crate) z0: u64,
    pub(crate) next: f64,
    gross: f64,
    p_birth: f64,
}

impl SensitiveClock {
    pub(crate) fn new(params: &ModelParams, seed: u64) -> Self {
        let mut clock = SensitiveClock {
            rng: stream_rng(seed, Stream::Sensitive),
            z0: params.x(),
            next: f64::INFINITY,
            gross: params.r0() + params.d0(),
            p_birth: params.r0() / (params.r0() + params.d0()),
        };
        clock.schedule(0.0);
        clock
    }

    /// Set the population after a leap and schedule the next event from `now`.
    pub(crate) fn resync(&mut self, z0: u64, now: f64) {
        self.z0 = z0;
        self.schedule(now);
    }

    fn schedule(&mut self, now: f64) {
        self.next = if self.z0 > 0 {
            let e: f64 = self.rng.sample(Exp1);
            now + e / (self.gross * self.z0 as f64)
        } else {
            f64::INFINITY
        };
    }

    /// Apply the scheduled event and return its time.
    #[inline]
    pub(crate) fn fire(&mut self) -> f64 {
        let t = self.next;
        if self.rng.random::<f64>() < self.p_birth {
            self.z0 += 1;
        } else {
            self.z0 -= 1;
        }
        self.schedule(t);
        t
    }

    /// Run until extinction or `horizon`; returns the extinction time.
    pub(crate) fn run_to_extinction(&mut self, horizon: f64) -> Option<f64> {
        while self.z0 > 0 {
            if self.next > horizon {
                return None;
            }
            let t = self.fire();
            if self.z0 == 0 {
                return Some(t);
            }
        }
        None
    }
}

/// Extinction time of the sensitive population alone.
///
/// Uses the sensitive stream exactly as [`simulate_exact`](super::simulate_exact)
/// does, so for the same seed both report the same time. Returns `None`
/// if the population survives past `horizon`.
pub fn sample_extinction_time(params: &ModelParams, seed: u64, horizon: f64) -> Option<f64> {
    if params.x() == 0 {
        return Some(0.0);
    }
    SensitiveClock::new(params, seed).run_to_extinction(horizon)
}

/// Outcome of a single resistant clone started from one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CloneFate {
    Extinct { time: f64 },
    /// Reached the size threshold.
    Escaped { time: f64 },
}

/// Follow one resistant cell until it dies out or reaches `threshold` cells.
pub fn simulate_clone(params: &ModelParams, seed: u64, threshold: u64) -> CloneFate {
    let mut rng = stream_rng(seed, Stream::Clone(0));
    let gross = params.r1() + params.d1();
    let p_birth = params.r1() / gross;
    let mut n: u64 = 1;
    let mut t = 0.0;
    loop {
        let e: f64 = rng.sample(Exp1);
        t += e / (gross * n as f64);
        if rng.random::<f64>() < p_birth {
            n += 1;
            if n >= threshold {
                return CloneFate::Escaped { time: t };
            }
        } else {
            n -= 1;
            if n == 0 {
                return CloneFate::Extinct { time: t };
            }
        }
    }
}

/// Size at time `t` of a resistant clone started from one cell.
pub fn clone_size_at(params: &ModelParams, seed: u64, t: f64) -> u64 {
    let mut rng = stream_rng(seed, Stream::Clone(0));
    let gross = params.r1() + params.d1();
    let p_birth = params.r1() / gross;
    let mut n: u64 = 1;
    let mut now = 0.0;
    while n > 0 {
        let e: f64 = rng.sample(Exp1);
        now += e / (gross * n as f64);
        if now > t {
            break;
        }
        if rng.random::<f64>() < p_birth {
            n += 1;
        } else {
            n -= 1;
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive_params, Rates, RawParams};

    fn pure_death(x: u64, d0: f64) -> ModelParams {
        derive_params(RawParams {
            x,
            rates: Rates {
                r0: 0.0,
                d0,
                r1: 1.0,
                d1: 0.5,
            },
            mu: 1.0,
            alpha: 1.0 / 3.0,
        })
        .unwrap()
    }

    #[test]
    fn single_cell_death_time_is_exponential() {
        for (d0, mean) in [(1.0, 1.0), (0.5, 2.0)] {
            let p = pure_death(1, d0);
            let n = 200_000;
            let times: Vec<f64> = (0..n).map(|i| sample_extinction_time(&p, i, 1e9).unwrap()).collect();
            let m = times.iter().sum::<f64>() / n as f64;
            let v = times.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            // standard error of the mean is mean / sqrt(n) ~ 0.0022 * mean
            assert!((m / mean - 1.0).abs() < 0.01, "mean {m}");
            assert!((v / (mean * mean) - 1.0).abs() < 0.03, "variance {v}");
        }
    }

    #[test]
    fn pure_death_extinction_matches_harmonic_sum() {
        // maximum of 10 unit exponentials has mean H_10
        let p = pure_death(10, 1.0);
        let n = 100_000;
        let m = (0..n).map(|i| sample_extinction_time(&p, i, 1e9).unwrap()).sum::<f64>() / n as f64;
        let h10: f64 = (1..=10).map(|k| 1.0 / k as f64).sum();
        assert!((h10 - 2.928_968).abs() < 1e-6);
        assert!((m - h10).abs() < 0.02, "mean {m}");
    }

    #[test]
    fn horizon_truncates() {
        let p = pure_death(1000, 1.0);
        assert_eq!(sample_extinction_time(&p, 3, 0.5), None);
    }

    #[test]
    fn clone_extinction_fraction() {
        let p = derive_params(RawParams {
            x: 100,
            rates: Rates {
                r0: 1.0,
                d0: 1.5,
                r1: 1.0,
                d1: 0.5,
            },
            mu: 1.0,
            alpha: 0.5,
        })
        .unwrap();
        let n = 100_000u64;
        let died = (0..n)
            .filter(|&i| matches!(simulate_clone(&p, i, 1000), CloneFate::Extinct { .. }))
            .count() as f64;
        let frac = died / n as f64;
        // d1 / r1 = 0.5; reaching 1000 cells without dying adds only 0.5^1000
        assert!((frac - 0.5).abs() < 0.005, "extinct fraction {frac}");
        assert!((p.p_extinct_resistant() - 0.5).abs() < 1e-15);
    }
}
