//! Closed-form limit objects on the extinction time scale.
//!
//! The extinction time satisfies `Tx - ln(x)/r => (eta + ln c)/r` with `eta`
//! standard Gumbel. Substituting that fluctuation into the scaled mean paths
//! gives the nearly deterministic limit processes `psi0`, `psi1`, and pushing
//! it through the turnaround and crossover formulas gives their laws.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{ModelParams, ScaledQuery};
use crate::rng::{stream_rng, Stream};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Location-scale Gumbel (maximum) law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gumbel {
    pub location: f64,
    pub scale: f64,
}

impl Gumbel {
    pub const STANDARD: Gumbel = Gumbel {
        location: 0.0,
        scale: 1.0,
    };

    pub fn new(location: f64, scale: f64) -> Self {
        debug_assert!(scale > 0.0);
        Gumbel { location, scale }
    }
    pub fn pdf(&self, t: f64) -> f64 {
        let z = (t - self.location) / self.scale;
        (-z - (-z).exp()).exp() / self.scale
    }
    pub fn cdf(&self, t: f64) -> f64 {
        let z = (t - self.location) / self.scale;
        (-(-z).exp()).exp()
    }
    /// Upper tail `1 - cdf`, accurate far into the right tail.
    pub fn sf(&self, t: f64) -> f64 {
        let z = (t - self.location) / self.scale;
        -(-(-z).exp()).exp_m1()
    }
    pub fn quantile(&self, p: f64) -> f64 {
        self.location - self.scale * (-p.ln()).ln()
    }
    pub fn mean(&self) -> f64 {
        self.location + EULER_GAMMA * self.scale
    }
    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }
    /// Inverse-transform draw, `location - scale * ln(-ln U)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        // U = 0 has probability 2^-53; map it into the open interval
        let u = if u > 0.0 { u } else { f64::MIN_POSITIVE };
        self.location - self.scale * (-u.ln()).ln()
    }
}

/// Asymptotic law of the extinction time `Tx`.
pub fn extinction_time_law(params: &ModelParams) -> Gumbel {
    let r = params.r();
    Gumbel::new((params.ln_x() + params.c().ln()) / r, 1.0 / r)
}

/// One draw from the limit laws and its derived quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitSample {
    pub eta: f64,
    pub t_x: f64,
    /// `Tx - ln(x)/r`.
    pub d_tx: f64,
    pub u_star: f64,
    pub u_tilde: f64,
}

impl LimitSample {
    pub fn from_eta(params: &ModelParams, eta: f64) -> Self {
        let r = params.r();
        let d_tx = (eta + params.c().ln()) / r;
        let t_x = params.ln_x() / r + d_tx;
        LimitSample {
            eta,
            t_x,
            d_tx,
            u_star: turnaround_constant(params).unwrap_or(f64::NAN) / t_x,
            u_tilde: crossover_constant(params) / t_x,
        }
    }
}

pub fn gumbel_tx_sample(params: &ModelParams, seed: u64) -> LimitSample {
    let mut rng = stream_rng(seed, Stream::Limit);
    LimitSample::from_eta(params, Gumbel::STANDARD.sample(&mut rng))
}

pub fn gumbel_tx_pdf(params: &ModelParams, t: f64) -> f64 {
    extinction_time_law(params).pdf(t)
}

/// Scaled sensitive mean `phi0^x(u, t) = exp(lambda0 u t)`.
pub fn phi0(q: &ScaledQuery, params: &ModelParams) -> f64 {
    (params.lambda0() * q.u * q.t).exp()
}

/// Scaled resistant mean `phi1^x(u, t)`.
pub fn phi1(q: &ScaledQuery, params: &ModelParams) -> f64 {
    let (l0, l1) = (params.lambda0(), params.lambda1());
    let ut = q.u * q.t;
    let decay = ((l0 - l1) * ut).exp() * params.xf().powf((l0 - l1) * q.u / params.r());
    params.mu() * (l1 * ut).exp() / (l1 - l0) * (1.0 - decay)
}

/// Unscaled sensitive mean `E Z0(u s_x(t)) = x^(1-u) phi0^x(u, t)`.
pub fn phi0_unscaled(q: &ScaledQuery, params: &ModelParams) -> f64 {
    params.xf().powf(1.0 - q.u) * phi0(q, params)
}

/// Unscaled resistant mean `E Z1(u s_x(t)) = x^(1 + lambda1 u / r - alpha) phi1^x(u, t)`.
pub fn phi1_unscaled(q: &ScaledQuery, params: &ModelParams) -> f64 {
    let exponent = 1.0 + params.lambda1() * q.u / params.r() - params.alpha();
    params.xf().powf(exponent) * phi1(q, params)
}

pub fn psi0(u: f64, eta: f64, params: &ModelParams) -> f64 {
    (-u * (eta + params.c().ln())).exp()
}

/// Limit of the scaled resistant process; jumps from 0 at `u = 0`.
pub fn psi1(u: f64, eta: f64, params: &ModelParams) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    let k = params.lambda1() / params.r();
    params.mu() / (params.lambda1() + params.r()) * (k * u * (eta + params.c().ln())).exp()
}

/// Numerator of the crossover estimate: `ũ = crossover_constant / Tx`.
fn require_mutation(params: &ModelParams) -> Result<()> {
    if params.mu() > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain("undefined without mutation (mu = 0)".into()))
    }
}

fn crossover_constant(params: &ModelParams) -> f64 {
    let (mu, l1, r) = (params.mu(), params.lambda1(), params.r());
    let x_alpha = params.xf().powf(params.alpha());
    ((mu + (l1 + r) * x_alpha).ln() - mu.ln()) / (l1 + r)
}

/// Crossover estimate `ũ` at a realized extinction time.
pub fn crossover_estimate(params: &ModelParams, t_x: f64) -> Result<f64> {
    require_mutation(params)?;
    if t_x <= 0.0 || !t_x.is_finite() {
        return Err(Error::Domain(format!("extinction time must be positive, got {t_x}")));
    }
    Ok(crossover_constant(params) / t_x)
}

/// Time `K` at which the mean total population turns around; `u* = K / Tx`.
pub fn turnaround_constant(params: &ModelParams) -> Result<f64> {
    require_mutation(params)?;
    let (mu, l1, r) = (params.mu(), params.lambda1(), params.r());
    let influx = params.xf().powf(params.alpha()) * (l1 + r) - mu;
    if influx <= 0.0 {
        return Err(Error::Domain(format!(
            "mutant influx dominates from t=0: x^alpha (lambda1 + r) - mu = {influx}"
        )));
    }
    Ok(((r / (l1 * mu)).ln() + influx.ln()) / (l1 + r))
}

pub fn ustar(params: &ModelParams, t_x: f64) -> Result<f64> {
    let k = turnaround_constant(params)?;
    if t_x <= 0.0 || !t_x.is_finite() {
        return Err(Error::Domain(format!("extinction time must be positive, got {t_x}")));
    }
    Ok(k / t_x)
}

/// Leading-order turnaround fraction `alpha r / (lambda1 + r)`.
pub fn ustar_leading(params: &ModelParams) -> f64 {
    params.alpha() * params.r() / (params.lambda1() + params.r())
}

/// Turnaround fraction on the clock `s_x(t)`.
pub fn ustar_of_t(params: &ModelParams, t: f64) -> Result<f64> {
    let k = turnaround_constant(params)?;
    Ok(k / params.s_x(t))
}

/// Law of `u* = K / Tx` with `Tx` Gumbel conditioned on `Tx > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UstarLaw {
    pub k: f64,
    pub tx: Gumbel,
    /// `P(Tx > 0)` under the Gumbel surrogate.
    pub positive_mass: f64,
}

impl UstarLaw {
    pub fn new(params: &ModelParams) -> Result<Self> {
        let k = turnaround_constant(params)?;
        if k <= 0.0 {
            return Err(Error::Domain(format!(
                "turnaround constant must be positive, got {k}"
            )));
        }
        let tx = extinction_time_law(params);
        Ok(UstarLaw {
            k,
            tx,
            positive_mass: tx.sf(0.0),
        })
    }

    pub fn pdf(&self, w: f64) -> f64 {
        if w <= 0.0 {
            return 0.0;
        }
        let t = self.k / w;
        self.tx.pdf(t) * self.k / (w * w) / self.positive_mass
    }

    pub fn cdf(&self, w: f64) -> f64 {
        if w <= 0.0 {
            return 0.0;
        }
        // u* <= w  <=>  Tx >= K / w
        (self.tx.sf(self.k / w) / self.positive_mass).min(1.0)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        // u* is decreasing in Tx: its p-quantile maps from the (1-p)-quantile of Tx | Tx > 0
        let f0 = self.tx.cdf(0.0);
        let target = f0 + (1.0 - p) * self.positive_mass;
        self.k / self.tx.quantile(target)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let t = self.tx.sample(rng);
            if t > 0.0 {
                return self.k / t;
            }
        }
    }
}

pub fn ustar_pdf(params: &ModelParams, w: f64) -> Result<f64> {
    if w <= 0.0 {
        return Err(Error::Domain(format!("w must be positive, got {w}")));
    }
    Ok(UstarLaw::new(params)?.pdf(w))
}

pub fn ustar_sample(params: &ModelParams, seed: u64) -> Result<f64> {
    let law = UstarLaw::new(params)?;
    let mut rng = stream_rng(seed, Stream::Limit);
    Ok(law.sample(&mut rng))
}

/// Asymptotic mean of `Z1(v Tx)`.
///
/// Valid for `r >= lambda1` and `lambda1 v / r < 1`; beyond that the mean is
/// infinite for every `x`. (With `alpha = 0` and `Tx` frozen at `ln(x)/r`
/// one would instead predict growth like `x^(1 + v lambda1 / r)` with a
/// finite mean for all `v`, which the randomness of `Tx` overturns.)
pub fn mean_z1_asymptotic(params: &ModelParams, v: f64) -> Result<f64> {
    let (l1, r) = (params.lambda1(), params.r());
    if !(v > 0.0 && v <= 1.0) {
        return Err(Error::Domain(format!("v must lie in (0, 1], got {v}")));
    }
    if l1 * v >= r {
        return Err(Error::Domain(format!(
            "infinite-mean regime: lambda1 v / r = {} >= 1 makes E[Z1(v Tx)] infinite",
            l1 * v / r
        )));
    }
    if r < l1 {
        return Err(Error::Domain(format!(
            "mean scaling requires r >= lambda1, got r = {r}, lambda1 = {l1}"
        )));
    }
    let k = l1 * v / r;
    let exponent = 1.0 + k - params.alpha();
    Ok(params.xf().powf(exponent) * params.c().powf(k) * params.mu()
        * statrs::function::gamma::gamma(1.0 - k)
        / (l1 + r))
}

/// Sum of the mean populations on the clock `s_x(t)`, as a function of `u`.
pub fn total_mean(params: &ModelParams, u: f64, t: f64) -> f64 {
    let (l0, l1, r, mu) = (params.lambda0(), params.lambda1(), params.r(), params.mu());
    let x = params.xf();
    let x_alpha = x.powf(params.alpha());
    let s = params.s_x(t);
    x * (l0 * u * s).exp() * (1.0 - mu / (x_alpha * (l1 + r)))
        + x / x_alpha * mu * (l1 * u * s).exp() / (l1 + r)
}

/// Stationary point of `total_mean` in `u`, from setting its derivative to zero.
pub fn total_mean_critical_point(params: &ModelParams, t: f64) -> Result<f64> {
    let (l1, r, mu) = (params.lambda1(), params.r(), params.mu());
    let x = params.xf();
    let x_alpha = x.powf(params.alpha());
    let sensitive_weight = x * (1.0 - mu / (x_alpha * (l1 + r)));
    let resistant_weight = x / x_alpha * mu / (l1 + r);
    if sensitive_weight <= 0.0 {
        return Err(Error::Domain(
            "mutant influx dominates from t=0: total mean has no interior minimum".into(),
        ));
    }
    // r * A * e^{-r u s} = lambda1 * B * e^{lambda1 u s}
    let ratio = r * sensitive_weight / (l1 * resistant_weight);
    Ok(ratio.ln() / ((l1 + r) * params.s_x(t)))
}

/// Large-x law of the resistant burden `Z1(Tx) ~ A exp(k eta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResistantBurdenLaw {
    /// Value at `eta = 0`.
    pub scale: f64,
    /// `lambda1 / r`.
    pub exponent: f64,
}

impl ResistantBurdenLaw {
    pub fn new(params: &ModelParams) -> Self {
        let (l1, r) = (params.lambda1(), params.r());
        let k = l1 / r;
        let scale = params.xf().powf(1.0 + k - params.alpha()) * params.mu() / (l1 + r) * params.c().powf(k);
        ResistantBurdenLaw { scale, exponent: k }
    }

    pub fn at_eta(&self, eta: f64) -> f64 {
        self.scale * (self.exponent * eta).exp()
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.at_eta(Gumbel::STANDARD.quantile(p))
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    pub fn cdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        Gumbel::STANDARD.cdf((y / self.scale).ln() / self.exponent)
    }

    /// Density in `y`.
    pub fn pdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let eta = (y / self.scale).ln() / self.exponent;
        Gumbel::STANDARD.pdf(eta) / (self.exponent * y)
    }

    /// Density of `ln y` (a Gumbel with location `ln A` and scale `k`).
    pub fn log_pdf(&self, log_y: f64) -> f64 {
        Gumbel::new(self.scale.ln(), self.exponent).pdf(log_y)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.at_eta(Gumbel::STANDARD.sample(rng))
    }
}

pub fn resistant_burden_at_eradication(params: &ModelParams, seed: u64) -> f64 {
    let mut rng = stream_rng(seed, Stream::Limit);
    ResistantBurdenLaw::new(params).sample(&mut rng)
}
