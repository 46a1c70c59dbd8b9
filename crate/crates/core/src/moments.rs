//! First and second moments of both populations at absolute times.
//!
//! Sensitive moments are closed forms of the linear birth-death process.
//! Resistant second moments are integrals over mutation times: a mutant born
//! at `s` contributes a clone whose first two moments are known, and the
//! sensitive covariance couples mutation times. The double integrals are
//! iterated one-dimensional quadratures split at the diagonal, where the
//! covariance kernel has a kink.

use std::cell::Cell;

use serde::Serialize;

use crate::error::Result;
use crate::params::ModelParams;
use crate::quad::{integrate, integrate_pieces, Estimate, Tolerance};

pub fn mean_z0(params: &ModelParams, t: f64) -> f64 {
    params.xf() * (params.lambda0() * t).exp()
}

pub fn var_z0(params: &ModelParams, t: f64) -> f64 {
    let l0 = params.lambda0();
    let gross = params.r0() + params.d0();
    // both factors are negative for t > 0
    params.xf() * (gross / l0) * (l0 * t).exp() * (l0 * t).exp_m1()
}

/// `Cov(Z0(s), Z0(y))`, symmetric in its arguments.
pub fn cov_z0(params: &ModelParams, s: f64, y: f64) -> f64 {
    let (lo, hi) = if s <= y { (s, y) } else { (y, s) };
    (params.lambda0() * (hi - lo)).exp() * var_z0(params, lo)
}

/// Second moment at time `t` of a resistant clone started from one cell.
pub fn second_moment_clone(params: &ModelParams, t: f64) -> f64 {
    let (r1, l1) = (params.r1(), params.lambda1());
    let g = (l1 * t).exp();
    // 2 r1 g^2 - (r1 + d1) g = l1 g + 2 r1 g (g - 1), which stays accurate near t = 0
    g + (2.0 * r1 / l1) * g * (l1 * t).exp_m1()
}

pub fn mean_z1(params: &ModelParams, t: f64) -> f64 {
    let (l0, l1) = (params.lambda0(), params.lambda1());
    params.mu_x() * params.xf() * (l0 * t).exp() * ((l1 - l0) * t).exp_m1() / (l1 - l0)
}

/// Integral of `kernel(s, y)` over `[0, t]^2`, split at `s = y`.
fn double_integral<F: Fn(f64, f64) -> f64>(kernel: F, t: f64, tol: Tolerance) -> Result<Estimate> {
    let inner_error = Cell::new(0.0f64);
    let failure = Cell::new(None);
    let outer = integrate(
        |s| {
            match integrate_pieces(|y| kernel(s, y), &[0.0, s, t], tol) {
                Ok(e) => {
                    inner_error.set(inner_error.get().max(e.error));
                    e.value
                }
                Err(err) => {
                    failure.set(Some(err));
                    0.0
                }
            }
        },
        0.0,
        t,
        tol,
    )?;
    if let Some(err) = failure.take() {
        return Err(err);
    }
    Ok(Estimate {
        value: outer.value,
        error: outer.error + t * inner_error.get(),
    })
}

/// Mutant-clone term: `mu_x * int_0^t E Z0(s) E[clone(t - s)^2] ds`.
fn clone_term(params: &ModelParams, t: f64, tol: Tolerance) -> Result<Estimate> {
    let mu_x = params.mu_x();
    let e = integrate(
        |s| mean_z0(params, s) * second_moment_clone(params, t - s),
        0.0,
        t,
        tol,
    )?;
    Ok(Estimate {
        value: mu_x * e.value,
        error: mu_x * e.error,
    })
}

fn add(a: Estimate, b: Estimate) -> Estimate {
    Estimate {
        value: a.value + b.value,
        error: a.error + b.error,
    }
}

/// `Var Z1(t)` from the covariance form.
pub fn var_z1(params: &ModelParams, t: f64, tol: Tolerance) -> Result<Estimate> {
    if params.mu_x() == 0.0 || t <= 0.0 {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    let l1 = params.lambda1();
    let m2 = params.mu_x().powi(2);
    let cov = double_integral(|s, y| cov_z0(params, s, y) * (l1 * (2.0 * t - s - y)).exp(), t, tol)?;
    let cov = Estimate {
        value: m2 * cov.value,
        error: m2 * cov.error,
    };
    Ok(add(cov, clone_term(params, t, tol)?))
}

/// `E[Z1(t)^2]` from the raw second-moment form; independent of [`var_z1`]
/// apart from the shared clone term.
pub fn second_moment_z1(params: &ModelParams, t: f64, tol: Tolerance) -> Result<Estimate> {
    if params.mu_x() == 0.0 || t <= 0.0 {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    let l1 = params.lambda1();
    let m2 = params.mu_x().powi(2);
    let product = double_integral(
        |s, y| {
            let second = cov_z0(params, s, y) + mean_z0(params, s) * mean_z0(params, y);
            second * (l1 * (t - s)).exp() * (l1 * (t - y)).exp()
        },
        t,
        tol,
    )?;
    let product = Estimate {
        value: m2 * product.value,
        error: m2 * product.error,
    };
    Ok(add(product, clone_term(params, t, tol)?))
}

/// `Cov(Z0(s), Z1(t))` for `s, t >= 0`.
pub fn cov_z0_z1(params: &ModelParams, s: f64, t: f64, tol: Tolerance) -> Result<Estimate> {
    if !(s >= 0.0 && t >= 0.0) {
        return Err(crate::Error::Domain(format!("need s, t >= 0, got s = {s}, t = {t}")));
    }
    let mu_x = params.mu_x();
    if mu_x == 0.0 {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    let l1 = params.lambda1();
    let e = integrate_pieces(|y| cov_z0(params, y, s) * (l1 * (t - y)).exp(), &[0.0, s.min(t), t], tol)?;
    Ok(Estimate {
        value: mu_x * e.value,
        error: mu_x * e.error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureErrors {
    pub var_z1: f64,
    pub cov_z0_z1: f64,
}

/// All moments at one absolute time; the cross moment is taken at equal
/// times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentReport {
    pub time: f64,
    pub mean_z0: f64,
    pub var_z0: f64,
    pub mean_z1: f64,
    pub var_z1: f64,
    pub cov_z0_z1: f64,
    pub quadrature_error: QuadratureErrors,
}

impl MomentReport {
    pub fn at(params: &ModelParams, t: f64, tol: Tolerance) -> Result<Self> {
        let v1 = var_z1(params, t, tol)?;
        let c = cov_z0_z1(params, t, t, tol)?;
        Ok(MomentReport {
            time: t,
            mean_z0: mean_z0(params, t),
            var_z0: var_z0(params, t),
            mean_z1: mean_z1(params, t),
            var_z1: v1.value,
            cov_z0_z1: c.value,
            quadrature_error: QuadratureErrors {
                var_z1: v1.error,
                cov_z0_z1: c.error,
            },
        })
    }
}
