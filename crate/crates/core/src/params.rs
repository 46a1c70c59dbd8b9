//! Model parameters for the sensitive/resistant branching system.
//!
//! The sensitive population is a subcritical linear birth-death process
//! started from `x` cells. Every sensitive cell throws off resistant mutants
//! at rate `mu_x = mu * x^-alpha`; each mutant founds an independent
//! supercritical birth-death clone. All derived constants are computed once
//! at construction and never change afterwards.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which closed form of the Yaglom constant to use.
///
/// `Paper` is `(d0 - r0) / r0`. `Fitted` is `(d0 - r0) / d0`, the form
/// selected by fitting the Gumbel law to simulated extinction times (see the
/// acceptance suite). For a pure-death sensitive population (`r0 = 0`) the
/// `Paper` form is undefined and both modes give the exact value 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YaglomMode {
    #[default]
    Paper,
    Fitted,
}

impl std::str::FromStr for YaglomMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(YaglomMode::Paper),
            "fitted" => Ok(YaglomMode::Fitted),
            other => Err(Error::Config(format!(
                "unknown yaglom_mode {other:?} (expected \"paper\" or \"fitted\")"
            ))),
        }
    }
}

/// Birth and death rates of both populations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub r0: f64,
    pub d0: f64,
    pub r1: f64,
    pub d1: f64,
}

/// Raw user input in the `(mu, alpha)` parameterization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawParams {
    pub x: u64,
    pub rates: Rates,
    pub mu: f64,
    pub alpha: f64,
}

/// Fully validated model parameters together with all derived constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelParams {
    x: u64,
    r0: f64,
    d0: f64,
    r1: f64,
    d1: f64,
    mu: f64,
    alpha: f64,
    lambda0: f64,
    lambda1: f64,
    r: f64,
    mu_x: f64,
    c: f64,
    p_extinct_resistant: f64,
    yaglom_mode: YaglomMode,
}

pub(crate) fn check_rates(rates: &Rates) -> Result<()> {
    let Rates { r0, d0, r1, d1 } = *rates;
    for (name, v) in [("r0", r0), ("d0", d0), ("r1", r1), ("d1", d1)] {
        if !v.is_finite() {
            return Err(Error::InvalidParams(format!("{name} must be finite, got {v}")));
        }
        if v < 0.0 {
            return Err(Error::InvalidParams(format!("{name} must be non-negative, got {v}")));
        }
    }
    if d0 <= r0 {
        return Err(Error::InvalidParams(format!(
            "sensitive not subcritical: need d0 > r0, got r0 = {r0}, d0 = {d0}"
        )));
    }
    if r1 <= d1 {
        return Err(Error::InvalidParams(format!(
            "resistant not supercritical: need r1 > d1, got r1 = {r1}, d1 = {d1}"
        )));
    }
    Ok(())
}

/// Validate raw input and compute every derived constant.
pub fn derive_params(raw: RawParams) -> Result<ModelParams> {
    derive_params_with_mode(raw, YaglomMode::Paper)
}

pub fn derive_params_with_mode(raw: RawParams, mode: YaglomMode) -> Result<ModelParams> {
    let RawParams { x, rates, mu, alpha } = raw;
    check_rates(&rates)?;
    if x < 1 {
        return Err(Error::InvalidParams("x must be at least 1".into()));
    }
    if !alpha.is_finite() || alpha <= 0.0 || alpha >= 1.0 {
        return Err(Error::InvalidParams(format!(
            "alpha out of range: need 0 < alpha < 1, got {alpha}"
        )));
    }
    if !mu.is_finite() || mu < 0.0 {
        return Err(Error::InvalidParams(format!("mu must be non-negative, got {mu}")));
    }
    let Rates { r0, d0, r1, d1 } = rates;
    let lambda0 = r0 - d0;
    let lambda1 = r1 - d1;
    let r = -lambda0;
    let c = match mode {
        YaglomMode::Paper if r0 > 0.0 => r / r0,
        _ => r / d0,
    };
    Ok(ModelParams {
        x,
        r0,
        d0,
        r1,
        d1,
        mu,
        alpha,
        lambda0,
        lambda1,
        r,
        mu_x: mu * (x as f64).powf(-alpha),
        c,
        p_extinct_resistant: d1 / r1,
        yaglom_mode: mode,
    })
}

/// Build parameters when only the per-cell mutation intensity is known.
///
/// Sets `mu = 1` and `alpha = -ln(mu_x) / ln(x)`, so that `mu * x^-alpha`
/// reproduces `mu_x`.
pub fn params_from_mu_x(x: u64, rates: Rates, mu_x: f64, mode: YaglomMode) -> Result<ModelParams> {
    if x < 2 {
        return Err(Error::InvalidParams(format!(
            "params_from_mu_x needs x >= 2, got {x}"
        )));
    }
    if !(mu_x > 0.0 && mu_x < 1.0) {
        return Err(Error::InvalidParams(format!(
            "mu_x must lie in (0, 1), got {mu_x}"
        )));
    }
    let ln_x = (x as f64).ln();
    let alpha = -mu_x.ln() / ln_x;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParams(format!(
            "alpha out of range: mu_x = {mu_x} implies alpha = {alpha}; for x = {x} \
             mu_x must lie in ({:e}, 1)",
            1.0 / x as f64
        )));
    }
    derive_params_with_mode(
        RawParams {
            x,
            rates,
            mu: 1.0,
            alpha,
        },
        mode,
    )
}

impl ModelParams {
    pub fn x(&self) -> u64 {
        self.x
    }
    /// `x` as a float, for formulas.
    pub fn xf(&self) -> f64 {
        self.x as f64
    }
    pub fn ln_x(&self) -> f64 {
        self.xf().ln()
    }
    pub fn r0(&self) -> f64 {
        self.r0
    }
    pub fn d0(&self) -> f64 {
        self.d0
    }
    pub fn r1(&self) -> f64 {
        self.r1
    }
    pub fn d1(&self) -> f64 {
        self.d1
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    /// Net sensitive growth rate (negative).
    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }
    /// Net resistant growth rate (positive).
    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }
    /// Decay rate `|lambda0|`.
    pub fn r(&self) -> f64 {
        self.r
    }
    /// Per-cell mutation intensity.
    pub fn mu_x(&self) -> f64 {
        self.mu_x
    }
    /// Yaglom constant for the sensitive population.
    pub fn c(&self) -> f64 {
        self.c
    }
    /// Extinction probability of a single resistant lineage.
    pub fn p_extinct_resistant(&self) -> f64 {
        self.p_extinct_resistant
    }
    pub fn yaglom_mode(&self) -> YaglomMode {
        self.yaglom_mode
    }
    pub fn rates(&self) -> Rates {
        Rates {
            r0: self.r0,
            d0: self.d0,
            r1: self.r1,
            d1: self.d1,
        }
    }
    pub fn raw(&self) -> RawParams {
        RawParams {
            x: self.x,
            rates: self.rates(),
            mu: self.mu,
            alpha: self.alpha,
        }
    }

    /// Same model with a different initial size; `mu` and `alpha` are kept,
    /// so `mu_x` rescales with `x`.
    pub fn with_x(&self, x: u64) -> Result<ModelParams> {
        derive_params_with_mode(RawParams { x, ..self.raw() }, self.yaglom_mode)
    }

    pub fn with_yaglom_mode(&self, mode: YaglomMode) -> ModelParams {
        derive_params_with_mode(self.raw(), mode).expect("already validated")
    }

    /// Same model with an altered mutation prefactor.
    pub fn with_mu(&self, mu: f64) -> Result<ModelParams> {
        derive_params_with_mode(RawParams { mu, ..self.raw() }, self.yaglom_mode)
    }

    /// The sped-up clock `s_x(t) = ln(x) / r + t`.
    pub fn s_x(&self, t: f64) -> f64 {
        self.ln_x() / self.r + t
    }
}

/// A point `u` on the extinction-scaled clock with time offset `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaledQuery {
    pub u: f64,
    pub t: f64,
    pub s_x_t: f64,
}

impl ScaledQuery {
    pub fn new(params: &ModelParams, u: f64, t: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!("u must lie in [0, 1], got {u}")));
        }
        Ok(ScaledQuery {
            u,
            t,
            s_x_t: params.s_x(t),
        })
    }
}

/// On-disk model configuration (JSON). Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub x: u64,
    pub r0: f64,
    pub d0: f64,
    pub r1: f64,
    pub d1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yaglom_mode: Option<YaglomMode>,
}

impl ModelConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    fn rates(&self) -> Rates {
        Rates {
            r0: self.r0,
            d0: self.d0,
            r1: self.r1,
            d1: self.d1,
        }
    }

    /// Resolve into validated parameters. `mode_override` wins over the
    /// file's `yaglom_mode`.
    pub fn resolve(&self, mode_override: Option<YaglomMode>) -> Result<ModelParams> {
        let mode = mode_override.or(self.yaglom_mode).unwrap_or_default();
        match (self.mu, self.alpha, self.mu_x) {
            (Some(mu), Some(alpha), None) => derive_params_with_mode(
                RawParams {
                    x: self.x,
                    rates: self.rates(),
                    mu,
                    alpha,
                },
                mode,
            ),
            (None, None, Some(mu_x)) => params_from_mu_x(self.x, self.rates(), mu_x, mode),
            _ => Err(Error::Config(
                "give either both `mu` and `alpha`, or `mu_x` alone".into(),
            )),
        }
    }

    pub fn from_params(params: &ModelParams) -> Self {
        ModelConfig {
            x: params.x(),
            r0: params.r0(),
            d0: params.d0(),
            r1: params.r1(),
            d1: params.d1(),
            mu: Some(params.mu()),
            alpha: Some(params.alpha()),
            mu_x: None,
            yaglom_mode: Some(params.yaglom_mode()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig2_top() -> RawParams {
        RawParams {
            x: 100_000,
            rates: Rates {
                r0: 1.0,
                d0: 1.5,
                r1: 2.0,
                d1: 1.0,
            },
            mu: 0.01,
            alpha: 0.5,
        }
    }

    #[test]
    fn fig2_top_derived_constants() {
        let p = derive_params(fig2_top()).unwrap();
        assert_eq!(p.lambda0(), -0.5);
        assert_eq!(p.r(), 0.5);
        assert_eq!(p.lambda1(), 1.0);
        assert_eq!(p.c(), 0.5);
        assert_eq!(p.p_extinct_resistant(), 0.5);
        assert_eq!(p.mu_x(), 0.01 * 100_000f64.powf(-0.5));
        let fitted = p.with_yaglom_mode(YaglomMode::Fitted);
        assert!((fitted.c() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn fig1_pure_death_sensitive() {
        let raw = RawParams {
            x: 1000,
            rates: Rates {
                r0: 0.0,
                d0: 1.0,
                r1: 2.0,
                d1: 0.0,
            },
            mu: 0.01,
            alpha: 0.5,
        };
        let p = derive_params(raw).unwrap();
        assert_eq!(p.lambda0(), -1.0);
        assert_eq!(p.lambda1(), 2.0);
        assert_eq!(p.p_extinct_resistant(), 0.0);
        assert_eq!(p.c(), 1.0);
    }

    #[test]
    fn rejects_boundary_alpha() {
        let raw = RawParams {
            alpha: 1.0,
            ..fig2_top()
        };
        let err = derive_params(raw).unwrap_err().to_string();
        assert!(err.contains("alpha out of range"), "{err}");
    }

    #[test]
    fn rejects_non_subcritical_and_non_supercritical() {
        let mut raw = fig2_top();
        raw.rates.d0 = 1.0;
        let err = derive_params(raw).unwrap_err().to_string();
        assert!(err.contains("sensitive not subcritical"), "{err}");

        let mut raw = fig2_top();
        raw.rates.d1 = 2.0;
        let err = derive_params(raw).unwrap_err().to_string();
        assert!(err.contains("resistant not supercritical"), "{err}");
    }

    #[test]
    fn derive_is_idempotent() {
        let p = derive_params(fig2_top()).unwrap();
        assert_eq!(derive_params(p.raw()).unwrap(), p);
    }

    #[test]
    fn mu_x_parameterization() {
        let rates = fig2_top().rates;
        let p = params_from_mu_x(1_000_000_000, rates, 1e-8, YaglomMode::Paper).unwrap();
        assert!((p.alpha() - 8.0 / 9.0).abs() < 1e-12);
        assert_eq!(p.mu(), 1.0);
        assert!((p.mu_x() / 1e-8 - 1.0).abs() < 1e-12);

        let p = params_from_mu_x(10_000, rates, 1e-2, YaglomMode::Paper).unwrap();
        assert!((p.alpha() - 0.5).abs() < 1e-12);

        let err = params_from_mu_x(10, rates, 1e-2, YaglomMode::Paper)
            .unwrap_err()
            .to_string();
        assert!(err.contains("alpha out of range") && err.contains("(1e-1, 1)"), "{err}");
    }

    #[test]
    fn config_rejects_unknown_keys_and_mixed_mutation_inputs() {
        let ok = r#"{"x": 1000, "r0": 0, "d0": 1, "r1": 2, "d1": 0, "mu": 0.01, "alpha": 0.5}"#;
        let p = ModelConfig::from_json_str(ok).unwrap().resolve(None).unwrap();
        assert_eq!(p.x(), 1000);

        let unknown = r#"{"x": 1000, "r0": 0, "d0": 1, "r1": 2, "d1": 0, "mu": 0.01, "alpha": 0.5, "beta": 1}"#;
        assert!(ModelConfig::from_json_str(unknown).is_err());

        let mixed = r#"{"x": 1000, "r0": 0, "d0": 1, "r1": 2, "d1": 0, "mu": 0.01, "mu_x": 0.001}"#;
        let err = ModelConfig::from_json_str(mixed).unwrap().resolve(None).unwrap_err();
        assert!(err.is_validation());

        let fitted = r#"{"x": 10000, "r0": 1, "d0": 1.5, "r1": 2, "d1": 1, "mu_x": 0.01, "yaglom_mode": "fitted"}"#;
        let p = ModelConfig::from_json_str(fitted).unwrap().resolve(None).unwrap();
        assert_eq!(p.yaglom_mode(), YaglomMode::Fitted);
        let p = ModelConfig::from_json_str(fitted)
            .unwrap()
            .resolve(Some(YaglomMode::Paper))
            .unwrap();
        assert_eq!(p.c(), 0.5);
    }

    #[test]
    fn scaled_query_clock() {
        let p = derive_params(fig2_top()).unwrap();
        let q = ScaledQuery::new(&p, 0.3, 1.25).unwrap();
        assert_eq!(q.s_x_t, (1.0 / p.r()) * p.ln_x() + 1.25);
        assert!(ScaledQuery::new(&p, 1.5, 0.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn mu_x_round_trip(x in 2u64..1_000_000_000, alpha in 0.05f64..0.95, mu in 0.1f64..0.99) {
                let rates = Rates { r0: 1.0, d0: 1.5, r1: 2.0, d1: 1.0 };
                let p = derive_params(RawParams { x, rates, mu, alpha }).unwrap();
                prop_assume!(p.mu_x() < 1.0 && p.mu_x() > 1.0 / x as f64);
                let q = params_from_mu_x(x, rates, p.mu_x(), YaglomMode::Paper).unwrap();
                prop_assert!((q.mu_x() / p.mu_x() - 1.0).abs() < 1e-12);
            }

            #[test]
            fn derived_identities(r0 in 0.0f64..3.0, gap0 in 0.01f64..3.0, d1 in 0.0f64..3.0, gap1 in 0.01f64..3.0) {
                let rates = Rates { r0, d0: r0 + gap0, r1: d1 + gap1, d1 };
                for mode in [YaglomMode::Paper, YaglomMode::Fitted] {
                    let p = derive_params_with_mode(
                        RawParams { x: 1000, rates, mu: 0.01, alpha: 0.5 }, mode).unwrap();
                    prop_assert_eq!(p.lambda0() + p.r(), 0.0);
                    prop_assert_eq!(p.lambda1(), rates.r1 - rates.d1);
                    prop_assert!(p.c() > 0.0 && p.c().is_finite());
                    prop_assert!((0.0..1.0).contains(&p.p_extinct_resistant()));
                }
            }
        }
    }
}
