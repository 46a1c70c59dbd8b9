//! Simulation and limit theory for a subcritical sensitive population that
//! seeds a supercritical resistant one through rare mutations.
//!
//! The sensitive population `Z0` starts at `x` cells and has birth rate
//! `r0 < d0`; each sensitive cell mutates at rate `mu * x^-alpha`. Resistant
//! cells `Z1` grow with birth rate `r1 > d1`. As `x` grows, on the time scale
//! `s_x(t) = t ln x` the rescaled populations converge to explicit limits.

pub mod error;
pub mod experiments;
pub mod limits;
pub mod moments;
pub mod params;
pub mod quad;
pub mod rng;
pub mod scenario;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};
pub use params::{derive_params, ModelConfig, ModelParams, Rates, RawParams, ScaledQuery, YaglomMode};
