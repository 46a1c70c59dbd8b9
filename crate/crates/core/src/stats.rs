//! Sample statistics used to compare simulations with theory.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::limits::{Gumbel, EULER_GAMMA};
use crate::params::ModelParams;

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

/// Kolmogorov-Smirnov distance `sup |F_n - F|` against a continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let v = sorted(samples);
    let n = v.len() as f64;
    v.iter().enumerate().fold(0.0, |d, (i, &s)| {
        let f = cdf(s);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

pub fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Unbiased sample variance.
pub fn variance(samples: &[f64]) -> f64 {
    let m = mean(samples);
    samples.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (samples.len() as f64 - 1.0)
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(samples: &[f64], p: f64) -> f64 {
    let v = sorted(samples);
    quantile_sorted(&v, p)
}

pub fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    let h = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn median(samples: &[f64]) -> f64 {
    quantile(samples, 0.5)
}

/// Moment-matching Gumbel fit.
pub fn gumbel_fit(samples: &[f64]) -> Result<Gumbel> {
    if samples.len() < 100 {
        return Err(Error::Statistics(format!(
            "gumbel fit needs at least 100 samples, got {}",
            samples.len()
        )));
    }
    let sd = variance(samples).sqrt();
    if !(sd > 0.0) {
        return Err(Error::Statistics("degenerate sample: zero variance".into()));
    }
    let scale = sd * 6f64.sqrt() / std::f64::consts::PI;
    Ok(Gumbel::new(mean(samples) - EULER_GAMMA * scale, scale))
}

/// Yaglom constant implied by a Gumbel fit of extinction times.
pub fn yaglom_from_fit(fit: &Gumbel, params: &ModelParams) -> f64 {
    (params.r() * fit.location - params.ln_x()).exp()
}

/// Hill estimate of the tail index from the top `k` order statistics.
///
/// Non-positive samples are dropped. `k` defaults to `n^(2/3)` of the
/// positive samples.
pub fn hill_tail_index(samples: &[f64], k: Option<usize>) -> Result<f64> {
    let mut v: Vec<f64> = samples.iter().copied().filter(|&s| s > 0.0).collect();
    let n = v.len();
    let k = k.unwrap_or_else(|| (n as f64).powf(2.0 / 3.0) as usize);
    if k < 10 {
        return Err(Error::Statistics(format!("hill estimator needs k >= 10, got {k}")));
    }
    if 2 * k >= n {
        return Err(Error::Statistics(format!(
            "hill estimator needs k < n/2, got k = {k} with {n} positive samples"
        )));
    }
    v.sort_unstable_by(|a, b| b.total_cmp(a));
    let threshold = v[k].ln();
    let gamma = v[..k].iter().map(|s| s.ln() - threshold).sum::<f64>() / k as f64;
    Ok(1.0 / gamma)
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn slope_regression(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::Statistics(format!(
            "slope regression needs at least 3 paired points, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(Error::Statistics("slope regression needs positive inputs".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Statistics("slope regression needs distinct x values".into()));
    }
    Ok(sxy / sxx)
}

/// Fixed-width density histogram.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
}

impl Histogram {
    /// `bins` equal bins over the central 99% of the sample. Densities are
    /// normalized by the full sample size.
    pub fn central(samples: &[f64], bins: usize) -> Result<Self> {
        if samples.is_empty() || bins == 0 {
            return Err(Error::Statistics("histogram needs samples and at least one bin".into()));
        }
        let v = sorted(samples);
        let (lo, hi) = (quantile_sorted(&v, 0.005), quantile_sorted(&v, 0.995));
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let mut counts = vec![0usize; bins];
        for &s in &v {
            if s < lo || s > hi {
                continue;
            }
            let b = (((s - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let n = v.len() as f64;
        Ok(Histogram {
            edges: (0..=bins).map(|i| lo + i as f64 * width).collect(),
            density: counts.iter().map(|&c| c as f64 / (n * width)).collect(),
        })
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1]))
    }
}
