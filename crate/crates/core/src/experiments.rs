//! Monte Carlo ensembles and their comparison with the limit theory.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limits::{self, extinction_time_law, Gumbel, UstarLaw};
use crate::params::{ModelConfig, ModelParams, ScaledQuery};
use crate::rng::replicate_seed;
use crate::simulator::{
    simulate_exact_with, simulate_hybrid_with, HybridControl, PathMarks, PathRecord, Recording, StopPolicy,
};
use crate::stats;

/// Simulation engine selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    Exact,
    Hybrid(HybridControl),
}

impl SimMode {
    pub fn name(&self) -> &'static str {
        match self {
            SimMode::Exact => "exact",
            SimMode::Hybrid(_) => "hybrid",
        }
    }
}

pub fn simulate(
    params: &ModelParams,
    seed: u64,
    policy: &StopPolicy,
    mode: &SimMode,
    recording: Recording,
) -> Result<PathRecord> {
    match mode {
        SimMode::Exact => simulate_exact_with(params, seed, policy, recording),
        SimMode::Hybrid(control) => simulate_hybrid_with(params, seed, policy, control, recording),
    }
}

/// Evaluate `f` on the seeds of replicates `0..n`, in parallel, keeping
/// replicate order.
pub fn map_seeds<T, F>(n: usize, master_seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| f(replicate_seed(master_seed, i as u64)))
        .collect()
}

/// Simulate `n` replicates and reduce each path with `f` as soon as it is
/// produced, so full paths never accumulate.
#[allow(clippy::too_many_arguments)]
pub fn run_replicates<T, F>(
    params: &ModelParams,
    n: usize,
    master_seed: u64,
    policy: &StopPolicy,
    mode: &SimMode,
    recording: Recording,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(PathRecord) -> Result<T> + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            let seed = replicate_seed(master_seed, i as u64);
            simulate(params, seed, policy, mode, recording)
                .and_then(&f)
                .map_err(|e| Error::Replicate {
                    index: i,
                    source: Box::new(e),
                })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtinctionStats {
    pub n: usize,
    pub fit: Gumbel,
    /// Yaglom constant implied by the fitted location.
    pub c_fitted: f64,
    /// KS distance of `Tx` to the asymptotic Gumbel law.
    pub ks: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TurnaroundStats {
    /// Rebound paths used (escaped, positive minimum, known `Tx`).
    pub n: usize,
    pub median_ratio: f64,
    /// KS distance of `tau_first / Tx` to the `u*` law.
    pub ks: f64,
    /// Fraction with both `tau_first / Tx` and `tau_last / Tx` within 0.1 of
    /// `u*` at the path's own `Tx`.
    pub band_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossoverStats {
    /// Escaped paths with known `Tx`.
    pub n: usize,
    pub median_ratio: f64,
    /// Median of `|xi / Tx - ũ(Tx)|`.
    pub median_abs_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnsembleStatistics {
    pub n_extinct: usize,
    pub n_escaped: usize,
    pub extinction: Option<ExtinctionStats>,
    pub turnaround: Option<TurnaroundStats>,
    pub crossover: Option<CrossoverStats>,
}

/// Replicate marks of one ensemble plus derived statistics.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleSummary {
    pub n_replicates: usize,
    pub master_seed: u64,
    pub mode: SimMode,
    pub params: ModelConfig,
    pub policy: StopPolicy,
    #[serde(skip)]
    pub marks: Vec<PathMarks>,
    #[serde(skip)]
    pub paths: Option<Vec<PathRecord>>,
    pub statistics: EnsembleStatistics,
}

pub fn run_ensemble(
    params: &ModelParams,
    n: usize,
    master_seed: u64,
    policy: &StopPolicy,
    mode: &SimMode,
    retain_paths: bool,
) -> Result<EnsembleSummary> {
    if n == 0 {
        return Err(Error::Config("ensemble needs at least one replicate".into()));
    }
    let (marks, paths) = if retain_paths {
        let paths = run_replicates(params, n, master_seed, policy, mode, Recording::Full, Ok)?;
        (paths.iter().map(|p| p.marks).collect(), Some(paths))
    } else {
        let marks = run_replicates(params, n, master_seed, policy, mode, Recording::Endpoints, |p| Ok(p.marks))?;
        (marks, None)
    };
    Ok(EnsembleSummary {
        n_replicates: n,
        master_seed,
        mode: *mode,
        params: ModelConfig::from_params(params),
        policy: *policy,
        statistics: summarize(params, &marks),
        marks,
        paths,
    })
}

/// Rebound paths: escaped through a real crossing, never hit zero, and with
/// a known extinction time.
pub fn is_rebound(m: &PathMarks) -> bool {
    m.crossover_escaped && m.min_total > 0 && m.t_extinct_sensitive.is_some()
}

pub fn summarize(params: &ModelParams, marks: &[PathMarks]) -> EnsembleStatistics {
    let txs: Vec<f64> = marks.iter().filter_map(|m| m.t_extinct_sensitive).collect();
    let extinction = stats::gumbel_fit(&txs).ok().map(|fit| {
        let law = extinction_time_law(params);
        ExtinctionStats {
            n: txs.len(),
            fit,
            c_fitted: stats::yaglom_from_fit(&fit, params),
            ks: stats::ks_statistic(&txs, |t| law.cdf(t)),
        }
    });

    let rebound: Vec<&PathMarks> = marks.iter().filter(|m| is_rebound(m)).collect();
    let turnaround = UstarLaw::new(params).ok().filter(|_| !rebound.is_empty()).map(|law| {
        let k = law.k;
        let ratios: Vec<f64> = rebound
            .iter()
            .map(|m| m.turnaround_first / m.t_extinct_sensitive.unwrap())
            .collect();
        let inside = rebound
            .iter()
            .filter(|m| {
                let tx = m.t_extinct_sensitive.unwrap();
                let u = k / tx;
                (m.turnaround_first / tx - u).abs() <= 0.1 && (m.turnaround_last / tx - u).abs() <= 0.1
            })
            .count();
        TurnaroundStats {
            n: rebound.len(),
            median_ratio: stats::median(&ratios),
            ks: stats::ks_statistic(&ratios, |w| law.cdf(w)),
            band_fraction: inside as f64 / rebound.len() as f64,
        }
    });

    let escaped: Vec<(f64, f64)> = marks
        .iter()
        .filter(|m| m.crossover_escaped)
        .filter_map(|m| Some((m.crossover?, m.t_extinct_sensitive?)))
        .collect();
    let crossover = if escaped.is_empty() || params.mu() == 0.0 {
        None
    } else {
        let ratios: Vec<f64> = escaped.iter().map(|(xi, tx)| xi / tx).collect();
        let gaps: Vec<f64> = escaped
            .iter()
            .map(|&(xi, tx)| (xi / tx - limits::crossover_estimate(params, tx).unwrap_or(f64::NAN)).abs())
            .collect();
        Some(CrossoverStats {
            n: escaped.len(),
            median_ratio: stats::median(&ratios),
            median_abs_gap: stats::median(&gaps),
        })
    };

    EnsembleStatistics {
        n_extinct: txs.len(),
        n_escaped: marks.iter().filter(|m| m.crossover_escaped).count(),
        extinction,
        turnaround,
        crossover,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|t| t.to_string()).unwrap_or_default()
}

/// Write the marks table, one row per replicate.
pub fn write_marks_csv<W: std::io::Write>(marks: &[PathMarks], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "replicate",
        "seed",
        "t_extinct",
        "xi",
        "escaped",
        "tau_first",
        "tau_last",
        "min_total",
        "stop_reason",
    ])?;
    for (i, m) in marks.iter().enumerate() {
        w.write_record(&[
            i.to_string(),
            m.seed.to_string(),
            opt(m.t_extinct_sensitive),
            opt(m.crossover),
            m.crossover_escaped.to_string(),
            m.turnaround_first.to_string(),
            m.turnaround_last.to_string(),
            m.min_total.to_string(),
            m.stop_reason.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Scaled sup-norm distances of one path from the deterministic means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupNorm {
    /// Over `u` in `[0, 0.9]`.
    pub e0: f64,
    /// Over `u` in `[0, 1]`.
    pub e1: f64,
}

/// Distances of `x^(u-1) Z0(u Tx)` and `x^(alpha - u lambda1/r - 1) Z1(u Tx)`
/// from `phi0`, `phi1` at `t = Tx - ln(x)/r`, on a `u` grid of spacing
/// `grid_step`.
pub fn sup_norm_error(path: &PathRecord, params: &ModelParams, grid_step: f64) -> Result<SupNorm> {
    let tx = path
        .marks
        .t_extinct_sensitive
        .ok_or_else(|| Error::Domain("path has no sensitive extinction time".into()))?;
    if path.final_state.time < tx {
        return Err(Error::Domain("path stops before the sensitive extinction time".into()));
    }
    if !(grid_step > 0.0 && grid_step <= 0.5) {
        return Err(Error::Domain(format!("grid step must lie in (0, 0.5], got {grid_step}")));
    }
    let t = tx - params.ln_x() / params.r();
    let steps = (1.0 / grid_step).round() as usize;
    let (x, alpha, k) = (params.xf(), params.alpha(), params.lambda1() / params.r());
    let mut out = SupNorm { e0: 0.0, e1: 0.0 };
    for i in 0..=steps {
        let u = i as f64 / steps as f64;
        let q = ScaledQuery::new(params, u, t)?;
        let state = path.state_at(u * tx);
        if u <= 0.9 + 1e-12 {
            let d = (x.powf(u - 1.0) * state.z0 as f64 - limits::phi0(&q, params)).abs();
            out.e0 = out.e0.max(d);
        }
        let d = (x.powf(alpha - u * k - 1.0) * state.z1 as f64 - limits::phi1(&q, params)).abs();
        out.e1 = out.e1.max(d);
    }
    Ok(out)
}

/// One empirical-versus-theoretical check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub statistic: String,
    pub empirical: f64,
    pub theoretical: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Comparison {
    fn abs(statistic: &str, empirical: f64, theoretical: f64, tolerance: f64) -> Self {
        Comparison {
            statistic: statistic.into(),
            empirical,
            theoretical,
            tolerance,
            pass: (empirical - theoretical).abs() <= tolerance,
        }
    }

    fn at_most(statistic: &str, empirical: f64, bound: f64) -> Self {
        Comparison {
            statistic: statistic.into(),
            empirical,
            theoretical: 0.0,
            tolerance: bound,
            pass: empirical <= bound,
        }
    }

    fn at_least(statistic: &str, empirical: f64, bound: f64) -> Self {
        Comparison {
            statistic: statistic.into(),
            empirical,
            theoretical: 1.0,
            tolerance: bound,
            pass: empirical >= bound,
        }
    }
}

/// Checks of an ensemble against the limit laws at the default tolerances.
pub fn compare_ensemble(summary: &EnsembleSummary, params: &ModelParams) -> Vec<Comparison> {
    let mut out = Vec::new();
    let s = &summary.statistics;
    if let Some(e) = &s.extinction {
        let scale = 1.0 / params.r();
        out.push(Comparison::abs("gumbel_scale", e.fit.scale, scale, 0.05 * scale));
        out.push(Comparison::abs("yaglom_constant", e.c_fitted, params.c(), 0.1 * params.c()));
        out.push(Comparison::at_most("ks_extinction_time", e.ks, 0.05));
    }
    if let Some(t) = &s.turnaround {
        out.push(Comparison::at_most("ks_turnaround_ratio", t.ks, 0.08));
        out.push(Comparison::at_least("turnaround_band_fraction", t.band_fraction, 0.95));
    }
    if let Some(c) = &s.crossover {
        out.push(Comparison::at_most("median_crossover_gap", c.median_abs_gap, 0.05));
    }
    out
}

pub fn write_comparisons_csv<W: std::io::Write>(rows: &[Comparison], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive_params, Rates, RawParams};
    use crate::simulator::{simulate_exact, PathEvent, StopReason};

    fn fig2_top(x: u64) -> ModelParams {
        derive_params(RawParams {
            x,
            rates: Rates {
                r0: 1.0,
                d0: 1.5,
                r1: 2.0,
                d1: 1.0,
            },
            mu: 0.01,
            alpha: 0.5,
        })
        .unwrap()
    }

    #[test]
    fn single_replicate_equals_direct_call() {
        let p = fig2_top(500);
        let policy = StopPolicy::default();
        let s = run_ensemble(&p, 1, 42, &policy, &SimMode::Exact, true).unwrap();
        let direct = simulate_exact(&p, replicate_seed(42, 0), &policy).unwrap();
        assert_eq!(s.paths.as_ref().unwrap()[0], direct);
        assert_eq!(s.marks[0], direct.marks);
    }

    #[test]
    fn doubling_n_keeps_prefix() {
        let p = fig2_top(300);
        let policy = StopPolicy::default();
        let a = run_ensemble(&p, 20, 5, &policy, &SimMode::Exact, false).unwrap();
        let b = run_ensemble(&p, 40, 5, &policy, &SimMode::Exact, false).unwrap();
        assert_eq!(a.marks[..], b.marks[..20]);
        let h = SimMode::Hybrid(HybridControl::default());
        let c = run_ensemble(&p, 20, 5, &policy, &h, false).unwrap();
        let d = run_ensemble(&p, 20, 5, &policy, &h, false).unwrap();
        assert_eq!(c.marks, d.marks);
    }

    #[test]
    fn replicate_errors_carry_index() {
        let p = fig2_top(100);
        let bad = StopPolicy {
            horizon: -1.0,
            ..Default::default()
        };
        let err = run_ensemble(&p, 3, 1, &bad, &SimMode::Exact, false).unwrap_err();
        assert!(matches!(err, Error::Replicate { index: 0, .. }));
        assert!(err.is_validation());
        assert!(run_ensemble(&p, 0, 1, &StopPolicy::default(), &SimMode::Exact, false).is_err());
    }

    #[test]
    fn marks_csv_layout() {
        let p = fig2_top(200);
        let s = run_ensemble(&p, 3, 9, &StopPolicy::default(), &SimMode::Exact, false).unwrap();
        let mut buf = Vec::new();
        write_marks_csv(&s.marks, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "replicate,seed,t_extinct,xi,escaped,tau_first,tau_last,min_total,stop_reason");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with(&format!("0,{},", replicate_seed(9, 0))));
    }

    #[test]
    fn extinction_scale_from_simulation() {
        let p = fig2_top(10_000);
        let txs = map_seeds(10_000, 3, |seed| crate::simulator::sample_extinction_time(&p, seed, 1e6).unwrap());
        let fit = stats::gumbel_fit(&txs).unwrap();
        assert!((fit.scale / 2.0 - 1.0).abs() < 0.05, "{fit:?}");
    }

    fn surrogate(p: &ModelParams) -> PathRecord {
        // deterministic mean path with Tx at ln(x)/r
        let tx = p.ln_x() / p.r();
        let steps = 20_000;
        let events: Vec<PathEvent> = (0..=steps)
            .map(|i| {
                let time = if i == steps { tx } else { tx * i as f64 / steps as f64 };
                let z0 = if i == steps { 0 } else { (p.xf() * (p.lambda0() * time).exp()).round() as u64 };
                PathEvent { time, z0, z1: 0 }
            })
            .collect();
        let final_state = *events.last().unwrap();
        PathRecord {
            events,
            marks: PathMarks {
                t_extinct_sensitive: Some(tx),
                crossover: Some(tx),
                crossover_escaped: false,
                turnaround_first: tx,
                turnaround_last: tx,
                min_total: 0,
                stop_reason: StopReason::TotalExtinction,
                seed: 0,
            },
            final_state,
        }
    }

    #[test]
    fn sup_norm_of_rounded_mean_path() {
        for x in [1000u64, 100_000] {
            let p = fig2_top(x).with_mu(0.0).unwrap();
            let e = sup_norm_error(&surrogate(&p), &p, 1e-3).unwrap();
            assert!(e.e0 <= 2.0 * (x as f64).powf(-0.1), "x {x}: {e:?}");
            assert_eq!(e.e1, 0.0);
        }
    }

    #[test]
    fn sup_norm_on_mutation_free_simulation() {
        let p = fig2_top(2000).with_mu(0.0).unwrap();
        let path = simulate_exact(&p, 1, &StopPolicy::to_sensitive_extinction()).unwrap();
        let e = sup_norm_error(&path, &p, 1e-3).unwrap();
        assert_eq!(e.e1, 0.0);
        assert!(e.e0 > 0.0 && e.e0.is_finite());
    }

    #[test]
    fn sup_norm_needs_extinction() {
        let p = fig2_top(2000);
        let path = simulate_exact(&p, 1, &StopPolicy::to_horizon(1.0)).unwrap();
        assert!(sup_norm_error(&path, &p, 1e-3).is_err());
    }

    #[test]
    fn comparisons_round_trip_to_csv() {
        let p = fig2_top(1000);
        let s = run_ensemble(&p, 200, 2, &StopPolicy::default(), &SimMode::Exact, false).unwrap();
        let rows = compare_ensemble(&s, &p);
        assert!(rows.iter().any(|r| r.statistic == "ks_extinction_time"));
        let mut buf = Vec::new();
        write_comparisons_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("statistic,empirical,theoretical,tolerance,pass"));
        let json = serde_json::to_value(&s).unwrap();
        assert_eq!(json["n_replicates"], 200);
        assert_eq!(json["mode"], "exact");
    }
}
