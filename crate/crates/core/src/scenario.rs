//! Concentration-indexed rate tables and the clinical read-outs built on
//! them: per-concentration `u*` distributions, the eradication time implied
//! by an observed turnaround, and the resistant burden at eradication.
//!
//! Rates are per hour throughout.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::limits::{ustar_leading, ResistantBurdenLaw, UstarLaw};
use crate::params::{check_rates, params_from_mu_x, ModelConfig, ModelParams, Rates, YaglomMode};

const HEADER: [&str; 5] = ["concentration", "r0", "d0", "r1", "d1"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateRow {
    /// Drug concentration in μM.
    pub concentration: f64,
    pub rates: Rates,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
    /// Text of the `#` comment lines.
    pub provenance: Vec<String>,
}

impl RateTable {
    pub fn parse(text: &str) -> Result<Self> {
        let provenance = text
            .lines()
            .filter_map(|l| l.trim_start().strip_prefix('#'))
            .map(|l| l.trim().to_string())
            .collect();
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .has_headers(true)
            .from_reader(text.as_bytes());
        let header_line = reader.position().line().max(1) as usize;
        let headers = reader.headers()?.clone();
        if headers.iter().ne(HEADER.iter().copied()) {
            return Err(Error::RateTable {
                line: header_line,
                message: format!("expected header `{}`, got `{}`", HEADER.join(","), headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut rows: Vec<RateRow> = Vec::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
            let mut values = [0.0f64; 5];
            for (k, field) in record.iter().enumerate().take(5) {
                values[k] = field.parse().map_err(|_| Error::RateTable {
                    line,
                    message: format!("column `{}`: cannot parse `{field}` as a number", HEADER[k]),
                })?;
            }
            if record.len() != 5 {
                return Err(Error::RateTable {
                    line,
                    message: format!("expected 5 columns, got {}", record.len()),
                });
            }
            let [concentration, r0, d0, r1, d1] = values;
            let rates = Rates { r0, d0, r1, d1 };
            check_rates(&rates).map_err(|e| Error::RateTable {
                line,
                message: match e {
                    Error::InvalidParams(m) => m,
                    other => other.to_string(),
                },
            })?;
            if let Some(prev) = rows.last() {
                if concentration <= prev.concentration {
                    return Err(Error::RateTable {
                        line,
                        message: format!(
                            "concentrations must be strictly increasing: {concentration} follows {}",
                            prev.concentration
                        ),
                    });
                }
            }
            rows.push(RateRow { concentration, rates });
        }
        if rows.is_empty() {
            return Err(Error::RateTable {
                line: text.lines().count(),
                message: "no data rows".into(),
            });
        }
        Ok(RateTable { rows, provenance })
    }
}

pub fn load_rate_table(path: &Path) -> Result<RateTable> {
    RateTable::parse(&std::fs::read_to_string(path)?)
}

/// Density of `u*` on a grid for one concentration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UstarCurve {
    pub concentration: f64,
    pub params: ModelConfig,
    pub ustar_leading: f64,
    pub w: Vec<f64>,
    pub pdf: Vec<f64>,
}

impl UstarCurve {
    /// Grid point of the largest density.
    pub fn mode(&self) -> f64 {
        let i = self
            .pdf
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.w[i]
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["w", "pdf"])?;
        for (a, b) in self.w.iter().zip(&self.pdf) {
            w.write_record(&[a.to_string(), b.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn row_params(row: &RateRow, x: u64, mu_x: f64) -> Result<ModelParams> {
    params_from_mu_x(x, row.rates, mu_x, YaglomMode::Paper)
}

/// `u*` densities on `points` grid values spanning the central 99.99% of
/// each row's distribution.
pub fn ustar_curves(table: &RateTable, x: u64, mu_x: f64, points: usize) -> Result<Vec<UstarCurve>> {
    if points < 2 {
        return Err(Error::Config("a curve needs at least two grid points".into()));
    }
    table
        .rows
        .iter()
        .map(|row| {
            let params = row_params(row, x, mu_x)?;
            let law = UstarLaw::new(&params)?;
            let (lo, hi) = (law.quantile(0.00005), law.quantile(0.99995));
            let w: Vec<f64> = (0..points)
                .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
                .collect();
            let pdf = w.iter().map(|&v| law.pdf(v)).collect();
            Ok(UstarCurve {
                concentration: row.concentration,
                params: ModelConfig::from_params(&params),
                ustar_leading: ustar_leading(&params),
                w,
                pdf,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TxInference {
    pub tx_estimate: f64,
    /// Central 95% interval from the `u*` law.
    pub tx_interval: (f64, f64),
}

/// Eradication time implied by an observed turnaround time.
pub fn infer_tx_from_tau(tau_observed: f64, params: &ModelParams) -> Result<TxInference> {
    if !(tau_observed >= 0.0) || !tau_observed.is_finite() {
        return Err(Error::Domain(format!("observed turnaround must be non-negative, got {tau_observed}")));
    }
    let law = UstarLaw::new(params)?;
    Ok(TxInference {
        tx_estimate: tau_observed / ustar_leading(params),
        tx_interval: (tau_observed / law.quantile(0.975), tau_observed / law.quantile(0.025)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BurdenSummary {
    pub median: f64,
    /// 5% and 95% quantiles.
    pub interval: (f64, f64),
    pub log10_median: f64,
    pub log10_interval: (f64, f64),
}

/// Resistant burden at sensitive extinction under the large-x law.
pub fn projected_burden(params: &ModelParams) -> BurdenSummary {
    let law = ResistantBurdenLaw::new(params);
    let (median, lo, hi) = (law.median(), law.quantile(0.05), law.quantile(0.95));
    BurdenSummary {
        median,
        interval: (lo, hi),
        log10_median: median.log10(),
        log10_interval: (lo.log10(), hi.log10()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limits::{ustar_pdf, Gumbel};
    use crate::quad::{integrate_pieces, Tolerance};

    const TABLE: &str = "\
# illustrative rates, per hour
concentration,r0,d0,r1,d1
1,0.020,0.028,0.033,0.004
3,0.017,0.031,0.032,0.004
5,0.015,0.033,0.031,0.005
10,0.012,0.036,0.030,0.005
";

    fn line_of(err: Error) -> (usize, String) {
        match err {
            Error::RateTable { line, message } => (line, message),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn parses_well_formed_table() {
        let t = RateTable::parse(TABLE).unwrap();
        assert_eq!(t.rows.len(), 4);
        assert_eq!(t.rows.iter().map(|r| r.concentration).collect::<Vec<_>>(), [1.0, 3.0, 5.0, 10.0]);
        assert_eq!(t.rows[2].rates.d0, 0.033);
        assert_eq!(t.provenance, ["illustrative rates, per hour"]);
    }

    #[test]
    fn rejects_bad_rows_with_line_numbers() {
        let bad = TABLE.replace("5,0.015,0.033", "5,0.040,0.033");
        let (line, message) = line_of(RateTable::parse(&bad).unwrap_err());
        assert_eq!(line, 5);
        assert!(message.contains("sensitive not subcritical"), "{message}");

        let unsorted = TABLE.replace("10,0.012", "4,0.012");
        let (line, message) = line_of(RateTable::parse(&unsorted).unwrap_err());
        assert_eq!(line, 6);
        assert!(message.contains("strictly increasing"));

        let garbled = TABLE.replace("0.031,0.032", "abc,0.032");
        assert_eq!(line_of(RateTable::parse(&garbled).unwrap_err()).0, 4);

        let (_, message) = line_of(RateTable::parse("concentration,r0,d0,r1,d1\n").unwrap_err());
        assert_eq!(message, "no data rows");
        assert!(RateTable::parse("").is_err());
        assert!(matches!(
            RateTable::parse("conc,a,b,c,d\n1,1,2,3,1\n"),
            Err(Error::RateTable { line: 1, .. })
        ));
    }

    #[test]
    fn curve_modes_follow_leading_order_turnaround() {
        let t = RateTable::parse(TABLE).unwrap();
        let curves = ustar_curves(&t, 1_000_000_000, 1e-8, 2000).unwrap();
        assert_eq!(curves.len(), 4);
        let modes: Vec<f64> = curves.iter().map(|c| c.mode()).collect();
        let leading: Vec<f64> = curves.iter().map(|c| c.ustar_leading).collect();
        let mut by_mode: Vec<usize> = (0..4).collect();
        by_mode.sort_by(|&a, &b| modes[a].total_cmp(&modes[b]));
        let mut by_leading: Vec<usize> = (0..4).collect();
        by_leading.sort_by(|&a, &b| leading[a].total_cmp(&leading[b]));
        assert_eq!(by_mode, by_leading);
        assert!((curves[0].params.alpha.unwrap() - 8.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn curves_are_normalized_densities() {
        let t = RateTable::parse(TABLE).unwrap();
        for row in &t.rows {
            let p = row_params(row, 1_000_000_000, 1e-8).unwrap();
            let law = UstarLaw::new(&p).unwrap();
            let (a, b) = (law.quantile(1e-12), law.quantile(1.0 - 1e-12));
            let mid = law.quantile(0.5);
            let mass = integrate_pieces(|w| law.pdf(w), &[a, mid, b], Tolerance::relative(1e-10)).unwrap();
            assert!((mass.value - 1.0).abs() < 1e-6, "{}", mass.value);
        }
    }

    #[test]
    fn single_row_curve_delegates_to_limit_pdf() {
        let t = RateTable::parse("concentration,r0,d0,r1,d1\n2,0.02,0.03,0.03,0.005\n").unwrap();
        let c = &ustar_curves(&t, 1_000_000, 1e-4, 50).unwrap()[0];
        let p = row_params(&t.rows[0], 1_000_000, 1e-4).unwrap();
        for (w, f) in c.w.iter().zip(&c.pdf) {
            assert_eq!(*f, ustar_pdf(&p, *w).unwrap());
        }
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 51);
    }

    fn params_with_leading(target: f64) -> ModelParams {
        // alpha r / (lambda1 + r) = target with r = 1, lambda1 = 1: alpha = 2 target
        crate::params::derive_params(crate::params::RawParams {
            x: 10_000,
            rates: Rates {
                r0: 1.0,
                d0: 2.0,
                r1: 1.5,
                d1: 0.5,
            },
            mu: 0.01,
            alpha: 2.0 * target,
        })
        .unwrap()
    }

    #[test]
    fn inference_by_hand() {
        let p = params_with_leading(0.25);
        assert!((ustar_leading(&p) - 0.25).abs() < 1e-15);
        let inf = infer_tx_from_tau(100.0, &p).unwrap();
        assert!((inf.tx_estimate - 400.0).abs() < 1e-10);
        assert!(inf.tx_interval.0 < inf.tx_interval.1);
        let zero = infer_tx_from_tau(0.0, &p).unwrap();
        assert_eq!(zero.tx_estimate, 0.0);
        assert_eq!(zero.tx_interval, (0.0, 0.0));
        assert!(infer_tx_from_tau(-1.0, &p).is_err());
    }

    #[test]
    fn inference_is_homogeneous() {
        let p = params_with_leading(0.3);
        let a = infer_tx_from_tau(10.0, &p).unwrap();
        let b = infer_tx_from_tau(37.0, &p).unwrap();
        let s = 3.7;
        assert!((b.tx_estimate / a.tx_estimate - s).abs() < 1e-12);
        assert!((b.tx_interval.0 / a.tx_interval.0 - s).abs() < 1e-12);
        assert!((b.tx_interval.1 / a.tx_interval.1 - s).abs() < 1e-12);
    }

    #[test]
    fn burden_quantiles_are_gumbel_pushforwards() {
        let p = params_with_leading(0.3);
        let law = ResistantBurdenLaw::new(&p);
        let b = projected_burden(&p);
        let g = Gumbel::STANDARD;
        assert!((b.median / law.at_eta(-(2f64.ln()).ln()) - 1.0).abs() < 1e-12);
        assert!((b.interval.0 / law.at_eta(g.quantile(0.05)) - 1.0).abs() < 1e-12);
        assert!((b.interval.1 / law.at_eta(g.quantile(0.95)) - 1.0).abs() < 1e-12);
        assert!((b.log10_median - b.median.log10()).abs() < 1e-12);
    }
}
