//! Globally adaptive Gauss–Kronrod (7, 15) quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Requested accuracy: converged once `error <= max(abs, rel * |value|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs: 0.0,
            rel: 1e-8,
            max_intervals: 2000,
        }
    }
}

impl Tolerance {
    pub fn relative(rel: f64) -> Self {
        Tolerance {
            rel,
            ..Default::default()
        }
    }
}

/// An integral value with its estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    (value, error)
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Integrate `f` over `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
        });
    }
    if b < a {
        let e = integrate(f, b, a, tol)?;
        return Ok(Estimate {
            value: -e.value,
            error: e.error,
        });
    }
    let (value, error) = gk15(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    while total_err > tol.abs.max(tol.rel * total.abs()) {
        if heap.len() >= tol.max_intervals {
            return Err(Error::Quadrature {
                estimate: total_err,
                tolerance: tol.abs.max(tol.rel * total.abs()),
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval cannot be split further in floating point
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk15(&mut f, worst.a, mid);
        let (v2, e2) = gk15(&mut f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }
    // Recompute sums to shed accumulated rounding from the running updates.
    let (value, error) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
    if error > tol.abs.max(tol.rel * value.abs()) * 1.5 {
        return Err(Error::Quadrature {
            estimate: error,
            tolerance: tol.abs.max(tol.rel * value.abs()),
        });
    }
    Ok(Estimate { value, error })
}

/// Integrate over consecutive pieces `[p0, p1], [p1, p2], ...`.
pub fn integrate_pieces<F: FnMut(f64) -> f64>(mut f: F, points: &[f64], tol: Tolerance) -> Result<Estimate> {
    let mut value = 0.0;
    let mut error = 0.0;
    for w in points.windows(2) {
        let e = integrate(&mut f, w[0], w[1], tol)?;
        value += e.value;
        error += e.error;
    }
    Ok(Estimate { value, error })
}

/// Integrate over `[a, inf)` by mapping `s in [0, 1)` to `a + s / (1 - s)`.
pub fn integrate_to_infinity<F: FnMut(f64) -> f64>(mut f: F, a: f64, tol: Tolerance) -> Result<Estimate> {
    integrate(
        |s| {
            if s >= 1.0 {
                return 0.0;
            }
            let one_minus = 1.0 - s;
            let v = f(a + s / one_minus);
            if v == 0.0 {
                0.0
            } else {
                v / (one_minus * one_minus)
            }
        },
        0.0,
        1.0,
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let e = integrate(|x| x.powi(5) - 2.0 * x * x, 0.0, 2.0, Tolerance::default()).unwrap();
        assert!((e.value - (64.0 / 6.0 - 16.0 / 3.0)).abs() < 1e-13);
    }

    #[test]
    fn peaked_and_kinked_integrands() {
        let e = integrate(|x| (-(x - 0.3f64).abs()).exp(), 0.0, 1.0, Tolerance::relative(1e-12)).unwrap();
        let exact = 2.0 - (-0.3f64).exp() - (-0.7f64).exp();
        assert!((e.value - exact).abs() < 1e-11);
        let e = integrate(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, Tolerance::relative(1e-10)).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((e.value / exact - 1.0).abs() < 1e-9);
    }

    #[test]
    fn half_line() {
        let e = integrate_to_infinity(|x| (-x).exp(), 0.0, Tolerance::relative(1e-10)).unwrap();
        assert!((e.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn reversed_bounds_flip_sign() {
        let e = integrate(|x| x, 1.0, 0.0, Tolerance::default()).unwrap();
        assert!((e.value + 0.5).abs() < 1e-15);
    }

    #[test]
    fn reports_non_convergence() {
        let tol = Tolerance {
            abs: 0.0,
            rel: 1e-14,
            max_intervals: 3,
        };
        assert!(matches!(
            integrate(|x: f64| x.sin() / x.max(1e-300).sqrt(), 0.0, 100.0, tol),
            Err(Error::Quadrature { .. })
        ));
    }
}
