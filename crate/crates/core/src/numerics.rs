//! Adaptive quadrature and ODE integration.
//!
//! Both routines are small and self-contained: the likelihood and
//! conditional-probability bookkeeping only ever needs scalar integrals of
//! piecewise-smooth rates and two-component ODEs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

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
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 20_000;

fn gauss_kronrod_15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
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

/// Globally adaptive Gauss-Kronrod (7/15) quadrature of `f` over [a, b].
///
/// Bisects the interval with the largest error estimate until the summed
/// estimate is below `max(abs_tol, rel_tol·|I|)`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Numerical("non-finite integration limits".into()));
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let (value, error) = gauss_kronrod_15(&mut f, lo, hi);
    let mut heap = BinaryHeap::new();
    heap.push(Piece {
        a: lo,
        b: hi,
        value,
        error,
    });
    let mut total = value;
    let mut total_err = error;
    while total_err > abs_tol.max(rel_tol * total.abs()) {
        if !total.is_finite() {
            return Err(Error::Numerical("integrand is not finite".into()));
        }
        if heap.len() >= MAX_INTERVALS {
            return Err(Error::Numerical(format!(
                "quadrature did not converge on [{lo}, {hi}]: error {total_err:e}"
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval exhausted at machine precision; accept what we have.
            heap.push(Piece {
                error: 0.0,
                ..worst
            });
            total_err = heap.iter().map(|p| p.error).sum();
            if heap.iter().all(|p| p.error == 0.0) {
                break;
            }
            continue;
        }
        let (v1, e1) = gauss_kronrod_15(&mut f, worst.a, mid);
        let (v2, e2) = gauss_kronrod_15(&mut f, mid, worst.b);
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
    // Re-sum to shed accumulated cancellation from the running update.
    let total: f64 = heap.iter().map(|p| p.value).sum();
    Ok(sign * total)
}

/// Tolerances for [`dormand_prince`].
#[derive(Debug, Clone, Copy)]
pub struct OdeTolerance {
    pub relative: f64,
    pub absolute: f64,
}

impl Default for OdeTolerance {
    fn default() -> Self {
        Self {
            relative: 1e-9,
            absolute: 1e-12,
        }
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339_200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

const MAX_STEPS: usize = 1_000_000;

/// Integrates `dy/dt = rhs(t, y)` from `t0` to `t1` with an adaptive
/// Dormand-Prince 5(4) scheme and returns `y(t1)`.
///
/// `rhs` may fail (for instance when a rate turns non-positive); the first
/// failure aborts the integration.
pub fn dormand_prince<const N: usize, F>(
    mut rhs: F,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    tol: OdeTolerance,
) -> Result<[f64; N]>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    if t1 == t0 {
        return Ok(y0);
    }
    if t1 < t0 {
        return Err(Error::Numerical(
            "backward integration is not supported".into(),
        ));
    }
    let span = t1 - t0;
    let mut t = t0;
    let mut y = y0;
    let mut h = span;
    let mut k = [[0.0; N]; 7];
    k[0] = rhs(t, &y)?;
    let mut steps = 0;
    while t < t1 {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(Error::Numerical(format!(
                "ODE step budget exhausted at t = {t:e}"
            )));
        }
        if t + h > t1 {
            h = t1 - t;
        }
        for s in 1..7 {
            let mut ys = y;
            for (i, yi) in ys.iter_mut().enumerate() {
                *yi += h * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>();
            }
            k[s] = rhs(t + C[s] * h, &ys)?;
        }
        let mut y_new = y;
        let mut err_norm = 0.0f64;
        for i in 0..N {
            let hi5: f64 = (0..7).map(|s| B5[s] * k[s][i]).sum();
            let hi4: f64 = (0..7).map(|s| B4[s] * k[s][i]).sum();
            y_new[i] = y[i] + h * hi5;
            let scale = tol.absolute + tol.relative * y[i].abs().max(y_new[i].abs());
            let e = h * (hi5 - hi4) / scale;
            err_norm = err_norm.max(e.abs());
        }
        if !err_norm.is_finite() {
            h *= 0.1;
            if h <= f64::EPSILON * t.abs().max(span) {
                return Err(Error::Numerical(format!(
                    "non-finite ODE state at t = {t:e}"
                )));
            }
            continue;
        }
        if err_norm <= 1.0 {
            t = if t + h >= t1 { t1 } else { t + h };
            y = y_new;
            // First-same-as-last: the seventh stage is the derivative at the new point.
            k[0] = k[6];
            let grow = if err_norm == 0.0 {
                5.0
            } else {
                (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= grow;
        } else {
            h *= (0.9 * err_norm.powf(-0.2)).clamp(0.1, 1.0);
            if h <= f64::EPSILON * t.abs().max(f64::MIN_POSITIVE) {
                return Err(Error::Numerical(format!("ODE step underflow at t = {t:e}")));
            }
        }
    }
    Ok(y)
}
