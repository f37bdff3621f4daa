//! Bracketed scalar root finding for the monotone maps used by the solver.
//!
//! Brackets are refined with the ITP method (interpolate, truncate, project),
//! which never needs more iterations than plain bisection plus one and
//! converges superlinearly on smooth functions.

use crate::error::{BaiError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Root {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
}

const MAX_ITERATIONS: usize = 400;

/// Finds a root of `f` in `[a, b]` given `f(a)` and `f(b)` of opposite sign
/// (either may be infinite). Stops once the bracket is narrower than
/// `2 * xtol`, `|f| <= ftol`, or the bracket cannot shrink further.
pub(crate) fn itp<F: FnMut(f64) -> f64>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    fa: f64,
    fb: f64,
    xtol: f64,
    ftol: f64,
) -> Result<Root> {
    if fa == 0.0 {
        return Ok(Root { x: a, fx: 0.0, iterations: 0 });
    }
    if fb == 0.0 {
        return Ok(Root { x: b, fx: 0.0, iterations: 0 });
    }
    if !(fa.signum() * fb.signum() < 0.0) {
        return Err(BaiError::NonConvergence {
            what: format!("bracket [{a}, {b}] does not straddle a root ({fa}, {fb})"),
            residual: fa.abs().min(fb.abs()),
        });
    }
    // orient so that the transformed function is negative at a
    let sign = if fa < 0.0 { 1.0 } else { -1.0 };
    let (mut ya, mut yb) = (sign * fa, sign * fb);
    if a > b {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut ya, &mut yb);
    }
    let ascending = ya < 0.0;
    let xtol = xtol.max(f64::MIN_POSITIVE);
    let kappa1 = 0.2 / (b - a);
    let n_half = ((b - a) / (2.0 * xtol)).log2().ceil().max(0.0);
    let n_max = n_half + 1.0;
    let mut best = if ya.abs() < yb.abs() { (a, ya) } else { (b, yb) };

    let mut j = 0usize;
    while b - a > 2.0 * xtol && j < MAX_ITERATIONS {
        let width = b - a;
        let half = 0.5 * (a + b);
        let r = (xtol * 2f64.powf(n_max - j as f64) - 0.5 * width).max(0.0);
        let delta = kappa1 * width * width;
        let mut probe = half;
        if ya.is_finite() && yb.is_finite() {
            let xf = (b * ya - a * yb) / (ya - yb);
            if xf.is_finite() {
                let dir = (half - xf).signum();
                let xt = if delta <= (half - xf).abs() { xf + dir * delta } else { half };
                probe = if (xt - half).abs() <= r { xt } else { half - dir * r };
            }
        }
        if !(probe > a && probe < b) {
            probe = half;
            if !(probe > a && probe < b) {
                break;
            }
        }
        let y = sign * f(probe);
        j += 1;
        if y.is_nan() {
            return Err(BaiError::NonConvergence { what: format!("NaN at x = {probe}"), residual: f64::NAN });
        }
        if y.abs() < best.1.abs() {
            best = (probe, y);
        }
        if y.abs() <= ftol {
            return Ok(Root { x: probe, fx: sign * y, iterations: j });
        }
        let below = if ascending { y < 0.0 } else { y > 0.0 };
        if below {
            a = probe;
            ya = y;
        } else {
            b = probe;
            yb = y;
        }
    }
    Ok(Root { x: best.0, fx: sign * best.1, iterations: j })
}

/// Grows `hi` geometrically from `lo` until `f(hi)` has the sign opposite to
/// `f_lo`. Returns the final `(lo, f(lo), hi, f(hi))` bracket.
pub(crate) fn expand_upward<F: FnMut(f64) -> f64>(
    mut f: F,
    mut lo: f64,
    mut f_lo: f64,
    mut hi: f64,
) -> Result<(f64, f64, f64, f64)> {
    for _ in 0..2100 {
        let f_hi = f(hi);
        if f_hi.is_nan() {
            return Err(BaiError::NonConvergence { what: format!("NaN while bracketing at {hi}"), residual: f64::NAN });
        }
        if f_hi == 0.0 || f_hi.signum() != f_lo.signum() {
            return Ok((lo, f_lo, hi, f_hi));
        }
        lo = hi;
        f_lo = f_hi;
        hi *= 2.0;
        if !hi.is_finite() {
            break;
        }
    }
    Err(BaiError::NonConvergence { what: "no sign change found while expanding bracket".into(), residual: f_lo.abs() })
}
