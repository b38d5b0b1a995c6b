//! Method of moving asymptotes for one inequality constraint.
//!
//! Each update builds the usual convex separable approximation of the
//! objective and the constraint, with an elastic variable `y` on the
//! constraint (`c = 1000`, `d = 1`), and solves it through its
//! one-dimensional dual by bisection on the multiplier.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ASYINIT: f64 = 0.5;
const ASYINCR: f64 = 1.2;
const ASYDECR: f64 = 0.7;
const ALBEFA: f64 = 0.1;
const RAA0: f64 = 1e-5;
const ELASTIC_LINEAR: f64 = 1000.0;
const ELASTIC_QUADRATIC: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmaState {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Previous two iterates, most recent first.
    pub previous: Vec<f64>,
    pub before_previous: Vec<f64>,
    /// Number of completed updates.
    pub updates: usize,
    /// Objective values and gradients are divided by this before the update.
    pub objective_scale: Option<f64>,
    pub multiplier: f64,
}

impl MmaState {
    pub fn new(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            upper: vec![1.0; n],
            previous: Vec::new(),
            before_previous: Vec::new(),
            updates: 0,
            objective_scale: None,
            multiplier: 0.0,
        }
    }

    /// Fixes the objective scale to `|f|` (or 1 when `f` is zero).
    pub fn rescale(&mut self, f: f64) {
        self.objective_scale = Some(if f != 0.0 && f.is_finite() { f.abs() } else { 1.0 });
    }
}

/// Optimal primal variable of the subproblem Lagrangian for fixed multiplier.
#[inline]
fn primal(p: f64, q: f64, low: f64, upp: f64, alpha: f64, beta: f64) -> f64 {
    let (sp, sq) = (p.sqrt(), q.sqrt());
    ((sp * low + sq * upp) / (sp + sq)).clamp(alpha, beta)
}

/// One design update. `x` lies in `[0, 1]`; the result lies in
/// `[max(0, x - move_limit), min(1, x + move_limit)]`.
pub fn mma_update(
    x: &[f64],
    f: f64,
    df: &[f64],
    g: f64,
    dg: &[f64],
    state: &mut MmaState,
    move_limit: f64,
) -> Result<Vec<f64>> {
    let n = x.len();
    if df.len() != n || dg.len() != n || state.lower.len() != n {
        return Err(Error::invalid("MMA: inconsistent vector lengths"));
    }
    if !(move_limit > 0.0 && move_limit <= 1.0) {
        return Err(Error::invalid(format!(
            "MMA: move limit must lie in (0, 1], got {move_limit}"
        )));
    }
    if !f.is_finite() || !g.is_finite() || df.iter().chain(dg).any(|v| !v.is_finite()) {
        return Err(Error::invalid("MMA: non-finite objective, constraint or gradient"));
    }
    if state.objective_scale.is_none() {
        state.rescale(f);
    }
    let scale = state.objective_scale.unwrap();
    let (xmin, xmax) = (0.0, 1.0);
    let range = xmax - xmin;

    // asymptotes
    if state.updates < 2 || state.before_previous.len() != n {
        for j in 0..n {
            state.lower[j] = x[j] - ASYINIT * range;
            state.upper[j] = x[j] + ASYINIT * range;
        }
    } else {
        for j in 0..n {
            let trend = (x[j] - state.previous[j]) * (state.previous[j] - state.before_previous[j]);
            let factor = if trend < 0.0 {
                ASYDECR
            } else if trend > 0.0 {
                ASYINCR
            } else {
                1.0
            };
            let low = x[j] - factor * (state.previous[j] - state.lower[j]);
            let upp = x[j] + factor * (state.upper[j] - state.previous[j]);
            state.lower[j] = low.clamp(x[j] - 10.0 * range, x[j] - 0.01 * range);
            state.upper[j] = upp.clamp(x[j] + 0.01 * range, x[j] + 10.0 * range);
        }
    }

    let mut alpha = vec![0.0; n];
    let mut beta = vec![0.0; n];
    let mut p0 = vec![0.0; n];
    let mut q0 = vec![0.0; n];
    let mut p1 = vec![0.0; n];
    let mut q1 = vec![0.0; n];
    let mut b = -g;
    for j in 0..n {
        let (low, upp) = (state.lower[j], state.upper[j]);
        alpha[j] = (low + ALBEFA * (x[j] - low)).max(x[j] - move_limit).max(xmin);
        beta[j] = (upp - ALBEFA * (upp - x[j])).min(x[j] + move_limit).min(xmax);
        let (ux, xl) = (upp - x[j], x[j] - low);
        let d0 = df[j] / scale;
        p0[j] = ux * ux * (1.001 * d0.max(0.0) + 0.001 * (-d0).max(0.0) + RAA0 / range);
        q0[j] = xl * xl * (0.001 * d0.max(0.0) + 1.001 * (-d0).max(0.0) + RAA0 / range);
        p1[j] = ux * ux * (1.001 * dg[j].max(0.0) + 0.001 * (-dg[j]).max(0.0) + RAA0 / range);
        q1[j] = xl * xl * (0.001 * dg[j].max(0.0) + 1.001 * (-dg[j]).max(0.0) + RAA0 / range);
        b += p1[j] / ux + q1[j] / xl;
    }

    let solve = |lambda: f64, out: &mut [f64]| -> f64 {
        let mut h = -b;
        for j in 0..n {
            let (low, upp) = (state.lower[j], state.upper[j]);
            let xj = primal(
                p0[j] + lambda * p1[j],
                q0[j] + lambda * q1[j],
                low,
                upp,
                alpha[j],
                beta[j],
            );
            out[j] = xj;
            h += p1[j] / (upp - xj) + q1[j] / (xj - low);
        }
        // elastic variable y(lambda) = max(0, (lambda - c) / d)
        h - ((lambda - ELASTIC_LINEAR) / ELASTIC_QUADRATIC).max(0.0)
    };

    let mut xnew = vec![0.0; n];
    let lambda = if solve(0.0, &mut xnew) <= 0.0 {
        0.0
    } else {
        // bracket the root of the dual derivative, which decreases in lambda
        let mut hi = 1.0;
        while solve(hi, &mut xnew) > 0.0 {
            hi *= 2.0;
            if hi > 1e30 {
                return Err(Error::invalid("MMA: dual multiplier is unbounded"));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if solve(mid, &mut xnew) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        solve(hi, &mut xnew);
        hi
    };
    state.multiplier = lambda;
    state.before_previous = std::mem::replace(&mut state.previous, x.to_vec());
    state.updates += 1;
    Ok(xnew)
}
