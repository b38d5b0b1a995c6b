//! Damped Newton iteration on the assembled state residual, with a
//! heat-source continuation fallback.

use serde::{Deserialize, Serialize};

use super::linear::{LinearConfig, LinearSolver};
use crate::error::{Result, SolverError};
use crate::fem::{Discretization, ElementProps, State};
use crate::sparse::norm2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonConfig {
    /// Required reduction of `||R||` relative to the initial state.
    pub tolerance: f64,
    pub absolute_floor: f64,
    pub max_iterations: usize,
    /// Damping candidates are `2^-k` for `k = 0..damping_levels`.
    pub damping_levels: usize,
    /// Heat-source scale factors tried in order when plain Newton fails.
    pub ramp: Vec<f64>,
    pub linear: LinearConfig,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            absolute_floor: 1e-12,
            max_iterations: 50,
            damping_levels: 9,
            ramp: vec![1e-3, 1e-2, 1e-1, 1.0],
            linear: LinearConfig::default(),
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::Breakdown(m));
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return bad(format!("Newton tolerance must lie in (0, 1), got {}", self.tolerance));
        }
        if self.max_iterations == 0 || self.damping_levels == 0 {
            return bad("Newton iteration cap and damping levels must be positive".into());
        }
        if self.ramp.is_empty() || self.ramp.iter().any(|&s| !(s > 0.0)) || *self.ramp.last().unwrap() != 1.0 {
            return bad("heat-source ramp must be positive and end at 1".into());
        }
        self.linear.validate()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NewtonReport {
    pub iterations: usize,
    pub krylov_iterations: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
    /// `||R||` before the first step and after every accepted step.
    pub residual_history: Vec<f64>,
    pub damping: Vec<f64>,
    /// Set when the heat-source ramp was needed.
    pub ramped: bool,
    /// Where each ramp stage's solve starts in `residual_history`; residuals
    /// of different stages belong to different problems.
    #[serde(default)]
    pub stage_starts: Vec<usize>,
}

impl NewtonReport {
    pub fn reduction(&self) -> f64 {
        if self.initial_residual == 0.0 {
            0.0
        } else {
            self.final_residual / self.initial_residual
        }
    }

    /// Whether no accepted step increased the residual of the problem it was
    /// solving.
    pub fn is_monotone(&self) -> bool {
        let h = &self.residual_history;
        let mut bounds = self.stage_starts.clone();
        bounds.push(h.len());
        let first = bounds[0].min(h.len());
        std::iter::once(&h[..first])
            .chain(bounds.windows(2).map(|w| &h[w[0]..w[1]]))
            .all(|seg| seg.windows(2).all(|w| w[1] <= w[0]))
    }

    fn absorb(&mut self, other: &NewtonReport) {
        self.stage_starts.push(self.residual_history.len());
        self.iterations += other.iterations;
        self.krylov_iterations += other.krylov_iterations;
        self.residual_history.extend_from_slice(&other.residual_history);
        self.damping.extend_from_slice(&other.damping);
    }
}

fn scaled(props: &[ElementProps], scale: f64) -> Vec<ElementProps> {
    props
        .iter()
        .map(|p| ElementProps {
            source: p.source * scale,
            ..*p
        })
        .collect()
}

/// Damped Newton from `init`. Fails with [`SolverError::NewtonNotConverged`]
/// when the iteration cap is hit or no damping candidate reduces the residual.
pub fn newton_solve(
    disc: &Discretization,
    props: &[ElementProps],
    init: &State,
    cfg: &NewtonConfig,
    linear: &mut LinearSolver,
) -> Result<(State, NewtonReport)> {
    cfg.validate()?;
    let mut s = init.s.clone();
    disc.apply_constraints(&mut s);
    let mut r = disc.residual(props, &s)?;
    let mut norm = norm2(&r);
    let target = (cfg.tolerance * norm).max(cfg.absolute_floor);
    let mut report = NewtonReport {
        initial_residual: norm,
        residual_history: vec![norm],
        ..NewtonReport::default()
    };
    while norm > target {
        if report.iterations >= cfg.max_iterations {
            return Err(SolverError::NewtonNotConverged {
                iterations: report.iterations,
                residual: norm,
                target,
            }
            .into());
        }
        let system = disc.assemble(props, &s)?;
        let step = linear.solve(&system.matrix, &system.residual)?;
        report.krylov_iterations += step.iterations;

        // discrete minimization of ||R(s - theta ds)|| over theta = 2^-k,
        // stopping once the residual grows again past a reducing candidate
        let mut best: Option<(f64, f64, Vec<f64>, Vec<f64>)> = None;
        let mut prev = f64::INFINITY;
        let mut theta = 1.0;
        for _ in 0..cfg.damping_levels {
            let trial: Vec<f64> = s.iter().zip(&step.x).map(|(a, d)| a - theta * d).collect();
            let rt = disc.residual(props, &trial)?;
            let nt = norm2(&rt);
            if nt.is_finite() && best.as_ref().is_none_or(|b| nt < b.1) {
                best = Some((theta, nt, trial, rt));
            }
            if nt > prev && best.as_ref().is_some_and(|b| b.1 < norm) {
                break;
            }
            prev = nt;
            theta *= 0.5;
        }
        match best {
            Some((theta, nt, trial, rt)) if nt <= norm => {
                s = trial;
                r = rt;
                norm = nt;
                report.damping.push(theta);
                report.residual_history.push(norm);
                report.iterations += 1;
                log::trace!("newton {}: |R| = {norm:e}, theta = {theta}", report.iterations);
            }
            _ => {
                return Err(SolverError::NewtonNotConverged {
                    iterations: report.iterations,
                    residual: norm,
                    target,
                }
                .into())
            }
        }
    }
    debug_assert_eq!(norm, norm2(&r));
    report.final_residual = norm;
    Ok((State { s }, report))
}

/// Most geometric midpoints inserted between two scheduled ramp stages.
const MAX_RAMP_BISECTIONS: usize = 6;

/// Solves a sequence of problems with the heat source scaled by `cfg.ramp`,
/// starting from the zero state and warm-starting each stage from the last.
/// A stage that fails is retried after inserting the geometric midpoint
/// between the last converged scale and the failed one.
pub fn ramping_solve(
    disc: &Discretization,
    props: &[ElementProps],
    cfg: &NewtonConfig,
    linear: &mut LinearSolver,
) -> Result<(State, NewtonReport)> {
    cfg.validate()?;
    let mut state = State::zeros(disc.mesh.num_nodes());
    let mut report = NewtonReport {
        ramped: true,
        ..NewtonReport::default()
    };
    let mut done = 0.0;
    for (stage, &scale) in cfg.ramp.iter().enumerate() {
        let mut pending = vec![scale];
        let mut bisections = 0;
        while let Some(&target) = pending.last() {
            match newton_solve(disc, &scaled(props, target), &state, cfg, linear) {
                Ok((next, r)) => {
                    // the reduction refers to the last, full-scale solve
                    report.initial_residual = r.initial_residual;
                    report.absorb(&r);
                    report.final_residual = r.final_residual;
                    state = next;
                    done = target;
                    pending.pop();
                }
                Err(e) if bisections < MAX_RAMP_BISECTIONS && done > 0.0 => {
                    bisections += 1;
                    let mid = (done * target).sqrt();
                    log::debug!("ramp stage {stage}: scale {target} failed ({e}); inserting {mid}");
                    pending.push(mid);
                }
                Err(e) => {
                    return Err(SolverError::RampFailed {
                        stage,
                        scale: target,
                        reason: e.to_string(),
                    }
                    .into())
                }
            }
        }
    }
    Ok((state, report))
}

/// Newton from `init`, falling back to the heat-source ramp on failure.
pub fn solve_state(
    disc: &Discretization,
    props: &[ElementProps],
    init: &State,
    cfg: &NewtonConfig,
    linear: &mut LinearSolver,
) -> Result<(State, NewtonReport)> {
    match newton_solve(disc, props, init, cfg, linear) {
        Ok(out) => Ok(out),
        Err(e) => {
            log::info!("Newton failed ({e}); retrying with the heat-source ramp");
            ramping_solve(disc, props, cfg, linear)
        }
    }
}
