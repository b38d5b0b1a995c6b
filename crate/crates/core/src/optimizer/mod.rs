//! Density-based design optimization: sensitivities, volume constraint and
//! the continuation loop driving the MMA update.

pub mod mma;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use mma::{mma_update, MmaState};

use crate::error::{Error, Result};
use crate::fem::{element_props, Discretization, ElementProps, State};
use crate::filter::{filter_backward, filter_density, FilterOperator};
use crate::materials::{ContinuationSchedule, ContinuationState, Interpolation};
use crate::mesh::{ElementRegion, RegionTags};
use crate::solver::{solve_state, LinearSolver, NewtonConfig, NewtonReport};

/// Design elements in element order.
pub fn design_elements(tags: &RegionTags) -> Vec<usize> {
    tags.design_elements()
}

/// Per-element raw density with design entries taken from `design` and
/// passive entries at their fixed values.
pub fn full_density(tags: &RegionTags, design_index: &[usize], design: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = tags
        .element_region
        .iter()
        .map(|r| if *r == ElementRegion::HeatSource { 1.0 } else { 0.0 })
        .collect();
    for (&e, &v) in design_index.iter().zip(design) {
        out[e] = v;
    }
    out
}

/// Volume constraint `g = sum(gamma_e v_e) / sum(v_e) - target` over the
/// design elements, with its gradient.
pub fn volume_constraint(gamma: &[f64], volumes: &[f64], target: f64) -> Result<(f64, Vec<f64>)> {
    if gamma.is_empty() || gamma.len() != volumes.len() {
        return Err(Error::invalid(
            "volume constraint needs a non-empty design with matching volumes",
        ));
    }
    let total: f64 = volumes.iter().sum();
    let g = gamma.iter().zip(volumes).map(|(a, v)| a * v).sum::<f64>() / total - target;
    Ok((g, volumes.iter().map(|v| v / total).collect()))
}

/// Volume-weighted fraction of densities strictly between 0.1 and 0.9.
pub fn discreteness(gamma: &[f64], volumes: &[f64]) -> f64 {
    let total: f64 = volumes.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    gamma
        .iter()
        .zip(volumes)
        .filter(|(g, _)| **g > 0.1 && **g < 0.9)
        .fold(0.0, |acc, (_, v)| acc + v)
        / total
}

#[derive(Debug, Clone, PartialEq)]
pub struct Threshold {
    pub binary: Vec<f64>,
    pub solid_fraction: f64,
}

/// Rounds densities to 0 or 1 at `level` (values at or above the level are solid).
pub fn threshold_export(gamma: &[f64], level: f64) -> Result<Threshold> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "threshold level must lie in (0, 1), got {level}"
        )));
    }
    let binary: Vec<f64> = gamma.iter().map(|&g| if g >= level { 1.0 } else { 0.0 }).collect();
    let solid_fraction = if binary.is_empty() {
        0.0
    } else {
        binary.iter().sum::<f64>() / binary.len() as f64
    };
    Ok(Threshold { binary, solid_fraction })
}

/// Four-fin reference design on the quarter domain: the fin lying on the
/// diagonal plane `x = y` is built from the design elements closest to that
/// plane, `round(fraction * n_design)` of them.
pub fn four_fin_design(disc: &Discretization, fraction: f64) -> Vec<f64> {
    let index = disc.tags.design_elements();
    let count = (fraction * index.len() as f64).round() as usize;
    let mut order: Vec<(f64, usize)> = index
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let c = disc.mesh.element_centroid(e);
            ((c[0] - c[1]).abs(), i)
        })
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut design = vec![0.0; index.len()];
    for &(_, i) in order.iter().take(count) {
        design[i] = 1.0;
    }
    design
}

/// Objective, constraint and sensitivities at one design.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub objective: f64,
    pub objective_gradient: Vec<f64>,
    pub constraint: f64,
    pub constraint_gradient: Vec<f64>,
    pub filtered: Vec<f64>,
    pub state: State,
    pub newton: NewtonReport,
    /// Krylov iterations of the adjoint solve.
    pub adjoint_iterations: usize,
}

/// State problem plus the filter and volume target: everything needed to
/// map a design vector to objective, constraint and gradients.
pub struct DesignProblem {
    pub disc: Discretization,
    pub filter: FilterOperator,
    pub volume_fraction: f64,
    pub newton: NewtonConfig,
    pub design_index: Vec<usize>,
    linear: LinearSolver,
}

impl DesignProblem {
    pub fn new(
        disc: Discretization,
        filter: FilterOperator,
        volume_fraction: f64,
        newton: NewtonConfig,
    ) -> Result<Self> {
        if !(volume_fraction > 0.0 && volume_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "volume fraction must lie in (0, 1), got {volume_fraction}"
            )));
        }
        newton.validate()?;
        let design_index = disc.tags.design_elements();
        if design_index.is_empty() {
            return Err(Error::invalid("design region contains no elements"));
        }
        let linear = LinearSolver::new(newton.linear.clone());
        Ok(Self {
            disc,
            filter,
            volume_fraction,
            newton,
            design_index,
            linear,
        })
    }

    /// Replaces the nonlinear/linear solver settings (drops any cached
    /// factorization).
    pub fn set_newton(&mut self, newton: NewtonConfig) -> Result<()> {
        newton.validate()?;
        self.linear = LinearSolver::new(newton.linear.clone());
        self.newton = newton;
        Ok(())
    }

    pub fn num_design(&self) -> usize {
        self.design_index.len()
    }

    pub fn design_volumes(&self) -> Vec<f64> {
        vec![self.disc.mesh.element_volume(); self.design_index.len()]
    }

    pub fn full_density(&self, design: &[f64]) -> Vec<f64> {
        full_density(&self.disc.tags, &self.design_index, design)
    }

    pub fn filtered_density(&self, design: &[f64]) -> Result<Vec<f64>> {
        filter_density(&self.full_density(design), &self.filter, &self.disc.tags)
    }

    pub fn properties(&self, physical: &[f64], cont: &ContinuationState) -> Vec<ElementProps> {
        let interp = Interpolation::new(&self.disc.params, cont);
        let kappa: Vec<f64> = physical.iter().map(|&g| interp.permeability(g)).collect();
        let cond: Vec<f64> = physical.iter().map(|&g| interp.conductivity(g)).collect();
        element_props(&self.disc.tags, self.disc.params.heat_source, &kappa, &cond)
    }

    /// Solves the state for a per-element physical density (no filtering).
    pub fn solve_physical(
        &mut self,
        physical: &[f64],
        cont: &ContinuationState,
        warm: Option<&State>,
    ) -> Result<(State, NewtonReport, f64)> {
        if physical.len() != self.disc.mesh.num_elements() {
            return Err(Error::invalid(format!(
                "design has {} entries, mesh has {} elements",
                physical.len(),
                self.disc.mesh.num_elements()
            )));
        }
        let props = self.properties(physical, cont);
        let zero = State::zeros(self.disc.mesh.num_nodes());
        let (state, report) = solve_state(
            &self.disc,
            &props,
            warm.unwrap_or(&zero),
            &self.newton,
            &mut self.linear,
        )?;
        let f = self.disc.compliance(&props, &state.s)?;
        Ok((state, report, f))
    }

    /// Full evaluation at `design`: filter, state solve, compliance, adjoint
    /// gradient chained through the interpolation and the filter, and the
    /// volume constraint on the filtered density.
    pub fn evaluate(&mut self, design: &[f64], cont: &ContinuationState, warm: Option<&State>) -> Result<Evaluation> {
        if design.len() != self.num_design() {
            return Err(Error::invalid(format!(
                "design vector has {} entries, expected {}",
                design.len(),
                self.num_design()
            )));
        }
        let filtered = self.filtered_density(design)?;
        let (state, newton, objective) = self.solve_physical(&filtered, cont, warm)?;
        let props = self.properties(&filtered, cont);
        let (grad_physical, adjoint_iterations) = self.adjoint(&props, &filtered, &state, cont)?;
        let grad_raw = filter_backward(&grad_physical, &self.filter, &self.disc.tags)?;
        let objective_gradient = self.design_index.iter().map(|&e| grad_raw[e]).collect();

        let design_filtered: Vec<f64> = self.design_index.iter().map(|&e| filtered[e]).collect();
        let (constraint, dg_filtered) =
            volume_constraint(&design_filtered, &self.design_volumes(), self.volume_fraction)?;
        let mut dg_full = vec![0.0; filtered.len()];
        for (&e, &v) in self.design_index.iter().zip(&dg_filtered) {
            dg_full[e] = v;
        }
        let dg_raw = filter_backward(&dg_full, &self.filter, &self.disc.tags)?;
        let constraint_gradient = self.design_index.iter().map(|&e| dg_raw[e]).collect();
        Ok(Evaluation {
            objective,
            objective_gradient,
            constraint,
            constraint_gradient,
            filtered,
            state,
            newton,
            adjoint_iterations,
        })
    }

    /// Compliance gradient with respect to the per-element physical density.
    fn adjoint(
        &mut self,
        props: &[ElementProps],
        physical: &[f64],
        state: &State,
        cont: &ContinuationState,
    ) -> Result<(Vec<f64>, usize)> {
        let rhs = self.disc.compliance_gradient(props, &state.s)?;
        if rhs.iter().all(|&v| v == 0.0) {
            return Ok((vec![0.0; physical.len()], 0));
        }
        let system = self.disc.assemble(props, &state.s)?;
        let adj = self.linear.solve_transpose(&system.matrix, &rhs)?;
        let dprops = self.disc.property_gradient(props, &state.s, &adj.x)?;
        let interp = Interpolation::new(&self.disc.params, cont);
        let grad = physical
            .iter()
            .zip(&dprops)
            .map(|(&g, &(dk, dc))| dk * interp.permeability_derivative(g) + dc * interp.conductivity_derivative(g))
            .collect();
        Ok((grad, adj.iterations))
    }
}

/// Settings of one optimization run.
#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub schedule: ContinuationSchedule,
    pub move_limit: f64,
    /// Stop after this many iterations of the current call; the returned
    /// checkpoint then continues the run.
    pub stop_after: Option<usize>,
}

impl OptimizerConfig {
    pub fn total_iterations(&self) -> usize {
        self.schedule.total_iterations()
    }
}

/// Everything needed to continue a run from the start of `iteration`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub iteration: usize,
    pub design: Vec<f64>,
    pub state: Vec<f64>,
    pub mma: MmaState,
}

impl OptimizerState {
    pub fn initial(design: Vec<f64>, num_nodes: usize) -> Self {
        let n = design.len();
        Self {
            iteration: 0,
            design,
            state: vec![0.0; 2 * num_nodes],
            mma: MmaState::new(n),
        }
    }
}

/// One row of the convergence history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub stage: usize,
    pub q_c: f64,
    pub q_p: f64,
    pub kappa_solid: f64,
    pub objective: f64,
    pub constraint: f64,
    pub newton_steps: usize,
    pub krylov_iterations: usize,
    pub residual_reduction: f64,
    pub discreteness: f64,
    pub wall_seconds: f64,
    pub ramped: bool,
    pub monotone: bool,
}

/// What an observer sees after each iteration.
pub struct IterationView<'a> {
    pub record: &'a IterationRecord,
    /// Design evaluated in this iteration.
    pub design: &'a [f64],
    /// Per-element physical density.
    pub filtered: &'a [f64],
    pub state: &'a State,
    /// Darcy velocity at element centroids.
    pub velocity: &'a [[f64; 3]],
    /// State from which the next iteration starts.
    pub next: &'a OptimizerState,
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    /// Design evaluated at the last iteration.
    pub design: Vec<f64>,
    pub filtered: Vec<f64>,
    pub state: State,
    pub objective: f64,
    pub constraint: f64,
    pub history: Vec<IterationRecord>,
    /// Optimizer state after the last iteration, for checkpointing.
    pub checkpoint: OptimizerState,
}

/// Runs the continuation loop from `start` until the schedule is exhausted,
/// reporting every iteration to `observer`. The final iteration evaluates but does not update
/// the design, so the returned design is the one the last record describes.
pub fn optimize<F>(
    problem: &mut DesignProblem,
    cfg: &OptimizerConfig,
    start: OptimizerState,
    mut observer: F,
) -> Result<OptimizationResult>
where
    F: FnMut(&IterationView<'_>) -> Result<()>,
{
    if !(cfg.move_limit > 0.0 && cfg.move_limit <= 1.0) {
        return Err(Error::invalid(format!(
            "move limit must lie in (0, 1], got {}",
            cfg.move_limit
        )));
    }
    if cfg.stop_after == Some(0) {
        return Err(Error::invalid("stop_after must be positive"));
    }
    if start.design.len() != problem.num_design() || start.design.iter().any(|g| !(0.0..=1.0).contains(g)) {
        return Err(Error::invalid(
            "initial design must have one entry in [0, 1] per design element",
        ));
    }
    let total = cfg.total_iterations();
    let volumes = problem.design_volumes();
    let first = start.iteration;
    let mut current = start;
    let mut history = Vec::new();

    if current.iteration >= total {
        // nothing left to iterate: analyse the design under the final stage
        let cont = cfg.schedule.last();
        let warm = State {
            s: current.state.clone(),
        };
        let eval = problem.evaluate(&current.design, &cont, Some(&warm))?;
        current.state = eval.state.s.clone();
        return Ok(OptimizationResult {
            design: current.design.clone(),
            filtered: eval.filtered,
            state: eval.state,
            objective: eval.objective,
            constraint: eval.constraint,
            history,
            checkpoint: current,
        });
    }

    loop {
        let it = current.iteration;
        let clock = Instant::now();
        let cont = cfg.schedule.at(it, total)?;
        let warm = State {
            s: current.state.clone(),
        };
        let eval = problem
            .evaluate(&current.design, &cont, Some(&warm))
            .map_err(|e| match e {
                Error::Solver(source) => Error::Iteration { iteration: it, source },
                other => other,
            })?;
        if it % cfg.schedule.stage_length == 0 || current.mma.objective_scale.is_none() {
            current.mma.rescale(eval.objective);
        }
        let last = it + 1 == total;
        let next_design = if last {
            current.design.clone()
        } else {
            mma_update(
                &current.design,
                eval.objective,
                &eval.objective_gradient,
                eval.constraint,
                &eval.constraint_gradient,
                &mut current.mma,
                cfg.move_limit,
            )?
        };
        let record = IterationRecord {
            iteration: it,
            stage: cont.stage,
            q_c: cont.q_c,
            q_p: cont.q_p,
            kappa_solid: cont.kappa_solid,
            objective: eval.objective,
            constraint: eval.constraint,
            newton_steps: eval.newton.iterations,
            krylov_iterations: eval.newton.krylov_iterations + eval.adjoint_iterations,
            residual_reduction: eval.newton.reduction(),
            discreteness: discreteness(&current.design, &volumes),
            wall_seconds: clock.elapsed().as_secs_f64(),
            ramped: eval.newton.ramped,
            monotone: eval.newton.is_monotone(),
        };
        log::info!(
            "it {:4} stage {} f = {:.6e} g = {:+.3e} newton {} krylov {} disc {:.3}",
            it,
            cont.stage,
            record.objective,
            record.constraint,
            record.newton_steps,
            record.krylov_iterations,
            record.discreteness
        );
        let evaluated = std::mem::replace(&mut current.design, next_design);
        current.state = eval.state.s.clone();
        current.iteration = it + 1;
        let props = problem.properties(&eval.filtered, &cont);
        let velocity = problem.disc.velocities(&props, &eval.state.s)?;
        observer(&IterationView {
            record: &record,
            design: &evaluated,
            filtered: &eval.filtered,
            state: &eval.state,
            velocity: &velocity,
            next: &current,
        })?;
        history.push(record);
        if last || cfg.stop_after.is_some_and(|n| it + 1 - first >= n) {
            return Ok(OptimizationResult {
                design: evaluated,
                filtered: eval.filtered,
                state: eval.state,
                objective: eval.objective,
                constraint: eval.constraint,
                history,
                checkpoint: current,
            });
        }
    }
}
