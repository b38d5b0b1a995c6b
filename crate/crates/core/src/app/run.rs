//! Run drivers: optimization with artifacts, single analyses and the
//! adjoint-versus-finite-difference gradient check.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::io::{write_vtk, Checkpoint, LogRow, LogWriter, VtkFields};
use super::spec::{InitialDesign, ProblemSpec};
use crate::error::{Error, Result};
use crate::fem::State;
use crate::optimizer::{
    four_fin_design, full_density, optimize, threshold_export, DesignProblem, OptimizationResult, OptimizerState,
};
use crate::solver::{LinearConfig, NewtonConfig};

pub const LOG_FILE: &str = "log.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const PROBLEM_FILE: &str = "problem.toml";
pub const METADATA_FILE: &str = "run.json";
pub const FINAL_VTK_FILE: &str = "final.vtk";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Write a VTK snapshot every this many iterations (0 disables periodic
    /// snapshots; stage ends are always written).
    pub snapshot_every: usize,
    /// Checkpoint to continue from.
    pub resume: Option<PathBuf>,
    /// Stop after this many iterations; the checkpoint resumes the run.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool_version: String,
    pub problem: String,
    pub first_iteration: usize,
    pub iterations: usize,
    pub final_objective: f64,
    pub final_constraint: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub log: PathBuf,
    pub checkpoint: PathBuf,
    pub problem: PathBuf,
    pub metadata: PathBuf,
    pub snapshots: Vec<PathBuf>,
    pub final_vtk: PathBuf,
    pub result: OptimizationResult,
}

/// Element speed `|u|` from per-element velocities.
fn speeds(velocity: &[[f64; 3]]) -> Vec<f64> {
    velocity
        .iter()
        .map(|u| (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt())
        .collect()
}

/// Snapshot fields: raw and filtered density and speed per element,
/// temperature and pressure per node.
pub fn snapshot_fields(raw: &[f64], filtered: &[f64], velocity: &[[f64; 3]], state: &State) -> VtkFields {
    VtkFields {
        cell: vec![
            ("gamma".into(), raw.to_vec()),
            ("gamma_filtered".into(), filtered.to_vec()),
            ("speed".into(), speeds(velocity)),
        ],
        point: vec![("T".into(), state.temperatures()), ("P".into(), state.pressures())],
    }
}

/// Design vector prescribed by the problem's initial-design selector.
pub fn initial_design(spec: &ProblemSpec, problem: &DesignProblem) -> Result<Vec<f64>> {
    match &spec.optimization.initial_design {
        InitialDesign::Uniform { value } => Ok(vec![*value; problem.num_design()]),
        InitialDesign::FourFin => Ok(four_fin_design(&problem.disc, spec.optimization.volume_fraction)),
        InitialDesign::FromFile { path } => {
            let design = Checkpoint::load(path)?.optimizer.design;
            if design.len() != problem.num_design() {
                return Err(Error::invalid(format!(
                    "{path}: design has {} entries, expected {}",
                    design.len(),
                    problem.num_design()
                )));
            }
            Ok(design)
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".write-test");
    fs::write(&probe, b"").map_err(|e| Error::io(dir, e))?;
    fs::remove_file(&probe).map_err(|e| Error::io(dir, e))
}

/// Runs the optimization, writing the log, a checkpoint after every
/// iteration, VTK snapshots and run metadata into `out`.
pub fn run_optimize(spec: &ProblemSpec, out: impl AsRef<Path>, opts: &RunOptions) -> Result<RunArtifacts> {
    let clock = Instant::now();
    let dir = out.as_ref().to_path_buf();
    ensure_dir(&dir)?;
    spec.validate()?;
    let problem_path = dir.join(PROBLEM_FILE);
    fs::write(&problem_path, spec.to_toml()?).map_err(|e| Error::io(&problem_path, e))?;

    let mut problem = spec.design_problem()?;
    let mut cfg = spec.optimizer_config()?;
    cfg.stop_after = opts.stop_after;
    let start = match &opts.resume {
        Some(path) => {
            let cp = Checkpoint::load(path)?;
            if cp.resolution != spec.mesh.resolution || cp.optimizer.design.len() != problem.num_design() {
                return Err(Error::invalid(format!(
                    "{}: checkpoint does not match the problem mesh",
                    path.display()
                )));
            }
            cp.optimizer
        }
        None => OptimizerState::initial(initial_design(spec, &problem)?, problem.disc.mesh.num_nodes()),
    };
    let first_iteration = start.iteration;
    let log_path = dir.join(LOG_FILE);
    let log = if opts.resume.is_some() {
        LogWriter::resume(&log_path, first_iteration)?
    } else {
        LogWriter::create(&log_path)?
    };
    let checkpoint_path = dir.join(CHECKPOINT_FILE);
    let mesh = problem.disc.mesh.clone();
    let tags = problem.disc.tags.clone();
    let design_index = problem.design_index.clone();
    let stage_length = cfg.schedule.stage_length;
    let mut snapshots = Vec::new();

    let result = optimize(&mut problem, &cfg, start, |view| {
        log.append(&LogRow::from(view.record))?;
        Checkpoint::new(&spec.name, spec.mesh.resolution, view.next.clone()).save(&checkpoint_path)?;
        let it = view.record.iteration;
        let periodic = opts.snapshot_every > 0 && (it + 1) % opts.snapshot_every == 0;
        if periodic || (it + 1) % stage_length == 0 {
            let raw = full_density(&tags, &design_index, view.design);
            let path = dir.join(format!("snapshot_{it:04}.vtk"));
            write_vtk(
                &snapshot_fields(&raw, view.filtered, view.velocity, view.state),
                &mesh,
                &path,
            )?;
            snapshots.push(path);
        }
        Ok(())
    })?;

    let final_vtk = dir.join(FINAL_VTK_FILE);
    {
        let cont = match result.history.last() {
            Some(r) => cfg.schedule.state(r.stage),
            None => cfg.schedule.last(),
        };
        let props = problem.properties(&result.filtered, &cont);
        let velocity = problem.disc.velocities(&props, &result.state.s)?;
        let raw = problem.full_density(&result.design);
        write_vtk(
            &snapshot_fields(&raw, &result.filtered, &velocity, &result.state),
            &mesh,
            &final_vtk,
        )?;
    }
    if result.history.is_empty() {
        Checkpoint::new(&spec.name, spec.mesh.resolution, result.checkpoint.clone()).save(&checkpoint_path)?;
    }
    let metadata = RunMetadata {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        problem: spec.name.clone(),
        first_iteration,
        iterations: result.history.len(),
        final_objective: result.objective,
        final_constraint: result.constraint,
        wall_seconds: clock.elapsed().as_secs_f64(),
    };
    let metadata_path = dir.join(METADATA_FILE);
    fs::write(
        &metadata_path,
        serde_json::to_string_pretty(&metadata).map_err(|e| Error::Format(e.to_string()))?,
    )
    .map_err(|e| Error::io(&metadata_path, e))?;
    Ok(RunArtifacts {
        dir,
        log: log_path,
        checkpoint: checkpoint_path,
        problem: problem_path,
        metadata: metadata_path,
        snapshots,
        final_vtk,
        result,
    })
}

#[derive(Debug, Clone)]
pub struct AnalysisReport {
    pub objective: f64,
    /// Physical (filtered, possibly thresholded) density used in the solve.
    pub physical: Vec<f64>,
    pub state: State,
    pub newton_steps: usize,
    pub solid_fraction: f64,
    pub vtk: Option<PathBuf>,
}

/// Solves the state once for a design vector under the final continuation
/// stage. With `threshold`, the filtered design entries are rounded to 0/1
/// at that level before the solve.
pub fn analyze_design(
    spec: &ProblemSpec,
    design: &[f64],
    threshold: Option<f64>,
    out: Option<&Path>,
) -> Result<AnalysisReport> {
    let mut problem = spec.design_problem()?;
    if design.len() != problem.num_design() {
        return Err(Error::invalid(format!(
            "design has {} entries, the problem has {} design elements",
            design.len(),
            problem.num_design()
        )));
    }
    let mut physical = problem.filtered_density(design)?;
    let index = problem.design_index.clone();
    let design_physical: Vec<f64> = index.iter().map(|&e| physical[e]).collect();
    let solid_fraction = match threshold {
        Some(level) => {
            let t = threshold_export(&design_physical, level)?;
            for (&e, &b) in index.iter().zip(&t.binary) {
                physical[e] = b;
            }
            t.solid_fraction
        }
        None => design_physical.iter().sum::<f64>() / design_physical.len() as f64,
    };
    let cont = spec.schedule()?.last();
    let (state, report, objective) = problem.solve_physical(&physical, &cont, None)?;
    let vtk = match out {
        Some(dir) => {
            ensure_dir(dir)?;
            let props = problem.properties(&physical, &cont);
            let velocity = problem.disc.velocities(&props, &state.s)?;
            let path = dir.join("analysis.vtk");
            let raw = problem.full_density(design);
            write_vtk(
                &snapshot_fields(&raw, &physical, &velocity, &state),
                &problem.disc.mesh,
                &path,
            )?;
            Some(path)
        }
        None => None,
    };
    Ok(AnalysisReport {
        objective,
        physical,
        state,
        newton_steps: report.iterations,
        solid_fraction,
        vtk,
    })
}

/// Analysis of the design stored in a checkpoint file.
pub fn run_analyze(
    spec: &ProblemSpec,
    design_file: impl AsRef<Path>,
    threshold: Option<f64>,
    out: Option<&Path>,
) -> Result<AnalysisReport> {
    let cp = Checkpoint::load(design_file)?;
    analyze_design(spec, &cp.optimizer.design, threshold, out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSample {
    pub variable: usize,
    pub adjoint: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub objective: f64,
    pub samples: Vec<GradientSample>,
    pub max_relative_error: f64,
}

/// Compares the adjoint gradient with central differences of the objective
/// at a random design in `[0.1, 0.9]`, for `count` random design variables.
/// The relative error of each sample is taken against
/// `max(|fd|, 1e-3 max_k |fd_k|)` so that near-zero entries do not dominate.
/// State solves are tightened well below the run tolerance so that solver
/// error does not swamp the differences.
pub fn check_gradient(spec: &ProblemSpec, count: usize, step: f64, seed: u64) -> Result<GradientCheck> {
    let mut problem = spec.design_problem()?;
    problem.set_newton(NewtonConfig {
        tolerance: 1e-11,
        absolute_floor: 1e-14,
        linear: LinearConfig {
            tolerance: 1e-12,
            ..spec.newton.linear.clone()
        },
        ..spec.newton.clone()
    })?;
    let n = problem.num_design();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let design: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..0.9)).collect();
    let picked = sample(&mut rng, n, count.min(n)).into_vec();
    let cont = spec.schedule()?.at(0, spec.schedule()?.total_iterations())?;
    let base = problem.evaluate(&design, &cont, None)?;
    let warm = base.state.clone();

    let mut fd = Vec::with_capacity(picked.len());
    for &j in &picked {
        let mut f = [0.0; 2];
        for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
            let mut d = design.clone();
            d[j] += sign * step;
            let filtered = problem.filtered_density(&d)?;
            f[k] = problem.solve_physical(&filtered, &cont, Some(&warm))?.2;
        }
        fd.push((f[0] - f[1]) / (2.0 * step));
    }
    let floor = 1e-3 * fd.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let samples: Vec<GradientSample> = picked
        .iter()
        .zip(&fd)
        .map(|(&j, &fd)| {
            let adjoint = base.objective_gradient[j];
            GradientSample {
                variable: j,
                adjoint,
                finite_difference: fd,
                relative_error: (adjoint - fd).abs() / fd.abs().max(floor).max(f64::MIN_POSITIVE),
            }
        })
        .collect();
    let max_relative_error = samples.iter().map(|s| s.relative_error).fold(0.0, f64::max);
    Ok(GradientCheck {
        objective: base.objective,
        samples,
        max_relative_error,
    })
}
