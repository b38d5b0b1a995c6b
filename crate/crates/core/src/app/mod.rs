//! Problem library, configuration, run drivers and file formats.

pub mod io;
pub mod run;
pub mod spec;

pub use io::{read_log, read_vtk, write_log_row, write_vtk, Checkpoint, LogRow, LogWriter, VtkFields};
pub use run::{
    analyze_design, check_gradient, initial_design, run_analyze, run_optimize, AnalysisReport, GradientCheck,
    GradientSample, RunArtifacts, RunMetadata, RunOptions,
};
pub use spec::{
    load_config, parse_config, InitialDesign, MeshSpec, OptimizationSpec, ProblemSpec, PRESETS, REGRESSION_RESOLUTION,
    SHOWCASE_RESOLUTION, SMOKE_RESOLUTION,
};
