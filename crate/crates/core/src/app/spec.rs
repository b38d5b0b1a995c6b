//! Problem definitions: built-in presets and TOML configuration files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::Discretization;
use crate::filter::FilterOperator;
use crate::materials::{tune_fluid_permeability, ContinuationSchedule, PhysicalParams, ScheduleKind, TuningInputs};
use crate::mesh::{tag_regions, BoundarySpec, Region, RegionLayout, StructuredMesh};
use crate::optimizer::{DesignProblem, OptimizerConfig};
use crate::solver::NewtonConfig;

/// Preset names accepted by [`ProblemSpec::preset`].
pub const PRESETS: [&str; 5] = ["cavity-a1e3", "cavity-a1e4", "cavity-a1e5", "cavity-a1e6", "cylinder"];

/// Resolutions used for smoke runs, regression runs and showcase runs.
pub const SMOKE_RESOLUTION: [usize; 3] = [16, 16, 32];
pub const REGRESSION_RESOLUTION: [usize; 3] = [24, 24, 48];
pub const SHOWCASE_RESOLUTION: [usize; 3] = [40, 40, 80];

/// Fluid permeabilities matched to each buoyancy coefficient of the cavity
/// presets, and the temperature differences they were tuned with.
const CAVITY_KAPPA: [(f64, f64, f64); 4] = [
    (1e3, 0.00513, 1.7),
    (1e4, 0.00206, 1.5),
    (1e5, 0.00085, 1.2),
    (1e6, 0.00036, 0.9),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub resolution: [usize; 3],
    pub extents: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialDesign {
    Uniform {
        value: f64,
    },
    /// Diagonal fin of the four-fin reference, sized to the volume fraction.
    FourFin,
    /// Design vector read from a checkpoint file.
    FromFile {
        path: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizationSpec {
    pub volume_fraction: f64,
    /// Filter radius in element sizes.
    pub filter_multiplier: f64,
    pub schedule: ScheduleKind,
    pub stage_length: usize,
    pub move_limit: f64,
    pub initial_design: InitialDesign,
}

/// Fully resolved problem definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub name: String,
    pub mesh: MeshSpec,
    pub regions: RegionLayout,
    pub boundary: BoundarySpec,
    pub physics: PhysicalParams,
    /// Present when the fluid permeability was derived from these inputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuning: Option<TuningInputs>,
    pub optimization: OptimizationSpec,
    pub newton: NewtonConfig,
}

/// Number of whole elements closest to `length / h`, at least one.
fn cells(length: f64, h: f64) -> f64 {
    (length / h).round().max(1.0)
}

fn cavity_physics(alpha: f64, kappa_fluid: f64) -> PhysicalParams {
    PhysicalParams {
        rho0: 1.0,
        mu: 1.0,
        cp: 1.0,
        alpha,
        gravity: [0.0, 0.0, -1.0],
        heat_source: 1e4,
        k_solid: 100.0,
        k_fluid: 1.0,
        kappa_fluid,
    }
}

impl ProblemSpec {
    /// Built-in problem at the given resolution. Box regions are snapped to
    /// the nearest element faces.
    pub fn preset(name: &str, resolution: [usize; 3]) -> Result<Self> {
        let extents = [0.5, 0.5, 1.0];
        let mesh = StructuredMesh::new(
            resolution[0],
            resolution[1],
            resolution[2],
            extents[0],
            extents[1],
            extents[2],
        )?;
        let h = mesh.spacing();
        let boundary = BoundarySpec::quarter_cavity(extents);
        let mesh_spec = MeshSpec { resolution, extents };
        if name == "cylinder" {
            let delta_t = 0.613;
            let tuning = TuningInputs::unit(1.0, 0.4, 1e6, delta_t);
            return Ok(Self {
                name: name.to_string(),
                mesh: mesh_spec,
                regions: RegionLayout {
                    heat_source: Region::Cylinder {
                        center: [0.0, 0.0],
                        r_inner: 0.0,
                        r_outer: 0.1,
                        z_min: 0.4,
                        z_max: 0.6,
                    },
                    design: Region::Cylinder {
                        center: [0.0, 0.0],
                        r_inner: 0.1,
                        r_outer: 0.25,
                        z_min: 0.4,
                        z_max: 0.6,
                    },
                },
                boundary,
                physics: PhysicalParams {
                    heat_source: 1e3,
                    ..cavity_physics(1e6, 0.000676)
                },
                tuning: Some(tuning),
                optimization: OptimizationSpec {
                    volume_fraction: 0.15,
                    filter_multiplier: 2.5,
                    schedule: ScheduleKind::ThreeStage,
                    stage_length: 30,
                    move_limit: 0.2,
                    initial_design: InitialDesign::FourFin,
                },
                newton: NewtonConfig::default(),
            });
        }
        let &(alpha, kappa_fluid, delta_t) = CAVITY_KAPPA
            .iter()
            .find(|(a, _, _)| name == format!("cavity-a1e{}", a.log10().round() as i32))
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown preset `{name}`; expected one of {}",
                    PRESETS.join(", ")
                ))
            })?;
        let heat = [
            cells(0.05, h[0]) * h[0],
            cells(0.05, h[1]) * h[1],
            cells(0.05, h[2]) * h[2],
        ];
        let design_xy = [cells(0.375, h[0]) * h[0], cells(0.375, h[1]) * h[1]];
        let design_top = heat[2] + cells(0.75, h[2]) * h[2];
        Ok(Self {
            name: name.to_string(),
            mesh: mesh_spec,
            regions: RegionLayout {
                heat_source: Region::Box {
                    min: [0.0; 3],
                    max: heat,
                },
                design: Region::Box {
                    min: [0.0, 0.0, heat[2]],
                    max: [design_xy[0], design_xy[1], design_top],
                },
            },
            boundary,
            physics: cavity_physics(alpha, kappa_fluid),
            tuning: Some(TuningInputs::unit(1.0, 0.5, alpha, delta_t)),
            optimization: OptimizationSpec {
                volume_fraction: 0.05,
                filter_multiplier: 2.5,
                schedule: ScheduleKind::FiveStage,
                stage_length: 30,
                move_limit: 0.2,
                initial_design: InitialDesign::Uniform { value: 0.05 },
            },
            newton: NewtonConfig::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.physics.validate()?;
        self.newton.validate()?;
        let o = &self.optimization;
        if !(o.volume_fraction > 0.0 && o.volume_fraction < 1.0) {
            return Err(Error::invalid("volume_fraction must lie in (0, 1)"));
        }
        if !(o.filter_multiplier >= 0.0 && o.filter_multiplier.is_finite()) {
            return Err(Error::invalid("filter_multiplier must be non-negative"));
        }
        if o.stage_length == 0 {
            return Err(Error::invalid("stage_length must be at least 1"));
        }
        if !(o.move_limit > 0.0 && o.move_limit <= 1.0) {
            return Err(Error::invalid("move_limit must lie in (0, 1]"));
        }
        if let InitialDesign::Uniform { value } = o.initial_design {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::invalid("uniform initial design must lie in [0, 1]"));
            }
        }
        let mesh = self.build_mesh()?;
        tag_regions(&mesh, &self.regions, &self.boundary)?;
        Ok(())
    }

    pub fn build_mesh(&self) -> Result<StructuredMesh> {
        let [nx, ny, nz] = self.mesh.resolution;
        let [lx, ly, lz] = self.mesh.extents;
        StructuredMesh::new(nx, ny, nz, lx, ly, lz)
    }

    pub fn discretization(&self) -> Result<Discretization> {
        let mesh = self.build_mesh()?;
        let tags = tag_regions(&mesh, &self.regions, &self.boundary)?;
        Discretization::new(mesh, tags, self.physics.clone())
    }

    pub fn schedule(&self) -> Result<ContinuationSchedule> {
        ContinuationSchedule::new(self.optimization.schedule, self.optimization.stage_length)
    }

    pub fn optimizer_config(&self) -> Result<OptimizerConfig> {
        Ok(OptimizerConfig {
            schedule: self.schedule()?,
            move_limit: self.optimization.move_limit,
            stop_after: None,
        })
    }

    pub fn design_problem(&self) -> Result<DesignProblem> {
        let disc = self.discretization()?;
        let filter = FilterOperator::with_element_multiple(&disc.mesh, self.optimization.filter_multiplier)?;
        DesignProblem::new(disc, filter, self.optimization.volume_fraction, self.newton.clone())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("cannot serialize problem: {e}")))
    }
}

/// Fluid permeability: a value or a request to derive it from the tuning inputs.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum KappaSetting {
    Value(f64),
    Keyword(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeshSection {
    resolution: Option<[usize; 3]>,
    extents: Option<[f64; 3]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionsSection {
    heat_source: Option<Region>,
    design: Option<Region>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhysicsSection {
    rho0: Option<f64>,
    mu: Option<f64>,
    cp: Option<f64>,
    alpha: Option<f64>,
    gravity: Option<[f64; 3]>,
    heat_source: Option<f64>,
    k_solid: Option<f64>,
    k_fluid: Option<f64>,
    kappa_fluid: Option<KappaSetting>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizationSection {
    volume_fraction: Option<f64>,
    filter_multiplier: Option<f64>,
    schedule: Option<ScheduleKind>,
    stage_length: Option<usize>,
    move_limit: Option<f64>,
    initial_design: Option<InitialDesign>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    preset: Option<String>,
    name: Option<String>,
    #[serde(default)]
    mesh: MeshSection,
    #[serde(default)]
    regions: RegionsSection,
    boundary: Option<BoundarySpec>,
    #[serde(default)]
    physics: PhysicsSection,
    tuning: Option<TuningInputs>,
    #[serde(default)]
    optimization: OptimizationSection,
    newton: Option<NewtonConfig>,
}

fn config_error(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

/// Parses configuration text. `origin` names the source in error messages.
pub fn parse_config(text: &str, origin: &str) -> Result<ProblemSpec> {
    let cfg: ConfigFile = toml::from_str(text).map_err(|e| config_error(origin, e.to_string()))?;
    let resolution = cfg
        .mesh
        .resolution
        .ok_or_else(|| config_error(origin, "missing required key `mesh.resolution`"))?;

    let mut spec = match &cfg.preset {
        Some(p) => ProblemSpec::preset(p, resolution).map_err(|e| config_error(origin, e.to_string()))?,
        None => {
            let extents = cfg
                .mesh
                .extents
                .ok_or_else(|| config_error(origin, "`mesh.extents` is required without a preset"))?;
            let need = |what: &str| config_error(origin, format!("`{what}` is required without a preset"));
            let heat = cfg
                .regions
                .heat_source
                .clone()
                .ok_or_else(|| need("regions.heat_source"))?;
            let design = cfg.regions.design.clone().ok_or_else(|| need("regions.design"))?;
            let alpha = cfg.physics.alpha.ok_or_else(|| need("physics.alpha"))?;
            if cfg.physics.kappa_fluid.is_none() {
                return Err(need("physics.kappa_fluid"));
            }
            ProblemSpec {
                name: "custom".to_string(),
                mesh: MeshSpec { resolution, extents },
                regions: RegionLayout {
                    heat_source: heat,
                    design,
                },
                boundary: BoundarySpec::quarter_cavity(extents),
                physics: cavity_physics(alpha, 0.0),
                tuning: None,
                optimization: OptimizationSpec {
                    volume_fraction: 0.05,
                    filter_multiplier: 2.5,
                    schedule: ScheduleKind::FiveStage,
                    stage_length: 30,
                    move_limit: 0.2,
                    initial_design: InitialDesign::Uniform { value: 0.05 },
                },
                newton: NewtonConfig::default(),
            }
        }
    };

    if let Some(n) = cfg.name {
        spec.name = n;
    }
    if let Some(e) = cfg.mesh.extents {
        spec.mesh.extents = e;
    }
    if let Some(r) = cfg.regions.heat_source {
        spec.regions.heat_source = r;
    }
    if let Some(r) = cfg.regions.design {
        spec.regions.design = r;
    }
    if let Some(b) = cfg.boundary {
        spec.boundary = b;
    }
    let p = &cfg.physics;
    let ph = &mut spec.physics;
    macro_rules! set {
        ($dst:expr, $src:expr) => {
            if let Some(v) = $src {
                $dst = v;
            }
        };
    }
    set!(ph.rho0, p.rho0);
    set!(ph.mu, p.mu);
    set!(ph.cp, p.cp);
    set!(ph.alpha, p.alpha);
    set!(ph.gravity, p.gravity);
    set!(ph.heat_source, p.heat_source);
    set!(ph.k_solid, p.k_solid);
    set!(ph.k_fluid, p.k_fluid);
    if let Some(t) = cfg.tuning {
        spec.tuning = Some(t);
    }
    match &p.kappa_fluid {
        Some(KappaSetting::Value(v)) => spec.physics.kappa_fluid = *v,
        Some(KappaSetting::Keyword(k)) if k == "auto-tune" => {
            let inputs = spec
                .tuning
                .clone()
                .ok_or_else(|| config_error(origin, "`kappa_fluid = \"auto-tune\"` needs a [tuning] section"))?;
            spec.physics.kappa_fluid =
                tune_fluid_permeability(&inputs).map_err(|e| config_error(origin, e.to_string()))?;
        }
        Some(KappaSetting::Keyword(k)) => {
            return Err(config_error(
                origin,
                format!("physics.kappa_fluid must be a number or \"auto-tune\", got \"{k}\""),
            ))
        }
        None => {}
    }
    let o = &cfg.optimization;
    let os = &mut spec.optimization;
    set!(os.volume_fraction, o.volume_fraction);
    set!(os.filter_multiplier, o.filter_multiplier);
    set!(os.schedule, o.schedule);
    set!(os.stage_length, o.stage_length);
    set!(os.move_limit, o.move_limit);
    set!(os.initial_design, o.initial_design.clone());
    if let Some(n) = cfg.newton {
        spec.newton = n;
    }
    spec.validate().map_err(|e| config_error(origin, e.to_string()))?;
    Ok(spec)
}

/// Loads a configuration file. A bare preset name that is not an existing
/// path loads that preset at the smoke resolution.
pub fn load_config(path: impl AsRef<Path>) -> Result<ProblemSpec> {
    let path = path.as_ref();
    let name = path.to_string_lossy();
    if !path.exists() && PRESETS.contains(&name.as_ref()) {
        let spec = ProblemSpec::preset(&name, SMOKE_RESOLUTION)?;
        spec.validate()?;
        return Ok(spec);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, &name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cavity_preset_values() {
        let s = ProblemSpec::preset("cavity-a1e3", SMOKE_RESOLUTION).unwrap();
        assert_eq!(s.physics.alpha, 1e3);
        assert_eq!(s.physics.kappa_fluid, 0.00513);
        assert_eq!(s.physics.heat_source, 1e4);
        assert_eq!(s.optimization.volume_fraction, 0.05);
        s.validate().unwrap();
        let s = ProblemSpec::preset("cavity-a1e6", REGRESSION_RESOLUTION).unwrap();
        assert_eq!(s.physics.kappa_fluid, 0.00036);
        s.validate().unwrap();
    }

    #[test]
    fn cylinder_preset_values() {
        let s = ProblemSpec::preset("cylinder", SMOKE_RESOLUTION).unwrap();
        match s.regions.design {
            Region::Cylinder {
                r_inner,
                r_outer,
                z_min,
                z_max,
                ..
            } => {
                assert_eq!((r_inner, r_outer), (0.1, 0.25));
                assert!((z_max - z_min - 0.2).abs() < 1e-15);
            }
            ref other => panic!("unexpected design region {other:?}"),
        }
        assert_eq!(s.physics.heat_source, 1e3);
        assert_eq!(s.optimization.volume_fraction, 0.15);
        assert_eq!(s.physics.kappa_fluid, 0.000676);
    }

    #[test]
    fn unknown_preset_is_rejected() {
        assert!(ProblemSpec::preset("cavity-a1e7", SMOKE_RESOLUTION).is_err());
    }

    #[test]
    fn empty_config_needs_resolution() {
        let err = parse_config("", "empty.toml").unwrap_err().to_string();
        assert!(err.contains("mesh.resolution"), "{err}");
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = "preset = \"cavity-a1e3\"\n[mesh]\nresolution = [16, 16, 32]\n[physics]\nalpah = 3.0\n";
        let err = parse_config(text, "bad.toml").unwrap_err().to_string();
        assert!(err.contains("alpah") && err.contains("line 5"), "{err}");
    }

    #[test]
    fn type_mismatch_reports_line() {
        let text =
            "preset = \"cavity-a1e3\"\n[mesh]\nresolution = [16, 16, 32]\n[optimization]\nstage_length = \"ten\"\n";
        let err = parse_config(text, "bad.toml").unwrap_err().to_string();
        assert!(err.contains("line 5"), "{err}");
    }

    #[test]
    fn auto_tune_resolves_permeability() {
        let text =
            "preset = \"cavity-a1e4\"\n[mesh]\nresolution = [16, 16, 32]\n[physics]\nkappa_fluid = \"auto-tune\"\n";
        let s = parse_config(text, "auto.toml").unwrap();
        let expected = tune_fluid_permeability(s.tuning.as_ref().unwrap()).unwrap();
        assert_eq!(s.physics.kappa_fluid, expected);
        assert!((expected / 0.00206 - 1.0).abs() < 0.02);
    }

    #[test]
    fn resolved_spec_round_trips() {
        for name in PRESETS {
            let s = ProblemSpec::preset(name, SMOKE_RESOLUTION).unwrap();
            let text = s.to_toml().unwrap();
            assert_eq!(parse_config(&text, "meta.toml").unwrap(), s, "{text}");
        }
    }

    #[test]
    fn misaligned_override_names_axis() {
        let text = "preset = \"cavity-a1e3\"\n[mesh]\nresolution = [16, 16, 32]\n[regions]\nheat_source = { shape = \"box\", min = [0.0, 0.0, 0.0], max = [0.0625, 0.0625, 0.05] }\n";
        let err = parse_config(text, "bad.toml").unwrap_err().to_string();
        assert!(err.contains('z'), "{err}");
    }
}
