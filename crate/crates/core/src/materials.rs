//! Material interpolation, continuation of the penalization parameters and
//! tuning of the fictitious fluid permeability.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Material and fluid constants of the model (SI units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    /// Reference density [kg/m^3].
    pub rho0: f64,
    /// Dynamic viscosity [Pa s].
    pub mu: f64,
    /// Specific heat [J/(kg K)].
    pub cp: f64,
    /// Thermal expansion coefficient [1/K].
    pub alpha: f64,
    /// Gravity vector [m/s^2].
    pub gravity: [f64; 3],
    /// Volumetric heat source inside the heat-source region [W/m^3].
    pub heat_source: f64,
    pub k_solid: f64,
    pub k_fluid: f64,
    /// Fluid permeability [m^2].
    pub kappa_fluid: f64,
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho0", self.rho0),
            ("mu", self.mu),
            ("cp", self.cp),
            ("k_fluid", self.k_fluid),
            ("kappa_fluid", self.kappa_fluid),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.k_solid > self.k_fluid) {
            return Err(Error::invalid("k_solid must exceed k_fluid"));
        }
        if !(self.alpha >= 0.0) || !(self.heat_source >= 0.0) {
            return Err(Error::invalid("alpha and heat_source must be non-negative"));
        }
        if self.gravity.iter().any(|g| !g.is_finite()) {
            return Err(Error::invalid("gravity must be finite"));
        }
        Ok(())
    }
}

fn check_density(gamma: f64) -> Result<()> {
    if (0.0..=1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::invalid(format!("density {gamma} outside [0, 1]")))
    }
}

/// RAMP interpolation of the conductivity; `k_fluid` at `gamma = 0`, `k_solid` at 1.
pub fn ramp_conductivity(gamma: f64, q_c: f64, k_fluid: f64, k_solid: f64) -> Result<f64> {
    check_density(gamma)?;
    if q_c < 0.0 || k_solid < k_fluid {
        return Err(Error::invalid("require q_c >= 0 and k_solid >= k_fluid"));
    }
    Ok(k_fluid + gamma / (1.0 + q_c * (1.0 - gamma)) * (k_solid - k_fluid))
}

/// RAMP interpolation of the permeability; `kappa_fluid` at `gamma = 0`, `kappa_solid` at 1.
pub fn ramp_permeability(gamma: f64, q_p: f64, kappa_solid: f64, kappa_fluid: f64) -> Result<f64> {
    check_density(gamma)?;
    if q_p < 0.0 || kappa_fluid < kappa_solid {
        return Err(Error::invalid("require q_p >= 0 and kappa_fluid >= kappa_solid"));
    }
    Ok(kappa_solid + (1.0 - gamma) / (1.0 + q_p * gamma) * (kappa_fluid - kappa_solid))
}

/// Both RAMP maps with their derivatives, for a fixed set of parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interpolation {
    pub q_c: f64,
    pub q_p: f64,
    pub k_fluid: f64,
    pub k_solid: f64,
    pub kappa_solid: f64,
    pub kappa_fluid: f64,
}

impl Interpolation {
    pub fn new(params: &PhysicalParams, cont: &ContinuationState) -> Self {
        Self {
            q_c: cont.q_c,
            q_p: cont.q_p,
            k_fluid: params.k_fluid,
            k_solid: params.k_solid,
            kappa_solid: cont.kappa_solid,
            kappa_fluid: params.kappa_fluid,
        }
    }

    #[inline]
    pub fn conductivity(&self, gamma: f64) -> f64 {
        self.k_fluid + gamma / (1.0 + self.q_c * (1.0 - gamma)) * (self.k_solid - self.k_fluid)
    }

    #[inline]
    pub fn conductivity_derivative(&self, gamma: f64) -> f64 {
        let d = 1.0 + self.q_c * (1.0 - gamma);
        (1.0 + self.q_c) / (d * d) * (self.k_solid - self.k_fluid)
    }

    #[inline]
    pub fn permeability(&self, gamma: f64) -> f64 {
        self.kappa_solid + (1.0 - gamma) / (1.0 + self.q_p * gamma) * (self.kappa_fluid - self.kappa_solid)
    }

    #[inline]
    pub fn permeability_derivative(&self, gamma: f64) -> f64 {
        let d = 1.0 + self.q_p * gamma;
        -(1.0 + self.q_p) / (d * d) * (self.kappa_fluid - self.kappa_solid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationStage {
    pub q_c: f64,
    pub q_p: f64,
    pub kappa_solid: f64,
}

/// Parameters in force at one optimization iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationState {
    pub stage: usize,
    pub q_c: f64,
    pub q_p: f64,
    pub kappa_solid: f64,
    pub stage_length: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    /// Five stages for optimizations started from a uniform design.
    FiveStage,
    /// Shorter three-stage schedule used when an initial design is supplied.
    ThreeStage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationSchedule {
    pub stages: Vec<ContinuationStage>,
    pub stage_length: usize,
}

const FIVE_STAGE: [ContinuationStage; 5] = [
    ContinuationStage {
        q_c: 0.881,
        q_p: 8.0,
        kappa_solid: 1e-5,
    },
    ContinuationStage {
        q_c: 8.81,
        q_p: 8.0,
        kappa_solid: 1e-5,
    },
    ContinuationStage {
        q_c: 88.1,
        q_p: 8.0,
        kappa_solid: 1e-5,
    },
    ContinuationStage {
        q_c: 88.1,
        q_p: 98.0,
        kappa_solid: 1e-6,
    },
    ContinuationStage {
        q_c: 881.0,
        q_p: 998.0,
        kappa_solid: 1e-7,
    },
];

const THREE_STAGE: [ContinuationStage; 3] = [
    ContinuationStage {
        q_c: 8.81,
        q_p: 8.0,
        kappa_solid: 1e-5,
    },
    ContinuationStage {
        q_c: 88.1,
        q_p: 98.0,
        kappa_solid: 1e-6,
    },
    ContinuationStage {
        q_c: 88.1,
        q_p: 998.0,
        kappa_solid: 1e-7,
    },
];

impl ContinuationSchedule {
    pub fn new(kind: ScheduleKind, stage_length: usize) -> Result<Self> {
        if stage_length == 0 {
            return Err(Error::invalid("stage length must be at least 1"));
        }
        let stages = match kind {
            ScheduleKind::FiveStage => FIVE_STAGE.to_vec(),
            ScheduleKind::ThreeStage => THREE_STAGE.to_vec(),
        };
        Ok(Self { stages, stage_length })
    }

    /// Total iterations covered by the schedule.
    pub fn total_iterations(&self) -> usize {
        self.stages.len() * self.stage_length
    }

    pub fn last(&self) -> ContinuationState {
        self.state(self.stages.len() - 1)
    }

    pub fn state(&self, stage: usize) -> ContinuationState {
        let s = self.stages[stage];
        ContinuationState {
            stage,
            q_c: s.q_c,
            q_p: s.q_p,
            kappa_solid: s.kappa_solid,
            stage_length: self.stage_length,
        }
    }

    /// Parameters for `iteration` out of `total_iterations`. Iterations past
    /// the last stage boundary stay in the final stage.
    pub fn at(&self, iteration: usize, total_iterations: usize) -> Result<ContinuationState> {
        if iteration >= total_iterations {
            return Err(Error::OutOfRange {
                iteration,
                total: total_iterations,
            });
        }
        let stage = (iteration / self.stage_length).min(self.stages.len() - 1);
        Ok(self.state(stage))
    }
}

pub fn continuation_schedule(
    kind: ScheduleKind,
    iteration: usize,
    total_iterations: usize,
    stage_length: usize,
) -> Result<ContinuationState> {
    ContinuationSchedule::new(kind, stage_length)?.at(iteration, total_iterations)
}

/// Inputs to the fluid-permeability tuning relation. `h` is the enclosure
/// height and `l` the plate spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningInputs {
    pub h: f64,
    pub l: f64,
    pub delta_t: f64,
    pub alpha: f64,
    pub g: f64,
    /// Kinematic viscosity [m^2/s].
    pub nu: f64,
    /// Thermal diffusivity of the porous medium [m^2/s].
    pub beta_m: f64,
    pub prandtl: f64,
}

impl TuningInputs {
    /// Unit values everywhere except the geometry, `alpha` and `delta_t`.
    pub fn unit(h: f64, l: f64, alpha: f64, delta_t: f64) -> Self {
        Self {
            h,
            l,
            delta_t,
            alpha,
            g: 1.0,
            nu: 1.0,
            beta_m: 1.0,
            prandtl: 1.0,
        }
    }

    pub fn rayleigh_h(&self) -> f64 {
        self.grashof_h() * self.prandtl
    }

    pub fn grashof_h(&self) -> f64 {
        self.g * self.alpha * self.delta_t * self.h.powi(3) / (self.nu * self.nu)
    }

    /// Average Nusselt number of a pure-fluid enclosure.
    pub fn nusselt_fluid(&self) -> f64 {
        0.18 * (self.prandtl / (0.2 + self.prandtl) * self.rayleigh_h()).powf(0.29)
    }

    /// Average Nusselt number of a porous enclosure with permeability `kappa`.
    pub fn nusselt_porous(&self, kappa: f64) -> f64 {
        let ra = self.g * self.alpha * kappa * self.h * self.delta_t / (self.nu * self.beta_m);
        self.l / self.h * ra.sqrt()
    }
}

/// Permeability that gives the porous enclosure the same Nusselt number as
/// the pure-fluid enclosure.
pub fn tune_fluid_permeability(inp: &TuningInputs) -> Result<f64> {
    let fields = [
        ("h", inp.h),
        ("l", inp.l),
        ("delta_t", inp.delta_t),
        ("alpha", inp.alpha),
        ("g", inp.g),
        ("nu", inp.nu),
        ("beta_m", inp.beta_m),
        ("prandtl", inp.prandtl),
    ];
    for (name, v) in fields {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(format!("tuning input {name} must be positive, got {v}")));
        }
    }
    let pr = inp.prandtl;
    let buoyancy = inp.g * inp.alpha * inp.delta_t;
    Ok(
        0.0324 * inp.beta_m * inp.h.powf(1.74) / (inp.nu.powf(0.16) * buoyancy.powf(0.42) * inp.l * inp.l)
            * (pr * pr / (0.2 + pr)).powf(0.58),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn interp(q_c: f64, q_p: f64) -> Interpolation {
        Interpolation {
            q_c,
            q_p,
            k_fluid: 1.0,
            k_solid: 100.0,
            kappa_solid: 1e-5,
            kappa_fluid: 3.6e-4,
        }
    }

    #[test]
    fn conductivity_values() {
        assert_eq!(ramp_conductivity(0.0, 0.881, 1.0, 100.0).unwrap(), 1.0);
        assert_eq!(ramp_conductivity(1.0, 0.881, 1.0, 100.0).unwrap(), 100.0);
        let mid = ramp_conductivity(0.5, 0.881, 1.0, 100.0).unwrap();
        assert!((mid - (1.0 + 0.5 / 1.4405 * 99.0)).abs() < 1e-12);
        assert!((mid - 35.36).abs() < 5e-3);
        assert!(ramp_conductivity(1.2, 0.881, 1.0, 100.0).is_err());
        assert!(ramp_conductivity(-0.1, 0.881, 1.0, 100.0).is_err());
    }

    #[test]
    fn permeability_values() {
        assert_eq!(ramp_permeability(1.0, 8.0, 1e-5, 3.6e-4).unwrap(), 1e-5);
        assert!((ramp_permeability(0.0, 8.0, 1e-5, 3.6e-4).unwrap() - 3.6e-4).abs() < 1e-18);
        let mid = ramp_permeability(0.5, 8.0, 1e-5, 3.6e-4).unwrap();
        assert!((mid - 4.5e-5).abs() < 1e-15);
        assert!(ramp_permeability(f64::NAN, 8.0, 1e-5, 3.6e-4).is_err());
    }

    #[test]
    fn zero_penalization_is_linear() {
        let it = interp(0.0, 0.0);
        for g in [0.0, 0.1, 0.37, 0.5, 0.9, 1.0] {
            assert!((it.conductivity(g) - (1.0 + 99.0 * g)).abs() < 1e-12);
            assert!((it.permeability(g) - (3.6e-4 + (1e-5 - 3.6e-4) * g)).abs() < 1e-16);
        }
    }

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-6;
        for (qc, qp) in [(0.881, 8.0), (88.1, 98.0), (881.0, 998.0)] {
            let it = interp(qc, qp);
            for g in [0.05, 0.2, 0.5, 0.8, 0.95] {
                let fd = (it.conductivity(g + h) - it.conductivity(g - h)) / (2.0 * h);
                let an = it.conductivity_derivative(g);
                assert!((fd - an).abs() <= 1e-8 * an.abs(), "k' {fd} {an}");
                let fd = (it.permeability(g + h) - it.permeability(g - h)) / (2.0 * h);
                let an = it.permeability_derivative(g);
                assert!((fd - an).abs() <= 1e-8 * an.abs(), "kappa' {fd} {an}");
            }
        }
    }

    proptest! {
        #[test]
        fn interpolation_bounded_and_monotone(g in 0.0f64..=1.0, qc in 0.0f64..1000.0, qp in 0.0f64..1000.0) {
            let it = interp(qc, qp);
            let k = it.conductivity(g);
            let kap = it.permeability(g);
            prop_assert!(k >= 1.0 - 1e-12 && k <= 100.0 + 1e-12);
            prop_assert!(kap >= 1e-5 - 1e-18 && kap <= 3.6e-4 + 1e-18);
            prop_assert!(it.conductivity_derivative(g) > 0.0);
            prop_assert!(it.permeability_derivative(g) < 0.0);
        }
    }

    #[test]
    fn five_stage_schedule() {
        let s = ContinuationSchedule::new(ScheduleKind::FiveStage, 100).unwrap();
        let c = s.at(0, 500).unwrap();
        assert_eq!((c.q_c, c.q_p, c.kappa_solid), (0.881, 8.0, 1e-5));
        let c = s.at(450, 500).unwrap();
        assert_eq!((c.q_c, c.q_p, c.kappa_solid), (881.0, 998.0, 1e-7));
        assert!(matches!(s.at(500, 500), Err(Error::OutOfRange { .. })));
        let qc: Vec<f64> = (0..5).map(|k| s.at(k * 100, 500).unwrap().q_c).collect();
        assert_eq!(qc, vec![0.881, 8.81, 88.1, 88.1, 881.0]);
        let ks: Vec<f64> = (0..5).map(|k| s.at(k * 100 + 99, 500).unwrap().kappa_solid).collect();
        assert_eq!(ks, vec![1e-5, 1e-5, 1e-5, 1e-6, 1e-7]);
    }

    #[test]
    fn three_stage_schedule() {
        let c = continuation_schedule(ScheduleKind::ThreeStage, 150, 300, 100).unwrap();
        assert_eq!((c.q_c, c.q_p, c.kappa_solid), (88.1, 98.0, 1e-6));
        assert!(continuation_schedule(ScheduleKind::ThreeStage, 0, 300, 0).is_err());
    }

    #[test]
    fn schedule_parameters_monotone() {
        for kind in [ScheduleKind::FiveStage, ScheduleKind::ThreeStage] {
            let s = ContinuationSchedule::new(kind, 1).unwrap();
            for w in s.stages.windows(2) {
                assert!(w[1].q_c >= w[0].q_c);
                assert!(w[1].q_p >= w[0].q_p);
                assert!(w[1].kappa_solid <= w[0].kappa_solid);
            }
        }
    }

    #[test]
    fn tuned_permeability_table() {
        let cases = [
            (1e3, 1.7, 0.5, 0.00513),
            (1e4, 1.5, 0.5, 0.00206),
            (1e5, 1.2, 0.5, 0.00085),
            (1e6, 0.613, 0.4, 0.000676),
        ];
        for (alpha, dt, l, expected) in cases {
            let k = tune_fluid_permeability(&TuningInputs::unit(1.0, l, alpha, dt)).unwrap();
            assert!((k - expected).abs() / expected < 0.01, "alpha {alpha}: {k}");
        }
        let k6 = tune_fluid_permeability(&TuningInputs::unit(1.0, 0.5, 1e6, 0.9)).unwrap();
        assert!((k6 - 3.6804e-4).abs() < 1e-8, "{k6}");
    }

    #[test]
    fn tuned_permeability_equates_nusselt_numbers() {
        let inp = TuningInputs::unit(1.0, 0.5, 1e4, 1.5);
        let k = tune_fluid_permeability(&inp).unwrap();
        let rel = (inp.nusselt_porous(k) - inp.nusselt_fluid()).abs() / inp.nusselt_fluid();
        assert!(rel < 1e-12, "{rel}");
    }

    #[test]
    fn tuning_decreases_with_alpha_and_delta_t() {
        let base = tune_fluid_permeability(&TuningInputs::unit(1.0, 0.5, 1e4, 1.0)).unwrap();
        assert!(tune_fluid_permeability(&TuningInputs::unit(1.0, 0.5, 1e5, 1.0)).unwrap() < base);
        assert!(tune_fluid_permeability(&TuningInputs::unit(1.0, 0.5, 1e4, 2.0)).unwrap() < base);
        assert!(tune_fluid_permeability(&TuningInputs::unit(1.0, 0.0, 1e4, 1.0)).is_err());
    }
}
