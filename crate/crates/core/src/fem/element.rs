//! Trilinear hexahedral kernels for the stabilized pressure-temperature system.
//!
//! Local state ordering is `[p_0..p_7, t_0..t_7]`. With `c = kappa / mu`, the
//! Darcy velocity is `u = -c (grad P + rho0 alpha g T)` and the element
//! residual reads
//!
//! ```text
//! R_p = c (K p + G t)
//! R_t = k K t + sum_q w_q N*_q (rho0 cp u_q . grad T_q - Q)
//! ```
//!
//! where `K = int B^T B`, `G = int rho0 alpha B^T g N^T` and the streamline
//! upwind weight `N* = N + tau B^T u0` uses the centroid velocity `u0`.

use crate::error::{Error, Result};
use crate::materials::PhysicalParams;
use crate::mesh::HEX_CORNERS;

pub type Vec8 = [f64; 8];
pub type Vec16 = [f64; 16];
pub type Mat16 = [[f64; 16]; 16];

const GAUSS: f64 = 0.577_350_269_189_625_8;

/// Shape function values, physical gradients and integration weight at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapePoint {
    pub n: Vec8,
    /// Rows are d/dx, d/dy, d/dz.
    pub b: [Vec8; 3],
    /// Quadrature weight times the Jacobian determinant.
    pub weight: f64,
}

/// Quadrature data of one hexahedron (2x2x2 Gauss plus the centroid).
#[derive(Debug, Clone, PartialEq)]
pub struct ElementGeometry {
    pub points: [ShapePoint; 8],
    pub centroid: ShapePoint,
    pub h_e: f64,
    pub volume: f64,
}

fn corner_signs() -> [[f64; 3]; 8] {
    HEX_CORNERS.map(|c| c.map(|v| 2.0 * v as f64 - 1.0))
}

fn shape_at(coords: &[[f64; 3]; 8], xi: [f64; 3]) -> std::result::Result<ShapePoint, f64> {
    let signs = corner_signs();
    let mut n = [0.0; 8];
    let mut dn = [[0.0; 8]; 3];
    for a in 0..8 {
        let s = signs[a];
        let f = [1.0 + s[0] * xi[0], 1.0 + s[1] * xi[1], 1.0 + s[2] * xi[2]];
        n[a] = 0.125 * f[0] * f[1] * f[2];
        dn[0][a] = 0.125 * s[0] * f[1] * f[2];
        dn[1][a] = 0.125 * s[1] * f[0] * f[2];
        dn[2][a] = 0.125 * s[2] * f[0] * f[1];
    }
    // jac[i][j] = d x_i / d xi_j
    let mut jac = [[0.0; 3]; 3];
    for a in 0..8 {
        for i in 0..3 {
            for j in 0..3 {
                jac[i][j] += coords[a][i] * dn[j][a];
            }
        }
    }
    let det = jac[0][0] * (jac[1][1] * jac[2][2] - jac[1][2] * jac[2][1])
        - jac[0][1] * (jac[1][0] * jac[2][2] - jac[1][2] * jac[2][0])
        + jac[0][2] * (jac[1][0] * jac[2][1] - jac[1][1] * jac[2][0]);
    if !(det > 0.0) {
        return Err(det);
    }
    // inv[j][i] = d xi_j / d x_i
    let inv = [
        [
            (jac[1][1] * jac[2][2] - jac[1][2] * jac[2][1]) / det,
            (jac[0][2] * jac[2][1] - jac[0][1] * jac[2][2]) / det,
            (jac[0][1] * jac[1][2] - jac[0][2] * jac[1][1]) / det,
        ],
        [
            (jac[1][2] * jac[2][0] - jac[1][0] * jac[2][2]) / det,
            (jac[0][0] * jac[2][2] - jac[0][2] * jac[2][0]) / det,
            (jac[0][2] * jac[1][0] - jac[0][0] * jac[1][2]) / det,
        ],
        [
            (jac[1][0] * jac[2][1] - jac[1][1] * jac[2][0]) / det,
            (jac[0][1] * jac[2][0] - jac[0][0] * jac[2][1]) / det,
            (jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0]) / det,
        ],
    ];
    let mut b = [[0.0; 8]; 3];
    for a in 0..8 {
        for i in 0..3 {
            b[i][a] = (0..3).map(|j| inv[j][i] * dn[j][a]).sum();
        }
    }
    Ok(ShapePoint { n, b, weight: det })
}

impl ElementGeometry {
    /// `element` is only used to label a geometry error.
    pub fn new(coords: &[[f64; 3]; 8], element: usize) -> Result<Self> {
        let err = |det_j| Error::Geometry { element, det_j };
        let signs = corner_signs();
        let mut points = [ShapePoint {
            n: [0.0; 8],
            b: [[0.0; 8]; 3],
            weight: 0.0,
        }; 8];
        for (q, s) in signs.iter().enumerate() {
            points[q] = shape_at(coords, s.map(|v| v * GAUSS)).map_err(err)?;
        }
        let mut centroid = shape_at(coords, [0.0; 3]).map_err(err)?;
        centroid.weight = 0.0;
        let volume = points.iter().map(|p| p.weight).sum();
        let ext: Vec<f64> = (0..3)
            .map(|i| {
                let (lo, hi) = coords.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                    (lo.min(c[i]), hi.max(c[i]))
                });
                hi - lo
            })
            .collect();
        let h_e = (ext[0] * ext[0] + ext[1] * ext[1] + ext[2] * ext[2]).sqrt();
        Ok(Self {
            points,
            centroid,
            h_e,
            volume,
        })
    }

    /// Axis-aligned brick with the given edge lengths.
    pub fn brick(dx: f64, dy: f64, dz: f64) -> Result<Self> {
        let coords = HEX_CORNERS.map(|c| [c[0] as f64 * dx, c[1] as f64 * dy, c[2] as f64 * dz]);
        Self::new(&coords, 0)
    }
}

/// Streamline-upwind stabilization parameter, `(tau1^-2 + tau3^-2)^(-1/2)`
/// with `tau1 = h / (2 |u0|)` and `tau3 = h^2 / 4`.
pub fn stabilization_tau(u0: [f64; 3], h_e: f64) -> f64 {
    let u2 = u0[0] * u0[0] + u0[1] * u0[1] + u0[2] * u0[2];
    (4.0 * u2 / (h_e * h_e) + 16.0 / (h_e * h_e * h_e * h_e)).powf(-0.5)
}

/// Whether the Jacobian differentiates the stabilization parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TauMode {
    #[default]
    Consistent,
    /// Treat `tau` as a constant in the linearization. Debugging aid only:
    /// the Jacobian is then no longer exact.
    Frozen,
}

/// Per-element material data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementProps {
    pub kappa: f64,
    pub conductivity: f64,
    /// Volumetric heat source [W/m^3].
    pub source: f64,
}

/// Partial derivatives of the element residual with respect to the material data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropertyDerivatives {
    pub d_kappa: Vec16,
    pub d_conductivity: Vec16,
}

/// Element kernel: a geometry plus the constant matrices that only depend on
/// geometry and physical constants.
#[derive(Debug, Clone)]
pub struct ElementKernel {
    pub geom: ElementGeometry,
    rho0_cp: f64,
    mu: f64,
    /// `rho0 alpha g`.
    buoy: [f64; 3],
    stiffness: [Vec8; 8],
    coupling: [Vec8; 8],
    pub tau_mode: TauMode,
}

/// Quantities at the centroid shared by all kernels of one element evaluation.
struct Centroid {
    c: f64,
    /// Unscaled velocity, `u0 = c * v0`.
    v0: [f64; 3],
    u0: [f64; 3],
    tau: f64,
    /// d tau / d u0.
    dtau_du: [f64; 3],
}

#[inline]
fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn dot8(a: &Vec8, b: &Vec8) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn grad(b: &[Vec8; 3], v: &Vec8) -> [f64; 3] {
    [dot8(&b[0], v), dot8(&b[1], v), dot8(&b[2], v)]
}

/// `B^T w` for a 3-vector `w`.
#[inline]
fn bt(b: &[Vec8; 3], w: &[f64; 3]) -> Vec8 {
    std::array::from_fn(|a| b[0][a] * w[0] + b[1][a] * w[1] + b[2][a] * w[2])
}

fn split(s: &Vec16) -> (Vec8, Vec8) {
    let mut p = [0.0; 8];
    let mut t = [0.0; 8];
    p.copy_from_slice(&s[..8]);
    t.copy_from_slice(&s[8..]);
    (p, t)
}

impl ElementKernel {
    pub fn new(geom: ElementGeometry, params: &PhysicalParams) -> Self {
        let buoy = params.gravity.map(|g| params.rho0 * params.alpha * g);
        let mut stiffness = [[0.0; 8]; 8];
        let mut coupling = [[0.0; 8]; 8];
        for q in &geom.points {
            let bg = bt(&q.b, &buoy);
            for a in 0..8 {
                for c in 0..8 {
                    stiffness[a][c] +=
                        q.weight * (q.b[0][a] * q.b[0][c] + q.b[1][a] * q.b[1][c] + q.b[2][a] * q.b[2][c]);
                    coupling[a][c] += q.weight * bg[a] * q.n[c];
                }
            }
        }
        Self {
            geom,
            rho0_cp: params.rho0 * params.cp,
            mu: params.mu,
            buoy,
            stiffness,
            coupling,
            tau_mode: TauMode::Consistent,
        }
    }

    pub fn from_coords(coords: &[[f64; 3]; 8], params: &PhysicalParams) -> Result<Self> {
        Ok(Self::new(ElementGeometry::new(coords, 0)?, params))
    }

    /// `-(B p + rho0 alpha g N.t)` at a point.
    #[inline]
    fn unscaled_velocity(&self, pt: &ShapePoint, p: &Vec8, t: &Vec8) -> [f64; 3] {
        let gp = grad(&pt.b, p);
        let tn = dot8(&pt.n, t);
        [
            -(gp[0] + self.buoy[0] * tn),
            -(gp[1] + self.buoy[1] * tn),
            -(gp[2] + self.buoy[2] * tn),
        ]
    }

    fn centroid(&self, kappa: f64, p: &Vec8, t: &Vec8) -> Centroid {
        let c = kappa / self.mu;
        let v0 = self.unscaled_velocity(&self.geom.centroid, p, t);
        let u0 = v0.map(|v| c * v);
        let tau = stabilization_tau(u0, self.geom.h_e);
        let h2 = self.geom.h_e * self.geom.h_e;
        let k = -4.0 * tau * tau * tau / h2;
        Centroid {
            c,
            v0,
            u0,
            tau,
            dtau_du: u0.map(|u| k * u),
        }
    }

    /// Darcy velocity at the element centroid.
    pub fn centroid_velocity(&self, kappa: f64, s: &Vec16) -> [f64; 3] {
        let (p, t) = split(s);
        self.centroid(kappa, &p, &t).u0
    }

    pub fn residual(&self, props: &ElementProps, s: &Vec16) -> Vec16 {
        let (p, t) = split(s);
        let cen = self.centroid(props.kappa, &p, &t);
        let mut r = [0.0; 16];
        for a in 0..8 {
            r[a] = cen.c * (dot8(&self.stiffness[a], &p) + dot8(&self.coupling[a], &t));
            r[a + 8] = props.conductivity * dot8(&self.stiffness[a], &t);
        }
        for q in &self.geom.points {
            let v = self.unscaled_velocity(q, &p, &t);
            let gt = grad(&q.b, &t);
            let conv = self.rho0_cp * cen.c * dot3(&v, &gt) - props.source;
            let supg = bt(&q.b, &cen.u0);
            for a in 0..8 {
                r[a + 8] += q.weight * (q.n[a] + cen.tau * supg[a]) * conv;
            }
        }
        r
    }

    /// Derivatives of the centroid velocity with respect to the local state.
    fn du0_ds(&self, cen: &Centroid) -> [[f64; 16]; 3] {
        let pt = &self.geom.centroid;
        let mut du = [[0.0; 16]; 3];
        for i in 0..3 {
            for b in 0..8 {
                du[i][b] = -cen.c * pt.b[i][b];
                du[i][b + 8] = -cen.c * self.buoy[i] * pt.n[b];
            }
        }
        du
    }

    /// Residual and its exact derivative with respect to the local state.
    pub fn jacobian(&self, props: &ElementProps, s: &Vec16) -> (Vec16, Mat16) {
        let (p, t) = split(s);
        let cen = self.centroid(props.kappa, &p, &t);
        let du0 = self.du0_ds(&cen);
        let dtau: [f64; 16] = match self.tau_mode {
            TauMode::Consistent => std::array::from_fn(|j| {
                cen.dtau_du[0] * du0[0][j] + cen.dtau_du[1] * du0[1][j] + cen.dtau_du[2] * du0[2][j]
            }),
            TauMode::Frozen => [0.0; 16],
        };

        let mut r = [0.0; 16];
        let mut jac = [[0.0; 16]; 16];
        for a in 0..8 {
            r[a] = cen.c * (dot8(&self.stiffness[a], &p) + dot8(&self.coupling[a], &t));
            r[a + 8] = props.conductivity * dot8(&self.stiffness[a], &t);
            for b in 0..8 {
                jac[a][b] = cen.c * self.stiffness[a][b];
                jac[a][b + 8] = cen.c * self.coupling[a][b];
                jac[a + 8][b + 8] = props.conductivity * self.stiffness[a][b];
            }
        }

        // sum_q w_q conv_q B_q, used for the derivative of the upwind weight
        let mut conv_b = [[0.0; 8]; 3];
        for q in &self.geom.points {
            let v = self.unscaled_velocity(q, &p, &t);
            let gt = grad(&q.b, &t);
            let conv = self.rho0_cp * cen.c * dot3(&v, &gt) - props.source;
            let supg = bt(&q.b, &cen.u0);
            let nstar: Vec8 = std::array::from_fn(|a| q.n[a] + cen.tau * supg[a]);
            // d conv / d s
            let scale = self.rho0_cp * cen.c;
            let gt_buoy = dot3(&gt, &self.buoy);
            let mut dconv = [0.0; 16];
            for b in 0..8 {
                dconv[b] = -scale * (gt[0] * q.b[0][b] + gt[1] * q.b[1][b] + gt[2] * q.b[2][b]);
                dconv[b + 8] = scale * (-gt_buoy * q.n[b] + v[0] * q.b[0][b] + v[1] * q.b[1][b] + v[2] * q.b[2][b]);
            }
            for a in 0..8 {
                r[a + 8] += q.weight * nstar[a] * conv;
                let wn = q.weight * nstar[a];
                let row = &mut jac[a + 8];
                for j in 0..16 {
                    row[j] += wn * dconv[j];
                }
            }
            for i in 0..3 {
                for a in 0..8 {
                    conv_b[i][a] += q.weight * conv * q.b[i][a];
                }
            }
        }
        // d N* / d s contracted with the convection term
        let cu = bt(&conv_b, &cen.u0);
        for a in 0..8 {
            let row = &mut jac[a + 8];
            for j in 0..16 {
                let dua = conv_b[0][a] * du0[0][j] + conv_b[1][a] * du0[1][j] + conv_b[2][a] * du0[2][j];
                row[j] += cu[a] * dtau[j] + cen.tau * dua;
            }
        }
        (r, jac)
    }

    /// Partial derivatives of the residual with respect to permeability and conductivity.
    pub fn property_derivatives(&self, props: &ElementProps, s: &Vec16) -> PropertyDerivatives {
        let (p, t) = split(s);
        let cen = self.centroid(props.kappa, &p, &t);
        // d tau / d c through |u0|^2 = c^2 |v0|^2
        let dtau_dc = dot3(&cen.dtau_du, &cen.v0);
        let mut d_c = [0.0; 16];
        let mut d_k = [0.0; 16];
        for a in 0..8 {
            d_c[a] = dot8(&self.stiffness[a], &p) + dot8(&self.coupling[a], &t);
            d_k[a + 8] = dot8(&self.stiffness[a], &t);
        }
        for q in &self.geom.points {
            let v = self.unscaled_velocity(q, &p, &t);
            let gt = grad(&q.b, &t);
            let vgt = dot3(&v, &gt);
            let conv = self.rho0_cp * cen.c * vgt - props.source;
            let bv = bt(&q.b, &cen.v0);
            for a in 0..8 {
                let nstar = q.n[a] + cen.tau * cen.c * bv[a];
                let dnstar = bv[a] * (cen.tau + cen.c * dtau_dc);
                d_c[a + 8] += q.weight * (dnstar * conv + nstar * self.rho0_cp * vgt);
            }
        }
        PropertyDerivatives {
            d_kappa: d_c.map(|v| v / self.mu),
            d_conductivity: d_k,
        }
    }

    /// Element contribution `f_tQ^T t` to the thermal compliance.
    pub fn compliance(&self, props: &ElementProps, s: &Vec16) -> f64 {
        if props.source == 0.0 {
            return 0.0;
        }
        let (p, t) = split(s);
        let cen = self.centroid(props.kappa, &p, &t);
        self.geom
            .points
            .iter()
            .map(|q| {
                let supg = bt(&q.b, &cen.u0);
                q.weight * props.source * (0..8).map(|a| (q.n[a] + cen.tau * supg[a]) * t[a]).sum::<f64>()
            })
            .sum()
    }

    /// Gradient of [`Self::compliance`] with respect to the local state, and
    /// its partial derivative with respect to the permeability.
    pub fn compliance_gradient(&self, props: &ElementProps, s: &Vec16) -> (Vec16, f64) {
        let mut out = [0.0; 16];
        if props.source == 0.0 {
            return (out, 0.0);
        }
        let (p, t) = split(s);
        let cen = self.centroid(props.kappa, &p, &t);
        let du0 = self.du0_ds(&cen);
        let mut gt_bar = [0.0; 3];
        for q in &self.geom.points {
            let gt = grad(&q.b, &t);
            let supg = bt(&q.b, &cen.u0);
            for i in 0..3 {
                gt_bar[i] += q.weight * gt[i];
            }
            for a in 0..8 {
                out[a + 8] += q.weight * props.source * (q.n[a] + cen.tau * supg[a]);
            }
        }
        let tu = dot3(&gt_bar, &cen.u0);
        for j in 0..16 {
            let dtau = match self.tau_mode {
                TauMode::Consistent => {
                    cen.dtau_du[0] * du0[0][j] + cen.dtau_du[1] * du0[1][j] + cen.dtau_du[2] * du0[2][j]
                }
                TauMode::Frozen => 0.0,
            };
            let du = gt_bar[0] * du0[0][j] + gt_bar[1] * du0[1][j] + gt_bar[2] * du0[2][j];
            out[j] += props.source * (tu * dtau + cen.tau * du);
        }
        let dtau_dc = dot3(&cen.dtau_du, &cen.v0);
        let d_c = props.source * dot3(&gt_bar, &cen.v0) * (cen.tau + cen.c * dtau_dc);
        (out, d_c / self.mu)
    }
}

/// Residual of a single element given its corner coordinates.
pub fn element_residual(
    coords: &[[f64; 3]; 8],
    s_e: &Vec16,
    props: &ElementProps,
    params: &PhysicalParams,
) -> Result<Vec16> {
    Ok(ElementKernel::from_coords(coords, params)?.residual(props, s_e))
}

/// Consistent linearization of [`element_residual`].
pub fn element_jacobian(
    coords: &[[f64; 3]; 8],
    s_e: &Vec16,
    props: &ElementProps,
    params: &PhysicalParams,
) -> Result<Mat16> {
    Ok(ElementKernel::from_coords(coords, params)?.jacobian(props, s_e).1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(alpha: f64) -> PhysicalParams {
        PhysicalParams {
            rho0: 1.0,
            mu: 1.0,
            cp: 1.0,
            alpha,
            gravity: [0.0, 0.0, -1.0],
            heat_source: 1e4,
            k_solid: 100.0,
            k_fluid: 1.0,
            kappa_fluid: 3.6e-4,
        }
    }

    fn brick() -> [[f64; 3]; 8] {
        HEX_CORNERS.map(|c| [c[0] as f64 * 0.1, c[1] as f64 * 0.15, c[2] as f64 * 0.12])
    }

    fn distorted() -> [[f64; 3]; 8] {
        let mut c = brick();
        c[6] = [0.13, 0.17, 0.14];
        c[1][2] += 0.01;
        c
    }

    #[test]
    fn tau_values() {
        assert!((stabilization_tau([0.0; 3], 2.0) - 1.0).abs() < 1e-15);
        let t = stabilization_tau([2.0, 0.0, 0.0], 2.0);
        assert!((t - 5f64.powf(-0.5)).abs() < 1e-15);
        assert!((t - 0.4472).abs() < 1e-4);
        let fast = stabilization_tau([1e3, 0.0, 0.0], 1.0);
        let tau1 = 1.0 / (2.0 * 1e3);
        assert!((fast / tau1 - 1.0).abs() < 0.01);
    }

    #[test]
    fn partition_of_unity_and_constant_annihilation() {
        let g = ElementGeometry::new(&distorted(), 0).unwrap();
        for q in g.points.iter().chain(std::iter::once(&g.centroid)) {
            assert!((q.n.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for i in 0..3 {
                assert!(q.b[i].iter().sum::<f64>().abs() < 1e-12);
            }
        }
        let b = ElementGeometry::brick(0.1, 0.15, 0.12).unwrap();
        assert!((b.volume - 0.1 * 0.15 * 0.12).abs() < 1e-16);
    }

    #[test]
    fn gradient_of_linear_field_is_exact() {
        let coords = distorted();
        let g = ElementGeometry::new(&coords, 0).unwrap();
        let f: Vec8 = std::array::from_fn(|a| 2.0 * coords[a][0] - 3.0 * coords[a][1] + 0.5 * coords[a][2]);
        for q in &g.points {
            let gr = grad(&q.b, &f);
            assert!((gr[0] - 2.0).abs() < 1e-12 && (gr[1] + 3.0).abs() < 1e-12 && (gr[2] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_element_is_rejected() {
        let mut c = brick();
        c[4] = c[0];
        c[5] = c[1];
        c[6] = c[2];
        c[7] = c[3];
        assert!(matches!(
            ElementGeometry::new(&c, 7),
            Err(Error::Geometry { element: 7, .. })
        ));
    }

    #[test]
    fn constant_pressure_null_state() {
        let k = ElementKernel::from_coords(&brick(), &params(1e6)).unwrap();
        let mut s = [0.0; 16];
        s[..8].fill(3.7);
        let props = ElementProps {
            kappa: 1e-3,
            conductivity: 2.0,
            source: 0.0,
        };
        assert!(k.residual(&props, &s).iter().all(|r| r.abs() < 1e-15));
    }

    #[test]
    fn centroid_velocity_matches_darcy_law() {
        let prm = PhysicalParams {
            alpha: 1.0,
            ..params(1.0)
        };
        let k = ElementKernel::from_coords(&brick(), &prm).unwrap();
        // P = -x gives u = (c, 0, 0)
        let mut s = [0.0; 16];
        for a in 0..8 {
            s[a] = -brick()[a][0];
        }
        let u = k.centroid_velocity(0.3, &s);
        assert!((u[0] - 0.3).abs() < 1e-14 && u[1].abs() < 1e-14 && u[2].abs() < 1e-14);
        // uniform T0 with g pointing down gives upward flow kappa T0 / mu
        let mut s = [0.0; 16];
        s[8..].fill(2.0);
        let u = k.centroid_velocity(0.3, &s);
        assert!(u[0].abs() < 1e-15 && (u[2] - 0.6).abs() < 1e-14);
    }

    #[test]
    fn single_element_temperature_row_by_hand() {
        // pure fluid, P = 0, linear temperature; evaluate the weak form directly
        let prm = PhysicalParams {
            alpha: 1.0,
            ..params(1.0)
        };
        let coords = brick();
        let k = ElementKernel::from_coords(&coords, &prm).unwrap();
        let props = ElementProps {
            kappa: 0.5,
            conductivity: 1.0,
            source: 0.0,
        };
        let mut s = [0.0; 16];
        for a in 0..8 {
            s[8 + a] = 1.0 + coords[a][2] * 4.0;
        }
        let r = k.residual(&props, &s);
        // hand evaluation: grad T = (0,0,4); u = c T (0,0,1) with c = 0.5
        let g = ElementGeometry::new(&coords, 0).unwrap();
        let tbar = 1.0 + 0.06 * 4.0;
        let u0 = [0.0, 0.0, 0.5 * tbar];
        let tau = stabilization_tau(u0, g.h_e);
        for a in 0..8 {
            let mut expect = 0.0;
            for q in &g.points {
                let tq = 1.0 + 4.0 * (0..8).map(|b| q.n[b] * coords[b][2]).sum::<f64>();
                let conv = 0.5 * tq * 4.0;
                expect += q.weight * (q.b[2][a] * 4.0 + (q.n[a] + tau * q.b[2][a] * u0[2]) * conv);
            }
            assert!((r[a + 8] - expect).abs() < 1e-12 * (1.0 + expect.abs()), "{a}");
            assert!(r[a].abs() > 0.0);
        }
    }

    fn random_case(rng: &mut ChaCha8Rng) -> (Vec16, ElementProps) {
        let s: Vec16 = std::array::from_fn(|i| {
            if i < 8 {
                rng.gen_range(-5.0..5.0)
            } else {
                rng.gen_range(0.0..3.0)
            }
        });
        let props = ElementProps {
            kappa: rng.gen_range(1e-5..5e-3),
            conductivity: rng.gen_range(1.0..100.0),
            source: rng.gen_range(0.0..1e4),
        };
        (s, props)
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for coords in [brick(), distorted()] {
            let k = ElementKernel::from_coords(&coords, &params(1e6)).unwrap();
            for _ in 0..20 {
                let (s, props) = random_case(&mut rng);
                let (r0, jac) = k.jacobian(&props, &s);
                assert_eq!(r0, k.residual(&props, &s));
                let scale = jac.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
                let mut worst = 0.0f64;
                for j in 0..16 {
                    let h = 1e-6 * (1.0 + s[j].abs());
                    let mut sp = s;
                    let mut sm = s;
                    sp[j] += h;
                    sm[j] -= h;
                    let (rp, rm) = (k.residual(&props, &sp), k.residual(&props, &sm));
                    for i in 0..16 {
                        let fd = (rp[i] - rm[i]) / (2.0 * h);
                        worst = worst.max((fd - jac[i][j]).abs());
                    }
                }
                assert!(worst / scale < 1e-6, "relative error {}", worst / scale);
            }
        }
    }

    #[test]
    fn frozen_tau_matches_exact_at_rest() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut s, props) = random_case(&mut rng);
        // dtau/du vanishes at u = 0, so both Jacobians must agree there.
        let mut k = ElementKernel::from_coords(&brick(), &params(0.0)).unwrap();
        s[..8].fill(1.5);
        let exact = k.jacobian(&props, &s).1;
        k.tau_mode = TauMode::Frozen;
        assert_eq!(exact, k.jacobian(&props, &s).1);

        let mut k = ElementKernel::from_coords(&brick(), &params(1e6)).unwrap();
        let (s, props) = random_case(&mut rng);
        let exact = k.jacobian(&props, &s).1;
        k.tau_mode = TauMode::Frozen;
        assert_ne!(exact, k.jacobian(&props, &s).1);
    }

    #[test]
    fn pressure_rows_independent_of_temperature_without_buoyancy() {
        let k = ElementKernel::from_coords(&brick(), &params(0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (s, props) = random_case(&mut rng);
        let jac = k.jacobian(&props, &s).1;
        for a in 0..8 {
            for b in 8..16 {
                assert_eq!(jac[a][b], 0.0);
            }
        }
    }

    #[test]
    fn property_derivatives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = ElementKernel::from_coords(&distorted(), &params(1e5)).unwrap();
        for _ in 0..10 {
            let (s, props) = random_case(&mut rng);
            let d = k.property_derivatives(&props, &s);
            let hk = 1e-6 * props.kappa;
            let rp = k.residual(
                &ElementProps {
                    kappa: props.kappa + hk,
                    ..props
                },
                &s,
            );
            let rm = k.residual(
                &ElementProps {
                    kappa: props.kappa - hk,
                    ..props
                },
                &s,
            );
            let scale = d.d_kappa.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..16 {
                let fd = (rp[i] - rm[i]) / (2.0 * hk);
                assert!((fd - d.d_kappa[i]).abs() < 1e-6 * scale, "{i}: {fd} {}", d.d_kappa[i]);
            }
            let hc = 1e-6 * props.conductivity;
            let rp = k.residual(
                &ElementProps {
                    conductivity: props.conductivity + hc,
                    ..props
                },
                &s,
            );
            let rm = k.residual(
                &ElementProps {
                    conductivity: props.conductivity - hc,
                    ..props
                },
                &s,
            );
            for i in 0..16 {
                let fd = (rp[i] - rm[i]) / (2.0 * hc);
                assert!((fd - d.d_conductivity[i]).abs() < 1e-6 * (1.0 + d.d_conductivity[i].abs()));
            }
        }
    }

    #[test]
    fn compliance_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let k = ElementKernel::from_coords(&brick(), &params(1e6)).unwrap();
        for _ in 0..10 {
            let (s, mut props) = random_case(&mut rng);
            props.source = 1e4;
            let (g, dk) = k.compliance_gradient(&props, &s);
            let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for j in 0..16 {
                let h = 1e-6 * (1.0 + s[j].abs());
                let mut sp = s;
                let mut sm = s;
                sp[j] += h;
                sm[j] -= h;
                let fd = (k.compliance(&props, &sp) - k.compliance(&props, &sm)) / (2.0 * h);
                assert!((fd - g[j]).abs() < 1e-6 * scale, "{j}: {fd} {}", g[j]);
            }
            let hk = 1e-6 * props.kappa;
            let fd = (k.compliance(
                &ElementProps {
                    kappa: props.kappa + hk,
                    ..props
                },
                &s,
            ) - k.compliance(
                &ElementProps {
                    kappa: props.kappa - hk,
                    ..props
                },
                &s,
            )) / (2.0 * hk);
            assert!((fd - dk).abs() < 1e-6 * (1.0 + dk.abs()) * 1e3, "{fd} {dk}");
        }
    }

    #[test]
    fn uniform_temperature_compliance() {
        let coords = brick();
        let k = ElementKernel::from_coords(&coords, &params(1e3)).unwrap();
        let mut s = [0.0; 16];
        s[8..].fill(2.5);
        let props = ElementProps {
            kappa: 1e-5,
            conductivity: 100.0,
            source: 1e4,
        };
        // u0 is non-zero here (buoyancy), but sum_a (B^T u0)_a = 0 keeps the
        // partition of unity for a uniform field
        let f = k.compliance(&props, &s);
        let vol = 0.1 * 0.15 * 0.12;
        assert!((f - 2.5 * 1e4 * vol).abs() < 1e-9 * f);
    }
}
