//! Helmholtz density filter on the element grid.
//!
//! Solves `(I + r^2 L) y = x` where `L` is the cell-centred seven-point
//! Laplacian with zero-flux faces at the domain boundary and
//! `r = R / (2 sqrt 3)`. The operator is symmetric positive definite, its
//! rows sum to one, and it is an M-matrix, so the filter preserves constants,
//! the domain total and the bounds of its input.

use crate::error::{Error, Result};
use crate::mesh::{ElementRegion, RegionTags, StructuredMesh};
use crate::solver::conjugate_gradient;
use crate::sparse::CsrMatrix;

/// Relative tolerance of the filter solves.
const TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct FilterOperator {
    /// Physical filter radius [m].
    pub radius: f64,
    operator: Option<CsrMatrix>,
}

impl FilterOperator {
    /// Operator with no assembled matrix; applying it is an error.
    pub fn unassembled(radius: f64) -> Self {
        Self { radius, operator: None }
    }

    pub fn new(mesh: &StructuredMesh, radius: f64) -> Result<Self> {
        let mut op = Self::unassembled(radius);
        op.assemble(mesh)?;
        Ok(op)
    }

    /// Filter with radius `multiplier` times the largest element edge.
    pub fn with_element_multiple(mesh: &StructuredMesh, multiplier: f64) -> Result<Self> {
        Self::new(mesh, multiplier * mesh.dx.max(mesh.dy).max(mesh.dz))
    }

    pub fn length_scale(&self) -> f64 {
        self.radius / (2.0 * 3f64.sqrt())
    }

    pub fn is_assembled(&self) -> bool {
        self.operator.is_some()
    }

    pub fn assemble(&mut self, mesh: &StructuredMesh) -> Result<()> {
        if !(self.radius >= 0.0 && self.radius.is_finite()) {
            return Err(Error::invalid(format!(
                "filter radius must be finite and non-negative, got {}",
                self.radius
            )));
        }
        let r2 = self.length_scale().powi(2);
        let w = [
            r2 / (mesh.dx * mesh.dx),
            r2 / (mesh.dy * mesh.dy),
            r2 / (mesh.dz * mesh.dz),
        ];
        let n = mesh.num_elements();
        let mut triplets = Vec::with_capacity(7 * n);
        for e in 0..n {
            let mut diag = 1.0;
            for (f, nb) in mesh.face_neighbors(e).iter().enumerate() {
                if let Some(m) = *nb {
                    let c = w[f / 2];
                    diag += c;
                    triplets.push((e, m, -c));
                }
            }
            triplets.push((e, e, diag));
        }
        self.operator = Some(CsrMatrix::from_triplets(n, &triplets));
        Ok(())
    }

    pub fn matrix(&self) -> Result<&CsrMatrix> {
        self.operator.as_ref().ok_or(Error::FilterState)
    }

    /// Applies the linear filter without any passive masking.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let a = self.matrix()?;
        if x.len() != a.n {
            return Err(Error::invalid(format!(
                "filter expects {} elements, got {}",
                a.n,
                x.len()
            )));
        }
        Ok(conjugate_gradient(a, x, TOLERANCE, 10 * a.n.max(100))?.x)
    }
}

fn passive_value(region: ElementRegion) -> Option<f64> {
    match region {
        ElementRegion::Design => None,
        ElementRegion::HeatSource => Some(1.0),
        ElementRegion::Fluid => Some(0.0),
    }
}

/// Filters a raw element density. Passive elements enter the solve with their
/// raw values and are reset to their fixed values afterwards.
pub fn filter_density(raw: &[f64], op: &FilterOperator, tags: &RegionTags) -> Result<Vec<f64>> {
    if raw.len() != tags.element_region.len() {
        return Err(Error::invalid("density length does not match the region tags"));
    }
    let mut out = op.apply(raw)?;
    for (v, r) in out.iter_mut().zip(&tags.element_region) {
        *v = passive_value(*r).unwrap_or_else(|| v.clamp(0.0, 1.0));
    }
    Ok(out)
}

/// Maps sensitivities with respect to the filtered density back to the raw
/// density. Passive entries are zero.
pub fn filter_backward(grad_filtered: &[f64], op: &FilterOperator, tags: &RegionTags) -> Result<Vec<f64>> {
    if grad_filtered.len() != tags.element_region.len() {
        return Err(Error::invalid("sensitivity length does not match the region tags"));
    }
    // passive filtered entries are overwritten, so they carry no sensitivity
    let masked: Vec<f64> = grad_filtered
        .iter()
        .zip(&tags.element_region)
        .map(|(g, r)| if passive_value(*r).is_some() { 0.0 } else { *g })
        .collect();
    let mut out = op.apply(&masked)?;
    for (v, r) in out.iter_mut().zip(&tags.element_region) {
        if passive_value(*r).is_some() {
            *v = 0.0;
        }
    }
    Ok(out)
}
