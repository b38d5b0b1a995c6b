//! Global assembly over the structured grid.

use rayon::prelude::*;

use super::element::{ElementGeometry, ElementKernel, ElementProps, Mat16, Vec16};
use crate::error::{Error, Result};
use crate::materials::PhysicalParams;
use crate::mesh::{DofMap, ElementRegion, RegionTags, StructuredMesh};
use crate::sparse::CsrMatrix;

/// Elements processed per parallel batch before the sequential scatter.
const BATCH: usize = 4096;

/// Nodal pressure and temperature, stored interleaved (`[P_0, T_0, P_1, T_1, ...]`).
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub s: Vec<f64>,
}

impl State {
    pub fn zeros(num_nodes: usize) -> Self {
        Self {
            s: vec![0.0; 2 * num_nodes],
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.s.len() / 2
    }

    pub fn pressure(&self, node: usize) -> f64 {
        self.s[2 * node]
    }

    pub fn temperature(&self, node: usize) -> f64 {
        self.s[2 * node + 1]
    }

    pub fn pressures(&self) -> Vec<f64> {
        self.s.iter().step_by(2).copied().collect()
    }

    pub fn temperatures(&self) -> Vec<f64> {
        self.s.iter().skip(1).step_by(2).copied().collect()
    }

    pub fn from_fields(p: &[f64], t: &[f64]) -> Result<Self> {
        if p.len() != t.len() {
            return Err(Error::invalid("pressure and temperature lengths differ"));
        }
        Ok(Self {
            s: p.iter().zip(t).flat_map(|(&a, &b)| [a, b]).collect(),
        })
    }
}

/// Residual vector and consistent Jacobian with constrained rows eliminated.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub residual: Vec<f64>,
}

/// Mesh, labels, constants and element kernel of one state problem.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: StructuredMesh,
    pub tags: RegionTags,
    pub dofs: DofMap,
    pub params: PhysicalParams,
    kernel: ElementKernel,
    constrained: Vec<bool>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl Discretization {
    pub fn new(mesh: StructuredMesh, tags: RegionTags, params: PhysicalParams) -> Result<Self> {
        params.validate()?;
        if tags.element_region.len() != mesh.num_elements() || tags.node_label.len() != mesh.num_nodes() {
            return Err(Error::invalid("region tags do not match the mesh"));
        }
        let geom = ElementGeometry::brick(mesh.dx, mesh.dy, mesh.dz)?;
        let kernel = ElementKernel::new(geom, &params);
        let dofs = DofMap::new(&mesh);
        let mut constrained = vec![false; dofs.num_dofs()];
        for n in 0..mesh.num_nodes() {
            if tags.is_dirichlet_t(n) {
                constrained[dofs.t(n)] = true;
            }
        }
        for &n in &tags.pressure_pins {
            constrained[dofs.p(n)] = true;
        }
        let (row_ptr, col_idx) = pattern(&mesh);
        Ok(Self {
            mesh,
            tags,
            dofs,
            params,
            kernel,
            constrained,
            row_ptr,
            col_idx,
        })
    }

    pub fn kernel(&self) -> &ElementKernel {
        &self.kernel
    }

    pub fn kernel_mut(&mut self) -> &mut ElementKernel {
        &mut self.kernel
    }

    pub fn num_dofs(&self) -> usize {
        self.dofs.num_dofs()
    }

    pub fn is_constrained(&self, dof: usize) -> bool {
        self.constrained[dof]
    }

    pub fn constrained(&self) -> &[bool] {
        &self.constrained
    }

    /// Sets every constrained dof to its prescribed value (zero).
    pub fn apply_constraints(&self, s: &mut [f64]) {
        for (v, &c) in s.iter_mut().zip(&self.constrained) {
            if c {
                *v = 0.0;
            }
        }
    }

    pub fn element_dofs(&self, e: usize) -> [usize; 16] {
        self.dofs.element_dofs(&self.mesh.element_nodes(e))
    }

    pub fn element_state(&self, e: usize, s: &[f64]) -> Vec16 {
        self.element_dofs(e).map(|d| s[d])
    }

    fn check(&self, props: &[ElementProps], s: &[f64]) -> Result<()> {
        if props.len() != self.mesh.num_elements() {
            return Err(Error::invalid(format!(
                "expected {} element properties, got {}",
                self.mesh.num_elements(),
                props.len()
            )));
        }
        if s.len() != self.num_dofs() {
            return Err(Error::invalid(format!(
                "expected {} dofs, got {}",
                self.num_dofs(),
                s.len()
            )));
        }
        Ok(())
    }

    fn scatter_vec(&self, out: &mut [f64], e: usize, r: &Vec16) {
        for (&d, v) in self.element_dofs(e).iter().zip(r) {
            out[d] += v;
        }
    }

    /// Residual before constraints are applied. Entries of constrained
    /// temperature dofs are the nodal reactions.
    pub fn full_residual(&self, props: &[ElementProps], s: &[f64]) -> Result<Vec<f64>> {
        self.check(props, s)?;
        let n = self.mesh.num_elements();
        let mut out = vec![0.0; self.num_dofs()];
        for start in (0..n).step_by(BATCH) {
            let end = (start + BATCH).min(n);
            let local: Vec<Vec16> = (start..end)
                .into_par_iter()
                .map(|e| self.kernel.residual(&props[e], &self.element_state(e, s)))
                .collect();
            for (e, r) in (start..end).zip(&local) {
                self.scatter_vec(&mut out, e, r);
            }
        }
        Ok(out)
    }

    /// Residual with constrained rows set to zero.
    pub fn residual(&self, props: &[ElementProps], s: &[f64]) -> Result<Vec<f64>> {
        let mut r = self.full_residual(props, s)?;
        self.apply_constraints(&mut r);
        Ok(r)
    }

    fn empty_matrix(&self) -> CsrMatrix {
        CsrMatrix::from_pattern(self.num_dofs(), self.row_ptr.clone(), self.col_idx.clone())
    }

    /// Position of the `(row dof, column dof)` block start for a node pair.
    #[inline]
    fn block_position(&self, row_node: usize, col_node: usize) -> usize {
        let row = 2 * row_node;
        let start = self.row_ptr[row];
        let k = self.col_idx[start..self.row_ptr[row + 1]]
            .binary_search(&(2 * col_node))
            .expect("node pair outside the sparsity pattern");
        start + k
    }

    fn scatter_mat(&self, m: &mut CsrMatrix, e: usize, jac: &Mat16) {
        let nodes = self.mesh.element_nodes(e);
        for a in 0..8 {
            let row_len = self.row_ptr[2 * nodes[a] + 1] - self.row_ptr[2 * nodes[a]];
            for b in 0..8 {
                let k = self.block_position(nodes[a], nodes[b]);
                // local order is [p..., t...]; global is interleaved
                m.values[k] += jac[a][b];
                m.values[k + 1] += jac[a][b + 8];
                m.values[k + row_len] += jac[a + 8][b];
                m.values[k + row_len + 1] += jac[a + 8][b + 8];
            }
        }
    }

    /// Residual and Jacobian at `s`, with constrained rows and columns
    /// replaced by the identity and constrained residual entries zeroed.
    pub fn assemble(&self, props: &[ElementProps], s: &[f64]) -> Result<SparseSystem> {
        self.check(props, s)?;
        let n = self.mesh.num_elements();
        let mut residual = vec![0.0; self.num_dofs()];
        let mut matrix = self.empty_matrix();
        for start in (0..n).step_by(BATCH) {
            let end = (start + BATCH).min(n);
            let local: Vec<(Vec16, Mat16)> = (start..end)
                .into_par_iter()
                .map(|e| self.kernel.jacobian(&props[e], &self.element_state(e, s)))
                .collect();
            for (e, (r, jac)) in (start..end).zip(&local) {
                self.scatter_vec(&mut residual, e, r);
                self.scatter_mat(&mut matrix, e, jac);
            }
        }
        for (i, &c) in self.constrained.iter().enumerate() {
            if c {
                matrix.eliminate(i);
                residual[i] = 0.0;
            }
        }
        Ok(SparseSystem { matrix, residual })
    }

    /// Thermal compliance, the sum of `f_tQ^T t` over heated elements.
    pub fn compliance(&self, props: &[ElementProps], s: &[f64]) -> Result<f64> {
        self.check(props, s)?;
        Ok((0..self.mesh.num_elements())
            .filter(|&e| props[e].source != 0.0)
            .map(|e| self.kernel.compliance(&props[e], &self.element_state(e, s)))
            .sum())
    }

    /// Gradient of the compliance with respect to the state (zero on
    /// constrained dofs).
    pub fn compliance_gradient(&self, props: &[ElementProps], s: &[f64]) -> Result<Vec<f64>> {
        self.check(props, s)?;
        let mut out = vec![0.0; self.num_dofs()];
        for e in (0..self.mesh.num_elements()).filter(|&e| props[e].source != 0.0) {
            let (g, _) = self.kernel.compliance_gradient(&props[e], &self.element_state(e, s));
            self.scatter_vec(&mut out, e, &g);
        }
        self.apply_constraints(&mut out);
        Ok(out)
    }

    /// Total derivative of the compliance with respect to each element's
    /// permeability and conductivity, given the adjoint `lambda` solving
    /// `J^T lambda = df/ds`.
    pub fn property_gradient(&self, props: &[ElementProps], s: &[f64], lambda: &[f64]) -> Result<Vec<(f64, f64)>> {
        self.check(props, s)?;
        if lambda.len() != s.len() {
            return Err(Error::invalid("adjoint length does not match the state"));
        }
        Ok((0..self.mesh.num_elements())
            .into_par_iter()
            .map(|e| {
                let se = self.element_state(e, s);
                let le = self.element_state(e, lambda);
                let d = self.kernel.property_derivatives(&props[e], &se);
                let mut dk: f64 = -le.iter().zip(&d.d_kappa).map(|(a, b)| a * b).sum::<f64>();
                let dc: f64 = -le.iter().zip(&d.d_conductivity).map(|(a, b)| a * b).sum::<f64>();
                if props[e].source != 0.0 {
                    dk += self.kernel.compliance_gradient(&props[e], &se).1;
                }
                (dk, dc)
            })
            .collect())
    }

    /// Darcy velocity at every element centroid.
    pub fn velocities(&self, props: &[ElementProps], s: &[f64]) -> Result<Vec<[f64; 3]>> {
        self.check(props, s)?;
        Ok((0..self.mesh.num_elements())
            .map(|e| self.kernel.centroid_velocity(props[e].kappa, &self.element_state(e, s)))
            .collect())
    }

    /// Heat leaving through the fixed-temperature walls, from the nodal reactions.
    pub fn heat_outflow(&self, props: &[ElementProps], s: &[f64]) -> Result<f64> {
        let r = self.full_residual(props, s)?;
        Ok(-(0..self.mesh.num_nodes())
            .filter(|&n| self.tags.is_dirichlet_t(n))
            .map(|n| r[self.dofs.t(n)])
            .sum::<f64>())
    }

    /// Total volume of the heat-source region.
    pub fn heat_source_volume(&self) -> f64 {
        self.tags.count(ElementRegion::HeatSource) as f64 * self.mesh.element_volume()
    }
}

/// Dof-level sparsity: every node couples to its 27-point neighbourhood.
fn pattern(mesh: &StructuredMesh) -> (Vec<usize>, Vec<usize>) {
    let n_nodes = mesh.num_nodes();
    let mut row_ptr = Vec::with_capacity(2 * n_nodes + 1);
    row_ptr.push(0);
    let mut col_idx = Vec::new();
    let mut neighbours = Vec::with_capacity(27);
    for n in 0..n_nodes {
        let [i, j, k] = mesh.node_ijk(n);
        neighbours.clear();
        for kk in k.saturating_sub(1)..=(k + 1).min(mesh.nz) {
            for jj in j.saturating_sub(1)..=(j + 1).min(mesh.ny) {
                for ii in i.saturating_sub(1)..=(i + 1).min(mesh.nx) {
                    neighbours.push(mesh.node_index(ii, jj, kk));
                }
            }
        }
        for _ in 0..2 {
            for &m in &neighbours {
                col_idx.push(2 * m);
                col_idx.push(2 * m + 1);
            }
            row_ptr.push(col_idx.len());
        }
    }
    (row_ptr, col_idx)
}

/// Element properties from the heat-source magnitude and per-element
/// permeability and conductivity.
pub fn element_props(tags: &RegionTags, heat_source: f64, kappa: &[f64], conductivity: &[f64]) -> Vec<ElementProps> {
    tags.element_region
        .iter()
        .zip(kappa.iter().zip(conductivity))
        .map(|(r, (&kappa, &conductivity))| ElementProps {
            kappa,
            conductivity,
            source: if *r == ElementRegion::HeatSource {
                heat_source
            } else {
                0.0
            },
        })
        .collect()
}

pub fn assemble(disc: &Discretization, props: &[ElementProps], state: &State) -> Result<SparseSystem> {
    disc.assemble(props, &state.s)
}

pub fn compute_velocity(disc: &Discretization, props: &[ElementProps], state: &State) -> Result<Vec<[f64; 3]>> {
    disc.velocities(props, &state.s)
}

pub fn thermal_compliance(disc: &Discretization, props: &[ElementProps], state: &State) -> Result<f64> {
    disc.compliance(props, &state.s)
}
