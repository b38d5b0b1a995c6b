//! Structured hexahedral grids, region tagging and degree-of-freedom numbering.
//!
//! Nodes are numbered lexicographically with `x` fastest, then `y`, then `z`.
//! Elements follow the same ordering. Local node order inside an element is
//! counter-clockwise on the bottom face (seen from above) followed by the top
//! face, which gives a positive Jacobian for every element.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when checking that region boxes sit on element faces.
const ALIGN_TOL: f64 = 1e-9;

/// Local node offsets `(i, j, k)` of the eight element corners.
pub const HEX_CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredMesh {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub lx: f64,
    pub ly: f64,
    pub lz: f64,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl StructuredMesh {
    /// Builds an axis-aligned grid of `nx * ny * nz` trilinear hexahedra
    /// spanning `[0, lx] x [0, ly] x [0, lz]`.
    pub fn new(nx: usize, ny: usize, nz: usize, lx: f64, ly: f64, lz: f64) -> Result<Self> {
        for (name, n) in [("nx", nx), ("ny", ny), ("nz", nz)] {
            if n == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        for (name, l) in [("lx", lx), ("ly", ly), ("lz", lz)] {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {l}")));
            }
        }
        Ok(Self {
            nx,
            ny,
            nz,
            lx,
            ly,
            lz,
            dx: lx / nx as f64,
            dy: ly / ny as f64,
            dz: lz / nz as f64,
        })
    }

    pub fn num_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1) * (self.nz + 1)
    }

    pub fn num_elements(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    /// Element diagonal length used by the stabilization parameter.
    pub fn h_e(&self) -> f64 {
        (self.dx * self.dx + self.dy * self.dy + self.dz * self.dz).sqrt()
    }

    pub fn element_volume(&self) -> f64 {
        self.dx * self.dy * self.dz
    }

    pub fn spacing(&self) -> [f64; 3] {
        [self.dx, self.dy, self.dz]
    }

    pub fn extents(&self) -> [f64; 3] {
        [self.lx, self.ly, self.lz]
    }

    pub fn counts(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + (self.nx + 1) * (j + (self.ny + 1) * k)
    }

    #[inline]
    pub fn node_ijk(&self, n: usize) -> [usize; 3] {
        let i = n % (self.nx + 1);
        let j = (n / (self.nx + 1)) % (self.ny + 1);
        let k = n / ((self.nx + 1) * (self.ny + 1));
        [i, j, k]
    }

    #[inline]
    pub fn element_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    #[inline]
    pub fn element_ijk(&self, e: usize) -> [usize; 3] {
        let i = e % self.nx;
        let j = (e / self.nx) % self.ny;
        let k = e / (self.nx * self.ny);
        [i, j, k]
    }

    pub fn element_nodes(&self, e: usize) -> [usize; 8] {
        let [i, j, k] = self.element_ijk(e);
        HEX_CORNERS.map(|[a, b, c]| self.node_index(i + a, j + b, k + c))
    }

    pub fn node_coords(&self, n: usize) -> [f64; 3] {
        let [i, j, k] = self.node_ijk(n);
        [i as f64 * self.dx, j as f64 * self.dy, k as f64 * self.dz]
    }

    pub fn element_coords(&self, e: usize) -> [[f64; 3]; 8] {
        self.element_nodes(e).map(|n| self.node_coords(n))
    }

    pub fn element_centroid(&self, e: usize) -> [f64; 3] {
        let [i, j, k] = self.element_ijk(e);
        [
            (i as f64 + 0.5) * self.dx,
            (j as f64 + 0.5) * self.dy,
            (k as f64 + 0.5) * self.dz,
        ]
    }

    /// Elements sharing a face with `e`, per axis direction (`None` on the boundary).
    pub fn face_neighbors(&self, e: usize) -> [Option<usize>; 6] {
        let [i, j, k] = self.element_ijk(e);
        [
            (i > 0).then(|| self.element_index(i - 1, j, k)),
            (i + 1 < self.nx).then(|| self.element_index(i + 1, j, k)),
            (j > 0).then(|| self.element_index(i, j - 1, k)),
            (j + 1 < self.ny).then(|| self.element_index(i, j + 1, k)),
            (k > 0).then(|| self.element_index(i, j, k - 1)),
            (k + 1 < self.nz).then(|| self.element_index(i, j, k + 1)),
        ]
    }

    /// Index of the node closest to `p`.
    pub fn nearest_node(&self, p: [f64; 3]) -> usize {
        let snap = |x: f64, d: f64, n: usize| ((x / d).round().max(0.0) as usize).min(n);
        self.node_index(
            snap(p[0], self.dx, self.nx),
            snap(p[1], self.dy, self.ny),
            snap(p[2], self.dz, self.nz),
        )
    }
}

/// One of the six sides of the box domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

impl Side {
    pub const ALL: [Side; 6] = [Side::XMin, Side::XMax, Side::YMin, Side::YMax, Side::ZMin, Side::ZMax];

    pub fn axis(self) -> usize {
        match self {
            Side::XMin | Side::XMax => 0,
            Side::YMin | Side::YMax => 1,
            Side::ZMin | Side::ZMax => 2,
        }
    }

    pub fn is_max(self) -> bool {
        matches!(self, Side::XMax | Side::YMax | Side::ZMax)
    }
}

/// Thermal boundary treatment of a domain side. All sides are impermeable
/// to the flow; symmetry and insulated sides are both natural (zero-flux)
/// conditions and differ only in labelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThermalBc {
    /// Prescribed temperature `T = 0`.
    Dirichlet,
    Insulated,
    Symmetry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    pub x_min: ThermalBc,
    pub x_max: ThermalBc,
    pub y_min: ThermalBc,
    pub y_max: ThermalBc,
    pub z_min: ThermalBc,
    pub z_max: ThermalBc,
    /// Points snapped to the nearest node where the pressure is fixed to zero.
    pub pressure_pins: Vec<[f64; 3]>,
}

impl BoundarySpec {
    pub fn side(&self, side: Side) -> ThermalBc {
        match side {
            Side::XMin => self.x_min,
            Side::XMax => self.x_max,
            Side::YMin => self.y_min,
            Side::YMax => self.y_max,
            Side::ZMin => self.z_min,
            Side::ZMax => self.z_max,
        }
    }

    /// Quarter-domain closed cavity: symmetry planes at `x = 0` and `y = 0`,
    /// cold outer vertical walls and lid, insulated floor, pressure pinned at
    /// the bottom outer corner.
    pub fn quarter_cavity(mesh_extents: [f64; 3]) -> Self {
        Self {
            x_min: ThermalBc::Symmetry,
            x_max: ThermalBc::Dirichlet,
            y_min: ThermalBc::Symmetry,
            y_max: ThermalBc::Dirichlet,
            z_min: ThermalBc::Insulated,
            z_max: ThermalBc::Dirichlet,
            pressure_pins: vec![[mesh_extents[0], mesh_extents[1], 0.0]],
        }
    }
}

/// A geometric region used to label elements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Region {
    Empty,
    /// Axis-aligned box; its faces must coincide with element faces.
    Box {
        min: [f64; 3],
        max: [f64; 3],
    },
    /// Vertical cylindrical shell `r_inner < r <= r_outer` around `center`
    /// (an `(x, y)` point), between `z_min` and `z_max`. `r_inner = 0` gives a
    /// full cylinder. Rasterized by element centroid.
    Cylinder {
        center: [f64; 2],
        r_inner: f64,
        r_outer: f64,
        z_min: f64,
        z_max: f64,
    },
}

impl Region {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        match *self {
            Region::Empty => false,
            Region::Box { min, max } => (0..3).all(|a| p[a] >= min[a] && p[a] <= max[a]),
            Region::Cylinder {
                center,
                r_inner,
                r_outer,
                z_min,
                z_max,
            } => {
                let r = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt();
                p[2] >= z_min && p[2] <= z_max && r <= r_outer && (r_inner <= 0.0 || r > r_inner)
            }
        }
    }

    fn check(&self, name: &str, mesh: &StructuredMesh) -> Result<()> {
        let ext = mesh.extents();
        let h = mesh.spacing();
        match *self {
            Region::Empty => Ok(()),
            Region::Box { min, max } => {
                for a in 0..3 {
                    let axis = ['x', 'y', 'z'][a];
                    if min[a] > max[a] || min[a] < -ALIGN_TOL * ext[a] || max[a] > ext[a] * (1.0 + ALIGN_TOL) {
                        return Err(Error::invalid(format!(
                            "region `{name}` does not lie inside the domain along {axis}"
                        )));
                    }
                    for v in [min[a], max[a]] {
                        let cells = v / h[a];
                        if (cells - cells.round()).abs() > ALIGN_TOL * (1.0 + cells.abs()) {
                            return Err(Error::Misaligned {
                                region: name.to_string(),
                                axis,
                            });
                        }
                    }
                }
                Ok(())
            }
            Region::Cylinder {
                r_inner,
                r_outer,
                z_min,
                z_max,
                ..
            } => {
                if r_inner < 0.0 || r_outer <= r_inner || z_max <= z_min {
                    return Err(Error::invalid(format!("region `{name}` has an invalid cylinder shape")));
                }
                Ok(())
            }
        }
    }
}

/// Region label of an element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElementRegion {
    Design,
    /// Passive solid carrying the volumetric heat source.
    HeatSource,
    /// Passive fluid.
    Fluid,
}

/// Boundary label of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeLabel {
    DirichletT,
    Insulated,
    Symmetry,
    Interior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionLayout {
    pub heat_source: Region,
    pub design: Region,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionTags {
    pub element_region: Vec<ElementRegion>,
    pub node_label: Vec<NodeLabel>,
    pub pressure_pins: Vec<usize>,
    pub sides: [ThermalBc; 6],
}

impl RegionTags {
    pub fn design_elements(&self) -> Vec<usize> {
        self.elements_in(ElementRegion::Design)
    }

    pub fn elements_in(&self, region: ElementRegion) -> Vec<usize> {
        self.element_region
            .iter()
            .enumerate()
            .filter_map(|(e, r)| (*r == region).then_some(e))
            .collect()
    }

    pub fn count(&self, region: ElementRegion) -> usize {
        self.element_region.iter().filter(|r| **r == region).count()
    }

    pub fn is_dirichlet_t(&self, node: usize) -> bool {
        self.node_label[node] == NodeLabel::DirichletT
    }
}

/// Labels elements and boundary nodes. The heat source takes precedence over
/// the design region; everything else is passive fluid.
pub fn tag_regions(mesh: &StructuredMesh, layout: &RegionLayout, bc: &BoundarySpec) -> Result<RegionTags> {
    layout.heat_source.check("heat_source", mesh)?;
    layout.design.check("design", mesh)?;

    let element_region = (0..mesh.num_elements())
        .map(|e| {
            let c = mesh.element_centroid(e);
            if layout.heat_source.contains(c) {
                ElementRegion::HeatSource
            } else if layout.design.contains(c) {
                ElementRegion::Design
            } else {
                ElementRegion::Fluid
            }
        })
        .collect();

    let sides = Side::ALL.map(|s| bc.side(s));
    let node_label = (0..mesh.num_nodes())
        .map(|n| {
            let on = node_sides(mesh, n);
            let mut label = NodeLabel::Interior;
            for (s, &hit) in Side::ALL.iter().zip(on.iter()) {
                if !hit {
                    continue;
                }
                label = match (label, bc.side(*s)) {
                    (_, ThermalBc::Dirichlet) | (NodeLabel::DirichletT, _) => NodeLabel::DirichletT,
                    (NodeLabel::Insulated, _) | (_, ThermalBc::Insulated) => NodeLabel::Insulated,
                    _ => NodeLabel::Symmetry,
                };
            }
            label
        })
        .collect();

    let mut pressure_pins: Vec<usize> = bc.pressure_pins.iter().map(|&p| mesh.nearest_node(p)).collect();
    pressure_pins.sort_unstable();
    pressure_pins.dedup();
    if pressure_pins.is_empty() {
        return Err(Error::invalid("at least one pressure pin is required"));
    }
    if let Some(&n) = pressure_pins.iter().find(|&&n| !node_sides(mesh, n).iter().any(|&b| b)) {
        return Err(Error::invalid(format!("pressure pin node {n} is not on the boundary")));
    }

    Ok(RegionTags {
        element_region,
        node_label,
        pressure_pins,
        sides,
    })
}

fn node_sides(mesh: &StructuredMesh, n: usize) -> [bool; 6] {
    let [i, j, k] = mesh.node_ijk(n);
    [i == 0, i == mesh.nx, j == 0, j == mesh.ny, k == 0, k == mesh.nz]
}

/// Interleaved numbering: node `n` owns pressure dof `2n` and temperature dof `2n + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofMap {
    num_nodes: usize,
}

impl DofMap {
    pub fn new(mesh: &StructuredMesh) -> Self {
        Self {
            num_nodes: mesh.num_nodes(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_dofs(&self) -> usize {
        2 * self.num_nodes
    }

    #[inline]
    pub fn p(&self, node: usize) -> usize {
        2 * node
    }

    #[inline]
    pub fn t(&self, node: usize) -> usize {
        2 * node + 1
    }

    /// Global dofs of an element in local order `[p_0..p_7, t_0..t_7]`.
    pub fn element_dofs(&self, nodes: &[usize; 8]) -> [usize; 16] {
        let mut out = [0; 16];
        for a in 0..8 {
            out[a] = self.p(nodes[a]);
            out[a + 8] = self.t(nodes[a]);
        }
        out
    }
}

pub fn dof_map(mesh: &StructuredMesh) -> DofMap {
    DofMap::new(mesh)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryFace {
    pub element: usize,
    pub side: Side,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundaryFaces {
    pub dirichlet: Vec<BoundaryFace>,
    pub insulated: Vec<BoundaryFace>,
    pub symmetry: Vec<BoundaryFace>,
}

impl BoundaryFaces {
    pub fn total(&self) -> usize {
        self.dirichlet.len() + self.insulated.len() + self.symmetry.len()
    }
}

/// Every exterior element face, grouped by the thermal condition of its side.
pub fn boundary_faces(mesh: &StructuredMesh, tags: &RegionTags) -> BoundaryFaces {
    let mut out = BoundaryFaces::default();
    for (s, side) in Side::ALL.iter().enumerate() {
        let list = match tags.sides[s] {
            ThermalBc::Dirichlet => &mut out.dirichlet,
            ThermalBc::Insulated => &mut out.insulated,
            ThermalBc::Symmetry => &mut out.symmetry,
        };
        for e in 0..mesh.num_elements() {
            let ijk = mesh.element_ijk(e);
            let a = side.axis();
            let on = if side.is_max() {
                ijk[a] + 1 == mesh.counts()[a]
            } else {
                ijk[a] == 0
            };
            if on {
                list.push(BoundaryFace {
                    element: e,
                    side: *side,
                });
            }
        }
    }
    out
}
