//! Structured P1 triangulations: the unit cell Y = [0,1]^2, the macroscopic
//! domain, and the cell-resolving fine mesh.
//!
//! All meshes are tensor-product grids of squares split into two triangles.
//! Macro and fine meshes split every square along the same diagonal so node
//! and element counts are reproducible. The unit cell uses a quadrant-mirrored
//! diagonal pattern instead: with an even division count the triangulation is
//! exactly symmetric about both midplanes, which the cell-function parity
//! checks rely on.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const MATRIX: u8 = 0;
pub const INCLUSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Circle {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        dx * dx + dy * dy <= self.radius * self.radius
    }
}

/// Exact cell size epsilon = num/den.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frac {
    pub num: u32,
    pub den: u32,
}

impl Frac {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::invalid("epsilon must be a positive fraction"));
        }
        Ok(Frac { num, den })
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((a, b)) = s.split_once('/') {
            let num = a.trim().parse().map_err(|_| Error::invalid(format!("bad epsilon '{s}'")))?;
            let den = b.trim().parse().map_err(|_| Error::invalid(format!("bad epsilon '{s}'")))?;
            Frac::new(num, den)
        } else {
            Err(Error::invalid(format!(
                "epsilon must be written as a fraction like '1/10', got '{s}'"
            )))
        }
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Cells per unit length, if 1/epsilon is an integer.
    pub fn cells_per_unit(&self) -> Option<u32> {
        if self.den.is_multiple_of(self.num) {
            Some(self.den / self.num)
        } else {
            None
        }
    }
}

impl std::fmt::Display for Frac {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagonalPattern {
    /// Every square split along the same (positive-slope) diagonal.
    Uniform,
    /// Diagonal flipped per quadrant; symmetric about both midplanes for
    /// even division counts.
    Mirrored,
    /// The mirrored pattern tiled with the given period, so a cell-resolving
    /// fine mesh reproduces the unit-cell triangulation in every cell.
    MirroredPeriodic(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoxFace {
    Bottom,
    Right,
    Top,
    Left,
}

pub const FACES: [BoxFace; 4] = [BoxFace::Bottom, BoxFace::Right, BoxFace::Top, BoxFace::Left];

#[derive(Debug, Clone, Copy)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub face: BoxFace,
}

#[derive(Debug, Clone, Copy)]
pub struct StructuredInfo {
    pub origin: [f64; 2],
    pub extent: [f64; 2],
    pub ndiv: [usize; 2],
    pub pattern: DiagonalPattern,
}

#[derive(Debug, Clone, Copy)]
pub struct FineInfo {
    pub epsilon: Frac,
    pub per_cell_div: usize,
}

#[derive(Debug, Clone)]
pub struct TriMesh {
    pub nodes: Vec<[f64; 2]>,
    pub tris: Vec<[usize; 3]>,
    /// Material tag per element (MATRIX or INCLUSION).
    pub tags: Vec<u8>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub info: StructuredInfo,
    pub fine: Option<FineInfo>,
}

/// Geometry of one triangle: area, constant P1 basis gradients, centroid.
#[derive(Debug, Clone, Copy)]
pub struct ElemGeom {
    pub area: f64,
    pub grads: [[f64; 2]; 3],
    pub centroid: [f64; 2],
}

impl TriMesh {
    fn build(
        origin: [f64; 2],
        extent: [f64; 2],
        ndiv: [usize; 2],
        pattern: DiagonalPattern,
        mut tag_of: impl FnMut([f64; 2]) -> u8,
    ) -> Self {
        let (nx, ny) = (ndiv[0], ndiv[1]);
        let (hx, hy) = (extent[0] / nx as f64, extent[1] / ny as f64);
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for iy in 0..=ny {
            for ix in 0..=nx {
                nodes.push([origin[0] + ix as f64 * hx, origin[1] + iy as f64 * hy]);
            }
        }
        let id = |ix: usize, iy: usize| iy * (nx + 1) + ix;
        let mut tris = Vec::with_capacity(2 * nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                let (v00, v10) = (id(ix, iy), id(ix + 1, iy));
                let (v01, v11) = (id(ix, iy + 1), id(ix + 1, iy + 1));
                if positive_diagonal(pattern, ix, iy, nx, ny) {
                    tris.push([v00, v10, v11]);
                    tris.push([v00, v11, v01]);
                } else {
                    tris.push([v00, v10, v01]);
                    tris.push([v10, v11, v01]);
                }
            }
        }
        let mut mesh = TriMesh {
            nodes,
            tris,
            tags: Vec::new(),
            boundary_edges: Vec::new(),
            info: StructuredInfo {
                origin,
                extent,
                ndiv,
                pattern,
            },
            fine: None,
        };
        mesh.tags = (0..mesh.tris.len())
            .map(|e| tag_of(mesh.centroid(e)))
            .collect();
        for ix in 0..nx {
            mesh.boundary_edges.push(BoundaryEdge {
                nodes: [id(ix, 0), id(ix + 1, 0)],
                face: BoxFace::Bottom,
            });
            mesh.boundary_edges.push(BoundaryEdge {
                nodes: [id(ix, ny), id(ix + 1, ny)],
                face: BoxFace::Top,
            });
        }
        for iy in 0..ny {
            mesh.boundary_edges.push(BoundaryEdge {
                nodes: [id(0, iy), id(0, iy + 1)],
                face: BoxFace::Left,
            });
            mesh.boundary_edges.push(BoundaryEdge {
                nodes: [id(nx, iy), id(nx, iy + 1)],
                face: BoxFace::Right,
            });
        }
        mesh
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elems(&self) -> usize {
        self.tris.len()
    }

    pub fn centroid(&self, e: usize) -> [f64; 2] {
        let [a, b, c] = self.tris[e];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        [
            (pa[0] + pb[0] + pc[0]) / 3.0,
            (pa[1] + pb[1] + pc[1]) / 3.0,
        ]
    }

    pub fn elem_geom(&self, e: usize) -> ElemGeom {
        let [a, b, c] = self.tris[e];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        let two_a = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
        let area = 0.5 * two_a;
        let grads = [
            [(pb[1] - pc[1]) / two_a, (pc[0] - pb[0]) / two_a],
            [(pc[1] - pa[1]) / two_a, (pa[0] - pc[0]) / two_a],
            [(pa[1] - pb[1]) / two_a, (pb[0] - pa[0]) / two_a],
        ];
        ElemGeom {
            area,
            grads,
            centroid: self.centroid(e),
        }
    }

    pub fn geoms(&self) -> Vec<ElemGeom> {
        (0..self.n_elems()).map(|e| self.elem_geom(e)).collect()
    }

    /// Indices of boundary nodes (any coordinate on the box boundary).
    pub fn boundary_nodes(&self) -> Vec<usize> {
        let mut on = vec![false; self.n_nodes()];
        for be in &self.boundary_edges {
            on[be.nodes[0]] = true;
            on[be.nodes[1]] = true;
        }
        (0..self.n_nodes()).filter(|&i| on[i]).collect()
    }

    pub fn node_to_elems(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_nodes()];
        for (e, t) in self.tris.iter().enumerate() {
            for &v in t {
                adj[v].push(e);
            }
        }
        adj
    }

    /// Locate the element containing `x` (clamped to the mesh box) and its
    /// barycentric coordinates. O(1) on structured grids.
    pub fn locate(&self, x: [f64; 2]) -> (usize, [f64; 3]) {
        let info = &self.info;
        let (nx, ny) = (info.ndiv[0], info.ndiv[1]);
        let hx = info.extent[0] / nx as f64;
        let hy = info.extent[1] / ny as f64;
        let sx = ((x[0] - info.origin[0]) / hx).clamp(0.0, nx as f64 - 1e-12);
        let sy = ((x[1] - info.origin[1]) / hy).clamp(0.0, ny as f64 - 1e-12);
        let ix = (sx.floor() as usize).min(nx - 1);
        let iy = (sy.floor() as usize).min(ny - 1);
        let s = sx - ix as f64;
        let t = sy - iy as f64;
        let base = 2 * (iy * nx + ix);
        let e = if positive_diagonal(info.pattern, ix, iy, nx, ny) {
            // triangles (v00,v10,v11) for t <= s and (v00,v11,v01) otherwise
            if t <= s {
                base
            } else {
                base + 1
            }
        } else {
            // triangles (v00,v10,v01) for s+t <= 1 and (v10,v11,v01) otherwise
            if s + t <= 1.0 {
                base
            } else {
                base + 1
            }
        };
        (e, self.barycentric(e, x))
    }

    pub fn barycentric(&self, e: usize, x: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.tris[e];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        let two_a = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
        let la = ((pb[0] - x[0]) * (pc[1] - x[1]) - (pc[0] - x[0]) * (pb[1] - x[1])) / two_a;
        let lb = ((pc[0] - x[0]) * (pa[1] - x[1]) - (pa[0] - x[0]) * (pc[1] - x[1])) / two_a;
        [la, lb, 1.0 - la - lb]
    }
}

fn positive_diagonal(pattern: DiagonalPattern, ix: usize, iy: usize, nx: usize, ny: usize) -> bool {
    match pattern {
        DiagonalPattern::Uniform => true,
        DiagonalPattern::Mirrored => (2 * ix < nx) == (2 * iy < ny),
        DiagonalPattern::MirroredPeriodic(p) => (2 * (ix % p) < p) == (2 * (iy % p) < p),
    }
}

#[derive(Debug, Clone)]
pub struct UnitCellMesh {
    pub mesh: TriMesh,
    pub inclusion: Option<Circle>,
    pub symmetry_flag: bool,
}

impl UnitCellMesh {
    pub fn boundary_nodes(&self) -> Vec<usize> {
        self.mesh.boundary_nodes()
    }
}

/// Boundary-condition kind of one field on one box face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BcKind {
    Dirichlet,
    Neumann,
}

/// Per-face tags for the three fields. A face carries one tag per field, so
/// the tags partition the boundary field by field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceBc {
    pub thermal: BcKind,
    pub moisture: BcKind,
    pub elastic: BcKind,
}

impl FaceBc {
    pub fn all_dirichlet() -> Self {
        FaceBc {
            thermal: BcKind::Dirichlet,
            moisture: BcKind::Dirichlet,
            elastic: BcKind::Dirichlet,
        }
    }

    pub fn kind(&self, field: FieldKind) -> BcKind {
        match field {
            FieldKind::Thermal => self.thermal,
            FieldKind::Moisture => self.moisture,
            FieldKind::Elastic => self.elastic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Thermal,
    Moisture,
    Elastic,
}

#[derive(Debug, Clone)]
pub struct MacroMesh {
    pub mesh: TriMesh,
    /// Indexed by FACES order: bottom, right, top, left.
    pub face_bc: [FaceBc; 4],
}

impl MacroMesh {
    pub fn face_bc(&self, face: BoxFace) -> FaceBc {
        self.face_bc[FACES.iter().position(|&f| f == face).unwrap()]
    }

    /// Every face must grant the field a Dirichlet part somewhere.
    pub fn has_dirichlet(&self, field: FieldKind) -> bool {
        self.face_bc.iter().any(|fb| fb.kind(field) == BcKind::Dirichlet)
    }

    /// Nodes lying on faces where `field` is Dirichlet-constrained.
    pub fn dirichlet_nodes(&self, field: FieldKind) -> Vec<usize> {
        let mut on = vec![false; self.mesh.n_nodes()];
        for be in &self.mesh.boundary_edges {
            if self.face_bc(be.face).kind(field) == BcKind::Dirichlet {
                on[be.nodes[0]] = true;
                on[be.nodes[1]] = true;
            }
        }
        (0..self.mesh.n_nodes()).filter(|&i| on[i]).collect()
    }
}

fn check_inclusion(inclusion: &Option<Circle>) -> Result<()> {
    if let Some(c) = inclusion {
        if c.radius <= 0.0 {
            return Err(Error::invalid("inclusion radius must be positive"));
        }
        for d in 0..2 {
            if c.center[d] - c.radius <= 0.0 || c.center[d] + c.radius >= 1.0 {
                return Err(Error::invalid(format!(
                    "inclusion (center ({}, {}), radius {}) is not contained in the unit cell",
                    c.center[0], c.center[1], c.radius
                )));
            }
        }
    }
    Ok(())
}

/// Structured unit-cell mesh with centroid-in-circle inclusion tagging.
pub fn build_unit_cell_mesh(n_div: usize, inclusion: Option<Circle>) -> Result<UnitCellMesh> {
    if n_div < 1 {
        return Err(Error::invalid("cell division count must be at least 1"));
    }
    check_inclusion(&inclusion)?;
    let mesh = TriMesh::build(
        [0.0, 0.0],
        [1.0, 1.0],
        [n_div, n_div],
        DiagonalPattern::Mirrored,
        |c| match &inclusion {
            Some(circle) if circle.contains(c) => INCLUSION,
            _ => MATRIX,
        },
    );
    let centered = inclusion
        .map(|c| (c.center[0] - 0.5).abs() < 1e-12 && (c.center[1] - 0.5).abs() < 1e-12)
        .unwrap_or(true);
    Ok(UnitCellMesh {
        mesh,
        inclusion,
        symmetry_flag: centered && n_div.is_multiple_of(2),
    })
}

/// Structured macro mesh over an axis-aligned box with per-face tags.
pub fn build_macro_mesh(
    origin: [f64; 2],
    extent: [f64; 2],
    n_div: [usize; 2],
    face_bc: [FaceBc; 4],
) -> Result<MacroMesh> {
    if extent[0] <= 0.0 || extent[1] <= 0.0 {
        return Err(Error::invalid("degenerate macro domain box"));
    }
    if n_div[0] < 1 || n_div[1] < 1 {
        return Err(Error::invalid("macro division count must be at least 1"));
    }
    let mesh = TriMesh::build(origin, extent, n_div, DiagonalPattern::Uniform, |_| MATRIX);
    Ok(MacroMesh { mesh, face_bc })
}

/// Fine mesh resolving every periodic cell with `per_cell_div` divisions, so
/// the micro coordinate mapping y = x/eps mod 1 is exact per element.
pub fn build_fine_mesh(
    origin: [f64; 2],
    extent: [f64; 2],
    epsilon: Frac,
    per_cell_div: usize,
    inclusion: Option<Circle>,
    face_bc: [FaceBc; 4],
) -> Result<MacroMesh> {
    if extent[0] <= 0.0 || extent[1] <= 0.0 {
        return Err(Error::invalid("degenerate fine domain box"));
    }
    if per_cell_div < 4 {
        return Err(Error::invalid("per_cell_div must be at least 4"));
    }
    check_inclusion(&inclusion)?;
    let eps = epsilon.value();
    let mut n_div = [0usize; 2];
    for d in 0..2 {
        let cells = extent[d] / eps;
        if (cells - cells.round()).abs() > 1e-9 || cells.round() < 1.0 {
            return Err(Error::invalid(format!(
                "domain extent {} is not an integer number of cells of size {}",
                extent[d], epsilon
            )));
        }
        n_div[d] = cells.round() as usize * per_cell_div;
    }
    let mesh = TriMesh::build(
        origin,
        extent,
        n_div,
        DiagonalPattern::MirroredPeriodic(per_cell_div),
        |c| {
            let y = micro_coord(c, origin, eps);
            match &inclusion {
                Some(circle) if circle.contains(y) => INCLUSION,
                _ => MATRIX,
            }
        },
    );
    let mut mesh = mesh;
    mesh.fine = Some(FineInfo {
        epsilon,
        per_cell_div,
    });
    Ok(MacroMesh { mesh, face_bc })
}

/// Micro coordinate y = ((x - origin)/eps) mod 1, componentwise in [0,1).
pub fn micro_coord(x: [f64; 2], origin: [f64; 2], eps: f64) -> [f64; 2] {
    let mut y = [0.0; 2];
    for d in 0..2 {
        let s = (x[d] - origin[d]) / eps;
        y[d] = s - s.floor();
        if y[d] < 0.0 {
            y[d] += 1.0;
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn edge_use_counts(mesh: &TriMesh) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::new();
        for t in &mesh.tris {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                *counts.entry(key).or_insert(0) += 1;
            }
        }
        counts
    }

    #[test]
    fn smallest_grid_counts() {
        let cell = build_unit_cell_mesh(1, None).unwrap();
        assert_eq!(cell.mesh.n_nodes(), 4);
        assert_eq!(cell.mesh.n_elems(), 2);
        assert!(cell.mesh.tags.iter().all(|&t| t == MATRIX));
    }

    #[test]
    fn production_scale_cell_counts_and_inclusion_fraction() {
        let cell = build_unit_cell_mesh(
            20,
            Some(Circle {
                center: [0.5, 0.5],
                radius: 0.25,
            }),
        )
        .unwrap();
        assert_eq!(cell.mesh.n_nodes(), 441);
        assert_eq!(cell.mesh.n_elems(), 800);
        assert!(cell.symmetry_flag);
        // independent brute-force recount of centroids inside the circle
        let mut inclusion_area = 0.0;
        let mut brute_count = 0usize;
        for e in 0..cell.mesh.n_elems() {
            let c = cell.mesh.centroid(e);
            let dx = c[0] - 0.5;
            let dy = c[1] - 0.5;
            let inside = dx * dx + dy * dy <= 0.25 * 0.25;
            if inside {
                brute_count += 1;
            }
            assert_eq!(inside, cell.mesh.tags[e] == INCLUSION);
            if inside {
                inclusion_area += cell.mesh.elem_geom(e).area;
            }
        }
        assert_eq!(
            brute_count,
            cell.mesh.tags.iter().filter(|&&t| t == INCLUSION).count()
        );
        let exact = std::f64::consts::PI / 16.0;
        assert!(
            (inclusion_area - exact).abs() / exact < 0.1,
            "inclusion area {inclusion_area} vs pi/16 {exact}"
        );
    }

    #[test]
    fn signed_areas_positive_and_sum_to_measure() {
        for &(n, pat) in &[
            (7, DiagonalPattern::Uniform),
            (8, DiagonalPattern::Mirrored),
        ] {
            let mesh = TriMesh::build([0.0, 0.0], [1.0, 1.0], [n, n], pat, |_| MATRIX);
            let mut total = 0.0;
            for e in 0..mesh.n_elems() {
                let g = mesh.elem_geom(e);
                assert!(g.area > 0.0, "element {e} has nonpositive area");
                total += g.area;
            }
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn interior_edges_shared_twice_boundary_once() {
        let cell = build_unit_cell_mesh(6, None).unwrap();
        let counts = edge_use_counts(&cell.mesh);
        let boundary: std::collections::HashSet<(usize, usize)> = cell
            .mesh
            .boundary_edges
            .iter()
            .map(|be| {
                let [a, b] = be.nodes;
                (a.min(b), a.max(b))
            })
            .collect();
        for (edge, count) in counts {
            if boundary.contains(&edge) {
                assert_eq!(count, 1, "boundary edge {edge:?} shared {count} times");
            } else {
                assert_eq!(count, 2, "interior edge {edge:?} shared {count} times");
            }
        }
    }

    #[test]
    fn boundary_nodes_are_exactly_box_nodes() {
        let cell = build_unit_cell_mesh(5, None).unwrap();
        let bn: std::collections::HashSet<usize> = cell.boundary_nodes().into_iter().collect();
        for (i, p) in cell.mesh.nodes.iter().enumerate() {
            let on_box = p[0].abs() < 1e-14
                || (p[0] - 1.0).abs() < 1e-14
                || p[1].abs() < 1e-14
                || (p[1] - 1.0).abs() < 1e-14;
            assert_eq!(on_box, bn.contains(&i));
        }
    }

    #[test]
    fn mirrored_pattern_reflection_maps_elements_onto_elements() {
        let cell = build_unit_cell_mesh(
            10,
            Some(Circle {
                center: [0.5, 0.5],
                radius: 0.3,
            }),
        )
        .unwrap();
        let mesh = &cell.mesh;
        // map each element to its mirror (about x midplane) by centroid lookup
        for e in 0..mesh.n_elems() {
            let c = mesh.centroid(e);
            let mirrored = [1.0 - c[0], c[1]];
            let (me, _) = mesh.locate(mirrored);
            let mc = mesh.centroid(me);
            assert!(
                (mc[0] - mirrored[0]).abs() < 1e-12 && (mc[1] - mirrored[1]).abs() < 1e-12,
                "reflected centroid of element {e} is not an element centroid"
            );
            assert_eq!(mesh.tags[e], mesh.tags[me], "tags not mirror-symmetric");
        }
        // same about the y midplane
        for e in 0..mesh.n_elems() {
            let c = mesh.centroid(e);
            let mirrored = [c[0], 1.0 - c[1]];
            let (me, _) = mesh.locate(mirrored);
            assert_eq!(mesh.tags[e], mesh.tags[me]);
        }
    }

    #[test]
    fn macro_mesh_production_density() {
        let m = build_macro_mesh(
            [0.0, 0.0],
            [1.0, 1.0],
            [50, 50],
            [FaceBc::all_dirichlet(); 4],
        )
        .unwrap();
        assert_eq!(m.mesh.n_nodes(), 2601);
        assert_eq!(m.mesh.n_elems(), 5000);
        assert_eq!(m.mesh.boundary_edges.len(), 200);
        assert!(m.has_dirichlet(FieldKind::Thermal));
    }

    #[test]
    fn mixed_tagging_partition() {
        let mut bc = [FaceBc::all_dirichlet(); 4];
        bc[0].thermal = BcKind::Neumann; // bottom flux
        let m = build_macro_mesh([0.0, 0.0], [1.0, 1.0], [4, 4], bc).unwrap();
        for be in &m.mesh.boundary_edges {
            let kind = m.face_bc(be.face).thermal;
            match be.face {
                BoxFace::Bottom => assert_eq!(kind, BcKind::Neumann),
                _ => assert_eq!(kind, BcKind::Dirichlet),
            }
        }
        // Dirichlet nodes exclude strictly-interior bottom nodes but include corners
        let dn = m.dirichlet_nodes(FieldKind::Thermal);
        assert!(dn.contains(&0)); // corner belongs to the left face too
        assert!(!dn.contains(&2)); // interior bottom node only touches bottom
    }

    #[test]
    fn fine_mesh_arithmetic_and_tag_consistency() {
        let eps = Frac::new(1, 2).unwrap();
        let circle = Circle {
            center: [0.5, 0.5],
            radius: 0.25,
        };
        let inc = Some(circle);
        let fine = build_fine_mesh(
            [0.0, 0.0],
            [1.0, 1.0],
            eps,
            4,
            inc,
            [FaceBc::all_dirichlet(); 4],
        )
        .unwrap();
        assert_eq!(fine.mesh.info.ndiv, [8, 8]);
        assert_eq!(fine.mesh.n_elems(), 128);
        // independent re-evaluation of the micro indicator at mapped centroids
        for e in 0..fine.mesh.n_elems() {
            let y = micro_coord(fine.mesh.centroid(e), [0.0, 0.0], eps.value());
            let expect = if circle.contains(y) { INCLUSION } else { MATRIX };
            assert_eq!(fine.mesh.tags[e], expect);
        }
    }

    #[test]
    fn fine_mesh_rejects_non_integer_cell_count() {
        let eps = Frac::new(1, 3).unwrap();
        let r = build_fine_mesh(
            [0.0, 0.0],
            [1.1, 1.0],
            eps,
            4,
            None,
            [FaceBc::all_dirichlet(); 4],
        );
        assert!(r.is_err());
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(build_unit_cell_mesh(0, None).is_err());
        assert!(build_unit_cell_mesh(
            4,
            Some(Circle {
                center: [0.5, 0.5],
                radius: 0.6
            })
        )
        .is_err());
        assert!(build_unit_cell_mesh(
            4,
            Some(Circle {
                center: [0.9, 0.5],
                radius: 0.2
            })
        )
        .is_err());
        assert!(build_macro_mesh([0.0, 0.0], [0.0, 1.0], [2, 2], [FaceBc::all_dirichlet(); 4])
            .is_err());
        assert!(Frac::parse("0/3").is_err());
        assert!(Frac::parse("0.1").is_err());
        assert_eq!(Frac::parse("1/10").unwrap().cells_per_unit(), Some(10));
    }

    #[test]
    fn locate_returns_containing_element() {
        let cell = build_unit_cell_mesh(9, None).unwrap();
        for &p in &[[0.01, 0.02], [0.5, 0.5], [0.73, 0.21], [1.0, 1.0], [0.0, 1.0]] {
            let (e, bary) = cell.mesh.locate(p);
            assert!(bary.iter().all(|&b| b > -1e-10), "bary {bary:?} at {p:?}");
            let [a, b, c] = cell.mesh.tris[e];
            let rec = [
                bary[0] * cell.mesh.nodes[a][0]
                    + bary[1] * cell.mesh.nodes[b][0]
                    + bary[2] * cell.mesh.nodes[c][0],
                bary[0] * cell.mesh.nodes[a][1]
                    + bary[1] * cell.mesh.nodes[b][1]
                    + bary[2] * cell.mesh.nodes[c][1],
            ];
            assert!((rec[0] - p[0]).abs() < 1e-12 && (rec[1] - p[1]).abs() < 1e-12);
        }
    }
}
