//! Conforming triangulations of the unit square.
//!
//! Meshes start from a criss-cross pattern (an n x n grid of squares, each
//! split into four triangles by both diagonals) and grow by uniform red
//! refinement. Construction precomputes everything downstream assembly
//! needs: signed areas, diameters, an edge table with boundary normals, and
//! the vertex patches that the local projection stabilization acts on.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Adjacency of an edge: one incident cell on the boundary, two inside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeKind {
    /// Interior edge with its two incident cells.
    Interior([usize; 2]),
    /// Boundary edge with its single incident cell and the outward unit
    /// normal of the domain along this edge.
    Boundary { cell: usize, normal: [f64; 2] },
}

/// One mesh edge. Vertex indices are stored sorted ascending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub vertices: [usize; 2],
    pub kind: EdgeKind,
    pub length: f64,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        matches!(self.kind, EdgeKind::Boundary { .. })
    }
}

/// Vertex patch M_a: the union of all cells having vertex a.
#[derive(Debug, Clone)]
pub struct Patch {
    /// Indices of the member cells, ascending.
    pub cells: Vec<usize>,
    /// Patch measure |M_a| (sum of member cell areas).
    pub measure: f64,
    /// Local mesh width h_a: arithmetic mean of member cell diameters.
    pub h_a: f64,
}

/// A conforming triangulation of the unit square with precomputed geometry.
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<[f64; 2]>,
    cells: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    cell_areas: Vec<f64>,
    cell_diameters: Vec<f64>,
    patches: Vec<Patch>,
    boundary_vertex: Vec<bool>,
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Largest ratio of cell diameters allowed inside a single vertex patch.
/// The structured criss-cross family is locally uniform (ratio 1) and the
/// bounded perturbation keeps the ratio well under this.
const LOCAL_UNIFORMITY_BOUND: f64 = 2.0;

const GEOMETRY_TOL: f64 = 1e-12;

impl TriMesh {
    /// Builds the level-0 criss-cross mesh: an `n` x `n` grid of squares,
    /// each split into four triangles by its two diagonals.
    ///
    /// Vertices are the (n+1)^2 grid corners (row major, bottom to top)
    /// followed by the n^2 square centers. Rejects `n == 0`.
    pub fn criss_cross(n: usize) -> Result<TriMesh> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "criss-cross subdivision count must be at least 1".into(),
            ));
        }
        let h = 1.0 / n as f64;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1) + n * n);
        for iy in 0..=n {
            for ix in 0..=n {
                vertices.push([ix as f64 * h, iy as f64 * h]);
            }
        }
        let center_base = vertices.len();
        for iy in 0..n {
            for ix in 0..n {
                vertices.push([(ix as f64 + 0.5) * h, (iy as f64 + 0.5) * h]);
            }
        }
        let mut cells = Vec::with_capacity(4 * n * n);
        for iy in 0..n {
            for ix in 0..n {
                let a = iy * (n + 1) + ix;
                let b = a + 1;
                let c = b + n + 1;
                let d = a + n + 1;
                let m = center_base + iy * n + ix;
                // Counterclockwise fan around the center: bottom, right,
                // top, left triangle of the square.
                cells.push([a, b, m]);
                cells.push([b, c, m]);
                cells.push([c, d, m]);
                cells.push([d, a, m]);
            }
        }
        TriMesh::from_raw(vertices, cells)
    }

    /// Uniform red refinement: every triangle is split into four congruent
    /// children through its edge midpoints.
    pub fn uniform_refine(&self) -> TriMesh {
        let mut vertices = self.vertices.clone();
        let mut midpoint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut cells = Vec::with_capacity(4 * self.cells.len());
        for cell in &self.cells {
            let mut mid = [0usize; 3];
            for k in 0..3 {
                let (p, q) = (cell[k], cell[(k + 1) % 3]);
                let key = (p.min(q), p.max(q));
                mid[k] = *midpoint.entry(key).or_insert_with(|| {
                    let vp = vertices[p];
                    let vq = vertices[q];
                    vertices.push([0.5 * (vp[0] + vq[0]), 0.5 * (vp[1] + vq[1])]);
                    vertices.len() - 1
                });
            }
            let [v0, v1, v2] = *cell;
            cells.push([v0, mid[0], mid[2]]);
            cells.push([v1, mid[1], mid[0]]);
            cells.push([v2, mid[2], mid[1]]);
            cells.push([mid[0], mid[1], mid[2]]);
        }
        TriMesh::from_raw(vertices, cells)
            .expect("red refinement of a valid mesh stays valid")
    }

    /// Returns a copy with interior vertices displaced pseudo-randomly,
    /// reproducible from `seed`. Each interior vertex moves inside a disk of
    /// radius `rel * h_min(vertex)` where h_min is the shortest incident
    /// edge; boundary vertices stay fixed so the domain is unchanged.
    ///
    /// Rejects `rel` outside (0, 0.3]: beyond that the perturbation can
    /// invert cells of the structured family.
    pub fn perturbed(&self, seed: u64, rel: f64) -> Result<TriMesh> {
        if !(rel > 0.0 && rel <= 0.3) {
            return Err(Error::InvalidArgument(format!(
                "perturbation amplitude must lie in (0, 0.3], got {rel}"
            )));
        }
        let mut min_incident = vec![f64::INFINITY; self.vertices.len()];
        for edge in &self.edges {
            for &v in &edge.vertices {
                min_incident[v] = min_incident[v].min(edge.length);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vertices = self.vertices.clone();
        for (v, pos) in vertices.iter_mut().enumerate() {
            // Draw for every vertex so the displacement pattern does not
            // depend on which vertices happen to be interior.
            let angle = rng.gen::<f64>() * std::f64::consts::TAU;
            let radius = rng.gen::<f64>().sqrt();
            if self.boundary_vertex[v] {
                continue;
            }
            let r = rel * min_incident[v] * radius;
            pos[0] += r * angle.cos();
            pos[1] += r * angle.sin();
        }
        TriMesh::from_raw(vertices, self.cells.clone())
    }

    /// Assembles the derived tables from raw vertices and cells and checks
    /// every construction invariant.
    fn from_raw(vertices: Vec<[f64; 2]>, cells: Vec<[usize; 3]>) -> Result<TriMesh> {
        if cells.is_empty() {
            return Err(Error::MeshInvariant("mesh has no cells".into()));
        }
        let nv = vertices.len();
        let mut cell_areas = Vec::with_capacity(cells.len());
        let mut cell_diameters = Vec::with_capacity(cells.len());
        for (i, cell) in cells.iter().enumerate() {
            if cell.iter().any(|&v| v >= nv) {
                return Err(Error::MeshInvariant(format!(
                    "cell {i} references a vertex out of range"
                )));
            }
            let [a, b, c] = cell.map(|v| vertices[v]);
            let area = signed_area(a, b, c);
            if area <= GEOMETRY_TOL {
                return Err(Error::MeshInvariant(format!(
                    "cell {i} is degenerate or clockwise (signed area {area:.3e})"
                )));
            }
            cell_areas.push(area);
            cell_diameters.push(dist(a, b).max(dist(b, c)).max(dist(c, a)));
        }

        // Edge table keyed by sorted endpoints; BTreeMap iteration gives a
        // deterministic edge ordering independent of cell order.
        let mut incident: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (i, cell) in cells.iter().enumerate() {
            for k in 0..3 {
                let (p, q) = (cell[k], cell[(k + 1) % 3]);
                incident.entry((p.min(q), p.max(q))).or_default().push(i);
            }
        }
        let mut edges = Vec::with_capacity(incident.len());
        let mut boundary_vertex = vec![false; nv];
        for (&(p, q), cells_of_edge) in &incident {
            let length = dist(vertices[p], vertices[q]);
            let kind = match cells_of_edge.as_slice() {
                &[c0] => {
                    boundary_vertex[p] = true;
                    boundary_vertex[q] = true;
                    // Outward normal: perpendicular to the edge, pointing
                    // away from the opposite vertex of the incident cell.
                    let opp = cells[c0]
                        .iter()
                        .copied()
                        .find(|&v| v != p && v != q)
                        .expect("triangle has a vertex opposite each edge");
                    let t = [
                        vertices[q][0] - vertices[p][0],
                        vertices[q][1] - vertices[p][1],
                    ];
                    let mut normal = [t[1] / length, -t[0] / length];
                    let to_opp = [
                        vertices[opp][0] - vertices[p][0],
                        vertices[opp][1] - vertices[p][1],
                    ];
                    if normal[0] * to_opp[0] + normal[1] * to_opp[1] > 0.0 {
                        normal = [-normal[0], -normal[1]];
                    }
                    EdgeKind::Boundary { cell: c0, normal }
                }
                &[c0, c1] => EdgeKind::Interior([c0, c1]),
                other => {
                    return Err(Error::MeshInvariant(format!(
                        "edge ({p}, {q}) is shared by {} cells; mesh is not conforming",
                        other.len()
                    )));
                }
            };
            edges.push(Edge {
                vertices: [p, q],
                kind,
                length,
            });
        }

        let mut patch_cells: Vec<Vec<usize>> = vec![Vec::new(); nv];
        for (i, cell) in cells.iter().enumerate() {
            for &v in cell {
                patch_cells[v].push(i);
            }
        }
        let mut patches = Vec::with_capacity(nv);
        for (v, members) in patch_cells.into_iter().enumerate() {
            if members.is_empty() {
                return Err(Error::MeshInvariant(format!(
                    "vertex {v} belongs to no cell"
                )));
            }
            let measure: f64 = members.iter().map(|&c| cell_areas[c]).sum();
            let h_a: f64 =
                members.iter().map(|&c| cell_diameters[c]).sum::<f64>() / members.len() as f64;
            patches.push(Patch {
                cells: members,
                measure,
                h_a,
            });
        }

        let mesh = TriMesh {
            vertices,
            cells,
            edges,
            cell_areas,
            cell_diameters,
            patches,
            boundary_vertex,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Checks the global mesh invariants: unit-square coverage, closed
    /// boundary of length 4, Euler characteristic of a disk, outward unit
    /// normals, patch consistency, and local uniformity of patch diameters.
    pub fn validate(&self) -> Result<()> {
        let total_area: f64 = self.cell_areas.iter().sum();
        if (total_area - 1.0).abs() > 1e-12 {
            return Err(Error::MeshInvariant(format!(
                "cell areas sum to {total_area:.15} instead of 1"
            )));
        }
        let boundary_length: f64 = self
            .edges
            .iter()
            .filter(|e| e.is_boundary())
            .map(|e| e.length)
            .sum();
        if (boundary_length - 4.0).abs() > 1e-12 {
            return Err(Error::MeshInvariant(format!(
                "boundary length is {boundary_length:.15} instead of 4"
            )));
        }
        // V - E + F = 1 for a triangulated disk (the outer face excluded).
        let euler =
            self.vertices.len() as i64 - self.edges.len() as i64 + self.cells.len() as i64;
        if euler != 1 {
            return Err(Error::MeshInvariant(format!(
                "Euler characteristic V - E + F = {euler}, expected 1"
            )));
        }
        for edge in &self.edges {
            if let EdgeKind::Boundary { normal, .. } = edge.kind {
                let norm = normal[0].hypot(normal[1]);
                if (norm - 1.0).abs() > 1e-12 {
                    return Err(Error::MeshInvariant("boundary normal not unit".into()));
                }
            }
        }
        for (v, patch) in self.patches.iter().enumerate() {
            let measure: f64 = patch.cells.iter().map(|&c| self.cell_areas[c]).sum();
            if (measure - patch.measure).abs() > 1e-14 {
                return Err(Error::MeshInvariant(format!(
                    "patch measure mismatch at vertex {v}"
                )));
            }
            let dmax = patch
                .cells
                .iter()
                .map(|&c| self.cell_diameters[c])
                .fold(0.0f64, f64::max);
            let dmin = patch
                .cells
                .iter()
                .map(|&c| self.cell_diameters[c])
                .fold(f64::INFINITY, f64::min);
            if dmax / dmin > LOCAL_UNIFORMITY_BOUND + 1e-12 {
                return Err(Error::MeshInvariant(format!(
                    "patch at vertex {v} violates local uniformity: diameter ratio {:.3}",
                    dmax / dmin
                )));
            }
        }
        Ok(())
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex(&self, v: usize) -> [f64; 2] {
        self.vertices[v]
    }

    pub fn cell(&self, c: usize) -> [usize; 3] {
        self.cells[c]
    }

    pub fn cell_area(&self, c: usize) -> f64 {
        self.cell_areas[c]
    }

    pub fn cell_diameter(&self, c: usize) -> f64 {
        self.cell_diameters[c]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn boundary_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| e.is_boundary())
    }

    pub fn patch(&self, vertex: usize) -> &Patch {
        &self.patches[vertex]
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    /// Largest cell diameter.
    pub fn h_max(&self) -> f64 {
        self.cell_diameters.iter().copied().fold(0.0, f64::max)
    }

    /// Coordinates of a cell's three vertices.
    pub fn cell_coords(&self, c: usize) -> [[f64; 2]; 3] {
        self.cells[c].map(|v| self.vertices[v])
    }

    /// Barycentric coordinates of a point with respect to a cell. The
    /// result sums to 1 exactly in the affine sense; coordinates outside
    /// [0, 1] mean the point lies outside the cell.
    pub fn barycentric(&self, cell: usize, point: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.cell_coords(cell);
        let area = self.cell_areas[cell];
        let la = signed_area(point, b, c) / area;
        let lb = signed_area(a, point, c) / area;
        [la, lb, 1.0 - la - lb]
    }

    /// Finds a cell containing the point (with a small tolerance for points
    /// on cell interfaces) and its barycentric coordinates there.
    pub fn locate(&self, point: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let tol = -1e-12;
        for c in 0..self.cells.len() {
            let bary = self.barycentric(c, point);
            if bary.iter().all(|&l| l >= tol) {
                return Some((c, bary));
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corner_vertex(mesh: &TriMesh, x: f64, y: f64) -> usize {
        (0..mesh.num_vertices())
            .find(|&v| {
                let p = mesh.vertex(v);
                (p[0] - x).abs() < 1e-14 && (p[1] - y).abs() < 1e-14
            })
            .expect("vertex at requested coordinates")
    }

    #[test]
    fn criss_cross_rejects_zero() {
        assert!(TriMesh::criss_cross(0).is_err());
    }

    #[test]
    fn criss_cross_counts_n2() {
        let mesh = TriMesh::criss_cross(2).unwrap();
        assert_eq!(mesh.num_vertices(), 13);
        assert_eq!(mesh.num_cells(), 16);
        assert_eq!(mesh.num_edges(), 28);
        assert_eq!(mesh.boundary_edges().count(), 8);
        let boundary_length: f64 = mesh.boundary_edges().map(|e| e.length).sum();
        assert!((boundary_length - 4.0).abs() < 1e-14);
    }

    #[test]
    fn corner_patch_has_two_cells() {
        let mesh = TriMesh::criss_cross(2).unwrap();
        for &(x, y) in &[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)] {
            let v = corner_vertex(&mesh, x, y);
            assert_eq!(mesh.patch(v).cells.len(), 2);
        }
    }

    #[test]
    fn patch_cardinalities_n2() {
        let mesh = TriMesh::criss_cross(2).unwrap();
        // Square centers sit in 4 cells, boundary edge midpoints in 4, the
        // central grid vertex in 8.
        let center = corner_vertex(&mesh, 0.25, 0.25);
        assert_eq!(mesh.patch(center).cells.len(), 4);
        let mid_bottom = corner_vertex(&mesh, 0.5, 0.0);
        assert_eq!(mesh.patch(mid_bottom).cells.len(), 4);
        assert!((mesh.patch(mid_bottom).measure - 0.25).abs() < 1e-14);
        let middle = corner_vertex(&mesh, 0.5, 0.5);
        assert_eq!(mesh.patch(middle).cells.len(), 8);
        assert!((mesh.patch(middle).measure - 0.5).abs() < 1e-14);
    }

    #[test]
    fn unit_square_patch_geometry() {
        let mesh = TriMesh::criss_cross(1).unwrap();
        assert_eq!(mesh.num_vertices(), 5);
        assert_eq!(mesh.num_cells(), 4);
        let center = corner_vertex(&mesh, 0.5, 0.5);
        let patch = mesh.patch(center);
        assert_eq!(patch.cells.len(), 4);
        assert!((patch.measure - 1.0).abs() < 1e-14);
        // Every cell of the n=1 mesh has diameter 1 (the square side).
        assert!((patch.h_a - 1.0).abs() < 1e-14);
        let corner = corner_vertex(&mesh, 0.0, 0.0);
        assert_eq!(mesh.patch(corner).cells.len(), 2);
        assert!((mesh.patch(corner).measure - 0.5).abs() < 1e-14);
    }

    #[test]
    fn refinement_counts_and_geometry() {
        let mut mesh = TriMesh::criss_cross(2).unwrap();
        let mut expected_cells = 16;
        for _ in 0..3 {
            let parent_h = mesh.h_max();
            mesh = mesh.uniform_refine();
            expected_cells *= 4;
            assert_eq!(mesh.num_cells(), expected_cells);
            // Red refinement halves every diameter exactly.
            assert!((mesh.h_max() - 0.5 * parent_h).abs() < 1e-15);
            let euler =
                mesh.num_vertices() as i64 - mesh.num_edges() as i64 + mesh.num_cells() as i64;
            assert_eq!(euler, 1);
            mesh.validate().unwrap();
        }
        assert_eq!(mesh.num_vertices(), 545);
    }

    #[test]
    fn boundary_normals_are_axis_aligned_outward() {
        let mesh = TriMesh::criss_cross(3).unwrap();
        for edge in mesh.boundary_edges() {
            let EdgeKind::Boundary { normal, .. } = edge.kind else {
                unreachable!()
            };
            let [p, q] = edge.vertices.map(|v| mesh.vertex(v));
            let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            let expected = if mid[1].abs() < 1e-14 {
                [0.0, -1.0]
            } else if (mid[1] - 1.0).abs() < 1e-14 {
                [0.0, 1.0]
            } else if mid[0].abs() < 1e-14 {
                [-1.0, 0.0]
            } else {
                [1.0, 0.0]
            };
            assert!((normal[0] - expected[0]).abs() < 1e-14);
            assert!((normal[1] - expected[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn perturbation_is_reproducible_and_keeps_boundary() {
        let mesh = TriMesh::criss_cross(3).unwrap().uniform_refine();
        let p1 = mesh.perturbed(42, 0.2).unwrap();
        let p2 = mesh.perturbed(42, 0.2).unwrap();
        let p3 = mesh.perturbed(43, 0.2).unwrap();
        let mut interior_moved = false;
        let mut seeds_differ = false;
        for v in 0..mesh.num_vertices() {
            let (a, b, c, orig) = (p1.vertex(v), p2.vertex(v), p3.vertex(v), mesh.vertex(v));
            assert_eq!(a, b, "same seed must give identical meshes");
            if mesh.is_boundary_vertex(v) {
                assert_eq!(a, orig, "boundary vertices must not move");
            } else {
                interior_moved |= a != orig;
                seeds_differ |= a != c;
            }
        }
        assert!(interior_moved);
        assert!(seeds_differ);
        p1.validate().unwrap();
    }

    #[test]
    fn perturbation_rejects_bad_amplitude() {
        let mesh = TriMesh::criss_cross(2).unwrap();
        assert!(mesh.perturbed(1, 0.0).is_err());
        assert!(mesh.perturbed(1, 0.5).is_err());
    }

    #[test]
    fn barycentric_roundtrip() {
        let mesh = TriMesh::criss_cross(2).unwrap().perturbed(7, 0.2).unwrap();
        for c in 0..mesh.num_cells() {
            let [a, b, cc] = mesh.cell_coords(c);
            let bary = [0.3, 0.5, 0.2];
            let p = [
                bary[0] * a[0] + bary[1] * b[0] + bary[2] * cc[0],
                bary[0] * a[1] + bary[1] * b[1] + bary[2] * cc[1],
            ];
            let back = mesh.barycentric(c, p);
            for k in 0..3 {
                assert!((back[k] - bary[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn locate_finds_cells() {
        let mesh = TriMesh::criss_cross(2).unwrap();
        let (cell, bary) = mesh.locate([0.1, 0.05]).unwrap();
        assert!(bary.iter().all(|&l| l >= -1e-12 && l <= 1.0 + 1e-12));
        let verts = mesh.cell_coords(cell);
        let min_y = verts.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        assert!(min_y < 0.05);
        assert!(mesh.locate([1.5, 0.5]).is_none());
    }

    #[test]
    fn areas_partition_unity_across_levels() {
        for n in [1, 2, 3] {
            let mut mesh = TriMesh::criss_cross(n).unwrap();
            for _ in 0..2 {
                let total: f64 = (0..mesh.num_cells()).map(|c| mesh.cell_area(c)).sum();
                assert!((total - 1.0).abs() < 1e-12);
                mesh = mesh.uniform_refine();
            }
        }
    }
}
