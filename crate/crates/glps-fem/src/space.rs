//! Continuous piecewise-linear (P1) finite element spaces.
//!
//! Scalar fields carry one coefficient per vertex; vector fields interleave
//! the two components, so vertex v owns dofs 2v and 2v+1. Field types are
//! lightweight views over a coefficient slice plus the mesh, with checked
//! evaluation and exact cell-wise derivatives.

use faer::sparse::SparseColMat;

use crate::mesh::TriMesh;
use crate::quadrature::{self, TriangleRule};
use crate::solver;
use crate::{Error, Result};

/// Gradients of the three barycentric basis functions on a cell. They are
/// constant on the cell; row k is the gradient of the hat function of local
/// vertex k.
pub fn basis_gradients(mesh: &TriMesh, cell: usize) -> [[f64; 2]; 3] {
    let [a, b, c] = mesh.cell_coords(cell);
    let inv_two_area = 1.0 / (2.0 * mesh.cell_area(cell));
    [
        [(b[1] - c[1]) * inv_two_area, (c[0] - b[0]) * inv_two_area],
        [(c[1] - a[1]) * inv_two_area, (a[0] - c[0]) * inv_two_area],
        [(a[1] - b[1]) * inv_two_area, (b[0] - a[0]) * inv_two_area],
    ]
}

const BARY_TOL: f64 = 1e-10;

fn check_bary(bary: [f64; 3]) -> Result<()> {
    let sum: f64 = bary.iter().sum();
    if bary.iter().any(|&l| !(-BARY_TOL..=1.0 + BARY_TOL).contains(&l))
        || (sum - 1.0).abs() > BARY_TOL
    {
        return Err(Error::InvalidArgument(format!(
            "barycentric coordinates {bary:?} do not describe a point in the cell"
        )));
    }
    Ok(())
}

/// View of a scalar P1 field: one coefficient per mesh vertex.
pub struct ScalarField<'a> {
    mesh: &'a TriMesh,
    coeffs: &'a [f64],
}

impl<'a> ScalarField<'a> {
    pub fn new(mesh: &'a TriMesh, coeffs: &'a [f64]) -> Result<Self> {
        if coeffs.len() != mesh.num_vertices() {
            return Err(Error::InvalidArgument(format!(
                "scalar field needs {} coefficients, got {}",
                mesh.num_vertices(),
                coeffs.len()
            )));
        }
        Ok(ScalarField { mesh, coeffs })
    }

    pub fn vertex_value(&self, v: usize) -> f64 {
        self.coeffs[v]
    }

    /// Evaluates at a point of `cell` given by barycentric coordinates.
    /// Rejects out-of-range cells and points outside the cell.
    pub fn eval(&self, cell: usize, bary: [f64; 3]) -> Result<f64> {
        if cell >= self.mesh.num_cells() {
            return Err(Error::InvalidArgument(format!("no cell {cell}")));
        }
        check_bary(bary)?;
        let vs = self.mesh.cell(cell);
        Ok((0..3).map(|k| bary[k] * self.coeffs[vs[k]]).sum())
    }

    /// The (constant) gradient on a cell.
    pub fn cell_gradient(&self, cell: usize) -> [f64; 2] {
        let grads = basis_gradients(self.mesh, cell);
        let vs = self.mesh.cell(cell);
        let mut g = [0.0; 2];
        for k in 0..3 {
            g[0] += self.coeffs[vs[k]] * grads[k][0];
            g[1] += self.coeffs[vs[k]] * grads[k][1];
        }
        g
    }

    /// Exact L2 norm of the piecewise-linear field.
    pub fn l2_norm(&self) -> f64 {
        let mut sq = 0.0;
        for c in 0..self.mesh.num_cells() {
            let [v0, v1, v2] = self.mesh.cell(c).map(|v| self.coeffs[v]);
            // Exact P1 mass energy on a triangle.
            sq += self.mesh.cell_area(c) / 6.0
                * (v0 * v0 + v1 * v1 + v2 * v2 + v0 * v1 + v1 * v2 + v2 * v0);
        }
        sq.sqrt()
    }
}

/// View of a vector P1 field with interleaved components.
pub struct VectorField<'a> {
    mesh: &'a TriMesh,
    coeffs: &'a [f64],
}

impl<'a> VectorField<'a> {
    pub fn new(mesh: &'a TriMesh, coeffs: &'a [f64]) -> Result<Self> {
        if coeffs.len() != 2 * mesh.num_vertices() {
            return Err(Error::InvalidArgument(format!(
                "vector field needs {} coefficients, got {}",
                2 * mesh.num_vertices(),
                coeffs.len()
            )));
        }
        Ok(VectorField { mesh, coeffs })
    }

    pub fn vertex_value(&self, v: usize) -> [f64; 2] {
        [self.coeffs[2 * v], self.coeffs[2 * v + 1]]
    }

    pub fn eval(&self, cell: usize, bary: [f64; 3]) -> Result<[f64; 2]> {
        if cell >= self.mesh.num_cells() {
            return Err(Error::InvalidArgument(format!("no cell {cell}")));
        }
        check_bary(bary)?;
        let vs = self.mesh.cell(cell);
        let mut out = [0.0; 2];
        for k in 0..3 {
            let val = self.vertex_value(vs[k]);
            out[0] += bary[k] * val[0];
            out[1] += bary[k] * val[1];
        }
        Ok(out)
    }

    /// Jacobian J[i][j] = d u_i / d x_j, constant on the cell.
    pub fn cell_jacobian(&self, cell: usize) -> [[f64; 2]; 2] {
        let grads = basis_gradients(self.mesh, cell);
        let vs = self.mesh.cell(cell);
        let mut jac = [[0.0; 2]; 2];
        for k in 0..3 {
            let val = self.vertex_value(vs[k]);
            for i in 0..2 {
                for j in 0..2 {
                    jac[i][j] += val[i] * grads[k][j];
                }
            }
        }
        jac
    }

    pub fn cell_divergence(&self, cell: usize) -> f64 {
        let jac = self.cell_jacobian(cell);
        jac[0][0] + jac[1][1]
    }
}

/// Vertex interpolant of a scalar function.
pub fn interpolate_scalar(mesh: &TriMesh, g: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    (0..mesh.num_vertices())
        .map(|v| {
            let p = mesh.vertex(v);
            g(p[0], p[1])
        })
        .collect()
}

/// Vertex interpolant of a vector function, interleaved.
pub fn interpolate_vector(mesh: &TriMesh, g: impl Fn(f64, f64) -> [f64; 2]) -> Vec<f64> {
    let mut coeffs = Vec::with_capacity(2 * mesh.num_vertices());
    for v in 0..mesh.num_vertices() {
        let p = mesh.vertex(v);
        let val = g(p[0], p[1]);
        coeffs.push(val[0]);
        coeffs.push(val[1]);
    }
    coeffs
}

/// Triplets of the exact P1 scalar mass matrix (vertex by vertex).
pub(crate) fn mass_triplets(mesh: &TriMesh) -> Vec<(usize, usize, f64)> {
    let mut triplets = Vec::with_capacity(9 * mesh.num_cells());
    for c in 0..mesh.num_cells() {
        let vs = mesh.cell(c);
        let scale = mesh.cell_area(c) / 12.0;
        for i in 0..3 {
            for j in 0..3 {
                let w = if i == j { 2.0 } else { 1.0 };
                triplets.push((vs[i], vs[j], scale * w));
            }
        }
    }
    triplets
}

/// Assembles the exact P1 mass matrix (vertex by vertex).
pub fn mass_matrix(mesh: &TriMesh) -> SparseColMat<usize, f64> {
    let nv = mesh.num_vertices();
    solver::csc_from_triplets(nv, nv, &mass_triplets(mesh))
}

/// L2 projection of a scalar function onto the P1 space.
///
/// The right-hand side uses a triangle rule of the given degree; the mass
/// system is solved by sparse Cholesky and the relative residual must come
/// out below 1e-10, otherwise an error is returned.
pub fn l2_project_scalar(
    mesh: &TriMesh,
    g: &dyn Fn(f64, f64) -> f64,
    quad_degree: usize,
) -> Result<Vec<f64>> {
    let rule = quadrature::triangle_rule(quad_degree)?;
    let mass = mass_matrix(mesh);
    let rhs = scalar_load_vector(mesh, g, &rule);
    solver::ensure_deterministic_backend();
    let coeffs = {
        use faer::prelude::SpSolver;
        let chol = mass
            .sp_cholesky(faer::Side::Lower)
            .map_err(|e| Error::SolverFailure(format!("mass Cholesky failed: {e:?}")))?;
        let b = faer::mat::from_column_major_slice(&rhs, rhs.len(), 1);
        let x = chol.solve(b);
        (0..rhs.len()).map(|i| x[(i, 0)]).collect::<Vec<f64>>()
    };
    let residual = solver::relative_residual(&mass, &coeffs, &rhs);
    if residual > 1e-10 {
        return Err(Error::SolverFailure(format!(
            "mass solve residual {residual:.3e} exceeds 1e-10"
        )));
    }
    Ok(coeffs)
}

/// Load vector (g, phi_i) for all vertex basis functions.
fn scalar_load_vector(mesh: &TriMesh, g: &dyn Fn(f64, f64) -> f64, rule: &TriangleRule) -> Vec<f64> {
    let mut rhs = vec![0.0; mesh.num_vertices()];
    for c in 0..mesh.num_cells() {
        let [a, b, cc] = mesh.cell_coords(c);
        let vs = mesh.cell(c);
        let jac = 2.0 * mesh.cell_area(c);
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let bary = [1.0 - p[0] - p[1], p[0], p[1]];
            let x = a[0] + p[0] * (b[0] - a[0]) + p[1] * (cc[0] - a[0]);
            let y = a[1] + p[0] * (b[1] - a[1]) + p[1] * (cc[1] - a[1]);
            let gv = g(x, y) * w * jac;
            for k in 0..3 {
                rhs[vs[k]] += gv * bary[k];
            }
        }
    }
    rhs
}
