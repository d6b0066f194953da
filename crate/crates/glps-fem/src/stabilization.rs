//! Generalized local projection stabilization on vertex patches.
//!
//! For every mesh vertex a, the fluctuation operator subtracts the mean
//! over the patch M_a (all cells touching a): kappa_a(v) = v - mean(v).
//! The interior stabilization S_si penalizes fluctuations of the velocity
//! divergence and of the pressure gradient, each patch weighted by
//! beta_a = beta * h_a. The boundary stabilization S_sb penalizes the
//! normal velocity trace on boundary edges, enforcing u.n = 0 weakly.
//!
//! Both P1 quantities are piecewise constant, so all patch integrals have
//! closed forms. For cells l, l' in one patch the fluctuation energy reduces
//! to the coefficient matrix
//! C_{ll'} = beta_a (delta_{ll'} A_l - A_l A_{l'} / |M_a|),
//! which is assembled exactly without quadrature.

use faer::sparse::SparseColMat;

use crate::assembly::ProblemKind;
use crate::mesh::{EdgeKind, TriMesh};
use crate::solver;
use crate::space::basis_gradients;
use crate::{Error, Result};

/// Stabilization weights: `beta` scales the interior patch terms, `zeta`
/// the Nitsche boundary penalty of the Stokes problem.
#[derive(Debug, Clone, Copy)]
pub struct StabilizationParams {
    pub beta: f64,
    pub zeta: f64,
}

impl StabilizationParams {
    /// Defaults for the Darcy problem (zeta is unused there).
    pub fn darcy_default() -> Self {
        StabilizationParams {
            beta: 10.0,
            zeta: 0.0,
        }
    }

    /// Defaults for the Stokes problem.
    pub fn stokes_default() -> Self {
        StabilizationParams {
            beta: 1.0,
            zeta: 2.0,
        }
    }

    /// Patch weight beta_a = beta * h_a.
    pub fn beta_a(&self, h_a: f64) -> f64 {
        self.beta * h_a
    }

    /// Checks the parameter domain for a problem: beta must be a finite
    /// non-negative number, and Stokes additionally needs zeta > 0 for its
    /// Nitsche penalty.
    pub fn validate(&self, kind: ProblemKind) -> Result<()> {
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "stabilization parameter beta must be finite and >= 0, got {}",
                self.beta
            )));
        }
        if kind == ProblemKind::Stokes && !(self.zeta.is_finite() && self.zeta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "Nitsche penalty zeta must be finite and > 0 for Stokes, got {}",
                self.zeta
            )));
        }
        Ok(())
    }
}

/// Mean over the patch M_a of a piecewise-constant quantity given per cell.
/// `cell_values` must hold one value for every cell of the mesh.
pub fn patch_mean(mesh: &TriMesh, vertex: usize, cell_values: &[f64]) -> Result<f64> {
    if cell_values.len() != mesh.num_cells() {
        return Err(Error::InvalidArgument(format!(
            "patch mean needs one value per cell ({}), got {}",
            mesh.num_cells(),
            cell_values.len()
        )));
    }
    if vertex >= mesh.num_vertices() {
        return Err(Error::InvalidArgument(format!("no vertex {vertex}")));
    }
    let patch = mesh.patch(vertex);
    let weighted: f64 = patch
        .cells
        .iter()
        .map(|&c| mesh.cell_area(c) * cell_values[c])
        .sum();
    Ok(weighted / patch.measure)
}

/// Triplets of the interior stabilization: the velocity block (divergence
/// fluctuations, 2V x 2V) and the pressure block (gradient fluctuations,
/// V x V).
///
/// Expanding kappa_a over the patch couples every cell pair, so the sum is
/// accumulated per patch into a dense matrix over the patch's own dofs
/// before being emitted; pushing one triplet per cell pair and dof pair
/// instead multiplies the assembly traffic roughly tenfold. With w_l the
/// area-weighted divergence (or gradient) row of member cell l, the patch
/// contribution is beta_a (sum_l w_l d_l^T - W W^T / |M_a|), W = sum_l w_l.
pub fn s_si_triplets(
    mesh: &TriMesh,
    params: &StabilizationParams,
) -> (Vec<(usize, usize, f64)>, Vec<(usize, usize, f64)>) {
    let mut vel = Vec::new();
    let mut pre = Vec::new();
    // Scratch buffers reused across patches: the local vertex list and the
    // dense patch matrices (velocity uses two dofs per local vertex).
    let mut local = Vec::new();
    let mut div_rows = Vec::new();
    let mut grad_rows = Vec::new();
    for a in 0..mesh.num_vertices() {
        let patch = mesh.patch(a);
        let beta_a = params.beta_a(patch.h_a);
        if beta_a == 0.0 {
            continue;
        }
        local.clear();
        for &l in &patch.cells {
            for &v in &mesh.cell(l) {
                if !local.contains(&v) {
                    local.push(v);
                }
            }
        }
        let nl = local.len();
        div_rows.clear();
        grad_rows.clear();
        for &l in &patch.cells {
            let grads = basis_gradients(mesh, l);
            let vs = mesh.cell(l);
            let mut div_row = vec![0.0f64; 2 * nl];
            let mut grad_row = vec![[0.0f64; 2]; nl];
            for k in 0..3 {
                let loc = local.iter().position(|&v| v == vs[k]).expect("member vertex");
                for comp in 0..2 {
                    div_row[2 * loc + comp] = grads[k][comp];
                }
                grad_row[loc] = grads[k];
            }
            div_rows.push(div_row);
            grad_rows.push(grad_row);
        }

        let mut vel_loc = vec![0.0f64; 4 * nl * nl];
        let mut pre_loc = vec![0.0f64; nl * nl];
        let mut div_sum = vec![0.0f64; 2 * nl];
        let mut grad_sum = vec![[0.0f64; 2]; nl];
        for (ci, &l) in patch.cells.iter().enumerate() {
            let area = mesh.cell_area(l);
            let dr = &div_rows[ci];
            let gr = &grad_rows[ci];
            for i in 0..2 * nl {
                if dr[i] == 0.0 {
                    continue;
                }
                let w = beta_a * area * dr[i];
                for j in 0..2 * nl {
                    vel_loc[i * 2 * nl + j] += w * dr[j];
                }
                div_sum[i] += area * dr[i];
            }
            for i in 0..nl {
                if gr[i] == [0.0; 2] {
                    continue;
                }
                for j in 0..nl {
                    pre_loc[i * nl + j] +=
                        beta_a * area * (gr[i][0] * gr[j][0] + gr[i][1] * gr[j][1]);
                }
                grad_sum[i][0] += area * gr[i][0];
                grad_sum[i][1] += area * gr[i][1];
            }
        }
        let scale = beta_a / patch.measure;
        for i in 0..2 * nl {
            if div_sum[i] == 0.0 {
                continue;
            }
            let w = scale * div_sum[i];
            for j in 0..2 * nl {
                vel_loc[i * 2 * nl + j] -= w * div_sum[j];
            }
        }
        for i in 0..nl {
            for j in 0..nl {
                pre_loc[i * nl + j] -= scale
                    * (grad_sum[i][0] * grad_sum[j][0] + grad_sum[i][1] * grad_sum[j][1]);
            }
        }

        for (li, &vi) in local.iter().enumerate() {
            for (lj, &vj) in local.iter().enumerate() {
                for ci in 0..2 {
                    for cj in 0..2 {
                        let v = vel_loc[(2 * li + ci) * 2 * nl + (2 * lj + cj)];
                        if v != 0.0 {
                            vel.push((2 * vi + ci, 2 * vj + cj, v));
                        }
                    }
                }
                let v = pre_loc[li * nl + lj];
                if v != 0.0 {
                    pre.push((vi, vj, v));
                }
            }
        }
    }
    (vel, pre)
}

/// Triplets of the boundary stabilization S_sb = sum over boundary edges of
/// the normal-trace mass form int_E (u.n)(v.n).
pub fn s_sb_triplets(mesh: &TriMesh) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for edge in mesh.boundary_edges() {
        let EdgeKind::Boundary { normal, .. } = edge.kind else {
            unreachable!("boundary_edges yields boundary edges");
        };
        let [p, q] = edge.vertices;
        // 1D P1 mass matrix on the edge, scaled by its length.
        let m = [[edge.length / 3.0, edge.length / 6.0], [
            edge.length / 6.0,
            edge.length / 3.0,
        ]];
        let verts = [p, q];
        for (i, &vi) in verts.iter().enumerate() {
            for (j, &vj) in verts.iter().enumerate() {
                for ci in 0..2 {
                    for cj in 0..2 {
                        out.push((
                            2 * vi + ci,
                            2 * vj + cj,
                            m[i][j] * normal[ci] * normal[cj],
                        ));
                    }
                }
            }
        }
    }
    out
}

/// Assembled interior stabilization matrices (velocity and pressure block)
/// for direct inspection; assembly consumes the triplet form instead.
pub fn s_si_matrices(
    mesh: &TriMesh,
    params: &StabilizationParams,
) -> (SparseColMat<usize, f64>, SparseColMat<usize, f64>) {
    let (vel, pre) = s_si_triplets(mesh, params);
    let nv = mesh.num_vertices();
    (
        solver::csc_from_triplets(2 * nv, 2 * nv, &vel),
        solver::csc_from_triplets(nv, nv, &pre),
    )
}

/// Assembled boundary stabilization matrix.
pub fn s_sb_matrix(mesh: &TriMesh) -> SparseColMat<usize, f64> {
    let nv = mesh.num_vertices();
    solver::csc_from_triplets(2 * nv, 2 * nv, &s_sb_triplets(mesh))
}
