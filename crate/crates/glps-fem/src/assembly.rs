//! Assembly of the stabilized saddle-point systems.
//!
//! Degrees of freedom are ordered velocity first (interleaved, 2 per
//! vertex), then pressure (1 per vertex), then a single Lagrange multiplier
//! enforcing the zero-mean pressure constraint. The stored matrix follows
//! the unsymmetric sign convention
//!
//! [ A_u   -B    0 ] [u]   [ (f, v)   ]
//! [ B^T  S_gp   g ] [p] = [ (phi, q) ]
//! [  0   g^T    0 ] [l]   [ 0        ]
//!
//! where B holds b_h(q, v) = (q, div v) - sum over boundary edges of
//! (v.n, q), S_gp the pressure-gradient fluctuation term, and g the exact
//! integrals of the pressure basis functions.
//!
//! All bilinear forms of piecewise-linear arguments have closed-form
//! element integrals and are assembled exactly; quadrature enters only
//! through the right-hand side. Assembly is sequential and triplets are
//! merged canonically, so repeated runs are bitwise identical.

use faer::sparse::SparseColMat;

use crate::mesh::{EdgeKind, TriMesh};
use crate::problems::ManufacturedProblem;
use crate::quadrature;
use crate::solver;
use crate::space::{self, basis_gradients};
use crate::stabilization::{self, StabilizationParams};
use crate::Result;

/// Which saddle-point problem is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Darcy,
    Stokes,
}

impl ProblemKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemKind::Darcy => "darcy",
            ProblemKind::Stokes => "stokes",
        }
    }
}

/// Index map for the monolithic dof vector.
#[derive(Debug, Clone, Copy)]
pub struct DofLayout {
    pub num_vertices: usize,
}

impl DofLayout {
    pub fn velocity(&self, vertex: usize, comp: usize) -> usize {
        2 * vertex + comp
    }

    pub fn pressure(&self, vertex: usize) -> usize {
        2 * self.num_vertices + vertex
    }

    pub fn multiplier(&self) -> usize {
        3 * self.num_vertices
    }

    /// Total dof count including the multiplier.
    pub fn total(&self) -> usize {
        3 * self.num_vertices + 1
    }
}

/// Assembled bordered system, immutable after construction.
pub struct SaddleSystem {
    pub matrix: SparseColMat<usize, f64>,
    pub rhs: Vec<f64>,
    pub layout: DofLayout,
    pub kind: ProblemKind,
}

/// System pieces before the mean constraint is attached: triplets and rhs
/// cover the 3V velocity/pressure dofs only.
pub struct SystemBlocks {
    pub triplets: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
    pub layout: DofLayout,
    pub kind: ProblemKind,
}

/// Exact vector P1 mass matrix triplets (components uncoupled).
fn vector_mass_triplets(mesh: &TriMesh) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(18 * mesh.num_cells());
    for c in 0..mesh.num_cells() {
        let vs = mesh.cell(c);
        let scale = mesh.cell_area(c) / 12.0;
        for i in 0..3 {
            for j in 0..3 {
                let w = scale * if i == j { 2.0 } else { 1.0 };
                for comp in 0..2 {
                    out.push((2 * vs[i] + comp, 2 * vs[j] + comp, w));
                }
            }
        }
    }
    out
}

/// Exact vector P1 stiffness matrix triplets (grad u : grad v).
fn vector_stiffness_triplets(mesh: &TriMesh) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(18 * mesh.num_cells());
    for c in 0..mesh.num_cells() {
        let vs = mesh.cell(c);
        let grads = basis_gradients(mesh, c);
        let area = mesh.cell_area(c);
        for i in 0..3 {
            for j in 0..3 {
                let w = area * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
                for comp in 0..2 {
                    out.push((2 * vs[i] + comp, 2 * vs[j] + comp, w));
                }
            }
        }
    }
    out
}

/// Nitsche consistency term -sum over boundary edges of (du/dn, v): rows
/// are test dofs on the edge, columns the trial dofs of the boundary cell
/// whose one-sided gradient defines du/dn.
fn nitsche_consistency_triplets(mesh: &TriMesh) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for edge in mesh.boundary_edges() {
        let EdgeKind::Boundary { cell, normal } = edge.kind else {
            unreachable!()
        };
        let grads = basis_gradients(mesh, cell);
        let vs = mesh.cell(cell);
        // int_E of a P1 test hat over its edge is h/2 at each endpoint.
        let half_h = 0.5 * edge.length;
        for &test_vertex in &edge.vertices {
            for k in 0..3 {
                let dn = grads[k][0] * normal[0] + grads[k][1] * normal[1];
                for comp in 0..2 {
                    out.push((
                        2 * test_vertex + comp,
                        2 * vs[k] + comp,
                        -half_h * dn,
                    ));
                }
            }
        }
    }
    out
}

/// Local width of a boundary edge: the height of its cell over the edge.
/// This is the length scale under which the P1 trace inequality
/// ||dv/dn||_E^2 <= (2 / h_E) ||grad v||_K^2 holds with a mesh-independent
/// constant, so the default penalty stays coercive on every mesh.
pub(crate) fn boundary_edge_width(mesh: &TriMesh, edge: &crate::mesh::Edge) -> f64 {
    let EdgeKind::Boundary { cell, .. } = edge.kind else {
        unreachable!("boundary width queried for an interior edge")
    };
    2.0 * mesh.cell_area(cell) / edge.length
}

/// Nitsche penalty sum over boundary edges of (zeta / h_E) (u, v): the edge
/// mass matrix scaled by zeta / h_E.
fn nitsche_penalty_triplets(mesh: &TriMesh, zeta: f64) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for edge in mesh.boundary_edges() {
        let verts = edge.vertices;
        let w = zeta / boundary_edge_width(mesh, edge) * edge.length / 6.0;
        let m = [[2.0 * w, w], [w, 2.0 * w]];
        for i in 0..2 {
            for j in 0..2 {
                for comp in 0..2 {
                    out.push((2 * verts[i] + comp, 2 * verts[j] + comp, m[i][j]));
                }
            }
        }
    }
    out
}

/// Triplets of the coupling b_h(q, v) = (q, div v) - (v.n, q)_boundary,
/// indexed (velocity dof, pressure vertex).
fn coupling_triplets(mesh: &TriMesh) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for c in 0..mesh.num_cells() {
        let vs = mesh.cell(c);
        let grads = basis_gradients(mesh, c);
        // (psi_m, div phi): div phi constant, int psi_m = area / 3.
        let third_area = mesh.cell_area(c) / 3.0;
        for k in 0..3 {
            for comp in 0..2 {
                for &m in &vs {
                    out.push((2 * vs[k] + comp, m, third_area * grads[k][comp]));
                }
            }
        }
    }
    for edge in mesh.boundary_edges() {
        let EdgeKind::Boundary { normal, .. } = edge.kind else {
            unreachable!()
        };
        let verts = edge.vertices;
        let m = [
            [edge.length / 3.0, edge.length / 6.0],
            [edge.length / 6.0, edge.length / 3.0],
        ];
        for i in 0..2 {
            for j in 0..2 {
                for comp in 0..2 {
                    out.push((2 * verts[i] + comp, verts[j], -m[i][j] * normal[comp]));
                }
            }
        }
    }
    out
}

/// Triplets of the velocity-velocity block A_u including stabilization.
fn velocity_block_triplets(
    mesh: &TriMesh,
    params: &StabilizationParams,
    kind: ProblemKind,
) -> Vec<(usize, usize, f64)> {
    let mut out = match kind {
        ProblemKind::Darcy => vector_mass_triplets(mesh),
        ProblemKind::Stokes => {
            let mut t = vector_stiffness_triplets(mesh);
            let cons = nitsche_consistency_triplets(mesh);
            t.extend(cons.iter().map(|&(i, j, v)| (j, i, v)));
            t.extend(cons);
            t.extend(nitsche_penalty_triplets(mesh, params.zeta));
            t
        }
    };
    let (s_vel, _) = stabilization::s_si_triplets(mesh, params);
    out.extend(s_vel);
    out.extend(stabilization::s_sb_triplets(mesh));
    out
}

/// Assembled velocity block (for coercivity probes and energy tests).
pub fn velocity_block(
    mesh: &TriMesh,
    params: &StabilizationParams,
    kind: ProblemKind,
) -> Result<SparseColMat<usize, f64>> {
    params.validate(kind)?;
    let n = 2 * mesh.num_vertices();
    Ok(solver::csc_from_triplets(
        n,
        n,
        &velocity_block_triplets(mesh, params, kind),
    ))
}

/// Assembles matrix triplets and right-hand side without the zero-mean
/// pressure constraint. The right-hand side integrates f (and phi for
/// Darcy) with a triangle rule of degree `quad_degree`.
pub fn assemble_unconstrained(
    mesh: &TriMesh,
    params: &StabilizationParams,
    problem: &ManufacturedProblem,
    kind: ProblemKind,
    quad_degree: usize,
) -> Result<SystemBlocks> {
    params.validate(kind)?;
    let rule = quadrature::triangle_rule(quad_degree)?;
    let nv = mesh.num_vertices();
    let layout = DofLayout { num_vertices: nv };

    let mut triplets = velocity_block_triplets(mesh, params, kind);
    let (_, s_pre) = stabilization::s_si_triplets(mesh, params);
    triplets.extend(
        s_pre
            .into_iter()
            .map(|(i, j, v)| (2 * nv + i, 2 * nv + j, v)),
    );
    for (i, m, v) in coupling_triplets(mesh) {
        triplets.push((i, 2 * nv + m, -v));
        triplets.push((2 * nv + m, i, v));
    }

    let mut rhs = vec![0.0; 3 * nv];
    for c in 0..mesh.num_cells() {
        let [a, b, cc] = mesh.cell_coords(c);
        let vs = mesh.cell(c);
        let jac = 2.0 * mesh.cell_area(c);
        for (pt, w) in rule.points.iter().zip(&rule.weights) {
            let bary = [1.0 - pt[0] - pt[1], pt[0], pt[1]];
            let x = a[0] + pt[0] * (b[0] - a[0]) + pt[1] * (cc[0] - a[0]);
            let y = a[1] + pt[0] * (b[1] - a[1]) + pt[1] * (cc[1] - a[1]);
            let f = problem.forcing(x, y);
            let scale = w * jac;
            for k in 0..3 {
                rhs[2 * vs[k]] += scale * bary[k] * f[0];
                rhs[2 * vs[k] + 1] += scale * bary[k] * f[1];
            }
            if kind == ProblemKind::Darcy {
                let phi = problem.source(x, y);
                if phi != 0.0 {
                    for k in 0..3 {
                        rhs[2 * nv + vs[k]] += scale * bary[k] * phi;
                    }
                }
            }
        }
    }

    Ok(SystemBlocks {
        triplets,
        rhs,
        layout,
        kind,
    })
}

/// Borders the system with the zero-mean pressure constraint: one extra
/// row/column holding the exact integrals of the pressure basis functions.
pub fn attach_mean_constraint(blocks: SystemBlocks, mesh: &TriMesh) -> SaddleSystem {
    let nv = blocks.layout.num_vertices;
    let mut triplets = blocks.triplets;
    let g = pressure_integral_vector(mesh);
    for (m, &gm) in g.iter().enumerate() {
        triplets.push((2 * nv + m, 3 * nv, gm));
        triplets.push((3 * nv, 2 * nv + m, gm));
    }
    let mut rhs = blocks.rhs;
    rhs.push(0.0);
    let n = 3 * nv + 1;
    SaddleSystem {
        matrix: solver::csc_from_triplets(n, n, &triplets),
        rhs,
        layout: blocks.layout,
        kind: blocks.kind,
    }
}

/// Exact integrals of the pressure basis functions: g_m = sum of A_K / 3
/// over cells containing vertex m.
pub fn pressure_integral_vector(mesh: &TriMesh) -> Vec<f64> {
    let mut g = vec![0.0; mesh.num_vertices()];
    for c in 0..mesh.num_cells() {
        let third = mesh.cell_area(c) / 3.0;
        for &v in &mesh.cell(c) {
            g[v] += third;
        }
    }
    g
}

/// Full assembly: blocks plus the mean constraint.
pub fn assemble(
    mesh: &TriMesh,
    params: &StabilizationParams,
    problem: &ManufacturedProblem,
    kind: ProblemKind,
    quad_degree: usize,
) -> Result<SaddleSystem> {
    let blocks = assemble_unconstrained(mesh, params, problem, kind, quad_degree)?;
    Ok(attach_mean_constraint(blocks, mesh))
}

/// Assembles the Darcy system.
pub fn assemble_darcy(
    mesh: &TriMesh,
    params: &StabilizationParams,
    problem: &ManufacturedProblem,
    quad_degree: usize,
) -> Result<SaddleSystem> {
    assemble(mesh, params, problem, ProblemKind::Darcy, quad_degree)
}

/// Assembles the Stokes system.
pub fn assemble_stokes(
    mesh: &TriMesh,
    params: &StabilizationParams,
    problem: &ManufacturedProblem,
    quad_degree: usize,
) -> Result<SaddleSystem> {
    assemble(mesh, params, problem, ProblemKind::Stokes, quad_degree)
}

/// Gram matrix of the GLP norm on the 3V velocity/pressure dofs.
///
/// Darcy: |||(u, p)|||^2 = ||u||^2 + ||h^{1/2} div u||^2 + ||p||^2 + S_h.
/// Stokes: ||grad u||^2 + ||p||^2 + sum (zeta/h_E)||u||_E^2 + S_h.
/// S_h is the full stabilization (interior fluctuations plus the boundary
/// normal-trace term).
pub fn glp_norm_gram(
    mesh: &TriMesh,
    params: &StabilizationParams,
    kind: ProblemKind,
) -> Result<SparseColMat<usize, f64>> {
    params.validate(kind)?;
    let nv = mesh.num_vertices();
    let mut triplets = match kind {
        ProblemKind::Darcy => {
            let mut t = vector_mass_triplets(mesh);
            // Weighted divergence term: h_K A_K (div u)^2 per cell.
            for c in 0..mesh.num_cells() {
                let vs = mesh.cell(c);
                let grads = basis_gradients(mesh, c);
                let w = mesh.cell_diameter(c) * mesh.cell_area(c);
                for i in 0..3 {
                    for ci in 0..2 {
                        for j in 0..3 {
                            for cj in 0..2 {
                                t.push((
                                    2 * vs[i] + ci,
                                    2 * vs[j] + cj,
                                    w * grads[i][ci] * grads[j][cj],
                                ));
                            }
                        }
                    }
                }
            }
            t
        }
        ProblemKind::Stokes => {
            let mut t = vector_stiffness_triplets(mesh);
            t.extend(nitsche_penalty_triplets(mesh, params.zeta));
            t
        }
    };
    let (s_vel, s_pre) = stabilization::s_si_triplets(mesh, params);
    triplets.extend(s_vel);
    triplets.extend(stabilization::s_sb_triplets(mesh));
    triplets.extend(
        s_pre
            .into_iter()
            .map(|(i, j, v)| (2 * nv + i, 2 * nv + j, v)),
    );
    triplets.extend(
        space::mass_triplets(mesh)
            .into_iter()
            .map(|(i, j, v)| (2 * nv + i, 2 * nv + j, v)),
    );
    let n = 3 * nv;
    Ok(solver::csc_from_triplets(n, n, &triplets))
}

/// Consistency residual of the interpolated exact solution, split into the
/// interior stabilization part (which vanishes for beta = 0) and the rest
/// (interpolation and boundary terms).
pub struct ConsistencyReport {
    pub max_residual: f64,
    pub interpolation_part: f64,
    pub stabilization_part: f64,
}

pub fn consistency_residual(
    mesh: &TriMesh,
    params: &StabilizationParams,
    problem: &ManufacturedProblem,
    kind: ProblemKind,
    quad_degree: usize,
) -> Result<ConsistencyReport> {
    let system = assemble(mesh, params, problem, kind, quad_degree)?;
    let nv = mesh.num_vertices();
    let u_i = space::interpolate_vector(mesh, |x, y| problem.velocity(x, y));
    let p_i = space::interpolate_scalar(mesh, |x, y| problem.pressure(x, y));
    let mut x = Vec::with_capacity(3 * nv + 1);
    x.extend_from_slice(&u_i);
    x.extend_from_slice(&p_i);
    x.push(0.0);

    let kx = solver::spmv(&system.matrix, &x);
    let residual: Vec<f64> = kx
        .iter()
        .zip(&system.rhs)
        .map(|(a, b)| a - b)
        .collect();

    let (s_vel, s_pre) = stabilization::s_si_matrices(mesh, params);
    let stab_u = solver::spmv(&s_vel, &u_i);
    let stab_p = solver::spmv(&s_pre, &p_i);
    let inf = |v: &[f64]| v.iter().map(|x| x.abs()).fold(0.0f64, f64::max);
    let stabilization_part = inf(&stab_u).max(inf(&stab_p));
    let mut interp = residual.clone();
    for (i, v) in stab_u.iter().enumerate() {
        interp[i] -= v;
    }
    for (m, v) in stab_p.iter().enumerate() {
        interp[2 * nv + m] -= v;
    }
    Ok(ConsistencyReport {
        max_residual: inf(&residual),
        interpolation_part: inf(&interp),
        stabilization_part,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::spmv;
    use crate::space::{interpolate_scalar, interpolate_vector};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn darcy_velocity_block_energy_of_constant_field() {
        // For u = (1, 0): mass contributes ||u||^2 = 1, the boundary term
        // contributes (u.n)^2 integrated over the two vertical sides = 2,
        // and the divergence fluctuations vanish. Total energy 3.
        let mesh = TriMesh::criss_cross(2).unwrap();
        let a = velocity_block(&mesh, &StabilizationParams::darcy_default(), ProblemKind::Darcy)
            .unwrap();
        let u = interpolate_vector(&mesh, |_, _| [1.0, 0.0]);
        let energy = dot(&spmv(&a, &u), &u);
        assert!((energy - 3.0).abs() < 1e-12, "energy {energy}");
    }

    #[test]
    fn nitsche_consistency_cancels_stiffness_for_linear_fields() {
        // For globally linear u, (grad u, grad v) - (du/dn, v)_boundary is
        // the exact weak Laplacian, which is zero. Both pieces are
        // integrated exactly, so rows cancel to rounding.
        let mesh = TriMesh::criss_cross(3).unwrap().perturbed(5, 0.15).unwrap();
        let n = 2 * mesh.num_vertices();
        let mut t = vector_stiffness_triplets(&mesh);
        t.extend(nitsche_consistency_triplets(&mesh));
        let m = solver::csc_from_triplets(n, n, &t);
        let u = interpolate_vector(&mesh, |x, y| [2.0 * x - y + 0.5, x + 3.0 * y]);
        let r = spmv(&m, &u);
        let worst = r.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        assert!(worst < 1e-13, "residual {worst}");
    }

    #[test]
    fn coupling_satisfies_discrete_divergence_theorem() {
        // b_h(1, v) = (1, div v) - (v.n, 1)_boundary = 0 for every v by the
        // divergence theorem, which assembly must reproduce exactly.
        let mesh = TriMesh::criss_cross(2).unwrap().perturbed(13, 0.2).unwrap();
        let nv = mesh.num_vertices();
        let b = solver::csc_from_triplets(2 * nv, nv, &coupling_triplets(&mesh));
        let ones = vec![1.0; nv];
        let r = spmv(&b, &ones);
        let worst = r.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        assert!(worst < 1e-13, "divergence theorem violated by {worst}");
    }

    #[test]
    fn coupling_blocks_are_antisymmetric_in_the_full_matrix() {
        let mesh = TriMesh::criss_cross(2).unwrap();
        let system = assemble_darcy(
            &mesh,
            &StabilizationParams::darcy_default(),
            &ManufacturedProblem::darcy_trig(),
            6,
        )
        .unwrap();
        let nv = mesh.num_vertices();
        let n = system.layout.total();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let mut xu = vec![0.0; n];
            let mut yp = vec![0.0; n];
            for i in 0..2 * nv {
                xu[i] = rng.gen::<f64>() - 0.5;
            }
            for m in 0..nv {
                yp[2 * nv + m] = rng.gen::<f64>() - 0.5;
            }
            let upper = dot(&xu, &spmv(&system.matrix, &yp));
            let lower = dot(&yp, &spmv(&system.matrix, &xu));
            assert!(
                (upper + lower).abs() < 1e-12,
                "coupling not antisymmetric: {upper} vs {lower}"
            );
        }
    }

    #[test]
    fn full_form_symmetrizes_to_velocity_and_stabilization_energy() {
        // A_h((u,p),(v,q)) + A_h((v,q),(u,p)) = 2 [a_h(u,v) + S terms]: the
        // coupling cancels pairwise.
        for kind in [ProblemKind::Darcy, ProblemKind::Stokes] {
            let mesh = TriMesh::criss_cross(2).unwrap();
            let params = match kind {
                ProblemKind::Darcy => StabilizationParams::darcy_default(),
                ProblemKind::Stokes => StabilizationParams::stokes_default(),
            };
            let problem = ManufacturedProblem::patch_for(kind);
            let system = assemble(&mesh, &params, &problem, kind, 6).unwrap();
            let nv = mesh.num_vertices();
            let a_u = velocity_block(&mesh, &params, kind).unwrap();
            let (_, s_pre) = stabilization::s_si_matrices(&mesh, &params);
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            for _ in 0..10 {
                let n = system.layout.total();
                let mut x = vec![0.0; n];
                let mut y = vec![0.0; n];
                for i in 0..3 * nv {
                    x[i] = rng.gen::<f64>() - 0.5;
                    y[i] = rng.gen::<f64>() - 0.5;
                }
                let sym = dot(&x, &spmv(&system.matrix, &y)) + dot(&y, &spmv(&system.matrix, &x));
                let expected = 2.0
                    * (dot(&x[..2 * nv], &spmv(&a_u, &y[..2 * nv]))
                        + dot(&x[2 * nv..3 * nv], &spmv(&s_pre, &y[2 * nv..3 * nv])));
                assert!(
                    (sym - expected).abs() < 1e-12 * expected.abs().max(1.0),
                    "{kind:?}: {sym} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn constraint_vector_integrates_fe_functions_exactly() {
        let mesh = TriMesh::criss_cross(4).unwrap();
        let g = pressure_integral_vector(&mesh);
        let total: f64 = g.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        // The interpolant of sin(2 pi x) is antisymmetric about x = 1/2 on
        // this symmetric mesh, so its exact integral vanishes.
        let p = interpolate_scalar(&mesh, |x, _| (2.0 * std::f64::consts::PI * x).sin());
        assert!(dot(&g, &p).abs() < 1e-12);
    }

    #[test]
    fn darcy_pressure_rhs_is_zero_for_divergence_free_data() {
        let mesh = TriMesh::criss_cross(2).unwrap();
        let blocks = assemble_unconstrained(
            &mesh,
            &StabilizationParams::darcy_default(),
            &ManufacturedProblem::darcy_trig(),
            ProblemKind::Darcy,
            6,
        )
        .unwrap();
        let nv = mesh.num_vertices();
        for m in 0..nv {
            assert_eq!(blocks.rhs[2 * nv + m], 0.0);
        }
    }

    #[test]
    fn patch_problems_are_solved_exactly() {
        for kind in [ProblemKind::Darcy, ProblemKind::Stokes] {
            let params = match kind {
                ProblemKind::Darcy => StabilizationParams::darcy_default(),
                ProblemKind::Stokes => StabilizationParams::stokes_default(),
            };
            let problem = ManufacturedProblem::patch_for(kind);
            let mesh = TriMesh::criss_cross(2).unwrap();
            let system = assemble(&mesh, &params, &problem, kind, 6).unwrap();
            let sol = crate::solver::solve(&system).unwrap();
            for v in 0..mesh.num_vertices() {
                let p = mesh.vertex(v);
                assert!(sol.velocity[2 * v].abs() < 1e-11);
                assert!(sol.velocity[2 * v + 1].abs() < 1e-11);
                assert!(
                    (sol.pressure[v] - (p[0] - 0.5)).abs() < 1e-11,
                    "{kind:?} pressure at vertex {v}"
                );
            }
            assert!(sol.multiplier.abs() < 1e-11);
        }
    }

    #[test]
    fn assembly_is_bitwise_deterministic() {
        let mesh = TriMesh::criss_cross(2).unwrap();
        let make = || {
            assemble_stokes(
                &mesh,
                &StabilizationParams::stokes_default(),
                &ManufacturedProblem::stokes_trig(),
                6,
            )
            .unwrap()
        };
        let a = make();
        let b = make();
        assert_eq!(a.rhs, b.rhs);
        assert_eq!(a.matrix.values(), b.matrix.values());
        assert_eq!(
            a.matrix.symbolic().row_indices(),
            b.matrix.symbolic().row_indices()
        );
    }

    #[test]
    fn missing_constraint_leaves_the_constant_pressure_null_vector() {
        let mesh = TriMesh::criss_cross(2).unwrap();
        let blocks = assemble_unconstrained(
            &mesh,
            &StabilizationParams::darcy_default(),
            &ManufacturedProblem::darcy_trig(),
            ProblemKind::Darcy,
            6,
        )
        .unwrap();
        let nv = mesh.num_vertices();
        let n = 3 * nv;
        let matrix = solver::csc_from_triplets(n, n, &blocks.triplets);
        // Without the border, the constant pressure is in the kernel: the
        // coupling obeys the divergence theorem and the gradient
        // fluctuation kills constants. The system is singular, which is
        // exactly what the multiplier row repairs.
        let mut ones_p = vec![0.0; n];
        ones_p[2 * nv..].fill(1.0);
        let image = spmv(&matrix, &ones_p);
        let worst = image.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        assert!(worst < 1e-12, "null vector maps to {worst}");

        // The bordered matrix removes it.
        let system = attach_mean_constraint(blocks, &mesh);
        let mut ones_full = vec![0.0; system.layout.total()];
        ones_full[2 * nv..3 * nv].fill(1.0);
        let image = spmv(&system.matrix, &ones_full);
        let worst = image.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        assert!(worst > 0.5, "border failed to constrain the constant");
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let mesh = TriMesh::criss_cross(1).unwrap();
        let problem = ManufacturedProblem::darcy_trig();
        let bad_beta = StabilizationParams {
            beta: -1.0,
            zeta: 2.0,
        };
        assert!(assemble_darcy(&mesh, &bad_beta, &problem, 6).is_err());
        let bad_zeta = StabilizationParams {
            beta: 1.0,
            zeta: 0.0,
        };
        assert!(
            assemble_stokes(&mesh, &bad_zeta, &ManufacturedProblem::stokes_trig(), 6).is_err()
        );
        let params = StabilizationParams::darcy_default();
        assert!(assemble_darcy(&mesh, &params, &problem, 9).is_err());
    }

    #[test]
    fn glp_norm_gram_is_symmetric_psd_and_block_diagonal() {
        for kind in [ProblemKind::Darcy, ProblemKind::Stokes] {
            let params = match kind {
                ProblemKind::Darcy => StabilizationParams::darcy_default(),
                ProblemKind::Stokes => StabilizationParams::stokes_default(),
            };
            let mesh = TriMesh::criss_cross(2).unwrap();
            let n_gram = glp_norm_gram(&mesh, &params, kind).unwrap();
            let nv = mesh.num_vertices();
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            for _ in 0..50 {
                let n = 3 * nv;
                let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
                let y: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
                let nx = spmv(&n_gram, &x);
                let ny = spmv(&n_gram, &y);
                assert!((dot(&x, &ny) - dot(&y, &nx)).abs() < 1e-12);
                assert!(dot(&x, &nx) >= -1e-10);
                // Velocity and pressure blocks do not couple in the norm.
                let mut xu = x.clone();
                xu[2 * nv..].iter_mut().for_each(|v| *v = 0.0);
                let mut yp = vec![0.0; n];
                yp[2 * nv..].copy_from_slice(&y[2 * nv..]);
                assert!(dot(&yp, &spmv(&n_gram, &xu)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn consistency_residual_splits_and_patch_is_exact() {
        let mesh = TriMesh::criss_cross(2).unwrap();
        let report = consistency_residual(
            &mesh,
            &StabilizationParams::darcy_default(),
            &ManufacturedProblem::darcy_patch(),
            ProblemKind::Darcy,
            6,
        )
        .unwrap();
        assert!(report.max_residual < 1e-12, "{}", report.max_residual);

        // With beta = 0 the interior stabilization is identically absent.
        let report = consistency_residual(
            &mesh,
            &StabilizationParams {
                beta: 0.0,
                zeta: 0.0,
            },
            &ManufacturedProblem::darcy_trig(),
            ProblemKind::Darcy,
            6,
        )
        .unwrap();
        assert_eq!(report.stabilization_part, 0.0);
        assert!(report.max_residual > 0.0);
    }
}
