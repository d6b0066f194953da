//! Error measurement and mesh-refinement studies.
//!
//! Errors against a manufactured solution are integrated with the same
//! quadrature machinery the assembly uses, including every piece of the
//! problem-dependent GLP norm: field term, weighted divergence (Darcy),
//! Nitsche boundary term (Stokes), interior fluctuation terms, and the
//! boundary normal-trace term.

use crate::assembly::{self, ProblemKind, SaddleSystem};
use crate::mesh::{EdgeKind, TriMesh};
use crate::problems::ManufacturedProblem;
use crate::quadrature;
use crate::solver::{self, DiscreteSolution};
use crate::space::{ScalarField, VectorField};
use crate::stabilization::StabilizationParams;
use crate::{Error, Result};

/// Relative radius used when a study asks for perturbed meshes.
pub const PERTURB_REL: f64 = 0.1;

/// Largest grid resolution (squares per side on the finest level) a study
/// may reach; keeps memory use of the direct solver bounded.
pub const MAX_FINEST_GRID: usize = 1024;

/// Selects one error column of a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorColumn {
    VelocityL2,
    VelocityH1,
    PressureL2,
    Triple,
}

/// Squared contributions to the problem-dependent GLP norm of the error.
#[derive(Debug, Clone, Copy)]
pub struct TripleParts {
    /// Darcy: squared L2 norm of the velocity error. Stokes: squared H1
    /// seminorm.
    pub field_sq: f64,
    /// Darcy only: sum over cells of h_K times the squared L2 norm of the
    /// divergence error.
    pub div_sq: f64,
    /// Squared L2 norm of the pressure error.
    pub pressure_sq: f64,
    /// Stokes only: sum over boundary edges of (zeta / h_E) times the
    /// squared L2 edge norm of the velocity error.
    pub nitsche_sq: f64,
    /// Interior fluctuation term on the divergence of the velocity error.
    pub s_si_div_sq: f64,
    /// Interior fluctuation term on the gradient of the pressure error.
    pub s_si_grad_sq: f64,
    /// Boundary term: squared L2 norm of the normal trace of the velocity
    /// error over boundary edges.
    pub s_sb_sq: f64,
}

impl TripleParts {
    pub fn total_sq(&self) -> f64 {
        self.field_sq
            + self.div_sq
            + self.pressure_sq
            + self.nitsche_sq
            + self.s_si_div_sq
            + self.s_si_grad_sq
            + self.s_sb_sq
    }
}

/// Errors of one discrete solution against the manufactured solution.
#[derive(Debug, Clone, Copy)]
pub struct ErrorSample {
    pub level: usize,
    pub cells: usize,
    pub h_max: f64,
    pub err_u_l2: f64,
    /// H1 seminorm of the velocity error.
    pub err_u_h1: f64,
    pub err_p_l2: f64,
    /// Problem-dependent GLP norm of the error.
    pub err_triple: f64,
    pub triple_parts: TripleParts,
}

/// Integrates all error norms of `solution` against `problem`.
///
/// The returned sample has `level` zero; refinement studies fill it in.
pub fn compute_errors(
    mesh: &TriMesh,
    solution: &DiscreteSolution,
    problem: &ManufacturedProblem,
    params: &StabilizationParams,
    kind: ProblemKind,
    quad_degree: usize,
) -> Result<ErrorSample> {
    params.validate(kind)?;
    let rule = quadrature::triangle_rule(quad_degree)?;
    let edge_rule = quadrature::edge_rule(quad_degree)?;
    let u_h = VectorField::new(mesh, &solution.velocity)?;
    let p_h = ScalarField::new(mesh, &solution.pressure)?;

    let mut l2_u_sq = 0.0;
    let mut h1_u_sq = 0.0;
    let mut l2_p_sq = 0.0;
    let mut div_weighted_sq = 0.0;
    // Per-cell integrals of the divergence error (value and square) and of
    // the pressure gradient error, combined per patch below.
    let nc = mesh.num_cells();
    let mut div_int = vec![0.0; nc];
    let mut div_sq_int = vec![0.0; nc];
    let mut grad_int = vec![[0.0; 2]; nc];
    let mut grad_sq_int = vec![0.0; nc];

    for c in 0..nc {
        let [a, b, d] = mesh.cell_coords(c);
        let jac = 2.0 * mesh.cell_area(c);
        let div_h = u_h.cell_divergence(c);
        let jac_h = u_h.cell_jacobian(c);
        let grad_p_h = p_h.cell_gradient(c);
        for (pt, w) in rule.points.iter().zip(&rule.weights) {
            let bary = [1.0 - pt[0] - pt[1], pt[0], pt[1]];
            let x = a[0] + pt[0] * (b[0] - a[0]) + pt[1] * (d[0] - a[0]);
            let y = a[1] + pt[0] * (b[1] - a[1]) + pt[1] * (d[1] - a[1]);
            let scale = w * jac;

            let u = problem.velocity(x, y);
            let uh = u_h.eval(c, bary)?;
            let e = [u[0] - uh[0], u[1] - uh[1]];
            l2_u_sq += scale * (e[0] * e[0] + e[1] * e[1]);

            let ju = problem.velocity_jacobian(x, y);
            let mut frob = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    let d = ju[i][j] - jac_h[i][j];
                    frob += d * d;
                }
            }
            h1_u_sq += scale * frob;

            let ep = problem.pressure(x, y) - p_h.eval(c, bary)?;
            l2_p_sq += scale * ep * ep;

            let ediv = problem.velocity_divergence(x, y) - div_h;
            div_int[c] += scale * ediv;
            div_sq_int[c] += scale * ediv * ediv;

            let gp = problem.pressure_gradient(x, y);
            let eg = [gp[0] - grad_p_h[0], gp[1] - grad_p_h[1]];
            grad_int[c][0] += scale * eg[0];
            grad_int[c][1] += scale * eg[1];
            grad_sq_int[c] += scale * (eg[0] * eg[0] + eg[1] * eg[1]);
        }
        div_weighted_sq += mesh.cell_diameter(c) * div_sq_int[c];
    }

    // Fluctuation terms: ||kappa_a(w)||^2 over the patch equals the patch
    // integral of w^2 minus (patch integral of w)^2 / |M_a|, per component.
    let mut s_si_div_sq = 0.0;
    let mut s_si_grad_sq = 0.0;
    for a in 0..mesh.num_vertices() {
        let patch = mesh.patch(a);
        let beta_a = params.beta_a(patch.h_a);
        if beta_a == 0.0 {
            continue;
        }
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        let mut g1 = [0.0; 2];
        let mut g2 = 0.0;
        for &k in &patch.cells {
            d1 += div_int[k];
            d2 += div_sq_int[k];
            g1[0] += grad_int[k][0];
            g1[1] += grad_int[k][1];
            g2 += grad_sq_int[k];
        }
        s_si_div_sq += beta_a * (d2 - d1 * d1 / patch.measure).max(0.0);
        s_si_grad_sq +=
            beta_a * (g2 - (g1[0] * g1[0] + g1[1] * g1[1]) / patch.measure).max(0.0);
    }

    let mut s_sb_sq = 0.0;
    let mut nitsche_sq = 0.0;
    for edge in mesh.boundary_edges() {
        let EdgeKind::Boundary { normal, .. } = edge.kind else {
            unreachable!()
        };
        let nitsche_weight =
            params.zeta / crate::assembly::boundary_edge_width(mesh, edge) * edge.length;
        let [v0, v1] = edge.vertices;
        let p0 = mesh.vertex(v0);
        let p1 = mesh.vertex(v1);
        let u0 = u_h.vertex_value(v0);
        let u1 = u_h.vertex_value(v1);
        for (&t, &w) in edge_rule.points.iter().zip(&edge_rule.weights) {
            let x = p0[0] + t * (p1[0] - p0[0]);
            let y = p0[1] + t * (p1[1] - p0[1]);
            let u = problem.velocity(x, y);
            let e = [
                u[0] - ((1.0 - t) * u0[0] + t * u1[0]),
                u[1] - ((1.0 - t) * u0[1] + t * u1[1]),
            ];
            let en = e[0] * normal[0] + e[1] * normal[1];
            s_sb_sq += edge.length * w * en * en;
            nitsche_sq += nitsche_weight * w * (e[0] * e[0] + e[1] * e[1]);
        }
    }

    let triple_parts = match kind {
        ProblemKind::Darcy => TripleParts {
            field_sq: l2_u_sq,
            div_sq: div_weighted_sq,
            pressure_sq: l2_p_sq,
            nitsche_sq: 0.0,
            s_si_div_sq,
            s_si_grad_sq,
            s_sb_sq,
        },
        ProblemKind::Stokes => TripleParts {
            field_sq: h1_u_sq,
            div_sq: 0.0,
            pressure_sq: l2_p_sq,
            nitsche_sq,
            s_si_div_sq,
            s_si_grad_sq,
            s_sb_sq,
        },
    };

    Ok(ErrorSample {
        level: 0,
        cells: nc,
        h_max: mesh.h_max(),
        err_u_l2: l2_u_sq.sqrt(),
        err_u_h1: h1_u_sq.sqrt(),
        err_p_l2: l2_p_sq.sqrt(),
        err_triple: triple_parts.total_sq().sqrt(),
        triple_parts,
    })
}

/// Convergence orders from errors on a sequence of uniformly refined
/// meshes: order_k = log2(e_k / e_{k+1}).
pub fn order_of(errors: &[f64]) -> Result<Vec<f64>> {
    if errors.len() < 2 {
        return Err(Error::InvalidArgument(
            "convergence orders need at least two error values".into(),
        ));
    }
    for &e in errors {
        if !e.is_finite() || e <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "convergence orders need finite positive errors, got {e}"
            )));
        }
    }
    Ok(errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect())
}

/// Configuration of a mesh-refinement study.
#[derive(Debug, Clone, Copy)]
pub struct StudyConfig {
    pub kind: ProblemKind,
    /// Number of refinement levels to run (1 to 8).
    pub levels: usize,
    /// Resolution of the level-0 criss-cross mesh (squares per side).
    pub initial_n: usize,
    pub params: StabilizationParams,
    pub quad_degree: usize,
    /// Perturb each level's vertices with this seed (fixed relative
    /// radius [`PERTURB_REL`]); `None` keeps the structured meshes.
    pub perturb: Option<u64>,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.levels > 8 {
            return Err(Error::InvalidArgument(format!(
                "study levels must be between 1 and 8, got {}",
                self.levels
            )));
        }
        if self.initial_n == 0 {
            return Err(Error::InvalidArgument(
                "initial mesh resolution must be positive".into(),
            ));
        }
        let finest = self.initial_n << (self.levels - 1);
        if finest > MAX_FINEST_GRID {
            return Err(Error::SizeLimit(format!(
                "finest grid {finest} exceeds the supported {MAX_FINEST_GRID} squares per side"
            )));
        }
        self.params.validate(self.kind)
    }
}

/// Samples of a refinement study, coarsest first.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub kind: ProblemKind,
    pub samples: Vec<ErrorSample>,
}

impl ConvergenceReport {
    pub fn errors(&self, column: ErrorColumn) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| match column {
                ErrorColumn::VelocityL2 => s.err_u_l2,
                ErrorColumn::VelocityH1 => s.err_u_h1,
                ErrorColumn::PressureL2 => s.err_p_l2,
                ErrorColumn::Triple => s.err_triple,
            })
            .collect()
    }

    /// Pairwise orders for one column; empty with fewer than two samples.
    pub fn orders(&self, column: ErrorColumn) -> Result<Vec<f64>> {
        if self.samples.len() < 2 {
            return Ok(Vec::new());
        }
        order_of(&self.errors(column))
    }

    /// Least-squares slope of log error against log h over all samples.
    pub fn fitted_order(&self, column: ErrorColumn) -> Option<f64> {
        if self.samples.len() < 2 {
            return None;
        }
        let errors = self.errors(column);
        if errors.iter().any(|&e| !e.is_finite() || e <= 0.0) {
            return None;
        }
        let xs: Vec<f64> = self.samples.iter().map(|s| s.h_max.ln()).collect();
        let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
        let n = xs.len() as f64;
        let xm = xs.iter().sum::<f64>() / n;
        let ym = ys.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    }
}

/// Runs a refinement study, invoking `on_level` with each level's mesh,
/// assembled system, and solution (coarsest first).
pub fn convergence_study(
    config: &StudyConfig,
    problem: &ManufacturedProblem,
    mut on_level: impl FnMut(usize, &TriMesh, &SaddleSystem, &DiscreteSolution) -> Result<()>,
) -> Result<ConvergenceReport> {
    config.validate()?;
    let mut samples = Vec::with_capacity(config.levels);
    let mut current = TriMesh::criss_cross(config.initial_n)?;
    for level in 0..config.levels {
        if level > 0 {
            current = current.uniform_refine();
        }
        if level == 0 {
            // Admissibility is a property of the problem data, so it is
            // checked on the structured base mesh where the quadrature of
            // the trigonometric fields cancels symmetrically.
            problem.validate_on(&current, config.kind, config.quad_degree)?;
        }
        let mesh = match config.perturb {
            Some(seed) => current.perturbed(seed.wrapping_add(level as u64), PERTURB_REL)?,
            None => current.clone(),
        };
        let system = assembly::assemble(
            &mesh,
            &config.params,
            problem,
            config.kind,
            config.quad_degree,
        )?;
        let solution = solver::solve(&system)?;
        let mut sample = compute_errors(
            &mesh,
            &solution,
            problem,
            &config.params,
            config.kind,
            config.quad_degree,
        )?;
        sample.level = level;
        samples.push(sample);
        on_level(level, &mesh, &system, &solution)?;
    }
    Ok(ConvergenceReport {
        kind: config.kind,
        samples,
    })
}

/// [`convergence_study`] without a per-level callback.
pub fn run_study(
    config: &StudyConfig,
    problem: &ManufacturedProblem,
) -> Result<ConvergenceReport> {
    convergence_study(config, problem, |_, _, _, _| Ok(()))
}

/// Largest nodal pressure difference across an interior edge, relative to
/// the range of the exact pressure. Spurious modes alternate between
/// neighboring vertices, so values near or above one flag oscillations
/// while smooth fields stay at the order of the mesh width.
pub fn pressure_oscillation_indicator(
    mesh: &TriMesh,
    pressure: &[f64],
    exact_range: f64,
) -> Result<f64> {
    if pressure.len() != mesh.num_vertices() {
        return Err(Error::InvalidArgument(format!(
            "pressure has {} coefficients, mesh has {} vertices",
            pressure.len(),
            mesh.num_vertices()
        )));
    }
    if !exact_range.is_finite() || exact_range <= 0.0 {
        return Err(Error::InvalidArgument(
            "pressure range must be positive and finite".into(),
        ));
    }
    let mut worst = 0.0f64;
    for edge in mesh.edges() {
        if edge.is_boundary() {
            continue;
        }
        let [v0, v1] = edge.vertices;
        worst = worst.max((pressure[v0] - pressure[v1]).abs());
    }
    Ok(worst / exact_range)
}
