//! Linear solvers for the assembled saddle-point systems.
//!
//! The primary path is a sparse LU factorization with partial pivoting. If
//! factorization fails or leaves a large residual, a diagonally
//! preconditioned MINRES iteration on the symmetrized system is tried
//! before giving up. Every returned solution carries its verified relative
//! residual; anything above 1e-10 is treated as failure.
//!
//! The module also hosts the dense discrete inf-sup estimator used by the
//! `infsup` CLI command and the acceptance tests.

use std::sync::Once;

use faer::prelude::SpSolver;
use faer::sparse::SparseColMat;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::assembly::SaddleSystem;
use crate::mesh::TriMesh;
use crate::{Error, Result};

/// Residual threshold above which a direct solve is considered failed.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Hard cap for the dense inf-sup path.
pub const INF_SUP_MAX_CELLS: usize = 1024;

static BACKEND_INIT: Once = Once::new();

/// Pins the linear algebra backend to sequential execution so repeated runs
/// produce bitwise identical results.
pub fn ensure_deterministic_backend() {
    BACKEND_INIT.call_once(|| {
        faer::set_global_parallelism(faer::Parallelism::None);
    });
}

/// Builds a compressed sparse matrix from (row, col, value) triplets,
/// summing duplicates.
pub fn csc_from_triplets(
    nrows: usize,
    ncols: usize,
    triplets: &[(usize, usize, f64)],
) -> SparseColMat<usize, f64> {
    SparseColMat::try_new_from_triplets(nrows, ncols, triplets)
        .expect("assembly produces in-bounds triplets")
}

/// Sparse matrix-vector product y = A x.
pub fn spmv(a: &SparseColMat<usize, f64>, x: &[f64]) -> Vec<f64> {
    assert_eq!(a.ncols(), x.len());
    let mut y = vec![0.0; a.nrows()];
    for j in 0..a.ncols() {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        for (&i, &v) in a
            .row_indices_of_col_raw(j)
            .iter()
            .zip(a.values_of_col(j).iter())
        {
            y[i] += v * xj;
        }
    }
    y
}

/// Normwise backward-error style residual:
/// ||Ax - b||_inf / (||A||_inf ||x||_inf + ||b||_inf).
pub fn relative_residual(a: &SparseColMat<usize, f64>, x: &[f64], b: &[f64]) -> f64 {
    let ax = spmv(a, x);
    let r = ax
        .iter()
        .zip(b)
        .map(|(axi, bi)| (axi - bi).abs())
        .fold(0.0f64, f64::max);
    let mut row_norm = vec![0.0f64; a.nrows()];
    for j in 0..a.ncols() {
        for (&i, &v) in a
            .row_indices_of_col_raw(j)
            .iter()
            .zip(a.values_of_col(j).iter())
        {
            row_norm[i] += v.abs();
        }
    }
    let a_norm = row_norm.iter().copied().fold(0.0, f64::max);
    let x_norm = x.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    let b_norm = b.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    let denom = (a_norm * x_norm + b_norm).max(f64::MIN_POSITIVE);
    r / denom
}

/// Direct sparse LU solve with a residual check.
pub fn solve_linear(a: &SparseColMat<usize, f64>, b: &[f64]) -> Result<(Vec<f64>, f64)> {
    if a.nrows() != a.ncols() || a.nrows() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "solve needs a square system matching the rhs, got {}x{} with rhs {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    ensure_deterministic_backend();
    let lu = a
        .sp_lu()
        .map_err(|e| Error::SingularSystem(format!("sparse LU factorization failed: {e:?}")))?;
    let rhs = faer::mat::from_column_major_slice(b, b.len(), 1);
    let sol = lu.solve(rhs);
    let x: Vec<f64> = (0..b.len()).map(|i| sol[(i, 0)]).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem(
            "direct solve produced non-finite values".into(),
        ));
    }
    let residual = relative_residual(a, &x, b);
    Ok((x, residual))
}

/// Fields of a solved saddle-point system, split by physical meaning.
#[derive(Debug, Clone)]
pub struct DiscreteSolution {
    /// Interleaved velocity coefficients (2 per vertex).
    pub velocity: Vec<f64>,
    /// Pressure coefficients (1 per vertex), discretely mean-free.
    pub pressure: Vec<f64>,
    /// Lagrange multiplier of the zero-mean constraint.
    pub multiplier: f64,
    /// Verified relative residual of the linear solve.
    pub relative_residual: f64,
}

/// Solves the bordered saddle system.
///
/// The border (one dense multiplier row and column) is removed before the
/// factorization: summing the pressure equations shows the multiplier is
/// zero for every admissible right-hand side, and the pressure kernel left
/// after dropping the border is eliminated by pinning one pressure dof.
/// The pinned solution is then shifted onto the constraint hyperplane
/// g^T p = 0, and its residual is verified against the original bordered
/// matrix, so an inadmissible system cannot pass silently. If the sparse
/// reformulation misses the tolerance, the full bordered factorization and
/// a preconditioned MINRES iteration are tried before giving up.
pub fn solve(system: &SaddleSystem) -> Result<DiscreteSolution> {
    let n = system.layout.total();
    let (x, residual) = match solve_pinned(system) {
        Ok((x, residual)) if residual <= RESIDUAL_TOL => (x, residual),
        _ => {
            let direct = solve_linear(&system.matrix, &system.rhs);
            match direct {
                Ok((x, residual)) if residual <= RESIDUAL_TOL => (x, residual),
                _ => {
                    let (sym, rhs) = symmetrized(system);
                    let x = minres(&sym, &rhs, 1e-12, 4 * n.max(100))?;
                    let residual = relative_residual(&system.matrix, &x, &system.rhs);
                    if residual > RESIDUAL_TOL {
                        return Err(Error::SingularSystem(format!(
                            "relative residual {residual:.3e} after direct and MINRES \
                             solves; the saddle matrix is singular or near-singular (a \
                             pressure field without a zero-mean constraint is the usual \
                             missing piece)"
                        )));
                    }
                    (x, residual)
                }
            }
        }
    };
    let nv = system.layout.num_vertices;
    Ok(DiscreteSolution {
        velocity: x[..2 * nv].to_vec(),
        pressure: x[2 * nv..3 * nv].to_vec(),
        multiplier: x[3 * nv],
        relative_residual: residual,
    })
}

/// Border-free reformulation of the saddle solve: drops the multiplier row
/// and column, pins the first pressure dof to zero in place of the dropped
/// mean constraint, factors the remaining sparse matrix, and shifts the
/// pressure onto g^T p = 0. The reported residual is measured against the
/// original bordered system.
fn solve_pinned(system: &SaddleSystem) -> Result<(Vec<f64>, f64)> {
    let nv = system.layout.num_vertices;
    let n = system.layout.total();
    let pin = 2 * nv;
    let mult = 3 * nv;
    let a = &system.matrix;

    let mut g = vec![0.0f64; nv];
    for (&i, &v) in a
        .row_indices_of_col_raw(mult)
        .iter()
        .zip(a.values_of_col(mult).iter())
    {
        if (pin..mult).contains(&i) {
            g[i - pin] = v;
        }
    }
    let g_total: f64 = g.iter().sum();
    if g_total <= 0.0 {
        return Err(Error::SingularSystem(
            "constraint column of the bordered system has no positive mass".into(),
        ));
    }

    let mut triplets = Vec::with_capacity(a.compute_nnz() + 2);
    for j in 0..n {
        if j == mult {
            continue;
        }
        for (&i, &v) in a
            .row_indices_of_col_raw(j)
            .iter()
            .zip(a.values_of_col(j).iter())
        {
            if i != pin && i != mult {
                triplets.push((i, j, v));
            }
        }
    }
    triplets.push((pin, pin, 1.0));
    triplets.push((mult, mult, 1.0));
    let pinned = csc_from_triplets(n, n, &triplets);
    let mut rhs = system.rhs.clone();
    rhs[pin] = 0.0;
    rhs[mult] = 0.0;

    ensure_deterministic_backend();
    let lu = pinned
        .sp_lu()
        .map_err(|e| Error::SingularSystem(format!("sparse LU factorization failed: {e:?}")))?;
    let solve_with_lu = |b: &[f64]| -> Vec<f64> {
        let rhs_mat = faer::mat::from_column_major_slice(b, b.len(), 1);
        let sol = lu.solve(rhs_mat);
        (0..b.len()).map(|i| sol[(i, 0)]).collect()
    };
    let mut x = solve_with_lu(&rhs);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem(
            "direct solve produced non-finite values".into(),
        ));
    }
    // Two rounds of iterative refinement on the factored matrix. The
    // factorization is accurate enough for the error norms of smooth
    // cases, but exactly representable solutions (the patch tests) expose
    // the forward error of a single solve, and refinement recovers it at
    // the cost of two extra triangular solves.
    for _ in 0..2 {
        let mut r = rhs.clone();
        for (ri, ax) in r.iter_mut().zip(spmv(&pinned, &x)) {
            *ri -= ax;
        }
        let d = solve_with_lu(&r);
        for (xi, di) in x.iter_mut().zip(&d) {
            *xi += di;
        }
    }
    let shift = x[pin..pin + nv]
        .iter()
        .zip(&g)
        .map(|(p, gi)| p * gi)
        .sum::<f64>()
        / g_total;
    for p in &mut x[pin..pin + nv] {
        *p -= shift;
    }
    x[mult] = 0.0;
    let residual = relative_residual(&system.matrix, &x, &system.rhs);
    Ok((x, residual))
}

/// Flips the sign of the pressure and multiplier rows, turning the stored
/// (-B^T vs B) convention into a symmetric indefinite matrix with the same
/// solution.
fn symmetrized(system: &SaddleSystem) -> (SparseColMat<usize, f64>, Vec<f64>) {
    let nv = system.layout.num_vertices;
    let flip = |row: usize| row >= 2 * nv;
    let a = &system.matrix;
    let mut triplets = Vec::new();
    for j in 0..a.ncols() {
        for (&i, &v) in a
            .row_indices_of_col_raw(j)
            .iter()
            .zip(a.values_of_col(j).iter())
        {
            triplets.push((i, j, if flip(i) { -v } else { v }));
        }
    }
    let rhs = system
        .rhs
        .iter()
        .enumerate()
        .map(|(i, &v)| if flip(i) { -v } else { v })
        .collect();
    (
        csc_from_triplets(a.nrows(), a.ncols(), &triplets),
        rhs,
    )
}

/// Preconditioned MINRES for symmetric (possibly indefinite) systems, with
/// a diagonal |a_ii| preconditioner. Zero diagonal entries (the multiplier
/// row) fall back to 1.
fn minres(a: &SparseColMat<usize, f64>, b: &[f64], rtol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let mut diag = vec![1.0f64; n];
    for j in 0..a.ncols() {
        for (&i, &v) in a
            .row_indices_of_col_raw(j)
            .iter()
            .zip(a.values_of_col(j).iter())
        {
            if i == j && v.abs() > 0.0 {
                diag[i] = v.abs();
            }
        }
    }
    let apply_minv = |r: &[f64]| -> Vec<f64> { r.iter().zip(&diag).map(|(ri, di)| ri / di).collect() };

    let mut x = vec![0.0f64; n];
    let mut r1 = b.to_vec();
    let mut y = apply_minv(&r1);
    let beta1 = dot(&r1, &y);
    if beta1 < 0.0 {
        return Err(Error::SolverFailure(
            "MINRES preconditioner is not positive definite".into(),
        ));
    }
    let beta1 = beta1.sqrt();
    if beta1 == 0.0 {
        return Ok(x);
    }
    let mut r2 = r1.clone();
    let (mut oldb, mut beta) = (0.0f64, beta1);
    let (mut dbar, mut epsln, mut phibar) = (0.0f64, 0.0f64, beta1);
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    let mut w = vec![0.0f64; n];
    let mut w2 = vec![0.0f64; n];

    for _ in 0..max_iter {
        let s = 1.0 / beta;
        let v: Vec<f64> = y.iter().map(|yi| yi * s).collect();
        let mut ay = spmv(a, &v);
        if oldb > 0.0 {
            let c = beta / oldb;
            for i in 0..n {
                ay[i] -= c * r1[i];
            }
        }
        let alfa = dot(&v, &ay);
        let c = alfa / beta;
        for i in 0..n {
            ay[i] -= c * r2[i];
        }
        r1 = std::mem::replace(&mut r2, ay);
        y = apply_minv(&r2);
        oldb = beta;
        let beta_sq = dot(&r2, &y);
        if beta_sq < 0.0 {
            return Err(Error::SolverFailure(
                "MINRES lost symmetry (negative inner product)".into(),
            ));
        }
        beta = beta_sq.sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::MIN_POSITIVE);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let w1 = std::mem::replace(&mut w2, std::mem::take(&mut w));
        w = (0..n)
            .map(|i| (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma)
            .collect();
        for i in 0..n {
            x[i] += phi * w[i];
        }
        if phibar <= rtol * beta1 {
            return Ok(x);
        }
    }
    Ok(x)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimum Rayleigh quotient x^T A x / x^T x over pseudo-random probe
/// vectors. A non-positive value flags an indefinite or semidefinite
/// operator; used for the cheap Stokes coercivity warning.
pub fn min_rayleigh_quotient(
    a: &SparseColMat<usize, f64>,
    samples: usize,
    seed: u64,
) -> f64 {
    let n = a.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let ax = spmv(a, &x);
        let q = dot(&x, &ax) / dot(&x, &x);
        worst = worst.min(q);
    }
    worst
}

/// Orthonormal basis of the hyperplane {x : g^T x = 0}, built from a single
/// Householder reflection that maps g onto a coordinate axis. The returned
/// matrix Z is n x (n-1) with Z^T Z = I and Z^T g = 0.
fn null_space_basis(g: &[f64]) -> Result<nalgebra::DMatrix<f64>> {
    let n = g.len();
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::InvalidArgument(
            "constraint vector is zero; no hyperplane to project onto".into(),
        ));
    }
    let k = g
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .expect("nonempty vector");
    // v = g + sign(g_k) ||g|| e_k gives the numerically stable reflector
    // with H g proportional to e_k.
    let mut v: Vec<f64> = g.to_vec();
    v[k] += g[k].signum() * norm;
    let vtv: f64 = v.iter().map(|x| x * x).sum();
    let mut z = nalgebra::DMatrix::<f64>::zeros(n, n - 1);
    for (jz, j) in (0..n).filter(|&j| j != k).enumerate() {
        // Column j of H = I - 2 v v^T / v^T v.
        let scale = 2.0 * v[j] / vtv;
        for i in 0..n {
            let e = if i == j { 1.0 } else { 0.0 };
            z[(i, jz)] = e - scale * v[i];
        }
    }
    Ok(z)
}

/// Estimates the discrete inf-sup constant of the stabilized system in the
/// GLP norm: the smallest singular value of L^{-1} (Z^T K Z) L^{-T}, where
/// Z spans the zero-mean constraint hyperplane and Z^T N Z = L L^T is the
/// Cholesky factorization of the norm Gram matrix.
///
/// This is a dense computation; meshes beyond `INF_SUP_MAX_CELLS` cells are
/// rejected.
pub fn inf_sup_estimate(
    mesh: &TriMesh,
    system: &SaddleSystem,
    norm_gram: &SparseColMat<usize, f64>,
) -> Result<f64> {
    if mesh.num_cells() > INF_SUP_MAX_CELLS {
        return Err(Error::SizeLimit(format!(
            "inf-sup estimation is dense and capped at {INF_SUP_MAX_CELLS} cells, got {}",
            mesh.num_cells()
        )));
    }
    let nv = system.layout.num_vertices;
    let n = 3 * nv;
    if norm_gram.nrows() != n || norm_gram.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "norm Gram matrix must be {n}x{n}, got {}x{}",
            norm_gram.nrows(),
            norm_gram.ncols()
        )));
    }
    // Constrained block K and the constraint column g (the border).
    let mut k_dense = nalgebra::DMatrix::<f64>::zeros(n, n);
    let mut g = vec![0.0f64; n];
    let a = &system.matrix;
    for j in 0..a.ncols() {
        for (&i, &v) in a
            .row_indices_of_col_raw(j)
            .iter()
            .zip(a.values_of_col(j).iter())
        {
            if i < n && j < n {
                k_dense[(i, j)] += v;
            } else if j == n && i < n {
                g[i] = v;
            }
        }
    }
    let mut n_dense = nalgebra::DMatrix::<f64>::zeros(n, n);
    for j in 0..norm_gram.ncols() {
        for (&i, &v) in norm_gram
            .row_indices_of_col_raw(j)
            .iter()
            .zip(norm_gram.values_of_col(j).iter())
        {
            n_dense[(i, j)] += v;
        }
    }

    let z = null_space_basis(&g)?;
    let kz = &z.transpose() * &k_dense * &z;
    let nz = &z.transpose() * &n_dense * &z;
    let chol = nalgebra::Cholesky::new(nz).ok_or_else(|| {
        Error::SolverFailure("GLP norm Gram matrix is not positive definite on the constraint hyperplane".into())
    })?;
    let l = chol.l();
    let y = l
        .solve_lower_triangular(&kz)
        .ok_or_else(|| Error::SolverFailure("triangular solve failed".into()))?;
    let t = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::SolverFailure("triangular solve failed".into()))?
        .transpose();
    let svd = t.svd(false, false);
    Ok(svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min))
}
