//! Manufactured solutions with hand-differentiated data.
//!
//! Each problem carries the exact velocity, pressure, their derivatives,
//! and the matching right-hand sides in closed form, so convergence studies
//! measure discretization error only. The trigonometric pair drives the
//! convergence tables; the linear-pressure pair is the patch test whose
//! exact solution lies in the discrete space.

use std::f64::consts::PI;

use crate::assembly::ProblemKind;
use crate::mesh::{EdgeKind, TriMesh};
use crate::quadrature;
use crate::{Error, Result};

/// A manufactured problem: exact fields and the data that produces them.
///
/// `pressure` already includes the zero-mean normalization; the raw
/// analytic expression minus `pressure_shift`.
#[derive(Clone, Copy)]
pub struct ManufacturedProblem {
    pub name: &'static str,
    u: fn(f64, f64) -> [f64; 2],
    /// du[i][j] = d u_i / d x_j.
    du: fn(f64, f64) -> [[f64; 2]; 2],
    p_raw: fn(f64, f64) -> f64,
    grad_p: fn(f64, f64) -> [f64; 2],
    f: fn(f64, f64) -> [f64; 2],
    phi: fn(f64, f64) -> f64,
    pressure_shift: f64,
}

impl ManufacturedProblem {
    pub fn velocity(&self, x: f64, y: f64) -> [f64; 2] {
        (self.u)(x, y)
    }

    pub fn velocity_jacobian(&self, x: f64, y: f64) -> [[f64; 2]; 2] {
        (self.du)(x, y)
    }

    pub fn velocity_divergence(&self, x: f64, y: f64) -> f64 {
        let j = (self.du)(x, y);
        j[0][0] + j[1][1]
    }

    pub fn pressure(&self, x: f64, y: f64) -> f64 {
        (self.p_raw)(x, y) - self.pressure_shift
    }

    pub fn pressure_gradient(&self, x: f64, y: f64) -> [f64; 2] {
        (self.grad_p)(x, y)
    }

    pub fn forcing(&self, x: f64, y: f64) -> [f64; 2] {
        (self.f)(x, y)
    }

    /// Volumetric source of the Darcy mass balance (zero for Stokes).
    pub fn source(&self, x: f64, y: f64) -> f64 {
        (self.phi)(x, y)
    }

    /// Divergence-free trigonometric Darcy solution with u.n = 0 on the
    /// whole boundary:
    /// u = (-pi sin^2(pi x) sin(2 pi y), pi sin(2 pi x) sin^2(pi y)),
    /// p = sin(2 pi x) sin(2 pi y), f = u + grad p, phi = 0.
    pub fn darcy_trig() -> Self {
        ManufacturedProblem {
            name: "darcy-trig",
            u: |x, y| {
                [
                    -PI * (PI * x).sin().powi(2) * (2.0 * PI * y).sin(),
                    PI * (2.0 * PI * x).sin() * (PI * y).sin().powi(2),
                ]
            },
            du: |x, y| {
                let (sx, s2x, c2x) = ((PI * x).sin(), (2.0 * PI * x).sin(), (2.0 * PI * x).cos());
                let (sy, s2y, c2y) = ((PI * y).sin(), (2.0 * PI * y).sin(), (2.0 * PI * y).cos());
                [
                    [-PI * PI * s2x * s2y, -2.0 * PI * PI * sx * sx * c2y],
                    [2.0 * PI * PI * c2x * sy * sy, PI * PI * s2x * s2y],
                ]
            },
            p_raw: |x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).sin(),
            grad_p: |x, y| {
                [
                    2.0 * PI * (2.0 * PI * x).cos() * (2.0 * PI * y).sin(),
                    2.0 * PI * (2.0 * PI * x).sin() * (2.0 * PI * y).cos(),
                ]
            },
            f: |x, y| {
                let s2y = (2.0 * PI * y).sin();
                let s2x = (2.0 * PI * x).sin();
                [
                    -PI * (PI * x).sin().powi(2) * s2y + 2.0 * PI * (2.0 * PI * x).cos() * s2y,
                    PI * s2x * (PI * y).sin().powi(2) + 2.0 * PI * s2x * (2.0 * PI * y).cos(),
                ]
            },
            phi: |_, _| 0.0,
            pressure_shift: 0.0,
        }
    }

    /// Trigonometric Stokes solution with u = 0 on the boundary:
    /// u = (-cos(2 pi x) sin(2 pi y) + sin(2 pi y),
    ///       sin(2 pi x) cos(2 pi y) - sin(2 pi x)),
    /// p = 2 pi (cos(2 pi y) - cos(2 pi x)), f = -laplace(u) + grad p.
    pub fn stokes_trig() -> Self {
        ManufacturedProblem {
            name: "stokes-trig",
            u: |x, y| {
                let (s2x, c2x) = ((2.0 * PI * x).sin(), (2.0 * PI * x).cos());
                let (s2y, c2y) = ((2.0 * PI * y).sin(), (2.0 * PI * y).cos());
                [-c2x * s2y + s2y, s2x * c2y - s2x]
            },
            du: |x, y| {
                let (s2x, c2x) = ((2.0 * PI * x).sin(), (2.0 * PI * x).cos());
                let (s2y, c2y) = ((2.0 * PI * y).sin(), (2.0 * PI * y).cos());
                [
                    [
                        2.0 * PI * s2x * s2y,
                        -2.0 * PI * c2x * c2y + 2.0 * PI * c2y,
                    ],
                    [
                        2.0 * PI * c2x * c2y - 2.0 * PI * c2x,
                        -2.0 * PI * s2x * s2y,
                    ],
                ]
            },
            p_raw: |x, y| 2.0 * PI * ((2.0 * PI * y).cos() - (2.0 * PI * x).cos()),
            grad_p: |x, y| {
                [
                    4.0 * PI * PI * (2.0 * PI * x).sin(),
                    -4.0 * PI * PI * (2.0 * PI * y).sin(),
                ]
            },
            f: |x, y| {
                let pi2 = PI * PI;
                let (s2x, c2x) = ((2.0 * PI * x).sin(), (2.0 * PI * x).cos());
                let (s2y, c2y) = ((2.0 * PI * y).sin(), (2.0 * PI * y).cos());
                [
                    -8.0 * pi2 * c2x * s2y + 4.0 * pi2 * s2y + 4.0 * pi2 * s2x,
                    8.0 * pi2 * s2x * c2y - 4.0 * pi2 * s2x - 4.0 * pi2 * s2y,
                ]
            },
            phi: |_, _| 0.0,
            pressure_shift: 0.0,
        }
    }

    /// Darcy patch test: u = 0, p = x - 1/2, so f = grad p = (1, 0) and
    /// phi = 0. The solution lies in the discrete space.
    pub fn darcy_patch() -> Self {
        ManufacturedProblem {
            name: "darcy-patch",
            u: |_, _| [0.0, 0.0],
            du: |_, _| [[0.0; 2]; 2],
            p_raw: |x, _| x - 0.5,
            grad_p: |_, _| [1.0, 0.0],
            f: |_, _| [1.0, 0.0],
            phi: |_, _| 0.0,
            pressure_shift: 0.0,
        }
    }

    /// Stokes analogue of the patch test: u = 0, p = x - 1/2, f = grad p.
    pub fn stokes_patch() -> Self {
        ManufacturedProblem {
            name: "stokes-patch",
            u: |_, _| [0.0, 0.0],
            du: |_, _| [[0.0; 2]; 2],
            p_raw: |x, _| x - 0.5,
            grad_p: |_, _| [1.0, 0.0],
            f: |_, _| [1.0, 0.0],
            phi: |_, _| 0.0,
            pressure_shift: 0.0,
        }
    }

    /// The problem the given kind runs by default in studies and the CLI.
    pub fn default_for(kind: ProblemKind) -> Self {
        match kind {
            ProblemKind::Darcy => Self::darcy_trig(),
            ProblemKind::Stokes => Self::stokes_trig(),
        }
    }

    /// Patch-test problem for a kind.
    pub fn patch_for(kind: ProblemKind) -> Self {
        match kind {
            ProblemKind::Darcy => Self::darcy_patch(),
            ProblemKind::Stokes => Self::stokes_patch(),
        }
    }

    /// Checks that the problem data is admissible for a problem kind on a
    /// mesh: the pressure has (numerically) zero mean, the source is
    /// compatible with the boundary condition, and the exact velocity
    /// satisfies the boundary condition at edge quadrature points
    /// (u.n = 0 for Darcy, u = 0 for Stokes).
    pub fn validate_on(&self, mesh: &TriMesh, kind: ProblemKind, quad_degree: usize) -> Result<()> {
        let rule = quadrature::triangle_rule(quad_degree)?;
        let mut p_mean = 0.0;
        let mut phi_total = 0.0;
        for c in 0..mesh.num_cells() {
            let [a, b, cc] = mesh.cell_coords(c);
            let jac = 2.0 * mesh.cell_area(c);
            for (pt, w) in rule.points.iter().zip(&rule.weights) {
                let x = a[0] + pt[0] * (b[0] - a[0]) + pt[1] * (cc[0] - a[0]);
                let y = a[1] + pt[0] * (b[1] - a[1]) + pt[1] * (cc[1] - a[1]);
                p_mean += w * jac * self.pressure(x, y);
                phi_total += w * jac * self.source(x, y);
            }
        }
        if p_mean.abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "{}: exact pressure mean {p_mean:.3e} is not zero",
                self.name
            )));
        }
        if phi_total.abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "{}: volumetric source integrates to {phi_total:.3e}, incompatible \
                 with an impermeable boundary",
                self.name
            )));
        }
        let edge_quad = quadrature::edge_rule(quad_degree.min(2 * quadrature::MAX_DEGREE))?;
        for edge in mesh.boundary_edges() {
            let EdgeKind::Boundary { normal, .. } = edge.kind else {
                unreachable!()
            };
            let [p, q] = edge.vertices.map(|v| mesh.vertex(v));
            for &t in &edge_quad.points {
                let x = p[0] + t * (q[0] - p[0]);
                let y = p[1] + t * (q[1] - p[1]);
                let u = self.velocity(x, y);
                let violation = match kind {
                    ProblemKind::Darcy => (u[0] * normal[0] + u[1] * normal[1]).abs(),
                    ProblemKind::Stokes => u[0].hypot(u[1]),
                };
                if violation > 1e-12 {
                    return Err(Error::InvalidArgument(format!(
                        "{}: exact velocity violates the {} boundary condition by {violation:.3e}",
                        self.name,
                        kind.as_str(),
                    )));
                }
            }
        }
        Ok(())
    }
}
