//! Command-line front end: convergence studies, single solves, and
//! inf-sup sweeps for the stabilized Darcy and Stokes discretizations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use glps_fem::assembly::{self, ProblemKind};
use glps_fem::io::{self, InfSupRow};
use glps_fem::mesh::TriMesh;
use glps_fem::problems::ManufacturedProblem;
use glps_fem::solver;
use glps_fem::stabilization::StabilizationParams;
use glps_fem::verification::{
    self, ConvergenceReport, ErrorColumn, ErrorSample, StudyConfig, PERTURB_REL,
};
use glps_fem::{Error, Result};

/// Level-0 grid of convergence studies and single solves (squares per
/// side of the criss-cross mesh).
const STUDY_INITIAL_N: usize = 8;
/// Level-0 grid of inf-sup sweeps; kept small because the estimator is a
/// dense factorization.
const INFSUP_INITIAL_N: usize = 2;
/// Cell cap of the dense inf-sup estimator, mirrored here to refuse
/// oversized sweeps before assembling anything.
const INFSUP_MAX_CELLS: usize = 1024;
/// Seed of the --perturb flag. Fixed so that perturbed runs are exactly
/// reproducible; each level offsets it by its index.
const PERTURB_SEED: u64 = 0x676c_7073;

#[derive(Parser)]
#[command(
    name = "glps-fem",
    version,
    about = "Equal-order P1/P1 finite elements for Darcy and Stokes flow \
             with generalized local projection stabilization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a mesh-refinement study and export the error table.
    Convergence(RunArgs),
    /// Solve on the finest level of the hierarchy and export the fields.
    Solve(RunArgs),
    /// Estimate the discrete inf-sup constant level by level.
    Infsup(RunArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Problem {
    Darcy,
    Stokes,
}

impl Problem {
    fn kind(self) -> ProblemKind {
        match self {
            Problem::Darcy => ProblemKind::Darcy,
            Problem::Stokes => ProblemKind::Stokes,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Export {
    Csv,
    Vtk,
    Mm,
}

#[derive(Args)]
struct RunArgs {
    /// Problem to discretize.
    #[arg(long, value_enum, default_value_t = Problem::Darcy)]
    problem: Problem,

    /// Number of refinement levels (1 to 8).
    #[arg(long, default_value_t = 4)]
    levels: usize,

    /// Stabilization strength (defaults: darcy 10, stokes 1).
    #[arg(long)]
    beta: Option<f64>,

    /// Nitsche boundary penalty, used by stokes only (default 2).
    #[arg(long)]
    zeta: Option<f64>,

    /// Perturb interior mesh vertices pseudo-randomly (fixed seed, so
    /// repeated runs still agree byte for byte).
    #[arg(long)]
    perturb: bool,

    /// Directory receiving all exported files.
    #[arg(long, default_value = ".")]
    out: PathBuf,

    /// Artifacts to export (comma-separated).
    #[arg(long, value_enum, value_delimiter = ',', default_value = "csv")]
    export: Vec<Export>,

    /// Quadrature degree for load vectors and error integration (1 to 8).
    #[arg(long, default_value_t = 6)]
    quad_degree: usize,
}

impl RunArgs {
    fn params(&self) -> StabilizationParams {
        let defaults = match self.problem {
            Problem::Darcy => StabilizationParams::darcy_default(),
            Problem::Stokes => StabilizationParams::stokes_default(),
        };
        StabilizationParams {
            beta: self.beta.unwrap_or(defaults.beta),
            zeta: self.zeta.unwrap_or(defaults.zeta),
        }
    }

    fn wants(&self, export: Export) -> bool {
        self.export.contains(&export)
    }
}

fn main() -> ExitCode {
    solver::ensure_deterministic_backend();
    let command_line = reconstruct_command_line();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Convergence(args) => run_convergence(&args, &command_line),
        Command::Solve(args) => run_solve(&args, &command_line),
        Command::Infsup(args) => run_infsup(&args, &command_line),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// The invocation echoed into output headers. The binary path is reduced
/// to its file name so outputs do not depend on the install location.
fn reconstruct_command_line() -> String {
    let mut parts = Vec::new();
    for (i, arg) in std::env::args().enumerate() {
        let arg = if i == 0 {
            Path::new(&arg)
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or(arg)
        } else {
            arg
        };
        if arg.contains(char::is_whitespace) {
            parts.push(format!("\"{arg}\""));
        } else {
            parts.push(arg);
        }
    }
    parts.join(" ")
}

/// Range of the exact pressure sampled at mesh vertices, used to scale the
/// oscillation indicator.
fn exact_pressure_range(mesh: &TriMesh, problem: &ManufacturedProblem) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in 0..mesh.num_vertices() {
        let p = mesh.vertex(v);
        let val = problem.pressure(p[0], p[1]);
        lo = lo.min(val);
        hi = hi.max(val);
    }
    hi - lo
}

fn format_orders(report: &ConvergenceReport, column: ErrorColumn) -> String {
    match report.orders(column) {
        Ok(orders) if !orders.is_empty() => orders
            .iter()
            .map(|o| format!("{o:.4}"))
            .collect::<Vec<_>>()
            .join(" "),
        _ => "-".into(),
    }
}

fn sample_line(s: &ErrorSample) -> String {
    format!(
        "level {}: cells {:>7}  h_max {:.6}  err_u_l2 {:.6e}  err_u_h1 {:.6e}  err_p_l2 {:.6e}  err_triple {:.6e}",
        s.level, s.cells, s.h_max, s.err_u_l2, s.err_u_h1, s.err_p_l2, s.err_triple
    )
}

fn describe_run(args: &RunArgs, params: &StabilizationParams, initial_n: usize) -> String {
    let mut out = String::new();
    writeln!(out, "problem: {}", args.problem.kind().as_str()).unwrap();
    match args.problem {
        Problem::Darcy => writeln!(out, "beta: {}", params.beta).unwrap(),
        Problem::Stokes => {
            writeln!(out, "beta: {}, zeta: {}", params.beta, params.zeta).unwrap()
        }
    }
    writeln!(
        out,
        "levels: {} (initial grid {} squares per side)",
        args.levels, initial_n
    )
    .unwrap();
    writeln!(out, "quadrature degree: {}", args.quad_degree).unwrap();
    writeln!(
        out,
        "perturbed meshes: {}",
        if args.perturb { "yes" } else { "no" }
    )
    .unwrap();
    out
}

/// Writes `summary.txt` into the output directory and mirrors it to
/// stdout.
fn emit_summary(out_dir: &Path, text: &str) -> Result<()> {
    print!("{text}");
    std::fs::write(out_dir.join("summary.txt"), text)?;
    Ok(())
}

fn run_convergence(args: &RunArgs, command_line: &str) -> Result<()> {
    let kind = args.problem.kind();
    let params = args.params();
    let problem = ManufacturedProblem::default_for(kind);
    let config = StudyConfig {
        kind,
        levels: args.levels,
        initial_n: STUDY_INITIAL_N,
        params,
        quad_degree: args.quad_degree,
        perturb: args.perturb.then_some(PERTURB_SEED),
    };
    std::fs::create_dir_all(&args.out)?;

    let mut warnings: Vec<String> = Vec::new();
    let mut oscillation = 0.0f64;
    let report = verification::convergence_study(&config, &problem, |level, mesh, system, solution| {
        if args.wants(Export::Vtk) {
            io::write_vtk(
                &args.out.join(format!("solution_{level}.vtk")),
                command_line,
                mesh,
                solution,
            )?;
        }
        if args.wants(Export::Mm) {
            io::write_matrix_market(
                &args.out.join(format!("system_{level}.mtx")),
                command_line,
                &system.matrix,
            )?;
            io::write_vector_market(
                &args.out.join(format!("rhs_{level}.mtx")),
                command_line,
                &system.rhs,
            )?;
        }
        let range = exact_pressure_range(mesh, &problem);
        oscillation =
            verification::pressure_oscillation_indicator(mesh, &solution.pressure, range)?;
        if level == 0 && kind == ProblemKind::Stokes {
            let block = assembly::velocity_block(mesh, &params, kind)?;
            if solver::min_rayleigh_quotient(&block, 50, 9) <= 0.0 {
                warnings.push(format!(
                    "the Stokes velocity operator is not positive definite with zeta = {}; increase --zeta",
                    params.zeta
                ));
            }
        }
        Ok(())
    })?;

    if args.wants(Export::Csv) {
        io::write_convergence_csv(&args.out.join("convergence.csv"), command_line, &report)?;
    }
    if oscillation > 1.0 {
        warnings.push(format!(
            "pressure oscillation indicator {oscillation:.3} exceeds 1 on the finest level: \
             the pressure shows node-to-node oscillations; increase --beta"
        ));
    }

    let mut summary = describe_run(args, &params, STUDY_INITIAL_N);
    writeln!(summary).unwrap();
    for s in &report.samples {
        writeln!(summary, "{}", sample_line(s)).unwrap();
    }
    writeln!(summary).unwrap();
    writeln!(
        summary,
        "observed orders (log2 of consecutive error ratios, coarse to fine):"
    )
    .unwrap();
    writeln!(summary, "  u_l2:   {}", format_orders(&report, ErrorColumn::VelocityL2)).unwrap();
    writeln!(summary, "  u_h1:   {}", format_orders(&report, ErrorColumn::VelocityH1)).unwrap();
    writeln!(summary, "  p_l2:   {}", format_orders(&report, ErrorColumn::PressureL2)).unwrap();
    writeln!(summary, "  triple: {}", format_orders(&report, ErrorColumn::Triple)).unwrap();
    let fitted: Vec<String> = [
        ("u_l2", ErrorColumn::VelocityL2),
        ("u_h1", ErrorColumn::VelocityH1),
        ("p_l2", ErrorColumn::PressureL2),
        ("triple", ErrorColumn::Triple),
    ]
    .iter()
    .filter_map(|(name, col)| {
        report
            .fitted_order(*col)
            .map(|o| format!("{name} {o:.4}"))
    })
    .collect();
    if !fitted.is_empty() {
        writeln!(summary, "fitted asymptotic orders: {}", fitted.join(", ")).unwrap();
    }
    writeln!(
        summary,
        "pressure oscillation indicator (finest level): {oscillation:.4}"
    )
    .unwrap();
    for w in &warnings {
        writeln!(summary, "warning: {w}").unwrap();
    }
    emit_summary(&args.out, &summary)
}

fn run_solve(args: &RunArgs, command_line: &str) -> Result<()> {
    let kind = args.problem.kind();
    let params = args.params();
    let problem = ManufacturedProblem::default_for(kind);
    // Reuse the study validation for the hierarchy bounds.
    let config = StudyConfig {
        kind,
        levels: args.levels,
        initial_n: STUDY_INITIAL_N,
        params,
        quad_degree: args.quad_degree,
        perturb: args.perturb.then_some(PERTURB_SEED),
    };
    config.validate()?;
    std::fs::create_dir_all(&args.out)?;

    let level = args.levels - 1;
    let mut mesh = TriMesh::criss_cross(STUDY_INITIAL_N)?;
    for _ in 0..level {
        mesh = mesh.uniform_refine();
    }
    // Admissibility is checked on the structured mesh, where quadrature of
    // the trigonometric data cancels symmetrically.
    problem.validate_on(&mesh, kind, args.quad_degree)?;
    if args.perturb {
        mesh = mesh.perturbed(PERTURB_SEED.wrapping_add(level as u64), PERTURB_REL)?;
    }
    let system = assembly::assemble(&mesh, &params, &problem, kind, args.quad_degree)?;
    let solution = solver::solve(&system)?;
    let mut sample = verification::compute_errors(
        &mesh,
        &solution,
        &problem,
        &params,
        kind,
        args.quad_degree,
    )?;
    sample.level = level;

    if args.wants(Export::Csv) {
        let report = ConvergenceReport {
            kind,
            samples: vec![sample],
        };
        io::write_convergence_csv(&args.out.join("convergence.csv"), command_line, &report)?;
    }
    if args.wants(Export::Vtk) {
        io::write_vtk(
            &args.out.join(format!("solution_{level}.vtk")),
            command_line,
            &mesh,
            &solution,
        )?;
    }
    if args.wants(Export::Mm) {
        io::write_matrix_market(
            &args.out.join(format!("system_{level}.mtx")),
            command_line,
            &system.matrix,
        )?;
        io::write_vector_market(
            &args.out.join(format!("rhs_{level}.mtx")),
            command_line,
            &system.rhs,
        )?;
    }

    let range = exact_pressure_range(&mesh, &problem);
    let oscillation =
        verification::pressure_oscillation_indicator(&mesh, &solution.pressure, range)?;
    let mut summary = describe_run(args, &params, STUDY_INITIAL_N);
    writeln!(summary).unwrap();
    writeln!(
        summary,
        "solved level {level}: {} cells, {} dofs, relative residual {:.3e}",
        mesh.num_cells(),
        system.layout.total(),
        solution.relative_residual
    )
    .unwrap();
    writeln!(summary, "{}", sample_line(&sample)).unwrap();
    writeln!(
        summary,
        "pressure oscillation indicator: {oscillation:.4}"
    )
    .unwrap();
    if oscillation > 1.0 {
        writeln!(
            summary,
            "warning: pressure oscillation indicator exceeds 1; increase --beta"
        )
        .unwrap();
    }
    emit_summary(&args.out, &summary)
}

fn run_infsup(args: &RunArgs, command_line: &str) -> Result<()> {
    let kind = args.problem.kind();
    let params = args.params();
    params.validate(kind)?;
    if args.levels == 0 || args.levels > 8 {
        return Err(Error::InvalidArgument(format!(
            "levels must be between 1 and 8, got {}",
            args.levels
        )));
    }
    let finest_cells = (4 * INFSUP_INITIAL_N * INFSUP_INITIAL_N) << (2 * (args.levels - 1));
    if finest_cells > INFSUP_MAX_CELLS {
        return Err(Error::SizeLimit(format!(
            "inf-sup estimation is a dense factorization capped at {INFSUP_MAX_CELLS} cells; \
             {} levels would need {finest_cells} cells (use at most 4 levels)",
            args.levels
        )));
    }
    std::fs::create_dir_all(&args.out)?;
    let problem = ManufacturedProblem::default_for(kind);

    let mut rows = Vec::new();
    let mut mesh = TriMesh::criss_cross(INFSUP_INITIAL_N)?;
    for level in 0..args.levels {
        if level > 0 {
            mesh = mesh.uniform_refine();
        }
        let level_mesh = if args.perturb {
            mesh.perturbed(PERTURB_SEED.wrapping_add(level as u64), PERTURB_REL)?
        } else {
            mesh.clone()
        };
        let system = assembly::assemble(&level_mesh, &params, &problem, kind, args.quad_degree)?;
        let gram = assembly::glp_norm_gram(&level_mesh, &params, kind)?;
        let gamma = solver::inf_sup_estimate(&level_mesh, &system, &gram)?;
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::SolverFailure(format!(
                "inf-sup estimate {gamma} at level {level} is not positive; \
                 the discretization is not well posed"
            )));
        }
        rows.push(InfSupRow {
            level,
            cells: level_mesh.num_cells(),
            gamma_h: gamma,
        });
    }

    io::write_infsup_csv(&args.out.join("infsup.csv"), command_line, &rows)?;

    let mut summary = describe_run(args, &params, INFSUP_INITIAL_N);
    writeln!(summary).unwrap();
    for r in &rows {
        writeln!(
            summary,
            "level {}: cells {:>5}  gamma_h {:.6}",
            r.level, r.cells, r.gamma_h
        )
        .unwrap();
    }
    let gammas: Vec<f64> = rows.iter().map(|r| r.gamma_h).collect();
    if gammas.len() > 1 {
        let max = gammas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = gammas.iter().cloned().fold(f64::INFINITY, f64::min);
        writeln!(
            summary,
            "variation across levels: {:.1}%",
            100.0 * (max - min) / max
        )
        .unwrap();
        if params.beta == 0.0 && gammas.windows(2).all(|w| w[1] < w[0]) {
            writeln!(
                summary,
                "note: gamma_h decreases strictly under refinement, as expected \
                 without interior stabilization"
            )
            .unwrap();
        }
    }
    emit_summary(&args.out, &summary)
}
