//! End-to-end tests of the command-line binary: exit codes, exported
//! artifacts, table layout, and byte-for-byte reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_glps-fem"))
}

/// A fresh per-test scratch directory under the system temp dir.
fn fresh_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("glps_cli_{name}"));
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const CSV_HEADER: &str = "level,cells,h_max,err_u_l2,order_u_l2,err_u_h1,order_u_h1,\
                          err_p_l2,order_p_l2,err_triple,order_triple";

#[test]
fn convergence_exports_table_fields_and_systems() {
    // A nested output path checks that directories are created on demand.
    let out_dir = fresh_dir("convergence").join("nested/run");
    let out = run(&[
        "convergence",
        "--problem",
        "darcy",
        "--levels",
        "2",
        "--export",
        "csv,vtk,mm",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    for name in [
        "convergence.csv",
        "summary.txt",
        "solution_0.vtk",
        "solution_1.vtk",
        "system_0.mtx",
        "rhs_0.mtx",
        "system_1.mtx",
        "rhs_1.mtx",
    ] {
        assert!(out_dir.join(name).is_file(), "missing {name}");
    }

    let csv = read(&out_dir.join("convergence.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("# glps-fem convergence"));
    assert_eq!(lines[1], CSV_HEADER);
    assert!(lines[2].starts_with("0,256,0.125,"));
    assert!(lines[3].starts_with("1,1024,0.0625,"));

    // The first data row carries no orders; the second carries one per
    // error column, each a finite positive number.
    let first: Vec<&str> = lines[2].split(',').collect();
    let second: Vec<&str> = lines[3].split(',').collect();
    assert_eq!(first.len(), 11);
    assert_eq!(second.len(), 11);
    for col in [4, 6, 8, 10] {
        assert!(first[col].is_empty(), "row 0 column {col} should be empty");
        let order: f64 = second[col].parse().expect("order parses");
        assert!(order.is_finite() && order > 0.0);
    }

    // The summary mirrors stdout exactly and names the run settings.
    let summary = read(&out_dir.join("summary.txt"));
    assert_eq!(summary.as_bytes(), &out.stdout[..]);
    assert!(summary.contains("problem: darcy"));
    assert!(summary.contains("observed orders"));
    assert!(summary.contains("pressure oscillation indicator"));
}

#[test]
fn reruns_are_byte_identical_including_perturbed_meshes() {
    let base = fresh_dir("rerun");
    let args = [
        "convergence",
        "--problem",
        "stokes",
        "--levels",
        "2",
        "--perturb",
        "--out",
        "run",
    ];
    // Same relative --out from two working directories, so the echoed
    // command line in the file headers is identical too.
    for sub in ["a", "b"] {
        let cwd = base.join(sub);
        std::fs::create_dir_all(&cwd).unwrap();
        let out = bin().args(args).current_dir(&cwd).output().unwrap();
        assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    }
    for name in ["convergence.csv", "summary.txt"] {
        let a = std::fs::read(base.join("a/run").join(name)).unwrap();
        let b = std::fs::read(base.join("b/run").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
}

#[test]
fn single_level_study_has_one_data_row_without_orders() {
    let out_dir = fresh_dir("single");
    let out = run(&[
        "convergence",
        "--problem",
        "stokes",
        "--levels",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let csv = read(&out_dir.join("convergence.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[1], CSV_HEADER);
    assert!(lines[2].starts_with("0,256,0.125,"));
    let fields: Vec<&str> = lines[2].split(',').collect();
    assert_eq!(fields.len(), 11);
    for col in [4, 6, 8, 10] {
        assert!(fields[col].is_empty());
    }
    // No vtk or mm files were requested, so none appear.
    assert!(!out_dir.join("solution_0.vtk").exists());
    assert!(!out_dir.join("system_0.mtx").exists());
}

#[test]
fn bad_arguments_are_refused_without_artifacts() {
    let out_dir = fresh_dir("refused");
    let out_str = out_dir.to_str().unwrap();

    let too_deep = run(&["convergence", "--levels", "9", "--out", out_str]);
    assert!(!too_deep.status.success());
    assert!(stderr_of(&too_deep).contains("levels must be between 1 and 8"));
    assert!(!out_dir.join("convergence.csv").exists());

    let zero = run(&["convergence", "--levels", "0", "--out", out_str]);
    assert!(!zero.status.success());

    let bad_quad = run(&["convergence", "--quad-degree", "9", "--out", out_str]);
    assert!(!bad_quad.status.success());
    assert!(stderr_of(&bad_quad).contains("quadrature degree"));

    let capped = run(&["infsup", "--levels", "5", "--out", out_str]);
    assert!(!capped.status.success());
    assert!(stderr_of(&capped).contains("at most 4 levels"));
    assert!(!out_dir.join("infsup.csv").exists());

    let unknown = run(&["convergence", "--problem", "euler", "--out", out_str]);
    assert!(!unknown.status.success());
}

#[test]
fn infsup_table_matches_library_estimates() {
    let out_dir = fresh_dir("infsup");
    let out = run(&[
        "infsup",
        "--problem",
        "darcy",
        "--levels",
        "2",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let csv = read(&out_dir.join("infsup.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[1], "level,cells,gamma_h");
    assert!(lines[2].starts_with("0,16,"));
    assert!(lines[3].starts_with("1,64,"));

    // Reference magnitudes for this configuration, pinned tightly; the
    // estimator is deterministic.
    let gamma = |line: &str| -> f64 { line.rsplit(',').next().unwrap().parse().unwrap() };
    assert!((gamma(lines[2]) - 0.3766422862976641).abs() < 1e-12);
    assert!((gamma(lines[3]) - 0.6152166554578716).abs() < 1e-12);

    let summary = read(&out_dir.join("summary.txt"));
    assert!(summary.contains("variation across levels"));

    // Without stabilization the constant decays and the summary says so.
    let out_dir0 = fresh_dir("infsup_beta0");
    let out0 = run(&[
        "infsup",
        "--problem",
        "darcy",
        "--beta",
        "0",
        "--levels",
        "2",
        "--out",
        out_dir0.to_str().unwrap(),
    ]);
    assert!(out0.status.success(), "stderr: {}", stderr_of(&out0));
    let summary0 = read(&out_dir0.join("summary.txt"));
    assert!(summary0.contains("decreases strictly under refinement"));
}

#[test]
fn solve_exports_solution_and_system() {
    let out_dir = fresh_dir("solve");
    let out = run(&[
        "solve",
        "--problem",
        "stokes",
        "--levels",
        "1",
        "--export",
        "csv,vtk,mm",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    let vtk = read(&out_dir.join("solution_0.vtk"));
    let vtk_lines: Vec<&str> = vtk.lines().collect();
    assert_eq!(vtk_lines[0], "# vtk DataFile Version 3.0");
    // 8 squares per side: 81 corner and 64 center vertices.
    assert!(vtk.contains("POINTS 145 double"));
    assert!(vtk.contains("VECTORS velocity double"));
    assert!(vtk.contains("SCALARS pressure double"));

    // Bordered system: two velocity dofs and one pressure dof per vertex
    // plus the mean-constraint multiplier.
    let mtx = read(&out_dir.join("system_0.mtx"));
    let mtx_lines: Vec<&str> = mtx.lines().collect();
    assert_eq!(mtx_lines[0], "%%MatrixMarket matrix coordinate real general");
    let dims: Vec<&str> = mtx_lines[2].split_whitespace().collect();
    assert_eq!(&dims[..2], &["436", "436"]);

    let rhs = read(&out_dir.join("rhs_0.mtx"));
    let rhs_lines: Vec<&str> = rhs.lines().collect();
    assert_eq!(rhs_lines[0], "%%MatrixMarket matrix array real general");
    assert_eq!(rhs_lines[2], "436 1");

    let csv = read(&out_dir.join("convergence.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[1], CSV_HEADER);
    assert!(lines[2].starts_with("0,256,0.125,"));

    let summary = read(&out_dir.join("summary.txt"));
    assert!(summary.contains("solved level 0"));
    assert!(summary.contains("relative residual"));
}
