//! File exports: CSV tables, legacy VTK fields, MatrixMarket systems.
//!
//! Every writer builds the complete file in memory and writes it in one
//! call, with numbers printed in shortest round-trip form, so repeated
//! runs with the same inputs produce byte-identical files. Each header
//! carries the command line (or caller-supplied tag) as a comment.

use std::fmt::Write as _;
use std::path::Path;

use faer::sparse::SparseColMat;

use crate::mesh::TriMesh;
use crate::solver::DiscreteSolution;
use crate::verification::ConvergenceReport;
use crate::Result;

/// One row of an inf-sup sweep.
#[derive(Debug, Clone, Copy)]
pub struct InfSupRow {
    pub level: usize,
    pub cells: usize,
    pub gamma_h: f64,
}

fn order_field(prev: f64, cur: f64) -> String {
    if prev > 0.0 && cur > 0.0 && prev.is_finite() && cur.is_finite() {
        format!("{}", (prev / cur).log2())
    } else {
        String::new()
    }
}

/// Writes the convergence table. The first row has no order entries; later
/// rows report log2 ratios of consecutive errors.
pub fn write_convergence_csv(
    path: &Path,
    command_line: &str,
    report: &ConvergenceReport,
) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "# {command_line}").unwrap();
    writeln!(
        out,
        "level,cells,h_max,err_u_l2,order_u_l2,err_u_h1,order_u_h1,err_p_l2,order_p_l2,err_triple,order_triple"
    )
    .unwrap();
    for (k, s) in report.samples.iter().enumerate() {
        let prev = (k > 0).then(|| &report.samples[k - 1]);
        let order = |get: fn(&crate::verification::ErrorSample) -> f64| match prev {
            Some(p) => order_field(get(p), get(s)),
            None => String::new(),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            s.level,
            s.cells,
            s.h_max,
            s.err_u_l2,
            order(|s| s.err_u_l2),
            s.err_u_h1,
            order(|s| s.err_u_h1),
            s.err_p_l2,
            order(|s| s.err_p_l2),
            s.err_triple,
            order(|s| s.err_triple),
        )
        .unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes the inf-sup sweep table.
pub fn write_infsup_csv(path: &Path, command_line: &str, rows: &[InfSupRow]) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "# {command_line}").unwrap();
    writeln!(out, "level,cells,gamma_h").unwrap();
    for r in rows {
        writeln!(out, "{},{},{}", r.level, r.cells, r.gamma_h).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes the solution as a legacy ASCII VTK unstructured grid with point
/// data for velocity (vectors) and pressure (scalars). The command line is
/// stored in the title line, which legacy VTK caps at 255 characters.
pub fn write_vtk(
    path: &Path,
    command_line: &str,
    mesh: &TriMesh,
    solution: &DiscreteSolution,
) -> Result<()> {
    let mut title: String = command_line
        .chars()
        .map(|c| if c == '\n' || c == '\r' { ' ' } else { c })
        .take(255)
        .collect();
    if title.is_empty() {
        title.push_str("solution");
    }
    let nv = mesh.num_vertices();
    let nc = mesh.num_cells();
    let mut out = String::new();
    writeln!(out, "# vtk DataFile Version 3.0").unwrap();
    writeln!(out, "{title}").unwrap();
    writeln!(out, "ASCII").unwrap();
    writeln!(out, "DATASET UNSTRUCTURED_GRID").unwrap();
    writeln!(out, "POINTS {nv} double").unwrap();
    for v in 0..nv {
        let p = mesh.vertex(v);
        writeln!(out, "{} {} 0", p[0], p[1]).unwrap();
    }
    writeln!(out, "CELLS {nc} {}", 4 * nc).unwrap();
    for c in 0..nc {
        let vs = mesh.cell(c);
        writeln!(out, "3 {} {} {}", vs[0], vs[1], vs[2]).unwrap();
    }
    writeln!(out, "CELL_TYPES {nc}").unwrap();
    for _ in 0..nc {
        writeln!(out, "5").unwrap();
    }
    writeln!(out, "POINT_DATA {nv}").unwrap();
    writeln!(out, "VECTORS velocity double").unwrap();
    for v in 0..nv {
        writeln!(
            out,
            "{} {} 0",
            solution.velocity[2 * v],
            solution.velocity[2 * v + 1]
        )
        .unwrap();
    }
    writeln!(out, "SCALARS pressure double").unwrap();
    writeln!(out, "LOOKUP_TABLE default").unwrap();
    for v in 0..nv {
        writeln!(out, "{}", solution.pressure[v]).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes a sparse matrix in MatrixMarket coordinate format (1-based,
/// column-major entry order). The banner must be the first line, so the
/// command line follows as a `%` comment.
pub fn write_matrix_market(
    path: &Path,
    command_line: &str,
    matrix: &SparseColMat<usize, f64>,
) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "%%MatrixMarket matrix coordinate real general").unwrap();
    writeln!(out, "%# {command_line}").unwrap();
    let nnz = matrix.compute_nnz();
    writeln!(out, "{} {} {}", matrix.nrows(), matrix.ncols(), nnz).unwrap();
    for j in 0..matrix.ncols() {
        let rows = matrix.row_indices_of_col_raw(j);
        let vals = matrix.values_of_col(j);
        for (&i, &v) in rows.iter().zip(vals) {
            writeln!(out, "{} {} {}", i + 1, j + 1, v).unwrap();
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes a dense vector in MatrixMarket array format.
pub fn write_vector_market(path: &Path, command_line: &str, vector: &[f64]) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "%%MatrixMarket matrix array real general").unwrap();
    writeln!(out, "%# {command_line}").unwrap();
    writeln!(out, "{} 1", vector.len()).unwrap();
    for v in vector {
        writeln!(out, "{v}").unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::ProblemKind;
    use crate::solver::csc_from_triplets;
    use crate::verification::{ErrorSample, TripleParts};

    fn sample(level: usize, cells: usize, h: f64, e: f64) -> ErrorSample {
        let parts = TripleParts {
            field_sq: e * e,
            div_sq: 0.0,
            pressure_sq: 0.0,
            nitsche_sq: 0.0,
            s_si_div_sq: 0.0,
            s_si_grad_sq: 0.0,
            s_sb_sq: 0.0,
        };
        ErrorSample {
            level,
            cells,
            h_max: h,
            err_u_l2: e,
            err_u_h1: 2.0 * e,
            err_p_l2: 4.0 * e,
            err_triple: e,
            triple_parts: parts,
        }
    }

    #[test]
    fn convergence_csv_matches_golden_bytes() {
        let report = ConvergenceReport {
            kind: ProblemKind::Darcy,
            samples: vec![sample(0, 16, 0.5, 0.5), sample(1, 64, 0.25, 0.125)],
        };
        let dir = std::env::temp_dir().join("glps_io_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("convergence.csv");
        write_convergence_csv(&path, "glps-fem convergence --levels 2", &report).unwrap();
        let got = std::fs::read_to_string(&path).unwrap();
        let want = "\
# glps-fem convergence --levels 2
level,cells,h_max,err_u_l2,order_u_l2,err_u_h1,order_u_h1,err_p_l2,order_p_l2,err_triple,order_triple
0,16,0.5,0.5,,1,,2,,0.5,
1,64,0.25,0.125,2,0.25,2,0.5,2,0.125,2
";
        assert_eq!(got, want);

        // Repeat runs are byte-identical.
        let path2 = dir.join("convergence_again.csv");
        write_convergence_csv(&path2, "glps-fem convergence --levels 2", &report).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn single_row_table_has_no_orders() {
        let report = ConvergenceReport {
            kind: ProblemKind::Stokes,
            samples: vec![sample(0, 16, 0.5, 0.25)],
        };
        let dir = std::env::temp_dir().join("glps_io_csv_single");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("convergence.csv");
        write_convergence_csv(&path, "glps-fem convergence --levels 1", &report).unwrap();
        let got = std::fs::read_to_string(&path).unwrap();
        assert_eq!(got.lines().count(), 3);
        assert!(got.ends_with("0,16,0.5,0.25,,0.5,,1,,0.25,\n"));
    }

    #[test]
    fn infsup_csv_matches_golden_bytes() {
        let rows = [
            InfSupRow {
                level: 0,
                cells: 16,
                gamma_h: 0.25,
            },
            InfSupRow {
                level: 1,
                cells: 64,
                gamma_h: 0.2421875,
            },
        ];
        let dir = std::env::temp_dir().join("glps_io_infsup");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("infsup.csv");
        write_infsup_csv(&path, "glps-fem infsup --levels 2", &rows).unwrap();
        let got = std::fs::read_to_string(&path).unwrap();
        let want = "\
# glps-fem infsup --levels 2
level,cells,gamma_h
0,16,0.25
1,64,0.2421875
";
        assert_eq!(got, want);
    }

    #[test]
    fn vtk_export_has_the_legacy_layout() {
        let mesh = TriMesh::criss_cross(1).unwrap();
        let nv = mesh.num_vertices();
        let solution = DiscreteSolution {
            velocity: (0..2 * nv).map(|i| i as f64).collect(),
            pressure: (0..nv).map(|i| 0.5 * i as f64).collect(),
            multiplier: 0.0,
            relative_residual: 0.0,
        };
        let dir = std::env::temp_dir().join("glps_io_vtk");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("solution_0.vtk");
        write_vtk(&path, "glps-fem solve", &mesh, &solution).unwrap();
        let got = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = got.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 3.0");
        assert_eq!(lines[1], "glps-fem solve");
        assert_eq!(lines[2], "ASCII");
        assert_eq!(lines[3], "DATASET UNSTRUCTURED_GRID");
        assert_eq!(lines[4], "POINTS 5 double");
        assert!(got.contains("\n0.5 0.5 0\n"));
        assert!(got.contains("CELLS 4 16\n"));
        assert!(got.contains("CELL_TYPES 4\n5\n5\n5\n5\n"));
        assert!(got.contains("POINT_DATA 5\n"));
        assert!(got.contains("VECTORS velocity double\n"));
        assert!(got.contains("SCALARS pressure double\nLOOKUP_TABLE default\n"));
        // Every point and vector line is padded to three components.
        for line in &lines[5..10] {
            assert_eq!(line.split_whitespace().count(), 3);
            assert!(line.ends_with(" 0"));
        }
        // Connectivity references valid vertices.
        for line in &lines[11..15] {
            let ids: Vec<usize> = line
                .split_whitespace()
                .map(|t| t.parse().unwrap())
                .collect();
            assert_eq!(ids[0], 3);
            assert!(ids[1..].iter().all(|&v| v < 5));
        }
    }

    #[test]
    fn matrix_market_exports_match_golden_bytes() {
        let m = csc_from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 1, 3.0)]);
        let dir = std::env::temp_dir().join("glps_io_mm");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("system.mtx");
        write_matrix_market(&path, "glps-fem solve --export mm", &m).unwrap();
        let got = std::fs::read_to_string(&path).unwrap();
        let want = "\
%%MatrixMarket matrix coordinate real general
%# glps-fem solve --export mm
2 2 3
1 1 2
1 2 1
2 2 3
";
        assert_eq!(got, want);

        let vpath = dir.join("rhs.mtx");
        write_vector_market(&vpath, "glps-fem solve --export mm", &[1.5, -2.0]).unwrap();
        let got = std::fs::read_to_string(&vpath).unwrap();
        let want = "\
%%MatrixMarket matrix array real general
%# glps-fem solve --export mm
2 1
1.5
-2
";
        assert_eq!(got, want);
    }
}
