//! Text exports. Reals are written in scientific notation with 17
//! significant digits so that files round-trip and compare byte for byte.

use std::fmt::Write as _;

use crate::mesh::Mesh;
use crate::sparse::CsrMatrix;

pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// `vertex_index,x,y` table.
pub fn mesh_vertices_csv(mesh: &Mesh) -> String {
    let mut out = String::from("vertex_index,x,y\n");
    for (i, p) in mesh.vertices().iter().enumerate() {
        let _ = writeln!(out, "{i},{},{}", fmt_real(p.x), fmt_real(p.y));
    }
    out
}

/// `triangle_index,v0,v1,v2` table (counterclockwise vertex order).
pub fn mesh_triangles_csv(mesh: &Mesh) -> String {
    let mut out = String::from("triangle_index,v0,v1,v2\n");
    for (t, [a, b, c]) in mesh.triangles().iter().enumerate() {
        let _ = writeln!(out, "{t},{a},{b},{c}");
    }
    out
}

/// Coordinate format `row col value`, one entry per line, row-major order.
/// `labels` maps local indices to the indices written out (e.g. vertex ids).
pub fn coo_text(m: &CsrMatrix, labels: Option<&[usize]>) -> String {
    let label = |i: usize| labels.map_or(i, |l| l[i]);
    let mut out = String::new();
    for (r, c, v) in m.entries() {
        let _ = writeln!(out, "{} {} {}", label(r), label(c), fmt_real(v));
    }
    out
}

/// `vertex_index,x,y,value` for the listed vertices.
pub fn field_csv(mesh: &Mesh, vertices: &[usize], values: &[f64]) -> String {
    assert_eq!(vertices.len(), values.len());
    let mut out = String::from("vertex_index,x,y,value\n");
    for (&v, &val) in vertices.iter().zip(values) {
        let p = mesh.vertex(v);
        let _ = writeln!(
            out,
            "{v},{},{},{}",
            fmt_real(p.x),
            fmt_real(p.y),
            fmt_real(val)
        );
    }
    out
}

/// Dense matrix as plain CSV rows.
pub fn dense_csv(m: &nalgebra::DMatrix<f64>) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| fmt_real(m[(r, c)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
