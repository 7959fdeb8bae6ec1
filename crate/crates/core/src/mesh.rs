//! Uniform right-triangle mesh of a rectangle.
//!
//! Vertex `(i, j)` (column `i`, row `j`) has index `j * (n + 1) + i`. Every
//! cell is split along its SW–NE diagonal, so all triangles are congruent
//! right triangles and the P1 stiffness reduces to the 5-point stencil.

use crate::geometry::{Point, Rect};

#[derive(Debug, Clone)]
pub struct Mesh {
    domain: Rect,
    n_cells: usize,
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
}

pub fn build_uniform_mesh(domain: Rect, n_cells: usize) -> Mesh {
    assert!(n_cells >= 1, "n_cells must be positive");
    let n = n_cells;
    let hx = domain.width() / n as f64;
    let hy = domain.height() / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        // Pin the last row/column to the exact domain edge.
        let y = if j == n { domain.ymax } else { domain.ymin + j as f64 * hy };
        for i in 0..=n {
            let x = if i == n { domain.xmax } else { domain.xmin + i as f64 * hx };
            vertices.push(Point::new(x, y));
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let v00 = j * (n + 1) + i;
            let v10 = v00 + 1;
            let v01 = v00 + n + 1;
            let v11 = v01 + 1;
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    Mesh {
        domain,
        n_cells,
        vertices,
        triangles,
    }
}

impl Mesh {
    pub fn domain(&self) -> &Rect {
        &self.domain
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Cell width along x.
    pub fn h(&self) -> f64 {
        self.domain.width() / self.n_cells as f64
    }

    /// Cell height along y.
    pub fn hy(&self) -> f64 {
        self.domain.height() / self.n_cells as f64
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> Point {
        self.vertices[v]
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    /// Grid coordinates `(i, j)` of a vertex.
    pub fn grid_index(&self, v: usize) -> (usize, usize) {
        (v % (self.n_cells + 1), v / (self.n_cells + 1))
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        let (i, j) = self.grid_index(v);
        i == 0 || j == 0 || i == self.n_cells || j == self.n_cells
    }

    /// Unique undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }
}

pub(crate) fn triangle_signed_area(p: &[Point; 3]) -> f64 {
    0.5 * ((p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[2].x - p[0].x) * (p[1].y - p[0].y))
}
