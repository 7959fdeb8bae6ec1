use crate::error::Result;
use crate::geometry::{Point, Rect, SupportSpec};
use crate::measure::{assemble_vertex_measure, classify_dofs, DofPartition, MassMatrix, VertexMeasure};
use crate::mesh::{build_uniform_mesh, Mesh};
use crate::operator::{assemble_stiffness, SchurOperator, SolverSettings};

/// Everything derived from (Ω, μ, mesh size): mesh, measure, dof split,
/// support mass and the Schur form.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub domain: Rect,
    pub support: SupportSpec,
    pub mesh: Mesh,
    pub measure: VertexMeasure,
    pub partition: DofPartition,
    pub mass: MassMatrix,
    pub op: SchurOperator,
}

impl Discretization {
    pub fn build(
        domain: Rect,
        support: SupportSpec,
        n_cells: usize,
        quad_order: usize,
        settings: SolverSettings,
    ) -> Result<Self> {
        if n_cells == 0 {
            return Err(crate::Error::InvalidArgument("n_cells must be positive".into()));
        }
        let mesh = build_uniform_mesh(domain, n_cells);
        let measure = assemble_vertex_measure(&mesh, &support, quad_order)?;
        let partition = classify_dofs(&mesh, &measure)?;
        let mass = measure.restrict(&partition);
        let op = SchurOperator::new(assemble_stiffness(&mesh, &partition), settings);
        Ok(Self {
            domain,
            support,
            mesh,
            measure,
            partition,
            mass,
            op,
        })
    }

    /// Number of support dofs |S|.
    pub fn dim(&self) -> usize {
        self.partition.support.len()
    }

    /// Coordinates of the support dofs, in dof order.
    pub fn support_points(&self) -> Vec<Point> {
        self.partition.support.iter().map(|&v| self.mesh.vertex(v)).collect()
    }

    /// Evaluates `f` at the support dofs.
    pub fn sample(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        self.support_points().into_iter().map(f).collect()
    }

    /// Support dof closest to `p`.
    pub fn nearest_dof(&self, p: Point) -> usize {
        self.support_points()
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.dist(p).total_cmp(&b.1.dist(p)))
            .map(|(k, _)| k)
            .expect("support is never empty")
    }
}
