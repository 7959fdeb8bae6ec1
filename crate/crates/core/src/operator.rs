//! Stiffness of the classical Dirichlet form and its Schur complement over
//! the gap.
//!
//! With the vertices split into support `S` and gap `I` (boundary vertices
//! eliminated), the form on `S` is
//!
//! ```text
//! Ã = A_SS − A_SI A_II⁻¹ A_IS
//! ```
//!
//! i.e. the full-mesh energy of the discretely harmonic fill-in of `u_S`.
//! The generator is `M⁻¹ Ã` with the lumped μ-mass `M`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measure::{DofPartition, DofRole, MassMatrix};
use crate::mesh::Mesh;
use crate::solver::{solve_spd, CgOutcome, LinearOperator, DEFAULT_TOL};
use crate::sparse::{CsrMatrix, TripletBuilder};

pub const DEFAULT_DENSE_THRESHOLD: usize = 2000;

/// P1 stiffness with the Dirichlet rows/columns removed, split into blocks.
#[derive(Debug, Clone)]
pub struct StiffnessMatrix {
    /// Over all non-boundary vertices, in `free_vertices` order.
    free: CsrMatrix,
    free_vertices: Vec<usize>,
    support_vertices: Vec<usize>,
    gap_vertices: Vec<usize>,
    n_vertices: usize,
    ss: CsrMatrix,
    si: CsrMatrix,
    is: CsrMatrix,
    ii: CsrMatrix,
}

/// Element stiffness of the two congruent triangle types, computed on local
/// coordinates so that the zero hypotenuse couplings are exact.
fn element_stiffness(local: [(f64, f64); 3]) -> [[f64; 3]; 3] {
    let [(x0, y0), (x1, y1), (x2, y2)] = local;
    let b = [y1 - y2, y2 - y0, y0 - y1];
    let c = [x2 - x1, x0 - x2, x1 - x0];
    let area = 0.5 * ((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0));
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = (b[i] * b[j] + c[i] * c[j]) / (4.0 * area);
        }
    }
    k
}

pub fn assemble_stiffness(mesh: &Mesh, partition: &DofPartition) -> StiffnessMatrix {
    let (hx, hy) = (mesh.h(), mesh.hy());
    let lower = element_stiffness([(0.0, 0.0), (hx, 0.0), (hx, hy)]);
    let upper = element_stiffness([(0.0, 0.0), (hx, hy), (0.0, hy)]);

    let nv = mesh.n_vertices();
    let free_vertices: Vec<usize> = (0..nv)
        .filter(|&v| partition.role(v) != DofRole::Boundary)
        .collect();
    let mut free_index = vec![None; nv];
    for (k, &v) in free_vertices.iter().enumerate() {
        free_index[v] = Some(k);
    }

    let mut builder = TripletBuilder::new(free_vertices.len(), free_vertices.len());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let k = if t % 2 == 0 { &lower } else { &upper };
        for a in 0..3 {
            let Some(ra) = free_index[tri[a]] else { continue };
            for b in 0..3 {
                if let Some(rb) = free_index[tri[b]] {
                    builder.add(ra, rb, k[a][b]);
                }
            }
        }
    }
    let free = builder.build();

    let local_of = |role: DofRole| -> Vec<Option<usize>> {
        free_vertices
            .iter()
            .map(|&v| (partition.role(v) == role).then(|| partition.local_index(v)))
            .collect()
    };
    let s_map = local_of(DofRole::Support);
    let i_map = local_of(DofRole::Gap);
    let s_rows: Vec<usize> = partition.support.iter().map(|&v| free_index[v].unwrap()).collect();
    let i_rows: Vec<usize> = partition.gap.iter().map(|&v| free_index[v].unwrap()).collect();
    let (ns, ni) = (s_rows.len(), i_rows.len());

    StiffnessMatrix {
        ss: free.select(&s_rows, &s_map, ns),
        si: free.select(&s_rows, &i_map, ni),
        is: free.select(&i_rows, &s_map, ns),
        ii: free.select(&i_rows, &i_map, ni),
        free,
        free_vertices,
        support_vertices: partition.support.clone(),
        gap_vertices: partition.gap.clone(),
        n_vertices: nv,
    }
}

impl StiffnessMatrix {
    /// Stiffness over all non-boundary vertices.
    pub fn free(&self) -> &CsrMatrix {
        &self.free
    }

    pub fn free_vertices(&self) -> &[usize] {
        &self.free_vertices
    }

    pub fn a_ss(&self) -> &CsrMatrix {
        &self.ss
    }

    pub fn a_si(&self) -> &CsrMatrix {
        &self.si
    }

    pub fn a_is(&self) -> &CsrMatrix {
        &self.is
    }

    pub fn a_ii(&self) -> &CsrMatrix {
        &self.ii
    }

    pub fn support_vertices(&self) -> &[usize] {
        &self.support_vertices
    }

    pub fn gap_vertices(&self) -> &[usize] {
        &self.gap_vertices
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    /// Restriction of a full vertex field to the free vertices.
    pub fn to_free(&self, vertex_values: &[f64]) -> Vec<f64> {
        self.free_vertices.iter().map(|&v| vertex_values[v]).collect()
    }

    /// `xᵀ A x` for a full vertex field (boundary values ignored).
    pub fn energy(&self, vertex_values: &[f64]) -> f64 {
        let x = self.to_free(vertex_values);
        self.free.bilinear(&x, &x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol: f64,
    /// Defaults to `10·sqrt(|I|) + 500` when unset.
    pub max_iter: Option<usize>,
    pub dense_threshold: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: None,
            dense_threshold: DEFAULT_DENSE_THRESHOLD,
        }
    }
}

/// Values on every mesh vertex: zero on B, given on S, harmonic on I.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedField {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub relres: f64,
}

/// Dense Schur complement after symmetrization.
#[derive(Debug, Clone)]
pub struct DenseSchur {
    pub matrix: DMatrix<f64>,
    /// `max |Ã − Ãᵀ|` before averaging.
    pub asymmetry: f64,
}

/// The form Ã on the support dofs, applied through interior solves or a
/// cached dense matrix.
#[derive(Debug, Clone)]
pub struct SchurOperator {
    stiffness: StiffnessMatrix,
    settings: SolverSettings,
    dense: Option<DenseSchur>,
}

impl SchurOperator {
    pub fn new(stiffness: StiffnessMatrix, settings: SolverSettings) -> Self {
        Self {
            stiffness,
            settings,
            dense: None,
        }
    }

    pub fn stiffness(&self) -> &StiffnessMatrix {
        &self.stiffness
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    pub fn dim(&self) -> usize {
        self.stiffness.support_vertices.len()
    }

    pub fn gap_dim(&self) -> usize {
        self.stiffness.gap_vertices.len()
    }

    pub fn max_iter(&self) -> usize {
        self.settings
            .max_iter
            .unwrap_or_else(|| (10.0 * (self.gap_dim() as f64).sqrt()) as usize + 500)
    }

    pub fn dense(&self) -> Option<&DenseSchur> {
        self.dense.as_ref()
    }

    /// Solves `A_II x = rhs` on the gap.
    fn interior_solve(&self, rhs: &[f64]) -> Result<CgOutcome> {
        solve_spd(&self.stiffness.ii, rhs, self.settings.tol, self.max_iter())
    }

    /// Gap values `u_I = −A_II⁻¹ A_IS u_S`.
    fn gap_fill(&self, u_s: &[f64]) -> Result<CgOutcome> {
        if self.gap_dim() == 0 {
            return Ok(CgOutcome {
                x: Vec::new(),
                iterations: 0,
                relres: 0.0,
            });
        }
        let mut rhs = self.stiffness.is.mul_vec(u_s);
        rhs.iter_mut().for_each(|v| *v = -*v);
        self.interior_solve(&rhs)
    }

    /// Discretely harmonic extension of `u_S` to all vertices.
    pub fn harmonic_extend(&self, u_s: &[f64]) -> Result<ExtendedField> {
        assert_eq!(u_s.len(), self.dim());
        let fill = self.gap_fill(u_s)?;
        let mut values = vec![0.0; self.stiffness.n_vertices];
        for (&v, &x) in self.stiffness.support_vertices.iter().zip(u_s) {
            values[v] = x;
        }
        for (&v, &x) in self.stiffness.gap_vertices.iter().zip(&fill.x) {
            values[v] = x;
        }
        Ok(ExtendedField {
            values,
            iterations: fill.iterations,
            relres: fill.relres,
        })
    }

    /// `Ãu` through one interior solve (ignores the dense cache).
    pub fn apply_form_matrix_free(&self, u_s: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.stiffness.ss.mul_vec(u_s);
        if self.gap_dim() > 0 {
            let fill = self.gap_fill(u_s)?;
            self.stiffness.si.mul_vec_add(1.0, &fill.x, &mut y);
        }
        Ok(y)
    }

    /// `Ãu = A_SS u − A_SI A_II⁻¹ A_IS u`.
    pub fn apply_form(&self, u_s: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(u_s.len(), self.dim());
        match &self.dense {
            Some(d) => {
                let u = nalgebra::DVectorView::from_slice(u_s, u_s.len());
                Ok((&d.matrix * u).as_slice().to_vec())
            }
            None => self.apply_form_matrix_free(u_s),
        }
    }

    /// `Hu = M_lumped⁻¹ Ãu`.
    pub fn apply_generator(&self, mass: &MassMatrix, u_s: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.apply_form(u_s)?;
        for (yi, m) in y.iter_mut().zip(mass.lumped()) {
            *yi /= m;
        }
        Ok(y)
    }

    /// Column-by-column assembly of Ã, symmetrized as `(Ã + Ãᵀ)/2`.
    pub fn assemble_dense_schur(&self) -> Result<DenseSchur> {
        let n = self.dim();
        if n > self.settings.dense_threshold {
            return Err(Error::TooLargeForDense {
                dim: n,
                threshold: self.settings.dense_threshold,
            });
        }
        let columns: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                self.apply_form_matrix_free(&e)
            })
            .collect::<Result<_>>()?;
        let raw = DMatrix::from_fn(n, n, |r, c| columns[c][r]);
        let mut asymmetry: f64 = 0.0;
        for r in 0..n {
            for c in (r + 1)..n {
                asymmetry = asymmetry.max((raw[(r, c)] - raw[(c, r)]).abs());
            }
        }
        log::info!("dense schur dim={n} asymmetry={asymmetry:e}");
        let matrix = (&raw + raw.transpose()) * 0.5;
        Ok(DenseSchur { matrix, asymmetry })
    }

    /// Builds and keeps the dense Ã; later applies use it.
    pub fn cache_dense(&mut self) -> Result<f64> {
        if self.dense.is_none() {
            self.dense = Some(self.assemble_dense_schur()?);
        }
        Ok(self.dense.as_ref().unwrap().asymmetry)
    }

    /// Caches the dense Ã when the support is small enough; returns whether
    /// it is cached.
    pub fn cache_dense_if_small(&mut self) -> Result<bool> {
        if self.dim() <= self.settings.dense_threshold {
            self.cache_dense()?;
            Ok(true)
        } else {
            Ok(false)
        }
    }
}

impl LinearOperator for SchurOperator {
    fn dim(&self) -> usize {
        SchurOperator::dim(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        y.copy_from_slice(&self.apply_form(x)?);
        Ok(())
    }

    fn preconditioner(&self) -> Vec<f64> {
        match &self.dense {
            Some(d) => d.matrix.diagonal().as_slice().to_vec(),
            None => self.stiffness.ss.diagonal(),
        }
    }
}
