//! The speed measure μ on the mesh: P1 mass matrices, the boundary /
//! support / gap split of the vertices, and conformity of line supports.

use crate::error::{Error, Result};
use crate::geometry::{point_in_polygon, Point, Polygon, SegmentSet, SupportSpec, SNAP_TOL};
use crate::mesh::{triangle_signed_area, Mesh};
use crate::sparse::{CsrMatrix, TripletBuilder};

pub const DEFAULT_QUAD_ORDER: usize = 3;
pub const MAX_QUAD_ORDER: usize = 6;

/// Relative membership threshold: a vertex belongs to the support when its
/// lumped mass exceeds `EPS_MASS * μ(Ω)`.
pub const EPS_MASS: f64 = 1e-14;

/// μ-mass over all mesh vertices, before any boundary elimination.
#[derive(Debug, Clone)]
pub struct VertexMeasure {
    consistent: CsrMatrix,
    lumped: Vec<f64>,
    total: f64,
}

impl VertexMeasure {
    pub fn consistent(&self) -> &CsrMatrix {
        &self.consistent
    }

    /// Row sums of the consistent matrix.
    pub fn lumped(&self) -> &[f64] {
        &self.lumped
    }

    /// μ(Ω) as seen by the quadrature.
    pub fn total(&self) -> f64 {
        self.total
    }

    /// Mass matrices restricted to the support dofs. The lumped entries
    /// keep the full row sums, including couplings to boundary vertices.
    pub fn restrict(&self, partition: &DofPartition) -> MassMatrix {
        let col_map: Vec<Option<usize>> = partition
            .roles
            .iter()
            .zip(&partition.local)
            .map(|(r, &l)| (*r == DofRole::Support).then_some(l))
            .collect();
        let consistent = self
            .consistent
            .select(&partition.support, &col_map, partition.support.len());
        let lumped = partition.support.iter().map(|&v| self.lumped[v]).collect();
        MassMatrix { consistent, lumped }
    }
}

/// Segment supports must run along mesh edges; regions need no conformity.
pub fn validate_conformity(mesh: &Mesh, support: &SupportSpec) -> Result<()> {
    support.validate(mesh.domain())?;
    if let SupportSpec::Segments { segments, .. } = support {
        let covered = covered_lengths(mesh, segments);
        for (k, (a, b)) in segments.segments().iter().enumerate() {
            let len = a.dist(*b);
            if (covered[k] - len).abs() > 1e-9 * len.max(1.0) {
                return Err(Error::NonConforming(format!(
                    "segment {k} from ({}, {}) to ({}, {}) is not a union of mesh edges \
                     (covered length {} of {len})",
                    a.x, a.y, b.x, b.y, covered[k]
                )));
            }
        }
    }
    Ok(())
}

/// Mesh edges lying on each segment, by segment index.
fn edges_on_segments(mesh: &Mesh, segments: &SegmentSet) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for (a, b) in mesh.edges() {
        let (pa, pb) = (mesh.vertex(a), mesh.vertex(b));
        let owner = segments.segments().iter().position(|&(s, e)| {
            crate::geometry::point_segment_distance(pa, s, e) <= SNAP_TOL * 10.0
                && crate::geometry::point_segment_distance(pb, s, e) <= SNAP_TOL * 10.0
        });
        if let Some(k) = owner {
            out.push((k, a, b));
        }
    }
    out
}

fn covered_lengths(mesh: &Mesh, segments: &SegmentSet) -> Vec<f64> {
    let mut covered = vec![0.0; segments.segments().len()];
    for (k, a, b) in edges_on_segments(mesh, segments) {
        covered[k] += mesh.vertex(a).dist(mesh.vertex(b));
    }
    covered
}

/// Assembles the consistent P1 mass of μ over all vertices.
///
/// * `FullDomain`: exact element mass `|T|/12 [[2,1,1],[1,2,1],[1,1,2]]`.
/// * `Region`: each triangle is split into `4^quad_order` congruent pieces;
///   pieces whose barycenter lies in the polygon contribute their exact
///   `∫ φ_a φ_b`. Triangles whose bounding box misses the polygon boundary
///   are classified once by their centroid.
/// * `Segments`: per conforming mesh edge of length `L`, `ρ L/6 [[2,1],[1,2]]`.
pub fn assemble_vertex_measure(
    mesh: &Mesh,
    support: &SupportSpec,
    quad_order: usize,
) -> Result<VertexMeasure> {
    if !(1..=MAX_QUAD_ORDER).contains(&quad_order) {
        return Err(Error::InvalidArgument(format!(
            "quad_order must be in 1..={MAX_QUAD_ORDER}, got {quad_order}"
        )));
    }
    validate_conformity(mesh, support)?;
    let nv = mesh.n_vertices();
    let mut builder = TripletBuilder::new(nv, nv);
    let density = support.density();

    match support {
        SupportSpec::FullDomain => {
            for (t, tri) in mesh.triangles().iter().enumerate() {
                let area = triangle_signed_area(&mesh.triangle_points(t));
                add_element(&mut builder, tri, &full_element_mass(area * density));
            }
        }
        SupportSpec::Region { polygon, .. } => {
            let subs = subdivision(quad_order);
            for (t, tri) in mesh.triangles().iter().enumerate() {
                let pts = mesh.triangle_points(t);
                let area = triangle_signed_area(&pts);
                let elem = region_element_mass(polygon, &pts, area, &subs);
                if let Some(m) = elem {
                    add_element(&mut builder, tri, &m.map(|row| row.map(|v| v * density)));
                }
            }
        }
        SupportSpec::Segments { segments, .. } => {
            for (_, a, b) in edges_on_segments(mesh, segments) {
                let len = mesh.vertex(a).dist(mesh.vertex(b));
                let d = density * len / 6.0;
                builder.add(a, a, 2.0 * d);
                builder.add(a, b, d);
                builder.add(b, a, d);
                builder.add(b, b, 2.0 * d);
            }
        }
    }

    let consistent = builder.build();
    let lumped = consistent.row_sums();
    let total: f64 = lumped.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptySupport(format!(
            "measure has total mass {total} on this mesh"
        )));
    }
    Ok(VertexMeasure {
        consistent,
        lumped,
        total,
    })
}

fn add_element(builder: &mut TripletBuilder, tri: &[usize; 3], m: &[[f64; 3]; 3]) {
    for a in 0..3 {
        for b in 0..3 {
            if m[a][b] != 0.0 {
                builder.add(tri[a], tri[b], m[a][b]);
            }
        }
    }
}

fn full_element_mass(area: f64) -> [[f64; 3]; 3] {
    let d = area / 12.0;
    [
        [2.0 * d, d, d],
        [d, 2.0 * d, d],
        [d, d, 2.0 * d],
    ]
}

type Bary = [f64; 3];

/// Regular subdivision of the reference triangle into `4^level` pieces,
/// as barycentric vertex triples.
fn subdivision(level: usize) -> Vec<[Bary; 3]> {
    let mut tris = vec![[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]];
    for _ in 0..level {
        let mut next = Vec::with_capacity(4 * tris.len());
        for [a, b, c] in tris {
            let mid = |p: Bary, q: Bary| [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1]), 0.5 * (p[2] + q[2])];
            let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
            next.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        tris = next;
    }
    tris
}

fn region_element_mass(
    polygon: &Polygon,
    pts: &[Point; 3],
    area: f64,
    subs: &[[Bary; 3]],
) -> Option<[[f64; 3]; 3]> {
    let lo = Point::new(
        pts[0].x.min(pts[1].x).min(pts[2].x),
        pts[0].y.min(pts[1].y).min(pts[2].y),
    );
    let hi = Point::new(
        pts[0].x.max(pts[1].x).max(pts[2].x),
        pts[0].y.max(pts[1].y).max(pts[2].y),
    );
    let to_point = |l: Bary| {
        Point::new(
            l[0] * pts[0].x + l[1] * pts[1].x + l[2] * pts[2].x,
            l[0] * pts[0].y + l[1] * pts[1].y + l[2] * pts[2].y,
        )
    };
    if !polygon.boundary_meets_box(lo, hi) {
        let centroid = to_point([1.0 / 3.0; 3]);
        return point_in_polygon(centroid, polygon).then(|| full_element_mass(area));
    }

    let sub_area = area / subs.len() as f64;
    let mut m = [[0.0; 3]; 3];
    let mut any = false;
    for s in subs {
        let bc = [
            (s[0][0] + s[1][0] + s[2][0]) / 3.0,
            (s[0][1] + s[1][1] + s[2][1]) / 3.0,
            (s[0][2] + s[1][2] + s[2][2]) / 3.0,
        ];
        if !point_in_polygon(to_point(bc), polygon) {
            continue;
        }
        any = true;
        // Exact integral of a product of two linear functions over the piece.
        let sums = [
            s[0][0] + s[1][0] + s[2][0],
            s[0][1] + s[1][1] + s[2][1],
            s[0][2] + s[1][2] + s[2][2],
        ];
        for a in 0..3 {
            for b in 0..3 {
                let diag: f64 = (0..3).map(|k| s[k][a] * s[k][b]).sum();
                m[a][b] += sub_area / 12.0 * (diag + sums[a] * sums[b]);
            }
        }
    }
    any.then_some(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofRole {
    /// On ∂Ω; eliminated (Dirichlet).
    Boundary,
    /// Carries μ-mass.
    Support,
    /// Interior vertex of the gap Ω∖supp μ.
    Gap,
}

/// Disjoint split of the vertices into boundary B, support S and gap I.
#[derive(Debug, Clone)]
pub struct DofPartition {
    pub boundary: Vec<usize>,
    pub support: Vec<usize>,
    pub gap: Vec<usize>,
    roles: Vec<DofRole>,
    local: Vec<usize>,
}

impl DofPartition {
    pub fn role(&self, vertex: usize) -> DofRole {
        self.roles[vertex]
    }

    /// Position of `vertex` within its own class list.
    pub fn local_index(&self, vertex: usize) -> usize {
        self.local[vertex]
    }

    pub fn n_vertices(&self) -> usize {
        self.roles.len()
    }

    pub fn roles(&self) -> &[DofRole] {
        &self.roles
    }
}

/// B = ∂Ω vertices, S = remaining vertices with lumped mass above
/// `EPS_MASS * μ(Ω)`, I = the rest.
pub fn classify_dofs(mesh: &Mesh, measure: &VertexMeasure) -> Result<DofPartition> {
    let threshold = EPS_MASS * measure.total();
    let nv = mesh.n_vertices();
    let mut roles = Vec::with_capacity(nv);
    let mut local = Vec::with_capacity(nv);
    let (mut boundary, mut support, mut gap) = (Vec::new(), Vec::new(), Vec::new());
    for v in 0..nv {
        let (role, list) = if mesh.is_boundary_vertex(v) {
            (DofRole::Boundary, &mut boundary)
        } else if measure.lumped()[v] > threshold {
            (DofRole::Support, &mut support)
        } else {
            (DofRole::Gap, &mut gap)
        };
        roles.push(role);
        local.push(list.len());
        list.push(v);
    }
    if support.is_empty() {
        return Err(Error::EmptySupport(
            "no interior vertex carries measure; refine the mesh".into(),
        ));
    }
    Ok(DofPartition {
        boundary,
        support,
        gap,
        roles,
        local,
    })
}

/// μ-mass on the support dofs.
#[derive(Debug, Clone)]
pub struct MassMatrix {
    consistent: CsrMatrix,
    lumped: Vec<f64>,
}

impl MassMatrix {
    pub fn consistent(&self) -> &CsrMatrix {
        &self.consistent
    }

    pub fn lumped(&self) -> &[f64] {
        &self.lumped
    }

    pub fn dim(&self) -> usize {
        self.lumped.len()
    }

    /// `⟨u, v⟩` in the lumped inner product.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.lumped.iter().zip(u).zip(v).map(|((m, a), b)| m * a * b).sum()
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    /// `⟨u, 1⟩_M`.
    pub fn total_mass(&self, u: &[f64]) -> f64 {
        self.lumped.iter().zip(u).map(|(m, a)| m * a).sum()
    }
}

/// Convenience: assemble the measure, classify the dofs, restrict the mass.
pub fn assemble_mass(
    mesh: &Mesh,
    support: &SupportSpec,
    quad_order: usize,
) -> Result<(VertexMeasure, DofPartition, MassMatrix)> {
    let measure = assemble_vertex_measure(mesh, support, quad_order)?;
    let partition = classify_dofs(mesh, &measure)?;
    let mass = measure.restrict(&partition);
    Ok((measure, partition, mass))
}
