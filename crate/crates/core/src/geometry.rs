//! Planar geometry for measure supports: the outer rectangle, filled polygons
//! (Koch snowflakes in particular) and segment sets carrying line measures.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Vertex/edge coincidence tolerance. Points this close to a polygon edge
/// are classified as inside.
pub const SNAP_TOL: f64 = 1e-12;

/// Largest snowflake depth accepted by [`koch_snowflake`].
pub const MAX_SNOWFLAKE_DEPTH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned open rectangle Ω.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl Rect {
    pub fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Result<Self> {
        let all_finite = [xmin, xmax, ymin, ymax].iter().all(|v| v.is_finite());
        if !all_finite || xmin >= xmax || ymin >= ymax {
            return Err(Error::UnsupportedGeometry(format!(
                "degenerate rectangle [{xmin}, {xmax}] x [{ymin}, {ymax}]"
            )));
        }
        Ok(Self {
            xmin,
            xmax,
            ymin,
            ymax,
        })
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Membership in the closed rectangle, with snap tolerance.
    pub fn contains_closed(&self, p: Point) -> bool {
        p.x >= self.xmin - SNAP_TOL
            && p.x <= self.xmax + SNAP_TOL
            && p.y >= self.ymin - SNAP_TOL
            && p.y <= self.ymax + SNAP_TOL
    }
}

/// Simple counterclockwise polygon, stored without repeating the first vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point>,
    lo: Point,
    hi: Point,
}

impl Polygon {
    /// Checks vertex count and orientation. Simplicity is not checked here
    /// because it is quadratic in the vertex count; see [`Polygon::is_simple`].
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidPolygon(format!(
                "need at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidPolygon("non-finite vertex".into()));
        }
        let poly = Self::from_vertices_unchecked(vertices);
        if poly.signed_area() <= 0.0 {
            return Err(Error::InvalidPolygon(
                "vertices must be in counterclockwise order with positive area".into(),
            ));
        }
        Ok(poly)
    }

    fn from_vertices_unchecked(vertices: Vec<Point>) -> Self {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &vertices {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        Self { vertices, lo, hi }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        (self.lo, self.hi)
    }

    /// Shoelace formula.
    pub fn signed_area(&self) -> f64 {
        0.5 * self
            .edges()
            .map(|(a, b)| a.x * b.y - b.x * a.y)
            .sum::<f64>()
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| a.dist(b)).sum()
    }

    pub fn centroid(&self) -> Point {
        let a = self.signed_area();
        let (mut cx, mut cy) = (0.0, 0.0);
        for (p, q) in self.edges() {
            let cross = p.x * q.y - q.x * p.y;
            cx += (p.x + q.x) * cross;
            cy += (p.y + q.y) * cross;
        }
        Point::new(cx / (6.0 * a), cy / (6.0 * a))
    }

    /// True if any edge of the polygon has a bounding box overlapping the
    /// closed box `[lo, hi]` (inflated by the snap tolerance).
    pub fn boundary_meets_box(&self, lo: Point, hi: Point) -> bool {
        if self.hi.x < lo.x - SNAP_TOL
            || self.lo.x > hi.x + SNAP_TOL
            || self.hi.y < lo.y - SNAP_TOL
            || self.lo.y > hi.y + SNAP_TOL
        {
            return false;
        }
        self.edges().any(|(a, b)| {
            a.x.max(b.x) >= lo.x - SNAP_TOL
                && a.x.min(b.x) <= hi.x + SNAP_TOL
                && a.y.max(b.y) >= lo.y - SNAP_TOL
                && a.y.min(b.y) <= hi.y + SNAP_TOL
        })
    }

    /// Brute-force check that no two non-adjacent edges intersect.
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        let edges: Vec<(Point, Point)> = self.edges().collect();
        for i in 0..n {
            let (a, b) = edges[i];
            for (j, &(c, d)) in edges.iter().enumerate().skip(i + 1) {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    // Adjacent edges share one vertex; they must not fold back.
                    if collinear_overlap(a, b, c, d) {
                        return false;
                    }
                    continue;
                }
                if segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment_box(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) - SNAP_TOL
        && p.x <= a.x.max(b.x) + SNAP_TOL
        && p.y >= a.y.min(b.y) - SNAP_TOL
        && p.y <= a.y.max(b.y) + SNAP_TOL
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    // Orientations below this are round-off; collinear pieces then go
    // through the bounding-box test.
    let scale = a.dist(b).max(c.dist(d));
    let eps = SNAP_TOL * scale * scale;
    let sign = |v: f64| if v.abs() <= eps { 0 } else if v > 0.0 { 1 } else { -1 };
    let d1 = sign(orient(c, d, a));
    let d2 = sign(orient(c, d, b));
    let d3 = sign(orient(a, b, c));
    let d4 = sign(orient(a, b, d));
    if d1 * d2 < 0 && d3 * d4 < 0 {
        return true;
    }
    (d1 == 0 && on_segment_box(c, d, a))
        || (d2 == 0 && on_segment_box(c, d, b))
        || (d3 == 0 && on_segment_box(a, b, c))
        || (d4 == 0 && on_segment_box(a, b, d))
}

fn collinear_overlap(a: Point, b: Point, c: Point, d: Point) -> bool {
    let scale = a.dist(b).max(c.dist(d));
    if orient(a, b, c).abs() > SNAP_TOL * scale || orient(a, b, d).abs() > SNAP_TOL * scale {
        return false;
    }
    // Shared endpoint is b == c (or d == a for the wrap-around pair). The
    // edges overlap when they point in opposite directions.
    let u = (b.x - a.x, b.y - a.y);
    let v = (d.x - c.x, d.y - c.y);
    u.0 * v.0 + u.1 * v.1 < 0.0
}

/// Distance from `p` to the closed segment `[a, b]`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.dist(Point::new(a.x + t * dx, a.y + t * dy))
}

/// Even-odd ray casting. Points within [`SNAP_TOL`] of an edge count as inside.
pub fn point_in_polygon(p: Point, poly: &Polygon) -> bool {
    let (lo, hi) = poly.bounding_box();
    if p.x < lo.x - SNAP_TOL || p.x > hi.x + SNAP_TOL || p.y < lo.y - SNAP_TOL || p.y > hi.y + SNAP_TOL
    {
        return false;
    }
    let mut inside = false;
    for (a, b) in poly.edges() {
        if point_segment_distance(p, a, b) <= SNAP_TOL {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// Filled Koch snowflake with one vertex pointing up (+y).
///
/// `side` is the edge length of the depth-0 equilateral triangle, which is
/// inscribed in the circle of radius `side / sqrt(3)` around `center`.
/// Each refinement replaces every edge by four, bumping outwards.
pub fn koch_snowflake(depth: usize, center: Point, side: f64) -> Result<Polygon> {
    if depth > MAX_SNOWFLAKE_DEPTH {
        return Err(Error::DepthTooLarge {
            depth,
            max: MAX_SNOWFLAKE_DEPTH,
        });
    }
    if !(side > 0.0 && side.is_finite()) {
        return Err(Error::InvalidPolygon(format!("side must be positive, got {side}")));
    }
    let r = side / 3f64.sqrt();
    let mut verts: Vec<Point> = [90.0f64, 210.0, 330.0]
        .iter()
        .map(|deg| {
            let t = deg.to_radians();
            Point::new(center.x + r * t.cos(), center.y + r * t.sin())
        })
        .collect();

    let (sin60, cos60) = (3f64.sqrt() / 2.0, 0.5);
    for _ in 0..depth {
        let n = verts.len();
        let mut next = Vec::with_capacity(4 * n);
        for i in 0..n {
            let a = verts[i];
            let b = verts[(i + 1) % n];
            let dx = (b.x - a.x) / 3.0;
            let dy = (b.y - a.y) / 3.0;
            let p1 = Point::new(a.x + dx, a.y + dy);
            let p3 = Point::new(a.x + 2.0 * dx, a.y + 2.0 * dy);
            // Clockwise rotation by 60 degrees points to the exterior of a
            // counterclockwise polygon.
            let apex = Point::new(
                p1.x + cos60 * dx + sin60 * dy,
                p1.y - sin60 * dx + cos60 * dy,
            );
            next.extend_from_slice(&[a, p1, apex, p3]);
        }
        verts = next;
    }
    Ok(Polygon::from_vertices_unchecked(verts))
}

/// Closed area formula `A0 * (8/5 - 3/5 * (4/9)^depth)`, `A0 = sqrt(3)/4 side^2`.
pub fn koch_snowflake_area(depth: usize, side: f64) -> f64 {
    let a0 = 3f64.sqrt() / 4.0 * side * side;
    a0 * (1.6 - 0.6 * (4.0f64 / 9.0).powi(depth as i32))
}

/// Finite union of line segments carrying one-dimensional Lebesgue measure.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSet {
    segments: Vec<(Point, Point)>,
}

impl SegmentSet {
    pub fn new(segments: Vec<(Point, Point)>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::UnsupportedGeometry("empty segment set".into()));
        }
        for (i, (a, b)) in segments.iter().enumerate() {
            if !(a.dist(*b) > 0.0) {
                return Err(Error::UnsupportedGeometry(format!(
                    "segment {i} has zero length"
                )));
            }
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[(Point, Point)] {
        &self.segments
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|(a, b)| a.dist(*b)).sum()
    }

    /// True if `p` lies on some segment (within snap tolerance).
    pub fn contains(&self, p: Point) -> bool {
        self.segments
            .iter()
            .any(|&(a, b)| point_segment_distance(p, a, b) <= SNAP_TOL)
    }
}

/// The line `y = 0` cut to the domain: the hyperplane example's Γ.
pub fn hyperplane_support(domain: &Rect) -> Result<SegmentSet> {
    if !(domain.ymin < 0.0 && 0.0 < domain.ymax) {
        return Err(Error::UnsupportedGeometry(format!(
            "line y = 0 does not cross the domain (ymin = {}, ymax = {})",
            domain.ymin, domain.ymax
        )));
    }
    SegmentSet::new(vec![(
        Point::new(domain.xmin, 0.0),
        Point::new(domain.xmax, 0.0),
    )])
}

/// Support of the speed measure μ, with its constant density.
#[derive(Debug, Clone, PartialEq)]
pub enum SupportSpec {
    /// Lebesgue measure on all of Ω (no gap).
    FullDomain,
    /// Lebesgue measure on a filled polygon, times `density`.
    Region { polygon: Polygon, density: f64 },
    /// Arc-length measure on segments, times `density`.
    Segments { segments: SegmentSet, density: f64 },
}

impl SupportSpec {
    pub fn density(&self) -> f64 {
        match self {
            SupportSpec::FullDomain => 1.0,
            SupportSpec::Region { density, .. } | SupportSpec::Segments { density, .. } => {
                *density
            }
        }
    }

    /// Checks the density and that the support lies in the closure of `domain`.
    pub fn validate(&self, domain: &Rect) -> Result<()> {
        let density = self.density();
        if !(density > 0.0 && density.is_finite()) {
            return Err(Error::UnsupportedGeometry(format!(
                "density must be positive, got {density}"
            )));
        }
        let outside = match self {
            SupportSpec::FullDomain => None,
            SupportSpec::Region { polygon, .. } => polygon
                .vertices()
                .iter()
                .find(|p| !domain.contains_closed(**p))
                .copied(),
            SupportSpec::Segments { segments, .. } => segments
                .segments()
                .iter()
                .flat_map(|(a, b)| [*a, *b])
                .find(|p| !domain.contains_closed(*p)),
        };
        match outside {
            Some(p) => Err(Error::UnsupportedGeometry(format!(
                "support point ({}, {}) lies outside the domain",
                p.x, p.y
            ))),
            None => Ok(()),
        }
    }
}

/// `# polygon` header followed by one `x,y` line per vertex.
pub fn polygon_to_csv(poly: &Polygon) -> String {
    let mut out = String::from("# polygon\n");
    for p in poly.vertices() {
        let _ = writeln!(out, "{},{}", crate::io::fmt_real(p.x), crate::io::fmt_real(p.y));
    }
    out
}

/// `# segments` header followed by pairs of `x,y` lines (start, end).
pub fn segments_to_csv(set: &SegmentSet) -> String {
    let mut out = String::from("# segments\n");
    for (a, b) in set.segments() {
        for p in [a, b] {
            let _ = writeln!(out, "{},{}", crate::io::fmt_real(p.x), crate::io::fmt_real(p.y));
        }
    }
    out
}

fn parse_points(text: &str, header: &str) -> Result<Vec<Point>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    match lines.next() {
        Some((_, l)) if l == header => {}
        found => {
            return Err(Error::Parse {
                line: found.map_or(1, |(line, _)| line),
                message: format!("expected header `{header}`"),
            })
        }
    }
    let mut pts = Vec::new();
    for (line, l) in lines {
        if l.starts_with('#') {
            continue;
        }
        let mut fields = l.split(',').map(str::trim);
        let parse = |s: Option<&str>| -> Result<f64> {
            s.and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("expected `x,y`, got `{l}`"),
                })
        };
        let x = parse(fields.next())?;
        let y = parse(fields.next())?;
        if fields.next().is_some() {
            return Err(Error::Parse {
                line,
                message: format!("expected two fields, got `{l}`"),
            });
        }
        pts.push(Point::new(x, y));
    }
    Ok(pts)
}

pub fn polygon_from_csv(text: &str) -> Result<Polygon> {
    Polygon::new(parse_points(text, "# polygon")?)
}

pub fn segments_from_csv(text: &str) -> Result<SegmentSet> {
    let pts = parse_points(text, "# segments")?;
    if pts.len() % 2 != 0 {
        return Err(Error::Parse {
            line: pts.len() + 1,
            message: "segment list needs an even number of points".into(),
        });
    }
    SegmentSet::new(pts.chunks(2).map(|c| (c[0], c[1])).collect())
}
