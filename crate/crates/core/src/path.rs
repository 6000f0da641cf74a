//! Reference paths for the ground vehicle.
//!
//! A path is a polyline of vertices sampled at fixed arc-length spacing from
//! a course description (straight and arc segments). Every vertex carries a
//! pose and the analytic curvature of the segment it lies on, so downstream
//! consumers (controller, experience store) can index terrain by vertex id
//! and look up curvature without re-deriving geometry.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default spacing between consecutive path vertices [m].
pub const DEFAULT_VERTEX_SPACING: f64 = 0.15;

/// Wrap an angle into `(-pi, pi]` [rad].
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(std::f64::consts::TAU);
    if r > std::f64::consts::PI {
        r - std::f64::consts::TAU
    } else {
        r
    }
}

/// Index of a vertex along the reference path (0-based, path order).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VertexId(pub usize);

impl std::fmt::Display for VertexId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One sampled point of the reference path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathVertex {
    /// Position [m].
    pub x: f64,
    /// Position [m].
    pub y: f64,
    /// Tangent heading, wrapped to `(-pi, pi]` [rad].
    pub theta: f64,
    /// Signed curvature of the segment this vertex lies on [1/m];
    /// positive turns left (counter-clockwise).
    pub curvature: f64,
}

/// A segment of a course description.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Segment {
    /// Straight section of the given length [m].
    Straight { length: f64 },
    /// Circular arc with the given radius [m] and signed sweep [deg];
    /// positive sweeps turn left.
    Arc { radius: f64, angle_deg: f64 },
}

impl Segment {
    /// Arc length of the segment [m].
    pub fn length(&self) -> f64 {
        match *self {
            Segment::Straight { length } => length,
            Segment::Arc { radius, angle_deg } => radius * angle_deg.to_radians().abs(),
        }
    }

    /// Signed curvature along the segment [1/m].
    pub fn curvature(&self) -> f64 {
        match *self {
            Segment::Straight { .. } => 0.0,
            Segment::Arc { radius, angle_deg } => angle_deg.signum() / radius,
        }
    }
}

/// Course description: an ordered list of segments plus the sampling spacing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CourseSpec {
    /// Distance between consecutive sampled vertices [m].
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    #[serde(rename = "segment")]
    pub segments: Vec<Segment>,
}

fn default_spacing() -> f64 {
    DEFAULT_VERTEX_SPACING
}

impl CourseSpec {
    /// The built-in benchmark course: a serpentine of two straights and
    /// four 180-degree hairpins, about 42 m long. The hairpins are tight
    /// enough (|curvature| ≈ 0.45) that dynamics differences show up
    /// clearly in the turn rate at normal driving speed, and long enough
    /// (≈ 4.6 s at cruise) that a disturbance model adapted early in a
    /// corner still has most of the corner left to matter on. Parallel
    /// sections stay several metres apart so localization is unambiguous.
    pub fn benchmark() -> Self {
        CourseSpec {
            spacing: DEFAULT_VERTEX_SPACING,
            segments: vec![
                Segment::Straight { length: 7.18 },
                Segment::Arc { radius: 2.2, angle_deg: 180.0 },
                Segment::Arc { radius: 2.2, angle_deg: -180.0 },
                Segment::Straight { length: 7.18 },
                Segment::Arc { radius: 2.2, angle_deg: -180.0 },
                Segment::Arc { radius: 2.2, angle_deg: 180.0 },
            ],
        }
    }

    /// Total analytic length of the course [m].
    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }

    /// Parse a course from its TOML representation.
    pub fn from_toml_str(text: &str) -> Result<Self, CourseError> {
        let spec: CourseSpec = toml::from_str(text).map_err(|e| CourseError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), CourseError> {
        if !(self.spacing > 0.0) {
            return Err(CourseError::NonPositiveSpacing(self.spacing));
        }
        if self.segments.is_empty() {
            return Err(CourseError::EmptyCourse);
        }
        for seg in &self.segments {
            match *seg {
                Segment::Straight { length } if !(length > 0.0) => {
                    return Err(CourseError::NonPositiveLength(length));
                }
                Segment::Arc { radius, angle_deg } => {
                    if !(radius > 0.0) {
                        return Err(CourseError::NonPositiveRadius(radius));
                    }
                    if angle_deg == 0.0 || !angle_deg.is_finite() {
                        return Err(CourseError::DegenerateArc(angle_deg));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CourseError {
    #[error("course has no segments")]
    EmptyCourse,
    #[error("vertex spacing must be positive, got {0}")]
    NonPositiveSpacing(f64),
    #[error("straight segment length must be positive, got {0}")]
    NonPositiveLength(f64),
    #[error("arc radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("arc sweep must be nonzero and finite, got {0} deg")]
    DegenerateArc(f64),
    #[error("course parse error: {0}")]
    Parse(String),
}

/// Sampled reference path.
///
/// Closed courses (end pose returns to the start) drop the duplicate final
/// vertex and wrap vertex arithmetic; open courses clamp at the ends.
#[derive(Clone, Debug, PartialEq)]
pub struct RefPath {
    vertices: Vec<PathVertex>,
    spacing: f64,
    closed: bool,
    total_length: f64,
}

impl RefPath {
    /// Sample a course into a vertex path. The first vertex sits at the
    /// origin with heading zero; vertices are spaced `course.spacing` apart
    /// in arc length, and the course endpoint is kept as a final vertex on
    /// open courses even when the spacing does not divide the total length.
    pub fn generate(course: &CourseSpec) -> Result<RefPath, CourseError> {
        course.validate()?;
        let total = course.total_length();
        // Per-segment start poses, accumulated analytically.
        let mut seg_start = Vec::with_capacity(course.segments.len());
        let (mut x, mut y, mut th) = (0.0f64, 0.0f64, 0.0f64);
        for seg in &course.segments {
            seg_start.push((x, y, th));
            let (nx, ny, nth) = advance(x, y, th, seg, seg.length());
            x = nx;
            y = ny;
            th = nth;
        }
        let end_pose = (x, y, th);
        let closed = {
            let dist = (end_pose.0.hypot(end_pose.1)) as f64;
            dist < 0.5 * course.spacing && wrap_angle(end_pose.2).abs() < 1e-3
        };

        // Cumulative segment start arc lengths.
        let mut seg_s0 = Vec::with_capacity(course.segments.len());
        let mut acc = 0.0;
        for seg in &course.segments {
            seg_s0.push(acc);
            acc += seg.length();
        }

        let eps = 1e-9 * total.max(1.0);
        let n_steps = ((total + eps) / course.spacing).floor() as usize;
        let mut samples: Vec<f64> = (0..=n_steps).map(|k| k as f64 * course.spacing).collect();
        // Keep the endpoint on open courses; closed ones wrap back to vertex 0.
        if let Some(&last) = samples.last() {
            if closed {
                if (total - last) < eps {
                    samples.pop();
                }
            } else if (total - last) > eps {
                samples.push(total);
            }
        }

        let mut vertices = Vec::with_capacity(samples.len());
        for s in samples {
            // Locate the segment containing s; a vertex on a boundary takes
            // the succeeding segment's curvature, the endpoint the last one's.
            let mut idx = course.segments.len() - 1;
            for (i, &s0) in seg_s0.iter().enumerate() {
                let s1 = s0 + course.segments[i].length();
                if s + eps < s1 {
                    idx = i;
                    break;
                }
            }
            let seg = &course.segments[idx];
            let (sx, sy, sth) = seg_start[idx];
            let u = (s - seg_s0[idx]).max(0.0);
            let (px, py, pth) = advance(sx, sy, sth, seg, u);
            vertices.push(PathVertex {
                x: px,
                y: py,
                theta: wrap_angle(pth),
                curvature: seg.curvature(),
            });
        }

        Ok(RefPath {
            vertices,
            spacing: course.spacing,
            closed,
            total_length: total,
        })
    }

    /// Number of vertices.
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Whether the course returns to its start pose.
    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Arc-length spacing between consecutive vertices [m].
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Total analytic course length [m].
    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn vertex(&self, id: VertexId) -> &PathVertex {
        &self.vertices[id.0]
    }

    pub fn vertices(&self) -> &[PathVertex] {
        &self.vertices
    }

    /// Id of the final vertex.
    pub fn last_vertex(&self) -> VertexId {
        VertexId(self.vertices.len() - 1)
    }

    /// Nearest vertex to a position by Euclidean distance; ties resolve to
    /// the lower index.
    pub fn nearest_vertex(&self, x: f64, y: f64) -> VertexId {
        let mut best = 0usize;
        let mut best_d2 = f64::INFINITY;
        for (i, v) in self.vertices.iter().enumerate() {
            let d2 = (v.x - x).powi(2) + (v.y - y).powi(2);
            if d2 < best_d2 {
                best_d2 = d2;
                best = i;
            }
        }
        VertexId(best)
    }

    /// Like [`nearest_vertex`](Self::nearest_vertex) but only scans vertices
    /// within `radius` indices of `hint` (wrapping on closed paths). Used in
    /// rollout prediction where the previous assignment is a good guess.
    pub fn nearest_vertex_near(&self, hint: VertexId, radius: usize, x: f64, y: f64) -> VertexId {
        let n = self.vertices.len();
        let mut best = hint.0.min(n - 1);
        let mut best_d2 = f64::INFINITY;
        let lo = hint.0 as isize - radius as isize;
        let hi = hint.0 as isize + radius as isize;
        for j in lo..=hi {
            let i = if self.closed {
                j.rem_euclid(n as isize) as usize
            } else if j < 0 || j >= n as isize {
                continue;
            } else {
                j as usize
            };
            let v = &self.vertices[i];
            let d2 = (v.x - x).powi(2) + (v.y - y).powi(2);
            if d2 < best_d2 {
                best_d2 = d2;
                best = i;
            }
        }
        VertexId(best)
    }

    /// The `count` vertex ids ending at `end` inclusive, in path order.
    /// Clamped at vertex 0 on open paths, wrapped on closed ones.
    pub fn behind_ids(&self, end: VertexId, count: usize) -> Vec<VertexId> {
        let n = self.vertices.len() as isize;
        let end = end.0 as isize;
        let mut out = Vec::with_capacity(count);
        for j in (end - count as isize + 1)..=end {
            if self.closed {
                out.push(VertexId(j.rem_euclid(n) as usize));
            } else if (0..n).contains(&j) {
                out.push(VertexId(j as usize));
            }
        }
        out
    }

    /// The `count` vertex ids strictly after `after`, in path order.
    /// Truncated at the path end on open paths, wrapped on closed ones.
    pub fn ahead_ids(&self, after: VertexId, count: usize) -> Vec<VertexId> {
        let n = self.vertices.len() as isize;
        let start = after.0 as isize + 1;
        let mut out = Vec::with_capacity(count);
        for j in start..start + count as isize {
            if self.closed {
                out.push(VertexId(j.rem_euclid(n) as usize));
            } else if (0..n).contains(&j) {
                out.push(VertexId(j as usize));
            }
        }
        out
    }

    /// Vertex ids from `from` to `to` inclusive, walking forward along the
    /// path (wrapping on closed paths). On open paths a reversed pair is
    /// normalized to the covered interval.
    pub fn interval_ids(&self, from: VertexId, to: VertexId) -> Vec<VertexId> {
        let n = self.vertices.len();
        if self.closed {
            let mut out = Vec::new();
            let mut i = from.0 % n;
            loop {
                out.push(VertexId(i));
                if i == to.0 % n {
                    break;
                }
                i = (i + 1) % n;
                if out.len() > n {
                    break; // defensive: never loop forever
                }
            }
            out
        } else {
            let (lo, hi) = if from.0 <= to.0 { (from.0, to.0) } else { (to.0, from.0) };
            (lo..=hi.min(n - 1)).map(VertexId).collect()
        }
    }
}

/// Advance a pose by arc length `u` along a segment starting at `(x, y, th)`.
fn advance(x: f64, y: f64, th: f64, seg: &Segment, u: f64) -> (f64, f64, f64) {
    let kappa = seg.curvature();
    if kappa == 0.0 {
        (x + u * th.cos(), y + u * th.sin(), th)
    } else {
        let th1 = th + kappa * u;
        (
            x + (th1.sin() - th.sin()) / kappa,
            y - (th1.cos() - th.cos()) / kappa,
            th1,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn wrap_angle_covers_half_open_interval() {
        assert_relative_eq!(wrap_angle(std::f64::consts::PI), std::f64::consts::PI);
        assert_relative_eq!(wrap_angle(-std::f64::consts::PI), std::f64::consts::PI);
        assert_relative_eq!(wrap_angle(3.0 * std::f64::consts::PI), std::f64::consts::PI);
        assert_relative_eq!(wrap_angle(0.1 - std::f64::consts::TAU), 0.1, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(0.0), 0.0);
    }

    #[test]
    fn straight_42m_gives_281_vertices() {
        let course = CourseSpec {
            spacing: 0.15,
            segments: vec![Segment::Straight { length: 42.0 }],
        };
        let path = RefPath::generate(&course).unwrap();
        assert_eq!(path.len(), 281);
        assert!(!path.is_closed());
        let last = path.vertex(path.last_vertex());
        assert_relative_eq!(last.x, 42.0, epsilon = 1e-9);
        assert_relative_eq!(last.y, 0.0, epsilon = 1e-9);
        assert!(path.vertices().iter().all(|v| v.curvature == 0.0));
    }

    #[test]
    fn full_circle_is_closed_with_constant_curvature() {
        let r = 3.0;
        let course = CourseSpec {
            spacing: 0.15,
            segments: vec![Segment::Arc { radius: r, angle_deg: 360.0 }],
        };
        let path = RefPath::generate(&course).unwrap();
        assert!(path.is_closed());
        for v in path.vertices() {
            assert_relative_eq!(v.curvature, 1.0 / r);
            // Every vertex sits on the circle of radius r centred at (0, r).
            assert_relative_eq!((v.x.powi(2) + (v.y - r).powi(2)).sqrt(), r, epsilon = 1e-9);
        }
        // No duplicate of vertex 0 at the seam.
        let first = path.vertex(VertexId(0));
        let last = path.vertex(path.last_vertex());
        assert!((first.x - last.x).hypot(first.y - last.y) > 0.5 * path.spacing());
    }

    #[test]
    fn benchmark_course_length_matches_analytic_sum() {
        let course = CourseSpec::benchmark();
        let expect = 2.0 * 7.18 + 4.0 * (std::f64::consts::PI * 2.2);
        assert_relative_eq!(course.total_length(), expect, epsilon = 1e-12);
        let path = RefPath::generate(&course).unwrap();
        assert!(!path.is_closed());
        // Sampled footprint spans the analytic length to within one percent.
        let sampled = (path.len() - 1) as f64 * path.spacing();
        assert!((sampled - expect).abs() / expect < 0.01);
        // Corners are genuinely sharp and both turn directions appear.
        assert!(path.vertices().iter().any(|v| v.curvature > 0.1));
        assert!(path.vertices().iter().any(|v| v.curvature < -0.1));
    }

    #[test]
    fn consecutive_vertices_are_spacing_apart() {
        let path = RefPath::generate(&CourseSpec::benchmark()).unwrap();
        for (i, w) in path.vertices().windows(2).enumerate() {
            let d = (w[1].x - w[0].x).hypot(w[1].y - w[0].y);
            // Chord length is slightly under arc length on arcs.
            assert!(d <= path.spacing() + 1e-9, "chord {d} exceeds spacing");
            // The appended endpoint of an open course may sit arbitrarily
            // close to the last regular sample; all other chords must not
            // collapse.
            if i + 2 < path.len() {
                assert!(d > 0.5 * path.spacing(), "chord {d} collapsed");
            }
        }
    }

    #[test]
    fn nearest_vertex_prefers_lower_index_on_tie() {
        let course = CourseSpec {
            spacing: 0.15,
            segments: vec![Segment::Straight { length: 3.0 }],
        };
        let path = RefPath::generate(&course).unwrap();
        // Midway between vertices 4 and 5.
        let mid = 0.15 * 4.5;
        assert_eq!(path.nearest_vertex(mid, 0.2), VertexId(4));
        // Past the end of an open path the last vertex wins.
        assert_eq!(path.nearest_vertex(10.0, 0.0), path.last_vertex());
    }

    #[test]
    fn window_ids_clamp_on_open_paths() {
        let course = CourseSpec {
            spacing: 0.15,
            segments: vec![Segment::Straight { length: 3.0 }],
        };
        let path = RefPath::generate(&course).unwrap(); // 21 vertices
        assert_eq!(
            path.behind_ids(VertexId(2), 5),
            vec![VertexId(0), VertexId(1), VertexId(2)]
        );
        assert_eq!(
            path.ahead_ids(VertexId(18), 5),
            vec![VertexId(19), VertexId(20)]
        );
        assert_eq!(path.ahead_ids(path.last_vertex(), 3), Vec::<VertexId>::new());
    }

    #[test]
    fn window_ids_wrap_on_closed_paths() {
        let course = CourseSpec {
            spacing: 0.15,
            segments: vec![Segment::Arc { radius: 3.0, angle_deg: 360.0 }],
        };
        let path = RefPath::generate(&course).unwrap();
        let n = path.len();
        let behind = path.behind_ids(VertexId(1), 4);
        assert_eq!(
            behind,
            vec![VertexId(n - 2), VertexId(n - 1), VertexId(0), VertexId(1)]
        );
        let ahead = path.ahead_ids(VertexId(n - 2), 3);
        assert_eq!(ahead, vec![VertexId(n - 1), VertexId(0), VertexId(1)]);
        let interval = path.interval_ids(VertexId(n - 1), VertexId(1));
        assert_eq!(interval, vec![VertexId(n - 1), VertexId(0), VertexId(1)]);
    }

    #[test]
    fn course_roundtrips_through_toml() {
        let text = r#"
            spacing = 0.15

            [[segment]]
            type = "straight"
            length = 13.15

            [[segment]]
            type = "arc"
            radius = 2.5
            angle_deg = -90.0
        "#;
        let spec = CourseSpec::from_toml_str(text).unwrap();
        assert_eq!(spec.segments.len(), 2);
        assert_relative_eq!(spec.segments[1].curvature(), -0.4);
        let back = toml::to_string(&spec).unwrap();
        let again = CourseSpec::from_toml_str(&back).unwrap();
        assert_eq!(spec, again);
    }

    #[test]
    fn invalid_courses_are_rejected() {
        assert!(CourseSpec::from_toml_str("spacing = 0.15").is_err());
        let bad_radius = CourseSpec {
            spacing: 0.15,
            segments: vec![Segment::Arc { radius: -1.0, angle_deg: 90.0 }],
        };
        assert!(RefPath::generate(&bad_radius).is_err());
        let bad_spacing = CourseSpec {
            spacing: 0.0,
            segments: vec![Segment::Straight { length: 1.0 }],
        };
        assert!(RefPath::generate(&bad_spacing).is_err());
    }
}
