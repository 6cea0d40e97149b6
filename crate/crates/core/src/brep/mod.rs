//! Restricted boundary-representation kernel.
//!
//! Solids are an axis-aligned cuboid stock with prismatic sweeps applied to
//! its faces. Surfaces are planes and cylinders; curves are lines and
//! circular arcs. A [`Solid`] is immutable: every construction operation
//! returns a new value.

mod build;
pub mod mesh;
pub mod plan;
pub mod profile;

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use thiserror::Error;

use crate::geom::{angle_in_frame, Point3, Vec2, Vec3};

pub use mesh::{triangulate, TriMesh, DEFAULT_ANGULAR_STEP};
pub use plan::{
    apply_edge_chamfer, apply_edge_round, imprint_extrude, make_box, BoxSide, Direction, Plan, SideFrame,
    Sweep, SweepKind,
};
pub use profile::{Loop2, Profile, Seg2};

pub type VertexId = usize;
pub type EdgeId = usize;
pub type FaceId = usize;

/// Dihedral tolerance (radians) below which an edge counts as tangent.
pub const SMOOTH_TOL: f64 = 1e-6;
/// Coplanarity tolerance.
pub const PLANE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BrepError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("placement rejected: {0}")]
    PlacementRejected(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("mesh error: {0}")]
    Mesh(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurfaceKind {
    /// `ref_dir` is the in-plane x axis of the placement.
    Plane { origin: Point3, normal: Vec3, ref_dir: Vec3 },
    Cylinder { axis_origin: Point3, axis_dir: Vec3, ref_dir: Vec3, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurveKind {
    Line { point: Point3, direction: Vec3 },
    /// Runs counter-clockwise about `axis` from the edge start to its end.
    CircleArc { center: Point3, axis: Vec3, ref_dir: Vec3, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeConvexity {
    Convex,
    Concave,
    Smooth,
}

impl EdgeConvexity {
    pub fn index(self) -> usize {
        match self {
            EdgeConvexity::Convex => 0,
            EdgeConvexity::Concave => 1,
            EdgeConvexity::Smooth => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub curve: CurveKind,
    pub start: VertexId,
    pub end: VertexId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrientedEdge {
    pub edge: EdgeId,
    pub forward: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Loop {
    pub edges: Vec<OrientedEdge>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub surface: SurfaceKind,
    /// True when the face normal agrees with the surface normal.
    pub same_sense: bool,
    pub outer: Loop,
    pub inners: Vec<Loop>,
    /// Index of the sweep that created the face; `None` for stock faces and
    /// for faces read back from exchange files.
    pub tag: Option<u32>,
}

impl Face {
    pub fn loops(&self) -> impl Iterator<Item = &Loop> {
        std::iter::once(&self.outer).chain(self.inners.iter())
    }

    pub fn is_planar(&self) -> bool {
        matches!(self.surface, SurfaceKind::Plane { .. })
    }
}

#[derive(Debug, Clone)]
pub struct Solid {
    pub vertices: Vec<Point3>,
    pub edges: Vec<Edge>,
    pub faces: Vec<Face>,
    pub(crate) plan: Option<Arc<Plan>>,
}

impl PartialEq for Solid {
    fn eq(&self, o: &Solid) -> bool {
        self.vertices == o.vertices && self.edges == o.edges && self.faces == o.faces
    }
}

impl Solid {
    /// Assembles a solid from raw parts (no construction plan attached).
    pub fn from_parts(vertices: Vec<Point3>, edges: Vec<Edge>, faces: Vec<Face>) -> Self {
        Solid { vertices, edges, faces, plan: None }
    }

    pub fn plan(&self) -> Option<&Plan> {
        self.plan.as_deref()
    }

    pub fn edge_start(&self, e: EdgeId) -> Point3 {
        self.vertices[self.edges[e].start]
    }

    pub fn edge_end(&self, e: EdgeId) -> Point3 {
        self.vertices[self.edges[e].end]
    }

    /// Signed sweep of an arc edge (always positive: arcs run CCW about
    /// their axis), zero for lines.
    pub fn arc_sweep(&self, e: EdgeId) -> f64 {
        let edge = &self.edges[e];
        match edge.curve {
            CurveKind::Line { .. } => 0.0,
            CurveKind::CircleArc { center, axis, ref_dir, .. } => {
                if edge.start == edge.end {
                    return TAU;
                }
                let e2 = axis.cross(ref_dir);
                let t0 = angle_in_frame(self.vertices[edge.start] - center, ref_dir, e2);
                let t1 = angle_in_frame(self.vertices[edge.end] - center, ref_dir, e2);
                let mut d = t1 - t0;
                while d <= 0.0 {
                    d += TAU;
                }
                while d > TAU {
                    d -= TAU;
                }
                d
            }
        }
    }

    /// Point on an edge at parameter `t ∈ [0,1]` along its forward direction.
    pub fn edge_point(&self, e: EdgeId, t: f64) -> Point3 {
        let edge = &self.edges[e];
        match edge.curve {
            CurveKind::Line { .. } => {
                let a = self.vertices[edge.start];
                let b = self.vertices[edge.end];
                a + (b - a) * t
            }
            CurveKind::CircleArc { center, axis, ref_dir, radius } => {
                let e2 = axis.cross(ref_dir);
                let t0 = angle_in_frame(self.vertices[edge.start] - center, ref_dir, e2);
                let th = t0 + self.arc_sweep(e) * t;
                center + (ref_dir * th.cos() + e2 * th.sin()) * radius
            }
        }
    }

    /// Unit tangent at parameter `t` along the edge's forward direction.
    pub fn edge_tangent(&self, e: EdgeId, t: f64) -> Vec3 {
        let edge = &self.edges[e];
        match edge.curve {
            CurveKind::Line { .. } => (self.edge_end(e) - self.edge_start(e)).normalized(),
            CurveKind::CircleArc { center, axis, .. } => {
                let p = self.edge_point(e, t);
                axis.cross(p - center).normalized()
            }
        }
    }

    pub fn edge_length(&self, e: EdgeId) -> f64 {
        match self.edges[e].curve {
            CurveKind::Line { .. } => self.edge_start(e).dist(self.edge_end(e)),
            CurveKind::CircleArc { radius, .. } => radius * self.arc_sweep(e),
        }
    }

    /// Outward unit normal of a face at a point on (or near) it.
    pub fn face_normal_at(&self, f: FaceId, p: Point3) -> Vec3 {
        let face = &self.faces[f];
        let n = match face.surface {
            SurfaceKind::Plane { normal, .. } => normal,
            SurfaceKind::Cylinder { axis_origin, axis_dir, .. } => {
                let d = p - axis_origin;
                (d - axis_dir * d.dot(axis_dir)).normalized()
            }
        };
        if face.same_sense {
            n
        } else {
            -n
        }
    }

    /// For every edge, the (face, forward) uses in face-loop order.
    pub fn edge_uses(&self) -> Vec<Vec<(FaceId, bool)>> {
        let mut uses = vec![Vec::new(); self.edges.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            for l in f.loops() {
                for oe in &l.edges {
                    uses[oe.edge].push((fi, oe.forward));
                }
            }
        }
        uses
    }

    /// Face adjacency keyed by shared edge: `edge -> (face_a, face_b)` with
    /// `face_a < face_b`. Seam edges (both uses on one face) are omitted.
    pub fn face_adjacency(&self) -> BTreeMap<EdgeId, (FaceId, FaceId)> {
        let mut map = BTreeMap::new();
        for (e, u) in self.edge_uses().into_iter().enumerate() {
            if u.len() == 2 && u[0].0 != u[1].0 {
                let (a, b) = (u[0].0.min(u[1].0), u[0].0.max(u[1].0));
                map.insert(e, (a, b));
            }
        }
        map
    }

    /// Sorted, deduplicated neighbour lists per face.
    pub fn face_neighbors(&self) -> Vec<Vec<FaceId>> {
        let mut n = vec![Vec::new(); self.faces.len()];
        for (_, (a, b)) in self.face_adjacency() {
            n[a].push(b);
            n[b].push(a);
        }
        for v in &mut n {
            v.sort_unstable();
            v.dedup();
        }
        n
    }

    /// Convexity of the edge from the dihedral angle of the outward normals.
    pub fn edge_convexity(&self, e: EdgeId) -> Result<EdgeConvexity, BrepError> {
        if e >= self.edges.len() {
            return Err(BrepError::InvalidArgument(format!("edge {e} out of range")));
        }
        let uses: Vec<(FaceId, bool)> = self
            .faces
            .iter()
            .enumerate()
            .flat_map(|(fi, f)| f.loops().flat_map(move |l| l.edges.iter().map(move |oe| (fi, *oe))))
            .filter(|(_, oe)| oe.edge == e)
            .map(|(fi, oe)| (fi, oe.forward))
            .collect();
        if uses.len() != 2 {
            return Err(BrepError::Topology(format!("edge {e} has {} face uses", uses.len())));
        }
        let (fa, fwd_a) = uses[0];
        let (fb, _) = uses[1];
        let m = self.edge_point(e, 0.5);
        let na = self.face_normal_at(fa, m);
        let nb = self.face_normal_at(fb, m);
        let angle = na.dot(nb).clamp(-1.0, 1.0).acos();
        if fa == fb || angle < SMOOTH_TOL {
            return Ok(EdgeConvexity::Smooth);
        }
        let mut t = self.edge_tangent(e, 0.5);
        if !fwd_a {
            t = -t;
        }
        if na.cross(nb).dot(t) > 0.0 {
            Ok(EdgeConvexity::Convex)
        } else {
            Ok(EdgeConvexity::Concave)
        }
    }

    /// Loop geometry of a planar face expressed in the face's 2-D frame
    /// (x = `ref_dir`, y = `normal × ref_dir` using the outward normal).
    pub fn planar_loop_2d(&self, f: FaceId, l: &Loop) -> Option<Loop2> {
        let (origin, e1, e2, n) = self.plane_frame(f)?;
        let to2 = |p: Point3| Vec2::new((p - origin).dot(e1), (p - origin).dot(e2));
        let segs = l
            .edges
            .iter()
            .map(|oe| {
                let edge = &self.edges[oe.edge];
                let (a, b) = if oe.forward {
                    (self.vertices[edge.start], self.vertices[edge.end])
                } else {
                    (self.vertices[edge.end], self.vertices[edge.start])
                };
                match edge.curve {
                    CurveKind::Line { .. } => Seg2::line(to2(a), to2(b)),
                    CurveKind::CircleArc { center, axis, radius, .. } => {
                        let ccw = (axis.dot(n) > 0.0) == oe.forward;
                        Seg2::arc(to2(center), radius, to2(a), to2(b), ccw)
                    }
                }
            })
            .collect();
        Some(segs)
    }

    /// (origin, e1, e2, outward normal) of a planar face.
    pub fn plane_frame(&self, f: FaceId) -> Option<(Point3, Vec3, Vec3, Vec3)> {
        let face = &self.faces[f];
        match face.surface {
            SurfaceKind::Plane { origin, normal, ref_dir } => {
                let n = if face.same_sense { normal } else { -normal };
                Some((origin, ref_dir, n.cross(ref_dir), n))
            }
            SurfaceKind::Cylinder { .. } => None,
        }
    }

    /// Parameter rectangle `(θ0, θ1, h0, h1)` of a cylindrical face, with θ
    /// measured about the surface axis from `ref_dir`.
    pub fn cylinder_param_bounds(&self, f: FaceId) -> Option<(f64, f64, f64, f64)> {
        let face = &self.faces[f];
        let SurfaceKind::Cylinder { axis_origin, axis_dir, ref_dir, .. } = face.surface else {
            return None;
        };
        let e2 = axis_dir.cross(ref_dir);
        let walk = self.cylinder_loop_params(f, &face.outer, axis_origin, axis_dir, ref_dir, e2);
        let (mut t0, mut t1, mut h0, mut h1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (t, h) in walk {
            t0 = t0.min(t);
            t1 = t1.max(t);
            h0 = h0.min(h);
            h1 = h1.max(h);
        }
        Some((t0, t1, h0, h1))
    }

    /// Unwrapped (θ, h) parameters of the loop vertices of a cylindrical face.
    pub(crate) fn cylinder_loop_params(
        &self,
        _f: FaceId,
        l: &Loop,
        axis_origin: Point3,
        axis_dir: Vec3,
        ref_dir: Vec3,
        e2: Vec3,
    ) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut theta = None;
        for oe in &l.edges {
            let edge = &self.edges[oe.edge];
            let (a, _b) = if oe.forward {
                (self.vertices[edge.start], self.vertices[edge.end])
            } else {
                (self.vertices[edge.end], self.vertices[edge.start])
            };
            let th = *theta.get_or_insert_with(|| angle_in_frame(a - axis_origin, ref_dir, e2));
            let h = (a - axis_origin).dot(axis_dir);
            out.push((th, h));
            if let CurveKind::CircleArc { axis, .. } = edge.curve {
                let mut sw = self.arc_sweep(oe.edge);
                if axis.dot(axis_dir) < 0.0 {
                    sw = -sw;
                }
                if !oe.forward {
                    sw = -sw;
                }
                theta = Some(th + sw);
            }
        }
        out
    }

    /// Exact face area: shoelace with arc segments for planes, `r·Δθ·h` for
    /// cylinder patches.
    pub fn face_area(&self, f: FaceId) -> f64 {
        match self.faces[f].surface {
            SurfaceKind::Plane { .. } => self
                .faces[f]
                .loops()
                .filter_map(|l| self.planar_loop_2d(f, l))
                .map(|l| profile::loop_area(&l))
                .sum(),
            SurfaceKind::Cylinder { radius, .. } => {
                let (t0, t1, h0, h1) = self.cylinder_param_bounds(f).unwrap();
                radius * (t1 - t0) * (h1 - h0)
            }
        }
    }

    /// Area-weighted centroid of a face.
    pub fn face_centroid(&self, f: FaceId) -> Point3 {
        match self.faces[f].surface {
            SurfaceKind::Plane { .. } => {
                let (origin, e1, e2, _) = self.plane_frame(f).unwrap();
                let (mut a, mut mx, mut my) = (0.0, 0.0, 0.0);
                for l in self.faces[f].loops() {
                    for s in self.planar_loop_2d(f, l).unwrap() {
                        a += s.area_term();
                        let (x, y) = s.moment_terms();
                        mx += x;
                        my += y;
                    }
                }
                origin + e1 * (mx / a) + e2 * (my / a)
            }
            SurfaceKind::Cylinder { axis_origin, axis_dir, ref_dir, radius } => {
                let (t0, t1, h0, h1) = self.cylinder_param_bounds(f).unwrap();
                let e2 = axis_dir.cross(ref_dir);
                let half = 0.5 * (t1 - t0);
                let mid = 0.5 * (t0 + t1);
                let k = if half.abs() < 1e-15 { 1.0 } else { half.sin() / half };
                let radial = (ref_dir * mid.cos() + e2 * mid.sin()) * (radius * k);
                axis_origin + axis_dir * (0.5 * (h0 + h1)) + radial
            }
        }
    }

    /// Checks manifoldness, loop closure, and finite geometry.
    pub fn validate(&self) -> Result<(), BrepError> {
        for (i, p) in self.vertices.iter().enumerate() {
            if !p.is_finite() {
                return Err(BrepError::Topology(format!("vertex {i} is not finite")));
            }
        }
        for (e, u) in self.edge_uses().iter().enumerate() {
            if u.len() != 2 {
                return Err(BrepError::Topology(format!("edge {e} used {} times", u.len())));
            }
            if u[0].1 == u[1].1 {
                return Err(BrepError::Topology(format!("edge {e} used twice in the same direction")));
            }
        }
        for (fi, f) in self.faces.iter().enumerate() {
            for l in f.loops() {
                if l.edges.is_empty() {
                    return Err(BrepError::Topology(format!("face {fi} has an empty loop")));
                }
                let n = l.edges.len();
                for k in 0..n {
                    let a = l.edges[k];
                    let b = l.edges[(k + 1) % n];
                    let end_a = if a.forward { self.edges[a.edge].end } else { self.edges[a.edge].start };
                    let start_b = if b.forward { self.edges[b.edge].start } else { self.edges[b.edge].end };
                    if end_a != start_b {
                        return Err(BrepError::Topology(format!("face {fi} loop is not closed at position {k}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// First difference found between two solids with the same numbering:
    /// topology must match exactly, geometry within `tol`. Face tags are
    /// ignored.
    pub fn topology_diff(&self, o: &Solid, tol: f64) -> Option<String> {
        if (self.vertices.len(), self.edges.len(), self.faces.len()) != (o.vertices.len(), o.edges.len(), o.faces.len()) {
            return Some(format!(
                "counts (V, E, F) {:?} vs {:?}",
                (self.vertices.len(), self.edges.len(), self.faces.len()),
                (o.vertices.len(), o.edges.len(), o.faces.len())
            ));
        }
        let close = |a: Vec3, b: Vec3| a.approx_eq(b, tol);
        for (i, (a, b)) in self.vertices.iter().zip(&o.vertices).enumerate() {
            if !close(*a, *b) {
                return Some(format!("vertex {i}: {a:?} vs {b:?}"));
            }
        }
        for (i, (a, b)) in self.edges.iter().zip(&o.edges).enumerate() {
            let same_curve = match (a.curve, b.curve) {
                (CurveKind::Line { direction: d1, .. }, CurveKind::Line { direction: d2, .. }) => close(d1, d2),
                (
                    CurveKind::CircleArc { center: c1, axis: a1, radius: r1, .. },
                    CurveKind::CircleArc { center: c2, axis: a2, radius: r2, .. },
                ) => close(c1, c2) && close(a1, a2) && (r1 - r2).abs() <= tol,
                _ => false,
            };
            if (a.start, a.end) != (b.start, b.end) || !same_curve {
                return Some(format!("edge {i}: {a:?} vs {b:?}"));
            }
        }
        for (i, (a, b)) in self.faces.iter().zip(&o.faces).enumerate() {
            let same_surface = match (a.surface, b.surface) {
                (
                    SurfaceKind::Plane { origin: o1, normal: n1, ref_dir: r1 },
                    SurfaceKind::Plane { origin: o2, normal: n2, ref_dir: r2 },
                ) => close(o1, o2) && close(n1, n2) && close(r1, r2),
                (
                    SurfaceKind::Cylinder { axis_origin: o1, axis_dir: a1, ref_dir: r1, radius: k1 },
                    SurfaceKind::Cylinder { axis_origin: o2, axis_dir: a2, ref_dir: r2, radius: k2 },
                ) => close(o1, o2) && close(a1, a2) && close(r1, r2) && (k1 - k2).abs() <= tol,
                _ => false,
            };
            if !same_surface || a.same_sense != b.same_sense || a.outer != b.outer || a.inners != b.inners {
                return Some(format!("face {i} differs"));
            }
        }
        None
    }

    /// Euler characteristic `V - E + F`.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64 + self.faces.len() as i64
    }
}

/// Angle helper shared by extraction code: wraps into `[0, 2π)`.
pub fn wrap_angle(a: f64) -> f64 {
    a.rem_euclid(2.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;

    #[test]
    fn box_topology_and_convexity() {
        let s = make_box(30.0, 30.0, 30.0).unwrap();
        assert_eq!((s.vertices.len(), s.edges.len(), s.faces.len()), (8, 12, 6));
        assert_eq!(s.euler_characteristic(), 2);
        s.validate().unwrap();
        for e in 0..12 {
            assert_eq!(s.edge_convexity(e).unwrap(), EdgeConvexity::Convex);
        }
    }

    #[test]
    fn box_bounds_echo_input() {
        let s = make_box(50.0, 40.0, 25.0).unwrap();
        let b = crate::geom::Aabb::from_points(s.vertices.iter().copied());
        assert_eq!(b.dims(), Vec3::new(50.0, 40.0, 25.0));
    }

    #[test]
    fn make_box_rejects_non_positive() {
        assert!(matches!(make_box(0.0, 1.0, 1.0), Err(BrepError::InvalidArgument(_))));
        assert!(matches!(make_box(1.0, -1.0, 1.0), Err(BrepError::InvalidArgument(_))));
    }

    #[test]
    fn rectangle_area_centroid() {
        let s = make_box(50.0, 40.0, 25.0).unwrap();
        let top = s.faces.iter().position(|f| matches!(f.surface, SurfaceKind::Plane { normal, .. } if normal == Vec3::Z)).unwrap();
        assert!((s.face_area(top) - 2000.0).abs() < 1e-9);
        let c = s.face_centroid(top);
        assert!(c.approx_eq(Vec3::new(25.0, 20.0, 25.0), 1e-9));
    }

    #[test]
    fn rectangle_with_hole_area() {
        let s = make_box(50.0, 40.0, 25.0).unwrap();
        let top = s.faces.iter().position(|f| matches!(f.surface, SurfaceKind::Plane { normal, .. } if normal == Vec3::Z)).unwrap();
        let s2 = imprint_extrude(&s, top, &Profile::circle(Vec2::new(20.0, 20.0), 5.0), 10.0, Direction::Inward).unwrap();
        let top2 = (0..s2.faces.len())
            .find(|&f| s2.faces[f].tag.is_none() && matches!(s2.faces[f].surface, SurfaceKind::Plane { normal, .. } if normal == Vec3::Z))
            .unwrap();
        assert!((s2.face_area(top2) - (2000.0 - 25.0 * PI)).abs() < 1e-9);
    }
}
