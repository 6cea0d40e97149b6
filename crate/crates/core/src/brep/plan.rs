//! Construction plans: a cuboid stock plus an ordered list of prismatic
//! sweeps hosted on its faces.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::profile::{rect_side_of, Profile, Seg2};
use super::{BrepError, CurveKind, EdgeId, FaceId, Solid};
use crate::geom::{Aabb, Vec2, Vec3};

/// Gap used by the public kernel operations when checking that a new sweep
/// stays clear of existing ones.
const KERNEL_GAP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoxSide {
    Top,
    Bottom,
    Front,
    Back,
    Left,
    Right,
}

/// Local frame of one side of the stock box. Points on the face are
/// `origin + u*x + v*y` for `(x, y)` in `[0,w] x [0,h]`; `u x v = n` is the
/// outward normal and `extent` the stock thickness along `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideFrame {
    pub origin: Vec3,
    pub u: Vec3,
    pub v: Vec3,
    pub n: Vec3,
    pub w: f64,
    pub h: f64,
    pub extent: f64,
}

impl SideFrame {
    pub fn to3(&self, p: Vec2) -> Vec3 {
        self.origin + self.u * p.x + self.v * p.y
    }

    pub fn to2(&self, p: Vec3) -> Vec2 {
        let d = p - self.origin;
        Vec2::new(d.dot(self.u), d.dot(self.v))
    }

    /// Side whose face meets this one along rectangle side `k`
    /// (0: `y=0`, 1: `x=w`, 2: `y=h`, 3: `x=0`).
    pub fn neighbor(&self, k: usize) -> BoxSide {
        let n = match k {
            0 => -self.v,
            1 => self.u,
            2 => self.v,
            _ => -self.u,
        };
        BoxSide::from_normal(n).expect("axis-aligned frame")
    }
}

impl BoxSide {
    pub const ALL: [BoxSide; 6] = [BoxSide::Top, BoxSide::Bottom, BoxSide::Front, BoxSide::Back, BoxSide::Left, BoxSide::Right];

    pub fn normal(self) -> Vec3 {
        match self {
            BoxSide::Top => Vec3::Z,
            BoxSide::Bottom => -Vec3::Z,
            BoxSide::Front => -Vec3::Y,
            BoxSide::Back => Vec3::Y,
            BoxSide::Left => -Vec3::X,
            BoxSide::Right => Vec3::X,
        }
    }

    pub fn opposite(self) -> BoxSide {
        match self {
            BoxSide::Top => BoxSide::Bottom,
            BoxSide::Bottom => BoxSide::Top,
            BoxSide::Front => BoxSide::Back,
            BoxSide::Back => BoxSide::Front,
            BoxSide::Left => BoxSide::Right,
            BoxSide::Right => BoxSide::Left,
        }
    }

    pub fn from_normal(n: Vec3) -> Option<BoxSide> {
        BoxSide::ALL.into_iter().find(|s| s.normal().approx_eq(n, 1e-12))
    }

    pub fn index(self) -> usize {
        BoxSide::ALL.iter().position(|s| *s == self).unwrap()
    }

    pub fn frame(self, dims: Vec3) -> SideFrame {
        let (x, y, z) = (dims.x, dims.y, dims.z);
        let (origin, u, v, w, h, extent) = match self {
            BoxSide::Top => (Vec3::new(0.0, 0.0, z), Vec3::X, Vec3::Y, x, y, z),
            BoxSide::Bottom => (Vec3::ZERO, Vec3::Y, Vec3::X, y, x, z),
            BoxSide::Front => (Vec3::ZERO, Vec3::X, Vec3::Z, x, z, y),
            BoxSide::Back => (Vec3::new(0.0, y, 0.0), Vec3::Z, Vec3::X, z, x, y),
            BoxSide::Left => (Vec3::ZERO, Vec3::Z, Vec3::Y, z, y, x),
            BoxSide::Right => (Vec3::new(x, 0.0, 0.0), Vec3::Y, Vec3::Z, y, z, x),
        };
        SideFrame { origin, u, v, n: self.normal(), w, h, extent }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Inward,
    Outward,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SweepKind {
    /// Material removed to the given depth; leaves a floor.
    Blind(f64),
    /// Material removed through the whole stock.
    Through,
    /// Material added outward to the given height; leaves a cap.
    Outward(f64),
}

/// A profile swept along the host face normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub host: BoxSide,
    pub profile: Profile,
    pub kind: SweepKind,
}

impl Sweep {
    pub fn depth(&self, dims: Vec3) -> f64 {
        match self.kind {
            SweepKind::Blind(d) | SweepKind::Outward(d) => d,
            SweepKind::Through => self.host.frame(dims).extent,
        }
    }

    /// Unit sweep direction: into the stock for removals, out for additions.
    pub fn direction(&self) -> Vec3 {
        match self.kind {
            SweepKind::Outward(_) => self.host.normal(),
            _ => -self.host.normal(),
        }
    }

    /// Rectangle side of the host face an open segment lies on, if any.
    pub fn open_side(&self, seg: &Seg2, frame: &SideFrame) -> Option<usize> {
        rect_side_of(seg, frame.w, frame.h)
    }

    pub fn has_open_segments(&self, dims: Vec3) -> bool {
        let f = self.host.frame(dims);
        self.profile.segments().any(|s| self.open_side(s, &f).is_some())
    }

    /// Bounding box of the swept volume.
    pub fn aabb(&self, dims: Vec3) -> Aabb {
        let f = self.host.frame(dims);
        let (lo, hi) = self.profile.bounds();
        let off = self.direction() * self.depth(dims);
        let mut b = Aabb::empty();
        for p in [lo, hi, Vec2::new(lo.x, hi.y), Vec2::new(hi.x, lo.y)] {
            let q = f.to3(p);
            b.include(q);
            b.include(q + off);
        }
        b
    }
}

/// A stock box and the sweeps applied to it, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub dims: Vec3,
    pub sweeps: Vec<Sweep>,
}

impl Plan {
    pub fn new(dims: Vec3) -> Result<Plan, BrepError> {
        if !(dims.x > 0.0 && dims.y > 0.0 && dims.z > 0.0) || !dims.is_finite() {
            return Err(BrepError::InvalidArgument(format!(
                "box dimensions must be positive, got ({}, {}, {})",
                dims.x, dims.y, dims.z
            )));
        }
        Ok(Plan { dims, sweeps: Vec::new() })
    }

    /// Checks that `sweep` fits: profile inside the host face, depth in
    /// range, and swept volume at least `gap` away from every other sweep.
    pub fn check(&self, sweep: &Sweep, gap: f64) -> Result<(), BrepError> {
        let f = sweep.host.frame(self.dims);
        let tol = 1e-9;
        match sweep.kind {
            SweepKind::Blind(d) => {
                if !(d > 0.0) {
                    return Err(BrepError::InvalidArgument(format!("depth must be positive, got {d}")));
                }
                if d >= f.extent - tol {
                    return Err(BrepError::InvalidArgument(format!(
                        "blind depth {d} reaches the stock extent {}",
                        f.extent
                    )));
                }
            }
            SweepKind::Outward(d) => {
                if !(d > 0.0) {
                    return Err(BrepError::InvalidArgument(format!("height must be positive, got {d}")));
                }
            }
            SweepKind::Through => {}
        }
        if sweep.profile.loops.is_empty() || sweep.profile.area() <= 0.0 {
            return Err(BrepError::InvalidArgument("profile has no area".into()));
        }
        let (lo, hi) = sweep.profile.bounds();
        let open = sweep.has_open_segments(self.dims);
        let margin = if open { -tol } else { gap };
        if lo.x < margin || lo.y < margin || hi.x > f.w - margin || hi.y > f.h - margin {
            return Err(BrepError::PlacementRejected("profile leaves the host face".into()));
        }
        if open {
            if matches!(sweep.kind, SweepKind::Outward(_)) {
                return Err(BrepError::Unsupported("outward sweeps must lie inside the host face".into()));
            }
            if sweep.profile.loops.len() > 1 {
                return Err(BrepError::Unsupported("open profiles cannot have holes".into()));
            }
            // Closed segments may only meet the face border at their endpoints.
            for s in sweep.profile.segments() {
                if sweep.open_side(s, &f).is_some() {
                    continue;
                }
                for k in 1..16 {
                    let p = s.point_at(k as f64 / 16.0);
                    if p.x <= tol || p.y <= tol || p.x >= f.w - tol || p.y >= f.h - tol {
                        return Err(BrepError::PlacementRejected("profile runs along the face border".into()));
                    }
                }
            }
        }
        let b = sweep.aabb(self.dims).inflated(gap);
        for (i, other) in self.sweeps.iter().enumerate() {
            if b.overlaps(&other.aabb(self.dims)) {
                return Err(BrepError::PlacementRejected(format!("overlaps sweep {i}")));
            }
        }
        Ok(())
    }

    /// Appends `sweep` after [`Plan::check`]; returns its index.
    pub fn try_add(&mut self, sweep: Sweep, gap: f64) -> Result<usize, BrepError> {
        self.check(&sweep, gap)?;
        self.sweeps.push(sweep);
        Ok(self.sweeps.len() - 1)
    }

    pub fn build(&self) -> Result<Solid, BrepError> {
        let mut s = super::build::build(self)?;
        s.plan = Some(Arc::new(self.clone()));
        Ok(s)
    }
}

/// Axis-aligned box `[0,dx] x [0,dy] x [0,dz]`.
pub fn make_box(dx: f64, dy: f64, dz: f64) -> Result<Solid, BrepError> {
    Plan::new(Vec3::new(dx, dy, dz))?.build()
}

fn plan_of(solid: &Solid) -> Result<&Plan, BrepError> {
    solid
        .plan()
        .ok_or_else(|| BrepError::Unsupported("solid carries no construction plan".into()))
}

/// Stock side a planar stock face lies on.
fn host_side(solid: &Solid, plan: &Plan, face: FaceId) -> Result<BoxSide, BrepError> {
    let f = solid
        .faces
        .get(face)
        .ok_or_else(|| BrepError::InvalidArgument(format!("face {face} out of range")))?;
    let (_, _, _, n) = solid
        .plane_frame(face)
        .ok_or_else(|| BrepError::InvalidArgument(format!("face {face} is not planar")))?;
    let side = BoxSide::from_normal(n)
        .filter(|_| f.tag.is_none())
        .ok_or_else(|| BrepError::InvalidArgument(format!("face {face} is not a stock face")))?;
    let fr = side.frame(plan.dims);
    let p = solid.vertices[solid.edges[f.outer.edges[0].edge].start];
    if (p - fr.origin).dot(fr.n).abs() > 1e-9 {
        return Err(BrepError::InvalidArgument(format!("face {face} is not on the stock boundary")));
    }
    Ok(side)
}

/// Cuts (`Inward`) or adds (`Outward`) a prism with the given footprint on a
/// stock face. Footprint coordinates are in the host face frame
/// ([`BoxSide::frame`]). An inward depth equal to the stock extent cuts
/// through.
pub fn imprint_extrude(
    solid: &Solid,
    host_face_id: FaceId,
    profile: &Profile,
    depth: f64,
    direction: Direction,
) -> Result<Solid, BrepError> {
    let plan = plan_of(solid)?;
    let host = host_side(solid, plan, host_face_id)?;
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(BrepError::InvalidArgument(format!("depth must be positive, got {depth}")));
    }
    let extent = host.frame(plan.dims).extent;
    let kind = match direction {
        Direction::Outward => SweepKind::Outward(depth),
        Direction::Inward if (depth - extent).abs() <= 1e-9 => SweepKind::Through,
        Direction::Inward if depth > extent => {
            return Err(BrepError::InvalidArgument(format!("depth {depth} exceeds stock extent {extent}")))
        }
        Direction::Inward => SweepKind::Blind(depth),
    };
    let mut p = plan.clone();
    p.try_add(Sweep { host, profile: profile.clone(), kind }, KERNEL_GAP)?;
    p.build()
}

/// Host side and corner (in host coordinates) of an untouched box edge.
fn box_edge_corner(solid: &Solid, edge_id: EdgeId) -> Result<(Plan, BoxSide, Vec2), BrepError> {
    let plan = plan_of(solid)?.clone();
    let e = solid
        .edges
        .get(edge_id)
        .ok_or_else(|| BrepError::InvalidArgument(format!("edge {edge_id} out of range")))?;
    if !matches!(e.curve, CurveKind::Line { .. }) {
        return Err(BrepError::InvalidArgument(format!("edge {edge_id} is not straight")));
    }
    let a = solid.vertices[e.start];
    let b = solid.vertices[e.end];
    let d = b - a;
    let axis = (0..3)
        .find(|&k| (d.get(k).abs() - d.norm()).abs() < 1e-12)
        .ok_or_else(|| BrepError::InvalidArgument(format!("edge {edge_id} is not axis aligned")))?;
    if (d.norm() - plan.dims.get(axis)).abs() > 1e-9 {
        return Err(BrepError::InvalidArgument(format!("edge {edge_id} is not a full stock edge")));
    }
    let host = match axis {
        0 => BoxSide::Left,
        1 => BoxSide::Front,
        _ => BoxSide::Bottom,
    };
    let f = host.frame(plan.dims);
    let c = f.to2(a);
    let on = |v: f64, t: f64| (v - t).abs() <= 1e-9;
    if !((on(c.x, 0.0) || on(c.x, f.w)) && (on(c.y, 0.0) || on(c.y, f.h))) {
        return Err(BrepError::InvalidArgument(format!("edge {edge_id} is not a stock edge")));
    }
    if solid.edge_convexity(edge_id)? != super::EdgeConvexity::Convex {
        return Err(BrepError::InvalidArgument(format!("edge {edge_id} is not convex")));
    }
    let c = Vec2::new(if on(c.x, 0.0) { 0.0 } else { f.w }, if on(c.y, 0.0) { 0.0 } else { f.h });
    Ok((plan, host, c))
}

/// Maps corner-local sketch coordinates (legs along +x and +y from the
/// corner) to host coordinates for the corner `c` of a `w x h` face.
pub fn corner_map(c: Vec2, w: f64, h: f64) -> impl Fn(Vec2) -> Vec2 {
    let sx = if c.x == 0.0 { 1.0 } else { -1.0 };
    let sy = if c.y == 0.0 { 1.0 } else { -1.0 };
    let (cx, cy) = (if c.x == 0.0 { 0.0 } else { w }, if c.y == 0.0 { 0.0 } else { h });
    move |p: Vec2| Vec2::new(cx + sx * p.x, cy + sy * p.y)
}

/// Maps a corner-local profile to host coordinates, mirroring arcs as needed.
pub fn corner_profile(local: &Profile, c: Vec2, w: f64, h: f64) -> Profile {
    let m = corner_map(c, w, h);
    let flip = (c.x == 0.0) != (c.y == 0.0);
    let loops = local
        .loops
        .iter()
        .map(|l| {
            l.iter()
                .map(|s| match *s {
                    Seg2::Line { a, b } => Seg2::line(m(a), m(b)),
                    Seg2::Arc { center, radius, a, b, ccw } => Seg2::arc(m(center), radius, m(a), m(b), ccw != flip),
                })
                .collect()
        })
        .collect();
    Profile::new(loops)
}

/// Quarter-round removal profile at the origin corner.
pub fn round_profile(r: f64) -> Profile {
    Profile::new(vec![vec![
        Seg2::line(Vec2::new(0.0, 0.0), Vec2::new(r, 0.0)),
        Seg2::arc(Vec2::new(r, r), r, Vec2::new(r, 0.0), Vec2::new(0.0, r), false),
        Seg2::line(Vec2::new(0.0, r), Vec2::new(0.0, 0.0)),
    ]])
}

/// 45° bevel removal profile at the origin corner.
pub fn chamfer_profile(s: f64) -> Profile {
    Profile::polygon(&[Vec2::new(0.0, 0.0), Vec2::new(s, 0.0), Vec2::new(0.0, s)])
}

fn edge_op(solid: &Solid, edge_id: EdgeId, size: f64, local: Profile) -> Result<Solid, BrepError> {
    let (mut plan, host, c) = box_edge_corner(solid, edge_id)?;
    let f = host.frame(plan.dims);
    if !(size > 0.0) || size >= f.w || size >= f.h {
        return Err(BrepError::InvalidArgument(format!(
            "size {size} must be positive and below the adjacent face extents ({}, {})",
            f.w, f.h
        )));
    }
    let profile = corner_profile(&local, c, f.w, f.h);
    plan.try_add(Sweep { host, profile, kind: SweepKind::Through }, KERNEL_GAP)?;
    plan.build()
}

/// Replaces a convex stock edge by a quarter-cylinder blend of radius `radius`.
pub fn apply_edge_round(solid: &Solid, edge_id: EdgeId, radius: f64) -> Result<Solid, BrepError> {
    edge_op(solid, edge_id, radius, round_profile(radius))
}

/// Replaces a convex stock edge by a 45° bevel with equal setbacks.
pub fn apply_edge_chamfer(solid: &Solid, edge_id: EdgeId, setback: f64) -> Result<Solid, BrepError> {
    edge_op(solid, edge_id, setback, chamfer_profile(setback))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_are_right_handed_and_on_the_box() {
        let dims = Vec3::new(50.0, 40.0, 25.0);
        for s in BoxSide::ALL {
            let f = s.frame(dims);
            assert_eq!(f.u.cross(f.v), f.n, "{s:?}");
            let far = f.to3(Vec2::new(f.w, f.h));
            for p in [f.origin, far] {
                for k in 0..3 {
                    assert!(p.get(k) >= 0.0 && p.get(k) <= dims.get(k));
                }
            }
            let c = f.origin.dot(f.n);
            assert!(c == 0.0 || c == f.extent);
        }
    }

    #[test]
    fn neighbors_match_side_normals() {
        let f = BoxSide::Top.frame(Vec3::new(1.0, 1.0, 1.0));
        assert_eq!(f.neighbor(0), BoxSide::Front);
        assert_eq!(f.neighbor(1), BoxSide::Right);
        assert_eq!(f.neighbor(2), BoxSide::Back);
        assert_eq!(f.neighbor(3), BoxSide::Left);
    }

    #[test]
    fn overlapping_sweeps_rejected() {
        let mut p = Plan::new(Vec3::new(50.0, 50.0, 50.0)).unwrap();
        let c = Profile::circle(Vec2::new(20.0, 20.0), 5.0);
        p.try_add(Sweep { host: BoxSide::Top, profile: c.clone(), kind: SweepKind::Blind(10.0) }, 1.0).unwrap();
        let again = Sweep { host: BoxSide::Top, profile: Profile::circle(Vec2::new(24.0, 20.0), 5.0), kind: SweepKind::Blind(5.0) };
        assert!(matches!(p.try_add(again, 1.0), Err(BrepError::PlacementRejected(_))));
    }

    #[test]
    fn blind_depth_at_extent_is_invalid() {
        let p = Plan::new(Vec3::new(50.0, 50.0, 30.0)).unwrap();
        let s = Sweep { host: BoxSide::Top, profile: Profile::circle(Vec2::new(20.0, 20.0), 5.0), kind: SweepKind::Blind(30.0) };
        assert!(matches!(p.check(&s, 1.0), Err(BrepError::InvalidArgument(_))));
    }
}
