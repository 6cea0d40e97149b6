//! Rule-based recovery of feature dimensions, orientation and stock sizes
//! from a labeled solid.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::brep::{triangulate, BrepError, EdgeConvexity, Solid, SurfaceKind, DEFAULT_ANGULAR_STEP};
use crate::featuregen::{class, GroundTruth, Group, STOCK_CLASS};
use crate::geom::{Aabb, Vec2, Vec3};

const PAR_TOL: f64 = 1e-9;
const DEDUP_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("instance {instance} ({class}): {msg}")]
    Mismatch { instance: u32, class: u8, msg: String },
    #[error("unknown class index {0}")]
    UnknownClass(u8),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Brep(#[from] BrepError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DimValue {
    Scalar(f64),
    Point(Vec3),
    Pair(usize, usize),
}

impl From<f64> for DimValue {
    fn from(x: f64) -> Self {
        DimValue::Scalar(x)
    }
}

impl From<Vec3> for DimValue {
    fn from(p: Vec3) -> Self {
        DimValue::Point(p)
    }
}

/// Named dimension entries in report order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dimensions(pub Vec<(String, DimValue)>);

impl Dimensions {
    pub fn push(&mut self, key: &str, v: impl Into<DimValue>) {
        self.0.push((key.to_string(), v.into()));
    }

    pub fn get(&self, key: &str) -> Option<DimValue> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn scalar(&self, key: &str) -> Option<f64> {
        match self.get(key)? {
            DimValue::Scalar(x) => Some(x),
            _ => None,
        }
    }

    /// Compares key sets and values; scalars and points within `rel` of the
    /// larger magnitude (points use at least unit scale), pairs exactly.
    pub fn compare(&self, other: &Dimensions, rel: f64) -> Result<(), String> {
        let keys = |d: &Dimensions| d.0.iter().map(|(k, _)| k.clone()).collect::<Vec<_>>();
        if keys(self) != keys(other) {
            return Err(format!("keys differ: {:?} vs {:?}", keys(self), keys(other)));
        }
        for ((k, a), (_, b)) in self.0.iter().zip(&other.0) {
            let ok = match (a, b) {
                (DimValue::Scalar(x), DimValue::Scalar(y)) => (x - y).abs() <= rel * x.abs().max(y.abs()),
                (DimValue::Point(p), DimValue::Point(q)) => p.dist(*q) <= rel * p.norm().max(q.norm()).max(1.0),
                (DimValue::Pair(a0, a1), DimValue::Pair(b0, b1)) => a0 == b0 && a1 == b1,
                _ => false,
            };
            if !ok {
                return Err(format!("{k}: {a:?} vs {b:?}"));
            }
        }
        Ok(())
    }
}

/// Formats a dimension value as in the report tables: two decimals with
/// trailing zeros dropped, keeping at least one decimal.
pub fn fmt_dim(x: f64) -> String {
    let s = format!("{:.2}", x);
    let s = s.trim_end_matches('0');
    let s = if s.ends_with('.') { format!("{s}0") } else { s.to_string() };
    if s == "-0.0" {
        "0.0".into()
    } else {
        s
    }
}

/// Like [`fmt_dim`] but drops the decimal point for whole numbers.
pub fn fmt_size(x: f64) -> String {
    let s = fmt_dim(x);
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

impl fmt::Display for Dimensions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            match v {
                DimValue::Scalar(x) => write!(f, "{k} = {}", fmt_dim(*x))?,
                DimValue::Point(p) => write!(f, "{k} = ({}, {}, {})", fmt_dim(p.x), fmt_dim(p.y), fmt_dim(p.z))?,
                DimValue::Pair(a, b) => write!(f, "{k} ({a}, {b})")?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    Upright,
    Tilted,
    None,
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::Upright => "Upright",
            Orientation::Tilted => "Tilted",
            Orientation::None => "None",
        })
    }
}

fn axis_rank(k: usize) -> u8 {
    match k {
        2 => 2,
        0 => 1,
        _ => 0,
    }
}

/// Index of the coordinate axis with the largest `|a·e|`; exact ties go
/// to Z, then X, then Y.
pub fn dominant_axis(a: Vec3) -> usize {
    let mut best = 1;
    for k in [0, 2] {
        let (x, y) = (a.get(k).abs(), a.get(best).abs());
        if x > y || (x == y && axis_rank(k) > axis_rank(best)) {
            best = k;
        }
    }
    best
}

/// True when `a` points along a coordinate axis that ranks ahead of `b`'s
/// in the Z, X, Y order.
pub fn prefers(a: Vec3, b: Vec3) -> bool {
    axis_rank(dominant_axis(a)) > axis_rank(dominant_axis(b))
}

pub fn orientation_of_axis(a: Vec3) -> Orientation {
    if dominant_axis(a) == 2 {
        Orientation::Upright
    } else {
        Orientation::Tilted
    }
}

pub fn linear_distance(p1: Vec3, p2: Vec3) -> f64 {
    (p2 - p1).norm()
}

/// Radius of a circle from its center and a rim point, measured in the
/// plane normal to `axis`.
pub fn circle_radius(center: Vec3, rim: Vec3, axis: Vec3) -> f64 {
    let d = rim - center;
    let a = axis.normalized();
    (d - a * d.dot(a)).norm()
}

pub fn angle_between(a: Vec3, b: Vec3) -> Result<f64, ExtractError> {
    let (na, nb) = (a.norm(), b.norm());
    if !(na > 0.0 && nb > 0.0) {
        return Err(ExtractError::InvalidArgument("angle with a zero vector".into()));
    }
    Ok((a.dot(b) / (na * nb)).clamp(-1.0, 1.0).acos())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureInstance {
    pub instance_id: u32,
    pub class: u8,
    pub faces: Vec<usize>,
}

/// Connected components of equally labeled non-stock faces, numbered from 1
/// in order of their lowest face id.
pub fn group_instances(solid: &Solid, classes: &[u8]) -> Vec<FeatureInstance> {
    let nb = solid.face_neighbors();
    let mut seen = vec![false; solid.faces.len()];
    let mut out = Vec::new();
    for start in 0..solid.faces.len() {
        let c = classes[start];
        if seen[start] || c == STOCK_CLASS {
            continue;
        }
        let mut faces = Vec::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(f) = stack.pop() {
            faces.push(f);
            for &g in &nb[f] {
                if !seen[g] && classes[g] == c {
                    seen[g] = true;
                    stack.push(g);
                }
            }
        }
        faces.sort_unstable();
        out.push(FeatureInstance { instance_id: out.len() as u32 + 1, class: c, faces });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub dims: Dimensions,
    pub axis: Option<Vec3>,
    pub orientation: Orientation,
}

struct Ctx<'a> {
    solid: &'a Solid,
    inst: &'a FeatureInstance,
    planes: Vec<(usize, Vec3)>,
    cylinders: Vec<(usize, Vec3, Vec3, f64)>,
    verts: Vec<Vec3>,
}

impl<'a> Ctx<'a> {
    fn new(solid: &'a Solid, inst: &'a FeatureInstance) -> Self {
        let mut planes = Vec::new();
        let mut cylinders = Vec::new();
        let mut vids = Vec::new();
        for &f in &inst.faces {
            match solid.faces[f].surface {
                SurfaceKind::Plane { .. } => planes.push((f, solid.plane_frame(f).expect("planar").3)),
                SurfaceKind::Cylinder { axis_origin, axis_dir, radius, .. } => {
                    cylinders.push((f, axis_origin, axis_dir.normalized(), radius))
                }
            }
            for l in solid.faces[f].loops() {
                for oe in &l.edges {
                    let e = &solid.edges[oe.edge];
                    vids.extend([e.start, e.end]);
                }
            }
        }
        vids.sort_unstable();
        vids.dedup();
        let verts = vids.into_iter().map(|v| solid.vertices[v]).collect();
        Ctx { solid, inst, planes, cylinders, verts }
    }

    fn err(&self, msg: impl Into<String>) -> ExtractError {
        ExtractError::Mismatch { instance: self.inst.instance_id, class: self.inst.class, msg: msg.into() }
    }

    fn expect_counts(&self, planes: std::ops::RangeInclusive<usize>, cylinders: usize) -> Result<(), ExtractError> {
        if planes.contains(&self.planes.len()) && self.cylinders.len() == cylinders {
            Ok(())
        } else {
            Err(self.err(format!(
                "expected {planes:?} planar and {cylinders} cylindrical faces, found {} and {}",
                self.planes.len(),
                self.cylinders.len()
            )))
        }
    }

    fn extent(&self, a: Vec3) -> (f64, f64) {
        self.verts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            let t = v.dot(a);
            (lo.min(t), hi.max(t))
        })
    }

    fn span(&self, a: Vec3) -> f64 {
        let (lo, hi) = self.extent(a);
        hi - lo
    }

    fn loop_len(&self, f: usize) -> usize {
        self.solid.faces[f].outer.edges.len()
    }

    /// Planar faces perpendicular to every other face of the instance;
    /// profile-shaped ones first, then by axis preference.
    fn floor(&self) -> Result<(usize, Vec3), ExtractError> {
        let mut cands: Vec<(usize, Vec3)> = self
            .planes
            .iter()
            .copied()
            .filter(|&(f, n)| {
                self.planes.iter().all(|&(g, m)| g == f || n.dot(m).abs() < PAR_TOL)
                    && self.cylinders.iter().all(|&(_, _, a, _)| n.cross(a).norm() < PAR_TOL)
            })
            .collect();
        if cands.is_empty() {
            return Err(self.err("no face lies across the depth axis"));
        }
        cands.sort_by_key(|&(f, n)| (self.loop_len(f) == 4, std::cmp::Reverse(axis_rank(dominant_axis(n)))));
        Ok(cands[0])
    }

    /// Common direction of the walls: the cross product of two
    /// non-parallel wall normals, or for a single wall the normal of a
    /// neighbouring planar face perpendicular to it.
    fn wall_axis(&self, walls: &[(usize, Vec3)]) -> Result<Vec3, ExtractError> {
        for (i, (_, a)) in walls.iter().enumerate() {
            for (_, b) in &walls[i + 1..] {
                let c = a.cross(*b);
                if c.norm() > 1e-6 {
                    return Ok(c.normalized());
                }
            }
        }
        let &(f, n) = walls.first().ok_or_else(|| self.err("no walls"))?;
        let adj = self.solid.face_adjacency();
        self.solid.faces[f]
            .outer
            .edges
            .iter()
            .filter_map(|oe| adj.get(&oe.edge).map(|&(a, b)| if a == f { b } else { a }))
            .filter_map(|g| self.solid.plane_frame(g).map(|fr| fr.3))
            .find(|m| m.dot(n).abs() < PAR_TOL)
            .ok_or_else(|| self.err("wall has no perpendicular neighbour"))
    }

    fn point_on_axis(origin: Vec3, a: Vec3, level: f64) -> Vec3 {
        origin + a * (level - origin.dot(a))
    }

    fn plane_level(&self, f: usize, a: Vec3) -> f64 {
        self.solid.plane_frame(f).expect("planar").0.dot(a)
    }

    /// Opening of a through sweep: the end with the larger coordinate along
    /// the dominant axis.
    fn through_end(&self, origin: Vec3, a: Vec3) -> Vec3 {
        let (lo, hi) = self.extent(a);
        let (p, q) = (Self::point_on_axis(origin, a, lo), Self::point_on_axis(origin, a, hi));
        let k = dominant_axis(a);
        if p.get(k) > q.get(k) {
            p
        } else {
            q
        }
    }

    /// End of a blind sweep away from its floor.
    fn open_end(&self, origin: Vec3, a: Vec3, floor: usize) -> (Vec3, Vec3) {
        let lf = self.plane_level(floor, a);
        let (lo, hi) = self.extent(a);
        let other = if (lf - lo).abs() < (lf - hi).abs() { hi } else { lo };
        (Self::point_on_axis(origin, a, other), Self::point_on_axis(origin, a, lf))
    }

    fn rim_radius(&self, cyl: usize, center: Vec3, a: Vec3) -> f64 {
        let (f, _, _, r) = self.cylinders[cyl];
        let rim = self.solid.faces[f]
            .outer
            .edges
            .iter()
            .map(|oe| self.solid.vertices[self.solid.edges[oe.edge].start])
            .next();
        rim.map_or(r, |p| circle_radius(center, p, a))
    }

    /// Distinct vertex positions projected to the plane normal to `a`,
    /// ordered by angle about their centroid.
    fn polygon(&self, a: Vec3) -> Vec<Vec2> {
        let e1 = a.any_perpendicular().normalized();
        let e2 = a.cross(e1);
        let mut pts: Vec<Vec2> = Vec::new();
        for v in &self.verts {
            let p = Vec2::new(v.dot(e1), v.dot(e2));
            if !pts.iter().any(|q| q.approx_eq(p, DEDUP_TOL)) {
                pts.push(p);
            }
        }
        let n = pts.len().max(1) as f64;
        let c = pts.iter().fold(Vec2::new(0.0, 0.0), |s, p| Vec2::new(s.x + p.x / n, s.y + p.y / n));
        pts.sort_by(|p, q| (p.y - c.y).atan2(p.x - c.x).total_cmp(&(q.y - c.y).atan2(q.x - c.x)));
        pts
    }

    fn polygon_sides(&self, a: Vec3, n: usize) -> Result<Vec<f64>, ExtractError> {
        let pts = self.polygon(a);
        if pts.len() != n {
            return Err(self.err(format!("expected a {n}-gon cross-section, found {} corners", pts.len())));
        }
        Ok((0..n).map(|i| pts[i].dist(pts[(i + 1) % n])).collect())
    }

    fn walls_except(&self, floor: Option<usize>) -> Vec<(usize, Vec3)> {
        self.planes.iter().copied().filter(|&(f, _)| Some(f) != floor).collect()
    }
}

/// Extent of one face's vertices along `a`.
fn face_span(solid: &Solid, f: usize, a: Vec3) -> f64 {
    let (lo, hi) = solid.faces[f]
        .loops()
        .flat_map(|l| &l.edges)
        .map(|oe| solid.vertices[solid.edges[oe.edge].start].dot(a))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(t), hi.max(t)));
    hi - lo
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Point solving `n1·x = c1`, `n2·x = c2`, `s·x = 0`.
fn meet(n1: Vec3, c1: f64, n2: Vec3, c2: f64, s: Vec3) -> Option<Vec3> {
    let det = n1.dot(n2.cross(s));
    if det.abs() < 1e-12 {
        return None;
    }
    Some((n2.cross(s) * c1 + s.cross(n1) * c2) / det)
}

/// Blind hole: radius from the wall, depth as the distance between the
/// opening and floor centers.
pub fn extract_blind_hole(solid: &Solid, inst: &FeatureInstance) -> Result<Extraction, ExtractError> {
    let cx = Ctx::new(solid, inst);
    cx.expect_counts(1..=1, 1)?;
    let (floor, _) = cx.floor()?;
    let (_, origin, a, _) = cx.cylinders[0];
    let (c1, c2) = cx.open_end(origin, a, floor);
    let mut d = Dimensions::default();
    d.push("Radius", cx.rim_radius(0, c1, a));
    d.push("Depth", linear_distance(c1, c2));
    d.push("Center", c1);
    Ok(Extraction { dims: d, axis: Some(a), orientation: orientation_of_axis(a) })
}

/// Circular end pocket: width as twice the end radius, depth as the largest
/// vertex offset from the floor plane, length between end-circle centers.
pub fn extract_circular_end_pocket(solid: &Solid, inst: &FeatureInstance) -> Result<Extraction, ExtractError> {
    let cx = Ctx::new(solid, inst);
    cx.expect_counts(3..=3, 2)?;
    let (floor, n) = cx.floor()?;
    let (_, o1, a, r) = cx.cylinders[0];
    let (_, o2, _, _) = cx.cylinders[1];
    let c = solid.plane_frame(floor).expect("planar").0;
    let level = c.dot(n);
    let (p1, p2) = (Ctx::point_on_axis(o1, n, level), Ctx::point_on_axis(o2, n, level));
    let length = linear_distance(p1, p2);
    if length < DEDUP_TOL {
        return Err(cx.err("end circles coincide"));
    }
    let depth = cx.verts.iter().map(|v| n.dot(*v - c).abs()).fold(0.0, f64::max);
    let mut d = Dimensions::default();
    d.push("Width", 2.0 * r);
    d.push("Length", length);
    d.push("Depth", depth);
    Ok(Extraction { dims: d, axis: Some(a), orientation: orientation_of_axis(a) })
}

pub fn extract_dimensions(solid: &Solid, inst: &FeatureInstance) -> Result<Extraction, ExtractError> {
    let c = inst.class;
    if class(c).is_none_or(|k| k.group == Group::Stock) {
        return Err(ExtractError::UnknownClass(c));
    }
    match c {
        12 => return extract_blind_hole(solid, inst),
        16 => return extract_circular_end_pocket(solid, inst),
        _ => {}
    }
    let cx = Ctx::new(solid, inst);
    let mut d = Dimensions::default();
    let axis = match c {
        0 => {
            cx.expect_counts(1..=1, 0)?;
            chamfer(&cx, &mut d)?;
            None
        }
        23 => {
            cx.expect_counts(0..=0, 1)?;
            round(&cx, &mut d)?;
            None
        }
        1 => {
            cx.expect_counts(0..=0, 1)?;
            let (_, o, a, _) = cx.cylinders[0];
            let center = cx.through_end(o, a);
            d.push("Radius", cx.rim_radius(0, center, a));
            d.push("Depth", cx.span(a));
            d.push("Center", center);
            Some(a)
        }
        11 => {
            cx.expect_counts(1..=1, 2)?;
            let (floor, _) = cx.floor()?;
            let (_, o, a, _) = cx.cylinders[0];
            let (c1, c2) = cx.open_end(o, a, floor);
            let radii = sorted(vec![cx.rim_radius(0, c1, a), cx.rim_radius(1, c1, a)]);
            d.push("Radius-1", radii[0]);
            d.push("Radius-2", radii[1]);
            d.push("Depth", linear_distance(c1, c2));
            d.push("Center", c1);
            Some(a)
        }
        24 => {
            cx.expect_counts(1..=1, 1)?;
            let (cap, _) = cx.floor()?;
            let (_, o, a, _) = cx.cylinders[0];
            let (base, top) = cx.open_end(o, a, cap);
            d.push("Radius", cx.rim_radius(0, top, a));
            d.push("Depth", linear_distance(base, top));
            d.push("Center", top);
            Some(a)
        }
        7 | 18 | 19 => {
            let blind = c != 7;
            cx.expect_counts(if blind { 3..=3 } else { 2..=2 }, 1)?;
            let (_, o, a, _) = cx.cylinders[0];
            let center = if blind { cx.open_end(o, a, cx.floor()?.0).0 } else { cx.through_end(o, a) };
            let floor = if blind { Some(cx.floor()?.0) } else { None };
            let (wall, wn) = cx.walls_except(floor)[0];
            let along = wn.cross(a).normalized();
            let length = face_span(solid, wall, along);
            d.push("Radius", cx.rim_radius(0, center, a));
            d.push("Length", length);
            d.push("Depth", cx.span(a));
            d.push("Center", center);
            Some(a)
        }
        21 => {
            cx.expect_counts(1..=1, 1)?;
            let (floor, _) = cx.floor()?;
            let (_, o, a, _) = cx.cylinders[0];
            let (c1, c2) = cx.open_end(o, a, floor);
            d.push("Radius", cx.rim_radius(0, c2, a));
            d.push("Depth", linear_distance(c1, c2));
            d.push("Center", c2);
            Some(a)
        }
        2 | 3 | 4 | 5 | 13 | 14 | 15 | 20 | 22 | 25 | 26 | 27 | 28 => {
            let through = matches!(c, 2..=5);
            cx.expect_counts(1..=7, 0)?;
            let a = if through {
                cx.wall_axis(&cx.planes)?
            } else {
                cx.floor()?.1
            };
            match c {
                2 | 5 | 13 | 26 => push_sides3(&mut d, sorted(cx.polygon_sides(a, 3)?)),
                3 | 14 | 25 | 22 => {
                    let s = sorted(cx.polygon_sides(a, 4)?);
                    d.push("Length", s[3]);
                    d.push("Width", s[0]);
                }
                4 | 15 | 27 => d.push("Side", mean(&cx.polygon_sides(a, 6)?)),
                28 => d.push("Side", mean(&cx.polygon_sides(a, 5)?)),
                _ => {
                    let s = sorted(cx.polygon_sides(a, 3)?);
                    d.push("Length", s[1]);
                    d.push("Width", s[0]);
                    d.push("Side", s[2]);
                }
            }
            d.push("Depth", cx.span(a));
            Some(a)
        }
        6 | 17 => {
            let blind = c == 17;
            cx.expect_counts(if blind { 4..=4 } else { 3..=3 }, 0)?;
            let floor = if blind { Some(cx.floor()?) } else { None };
            let walls = cx.walls_except(floor.map(|f| f.0));
            let normals: Vec<Vec3> = walls.iter().map(|w| w.1).collect();
            let a = match floor {
                Some((_, n)) => n,
                None => cx.wall_axis(&walls)?,
            };
            let end = normals
                .iter()
                .copied()
                .find(|n| normals.iter().filter(|m| n.cross(**m).norm() < PAR_TOL).count() == 1)
                .ok_or_else(|| cx.err("no end wall"))?;
            d.push("Length", cx.span(end));
            d.push("Width", cx.span(end.cross(a).normalized()));
            d.push("Depth", cx.span(a));
            Some(a)
        }
        8..=10 => {
            cx.expect_counts(1..=4, 0)?;
            let s = cx.wall_axis(&cx.planes)?;
            let dd = [Vec3::Z, Vec3::X, Vec3::Y]
                .into_iter()
                .find(|e| e.dot(s).abs() < PAR_TOL)
                .ok_or_else(|| cx.err("step runs along no coordinate axis"))?;
            let w = s.cross(dd);
            d.push("Length", cx.span(s));
            d.push("Width", cx.span(w));
            d.push("Depth", cx.span(dd));
            if c == 9 {
                staircase(&cx, dd, w, &mut d)?;
            }
            Some(dd)
        }
        _ => return Err(ExtractError::UnknownClass(c)),
    };
    Ok(Extraction { dims: d, axis, orientation: axis.map_or(Orientation::None, orientation_of_axis) })
}

fn push_sides3(d: &mut Dimensions, s: Vec<f64>) {
    d.push("Side-1", s[0]);
    d.push("Side-2", s[1]);
    d.push("Side-3", s[2]);
}

/// Inner step width of the deeper tread and depth of the shallower one.
fn staircase(cx: &Ctx, dd: Vec3, w: Vec3, d: &mut Dimensions) -> Result<(), ExtractError> {
    let treads: Vec<(usize, Vec3)> = cx.planes.iter().copied().filter(|(_, n)| n.cross(dd).norm() < PAR_TOL).collect();
    if treads.len() != 2 {
        return Err(cx.err(format!("expected two treads, found {}", treads.len())));
    }
    let (lo, hi) = cx.extent(dd);
    let opening = if treads[0].1.dot(dd) > 0.0 { hi } else { lo };
    let depth_of = |f: usize| (cx.plane_level(f, dd) - opening).abs();
    let (deep, shallow) =
        if depth_of(treads[0].0) > depth_of(treads[1].0) { (treads[0].0, treads[1].0) } else { (treads[1].0, treads[0].0) };
    d.push("Side-1", face_span(cx.solid, deep, w));
    d.push("Side-2", depth_of(shallow));
    Ok(())
}

fn neighbor_across(cx: &Ctx, f: usize, e: usize) -> Option<usize> {
    cx.solid.face_adjacency().get(&e).map(|&(a, b)| if a == f { b } else { a })
}

/// Setbacks measured from the bevel's long edges to the line where its two
/// oblique neighbours meet; the short edges border faces perpendicular to it.
fn chamfer(cx: &Ctx, d: &mut Dimensions) -> Result<(), ExtractError> {
    let (f, n) = cx.planes[0];
    let adj = cx.solid.face_adjacency();
    let mut sides = Vec::new();
    for oe in &cx.solid.faces[f].outer.edges {
        let &(a, b) = adj.get(&oe.edge).ok_or_else(|| cx.err("bevel edge is not shared"))?;
        let g = if a == f { b } else { a };
        let (o, _, _, m) = cx.solid.plane_frame(g).ok_or_else(|| cx.err("bevel meets a curved face"))?;
        if m.dot(n).abs() < PAR_TOL {
            continue;
        }
        let (p, q) = (cx.solid.edge_start(oe.edge), cx.solid.edge_end(oe.edge));
        sides.push((p, (q - p).normalized(), o.dot(m), m));
    }
    if sides.len() != 2 {
        return Err(cx.err(format!("expected two long bevel edges, found {}", sides.len())));
    }
    let s = sides[0].1;
    let (n1, c1, n2, c2) = (sides[0].3, sides[0].2, sides[1].3, sides[1].2);
    let q = meet(n1, c1, n2, c2, s).ok_or_else(|| cx.err("bevel neighbours are parallel"))?;
    let setback = |p: Vec3| {
        let v = p - q;
        (v - s * v.dot(s)).norm()
    };
    let sb = sorted(vec![setback(sides[0].0), setback(sides[1].0)]);
    d.push("Side-1", sb[0]);
    d.push("Side-2", sb[1]);
    d.push("Angle", angle_between(n, n1)?.to_degrees());
    Ok(())
}

fn round(cx: &Ctx, d: &mut Dimensions) -> Result<(), ExtractError> {
    let (f, _, _, r) = cx.cylinders[0];
    let mut blended = Vec::new();
    for oe in &cx.solid.faces[f].outer.edges {
        if cx.solid.edge_convexity(oe.edge)? == EdgeConvexity::Smooth {
            if let Some(g) = neighbor_across(cx, f, oe.edge) {
                blended.push(g);
            }
        }
    }
    blended.sort_unstable();
    blended.dedup();
    if blended.len() != 2 {
        return Err(cx.err(format!("round blends {} faces", blended.len())));
    }
    d.push("Radius", r);
    d.push("Face index", DimValue::Pair(blended[0], blended[1]));
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: [[f64; 3]; 3],
    pub translation: Vec3,
    pub scale: f64,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform { rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], translation: Vec3::ZERO, scale: 1.0 }
    }

    /// Rotation by `angle` about the unit vector `axis` (Rodrigues).
    pub fn rotation_about(axis: Vec3, angle: f64) -> Self {
        let k = axis.normalized();
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        let rotation = [
            [c + k.x * k.x * t, k.x * k.y * t - k.z * s, k.x * k.z * t + k.y * s],
            [k.y * k.x * t + k.z * s, c + k.y * k.y * t, k.y * k.z * t - k.x * s],
            [k.z * k.x * t - k.y * s, k.z * k.y * t + k.x * s, c + k.z * k.z * t],
        ];
        RigidTransform { rotation, ..Self::identity() }
    }

    fn rotate(&self, p: Vec3) -> Vec3 {
        let r = &self.rotation;
        Vec3::new(
            r[0][0] * p.x + r[0][1] * p.y + r[0][2] * p.z,
            r[1][0] * p.x + r[1][1] * p.y + r[1][2] * p.z,
            r[2][0] * p.x + r[2][1] * p.y + r[2][2] * p.z,
        )
    }

    pub fn validate(&self) -> Result<(), ExtractError> {
        let r = &self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                if (dot - if i == j { 1.0 } else { 0.0 }).abs() > 1e-12 {
                    return Err(ExtractError::InvalidArgument("rotation is not orthonormal".into()));
                }
            }
        }
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        if (det - 1.0).abs() > 1e-12 {
            return Err(ExtractError::InvalidArgument("rotation has determinant other than 1".into()));
        }
        if !(self.scale > 0.0) || !self.translation.is_finite() {
            return Err(ExtractError::InvalidArgument("scale must be positive and translation finite".into()));
        }
        Ok(())
    }

    /// `p' = s·R·p + t`.
    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.rotate(p) * self.scale + self.translation
    }

    /// Applies the transform to every vertex and surface or curve frame.
    pub fn apply_solid(&self, solid: &Solid) -> Result<Solid, ExtractError> {
        self.validate()?;
        let mut out = solid.clone();
        let s = self.scale;
        for v in &mut out.vertices {
            *v = self.apply(*v);
        }
        for e in &mut out.edges {
            match &mut e.curve {
                crate::brep::CurveKind::Line { point, direction } => {
                    *point = self.apply(*point);
                    *direction = self.rotate(*direction);
                }
                crate::brep::CurveKind::CircleArc { center, axis, ref_dir, radius } => {
                    *center = self.apply(*center);
                    *axis = self.rotate(*axis);
                    *ref_dir = self.rotate(*ref_dir);
                    *radius *= s;
                }
            }
        }
        for f in &mut out.faces {
            match &mut f.surface {
                SurfaceKind::Plane { origin, normal, ref_dir } => {
                    *origin = self.apply(*origin);
                    *normal = self.rotate(*normal);
                    *ref_dir = self.rotate(*ref_dir);
                }
                SurfaceKind::Cylinder { axis_origin, axis_dir, ref_dir, radius } => {
                    *axis_origin = self.apply(*axis_origin);
                    *axis_dir = self.rotate(*axis_dir);
                    *ref_dir = self.rotate(*ref_dir);
                    *radius *= s;
                }
            }
        }
        Ok(Solid::from_parts(out.vertices, out.edges, out.faces))
    }
}

pub fn apply_transform(points: &[Vec3], t: &RigidTransform) -> Result<Vec<Vec3>, ExtractError> {
    t.validate()?;
    Ok(points.iter().map(|&p| t.apply(p)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StockSizes {
    pub min_box: Aabb,
    pub max_box: Aabb,
}

impl StockSizes {
    pub fn min_dims(&self) -> Vec3 {
        self.min_box.dims()
    }

    pub fn max_dims(&self) -> Vec3 {
        self.max_box.dims()
    }
}

impl fmt::Display for StockSizes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = (self.min_dims(), self.max_dims());
        write!(
            f,
            "min [{} x {} x {}] max [{} x {} x {}]",
            fmt_size(a.x),
            fmt_size(a.y),
            fmt_size(a.z),
            fmt_size(b.x),
            fmt_size(b.y),
            fmt_size(b.z)
        )
    }
}

/// Bounding boxes over the triangulation: all vertices for the maximum
/// stock, and only vertices touching a non-additive face for the minimum.
pub fn stock_sizes(solid: &Solid, classes: &[u8]) -> Result<StockSizes, ExtractError> {
    let mesh = triangulate(solid, DEFAULT_ANGULAR_STEP)?;
    let additive = |f: usize| class(classes[f]).is_some_and(|c| c.additive);
    let mut keep = vec![false; mesh.points.len()];
    for (i, t) in mesh.facets.iter().enumerate() {
        if !additive(mesh.facet_face[i]) {
            for &k in t {
                keep[k] = true;
            }
        }
    }
    let max_box = Aabb::from_points(mesh.points.iter().copied());
    let min_box = Aabb::from_points(mesh.points.iter().zip(&keep).filter(|(_, &k)| k).map(|(p, _)| *p));
    Ok(StockSizes { min_box, max_box })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub instance_id: u32,
    pub class: u8,
    pub faces: Vec<usize>,
    pub result: Result<Extraction, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub rows: Vec<ReportRow>,
    pub stock: StockSizes,
}

/// Table row text: `Name (index) | dims | orientation`.
pub fn format_row(class_index: u8, dims: &Dimensions, orientation: Orientation) -> String {
    let name = class(class_index).map_or("Unknown", |c| c.display);
    format!("{name} ({class_index}) | {dims} | {orientation}")
}

impl fmt::Display for DimensionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rows {
            match &r.result {
                Ok(x) => writeln!(f, "{}", format_row(r.class, &x.dims, x.orientation))?,
                Err(e) => {
                    let name = class(r.class).map_or("Unknown", |c| c.display);
                    writeln!(f, "{name} ({}) | extraction mismatch: {e} | -", r.class)?
                }
            }
        }
        writeln!(f, "{}", self.stock)
    }
}

/// Groups faces into instances and extracts every one; failures are kept
/// as flagged rows.
pub fn extract_report(solid: &Solid, classes: &[u8]) -> Result<DimensionReport, ExtractError> {
    if classes.len() != solid.faces.len() {
        return Err(ExtractError::InvalidArgument(format!(
            "{} labels for {} faces",
            classes.len(),
            solid.faces.len()
        )));
    }
    let rows = group_instances(solid, classes)
        .into_iter()
        .map(|inst| {
            let result = extract_dimensions(solid, &inst).map_err(|e| e.to_string());
            ReportRow { instance_id: inst.instance_id, class: inst.class, faces: inst.faces, result }
        })
        .collect();
    Ok(DimensionReport { rows, stock: stock_sizes(solid, classes)? })
}

/// The report a perfect extraction produces for a generated model, with
/// rows in the order `extract_report` uses (lowest face index first).
pub fn truth_report(truth: &GroundTruth, labels: &[(u8, u32)]) -> DimensionReport {
    let mut rows: Vec<ReportRow> = truth
        .features
        .iter()
        .map(|f| ReportRow {
            instance_id: f.instance_id,
            class: f.class,
            faces: (0..labels.len()).filter(|&i| labels[i].1 == f.instance_id).collect(),
            result: Ok(Extraction { dims: f.dims.clone(), axis: f.axis, orientation: f.orientation }),
        })
        .collect();
    rows.sort_by_key(|r| r.faces.first().copied().unwrap_or(usize::MAX));
    for (i, r) in rows.iter_mut().enumerate() {
        r.instance_id = i as u32 + 1;
    }
    let boxed = |d: Vec3| Aabb::from_points([Vec3::ZERO, d]);
    DimensionReport { rows, stock: StockSizes { min_box: boxed(truth.min_stock), max_box: boxed(truth.max_stock) } }
}

/// Per-class instance counts of a report, keyed by class index.
pub fn class_histogram(report: &DimensionReport) -> BTreeMap<u8, usize> {
    let mut m = BTreeMap::new();
    for r in &report.rows {
        *m.entry(r.class).or_insert(0) += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn distances_and_angles() {
        assert_eq!(linear_distance(Vec3::ZERO, Vec3::new(3.0, 4.0, 0.0)), 5.0);
        assert!((angle_between(Vec3::X, Vec3::Y).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((angle_between(Vec3::X, Vec3::new(1.0, 1.0, 0.0)).unwrap() - PI / 4.0).abs() < 1e-15);
        assert_eq!(angle_between(Vec3::new(1.0, 1e-9, 0.0), Vec3::new(1.0, 1e-9, 0.0)).unwrap(), 0.0);
        assert!(angle_between(Vec3::ZERO, Vec3::X).is_err());
        assert_eq!(circle_radius(Vec3::ZERO, Vec3::new(3.0, 4.0, 7.0), Vec3::Z), 5.0);
    }

    #[test]
    fn axis_preference() {
        assert_eq!(orientation_of_axis(Vec3::new(0.0, 0.0, -1.0)), Orientation::Upright);
        assert_eq!(orientation_of_axis(Vec3::new(0.0, 1.0, 0.0)), Orientation::Tilted);
        assert_eq!(dominant_axis(Vec3::new(1.0, 1.0, 1.0)), 2);
        assert_eq!(dominant_axis(Vec3::new(1.0, 1.0, 0.0)), 0);
    }

    #[test]
    fn number_formats() {
        assert_eq!(fmt_dim(25.0), "25.0");
        assert_eq!(fmt_dim(5.9234), "5.92");
        assert_eq!(fmt_dim(5.3), "5.3");
        assert_eq!(fmt_dim(-40.2449), "-40.24");
        assert_eq!(fmt_size(25.0), "25");
        assert_eq!(fmt_size(131.812), "131.81");
    }

    #[test]
    fn table_row_shape() {
        let mut d = Dimensions::default();
        d.push("Radius", 5.92);
        d.push("Depth", 25.0);
        d.push("Center", Vec3::new(-40.24, 10.48, 25.0));
        assert_eq!(
            format_row(12, &d, Orientation::Upright),
            "Blind Hole (12) | Radius = 5.92, Depth = 25.0, Center = (-40.24, 10.48, 25.0) | Upright"
        );
        let mut r = Dimensions::default();
        r.push("Radius", 5.0);
        r.push("Face index", DimValue::Pair(6, 6));
        assert_eq!(format_row(23, &r, Orientation::None), "Round (23) | Radius = 5.0, Face index (6, 6) | None");
    }

    #[test]
    fn stock_line_shape() {
        let s = StockSizes {
            min_box: Aabb::from_points([Vec3::ZERO, Vec3::new(131.81, 69.69, 25.0)]),
            max_box: Aabb::from_points([Vec3::ZERO, Vec3::new(131.81, 69.69, 39.0)]),
        };
        assert_eq!(s.to_string(), "min [131.81 x 69.69 x 25] max [131.81 x 69.69 x 39]");
    }
}
