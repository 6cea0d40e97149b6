//! 2-D sketch profiles (lines and circular arcs) and the planar region
//! arithmetic used to cut footprints out of stock faces.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::geom::Vec2;

/// Tolerance for matching 2-D points produced by different constructions.
pub const POINT_TOL: f64 = 1e-7;

/// One boundary segment of a planar sketch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Seg2 {
    Line { a: Vec2, b: Vec2 },
    /// Circular arc from `a` to `b`; a full circle when `a == b`.
    Arc { center: Vec2, radius: f64, a: Vec2, b: Vec2, ccw: bool },
}

impl Seg2 {
    pub fn line(a: Vec2, b: Vec2) -> Self {
        Seg2::Line { a, b }
    }

    pub fn arc(center: Vec2, radius: f64, a: Vec2, b: Vec2, ccw: bool) -> Self {
        Seg2::Arc { center, radius, a, b, ccw }
    }

    pub fn circle(center: Vec2, radius: f64) -> Self {
        let a = Vec2::new(center.x + radius, center.y);
        Seg2::Arc { center, radius, a, b: a, ccw: true }
    }

    pub fn start(&self) -> Vec2 {
        match *self {
            Seg2::Line { a, .. } | Seg2::Arc { a, .. } => a,
        }
    }

    pub fn end(&self) -> Vec2 {
        match *self {
            Seg2::Line { b, .. } | Seg2::Arc { b, .. } => b,
        }
    }

    pub fn is_full_circle(&self) -> bool {
        matches!(*self, Seg2::Arc { a, b, .. } if a == b)
    }

    pub fn reversed(&self) -> Self {
        match *self {
            Seg2::Line { a, b } => Seg2::Line { a: b, b: a },
            Seg2::Arc { center, radius, a, b, ccw } => Seg2::Arc { center, radius, a: b, b: a, ccw: !ccw },
        }
    }

    /// Signed swept angle of an arc (positive counter-clockwise); zero for lines.
    pub fn sweep(&self) -> f64 {
        match *self {
            Seg2::Line { .. } => 0.0,
            Seg2::Arc { center, a, b, ccw, .. } => {
                if a == b {
                    return if ccw { TAU } else { -TAU };
                }
                let t0 = (a.y - center.y).atan2(a.x - center.x);
                let t1 = (b.y - center.y).atan2(b.x - center.x);
                let mut d = t1 - t0;
                if ccw {
                    while d <= 0.0 {
                        d += TAU;
                    }
                } else {
                    while d >= 0.0 {
                        d -= TAU;
                    }
                }
                d
            }
        }
    }

    pub fn start_angle(&self) -> f64 {
        match *self {
            Seg2::Line { .. } => 0.0,
            Seg2::Arc { center, a, .. } => (a.y - center.y).atan2(a.x - center.x),
        }
    }

    /// Point at parameter `t` in [0, 1].
    pub fn point_at(&self, t: f64) -> Vec2 {
        match *self {
            Seg2::Line { a, b } => a + (b - a) * t,
            Seg2::Arc { center, radius, .. } => {
                let th = self.start_angle() + self.sweep() * t;
                Vec2::new(center.x + radius * th.cos(), center.y + radius * th.sin())
            }
        }
    }

    pub fn midpoint(&self) -> Vec2 {
        self.point_at(0.5)
    }

    /// Contribution of this segment to the signed area `1/2 ∮ (x dy - y dx)`.
    pub fn area_term(&self) -> f64 {
        match *self {
            Seg2::Line { a, b } => 0.5 * a.cross(b),
            Seg2::Arc { center, radius, .. } => {
                let t0 = self.start_angle();
                let t1 = t0 + self.sweep();
                let (cx, cy, r) = (center.x, center.y, radius);
                0.5 * (r * cx * (t1.sin() - t0.sin()) - r * cy * (t1.cos() - t0.cos()) + r * r * (t1 - t0))
            }
        }
    }

    /// Contributions to (∬ x dA, ∬ y dA) via `∮ x²/2 dy` and `-∮ y²/2 dx`.
    pub fn moment_terms(&self) -> (f64, f64) {
        match *self {
            Seg2::Line { a, b } => {
                let dy = b.y - a.y;
                let dx = b.x - a.x;
                let mx = dy * (a.x * a.x + a.x * b.x + b.x * b.x) / 6.0;
                let my = -dx * (a.y * a.y + a.y * b.y + b.y * b.y) / 6.0;
                (mx, my)
            }
            Seg2::Arc { center, radius, .. } => {
                let t0 = self.start_angle();
                let t1 = t0 + self.sweep();
                let (cx, cy, r) = (center.x, center.y, radius);
                let icos = |t: f64| t.sin();
                let icos2 = |t: f64| t / 2.0 + (2.0 * t).sin() / 4.0;
                let icos3 = |t: f64| t.sin() - t.sin().powi(3) / 3.0;
                let isin = |t: f64| -t.cos();
                let isin2 = |t: f64| t / 2.0 - (2.0 * t).sin() / 4.0;
                let isin3 = |t: f64| -t.cos() + t.cos().powi(3) / 3.0;
                let mx = 0.5
                    * r
                    * (cx * cx * (icos(t1) - icos(t0))
                        + 2.0 * cx * r * (icos2(t1) - icos2(t0))
                        + r * r * (icos3(t1) - icos3(t0)));
                let my = 0.5
                    * r
                    * (cy * cy * (isin(t1) - isin(t0))
                        + 2.0 * cy * r * (isin2(t1) - isin2(t0))
                        + r * r * (isin3(t1) - isin3(t0)));
                (mx, my)
            }
        }
    }

    /// Polyline approximation (including the start, excluding the end).
    pub fn sample(&self, n: usize) -> Vec<Vec2> {
        match self {
            Seg2::Line { a, .. } => vec![*a],
            Seg2::Arc { .. } => (0..n).map(|i| self.point_at(i as f64 / n as f64)).collect(),
        }
    }

    /// Axis-aligned bounds (exact for arcs).
    pub fn bounds(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(self.start().x.min(self.end().x), self.start().y.min(self.end().y));
        let mut hi = Vec2::new(self.start().x.max(self.end().x), self.start().y.max(self.end().y));
        if let Seg2::Arc { center, radius, .. } = *self {
            let t0 = self.start_angle();
            let sw = self.sweep();
            for k in 0..4 {
                let ang = k as f64 * PI / 2.0;
                let mut rel = ang - t0;
                if sw > 0.0 {
                    rel = rel.rem_euclid(TAU);
                    if rel > sw {
                        continue;
                    }
                } else {
                    rel = (-rel).rem_euclid(TAU);
                    if rel > -sw {
                        continue;
                    }
                }
                let p = Vec2::new(center.x + radius * ang.cos(), center.y + radius * ang.sin());
                lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
                hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
            }
        }
        (lo, hi)
    }
}

pub type Loop2 = Vec<Seg2>;

pub fn loop_area(l: &[Seg2]) -> f64 {
    l.iter().map(Seg2::area_term).sum()
}

pub fn reverse_loop(l: &[Seg2]) -> Loop2 {
    l.iter().rev().map(Seg2::reversed).collect()
}

pub fn polyline(l: &[Seg2]) -> Vec<Vec2> {
    l.iter().flat_map(|s| s.sample(32)).collect()
}

/// Even-odd point containment against a polygonized loop.
pub fn point_in_loop(p: Vec2, l: &[Seg2]) -> bool {
    let poly = polyline(l);
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// A closed sketch: the first loop bounds the region counter-clockwise, any
/// further loops are holes running clockwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub loops: Vec<Loop2>,
}

impl Profile {
    /// Builds a profile from loops, fixing orientation so the first loop is
    /// counter-clockwise and the rest clockwise.
    pub fn new(loops: Vec<Loop2>) -> Self {
        let loops = loops
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                let a = loop_area(&l);
                if (i == 0) == (a < 0.0) {
                    reverse_loop(&l)
                } else {
                    l
                }
            })
            .collect();
        Profile { loops }
    }

    pub fn polygon(pts: &[Vec2]) -> Self {
        let n = pts.len();
        let l = (0..n).map(|i| Seg2::line(pts[i], pts[(i + 1) % n])).collect();
        Profile::new(vec![l])
    }

    pub fn circle(center: Vec2, radius: f64) -> Self {
        Profile::new(vec![vec![Seg2::circle(center, radius)]])
    }

    pub fn regular_polygon(center: Vec2, circumradius: f64, sides: usize, rotation: f64) -> Self {
        let pts: Vec<Vec2> = (0..sides)
            .map(|k| {
                let t = rotation + TAU * k as f64 / sides as f64;
                Vec2::new(center.x + circumradius * t.cos(), center.y + circumradius * t.sin())
            })
            .collect();
        Profile::polygon(&pts)
    }

    pub fn area(&self) -> f64 {
        self.loops.iter().map(|l| loop_area(l)).sum()
    }

    pub fn segments(&self) -> impl Iterator<Item = &Seg2> {
        self.loops.iter().flatten()
    }

    pub fn bounds(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for s in self.segments() {
            let (a, b) = s.bounds();
            lo = Vec2::new(lo.x.min(a.x), lo.y.min(a.y));
            hi = Vec2::new(hi.x.max(b.x), hi.y.max(b.y));
        }
        (lo, hi)
    }
}

/// A connected planar region: one outer loop (CCW) and its holes (CW).
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub outer: Loop2,
    pub holes: Vec<Loop2>,
}

/// Which side of the rectangle `[0,w] x [0,h]` a line segment lies on:
/// 0 = `y=0`, 1 = `x=w`, 2 = `y=h`, 3 = `x=0`.
pub fn rect_side_of(seg: &Seg2, w: f64, h: f64) -> Option<usize> {
    let (a, b) = match *seg {
        Seg2::Line { a, b } => (a, b),
        Seg2::Arc { .. } => return None,
    };
    let on = |v: f64, t: f64| (v - t).abs() <= POINT_TOL;
    if on(a.y, 0.0) && on(b.y, 0.0) {
        Some(0)
    } else if on(a.x, w) && on(b.x, w) {
        Some(1)
    } else if on(a.y, h) && on(b.y, h) {
        Some(2)
    } else if on(a.x, 0.0) && on(b.x, 0.0) {
        Some(3)
    } else {
        None
    }
}

fn on_rect_side(p: Vec2, side: usize, w: f64, h: f64) -> bool {
    match side {
        0 => p.y.abs() <= POINT_TOL,
        1 => (p.x - w).abs() <= POINT_TOL,
        2 => (p.y - h).abs() <= POINT_TOL,
        _ => p.x.abs() <= POINT_TOL,
    }
}

/// Computes `rect − ∪ footprints` for pairwise disjoint footprints lying in the
/// closed rectangle `[0,w] x [0,h]`. Each footprint is given as oriented loops
/// (outer CCW, holes CW). Footprint boundary segments lying on the rectangle
/// edge are treated as open; all others become boundaries of the result.
pub fn subtract_footprints(w: f64, h: f64, footprints: &[Vec<Loop2>]) -> Result<Vec<Region>, String> {
    let corners = [Vec2::new(0.0, 0.0), Vec2::new(w, 0.0), Vec2::new(w, h), Vec2::new(0.0, h)];
    let mut boundary_segs: Vec<Seg2> = Vec::new();
    let mut open_segs: Vec<(usize, Seg2)> = Vec::new();
    for fp in footprints {
        for l in fp {
            for s in l {
                match rect_side_of(s, w, h) {
                    Some(side) => open_segs.push((side, *s)),
                    None => boundary_segs.push(s.reversed()),
                }
            }
        }
    }

    let mut segs: Vec<Seg2> = Vec::new();
    for side in 0..4 {
        let a = corners[side];
        let b = corners[(side + 1) % 4];
        let dir = b - a;
        let len = dir.norm();
        let mut ts = vec![0.0, 1.0];
        for fp in footprints {
            for s in fp.iter().flatten() {
                for p in [s.start(), s.end()] {
                    if on_rect_side(p, side, w, h) {
                        let t = (p - a).dot(dir) / (len * len);
                        if t > POINT_TOL / len && t < 1.0 - POINT_TOL / len {
                            ts.push(t);
                        }
                    }
                }
            }
        }
        ts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        ts.dedup_by(|x, y| (*x - *y).abs() * len <= POINT_TOL);
        // Snap split points to the exact footprint vertex coordinates.
        let snap = |t: f64| -> Vec2 {
            let p = a + dir * t;
            for fp in footprints {
                for s in fp.iter().flatten() {
                    for q in [s.start(), s.end()] {
                        if q.approx_eq(p, POINT_TOL) {
                            return q;
                        }
                    }
                }
            }
            if t == 0.0 {
                a
            } else if t == 1.0 {
                b
            } else {
                p
            }
        };
        for k in 0..ts.len() - 1 {
            let p0 = if k == 0 { a } else { snap(ts[k]) };
            let p1 = if k + 2 == ts.len() { b } else { snap(ts[k + 1]) };
            let mid = (p0 + p1) * 0.5;
            let covered = open_segs.iter().any(|(sd, s)| {
                *sd == side && {
                    let (sa, sb) = (s.start(), s.end());
                    let d = sb - sa;
                    let t = (mid - sa).dot(d) / d.dot(d);
                    t > 0.0 && t < 1.0
                }
            });
            if !covered {
                segs.push(Seg2::line(p0, p1));
            }
        }
    }
    segs.extend(boundary_segs);

    // Chain segments end-to-start into closed loops.
    let mut used = vec![false; segs.len()];
    let mut loops: Vec<Loop2> = Vec::new();
    for first in 0..segs.len() {
        if used[first] {
            continue;
        }
        used[first] = true;
        let start = segs[first].start();
        let mut cur = vec![segs[first]];
        let mut end = segs[first].end();
        let mut guard = 0;
        while !end.approx_eq(start, POINT_TOL) {
            let next = (0..segs.len()).find(|&i| !used[i] && segs[i].start().approx_eq(end, POINT_TOL));
            let Some(i) = next else {
                return Err(format!("open region boundary at ({}, {})", end.x, end.y));
            };
            used[i] = true;
            cur.push(segs[i]);
            end = segs[i].end();
            guard += 1;
            if guard > segs.len() {
                return Err("region chaining did not terminate".into());
            }
        }
        loops.push(cur);
    }

    let mut regions: Vec<Region> = Vec::new();
    let mut holes: Vec<Loop2> = Vec::new();
    for l in loops {
        let a = loop_area(&l);
        if a.abs() < 1e-12 {
            return Err("degenerate region loop".into());
        }
        if a > 0.0 {
            regions.push(Region { outer: l, holes: Vec::new() });
        } else {
            holes.push(l);
        }
    }
    for hole in holes {
        let probe = hole[0].start();
        let mut best: Option<(usize, f64)> = None;
        for (i, r) in regions.iter().enumerate() {
            if point_in_loop(probe, &r.outer) {
                let a = loop_area(&r.outer);
                if best.is_none_or(|(_, ba)| a < ba) {
                    best = Some((i, a));
                }
            }
        }
        match best {
            Some((i, _)) => regions[i].holes.push(hole),
            None => return Err("hole loop outside every region".into()),
        }
    }
    Ok(regions)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_area_and_moments() {
        let c = Seg2::circle(Vec2::new(3.0, 4.0), 2.0);
        assert!((c.area_term() - PI * 4.0).abs() < 1e-12);
        let (mx, my) = c.moment_terms();
        assert!((mx / (PI * 4.0) - 3.0).abs() < 1e-12);
        assert!((my / (PI * 4.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rectangle_moments_give_centroid() {
        let p = Profile::polygon(&[
            Vec2::new(0.0, 0.0),
            Vec2::new(50.0, 0.0),
            Vec2::new(50.0, 40.0),
            Vec2::new(0.0, 40.0),
        ]);
        let l = &p.loops[0];
        let a = loop_area(l);
        let (mx, my) = l.iter().fold((0.0, 0.0), |acc, s| {
            let (x, y) = s.moment_terms();
            (acc.0 + x, acc.1 + y)
        });
        assert!((a - 2000.0).abs() < 1e-9);
        assert!((mx / a - 25.0).abs() < 1e-12);
        assert!((my / a - 20.0).abs() < 1e-12);
    }

    #[test]
    fn clockwise_quarter_arc_sweep() {
        let s = Seg2::arc(Vec2::new(5.0, 5.0), 5.0, Vec2::new(5.0, 0.0), Vec2::new(0.0, 5.0), false);
        assert!((s.sweep() + PI / 2.0).abs() < 1e-12);
        let m = s.midpoint();
        assert!((m.dist(Vec2::new(5.0, 5.0)) - 5.0).abs() < 1e-12);
        assert!(m.x < 5.0 && m.y < 5.0);
    }

    #[test]
    fn inner_hole_becomes_hole() {
        let fp = Profile::circle(Vec2::new(10.0, 10.0), 3.0);
        let regions = subtract_footprints(30.0, 20.0, &[fp.loops]).unwrap();
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].holes.len(), 1);
        let area = loop_area(&regions[0].outer) + loop_area(&regions[0].holes[0]);
        assert!((area - (600.0 - 9.0 * PI)).abs() < 1e-9);
    }

    #[test]
    fn strip_across_splits_region() {
        let fp = Profile::polygon(&[
            Vec2::new(10.0, 0.0),
            Vec2::new(14.0, 0.0),
            Vec2::new(14.0, 20.0),
            Vec2::new(10.0, 20.0),
        ]);
        let regions = subtract_footprints(30.0, 20.0, &[fp.loops]).unwrap();
        assert_eq!(regions.len(), 2);
        let total: f64 = regions.iter().map(|r| loop_area(&r.outer)).sum();
        assert!((total - 520.0).abs() < 1e-9);
    }

    #[test]
    fn corner_notch_adds_detour() {
        let fp = Profile::polygon(&[
            Vec2::new(0.0, 0.0),
            Vec2::new(5.0, 0.0),
            Vec2::new(5.0, 4.0),
            Vec2::new(0.0, 4.0),
        ]);
        let regions = subtract_footprints(30.0, 20.0, &[fp.loops]).unwrap();
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].outer.len(), 6);
        assert!((loop_area(&regions[0].outer) - 580.0).abs() < 1e-9);
    }
}
