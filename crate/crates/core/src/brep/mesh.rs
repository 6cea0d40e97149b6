//! Triangulation of solids: ear clipping for planar faces and a parameter
//! grid for cylinder patches. Edge discretizations are shared between the
//! two faces of every edge, so the result is watertight.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use super::{BrepError, CurveKind, FaceId, Solid, SurfaceKind};
use crate::geom::{angle_in_frame, Point3, Vec2, Vec3};

pub const DEFAULT_ANGULAR_STEP: f64 = PI / 12.0;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriMesh {
    pub points: Vec<Point3>,
    pub facets: Vec<[usize; 3]>,
    /// Parent B-Rep face of every facet.
    pub facet_face: Vec<FaceId>,
}

impl TriMesh {
    /// Cross product of the facet edges (twice the area, along the normal).
    fn facet_cross(&self, i: usize) -> Vec3 {
        let [a, b, c] = self.facets[i].map(|k| self.points[k]);
        (b - a).cross(c - a)
    }

    pub fn facet_normal(&self, i: usize) -> Vec3 {
        self.facet_cross(i).normalized()
    }

    pub fn facet_area(&self, i: usize) -> f64 {
        0.5 * self.facet_cross(i).norm()
    }

    pub fn facet_centroid(&self, i: usize) -> Point3 {
        let [a, b, c] = self.facets[i].map(|k| self.points[k]);
        (a + b + c) / 3.0
    }

    /// Divergence-theorem volume; positive for outward-oriented meshes.
    pub fn signed_volume(&self) -> f64 {
        self.facets
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|k| self.points[k]);
                a.dot(b.cross(c))
            })
            .sum::<f64>()
            / 6.0
    }

    fn directed_edge_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut m = HashMap::new();
        for f in &self.facets {
            for k in 0..3 {
                *m.entry((f[k], f[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        m
    }

    /// Every mesh edge is shared by exactly two facets with opposite
    /// orientation.
    pub fn is_watertight(&self) -> bool {
        let m = self.directed_edge_counts();
        m.iter().all(|(&(a, b), &c)| c == 1 && m.get(&(b, a)) == Some(&1))
    }

    /// Facets sharing a mesh edge, sorted per facet.
    pub fn facet_adjacency(&self) -> Vec<Vec<usize>> {
        let mut by_edge: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (i, f) in self.facets.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                by_edge.entry((a.min(b), a.max(b))).or_default().push(i);
            }
        }
        let mut adj = vec![Vec::new(); self.facets.len()];
        for fs in by_edge.values() {
            for &x in fs {
                for &y in fs {
                    if x != y {
                        adj[x].push(y);
                    }
                }
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }
}

/// Triangulates every face of `solid`. Arcs are split into segments of at
/// most `angular_step` radians.
pub fn triangulate(solid: &Solid, angular_step: f64) -> Result<TriMesh, BrepError> {
    if !(angular_step > 0.0) {
        return Err(BrepError::InvalidArgument(format!("angular step must be positive, got {angular_step}")));
    }
    let step = angular_step.min(FRAC_PI_2);
    let mut mesh = TriMesh { points: solid.vertices.clone(), ..Default::default() };
    let polylines: Vec<Vec<usize>> = (0..solid.edges.len())
        .map(|e| {
            let edge = &solid.edges[e];
            match edge.curve {
                CurveKind::Line { .. } => vec![edge.start, edge.end],
                CurveKind::CircleArc { .. } => {
                    let n = ((solid.arc_sweep(e) / step) - 1e-9).ceil().max(1.0) as usize;
                    let mut ids = vec![edge.start];
                    for k in 1..n {
                        mesh.points.push(solid.edge_point(e, k as f64 / n as f64));
                        ids.push(mesh.points.len() - 1);
                    }
                    ids.push(edge.end);
                    ids
                }
            }
        })
        .collect();

    for f in 0..solid.faces.len() {
        let tris = match solid.faces[f].surface {
            SurfaceKind::Plane { .. } => planar_face(solid, f, &polylines, &mesh.points)?,
            SurfaceKind::Cylinder { .. } => cylinder_face(solid, f, &polylines, &mesh.points)?,
        };
        if tris.is_empty() {
            return Err(BrepError::Mesh(format!("face {f} produced no facets")));
        }
        for t in tris {
            mesh.facets.push(t);
            mesh.facet_face.push(f);
        }
    }
    Ok(mesh)
}

/// Point ids around a loop, each edge contributing all but its last point.
fn loop_ids(solid: &Solid, l: &super::Loop, polylines: &[Vec<usize>]) -> Vec<usize> {
    let mut ids = Vec::new();
    for oe in &l.edges {
        let p = &polylines[oe.edge];
        if oe.forward {
            ids.extend_from_slice(&p[..p.len() - 1]);
        } else {
            ids.extend(p[1..].iter().rev());
        }
    }
    let _ = solid;
    ids
}

fn planar_face(solid: &Solid, f: FaceId, polylines: &[Vec<usize>], points: &[Point3]) -> Result<Vec<[usize; 3]>, BrepError> {
    let (origin, e1, e2, _) = solid.plane_frame(f).unwrap();
    let face = &solid.faces[f];
    let loops: Vec<Vec<usize>> = face.loops().map(|l| loop_ids(solid, l, polylines)).collect();
    let to2 = |i: usize| {
        let d = points[i] - origin;
        Vec2::new(d.dot(e1), d.dot(e2))
    };
    let mut local_pts = Vec::new();
    let mut global = Vec::new();
    let mut local_loops = Vec::new();
    for l in &loops {
        let mut ll = Vec::new();
        for &i in l {
            ll.push(local_pts.len());
            local_pts.push(to2(i));
            global.push(i);
        }
        local_loops.push(ll);
    }
    let outer = local_loops.remove(0);
    let tris = ear_clip(&local_pts, outer, local_loops).map_err(|e| BrepError::Mesh(format!("face {f}: {e}")))?;
    Ok(tris.into_iter().map(|t| t.map(|k| global[k])).collect())
}

fn cylinder_face(solid: &Solid, f: FaceId, polylines: &[Vec<usize>], points: &[Point3]) -> Result<Vec<[usize; 3]>, BrepError> {
    let face = &solid.faces[f];
    let SurfaceKind::Cylinder { axis_origin, axis_dir, ref_dir, .. } = face.surface else { unreachable!() };
    if !face.inners.is_empty() {
        return Err(BrepError::Mesh(format!("cylinder face {f} has inner loops")));
    }
    let e2 = axis_dir.cross(ref_dir);
    let mut walk: Vec<(usize, f64, f64)> = Vec::new();
    let mut prev: Option<f64> = None;
    for oe in &face.outer.edges {
        let p = &polylines[oe.edge];
        let ids: Vec<usize> = if oe.forward { p.clone() } else { p.iter().rev().copied().collect() };
        for &i in &ids {
            let d = points[i] - axis_origin;
            let mut t = angle_in_frame(d, ref_dir, e2);
            if let Some(q) = prev {
                t += ((q - t) / TAU).round() * TAU;
            }
            prev = Some(t);
            walk.push((i, t, d.dot(axis_dir)));
        }
    }
    let (h0, h1) = walk.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), w| (a.min(w.2), b.max(w.2)));
    if !(h1 - h0 > 1e-12) {
        return Err(BrepError::Mesh(format!("cylinder face {f} has zero height")));
    }
    let mut rows: [Vec<(f64, usize)>; 2] = [Vec::new(), Vec::new()];
    for (i, t, h) in walk {
        let r = usize::from((h - h0).abs() > (h - h1).abs());
        rows[r].push((t, i));
    }
    for r in &mut rows {
        r.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        r.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-9);
    }
    let [lo, hi] = rows;
    if lo.len() != hi.len() || lo.len() < 2 || lo.iter().zip(&hi).any(|(a, b)| (a.0 - b.0).abs() > 1e-6) {
        return Err(BrepError::Mesh(format!("cylinder face {f} boundary is not a parameter rectangle")));
    }
    let mut tris = Vec::new();
    for k in 0..lo.len() - 1 {
        let (b0, b1, t0, t1) = (lo[k].1, lo[k + 1].1, hi[k].1, hi[k + 1].1);
        for tri in [[b0, b1, t1], [b0, t1, t0]] {
            let [a, b, c] = tri.map(|i| points[i]);
            let n = (b - a).cross(c - a);
            let out = solid.face_normal_at(f, (a + b + c) / 3.0);
            tris.push(if n.dot(out) >= 0.0 { tri } else { [tri[0], tri[2], tri[1]] });
        }
    }
    Ok(tris)
}

fn cross3(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

fn poly_area(pts: &[Vec2], idx: &[usize]) -> f64 {
    let n = idx.len();
    (0..n).map(|i| pts[idx[i]].cross(pts[idx[(i + 1) % n]])).sum::<f64>() * 0.5
}

/// Proper or touching intersection of segments `p1p2` and `q1q2`, ignoring
/// contacts at shared endpoints.
fn segments_hit(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2, eps: f64) -> bool {
    let same = |a: Vec2, b: Vec2| a.approx_eq(b, 1e-12);
    if same(p1, q1) || same(p1, q2) || same(p2, q1) || same(p2, q2) {
        return false;
    }
    let d1 = cross3(q1, q2, p1);
    let d2 = cross3(q1, q2, p2);
    let d3 = cross3(p1, p2, q1);
    let d4 = cross3(p1, p2, q2);
    if ((d1 > eps && d2 < -eps) || (d1 < -eps && d2 > eps)) && ((d3 > eps && d4 < -eps) || (d3 < -eps && d4 > eps)) {
        return true;
    }
    let on = |a: Vec2, b: Vec2, p: Vec2, d: f64| {
        d.abs() <= eps && (p - a).dot(b - a) > 0.0 && (p - b).dot(a - b) > 0.0
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

/// Triangulates a counter-clockwise outer polygon with clockwise holes.
/// Returns triangles as index triples into `pts`.
pub fn ear_clip(pts: &[Vec2], outer: Vec<usize>, holes: Vec<Vec<usize>>) -> Result<Vec<[usize; 3]>, String> {
    let scale = pts.iter().fold(1.0f64, |m, p| m.max(p.x.abs()).max(p.y.abs()));
    let eps = 1e-12 * scale * scale;
    let expected = poly_area(pts, &outer) + holes.iter().map(|h| poly_area(pts, h)).sum::<f64>();
    if poly_area(pts, &outer) <= eps || outer.len() < 3 {
        return Err("degenerate outer loop".into());
    }
    for h in &holes {
        if poly_area(pts, h) >= -eps || h.len() < 3 {
            return Err("degenerate inner loop".into());
        }
    }
    let poly = bridge_holes(pts, outer, holes, eps)?;
    let tris = clip(pts, poly, eps)?;
    let got: f64 = tris.iter().map(|t| 0.5 * cross3(pts[t[0]], pts[t[1]], pts[t[2]])).sum();
    if (got - expected).abs() > 1e-9 * expected.abs().max(1.0) {
        return Err(format!("triangulated area {got} differs from loop area {expected}"));
    }
    Ok(tris)
}

fn bridge_holes(pts: &[Vec2], mut poly: Vec<usize>, mut holes: Vec<Vec<usize>>, eps: f64) -> Result<Vec<usize>, String> {
    let rightmost = |h: &[usize]| -> usize {
        (0..h.len())
            .max_by(|&a, &b| {
                let (pa, pb) = (pts[h[a]], pts[h[b]]);
                pa.x.partial_cmp(&pb.x).unwrap().then(pb.y.partial_cmp(&pa.y).unwrap())
            })
            .unwrap()
    };
    holes.sort_by(|a, b| pts[b[rightmost(b)]].x.partial_cmp(&pts[a[rightmost(a)]].x).unwrap());
    while !holes.is_empty() {
        let hole = holes.remove(0);
        let hm = rightmost(&hole);
        let m = pts[hole[hm]];
        let mut cands: Vec<usize> = (0..poly.len()).collect();
        cands.sort_by(|&a, &b| pts[poly[a]].dist(m).partial_cmp(&pts[poly[b]].dist(m)).unwrap());
        let n = poly.len();
        let edges_clear = |p: Vec2| -> bool {
            let ring = |l: &[usize]| (0..l.len()).all(|k| !segments_hit(p, m, pts[l[k]], pts[l[(k + 1) % l.len()]], eps));
            ring(&poly) && ring(&hole) && holes.iter().all(|h| ring(h))
        };
        let mut chosen = None;
        for strict in [true, false] {
            chosen = cands.iter().copied().find(|&i| {
                let p = pts[poly[i]];
                if p.approx_eq(m, 1e-12) {
                    return false;
                }
                let a = pts[poly[(i + n - 1) % n]];
                let b = pts[poly[(i + 1) % n]];
                let left = |u: Vec2, v: Vec2| if strict { cross3(u, v, m) > eps } else { cross3(u, v, m) >= -eps };
                let inside = if cross3(a, p, b) >= 0.0 { left(a, p) && left(p, b) } else { left(a, p) || left(p, b) };
                inside && edges_clear(p)
            });
            if chosen.is_some() {
                break;
            }
        }
        let i = chosen.ok_or("no visible bridge for inner loop")?;
        let mut next = Vec::with_capacity(poly.len() + hole.len() + 2);
        next.extend_from_slice(&poly[..=i]);
        for k in 0..=hole.len() {
            next.push(hole[(hm + k) % hole.len()]);
        }
        next.push(poly[i]);
        next.extend_from_slice(&poly[i + 1..]);
        poly = next;
    }
    Ok(poly)
}

fn clip(pts: &[Vec2], mut poly: Vec<usize>, eps: f64) -> Result<Vec<[usize; 3]>, String> {
    let mut tris = Vec::with_capacity(poly.len());
    let mut start = 0;
    while poly.len() > 3 {
        let n = poly.len();
        let mut found = None;
        for off in 0..n {
            let i = (start + off) % n;
            let (ia, ib, ic) = (poly[(i + n - 1) % n], poly[i], poly[(i + 1) % n]);
            let (a, b, c) = (pts[ia], pts[ib], pts[ic]);
            if cross3(a, b, c) <= eps {
                continue;
            }
            let blocked = poly.iter().any(|&j| {
                let p = pts[j];
                if p.approx_eq(a, 1e-12) || p.approx_eq(b, 1e-12) || p.approx_eq(c, 1e-12) {
                    return false;
                }
                cross3(a, b, p) >= -eps && cross3(b, c, p) >= -eps && cross3(c, a, p) >= -eps
            });
            if !blocked {
                found = Some(i);
                break;
            }
        }
        let i = found.ok_or("no ear found")?;
        tris.push([poly[(i + n - 1) % n], poly[i], poly[(i + 1) % n]]);
        poly.remove(i);
        start = if i == 0 { 0 } else { i - 1 };
    }
    let (a, b, c) = (pts[poly[0]], pts[poly[1]], pts[poly[2]]);
    if cross3(a, b, c) > eps {
        tris.push([poly[0], poly[1], poly[2]]);
    } else if cross3(a, b, c) < -eps {
        return Err("final triangle is inverted".into());
    }
    Ok(tris)
}
