//! Evaluates a [`Plan`] into a stitched boundary representation.

use std::collections::HashMap;

use super::plan::{Plan, SideFrame, Sweep, SweepKind};
use super::profile::{subtract_footprints, Loop2, Profile, Seg2};
use super::{BrepError, CurveKind, Edge, Face, Loop, OrientedEdge, Solid, SurfaceKind};
use crate::geom::{Vec2, Vec3};

const MERGE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy)]
enum RawCurve {
    Line,
    /// Runs counter-clockwise about `axis` from `a` to `b`.
    Arc { center: Vec3, axis: Vec3, radius: f64 },
}

#[derive(Debug, Clone, Copy)]
struct RawEdge {
    curve: RawCurve,
    a: Vec3,
    b: Vec3,
}

impl RawEdge {
    fn line(a: Vec3, b: Vec3) -> Self {
        RawEdge { curve: RawCurve::Line, a, b }
    }

    fn midpoint(&self) -> Vec3 {
        match self.curve {
            RawCurve::Line => (self.a + self.b) * 0.5,
            RawCurve::Arc { center, axis, radius } => {
                let e1 = (self.a - center).normalized();
                let e2 = axis.cross(e1);
                let d = self.b - center;
                let mut t = d.dot(e2).atan2(d.dot(e1));
                if t <= 1e-12 {
                    t += std::f64::consts::TAU;
                }
                center + (e1 * (0.5 * t).cos() + e2 * (0.5 * t).sin()) * radius
            }
        }
    }
}

struct RawFace {
    surface: SurfaceKind,
    same_sense: bool,
    loops: Vec<Vec<RawEdge>>,
    tag: Option<u32>,
}

fn seg3(s: &Seg2, f: &SideFrame, off: Vec3) -> RawEdge {
    match *s {
        Seg2::Line { a, b } => RawEdge::line(f.to3(a) + off, f.to3(b) + off),
        Seg2::Arc { center, radius, a, b, ccw } => RawEdge {
            curve: RawCurve::Arc { center: f.to3(center) + off, axis: if ccw { f.n } else { -f.n }, radius },
            a: f.to3(a) + off,
            b: f.to3(b) + off,
        },
    }
}

fn loop3(l: &Loop2, f: &SideFrame, off: Vec3) -> Vec<RawEdge> {
    l.iter().map(|s| seg3(s, f, off)).collect()
}

/// Re-expresses a host-frame segment, shifted by `off`, in another side frame.
fn map_seg(s: &Seg2, from: &SideFrame, to: &SideFrame, off: Vec3) -> Seg2 {
    let m = |p: Vec2| to.to2(from.to3(p) + off);
    match *s {
        Seg2::Line { a, b } => Seg2::line(m(a), m(b)),
        Seg2::Arc { center, radius, a, b, ccw } => {
            let det = to.u.dot(from.u) * to.v.dot(from.v) - to.u.dot(from.v) * to.v.dot(from.u);
            Seg2::arc(m(center), radius, m(a), m(b), ccw == (det > 0.0))
        }
    }
}

fn side_footprints(plan: &Plan, side: super::BoxSide) -> Vec<Vec<Loop2>> {
    let sf = side.frame(plan.dims);
    let mut out = Vec::new();
    for sw in &plan.sweeps {
        let hf = sw.host.frame(plan.dims);
        let off = sw.direction() * sw.depth(plan.dims);
        if sw.host == side {
            out.push(sw.profile.loops.clone());
        }
        if sw.kind == SweepKind::Through && sw.host.opposite() == side {
            let loops = sw.profile.loops.iter().map(|l| l.iter().map(|s| map_seg(s, &hf, &sf, off)).collect()).collect();
            out.push(Profile::new(loops).loops);
        }
        for s in sw.profile.segments() {
            if let Some(k) = sw.open_side(s, &hf) {
                if hf.neighbor(k) == side {
                    let (a0, a1) = (hf.to3(s.start()), hf.to3(s.end()));
                    let quad = [a0, a1, a1 + off, a0 + off].map(|p| sf.to2(p));
                    out.push(Profile::polygon(&quad).loops);
                }
            }
        }
    }
    out
}

fn sweep_faces(plan: &Plan, idx: usize, sw: &Sweep, out: &mut Vec<RawFace>) {
    let hf = sw.host.frame(plan.dims);
    let dir = sw.direction();
    let off = dir * sw.depth(plan.dims);
    let tag = Some(idx as u32);
    for s in sw.profile.segments() {
        if sw.open_side(s, &hf).is_some() {
            continue;
        }
        let top = seg3(s, &hf, Vec3::ZERO);
        let (a0, a1) = (top.a, top.b);
        let (b0, b1) = (a0 + off, a1 + off);
        match top.curve {
            RawCurve::Line => {
                let t = (a1 - a0).normalized();
                out.push(RawFace {
                    surface: SurfaceKind::Plane { origin: a0, normal: t.cross(dir).normalized(), ref_dir: t },
                    same_sense: true,
                    loops: vec![vec![RawEdge::line(a0, a1), RawEdge::line(a1, b1), RawEdge::line(b1, b0), RawEdge::line(b0, a0)]],
                    tag,
                });
            }
            RawCurve::Arc { center, axis, radius } => {
                let radial = (a0 - center).normalized();
                let m = axis.cross(radial).cross(dir);
                let bottom = RawEdge { curve: RawCurve::Arc { center: center + off, axis: -axis, radius }, a: b1, b: b0 };
                out.push(RawFace {
                    surface: SurfaceKind::Cylinder { axis_origin: center, axis_dir: axis, ref_dir: radial, radius },
                    same_sense: m.dot(radial) > 0.0,
                    loops: vec![vec![top, RawEdge::line(a1, b1), bottom, RawEdge::line(b0, a0)]],
                    tag,
                });
            }
        }
    }
    if matches!(sw.kind, SweepKind::Blind(_) | SweepKind::Outward(_)) {
        out.push(RawFace {
            surface: SurfaceKind::Plane { origin: hf.origin + off, normal: hf.n, ref_dir: hf.u },
            same_sense: true,
            loops: sw.profile.loops.iter().map(|l| loop3(l, &hf, off)).collect(),
            tag,
        });
    }
}

pub(super) fn build(plan: &Plan) -> Result<Solid, BrepError> {
    let mut raw = Vec::new();
    for side in super::BoxSide::ALL {
        let f = side.frame(plan.dims);
        let regions = subtract_footprints(f.w, f.h, &side_footprints(plan, side))
            .map_err(|e| BrepError::Topology(format!("{side:?} face: {e}")))?;
        for r in regions {
            let mut loops = vec![loop3(&r.outer, &f, Vec3::ZERO)];
            loops.extend(r.holes.iter().map(|h| loop3(h, &f, Vec3::ZERO)));
            raw.push(RawFace {
                surface: SurfaceKind::Plane { origin: f.origin, normal: f.n, ref_dir: f.u },
                same_sense: true,
                loops,
                tag: None,
            });
        }
    }
    for (i, sw) in plan.sweeps.iter().enumerate() {
        sweep_faces(plan, i, sw, &mut raw);
    }
    let solid = stitch(raw)?;
    solid.validate()?;
    Ok(solid)
}

/// Merges coincident vertices and shared edges, numbering both in
/// depth-first order of first use from the face list.
fn stitch(raw: Vec<RawFace>) -> Result<Solid, BrepError> {
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut edges: Vec<Edge> = Vec::new();
    let mut mids: Vec<Vec3> = Vec::new();
    let mut by_pair: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    let mut faces = Vec::with_capacity(raw.len());

    let vid = |p: Vec3, vertices: &mut Vec<Vec3>| -> usize {
        match vertices.iter().position(|q| q.approx_eq(p, MERGE_TOL)) {
            Some(i) => i,
            None => {
                vertices.push(p);
                vertices.len() - 1
            }
        }
    };

    for rf in raw {
        let mut loops = Vec::with_capacity(rf.loops.len());
        for l in &rf.loops {
            let mut oes = Vec::with_capacity(l.len());
            for re in l {
                let va = vid(re.a, &mut vertices);
                let vb = vid(re.b, &mut vertices);
                let mid = re.midpoint();
                let key = (va.min(vb), va.max(vb));
                let found = by_pair.get(&key).and_then(|c| c.iter().copied().find(|&e| mids[e].approx_eq(mid, MERGE_TOL)));
                let oe = match found {
                    Some(e) => {
                        let forward = match (edges[e].curve, re.curve) {
                            (CurveKind::CircleArc { axis, .. }, RawCurve::Arc { axis: ax2, .. }) => axis.dot(ax2) > 0.0,
                            _ => edges[e].start == va,
                        };
                        OrientedEdge { edge: e, forward }
                    }
                    None => {
                        let (pa, pb) = (vertices[va], vertices[vb]);
                        let curve = match re.curve {
                            RawCurve::Line => CurveKind::Line { point: pa, direction: (pb - pa).normalized() },
                            RawCurve::Arc { center, axis, radius } => {
                                CurveKind::CircleArc { center, axis, ref_dir: (pa - center).normalized(), radius }
                            }
                        };
                        edges.push(Edge { curve, start: va, end: vb });
                        mids.push(mid);
                        by_pair.entry(key).or_default().push(edges.len() - 1);
                        OrientedEdge { edge: edges.len() - 1, forward: true }
                    }
                };
                oes.push(oe);
            }
            loops.push(Loop { edges: oes });
        }
        let mut it = loops.into_iter();
        let outer = it.next().ok_or_else(|| BrepError::Topology("face without loops".into()))?;
        faces.push(Face { surface: rf.surface, same_sense: rf.same_sense, outer, inners: it.collect(), tag: rf.tag });
    }
    Ok(Solid::from_parts(vertices, edges, faces))
}
