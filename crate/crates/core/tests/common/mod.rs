#![allow(dead_code)]

use hfr_core::brep::{triangulate, EdgeConvexity, Solid, TriMesh};
use hfr_core::geom::Vec3;

/// Generalized winding number of a closed triangle mesh around `p`.
pub fn winding_number(mesh: &TriMesh, p: Vec3) -> f64 {
    let mut total = 0.0;
    for f in &mesh.facets {
        let [a, b, c] = f.map(|i| mesh.points[i] - p);
        let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
        let num = a.dot(b.cross(c));
        let den = la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
        total += 2.0 * num.atan2(den);
    }
    total / (4.0 * std::f64::consts::PI)
}

/// Material-side test: probes just off the edge midpoint, between the two
/// faces, and asks the fine mesh whether the probe is inside the solid.
pub fn oracle_convexity(solid: &Solid, mesh: &TriMesh, e: usize) -> Option<EdgeConvexity> {
    let mut uses = Vec::new();
    for (fi, f) in solid.faces.iter().enumerate() {
        for l in f.loops() {
            for oe in &l.edges {
                if oe.edge == e {
                    uses.push((fi, oe.forward));
                }
            }
        }
    }
    assert_eq!(uses.len(), 2, "edge {e}");
    if uses[0].0 == uses[1].0 {
        return None;
    }
    let m = solid.edge_point(e, 0.5);
    let t = solid.edge_tangent(e, 0.5);
    let dirs: Vec<Vec3> = uses
        .iter()
        .map(|&(f, fwd)| {
            let n = solid.face_normal_at(f, m);
            let tt = if fwd { t } else { -t };
            n.cross(tt)
        })
        .collect();
    let s = dirs[0] + dirs[1];
    if s.norm() < 1e-6 {
        return Some(EdgeConvexity::Smooth);
    }
    let probe = m + s.normalized() * 0.01;
    let inside = winding_number(mesh, probe) > 0.5;
    Some(if inside { EdgeConvexity::Convex } else { EdgeConvexity::Concave })
}

pub fn fine_mesh(solid: &Solid) -> TriMesh {
    triangulate(solid, std::f64::consts::PI / 720.0).unwrap()
}

const JUNK: [&str; 12] = ["1e999", "NaN", "-", "..", "", "#", "'", "((((", ")", "$", "*", "#0"];
const KEYWORDS: [&str; 6] = ["CARTESIAN_POINT", "B_SPLINE_SURFACE", "ADVANCED_FACE", "LINE", "CIRCLE", "EDGE_LOOP"];

/// Applies one to three random corruptions to a STEP document.
pub fn mutate_step<R: rand::Rng>(text: &str, rng: &mut R) -> String {
    let mut t = text.to_string();
    for _ in 0..rng.gen_range(1..=3) {
        if t.is_empty() {
            break;
        }
        let mut lines: Vec<String> = t.lines().map(str::to_string).collect();
        let li = rng.gen_range(0..lines.len());
        match rng.gen_range(0..12) {
            0 => {
                let mut cut = rng.gen_range(0..t.len());
                while !t.is_char_boundary(cut) {
                    cut -= 1;
                }
                t.truncate(cut);
                continue;
            }
            1 => {
                let mut b = t.into_bytes();
                let i = rng.gen_range(0..b.len());
                b[i] = rng.gen_range(0x20..0x7f);
                t = String::from_utf8_lossy(&b).into_owned();
                continue;
            }
            2 => {
                lines.remove(li);
            }
            3 => {
                let l = lines[li].clone();
                lines.insert(li, l);
            }
            4 => {
                let target = format!("#{}", rng.gen_range(0..2000));
                if let Some(p) = lines[li].rfind('#') {
                    let end = lines[li][p + 1..].find(|c: char| !c.is_ascii_digit()).map_or(lines[li].len(), |k| p + 1 + k);
                    lines[li].replace_range(p..end, &target);
                }
            }
            5 => {
                let j = JUNK[rng.gen_range(0..JUNK.len())];
                if let Some(p) = lines[li].find(|c: char| c.is_ascii_digit() || c == '.') {
                    lines[li].replace_range(p..p + 1, j);
                }
            }
            6 => {
                let k = KEYWORDS[rng.gen_range(0..KEYWORDS.len())];
                for kw in KEYWORDS {
                    if lines[li].contains(kw) {
                        lines[li] = lines[li].replacen(kw, k, 1);
                        break;
                    }
                }
            }
            7 => {
                let junk: String = (0..rng.gen_range(1..40)).map(|_| rng.gen_range(0x20u8..0x7f) as char).collect();
                lines.insert(li, junk);
            }
            8 => {
                lines[li] = lines[li].replacen(')', "", 1);
            }
            9 => {
                if let (Some(eq), Some(p)) = (lines[li].find('='), lines[li].rfind('#')) {
                    let own = lines[li][..eq].trim().to_string();
                    if p > eq {
                        let end = lines[li][p + 1..].find(|c: char| !c.is_ascii_digit()).map_or(lines[li].len(), |k| p + 1 + k);
                        lines[li].replace_range(p..end, &own);
                    }
                }
            }
            10 => {
                let depth = rng.gen_range(10..400);
                lines.insert(li, format!("#999999 = LINE({}{});", "(".repeat(depth), ")".repeat(depth)));
            }
            _ => {
                let other = rng.gen_range(0..lines.len());
                lines.swap(li, other);
            }
        }
        t = lines.join("\n");
    }
    t
}

/// Per-class (precision, recall, F1); `None` for classes with no support.
pub type PerClass = Vec<Option<(f64, f64, f64)>>;

/// Tallies one-vs-rest counts straight from raw (truth, prediction) pairs.
pub fn brute_force(pairs: &[(usize, usize)], n: usize) -> (f64, PerClass) {
    let correct = pairs.iter().filter(|(t, p)| t == p).count();
    let per = (0..n)
        .map(|c| {
            let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
            for &(t, p) in pairs {
                match (t == c, p == c) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fn_ += 1,
                    _ => {}
                }
            }
            if tp + fn_ == 0 {
                return None;
            }
            let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            let r = tp as f64 / (tp + fn_) as f64;
            let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            Some((p, r, f))
        })
        .collect();
    (correct as f64 / pairs.len() as f64, per)
}

pub fn random_pairs(rng: &mut impl rand::Rng, n: usize) -> Vec<(usize, usize)> {
    let len = rng.gen_range(1..400);
    let skill = rng.gen_range(0.0..1.0);
    (0..len)
        .map(|_| {
            let t = rng.gen_range(0..n);
            let p = if rng.gen_bool(skill) { t } else { rng.gen_range(0..n) };
            (t, p)
        })
        .collect()
}
