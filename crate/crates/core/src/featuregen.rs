//! Feature taxonomy and the seeded generator of labeled hybrid models.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::brep::plan::{chamfer_profile, corner_profile, round_profile};
use crate::brep::profile::point_in_loop;
use crate::brep::{BoxSide, Plan, Profile, Seg2, SideFrame, Solid, Sweep, SweepKind};
use crate::geom::{Vec2, Vec3};
use crate::geomextract::{dominant_axis, orientation_of_axis, prefers, DimValue, Dimensions, Orientation};
use crate::step_io::{write_labels, write_step};

pub const N_CLASSES: usize = 30;
pub const STOCK_CLASS: u8 = 29;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    EdgeProfiling,
    Step,
    Slot,
    Through,
    Blind,
    Additive,
    Stock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureClass {
    pub index: u8,
    pub name: &'static str,
    /// Title-cased name used in reports.
    pub display: &'static str,
    pub group: Group,
    pub additive: bool,
}

const fn fc(index: u8, name: &'static str, display: &'static str, group: Group) -> FeatureClass {
    FeatureClass { index, name, display, group, additive: matches!(group, Group::Additive) }
}

static TAXONOMY: [FeatureClass; N_CLASSES] = [
    fc(0, "chamfer", "Chamfer", Group::EdgeProfiling),
    fc(1, "through hole", "Through Hole", Group::Through),
    fc(2, "triangular passage", "Triangular Passage", Group::Through),
    fc(3, "rectangular passage", "Rectangular Passage", Group::Through),
    fc(4, "six-sided passage", "6-sided Passage", Group::Through),
    fc(5, "triangular through slot", "Triangular Thru Slot", Group::Slot),
    fc(6, "rectangular through slot", "Rectangular Thru Slot", Group::Slot),
    fc(7, "circular through slot", "Circular Thru Slot", Group::Slot),
    fc(8, "rectangular through step", "Rectangular Thru Step", Group::Step),
    fc(9, "two-sided through step", "2-sided Thru Step", Group::Step),
    fc(10, "slanted through step", "Slanted Thru Step", Group::Step),
    fc(11, "o-ring", "O-ring", Group::Blind),
    fc(12, "blind hole", "Blind Hole", Group::Blind),
    fc(13, "triangular pocket", "Triangular Pocket", Group::Blind),
    fc(14, "rectangular pocket", "Rectangular Pocket", Group::Blind),
    fc(15, "six-sided pocket", "6-sided Pocket", Group::Blind),
    fc(16, "circular end pocket", "Circular End Pocket", Group::Blind),
    fc(17, "rectangular blind slot", "Rectangular Blind Slot", Group::Slot),
    fc(18, "vertical circular end blind slot", "Vertical Circular End Blind Slot", Group::Slot),
    fc(19, "horizontal circular end blind slot", "Horizontal Circular End Blind Slot", Group::Slot),
    fc(20, "triangular blind step", "Triangular Blind Step", Group::Step),
    fc(21, "circular blind step", "Circular Blind Step", Group::Step),
    fc(22, "rectangular blind step", "Rectangular Blind Step", Group::Step),
    fc(23, "round", "Round", Group::EdgeProfiling),
    fc(24, "cylindrical extrusion", "Cylindrical Extrusion", Group::Additive),
    fc(25, "rectangular extrusion", "Rectangular Extrusion", Group::Additive),
    fc(26, "triangular extrusion", "Triangular Extrusion", Group::Additive),
    fc(27, "hexagonal extrusion", "Hexagonal Extrusion", Group::Additive),
    fc(28, "pentagonal extrusion", "Pentagonal Extrusion", Group::Additive),
    fc(29, "stock", "Stock", Group::Stock),
];

/// The 30 classes in index order.
pub fn taxonomy() -> &'static [FeatureClass; N_CLASSES] {
    &TAXONOMY
}

pub fn class(index: u8) -> Option<&'static FeatureClass> {
    TAXONOMY.get(index as usize)
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("could not place {min} features after {tries} regenerations from seed {seed}")]
    Exhausted { seed: u64, min: usize, tries: u32 },
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub seed: u64,
    pub n_models: usize,
    pub stock_range: (f64, f64),
    pub feature_range: (usize, usize),
    pub max_attempts: usize,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec { seed: 0, n_models: 2000, stock_range: (30.0, 70.0), feature_range: (4, 8), max_attempts: 50 }
    }
}

impl GenSpec {
    pub fn validate(&self) -> Result<(), GenError> {
        let (lo, hi) = self.stock_range;
        let (fmin, fmax) = self.feature_range;
        if self.n_models == 0 {
            return Err(GenError::InvalidSpec("n_models must be at least 1".into()));
        }
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(GenError::InvalidSpec(format!("bad stock range [{lo}, {hi}]")));
        }
        if fmin == 0 || fmin > fmax {
            return Err(GenError::InvalidSpec(format!("bad feature range [{fmin}, {fmax}]")));
        }
        if self.max_attempts == 0 {
            return Err(GenError::InvalidSpec("max_attempts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub instance_id: u32,
    pub class: u8,
    pub sweep: Sweep,
    pub dims: Dimensions,
    /// Depth axis; absent for edge profiling features.
    pub axis: Option<Vec3>,
    pub orientation: Orientation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    /// Seed the model was actually drawn from (differs after regeneration).
    pub sub_seed: u64,
    pub regenerations: u32,
    pub stock: Vec3,
    pub features: Vec<FeatureRecord>,
    /// Classes whose placement failed every attempt.
    pub dropped: Vec<u8>,
    /// Candidates that passed placement checks but failed to evaluate.
    pub kernel_rejections: u32,
    pub min_stock: Vec3,
    pub max_stock: Vec3,
}

#[derive(Debug, Clone)]
pub struct GeneratedModel {
    pub solid: Solid,
    /// `(class, instance)` per face.
    pub labels: Vec<(u8, u32)>,
    pub truth: GroundTruth,
}

/// Per-item seed derived from a base seed (splitmix64 finalizer).
pub fn derive_seed(seed: u64, i: u64) -> u64 {
    let mut z = seed ^ i.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const MARGIN: f64 = 1.0;
const MAX_REGENERATIONS: u32 = 64;

pub fn generate_model(seed: u64, spec: &GenSpec) -> Result<GeneratedModel, GenError> {
    spec.validate()?;
    for r in 0..MAX_REGENERATIONS {
        let sub = if r == 0 { seed } else { derive_seed(seed, (1 << 63) | r as u64) };
        if let Some(mut m) = try_generate(sub, spec) {
            m.truth.seed = seed;
            m.truth.regenerations = r;
            return Ok(m);
        }
    }
    Err(GenError::Exhausted { seed, min: spec.feature_range.0, tries: MAX_REGENERATIONS })
}

struct Candidate {
    class: u8,
    sweep: Sweep,
    dims: Dimensions,
    axis: Option<Vec3>,
}

fn try_generate(seed: u64, spec: &GenSpec) -> Option<GeneratedModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = spec.stock_range;
    let draw = |rng: &mut ChaCha8Rng| if hi > lo { rng.gen_range(lo..hi) } else { lo };
    let dims = Vec3::new(draw(&mut rng), draw(&mut rng), draw(&mut rng));
    let n = rng.gen_range(spec.feature_range.0..=spec.feature_range.1);
    let classes: Vec<u8> = (0..n).map(|_| rng.gen_range(0..STOCK_CLASS)).collect();

    let mut plan = Plan::new(dims).ok()?;
    let mut accepted: Vec<Candidate> = Vec::new();
    let mut dropped = Vec::new();
    let mut kernel_rejections = 0;
    for &c in &classes {
        let mut placed = false;
        for _ in 0..spec.max_attempts {
            let Some(cand) = sample(c, dims, &mut rng) else { continue };
            if plan.check(&cand.sweep, MARGIN).is_err() {
                continue;
            }
            plan.sweeps.push(cand.sweep.clone());
            if plan.build().is_err() {
                plan.sweeps.pop();
                kernel_rejections += 1;
                continue;
            }
            accepted.push(cand);
            placed = true;
            break;
        }
        if !placed {
            dropped.push(c);
        }
    }
    if accepted.len() < spec.feature_range.0 {
        return None;
    }
    let solid = plan.build().ok()?;
    let labels = solid
        .faces
        .iter()
        .map(|f| match f.tag {
            Some(i) => (accepted[i as usize].class, i + 1),
            None => (STOCK_CLASS, 0),
        })
        .collect();

    let mut features = Vec::with_capacity(accepted.len());
    for (i, cand) in accepted.into_iter().enumerate() {
        let mut dims = cand.dims;
        if cand.class == 23 {
            dims.push("Face index", round_face_pair(&solid, &plan, &cand.sweep)?);
        }
        features.push(FeatureRecord {
            instance_id: i as u32 + 1,
            class: cand.class,
            orientation: cand.axis.map_or(Orientation::None, orientation_of_axis),
            sweep: cand.sweep,
            dims,
            axis: cand.axis,
        });
    }
    let tallest = features
        .iter()
        .filter_map(|f| match f.sweep.kind {
            SweepKind::Outward(d) => Some(d),
            _ => None,
        })
        .fold(0.0, f64::max);
    let truth = GroundTruth {
        seed,
        sub_seed: seed,
        regenerations: 0,
        stock: dims,
        features,
        dropped,
        kernel_rejections,
        min_stock: dims,
        max_stock: Vec3::new(dims.x, dims.y, dims.z + tallest),
    };
    Some(GeneratedModel { solid, labels, truth })
}

fn uni(rng: &mut ChaCha8Rng, a: f64, b: f64) -> f64 {
    rng.gen_range(a..b)
}

fn span(f: &SideFrame) -> f64 {
    f.w.min(f.h)
}

/// Translates a profile sketched around the origin to a random spot of the
/// face that keeps `MARGIN` clearance from its border.
fn place(p: Profile, f: &SideFrame, rng: &mut ChaCha8Rng) -> Option<(Profile, Vec2)> {
    let (lo, hi) = p.bounds();
    let (x0, x1) = (MARGIN - lo.x, f.w - MARGIN - hi.x);
    let (y0, y1) = (MARGIN - lo.y, f.h - MARGIN - hi.y);
    if x1 <= x0 || y1 <= y0 {
        return None;
    }
    let t = Vec2::new(uni(rng, x0, x1), uni(rng, y0, y1));
    Some((map_profile(&p, |q| q + t, false), t))
}

fn map_profile(p: &Profile, m: impl Fn(Vec2) -> Vec2, mirror: bool) -> Profile {
    let loops = p
        .loops
        .iter()
        .map(|l| {
            l.iter()
                .map(|s| match *s {
                    Seg2::Line { a, b } => Seg2::line(m(a), m(b)),
                    Seg2::Arc { center, radius, a, b, ccw } => Seg2::arc(m(center), radius, m(a), m(b), ccw != mirror),
                })
                .collect()
        })
        .collect();
    Profile::new(loops)
}

fn rotate(p: Vec2, a: f64) -> Vec2 {
    let (s, c) = a.sin_cos();
    Vec2::new(c * p.x - s * p.y, s * p.x + c * p.y)
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, xs: &[T]) -> T {
    *xs.choose(rng).expect("non-empty choice")
}

/// A triangle with base and height in `[lo, hi]`, apex offset along the
/// base in `[0.2, 0.8]` of it, randomly rotated.
fn random_triangle(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> [Vec2; 3] {
    let b = uni(rng, lo, hi);
    let h = uni(rng, lo, hi);
    let o = uni(rng, 0.2, 0.8) * b;
    let a = uni(rng, 0.0, TAU);
    [Vec2::new(0.0, 0.0), Vec2::new(b, 0.0), Vec2::new(o, h)].map(|p| rotate(p, a))
}

fn sorted_sides(t: &[Vec2; 3]) -> [f64; 3] {
    let mut s = [t[0].dist(t[1]), t[1].dist(t[2]), t[2].dist(t[0])];
    s.sort_by(f64::total_cmp);
    s
}

fn push_sides(d: &mut Dimensions, s: [f64; 3]) {
    d.push("Side-1", s[0]);
    d.push("Side-2", s[1]);
    d.push("Side-3", s[2]);
}

/// End of a through sweep reported as its opening: the one with the larger
/// coordinate along the dominant axis of the sweep.
fn through_opening(p_host: Vec3, f: &SideFrame) -> Vec3 {
    let other = p_host - f.n * f.extent;
    let k = (0..3).max_by(|&a, &b| f.n.get(a).abs().total_cmp(&f.n.get(b).abs())).unwrap_or(2);
    if other.get(k) > p_host.get(k) {
        other
    } else {
        p_host
    }
}

/// Maps (along-side, into-face) sketch coordinates measured from side `k`
/// of the host rectangle to host coordinates, without mirroring.
fn side_map(k: usize, w: f64, h: f64) -> impl Fn(Vec2) -> Vec2 {
    move |p: Vec2| match k {
        0 => Vec2::new(p.x, p.y),
        1 => Vec2::new(w - p.y, p.x),
        2 => Vec2::new(w - p.x, h - p.y),
        _ => Vec2::new(p.y, h - p.x),
    }
}

const INNER_SIDES: [BoxSide; 6] = BoxSide::ALL;
const WALL_SIDES: [BoxSide; 4] = [BoxSide::Front, BoxSide::Back, BoxSide::Left, BoxSide::Right];

fn sample(class: u8, dims: Vec3, rng: &mut ChaCha8Rng) -> Option<Candidate> {
    match class {
        0 | 23 => sample_edge(class, dims, rng),
        1..=4 | 11..=16 | 24..=28 => sample_inner(class, dims, rng),
        5..=7 | 17..=19 => sample_slot(class, dims, rng),
        8..=10 => sample_through_step(class, dims, rng),
        20..=22 => sample_blind_step(class, dims, rng),
        _ => None,
    }
}

fn sample_inner(class: u8, dims: Vec3, rng: &mut ChaCha8Rng) -> Option<Candidate> {
    let additive = class >= 24;
    let host = if additive { BoxSide::Top } else { pick(rng, &INNER_SIDES) };
    let f = host.frame(dims);
    let sp = span(&f);
    let mut d = Dimensions::default();
    let kind = match class {
        1..=4 => SweepKind::Through,
        24..=28 => SweepKind::Outward(uni(rng, 5.0, 20.0)),
        _ => SweepKind::Blind(uni(rng, 0.2, 0.8) * f.extent),
    };
    let depth = match kind {
        SweepKind::Blind(x) | SweepKind::Outward(x) => x,
        SweepKind::Through => f.extent,
    };
    let rot = uni(rng, 0.0, TAU);
    let o = Vec2::new(0.0, 0.0);
    let (profile, center_local) = match class {
        1 | 12 | 24 => {
            let r = uni(rng, 0.05, 0.2) * sp;
            d.push("Radius", r);
            (Profile::circle(o, r), Some(o))
        }
        11 => {
            let r_out = uni(rng, 0.05, 0.2) * sp;
            let r_in = uni(rng, 0.4, 0.8) * r_out;
            d.push("Radius-1", r_in);
            d.push("Radius-2", r_out);
            (Profile::new(vec![vec![Seg2::circle(o, r_out)], vec![Seg2::circle(o, r_in)]]), Some(o))
        }
        2 | 13 | 26 => {
            let t = random_triangle(rng, 0.1 * sp, 0.4 * sp);
            push_sides(&mut d, sorted_sides(&t));
            (Profile::polygon(&t), None)
        }
        3 | 14 | 25 => {
            let a = uni(rng, 0.1, 0.4) * sp;
            let b = uni(rng, 0.1, 0.4) * sp;
            d.push("Length", a.max(b));
            d.push("Width", a.min(b));
            (Profile::polygon(&[o, Vec2::new(a, 0.0), Vec2::new(a, b), Vec2::new(0.0, b)]), None)
        }
        4 | 15 | 27 => {
            let s = uni(rng, 0.05, 0.2) * sp;
            d.push("Side", s);
            (Profile::regular_polygon(o, s, 6, rot), None)
        }
        28 => {
            let r = uni(rng, 0.05, 0.2) * sp;
            d.push("Side", 2.0 * r * (PI / 5.0).sin());
            (Profile::regular_polygon(o, r, 5, rot), None)
        }
        16 => {
            let r = uni(rng, 0.05, 0.1) * sp;
            let l = uni(rng, 0.1, 0.2) * sp;
            d.push("Width", 2.0 * r);
            d.push("Length", l);
            let (c1, c2) = (o, Vec2::new(l, 0.0));
            let stadium = Profile::new(vec![vec![
                Seg2::line(Vec2::new(0.0, -r), Vec2::new(l, -r)),
                Seg2::arc(c2, r, Vec2::new(l, -r), Vec2::new(l, r), true),
                Seg2::line(Vec2::new(l, r), Vec2::new(0.0, r)),
                Seg2::arc(c1, r, Vec2::new(0.0, r), Vec2::new(0.0, -r), true),
            ]]);
            (map_profile(&stadium, |p| rotate(p, if rng_bit(rot) { 0.0 } else { PI / 2.0 }), false), None)
        }
        _ => return None,
    };
    let (profile, t) = place(profile, &f, rng)?;
    d.push("Depth", depth);
    if let Some(c) = center_local {
        let at_host = f.to3(c + t);
        let center = match kind {
            SweepKind::Through => through_opening(at_host, &f),
            SweepKind::Outward(h) => at_host + f.n * h,
            SweepKind::Blind(_) => at_host,
        };
        d.push("Center", center);
    }
    Some(Candidate { class, sweep: Sweep { host, profile, kind }, dims: d, axis: Some(f.n) })
}

/// Reuses an already-drawn uniform angle as a coin flip so every class
/// consumes the same number of draws.
fn rng_bit(x: f64) -> bool {
    x < PI
}

fn sample_slot(class: u8, dims: Vec3, rng: &mut ChaCha8Rng) -> Option<Candidate> {
    let host = match class {
        18 => pick(rng, &[BoxSide::Top, BoxSide::Bottom]),
        19 => pick(rng, &WALL_SIDES),
        _ => pick(rng, &INNER_SIDES),
    };
    let f = host.frame(dims);
    let sp = span(&f);
    let k = rng.gen_range(0..4usize);
    let along = if k % 2 == 0 { f.w } else { f.h };
    let ws = uni(rng, 0.1, 0.4) * sp;
    let ls = uni(rng, 0.1, 0.4) * sp;
    if along - 2.0 * MARGIN - ws <= 0.0 {
        return None;
    }
    let s0 = uni(rng, MARGIN, along - MARGIN - ws);
    let kind = if class <= 7 { SweepKind::Through } else { SweepKind::Blind(uni(rng, 0.2, 0.8) * f.extent) };
    let depth = match kind {
        SweepKind::Blind(x) => x,
        _ => f.extent,
    };
    let m = side_map(k, f.w, f.h);
    let mut d = Dimensions::default();
    let mut slot_depth = depth;
    let local = match class {
        5 => {
            let apex = uni(rng, 0.2, 0.8) * ws;
            let t = [Vec2::new(s0, 0.0), Vec2::new(s0 + ws, 0.0), Vec2::new(s0 + apex, ls)];
            push_sides(&mut d, sorted_sides(&t));
            Profile::polygon(&t)
        }
        6 | 17 => {
            let (length, depth_here) = if class == 17 && prefers(f.neighbor(k).normal(), f.n) { (depth, ls) } else { (ls, depth) };
            d.push("Length", length);
            d.push("Width", ws);
            slot_depth = depth_here;
            Profile::polygon(&[Vec2::new(s0, 0.0), Vec2::new(s0 + ws, 0.0), Vec2::new(s0 + ws, ls), Vec2::new(s0, ls)])
        }
        _ => {
            let r = ws / 2.0;
            d.push("Radius", r);
            d.push("Length", ls);
            Profile::new(vec![vec![
                Seg2::line(Vec2::new(s0, 0.0), Vec2::new(s0 + ws, 0.0)),
                Seg2::line(Vec2::new(s0 + ws, 0.0), Vec2::new(s0 + ws, ls)),
                Seg2::arc(Vec2::new(s0 + r, ls), r, Vec2::new(s0 + ws, ls), Vec2::new(s0, ls), true),
                Seg2::line(Vec2::new(s0, ls), Vec2::new(s0, 0.0)),
            ]])
        }
    };
    d.push("Depth", slot_depth);
    if matches!(class, 7 | 18 | 19) {
        let c = f.to3(m(Vec2::new(s0 + ws / 2.0, ls)));
        d.push("Center", if kind == SweepKind::Through { through_opening(c, &f) } else { c });
    }
    let profile = map_profile(&local, &m, false);
    let axis = if slot_depth == depth { f.n } else { f.neighbor(k).normal() };
    Some(Candidate { class, sweep: Sweep { host, profile, kind }, dims: d, axis: Some(axis) })
}

fn random_corner(rng: &mut ChaCha8Rng, f: &SideFrame) -> Vec2 {
    Vec2::new(pick(rng, &[0.0, f.w]), pick(rng, &[0.0, f.h]))
}

/// Through steps run along a horizontal stock edge; their depth axis is Z.
fn sample_through_step(class: u8, dims: Vec3, rng: &mut ChaCha8Rng) -> Option<Candidate> {
    let host = pick(rng, &WALL_SIDES);
    let f = host.frame(dims);
    let c = random_corner(rng, &f);
    let z_on_u = f.u.z.abs() > 0.5;
    let (len_w, len_d) = if z_on_u { (f.h, f.w) } else { (f.w, f.h) };
    let a = uni(rng, 0.1, 0.4) * len_w;
    let b = uni(rng, 0.1, 0.4) * len_d;
    let mut d = Dimensions::default();
    d.push("Length", f.extent);
    d.push("Width", a);
    d.push("Depth", b);
    let pts: Vec<Vec2> = match class {
        8 => vec![Vec2::new(0.0, 0.0), Vec2::new(a, 0.0), Vec2::new(a, b), Vec2::new(0.0, b)],
        9 => {
            let a1 = uni(rng, 0.3, 0.7) * a;
            let b1 = uni(rng, 0.3, 0.7) * b;
            d.push("Side-1", a1);
            d.push("Side-2", b1);
            vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(a, 0.0),
                Vec2::new(a, b1),
                Vec2::new(a1, b1),
                Vec2::new(a1, b),
                Vec2::new(0.0, b),
            ]
        }
        _ => vec![Vec2::new(0.0, 0.0), Vec2::new(a, 0.0), Vec2::new(0.0, b)],
    };
    let sx = if c.x == 0.0 { 1.0 } else { -1.0 };
    let sy = if c.y == 0.0 { 1.0 } else { -1.0 };
    let to_host = |p: Vec2| {
        let (pu, pv) = if z_on_u { (p.y, p.x) } else { (p.x, p.y) };
        Vec2::new(c.x + sx * pu, c.y + sy * pv)
    };
    let profile = Profile::polygon(&pts.iter().map(|&p| to_host(p)).collect::<Vec<_>>());
    Some(Candidate { class, sweep: Sweep { host, profile, kind: SweepKind::Through }, dims: d, axis: Some(Vec3::Z) })
}

fn sample_blind_step(class: u8, dims: Vec3, rng: &mut ChaCha8Rng) -> Option<Candidate> {
    let host = pick(rng, &INNER_SIDES);
    let f = host.frame(dims);
    let c = random_corner(rng, &f);
    let depth = uni(rng, 0.2, 0.8) * f.extent;
    let a = uni(rng, 0.1, 0.4) * f.w;
    let b = uni(rng, 0.1, 0.4) * f.h;
    let mut d = Dimensions::default();
    let local = match class {
        20 => {
            d.push("Length", a.max(b));
            d.push("Width", a.min(b));
            d.push("Side", a.hypot(b));
            Profile::polygon(&[Vec2::new(0.0, 0.0), Vec2::new(a, 0.0), Vec2::new(0.0, b)])
        }
        21 => {
            let r = uni(rng, 0.1, 0.4) * span(&f);
            d.push("Radius", r);
            Profile::new(vec![vec![
                Seg2::line(Vec2::new(0.0, 0.0), Vec2::new(r, 0.0)),
                Seg2::arc(Vec2::new(0.0, 0.0), r, Vec2::new(r, 0.0), Vec2::new(0.0, r), true),
                Seg2::line(Vec2::new(0.0, r), Vec2::new(0.0, 0.0)),
            ]])
        }
        _ => {
            let mut ext = [0.0; 3];
            for (dir, len) in [(f.u, a), (f.v, b), (f.n, depth)] {
                ext[dominant_axis(dir)] = len;
            }
            d.push("Length", ext[0].max(ext[1]));
            d.push("Width", ext[0].min(ext[1]));
            d.push("Depth", ext[2]);
            Profile::polygon(&[Vec2::new(0.0, 0.0), Vec2::new(a, 0.0), Vec2::new(a, b), Vec2::new(0.0, b)])
        }
    };
    if class != 22 {
        d.push("Depth", depth);
    }
    if class == 21 {
        d.push("Center", f.to3(c) - f.n * depth);
    }
    let profile = corner_profile(&local, c, f.w, f.h);
    let axis = if class == 22 { Vec3::Z } else { f.n };
    Some(Candidate { class, sweep: Sweep { host, profile, kind: SweepKind::Blind(depth) }, dims: d, axis: Some(axis) })
}

fn sample_edge(class: u8, dims: Vec3, rng: &mut ChaCha8Rng) -> Option<Candidate> {
    let host = pick(rng, &INNER_SIDES);
    let f = host.frame(dims);
    let c = random_corner(rng, &f);
    let s = uni(rng, 2.0, 8.0);
    if s >= f.w.min(f.h) {
        return None;
    }
    let mut d = Dimensions::default();
    let local = if class == 0 {
        d.push("Side-1", s);
        d.push("Side-2", s);
        d.push("Angle", 45.0);
        chamfer_profile(s)
    } else {
        d.push("Radius", s);
        round_profile(s)
    };
    let profile = corner_profile(&local, c, f.w, f.h);
    Some(Candidate { class, sweep: Sweep { host, profile, kind: SweepKind::Through }, dims: d, axis: None })
}

/// Ids of the two planar faces a round blends, found by locating points
/// just past each tangent line on the adjacent stock faces.
fn round_face_pair(solid: &Solid, plan: &Plan, sweep: &Sweep) -> Option<DimValue> {
    let f = sweep.host.frame(plan.dims);
    let (lo, hi) = sweep.profile.bounds();
    let r = hi.x - lo.x;
    let c = Vec2::new(if lo.x == 0.0 { 0.0 } else { f.w }, if lo.y == 0.0 { 0.0 } else { f.h });
    let sx = if c.x == 0.0 { 1.0 } else { -1.0 };
    let sy = if c.y == 0.0 { 1.0 } else { -1.0 };
    let step = 0.5 * MARGIN;
    let mid = -f.n * (0.5 * f.extent);
    let p = f.to3(Vec2::new(c.x + sx * (r + step), c.y)) + mid;
    let q = f.to3(Vec2::new(c.x, c.y + sy * (r + step))) + mid;
    let (a, b) = (locate_face(solid, p)?, locate_face(solid, q)?);
    Some(DimValue::Pair(a.min(b), a.max(b)))
}

/// The planar face whose closed region contains `p`.
pub fn locate_face(solid: &Solid, p: Vec3) -> Option<usize> {
    (0..solid.faces.len()).find(|&fi| {
        let Some((o, e1, e2, n)) = solid.plane_frame(fi) else { return false };
        if (p - o).dot(n).abs() > 1e-9 {
            return false;
        }
        let q = Vec2::new((p - o).dot(e1), (p - o).dot(e2));
        let face = &solid.faces[fi];
        let inside_outer = solid.planar_loop_2d(fi, &face.outer).is_some_and(|l| point_in_loop(q, &l));
        inside_outer && !face.inners.iter().any(|h| solid.planar_loop_2d(fi, h).is_some_and(|l| point_in_loop(q, &l)))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub step: String,
    pub labels: String,
    pub truth: String,
    pub seed: u64,
    pub n_features: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: GenSpec,
    pub models: Vec<ManifestEntry>,
    pub class_face_counts: Vec<u64>,
}

impl Manifest {
    pub fn split_sizes(&self) -> (usize, usize, usize) {
        let count = |s| self.models.iter().filter(|m| m.split == s).count();
        (count(Split::Train), count(Split::Val), count(Split::Test))
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.models.iter().filter(move |m| m.split == split)
    }
}

/// 60/20/20 split by model after a seeded shuffle.
pub fn assign_splits(n: usize, seed: u64) -> Vec<Split> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX)));
    let n_train = n * 60 / 100;
    let n_val = n * 20 / 100;
    let mut out = vec![Split::Test; n];
    for (rank, &i) in idx.iter().enumerate() {
        out[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    out
}

pub fn model_name(i: usize) -> String {
    format!("model_{i:05}")
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> GenError + '_ {
    move |source| GenError::Io { path: path.to_path_buf(), source }
}

/// Writes STEP, label and ground-truth files for every model plus
/// `manifest.json`. Runs on the current rayon pool; output does not depend
/// on its size.
pub fn generate_dataset(spec: &GenSpec, out_dir: &Path) -> Result<Manifest, GenError> {
    spec.validate()?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let splits = assign_splits(spec.n_models, spec.seed);
    let results: Vec<Result<(ManifestEntry, Vec<u64>), GenError>> = (0..spec.n_models)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(spec.seed, i as u64);
            let m = generate_model(seed, spec)?;
            let name = model_name(i);
            let doc = write_step(&m.solid);
            let files = [
                (format!("{name}.step"), doc.text.clone()),
                (format!("{name}.labels"), write_labels(&doc.face_ids, &m.labels)),
                (format!("{name}.gt.json"), serde_json::to_string_pretty(&m.truth).expect("ground truth serializes") + "\n"),
            ];
            for (file, text) in &files {
                let path = out_dir.join(file);
                fs::write(&path, text).map_err(io_err(&path))?;
            }
            let mut counts = vec![0u64; N_CLASSES];
            for &(c, _) in &m.labels {
                counts[c as usize] += 1;
            }
            let [step, labels, truth] = files.map(|(f, _)| f);
            let entry = ManifestEntry { name, step, labels, truth, seed, n_features: m.truth.features.len(), split: splits[i] };
            Ok((entry, counts))
        })
        .collect();
    let mut models = Vec::with_capacity(spec.n_models);
    let mut class_face_counts = vec![0u64; N_CLASSES];
    let mut first_err = None;
    for r in results {
        match r {
            Ok((e, c)) => {
                for (t, x) in class_face_counts.iter_mut().zip(c) {
                    *t += x;
                }
                models.push(e);
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let manifest = Manifest { spec: spec.clone(), models, class_face_counts };
    let path = out_dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n").map_err(io_err(&path))?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, GenError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text)
        .map_err(|e| GenError::Io { path, source: io::Error::new(io::ErrorKind::InvalidData, e) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taxonomy_anchors() {
        let t = taxonomy();
        assert_eq!(t[12].name, "blind hole");
        assert_eq!(t[23].group, Group::EdgeProfiling);
        assert_eq!(t.iter().filter(|c| c.additive).count(), 5);
        assert!((24..29).all(|i| t[i].additive));
        assert!(t.iter().enumerate().all(|(i, c)| c.index as usize == i));
    }

    #[test]
    fn splits_for_150() {
        let s = assign_splits(150, 1);
        let n = |x| s.iter().filter(|&&v| v == x).count();
        assert_eq!((n(Split::Train), n(Split::Val), n(Split::Test)), (90, 30, 30));
    }

    #[test]
    fn same_seed_same_model() {
        let spec = GenSpec::default();
        let a = generate_model(42, &spec).unwrap();
        let b = generate_model(42, &spec).unwrap();
        assert_eq!(write_step(&a.solid).text, write_step(&b.solid).text);
        assert_eq!(a.truth, b.truth);
    }
}
