#![allow(dead_code)]

use hfr_core::brep::EdgeConvexity;
use hfr_core::geom::Vec3;
use hfr_core::hiergraph::{FaceLink, FaceNode, FacetNode, HierGraph};
use hfr_gcnn::{Network, PackedBatch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(rng.gen(), rng.gen(), rng.gen())
}

/// A random normalized graph with every edge class present.
pub fn random_graph(seed: u64, faces: usize, facets: usize) -> HierGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kinds = [EdgeConvexity::Convex, EdgeConvexity::Concave, EdgeConvexity::Smooth];
    let faces_v: Vec<FaceNode> = (0..faces)
        .map(|i| {
            let cyl = rng.gen_bool(0.3);
            FaceNode {
                face_id: i as u64,
                label: rng.gen_range(0..30),
                face_type: if cyl { [0.0, 1.0] } else { [1.0, 0.0] },
                area: rng.gen_range(0.01..0.2),
                centroid: unit(&mut rng),
            }
        })
        .collect();
    let mut links = Vec::new();
    for a in 0..faces {
        for b in a + 1..faces {
            if b == a + 1 || rng.gen_bool(0.2) {
                links.push(FaceLink { a: a as u32, b: b as u32, convexity: kinds[links.len() % 3] });
            }
        }
    }
    let facets_v: Vec<FacetNode> = (0..facets)
        .map(|i| {
            let n = (unit(&mut rng) - Vec3::new(0.5, 0.5, 0.5)).normalized();
            FacetNode {
                plane: [n.x, n.y, n.z, rng.gen_range(-1.0..1.0)],
                centroid: unit(&mut rng),
                face: if i < faces { i as u32 } else { rng.gen_range(0..faces as u32) },
            }
        })
        .collect();
    let mut facet_links = Vec::new();
    for a in 0..facets {
        for b in a + 1..facets {
            if b == a + 1 || rng.gen_bool(0.1) {
                facet_links.push((a as u32, b as u32));
            }
        }
    }
    HierGraph { name: format!("r{seed}"), faces: faces_v, links, facets: facets_v, facet_links, normalized: true }
}

pub struct FdReport {
    pub max_rel: f64,
    pub checked: usize,
    pub kinks: usize,
    pub worst: String,
}

/// Relative-error denominator floor; smaller gradients are compared
/// absolutely (tolerance `1e-4 * REL_FLOOR`).
pub const REL_FLOOR: f64 = 1e-6;

/// Central differences over every trainable scalar. Coordinates whose
/// perturbation flips a ReLU are reported as kinks and left out.
pub fn finite_difference_check(net: &Network, b: &PackedBatch, seed: u64, step: f64) -> FdReport {
    let analytic = net.loss_and_grads(b, seed).unwrap().grads;
    let base = net.relu_pattern(b, seed).unwrap();
    let mut report = FdReport { max_rel: 0.0, checked: 0, kinks: 0, worst: String::new() };
    let n_tensors = net.tensors().len();
    for k in 0..n_tensors {
        for i in 0..net.tensors()[k].len() {
            let eval = |delta: f64| {
                let mut p = net.clone();
                p.tensors_mut()[k].data[i] += delta;
                (p.loss(b, hfr_gcnn::Mode::Train { seed }).unwrap(), p.relu_pattern(b, seed).unwrap())
            };
            let (lp, pp) = eval(step);
            let (lm, pm) = eval(-step);
            if pp != base || pm != base {
                report.kinks += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * step);
            let a = analytic.tensors()[k].data[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.checked += 1;
            if rel > report.max_rel {
                report.max_rel = rel;
                report.worst = format!("tensor {k} entry {i}: analytic {a:e} numeric {numeric:e}");
            }
        }
    }
    report
}
