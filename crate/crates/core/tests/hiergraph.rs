mod common;

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};

use common::{fine_mesh, oracle_convexity};
use hfr_core::brep::{triangulate, Solid, DEFAULT_ANGULAR_STEP};
use hfr_core::featuregen::{derive_seed, generate_model, GenSpec, GeneratedModel};
use hfr_core::hiergraph::{
    build_hier_graph, deserialize_batches, graph_from_solid, make_batches, mesh_bounds, normalize, serialize_batches,
    GraphBatch, GraphError, HierGraph, VERTEX_CAP,
};
use proptest::prelude::*;

fn model(seed: u64) -> GeneratedModel {
    generate_model(seed, &GenSpec::default()).unwrap()
}

fn classes(m: &GeneratedModel) -> Vec<u8> {
    m.labels.iter().map(|l| l.0).collect()
}

fn graph(name: &str, m: &GeneratedModel) -> HierGraph {
    graph_from_solid(name, &m.solid, &classes(m)).unwrap()
}

fn q(x: f64) -> i64 {
    (x * 1e6).round() as i64
}

fn h<T: Hash>(t: &T) -> u64 {
    let mut s = DefaultHasher::new();
    t.hash(&mut s);
    s.finish()
}

/// Weisfeiler-Lehman style hash over the face level plus the multiset of
/// facet rows; invariant under node renumbering.
fn canonical_hash(g: &HierGraph) -> u64 {
    let mut colors: Vec<u64> = (0..g.faces.len()).map(|i| h(&(g.face_features(i).map(q), g.faces[i].label))).collect();
    for _ in 0..3 {
        let mut nb: Vec<Vec<(u64, usize)>> = vec![Vec::new(); colors.len()];
        for l in &g.links {
            nb[l.a as usize].push((colors[l.b as usize], l.convexity.index()));
            nb[l.b as usize].push((colors[l.a as usize], l.convexity.index()));
        }
        colors = colors
            .iter()
            .zip(nb.iter_mut())
            .map(|(c, n)| {
                n.sort_unstable();
                h(&(c, &n))
            })
            .collect();
    }
    colors.sort_unstable();
    let mut facets: Vec<[i64; 7]> = (0..g.facets.len()).map(|i| g.facet_features(i).map(q)).collect();
    facets.sort_unstable();
    h(&(colors, facets))
}

fn permute_faces(s: &Solid, perm: &[usize]) -> Solid {
    let faces = perm.iter().map(|&i| s.faces[i].clone()).collect();
    Solid::from_parts(s.vertices.clone(), s.edges.clone(), faces)
}

fn all_graphs(batches: &[GraphBatch]) -> Vec<String> {
    let mut v: Vec<String> = batches.iter().flat_map(|b| b.graphs.iter().map(|g| g.name.clone())).collect();
    v.sort();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn structure_matches_the_solid(seed in any::<u64>()) {
        let m = model(seed);
        let mesh = triangulate(&m.solid, DEFAULT_ANGULAR_STEP).unwrap();
        let g = build_hier_graph("g", &m.solid, &mesh, &classes(&m)).unwrap();
        prop_assert_eq!(g.faces.len(), m.solid.faces.len());
        prop_assert_eq!(g.facets.len(), mesh.facets.len());
        let mut per_face = vec![0; g.faces.len()];
        for f in &g.facets {
            per_face[f.face as usize] += 1;
        }
        prop_assert!(per_face.iter().all(|&c| c >= 1));

        let mut want: BTreeMap<(u32, u32), BTreeSet<usize>> = BTreeMap::new();
        for (e, (a, b)) in m.solid.face_adjacency() {
            want.entry((a as u32, b as u32)).or_default().insert(m.solid.edge_convexity(e).unwrap().index());
        }
        prop_assert_eq!(g.links.len(), want.len());
        for l in &g.links {
            let kinds = &want[&(l.a, l.b)];
            prop_assert_eq!(kinds.len(), 1, "face pair with mixed edge convexity");
            prop_assert!(kinds.contains(&l.convexity.index()));
        }
        for (t, f) in mesh.facets.iter().zip(&g.facets) {
            for &k in t {
                let p = mesh.points[k];
                let r = f.plane[0] * p.x + f.plane[1] * p.y + f.plane[2] * p.z - f.plane[3];
                prop_assert!(r.abs() < 1e-9, "plane residual {}", r);
            }
        }
        for &(a, b) in &g.facet_links {
            prop_assert!(a < b && (b as usize) < g.facets.len());
        }
    }

    #[test]
    fn normalization_bounds_and_idempotence(seed in any::<u64>()) {
        let m = model(seed);
        let g = graph("g", &m);
        prop_assert!(g.normalized);
        let total: f64 = g.faces.iter().map(|f| f.area).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for i in 0..g.faces.len() {
            prop_assert!(g.face_features(i)[3..].iter().all(|x| (0.0..=1.0).contains(x)));
        }
        for i in 0..g.facets.len() {
            let r = g.facet_features(i);
            let n = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
            prop_assert!((n - 1.0).abs() < 1e-9);
            prop_assert!(r[3].abs() <= 1.0 + 1e-9);
            prop_assert!(r[4..].iter().all(|x| (0.0..=1.0).contains(x)));
        }
        let mesh = triangulate(&m.solid, DEFAULT_ANGULAR_STEP).unwrap();
        prop_assert_eq!(normalize(&g, &mesh_bounds(&mesh)).unwrap(), g);
    }

    #[test]
    fn container_round_trip(seeds in prop::collection::vec(any::<u64>(), 0..6), bseed in any::<u64>()) {
        let graphs: Vec<HierGraph> = seeds.iter().enumerate().map(|(i, &s)| graph(&format!("m{i}"), &model(s))).collect();
        let batches = make_batches(graphs, VERTEX_CAP, bseed).unwrap();
        let bytes = serialize_batches(&batches);
        prop_assert_eq!(deserialize_batches(&bytes).unwrap(), batches);
    }

    #[test]
    fn packing_respects_cap(sizes in prop::collection::vec((1usize..50, 1usize..3000), 1..40), seed in any::<u64>()) {
        let graphs: Vec<HierGraph> = sizes.iter().enumerate().map(|(i, &(f, t))| {
            let mut g = graph("x", &model(1));
            g.name = format!("g{i:03}");
            g.faces.truncate(f.min(g.faces.len()));
            g.facets.resize(t, g.facets[0].clone());
            g
        }).collect();
        let names: Vec<String> = { let mut v: Vec<_> = graphs.iter().map(|g| g.name.clone()).collect(); v.sort(); v };
        let a = make_batches(graphs.clone(), VERTEX_CAP, seed).unwrap();
        prop_assert!(a.iter().all(|b| b.total_vertices() < VERTEX_CAP && !b.graphs.is_empty()));
        prop_assert_eq!(all_graphs(&a), names);
        prop_assert_eq!(make_batches(graphs, VERTEX_CAP, seed).unwrap(), a);
    }
}

#[test]
fn face_links_agree_with_material_oracle() {
    for i in 0..4 {
        let m = model(derive_seed(31, i));
        let g = graph("g", &m);
        let mesh = fine_mesh(&m.solid);
        let adj = m.solid.face_adjacency();
        for l in &g.links {
            let e = adj.iter().find(|(_, &p)| p == (l.a as usize, l.b as usize)).map(|(&e, _)| e).unwrap();
            if let Some(o) = oracle_convexity(&m.solid, &mesh, e) {
                assert_eq!(l.convexity, o, "model {i} faces {} {}", l.a, l.b);
            }
        }
    }
}

#[test]
fn hash_is_invariant_under_face_renumbering() {
    for i in 0..5 {
        let m = model(derive_seed(32, i));
        let n = m.solid.faces.len();
        let perm: Vec<usize> = (0..n).map(|k| (k * 7 + 3) % n).collect();
        if perm.iter().collect::<BTreeSet<_>>().len() != n {
            continue;
        }
        let labels = classes(&m);
        let moved = permute_faces(&m.solid, &perm);
        let moved_labels: Vec<u8> = perm.iter().map(|&k| labels[k]).collect();
        let a = graph_from_solid("a", &m.solid, &labels).unwrap();
        let b = graph_from_solid("b", &moved, &moved_labels).unwrap();
        assert_eq!(canonical_hash(&a), canonical_hash(&b), "model {i}");
        let mut c = b.clone();
        c.faces[0].label = (c.faces[0].label + 1) % 30;
        assert_ne!(canonical_hash(&a), canonical_hash(&c));
    }
}

#[test]
fn truncation_and_bit_flips_are_errors() {
    let batches = make_batches((0..3).map(|i| graph(&format!("m{i}"), &model(i))).collect(), VERTEX_CAP, 0).unwrap();
    let bytes = serialize_batches(&batches);
    for cut in (0..bytes.len()).step_by(97) {
        assert!(deserialize_batches(&bytes[..cut]).is_err(), "cut {cut}");
    }
    for pos in (0..bytes.len()).step_by(131) {
        let mut b = bytes.clone();
        b[pos] ^= 0x10;
        assert!(deserialize_batches(&b).is_err(), "flip {pos}");
    }
    let mut b = bytes.clone();
    *b.last_mut().unwrap() ^= 1;
    assert!(matches!(deserialize_batches(&b), Err(GraphError::Checksum(_))));
}

#[test]
fn generated_models_fit_the_vertex_cap() {
    let sizes: Vec<usize> = (0..200).map(|i| graph("g", &model(derive_seed(33, i))).vertex_count()).collect();
    let max = *sizes.iter().max().unwrap();
    assert!(max < VERTEX_CAP, "largest graph has {max} vertices");
}
