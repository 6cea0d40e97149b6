mod common;

use std::fs;

use common::{fine_mesh, oracle_convexity};
use hfr_core::featuregen::{
    assign_splits, derive_seed, generate_dataset, generate_model, taxonomy, GenSpec, Split, N_CLASSES, STOCK_CLASS,
};
use hfr_core::step_io::{join_labels, parse_labels, parse_step_with_ids, write_labels, write_step};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn counts_and_stock_ranges(seed in any::<u64>()) {
        let m = generate_model(seed, &GenSpec::default()).unwrap();
        let n = m.truth.features.len();
        prop_assert!((4..=8).contains(&n));
        for k in 0..3 {
            prop_assert!((30.0..=70.0).contains(&m.truth.stock.get(k)));
        }
        prop_assert_eq!(m.truth.kernel_rejections, 0);
    }

    #[test]
    fn labels_follow_creating_feature(seed in any::<u64>()) {
        let m = generate_model(seed, &GenSpec::default()).unwrap();
        prop_assert_eq!(m.labels.len(), m.solid.faces.len());
        for (f, face) in m.solid.faces.iter().enumerate() {
            let (class, inst) = m.labels[f];
            match face.tag {
                None => prop_assert_eq!((class, inst), (STOCK_CLASS, 0)),
                Some(i) => {
                    let rec = &m.truth.features[i as usize];
                    prop_assert_eq!((class, inst), (rec.class, rec.instance_id));
                }
            }
        }
        for rec in &m.truth.features {
            prop_assert!(m.labels.iter().any(|l| l.1 == rec.instance_id), "feature without faces");
        }
    }

    #[test]
    fn solids_are_valid_and_survive_step(seed in any::<u64>()) {
        let m = generate_model(seed, &GenSpec::default()).unwrap();
        prop_assert!(m.solid.validate().is_ok());
        let doc = write_step(&m.solid);
        let (parsed, ids) = parse_step_with_ids(&doc.text).unwrap();
        prop_assert_eq!(&ids, &doc.face_ids);
        prop_assert!(m.solid.topology_diff(&parsed, 1e-9).is_none(), "{:?}", m.solid.topology_diff(&parsed, 1e-9));
        let rows = parse_labels(&write_labels(&doc.face_ids, &m.labels)).unwrap();
        prop_assert_eq!(join_labels(&ids, &rows).unwrap(), m.labels.clone());
    }

    #[test]
    fn positive_dimensions(seed in any::<u64>()) {
        let m = generate_model(seed, &GenSpec::default()).unwrap();
        for rec in &m.truth.features {
            for (k, v) in &rec.dims.0 {
                if let hfr_core::geomextract::DimValue::Scalar(x) = v {
                    prop_assert!(*x > 0.0 && x.is_finite(), "{} = {}", k, x);
                }
            }
            if let Some(d) = rec.dims.scalar("Depth") {
                let extent = rec.sweep.host.frame(m.truth.stock).extent;
                match rec.sweep.kind {
                    hfr_core::brep::SweepKind::Blind(b) => prop_assert!(b < extent),
                    hfr_core::brep::SweepKind::Through if matches!(rec.class, 1..=7) => prop_assert_eq!(d, extent),
                    _ => {}
                }
            }
        }
    }
}

#[test]
fn same_seed_gives_identical_step() {
    let spec = GenSpec::default();
    for s in [0, 1, 77, u64::MAX] {
        let a = write_step(&generate_model(s, &spec).unwrap().solid).text;
        let b = write_step(&generate_model(s, &spec).unwrap().solid).text;
        assert_eq!(a, b);
    }
}

#[test]
fn convexity_matches_material_oracle_on_generated_models() {
    let spec = GenSpec::default();
    for i in 0..6 {
        let m = generate_model(derive_seed(3, i), &spec).unwrap();
        let mesh = fine_mesh(&m.solid);
        for e in 0..m.solid.edges.len() {
            if let Some(o) = oracle_convexity(&m.solid, &mesh, e) {
                assert_eq!(m.solid.edge_convexity(e).unwrap(), o, "model {i} edge {e}");
            }
        }
    }
}

#[test]
fn split_sizes_follow_sixty_twenty_twenty() {
    for (n, want) in [(150, (90, 30, 30)), (2000, (1200, 400, 400)), (20, (12, 4, 4))] {
        let s = assign_splits(n, 5);
        let c = |x| s.iter().filter(|&&v| v == x).count();
        assert_eq!((c(Split::Train), c(Split::Val), c(Split::Test)), want);
    }
}

#[test]
fn dataset_is_independent_of_worker_count() {
    let spec = GenSpec { seed: 21, n_models: 24, ..GenSpec::default() };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut manifests = Vec::new();
    for (d, threads) in dirs.iter().zip([1, 8]) {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        manifests.push(pool.install(|| generate_dataset(&spec, d.path())).unwrap());
    }
    assert_eq!(manifests[0], manifests[1]);
    let mut names: Vec<_> = fs::read_dir(dirs[0].path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 24 * 3 + 1);
    for n in names {
        assert_eq!(fs::read(dirs[0].path().join(&n)).unwrap(), fs::read(dirs[1].path().join(&n)).unwrap(), "{n:?}");
    }
    let counted: u64 = manifests[0].class_face_counts.iter().sum();
    assert_eq!(manifests[0].class_face_counts.len(), N_CLASSES);
    assert!(counted > 0);
}

#[test]
fn taxonomy_names_and_groups() {
    let t = taxonomy();
    assert_eq!(t.len(), 30);
    assert_eq!(t[4].display, "6-sided Passage");
    assert_eq!(t[7].display, "Circular Thru Slot");
    assert_eq!(t[29].name, "stock");
    assert_eq!(t.iter().filter(|c| c.additive).map(|c| c.index).collect::<Vec<_>>(), vec![24, 25, 26, 27, 28]);
}
