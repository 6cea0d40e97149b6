use hfr_core::brep::Solid;
use hfr_core::featuregen::{derive_seed, generate_model, GenSpec, GeneratedModel};
use hfr_core::geomextract::{
    extract_dimensions, group_instances, stock_sizes, FeatureInstance, Orientation, RigidTransform,
};
use hfr_core::geom::Vec3;
use hfr_core::step_io::{parse_step, write_step};

fn instances_by_label(m: &GeneratedModel) -> Vec<FeatureInstance> {
    m.truth
        .features
        .iter()
        .map(|f| FeatureInstance {
            instance_id: f.instance_id,
            class: f.class,
            faces: (0..m.labels.len()).filter(|&i| m.labels[i].1 == f.instance_id).collect(),
        })
        .collect()
}

fn check_model(m: &GeneratedModel, solid: &Solid) -> Result<(), String> {
    for (inst, f) in instances_by_label(m).iter().zip(&m.truth.features) {
        let x = extract_dimensions(solid, inst).map_err(|e| format!("{e} (truth {:?})", f.dims))?;
        x.dims.compare(&f.dims, 1e-6).map_err(|e| format!("class {}: {e}", f.class))?;
        if x.orientation != f.orientation {
            return Err(format!("class {}: orientation {:?} vs {:?}", f.class, x.orientation, f.orientation));
        }
    }
    Ok(())
}

#[test]
fn oracle_labels_recover_ground_truth() {
    let spec = GenSpec::default();
    let mut failures = Vec::new();
    for i in 0..120 {
        let m = generate_model(derive_seed(9, i), &spec).unwrap();
        if let Err(e) = check_model(&m, &m.solid) {
            failures.push(format!("model {i}: {e}"));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn extraction_survives_step_round_trip() {
    let spec = GenSpec::default();
    for i in 0..30 {
        let m = generate_model(derive_seed(10, i), &spec).unwrap();
        let parsed = parse_step(&write_step(&m.solid).text).unwrap();
        check_model(&m, &parsed).unwrap_or_else(|e| panic!("model {i}: {e}"));
    }
}

#[test]
fn every_class_is_extracted() {
    let spec = GenSpec::default();
    let mut seen = [false; 29];
    let mut i = 0;
    while !seen.iter().all(|&s| s) && i < 400 {
        let m = generate_model(derive_seed(11, i), &spec).unwrap();
        check_model(&m, &m.solid).unwrap_or_else(|e| panic!("model {i}: {e}"));
        for f in &m.truth.features {
            seen[f.class as usize] = true;
        }
        i += 1;
    }
    let missing: Vec<usize> = (0..29).filter(|&c| !seen[c]).collect();
    assert!(missing.is_empty(), "classes never generated: {missing:?}");
}

#[test]
fn connected_components_match_instances() {
    let spec = GenSpec::default();
    for i in 0..40 {
        let m = generate_model(derive_seed(12, i), &spec).unwrap();
        let classes: Vec<u8> = m.labels.iter().map(|l| l.0).collect();
        let mut got: Vec<Vec<usize>> = group_instances(&m.solid, &classes).into_iter().map(|g| g.faces).collect();
        let mut want: Vec<Vec<usize>> = instances_by_label(&m).into_iter().map(|g| g.faces).collect();
        got.sort();
        want.sort();
        assert_eq!(got, want, "model {i}");
    }
}

#[test]
fn stock_sizes_match_ground_truth() {
    let spec = GenSpec::default();
    for i in 0..40 {
        let m = generate_model(derive_seed(13, i), &spec).unwrap();
        let classes: Vec<u8> = m.labels.iter().map(|l| l.0).collect();
        let s = stock_sizes(&m.solid, &classes).unwrap();
        assert!(s.min_dims().approx_eq(m.truth.min_stock, 1e-9), "model {i}");
        assert!(s.max_dims().approx_eq(m.truth.max_stock, 1e-9), "model {i}");
    }
}

#[test]
fn dimensions_are_invariant_under_rigid_motion() {
    let spec = GenSpec::default();
    let t = RigidTransform {
        translation: Vec3::new(12.5, -40.0, 3.25),
        ..RigidTransform::rotation_about(Vec3::new(1.0, 2.0, 3.0), 0.7)
    };
    for i in 0..20 {
        let m = generate_model(derive_seed(14, i), &spec).unwrap();
        let moved = t.apply_solid(&m.solid).unwrap();
        // These classes define their depth axis by global axis preference.
        for inst in instances_by_label(&m).into_iter().filter(|g| !matches!(g.class, 8..=10 | 17 | 22)) {
            let a = extract_dimensions(&m.solid, &inst).unwrap();
            let b = extract_dimensions(&moved, &inst).unwrap_or_else(|e| panic!("model {i}: {e}"));
            for ((k, x), (_, y)) in a.dims.0.iter().zip(&b.dims.0) {
                if let (hfr_core::geomextract::DimValue::Scalar(x), hfr_core::geomextract::DimValue::Scalar(y)) = (x, y) {
                    assert!((x - y).abs() < 1e-9 * x.abs().max(1.0), "model {i} class {} {k}: {x} vs {y}", inst.class);
                }
            }
            assert_eq!(a.orientation == Orientation::None, b.orientation == Orientation::None);
        }
    }
}
