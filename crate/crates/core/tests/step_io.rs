mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};

use common::mutate_step;
use hfr_core::featuregen::{derive_seed, generate_model, GenSpec};
use hfr_core::step_io::{parse_labels, parse_step, parse_step_with_ids, write_step, StepError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus(n: usize) -> Vec<String> {
    (0..n).map(|i| write_step(&generate_model(derive_seed(40, i as u64), &GenSpec::default()).unwrap().solid).text).collect()
}

#[test]
fn malformed_documents_give_structured_errors() {
    let docs = corpus(8);
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let (mut rejected, mut crashes) = (0, 0);
    for _ in 0..2000 {
        let text = mutate_step(&docs[rng.gen_range(0..docs.len())], &mut rng);
        match catch_unwind(AssertUnwindSafe(|| parse_step_with_ids(&text).map(|(s, _)| s.validate()))) {
            Ok(Err(_)) => rejected += 1,
            Ok(Ok(_)) => {}
            Err(_) => crashes += 1,
        }
    }
    assert_eq!(crashes, 0);
    assert!(rejected > 1500, "only {rejected} rejections");
}

#[test]
fn degenerate_inputs() {
    for text in ["", "ISO-10303-21;", "DATA;\nENDSEC;", "\u{0}\u{1}", &"(".repeat(100_000)] {
        assert!(parse_step(text).is_err());
    }
    assert!(matches!(parse_labels("face_id,class_index,instance_id\n3,30,1\n"), Err(StepError::Label { .. })));
}

#[test]
fn writer_output_parses_back_identically() {
    for text in corpus(12) {
        let s = parse_step(&text).unwrap();
        assert_eq!(write_step(&s).text, text);
    }
}
