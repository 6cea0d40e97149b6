//! One pass/fail line per acceptance criterion.
//!
//! Criterion 6 runs the reduced profile (500 models, width 64, 30 epochs)
//! unless `HFR_FULL_ACCEPTANCE=1`, which selects the desk-scale profile
//! (2000 models, 7 layers per level, width 128, 100 epochs; hours on one CPU).
//! Numeric arguments select criteria: `cargo test --test acceptance -- 1 4`.

#[path = "../../core/tests/common/mod.rs"]
mod core_oracles;
#[path = "../../gcnn/tests/common/mod.rs"]
mod gcnn_oracles;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use hfr_core::brep::{triangulate, BoxSide, SweepKind, DEFAULT_ANGULAR_STEP};
use hfr_core::featuregen::{derive_seed, generate_model, GenSpec, GeneratedModel};
use hfr_core::geomextract::{extract_dimensions, extract_report, stock_sizes, truth_report, FeatureInstance};
use hfr_core::hiergraph::{build_hier_graph, make_batches, VERTEX_CAP};
use hfr_core::metrics::{scores, ConfusionMatrix};
use hfr_core::step_io::{parse_step, parse_step_with_ids, write_labels, write_step};
use hfr_gcnn::{face_accuracy, train, ModelConfig, Network, PackedBatch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODELS: usize = 500;
const SEED: u64 = 2024;
const DIM_REL_TOL: f64 = 1e-6;
const STOCK_TOL: f64 = 1e-9;
const ROUND_TRIP_TOL: f64 = 1e-9;
const FUZZ_CASES: usize = 10_000;
const FD_STEP: f64 = 1e-4;
const FD_MAX_REL: f64 = 1e-4;
const FD_BUDGET: Duration = Duration::from_secs(60);
const OVERFIT_TARGET: f64 = 0.99;
const PLANE_TOL: f64 = 1e-9;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn classes(m: &GeneratedModel) -> Vec<u8> {
    m.labels.iter().map(|l| l.0).collect()
}

fn hfr(cwd: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_hfr"))
        .args(args)
        .current_dir(cwd)
        .env_remove("HFR_CONFIG")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("hfr {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn dimension_exactness(models: &[GeneratedModel]) -> Outcome {
    let (mut instances, mut bad_dims, mut bad_orient, mut bad_reports) = (0, 0, 0, 0);
    let mut first = None;
    for (i, m) in models.iter().enumerate() {
        for f in &m.truth.features {
            instances += 1;
            let inst = FeatureInstance {
                instance_id: f.instance_id,
                class: f.class,
                faces: (0..m.labels.len()).filter(|&k| m.labels[k].1 == f.instance_id).collect(),
            };
            match extract_dimensions(&m.solid, &inst) {
                Ok(x) => {
                    if let Err(e) = x.dims.compare(&f.dims, DIM_REL_TOL) {
                        bad_dims += 1;
                        first.get_or_insert(format!("model {i} class {}: {e}", f.class));
                    }
                    if x.orientation != f.orientation {
                        bad_orient += 1;
                        first.get_or_insert(format!("model {i} class {}: orientation", f.class));
                    }
                }
                Err(e) => {
                    bad_dims += 1;
                    first.get_or_insert(format!("model {i} class {}: {e}", f.class));
                }
            }
        }
        let got = extract_report(&m.solid, &classes(m)).map_err(|e| e.to_string())?.to_string();
        if got != truth_report(&m.truth, &m.labels).to_string() {
            bad_reports += 1;
            first.get_or_insert(format!("model {i}: report text differs"));
        }
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for (i, m) in models.iter().take(5).enumerate() {
        let doc = write_step(&m.solid);
        let (step, labels) = (format!("m{i}.step"), format!("m{i}.labels"));
        fs::write(dir.path().join(&step), &doc.text).map_err(|e| e.to_string())?;
        fs::write(dir.path().join(&labels), write_labels(&doc.face_ids, &m.labels)).map_err(|e| e.to_string())?;
        let out = hfr(dir.path(), &["extract", &step, "--labels", &labels])?;
        check(out == truth_report(&m.truth, &m.labels).to_string(), || format!("`hfr extract` on model {i}"))?;
    }
    check(bad_dims + bad_orient + bad_reports == 0, || {
        format!(
            "{bad_dims} dimension, {bad_orient} orientation, {bad_reports} report mismatches; first: {}",
            first.unwrap_or_default()
        )
    })?;
    Ok(format!("{} models, {instances} instances within {DIM_REL_TOL:e}, orientation 100%", models.len()))
}

fn stock_sizing(models: &[GeneratedModel]) -> Outcome {
    let mut with_top = 0;
    for (i, m) in models.iter().enumerate() {
        let s = stock_sizes(&m.solid, &classes(m)).map_err(|e| e.to_string())?;
        check(s.min_dims().approx_eq(m.truth.min_stock, STOCK_TOL), || format!("model {i}: min stock"))?;
        check(s.max_dims().approx_eq(m.truth.max_stock, STOCK_TOL), || format!("model {i}: max stock"))?;
        let tallest = |side: BoxSide| {
            m.truth
                .features
                .iter()
                .filter(|f| f.sweep.host == side)
                .filter_map(|f| match f.sweep.kind {
                    SweepKind::Outward(d) => Some(d),
                    _ => None,
                })
                .fold(0.0, f64::max)
        };
        let (top, bottom) = (tallest(BoxSide::Top), tallest(BoxSide::Bottom));
        with_top += usize::from(top > 0.0);
        let dz = s.max_dims().z - s.min_dims().z;
        check((dz - (top + bottom)).abs() <= STOCK_TOL * dz.max(1.0), || {
            format!("model {i}: max_z - min_z = {dz}, tallest top extrusion {top}, bottom {bottom}")
        })?;
    }
    Ok(format!(
        "{} models within {STOCK_TOL:e}; max_z - min_z equals tallest top extrusion depth ({with_top} models with one)",
        models.len()
    ))
}

fn step_round_trip(models: &[GeneratedModel]) -> Outcome {
    for (i, m) in models.iter().enumerate() {
        let parsed = parse_step(&write_step(&m.solid).text).map_err(|e| format!("model {i}: {e}"))?;
        if let Some(d) = m.solid.topology_diff(&parsed, ROUND_TRIP_TOL) {
            return Err(format!("model {i}: {d}"));
        }
    }
    let docs: Vec<String> = models.iter().take(16).map(|m| write_step(&m.solid).text).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut crashes, mut rejected) = (0, 0);
    let hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    for _ in 0..FUZZ_CASES {
        let text = core_oracles::mutate_step(&docs[rng.gen_range(0..docs.len())], &mut rng);
        match catch_unwind(AssertUnwindSafe(|| parse_step_with_ids(&text).map(|(s, _)| s.validate()))) {
            Ok(Ok(Ok(()))) => {}
            Ok(_) => rejected += 1,
            Err(_) => crashes += 1,
        }
    }
    std::panic::set_hook(hook);
    check(crashes == 0, || format!("{crashes} parser crashes in {FUZZ_CASES} fuzz cases"))?;
    Ok(format!(
        "{} round trips isomorphic within {ROUND_TRIP_TOL:e}; {FUZZ_CASES} fuzz cases, 0 crashes, {rejected} structured rejections",
        models.len()
    ))
}

fn gradient_check() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let configs = 6;
    for seed in 0..configs {
        let cfg = ModelConfig { layers_per_level: 2, width: 8, seed, ..ModelConfig::default() };
        let net = Network::new(cfg).map_err(|e| e.to_string())?;
        let (faces, facets) = (6 + 2 * seed as usize, 14 + 3 * seed as usize);
        let b = PackedBatch::from_graphs(&[gcnn_oracles::random_graph(500 + seed, faces, facets)])
            .map_err(|e| e.to_string())?;
        let r = gcnn_oracles::finite_difference_check(&net, &b, seed, FD_STEP);
        check(r.max_rel < FD_MAX_REL, || format!("seed {seed}: max relative error {:.3e} at {}", r.max_rel, r.worst))?;
        worst = worst.max(r.max_rel);
    }
    let elapsed = t.elapsed();
    check(elapsed < FD_BUDGET, || format!("took {elapsed:.1?}"))?;
    Ok(format!("{configs} configurations, max relative error {worst:.2e} < {FD_MAX_REL:e} in {elapsed:.1?}"))
}

fn pack_models(models: &[GeneratedModel], seed: u64) -> Result<Vec<PackedBatch>, String> {
    let graphs = models
        .iter()
        .enumerate()
        .map(|(i, m)| {
            hfr_core::hiergraph::graph_from_solid(&format!("m{i:03}"), &m.solid, &classes(m)).map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, _>>()?;
    let batches = make_batches(graphs, VERTEX_CAP, seed).map_err(|e| e.to_string())?;
    batches.iter().map(|b| PackedBatch::from_batch(b).map_err(|e| e.to_string())).collect()
}

fn overfit(models: &[GeneratedModel]) -> Outcome {
    let batches = pack_models(&models[..20], SEED)?;
    let cfg = ModelConfig { width: 64, epochs: 300, dropout: 0.0, seed: SEED, ..ModelConfig::default() };
    let out = train(&cfg, &batches, &batches, |l| {
        if l.epoch % 25 == 0 {
            println!("  overfit epoch {l}");
        }
        l.val_face_acc < OVERFIT_TARGET
    })
    .map_err(|e| e.to_string())?;
    let acc = face_accuracy(&out.best, &batches).map_err(|e| e.to_string())?;
    check(acc >= OVERFIT_TARGET, || format!("train face accuracy {acc:.4} after {} epochs", out.history.len()))?;
    Ok(format!("20 models, width 64: train face accuracy {:.2}% at epoch {}", acc * 100.0, out.best_epoch))
}

fn generalization() -> Outcome {
    let full = std::env::var("HFR_FULL_ACCEPTANCE").is_ok_and(|v| v == "1");
    let (n, layers, width, epochs, target, budget) =
        if full { ("2000", "7", "128", "100", 0.90, None) } else { ("500", "7", "64", "30", 0.80, Some(1800)) };
    let t = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    hfr(d, &["generate", "--n", n, "--seed", "2024", "--out", "data"])?;
    hfr(d, &["graph", "--data", "data", "--seed", "2024"])?;
    let train_args = ["train", "--layers", layers, "--width", width, "--epochs", epochs, "--seed", "2024"];
    hfr(d, &train_args)?;
    let report = hfr(d, &["eval", "--split", "test"])?;
    println!("{report}");
    let acc = report
        .lines()
        .find_map(|l| l.strip_prefix("Accuracy").and_then(|v| v.trim().parse::<f64>().ok()))
        .ok_or("no accuracy line in eval output")?
        / 100.0;
    let elapsed = t.elapsed();
    let profile = if full { "full" } else { "reduced" };
    check(acc >= target, || format!("{profile} profile: test face accuracy {:.2}% < {:.0}%", acc * 100.0, target * 100.0))?;
    if let Some(secs) = budget {
        check(elapsed.as_secs() < secs, || format!("{profile} profile took {elapsed:.0?}"))?;
    }
    Ok(format!(
        "{profile} profile ({n} models, width {width}, {epochs} epochs): test face accuracy {:.2}% in {elapsed:.0?}",
        acc * 100.0
    ))
}

fn metrics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for trial in 0..1000 {
        let n = if trial % 2 == 0 { 30 } else { rng.gen_range(2..30) };
        let pairs = core_oracles::random_pairs(&mut rng, n);
        let mut m = ConfusionMatrix::new(n);
        for &(t, p) in &pairs {
            m.accumulate(t, p).map_err(|e| e.to_string())?;
        }
        let s = scores(&m).map_err(|e| e.to_string())?;
        let (acc, per) = core_oracles::brute_force(&pairs, n);
        let present: Vec<_> = per.iter().enumerate().filter_map(|(c, x)| x.map(|v| (c, v))).collect();
        let k = present.len() as f64;
        let same = s.accuracy == acc
            && s.per_class.len() == present.len()
            && s.per_class.iter().zip(&present).all(|(cs, (c, (p, r, f)))| {
                (cs.class, cs.precision, cs.recall, cs.f1) == (*c, *p, *r, *f)
            })
            && s.macro_precision == present.iter().map(|x| x.1 .0).sum::<f64>() / k
            && s.macro_recall == present.iter().map(|x| x.1 .1).sum::<f64>() / k
            && s.macro_f1 == present.iter().map(|x| x.1 .2).sum::<f64>() / k;
        check(same, || format!("trial {trial} differs from brute force"))?;
    }
    Ok("1000 random confusion matrices equal brute-force tallies exactly".into())
}

fn graph_invariants(models: &[GeneratedModel]) -> Outcome {
    let (mut worst, mut oracle_checked) = (0.0f64, 0usize);
    let mut graphs = Vec::with_capacity(models.len());
    for (i, m) in models.iter().enumerate() {
        let mesh = triangulate(&m.solid, DEFAULT_ANGULAR_STEP).map_err(|e| e.to_string())?;
        let g = build_hier_graph(&format!("m{i:03}"), &m.solid, &mesh, &classes(m)).map_err(|e| e.to_string())?;
        for (t, f) in mesh.facets.iter().zip(&g.facets) {
            for &k in t {
                let p = mesh.points[k];
                worst = worst.max((f.plane[0] * p.x + f.plane[1] * p.y + f.plane[2] * p.z - f.plane[3]).abs());
            }
        }
        let fine = core_oracles::fine_mesh(&m.solid);
        for (e, (a, b)) in m.solid.face_adjacency() {
            if let Some(o) = core_oracles::oracle_convexity(&m.solid, &fine, e) {
                oracle_checked += 1;
                let kernel = m.solid.edge_convexity(e).map_err(|e| e.to_string())?;
                check(kernel == o, || format!("model {i} edge {e}: kernel {kernel:?}, oracle {o:?}"))?;
                let link = g.links.iter().find(|l| (l.a as usize, l.b as usize) == (a, b));
                check(link.is_some_and(|l| l.convexity == o), || format!("model {i} faces {a} {b}: link convexity"))?;
            }
        }
        graphs.push(g);
    }
    check(worst < PLANE_TOL, || format!("facet plane residual {worst:e}"))?;
    let batches = make_batches(graphs, VERTEX_CAP, SEED).map_err(|e| e.to_string())?;
    let largest = batches.iter().map(|b| b.total_vertices()).max().unwrap_or(0);
    check(largest < VERTEX_CAP, || format!("batch with {largest} vertices"))?;
    Ok(format!(
        "plane residual {worst:.1e}; {} batches, largest {largest} < {VERTEX_CAP} vertices; {oracle_checked} edges agree with the material oracle",
        batches.len()
    ))
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let run = |workers: &str| -> Result<(tempfile::TempDir, Vec<String>), String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let d = dir.path();
        let w = ["--workers", workers];
        let mut stdout = Vec::new();
        for args in [
            &["generate", "--n", "24", "--seed", "77", "--out", "data"][..],
            &["graph", "--data", "data", "--seed", "77"],
            &["train", "--width", "16", "--layers", "2", "--epochs", "3", "--seed", "77"],
            &["eval", "--split", "test", "--out", "eval"],
            &["infer", "data/model_00000.step", "--checkpoint", "data/graphs/model.hgck", "--out", "infer"],
            &["extract", "data/model_00001.step", "--labels", "data/model_00001.labels", "--out", "extract"],
        ] {
            stdout.push(hfr(d, &[args, &w[..]].concat())?);
        }
        Ok((dir, stdout))
    };
    let (a, out_a) = run("1")?;
    let (b, out_b) = run("4")?;
    let (fa, fb) = (files(a.path()), files(b.path()));
    check(fa == fb, || "different file sets".into())?;
    for f in &fa {
        let same = fs::read(a.path().join(f)).ok() == fs::read(b.path().join(f)).ok();
        check(same, || format!("{} differs between 1 and 4 workers", f.display()))?;
    }
    check(out_a == out_b, || "console output differs between 1 and 4 workers".into())?;
    Ok(format!("{} files (dataset, batches, log, checkpoint, reports) byte-identical for 1 and 4 workers", fa.len()))
}

fn main() -> ExitCode {
    let spec = GenSpec::default();
    let t = Instant::now();
    let models: Vec<GeneratedModel> =
        (0..MODELS).map(|i| generate_model(derive_seed(SEED, i as u64), &spec).expect("generation")).collect();
    println!("generated {MODELS} models in {:.1?}", t.elapsed());

    let criteria: [Criterion; 9] = [
        ("dimension extraction exactness", Box::new(|| dimension_exactness(&models))),
        ("stock sizing", Box::new(|| stock_sizing(&models))),
        ("STEP round trip and fuzzing", Box::new(|| step_round_trip(&models))),
        ("gradient correctness", Box::new(gradient_check)),
        ("capacity (overfit)", Box::new(|| overfit(&models))),
        ("generalization", Box::new(generalization)),
        ("metrics oracle", Box::new(metrics_oracle)),
        ("graph and batch invariants", Box::new(|| graph_invariants(&models))),
        ("determinism across worker counts", Box::new(determinism)),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        let t = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match r {
            Ok(msg) => println!("PASS {} {name}: {msg} [{:.1?}]", i + 1, t.elapsed()),
            Err(msg) => {
                failed += 1;
                println!("FAIL {} {name}: {msg} [{:.1?}]", i + 1, t.elapsed());
            }
        }
    }
    let ran = if only.is_empty() { 9 } else { only.len() };
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
