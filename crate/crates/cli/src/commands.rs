use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hfr_core::brep::{triangulate, Solid, DEFAULT_ANGULAR_STEP};
use hfr_core::featuregen::{generate_dataset, read_manifest, GenError, GenSpec, ManifestEntry, Split, STOCK_CLASS};
use hfr_core::geomextract::{extract_report, DimensionReport};
use hfr_core::hiergraph::{deserialize_batches, graph_from_solid, make_batches, serialize_batches, HierGraph, VERTEX_CAP};
use hfr_core::metrics::{scores, ConfusionMatrix};
use hfr_core::step_io::{join_labels, parse_labels, parse_step_with_ids};
use hfr_gcnn::{load_checkpoint, save_checkpoint, train, ModelConfig, Network, PackedBatch};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::export::{write_mtl, write_obj};
use crate::{user, UserError};

pub const SPLITS: [(Split, &str); 3] = [(Split::Train, "train"), (Split::Val, "val"), (Split::Test, "test")];

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| user(format!("cannot read {}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read(path)?).map_err(|_| user(format!("{} is not UTF-8 text", path.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| user(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| user(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    write(path, serde_json::to_string_pretty(v)? + "\n")
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().context("building worker pool")
}

pub fn model_config(rc: &RunConfig) -> ModelConfig {
    ModelConfig {
        layers_per_level: rc.layers,
        width: rc.width,
        lr0: rc.lr,
        decay: rc.decay,
        epochs: rc.epochs,
        dropout: rc.dropout,
        seed: rc.seed,
        ..ModelConfig::default()
    }
}

pub fn generate(rc: &RunConfig) -> Result<()> {
    let out = rc.out.clone().unwrap_or_else(|| PathBuf::from("data"));
    let spec = GenSpec { seed: rc.seed, n_models: rc.n, ..GenSpec::default() };
    spec.validate().map_err(user)?;
    let manifest = pool(rc.workers)?.install(|| generate_dataset(&spec, &out)).map_err(|e| match e {
        GenError::Exhausted { .. } => anyhow::Error::new(e),
        other => user(other),
    })?;
    write_json(&out.join("run.json"), rc)?;
    let (a, b, c) = manifest.split_sizes();
    println!("generated {} models in {} (train {a}, val {b}, test {c})", manifest.models.len(), out.display());
    Ok(())
}

/// Reads a STEP file and its label sidecar; faces come back in file order.
pub fn load_labeled(step: &Path, labels: &Path) -> Result<(Solid, Vec<(u8, u32)>)> {
    let (solid, ids) = parse_step_with_ids(&read_text(step)?).map_err(|e| user(format!("{}: {e}", step.display())))?;
    let rows = parse_labels(&read_text(labels)?).map_err(|e| user(format!("{}: {e}", labels.display())))?;
    let joined = join_labels(&ids, &rows).map_err(|e| user(format!("{}: {e}", labels.display())))?;
    Ok((solid, joined))
}

fn entry_graph(data: &Path, e: &ManifestEntry) -> Result<HierGraph> {
    let (solid, labels) = load_labeled(&data.join(&e.step), &data.join(&e.labels))?;
    let classes: Vec<u8> = labels.iter().map(|l| l.0).collect();
    graph_from_solid(&e.name, &solid, &classes).map_err(|err| anyhow::anyhow!("{}: {err}", e.name))
}

#[derive(Serialize)]
struct BatchSummary {
    split: String,
    batch: usize,
    graphs: usize,
    vertices: usize,
}

pub fn graph(rc: &RunConfig) -> Result<()> {
    let manifest = read_manifest(&rc.data).map_err(|e| user(format!("no dataset at {}: {e}", rc.data.display())))?;
    let out = rc.out.clone().unwrap_or_else(|| rc.data.join("graphs"));
    let pool = pool(rc.workers)?;
    let mut summary = Vec::new();
    for (split, name) in SPLITS {
        let entries: Vec<&ManifestEntry> = manifest.entries(split).collect();
        let graphs = pool.install(|| entries.par_iter().map(|e| entry_graph(&rc.data, e)).collect::<Result<Vec<_>>>())?;
        let batches = make_batches(graphs, VERTEX_CAP, rc.seed).map_err(user)?;
        for (i, b) in batches.iter().enumerate() {
            println!("{name} batch {i}: {} graphs, {} vertices", b.graphs.len(), b.total_vertices());
            summary.push(BatchSummary { split: name.into(), batch: i, graphs: b.graphs.len(), vertices: b.total_vertices() });
        }
        write(&out.join(format!("{name}.hgb")), serialize_batches(&batches))?;
    }
    #[derive(Serialize)]
    struct Echo<'a> {
        run: &'a RunConfig,
        vertex_cap: usize,
        batches: Vec<BatchSummary>,
    }
    write_json(&out.join("graphs.json"), &Echo { run: rc, vertex_cap: VERTEX_CAP, batches: summary })
}

pub fn load_split(dir: &Path, split: &str) -> Result<Vec<PackedBatch>> {
    let path = dir.join(format!("{split}.hgb"));
    let batches = deserialize_batches(&read(&path)?).map_err(|e| user(format!("{}: {e}", path.display())))?;
    batches.iter().map(|b| PackedBatch::from_batch(b).map_err(|e| user(format!("{}: {e}", path.display())))).collect()
}

pub fn checkpoint_path(rc: &RunConfig) -> PathBuf {
    rc.checkpoint.clone().unwrap_or_else(|| rc.data.join("model.hgck"))
}

pub fn train_cmd(rc: &RunConfig) -> Result<()> {
    let cfg = model_config(rc);
    cfg.validate().map_err(user)?;
    let out = rc.out.clone().unwrap_or_else(|| checkpoint_path(rc));
    let (tr, va) = (load_split(&rc.data, "train")?, load_split(&rc.data, "val")?);
    let mut log = String::from("epoch, lr, train_loss, val_face_acc\n");
    let outcome = pool(rc.workers)?.install(|| {
        train(&cfg, &tr, &va, |l| {
            println!("{l}");
            log.push_str(&format!("{l}\n"));
            true
        })
    })?;
    write(&out, save_checkpoint(&outcome.best))?;
    write(&out.with_extension("log"), &log)?;
    #[derive(Serialize)]
    struct Echo<'a> {
        run: &'a RunConfig,
        model: &'a ModelConfig,
        best_epoch: usize,
        best_val_face_acc: f64,
    }
    let best_val_face_acc = outcome.history[outcome.best_epoch].val_face_acc;
    write_json(
        &out.with_extension("json"),
        &Echo { run: rc, model: &cfg, best_epoch: outcome.best_epoch, best_val_face_acc },
    )?;
    println!("best epoch {} (val face accuracy {best_val_face_acc:.6}); checkpoint {}", outcome.best_epoch, out.display());
    Ok(())
}

pub fn load_network(path: &Path) -> Result<Network> {
    load_checkpoint(&read(path)?, None).map_err(|e| user(format!("{}: {e}", path.display())))
}

pub fn eval(rc: &RunConfig) -> Result<()> {
    if !SPLITS.iter().any(|s| s.1 == rc.split) {
        return Err(user(format!("unknown split `{}`", rc.split)));
    }
    let net = load_network(&checkpoint_path(rc))?;
    let batches = load_split(&rc.data, &rc.split)?;
    let mut cm = ConfusionMatrix::default();
    pool(rc.workers)?.install(|| -> Result<()> {
        for b in &batches {
            for (p, &y) in net.predict(b)?.iter().zip(&b.labels) {
                cm.accumulate(y as usize, p.0 as usize)?;
            }
        }
        Ok(())
    })?;
    let s = scores(&cm).map_err(|e| user(format!("split {}: {e}", rc.split)))?;
    let text = format!("split: {}\n{s}", rc.split);
    print!("{text}");
    if let Some(out) = &rc.out {
        write(&out.join("report.txt"), &text)?;
        write_json(&out.join("scores.json"), &s)?;
        write_json(&out.join("confusion.json"), &cm.rows())?;
        write_json(&out.join("run.json"), rc)?;
    }
    Ok(())
}

/// Per-face classes from the network, with the winning probability.
pub fn classify(net: &Network, name: &str, solid: &Solid) -> Result<Vec<(u8, f64)>> {
    let g = graph_from_solid(name, solid, &vec![STOCK_CLASS; solid.faces.len()]).map_err(user)?;
    let batch = PackedBatch::from_graphs(&[g]).map_err(user)?;
    Ok(net.predict(&batch)?)
}

pub fn infer(rc: &RunConfig) -> Result<()> {
    let input = rc.input.as_ref().ok_or_else(|| user("missing input STEP file"))?;
    let name = input.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
    let (solid, predicted) = match &rc.labels {
        Some(labels) => {
            let (solid, l) = load_labeled(input, labels)?;
            let p = l.iter().map(|x| (x.0, 1.0)).collect();
            (solid, p)
        }
        None => {
            let ckpt = rc.checkpoint.as_ref().ok_or_else(|| user("infer needs --checkpoint or --labels"))?;
            let net = load_network(ckpt)?;
            let (solid, _) =
                parse_step_with_ids(&read_text(input)?).map_err(|e| user(format!("{}: {e}", input.display())))?;
            let p = pool(rc.workers)?.install(|| classify(&net, &name, &solid))?;
            (solid, p)
        }
    };
    let classes: Vec<u8> = predicted.iter().map(|p| p.0).collect();
    let report = report_for(&solid, &classes)?;
    print!("{report}");
    if let Some(out) = &rc.out {
        let mesh = triangulate(&solid, DEFAULT_ANGULAR_STEP).map_err(|e| user(format!("{}: {e}", input.display())))?;
        let mtl = format!("{name}.mtl");
        write(&out.join(format!("{name}.obj")), write_obj(&mesh, &classes, &mtl))?;
        write(&out.join(&mtl), write_mtl())?;
        write(&out.join(format!("{name}.report.txt")), report.to_string())?;
        let mut faces = Vec::new();
        writeln!(faces, "face,class_index,probability")?;
        for (i, (c, p)) in predicted.iter().enumerate() {
            writeln!(faces, "{i},{c},{p:.6}")?;
        }
        write(&out.join(format!("{name}.faces.csv")), faces)?;
    }
    Ok(())
}

pub fn report_for(solid: &Solid, classes: &[u8]) -> Result<DimensionReport> {
    extract_report(solid, classes).map_err(user)
}

pub fn extract(rc: &RunConfig) -> Result<()> {
    if rc.labels.is_none() {
        return Err(UserError("extract needs --labels".into()).into());
    }
    infer(rc)
}
