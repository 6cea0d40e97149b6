use hfr_core::featuregen::N_CLASSES;
use hfr_core::hiergraph::{FACET_FEATURES, FACE_FEATURES};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::batch::PackedBatch;
use crate::layer::{Pass, SGConv, Tape};
use crate::matrix::{matmul, matmul_nt, matmul_tn, xavier_init, Matrix};
use crate::GcnnError;

/// Edge classes at the face level (convex, concave, smooth).
pub const FACE_EDGE_CLASSES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers_per_level: usize,
    pub width: usize,
    pub n_classes: usize,
    pub lr0: f64,
    pub decay: f64,
    pub lr_floor: f64,
    pub epochs: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers_per_level: 7,
            width: 128,
            n_classes: N_CLASSES,
            lr0: 0.01,
            decay: 0.95,
            lr_floor: 1e-5,
            epochs: 100,
            dropout: 0.3,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), GcnnError> {
        if self.layers_per_level == 0 || self.width == 0 || self.n_classes == 0 {
            return Err(GcnnError::Config("layers, width and class count must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(GcnnError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.lr0 > 0.0 && self.decay > 0.0 && self.lr_floor >= 0.0) {
            return Err(GcnnError::Config("learning rate settings must be positive".into()));
        }
        Ok(())
    }

    pub fn lr(&self, epoch: usize) -> f64 {
        (self.lr0 * self.decay.powi(epoch as i32)).max(self.lr_floor)
    }

    /// True when `o` describes the same parameter shapes.
    pub fn same_architecture(&self, o: &ModelConfig) -> bool {
        (self.layers_per_level, self.width, self.n_classes) == (o.layers_per_level, o.width, o.n_classes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Infer,
    /// Batch statistics and dropout; the seed fixes the dropout masks.
    Train { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: ModelConfig,
    pub facet_layers: Vec<SGConv>,
    pub transfer: Matrix,
    pub transfer_bias: Matrix,
    pub face_layers: Vec<SGConv>,
    pub head: Matrix,
    pub head_bias: Matrix,
}

pub struct Forward {
    pub logits: Matrix,
    facet_tapes: Vec<Tape>,
    face_tapes: Vec<Tape>,
    pooled: Matrix,
    h1: Matrix,
}

pub struct StepResult {
    pub loss: f64,
    pub grads: Network,
    pub correct: usize,
    /// Batch mean and variance of every batch-norm, facet layers first.
    pub batch_stats: Vec<(Vec<f64>, Vec<f64>)>,
}

pub fn softmax_row(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Mean categorical cross-entropy and its gradient with respect to logits.
pub fn cross_entropy(logits: &Matrix, labels: &[u8]) -> (f64, Matrix) {
    let n = logits.rows;
    let mut grad = Matrix::zeros(n, logits.cols);
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let p = softmax_row(logits.row(i));
        loss -= p[y as usize].max(f64::MIN_POSITIVE).ln();
        let g = grad.row_mut(i);
        for (k, pk) in p.iter().enumerate() {
            g[k] = (pk - if k == y as usize { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    (loss / n as f64, grad)
}

fn pass(rng: &mut Option<ChaCha8Rng>, dropout: f64) -> Pass<'_> {
    match rng {
        Some(rng) => Pass::Train { rng, dropout },
        None => Pass::Infer,
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = k;
        }
    }
    best
}

fn finite(m: &Matrix, what: &str) -> Result<(), GcnnError> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(GcnnError::Numeric(what.to_string()))
    }
}

impl Network {
    pub fn new(config: ModelConfig) -> Result<Self, GcnnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let w = config.width;
        let facet_layers = (0..config.layers_per_level)
            .map(|i| SGConv::new(if i == 0 { FACET_FEATURES } else { w }, w, 1, &mut rng))
            .collect();
        let transfer = xavier_init(w, w, &mut rng);
        let face_layers = (0..config.layers_per_level)
            .map(|i| SGConv::new(if i == 0 { FACE_FEATURES + w } else { w }, w, FACE_EDGE_CLASSES, &mut rng))
            .collect();
        let head = xavier_init(w, config.n_classes, &mut rng);
        Ok(Network {
            transfer,
            transfer_bias: Matrix::zeros(1, w),
            facet_layers,
            face_layers,
            head,
            head_bias: Matrix::zeros(1, config.n_classes),
            config,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Network {
            config: self.config.clone(),
            facet_layers: self.facet_layers.iter().map(SGConv::zeros_like).collect(),
            transfer: self.transfer.zeros_like(),
            transfer_bias: self.transfer_bias.zeros_like(),
            face_layers: self.face_layers.iter().map(SGConv::zeros_like).collect(),
            head: self.head.zeros_like(),
            head_bias: self.head_bias.zeros_like(),
        }
    }

    /// Trainable tensors in a fixed order.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut v: Vec<&Matrix> = self.facet_layers.iter().flat_map(SGConv::tensors).collect();
        v.extend([&self.transfer, &self.transfer_bias]);
        v.extend(self.face_layers.iter().flat_map(SGConv::tensors));
        v.extend([&self.head, &self.head_bias]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v: Vec<&mut Matrix> = self.facet_layers.iter_mut().flat_map(SGConv::tensors_mut).collect();
        v.extend([&mut self.transfer, &mut self.transfer_bias]);
        v.extend(self.face_layers.iter_mut().flat_map(SGConv::tensors_mut));
        v.extend([&mut self.head, &mut self.head_bias]);
        v
    }

    pub fn layers(&self) -> impl Iterator<Item = &SGConv> {
        self.facet_layers.iter().chain(&self.face_layers)
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut SGConv> {
        self.facet_layers.iter_mut().chain(self.face_layers.iter_mut())
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn forward(&self, b: &PackedBatch, mode: Mode) -> Result<Forward, GcnnError> {
        let mut rng = match mode {
            Mode::Train { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            Mode::Infer => None,
        };
        let dropout = self.config.dropout;

        let mut h = b.facets.feats.clone();
        let mut facet_tapes = Vec::new();
        for (i, l) in self.facet_layers.iter().enumerate() {
            let (out, tape) = l.forward(&b.facets, &h, pass(&mut rng, dropout));
            finite(&out, &format!("facet layer {i}"))?;
            facet_tapes.extend(tape);
            h = out;
        }

        let nf = b.n_faces();
        let mut pooled = Matrix::zeros(nf, h.cols);
        for (t, &f) in b.facet_face.iter().enumerate() {
            for (p, x) in pooled.row_mut(f as usize).iter_mut().zip(h.row(t)) {
                *p += x;
            }
        }
        for f in 0..nf {
            let inv = 1.0 / b.facets_per_face[f] as f64;
            pooled.row_mut(f).iter_mut().for_each(|x| *x *= inv);
        }
        let mut tr = matmul(&pooled, &self.transfer);
        tr.add_row(&self.transfer_bias);
        finite(&tr, "transfer")?;

        let mut h = b.faces.feats.hcat(&tr);
        let mut face_tapes = Vec::new();
        for (i, l) in self.face_layers.iter().enumerate() {
            let (out, tape) = l.forward(&b.faces, &h, pass(&mut rng, dropout));
            finite(&out, &format!("face layer {i}"))?;
            face_tapes.extend(tape);
            h = out;
        }
        let mut logits = matmul(&h, &self.head);
        logits.add_row(&self.head_bias);
        finite(&logits, "head")?;
        Ok(Forward { logits, facet_tapes, face_tapes, pooled, h1: h })
    }

    pub fn logits(&self, b: &PackedBatch, mode: Mode) -> Result<Matrix, GcnnError> {
        Ok(self.forward(b, mode)?.logits)
    }

    pub fn loss(&self, b: &PackedBatch, mode: Mode) -> Result<f64, GcnnError> {
        Ok(cross_entropy(&self.logits(b, mode)?, &b.labels).0)
    }

    /// ReLU sign pattern of a training pass; equal patterns mean the loss is
    /// smooth between two parameter settings.
    pub fn relu_pattern(&self, b: &PackedBatch, seed: u64) -> Result<Vec<bool>, GcnnError> {
        let f = self.forward(b, Mode::Train { seed })?;
        Ok(f.facet_tapes.iter().chain(&f.face_tapes).flat_map(|t| t.relu_pattern()).collect())
    }

    /// Training-mode loss and gradients for every trainable tensor.
    pub fn loss_and_grads(&self, b: &PackedBatch, seed: u64) -> Result<StepResult, GcnnError> {
        if b.n_faces() == 0 {
            return Err(GcnnError::Input("batch has no faces".into()));
        }
        let fwd = self.forward(b, Mode::Train { seed })?;
        let (loss, dlogits) = cross_entropy(&fwd.logits, &b.labels);
        if !loss.is_finite() {
            return Err(GcnnError::Numeric("loss".into()));
        }
        let correct = (0..b.n_faces()).filter(|&i| argmax(fwd.logits.row(i)) == b.labels[i] as usize).count();
        let mut g = self.zeros_like();

        g.head = matmul_tn(&fwd.h1, &dlogits);
        g.head_bias = dlogits.column_sums();
        let mut dh = matmul_nt(&dlogits, &self.head);
        for (i, l) in self.face_layers.iter().enumerate().rev() {
            dh = l.backward(&b.faces, &fwd.face_tapes[i], &dh, &mut g.face_layers[i]);
            finite(&dh, &format!("face layer {i} backward"))?;
        }
        let (_, dtr) = dh.hsplit(FACE_FEATURES);
        g.transfer = matmul_tn(&fwd.pooled, &dtr);
        g.transfer_bias = dtr.column_sums();
        let dpooled = matmul_nt(&dtr, &self.transfer);
        let mut dh = Matrix::zeros(b.facets.n(), self.config.width);
        for (t, &f) in b.facet_face.iter().enumerate() {
            let inv = 1.0 / b.facets_per_face[f as usize] as f64;
            for (d, x) in dh.row_mut(t).iter_mut().zip(dpooled.row(f as usize)) {
                *d = x * inv;
            }
        }
        for (i, l) in self.facet_layers.iter().enumerate().rev() {
            dh = l.backward(&b.facets, &fwd.facet_tapes[i], &dh, &mut g.facet_layers[i]);
            finite(&dh, &format!("facet layer {i} backward"))?;
        }
        let batch_stats = fwd
            .facet_tapes
            .iter()
            .chain(&fwd.face_tapes)
            .map(|t| (t.batch_mean.clone(), t.batch_var.clone()))
            .collect();
        Ok(StepResult { loss, grads: g, correct, batch_stats })
    }

    /// Per-face `(class, probability)` at inference.
    pub fn predict(&self, b: &PackedBatch) -> Result<Vec<(u8, f64)>, GcnnError> {
        let logits = self.logits(b, Mode::Infer)?;
        if logits.cols != self.config.n_classes {
            return Err(GcnnError::Config("head width does not match class count".into()));
        }
        Ok((0..logits.rows)
            .map(|i| {
                let p = softmax_row(logits.row(i));
                let k = argmax(&p);
                (k as u8, p[k])
            })
            .collect())
    }

    pub fn apply_batch_stats(&mut self, stats: &[(Vec<f64>, Vec<f64>)]) {
        for (l, (m, v)) in self.layers_mut().zip(stats) {
            l.update_running(m, v);
        }
    }
}
