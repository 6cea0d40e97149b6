use std::fmt;

use hfr_core::featuregen::derive_seed;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::batch::PackedBatch;
use crate::model::{ModelConfig, Network};
use crate::GcnnError;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl Adam {
    pub fn new(net: &Network) -> Self {
        let m: Vec<Vec<f64>> = net.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Adam { v: m.clone(), m, t: 0 }
    }

    pub fn step(&mut self, net: &mut Network, grads: &Network, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t as i32);
        let c2 = 1.0 - BETA2.powi(self.t as i32);
        for (k, (p, g)) in net.tensors_mut().into_iter().zip(grads.tensors()).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
                p.data[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_face_acc: f64,
}

/// Fixed-point rendering with trailing zeros trimmed.
fn trimmed(x: f64, places: usize) -> String {
    let s = format!("{x:.places$}");
    let s = s.trim_end_matches('0');
    s.strip_suffix('.').map_or_else(|| s.to_string(), |t| format!("{t}.0"))
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}, {}, {:.6}, {:.6}", self.epoch, trimmed(self.lr, 10), self.train_loss, self.val_face_acc)
    }
}

pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation accuracy.
    pub best: Network,
    pub best_epoch: usize,
    pub history: Vec<EpochLog>,
}

/// Fraction of faces whose predicted class equals the label.
pub fn face_accuracy(net: &Network, batches: &[PackedBatch]) -> Result<f64, GcnnError> {
    let (mut correct, mut total) = (0usize, 0usize);
    for b in batches {
        let pred = net.predict(b)?;
        correct += pred.iter().zip(&b.labels).filter(|(p, &y)| p.0 == y).count();
        total += b.labels.len();
    }
    Ok(if total == 0 { 0.0 } else { correct as f64 / total as f64 })
}

/// Runs up to `config.epochs` epochs; `on_epoch` returning false stops early.
pub fn train(
    config: &ModelConfig,
    train: &[PackedBatch],
    val: &[PackedBatch],
    mut on_epoch: impl FnMut(&EpochLog) -> bool,
) -> Result<TrainOutcome, GcnnError> {
    if train.is_empty() || val.is_empty() {
        return Err(GcnnError::Config("training and validation splits must be nonempty".into()));
    }
    let mut net = Network::new(config.clone())?;
    let mut adam = Adam::new(&net);
    let mut best = (net.clone(), 0usize, f64::NEG_INFINITY);
    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..config.epochs {
        let lr = config.lr(epoch);
        let epoch_seed = derive_seed(config.seed, epoch as u64 + 1);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
        let (mut loss_sum, mut faces) = (0.0, 0usize);
        for (step, &bi) in order.iter().enumerate() {
            let r = net.loss_and_grads(&train[bi], derive_seed(epoch_seed, step as u64))?;
            adam.step(&mut net, &r.grads, lr);
            net.apply_batch_stats(&r.batch_stats);
            loss_sum += r.loss * train[bi].n_faces() as f64;
            faces += train[bi].n_faces();
        }
        let val_face_acc = face_accuracy(&net, val)?;
        let log = EpochLog { epoch, lr, train_loss: loss_sum / faces as f64, val_face_acc };
        let go_on = on_epoch(&log);
        history.push(log);
        if val_face_acc > best.2 {
            best = (net.clone(), epoch, val_face_acc);
        }
        if !go_on {
            break;
        }
    }
    Ok(TrainOutcome { best: best.0, best_epoch: best.1, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_line_format() {
        let l = EpochLog { epoch: 0, lr: 0.01, train_loss: 3.4, val_face_acc: 0.125 };
        assert_eq!(l.to_string(), "0, 0.01, 3.400000, 0.125000");
        assert_eq!(trimmed(0.0095, 10), "0.0095");
        assert_eq!(trimmed(1.0, 10), "1.0");
    }

    #[test]
    fn schedule() {
        let c = ModelConfig::default();
        assert_eq!(c.lr(0), 0.01);
        assert!((c.lr(1) - 0.0095).abs() < 1e-15);
        assert_eq!(c.lr(10_000), 1e-5);
    }
}
