//! Checkpoint files: `HGCK` magic, version, the config as JSON, every
//! trainable tensor and every batch-norm running statistic, then a crc32 of
//! all preceding bytes. Integers and reals are little-endian.

use crate::model::{ModelConfig, Network};
use crate::GcnnError;

pub const MAGIC: &[u8; 4] = b"HGCK";
pub const VERSION: u32 = 1;

pub fn save_checkpoint(net: &Network) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(&net.config).expect("config serializes");
    b.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    b.extend_from_slice(&cfg);
    let tensors = net.tensors();
    b.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        b.extend_from_slice(&(t.rows as u32).to_le_bytes());
        b.extend_from_slice(&(t.cols as u32).to_le_bytes());
        for x in &t.data {
            b.extend_from_slice(&x.to_le_bytes());
        }
    }
    for l in net.layers() {
        for x in l.running_mean.iter().chain(&l.running_var) {
            b.extend_from_slice(&x.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&b);
    b.extend_from_slice(&crc.to_le_bytes());
    b
}

struct Cursor<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], GcnnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.b.len());
        let end = end.ok_or_else(|| GcnnError::Checkpoint("truncated".into()))?;
        let s = &self.b[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, GcnnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, GcnnError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Restores a network. With `expected`, a checkpoint whose architecture
/// differs is rejected.
pub fn load_checkpoint(bytes: &[u8], expected: Option<&ModelConfig>) -> Result<Network, GcnnError> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(GcnnError::Checkpoint("not a checkpoint".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().expect("4 bytes")) {
        return Err(GcnnError::Checkpoint("checksum mismatch".into()));
    }
    let mut c = Cursor { b: body, pos: 4 };
    let version = c.u32()?;
    if version != VERSION {
        return Err(GcnnError::Checkpoint(format!("unsupported version {version}")));
    }
    let n = c.u32()? as usize;
    let config: ModelConfig =
        serde_json::from_slice(c.take(n)?).map_err(|e| GcnnError::Checkpoint(format!("config: {e}")))?;
    if let Some(want) = expected {
        if !want.same_architecture(&config) {
            return Err(GcnnError::Config(format!(
                "checkpoint has {} layers of width {} and {} classes; expected {}, {} and {}",
                config.layers_per_level, config.width, config.n_classes, want.layers_per_level, want.width, want.n_classes
            )));
        }
    }
    let mut net = Network::new(config)?;
    let count = c.u32()? as usize;
    if count != net.tensors().len() {
        return Err(GcnnError::Checkpoint(format!("{count} tensors, expected {}", net.tensors().len())));
    }
    for t in net.tensors_mut() {
        let (r, k) = (c.u32()? as usize, c.u32()? as usize);
        if (r, k) != t.shape() {
            return Err(GcnnError::Checkpoint(format!("tensor shape {r}x{k}, expected {}x{}", t.rows, t.cols)));
        }
        for x in t.data.iter_mut() {
            *x = c.f64()?;
        }
    }
    for l in net.layers_mut() {
        for x in l.running_mean.iter_mut().chain(l.running_var.iter_mut()) {
            *x = c.f64()?;
        }
    }
    if c.pos != body.len() {
        return Err(GcnnError::Checkpoint("trailing bytes".into()));
    }
    Ok(net)
}
