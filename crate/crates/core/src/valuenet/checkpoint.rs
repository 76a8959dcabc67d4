//! Versioned little-endian checkpoint format.
//!
//! ```text
//! magic    "DCAF"
//! version  u32
//! config   input_dim u32, n_hidden u32, hidden_dims u32 * n_hidden, role u8
//! metadata count u32, then (key_len u32, key utf8, val_len u32, val utf8) * count
//! params   count u64, then f64 * count (layer order, weights row-major, then biases)
//! ```

use std::collections::BTreeMap;

use super::{NetConfig, NetRole, ValueNet};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DCAF";
pub const CHECKPOINT_VERSION: u32 = 1;

const MAX_HIDDEN_LAYERS: usize = 64;
const MAX_WIDTH: usize = 1 << 16;
const MAX_STRING: usize = 1 << 20;

pub type Metadata = BTreeMap<String, String>;

pub fn save_checkpoint(net: &ValueNet, metadata: &Metadata) -> Vec<u8> {
    let cfg = net.config();
    let mut out = Vec::with_capacity(64 + 8 * net.params().len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(cfg.input_dim as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.hidden_dims.len() as u32).to_le_bytes());
    for h in &cfg.hidden_dims {
        out.extend_from_slice(&(*h as u32).to_le_bytes());
    }
    out.push(net.role().as_u8());
    out.extend_from_slice(&(metadata.len() as u32).to_le_bytes());
    for (k, v) in metadata {
        for s in [k, v] {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
    }
    out.extend_from_slice(&(net.params().len() as u64).to_le_bytes());
    for p in net.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated payload while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        if len > MAX_STRING {
            return Err(Error::Checkpoint(format!("{what} length {len} too large")));
        }
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::Checkpoint(format!("{what} is not valid UTF-8")))
    }
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<(ValueNet, Metadata)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let input_dim = r.u32("input_dim")? as usize;
    let n_hidden = r.u32("hidden layer count")? as usize;
    if n_hidden > MAX_HIDDEN_LAYERS {
        return Err(Error::Checkpoint(format!("{n_hidden} hidden layers is too many")));
    }
    let mut hidden_dims = Vec::with_capacity(n_hidden);
    for _ in 0..n_hidden {
        hidden_dims.push(r.u32("hidden width")? as usize);
    }
    if input_dim > MAX_WIDTH || hidden_dims.iter().any(|&h| h == 0 || h > MAX_WIDTH) {
        return Err(Error::Checkpoint("layer width out of range".into()));
    }
    let role = NetRole::from_u8(r.u8("role")?)
        .ok_or_else(|| Error::Checkpoint("unknown network role".into()))?;
    let n_meta = r.u32("metadata count")? as usize;
    let mut metadata = Metadata::new();
    for _ in 0..n_meta {
        let k = r.string("metadata key")?;
        let v = r.string("metadata value")?;
        metadata.insert(k, v);
    }
    let config = NetConfig::new(input_dim, hidden_dims);
    let count = r.u64("parameter count")?;
    if count != config.n_params() as u64 {
        return Err(Error::Checkpoint(format!(
            "parameter count {count} does not match config ({})",
            config.n_params()
        )));
    }
    let count = count as usize;
    let raw = r.take(count.checked_mul(8).ok_or_else(|| Error::Checkpoint("overflow".into()))?, "parameters")?;
    let params: Vec<f64> =
        raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let net = ValueNet::from_params(config, role, params)?;
    Ok((net, metadata))
}
