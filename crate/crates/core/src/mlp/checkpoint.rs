//! Binary model checkpoints.
//!
//! Layout, all integers and reals little-endian:
//!
//! ```text
//! magic        8 bytes  "RGIDMLP\0"
//! version      u32      1
//! input_dim    u64
//! hidden_layers u64
//! hidden_width u64
//! target_dim   u64
//! seed         u64
//! for each hidden layer, then the head:
//!     weights  out×in f64, row-major
//!     bias     out f64
//! ```
//!
//! A plain-text sidecar (`<file>.txt`) lists the same shapes and seeds as `key: value`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{Dense, MlpConfig, MlpModel};
use crate::error::{Error, Result};
use crate::ndstats::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RGIDMLP\0";
const VERSION: u32 = 1;

pub fn encode(model: &MlpModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(52 + 8 * model.n_params());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let c = &model.config;
    for v in [
        c.input_dim as u64,
        c.hidden_layers as u64,
        c.hidden_width as u64,
        c.target_dim as u64,
        c.seed,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for layer in model.layers() {
        for v in layer.weights.as_slice().iter().chain(&layer.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<MlpModel> {
    let bad = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg,
    };
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8).map_err(&bad)? != CHECKPOINT_MAGIC {
        return Err(bad("not a model checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(cur.take(4).map_err(&bad)?.try_into().unwrap());
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let mut header = [0u64; 5];
    for h in &mut header {
        *h = cur.u64().map_err(&bad)?;
    }
    let as_dim = |v: u64| usize::try_from(v).map_err(|_| bad(format!("dimension {v} too large")));
    let config = MlpConfig {
        input_dim: as_dim(header[0])?,
        hidden_layers: as_dim(header[1])?,
        hidden_width: as_dim(header[2])?,
        target_dim: as_dim(header[3])?,
        seed: header[4],
    };
    config.validate().map_err(|e| bad(e.to_string()))?;

    let mut read_layer = |out_dim: usize, in_dim: usize| -> Result<Dense> {
        let w = cur.f64s(out_dim * in_dim).map_err(&bad)?;
        let b = cur.f64s(out_dim).map_err(&bad)?;
        let weights = Matrix::new(out_dim, in_dim, w).map_err(|e| bad(e.to_string()))?;
        if b.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite bias".into()));
        }
        Ok(Dense { weights, bias: b })
    };
    let mut hidden = Vec::with_capacity(config.hidden_layers);
    let mut fan_in = config.input_dim;
    for _ in 0..config.hidden_layers {
        hidden.push(read_layer(config.hidden_width, fan_in)?);
        fan_in = config.hidden_width;
    }
    let head = read_layer(config.target_dim, config.hidden_width)?;
    if cur.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    Ok(MlpModel {
        config,
        hidden,
        head,
    })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(format!("truncated checkpoint at byte {}", self.pos)),
        }
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let raw = self.take(n.checked_mul(8).ok_or("size overflow")?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

/// Writes the binary checkpoint and its text sidecar; `extra` lines go into the sidecar.
pub fn save_checkpoint(model: &MlpModel, path: &Path, extra: &[(&str, String)]) -> Result<()> {
    std::fs::write(path, encode(model)).map_err(|e| Error::io(path, e))?;
    let c = &model.config;
    let mut text = String::new();
    let _ = writeln!(text, "format: regid-mlp v{VERSION}");
    let _ = writeln!(text, "input_dim: {}", c.input_dim);
    let _ = writeln!(text, "hidden_layers: {}", c.hidden_layers);
    let _ = writeln!(text, "hidden_width: {}", c.hidden_width);
    let _ = writeln!(text, "target_dim: {}", c.target_dim);
    let _ = writeln!(text, "init_seed: {}", c.seed);
    let _ = writeln!(text, "init: uniform(+-sqrt(6/fan_in)), zero biases");
    for (i, l) in model.hidden.iter().enumerate() {
        let _ = writeln!(
            text,
            "hidden_{}: weights {}x{}, bias {}",
            i + 1,
            l.out_dim(),
            l.in_dim(),
            l.bias.len()
        );
    }
    let _ = writeln!(
        text,
        "head: weights {}x{}, bias {}",
        model.head.out_dim(),
        model.head.in_dim(),
        model.head.bias.len()
    );
    for (k, v) in extra {
        let _ = writeln!(text, "{k}: {v}");
    }
    let side = sidecar_path(path);
    std::fs::write(&side, text).map_err(|e| Error::io(side, e))
}

pub fn load_checkpoint(path: &Path) -> Result<MlpModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
