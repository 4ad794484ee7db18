//! Checkpoint files: a versioned magic line, one JSON header line (kind,
//! config snapshot, extra metadata, parameter names and shapes), then the
//! raw little-endian `f64` weights in header order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::graph::Mat;
use super::params::ParamStore;
use crate::error::{Error, Result};

const MAGIC: &str = "FACTARG-CHECKPOINT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParamHeader {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    kind: String,
    config: serde_json::Value,
    extra: serde_json::Value,
    params: Vec<ParamHeader>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub kind: String,
    pub config: serde_json::Value,
    pub extra: serde_json::Value,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let header = Header {
            kind: self.kind.clone(),
            config: self.config.clone(),
            extra: self.extra.clone(),
            params: self
                .params
                .iter()
                .map(|(name, m)| ParamHeader {
                    name: name.to_string(),
                    rows: m.nrows(),
                    cols: m.ncols(),
                })
                .collect(),
        };
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "{MAGIC} {FORMAT_VERSION}").map_err(io)?;
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n").map_err(io)?;
        for (_, m) in self.params.iter() {
            for x in m.iter() {
                w.write_all(&x.to_le_bytes()).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let io = |e| Error::io(path, e);
        let mut magic = String::new();
        r.read_line(&mut magic).map_err(io)?;
        let version = magic
            .trim()
            .strip_prefix(MAGIC)
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| Error::Checkpoint(format!("{} is not a checkpoint", path.display())))?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let mut line = String::new();
        r.read_line(&mut line).map_err(io)?;
        let header: Header = serde_json::from_str(&line)?;
        let mut params = ParamStore::new();
        let mut buf = [0u8; 8];
        for p in &header.params {
            let mut m = Mat::zeros((p.rows, p.cols));
            for x in m.iter_mut() {
                r.read_exact(&mut buf)
                    .map_err(|_| Error::Checkpoint(format!("truncated weights for `{}`", p.name)))?;
                *x = f64::from_le_bytes(buf);
            }
            params.add(p.name.clone(), m);
        }
        Ok(Checkpoint {
            kind: header.kind,
            config: header.config,
            extra: header.extra,
            params,
        })
    }

    /// Copies weights into a freshly built model's store; names and shapes
    /// must agree exactly.
    pub fn load_into(&self, store: &mut ParamStore) -> Result<()> {
        if store.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, model expects {}",
                self.params.len(),
                store.len()
            )));
        }
        for id in store.ids().collect::<Vec<_>>() {
            let name = store.name(id).to_string();
            let src = self
                .params
                .find(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            let src = self.params.value(src);
            if src.dim() != store.value(id).dim() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, model expects {:?}",
                    src.dim(),
                    store.value(id).dim()
                )));
            }
            store.value_mut(id).assign(src);
        }
        Ok(())
    }
}

/// Reads only the `kind` of a checkpoint.
pub fn checkpoint_kind(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut line = String::new();
    r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
    line.clear();
    r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
    let header: Header = serde_json::from_str(&line)?;
    Ok(header.kind)
}
