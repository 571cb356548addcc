//! Snapshot file layout:
//!
//! ```text
//! magic        8 bytes   "TWTOPIC\0"
//! version      u32 LE
//! header_len   u64 LE
//! header       header_len bytes of UTF-8 JSON
//! arrays       f64 LE, in order: bn_gamma, bn_beta, bn_running_mean,
//!              bn_running_var (dim each), weights (dim * n_labels, row-major),
//!              bias (n_labels), threshold (n_labels)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BatchNorm, Head, ModelSnapshot};
use crate::error::{Error, Result};
use crate::features::{ExtractorConfig, HASH_ALGORITHM};
use crate::topics::Topic;

const MAGIC: &[u8; 8] = b"TWTOPIC\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    extractor: ExtractorConfig,
    hash_algorithm: String,
    dim: usize,
    n_labels: usize,
    labels: Vec<String>,
    bn_eps: f64,
    bn_momentum: f64,
    dropout: f64,
    layer_order: String,
    version: String,
    trained_on: String,
}

pub fn write_snapshot<W: Write>(snapshot: &ModelSnapshot, mut w: W) -> Result<()> {
    let head = &snapshot.head;
    let header = Header {
        extractor: snapshot.extractor.clone(),
        hash_algorithm: HASH_ALGORITHM.into(),
        dim: head.dim,
        n_labels: head.n_labels,
        labels: Topic::ALL
            .iter()
            .take(head.n_labels)
            .map(|t| t.name().to_string())
            .collect(),
        bn_eps: head.bn.eps,
        bn_momentum: head.bn.momentum,
        dropout: head.dropout,
        layer_order: "batch_norm,dropout,linear,sigmoid".into(),
        version: snapshot.version.clone(),
        trained_on: snapshot.trained_on.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::parse("snapshot header", e))?;
    let io = |e| Error::io("<snapshot>", e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    for array in [
        &head.bn.gamma,
        &head.bn.beta,
        &head.bn.running_mean,
        &head.bn.running_var,
        &head.weights,
        &head.bias,
        &snapshot.threshold,
    ] {
        let mut buf = Vec::with_capacity(array.len() * 8);
        for v in array.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<ModelSnapshot> {
    let io = |e| Error::io("<snapshot>", e);
    let bad = |m: &str| Error::parse("snapshot", m);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(bad("not a model snapshot (bad magic)"));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(io)?;
    let version = u32::from_le_bytes(u32buf);
    if version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported format version {version}")));
    }
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf).map_err(io)?;
    let header_len = u64::from_le_bytes(u64buf) as usize;
    if header_len > 1 << 20 {
        return Err(bad("header too large"));
    }
    let mut json = vec![0u8; header_len];
    r.read_exact(&mut json).map_err(io)?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| Error::parse("snapshot header", e))?;
    if header.hash_algorithm != HASH_ALGORITHM {
        return Err(bad(&format!(
            "snapshot uses hash '{}', this build uses '{HASH_ALGORITHM}'",
            header.hash_algorithm
        )));
    }

    let (d, k) = (header.dim, header.n_labels);
    let mut read_array = |len: usize| -> Result<Vec<f64>> {
        let mut bytes = vec![0u8; len * 8];
        r.read_exact(&mut bytes).map_err(io)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let gamma = read_array(d)?;
    let beta = read_array(d)?;
    let running_mean = read_array(d)?;
    let running_var = read_array(d)?;
    let weights = read_array(d * k)?;
    let bias = read_array(k)?;
    let threshold = read_array(k)?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(io)?;
    if !rest.is_empty() {
        return Err(bad("trailing bytes after arrays"));
    }

    let snapshot = ModelSnapshot {
        extractor: header.extractor,
        head: Head {
            dim: d,
            n_labels: k,
            bn: BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
                eps: header.bn_eps,
                momentum: header.bn_momentum,
            },
            weights,
            bias,
            dropout: header.dropout,
        },
        threshold,
        version: header.version,
        trained_on: header.trained_on,
    };
    snapshot.validate()?;
    Ok(snapshot)
}

pub fn save_snapshot(snapshot: &ModelSnapshot, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_snapshot(snapshot, BufWriter::new(file))
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<ModelSnapshot> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_snapshot(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}
