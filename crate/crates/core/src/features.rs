//! Feature extraction: hashed character n-grams, or externally computed
//! embeddings keyed by tweet id.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh64::xxh64;

use crate::error::{Error, Result};

/// Name of the hash used to place n-grams, recorded in model snapshots.
pub const HASH_ALGORITHM: &str = "xxh64";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorKind {
    HashedNgrams,
    ImportedEmbeddings,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractorConfig {
    pub kind: ExtractorKind,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig {
            kind: ExtractorKind::HashedNgrams,
            ngram_min: 1,
            ngram_max: 4,
            dim: 1 << 16,
            seed: 0,
        }
    }
}

impl ExtractorConfig {
    pub fn hashed(ngram_min: usize, ngram_max: usize, dim: usize, seed: u64) -> Self {
        ExtractorConfig {
            kind: ExtractorKind::HashedNgrams,
            ngram_min,
            ngram_max,
            dim,
            seed,
        }
    }

    pub fn imported(dim: usize) -> Self {
        ExtractorConfig {
            kind: ExtractorKind::ImportedEmbeddings,
            ngram_min: 1,
            ngram_max: 1,
            dim,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ExtractorKind::HashedNgrams => {
                if !(1 <= self.ngram_min && self.ngram_min <= self.ngram_max && self.ngram_max <= 6)
                {
                    return Err(Error::Config(format!(
                        "n-gram range [{}, {}] must satisfy 1 <= min <= max <= 6",
                        self.ngram_min, self.ngram_max
                    )));
                }
                if !self.dim.is_power_of_two() || !((1 << 10)..=(1 << 20)).contains(&self.dim) {
                    return Err(Error::Config(format!(
                        "hashed dimension {} must be a power of two in [2^10, 2^20]",
                        self.dim
                    )));
                }
            }
            ExtractorKind::ImportedEmbeddings => {
                if self.dim == 0 {
                    return Err(Error::Config("embedding dimension must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

/// Sparse vector; indices strictly increasing, no stored zeros.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    dim: usize,
    entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn zeros(dim: usize) -> Self {
        FeatureVector {
            dim,
            entries: Vec::new(),
        }
    }

    /// Builds from arbitrary (index, value) pairs; duplicates are summed and
    /// zeros dropped.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for (i, v) in pairs {
            if i as usize >= dim {
                return Err(Error::Shape(format!("index {i} out of range for dim {dim}")));
            }
            *acc.entry(i).or_insert(0.0) += v;
        }
        Ok(FeatureVector {
            dim,
            entries: acc.into_iter().filter(|(_, v)| *v != 0.0).collect(),
        })
    }

    pub fn from_dense(values: &[f64]) -> Self {
        FeatureVector {
            dim: values.len(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i as u32, *v))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, index: u32) -> f64 {
        self.entries
            .binary_search_by_key(&index, |(i, _)| *i)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.write_dense(&mut out);
        out
    }

    /// Writes into a zeroed slice of length `dim`.
    pub fn write_dense(&self, out: &mut [f64]) {
        for &(i, v) in &self.entries {
            out[i as usize] = v;
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    fn normalize(mut self) -> Self {
        let norm = self.l2_norm();
        if norm > 0.0 {
            for (_, v) in &mut self.entries {
                *v /= norm;
            }
        }
        self
    }
}

pub fn ngram_index(ngram: &str, cfg: &ExtractorConfig) -> u32 {
    (xxh64(ngram.as_bytes(), cfg.seed) % cfg.dim as u64) as u32
}

/// Character n-grams of every length in the configured range, counted into
/// hashed buckets and L2-normalized.
pub fn extract(text: &str, cfg: &ExtractorConfig) -> Result<FeatureVector> {
    if cfg.kind != ExtractorKind::HashedNgrams {
        return Err(Error::Config(
            "imported embeddings are looked up by tweet id, not extracted from text".into(),
        ));
    }
    cfg.validate()?;
    let boundaries: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect();
    let n_chars = boundaries.len() - 1;
    let mut counts: HashMap<u32, f64> = HashMap::new();
    for n in cfg.ngram_min..=cfg.ngram_max {
        if n > n_chars {
            break;
        }
        for start in 0..=(n_chars - n) {
            let gram = &text[boundaries[start]..boundaries[start + n]];
            *counts.entry(ngram_index(gram, cfg)).or_insert(0.0) += 1.0;
        }
    }
    Ok(FeatureVector::from_pairs(cfg.dim, counts)?.normalize())
}

/// Produces feature vectors for tweets.
pub trait FeatureExtractor: Send + Sync {
    fn config(&self) -> &ExtractorConfig;

    fn features(&self, id: &str, text: &str) -> Result<FeatureVector>;

    fn dim(&self) -> usize {
        self.config().dim
    }
}

#[derive(Clone, Debug)]
pub struct HashedNgrams {
    cfg: ExtractorConfig,
}

impl HashedNgrams {
    pub fn new(cfg: ExtractorConfig) -> Result<Self> {
        if cfg.kind != ExtractorKind::HashedNgrams {
            return Err(Error::Config("expected a hashed_ngrams config".into()));
        }
        cfg.validate()?;
        Ok(HashedNgrams { cfg })
    }
}

impl FeatureExtractor for HashedNgrams {
    fn config(&self) -> &ExtractorConfig {
        &self.cfg
    }

    fn features(&self, _id: &str, text: &str) -> Result<FeatureVector> {
        extract(text, &self.cfg)
    }
}

/// Lookup table of precomputed embeddings.
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    cfg: ExtractorConfig,
    vectors: BTreeMap<String, FeatureVector>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, vectors: BTreeMap<String, FeatureVector>) -> Result<Self> {
        if let Some((id, v)) = vectors.iter().find(|(_, v)| v.dim() != dim) {
            return Err(Error::Shape(format!(
                "embedding for '{id}' has dim {} but table dim is {dim}",
                v.dim()
            )));
        }
        Ok(EmbeddingTable {
            cfg: ExtractorConfig::imported(dim),
            vectors,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let vectors = import_embeddings(path)?;
        let dim = vectors.values().next().map(|v| v.dim()).unwrap_or(1);
        Self::new(dim, vectors)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl FeatureExtractor for EmbeddingTable {
    fn config(&self) -> &ExtractorConfig {
        &self.cfg
    }

    fn features(&self, id: &str, _text: &str) -> Result<FeatureVector> {
        self.vectors
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("no embedding for tweet '{id}'")))
    }
}

#[derive(Deserialize)]
struct EmbeddingLine {
    id: String,
    embedding: Vec<f64>,
}

/// Reads precomputed embeddings.
///
/// CSV files start with a header `id,<dim>` (or the literal `id,dim`, in which
/// case the width of the first row fixes the dimension) followed by rows
/// `id,v0,...,v{dim-1}`. Files ending in `.jsonl` hold one
/// `{"id": ..., "embedding": [...]}` object per line.
pub fn import_embeddings(path: impl AsRef<Path>) -> Result<BTreeMap<String, FeatureVector>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let is_jsonl = path.extension().is_some_and(|e| e == "jsonl");
    let loc = |row: usize| format!("{}:{}", path.display(), row);

    let mut out = BTreeMap::new();
    let mut dim: Option<usize> = None;
    let insert = |out: &mut BTreeMap<String, FeatureVector>,
                  dim: &mut Option<usize>,
                  row: usize,
                  id: String,
                  values: Vec<f64>|
     -> Result<()> {
        let expected = *dim.get_or_insert(values.len());
        if values.len() != expected {
            return Err(Error::parse(
                loc(row),
                format!("ragged row: {} values, expected {expected}", values.len()),
            ));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::parse(loc(row), format!("non-finite value {bad}")));
        }
        if out.contains_key(&id) {
            return Err(Error::parse(loc(row), format!("duplicate id '{id}'")));
        }
        out.insert(id, FeatureVector::from_dense(&values));
        Ok(())
    };

    let mut header_seen = false;
    for (i, line) in reader.lines().enumerate() {
        let row = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if is_jsonl {
            let rec: EmbeddingLine =
                serde_json::from_str(&line).map_err(|e| Error::parse(loc(row), e))?;
            insert(&mut out, &mut dim, row, rec.id, rec.embedding)?;
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let first = fields.next().unwrap_or_default().to_string();
        if !header_seen {
            header_seen = true;
            let declared = fields.next().unwrap_or_default();
            if first != "id" {
                return Err(Error::parse(loc(row), "expected header 'id,<dim>'"));
            }
            if declared != "dim" {
                dim = Some(declared.parse().map_err(|_| {
                    Error::parse(loc(row), format!("invalid dimension '{declared}'"))
                })?);
            }
            continue;
        }
        let values = fields
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(loc(row), e))?;
        insert(&mut out, &mut dim, row, first, values)?;
    }
    if out.is_empty() {
        log::warn!("{}: no embeddings found", path.display());
    }
    Ok(out)
}
