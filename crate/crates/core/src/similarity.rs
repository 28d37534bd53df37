//! Token-set flattening, Jaccard and cosine similarity, and the equal-weight
//! hybrid score.

use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::schema::{FeatureSet, Field, FieldValue};

#[derive(Debug, Error, PartialEq)]
pub enum SimilarityError {
    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("embedding `{0}` is all zeros")]
    ZeroVector(String),
    #[error("similarity out of range: {0}")]
    OutOfRange(String),
    #[error("embedding store: {0}")]
    Store(String),
}

/// Flattened `field=value` / `field~element` tokens of one document.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSet {
    pub tokens: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl TokenSet {
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        TokenSet {
            tokens: tokens.into_iter().map(Into::into).collect(),
            source: None,
        }
    }

    pub fn with_source(mut self, id: impl Into<String>) -> Self {
        self.source = Some(id.into());
        self
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.contains(token)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlattenOptions {
    /// Replace exact counts with log buckets (`0|1|2|3-4|5-8|...`).
    #[serde(default)]
    pub bucket_counts: bool,
    /// Emit each array as one token instead of one token per element.
    #[serde(default)]
    pub atomic_arrays: bool,
    /// Fields (core or extension names) left out of the token set.
    #[serde(default)]
    pub excluded_fields: BTreeSet<String>,
}

/// Log bucket label for a count: 0, 1, 2, 3-4, 5-8, 9-16, ...
pub fn count_bucket(n: u64) -> String {
    if n <= 2 {
        return n.to_string();
    }
    let hi = n.next_power_of_two();
    format!("{}-{}", hi / 2 + 1, hi)
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn flatten(fs: &FeatureSet, opts: &FlattenOptions) -> TokenSet {
    let mut tokens = BTreeSet::new();
    for field in Field::ALL {
        let name = field.name();
        if opts.excluded_fields.contains(name) {
            continue;
        }
        let Some(value) = fs.get(*field) else { continue };
        match value {
            FieldValue::Count(n) if opts.bucket_counts && field.is_count() => {
                tokens.insert(format!("{name}=bucket:{}", count_bucket(n)));
            }
            FieldValue::Count(n) => {
                tokens.insert(format!("{name}={n}"));
            }
            FieldValue::Flag(b) => {
                tokens.insert(format!("{name}={b}"));
            }
            FieldValue::Label(l) => {
                tokens.insert(format!("{name}={l}"));
            }
            FieldValue::Sequence(items) | FieldValue::Set(items) if opts.atomic_arrays => {
                tokens.insert(format!("{name}=[{}]", items.join(",")));
            }
            FieldValue::Sequence(items) => {
                // Positional so that reordered parameter lists stay distinct.
                for (i, item) in items.iter().enumerate() {
                    tokens.insert(format!("{name}~{i}:{item}"));
                }
            }
            FieldValue::Set(items) => {
                for item in items {
                    tokens.insert(format!("{name}~{item}"));
                }
            }
        }
    }
    for (name, value) in &fs.extensions {
        if opts.excluded_fields.contains(name) {
            continue;
        }
        match value {
            Value::Array(items) if !opts.atomic_arrays => {
                for item in items {
                    tokens.insert(format!("{name}~{}", scalar_text(item)));
                }
            }
            other => {
                tokens.insert(format!("{name}={}", scalar_text(other)));
            }
        }
    }
    TokenSet { tokens, source: None }
}

/// Intersection size of two sorted sets in one merge pass.
pub fn intersection_size(a: &TokenSet, b: &TokenSet) -> usize {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small.tokens.iter().filter(|t| large.tokens.contains(*t)).count()
}

/// `|A ∩ B| / |A ∪ B|`; two empty sets are identical (1.0).
pub fn jaccard(a: &TokenSet, b: &TokenSet) -> f64 {
    let inter = intersection_size(a, b);
    jaccard_from_counts(inter, a.len(), b.len())
}

pub fn jaccard_from_counts(inter: usize, len_a: usize, len_b: usize) -> f64 {
    let union = len_a + len_b - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        EmbeddingVector { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Cosine similarity clamped to `[-1, 1]`.
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, SimilarityError> {
    if u.dim() != v.dim() {
        return Err(SimilarityError::DimensionMismatch {
            left: u.dim(),
            right: v.dim(),
        });
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 {
        return Err(SimilarityError::ZeroVector("left".into()));
    }
    if nv == 0.0 {
        return Err(SimilarityError::ZeroVector("right".into()));
    }
    let dot: f64 = u.values.iter().zip(&v.values).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridScore {
    /// Jaccard over feature tokens.
    pub s_a: f64,
    /// Cosine over external embeddings.
    pub s_e: f64,
    pub combined: f64,
}

/// Equal-weight mean of the analysis and embedding similarities.
pub fn hybrid(s_a: f64, s_e: f64) -> Result<HybridScore, SimilarityError> {
    if !(0.0..=1.0).contains(&s_a) {
        return Err(SimilarityError::OutOfRange(format!("s_a = {s_a} not in [0, 1]")));
    }
    if !(-1.0..=1.0).contains(&s_e) {
        return Err(SimilarityError::OutOfRange(format!("s_e = {s_e} not in [-1, 1]")));
    }
    Ok(HybridScore {
        s_a,
        s_e,
        combined: (s_e + s_a) / 2.0,
    })
}

#[derive(Debug, Deserialize, Serialize)]
struct EmbeddingRecord {
    id: String,
    values: Vec<f64>,
}

/// Embeddings keyed by function id; all vectors share one dimension.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    vectors: HashMap<String, EmbeddingVector>,
    dim: Option<usize>,
}

impl EmbeddingStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, v: EmbeddingVector) -> Result<(), SimilarityError> {
        let id = id.into();
        if v.dim() == 0 {
            return Err(SimilarityError::Store(format!("embedding `{id}` is empty")));
        }
        if v.norm() == 0.0 {
            return Err(SimilarityError::ZeroVector(id));
        }
        match self.dim {
            Some(d) if d != v.dim() => {
                return Err(SimilarityError::DimensionMismatch { left: d, right: v.dim() })
            }
            _ => self.dim = Some(v.dim()),
        }
        self.vectors.insert(id, v);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingVector> {
        self.vectors.get(id)
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Reads `{"id": ..., "values": [...]}` lines.
    pub fn read_jsonl(reader: impl BufRead) -> Result<Self, SimilarityError> {
        let mut store = EmbeddingStore::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| SimilarityError::Store(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: EmbeddingRecord = serde_json::from_str(&line)
                .map_err(|e| SimilarityError::Store(format!("line {}: {e}", idx + 1)))?;
            store.insert(rec.id, EmbeddingVector::new(rec.values))?;
        }
        Ok(store)
    }
}
