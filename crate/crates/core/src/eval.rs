//! Pool-based retrieval evaluation and prompt ablation grids.
//!
//! For each pair `(a, b)` of a pool, `b` is ranked among all right-hand
//! functions of the pool by similarity to `a`. Equal scores are ordered by
//! ascending id (the reported rank); the pessimistic rank counts every tie
//! as ranked ahead.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AssemblyFunction, FunctionPair};
use crate::extraction::{ClientError, ExampleBank, ExtractionError, Extractor, ModelClient, PromptConfig, RetryPolicy};
use crate::index::{IndexError, InvertedIndex};
use crate::schema::{FeatureSet, Section};
use crate::similarity::{cosine, flatten, EmbeddingStore, FlattenOptions, SimilarityError, TokenSet};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid pool: {0}")]
    InvalidPool(String),
    #[error("missing features for: {}", .0.join(", "))]
    MissingFeatures(Vec<String>),
    #[error("missing embeddings for: {}", .0.join(", "))]
    MissingEmbeddings(Vec<String>),
    #[error("grid cell `{cell}`: {source}")]
    Cell { cell: String, source: ClientError },
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scorer {
    Jaccard,
    Hybrid,
    Cosine,
}

impl fmt::Display for Scorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scorer::Jaccard => "jaccard",
            Scorer::Hybrid => "hybrid",
            Scorer::Cosine => "cosine",
        })
    }
}

impl std::str::FromStr for Scorer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jaccard" => Ok(Scorer::Jaccard),
            "hybrid" => Ok(Scorer::Hybrid),
            "cosine" => Ok(Scorer::Cosine),
            _ => Err(format!("unknown scorer `{s}` (expected jaccard, hybrid or cosine)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPool {
    pairs: Vec<FunctionPair>,
    pub scorer: Scorer,
}

impl EvalPool {
    pub fn new(pairs: Vec<FunctionPair>, scorer: Scorer) -> Result<Self, EvalError> {
        if pairs.is_empty() {
            return Err(EvalError::InvalidPool("pool is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for p in &pairs {
            if !seen.insert(p.right.as_str()) {
                return Err(EvalError::InvalidPool(format!("right-side id `{}` appears twice", p.right)));
            }
        }
        Ok(EvalPool { pairs, scorer })
    }

    pub fn pairs(&self) -> &[FunctionPair] {
        &self.pairs
    }

    pub fn pool_size(&self) -> usize {
        self.pairs.len()
    }

    /// Left and right ids, sorted.
    pub fn ids(&self) -> BTreeSet<&str> {
        self.pairs
            .iter()
            .flat_map(|p| [p.left.as_str(), p.right.as_str()])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRank {
    pub left: String,
    pub right: String,
    pub rank: usize,
    pub pessimistic_rank: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scorer: Scorer,
    pub pool_size: usize,
    pub mrr: f64,
    pub recall_at_1: f64,
    pub mrr_pessimistic: f64,
    pub recall_at_1_pessimistic: f64,
    /// Ranks in the order of `pairs`.
    pub per_pair_ranks: Vec<usize>,
    /// Sorted by (left, right).
    pub pairs: Vec<PairRank>,
    /// Free-form configuration echo (prompt label, flatten options, ...).
    #[serde(default)]
    pub settings: BTreeMap<String, String>,
}

/// Mean of `1/rank` and fraction of rank 1, summed in ascending rank order so
/// the result does not depend on pair order.
pub fn mrr_and_recall(ranks: &[usize]) -> (f64, f64) {
    if ranks.is_empty() {
        return (0.0, 0.0);
    }
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let sum: f64 = sorted.iter().map(|&r| 1.0 / r as f64).sum();
    let hits = sorted.iter().filter(|&&r| r == 1).count() as f64;
    (sum / n, hits / n)
}

impl EvalReport {
    fn from_ranks(scorer: Scorer, mut pairs: Vec<PairRank>) -> Self {
        pairs.sort_by(|a, b| a.left.cmp(&b.left).then_with(|| a.right.cmp(&b.right)));
        let ranks: Vec<usize> = pairs.iter().map(|p| p.rank).collect();
        let pess: Vec<usize> = pairs.iter().map(|p| p.pessimistic_rank).collect();
        let (mrr, recall_at_1) = mrr_and_recall(&ranks);
        let (mrr_pessimistic, recall_at_1_pessimistic) = mrr_and_recall(&pess);
        EvalReport {
            scorer,
            pool_size: pairs.len(),
            mrr,
            recall_at_1,
            mrr_pessimistic,
            recall_at_1_pessimistic,
            per_pair_ranks: ranks,
            pairs,
            settings: BTreeMap::new(),
        }
    }

    pub fn with_setting(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.settings.insert(key.into(), value.into());
        self
    }

    /// Pretty JSON with a trailing newline; byte-stable for equal reports.
    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scorer     {}", self.scorer);
        let _ = writeln!(out, "pool size  {}", self.pool_size);
        for (k, v) in &self.settings {
            let _ = writeln!(out, "{k:<10} {v}");
        }
        let _ = writeln!(out, "{:<12}{:>10}{:>12}", "metric", "ranked", "pessimistic");
        let _ = writeln!(out, "{:<12}{:>10.4}{:>12.4}", "MRR", self.mrr, self.mrr_pessimistic);
        let _ = writeln!(
            out,
            "{:<12}{:>10.4}{:>12.4}",
            "Recall@1", self.recall_at_1, self.recall_at_1_pessimistic
        );
        out
    }
}

/// Rank of `target` among `scored` (id, score): ties ordered by id.
fn ranks_of(target: &str, scored: &[(&str, f64)]) -> (usize, usize, f64) {
    let score = scored
        .iter()
        .find(|(id, _)| *id == target)
        .map(|(_, s)| *s)
        .expect("target is in its own pool");
    let mut ahead = 0;
    let mut tied = 0;
    for &(id, s) in scored {
        if id == target {
            continue;
        }
        match s.total_cmp(&score) {
            std::cmp::Ordering::Greater => ahead += 1,
            std::cmp::Ordering::Equal => {
                tied += 1;
                if id < target {
                    ahead += 1;
                }
            }
            std::cmp::Ordering::Less => {}
        }
    }
    let pessimistic = scored
        .iter()
        .filter(|(id, s)| *id != target && s.total_cmp(&score).is_ge())
        .count();
    debug_assert!(pessimistic >= ahead && pessimistic <= ahead + tied);
    (ahead + 1, pessimistic + 1, score)
}

/// Ranks every pair of `pool`. `features` must cover all pool ids;
/// `embeddings` is required for the hybrid and cosine scorers.
pub fn evaluate_pool(
    pool: &EvalPool,
    features: &HashMap<String, TokenSet>,
    embeddings: Option<&EmbeddingStore>,
) -> Result<EvalReport, EvalError> {
    let ids = pool.ids();
    if pool.scorer != Scorer::Cosine {
        let missing: Vec<String> = ids
            .iter()
            .filter(|id| !features.contains_key(**id))
            .map(|id| id.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(EvalError::MissingFeatures(missing));
        }
    }
    let store = match pool.scorer {
        Scorer::Jaccard => None,
        Scorer::Hybrid | Scorer::Cosine => {
            let store = embeddings.ok_or_else(|| EvalError::Config(format!("scorer {} needs embeddings", pool.scorer)))?;
            let missing: Vec<String> = ids
                .iter()
                .filter(|id| store.get(id).is_none())
                .map(|id| id.to_string())
                .collect();
            if !missing.is_empty() {
                return Err(EvalError::MissingEmbeddings(missing));
            }
            Some(store)
        }
    };

    let mut index = InvertedIndex::new();
    if pool.scorer != Scorer::Cosine {
        for p in &pool.pairs {
            index.add(p.right.clone(), &features[&p.right])?;
        }
    }
    let n = pool.pool_size();

    let ranked: Vec<PairRank> = pool
        .pairs
        .par_iter()
        .map(|pair| -> Result<PairRank, EvalError> {
            let jac: HashMap<String, f64> = if pool.scorer == Scorer::Cosine {
                HashMap::new()
            } else {
                index
                    .search(&features[&pair.left], n)?
                    .hits
                    .into_iter()
                    .map(|h| (h.id, h.score))
                    .collect()
            };
            let mut scored: Vec<(&str, f64)> = Vec::with_capacity(n);
            for cand in &pool.pairs {
                let id = cand.right.as_str();
                let s = match (pool.scorer, store) {
                    (Scorer::Jaccard, _) => jac[id],
                    (Scorer::Cosine, Some(st)) => cosine(st.get(&pair.left).expect("checked"), st.get(id).expect("checked"))?,
                    (Scorer::Hybrid, Some(st)) => {
                        let s_e = cosine(st.get(&pair.left).expect("checked"), st.get(id).expect("checked"))?;
                        crate::similarity::hybrid(jac[id], s_e)?.combined
                    }
                    _ => unreachable!("store presence checked above"),
                };
                scored.push((id, s));
            }
            let (rank, pessimistic_rank, score) = ranks_of(&pair.right, &scored);
            Ok(PairRank {
                left: pair.left.clone(),
                right: pair.right.clone(),
                rank,
                pessimistic_rank,
                score,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(EvalReport::from_ranks(pool.scorer, ranked))
}

/// Draws `size` pairs without replacement with a seeded ChaCha8 generator,
/// keeping the source order of the drawn pairs.
pub fn sample_pool(pairs: &[FunctionPair], size: usize, seed: u64) -> Result<Vec<FunctionPair>, EvalError> {
    if size == 0 || size > pairs.len() {
        return Err(EvalError::InvalidPool(format!(
            "cannot draw {size} pairs from {} available",
            pairs.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, pairs.len(), size).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| pairs[i].clone()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    NumExamples,
    DropOneSection,
    SystemPrompt,
    SchemaInPrompt,
}

impl std::str::FromStr for AblationAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "num_examples" | "examples" => Ok(AblationAxis::NumExamples),
            "drop_one_section" | "sections" => Ok(AblationAxis::DropOneSection),
            "system_prompt" => Ok(AblationAxis::SystemPrompt),
            "schema_in_prompt" | "schema" => Ok(AblationAxis::SchemaInPrompt),
            _ => Err(format!("unknown ablation axis `{s}`")),
        }
    }
}

/// The prompt configurations along one axis, with a label per cell.
pub fn grid_cells(base: &PromptConfig, axis: AblationAxis) -> Vec<(String, PromptConfig)> {
    match axis {
        AblationAxis::NumExamples => (0..=crate::extraction::MAX_EXAMPLES)
            .map(|n| {
                (
                    format!("num_examples={n}"),
                    PromptConfig {
                        num_examples: n,
                        ..base.clone()
                    },
                )
            })
            .collect(),
        AblationAxis::DropOneSection => Section::ALL
            .iter()
            .map(|s| {
                let mut sections = Section::ALL.iter().copied().collect::<BTreeSet<_>>();
                sections.remove(s);
                (format!("without {s}"), PromptConfig { sections, ..base.clone() })
            })
            .collect(),
        AblationAxis::SystemPrompt => [true, false]
            .into_iter()
            .map(|on| {
                (
                    format!("system_prompt={}", if on { "on" } else { "off" }),
                    PromptConfig {
                        system_prompt_enabled: on,
                        ..base.clone()
                    },
                )
            })
            .collect(),
        AblationAxis::SchemaInPrompt => [false, true]
            .into_iter()
            .map(|on| {
                (
                    format!("schema_in_prompt={}", if on { "on" } else { "off" }),
                    PromptConfig {
                        include_schema_in_prompt: on,
                        ..base.clone()
                    },
                )
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub cell: String,
    pub config: PromptConfig,
    pub pool: usize,
    /// Functions whose every attempt was invalid; scored with no features.
    pub extraction_failures: usize,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub axis: AblationAxis,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn render_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.cell.len()).max().unwrap_or(4).max(4);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>4}  {:>8}  {:>8}  {:>8}",
            "cell", "pool", "MRR", "Recall@1", "failed"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>4}  {:>8.4}  {:>8.4}  {:>8}",
                r.cell, r.pool, r.report.mrr, r.report.recall_at_1, r.extraction_failures
            );
        }
        out
    }
}

/// Everything an ablation run needs besides the axis.
pub struct AblationInputs<'a> {
    pub base: PromptConfig,
    pub policy: RetryPolicy,
    pub bank: &'a ExampleBank,
    pub functions: &'a HashMap<String, AssemblyFunction>,
    pub client: &'a dyn ModelClient,
    pub flatten: FlattenOptions,
    pub embeddings: Option<&'a EmbeddingStore>,
    pub parallel: usize,
}

/// One report per (cell, pool). Client errors such as fixture misses abort
/// with the cell name; invalid model output counts as an extraction failure.
pub fn ablation_grid(
    axis: AblationAxis,
    pools: &[EvalPool],
    inputs: &AblationInputs<'_>,
) -> Result<AblationTable, EvalError> {
    let needed: BTreeSet<&str> = pools.iter().flat_map(|p| p.ids()).collect();
    let missing: Vec<String> = needed
        .iter()
        .filter(|id| !inputs.functions.contains_key(**id))
        .map(|id| id.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingFeatures(missing));
    }
    let fns: Vec<AssemblyFunction> = needed.iter().map(|id| inputs.functions[*id].clone()).collect();

    let mut rows = Vec::new();
    for (cell, cfg) in grid_cells(&inputs.base, axis) {
        let extractor = Extractor::new(cfg.clone(), inputs.policy, inputs.bank);
        let mut features = HashMap::new();
        let mut failures = 0;
        for (f, result) in fns.iter().zip(extractor.extract_many(&fns, inputs.client, inputs.parallel)) {
            let fs = match result {
                Ok((fs, _)) => fs,
                Err(ExtractionError::Failed { .. }) => {
                    failures += 1;
                    FeatureSet::default()
                }
                Err(ExtractionError::Client { source, .. }) => return Err(EvalError::Cell { cell, source }),
                Err(e) => return Err(EvalError::Config(format!("cell `{cell}`: {e}"))),
            };
            features.insert(f.id.clone(), flatten(&fs, &inputs.flatten));
        }
        for (i, pool) in pools.iter().enumerate() {
            let report = evaluate_pool(pool, &features, inputs.embeddings)?.with_setting("prompt", cfg.label());
            rows.push(AblationRow {
                cell: cell.clone(),
                config: cfg.clone(),
                pool: i,
                extraction_failures: failures,
                report,
            });
        }
    }
    Ok(AblationTable { axis, rows })
}
