//! Clone search for binary functions over interpretable feature documents.
//!
//! Pipeline: [`corpus`] ingests disassembly listings, [`extraction`] turns
//! each function into a [`FeatureSet`] (via a language model or the static
//! analyzer), [`similarity`] flattens documents into token sets, [`index`]
//! answers exact top-k Jaccard queries, and [`eval`] measures retrieval
//! quality over pools of known clone pairs.

pub mod corpus;
pub mod eval;
pub mod extraction;
pub mod index;
pub mod schema;
pub mod similarity;

pub use corpus::{AssemblyFunction, Arch, FunctionPair, Instruction, OptLevel, Pairing};
pub use eval::{evaluate_pool, EvalPool, EvalReport, Scorer};
pub use extraction::{extract_features, static_extract, ClientTranscript, PromptConfig, RetryPolicy};
pub use index::{InvertedIndex, SearchResult};
pub use schema::{canonicalize, diff, validate, FeatureSet};
pub use similarity::{cosine, flatten, hybrid, jaccard, EmbeddingVector, FlattenOptions, HybridScore, TokenSet};
