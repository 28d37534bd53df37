//! Exact inverted index over token sets.
//!
//! Jaccard scores are computed from posting-list intersection counts:
//! `|A ∩ B|` accumulates while walking the query's postings, and
//! `|A ∪ B| = |A| + |B| - |A ∩ B|`. Documents that share no token with the
//! query are only visited when they are needed to fill `k` slots.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::sync::{Arc, RwLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::schema::{canonicalize, FeatureSet};
use crate::similarity::{cosine, hybrid, EmbeddingStore, EmbeddingVector, SimilarityError, TokenSet};

/// Snapshot magic; the trailing digit is the format version.
pub const SNAPSHOT_MAGIC: &[u8; 9] = b"ASMSIEVE1";

const TAG_HEADER: u8 = 1;
const TAG_DOCUMENTS: u8 = 2;
const TAG_POSTINGS: u8 = 3;
const TAG_CHECKSUM: u8 = 0xff;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("function `{0}` is already indexed")]
    DuplicateId(String),
    #[error("k must be positive")]
    InvalidK,
    #[error("k2 ({k2}) must not exceed k1 ({k1})")]
    InvalidRerankDepth { k1: usize, k2: usize },
    #[error("index is empty")]
    Empty,
    #[error("missing embeddings for: {}", .0.join(", "))]
    MissingEmbeddings(Vec<String>),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jaccard: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cosine: Option<f64>,
}

/// Ranked hits, best first; equal scores ordered by ascending id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub hits: Vec<Hit>,
}

impl SearchResult {
    pub fn ids(&self) -> Vec<&str> {
        self.hits.iter().map(|h| h.id.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Document {
    id: String,
    len: u32,
    features: Option<String>,
}

/// A scored candidate: Jaccard as the exact fraction `inter / union`.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    slot: u32,
    inter: u32,
    union: u32,
}

impl Candidate {
    fn score(&self) -> f64 {
        if self.union == 0 {
            1.0
        } else {
            self.inter as f64 / self.union as f64
        }
    }

    /// Numerator/denominator with the empty-vs-empty case mapped to 1/1.
    fn fraction(&self) -> (u64, u64) {
        if self.union == 0 {
            (1, 1)
        } else {
            (self.inter as u64, self.union as u64)
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct InvertedIndex {
    docs: Vec<Document>,
    by_id: BTreeMap<String, u32>,
    postings: HashMap<String, Vec<u32>>,
}

impl PartialEq for InvertedIndex {
    fn eq(&self, other: &Self) -> bool {
        self.to_snapshot_bytes() == other.to_snapshot_bytes()
    }
}

impl InvertedIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.postings.len()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    /// Indexed ids in ascending order.
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.by_id.keys().map(String::as_str)
    }

    /// Number of tokens stored for `id`.
    pub fn cardinality(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).map(|&slot| self.docs[slot as usize].len as usize)
    }

    /// Ids holding `token`, sorted.
    pub fn postings(&self, token: &str) -> Vec<&str> {
        let mut ids: Vec<&str> = self
            .postings
            .get(token)
            .map(|list| list.iter().map(|&s| self.docs[s as usize].id.as_str()).collect())
            .unwrap_or_default();
        ids.sort_unstable();
        ids
    }

    /// Canonical feature text stored with the document, if any.
    pub fn features(&self, id: &str) -> Option<&str> {
        self.by_id
            .get(id)
            .and_then(|&slot| self.docs[slot as usize].features.as_deref())
    }

    pub fn add(&mut self, id: impl Into<String>, tokens: &TokenSet) -> Result<(), IndexError> {
        self.insert(id.into(), tokens, None)
    }

    /// Adds a document and keeps its canonical feature text in the registry.
    pub fn add_document(
        &mut self,
        id: impl Into<String>,
        features: &FeatureSet,
        tokens: &TokenSet,
    ) -> Result<(), IndexError> {
        self.insert(id.into(), tokens, Some(canonicalize(features)))
    }

    fn insert(&mut self, id: String, tokens: &TokenSet, features: Option<String>) -> Result<(), IndexError> {
        if self.by_id.contains_key(&id) {
            return Err(IndexError::DuplicateId(id));
        }
        let slot = self.docs.len() as u32;
        for token in tokens.iter() {
            // Slots only grow, so pushing keeps every list sorted.
            self.postings.entry(token.to_string()).or_default().push(slot);
        }
        self.by_id.insert(id.clone(), slot);
        self.docs.push(Document {
            id,
            len: tokens.len() as u32,
            features,
        });
        Ok(())
    }

    fn compare(&self, a: &Candidate, b: &Candidate) -> Ordering {
        let (an, ad) = a.fraction();
        let (bn, bd) = b.fraction();
        (bn * ad)
            .cmp(&(an * bd))
            .then_with(|| self.docs[a.slot as usize].id.cmp(&self.docs[b.slot as usize].id))
    }

    /// Exact top-`k` by Jaccard similarity.
    pub fn search(&self, query: &TokenSet, k: usize) -> Result<SearchResult, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        if self.docs.is_empty() {
            return Err(IndexError::Empty);
        }
        let qlen = query.len() as u32;
        let mut counts = vec![0u32; self.docs.len()];
        let mut touched: Vec<u32> = Vec::new();
        for token in query.iter() {
            if let Some(list) = self.postings.get(token) {
                for &slot in list {
                    let c = &mut counts[slot as usize];
                    if *c == 0 {
                        touched.push(slot);
                    }
                    *c += 1;
                }
            }
        }
        if qlen == 0 {
            // Empty query: only empty documents are similar (1.0).
            touched.extend(
                self.docs
                    .iter()
                    .enumerate()
                    .filter(|(_, d)| d.len == 0)
                    .map(|(i, _)| i as u32),
            );
        }

        let mut candidates: Vec<Candidate> = touched
            .iter()
            .map(|&slot| {
                let inter = counts[slot as usize];
                Candidate {
                    slot,
                    inter,
                    union: qlen + self.docs[slot as usize].len - inter,
                }
            })
            .collect();

        if candidates.len() > k {
            candidates.select_nth_unstable_by(k - 1, |a, b| self.compare(a, b));
            candidates.truncate(k);
        }
        candidates.sort_unstable_by(|a, b| self.compare(a, b));

        let mut hits: Vec<Hit> = candidates
            .iter()
            .map(|c| Hit {
                id: self.docs[c.slot as usize].id.clone(),
                score: c.score(),
                jaccard: None,
                cosine: None,
            })
            .collect();

        if hits.len() < k {
            let seen: std::collections::HashSet<u32> = touched.iter().copied().collect();
            for (id, &slot) in &self.by_id {
                if hits.len() == k {
                    break;
                }
                if !seen.contains(&slot) {
                    hits.push(Hit {
                        id: id.clone(),
                        score: 0.0,
                        jaccard: None,
                        cosine: None,
                    });
                }
            }
        }
        Ok(SearchResult { hits })
    }

    /// Runs many queries; parallel when `parallel` is set.
    pub fn search_many(
        &self,
        queries: &[TokenSet],
        k: usize,
        parallel: bool,
    ) -> Result<Vec<SearchResult>, IndexError> {
        if parallel {
            queries.par_iter().map(|q| self.search(q, k)).collect()
        } else {
            queries.iter().map(|q| self.search(q, k)).collect()
        }
    }

    /// Jaccard pre-filter to `k1` candidates, then re-rank those by the
    /// hybrid score and keep `k2`.
    pub fn prefilter_rerank(
        &self,
        query: &TokenSet,
        query_embedding: &EmbeddingVector,
        k1: usize,
        k2: usize,
        embeddings: &EmbeddingStore,
    ) -> Result<SearchResult, IndexError> {
        if k2 == 0 {
            return Err(IndexError::InvalidK);
        }
        if k2 > k1 {
            return Err(IndexError::InvalidRerankDepth { k1, k2 });
        }
        let stage1 = self.search(query, k1)?;
        let missing: Vec<String> = stage1
            .hits
            .iter()
            .filter(|h| embeddings.get(&h.id).is_none())
            .map(|h| h.id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(IndexError::MissingEmbeddings(missing));
        }

        let mut hits = stage1
            .hits
            .into_iter()
            .map(|h| {
                let emb = embeddings.get(&h.id).expect("checked above");
                let s_e = cosine(query_embedding, emb)?;
                let score = hybrid(h.score, s_e)?;
                Ok(Hit {
                    id: h.id,
                    score: score.combined,
                    jaccard: Some(score.s_a),
                    cosine: Some(score.s_e),
                })
            })
            .collect::<Result<Vec<_>, IndexError>>()?;
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
        hits.truncate(k2);
        Ok(SearchResult { hits })
    }

    /// Slots sorted by id, the order used by snapshots.
    fn sorted_slots(&self) -> Vec<u32> {
        self.by_id.values().copied().collect()
    }

    /// Serializes to the versioned single-file snapshot format.
    ///
    /// Layout (integers little-endian, strings as `u32 length + UTF-8`):
    ///
    /// ```text
    /// "ASMSIEVE1"
    /// section*  := tag:u8 length:u64 payload
    ///   0x01 header     doc_count:u32 token_count:u32
    ///   0x02 documents  (id:str cardinality:u32 has_features:u8 [features:str])*  sorted by id
    ///   0x03 postings   (token:str n:u32 doc:u32*n)*  tokens sorted, doc = position in documents
    ///   0xff checksum   sha256 of every preceding byte
    /// ```
    pub fn persist(&self, mut w: impl Write) -> Result<(), IndexError> {
        w.write_all(&self.to_snapshot_bytes())?;
        Ok(())
    }

    pub fn to_snapshot_bytes(&self) -> Vec<u8> {
        let order = self.sorted_slots();
        let mut position = vec![0u32; self.docs.len()];
        for (pos, &slot) in order.iter().enumerate() {
            position[slot as usize] = pos as u32;
        }

        let mut header = Vec::new();
        header.extend_from_slice(&(self.docs.len() as u32).to_le_bytes());
        header.extend_from_slice(&(self.postings.len() as u32).to_le_bytes());

        let mut docs = Vec::new();
        for &slot in &order {
            let d = &self.docs[slot as usize];
            put_str(&mut docs, &d.id);
            docs.extend_from_slice(&d.len.to_le_bytes());
            match &d.features {
                Some(f) => {
                    docs.push(1);
                    put_str(&mut docs, f);
                }
                None => docs.push(0),
            }
        }

        let mut tokens: Vec<&String> = self.postings.keys().collect();
        tokens.sort_unstable();
        let mut postings = Vec::new();
        for token in tokens {
            put_str(&mut postings, token);
            let mut list: Vec<u32> = self.postings[token].iter().map(|&s| position[s as usize]).collect();
            list.sort_unstable();
            postings.extend_from_slice(&(list.len() as u32).to_le_bytes());
            for p in list {
                postings.extend_from_slice(&p.to_le_bytes());
            }
        }

        let mut out = Vec::with_capacity(64 + docs.len() + postings.len());
        out.extend_from_slice(SNAPSHOT_MAGIC);
        for (tag, payload) in [(TAG_HEADER, header), (TAG_DOCUMENTS, docs), (TAG_POSTINGS, postings)] {
            out.push(tag);
            out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            out.extend_from_slice(&payload);
        }
        let digest = Sha256::digest(&out);
        out.push(TAG_CHECKSUM);
        out.extend_from_slice(&(digest.len() as u64).to_le_bytes());
        out.extend_from_slice(&digest);
        out
    }

    pub fn load(bytes: &[u8]) -> Result<Self, IndexError> {
        let bad = |m: &str| IndexError::Snapshot(m.to_string());
        if bytes.len() < SNAPSHOT_MAGIC.len() || &bytes[..SNAPSHOT_MAGIC.len()] != SNAPSHOT_MAGIC {
            if bytes.starts_with(b"ASMSIEVE") {
                return Err(bad("unsupported snapshot version"));
            }
            return Err(bad("not an index snapshot"));
        }
        let mut r = Reader {
            buf: bytes,
            pos: SNAPSHOT_MAGIC.len(),
        };
        let mut sections: Vec<(u8, &[u8])> = Vec::new();
        loop {
            let start = r.pos;
            let tag = r.u8()?;
            let len = r.u64()? as usize;
            let payload = r.take(len)?;
            if tag == TAG_CHECKSUM {
                let digest = Sha256::digest(&bytes[..start]);
                if payload != digest.as_slice() {
                    return Err(bad("checksum mismatch"));
                }
                if r.pos != bytes.len() {
                    return Err(bad("trailing bytes after checksum"));
                }
                break;
            }
            sections.push((tag, payload));
        }
        let [(TAG_HEADER, header), (TAG_DOCUMENTS, docs), (TAG_POSTINGS, postings)] = sections[..] else {
            return Err(bad("unexpected section layout"));
        };

        let mut h = Reader { buf: header, pos: 0 };
        let doc_count = h.u32()? as usize;
        let token_count = h.u32()? as usize;

        let mut index = InvertedIndex::new();
        let mut d = Reader { buf: docs, pos: 0 };
        for slot in 0..doc_count {
            let id = d.string()?;
            let len = d.u32()?;
            let features = match d.u8()? {
                0 => None,
                1 => Some(d.string()?),
                _ => return Err(bad("invalid feature flag")),
            };
            if index.by_id.insert(id.clone(), slot as u32).is_some() {
                return Err(bad("duplicate document id"));
            }
            index.docs.push(Document { id, len, features });
        }
        d.finish()?;

        let mut seen_len = vec![0u32; doc_count];
        let mut p = Reader { buf: postings, pos: 0 };
        for _ in 0..token_count {
            let token = p.string()?;
            let n = p.u32()? as usize;
            let mut list = Vec::with_capacity(n.min(doc_count));
            for _ in 0..n {
                let slot = p.u32()?;
                if slot as usize >= doc_count || list.last().is_some_and(|&last| last >= slot) {
                    return Err(bad("posting list out of order or out of range"));
                }
                seen_len[slot as usize] += 1;
                list.push(slot);
            }
            if index.postings.insert(token, list).is_some() {
                return Err(bad("duplicate token"));
            }
        }
        p.finish()?;
        if index.docs.iter().zip(&seen_len).any(|(doc, &n)| doc.len != n) {
            return Err(bad("cardinalities disagree with postings"));
        }
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_snapshot_bytes())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn open(path: &Path) -> Result<Self, IndexError> {
        Self::load(&fs::read(path)?)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| IndexError::Snapshot("truncated snapshot".into()))?;
        let slice = &self.buf[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, IndexError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, IndexError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| IndexError::Snapshot("invalid UTF-8".into()))
    }

    fn finish(&self) -> Result<(), IndexError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(IndexError::Snapshot("section has trailing bytes".into()))
        }
    }
}

/// Many readers or one writer. A load swaps the whole index at once, so
/// in-flight searches see either the old or the new contents.
#[derive(Debug, Default)]
pub struct SharedIndex {
    inner: RwLock<Arc<InvertedIndex>>,
}

impl SharedIndex {
    pub fn new(index: InvertedIndex) -> Self {
        SharedIndex {
            inner: RwLock::new(Arc::new(index)),
        }
    }

    pub fn current(&self) -> Arc<InvertedIndex> {
        Arc::clone(&self.inner.read().unwrap_or_else(|e| e.into_inner()))
    }

    pub fn search(&self, query: &TokenSet, k: usize) -> Result<SearchResult, IndexError> {
        self.current().search(query, k)
    }

    pub fn add(&self, id: impl Into<String>, tokens: &TokenSet) -> Result<(), IndexError> {
        let mut guard = self.inner.write().unwrap_or_else(|e| e.into_inner());
        Arc::make_mut(&mut guard).add(id, tokens)
    }

    /// Parses the snapshot outside the lock, then swaps it in.
    pub fn load(&self, bytes: &[u8]) -> Result<(), IndexError> {
        let fresh = Arc::new(InvertedIndex::load(bytes)?);
        *self.inner.write().unwrap_or_else(|e| e.into_inner()) = fresh;
        Ok(())
    }
}
