//! Seeded synthetic workloads for the benchmarks.

use std::collections::{BTreeSet, HashMap};

use asmsieve::corpus::{FunctionPair, Pairing};
use asmsieve::index::InvertedIndex;
use asmsieve::schema::{AlgorithmCategory, FeatureSet, OperationCategory, ParamType, ReturnType};
use asmsieve::similarity::{EmbeddingStore, EmbeddingVector, TokenSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A set of `len` tokens drawn from a skewed vocabulary of `vocab` entries,
/// so a few tokens are very common and most are rare.
pub fn token_set(rng: &mut ChaCha8Rng, len: usize, vocab: u32) -> TokenSet {
    let mut toks = BTreeSet::new();
    while toks.len() < len {
        let r: f64 = rng.random();
        toks.insert(format!("tok{}", (r * r * r * vocab as f64) as u32));
    }
    TokenSet::new(toks)
}

pub fn corpus(seed: u64, docs: usize, len: usize) -> Vec<(String, TokenSet)> {
    let mut rng = rng(seed);
    (0..docs)
        .map(|i| (format!("doc{i:07}"), token_set(&mut rng, len, 20_000)))
        .collect()
}

pub fn build_index(docs: &[(String, TokenSet)]) -> InvertedIndex {
    let mut index = InvertedIndex::new();
    for (id, t) in docs {
        index.add(id.clone(), t).expect("ids are unique");
    }
    index
}

pub fn embeddings(seed: u64, ids: impl IntoIterator<Item = String>, dim: usize) -> EmbeddingStore {
    let mut rng = rng(seed);
    let mut store = EmbeddingStore::new();
    for id in ids {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        store.insert(id, EmbeddingVector::new(v)).expect("consistent dimension");
    }
    store
}

/// A complete, valid feature document with random values.
pub fn feature_set(rng: &mut ChaCha8Rng) -> FeatureSet {
    let params = rng.random_range(0..5);
    let ops = [
        OperationCategory::Arithmetic,
        OperationCategory::Bitwise,
        OperationCategory::DataMovement,
        OperationCategory::ConditionalBranching,
        OperationCategory::SubroutineCall,
        OperationCategory::MemoryAccess,
    ];
    let algos = [
        AlgorithmCategory::DataProcessing,
        AlgorithmCategory::Initialization,
        AlgorithmCategory::UtilityHelper,
        AlgorithmCategory::CryptographicHashing,
        AlgorithmCategory::Undetermined,
    ];
    let mut flag = || Some(rng.random_bool(0.5));
    let flags: Vec<Option<bool>> = (0..12).map(|_| flag()).collect();
    FeatureSet {
        in_param_cnt: Some(params),
        in_param_types: Some(
            (0..params)
                .map(|_| if rng.random_bool(0.5) { ParamType::Integer } else { ParamType::Pointer })
                .collect(),
        ),
        ret_type: Some([ReturnType::Integer, ReturnType::Pointer, ReturnType::None][rng.random_range(0..3)]),
        dominant_operation_categories: Some((0..rng.random_range(1..3)).map(|_| ops[rng.random_range(0..6)]).collect()),
        r#loop: flags[0],
        jump_table: flags[1],
        indexed_addr: flags[2],
        simd: flags[3],
        subcall_targets: Some(rng.random_range(0..8)),
        int_consts: Some((0..rng.random_range(0..6)).map(|_| format!("0x{:x}", rng.random_range(2u32..1 << 20))).collect()),
        float_consts: Some(BTreeSet::new()),
        imm_values_cnt: Some(rng.random_range(0..20)),
        string_literals: flags[4],
        mutates_inputs: flags[5],
        mutates_globals: flags[6],
        mem_alloc: flags[7],
        io_ops: flags[8],
        block_mem_ops: flags[9],
        error_handling: flags[10],
        interrupts_syscalls: Some(rng.random_range(0..2)),
        inferred_algo: Some(algos[rng.random_range(0..algos.len())]),
        extensions: Default::default(),
    }
}

/// `n` pairs whose right side is a noisy copy of the left side.
pub fn pool(seed: u64, n: usize) -> (Vec<FunctionPair>, HashMap<String, TokenSet>) {
    let mut rng = rng(seed);
    let mut pairs = Vec::with_capacity(n);
    let mut features = HashMap::with_capacity(2 * n);
    for i in 0..n {
        let left = token_set(&mut rng, 30, 2_000);
        let mut right: BTreeSet<String> = left.iter().filter(|_| rng.random_bool(0.7)).map(str::to_string).collect();
        right.extend(token_set(&mut rng, 8, 2_000).iter().map(str::to_string));
        let (l, r) = (format!("L{i:05}"), format!("R{i:05}"));
        features.insert(l.clone(), left);
        features.insert(r.clone(), TokenSet::new(right));
        pairs.push(FunctionPair {
            left: l,
            right: r,
            pairing: Pairing::CrossOptimization,
        });
    }
    (pairs, features)
}
