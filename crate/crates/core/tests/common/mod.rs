//! Shared generators for the property suites.
#![allow(dead_code)]

use std::collections::BTreeSet;

use asmsieve::schema::{validate, FeatureSet};
use asmsieve::similarity::TokenSet;
use proptest::collection::{btree_set, vec};
use proptest::prelude::*;
use serde_json::{json, Value};

pub const OPS: [&str; 6] = [
    "Arithmetic",
    "Bitwise",
    "DataMovement",
    "ConditionalBranching",
    "SubroutineCall",
    "MemoryAccess",
];

pub const ALGOS: [&str; 10] = [
    "SystemOsInteraction",
    "MemoryManagement",
    "DataProcessing",
    "ControlFlowDispatch",
    "Initialization",
    "ErrorHandling",
    "UtilityHelper",
    "CryptographicHashing",
    "InterfacingWrapper",
    "Undetermined",
];

pub const RETS: [&str; 4] = ["Integer", "Pointer", "Float", "None"];

fn int_literal() -> impl Strategy<Value = Value> {
    (2u64..=0xffff_fffe, 0..3u8).prop_map(|(v, style)| match style {
        0 => json!(format!("0x{v:X}")),
        1 => json!(v),
        _ => json!(format!("0{v:x}h")),
    })
}

/// A complete core document as raw JSON, possibly with loose spellings.
pub fn arb_core_doc() -> impl Strategy<Value = Value> {
    let types = vec(prop::bool::ANY, 0..6);
    let flags = vec(prop::bool::ANY, 12);
    let counts = (0u64..20, 0u64..40, 0u64..4);
    let ints = vec(int_literal(), 0..=15);
    let floats = vec(-1000i32..1000, 0..3);
    let ops = btree_set(0..OPS.len(), 1..=3);
    (types, flags, counts, ints, floats, ops, 0..RETS.len(), 0..ALGOS.len()).prop_map(
        |(types, f, (calls, imms, sys), ints, floats, ops, ret, algo)| {
            let types: Vec<&str> = types.iter().map(|p| if *p { "Pointer" } else { "Integer" }).collect();
            json!({
                "in_param_cnt": types.len(),
                "in_param_types": types,
                "ret_type": RETS[ret],
                "dominant_operation_categories": ops.iter().map(|i| OPS[*i]).collect::<Vec<_>>(),
                "loop": f[0],
                "jump_table": f[1],
                "indexed_addr": f[2],
                "simd": f[3],
                "subcall_targets": calls,
                "int_consts": ints,
                "float_consts": floats.iter().map(|x| format!("{}.5", x)).collect::<Vec<_>>(),
                "imm_values_cnt": imms,
                "string_literals": f[4],
                "mutates_inputs": f[5],
                "mutates_globals": f[6],
                "mem_alloc": f[7],
                "io_ops": f[8],
                "block_mem_ops": f[9],
                "error_handling": f[10],
                "interrupts_syscalls": sys,
                "inferred_algo": ALGOS[algo],
            })
        },
    )
}

fn extension_value() -> impl Strategy<Value = Value> {
    prop_oneof![
        any::<i32>().prop_map(|v| json!(v)),
        "[a-z]{0,6}".prop_map(|s| json!(s)),
        vec("[a-z]{1,4}", 0..3).prop_map(|v| json!(v)),
    ]
}

/// A complete document plus up to two extension fields.
pub fn arb_doc() -> impl Strategy<Value = Value> {
    (arb_core_doc(), vec(("x_[a-z]{1,5}", extension_value()), 0..3)).prop_map(|(mut doc, ext)| {
        for (k, v) in ext {
            doc[k] = v;
        }
        doc
    })
}

pub fn arb_core_feature_set() -> impl Strategy<Value = FeatureSet> {
    arb_core_doc().prop_map(|d| validate(&d).expect("generated document is valid"))
}

pub fn arb_feature_set() -> impl Strategy<Value = FeatureSet> {
    arb_doc().prop_map(|d| validate(&d).expect("generated document is valid"))
}

pub fn arb_tokens(vocab: usize, max_len: usize) -> impl Strategy<Value = BTreeSet<String>> {
    btree_set((0..vocab).prop_map(|i| format!("t{i}")), 0..=max_len)
}

pub fn token_set(s: &BTreeSet<String>) -> TokenSet {
    TokenSet::new(s.iter().cloned())
}

/// Exhaustive Jaccard as an exact fraction; two empty sets are identical.
pub fn fraction(a: &BTreeSet<String>, b: &BTreeSet<String>) -> (u64, u64) {
    let inter = a.intersection(b).count() as u64;
    let union = (a.len() + b.len()) as u64 - inter;
    if union == 0 {
        (1, 1)
    } else {
        (inter, union)
    }
}

/// Ids ranked by exhaustive scan: score descending, then id ascending.
pub fn brute_force_ranking<'a>(query: &BTreeSet<String>, docs: &'a [(String, BTreeSet<String>)]) -> Vec<(&'a str, f64)> {
    let mut scored: Vec<(&str, (u64, u64))> = docs.iter().map(|(id, t)| (id.as_str(), fraction(query, t))).collect();
    scored.sort_by(|(ia, (na, da)), (ib, (nb, db))| (nb * da).cmp(&(na * db)).then_with(|| ia.cmp(ib)));
    scored.into_iter().map(|(id, (n, d))| (id, n as f64 / d as f64)).collect()
}
