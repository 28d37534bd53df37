//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use asmsieve::corpus::{
    build_pairs, check_corpus, filter_short, parse_listing, truncate, write_jsonl, Arch, FunctionPair, Instruction,
    ListingMeta, OptLevel, Pairing, DEFAULT_MAX_INSTRUCTIONS, DEFAULT_MIN_INSTRUCTIONS,
};
use asmsieve::eval::{evaluate_pool, mrr_and_recall, EvalPool, Scorer};
use asmsieve::extraction::{
    analyze, ExampleBank, ExtractionError, Extractor, FixtureStore, PromptConfig, ReplayClient, RetryPolicy,
    ScriptedClient,
};
use asmsieve::index::InvertedIndex;
use asmsieve::schema::{canonicalize, diff, feature_line, validate, FeatureSet};
use asmsieve::similarity::{flatten, hybrid, EmbeddingStore, EmbeddingVector, FlattenOptions, TokenSet};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Check = Result<String, String>;

fn main() -> ExitCode {
    let criteria: Vec<(&str, fn() -> Check)> = vec![
        ("index-exactness", index_exactness),
        ("metric-correctness", metric_correctness),
        ("schema-round-trip", schema_round_trip),
        ("retry-policy", retry_policy),
        ("hybrid-score", hybrid_score),
        ("static-analyzer", static_analyzer),
        ("fixture-determinism", fixture_determinism),
        ("index-performance", index_performance),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_tokens(rng: &mut ChaCha8Rng, vocab: usize, max_len: usize) -> BTreeSet<String> {
    let n = rng.random_range(0..=max_len);
    (0..n).map(|_| format!("t{}", rng.random_range(0..vocab))).collect()
}

fn token_set(s: &BTreeSet<String>) -> TokenSet {
    TokenSet::new(s.iter().cloned())
}

/// Exact fraction for the oracle; two empty sets count as identical.
fn oracle_jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> (u64, u64) {
    let inter = a.intersection(b).count() as u64;
    let union = (a.len() + b.len()) as u64 - inter;
    if union == 0 {
        (1, 1)
    } else {
        (inter, union)
    }
}

fn ratio((n, d): (u64, u64)) -> f64 {
    n as f64 / d as f64
}

fn index_exactness() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x1d3);
    let mut queries = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=100);
        let docs: Vec<(String, BTreeSet<String>)> = (0..n)
            .map(|i| (format!("d{:03}", (i * 37) % 1000), random_tokens(&mut rng, 60, 40)))
            .collect();
        let mut index = InvertedIndex::new();
        for (id, toks) in &docs {
            index.add(id.clone(), &token_set(toks)).map_err(|e| e.to_string())?;
        }
        for _ in 0..3 {
            let q = random_tokens(&mut rng, 60, 40);
            let mut expected: Vec<(&str, (u64, u64))> =
                docs.iter().map(|(id, t)| (id.as_str(), oracle_jaccard(&q, t))).collect();
            expected.sort_by(|(ia, (na, da)), (ib, (nb, db))| (nb * da).cmp(&(na * db)).then_with(|| ia.cmp(ib)));
            for k in [1, 5, 10] {
                let got = index.search(&token_set(&q), k).map_err(|e| e.to_string())?;
                let want = &expected[..k.min(expected.len())];
                ensure(got.len() == want.len(), || format!("k={k}: {} hits, expected {}", got.len(), want.len()))?;
                for (hit, (id, frac)) in got.hits.iter().zip(want) {
                    ensure(hit.id == *id && hit.score == ratio(*frac), || {
                        format!("k={k}: got {} ({}), expected {id} ({})", hit.id, hit.score, ratio(*frac))
                    })?;
                }
                queries += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("{queries} queries over 200 corpora match exhaustive scan in {elapsed:.2?}"))
}

fn metric_correctness() -> Check {
    let (mrr, r1) = mrr_and_recall(&[1, 2, 4, 1]);
    ensure(mrr == 0.6875 && r1 == 0.5, || format!("hand example gave {mrr} / {r1}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(0xe7a1);
    for pool_no in 0..100 {
        let n = rng.random_range(1..=50);
        let mut left = HashMap::new();
        let mut right = HashMap::new();
        let mut pairs = Vec::new();
        for i in 0..n {
            let base = random_tokens(&mut rng, 25, 12);
            let mut other = base.clone();
            for _ in 0..rng.random_range(0..4) {
                other.insert(format!("t{}", rng.random_range(0..25)));
            }
            let (l, r) = (format!("L{i:02}"), format!("R{i:02}"));
            left.insert(l.clone(), base);
            right.insert(r.clone(), other);
            pairs.push(FunctionPair {
                left: l,
                right: r,
                pairing: Pairing::CrossOptimization,
            });
        }
        pairs.shuffle(&mut rng);

        let mut ranks = Vec::new();
        let mut pess = Vec::new();
        for p in &pairs {
            let q = &left[&p.left];
            let truth = ratio(oracle_jaccard(q, &right[&p.right]));
            let (mut better, mut tied_before, mut tied) = (0, 0, 0);
            for (id, toks) in &right {
                if *id == p.right {
                    continue;
                }
                let s = ratio(oracle_jaccard(q, toks));
                if s > truth {
                    better += 1;
                } else if s == truth {
                    tied += 1;
                    if *id < p.right {
                        tied_before += 1;
                    }
                }
            }
            ranks.push(1 + better + tied_before);
            pess.push(1 + better + tied);
        }
        let mean = |r: &[usize]| r.iter().map(|&x| 1.0 / x as f64).sum::<f64>() / r.len() as f64;
        let hit1 = |r: &[usize]| r.iter().filter(|&&x| x == 1).count() as f64 / r.len() as f64;

        let features: HashMap<String, TokenSet> = left
            .iter()
            .chain(right.iter())
            .map(|(k, v)| (k.clone(), token_set(v)))
            .collect();
        let pool = EvalPool::new(pairs, Scorer::Jaccard).map_err(|e| e.to_string())?;
        let report = evaluate_pool(&pool, &features, None).map_err(|e| e.to_string())?;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
        ensure(
            close(report.mrr, mean(&ranks))
                && close(report.recall_at_1, hit1(&ranks))
                && close(report.mrr_pessimistic, mean(&pess))
                && close(report.recall_at_1_pessimistic, hit1(&pess)),
            || {
                format!(
                    "pool {pool_no}: report mrr {} r@1 {}, brute force {} {}",
                    report.mrr,
                    report.recall_at_1,
                    mean(&ranks),
                    hit1(&ranks)
                )
            },
        )?;
    }
    Ok("hand example 0.6875/0.5 exact; 100 random pools within 1e-12 of brute force".into())
}

const OPS: [&str; 6] = [
    "Arithmetic",
    "Bitwise",
    "DataMovement",
    "ConditionalBranching",
    "SubroutineCall",
    "MemoryAccess",
];
const ALGOS: [&str; 10] = [
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

fn random_document(rng: &mut ChaCha8Rng) -> Value {
    let params = rng.random_range(0..6);
    let types: Vec<&str> = (0..params)
        .map(|_| if rng.random_bool(0.5) { "Integer" } else { "Pointer" })
        .collect();
    let ints: Vec<Value> = (0..rng.random_range(0..=15))
        .map(|_| {
            let v: u32 = rng.random_range(2..u32::MAX - 1);
            match rng.random_range(0..3) {
                0 => json!(format!("0x{v:X}")),
                1 => json!(v),
                _ => json!(format!("0{v:x}h")),
            }
        })
        .collect();
    let floats: Vec<String> = (0..rng.random_range(0..3))
        .map(|_| format!("{:.3}", rng.random_range(-100.0..100.0)))
        .collect();
    let ret = ["Integer", "Pointer", "Float", "None"][rng.random_range(0..4)];
    let mut ops: Vec<&str> = OPS.iter().copied().filter(|_| rng.random_bool(0.4)).collect();
    if ops.is_empty() {
        ops.push(OPS[rng.random_range(0..OPS.len())]);
    }
    let mut doc = json!({
        "in_param_cnt": params,
        "in_param_types": types,
        "ret_type": ret,
        "dominant_operation_categories": ops,
        "loop": rng.random_bool(0.5),
        "jump_table": rng.random_bool(0.5),
        "indexed_addr": rng.random_bool(0.5),
        "simd": rng.random_bool(0.5),
        "subcall_targets": rng.random_range(0..20),
        "int_consts": ints,
        "float_consts": floats,
        "imm_values_cnt": rng.random_range(0..40),
        "string_literals": rng.random_bool(0.5),
        "mutates_inputs": rng.random_bool(0.5),
        "mutates_globals": rng.random_bool(0.5),
        "mem_alloc": rng.random_bool(0.5),
        "io_ops": rng.random_bool(0.5),
        "block_mem_ops": rng.random_bool(0.5),
        "error_handling": rng.random_bool(0.5),
        "interrupts_syscalls": rng.random_range(0..4),
        "inferred_algo": ALGOS[rng.random_range(0..ALGOS.len())],
    });
    if rng.random_bool(0.3) {
        doc["x_note"] = json!(rng.random_range(0..100));
    }
    doc
}

fn figure_pair() -> (Value, Value) {
    let arm = json!({
        "in_param_cnt": 1,
        "in_param_types": ["Ptr"],
        "ret_type": "None",
        "dominant_operation_categories": ["ConditionalBranching", "SubroutineCall"],
        "loop": false,
        "jump_table": false,
        "indexed_addr": false,
        "simd": false,
        "subcall_targets": 2,
        "int_consts": ["0x39"],
        "float_consts": [],
        "imm_values_cnt": 3,
        "string_literals": false,
        "mutates_inputs": false,
        "mutates_globals": false,
        "mem_alloc": false,
        "io_ops": false,
        "block_mem_ops": false,
        "error_handling": false,
        "interrupts_syscalls": 0,
        "inferred_algo": "Undetermined"
    });
    let mut x86 = arm.clone();
    x86["ret_type"] = json!("Integer");
    x86["int_consts"] = json!(["0x39", "0x4"]);
    x86["inferred_algo"] = json!("Initialization");
    (arm, x86)
}

fn schema_round_trip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5c4e);
    for i in 0..1000 {
        let doc = random_document(&mut rng);
        let fs = validate(&doc).map_err(|e| format!("document {i}: {e}: {doc}"))?;
        let text = canonicalize(&fs);
        let back: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        let fs2 = validate(&back).map_err(|e| format!("canonical form {i} rejected: {e}"))?;
        ensure(fs2 == fs, || format!("document {i} changed on round trip"))?;
        ensure(canonicalize(&fs2) == text, || format!("document {i}: canonical form not stable"))?;
        ensure(diff(&fs, &fs).is_empty(), || format!("document {i}: self diff not empty"))?;
    }
    let (arm, x86) = figure_pair();
    let a = validate(&arm).map_err(|e| e.to_string())?;
    let b = validate(&x86).map_err(|e| e.to_string())?;
    let changed = diff(&a, &b).changed_fields().join(",");
    ensure(changed == "ret_type,int_consts,inferred_algo", || format!("variant diff fields: {changed}"))?;
    Ok("1000 documents round trip; figure variants differ in ret_type,int_consts,inferred_algo".into())
}

fn retry_policy() -> Check {
    let (_, valid) = figure_pair();
    let valid = valid.to_string();
    let bad = ["not json at all".to_string(), r#"{"loop": "maybe"}"#.to_string()];
    let bank = ExampleBank::bundled();
    let f = snippet_function("retry_probe", Arch::X86_64, &["push rbp", "mov eax, 5", "pop rbp", "ret"]);
    let mut cases = 0;
    for max_retries in 0..=3u32 {
        let policy = RetryPolicy {
            max_retries,
            ..RetryPolicy::default()
        };
        let extractor = Extractor::new(PromptConfig::default(), policy, &bank);
        for failures in 0..=max_retries + 1 {
            let mut script: Vec<Result<String, String>> =
                (0..failures).map(|i| Ok(bad[i as usize % 2].clone())).collect();
            script.push(Ok(valid.clone()));
            let client = ScriptedClient::new(script);
            let result = extractor.extract(&f, &client);
            let temps = client.temperatures();
            ensure(temps.windows(2).all(|w| w[0] < w[1]), || format!("temperatures not increasing: {temps:?}"))?;
            for (i, t) in temps.iter().enumerate() {
                let want = policy.base_temperature + i as f64 * policy.temperature_step;
                ensure((t - want).abs() < 1e-12, || format!("attempt {i} at {t}, expected {want}"))?;
            }
            if failures <= max_retries {
                let (_, transcript) = result.map_err(|e| format!("r={max_retries} f={failures}: {e}"))?;
                ensure(transcript.attempts.len() == failures as usize + 1, || {
                    format!("r={max_retries} f={failures}: {} attempts", transcript.attempts.len())
                })?;
            } else {
                match result {
                    Err(ExtractionError::Failed { transcript }) => {
                        ensure(transcript.attempts.len() == max_retries as usize + 1, || {
                            format!("r={max_retries}: {} attempts on failure", transcript.attempts.len())
                        })?;
                    }
                    other => return Err(format!("r={max_retries} f={failures}: expected failure, got {other:?}")),
                }
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} scripted runs: attempt counts and temperature schedule as configured"))
}

fn oracle_cosine(u: &[f64], v: &[f64]) -> f64 {
    let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    (dot / (norm(u) * norm(v))).clamp(-1.0, 1.0)
}

fn hybrid_score() -> Check {
    for a in 0..=10 {
        for e in (-10..=10).step_by(2) {
            let (s_a, s_e) = (a as f64 / 10.0, e as f64 / 10.0);
            let h = hybrid(s_a, s_e).map_err(|err| err.to_string())?;
            ensure(h.combined == (s_e + s_a) / 2.0 && (-0.5..=1.0).contains(&h.combined), || {
                format!("hybrid({s_a}, {s_e}) = {}", h.combined)
            })?;
        }
    }
    for (s_a, s_e) in [(1.1, 0.0), (-0.1, 0.0), (0.5, 1.2), (0.5, -1.01)] {
        ensure(hybrid(s_a, s_e).is_err(), || format!("hybrid({s_a}, {s_e}) accepted"))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x4b1d);
    for corpus_no in 0..50 {
        let mut index = InvertedIndex::new();
        let mut store = EmbeddingStore::new();
        let mut docs = Vec::new();
        let vector = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..8).map(|_| rng.random_range(-1.0..1.0)).collect() };
        for i in 0..20 {
            let id = format!("f{i:02}");
            let toks = random_tokens(&mut rng, 30, 15);
            let emb = vector(&mut rng);
            index.add(id.clone(), &token_set(&toks)).map_err(|e| e.to_string())?;
            store
                .insert(id.clone(), EmbeddingVector::new(emb.clone()))
                .map_err(|e| e.to_string())?;
            docs.push((id, toks, emb));
        }
        let q = random_tokens(&mut rng, 30, 15);
        let qe = vector(&mut rng);
        let mut expected: Vec<(String, f64)> = docs
            .iter()
            .map(|(id, toks, emb)| (id.clone(), (oracle_cosine(&qe, emb) + ratio(oracle_jaccard(&q, toks))) / 2.0))
            .collect();
        expected.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let got = index
            .prefilter_rerank(&token_set(&q), &EmbeddingVector::new(qe), 20, 20, &store)
            .map_err(|e| e.to_string())?;
        let got_ids: Vec<&str> = got.ids();
        let want_ids: Vec<&str> = expected.iter().map(|(id, _)| id.as_str()).collect();
        ensure(got_ids == want_ids, || format!("corpus {corpus_no}: {got_ids:?} vs {want_ids:?}"))?;
    }
    Ok("121-point grid exact; 50 re-ranked corpora equal brute-force hybrid order".into())
}

fn snippet_function(symbol: &str, arch: Arch, lines: &[&str]) -> asmsieve::corpus::AssemblyFunction {
    asmsieve::corpus::AssemblyFunction {
        id: asmsieve::corpus::AssemblyFunction::make_id("snippets", &arch, OptLevel::O0, symbol),
        library: "snippets".into(),
        arch,
        opt_level: OptLevel::O0,
        source_symbol: symbol.into(),
        instructions: lines.iter().map(|l| Instruction::parse(l)).collect(),
        truncated: false,
    }
}

struct Expect {
    looped: bool,
    calls: u64,
    syscalls: u64,
    consts: &'static [&'static str],
    imms: u64,
    indexed: bool,
    simd: bool,
}

fn expected_features(e: &Expect) -> FeatureSet {
    FeatureSet {
        r#loop: Some(e.looped),
        subcall_targets: Some(e.calls),
        interrupts_syscalls: Some(e.syscalls),
        int_consts: Some(e.consts.iter().map(|s| s.to_string()).collect()),
        imm_values_cnt: Some(e.imms),
        indexed_addr: Some(e.indexed),
        simd: Some(e.simd),
        ..FeatureSet::default()
    }
}

fn static_analyzer() -> Check {
    let wide: Vec<String> = (2..=20)
        .map(|v| format!("mov eax, {v}"))
        .chain(["movaps xmm0, xmm1".to_string(), "mov eax, 12345678h".into(), "retn".into()])
        .collect();
    let wide: Vec<&str> = wide.iter().map(String::as_str).collect();
    let cases: Vec<(&str, Arch, Vec<&str>, Expect)> = vec![
        (
            "x86_backward_jnz",
            Arch::X86_64,
            vec![
                "401000: xor eax, eax",
                "401002: mov ecx, 10h",
                "401007: add eax, ecx",
                "401009: dec ecx",
                "40100b: jnz short loc_401007",
                "40100d: xor eax, 0DEADBEEFh",
                "401012: retn",
            ],
            Expect { looped: true, calls: 0, syscalls: 0, consts: &["0x10", "0xdeadbeef"], imms: 2, indexed: false, simd: false },
        ),
        (
            "x86_calls_trivial_consts",
            Arch::X86_64,
            vec![
                "mov edi, 0",
                "mov esi, 1",
                "call _malloc",
                "call sub_401200",
                "call _malloc",
                "mov eax, 0FFFFFFFFh",
                "retn",
            ],
            Expect { looped: false, calls: 2, syscalls: 0, consts: &[], imms: 3, indexed: false, simd: false },
        ),
        (
            "x86_syscalls_stack_frame",
            Arch::X86_64,
            vec![
                "sub rsp, 28h",
                "mov eax, 3Ch",
                "mov rdx, [rbx+rcx*8+10h]",
                "syscall",
                "int 80h",
                "add rsp, 28h",
                "retn",
            ],
            Expect { looped: false, calls: 0, syscalls: 2, consts: &["0x3c", "0x80"], imms: 3, indexed: true, simd: false },
        ),
        (
            "x86_constant_cap",
            Arch::X86_64,
            wide,
            Expect {
                looped: false,
                calls: 0,
                syscalls: 0,
                consts: &[
                    "0x12345678", "0x10", "0x11", "0x12", "0x13", "0x14", "0x8", "0x9", "0xa", "0xb", "0xc", "0xd",
                    "0xe", "0xf", "0x4",
                ],
                imms: 20,
                indexed: false,
                simd: true,
            },
        ),
        (
            "arm_label_loop",
            Arch::Arm,
            vec![
                "mov r2, #0",
                "loop:",
                "ldr r3, [r0, r2, lsl #2]",
                "add r1, r1, r3",
                "add r2, r2, #1",
                "cmp r2, #0x40",
                "blt loop",
                "bx lr",
            ],
            Expect { looped: true, calls: 0, syscalls: 0, consts: &["0x40"], imms: 3, indexed: true, simd: false },
        ),
        (
            "arm_calls_svc",
            Arch::Arm,
            vec![
                "10000: push {r4, lr}",
                "10004: mov r7, #4",
                "10008: svc #0",
                "1000c: bl memcpy",
                "10010: bl memcpy",
                "10014: bl printf",
                "10018: pop {r4, pc}",
            ],
            Expect { looped: false, calls: 2, syscalls: 1, consts: &["0x4"], imms: 2, indexed: false, simd: false },
        ),
        (
            "arm_neon_literal_pool",
            Arch::Arm,
            vec![
                "ldr r0, =0x04C11DB7",
                "vld1.32 {d0, d1}, [r1]",
                "vadd.i32 q0, q0, q1",
                "mov r3, #-1",
                "sub sp, sp, #16",
                "b done",
                "done:",
                "bx lr",
            ],
            Expect { looped: false, calls: 0, syscalls: 0, consts: &["0x4c11db7"], imms: 3, indexed: false, simd: true },
        ),
        (
            "arm64_cbnz_loop",
            Arch::Arm,
            vec![
                "400000: mov x2, #0",
                "400004: ldr w3, [x0, x2]",
                "400008: add x2, x2, #4",
                "40000c: cbnz w3, 0x400004",
                "400010: ld1 {v0.4s}, [x1]",
                "400014: blr x8",
                "400018: ret",
            ],
            Expect { looped: true, calls: 1, syscalls: 0, consts: &["0x4"], imms: 2, indexed: true, simd: true },
        ),
        (
            "mips_delay_slot_loop",
            Arch::Mips,
            vec![
                "400100: move $v0, $zero",
                "400104: addiu $v0, $v0, 3",
                "400108: addiu $a1, $a1, -1",
                "40010c: bnez $a1, loc_400104",
                "400110: nop",
                "400114: jr $ra",
            ],
            Expect { looped: true, calls: 0, syscalls: 0, consts: &["0x3"], imms: 2, indexed: false, simd: false },
        ),
        (
            "mips_frame_calls_syscall",
            Arch::Mips,
            vec![
                "addiu $sp, $sp, -32",
                "sw $ra, 28($sp)",
                "li $v0, 4004",
                "syscall",
                "jal malloc",
                "nop",
                "jalr $t9",
                "lw $ra, 28($sp)",
                "jr $ra",
                "addiu $sp, $sp, 32",
            ],
            Expect { looped: false, calls: 2, syscalls: 1, consts: &["0xfa4"], imms: 3, indexed: false, simd: false },
        ),
        (
            "mips_indexed_msa",
            Arch::Mips,
            vec![
                "lui $t0, 0xEDB8",
                "ori $t0, $t0, 0x8320",
                "lwx $t1, $a1($a0)",
                "ld.w $w0, 0($a2)",
                "addv.w $w1, $w0, $w0",
                "jr $ra",
            ],
            Expect { looped: false, calls: 0, syscalls: 0, consts: &["0x8320", "0xedb8"], imms: 2, indexed: true, simd: true },
        ),
        (
            "mips_label_loop_bal",
            Arch::Mips,
            vec![
                "li $t0, 0x100",
                "again:",
                "bal helper",
                "nop",
                "addiu $t0, $t0, -1",
                "bgtz $t0, again",
                "nop",
                "jr $ra",
            ],
            Expect { looped: true, calls: 1, syscalls: 0, consts: &["0x100"], imms: 2, indexed: false, simd: false },
        ),
    ];
    let count = cases.len();
    for (name, arch, lines, expect) in cases {
        let f = snippet_function(name, arch, &lines);
        let got = analyze(&f.arch, &f.instructions);
        let want = expected_features(&expect);
        ensure(got.warnings.is_empty(), || format!("{name}: warnings {:?}", got.warnings))?;
        ensure(got.features == want, || {
            format!("{name}: got {} expected {}", canonicalize(&got.features), canonicalize(&want))
        })?;
    }
    Ok(format!("{count} hand-traced snippets match"))
}

struct PipelineOutput {
    corpus: Vec<u8>,
    pairs: Vec<u8>,
    features: String,
    snapshot: Vec<u8>,
    report: String,
}

fn mini_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mini")
}

fn run_pipeline() -> Result<PipelineOutput, String> {
    let dir = mini_dir();
    let read = |name: &str| std::fs::read_to_string(dir.join(name)).map_err(|e| format!("{name}: {e}"));
    let mut sides = Vec::new();
    for (file, opt) in [("listings/minilib_o0.asm", OptLevel::O0), ("listings/minilib_o3.asm", OptLevel::O3)] {
        let meta = ListingMeta::new("minilib", Arch::X86_64, opt);
        let fns = parse_listing(&read(file)?, &meta).map_err(|e| e.to_string())?;
        let fns: Vec<_> = filter_short(fns, DEFAULT_MIN_INSTRUCTIONS)
            .into_iter()
            .map(|f| truncate(f, DEFAULT_MAX_INSTRUCTIONS))
            .collect();
        check_corpus(&fns).map_err(|e| e.to_string())?;
        sides.push(fns);
    }
    let pairs = build_pairs(&sides[0], &sides[1], Pairing::CrossOptimization).map_err(|e| e.to_string())?;
    let all: Vec<_> = sides.concat();

    let store = FixtureStore::open(dir.join("fixtures"));
    let client = ReplayClient::new(&store);
    let bank = ExampleBank::bundled();
    let extractor = Extractor::new(PromptConfig::default(), RetryPolicy::default(), &bank);
    let mut features = String::new();
    let mut docs = Vec::new();
    for (f, result) in all.iter().zip(extractor.extract_many(&all, &client, 4)) {
        let (fs, _) = result.map_err(|e| e.to_string())?;
        features.push_str(&feature_line(&f.id, &fs));
        features.push('\n');
        docs.push((f.id.clone(), fs));
    }

    let opts = FlattenOptions::default();
    let mut index = InvertedIndex::new();
    for (id, fs) in &docs {
        index.add_document(id.clone(), fs, &flatten(fs, &opts)).map_err(|e| e.to_string())?;
    }
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let snap_path = tmp.path().join("mini.snap");
    index.save(&snap_path).map_err(|e| e.to_string())?;
    let reopened = InvertedIndex::open(&snap_path).map_err(|e| e.to_string())?;
    ensure(reopened == index, || "snapshot reload differs".into())?;

    let tokens: HashMap<String, TokenSet> = docs.iter().map(|(id, fs)| (id.clone(), flatten(fs, &opts))).collect();
    let pool = EvalPool::new(pairs.clone(), Scorer::Jaccard).map_err(|e| e.to_string())?;
    let report = evaluate_pool(&pool, &tokens, None)
        .map_err(|e| e.to_string())?
        .with_setting("flatten", "exact");

    let mut corpus = Vec::new();
    write_jsonl(&mut corpus, &all).map_err(|e| e.to_string())?;
    let mut pairs_out = Vec::new();
    write_jsonl(&mut pairs_out, &pairs).map_err(|e| e.to_string())?;
    Ok(PipelineOutput {
        corpus,
        pairs: pairs_out,
        features,
        snapshot: reopened.to_snapshot_bytes(),
        report: report.to_json_pretty(),
    })
}

fn fixture_determinism() -> Check {
    let dir = mini_dir();
    let first = run_pipeline()?;
    let second = run_pipeline()?;
    ensure(
        first.corpus == second.corpus
            && first.pairs == second.pairs
            && first.features == second.features
            && first.snapshot == second.snapshot
            && first.report == second.report,
        || "two runs differ".into(),
    )?;
    let committed = |name: &str| std::fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}"));
    ensure(first.corpus == committed("corpus.jsonl")?, || "corpus differs from corpus.jsonl".into())?;
    ensure(first.pairs == committed("pairs.jsonl")?, || "pairs differ from pairs.jsonl".into())?;
    ensure(first.features.as_bytes() == committed("features.jsonl")?, || {
        "features differ from features.jsonl".into()
    })?;
    ensure(first.report.as_bytes() == committed("expected_report.json")?, || {
        format!("report differs from expected_report.json:\n{}", first.report)
    })?;
    Ok("two runs byte-identical and equal to the committed corpus, features and report".into())
}

/// Skewed vocabulary so posting lengths vary the way feature tokens do.
fn synthetic_doc(rng: &mut ChaCha8Rng, len: usize) -> TokenSet {
    let mut toks = BTreeSet::new();
    while toks.len() < len {
        let r: f64 = rng.random();
        toks.insert(format!("tok{}", (r * r * r * 20_000.0) as u32));
    }
    TokenSet::new(toks)
}

fn index_performance() -> Check {
    const DOCS: usize = 100_000;
    const BUILD_LIMIT: Duration = Duration::from_secs(60);
    const QUERY_LIMIT: Duration = Duration::from_millis(100);
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e7f);
    let docs: Vec<TokenSet> = (0..DOCS).map(|_| synthetic_doc(&mut rng, 30)).collect();
    let start = Instant::now();
    let mut index = InvertedIndex::new();
    for (i, d) in docs.iter().enumerate() {
        index.add(format!("doc{i:06}"), d).map_err(|e| e.to_string())?;
    }
    let build = start.elapsed();
    let mut times: Vec<Duration> = (0..200)
        .map(|_| {
            let q = synthetic_doc(&mut rng, 30);
            let t = Instant::now();
            let hits = index.search(&q, 10).map(|r| r.len());
            let elapsed = t.elapsed();
            assert_eq!(hits.ok(), Some(10));
            elapsed
        })
        .collect();
    times.sort();
    let median = times[times.len() / 2];
    let detail = format!("built {DOCS} docs in {build:.2?}, median top-10 query {median:.2?}");
    if build > 2 * BUILD_LIMIT || median > 2 * QUERY_LIMIT {
        return Err(detail);
    }
    if build > BUILD_LIMIT || median > QUERY_LIMIT {
        println!("WARN index-performance: over target but within 2x");
    }
    Ok(detail)
}
