use std::collections::BTreeSet;

use asmsieve::corpus::{Arch, AssemblyFunction, Instruction, OptLevel};
use asmsieve::extraction::{
    build_prompt, static_extract, ExampleBank, ExtractionError, Extractor, PromptConfig, RetryPolicy, ScriptedClient,
    StaticClient,
};
use asmsieve::schema::{Field, Section};
use proptest::collection::{btree_set, vec};
use proptest::prelude::*;

const TRIVIAL: [&str; 6] = ["0x0", "0x1", "0xff", "0xffff", "0xffffffff", "0xffffffffffffffff"];

const VALID: &str = r#"{"in_param_cnt":0,"in_param_types":[],"ret_type":"None","dominant_operation_categories":["DataMovement"],"loop":false,"jump_table":false,"indexed_addr":false,"simd":false,"subcall_targets":0,"int_consts":[],"float_consts":[],"imm_values_cnt":0,"string_literals":false,"mutates_inputs":false,"mutates_globals":false,"mem_alloc":false,"io_ops":false,"block_mem_ops":false,"error_handling":false,"interrupts_syscalls":0,"inferred_algo":"Undetermined"}"#;

fn function(lines: &[String]) -> AssemblyFunction {
    AssemblyFunction {
        id: "lib/x86-64/O2/f".into(),
        library: "lib".into(),
        source_symbol: "f".into(),
        arch: Arch::X86_64,
        opt_level: OptLevel::O2,
        instructions: lines.iter().map(|l| Instruction::new(l.clone())).collect(),
        truncated: false,
    }
}

/// Straight-line x86 with no branches, so only loop detection could depend on order.
fn straight_line() -> impl Strategy<Value = String> {
    let imm = prop_oneof![
        Just("0".to_string()),
        Just("1".to_string()),
        Just("0FFh".to_string()),
        Just("-1".to_string()),
        (2u32..5000).prop_map(|v| v.to_string()),
        (0x10u64..0xffff_ffff).prop_map(|v| format!("0{v:X}h")),
    ];
    prop_oneof![
        ("(mov|add|xor|and) (eax|ebx|ecx|edx)", imm).prop_map(|(op, v)| format!("{op}, {v}")),
        "call (sub_[0-9A-F]{3}|_memcpy|_malloc)",
        Just("syscall".to_string()),
        Just("mov rdx, [rbx+rcx*4]".to_string()),
        Just("paddd xmm0, xmm1".to_string()),
        Just("sub rsp, 20h".to_string()),
        Just("push rbp".to_string()),
    ]
}

fn arb_sections() -> impl Strategy<Value = BTreeSet<Section>> {
    let all = [
        Section::TypeSignature,
        Section::LogicOperations,
        Section::NotableConstants,
        Section::SideEffects,
        Section::Categorization,
    ];
    btree_set(0..5usize, 1..=5).prop_map(move |ix| ix.into_iter().map(|i| all[i]).collect())
}

proptest! {
    #[test]
    fn static_constants_are_notable_and_capped(lines in vec(straight_line(), 1..60)) {
        let fs = static_extract(&function(&lines)).features;
        let consts = fs.int_consts.unwrap();
        prop_assert!(consts.len() <= 15);
        for c in &consts {
            prop_assert!(!TRIVIAL.contains(&c.as_str()), "trivial constant {}", c);
        }
        prop_assert!(consts.len() as u64 <= fs.imm_values_cnt.unwrap());
    }

    #[test]
    fn static_extract_is_pure(lines in vec(straight_line(), 1..40)) {
        let f = function(&lines);
        prop_assert_eq!(static_extract(&f), static_extract(&f));
    }

    #[test]
    fn straight_line_features_ignore_order(
        (lines, shuffled) in vec(straight_line(), 1..40).prop_flat_map(|l| (Just(l.clone()), Just(l).prop_shuffle())),
    ) {
        let a = static_extract(&function(&lines)).features;
        let b = static_extract(&function(&shuffled)).features;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn prompt_requests_exactly_the_enabled_sections(sections in arb_sections(), examples in 0usize..=4) {
        let cfg = PromptConfig { sections: sections.clone(), num_examples: examples, ..PromptConfig::default() };
        let prompt = build_prompt(&function(&["retn".to_string()]), &cfg, &ExampleBank::bundled()).unwrap();
        let wanted: Vec<&str> =
            Field::ALL.iter().filter(|f| sections.contains(&f.section())).map(|f| f.name()).collect();
        let line = prompt.user.lines().find_map(|l| l.strip_prefix("Report these fields: ")).unwrap();
        prop_assert_eq!(line.split(", ").collect::<Vec<_>>(), wanted.clone());
        for field in Field::ALL {
            let quoted = format!("\"{}\"", field.name());
            let shown = prompt.user.contains(&quoted);
            prop_assert_eq!(shown, examples > 0 && wanted.contains(&field.name()), "{}", field.name());
        }
    }

    #[test]
    fn attempts_stay_within_budget(script in vec(any::<bool>(), 0..8), max_retries in 0u32..5) {
        let responses: Vec<Result<String, String>> = script
            .iter()
            .map(|ok| Ok(if *ok { VALID.to_string() } else { "{\"loop\": 3".to_string() }))
            .collect();
        let client = ScriptedClient::new(responses);
        let policy = RetryPolicy { max_retries, ..RetryPolicy::default() };
        let bank = ExampleBank::bundled();
        let result = Extractor::new(PromptConfig::default(), policy, &bank).extract(&function(&["retn".into()]), &client);
        let budget = max_retries as usize + 1;
        let first_valid = script.iter().position(|ok| *ok).filter(|&i| i < budget);
        let attempts = match (&result, first_valid) {
            (Ok((_, t)), Some(i)) => {
                prop_assert_eq!(t.attempts.len(), i + 1);
                t.attempts.len()
            }
            (Err(ExtractionError::Failed { transcript }), None) if script.len() >= budget => transcript.attempts.len(),
            (Err(ExtractionError::Client { transcript, .. }), None) => transcript.attempts.len(),
            (other, _) => return Err(TestCaseError::fail(format!("unexpected outcome {other:?}"))),
        };
        prop_assert!(attempts <= budget);
        let temps = client.temperatures();
        prop_assert!(temps.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn deterministic_client_gives_deterministic_extraction(lines in vec(straight_line(), 1..30)) {
        let bank = ExampleBank::bundled();
        let extractor = Extractor::new(PromptConfig::default(), RetryPolicy::default(), &bank);
        let f = function(&lines);
        let a = extractor.extract(&f, &StaticClient).unwrap();
        let b = extractor.extract(&f, &StaticClient).unwrap();
        prop_assert_eq!(a, b);
    }
}
