//! Deterministic analyzer for the statically decidable features.
//!
//! Rule tables, per architecture:
//!
//! | feature               | x86-64                                  | ARM                                   | MIPS                          |
//! |-----------------------|-----------------------------------------|---------------------------------------|-------------------------------|
//! | branch                | `j*` except `jmp` is conditional, `loop*`| `b`, `b<cond>`, `b.<cond>`, `cb(n)z`, `tb(n)z` | `b*` (not `bal`), `j`   |
//! | call                  | `call`                                  | `bl`, `blx`, `bl<cond>`, `blr`        | `jal`, `jalr`, `bal`, `b*al`  |
//! | syscall / interrupt   | `syscall`, `sysenter`, `int N`          | `svc`, `swi`                          | `syscall`                     |
//! | immediate             | numeric operand outside `[...]`         | `#n` or `=n` outside `[...]`          | numeric operand not `n(reg)`  |
//! | indexed addressing    | `[...]` with `*` or two registers       | `[...]` with two registers            | `l?x`/`?xc1` mnemonics        |
//! | SIMD                  | `xmm`/`ymm`/`zmm`/`mm` registers        | `q` registers, `vN.` lanes, `vld`/`vst` | `$wN` registers             |
//!
//! `loop` is set when a direct branch targets its own or an earlier position
//! (addresses when every line has one, otherwise line indices resolved through
//! `label:` lines), or when an explicit loop instruction is present.
//! `int_consts` excludes 0, 1, -1 (any width) and stack-pointer adjustments;
//! `imm_values_cnt` counts every distinct immediate value.

use std::collections::{BTreeSet, HashMap};

use crate::corpus::{Arch, AssemblyFunction, Instruction};
use crate::schema::{
    hex_digits, AlgorithmCategory, FeatureSet, OperationCategory, ParamType, ReturnType, MAX_INT_CONSTS,
};

#[derive(Debug, Clone, PartialEq)]
pub struct StaticAnalysis {
    pub features: FeatureSet,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Isa {
    X86,
    Arm,
    Mips,
}

impl Isa {
    fn of(arch: &Arch) -> Option<Isa> {
        match arch {
            Arch::X86_64 => Some(Isa::X86),
            Arch::Arm => Some(Isa::Arm),
            Arch::Mips => Some(Isa::Mips),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Decoded {
    mnemonic: String,
    operands: Vec<String>,
}

const X86_PREFIXES: &[&str] = &["rep", "repe", "repz", "repne", "repnz", "lock", "notrack", "bnd"];
const ARM_CONDS: &[&str] = &[
    "eq", "ne", "cs", "hs", "cc", "lo", "mi", "pl", "vs", "vc", "hi", "ls", "ge", "lt", "gt", "le", "al",
];

fn strip_comment(isa: Isa, text: &str) -> &str {
    let mut end = text.len();
    for (i, c) in text.char_indices() {
        let is_comment = match isa {
            Isa::X86 => c == ';',
            Isa::Arm => c == ';' || c == '@',
            Isa::Mips => c == ';' || c == '#',
        };
        if is_comment {
            end = i;
            break;
        }
    }
    text[..end].trim()
}

/// Splits on commas that are not nested in `[]`, `{}` or `()`.
fn split_operands(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for c in s.chars() {
        match c {
            '[' | '{' | '(' => depth += 1,
            ']' | '}' | ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
                continue;
            }
            _ => {}
        }
        cur.push(c);
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

fn decode(isa: Isa, text: &str) -> Option<Decoded> {
    let body = strip_comment(isa, text);
    let mut rest = body;
    loop {
        let (head, tail) = match rest.find(char::is_whitespace) {
            Some(i) => (&rest[..i], rest[i..].trim_start()),
            None => (rest, ""),
        };
        if head.is_empty() {
            return None;
        }
        let mnemonic = head.to_ascii_lowercase();
        if isa == Isa::X86 && X86_PREFIXES.contains(&mnemonic.as_str()) && !tail.is_empty() {
            rest = tail;
            continue;
        }
        return Some(Decoded {
            mnemonic,
            operands: split_operands(tail),
        });
    }
}

/// Label definition (`name:` alone on a line).
fn label_of(text: &str) -> Option<&str> {
    let t = text.trim();
    let name = t.strip_suffix(':')?;
    (!name.is_empty() && name.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.' || c == '$'))
        .then_some(name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Flow {
    Branch { conditional: bool },
    Call,
    Other,
}

fn classify(isa: Isa, d: &Decoded) -> Flow {
    let m = d.mnemonic.as_str();
    match isa {
        Isa::X86 => match m {
            "call" | "callq" => Flow::Call,
            "jmp" | "jmpq" => Flow::Branch { conditional: false },
            "loop" | "loope" | "loopne" | "loopz" | "loopnz" => Flow::Branch { conditional: true },
            _ if m.starts_with('j') => Flow::Branch { conditional: true },
            _ => Flow::Other,
        },
        Isa::Arm => {
            let m = m.trim_end_matches(".w").trim_end_matches(".n");
            if matches!(m, "bl" | "blx" | "blr") {
                return Flow::Call;
            }
            if m == "b" {
                return Flow::Branch { conditional: false };
            }
            if matches!(m, "cbz" | "cbnz" | "tbz" | "tbnz") {
                return Flow::Branch { conditional: true };
            }
            if let Some(cond) = m.strip_prefix("b.") {
                if ARM_CONDS.contains(&cond) {
                    return Flow::Branch { conditional: cond != "al" };
                }
            }
            if let Some(cond) = m.strip_prefix('b') {
                if ARM_CONDS.contains(&cond) {
                    return Flow::Branch { conditional: cond != "al" };
                }
            }
            for prefix in ["blx", "bl"] {
                if let Some(cond) = m.strip_prefix(prefix) {
                    if ARM_CONDS.contains(&cond) {
                        return Flow::Call;
                    }
                }
            }
            Flow::Other
        }
        Isa::Mips => match m {
            "jal" | "jalr" | "bal" | "bgezal" | "bltzal" | "jalx" => Flow::Call,
            "j" | "b" => Flow::Branch { conditional: false },
            "jr" | "break" => Flow::Other,
            _ if m.starts_with('b') => Flow::Branch { conditional: true },
            _ => Flow::Other,
        },
    }
}

fn is_syscall(isa: Isa, d: &Decoded) -> bool {
    match isa {
        Isa::X86 => matches!(d.mnemonic.as_str(), "syscall" | "sysenter" | "int"),
        Isa::Arm => matches!(d.mnemonic.as_str(), "svc" | "swi"),
        Isa::Mips => d.mnemonic == "syscall",
    }
}

fn words(s: &str) -> impl Iterator<Item = &str> {
    s.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '$'))
        .filter(|w| !w.is_empty())
}

fn is_x86_gpr(w: &str) -> bool {
    const NAMED: &[&str] = &[
        "rax", "rbx", "rcx", "rdx", "rsi", "rdi", "rbp", "rsp", "eax", "ebx", "ecx", "edx", "esi", "edi", "ebp",
        "esp",
    ];
    let w = w.to_ascii_lowercase();
    if NAMED.contains(&w.as_str()) {
        return true;
    }
    let Some(num) = w.strip_prefix('r') else { return false };
    let num = num.trim_end_matches(['d', 'w', 'b']);
    matches!(num.parse::<u8>(), Ok(8..=15))
}

fn is_arm_gpr(w: &str) -> bool {
    let w = w.to_ascii_lowercase();
    if matches!(w.as_str(), "sp" | "lr" | "pc" | "ip" | "fp" | "sb" | "sl") {
        return true;
    }
    ["r", "x", "w"].iter().any(|p| {
        w.strip_prefix(p)
            .is_some_and(|n| !n.is_empty() && n.chars().all(|c| c.is_ascii_digit()))
    })
}

/// Text between the outermost brackets, if the operand is a memory reference.
fn memory_part(op: &str) -> Option<&str> {
    let start = op.find('[')?;
    let end = op.rfind(']')?;
    (end > start).then(|| &op[start + 1..end])
}

fn is_indexed(isa: Isa, d: &Decoded) -> bool {
    match isa {
        Isa::X86 => d.operands.iter().filter_map(|op| memory_part(op)).any(|mem| {
            mem.contains('*') || words(mem).filter(|w| is_x86_gpr(w)).count() >= 2
        }),
        Isa::Arm => d
            .operands
            .iter()
            .filter_map(|op| memory_part(op))
            .any(|mem| words(mem).filter(|w| is_arm_gpr(w)).count() >= 2),
        Isa::Mips => matches!(
            d.mnemonic.as_str(),
            "lwx" | "lhx" | "lbux" | "ldx" | "lwxc1" | "ldxc1" | "swxc1" | "sdxc1" | "luxc1" | "suxc1"
        ),
    }
}

fn numbered(w: &str, prefix: &str) -> bool {
    w.strip_prefix(prefix)
        .is_some_and(|n| !n.is_empty() && n.chars().all(|c| c.is_ascii_digit()))
}

fn is_simd(isa: Isa, d: &Decoded) -> bool {
    let ops = d.operands.join(",").to_ascii_lowercase();
    match isa {
        Isa::X86 => words(&ops).any(|w| ["xmm", "ymm", "zmm", "mm"].iter().any(|p| numbered(w, p))),
        Isa::Arm => {
            d.mnemonic.starts_with("vld")
                || d.mnemonic.starts_with("vst")
                || words(&ops).any(|w| numbered(w, "q"))
                || ops
                    .split(|c: char| !(c.is_ascii_alphanumeric() || c == '.'))
                    .any(|w| w.split_once('.').is_some_and(|(reg, _)| numbered(reg, "v")))
        }
        Isa::Mips => words(&ops).any(|w| numbered(w, "$w")),
    }
}

/// Parses an integer literal as written in an operand.
fn literal_value(isa: Isa, op: &str) -> Option<String> {
    let t = op.trim();
    let t = match isa {
        Isa::Arm => t.strip_prefix('#').or_else(|| t.strip_prefix('=')).unwrap_or(t),
        _ => t,
    };
    if t.is_empty() {
        return None;
    }
    hex_digits(t)
}

/// Immediate operands, normalized to 64-bit hex digits.
fn immediates(isa: Isa, d: &Decoded, flow: Flow) -> Vec<String> {
    if matches!(flow, Flow::Branch { .. } | Flow::Call) {
        // Branch and call operands are targets, except compare-and-branch
        // operands on MIPS (`beq $a0, 3, loc`) which are rare; ignore them.
        return Vec::new();
    }
    let mut out = Vec::new();
    for op in &d.operands {
        if op.contains('[') || op.contains('(') {
            continue;
        }
        match isa {
            Isa::Arm if !(op.starts_with('#') || op.starts_with('=')) => continue,
            _ => {}
        }
        if let Some(v) = literal_value(isa, op) {
            out.push(v);
        }
    }
    out
}

fn is_stack_adjust(isa: Isa, d: &Decoded) -> bool {
    let Some(dst) = d.operands.first() else { return false };
    let dst = dst.to_ascii_lowercase();
    let arith = matches!(
        d.mnemonic.as_str(),
        "add" | "sub" | "addiu" | "daddiu" | "addi" | "and" | "adds" | "subs" | "addq" | "subq"
    );
    arith
        && match isa {
            Isa::X86 => dst == "rsp" || dst == "esp",
            Isa::Arm => dst == "sp",
            Isa::Mips => dst == "$sp" || dst == "$29",
        }
}

/// Extracts a branch target position from the last operand.
fn branch_target(isa: Isa, d: &Decoded, addressed: bool, labels: &HashMap<String, usize>) -> Option<u64> {
    let raw = d.operands.last()?;
    let mut t = raw.trim();
    for noise in ["short ", "near ptr ", "far ptr ", "near ", "far "] {
        if let Some(rest) = t.strip_prefix(noise) {
            t = rest.trim();
        }
    }
    if t.contains('[') || t.contains('(') {
        return None;
    }
    if isa == Isa::Arm {
        t = t.strip_prefix('#').unwrap_or(t);
    }
    if !addressed {
        return labels.get(t).map(|&i| i as u64);
    }
    if let Some(hex) = hex_digits(t) {
        return u64::from_str_radix(&hex, 16).ok();
    }
    // IDA-style names such as `loc_401020`.
    let (_, suffix) = t.rsplit_once('_')?;
    if suffix.chars().all(|c| c.is_ascii_hexdigit()) {
        return u64::from_str_radix(suffix, 16).ok();
    }
    None
}

fn call_target(d: &Decoded) -> String {
    let t = d.operands.last().map(String::as_str).unwrap_or("");
    let t = t.trim().to_ascii_lowercase();
    let t = t.trim_start_matches("near ptr ").trim_start_matches("far ptr ");
    t.to_string()
}

struct Line<'a> {
    decoded: Option<Decoded>,
    position: u64,
    raw: &'a Instruction,
}

/// Computes the statically decidable features of a function.
pub fn static_extract(f: &AssemblyFunction) -> StaticAnalysis {
    analyze(&f.arch, &f.instructions)
}

pub fn analyze(arch: &Arch, instructions: &[Instruction]) -> StaticAnalysis {
    let Some(isa) = Isa::of(arch) else {
        return StaticAnalysis {
            features: FeatureSet::default(),
            warnings: vec![format!("no rule table for architecture `{arch}`; no features extracted")],
        };
    };
    let lines = decode_all(isa, instructions);
    let addressed = !instructions.is_empty() && instructions.iter().all(|i| i.address.is_some());
    let labels: HashMap<String, usize> = instructions
        .iter()
        .enumerate()
        .filter_map(|(i, ins)| label_of(&ins.text).map(|l| (l.to_string(), i)))
        .collect();

    let mut has_loop = false;
    let mut calls = BTreeSet::new();
    let mut syscalls = 0u64;
    let mut all_imms = BTreeSet::new();
    let mut notable = BTreeSet::new();
    let mut indexed = false;
    let mut simd = false;

    for line in &lines {
        let Some(d) = &line.decoded else { continue };
        let flow = classify(isa, d);
        match flow {
            Flow::Branch { .. } => {
                if isa == Isa::X86 && d.mnemonic.starts_with("loop") {
                    has_loop = true;
                }
                if let Some(target) = branch_target(isa, d, addressed, &labels) {
                    if target <= line.position {
                        has_loop = true;
                    }
                }
            }
            Flow::Call => {
                calls.insert(call_target(d));
            }
            Flow::Other => {}
        }
        if is_syscall(isa, d) {
            syscalls += 1;
        }
        indexed |= is_indexed(isa, d);
        simd |= is_simd(isa, d);
        let stack_adjust = is_stack_adjust(isa, d);
        for hex in immediates(isa, d, flow) {
            all_imms.insert(hex.clone());
            if !stack_adjust && !is_trivial(&hex) {
                notable.insert(format!("0x{hex}"));
            }
        }
    }

    let features = FeatureSet {
        r#loop: Some(has_loop),
        subcall_targets: Some(calls.len() as u64),
        interrupts_syscalls: Some(syscalls),
        int_consts: Some(cap_constants(notable)),
        imm_values_cnt: Some(all_imms.len() as u64),
        indexed_addr: Some(indexed),
        simd: Some(simd),
        ..FeatureSet::default()
    };
    StaticAnalysis {
        features,
        warnings: Vec::new(),
    }
}

fn decode_all(isa: Isa, instructions: &[Instruction]) -> Vec<Line<'_>> {
    instructions
        .iter()
        .enumerate()
        .map(|(i, ins)| Line {
            decoded: if label_of(&ins.text).is_some() {
                None
            } else {
                decode(isa, &ins.text)
            },
            position: ins.address.unwrap_or(i as u64),
            raw: ins,
        })
        .collect()
}

fn is_trivial(hex: &str) -> bool {
    matches!(hex, "0" | "1" | "ff" | "ffff" | "ffffffff" | "ffffffffffffffff")
}

/// Keeps the [`MAX_INT_CONSTS`] widest constants; ties go to the
/// lexicographically smaller string.
fn cap_constants(consts: BTreeSet<String>) -> BTreeSet<String> {
    if consts.len() <= MAX_INT_CONSTS {
        return consts;
    }
    let mut ranked: Vec<String> = consts.into_iter().collect();
    ranked.sort_by(|a, b| bit_length(b).cmp(&bit_length(a)).then_with(|| a.cmp(b)));
    ranked.truncate(MAX_INT_CONSTS);
    ranked.into_iter().collect()
}

/// Bit length of a `0x`-prefixed lowercase hex constant.
pub(crate) fn bit_length(hex: &str) -> u32 {
    let digits = hex.trim_start_matches("0x").trim_start_matches('0');
    match digits.chars().next().and_then(|c| c.to_digit(16)) {
        Some(lead) => 4 * (digits.len() as u32 - 1) + (32 - lead.leading_zeros()),
        None => 0,
    }
}

/// Guesses the instruction set from register and immediate syntax.
pub fn guess_arch(instructions: &[Instruction]) -> Arch {
    let text: String = instructions.iter().map(|i| i.text.to_ascii_lowercase() + "\n").collect();
    if text.contains('$') {
        Arch::Mips
    } else if text.contains('#')
        || words(&text).any(|w| numbered(w, "r") && !is_x86_gpr(w))
        || text.contains("{")
    {
        Arch::Arm
    } else {
        Arch::X86_64
    }
}

const ALLOC_NAMES: &[&str] = &["malloc", "calloc", "realloc", "free", "_znwm", "_znam", "_zdlpv", "mmap", "munmap"];
const IO_NAMES: &[&str] = &[
    "printf", "fprintf", "puts", "fputs", "putchar", "write", "read", "fopen", "fclose", "fread", "fwrite", "send",
    "recv", "open", "close", "fgets", "scanf", "perror",
];
const BLOCK_NAMES: &[&str] = &["memcpy", "memmove", "memset", "bzero", "strcpy", "strncpy", "memcmp"];

fn callee_matches(target: &str, names: &[&str]) -> bool {
    let t = target.trim_start_matches('_').trim_start_matches('.');
    let t = t.split(['@', '+']).next().unwrap_or(t);
    let t = t.trim_start_matches("j_").trim_start_matches("__imp_");
    names.iter().any(|n| t == *n || t.ends_with(&format!("_{n}")))
}

struct Registers {
    args: &'static [&'static [&'static str]],
    ret: &'static [&'static str],
}

fn registers(isa: Isa) -> Registers {
    match isa {
        Isa::X86 => Registers {
            args: &[
                &["rdi", "edi", "di", "dil"],
                &["rsi", "esi", "si", "sil"],
                &["rdx", "edx", "dx", "dl"],
                &["rcx", "ecx", "cx", "cl"],
                &["r8", "r8d", "r8w", "r8b"],
                &["r9", "r9d", "r9w", "r9b"],
            ],
            ret: &["rax", "eax", "ax", "al"],
        },
        Isa::Arm => Registers {
            args: &[&["r0", "x0", "w0"], &["r1", "x1", "w1"], &["r2", "x2", "w2"], &["r3", "x3", "w3"]],
            ret: &["r0", "x0", "w0"],
        },
        Isa::Mips => Registers {
            args: &[&["$a0"], &["$a1"], &["$a2"], &["$a3"]],
            ret: &["$v0"],
        },
    }
}

fn mentions(op: &str, names: &[&str]) -> bool {
    words(&op.to_ascii_lowercase()).any(|w| names.contains(&w))
}

/// First operand is written for these mnemonics (Intel / ARM / MIPS order).
fn writes_first_operand(isa: Isa, mnemonic: &str) -> bool {
    match isa {
        Isa::X86 => !matches!(mnemonic, "cmp" | "test" | "push" | "call" | "jmp" | "bt") && !mnemonic.starts_with('j'),
        Isa::Arm => !(mnemonic.starts_with("str")
            || mnemonic.starts_with("cmp")
            || mnemonic.starts_with("cmn")
            || mnemonic.starts_with("tst")
            || mnemonic.starts_with("push")
            || mnemonic.starts_with('b')),
        Isa::Mips => !(mnemonic.starts_with('s') && !mnemonic.starts_with("sl") && !mnemonic.starts_with("sr") && !mnemonic.starts_with("su")
            || mnemonic.starts_with('b')
            || mnemonic.starts_with('j')),
    }
}

fn is_store(isa: Isa, d: &Decoded) -> Option<String> {
    match isa {
        Isa::X86 => {
            let dst = d.operands.first()?;
            (memory_part(dst).is_some() && writes_first_operand(isa, &d.mnemonic)).then(|| dst.clone())
        }
        Isa::Arm => (d.mnemonic.starts_with("str") || d.mnemonic.starts_with("stm"))
            .then(|| d.operands.get(1).cloned())
            .flatten(),
        Isa::Mips => matches!(d.mnemonic.as_str(), "sw" | "sh" | "sb" | "sd" | "swc1" | "sdc1")
            .then(|| d.operands.get(1).cloned())
            .flatten(),
    }
}

fn category_of(isa: Isa, d: &Decoded, flow: Flow) -> OperationCategory {
    let m = d.mnemonic.as_str();
    match flow {
        Flow::Call => return OperationCategory::SubroutineCall,
        Flow::Branch { .. } => return OperationCategory::ConditionalBranching,
        Flow::Other => {}
    }
    const ARITH: &[&str] = &[
        "add", "sub", "mul", "imul", "div", "idiv", "inc", "dec", "neg", "adc", "sbb", "addiu", "addu", "subu", "mult",
        "multu", "mla", "rsb", "adds", "subs", "lea", "daddiu", "addi", "madd",
    ];
    const BITS: &[&str] = &[
        "and", "or", "xor", "not", "shl", "shr", "sar", "rol", "ror", "eor", "orr", "bic", "lsl", "lsr", "asr", "andi",
        "ori", "xori", "sll", "srl", "sra", "sllv", "srlv", "nor", "mvn", "bt", "bswap", "rev",
    ];
    let base = m.split('.').next().unwrap_or(m);
    if matches!(base, "cmp" | "test" | "tst" | "cmn" | "slt" | "sltu" | "slti" | "sltiu") {
        return OperationCategory::ConditionalBranching;
    }
    if ARITH.contains(&base) {
        return OperationCategory::Arithmetic;
    }
    if BITS.contains(&base) || (isa == Isa::Arm && BITS.iter().any(|b| base.starts_with(b) && base.len() <= b.len() + 2)) {
        return OperationCategory::Bitwise;
    }
    let touches_memory = d.operands.iter().any(|op| memory_part(op).is_some())
        || (isa == Isa::Mips && d.operands.iter().any(|op| op.contains('(')))
        || base.starts_with("ldr")
        || base.starts_with("str")
        || base.starts_with("ldm")
        || base.starts_with("stm");
    if touches_memory {
        OperationCategory::MemoryAccess
    } else {
        OperationCategory::DataMovement
    }
}

/// Fills every schema field: the decidable ones from [`analyze`], the rest
/// from coarse syntactic heuristics. Used by the offline analyzer client.
pub fn heuristic_features(arch: &Arch, instructions: &[Instruction]) -> FeatureSet {
    let isa = Isa::of(arch).unwrap_or(Isa::X86);
    let arch = match Isa::of(arch) {
        Some(_) => arch.clone(),
        None => Arch::X86_64,
    };
    let mut fs = analyze(&arch, instructions).features;
    let lines = decode_all(isa, instructions);
    let regs = registers(isa);

    let mut first_use: Vec<Option<bool>> = vec![None; regs.args.len()];
    let mut deref: Vec<bool> = vec![false; regs.args.len()];
    let mut ret_written = false;
    let mut mutates_inputs = false;
    let mut mutates_globals = false;
    let mut strings = false;
    let mut jump_table = false;
    let mut callees = Vec::new();
    let mut rep_block = false;
    let mut error_handling = false;
    let mut last_call: Option<usize> = None;
    let mut histogram: HashMap<OperationCategory, usize> = HashMap::new();
    let mut total = 0usize;

    for (idx, line) in lines.iter().enumerate() {
        let Some(d) = &line.decoded else { continue };
        total += 1;
        let flow = classify(isa, d);
        *histogram.entry(category_of(isa, d, flow)).or_default() += 1;
        let lower = line.raw.text.to_ascii_lowercase();
        if isa == Isa::X86 && (lower.starts_with("rep") && (lower.contains("movs") || lower.contains("stos"))) {
            rep_block = true;
        }
        let writes = writes_first_operand(isa, &d.mnemonic);
        for (slot, names) in regs.args.iter().enumerate() {
            for (pos, op) in d.operands.iter().enumerate() {
                if !mentions(op, names) {
                    continue;
                }
                if memory_part(op).is_some() || op.contains('(') {
                    deref[slot] = true;
                }
                if first_use[slot].is_none() {
                    let written = pos == 0 && writes && memory_part(op).is_none() && !op.contains('(');
                    // MIPS/ARM loads and moves write their first operand too.
                    first_use[slot] = Some(!written);
                }
            }
        }
        if let Some(op) = d.operands.first() {
            if writes && mentions(op, regs.ret) && memory_part(op).is_none() {
                ret_written = true;
            }
        }
        if let Some(dst) = is_store(isa, d) {
            if regs.args.iter().flat_map(|n| n.iter()).any(|n| mentions(&dst, &[n])) {
                mutates_inputs = true;
            }
            if dst.contains("cs:") || dst.contains("ds:") || dst.contains("dword_") || dst.contains("qword_") {
                mutates_globals = true;
            }
        }
        if lower.contains("offset a") || lower.contains("=a") || words(&line.raw.text).any(|w| {
            w.len() > 1 && w.starts_with('a') && w[1..].starts_with(|c: char| c.is_ascii_uppercase())
        }) {
            strings = true;
        }
        match flow {
            Flow::Call => {
                callees.push(call_target(d));
                last_call = Some(idx);
            }
            Flow::Branch { conditional } => {
                if conditional && last_call.is_some_and(|c| idx - c <= 3) {
                    error_handling = true;
                }
                let target = d.operands.last().map(String::as_str).unwrap_or("");
                if !conditional && (target.contains('*') || (isa == Isa::X86 && memory_part(target).is_some())) {
                    jump_table = true;
                }
            }
            Flow::Other => {
                if matches!(d.mnemonic.as_str(), "tbb" | "tbh")
                    || (isa == Isa::Arm && d.mnemonic.starts_with("ldr") && d.operands.first().is_some_and(|o| o == "pc"))
                    || (isa == Isa::Mips && d.mnemonic == "jr" && d.operands.first().is_some_and(|o| o != "$ra"))
                    || (isa == Isa::X86 && d.mnemonic == "jmp" && d.operands.first().is_some_and(|o| !o.contains("loc_")))
                {
                    jump_table = true;
                }
            }
        }
    }

    let params = first_use.iter().take_while(|u| **u == Some(true)).count();
    let param_types: Vec<ParamType> = (0..params)
        .map(|i| if deref[i] { ParamType::Pointer } else { ParamType::Integer })
        .collect();
    fs.in_param_cnt = Some(params as u64);
    fs.in_param_types = Some(param_types);
    fs.ret_type = Some(if ret_written { ReturnType::Integer } else { ReturnType::None });

    let mut cats: Vec<(OperationCategory, usize)> = histogram.into_iter().collect();
    cats.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let threshold = (total as f64 * 0.2).ceil() as usize;
    let mut dominant: BTreeSet<OperationCategory> =
        cats.iter().filter(|(_, n)| *n >= threshold.max(1)).map(|(c, _)| *c).collect();
    if dominant.is_empty() {
        dominant.insert(cats.first().map(|c| c.0).unwrap_or(OperationCategory::DataMovement));
    }
    fs.dominant_operation_categories = Some(dominant);
    fs.float_consts = Some(BTreeSet::new());
    fs.string_literals = Some(strings);
    fs.jump_table = Some(jump_table);
    fs.mutates_inputs = Some(mutates_inputs);
    fs.mutates_globals = Some(mutates_globals);
    let mem_alloc = callees.iter().any(|c| callee_matches(c, ALLOC_NAMES));
    let io = callees.iter().any(|c| callee_matches(c, IO_NAMES)) || fs.interrupts_syscalls.unwrap_or(0) > 0;
    let block = rep_block || callees.iter().any(|c| callee_matches(c, BLOCK_NAMES));
    fs.mem_alloc = Some(mem_alloc);
    fs.io_ops = Some(io);
    fs.block_mem_ops = Some(block);
    fs.error_handling = Some(error_handling);

    let bitwise_heavy = fs
        .dominant_operation_categories
        .as_ref()
        .is_some_and(|c| c.contains(&OperationCategory::Bitwise));
    let wide_consts = fs
        .int_consts
        .as_ref()
        .is_some_and(|c| c.iter().any(|h| h.len() >= 10));
    fs.inferred_algo = Some(if fs.interrupts_syscalls.unwrap_or(0) > 0 {
        AlgorithmCategory::SystemOsInteraction
    } else if mem_alloc {
        AlgorithmCategory::MemoryManagement
    } else if bitwise_heavy && wide_consts {
        AlgorithmCategory::CryptographicHashing
    } else if jump_table {
        AlgorithmCategory::ControlFlowDispatch
    } else if error_handling {
        AlgorithmCategory::ErrorHandling
    } else if fs.r#loop == Some(true) {
        AlgorithmCategory::DataProcessing
    } else if fs.subcall_targets.unwrap_or(0) >= 1 && total <= 12 {
        AlgorithmCategory::InterfacingWrapper
    } else if total <= 8 {
        AlgorithmCategory::UtilityHelper
    } else {
        AlgorithmCategory::Undetermined
    });
    fs
}
