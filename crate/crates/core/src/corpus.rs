//! Function records ingested from plain-text disassembly listings.
//!
//! A listing is a sequence of function blocks. Each block starts with a
//! `; FUNCTION <symbol>` header; every following non-empty, non-comment line
//! is one instruction, optionally prefixed by a hexadecimal address and a
//! colon (`401000: push rbp`).

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Default instruction cap applied at ingestion.
pub const DEFAULT_MAX_INSTRUCTIONS: usize = 128;
/// Functions shorter than this are dropped at ingestion.
pub const DEFAULT_MIN_INSTRUCTIONS: usize = 3;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid metadata: {0}")]
    Meta(String),
    #[error("pairing configuration: {0}")]
    Config(String),
    #[error("corpus line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("duplicate function id `{0}`")]
    DuplicateId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arch {
    X86_64,
    Arm,
    Mips,
    PowerPc,
    Other(String),
}

impl Arch {
    pub fn as_str(&self) -> &str {
        match self {
            Arch::X86_64 => "x86-64",
            Arch::Arm => "ARM",
            Arch::Mips => "MIPS",
            Arch::PowerPc => "PowerPC",
            Arch::Other(s) => s,
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arch {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        if trimmed.is_empty() {
            return Err(CorpusError::Meta("architecture must not be empty".into()));
        }
        Ok(match trimmed.to_ascii_lowercase().as_str() {
            "x86-64" | "x86_64" | "x64" | "amd64" => Arch::X86_64,
            "arm" | "arm32" => Arch::Arm,
            "mips" | "mips32" | "mipsel" => Arch::Mips,
            "powerpc" | "ppc" => Arch::PowerPc,
            _ => Arch::Other(trimmed.to_string()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OptLevel {
    O0,
    O1,
    O2,
    O3,
    Unknown,
}

impl OptLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            OptLevel::O0 => "O0",
            OptLevel::O1 => "O1",
            OptLevel::O2 => "O2",
            OptLevel::O3 => "O3",
            OptLevel::Unknown => "unknown",
        }
    }
}

impl fmt::Display for OptLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptLevel {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().trim_start_matches('-') {
            "o0" | "0" => Ok(OptLevel::O0),
            "o1" | "1" => Ok(OptLevel::O1),
            "o2" | "2" => Ok(OptLevel::O2),
            "o3" | "3" => Ok(OptLevel::O3),
            "unknown" | "?" => Ok(OptLevel::Unknown),
            other => Err(CorpusError::Meta(format!("unknown optimization level `{other}`"))),
        }
    }
}

macro_rules! serde_via_str {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(d)?;
                raw.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

serde_via_str!(Arch);
serde_via_str!(OptLevel);

/// One instruction line. The address is kept when the listing carried one.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub address: Option<u64>,
    pub text: String,
}

impl Instruction {
    pub fn new(text: impl Into<String>) -> Self {
        Instruction {
            address: None,
            text: text.into(),
        }
    }

    pub fn at(address: u64, text: impl Into<String>) -> Self {
        Instruction {
            address: Some(address),
            text: text.into(),
        }
    }

    /// Parses `[<hex>:] <text>`.
    pub fn parse(line: &str) -> Self {
        let line = line.trim();
        if let Some((head, rest)) = line.split_once(':') {
            let digits = head.trim_start_matches("0x").trim_start_matches("0X");
            let is_addr = !digits.is_empty()
                && head == head.trim()
                && digits.chars().all(|c| c.is_ascii_hexdigit())
                && rest.starts_with(char::is_whitespace);
            if is_addr {
                if let Ok(address) = u64::from_str_radix(digits, 16) {
                    return Instruction::at(address, rest.trim());
                }
            }
        }
        Instruction::new(line)
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.address {
            Some(addr) => write!(f, "{addr:x}: {}", self.text),
            None => f.write_str(&self.text),
        }
    }
}

impl Serialize for Instruction {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Instruction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Ok(Instruction::parse(&raw))
    }
}

/// Provenance shared by every function of one listing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListingMeta {
    pub library: String,
    pub arch: Arch,
    pub opt_level: OptLevel,
}

impl ListingMeta {
    pub fn new(library: impl Into<String>, arch: Arch, opt_level: OptLevel) -> Self {
        ListingMeta {
            library: library.into(),
            arch,
            opt_level,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblyFunction {
    pub id: String,
    pub library: String,
    pub source_symbol: String,
    pub arch: Arch,
    pub opt_level: OptLevel,
    pub instructions: Vec<Instruction>,
    #[serde(default)]
    pub truncated: bool,
}

impl AssemblyFunction {
    /// Default identifier: `library/arch/opt/symbol`.
    pub fn make_id(library: &str, arch: &Arch, opt: OptLevel, symbol: &str) -> String {
        format!("{library}/{arch}/{opt}/{symbol}")
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Listing-format rendering of the body, one instruction per line.
    pub fn body_text(&self) -> String {
        let mut out = String::new();
        for ins in &self.instructions {
            out.push_str(&ins.to_string());
            out.push('\n');
        }
        out
    }

    fn pairing_key(&self) -> (&str, &str) {
        (&self.library, &self.source_symbol)
    }
}

const HEADER_TAG: &str = "FUNCTION";

/// Splits a listing into function records, in file order.
pub fn parse_listing(text: &str, meta: &ListingMeta) -> Result<Vec<AssemblyFunction>, CorpusError> {
    if meta.library.trim().is_empty() {
        return Err(CorpusError::Meta("library must not be empty".into()));
    }

    let mut out: Vec<AssemblyFunction> = Vec::new();
    let mut seen = HashSet::new();
    let mut current: Option<(usize, AssemblyFunction)> = None;

    let finish = |cur: Option<(usize, AssemblyFunction)>,
                  out: &mut Vec<AssemblyFunction>|
     -> Result<(), CorpusError> {
        if let Some((line, f)) = cur {
            if f.instructions.is_empty() {
                return Err(CorpusError::Parse {
                    line,
                    message: format!("function `{}` has no instructions", f.source_symbol),
                });
            }
            out.push(f);
        }
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix(';') {
            let comment = comment.trim_start();
            let Some(rest) = comment.strip_prefix(HEADER_TAG) else {
                continue;
            };
            if !(rest.is_empty() || rest.starts_with(char::is_whitespace)) {
                // e.g. `; FUNCTIONS follow` is an ordinary comment
                continue;
            }
            let symbol = rest.trim();
            if symbol.is_empty() || symbol.contains(char::is_whitespace) {
                return Err(CorpusError::Parse {
                    line: lineno,
                    message: format!("malformed function header `{line}`"),
                });
            }
            finish(current.take(), &mut out)?;
            if !seen.insert(symbol.to_string()) {
                return Err(CorpusError::Parse {
                    line: lineno,
                    message: format!("duplicate function `{symbol}` in listing"),
                });
            }
            current = Some((
                lineno,
                AssemblyFunction {
                    id: AssemblyFunction::make_id(&meta.library, &meta.arch, meta.opt_level, symbol),
                    library: meta.library.clone(),
                    source_symbol: symbol.to_string(),
                    arch: meta.arch.clone(),
                    opt_level: meta.opt_level,
                    instructions: Vec::new(),
                    truncated: false,
                },
            ));
            continue;
        }
        match current.as_mut() {
            Some((_, f)) => f.instructions.push(Instruction::parse(line)),
            None => {
                return Err(CorpusError::Parse {
                    line: lineno,
                    message: "instruction outside of a `; FUNCTION <name>` block".into(),
                })
            }
        }
    }
    finish(current, &mut out)?;
    Ok(out)
}

/// Keeps functions with at least `min_instructions` instructions.
pub fn filter_short(fns: Vec<AssemblyFunction>, min_instructions: usize) -> Vec<AssemblyFunction> {
    fns.into_iter()
        .filter(|f| f.instructions.len() >= min_instructions)
        .collect()
}

/// Retains the first `max_instructions` lines and flags the record when
/// anything was cut.
pub fn truncate(mut f: AssemblyFunction, max_instructions: usize) -> AssemblyFunction {
    let max = max_instructions.max(1);
    if f.instructions.len() > max {
        f.instructions.truncate(max);
        f.truncated = true;
    }
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    CrossOptimization,
    CrossArchitecture,
}

impl FromStr for Pairing {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "cross_optimization" | "xopt" | "x_opt" => Ok(Pairing::CrossOptimization),
            "cross_architecture" | "xarch" | "x_arch" => Ok(Pairing::CrossArchitecture),
            other => Err(CorpusError::Config(format!("unknown pairing `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionPair {
    pub left: String,
    pub right: String,
    pub pairing: Pairing,
}

fn single_value<'a, T: PartialEq + fmt::Debug>(
    side: &str,
    what: &str,
    mut items: impl Iterator<Item = &'a T>,
) -> Result<Option<&'a T>, CorpusError>
where
    T: 'a,
{
    let Some(first) = items.next() else {
        return Ok(None);
    };
    if let Some(other) = items.find(|v| *v != first) {
        return Err(CorpusError::Config(format!(
            "corpus {side} mixes {what} values {first:?} and {other:?}"
        )));
    }
    Ok(Some(first))
}

/// Pairs functions that share `(library, source_symbol)` across two corpora.
///
/// Each corpus must be homogeneous in the dimension held fixed by the pairing
/// and the two corpora must differ in the varied one.
pub fn build_pairs(
    a: &[AssemblyFunction],
    b: &[AssemblyFunction],
    pairing: Pairing,
) -> Result<Vec<FunctionPair>, CorpusError> {
    let arch_a = single_value("a", "architecture", a.iter().map(|f| &f.arch))?;
    let arch_b = single_value("b", "architecture", b.iter().map(|f| &f.arch))?;
    let opt_a = single_value("a", "optimization level", a.iter().map(|f| &f.opt_level))?;
    let opt_b = single_value("b", "optimization level", b.iter().map(|f| &f.opt_level))?;

    if let (Some(arch_a), Some(arch_b), Some(opt_a), Some(opt_b)) = (arch_a, arch_b, opt_a, opt_b) {
        match pairing {
            Pairing::CrossOptimization if arch_a != arch_b || opt_a == opt_b => {
                return Err(CorpusError::Config(format!(
                    "cross_optimization needs equal architectures and different levels, got {arch_a}/{opt_a} vs {arch_b}/{opt_b}"
                )));
            }
            Pairing::CrossArchitecture if opt_a != opt_b || arch_a == arch_b => {
                return Err(CorpusError::Config(format!(
                    "cross_architecture needs equal levels and different architectures, got {arch_a}/{opt_a} vs {arch_b}/{opt_b}"
                )));
            }
            _ => {}
        }
    }

    let right: BTreeMap<(&str, &str), &AssemblyFunction> =
        b.iter().map(|f| (f.pairing_key(), f)).collect();
    let mut left: BTreeMap<(&str, &str), &AssemblyFunction> = BTreeMap::new();
    for f in a {
        left.insert(f.pairing_key(), f);
    }

    Ok(left
        .into_iter()
        .filter_map(|(key, l)| {
            right.get(&key).map(|r| FunctionPair {
                left: l.id.clone(),
                right: r.id.clone(),
                pairing,
            })
        })
        .collect())
}

/// Checks the per-corpus uniqueness invariants.
pub fn check_corpus(fns: &[AssemblyFunction]) -> Result<(), CorpusError> {
    let mut ids = HashSet::new();
    let mut keys = HashSet::new();
    for f in fns {
        if f.instructions.is_empty() {
            return Err(CorpusError::Meta(format!("function `{}` is empty", f.id)));
        }
        if !ids.insert(f.id.as_str()) {
            return Err(CorpusError::DuplicateId(f.id.clone()));
        }
        if !keys.insert((&f.library, &f.source_symbol, &f.arch, f.opt_level)) {
            return Err(CorpusError::Meta(format!(
                "({}, {}, {}, {}) occurs twice",
                f.library, f.source_symbol, f.arch, f.opt_level
            )));
        }
    }
    Ok(())
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>, CorpusError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|source| CorpusError::Json {
            line: idx + 1,
            source,
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(mut writer: impl Write, items: &[T]) -> Result<(), CorpusError> {
    for item in items {
        serde_json::to_writer(&mut writer, item).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_corpus(reader: impl BufRead) -> Result<Vec<AssemblyFunction>, CorpusError> {
    let fns: Vec<AssemblyFunction> = read_jsonl(reader)?;
    check_corpus(&fns)?;
    Ok(fns)
}
