use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::ExtractionError;
use crate::corpus::{Arch, AssemblyFunction, Instruction};
use crate::schema::{validate, Field, FeatureSet, Section, SCHEMA_REFERENCE};

pub const SYSTEM_PREAMBLE: &str = include_str!("../../assets/prompt/system.txt");

pub const MAX_EXAMPLES: usize = 4;
pub const DEFAULT_EXAMPLES: usize = 3;

fn section_text(section: Section) -> &'static str {
    match section {
        Section::TypeSignature => include_str!("../../assets/prompt/sections/type_signature.txt"),
        Section::LogicOperations => include_str!("../../assets/prompt/sections/logic_operations.txt"),
        Section::NotableConstants => include_str!("../../assets/prompt/sections/notable_constants.txt"),
        Section::SideEffects => include_str!("../../assets/prompt/sections/side_effects.txt"),
        Section::Categorization => include_str!("../../assets/prompt/sections/categorization.txt"),
    }
}

const BUNDLED_EXAMPLES: [(&str, &str, &str); 4] = [
    (
        "01_checksum",
        include_str!("../../assets/prompt/examples/01_checksum.asm"),
        include_str!("../../assets/prompt/examples/01_checksum.json"),
    ),
    (
        "02_crc_table",
        include_str!("../../assets/prompt/examples/02_crc_table.asm"),
        include_str!("../../assets/prompt/examples/02_crc_table.json"),
    ),
    (
        "03_alloc_zeroed",
        include_str!("../../assets/prompt/examples/03_alloc_zeroed.asm"),
        include_str!("../../assets/prompt/examples/03_alloc_zeroed.json"),
    ),
    (
        "04_write_all",
        include_str!("../../assets/prompt/examples/04_write_all.asm"),
        include_str!("../../assets/prompt/examples/04_write_all.json"),
    ),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    pub sections: BTreeSet<Section>,
    pub num_examples: usize,
    pub include_schema_in_prompt: bool,
    pub system_prompt_enabled: bool,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            sections: Section::ALL.iter().copied().collect(),
            num_examples: DEFAULT_EXAMPLES,
            include_schema_in_prompt: false,
            system_prompt_enabled: true,
        }
    }
}

impl PromptConfig {
    pub fn check(&self) -> Result<(), ExtractionError> {
        if self.sections.is_empty() {
            return Err(ExtractionError::Config("at least one prompt section must be enabled".into()));
        }
        if self.num_examples > MAX_EXAMPLES {
            return Err(ExtractionError::Config(format!(
                "num_examples must be within 0..={MAX_EXAMPLES}, got {}",
                self.num_examples
            )));
        }
        Ok(())
    }

    /// Requested fields in canonical order.
    pub fn requested_fields(&self) -> Vec<Field> {
        Field::ALL
            .iter()
            .copied()
            .filter(|f| self.sections.contains(&f.section()))
            .collect()
    }

    /// Short label such as `ex3+sys-schema-TypeSignature`.
    pub fn label(&self) -> String {
        let mut s = format!("ex{}", self.num_examples);
        s.push_str(if self.system_prompt_enabled { "+sys" } else { "-sys" });
        s.push_str(if self.include_schema_in_prompt { "+schema" } else { "-schema" });
        for missing in Section::ALL.iter().filter(|s| !self.sections.contains(s)) {
            let _ = write!(s, "-{missing}");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub name: String,
    pub arch: Arch,
    pub instructions: Vec<Instruction>,
    pub features: FeatureSet,
}

/// Worked (assembly, feature document) pairs in presentation order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleBank {
    examples: Vec<Example>,
}

impl ExampleBank {
    /// The four examples shipped under `assets/prompt/examples`.
    pub fn bundled() -> Self {
        let examples = BUNDLED_EXAMPLES
            .iter()
            .map(|(name, asm, json)| parse_example(name, asm, json).expect("bundled example is valid"))
            .collect();
        ExampleBank { examples }
    }

    pub fn new(examples: Vec<Example>) -> Self {
        ExampleBank { examples }
    }

    /// Loads `<name>.asm` / `<name>.json` pairs from a directory, sorted by name.
    pub fn from_dir(dir: &Path) -> Result<Self, ExtractionError> {
        let mut names: Vec<String> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let p = e.path();
                (p.extension()? == "asm").then(|| p.file_stem()?.to_str().map(str::to_string))?
            })
            .collect();
        names.sort();
        let mut examples = Vec::with_capacity(names.len());
        for name in names {
            let asm = std::fs::read_to_string(dir.join(format!("{name}.asm")))?;
            let json = std::fs::read_to_string(dir.join(format!("{name}.json")))?;
            examples.push(parse_example(&name, &asm, &json)?);
        }
        Ok(ExampleBank { examples })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }
}

/// The first line may be `; <arch>`; other `;` lines are ignored.
fn parse_example(name: &str, asm: &str, json: &str) -> Result<Example, ExtractionError> {
    let mut arch = Arch::X86_64;
    let mut instructions = Vec::new();
    for (i, line) in asm.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(comment) = t.strip_prefix(';') {
            if i == 0 {
                arch = comment.trim().parse().unwrap_or(Arch::X86_64);
            }
            continue;
        }
        instructions.push(Instruction::parse(t));
    }
    let doc: Value = serde_json::from_str(json)
        .map_err(|e| ExtractionError::Config(format!("example {name}: malformed JSON: {e}")))?;
    let features = validate(&doc).map_err(|e| ExtractionError::Config(format!("example {name}: {e}")))?;
    Ok(Example {
        name: name.to_string(),
        arch,
        instructions,
        features,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

/// Document restricted to `fields`, compact JSON in canonical order.
fn restricted_json(fs: &FeatureSet, fields: &[Field]) -> String {
    let obj: Map<String, Value> = fields
        .iter()
        .filter_map(|f| fs.get(*f).map(|v| (f.name().to_string(), v.to_json())))
        .collect();
    Value::Object(obj).to_string()
}

/// The schema reference limited to the requested properties.
fn restricted_schema(fields: &[Field]) -> String {
    let mut schema: Value = serde_json::from_str(SCHEMA_REFERENCE).expect("bundled schema is JSON");
    let keep: BTreeSet<&str> = fields.iter().map(|f| f.name()).collect();
    if let Some(props) = schema.get_mut("properties").and_then(Value::as_object_mut) {
        props.retain(|k, _| keep.contains(k.as_str()));
    }
    if let Some(req) = schema.get_mut("required").and_then(Value::as_array_mut) {
        req.retain(|k| k.as_str().is_some_and(|k| keep.contains(k)));
    }
    serde_json::to_string_pretty(&schema).expect("serializable")
}

fn asm_block(out: &mut String, arch: &Arch, instructions: &[Instruction]) {
    let _ = writeln!(out, "```asm\n; {arch}");
    for ins in instructions {
        let _ = writeln!(out, "{ins}");
    }
    out.push_str("```\n");
}

pub fn build_prompt(f: &AssemblyFunction, cfg: &PromptConfig, bank: &ExampleBank) -> Result<Prompt, ExtractionError> {
    cfg.check()?;
    if cfg.num_examples > bank.len() {
        return Err(ExtractionError::Config(format!(
            "{} examples requested but the example bank holds {}",
            cfg.num_examples,
            bank.len()
        )));
    }
    let fields = cfg.requested_fields();

    let mut system = String::new();
    if cfg.system_prompt_enabled {
        system.push_str(SYSTEM_PREAMBLE.trim_end());
        for section in &cfg.sections {
            system.push_str("\n\n");
            system.push_str(section_text(*section).trim_end());
        }
    }
    if cfg.include_schema_in_prompt {
        if !system.is_empty() {
            system.push_str("\n\n");
        }
        system.push_str("The reply must follow this JSON schema:\n");
        system.push_str(&restricted_schema(&fields));
    }

    let mut user = String::new();
    for (i, ex) in bank.examples().iter().take(cfg.num_examples).enumerate() {
        let _ = writeln!(user, "Example {}:", i + 1);
        asm_block(&mut user, &ex.arch, &ex.instructions);
        user.push_str(&restricted_json(&ex.features, &fields));
        user.push_str("\n\n");
    }
    let names: Vec<&str> = fields.iter().map(|f| f.name()).collect();
    let _ = writeln!(user, "Report these fields: {}", names.join(", "));
    user.push_str("Function:\n");
    asm_block(&mut user, &f.arch, &f.instructions);
    Ok(Prompt { system, user })
}
