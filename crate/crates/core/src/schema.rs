//! The interpretable feature document: typed representation, validation of
//! model output, canonical serialization and field-level diffing.
//!
//! Every core field is optional in [`FeatureSet`] so that partial documents
//! (static analysis, prompts with sections disabled) share one type. A
//! document validated with [`validate`] has every core field present.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde_json::{Map, Value};
use thiserror::Error;

/// Upper bound on `int_consts` entries.
pub const MAX_INT_CONSTS: usize = 15;

/// JSON-schema style reference for the document, shipped with the prompt
/// assets and optionally embedded in prompts.
pub const SCHEMA_REFERENCE: &str = include_str!("../assets/prompt/schema.json");

const TRIVIAL_INT_CONSTS: [&str; 6] = [
    "0x0",
    "0x1",
    "0xff",
    "0xffff",
    "0xffffffff",
    "0xffffffffffffffff",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("feature document must be a JSON object")]
    NotAnObject,
    #[error("missing required field `{0}`")]
    Missing(&'static str),
    #[error("field `{field}`: expected {expected}")]
    Type { field: &'static str, expected: &'static str },
    #[error("field `{field}`: {message}")]
    Value { field: &'static str, message: String },
}

fn value_err(field: Field, message: impl Into<String>) -> SchemaError {
    SchemaError::Value {
        field: field.name(),
        message: message.into(),
    }
}

fn type_err(field: Field, expected: &'static str) -> SchemaError {
    SchemaError::Type {
        field: field.name(),
        expected,
    }
}

/// Letters and digits only, lowercased. Used for tolerant enum matching.
fn squash(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

macro_rules! closed_enum {
    (
        $(#[$meta:meta])*
        $name:ident { $($variant:ident => $canon:literal $(| $alias:literal)*),+ $(,)? }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $canon),+
                }
            }

            fn from_loose(raw: &str) -> Option<Self> {
                let key = squash(raw);
                $(
                    if key == squash($canon) $(|| key == $alias)* {
                        return Some($name::$variant);
                    }
                )+
                None
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                $name::from_loose(s).ok_or_else(|| format!("`{s}` is not a valid {}", stringify!($name)))
            }
        }

        impl serde::Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> serde::Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(d)?;
                raw.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

closed_enum!(ParamType {
    Integer => "Integer" | "int" | "scalar",
    Pointer => "Pointer" | "ptr" | "address",
});

closed_enum!(ReturnType {
    Integer => "Integer" | "int" | "scalar",
    Pointer => "Pointer" | "ptr" | "address",
    Float => "Float" | "double" | "floatingpoint",
    None => "None" | "void" | "null" | "none",
});

closed_enum!(
    /// Coarse classes of what a function's instructions mostly do. Ordering
    /// follows declaration order and is the canonical array order.
    OperationCategory {
        Arithmetic => "Arithmetic",
        Bitwise => "Bitwise" | "logical" | "bitwiselogic",
        DataMovement => "DataMovement" | "datamove" | "move",
        ConditionalBranching => "ConditionalBranching" | "branching" | "controlflow",
        SubroutineCall => "SubroutineCall" | "subroutinecalls" | "call" | "calls",
        MemoryAccess => "MemoryAccess" | "memory",
    }
);

closed_enum!(
    /// High-level purpose label. Accepts the prose spellings
    /// ("data processing or transformation", "control-flow or dispatch", ...).
    AlgorithmCategory {
        SystemOsInteraction => "SystemOsInteraction" | "systeminteraction" | "osinteraction" | "system",
        MemoryManagement => "MemoryManagement",
        DataProcessing => "DataProcessing" | "dataprocessingortransformation" | "datatransformation" | "dataprocessingtransformation",
        ControlFlowDispatch => "ControlFlowDispatch" | "controlflowordispatch" | "dispatch" | "dispatcher",
        Initialization => "Initialization" | "initialisation" | "init",
        ErrorHandling => "ErrorHandling",
        UtilityHelper => "UtilityHelper" | "utility" | "helper" | "utilityorhelper",
        CryptographicHashing => "CryptographicHashing" | "cryptographicorhashing" | "cryptographic" | "cryptography" | "crypto" | "hashing",
        InterfacingWrapper => "InterfacingWrapper" | "interfacing" | "wrapper" | "interfacingorwrapper",
        Undetermined => "Undetermined" | "unknown" | "undefined",
    }
);

closed_enum!(
    /// The five groups of features a prompt can request.
    Section {
        TypeSignature => "TypeSignature" | "signature" | "types",
        LogicOperations => "LogicOperations" | "logic" | "logicandoperations" | "operations",
        NotableConstants => "NotableConstants" | "constants",
        SideEffects => "SideEffects" | "effects",
        Categorization => "Categorization" | "category" | "categorisation",
    }
);

impl Section {
    pub fn fields(self) -> impl Iterator<Item = Field> {
        Field::ALL.iter().copied().filter(move |f| f.section() == self)
    }
}

/// Core fields in canonical serialization order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Field {
    InParamCnt,
    InParamTypes,
    RetType,
    DominantOperationCategories,
    Loop,
    JumpTable,
    IndexedAddr,
    Simd,
    SubcallTargets,
    IntConsts,
    FloatConsts,
    ImmValuesCnt,
    StringLiterals,
    MutatesInputs,
    MutatesGlobals,
    MemAlloc,
    IoOps,
    BlockMemOps,
    ErrorHandling,
    InterruptsSyscalls,
    InferredAlgo,
}

impl Field {
    pub const ALL: &'static [Field] = &[
        Field::InParamCnt,
        Field::InParamTypes,
        Field::RetType,
        Field::DominantOperationCategories,
        Field::Loop,
        Field::JumpTable,
        Field::IndexedAddr,
        Field::Simd,
        Field::SubcallTargets,
        Field::IntConsts,
        Field::FloatConsts,
        Field::ImmValuesCnt,
        Field::StringLiterals,
        Field::MutatesInputs,
        Field::MutatesGlobals,
        Field::MemAlloc,
        Field::IoOps,
        Field::BlockMemOps,
        Field::ErrorHandling,
        Field::InterruptsSyscalls,
        Field::InferredAlgo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::InParamCnt => "in_param_cnt",
            Field::InParamTypes => "in_param_types",
            Field::RetType => "ret_type",
            Field::DominantOperationCategories => "dominant_operation_categories",
            Field::Loop => "loop",
            Field::JumpTable => "jump_table",
            Field::IndexedAddr => "indexed_addr",
            Field::Simd => "simd",
            Field::SubcallTargets => "subcall_targets",
            Field::IntConsts => "int_consts",
            Field::FloatConsts => "float_consts",
            Field::ImmValuesCnt => "imm_values_cnt",
            Field::StringLiterals => "string_literals",
            Field::MutatesInputs => "mutates_inputs",
            Field::MutatesGlobals => "mutates_globals",
            Field::MemAlloc => "mem_alloc",
            Field::IoOps => "io_ops",
            Field::BlockMemOps => "block_mem_ops",
            Field::ErrorHandling => "error_handling",
            Field::InterruptsSyscalls => "interrupts_syscalls",
            Field::InferredAlgo => "inferred_algo",
        }
    }

    pub fn from_name(name: &str) -> Option<Field> {
        Field::ALL.iter().copied().find(|f| f.name() == name)
    }

    pub fn section(self) -> Section {
        use Field::*;
        match self {
            InParamCnt | InParamTypes | RetType => Section::TypeSignature,
            DominantOperationCategories | Loop | JumpTable | IndexedAddr | Simd | SubcallTargets => {
                Section::LogicOperations
            }
            IntConsts | FloatConsts | ImmValuesCnt | StringLiterals => Section::NotableConstants,
            MutatesInputs | MutatesGlobals | MemAlloc | IoOps | BlockMemOps | ErrorHandling
            | InterruptsSyscalls => Section::SideEffects,
            InferredAlgo => Section::Categorization,
        }
    }

    /// Count fields eligible for log-bucketing when flattening.
    pub fn is_count(self) -> bool {
        matches!(
            self,
            Field::InParamCnt | Field::SubcallTargets | Field::ImmValuesCnt | Field::InterruptsSyscalls
        )
    }
}

/// Typed value of one field, used by flattening and diffing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldValue {
    Count(u64),
    Flag(bool),
    Label(&'static str),
    /// Order matters (positional).
    Sequence(Vec<String>),
    /// Order does not matter; elements are sorted and unique.
    Set(Vec<String>),
}

impl FieldValue {
    pub fn to_json(&self) -> Value {
        match self {
            FieldValue::Count(n) => Value::from(*n),
            FieldValue::Flag(b) => Value::Bool(*b),
            FieldValue::Label(s) => Value::from(*s),
            FieldValue::Sequence(items) | FieldValue::Set(items) => {
                Value::Array(items.iter().map(|s| Value::from(s.as_str())).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureSet {
    pub in_param_cnt: Option<u64>,
    pub in_param_types: Option<Vec<ParamType>>,
    pub ret_type: Option<ReturnType>,
    pub dominant_operation_categories: Option<BTreeSet<OperationCategory>>,
    pub r#loop: Option<bool>,
    pub jump_table: Option<bool>,
    pub indexed_addr: Option<bool>,
    pub simd: Option<bool>,
    pub subcall_targets: Option<u64>,
    pub int_consts: Option<BTreeSet<String>>,
    pub float_consts: Option<BTreeSet<String>>,
    pub imm_values_cnt: Option<u64>,
    pub string_literals: Option<bool>,
    pub mutates_inputs: Option<bool>,
    pub mutates_globals: Option<bool>,
    pub mem_alloc: Option<bool>,
    pub io_ops: Option<bool>,
    pub block_mem_ops: Option<bool>,
    pub error_handling: Option<bool>,
    pub interrupts_syscalls: Option<u64>,
    pub inferred_algo: Option<AlgorithmCategory>,
    /// Fields outside the core schema, kept verbatim.
    pub extensions: BTreeMap<String, Value>,
}

impl FeatureSet {
    pub fn get(&self, field: Field) -> Option<FieldValue> {
        use FieldValue::*;
        let set = |s: &BTreeSet<String>| Set(s.iter().cloned().collect());
        match field {
            Field::InParamCnt => self.in_param_cnt.map(Count),
            Field::InParamTypes => self
                .in_param_types
                .as_ref()
                .map(|v| Sequence(v.iter().map(|t| t.as_str().to_string()).collect())),
            Field::RetType => self.ret_type.map(|t| Label(t.as_str())),
            Field::DominantOperationCategories => self
                .dominant_operation_categories
                .as_ref()
                .map(|v| Set(v.iter().map(|c| c.as_str().to_string()).collect())),
            Field::Loop => self.r#loop.map(Flag),
            Field::JumpTable => self.jump_table.map(Flag),
            Field::IndexedAddr => self.indexed_addr.map(Flag),
            Field::Simd => self.simd.map(Flag),
            Field::SubcallTargets => self.subcall_targets.map(Count),
            Field::IntConsts => self.int_consts.as_ref().map(set),
            Field::FloatConsts => self.float_consts.as_ref().map(set),
            Field::ImmValuesCnt => self.imm_values_cnt.map(Count),
            Field::StringLiterals => self.string_literals.map(Flag),
            Field::MutatesInputs => self.mutates_inputs.map(Flag),
            Field::MutatesGlobals => self.mutates_globals.map(Flag),
            Field::MemAlloc => self.mem_alloc.map(Flag),
            Field::IoOps => self.io_ops.map(Flag),
            Field::BlockMemOps => self.block_mem_ops.map(Flag),
            Field::ErrorHandling => self.error_handling.map(Flag),
            Field::InterruptsSyscalls => self.interrupts_syscalls.map(Count),
            Field::InferredAlgo => self.inferred_algo.map(|a| Label(a.as_str())),
        }
    }

    pub fn has(&self, field: Field) -> bool {
        self.get(field).is_some()
    }

    /// Clears one core field.
    pub fn remove(&mut self, field: Field) {
        match field {
            Field::InParamCnt => self.in_param_cnt = None,
            Field::InParamTypes => self.in_param_types = None,
            Field::RetType => self.ret_type = None,
            Field::DominantOperationCategories => self.dominant_operation_categories = None,
            Field::Loop => self.r#loop = None,
            Field::JumpTable => self.jump_table = None,
            Field::IndexedAddr => self.indexed_addr = None,
            Field::Simd => self.simd = None,
            Field::SubcallTargets => self.subcall_targets = None,
            Field::IntConsts => self.int_consts = None,
            Field::FloatConsts => self.float_consts = None,
            Field::ImmValuesCnt => self.imm_values_cnt = None,
            Field::StringLiterals => self.string_literals = None,
            Field::MutatesInputs => self.mutates_inputs = None,
            Field::MutatesGlobals => self.mutates_globals = None,
            Field::MemAlloc => self.mem_alloc = None,
            Field::IoOps => self.io_ops = None,
            Field::BlockMemOps => self.block_mem_ops = None,
            Field::ErrorHandling => self.error_handling = None,
            Field::InterruptsSyscalls => self.interrupts_syscalls = None,
            Field::InferredAlgo => self.inferred_algo = None,
        }
    }

    /// True when every core field is present.
    pub fn is_complete(&self) -> bool {
        Field::ALL.iter().all(|f| self.has(*f))
    }

    /// Core fields first (canonical order), then extensions by key.
    pub fn entries(&self) -> Vec<(String, Value)> {
        let mut out: Vec<(String, Value)> = Field::ALL
            .iter()
            .filter_map(|f| self.get(*f).map(|v| (f.name().to_string(), v.to_json())))
            .collect();
        out.extend(self.extensions.iter().map(|(k, v)| (k.clone(), v.clone())));
        out
    }

    pub fn to_json(&self) -> Value {
        Value::Object(self.entries().into_iter().collect::<Map<_, _>>())
    }
}

/// Which fields a document must carry and which are kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Requirements {
    pub required: BTreeSet<Section>,
    pub kept: BTreeSet<Section>,
}

impl Requirements {
    pub fn all() -> Self {
        let every: BTreeSet<Section> = Section::ALL.iter().copied().collect();
        Requirements {
            required: every.clone(),
            kept: every,
        }
    }

    /// Fields of `sections` are required; fields of other sections dropped.
    pub fn sections<I: IntoIterator<Item = Section>>(sections: I) -> Self {
        let set: BTreeSet<Section> = sections.into_iter().collect();
        Requirements {
            required: set.clone(),
            kept: set,
        }
    }

    /// Nothing required, everything kept.
    pub fn partial() -> Self {
        Requirements {
            required: BTreeSet::new(),
            kept: Section::ALL.iter().copied().collect(),
        }
    }
}

/// Validates a complete document.
pub fn validate(doc: &Value) -> Result<FeatureSet, SchemaError> {
    validate_with(doc, &Requirements::all())
}

pub fn validate_with(doc: &Value, req: &Requirements) -> Result<FeatureSet, SchemaError> {
    let obj = doc.as_object().ok_or(SchemaError::NotAnObject)?;
    let mut fs = FeatureSet::default();

    for (key, value) in obj {
        match Field::from_name(key) {
            Some(field) if req.kept.contains(&field.section()) => set_field(&mut fs, field, value)?,
            Some(_) => {}
            None => {
                fs.extensions.insert(key.clone(), value.clone());
            }
        }
    }

    for field in Field::ALL {
        if req.required.contains(&field.section()) && !fs.has(*field) {
            return Err(SchemaError::Missing(field.name()));
        }
    }

    if let (Some(cnt), Some(types)) = (fs.in_param_cnt, fs.in_param_types.as_ref()) {
        if types.len() as u64 != cnt {
            return Err(value_err(
                Field::InParamTypes,
                format!("has {} entries but in_param_cnt is {cnt}", types.len()),
            ));
        }
    }
    Ok(fs)
}

/// Parses and validates a complete document from text.
pub fn validate_str(text: &str) -> Result<FeatureSet, ValidateTextError> {
    let doc: Value = serde_json::from_str(text).map_err(ValidateTextError::Json)?;
    Ok(validate(&doc)?)
}

#[derive(Debug, Error)]
pub enum ValidateTextError {
    #[error("malformed JSON: {0}")]
    Json(serde_json::Error),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

fn set_field(fs: &mut FeatureSet, field: Field, v: &Value) -> Result<(), SchemaError> {
    match field {
        Field::InParamCnt => fs.in_param_cnt = Some(count(field, v)?),
        Field::InParamTypes => {
            fs.in_param_types = Some(
                strings(field, v)?
                    .iter()
                    .map(|s| s.parse().map_err(|e: String| value_err(field, e)))
                    .collect::<Result<_, _>>()?,
            )
        }
        Field::RetType => {
            fs.ret_type = Some(match v {
                Value::Null => ReturnType::None,
                Value::String(s) => s.parse().map_err(|e: String| value_err(field, e))?,
                _ => return Err(type_err(field, "a string")),
            })
        }
        Field::DominantOperationCategories => {
            let cats: BTreeSet<OperationCategory> = strings(field, v)?
                .iter()
                .map(|s| s.parse().map_err(|e: String| value_err(field, e)))
                .collect::<Result<_, _>>()?;
            if cats.is_empty() {
                return Err(value_err(field, "must not be empty"));
            }
            fs.dominant_operation_categories = Some(cats);
        }
        Field::Loop => fs.r#loop = Some(flag(field, v)?),
        Field::JumpTable => fs.jump_table = Some(flag(field, v)?),
        Field::IndexedAddr => fs.indexed_addr = Some(flag(field, v)?),
        Field::Simd => fs.simd = Some(flag(field, v)?),
        Field::SubcallTargets => fs.subcall_targets = Some(count(field, v)?),
        Field::IntConsts => {
            let Value::Array(items) = v else {
                return Err(type_err(field, "an array of hexadecimal strings"));
            };
            let mut set = BTreeSet::new();
            for item in items {
                if let Some(hex) = normalize_int_const(item).map_err(|e| value_err(field, e))? {
                    set.insert(hex);
                }
            }
            if set.len() > MAX_INT_CONSTS {
                return Err(value_err(
                    field,
                    format!("{} entries exceed the limit of {MAX_INT_CONSTS}", set.len()),
                ));
            }
            fs.int_consts = Some(set);
        }
        Field::FloatConsts => {
            let Value::Array(items) = v else {
                return Err(type_err(field, "an array of decimal strings"));
            };
            let mut set = BTreeSet::new();
            for item in items {
                set.insert(normalize_float_const(item).map_err(|e| value_err(field, e))?);
            }
            fs.float_consts = Some(set);
        }
        Field::ImmValuesCnt => fs.imm_values_cnt = Some(count(field, v)?),
        Field::StringLiterals => fs.string_literals = Some(flag(field, v)?),
        Field::MutatesInputs => fs.mutates_inputs = Some(flag(field, v)?),
        Field::MutatesGlobals => fs.mutates_globals = Some(flag(field, v)?),
        Field::MemAlloc => fs.mem_alloc = Some(flag(field, v)?),
        Field::IoOps => fs.io_ops = Some(flag(field, v)?),
        Field::BlockMemOps => fs.block_mem_ops = Some(flag(field, v)?),
        Field::ErrorHandling => fs.error_handling = Some(flag(field, v)?),
        Field::InterruptsSyscalls => fs.interrupts_syscalls = Some(count(field, v)?),
        Field::InferredAlgo => {
            let Value::String(s) = v else {
                return Err(type_err(field, "a string"));
            };
            fs.inferred_algo = Some(s.parse().map_err(|e: String| value_err(field, e))?);
        }
    }
    Ok(())
}

fn count(field: Field, v: &Value) -> Result<u64, SchemaError> {
    match v {
        Value::Number(n) => n
            .as_u64()
            .ok_or_else(|| value_err(field, format!("{n} is not a non-negative integer"))),
        Value::String(s) => s
            .trim()
            .parse::<u64>()
            .map_err(|_| value_err(field, format!("`{s}` is not a non-negative integer"))),
        _ => Err(type_err(field, "a non-negative integer")),
    }
}

fn flag(field: Field, v: &Value) -> Result<bool, SchemaError> {
    match v {
        Value::Bool(b) => Ok(*b),
        Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
            "true" | "yes" => Ok(true),
            "false" | "no" => Ok(false),
            _ => Err(type_err(field, "a boolean")),
        },
        _ => Err(type_err(field, "a boolean")),
    }
}

fn strings(field: Field, v: &Value) -> Result<Vec<String>, SchemaError> {
    let Value::Array(items) = v else {
        return Err(type_err(field, "an array of strings"));
    };
    items
        .iter()
        .map(|item| match item {
            Value::String(s) => Ok(s.clone()),
            _ => Err(type_err(field, "an array of strings")),
        })
        .collect()
}

/// Normalizes one integer literal to `0x<lowercase hex>` without leading
/// zeros. Negative values become 64-bit two's complement. Returns `None` for
/// the trivial constants (0, 1 and -1 at any width).
pub fn normalize_int_const(v: &Value) -> Result<Option<String>, String> {
    let hex = match v {
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                format!("{u:x}")
            } else if let Some(i) = n.as_i64() {
                format!("{:x}", i as u64)
            } else {
                return Err(format!("{n} is not an integer"));
            }
        }
        Value::String(s) => hex_digits(s).ok_or_else(|| format!("`{s}` is not an integer literal"))?,
        _ => return Err("integer constants must be strings or numbers".into()),
    };
    let hex = format!("0x{hex}");
    if TRIVIAL_INT_CONSTS.contains(&hex.as_str()) {
        Ok(None)
    } else {
        Ok(Some(hex))
    }
}

/// Lowercase hex digits without leading zeros for a textual literal
/// (`0x..`, `..h`, decimal, optionally negative). Negative values are
/// rendered as 64-bit two's complement.
pub fn hex_digits(raw: &str) -> Option<String> {
    let s = raw.trim().replace('_', "");
    let (negative, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest.trim_start()),
        None => (false, s.strip_prefix('+').unwrap_or(&s)),
    };
    let digits: String = if let Some(h) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        h.to_string()
    } else if let Some(h) = body.strip_suffix('h').or_else(|| body.strip_suffix('H')) {
        if !h.starts_with(|c: char| c.is_ascii_digit()) {
            return None;
        }
        h.to_string()
    } else {
        if body.is_empty() || !body.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        let n: u128 = body.parse().ok()?;
        format!("{n:x}")
    };
    if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_hexdigit()) {
        return None;
    }
    let trimmed = digits.trim_start_matches('0').to_ascii_lowercase();
    let trimmed = if trimmed.is_empty() { "0".to_string() } else { trimmed };
    if negative {
        let magnitude = u64::from_str_radix(&trimmed, 16).ok()?;
        if magnitude == 0 {
            return Some("0".into());
        }
        return Some(format!("{:x}", magnitude.wrapping_neg()));
    }
    Some(trimmed)
}

fn normalize_float_const(v: &Value) -> Result<String, String> {
    let text = match v {
        Value::Number(n) => n.to_string(),
        Value::String(s) => s.trim().to_string(),
        _ => return Err("float constants must be strings or numbers".into()),
    };
    match text.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(text),
        _ => Err(format!("`{text}` is not a finite decimal number")),
    }
}

/// Byte-deterministic compact JSON: core fields in [`Field::ALL`] order,
/// set-valued arrays sorted, then extensions sorted by key.
pub fn canonicalize(fs: &FeatureSet) -> String {
    let mut out = String::from("{");
    for (i, (key, value)) in fs.entries().iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&Value::from(key.as_str()).to_string());
        out.push(':');
        out.push_str(&value.to_string());
    }
    out.push('}');
    out
}

/// One line of a features file: `{"id":"...","features":<canonical>}`.
pub fn feature_line(id: &str, fs: &FeatureSet) -> String {
    format!("{{\"id\":{},\"features\":{}}}", Value::from(id), canonicalize(fs))
}

#[derive(Debug, Error)]
#[error("features file line {line}: {message}")]
pub struct FeaturesFileError {
    pub line: usize,
    pub message: String,
}

/// Reads a features file. Documents may be partial; ids must be unique.
pub fn read_features(reader: impl std::io::BufRead) -> Result<Vec<(String, FeatureSet)>, FeaturesFileError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let err = |message: String| FeaturesFileError { line: idx + 1, message };
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Value = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        let id = rec
            .get("id")
            .and_then(Value::as_str)
            .ok_or_else(|| err("missing string `id`".into()))?;
        let doc = rec.get("features").ok_or_else(|| err("missing `features`".into()))?;
        let fs = validate_with(doc, &Requirements::partial()).map_err(|e| err(e.to_string()))?;
        if !seen.insert(id.to_string()) {
            return Err(err(format!("duplicate id `{id}`")));
        }
        out.push((id.to_string(), fs));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldChange {
    Equal,
    /// Scalar or positional value differs, or the field exists on one side only.
    Changed { left: Option<Value>, right: Option<Value> },
    /// Set-valued field: elements only on the left / only on the right.
    SetChanged { removed: Vec<String>, added: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldDiff {
    pub field: String,
    pub change: FieldChange,
}

impl FieldDiff {
    pub fn is_equal(&self) -> bool {
        self.change == FieldChange::Equal
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDiff {
    /// One entry per field present on either side, core fields first.
    pub fields: Vec<FieldDiff>,
}

impl FeatureDiff {
    pub fn differences(&self) -> impl Iterator<Item = &FieldDiff> {
        self.fields.iter().filter(|d| !d.is_equal())
    }

    /// True when no field differs.
    pub fn is_empty(&self) -> bool {
        self.differences().next().is_none()
    }

    pub fn changed_fields(&self) -> Vec<&str> {
        self.differences().map(|d| d.field.as_str()).collect()
    }
}

impl fmt::Display for FeatureDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |v: &Option<Value>| v.as_ref().map_or_else(|| "<absent>".to_string(), Value::to_string);
        for d in &self.fields {
            match &d.change {
                FieldChange::Equal => writeln!(f, "  {}", d.field)?,
                FieldChange::Changed { left, right } => {
                    writeln!(f, "- {}: {}", d.field, show(left))?;
                    writeln!(f, "+ {}: {}", d.field, show(right))?;
                }
                FieldChange::SetChanged { removed, added } => {
                    let parts: Vec<String> = removed
                        .iter()
                        .map(|r| format!("-{r}"))
                        .chain(added.iter().map(|a| format!("+{a}")))
                        .collect();
                    writeln!(f, "~ {}: {}", d.field, parts.join(" "))?;
                }
            }
        }
        Ok(())
    }
}

pub fn diff(a: &FeatureSet, b: &FeatureSet) -> FeatureDiff {
    let mut fields = Vec::new();
    for field in Field::ALL {
        let (left, right) = (a.get(*field), b.get(*field));
        if left.is_none() && right.is_none() {
            continue;
        }
        let change = match (&left, &right) {
            (Some(l), Some(r)) if l == r => FieldChange::Equal,
            (Some(FieldValue::Set(l)), Some(FieldValue::Set(r))) => FieldChange::SetChanged {
                removed: l.iter().filter(|x| !r.contains(x)).cloned().collect(),
                added: r.iter().filter(|x| !l.contains(x)).cloned().collect(),
            },
            _ => FieldChange::Changed {
                left: left.as_ref().map(FieldValue::to_json),
                right: right.as_ref().map(FieldValue::to_json),
            },
        };
        fields.push(FieldDiff {
            field: field.name().to_string(),
            change,
        });
    }
    let keys: BTreeSet<&String> = a.extensions.keys().chain(b.extensions.keys()).collect();
    for key in keys {
        let (l, r) = (a.extensions.get(key), b.extensions.get(key));
        let change = if l == r {
            FieldChange::Equal
        } else {
            FieldChange::Changed {
                left: l.cloned(),
                right: r.cloned(),
            }
        };
        fields.push(FieldDiff {
            field: key.clone(),
            change,
        });
    }
    FeatureDiff { fields }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn figure_doc() -> Value {
        json!({
            "in_param_cnt": 1,
            "in_param_types": ["Ptr"],
            "ret_type": "Integer",
            "dominant_operation_categories": ["ConditionalBranching", "SubroutineCall"],
            "loop": false,
            "jump_table": false,
            "indexed_addr": false,
            "simd": false,
            "subcall_targets": 2,
            "int_consts": ["0x39", "0x4"],
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
            "inferred_algo": "Initialization"
        })
    }

    #[test]
    fn figure_document_validates() {
        let fs = validate(&figure_doc()).unwrap();
        assert_eq!(fs.ret_type, Some(ReturnType::Integer));
        assert_eq!(fs.in_param_types, Some(vec![ParamType::Pointer]));
        assert_eq!(
            fs.int_consts.unwrap().into_iter().collect::<Vec<_>>(),
            vec!["0x39".to_string(), "0x4".to_string()]
        );
        assert_eq!(fs.inferred_algo, Some(AlgorithmCategory::Initialization));
    }

    #[test]
    fn param_count_mismatch_is_rejected() {
        let mut doc = figure_doc();
        doc["in_param_cnt"] = json!(2);
        assert!(matches!(
            validate(&doc),
            Err(SchemaError::Value { field: "in_param_types", .. })
        ));
    }

    #[test]
    fn missing_field_is_named() {
        let mut doc = figure_doc();
        doc.as_object_mut().unwrap().remove("simd");
        assert_eq!(validate(&doc), Err(SchemaError::Missing("simd")));
    }

    #[test]
    fn hex_normalization() {
        let norm = |s: &str| normalize_int_const(&json!(s)).unwrap();
        assert_eq!(norm("0X0039"), Some("0x39".into()));
        assert_eq!(norm("0DEADBEEFh"), Some("0xdeadbeef".into()));
        assert_eq!(norm("57"), Some("0x39".into()));
        assert_eq!(norm("-8"), Some("0xfffffffffffffff8".into()));
        assert_eq!(norm("0x00"), None);
        assert_eq!(norm("-1"), None);
        assert_eq!(norm("0xFFFFFFFF"), None);
        assert_eq!(normalize_int_const(&json!(1)).unwrap(), None);
        assert!(normalize_int_const(&json!("var_8")).is_err());
        assert!(normalize_int_const(&json!("abch")).is_err());
    }

    #[test]
    fn int_consts_limit() {
        let mut doc = figure_doc();
        let many: Vec<String> = (0x10..0x20).map(|i| format!("0x{i:x}")).collect();
        doc["int_consts"] = json!(many);
        assert!(validate(&doc).is_err());
        doc["int_consts"] = json!(many[..15]);
        assert_eq!(validate(&doc).unwrap().int_consts.unwrap().len(), 15);
    }

    #[test]
    fn enums_are_case_insensitive_with_aliases() {
        let mut doc = figure_doc();
        doc["ret_type"] = json!("none");
        doc["inferred_algo"] = json!("control-flow or dispatch");
        doc["dominant_operation_categories"] = json!(["data movement", "BITWISE", "Bitwise"]);
        let fs = validate(&doc).unwrap();
        assert_eq!(fs.ret_type, Some(ReturnType::None));
        assert_eq!(fs.inferred_algo, Some(AlgorithmCategory::ControlFlowDispatch));
        assert_eq!(fs.dominant_operation_categories.unwrap().len(), 2);

        doc["ret_type"] = json!("Struct");
        assert!(validate(&doc).is_err());
    }

    #[test]
    fn extensions_are_kept_and_serialized_last() {
        let mut doc = figure_doc();
        doc["stack_frame_size"] = json!(8);
        let fs = validate(&doc).unwrap();
        assert_eq!(fs.extensions.get("stack_frame_size"), Some(&json!(8)));
        let canon = canonicalize(&fs);
        assert!(canon.ends_with(",\"stack_frame_size\":8}"));
        assert!(canon.starts_with("{\"in_param_cnt\":1,\"in_param_types\":[\"Pointer\"]"));
    }

    #[test]
    fn canonical_text_is_a_fixpoint() {
        let fs = validate(&figure_doc()).unwrap();
        let once = canonicalize(&fs);
        let again = canonicalize(&validate_str(&once).unwrap());
        assert_eq!(once, again);
        assert!(!once.contains(' '));
    }

    #[test]
    fn array_order_does_not_matter() {
        let mut doc = figure_doc();
        let a = validate(&doc).unwrap();
        doc["int_consts"] = json!(["0x4", "0x39"]);
        doc["dominant_operation_categories"] = json!(["SubroutineCall", "ConditionalBranching"]);
        let b = validate(&doc).unwrap();
        assert_eq!(canonicalize(&a), canonicalize(&b));
    }

    #[test]
    fn section_requirements() {
        let doc = json!({"int_consts": ["0x10"], "float_consts": [], "imm_values_cnt": 2,
                         "string_literals": true, "loop": true});
        let fs = validate_with(&doc, &Requirements::sections([Section::NotableConstants])).unwrap();
        assert_eq!(fs.r#loop, None);
        assert_eq!(fs.imm_values_cnt, Some(2));
        assert!(validate_with(&doc, &Requirements::sections([Section::LogicOperations])).is_err());
        let partial = validate_with(&doc, &Requirements::partial()).unwrap();
        assert_eq!(partial.r#loop, Some(true));
    }

    #[test]
    fn section_field_mapping_covers_every_field_once() {
        let total: usize = Section::ALL.iter().map(|s| s.fields().count()).sum();
        assert_eq!(total, Field::ALL.len());
        let constants: Vec<&str> = Section::NotableConstants.fields().map(Field::name).collect();
        assert_eq!(constants, ["int_consts", "float_consts", "imm_values_cnt", "string_literals"]);
    }

    #[test]
    fn diff_reflexive_and_mirrored() {
        let a = validate(&figure_doc()).unwrap();
        assert!(diff(&a, &a).is_empty());
        let mut doc = figure_doc();
        doc["ret_type"] = json!("None");
        doc["int_consts"] = json!(["0x39"]);
        let b = validate(&doc).unwrap();
        let ab = diff(&a, &b);
        let ba = diff(&b, &a);
        assert_eq!(ab.changed_fields(), vec!["ret_type", "int_consts"]);
        for (x, y) in ab.fields.iter().zip(&ba.fields) {
            let mirrored = match &x.change {
                FieldChange::Equal => FieldChange::Equal,
                FieldChange::Changed { left, right } => FieldChange::Changed {
                    left: right.clone(),
                    right: left.clone(),
                },
                FieldChange::SetChanged { removed, added } => FieldChange::SetChanged {
                    removed: added.clone(),
                    added: removed.clone(),
                },
            };
            assert_eq!(mirrored, y.change);
        }
    }
}
