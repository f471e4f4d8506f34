//! Machine-readable instruction-set description.
//!
//! A [`Catalog`] lists every instruction variant the benchmark generators may
//! use, together with the register file they allocate from. Catalogs are
//! loaded from JSON or XML (see `docs/schema.md`) and validated eagerly, so
//! everything downstream can index operands and registers without checks.

mod xml;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read catalog {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed catalog document: {0}")]
    Parse(String),
    #[error("invalid catalog entry `{id}`: {reason}")]
    Validation { id: String, reason: String },
}

fn invalid(id: &str, reason: impl Into<String>) -> CatalogError {
    CatalogError::Validation {
        id: id.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperandKind {
    GpRegister,
    SimdRegister,
    MmxRegister,
    Memory,
    Immediate,
    Flags,
    AgenBase,
}

impl OperandKind {
    /// Register class an operand of this kind is allocated from.
    pub fn reg_class(self) -> Option<RegClass> {
        match self {
            OperandKind::GpRegister | OperandKind::AgenBase => Some(RegClass::Gp),
            OperandKind::SimdRegister => Some(RegClass::Simd),
            OperandKind::MmxRegister => Some(RegClass::Mmx),
            _ => None,
        }
    }

    pub fn is_register(self) -> bool {
        self.reg_class().is_some()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OperandKind::GpRegister => "gp-register",
            OperandKind::SimdRegister => "simd-register",
            OperandKind::MmxRegister => "mmx-register",
            OperandKind::Memory => "memory",
            OperandKind::Immediate => "immediate",
            OperandKind::Flags => "flags",
            OperandKind::AgenBase => "agen-base",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "gp-register" => OperandKind::GpRegister,
            "simd-register" => OperandKind::SimdRegister,
            "mmx-register" => OperandKind::MmxRegister,
            "memory" => OperandKind::Memory,
            "immediate" => OperandKind::Immediate,
            "flags" => OperandKind::Flags,
            "agen-base" => OperandKind::AgenBase,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Access {
    Read,
    Write,
    ReadWrite,
}

impl Access {
    pub fn reads(self) -> bool {
        matches!(self, Access::Read | Access::ReadWrite)
    }

    pub fn writes(self) -> bool {
        matches!(self, Access::Write | Access::ReadWrite)
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "read" => Access::Read,
            "write" => Access::Write,
            "read-write" => Access::ReadWrite,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Flag {
    CF,
    PF,
    AF,
    ZF,
    SF,
    OF,
}

impl Flag {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "CF" => Flag::CF,
            "PF" => Flag::PF,
            "AF" => Flag::AF,
            "ZF" => Flag::ZF,
            "SF" => Flag::SF,
            "OF" => Flag::OF,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct OperandSpec {
    pub index: usize,
    pub kind: OperandKind,
    #[serde(default)]
    pub width: u32,
    pub access: Access,
    #[serde(default)]
    pub implicit: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_register: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flag_set: Vec<Flag>,
}

impl OperandSpec {
    pub fn reads(&self) -> bool {
        self.access.reads()
    }

    pub fn writes(&self) -> bool {
        self.access.writes()
    }

    /// Whether the operand carries a value dependency (immediates do not).
    pub fn is_dependency(&self) -> bool {
        self.kind != OperandKind::Immediate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IsaClass {
    #[serde(rename = "GP")]
    Gp,
    #[serde(rename = "SSE")]
    Sse,
    #[serde(rename = "AVX")]
    Avx,
}

impl IsaClass {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "GP" => IsaClass::Gp,
            "SSE" => IsaClass::Sse,
            "AVX" => IsaClass::Avx,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Attribute {
    UsesDivider,
    Serializing,
    System,
    ControlFlowOnRegister,
    PauseLike,
    ZeroLatencyCapable,
    ZeroIdiom,
    MoveEliminationCapable,
}

impl Attribute {
    pub fn as_str(self) -> &'static str {
        match self {
            Attribute::UsesDivider => "uses-divider",
            Attribute::Serializing => "serializing",
            Attribute::System => "system",
            Attribute::ControlFlowOnRegister => "control-flow-on-register",
            Attribute::PauseLike => "pause-like",
            Attribute::ZeroLatencyCapable => "zero-latency-capable",
            Attribute::ZeroIdiom => "zero-idiom",
            Attribute::MoveEliminationCapable => "move-elimination-capable",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "uses-divider" => Attribute::UsesDivider,
            "serializing" => Attribute::Serializing,
            "system" => Attribute::System,
            "control-flow-on-register" => Attribute::ControlFlowOnRegister,
            "pause-like" => Attribute::PauseLike,
            "zero-latency-capable" => Attribute::ZeroLatencyCapable,
            "zero-idiom" => Attribute::ZeroIdiom,
            "move-elimination-capable" => Attribute::MoveEliminationCapable,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct InstructionDesc {
    pub id: String,
    pub mnemonic: String,
    pub isa_class: IsaClass,
    pub operands: Vec<OperandSpec>,
    #[serde(default)]
    pub attributes: BTreeSet<Attribute>,
}

impl InstructionDesc {
    pub fn has(&self, attr: Attribute) -> bool {
        self.attributes.contains(&attr)
    }

    pub fn explicit_operands(&self) -> impl Iterator<Item = &OperandSpec> {
        self.operands.iter().filter(|op| !op.implicit)
    }

    pub fn memory_operand(&self) -> Option<&OperandSpec> {
        self.operands.iter().find(|op| op.kind == OperandKind::Memory)
    }

    /// Operands that can start a dependency (readable, not immediates).
    pub fn sources(&self) -> impl Iterator<Item = &OperandSpec> {
        self.operands.iter().filter(|op| op.reads() && op.is_dependency())
    }

    pub fn destinations(&self) -> impl Iterator<Item = &OperandSpec> {
        self.operands.iter().filter(|op| op.writes())
    }

    /// Explicit register operands grouped by class, for same-register checks.
    pub fn same_class_register_groups(&self) -> Vec<Vec<usize>> {
        let mut groups: BTreeMap<RegClass, Vec<usize>> = BTreeMap::new();
        for op in self.explicit_operands() {
            if let Some(class) = op.kind.reg_class() {
                groups.entry(class).or_default().push(op.index);
            }
        }
        groups.into_values().filter(|g| g.len() >= 2).collect()
    }

    pub fn is_avx(&self) -> bool {
        self.isa_class == IsaClass::Avx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegClass {
    Gp,
    Simd,
    Mmx,
}

impl RegClass {
    pub fn as_str(self) -> &'static str {
        match self {
            RegClass::Gp => "gp",
            RegClass::Simd => "simd",
            RegClass::Mmx => "mmx",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "gp" => RegClass::Gp,
            "simd" => RegClass::Simd,
            "mmx" => RegClass::Mmx,
            _ => return None,
        })
    }
}

impl fmt::Display for RegClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One architectural register name. Narrow views name their full-width
/// `base`; dependency tracking happens on the base register.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Register {
    pub name: String,
    pub width: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<String>,
}

impl Register {
    pub fn base(&self) -> &str {
        self.base.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct CatalogDocument {
    instructions: Vec<InstructionDesc>,
    register_classes: BTreeMap<RegClass, Vec<Register>>,
}

#[derive(Debug, Clone)]
pub struct Catalog {
    instructions: Vec<InstructionDesc>,
    register_classes: BTreeMap<RegClass, Vec<Register>>,
    by_id: HashMap<String, usize>,
    registers: HashMap<String, (RegClass, usize)>,
}

impl PartialEq for Catalog {
    fn eq(&self, other: &Self) -> bool {
        self.instructions == other.instructions && self.register_classes == other.register_classes
    }
}

const REG_WIDTHS: [u32; 7] = [8, 16, 32, 64, 128, 256, 512];
const IMM_WIDTHS: [u32; 4] = [8, 16, 32, 64];

impl Catalog {
    /// Builds and validates a catalog from its parts.
    pub fn new(
        instructions: Vec<InstructionDesc>,
        register_classes: BTreeMap<RegClass, Vec<Register>>,
    ) -> Result<Self, CatalogError> {
        let mut registers = HashMap::new();
        for (class, regs) in &register_classes {
            for (i, reg) in regs.iter().enumerate() {
                if !REG_WIDTHS.contains(&reg.width) {
                    return Err(invalid(&reg.name, format!("register width {}", reg.width)));
                }
                if registers.insert(reg.name.clone(), (*class, i)).is_some() {
                    return Err(invalid(&reg.name, "register declared twice"));
                }
            }
        }
        for (class, regs) in &register_classes {
            for reg in regs {
                match registers.get(reg.base()) {
                    Some((c, _)) if c == class => {}
                    _ => {
                        return Err(invalid(
                            &reg.name,
                            format!("base register `{}` not declared in class {class}", reg.base()),
                        ))
                    }
                }
            }
        }

        let mut catalog = Catalog {
            instructions,
            register_classes,
            by_id: HashMap::new(),
            registers,
        };
        for (i, instr) in catalog.instructions.iter().enumerate() {
            if catalog.by_id.insert(instr.id.clone(), i).is_some() {
                return Err(invalid(&instr.id, "duplicate instruction id"));
            }
        }
        for instr in &catalog.instructions {
            catalog.validate_instruction(instr)?;
        }
        Ok(catalog)
    }

    fn validate_instruction(&self, instr: &InstructionDesc) -> Result<(), CatalogError> {
        let id = instr.id.as_str();
        let mut seen_implicit = false;
        let mut memory = 0;
        for (pos, op) in instr.operands.iter().enumerate() {
            if op.index != pos {
                return Err(invalid(id, format!("operand at position {pos} has index {}", op.index)));
            }
            if op.implicit {
                seen_implicit = true;
                if op.fixed_register.is_none() && op.kind != OperandKind::Flags {
                    return Err(invalid(id, format!("implicit operand {pos} needs a fixed register")));
                }
            } else if seen_implicit {
                return Err(invalid(id, format!("explicit operand {pos} follows an implicit one")));
            }
            match op.kind {
                OperandKind::Immediate => {
                    if !IMM_WIDTHS.contains(&op.width) {
                        return Err(invalid(id, format!("illegal immediate width {}", op.width)));
                    }
                    if op.access != Access::Read {
                        return Err(invalid(id, "immediates can only be read"));
                    }
                }
                OperandKind::Flags => {
                    if op.width != 0 && !REG_WIDTHS.contains(&op.width) {
                        return Err(invalid(id, format!("illegal flags width {}", op.width)));
                    }
                }
                OperandKind::Memory => {
                    memory += 1;
                    if !REG_WIDTHS.contains(&op.width) {
                        return Err(invalid(id, format!("illegal memory width {}", op.width)));
                    }
                }
                _ => {
                    if !REG_WIDTHS.contains(&op.width) {
                        return Err(invalid(id, format!("illegal register width {}", op.width)));
                    }
                    let class = op.kind.reg_class().expect("register kind");
                    if self.registers_of(class, op.width).next().is_none() {
                        return Err(invalid(
                            id,
                            format!("no {class} register of width {} for operand {pos}", op.width),
                        ));
                    }
                }
            }
            if op.kind != OperandKind::Flags && !op.flag_set.is_empty() {
                return Err(invalid(id, format!("flag-set on non-flags operand {pos}")));
            }
            if let Some(fixed) = &op.fixed_register {
                let Some(class) = op.kind.reg_class() else {
                    return Err(invalid(id, format!("fixed register on {} operand", op.kind.as_str())));
                };
                match self.register(fixed) {
                    Some((c, reg)) if c == class && reg.width == op.width => {}
                    _ => {
                        return Err(invalid(
                            id,
                            format!("fixed register `{fixed}` does not resolve to a {class} register of width {}", op.width),
                        ))
                    }
                }
            }
        }
        if memory > 1 {
            return Err(invalid(id, "more than one memory operand"));
        }
        if instr.has(Attribute::ZeroIdiom) && instr.same_class_register_groups().is_empty() {
            return Err(invalid(id, "zero-idiom needs two register operands of the same class"));
        }
        Ok(())
    }

    pub fn instructions(&self) -> &[InstructionDesc] {
        &self.instructions
    }

    pub fn register_classes(&self) -> &BTreeMap<RegClass, Vec<Register>> {
        &self.register_classes
    }

    pub fn get(&self, id: &str) -> Option<&InstructionDesc> {
        self.by_id.get(id).map(|&i| &self.instructions[i])
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn register(&self, name: &str) -> Option<(RegClass, &Register)> {
        self.registers
            .get(name)
            .map(|&(class, i)| (class, &self.register_classes[&class][i]))
    }

    pub fn base_of(&self, name: &str) -> Option<&str> {
        self.register(name).map(|(_, r)| r.base())
    }

    pub fn registers_of(&self, class: RegClass, width: u32) -> impl Iterator<Item = &Register> {
        self.register_classes
            .get(&class)
            .into_iter()
            .flatten()
            .filter(move |r| r.width == width)
    }

    /// Full-width (base) register names of a class in declaration order.
    pub fn bases(&self, class: RegClass) -> Vec<&str> {
        self.register_classes
            .get(&class)
            .into_iter()
            .flatten()
            .filter(|r| r.base.is_none())
            .map(|r| r.name.as_str())
            .collect()
    }

    /// Name of the `width`-bit view of `base`, if declared.
    pub fn view(&self, base: &str, width: u32) -> Option<&str> {
        let (class, _) = self.register(base)?;
        self.registers_of(class, width)
            .find(|r| r.base() == base)
            .map(|r| r.name.as_str())
    }

    /// Returns a copy with additional instructions appended, revalidated.
    pub fn extended(&self, extra: Vec<InstructionDesc>) -> Result<Catalog, CatalogError> {
        let mut instructions = self.instructions.clone();
        instructions.extend(extra);
        Catalog::new(instructions, self.register_classes.clone())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "register-classes": self.register_classes,
            "instructions": self.instructions,
        })
    }
}

/// Parses a catalog document; JSON if it starts with `{`, XML otherwise.
pub fn parse_catalog(text: &str) -> Result<Catalog, CatalogError> {
    let trimmed = text.trim_start();
    let doc: CatalogDocument = if trimmed.starts_with('{') {
        serde_json::from_str(trimmed).map_err(|e| CatalogError::Parse(e.to_string()))?
    } else {
        xml::parse(trimmed)?
    };
    Catalog::new(doc.instructions, doc.register_classes)
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<Catalog, CatalogError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_catalog(&text)
}

/// Which blocking-instruction table a candidate may belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockingClass {
    SseSafe,
    AvxSafe,
}

impl BlockingClass {
    pub fn admits(self, class: IsaClass) -> bool {
        match self {
            BlockingClass::SseSafe => class != IsaClass::Avx,
            BlockingClass::AvxSafe => class != IsaClass::Sse,
        }
    }

    /// Table used when characterizing an instruction of `class`.
    pub fn for_isa(class: IsaClass) -> Self {
        if class == IsaClass::Avx {
            BlockingClass::AvxSafe
        } else {
            BlockingClass::SseSafe
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BlockingClass::SseSafe => "sse-safe",
            BlockingClass::AvxSafe => "avx-safe",
        }
    }
}

const NOT_BLOCKING: [Attribute; 5] = [
    Attribute::System,
    Attribute::Serializing,
    Attribute::ZeroLatencyCapable,
    Attribute::PauseLike,
    Attribute::ControlFlowOnRegister,
];

pub fn blocking_candidates(catalog: &Catalog, class: BlockingClass) -> Vec<&InstructionDesc> {
    catalog
        .instructions()
        .iter()
        .filter(|i| class.admits(i.isa_class))
        .filter(|i| !NOT_BLOCKING.iter().any(|a| i.has(*a)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "register-classes": {"gp": [
            {"name": "RAX", "width": 64}, {"name": "RBX", "width": 64},
            {"name": "EAX", "width": 32, "base": "RAX"}
        ]},
        "instructions": [{
            "id": "ADD_R64_R64", "mnemonic": "ADD", "isa-class": "GP",
            "operands": [
                {"index": 0, "kind": "gp-register", "width": 64, "access": "read-write"},
                {"index": 1, "kind": "gp-register", "width": 64, "access": "read"},
                {"index": 2, "kind": "flags", "access": "write", "implicit": true,
                 "flag-set": ["CF", "PF", "AF", "ZF", "SF", "OF"]}
            ]
        }]
    }"#;

    fn with_instructions(instrs: &str) -> String {
        format!(
            r#"{{"register-classes": {{"gp": [{{"name": "RAX", "width": 64}}]}}, "instructions": {instrs}}}"#
        )
    }

    #[test]
    fn minimal_add_entry() {
        let cat = parse_catalog(MINIMAL).unwrap();
        assert_eq!(cat.len(), 1);
        let add = cat.get("ADD_R64_R64").unwrap();
        assert_eq!(add.explicit_operands().count(), 2);
        let implicit: Vec<_> = add.operands.iter().filter(|o| o.implicit).collect();
        assert_eq!(implicit.len(), 1);
        assert_eq!(implicit[0].kind, OperandKind::Flags);
        assert_eq!(cat.view("RAX", 32), Some("EAX"));
        assert_eq!(cat.base_of("EAX"), Some("RAX"));
    }

    #[test]
    fn duplicate_id_is_named() {
        let entry = r#"{"id": "X", "mnemonic": "X", "isa-class": "GP", "operands": []}"#;
        let err = parse_catalog(&with_instructions(&format!("[{entry}, {entry}]"))).unwrap_err();
        match err {
            CatalogError::Validation { id, .. } => assert_eq!(id, "X"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn width_24_rejected() {
        let doc = with_instructions(
            r#"[{"id": "W24", "mnemonic": "W", "isa-class": "GP", "operands": [
                {"index": 0, "kind": "gp-register", "width": 24, "access": "read"}]}]"#,
        );
        let err = parse_catalog(&doc).unwrap_err();
        assert!(matches!(err, CatalogError::Validation { ref id, .. } if id == "W24"), "{err}");
    }

    #[test]
    fn unresolvable_fixed_register() {
        let doc = with_instructions(
            r#"[{"id": "FIX", "mnemonic": "F", "isa-class": "GP", "operands": [
                {"index": 0, "kind": "gp-register", "width": 64, "access": "read",
                 "implicit": true, "fixed-register": "RDX"}]}]"#,
        );
        let err = parse_catalog(&doc).unwrap_err();
        assert!(err.to_string().contains("RDX"), "{err}");
    }

    #[test]
    fn implicit_without_fixed_register() {
        let doc = with_instructions(
            r#"[{"id": "IMP", "mnemonic": "I", "isa-class": "GP", "operands": [
                {"index": 0, "kind": "gp-register", "width": 64, "access": "read", "implicit": true}]}]"#,
        );
        assert!(parse_catalog(&doc).is_err());
    }

    #[test]
    fn two_memory_operands_rejected() {
        let doc = with_instructions(
            r#"[{"id": "MM", "mnemonic": "M", "isa-class": "GP", "operands": [
                {"index": 0, "kind": "memory", "width": 64, "access": "write"},
                {"index": 1, "kind": "memory", "width": 64, "access": "read"}]}]"#,
        );
        assert!(parse_catalog(&doc).is_err());
    }

    #[test]
    fn unknown_field_rejected() {
        let doc = with_instructions(
            r#"[{"id": "U", "mnemonic": "U", "isa-class": "GP", "operands": [], "latency": 3}]"#,
        );
        assert!(matches!(parse_catalog(&doc), Err(CatalogError::Parse(_))));
    }

    #[test]
    fn zero_idiom_needs_register_pair() {
        let doc = with_instructions(
            r#"[{"id": "Z", "mnemonic": "Z", "isa-class": "GP", "attributes": ["zero-idiom"], "operands": [
                {"index": 0, "kind": "gp-register", "width": 64, "access": "write"}]}]"#,
        );
        assert!(parse_catalog(&doc).is_err());
    }

    fn plain(id: &str, class: &str, attrs: &str) -> String {
        format!(r#"{{"id": "{id}", "mnemonic": "{id}", "isa-class": "{class}", "attributes": [{attrs}], "operands": []}}"#)
    }

    #[test]
    fn serializing_excluded_from_candidates() {
        let doc = with_instructions(&format!(
            "[{}, {}]",
            plain("ALU", "GP", ""),
            plain("FENCE", "GP", r#""serializing""#)
        ));
        let cat = parse_catalog(&doc).unwrap();
        let ids: Vec<_> = blocking_candidates(&cat, BlockingClass::SseSafe)
            .iter()
            .map(|i| i.id.as_str())
            .collect();
        assert_eq!(ids, ["ALU"]);
    }

    #[test]
    fn plain_alu_all_returned() {
        let doc = with_instructions(&format!(
            "[{}, {}, {}]",
            plain("A", "GP", ""),
            plain("B", "GP", ""),
            plain("C", "GP", "")
        ));
        let cat = parse_catalog(&doc).unwrap();
        assert_eq!(blocking_candidates(&cat, BlockingClass::SseSafe).len(), 3);
    }

    #[test]
    fn avx_filter_drops_sse() {
        let doc = with_instructions(&format!(
            "[{}, {}, {}]",
            plain("G", "GP", ""),
            plain("S", "SSE", ""),
            plain("V", "AVX", "")
        ));
        let cat = parse_catalog(&doc).unwrap();
        let avx: Vec<_> = blocking_candidates(&cat, BlockingClass::AvxSafe)
            .iter()
            .map(|i| i.isa_class)
            .collect();
        assert!(!avx.contains(&IsaClass::Sse));
        assert_eq!(avx, [IsaClass::Gp, IsaClass::Avx]);
        let sse: Vec<_> = blocking_candidates(&cat, BlockingClass::SseSafe)
            .iter()
            .map(|i| i.isa_class)
            .collect();
        assert!(!sse.contains(&IsaClass::Avx));
    }
}
