//! Straight-line benchmark kernels and their assembler-like listing.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::isa::{Catalog, OperandKind};
use crate::rational::{self, Rational};

/// Value class of an operand value, relevant for the divider whose latency
/// depends on the operands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueClass {
    Fast,
    Slow,
}

impl ValueClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ValueClass::Fast => "fast",
            ValueClass::Slow => "slow",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fast" => Some(ValueClass::Fast),
            "slow" => Some(ValueClass::Slow),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Binding {
    /// Register by name, with the architectural base register it aliases.
    Reg { name: String, base: String },
    /// Memory slot addressed through a single base register.
    Mem { slot: u32, base: String },
    Imm(i64),
    Flags,
}

impl Binding {
    pub fn reg(name: &str, base: &str) -> Self {
        Binding::Reg {
            name: name.to_string(),
            base: base.to_string(),
        }
    }

    pub fn base(&self) -> Option<&str> {
        match self {
            Binding::Reg { base, .. } => Some(base),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instance {
    pub id: String,
    /// One binding per operand, indexed by operand index.
    pub bindings: Vec<Binding>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum InitTarget {
    Reg(String),
    Mem(u32),
}

/// How a latency kernel is turned into a per-link latency.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChainMeta {
    pub chain_instrs: Vec<String>,
    /// Instances of the instruction under test per kernel iteration.
    pub occurrences: usize,
    /// Chain latency per link, subtracted after dividing by `occurrences`.
    pub subtract: Rational,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Kernel {
    pub instances: Vec<Instance>,
    pub chain: Option<ChainMeta>,
    pub init: Vec<(InitTarget, ValueClass)>,
    /// Set when register allocation had to reuse registers.
    pub register_pressure: bool,
}

impl Kernel {
    pub fn new(instances: Vec<Instance>) -> Self {
        Kernel {
            instances,
            ..Kernel::default()
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Checks every binding against its operand description.
    pub fn validate(&self, catalog: &Catalog) -> Result<(), String> {
        let mut slots = BTreeSet::new();
        for (target, _) in &self.init {
            if let InitTarget::Mem(slot) = target {
                if !slots.insert(*slot) {
                    return Err(format!("memory slot {slot} initialized twice"));
                }
            }
        }
        for (pos, inst) in self.instances.iter().enumerate() {
            let desc = catalog
                .get(&inst.id)
                .ok_or_else(|| format!("instance {pos}: unknown instruction `{}`", inst.id))?;
            if desc.operands.len() != inst.bindings.len() {
                return Err(format!("instance {pos} ({}): operand count mismatch", inst.id));
            }
            for (op, binding) in desc.operands.iter().zip(&inst.bindings) {
                let ok = match (op.kind, binding) {
                    (OperandKind::Flags, Binding::Flags) => true,
                    (OperandKind::Immediate, Binding::Imm(_)) => true,
                    (OperandKind::Memory, Binding::Mem { base, .. }) => {
                        matches!(catalog.register(base), Some((_, r)) if r.width == 64 && r.base.is_none())
                    }
                    (kind, Binding::Reg { name, base }) if kind.is_register() => {
                        match catalog.register(name) {
                            Some((class, reg)) => {
                                Some(class) == kind.reg_class()
                                    && reg.width == op.width
                                    && reg.base() == base
                                    && op.fixed_register.as_ref().map_or(true, |f| f == name)
                            }
                            None => false,
                        }
                    }
                    _ => false,
                };
                if !ok {
                    return Err(format!(
                        "instance {pos} ({}): operand {} bound to {binding} does not match {} width {}",
                        inst.id,
                        op.index,
                        op.kind.as_str(),
                        op.width
                    ));
                }
            }
        }
        Ok(())
    }

    /// Assembler-like listing in Intel operand order. Implicit operands are
    /// omitted, as an assembler would.
    pub fn listing(&self, catalog: &Catalog) -> String {
        let mut out = String::new();
        if let Some(chain) = &self.chain {
            let _ = writeln!(
                out,
                "; chain: {} occurrences={} subtract={}",
                if chain.chain_instrs.is_empty() {
                    "-".to_string()
                } else {
                    chain.chain_instrs.join(",")
                },
                chain.occurrences,
                rational::format(&chain.subtract)
            );
        }
        for (target, class) in &self.init {
            let t = match target {
                InitTarget::Reg(r) => r.clone(),
                InitTarget::Mem(s) => format!("[slot{s}]"),
            };
            let _ = writeln!(out, "; init {t} {}", class.as_str());
        }
        for inst in &self.instances {
            let (mnemonic, explicit): (&str, Vec<usize>) = match catalog.get(&inst.id) {
                Some(d) => (
                    d.mnemonic.as_str(),
                    d.explicit_operands().map(|o| o.index).collect(),
                ),
                None => (inst.id.as_str(), (0..inst.bindings.len()).collect()),
            };
            let ops: Vec<String> = explicit
                .iter()
                .filter_map(|&i| inst.bindings.get(i))
                .map(|b| b.to_string())
                .collect();
            if ops.is_empty() {
                let _ = writeln!(out, "{mnemonic}");
            } else {
                let _ = writeln!(out, "{mnemonic} {}", ops.join(", "));
            }
        }
        out
    }
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Binding::Reg { name, .. } => f.write_str(name),
            Binding::Mem { base, slot } => write!(f, "[{base}+slot{slot}]"),
            Binding::Imm(v) => write!(f, "{v}"),
            Binding::Flags => f.write_str("FLAGS"),
        }
    }
}
