//! Deterministic register allocation for generated kernels.

use std::collections::{BTreeMap, BTreeSet};

use crate::isa::{Catalog, InstructionDesc, OperandKind, OperandSpec, RegClass};
use crate::kernel::{Binding, Instance};

use super::GenError;

/// GP bases at the end of the class are kept free for the harness.
const RESERVED_GP: usize = 2;

/// Hands out base registers in rotation. When a class runs out, bases are
/// reused round-robin and `pressure` is set.
#[derive(Debug, Clone)]
pub struct RegAlloc<'c> {
    catalog: &'c Catalog,
    pools: BTreeMap<RegClass, Vec<String>>,
    cursor: BTreeMap<RegClass, usize>,
    taken: BTreeSet<String>,
    /// Bases that round-robin reuse must skip.
    pinned: BTreeSet<String>,
    next_slot: u32,
    pub pressure: bool,
}

impl<'c> RegAlloc<'c> {
    /// `avoid` lists registers (any width) that must never be handed out,
    /// typically the fixed operands of the instruction under test.
    pub fn new(catalog: &'c Catalog, avoid: &[&str]) -> Self {
        let avoid: BTreeSet<&str> = avoid.iter().filter_map(|r| catalog.base_of(r)).collect();
        let mut pools = BTreeMap::new();
        for class in [RegClass::Gp, RegClass::Simd, RegClass::Mmx] {
            let mut bases = catalog.bases(class);
            if class == RegClass::Gp {
                bases.truncate(bases.len().saturating_sub(RESERVED_GP));
            }
            let pool: Vec<String> = bases
                .into_iter()
                .filter(|b| !avoid.contains(b))
                .map(str::to_string)
                .collect();
            pools.insert(class, pool);
        }
        RegAlloc {
            catalog,
            pools,
            cursor: BTreeMap::new(),
            taken: BTreeSet::new(),
            pinned: BTreeSet::new(),
            next_slot: 0,
            pressure: false,
        }
    }

    /// Avoids the fixed registers of all given instructions.
    pub fn for_instructions(catalog: &'c Catalog, descs: &[&InstructionDesc]) -> Self {
        let fixed: Vec<&str> = descs
            .iter()
            .flat_map(|d| d.operands.iter())
            .filter_map(|o| o.fixed_register.as_deref())
            .collect();
        Self::new(catalog, &fixed)
    }

    pub fn catalog(&self) -> &'c Catalog {
        self.catalog
    }

    /// Removes a base from future allocation.
    pub fn exclude(&mut self, base: &str) {
        for pool in self.pools.values_mut() {
            pool.retain(|b| b != base);
        }
    }

    /// Keeps `base` out of round-robin reuse, e.g. a register that later
    /// instances keep reading.
    pub fn pin(&mut self, base: &str) {
        self.pinned.insert(base.to_string());
    }

    /// Next base register of the class.
    pub fn fresh(&mut self, class: RegClass) -> Result<String, GenError> {
        let pool = self
            .pools
            .get(&class)
            .filter(|p| !p.is_empty())
            .ok_or(GenError::NoRegisters(class))?;
        if let Some(b) = pool.iter().find(|b| !self.taken.contains(*b)) {
            let b = b.clone();
            self.taken.insert(b.clone());
            return Ok(b);
        }
        self.pressure = true;
        let reusable: Vec<&String> = pool.iter().filter(|b| !self.pinned.contains(*b)).collect();
        let cur = self.cursor.entry(class).or_insert(0);
        let b = if reusable.is_empty() {
            pool[*cur % pool.len()].clone()
        } else {
            reusable[*cur % reusable.len()].clone()
        };
        *cur += 1;
        Ok(b)
    }

    pub fn slot(&mut self) -> u32 {
        let s = self.next_slot;
        self.next_slot += 1;
        s
    }

    /// Binding for the `width`-bit view of `base`.
    pub fn view(&self, base: &str, width: u32) -> Result<Binding, GenError> {
        let name = self
            .catalog
            .view(base, width)
            .ok_or_else(|| GenError::NoView(base.to_string(), width))?;
        Ok(Binding::reg(name, base))
    }

    /// Binding of a register operand on a given base; fixed operands ignore
    /// `base`.
    pub fn bind_reg(&self, op: &OperandSpec, base: &str) -> Result<Binding, GenError> {
        match &op.fixed_register {
            Some(f) => fixed(self.catalog, f),
            None => self.view(base, op.width),
        }
    }
}

pub fn fixed(catalog: &Catalog, name: &str) -> Result<Binding, GenError> {
    let base = catalog
        .base_of(name)
        .ok_or_else(|| GenError::NoView(name.to_string(), 0))?;
    Ok(Binding::reg(name, base))
}

/// Binds one instance where every written register is fresh and read-only
/// registers are shared through `shared` (keyed by operand index).
pub fn bind_independent(
    desc: &InstructionDesc,
    alloc: &mut RegAlloc,
    shared: &mut BTreeMap<usize, String>,
    mem_base: &str,
) -> Result<Instance, GenError> {
    let mut bindings = Vec::with_capacity(desc.operands.len());
    for op in &desc.operands {
        let b = match op.kind {
            OperandKind::Flags => Binding::Flags,
            OperandKind::Immediate => Binding::Imm(1),
            OperandKind::Memory => Binding::Mem {
                slot: alloc.slot(),
                base: mem_base.to_string(),
            },
            _ if op.fixed_register.is_some() => alloc.bind_reg(op, "")?,
            kind => {
                let class = kind.reg_class().expect("register operand");
                let base = if op.writes() {
                    alloc.fresh(class)?
                } else {
                    match shared.get(&op.index) {
                        Some(b) => b.clone(),
                        None => {
                            let b = alloc.fresh(class)?;
                            alloc.pin(&b);
                            shared.insert(op.index, b.clone());
                            b
                        }
                    }
                };
                alloc.bind_reg(op, &base)?
            }
        };
        bindings.push(b);
    }
    Ok(Instance {
        id: desc.id.clone(),
        bindings,
    })
}
