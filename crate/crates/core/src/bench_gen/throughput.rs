//! Throughput kernels and port-usage probes.

use std::collections::{BTreeMap, BTreeSet};

use crate::isa::{Attribute, Catalog, InstructionDesc, OperandKind, RegClass};
use crate::kernel::{Binding, InitTarget, Instance, Kernel, ValueClass};

use super::alloc::{bind_independent, RegAlloc};
use super::library::ChainLibrary;
use super::GenError;

/// Unroll lengths of the throughput kernels.
pub const LENGTHS: [usize; 4] = [1, 2, 4, 8];

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputKernel {
    pub kernel: Kernel,
    /// Instances of the instruction under test per iteration.
    pub length: usize,
    pub with_breakers: bool,
    pub value_class: Option<ValueClass>,
}

fn implicit_rw(desc: &InstructionDesc) -> Vec<usize> {
    desc.operands
        .iter()
        .filter(|o| o.implicit && o.reads() && o.writes() && o.is_dependency())
        .map(|o| o.index)
        .collect()
}

fn breaker(
    desc: &InstructionDesc,
    op: usize,
    catalog: &Catalog,
    lib: &ChainLibrary,
    scratch: &str,
    constant: Option<&str>,
) -> Result<Instance, GenError> {
    let o = &desc.operands[op];
    let missing = |what: &str| GenError::Unchainable(format!("catalog has no {what} instruction"));
    let view = |base: &str, w: u32| {
        catalog
            .view(base, w)
            .map(|n| Binding::reg(n, base))
            .ok_or_else(|| GenError::NoView(base.to_string(), w))
    };
    let (id, bindings) = match o.kind {
        OperandKind::Flags => {
            let id = lib.test.get(&64).ok_or_else(|| missing("TEST r64, r64"))?;
            let r = view(scratch, 64)?;
            (id.clone(), vec![r.clone(), r, Binding::Flags])
        }
        _ => {
            let fixed = o.fixed_register.as_deref().ok_or_else(|| missing("fixed register"))?;
            let base = catalog.base_of(fixed).expect("validated catalog");
            match (o.kind.reg_class(), constant) {
                (Some(RegClass::Gp), Some(c)) => (
                    lib.mov_rr.clone().ok_or_else(|| missing("MOV r64, r64"))?,
                    vec![view(base, 64)?, view(c, 64)?],
                ),
                (Some(RegClass::Gp), None) => (
                    lib.mov_imm.clone().ok_or_else(|| missing("MOV r64, imm"))?,
                    vec![view(base, 64)?, Binding::Imm(0)],
                ),
                (Some(RegClass::Simd), Some(c)) => (
                    lib.movaps.clone().ok_or_else(|| missing("SIMD copy"))?,
                    vec![view(base, 128)?, view(c, 128)?],
                ),
                (Some(RegClass::Simd), None) => {
                    let x = view(base, 128)?;
                    match (&lib.zero_avx, &lib.zero_sse) {
                        (Some(id), _) if desc.is_avx() => (id.clone(), vec![x.clone(), x.clone(), x]),
                        (_, Some(id)) => (id.clone(), vec![x.clone(), x]),
                        _ => return Err(missing("SIMD zero idiom")),
                    }
                }
                _ => return Err(missing("MMX dependency breaker")),
            }
        }
    };
    Ok(Instance { id, bindings })
}

fn divider_init(instances: &[Instance], constant: Option<&str>, class: ValueClass) -> Vec<(InitTarget, ValueClass)> {
    let mut bases: BTreeSet<String> = constant.into_iter().map(str::to_string).collect();
    for inst in instances {
        for b in &inst.bindings {
            if let Some(base) = b.base() {
                bases.insert(base.to_string());
            }
        }
    }
    bases.into_iter().map(|b| (InitTarget::Reg(b), class)).collect()
}

fn one_kernel(
    desc: &InstructionDesc,
    length: usize,
    with_breakers: bool,
    value_class: Option<ValueClass>,
    catalog: &Catalog,
    lib: &ChainLibrary,
) -> Result<ThroughputKernel, GenError> {
    let mut alloc = RegAlloc::for_instructions(catalog, &[desc]);
    let mem_base = alloc.fresh(RegClass::Gp)?;
    let rw = implicit_rw(desc);
    let scratch = if with_breakers { Some(alloc.fresh(RegClass::Gp)?) } else { None };
    let constant = match value_class {
        Some(_) => {
            let class = desc
                .operands
                .iter()
                .find_map(|o| o.kind.reg_class())
                .unwrap_or(RegClass::Gp);
            Some(alloc.fresh(class)?)
        }
        None => None,
    };
    let mut shared = BTreeMap::new();
    let mut instances = Vec::new();
    for _ in 0..length {
        if let Some(scratch) = &scratch {
            for &op in &rw {
                instances.push(breaker(desc, op, catalog, lib, scratch, constant.as_deref())?);
            }
        }
        instances.push(bind_independent(desc, &mut alloc, &mut shared, &mem_base)?);
    }
    let mut init = Vec::new();
    if let Some(class) = value_class {
        init = divider_init(&instances, constant.as_deref(), class);
        for inst in &instances {
            for b in &inst.bindings {
                if let Binding::Mem { slot, .. } = b {
                    init.push((InitTarget::Mem(*slot), class));
                }
            }
        }
    }
    Ok(ThroughputKernel {
        kernel: Kernel {
            instances,
            chain: None,
            init,
            register_pressure: alloc.pressure,
        },
        length,
        with_breakers,
        value_class,
    })
}

/// All throughput kernels for an instruction.
pub fn throughput_kernels(desc: &InstructionDesc, catalog: &Catalog, lib: &ChainLibrary) -> Result<Vec<ThroughputKernel>, GenError> {
    let classes: Vec<Option<ValueClass>> = if desc.has(Attribute::UsesDivider) {
        vec![Some(ValueClass::Fast), Some(ValueClass::Slow)]
    } else {
        vec![None]
    };
    let breaker_modes: &[bool] = if implicit_rw(desc).is_empty() { &[false] } else { &[false, true] };
    let mut out = Vec::new();
    for &class in &classes {
        for &with_breakers in breaker_modes {
            for &length in &LENGTHS {
                out.push(one_kernel(desc, length, with_breakers, class, catalog, lib)?);
            }
        }
    }
    Ok(out)
}

/// Independent copies of the instruction without breakers, used to observe
/// it in isolation.
pub fn isolation_kernel(desc: &InstructionDesc, length: usize, catalog: &Catalog, lib: &ChainLibrary) -> Result<Kernel, GenError> {
    Ok(one_kernel(desc, length, false, None, catalog, lib)?.kernel)
}

/// `block_rep` independent copies of the blocking instruction followed by
/// one instance of the instruction under test.
pub fn port_probe(desc: &InstructionDesc, blocker: &InstructionDesc, block_rep: usize, catalog: &Catalog) -> Result<Kernel, GenError> {
    let mut alloc = RegAlloc::for_instructions(catalog, &[desc, blocker]);
    let mem_base = alloc.fresh(RegClass::Gp)?;
    let mut shared = BTreeMap::new();
    let target = bind_independent(desc, &mut alloc, &mut shared, &mem_base)?;
    for b in &target.bindings {
        if let Some(base) = b.base() {
            alloc.exclude(base);
        }
    }
    let mut shared = BTreeMap::new();
    let mut instances = Vec::with_capacity(block_rep + 1);
    for _ in 0..block_rep {
        instances.push(bind_independent(blocker, &mut alloc, &mut shared, &mem_base)?);
    }
    instances.push(target);
    Ok(Kernel {
        instances,
        chain: None,
        init: Vec::new(),
        register_pressure: alloc.pressure,
    })
}
