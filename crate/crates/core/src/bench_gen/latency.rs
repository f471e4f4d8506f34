//! Latency kernels: one kernel iteration is the dependency breakers, the
//! instruction under test and a chain that leads from the destination back
//! to the source.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::isa::{Access, Attribute, Catalog, InstructionDesc, OperandKind, OperandSpec, RegClass};
use crate::kernel::{Binding, ChainMeta, InitTarget, Instance, Kernel, ValueClass};
use crate::rational::{int, Rational};

use super::alloc::RegAlloc;
use super::library::{ChainKey, ChainLibrary, ShuffleKind};
use super::GenError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatencyKind {
    Exact,
    UpperBound,
    RoundTrip,
    ZeroIdiomFastPath,
}

impl LatencyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LatencyKind::Exact => "exact",
            LatencyKind::UpperBound => "upper-bound",
            LatencyKind::RoundTrip => "round-trip",
            LatencyKind::ZeroIdiomFastPath => "zero-idiom-fast-path",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "exact" => LatencyKind::Exact,
            "upper-bound" => LatencyKind::UpperBound,
            "round-trip" => LatencyKind::RoundTrip,
            "zero-idiom-fast-path" => LatencyKind::ZeroIdiomFastPath,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyKernel {
    pub kernel: Kernel,
    pub kind: LatencyKind,
    /// Short label such as `movsx-r32`, `same-register` or `slow`.
    pub variant: String,
    pub same_register: bool,
    pub value_class: Option<ValueClass>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LatencyPlan {
    Kernels(Vec<LatencyKernel>),
    Unchainable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Loc {
    Reg(RegClass),
    Mem,
    Flags,
}

fn loc(op: &OperandSpec) -> Loc {
    match op.kind {
        OperandKind::Memory => Loc::Mem,
        OperandKind::Flags => Loc::Flags,
        k => Loc::Reg(k.reg_class().expect("register operand")),
    }
}

fn unchainable(reason: impl Into<String>) -> GenError {
    GenError::Unchainable(reason.into())
}

fn need<'l>(id: &'l Option<String>, what: &str) -> Result<&'l str, GenError> {
    id.as_deref()
        .ok_or_else(|| unchainable(format!("catalog has no {what} instruction")))
}

fn location_key(b: &Binding) -> Option<String> {
    match b {
        Binding::Reg { base, .. } => Some(format!("r:{base}")),
        Binding::Mem { slot, .. } => Some(format!("m:{slot}")),
        Binding::Flags => Some("flags".into()),
        Binding::Imm(_) => None,
    }
}

struct Build<'a> {
    catalog: &'a Catalog,
    lib: &'a ChainLibrary,
    desc: &'a InstructionDesc,
    alloc: RegAlloc<'a>,
    mem_base: Option<String>,
    ops: Vec<Option<Binding>>,
    src: usize,
    chain: Vec<Instance>,
    subtract: Rational,
    /// Constant register used by divider kernels, with the value class.
    divider: Option<(String, ValueClass)>,
}

impl<'a> Build<'a> {
    fn new(catalog: &'a Catalog, lib: &'a ChainLibrary, desc: &'a InstructionDesc, src: usize) -> Self {
        Build {
            catalog,
            lib,
            desc,
            alloc: RegAlloc::for_instructions(catalog, &[desc]),
            mem_base: None,
            ops: vec![None; desc.operands.len()],
            src,
            chain: Vec::new(),
            subtract: int(0),
            divider: None,
        }
    }

    fn op(&self, i: usize) -> &'a OperandSpec {
        &self.desc.operands[i]
    }

    fn mem_base(&mut self) -> Result<String, GenError> {
        if self.mem_base.is_none() {
            self.mem_base = Some(self.alloc.fresh(RegClass::Gp)?);
        }
        Ok(self.mem_base.clone().unwrap())
    }

    /// Binds a register operand and returns its base.
    fn reg(&mut self, i: usize) -> Result<String, GenError> {
        if let Some(b) = &self.ops[i] {
            return Ok(b.base().expect("register binding").to_string());
        }
        let op = self.op(i);
        let base = match &op.fixed_register {
            Some(f) => self.catalog.base_of(f).expect("validated").to_string(),
            None => self.alloc.fresh(loc_class(op))?,
        };
        self.ops[i] = Some(self.alloc.bind_reg(op, &base)?);
        Ok(base)
    }

    fn reg_on(&mut self, i: usize, base: &str) -> Result<(), GenError> {
        let op = self.op(i);
        if let Some(f) = &op.fixed_register {
            if self.catalog.base_of(f) != Some(base) {
                return Err(unchainable("fixed operand cannot share a register"));
            }
        }
        self.ops[i] = Some(self.alloc.bind_reg(op, base)?);
        Ok(())
    }

    /// Binds a memory operand and returns (slot, base).
    fn mem(&mut self, i: usize) -> Result<(u32, String), GenError> {
        if let Some(Binding::Mem { slot, base }) = &self.ops[i] {
            return Ok((*slot, base.clone()));
        }
        let base = self.mem_base()?;
        let slot = self.alloc.slot();
        self.ops[i] = Some(Binding::Mem { slot, base: base.clone() });
        Ok((slot, base))
    }

    fn view(&self, base: &str, width: u32) -> Result<Binding, GenError> {
        self.alloc.view(base, width)
    }

    fn push(&mut self, id: &str, bindings: Vec<Binding>) {
        self.chain.push(Instance {
            id: id.to_string(),
            bindings,
        });
    }

    fn sub(&mut self, key: ChainKey) {
        self.subtract += self.lib.latency(key);
    }

    /// MOVSX `dst_base` (64-bit) from a narrow view of `src_base`.
    fn movsx(&mut self, dst_base: &str, src_base: &str, src_width: u32) -> Result<(), GenError> {
        let w = src_width.min(32);
        let id = self
            .lib
            .movsx
            .get(&w)
            .cloned()
            .ok_or_else(|| unchainable(format!("catalog has no sign extension from r{w}")))?;
        let b = vec![self.view(dst_base, 64)?, self.view(src_base, w)?];
        self.push(&id, b);
        self.sub(ChainKey::Movsx(w));
        Ok(())
    }

    /// Shuffle `dst_base` from `src_base` (SIMD or MMX).
    fn shuffle(&mut self, class: RegClass, dst_base: &str, src_base: &str, kind: ShuffleKind) -> Result<ChainKey, GenError> {
        if class == RegClass::Mmx {
            let id = need(&self.lib.mmx_shuffle, "MMX shuffle")?.to_string();
            let b = vec![self.view(dst_base, 64)?, self.view(src_base, 64)?, Binding::Imm(0)];
            self.push(&id, b);
            self.sub(ChainKey::MmxShuffle);
            return Ok(ChainKey::MmxShuffle);
        }
        let want_avx = self.desc.is_avx();
        let avx = if self.lib.shuffles.contains_key(&(kind, want_avx)) {
            want_avx
        } else {
            !want_avx
        };
        let id = self
            .lib
            .shuffles
            .get(&(kind, avx))
            .cloned()
            .ok_or_else(|| unchainable("catalog has no shuffle instruction"))?;
        let d = self.view(dst_base, 128)?;
        let s = self.view(src_base, 128)?;
        let n = self.catalog.get(&id).map_or(0, |x| x.operands.len());
        let b = if n == 4 {
            vec![d, s.clone(), s, Binding::Imm(0)]
        } else {
            vec![d, s, Binding::Imm(0)]
        };
        self.push(&id, b);
        let key = ChainKey::Shuffle(kind, avx);
        self.sub(key);
        Ok(key)
    }

    fn double_xor(&mut self, target: &str, via: &str) -> Result<(), GenError> {
        let id = need(&self.lib.xor, "XOR r64, r64")?.to_string();
        for _ in 0..2 {
            let b = vec![self.view(target, 64)?, self.view(via, 64)?, Binding::Flags];
            self.push(&id, b);
        }
        self.sub(ChainKey::DoubleXor);
        Ok(())
    }

    fn and_or(&mut self, class: RegClass, target: &str, constant: &str) -> Result<(), GenError> {
        let (and, or, width, key) = match class {
            RegClass::Gp => (&self.lib.and, &self.lib.or, 64, ChainKey::AndOr),
            RegClass::Simd => (&self.lib.andps, &self.lib.orps, 128, ChainKey::AndOrSimd),
            RegClass::Mmx => return Err(unchainable("no MMX value-class chain")),
        };
        let and = need(and, "AND")?.to_string();
        let or = need(or, "OR")?.to_string();
        for id in [and, or] {
            let mut b = vec![self.view(target, width)?, self.view(constant, width)?];
            if self.catalog.get(&id).map_or(0, |d| d.operands.len()) == 3 {
                b.push(Binding::Flags);
            }
            self.push(&id, b);
        }
        self.sub(key);
        Ok(())
    }

    fn breaker(&mut self, binding: &Binding) -> Result<Instance, GenError> {
        let lib = self.lib;
        let inst = |id: &str, bindings: Vec<Binding>| Instance {
            id: id.to_string(),
            bindings,
        };
        match binding {
            Binding::Flags => {
                let id = lib
                    .test
                    .get(&64)
                    .ok_or_else(|| unchainable("catalog has no TEST r64, r64"))?;
                let scratch = self.alloc.fresh(RegClass::Gp)?;
                let r = self.view(&scratch, 64)?;
                Ok(inst(id, vec![r.clone(), r, Binding::Flags]))
            }
            Binding::Mem { slot, base } => {
                let id = need(&lib.store_imm, "MOV m64, imm")?;
                Ok(inst(
                    id,
                    vec![Binding::Mem { slot: *slot, base: base.clone() }, Binding::Imm(0)],
                ))
            }
            Binding::Reg { base, .. } => {
                let (class, _) = self.catalog.register(base).expect("bound register");
                match (class, &self.divider) {
                    (RegClass::Gp, Some((c, _))) => {
                        let id = need(&lib.mov_rr, "MOV r64, r64")?;
                        Ok(inst(id, vec![self.view(base, 64)?, self.view(c, 64)?]))
                    }
                    (RegClass::Gp, None) => {
                        let id = need(&lib.mov_imm, "MOV r64, imm")?;
                        Ok(inst(id, vec![self.view(base, 64)?, Binding::Imm(0)]))
                    }
                    (RegClass::Simd, Some((c, _))) => {
                        let id = need(&lib.movaps, "SIMD register copy")?;
                        Ok(inst(id, vec![self.view(base, 128)?, self.view(c, 128)?]))
                    }
                    (RegClass::Simd, None) => {
                        let x = self.view(base, 128)?;
                        if self.desc.is_avx() && lib.zero_avx.is_some() {
                            let id = lib.zero_avx.as_deref().unwrap();
                            Ok(inst(id, vec![x.clone(), x.clone(), x]))
                        } else {
                            let id = need(&lib.zero_sse, "SIMD zero idiom")?;
                            Ok(inst(id, vec![x.clone(), x]))
                        }
                    }
                    (RegClass::Mmx, _) => Err(unchainable("no dependency breaker for MMX registers")),
                }
            }
            Binding::Imm(_) => unreachable!("immediates carry no dependency"),
        }
    }

    fn finish(mut self, kind: LatencyKind, variant: impl Into<String>, same_register: bool) -> Result<LatencyKernel, GenError> {
        for i in 0..self.ops.len() {
            if self.ops[i].is_some() {
                continue;
            }
            let op = self.op(i);
            let b = match op.kind {
                OperandKind::Flags => Binding::Flags,
                OperandKind::Immediate => Binding::Imm(1),
                OperandKind::Memory => {
                    self.mem(i)?;
                    continue;
                }
                _ => {
                    self.reg(i)?;
                    continue;
                }
            };
            self.ops[i] = Some(b);
        }
        let bindings: Vec<Binding> = self.ops.iter().map(|b| b.clone().unwrap()).collect();
        let mut written = BTreeSet::new();
        for inst in &self.chain {
            let d = self
                .catalog
                .get(&inst.id)
                .ok_or_else(|| GenError::UnknownInstruction(inst.id.clone()))?;
            for (op, b) in d.operands.iter().zip(&inst.bindings) {
                if op.writes() {
                    written.extend(location_key(b));
                }
            }
        }
        let src_key = location_key(&bindings[self.src]);
        let mut breakers = Vec::new();
        let mut seen = BTreeSet::new();
        for (op, b) in self.desc.operands.iter().zip(&bindings) {
            if op.index == self.src || !op.reads() || !op.is_dependency() {
                continue;
            }
            let key = location_key(b);
            if key == src_key || !seen.insert(key.clone()) {
                continue;
            }
            let chained = key.as_ref().is_some_and(|k| written.contains(k));
            if op.access == Access::ReadWrite || chained {
                breakers.push(self.breaker(b)?);
            }
        }
        let mut instances = breakers;
        instances.push(Instance {
            id: self.desc.id.clone(),
            bindings,
        });
        let chain_instrs: Vec<String> = self.chain.iter().map(|i| i.id.clone()).collect();
        instances.append(&mut self.chain);
        let mut init = Vec::new();
        if let Some((_, class)) = &self.divider {
            let mut bases = BTreeSet::new();
            for inst in &instances {
                for b in &inst.bindings {
                    if let Some(base) = b.base() {
                        bases.insert(base.to_string());
                    }
                }
            }
            init = bases.into_iter().map(|b| (InitTarget::Reg(b), *class)).collect();
        }
        let kernel = Kernel {
            instances,
            chain: Some(ChainMeta {
                chain_instrs,
                occurrences: 1,
                subtract: self.subtract,
            }),
            init,
            register_pressure: self.alloc.pressure,
        };
        Ok(LatencyKernel {
            kernel,
            kind,
            variant: variant.into(),
            same_register,
            value_class: self.divider.map(|(_, c)| c),
        })
    }
}

fn loc_class(op: &OperandSpec) -> RegClass {
    op.kind.reg_class().expect("register operand")
}

/// Instructions that read one register of class `from` and write one
/// register of class `to`, usable to close a cross-class chain.
pub fn cross_class_candidates(catalog: &Catalog, from: RegClass, to: RegClass) -> Vec<&InstructionDesc> {
    const EXCLUDED: [Attribute; 5] = [
        Attribute::UsesDivider,
        Attribute::Serializing,
        Attribute::System,
        Attribute::PauseLike,
        Attribute::ControlFlowOnRegister,
    ];
    catalog
        .instructions()
        .iter()
        .filter(|d| !EXCLUDED.iter().any(|a| d.has(*a)))
        .filter(|d| d.operands.iter().all(|o| o.fixed_register.is_none()))
        .filter(|d| {
            let mut reads = 0;
            let mut writes = 0;
            for o in &d.operands {
                match o.kind {
                    OperandKind::Immediate => {}
                    OperandKind::Flags if !o.reads() => {}
                    OperandKind::Flags | OperandKind::Memory | OperandKind::AgenBase => return false,
                    k => {
                        let c = k.reg_class();
                        match o.access {
                            Access::Read if c == Some(from) => reads += 1,
                            Access::Write if c == Some(to) => writes += 1,
                            _ => return false,
                        }
                    }
                }
            }
            reads == 1 && writes == 1
        })
        .collect()
}

/// Binds a cross-class instruction: writes `dst_base`, reads `src_base`.
fn cross_instance(b: &Build, j: &InstructionDesc, dst_base: &str, src_base: &str) -> Result<Vec<Binding>, GenError> {
    j.operands
        .iter()
        .map(|o| match o.kind {
            OperandKind::Immediate => Ok(Binding::Imm(0)),
            OperandKind::Flags => Ok(Binding::Flags),
            _ if o.writes() => b.view(dst_base, o.width),
            _ => b.view(src_base, o.width),
        })
        .collect()
}

/// Generates the latency kernels for the operand pair `src -> dst`.
pub fn latency_kernels(
    desc: &InstructionDesc,
    src: usize,
    dst: usize,
    catalog: &Catalog,
    lib: &ChainLibrary,
) -> Result<LatencyPlan, GenError> {
    let (s, d) = match (desc.operands.get(src), desc.operands.get(dst)) {
        (Some(s), Some(d)) if s.reads() && s.is_dependency() && d.writes() => (s, d),
        _ => return Err(GenError::NotAPair { src, dst }),
    };
    let mut kernels = Vec::new();
    let mut reasons = Vec::new();
    let mut attempt = |r: Result<Vec<LatencyKernel>, GenError>| -> Result<(), GenError> {
        match r {
            Ok(ks) => kernels.extend(ks),
            Err(GenError::Unchainable(why)) => reasons.push(why),
            Err(e) => return Err(e),
        }
        Ok(())
    };
    let divider = desc.has(Attribute::UsesDivider);
    match (loc(s), loc(d)) {
        (_, Loc::Flags) if src != dst => {
            return Ok(LatencyPlan::Unchainable(
                "a flags result cannot be chained back to a register or memory source".into(),
            ))
        }
        (Loc::Reg(a), Loc::Reg(b)) if divider && a == b => {
            for class in [ValueClass::Fast, ValueClass::Slow] {
                attempt(divider_kernel(desc, src, dst, a, class, catalog, lib).map(|k| vec![k]))?;
            }
        }
        _ if src == dst => attempt(self_chain(desc, src, catalog, lib).map(|k| vec![k]))?,
        (Loc::Reg(a), Loc::Reg(b)) if a == b => {
            attempt(same_class(desc, src, dst, a, catalog, lib))?;
            attempt(same_register(desc, src, dst, catalog, lib).map(|k| vec![k]))?;
        }
        (Loc::Reg(a), Loc::Reg(b)) => attempt(cross_class(desc, src, dst, a, b, catalog, lib))?,
        (Loc::Mem, Loc::Reg(b)) => attempt(mem_to_reg(desc, src, dst, b, catalog, lib))?,
        (Loc::Flags, Loc::Reg(b)) => {
            attempt(flags_to_reg(desc, src, dst, b, catalog, lib).map(|k| vec![k]))?
        }
        (Loc::Reg(a), Loc::Mem) => attempt(reg_to_mem(desc, src, dst, a, catalog, lib).map(|k| vec![k]))?,
        (Loc::Mem, Loc::Mem) | (Loc::Flags, Loc::Mem) => {
            reasons.push("no chain from a memory destination back to this source".into())
        }
        (_, Loc::Flags) => unreachable!(),
    }
    if kernels.is_empty() {
        return Ok(LatencyPlan::Unchainable(reasons.join("; ")));
    }
    Ok(LatencyPlan::Kernels(kernels))
}

fn self_chain(desc: &InstructionDesc, i: usize, catalog: &Catalog, lib: &ChainLibrary) -> Result<LatencyKernel, GenError> {
    let mut b = Build::new(catalog, lib, desc, i);
    match loc(&desc.operands[i]) {
        Loc::Reg(_) => {
            b.reg(i)?;
            b.finish(LatencyKind::Exact, "self", false)
        }
        Loc::Flags => {
            b.ops[i] = Some(Binding::Flags);
            b.finish(LatencyKind::Exact, "self", false)
        }
        Loc::Mem => {
            b.mem(i)?;
            b.finish(LatencyKind::RoundTrip, "self", false)
        }
    }
}

fn same_class(
    desc: &InstructionDesc,
    src: usize,
    dst: usize,
    class: RegClass,
    catalog: &Catalog,
    lib: &ChainLibrary,
) -> Result<Vec<LatencyKernel>, GenError> {
    match class {
        RegClass::Gp => {
            let mut b = Build::new(catalog, lib, desc, src);
            let bs = b.reg(src)?;
            let bd = b.reg(dst)?;
            let w = desc.operands[dst].width.min(32);
            b.movsx(&bs, &bd, w)?;
            let name = ChainKey::Movsx(w).name();
            Ok(vec![b.finish(LatencyKind::Exact, name, false)?])
        }
        RegClass::Simd | RegClass::Mmx => {
            let kinds: &[ShuffleKind] = if class == RegClass::Simd {
                &[ShuffleKind::Int, ShuffleKind::Fp]
            } else {
                &[ShuffleKind::Int]
            };
            let mut out = Vec::new();
            let mut last = None;
            for &kind in kinds {
                let mut b = Build::new(catalog, lib, desc, src);
                let bs = b.reg(src)?;
                let bd = b.reg(dst)?;
                let key = match b.shuffle(class, &bs, &bd, kind) {
                    Ok(key) => key,
                    Err(e) => {
                        last = Some(e);
                        continue;
                    }
                };
                out.push(b.finish(LatencyKind::Exact, key.name(), false)?);
            }
            if out.is_empty() {
                return Err(last.unwrap_or_else(|| unchainable("no shuffle chain")));
            }
            Ok(out)
        }
    }
}

fn same_register(desc: &InstructionDesc, src: usize, dst: usize, catalog: &Catalog, lib: &ChainLibrary) -> Result<LatencyKernel, GenError> {
    let (s, d) = (&desc.operands[src], &desc.operands[dst]);
    if s.fixed_register.is_some() && d.fixed_register.is_some() {
        return Err(unchainable("both operands are fixed"));
    }
    let mut b = Build::new(catalog, lib, desc, src);
    let base = if d.fixed_register.is_some() { b.reg(dst)? } else { b.reg(src)? };
    b.reg_on(src, &base)?;
    b.reg_on(dst, &base)?;
    // Other explicit operands of the same class join as well, so that
    // idioms like `VXORPS X, X, X` are exercised.
    let class = s.kind.reg_class();
    for op in desc.explicit_operands() {
        if op.index != src && op.index != dst && op.fixed_register.is_none() && op.kind.reg_class() == class {
            b.reg_on(op.index, &base)?;
        }
    }
    let kind = if desc.has(Attribute::ZeroIdiom) {
        LatencyKind::ZeroIdiomFastPath
    } else {
        LatencyKind::Exact
    };
    b.finish(kind, "same-register", true)
}

fn cross_class(
    desc: &InstructionDesc,
    src: usize,
    dst: usize,
    from: RegClass,
    to: RegClass,
    catalog: &Catalog,
    lib: &ChainLibrary,
) -> Result<Vec<LatencyKernel>, GenError> {
    let candidates = cross_class_candidates(catalog, to, from);
    if candidates.is_empty() {
        return Err(unchainable(format!("no instruction moves {to} back to {from}")));
    }
    let mut out = Vec::new();
    for j in candidates {
        let mut b = Build::new(catalog, lib, desc, src);
        let bs = b.reg(src)?;
        let bd = b.reg(dst)?;
        let bindings = cross_instance(&b, j, &bs, &bd)?;
        b.push(&j.id, bindings);
        b.subtract += int(1);
        out.push(b.finish(LatencyKind::UpperBound, format!("via {}", j.id), false)?);
    }
    Ok(out)
}

fn mem_to_reg(
    desc: &InstructionDesc,
    src: usize,
    dst: usize,
    to: RegClass,
    catalog: &Catalog,
    lib: &ChainLibrary,
) -> Result<Vec<LatencyKernel>, GenError> {
    let d = &desc.operands[dst];
    if to == RegClass::Gp {
        let mut b = Build::new(catalog, lib, desc, src);
        if d.width == 64 && d.access == Access::Write && d.fixed_register.is_none() {
            let (_, ra) = b.mem(src)?;
            b.reg_on(dst, &ra)?;
            return Ok(vec![b.finish(LatencyKind::Exact, "self-addressing", false)?]);
        }
        let (_, ra) = b.mem(src)?;
        let bd = b.reg(dst)?;
        let via = if d.width < 32 {
            let t = b.alloc.fresh(RegClass::Gp)?;
            b.movsx(&t, &bd, d.width)?;
            t
        } else {
            bd
        };
        b.double_xor(&ra, &via)?;
        return Ok(vec![b.finish(LatencyKind::Exact, "double-xor", false)?]);
    }
    let candidates = cross_class_candidates(catalog, to, RegClass::Gp);
    if candidates.is_empty() {
        return Err(unchainable(format!("no instruction moves {to} to a general-purpose register")));
    }
    let mut out = Vec::new();
    for j in candidates {
        let mut b = Build::new(catalog, lib, desc, src);
        let (_, ra) = b.mem(src)?;
        let bd = b.reg(dst)?;
        let t = b.alloc.fresh(RegClass::Gp)?;
        let bindings = cross_instance(&b, j, &t, &bd)?;
        b.push(&j.id, bindings);
        b.subtract += int(1);
        b.double_xor(&ra, &t)?;
        out.push(b.finish(LatencyKind::UpperBound, format!("via {} + double-xor", j.id), false)?);
    }
    Ok(out)
}

fn flags_to_reg(
    desc: &InstructionDesc,
    src: usize,
    dst: usize,
    to: RegClass,
    catalog: &Catalog,
    lib: &ChainLibrary,
) -> Result<LatencyKernel, GenError> {
    if to != RegClass::Gp {
        return Err(unchainable("no chain from a non-GP register back to flags"));
    }
    let mut b = Build::new(catalog, lib, desc, src);
    b.ops[src] = Some(Binding::Flags);
    let bd = b.reg(dst)?;
    let w = desc.operands[dst].width;
    let (id, w) = match lib.test.get(&w) {
        Some(id) => (id.clone(), w),
        None => (
            lib.test.get(&64).cloned().ok_or_else(|| unchainable("catalog has no TEST"))?,
            64,
        ),
    };
    let r = b.view(&bd, w)?;
    b.push(&id, vec![r.clone(), r, Binding::Flags]);
    b.sub(ChainKey::Test);
    b.finish(LatencyKind::Exact, format!("test-r{w}"), false)
}

fn reg_to_mem(
    desc: &InstructionDesc,
    src: usize,
    dst: usize,
    from: RegClass,
    catalog: &Catalog,
    lib: &ChainLibrary,
) -> Result<LatencyKernel, GenError> {
    let load = lib
        .loads
        .get(&from)
        .cloned()
        .ok_or_else(|| unchainable(format!("catalog has no load into {from} registers")))?;
    let mut b = Build::new(catalog, lib, desc, src);
    let bs = b.reg(src)?;
    let (slot, ra) = b.mem(dst)?;
    let width = catalog
        .get(&load)
        .and_then(|l| l.operands.first())
        .map_or(64, |o| o.width);
    let r = b.view(&bs, width)?;
    b.push(&load, vec![r, Binding::Mem { slot, base: ra }]);
    b.finish(LatencyKind::RoundTrip, "store-load", false)
}

fn divider_kernel(
    desc: &InstructionDesc,
    src: usize,
    dst: usize,
    class: RegClass,
    value: ValueClass,
    catalog: &Catalog,
    lib: &ChainLibrary,
) -> Result<LatencyKernel, GenError> {
    let mut b = Build::new(catalog, lib, desc, src);
    let constant = b.alloc.fresh(class)?;
    b.divider = Some((constant.clone(), value));
    let bs = b.reg(src)?;
    let bd = b.reg(dst)?;
    if src != dst {
        match class {
            RegClass::Gp => b.movsx(&bs, &bd, desc.operands[dst].width)?,
            _ => {
                b.shuffle(class, &bs, &bd, ShuffleKind::Fp)?;
            }
        }
    }
    b.and_or(class, &bs, &constant)?;
    b.finish(LatencyKind::Exact, value.as_str(), false)
}

/// Self-chain kernels used to calibrate chain latencies.
pub fn calibration_kernels(catalog: &Catalog, lib: &ChainLibrary) -> Vec<(ChainKey, Kernel)> {
    let mut out = Vec::new();
    let mut alloc = RegAlloc::new(catalog, &[]);
    let mut gp = || alloc.fresh(RegClass::Gp).ok();
    let (Some(a), Some(c)) = (gp(), gp()) else {
        return out;
    };
    let view = |base: &str, w: u32| catalog.view(base, w).map(|n| Binding::reg(n, base));
    let single = |id: &str, bindings: Option<Vec<Binding>>| {
        bindings.map(|b| {
            Kernel::new(vec![Instance {
                id: id.to_string(),
                bindings: b,
            }])
        })
    };
    for (w, id) in &lib.movsx {
        let b = (|| Some(vec![view(&a, 64)?, view(&a, *w)?]))();
        out.extend(single(id, b).map(|k| (ChainKey::Movsx(*w), k)));
    }
    let simd: Vec<&str> = catalog.bases(RegClass::Simd);
    if let (Some(x), Some(y)) = (simd.first(), simd.get(1)) {
        for ((kind, avx), id) in &lib.shuffles {
            let n = catalog.get(id).map_or(0, |d| d.operands.len());
            let b = (|| {
                let v = view(x, 128)?;
                Some(if n == 4 {
                    vec![v.clone(), v.clone(), v, Binding::Imm(0)]
                } else {
                    vec![v.clone(), v, Binding::Imm(0)]
                })
            })();
            out.extend(single(id, b).map(|k| (ChainKey::Shuffle(*kind, *avx), k)));
        }
        if let (Some(and), Some(or)) = (&lib.andps, &lib.orps) {
            let b = (|| Some(vec![view(x, 128)?, view(y, 128)?]))();
            if let Some(b) = b {
                let k = Kernel::new(vec![
                    Instance { id: and.clone(), bindings: b.clone() },
                    Instance { id: or.clone(), bindings: b },
                ]);
                out.push((ChainKey::AndOrSimd, k));
            }
        }
    }
    if let Some(m) = catalog.bases(RegClass::Mmx).first() {
        if let Some(id) = &lib.mmx_shuffle {
            let b = (|| Some(vec![view(m, 64)?, view(m, 64)?, Binding::Imm(0)]))();
            out.extend(single(id, b).map(|k| (ChainKey::MmxShuffle, k)));
        }
    }
    let pair = |first: &Option<String>, second: &Option<String>| -> Option<Kernel> {
        let b = vec![view(&a, 64)?, view(&c, 64)?, Binding::Flags];
        Some(Kernel::new(vec![
            Instance { id: first.clone()?, bindings: b.clone() },
            Instance { id: second.clone()?, bindings: b },
        ]))
    };
    out.extend(pair(&lib.xor, &lib.xor).map(|k| (ChainKey::DoubleXor, k)));
    out.extend(pair(&lib.and, &lib.or).map(|k| (ChainKey::AndOr, k)));
    out
}

/// Links in a zero-idiom probe chain.
pub const ZERO_IDIOM_LINKS: usize = 8;

fn link_instance(link: &InstructionDesc, base: &str, alloc: &RegAlloc) -> Result<Instance, GenError> {
    let bindings = link
        .operands
        .iter()
        .map(|o| match o.kind {
            OperandKind::Flags => Ok(Binding::Flags),
            OperandKind::Immediate => Ok(Binding::Imm(1)),
            _ => alloc.bind_reg(o, base),
        })
        .collect::<Result<_, _>>()?;
    Ok(Instance {
        id: link.id.clone(),
        bindings,
    })
}

/// [`ZERO_IDIOM_LINKS`] copies of `link` with all register operands on one
/// register.
pub fn idiom_link_chain(link: &str, catalog: &Catalog) -> Result<Kernel, GenError> {
    let desc = catalog
        .get(link)
        .ok_or_else(|| GenError::UnknownInstruction(link.to_string()))?;
    let class = desc
        .explicit_operands()
        .find_map(|o| o.kind.reg_class())
        .ok_or_else(|| unchainable(format!("{link} has no register operand")))?;
    let mut alloc = RegAlloc::new(catalog, &[]);
    let base = alloc.fresh(class)?;
    let inst = link_instance(desc, &base, &alloc)?;
    Ok(Kernel::new(vec![inst; ZERO_IDIOM_LINKS]))
}

/// The instruction with all operands of one register group on the same
/// register, followed by the class's idiom link chain on that register.
/// `subtract` holds the cycles of the chain alone: if the instruction
/// breaks the dependency, iterations overlap and run faster than that.
pub fn zero_idiom_probe(desc: &InstructionDesc, catalog: &Catalog, lib: &ChainLibrary) -> Result<Option<Kernel>, GenError> {
    let Some(group) = desc
        .same_class_register_groups()
        .into_iter()
        .find(|g| g.iter().any(|&i| desc.operands[i].writes()) && g.iter().filter(|&&i| desc.operands[i].reads()).count() >= 2)
    else {
        return Ok(None);
    };
    let class = loc_class(&desc.operands[group[0]]);
    let Some((link, cycles)) = lib.idiom_link(class) else {
        return Ok(None);
    };
    let link = catalog
        .get(link)
        .ok_or_else(|| GenError::UnknownInstruction(link.to_string()))?;
    let mut b = Build::new(catalog, lib, desc, group[0]);
    let base = match b.reg(group[0]) {
        Ok(base) => base,
        Err(GenError::Unchainable(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    for &i in &group[1..] {
        match b.reg_on(i, &base) {
            Ok(()) => {}
            Err(GenError::Unchainable(_)) => return Ok(None),
            Err(e) => return Err(e),
        }
    }
    for _ in 0..ZERO_IDIOM_LINKS {
        let inst = link_instance(link, &base, &b.alloc)?;
        b.chain.push(inst);
    }
    b.subtract = cycles;
    Ok(Some(b.finish(LatencyKind::Exact, "zero-idiom-probe", true)?.kernel))
}
