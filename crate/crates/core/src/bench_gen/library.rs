//! Helper instructions used to close dependency chains and break unwanted
//! ones, looked up in the catalog by mnemonic and operand shape.

use std::collections::BTreeMap;

use crate::isa::{Access, Attribute, Catalog, InstructionDesc, IsaClass, OperandKind, RegClass};
use crate::rational::{int, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ShuffleKind {
    Int,
    Fp,
}

/// Keys of chain latencies that can be calibrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChainKey {
    Movsx(u32),
    Shuffle(ShuffleKind, bool),
    MmxShuffle,
    DoubleXor,
    AndOr,
    AndOrSimd,
    Test,
}

impl ChainKey {
    pub fn name(self) -> String {
        match self {
            ChainKey::Movsx(w) => format!("movsx-r{w}"),
            ChainKey::Shuffle(k, avx) => format!(
                "{}{}-shuffle",
                if avx { "avx-" } else { "" },
                if k == ShuffleKind::Int { "int" } else { "fp" }
            ),
            ChainKey::MmxShuffle => "mmx-shuffle".into(),
            ChainKey::DoubleXor => "double-xor".into(),
            ChainKey::AndOr => "and-or".into(),
            ChainKey::AndOrSimd => "andps-orps".into(),
            ChainKey::Test => "test".into(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ChainLibrary {
    pub mov_imm: Option<String>,
    pub mov_rr: Option<String>,
    pub movaps: Option<String>,
    /// MOVSX/MOVSXD into a 64-bit register, by source width.
    pub movsx: BTreeMap<u32, String>,
    pub xor: Option<String>,
    pub and: Option<String>,
    pub or: Option<String>,
    /// TEST r, r by width.
    pub test: BTreeMap<u32, String>,
    pub store_imm: Option<String>,
    pub store: Option<String>,
    pub zero_sse: Option<String>,
    pub zero_avx: Option<String>,
    pub shuffles: BTreeMap<(ShuffleKind, bool), String>,
    pub mmx_shuffle: Option<String>,
    pub andps: Option<String>,
    pub orps: Option<String>,
    /// Plain loads into a full register of the class.
    pub loads: BTreeMap<RegClass, String>,
    /// Instructions that form a dependency chain with every register
    /// operand on one register, by class.
    pub link_candidates: BTreeMap<RegClass, Vec<String>>,
    latencies: BTreeMap<ChainKey, Rational>,
    /// Chosen zero-idiom probe link and the measured cycles of its chain.
    idiom_links: BTreeMap<RegClass, (String, Rational)>,
}

/// Reads and writes registers of a single class and nothing else but
/// written flags and immediates.
fn link_class(d: &InstructionDesc) -> Option<RegClass> {
    if d.has(Attribute::ZeroIdiom)
        || d.has(Attribute::MoveEliminationCapable)
        || d.has(Attribute::ZeroLatencyCapable)
        || d.has(Attribute::PauseLike)
        || d.has(Attribute::ControlFlowOnRegister)
    {
        return None;
    }
    let mut class = None;
    let (mut reads, mut writes) = (false, false);
    for o in &d.operands {
        match o.kind {
            OperandKind::Immediate => {}
            OperandKind::Flags if !o.reads() => {}
            k if k.is_register() && !o.implicit => {
                let c = k.reg_class()?;
                if class.replace(c).is_some_and(|prev| prev != c) {
                    return None;
                }
                reads |= o.reads();
                writes |= o.writes();
            }
            _ => return None,
        }
    }
    (reads && writes).then_some(class?)
}

type Shape = Vec<(OperandKind, u32, Access)>;

fn shape(d: &InstructionDesc) -> (Shape, Option<Access>) {
    let mut ops = Vec::new();
    let mut flags = None;
    for o in &d.operands {
        if o.kind == OperandKind::Flags {
            flags = Some(o.access);
        } else {
            ops.push((o.kind, o.width, o.access));
        }
    }
    (ops, flags)
}

fn plain(d: &InstructionDesc) -> bool {
    d.operands.iter().all(|o| o.fixed_register.is_none())
        && !d.has(Attribute::UsesDivider)
        && !d.has(Attribute::Serializing)
        && !d.has(Attribute::System)
}

use Access::{Read as R, ReadWrite as RW, Write as W};
use OperandKind::{GpRegister as Gp, Immediate as Imm, Memory as Mem, MmxRegister as Mm, SimdRegister as Xmm};

impl ChainLibrary {
    pub fn from_catalog(catalog: &Catalog) -> Self {
        let mut lib = ChainLibrary::default();
        for d in catalog.instructions().iter().filter(|d| plain(d)) {
            let (ops, flags) = shape(d);
            let m = d.mnemonic.as_str();
            let id = || Some(d.id.clone());
            let sse = d.isa_class != IsaClass::Avx;
            let set = |slot: &mut Option<String>| {
                if slot.is_none() {
                    *slot = id();
                }
            };
            if let Some(class) = link_class(d) {
                lib.link_candidates.entry(class).or_default().push(d.id.clone());
            }
            match (m, ops.as_slice(), flags) {
                ("MOV", [(Gp, 64, W), (Imm, _, _)], None) => set(&mut lib.mov_imm),
                ("MOV", [(Gp, 64, W), (Gp, 64, R)], None) => set(&mut lib.mov_rr),
                ("MOV", [(Mem, 64, W), (Imm, _, _)], None) => set(&mut lib.store_imm),
                ("MOV", [(Mem, 64, W), (Gp, 64, R)], None) => set(&mut lib.store),
                ("MOV", [(Gp, 64, W), (Mem, 64, R)], None) => {
                    lib.loads.entry(RegClass::Gp).or_insert_with(|| d.id.clone());
                }
                ("MOVDQU" | "MOVDQA" | "MOVUPS" | "MOVAPS", [(Xmm, 128, W), (Mem, 128, R)], None)
                    if sse =>
                {
                    lib.loads.entry(RegClass::Simd).or_insert_with(|| d.id.clone());
                }
                ("MOVAPS" | "MOVDQA", [(Xmm, 128, W), (Xmm, 128, R)], None) if sse => {
                    set(&mut lib.movaps)
                }
                ("MOVSX" | "MOVSXD", [(Gp, 64, W), (Gp, w, R)], None) => {
                    lib.movsx.entry(*w).or_insert_with(|| d.id.clone());
                }
                ("XOR", [(Gp, 64, RW), (Gp, 64, R)], Some(W)) => set(&mut lib.xor),
                ("AND", [(Gp, 64, RW), (Gp, 64, R)], Some(W)) => set(&mut lib.and),
                ("OR", [(Gp, 64, RW), (Gp, 64, R)], Some(W)) => set(&mut lib.or),
                ("TEST", [(Gp, a, R), (Gp, b, R)], Some(W)) if a == b => {
                    lib.test.entry(*a).or_insert_with(|| d.id.clone());
                }
                ("PSHUFD", [(Xmm, 128, W), (Xmm, 128, R), (Imm, _, _)], None) if sse => {
                    lib.shuffles.entry((ShuffleKind::Int, false)).or_insert_with(|| d.id.clone());
                }
                ("SHUFPD" | "SHUFPS", [(Xmm, 128, RW), (Xmm, 128, R), (Imm, _, _)], None) if sse => {
                    lib.shuffles.entry((ShuffleKind::Fp, false)).or_insert_with(|| d.id.clone());
                }
                ("VPSHUFD", [(Xmm, 128, W), (Xmm, 128, R), (Imm, _, _)], None) => {
                    lib.shuffles.entry((ShuffleKind::Int, true)).or_insert_with(|| d.id.clone());
                }
                ("VSHUFPD" | "VSHUFPS", [(Xmm, 128, W), (Xmm, 128, R), (Xmm, 128, R), (Imm, _, _)], None) => {
                    lib.shuffles.entry((ShuffleKind::Fp, true)).or_insert_with(|| d.id.clone());
                }
                ("PSHUFW", [(Mm, _, W), (Mm, _, R), (Imm, _, _)], None) => set(&mut lib.mmx_shuffle),
                ("ANDPS", [(Xmm, 128, RW), (Xmm, 128, R)], None) if sse => set(&mut lib.andps),
                ("ORPS", [(Xmm, 128, RW), (Xmm, 128, R)], None) if sse => set(&mut lib.orps),
                (_, [(Xmm, 128, RW), (Xmm, 128, R)], None)
                    if sse && d.has(Attribute::ZeroIdiom) =>
                {
                    set(&mut lib.zero_sse)
                }
                (_, [(Xmm, 128, W), (Xmm, 128, R), (Xmm, 128, R)], None)
                    if !sse && d.has(Attribute::ZeroIdiom) =>
                {
                    set(&mut lib.zero_avx)
                }
                _ => {}
            }
        }
        lib
    }

    /// Chain latency per link; uncalibrated chains assume one cycle per
    /// chain instruction.
    pub fn latency(&self, key: ChainKey) -> Rational {
        if let Some(v) = self.latencies.get(&key) {
            return *v;
        }
        match key {
            ChainKey::DoubleXor | ChainKey::AndOr | ChainKey::AndOrSimd => int(2),
            _ => int(1),
        }
    }

    pub fn set_latency(&mut self, key: ChainKey, value: Rational) {
        self.latencies.insert(key, value);
    }

    pub fn set_idiom_link(&mut self, class: RegClass, id: &str, chain_cycles: Rational) {
        self.idiom_links.insert(class, (id.to_string(), chain_cycles));
    }

    pub fn idiom_link(&self, class: RegClass) -> Option<(&str, Rational)> {
        self.idiom_links.get(&class).map(|(id, c)| (id.as_str(), *c))
    }

    pub fn calibrated(&self) -> &BTreeMap<ChainKey, Rational> {
        &self.latencies
    }

    pub fn shuffle(&self, kind: ShuffleKind, avx: bool) -> Option<&str> {
        self.shuffles
            .get(&(kind, avx))
            .or_else(|| self.shuffles.get(&(kind, !avx)))
            .map(String::as_str)
    }
}
