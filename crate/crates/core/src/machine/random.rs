//! Seeded generator of random instructions with known ground truth, used to
//! mass-produce validation instances on top of an existing machine.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GroundTruthEntry, LatencyEdge, MachineError, MachineSpec, UopSpec};
use crate::isa::{Access, Catalog, CatalogError, Flag, InstructionDesc, IsaClass, OperandKind, OperandSpec, RegClass};

#[derive(Debug, Clone, Copy)]
pub struct RandomConfig {
    pub count: usize,
    pub seed: u64,
    pub max_uops: usize,
    pub max_latency: u32,
}

impl RandomConfig {
    pub fn new(count: usize, seed: u64) -> Self {
        RandomConfig {
            count,
            seed,
            max_uops: 4,
            max_latency: 8,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RandomError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Machine(#[from] MachineError),
}

fn operand(index: usize, kind: OperandKind, width: u32, access: Access) -> OperandSpec {
    OperandSpec {
        index,
        kind,
        width,
        access,
        implicit: false,
        fixed_register: None,
        flag_set: Vec::new(),
    }
}

/// Id of the `i`-th generated instruction.
pub fn random_id(i: usize) -> String {
    format!("RND_{i:04}")
}

/// Extends `catalog` and `spec` with `config.count` random instructions.
///
/// Each instruction has 1 to `max_uops` uops whose port sets are drawn from
/// the machine's functional-unit combinations, and per-operand-pair
/// latencies between 1 and `max_latency`.
pub fn randomize(
    catalog: &Catalog,
    spec: &MachineSpec,
    config: RandomConfig,
) -> Result<(Catalog, MachineSpec), RandomError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let combos = spec.fu_combinations();
    let has_simd = catalog.registers_of(RegClass::Simd, 128).next().is_some();
    let mut instrs = Vec::with_capacity(config.count);
    let mut out = spec.clone();
    for i in 0..config.count {
        let id = random_id(i);
        let simd = has_simd && rng.gen_bool(0.25);
        let (kind, width, class) = if simd {
            (OperandKind::SimdRegister, 128, IsaClass::Sse)
        } else {
            (OperandKind::GpRegister, 64, IsaClass::Gp)
        };
        let dst_access = if rng.gen_bool(0.5) { Access::ReadWrite } else { Access::Write };
        let mut operands = vec![
            operand(0, kind, width, dst_access),
            operand(1, kind, width, Access::Read),
        ];
        if !simd && rng.gen_bool(0.5) {
            let mut flags = operand(2, OperandKind::Flags, 0, Access::Write);
            flags.implicit = true;
            flags.flag_set = vec![Flag::CF, Flag::PF, Flag::AF, Flag::ZF, Flag::SF, Flag::OF];
            operands.push(flags);
        }
        let n_uops = rng.gen_range(1..=config.max_uops);
        let uops: Vec<UopSpec> = (0..n_uops)
            .map(|_| UopSpec::on(&combos.choose(&mut rng).expect("machine has units").to_vec()))
            .collect();
        let mut edges = Vec::new();
        let sources: Vec<usize> = operands.iter().filter(|o| o.reads()).map(|o| o.index).collect();
        let dests: Vec<usize> = operands.iter().filter(|o| o.writes()).map(|o| o.index).collect();
        for &s in &sources {
            for &d in &dests {
                let consumer = rng.gen_range(0..n_uops);
                let producer = rng.gen_range(consumer..n_uops);
                edges.push(LatencyEdge::new(s, d, rng.gen_range(1..=config.max_latency)).via(consumer, producer));
            }
        }
        instrs.push(InstructionDesc {
            id: id.clone(),
            mnemonic: format!("RND{i:04}"),
            isa_class: class,
            operands,
            attributes: BTreeSet::new(),
        });
        out.ground_truth.insert(
            id,
            GroundTruthEntry {
                uops,
                latency_edges: edges,
                ..GroundTruthEntry::default()
            },
        );
    }
    out.validate()?;
    Ok((catalog.extended(instrs)?, out))
}
