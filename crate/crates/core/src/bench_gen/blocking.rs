//! Blocking-instruction tables: for every functional-unit port combination,
//! an instruction whose uops can only go to exactly those ports.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::exec::Execution;
use crate::isa::{blocking_candidates, BlockingClass, Catalog};
use crate::measure::{run_delta, Backend, MeasurementConfig, MeasurementResult};
use crate::ports::PortSet;
use crate::rational::{self, int, Rational};

use super::library::ChainLibrary;
use super::throughput::isolation_kernel;
use super::GenError;

/// Copies per isolation measurement.
const ISOLATION_LENGTH: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct BlockingEntry {
    pub instr: String,
    /// Total uops per instance; 1 except for the store fallback.
    #[serde(with = "rational::serde_str")]
    pub uops: Rational,
    /// Uops per instance that land on the combination's ports.
    #[serde(with = "rational::serde_str")]
    pub uops_on_ports: Rational,
    #[serde(with = "rational::serde_str")]
    pub cycles_per_instr: Rational,
    pub units: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct BlockingTable {
    pub class: BlockingClass,
    #[serde(serialize_with = "entries_by_name")]
    pub entries: BTreeMap<PortSet, BlockingEntry>,
}

fn entries_by_name<S: serde::Serializer>(e: &BTreeMap<PortSet, BlockingEntry>, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut m = s.serialize_map(Some(e.len()))?;
    for (k, v) in e {
        m.serialize_entry(&k.to_string(), v)?;
    }
    m.end()
}

impl BlockingTable {
    pub fn get(&self, ports: PortSet) -> Option<&BlockingEntry> {
        self.entries.get(&ports)
    }

    /// Replaces the blocker of a combination, keeping its bookkeeping.
    /// Only useful for fault injection.
    pub fn override_blocker(&mut self, ports: PortSet, instr: &str) -> bool {
        match self.entries.get_mut(&ports) {
            Some(e) => {
                e.instr = instr.to_string();
                true
            }
            None => false,
        }
    }
}

fn measure_isolated(
    id: &str,
    catalog: &Catalog,
    lib: &ChainLibrary,
    backend: &dyn Backend,
    config: &MeasurementConfig,
) -> Result<MeasurementResult, GenError> {
    let desc = catalog
        .get(id)
        .ok_or_else(|| GenError::UnknownInstruction(id.to_string()))?;
    let kernel = isolation_kernel(desc, ISOLATION_LENGTH, catalog, lib)?;
    let m = run_delta(&kernel, backend, config).map_err(|e| GenError::Measure(e.to_string()))?;
    Ok(m.scaled(ISOLATION_LENGTH as i64))
}

/// Builds the table by measuring every candidate in isolation.
pub fn build_blocking_table(
    catalog: &Catalog,
    lib: &ChainLibrary,
    backend: &dyn Backend,
    config: &MeasurementConfig,
    class: BlockingClass,
    exec: Execution,
) -> Result<BlockingTable, GenError> {
    let candidates: Vec<&str> = blocking_candidates(catalog, class)
        .into_iter()
        .filter(|d| backend.supports(&d.id))
        .filter(|d| d.operands.iter().all(|o| o.fixed_register.is_none()))
        .map(|d| d.id.as_str())
        .collect();
    let measured = exec.map(&candidates, |id| measure_isolated(id, catalog, lib, backend, config));
    let combos = &backend.capabilities().fu_combinations;
    let units_of = |ports: PortSet| -> Vec<String> {
        combos
            .iter()
            .find(|(c, _)| *c == ports)
            .map(|(_, u)| u.clone())
            .unwrap_or_default()
    };
    let mut entries: BTreeMap<PortSet, BlockingEntry> = BTreeMap::new();
    for (id, m) in candidates.iter().zip(measured) {
        let m = m?;
        if m.total_uops != int(1) || m.dispatched_uops() != int(1) {
            continue;
        }
        let ports = m.used_ports();
        let better = entries
            .get(&ports)
            .map_or(true, |e| m.cycles < e.cycles_per_instr);
        if better {
            entries.insert(
                ports,
                BlockingEntry {
                    instr: id.to_string(),
                    uops: int(1),
                    uops_on_ports: int(1),
                    cycles_per_instr: m.cycles,
                    units: units_of(ports),
                },
            );
        }
    }
    let missing: Vec<PortSet> = combos
        .iter()
        .map(|(c, _)| *c)
        .filter(|c| !entries.contains_key(c))
        .collect();
    if !missing.is_empty() {
        if let Some(store) = lib.store.as_deref().filter(|s| backend.supports(s)) {
            let m = measure_isolated(store, catalog, lib, backend, config)?;
            let used = m.used_ports();
            for combo in &missing {
                let units = units_of(*combo);
                if combo.is_subset(used) && units.iter().any(|u| u.contains("store")) {
                    entries.insert(
                        *combo,
                        BlockingEntry {
                            instr: store.to_string(),
                            uops: m.total_uops,
                            uops_on_ports: m.uops_on(*combo),
                            cycles_per_instr: m.cycles,
                            units,
                        },
                    );
                }
            }
        }
    }
    let uncovered: BTreeSet<String> = combos
        .iter()
        .filter(|(c, _)| !entries.contains_key(c))
        .map(|(c, u)| format!("{c} ({})", u.join(",")))
        .collect();
    if !uncovered.is_empty() {
        return Err(GenError::Uncoverable(uncovered.into_iter().collect()));
    }
    Ok(BlockingTable { class, entries })
}
