#![allow(dead_code)]

pub mod oracle;

use std::path::PathBuf;

use uarch_probe::bench_gen::{ChainLibrary, isolation_kernel};
use uarch_probe::isa::{load_catalog, Catalog};
use uarch_probe::kernel::Kernel;
use uarch_probe::machine::{load_machine, Machine, MachineSpec};

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn catalog() -> Catalog {
    load_catalog(data("catalog.json")).unwrap()
}

pub fn reference_spec() -> MachineSpec {
    load_machine(data("reference-6port.json")).unwrap()
}

pub fn scenario_spec() -> MachineSpec {
    load_machine(data("scenario-8port.json")).unwrap()
}

pub fn reference() -> (Catalog, Machine) {
    let catalog = catalog();
    let machine = Machine::new(reference_spec(), &catalog).unwrap();
    (catalog, machine)
}

pub fn scenario() -> (Catalog, Machine) {
    let catalog = catalog();
    let machine = Machine::new(scenario_spec(), &catalog).unwrap();
    (catalog, machine)
}

/// `n` pairwise independent instances of `id`.
pub fn independent(catalog: &Catalog, id: &str, n: usize) -> Kernel {
    let lib = ChainLibrary::from_catalog(catalog);
    isolation_kernel(catalog.get(id).unwrap(), n, catalog, &lib).unwrap()
}

pub fn quick_config() -> uarch_probe::measure::MeasurementConfig {
    uarch_probe::measure::MeasurementConfig {
        repetitions: 3,
        ..Default::default()
    }
}

/// Runs `f` with a fresh session over the given machine.
pub fn with_session<R>(
    catalog: &Catalog,
    machine: &Machine,
    f: impl FnOnce(&mut uarch_probe::pipeline::Session<'_>) -> R,
) -> R {
    let backend = uarch_probe::measure::SimBackend::new(machine.clone());
    let mut session = uarch_probe::pipeline::Session::new(
        catalog,
        &backend,
        quick_config(),
        uarch_probe::exec::Execution::default(),
    )
    .unwrap();
    f(&mut session)
}

pub fn characterize(catalog: &Catalog, machine: &Machine, id: &str) -> uarch_probe::report::CharacterizationResult {
    with_session(catalog, machine, |s| s.characterize(catalog.get(id).unwrap()).unwrap())
}
