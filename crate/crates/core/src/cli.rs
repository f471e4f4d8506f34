//! Command-line driver.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::exec::Execution;
use crate::isa::{load_catalog, parse_catalog, Catalog};
use crate::machine::random::{randomize, random_id, RandomConfig};
use crate::machine::{load_machine, parse_machine, Machine, MachineSpec};
use crate::measure::{Aggregator, MeasurementConfig, SimBackend};
use crate::pipeline::{validate, Outcome, Session};
use crate::ports::{PortSet, PortUsage};
use crate::rational;
use crate::report::{self, CharacterizationResult, Format};

const BUNDLED_CATALOG: &str = include_str!("../data/catalog.json");
const BUNDLED_MACHINE: &str = include_str!("../data/reference-6port.json");

pub const EXIT_OK: u8 = 0;
pub const EXIT_INCONSISTENT: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "uarch-probe", version, about = "Characterize instruction latency, throughput and port usage")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Characterize instructions and write a result document.
    Analyze(RunArgs),
    /// Characterize instructions on a simulated machine and compare with
    /// its ground truth.
    Validate(ValidateArgs),
    /// List catalog instructions matching the filter.
    List(ListArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OutputFormat {
    Json,
    Xml,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AggregatorArg {
    Mean,
    Median,
}

#[derive(Debug, Args)]
pub struct Inputs {
    /// Instruction catalog (JSON or XML); the bundled catalog if omitted.
    #[arg(long, env = "UARCH_PROBE_CATALOG")]
    pub catalog: Option<PathBuf>,
    /// Machine description (JSON or XML); the bundled reference machine if
    /// omitted.
    #[arg(long, env = "UARCH_PROBE_MACHINE")]
    pub machine: Option<PathBuf>,
    /// Instruction ids, mnemonics or glob patterns over ids; comma
    /// separated or repeated. Everything if omitted.
    #[arg(long, short = 'f', value_delimiter = ',', env = "UARCH_PROBE_FILTER")]
    pub filter: Vec<String>,
}

#[derive(Debug, Args)]
pub struct Measurement {
    #[arg(long, env = "UARCH_PROBE_N_SMALL", default_value_t = 10)]
    pub n_small: usize,
    #[arg(long, env = "UARCH_PROBE_N_LARGE", default_value_t = 110)]
    pub n_large: usize,
    #[arg(long = "reps", alias = "repetitions", env = "UARCH_PROBE_REPS", default_value_t = 100)]
    pub repetitions: usize,
    #[arg(long, value_enum, env = "UARCH_PROBE_AGGREGATOR", default_value = "mean")]
    pub aggregator: AggregatorArg,
    /// Skip the warm-up run before each measurement.
    #[arg(long)]
    pub no_warm_up: bool,
    /// Worker threads; 1 characterizes instructions one after another.
    #[arg(long, env = "UARCH_PROBE_JOBS", value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: Option<u16>,
}

impl Measurement {
    fn config(&self) -> MeasurementConfig {
        MeasurementConfig {
            n_small: self.n_small,
            n_large: self.n_large,
            repetitions: self.repetitions,
            warm_up: !self.no_warm_up,
            aggregator: match self.aggregator {
                AggregatorArg::Mean => Aggregator::Mean,
                AggregatorArg::Median => Aggregator::Median,
            },
        }
    }

    fn execution(&self) -> Execution {
        match self.jobs {
            Some(1) => Execution::Sequential,
            #[cfg(feature = "parallel")]
            Some(n) => {
                // Fails only if the global pool already exists; keep it then.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global();
                Execution::default()
            }
            _ => Execution::default(),
        }
    }
}

#[derive(Debug, Args)]
pub struct Output {
    /// Result file; printed to stdout if omitted.
    #[arg(long = "out", alias = "output", short = 'o', env = "UARCH_PROBE_OUT")]
    pub output: Option<PathBuf>,
    /// Output format; inferred from the output extension if omitted.
    #[arg(long, value_enum, env = "UARCH_PROBE_FORMAT")]
    pub format: Option<OutputFormat>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[command(flatten)]
    pub measurement: Measurement,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Add this many random instructions to the machine and validate only
    /// those.
    #[arg(long, env = "UARCH_PROBE_RANDOM")]
    pub random: Option<usize>,
    /// Seed for the random instructions.
    #[arg(long, env = "UARCH_PROBE_SEED", default_value_t = 1)]
    pub seed: u64,
    /// Replaces a blocking instruction, as in `p015=SHL_R64_I8`. For
    /// checking that validation catches a bad blocking table.
    #[arg(long, value_parser = parse_injection)]
    pub inject_blocker: Vec<(PortSet, String)>,
}

fn parse_injection(s: &str) -> Result<(PortSet, String), String> {
    let (ports, instr) = s.split_once('=').ok_or("expected PORTS=INSTRUCTION")?;
    let usage = PortUsage::parse(&format!("1*{}", ports.trim())).map_err(|e| e.to_string())?;
    let (pc, _) = usage.entries().next().ok_or("empty port set")?;
    Ok((pc, instr.trim().to_string()))
}

#[derive(Debug, Args)]
pub struct ListArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    /// Print a JSON array instead of one line per instruction.
    #[arg(long)]
    pub json: bool,
}

/// Configuration or input problem; maps to exit status 2.
#[derive(Debug)]
struct UsageError(String);

fn usage<E: std::fmt::Display>(e: E) -> UsageError {
    UsageError(e.to_string())
}

fn load_inputs(inputs: &Inputs) -> Result<(Catalog, MachineSpec), UsageError> {
    let catalog = match &inputs.catalog {
        Some(p) => load_catalog(p).map_err(usage)?,
        None => parse_catalog(BUNDLED_CATALOG).map_err(usage)?,
    };
    let machine = match &inputs.machine {
        Some(p) => load_machine(p).map_err(usage)?,
        None => parse_machine(BUNDLED_MACHINE).map_err(usage)?,
    };
    Ok((catalog, machine))
}

/// Expands the filter into instruction ids in catalog order.
pub fn select(catalog: &Catalog, filter: &[String]) -> Result<Vec<String>, String> {
    let filter: Vec<&str> = filter.iter().map(|f| f.trim()).filter(|f| !f.is_empty()).collect();
    if filter.is_empty() {
        return Ok(catalog.instructions().iter().map(|d| d.id.clone()).collect());
    }
    let mut patterns = Vec::new();
    for f in &filter {
        patterns.push(glob::Pattern::new(f).map_err(|e| format!("bad filter `{f}`: {e}"))?);
    }
    let ids: Vec<String> = catalog
        .instructions()
        .iter()
        .filter(|d| {
            filter.iter().zip(&patterns).any(|(f, p)| {
                d.id == *f || d.mnemonic.eq_ignore_ascii_case(f) || p.matches(&d.id)
            })
        })
        .map(|d| d.id.clone())
        .collect();
    if ids.is_empty() {
        return Err(format!("filter `{}` matches no instruction", filter.join(",")));
    }
    Ok(ids)
}

fn emit(results: &[CharacterizationResult], out: &Output) -> Result<(), UsageError> {
    let format = match (out.format, &out.output) {
        (Some(OutputFormat::Json), _) => Format::Json,
        (Some(OutputFormat::Xml), _) => Format::Xml,
        (None, Some(p)) => Format::from_path(p),
        (None, None) => Format::Json,
    };
    match &out.output {
        Some(p) => report::write_results(results, format, p).map_err(usage),
        None => {
            let text = match format {
                Format::Json => report::to_json(results),
                Format::Xml => report::to_xml(results),
            }
            .map_err(usage)?;
            std::io::stdout().write_all(text.as_bytes()).map_err(usage)
        }
    }
}

fn summarize(outcome: &Outcome) {
    for r in &outcome.results {
        let computed = r
            .throughput
            .computed
            .map_or("n/a".to_string(), |c| rational::format(&c));
        eprintln!(
            "{:32} {:24} tp={} (computed {}){}",
            r.id,
            if r.port_usage.is_empty() { "-".to_string() } else { r.port_usage.to_string() },
            rational::format(&r.throughput.measured.cycles),
            computed,
            if r.zero_idiom { " zero-idiom" } else { "" }
        );
    }
    for (id, e) in &outcome.errors {
        if e.starts_with(id.as_str()) {
            eprintln!("error: {e}");
        } else {
            eprintln!("error: {id}: {e}");
        }
    }
}

fn session_run(
    catalog: &Catalog,
    spec: MachineSpec,
    ids: &[String],
    m: &Measurement,
    inject: &[(PortSet, String)],
) -> Result<(Machine, Outcome), UsageError> {
    let machine = Machine::new(spec, catalog).map_err(usage)?;
    let backend = SimBackend::new(machine.clone());
    let mut session = Session::new(catalog, &backend, m.config(), m.execution()).map_err(usage)?;
    for (pc, instr) in inject {
        if catalog.get(instr).is_none() {
            return Err(UsageError(format!("unknown blocking instruction `{instr}`")));
        }
        if !session.override_blocker(*pc, instr) {
            return Err(UsageError(format!("no blocking table entry for {pc}")));
        }
    }
    Ok((machine, session.run(ids)))
}

fn analyze(args: &RunArgs) -> Result<u8, UsageError> {
    let (catalog, spec) = load_inputs(&args.inputs)?;
    let ids = select(&catalog, &args.inputs.filter).map_err(UsageError)?;
    let (_, outcome) = session_run(&catalog, spec, &ids, &args.measurement, &[])?;
    summarize(&outcome);
    emit(&outcome.results, &args.output)?;
    if outcome.errors.is_empty() {
        Ok(EXIT_OK)
    } else {
        eprintln!("{} instruction(s) inconsistent", outcome.errors.len());
        Ok(EXIT_INCONSISTENT)
    }
}

fn validate_cmd(args: &ValidateArgs) -> Result<u8, UsageError> {
    let (mut catalog, mut spec) = load_inputs(&args.run.inputs)?;
    let ids = match args.random {
        Some(n) => {
            let (c, s) = randomize(&catalog, &spec, RandomConfig::new(n, args.seed)).map_err(usage)?;
            catalog = c;
            spec = s;
            (0..n).map(random_id).collect()
        }
        None => select(&catalog, &args.run.inputs.filter).map_err(UsageError)?,
    };
    let started = std::time::Instant::now();
    let (machine, outcome) = session_run(&catalog, spec, &ids, &args.run.measurement, &args.inject_blocker)?;
    summarize(&outcome);
    let mismatches = validate(&outcome.results, &machine);
    for m in &mismatches {
        eprintln!("mismatch: {}: {}: expected {}, got {}", m.id, m.what, m.expected, m.actual);
    }
    if args.run.output.output.is_some() || args.run.output.format.is_some() {
        emit(&outcome.results, &args.run.output)?;
    }
    eprintln!(
        "validated {} instruction(s): {} mismatch(es), {} error(s) in {:.1}s",
        outcome.results.len(),
        mismatches.len(),
        outcome.errors.len(),
        started.elapsed().as_secs_f64()
    );
    Ok(if mismatches.is_empty() && outcome.errors.is_empty() {
        EXIT_OK
    } else {
        EXIT_INCONSISTENT
    })
}

fn list(args: &ListArgs) -> Result<u8, UsageError> {
    let (catalog, spec) = load_inputs(&args.inputs)?;
    let ids = select(&catalog, &args.inputs.filter).map_err(UsageError)?;
    let mut out = std::io::stdout().lock();
    if args.json {
        let entries: Vec<serde_json::Value> = ids
            .iter()
            .map(|id| {
                let d = catalog.get(id).expect("selected from the catalog");
                serde_json::json!({
                    "id": d.id,
                    "mnemonic": d.mnemonic,
                    "isa_class": format!("{:?}", d.isa_class).to_lowercase(),
                    "attributes": d.attributes.iter().map(|a| a.as_str()).collect::<Vec<_>>(),
                    "simulated": spec.ground_truth.contains_key(id),
                })
            })
            .collect();
        let text = serde_json::to_string_pretty(&entries).map_err(usage)?;
        writeln!(out, "{text}").map_err(usage)?;
        return Ok(EXIT_OK);
    }
    for id in ids {
        let d = catalog.get(&id).expect("selected from the catalog");
        let simulated = if spec.ground_truth.contains_key(&id) { "simulated" } else { "-" };
        let attrs: Vec<&str> = d.attributes.iter().map(|a| a.as_str()).collect();
        writeln!(out, "{:32} {:10} {:4} {:9} {}", d.id, d.mnemonic, format!("{:?}", d.isa_class).to_uppercase(), simulated, attrs.join(","))
            .map_err(usage)?;
    }
    Ok(EXIT_OK)
}

/// Runs the CLI on the given arguments (including the program name) and
/// returns the exit status.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let r = match &cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Validate(v) => validate_cmd(v),
        Command::List(l) => list(l),
    };
    match r {
        Ok(code) => code,
        Err(UsageError(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
    }
}

pub fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}
