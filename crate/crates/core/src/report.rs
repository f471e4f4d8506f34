//! Result documents in JSON and XML.
//!
//! JSON layout:
//!
//! ```text
//! {"format": "uarch-probe-results", "version": 1, "results": [
//!   {"id": ..., "port-usage": "1*p0+1*p15", "total-uops": 2, "zero-idiom": false,
//!    "provenance": {"backend": ..., "machine-digest": ..., "config": {...}},
//!    "latency": [{"src": 1, "dst": 0, "kind": "exact", "cycles": "8", "chain": ...,
//!                 "same-register": false, "value-class": null},
//!                {"src": 0, "dst": 2, "unchainable": "reason"}],
//!    "throughput": {"measured": "1/2", "winner": ..., "computed": "1/2",
//!                   "value-classes": [{"class": "slow", "cycles": ..., "winner": ...}]}}]}
//! ```
//!
//! The XML form carries the same fields as attributes on `<result>`,
//! `<provenance>`, `<latency>`, `<unchainable>`, `<throughput>` and
//! `<value-class>` elements. A computed throughput of `not-computable`
//! marks divider instructions.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::bench_gen::LatencyKind;
use crate::inference::{LatencyResult, LatencyValue, MeasuredThroughput, PairLatency, ThroughputResult};
use crate::kernel::ValueClass;
use crate::measure::{Aggregator, MeasurementConfig};
use crate::ports::PortUsage;
use crate::rational::{self, Rational};
use crate::xmlutil::{self as x, escape};

pub const FORMAT: &str = "uarch-probe-results";
pub const VERSION: u64 = 1;
const NOT_COMPUTABLE: &str = "not-computable";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub backend: String,
    pub machine_digest: String,
    pub config: MeasurementConfig,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharacterizationResult {
    pub id: String,
    pub port_usage: PortUsage,
    pub total_uops: u32,
    pub latency: LatencyResult,
    pub throughput: ThroughputResult,
    pub zero_idiom: bool,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Xml,
}

impl Format {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "json" => Some(Format::Json),
            "xml" => Some(Format::Xml),
            _ => None,
        }
    }

    /// Guesses the format from a file extension, defaulting to JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("xml") => Format::Xml,
            _ => Format::Json,
        }
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("schema error at {path}: {reason}")]
    Schema { path: String, reason: String },
    #[error("invalid result `{id}`: {reason}")]
    Invalid { id: String, reason: String },
}

fn schema(path: &str, reason: impl Into<String>) -> ReportError {
    ReportError::Schema {
        path: path.to_string(),
        reason: reason.into(),
    }
}

fn check_result(r: &CharacterizationResult) -> Result<(), ReportError> {
    let invalid = |reason: &str| ReportError::Invalid {
        id: r.id.clone(),
        reason: reason.to_string(),
    };
    if r.id.is_empty() {
        return Err(invalid("empty instruction id"));
    }
    if r.provenance.backend.is_empty() || r.provenance.machine_digest.is_empty() {
        return Err(invalid("provenance fields must be non-empty"));
    }
    Ok(())
}

fn sorted(results: &[CharacterizationResult]) -> Result<Vec<&CharacterizationResult>, ReportError> {
    for r in results {
        check_result(r)?;
    }
    let mut v: Vec<_> = results.iter().collect();
    v.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(v)
}

fn fmt_opt_class(c: Option<ValueClass>) -> Value {
    c.map_or(Value::Null, |c| Value::String(c.as_str().into()))
}

fn config_json(c: &MeasurementConfig) -> Value {
    json!({
        "n-small": c.n_small,
        "n-large": c.n_large,
        "repetitions": c.repetitions,
        "warm-up": c.warm_up,
        "aggregator": c.aggregator.as_str(),
    })
}

fn result_json(r: &CharacterizationResult) -> Value {
    let mut latency = Vec::new();
    for ((s, d), pair) in &r.latency.pairs {
        match pair {
            PairLatency::Unchainable(why) => latency.push(json!({"src": s, "dst": d, "unchainable": why})),
            PairLatency::Values(vs) => {
                for v in vs {
                    latency.push(json!({
                        "src": s,
                        "dst": d,
                        "kind": v.kind.as_str(),
                        "cycles": rational::format(&v.cycles),
                        "chain": v.chain,
                        "same-register": v.same_register,
                        "value-class": fmt_opt_class(v.value_class),
                    }));
                }
            }
        }
    }
    let t = &r.throughput;
    let classes: Vec<Value> = t
        .value_classes
        .iter()
        .map(|(c, m)| json!({"class": c.as_str(), "cycles": rational::format(&m.cycles), "winner": m.winner}))
        .collect();
    json!({
        "id": r.id,
        "port-usage": r.port_usage.to_string(),
        "total-uops": r.total_uops,
        "zero-idiom": r.zero_idiom,
        "provenance": {
            "backend": r.provenance.backend,
            "machine-digest": r.provenance.machine_digest,
            "config": config_json(&r.provenance.config),
        },
        "latency": latency,
        "throughput": {
            "measured": rational::format(&t.measured.cycles),
            "winner": t.measured.winner,
            "computed": t.computed.map_or(NOT_COMPUTABLE.to_string(), |c| rational::format(&c)),
            "value-classes": classes,
        },
    })
}

pub fn to_json(results: &[CharacterizationResult]) -> Result<String, ReportError> {
    let list: Vec<Value> = sorted(results)?.into_iter().map(result_json).collect();
    let doc = json!({"format": FORMAT, "version": VERSION, "results": list});
    let mut s = serde_json::to_string_pretty(&doc).map_err(|e| ReportError::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn attr(out: &mut String, name: &str, value: impl AsRef<str>) {
    let _ = write!(out, " {name}=\"{}\"", escape(value.as_ref()));
}

pub fn to_xml(results: &[CharacterizationResult]) -> Result<String, ReportError> {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(out, "<results format=\"{FORMAT}\" version=\"{VERSION}\">");
    for r in sorted(results)? {
        out.push_str("  <result");
        attr(&mut out, "id", &r.id);
        attr(&mut out, "port-usage", r.port_usage.to_string());
        attr(&mut out, "total-uops", r.total_uops.to_string());
        attr(&mut out, "zero-idiom", r.zero_idiom.to_string());
        out.push_str(">\n    <provenance");
        let p = &r.provenance;
        attr(&mut out, "backend", &p.backend);
        attr(&mut out, "machine-digest", &p.machine_digest);
        attr(&mut out, "n-small", p.config.n_small.to_string());
        attr(&mut out, "n-large", p.config.n_large.to_string());
        attr(&mut out, "repetitions", p.config.repetitions.to_string());
        attr(&mut out, "warm-up", p.config.warm_up.to_string());
        attr(&mut out, "aggregator", p.config.aggregator.as_str());
        out.push_str("/>\n");
        for ((s, d), pair) in &r.latency.pairs {
            match pair {
                PairLatency::Unchainable(why) => {
                    out.push_str("    <unchainable");
                    attr(&mut out, "src", s.to_string());
                    attr(&mut out, "dst", d.to_string());
                    attr(&mut out, "reason", why);
                    out.push_str("/>\n");
                }
                PairLatency::Values(vs) => {
                    for v in vs {
                        out.push_str("    <latency");
                        attr(&mut out, "src", s.to_string());
                        attr(&mut out, "dst", d.to_string());
                        attr(&mut out, "kind", v.kind.as_str());
                        attr(&mut out, "cycles", rational::format(&v.cycles));
                        attr(&mut out, "chain", &v.chain);
                        attr(&mut out, "same-register", v.same_register.to_string());
                        if let Some(c) = v.value_class {
                            attr(&mut out, "value-class", c.as_str());
                        }
                        out.push_str("/>\n");
                    }
                }
            }
        }
        let t = &r.throughput;
        out.push_str("    <throughput");
        attr(&mut out, "measured", rational::format(&t.measured.cycles));
        attr(&mut out, "winner", &t.measured.winner);
        attr(
            &mut out,
            "computed",
            t.computed.map_or(NOT_COMPUTABLE.to_string(), |c| rational::format(&c)),
        );
        if t.value_classes.is_empty() {
            out.push_str("/>\n");
        } else {
            out.push_str(">\n");
            for (c, m) in &t.value_classes {
                out.push_str("      <value-class");
                attr(&mut out, "class", c.as_str());
                attr(&mut out, "cycles", rational::format(&m.cycles));
                attr(&mut out, "winner", &m.winner);
                out.push_str("/>\n");
            }
            out.push_str("    </throughput>\n");
        }
        out.push_str("  </result>\n");
    }
    out.push_str("</results>\n");
    Ok(out)
}

pub fn write_results(results: &[CharacterizationResult], format: Format, path: &Path) -> Result<(), ReportError> {
    let text = match format {
        Format::Json => to_json(results)?,
        Format::Xml => to_xml(results)?,
    };
    std::fs::write(path, text).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_results(path: &Path) -> Result<Vec<CharacterizationResult>, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_results(&text)
}

/// Parses a document in either format.
pub fn parse_results(text: &str) -> Result<Vec<CharacterizationResult>, ReportError> {
    let t = text.trim_start();
    if t.starts_with('{') {
        from_json(t)
    } else {
        from_xml(t)
    }
}

// JSON reading.

struct J<'a> {
    v: &'a Value,
    path: String,
}

impl<'a> J<'a> {
    fn obj(&self, allowed: &[&str]) -> Result<&'a Map<String, Value>, ReportError> {
        let m = self.v.as_object().ok_or_else(|| schema(&self.path, "expected an object"))?;
        if let Some(k) = m.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(schema(&self.path, format!("unknown field `{k}`")));
        }
        Ok(m)
    }

    fn field(&self, name: &str) -> Result<J<'a>, ReportError> {
        let v = self
            .v
            .get(name)
            .ok_or_else(|| schema(&self.path, format!("missing field `{name}`")))?;
        Ok(J {
            v,
            path: format!("{}/{name}", self.path),
        })
    }

    fn opt(&self, name: &str) -> Option<J<'a>> {
        self.v.get(name).filter(|v| !v.is_null()).map(|v| J {
            v,
            path: format!("{}/{name}", self.path),
        })
    }

    fn items(&self) -> Result<Vec<J<'a>>, ReportError> {
        let a = self.v.as_array().ok_or_else(|| schema(&self.path, "expected an array"))?;
        Ok(a.iter()
            .enumerate()
            .map(|(i, v)| J {
                v,
                path: format!("{}/{i}", self.path),
            })
            .collect())
    }

    fn str(&self) -> Result<&'a str, ReportError> {
        self.v.as_str().ok_or_else(|| schema(&self.path, "expected a string"))
    }

    fn uint(&self) -> Result<u64, ReportError> {
        self.v.as_u64().ok_or_else(|| schema(&self.path, "expected a non-negative integer"))
    }

    fn bool(&self) -> Result<bool, ReportError> {
        self.v.as_bool().ok_or_else(|| schema(&self.path, "expected a boolean"))
    }

    fn rational(&self) -> Result<Rational, ReportError> {
        let s = self.str()?;
        rational::parse(s).ok_or_else(|| schema(&self.path, format!("bad rational `{s}`")))
    }

    fn with<T>(&self, f: impl FnOnce(&str) -> Option<T>, what: &str) -> Result<T, ReportError> {
        let s = self.str()?;
        f(s).ok_or_else(|| schema(&self.path, format!("bad {what} `{s}`")))
    }
}

fn usage(s: &str, path: &str) -> Result<PortUsage, ReportError> {
    PortUsage::parse(s).map_err(|e| schema(path, format!("bad port usage `{s}`: {e}")))
}

type Pairs = BTreeMap<(usize, usize), PairLatency>;

fn push_value(pairs: &mut Pairs, key: (usize, usize), v: LatencyValue) -> Result<(), &'static str> {
    match pairs.entry(key).or_insert_with(|| PairLatency::Values(Vec::new())) {
        PairLatency::Values(vs) => {
            vs.push(v);
            Ok(())
        }
        PairLatency::Unchainable(_) => Err("pair is both unchainable and measured"),
    }
}

fn push_unchainable(pairs: &mut Pairs, key: (usize, usize), why: String) -> Result<(), &'static str> {
    if pairs.insert(key, PairLatency::Unchainable(why)).is_some() {
        return Err("pair listed twice");
    }
    Ok(())
}

fn result_from_json(j: &J) -> Result<CharacterizationResult, ReportError> {
    j.obj(&["id", "port-usage", "total-uops", "zero-idiom", "provenance", "latency", "throughput"])?;
    let pu = j.field("port-usage")?;
    let prov = j.field("provenance")?;
    prov.obj(&["backend", "machine-digest", "config"])?;
    let cfg = prov.field("config")?;
    cfg.obj(&["n-small", "n-large", "repetitions", "warm-up", "aggregator"])?;
    let config = MeasurementConfig {
        n_small: cfg.field("n-small")?.uint()? as usize,
        n_large: cfg.field("n-large")?.uint()? as usize,
        repetitions: cfg.field("repetitions")?.uint()? as usize,
        warm_up: cfg.field("warm-up")?.bool()?,
        aggregator: cfg.field("aggregator")?.with(Aggregator::parse, "aggregator")?,
    };
    let mut pairs = BTreeMap::new();
    for e in j.field("latency")?.items()? {
        let key = (e.field("src")?.uint()? as usize, e.field("dst")?.uint()? as usize);
        if let Some(why) = e.opt("unchainable") {
            e.obj(&["src", "dst", "unchainable"])?;
            push_unchainable(&mut pairs, key, why.str()?.to_string()).map_err(|r| schema(&e.path, r))?;
            continue;
        }
        e.obj(&["src", "dst", "kind", "cycles", "chain", "same-register", "value-class"])?;
        let v = LatencyValue {
            kind: e.field("kind")?.with(LatencyKind::parse, "latency kind")?,
            cycles: e.field("cycles")?.rational()?,
            chain: e.field("chain")?.str()?.to_string(),
            same_register: e.field("same-register")?.bool()?,
            value_class: match e.opt("value-class") {
                Some(c) => Some(c.with(ValueClass::parse, "value class")?),
                None => None,
            },
        };
        push_value(&mut pairs, key, v).map_err(|r| schema(&e.path, r))?;
    }
    let t = j.field("throughput")?;
    t.obj(&["measured", "winner", "computed", "value-classes"])?;
    let computed = t.field("computed")?;
    let computed = match computed.str()? {
        NOT_COMPUTABLE => None,
        _ => Some(computed.rational()?),
    };
    let mut value_classes = BTreeMap::new();
    for c in t.field("value-classes")?.items()? {
        c.obj(&["class", "cycles", "winner"])?;
        let class = c.field("class")?.with(ValueClass::parse, "value class")?;
        let m = MeasuredThroughput {
            cycles: c.field("cycles")?.rational()?,
            winner: c.field("winner")?.str()?.to_string(),
        };
        if value_classes.insert(class, m).is_some() {
            return Err(schema(&c.path, "duplicate value class"));
        }
    }
    Ok(CharacterizationResult {
        id: j.field("id")?.str()?.to_string(),
        port_usage: usage(pu.str()?, &pu.path)?,
        total_uops: j.field("total-uops")?.uint()? as u32,
        latency: LatencyResult { pairs },
        throughput: ThroughputResult {
            measured: MeasuredThroughput {
                cycles: t.field("measured")?.rational()?,
                winner: t.field("winner")?.str()?.to_string(),
            },
            computed,
            value_classes,
        },
        zero_idiom: j.field("zero-idiom")?.bool()?,
        provenance: Provenance {
            backend: prov.field("backend")?.str()?.to_string(),
            machine_digest: prov.field("machine-digest")?.str()?.to_string(),
            config,
        },
    })
}

pub fn from_json(text: &str) -> Result<Vec<CharacterizationResult>, ReportError> {
    let v: Value = serde_json::from_str(text).map_err(|e| ReportError::Parse(e.to_string()))?;
    let root = J { v: &v, path: String::new() };
    root.obj(&["format", "version", "results"])?;
    if root.field("format")?.str()? != FORMAT {
        return Err(schema("/format", "not a result document"));
    }
    if root.field("version")?.uint()? != VERSION {
        return Err(schema("/version", "unsupported version"));
    }
    let mut out = Vec::new();
    for r in root.field("results")?.items()? {
        let r = result_from_json(&r)?;
        check_result(&r)?;
        out.push(r);
    }
    Ok(out)
}

// XML reading.

fn xml_err(e: String) -> ReportError {
    match e.split_once(": ") {
        Some((path, reason)) if path.starts_with('/') => schema(path, reason),
        _ => ReportError::Parse(e),
    }
}

fn xrational(node: roxmltree::Node, name: &str) -> x::XmlResult<Rational> {
    let raw = x::req(node, name)?;
    match rational::parse(raw) {
        Some(r) => Ok(r),
        None => x::fail(node, format!("bad rational `{raw}` for `{name}`")),
    }
}

fn xwith<T>(node: roxmltree::Node, name: &str, f: impl Fn(&str) -> Option<T>) -> x::XmlResult<T> {
    let raw = x::req(node, name)?;
    match f(raw) {
        Some(v) => Ok(v),
        None => x::fail(node, format!("bad value `{raw}` for `{name}`")),
    }
}

fn xbool(node: roxmltree::Node, name: &str) -> x::XmlResult<bool> {
    x::req(node, name)?;
    x::parse_bool(node, name)
}

fn result_from_xml(node: roxmltree::Node) -> x::XmlResult<CharacterizationResult> {
    x::check(node, "result", &["id", "port-usage", "total-uops", "zero-idiom"])?;
    let raw_pu = x::req(node, "port-usage")?;
    let port_usage = match PortUsage::parse(raw_pu) {
        Ok(p) => p,
        Err(e) => return x::fail(node, format!("bad port usage `{raw_pu}`: {e}")),
    };
    let mut provenance = None;
    let mut pairs = BTreeMap::new();
    let mut throughput = None;
    for c in x::children(node) {
        match c.tag_name().name() {
            "provenance" => {
                x::check(
                    c,
                    "provenance",
                    &["backend", "machine-digest", "n-small", "n-large", "repetitions", "warm-up", "aggregator"],
                )?;
                if provenance.is_some() {
                    return x::fail(c, "duplicate provenance");
                }
                provenance = Some(Provenance {
                    backend: x::req(c, "backend")?.to_string(),
                    machine_digest: x::req(c, "machine-digest")?.to_string(),
                    config: MeasurementConfig {
                        n_small: x::parse_req(c, "n-small")?,
                        n_large: x::parse_req(c, "n-large")?,
                        repetitions: x::parse_req(c, "repetitions")?,
                        warm_up: xbool(c, "warm-up")?,
                        aggregator: xwith(c, "aggregator", Aggregator::parse)?,
                    },
                });
            }
            "latency" => {
                x::check(c, "latency", &["src", "dst", "kind", "cycles", "chain", "same-register", "value-class"])?;
                let key = (x::parse_req(c, "src")?, x::parse_req(c, "dst")?);
                let v = LatencyValue {
                    kind: xwith(c, "kind", LatencyKind::parse)?,
                    cycles: xrational(c, "cycles")?,
                    chain: x::req(c, "chain")?.to_string(),
                    same_register: xbool(c, "same-register")?,
                    value_class: match c.attribute("value-class") {
                        Some(_) => Some(xwith(c, "value-class", ValueClass::parse)?),
                        None => None,
                    },
                };
                if let Err(r) = push_value(&mut pairs, key, v) {
                    return x::fail(c, r);
                }
            }
            "unchainable" => {
                x::check(c, "unchainable", &["src", "dst", "reason"])?;
                let key = (x::parse_req(c, "src")?, x::parse_req(c, "dst")?);
                if let Err(r) = push_unchainable(&mut pairs, key, x::req(c, "reason")?.to_string()) {
                    return x::fail(c, r);
                }
            }
            "throughput" => {
                x::check(c, "throughput", &["measured", "winner", "computed"])?;
                if throughput.is_some() {
                    return x::fail(c, "duplicate throughput");
                }
                let computed = match x::req(c, "computed")? {
                    NOT_COMPUTABLE => None,
                    _ => Some(xrational(c, "computed")?),
                };
                let mut value_classes = BTreeMap::new();
                for vc in x::children(c) {
                    x::check(vc, "value-class", &["class", "cycles", "winner"])?;
                    let class = xwith(vc, "class", ValueClass::parse)?;
                    let m = MeasuredThroughput {
                        cycles: xrational(vc, "cycles")?,
                        winner: x::req(vc, "winner")?.to_string(),
                    };
                    if value_classes.insert(class, m).is_some() {
                        return x::fail(vc, "duplicate value class");
                    }
                }
                throughput = Some(ThroughputResult {
                    measured: MeasuredThroughput {
                        cycles: xrational(c, "measured")?,
                        winner: x::req(c, "winner")?.to_string(),
                    },
                    computed,
                    value_classes,
                });
            }
            other => return x::fail(c, format!("unexpected element <{other}>")),
        }
    }
    let Some(provenance) = provenance else {
        return x::fail(node, "missing <provenance>");
    };
    let Some(throughput) = throughput else {
        return x::fail(node, "missing <throughput>");
    };
    Ok(CharacterizationResult {
        id: x::req(node, "id")?.to_string(),
        port_usage,
        total_uops: x::parse_req(node, "total-uops")?,
        latency: LatencyResult { pairs },
        throughput,
        zero_idiom: xbool(node, "zero-idiom")?,
        provenance,
    })
}

pub fn from_xml(text: &str) -> Result<Vec<CharacterizationResult>, ReportError> {
    let doc = x::parse_document(text).map_err(ReportError::Parse)?;
    let root = doc.root_element();
    x::check(root, "results", &["format", "version"]).map_err(xml_err)?;
    if root.attribute("format") != Some(FORMAT) || root.attribute("version") != Some("1") {
        return Err(schema("/results[1]", "not a version 1 result document"));
    }
    let mut out = Vec::new();
    for node in x::children(root) {
        let r = result_from_xml(node).map_err(xml_err)?;
        check_result(&r)?;
        out.push(r);
    }
    Ok(out)
}
