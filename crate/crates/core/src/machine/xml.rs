use std::collections::BTreeMap;

use roxmltree::Node;

use super::{
    DividerTiming, Domain, GroundTruthEntry, LatencyEdge, MachineError, MachineSpec, SameRegister,
    UopSpec, ValueClasses,
};
use crate::xmlutil::{self, XmlResult};

pub(super) fn parse(text: &str) -> Result<MachineSpec, MachineError> {
    let doc = xmlutil::parse_document(text).map_err(MachineError::Parse)?;
    read_machine(doc.root_element()).map_err(MachineError::Parse)
}

fn ports(node: Node, name: &str) -> XmlResult<Vec<u8>> {
    xmlutil::parse_list(node, name, |s| s.parse().ok())
}

fn read_machine(root: Node) -> XmlResult<MachineSpec> {
    xmlutil::check(
        root,
        "machine",
        &[
            "name",
            "ports",
            "issue-width",
            "load-latency",
            "store-forward-latency",
            "bypass-delay",
            "divider-ports",
        ],
    )?;
    let mut functional_units = BTreeMap::new();
    let mut ground_truth = BTreeMap::new();
    for child in xmlutil::children(root) {
        match child.tag_name().name() {
            "functional-unit" => {
                xmlutil::check(child, "functional-unit", &["name", "ports"])?;
                let name = xmlutil::req(child, "name")?.to_string();
                if functional_units.insert(name, ports(child, "ports")?).is_some() {
                    return xmlutil::fail(child, "functional unit repeated");
                }
            }
            "instruction" => {
                let id = xmlutil::req(child, "id")?.to_string();
                if ground_truth.insert(id, read_entry(child)?).is_some() {
                    return xmlutil::fail(child, "instruction repeated");
                }
            }
            other => return xmlutil::fail(child, format!("unexpected element <{other}>")),
        }
    }
    Ok(MachineSpec {
        name: root.attribute("name").unwrap_or("").to_string(),
        ports: ports(root, "ports")?,
        issue_width: xmlutil::parse_opt(root, "issue-width")?.unwrap_or(4),
        functional_units,
        load_latency: xmlutil::parse_req(root, "load-latency")?,
        store_forward_latency: xmlutil::parse_opt(root, "store-forward-latency")?,
        bypass_delay: xmlutil::parse_opt(root, "bypass-delay")?.unwrap_or(0),
        divider_ports: ports(root, "divider-ports")?,
        ground_truth,
    })
}

fn read_edge(node: Node) -> XmlResult<LatencyEdge> {
    xmlutil::check(node, "edge", &["src", "dst", "cycles", "consumer", "producer"])?;
    Ok(LatencyEdge {
        src: xmlutil::parse_req(node, "src")?,
        dst: xmlutil::parse_req(node, "dst")?,
        cycles: xmlutil::parse_opt(node, "cycles")?,
        consumer: xmlutil::parse_opt(node, "consumer")?.unwrap_or(0),
        producer: xmlutil::parse_opt(node, "producer")?.unwrap_or(0),
    })
}

fn read_timing(node: Node, name: &str) -> XmlResult<DividerTiming> {
    xmlutil::check(node, name, &["latency", "occupancy"])?;
    Ok(DividerTiming {
        latency: xmlutil::parse_req(node, "latency")?,
        occupancy: xmlutil::parse_req(node, "occupancy")?,
    })
}

fn read_entry(node: Node) -> XmlResult<GroundTruthEntry> {
    xmlutil::check(node, "instruction", &["id", "domain", "eliminate-every"])?;
    let domain = match node.attribute("domain") {
        None => None,
        Some("int") => Some(Domain::Int),
        Some("fp") => Some(Domain::Fp),
        Some(other) => return xmlutil::fail(node, format!("unknown domain `{other}`")),
    };
    let mut entry = GroundTruthEntry {
        domain,
        eliminate_every: xmlutil::parse_opt(node, "eliminate-every")?,
        ..GroundTruthEntry::default()
    };
    for child in xmlutil::children(node) {
        match child.tag_name().name() {
            "uop" => {
                xmlutil::check(child, "uop", &["ports", "eliminated", "divider-occupancy"])?;
                entry.uops.push(UopSpec {
                    ports: ports(child, "ports")?,
                    eliminated: xmlutil::parse_bool(child, "eliminated")?,
                    divider_occupancy: xmlutil::parse_opt(child, "divider-occupancy")?,
                });
            }
            "edge" => entry.latency_edges.push(read_edge(child)?),
            "same-register" => {
                xmlutil::check(child, "same-register", &["breaks-dependency", "eliminated"])?;
                let edges = xmlutil::children(child)
                    .map(read_edge)
                    .collect::<XmlResult<Vec<_>>>()?;
                entry.same_register = Some(SameRegister {
                    breaks_dependency: xmlutil::parse_bool(child, "breaks-dependency")?,
                    eliminated: xmlutil::parse_bool(child, "eliminated")?,
                    latency_edges: (!edges.is_empty()).then_some(edges),
                });
            }
            "value-classes" => {
                xmlutil::check(child, "value-classes", &[])?;
                let mut fast = None;
                let mut slow = None;
                for t in xmlutil::children(child) {
                    match t.tag_name().name() {
                        "fast" => fast = Some(read_timing(t, "fast")?),
                        "slow" => slow = Some(read_timing(t, "slow")?),
                        other => return xmlutil::fail(t, format!("unexpected element <{other}>")),
                    }
                }
                match (fast, slow) {
                    (Some(fast), Some(slow)) => entry.value_classes = Some(ValueClasses { fast, slow }),
                    _ => return xmlutil::fail(child, "needs both <fast> and <slow>"),
                }
            }
            other => return xmlutil::fail(child, format!("unexpected element <{other}>")),
        }
    }
    Ok(entry)
}
