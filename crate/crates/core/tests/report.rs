mod common;

use std::sync::OnceLock;

use proptest::prelude::*;
use uarch_probe::machine::random::{random_id, randomize, RandomConfig};
use uarch_probe::machine::Machine;
use uarch_probe::ports::{PortSet, PortUsage};
use uarch_probe::report::{
    from_json, from_xml, parse_results, read_results, to_json, to_xml, write_results, CharacterizationResult, Format,
    ReportError,
};

use common::*;

/// Checks the notation by hand: `count*p<ports>` terms joined by `+`, with
/// a positive count and strictly increasing port characters.
fn grammatical(s: &str) -> bool {
    fn rank(c: char) -> Option<u32> {
        match c {
            '0'..='9' => Some(c as u32 - '0' as u32),
            'A'..='Z' => Some(c as u32 - 'A' as u32 + 10),
            _ => None,
        }
    }
    s.split('+').all(|term| {
        let Some((count, ports)) = term.split_once("*p") else { return false };
        let count_ok = !count.is_empty() && !count.starts_with('0') && count.chars().all(|c| c.is_ascii_digit());
        let ranks: Option<Vec<u32>> = ports.chars().map(rank).collect();
        count_ok && matches!(ranks, Some(r) if !r.is_empty() && r.windows(2).all(|w| w[0] < w[1]))
    })
}

/// Every result of a validation run: the bundled reference catalog plus a
/// batch of random instructions.
fn validation_results() -> &'static [CharacterizationResult] {
    static CELL: OnceLock<Vec<CharacterizationResult>> = OnceLock::new();
    CELL.get_or_init(|| {
        let (catalog, spec) = randomize(&catalog(), &reference_spec(), RandomConfig::new(40, 3)).unwrap();
        let machine = Machine::new(spec, &catalog).unwrap();
        let mut ids: Vec<String> = catalog
            .instructions()
            .iter()
            .filter(|d| machine.supports(&d.id))
            .map(|d| d.id.clone())
            .collect();
        ids.extend((0..40).map(random_id).filter(|id| !ids.contains(id)).collect::<Vec<_>>());
        let out = with_session(&catalog, &machine, |s| s.run(&ids));
        assert!(out.results.len() > 60);
        out.results
    })
}

#[test]
fn json_round_trip_is_identity() {
    let results = validation_results();
    let text = to_json(results).unwrap();
    let mut expected = results.to_vec();
    expected.sort_by(|a, b| a.id.cmp(&b.id));
    assert_eq!(from_json(&text).unwrap(), expected);
}

#[test]
fn xml_round_trip_is_identity() {
    let results = validation_results();
    let text = to_xml(results).unwrap();
    let mut expected = results.to_vec();
    expected.sort_by(|a, b| a.id.cmp(&b.id));
    assert_eq!(from_xml(&text).unwrap(), expected);
    assert_eq!(parse_results(&text).unwrap(), expected);
}

#[test]
fn files_round_trip_in_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let results = &validation_results()[..10];
    for (name, format) in [("r.json", Format::Json), ("r.xml", Format::Xml)] {
        let path = dir.path().join(name);
        write_results(results, format, &path).unwrap();
        let back = read_results(&path).unwrap();
        assert_eq!(back.len(), results.len());
        for r in results {
            assert!(back.contains(r), "{}", r.id);
        }
    }
}

#[test]
fn output_is_byte_stable() {
    let results = validation_results();
    let mut reversed = results.to_vec();
    reversed.reverse();
    assert_eq!(to_json(results).unwrap(), to_json(&reversed).unwrap());
    assert_eq!(to_xml(results).unwrap(), to_xml(&reversed).unwrap());

    let (catalog, machine) = reference();
    let again = with_session(&catalog, &machine, |s| s.characterize(catalog.get("ADC_R64_R64").unwrap()).unwrap());
    let first = with_session(&catalog, &machine, |s| s.characterize(catalog.get("ADC_R64_R64").unwrap()).unwrap());
    assert_eq!(to_json(&[first]).unwrap(), to_json(&[again]).unwrap());
}

#[test]
fn port_usage_strings_are_grammatical() {
    let results = validation_results();
    let text = to_json(results).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    for r in doc["results"].as_array().unwrap() {
        let s = r["port-usage"].as_str().unwrap();
        // Instructions without dispatched uops have an empty usage.
        assert!(s.is_empty() || grammatical(s), "{s}");
    }
    let usage = PortUsage::from_entries([
        ([0u8, 1, 5].into_iter().collect::<PortSet>(), 3),
        ([2u8, 3].into_iter().collect::<PortSet>(), 1),
    ]);
    assert_eq!(usage.to_string(), "3*p015+1*p23");
}

#[test]
fn empty_list_is_a_valid_document() {
    assert!(from_json(&to_json(&[]).unwrap()).unwrap().is_empty());
    assert!(from_xml(&to_xml(&[]).unwrap()).unwrap().is_empty());
}

fn one_result_json() -> String {
    let (catalog, machine) = reference();
    let r = characterize(&catalog, &machine, "AESDEC_XMM_XMM");
    to_json(&[r]).unwrap()
}

#[test]
fn malformed_port_usage_is_a_schema_error() {
    let text = one_result_json();
    let bad = text.replacen("\"port-usage\": \"1*p0+1*p15\"", "\"port-usage\": \"3*p0x5\"", 1);
    assert_ne!(bad, text, "fixture changed");
    assert!(matches!(from_json(&bad), Err(ReportError::Schema { .. })));

    let xml = to_xml(&from_json(&text).unwrap()).unwrap();
    let bad = xml.replacen("port-usage=\"1*p0+1*p15\"", "port-usage=\"3*p0x5\"", 1);
    assert_ne!(bad, xml);
    match from_xml(&bad) {
        Err(ReportError::Schema { path, .. }) => assert!(path.contains("result"), "{path}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn unknown_kind_is_a_schema_error() {
    let text = one_result_json();
    let bad = text.replacen("\"kind\": \"exact\"", "\"kind\": \"approximate\"", 1);
    assert_ne!(bad, text);
    assert!(matches!(from_json(&bad), Err(ReportError::Schema { .. })));

    let xml = to_xml(&from_json(&text).unwrap()).unwrap();
    let bad = xml.replacen("kind=\"exact\"", "kind=\"approximate\"", 1);
    assert_ne!(bad, xml);
    assert!(matches!(from_xml(&bad), Err(ReportError::Schema { .. })));
}

fn usage_strategy() -> impl Strategy<Value = PortUsage> {
    prop::collection::btree_map(1u64..(1 << 12), 1u32..20, 0..5)
        .prop_map(|m| PortUsage::from_entries(m.into_iter().map(|(bits, n)| (PortSet::from_bits(bits), n))))
}

proptest! {
    #[test]
    fn notation_round_trips(u in usage_strategy()) {
        let s = u.to_string();
        prop_assert_eq!(PortUsage::parse(&s).unwrap(), u.clone());
        prop_assert!(u.is_empty() || grammatical(&s), "{}", s);
    }
}
