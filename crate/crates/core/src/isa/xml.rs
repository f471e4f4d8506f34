use std::collections::{BTreeMap, BTreeSet};

use roxmltree::Node;

use super::{
    Access, Attribute, CatalogDocument, CatalogError, Flag, InstructionDesc, IsaClass, OperandKind,
    OperandSpec, RegClass, Register,
};
use crate::xmlutil::{self, XmlResult};

pub(super) fn parse(text: &str) -> Result<CatalogDocument, CatalogError> {
    let doc = xmlutil::parse_document(text).map_err(CatalogError::Parse)?;
    read_catalog(doc.root_element()).map_err(CatalogError::Parse)
}

fn read_catalog(root: Node) -> XmlResult<CatalogDocument> {
    xmlutil::check(root, "catalog", &[])?;
    let mut register_classes = BTreeMap::new();
    let mut instructions = Vec::new();
    for child in xmlutil::children(root) {
        match child.tag_name().name() {
            "register-class" => {
                xmlutil::check(child, "register-class", &["name"])?;
                let name = xmlutil::req(child, "name")?;
                let Some(class) = RegClass::parse(name) else {
                    return xmlutil::fail(child, format!("unknown register class `{name}`"));
                };
                let mut regs = Vec::new();
                for r in xmlutil::children(child) {
                    xmlutil::check(r, "register", &["name", "width", "base"])?;
                    regs.push(Register {
                        name: xmlutil::req(r, "name")?.to_string(),
                        width: xmlutil::parse_req(r, "width")?,
                        base: r.attribute("base").map(str::to_string),
                    });
                }
                if register_classes.insert(class, regs).is_some() {
                    return xmlutil::fail(child, format!("register class `{name}` repeated"));
                }
            }
            "instruction" => instructions.push(read_instruction(child)?),
            other => return xmlutil::fail(child, format!("unexpected element <{other}>")),
        }
    }
    Ok(CatalogDocument {
        instructions,
        register_classes,
    })
}

fn read_instruction(node: Node) -> XmlResult<InstructionDesc> {
    xmlutil::check(node, "instruction", &["id", "mnemonic", "isa-class", "attributes"])?;
    let class = xmlutil::req(node, "isa-class")?;
    let Some(isa_class) = IsaClass::parse(class) else {
        return xmlutil::fail(node, format!("unknown isa-class `{class}`"));
    };
    let attributes: BTreeSet<Attribute> =
        xmlutil::parse_list(node, "attributes", Attribute::parse)?.into_iter().collect();
    let mut operands = Vec::new();
    for op in xmlutil::children(node) {
        xmlutil::check(
            op,
            "operand",
            &["index", "kind", "width", "access", "implicit", "fixed-register", "flag-set"],
        )?;
        let kind = xmlutil::req(op, "kind")?;
        let Some(kind) = OperandKind::parse(kind) else {
            return xmlutil::fail(op, format!("unknown operand kind `{kind}`"));
        };
        let access = xmlutil::req(op, "access")?;
        let Some(access) = Access::parse(access) else {
            return xmlutil::fail(op, format!("unknown access `{access}`"));
        };
        operands.push(OperandSpec {
            index: xmlutil::parse_req(op, "index")?,
            kind,
            width: xmlutil::parse_opt(op, "width")?.unwrap_or(0),
            access,
            implicit: xmlutil::parse_bool(op, "implicit")?,
            fixed_register: op.attribute("fixed-register").map(str::to_string),
            flag_set: xmlutil::parse_list(op, "flag-set", Flag::parse)?,
        });
    }
    Ok(InstructionDesc {
        id: xmlutil::req(node, "id")?.to_string(),
        mnemonic: xmlutil::req(node, "mnemonic")?.to_string(),
        isa_class,
        operands,
        attributes,
    })
}

#[cfg(test)]
mod tests {
    use crate::isa::{parse_catalog, CatalogError};

    const XML: &str = r#"<catalog>
      <register-class name="gp">
        <register name="RAX" width="64"/>
        <register name="RDX" width="64"/>
      </register-class>
      <instruction id="DIV_R64" mnemonic="DIV" isa-class="GP" attributes="uses-divider">
        <operand index="0" kind="gp-register" width="64" access="read"/>
        <operand index="1" kind="gp-register" width="64" access="read-write" implicit="true" fixed-register="RAX"/>
        <operand index="2" kind="gp-register" width="64" access="read-write" implicit="true" fixed-register="RDX"/>
        <operand index="3" kind="flags" access="write" implicit="true" flag-set="CF OF"/>
      </instruction>
    </catalog>"#;

    #[test]
    fn xml_matches_json() {
        let from_xml = parse_catalog(XML).unwrap();
        let json = serde_json::to_string(&from_xml.to_json()).unwrap();
        let from_json = parse_catalog(&json).unwrap();
        assert_eq!(from_xml, from_json);
        assert_eq!(from_xml.get("DIV_R64").unwrap().operands.len(), 4);
    }

    #[test]
    fn unknown_attribute_reports_path() {
        let bad = XML.replace("access=\"read\"/>", "access=\"read\" latency=\"3\"/>");
        match parse_catalog(&bad) {
            Err(CatalogError::Parse(msg)) => {
                assert!(msg.contains("/catalog[1]/instruction[1]/operand[1]"), "{msg}")
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
