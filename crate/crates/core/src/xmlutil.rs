//! Small helpers shared by the XML readers. Errors are plain strings that
//! always carry the element path of the offending node.

use std::str::FromStr;

use roxmltree::Node;

pub type XmlResult<T> = Result<T, String>;

pub fn path(node: Node) -> String {
    let mut parts = Vec::new();
    let mut cur = Some(node);
    while let Some(n) = cur {
        if n.is_element() {
            let name = n.tag_name().name();
            let pos = n
                .prev_siblings()
                .filter(|s| *s != n && s.is_element() && s.tag_name().name() == name)
                .count();
            parts.push(format!("{name}[{}]", pos + 1));
        }
        cur = n.parent();
    }
    parts.reverse();
    format!("/{}", parts.join("/"))
}

pub fn fail<T>(node: Node, msg: impl AsRef<str>) -> XmlResult<T> {
    Err(format!("{}: {}", path(node), msg.as_ref()))
}

pub fn parse_document(text: &str) -> XmlResult<roxmltree::Document<'_>> {
    roxmltree::Document::parse(text).map_err(|e| e.to_string())
}

/// Asserts the element is named `name` and carries only `allowed` attributes.
pub fn check(node: Node, name: &str, allowed: &[&str]) -> XmlResult<()> {
    if node.tag_name().name() != name {
        return fail(node, format!("expected <{name}>"));
    }
    for a in node.attributes() {
        if !allowed.contains(&a.name()) {
            return fail(node, format!("unknown attribute `{}`", a.name()));
        }
    }
    for child in node.children() {
        if child.is_text() && !child.text().unwrap_or("").trim().is_empty() {
            return fail(node, "unexpected text content");
        }
    }
    Ok(())
}

pub fn children<'a, 'i>(node: Node<'a, 'i>) -> impl Iterator<Item = Node<'a, 'i>> {
    node.children().filter(|c| c.is_element())
}

pub fn req<'a>(node: Node<'a, '_>, name: &str) -> XmlResult<&'a str> {
    match node.attribute(name) {
        Some(v) => Ok(v),
        None => fail(node, format!("missing attribute `{name}`")),
    }
}

pub fn parse_req<T: FromStr>(node: Node, name: &str) -> XmlResult<T> {
    let raw = req(node, name)?;
    raw.parse()
        .or_else(|_| fail(node, format!("bad value `{raw}` for `{name}`")))
}

pub fn parse_opt<T: FromStr>(node: Node, name: &str) -> XmlResult<Option<T>> {
    match node.attribute(name) {
        None => Ok(None),
        Some(raw) => raw
            .parse()
            .map(Some)
            .or_else(|_| fail(node, format!("bad value `{raw}` for `{name}`"))),
    }
}

pub fn parse_bool(node: Node, name: &str) -> XmlResult<bool> {
    match node.attribute(name) {
        None | Some("false") => Ok(false),
        Some("true") => Ok(true),
        Some(raw) => fail(node, format!("bad boolean `{raw}` for `{name}`")),
    }
}

/// Whitespace-separated list attribute, each item mapped through `f`.
pub fn parse_list<T>(node: Node, name: &str, f: impl Fn(&str) -> Option<T>) -> XmlResult<Vec<T>> {
    let mut out = Vec::new();
    if let Some(raw) = node.attribute(name) {
        for item in raw.split_whitespace() {
            match f(item) {
                Some(v) => out.push(v),
                None => return fail(node, format!("bad item `{item}` in `{name}`")),
            }
        }
    }
    Ok(out)
}

/// Escapes text for use inside a double-quoted attribute or element body.
pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_count_same_named_siblings() {
        let doc = parse_document("<a><b/><c/><b><d/></b></a>").unwrap();
        let d = doc.descendants().find(|n| n.has_tag_name("d")).unwrap();
        assert_eq!(path(d), "/a[1]/b[2]/d[1]");
    }

    #[test]
    fn escape_roundtrips_through_parser() {
        let raw = "a<b & \"c\" 'd'>";
        let text = format!("<x v=\"{}\">{}</x>", escape(raw), escape(raw));
        let doc = parse_document(&text).unwrap();
        let root = doc.root_element();
        assert_eq!(root.attribute("v"), Some(raw));
        assert_eq!(root.text(), Some(raw));
    }
}
