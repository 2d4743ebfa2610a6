//! XML structure trees: parsing a restricted XML dialect into a tree whose
//! text and attribute values are replaced by placeholder leaves, and writing
//! such a tree (plus its values) back out as XML.

use std::io::Write;

use quick_xml::events::Event;
use quick_xml::Reader;
use thiserror::Error;

use crate::labels::{LabelId, LabelKind, LabelTable};

#[derive(Debug, Error)]
pub enum XmlError {
    #[error("malformed XML at byte {position}: {message}")]
    Malformed { position: u64, message: String },
    #[error("unsupported construct: {0}")]
    Unsupported(String),
    #[error("text index {index} out of range ({count} values)")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("write failed: {0}")]
    Sink(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StNode {
    pub label: LabelId,
    pub first_child: Option<u32>,
    pub next_sibling: Option<u32>,
    pub parent: Option<u32>,
}

/// Unranked ordered tree with `_T`/`_A`/`@name`/`_AT` placeholder nodes.
/// Nodes are stored in pre-order, so node 0 is the root.
#[derive(Clone, Debug)]
pub struct StructureTree {
    pub nodes: Vec<StNode>,
    pub labels: LabelTable,
}

impl StructureTree {
    pub const ROOT: u32 = 0;

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn label(&self, n: u32) -> LabelId {
        self.nodes[n as usize].label
    }

    pub fn children(&self, n: u32) -> Children<'_> {
        Children {
            tree: self,
            next: self.nodes[n as usize].first_child,
        }
    }

    /// Number of `_T`/`_AT` placeholders.
    pub fn text_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| self.labels.kind(n.label) == LabelKind::Text)
            .count()
    }

    pub fn element_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| self.labels.kind(n.label) == LabelKind::Element)
            .count()
    }

    /// Compares shape and label names, ignoring label id assignment.
    pub fn same_tree(&self, other: &StructureTree) -> bool {
        if self.nodes.len() != other.nodes.len() {
            return false;
        }
        self.nodes.iter().zip(&other.nodes).all(|(a, b)| {
            self.labels.name(a.label) == other.labels.name(b.label)
                && a.first_child == b.first_child
                && a.next_sibling == b.next_sibling
                && a.parent == b.parent
        })
    }

    /// Checks the placeholder invariants of the data model.
    pub fn validate(&self) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("empty tree".into());
        }
        for (i, n) in self.nodes.iter().enumerate() {
            let i = i as u32;
            let mut prev = None;
            for c in self.children(i) {
                if self.nodes[c as usize].parent != Some(i) {
                    return Err(format!("node {c}: parent link mismatch"));
                }
                if c <= prev.unwrap_or(i) {
                    return Err(format!("node {c}: not in pre-order"));
                }
                prev = Some(c);
            }
            let kind = self.labels.kind(n.label);
            match kind {
                LabelKind::Text if n.first_child.is_some() => {
                    return Err(format!("node {i}: placeholder with children"));
                }
                LabelKind::AttrList => {
                    if self.children(i).any(|c| self.labels.kind(self.label(c)) != LabelKind::Attr) {
                        return Err(format!("node {i}: _A child is not an attribute"));
                    }
                    let parent = n.parent.ok_or("_A at root")?;
                    if self.nodes[parent as usize].first_child != Some(i) {
                        return Err(format!("node {i}: _A is not the first child"));
                    }
                }
                LabelKind::Attr => {
                    let mut cs = self.children(i);
                    match (cs.next(), cs.next()) {
                        (Some(c), None) if self.label(c) == LabelId::ATTR_TEXT => {}
                        _ => return Err(format!("node {i}: attribute needs one _AT child")),
                    }
                    if n.parent.map(|p| self.label(p)) != Some(LabelId::ATTRS) {
                        return Err(format!("node {i}: attribute outside _A"));
                    }
                }
                LabelKind::Null => return Err(format!("node {i}: null label in structure tree")),
                _ => {}
            }
            if n.label == LabelId::ATTR_TEXT
                && n.parent.map(|p| self.labels.kind(self.label(p))) != Some(LabelKind::Attr)
            {
                return Err(format!("node {i}: _AT outside attribute"));
            }
        }
        Ok(())
    }
}

pub struct Children<'a> {
    tree: &'a StructureTree,
    next: Option<u32>,
}

impl Iterator for Children<'_> {
    type Item = u32;
    fn next(&mut self) -> Option<u32> {
        let cur = self.next?;
        self.next = self.tree.nodes[cur as usize].next_sibling;
        Some(cur)
    }
}

/// Builds a [`StructureTree`] from open/close events in document order.
#[derive(Debug)]
pub struct TreeBuilder {
    nodes: Vec<StNode>,
    labels: LabelTable,
    open: Vec<u32>,
    last_child: Vec<Option<u32>>,
}

impl TreeBuilder {
    pub fn new(labels: LabelTable) -> Self {
        TreeBuilder {
            nodes: Vec::new(),
            labels,
            open: Vec::new(),
            last_child: Vec::new(),
        }
    }

    pub fn labels_mut(&mut self) -> &mut LabelTable {
        &mut self.labels
    }

    pub fn depth(&self) -> usize {
        self.open.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Label of the last child appended to the currently open node.
    pub fn last_child_label(&self) -> Option<LabelId> {
        let last = (*self.last_child.last()?)?;
        Some(self.nodes[last as usize].label)
    }

    fn append(&mut self, label: LabelId) -> u32 {
        let id = self.nodes.len() as u32;
        let parent = self.open.last().copied();
        self.nodes.push(StNode {
            label,
            first_child: None,
            next_sibling: None,
            parent,
        });
        if let Some(p) = parent {
            let slot = self.last_child.last_mut().expect("open node");
            match *slot {
                Some(prev) => self.nodes[prev as usize].next_sibling = Some(id),
                None => self.nodes[p as usize].first_child = Some(id),
            }
            *slot = Some(id);
        }
        id
    }

    pub fn open(&mut self, label: LabelId) -> u32 {
        let id = self.append(label);
        self.open.push(id);
        self.last_child.push(None);
        id
    }

    pub fn close(&mut self) {
        self.open.pop();
        self.last_child.pop();
    }

    pub fn leaf(&mut self, label: LabelId) -> u32 {
        self.append(label)
    }

    pub fn finish(self) -> StructureTree {
        StructureTree {
            nodes: self.nodes,
            labels: self.labels,
        }
    }
}

/// Attribute and text values in document order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TextCollection {
    buffer: Vec<u8>,
    offsets: Vec<usize>,
}

impl TextCollection {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, value: &[u8]) {
        self.offsets.push(self.buffer.len());
        self.buffer.extend_from_slice(value);
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// The `i`-th value, counting from zero.
    pub fn get_text(&self, i: usize) -> Result<&[u8], XmlError> {
        let start = *self.offsets.get(i).ok_or(XmlError::IndexOutOfRange {
            index: i,
            count: self.offsets.len(),
        })?;
        let end = self.offsets.get(i + 1).copied().unwrap_or(self.buffer.len());
        Ok(&self.buffer[start..end])
    }

    pub fn buffer(&self) -> &[u8] {
        &self.buffer
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn from_parts(buffer: Vec<u8>, offsets: Vec<usize>) -> Option<Self> {
        let ok = offsets.windows(2).all(|w| w[0] <= w[1])
            && offsets.last().map_or(true, |&o| o <= buffer.len());
        ok.then_some(TextCollection { buffer, offsets })
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u8]> {
        (0..self.len()).map(|i| self.get_text(i).expect("in range"))
    }
}

fn malformed(reader: &Reader<&[u8]>, message: impl Into<String>) -> XmlError {
    XmlError::Malformed {
        position: reader.buffer_position() as u64,
        message: message.into(),
    }
}

fn check_element_name(name: &str) -> Result<(), XmlError> {
    match LabelKind::of_name(name) {
        LabelKind::Element => Ok(()),
        _ => Err(XmlError::Unsupported(format!(
            "element name `{name}` collides with a reserved placeholder label"
        ))),
    }
}

/// Parses `xml` into its structure tree and text collection.
///
/// Comments, processing instructions and the XML declaration are skipped.
/// A DOCTYPE with an internal subset is rejected.
pub fn make_structure_tree(xml: &[u8]) -> Result<(StructureTree, TextCollection), XmlError> {
    let mut reader = Reader::from_reader(xml);
    reader.config_mut().trim_text(false);
    reader.config_mut().check_end_names = true;

    let mut b = TreeBuilder::new(LabelTable::new());
    let mut texts = TextCollection::new();
    let mut pending: Vec<u8> = Vec::new();
    let mut seen_root = false;

    // Text is merged across CDATA sections and flushed at the next tag.
    let flush = |b: &mut TreeBuilder, texts: &mut TextCollection, pending: &mut Vec<u8>| {
        if !pending.is_empty() {
            b.leaf(LabelId::TEXT);
            texts.push(pending);
            pending.clear();
        }
    };

    loop {
        let ev = reader
            .read_event()
            .map_err(|e| malformed(&reader, e.to_string()))?;
        match ev {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let empty = matches!(ev, Event::Empty(_));
                if b.depth() == 0 {
                    if seen_root {
                        return Err(malformed(&reader, "more than one root element"));
                    }
                    seen_root = true;
                }
                flush(&mut b, &mut texts, &mut pending);
                let name = std::str::from_utf8(e.name().as_ref())
                    .map_err(|_| malformed(&reader, "element name is not UTF-8"))?
                    .to_owned();
                check_element_name(&name)?;
                let label = b.labels_mut().intern(&name);
                b.open(label);
                let mut attrs = e.attributes();
                attrs.with_checks(true);
                let mut any = false;
                for attr in attrs {
                    let attr = attr.map_err(|e| malformed(&reader, e.to_string()))?;
                    if !any {
                        b.open(LabelId::ATTRS);
                        any = true;
                    }
                    let key = std::str::from_utf8(attr.key.as_ref())
                        .map_err(|_| malformed(&reader, "attribute name is not UTF-8"))?;
                    let label = b.labels_mut().intern(&format!("@{key}"));
                    let value = attr
                        .unescape_value()
                        .map_err(|e| malformed(&reader, e.to_string()))?;
                    b.open(label);
                    b.leaf(LabelId::ATTR_TEXT);
                    b.close();
                    texts.push(value.as_bytes());
                }
                if any {
                    b.close();
                }
                if empty {
                    b.close();
                }
            }
            Event::End(_) => {
                flush(&mut b, &mut texts, &mut pending);
                b.close();
            }
            Event::Text(t) => {
                let s = t.unescape().map_err(|e| malformed(&reader, e.to_string()))?;
                if b.depth() == 0 {
                    if !s.trim().is_empty() {
                        return Err(malformed(&reader, "text outside the root element"));
                    }
                } else {
                    pending.extend_from_slice(s.as_bytes());
                }
            }
            Event::CData(c) => {
                if b.depth() == 0 {
                    return Err(malformed(&reader, "CDATA outside the root element"));
                }
                pending.extend_from_slice(&c.into_inner());
            }
            Event::DocType(d) => {
                if d.as_ref().contains(&b'[') {
                    return Err(XmlError::Unsupported("DTD internal subset".into()));
                }
            }
            Event::Decl(_) | Event::Comment(_) | Event::PI(_) => {}
            Event::Eof => break,
        }
    }
    if b.depth() != 0 {
        return Err(malformed(&reader, "unexpected end of input inside an element"));
    }
    if !seen_root {
        return Err(malformed(&reader, "no root element"));
    }
    Ok((b.finish(), texts))
}

pub(crate) fn escape_text(out: &mut Vec<u8>, value: &[u8]) {
    for &c in value {
        match c {
            b'&' => out.extend_from_slice(b"&amp;"),
            b'<' => out.extend_from_slice(b"&lt;"),
            b'>' => out.extend_from_slice(b"&gt;"),
            b'"' => out.extend_from_slice(b"&quot;"),
            b'\r' => out.extend_from_slice(b"&#13;"),
            _ => out.push(c),
        }
    }
}

pub(crate) fn escape_attr(out: &mut Vec<u8>, value: &[u8]) {
    for &c in value {
        match c {
            b'&' => out.extend_from_slice(b"&amp;"),
            b'<' => out.extend_from_slice(b"&lt;"),
            b'"' => out.extend_from_slice(b"&quot;"),
            b'\t' => out.extend_from_slice(b"&#9;"),
            b'\n' => out.extend_from_slice(b"&#10;"),
            b'\r' => out.extend_from_slice(b"&#13;"),
            _ => out.push(c),
        }
    }
}

/// Writes the document described by `st` and `tc`. Empty elements are written
/// as `<a></a>`.
pub fn emit_xml<W: Write>(st: &StructureTree, tc: &TextCollection, sink: &mut W) -> Result<(), XmlError> {
    let mut out = Vec::with_capacity(1 << 16);
    let mut next_text = 0usize;
    let take_text = |next_text: &mut usize| -> Result<&[u8], XmlError> {
        let t = tc.get_text(*next_text)?;
        *next_text += 1;
        Ok(t)
    };
    enum Step {
        Enter(u32),
        Leave(u32),
    }
    let mut stack = vec![Step::Enter(StructureTree::ROOT)];
    while let Some(step) = stack.pop() {
        match step {
            Step::Enter(n) => {
                let label = st.label(n);
                match st.labels.kind(label) {
                    LabelKind::Text => escape_text(&mut out, take_text(&mut next_text)?),
                    LabelKind::Element => {
                        out.push(b'<');
                        out.extend_from_slice(st.labels.name(label).as_bytes());
                        let mut content = st.nodes[n as usize].first_child;
                        if let Some(a) = content.filter(|&c| st.label(c) == LabelId::ATTRS) {
                            for attr in st.children(a) {
                                out.push(b' ');
                                out.extend_from_slice(&st.labels.name(st.label(attr)).as_bytes()[1..]);
                                out.extend_from_slice(b"=\"");
                                escape_attr(&mut out, take_text(&mut next_text)?);
                                out.push(b'"');
                            }
                            content = st.nodes[a as usize].next_sibling;
                        }
                        out.push(b'>');
                        stack.push(Step::Leave(n));
                        let kids: Vec<u32> = std::iter::successors(content, |&c| st.nodes[c as usize].next_sibling).collect();
                        stack.extend(kids.into_iter().rev().map(Step::Enter));
                    }
                    _ => {
                        return Err(XmlError::Unsupported(format!(
                            "placeholder `{}` outside its element",
                            st.labels.name(label)
                        )))
                    }
                }
            }
            Step::Leave(n) => {
                out.extend_from_slice(b"</");
                out.extend_from_slice(st.labels.name(st.label(n)).as_bytes());
                out.push(b'>');
            }
        }
        if out.len() >= 1 << 16 {
            sink.write_all(&out)?;
            out.clear();
        }
    }
    sink.write_all(&out)?;
    Ok(())
}

/// Byte length of the document with all text and attribute values cut out.
pub fn structure_xml_len(st: &StructureTree) -> usize {
    let mut empty = TextCollection::new();
    for _ in 0..st.text_count() {
        empty.push(b"");
    }
    let mut out = Vec::new();
    emit_xml(st, &empty, &mut out).expect("vec sink");
    out.len()
}

/// Term syntax, e.g. `name(_A(@id(_AT),@r(_AT)),_T)`.
pub fn to_term(st: &StructureTree) -> String {
    let mut s = String::new();
    enum Step {
        Enter(u32),
        Text(&'static str),
    }
    let mut stack = vec![Step::Enter(StructureTree::ROOT)];
    while let Some(step) = stack.pop() {
        match step {
            Step::Text(t) => s.push_str(t),
            Step::Enter(n) => {
                s.push_str(st.labels.name(st.label(n)));
                let kids: Vec<u32> = st.children(n).collect();
                if !kids.is_empty() {
                    s.push('(');
                    stack.push(Step::Text(")"));
                    for (i, &c) in kids.iter().enumerate().rev() {
                        stack.push(Step::Enter(c));
                        if i > 0 {
                            stack.push(Step::Text(","));
                        }
                    }
                }
            }
        }
    }
    s
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const MINI_DOC: &str = "<g>This<f><f><a><b>is</b></a><c>a test</c></f><a><c>document</c><c>for the purpose</c></a></f><a><c>of explaining</c><c>serialization</c></a></g>";

    fn texts(tc: &TextCollection) -> Vec<String> {
        tc.iter().map(|t| String::from_utf8(t.to_vec()).unwrap()).collect()
    }

    #[test]
    fn attributes_become_placeholders() {
        let (st, tc) = make_structure_tree(br#"<name id="9" r="4">Text</name>"#).unwrap();
        assert_eq!(to_term(&st), "name(_A(@id(_AT),@r(_AT)),_T)");
        assert_eq!(texts(&tc), ["9", "4", "Text"]);
        st.validate().unwrap();
    }

    #[test]
    fn single_empty_element() {
        let (st, tc) = make_structure_tree(b"<a/>").unwrap();
        assert_eq!(to_term(&st), "a");
        assert!(tc.is_empty());
        let mut out = Vec::new();
        emit_xml(&st, &tc, &mut out).unwrap();
        assert_eq!(out, b"<a></a>");
    }

    #[test]
    fn get_text_on_mini_document() {
        let (_, tc) = make_structure_tree(MINI_DOC.as_bytes()).unwrap();
        assert_eq!(tc.get_text(6).unwrap(), b"serialization");
        assert_eq!(tc.get_text(0).unwrap(), b"This");
        assert!(matches!(
            tc.get_text(tc.len()),
            Err(XmlError::IndexOutOfRange { index: 7, count: 7 })
        ));
    }

    #[test]
    fn emit_inverts_parse() {
        let (st, tc) = make_structure_tree(br#"<name id="9" r="4">Text</name>"#).unwrap();
        let mut out = Vec::new();
        emit_xml(&st, &tc, &mut out).unwrap();
        assert_eq!(out, br#"<name id="9" r="4">Text</name>"#);
    }

    #[test]
    fn entities_round_trip() {
        let src = "<a x=\"&lt;&amp;&quot;&#10;\">1 &lt; 2 &amp;&amp; 3 &gt; 2<b/>  </a>";
        let (st, tc) = make_structure_tree(src.as_bytes()).unwrap();
        assert_eq!(texts(&tc), ["<&\"\n", "1 < 2 && 3 > 2", "  "]);
        let mut out = Vec::new();
        emit_xml(&st, &tc, &mut out).unwrap();
        let (st2, tc2) = make_structure_tree(&out).unwrap();
        assert!(st.same_tree(&st2));
        assert_eq!(tc, tc2);
    }

    #[test]
    fn whitespace_between_elements_is_kept() {
        let (st, _) = make_structure_tree(b"<a>\n  <b/>\n</a>\n").unwrap();
        assert_eq!(to_term(&st), "a(_T,b,_T)");
    }

    #[test]
    fn comments_and_pis_are_skipped() {
        let (st, tc) = make_structure_tree(b"<?xml version=\"1.0\"?><!-- c --><a>x<!-- y -->z<?p q?></a>").unwrap();
        assert_eq!(to_term(&st), "a(_T)");
        assert_eq!(texts(&tc), ["xz"]);
    }

    #[test]
    fn malformed_inputs() {
        for bad in ["<a><b></a>", "<a>", "<a></a><b/>", "text<a/>", ""] {
            assert!(
                matches!(make_structure_tree(bad.as_bytes()), Err(XmlError::Malformed { .. })),
                "{bad}"
            );
        }
        assert!(matches!(
            make_structure_tree(b"<!DOCTYPE a [<!ENTITY e \"x\">]><a/>"),
            Err(XmlError::Unsupported(_))
        ));
        assert!(matches!(make_structure_tree(b"<_T/>"), Err(XmlError::Unsupported(_))));
    }

    #[test]
    fn placeholder_count_matches_collection() {
        let (st, tc) = make_structure_tree(MINI_DOC.as_bytes()).unwrap();
        assert_eq!(st.text_count(), tc.len());
        assert_eq!(st.element_count(), 12);
    }
}
