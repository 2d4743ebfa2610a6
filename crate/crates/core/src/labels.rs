use std::collections::HashMap;
use std::fmt;

/// Dense id of a terminal label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabelId(pub u32);

impl LabelId {
    /// Text placeholder `_T`.
    pub const TEXT: LabelId = LabelId(0);
    /// Attribute list placeholder `_A`.
    pub const ATTRS: LabelId = LabelId(1);
    /// Attribute value placeholder `_AT`.
    pub const ATTR_TEXT: LabelId = LabelId(2);
    /// Null leaf of the binary (first-child/next-sibling) encoding.
    pub const NULL: LabelId = LabelId(3);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for LabelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

pub const TEXT_NAME: &str = "_T";
pub const ATTRS_NAME: &str = "_A";
pub const ATTR_TEXT_NAME: &str = "_AT";
pub const NULL_NAME: &str = "#";

const RESERVED: [&str; 4] = [TEXT_NAME, ATTRS_NAME, ATTR_TEXT_NAME, NULL_NAME];

/// What a terminal label stands for in the XML data model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelKind {
    Element,
    /// `_T` or `_AT`: consumes one slot of the text collection.
    Text,
    /// `_A`
    AttrList,
    /// `@name`
    Attr,
    Null,
}

impl LabelKind {
    pub fn of_name(name: &str) -> LabelKind {
        match name {
            TEXT_NAME | ATTR_TEXT_NAME => LabelKind::Text,
            ATTRS_NAME => LabelKind::AttrList,
            NULL_NAME => LabelKind::Null,
            n if n.starts_with('@') => LabelKind::Attr,
            _ => LabelKind::Element,
        }
    }
}

/// Interned label names. Ids 0..4 are the reserved placeholders.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelTable {
    names: Vec<String>,
    kinds: Vec<LabelKind>,
    lookup: HashMap<String, LabelId>,
}

impl Default for LabelTable {
    fn default() -> Self {
        Self::new()
    }
}

impl LabelTable {
    pub fn new() -> Self {
        let mut t = LabelTable {
            names: Vec::new(),
            kinds: Vec::new(),
            lookup: HashMap::new(),
        };
        for name in RESERVED {
            t.intern(name);
        }
        t
    }

    pub fn intern(&mut self, name: &str) -> LabelId {
        if let Some(&id) = self.lookup.get(name) {
            return id;
        }
        let id = LabelId(self.names.len() as u32);
        self.names.push(name.to_owned());
        self.kinds.push(LabelKind::of_name(name));
        self.lookup.insert(name.to_owned(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<LabelId> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, id: LabelId) -> &str {
        &self.names[id.index()]
    }

    #[inline]
    pub fn kind(&self, id: LabelId) -> LabelKind {
        self.kinds[id.index()]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn ids(&self) -> impl Iterator<Item = LabelId> {
        (0..self.names.len() as u32).map(LabelId)
    }

    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut t = LabelTable::new();
        for n in names {
            t.intern(n.as_ref());
        }
        t
    }
}
