//! Node-wise view of the indexed tree. A node is the sequence of rule
//! applications leading to the terminal that labels it.

mod pool;

use std::fmt;

use thiserror::Error;

pub use pool::{NodePool, NodeStore, Plain, PoolId};

use crate::index::{SymId, TinyTIndex};
use crate::labels::LabelId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NavError {
    #[error("invalid node id: {0}")]
    InvalidNodeId(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RuleRef {
    Start,
    Nt(u32),
}

/// A position inside one rule's right-hand side. Start positions are
/// pre-order node indexes; bCNF rules use 0 for `X` and 1 for `Y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pair {
    pub rule: RuleRef,
    pub pos: u32,
}

impl Pair {
    pub fn start(pos: u32) -> Self {
        Pair { rule: RuleRef::Start, pos }
    }
    pub fn nt(nt: usize, pos: u32) -> Self {
        Pair {
            rule: RuleRef::Nt(nt as u32),
            pos,
        }
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.rule {
            RuleRef::Start => write!(f, "(S,{})", self.pos),
            RuleRef::Nt(n) => write!(f, "(N{n},{})", self.pos),
        }
    }
}

/// Validated pair sequence ending at a terminal.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) Vec<Pair>);

impl NodeId {
    pub fn pairs(&self) -> &[Pair] {
        &self.0
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|p| write!(f, "{p}"))
    }
}

enum Slot {
    Pos(u32),
    Param(usize),
}

/// Navigation over an index, storing node ids in `S`.
pub struct Navigator<'a, S: NodeStore = Plain> {
    ix: &'a TinyTIndex,
    store: S,
    start_parent: Vec<(u32, u8)>,
    /// Nonterminals left unexpanded by the last tagged search.
    pub jumps: u64,
}

impl<'a> Navigator<'a, Plain> {
    pub fn new(ix: &'a TinyTIndex) -> Self {
        Navigator::with_store(ix, Plain)
    }

    pub fn node(&self, pairs: Vec<Pair>) -> Result<NodeId, NavError> {
        self.check(&pairs)?;
        Ok(NodeId(pairs))
    }
}

impl<'a, S: NodeStore> Navigator<'a, S> {
    pub fn with_store(ix: &'a TinyTIndex, store: S) -> Self {
        let tags = ix.start_tags();
        let mut start_parent = vec![(u32::MAX, 0u8); tags.len()];
        for p in 0..tags.len() {
            for (k, c) in crate::index::start_children(ix, p).enumerate() {
                start_parent[c] = (p as u32, k as u8 + 1);
            }
        }
        Navigator {
            ix,
            store,
            start_parent,
            jumps: 0,
        }
    }

    pub fn index(&self) -> &'a TinyTIndex {
        self.ix
    }

    pub fn store(&self) -> &S {
        &self.store
    }

    fn sym_at(&self, p: Pair) -> Option<SymId> {
        match p.rule {
            RuleRef::Start => self.ix.start_tags().get(p.pos as usize).map(|&s| SymId(s)),
            RuleRef::Nt(n) => {
                let w = self.ix.rule_words().get(n as usize)?;
                match p.pos {
                    0 => Some(w.x()),
                    1 => Some(w.y()),
                    _ => None,
                }
            }
        }
    }

    fn sym(&self, p: Pair) -> SymId {
        self.sym_at(p).expect("valid pair")
    }

    /// Check that a raw pair sequence names a node.
    pub fn check(&self, pairs: &[Pair]) -> Result<(), NavError> {
        let bad = |m: &str| Err(NavError::InvalidNodeId(m.to_string()));
        let Some(first) = pairs.first() else { return bad("empty") };
        if first.rule != RuleRef::Start {
            return bad("does not begin in the start rule");
        }
        for (k, &p) in pairs.iter().enumerate() {
            let Some(s) = self.sym_at(p) else { return bad("position out of range") };
            let next = pairs.get(k + 1);
            match (self.ix.nt_of(s), next) {
                (Some(n), Some(q)) if q.rule == RuleRef::Nt(n as u32) => {}
                (None, None) => {}
                (Some(_), _) => return bad("pair does not continue into its nonterminal"),
                (None, Some(_)) => return bad("continues past a terminal"),
            }
        }
        Ok(())
    }

    fn descend(&mut self, mut h: S::Handle) -> S::Handle {
        while let Some(m) = self.ix.nt_of(self.sym(self.store.top(&h))) {
            h = self.store.push(&h, Pair::nt(m, 0));
        }
        h
    }

    /// Where the `k`-th argument (1-based) of the symbol at `p` lives.
    fn child_slot(&self, p: Pair, k: usize) -> Slot {
        match p.rule {
            RuleRef::Start => {
                let c = crate::index::start_children(self.ix, p.pos as usize)
                    .nth(k - 1)
                    .expect("argument exists");
                Slot::Pos(c as u32)
            }
            RuleRef::Nt(n) => {
                let w = self.ix.rule(n as usize);
                let i = w.i() as usize;
                if p.pos == 1 {
                    return Slot::Param(i - 1 + k);
                }
                let ry = self.ix.rank(w.y()) as usize;
                match k.cmp(&i) {
                    std::cmp::Ordering::Equal => Slot::Pos(1),
                    std::cmp::Ordering::Less => Slot::Param(k),
                    std::cmp::Ordering::Greater => Slot::Param(k + ry - 1),
                }
            }
        }
    }

    /// The `k`-th argument of the symbol at the top of `h`, not descended.
    fn arg_raw(&mut self, h: &S::Handle, mut k: usize) -> S::Handle {
        let mut h = h.clone();
        loop {
            let top = self.store.top(&h);
            match self.child_slot(top, k) {
                Slot::Pos(p) => {
                    return self.store.replace_top(&h, Pair { rule: top.rule, pos: p });
                }
                Slot::Param(j) => {
                    h = self.store.pop(&h).expect("parameter resolved inside the start rule");
                    k = j;
                }
            }
        }
    }

    pub fn root(&mut self) -> S::Handle {
        let h = self.store.single(Pair::start(0));
        self.descend(h)
    }

    pub fn label(&self, h: &S::Handle) -> LabelId {
        LabelId(self.sym(self.store.top(h)).0)
    }

    /// The `k`-th child (1-based) in the expanded ranked tree.
    pub fn child(&mut self, h: &S::Handle, k: usize) -> Option<S::Handle> {
        let r = self.ix.rank(self.sym(self.store.top(h))) as usize;
        if k == 0 || k > r {
            return None;
        }
        let a = self.arg_raw(h, k);
        Some(self.descend(a))
    }

    /// Follow parameter `k` of the nonterminal at the top of `h` down to the
    /// terminal holding it.
    fn seek(&mut self, mut h: S::Handle, mut k: usize) -> (S::Handle, usize) {
        while let Some(m) = self.ix.nt_of(self.sym(self.store.top(&h))) {
            let w = self.ix.rule(m);
            let i = w.i() as usize;
            let ry = self.ix.rank(w.y()) as usize;
            let (pos, kk) = if k < i {
                (0, k)
            } else if k < i + ry {
                (1, k - i + 1)
            } else {
                (0, k + 1 - ry)
            };
            h = self.store.push(&h, Pair::nt(m, pos));
            k = kk;
        }
        (h, k)
    }

    /// Parent in the expanded ranked tree and the child index of `h` in it.
    pub fn ranked_parent(&mut self, h: &S::Handle) -> Option<(S::Handle, usize)> {
        let mut h = h.clone();
        loop {
            let top = self.store.top(&h);
            match top.rule {
                RuleRef::Start => {
                    if top.pos == 0 {
                        return None;
                    }
                    let (pp, k) = self.start_parent[top.pos as usize];
                    let h = self.store.replace_top(&h, Pair::start(pp));
                    return Some(self.seek(h, k as usize));
                }
                RuleRef::Nt(n) => {
                    if top.pos == 1 {
                        let i = self.ix.rule(n as usize).i() as usize;
                        let h = self.store.replace_top(&h, Pair::nt(n as usize, 0));
                        return Some(self.seek(h, i));
                    }
                    h = self.store.pop(&h)?;
                }
            }
        }
    }

    fn non_null(&self, h: Option<S::Handle>) -> Option<S::Handle> {
        h.filter(|h| self.label(h) != LabelId::NULL)
    }

    /// First child in the unranked document tree.
    pub fn first_child(&mut self, h: &S::Handle) -> Option<S::Handle> {
        let c = self.child(h, 1);
        self.non_null(c)
    }

    pub fn next_sibling(&mut self, h: &S::Handle) -> Option<S::Handle> {
        let c = self.child(h, 2);
        self.non_null(c)
    }

    /// Parent in the unranked document tree.
    pub fn parent(&mut self, h: &S::Handle) -> Option<S::Handle> {
        let mut h = h.clone();
        loop {
            let (p, k) = self.ranked_parent(&h)?;
            if k == 1 {
                return Some(p);
            }
            h = p;
        }
    }

    /// First node labeled `b` in pre-order of the ranked subtrees in `roots`,
    /// jumping nonterminals that cannot produce `b`.
    fn search(&mut self, roots: Vec<S::Handle>, b: LabelId) -> Option<S::Handle> {
        let mut stack = roots;
        stack.reverse();
        while let Some(h) = stack.pop() {
            let s = self.sym(self.store.top(&h));
            match self.ix.nt_of(s) {
                Some(m) if self.ix.jump().get(m, b) => stack.push(self.store.push(&h, Pair::nt(m, 0))),
                _ => {
                    let l = self.ix.label_of(s);
                    if l == Some(b) {
                        return Some(h);
                    }
                    if l.is_none() {
                        self.jumps += 1;
                    }
                    let r = self.ix.rank(s) as usize;
                    for k in (1..=r).rev() {
                        let a = self.arg_raw(&h, k);
                        stack.push(a);
                    }
                }
            }
        }
        None
    }

    /// First strict descendant of `h` labeled `b`, in document order.
    pub fn tagged_desc(&mut self, h: &S::Handle, b: LabelId) -> Option<S::Handle> {
        self.jumps = 0;
        if b == LabelId::NULL || self.ix.rank(self.sym(self.store.top(h))) == 0 {
            return None;
        }
        let a = self.arg_raw(h, 1);
        self.search(vec![a], b)
    }

    /// First node labeled `b` after the subtree of `h`, in document order.
    pub fn tagged_foll(&mut self, h: &S::Handle, b: LabelId) -> Option<S::Handle> {
        self.jumps = 0;
        if b == LabelId::NULL {
            return None;
        }
        let mut cur = h.clone();
        let mut from = 1usize;
        loop {
            let r = self.ix.rank(self.sym(self.store.top(&cur))) as usize;
            let roots: Vec<S::Handle> = (from + 1..=r).map(|k| self.arg_raw(&cur, k)).collect();
            if let Some(found) = self.search(roots, b) {
                return Some(found);
            }
            let (p, k) = self.ranked_parent(&cur)?;
            cur = p;
            from = k;
        }
    }

    pub fn node_id(&self, h: &S::Handle) -> NodeId {
        NodeId(self.store.pairs(h))
    }
}

/// Explicit-stack pre-order walk over the unranked tree.
pub struct Cursor<'n, 'a, S: NodeStore> {
    nav: &'n mut Navigator<'a, S>,
    stack: Vec<S::Handle>,
    started: bool,
}

impl<'n, 'a, S: NodeStore> Cursor<'n, 'a, S> {
    pub fn new(nav: &'n mut Navigator<'a, S>) -> Self {
        Cursor {
            nav,
            stack: Vec::new(),
            started: false,
        }
    }

    pub fn depth(&self) -> usize {
        self.stack.len()
    }

    pub fn current(&self) -> Option<&S::Handle> {
        self.stack.last()
    }

    /// Move to the next node in document order.
    pub fn advance(&mut self) -> Option<LabelId> {
        if !self.started {
            self.started = true;
            let r = self.nav.root();
            let l = self.nav.label(&r);
            if l == LabelId::NULL {
                return None;
            }
            self.stack.push(r);
            return Some(l);
        }
        let top = self.stack.last()?.clone();
        if let Some(c) = self.nav.first_child(&top) {
            let l = self.nav.label(&c);
            self.stack.push(c);
            return Some(l);
        }
        while let Some(h) = self.stack.pop() {
            if let Some(s) = self.nav.next_sibling(&h) {
                let l = self.nav.label(&s);
                self.stack.push(s);
                return Some(l);
            }
        }
        None
    }
}

impl<S: NodeStore> Iterator for Cursor<'_, '_, S> {
    type Item = LabelId;
    fn next(&mut self) -> Option<LabelId> {
        self.advance()
    }
}

/// Document-order labels via recursion on first child.
pub fn dflr_recursive<S: NodeStore>(nav: &mut Navigator<'_, S>) -> Vec<LabelId> {
    fn walk<S: NodeStore>(nav: &mut Navigator<'_, S>, h: S::Handle, out: &mut Vec<LabelId>) {
        let mut cur = Some(h);
        while let Some(h) = cur {
            out.push(nav.label(&h));
            if let Some(c) = nav.first_child(&h) {
                walk(nav, c, out);
            }
            cur = nav.next_sibling(&h);
        }
    }
    let mut out = Vec::new();
    let r = nav.root();
    if nav.label(&r) != LabelId::NULL {
        walk(nav, r, &mut out);
    }
    out
}

/// Document-order labels via an explicit cursor.
pub fn dflr_iterative<S: NodeStore>(nav: &mut Navigator<'_, S>) -> Vec<LabelId> {
    Cursor::new(nav).collect()
}

/// Order-sensitive hash of a label sequence.
pub fn label_checksum(labels: impl IntoIterator<Item = LabelId>) -> u64 {
    labels
        .into_iter()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, l| (h ^ (l.0 as u64 + 1)).wrapping_mul(0x0100_0000_01b3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_grammar;
    use crate::index::build_index;

    const G1: &str = "S -> A(A(a(b,c)))\nA(y1) -> f(y1,B)\nB -> C(c)\nC(y1) -> a(y1,c)";

    fn g1() -> TinyTIndex {
        build_index(&parse_grammar(G1, None).unwrap()).unwrap()
    }

    // nonterminal ids follow dependency order C, B, A
    const NT_A: usize = 2;

    #[test]
    fn root_and_first_child_of_g1() {
        let ix = g1();
        let a = NT_A;
        let mut nav = Navigator::new(&ix);
        let r = nav.root();
        assert_eq!(r.pairs(), [Pair::start(0), Pair::nt(a, 0)]);
        assert_eq!(ix.labels().name(nav.label(&r)), "f");
        let c = nav.child(&r, 1).unwrap();
        assert_eq!(c.pairs(), [Pair::start(1), Pair::nt(a, 0)]);
        assert_eq!(nav.ranked_parent(&c), Some((r.clone(), 1)));
        assert_eq!(nav.ranked_parent(&r), None);
    }

    #[test]
    fn tagged_desc_jumps_second_a() {
        let ix = g1();
        let mut nav = Navigator::new(&ix);
        let r = nav.root();
        let b = ix.labels().get("b").unwrap();
        let found = nav.tagged_desc(&r, b).unwrap();
        assert_eq!(found.pairs(), [Pair::start(3)]);
        assert!(nav.jumps >= 1);
        let x = ix.labels().get("_T").unwrap();
        assert_eq!(nav.tagged_desc(&r, x), None);
        assert_eq!(nav.tagged_foll(&found, b), None);
    }

    #[test]
    fn node_ids_are_validated() {
        let ix = g1();
        let nav = Navigator::new(&ix);
        assert!(nav.node(vec![Pair::start(3)]).is_ok());
        assert!(nav.node(vec![Pair::start(0)]).is_err());
        assert!(nav.node(vec![Pair::start(99)]).is_err());
        assert!(nav.node(vec![Pair::start(3), Pair::nt(0, 0)]).is_err());
    }

    #[test]
    fn traversals_agree_with_pool() {
        let (st, _) = crate::xml::make_structure_tree(crate::xml::tests::MINI_DOC.as_bytes()).unwrap();
        let bt = crate::grammar::binarize(&st);
        let g = crate::grammar::to_bcnf(&crate::grammar::compress_repair(&bt, 4)).unwrap();
        let ix = build_index(&g).unwrap();
        let mut nav = Navigator::new(&ix);
        let rec = dflr_recursive(&mut nav);
        assert_eq!(rec, dflr_iterative(&mut nav));
        let mut pooled = Navigator::with_store(&ix, NodePool::new());
        assert_eq!(rec, dflr_iterative(&mut pooled));
        let expect: Vec<LabelId> = bt.labels().iter().copied().filter(|&l| l != LabelId::NULL).collect();
        assert_eq!(rec, expect);
    }
}
