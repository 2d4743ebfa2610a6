//! Straight-line tree grammars over ranked alphabets.
//!
//! Every right-hand side is stored as a pre-order symbol sequence; the shape
//! follows from symbol ranks (terminal ranks from the [`Alphabet`], nonterminal
//! ranks from their rules, parameters are leaves).

mod bcnf;
mod binary;
mod dag;
mod repair;
mod text;

use std::collections::HashMap;

use thiserror::Error;

pub use bcnf::{bcnf_parts, to_bcnf};
pub use binary::{binarize, unbinarize, BinaryTree};
pub use dag::build_dag;
pub use repair::compress_repair;
pub use text::{parse_grammar, parse_term};

use crate::labels::{LabelId, LabelTable};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GrammarError {
    #[error("nonterminal reference cycle through `{0}`")]
    CycleDetected(String),
    #[error("invalid grammar: {0}")]
    Invalid(String),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("label `{label}` used with ranks {first} and {second}")]
    RankMismatch { label: String, first: u8, second: u8 },
    #[error("not a first-child/next-sibling encoded tree: {0}")]
    NotFcns(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NtId(pub u32);

impl NtId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A right-hand-side symbol. Parameters are numbered from 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sym {
    T(LabelId),
    N(NtId),
    Y(u16),
}

/// Terminal labels together with their ranks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alphabet {
    pub labels: LabelTable,
    ranks: Vec<u8>,
}

impl Alphabet {
    /// The first-child/next-sibling alphabet: every label is binary except
    /// the null leaf.
    pub fn fcns(labels: LabelTable) -> Self {
        let ranks = labels
            .ids()
            .map(|l| if l == LabelId::NULL { 0 } else { 2 })
            .collect();
        Alphabet { labels, ranks }
    }

    pub fn with_ranks(labels: LabelTable, ranks: Vec<u8>) -> Self {
        assert_eq!(labels.len(), ranks.len());
        Alphabet { labels, ranks }
    }

    #[inline]
    pub fn rank(&self, l: LabelId) -> u8 {
        self.ranks[l.index()]
    }

    pub fn ranks(&self) -> &[u8] {
        &self.ranks
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn is_fcns(&self) -> bool {
        self.labels
            .ids()
            .all(|l| self.rank(l) == if l == LabelId::NULL { 0 } else { 2 })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub name: String,
    pub rank: u8,
    pub rhs: Vec<Sym>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SltGrammar {
    pub alphabet: Alphabet,
    pub rules: Vec<Rule>,
    pub start: NtId,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GrammarStats {
    /// Total number of edges over all right-hand sides.
    pub size: usize,
    /// Rules other than the start rule.
    pub num_rules: usize,
    pub rank: u8,
    pub depth: usize,
    /// Node count of the start right-hand side.
    pub start_rhs_size: usize,
}

impl SltGrammar {
    #[inline]
    pub fn sym_rank(&self, s: Sym) -> u8 {
        match s {
            Sym::T(l) => self.alphabet.rank(l),
            Sym::N(n) => self.rules[n.index()].rank,
            Sym::Y(_) => 0,
        }
    }

    pub fn rule(&self, n: NtId) -> &Rule {
        &self.rules[n.index()]
    }

    pub fn start_rule(&self) -> &Rule {
        self.rule(self.start)
    }

    pub fn nt_by_name(&self, name: &str) -> Option<NtId> {
        self.rules
            .iter()
            .position(|r| r.name == name)
            .map(|i| NtId(i as u32))
    }

    /// Subtree node counts for every position of `rhs`.
    pub fn subtree_sizes(&self, rhs: &[Sym]) -> Result<Vec<u32>, GrammarError> {
        subtree_sizes(rhs, |s| self.sym_rank(s))
    }

    /// Nonterminals reachable from the start, each after everything it references.
    pub fn topo_order(&self) -> Result<Vec<NtId>, GrammarError> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        let mut mark = vec![Mark::New; self.rules.len()];
        let mut order = Vec::with_capacity(self.rules.len());
        // (rule, next rhs position to scan)
        let mut stack: Vec<(NtId, usize)> = vec![(self.start, 0)];
        mark[self.start.index()] = Mark::Active;
        while let Some(&mut (nt, ref mut pos)) = stack.last_mut() {
            let rhs = &self.rules[nt.index()].rhs;
            let mut descend = None;
            while *pos < rhs.len() {
                let s = rhs[*pos];
                *pos += 1;
                if let Sym::N(m) = s {
                    let Some(&mk) = mark.get(m.index()) else {
                        return Err(GrammarError::Invalid(format!("undefined nonterminal {}", m.0)));
                    };
                    match mk {
                        Mark::Active => {
                            return Err(GrammarError::CycleDetected(self.rules[m.index()].name.clone()))
                        }
                        Mark::New => {
                            descend = Some(m);
                            break;
                        }
                        Mark::Done => {}
                    }
                }
            }
            match descend {
                Some(m) => {
                    mark[m.index()] = Mark::Active;
                    stack.push((m, 0));
                }
                None => {
                    mark[nt.index()] = Mark::Done;
                    order.push(nt);
                    stack.pop();
                }
            }
        }
        Ok(order)
    }

    /// Checks well-formedness: rhs shapes agree with ranks, each rank-k rule
    /// uses y1..yk exactly once in order, no parameters in the start rule,
    /// and the reference graph is acyclic.
    pub fn validate(&self) -> Result<(), GrammarError> {
        if self.start.index() >= self.rules.len() {
            return Err(GrammarError::Invalid("start rule missing".into()));
        }
        if self.start_rule().rank != 0 {
            return Err(GrammarError::Invalid("start rule has parameters".into()));
        }
        for r in &self.rules {
            if r.rhs.is_empty() {
                return Err(GrammarError::Invalid(format!("{}: empty rhs", r.name)));
            }
            for s in &r.rhs {
                match *s {
                    Sym::T(l) if l.index() >= self.alphabet.len() => {
                        return Err(GrammarError::Invalid(format!("{}: unknown terminal", r.name)));
                    }
                    Sym::N(n) if n.index() >= self.rules.len() => {
                        return Err(GrammarError::Invalid(format!("{}: undefined nonterminal", r.name)));
                    }
                    _ => {}
                }
            }
            if matches!(r.rhs[0], Sym::Y(_)) {
                return Err(GrammarError::Invalid(format!("{}: rhs is a bare parameter", r.name)));
            }
            self.subtree_sizes(&r.rhs)
                .map_err(|e| GrammarError::Invalid(format!("{}: {e}", r.name)))?;
            let params: Vec<u16> = r
                .rhs
                .iter()
                .filter_map(|s| match s {
                    Sym::Y(k) => Some(*k),
                    _ => None,
                })
                .collect();
            if params.iter().copied().ne(1..=r.rank as u16) {
                return Err(GrammarError::Invalid(format!(
                    "{}: parameters {:?} are not y1..y{} in order",
                    r.name, params, r.rank
                )));
            }
        }
        self.topo_order()?;
        Ok(())
    }

    pub fn stats(&self) -> GrammarStats {
        let size = self.rules.iter().map(|r| r.rhs.len() - 1).sum();
        let rank = self.rules.iter().map(|r| r.rank).max().unwrap_or(0);
        let mut depth_of = vec![0usize; self.rules.len()];
        let mut depth = 0;
        if let Ok(order) = self.topo_order() {
            for nt in order {
                let d = 1 + self.rules[nt.index()]
                    .rhs
                    .iter()
                    .filter_map(|s| match s {
                        Sym::N(m) => Some(depth_of[m.index()]),
                        _ => None,
                    })
                    .max()
                    .unwrap_or(0);
                depth_of[nt.index()] = d;
            }
            depth = depth_of[self.start.index()];
        }
        GrammarStats {
            size,
            num_rules: self.rules.len() - 1,
            rank,
            depth,
            start_rhs_size: self.start_rule().rhs.len(),
        }
    }

    /// The tree generated by the grammar.
    pub fn expand(&self) -> Result<BinaryTree, GrammarError> {
        self.topo_order()?;
        let syms = Inliner::new(self).inline(&self.start_rule().rhs, |_| true);
        let labels = syms
            .into_iter()
            .map(|s| match s {
                Sym::T(l) => l,
                _ => unreachable!("fully expanded"),
            })
            .collect();
        Ok(BinaryTree::from_preorder(self.alphabet.clone(), labels))
    }

    /// `t_X`: the pattern generated by `nt`, over terminals and parameters.
    pub fn pattern_tree(&self, nt: NtId) -> Result<Vec<Sym>, GrammarError> {
        self.topo_order()?;
        Ok(Inliner::new(self).inline(&self.rule(nt).rhs, |_| true))
    }

    /// Number of rules of each rank.
    pub fn rank_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; 16];
        for (i, r) in self.rules.iter().enumerate() {
            if i != self.start.index() {
                if h.len() <= r.rank as usize {
                    h.resize(r.rank as usize + 1, 0);
                }
                h[r.rank as usize] += 1;
            }
        }
        h
    }

    /// Whether every non-start rule has exactly two non-parameter nodes.
    pub fn is_bcnf(&self) -> bool {
        self.rules
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.start.index())
            .all(|(_, r)| non_param_count(&r.rhs) == 2)
    }

    /// A one-rule grammar whose start rhs is `t`.
    pub fn one_rule(t: &BinaryTree) -> Self {
        SltGrammar {
            alphabet: t.alphabet.clone(),
            rules: vec![Rule {
                name: "S".into(),
                rank: 0,
                rhs: t.labels().iter().map(|&l| Sym::T(l)).collect(),
            }],
            start: NtId(0),
        }
    }

    /// Reorders rules so that every rule comes after the rules it references,
    /// with the start rule last. Unreachable rules are dropped.
    pub fn topo_sorted(&self) -> Result<SltGrammar, GrammarError> {
        let order = self.topo_order()?;
        let mut new_id = vec![u32::MAX; self.rules.len()];
        for (i, nt) in order.iter().enumerate() {
            new_id[nt.index()] = i as u32;
        }
        let rules = order
            .iter()
            .map(|nt| {
                let r = &self.rules[nt.index()];
                Rule {
                    name: r.name.clone(),
                    rank: r.rank,
                    rhs: r
                        .rhs
                        .iter()
                        .map(|&s| match s {
                            Sym::N(m) => Sym::N(NtId(new_id[m.index()])),
                            s => s,
                        })
                        .collect(),
                }
            })
            .collect::<Vec<_>>();
        Ok(SltGrammar {
            alphabet: self.alphabet.clone(),
            start: NtId(rules.len() as u32 - 1),
            rules,
        })
    }
}

pub(crate) fn non_param_count(rhs: &[Sym]) -> usize {
    rhs.iter().filter(|s| !matches!(s, Sym::Y(_))).count()
}

/// Subtree node counts of a pre-order sequence whose shape is given by `rank`.
pub fn subtree_sizes<F: Fn(Sym) -> u8>(rhs: &[Sym], rank: F) -> Result<Vec<u32>, GrammarError> {
    let mut sizes = vec![0u32; rhs.len()];
    let mut stack: Vec<u32> = Vec::new();
    for i in (0..rhs.len()).rev() {
        let k = rank(rhs[i]) as usize;
        if stack.len() < k {
            return Err(GrammarError::Invalid(format!("position {i}: too few children")));
        }
        let mut total = 1u32;
        for _ in 0..k {
            total += stack.pop().expect("checked");
        }
        sizes[i] = total;
        stack.push(total);
    }
    if stack.len() != 1 {
        return Err(GrammarError::Invalid(format!(
            "sequence encodes {} trees, expected one",
            stack.len()
        )));
    }
    Ok(sizes)
}

/// Positions of the children of `pos`.
pub(crate) fn child_positions(sizes: &[u32], pos: usize, rank: u8) -> impl Iterator<Item = usize> + '_ {
    let mut c = pos + 1;
    (0..rank).map(move |_| {
        let here = c;
        c += sizes[here] as usize;
        here
    })
}

/// Expands nonterminals selected by a predicate, substituting parameters.
/// Works with an explicit stack, so arbitrarily deep trees are fine.
pub(crate) struct Inliner<'g> {
    g: &'g SltGrammar,
    sizes: HashMap<NtId, Vec<u32>>,
}

impl<'g> Inliner<'g> {
    pub(crate) fn new(g: &'g SltGrammar) -> Self {
        Inliner {
            g,
            sizes: HashMap::new(),
        }
    }

    fn sizes_of(&mut self, nt: NtId) -> &[u32] {
        let g = self.g;
        self.sizes
            .entry(nt)
            .or_insert_with(|| g.subtree_sizes(&g.rule(nt).rhs).expect("validated rhs"))
    }

    /// Pre-order of `rhs` with every nonterminal satisfying `inline` replaced
    /// by its right-hand side. Parameters of `rhs` itself are kept.
    pub(crate) fn inline<F: Fn(NtId) -> bool>(&mut self, rhs: &[Sym], inline: F) -> Vec<Sym> {
        struct Frame {
            rule: Option<NtId>,
            caller: u32,
            call_pos: u32,
        }
        const NONE: u32 = u32::MAX;
        let g = self.g;
        let root_sizes = g.subtree_sizes(rhs).expect("validated rhs");
        let mut frames = vec![Frame {
            rule: None,
            caller: NONE,
            call_pos: 0,
        }];
        let mut out = Vec::with_capacity(rhs.len());
        let mut stack: Vec<(u32, u32)> = vec![(0, 0)];
        let mut kids: Vec<usize> = Vec::new();
        while let Some((f, pos)) = stack.pop() {
            let rule = frames[f as usize].rule;
            let sym = match rule {
                None => rhs[pos as usize],
                Some(nt) => g.rule(nt).rhs[pos as usize],
            };
            match sym {
                Sym::N(x) if inline(x) => {
                    frames.push(Frame {
                        rule: Some(x),
                        caller: f,
                        call_pos: pos,
                    });
                    stack.push((frames.len() as u32 - 1, 0));
                }
                Sym::Y(k) if frames[f as usize].caller != NONE => {
                    let Frame { caller, call_pos, .. } = frames[f as usize];
                    let caller_rule = frames[caller as usize].rule;
                    let call_sym = match caller_rule {
                        None => rhs[call_pos as usize],
                        Some(nt) => g.rule(nt).rhs[call_pos as usize],
                    };
                    let sizes: &[u32] = match caller_rule {
                        None => &root_sizes,
                        Some(nt) => self.sizes_of(nt),
                    };
                    let arg = child_positions(sizes, call_pos as usize, g.sym_rank(call_sym))
                        .nth(k as usize - 1)
                        .expect("argument exists");
                    stack.push((caller, arg as u32));
                }
                _ => {
                    out.push(sym);
                    let r = g.sym_rank(sym);
                    if r > 0 {
                        let sizes: &[u32] = match rule {
                            None => &root_sizes,
                            Some(nt) => self.sizes_of(nt),
                        };
                        kids.clear();
                        kids.extend(child_positions(sizes, pos as usize, r));
                        stack.extend(kids.iter().rev().map(|&c| (f, c as u32)));
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// The tree generated by the worked-example grammars.
    pub(crate) const T: &str = "f(f(a(b,c),a(c,c)),a(c,c))";
    pub(crate) const RANK1: &str = "S -> A(A(a(b,c)))\nA(y1) -> f(y1,a(c,c))";
    pub(crate) const G1: &str = "S -> A(A(a(b,c)))\nA(y1) -> f(y1,B)\nB -> C(c)\nC(y1) -> a(y1,c)";

    #[test]
    fn expand_worked_examples() {
        let t = parse_term(T).unwrap();
        for src in [RANK1, G1] {
            let g = parse_grammar(src, None).unwrap();
            g.validate().unwrap();
            assert_eq!(g.expand().unwrap().to_term(), t.to_term(), "{src}");
        }
    }

    #[test]
    fn stats_of_worked_examples() {
        let g1 = parse_grammar(G1, None).unwrap();
        let s = g1.stats();
        assert_eq!((s.size, s.num_rules, s.rank), (9, 3, 1));
        assert_eq!(s.depth, 4);
        let r1 = parse_grammar(RANK1, None).unwrap();
        assert_eq!(r1.stats().size, 8);
        let t = parse_term(T).unwrap();
        let one = SltGrammar::one_rule(&t);
        assert_eq!(one.stats().size, 10);
        assert_eq!(one.stats().depth, 1);
    }

    #[test]
    fn self_reference_is_a_cycle() {
        let g = parse_grammar("S -> S", None).unwrap();
        assert_eq!(g.expand().unwrap_err(), GrammarError::CycleDetected("S".into()));
        let g = parse_grammar("S -> f(A,c)\nA -> g(B)\nB(y1) -> A", None);
        assert!(g.is_err() || g.unwrap().validate().is_err());
    }

    #[test]
    fn pattern_tree_of_a() {
        let g = parse_grammar(G1, None).unwrap();
        let a = g.nt_by_name("A").unwrap();
        let p = g.pattern_tree(a).unwrap();
        assert_eq!(text::rhs_to_string(&g, &p), "f(y1,a(c,c))");
    }

    #[test]
    fn parameter_order_is_validated() {
        let g = parse_grammar("S -> A(b,c)\nA(y1,y2) -> f(y2,y1)", None).unwrap();
        assert!(matches!(g.validate(), Err(GrammarError::Invalid(_))));
    }
}
