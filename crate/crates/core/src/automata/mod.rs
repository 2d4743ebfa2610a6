//! Selecting tree automata over the first-child/next-sibling encoding.
//!
//! A query with steps `s_0..s_{m-1}` has nondeterministic states `q_k`,
//! "looking for step k". At a binary node, `q_k` keeps scanning (to the
//! right only for child and following-sibling steps, to both children for
//! descendant steps) and on a match either selects (last step) or starts
//! the next step at the first child or, for following-sibling, at the next
//! sibling. Determinization tracks sets of such states; the empty set is
//! the universal state.

mod xpath;

use std::collections::{HashMap, VecDeque};
use std::fmt::Write;

pub use xpath::{parse_xpath, Axis, NodeTest, Step, XPathError, XPathQuery};

use crate::grammar::BinaryTree;
use crate::labels::{LabelId, LabelKind, LabelTable};

/// No transition applies (null leaves).
pub const NO_CLASS: u16 = u16::MAX;
const CLASS_ELEMENT: u16 = 0;
const CLASS_TEXT: u16 = 1;
const CLASS_PLACEHOLDER: u16 = 2;

/// Partition of the labels into classes the query cannot tell apart.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelClasses {
    class_of: Vec<u16>,
    names: Vec<String>,
}

impl LabelClasses {
    fn new(q: &XPathQuery, labels: &LabelTable) -> Self {
        let mut names = vec!["L".to_string(), "_T".to_string(), "_A/@/_AT".to_string()];
        let mut explicit: HashMap<&str, u16> = HashMap::new();
        for s in &q.steps {
            if let NodeTest::Name(n) = &s.test {
                explicit.entry(n.as_str()).or_insert_with(|| {
                    names.push(n.clone());
                    names.len() as u16 - 1
                });
            }
        }
        let class_of = labels
            .ids()
            .map(|l| match labels.kind(l) {
                LabelKind::Null => NO_CLASS,
                LabelKind::Text if l == LabelId::TEXT => CLASS_TEXT,
                LabelKind::Element => explicit.get(labels.name(l)).copied().unwrap_or(CLASS_ELEMENT),
                _ => CLASS_PLACEHOLDER,
            })
            .collect();
        LabelClasses { class_of, names }
    }

    #[inline]
    pub fn of(&self, l: LabelId) -> u16 {
        self.class_of.get(l.index()).copied().unwrap_or(CLASS_ELEMENT)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    fn matches(&self, class: u16, test: &NodeTest) -> bool {
        match test {
            NodeTest::Star => class == CLASS_ELEMENT || class > CLASS_PLACEHOLDER,
            NodeTest::Text => class == CLASS_TEXT,
            NodeTest::Name(n) => class > CLASS_PLACEHOLDER && self.names[class as usize] == *n,
        }
    }
}

/// The nondeterministic automaton of a query: state `k` looks for step `k`.
#[derive(Clone, Debug)]
pub struct Nfa {
    pub steps: Vec<Step>,
    pub classes: LabelClasses,
}

/// Compiles a query against the labels of a document.
pub fn compile(q: &XPathQuery, labels: &LabelTable) -> Nfa {
    Nfa {
        steps: q.steps.clone(),
        classes: LabelClasses::new(q, labels),
    }
}

impl Nfa {
    /// Successor sets and selection for a set of states (bit k = `q_k`).
    pub fn step(&self, set: u64, class: u16) -> (u64, u64, bool) {
        let (mut left, mut right, mut select) = (0u64, 0u64, false);
        let m = self.steps.len();
        for k in 0..m {
            if set >> k & 1 == 0 {
                continue;
            }
            match self.steps[k].axis {
                Axis::Descendant => {
                    left |= 1 << k;
                    right |= 1 << k;
                }
                Axis::Child | Axis::FollowingSibling => right |= 1 << k,
            }
            if self.classes.matches(class, &self.steps[k].test) {
                if k + 1 == m {
                    select = true;
                } else if self.steps[k + 1].axis == Axis::FollowingSibling {
                    right |= 1 << (k + 1);
                } else {
                    left |= 1 << (k + 1);
                }
            }
        }
        (left, right, select)
    }

    /// Pre-order positions of the nodes of `t` the automaton selects.
    pub fn select_in(&self, t: &BinaryTree) -> Vec<usize> {
        run_binary(t, 1u64, |set, l| self.step(set, self.classes.of(l)))
    }
}

fn run_binary<S: Copy>(t: &BinaryTree, init: S, step: impl Fn(S, LabelId) -> (S, S, bool)) -> Vec<usize> {
    let labels = t.labels();
    let mut out = Vec::new();
    let mut stack = vec![init];
    for (p, &l) in labels.iter().enumerate() {
        let s = stack.pop().expect("well-formed tree");
        let r = t.alphabet.rank(l);
        if l == LabelId::NULL {
            continue;
        }
        let (left, right, sel) = step(s, l);
        if sel {
            out.push(p);
        }
        if r == 2 {
            stack.push(right);
            stack.push(left);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Trans {
    pub left: u32,
    pub right: u32,
    pub select: bool,
}

/// A deterministic selecting tree automaton with per-state label sets used
/// for jumping.
#[derive(Clone, Debug)]
pub struct StAutomaton {
    classes: LabelClasses,
    num_classes: usize,
    trans: Vec<Trans>,
    initial: u32,
    universal: Option<u32>,
    num_labels: usize,
    words: usize,
    relevant: Vec<u64>,
    f_relevant: Vec<u64>,
    /// Non-f-relevant labels by right-hand side: (q,q), (q_U,q), (q_U,q_U).
    rhs_sets: [Vec<u64>; 3],
    steps: usize,
}

/// How a label's transition in state `q` moves states, for f-jumping.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RhsForm {
    Stay,
    UniversalLeft,
    UniversalBoth,
}

impl StAutomaton {
    pub fn num_states(&self) -> usize {
        self.trans.len() / self.num_classes
    }

    pub fn initial(&self) -> u32 {
        self.initial
    }

    pub fn universal(&self) -> Option<u32> {
        self.universal
    }

    pub fn num_steps(&self) -> usize {
        self.steps
    }

    pub fn classes(&self) -> &LabelClasses {
        &self.classes
    }

    /// The transition for a label; `None` for the null leaf.
    #[inline]
    pub fn transition(&self, q: u32, l: LabelId) -> Option<Trans> {
        let c = self.classes.of(l);
        (c != NO_CLASS).then(|| self.trans[q as usize * self.num_classes + c as usize])
    }

    #[inline]
    fn row<'a>(&self, v: &'a [u64], q: u32) -> &'a [u64] {
        &v[q as usize * self.words..(q as usize + 1) * self.words]
    }

    pub fn relevant(&self, q: u32) -> &[u64] {
        self.row(&self.relevant, q)
    }

    pub fn f_relevant(&self, q: u32) -> &[u64] {
        self.row(&self.f_relevant, q)
    }

    pub fn is_relevant(&self, q: u32, l: LabelId) -> bool {
        self.relevant(q)[l.index() / 64] >> (l.index() % 64) & 1 == 1
    }

    pub fn is_f_relevant(&self, q: u32, l: LabelId) -> bool {
        self.f_relevant(q)[l.index() / 64] >> (l.index() % 64) & 1 == 1
    }

    pub fn rhs_set(&self, q: u32, form: RhsForm) -> &[u64] {
        let v = match form {
            RhsForm::Stay => &self.rhs_sets[0],
            RhsForm::UniversalLeft => &self.rhs_sets[1],
            RhsForm::UniversalBoth => &self.rhs_sets[2],
        };
        self.row(v, q)
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    /// Pre-order positions of the nodes of `t` the automaton selects.
    pub fn select_in(&self, t: &BinaryTree) -> Vec<usize> {
        run_binary(t, self.initial, |q, l| {
            let tr = self.transition(q, l).expect("non-null");
            (tr.left, tr.right, tr.select)
        })
    }

    /// Transition table in arrow notation; `⇒` marks selecting transitions.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        if let Some(u) = self.universal {
            let _ = writeln!(out, "q_U = q{u}");
        }
        for q in 0..self.num_states() as u32 {
            let row = |c: usize| self.trans[q as usize * self.num_classes + c];
            let default = row(0);
            let mut except = Vec::new();
            for c in 1..self.num_classes {
                let t = row(c);
                if t != default {
                    except.push(self.classes.names[c].clone());
                    let _ = writeln!(out, "{}", arrow(q, &self.classes.names[c], t));
                }
            }
            let all = if except.is_empty() {
                "L".to_string()
            } else {
                format!("L-{{{}}}", except.join(","))
            };
            let _ = writeln!(out, "{}", arrow(q, &all, default));
        }
        out
    }
}

fn arrow(q: u32, label: &str, t: Trans) -> String {
    format!(
        "q{q},{label} {} (q{},q{})",
        if t.select { "=>" } else { "->" },
        t.left,
        t.right
    )
}

/// Subset construction followed by merging of equivalent states.
pub fn determinize(nfa: &Nfa) -> StAutomaton {
    assert!(nfa.steps.len() <= 64, "at most 64 steps");
    let nc = nfa.classes.len();
    let mut ids: HashMap<u64, u32> = HashMap::new();
    let mut sets: Vec<u64> = Vec::new();
    let mut queue = VecDeque::new();
    let mut intern = |s: u64, sets: &mut Vec<u64>, queue: &mut VecDeque<u64>| -> u32 {
        *ids.entry(s).or_insert_with(|| {
            sets.push(s);
            queue.push_back(s);
            sets.len() as u32 - 1
        })
    };
    intern(1, &mut sets, &mut queue);
    let mut raw: Vec<Trans> = Vec::new();
    while let Some(s) = queue.pop_front() {
        for c in 0..nc as u16 {
            let (l, r, select) = nfa.step(s, c);
            let left = intern(l, &mut sets, &mut queue);
            let right = intern(r, &mut sets, &mut queue);
            raw.push(Trans { left, right, select });
        }
    }
    // raw is filled in discovery order, which is the id order
    let (trans, num_states) = minimize(&raw, nc);
    build(nfa.classes.clone(), trans, num_states, nfa.steps.len())
}

/// Moore partition refinement; state 0 stays initial.
fn minimize(raw: &[Trans], nc: usize) -> (Vec<Trans>, usize) {
    let n = raw.len() / nc;
    let mut block: Vec<u32> = vec![0; n];
    // initial partition by selection signature
    let mut sig_ids: HashMap<Vec<bool>, u32> = HashMap::new();
    for q in 0..n {
        let sig: Vec<bool> = (0..nc).map(|c| raw[q * nc + c].select).collect();
        let k = sig_ids.len() as u32;
        block[q] = *sig_ids.entry(sig).or_insert(k);
    }
    loop {
        let mut ids: HashMap<Vec<u32>, u32> = HashMap::new();
        let mut next = vec![0u32; n];
        for q in 0..n {
            let mut sig = vec![block[q]];
            for c in 0..nc {
                let t = raw[q * nc + c];
                sig.push(block[t.left as usize]);
                sig.push(block[t.right as usize]);
            }
            let k = ids.len() as u32;
            next[q] = *ids.entry(sig).or_insert(k);
        }
        let stable = ids.len() == block.iter().copied().max().map_or(0, |m| m as usize + 1);
        block = next;
        if stable {
            break;
        }
    }
    // renumber blocks by first occurrence so the initial state is 0
    let mut order: Vec<u32> = vec![u32::MAX; n];
    let mut count = 0u32;
    for q in 0..n {
        let b = block[q] as usize;
        if order[b] == u32::MAX {
            order[b] = count;
            count += 1;
        }
    }
    let m = count as usize;
    let mut trans = vec![
        Trans {
            left: 0,
            right: 0,
            select: false
        };
        m * nc
    ];
    for q in 0..n {
        let b = order[block[q] as usize] as usize;
        for c in 0..nc {
            let t = raw[q * nc + c];
            trans[b * nc + c] = Trans {
                left: order[block[t.left as usize] as usize],
                right: order[block[t.right as usize] as usize],
                select: t.select,
            };
        }
    }
    (trans, m)
}

fn build(classes: LabelClasses, trans: Vec<Trans>, num_states: usize, steps: usize) -> StAutomaton {
    let nc = classes.len();
    let universal = (0..num_states as u32).find(|&q| {
        (0..nc).all(|c| {
            let t = trans[q as usize * nc + c];
            t.left == q && t.right == q && !t.select
        })
    });
    let num_labels = classes.class_of.len();
    let words = num_labels.div_ceil(64).max(1);
    let mut relevant = vec![0u64; num_states * words];
    let mut f_relevant = vec![0u64; num_states * words];
    let mut rhs_sets = [
        vec![0u64; num_states * words],
        vec![0u64; num_states * words],
        vec![0u64; num_states * words],
    ];
    for q in 0..num_states as u32 {
        for (l, &c) in classes.class_of.iter().enumerate() {
            if c == NO_CLASS {
                continue;
            }
            let t = trans[q as usize * nc + c as usize];
            let bit = 1u64 << (l % 64);
            let w = q as usize * words + l / 64;
            if t.select || t.left != q || t.right != q {
                relevant[w] |= bit;
            }
            let u = universal;
            let form = if t.select {
                None
            } else if t.left == q && t.right == q {
                Some(0)
            } else if Some(t.left) == u && t.right == q {
                Some(1)
            } else if Some(t.left) == u && Some(t.right) == u {
                Some(2)
            } else {
                None
            };
            match form {
                Some(k) => rhs_sets[k][w] |= bit,
                None => f_relevant[w] |= bit,
            }
        }
    }
    StAutomaton {
        classes,
        num_classes: nc,
        trans,
        initial: 0,
        universal,
        num_labels,
        words,
        relevant,
        f_relevant,
        rhs_sets,
        steps,
    }
}

/// Parses, compiles and determinizes in one go.
pub fn automaton_for(query: &str, labels: &LabelTable) -> Result<StAutomaton, XPathError> {
    let q = parse_xpath(query)?;
    Ok(determinize(&compile(&q, labels)))
}
