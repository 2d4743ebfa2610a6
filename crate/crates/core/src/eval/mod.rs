//! Evaluation of selecting tree automata directly over the index.
//!
//! The behaviour of a state on a nonterminal (result count, parameter
//! states and in-result flags) is memoized per `(state, flag, nonterminal)`,
//! so every rule is run at most once per such key.

mod print;

use std::collections::HashMap;

use thiserror::Error;

pub use print::{
    materialize_query, print_pass, render_fragment, serialize_fragments, serialize_query, FinalResult,
    PrintOptions, PrintOutcome, Token,
};

use crate::automata::{RhsForm, StAutomaton};
use crate::index::{SymId, TinyTIndex};
use crate::labels::LabelId;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("text index {index} out of range ({count} values)")]
    TextIndexOverflow { index: u64, count: usize },
    #[error("counter mismatch after evaluation: {what} is {got}, expected {expected}")]
    CounterMismatch { what: &'static str, got: u64, expected: u64 },
    #[error("automaton was compiled for {automaton} labels, index has {index}")]
    AlphabetMismatch { automaton: usize, index: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum JumpMode {
    Off,
    Relevant,
    #[default]
    FRelevant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CountOptions {
    pub jump: JumpMode,
    pub skip: bool,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions {
            jump: JumpMode::FRelevant,
            skip: true,
        }
    }
}

/// Work counters of one evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalStats {
    /// Transitions applied at terminal nodes.
    pub transitions: u64,
    /// Behaviours computed (memo misses).
    pub behaviours: u64,
    pub memo_hits: u64,
    pub jumps: u64,
    pub skips: u64,
    /// Distinct nonterminals whose rule was run.
    pub rules_touched: u64,
    /// Behaviour keys computed more than once; zero by construction.
    pub recomputations: u64,
    pub chunk_hits: u64,
    pub chunks_computed: u64,
}

/// The parameter states a jump assigns, or `None` when `nt` must be run.
pub fn jump_decision(ix: &TinyTIndex, a: &StAutomaton, q: u32, nt: usize, mode: JumpMode) -> Option<Vec<u32>> {
    let rank = ix.rule(nt).rank() as usize;
    let row = ix.jump().row(nt);
    let masked = |w: usize| {
        if w == LabelId::NULL.index() / 64 {
            row[w] & !(1u64 << (LabelId::NULL.index() % 64))
        } else {
            row[w]
        }
    };
    let disjoint = |set: &[u64]| (0..row.len()).all(|w| masked(w) & set[w] == 0);
    let subset = |set: &[u64]| (0..row.len()).all(|w| masked(w) & !set[w] == 0);
    match mode {
        JumpMode::Off => None,
        JumpMode::Relevant => disjoint(a.relevant(q)).then(|| vec![q; rank]),
        JumpMode::FRelevant => {
            if !disjoint(a.f_relevant(q)) {
                return None;
            }
            if subset(a.rhs_set(q, RhsForm::Stay)) {
                return Some(vec![q; rank]);
            }
            let u = a.universal()?;
            if subset(a.rhs_set(q, RhsForm::UniversalLeft)) {
                let mut states = vec![u; rank];
                if rank > 0 && ix.last_param_on_spine(nt) {
                    states[rank - 1] = q;
                }
                return Some(states);
            }
            subset(a.rhs_set(q, RhsForm::UniversalBoth)).then(|| vec![u; rank])
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct BehEntry {
    count: u64,
    start: u32,
    len: u8,
}

/// A behaviour: result count plus per-parameter state and in-result flag.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Behaviour {
    pub count: u64,
    pub states: Vec<u32>,
    pub in_result: Vec<bool>,
}

/// Memoized behaviour computation for one automaton over one index.
pub struct Engine<'a> {
    ix: &'a TinyTIndex,
    a: &'a StAutomaton,
    jump: JumpMode,
    skip: bool,
    /// Propagate in-result flags; only serialization needs them.
    track: bool,
    memo: HashMap<u64, u32>,
    entries: Vec<BehEntry>,
    states: Vec<u32>,
    flags: Vec<bool>,
    touched: Vec<bool>,
    pub(crate) stats: EvalStats,
}

#[inline]
fn beh_key(q: u32, u: bool, nt: usize) -> u64 {
    (nt as u64) << 32 | (q as u64) << 1 | u as u64
}

/// Borrowed or computed behaviour of one symbol.
enum View {
    Memo(u32),
    Term { count: u64, states: [u32; 2], flags: [bool; 2], len: u8 },
}

impl<'a> Engine<'a> {
    pub fn new(ix: &'a TinyTIndex, a: &'a StAutomaton, jump: JumpMode, skip: bool, track: bool) -> Result<Self, EvalError> {
        if a.num_labels() != ix.num_terminals() {
            return Err(EvalError::AlphabetMismatch {
                automaton: a.num_labels(),
                index: ix.num_terminals(),
            });
        }
        Ok(Engine {
            ix,
            a,
            jump,
            skip,
            track,
            memo: HashMap::new(),
            entries: Vec::new(),
            states: Vec::new(),
            flags: Vec::new(),
            touched: vec![false; ix.num_rules()],
            stats: EvalStats::default(),
        })
    }

    pub(crate) fn count_of(&self, id: u32) -> u64 {
        self.entries[id as usize].count
    }

    pub(crate) fn param(&self, id: u32, k: usize) -> (u32, bool) {
        let e = self.entries[id as usize];
        (self.states[e.start as usize + k], self.flags[e.start as usize + k])
    }

    pub fn behaviour(&mut self, q: u32, u: bool, nt: usize) -> Behaviour {
        let id = self.get(q, u, nt);
        let e = self.entries[id as usize];
        let r = e.start as usize..e.start as usize + e.len as usize;
        Behaviour {
            count: e.count,
            states: self.states[r.clone()].to_vec(),
            in_result: self.flags[r].to_vec(),
        }
    }

    fn store(&mut self, key: u64, count: u64, states: &[u32], flags: &[bool]) -> u32 {
        let id = self.entries.len() as u32;
        self.entries.push(BehEntry {
            count,
            start: self.states.len() as u32,
            len: states.len() as u8,
        });
        self.states.extend_from_slice(states);
        self.flags.extend_from_slice(flags);
        if self.memo.insert(key, id).is_some() {
            self.stats.recomputations += 1;
        }
        id
    }

    fn view(&mut self, q: u32, u: bool, s: SymId) -> Option<View> {
        match self.ix.nt_of(s) {
            Some(n) => self.memo.get(&beh_key(q, u, n)).map(|&id| View::Memo(id)),
            None => {
                let l = LabelId(s.0);
                let Some(t) = self.a.transition(q, l) else {
                    return Some(View::Term {
                        count: 0,
                        states: [0; 2],
                        flags: [false; 2],
                        len: 0,
                    });
                };
                let len = self.ix.rank(s);
                Some(View::Term {
                    count: t.select as u64,
                    states: [t.left, t.right],
                    flags: [self.track && (u || t.select), self.track && u],
                    len,
                })
            }
        }
    }

    fn view_param(&self, v: &View, k: usize) -> (u32, bool) {
        match v {
            View::Memo(id) => self.param(*id, k),
            View::Term { states, flags, .. } => (states[k], flags[k]),
        }
    }

    fn view_parts(&self, v: &View) -> (u64, Vec<u32>, Vec<bool>) {
        match v {
            View::Memo(id) => {
                let e = self.entries[*id as usize];
                let r = e.start as usize..e.start as usize + e.len as usize;
                (e.count, self.states[r.clone()].to_vec(), self.flags[r].to_vec())
            }
            View::Term { count, states, flags, len } => {
                (*count, states[..*len as usize].to_vec(), flags[..*len as usize].to_vec())
            }
        }
    }

    /// Memo id of the behaviour of `(q, u)` on `nt`, computing it (and what it
    /// depends on) with an explicit stack.
    pub(crate) fn get(&mut self, q: u32, u: bool, nt: usize) -> u32 {
        if let Some(&id) = self.memo.get(&beh_key(q, u, nt)) {
            self.stats.memo_hits += 1;
            return id;
        }
        let mut stack: Vec<(u32, bool, usize, u8)> = vec![(q, u, nt, 0)];
        while let Some(&mut (q, u, n, ref mut stage)) = stack.last_mut() {
            let key = beh_key(q, u, n);
            let w = self.ix.rule(n);
            let rank = w.rank() as usize;
            if *stage == 0 {
                if self.memo.contains_key(&key) {
                    stack.pop();
                    continue;
                }
                if self.skip && self.a.universal() == Some(q) {
                    self.stats.skips += 1;
                    self.store(key, 0, &vec![q; rank], &vec![u; rank]);
                    stack.pop();
                    continue;
                }
                if let Some(states) = jump_decision(self.ix, self.a, q, n, self.jump) {
                    self.stats.jumps += 1;
                    self.store(key, 0, &states, &vec![u; rank]);
                    stack.pop();
                    continue;
                }
                if !self.touched[n] {
                    self.touched[n] = true;
                    self.stats.rules_touched += 1;
                }
                *stage = 1;
                if let Some(m) = self.ix.nt_of(w.x()) {
                    if !self.memo.contains_key(&beh_key(q, u, m)) {
                        stack.push((q, u, m, 0));
                        continue;
                    }
                }
            }
            let vx = self.view(q, u, w.x()).expect("computed");
            let i = w.i() as usize;
            let (qy, uy) = self.view_param(&vx, i - 1);
            if *stage == 1 {
                *stage = 2;
                if let Some(m) = self.ix.nt_of(w.y()) {
                    if !self.memo.contains_key(&beh_key(qy, uy, m)) {
                        stack.push((qy, uy, m, 0));
                        continue;
                    }
                }
            }
            let vy = self.view(qy, uy, w.y()).expect("computed");
            for v in [&vx, &vy] {
                if let View::Term { .. } = v {
                    self.stats.transitions += 1;
                }
            }
            let (cx, sx, fx) = self.view_parts(&vx);
            let (cy, sy, fy) = self.view_parts(&vy);
            let mut states = Vec::with_capacity(rank);
            let mut flags = Vec::with_capacity(rank);
            states.extend_from_slice(&sx[..i - 1]);
            states.extend_from_slice(&sy);
            states.extend_from_slice(&sx[i..]);
            flags.extend_from_slice(&fx[..i - 1]);
            flags.extend_from_slice(&fy);
            flags.extend_from_slice(&fx[i..]);
            self.stats.behaviours += 1;
            self.store(key, cx + cy, &states, &flags);
            stack.pop();
        }
        self.memo[&beh_key(q, u, nt)]
    }
}

/// Number of nodes the automaton selects.
pub fn count(ix: &TinyTIndex, a: &StAutomaton, opts: CountOptions) -> Result<u64, EvalError> {
    count_with_stats(ix, a, opts).map(|(c, _)| c)
}

pub fn count_with_stats(ix: &TinyTIndex, a: &StAutomaton, opts: CountOptions) -> Result<(u64, EvalStats), EvalError> {
    let mut eng = Engine::new(ix, a, opts.jump, opts.skip, false)?;
    let tags = ix.start_tags();
    let mut total = 0u64;
    let mut stack: Vec<(u32, u32)> = vec![(0, a.initial())];
    let mut kids: Vec<usize> = Vec::with_capacity(16);
    while let Some((p, q)) = stack.pop() {
        if opts.skip && a.universal() == Some(q) {
            eng.stats.skips += 1;
            continue;
        }
        let s = SymId(tags[p as usize]);
        kids.clear();
        kids.extend(crate::index::start_children(ix, p as usize));
        match ix.nt_of(s) {
            None => {
                let Some(t) = a.transition(q, LabelId(s.0)) else {
                    continue;
                };
                eng.stats.transitions += 1;
                total += t.select as u64;
                if kids.len() == 2 {
                    stack.push((kids[1] as u32, t.right));
                    stack.push((kids[0] as u32, t.left));
                }
            }
            Some(n) => {
                let id = eng.get(q, false, n);
                total += eng.count_of(id);
                for (k, &c) in kids.iter().enumerate().rev() {
                    stack.push((c as u32, eng.param(id, k).0));
                }
            }
        }
    }
    Ok((total, eng.stats))
}
