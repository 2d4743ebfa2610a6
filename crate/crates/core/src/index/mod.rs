//! The self-index: a bCNF grammar packed into 64-bit rule words, the start
//! right-hand side with subtree sizes, and auxiliary tables for jumping and
//! position tracking.

mod io;
mod report;

use thiserror::Error;

pub use io::{load_index, load_texts, save_index, save_texts};
pub use report::{IndexCounts, SizeReport};

use crate::grammar::{bcnf_parts, GrammarError, GrammarStats, SltGrammar, Sym};
use crate::labels::{LabelId, LabelKind, LabelTable};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("grammar rank {0} exceeds 15")]
    RankOverflow(u8),
    #[error("{0} symbols exceed the 28-bit id space")]
    IdOverflow(usize),
    #[error("grammar is not in binary normal form: {0}")]
    NotBcnf(String),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error("not an index file")]
    BadMagic,
    #[error("unsupported format version {0}")]
    VersionMismatch(u32),
    #[error("file is truncated")]
    TruncatedFile,
    #[error("checksum mismatch in section {0}")]
    ChecksumMismatch(u32),
    #[error("corrupt index: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const MAX_SYMBOLS: usize = 1 << 28;

/// A symbol of the index: terminals occupy `0..num_terminals`, nonterminals
/// follow in dependency order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymId(pub u32);

/// Packed `(X, i, Y)` of a bCNF rule together with its rank:
/// bits 0-27 `Y`, 28-31 `i`, 32-59 `X`, 60-63 rank.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RuleWord(pub u64);

impl RuleWord {
    pub fn new(x: SymId, i: u8, y: SymId, rank: u8) -> Self {
        debug_assert!(x.0 < 1 << 28 && y.0 < 1 << 28 && i < 16 && rank < 16);
        RuleWord(y.0 as u64 | (i as u64) << 28 | (x.0 as u64) << 32 | (rank as u64) << 60)
    }
    #[inline]
    pub fn y(self) -> SymId {
        SymId((self.0 & 0x0fff_ffff) as u32)
    }
    #[inline]
    pub fn i(self) -> u8 {
        ((self.0 >> 28) & 0xf) as u8
    }
    #[inline]
    pub fn x(self) -> SymId {
        SymId(((self.0 >> 32) & 0x0fff_ffff) as u32)
    }
    #[inline]
    pub fn rank(self) -> u8 {
        (self.0 >> 60) as u8
    }
}

/// Which terminal labels each nonterminal generates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JumpTable {
    words_per_row: usize,
    bits: Vec<u64>,
}

impl JumpTable {
    pub fn row(&self, nt: usize) -> &[u64] {
        &self.bits[nt * self.words_per_row..(nt + 1) * self.words_per_row]
    }

    pub fn get(&self, nt: usize, label: LabelId) -> bool {
        self.row(nt)[label.index() / 64] >> (label.index() % 64) & 1 == 1
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TinyTIndex {
    pub(crate) labels: LabelTable,
    pub(crate) term_ranks: Vec<u8>,
    pub(crate) rules: Vec<RuleWord>,
    pub(crate) start_tags: Vec<u32>,
    pub(crate) find_close: Vec<u32>,
    pub(crate) jump: JumpTable,
    /// Offsets into `pr_map`/`text_map`, one per nonterminal plus one.
    pub(crate) map_offsets: Vec<u32>,
    pub(crate) pr_map: Vec<u32>,
    pub(crate) text_map: Vec<u32>,
    pub(crate) sskip: Vec<u32>,
    pub(crate) text_sskip: Vec<u32>,
    pub(crate) spine: Vec<u64>,
    pub(crate) is_element: Vec<bool>,
    pub(crate) is_text: Vec<bool>,
}

fn element_and_text(labels: &LabelTable) -> (Vec<bool>, Vec<bool>) {
    labels
        .ids()
        .map(|l| match labels.kind(l) {
            LabelKind::Element => (true, false),
            LabelKind::Text => (false, true),
            _ => (false, false),
        })
        .unzip()
}

impl TinyTIndex {
    pub fn labels(&self) -> &LabelTable {
        &self.labels
    }

    pub fn num_terminals(&self) -> usize {
        self.term_ranks.len()
    }

    pub fn num_rules(&self) -> usize {
        self.rules.len()
    }

    pub fn rule(&self, nt: usize) -> RuleWord {
        self.rules[nt]
    }

    pub fn rule_words(&self) -> &[RuleWord] {
        &self.rules
    }

    /// Nonterminal index of a symbol, if it is one.
    #[inline]
    pub fn nt_of(&self, s: SymId) -> Option<usize> {
        (s.0 as usize).checked_sub(self.term_ranks.len())
    }

    #[inline]
    pub fn label_of(&self, s: SymId) -> Option<LabelId> {
        ((s.0 as usize) < self.term_ranks.len()).then_some(LabelId(s.0))
    }

    #[inline]
    pub fn rank(&self, s: SymId) -> u8 {
        match self.nt_of(s) {
            Some(n) => self.rules[n].rank(),
            None => self.term_ranks[s.0 as usize],
        }
    }

    pub fn nt_sym(&self, nt: usize) -> SymId {
        SymId((self.term_ranks.len() + nt) as u32)
    }

    pub fn start_tags(&self) -> &[u32] {
        &self.start_tags
    }

    /// Node count of the start-rhs subtree at `pos`.
    pub fn find_close(&self, pos: usize) -> u32 {
        self.find_close[pos]
    }

    pub fn jump(&self) -> &JumpTable {
        &self.jump
    }

    /// Element counts of the segments of `t_X`, one per parameter plus one.
    pub fn pr_map(&self, nt: usize) -> &[u32] {
        &self.pr_map[self.map_offsets[nt] as usize..self.map_offsets[nt + 1] as usize]
    }

    /// Placeholder counts of the segments of `t_X`.
    pub fn text_map(&self, nt: usize) -> &[u32] {
        &self.text_map[self.map_offsets[nt] as usize..self.map_offsets[nt + 1] as usize]
    }

    pub fn sskip(&self, pos: usize) -> u32 {
        self.sskip[pos]
    }

    pub fn text_sskip(&self, pos: usize) -> u32 {
        self.text_sskip[pos]
    }

    /// Whether the last parameter of `t_X` sits on its 2.2...2 path.
    pub fn last_param_on_spine(&self, nt: usize) -> bool {
        self.spine[nt / 64] >> (nt % 64) & 1 == 1
    }

    #[inline]
    pub fn is_element(&self, l: LabelId) -> bool {
        self.is_element[l.index()]
    }

    #[inline]
    pub fn is_text(&self, l: LabelId) -> bool {
        self.is_text[l.index()]
    }

    pub fn element_count(&self) -> u64 {
        self.sskip.first().copied().unwrap_or(0) as u64
    }

    pub fn text_count(&self) -> u64 {
        self.text_sskip.first().copied().unwrap_or(0) as u64
    }

    pub fn max_rank(&self) -> u8 {
        self.rules.iter().map(|r| r.rank()).max().unwrap_or(0)
    }

    /// Segment counts of any symbol: nonterminals from the maps, terminals
    /// contribute themselves to the first segment.
    pub fn segments(&self, s: SymId) -> (Vec<u32>, Vec<u32>) {
        match self.nt_of(s) {
            Some(n) => (self.pr_map(n).to_vec(), self.text_map(n).to_vec()),
            None => terminal_segments(self, LabelId(s.0)),
        }
    }

    pub fn counts(&self) -> IndexCounts {
        IndexCounts {
            rules: self.rules.len() as u64,
            terminals: self.term_ranks.len() as u64,
            start_nodes: self.start_tags.len() as u64,
            map_entries: self.pr_map.len() as u64,
        }
    }

    pub fn size_report(&self) -> SizeReport {
        SizeReport::from_counts(self.counts())
    }

    /// Statistics of the stored bCNF grammar.
    pub fn grammar_stats(&self) -> GrammarStats {
        let mut depth = vec![0usize; self.rules.len()];
        let sub = |d: &[usize], s: SymId| self.nt_of(s).map_or(0, |m| d[m]);
        for (n, w) in self.rules.iter().enumerate() {
            depth[n] = 1 + sub(&depth, w.x()).max(sub(&depth, w.y()));
        }
        let start_depth = 1 + self
            .start_tags
            .iter()
            .map(|&t| sub(&depth, SymId(t)))
            .max()
            .unwrap_or(0);
        GrammarStats {
            size: self.rules.iter().map(|w| 1 + w.rank() as usize).sum::<usize>() + self.start_tags.len().saturating_sub(1),
            num_rules: self.rules.len(),
            rank: self.max_rank(),
            depth: start_depth,
            start_rhs_size: self.start_tags.len(),
        }
    }

    /// Approximate bytes of the stored tables.
    pub fn total_bytes(&self) -> usize {
        self.rules.len() * 8
            + (self.start_tags.len() + self.find_close.len() + self.sskip.len() + self.text_sskip.len()) * 4
            + self.jump.bits.len() * 8
            + (self.pr_map.len() + self.text_map.len() + self.map_offsets.len()) * 4
            + self.spine.len() * 8
            + self.term_ranks.len()
            + self.labels.names().map(str::len).sum::<usize>()
    }
}

fn terminal_segments(ix: &TinyTIndex, l: LabelId) -> (Vec<u32>, Vec<u32>) {
    let r = ix.term_ranks[l.index()] as usize;
    let mut pr = vec![0; r + 1];
    let mut tx = vec![0; r + 1];
    pr[0] = ix.is_element(l) as u32;
    tx[0] = ix.is_text(l) as u32;
    (pr, tx)
}

/// Segment merge for `(X, i, Y)`: `Y` replaces parameter slot `i` of `X`.
pub(crate) fn merge_segments(xs: &[u32], i: usize, ys: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(xs.len() + ys.len() - 1);
    out.extend_from_slice(&xs[..i - 1]);
    out.push(xs[i - 1] + ys[0]);
    out.extend_from_slice(&ys[1..]);
    *out.last_mut().expect("nonempty") += xs[i];
    out.extend_from_slice(&xs[i + 1..]);
    out
}

/// Builds the index of a grammar in binary normal form.
pub fn build_index(g: &SltGrammar) -> Result<TinyTIndex, IndexError> {
    g.validate()?;
    let g = g.topo_sorted()?;
    if !g.is_bcnf() {
        return Err(IndexError::NotBcnf("a rule has other than two non-parameter nodes".into()));
    }
    let rank = g.stats().rank;
    if rank > 15 {
        return Err(IndexError::RankOverflow(rank));
    }
    let sigma = g.alphabet.len();
    let num_nt = g.rules.len() - 1;
    if sigma + num_nt >= MAX_SYMBOLS {
        return Err(IndexError::IdOverflow(sigma + num_nt));
    }
    if g.alphabet.ranks().iter().any(|&r| r != 0 && r != 2) {
        return Err(IndexError::NotBcnf("terminal ranks must be 0 or 2".into()));
    }
    let sym = |s: Sym| match s {
        Sym::T(l) => SymId(l.0),
        Sym::N(n) => SymId((sigma + n.index()) as u32),
        Sym::Y(_) => unreachable!("parameters are not symbols"),
    };
    let labels = g.alphabet.labels.clone();
    let (is_element, is_text) = element_and_text(&labels);
    let mut ix = TinyTIndex {
        labels,
        term_ranks: g.alphabet.ranks().to_vec(),
        rules: Vec::with_capacity(num_nt),
        start_tags: Vec::new(),
        find_close: Vec::new(),
        jump: JumpTable {
            words_per_row: sigma.div_ceil(64),
            bits: Vec::with_capacity(num_nt * sigma.div_ceil(64)),
        },
        map_offsets: vec![0],
        pr_map: Vec::new(),
        text_map: Vec::new(),
        sskip: Vec::new(),
        text_sskip: Vec::new(),
        spine: vec![0; num_nt.div_ceil(64)],
        is_element,
        is_text,
    };
    // index of the parameter at the end of the right spine, per nonterminal
    let mut spine_param: Vec<Option<u8>> = Vec::with_capacity(num_nt);
    let wpr = ix.jump.words_per_row;
    for n in 0..num_nt {
        let nt = crate::grammar::NtId(n as u32);
        let (x, i, y) = bcnf_parts(&g, nt).expect("bcnf rule");
        let (x, y) = (sym(x), sym(y));
        let r = g.rules[n].rank;
        ix.rules.push(RuleWord::new(x, i, y, r));

        let mut row = vec![0u64; wpr];
        for s in [x, y] {
            match ix.nt_of(s) {
                Some(m) => {
                    for (w, v) in row.iter_mut().zip(ix.jump.row(m)) {
                        *w |= v;
                    }
                }
                None => row[s.0 as usize / 64] |= 1 << (s.0 % 64),
            }
        }
        ix.jump.bits.extend_from_slice(&row);

        let (xp, xt) = ix.segments(x);
        let (yp, yt) = ix.segments(y);
        ix.pr_map.extend(merge_segments(&xp, i as usize, &yp));
        ix.text_map.extend(merge_segments(&xt, i as usize, &yt));
        ix.map_offsets.push(ix.pr_map.len() as u32);

        let sp = |s: SymId| match ix.nt_of(s) {
            Some(m) => spine_param[m],
            None => (ix.term_ranks[s.0 as usize] == 2).then_some(2),
        };
        let ry = ix.rank(y);
        let sp_n = match sp(x) {
            Some(j) if j == i => sp(y).map(|k| i - 1 + k),
            Some(j) if j < i => Some(j),
            Some(j) => Some(j + ry - 1),
            None => None,
        };
        spine_param.push(sp_n);
        if r > 0 && sp_n == Some(r) {
            ix.spine[n / 64] |= 1 << (n % 64);
        }
    }

    let start = &g.rules[g.start.index()].rhs;
    ix.start_tags = start.iter().map(|&s| sym(s).0).collect();
    ix.find_close = g.subtree_sizes(start)?;
    ix.sskip = vec![0; start.len()];
    ix.text_sskip = vec![0; start.len()];
    for p in (0..start.len()).rev() {
        let s = SymId(ix.start_tags[p]);
        let (pr, tx) = ix.segments(s);
        let mut e: u32 = pr.iter().sum();
        let mut t: u32 = tx.iter().sum();
        let mut c = p + 1;
        for _ in 0..ix.rank(s) {
            e += ix.sskip[c];
            t += ix.text_sskip[c];
            c += ix.find_close[c] as usize;
        }
        ix.sskip[p] = e;
        ix.text_sskip[p] = t;
    }
    Ok(ix)
}

/// Start-rhs child positions of `pos`.
pub(crate) fn start_children(ix: &TinyTIndex, pos: usize) -> impl Iterator<Item = usize> + '_ {
    let r = ix.rank(SymId(ix.start_tags[pos]));
    let mut c = pos + 1;
    (0..r).map(move |_| {
        let here = c;
        c += ix.find_close[here] as usize;
        here
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_grammar;

    pub(crate) const G1: &str = "S -> A(A(a(b,c)))\nA(y1) -> f(y1,B)\nB -> C(c)\nC(y1) -> a(y1,c)";

    #[test]
    fn rule_word_fields() {
        let w = RuleWord::new(SymId((1 << 28) - 1), 15, SymId(12345), 15);
        assert_eq!((w.x().0, w.i(), w.y().0, w.rank()), ((1 << 28) - 1, 15, 12345, 15));
    }

    #[test]
    fn g1_tables() {
        let g = parse_grammar(G1, None).unwrap();
        let ix = build_index(&g).unwrap();
        assert_eq!(ix.num_rules(), 3);
        let a = g.labels_nt("A");
        let lb = ix.labels().get("b").unwrap();
        let lf = ix.labels().get("f").unwrap();
        assert!(!ix.jump().get(a, lb));
        assert!(ix.jump().get(a, lf));
        // t_A = f(y1, a(c,c)): one element before y1, three after
        assert_eq!(ix.pr_map(a), [1, 3]);
        assert_eq!(ix.text_map(a), [0, 0]);
        assert!(!ix.last_param_on_spine(a));
        assert_eq!(ix.sskip(0), 11);
        assert_eq!(ix.find_close(0), 5);
        let c = g.labels_nt("C");
        assert!(!ix.last_param_on_spine(c));
    }

    #[test]
    fn grammar_stats_match_the_grammar() {
        let g = parse_grammar(G1, None).unwrap();
        let ix = build_index(&g).unwrap();
        assert_eq!(ix.grammar_stats(), g.stats());
    }

    #[test]
    fn spine_bit_when_parameter_is_rightmost() {
        let g = parse_grammar("S -> A(b)\nA(y1) -> f(B,y1)\nB -> a(c,c)", None).unwrap();
        let b = crate::grammar::to_bcnf(&g).unwrap();
        let ix = build_index(&b).unwrap();
        let a = b.labels_nt("A");
        assert!(ix.last_param_on_spine(a));
        assert_eq!(ix.pr_map(a), [4, 0]);
    }

    #[test]
    fn rank_zero_leaf_pattern() {
        let g = parse_grammar("S -> f(B,B)\nB -> C(c)\nC(y1) -> a(y1,c)", None).unwrap();
        let ix = build_index(&g).unwrap();
        assert_eq!(ix.pr_map(g.labels_nt("B")), [3]);
    }

    #[test]
    fn rejects_non_bcnf() {
        let g = parse_grammar("S -> A(b)\nA(y1) -> f(y1,a(c,c))", None).unwrap();
        assert!(matches!(build_index(&g), Err(IndexError::NotBcnf(_))));
    }

    trait NtLookup {
        fn labels_nt(&self, name: &str) -> usize;
    }
    impl NtLookup for SltGrammar {
        /// Index position of a nonterminal after dependency sorting.
        fn labels_nt(&self, name: &str) -> usize {
            let sorted = self.topo_sorted().unwrap();
            sorted.nt_by_name(name).unwrap().index()
        }
    }
}
