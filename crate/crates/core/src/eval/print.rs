//! Serialization of query results: a pass producing intermediate result
//! tokens plus a final result list, with per-chunk memoization, followed by
//! rendering against the text collection.

use std::collections::HashMap;
use std::io::Write;

use super::{Engine, EvalError, EvalStats, JumpMode};
use crate::automata::StAutomaton;
use crate::index::{start_children, SymId, TinyTIndex};
use crate::labels::{LabelId, LabelKind};
use crate::xml::{escape_attr, escape_text, TextCollection};

/// Intermediate result token. Text labels occupy one slot and never close.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Token {
    Open { label: LabelId, result: bool },
    Text { label: LabelId, result: bool },
    Close(LabelId),
}

/// One selected node: 1-based token position, texts and elements before it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FinalResult {
    pub irt_pos: usize,
    pub num_t: u64,
    pub num_elem: u64,
    pub is_text: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PrintOptions {
    pub jump: JumpMode,
    pub skip: bool,
    pub chunk_memo: bool,
    /// Emit tokens; when false only the final result list is built.
    pub emit: bool,
}

impl Default for PrintOptions {
    fn default() -> Self {
        PrintOptions {
            jump: JumpMode::FRelevant,
            skip: true,
            chunk_memo: true,
            emit: true,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct PrintOutcome {
    pub tokens: Vec<Token>,
    pub results: Vec<FinalResult>,
    pub stats: EvalStats,
}

#[derive(Clone, Copy)]
struct ChunkMemo {
    irt_start: u32,
    irt_len: u32,
    frl_start: u32,
    frl_len: u32,
    t_base: u64,
    e_base: u64,
}

#[derive(Clone, Copy)]
enum Work {
    Start { pos: u32, q: u32, u: bool },
    Term { label: LabelId, q: u32, u: bool, chunk: u8 },
    Chunk { nt: u32, q: u32, u: bool, p: u8 },
    Store { key: u64, memo: ChunkMemo },
}

#[inline]
fn chunk_key(nt: u32, q: u32, u: bool, p: u8) -> u64 {
    (nt as u64) << 40 | (q as u64) << 9 | (p as u64) << 1 | u as u64
}

struct Printer<'a> {
    ix: &'a TinyTIndex,
    a: &'a StAutomaton,
    eng: Engine<'a>,
    opts: PrintOptions,
    tokens: Vec<Token>,
    results: Vec<FinalResult>,
    num_t: u64,
    num_elem: u64,
    memo: HashMap<u64, ChunkMemo>,
    work: Vec<Work>,
}

impl<'a> Printer<'a> {
    fn advance(&mut self, elems: u32, texts: u32) {
        self.num_elem += elems as u64;
        self.num_t += texts as u64;
    }

    fn term(&mut self, label: LabelId, q: u32, u: bool, chunk: u8) {
        if label == LabelId::NULL {
            return;
        }
        let Some(t) = self.a.transition(q, label) else { return };
        let text = self.ix.is_text(label);
        let shown = self.opts.emit && (u || t.select);
        match chunk {
            0 => {
                self.eng.stats.transitions += 1;
                if shown {
                    self.tokens.push(if text {
                        Token::Text { label, result: t.select }
                    } else {
                        Token::Open { label, result: t.select }
                    });
                }
                if t.select {
                    self.results.push(FinalResult {
                        irt_pos: self.tokens.len(),
                        num_t: self.num_t,
                        num_elem: self.num_elem,
                        is_text: text,
                    });
                }
                if text {
                    self.num_t += 1;
                } else if self.ix.is_element(label) {
                    self.num_elem += 1;
                }
                if shown && !text && self.ix.rank(SymId(label.0)) == 0 {
                    self.tokens.push(Token::Close(label));
                }
            }
            1 if shown && !text => self.tokens.push(Token::Close(label)),
            _ => {}
        }
    }

    fn start(&mut self, pos: u32, q: u32, u: bool) {
        let ix = self.ix;
        if self.opts.skip && !u && self.a.universal() == Some(q) {
            self.eng.stats.skips += 1;
            self.advance(ix.sskip(pos as usize), ix.text_sskip(pos as usize));
            return;
        }
        let s = SymId(ix.start_tags()[pos as usize]);
        let kids: Vec<usize> = start_children(ix, pos as usize).collect();
        match ix.nt_of(s) {
            None => {
                let label = LabelId(s.0);
                match (kids.len(), self.a.transition(q, label)) {
                    (2, Some(t)) => {
                        let uc = self.opts.emit && (u || t.select);
                        self.work.push(Work::Start { pos: kids[1] as u32, q: t.right, u: self.opts.emit && u });
                        self.work.push(Work::Term { label, q, u, chunk: 1 });
                        self.work.push(Work::Start { pos: kids[0] as u32, q: t.left, u: uc });
                        self.work.push(Work::Term { label, q, u, chunk: 0 });
                    }
                    _ => self.work.push(Work::Term { label, q, u, chunk: 0 }),
                }
            }
            Some(n) => {
                let id = self.eng.get(q, u, n);
                let nt = n as u32;
                self.work.push(Work::Chunk { nt, q, u, p: kids.len() as u8 });
                for (k, &c) in kids.iter().enumerate().rev() {
                    let (qk, uk) = self.eng.param(id, k);
                    self.work.push(Work::Start { pos: c as u32, q: qk, u: uk });
                    self.work.push(Work::Chunk { nt, q, u, p: k as u8 });
                }
            }
        }
    }

    fn replay(&mut self, m: ChunkMemo) {
        let shift = self.tokens.len() - m.irt_start as usize;
        let r = m.irt_start as usize..(m.irt_start + m.irt_len) as usize;
        self.tokens.extend_from_within(r);
        for k in 0..m.frl_len as usize {
            let f = self.results[m.frl_start as usize + k];
            self.results.push(FinalResult {
                irt_pos: f.irt_pos + shift,
                num_t: f.num_t - m.t_base + self.num_t,
                num_elem: f.num_elem - m.e_base + self.num_elem,
                is_text: f.is_text,
            });
        }
    }

    /// Push the pieces of chunk `p` of `nt` (rule `X(y..) -> X(.., Y, ..)`).
    fn chunk(&mut self, nt: u32, q: u32, u: bool, p: u8) {
        let ix = self.ix;
        let n = nt as usize;
        let key = chunk_key(nt, q, u, p);
        if self.opts.chunk_memo {
            if let Some(&m) = self.memo.get(&key) {
                self.eng.stats.chunk_hits += 1;
                self.replay(m);
                self.advance(ix.pr_map(n)[p as usize], ix.text_map(n)[p as usize]);
                return;
            }
        }
        let id = self.eng.get(q, u, n);
        if !u && self.eng.count_of(id) == 0 {
            self.eng.stats.skips += 1;
            self.advance(ix.pr_map(n)[p as usize], ix.text_map(n)[p as usize]);
            return;
        }
        self.eng.stats.chunks_computed += 1;
        if self.opts.chunk_memo {
            self.work.push(Work::Store {
                key,
                memo: ChunkMemo {
                    irt_start: self.tokens.len() as u32,
                    irt_len: 0,
                    frl_start: self.results.len() as u32,
                    frl_len: 0,
                    t_base: self.num_t,
                    e_base: self.num_elem,
                },
            });
        }
        let w = ix.rule(n);
        let i = w.i() as usize;
        let (x, y) = (w.x(), w.y());
        let ry = ix.rank(y) as usize;
        let (qy, uy) = match ix.nt_of(x) {
            Some(m) => {
                let bx = self.eng.get(q, u, m);
                self.eng.param(bx, i - 1)
            }
            None => {
                let t = self.a.transition(q, LabelId(x.0)).expect("element label");
                let st = [(t.left, u || t.select), (t.right, u)];
                st[i - 1]
            }
        };
        let uy = uy && self.opts.emit;
        let p = p as usize;
        let mut items: Vec<(SymId, u32, bool, usize)> = Vec::with_capacity(3);
        if p < i - 1 {
            items.push((x, q, u, p));
        } else if p == i - 1 {
            items.push((x, q, u, i - 1));
            items.push((y, qy, uy, 0));
            if ry == 0 {
                items.push((x, q, u, i));
            }
        } else if p < i - 1 + ry {
            items.push((y, qy, uy, p - i + 1));
        } else if p == i - 1 + ry {
            items.push((y, qy, uy, ry));
            items.push((x, q, u, i));
        } else {
            items.push((x, q, u, p + 1 - ry));
        }
        for &(s, qs, us, c) in items.iter().rev() {
            match ix.nt_of(s) {
                Some(m) => self.work.push(Work::Chunk { nt: m as u32, q: qs, u: us, p: c as u8 }),
                None => self.work.push(Work::Term { label: LabelId(s.0), q: qs, u: us, chunk: c as u8 }),
            }
        }
    }

    fn run(mut self) -> Result<PrintOutcome, EvalError> {
        self.work.push(Work::Start { pos: 0, q: self.a.initial(), u: false });
        while let Some(w) = self.work.pop() {
            match w {
                Work::Start { pos, q, u } => self.start(pos, q, u),
                Work::Term { label, q, u, chunk } => self.term(label, q, u, chunk),
                Work::Chunk { nt, q, u, p } => self.chunk(nt, q, u, p),
                Work::Store { key, mut memo } => {
                    memo.irt_len = self.tokens.len() as u32 - memo.irt_start;
                    memo.frl_len = self.results.len() as u32 - memo.frl_start;
                    self.memo.insert(key, memo);
                }
            }
        }
        for (what, got, expected) in [
            ("text counter", self.num_t, self.ix.text_count()),
            ("element counter", self.num_elem, self.ix.element_count()),
        ] {
            if got != expected {
                return Err(EvalError::CounterMismatch { what, got, expected });
            }
        }
        Ok(PrintOutcome {
            tokens: self.tokens,
            results: self.results,
            stats: self.eng.stats,
        })
    }
}

/// Run the token-producing pass of the serializer.
pub fn print_pass(ix: &TinyTIndex, a: &StAutomaton, opts: PrintOptions) -> Result<PrintOutcome, EvalError> {
    let eng = Engine::new(ix, a, opts.jump, opts.skip, opts.emit)?;
    Printer {
        ix,
        a,
        eng,
        opts,
        tokens: Vec::new(),
        results: Vec::new(),
        num_t: 0,
        num_elem: 0,
        memo: HashMap::new(),
        work: Vec::new(),
    }
    .run()
}

fn text_at(tc: &TextCollection, i: u64) -> Result<&[u8], EvalError> {
    tc.get_text(i as usize).map_err(|_| EvalError::TextIndexOverflow {
        index: i,
        count: tc.len(),
    })
}

/// Render the subtree of one result from its tokens.
pub fn render_fragment(
    ix: &TinyTIndex,
    tc: &TextCollection,
    tokens: &[Token],
    r: &FinalResult,
    out: &mut Vec<u8>,
) -> Result<(), EvalError> {
    let labels = ix.labels();
    let mut t = r.num_t;
    let mut depth = 0usize;
    let mut pending = false;
    for tok in &tokens[r.irt_pos - 1..] {
        match *tok {
            Token::Open { label, .. } => {
                depth += 1;
                match labels.kind(label) {
                    LabelKind::AttrList => {}
                    LabelKind::Attr => {
                        let name = labels.name(label);
                        out.push(b' ');
                        out.extend_from_slice(name.strip_prefix('@').unwrap_or(name).as_bytes());
                        out.extend_from_slice(b"=\"");
                    }
                    _ => {
                        if pending {
                            out.push(b'>');
                        }
                        out.push(b'<');
                        out.extend_from_slice(labels.name(label).as_bytes());
                        pending = true;
                    }
                }
            }
            Token::Text { label, .. } => {
                let v = text_at(tc, t)?;
                t += 1;
                if label == LabelId::ATTR_TEXT {
                    escape_attr(out, v);
                } else {
                    if pending {
                        out.push(b'>');
                        pending = false;
                    }
                    escape_text(out, v);
                }
                if depth == 0 {
                    break;
                }
            }
            Token::Close(label) => {
                depth = depth.saturating_sub(1);
                match labels.kind(label) {
                    LabelKind::AttrList => {}
                    LabelKind::Attr => out.push(b'"'),
                    _ => {
                        if pending {
                            out.push(b'>');
                            pending = false;
                        }
                        out.extend_from_slice(b"</");
                        out.extend_from_slice(labels.name(label).as_bytes());
                        out.push(b'>');
                    }
                }
                if depth == 0 {
                    break;
                }
            }
        }
    }
    Ok(())
}

/// Serialized subtree of every selected node, in document order.
pub fn serialize_fragments(
    ix: &TinyTIndex,
    tc: &TextCollection,
    a: &StAutomaton,
    opts: PrintOptions,
) -> Result<Vec<Vec<u8>>, EvalError> {
    let out = print_pass(ix, a, PrintOptions { emit: true, ..opts })?;
    out.results
        .iter()
        .map(|r| {
            let mut buf = Vec::new();
            render_fragment(ix, tc, &out.tokens, r, &mut buf)?;
            Ok(buf)
        })
        .collect()
}

/// Write all result subtrees to `sink`; returns the number of results.
pub fn serialize_query<W: Write>(
    ix: &TinyTIndex,
    tc: &TextCollection,
    a: &StAutomaton,
    opts: PrintOptions,
    sink: &mut W,
) -> Result<u64, EvalError> {
    let out = print_pass(ix, a, PrintOptions { emit: true, ..opts })?;
    let mut buf = Vec::new();
    for r in &out.results {
        buf.clear();
        render_fragment(ix, tc, &out.tokens, r, &mut buf)?;
        sink.write_all(&buf)?;
    }
    Ok(out.results.len() as u64)
}

/// Pre-order element numbers of the selected nodes; text results report
/// their text index instead.
pub fn materialize_query(ix: &TinyTIndex, a: &StAutomaton, opts: PrintOptions) -> Result<Vec<u64>, EvalError> {
    let out = print_pass(ix, a, PrintOptions { emit: false, ..opts })?;
    Ok(out
        .results
        .iter()
        .map(|r| if r.is_text { r.num_t } else { r.num_elem })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::automaton_for;
    use crate::grammar::{binarize, build_dag, compress_repair, to_bcnf, SltGrammar};
    use crate::index::build_index;
    use crate::xml::make_structure_tree;

    const DOC: &str = "<g>This<f><f><a><b>is</b></a><c>a test</c></f><a><c>document</c><c>for the purpose</c></a></f><a><c>of explaining</c><c>serialization</c></a></g>";

    fn indexes(doc: &str) -> (Vec<TinyTIndex>, TextCollection) {
        let (st, tc) = make_structure_tree(doc.as_bytes()).unwrap();
        let bt = binarize(&st);
        let gs = vec![
            SltGrammar::one_rule(&bt),
            to_bcnf(&build_dag(&bt)).unwrap(),
            to_bcnf(&compress_repair(&bt, 4)).unwrap(),
        ];
        (gs.iter().map(|g| build_index(g).unwrap()).collect(), tc)
    }

    fn frags(ix: &TinyTIndex, tc: &TextCollection, q: &str, opts: PrintOptions) -> Vec<String> {
        let a = automaton_for(q, ix.labels()).unwrap();
        serialize_fragments(ix, tc, &a, opts)
            .unwrap()
            .into_iter()
            .map(|f| String::from_utf8(f).unwrap())
            .collect()
    }

    #[test]
    fn final_result_list_of_desc_c() {
        let (ixs, _) = indexes(DOC);
        for ix in &ixs {
            let a = automaton_for("//c", ix.labels()).unwrap();
            let out = print_pass(ix, &a, PrintOptions::default()).unwrap();
            let frl: Vec<(usize, u64)> = out.results.iter().map(|r| (r.irt_pos, r.num_t)).collect();
            assert_eq!(frl, [(1, 2), (4, 3), (7, 4), (10, 5), (13, 6)]);
        }
    }

    #[test]
    fn fragments_of_worked_document() {
        let (ixs, tc) = indexes(DOC);
        for ix in &ixs {
            for memo in [false, true] {
                let o = PrintOptions { chunk_memo: memo, ..Default::default() };
                assert_eq!(frags(ix, &tc, "//b", o), ["<b>is</b>"]);
                assert_eq!(
                    frags(ix, &tc, "//c", o),
                    ["<c>a test</c>", "<c>document</c>", "<c>for the purpose</c>", "<c>of explaining</c>", "<c>serialization</c>"]
                );
                assert_eq!(frags(ix, &tc, "/g/f/f/a", o), ["<a><b>is</b></a>"]);
                assert_eq!(frags(ix, &tc, "//text()", o).len(), 7);
            }
        }
    }

    #[test]
    fn attributes_and_empty_elements_render() {
        let doc = r#"<r><p id="1" k="a&amp;b"><q/></p><p id="2">x &lt; y</p></r>"#;
        let (ixs, tc) = indexes(doc);
        for ix in &ixs {
            assert_eq!(
                frags(ix, &tc, "//p", PrintOptions::default()),
                [r#"<p id="1" k="a&amp;b"><q></q></p>"#, r#"<p id="2">x &lt; y</p>"#]
            );
        }
    }

    #[test]
    fn chunk_replay_is_used_on_repeats() {
        let doc = format!("<r>{}</r>", "<s><k>v</k><k>w</k></s>".repeat(64));
        let (ixs, tc) = indexes(&doc);
        let ix = &ixs[2];
        let a = automaton_for("//s", ix.labels()).unwrap();
        let out = print_pass(ix, &a, PrintOptions::default()).unwrap();
        assert!(out.stats.chunk_hits > 0);
        assert_eq!(out.results.len(), 64);
        let plain = print_pass(ix, &a, PrintOptions { chunk_memo: false, ..Default::default() }).unwrap();
        assert_eq!(plain.tokens, out.tokens);
        assert_eq!(plain.results, out.results);
        assert!(frags(ix, &tc, "//s", PrintOptions::default()).iter().all(|f| f == "<s><k>v</k><k>w</k></s>"));
    }

    #[test]
    fn materialize_returns_preorder_numbers() {
        let (ixs, _) = indexes(DOC);
        for ix in &ixs {
            let a = automaton_for("//c", ix.labels()).unwrap();
            assert_eq!(materialize_query(ix, &a, PrintOptions::default()).unwrap(), [5, 7, 8, 10, 11]);
        }
    }
}
