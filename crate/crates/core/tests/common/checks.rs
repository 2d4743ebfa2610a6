//! Per-seed checks; each returns a description of the first disagreement.

use std::collections::HashMap;

use rand::Rng;

use tinyt::automata::{automaton_for, parse_xpath};
use tinyt::eval::{
    count_with_stats, materialize_query, print_pass, serialize_fragments, CountOptions, JumpMode, PrintOptions,
};
use tinyt::grammar::{parse_grammar, to_bcnf, Alphabet, BinaryTree, SltGrammar, Sym};
use tinyt::index::{build_index, load_index, save_index, SymId, TinyTIndex};
use tinyt::labels::LabelKind;
use tinyt::navigation::{NodeId, NodePool, NodeStore, Navigator};
use tinyt::xml::{make_structure_tree, StructureTree};
use tinyt::{LabelId, LabelTable};

use super::*;

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($c:expr, $($m:tt)*) => {
        if !$c {
            return Err(format!($($m)*));
        }
    };
}

pub const ALL_COUNT_OPTIONS: [CountOptions; 6] = [
    CountOptions { jump: JumpMode::Off, skip: false },
    CountOptions { jump: JumpMode::Off, skip: true },
    CountOptions { jump: JumpMode::Relevant, skip: false },
    CountOptions { jump: JumpMode::Relevant, skip: true },
    CountOptions { jump: JumpMode::FRelevant, skip: false },
    CountOptions { jump: JumpMode::FRelevant, skip: true },
];

/// Random ranked tree over leaves `b`, `c` (rank 0) and `f`, `g` (rank 2).
pub fn random_ranked_tree(seed: u64) -> BinaryTree {
    let mut r = rng(seed);
    let mut labels = LabelTable::new();
    let ids: Vec<LabelId> = ["f", "g", "b", "c"].iter().map(|n| labels.intern(n)).collect();
    let ranks = labels
        .ids()
        .map(|l| if l == ids[0] || l == ids[1] { 2 } else if l == LabelId::NULL { 0 } else if l == ids[2] || l == ids[3] { 0 } else { 2 })
        .collect();
    let alphabet = Alphabet::with_ranks(labels, ranks);
    let budget = r.gen_range(1..=120usize);
    let mut out = Vec::new();
    let mut open = 1usize;
    let mut inner = 0usize;
    while open > 0 {
        open -= 1;
        if inner < budget / 2 && r.gen_bool(0.55) {
            out.push(ids[r.gen_range(0..2)]);
            open += 2;
            inner += 1;
        } else {
            out.push(ids[2 + r.gen_range(0..2)]);
        }
    }
    BinaryTree::from_preorder(alphabet, out)
}

fn non_param_nodes(rhs: &[Sym]) -> usize {
    rhs.iter().filter(|s| !matches!(s, Sym::Y(_))).count()
}

fn check_grammar(name: &str, g: &SltGrammar, bt: &BinaryTree) -> Check {
    g.validate().map_err(|e| format!("{name}: invalid: {e}"))?;
    let e = g.expand().map_err(|e| format!("{name}: {e}"))?;
    ensure!(e.labels() == bt.labels(), "{name}: expansion differs");
    let back = parse_grammar(&g.to_text(), Some(&g.alphabet)).map_err(|e| format!("{name}: reparse: {e}"))?;
    ensure!(back.expand().unwrap().labels() == bt.labels(), "{name}: text round trip differs");
    let b = to_bcnf(g).map_err(|e| format!("{name}: bcnf: {e}"))?;
    ensure!(b.expand().unwrap().labels() == bt.labels(), "{name}: bcnf expansion differs");
    ensure!(b.is_bcnf(), "{name}: not in bcnf");
    for (k, r) in b.rules.iter().enumerate() {
        if k != b.start.index() {
            ensure!(non_param_nodes(&r.rhs) == 2, "{name}: rule {} has {} terminal/nt nodes", r.name, non_param_nodes(&r.rhs));
        }
    }
    let (gs, bs) = (g.stats(), b.stats());
    ensure!(bs.num_rules <= 2 * gs.size.max(1), "{name}: {} bcnf rules for size {}", bs.num_rules, gs.size);
    ensure!(
        bs.size <= (bs.rank as usize + 1) * gs.size.max(1),
        "{name}: bcnf size {} exceeds (rank+1)*{}",
        bs.size,
        gs.size
    );
    let b2 = to_bcnf(&b).unwrap();
    ensure!(b2.stats().size == bs.size, "{name}: bcnf not idempotent");
    Ok(())
}

/// Pattern of a symbol over the index: labels and parameters in pre-order.
fn index_pattern(ix: &TinyTIndex, s: SymId, memo: &mut HashMap<u32, Vec<Sym>>) -> Vec<Sym> {
    if let Some(l) = ix.label_of(s) {
        let mut v = vec![Sym::T(l)];
        v.extend((1..=ix.rank(s) as u16).map(Sym::Y));
        return v;
    }
    if let Some(v) = memo.get(&s.0) {
        return v.clone();
    }
    let w = ix.rule(ix.nt_of(s).unwrap());
    let (px, py) = (index_pattern(ix, w.x(), memo), index_pattern(ix, w.y(), memo));
    let i = w.i() as u16;
    let ry = ix.rank(w.y()) as u16;
    let mut out = Vec::new();
    for sym in px {
        match sym {
            Sym::Y(k) if k == i => out.extend(py.iter().map(|t| match *t {
                Sym::Y(j) => Sym::Y(j + i - 1),
                t => t,
            })),
            Sym::Y(k) if k > i => out.push(Sym::Y(k + ry - 1)),
            t => out.push(t),
        }
    }
    memo.insert(s.0, out.clone());
    out
}

fn check_index(name: &str, ix: &TinyTIndex, bt: &BinaryTree) -> Check {
    let mut memo = HashMap::new();
    let kind = |l: LabelId| ix.labels().kind(l);
    for n in 0..ix.num_rules() {
        let pat = index_pattern(ix, ix.nt_sym(n), &mut memo);
        let (mut pr, mut tx) = (vec![0u32], vec![0u32]);
        let mut params = Vec::new();
        for s in &pat {
            match *s {
                Sym::Y(k) => {
                    params.push(k);
                    pr.push(0);
                    tx.push(0);
                }
                Sym::T(l) if kind(l) == LabelKind::Text => *tx.last_mut().unwrap() += 1,
                Sym::T(l) if ix.is_element(l) => *pr.last_mut().unwrap() += 1,
                _ => {}
            }
        }
        ensure!(params.iter().enumerate().all(|(k, &p)| p as usize == k + 1), "{name}: parameter order in N{n}");
        ensure!(ix.pr_map(n) == pr.as_slice(), "{name}: prMap of N{n}");
        ensure!(ix.text_map(n) == tx.as_slice(), "{name}: textMap of N{n}");
        let has: Vec<bool> = (0..ix.num_terminals()).map(|_| false).collect();
        let mut has = has;
        for s in &pat {
            if let Sym::T(l) = s {
                has[l.index()] = true;
            }
        }
        for l in ix.labels().ids() {
            ensure!(ix.jump().get(n, l) == has[l.index()], "{name}: jump bit N{n}/{}", ix.labels().name(l));
        }
    }
    let elems = bt.labels().iter().filter(|&&l| ix.is_element(l)).count() as u64;
    let texts = bt.labels().iter().filter(|&&l| ix.is_text(l)).count() as u64;
    ensure!(ix.element_count() == elems, "{name}: element count");
    ensure!(ix.text_count() == texts, "{name}: text count");
    let tags = ix.start_tags();
    let mut p = 0usize;
    let mut next = vec![tags.len()];
    while p < tags.len() {
        let fc = ix.find_close(p) as usize;
        ensure!(fc >= 1 && p + fc <= *next.last().unwrap(), "{name}: find_close({p})");
        next.push(p + fc);
        p += 1;
        while next.last() == Some(&p) && next.len() > 1 {
            next.pop();
        }
    }
    let mut bytes = Vec::new();
    save_index(ix, &mut bytes).map_err(|e| e.to_string())?;
    let back = load_index(&mut bytes.as_slice()).map_err(|e| format!("{name}: load: {e}"))?;
    let mut again = Vec::new();
    save_index(&back, &mut again).unwrap();
    ensure!(bytes == again, "{name}: save/load not byte-identical");
    Ok(())
}

/// Compression pipelines reproduce the tree; bCNF and index invariants hold.
pub fn check_pipelines(seed: u64) -> Check {
    let d = random_doc(seed, 120);
    for ((name, g), (_, ix)) in d.grammars.iter().zip(&d.indexes) {
        check_grammar(name, g, &d.bt)?;
        check_index(name, ix, &d.bt)?;
    }
    for k in 1..=4u8 {
        let g = tinyt::grammar::compress_repair(&d.bt, k);
        ensure!(g.stats().rank <= k, "repair{k}: rank {}", g.stats().rank);
        check_grammar(&format!("repair{k}"), &g, &d.bt)?;
    }
    let rt = random_ranked_tree(seed);
    for (name, g) in grammars_of(&rt, (seed % 4) as u8 + 1) {
        check_grammar(&format!("ranked {name}"), &g, &rt)?;
        let ix = build_index(&to_bcnf(&g).unwrap()).map_err(|e| e.to_string())?;
        check_index(&format!("ranked {name}"), &ix, &rt)?;
    }
    Ok(())
}

pub fn queries_for(seed: u64, n: usize) -> Vec<String> {
    let mut r = rng(seed ^ 0x5eed);
    let mut q: Vec<String> = (0..n).map(|_| random_query(&mut r)).collect();
    q.push("//*".into());
    q.push("/*".into());
    q
}

/// Counting equals the naive oracle under every jump/skip combination.
pub fn check_count(seed: u64) -> Check {
    let d = random_doc(seed, 150);
    for q in queries_for(seed, 4) {
        let expect = naive(&d.st, &q).len() as u64;
        let m = parse_xpath(&q).unwrap().steps.len();
        for (name, ix) in &d.indexes {
            let a = automaton_for(&q, ix.labels()).unwrap();
            ensure!(a.num_states() <= 2 * m.max(1), "{q}: {} states for {m} steps", a.num_states());
            for o in ALL_COUNT_OPTIONS {
                let (c, st) = count_with_stats(ix, &a, o).map_err(|e| e.to_string())?;
                ensure!(c == expect, "seed {seed} {name} {q} {o:?}: count {c}, oracle {expect}");
                ensure!(st.recomputations == 0, "{name} {q}: behaviour recomputed");
            }
        }
    }
    Ok(())
}

/// Fragments, result lists and pre-order numbers equal the oracle's.
pub fn check_serialize(seed: u64) -> Check {
    let d = random_doc(seed, 150);
    let (elems, texts) = preorder_numbers(&d.st);
    for q in queries_for(seed, 3) {
        let sel = naive(&d.st, &q);
        let expect: Vec<String> = sel.iter().map(|&n| oracle_fragment(&d.st, &d.tc, &texts, n)).collect();
        let numbers: Vec<u64> = sel
            .iter()
            .map(|&n| if d.st.labels.kind(d.st.label(n)) == LabelKind::Text { texts[n as usize] } else { elems[n as usize] })
            .collect();
        for (name, ix) in &d.indexes {
            let a = automaton_for(&q, ix.labels()).unwrap();
            let base = print_pass(ix, &a, PrintOptions::default()).map_err(|e| e.to_string())?;
            for o in [
                PrintOptions { chunk_memo: false, ..Default::default() },
                PrintOptions { jump: JumpMode::Off, skip: false, ..Default::default() },
            ] {
                let other = print_pass(ix, &a, o).map_err(|e| e.to_string())?;
                ensure!(other.tokens == base.tokens && other.results == base.results, "{name} {q}: {o:?} changes output");
            }
            let got: Vec<String> = serialize_fragments(ix, &d.tc, &a, PrintOptions::default())
                .map_err(|e| e.to_string())?
                .into_iter()
                .map(|f| String::from_utf8(f).unwrap())
                .collect();
            ensure!(got == expect, "seed {seed} {name} {q}: fragments {got:?}, oracle {expect:?}");
            for (f, &n) in got.iter().zip(&sel) {
                if d.st.labels.kind(d.st.label(n)) == LabelKind::Element {
                    let (st, _) = make_structure_tree(f.as_bytes()).map_err(|e| format!("{q}: fragment does not parse: {e}"))?;
                    ensure!(st.len() == subtree_len(&d.st, n), "{q}: fragment reparses to a different size");
                }
            }
            let mat = materialize_query(ix, &a, PrintOptions::default()).map_err(|e| e.to_string())?;
            ensure!(mat == numbers, "seed {seed} {name} {q}: materialize {mat:?}, oracle {numbers:?}");
            let c = tinyt::eval::count(ix, &a, CountOptions::default()).unwrap();
            ensure!(mat.len() as u64 == c, "{name} {q}: materialize/count disagree");
        }
    }
    check_reconstruct(&d)
}

fn subtree_len(st: &StructureTree, n: u32) -> usize {
    let mut len = 1;
    let mut stack: Vec<u32> = st.children(n).collect();
    while let Some(c) = stack.pop() {
        len += 1;
        stack.extend(st.children(c));
    }
    len
}

/// Serializing the root reproduces the document.
pub fn check_reconstruct(d: &Doc) -> Check {
    for (name, ix) in &d.indexes {
        let a = automaton_for("/*", ix.labels()).unwrap();
        let frags = serialize_fragments(ix, &d.tc, &a, PrintOptions::default()).map_err(|e| e.to_string())?;
        ensure!(frags.len() == 1, "{name}: root query gave {} results", frags.len());
        let (st, tc) = make_structure_tree(&frags[0]).map_err(|e| format!("{name}: reparse: {e}"))?;
        ensure!(st.same_tree(&d.st), "{name}: reconstructed tree differs");
        ensure!(tc == d.tc, "{name}: reconstructed values differ");
    }
    Ok(())
}

fn first_in<F: Fn(u32) -> bool>(range: std::ops::Range<u32>, f: F) -> Option<u32> {
    range.into_iter().find(|&n| f(n))
}

/// Walk the unranked tree through the navigator, collecting handles in pre-order.
fn handles<S: NodeStore>(nav: &mut Navigator<'_, S>) -> Vec<S::Handle> {
    let mut out = Vec::new();
    let r = nav.root();
    let mut stack = vec![r];
    while let Some(h) = stack.pop() {
        if let Some(s) = nav.next_sibling(&h) {
            stack.push(s);
        }
        if let Some(c) = nav.first_child(&h) {
            stack.push(c);
        }
        out.push(h);
    }
    out
}

/// Navigation primitives equal the structure tree on every node and label.
pub fn check_navigation(seed: u64) -> Check {
    let d = random_doc(seed, 200);
    let st = &d.st;
    let sizes: Vec<u32> = (0..st.len() as u32).map(|n| subtree_len(st, n) as u32).collect();
    for ((name, ix), b) in d.indexes.iter().zip(&d.bcnf) {
        let depth = b.stats().depth;
        let mut nav = Navigator::new(ix);
        let hs = handles(&mut nav);
        ensure!(hs.len() == st.len(), "{name}: {} nodes visited, {} expected", hs.len(), st.len());
        let pos: HashMap<NodeId, u32> = hs.iter().cloned().zip(0..).collect();
        let mut pooled = Navigator::with_store(ix, NodePool::new());
        let phs = handles(&mut pooled);
        let at = |h: Option<NodeId>| h.map(|h| pos[&h]);
        for (n, h) in hs.iter().enumerate() {
            let node = st.nodes[n];
            ensure!(st.labels.name(st.label(n as u32)) == ix.labels().name(nav.label(h)), "{name}: label of {n}");
            ensure!(h.len() <= depth + 1, "{name}: node id length {} > depth {depth} + 1", h.len());
            ensure!(pooled.node_id(&phs[n]) == *h, "{name}: pooled id of {n} differs");
            let fc = nav.first_child(h);
            ensure!(at(fc) == node.first_child, "{name}: fc({n})");
            let ns = nav.next_sibling(h);
            ensure!(at(ns) == node.next_sibling, "{name}: ns({n})");
            let p = nav.parent(h);
            ensure!(at(p) == node.parent, "{name}: parent({n})");
            let pp = pooled.parent(&phs[n]).map(|x| pooled.node_id(&x));
            ensure!(pp.map(|x| pos[&x]) == node.parent, "{name}: pooled parent({n})");
            let end = n as u32 + sizes[n];
            for l in ix.labels().ids().filter(|&l| l != LabelId::NULL) {
                let lname = ix.labels().name(l);
                let matches = |m: u32| st.labels.name(st.label(m)) == lname;
                let td = nav.tagged_desc(h, l);
                ensure!(at(td) == first_in(n as u32 + 1..end, matches), "{name}: tagged_desc({n}, {lname})");
                let tf = nav.tagged_foll(h, l);
                ensure!(at(tf) == first_in(end..st.len() as u32, matches), "{name}: tagged_foll({n}, {lname})");
                let ptd = pooled.tagged_desc(&phs[n], l).map(|x| pooled.node_id(&x));
                ensure!(ptd == nav.tagged_desc(h, l), "{name}: pooled tagged_desc({n}, {lname})");
            }
        }
        let rec = tinyt::navigation::dflr_recursive(&mut nav);
        let it = tinyt::navigation::dflr_iterative(&mut nav);
        ensure!(rec == it, "{name}: recursive and iterative traversals differ");
        let names: Vec<&str> = rec.iter().map(|&l| ix.labels().name(l)).collect();
        let expect: Vec<&str> = st.nodes.iter().map(|x| st.labels.name(x.label)).collect();
        ensure!(names == expect, "{name}: traversal label sequence differs");
    }
    Ok(())
}

/// Size and state bounds on one random case.
pub fn check_bounds(seed: u64) -> Check {
    let d = random_doc(seed, 150);
    for ((name, g), b) in d.grammars.iter().zip(&d.bcnf) {
        let size = g.stats().size.max(1);
        ensure!(b.stats().num_rules <= 2 * size, "{name}: {} bcnf rules for size {size}", b.stats().num_rules);
        for (k, r) in b.rules.iter().enumerate() {
            if k != b.start.index() {
                ensure!(non_param_nodes(&r.rhs) == 2, "{name}: rule {} is not binary", r.name);
            }
        }
    }
    for q in queries_for(seed, 4) {
        let m = parse_xpath(&q).unwrap().steps.len();
        for (name, ix) in &d.indexes {
            let a = automaton_for(&q, ix.labels()).unwrap();
            ensure!(a.num_states() <= 2 * m, "{q}: {} states for {m} steps", a.num_states());
            let (_, st) = count_with_stats(ix, &a, CountOptions { jump: JumpMode::Off, skip: false }).unwrap();
            ensure!(st.recomputations == 0, "{name} {q}: behaviour computed twice");
            ensure!(
                st.behaviours <= (a.num_states() * ix.num_rules()) as u64,
                "{name} {q}: {} behaviours for {} states x {} rules",
                st.behaviours,
                a.num_states(),
                ix.num_rules()
            );
        }
    }
    Ok(())
}
