//! Oracles and random inputs shared by the integration suites.
#![allow(dead_code)]

pub mod checks;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tinyt::automata::{parse_xpath, Axis, NodeTest, XPathQuery};
use tinyt::grammar::{binarize, build_dag, compress_repair, to_bcnf, BinaryTree, SltGrammar};
use tinyt::index::{build_index, TinyTIndex};
use tinyt::labels::LabelKind;
use tinyt::xml::{make_structure_tree, StructureTree, TextCollection};
use tinyt::LabelId;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const NAMES: [&str; 4] = ["a", "b", "c", "d"];
const VALUES: [&str; 6] = ["x", "y z", "a<b", "p&q", "say \"hi\"", "1>0"];

/// Random XML with attributes, escaped values and repeated fragments.
pub fn random_xml(seed: u64, max_nodes: usize) -> String {
    let mut r = rng(seed);
    let budget = r.gen_range(1..=max_nodes.max(1));
    let repeat = r.gen_bool(0.5);
    let mut done: Vec<String> = Vec::new();
    let mut used = 0usize;
    fn elem(r: &mut ChaCha8Rng, depth: usize, used: &mut usize, budget: usize, done: &mut Vec<String>, repeat: bool) -> String {
        *used += 1;
        let name = *NAMES.choose(r).unwrap();
        let mut s = format!("<{name}");
        if r.gen_bool(0.2) {
            for (k, key) in ["id", "k"].iter().enumerate() {
                if k == 0 || r.gen_bool(0.5) {
                    s.push_str(&format!(" {key}=\""));
                    let v = *VALUES.choose(r).unwrap();
                    s.push_str(&v.replace('&', "&amp;").replace('<', "&lt;").replace('"', "&quot;"));
                    s.push('"');
                    *used += 2;
                }
            }
            *used += 1;
        }
        s.push('>');
        let kids = if depth > 8 { 0 } else { r.gen_range(0..=4) };
        let mut last_text = false;
        for _ in 0..kids {
            if *used >= budget {
                break;
            }
            if !last_text && r.gen_bool(0.25) {
                let v = *VALUES.choose(r).unwrap();
                s.push_str(&v.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;"));
                *used += 1;
                last_text = true;
                continue;
            }
            last_text = false;
            if repeat && !done.is_empty() && r.gen_bool(0.4) {
                let d = done.choose(r).unwrap().clone();
                *used += d.matches('<').count() / 2;
                s.push_str(&d);
                continue;
            }
            let c = elem(r, depth + 1, used, budget, done, repeat);
            s.push_str(&c);
        }
        s.push_str(&format!("</{name}>"));
        if done.len() < 64 && s.len() < 400 {
            done.push(s.clone());
        }
        s
    }
    elem(&mut r, 0, &mut used, budget, &mut done, repeat)
}

/// Random absolute query over the random-document vocabulary.
pub fn random_query(r: &mut ChaCha8Rng) -> String {
    let n = r.gen_range(1..=4);
    let mut q = String::new();
    for k in 0..n {
        let axis = match r.gen_range(0..3) {
            0 => "/",
            1 => "//",
            _ if k > 0 => "/following-sibling::",
            _ => "//",
        };
        q.push_str(axis);
        let test = match r.gen_range(0..8) {
            0 | 1 => "*".to_string(),
            2 if k == n - 1 => "text()".to_string(),
            3 => "e".to_string(),
            _ => NAMES.choose(r).unwrap().to_string(),
        };
        q.push_str(&test);
    }
    q
}

pub struct Doc {
    pub xml: String,
    pub st: StructureTree,
    pub tc: TextCollection,
    pub bt: BinaryTree,
    pub grammars: Vec<(String, SltGrammar)>,
    pub bcnf: Vec<SltGrammar>,
    pub indexes: Vec<(String, TinyTIndex)>,
}

pub fn grammars_of(bt: &BinaryTree, max_rank: u8) -> Vec<(String, SltGrammar)> {
    vec![
        ("one-rule".to_string(), SltGrammar::one_rule(bt)),
        ("dag".to_string(), build_dag(bt)),
        (format!("repair{max_rank}"), compress_repair(bt, max_rank)),
    ]
}

pub fn doc(xml: String, max_rank: u8) -> Doc {
    let (st, tc) = make_structure_tree(xml.as_bytes()).expect("generated XML parses");
    let bt = binarize(&st);
    let grammars = grammars_of(&bt, max_rank);
    let bcnf: Vec<SltGrammar> = grammars.iter().map(|(_, g)| to_bcnf(g).expect("bcnf")).collect();
    let indexes = grammars
        .iter()
        .zip(&bcnf)
        .map(|((n, _), b)| (n.clone(), build_index(b).expect("index")))
        .collect();
    Doc { xml, st, tc, bt, grammars, bcnf, indexes }
}

pub fn random_doc(seed: u64, max_nodes: usize) -> Doc {
    let rank = (seed % 5) as u8;
    doc(random_xml(seed, max_nodes), rank)
}

fn test_matches(st: &StructureTree, n: u32, test: &NodeTest) -> bool {
    let l = st.label(n);
    match test {
        NodeTest::Star => st.labels.kind(l) == LabelKind::Element,
        NodeTest::Text => l == LabelId::TEXT,
        NodeTest::Name(s) => st.labels.kind(l) == LabelKind::Element && st.labels.name(l) == s,
    }
}

fn descendants(st: &StructureTree, n: u32, out: &mut Vec<u32>) {
    let mut stack: Vec<u32> = st.children(n).collect();
    stack.reverse();
    while let Some(c) = stack.pop() {
        out.push(c);
        let mut kids: Vec<u32> = st.children(c).collect();
        kids.reverse();
        stack.extend(kids);
    }
}

/// Set-at-a-time evaluation over the unranked tree; node ids in pre-order.
pub fn naive_select(st: &StructureTree, q: &XPathQuery) -> Vec<u32> {
    // None stands for the document node above the root
    let mut ctx: Vec<Option<u32>> = vec![None];
    for step in &q.steps {
        let mut next = vec![false; st.len()];
        for &c in &ctx {
            let mut cand = Vec::new();
            match (step.axis, c) {
                (Axis::Child, None) => cand.push(0),
                (Axis::Child, Some(n)) => cand.extend(st.children(n)),
                (Axis::Descendant, None) => {
                    cand.push(0);
                    descendants(st, 0, &mut cand);
                }
                (Axis::Descendant, Some(n)) => descendants(st, n, &mut cand),
                (Axis::FollowingSibling, None) => {}
                (Axis::FollowingSibling, Some(n)) => {
                    let mut s = st.nodes[n as usize].next_sibling;
                    while let Some(x) = s {
                        cand.push(x);
                        s = st.nodes[x as usize].next_sibling;
                    }
                }
            }
            for x in cand {
                if test_matches(st, x, &step.test) {
                    next[x as usize] = true;
                }
            }
        }
        ctx = (0..st.len() as u32).filter(|&x| next[x as usize]).map(Some).collect();
    }
    ctx.into_iter().flatten().collect()
}

pub fn naive(st: &StructureTree, query: &str) -> Vec<u32> {
    naive_select(st, &parse_xpath(query).expect("query parses"))
}

/// Elements and text values preceding each node in document order.
pub fn preorder_numbers(st: &StructureTree) -> (Vec<u64>, Vec<u64>) {
    let (mut e, mut t) = (0u64, 0u64);
    let mut elems = Vec::with_capacity(st.len());
    let mut texts = Vec::with_capacity(st.len());
    for n in &st.nodes {
        elems.push(e);
        texts.push(t);
        match st.labels.kind(n.label) {
            LabelKind::Element => e += 1,
            LabelKind::Text => t += 1,
            _ => {}
        }
    }
    (elems, texts)
}

fn esc(s: &[u8], attr: bool) -> String {
    let s = String::from_utf8_lossy(s);
    let mut o = String::new();
    for c in s.chars() {
        match c {
            '&' => o.push_str("&amp;"),
            '<' => o.push_str("&lt;"),
            '>' if !attr => o.push_str("&gt;"),
            '"' => o.push_str("&quot;"),
            c => o.push(c),
        }
    }
    o
}

/// Independent rendering of the subtree at `n`.
pub fn oracle_fragment(st: &StructureTree, tc: &TextCollection, texts_before: &[u64], n: u32) -> String {
    let l = st.label(n);
    let text = |k: u32| tc.get_text(texts_before[k as usize] as usize).unwrap();
    match st.labels.kind(l) {
        LabelKind::Text => esc(text(n), l == LabelId::ATTR_TEXT),
        LabelKind::Element => {
            let name = st.labels.name(l);
            let mut s = format!("<{name}");
            let mut body = String::new();
            for c in st.children(n) {
                if st.label(c) == LabelId::ATTRS {
                    for a in st.children(c) {
                        let an = st.labels.name(st.label(a)).trim_start_matches('@');
                        let v = st.children(a).next().map(|t| esc(text(t), true)).unwrap_or_default();
                        s.push_str(&format!(" {an}=\"{v}\""));
                    }
                } else {
                    body.push_str(&oracle_fragment(st, tc, texts_before, c));
                }
            }
            format!("{s}>{body}</{name}>")
        }
        _ => String::new(),
    }
}
