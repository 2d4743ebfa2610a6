//! Deterministic test corpora: random structure trees with tunable
//! repetitiveness and a small XMark-like document generator.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::labels::{LabelId, LabelTable};
use crate::xml::{StructureTree, TextCollection, TreeBuilder};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeGenSpec {
    pub seed: u64,
    pub node_budget: usize,
    pub label_count: usize,
    pub text_probability: f64,
    /// Probability of grafting a copy of an earlier finished subtree.
    pub repetition_bias: f64,
}

impl Default for TreeGenSpec {
    fn default() -> Self {
        TreeGenSpec {
            seed: 1,
            node_budget: 100,
            label_count: 4,
            text_probability: 0.2,
            repetition_bias: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Ev {
    Open(LabelId),
    Close,
    Text(u32),
}

const MAX_DEPTH: usize = 24;
const POOL: usize = 256;

/// Random document tree; deterministic in the spec.
pub fn gen_tree(spec: TreeGenSpec) -> (StructureTree, TextCollection) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let budget = spec.node_budget.max(1);
    let mut labels = LabelTable::new();
    let names: Vec<LabelId> = (0..spec.label_count.max(1)).map(|k| labels.intern(&format!("e{k}"))).collect();

    let mut evs: Vec<Ev> = Vec::with_capacity(budget * 2);
    // finished subtrees: event range and node count
    let mut pool: Vec<(usize, usize, usize)> = Vec::new();
    // open frames: start event, children still to make, node count at open, last child was text
    let mut frames: Vec<(usize, usize, usize, bool)> = Vec::new();
    let mut nodes = 1;
    evs.push(Ev::Open(*names.choose(&mut rng).expect("labels")));
    // the root keeps taking children until the budget is spent
    frames.push((0, usize::MAX, 1, false));

    while let Some(top) = frames.last_mut() {
        if top.1 == 0 || nodes >= budget {
            let (start, _, at_open, _) = frames.pop().expect("frame");
            evs.push(Ev::Close);
            let size = nodes - at_open + 1;
            if pool.len() < POOL {
                pool.push((start, evs.len(), size));
            } else {
                let k = rng.gen_range(0..POOL);
                pool[k] = (start, evs.len(), size);
            }
            continue;
        }
        top.1 -= 1;
        let after_text = top.3;
        top.3 = false;
        let depth = frames.len();
        let left = budget - nodes;
        if !after_text && rng.gen_bool(spec.text_probability.clamp(0.0, 1.0)) {
            evs.push(Ev::Text(rng.gen_range(0..8)));
            nodes += 1;
            frames.last_mut().expect("frame").3 = true;
            continue;
        }
        if !pool.is_empty() && rng.gen_bool(spec.repetition_bias.clamp(0.0, 1.0)) {
            let (s, e, size) = pool[rng.gen_range(0..pool.len())];
            if size <= left {
                evs.extend_from_within(s..e);
                nodes += size;
                continue;
            }
        }
        evs.push(Ev::Open(*names.choose(&mut rng).expect("labels")));
        nodes += 1;
        let kids = if depth >= MAX_DEPTH { 0 } else { rng.gen_range(0..=4) };
        frames.push((evs.len() - 1, kids, nodes, false));
    }

    let mut b = TreeBuilder::new(labels);
    let mut tc = TextCollection::new();
    for ev in evs {
        match ev {
            Ev::Open(l) => {
                b.open(l);
            }
            Ev::Close => b.close(),
            Ev::Text(k) => {
                b.leaf(LabelId::TEXT);
                tc.push(format!("t{k}").as_bytes());
            }
        }
    }
    (b.finish(), tc)
}

struct XmarkGen {
    rng: ChaCha8Rng,
    out: String,
    ids: usize,
}

const WORDS: [&str; 12] = [
    "gold", "ship", "bid", "rare", "mint", "fast", "old", "lamp", "blue", "deal", "silk", "coin",
];

impl XmarkGen {
    fn words(&mut self, n: usize) {
        for k in 0..n {
            if k > 0 {
                self.out.push(' ');
            }
            let w = WORDS[self.rng.gen_range(0..WORDS.len())];
            self.out.push_str(w);
        }
    }

    fn text(&mut self, keyword: bool) {
        self.out.push_str("<text>");
        self.words(3);
        if keyword || self.rng.gen_bool(0.5) {
            self.out.push_str(" <keyword>");
            self.words(1);
            self.out.push_str("</keyword> ");
        }
        if self.rng.gen_bool(0.3) {
            self.out.push_str("<bold>");
            self.words(1);
            self.out.push_str("</bold>");
        }
        self.words(2);
        self.out.push_str("</text>");
    }

    fn parlist(&mut self, depth: usize, nested: bool) {
        self.out.push_str("<parlist>");
        let n = self.rng.gen_range(1..=3);
        for k in 0..n {
            self.out.push_str("<listitem>");
            if depth == 0 && (nested && k == 0 || self.rng.gen_bool(0.3)) {
                self.parlist(1, false);
            } else {
                self.text(nested);
            }
            self.out.push_str("</listitem>");
        }
        self.out.push_str("</parlist>");
    }

    fn description(&mut self, kind: usize) {
        self.out.push_str("<description>");
        match kind {
            0 => self.text(true),
            1 => self.parlist(0, false),
            _ => self.parlist(0, true),
        }
        self.out.push_str("</description>");
    }

    fn item(&mut self, first: bool) {
        let id = self.ids;
        self.ids += 1;
        let _ = write!(self.out, "<item id=\"item{id}\"><location>");
        self.words(1);
        self.out.push_str("</location><name>");
        self.words(2);
        self.out.push_str("</name><payment>Cash</payment>");
        let kind = self.rng.gen_range(0..3);
        self.description(kind);
        self.out.push_str("<mailbox>");
        let mails = if first { 1 } else { self.rng.gen_range(0..=2) };
        for _ in 0..mails {
            self.out.push_str("<mail><from>a</from><to>b</to><date>07/05/2000</date>");
            self.text(first);
            self.out.push_str("</mail>");
        }
        self.out.push_str("</mailbox></item>");
    }
}

pub const XMARK_REGIONS: [&str; 6] = ["africa", "asia", "australia", "europe", "namerica", "samerica"];

/// XMark-flavoured document with the benchmark query vocabulary.
/// `scale = 1` gives roughly 100 KB.
pub fn gen_xmark_like(scale: f64, seed: u64) -> Vec<u8> {
    let scale = if scale.is_finite() && scale > 0.0 { scale } else { 1.0 };
    let n = |base: f64| ((base * scale).round() as usize).max(1);
    let mut g = XmarkGen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        out: String::new(),
        ids: 0,
    };
    g.out.push_str("<site><regions>");
    for r in XMARK_REGIONS {
        let _ = write!(g.out, "<{r}>");
        for k in 0..n(12.0) {
            g.item(k == 0);
        }
        let _ = write!(g.out, "</{r}>");
    }
    g.out.push_str("</regions><categories>");
    for k in 0..n(10.0) {
        let _ = write!(g.out, "<category id=\"category{k}\"><name>");
        g.words(1);
        g.out.push_str("</name>");
        g.description(k % 2);
        g.out.push_str("</category>");
    }
    g.out.push_str("</categories><open_auctions>");
    for k in 0..n(15.0) {
        let _ = write!(g.out, "<open_auction id=\"open_auction{k}\"><initial>");
        let _ = write!(g.out, "{}", g.rng.gen_range(1..200));
        g.out.push_str("</initial><bidder><increase>3.00</increase></bidder><current>");
        let _ = write!(g.out, "{}", g.rng.gen_range(1..400));
        let _ = write!(g.out, "</current><itemref item=\"item{k}\"/><annotation>");
        let kind = g.rng.gen_range(0..3);
        g.description(kind);
        g.out.push_str("</annotation></open_auction>");
    }
    g.out.push_str("</open_auctions><closed_auctions>");
    for k in 0..n(30.0) {
        let _ = write!(g.out, "<closed_auction><seller person=\"person{k}\"/><itemref item=\"item{k}\"/><price>");
        let _ = write!(g.out, "{}.{:02}", g.rng.gen_range(1..500), g.rng.gen_range(0..100));
        g.out.push_str("</price><annotation><author person=\"p\"/>");
        g.description(k % 3);
        g.out.push_str("</annotation></closed_auction>");
    }
    g.out.push_str("</closed_auctions></site>");
    g.out.into_bytes()
}

/// The benchmark queries, by name.
pub const BENCHMARK_QUERIES: [(&str, &str); 15] = [
    ("Q01", "/site/regions"),
    ("Q02", "/site/closed_auctions"),
    ("Q03", "/site/regions/europe/item/mailbox/mail/text/keyword"),
    ("Q04", "/site/closed_auctions/closed_auction/annotation/description/parlist/listitem"),
    (
        "Q05",
        "/site/closed_auctions/closed_auction/annotation/description/parlist/listitem/parlist/listitem/*//keyword",
    ),
    ("Q06", "/site/regions/*/item"),
    ("Q07", "//listitem//keyword"),
    ("Q08", "/site/regions/*/item//keyword"),
    ("Q13", "//*"),
    ("Q14", "//*//*"),
    ("Q15", "//*//*//*//*"),
    ("Q16", "//*//*//*//*//*//*//*//*"),
    ("X1", "/site/closed_auctions/closed_auction/annotation/description/text/keyword"),
    ("X2", "//closed_auction//keyword"),
    ("X3", "/site/closed_auctions/closed_auction//keyword"),
];
