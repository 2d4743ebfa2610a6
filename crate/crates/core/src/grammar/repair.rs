//! Digram-replacement compression in the style of TreeRePair.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};

use super::text::NameSource;
use super::{build_dag, child_positions, BinaryTree, Inliner, NtId, Rule, SltGrammar, Sym};

const NONE: u32 = u32::MAX;

struct Node {
    sym: u32,
    kids: Vec<u32>,
    parent: u32,
    pidx: u8,
    alive: bool,
}

/// (parent symbol, child index, child symbol) packed so that integer order
/// is lexicographic order.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
struct Digram(u64);

impl Digram {
    fn new(parent: u32, idx: u8, child: u32) -> Self {
        Digram(((parent as u64) << 36) | ((idx as u64) << 32) | child as u64)
    }
    fn parent(self) -> u32 {
        (self.0 >> 36) as u32
    }
    fn idx(self) -> u8 {
        ((self.0 >> 32) & 0xf) as u8
    }
    fn child(self) -> u32 {
        (self.0 & 0xffff_ffff) as u32
    }
}

struct Compressor {
    nodes: Vec<Node>,
    ranks: Vec<u8>,
    max_rank: u8,
    occ: HashMap<Digram, HashSet<u32>>,
    heap: BinaryHeap<(usize, Reverse<Digram>)>,
}

impl Compressor {
    fn eligible(&self, d: Digram) -> bool {
        let r = self.ranks[d.parent() as usize] as usize - 1 + self.ranks[d.child() as usize] as usize;
        r <= self.max_rank as usize
    }

    fn digram_at(&self, p: u32, k: u8) -> Digram {
        let n = &self.nodes[p as usize];
        Digram::new(n.sym, k, self.nodes[n.kids[k as usize] as usize].sym)
    }

    fn add_edge(&mut self, p: u32, k: u8) {
        let d = self.digram_at(p, k);
        if !self.eligible(d) {
            return;
        }
        let set = self.occ.entry(d).or_default();
        if d.parent() == d.child() {
            let c = self.nodes[p as usize].kids[k as usize];
            let up = self.nodes[p as usize].parent;
            if set.contains(&c) || (up != NONE && self.nodes[p as usize].pidx == k && set.contains(&up)) {
                return;
            }
        }
        set.insert(p);
        let cnt = set.len();
        if cnt >= 2 {
            self.heap.push((cnt, Reverse(d)));
        }
    }

    fn remove_edge(&mut self, p: u32, k: u8) {
        let d = self.digram_at(p, k);
        if let Some(set) = self.occ.get_mut(&d) {
            set.remove(&p);
        }
    }

    fn replace(&mut self, p: u32, d: Digram, nt: u32) {
        let i = d.idx() as usize;
        let c = self.nodes[p as usize].kids[i];
        let (up, upidx) = (self.nodes[p as usize].parent, self.nodes[p as usize].pidx);
        if up != NONE {
            self.remove_edge(up, upidx);
        }
        for k in 0..self.nodes[p as usize].kids.len() {
            self.remove_edge(p, k as u8);
        }
        for k in 0..self.nodes[c as usize].kids.len() {
            self.remove_edge(c, k as u8);
        }
        let ckids = std::mem::take(&mut self.nodes[c as usize].kids);
        self.nodes[c as usize].alive = false;
        let old = std::mem::take(&mut self.nodes[p as usize].kids);
        let mut kids = Vec::with_capacity(old.len() - 1 + ckids.len());
        kids.extend_from_slice(&old[..i]);
        kids.extend_from_slice(&ckids);
        kids.extend_from_slice(&old[i + 1..]);
        for (k, &x) in kids.iter().enumerate() {
            self.nodes[x as usize].parent = p;
            self.nodes[x as usize].pidx = k as u8;
        }
        let nk = kids.len();
        self.nodes[p as usize].kids = kids;
        self.nodes[p as usize].sym = nt;
        if up != NONE {
            self.add_edge(up, upidx);
        }
        for k in 0..nk {
            self.add_edge(p, k as u8);
        }
    }

    fn valid(&self, p: u32, d: Digram) -> bool {
        let n = &self.nodes[p as usize];
        n.alive
            && n.sym == d.parent()
            && n.kids
                .get(d.idx() as usize)
                .is_some_and(|&c| self.nodes[c as usize].sym == d.child())
    }

    /// Pops the most frequent digram with at least two occurrences.
    fn best(&mut self) -> Option<Digram> {
        while let Some((cnt, Reverse(d))) = self.heap.pop() {
            let now = self.occ.get(&d).map_or(0, HashSet::len);
            if now == cnt {
                return Some(d);
            }
            if now >= 2 && now < cnt {
                self.heap.push((now, Reverse(d)));
            }
        }
        None
    }
}

/// Compresses `t` by repeatedly replacing the most frequent digram whose
/// pattern has rank at most `max_rank`, then pruning nonterminals that do
/// not pay for themselves. `max_rank = 0` yields the minimal DAG.
pub fn compress_repair(t: &BinaryTree, max_rank: u8) -> SltGrammar {
    if max_rank == 0 {
        return build_dag(t);
    }
    let sigma = t.alphabet.len() as u32;
    let labels = t.labels();
    let sizes = t.subtree_sizes();
    let mut c = Compressor {
        nodes: Vec::with_capacity(labels.len()),
        ranks: t.alphabet.ranks().to_vec(),
        max_rank: max_rank.min(15),
        occ: HashMap::new(),
        heap: BinaryHeap::new(),
    };
    for &l in labels {
        c.nodes.push(Node {
            sym: l.0,
            kids: Vec::new(),
            parent: NONE,
            pidx: 0,
            alive: true,
        });
    }
    for p in 0..labels.len() {
        let kids: Vec<u32> = child_positions(&sizes, p, t.alphabet.rank(labels[p]))
            .map(|x| x as u32)
            .collect();
        for (k, &x) in kids.iter().enumerate() {
            c.nodes[x as usize].parent = p as u32;
            c.nodes[x as usize].pidx = k as u8;
        }
        c.nodes[p].kids = kids;
    }
    for p in 0..labels.len() as u32 {
        for k in 0..c.nodes[p as usize].kids.len() {
            c.add_edge(p, k as u8);
        }
    }

    let mut digrams: Vec<Digram> = Vec::new();
    while let Some(d) = c.best() {
        let nt = sigma + digrams.len() as u32;
        let rank = c.ranks[d.parent() as usize] - 1 + c.ranks[d.child() as usize];
        c.ranks.push(rank);
        digrams.push(d);
        let mut occs: Vec<u32> = c.occ.remove(&d).unwrap_or_default().into_iter().collect();
        occs.sort_unstable();
        for p in occs {
            if c.valid(p, d) {
                c.replace(p, d, nt);
            }
        }
    }

    let to_sym = |code: u32| {
        if code < sigma {
            Sym::T(crate::labels::LabelId(code))
        } else {
            Sym::N(NtId(code - sigma))
        }
    };
    let mut rules: Vec<Rule> = digrams
        .iter()
        .enumerate()
        .map(|(j, d)| {
            let rx = c.ranks[d.parent() as usize];
            let ry = c.ranks[d.child() as usize];
            let i = d.idx();
            let mut rhs = vec![to_sym(d.parent())];
            let mut y = 1u16;
            for k in 0..rx {
                if k == i {
                    rhs.push(to_sym(d.child()));
                    for _ in 0..ry {
                        rhs.push(Sym::Y(y));
                        y += 1;
                    }
                } else {
                    rhs.push(Sym::Y(y));
                    y += 1;
                }
            }
            Rule {
                name: String::new(),
                rank: c.ranks[sigma as usize + j],
                rhs,
            }
        })
        .collect();
    let mut start_rhs = Vec::new();
    let mut stack = vec![0u32];
    while let Some(p) = stack.pop() {
        let n = &c.nodes[p as usize];
        start_rhs.push(to_sym(n.sym));
        stack.extend(n.kids.iter().rev());
    }
    rules.push(Rule {
        name: "S".into(),
        rank: 0,
        rhs: start_rhs,
    });
    let g = SltGrammar {
        alphabet: t.alphabet.clone(),
        start: NtId(rules.len() as u32 - 1),
        rules,
    };
    let g = prune(g);
    if g.stats().size > t.size() {
        SltGrammar::one_rule(t)
    } else {
        g
    }
}

/// Inlines nonterminals whose rule does not save space. Rules must be in
/// creation order (referenced rules first) with the start rule last.
fn prune(g: SltGrammar) -> SltGrammar {
    let n = g.rules.len() - 1;
    let mut dropped = vec![false; n];
    let mut eff = vec![0i64; n];
    let mut refs = vec![0i64; n];
    loop {
        for x in 0..n {
            let r = &g.rules[x];
            eff[x] = r.rhs.len() as i64 - 1
                + r.rhs
                    .iter()
                    .filter_map(|s| match s {
                        Sym::N(m) if dropped[m.index()] => Some(eff[m.index()] - g.rules[m.index()].rank as i64),
                        _ => None,
                    })
                    .sum::<i64>();
        }
        refs.iter_mut().for_each(|r| *r = 0);
        for s in &g.rules[n].rhs {
            if let Sym::N(m) = s {
                refs[m.index()] += 1;
            }
        }
        // Deciding from the top down keeps reference counts exact for the
        // rule being decided; dropping a rule raises the counts below it.
        let mut changed = false;
        for x in (0..n).rev() {
            let rank = g.rules[x].rank as i64;
            if !dropped[x] && refs[x] * (eff[x] - rank) - eff[x] <= 0 {
                dropped[x] = true;
                changed = true;
            }
            let w = if dropped[x] { refs[x] } else { (refs[x] > 0) as i64 };
            if w == 0 {
                continue;
            }
            for s in &g.rules[x].rhs {
                if let Sym::N(m) = s {
                    refs[m.index()] += w;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut names = NameSource::new(g.alphabet.labels.names());
    let mut new_id = vec![NtId(u32::MAX); n];
    let mut kept = 0u32;
    for x in 0..n {
        if !dropped[x] {
            new_id[x] = NtId(kept);
            kept += 1;
        }
    }
    let mut inl = Inliner::new(&g);
    let mut rules = Vec::with_capacity(kept as usize + 1);
    let remap = |rhs: Vec<Sym>| -> Vec<Sym> {
        rhs.into_iter()
            .map(|s| match s {
                Sym::N(m) => Sym::N(new_id[m.index()]),
                s => s,
            })
            .collect()
    };
    for x in 0..n {
        if dropped[x] {
            continue;
        }
        let rhs = inl.inline(&g.rules[x].rhs, |m| dropped[m.index()]);
        rules.push(Rule {
            name: names.fresh(),
            rank: g.rules[x].rank,
            rhs: remap(rhs),
        });
    }
    let rhs = inl.inline(&g.rules[n].rhs, |m| dropped[m.index()]);
    rules.push(Rule {
        name: "S".into(),
        rank: 0,
        rhs: remap(rhs),
    });
    SltGrammar {
        alphabet: g.alphabet.clone(),
        start: NtId(rules.len() as u32 - 1),
        rules,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_term;

    #[test]
    fn repair_generates_the_tree() {
        let t = parse_term("f(f(a(b,c),a(c,c)),a(c,c))").unwrap();
        for r in 0..=4 {
            let g = compress_repair(&t, r);
            g.validate().unwrap();
            assert!(g.stats().rank <= r);
            assert_eq!(g.expand().unwrap(), t, "max_rank {r}");
            assert!(g.stats().size <= t.size());
        }
    }

    #[test]
    fn repetitive_list_compresses() {
        let mut s = String::new();
        for _ in 0..64 {
            s.push_str("a(b(#,#),");
        }
        s.push('#');
        for _ in 0..64 {
            s.push(')');
        }
        let t = parse_term(&s).unwrap();
        let g = compress_repair(&t, 2);
        assert_eq!(g.expand().unwrap(), t);
        assert!(g.stats().size * 4 < t.size(), "{}", g.stats().size);
    }

    #[test]
    fn digram_packing() {
        let d = Digram::new(123_456, 9, 7_654_321);
        assert_eq!((d.parent(), d.idx(), d.child()), (123_456, 9, 7_654_321));
        assert!(Digram::new(1, 0, 5) < Digram::new(1, 1, 0));
    }
}
