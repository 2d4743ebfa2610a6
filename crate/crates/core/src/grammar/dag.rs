use std::collections::HashMap;

use crate::labels::LabelId;

use super::text::NameSource;
use super::{child_positions, BinaryTree, NtId, Rule, SltGrammar, Sym};

/// Minimal DAG of `t` as a rank-0 grammar: every subtree occurring at least
/// twice (other than the null leaf) becomes a nonterminal.
pub fn build_dag(t: &BinaryTree) -> SltGrammar {
    let labels = t.labels();
    let n = labels.len();
    let sizes = t.subtree_sizes();
    let rank = |p: usize| t.alphabet.rank(labels[p]);

    // hash-cons bottom-up; ids are assigned children first
    let mut id_of = vec![0u32; n];
    let mut table: HashMap<Vec<u32>, u32> = HashMap::new();
    let mut first_pos: Vec<u32> = Vec::new();
    let mut count: Vec<u32> = Vec::new();
    let mut key = Vec::new();
    for p in (0..n).rev() {
        key.clear();
        key.push(labels[p].0);
        key.extend(child_positions(&sizes, p, rank(p)).map(|c| id_of[c]));
        let next = first_pos.len() as u32;
        let id = *table.entry(key.clone()).or_insert(next);
        if id == next {
            first_pos.push(p as u32);
            count.push(0);
        }
        first_pos[id as usize] = p as u32;
        count[id as usize] += 1;
        id_of[p] = id;
    }

    let shared = |id: u32, p: usize| count[id as usize] >= 2 && labels[p] != LabelId::NULL;
    let mut names = NameSource::new(t.alphabet.labels.names());
    let mut nt_of: HashMap<u32, NtId> = HashMap::new();
    let mut rules = Vec::new();

    // Emits the subtree at `root`, referencing shared proper subtrees.
    let emit = |root: usize, nt_of: &HashMap<u32, NtId>| {
        let mut rhs = Vec::new();
        let mut stack = vec![root];
        while let Some(p) = stack.pop() {
            if p != root && shared(id_of[p], p) {
                rhs.push(Sym::N(nt_of[&id_of[p]]));
                continue;
            }
            rhs.push(Sym::T(labels[p]));
            let kids: Vec<usize> = child_positions(&sizes, p, rank(p)).collect();
            stack.extend(kids.into_iter().rev());
        }
        rhs
    };

    for id in 0..first_pos.len() as u32 {
        let p = first_pos[id as usize] as usize;
        if !shared(id, p) {
            continue;
        }
        let rhs = emit(p, &nt_of);
        nt_of.insert(id, NtId(rules.len() as u32));
        rules.push(Rule {
            name: names.fresh(),
            rank: 0,
            rhs,
        });
    }
    let start = NtId(rules.len() as u32);
    rules.push(Rule {
        name: "S".into(),
        rank: 0,
        rhs: emit(0, &nt_of),
    });
    SltGrammar {
        alphabet: t.alphabet.clone(),
        rules,
        start,
    }
}
