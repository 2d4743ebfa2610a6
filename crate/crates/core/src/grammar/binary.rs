use crate::labels::{LabelId, LabelTable};
use crate::xml::{StNode, StructureTree};

use super::{subtree_sizes, Alphabet, GrammarError, Sym};

/// A ranked tree stored as its pre-order label sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryTree {
    pub alphabet: Alphabet,
    labels: Vec<LabelId>,
}

impl BinaryTree {
    pub fn from_preorder(alphabet: Alphabet, labels: Vec<LabelId>) -> Self {
        BinaryTree { alphabet, labels }
    }

    pub fn labels(&self) -> &[LabelId] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of edges.
    pub fn size(&self) -> usize {
        self.labels.len().saturating_sub(1)
    }

    pub fn subtree_sizes(&self) -> Vec<u32> {
        let syms: Vec<Sym> = self.labels.iter().map(|&l| Sym::T(l)).collect();
        subtree_sizes(&syms, |s| match s {
            Sym::T(l) => self.alphabet.rank(l),
            _ => 0,
        })
        .expect("well-formed tree")
    }

    pub fn to_term(&self) -> String {
        let mut out = String::new();
        // pending closers: remaining children of each open node
        let mut open: Vec<u8> = Vec::new();
        for &l in &self.labels {
            out.push_str(self.alphabet.labels.name(l));
            let r = self.alphabet.rank(l);
            if r > 0 {
                out.push('(');
                open.push(r);
            } else {
                loop {
                    match open.last_mut() {
                        None => break,
                        Some(rem) => {
                            *rem -= 1;
                            if *rem == 0 {
                                out.push(')');
                                open.pop();
                            } else {
                                out.push(',');
                                break;
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// First-child/next-sibling encoding of an unranked tree.
pub fn binarize(t: &StructureTree) -> BinaryTree {
    let alphabet = Alphabet::fcns(t.labels.clone());
    let mut labels = Vec::with_capacity(2 * t.len() + 1);
    let mut stack: Vec<Option<u32>> = vec![Some(0)];
    while let Some(x) = stack.pop() {
        match x {
            None => labels.push(LabelId::NULL),
            Some(v) => {
                let n = &t.nodes[v as usize];
                labels.push(n.label);
                stack.push(n.next_sibling);
                stack.push(n.first_child);
            }
        }
    }
    BinaryTree { alphabet, labels }
}

/// Inverse of [`binarize`].
pub fn unbinarize(b: &BinaryTree) -> Result<StructureTree, GrammarError> {
    if !b.alphabet.is_fcns() {
        return Err(GrammarError::NotFcns("alphabet ranks are not 2/0".into()));
    }
    enum Slot {
        Root,
        FirstChildOf(u32),
        NextSiblingOf(u32),
    }
    let mut nodes: Vec<StNode> = Vec::with_capacity(b.len() / 2);
    let mut slots = vec![Slot::Root];
    for (i, &l) in b.labels.iter().enumerate() {
        let Some(slot) = slots.pop() else {
            return Err(GrammarError::NotFcns(format!("trailing symbols at {i}")));
        };
        if l == LabelId::NULL {
            if matches!(slot, Slot::Root) {
                return Err(GrammarError::NotFcns("null root".into()));
            }
            continue;
        }
        let id = nodes.len() as u32;
        let parent = match slot {
            Slot::Root => {
                if i != 0 {
                    return Err(GrammarError::NotFcns("second root".into()));
                }
                None
            }
            Slot::FirstChildOf(u) => {
                nodes[u as usize].first_child = Some(id);
                Some(u)
            }
            Slot::NextSiblingOf(u) => {
                let p = nodes[u as usize].parent;
                if p.is_none() {
                    return Err(GrammarError::NotFcns("root has a sibling".into()));
                }
                nodes[u as usize].next_sibling = Some(id);
                p
            }
        };
        nodes.push(StNode {
            label: l,
            first_child: None,
            next_sibling: None,
            parent,
        });
        slots.push(Slot::NextSiblingOf(id));
        slots.push(Slot::FirstChildOf(id));
    }
    if !slots.is_empty() || nodes.is_empty() {
        return Err(GrammarError::NotFcns("truncated sequence".into()));
    }
    Ok(StructureTree {
        nodes,
        labels: b.alphabet.labels.clone(),
    })
}

impl BinaryTree {
    /// Builds a tree from label names and an explicit rank function; used by
    /// the term parser.
    pub(crate) fn from_named(labels: LabelTable, ranks: Vec<u8>, seq: Vec<LabelId>) -> Self {
        BinaryTree {
            alphabet: Alphabet::with_ranks(labels, ranks),
            labels: seq,
        }
    }
}
