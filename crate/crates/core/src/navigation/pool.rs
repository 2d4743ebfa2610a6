use std::collections::HashMap;
use std::fmt::Debug;

use super::{NodeId, Pair};

/// Storage for pair sequences with stack-like updates.
pub trait NodeStore {
    type Handle: Clone + Debug + PartialEq;
    fn single(&mut self, p: Pair) -> Self::Handle;
    fn push(&mut self, h: &Self::Handle, p: Pair) -> Self::Handle;
    /// Drop the last pair; `None` when only one remains.
    fn pop(&self, h: &Self::Handle) -> Option<Self::Handle>;
    fn top(&self, h: &Self::Handle) -> Pair;
    fn pairs(&self, h: &Self::Handle) -> Vec<Pair>;

    fn replace_top(&mut self, h: &Self::Handle, p: Pair) -> Self::Handle {
        match self.pop(h) {
            Some(rest) => self.push(&rest, p),
            None => self.single(p),
        }
    }
}

/// Node ids as owned vectors.
#[derive(Clone, Copy, Debug, Default)]
pub struct Plain;

impl NodeStore for Plain {
    type Handle = NodeId;

    fn single(&mut self, p: Pair) -> NodeId {
        NodeId(vec![p])
    }
    fn push(&mut self, h: &NodeId, p: Pair) -> NodeId {
        let mut v = Vec::with_capacity(h.0.len() + 1);
        v.extend_from_slice(&h.0);
        v.push(p);
        NodeId(v)
    }
    fn pop(&self, h: &NodeId) -> Option<NodeId> {
        (h.0.len() > 1).then(|| NodeId(h.0[..h.0.len() - 1].to_vec()))
    }
    fn top(&self, h: &NodeId) -> Pair {
        *h.0.last().expect("nonempty node id")
    }
    fn pairs(&self, h: &NodeId) -> Vec<Pair> {
        h.0.clone()
    }
    fn replace_top(&mut self, h: &NodeId, p: Pair) -> NodeId {
        let mut v = h.0.clone();
        *v.last_mut().expect("nonempty node id") = p;
        NodeId(v)
    }
}

/// Handle into a [`NodePool`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PoolId(u32);

const NO_PARENT: u32 = u32::MAX;

/// Trie of pair sequences: ids with equal prefixes share storage, and
/// push/pop are constant time.
#[derive(Debug, Default)]
pub struct NodePool {
    parent: Vec<u32>,
    pair: Vec<Pair>,
    children: HashMap<(u32, Pair), u32>,
}

impl NodePool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.pair.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pair.is_empty()
    }

    fn intern(&mut self, parent: u32, p: Pair) -> PoolId {
        if let Some(&id) = self.children.get(&(parent, p)) {
            return PoolId(id);
        }
        let id = self.pair.len() as u32;
        self.parent.push(parent);
        self.pair.push(p);
        self.children.insert((parent, p), id);
        PoolId(id)
    }
}

impl NodeStore for NodePool {
    type Handle = PoolId;

    fn single(&mut self, p: Pair) -> PoolId {
        self.intern(NO_PARENT, p)
    }
    fn push(&mut self, h: &PoolId, p: Pair) -> PoolId {
        self.intern(h.0, p)
    }
    fn pop(&self, h: &PoolId) -> Option<PoolId> {
        let p = self.parent[h.0 as usize];
        (p != NO_PARENT).then_some(PoolId(p))
    }
    fn top(&self, h: &PoolId) -> Pair {
        self.pair[h.0 as usize]
    }
    fn pairs(&self, h: &PoolId) -> Vec<Pair> {
        let mut v = Vec::new();
        let mut cur = h.0;
        while cur != NO_PARENT {
            v.push(self.pair[cur as usize]);
            cur = self.parent[cur as usize];
        }
        v.reverse();
        v
    }
}
