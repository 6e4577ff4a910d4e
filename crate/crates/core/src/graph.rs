//! Directed graphs: the keyed known graph over transactions, and a dense
//! index-based graph with the usual algorithms.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::history::TxnId;

/// Why an edge is in the known graph.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    /// Writer to reader.
    ReadFrom,
    /// Reader of a value to the overwriter of that value.
    AntiDependency,
    /// Session order.
    ClientOrder,
    /// Ordering forced by the initial value being first on its key.
    InitialOrder,
    /// Side of a constraint fixed by pruning.
    Pruned,
    /// Stands in for a path through deleted transactions.
    Bridge,
}

impl EdgeKind {
    pub fn tag(self) -> &'static str {
        match self {
            EdgeKind::ReadFrom => "wr",
            EdgeKind::AntiDependency => "rw",
            EdgeKind::ClientOrder => "co",
            EdgeKind::InitialOrder => "init",
            EdgeKind::Pruned => "pruned",
            EdgeKind::Bridge => "bridge",
        }
    }
}

/// Known graph keyed by transaction id. Parallel edges collapse; the first
/// kind recorded is kept.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KnownGraph {
    succ: BTreeMap<TxnId, BTreeMap<TxnId, EdgeKind>>,
    pred: BTreeMap<TxnId, BTreeSet<TxnId>>,
}

impl KnownGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, v: TxnId) {
        self.succ.entry(v).or_default();
        self.pred.entry(v).or_default();
    }

    pub fn contains(&self, v: TxnId) -> bool {
        self.succ.contains_key(&v)
    }

    /// Adds `a → b`, creating endpoints as needed. Returns whether the edge
    /// is new.
    pub fn add_edge(&mut self, a: TxnId, b: TxnId, kind: EdgeKind) -> bool {
        self.add_node(a);
        self.add_node(b);
        let fresh = match self.succ.get_mut(&a).unwrap().entry(b) {
            std::collections::btree_map::Entry::Occupied(_) => false,
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(kind);
                true
            }
        };
        if fresh {
            self.pred.get_mut(&b).unwrap().insert(a);
        }
        fresh
    }

    pub fn has_edge(&self, a: TxnId, b: TxnId) -> bool {
        self.succ.get(&a).is_some_and(|s| s.contains_key(&b))
    }

    pub fn edge_kind(&self, a: TxnId, b: TxnId) -> Option<EdgeKind> {
        self.succ.get(&a).and_then(|s| s.get(&b)).copied()
    }

    pub fn remove_node(&mut self, v: TxnId) {
        if let Some(out) = self.succ.remove(&v) {
            for b in out.keys() {
                if let Some(p) = self.pred.get_mut(b) {
                    p.remove(&v);
                }
            }
        }
        if let Some(inc) = self.pred.remove(&v) {
            for a in inc {
                if let Some(s) = self.succ.get_mut(&a) {
                    s.remove(&v);
                }
            }
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = TxnId> + '_ {
        self.succ.keys().copied()
    }

    pub fn node_count(&self) -> usize {
        self.succ.len()
    }

    pub fn edge_count(&self) -> usize {
        self.succ.values().map(BTreeMap::len).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (TxnId, TxnId, EdgeKind)> + '_ {
        self.succ
            .iter()
            .flat_map(|(a, out)| out.iter().map(move |(b, k)| (*a, *b, *k)))
    }

    pub fn successors(&self, v: TxnId) -> impl Iterator<Item = TxnId> + '_ {
        self.succ.get(&v).into_iter().flat_map(|s| s.keys().copied())
    }

    pub fn predecessors(&self, v: TxnId) -> impl Iterator<Item = TxnId> + '_ {
        self.pred.get(&v).into_iter().flatten().copied()
    }

    /// Dense copy with nodes indexed in ascending id order.
    pub fn to_dense(&self) -> DenseView {
        let ids: Vec<TxnId> = self.nodes().collect();
        let index: HashMap<TxnId, u32> = ids.iter().enumerate().map(|(i, t)| (*t, i as u32)).collect();
        let mut graph = DiGraph::new(ids.len());
        for (a, b, _) in self.edges() {
            graph.add_edge(index[&a], index[&b]);
        }
        DenseView { ids, index, graph }
    }
}

/// A [`KnownGraph`] mapped onto dense indices.
#[derive(Clone, Debug)]
pub struct DenseView {
    pub ids: Vec<TxnId>,
    pub index: HashMap<TxnId, u32>,
    pub graph: DiGraph,
}

impl DenseView {
    pub fn ids_of(&self, path: &[u32]) -> Vec<TxnId> {
        path.iter().map(|&i| self.ids[i as usize]).collect()
    }
}

/// Adjacency-list graph over `0..n`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DiGraph {
    adj: Vec<Vec<u32>>,
}

impl DiGraph {
    pub fn new(n: usize) -> Self {
        DiGraph {
            adj: vec![Vec::new(); n],
        }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut g = DiGraph::new(n);
        for (a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn add_edge(&mut self, a: u32, b: u32) {
        self.adj[a as usize].push(b);
    }

    pub fn successors(&self, v: u32) -> &[u32] {
        &self.adj[v as usize]
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }

    /// Kahn's algorithm, smallest ready vertex first. On a cycle returns one
    /// as `[v0, v1, ..., vk]` meaning `v0 → v1 → ... → vk → v0`.
    pub fn topo_order(&self) -> Result<Vec<u32>, Vec<u32>> {
        let n = self.adj.len();
        let mut indeg = vec![0usize; n];
        for out in &self.adj {
            for &b in out {
                indeg[b as usize] += 1;
            }
        }
        let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<u32>> = (0..n as u32)
            .filter(|&v| indeg[v as usize] == 0)
            .map(std::cmp::Reverse)
            .collect();
        let mut order = Vec::with_capacity(n);
        while let Some(std::cmp::Reverse(v)) = ready.pop() {
            order.push(v);
            for &b in &self.adj[v as usize] {
                indeg[b as usize] -= 1;
                if indeg[b as usize] == 0 {
                    ready.push(std::cmp::Reverse(b));
                }
            }
        }
        if order.len() == n {
            Ok(order)
        } else {
            Err(self.find_cycle().expect("Kahn stalled so a cycle exists"))
        }
    }

    pub fn is_acyclic(&self) -> bool {
        self.find_cycle().is_none()
    }

    /// Some cycle, found by iterative DFS.
    pub fn find_cycle(&self) -> Option<Vec<u32>> {
        const WHITE: u8 = 0;
        const GREY: u8 = 1;
        const BLACK: u8 = 2;
        let n = self.adj.len();
        let mut color = vec![WHITE; n];
        let mut stack: Vec<(u32, usize)> = Vec::new();
        for root in 0..n as u32 {
            if color[root as usize] != WHITE {
                continue;
            }
            color[root as usize] = GREY;
            stack.push((root, 0));
            while let Some(&mut (v, ref mut i)) = stack.last_mut() {
                if let Some(&w) = self.adj[v as usize].get(*i) {
                    *i += 1;
                    match color[w as usize] {
                        WHITE => {
                            color[w as usize] = GREY;
                            stack.push((w, 0));
                        }
                        GREY => {
                            let start = stack.iter().position(|&(u, _)| u == w).unwrap();
                            return Some(stack[start..].iter().map(|&(u, _)| u).collect());
                        }
                        _ => {}
                    }
                } else {
                    color[v as usize] = BLACK;
                    stack.pop();
                }
            }
        }
        None
    }

    /// Strongly connected components (iterative Tarjan), each sorted, in
    /// reverse topological order of the condensation.
    pub fn scc(&self) -> Vec<Vec<u32>> {
        let n = self.adj.len();
        let mut index = vec![u32::MAX; n];
        let mut low = vec![0u32; n];
        let mut on_stack = vec![false; n];
        let mut stack = Vec::new();
        let mut comps = Vec::new();
        let mut counter = 0u32;
        let mut call: Vec<(u32, usize)> = Vec::new();
        for root in 0..n as u32 {
            if index[root as usize] != u32::MAX {
                continue;
            }
            call.push((root, 0));
            index[root as usize] = counter;
            low[root as usize] = counter;
            counter += 1;
            stack.push(root);
            on_stack[root as usize] = true;
            while let Some(&mut (v, ref mut i)) = call.last_mut() {
                if let Some(&w) = self.adj[v as usize].get(*i) {
                    *i += 1;
                    if index[w as usize] == u32::MAX {
                        index[w as usize] = counter;
                        low[w as usize] = counter;
                        counter += 1;
                        stack.push(w);
                        on_stack[w as usize] = true;
                        call.push((w, 0));
                    } else if on_stack[w as usize] {
                        low[v as usize] = low[v as usize].min(index[w as usize]);
                    }
                } else {
                    call.pop();
                    if let Some(&(parent, _)) = call.last() {
                        low[parent as usize] = low[parent as usize].min(low[v as usize]);
                    }
                    if low[v as usize] == index[v as usize] {
                        let mut comp = Vec::new();
                        loop {
                            let w = stack.pop().unwrap();
                            on_stack[w as usize] = false;
                            comp.push(w);
                            if w == v {
                                break;
                            }
                        }
                        comp.sort_unstable();
                        comps.push(comp);
                    }
                }
            }
        }
        comps
    }

    /// Vertices reachable from `v` by a path of length ≥ 1.
    pub fn reachable_from(&self, v: u32) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        let mut queue: VecDeque<u32> = self.adj[v as usize].iter().copied().collect();
        for &w in &self.adj[v as usize] {
            seen[w as usize] = true;
        }
        while let Some(u) = queue.pop_front() {
            for &w in &self.adj[u as usize] {
                if !seen[w as usize] {
                    seen[w as usize] = true;
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    /// Shortest path `from ⇝ to` of length ≥ 1, as the vertex list
    /// `[from, ..., to]`.
    pub fn path(&self, from: u32, to: u32) -> Option<Vec<u32>> {
        let n = self.adj.len();
        let mut parent = vec![u32::MAX; n];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::new();
        for &w in &self.adj[from as usize] {
            if !seen[w as usize] {
                seen[w as usize] = true;
                parent[w as usize] = from;
                queue.push_back(w);
            }
        }
        while let Some(u) = queue.pop_front() {
            if u == to {
                let mut path = vec![to];
                let mut cur = to;
                loop {
                    cur = parent[cur as usize];
                    path.push(cur);
                    if cur == from {
                        break;
                    }
                }
                path.reverse();
                return Some(path);
            }
            for &w in &self.adj[u as usize] {
                if !seen[w as usize] {
                    seen[w as usize] = true;
                    parent[w as usize] = u;
                    queue.push_back(w);
                }
            }
        }
        None
    }
}
