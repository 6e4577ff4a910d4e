//! Incrementally maintained topological order (Pearce-Kelly) with LIFO edge
//! removal.

/// Owner tag of an edge that belongs to no choice.
pub const FIXED: u32 = u32::MAX;

/// An edge `from → to` tagged with the choice that added it.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct OwnedEdge {
    pub from: u32,
    pub to: u32,
    pub owner: u32,
}

pub struct DynamicOrder {
    ord: Vec<u32>,
    node_at: Vec<u32>,
    succ: Vec<Vec<(u32, u32)>>,
    pred: Vec<Vec<(u32, u32)>>,
    stamp: Vec<u32>,
    epoch: u32,
    parent: Vec<(u32, u32)>,
    stack: Vec<u32>,
    fwd: Vec<u32>,
    bwd: Vec<u32>,
}

impl DynamicOrder {
    pub fn new(n: usize) -> Self {
        DynamicOrder {
            ord: (0..n as u32).collect(),
            node_at: (0..n as u32).collect(),
            succ: vec![Vec::new(); n],
            pred: vec![Vec::new(); n],
            stamp: vec![0; n],
            epoch: 0,
            parent: vec![(0, 0); n],
            stack: Vec::new(),
            fwd: Vec::new(),
            bwd: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ord.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ord.is_empty()
    }

    pub fn is_forward(&self, a: u32, b: u32) -> bool {
        self.ord[a as usize] < self.ord[b as usize]
    }

    /// Current topological order, first to last.
    pub fn order(&self) -> &[u32] {
        &self.node_at
    }

    fn bump(&mut self) -> u32 {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
        self.epoch
    }

    /// Inserts the edge unless it closes a cycle, in which case the cycle is
    /// returned as a closed list of edges starting with the new one.
    pub fn add_edge(&mut self, from: u32, to: u32, owner: u32) -> Result<(), Vec<OwnedEdge>> {
        let new = OwnedEdge { from, to, owner };
        if from == to {
            return Err(vec![new]);
        }
        let (lb, ub) = (self.ord[to as usize], self.ord[from as usize]);
        if lb < ub {
            if let Some(path) = self.forward(to, from, ub) {
                let mut cycle = vec![new];
                cycle.extend(path);
                return Err(cycle);
            }
            self.backward(from, lb);
            self.reorder();
        }
        self.succ[from as usize].push((to, owner));
        self.pred[to as usize].push((from, owner));
        Ok(())
    }

    /// Removes the most recently added edge out of `from`, which must be
    /// `from → to`.
    pub fn remove_last(&mut self, from: u32, to: u32) {
        let (t, _) = self.succ[from as usize].pop().expect("edge present");
        debug_assert_eq!(t, to);
        let (f, _) = self.pred[to as usize].pop().expect("edge present");
        debug_assert_eq!(f, from);
    }

    /// DFS from `start` over nodes ordered at most `ub`. Returns the path
    /// `start ⇝ target` if found; otherwise leaves the visited set in `fwd`.
    fn forward(&mut self, start: u32, target: u32, ub: u32) -> Option<Vec<OwnedEdge>> {
        let e = self.bump();
        self.fwd.clear();
        self.stack.clear();
        self.stamp[start as usize] = e;
        self.stack.push(start);
        self.fwd.push(start);
        while let Some(v) = self.stack.pop() {
            for &(w, owner) in &self.succ[v as usize] {
                if w == target {
                    self.parent[w as usize] = (v, owner);
                    let mut path = Vec::new();
                    let mut cur = w;
                    while cur != start {
                        let (p, o) = self.parent[cur as usize];
                        path.push(OwnedEdge {
                            from: p,
                            to: cur,
                            owner: o,
                        });
                        cur = p;
                    }
                    path.reverse();
                    return Some(path);
                }
                if self.stamp[w as usize] != e && self.ord[w as usize] < ub {
                    self.stamp[w as usize] = e;
                    self.parent[w as usize] = (v, owner);
                    self.stack.push(w);
                    self.fwd.push(w);
                }
            }
        }
        None
    }

    fn backward(&mut self, start: u32, lb: u32) {
        let e = self.bump();
        self.bwd.clear();
        self.stack.clear();
        self.stamp[start as usize] = e;
        self.stack.push(start);
        self.bwd.push(start);
        while let Some(v) = self.stack.pop() {
            for &(w, _) in &self.pred[v as usize] {
                if self.stamp[w as usize] != e && self.ord[w as usize] > lb {
                    self.stamp[w as usize] = e;
                    self.stack.push(w);
                    self.bwd.push(w);
                }
            }
        }
    }

    fn reorder(&mut self) {
        let ord = &self.ord;
        self.fwd.sort_unstable_by_key(|&v| ord[v as usize]);
        self.bwd.sort_unstable_by_key(|&v| ord[v as usize]);
        let mut slots: Vec<u32> = self
            .bwd
            .iter()
            .chain(self.fwd.iter())
            .map(|&v| self.ord[v as usize])
            .collect();
        slots.sort_unstable();
        for (i, &v) in self.bwd.iter().chain(self.fwd.iter()).enumerate() {
            self.ord[v as usize] = slots[i];
            self.node_at[slots[i] as usize] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DiGraph;
    use proptest::prelude::*;

    fn check_order(o: &DynamicOrder, edges: &[(u32, u32)]) -> bool {
        edges.iter().all(|&(a, b)| o.is_forward(a, b))
            && o.order()
                .iter()
                .enumerate()
                .all(|(i, &v)| o.ord[v as usize] == i as u32)
    }

    #[test]
    fn detects_cycle_with_path() {
        let mut o = DynamicOrder::new(3);
        o.add_edge(2, 1, 0).unwrap();
        o.add_edge(1, 0, 1).unwrap();
        let c = o.add_edge(0, 2, 7).unwrap_err();
        let pairs: Vec<(u32, u32, u32)> = c.iter().map(|e| (e.from, e.to, e.owner)).collect();
        assert_eq!(pairs, vec![(0, 2, 7), (2, 1, 0), (1, 0, 1)]);
    }

    proptest! {
        #[test]
        fn matches_static_cycle_check(n in 2usize..15, raw in proptest::collection::vec((0u32..15, 0u32..15), 0..60)) {
            let mut o = DynamicOrder::new(n);
            let mut kept: Vec<(u32, u32)> = Vec::new();
            for (a, b) in raw {
                let (a, b) = (a % n as u32, b % n as u32);
                let mut trial = kept.clone();
                trial.push((a, b));
                let acyclic = DiGraph::from_edges(n, trial.iter().copied()).is_acyclic();
                match o.add_edge(a, b, 0) {
                    Ok(()) => { prop_assert!(acyclic); kept.push((a, b)); }
                    Err(c) => {
                        prop_assert!(!acyclic);
                        prop_assert_eq!((c[0].from, c[0].to), (a, b));
                        for w in 0..c.len() {
                            prop_assert_eq!(c[w].to, c[(w + 1) % c.len()].from);
                            if w > 0 { prop_assert!(kept.contains(&(c[w].from, c[w].to))); }
                        }
                    }
                }
                prop_assert!(check_order(&o, &kept));
            }
            while let Some((a, b)) = kept.pop() {
                o.remove_last(a, b);
                prop_assert!(check_order(&o, &kept));
            }
        }
    }
}
