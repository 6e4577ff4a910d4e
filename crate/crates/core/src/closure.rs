//! Transitive closure of a DAG as a dense bit matrix.

use std::thread;

use crate::graph::DiGraph;

/// How to compute reachability.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub enum ClosureMethod {
    /// Currently [`ClosureMethod::TopoSweep`].
    #[default]
    Auto,
    /// Repeated squaring `R ← R ∪ R·R` until fixpoint, rows split across
    /// threads.
    Squaring,
    /// One pass in reverse topological order.
    TopoSweep,
    /// One breadth-first search per vertex.
    Bfs,
}

/// `reaches(i, j)` iff there is a path of length ≥ 1 from `i` to `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReachabilityMatrix {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl ReachabilityMatrix {
    fn empty(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        ReachabilityMatrix {
            n,
            words,
            bits: vec![0; n * words],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn reaches(&self, i: u32, j: u32) -> bool {
        let w = self.bits[i as usize * self.words + j as usize / 64];
        w >> (j % 64) & 1 == 1
    }

    fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    fn set(&mut self, i: usize, j: usize) {
        self.bits[i * self.words + j / 64] |= 1 << (j % 64);
    }

    /// Number of reachable ordered pairs.
    pub fn pair_count(&self) -> u64 {
        self.bits.iter().map(|w| w.count_ones() as u64).sum()
    }

    fn has_loop(&self) -> bool {
        (0..self.n as u32).any(|i| self.reaches(i, i))
    }
}

/// Closure of `g`, or a cycle of `g` if it has one.
pub fn transitive_closure(g: &DiGraph, method: ClosureMethod) -> Result<ReachabilityMatrix, Vec<u32>> {
    match method {
        ClosureMethod::Auto | ClosureMethod::TopoSweep => topo_sweep(g),
        ClosureMethod::Squaring => squaring(g),
        ClosureMethod::Bfs => bfs(g),
    }
}

fn topo_sweep(g: &DiGraph) -> Result<ReachabilityMatrix, Vec<u32>> {
    let order = g.topo_order()?;
    let mut m = ReachabilityMatrix::empty(g.len());
    let words = m.words;
    let mut acc = vec![0u64; words];
    for &v in order.iter().rev() {
        acc.iter_mut().for_each(|w| *w = 0);
        for &s in g.successors(v) {
            let s = s as usize;
            acc[s / 64] |= 1 << (s % 64);
            for (a, b) in acc.iter_mut().zip(m.row(s)) {
                *a |= *b;
            }
        }
        m.bits[v as usize * words..(v as usize + 1) * words].copy_from_slice(&acc);
    }
    Ok(m)
}

fn bfs(g: &DiGraph) -> Result<ReachabilityMatrix, Vec<u32>> {
    let mut m = ReachabilityMatrix::empty(g.len());
    for v in 0..g.len() {
        for (j, r) in g.reachable_from(v as u32).into_iter().enumerate() {
            if r {
                m.set(v, j);
            }
        }
    }
    if m.has_loop() {
        return Err(g.find_cycle().expect("closure has a loop"));
    }
    Ok(m)
}

fn squaring(g: &DiGraph) -> Result<ReachabilityMatrix, Vec<u32>> {
    let n = g.len();
    let mut m = ReachabilityMatrix::empty(n);
    for v in 0..n {
        for &s in g.successors(v as u32) {
            m.set(v, s as usize);
        }
    }
    let threads = thread::available_parallelism().map_or(1, |p| p.get()).min(n.max(1));
    let rows_per = n.div_ceil(threads).max(1);
    loop {
        let prev = &m;
        let words = prev.words;
        let mut next = vec![0u64; n * words];
        thread::scope(|scope| {
            for (chunk_idx, chunk) in next.chunks_mut(rows_per * words).enumerate() {
                scope.spawn(move || {
                    for (r, out) in chunk.chunks_mut(words).enumerate() {
                        let i = chunk_idx * rows_per + r;
                        let row = prev.row(i);
                        out.copy_from_slice(row);
                        for (wi, &word) in row.iter().enumerate() {
                            let mut bits = word;
                            while bits != 0 {
                                let j = wi * 64 + bits.trailing_zeros() as usize;
                                bits &= bits - 1;
                                for (o, x) in out.iter_mut().zip(prev.row(j)) {
                                    *o |= *x;
                                }
                            }
                        }
                    }
                });
            }
        });
        let changed = next != m.bits;
        m.bits = next;
        if !changed {
            break;
        }
    }
    if m.has_loop() {
        return Err(g.find_cycle().expect("closure has a loop"));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_dag() -> impl Strategy<Value = DiGraph> {
        (1usize..80).prop_flat_map(|n| {
            proptest::collection::vec((0..n as u32, 0..n as u32), 0..200)
                .prop_map(move |es| DiGraph::from_edges(n, es.into_iter().filter(|(a, b)| a < b)))
        })
    }

    #[test]
    fn cycle_reported() {
        let g = DiGraph::from_edges(3, [(0, 1), (1, 2), (2, 0)]);
        for m in [ClosureMethod::TopoSweep, ClosureMethod::Squaring, ClosureMethod::Bfs] {
            let c = transitive_closure(&g, m).unwrap_err();
            assert_eq!(c.len(), 3);
        }
    }

    #[test]
    fn chain_closure() {
        let g = DiGraph::from_edges(4, [(0, 1), (1, 2), (2, 3)]);
        let m = transitive_closure(&g, ClosureMethod::Squaring).unwrap();
        assert!(m.reaches(0, 3));
        assert!(!m.reaches(3, 0));
        assert!(!m.reaches(1, 1));
        assert_eq!(m.pair_count(), 6);
    }

    proptest! {
        #[test]
        fn methods_agree(g in arb_dag()) {
            let a = transitive_closure(&g, ClosureMethod::TopoSweep).unwrap();
            let b = transitive_closure(&g, ClosureMethod::Squaring).unwrap();
            let c = transitive_closure(&g, ClosureMethod::Bfs).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(&a, &c);
        }
    }
}
