//! Fixing constraint sides that reachability in the known graph decides.

use serde::Serialize;

use crate::builder::known_cycle;
use crate::closure::{transitive_closure, ClosureMethod};
use crate::constraints::{Constraint, Side};
use crate::graph::{DenseView, EdgeKind};
use crate::history::{ExtendedHistory, TxnId};
use crate::verdict::{CertEdge, Cycle, EdgeSource, Rejection};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct PruneOptions {
    pub max_iters: usize,
    pub closure: ClosureMethod,
}

impl Default for PruneOptions {
    fn default() -> Self {
        PruneOptions {
            max_iters: 10,
            closure: ClosureMethod::Auto,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PruneStats {
    pub iterations: usize,
    pub resolved: usize,
    pub edges_added: usize,
}

/// Repeatedly drops every constraint one of whose sides would close a cycle
/// with the known graph, adding the other side to the graph. Stops at a
/// fixpoint or after `max_iters` passes.
pub fn prune(
    e: &mut ExtendedHistory,
    mut cons: Vec<Constraint>,
    opts: PruneOptions,
) -> Result<(Vec<Constraint>, PruneStats), Rejection> {
    let mut stats = PruneStats::default();
    while stats.iterations < opts.max_iters && !cons.is_empty() {
        stats.iterations += 1;
        let dense = e.graph().to_dense();
        let reach = match transitive_closure(&dense.graph, opts.closure) {
            Ok(r) => r,
            Err(c) => return Err(Rejection::Cycle(known_cycle(e, &dense.ids_of(&c)))),
        };
        let contradicts = |edges: &[(TxnId, TxnId)]| -> Option<(TxnId, TxnId)> {
            edges.iter().copied().find(|(a, b)| {
                let (a, b) = (dense.index[a], dense.index[b]);
                a == b || reach.reaches(b, a)
            })
        };
        let mut keep = Vec::with_capacity(cons.len());
        let mut fixed = Vec::new();
        for c in cons {
            match (contradicts(&c.first), contradicts(&c.second)) {
                (Some(x), Some(y)) => {
                    return Err(Rejection::Unsatisfiable {
                        blamed: vec![c.id],
                        cycles: vec![
                            side_cycle(e, &dense, &c, Side::First, x),
                            side_cycle(e, &dense, &c, Side::Second, y),
                        ],
                    })
                }
                (Some(_), None) => fixed.push((c, Side::Second)),
                (None, Some(_)) => fixed.push((c, Side::First)),
                (None, None) => keep.push(c),
            }
        }
        cons = keep;
        if fixed.is_empty() {
            break;
        }
        stats.resolved += fixed.len();
        for (c, side) in fixed {
            for &(a, b) in c.side(side) {
                stats.edges_added += e.graph_mut().add_edge(a, b, EdgeKind::Pruned) as usize;
            }
        }
    }
    Ok((cons, stats))
}

/// The constraint edge `a → b` followed by a known path `b ⇝ a`.
fn side_cycle(e: &ExtendedHistory, dense: &DenseView, c: &Constraint, side: Side, (a, b): (TxnId, TxnId)) -> Cycle {
    let mut edges = vec![CertEdge {
        from: a,
        to: b,
        source: EdgeSource::Constraint { id: c.id, side },
    }];
    if a != b {
        let path = dense
            .graph
            .path(dense.index[&b], dense.index[&a])
            .expect("closure says b reaches a");
        let nodes = dense.ids_of(&path);
        for w in nodes.windows(2) {
            edges.push(CertEdge {
                from: w[0],
                to: w[1],
                source: EdgeSource::Known(e.graph().edge_kind(w[0], w[1]).unwrap()),
            });
        }
    }
    Cycle { edges }
}
