//! Construction of the known graph and indices from (a fragment of) a history.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::error::HistoryError;
use crate::graph::EdgeKind;
use crate::history::{ExtendedHistory, History, Key, TxnId, WriteId, WriteRecord};
use crate::verdict::{CertEdge, Cycle, EdgeSource, Rejection};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BuildError {
    #[error(transparent)]
    Invalid(#[from] HistoryError),
    /// A read whose write is not (yet) known.
    #[error("transaction {txn} reads {key} from write {write_id}, which is not known")]
    Unresolved { txn: TxnId, key: Key, write_id: WriteId },
    #[error("{0}")]
    Rejected(Rejection),
}

/// Extends `acc` with the transactions of `frag`: WR edges, read-from and
/// consecutive-write indices, and client-order edges. All checks run before
/// any mutation, so `acc` is untouched on error.
pub fn create_known_graph(acc: &mut ExtendedHistory, frag: &History) -> Result<(), BuildError> {
    let mut new_writes: HashMap<WriteId, WriteRecord> = HashMap::new();
    for t in frag.transactions() {
        if acc.txns.contains_key(&t.id) || acc.tombstones.contains(&t.id) {
            return Err(HistoryError::DuplicateTxn(t.id).into());
        }
        for w in t.writes() {
            let rec = WriteRecord {
                txn: t.id,
                key: w.key.clone(),
            };
            if acc.writes.contains_key(&w.write_id) || new_writes.insert(w.write_id, rec).is_some() {
                return Err(HistoryError::DuplicateWriteId(w.write_id).into());
            }
        }
    }
    for (s, list) in frag.sessions() {
        if let Some(live) = acc.sessions.get(s) {
            for id in list {
                let seq = frag.get(*id).unwrap().seq;
                if live.contains_key(&seq) {
                    return Err(HistoryError::DuplicateSeq { session: *s, seq }.into());
                }
            }
        }
    }

    let mut reads: Vec<(Key, TxnId, TxnId)> = Vec::new();
    let mut new_pairs: BTreeMap<(Key, TxnId), TxnId> = BTreeMap::new();
    for t in frag.transactions() {
        for r in t.reads() {
            let writer = if r.write_id.is_initial() {
                TxnId::INIT
            } else {
                let rec = new_writes
                    .get(&r.write_id)
                    .or_else(|| acc.writes.get(&r.write_id))
                    .ok_or_else(|| BuildError::Unresolved {
                        txn: t.id,
                        key: r.key.clone(),
                        write_id: r.write_id,
                    })?;
                if rec.key != r.key {
                    return Err(BuildError::Rejected(Rejection::UnknownWrite {
                        reader: t.id,
                        key: r.key.clone(),
                        write_id: r.write_id,
                    }));
                }
                if acc.tombstones.contains(&rec.txn) {
                    return Err(BuildError::Rejected(Rejection::StaleRead {
                        reader: t.id,
                        key: r.key.clone(),
                        writer: rec.txn,
                    }));
                }
                rec.txn
            };
            if t.writes_key(r.key.as_str()) {
                let slot = (r.key.clone(), writer);
                let prior = acc.wwpairs.get(&slot).or_else(|| new_pairs.get(&slot)).copied();
                if let Some(first) = prior {
                    return Err(BuildError::Rejected(Rejection::SuccessiveWrites {
                        key: r.key.clone(),
                        writer,
                        first,
                        second: t.id,
                    }));
                }
                new_pairs.insert(slot, t.id);
            }
            reads.push((r.key.clone(), writer, t.id));
        }
    }

    for t in frag.transactions() {
        acc.txns.insert(t.id, t.clone());
        acc.graph.add_node(t.id);
    }
    acc.writes.extend(new_writes);
    for (key, writer, reader) in reads {
        if !writer.is_init() {
            acc.graph.add_edge(writer, reader, EdgeKind::ReadFrom);
        }
        acc.readfrom.entry((key, writer)).or_default().insert(reader);
    }
    acc.wwpairs.extend(new_pairs);

    for (s, list) in frag.sessions() {
        let live = acc.sessions.entry(*s).or_default();
        for id in list {
            live.insert(frag.get(*id).unwrap().seq, *id);
        }
        if !acc.session_order {
            continue;
        }
        for id in list {
            let seq = acc.txns[id].seq;
            if let Some((_, prev)) = live.range(..seq).next_back() {
                acc.graph.add_edge(*prev, *id, EdgeKind::ClientOrder);
            }
            if let Some((_, next)) = live.range(seq + 1..).next() {
                acc.graph.add_edge(*id, *next, EdgeKind::ClientOrder);
            }
        }
    }
    Ok(())
}

/// Builds the extended history of a complete history in one step. An
/// unresolved read is a rejection here: the write can never appear.
pub fn build(h: &History, session_order: bool) -> Result<ExtendedHistory, BuildError> {
    let mut e = ExtendedHistory::new(session_order);
    match create_known_graph(&mut e, h) {
        Err(BuildError::Unresolved { txn, key, write_id }) => Err(BuildError::Rejected(Rejection::UnknownWrite {
            reader: txn,
            key,
            write_id,
        })),
        other => other.map(|_| e),
    }
}

/// Early rejection: a cycle among the known edges. Successive writes are
/// caught while building.
pub fn check_easy_reject(e: &ExtendedHistory) -> Result<(), Rejection> {
    let dense = e.graph.to_dense();
    match dense.graph.find_cycle() {
        None => Ok(()),
        Some(c) => Err(Rejection::Cycle(known_cycle(e, &dense.ids_of(&c)))),
    }
}

/// Certificate for a cycle of known edges given as its vertex list.
pub fn known_cycle(e: &ExtendedHistory, nodes: &[TxnId]) -> Cycle {
    let edges = (0..nodes.len())
        .map(|i| {
            let (a, b) = (nodes[i], nodes[(i + 1) % nodes.len()]);
            CertEdge {
                from: a,
                to: b,
                source: EdgeSource::Known(e.graph.edge_kind(a, b).expect("cycle edge is known")),
            }
        })
        .collect();
    Cycle { edges }
}

/// Transactions that write each key, by key.
pub fn writers_by_key(e: &ExtendedHistory) -> BTreeMap<Key, BTreeSet<TxnId>> {
    let mut out: BTreeMap<Key, BTreeSet<TxnId>> = BTreeMap::new();
    for t in e.transactions() {
        for w in t.writes() {
            out.entry(w.key.clone()).or_default().insert(t.id);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::{Operation as Op, Transaction};

    fn h(txns: Vec<Transaction>) -> History {
        History::from_transactions(txns).unwrap()
    }

    #[test]
    fn wr_and_client_order_edges() {
        let hist = h(vec![
            Transaction::new(1, 1, 0, vec![Op::write("x", 1)]),
            Transaction::new(2, 1, 1, vec![Op::read("x", 1)]),
            Transaction::new(3, 2, 0, vec![Op::read("x", 0)]),
        ]);
        let e = build(&hist, true).unwrap();
        assert_eq!(e.graph().edge_kind(TxnId(1), TxnId(2)), Some(EdgeKind::ReadFrom));
        assert_eq!(e.graph().edge_count(), 1);
        assert_eq!(
            e.readers_of(&Key::new("x"), TxnId::INIT).collect::<Vec<_>>(),
            vec![TxnId(3)]
        );
        let e = build(&hist, false).unwrap();
        assert_eq!(e.graph().edge_count(), 1);
    }

    #[test]
    fn successive_writes_rejected_without_mutation() {
        let mut e = ExtendedHistory::new(true);
        e.merge_fragment(&h(vec![Transaction::new(1, 1, 0, vec![Op::write("x", 1)])]))
            .unwrap();
        e.merge_fragment(&h(vec![Transaction::new(
            2,
            2,
            0,
            vec![Op::read("x", 1), Op::write("x", 2)],
        )]))
        .unwrap();
        let before = e.clone();
        let err = e
            .merge_fragment(&h(vec![Transaction::new(
                3,
                3,
                0,
                vec![Op::read("x", 1), Op::write("x", 3)],
            )]))
            .unwrap_err();
        assert!(matches!(
            err,
            BuildError::Rejected(Rejection::SuccessiveWrites {
                first: TxnId(2),
                second: TxnId(3),
                ..
            })
        ));
        assert_eq!(e, before);
    }

    #[test]
    fn unknown_write_in_complete_history() {
        let hist = h(vec![Transaction::new(1, 1, 0, vec![Op::read("x", 9)])]);
        assert!(matches!(
            build(&hist, true),
            Err(BuildError::Rejected(Rejection::UnknownWrite { .. }))
        ));
    }

    #[test]
    fn out_of_order_session_arrival_links_both_neighbours() {
        let mut e = ExtendedHistory::new(true);
        e.merge_fragment(&h(vec![
            Transaction::new(1, 1, 0, vec![Op::write("x", 1)]),
            Transaction::new(3, 1, 2, vec![Op::write("x", 3)]),
        ]))
        .unwrap();
        e.merge_fragment(&h(vec![Transaction::new(2, 1, 1, vec![Op::write("y", 2)])]))
            .unwrap();
        assert!(e.graph().has_edge(TxnId(1), TxnId(2)));
        assert!(e.graph().has_edge(TxnId(2), TxnId(3)));
    }

    #[test]
    fn cycle_is_easily_rejected() {
        let hist = h(vec![
            Transaction::new(1, 1, 0, vec![Op::read("y", 2), Op::write("x", 1)]),
            Transaction::new(2, 2, 0, vec![Op::read("x", 1), Op::write("y", 2)]),
        ]);
        let e = build(&hist, true).unwrap();
        let Err(Rejection::Cycle(c)) = check_easy_reject(&e) else {
            panic!("expected a cycle")
        };
        assert!(c.is_closed());
        assert_eq!(c.edges.len(), 2);
    }
}
