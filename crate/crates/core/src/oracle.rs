//! Ground truth for small histories: schedule enumeration, and exhaustive
//! assignment of the classic (uncombined) polygraph.

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use crate::graph::DiGraph;
use crate::history::{History, SessionId, TxnId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("instance of size {size} exceeds the oracle bound {bound}")]
    BoundExceeded { size: usize, bound: usize },
}

pub const DEFAULT_TXN_BOUND: usize = 9;
pub const DEFAULT_CONSTRAINT_BOUND: usize = 20;

/// Whether every read sees the latest earlier write of its key in
/// `schedule` (or the initial value if there is none).
pub fn replay(h: &History, schedule: &[TxnId]) -> bool {
    let mut store: HashMap<&str, u64> = HashMap::new();
    for id in schedule {
        let Some(t) = h.get(*id) else { return false };
        for op in &t.ops {
            let cur = store.get(op.key.as_str()).copied().unwrap_or(0);
            if op.is_read() {
                if cur != op.write_id.0 {
                    return false;
                }
            } else {
                store.insert(op.key.as_str(), op.write_id.0);
            }
        }
    }
    true
}

/// Whether some serial order reproduces every read, restricted to orders
/// preserving each session when `respect_sessions`.
pub fn oracle_serializable(h: &History, respect_sessions: bool) -> Result<bool, OracleError> {
    oracle_serializable_bounded(h, respect_sessions, DEFAULT_TXN_BOUND)
}

pub fn oracle_serializable_bounded(h: &History, respect_sessions: bool, bound: usize) -> Result<bool, OracleError> {
    let n = h.len();
    if n > bound || n > 31 {
        return Err(OracleError::BoundExceeded { size: n, bound });
    }
    let txns: Vec<_> = h.transactions().collect();
    let mut key_ix: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &txns {
        for op in &t.ops {
            let k = key_ix.len();
            key_ix.entry(op.key.as_str()).or_insert(k);
        }
    }
    // Per transaction: (key index, read id) checks, then (key index, write id).
    let reads: Vec<Vec<(usize, u64)>> = txns
        .iter()
        .map(|t| t.reads().map(|o| (key_ix[o.key.as_str()], o.write_id.0)).collect())
        .collect();
    let writes: Vec<Vec<(usize, u64)>> = txns
        .iter()
        .map(|t| t.writes().map(|o| (key_ix[o.key.as_str()], o.write_id.0)).collect())
        .collect();
    let index: HashMap<TxnId, usize> = txns.iter().enumerate().map(|(i, t)| (t.id, i)).collect();
    let mut session_pred: Vec<Option<usize>> = vec![None; n];
    if respect_sessions {
        for list in h.sessions().values() {
            for w in list.windows(2) {
                session_pred[index[&w[1]]] = Some(index[&w[0]]);
            }
        }
    }
    let mut failed: HashSet<(u32, Vec<u64>)> = HashSet::new();
    let mut store = vec![0u64; key_ix.len()];
    Ok(search(0, &mut store, &reads, &writes, &session_pred, &mut failed))
}

fn search(
    mask: u32,
    store: &mut Vec<u64>,
    reads: &[Vec<(usize, u64)>],
    writes: &[Vec<(usize, u64)>],
    session_pred: &[Option<usize>],
    failed: &mut HashSet<(u32, Vec<u64>)>,
) -> bool {
    let n = reads.len();
    if mask.count_ones() as usize == n {
        return true;
    }
    if failed.contains(&(mask, store.clone())) {
        return false;
    }
    for i in 0..n {
        if mask >> i & 1 == 1 {
            continue;
        }
        if session_pred[i].is_some_and(|p| mask >> p & 1 == 0) {
            continue;
        }
        if reads[i].iter().any(|&(k, v)| store[k] != v) {
            continue;
        }
        let saved: Vec<(usize, u64)> = writes[i].iter().map(|&(k, _)| (k, store[k])).collect();
        for &(k, v) in &writes[i] {
            store[k] = v;
        }
        let ok = search(mask | 1 << i, store, reads, writes, session_pred, failed);
        for (k, v) in saved {
            store[k] = v;
        }
        if ok {
            return true;
        }
    }
    failed.insert((mask, store.clone()));
    false
}

/// Exhaustive check of the classic polygraph: an explicit initial
/// transaction ordered before everything, one WR edge per read, and one
/// constraint ⟨(reader, other), (other, writer)⟩ per read and other writer
/// of the key. Constraints decided by the initial transaction being first
/// are fixed before enumeration.
pub fn brute_force_polygraph(h: &History) -> Result<bool, OracleError> {
    brute_force_polygraph_bounded(h, false, DEFAULT_CONSTRAINT_BOUND)
}

pub fn brute_force_polygraph_bounded(h: &History, respect_sessions: bool, bound: usize) -> Result<bool, OracleError> {
    let Ok(idx) = h.write_index() else { return Ok(false) };
    let ids: Vec<TxnId> = h.txn_ids().collect();
    let node: HashMap<TxnId, u32> = ids.iter().enumerate().map(|(i, t)| (*t, i as u32 + 1)).collect();
    let n = ids.len() + 1;
    let mut fixed: Vec<(u32, u32)> = (1..n as u32).map(|v| (0, v)).collect();
    let mut writers: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
    for t in h.transactions() {
        for w in t.writes() {
            writers.entry(w.key.as_str()).or_default().push(node[&t.id]);
        }
    }
    if respect_sessions {
        let by_session: &BTreeMap<SessionId, Vec<TxnId>> = h.sessions();
        for list in by_session.values() {
            for w in list.windows(2) {
                fixed.push((node[&w[0]], node[&w[1]]));
            }
        }
    }
    let mut choices: Vec<[(u32, u32); 2]> = Vec::new();
    for t in h.transactions() {
        let r = node[&t.id];
        for op in t.reads() {
            let w = if op.write_id.is_initial() {
                0
            } else {
                match idx.get(&op.write_id) {
                    Some(rec) if rec.key == op.key => node[&rec.txn],
                    _ => return Ok(false),
                }
            };
            fixed.push((w, r));
            for &other in writers.get(op.key.as_str()).into_iter().flatten() {
                if other == w || other == r {
                    continue;
                }
                if w == 0 {
                    fixed.push((r, other));
                } else {
                    choices.push([(r, other), (other, w)]);
                }
            }
        }
    }
    let base = DiGraph::from_edges(n, fixed.iter().copied());
    if !base.is_acyclic() {
        return Ok(false);
    }
    if choices.len() > bound {
        return Err(OracleError::BoundExceeded {
            size: choices.len(),
            bound,
        });
    }
    for mask in 0u32..1 << choices.len() {
        let mut g = base.clone();
        for (i, c) in choices.iter().enumerate() {
            let (a, b) = c[(mask >> i & 1) as usize];
            g.add_edge(a, b);
        }
        if g.is_acyclic() {
            return Ok(true);
        }
    }
    Ok(false)
}
