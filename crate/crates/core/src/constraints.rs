//! Write chains, inferred anti-dependency edges, and one coalesced constraint
//! per pair of chains on a key.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::error::InternalInvariantViolation;
use crate::graph::EdgeKind;
use crate::history::{ExtendedHistory, Key, TxnId};

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ConstraintId(pub u32);

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Side {
    First,
    Second,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::First => Side::Second,
            Side::Second => Side::First,
        }
    }
}

pub type Edge = (TxnId, TxnId);

/// A choice between two edge sets, exactly one of which holds in any
/// serialization.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Constraint {
    pub id: ConstraintId,
    pub key: Key,
    pub first: Vec<Edge>,
    pub second: Vec<Edge>,
}

impl Constraint {
    pub fn side(&self, s: Side) -> &[Edge] {
        match s {
            Side::First => &self.first,
            Side::Second => &self.second,
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.first.iter().chain(self.second.iter())
    }

    pub fn mentions(&self, t: TxnId) -> bool {
        self.edges().any(|&(a, b)| a == t || b == t)
    }
}

/// Consecutive writes of one key, each reading its predecessor's value. May
/// start with [`TxnId::INIT`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chain {
    pub key: Key,
    pub txns: Vec<TxnId>,
}

impl Chain {
    pub fn head(&self) -> TxnId {
        self.txns[0]
    }

    pub fn tail(&self) -> TxnId {
        *self.txns.last().unwrap()
    }

    pub fn starts_at_init(&self) -> bool {
        self.head().is_init()
    }
}

pub type ChainMap = BTreeMap<Key, Vec<Chain>>;

/// Groups each key's writers into chains along the consecutive-write pairs.
/// The initial write is a chain member on keys where a live transaction read
/// the initial value. Chains are ordered by head.
pub fn combine_writes(e: &ExtendedHistory) -> Result<ChainMap, InternalInvariantViolation> {
    let mut writers: BTreeMap<Key, BTreeSet<TxnId>> = BTreeMap::new();
    for t in e.transactions() {
        for w in t.writes() {
            writers.entry(w.key.clone()).or_default().insert(t.id);
        }
    }
    for (k, w) in e.readfrom().keys() {
        if w.is_init() {
            writers.entry(k.clone()).or_default().insert(TxnId::INIT);
        }
    }

    let mut out = ChainMap::new();
    for (key, ws) in writers {
        let mut next: BTreeMap<TxnId, TxnId> = BTreeMap::new();
        let mut has_prev: BTreeSet<TxnId> = BTreeSet::new();
        for w in &ws {
            if let Some(&s) = e.wwpairs().get(&(key.clone(), *w)) {
                if !ws.contains(&s) {
                    return Err(InternalInvariantViolation(format!(
                        "consecutive write {s} of {w} on {key} does not write {key}"
                    )));
                }
                next.insert(*w, s);
                if !has_prev.insert(s) {
                    return Err(InternalInvariantViolation(format!("{s} follows two writes on {key}")));
                }
            }
        }
        let mut chains = Vec::new();
        let mut seen = 0usize;
        for &h in ws.iter().filter(|w| !has_prev.contains(w)) {
            let mut txns = vec![h];
            let mut cur = h;
            while let Some(&n) = next.get(&cur) {
                txns.push(n);
                cur = n;
            }
            seen += txns.len();
            chains.push(Chain { key: key.clone(), txns });
        }
        if seen != ws.len() {
            return Err(InternalInvariantViolation(format!(
                "consecutive writes on {key} form a loop"
            )));
        }
        out.insert(key, chains);
    }
    Ok(out)
}

/// Adds the edges implied within chains: a reader of a chain member precedes
/// the member's successor. Returns the number of new edges.
pub fn infer_rw_edges(e: &mut ExtendedHistory, chains: &ChainMap) -> usize {
    let mut added = 0;
    for (key, cs) in chains {
        for c in cs {
            for w in c.txns.windows(2) {
                let readers: Vec<TxnId> = e.readers_of(key, w[0]).filter(|r| *r != w[1]).collect();
                for r in readers {
                    added += e.graph.add_edge(r, w[1], EdgeKind::AntiDependency) as usize;
                }
            }
        }
    }
    added
}

/// Adds the edges implied by the initial value preceding every write: the
/// chain starting at the initial write precedes every other chain on its key.
pub fn order_initial_chains(e: &mut ExtendedHistory, chains: &ChainMap) -> usize {
    let mut added = 0;
    for cs in chains.values() {
        let Some(init) = cs.iter().find(|c| c.starts_at_init()) else {
            continue;
        };
        for other in cs.iter().filter(|c| !c.starts_at_init()) {
            for (a, b) in chain_to_chain_edges(e, init, other) {
                added += e.graph.add_edge(a, b, EdgeKind::InitialOrder) as usize;
            }
        }
    }
    added
}

/// Edges that must hold if chain `ci` precedes chain `cj`: readers of the
/// tail of `ci` (or the tail itself) before the head of `cj`.
pub fn chain_to_chain_edges(e: &ExtendedHistory, ci: &Chain, cj: &Chain) -> Vec<Edge> {
    let head = cj.head();
    let mut readers: Vec<Edge> = e
        .readers_of(&ci.key, ci.tail())
        .filter(|r| *r != head)
        .map(|r| (r, head))
        .collect();
    if readers.is_empty() && !ci.tail().is_init() && ci.tail() != head {
        readers.push((ci.tail(), head));
    }
    readers
}

/// The constraint for an unordered pair of chains on one key.
pub fn coalesce(e: &ExtendedHistory, id: ConstraintId, ci: &Chain, cj: &Chain) -> Constraint {
    Constraint {
        id,
        key: ci.key.clone(),
        first: chain_to_chain_edges(e, ci, cj),
        second: chain_to_chain_edges(e, cj, ci),
    }
}

/// Chains, inferred edges added to `g`, and the coalesced constraints.
pub fn gen_constraints(e: &mut ExtendedHistory) -> Result<(ChainMap, Vec<Constraint>), InternalInvariantViolation> {
    let chains = combine_writes(e)?;
    infer_rw_edges(e, &chains);
    order_initial_chains(e, &chains);
    let mut out = Vec::new();
    for cs in chains.values() {
        let ordinary: Vec<&Chain> = cs.iter().filter(|c| !c.starts_at_init()).collect();
        for i in 0..ordinary.len() {
            for j in i + 1..ordinary.len() {
                let c = coalesce(e, ConstraintId(out.len() as u32), ordinary[i], ordinary[j]);
                if c.first.is_empty() || c.second.is_empty() {
                    return Err(InternalInvariantViolation(format!(
                        "empty constraint side between chains on {}",
                        c.key
                    )));
                }
                out.push(c);
            }
        }
    }
    Ok((chains, out))
}

/// Constraint counts of the successive encodings, for reporting.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EncodingSizes {
    /// One constraint per (read, other writer of the key).
    pub brute_force: u64,
    /// One single-edge-pair constraint per ordered pair of chains and reader
    /// of the earlier tail.
    pub after_combine: u64,
    /// One constraint per unordered pair of chains.
    pub after_coalesce: u64,
    /// Histogram: chains per key → number of keys.
    pub chains_per_key: BTreeMap<usize, usize>,
}

pub fn encoding_sizes(e: &ExtendedHistory, chains: &ChainMap) -> EncodingSizes {
    let mut s = EncodingSizes::default();
    for (key, cs) in chains {
        let writers: u64 = cs
            .iter()
            .map(|c| c.txns.iter().filter(|t| !t.is_init()).count() as u64)
            .sum();
        let reads: u64 = e
            .readfrom()
            .range((key.clone(), TxnId(1))..)
            .take_while(|((k, _), _)| k == key)
            .map(|(_, rs)| rs.len() as u64)
            .sum();
        s.brute_force += reads * writers.saturating_sub(1);
        let ordinary: Vec<&Chain> = cs.iter().filter(|c| !c.starts_at_init()).collect();
        for ci in &ordinary {
            for cj in &ordinary {
                if ci.head() != cj.head() {
                    s.after_combine += e.readers_of(key, ci.tail()).count().max(1) as u64;
                }
            }
        }
        let c = ordinary.len() as u64;
        s.after_coalesce += c * c.saturating_sub(1) / 2;
        *s.chains_per_key.entry(ordinary.len()).or_default() += 1;
    }
    s
}
