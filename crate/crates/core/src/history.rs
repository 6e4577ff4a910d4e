//! Operations, transactions, sessions and histories as observed by clients,
//! plus the verifier's accumulated [`ExtendedHistory`].

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::builder::{self, BuildError};
use crate::error::HistoryError;
use crate::graph::{EdgeKind, KnownGraph};

/// Key reserved for fence transactions.
pub const EPOCH_KEY: &str = "EPOCH";

/// Identifier of a single written value. Unique across a history; `0` is the
/// abstract initial write of every key.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WriteId(pub u64);

impl WriteId {
    pub const INITIAL: WriteId = WriteId(0);

    pub fn is_initial(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for WriteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Transaction identifier. `0` names the abstract initial transaction, which
/// writes the initial value of every key and is never materialized.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TxnId(pub u64);

impl TxnId {
    pub const INIT: TxnId = TxnId(0);

    pub fn is_init(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for TxnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SessionId(pub u32);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A key name. Cheap to clone.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Key(Arc<str>);

impl Key {
    pub fn new(name: &str) -> Self {
        Key(Arc::from(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_epoch(&self) -> bool {
        &*self.0 == EPOCH_KEY
    }
}

impl fmt::Debug for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Key {
    fn from(s: &str) -> Self {
        Key::new(s)
    }
}

impl From<String> for Key {
    fn from(s: String) -> Self {
        Key(Arc::from(s))
    }
}

impl Borrow<str> for Key {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl Serialize for Key {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Key {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d).map(Key::from)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpKind {
    Read,
    Write,
}

/// One keyed operation. For a write, `write_id` is the value written; for a
/// read, the value observed.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Operation {
    pub kind: OpKind,
    pub key: Key,
    pub write_id: WriteId,
}

impl Operation {
    pub fn read(key: impl Into<Key>, write_id: u64) -> Self {
        Operation {
            kind: OpKind::Read,
            key: key.into(),
            write_id: WriteId(write_id),
        }
    }

    pub fn write(key: impl Into<Key>, write_id: u64) -> Self {
        Operation {
            kind: OpKind::Write,
            key: key.into(),
            write_id: WriteId(write_id),
        }
    }

    pub fn is_read(&self) -> bool {
        self.kind == OpKind::Read
    }

    pub fn is_write(&self) -> bool {
        self.kind == OpKind::Write
    }
}

/// A committed transaction issued by one client session.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: TxnId,
    pub session: SessionId,
    /// Position in the issuing session's order.
    pub seq: u64,
    pub ops: Vec<Operation>,
    pub is_fence: bool,
}

impl Transaction {
    pub fn new(id: u64, session: u32, seq: u64, ops: Vec<Operation>) -> Self {
        Transaction {
            id: TxnId(id),
            session: SessionId(session),
            seq,
            ops,
            is_fence: false,
        }
    }

    /// A write fence: read-modify-write of [`EPOCH_KEY`].
    pub fn write_fence(id: u64, session: u32, seq: u64, read: u64, write: u64) -> Self {
        Transaction {
            id: TxnId(id),
            session: SessionId(session),
            seq,
            ops: vec![Operation::read(EPOCH_KEY, read), Operation::write(EPOCH_KEY, write)],
            is_fence: true,
        }
    }

    /// A read fence: read-only access to [`EPOCH_KEY`].
    pub fn read_fence(id: u64, session: u32, seq: u64, read: u64) -> Self {
        Transaction {
            id: TxnId(id),
            session: SessionId(session),
            seq,
            ops: vec![Operation::read(EPOCH_KEY, read)],
            is_fence: true,
        }
    }

    pub fn reads(&self) -> impl Iterator<Item = &Operation> {
        self.ops.iter().filter(|op| op.is_read())
    }

    pub fn writes(&self) -> impl Iterator<Item = &Operation> {
        self.ops.iter().filter(|op| op.is_write())
    }

    pub fn read_of(&self, key: &str) -> Option<WriteId> {
        self.reads().find(|op| op.key.as_str() == key).map(|op| op.write_id)
    }

    pub fn write_of(&self, key: &str) -> Option<WriteId> {
        self.writes().find(|op| op.key.as_str() == key).map(|op| op.write_id)
    }

    pub fn writes_key(&self, key: &str) -> bool {
        self.write_of(key).is_some()
    }

    pub fn is_read_only(&self) -> bool {
        !self.ops.iter().any(Operation::is_write)
    }

    pub fn touches_epoch(&self) -> bool {
        self.ops.iter().any(|op| op.key.is_epoch())
    }

    /// Keys this transaction both reads and writes.
    pub fn rmw_keys(&self) -> impl Iterator<Item = (&Key, WriteId)> {
        self.reads()
            .filter(|r| self.writes_key(r.key.as_str()))
            .map(|r| (&r.key, r.write_id))
    }

    /// Checks the per-transaction invariants: one read and one write per key
    /// at most, no read after a write of the same key, no read of its own
    /// value, and fences touching only the epoch key.
    pub fn validate(&self) -> Result<(), HistoryError> {
        if self.id.is_init() {
            return Err(HistoryError::ReservedTxnId);
        }
        let mut read_keys = BTreeSet::new();
        let mut written: BTreeMap<&str, WriteId> = BTreeMap::new();
        for op in &self.ops {
            let key = op.key.as_str();
            match op.kind {
                OpKind::Read => {
                    if !read_keys.insert(key) {
                        return Err(HistoryError::NonUniqueKeyAccess {
                            txn: self.id,
                            key: op.key.clone(),
                        });
                    }
                    if written.contains_key(key) {
                        return Err(HistoryError::ReadAfterWrite {
                            txn: self.id,
                            key: op.key.clone(),
                        });
                    }
                }
                OpKind::Write => {
                    if op.write_id.is_initial() {
                        return Err(HistoryError::ReservedWriteId { txn: self.id });
                    }
                    if written.insert(key, op.write_id).is_some() {
                        return Err(HistoryError::NonUniqueKeyAccess {
                            txn: self.id,
                            key: op.key.clone(),
                        });
                    }
                }
            }
        }
        let own: BTreeSet<WriteId> = written.values().copied().collect();
        if let Some(op) = self.reads().find(|op| own.contains(&op.write_id)) {
            return Err(HistoryError::ReadOwnWrite {
                txn: self.id,
                key: op.key.clone(),
            });
        }
        if self.is_fence {
            let shape_ok = match self.ops.as_slice() {
                [r] => r.is_read() && r.key.is_epoch(),
                [r, w] => r.is_read() && r.key.is_epoch() && w.is_write() && w.key.is_epoch(),
                _ => false,
            };
            if !shape_ok {
                return Err(HistoryError::InvalidFence(self.id));
            }
        } else if self.touches_epoch() {
            return Err(HistoryError::ReservedKey { txn: self.id });
        }
        Ok(())
    }
}

/// Where a write lives: the transaction and key it was written by.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WriteRecord {
    pub txn: TxnId,
    pub key: Key,
}

/// A set of committed transactions grouped into client sessions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct History {
    txns: BTreeMap<TxnId, Transaction>,
    sessions: BTreeMap<SessionId, Vec<TxnId>>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_transactions(txns: impl IntoIterator<Item = Transaction>) -> Result<Self, HistoryError> {
        let mut h = History::new();
        for t in txns {
            h.insert(t)?;
        }
        Ok(h)
    }

    /// Adds a transaction, keeping its session list ordered by `seq`.
    pub fn insert(&mut self, txn: Transaction) -> Result<(), HistoryError> {
        txn.validate()?;
        if self.txns.contains_key(&txn.id) {
            return Err(HistoryError::DuplicateTxn(txn.id));
        }
        let list = self.sessions.entry(txn.session).or_default();
        let pos = list.partition_point(|id| self.txns[id].seq < txn.seq);
        if pos < list.len() && self.txns[&list[pos]].seq == txn.seq {
            return Err(HistoryError::DuplicateSeq {
                session: txn.session,
                seq: txn.seq,
            });
        }
        list.insert(pos, txn.id);
        self.txns.insert(txn.id, txn);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.txns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txns.is_empty()
    }

    pub fn get(&self, id: TxnId) -> Option<&Transaction> {
        self.txns.get(&id)
    }

    /// Transactions in ascending id order.
    pub fn transactions(&self) -> impl Iterator<Item = &Transaction> {
        self.txns.values()
    }

    pub fn txn_ids(&self) -> impl Iterator<Item = TxnId> + '_ {
        self.txns.keys().copied()
    }

    pub fn sessions(&self) -> &BTreeMap<SessionId, Vec<TxnId>> {
        &self.sessions
    }

    pub fn session(&self, s: SessionId) -> &[TxnId] {
        self.sessions.get(&s).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Transactions in canonical order: by session, then position in session.
    pub fn canonical_order(&self) -> impl Iterator<Item = &Transaction> {
        self.sessions.values().flatten().map(move |id| &self.txns[id])
    }

    pub fn into_transactions(self) -> impl Iterator<Item = Transaction> {
        self.txns.into_values()
    }

    /// `self ∘ other`: absorbs a continuation.
    pub fn extend(&mut self, other: History) -> Result<(), HistoryError> {
        for t in other.into_transactions() {
            self.insert(t)?;
        }
        Ok(())
    }

    /// Restriction to the given transaction ids.
    pub fn restrict(&self, keep: &BTreeSet<TxnId>) -> History {
        History::from_transactions(self.txns.values().filter(|t| keep.contains(&t.id)).cloned())
            .expect("restriction of a valid history is valid")
    }

    /// Index from write id to the writing transaction; fails on a reused id.
    pub fn write_index(&self) -> Result<HashMap<WriteId, WriteRecord>, HistoryError> {
        let mut idx = HashMap::new();
        for t in self.txns.values() {
            for w in t.writes() {
                let rec = WriteRecord {
                    txn: t.id,
                    key: w.key.clone(),
                };
                if idx.insert(w.write_id, rec).is_some() {
                    return Err(HistoryError::DuplicateWriteId(w.write_id));
                }
            }
        }
        Ok(idx)
    }

    /// Checks that every read observes the initial value or a write of the
    /// same key present in this history.
    pub fn validate_complete(&self) -> Result<(), HistoryError> {
        let idx = self.write_index()?;
        for t in self.txns.values() {
            for r in t.reads() {
                if r.write_id.is_initial() {
                    continue;
                }
                match idx.get(&r.write_id) {
                    None => {
                        return Err(HistoryError::UnresolvedRead {
                            txn: t.id,
                            key: r.key.clone(),
                            write_id: r.write_id,
                        })
                    }
                    Some(rec) if rec.key != r.key => {
                        return Err(HistoryError::KeyMismatch {
                            txn: t.id,
                            key: r.key.clone(),
                            write_id: r.write_id,
                        })
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(())
    }

    /// Resolves the transaction each read observed, `TxnId::INIT` for the
    /// initial value. Requires a complete history.
    pub fn read_from(&self) -> Result<Vec<(TxnId, Key, TxnId)>, HistoryError> {
        self.validate_complete()?;
        let idx = self.write_index()?;
        let mut out = Vec::new();
        for t in self.txns.values() {
            for r in t.reads() {
                let writer = if r.write_id.is_initial() {
                    TxnId::INIT
                } else {
                    idx[&r.write_id].txn
                };
                out.push((writer, r.key.clone(), t.id));
            }
        }
        Ok(out)
    }

    pub fn max_write_id(&self) -> u64 {
        self.txns
            .values()
            .flat_map(|t| t.writes().map(|w| w.write_id.0))
            .max()
            .unwrap_or(0)
    }
}

/// The verifier's state across rounds: the known graph `g`, the read-from
/// index, and the consecutive-write (RMW successor) index, over the absorbed
/// and not yet deleted transactions.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedHistory {
    pub(crate) txns: BTreeMap<TxnId, Transaction>,
    pub(crate) graph: KnownGraph,
    /// ⟨key, writer⟩ → readers. The writer may be [`TxnId::INIT`].
    pub(crate) readfrom: BTreeMap<(Key, TxnId), BTreeSet<TxnId>>,
    /// ⟨key, writer⟩ → the RMW transaction that read `key` from `writer`.
    pub(crate) wwpairs: BTreeMap<(Key, TxnId), TxnId>,
    /// Live transactions per session, keyed by position.
    pub(crate) sessions: BTreeMap<SessionId, BTreeMap<u64, TxnId>>,
    /// Every write ever absorbed, including those of deleted transactions.
    pub(crate) writes: HashMap<WriteId, WriteRecord>,
    pub(crate) tombstones: BTreeSet<TxnId>,
    pub(crate) session_order: bool,
}

impl Default for ExtendedHistory {
    fn default() -> Self {
        Self::new(true)
    }
}

impl ExtendedHistory {
    /// Empty state. With `session_order`, client-order edges join consecutive
    /// transactions of each session, and the check becomes strong session
    /// serializability.
    pub fn new(session_order: bool) -> Self {
        ExtendedHistory {
            txns: BTreeMap::new(),
            graph: KnownGraph::default(),
            readfrom: BTreeMap::new(),
            wwpairs: BTreeMap::new(),
            sessions: BTreeMap::new(),
            writes: HashMap::new(),
            tombstones: BTreeSet::new(),
            session_order,
        }
    }

    /// Absorbs a continuation `frag`, extending the graph and indices exactly
    /// as building from the concatenated history would.
    pub fn merge_fragment(&mut self, frag: &History) -> Result<(), BuildError> {
        builder::create_known_graph(self, frag)
    }

    pub fn session_order(&self) -> bool {
        self.session_order
    }

    pub fn graph(&self) -> &KnownGraph {
        &self.graph
    }

    pub fn graph_mut(&mut self) -> &mut KnownGraph {
        &mut self.graph
    }

    pub fn readfrom(&self) -> &BTreeMap<(Key, TxnId), BTreeSet<TxnId>> {
        &self.readfrom
    }

    pub fn wwpairs(&self) -> &BTreeMap<(Key, TxnId), TxnId> {
        &self.wwpairs
    }

    pub fn readers_of(&self, key: &Key, writer: TxnId) -> impl Iterator<Item = TxnId> + '_ {
        self.readfrom.get(&(key.clone(), writer)).into_iter().flatten().copied()
    }

    pub fn txn(&self, id: TxnId) -> Option<&Transaction> {
        self.txns.get(&id)
    }

    /// Live transactions in ascending id order.
    pub fn transactions(&self) -> impl Iterator<Item = &Transaction> {
        self.txns.values()
    }

    pub fn len(&self) -> usize {
        self.txns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txns.is_empty()
    }

    pub fn contains(&self, id: TxnId) -> bool {
        self.txns.contains_key(&id)
    }

    pub fn tombstones(&self) -> &BTreeSet<TxnId> {
        &self.tombstones
    }

    pub fn is_tombstoned(&self, id: TxnId) -> bool {
        self.tombstones.contains(&id)
    }

    pub fn write_record(&self, w: WriteId) -> Option<&WriteRecord> {
        self.writes.get(&w)
    }

    /// The transaction a read observed, `None` if the write is unknown.
    pub fn writer_of(&self, w: WriteId) -> Option<TxnId> {
        if w.is_initial() {
            Some(TxnId::INIT)
        } else {
            self.writes.get(&w).map(|r| r.txn)
        }
    }

    /// Live transactions of a session, in session order.
    pub fn session_txns(&self, s: SessionId) -> impl Iterator<Item = TxnId> + '_ {
        self.sessions.get(&s).into_iter().flat_map(|m| m.values().copied())
    }

    pub fn session_ids(&self) -> impl Iterator<Item = SessionId> + '_ {
        self.sessions.keys().copied()
    }

    /// Removes a transaction: its node and edges, every readfrom and wwpairs
    /// tuple naming it, and records a tombstone. Each predecessor gets a
    /// bridge edge to each successor, so reachability among the remaining
    /// transactions is unchanged.
    pub fn delete(&mut self, id: TxnId) {
        let Some(txn) = self.txns.remove(&id) else {
            return;
        };
        let preds: Vec<TxnId> = self.graph.predecessors(id).collect();
        let succs: Vec<TxnId> = self.graph.successors(id).collect();
        self.graph.remove_node(id);
        for &p in &preds {
            for &s in &succs {
                if p != s {
                    self.graph.add_edge(p, s, EdgeKind::Bridge);
                }
            }
        }
        self.readfrom.retain(|(_, w), readers| {
            if *w == id {
                return false;
            }
            readers.remove(&id);
            !readers.is_empty()
        });
        self.wwpairs.retain(|(_, w), succ| *w != id && *succ != id);
        if let Some(list) = self.sessions.get_mut(&txn.session) {
            list.remove(&txn.seq);
        }
        self.tombstones.insert(id);
    }

    /// Live transactions as a plain history.
    pub fn to_history(&self) -> History {
        History::from_transactions(self.txns.values().cloned()).expect("live set is a valid history")
    }
}
