use thiserror::Error;

use crate::history::{Key, SessionId, TxnId, WriteId};

/// A history that violates the data model, independent of serializability.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HistoryError {
    #[error("transaction id 0 is reserved for the initial state")]
    ReservedTxnId,
    #[error("duplicate transaction id {0}")]
    DuplicateTxn(TxnId),
    #[error("write id {0} is written more than once")]
    DuplicateWriteId(WriteId),
    #[error("transaction {txn} writes the reserved write id 0")]
    ReservedWriteId { txn: TxnId },
    #[error("transaction {txn} accesses key {key} more than once in the same mode")]
    NonUniqueKeyAccess { txn: TxnId, key: Key },
    #[error("transaction {txn} reads key {key} after writing it")]
    ReadAfterWrite { txn: TxnId, key: Key },
    #[error("transaction {txn} reads its own write of key {key}")]
    ReadOwnWrite { txn: TxnId, key: Key },
    #[error("fence transaction {0} must read EPOCH and optionally write it, nothing else")]
    InvalidFence(TxnId),
    #[error("non-fence transaction {txn} accesses the reserved EPOCH key")]
    ReservedKey { txn: TxnId },
    #[error("session {session} has two transactions at position {seq}")]
    DuplicateSeq { session: SessionId, seq: u64 },
    #[error("transaction {txn} reads key {key} from write {write_id}, which no transaction wrote")]
    UnresolvedRead { txn: TxnId, key: Key, write_id: WriteId },
    #[error("transaction {txn} reads key {key} from write {write_id}, which wrote a different key")]
    KeyMismatch { txn: TxnId, key: Key, write_id: WriteId },
}

/// Failure to parse the text history format.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: {source}")]
    Invalid {
        line: usize,
        #[source]
        source: HistoryError,
    },
    #[error(transparent)]
    History(#[from] HistoryError),
}

impl ParseError {
    pub fn syntax(line: usize, msg: impl Into<String>) -> Self {
        ParseError::Syntax { line, msg: msg.into() }
    }
}

/// A broken internal invariant. Indicates a bug or a corrupted state, never a
/// property of the history under test.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("internal invariant violated: {0}")]
pub struct InternalInvariantViolation(pub String);
