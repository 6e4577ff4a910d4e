//! Black-box serializability checking of key-value histories.
//!
//! A history of committed transactions is encoded as a polygraph: a known
//! graph of forced orderings plus constraints, each a choice between two
//! edge sets. The history is serializable iff some choice of sides leaves
//! the graph acyclic. Write chains, coalescing and pruning keep the
//! encoding small; the embedded solver decides the rest. Long-running
//! histories are checked round by round with fence-based garbage collection.

pub mod builder;
pub mod closure;
pub mod codec;
pub mod constraints;
pub mod error;
pub mod gc;
pub mod graph;
pub mod history;
pub mod oracle;
pub mod pipeline;
pub mod prune;
pub mod solver;
pub mod verdict;
pub mod workload;

pub use builder::BuildError;
pub use closure::ClosureMethod;
pub use constraints::{Constraint, ConstraintId, Side};
pub use error::{HistoryError, InternalInvariantViolation, ParseError};
pub use gc::{RoundConfig, RoundOutcome, RoundReport, RoundVerifier};
pub use graph::{EdgeKind, KnownGraph};
pub use history::{
    ExtendedHistory, History, Key, OpKind, Operation, SessionId, Transaction, TxnId, WriteId, EPOCH_KEY,
};
pub use pipeline::{verify, Outcome, Report, VerifyOptions};
pub use prune::PruneOptions;
pub use solver::SolveOptions;
pub use verdict::{CertEdge, Cycle, EdgeSource, Rejection};
pub use workload::{AnomalyKind, Benchmark, WorkloadConfig};
