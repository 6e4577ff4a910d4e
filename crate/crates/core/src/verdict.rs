//! Rejection reasons and their certificates.

use std::fmt;

use serde::Serialize;

use crate::constraints::{ConstraintId, Side};
use crate::graph::EdgeKind;
use crate::history::{Key, TxnId, WriteId};

/// Provenance of one certificate edge.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub enum EdgeSource {
    Known(EdgeKind),
    Constraint { id: ConstraintId, side: Side },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CertEdge {
    pub from: TxnId,
    pub to: TxnId,
    pub source: EdgeSource,
}

/// A closed walk `e0, e1, ..., ek` with `ek.to == e0.from`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Cycle {
    pub edges: Vec<CertEdge>,
}

impl Cycle {
    pub fn nodes(&self) -> Vec<TxnId> {
        self.edges.iter().map(|e| e.from).collect()
    }

    pub fn is_closed(&self) -> bool {
        !self.edges.is_empty()
            && self.edges.windows(2).all(|w| w[0].to == w[1].from)
            && self.edges.last().unwrap().to == self.edges[0].from
    }
}

impl fmt::Display for Cycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.edges {
            write!(f, "{} -> ", e.from)?;
        }
        match self.edges.first() {
            Some(e) => write!(f, "{}", e.from),
            None => Ok(()),
        }
    }
}

/// Why a history is not serializable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Rejection {
    /// Two transactions both read `key` from `writer` and both overwrite it.
    SuccessiveWrites {
        key: Key,
        writer: TxnId,
        first: TxnId,
        second: TxnId,
    },
    /// A read observed a write of a transaction already deleted by garbage
    /// collection, which the collector guarantees cannot happen in a
    /// serializable history.
    StaleRead { reader: TxnId, key: Key, writer: TxnId },
    /// A read observed a write absent from the complete history.
    UnknownWrite { reader: TxnId, key: Key, write_id: WriteId },
    /// A cycle among known edges.
    Cycle(Cycle),
    /// No choice of constraint sides is acyclic. `blamed` is a small subset
    /// of constraints that is already unsatisfiable with the known graph.
    Unsatisfiable {
        blamed: Vec<ConstraintId>,
        cycles: Vec<Cycle>,
    },
}

impl Rejection {
    pub fn kind(&self) -> &'static str {
        match self {
            Rejection::SuccessiveWrites { .. } => "successive-writes",
            Rejection::StaleRead { .. } => "stale-read",
            Rejection::UnknownWrite { .. } => "unknown-write",
            Rejection::Cycle(_) => "cycle",
            Rejection::Unsatisfiable { .. } => "unsatisfiable",
        }
    }

    /// The cycle certificates carried by this rejection.
    pub fn certificates(&self) -> Vec<&Cycle> {
        match self {
            Rejection::Cycle(c) => vec![c],
            Rejection::Unsatisfiable { cycles, .. } => cycles.iter().collect(),
            _ => Vec::new(),
        }
    }

    /// Node lists of the cycles. Successive writes imply the two-cycle
    /// between the overwriters.
    pub fn cycles(&self) -> Vec<Vec<TxnId>> {
        match self {
            Rejection::SuccessiveWrites { first, second, .. } => vec![vec![*first, *second]],
            Rejection::Cycle(c) => vec![c.nodes()],
            Rejection::Unsatisfiable { cycles, .. } => cycles.iter().map(Cycle::nodes).collect(),
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::SuccessiveWrites {
                key,
                writer,
                first,
                second,
            } => {
                writeln!(
                    f,
                    "successive writes: {first} and {second} both read {key} from {writer} and overwrite it"
                )?;
                write!(f, "cycle: {first} -> {second} -> {first}")
            }
            Rejection::StaleRead { reader, key, writer } => {
                write!(f, "stale read: {reader} reads {key} from deleted transaction {writer}")
            }
            Rejection::UnknownWrite { reader, key, write_id } => {
                write!(f, "{reader} reads {key} from write {write_id}, absent from the history")
            }
            Rejection::Cycle(c) => write!(f, "cycle: {c}"),
            Rejection::Unsatisfiable { blamed, cycles } => {
                let ids: Vec<String> = blamed.iter().map(|c| c.0.to_string()).collect();
                write!(f, "unsatisfiable constraints: {}", ids.join(" "))?;
                for c in cycles {
                    write!(f, "\ncycle: {c}")?;
                }
                Ok(())
            }
        }
    }
}
