//! One-shot verification, and the per-round check shared with the streaming
//! verifier.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::builder::{self, BuildError};
use crate::constraints::{self, Constraint, EncodingSizes, Side};
use crate::error::{HistoryError, InternalInvariantViolation};
use crate::history::{ExtendedHistory, History, TxnId};
use crate::prune::{self, PruneOptions, PruneStats};
use crate::solver::{self, Encoding, OwnedEdge, SolveOptions, SolverStats, SolverVerdict, FIXED};
use crate::verdict::{CertEdge, Cycle, EdgeSource, Rejection};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct VerifyOptions {
    /// Check strong session serializability (client order edges).
    pub session_order: bool,
    pub prune: bool,
    pub prune_opts: PruneOptions,
    /// Time budget and core shrinking. The budget covers the whole call.
    pub solve: SolveOptions,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            session_order: true,
            prune: true,
            prune_opts: PruneOptions::default(),
            solve: SolveOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// Serializable; `schedule` is one equivalent serial order.
    Accept {
        schedule: Vec<TxnId>,
    },
    Reject(Rejection),
    BudgetExceeded,
    /// The history breaks the data model, e.g. a reused write id.
    Invalid(HistoryError),
    Internal(InternalInvariantViolation),
}

impl Outcome {
    pub fn is_accept(&self) -> bool {
        matches!(self, Outcome::Accept { .. })
    }

    pub fn rejection(&self) -> Option<&Rejection> {
        match self {
            Outcome::Reject(r) => Some(r),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Stats {
    pub txns: usize,
    pub known_edges: usize,
    pub sizes: EncodingSizes,
    pub constraints_after_prune: usize,
    pub prune: PruneStats,
    pub solver: SolverStats,
}

#[derive(Clone, Debug)]
pub struct Report {
    pub outcome: Outcome,
    pub stats: Stats,
    /// The instance a cycle certificate refers to: the one handed to the
    /// solver, or the known graph (plus constraints before pruning) when an
    /// earlier stage rejected.
    pub encoding: Option<Encoding>,
}

pub(crate) enum Failure {
    Reject(Rejection),
    Budget,
    Internal(InternalInvariantViolation),
}

impl From<Failure> for Outcome {
    fn from(f: Failure) -> Self {
        match f {
            Failure::Reject(r) => Outcome::Reject(r),
            Failure::Budget => Outcome::BudgetExceeded,
            Failure::Internal(e) => Outcome::Internal(e),
        }
    }
}

pub(crate) struct Checked {
    pub constraints: Vec<Constraint>,
    pub schedule: Vec<TxnId>,
}

/// Constraint generation, pruning and solving over the current state. Adds
/// inferred and pruned edges to the known graph.
pub(crate) fn check(
    e: &mut ExtendedHistory,
    opts: &VerifyOptions,
    deadline: Option<Instant>,
    stats: &mut Stats,
    encoding_out: &mut Option<Encoding>,
) -> Result<Checked, Failure> {
    stats.txns = e.len();
    if let Err(r) = builder::check_easy_reject(e) {
        *encoding_out = Some(solver::encode(e, &[]));
        return Err(Failure::Reject(r));
    }
    let (chains, cons) = constraints::gen_constraints(e).map_err(Failure::Internal)?;
    stats.sizes = constraints::encoding_sizes(e, &chains);
    let cons = if opts.prune {
        let before = cons.clone();
        match prune::prune(e, cons, opts.prune_opts) {
            Ok((left, ps)) => {
                stats.prune = ps;
                left
            }
            Err(r) => {
                *encoding_out = Some(solver::encode(e, &before));
                return Err(Failure::Reject(r));
            }
        }
    } else {
        cons
    };
    stats.constraints_after_prune = cons.len();
    stats.known_edges = e.graph().edge_count();

    let enc = solver::encode(e, &cons);
    let remaining = match deadline {
        Some(d) => {
            let now = Instant::now();
            if now >= d {
                return Err(Failure::Budget);
            }
            Some(d - now)
        }
        None => None,
    };
    let solve_opts = SolveOptions {
        time_budget: remaining,
        ..opts.solve
    };
    let result = solver::solve(&enc.instance, solve_opts);
    let out = match result {
        Err(_) => Err(Failure::Budget),
        Ok((verdict, s)) => {
            stats.solver = s;
            match verdict {
                SolverVerdict::Sat(model) => {
                    let order = solver::extract_schedule(&enc.instance, &model.sides).ok_or_else(|| {
                        Failure::Internal(InternalInvariantViolation("solver model is cyclic".into()))
                    })?;
                    Ok(Checked {
                        constraints: cons,
                        schedule: order.iter().map(|&i| enc.ids[i as usize]).collect(),
                    })
                }
                SolverVerdict::Unsat(core) => Err(Failure::Reject(core_rejection(e, &cons, &enc, &core))),
            }
        }
    };
    *encoding_out = Some(enc);
    out
}

fn cert_cycle(e: &ExtendedHistory, cons: &[Constraint], enc: &Encoding, cycle: &[OwnedEdge]) -> Cycle {
    let edges = cycle
        .iter()
        .map(|oe| {
            let (from, to) = enc.edge_ids((oe.from, oe.to));
            let source = if oe.owner == FIXED {
                EdgeSource::Known(e.graph().edge_kind(from, to).expect("fixed edge is known"))
            } else {
                let c = &cons[oe.owner as usize];
                let side = if c.first.contains(&(from, to)) {
                    Side::First
                } else {
                    Side::Second
                };
                EdgeSource::Constraint { id: c.id, side }
            };
            CertEdge { from, to, source }
        })
        .collect();
    Cycle { edges }
}

fn core_rejection(e: &ExtendedHistory, cons: &[Constraint], enc: &Encoding, core: &solver::Core) -> Rejection {
    let cycles: Vec<Cycle> = core.cycles.iter().map(|c| cert_cycle(e, cons, enc, c)).collect();
    if core.choices.is_empty() {
        return Rejection::Cycle(cycles.into_iter().next().expect("fixed-edge conflict has a cycle"));
    }
    Rejection::Unsatisfiable {
        blamed: core.choices.iter().map(|&c| enc.constraint_ids[c as usize]).collect(),
        cycles,
    }
}

/// Checks a complete history for (strong session) serializability.
pub fn verify(h: &History, opts: &VerifyOptions) -> Report {
    let deadline = opts.solve.time_budget.map(|b| Instant::now() + b);
    let mut stats = Stats {
        txns: h.len(),
        ..Stats::default()
    };
    let mut encoding = None;
    let mut e = match builder::build(h, opts.session_order) {
        Ok(e) => e,
        Err(BuildError::Rejected(r)) => {
            return Report {
                outcome: Outcome::Reject(r),
                stats,
                encoding,
            }
        }
        Err(BuildError::Invalid(err)) => {
            return Report {
                outcome: Outcome::Invalid(err),
                stats,
                encoding,
            }
        }
        Err(err @ BuildError::Unresolved { .. }) => {
            return Report {
                outcome: Outcome::Internal(InternalInvariantViolation(err.to_string())),
                stats,
                encoding,
            }
        }
    };
    let outcome = match check(&mut e, opts, deadline, &mut stats, &mut encoding) {
        Ok(c) => Outcome::Accept { schedule: c.schedule },
        Err(f) => f.into(),
    };
    Report {
        outcome,
        stats,
        encoding,
    }
}

/// Convenience for a time budget in seconds.
pub fn with_budget(mut opts: VerifyOptions, secs: Option<f64>) -> VerifyOptions {
    opts.solve.time_budget = secs.map(Duration::from_secs_f64);
    opts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::{Operation as Op, Transaction};

    fn h(txns: Vec<Transaction>) -> History {
        History::from_transactions(txns).unwrap()
    }

    #[test]
    fn empty_history_accepts() {
        assert!(verify(&History::new(), &VerifyOptions::default()).outcome.is_accept());
    }

    #[test]
    fn worked_example_accepts_with_schedule() {
        let hist = h(vec![
            Transaction::new(1, 1, 0, vec![Op::write("x", 1)]),
            Transaction::new(2, 2, 0, vec![Op::write("x", 2)]),
            Transaction::new(3, 3, 0, vec![Op::read("x", 1)]),
        ]);
        let r = verify(&hist, &VerifyOptions::default());
        let Outcome::Accept { schedule } = r.outcome else {
            panic!()
        };
        // Either 1 3 2 or 2 1 3; both respect the constraint.
        assert!(crate::oracle::replay(&hist, &schedule), "{schedule:?}");
        assert_eq!(schedule.len(), 3);
    }

    #[test]
    fn session_order_matters() {
        // 3 follows 2 in its session but reads the value 2 overwrote.
        let hist = h(vec![
            Transaction::new(1, 1, 0, vec![Op::write("x", 1)]),
            Transaction::new(2, 1, 1, vec![Op::read("x", 1), Op::write("x", 2)]),
            Transaction::new(3, 1, 2, vec![Op::read("x", 1)]),
        ]);
        assert!(matches!(
            verify(&hist, &VerifyOptions::default()).outcome,
            Outcome::Reject(_)
        ));
        let opts = VerifyOptions {
            session_order: false,
            ..VerifyOptions::default()
        };
        assert!(verify(&hist, &opts).outcome.is_accept());
    }

    #[test]
    fn zero_budget_is_exceeded() {
        let hist = h(vec![
            Transaction::new(1, 1, 0, vec![Op::write("x", 1)]),
            Transaction::new(2, 2, 0, vec![Op::write("x", 2)]),
        ]);
        let opts = with_budget(VerifyOptions::default(), Some(0.0));
        assert_eq!(verify(&hist, &opts).outcome, Outcome::BudgetExceeded);
    }
}
