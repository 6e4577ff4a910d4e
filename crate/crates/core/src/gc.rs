//! Verification in rounds with bounded state. Fence transactions on the
//! `EPOCH` key give every transaction an epoch; transactions that no future
//! transaction can precede or read from are deleted once their constraints
//! are settled.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, BufRead, Write};
use std::time::Instant;

use thiserror::Error;

use crate::builder::BuildError;
use crate::closure::{transitive_closure, ClosureMethod};
use crate::codec;
use crate::constraints::Constraint;
use crate::error::{HistoryError, InternalInvariantViolation, ParseError};
use crate::graph::EdgeKind;
use crate::history::{ExtendedHistory, History, Transaction, TxnId, WriteRecord, EPOCH_KEY};
use crate::pipeline::{self, Stats, VerifyOptions};
use crate::verdict::Rejection;

/// Epoch of a transaction; `None` is ∞ (no later fence in its session yet).
pub type Epoch = Option<i64>;

/// Per-round classification of the live transactions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EpochAnnotation {
    pub epochs: BTreeMap<TxnId, Epoch>,
    /// Largest epoch every session has passed; `None` while some session has
    /// no fence.
    pub epoch_agree: Option<i64>,
    pub frozen: BTreeSet<TxnId>,
    pub obsolete: BTreeSet<TxnId>,
    pub candidate: BTreeSet<TxnId>,
    pub deletable: BTreeSet<TxnId>,
}

impl EpochAnnotation {
    pub fn fepoch(&self) -> Option<i64> {
        self.epoch_agree.map(|a| a - 2)
    }

    pub fn epoch(&self, t: TxnId) -> Epoch {
        self.epochs.get(&t).copied().flatten()
    }
}

fn at_most(e: Epoch, bound: i64) -> bool {
    e.is_some_and(|v| v <= bound)
}

/// Write fences are numbered along a topological order of `g`; read fences
/// take the epoch of the write fence they read (−1 for the initial value);
/// other transactions take one less than the next fence of their session.
pub fn assign_epochs(e: &ExtendedHistory) -> (BTreeMap<TxnId, Epoch>, Option<i64>) {
    let dense = e.graph().to_dense();
    let topo: Vec<TxnId> = match dense.graph.topo_order() {
        Ok(order) => dense.ids_of(&order),
        Err(_) => dense.ids.clone(),
    };
    let mut epochs: BTreeMap<TxnId, Epoch> = BTreeMap::new();
    let mut next = 0i64;
    for &t in &topo {
        let txn = e.txn(t).expect("graph node is live");
        if txn.writes_key(EPOCH_KEY) {
            epochs.insert(t, Some(next));
            next += 1;
        }
    }
    for &t in &topo {
        let txn = e.txn(t).unwrap();
        if !txn.writes_key(EPOCH_KEY) {
            if let Some(w) = txn.read_of(EPOCH_KEY) {
                let ep = match e.writer_of(w) {
                    Some(TxnId::INIT) => Some(-1),
                    Some(writer) => epochs.get(&writer).copied().flatten(),
                    None => None,
                };
                epochs.insert(t, ep);
            }
        }
    }

    let mut agree: Option<i64> = None;
    let mut all_fenced = true;
    for s in e.session_ids() {
        let list: Vec<TxnId> = e.session_txns(s).collect();
        if list.is_empty() {
            continue;
        }
        let mut cur: Epoch = None;
        let mut seen_fence = false;
        for &t in list.iter().rev() {
            let txn = e.txn(t).unwrap();
            if txn.touches_epoch() {
                let ep = epochs.get(&t).copied().flatten();
                if !seen_fence {
                    seen_fence = true;
                    match ep {
                        Some(v) => agree = Some(agree.map_or(v, |a| a.min(v))),
                        None => all_fenced = false,
                    }
                }
                cur = ep;
            } else {
                epochs.insert(t, cur.map(|c| c - 1));
            }
        }
        if !seen_fence {
            all_fenced = false;
        }
    }
    (epochs, if all_fenced { agree } else { None })
}

/// SCCs of `g` plus every edge of every constraint.
pub fn gen_psccs(e: &ExtendedHistory, cons: &[Constraint]) -> Vec<Vec<TxnId>> {
    let dense = e.graph().to_dense();
    let mut g = dense.graph.clone();
    for c in cons {
        for (a, b) in c.edges() {
            g.add_edge(dense.index[a], dense.index[b]);
        }
    }
    g.scc().into_iter().map(|comp| dense.ids_of(&comp)).collect()
}

/// Frozen, obsolete, candidate and deletable sets for the current state.
pub fn mark(e: &ExtendedHistory, cons: &[Constraint]) -> EpochAnnotation {
    let (epochs, epoch_agree) = assign_epochs(e);
    let mut ann = EpochAnnotation {
        epochs,
        epoch_agree,
        ..EpochAnnotation::default()
    };
    let Some(f) = ann.fepoch() else {
        return ann;
    };
    let dense = e.graph().to_dense();
    let Ok(order) = dense.graph.topo_order() else {
        return ann;
    };
    let mut preds: Vec<Vec<u32>> = vec![Vec::new(); dense.ids.len()];
    for v in 0..dense.ids.len() as u32 {
        for &w in dense.graph.successors(v) {
            preds[w as usize].push(v);
        }
    }
    let mut frozen = vec![false; dense.ids.len()];
    for &v in &order {
        let t = dense.ids[v as usize];
        frozen[v as usize] = at_most(ann.epoch(t), f) && preds[v as usize].iter().all(|&p| frozen[p as usize]);
        if frozen[v as usize] {
            ann.frozen.insert(t);
        }
    }

    let reach = transitive_closure(&dense.graph, ClosureMethod::TopoSweep).expect("graph is acyclic");
    let mut old_writers: HashMap<&str, Vec<u32>> = HashMap::new();
    for (i, &t) in dense.ids.iter().enumerate() {
        if at_most(ann.epoch(t), f) {
            for w in e.txn(t).unwrap().writes() {
                old_writers.entry(w.key.as_str()).or_default().push(i as u32);
            }
        }
    }
    for (i, &t) in dense.ids.iter().enumerate() {
        if !at_most(ann.epoch(t), f) {
            continue;
        }
        let obsolete = e
            .txn(t)
            .unwrap()
            .writes()
            .all(|w| old_writers[w.key.as_str()].iter().any(|&j| reach.reaches(i as u32, j)));
        if obsolete {
            ann.obsolete.insert(t);
        }
    }

    for &t in &ann.frozen {
        if ann.obsolete.contains(&t) || e.txn(t).unwrap().is_read_only() {
            ann.candidate.insert(t);
        }
    }
    for comp in gen_psccs(e, cons) {
        if comp.iter().all(|t| ann.candidate.contains(t)) {
            ann.deletable.extend(comp);
        }
    }
    ann
}

/// Deletes every deletable transaction that is not a fence. Returns the
/// deleted ids.
pub fn mark_and_delete(e: &mut ExtendedHistory, cons: &[Constraint]) -> (EpochAnnotation, Vec<TxnId>) {
    let ann = mark(e, cons);
    let doomed: Vec<TxnId> = ann
        .deletable
        .iter()
        .copied()
        .filter(|t| !e.txn(*t).unwrap().touches_epoch())
        .collect();
    for &t in &doomed {
        e.delete(t);
    }
    (ann, doomed)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct RoundConfig {
    pub verify: VerifyOptions,
    /// Delete transactions between rounds.
    pub gc: bool,
    /// Largest number of transactions held back for unresolved reads.
    pub defer_limit: usize,
}

impl Default for RoundConfig {
    fn default() -> Self {
        RoundConfig {
            verify: VerifyOptions::default(),
            gc: true,
            defer_limit: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RoundOutcome {
    Accept,
    Reject(Rejection),
    BudgetExceeded,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundReport {
    /// 1-based round number.
    pub round: usize,
    pub outcome: RoundOutcome,
    pub absorbed: usize,
    pub deferred: usize,
    pub deleted: usize,
    pub live: usize,
    pub constraints: usize,
    pub epoch_agree: Option<i64>,
}

impl RoundReport {
    /// One stable line per round.
    pub fn line(&self) -> String {
        let verdict = match &self.outcome {
            RoundOutcome::Accept => "accept".to_string(),
            RoundOutcome::Reject(r) => format!("reject {}", r.kind()),
            RoundOutcome::BudgetExceeded => "budget-exceeded".to_string(),
        };
        let agree = self.epoch_agree.map_or("none".to_string(), |a| a.to_string());
        format!(
            "round {}: {} absorbed={} deferred={} deleted={} live={} constraints={} epoch_agree={}",
            self.round, verdict, self.absorbed, self.deferred, self.deleted, self.live, self.constraints, agree
        )
    }
}

#[derive(Debug, Error)]
pub enum RoundError {
    #[error(transparent)]
    Invalid(#[from] HistoryError),
    #[error("more than {0} transactions deferred on unresolved reads")]
    DeferLimitExceeded(usize),
    #[error("verifier already stopped after a rejection")]
    Stopped,
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] ParseError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Internal(#[from] InternalInvariantViolation),
}

/// Streaming verifier. Feed fragments in order; stops at the first
/// rejection.
#[derive(Clone, Debug)]
pub struct RoundVerifier {
    state: ExtendedHistory,
    deferred: BTreeMap<TxnId, Transaction>,
    round: usize,
    config: RoundConfig,
    stopped: bool,
    last_stats: Stats,
}

impl RoundVerifier {
    pub fn new(config: RoundConfig) -> Self {
        RoundVerifier {
            state: ExtendedHistory::new(config.verify.session_order),
            deferred: BTreeMap::new(),
            round: 0,
            config,
            stopped: false,
            last_stats: Stats::default(),
        }
    }

    pub fn state(&self) -> &ExtendedHistory {
        &self.state
    }

    pub fn live(&self) -> usize {
        self.state.len()
    }

    pub fn deferred(&self) -> usize {
        self.deferred.len()
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// Whether `id` was already fed: live, deleted or deferred.
    pub fn knows(&self, id: TxnId) -> bool {
        self.state.contains(id) || self.state.is_tombstoned(id) || self.deferred.contains_key(&id)
    }

    pub fn last_stats(&self) -> &Stats {
        &self.last_stats
    }

    /// Splits pending transactions into those mergeable now and those
    /// waiting on unknown writes. A held transaction holds back the rest of
    /// its session and every transaction reading from it.
    fn split_ready(&self, pending: Vec<Transaction>) -> (Vec<Transaction>, Vec<Transaction>) {
        let mut held: BTreeSet<TxnId> = BTreeSet::new();
        loop {
            let mut writes: HashMap<u64, TxnId> = HashMap::new();
            for t in pending.iter().filter(|t| !held.contains(&t.id)) {
                for w in t.writes() {
                    writes.insert(w.write_id.0, t.id);
                }
            }
            let mut first_held: BTreeMap<crate::history::SessionId, u64> = BTreeMap::new();
            let mut changed = false;
            for t in &pending {
                if held.contains(&t.id) {
                    continue;
                }
                let unknown = t.reads().any(|r| {
                    !r.write_id.is_initial()
                        && !writes.contains_key(&r.write_id.0)
                        && self.state.write_record(r.write_id).is_none()
                });
                if unknown {
                    held.insert(t.id);
                    changed = true;
                }
            }
            for t in pending.iter().filter(|t| held.contains(&t.id)) {
                let e = first_held.entry(t.session).or_insert(t.seq);
                *e = (*e).min(t.seq);
            }
            for t in &pending {
                if !held.contains(&t.id) && first_held.get(&t.session).is_some_and(|&s| t.seq > s) {
                    held.insert(t.id);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        pending.into_iter().partition(|t| !held.contains(&t.id))
    }

    /// Runs one round on `frag` plus any previously deferred transactions.
    pub fn feed(&mut self, frag: History) -> Result<RoundReport, RoundError> {
        if self.stopped {
            return Err(RoundError::Stopped);
        }
        self.round += 1;
        let mut pending: Vec<Transaction> = std::mem::take(&mut self.deferred).into_values().collect();
        pending.extend(frag.into_transactions());
        let (ready, held) = self.split_ready(pending);
        if held.len() > self.config.defer_limit {
            return Err(RoundError::DeferLimitExceeded(self.config.defer_limit));
        }
        let absorbed = ready.len();
        let ready = History::from_transactions(ready)?;
        self.deferred = held.into_iter().map(|t| (t.id, t)).collect();
        let mut report = RoundReport {
            round: self.round,
            outcome: RoundOutcome::Accept,
            absorbed,
            deferred: self.deferred.len(),
            deleted: 0,
            live: self.state.len(),
            constraints: 0,
            epoch_agree: None,
        };
        match self.state.merge_fragment(&ready) {
            Ok(()) => {}
            Err(BuildError::Rejected(r)) => return Ok(self.stop(report, r)),
            Err(BuildError::Invalid(e)) => return Err(e.into()),
            Err(BuildError::Unresolved { txn, key, write_id }) => {
                return Ok(self.stop(
                    report,
                    Rejection::UnknownWrite {
                        reader: txn,
                        key,
                        write_id,
                    },
                ))
            }
        }
        let deadline = self.config.verify.solve.time_budget.map(|b| Instant::now() + b);
        let mut stats = Stats::default();
        let mut enc = None;
        let checked = pipeline::check(&mut self.state, &self.config.verify, deadline, &mut stats, &mut enc);
        self.last_stats = stats;
        report.live = self.state.len();
        let checked = match checked {
            Ok(c) => c,
            Err(pipeline::Failure::Reject(r)) => return Ok(self.stop(report, r)),
            Err(pipeline::Failure::Budget) => {
                self.stopped = true;
                report.outcome = RoundOutcome::BudgetExceeded;
                return Ok(report);
            }
            Err(pipeline::Failure::Internal(e)) => return Err(e.into()),
        };
        report.constraints = checked.constraints.len();
        if self.config.gc && self.state.session_order() {
            let (ann, deleted) = mark_and_delete(&mut self.state, &checked.constraints);
            report.deleted = deleted.len();
            report.epoch_agree = ann.epoch_agree;
        } else {
            report.epoch_agree = assign_epochs(&self.state).1;
        }
        report.live = self.state.len();
        Ok(report)
    }

    fn stop(&mut self, mut report: RoundReport, r: Rejection) -> RoundReport {
        self.stopped = true;
        report.outcome = RoundOutcome::Reject(r);
        report.live = self.state.len();
        report
    }

    /// Ends the stream: a transaction still deferred reads a write that
    /// never appeared.
    pub fn finish(&mut self) -> Option<RoundReport> {
        if self.stopped || self.deferred.is_empty() {
            return None;
        }
        let (reader, key, write_id) = self
            .deferred
            .values()
            .flat_map(|t| t.reads().map(move |r| (t.id, r)))
            .find(|(_, r)| {
                !r.write_id.is_initial()
                    && self.state.write_record(r.write_id).is_none()
                    && !self
                        .deferred
                        .values()
                        .any(|d| d.writes().any(|w| w.write_id == r.write_id))
            })
            .map(|(t, r)| (t, r.key.clone(), r.write_id))?;
        self.round += 1;
        let report = RoundReport {
            round: self.round,
            outcome: RoundOutcome::Accept,
            absorbed: 0,
            deferred: self.deferred.len(),
            deleted: 0,
            live: self.state.len(),
            constraints: 0,
            epoch_agree: None,
        };
        Some(self.stop(report, Rejection::UnknownWrite { reader, key, write_id }))
    }

    /// Writes the state as text: round number, session-order flag, live and
    /// deferred transactions in history format, known edges, tombstones with
    /// their writes, and the current epochs.
    pub fn save_checkpoint(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "R {}", self.round)?;
        writeln!(w, "S {}", self.state.session_order() as u8)?;
        for t in self.state.transactions() {
            writeln!(w, "L {}", codec::format_txn(t))?;
        }
        for t in self.deferred.values() {
            writeln!(w, "D {}", codec::format_txn(t))?;
        }
        for (a, b, k) in self.state.graph().edges() {
            writeln!(w, "E {a} {b} {}", k.tag())?;
        }
        let mut dead: BTreeMap<TxnId, Vec<(String, u64)>> = BTreeMap::new();
        for (wid, rec) in &self.state.writes {
            if self.state.is_tombstoned(rec.txn) {
                dead.entry(rec.txn).or_default().push((rec.key.to_string(), wid.0));
            }
        }
        for t in self.state.tombstones() {
            let mut ws = dead.remove(t).unwrap_or_default();
            ws.sort();
            write!(w, "X {t}")?;
            for (k, id) in ws {
                write!(w, " {k}:{id}")?;
            }
            writeln!(w)?;
        }
        let (epochs, agree) = assign_epochs(&self.state);
        for (t, ep) in epochs {
            match ep {
                Some(v) => writeln!(w, "Q {t} {v}")?,
                None => writeln!(w, "Q {t} inf")?,
            }
        }
        match agree {
            Some(a) => writeln!(w, "A {a}")?,
            None => writeln!(w, "A none")?,
        }
        Ok(())
    }

    /// Restores a verifier from [`RoundVerifier::save_checkpoint`] output.
    /// Epoch lines are informational and recomputed.
    pub fn load_checkpoint(config: RoundConfig, r: impl BufRead) -> Result<Self, RoundError> {
        let mut v = RoundVerifier::new(config);
        let mut live = Vec::new();
        let mut edges = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let ln = i + 1;
            let Some((tag, rest)) = line.split_once(' ') else {
                if line.trim().is_empty() {
                    continue;
                }
                return Err(ParseError::syntax(ln, "missing checkpoint field").into());
            };
            let bad = |what: &str| RoundError::Checkpoint(ParseError::syntax(ln, format!("invalid {what}")));
            match tag {
                "R" => v.round = rest.parse().map_err(|_| bad("round"))?,
                "S" => v.state.session_order = rest == "1",
                "L" => live.push(codec::parse_line(rest, ln)?.txn),
                "D" => {
                    let t = codec::parse_line(rest, ln)?.txn;
                    v.deferred.insert(t.id, t);
                }
                "E" => {
                    let f: Vec<&str> = rest.split(' ').collect();
                    let [a, b, k] = f[..] else { return Err(bad("edge")) };
                    let kind = match k {
                        "wr" => EdgeKind::ReadFrom,
                        "rw" => EdgeKind::AntiDependency,
                        "co" => EdgeKind::ClientOrder,
                        "init" => EdgeKind::InitialOrder,
                        "pruned" => EdgeKind::Pruned,
                        "bridge" => EdgeKind::Bridge,
                        _ => return Err(bad("edge kind")),
                    };
                    let a: u64 = a.parse().map_err(|_| bad("edge"))?;
                    let b: u64 = b.parse().map_err(|_| bad("edge"))?;
                    edges.push((TxnId(a), TxnId(b), kind));
                }
                "X" => {
                    let mut f = rest.split(' ');
                    let t: u64 = f.next().unwrap_or("").parse().map_err(|_| bad("tombstone"))?;
                    v.state.tombstones.insert(TxnId(t));
                    for w in f {
                        let (k, id) = w.rsplit_once(':').ok_or_else(|| bad("tombstone write"))?;
                        let id: u64 = id.parse().map_err(|_| bad("tombstone write"))?;
                        v.state.writes.insert(
                            crate::history::WriteId(id),
                            WriteRecord {
                                txn: TxnId(t),
                                key: k.into(),
                            },
                        );
                    }
                }
                "Q" | "A" => {}
                _ => return Err(bad("tag")),
            }
        }
        let st = &mut v.state;
        for t in &live {
            st.graph.add_node(t.id);
            st.sessions.entry(t.session).or_default().insert(t.seq, t.id);
            for w in t.writes() {
                st.writes.insert(
                    w.write_id,
                    WriteRecord {
                        txn: t.id,
                        key: w.key.clone(),
                    },
                );
            }
        }
        for t in &live {
            st.txns.insert(t.id, t.clone());
        }
        for t in &live {
            for r in t.reads() {
                let Some(writer) = st.writer_of(r.write_id) else {
                    return Err(HistoryError::UnresolvedRead {
                        txn: t.id,
                        key: r.key.clone(),
                        write_id: r.write_id,
                    }
                    .into());
                };
                if !writer.is_init() && !st.txns.contains_key(&writer) {
                    continue;
                }
                st.readfrom.entry((r.key.clone(), writer)).or_default().insert(t.id);
                if t.writes_key(r.key.as_str()) {
                    st.wwpairs.insert((r.key.clone(), writer), t.id);
                }
            }
        }
        for (a, b, k) in edges {
            st.graph.add_edge(a, b, k);
        }
        Ok(v)
    }
}

/// Runs the streaming verifier over all fragments, then flushes deferred
/// transactions. Stops after the first non-accepting round.
pub fn verify_rounds(
    fragments: impl IntoIterator<Item = History>,
    config: RoundConfig,
) -> Result<Vec<RoundReport>, RoundError> {
    let mut v = RoundVerifier::new(config);
    let mut out = Vec::new();
    for f in fragments {
        let r = v.feed(f)?;
        let stop = r.outcome != RoundOutcome::Accept;
        out.push(r);
        if stop {
            return Ok(out);
        }
    }
    out.extend(v.finish());
    Ok(out)
}

/// The ordering epochs provide: every transaction with epoch ≤ agree − 2
/// reaches every fence with epoch ≥ agree and every transaction after its
/// session's last fence, hence every future transaction.
pub fn epoch_guarantee_holds(e: &ExtendedHistory) -> bool {
    let (epochs, agree) = assign_epochs(e);
    let Some(agree) = agree else { return true };
    let dense = e.graph().to_dense();
    let Ok(reach) = transitive_closure(&dense.graph, ClosureMethod::TopoSweep) else {
        return false;
    };
    let epoch = |t: &TxnId| epochs.get(t).copied().flatten();
    for (i, a) in dense.ids.iter().enumerate() {
        if !at_most(epoch(a), agree - 2) {
            continue;
        }
        for (j, b) in dense.ids.iter().enumerate() {
            let late = match epoch(b) {
                None => true,
                Some(v) => v >= agree && e.txn(*b).unwrap().touches_epoch(),
            };
            if late && !reach.reaches(i as u32, j as u32) {
                return false;
            }
        }
    }
    true
}
