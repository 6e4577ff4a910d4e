//! Seeded workload simulator. Sessions are interleaved into one serial
//! order and executed against a single store, so generated histories are
//! strong-session serializable by construction. Anomalies are injected as
//! extra transactions appended to session ends.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::history::{History, Key, Operation, SessionId, Transaction, TxnId, EPOCH_KEY};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Benchmark {
    /// Blind writes, half the transactions read-only.
    BlindWRw,
    /// Blind writes, 90% of the transactions read-only.
    BlindWRm,
    RmwOnly,
    /// Uniform keys, each operation a read with probability 0.9.
    ReadHeavy,
}

impl Benchmark {
    pub const ALL: [Benchmark; 4] = [
        Benchmark::BlindWRw,
        Benchmark::BlindWRm,
        Benchmark::RmwOnly,
        Benchmark::ReadHeavy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::BlindWRw => "blindw-rw",
            Benchmark::BlindWRm => "blindw-rm",
            Benchmark::RmwOnly => "rmw-only",
            Benchmark::ReadHeavy => "read-heavy",
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Benchmark::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<_> = Benchmark::ALL.iter().map(|b| b.name()).collect();
                format!("unknown benchmark {s:?}, expected one of {}", names.join(", "))
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadConfig {
    pub benchmark: Benchmark,
    pub num_sessions: u32,
    /// Normal transactions per session; fences come on top.
    pub txns_per_session: u64,
    pub keys: u32,
    pub ops_per_txn: u32,
    /// A fence after every this many normal transactions of a session; 0
    /// disables fences.
    pub fence_every: u64,
    /// Fraction of fences that only read the epoch key.
    pub read_fence_fraction: f64,
    pub seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            benchmark: Benchmark::BlindWRw,
            num_sessions: 4,
            txns_per_session: 25,
            keys: 100,
            ops_per_txn: 8,
            fence_every: 20,
            read_fence_fraction: 0.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum WorkloadError {
    #[error("invalid workload config: {0}")]
    InvalidConfig(String),
    #[error("history has no place for a {0} anomaly")]
    PatternNotApplicable(AnomalyKind),
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: &str| Err(WorkloadError::InvalidConfig(m.into()));
        if self.num_sessions == 0 {
            return bad("num_sessions must be positive");
        }
        if self.keys == 0 {
            return bad("keys must be positive");
        }
        if self.ops_per_txn == 0 {
            return bad("ops_per_txn must be positive");
        }
        if !(0.0..=1.0).contains(&self.read_fence_fraction) {
            return bad("read_fence_fraction must lie in [0, 1]");
        }
        Ok(())
    }

    /// Fences each session issues.
    pub fn fences_per_session(&self) -> u64 {
        self.txns_per_session.checked_div(self.fence_every).unwrap_or(0)
    }
}

fn key_name(i: usize) -> Key {
    Key::from(format!("k{i}"))
}

/// Smallest power of ten above `n`.
fn stride(n: u64) -> u64 {
    let mut s = 10;
    while s <= n {
        s *= 10;
    }
    s
}

struct Store {
    values: HashMap<Key, u64>,
    next_write: u64,
}

impl Store {
    fn read(&self, key: &Key) -> u64 {
        self.values.get(key).copied().unwrap_or(0)
    }

    fn write(&mut self, key: &Key) -> u64 {
        let id = self.next_write;
        self.next_write += 1;
        self.values.insert(key.clone(), id);
        id
    }
}

fn normal_ops(cfg: &WorkloadConfig, rng: &mut ChaCha8Rng, store: &mut Store) -> Vec<Operation> {
    let keys = cfg.keys as usize;
    let width = (cfg.ops_per_txn as usize).min(keys);
    let pick = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Key> {
        index::sample(rng, keys, n).into_iter().map(key_name).collect()
    };
    let read = |k: Key, store: &Store| {
        let v = store.read(&k);
        Operation::read(k, v)
    };
    match cfg.benchmark {
        Benchmark::BlindWRw | Benchmark::BlindWRm => {
            let p_read = if cfg.benchmark == Benchmark::BlindWRw { 0.5 } else { 0.9 };
            let ks = pick(rng, width);
            if rng.gen_bool(p_read) {
                ks.into_iter().map(|k| read(k, store)).collect()
            } else {
                ks.into_iter()
                    .map(|k| {
                        let id = store.write(&k);
                        Operation::write(k, id)
                    })
                    .collect()
            }
        }
        Benchmark::RmwOnly => {
            let ks = pick(rng, (cfg.ops_per_txn as usize / 2).max(1).min(keys));
            let mut ops = Vec::with_capacity(2 * ks.len());
            for k in ks {
                ops.push(read(k.clone(), store));
                let id = store.write(&k);
                ops.push(Operation::write(k, id));
            }
            ops
        }
        Benchmark::ReadHeavy => pick(rng, width)
            .into_iter()
            .map(|k| {
                if rng.gen_bool(0.9) {
                    read(k, store)
                } else {
                    let id = store.write(&k);
                    Operation::write(k, id)
                }
            })
            .collect(),
    }
}

/// Generates a history and the serial order it was executed in.
pub fn generate_ordered(cfg: &WorkloadConfig) -> Result<(History, Vec<TxnId>), WorkloadError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let per_session = cfg.txns_per_session + cfg.fences_per_session();
    let stride = stride(per_session);
    let epoch = Key::new(EPOCH_KEY);
    let mut store = Store {
        values: HashMap::new(),
        next_write: 1,
    };
    // Per session: (next seq, normal txns issued since the last fence).
    let mut progress: Vec<(u64, u64)> = vec![(0, 0); cfg.num_sessions as usize];
    let mut open: Vec<usize> = (0..cfg.num_sessions as usize).filter(|_| per_session > 0).collect();
    let mut order = Vec::new();
    let mut h = History::new();
    while !open.is_empty() {
        let slot = rng.gen_range(0..open.len());
        let s = open[slot];
        let (seq, since_fence) = progress[s];
        let session = s as u32 + 1;
        let id = session as u64 * stride + seq;
        let fence_due = cfg.fence_every > 0 && since_fence == cfg.fence_every;
        let txn = if fence_due {
            progress[s].1 = 0;
            let read = store.read(&epoch);
            if rng.gen_bool(cfg.read_fence_fraction) {
                Transaction::read_fence(id, session, seq, read)
            } else {
                let write = store.write(&epoch);
                Transaction::write_fence(id, session, seq, read, write)
            }
        } else {
            progress[s].1 += 1;
            Transaction::new(id, session, seq, normal_ops(cfg, &mut rng, &mut store))
        };
        progress[s].0 += 1;
        if progress[s].0 == per_session {
            open.swap_remove(slot);
        }
        order.push(txn.id);
        h.insert(txn).expect("simulated transactions are well formed");
    }
    Ok((h, order))
}

pub fn generate(cfg: &WorkloadConfig) -> Result<History, WorkloadError> {
    generate_ordered(cfg).map(|(h, _)| h)
}

/// Splits a history into consecutive fragments of the serial order, so that
/// every read refers to a write in the same or an earlier fragment.
pub fn split_rounds(h: &History, order: &[TxnId], round_size: usize) -> Vec<History> {
    order
        .chunks(round_size.max(1))
        .map(|chunk| History::from_transactions(chunk.iter().map(|id| h.get(*id).unwrap().clone())).unwrap())
        .collect()
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum AnomalyKind {
    /// A read of a value that a known later write has overwritten.
    StaleRead,
    /// Two read-modify-writes built on the same version.
    LostUpdate,
    /// Two transactions that read each other's writes.
    WriteCycle,
    /// A transaction reading from its successor in the same session.
    SessionOrderViolation,
    /// A read from an old overwritten write combined with a read from a
    /// transaction ordered after the overwrite.
    FutureReadAcrossEpochs,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 5] = [
        AnomalyKind::StaleRead,
        AnomalyKind::LostUpdate,
        AnomalyKind::WriteCycle,
        AnomalyKind::SessionOrderViolation,
        AnomalyKind::FutureReadAcrossEpochs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AnomalyKind::StaleRead => "stale-read",
            AnomalyKind::LostUpdate => "lost-update",
            AnomalyKind::WriteCycle => "write-cycle",
            AnomalyKind::SessionOrderViolation => "session-order-violation",
            AnomalyKind::FutureReadAcrossEpochs => "future-read-across-epochs",
        }
    }
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AnomalyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        AnomalyKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<_> = AnomalyKind::ALL.iter().map(|k| k.name()).collect();
                format!("unknown anomaly {s:?}, expected one of {}", names.join(", "))
            })
    }
}

#[derive(Clone, Debug)]
pub struct Injected {
    pub history: History,
    /// The appended transactions, in the order they were added.
    pub added: Vec<Transaction>,
    pub log: Vec<String>,
}

/// Identifiers the injector must not hand out, e.g. those of transactions
/// arriving in later rounds.
#[derive(Copy, Clone, Debug, Default)]
pub struct Reserved {
    pub max_txn: u64,
    pub max_write: u64,
}

pub fn inject(h: &History, kind: AnomalyKind, seed: u64) -> Result<Injected, WorkloadError> {
    inject_reserved(h, kind, seed, Reserved::default())
}

struct Injector<'a> {
    h: &'a History,
    rng: ChaCha8Rng,
    next_txn: u64,
    next_write: u64,
    /// Next free seq per session, bumped as transactions are appended.
    next_seq: BTreeMap<SessionId, u64>,
    added: Vec<Transaction>,
    log: Vec<String>,
}

impl<'a> Injector<'a> {
    fn new(h: &'a History, seed: u64, reserved: Reserved) -> Self {
        let max_txn = h.txn_ids().map(|t| t.0).max().unwrap_or(0).max(reserved.max_txn);
        let next_seq = h
            .sessions()
            .iter()
            .map(|(s, list)| (*s, list.last().map_or(0, |t| h.get(*t).unwrap().seq + 1)))
            .collect();
        Injector {
            h,
            rng: ChaCha8Rng::seed_from_u64(seed),
            next_txn: max_txn + 1,
            next_write: h.max_write_id().max(reserved.max_write) + 1,
            next_seq,
            added: Vec::new(),
            log: Vec::new(),
        }
    }

    fn write_id(&mut self) -> u64 {
        self.next_write += 1;
        self.next_write - 1
    }

    fn any_session(&mut self) -> SessionId {
        let ids: Vec<SessionId> = self.next_seq.keys().copied().collect();
        ids.choose(&mut self.rng).copied().unwrap_or(SessionId(1))
    }

    /// Appends a transaction at the end of session `s`.
    fn append(&mut self, s: SessionId, ops: Vec<Operation>) -> TxnId {
        let seq = self.next_seq.entry(s).or_insert(0);
        let t = Transaction::new(self.next_txn, s.0, *seq, ops);
        *seq += 1;
        self.next_txn += 1;
        self.log
            .push(format!("append to session {s}: {}", crate::codec::format_txn(&t)));
        let id = t.id;
        self.added.push(t);
        id
    }

    fn writers(&self) -> Vec<(&'a Transaction, &'a Operation)> {
        self.h
            .transactions()
            .filter(|t| !t.is_fence)
            .flat_map(|t| t.writes().map(move |w| (t, w)))
            .collect()
    }

    fn keys(&self) -> Vec<Key> {
        let set: BTreeSet<Key> = self
            .h
            .transactions()
            .filter(|t| !t.is_fence)
            .flat_map(|t| t.ops.iter().map(|o| o.key.clone()))
            .collect();
        set.into_iter().collect()
    }

    /// A write of `key` known to precede `t`: the version `t` read before
    /// overwriting, else the latest earlier write in `t`'s session, else
    /// the initial value.
    fn overwritten(&self, t: &Transaction, key: &Key) -> u64 {
        if let Some(w) = t.read_of(key.as_str()) {
            return w.0;
        }
        let list = self.h.session(t.session);
        list.iter()
            .map(|id| self.h.get(*id).unwrap())
            .take_while(|u| u.seq < t.seq)
            .filter_map(|u| u.write_of(key.as_str()))
            .last()
            .map_or(0, |w| w.0)
    }

    /// Known successors over read-from and session edges, breadth first.
    fn reachable(&self, from: TxnId) -> Vec<TxnId> {
        let rf = self.h.read_from().unwrap_or_default();
        let mut succ: HashMap<TxnId, Vec<TxnId>> = HashMap::new();
        for (w, _, r) in rf {
            if !w.is_init() {
                succ.entry(w).or_default().push(r);
            }
        }
        for list in self.h.sessions().values() {
            for p in list.windows(2) {
                succ.entry(p[0]).or_default().push(p[1]);
            }
        }
        let mut seen = BTreeSet::from([from]);
        let mut queue = VecDeque::from([from]);
        let mut out = Vec::new();
        while let Some(n) = queue.pop_front() {
            for &m in succ.get(&n).into_iter().flatten() {
                if seen.insert(m) {
                    out.push(m);
                    queue.push_back(m);
                }
            }
        }
        out
    }

    fn run(&mut self, kind: AnomalyKind) -> Result<(), WorkloadError> {
        let na = || WorkloadError::PatternNotApplicable(kind);
        match kind {
            AnomalyKind::StaleRead => {
                let (w2, op) = *self.writers().choose(&mut self.rng).ok_or_else(na)?;
                let stale = self.overwritten(w2, &op.key);
                let mut ops = vec![Operation::read(op.key.clone(), stale)];
                if let Some(other) = w2.writes().find(|o| o.key != op.key) {
                    ops.push(Operation::read(other.key.clone(), other.write_id.0));
                }
                self.log.push(format!(
                    "{}: read {} as write {stale}, overwritten by {}",
                    kind, op.key, w2.id
                ));
                self.append(w2.session, ops);
            }
            AnomalyKind::LostUpdate => {
                let keys = self.keys();
                let key = keys.choose(&mut self.rng).cloned().unwrap_or_else(|| Key::new("k0"));
                let base = self
                    .writers()
                    .into_iter()
                    .filter(|(_, o)| o.key == key)
                    .map(|(_, o)| o.write_id.0)
                    .collect::<Vec<_>>()
                    .choose(&mut self.rng)
                    .copied()
                    .unwrap_or(0);
                self.log.push(format!("{kind}: two updates of {key} from write {base}"));
                for _ in 0..2 {
                    let s = self.any_session();
                    let w = self.write_id();
                    self.append(
                        s,
                        vec![Operation::read(key.clone(), base), Operation::write(key.clone(), w)],
                    );
                }
            }
            AnomalyKind::WriteCycle => {
                let mut keys = self.keys();
                keys.shuffle(&mut self.rng);
                let x = keys.first().cloned().unwrap_or_else(|| Key::new("k0"));
                let y = keys.get(1).cloned().unwrap_or_else(|| Key::new("k1"));
                let (wx, wy) = (self.write_id(), self.write_id());
                self.log.push(format!("{kind}: mutual reads over {x} and {y}"));
                let (sa, sb) = (self.any_session(), self.any_session());
                self.append(
                    sa,
                    vec![Operation::read(y.clone(), wy), Operation::write(x.clone(), wx)],
                );
                self.append(sb, vec![Operation::read(x, wx), Operation::write(y, wy)]);
            }
            AnomalyKind::SessionOrderViolation => {
                let keys = self.keys();
                let x = keys.choose(&mut self.rng).cloned().unwrap_or_else(|| Key::new("k0"));
                let w = self.write_id();
                let s = self.any_session();
                self.log
                    .push(format!("{kind}: session {s} reads {x} from its own next transaction"));
                self.append(s, vec![Operation::read(x.clone(), w)]);
                self.append(s, vec![Operation::write(x, w)]);
            }
            AnomalyKind::FutureReadAcrossEpochs => {
                // T1 wrote x, T2 overwrote it, T3 is ordered after T2 and
                // writes y; T4 reads x from T1 and y from T3.
                let mut cands = self.writers();
                cands.shuffle(&mut self.rng);
                let mut found = None;
                for (t2, op) in cands {
                    let t1 = self.overwritten(t2, &op.key);
                    if t1 == 0 {
                        continue;
                    }
                    let t3 = self
                        .reachable(t2.id)
                        .into_iter()
                        .rev()
                        .map(|id| self.h.get(id).unwrap())
                        .filter(|t| !t.is_fence)
                        .find_map(|t| t.writes().find(|w| w.key != op.key).map(|w| (t.id, w.clone())));
                    if let Some((t3, y)) = t3 {
                        found = Some((t1, t2.id, op.key.clone(), t3, y));
                        break;
                    }
                }
                let (t1, t2, x, t3, y) = found.ok_or_else(na)?;
                self.log.push(format!(
                    "{kind}: reads {x} as write {t1} (overwritten by {t2}) and {} from {t3}",
                    y.key
                ));
                let s = self.any_session();
                self.append(s, vec![Operation::read(x, t1), Operation::read(y.key, y.write_id.0)]);
            }
        }
        Ok(())
    }
}

/// Appends the transactions of one anomaly to `h`. New ids lie above those
/// in `h` and in `reserved`.
pub fn inject_reserved(
    h: &History,
    kind: AnomalyKind,
    seed: u64,
    reserved: Reserved,
) -> Result<Injected, WorkloadError> {
    let mut inj = Injector::new(h, seed, reserved);
    inj.run(kind)?;
    let mut history = h.clone();
    for t in &inj.added {
        history
            .insert(t.clone())
            .expect("injected transactions are well formed");
    }
    Ok(Injected {
        history,
        added: inj.added,
        log: inj.log,
    })
}

/// Injects an anomaly into round `round` of a stream, treating all rounds up
/// to it as the host history. Later transactions of affected sessions move
/// back to keep sequence numbers unique.
pub fn inject_into_round(
    rounds: &mut [History],
    round: usize,
    kind: AnomalyKind,
    seed: u64,
) -> Result<Injected, WorkloadError> {
    let mut prefix = History::new();
    for r in &rounds[..=round] {
        prefix.extend(r.clone()).expect("rounds are disjoint");
    }
    let reserved = Reserved {
        max_txn: rounds.iter().flat_map(|r| r.txn_ids()).map(|t| t.0).max().unwrap_or(0),
        max_write: rounds.iter().map(History::max_write_id).max().unwrap_or(0),
    };
    let inj = inject_reserved(&prefix, kind, seed, reserved)?;
    let mut shift: BTreeMap<SessionId, u64> = BTreeMap::new();
    for t in &inj.added {
        *shift.entry(t.session).or_default() += 1;
    }
    for t in &inj.added {
        rounds[round]
            .insert(t.clone())
            .expect("injected transactions are well formed");
    }
    for r in &mut rounds[round + 1..] {
        let moved = std::mem::take(r).into_transactions().map(|mut t| {
            t.seq += shift.get(&t.session).copied().unwrap_or(0);
            t
        });
        *r = History::from_transactions(moved).expect("shifted round stays well formed");
    }
    Ok(inj)
}

/// Parameters of [`random_history`].
#[derive(Copy, Clone, Debug)]
pub struct RandomShape {
    pub max_txns: usize,
    pub max_sessions: u32,
    pub max_keys: usize,
    pub fences: bool,
    /// Probability that a read returns the value current in the execution
    /// order instead of an arbitrary write of its key.
    pub faithful: f64,
}

impl Default for RandomShape {
    fn default() -> Self {
        RandomShape {
            max_txns: 8,
            max_sessions: 3,
            max_keys: 3,
            fences: false,
            faithful: 0.75,
        }
    }
}

/// Small, possibly non-serializable history: transactions are executed in
/// a random order and each read deviates from the current value with
/// probability `1 - faithful`.
pub fn random_history(rng: &mut impl Rng, shape: &RandomShape) -> History {
    #[derive(Clone, Copy)]
    enum Access {
        Read,
        Write,
        Rmw,
    }
    let n = rng.gen_range(1..=shape.max_txns.max(1));
    let sessions = rng.gen_range(1..=shape.max_sessions.max(1));
    let nkeys = rng.gen_range(1..=shape.max_keys.max(1));
    let keys: Vec<Key> = (0..nkeys)
        .map(|i| {
            Key::from(
                ["x", "y", "z", "u", "v", "w"]
                    .get(i)
                    .map_or(format!("k{i}"), |s| s.to_string()),
            )
        })
        .collect();
    let epoch = Key::new(EPOCH_KEY);

    // Shapes first, so every write id exists before reads pick one.
    let mut shapes: Vec<(bool, Vec<(Key, Access)>)> = Vec::new();
    for _ in 0..n {
        if shape.fences && rng.gen_bool(0.2) {
            let access = if rng.gen_bool(0.8) { Access::Rmw } else { Access::Read };
            shapes.push((true, vec![(epoch.clone(), access)]));
            continue;
        }
        let mut acc = Vec::new();
        for k in &keys {
            let a = match rng.gen_range(0..6) {
                0 | 1 => continue,
                2 | 3 => Access::Read,
                4 => Access::Write,
                _ => Access::Rmw,
            };
            acc.push((k.clone(), a));
        }
        if acc.is_empty() {
            acc.push((keys[rng.gen_range(0..keys.len())].clone(), Access::Write));
        }
        acc.shuffle(rng);
        shapes.push((false, acc));
    }
    let mut next_write = 1u64;
    let mut write_ids: Vec<HashMap<Key, u64>> = vec![HashMap::new(); n];
    let mut by_key: HashMap<Key, Vec<u64>> = HashMap::new();
    for (i, (_, acc)) in shapes.iter().enumerate() {
        for (k, a) in acc {
            if matches!(a, Access::Write | Access::Rmw) {
                write_ids[i].insert(k.clone(), next_write);
                by_key.entry(k.clone()).or_default().push(next_write);
                next_write += 1;
            }
        }
    }

    let mut exec: Vec<usize> = (0..n).collect();
    exec.shuffle(rng);
    let mut store: HashMap<Key, u64> = HashMap::new();
    let mut seqs = vec![0u64; sessions as usize];
    let mut txns = Vec::new();
    for i in exec {
        let (fence, acc) = &shapes[i];
        let mut ops = Vec::new();
        for (k, a) in acc {
            if matches!(a, Access::Read | Access::Rmw) {
                let current = store.get(k).copied().unwrap_or(0);
                let v = if rng.gen_bool(shape.faithful) {
                    current
                } else {
                    let mut choices: Vec<u64> = by_key
                        .get(k)
                        .into_iter()
                        .flatten()
                        .copied()
                        .filter(|w| write_ids[i].get(k) != Some(w))
                        .collect();
                    choices.push(0);
                    choices[rng.gen_range(0..choices.len())]
                };
                ops.push(Operation::read(k.clone(), v));
            }
            if let Some(&w) = write_ids[i].get(k) {
                ops.push(Operation::write(k.clone(), w));
                store.insert(k.clone(), w);
            }
        }
        let s = rng.gen_range(0..sessions as usize);
        let mut t = Transaction::new(i as u64 + 1, s as u32 + 1, seqs[s], ops);
        t.is_fence = *fence;
        seqs[s] += 1;
        txns.push(t);
    }
    History::from_transactions(txns).expect("random transactions are well formed")
}
