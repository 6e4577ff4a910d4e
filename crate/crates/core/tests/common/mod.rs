#![allow(dead_code)]

use std::collections::HashSet;

use polycheck_core::gc::verify_rounds;
use polycheck_core::solver::{Encoding, SolverInstance};
use polycheck_core::workload::{Benchmark, WorkloadConfig};
use polycheck_core::{
    Cycle, EdgeKind, EdgeSource, History, Operation as Op, Rejection, RoundConfig, RoundOutcome, RoundReport,
    SessionId, Side, Transaction, TxnId,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sessions of normal transactions followed by `rounds` rounds of write
/// fences, issued round-robin across sessions in the order given.
pub fn fenced(sessions: Vec<(u32, Vec<Transaction>)>, rounds: u64) -> History {
    let mut txns = Vec::new();
    let mut next_seq = Vec::new();
    for (s, list) in &sessions {
        let mut seq = 0;
        for t in list {
            let mut t = t.clone();
            t.session = SessionId(*s);
            t.seq = seq;
            seq += 1;
            txns.push(t);
        }
        next_seq.push(seq);
    }
    let mut prev = 0;
    for r in 0..rounds {
        for (i, (s, _)) in sessions.iter().enumerate() {
            let w = 1000 + r * 10 + *s as u64;
            txns.push(Transaction::write_fence(w, *s, next_seq[i], prev, w));
            next_seq[i] += 1;
            prev = w;
        }
    }
    History::from_transactions(txns).unwrap()
}

pub fn t(id: u64, ops: Vec<Op>) -> Transaction {
    Transaction::new(id, 0, 0, ops)
}

pub fn concat(fragments: &[History]) -> History {
    let mut all = History::new();
    for f in fragments {
        all.extend(f.clone()).unwrap();
    }
    all
}

pub fn rounds_with(fragments: Vec<History>, gc: bool) -> Vec<RoundReport> {
    verify_rounds(
        fragments,
        RoundConfig {
            gc,
            ..RoundConfig::default()
        },
    )
    .unwrap()
}

/// Round number of the last report and whether it accepted.
pub fn final_verdict(reports: &[RoundReport]) -> (usize, bool) {
    let last = reports.last().unwrap();
    (last.round, last.outcome == RoundOutcome::Accept)
}

/// 5 sessions of 46 normal transactions plus 4 fences each: 250 in total.
pub fn stream_config(seed: u64) -> WorkloadConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    WorkloadConfig {
        benchmark: Benchmark::ALL[rng.gen_range(0..4)],
        num_sessions: 5,
        txns_per_session: 46,
        keys: rng.gen_range(4..40),
        ops_per_txn: rng.gen_range(2..=8),
        fence_every: 10,
        read_fence_fraction: [0.0, 0.3][rng.gen_range(0..2)],
        seed,
    }
}

/// T1 wrote x, T2 overwrote it, T3 read from T2 and wrote y; in round 2, T4
/// reads x from T1 and y from T3. T1 stays current on q.
pub fn overwritten_read_rounds() -> [History; 2] {
    let round1 = fenced(
        vec![
            (1, vec![t(1, vec![Op::write("x", 1), Op::write("q", 9)])]),
            (
                2,
                vec![t(2, vec![Op::read("x", 1), Op::write("x", 2), Op::write("z", 3)])],
            ),
            (3, vec![t(3, vec![Op::read("z", 3), Op::write("y", 4)])]),
        ],
        3,
    );
    let round2 =
        History::from_transactions([Transaction::new(4, 1, 4, vec![Op::read("x", 1), Op::read("y", 4)])]).unwrap();
    [round1, round2]
}

/// Frozen T3 is overwritten on c, but shares a P-SCC with open constraints
/// on c and d. In round 2, T7 and T8 fix both constraints into the cycle
/// T1 -> T4 -> T3 -> T1.
pub fn finalized_constraint_rounds() -> [History; 2] {
    let round1 = fenced(
        vec![
            (1, vec![t(1, vec![Op::write("d", 1), Op::write("a", 2)])]),
            (2, vec![t(2, vec![Op::read("d", 1)])]),
            (3, vec![t(3, vec![Op::write("d", 3), Op::write("c", 4)])]),
            (4, vec![t(4, vec![Op::read("a", 2), Op::write("c", 5)])]),
            (5, vec![t(5, vec![Op::read("c", 4), Op::write("c", 6)])]),
        ],
        3,
    );
    let round2 = History::from_transactions([
        Transaction::new(7, 1, 4, vec![Op::read("d", 1)]),
        Transaction::new(8, 2, 4, vec![Op::read("c", 6)]),
    ])
    .unwrap();
    [round1, round2]
}

/// T1 -> T3 -> T6 by reads; T3 is obsolete on d and deleted. In round 2,
/// T7 reads d from T1 while ordered after T6.
pub fn deleted_path_rounds() -> [History; 2] {
    let round1 = fenced(
        vec![
            (1, vec![t(1, vec![Op::write("d", 1), Op::write("a", 2)])]),
            (
                2,
                vec![
                    t(3, vec![Op::read("a", 2), Op::write("d", 3)]),
                    t(6, vec![Op::read("d", 3), Op::write("d", 5)]),
                ],
            ),
        ],
        3,
    );
    let round2 = History::from_transactions([Transaction::new(7, 1, 4, vec![Op::read("d", 1)])]).unwrap();
    [round1, round2]
}

fn write_id_of(h: &History, writer: TxnId, key: &str) -> Option<u64> {
    if writer.is_init() {
        return Some(0);
    }
    h.get(writer)?.write_of(key).map(|w| w.0)
}

fn reads_from(h: &History, reader: TxnId, writer: TxnId, key: &str) -> bool {
    let Some(r) = h.get(reader).and_then(|t| t.read_of(key)) else {
        return false;
    };
    write_id_of(h, writer, key) == Some(r.0)
}

/// Checks one known edge against the history it claims to come from.
fn known_edge_holds(h: &History, a: TxnId, b: TxnId, kind: EdgeKind) -> bool {
    let (Some(ta), Some(tb)) = (h.get(a), h.get(b)) else {
        return false;
    };
    match kind {
        EdgeKind::ReadFrom => tb.reads().any(|r| reads_from(h, b, a, r.key.as_str())),
        EdgeKind::ClientOrder => ta.session == tb.session && ta.seq < tb.seq,
        // a read k from some w that b read and overwrote.
        EdgeKind::AntiDependency => ta
            .reads()
            .any(|r| tb.read_of(r.key.as_str()) == Some(r.write_id) && tb.writes_key(r.key.as_str())),
        EdgeKind::InitialOrder | EdgeKind::Pruned | EdgeKind::Bridge => true,
    }
}

/// Validates a rejection against the history and the encoding it names:
/// every cycle is closed, each known edge is a fixed edge of the encoding
/// consistent with the history, each constraint edge lies on the named side
/// of a blamed constraint, and small blamed sets admit no acyclic choice.
pub fn validate_certificate(h: &History, rej: &Rejection, enc: Option<&Encoding>) -> Result<(), String> {
    match rej {
        Rejection::SuccessiveWrites {
            key,
            writer,
            first,
            second,
        } => {
            for t in [first, second] {
                let ok = reads_from(h, *t, *writer, key.as_str()) && h.get(*t).unwrap().writes_key(key.as_str());
                if !ok {
                    return Err(format!("{t} does not overwrite {writer} on {key}"));
                }
            }
            Ok(())
        }
        Rejection::StaleRead { reader, key, writer } => {
            if reads_from(h, *reader, *writer, key.as_str()) {
                Ok(())
            } else {
                Err(format!("{reader} does not read {key} from {writer}"))
            }
        }
        Rejection::UnknownWrite { reader, key, write_id } => {
            let read = h.get(*reader).and_then(|t| t.read_of(key.as_str()));
            let written = h.transactions().any(|t| t.write_of(key.as_str()) == Some(*write_id));
            if read == Some(*write_id) && !written {
                Ok(())
            } else {
                Err(format!("write {write_id} of {key} exists or is not read"))
            }
        }
        Rejection::Cycle(c) => check_cycles(h, &[c], &[], enc),
        Rejection::Unsatisfiable { blamed, cycles } => {
            let cycles: Vec<&Cycle> = cycles.iter().collect();
            check_cycles(h, &cycles, blamed, enc)?;
            let enc = enc.ok_or("no encoding")?;
            check_core(enc, blamed)
        }
    }
}

fn check_cycles(
    h: &History,
    cycles: &[&Cycle],
    blamed: &[polycheck_core::ConstraintId],
    enc: Option<&Encoding>,
) -> Result<(), String> {
    let enc = enc.ok_or("no encoding")?;
    if cycles.is_empty() {
        return Err("no cycle".into());
    }
    let fixed: HashSet<(u32, u32)> = enc.instance.fixed.iter().copied().collect();
    for c in cycles {
        if c.edges.is_empty() || !c.is_closed() {
            return Err(format!("not a closed cycle: {c}"));
        }
        for e in &c.edges {
            let (Some(&a), Some(&b)) = (enc.index.get(&e.from), enc.index.get(&e.to)) else {
                return Err(format!("edge {} -> {} leaves the encoding", e.from, e.to));
            };
            match e.source {
                EdgeSource::Known(kind) => {
                    if !fixed.contains(&(a, b)) {
                        return Err(format!("{} -> {} is not a known edge", e.from, e.to));
                    }
                    if !known_edge_holds(h, e.from, e.to, kind) {
                        return Err(format!(
                            "{} -> {} is not a {} edge of the history",
                            e.from,
                            e.to,
                            kind.tag()
                        ));
                    }
                }
                EdgeSource::Constraint { id, side } => {
                    if !blamed.contains(&id) {
                        return Err(format!("constraint {id:?} is not blamed"));
                    }
                    let idx = enc
                        .constraint_ids
                        .iter()
                        .position(|c| *c == id)
                        .ok_or("unknown constraint")?;
                    if !enc.instance.choices[idx].side(side).contains(&(a, b)) {
                        return Err(format!("{} -> {} is not on side {side:?} of {id:?}", e.from, e.to));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Every assignment of the blamed constraints, with all fixed edges, is
/// cyclic. Skipped above 12 constraints.
fn check_core(enc: &Encoding, blamed: &[polycheck_core::ConstraintId]) -> Result<(), String> {
    if blamed.len() > 12 {
        return Ok(());
    }
    let choices = blamed
        .iter()
        .map(|id| {
            let idx = enc
                .constraint_ids
                .iter()
                .position(|c| c == id)
                .ok_or("unknown constraint")?;
            Ok(enc.instance.choices[idx].clone())
        })
        .collect::<Result<Vec<_>, String>>()?;
    let inst = SolverInstance {
        n: enc.instance.n,
        fixed: enc.instance.fixed.clone(),
        choices,
    };
    for mask in 0u32..1 << blamed.len() {
        let sides: Vec<Side> = (0..blamed.len())
            .map(|i| if mask >> i & 1 == 0 { Side::First } else { Side::Second })
            .collect();
        if inst.is_acyclic_with(&sides) {
            return Err(format!("blamed constraints satisfiable with {sides:?}"));
        }
    }
    Ok(())
}
