mod common;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{concat, final_verdict, rounds_with, stream_config, validate_certificate};
use polycheck_core::oracle::oracle_serializable;
use polycheck_core::pipeline::with_budget;
use polycheck_core::workload::{self, AnomalyKind, Benchmark, RandomShape, WorkloadConfig};
use polycheck_core::{
    builder, constraints, prune, verify, EdgeKind, History, Key, Operation as Op, Outcome, PruneOptions, RoundConfig,
    RoundOutcome, RoundVerifier, Transaction, TxnId, VerifyOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn oracle_equivalence() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut compared, mut serializable) = (0, 0);
    for i in 0..1200 {
        let shape = RandomShape {
            fences: i % 2 == 1,
            ..RandomShape::default()
        };
        let h = workload::random_history(&mut rng, &shape);
        for sessions in [true, false] {
            let Ok(expected) = oracle_serializable(&h, sessions) else {
                continue;
            };
            let opts = VerifyOptions {
                session_order: sessions,
                ..VerifyOptions::default()
            };
            let got = verify(&h, &opts).outcome;
            ensure(
                got.is_accept() == expected,
                format!("history {i}, sessions {sessions}: {got:?}"),
            )?;
            compared += 1;
            serializable += expected as usize;
        }
    }
    let elapsed = start.elapsed();
    ensure(compared >= 1000, format!("only {compared} comparisons"))?;
    ensure(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    Ok(format!(
        "{compared} comparisons, {serializable} serializable, {elapsed:.2?}"
    ))
}

fn constraints_of(
    txns: Vec<Transaction>,
) -> (
    polycheck_core::ExtendedHistory,
    constraints::ChainMap,
    Vec<polycheck_core::Constraint>,
) {
    let h = History::from_transactions(txns).unwrap();
    let mut e = builder::build(&h, false).unwrap();
    let (chains, cons) = constraints::gen_constraints(&mut e).unwrap();
    (e, chains, cons)
}

fn t(id: u64, ops: Vec<Op>) -> Transaction {
    Transaction::new(id, id as u32, 0, ops)
}

fn worked_examples() -> Verdict {
    // Two writers of x, one reader of the first.
    let (e, _, cons) = constraints_of(vec![
        t(1, vec![Op::write("x", 1)]),
        t(2, vec![Op::write("x", 2)]),
        t(3, vec![Op::read("x", 1)]),
    ]);
    ensure(
        e.graph().edge_count() == 1 && e.graph().has_edge(TxnId(1), TxnId(3)),
        "polygraph: known edges",
    )?;
    ensure(
        cons.len() == 1 && cons[0].first == [(TxnId(3), TxnId(2))] && cons[0].second == [(TxnId(2), TxnId(1))],
        format!("polygraph: constraints {cons:?}"),
    )?;

    let (_, chains, _) = constraints_of(vec![
        t(1, vec![Op::write("x", 1)]),
        t(2, vec![Op::read("x", 1), Op::write("x", 2)]),
        t(3, vec![Op::write("x", 3)]),
        t(4, vec![Op::read("x", 3), Op::write("x", 4)]),
    ]);
    let got: Vec<Vec<TxnId>> = chains[&Key::new("x")].iter().map(|c| c.txns.clone()).collect();
    ensure(
        got == [vec![TxnId(1), TxnId(2)], vec![TxnId(3), TxnId(4)]],
        format!("chains: {got:?}"),
    )?;

    let (_, _, cons) = constraints_of(vec![
        t(1, vec![Op::write("x", 1)]),
        t(2, vec![Op::write("x", 2)]),
        t(3, vec![Op::read("x", 1)]),
        t(4, vec![Op::read("x", 1)]),
        t(5, vec![Op::read("x", 2)]),
    ]);
    ensure(
        cons.len() == 1
            && cons[0].first == [(TxnId(3), TxnId(2)), (TxnId(4), TxnId(2))]
            && cons[0].second == [(TxnId(5), TxnId(1))],
        format!("coalescing: {cons:?}"),
    )?;

    // W2 reaches R3, so placing R3 before W2 is impossible.
    let (mut e, _, cons) = constraints_of(vec![
        t(1, vec![Op::write("x", 1)]),
        t(2, vec![Op::write("x", 2), Op::write("y", 3)]),
        t(3, vec![Op::read("x", 1), Op::read("y", 3)]),
    ]);
    ensure(
        cons.len() == 1 && cons[0].first == [(TxnId(3), TxnId(2))] && cons[0].second == [(TxnId(2), TxnId(1))],
        format!("pruning input: {cons:?}"),
    )?;
    let (left, _) = prune::prune(&mut e, cons, PruneOptions::default()).map_err(|r| r.to_string())?;
    ensure(
        left.is_empty() && e.graph().edge_kind(TxnId(2), TxnId(1)) == Some(EdgeKind::Pruned),
        "pruning: (W2,W1) not kept",
    )?;
    Ok("polygraph, chains, coalescing and pruning fixtures match".into())
}

fn neutrality() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let shape = RandomShape {
        max_txns: 30,
        max_sessions: 4,
        max_keys: 4,
        fences: true,
        faithful: 0.9,
    };
    let mut accepted = 0;
    for i in 0..600 {
        let h = workload::random_history(&mut rng, &shape);
        let on = verify(&h, &VerifyOptions::default()).outcome;
        let off = verify(
            &h,
            &VerifyOptions {
                prune: false,
                ..VerifyOptions::default()
            },
        )
        .outcome;
        ensure(
            on.is_accept() == off.is_accept(),
            format!("history {i}: {on:?} vs {off:?}"),
        )?;
        accepted += on.is_accept() as usize;
    }

    let (mut clean, mut injected) = (0, 0);
    for seed in 0..240u64 {
        let (h, order) = workload::generate_ordered(&stream_config(seed)).unwrap();
        let mut fragments = workload::split_rounds(&h, &order, 50);
        ensure(fragments.len() == 5, format!("seed {seed}: {} rounds", fragments.len()))?;
        let round = 1 + seed as usize % 4;
        let kind = AnomalyKind::ALL[seed as usize % AnomalyKind::ALL.len()];
        let inject = seed % 2 == 1 && workload::inject_into_round(&mut fragments, round, kind, seed).is_ok();
        let one_shot = verify(&concat(&fragments), &VerifyOptions::default())
            .outcome
            .is_accept();
        let on = final_verdict(&rounds_with(fragments.clone(), true));
        let off = final_verdict(&rounds_with(fragments, false));
        ensure(
            on.1 == one_shot && off.1 == one_shot,
            format!("seed {seed}: one-shot {one_shot}, gc {on:?}, no gc {off:?}"),
        )?;
        if inject {
            ensure(!one_shot, format!("seed {seed}: {kind} accepted"))?;
            ensure(
                on == (round + 1, false) && off == on,
                format!("seed {seed}: {kind} in round {} caught at {on:?} / {off:?}", round + 1),
            )?;
            injected += 1;
        } else {
            clean += 1;
        }
    }
    ensure(
        clean + injected >= 200 && injected >= 80,
        format!("{clean} clean, {injected} injected streams"),
    )?;
    Ok(format!(
        "600 histories ({accepted} accepted) agree with and without pruning; {clean} clean and {injected} injected streams agree"
    ))
}

fn gc_regressions() -> Verdict {
    let cases = [
        ("overwritten read", common::overwritten_read_rounds(), TxnId(2)),
        ("finalized constraint", common::finalized_constraint_rounds(), TxnId(3)),
        ("deleted path", common::deleted_path_rounds(), TxnId(1)),
    ];
    for (name, [round1, round2], kept) in cases {
        let mut v = RoundVerifier::new(RoundConfig::default());
        let r1 = v.feed(round1.clone()).map_err(|e| e.to_string())?;
        ensure(
            r1.outcome == RoundOutcome::Accept && r1.epoch_agree.is_some(),
            format!("{name}: round 1 {r1:?}"),
        )?;
        ensure(v.state().contains(kept), format!("{name}: {kept} deleted"))?;
        let r2 = v.feed(round2.clone()).map_err(|e| e.to_string())?;
        let RoundOutcome::Reject(rej) = r2.outcome else {
            return Err(format!("{name}: round 2 {:?}", r2.outcome));
        };
        ensure(
            rej.cycles().concat().contains(&kept),
            format!("{name}: {kept} not on the cycle: {rej}"),
        )?;
        let whole = concat(&[round1, round2]);
        let report = verify(&whole, &VerifyOptions::default());
        let Outcome::Reject(rej) = &report.outcome else {
            return Err(format!("{name}: one-shot {:?}", report.outcome));
        };
        validate_certificate(&whole, rej, report.encoding.as_ref()).map_err(|e| format!("{name}: {e}"))?;
    }
    Ok("overwritten-read, finalized-constraint and deleted-path patterns rejected after deletion".into())
}

fn rmw_collapse() -> Verdict {
    let mut runs = 0;
    for keys in 1..=10 {
        for total in [100u64, 250, 500, 1000] {
            let h = workload::generate(&WorkloadConfig {
                benchmark: Benchmark::RmwOnly,
                num_sessions: 4,
                txns_per_session: total / 4,
                keys,
                seed: keys as u64 * 1000 + total,
                ..WorkloadConfig::default()
            })
            .unwrap();
            let report = verify(&h, &VerifyOptions::default());
            ensure(
                report.outcome.is_accept(),
                format!("{keys} keys, {total} txns: {:?}", report.outcome),
            )?;
            ensure(
                report.stats.sizes.after_combine == 0 && report.stats.constraints_after_prune == 0,
                format!("{keys} keys, {total} txns: {:?}", report.stats.sizes),
            )?;
            runs += 1;
        }
    }
    Ok(format!("{runs} RMW-only histories, 0 constraints after combining"))
}

fn deletion_effectiveness() -> Verdict {
    let round_size = 200;
    let (h, order) = workload::generate_ordered(&WorkloadConfig {
        benchmark: Benchmark::RmwOnly,
        num_sessions: 10,
        txns_per_session: 500,
        keys: 50,
        fence_every: 20,
        seed: 6,
        ..WorkloadConfig::default()
    })
    .unwrap();
    let mut v = RoundVerifier::new(RoundConfig::default());
    let (mut rounds, mut max_live) = (0, 0);
    for f in workload::split_rounds(&h, &order, round_size) {
        let r = v.feed(f).map_err(|e| e.to_string())?;
        ensure(r.outcome == RoundOutcome::Accept, r.line())?;
        rounds += 1;
        max_live = max_live.max(r.live);
    }
    ensure(rounds >= 20, format!("only {rounds} rounds"))?;
    ensure(max_live <= 4 * round_size, format!("live set reached {max_live}"))?;
    Ok(format!("{rounds} rounds of {round_size}, live set at most {max_live}"))
}

fn timed(benchmark: Benchmark, budget: Duration) -> Result<Duration, String> {
    let h = workload::generate(&WorkloadConfig {
        benchmark,
        num_sessions: 24,
        txns_per_session: 10_000u64.div_ceil(24),
        keys: 10_000,
        seed: 7,
        ..WorkloadConfig::default()
    })
    .unwrap();
    let opts = with_budget(VerifyOptions::default(), Some(budget.as_secs_f64()));
    let start = Instant::now();
    let outcome = verify(&h, &opts).outcome;
    let elapsed = start.elapsed();
    ensure(
        outcome.is_accept(),
        format!("{benchmark}: {outcome:?} after {elapsed:.2?}"),
    )?;
    ensure(elapsed < budget, format!("{benchmark}: {elapsed:.2?}"))?;
    Ok(elapsed)
}

fn performance() -> Verdict {
    let blind = timed(Benchmark::BlindWRw, Duration::from_secs(300))?;
    let rmw = timed(Benchmark::RmwOnly, Duration::from_secs(30))?;
    Ok(format!("10k blindw-rw in {blind:.2?}, 10k rmw-only in {rmw:.2?}"))
}

fn anomaly_battery() -> Verdict {
    let mut summary = Vec::new();
    for kind in AnomalyKind::ALL {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (mut caught, mut tried) = (0, 0);
        while caught < 50 {
            tried += 1;
            ensure(tried <= 500, format!("{kind}: only {caught} injections applied"))?;
            let sessions = rng.gen_range(2..=8);
            let total = rng.gen_range(50..=450u64);
            let h = workload::generate(&WorkloadConfig {
                benchmark: Benchmark::ALL[rng.gen_range(0..4)],
                num_sessions: sessions,
                txns_per_session: total.div_ceil(sessions as u64),
                keys: rng.gen_range(5..=200),
                ops_per_txn: rng.gen_range(2..=8),
                fence_every: [10, 20][rng.gen_range(0..2)],
                read_fence_fraction: 0.0,
                seed: tried,
            })
            .unwrap();
            let Ok(inj) = workload::inject(&h, kind, tried) else {
                continue;
            };
            ensure(
                (50..=500).contains(&inj.history.len()),
                format!("{kind}: {} txns", inj.history.len()),
            )?;
            let report = verify(&inj.history, &VerifyOptions::default());
            let Outcome::Reject(rej) = &report.outcome else {
                return Err(format!("{kind}, seed {tried}: {:?}", report.outcome));
            };
            validate_certificate(&inj.history, rej, report.encoding.as_ref())
                .map_err(|e| format!("{kind}, seed {tried}: {e}"))?;
            caught += 1;
        }
        summary.push(format!("{kind} {caught}/{tried}"));
    }
    Ok(summary.join(", "))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("oracle equivalence", oracle_equivalence),
        ("worked examples", worked_examples),
        ("pruning and gc neutrality", neutrality),
        ("gc counterexample regressions", gc_regressions),
        ("rmw collapse", rmw_collapse),
        ("deletion effectiveness", deletion_effectiveness),
        ("desk-scale performance", performance),
        ("anomaly battery", anomaly_battery),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let result = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("criterion {n}: PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n}: FAIL {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
