use polycheck_core::oracle::{brute_force_polygraph_bounded, oracle_serializable, replay};
use polycheck_core::workload::{random_history, RandomShape};
use polycheck_core::{codec, verify, Outcome, VerifyOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn check(seed: u64, fences: bool, session_order: bool, prune: bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = random_history(
        &mut rng,
        &RandomShape {
            fences,
            ..RandomShape::default()
        },
    );
    let expected = oracle_serializable(&h, session_order).unwrap();
    let opts = VerifyOptions {
        session_order,
        prune,
        ..VerifyOptions::default()
    };
    let got = verify(&h, &opts).outcome;
    match &got {
        Outcome::Accept { schedule } => assert!(replay(&h, schedule), "bad schedule for\n{}", codec::serialize(&h)),
        Outcome::Reject(r) => {
            for c in r.certificates() {
                assert!(c.is_closed());
            }
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(
        got.is_accept(),
        expected,
        "seed {seed} sessions={session_order} prune={prune}\n{}",
        codec::serialize(&h)
    );
}

#[test]
fn verifier_matches_permutation_oracle() {
    for seed in 0..1500 {
        let fences = seed % 2 == 0;
        check(seed, fences, true, true);
        check(seed, fences, false, true);
        check(seed, fences, true, false);
    }
}

#[test]
fn classic_polygraph_matches_permutation_oracle() {
    let mut compared = 0;
    for seed in 0..600 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_history(&mut rng, &RandomShape::default());
        for sessions in [false, true] {
            let Ok(bf) = brute_force_polygraph_bounded(&h, sessions, 16) else {
                continue;
            };
            compared += 1;
            assert_eq!(bf, oracle_serializable(&h, sessions).unwrap(), "seed {seed}");
        }
    }
    assert!(compared > 500);
}
