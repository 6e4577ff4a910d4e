//! Shared workloads for the benchmarks.

use polycheck_core::workload::{self, Benchmark, WorkloadConfig};
use polycheck_core::History;

/// A one-shot history of about `total` normal transactions.
pub fn history(benchmark: Benchmark, total: u64, sessions: u32, keys: u32) -> History {
    workload::generate(&WorkloadConfig {
        benchmark,
        num_sessions: sessions,
        txns_per_session: total.div_ceil(sessions as u64),
        keys,
        seed: 42,
        ..WorkloadConfig::default()
    })
    .expect("benchmark config is valid")
}

/// Rounds of a streamed history, `round_size` transactions each.
pub fn stream(benchmark: Benchmark, total: u64, sessions: u32, keys: u32, round_size: usize) -> Vec<History> {
    let (h, order) = workload::generate_ordered(&WorkloadConfig {
        benchmark,
        num_sessions: sessions,
        txns_per_session: total.div_ceil(sessions as u64),
        keys,
        seed: 42,
        ..WorkloadConfig::default()
    })
    .expect("benchmark config is valid");
    workload::split_rounds(&h, &order, round_size)
}
