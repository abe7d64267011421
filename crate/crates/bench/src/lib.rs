//! Shared fixtures for the benchmarks.

use scmc_core::corpus::synthetic_trace;
use scmc_core::Trace;

/// `count` synthetic unambiguous causal traces from a fixed seed.
pub fn traces(count: usize, n: u32, m: u32, len: usize, seed: u64) -> Vec<Trace> {
    let mut x = seed;
    let mut pick = move |k: usize| {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((x >> 33) as usize) % k
    };
    (0..count).map(|_| synthetic_trace(n, m, len, &mut pick)).collect()
}
