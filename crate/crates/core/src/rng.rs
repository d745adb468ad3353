//! Reproducible substreams.
//!
//! Partition `i` of a run seeded with `seed` draws from ChaCha8 stream `i`,
//! so results depend only on `(seed, partitions)` and never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type Stream = ChaCha8Rng;

/// Independent stream `index` for `seed`.
pub fn substream(seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Child seed derived from a parent seed and a label, for nesting runs.
pub fn child_seed(seed: u64, label: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Split `total` work items over `partitions` as evenly as possible.
pub fn split_budget(total: u64, partitions: usize) -> Vec<u64> {
    let k = partitions.max(1) as u64;
    (0..k).map(|i| total / k + u64::from(i < total % k)).collect()
}

/// Run `work(partition_index, share, stream)` on every partition in parallel
/// and return the results in partition order.
pub fn run_partitioned<T, F>(seed: u64, partitions: usize, total: u64, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, u64, &mut Stream) -> T + Sync,
{
    split_budget(total, partitions)
        .into_par_iter()
        .enumerate()
        .map(|(i, share)| {
            let mut rng = substream(seed, i as u64);
            work(i, share, &mut rng)
        })
        .collect()
}
