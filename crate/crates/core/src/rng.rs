//! Counter-based pseudo-randomness.
//!
//! Every random quantity in the crate is a pure function of
//! (master seed, stream, counter), so results are independent of evaluation
//! order and of how work is split across threads. Streams separate uses of
//! the same seed (edge weights, growth clocks, replicas) without coupling.

/// Stream id for environment edge weights.
pub const STREAM_EDGE_WEIGHTS: u64 = 0x01;
/// Base stream id for growth clocks; type `i` uses `STREAM_CLOCK_BASE + i`.
pub const STREAM_CLOCK_BASE: u64 = 0x100;
/// Stream id for deriving per-replica seeds from an experiment seed.
pub const STREAM_REPLICA: u64 = 0x5eed;

/// SplitMix64 finalizer; bijective on u64.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Hashes (seed, stream, counter) to 64 uniform bits.
///
/// For fixed seed and stream this is injective in the counter, so distinct
/// edges (or replicas) can never collide.
#[inline]
pub fn mix(seed: u64, stream: u64, counter: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed).wrapping_add(stream)).wrapping_add(counter))
}

/// Maps 64 bits to a double in the open interval (0, 1).
///
/// Uses the top 52 bits shifted to the midpoints of the 2^52 subintervals;
/// every midpoint k + 0.5 with k < 2^52 is exactly representable, so neither
/// endpoint is attainable and quantile transforms stay finite.
#[inline]
pub fn unit_open(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / 4503599627370496.0)
}
