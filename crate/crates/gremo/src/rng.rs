//! Deterministic stream derivation from a single master seed.
//!
//! Every random decision in the pipeline draws from a ChaCha8 stream keyed by
//! (master seed, stream id, counter), so adding draws to one consumer never
//! shifts the values seen by another.

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub const STREAM_INIT: u64 = 1;
pub const STREAM_EPOCH: u64 = 2;
pub const STREAM_SPLIT: u64 = 3;
pub const STREAM_TRIAL_SEED: u64 = 4;
pub const STREAM_TRIAL_SAMPLE: u64 = 5;
pub const STREAM_SYNTH: u64 = 6;

/// SplitMix64 finalizer; bijective on u64.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from (master, stream, counter).
pub fn split(master: u64, stream: u64, counter: u64) -> u64 {
    let a = mix(counter.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let b = mix(stream ^ a);
    mix(master ^ b)
}

/// ChaCha8 generator for one derived stream.
pub fn stream_rng(master: u64, stream: u64, counter: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(split(master, stream, counter))
}
