//! Deterministic RNG stream derivation. Every randomized procedure derives
//! one ChaCha stream per logical unit of work (trial, recording, speaker)
//! from a master seed and a stream/substream counter pair, so parallel
//! execution order cannot change results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub const STREAM_ADI_TRIAL: u64 = 1;
pub const STREAM_SYNTH_DOMAIN: u64 = 2;
pub const STREAM_SYNTH_RECORDING: u64 = 3;
pub const STREAM_SYNTH_PLDA: u64 = 4;
pub const STREAM_ADI_TABLE: u64 = 5;

pub fn derive_rng(seed: u64, stream: u64, substream: u64) -> ChaCha20Rng {
    let mut bytes = [0u8; 32];
    bytes[0..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&stream.to_le_bytes());
    bytes[16..24].copy_from_slice(&substream.to_le_bytes());
    ChaCha20Rng::from_seed(bytes)
}
