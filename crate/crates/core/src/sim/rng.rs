//! Deterministic, counter-based RNG streams.
//!
//! Each stream is keyed by `(master_seed, node_scope, purpose_tag)`. Distinct
//! keys yield statistically independent streams that never share state, so
//! trials can run concurrently without coordination, and replaying a master
//! seed reproduces every draw bit-for-bit.

use std::convert::Infallible;

use rand::{SeedableRng, TryRng};
use rand_chacha::ChaCha8Rng;

/// One derived random stream.
///
/// The underlying generator is counter-mode ChaCha8; `draws` tracks how many
/// `u64` values have been taken from the stream.
#[derive(Clone, Debug)]
pub struct RngStream {
    rng: ChaCha8Rng,
    node_scope: u64,
    purpose_tag: u32,
    draws: u64,
}

impl RngStream {
    pub fn node_scope(&self) -> u64 {
        self.node_scope
    }

    pub fn purpose_tag(&self) -> u32 {
        self.purpose_tag
    }

    /// Number of `u64` draws taken so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }
}

impl TryRng for RngStream {
    type Error = Infallible;

    #[inline]
    fn try_next_u32(&mut self) -> Result<u32, Infallible> {
        self.draws += 1;
        self.rng.try_next_u32()
    }

    #[inline]
    fn try_next_u64(&mut self) -> Result<u64, Infallible> {
        self.draws += 1;
        self.rng.try_next_u64()
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), Infallible> {
        self.draws += dest.len().div_ceil(8) as u64;
        self.rng.try_fill_bytes(dest)
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the stream keyed by `(master_seed, node_scope, purpose_tag)`.
pub fn derive_stream(master_seed: u64, node_scope: u64, purpose_tag: u32) -> RngStream {
    let mut state = master_seed;
    let a = splitmix64(&mut state);
    state ^= node_scope.wrapping_mul(0xff51_afd7_ed55_8ccd);
    let b = splitmix64(&mut state);
    state ^= u64::from(purpose_tag).wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    let c = splitmix64(&mut state);
    let d = splitmix64(&mut state);

    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&a.to_le_bytes());
    key[8..16].copy_from_slice(&b.to_le_bytes());
    key[16..24].copy_from_slice(&c.to_le_bytes());
    key[24..32].copy_from_slice(&d.to_le_bytes());

    RngStream {
        rng: ChaCha8Rng::from_seed(key),
        node_scope,
        purpose_tag,
        draws: 0,
    }
}

/// Derives a fresh 64-bit seed from the keyed stream; convenient for seeding
/// nested runs (per-trial, per-stage) without sharing stream state.
pub fn derive_seed(master_seed: u64, node_scope: u64, purpose_tag: u32) -> u64 {
    use rand::Rng;
    derive_stream(master_seed, node_scope, purpose_tag).next_u64()
}

/// Handle a simulation run hands to each node so it can derive its own
/// streams without seeing the streams of other nodes.
#[derive(Clone, Copy, Debug)]
pub struct NodeSeed {
    master_seed: u64,
    node_scope: u64,
}

impl NodeSeed {
    pub fn new(master_seed: u64, node_scope: u64) -> Self {
        NodeSeed {
            master_seed,
            node_scope,
        }
    }

    pub fn stream(&self, purpose_tag: u32) -> RngStream {
        derive_stream(self.master_seed, self.node_scope, purpose_tag)
    }
}
