//! Deterministic derivation of per-run random streams.
//!
//! Every simulation run owns three independent streams (process noise,
//! channel, dictionary generation). Their seeds are derived from the
//! master seed by a fixed splitmix64-based mixing of
//! `(master_seed, run_index, stream kind)`. Changing this mixing
//! invalidates previously recorded results, so it is pinned here.

/// The independent random streams a run consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    /// Process noise `w(k)`.
    Noise,
    /// Packet dropouts and network-state transitions.
    Channel,
    /// Dictionary generation.
    Dictionary,
}

impl StreamKind {
    fn tag(self) -> u64 {
        match self {
            StreamKind::Noise => 1,
            StreamKind::Channel => 2,
            StreamKind::Dictionary => 3,
        }
    }
}

/// One splitmix64 step.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `kind` of run `run_index` under `master_seed`.
pub fn derive_stream(master_seed: u64, run_index: u64, kind: StreamKind) -> u64 {
    splitmix64(splitmix64(splitmix64(master_seed) ^ run_index) ^ kind.tag())
}

/// Derive a child seed from an already-derived seed (e.g. one dictionary
/// per network state from a single dictionary seed).
pub fn derive_child(seed: u64, lane: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ lane)
}
