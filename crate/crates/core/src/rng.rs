//! Counter-based random streams.
//!
//! Every random quantity in a run is addressed by a key path such as
//! `master -> replicate -> movement -> step` plus a per-node counter. A draw is
//! a pure function of its address, so the order in which workers evaluate
//! draws never changes a result.

use rand::RngCore;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
const ROOT_SALT: u64 = 0x6a09_e667_f3bc_c908;

/// SplitMix64 output finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Maps a raw 64-bit draw to a uniform double in `[0, 1)`.
#[inline]
pub fn unit_f64(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// The purpose a stream is used for. Each role gets an independent subtree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamRole {
    Grid,
    Init,
    Movement,
    Transmission,
    Trial,
}

impl StreamRole {
    fn label(self) -> u64 {
        match self {
            StreamRole::Grid => 1,
            StreamRole::Init => 2,
            StreamRole::Movement => 3,
            StreamRole::Transmission => 4,
            StreamRole::Trial => 5,
        }
    }
}

/// A node in the hierarchical key tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    /// Key tree root for a user-facing seed.
    pub fn root(seed: u64) -> Self {
        StreamKey(mix64(seed ^ ROOT_SALT))
    }

    /// Wraps an already-derived key (e.g. a per-replicate seed from a manifest).
    pub fn from_raw(raw: u64) -> Self {
        StreamKey(raw)
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    pub fn child(self, label: u64) -> Self {
        StreamKey(mix64(
            self.0 ^ mix64(label.wrapping_mul(GOLDEN_GAMMA).wrapping_add(ROOT_SALT)),
        ))
    }

    pub fn role(self, role: StreamRole) -> Self {
        self.child(role.label())
    }

    /// The `counter`-th draw of this stream.
    #[inline]
    pub fn draw(self, counter: u64) -> u64 {
        mix64(
            self.0
                .wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)),
        )
    }

    /// Sequential generator over this key, for consumers that want an `RngCore`.
    pub fn rng(self) -> CounterRng {
        CounterRng {
            key: self,
            counter: 0,
        }
    }
}

/// Per-replicate seed derived from the master seed. Pure in both arguments.
pub fn replicate_seed(master_seed: u64, replicate: u64) -> u64 {
    StreamKey::root(master_seed).child(replicate).raw()
}

#[derive(Debug, Clone)]
pub struct CounterRng {
    key: StreamKey,
    counter: u64,
}

impl RngCore for CounterRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        let x = self.key.draw(self.counter);
        self.counter += 1;
        x
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
