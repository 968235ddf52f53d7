//! Deterministic pseudorandom source for the shot simulator.
//!
//! The generator is xoshiro256** (Blackman & Vigna), seeded by expanding a
//! single `u64` through SplitMix64. Both algorithms are written out here, in
//! full, on purpose: the simulator's contract is that a seed plus a request
//! stream reproduces measurement counts bit-exactly, across platforms and
//! across reimplementations in other languages. A platform or library
//! generator whose sequence we do not control cannot give that guarantee.
//!
//! Floating-point draws use the standard 53-bit construction
//! `(x >> 11) * 2^-53`, which yields doubles uniform on `[0, 1)` and is
//! exactly reproducible everywhere IEEE-754 holds.

/// Expands one 64-bit seed into a stream of well-mixed 64-bit values.
///
/// SplitMix64 with the published constants; used only to initialize
/// [`Xoshiro256StarStar`] so that nearby seeds (1, 2, 3, ...) still produce
/// unrelated generator states.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    /// Creates the expander with the given seed.
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Returns the next 64-bit value of the sequence.
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

/// xoshiro256** pseudorandom generator (period 2^256 − 1).
#[derive(Debug, Clone)]
pub struct Xoshiro256StarStar {
    s: [u64; 4],
}

impl Xoshiro256StarStar {
    /// Builds a generator from a single seed via SplitMix64 expansion.
    ///
    /// The all-zero state (the one state xoshiro cannot leave) is unreachable
    /// from SplitMix64 output for practical purposes, but it is guarded
    /// against anyway so the constructor is total.
    pub fn new(seed: u64) -> Self {
        let mut sm = SplitMix64::new(seed);
        let mut s = [0u64; 4];
        for slot in &mut s {
            *slot = sm.next_u64();
        }
        if s == [0; 4] {
            s[0] = 0x9E37_79B9_7F4A_7C15;
        }
        Self { s }
    }

    /// Returns the next 64-bit value of the sequence.
    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Returns a double uniform on `[0, 1)` built from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
