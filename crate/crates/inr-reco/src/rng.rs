//! Seeded, portable random number generation.
//!
//! Every stochastic component (mask selection, feature matrices, network
//! initialization, simulated noise) draws from the xoshiro256** generator
//! seeded through splitmix64, with a fixed draw order. Results are therefore
//! identical across platforms for the same 64-bit seed, which the rest of
//! the engine relies on for reproducible reconstructions.

/// splitmix64: used to expand a single 64-bit seed into generator state and
/// to derive independent sub-seeds for the engine's components.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
}

/// xoshiro256** with the published update rule.
#[derive(Debug, Clone)]
pub struct Xoshiro256 {
    s: [u64; 4],
}

impl Xoshiro256 {
    /// Seed the four state words from splitmix64, as recommended by the
    /// generator's authors.
    pub fn seeded(seed: u64) -> Self {
        let mut sm = SplitMix64::new(seed);
        Self {
            s: [sm.next_u64(), sm.next_u64(), sm.next_u64(), sm.next_u64()],
        }
    }

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

    /// Uniform double in [0, 1) from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform double in [lo, hi).
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// One Box-Muller pair of independent standard normals. Consumes exactly
    /// two uniform draws, so the draw order is fully determined by the call
    /// sequence.
    pub fn next_normal_pair(&mut self) -> (f64, f64) {
        // 1 - u in (0, 1] keeps the logarithm finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        (r * theta.cos(), r * theta.sin())
    }
}

/// Named sub-seeds derived from one master seed. The derivation order is
/// fixed, so each component is independently reproducible.
#[derive(Debug, Clone, Copy)]
pub struct SeedStreams {
    pub mask: u64,
    pub features: u64,
    pub features_sens: u64,
    pub image_net: u64,
    pub sens_net: u64,
    pub noise: u64,
    pub phantom: u64,
}

impl SeedStreams {
    pub fn from_master(seed: u64) -> Self {
        let mut sm = SplitMix64::new(seed);
        Self {
            mask: sm.next_u64(),
            features: sm.next_u64(),
            features_sens: sm.next_u64(),
            image_net: sm.next_u64(),
            sens_net: sm.next_u64(),
            noise: sm.next_u64(),
            phantom: sm.next_u64(),
        }
    }
}
