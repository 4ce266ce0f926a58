//! Counter-based deterministic random streams.
//!
//! Every stochastic quantity in the lab is drawn from an [`RngStream`]
//! addressed by `(seed, stream id)`. Streams with the same address always
//! replay the same sequence, which is what lets matched trials reuse the
//! exact same network realizations across different policies. Stream ids
//! are built from a purpose tag and an episode index so the layout draw of
//! episode 17 never aliases the shadowing draw of episode 17.
//!
//! The generator is SplitMix64 in counter mode: output `i` is the finalizer
//! applied to `key + i*GOLDEN`, so any draw can be reproduced without
//! replaying the ones before it.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A deterministic random stream identified by `(seed, stream_id)`.
#[derive(Clone, Debug)]
pub struct RngStream {
    key: u64,
    ctr: u64,
    cached_normal: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let key = mix(mix(seed ^ GOLDEN) ^ mix(stream_id ^ 0x6A09_E667_F3BC_C909));
        Self {
            key,
            ctr: 0,
            cached_normal: None,
        }
    }

    /// Stream addressed by a purpose tag and an episode index
    /// (`stream_id = purpose << 48 | episode`).
    pub fn for_purpose(seed: u64, purpose: u16, episode: u64) -> Self {
        debug_assert!(episode < 1 << 48);
        Self::new(seed, (u64::from(purpose) << 48) | (episode & ((1 << 48) - 1)))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.ctr = self.ctr.wrapping_add(1);
        mix(self.key.wrapping_add(self.ctr.wrapping_mul(GOLDEN)))
    }

    /// Uniform draw in `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`.
    #[inline]
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Unbiased uniform integer in `[0, n)`.
    pub fn uniform_int(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        let limit = u64::MAX - u64::MAX % n;
        loop {
            let x = self.next_u64();
            if x < limit {
                return x % n;
            }
        }
    }

    /// Standard normal draw (Box-Muller; the paired value is cached).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        // u1 in (0, 1] keeps the log finite
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform();
        let r = crate::math::sqrt(-2.0 * crate::math::ln(u1));
        let theta = 2.0 * core::f64::consts::PI * u2;
        self.cached_normal = Some(r * crate::math::sin(theta));
        r * crate::math::cos(theta)
    }

    /// Complex normal draw with unit variance per complex dimension
    /// (real and imaginary parts each have variance 1/2).
    #[inline]
    pub fn complex_normal(&mut self) -> (f64, f64) {
        const HALF_SQRT: f64 = core::f64::consts::FRAC_1_SQRT_2;
        (HALF_SQRT * self.normal(), HALF_SQRT * self.normal())
    }
}
