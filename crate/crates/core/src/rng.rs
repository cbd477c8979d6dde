//! Seeded random streams.
//!
//! All randomness in the toolkit comes from ChaCha20 (`rand_chacha`), and
//! real numbers are produced from the raw `u64` stream with the mapping
//! below, so that two implementations fed the same seed agree bit for bit
//! (up to the last-ulp behaviour of the platform's `ln`, `sqrt`, `cos`).
//!
//! - uniform in `[0, 1)`:  `(next_u64 >> 11) * 2^-53`
//! - standard normal: Box–Muller on two consecutive `u64` draws `a, b`:
//!   `u1 = ((a >> 11) + 1) * 2^-53` (in `(0, 1]`),
//!   `u2 = (b >> 11) * 2^-53`,
//!   `r = sqrt(-2 ln u1)`, emitting `r cos(2π u2)` then `r sin(2π u2)`.

use rand::RngCore;
use rand_chacha::ChaCha20Rng;

const TWO_POW_NEG_53: f64 = 1.0 / (1u64 << 53) as f64;

/// Uniform double in `[0, 1)`.
pub fn uniform<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * TWO_POW_NEG_53
}

/// Standard-normal sampler that keeps the second Box–Muller output.
pub struct Gaussian<R: RngCore = ChaCha20Rng> {
    rng: R,
    spare: Option<f64>,
}

impl<R: RngCore> Gaussian<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, spare: None }
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * TWO_POW_NEG_53;
        let u2 = (self.rng.next_u64() >> 11) as f64 * TWO_POW_NEG_53;
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.sample();
        }
    }

    pub fn rng_mut(&mut self) -> &mut R {
        &mut self.rng
    }
}
