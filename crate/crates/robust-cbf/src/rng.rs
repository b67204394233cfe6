//! Deterministic pseudo-random numbers for sampling checks and scenario
//! seeding.
//!
//! The generator is xorshift64* (shifts 12/25/27, multiplier
//! 0x2545F4914F6CDD1D) seeded through one round of splitmix64, so a seed
//! fully determines every draw. Gaussians come from Box–Muller and
//! uniform ball points from a normalized Gaussian direction with radius
//! `U^(1/p)`.

use nalgebra::DVector;

#[derive(Debug, Clone)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        // splitmix64 scramble; guards against the forbidden all-zero state.
        let mut z = seed.wrapping_add(0x9E3779B97F4A7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^= z >> 31;
        Self {
            state: if z == 0 { 0x9E3779B97F4A7C15 } else { z },
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545F4914F6CDD1D)
    }

    /// Uniform draw in `[0, 1)` using the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box–Muller (cosine branch).
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = (1.0 - self.next_f64()).max(f64::MIN_POSITIVE);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn gaussian_vector(&mut self, len: usize) -> DVector<f64> {
        DVector::from_fn(len, |_, _| self.next_gaussian())
    }

    /// Uniform point in the closed unit ball of dimension `dim`.
    pub fn ball_point(&mut self, dim: usize) -> DVector<f64> {
        loop {
            let dir = self.gaussian_vector(dim);
            let norm = dir.norm();
            if norm > 1e-12 {
                let radius = self.next_f64().powf(1.0 / dim as f64);
                return dir * (radius / norm);
            }
        }
    }
}
