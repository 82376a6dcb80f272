// Copyright 2026 The nvmetro Authors
// SPDX-License-Identifier: Apache-2.0

//! Seeded, splittable randomness.
//!
//! Each [`Rng`] is a ChaCha8 stream keyed by a 64-bit seed. Parallel work
//! never shares a generator: it calls [`Rng::derive`] with a stable key
//! (sample index, estimate index, ...) so results do not depend on how work
//! is scheduled across threads.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};

use crate::error::{Error, Result};

pub const ALGORITHM: &str = "chacha8";

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn algorithm(&self) -> &'static str {
        ALGORITHM
    }

    /// Independent child generator, a pure function of `(seed, key)`.
    pub fn derive(&self, key: u64) -> Rng {
        Rng::new(splitmix64(self.seed ^ splitmix64(key)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn standard_normal(&mut self) -> f64 {
        Normal::new(0.0, 1.0)
            .expect("unit normal is valid")
            .sample(&mut self.inner)
    }

    pub fn binomial(&mut self, n: u64, p: f64) -> Result<u64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!(
                "binomial probability {p} outside [0, 1]"
            )));
        }
        let dist = Binomial::new(n, p)
            .map_err(|e| Error::InvalidParameter(format!("binomial({n}, {p}): {e}")))?;
        Ok(dist.sample(&mut self.inner))
    }
}

/// `n` i.i.d. normal draws.
pub fn gaussian_sample(rng: &mut Rng, mean: f64, sigma: f64, n: usize) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "standard deviation must be finite and non-negative, got {sigma}"
        )));
    }
    let dist = Normal::new(mean, sigma)
        .map_err(|e| Error::InvalidParameter(format!("normal({mean}, {sigma}): {e}")))?;
    Ok((0..n).map(|_| dist.sample(&mut rng.inner)).collect())
}
