//! Per-replicate random streams and the binomial/multinomial samplers.
//!
//! Each replicate draws from its own ChaCha8 stream selected by
//! `(seed, replicate index)`, so results do not depend on how replicates are
//! scheduled across workers.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::special::{binomial_cdf, ln_choose};

/// Random stream dedicated to one replicate.
#[derive(Debug, Clone)]
pub struct ReplicateRng {
    inner: ChaCha8Rng,
}

impl ReplicateRng {
    pub fn new(seed: u64, replicate: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(replicate);
        ReplicateRng { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Draws from Binomial(n, p) by inverting the CDF at a single uniform.
///
/// The search starts at the mode, where the CDF is evaluated exactly through
/// the incomplete beta function, and walks towards the target using the pmf
/// recurrence. For `p > 1/2` the complementary count is sampled.
pub fn sample_binomial(rng: &mut ReplicateRng, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    if p > 0.5 {
        return n - sample_binomial(rng, n, 1.0 - p);
    }
    let u = rng.uniform();
    let q = 1.0 - p;
    let odds = p / q;
    let mode = (((n + 1) as f64 * p).floor() as u64).min(n);
    let mut pmf = (ln_choose(n, mode) + mode as f64 * p.ln() + (n - mode) as f64 * q.ln()).exp();
    let mut cdf = binomial_cdf(mode, n, p);
    let mut x = mode;

    if u <= cdf {
        // smallest x with F(x) >= u lies at or below the mode
        while x > 0 {
            let below = cdf - pmf;
            if u > below || below <= 0.0 {
                break;
            }
            cdf = below;
            pmf *= x as f64 / ((n - x + 1) as f64 * odds);
            x -= 1;
        }
    } else {
        while u > cdf && x < n {
            pmf *= (n - x) as f64 / (x + 1) as f64 * odds;
            x += 1;
            cdf += pmf;
            if pmf == 0.0 {
                break;
            }
        }
    }
    x
}

/// Draws the four cell counts from Multinomial(n, probs) as a chain of
/// conditional binomials.
pub fn sample_multinomial4(rng: &mut ReplicateRng, n: u64, probs: [f64; 4]) -> [u64; 4] {
    let mut out = [0u64; 4];
    let mut remaining = n;
    let mut mass = 1.0;
    for i in 0..3 {
        if remaining == 0 {
            break;
        }
        let p = if mass > 0.0 { (probs[i] / mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = sample_binomial(rng, remaining, p);
        out[i] = k;
        remaining -= k;
        mass -= probs[i];
    }
    out[3] = remaining;
    out
}
