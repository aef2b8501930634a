//! Reproducible random streams.
//!
//! Every replicate, table or cell draws from its own ChaCha8 stream. The
//! key comes from the user seed and the 64-bit stream id from a hash of the
//! index path, so results depend only on `(seed, path)` and not on how work
//! is scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};

/// Independent generator for the index path `path` under `seed`.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = 0x6a09_e667_f3bc_c908u64;
    for &p in path {
        h = splitmix64(h ^ splitmix64(p));
    }
    rng.set_stream(h);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Poisson draw that accepts a zero mean.
pub fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite positive mean").sample(rng) as u64
}

/// Zero-inflated Poisson draw: 0 with probability `p0`, else Poisson(`mean`).
pub fn zip<R: Rng + ?Sized>(mean: f64, p0: f64, rng: &mut R) -> u64 {
    if p0 > 0.0 && rng.random::<f64>() < p0 {
        return 0;
    }
    poisson(mean, rng)
}

pub fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

/// Multinomial draw by sequential conditional binomials. `probs` need not be
/// normalised; `out` is overwritten.
pub fn multinomial<R: Rng + ?Sized>(n: u64, probs: &[f64], rng: &mut R, out: &mut [u64]) {
    assert_eq!(probs.len(), out.len());
    let mut left = n;
    let mut mass: f64 = probs.iter().sum();
    let last = probs.iter().rposition(|&p| p > 0.0);
    for (k, (&p, o)) in probs.iter().zip(out.iter_mut()).enumerate() {
        if left == 0 || p <= 0.0 {
            *o = 0;
            continue;
        }
        let x = if Some(k) == last { left } else { binomial(left, (p / mass).min(1.0), rng) };
        *o = x;
        left -= x;
        mass -= p;
    }
}
