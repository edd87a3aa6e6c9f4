//! Seeded random streams.
//!
//! Every Monte-Carlo campaign draws its samples in fixed-size chunks, each
//! chunk from its own ChaCha stream keyed by `(seed, stream, chunk)`. Partial
//! sums are reduced in chunk order, so results depend only on the seed and the
//! sample count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Samples per chunk.
pub const CHUNK: usize = 1 << 14;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream id for chunk `chunk` of the sub-campaign `tag`.
pub fn chunk_stream(seed: u64, tag: u64, chunk: u64) -> ChaCha8Rng {
    stream(seed, tag.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ chunk)
}

/// Uniform sample in `[lo, hi)`.
#[inline]
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Standard normal deviate (Box–Muller, one of the pair).
pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            let v: f64 = rng.random();
            return (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos();
        }
    }
}

/// Uniform point on the unit sphere in `dim` real dimensions.
pub fn unit_sphere<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-300 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Uniform point in the closed unit ball in `dim` real dimensions.
pub fn unit_ball<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    let dir = unit_sphere(rng, dim);
    let r = rng.random::<f64>().powf(1.0 / dim as f64);
    dir.into_iter().map(|x| x * r).collect()
}
