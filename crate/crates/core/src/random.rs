//! Seeded random sources.
//!
//! All randomness in the crate flows through [`seeded`] so every artifact is
//! reproducible from the integers recorded in its config. Independent
//! sub-streams (per restart, per sample batch) are derived with
//! [`derive_seed`] rather than by sharing one generator across threads.

use crate::linalg::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer applied to `seed ^ stream`, giving decorrelated
/// seeds for numbered sub-streams.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// `rows x cols` matrix of i.i.d. N(0, 1) entries, drawn in row-major order.
pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    let mut m = Mat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = normal(rng);
        }
    }
    m
}

/// `n x k` matrix with orthonormal columns, Haar distributed (QR of a
/// Gaussian matrix with the sign of `R`'s diagonal folded into `Q`).
pub fn orthonormal_frame<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Mat {
    let g = gaussian_matrix(rng, n, k);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn orthogonal_matrix<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Mat {
    orthonormal_frame(rng, n, n)
}

/// Matrix of the given shape with unit Frobenius norm and uniformly random
/// direction.
pub fn unit_direction<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    loop {
        let g = gaussian_matrix(rng, rows, cols);
        let n = g.norm();
        if n > 0.0 {
            return g / n;
        }
    }
}
