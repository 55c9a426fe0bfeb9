//! Regularity of random initialization: how often `σ_min(V^T Ū) ≥ ρ` for a
//! fixed orthonormal `V` of width `s` and `Ū` with i.i.d. `N(0, 1/r_hat)`
//! entries.

use crate::error::{Error, Result};
use crate::linalg;
use crate::random;
use rayon::prelude::*;

#[derive(Clone, Debug)]
pub struct InitRegularity {
    pub trials: usize,
    pub successes: usize,
    pub success_fraction: f64,
    pub min_sigma: f64,
}

/// By rotation invariance of the Gaussian, `V` is taken to be the first `s`
/// standard basis vectors, so `V^T Ū` is the top `s x r_hat` block of `Ū`.
pub fn random_init_regularity(
    d: usize,
    r_hat: usize,
    s: usize,
    rho: f64,
    trials: usize,
    seed: u64,
) -> Result<InitRegularity> {
    if s == 0 || s > r_hat.min(d) || r_hat > d {
        return Err(Error::dim(format!("need 1 <= s <= r_hat <= d, got s = {s}, r_hat = {r_hat}, d = {d}")));
    }
    if trials == 0 {
        return Err(Error::dim("trials must be at least 1"));
    }
    let scale = 1.0 / (r_hat as f64).sqrt();
    let sigmas: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = random::seeded(random::derive_seed(seed, i as u64));
            let u_bar = random::gaussian_matrix(&mut rng, d, r_hat) * scale;
            linalg::sigma_min(&u_bar.rows(0, s).into_owned())
        })
        .collect();
    let successes = sigmas.iter().filter(|v| **v >= rho).count();
    Ok(InitRegularity {
        trials,
        successes,
        success_fraction: successes as f64 / trials as f64,
        min_sigma: sigmas.iter().copied().fold(f64::INFINITY, f64::min),
    })
}
