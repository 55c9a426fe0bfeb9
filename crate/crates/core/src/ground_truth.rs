//! Planted low-rank ground truths `Z* = X X^T`.
//!
//! Two constructions are supported. `Orthogonalized` builds `X = Q diag(σ)`
//! from a seeded orthonormal frame, so the spectrum is exactly the requested
//! one. `Gaussian` draws i.i.d. standard-normal entries and records whatever
//! spectrum the sample has.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::random;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthMode {
    Orthogonalized,
    Gaussian,
}

impl std::fmt::Display for TruthMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TruthMode::Orthogonalized => f.write_str("orthogonalized"),
            TruthMode::Gaussian => f.write_str("gaussian"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GroundTruth {
    d: usize,
    mode: TruthMode,
    seed: u64,
    sigmas: Vec<f64>,
    x: Mat,
    /// Left singular vectors of `X`, ordered like `sigmas`.
    basis: Mat,
    /// Orthonormal complement of `basis` in R^d.
    complement: Mat,
}

/// Top-`s` block of a ground truth.
#[derive(Clone, Debug)]
pub struct Truncation {
    pub s: usize,
    pub x_s: Mat,
    pub v_xs: Mat,
    pub v_xs_perp: Mat,
}

#[derive(Serialize, Deserialize)]
struct GroundTruthDoc {
    d: usize,
    r_star: usize,
    mode: TruthMode,
    seed: u64,
    sigmas: Vec<f64>,
    x: Vec<f64>,
}

pub fn make_ground_truth(d: usize, sigmas: &[f64], mode: TruthMode, seed: u64) -> Result<GroundTruth> {
    match mode {
        TruthMode::Orthogonalized => GroundTruth::orthogonalized(d, sigmas, seed),
        TruthMode::Gaussian => GroundTruth::gaussian(d, sigmas.len(), seed),
    }
}

fn check_spectrum(sigmas: &[f64]) -> Result<()> {
    if sigmas.is_empty() {
        return Err(Error::InvalidSpectrum("at least one singular value is required".into()));
    }
    if let Some(bad) = sigmas.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::InvalidSpectrum(format!("singular value {bad} is not positive")));
    }
    if let Some(w) = sigmas.windows(2).find(|w| w[0] <= w[1]) {
        return Err(Error::InvalidSpectrum(format!(
            "singular values must be strictly decreasing, got {} then {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

impl GroundTruth {
    pub fn orthogonalized(d: usize, sigmas: &[f64], seed: u64) -> Result<Self> {
        check_spectrum(sigmas)?;
        let r = sigmas.len();
        if d < r {
            return Err(Error::dim(format!("d = {d} is smaller than r_star = {r}")));
        }
        let q = random::orthonormal_frame(&mut random::seeded(seed), d, r);
        let x = &q * Mat::from_diagonal(&DVector::from_column_slice(sigmas));
        Ok(Self::assemble(d, TruthMode::Orthogonalized, seed, sigmas.to_vec(), x, q))
    }

    pub fn gaussian(d: usize, r_star: usize, seed: u64) -> Result<Self> {
        if r_star == 0 {
            return Err(Error::dim("r_star must be at least 1"));
        }
        if d < r_star {
            return Err(Error::dim(format!("d = {d} is smaller than r_star = {r_star}")));
        }
        let x = random::gaussian_matrix(&mut random::seeded(seed), d, r_star);
        Self::from_matrix(x, TruthMode::Gaussian, seed)
    }

    fn from_matrix(x: Mat, mode: TruthMode, seed: u64) -> Result<Self> {
        let d = x.nrows();
        let dec = linalg::svd(&x);
        check_spectrum(&dec.s)?;
        Ok(Self::assemble(d, mode, seed, dec.s, x, dec.u))
    }

    fn assemble(d: usize, mode: TruthMode, seed: u64, sigmas: Vec<f64>, x: Mat, basis: Mat) -> Self {
        let complement = linalg::orth_complement(&basis);
        GroundTruth {
            d,
            mode,
            seed,
            sigmas,
            x,
            basis,
            complement,
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn r_star(&self) -> usize {
        self.sigmas.len()
    }

    pub fn mode(&self) -> TruthMode {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn x(&self) -> &Mat {
        &self.x
    }

    /// Left singular basis of `X` (`d x r_star`).
    pub fn basis(&self) -> &Mat {
        &self.basis
    }

    pub fn z_star(&self) -> Mat {
        linalg::outer_gram(&self.x)
    }

    /// `||X||`, the spectral norm.
    pub fn norm(&self) -> f64 {
        self.sigmas[0]
    }

    pub fn frob_norm(&self) -> f64 {
        self.sigmas.iter().map(|s| s * s).sum::<f64>().sqrt()
    }

    /// Smallest gap `σ_s² − σ_{s+1}²` with `σ_{r*+1} = 0`.
    pub fn tau(&self) -> f64 {
        let sq: Vec<f64> = self.sigmas.iter().map(|s| s * s).chain(std::iter::once(0.0)).collect();
        sq.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min)
    }

    /// `σ_1² / τ`.
    pub fn kappa(&self) -> f64 {
        self.sigmas[0] * self.sigmas[0] / self.tau()
    }

    pub fn truncate(&self, s: usize) -> Result<Truncation> {
        let r = self.r_star();
        if s == 0 || s > r {
            return Err(Error::dim(format!("truncation rank {s} outside 1..={r}")));
        }
        let v_xs = self.basis.columns(0, s).into_owned();
        let x_s = &v_xs * Mat::from_diagonal(&DVector::from_column_slice(&self.sigmas[..s]));
        let tail = self.basis.columns(s, r - s);
        let mut v_xs_perp = Mat::zeros(self.d, self.d - s);
        v_xs_perp.columns_mut(0, r - s).copy_from(&tail);
        v_xs_perp.columns_mut(r - s, self.d - r).copy_from(&self.complement);
        Ok(Truncation { s, x_s, v_xs, v_xs_perp })
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = GroundTruthDoc {
            d: self.d,
            r_star: self.r_star(),
            mode: self.mode,
            seed: self.seed,
            sigmas: self.sigmas.clone(),
            x: linalg::to_row_major(&self.x),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Restores a truth written by [`GroundTruth::to_json`]; `X` is taken
    /// verbatim so the planted matrix is bit-identical.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GroundTruthDoc = serde_json::from_str(text)?;
        let x = linalg::from_row_major(doc.d, doc.r_star, &doc.x)
            .ok_or_else(|| Error::dim(format!("x has {} entries, expected {}", doc.x.len(), doc.d * doc.r_star)))?;
        check_spectrum(&doc.sigmas)?;
        match doc.mode {
            TruthMode::Orthogonalized => {
                let inv = DVector::from_iterator(doc.r_star, doc.sigmas.iter().map(|s| 1.0 / s));
                let basis = &x * Mat::from_diagonal(&inv);
                Ok(Self::assemble(doc.d, doc.mode, doc.seed, doc.sigmas, x, basis))
            }
            TruthMode::Gaussian => {
                let mut gt = Self::from_matrix(x, doc.mode, doc.seed)?;
                gt.sigmas = doc.sigmas;
                Ok(gt)
            }
        }
    }
}

impl Truncation {
    pub fn gram(&self) -> Mat {
        linalg::outer_gram(&self.x_s)
    }
}
