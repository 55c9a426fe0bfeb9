//! Measurement ensembles and the sensing map `A`.
//!
//! `[A(Z)]_i = <A_i, Z> / sqrt(m)` and `A*(w) = sum_i w_i A_i / sqrt(m)`.
//! Gaussian measurement matrices are symmetrized at generation,
//! `A_i = (G_i + G_i^T) / 2`. For symmetric `Z` this leaves `<A_i, Z>`
//! unchanged in distribution; the off-diagonal entries of `A_i` end up with
//! variance 1/2 instead of 1.
//!
//! Matrices are stored densely as their upper triangles, one contiguous row
//! per measurement. Every output entry of `apply` and `adjoint` is produced
//! by a fixed-order loop, so results do not depend on the thread schedule.

use crate::error::{Error, Result};
use crate::ground_truth::GroundTruth;
use crate::linalg::{self, Mat};
use crate::random;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Work size (m * packed length) above which `apply`/`adjoint` go parallel.
const PAR_THRESHOLD: usize = 1 << 18;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    Gaussian,
    FullObservation,
    /// Hand-built measurement list, mostly for tests.
    Explicit,
}

/// Regeneration recipe stored in experiment configs. Raw matrices are never
/// serialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    #[serde(default)]
    pub m: usize,
    #[serde(default)]
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn build(&self, d: usize) -> Result<MeasurementEnsemble> {
        match self.kind {
            EnsembleKind::Gaussian => MeasurementEnsemble::gaussian(d, self.m, self.seed),
            EnsembleKind::FullObservation => Ok(MeasurementEnsemble::full_observation(d)),
            EnsembleKind::Explicit => Err(Error::Config(vec![
                "ensemble.kind: explicit ensembles cannot be regenerated from a config".into(),
            ])),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MeasurementEnsemble {
    d: usize,
    m: usize,
    kind: EnsembleKind,
    seed: u64,
    /// `m` rows of `d(d+1)/2` upper-triangular entries.
    packed: Vec<f64>,
}

fn packed_len(d: usize) -> usize {
    d * (d + 1) / 2
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl MeasurementEnsemble {
    /// `m` symmetrized standard-Gaussian measurements, deterministic per seed.
    pub fn gaussian(d: usize, m: usize, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::EmptyEnsemble);
        }
        if d == 0 {
            return Err(Error::dim("d must be at least 1"));
        }
        let p = packed_len(d);
        let mut rng = random::seeded(seed);
        let mut packed = Vec::with_capacity(m * p);
        for _ in 0..m {
            let g = random::gaussian_matrix(&mut rng, d, d);
            for j in 0..d {
                for k in j..d {
                    packed.push(0.5 * (g[(j, k)] + g[(k, j)]));
                }
            }
        }
        Ok(MeasurementEnsemble {
            d,
            m,
            kind: EnsembleKind::Gaussian,
            seed,
            packed,
        })
    }

    /// The identity super-operator: `A(Z)` is the row-major vectorization of
    /// `Z`, so `A*A(Z) = Z` for symmetric `Z` and δ = 0 exactly.
    pub fn full_observation(d: usize) -> Self {
        MeasurementEnsemble {
            d,
            m: d * d,
            kind: EnsembleKind::FullObservation,
            seed: 0,
            packed: Vec::new(),
        }
    }

    /// Hand-built ensemble; each matrix is symmetrized.
    pub fn from_matrices(mats: &[Mat]) -> Result<Self> {
        let first = mats.first().ok_or(Error::EmptyEnsemble)?;
        let d = first.nrows();
        let mut packed = Vec::with_capacity(mats.len() * packed_len(d));
        for a in mats {
            if a.shape() != (d, d) {
                return Err(Error::dim(format!("measurement of shape {:?}, expected ({d}, {d})", a.shape())));
            }
            for j in 0..d {
                for k in j..d {
                    packed.push(0.5 * (a[(j, k)] + a[(k, j)]));
                }
            }
        }
        Ok(MeasurementEnsemble {
            d,
            m: mats.len(),
            kind: EnsembleKind::Explicit,
            seed: 0,
            packed,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Length of `A(Z)`: the number of measurements, or `d²` under full
    /// observation.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn kind(&self) -> EnsembleKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn symmetrized(&self) -> bool {
        self.kind != EnsembleKind::FullObservation
    }

    pub fn is_full_observation(&self) -> bool {
        self.kind == EnsembleKind::FullObservation
    }

    /// Reconstructs measurement `i` as a dense symmetric matrix.
    pub fn matrix(&self, i: usize) -> Option<Mat> {
        if self.is_full_observation() || i >= self.m {
            return None;
        }
        let p = packed_len(self.d);
        Some(self.unpack(&self.packed[i * p..(i + 1) * p]))
    }

    fn row(&self, i: usize) -> &[f64] {
        let p = packed_len(self.d);
        &self.packed[i * p..(i + 1) * p]
    }

    fn unpack(&self, v: &[f64]) -> Mat {
        let d = self.d;
        let mut z = Mat::zeros(d, d);
        let mut idx = 0;
        for j in 0..d {
            for k in j..d {
                z[(j, k)] = v[idx];
                z[(k, j)] = v[idx];
                idx += 1;
            }
        }
        z
    }

    /// Upper triangle of `Z + Z^T - diag(Z)`, so that a dot product with a
    /// packed measurement gives `<A_i, Z>`.
    fn pack_weighted(&self, z: &Mat) -> Vec<f64> {
        let d = self.d;
        let mut v = Vec::with_capacity(packed_len(d));
        for j in 0..d {
            v.push(z[(j, j)]);
            for k in j + 1..d {
                v.push(z[(j, k)] + z[(k, j)]);
            }
        }
        v
    }

    fn check_square(&self, z: &Mat) -> Result<()> {
        if z.shape() != (self.d, self.d) {
            return Err(Error::dim(format!("expected a {0}x{0} matrix, got {1:?}", self.d, z.shape())));
        }
        Ok(())
    }

    pub fn apply(&self, z: &Mat) -> Result<Vec<f64>> {
        self.check_square(z)?;
        Ok(self.apply_unchecked(z))
    }

    fn apply_unchecked(&self, z: &Mat) -> Vec<f64> {
        if self.is_full_observation() {
            return linalg::to_row_major(z);
        }
        let zp = self.pack_weighted(z);
        let scale = 1.0 / (self.m as f64).sqrt();
        let p = zp.len();
        if self.m * p >= PAR_THRESHOLD {
            self.packed.par_chunks(p).map(|row| dot(row, &zp) * scale).collect()
        } else {
            self.packed.chunks(p).map(|row| dot(row, &zp) * scale).collect()
        }
    }

    pub fn adjoint(&self, w: &[f64]) -> Result<Mat> {
        if w.len() != self.m {
            return Err(Error::dim(format!("adjoint expects {} entries, got {}", self.m, w.len())));
        }
        Ok(self.adjoint_unchecked(w))
    }

    fn adjoint_unchecked(&self, w: &[f64]) -> Mat {
        let d = self.d;
        if self.is_full_observation() {
            let raw = Mat::from_row_slice(d, d, w);
            return linalg::symmetrize(&raw);
        }
        let p = packed_len(d);
        let scale = 1.0 / (self.m as f64).sqrt();
        let mut acc = vec![0.0f64; p];
        let accumulate = |start: usize, out: &mut [f64]| {
            let len = out.len();
            for (i, wi) in w.iter().enumerate() {
                let row = &self.packed[i * p + start..i * p + start + len];
                for (o, a) in out.iter_mut().zip(row) {
                    *o += wi * a;
                }
            }
        };
        if self.m * p >= PAR_THRESHOLD {
            const BLOCK: usize = 64;
            acc.par_chunks_mut(BLOCK)
                .enumerate()
                .for_each(|(b, out)| accumulate(b * BLOCK, out));
        } else {
            accumulate(0, &mut acc);
        }
        for v in acc.iter_mut() {
            *v *= scale;
        }
        self.unpack(&acc)
    }

    /// `A*A(Z)` together with `||A(Z)||²`.
    pub fn normal_op(&self, z: &Mat) -> Result<(Mat, f64)> {
        self.check_square(z)?;
        Ok(self.normal_op_unchecked(z))
    }

    pub(crate) fn normal_op_unchecked(&self, z: &Mat) -> (Mat, f64) {
        if self.is_full_observation() {
            let sq = z.norm_squared();
            return (linalg::symmetrize(z), sq);
        }
        let w = self.apply_unchecked(z);
        let sq = w.iter().map(|x| x * x).sum();
        (self.adjoint_unchecked(&w), sq)
    }

    /// Matrix `K(u)` with `K(u) v = A*A(u v^T + v u^T) u` for all `v`; the
    /// data-dependent part of the rank-1 Hessian.
    pub fn rank1_curvature(&self, u: &[f64]) -> Result<Mat> {
        let d = self.d;
        if u.len() != d {
            return Err(Error::dim(format!("vector of length {} for d = {d}", u.len())));
        }
        let uv = nalgebra::DVector::from_column_slice(u);
        if self.is_full_observation() {
            return Ok(Mat::identity(d, d) * uv.norm_squared() + &uv * uv.transpose());
        }
        let mut k = Mat::zeros(d, d);
        let mut b = vec![0.0; d];
        for i in 0..self.m {
            b.iter_mut().for_each(|x| *x = 0.0);
            let row = self.row(i);
            let mut idx = 0;
            for j in 0..d {
                b[j] += row[idx] * u[j];
                idx += 1;
                for l in j + 1..d {
                    b[j] += row[idx] * u[l];
                    b[l] += row[idx] * u[j];
                    idx += 1;
                }
            }
            for j in 0..d {
                for l in j..d {
                    k[(j, l)] += b[j] * b[l];
                }
            }
        }
        let scale = 2.0 / self.m as f64;
        for j in 0..d {
            for l in j..d {
                let v = k[(j, l)] * scale;
                k[(j, l)] = v;
                k[(l, j)] = v;
            }
        }
        Ok(k)
    }
}

/// Sampled lower bound on the `(δ, rank)`-RIP constant.
#[derive(Clone, Debug)]
pub struct RipEstimate {
    pub rank: usize,
    pub delta_hat: f64,
    pub n_samples: usize,
    pub worst_case_witness: Mat,
}

fn deviation(ens: &MeasurementEnsemble, z: &Mat) -> f64 {
    let w = ens.apply_unchecked(z);
    w.iter().map(|x| x * x).sum::<f64>() - 1.0
}

fn normalized(z: Mat) -> Option<Mat> {
    let n = z.norm();
    (n > 0.0 && n.is_finite()).then(|| z / n)
}

/// Local refinement of a witness. Projected power steps push
/// `||A(Z)||²` away from 1 in the direction of `sign`, interleaved with
/// random perturbations; a move is kept only if `|dev|` grows.
fn refine_witness(
    ens: &MeasurementEnsemble,
    start: Mat,
    rank: usize,
    sign: f64,
    rng: &mut random::SeededRng,
    iters: usize,
) -> (Mat, f64) {
    let d = ens.d();
    let mut best = start;
    let mut best_dev = deviation(ens, &best);
    let mut step = 0.1;
    for _ in 0..iters {
        let (aa, _) = ens.normal_op_unchecked(&best);
        let proposal = if sign > 0.0 {
            aa
        } else {
            &best * 2.0 - aa * (1.0 / (1.0 + best_dev.abs() + 1.0))
        };
        let mut improved = false;
        if let Some(c) = normalized(linalg::project_rank_sym(&proposal, rank)) {
            let dev = deviation(ens, &c);
            if dev * sign > best_dev * sign {
                best = c;
                best_dev = dev;
                improved = true;
            }
        }
        let noise = linalg::symmetrize(&random::gaussian_matrix(rng, d, d)) * (step / d as f64);
        if let Some(c) = normalized(linalg::project_rank_sym(&(&best + noise), rank)) {
            let dev = deviation(ens, &c);
            if dev * sign > best_dev * sign {
                best = c;
                best_dev = dev;
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
            if step < 1e-6 {
                break;
            }
        }
    }
    (best, best_dev)
}

/// `delta_hat = max |‖A(Z)‖² − 1|` over sampled unit-Frobenius symmetric
/// matrices of rank ≤ `rank`, followed by a hill-climb on the extreme
/// witnesses. This is a lower bound on the true RIP constant.
pub fn estimate_rip_delta(ens: &MeasurementEnsemble, rank: usize, n_samples: usize, seed: u64) -> Result<RipEstimate> {
    let d = ens.d();
    if rank == 0 || rank > d {
        return Err(Error::dim(format!("RIP rank {rank} outside 1..={d}")));
    }
    if n_samples == 0 {
        return Err(Error::dim("n_samples must be at least 1"));
    }
    let mut rng = random::seeded(seed);
    let draw = |rng: &mut random::SeededRng, k: usize| {
        let u = random::orthonormal_frame(rng, d, rank);
        let mut lam: Vec<f64> = (0..rank).map(|_| random::normal(rng)).collect();
        if k % 2 == 0 {
            lam.iter_mut().for_each(|l| *l = l.abs());
        }
        let norm = lam.iter().map(|l| l * l).sum::<f64>().sqrt();
        let diag = nalgebra::DVector::from_iterator(rank, lam.iter().map(|l| l / norm));
        linalg::symmetrize(&(&u * Mat::from_diagonal(&diag) * u.transpose()))
    };

    if ens.is_full_observation() {
        return Ok(RipEstimate {
            rank,
            delta_hat: 0.0,
            n_samples,
            worst_case_witness: draw(&mut rng, 0),
        });
    }

    let mut hi: Option<(Mat, f64)> = None;
    let mut lo: Option<(Mat, f64)> = None;
    for k in 0..n_samples {
        let z = draw(&mut rng, k);
        let dev = deviation(ens, &z);
        if hi.as_ref().is_none_or(|(_, v)| dev > *v) {
            hi = Some((z.clone(), dev));
        }
        if lo.as_ref().is_none_or(|(_, v)| dev < *v) {
            lo = Some((z, dev));
        }
    }
    let (hz, _) = hi.expect("n_samples >= 1");
    let (lz, _) = lo.expect("n_samples >= 1");
    let (hz, hdev) = refine_witness(ens, hz, rank, 1.0, &mut rng, 40);
    let (lz, ldev) = refine_witness(ens, lz, rank, -1.0, &mut rng, 40);
    let (witness, delta_hat) = if hdev.abs() >= ldev.abs() {
        (hz, hdev.abs())
    } else {
        (lz, ldev.abs())
    };
    Ok(RipEstimate {
        rank,
        delta_hat,
        n_samples,
        worst_case_witness: witness,
    })
}

#[derive(Clone, Debug)]
pub struct RipConsequence {
    /// `||(A*A − I)(Z)||` (spectral norm).
    pub lhs: f64,
    pub nuclear_bound: f64,
    /// `sqrt(r) δ ||Z||`, only when `rank(Z) ≤ r − 1` for the supplied `r`.
    pub spectral_bound: Option<f64>,
    pub nuclear_pass: bool,
    pub spectral_pass: Option<bool>,
}

pub fn check_rip_consequence(
    ens: &MeasurementEnsemble,
    z: &Mat,
    delta: f64,
    rip_rank: Option<usize>,
) -> Result<RipConsequence> {
    let (aa, _) = ens.normal_op(z)?;
    let lhs = linalg::spectral_norm(&(aa - z));
    let nuclear_bound = delta * linalg::nuclear_norm_sym(z);
    let spectral_bound = rip_rank.and_then(|r| {
        let rank = linalg::numerical_rank(z, 1e-10);
        (r >= 1 && rank < r).then(|| (r as f64).sqrt() * delta * linalg::spectral_norm(z))
    });
    let slack = 1e-12 * (1.0 + z.norm());
    Ok(RipConsequence {
        lhs,
        nuclear_bound,
        spectral_bound,
        nuclear_pass: lhs <= nuclear_bound + slack,
        spectral_pass: spectral_bound.map(|b| lhs <= b + slack),
    })
}

/// Eigenvalue perturbation of `M = A*A(X X^T)` against `σ_i²`.
#[derive(Clone, Debug)]
pub struct SpectrumPerturbation {
    pub m_eigenvalues: Vec<f64>,
    /// `|σ̂_i² − σ_i²|` for `i ≤ r_star`.
    pub deviations: Vec<f64>,
    pub bound: f64,
    pub pass: bool,
}

pub fn check_m_eigen(gt: &GroundTruth, ens: &MeasurementEnsemble, delta: f64) -> Result<SpectrumPerturbation> {
    if gt.d() != ens.d() {
        return Err(Error::dim("ground truth and ensemble dimensions differ"));
    }
    let (m, _) = ens.normal_op(&gt.z_star())?;
    let (vals, _) = linalg::sym_eigen(&m);
    let deviations: Vec<f64> = gt.sigmas().iter().zip(&vals).map(|(s, v)| (s * s - v).abs()).collect();
    let bound = delta * gt.norm() * gt.norm();
    let slack = 1e-10 * gt.norm() * gt.norm();
    let pass = deviations.iter().all(|d| *d <= bound + slack);
    Ok(SpectrumPerturbation {
        m_eigenvalues: vals,
        deviations,
        bound,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{gaussian_matrix, seeded};

    fn random_sym(rng: &mut random::SeededRng, d: usize) -> Mat {
        linalg::symmetrize(&gaussian_matrix(rng, d, d))
    }

    #[test]
    fn zero_in_zero_out() {
        let ens = MeasurementEnsemble::gaussian(4, 7, 1).unwrap();
        assert!(ens.apply(&Mat::zeros(4, 4)).unwrap().iter().all(|x| *x == 0.0));
        assert_eq!(ens.adjoint(&[0.0; 7]).unwrap(), Mat::zeros(4, 4));
    }

    #[test]
    fn empty_ensemble_rejected() {
        assert!(matches!(MeasurementEnsemble::gaussian(3, 0, 1), Err(Error::EmptyEnsemble)));
    }

    #[test]
    fn stored_matrices_are_exactly_symmetric() {
        let ens = MeasurementEnsemble::gaussian(5, 3, 2).unwrap();
        for i in 0..3 {
            let a = ens.matrix(i).unwrap();
            assert_eq!(&a, &a.transpose());
        }
    }

    #[test]
    fn identity_measurement_by_hand() {
        let ens = MeasurementEnsemble::from_matrices(&[Mat::identity(2, 2)]).unwrap();
        let z = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        assert_eq!(ens.apply(&z).unwrap(), vec![3.0]);
    }

    #[test]
    fn single_measurement_is_reproducible() {
        let a = MeasurementEnsemble::gaussian(2, 1, 99).unwrap();
        let b = MeasurementEnsemble::gaussian(2, 1, 99).unwrap();
        let z = Mat::from_row_slice(2, 2, &[0.3, -0.2, -0.2, 1.1]);
        let va = a.apply(&z).unwrap();
        assert_eq!(va, b.apply(&z).unwrap());
        let expect = linalg::frob_inner(&a.matrix(0).unwrap(), &z);
        assert_eq!(va[0].to_bits(), expect.to_bits());
    }

    #[test]
    fn dimension_errors() {
        let ens = MeasurementEnsemble::gaussian(3, 4, 0).unwrap();
        assert!(ens.apply(&Mat::zeros(2, 2)).is_err());
        assert!(ens.adjoint(&[1.0; 3]).is_err());
        assert!(estimate_rip_delta(&ens, 4, 10, 0).is_err());
    }

    #[test]
    fn linearity_and_adjointness() {
        let mut rng = seeded(4);
        for ens in [MeasurementEnsemble::gaussian(6, 40, 3).unwrap(), MeasurementEnsemble::full_observation(6)] {
            for _ in 0..20 {
                let z1 = random_sym(&mut rng, 6);
                let z2 = random_sym(&mut rng, 6);
                let (a, b) = (random::normal(&mut rng), random::normal(&mut rng));
                let lhs = ens.apply(&(&z1 * a + &z2 * b)).unwrap();
                let r1 = ens.apply(&z1).unwrap();
                let r2 = ens.apply(&z2).unwrap();
                for i in 0..lhs.len() {
                    assert!((lhs[i] - (a * r1[i] + b * r2[i])).abs() < 1e-10);
                }
                let w: Vec<f64> = (0..ens.m()).map(|_| random::normal(&mut rng)).collect();
                let left: f64 = r1.iter().zip(&w).map(|(x, y)| x * y).sum();
                let adj = ens.adjoint(&w).unwrap();
                assert_eq!(&adj, &adj.transpose());
                let right = linalg::frob_inner(&z1, &adj);
                assert!((left - right).abs() <= 1e-10 * (1.0 + z1.norm() * w.iter().map(|x| x * x).sum::<f64>().sqrt()));
            }
        }
    }

    #[test]
    fn full_observation_is_identity() {
        let ens = MeasurementEnsemble::full_observation(5);
        let z = random_sym(&mut seeded(8), 5);
        let back = ens.adjoint(&ens.apply(&z).unwrap()).unwrap();
        assert!((back - &z).norm() < 1e-12);
        let (aa, sq) = ens.normal_op(&z).unwrap();
        assert_eq!(aa, z);
        assert!((sq - z.norm_squared()).abs() < 1e-12);
        let est = estimate_rip_delta(&ens, 3, 5, 1).unwrap();
        assert_eq!(est.delta_hat, 0.0);
        let rep = check_rip_consequence(&ens, &z, 0.0, Some(6)).unwrap();
        assert!(rep.lhs < 1e-12 && rep.nuclear_pass);
    }

    #[test]
    fn zero_matrix_consequence() {
        let ens = MeasurementEnsemble::gaussian(4, 30, 5).unwrap();
        let rep = check_rip_consequence(&ens, &Mat::zeros(4, 4), 0.3, Some(3)).unwrap();
        assert_eq!(rep.lhs, 0.0);
        assert_eq!(rep.nuclear_bound, 0.0);
        assert!(rep.nuclear_pass);
    }

    #[test]
    fn rank1_curvature_matches_definition() {
        let ens = MeasurementEnsemble::gaussian(4, 25, 6).unwrap();
        let mut rng = seeded(2);
        let u: Vec<f64> = (0..4).map(|_| random::normal(&mut rng)).collect();
        let v: Vec<f64> = (0..4).map(|_| random::normal(&mut rng)).collect();
        let uu = nalgebra::DVector::from_column_slice(&u);
        let vv = nalgebra::DVector::from_column_slice(&v);
        let s = &uu * vv.transpose() + &vv * uu.transpose();
        let direct = ens.normal_op(&Mat::from_column_slice(4, 4, s.as_slice())).unwrap().0 * &uu;
        let k = ens.rank1_curvature(&u).unwrap();
        assert!((k * &vv - direct).norm() < 1e-10);
    }

    #[test]
    fn a_star_a_is_psd() {
        let ens = MeasurementEnsemble::gaussian(5, 12, 9).unwrap();
        let mut rng = seeded(10);
        for _ in 0..20 {
            let z = random_sym(&mut rng, 5);
            let (aa, sq) = ens.normal_op(&z).unwrap();
            assert!((linalg::frob_inner(&z, &aa) - sq).abs() < 1e-10 * (1.0 + sq));
            assert!(sq >= 0.0);
        }
    }
}
