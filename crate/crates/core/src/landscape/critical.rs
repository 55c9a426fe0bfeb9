//! Critical points of the factorization loss: every critical point is, up to
//! rotation, a selection of columns `σ_i v_i` padded with zeros.

use super::{factorization_gradient, factorization_loss};
use crate::error::{Error, Result};
use crate::ground_truth::{GroundTruth, TruthMode};
use crate::linalg::Mat;

#[derive(Clone, Debug)]
pub struct CriticalPoint {
    /// Zero-based indices of the selected `σ_i v_i`.
    pub subset: Vec<usize>,
    pub u: Mat,
    pub grad_norm: f64,
    pub f_value: f64,
}

fn subsets(n: usize, max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for size in 1..=max.min(n) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            out.push(idx.clone());
            let Some(pos) = (0..size).rev().find(|&p| idx[p] < n - size + p) else {
                break;
            };
            idx[pos] += 1;
            for q in pos + 1..size {
                idx[q] = idx[q - 1] + 1;
            }
        }
    }
    out
}

/// All subsets of size at most `s`, in order of size and then lexicographic.
pub fn factorization_critical_points(gt: &GroundTruth, s: usize) -> Result<Vec<CriticalPoint>> {
    if gt.mode() != TruthMode::Orthogonalized {
        return Err(Error::UnsupportedMode(format!(
            "critical points need exact singular pairs; got {} mode",
            gt.mode()
        )));
    }
    if s == 0 || s > gt.r_star() {
        return Err(Error::dim(format!("rank {s} outside 1..={}", gt.r_star())));
    }
    let d = gt.d();
    let z_star = gt.z_star();
    let basis = gt.basis();
    Ok(subsets(gt.r_star(), s)
        .into_iter()
        .map(|subset| {
            let mut u = Mat::zeros(d, s);
            for (col, &i) in subset.iter().enumerate() {
                u.set_column(col, &(basis.column(i) * gt.sigmas()[i]));
            }
            CriticalPoint {
                grad_norm: factorization_gradient(&u, &z_star).norm(),
                f_value: factorization_loss(&u, &z_star),
                subset,
                u,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground_truth::make_ground_truth;

    fn gt() -> GroundTruth {
        make_ground_truth(5, &[3.0, 2.0, 1.0], TruthMode::Orthogonalized, 8).unwrap()
    }

    #[test]
    fn enumerates_all_small_subsets() {
        let pts = factorization_critical_points(&gt(), 2).unwrap();
        // {} + 3 singletons + 3 pairs
        assert_eq!(pts.len(), 7);
        let tol = 1e-10 * gt().norm().powi(3);
        assert!(pts.iter().all(|p| p.grad_norm <= tol));
    }

    #[test]
    fn values_by_hand() {
        let pts = factorization_critical_points(&gt(), 2).unwrap();
        let f = |sub: &[usize]| pts.iter().find(|p| p.subset == sub).unwrap().f_value;
        // ¼ Σ σ_i⁴ over the unselected indices
        assert!((f(&[]) - 0.25 * (81.0 + 16.0 + 1.0)).abs() < 1e-10);
        assert!((f(&[0, 1]) - 0.25).abs() < 1e-10);
        assert!((f(&[0, 2]) - 4.0).abs() < 1e-10);
        let best = pts.iter().min_by(|a, b| a.f_value.total_cmp(&b.f_value)).unwrap();
        assert_eq!(best.subset, vec![0, 1]);
    }

    #[test]
    fn gaussian_mode_is_rejected() {
        let g = make_ground_truth(5, &[1.0, 1.0], TruthMode::Gaussian, 1).unwrap();
        assert!(matches!(factorization_critical_points(&g, 1), Err(Error::UnsupportedMode(_))));
    }
}
