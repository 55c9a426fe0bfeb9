//! Dense linear-algebra helpers shared by every module.
//!
//! Everything here works on `DMatrix<f64>`. Decompositions always return
//! their spectra in descending order so callers can take leading blocks
//! without re-sorting.

use nalgebra::{DMatrix, SymmetricEigen};

pub type Mat = DMatrix<f64>;

/// Thin SVD `a = u * diag(s) * v^T` with `s` descending.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Mat,
    pub s: Vec<f64>,
    pub v: Mat,
}

pub fn svd(a: &Mat) -> Svd {
    let (r, c) = a.shape();
    let k = r.min(c);
    if k == 0 {
        return Svd {
            u: Mat::zeros(r, 0),
            s: Vec::new(),
            v: Mat::zeros(c, 0),
        };
    }
    let dec = a.clone().svd(true, true);
    let u = dec.u.expect("left vectors requested");
    let v_t = dec.v_t.expect("right vectors requested");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| dec.singular_values[j].total_cmp(&dec.singular_values[i]));
    let s = order.iter().map(|&i| dec.singular_values[i]).collect();
    let u = Mat::from_fn(r, k, |row, col| u[(row, order[col])]);
    let v = Mat::from_fn(c, k, |row, col| v_t[(order[col], row)]);
    Svd { u, s, v }
}

pub fn singular_values(a: &Mat) -> Vec<f64> {
    let (r, c) = a.shape();
    if r.min(c) == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Largest singular value; zero for empty matrices.
pub fn spectral_norm(a: &Mat) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Smallest of the `min(rows, cols)` singular values.
pub fn sigma_min(a: &Mat) -> f64 {
    singular_values(a).last().copied().unwrap_or(0.0)
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues descending.
pub fn sym_eigen(a: &Mat) -> (Vec<f64>, Mat) {
    let n = a.nrows();
    let dec = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| dec.eigenvalues[j].total_cmp(&dec.eigenvalues[i]));
    let vals = order.iter().map(|&i| dec.eigenvalues[i]).collect();
    let vecs = Mat::from_fn(n, n, |row, col| dec.eigenvectors[(row, order[col])]);
    (vals, vecs)
}

pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

pub fn frob_inner(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// `u u^T`, computed on the upper triangle and mirrored so the result is
/// exactly symmetric.
pub fn outer_gram(u: &Mat) -> Mat {
    let d = u.nrows();
    let k = u.ncols();
    let mut g = Mat::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let mut acc = 0.0;
            for c in 0..k {
                acc += u[(i, c)] * u[(j, c)];
            }
            g[(i, j)] = acc;
            g[(j, i)] = acc;
        }
    }
    g
}

/// Sum of absolute eigenvalues of a symmetric matrix.
pub fn nuclear_norm_sym(a: &Mat) -> f64 {
    sym_eigen(a).0.iter().map(|v| v.abs()).sum()
}

/// Orthonormal basis of the orthogonal complement of the column span of `q`
/// (which must have orthonormal columns).
pub fn orth_complement(q: &Mat) -> Mat {
    let n = q.nrows();
    let k = q.ncols();
    if k >= n {
        return Mat::zeros(n, 0);
    }
    let proj = Mat::identity(n, n) - q * q.transpose();
    let (_, vecs) = sym_eigen(&symmetrize(&proj));
    vecs.columns(0, n - k).into_owned()
}

/// Closest rank-`r` symmetric matrix in Frobenius norm (keeps the `r`
/// eigenvalues of largest magnitude).
pub fn project_rank_sym(a: &Mat, r: usize) -> Mat {
    let n = a.nrows();
    let (vals, vecs) = sym_eigen(&symmetrize(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| vals[j].abs().total_cmp(&vals[i].abs()));
    let mut out = Mat::zeros(n, n);
    for &i in order.iter().take(r) {
        let v = vecs.column(i);
        out += vals[i] * v * v.transpose();
    }
    symmetrize(&out)
}

/// Numerical rank using a relative threshold on singular values.
pub fn numerical_rank(a: &Mat, rel_tol: f64) -> usize {
    let s = singular_values(a);
    let top = s.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > rel_tol * top).count()
}

pub fn is_finite(a: &Mat) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Row-major flattening, used by the JSON documents.
pub fn to_row_major(a: &Mat) -> Vec<f64> {
    let (r, c) = a.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(a[(i, j)]);
        }
    }
    out
}

pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Option<Mat> {
    (data.len() == rows * cols).then(|| Mat::from_row_slice(rows, cols, data))
}
