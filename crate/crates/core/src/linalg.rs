//! Dense linear-algebra helpers shared by the GP and the Nyström analysis.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Diagonal jitter ladder tried when a plain Cholesky factorization fails.
pub const JITTER_LADDER: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Cholesky factorization of a symmetric matrix, escalating diagonal jitter
/// through [`JITTER_LADDER`] on failure. Returns the factor and the jitter
/// that was finally added (0 when none was needed).
pub fn cholesky_with_jitter(a: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = try_cholesky(a.clone()) {
        return Ok((c, 0.0));
    }
    for &jitter in JITTER_LADDER.iter() {
        let mut m = a.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(c) = try_cholesky(m) {
            return Ok((c, jitter));
        }
    }
    Err(Error::NotPositiveDefinite {
        max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
    })
}

fn try_cholesky(m: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let c = Cholesky::new(m)?;
    // nalgebra accepts tiny positive pivots that carry no information; reject
    // factors whose diagonal is not comfortably positive.
    let l = c.l_dirty();
    let ok = (0..l.nrows()).all(|i| l[(i, i)].is_finite() && l[(i, i)] > 1e-150);
    ok.then_some(c)
}

/// Inverse of a symmetric positive definite matrix via Cholesky (with jitter).
pub fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (c, _) = cholesky_with_jitter(a)?;
    Ok(symmetrize(c.inverse()))
}

/// Average a matrix with its transpose.
pub fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
/// Column `k` of the returned matrix is the eigenvector of the `k`-th value.
pub fn sorted_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(a.clone()));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Spectral (operator 2-) norm of a symmetric matrix.
pub fn spectral_norm_sym(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let eig = SymmetricEigen::new(symmetrize(a.clone()));
    eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue_sym(a: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(symmetrize(a.clone()));
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `a + s * I`
pub fn add_diagonal(a: &DMatrix<f64>, s: f64) -> DMatrix<f64> {
    let mut m = a.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += s;
    }
    m
}

/// Submatrix with rows `rows` and columns `cols`.
pub fn select(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}
