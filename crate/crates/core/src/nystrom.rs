//! Subset-of-regressors (Nyström) analysis of subset-fitted GPs: the
//! low-rank approximation `K̂ = K_DU K_UU⁻¹ K_UD`, posterior error bounds,
//! greedy column selection and the subspace error `ε_g`.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    add_diagonal, cholesky_with_jitter, min_eigenvalue_sym, select, sorted_eigen, spd_inverse,
    spectral_norm_sym,
};

/// Relative tolerance under which two residual norms count as tied; ties go
/// to the lowest index.
pub const TIE_RTOL: f64 = 1e-9;

fn check_square(k: &DMatrix<f64>) -> Result<usize> {
    if k.nrows() != k.ncols() || k.nrows() == 0 {
        return Err(Error::invalid("expected a nonempty square matrix"));
    }
    Ok(k.nrows())
}

fn check_indices(n: usize, indices: &[usize]) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::invalid("subset must be nonempty"));
    }
    let mut seen = vec![false; n];
    for &i in indices {
        if i >= n {
            return Err(Error::invalid(format!("index {i} out of range for size {n}")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::invalid(format!("index {i} repeated")));
        }
    }
    Ok(())
}

/// `K̂ = K_DU K_UU⁻¹ K_UD`, computed as `VᵀV` with `V = L⁻¹ K_UD` so the
/// result is symmetric positive semidefinite by construction.
pub fn build_sor_approx(k: &DMatrix<f64>, indices: &[usize]) -> Result<DMatrix<f64>> {
    let n = check_square(k)?;
    check_indices(n, indices)?;
    let all: Vec<usize> = (0..n).collect();
    let kuu = select(k, indices, indices);
    let (chol, _) = cholesky_with_jitter(&kuu)?;
    let mut v = select(k, indices, &all);
    chol.l().solve_lower_triangular_mut(&mut v);
    Ok(v.tr_mul(&v))
}

/// `‖K - K̂‖₂`
pub fn spectral_error(k: &DMatrix<f64>, k_hat: &DMatrix<f64>) -> f64 {
    spectral_norm_sym(&(k - k_hat))
}

/// `C_M = ‖(K + σ²I)⁻¹‖ · ‖(K̂ + σ²I)⁻¹‖`
pub fn c_m(k: &DMatrix<f64>, k_hat: &DMatrix<f64>, noise: f64) -> f64 {
    let a = min_eigenvalue_sym(&add_diagonal(k, noise));
    let b = min_eigenvalue_sym(&add_diagonal(k_hat, noise));
    1.0 / (a * b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorErrorBounds {
    pub mean_err_bound: f64,
    pub var_err_bound: f64,
    pub actual_mean_err: f64,
    pub actual_var_err: f64,
    pub c_m: f64,
    pub spectral_error: f64,
}

impl PosteriorErrorBounds {
    /// Both actual errors are within their bounds, allowing `slack` of
    /// floating-point headroom relative to the larger side.
    pub fn holds(&self, slack: f64) -> bool {
        let ok = |actual: f64, bound: f64| actual <= bound + slack * (1.0 + bound.abs());
        ok(self.actual_mean_err, self.mean_err_bound) && ok(self.actual_var_err, self.var_err_bound)
    }
}

/// Bounds on the posterior mean/variance discrepancy between the full GP
/// and the GP with `K̂` in place of `K`, together with the exact
/// discrepancies at the test point with covariance vector `k_star`.
pub fn posterior_error_bounds(
    k: &DMatrix<f64>,
    k_hat: &DMatrix<f64>,
    y: &DVector<f64>,
    k_star: &DVector<f64>,
    noise: f64,
) -> Result<PosteriorErrorBounds> {
    let n = check_square(k)?;
    if k_hat.shape() != k.shape() || y.len() != n || k_star.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len().min(k_star.len()).min(k_hat.nrows()),
        });
    }
    if noise.is_nan() || noise <= 0.0 {
        return Err(Error::invalid("noise variance must be positive"));
    }
    let inv_full = spd_inverse(&add_diagonal(k, noise))?;
    let inv_sub = spd_inverse(&add_diagonal(k_hat, noise))?;
    let diff = &inv_full - &inv_sub;
    let actual_mean_err = k_star.dot(&(&diff * y)).abs();
    let actual_var_err = k_star.dot(&(&diff * k_star)).abs();
    let spectral_error = spectral_error(k, k_hat);
    let cm = c_m(k, k_hat, noise);
    let ks = k_star.norm();
    Ok(PosteriorErrorBounds {
        mean_err_bound: ks * y.norm() * cm * spectral_error,
        var_err_bound: ks * ks * cm * spectral_error,
        actual_mean_err,
        actual_var_err,
        c_m: cm,
        spectral_error,
    })
}

/// Pick the lowest index whose score is within `TIE_RTOL` of the maximum.
fn argmax_lowest(scores: &[f64], taken: &[bool]) -> Option<usize> {
    let max = scores
        .iter()
        .zip(taken)
        .filter(|(_, t)| !**t)
        .map(|(s, _)| *s)
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let cut = max - TIE_RTOL * max.abs();
    (0..scores.len()).find(|&i| !taken[i] && scores[i] >= cut)
}

/// Greedy column selection by explicit Gram–Schmidt on the columns of `a`:
/// each step takes the column with the largest residual norm outside the
/// span of the columns chosen so far. Returns indices and the residual
/// norm of each pick at the time it was chosen.
fn greedy_columns(a: &DMatrix<f64>, m: usize, forced: Option<usize>) -> (Vec<usize>, Vec<f64>) {
    let n = a.ncols();
    let mut res2: Vec<f64> = a.column_iter().map(|c| c.norm_squared()).collect();
    let scale = res2.iter().cloned().fold(0.0, f64::max).sqrt();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut taken = vec![false; n];
    let mut picks = Vec::with_capacity(m);
    let mut norms = Vec::with_capacity(m);
    for step in 0..m {
        let j = match (step, forced) {
            (0, Some(f)) => f,
            _ => argmax_lowest(&res2, &taken).expect("m <= n"),
        };
        taken[j] = true;
        picks.push(j);
        norms.push(res2[j].max(0.0).sqrt());
        let mut q = a.column(j).into_owned();
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&q);
                q.axpy(-c, b, 1.0);
            }
        }
        let qn = q.norm();
        if qn <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            continue;
        }
        q /= qn;
        for i in 0..n {
            if !taken[i] {
                let c = q.dot(&a.column(i));
                res2[i] -= c * c;
            }
        }
        basis.push(q);
    }
    (picks, norms)
}

/// Greedy selection driven by a Gram matrix `g` of the vectors instead of
/// the vectors themselves (pivoted Cholesky): the residual of `i` after
/// picking `S` is the Schur complement `g_ii - g_iS g_SS⁻¹ g_Si`.
fn greedy_from_gram(g: &DMatrix<f64>, m: usize) -> (Vec<usize>, Vec<f64>) {
    let n = g.nrows();
    let mut res2: Vec<f64> = (0..n).map(|i| g[(i, i)]).collect();
    let scale = res2.iter().cloned().fold(0.0, f64::max);
    let mut factors: Vec<DVector<f64>> = Vec::new();
    let mut taken = vec![false; n];
    let mut picks = Vec::with_capacity(m);
    let mut norms = Vec::with_capacity(m);
    for _ in 0..m {
        let j = argmax_lowest(&res2, &taken).expect("m <= n");
        taken[j] = true;
        picks.push(j);
        let pivot = res2[j];
        norms.push(pivot.max(0.0).sqrt());
        if pivot <= 1e-24 * scale.max(f64::MIN_POSITIVE) {
            continue;
        }
        let mut col = g.column(j).into_owned();
        for f in &factors {
            col.axpy(-f[j], f, 1.0);
        }
        col /= pivot.sqrt();
        for i in 0..n {
            if !taken[i] {
                res2[i] -= col[i] * col[i];
            }
        }
        factors.push(col);
    }
    (picks, norms)
}

/// Greedy Nyström column selection on the columns of `k`, optionally
/// starting from `forced`.
pub fn greedy_nystrom_select(k: &DMatrix<f64>, m: usize, forced: Option<usize>) -> Result<Vec<usize>> {
    let n = check_square(k)?;
    if m == 0 || m > n {
        return Err(Error::invalid(format!("subset size {m} outside 1..={n}")));
    }
    if let Some(f) = forced {
        if f >= n {
            return Err(Error::invalid(format!("forced index {f} out of range")));
        }
    }
    Ok(greedy_columns(k, m, forced).0)
}

/// `m` distinct indices drawn uniformly from `0..n`.
pub fn random_subset<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Vec<usize> {
    sample(rng, n, m.min(n)).into_vec()
}

/// Side-by-side run of the kernel-column greedy rule and the gradient-column
/// greedy rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceTrace {
    pub kernel_sequence: Vec<usize>,
    pub gradient_sequence: Vec<usize>,
    pub kernel_residuals: Vec<f64>,
    pub gradient_residuals: Vec<f64>,
    /// Selection by plain Euclidean residuals of the gradient columns
    /// (no conjugation); reported for comparison only.
    pub euclidean_gradient_sequence: Vec<usize>,
    pub matched: bool,
}

/// Run kernel-column greedy (Gram–Schmidt on `φ_i = K e_i`) and
/// gradient-column greedy (on `ψ_i = K⁻¹ e_i`) side by side.
///
/// The gradient path measures residuals in the metric carried over from the
/// kernel columns by the conjugation `ψ ↦ K² ψ = φ`, i.e. with inner product
/// `⟨a, b⟩ = aᵀ K⁴ b`, and selects from the Gram matrix `Ψᵀ K⁴ Ψ` assembled
/// from the explicit inverse.
pub fn selection_equivalence_check(k_y: &DMatrix<f64>, m: usize) -> Result<EquivalenceTrace> {
    let n = check_square(k_y)?;
    if m == 0 || m > n {
        return Err(Error::invalid(format!("subset size {m} outside 1..={n}")));
    }
    let (kernel_sequence, kernel_residuals) = greedy_columns(k_y, m, None);

    let psi = spd_inverse(k_y)?;
    let k2 = k_y * k_y;
    let k4 = &k2 * &k2;
    let metric_gram = psi.transpose() * &k4 * &psi;
    let (gradient_sequence, gradient_residuals) =
        greedy_from_gram(&crate::linalg::symmetrize(metric_gram), m);

    let euclid = psi.transpose() * &psi;
    let (euclidean_gradient_sequence, _) = greedy_from_gram(&crate::linalg::symmetrize(euclid), m);

    Ok(EquivalenceTrace {
        matched: kernel_sequence == gradient_sequence,
        kernel_sequence,
        gradient_sequence,
        kernel_residuals,
        gradient_residuals,
        euclidean_gradient_sequence,
    })
}

/// Orthonormal basis for the span of the columns of `k` indexed by `indices`.
fn column_span_basis(k: &DMatrix<f64>, indices: &[usize]) -> Vec<DVector<f64>> {
    let scale = indices.iter().map(|&j| k.column(j).norm()).fold(0.0, f64::max);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for &j in indices {
        let mut q = k.column(j).into_owned();
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&q);
                q.axpy(-c, b, 1.0);
            }
        }
        let qn = q.norm();
        if qn > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            basis.push(q / qn);
        }
    }
    basis
}

/// Top-`m` eigenvectors of `k` (columns), by descending eigenvalue.
fn residual_energy(eigvecs: &DMatrix<f64>, m: usize, basis: &[DVector<f64>]) -> f64 {
    (0..m)
        .map(|c| {
            let u = eigvecs.column(c);
            let captured: f64 = basis.iter().map(|q| q.dot(&u).powi(2)).sum();
            (1.0 - captured).max(0.0)
        })
        .sum()
}

/// `ε_g = √Σ_{k≤M} ‖(I - P_U) u_k‖²`, with `u_k` the top-`m` eigenvectors
/// of `k` and `P_U` the orthogonal projector onto the span of the selected
/// kernel columns.
pub fn eps_g(k: &DMatrix<f64>, selected: &[usize], m: usize) -> Result<f64> {
    let n = check_square(k)?;
    check_indices(n, selected)?;
    if m == 0 || m > n {
        return Err(Error::invalid(format!("M = {m} outside 1..={n}")));
    }
    let (_, vecs) = sorted_eigen(k);
    let basis = column_span_basis(k, selected);
    Ok(residual_energy(&vecs, m, &basis).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Selector {
    Greedy,
    Random { seed: u64 },
}

/// Smallest `M` with `λ_{M+1} + ε_g Σ K_ii² ≤ tolerance · ‖K‖`, scanning
/// upward; `N` when no smaller size qualifies.
pub fn min_subset_size(k: &DMatrix<f64>, tolerance: f64, selector: Selector) -> Result<usize> {
    let n = check_square(k)?;
    if !(tolerance > 0.0 && tolerance < 1.0) {
        return Err(Error::invalid("tolerance must lie in (0, 1)"));
    }
    let (vals, vecs) = sorted_eigen(k);
    let norm = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let diag_sq: f64 = (0..n).map(|i| k[(i, i)] * k[(i, i)]).sum();
    let greedy_order = match selector {
        Selector::Greedy => Some(greedy_columns(k, n, None).0),
        Selector::Random { .. } => None,
    };
    for m in 1..n {
        let selected = match (&greedy_order, selector) {
            (Some(order), _) => order[..m].to_vec(),
            (None, Selector::Random { seed }) => {
                let mut rng = crate::rng::stream(seed, m as u64);
                random_subset(n, m, &mut rng)
            }
            (None, Selector::Greedy) => unreachable!(),
        };
        let basis = column_span_basis(k, &selected);
        let eps = residual_energy(&vecs, m, &basis).sqrt();
        let lambda_next = vals[m].max(0.0);
        if lambda_next + eps * diag_sq <= tolerance * norm {
            return Ok(m);
        }
    }
    Ok(n)
}

/// Penalties `(A, B)` that bound the UCB discrepancy of a subset-fitted GP:
/// `A = ‖k_*‖‖y‖ C_M (λ_{M+1} + ε_g Σ K_ii²)` and
/// `B = ‖k_*‖ √(C_M (λ_{M+1} + ε_g Σ K_ii²))`.
pub fn ucb_penalties(
    k: &DMatrix<f64>,
    k_hat: &DMatrix<f64>,
    y: &DVector<f64>,
    k_star: &DVector<f64>,
    noise: f64,
    lambda_next: f64,
    eps_g: f64,
) -> Result<(f64, f64)> {
    let n = check_square(k)?;
    if y.len() != n || k_star.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    let cm = c_m(k, k_hat, noise);
    let diag_sq: f64 = (0..n).map(|i| k[(i, i)] * k[(i, i)]).sum();
    Ok(penalty_terms(
        k_star.norm(),
        y.norm(),
        cm,
        lambda_next,
        eps_g,
        diag_sq,
    ))
}

/// The penalty formulas from their scalar ingredients; `diag_sq = Σ K_ii²`.
pub fn penalty_terms(
    k_star_norm: f64,
    y_norm: f64,
    c_m: f64,
    lambda_next: f64,
    eps_g: f64,
    diag_sq: f64,
) -> (f64, f64) {
    let err = (lambda_next + eps_g * diag_sq).max(0.0);
    (k_star_norm * y_norm * c_m * err, k_star_norm * (c_m * err).sqrt())
}

/// Everything the analysis reports for one subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NystromReport {
    pub m: usize,
    pub n: usize,
    pub selected: Vec<usize>,
    pub spectral_error: f64,
    pub lambda_m_plus_1: f64,
    pub eps_g: f64,
    pub eps_g_bound: f64,
    pub c_m: f64,
    pub c_m_bound: f64,
    pub mean_bound: f64,
    pub var_bound: f64,
    pub actual_mean_err: f64,
    pub actual_var_err: f64,
    pub penalty_a: f64,
    pub penalty_b: f64,
}

/// Analyse the subset `selected` of the Gram matrix `k` at one test point.
pub fn analyze(
    k: &DMatrix<f64>,
    selected: &[usize],
    y: &DVector<f64>,
    k_star: &DVector<f64>,
    noise: f64,
) -> Result<NystromReport> {
    let n = check_square(k)?;
    let m = selected.len();
    let k_hat = build_sor_approx(k, selected)?;
    let bounds = posterior_error_bounds(k, &k_hat, y, k_star, noise)?;
    let (vals, _) = sorted_eigen(k);
    let lambda_next = if m < n { vals[m].max(0.0) } else { 0.0 };
    let eg = eps_g(k, selected, m)?;
    let (a, b) = ucb_penalties(k, &k_hat, y, k_star, noise, lambda_next, eg)?;
    let lambda_min = vals[n - 1];
    Ok(NystromReport {
        m,
        n,
        selected: selected.to_vec(),
        spectral_error: bounds.spectral_error,
        lambda_m_plus_1: lambda_next,
        eps_g: eg,
        eps_g_bound: (m as f64).sqrt() * (-(m as f64) / (2.0 * n as f64)).exp(),
        c_m: bounds.c_m,
        c_m_bound: 1.0 / (lambda_min * noise),
        mean_bound: bounds.mean_err_bound,
        var_bound: bounds.var_err_bound,
        actual_mean_err: bounds.actual_mean_err,
        actual_var_err: bounds.actual_var_err,
        penalty_a: a,
        penalty_b: b,
    })
}
