//! Exact Gaussian-process regression over an active subset of a dataset.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{build_gram, cross_cov_into, KernelFamily, KernelHyperparams};
use crate::linalg::cholesky_with_jitter;

/// Variances below this are reported as exactly zero.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Ordered input points inside a box, with their (noisy) observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub points: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
}

impl Dataset {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::invalid("dataset needs at least one dimension"));
        }
        if let Some(j) = bounds.iter().position(|(lo, hi)| lo.is_nan() || hi.is_nan() || lo >= hi) {
            return Err(Error::invalid(format!("degenerate bounds in dimension {j}")));
        }
        Ok(Dataset {
            points: Vec::new(),
            y: Vec::new(),
            bounds,
        })
    }

    pub fn from_parts(points: Vec<Vec<f64>>, y: Vec<f64>, bounds: Vec<(f64, f64)>) -> Result<Self> {
        let mut ds = Dataset::new(bounds)?;
        if points.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: y.len(),
            });
        }
        for (x, v) in points.into_iter().zip(y) {
            ds.push(x, v)?;
        }
        Ok(ds)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.bounds)
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if !self.contains(&x) {
            return Err(Error::OutOfBounds { index: self.len() });
        }
        self.points.push(x);
        self.y.push(y);
        Ok(())
    }

    pub fn diameter(&self) -> f64 {
        self.bounds
            .iter()
            .map(|(lo, hi)| (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt()
    }
}

/// Fitted posterior state over the active points.
///
/// The model owns copies of its active inputs and targets so that it can be
/// shared as an immutable snapshot.
#[derive(Debug, Clone)]
pub struct GpModel {
    pub active_indices: Vec<usize>,
    pub hyperparams: KernelHyperparams,
    pub family: KernelFamily,
    pub mean_const: f64,
    points: Vec<Vec<f64>>,
    y: DVector<f64>,
    /// Lower Cholesky factor of `K + σ_n² I (+ jitter)`.
    chol: DMatrix<f64>,
    /// `(K + σ_n² I)^{-1} (y - μ)`
    alpha: DVector<f64>,
    jitter: f64,
}

impl GpModel {
    /// Fit on `dataset` restricted to `active_indices` with zero prior mean.
    pub fn fit(
        dataset: &Dataset,
        active_indices: &[usize],
        hp: &KernelHyperparams,
        family: KernelFamily,
    ) -> Result<Self> {
        Self::fit_with_mean(dataset, active_indices, hp, family, 0.0)
    }

    pub fn fit_with_mean(
        dataset: &Dataset,
        active_indices: &[usize],
        hp: &KernelHyperparams,
        family: KernelFamily,
        mean_const: f64,
    ) -> Result<Self> {
        if active_indices.is_empty() {
            return Err(Error::invalid("active index set is empty"));
        }
        if let Some(&i) = active_indices.iter().find(|&&i| i >= dataset.len()) {
            return Err(Error::invalid(format!(
                "active index {i} out of range for dataset of size {}",
                dataset.len()
            )));
        }
        let points = active_indices
            .iter()
            .map(|&i| dataset.points[i].clone())
            .collect();
        let y = active_indices.iter().map(|&i| dataset.y[i]).collect();
        let mut model = Self::fit_points(points, y, hp, family, mean_const)?;
        model.active_indices = active_indices.to_vec();
        Ok(model)
    }

    /// Fit directly on points and targets; `active_indices` become `0..n`.
    pub fn fit_points(
        points: Vec<Vec<f64>>,
        y: Vec<f64>,
        hp: &KernelHyperparams,
        family: KernelFamily,
        mean_const: f64,
    ) -> Result<Self> {
        hp.validate()?;
        if points.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: y.len(),
            });
        }
        let mut ky = build_gram(&points, hp, family)?;
        for i in 0..ky.nrows() {
            ky[(i, i)] += hp.noise_variance;
        }
        let (chol, jitter) = cholesky_with_jitter(&ky)?;
        let y = DVector::from_vec(y);
        let resid = y.add_scalar(-mean_const);
        let alpha = chol.solve(&resid);
        let n = points.len();
        Ok(GpModel {
            active_indices: (0..n).collect(),
            hyperparams: hp.clone(),
            family,
            mean_const,
            points,
            y,
            chol: chol.l(),
            alpha,
            jitter,
        })
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Diagonal jitter added on top of `σ_n²` to make the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// The regularized Gram matrix the factor was computed from.
    pub fn regularized_gram(&self) -> DMatrix<f64> {
        let mut k =
            build_gram(&self.points, &self.hyperparams, self.family).expect("points validated at fit time");
        for i in 0..k.nrows() {
            k[(i, i)] += self.hyperparams.noise_variance + self.jitter;
        }
        k
    }

    /// `(K + σ_n² I)^{-1}` from the stored factor.
    pub fn inverse_gram(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut inv = DMatrix::identity(n, n);
        self.chol.solve_lower_triangular_mut(&mut inv);
        self.chol.tr_solve_lower_triangular_mut(&mut inv);
        crate::linalg::symmetrize(inv)
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Posterior mean and variance of the latent function at `x`.
    pub fn posterior(&self, x: &[f64]) -> Result<(f64, f64)> {
        self.check_point(x)?;
        let mut k = DVector::zeros(self.n());
        cross_cov_into(&self.points, x, &self.hyperparams, self.family, k.as_mut_slice());
        let mean = self.mean_const + k.dot(&self.alpha);
        self.chol.solve_lower_triangular_mut(&mut k);
        let var = clamp_variance(self.hyperparams.signal_variance - k.norm_squared());
        Ok((mean, var))
    }

    /// Posterior mean only; `O(n)` per point.
    pub fn posterior_mean(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let mut k = vec![0.0; self.n()];
        cross_cov_into(&self.points, x, &self.hyperparams, self.family, &mut k);
        Ok(self.mean_const + k.iter().zip(self.alpha.iter()).map(|(a, b)| a * b).sum::<f64>())
    }

    /// Posterior mean and variance at many points, solving against the
    /// factor one block of points at a time.
    pub fn posterior_batch(&self, xs: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
        const BLOCK: usize = 256;
        let n = self.n();
        let mut means = Vec::with_capacity(xs.len());
        let mut vars = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(BLOCK) {
            for x in chunk {
                self.check_point(x)?;
            }
            let mut kstar = DMatrix::zeros(n, chunk.len());
            for (c, x) in chunk.iter().enumerate() {
                let mut col = kstar.column_mut(c);
                cross_cov_into(
                    &self.points,
                    x,
                    &self.hyperparams,
                    self.family,
                    col.as_mut_slice(),
                );
            }
            let m = kstar.tr_mul(&self.alpha);
            means.extend(m.iter().map(|v| v + self.mean_const));
            self.chol.solve_lower_triangular_mut(&mut kstar);
            for c in 0..chunk.len() {
                let q = kstar.column(c).norm_squared();
                vars.push(clamp_variance(self.hyperparams.signal_variance - q));
            }
        }
        Ok((means, vars))
    }

    /// `-½ (y-μ)ᵀ K_y⁻¹ (y-μ) - ½ log|K_y| - (n/2) log 2π`
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.n() as f64;
        let resid = self.y.add_scalar(-self.mean_const);
        let fit = -0.5 * resid.dot(&self.alpha);
        let logdet: f64 = (0..self.n()).map(|i| self.chol[(i, i)].ln()).sum();
        fit - logdet - 0.5 * n * (2.0 * PI).ln()
    }
}

pub(crate) fn clamp_variance(v: f64) -> f64 {
    if v < VARIANCE_FLOOR {
        0.0
    } else {
        v
    }
}

/// Free-function form of [`GpModel::fit`].
pub fn fit(
    dataset: &Dataset,
    active_indices: &[usize],
    hp: &KernelHyperparams,
    family: KernelFamily,
) -> Result<GpModel> {
    GpModel::fit(dataset, active_indices, hp, family)
}

/// Free-function form of [`GpModel::log_marginal_likelihood`].
pub fn log_marginal_likelihood(model: &GpModel) -> f64 {
    model.log_marginal_likelihood()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        Dataset::from_parts(pts, y, vec![(0.0, 1.0); d]).unwrap()
    }

    fn all(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    #[test]
    fn single_point_zero_target() {
        let ds = Dataset::from_parts(vec![vec![0.5]], vec![0.0], vec![(0.0, 1.0)]).unwrap();
        let hp = KernelHyperparams::isotropic(1.0, 1.0, 0.01).unwrap();
        let m = GpModel::fit(&ds, &[0], &hp, KernelFamily::Matern52).unwrap();
        assert_eq!(m.alpha().as_slice(), &[0.0]);
    }

    #[test]
    fn identity_gram_gives_alpha_equal_y() {
        let ds = Dataset::from_parts(
            vec![vec![0.0], vec![50.0], vec![100.0]],
            vec![1.5, -0.25, 3.0],
            vec![(0.0, 100.0)],
        )
        .unwrap();
        let hp = KernelHyperparams::isotropic(0.1, 1.0, 0.0).unwrap();
        let m = GpModel::fit(&ds, &all(3), &hp, KernelFamily::SquaredExponential).unwrap();
        for (a, y) in m.alpha().iter().zip(&ds.y) {
            assert!((a - y).abs() < 1e-12);
        }
    }

    #[test]
    fn factor_reconstructs_regularized_gram() {
        let ds = random_dataset(20, 2, 7);
        let hp = KernelHyperparams::isotropic(0.4, 1.3, 0.05).unwrap();
        let m = GpModel::fit(&ds, &all(20), &hp, KernelFamily::Matern52).unwrap();
        let l = m.chol();
        for i in 0..20 {
            assert!(l[(i, i)] > 0.0);
            for j in (i + 1)..20 {
                assert_eq!(l[(i, j)], 0.0);
            }
        }
        let mut ky = build_gram(&ds.points, &hp, KernelFamily::Matern52).unwrap();
        for i in 0..20 {
            ky[(i, i)] += 0.05;
        }
        assert!(max_abs(&(l * l.transpose() - ky)) < 1e-8);
    }

    #[test]
    fn prior_recovered_far_from_data() {
        let ds = random_dataset(10, 2, 3);
        let hp = KernelHyperparams::isotropic(0.1, 2.0, 0.01).unwrap();
        let m = GpModel::fit_with_mean(&ds, &all(10), &hp, KernelFamily::SquaredExponential, 0.7).unwrap();
        let (mu, var) = m.posterior(&[50.0, 50.0]).unwrap();
        assert!((mu - 0.7).abs() < 1e-12);
        assert!((var - 2.0).abs() < 1e-12);
    }

    #[test]
    fn interpolates_without_noise() {
        let ds = random_dataset(8, 2, 11);
        let hp = KernelHyperparams::isotropic(0.3, 1.0, 0.0).unwrap();
        let m = GpModel::fit(&ds, &all(8), &hp, KernelFamily::Matern52).unwrap();
        for i in 0..8 {
            let (mu, var) = m.posterior(&ds.points[i]).unwrap();
            assert!((mu - ds.y[i]).abs() < 1e-6);
            assert!(var.abs() < 1e-6);
        }
    }

    #[test]
    fn posterior_matches_dense_solve_oracle() {
        let ds = random_dataset(15, 2, 5);
        let hp = KernelHyperparams::isotropic(0.35, 1.1, 0.02).unwrap();
        let m = GpModel::fit(&ds, &all(15), &hp, KernelFamily::Matern52).unwrap();
        let mut ky = build_gram(&ds.points, &hp, KernelFamily::Matern52).unwrap();
        for i in 0..15 {
            ky[(i, i)] += 0.02;
        }
        let lu = ky.lu();
        let y = DVector::from_column_slice(&ds.y);
        let oracle_alpha = lu.solve(&y).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let x = vec![rng.random::<f64>(), rng.random::<f64>()];
            let k = DVector::from_iterator(
                15,
                ds.points
                    .iter()
                    .map(|p| crate::kernel::kernel_eval(p, &x, &hp, KernelFamily::Matern52).unwrap()),
            );
            let mu_o = k.dot(&oracle_alpha);
            let var_o = 1.1 - k.dot(&lu.solve(&k).unwrap());
            let (mu, var) = m.posterior(&x).unwrap();
            assert!((mu - mu_o).abs() < 1e-8);
            assert!((var - var_o.max(0.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn batch_matches_pointwise() {
        let ds = random_dataset(30, 3, 8);
        let hp = KernelHyperparams::new(vec![0.3, 0.5, 0.7], 1.0, 0.01).unwrap();
        let m = GpModel::fit(&ds, &all(30), &hp, KernelFamily::Matern52).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
            .collect();
        let (means, vars) = m.posterior_batch(&xs).unwrap();
        for (i, x) in xs.iter().enumerate() {
            let (mu, var) = m.posterior(x).unwrap();
            assert!((mu - means[i]).abs() < 1e-12);
            assert!((var - vars[i]).abs() < 1e-12);
            assert!((m.posterior_mean(x).unwrap() - mu).abs() < 1e-12);
        }
    }

    #[test]
    fn posterior_dimension_mismatch() {
        let ds = random_dataset(4, 2, 1);
        let hp = KernelHyperparams::isotropic(0.3, 1.0, 0.01).unwrap();
        let m = GpModel::fit(&ds, &all(4), &hp, KernelFamily::Matern52).unwrap();
        assert!(m.posterior(&[0.1]).is_err());
    }

    #[test]
    fn lml_closed_forms() {
        // n = 1, K_y = [1], y = 0
        let ds = Dataset::from_parts(vec![vec![0.0]], vec![0.0], vec![(0.0, 1.0)]).unwrap();
        let hp = KernelHyperparams::isotropic(1.0, 1.0, 0.0).unwrap();
        let m = GpModel::fit(&ds, &[0], &hp, KernelFamily::SquaredExponential).unwrap();
        assert!((m.log_marginal_likelihood() + 0.918_938_533_204_672_7).abs() < 1e-12);

        // n = 2, K_y = I, y = (1, 1)
        let ds =
            Dataset::from_parts(vec![vec![0.0], vec![100.0]], vec![1.0, 1.0], vec![(0.0, 100.0)]).unwrap();
        let hp = KernelHyperparams::isotropic(0.1, 1.0, 0.0).unwrap();
        let m = GpModel::fit(&ds, &[0, 1], &hp, KernelFamily::SquaredExponential).unwrap();
        assert!((m.log_marginal_likelihood() + 2.837_877_066_409_345_5).abs() < 1e-12);
    }

    #[test]
    fn lml_matches_determinant_oracle() {
        let ds = random_dataset(10, 2, 21);
        let hp = KernelHyperparams::isotropic(0.25, 0.8, 0.03).unwrap();
        let m = GpModel::fit(&ds, &all(10), &hp, KernelFamily::Matern52).unwrap();
        let mut ky = build_gram(&ds.points, &hp, KernelFamily::Matern52).unwrap();
        for i in 0..10 {
            ky[(i, i)] += 0.03;
        }
        let y = DVector::from_column_slice(&ds.y);
        let det = ky.clone().lu().determinant();
        let quad = y.dot(&ky.lu().solve(&y).unwrap());
        let oracle = -0.5 * quad - 0.5 * det.ln() - 5.0 * (2.0 * PI).ln();
        assert!((m.log_marginal_likelihood() - oracle).abs() < 1e-8);
    }

    #[test]
    fn dataset_rejects_out_of_bounds() {
        let mut ds = Dataset::new(vec![(0.0, 1.0)]).unwrap();
        assert!(matches!(ds.push(vec![1.5], 0.0), Err(Error::OutOfBounds { .. })));
        assert!(ds.push(vec![1.0], 0.0).is_ok());
        assert!(Dataset::new(vec![(1.0, 1.0)]).is_err());
    }
}
