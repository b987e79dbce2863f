//! Stationary covariance functions and Gram matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    #[default]
    Matern52,
    SquaredExponential,
}

impl KernelFamily {
    /// Correlation as a function of the squared lengthscale-scaled distance.
    #[inline]
    pub fn correlation(self, r2: f64) -> f64 {
        match self {
            KernelFamily::SquaredExponential => (-0.5 * r2).exp(),
            KernelFamily::Matern52 => {
                let s = (5.0 * r2).sqrt();
                (1.0 + s + 5.0 * r2 / 3.0) * (-s).exp()
            }
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "matern52" | "matern" | "matern-5/2" => Ok(KernelFamily::Matern52),
            "se" | "rbf" | "squared_exponential" | "squaredexponential" => {
                Ok(KernelFamily::SquaredExponential)
            }
            other => Err(Error::Config(format!("unknown kernel `{other}`"))),
        }
    }
}

/// Kernel parameters: lengthscale(s), signal variance and observation noise.
///
/// A single lengthscale is applied isotropically; otherwise there must be one
/// per input dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelHyperparams {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl KernelHyperparams {
    pub fn new(lengthscales: Vec<f64>, signal_variance: f64, noise_variance: f64) -> Result<Self> {
        let hp = KernelHyperparams {
            lengthscales,
            signal_variance,
            noise_variance,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn isotropic(lengthscale: f64, signal_variance: f64, noise_variance: f64) -> Result<Self> {
        Self::new(vec![lengthscale], signal_variance, noise_variance)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty() {
            return Err(Error::InvalidHyperparams("no lengthscales".into()));
        }
        if self.lengthscales.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::InvalidHyperparams(
                "lengthscales must be positive and finite".into(),
            ));
        }
        if !(self.signal_variance.is_finite() && self.signal_variance > 0.0) {
            return Err(Error::InvalidHyperparams(
                "signal variance must be positive and finite".into(),
            ));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(Error::InvalidHyperparams(
                "noise variance must be nonnegative and finite".into(),
            ));
        }
        Ok(())
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        let n = self.lengthscales.len();
        if n == 1 || n == d {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: d, got: n })
        }
    }

    /// Squared distance between `x` and `x2` after scaling by the lengthscales.
    #[inline]
    pub(crate) fn scaled_sq_dist(&self, x: &[f64], x2: &[f64]) -> f64 {
        if self.lengthscales.len() == 1 {
            let inv = 1.0 / self.lengthscales[0];
            x.iter()
                .zip(x2)
                .map(|(a, b)| {
                    let t = (a - b) * inv;
                    t * t
                })
                .sum()
        } else {
            x.iter()
                .zip(x2)
                .zip(&self.lengthscales)
                .map(|((a, b), l)| {
                    let t = (a - b) / l;
                    t * t
                })
                .sum()
        }
    }
}

/// `k(x, x2)` for the given family.
pub fn kernel_eval(x: &[f64], x2: &[f64], hp: &KernelHyperparams, family: KernelFamily) -> Result<f64> {
    if x.len() != x2.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: x2.len(),
        });
    }
    hp.check_dim(x.len())?;
    Ok(hp.signal_variance * family.correlation(hp.scaled_sq_dist(x, x2)))
}

/// Covariance vector between `x` and every row of `points`. Dimensions are
/// assumed to have been validated by the caller.
pub(crate) fn cross_cov_into(
    points: &[Vec<f64>],
    x: &[f64],
    hp: &KernelHyperparams,
    family: KernelFamily,
    out: &mut [f64],
) {
    for (o, p) in out.iter_mut().zip(points) {
        *o = hp.signal_variance * family.correlation(hp.scaled_sq_dist(p, x));
    }
}

/// Gram matrix over `points`. Each off-diagonal pair is computed once and
/// mirrored, so the result is exactly symmetric with diagonal `σ_f²`.
pub fn build_gram(points: &[Vec<f64>], hp: &KernelHyperparams, family: KernelFamily) -> Result<DMatrix<f64>> {
    if points.is_empty() {
        return Err(Error::invalid("cannot build a Gram matrix over zero points"));
    }
    let d = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: p.len(),
        });
    }
    hp.check_dim(d)?;
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = hp.signal_variance;
        for j in 0..i {
            let v = hp.signal_variance * family.correlation(hp.scaled_sq_dist(&points[i], &points[j]));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> KernelHyperparams {
        KernelHyperparams::isotropic(1.0, 1.0, 0.0).unwrap()
    }

    #[test]
    fn zero_distance_is_signal_variance() {
        let hp = KernelHyperparams::isotropic(0.3, 2.5, 0.0).unwrap();
        for fam in [KernelFamily::Matern52, KernelFamily::SquaredExponential] {
            let v = kernel_eval(&[0.2, -1.0], &[0.2, -1.0], &hp, fam).unwrap();
            assert_eq!(v, 2.5);
        }
    }

    #[test]
    fn se_unit_distance() {
        let v = kernel_eval(
            &[0.0, 0.0],
            &[0.6, 0.8],
            &unit(),
            KernelFamily::SquaredExponential,
        )
        .unwrap();
        assert!((v - 0.606_530_659_712_633_4).abs() < 1e-12);
    }

    #[test]
    fn matern_unit_distance_matches_scalar_oracle() {
        // (1 + √5 + 5/3) e^{-√5}, evaluated independently with the closed form.
        let s5 = 5.0_f64.sqrt();
        let oracle = (1.0 + s5 + 5.0 / 3.0) * (-s5).exp();
        assert!((oracle - 0.523_994_108_831_820_3).abs() < 1e-15);
        let v = kernel_eval(&[1.0], &[0.0], &unit(), KernelFamily::Matern52).unwrap();
        assert!((v - oracle).abs() < 1e-14);
    }

    #[test]
    fn dimension_mismatch_errors() {
        let r = kernel_eval(&[0.0, 1.0], &[0.0], &unit(), KernelFamily::Matern52);
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
        let ard = KernelHyperparams::new(vec![1.0, 2.0, 3.0], 1.0, 0.0).unwrap();
        let r = kernel_eval(&[0.0, 1.0], &[0.0, 1.0], &ard, KernelFamily::Matern52);
        assert!(r.is_err());
    }

    #[test]
    fn invalid_hyperparams_rejected() {
        assert!(KernelHyperparams::isotropic(0.0, 1.0, 0.0).is_err());
        assert!(KernelHyperparams::isotropic(1.0, -1.0, 0.0).is_err());
        assert!(KernelHyperparams::isotropic(1.0, 1.0, -0.1).is_err());
        assert!(KernelHyperparams::isotropic(f64::NAN, 1.0, 0.0).is_err());
    }

    #[test]
    fn gram_small_cases() {
        let hp = KernelHyperparams::isotropic(0.5, 1.7, 0.0).unwrap();
        let k = build_gram(&[vec![0.3, 0.1]], &hp, KernelFamily::Matern52).unwrap();
        assert_eq!(k.shape(), (1, 1));
        assert_eq!(k[(0, 0)], 1.7);

        let dup = vec![vec![0.4, 0.4], vec![0.4, 0.4]];
        let k = build_gram(&dup, &hp, KernelFamily::SquaredExponential).unwrap();
        assert!(k.iter().all(|&v| v == 1.7));
    }

    #[test]
    fn gram_matches_entrywise_kernel_calls() {
        let hp = KernelHyperparams::isotropic(0.5, 1.0, 0.0).unwrap();
        let pts = vec![vec![0.12, 0.77], vec![0.91, 0.05], vec![0.44, 0.48]];
        let k = build_gram(&pts, &hp, KernelFamily::SquaredExponential).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let e = kernel_eval(&pts[i], &pts[j], &hp, KernelFamily::SquaredExponential).unwrap();
                assert!((k[(i, j)] - e).abs() < 1e-15);
                assert_eq!(k[(i, j)], k[(j, i)]);
            }
        }
    }

    #[test]
    fn empty_gram_errors() {
        assert!(build_gram(&[], &unit(), KernelFamily::Matern52).is_err());
    }
}
