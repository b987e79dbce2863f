//! Maximum-likelihood search over kernel hyperparameters.
//!
//! The search runs in log space over an isotropic lengthscale and the signal
//! variance; the observation noise is held at the configured value. Every
//! multi-start candidate is scored, then the best few are refined by a
//! shrinking coordinate search.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::Dataset;
use crate::kernel::{KernelFamily, KernelHyperparams};
use crate::linalg::JITTER_LADDER;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Number of seeded multi-start candidates.
    pub n_starts: usize,
    /// How many of the best candidates are refined by coordinate search.
    pub n_refine: usize,
    /// Likelihood evaluations allowed per refinement.
    pub max_evals_per_refine: usize,
    /// Lengthscale bounds as multiples of the domain diameter.
    pub lengthscale_bounds: (f64, f64),
    /// Bounds on `log σ_f²`.
    pub log_signal_bounds: (f64, f64),
    /// Fixed observation-noise variance.
    pub noise_variance: f64,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            n_starts: 8,
            n_refine: 2,
            max_evals_per_refine: 40,
            lengthscale_bounds: (1e-2, 1e2),
            log_signal_bounds: (-6.0, 6.0),
            noise_variance: 0.01,
            seed: 0,
        }
    }
}

/// Precomputed squared distances for repeated likelihood evaluation.
struct LikelihoodSurface<'a> {
    sq_dist: DMatrix<f64>,
    y: &'a [f64],
    family: KernelFamily,
    noise: f64,
}

impl<'a> LikelihoodSurface<'a> {
    fn new(points: &[Vec<f64>], y: &'a [f64], family: KernelFamily, noise: f64) -> Self {
        let n = points.len();
        let mut sq_dist = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..i {
                let d: f64 = points[i]
                    .iter()
                    .zip(&points[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                sq_dist[(i, j)] = d;
                sq_dist[(j, i)] = d;
            }
        }
        LikelihoodSurface {
            sq_dist,
            y,
            family,
            noise,
        }
    }

    /// Log marginal likelihood at `(log l, log σ_f²)`, or `-inf` when the
    /// regularized Gram matrix cannot be factored.
    fn eval(&self, theta: [f64; 2]) -> f64 {
        let inv_l2 = (-2.0 * theta[0]).exp();
        let sf2 = theta[1].exp();
        let n = self.y.len();
        let mut k = DMatrix::from_fn(n, n, |i, j| {
            sf2 * self.family.correlation(self.sq_dist[(i, j)] * inv_l2)
        });
        for i in 0..n {
            k[(i, i)] += self.noise;
        }
        let chol = Cholesky::new(k.clone()).or_else(|| {
            JITTER_LADDER.iter().find_map(|&j| {
                let mut m = k.clone();
                for i in 0..n {
                    m[(i, i)] += j;
                }
                Cholesky::new(m)
            })
        });
        let Some(chol) = chol else {
            return f64::NEG_INFINITY;
        };
        let y = DVector::from_column_slice(self.y);
        let alpha = chol.solve(&y);
        let l = chol.l_dirty();
        let logdet: f64 = (0..n).map(|i| l[(i, i)].ln()).sum();
        let v = -0.5 * y.dot(&alpha) - logdet - 0.5 * n as f64 * (2.0 * PI).ln();
        if v.is_finite() {
            v
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Search hyperparameters for the active points of `dataset` (zero mean).
pub fn fit_hyperparameters(
    dataset: &Dataset,
    active_indices: &[usize],
    family: KernelFamily,
    config: &SearchConfig,
) -> Result<KernelHyperparams> {
    if active_indices.iter().any(|&i| i >= dataset.len()) {
        return Err(Error::invalid("active index out of range"));
    }
    let points: Vec<Vec<f64>> = active_indices
        .iter()
        .map(|&i| dataset.points[i].clone())
        .collect();
    let y: Vec<f64> = active_indices.iter().map(|&i| dataset.y[i]).collect();
    fit_hyperparameters_on(&points, &y, dataset.diameter(), family, config, None)
}

/// Search on raw points/targets. `warm_start`, when given, is scored as an
/// additional candidate.
pub fn fit_hyperparameters_on(
    points: &[Vec<f64>],
    y: &[f64],
    diameter: f64,
    family: KernelFamily,
    config: &SearchConfig,
    warm_start: Option<&KernelHyperparams>,
) -> Result<KernelHyperparams> {
    if points.len() < 2 {
        return Err(Error::invalid("hyperparameter search needs at least two points"));
    }
    if points.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: y.len(),
        });
    }
    if !(config.noise_variance.is_finite() && config.noise_variance >= 0.0) {
        return Err(Error::InvalidHyperparams(
            "noise variance must be nonnegative".into(),
        ));
    }
    let lo = [
        (config.lengthscale_bounds.0 * diameter).ln(),
        config.log_signal_bounds.0,
    ];
    let hi = [
        (config.lengthscale_bounds.1 * diameter).ln(),
        config.log_signal_bounds.1,
    ];
    let surface = LikelihoodSurface::new(points, y, family, config.noise_variance);

    let mut rng = crate::rng::stream(config.seed, 0x48_5950_4552);
    let mut candidates: Vec<[f64; 2]> = Vec::with_capacity(config.n_starts + 1);
    if let Some(w) = warm_start {
        let ll = if w.lengthscales.len() == 1 {
            w.lengthscales[0].ln()
        } else {
            w.lengthscales.iter().map(|l| l.ln()).sum::<f64>() / w.lengthscales.len() as f64
        };
        candidates.push(clamp([ll, w.signal_variance.ln()], lo, hi));
    }
    for _ in 0..config.n_starts.max(1) {
        candidates.push([rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1])]);
    }

    let mut scored: Vec<([f64; 2], f64)> = candidates.iter().map(|&c| (c, surface.eval(c))).collect();
    // Stable sort keeps candidate order among equal scores.
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    if !scored[0].1.is_finite() {
        return Err(Error::NotPositiveDefinite {
            max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
        });
    }

    let mut best = scored[0];
    for &(start, value) in scored.iter().take(config.n_refine) {
        if !value.is_finite() {
            continue;
        }
        let refined = coordinate_ascent(&surface, start, value, lo, hi, config.max_evals_per_refine);
        if refined.1 > best.1 {
            best = refined;
        }
    }

    KernelHyperparams::isotropic(best.0[0].exp(), best.0[1].exp(), config.noise_variance)
}

fn clamp(t: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> [f64; 2] {
    [t[0].clamp(lo[0], hi[0]), t[1].clamp(lo[1], hi[1])]
}

fn coordinate_ascent(
    surface: &LikelihoodSurface<'_>,
    start: [f64; 2],
    start_value: f64,
    lo: [f64; 2],
    hi: [f64; 2],
    max_evals: usize,
) -> ([f64; 2], f64) {
    let mut x = start;
    let mut fx = start_value;
    let mut step = 1.0;
    let mut evals = 0;
    while step > 1e-3 && evals < max_evals {
        let mut improved = false;
        for k in 0..2 {
            for dir in [1.0, -1.0] {
                if evals >= max_evals {
                    break;
                }
                let mut trial = x;
                trial[k] = (trial[k] + dir * step).clamp(lo[k], hi[k]);
                if trial == x {
                    continue;
                }
                let f = surface.eval(trial);
                evals += 1;
                if f > fx {
                    x = trial;
                    fx = f;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, fx)
}
