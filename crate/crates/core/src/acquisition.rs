//! Upper-confidence-bound acquisition: confidence schedules, scoring and a
//! derivative-free maximizer over the box domain.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::GpModel;

/// Schedule for the confidence multiplier `β_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaSchedule {
    Constant {
        value: f64,
    },
    /// `2 log(4π_t/δ) + 2d log(t² b r d √log(4da/δ))` with `π_t = π²t²/6`.
    Srinivas {
        delta: f64,
        dim: usize,
        a: f64,
        b: f64,
        r: f64,
    },
    /// The Srinivas value rescaled by the subset-approximation penalties,
    /// `(σ_min β̃ - A) / (σ_min + B)`.
    GssboAdjusted {
        delta: f64,
        dim: usize,
        a: f64,
        b: f64,
        r: f64,
        sigma_min_floor: f64,
    },
}

impl BetaSchedule {
    /// Practical default: Srinivas with `a = b = 1`, `δ = 0.1` and `r` the
    /// domain diameter.
    pub fn srinivas_default(dim: usize, diameter: f64) -> Self {
        BetaSchedule::Srinivas {
            delta: 0.1,
            dim,
            a: 1.0,
            b: 1.0,
            r: diameter,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BetaSchedule::Constant { value } => {
                if !(value.is_finite() && value >= 0.0) {
                    return Err(Error::invalid("constant beta must be finite and nonnegative"));
                }
            }
            BetaSchedule::Srinivas { delta, dim, a, b, r }
            | BetaSchedule::GssboAdjusted {
                delta, dim, a, b, r, ..
            } => {
                if !(delta > 0.0 && delta < 1.0) {
                    return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
                }
                if dim == 0 || !(a > 0.0 && b > 0.0 && r > 0.0) {
                    return Err(Error::invalid("beta constants a, b, r and dim must be positive"));
                }
            }
        }
        if let BetaSchedule::GssboAdjusted { sigma_min_floor, .. } = *self {
            if sigma_min_floor.is_nan() || sigma_min_floor <= 0.0 {
                return Err(Error::invalid("sigma_min_floor must be positive"));
            }
        }
        Ok(())
    }

    /// `β_t` for `t ≥ 1`. The adjusted kind returns the unpenalized value;
    /// see [`BetaSchedule::adjusted`].
    pub fn beta(&self, t: usize) -> Result<f64> {
        self.validate()?;
        if t == 0 {
            return Err(Error::invalid("iteration index starts at 1"));
        }
        Ok(match *self {
            BetaSchedule::Constant { value } => value,
            BetaSchedule::Srinivas { delta, dim, a, b, r }
            | BetaSchedule::GssboAdjusted {
                delta, dim, a, b, r, ..
            } => srinivas(t, delta, dim, a, b, r),
        })
    }

    /// Penalty-adjusted `β_t` given the penalties `(A, B)` and the minimum
    /// posterior standard deviation. Only differs from [`BetaSchedule::beta`]
    /// for the adjusted kind.
    pub fn adjusted(&self, t: usize, penalty_a: f64, penalty_b: f64, sigma_min: f64) -> Result<f64> {
        let raw = self.beta(t)?;
        match *self {
            BetaSchedule::GssboAdjusted { sigma_min_floor, .. } => {
                let s = sigma_min.max(sigma_min_floor);
                Ok(((s * raw - penalty_a) / (s + penalty_b)).max(0.0))
            }
            _ => Ok(raw),
        }
    }
}

fn srinivas(t: usize, delta: f64, dim: usize, a: f64, b: f64, r: f64) -> f64 {
    let t = t as f64;
    let d = dim as f64;
    let pi_t = PI * PI * t * t / 6.0;
    let inner = (4.0 * d * a / delta).ln().max(0.0).sqrt();
    let v = 2.0 * (4.0 * pi_t / delta).ln() + 2.0 * d * (t * t * b * r * d * inner).ln();
    v.max(0.0)
}

/// `mean + √β · std`
#[inline]
pub fn ucb_score(mean: f64, std: f64, beta_t: f64) -> f64 {
    mean + beta_t.sqrt() * std
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionConfig {
    /// Candidate count; `None` means `1024 · min(d, 8)`.
    pub n_candidates: Option<usize>,
    /// Number of top candidates refined by coordinate search.
    pub n_polish: usize,
    /// Coordinate probes per refinement.
    pub polish_steps: usize,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            n_candidates: None,
            n_polish: 5,
            polish_steps: 50,
        }
    }
}

impl AcquisitionConfig {
    pub fn candidates_for(&self, dim: usize) -> usize {
        self.n_candidates.unwrap_or(1024 * dim.clamp(1, 8)).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionResult {
    pub x: Vec<f64>,
    pub ucb: f64,
    pub mean: f64,
    pub std: f64,
    /// Smallest posterior standard deviation over the candidate set.
    pub min_candidate_std: f64,
}

fn check_bounds(bounds: &[(f64, f64)]) -> Result<()> {
    if bounds.is_empty() {
        return Err(Error::invalid("empty bounds"));
    }
    if let Some(j) = bounds
        .iter()
        .position(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi))
    {
        return Err(Error::invalid(format!("degenerate bounds in dimension {j}")));
    }
    Ok(())
}

/// Maximize the UCB of `model` over `bounds`: score seeded uniform
/// candidates, then refine the best few by a shrinking coordinate search.
/// Deterministic for a given seed; ties go to the earliest candidate.
pub fn optimize_acquisition(
    model: &GpModel,
    beta_t: f64,
    bounds: &[(f64, f64)],
    config: &AcquisitionConfig,
    seed: u64,
) -> Result<AcquisitionResult> {
    check_bounds(bounds)?;
    let d = bounds.len();
    if d != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: d,
        });
    }
    if !(beta_t.is_finite() && beta_t >= 0.0) {
        return Err(Error::invalid("beta must be finite and nonnegative"));
    }
    let mut rng = crate::rng::stream(seed, 0x41_43_51);
    let n_cand = config.candidates_for(d);
    let cands: Vec<Vec<f64>> = (0..n_cand)
        .map(|_| bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect())
        .collect();
    let (means, vars) = model.posterior_batch(&cands)?;
    let scores: Vec<f64> = means
        .iter()
        .zip(&vars)
        .map(|(m, v)| ucb_score(*m, v.sqrt(), beta_t))
        .collect();
    let min_candidate_std = vars.iter().fold(f64::INFINITY, |a, v| a.min(v.sqrt()));

    let mut order: Vec<usize> = (0..n_cand).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));

    let best_idx = order[0];
    let mut best = AcquisitionResult {
        x: cands[best_idx].clone(),
        ucb: scores[best_idx],
        mean: means[best_idx],
        std: vars[best_idx].sqrt(),
        min_candidate_std,
    };

    for &start in order.iter().take(config.n_polish) {
        let polished = polish(
            model,
            beta_t,
            bounds,
            &cands[start],
            scores[start],
            config.polish_steps,
        )?;
        if polished.1 > best.ucb {
            let (mean, var) = model.posterior(&polished.0)?;
            best = AcquisitionResult {
                x: polished.0,
                ucb: polished.1,
                mean,
                std: var.sqrt(),
                min_candidate_std,
            };
        }
    }
    Ok(best)
}

fn polish(
    model: &GpModel,
    beta_t: f64,
    bounds: &[(f64, f64)],
    start: &[f64],
    start_score: f64,
    steps: usize,
) -> Result<(Vec<f64>, f64)> {
    let d = bounds.len();
    let mut x = start.to_vec();
    let mut fx = start_score;
    let mut h: Vec<f64> = bounds.iter().map(|(lo, hi)| 0.1 * (hi - lo)).collect();
    let mut improved_in_sweep = false;
    for step in 0..steps {
        let j = step % d;
        for dir in [1.0, -1.0] {
            let mut trial = x.clone();
            trial[j] = (trial[j] + dir * h[j]).clamp(bounds[j].0, bounds[j].1);
            if trial[j] == x[j] {
                continue;
            }
            let (m, v) = model.posterior(&trial)?;
            let f = ucb_score(m, v.sqrt(), beta_t);
            if f > fx {
                x = trial;
                fx = f;
                improved_in_sweep = true;
                break;
            }
        }
        if j == d - 1 {
            if !improved_in_sweep {
                h.iter_mut().for_each(|v| *v *= 0.5);
            }
            improved_in_sweep = false;
        }
    }
    Ok((x, fx))
}
