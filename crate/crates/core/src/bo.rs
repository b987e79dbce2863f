//! The optimization loop. The GP is fitted on all samples until iterations
//! become slow, then on a buffer-sized subset: gradient-diverse for
//! `gssbo`, uniformly random for the `rssbo` baseline.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::acquisition::{optimize_acquisition, AcquisitionConfig, BetaSchedule};
use crate::buffer::{BufferPolicy, Clock, MonotonicClock};
use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::hyper::{fit_hyperparameters_on, SearchConfig};
use crate::kernel::{build_gram, cross_cov_into, KernelFamily, KernelHyperparams};
use crate::linalg::{add_diagonal, sorted_eigen, spd_inverse};
use crate::nystrom;
use crate::rng::{derive, stream};
use crate::select::{select_subset, GradientEmbedding, GrowingInverse};
use crate::testfns::Objective;

/// Lower bound on the model noise variance after standardization.
pub const MODEL_NOISE_FLOOR: f64 = 1e-6;

const STREAM_DESIGN: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_SUBSET: u64 = 3;
const STREAM_ACQ: u64 = 0x1_0000;
const STREAM_MLE: u64 = 0x2_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Gssbo,
    Rssbo,
    Full,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Gssbo, Strategy::Rssbo, Strategy::Full];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Gssbo => "gssbo",
            Strategy::Rssbo => "rssbo",
            Strategy::Full => "full",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gssbo" => Ok(Strategy::Gssbo),
            "rssbo" => Ok(Strategy::Rssbo),
            "full" | "gp-ucb" | "gpucb" => Ok(Strategy::Full),
            other => Err(Error::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Full,
    Selected,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Full => "full",
            Phase::Selected => "selected",
        })
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Phase::Full),
            "selected" => Ok(Phase::Selected),
            other => Err(Error::Config(format!("unknown phase `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Objective name, optionally with the dimension appended (`levy_10`).
    pub objective: String,
    pub dim: Option<usize>,
    pub n0: usize,
    /// Total number of evaluations, initial design included.
    pub budget: usize,
    pub strategy: Strategy,
    pub seed: u64,
    /// Observation noise variance.
    pub noise: f64,
    pub z_factor: f64,
    /// Switch to a buffer of this size once the data outgrow it, instead of
    /// the timing trigger.
    pub fixed_m: Option<usize>,
    /// BO iterations averaged into the timing baseline; defaults to `n0`.
    pub baseline_window: Option<usize>,
    pub kernel: KernelFamily,
    /// Hyperparameters are refitted every this many iterations and at the
    /// switch.
    pub refit_every: usize,
    /// Defaults to the Srinivas schedule with `r` the domain diameter.
    pub beta: Option<BetaSchedule>,
    pub acquisition: AcquisitionConfig,
    pub mle_starts: usize,
    pub trace_subsets: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            objective: "hartmann6".into(),
            dim: None,
            n0: 20,
            budget: 200,
            strategy: Strategy::Gssbo,
            seed: 0,
            noise: 0.01,
            z_factor: 4.0,
            fixed_m: None,
            baseline_window: None,
            kernel: KernelFamily::Matern52,
            refit_every: 10,
            beta: None,
            acquisition: AcquisitionConfig::default(),
            mle_starts: 8,
            trace_subsets: false,
        }
    }
}

impl RunConfig {
    pub fn objective(&self) -> Result<Objective> {
        Objective::parse(&self.objective, self.dim)
    }

    pub fn validate(&self) -> Result<()> {
        let obj = self.objective()?;
        let cfg = |m: &str| Err(Error::Config(m.to_string()));
        if self.n0 == 0 {
            return cfg("n0 must be at least 1");
        }
        if self.n0 > self.budget {
            return cfg("n0 must not exceed the budget");
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return cfg("noise variance must be finite and nonnegative");
        }
        if !(self.z_factor.is_finite() && self.z_factor > 0.0) {
            return cfg("z_factor must be positive");
        }
        if self.fixed_m == Some(0) {
            return cfg("fixed M must be at least 1");
        }
        if self.baseline_window == Some(0) {
            return cfg("baseline window must be at least 1");
        }
        if self.refit_every == 0 {
            return cfg("refit cadence must be at least 1");
        }
        if let Some(b) = &self.beta {
            b.validate().map_err(|e| Error::Config(e.to_string()))?;
            let dim = match b {
                BetaSchedule::Constant { .. } => obj.dim,
                BetaSchedule::Srinivas { dim, .. } | BetaSchedule::GssboAdjusted { dim, .. } => *dim,
            };
            if dim != obj.dim {
                return cfg("beta schedule dimension differs from the objective");
            }
        }
        Ok(())
    }
}

/// One evaluation. Rows cover the initial design too (with no prior std).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub x: Vec<f64>,
    /// Noisy observation.
    pub y: f64,
    pub f_true: f64,
    /// Best noiseless value among the queries so far.
    pub best_so_far: f64,
    /// Simple regret `f(x*) - best_so_far`.
    pub regret: f64,
    pub inst_regret: f64,
    pub cum_regret: f64,
    pub iter_time_s: f64,
    /// Time spent fitting the GP (hyperparameters and factorization) on the
    /// chosen set, excluding subset selection.
    pub fit_time_s: f64,
    pub select_time_s: f64,
    /// Size of the set the GP was fitted on after this evaluation.
    pub subset_size: usize,
    pub phase: Phase,
    /// Posterior std at `x_t` before it was evaluated (original scale).
    pub prior_std: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetTrace {
    pub t: usize,
    pub newest: usize,
    /// Indices into the evaluation sequence, 0-based, in selection order.
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub objective: String,
    pub strategy: Strategy,
    pub seed: u64,
    pub noise: f64,
    pub rows: Vec<TraceRow>,
    /// `t` of the first row fitted on a selected subset.
    pub switch_t: Option<usize>,
    pub buffer_size: Option<usize>,
    pub t_bar: Option<f64>,
    pub subsets: Option<Vec<SubsetTrace>>,
    pub hyperparams: KernelHyperparams,
}

impl ExperimentRecord {
    pub fn final_cum_regret(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cum_regret)
    }

    pub fn total_time_s(&self) -> f64 {
        self.rows.iter().map(|r| r.iter_time_s).sum()
    }

    pub fn prior_stds(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.prior_std).collect()
    }

    pub fn information_gain(&self) -> Result<f64> {
        information_gain(&self.prior_stds(), self.noise)
    }

    pub fn two_phase_split(&self) -> (f64, f64) {
        two_phase_split(&self.rows)
    }
}

/// `½ Σ log(1 + s_t² / σ²)` over the posterior stds recorded before each
/// query.
pub fn information_gain(prior_stds: &[f64], noise: f64) -> Result<f64> {
    if !(noise.is_finite() && noise > 0.0) {
        return Err(Error::invalid("information gain needs a positive noise variance"));
    }
    Ok(0.5 * prior_stds.iter().map(|s| (s * s / noise).ln_1p()).sum::<f64>())
}

/// Cumulative regret before and after the switch. The two parts sum to the
/// final `cum_regret` exactly.
pub fn two_phase_split(rows: &[TraceRow]) -> (f64, f64) {
    let mut full = 0.0;
    let mut selected = 0.0;
    for r in rows {
        match r.phase {
            Phase::Full => full += r.inst_regret,
            Phase::Selected => selected += r.inst_regret,
        }
    }
    (full, selected)
}

/// Fitted GP together with the affine map back to the original y-scale.
#[derive(Debug, Clone)]
pub struct Surrogate {
    pub model: GpModel,
    pub y_shift: f64,
    pub y_scale: f64,
}

impl Surrogate {
    /// Posterior mean and standard deviation on the original scale.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        let (m, v) = self.model.posterior(x)?;
        Ok((self.y_shift + self.y_scale * m, self.y_scale * v.sqrt()))
    }

    pub fn predict_mean_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        let (m, _) = self.model.posterior_batch(xs)?;
        Ok(m.into_iter().map(|v| self.y_shift + self.y_scale * v).collect())
    }
}

/// What the observer sees after each BO iteration.
pub struct IterationView<'a> {
    pub t: usize,
    pub phase: Phase,
    pub surrogate: &'a Surrogate,
    pub fitting_set: &'a [usize],
}

#[derive(Debug, Clone, Copy)]
struct Standardizer {
    shift: f64,
    scale: f64,
}

impl Standardizer {
    fn new(y: &[f64]) -> Self {
        let n = y.len() as f64;
        let shift = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - shift).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        let scale = if sd.is_finite() && sd > 1e-12 * shift.abs().max(1.0) {
            sd
        } else {
            1.0
        };
        Standardizer { shift, scale }
    }

    fn apply(&self, v: f64) -> f64 {
        (v - self.shift) / self.scale
    }

    fn model_noise(&self, noise: f64) -> f64 {
        (noise / (self.scale * self.scale)).max(MODEL_NOISE_FLOOR)
    }
}

struct RegretTracker {
    optimum: f64,
    best: f64,
    full: f64,
    selected: f64,
}

impl RegretTracker {
    /// Update with a new noiseless value; returns
    /// `(best, simple regret, instantaneous regret, cumulative regret)`.
    fn push(&mut self, f: f64, phase: Phase) -> (f64, f64, f64, f64) {
        let inst = self.optimum - f;
        match phase {
            Phase::Full => self.full += inst,
            Phase::Selected => self.selected += inst,
        }
        self.best = self.best.max(f);
        (
            self.best,
            self.optimum - self.best,
            inst,
            self.full + self.selected,
        )
    }
}

/// Lazily maintained `K_y⁻¹` over every sample, for the gradient embeddings.
#[derive(Default)]
struct GradientCache {
    inv: GrowingInverse,
}

impl GradientCache {
    fn inverse(
        &mut self,
        points: &[Vec<f64>],
        hp: &KernelHyperparams,
        family: KernelFamily,
    ) -> Result<&nalgebra::DMatrix<f64>> {
        let corner = hp.signal_variance + hp.noise_variance;
        while self.inv.size() > 0 && self.inv.size() < points.len() {
            let i = self.inv.size();
            let mut border = DVector::zeros(i);
            cross_cov_into(&points[..i], &points[i], hp, family, border.as_mut_slice());
            if !self.inv.push(&border, corner) {
                self.inv.clear();
            }
        }
        if self.inv.size() == 0 {
            let ky = add_diagonal(&build_gram(points, hp, family)?, hp.noise_variance);
            self.inv.reset(spd_inverse(&ky)?);
        }
        Ok(self.inv.inverse().expect("initialized above"))
    }
}

fn evaluate<R: Rng>(objective: &Objective, x: &[f64], noise_sd: f64, rng: &mut R) -> Result<(f64, f64)> {
    let f = objective.evaluate(x)?;
    let z: f64 = StandardNormal.sample(rng);
    Ok((f, f + noise_sd * z))
}

fn fit_surrogate(
    points: &[Vec<f64>],
    y: &[f64],
    fitting: &[usize],
    hp: &KernelHyperparams,
    family: KernelFamily,
    stats: Standardizer,
) -> Result<Surrogate> {
    let pts = fitting.iter().map(|&i| points[i].clone()).collect();
    let ys = fitting.iter().map(|&i| stats.apply(y[i])).collect();
    let mut model = GpModel::fit_points(pts, ys, hp, family, 0.0)?;
    model.active_indices = fitting.to_vec();
    Ok(Surrogate {
        model,
        y_shift: stats.shift,
        y_scale: stats.scale,
    })
}

/// Penalties for the adjusted confidence schedule, with `‖k_*‖` replaced by
/// its supremum `√n σ_f²` over the domain.
fn loop_penalties(
    points: &[Vec<f64>],
    y: &[f64],
    fitting: &[usize],
    hp: &KernelHyperparams,
    family: KernelFamily,
    stats: Standardizer,
) -> Result<(f64, f64)> {
    let n = points.len();
    let m = fitting.len();
    if m >= n {
        return Ok((0.0, 0.0));
    }
    let k = build_gram(points, hp, family)?;
    let k_hat = nystrom::build_sor_approx(&k, fitting)?;
    let cm = nystrom::c_m(&k, &k_hat, hp.noise_variance);
    let (vals, _) = sorted_eigen(&k);
    let eps = nystrom::eps_g(&k, fitting, m)?;
    let diag_sq = n as f64 * hp.signal_variance * hp.signal_variance;
    let y_norm = y.iter().map(|v| stats.apply(*v).powi(2)).sum::<f64>().sqrt();
    let ks = (n as f64).sqrt() * hp.signal_variance;
    Ok(nystrom::penalty_terms(
        ks,
        y_norm,
        cm,
        vals[m].max(0.0),
        eps,
        diag_sq,
    ))
}

/// Run with the wall clock and no observer.
pub fn run(config: &RunConfig) -> Result<ExperimentRecord> {
    run_with(config, &mut MonotonicClock::default(), &mut |_| {})
}

/// Run with an injected clock (which drives only the switch trigger) and an
/// observer called after every BO iteration.
pub fn run_with(
    config: &RunConfig,
    clock: &mut dyn Clock,
    observer: &mut dyn FnMut(&IterationView<'_>),
) -> Result<ExperimentRecord> {
    config.validate()?;
    let objective = config.objective()?;
    let bounds = objective.bounds.clone();
    let diameter = objective.diameter();
    let family = config.kernel;
    let schedule = config
        .beta
        .clone()
        .unwrap_or_else(|| BetaSchedule::srinivas_default(objective.dim, diameter));
    let adjusted = matches!(schedule, BetaSchedule::GssboAdjusted { .. });
    let seed = config.seed;
    let noise_sd = config.noise.sqrt();
    let mut design_rng = stream(seed, STREAM_DESIGN);
    let mut noise_rng = stream(seed, STREAM_NOISE);
    let mut subset_rng = stream(seed, STREAM_SUBSET);

    let mut points: Vec<Vec<f64>> = Vec::with_capacity(config.budget);
    let mut ys: Vec<f64> = Vec::with_capacity(config.budget);
    let mut rows: Vec<TraceRow> = Vec::with_capacity(config.budget);
    let mut tracker = RegretTracker {
        optimum: objective.optimum,
        best: f64::NEG_INFINITY,
        full: 0.0,
        selected: 0.0,
    };

    for t in 1..=config.n0 {
        let x: Vec<f64> = bounds
            .iter()
            .map(|&(lo, hi)| design_rng.random_range(lo..=hi))
            .collect();
        let (f, y) = evaluate(&objective, &x, noise_sd, &mut noise_rng)?;
        let (best, regret, inst, cum) = tracker.push(f, Phase::Full);
        points.push(x.clone());
        ys.push(y);
        rows.push(TraceRow {
            t,
            x,
            y,
            f_true: f,
            best_so_far: best,
            regret,
            inst_regret: inst,
            cum_regret: cum,
            iter_time_s: 0.0,
            fit_time_s: 0.0,
            select_time_s: 0.0,
            subset_size: t,
            phase: Phase::Full,
            prior_std: None,
            beta: None,
        });
    }

    let search = |noise: f64, t: usize| SearchConfig {
        n_starts: config.mle_starts.max(1),
        noise_variance: noise,
        seed: derive(seed, STREAM_MLE + t as u64),
        ..SearchConfig::default()
    };
    let refit = |fitting: &[usize],
                 points: &[Vec<f64>],
                 ys: &[f64],
                 stats: Standardizer,
                 prev: &KernelHyperparams,
                 t: usize|
     -> Result<KernelHyperparams> {
        let noise = stats.model_noise(config.noise);
        if fitting.len() < 2 {
            return KernelHyperparams::new(prev.lengthscales.clone(), prev.signal_variance, noise);
        }
        let pts: Vec<Vec<f64>> = fitting.iter().map(|&i| points[i].clone()).collect();
        let y: Vec<f64> = fitting.iter().map(|&i| stats.apply(ys[i])).collect();
        fit_hyperparameters_on(&pts, &y, diameter, family, &search(noise, t), Some(prev))
    };

    let mut stats = Standardizer::new(&ys);
    let mut fitting: Vec<usize> = (0..points.len()).collect();
    let mut hp = KernelHyperparams::isotropic(0.2 * diameter, 1.0, stats.model_noise(config.noise))?;
    hp = refit(&fitting, &points, &ys, stats, &hp, config.n0)?;
    let mut surrogate = fit_surrogate(&points, &ys, &fitting, &hp, family, stats)?;

    let mut policy = BufferPolicy::new(config.z_factor, config.baseline_window.unwrap_or(config.n0))?;
    let mut window_times: Vec<f64> = Vec::new();
    let mut gradients = GradientCache::default();
    let mut penalties = (0.0, 0.0);
    let mut sigma_min = hp.signal_variance.sqrt();
    let mut since_refit = 0usize;
    let mut switch_t = None;
    let mut subsets = config.trace_subsets.then(Vec::new);

    for t in (config.n0 + 1)..=config.budget {
        let wall = Instant::now();
        let c0 = clock.now();
        let beta_t = if adjusted {
            schedule.adjusted(t, penalties.0, penalties.1, sigma_min)?
        } else {
            schedule.beta(t)?
        };
        let acq = optimize_acquisition(
            &surrogate.model,
            beta_t,
            &bounds,
            &config.acquisition,
            derive(seed, STREAM_ACQ + t as u64),
        )?;
        sigma_min = acq.min_candidate_std;
        let prior_std = acq.std * stats.scale;
        let (f, y) = evaluate(&objective, &acq.x, noise_sd, &mut noise_rng)?;
        points.push(acq.x.clone());
        ys.push(y);
        let t_current = clock.now() - c0;

        let n = points.len();
        let mut just_switched = false;
        if config.strategy != Strategy::Full && !policy.switched {
            match config.fixed_m {
                Some(m) => {
                    if n > m {
                        policy.force_switch(m);
                        just_switched = true;
                    }
                }
                None if policy.t_bar.is_none() => {
                    window_times.push(t_current);
                    if window_times.len() >= policy.initial_window {
                        policy.establish_baseline(&window_times)?;
                    }
                }
                None => just_switched = policy.observe_iteration(t_current, n)?,
            }
        }
        if just_switched {
            switch_t = Some(t);
        }

        let select_start = Instant::now();
        let newest = n - 1;
        fitting = match policy.buffer_size {
            Some(m) if m < n => match config.strategy {
                Strategy::Gssbo => {
                    let inv = gradients.inverse(&points, &hp, family)?;
                    let emb = GradientEmbedding::from_inverse_gram(inv);
                    select_subset(&emb, m, newest)?.indices
                }
                Strategy::Rssbo => {
                    let mut idx = vec![newest];
                    idx.extend(sample(&mut subset_rng, newest, m - 1));
                    idx
                }
                Strategy::Full => unreachable!("full never switches"),
            },
            _ => (0..n).collect(),
        };
        let select_time = select_start.elapsed().as_secs_f64();

        let fit_start = Instant::now();
        since_refit += 1;
        if since_refit >= config.refit_every || just_switched {
            since_refit = 0;
            stats = Standardizer::new(&ys);
            hp = refit(&fitting, &points, &ys, stats, &hp, t)?;
            gradients.inv.clear();
            if adjusted && policy.switched {
                penalties = loop_penalties(&points, &ys, &fitting, &hp, family, stats)?;
            }
        }
        surrogate = fit_surrogate(&points, &ys, &fitting, &hp, family, stats)?;
        let fit_time = fit_start.elapsed().as_secs_f64();

        let phase = if policy.switched {
            Phase::Selected
        } else {
            Phase::Full
        };
        if let (Some(trace), Phase::Selected) = (subsets.as_mut(), phase) {
            trace.push(SubsetTrace {
                t,
                newest,
                indices: fitting.clone(),
            });
        }
        let (best, regret, inst, cum) = tracker.push(f, phase);
        rows.push(TraceRow {
            t,
            x: acq.x,
            y,
            f_true: f,
            best_so_far: best,
            regret,
            inst_regret: inst,
            cum_regret: cum,
            iter_time_s: wall.elapsed().as_secs_f64(),
            fit_time_s: fit_time,
            select_time_s: select_time,
            subset_size: fitting.len(),
            phase,
            prior_std: Some(prior_std),
            beta: Some(beta_t),
        });
        observer(&IterationView {
            t,
            phase,
            surrogate: &surrogate,
            fitting_set: &fitting,
        });
    }

    Ok(ExperimentRecord {
        objective: objective.name(),
        strategy: config.strategy,
        seed,
        noise: config.noise,
        rows,
        switch_t,
        buffer_size: policy.buffer_size,
        t_bar: policy.t_bar,
        subsets,
        hyperparams: hp,
    })
}
