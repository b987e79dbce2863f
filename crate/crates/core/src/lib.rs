//! Bayesian optimization that keeps the Gaussian-process surrogate tractable
//! at large evaluation budgets by refitting it on a subset of samples chosen
//! for the diversity of their log-likelihood gradients.
//!
//! The crate is organised around the pieces of the optimization loop:
//!
//! * [`kernel`] and [`gp`]: exact GP regression (Cholesky with jitter),
//!   marginal likelihood and posterior prediction.
//! * [`hyper`]: multi-start maximum-likelihood search for kernel parameters.
//! * [`select`]: gradient embeddings and greedy diversity-maximizing subsets.
//! * [`buffer`]: the wall-clock trigger that freezes the buffer size.
//! * [`acquisition`]: UCB scoring, confidence schedules and the maximizer.
//! * [`bo`]: the loop itself for the gradient-subset, random-subset and
//!   full-data strategies, plus regret bookkeeping.
//! * [`nystrom`]: low-rank (subset-of-regressors) analysis and error bounds.
//! * [`testfns`]: synthetic benchmark objectives.
//! * [`harness`]: experiment grids, CSV/JSON output and summary statistics.

pub mod acquisition;
pub mod bo;
pub mod buffer;
pub mod error;
pub mod gp;
pub mod harness;
pub mod hyper;
pub mod kernel;
pub mod linalg;
pub mod nystrom;
pub mod rng;
pub mod select;
pub mod testfns;

pub use acquisition::{ucb_score, AcquisitionConfig, BetaSchedule};
pub use bo::{run, ExperimentRecord, Phase, RunConfig, Strategy, TraceRow};
pub use buffer::{BufferPolicy, Clock, MonotonicClock, ScriptedClock};
pub use error::{Error, Result};
pub use gp::{Dataset, GpModel};
pub use hyper::{fit_hyperparameters, SearchConfig};
pub use kernel::{KernelFamily, KernelHyperparams};
pub use select::{GradientEmbedding, SubsetSelection};
pub use testfns::{Objective, ObjectiveId};
