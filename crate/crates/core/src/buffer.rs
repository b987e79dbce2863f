//! Wall-clock trigger that switches the loop from full-data fitting to
//! subset fitting and freezes the buffer size.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Monotonic time source, in seconds. Injected so that tests can script
/// iteration timings.
pub trait Clock {
    fn now(&mut self) -> f64;
}

#[derive(Debug, Clone)]
pub struct MonotonicClock {
    origin: Instant,
}

impl Default for MonotonicClock {
    fn default() -> Self {
        MonotonicClock {
            origin: Instant::now(),
        }
    }
}

impl Clock for MonotonicClock {
    fn now(&mut self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

/// Replays a fixed sequence of timestamps, repeating the last one when the
/// script runs out.
#[derive(Debug, Clone, Default)]
pub struct ScriptedClock {
    stamps: Vec<f64>,
    pos: usize,
}

impl ScriptedClock {
    pub fn new(stamps: Vec<f64>) -> Self {
        ScriptedClock { stamps, pos: 0 }
    }

    /// Timestamps for a consumer that reads the clock at the start and end
    /// of every iteration: iteration `k` appears to take `durations[k]`.
    pub fn from_iteration_durations(durations: &[f64]) -> Self {
        let mut stamps = Vec::with_capacity(2 * durations.len());
        let mut t = 0.0;
        for d in durations {
            stamps.push(t);
            t += d;
            stamps.push(t);
        }
        ScriptedClock::new(stamps)
    }
}

impl Clock for ScriptedClock {
    fn now(&mut self) -> f64 {
        let v = self
            .stamps
            .get(self.pos)
            .or(self.stamps.last())
            .copied()
            .unwrap_or(0.0);
        self.pos += 1;
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferPolicy {
    pub z_factor: f64,
    /// Number of iterations averaged into the baseline time.
    pub initial_window: usize,
    /// Average baseline iteration time in seconds, once established.
    pub t_bar: Option<f64>,
    pub switched: bool,
    /// Frozen buffer size, set at the switch.
    pub buffer_size: Option<usize>,
}

impl BufferPolicy {
    pub fn new(z_factor: f64, initial_window: usize) -> Result<Self> {
        if !(z_factor.is_finite() && z_factor > 0.0) {
            return Err(Error::invalid("z_factor must be positive"));
        }
        Ok(BufferPolicy {
            z_factor,
            initial_window: initial_window.max(1),
            t_bar: None,
            switched: false,
            buffer_size: None,
        })
    }

    /// Set the baseline to the mean of the initial iteration times.
    pub fn establish_baseline(&mut self, initial_iteration_times: &[f64]) -> Result<()> {
        if initial_iteration_times.is_empty() {
            return Err(Error::invalid("baseline needs at least one iteration time"));
        }
        if initial_iteration_times
            .iter()
            .any(|t| !(t.is_finite() && *t >= 0.0))
        {
            return Err(Error::invalid("iteration times must be finite and nonnegative"));
        }
        let mean = initial_iteration_times.iter().sum::<f64>() / initial_iteration_times.len() as f64;
        self.t_bar = Some(mean);
        Ok(())
    }

    /// Feed the current iteration time. Switches (and freezes the buffer at
    /// `dataset_size`) the first time `t_current > Z · t_bar`; a no-op once
    /// switched. Returns whether this call performed the switch.
    pub fn observe_iteration(&mut self, t_current: f64, dataset_size: usize) -> Result<bool> {
        if self.switched {
            return Ok(false);
        }
        let t_bar = self.t_bar.ok_or(Error::BaselineMissing)?;
        if !(t_current.is_finite() && t_current >= 0.0) {
            return Err(Error::invalid("iteration time must be finite and nonnegative"));
        }
        if t_current > self.z_factor * t_bar {
            self.switched = true;
            self.buffer_size = Some(dataset_size.max(1));
            return Ok(true);
        }
        Ok(false)
    }

    /// Switch unconditionally with the given buffer size (fixed-size mode).
    pub fn force_switch(&mut self, buffer_size: usize) {
        if !self.switched {
            self.switched = true;
            self.buffer_size = Some(buffer_size.max(1));
        }
    }
}
