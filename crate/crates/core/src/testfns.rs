//! Synthetic benchmark objectives in maximization form (the standard
//! minimization functions negated), on their canonical domains.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveId {
    Eggholder2,
    Hartmann6,
    Levy,
    Powell,
    Rastrigin,
}

impl ObjectiveId {
    pub fn name(self) -> &'static str {
        match self {
            ObjectiveId::Eggholder2 => "eggholder2",
            ObjectiveId::Hartmann6 => "hartmann6",
            ObjectiveId::Levy => "levy",
            ObjectiveId::Powell => "powell",
            ObjectiveId::Rastrigin => "rastrigin",
        }
    }
}

impl fmt::Display for ObjectiveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectiveId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "eggholder" | "eggholder2" => Ok(ObjectiveId::Eggholder2),
            "hartmann" | "hartmann6" | "hart6" => Ok(ObjectiveId::Hartmann6),
            "levy" => Ok(ObjectiveId::Levy),
            "powell" => Ok(ObjectiveId::Powell),
            "rastrigin" => Ok(ObjectiveId::Rastrigin),
            other => Err(Error::UnknownObjective(other.to_string())),
        }
    }
}

const HART6_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const HART6_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const HART6_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];
const HART6_ARGMAX: [f64; 6] = [0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573];
const EGGHOLDER_ARGMAX: [f64; 2] = [512.0, 404.2319];

/// A benchmark function with its domain and known optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub id: ObjectiveId,
    pub dim: usize,
    pub bounds: Vec<(f64, f64)>,
    /// Maximum value (of the negated function).
    pub optimum: f64,
    pub optimizer: Option<Vec<f64>>,
}

impl Objective {
    pub fn new(id: ObjectiveId, dim: usize) -> Result<Self> {
        let (dim, lo, hi) = match id {
            ObjectiveId::Eggholder2 => (require_dim(id, dim, 2)?, -512.0, 512.0),
            ObjectiveId::Hartmann6 => (require_dim(id, dim, 6)?, 0.0, 1.0),
            ObjectiveId::Levy => (positive(id, dim)?, -10.0, 10.0),
            ObjectiveId::Rastrigin => (positive(id, dim)?, -5.12, 5.12),
            ObjectiveId::Powell => {
                if dim == 0 || !dim.is_multiple_of(4) {
                    return Err(Error::Config(format!(
                        "powell needs a dimension divisible by 4, got {dim}"
                    )));
                }
                (dim, -4.0, 5.0)
            }
        };
        let optimizer = match id {
            ObjectiveId::Eggholder2 => EGGHOLDER_ARGMAX.to_vec(),
            ObjectiveId::Hartmann6 => HART6_ARGMAX.to_vec(),
            ObjectiveId::Levy => vec![1.0; dim],
            ObjectiveId::Powell | ObjectiveId::Rastrigin => vec![0.0; dim],
        };
        let optimum = raw_value(id, &optimizer);
        Ok(Objective {
            id,
            dim,
            bounds: vec![(lo, hi); dim],
            optimum,
            optimizer: Some(optimizer),
        })
    }

    /// Parse `name`, `name_<d>` or `name<d>` (e.g. `levy_10`, `rastrigin100`).
    pub fn parse(input: &str, dim: Option<usize>) -> Result<Self> {
        let s = input.trim().to_ascii_lowercase();
        if let Ok(id) = s.parse::<ObjectiveId>() {
            let d = dim.unwrap_or(match id {
                ObjectiveId::Eggholder2 => 2,
                ObjectiveId::Hartmann6 => 6,
                ObjectiveId::Powell => 4,
                _ => 2,
            });
            return Objective::new(id, d);
        }
        let split = s.trim_end_matches(|c: char| c.is_ascii_digit());
        let digits = &s[split.len()..];
        let name = split.trim_end_matches('_');
        if digits.is_empty() {
            return Err(Error::UnknownObjective(input.to_string()));
        }
        let id: ObjectiveId = name.parse()?;
        let d: usize = digits
            .parse()
            .map_err(|_| Error::UnknownObjective(input.to_string()))?;
        if let Some(explicit) = dim {
            if explicit != d {
                return Err(Error::Config(format!(
                    "objective `{input}` conflicts with dimension {explicit}"
                )));
            }
        }
        Objective::new(id, d)
    }

    pub fn name(&self) -> String {
        match self.id {
            ObjectiveId::Eggholder2 | ObjectiveId::Hartmann6 => self.id.name().to_string(),
            _ => format!("{}_{}", self.id.name(), self.dim),
        }
    }

    pub fn diameter(&self) -> f64 {
        self.bounds
            .iter()
            .map(|(lo, hi)| (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim && x.iter().zip(&self.bounds).all(|(v, (lo, hi))| v >= lo && v <= hi)
    }

    /// Noiseless value (maximization sign) at `x`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if !self.contains(x) {
            return Err(Error::OutOfBounds { index: 0 });
        }
        Ok(raw_value(self.id, x))
    }

    /// `f(x*) - f(x)` using the noiseless function.
    pub fn instantaneous_regret(&self, x: &[f64]) -> Result<f64> {
        Ok(self.optimum - self.evaluate(x)?)
    }
}

fn require_dim(id: ObjectiveId, dim: usize, want: usize) -> Result<usize> {
    if dim != want {
        return Err(Error::Config(format!("{id} is only defined for d = {want}")));
    }
    Ok(dim)
}

fn positive(id: ObjectiveId, dim: usize) -> Result<usize> {
    if dim == 0 {
        return Err(Error::Config(format!("{id} needs d >= 1")));
    }
    Ok(dim)
}

fn raw_value(id: ObjectiveId, x: &[f64]) -> f64 {
    -match id {
        ObjectiveId::Eggholder2 => eggholder(x),
        ObjectiveId::Hartmann6 => hartmann6(x),
        ObjectiveId::Levy => levy(x),
        ObjectiveId::Powell => powell(x),
        ObjectiveId::Rastrigin => rastrigin(x),
    }
}

fn eggholder(x: &[f64]) -> f64 {
    let (x1, x2) = (x[0], x[1]);
    -(x2 + 47.0) * (x2 + x1 / 2.0 + 47.0).abs().sqrt().sin() - x1 * (x1 - (x2 + 47.0)).abs().sqrt().sin()
}

fn hartmann6(x: &[f64]) -> f64 {
    -(0..4)
        .map(|i| {
            let inner: f64 = (0..6)
                .map(|j| HART6_A[i][j] * (x[j] - HART6_P[i][j]).powi(2))
                .sum();
            HART6_ALPHA[i] * (-inner).exp()
        })
        .sum::<f64>()
}

fn levy(x: &[f64]) -> f64 {
    let w: Vec<f64> = x.iter().map(|v| 1.0 + (v - 1.0) / 4.0).collect();
    let d = w.len();
    let head = (PI * w[0]).sin().powi(2);
    let mid: f64 = w[..d - 1]
        .iter()
        .map(|wi| (wi - 1.0).powi(2) * (1.0 + 10.0 * (PI * wi + 1.0).sin().powi(2)))
        .sum();
    let wd = w[d - 1];
    let tail = (wd - 1.0).powi(2) * (1.0 + (2.0 * PI * wd).sin().powi(2));
    head + mid + tail
}

fn powell(x: &[f64]) -> f64 {
    x.chunks(4)
        .map(|c| {
            (c[0] + 10.0 * c[1]).powi(2)
                + 5.0 * (c[2] - c[3]).powi(2)
                + (c[1] - 2.0 * c[2]).powi(4)
                + 10.0 * (c[0] - c[3]).powi(4)
        })
        .sum()
}

fn rastrigin(x: &[f64]) -> f64 {
    10.0 * x.len() as f64 + x.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos()).sum::<f64>()
}
