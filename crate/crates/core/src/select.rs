//! Gradient embeddings of the GP log-likelihood and diversity-maximizing
//! subset selection.
//!
//! The embedding of sample `i` is `g_i = -K_y⁻¹ e_i`, the derivative with
//! respect to `y_i` of the likelihood gradient `-K_y⁻¹ (y - μ)`. A subset is
//! scored by the variance of the normalized embeddings,
//! `1 - (1/M²) Σ_{i,j∈U} cos(g_i, g_j)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::GpModel;

/// Embedding norms below this are treated as zero directions.
pub const ZERO_GRADIENT_NORM: f64 = 1e-12;

/// `-K_y⁻¹ (y - μ)` over the model's active points.
pub fn compute_scalar_gradients(model: &GpModel) -> DVector<f64> {
    -model.alpha()
}

#[derive(Debug, Clone)]
pub struct GradientEmbedding {
    /// Column `i` holds `g_i`.
    vectors: DMatrix<f64>,
    norms: Vec<f64>,
}

impl GradientEmbedding {
    /// Embeddings from a fitted model: the columns of `-K_y⁻¹`.
    pub fn from_model(model: &GpModel) -> Self {
        Self::from_inverse_gram(&model.inverse_gram())
    }

    /// Embeddings from a precomputed `K_y⁻¹`.
    pub fn from_inverse_gram(inv: &DMatrix<f64>) -> Self {
        Self::from_matrix(-inv)
    }

    /// Arbitrary embedding vectors, given as the columns of `vectors`.
    pub fn from_matrix(vectors: DMatrix<f64>) -> Self {
        let norms = vectors.column_iter().map(|c| c.norm()).collect();
        GradientEmbedding { vectors, norms }
    }

    pub fn from_vectors(vectors: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = vectors.first() else {
            return Err(Error::invalid("no embedding vectors"));
        };
        let dim = first.len();
        if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        let m = DMatrix::from_fn(dim, vectors.len(), |r, c| vectors[c][r]);
        Ok(Self::from_matrix(m))
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// Scale every embedding by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_matrix(&self.vectors * factor)
    }

    /// Cosine similarity of `g_i` and `g_j`. Self-similarity is 1; a zero
    /// embedding has cosine 0 with every other sample.
    pub fn cosine(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 1.0;
        }
        let (ni, nj) = (self.norms[i], self.norms[j]);
        if ni < ZERO_GRADIENT_NORM || nj < ZERO_GRADIENT_NORM {
            return 0.0;
        }
        self.vectors.column(i).dot(&self.vectors.column(j)) / (ni * nj)
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            return Err(Error::invalid(format!(
                "index {i} out of range for {} embeddings",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Free-function form of [`GradientEmbedding::from_model`].
pub fn compute_embeddings(model: &GpModel) -> GradientEmbedding {
    GradientEmbedding::from_model(model)
}

/// `Σ_{i,j∈U} cos(g_i, g_j)` including the diagonal.
pub fn cosine_sum(embedding: &GradientEmbedding, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::invalid("diversity of an empty subset is undefined"));
    }
    for &i in indices {
        embedding.check_index(i)?;
    }
    let mut total = 0.0;
    for (a, &i) in indices.iter().enumerate() {
        total += 1.0;
        for &j in &indices[..a] {
            total += 2.0 * embedding.cosine(i, j);
        }
    }
    Ok(total)
}

pub fn diversity_score(embedding: &GradientEmbedding, indices: &[usize]) -> Result<f64> {
    let m = indices.len() as f64;
    Ok(1.0 - cosine_sum(embedding, indices)? / (m * m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSelection {
    /// Selected indices in the order they were chosen; the forced index first.
    pub indices: Vec<usize>,
    pub forced_index: usize,
    pub diversity_score: f64,
    pub cosine_sum: f64,
}

/// Greedy forward selection of `m` samples starting from `forced_index`.
///
/// Each step adds the candidate whose cosine similarities to the current
/// subset sum to the least (the smallest increase of the pairwise cosine
/// sum), breaking ties by lowest index.
pub fn select_subset(
    embedding: &GradientEmbedding,
    m: usize,
    forced_index: usize,
) -> Result<SubsetSelection> {
    let n = embedding.len();
    if m == 0 {
        return Err(Error::invalid("subset size must be at least 1"));
    }
    if m > n {
        return Err(Error::invalid(format!("subset size {m} exceeds {n} samples")));
    }
    embedding.check_index(forced_index)?;

    let unit: Vec<f64> = embedding
        .norms
        .iter()
        .map(|&v| if v < ZERO_GRADIENT_NORM { 0.0 } else { 1.0 / v })
        .collect();
    let mut chosen = vec![false; n];
    let mut indices = Vec::with_capacity(m);
    // acc[i] = Σ_{j∈U} cos(g_i, g_j) for unselected i.
    let mut acc = vec![0.0; n];
    let mut total = 0.0;

    let mut add = |j: usize, chosen: &mut Vec<bool>, acc: &mut Vec<f64>, total: &mut f64| {
        *total += 1.0 + 2.0 * acc[j];
        chosen[j] = true;
        indices.push(j);
        let gj = embedding.vectors.column(j);
        for i in 0..n {
            if !chosen[i] && unit[i] != 0.0 && unit[j] != 0.0 {
                acc[i] += embedding.vectors.column(i).dot(&gj) * unit[i] * unit[j];
            }
        }
    };

    add(forced_index, &mut chosen, &mut acc, &mut total);
    for _ in 1..m {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if chosen[i] {
                continue;
            }
            match best {
                Some((_, b)) if acc[i] >= b - 1e-12 => {}
                _ => best = Some((i, acc[i])),
            }
        }
        let (j, _) = best.expect("m <= n leaves a candidate");
        add(j, &mut chosen, &mut acc, &mut total);
    }

    let mf = m as f64;
    Ok(SubsetSelection {
        forced_index,
        diversity_score: 1.0 - total / (mf * mf),
        cosine_sum: total,
        indices,
    })
}

/// `K_y⁻¹` for a point set that only ever grows, updated by bordering in
/// `O(n²)` per appended point. The caller resets it when the kernel changes.
#[derive(Debug, Clone, Default)]
pub struct GrowingInverse {
    inv: Option<DMatrix<f64>>,
}

impl GrowingInverse {
    pub fn reset(&mut self, inv: DMatrix<f64>) {
        self.inv = Some(inv);
    }

    pub fn clear(&mut self) {
        self.inv = None;
    }

    pub fn size(&self) -> usize {
        self.inv.as_ref().map_or(0, |m| m.nrows())
    }

    pub fn inverse(&self) -> Option<&DMatrix<f64>> {
        self.inv.as_ref()
    }

    /// Append a point with covariances `border` to the existing points and
    /// regularized self-covariance `corner`. Returns `false` (and clears the
    /// state) when the Schur complement is not safely positive.
    pub fn push(&mut self, border: &DVector<f64>, corner: f64) -> bool {
        let Some(inv) = self.inv.take() else {
            return false;
        };
        let n = inv.nrows();
        debug_assert_eq!(border.len(), n);
        let u = &inv * border;
        let s = corner - border.dot(&u);
        if !(s.is_finite() && s > 1e-10 * corner.abs().max(1e-300)) {
            return false;
        }
        let mut out = DMatrix::zeros(n + 1, n + 1);
        for j in 0..n {
            for i in 0..n {
                out[(i, j)] = inv[(i, j)] + u[i] * u[j] / s;
            }
            out[(n, j)] = -u[j] / s;
            out[(j, n)] = -u[j] / s;
        }
        out[(n, n)] = 1.0 / s;
        self.inv = Some(out);
        true
    }
}
