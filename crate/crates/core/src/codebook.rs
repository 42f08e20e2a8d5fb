//! The learnable tool codebook.
//!
//! A table of `n` prompt vectors (rows, width `c`). Given an instruction
//! query, the top-K rows by cosine similarity are selected and spliced into
//! the decoder's conditioning sequence. Two quantization losses tie the table
//! to the query distribution:
//!
//! ```text
//! L = lambda1 * mean_k ||sg[q] - P_k||^2  +  lambda2 * mean_k ||q - sg[P_k]||^2
//! ```
//!
//! where `sg` stops gradients: the first term moves only the selected rows,
//! the second only the query. Selection itself is non-differentiable, so the
//! selected rows reach the decoder through a straight-through estimator —
//! forward passes the row value, backward hands the row's gradient to the
//! query path untouched.

use thiserror::Error;

use crate::numerics::{
    cosine_similarity, gaussian_tensor, seeded_rng, NumericsError, Param,
};

#[derive(Debug, Error)]
pub enum CodebookError {
    #[error("requested top-{k} from a codebook of {n} rows")]
    CapacityExceeded { k: usize, n: usize },
    #[error("query width {query} does not match codebook width {codebook}")]
    WidthMismatch { query: usize, codebook: usize },
    #[error("selection index {index} out of range for {n} rows")]
    BadSelection { index: usize, n: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// The prompt table. Rows are initialized from a seeded Gaussian with std
/// `1/sqrt(c)` and renormalized to unit norm, so initial cosine similarities
/// are well-scaled and no row starts degenerate.
#[derive(Debug, Clone)]
pub struct ToolCodebook {
    pub prompts: Param,
}

impl ToolCodebook {
    pub fn n(&self) -> usize {
        self.prompts.value.rows()
    }

    pub fn c(&self) -> usize {
        self.prompts.value.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.prompts.value.row(i)
    }
}

pub fn init_codebook(n: usize, c: usize, seed: u64) -> ToolCodebook {
    assert!(n >= 1 && c >= 1, "codebook needs at least one 1-wide row");
    let mut rng = seeded_rng(seed);
    let mut table = gaussian_tensor(n, c, 1.0 / (c as f64).sqrt(), &mut rng);
    for i in 0..n {
        let row = table.row_mut(i);
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < crate::numerics::MIN_NORM {
            // A c-dimensional Gaussian draw is never this small in practice,
            // but a deterministic fallback beats a poisoned row.
            row[0] = 1.0;
        } else {
            row.iter_mut().for_each(|x| *x /= norm);
        }
    }
    ToolCodebook {
        prompts: Param::new(table),
    }
}

/// Result of a top-K lookup: selected row indices, their similarities
/// (descending), and the query that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub indices: Vec<usize>,
    pub similarities: Vec<f64>,
    pub query: Vec<f64>,
}

/// Top-K rows by cosine similarity to `query`. Deterministic: similarity
/// descending, ties broken toward the lower row index.
pub fn select_topk(
    codebook: &ToolCodebook,
    query: &[f64],
    k: usize,
) -> Result<Selection, CodebookError> {
    let n = codebook.n();
    if k == 0 || k > n {
        return Err(CodebookError::CapacityExceeded { k, n });
    }
    if query.len() != codebook.c() {
        return Err(CodebookError::WidthMismatch {
            query: query.len(),
            codebook: codebook.c(),
        });
    }
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(n);
    for i in 0..n {
        scored.push((i, cosine_similarity(query, codebook.row(i))?));
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("similarities are finite")
            .then(a.0.cmp(&b.0))
    });
    scored.truncate(k);
    Ok(Selection {
        indices: scored.iter().map(|s| s.0).collect(),
        similarities: scored.iter().map(|s| s.1).collect(),
        query: query.to_vec(),
    })
}

/// Forward and gradient pieces of the quantization objective for one query.
#[derive(Debug, Clone)]
pub struct VqLosses {
    /// `lambda1 * quantization + lambda2 * commitment`.
    pub total: f64,
    /// Mean squared distance pulling rows toward the (frozen) query.
    pub quantization: f64,
    /// Mean squared distance pulling the query toward the (frozen) rows.
    pub commitment: f64,
    /// d total / d query — the commitment channel only.
    pub query_grad: Vec<f64>,
}

/// Computes both VQ losses for the selected rows, averaged over the K
/// selections, and routes gradients per the stop-gradient rule: row gradients
/// accumulate into `codebook.prompts.grad`, the query gradient is returned
/// for the caller to push into the encoder. Unselected rows are untouched.
/// Batch averaging is the trainer's job (a uniform post-scale).
pub fn vq_losses(
    selection: &Selection,
    codebook: &mut ToolCodebook,
    lambda1: f64,
    lambda2: f64,
) -> Result<VqLosses, CodebookError> {
    let c = codebook.c();
    let n = codebook.n();
    if selection.query.len() != c {
        return Err(CodebookError::WidthMismatch {
            query: selection.query.len(),
            codebook: c,
        });
    }
    let k = selection.indices.len() as f64;
    let mut quantization = 0.0;
    let mut query_grad = vec![0.0; c];
    for &idx in &selection.indices {
        if idx >= n {
            return Err(CodebookError::BadSelection { index: idx, n });
        }
        let mut sq = 0.0;
        for j in 0..c {
            let diff = codebook.prompts.value.get(idx, j) - selection.query[j];
            sq += diff * diff;
            // d(lambda1 term)/d P_kj = 2*lambda1/K * (P_kj - q_j)
            let g = 2.0 * lambda1 / k * diff;
            let cur = codebook.prompts.grad.get(idx, j);
            codebook.prompts.grad.set(idx, j, cur + g);
            // d(lambda2 term)/d q_j = 2*lambda2/K * (q_j - P_kj)
            query_grad[j] += 2.0 * lambda2 / k * (-diff);
        }
        quantization += sq / k;
    }
    // Both terms share the forward distance; only the gradient routing splits.
    let commitment = quantization;
    Ok(VqLosses {
        total: lambda1 * quantization + lambda2 * commitment,
        quantization,
        commitment,
        query_grad,
    })
}

/// Straight-through conditioning row for one selected prompt.
///
/// Conceptually `q + sg[P - q]`: the forward value is exactly the selected
/// row (returned here), while in backward the row's downstream gradient is
/// handed to the query unchanged — the trainer adds the conditioning-row
/// gradient straight onto the query gradient and none onto the table.
pub fn straight_through_prompt(_query: &[f64], selected_prompt: &[f64]) -> Vec<f64> {
    selected_prompt.to_vec()
}
