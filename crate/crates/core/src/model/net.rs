//! The compact prompt-conditioned decoder and its exact gradients.
//!
//! The architecture is deliberately small — every operation has a
//! hand-written backward pass that the test suite checks against central
//! finite differences — but it keeps the structural split the training
//! schedule needs: a visual projector, a query encoder feeding the prompt
//! table, token embeddings, and an autoregressive decoder head.
//!
//! The decoder scores step `i` from the mean of all visible rows (projected
//! visual patches, instruction embeddings, selected prompt rows, and the
//! first `i` target embeddings), passed through one tanh layer. Mean pooling
//! keeps the context differentiable through every row, so conditioning
//! gradients flow back to the projector, the embeddings, and — via the
//! straight-through estimator — the query encoder.

use std::ops::Range;

use crate::numerics::{
    gaussian_tensor, softmax_cross_entropy, Param, Rng, Tensor2,
};

use super::ModelError;

/// Where the selected prompt rows sit relative to the projected visual
/// patches and the instruction embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptPosition {
    ToolVisionText,
    VisionToolText,
    VisionTextTool,
}

impl Default for PromptPosition {
    fn default() -> Self {
        PromptPosition::VisionTextTool
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ModelDims {
    /// Shared context width every row lives in.
    pub context_width: usize,
    /// Raw visual feature width entering the projector.
    pub feature_dim: usize,
    /// Hidden width of the decoder's tanh layer.
    pub hidden: usize,
    /// Output vocabulary size.
    pub vocab_size: usize,
}

/// All trainable state. Field order here is the canonical parameter order
/// used by checkpoints and the optimizer loop.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub dims: ModelDims,
    pub position: PromptPosition,
    /// feature_dim × context_width
    pub projector_w: Param,
    /// 1 × context_width
    pub projector_b: Param,
    /// vocab_size × context_width, decoder-side lookup table
    pub token_embedding: Param,
    /// vocab_size × context_width, query-side lookup table
    pub query_embedding: Param,
    /// context_width × context_width
    pub query_linear: Param,
    /// context_width × hidden
    pub dec_w1: Param,
    /// 1 × hidden
    pub dec_b1: Param,
    /// hidden × vocab_size
    pub dec_w2: Param,
    /// 1 × vocab_size
    pub dec_b2: Param,
}

pub fn init_model(dims: ModelDims, position: PromptPosition, rng: &mut Rng) -> ModelState {
    let c = dims.context_width;
    let d = dims.feature_dim;
    let h = dims.hidden;
    let v = dims.vocab_size;
    let std_d = 1.0 / (d.max(1) as f64).sqrt();
    let std_c = 1.0 / (c.max(1) as f64).sqrt();
    let std_h = 1.0 / (h.max(1) as f64).sqrt();
    ModelState {
        dims,
        position,
        projector_w: Param::new(gaussian_tensor(d, c, std_d, rng)),
        projector_b: Param::new(Tensor2::zeros(1, c)),
        token_embedding: Param::new(gaussian_tensor(v, c, std_c, rng)),
        query_embedding: Param::new(gaussian_tensor(v, c, std_c, rng)),
        query_linear: Param::new(gaussian_tensor(c, c, std_c, rng)),
        dec_w1: Param::new(gaussian_tensor(c, h, std_c, rng)),
        dec_b1: Param::new(Tensor2::zeros(1, h)),
        dec_w2: Param::new(gaussian_tensor(h, v, std_h, rng)),
        dec_b2: Param::new(Tensor2::zeros(1, v)),
    }
}

impl ModelState {
    /// Parameters in canonical order, paired with their checkpoint names.
    pub fn named_params(&self) -> Vec<(&'static str, &Param)> {
        vec![
            ("projector_w", &self.projector_w),
            ("projector_b", &self.projector_b),
            ("token_embedding", &self.token_embedding),
            ("query_embedding", &self.query_embedding),
            ("query_linear", &self.query_linear),
            ("dec_w1", &self.dec_w1),
            ("dec_b1", &self.dec_b1),
            ("dec_w2", &self.dec_w2),
            ("dec_b2", &self.dec_b2),
        ]
    }

    pub fn named_params_mut(&mut self) -> Vec<(&'static str, &mut Param)> {
        vec![
            ("projector_w", &mut self.projector_w),
            ("projector_b", &mut self.projector_b),
            ("token_embedding", &mut self.token_embedding),
            ("query_embedding", &mut self.query_embedding),
            ("query_linear", &mut self.query_linear),
            ("dec_w1", &mut self.dec_w1),
            ("dec_b1", &mut self.dec_b1),
            ("dec_w2", &mut self.dec_w2),
            ("dec_b2", &mut self.dec_b2),
        ]
    }
}

/// Projects raw visual patch features into context rows: `X·W + b`.
pub fn project_visual(state: &ModelState, visual: &Tensor2) -> Result<Tensor2, ModelError> {
    let w = &state.projector_w.value;
    if visual.cols() != w.rows() {
        return Err(ModelError::WidthMismatch {
            expected: w.rows(),
            got: visual.cols(),
        });
    }
    let b = &state.projector_b.value;
    let mut out = Tensor2::zeros(visual.rows(), w.cols());
    for r in 0..visual.rows() {
        let x = visual.row(r);
        let o = out.row_mut(r);
        o.copy_from_slice(b.row(0));
        for (j, &xj) in x.iter().enumerate() {
            let wrow = w.row(j);
            for (oc, &wv) in o.iter_mut().zip(wrow) {
                *oc += xj * wv;
            }
        }
    }
    Ok(out)
}

/// Accumulates projector gradients given the loss gradient on its output
/// rows. Raw features are data, so no input gradient is produced.
pub fn project_visual_backward(state: &mut ModelState, visual: &Tensor2, grad_out: &Tensor2) {
    let gw = &mut state.projector_w.grad;
    let gb = &mut state.projector_b.grad;
    for r in 0..visual.rows() {
        let x = visual.row(r);
        let g = grad_out.row(r);
        for (j, &xj) in x.iter().enumerate() {
            let grow = gw.row_mut(j);
            for (gc, &gv) in grow.iter_mut().zip(g) {
                *gc += xj * gv;
            }
        }
        let brow = gb.row_mut(0);
        for (bc, &gv) in brow.iter_mut().zip(g) {
            *bc += gv;
        }
    }
}

/// Looks up decoder-side embeddings for a token sequence.
pub fn embed_tokens(state: &ModelState, tokens: &[usize]) -> Result<Tensor2, ModelError> {
    let table = &state.token_embedding.value;
    let mut out = Tensor2::zeros(tokens.len(), table.cols());
    for (r, &t) in tokens.iter().enumerate() {
        if t >= table.rows() {
            return Err(ModelError::TokenOutOfRange {
                id: t,
                vocab: table.rows(),
            });
        }
        out.row_mut(r).copy_from_slice(table.row(t));
    }
    Ok(out)
}

/// Routes per-row output gradients back onto the embedding table.
pub fn embed_tokens_backward(state: &mut ModelState, tokens: &[usize], grad_rows: &Tensor2) {
    let grad = &mut state.token_embedding.grad;
    for (r, &t) in tokens.iter().enumerate() {
        let grow = grad.row_mut(t);
        for (gc, &gv) in grow.iter_mut().zip(grad_rows.row(r)) {
            *gc += gv;
        }
    }
}

/// Encodes an instruction into a single query vector: the mean of the
/// query-side embeddings passed through a linear map. The query table is
/// separate from the decoder's so the selection pathway can train without
/// disturbing generation.
pub fn encode_query(state: &ModelState, tokens: &[usize]) -> Result<Vec<f64>, ModelError> {
    if tokens.is_empty() {
        return Err(ModelError::EmptyInstruction);
    }
    let table = &state.query_embedding.value;
    let c = table.cols();
    let mut mean = vec![0.0; c];
    for &t in tokens {
        if t >= table.rows() {
            return Err(ModelError::TokenOutOfRange {
                id: t,
                vocab: table.rows(),
            });
        }
        for (m, &e) in mean.iter_mut().zip(table.row(t)) {
            *m += e;
        }
    }
    let inv = 1.0 / tokens.len() as f64;
    for m in &mut mean {
        *m *= inv;
    }
    let w = &state.query_linear.value;
    let mut q = vec![0.0; c];
    for (j, &mj) in mean.iter().enumerate() {
        for (qc, &wv) in q.iter_mut().zip(w.row(j)) {
            *qc += mj * wv;
        }
    }
    Ok(q)
}

/// Accumulates query-pathway gradients given the loss gradient on the query
/// vector.
pub fn encode_query_backward(state: &mut ModelState, tokens: &[usize], grad_q: &[f64]) {
    let table = &state.query_embedding.value;
    let c = table.cols();
    let mut mean = vec![0.0; c];
    for &t in tokens {
        for (m, &e) in mean.iter_mut().zip(table.row(t)) {
            *m += e;
        }
    }
    let inv = 1.0 / tokens.len() as f64;
    for m in &mut mean {
        *m *= inv;
    }
    // d q / d W: outer product mean ⊗ grad_q.
    let gw = &mut state.query_linear.grad;
    for (j, &mj) in mean.iter().enumerate() {
        let grow = gw.row_mut(j);
        for (gc, &gv) in grow.iter_mut().zip(grad_q) {
            *gc += mj * gv;
        }
    }
    // d q / d mean = W, then the mean splits evenly over the tokens.
    let w = &state.query_linear.value;
    let mut gmean = vec![0.0; c];
    for (j, gm) in gmean.iter_mut().enumerate() {
        let wrow = w.row(j);
        *gm = wrow.iter().zip(grad_q).map(|(&wv, &gv)| wv * gv).sum();
    }
    let ge = &mut state.query_embedding.grad;
    for &t in tokens {
        let grow = ge.row_mut(t);
        for (gc, &gm) in grow.iter_mut().zip(&gmean) {
            *gc += gm * inv;
        }
    }
}

/// Row ranges of each conditioning block inside the assembled sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeqLayout {
    pub visual: Range<usize>,
    pub text: Range<usize>,
    pub prompt: Range<usize>,
}

/// Concatenates the conditioning blocks in the configured order.
pub fn assemble_sequence(
    visual: &Tensor2,
    text: &Tensor2,
    prompt: &Tensor2,
    position: PromptPosition,
) -> (Tensor2, SeqLayout) {
    let c = visual.cols().max(text.cols()).max(prompt.cols());
    let blocks: [(&Tensor2, u8); 3] = match position {
        PromptPosition::ToolVisionText => [(prompt, 2), (visual, 0), (text, 1)],
        PromptPosition::VisionToolText => [(visual, 0), (prompt, 2), (text, 1)],
        PromptPosition::VisionTextTool => [(visual, 0), (text, 1), (prompt, 2)],
    };
    let mut out = Tensor2::zeros(0, c);
    let mut ranges: [Range<usize>; 3] = [0..0, 0..0, 0..0];
    for (block, tag) in blocks {
        let start = out.rows();
        out.append_rows(block);
        ranges[tag as usize] = start..out.rows();
    }
    let [visual, text, prompt] = ranges;
    (out, SeqLayout { visual, text, prompt })
}

/// Per-step average cross-entropy of the target sequence under teacher
/// forcing. Forward only; shares its arithmetic with the backward pass.
pub fn decode_loss(
    state: &ModelState,
    conditioning: &Tensor2,
    targets: &[usize],
) -> Result<f64, ModelError> {
    run_decoder(state, conditioning, targets, None)
}

/// Same forward pass, plus gradient accumulation into the decoder head, the
/// tanh layer, and the teacher-forced token embeddings. Returns the loss and
/// the gradient with respect to each conditioning row (every conditioning row
/// receives the same vector because the context is a mean).
pub fn decode_backward(
    state: &mut ModelState,
    conditioning: &Tensor2,
    targets: &[usize],
) -> Result<(f64, Tensor2), ModelError> {
    let mut grads = DecoderGrads::new(state);
    let loss = run_decoder(state, conditioning, targets, Some(&mut grads))?;
    let DecoderGrads {
        dec_w1,
        dec_b1,
        dec_w2,
        dec_b2,
        embedding_rows,
        cond_grad,
    } = grads;
    state.dec_w1.grad.add_scaled(&dec_w1, 1.0);
    state.dec_b1.grad.add_scaled(&dec_b1, 1.0);
    state.dec_w2.grad.add_scaled(&dec_w2, 1.0);
    state.dec_b2.grad.add_scaled(&dec_b2, 1.0);
    for (t, row) in embedding_rows {
        let grow = state.token_embedding.grad.row_mut(t);
        for (gc, gv) in grow.iter_mut().zip(row) {
            *gc += gv;
        }
    }
    let mut out = Tensor2::zeros(conditioning.rows(), conditioning.cols());
    for r in 0..out.rows() {
        out.row_mut(r).copy_from_slice(&cond_grad);
    }
    Ok((loss, out))
}

struct DecoderGrads {
    dec_w1: Tensor2,
    dec_b1: Tensor2,
    dec_w2: Tensor2,
    dec_b2: Tensor2,
    /// (token id, gradient row) per teacher-forced prefix token.
    embedding_rows: Vec<(usize, Vec<f64>)>,
    /// Shared gradient on every conditioning row.
    cond_grad: Vec<f64>,
}

impl DecoderGrads {
    fn new(state: &ModelState) -> Self {
        let d = &state.dims;
        DecoderGrads {
            dec_w1: Tensor2::zeros(d.context_width, d.hidden),
            dec_b1: Tensor2::zeros(1, d.hidden),
            dec_w2: Tensor2::zeros(d.hidden, d.vocab_size),
            dec_b2: Tensor2::zeros(1, d.vocab_size),
            embedding_rows: Vec::new(),
            cond_grad: vec![0.0; d.context_width],
        }
    }
}

fn run_decoder(
    state: &ModelState,
    conditioning: &Tensor2,
    targets: &[usize],
    mut grads: Option<&mut DecoderGrads>,
) -> Result<f64, ModelError> {
    if targets.is_empty() {
        return Err(ModelError::EmptyTarget);
    }
    let dims = &state.dims;
    let c = dims.context_width;
    if conditioning.rows() > 0 && conditioning.cols() != c {
        return Err(ModelError::WidthMismatch {
            expected: c,
            got: conditioning.cols(),
        });
    }
    let table = &state.token_embedding.value;
    for &t in targets {
        if t >= table.rows() {
            return Err(ModelError::TokenOutOfRange {
                id: t,
                vocab: table.rows(),
            });
        }
    }
    let w1 = &state.dec_w1.value;
    let b1 = &state.dec_b1.value;
    let w2 = &state.dec_w2.value;
    let b2 = &state.dec_b2.value;

    let mut sum = vec![0.0; c];
    for r in 0..conditioning.rows() {
        for (s, &v) in sum.iter_mut().zip(conditioning.row(r)) {
            *s += v;
        }
    }
    let steps = targets.len();
    let inv_steps = 1.0 / steps as f64;
    let mut total = 0.0;
    // d(loss)/d(context_i) · 1/M_i, accumulated per step; the suffix-sum trick
    // afterwards turns these into per-row gradients.
    let mut scaled_ctx_grads: Vec<Vec<f64>> = Vec::new();

    for (i, &target) in targets.iter().enumerate() {
        let visible = conditioning.rows() + i;
        let mut context = vec![0.0; c];
        if visible > 0 {
            let inv = 1.0 / visible as f64;
            for (ctx, &s) in context.iter_mut().zip(&sum) {
                *ctx = s * inv;
            }
        }
        let mut z = b1.row(0).to_vec();
        for (j, &cj) in context.iter().enumerate() {
            for (zc, &wv) in z.iter_mut().zip(w1.row(j)) {
                *zc += cj * wv;
            }
        }
        let hidden: Vec<f64> = z.iter().map(|&v| v.tanh()).collect();
        let mut logits = b2.row(0).to_vec();
        for (j, &hj) in hidden.iter().enumerate() {
            for (lc, &wv) in logits.iter_mut().zip(w2.row(j)) {
                *lc += hj * wv;
            }
        }
        let (loss, dlogits) = softmax_cross_entropy(&logits, target)?;
        total += loss;

        if let Some(g) = grads.as_deref_mut() {
            // The per-step loss enters the average with weight 1/steps.
            let dlogits: Vec<f64> = dlogits.iter().map(|&v| v * inv_steps).collect();
            for (j, &hj) in hidden.iter().enumerate() {
                let grow = g.dec_w2.row_mut(j);
                for (gc, &dv) in grow.iter_mut().zip(&dlogits) {
                    *gc += hj * dv;
                }
            }
            for (gc, &dv) in g.dec_b2.row_mut(0).iter_mut().zip(&dlogits) {
                *gc += dv;
            }
            let mut dz = vec![0.0; dims.hidden];
            for (j, dzj) in dz.iter_mut().enumerate() {
                let wrow = w2.row(j);
                let dh: f64 = wrow.iter().zip(&dlogits).map(|(&wv, &dv)| wv * dv).sum();
                *dzj = dh * (1.0 - hidden[j] * hidden[j]);
            }
            for (j, &cj) in context.iter().enumerate() {
                let grow = g.dec_w1.row_mut(j);
                for (gc, &dzv) in grow.iter_mut().zip(&dz) {
                    *gc += cj * dzv;
                }
            }
            for (gc, &dzv) in g.dec_b1.row_mut(0).iter_mut().zip(&dz) {
                *gc += dzv;
            }
            let mut dctx = vec![0.0; c];
            if visible > 0 {
                let inv = 1.0 / visible as f64;
                for (j, dc) in dctx.iter_mut().enumerate() {
                    let wrow = w1.row(j);
                    let dv: f64 = wrow.iter().zip(&dz).map(|(&wv, &dzv)| wv * dzv).sum();
                    *dc = dv * inv;
                }
            }
            scaled_ctx_grads.push(dctx);
        }

        // Teacher forcing: the true token joins the visible rows.
        for (s, &e) in sum.iter_mut().zip(table.row(target)) {
            *s += e;
        }
    }

    if let Some(g) = grads {
        // suffix[i] = Σ_{l ≥ i} dctx_l; conditioning rows see every step,
        // prefix token i-1 sees steps i and later.
        let mut suffix = vec![0.0; c];
        for i in (0..steps).rev() {
            for (s, &d) in suffix.iter_mut().zip(&scaled_ctx_grads[i]) {
                *s += d;
            }
            if i == 0 {
                g.cond_grad.copy_from_slice(&suffix);
            } else {
                g.embedding_rows.push((targets[i - 1], suffix.clone()));
            }
        }
    }
    Ok(total * inv_steps)
}

/// Greedy decoding: argmax each step (first maximum wins), teacher-forcing
/// the model's own choices, until `<eos>` or the length cap. The returned
/// sequence includes the `<eos>` when one is produced.
pub fn generate(
    state: &ModelState,
    conditioning: &Tensor2,
    eos: usize,
    max_len: usize,
) -> Vec<usize> {
    let dims = &state.dims;
    let c = dims.context_width;
    let table = &state.token_embedding.value;
    let w1 = &state.dec_w1.value;
    let b1 = &state.dec_b1.value;
    let w2 = &state.dec_w2.value;
    let b2 = &state.dec_b2.value;
    let mut sum = vec![0.0; c];
    for r in 0..conditioning.rows() {
        for (s, &v) in sum.iter_mut().zip(conditioning.row(r)) {
            *s += v;
        }
    }
    let mut out = Vec::new();
    for i in 0..max_len {
        let visible = conditioning.rows() + i;
        let mut context = vec![0.0; c];
        if visible > 0 {
            let inv = 1.0 / visible as f64;
            for (ctx, &s) in context.iter_mut().zip(&sum) {
                *ctx = s * inv;
            }
        }
        let mut z = b1.row(0).to_vec();
        for (j, &cj) in context.iter().enumerate() {
            for (zc, &wv) in z.iter_mut().zip(w1.row(j)) {
                *zc += cj * wv;
            }
        }
        let mut logits = b2.row(0).to_vec();
        for (j, &zj) in z.iter().enumerate() {
            let hj = zj.tanh();
            for (lc, &wv) in logits.iter_mut().zip(w2.row(j)) {
                *lc += hj * wv;
            }
        }
        let mut best = 0;
        for (t, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = t;
            }
        }
        out.push(best);
        if best == eos {
            break;
        }
        for (s, &e) in sum.iter_mut().zip(table.row(best)) {
            *s += e;
        }
    }
    out
}
