//! Training phases: which blocks move, how gradients route, and the
//! step/batch loop shared by every strategy.
//!
//! The model splits into four blocks — visual projector, query encoder,
//! decoder (token embeddings included), and the prompt table. A [`Stage`]
//! names the blocks that train and whether the prompt pathway participates
//! in the forward pass at all. Freezing is enforced by the optimizer: a
//! frozen parameter's bits never change, which the tests check literally.
//!
//! Gradient routing for the prompt pathway follows the stop-gradient rules
//! of the quantization objective: the language loss reaches the query
//! encoder through the straight-through estimator (selected rows act as
//! identity in backward), the table itself learns only from the row arm of
//! the quantization loss, and the commitment arm pushes the query toward
//! the rows it picked.

use rand::Rng as _;

use crate::codebook::{
    init_codebook, select_topk, straight_through_prompt, vq_losses, ToolCodebook,
};
use crate::model::{
    assemble_sequence, decode_backward, decode_loss, embed_tokens, embed_tokens_backward,
    encode_query, encode_query_backward, init_model, project_visual, project_visual_backward,
    Instance, ModelState,
};
use crate::numerics::{
    adamw_step, cosine_decay_lr, AdamWConfig, LrSchedule, Rng, Tensor2,
};

use super::{RunConfig, StagePlan, TrainerError};

/// The architectural block a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ParamGroup {
    Projector,
    QueryEncoder,
    Decoder,
    Codebook,
}

/// Block membership by canonical parameter name. Token embeddings are
/// decoder-side: they feed generation, not selection — the query pathway
/// has its own table precisely so the two can train independently.
pub fn param_group(name: &str) -> ParamGroup {
    match name {
        "projector_w" | "projector_b" => ParamGroup::Projector,
        "query_embedding" | "query_linear" => ParamGroup::QueryEncoder,
        "token_embedding" | "dec_w1" | "dec_b1" | "dec_w2" | "dec_b2" => ParamGroup::Decoder,
        "codebook" => ParamGroup::Codebook,
        other => unreachable!("unknown parameter name {other}"),
    }
}

/// One training phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stage {
    pub name: &'static str,
    trained: &'static [ParamGroup],
    /// Whether selection runs and prompt rows join the conditioning.
    pub use_prompts: bool,
}

impl Stage {
    pub fn trains(&self, group: ParamGroup) -> bool {
        self.trained.contains(&group)
    }
}

/// Cross-modal alignment: only the visual projector moves, on no-tool data,
/// before any tool is seen. No prompt pathway.
pub const ALIGNMENT: Stage = Stage {
    name: "alignment",
    trained: &[ParamGroup::Projector],
    use_prompts: false,
};

/// Selection pre-training: the prompt table and the query encoder learn to
/// route while the decoder and projector stay bit-frozen.
pub const ROUTING: Stage = Stage {
    name: "routing",
    trained: &[ParamGroup::Codebook, ParamGroup::QueryEncoder],
    use_prompts: true,
};

/// Joint refinement: every block trains with the prompt pathway active.
pub const REFINEMENT: Stage = Stage {
    name: "refinement",
    trained: &[
        ParamGroup::Projector,
        ParamGroup::QueryEncoder,
        ParamGroup::Decoder,
        ParamGroup::Codebook,
    ],
    use_prompts: true,
};

/// Plain adaptation of projector + decoder with no prompt pathway — the
/// baseline fine-tuning recipe the stream comparisons measure against.
pub const FINETUNE: Stage = Stage {
    name: "finetune",
    trained: &[ParamGroup::Projector, ParamGroup::Decoder],
    use_prompts: false,
};

/// The complete trainable system: decoder model plus prompt table.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub model: ModelState,
    pub codebook: ToolCodebook,
}

/// Fresh parameters for a config. Draw order is fixed — model first, then
/// the codebook from a derived seed — so initialization is reproducible.
pub fn init_pipeline(cfg: &RunConfig, vocab_size: usize, rng: &mut Rng) -> Pipeline {
    let model = init_model(cfg.dims(vocab_size), cfg.prompt_position, rng);
    let codebook = init_codebook(cfg.codebook_size, cfg.context_width, rng.gen());
    Pipeline { model, codebook }
}

impl Pipeline {
    /// Sets the freeze mask for a stage.
    pub fn apply_stage(&mut self, stage: &Stage) {
        for (name, p) in self.model.named_params_mut() {
            p.trainable = stage.trains(param_group(name));
        }
        self.codebook.prompts.trainable = stage.trains(ParamGroup::Codebook);
    }

    pub fn zero_grads(&mut self) {
        for (_, p) in self.model.named_params_mut() {
            p.zero_grad();
        }
        self.codebook.prompts.zero_grad();
    }

    fn scale_grads(&mut self, factor: f64) {
        for (_, p) in self.model.named_params_mut() {
            p.grad.scale(factor);
        }
        self.codebook.prompts.grad.scale(factor);
    }

    /// Conditioning rows for one instance under the current parameters,
    /// with the selection that produced the prompt rows (if any).
    pub fn conditioning(
        &self,
        cfg: &RunConfig,
        use_prompts: bool,
        inst: &Instance,
    ) -> Result<(Tensor2, crate::model::SeqLayout, Option<crate::codebook::Selection>), TrainerError>
    {
        let hv = project_visual(&self.model, &inst.visual)?;
        let hw = embed_tokens(&self.model, &inst.instruction_tokens)?;
        let (prompt, selection) = if use_prompts {
            let q = encode_query(&self.model, &inst.instruction_tokens)?;
            let sel = select_topk(&self.codebook, &q, cfg.top_k)?;
            let mut rows = Tensor2::zeros(0, self.codebook.c());
            for &i in &sel.indices {
                rows.push_row(&straight_through_prompt(&q, self.codebook.row(i)));
            }
            (rows, Some(sel))
        } else {
            (Tensor2::zeros(0, self.model.dims.context_width), None)
        };
        let (cond, layout) = assemble_sequence(&hv, &hw, &prompt, self.model.position);
        Ok((cond, layout, selection))
    }
}

/// Per-instance loss components. `quantization`/`commitment` are raw mean
/// squared distances; the weighted sum is [`StepLosses::total`].
#[derive(Debug, Clone, Copy, Default)]
pub struct StepLosses {
    pub lm: f64,
    pub quantization: f64,
    pub commitment: f64,
}

impl StepLosses {
    pub fn total(&self, cfg: &RunConfig) -> f64 {
        self.lm + cfg.lambda_quant * self.quantization + cfg.lambda_commit * self.commitment
    }

    fn add(&mut self, other: StepLosses) {
        self.lm += other.lm;
        self.quantization += other.quantization;
        self.commitment += other.commitment;
    }

    fn scale(&mut self, factor: f64) {
        self.lm *= factor;
        self.quantization *= factor;
        self.commitment *= factor;
    }
}

/// Forward pass only — used for held-out loss probes.
pub fn instance_loss(
    pipe: &Pipeline,
    cfg: &RunConfig,
    stage: &Stage,
    inst: &Instance,
) -> Result<StepLosses, TrainerError> {
    let (cond, _, selection) = pipe.conditioning(cfg, stage.use_prompts, inst)?;
    let lm = decode_loss(&pipe.model, &cond, &inst.target_tokens)?;
    let mut losses = StepLosses {
        lm,
        ..Default::default()
    };
    if let Some(sel) = selection {
        let k = sel.indices.len() as f64;
        let mut dist = 0.0;
        for &idx in &sel.indices {
            let row = pipe.codebook.row(idx);
            dist += row
                .iter()
                .zip(&sel.query)
                .map(|(&p, &q)| (p - q) * (p - q))
                .sum::<f64>()
                / k;
        }
        losses.quantization = dist;
        losses.commitment = dist;
    }
    Ok(losses)
}

/// Forward + backward for one instance; gradients accumulate unscaled.
pub fn instance_backward(
    pipe: &mut Pipeline,
    cfg: &RunConfig,
    stage: &Stage,
    inst: &Instance,
) -> Result<StepLosses, TrainerError> {
    let (cond, layout, selection) = pipe.conditioning(cfg, stage.use_prompts, inst)?;
    let (lm, grad_cond) = decode_backward(&mut pipe.model, &cond, &inst.target_tokens)?;
    project_visual_backward(
        &mut pipe.model,
        &inst.visual,
        &grad_cond.slice_rows(layout.visual.clone()),
    );
    embed_tokens_backward(
        &mut pipe.model,
        &inst.instruction_tokens,
        &grad_cond.slice_rows(layout.text.clone()),
    );
    let mut losses = StepLosses {
        lm,
        ..Default::default()
    };
    if let Some(sel) = selection {
        let mut query_grad = vec![0.0; pipe.codebook.c()];
        if cfg.straight_through {
            // Selected rows act as identity in backward: their conditioning
            // gradients land on the query, none on the table.
            let grad_prompt = grad_cond.slice_rows(layout.prompt.clone());
            for r in 0..grad_prompt.rows() {
                for (qg, &g) in query_grad.iter_mut().zip(grad_prompt.row(r)) {
                    *qg += g;
                }
            }
        }
        // Without the estimator the hard selection is opaque to the language
        // loss: no gradient crosses it in either direction, and the codebook
        // and query train only through their own distance arms below.
        let vq = vq_losses(&sel, &mut pipe.codebook, cfg.lambda_quant, cfg.lambda_commit)?;
        for (qg, &g) in query_grad.iter_mut().zip(&vq.query_grad) {
            *qg += g;
        }
        encode_query_backward(&mut pipe.model, &inst.instruction_tokens, &query_grad);
        losses.quantization = vq.quantization;
        losses.commitment = vq.commitment;
    }
    Ok(losses)
}

/// Where a step's batch comes from.
#[derive(Debug, Clone, Copy)]
pub enum BatchSource<'a> {
    /// Uniform draws (with replacement) from one pool.
    Uniform(&'a [Instance]),
}

impl<'a> BatchSource<'a> {
    fn is_empty(&self) -> bool {
        match self {
            BatchSource::Uniform(pool) => pool.is_empty(),
        }
    }

    fn draw(&self, batch: usize, rng: &mut Rng) -> Vec<&'a Instance> {
        let mut out = Vec::with_capacity(batch);
        match self {
            BatchSource::Uniform(pool) => {
                for _ in 0..batch {
                    out.push(&pool[rng.gen_range(0..pool.len())]);
                }
            }
        }
        out
    }
}

/// One logged optimization step.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StepRecord {
    pub stage: String,
    pub step: usize,
    pub lr: f64,
    /// Weighted objective: lm + λ1·quantization + λ2·commitment.
    pub loss: f64,
    pub lm_loss: f64,
    pub quantization: f64,
    pub commitment: f64,
}

/// Runs steps `span` of a stage whose schedule covers `plan.steps` total.
/// The split form exists so a checkpointed run can resume mid-stage and
/// land on the same learning-rate curve.
pub fn run_stage_span(
    pipe: &mut Pipeline,
    cfg: &RunConfig,
    stage: &Stage,
    source: BatchSource,
    plan: &StagePlan,
    span: std::ops::Range<usize>,
    rng: &mut Rng,
) -> Result<Vec<StepRecord>, TrainerError> {
    if source.is_empty() {
        return Err(TrainerError::EmptyPool {
            what: format!("{} stage", stage.name),
        });
    }
    pipe.apply_stage(stage);
    let schedule = LrSchedule {
        base_lr: plan.learning_rate,
        total_steps: plan.steps as u64,
        // A short stage must not spend its whole budget warming up.
        warmup_steps: plan.warmup_steps.min(plan.steps / 2) as u64,
    };
    let adamw = AdamWConfig::default();
    let mut records = Vec::with_capacity(span.len());
    for step in span {
        let lr = cosine_decay_lr(&schedule, step as u64)?;
        let batch = source.draw(plan.batch_size, rng);
        pipe.zero_grads();
        let mut sums = StepLosses::default();
        for inst in &batch {
            sums.add(instance_backward(pipe, cfg, stage, inst)?);
        }
        let scale = 1.0 / batch.len() as f64;
        sums.scale(scale);
        pipe.scale_grads(scale);
        let loss = sums.total(cfg);
        if !loss.is_finite() {
            return Err(TrainerError::Diverged {
                stage: stage.name,
                step,
                loss,
            });
        }
        for (_, p) in pipe.model.named_params_mut() {
            adamw_step(p, lr, &adamw)?;
        }
        adamw_step(&mut pipe.codebook.prompts, lr, &adamw)?;
        records.push(StepRecord {
            stage: stage.name.to_string(),
            step,
            lr,
            loss,
            lm_loss: sums.lm,
            quantization: sums.quantization,
            commitment: sums.commitment,
        });
    }
    Ok(records)
}

/// Runs a full stage from step 0.
pub fn run_stage(
    pipe: &mut Pipeline,
    cfg: &RunConfig,
    stage: &Stage,
    source: BatchSource,
    plan: &StagePlan,
    rng: &mut Rng,
) -> Result<Vec<StepRecord>, TrainerError> {
    run_stage_span(pipe, cfg, stage, source, plan, 0..plan.steps, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{builtin_registry, synthesize_corpus_with, SynthOptions};
    use crate::model::{build_instance, Vocab};
    use crate::numerics::seeded_rng;

    fn tiny_cfg() -> RunConfig {
        let mut cfg = super::super::desk_preset();
        cfg.context_width = 12;
        cfg.hidden_width = 16;
        cfg.feature_dim = 8;
        cfg.patches = 2;
        cfg.codebook_size = 6;
        cfg.top_k = 2;
        cfg
    }

    fn tiny_instances(cfg: &RunConfig) -> (Vec<Instance>, Vocab) {
        let reg: Vec<_> = builtin_registry().into_iter().take(2).collect();
        let opts = SynthOptions {
            feature_dim: cfg.feature_dim,
            patches: cfg.patches,
            cluster_noise: cfg.cluster_noise,
        };
        let samples = synthesize_corpus_with(&reg, 6, 5, &opts).unwrap();
        let vocab = Vocab::build(&reg, samples.iter().map(|s| &s.conversation));
        let instances = samples
            .iter()
            .map(|s| build_instance(s, &vocab, cfg.include_round_two, true).unwrap())
            .collect();
        (instances, vocab)
    }

    #[test]
    fn stage_masks_cover_the_blocks() {
        assert!(ALIGNMENT.trains(ParamGroup::Projector));
        assert!(!ALIGNMENT.trains(ParamGroup::Decoder));
        assert!(!ALIGNMENT.use_prompts);
        assert!(ROUTING.trains(ParamGroup::Codebook));
        assert!(ROUTING.trains(ParamGroup::QueryEncoder));
        assert!(!ROUTING.trains(ParamGroup::Decoder));
        assert!(!ROUTING.trains(ParamGroup::Projector));
        for g in [
            ParamGroup::Projector,
            ParamGroup::QueryEncoder,
            ParamGroup::Decoder,
            ParamGroup::Codebook,
        ] {
            assert!(REFINEMENT.trains(g));
        }
        assert!(!FINETUNE.trains(ParamGroup::Codebook));
        assert!(!FINETUNE.trains(ParamGroup::QueryEncoder));
        assert!(!FINETUNE.use_prompts);
    }

    #[test]
    fn frozen_blocks_stay_bit_identical_through_training() {
        let cfg = tiny_cfg();
        let (instances, vocab) = tiny_instances(&cfg);
        let mut rng = seeded_rng(cfg.seed);
        let mut pipe = init_pipeline(&cfg, vocab.len(), &mut rng);
        let before: Vec<(String, Tensor2)> = pipe
            .model
            .named_params()
            .iter()
            .map(|(n, p)| (n.to_string(), p.value.clone()))
            .collect();
        let plan = StagePlan {
            steps: 5,
            batch_size: 4,
            learning_rate: 1e-2,
            warmup_steps: 1,
        };
        run_stage(
            &mut pipe,
            &cfg,
            &ROUTING,
            BatchSource::Uniform(&instances),
            &plan,
            &mut rng,
        )
        .unwrap();
        for (name, old) in &before {
            let now = pipe
                .model
                .named_params()
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, p)| p.value.clone())
                .unwrap();
            match param_group(name) {
                ParamGroup::QueryEncoder => {
                    assert!(!now.bits_eq(old), "{name} should have trained")
                }
                _ => assert!(now.bits_eq(old), "{name} must stay bit-frozen"),
            }
        }
    }

    #[test]
    fn finetune_never_touches_the_prompt_pathway() {
        let cfg = tiny_cfg();
        let (instances, vocab) = tiny_instances(&cfg);
        let mut rng = seeded_rng(3);
        let mut pipe = init_pipeline(&cfg, vocab.len(), &mut rng);
        let book_before = pipe.codebook.prompts.value.clone();
        let query_before = pipe.model.query_embedding.value.clone();
        let decoder_before = pipe.model.dec_w2.value.clone();
        let plan = StagePlan {
            steps: 5,
            batch_size: 4,
            learning_rate: 1e-2,
            warmup_steps: 1,
        };
        run_stage(
            &mut pipe,
            &cfg,
            &FINETUNE,
            BatchSource::Uniform(&instances),
            &plan,
            &mut rng,
        )
        .unwrap();
        assert!(pipe.codebook.prompts.value.bits_eq(&book_before));
        assert!(pipe.model.query_embedding.value.bits_eq(&query_before));
        assert!(
            !pipe.model.dec_w2.value.bits_eq(&decoder_before),
            "the decoder itself should have trained"
        );
    }

    #[test]
    fn straight_through_leaves_table_without_lm_gradient() {
        // With the quantization weights at zero, the only possible source of
        // table gradient is the language loss; straight-through must route
        // all of it to the query instead.
        let mut cfg = tiny_cfg();
        cfg.lambda_quant = 0.0;
        cfg.lambda_commit = 0.0;
        let (instances, vocab) = tiny_instances(&cfg);
        let mut rng = seeded_rng(4);
        let mut pipe = init_pipeline(&cfg, vocab.len(), &mut rng);
        pipe.zero_grads();
        instance_backward(&mut pipe, &cfg, &REFINEMENT, &instances[0]).unwrap();
        let table_grad = &pipe.codebook.prompts.grad;
        assert!(
            table_grad.as_slice().iter().all(|&g| g == 0.0),
            "table must see exactly zero gradient from the language loss"
        );
        assert!(
            pipe.model
                .query_embedding
                .grad
                .as_slice()
                .iter()
                .any(|&g| g != 0.0),
            "query pathway must receive the routed gradient"
        );
    }

    #[test]
    fn ablated_selection_blocks_lm_gradient_both_ways() {
        // With the estimator off, the hard selection is opaque: the language
        // loss alone moves neither the table nor the query pathway. The
        // distance arms remain the only training signal for both.
        let mut cfg = tiny_cfg();
        cfg.straight_through = false;
        cfg.lambda_quant = 0.0;
        cfg.lambda_commit = 0.0;
        let (instances, vocab) = tiny_instances(&cfg);
        let mut rng = seeded_rng(4);
        let mut pipe = init_pipeline(&cfg, vocab.len(), &mut rng);
        pipe.zero_grads();
        instance_backward(&mut pipe, &cfg, &REFINEMENT, &instances[0]).unwrap();
        assert!(pipe
            .codebook
            .prompts
            .grad
            .as_slice()
            .iter()
            .all(|&g| g == 0.0));
        assert!(pipe
            .model
            .query_embedding
            .grad
            .as_slice()
            .iter()
            .all(|&g| g == 0.0));

        // Re-enabling the distance arms restores gradient to both sides.
        cfg.lambda_quant = 1.0;
        cfg.lambda_commit = 0.25;
        pipe.zero_grads();
        instance_backward(&mut pipe, &cfg, &REFINEMENT, &instances[0]).unwrap();
        assert!(pipe
            .codebook
            .prompts
            .grad
            .as_slice()
            .iter()
            .any(|&g| g != 0.0));
        assert!(pipe
            .model
            .query_embedding
            .grad
            .as_slice()
            .iter()
            .any(|&g| g != 0.0));
    }

    #[test]
    fn loss_decreases_on_a_small_pool() {
        let cfg = tiny_cfg();
        let (instances, vocab) = tiny_instances(&cfg);
        let mut rng = seeded_rng(5);
        let mut pipe = init_pipeline(&cfg, vocab.len(), &mut rng);
        let plan = StagePlan {
            steps: 150,
            batch_size: 8,
            learning_rate: 2e-2,
            warmup_steps: 5,
        };
        let records = run_stage(
            &mut pipe,
            &cfg,
            &REFINEMENT,
            BatchSource::Uniform(&instances),
            &plan,
            &mut rng,
        )
        .unwrap();
        assert_eq!(records.len(), 150);
        let first = records[0].loss;
        let last = records.last().unwrap().loss;
        assert!(
            last < first * 0.5,
            "training should halve the loss: {first} -> {last}"
        );
    }

    #[test]
    fn absurd_learning_rate_reports_an_error() {
        let cfg = tiny_cfg();
        let (instances, vocab) = tiny_instances(&cfg);
        let mut rng = seeded_rng(6);
        let mut pipe = init_pipeline(&cfg, vocab.len(), &mut rng);
        let plan = StagePlan {
            steps: 30,
            batch_size: 4,
            learning_rate: 1e200,
            warmup_steps: 0,
        };
        let result = run_stage(
            &mut pipe,
            &cfg,
            &ROUTING,
            BatchSource::Uniform(&instances),
            &plan,
            &mut rng,
        );
        assert!(result.is_err(), "1e200 learning rate must not train quietly");
    }

    #[test]
    fn empty_pool_is_an_error() {
        let cfg = tiny_cfg();
        let (_, vocab) = tiny_instances(&cfg);
        let mut rng = seeded_rng(8);
        let mut pipe = init_pipeline(&cfg, vocab.len(), &mut rng);
        let plan = StagePlan {
            steps: 1,
            batch_size: 2,
            learning_rate: 1e-3,
            warmup_steps: 0,
        };
        let err = run_stage(
            &mut pipe,
            &cfg,
            &FINETUNE,
            BatchSource::Uniform(&[]),
            &plan,
            &mut rng,
        )
        .unwrap_err();
        assert!(matches!(err, TrainerError::EmptyPool { .. }));
    }

    #[test]
    fn split_run_matches_uninterrupted_schedule() {
        let cfg = tiny_cfg();
        let (instances, vocab) = tiny_instances(&cfg);
        let plan = StagePlan {
            steps: 8,
            batch_size: 4,
            learning_rate: 1e-2,
            warmup_steps: 2,
        };
        let mut rng_a = seeded_rng(9);
        let mut full = init_pipeline(&cfg, vocab.len(), &mut rng_a);
        let rec_full = run_stage(
            &mut full,
            &cfg,
            &REFINEMENT,
            BatchSource::Uniform(&instances),
            &plan,
            &mut rng_a,
        )
        .unwrap();
        let mut rng_b = seeded_rng(9);
        let mut split = init_pipeline(&cfg, vocab.len(), &mut rng_b);
        let mut rec_split = run_stage_span(
            &mut split,
            &cfg,
            &REFINEMENT,
            BatchSource::Uniform(&instances),
            &plan,
            0..3,
            &mut rng_b,
        )
        .unwrap();
        rec_split.extend(
            run_stage_span(
                &mut split,
                &cfg,
                &REFINEMENT,
                BatchSource::Uniform(&instances),
                &plan,
                3..8,
                &mut rng_b,
            )
            .unwrap(),
        );
        assert_eq!(rec_full, rec_split);
        for ((_, a), (_, b)) in full.model.named_params().iter().zip(split.model.named_params()) {
            assert!(a.value.bits_eq(&b.value));
        }
        assert!(full
            .codebook
            .prompts
            .value
            .bits_eq(&split.codebook.prompts.value));
    }
}
