//! Classifier models: acoustic projection, causal text encoder, fusion
//! heads, low-rank adapters, and checkpointing.

mod checkpoint;
mod params;
mod vocab;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use params::ParamStore;
pub use vocab::{Vocab, UNK_TOKEN};

use crate::autograd::{NodeId, Tape};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::str::FromStr;
use thiserror::Error;

/// Additive mask value that zeroes attention to future positions.
const MASK_NEG: f64 = -1e9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("configuration invalid: {0}")]
    Config(String),
    #[error("empty token sequence")]
    EmptySequence,
    #[error("empty acoustic frame matrix")]
    EmptyFrames,
    #[error("token id {id} outside vocabulary of {vocab_size}")]
    UnknownTokenId { id: usize, vocab_size: usize },
    #[error("expected {what} of width {expected}, got {got}")]
    DimMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("adapter rank {rank} must be at least 1 and below {limit}")]
    BadRank { rank: usize, limit: usize },
    #[error("operation requires a {required} head, model has {actual}")]
    HeadMismatch {
        required: &'static str,
        actual: &'static str,
    },
    #[error("{0} input missing for this fusion mode")]
    MissingInput(&'static str),
    #[error("batch contains no examples")]
    EmptyBatch,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint malformed: {0}")]
    Checkpoint(String),
}

/// Which encoder outputs feed the classifier head, and which stay frozen
/// when the fused model trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionOption {
    /// Acoustic embedding only.
    AcousticOnly,
    /// Text embedding only.
    TextOnly,
    /// Concatenated embeddings; encoders stay trainable alongside the head.
    FusionOpt1,
    /// Concatenated embeddings; only the fusion head trains.
    FusionOpt2,
}

impl FusionOption {
    pub const ALL: [FusionOption; 4] = [
        FusionOption::AcousticOnly,
        FusionOption::TextOnly,
        FusionOption::FusionOpt1,
        FusionOption::FusionOpt2,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FusionOption::AcousticOnly => "acoustic_only",
            FusionOption::TextOnly => "text_only",
            FusionOption::FusionOpt1 => "fusion_opt1",
            FusionOption::FusionOpt2 => "fusion_opt2",
        }
    }

    pub fn uses_acoustic(&self) -> bool {
        !matches!(self, FusionOption::TextOnly)
    }

    pub fn uses_text(&self) -> bool {
        !matches!(self, FusionOption::AcousticOnly)
    }

    pub fn is_fused(&self) -> bool {
        matches!(self, FusionOption::FusionOpt1 | FusionOption::FusionOpt2)
    }
}

impl std::fmt::Display for FusionOption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionOption {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "acoustic" | "acoustic_only" => Ok(FusionOption::AcousticOnly),
            "text" | "text_only" => Ok(FusionOption::TextOnly),
            "opt1" | "fusion_opt1" => Ok(FusionOption::FusionOpt1),
            "opt2" | "fusion_opt2" => Ok(FusionOption::FusionOpt2),
            other => Err(ModelError::Config(format!("unknown fusion option {other:?}"))),
        }
    }
}

/// Output head shape: one softmax over the three events, or one binary
/// classifier per event routed by instruction index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    ThreeWay,
    MultiTaskBinary,
}

impl HeadKind {
    pub fn name(&self) -> &'static str {
        match self {
            HeadKind::ThreeWay => "three_way",
            HeadKind::MultiTaskBinary => "multi_task_binary",
        }
    }
}

impl std::fmt::Display for HeadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeadKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "three_way" | "threeway" => Ok(HeadKind::ThreeWay),
            "multi_task" | "multi_task_binary" | "multitask" => Ok(HeadKind::MultiTaskBinary),
            other => Err(ModelError::Config(format!("unknown head kind {other:?}"))),
        }
    }
}

/// Dimensions and seed shared by both encoders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Width of one upstream acoustic feature frame.
    pub acoustic_frame_dim: usize,
    /// Output width of the acoustic projection.
    pub acoustic_proj_dim: usize,
    /// Text embedding / hidden width.
    pub text_embed_dim: usize,
    pub text_layers: usize,
    pub text_heads: usize,
    /// Feed-forward inner width.
    pub text_ff_dim: usize,
    /// Positional table size; longer inputs keep their last tokens.
    pub max_seq_len: usize,
    /// Parameter initialization seed.
    pub seed: u64,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("acoustic_frame_dim", self.acoustic_frame_dim),
            ("acoustic_proj_dim", self.acoustic_proj_dim),
            ("text_embed_dim", self.text_embed_dim),
            ("text_layers", self.text_layers),
            ("text_heads", self.text_heads),
            ("text_ff_dim", self.text_ff_dim),
            ("max_seq_len", self.max_seq_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if self.text_embed_dim % self.text_heads != 0 {
            return Err(ModelError::Config(format!(
                "text_embed_dim {} not divisible by text_heads {}",
                self.text_embed_dim, self.text_heads
            )));
        }
        Ok(())
    }

    fn head_dim(&self) -> usize {
        self.text_embed_dim / self.text_heads
    }
}

/// Parameter leaves registered on a tape, keyed by parameter name.
pub struct BoundParams {
    map: BTreeMap<String, NodeId>,
}

impl BoundParams {
    /// Node for a parameter; panics on unknown names.
    pub fn node(&self, name: &str) -> NodeId {
        *self
            .map
            .get(name)
            .unwrap_or_else(|| panic!("unbound parameter {name}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.map.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// One training example for the three-way head.
#[derive(Debug, Clone)]
pub struct ThreeWayExample {
    pub frames: Option<Array2<f64>>,
    pub token_ids: Option<Vec<usize>>,
    pub label: usize,
}

/// One training example for a single binary task head.
#[derive(Debug, Clone)]
pub struct TaskExample {
    pub frames: Option<Array2<f64>>,
    pub token_ids: Vec<usize>,
    pub binary_label: f64,
}

/// Multi-task batch graph: per-task probabilities and losses plus their sum.
pub struct MultitaskGraph {
    pub task_probs: [Option<NodeId>; 3],
    pub task_losses: [Option<NodeId>; 3],
    pub total_loss: NodeId,
}

/// Logits and softmax posterior over the three events.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPosterior {
    pub logits: [f64; 3],
    pub posterior: [f64; 3],
}

/// Overall multi-task objective: the sum of per-task mean losses.
pub fn combine_task_losses(losses: &[f64]) -> f64 {
    losses.iter().sum()
}

/// A turn-event classifier: encoders selected by fusion mode, a three-way
/// or per-task binary head, and optional low-rank adapters on the text
/// attention projections.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: EncoderConfig,
    pub vocab: Vocab,
    pub fusion: FusionOption,
    pub head: HeadKind,
    pub lora_rank: Option<usize>,
    pub params: ParamStore,
}

impl Model {
    /// Build a freshly initialized model. Adapter rank must be positive and
    /// strictly below the smallest adapted matrix dimension.
    pub fn new(
        config: EncoderConfig,
        vocab: Vocab,
        fusion: FusionOption,
        head: HeadKind,
        lora_rank: Option<usize>,
    ) -> Result<Model, ModelError> {
        config.validate()?;
        if vocab.is_empty() && fusion.uses_text() {
            return Err(ModelError::Config("vocabulary is empty".into()));
        }
        if let Some(rank) = lora_rank {
            if !fusion.uses_text() {
                return Err(ModelError::Config(
                    "low-rank adapters require a text encoder".into(),
                ));
            }
            let limit = config.head_dim().min(config.text_embed_dim);
            if rank == 0 || rank >= limit {
                return Err(ModelError::BadRank { rank, limit });
            }
        }
        let mut model = Model {
            config,
            vocab,
            fusion,
            head,
            lora_rank,
            params: ParamStore::new(),
        };
        model.init_params();
        Ok(model)
    }

    /// Width of the embedding entering the classifier head.
    pub fn head_input_dim(&self) -> usize {
        match self.fusion {
            FusionOption::AcousticOnly => self.config.acoustic_proj_dim,
            FusionOption::TextOnly => self.config.text_embed_dim,
            FusionOption::FusionOpt1 | FusionOption::FusionOpt2 => {
                self.config.acoustic_proj_dim + self.config.text_embed_dim
            }
        }
    }

    /// Names of the attention projection matrices that receive adapters.
    pub fn adapted_matrix_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if !self.fusion.uses_text() {
            return names;
        }
        for layer in 0..self.config.text_layers {
            for h in 0..self.config.text_heads {
                for w in ["wq", "wk", "wv"] {
                    names.push(format!("text.l{layer}.attn.h{h}.{w}"));
                }
            }
            names.push(format!("text.l{layer}.attn.wo"));
        }
        names
    }

    fn init_params(&mut self) {
        let cfg = self.config.clone();
        let d_in = self.head_input_dim();
        let vocab_size = self.vocab.len();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        if self.fusion.uses_acoustic() {
            self.params.insert(
                "acoustic.proj.w",
                params::glorot(&mut rng, cfg.acoustic_frame_dim, cfg.acoustic_proj_dim),
            );
            self.params
                .insert("acoustic.proj.b", params::zeros(1, cfg.acoustic_proj_dim));
        }
        if self.fusion.uses_text() {
            let d = cfg.text_embed_dim;
            let dh = cfg.head_dim();
            self.params
                .insert("text.tok_emb", params::uniform(&mut rng, vocab_size, d, 0.08));
            self.params
                .insert("text.pos_emb", params::uniform(&mut rng, cfg.max_seq_len, d, 0.08));
            for layer in 0..cfg.text_layers {
                self.params.insert(format!("text.l{layer}.ln1.g"), params::ones(1, d));
                self.params.insert(format!("text.l{layer}.ln1.b"), params::zeros(1, d));
                for h in 0..cfg.text_heads {
                    for w in ["wq", "wk", "wv"] {
                        self.params.insert(
                            format!("text.l{layer}.attn.h{h}.{w}"),
                            params::glorot(&mut rng, d, dh),
                        );
                    }
                }
                self.params
                    .insert(format!("text.l{layer}.attn.wo"), params::glorot(&mut rng, d, d));
                self.params
                    .insert(format!("text.l{layer}.attn.bo"), params::zeros(1, d));
                self.params.insert(format!("text.l{layer}.ln2.g"), params::ones(1, d));
                self.params.insert(format!("text.l{layer}.ln2.b"), params::zeros(1, d));
                self.params.insert(
                    format!("text.l{layer}.mlp.w1"),
                    params::glorot(&mut rng, d, cfg.text_ff_dim),
                );
                self.params
                    .insert(format!("text.l{layer}.mlp.b1"), params::zeros(1, cfg.text_ff_dim));
                self.params.insert(
                    format!("text.l{layer}.mlp.w2"),
                    params::glorot(&mut rng, cfg.text_ff_dim, d),
                );
                self.params.insert(format!("text.l{layer}.mlp.b2"), params::zeros(1, d));
            }
            self.params.insert("text.lnf.g", params::ones(1, d));
            self.params.insert("text.lnf.b", params::zeros(1, d));
        }
        match self.head {
            HeadKind::ThreeWay => {
                self.params.insert("head.w", params::glorot(&mut rng, d_in, 3));
                self.params.insert("head.b", params::zeros(1, 3));
            }
            HeadKind::MultiTaskBinary => {
                for s in 0..3 {
                    self.params
                        .insert(format!("head.task{s}.w"), params::glorot(&mut rng, d_in, 1));
                    self.params.insert(format!("head.task{s}.b"), params::zeros(1, 1));
                }
            }
        }
        if let Some(rank) = self.lora_rank {
            for name in self.adapted_matrix_names() {
                let (rows, cols) = {
                    let base = self.params.get(&name);
                    (base.nrows(), base.ncols())
                };
                self.params
                    .insert(format!("{name}.lora_a"), params::glorot(&mut rng, rows, rank));
                self.params
                    .insert(format!("{name}.lora_b"), params::zeros(rank, cols));
            }
        }
    }

    /// Register every parameter as a leaf on the tape, upcast to f64.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let map = self
            .params
            .iter()
            .map(|(name, value)| (name.to_string(), tape.leaf(value.mapv(f64::from))))
            .collect();
        BoundParams { map }
    }

    /// Weight node for `name`, with the adapter delta added when present.
    fn effective_weight(&self, tape: &mut Tape, bound: &BoundParams, name: &str) -> NodeId {
        let base = bound.node(name);
        if self.params.contains(&format!("{name}.lora_a")) {
            let delta = tape.matmul(
                bound.node(&format!("{name}.lora_a")),
                bound.node(&format!("{name}.lora_b")),
            );
            tape.add(base, delta)
        } else {
            base
        }
    }

    /// Acoustic embedding `[1, d_p]`: mean over frames, then affine.
    pub fn acoustic_graph(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        frames: &Array2<f64>,
    ) -> Result<NodeId, ModelError> {
        if frames.nrows() == 0 {
            return Err(ModelError::EmptyFrames);
        }
        if frames.ncols() != self.config.acoustic_frame_dim {
            return Err(ModelError::DimMismatch {
                what: "acoustic frames",
                expected: self.config.acoustic_frame_dim,
                got: frames.ncols(),
            });
        }
        let x = tape.leaf(frames.clone());
        let mean = tape.mean_rows(x);
        let proj = tape.matmul(mean, bound.node("acoustic.proj.w"));
        Ok(tape.add_bias(proj, bound.node("acoustic.proj.b")))
    }

    fn layer_norm(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        x: NodeId,
        prefix: &str,
    ) -> NodeId {
        let normed = tape.layer_norm_rows(x);
        let scaled = tape.mul_bias(normed, bound.node(&format!("{prefix}.g")));
        tape.add_bias(scaled, bound.node(&format!("{prefix}.b")))
    }

    /// Hidden states `[T, d_l]` of the causal text encoder.
    pub fn text_hidden_graph(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        ids: &[usize],
    ) -> Result<NodeId, ModelError> {
        if ids.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        let vocab_size = self.vocab.len();
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab_size) {
            return Err(ModelError::UnknownTokenId { id: bad, vocab_size });
        }
        let max = self.config.max_seq_len;
        let ids: Vec<usize> = if ids.len() > max {
            log::warn!(
                "token sequence of {} exceeds max_seq_len {max}; keeping the last {max} tokens",
                ids.len()
            );
            ids[ids.len() - max..].to_vec()
        } else {
            ids.to_vec()
        };
        let t = ids.len();
        let dh = self.config.head_dim();
        let tok = tape.gather_rows(bound.node("text.tok_emb"), ids);
        let pos = tape.gather_rows(bound.node("text.pos_emb"), (0..t).collect());
        let mut x = tape.add(tok, pos);
        let mask = tape.leaf(Array2::from_shape_fn((t, t), |(i, j)| {
            if j > i {
                MASK_NEG
            } else {
                0.0
            }
        }));
        let scale = 1.0 / (dh as f64).sqrt();
        for layer in 0..self.config.text_layers {
            let prefix = format!("text.l{layer}");
            let normed = self.layer_norm(tape, bound, x, &format!("{prefix}.ln1"));
            let mut heads = Vec::with_capacity(self.config.text_heads);
            for h in 0..self.config.text_heads {
                let at = format!("{prefix}.attn.h{h}");
                let wq = self.effective_weight(tape, bound, &format!("{at}.wq"));
                let wk = self.effective_weight(tape, bound, &format!("{at}.wk"));
                let wv = self.effective_weight(tape, bound, &format!("{at}.wv"));
                let q = tape.matmul(normed, wq);
                let k = tape.matmul(normed, wk);
                let v = tape.matmul(normed, wv);
                let scores = tape.matmul_nt(q, k);
                let scores = tape.scale(scores, scale);
                let scores = tape.add(scores, mask);
                let attn = tape.softmax_rows(scores);
                heads.push(tape.matmul(attn, v));
            }
            let ctx = tape.concat_cols(&heads);
            let wo = self.effective_weight(tape, bound, &format!("{prefix}.attn.wo"));
            let out = tape.matmul(ctx, wo);
            let out = tape.add_bias(out, bound.node(&format!("{prefix}.attn.bo")));
            x = tape.add(x, out);
            let normed2 = self.layer_norm(tape, bound, x, &format!("{prefix}.ln2"));
            let mid = tape.matmul(normed2, bound.node(&format!("{prefix}.mlp.w1")));
            let mid = tape.add_bias(mid, bound.node(&format!("{prefix}.mlp.b1")));
            let mid = tape.tanh(mid);
            let mlp = tape.matmul(mid, bound.node(&format!("{prefix}.mlp.w2")));
            let mlp = tape.add_bias(mlp, bound.node(&format!("{prefix}.mlp.b2")));
            x = tape.add(x, mlp);
        }
        Ok(self.layer_norm(tape, bound, x, "text.lnf"))
    }

    /// Text embedding `[1, d_l]`: final hidden state at the last position.
    pub fn text_graph(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        ids: &[usize],
    ) -> Result<NodeId, ModelError> {
        let hidden = self.text_hidden_graph(tape, bound, ids)?;
        let t = tape.value(hidden).nrows();
        Ok(tape.gather_rows(hidden, vec![t - 1]))
    }

    /// Embedding `[1, head_input_dim]` for one example under the current
    /// fusion mode.
    pub fn embedding_graph(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        frames: Option<&Array2<f64>>,
        token_ids: Option<&[usize]>,
    ) -> Result<NodeId, ModelError> {
        let e_a = if self.fusion.uses_acoustic() {
            Some(self.acoustic_graph(tape, bound, frames.ok_or(ModelError::MissingInput("acoustic"))?)?)
        } else {
            None
        };
        let e_l = if self.fusion.uses_text() {
            Some(self.text_graph(tape, bound, token_ids.ok_or(ModelError::MissingInput("text"))?)?)
        } else {
            None
        };
        match (e_a, e_l) {
            (Some(a), Some(l)) => Ok(tape.concat_cols(&[a, l])),
            (Some(a), None) => Ok(a),
            (None, Some(l)) => Ok(l),
            (None, None) => unreachable!("fusion mode uses at least one encoder"),
        }
    }

    /// Three-way logits `[B, 3]` from embeddings `[B, head_input_dim]`.
    pub fn three_way_logits_graph(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        embedding: NodeId,
    ) -> Result<NodeId, ModelError> {
        if self.head != HeadKind::ThreeWay {
            return Err(ModelError::HeadMismatch {
                required: "three_way",
                actual: self.head.name(),
            });
        }
        let z = tape.matmul(embedding, bound.node("head.w"));
        Ok(tape.add_bias(z, bound.node("head.b")))
    }

    /// Binary logit `[B, 1]` from task head `s`.
    pub fn task_logit_graph(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        s: usize,
        embedding: NodeId,
    ) -> Result<NodeId, ModelError> {
        if self.head != HeadKind::MultiTaskBinary {
            return Err(ModelError::HeadMismatch {
                required: "multi_task_binary",
                actual: self.head.name(),
            });
        }
        if s >= 3 {
            return Err(ModelError::Config(format!("task index {s} out of range")));
        }
        let z = tape.matmul(embedding, bound.node(&format!("head.task{s}.w")));
        Ok(tape.add_bias(z, bound.node(&format!("head.task{s}.b"))))
    }

    /// Batch graph for the three-way head: softmax probabilities `[B, 3]`
    /// and mean cross-entropy loss.
    pub fn three_way_batch_graph(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        examples: &[ThreeWayExample],
    ) -> Result<(NodeId, NodeId), ModelError> {
        if examples.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let mut rows = Vec::with_capacity(examples.len());
        for ex in examples {
            rows.push(self.embedding_graph(
                tape,
                bound,
                ex.frames.as_ref(),
                ex.token_ids.as_deref(),
            )?);
        }
        let batch = tape.vstack(&rows);
        let logits = self.three_way_logits_graph(tape, bound, batch)?;
        let probs = tape.softmax_rows(logits);
        let labels: Vec<usize> = examples.iter().map(|e| e.label).collect();
        if let Some(&bad) = labels.iter().find(|&&l| l >= 3) {
            return Err(ModelError::Config(format!("class label {bad} out of range")));
        }
        let loss = tape.ce_mean(probs, labels);
        Ok((probs, loss))
    }

    /// Batch graph for the multi-task head. Task `s` examples flow only
    /// through head `s`; the total loss sums the per-task mean losses.
    pub fn multitask_graph(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        tasks: &[Vec<TaskExample>; 3],
    ) -> Result<MultitaskGraph, ModelError> {
        let mut task_probs = [None, None, None];
        let mut task_losses = [None, None, None];
        let mut total: Option<NodeId> = None;
        for (s, batch) in tasks.iter().enumerate() {
            if batch.is_empty() {
                continue;
            }
            let mut rows = Vec::with_capacity(batch.len());
            for ex in batch {
                rows.push(self.embedding_graph(
                    tape,
                    bound,
                    ex.frames.as_ref(),
                    Some(&ex.token_ids),
                )?);
            }
            let emb = tape.vstack(&rows);
            let logit = self.task_logit_graph(tape, bound, s, emb)?;
            let probs = tape.logistic(logit);
            let targets =
                Array2::from_shape_fn((batch.len(), 1), |(i, _)| batch[i].binary_label);
            let loss = tape.bce_mean(probs, targets);
            task_probs[s] = Some(probs);
            task_losses[s] = Some(loss);
            total = Some(match total {
                Some(acc) => tape.add(acc, loss),
                None => loss,
            });
        }
        let total_loss = total.ok_or(ModelError::EmptyBatch)?;
        Ok(MultitaskGraph {
            task_probs,
            task_losses,
            total_loss,
        })
    }

    /// Evaluate the acoustic embedding for a frame matrix.
    pub fn encode_acoustic(&self, frames: &Array2<f64>) -> Result<Array2<f64>, ModelError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let node = self.acoustic_graph(&mut tape, &bound, frames)?;
        Ok(tape.value(node).clone())
    }

    /// Evaluate the full hidden-state matrix `[T, d_l]` for a token sequence.
    pub fn text_hidden_states(&self, ids: &[usize]) -> Result<Array2<f64>, ModelError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let node = self.text_hidden_graph(&mut tape, &bound, ids)?;
        Ok(tape.value(node).clone())
    }

    /// Evaluate the text embedding (last hidden row) for a token sequence.
    pub fn encode_text(&self, ids: &[usize]) -> Result<Array2<f64>, ModelError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let node = self.text_graph(&mut tape, &bound, ids)?;
        Ok(tape.value(node).clone())
    }

    /// Apply the three-way head to an embedding row.
    pub fn classify(&self, embedding: &Array2<f64>) -> Result<ClassPosterior, ModelError> {
        if embedding.nrows() != 1 || embedding.ncols() != self.head_input_dim() {
            return Err(ModelError::DimMismatch {
                what: "embedding",
                expected: self.head_input_dim(),
                got: embedding.ncols(),
            });
        }
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let emb = tape.leaf(embedding.clone());
        let logits = self.three_way_logits_graph(&mut tape, &bound, emb)?;
        let probs = tape.softmax_rows(logits);
        let l = tape.value(logits);
        let p = tape.value(probs);
        Ok(ClassPosterior {
            logits: [l[[0, 0]], l[[0, 1]], l[[0, 2]]],
            posterior: [p[[0, 0]], p[[0, 1]], p[[0, 2]]],
        })
    }

    /// Concatenate precomputed embeddings and apply the fused three-way
    /// head; returns the logits row.
    pub fn fuse(&self, e_a: &Array2<f64>, e_l: &Array2<f64>) -> Result<Array2<f64>, ModelError> {
        if !self.fusion.is_fused() {
            return Err(ModelError::Config(format!(
                "fuse requires a fused model, got {}",
                self.fusion
            )));
        }
        if e_a.nrows() != 1 || e_a.ncols() != self.config.acoustic_proj_dim {
            return Err(ModelError::DimMismatch {
                what: "acoustic embedding",
                expected: self.config.acoustic_proj_dim,
                got: e_a.ncols(),
            });
        }
        if e_l.nrows() != 1 || e_l.ncols() != self.config.text_embed_dim {
            return Err(ModelError::DimMismatch {
                what: "text embedding",
                expected: self.config.text_embed_dim,
                got: e_l.ncols(),
            });
        }
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let a = tape.leaf(e_a.clone());
        let l = tape.leaf(e_l.clone());
        let cat = tape.concat_cols(&[a, l]);
        let logits = self.three_way_logits_graph(&mut tape, &bound, cat)?;
        Ok(tape.value(logits).clone())
    }

    /// Softmax posterior over the three events for one example.
    pub fn score_three_way(
        &self,
        frames: Option<&Array2<f64>>,
        token_ids: Option<&[usize]>,
    ) -> Result<[f64; 3], ModelError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let emb = self.embedding_graph(&mut tape, &bound, frames, token_ids)?;
        let logits = self.three_way_logits_graph(&mut tape, &bound, emb)?;
        let probs = tape.softmax_rows(logits);
        let p = tape.value(probs);
        Ok([p[[0, 0]], p[[0, 1]], p[[0, 2]]])
    }

    /// Probability from binary task head `s` for one example.
    pub fn score_task(
        &self,
        s: usize,
        frames: Option<&Array2<f64>>,
        token_ids: Option<&[usize]>,
    ) -> Result<f64, ModelError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let emb = self.embedding_graph(&mut tape, &bound, frames, token_ids)?;
        let logit = self.task_logit_graph(&mut tape, &bound, s, emb)?;
        let prob = tape.logistic(logit);
        Ok(tape.value(prob)[[0, 0]])
    }
}
