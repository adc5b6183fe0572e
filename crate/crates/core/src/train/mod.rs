//! Seeded training: parameter freezing, Adam updates, best-checkpoint
//! selection on validation loss, and score-file generation.

use crate::autograd::{Gradients, NodeId, Tape};
use crate::corpus::Sample;
use crate::features::{FeatureError, FeatureStore};
use crate::instruction::{augment, compose_with_history, InstructionError};
use crate::metrics::ScoreRecord;
use crate::model::{
    EncoderConfig, FusionOption, HeadKind, Model, ModelError, ParamStore, TaskExample,
    ThreeWayExample, Vocab,
};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Instruction(#[from] InstructionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("training configuration invalid: {0}")]
    Config(String),
    #[error("{split} split holds no samples")]
    EmptyDataset { split: &'static str },
    #[error("loss became non-finite ({loss}) in epoch {epoch}; aborting")]
    NonFiniteLoss { epoch: usize, loss: f64 },
}

/// Knobs of one training run. One seed drives parameter initialization and
/// batch shuffling alike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub fusion: FusionOption,
    pub head: HeadKind,
    /// Prepend dialog history to instruction prompts (binary head only).
    pub use_history: bool,
    /// Train low-rank adapters instead of the full text encoder.
    pub use_low_rank: bool,
    pub lora_rank: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(fusion: FusionOption, head: HeadKind) -> TrainConfig {
        TrainConfig {
            fusion,
            head,
            use_history: false,
            use_low_rank: false,
            lora_rank: 4,
            lr: 5e-5,
            epochs: 5,
            batch_size: 4,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(TrainError::Config(format!("lr {} must be finite and >= 0", self.lr)));
        }
        Ok(())
    }

    pub fn lora(&self) -> Option<usize> {
        self.use_low_rank.then_some(self.lora_rank)
    }
}

/// Which parameters an optimizer step may touch; everything else stays
/// bit-identical for the whole run.
#[derive(Debug, Clone)]
pub struct FreezePolicy {
    trainable: BTreeSet<String>,
}

fn text_part_trainable(name: &str, adapters_only: bool) -> bool {
    name.starts_with("text.") && (!adapters_only || name.contains(".lora_"))
}

impl FreezePolicy {
    /// Derive the trainable set from the model's fusion mode: single-branch
    /// models train their encoder (or its adapters) plus the head, the first
    /// fused scheme additionally unfreezes both encoders, and the second
    /// fused scheme trains the fusion head alone.
    pub fn for_model(model: &Model) -> FreezePolicy {
        let adapters_only = model.lora_rank.is_some();
        let fusion = model.fusion;
        let trainable = model
            .params
            .names()
            .filter(|name| {
                if name.starts_with("head.") {
                    return true;
                }
                match fusion {
                    FusionOption::AcousticOnly => name.starts_with("acoustic.proj."),
                    FusionOption::TextOnly => text_part_trainable(name, adapters_only),
                    FusionOption::FusionOpt1 => {
                        name.starts_with("acoustic.proj.")
                            || text_part_trainable(name, adapters_only)
                    }
                    FusionOption::FusionOpt2 => false,
                }
            })
            .map(str::to_string)
            .collect();
        FreezePolicy { trainable }
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.trainable.contains(name)
    }

    pub fn trainable_names(&self) -> impl Iterator<Item = &str> {
        self.trainable.iter().map(String::as_str)
    }

    pub fn n_trainable_scalars(&self, params: &ParamStore) -> usize {
        params.n_scalars_matching(|n| self.trainable.contains(n))
    }
}

/// Adam with bias correction; moment state is kept in double precision and
/// updates are rounded back to the single-precision parameters.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: BTreeMap<String, Array2<f64>>,
    v: BTreeMap<String, Array2<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// Apply one update from named gradients. Parameters without a gradient
    /// entry are left untouched.
    pub fn step(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, Array2<f64>>) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, g) in grads {
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Array2::zeros(g.dim()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Array2::zeros(g.dim()));
            m.zip_mut_with(g, |mi, &gi| *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi);
            v.zip_mut_with(g, |vi, &gi| *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi);
            let p = params.get_mut(name);
            assert_eq!(p.dim(), g.dim(), "gradient shape mismatch for {name}");
            for ((pi, mi), vi) in p.iter_mut().zip(m.iter()).zip(v.iter()) {
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                *pi = (f64::from(*pi) - self.lr * m_hat / (v_hat.sqrt() + self.eps)) as f32;
            }
        }
    }
}

/// Per-epoch losses, one JSONL line each in the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Result of a training run: the best-validation model plus run statistics.
#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub history: Vec<EpochLog>,
    pub n_params: usize,
    pub n_trainable: usize,
}

enum Prepared {
    ThreeWay(Vec<ThreeWayExample>),
    MultiTask(Vec<(usize, TaskExample)>),
}

impl Prepared {
    fn len(&self) -> usize {
        match self {
            Prepared::ThreeWay(v) => v.len(),
            Prepared::MultiTask(v) => v.len(),
        }
    }
}

fn frames_for_sample(
    fusion: FusionOption,
    features: Option<&FeatureStore>,
    sample: &Sample,
) -> Result<Option<Array2<f64>>, TrainError> {
    if !fusion.uses_acoustic() {
        return Ok(None);
    }
    let store = features.ok_or_else(|| {
        TrainError::Config("this fusion mode needs an acoustic feature store".into())
    })?;
    Ok(Some(store.frames_for(&sample.speaker, &sample.acoustic_ref)?))
}

fn prepare(
    model: &Model,
    use_history: bool,
    samples: &[Sample],
    features: Option<&FeatureStore>,
) -> Result<Prepared, TrainError> {
    match model.head {
        HeadKind::ThreeWay => {
            let mut out = Vec::with_capacity(samples.len());
            for s in samples {
                out.push(ThreeWayExample {
                    frames: frames_for_sample(model.fusion, features, s)?,
                    token_ids: model
                        .fusion
                        .uses_text()
                        .then(|| model.vocab.encode_tokens(&s.tokens)),
                    label: s.label.index(),
                });
            }
            Ok(Prepared::ThreeWay(out))
        }
        HeadKind::MultiTaskBinary => {
            let by_id: BTreeMap<&str, &Sample> =
                samples.iter().map(|s| (s.sample_id.as_str(), s)).collect();
            let tasks = augment(samples, use_history)?;
            let mut out = Vec::with_capacity(samples.len() * 3);
            for (s, batch) in tasks.iter().enumerate() {
                for inst in batch {
                    let origin = by_id
                        .get(inst.origin_sample_id.as_str())
                        .ok_or_else(|| {
                            TrainError::Config(format!(
                                "augmented sample references unknown id {}",
                                inst.origin_sample_id
                            ))
                        })?;
                    out.push((
                        s,
                        TaskExample {
                            frames: frames_for_sample(model.fusion, features, origin)?,
                            token_ids: model.vocab.encode_text(&inst.text),
                            binary_label: f64::from(inst.binary_label),
                        },
                    ));
                }
            }
            Ok(Prepared::MultiTask(out))
        }
    }
}

/// Loss node for the examples selected by `idxs`.
fn batch_loss(
    model: &Model,
    tape: &mut Tape,
    bound: &crate::model::BoundParams,
    data: &Prepared,
    idxs: &[usize],
) -> Result<NodeId, TrainError> {
    match data {
        Prepared::ThreeWay(examples) => {
            let batch: Vec<ThreeWayExample> =
                idxs.iter().map(|&i| examples[i].clone()).collect();
            let (_, loss) = model.three_way_batch_graph(tape, bound, &batch)?;
            Ok(loss)
        }
        Prepared::MultiTask(examples) => {
            let mut tasks: [Vec<TaskExample>; 3] = Default::default();
            for &i in idxs {
                let (s, ref ex) = examples[i];
                tasks[s].push(ex.clone());
            }
            let graph = model.multitask_graph(tape, bound, &tasks)?;
            Ok(graph.total_loss)
        }
    }
}

fn trainable_grads(
    policy: &FreezePolicy,
    bound: &crate::model::BoundParams,
    grads: &Gradients,
) -> BTreeMap<String, Array2<f64>> {
    policy
        .trainable_names()
        .filter_map(|name| {
            grads
                .get(bound.node(name))
                .map(|g| (name.to_string(), g.clone()))
        })
        .collect()
}

/// Example-weighted mean loss over fixed-order batches, without updates.
fn dataset_loss(model: &Model, data: &Prepared, batch_size: usize) -> Result<f64, TrainError> {
    let n = data.len();
    let order: Vec<usize> = (0..n).collect();
    let mut total = 0.0;
    for chunk in order.chunks(batch_size) {
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        let loss = batch_loss(model, &mut tape, &bound, data, chunk)?;
        total += tape.value(loss)[[0, 0]] * chunk.len() as f64;
    }
    Ok(total / n as f64)
}

/// Train a freshly initialized model. The encoder seed is overridden by
/// `cfg.seed` so a whole run is reproducible from one number; the model
/// with the lowest validation loss is returned. A non-finite loss aborts.
pub fn train(
    cfg: &TrainConfig,
    enc: &EncoderConfig,
    vocab: Vocab,
    train_samples: &[Sample],
    val_samples: &[Sample],
    features: Option<&FeatureStore>,
    epoch_log: Option<&Path>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train_samples.is_empty() {
        return Err(TrainError::EmptyDataset { split: "train" });
    }
    if val_samples.is_empty() {
        return Err(TrainError::EmptyDataset { split: "validation" });
    }
    let mut seeded = enc.clone();
    seeded.seed = cfg.seed;
    let mut model = Model::new(seeded, vocab, cfg.fusion, cfg.head, cfg.lora())?;
    let policy = FreezePolicy::for_model(&model);
    let train_data = prepare(&model, cfg.use_history, train_samples, features)?;
    let val_data = prepare(&model, cfg.use_history, val_samples, features)?;
    let mut adam = Adam::new(cfg.lr);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut log_file = match epoch_log {
        Some(path) => Some(std::fs::File::create(path)?),
        None => None,
    };
    let n = train_data.len();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, ParamStore)> = None;
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut shuffle_rng);
        let mut train_total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape);
            let loss_node = batch_loss(&model, &mut tape, &bound, &train_data, chunk)?;
            let loss = tape.value(loss_node)[[0, 0]];
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, loss });
            }
            train_total += loss * chunk.len() as f64;
            let grads = tape.backward(loss_node);
            let named = trainable_grads(&policy, &bound, &grads);
            adam.step(&mut model.params, &named);
        }
        let train_loss = train_total / n as f64;
        let val_loss = dataset_loss(&model, &val_data, cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch, loss: val_loss });
        }
        let entry = EpochLog { epoch, train_loss, val_loss };
        if let Some(f) = log_file.as_mut() {
            let line = serde_json::to_string(&entry)
                .map_err(|e| TrainError::Config(format!("log serialization: {e}")))?;
            writeln!(f, "{line}")?;
        }
        history.push(entry);
        let improved = match &best {
            Some((_, best_loss, _)) => val_loss < *best_loss,
            None => true,
        };
        if improved {
            best = Some((epoch, val_loss, model.params.clone()));
        }
    }
    let (best_epoch, best_val_loss, best_params) = best.expect("at least one epoch ran");
    model.params = best_params;
    let n_params = model.params.n_scalars();
    let n_trainable = policy.n_trainable_scalars(&model.params);
    Ok(TrainOutcome {
        model,
        best_epoch,
        best_val_loss,
        history,
        n_params,
        n_trainable,
    })
}

/// Score every sample with the model's natural output: softmax posteriors
/// for the three-way head, or one per-task probability from each binary
/// head. No downsampling happens here; callers pass entire splits.
pub fn score_samples(
    model: &Model,
    samples: &[Sample],
    features: Option<&FeatureStore>,
    use_history: bool,
) -> Result<Vec<ScoreRecord>, TrainError> {
    let mut out = Vec::with_capacity(samples.len());
    for sample in samples {
        let frames = frames_for_sample(model.fusion, features, sample)?;
        let scores = match model.head {
            HeadKind::ThreeWay => {
                let ids = model
                    .fusion
                    .uses_text()
                    .then(|| model.vocab.encode_tokens(&sample.tokens));
                model.score_three_way(frames.as_ref(), ids.as_deref())?
            }
            HeadKind::MultiTaskBinary => {
                let mut scores = [0.0f64; 3];
                let history: &[_] = if use_history { &sample.history } else { &[] };
                for (s, slot) in scores.iter_mut().enumerate() {
                    let text = compose_with_history(s, history, sample)?;
                    let ids = model.vocab.encode_text(&text);
                    *slot = model.score_task(s, frames.as_ref(), Some(&ids))?;
                }
                scores
            }
        };
        out.push(ScoreRecord {
            sample_id: sample.sample_id.clone(),
            true_label: sample.label,
            scores,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tiny_enc() -> EncoderConfig {
        EncoderConfig {
            acoustic_frame_dim: 3,
            acoustic_proj_dim: 2,
            text_embed_dim: 8,
            text_layers: 1,
            text_heads: 2,
            text_ff_dim: 8,
            max_seq_len: 16,
            seed: 0,
        }
    }

    fn model_for(fusion: FusionOption, lora: Option<usize>) -> Model {
        Model::new(
            tiny_enc(),
            Vocab::build(["aa", "bb"]),
            fusion,
            HeadKind::ThreeWay,
            lora,
        )
        .unwrap()
    }

    #[test]
    fn freeze_policy_matches_fusion_modes() {
        let acoustic = FreezePolicy::for_model(&model_for(FusionOption::AcousticOnly, None));
        assert!(acoustic.is_trainable("acoustic.proj.w"));
        assert!(acoustic.is_trainable("head.w"));

        let text = FreezePolicy::for_model(&model_for(FusionOption::TextOnly, None));
        assert!(text.is_trainable("text.tok_emb"));
        assert!(text.is_trainable("text.l0.attn.h0.wq"));
        assert!(text.is_trainable("head.b"));

        let opt1 = FreezePolicy::for_model(&model_for(FusionOption::FusionOpt1, None));
        assert!(opt1.is_trainable("acoustic.proj.w"));
        assert!(opt1.is_trainable("text.tok_emb"));
        assert!(opt1.is_trainable("head.w"));

        let opt2 = FreezePolicy::for_model(&model_for(FusionOption::FusionOpt2, None));
        assert!(opt2.is_trainable("head.w"));
        assert!(!opt2.is_trainable("acoustic.proj.w"));
        assert!(!opt2.is_trainable("text.tok_emb"));
        assert_eq!(opt2.trainable_names().count(), 2);
    }

    #[test]
    fn adapters_replace_text_weights_in_trainable_set() {
        let model = model_for(FusionOption::FusionOpt1, Some(2));
        let policy = FreezePolicy::for_model(&model);
        assert!(policy.is_trainable("text.l0.attn.h0.wq.lora_a"));
        assert!(policy.is_trainable("text.l0.attn.h0.wq.lora_b"));
        assert!(!policy.is_trainable("text.l0.attn.h0.wq"));
        assert!(!policy.is_trainable("text.tok_emb"));
        assert!(policy.is_trainable("acoustic.proj.w"));
        assert!(policy.is_trainable("head.w"));
        let frac = policy.n_trainable_scalars(&model.params) as f64
            / model.params.n_scalars() as f64;
        assert!(frac < 0.5, "adapters should leave most weights frozen, got {frac}");
    }

    #[test]
    fn adam_matches_scalar_reference() {
        let mut params = ParamStore::new();
        params.insert("w", ndarray::array![[1.0f32]]);
        let mut adam = Adam::new(0.1);
        let grads_seq = [0.5f64, -0.2, 0.3];
        let mut expect = 1.0f64;
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for (t, g) in grads_seq.iter().enumerate() {
            let mut grads = BTreeMap::new();
            grads.insert("w".to_string(), ndarray::array![[*g]]);
            adam.step(&mut params, &grads);
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powi(t as i32 + 1));
            let v_hat = v / (1.0 - b2.powi(t as i32 + 1));
            expect = (expect - 0.1 * m_hat / (v_hat.sqrt() + eps)) as f32 as f64;
            assert_abs_diff_eq!(
                f64::from(params.get("w")[[0, 0]]),
                expect,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn adam_leaves_params_without_grads_alone() {
        let mut params = ParamStore::new();
        params.insert("frozen", ndarray::array![[2.5f32]]);
        params.insert("live", ndarray::array![[1.0f32]]);
        let mut adam = Adam::new(0.5);
        let mut grads = BTreeMap::new();
        grads.insert("live".to_string(), ndarray::array![[1.0f64]]);
        adam.step(&mut params, &grads);
        assert_eq!(params.get("frozen")[[0, 0]], 2.5);
        assert_ne!(params.get("live")[[0, 0]], 1.0);
    }

    #[test]
    fn config_validation_rejects_degenerate_values() {
        let mut cfg = TrainConfig::new(FusionOption::AcousticOnly, HeadKind::ThreeWay);
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.lr, 5e-5);
        assert_eq!(cfg.epochs, 5);
        assert_eq!(cfg.batch_size, 4);
        cfg.epochs = 0;
        assert!(cfg.validate().is_err());
        cfg.epochs = 1;
        cfg.batch_size = 0;
        assert!(cfg.validate().is_err());
        cfg.batch_size = 1;
        cfg.lr = f64::NAN;
        assert!(cfg.validate().is_err());
    }
}
