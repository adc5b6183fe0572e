//! Turn-event prediction toolkit.
//!
//! Takes time-aligned two-party dialog transcripts, assigns a word-level
//! turn-event label to every word (continuing speech, backchannel, or
//! turn-taking), builds partial-utterance samples from the labeled stream,
//! and trains toy-scale acoustic, text, and late-fusion classifiers over
//! them. Scores are evaluated with threshold-free detection metrics (AUC,
//! EER) per class and on average.
//!
//! Pipeline stages, each usable on its own:
//!
//! * [`corpus`] — transcript parsing, normalization, backchannel
//!   extraction, word labeling, sample building, session splits,
//!   majority-class downsampling.
//! * [`instruction`] — binary multi-task augmentation with fixed
//!   natural-language task instructions and dialog-history composition.
//! * [`model`] — mean-pool acoustic encoder, small causal transformer
//!   text encoder, late fusion, three-way and per-task binary heads,
//!   low-rank adapters, checkpoints.
//! * [`train`] — seeded minibatch training with per-mode freeze
//!   policies, and checkpoint scoring.
//! * [`metrics`] — ROC / AUC / EER / balanced accuracy plus report
//!   exports.
//! * [`synth`] — deterministic synthetic corpus generator with built-in
//!   label ground truth and controllable per-modality cues.

pub mod autograd;
pub mod corpus;
pub mod features;
pub mod instruction;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod train;

pub use corpus::{AlignedWord, DialogSession, Sample, TurnEvent};
pub use metrics::{MetricsReport, ScoreRecord};
pub use model::{EncoderConfig, FusionOption, HeadKind, Model, Vocab};
pub use train::{FreezePolicy, TrainConfig};
