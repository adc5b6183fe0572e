//! Multi-task instruction augmentation.
//!
//! Every sample is rewritten three times, once per turn event, as a
//! natural-language yes/no question over the same prefix text; the binary
//! answer is positive only for the sample's own event. Training the three
//! binary tasks jointly replaces the single three-way objective.

use crate::corpus::{HistorySentence, Sample, SpeakerMark};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

/// Number of instruction tasks; one per turn event, same encoding.
pub const N_INSTRUCTIONS: usize = 3;

const INSTRUCTIONS: [&str; N_INSTRUCTIONS] = [
    "Identify if the current speaker will continue to speak at the end of the sentence.",
    "Identify if another speaker will backchannel at the end of the sentence.",
    "Identify if another speaker will take the turn at the end of the sentence.",
];

#[derive(Debug, Error)]
pub enum InstructionError {
    #[error("instruction index {0} out of range 0..=2")]
    BadIndex(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// One binary task instance derived from a sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionedSample {
    pub s: usize,
    pub text: String,
    pub binary_label: u8,
    pub origin_sample_id: String,
}

/// The fixed wording of task `s`.
pub fn instruction_text(s: usize) -> Result<&'static str, InstructionError> {
    INSTRUCTIONS.get(s).copied().ok_or(InstructionError::BadIndex(s))
}

/// Compose the instruction prompt for task `s` over `target`: the
/// instruction joined with a colon, each history sentence prefixed with its
/// speaker mark and closed with a period, then the target prefix tokens
/// marked as the current speaker.
pub fn compose_with_history(
    s: usize,
    history: &[HistorySentence],
    target: &Sample,
) -> Result<String, InstructionError> {
    let instruction = instruction_text(s)?;
    let mut text = String::from(instruction.trim_end_matches('.'));
    text.push(':');
    for h in history {
        text.push(' ');
        text.push_str(h.speaker.token());
        text.push(' ');
        text.push_str(&h.tokens.join(" "));
        text.push('.');
    }
    text.push(' ');
    text.push_str(SpeakerMark::SelfSpeaker.token());
    text.push(' ');
    text.push_str(&target.tokens.join(" "));
    text.push('.');
    Ok(text)
}

/// Expand a batch into the three task-specific views, order-preserving.
/// Entry `[s][i]` asks task `s` about `batch[i]`; its label is 1 exactly
/// when `s` matches the sample's own event.
pub fn augment(
    batch: &[Sample],
    use_history: bool,
) -> Result<[Vec<InstructionedSample>; N_INSTRUCTIONS], InstructionError> {
    let mut out: [Vec<InstructionedSample>; N_INSTRUCTIONS] = Default::default();
    for (s, task) in out.iter_mut().enumerate() {
        for sample in batch {
            let history: &[HistorySentence] =
                if use_history { &sample.history } else { &[] };
            task.push(InstructionedSample {
                s,
                text: compose_with_history(s, history, sample)?,
                binary_label: u8::from(s == sample.label.index()),
                origin_sample_id: sample.sample_id.clone(),
            });
        }
    }
    Ok(out)
}

/// Dump augmented samples as newline-delimited JSON.
pub fn write_augmented_jsonl(
    augmented: &[Vec<InstructionedSample>; N_INSTRUCTIONS],
    path: &Path,
) -> Result<(), InstructionError> {
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    for task in augmented {
        for item in task {
            serde_json::to_writer(&mut out, item)
                .map_err(|e| InstructionError::Parse { line: 0, msg: e.to_string() })?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Read back a dump produced by [`write_augmented_jsonl`].
pub fn read_augmented_jsonl(path: &Path) -> Result<Vec<InstructionedSample>, InstructionError> {
    let file = std::fs::File::open(path)?;
    let mut items = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&line).map_err(|e| InstructionError::Parse {
            line: lineno + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(items)
}
