//! Per-word prediction samples.

use super::{LabeledWord, TurnEvent};
use serde::{Deserialize, Serialize};

/// Speaker of a history sentence relative to the sample's target speaker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpeakerMark {
    #[serde(rename = "self")]
    SelfSpeaker,
    #[serde(rename = "other")]
    OtherSpeaker,
}

impl SpeakerMark {
    /// Literal token used when the sentence is spliced into instruction text.
    pub fn token(self) -> &'static str {
        match self {
            SpeakerMark::SelfSpeaker => "<spkSelf>",
            SpeakerMark::OtherSpeaker => "<spkOther>",
        }
    }
}

/// Reference to the audio span backing a sample: the sentence start through
/// the target word's end within one session-side recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcousticRef {
    pub session_id: String,
    pub start: f64,
    pub end: f64,
}

/// A completed sentence preceding the sample, with its relative speaker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistorySentence {
    pub speaker: SpeakerMark,
    pub tokens: Vec<String>,
}

/// One prediction instance: the partial utterance up to a word, the audio
/// span covering it, recent dialog history, and the word's turn event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub sample_id: String,
    pub session_id: String,
    pub speaker: String,
    pub tokens: Vec<String>,
    pub acoustic_ref: AcousticRef,
    pub history: Vec<HistorySentence>,
    pub label: TurnEvent,
}

struct SentenceInfo {
    speaker: String,
    sentence_id: u32,
    start: f64,
    end: f64,
    words: Vec<LabeledWord>,
}

/// Expand every labeled word into a [`Sample`].
///
/// Tokens run from the word's sentence start through the word itself, the
/// label is the word's own, and the history holds the `history_len` most
/// recently finished sentences from either speaker that ended no later than
/// the sample's sentence start, oldest first.
pub fn build_samples(
    session_id: &str,
    labeled: &[LabeledWord],
    history_len: usize,
) -> Vec<Sample> {
    let mut sentences: Vec<SentenceInfo> = Vec::new();
    for lw in labeled {
        let key = (&lw.word.speaker, lw.word.sentence_id);
        let existing = sentences
            .iter_mut()
            .find(|s| (&s.speaker, s.sentence_id) == key);
        match existing {
            Some(info) => {
                info.start = info.start.min(lw.word.start);
                info.end = info.end.max(lw.word.end);
                info.words.push(lw.clone());
            }
            None => sentences.push(SentenceInfo {
                speaker: lw.word.speaker.clone(),
                sentence_id: lw.word.sentence_id,
                start: lw.word.start,
                end: lw.word.end,
                words: vec![lw.clone()],
            }),
        }
    }

    let mut samples = Vec::new();
    for info in &sentences {
        let mut history: Vec<&SentenceInfo> = sentences
            .iter()
            .filter(|other| {
                other.end <= info.start
                    && !(other.speaker == info.speaker && other.sentence_id == info.sentence_id)
            })
            .collect();
        history.sort_by(|a, b| {
            a.end
                .total_cmp(&b.end)
                .then_with(|| a.start.total_cmp(&b.start))
                .then_with(|| a.speaker.cmp(&b.speaker))
                .then_with(|| a.sentence_id.cmp(&b.sentence_id))
        });
        let skip = history.len().saturating_sub(history_len);
        let history: Vec<HistorySentence> = history[skip..]
            .iter()
            .map(|h| HistorySentence {
                speaker: if h.speaker == info.speaker {
                    SpeakerMark::SelfSpeaker
                } else {
                    SpeakerMark::OtherSpeaker
                },
                tokens: h.words.iter().map(|lw| lw.word.text.clone()).collect(),
            })
            .collect();

        for (idx, lw) in info.words.iter().enumerate() {
            samples.push(Sample {
                sample_id: format!(
                    "{}__{}__{}__{}",
                    session_id, info.speaker, info.sentence_id, idx
                ),
                session_id: session_id.to_string(),
                speaker: info.speaker.clone(),
                tokens: info.words[..=idx]
                    .iter()
                    .map(|w| w.word.text.clone())
                    .collect(),
                acoustic_ref: AcousticRef {
                    session_id: session_id.to_string(),
                    start: info.start,
                    end: lw.word.end,
                },
                history: history.clone(),
                label: lw.label,
            });
        }
    }

    samples.sort_by(|a, b| {
        a.acoustic_ref
            .end
            .total_cmp(&b.acoustic_ref.end)
            .then_with(|| a.sample_id.cmp(&b.sample_id))
    });
    samples
}
