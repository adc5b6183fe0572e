//! Corpus pipeline: time-aligned two-speaker transcripts in, labeled
//! partial-utterance samples out.
//!
//! Processing order per session: [`normalize_words`] cleans annotation
//! tokens, [`extract_backchannel_candidates`] pulls isolated short
//! phrases out of the stream, [`serialize_and_label`] merges both
//! speakers in time order and assigns a [`TurnEvent`] to every word,
//! [`build_samples`] turns each word position into a prediction sample.
//! Session-level [`split_sessions`] and train-split
//! [`downsample_continuing`] close the pipeline.

mod downsample;
mod io;
mod label;
mod lexicon;
mod normalize;
mod sample;
mod split;

pub use downsample::{downsample_continuing, downsample_target};
pub use io::{
    read_samples_jsonl, read_session_dir, read_session_file, read_split_manifest,
    write_samples_jsonl, write_session_file, write_split_manifest,
};
pub use label::{serialize_and_label, BackchannelCandidate, LabelStats};
pub use lexicon::BackchannelLexicon;
pub use normalize::{normalize_session, normalize_words, MalformedPolicy, NormalizeStats};
pub use sample::{build_samples, AcousticRef, HistorySentence, Sample, SpeakerMark};
pub use split::{split_sessions, Split, SplitAssignment, SplitCounts};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error("session {session}: {msg}")]
    InvalidSession { session: String, msg: String },
    #[error("malformed annotation in token {token:?}: {msg}")]
    MalformedToken { token: String, msg: String },
    #[error("invalid lexicon phrase {phrase:?}: must have 1 or 2 words")]
    InvalidPhrase { phrase: String },
    #[error("cannot split {n} sessions into 3 non-empty splits")]
    TooFewSessions { n: usize },
    #[error("split ratio must have positive components")]
    InvalidRatio,
    #[error("{0}")]
    Invalid(String),
}

/// Word-level turn-event class. The integer encoding doubles as the
/// instruction index in multi-task training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TurnEvent {
    ContinuingSpeech,
    Backchannel,
    TurnTaking,
}

impl TurnEvent {
    pub const ALL: [TurnEvent; 3] = [
        TurnEvent::ContinuingSpeech,
        TurnEvent::Backchannel,
        TurnEvent::TurnTaking,
    ];

    pub fn index(self) -> usize {
        match self {
            TurnEvent::ContinuingSpeech => 0,
            TurnEvent::Backchannel => 1,
            TurnEvent::TurnTaking => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<TurnEvent> {
        match i {
            0 => Some(TurnEvent::ContinuingSpeech),
            1 => Some(TurnEvent::Backchannel),
            2 => Some(TurnEvent::TurnTaking),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TurnEvent::ContinuingSpeech => "continuing_speech",
            TurnEvent::Backchannel => "backchannel",
            TurnEvent::TurnTaking => "turn_taking",
        }
    }
}

// Serialized as the bare integer 0/1/2 in every file format.
impl Serialize for TurnEvent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.index() as u8)
    }
}

impl<'de> Deserialize<'de> for TurnEvent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = u8::deserialize(d)?;
        TurnEvent::from_index(v as usize)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid turn-event label {v}")))
    }
}

/// One transcript word with its time alignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedWord {
    pub speaker: String,
    pub sentence_id: u32,
    pub text: String,
    pub start: f64,
    pub end: f64,
}

/// A word together with its assigned turn-event label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWord {
    pub word: AlignedWord,
    pub label: TurnEvent,
}

/// One sentence of one speaker, words in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    pub speaker: String,
    pub sentence_id: u32,
    pub words: Vec<AlignedWord>,
}

impl Sentence {
    pub fn start(&self) -> f64 {
        self.words.first().map(|w| w.start).unwrap_or(0.0)
    }

    pub fn end(&self) -> f64 {
        self.words.last().map(|w| w.end).unwrap_or(0.0)
    }

    pub fn joined_text(&self) -> String {
        let tokens: Vec<&str> = self.words.iter().map(|w| w.text.as_str()).collect();
        tokens.join(" ")
    }
}

/// A two-party dialog session: every aligned word of both speakers.
///
/// Words are grouped into per-speaker sentences by `(speaker,
/// sentence_id)`. A session read from a single-speaker transcript is
/// accepted (the second party simply never talks); more than two
/// distinct speakers is an error.
#[derive(Debug, Clone, PartialEq)]
pub struct DialogSession {
    pub session_id: String,
    words: Vec<AlignedWord>,
}

impl DialogSession {
    pub fn new(session_id: impl Into<String>, words: Vec<AlignedWord>) -> Result<Self, CorpusError> {
        let session_id = session_id.into();
        let mut speakers: Vec<&str> = words.iter().map(|w| w.speaker.as_str()).collect();
        speakers.sort_unstable();
        speakers.dedup();
        if speakers.len() > 2 {
            return Err(CorpusError::InvalidSession {
                session: session_id,
                msg: format!("expected at most two speakers, found {}", speakers.len()),
            });
        }
        for w in &words {
            if !(w.end >= w.start) {
                return Err(CorpusError::InvalidSession {
                    session: session_id,
                    msg: format!("word {:?} ends ({}) before it starts ({})", w.text, w.end, w.start),
                });
            }
        }
        // Within each (speaker, sentence_id) group words must be sorted and
        // non-overlapping. Cross-speaker overlap is legitimate.
        let mut last_in_group: BTreeMap<(&str, u32), (f64, String)> = BTreeMap::new();
        for w in &words {
            let key = (w.speaker.as_str(), w.sentence_id);
            if let Some((prev_end, prev_text)) = last_in_group.get(&key) {
                if w.start < *prev_end {
                    return Err(CorpusError::InvalidSession {
                        session: session_id,
                        msg: format!(
                            "sentence {} of speaker {}: word {:?} (start {}) overlaps {:?} (end {})",
                            w.sentence_id, w.speaker, w.text, w.start, prev_text, prev_end
                        ),
                    });
                }
            }
            last_in_group.insert(key, (w.end, w.text.clone()));
        }
        Ok(DialogSession { session_id, words })
    }

    pub fn words(&self) -> &[AlignedWord] {
        &self.words
    }

    pub fn speakers(&self) -> Vec<String> {
        let mut s: Vec<String> = self.words.iter().map(|w| w.speaker.clone()).collect();
        s.sort();
        s.dedup();
        s
    }

    /// Sentences grouped by `(speaker, sentence_id)`, ordered by start time.
    pub fn sentences(&self) -> Vec<Sentence> {
        let mut groups: BTreeMap<(String, u32), Vec<AlignedWord>> = BTreeMap::new();
        for w in &self.words {
            groups
                .entry((w.speaker.clone(), w.sentence_id))
                .or_default()
                .push(w.clone());
        }
        let mut sentences: Vec<Sentence> = groups
            .into_iter()
            .filter(|(_, words)| !words.is_empty())
            .map(|((speaker, sentence_id), words)| Sentence { speaker, sentence_id, words })
            .collect();
        sentences.sort_by(|a, b| {
            a.start()
                .total_cmp(&b.start())
                .then_with(|| a.speaker.cmp(&b.speaker))
                .then_with(|| a.sentence_id.cmp(&b.sentence_id))
        });
        sentences
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }
}
