//! Word-level turn-event labeling.

use super::{AlignedWord, CorpusError, DialogSession, LabeledWord, TurnEvent};
use super::lexicon::BackchannelLexicon;
use serde::Serialize;

/// An isolated short sentence matched against the backchannel lexicon and
/// pulled out of the stream before turn-change labeling.
#[derive(Debug, Clone)]
pub struct BackchannelCandidate {
    pub speaker: String,
    pub sentence_id: u32,
    pub start: f64,
    pub words: Vec<AlignedWord>,
}

/// Counters emitted by [`serialize_and_label`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LabelStats {
    /// Words labeled as turn changes on the backchannel-free stream.
    pub speaker_changes: usize,
    /// Words of the other speaker marked as backchannel anchors.
    pub backchannel_marks: usize,
    /// Anchors that were already turn changes; the turn-change label wins.
    pub collisions: usize,
    /// Candidates with no earlier other-speaker word to anchor to.
    pub dropped_candidates: usize,
}

/// Merge both speakers into one word stream ordered by start time and attach
/// a turn event to every word.
///
/// Backchannel-lexicon sentences are removed first so that short feedback
/// does not register as a change of speaker. On the remaining stream every
/// change of speaker labels the outgoing speaker's last word as a turn
/// change. Each removed candidate then marks the other speaker's closest
/// word at or before its own start as a backchannel; if that word is
/// already a turn change, the turn change stands. Candidate words rejoin
/// the stream labeled as continuing speech.
pub fn serialize_and_label(
    session: &DialogSession,
    lexicon: &BackchannelLexicon,
) -> Result<(Vec<LabeledWord>, LabelStats), CorpusError> {
    let mut stats = LabelStats::default();

    let mut candidates: Vec<BackchannelCandidate> = Vec::new();
    let mut stream: Vec<AlignedWord> = Vec::new();
    for sentence in session.sentences() {
        let is_candidate = sentence.words.len() <= BackchannelLexicon::MAX_WORDS
            && lexicon.contains(&sentence.joined_text());
        if is_candidate {
            candidates.push(BackchannelCandidate {
                speaker: sentence.speaker.clone(),
                sentence_id: sentence.sentence_id,
                start: sentence.start(),
                words: sentence.words.clone(),
            });
        } else {
            stream.extend(sentence.words.iter().cloned());
        }
    }
    sort_stream(&mut stream);

    let mut labeled: Vec<LabeledWord> = stream
        .into_iter()
        .map(|word| LabeledWord { word, label: TurnEvent::ContinuingSpeech })
        .collect();
    for i in 1..labeled.len() {
        if labeled[i].word.speaker != labeled[i - 1].word.speaker {
            labeled[i - 1].label = TurnEvent::TurnTaking;
            stats.speaker_changes += 1;
        }
    }

    for candidate in &candidates {
        let anchor = labeled
            .iter()
            .enumerate()
            .filter(|(_, lw)| {
                lw.word.speaker != candidate.speaker && lw.word.start <= candidate.start
            })
            .max_by(|a, b| {
                a.1.word
                    .start
                    .total_cmp(&b.1.word.start)
                    .then_with(|| a.0.cmp(&b.0))
            })
            .map(|(i, _)| i);
        match anchor {
            Some(i) => match labeled[i].label {
                TurnEvent::TurnTaking | TurnEvent::Backchannel => stats.collisions += 1,
                TurnEvent::ContinuingSpeech => {
                    labeled[i].label = TurnEvent::Backchannel;
                    stats.backchannel_marks += 1;
                }
            },
            None => stats.dropped_candidates += 1,
        }
    }

    for candidate in candidates {
        for word in candidate.words {
            labeled.push(LabeledWord { word, label: TurnEvent::ContinuingSpeech });
        }
    }
    labeled.sort_by(|a, b| {
        a.word
            .start
            .total_cmp(&b.word.start)
            .then_with(|| a.word.speaker.cmp(&b.word.speaker))
            .then_with(|| a.word.sentence_id.cmp(&b.word.sentence_id))
    });

    Ok((labeled, stats))
}

fn sort_stream(words: &mut [AlignedWord]) {
    words.sort_by(|a, b| {
        a.start
            .total_cmp(&b.start)
            .then_with(|| a.speaker.cmp(&b.speaker))
            .then_with(|| a.sentence_id.cmp(&b.sentence_id))
    });
}
