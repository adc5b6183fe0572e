//! Annotation cleanup for transcript tokens.
//!
//! The fixed rule table:
//!
//! * marker tokens `[silence]`, `[noise]`, `[laughter]`,
//!   `[vocalized-noise]` are removed from the stream;
//! * `[spoken/intended]` is replaced by the intended form
//!   (`[cuz/because]` becomes `because`);
//! * a partial word completed in brackets, `reali[zing]-` or
//!   `pre[fix]`, is collapsed to the full word;
//! * every surviving token is lowercased; timestamps are untouched.
//!
//! Any other bracket shape (nesting, unbalanced, several groups, a
//! fully bracketed non-marker) is treated per [`MalformedPolicy`].

use super::{AlignedWord, CorpusError, DialogSession};

const MARKERS: [&str; 4] = ["[silence]", "[noise]", "[laughter]", "[vocalized-noise]"];

/// What to do with a token whose bracket annotation is not in the rule table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MalformedPolicy {
    /// Drop the word, log a warning, count it.
    #[default]
    DropWithWarning,
    /// Fail the whole normalization call.
    Abort,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NormalizeStats {
    /// Marker tokens ([silence] and friends) removed.
    pub markers_removed: usize,
    /// Tokens dropped because their bracket form is unknown or malformed.
    pub malformed_dropped: usize,
    /// Sentences that became empty and were discarded.
    pub empty_sentences_dropped: usize,
}

enum TokenForm {
    Plain,
    Marker,
    Mispronunciation(String),
    Completion(String),
    Malformed(String),
}

fn classify(token: &str) -> TokenForm {
    if !token.contains('[') && !token.contains(']') {
        return TokenForm::Plain;
    }
    // Single balanced non-nested group or bust.
    let mut depth = 0usize;
    let mut groups = 0usize;
    let mut open = None;
    let mut close = None;
    for (i, c) in token.char_indices() {
        match c {
            '[' => {
                if depth > 0 {
                    return TokenForm::Malformed("nested brackets".into());
                }
                depth += 1;
                groups += 1;
                open = Some(i);
            }
            ']' => {
                if depth == 0 {
                    return TokenForm::Malformed("unbalanced brackets".into());
                }
                depth -= 1;
                close = Some(i);
            }
            _ => {}
        }
    }
    if depth != 0 {
        return TokenForm::Malformed("unbalanced brackets".into());
    }
    if groups != 1 {
        return TokenForm::Malformed("multiple bracket groups".into());
    }
    let (open, close) = (open.unwrap(), close.unwrap());
    let inner = &token[open + 1..close];
    let before = &token[..open];
    let after = &token[close + 1..];
    if inner.is_empty() {
        return TokenForm::Malformed("empty bracket group".into());
    }
    let whole_token = before.is_empty() && after.is_empty();
    if whole_token {
        if MARKERS.contains(&token.to_lowercase().as_str()) {
            return TokenForm::Marker;
        }
        if let Some((spoken, intended)) = inner.split_once('/') {
            if !spoken.is_empty() && !intended.is_empty() && !intended.contains('/') {
                return TokenForm::Mispronunciation(intended.to_lowercase());
            }
        }
        return TokenForm::Malformed("unknown bracketed annotation".into());
    }
    if inner.contains('/') {
        return TokenForm::Malformed("slash inside a partial-word completion".into());
    }
    let full = format!("{before}{inner}{after}");
    TokenForm::Completion(full.trim_end_matches('-').to_lowercase())
}

/// Clean a word sequence per the annotation rule table. Timestamps are
/// preserved; outputs are lowercase and bracket-free, so the operation
/// is idempotent.
pub fn normalize_words(
    raw: &[AlignedWord],
    policy: MalformedPolicy,
) -> Result<(Vec<AlignedWord>, NormalizeStats), CorpusError> {
    let mut out = Vec::with_capacity(raw.len());
    let mut stats = NormalizeStats::default();
    for w in raw {
        match classify(&w.text) {
            TokenForm::Plain => {
                let mut w = w.clone();
                w.text = w.text.to_lowercase();
                out.push(w);
            }
            TokenForm::Marker => stats.markers_removed += 1,
            TokenForm::Mispronunciation(text) | TokenForm::Completion(text) => {
                if text.is_empty() {
                    stats.malformed_dropped += 1;
                    log::warn!("token {:?} normalized to nothing, dropped", w.text);
                    continue;
                }
                let mut w = w.clone();
                w.text = text;
                out.push(w);
            }
            TokenForm::Malformed(msg) => match policy {
                MalformedPolicy::Abort => {
                    return Err(CorpusError::MalformedToken { token: w.text.clone(), msg })
                }
                MalformedPolicy::DropWithWarning => {
                    log::warn!("dropping token {:?}: {msg}", w.text);
                    stats.malformed_dropped += 1;
                }
            },
        }
    }
    Ok((out, stats))
}

/// Normalize a whole session, discarding sentences that end up empty.
pub fn normalize_session(
    session: &DialogSession,
    policy: MalformedPolicy,
) -> Result<(DialogSession, NormalizeStats), CorpusError> {
    let before = session.sentences().len();
    let (words, mut stats) = normalize_words(session.words(), policy)?;
    let cleaned = DialogSession::new(session.session_id.clone(), words)?;
    stats.empty_sentences_dropped = before - cleaned.sentences().len();
    Ok((cleaned, stats))
}
