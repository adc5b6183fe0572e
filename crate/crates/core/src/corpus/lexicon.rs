//! Backchannel phrase lexicon.

use super::{CorpusError, DialogSession};
use std::collections::{BTreeSet, HashMap};
use std::path::Path;

/// Set of lowercase one- or two-word phrases treated as backchannels
/// when they occur as a complete, isolated sentence.
///
/// The default lexicon is data-driven: the most frequent isolated short
/// sentences of the training sessions. A phrase list loaded from a file
/// overrides it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackchannelLexicon {
    phrases: BTreeSet<String>,
}

impl BackchannelLexicon {
    pub const MAX_WORDS: usize = 2;
    pub const DEFAULT_SIZE: usize = 20;

    pub fn new<I, S>(phrases: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = BTreeSet::new();
        for p in phrases {
            let phrase = p.into().trim().to_lowercase();
            let n_words = phrase.split_whitespace().count();
            if n_words == 0 || n_words > Self::MAX_WORDS {
                return Err(CorpusError::InvalidPhrase { phrase });
            }
            set.insert(phrase.split_whitespace().collect::<Vec<_>>().join(" "));
        }
        Ok(BackchannelLexicon { phrases: set })
    }

    /// Count isolated one- or two-word sentences across `sessions` and keep
    /// the `size` most frequent as the lexicon. Ties break alphabetically so
    /// the result is deterministic.
    pub fn data_driven(sessions: &[DialogSession], size: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for session in sessions {
            for sentence in session.sentences() {
                if sentence.words.len() <= Self::MAX_WORDS {
                    *counts.entry(sentence.joined_text().to_lowercase()).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let phrases = ranked.into_iter().take(size).map(|(p, _)| p);
        BackchannelLexicon { phrases: phrases.collect() }
    }

    pub fn contains(&self, phrase: &str) -> bool {
        self.phrases.contains(&phrase.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    pub fn phrases(&self) -> impl Iterator<Item = &str> {
        self.phrases.iter().map(|s| s.as_str())
    }

    /// Plain text, one phrase per line. Blank lines and `#` comments ignored.
    pub fn from_file(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path)?;
        let lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect::<Vec<_>>();
        Self::new(lines)
    }

    pub fn to_file(&self, path: &Path) -> Result<(), CorpusError> {
        let mut text = String::new();
        for p in &self.phrases {
            text.push_str(p);
            text.push('\n');
        }
        std::fs::write(path, text)?;
        Ok(())
    }
}
