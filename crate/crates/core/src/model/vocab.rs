//! Word-level tokenizer with reserved control tokens.

use crate::corpus::SpeakerMark;
use crate::instruction::{instruction_text, N_INSTRUCTIONS};
use std::collections::BTreeMap;

/// Fallback token for words outside the training vocabulary.
pub const UNK_TOKEN: &str = "<unk>";

/// Token-to-id map. Ids are dense, deterministic, and always include the
/// unknown token, the speaker marks, sentence punctuation, and every word
/// of the three task instructions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    token_to_id: BTreeMap<String, usize>,
    tokens: Vec<String>,
}

impl Vocab {
    /// Build from corpus words. Reserved tokens come first in a fixed
    /// order; the remaining words are deduplicated and sorted.
    pub fn build<I, S>(corpus_words: I) -> Vocab
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut tokens: Vec<String> = vec![
            UNK_TOKEN.to_string(),
            SpeakerMark::SelfSpeaker.token().to_string(),
            SpeakerMark::OtherSpeaker.token().to_string(),
            ".".to_string(),
            ":".to_string(),
        ];
        let mut seen: std::collections::BTreeSet<String> = tokens.iter().cloned().collect();
        let mut rest = std::collections::BTreeSet::new();
        for s in 0..N_INSTRUCTIONS {
            for word in split_tokens(instruction_text(s).expect("fixed index")) {
                if !seen.contains(&word) {
                    rest.insert(word);
                }
            }
        }
        for w in corpus_words {
            let w = w.as_ref();
            for word in split_tokens(w) {
                if !seen.contains(&word) {
                    rest.insert(word);
                }
            }
        }
        for w in rest {
            seen.insert(w.clone());
            tokens.push(w);
        }
        Vocab::from_tokens(tokens)
    }

    /// Rebuild from an explicit token list (checkpoint restore); ids equal
    /// list positions.
    pub fn from_tokens(tokens: Vec<String>) -> Vocab {
        let token_to_id = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { token_to_id, tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Id for a token, falling back to the unknown id.
    pub fn id(&self, token: &str) -> usize {
        self.token_to_id
            .get(token)
            .copied()
            .unwrap_or_else(|| self.token_to_id[UNK_TOKEN])
    }

    pub fn unk_id(&self) -> usize {
        self.token_to_id[UNK_TOKEN]
    }

    /// Tokenize free text: whitespace split with `.` and `:` broken out as
    /// their own tokens.
    pub fn encode_text(&self, text: &str) -> Vec<usize> {
        split_tokens(text).iter().map(|t| self.id(t)).collect()
    }

    /// Map pre-split words (sample prefixes) to ids.
    pub fn encode_tokens(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }
}

/// Whitespace tokenization with trailing `.` / `:` separated; matches how
/// instruction prompts are composed.
fn split_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut rest = chunk;
        let mut tail = Vec::new();
        while let Some(stripped) = rest.strip_suffix(['.', ':']) {
            tail.push(&rest[rest.len() - 1..]);
            rest = stripped;
        }
        if !rest.is_empty() {
            out.push(rest.to_string());
        }
        for t in tail.into_iter().rev() {
            out.push(t.to_string());
        }
    }
    out
}
