//! On-disk formats for sessions, samples, and split manifests.

use super::sample::Sample;
use super::split::SplitAssignment;
use super::{AlignedWord, CorpusError, DialogSession};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// One line of a session file.
#[derive(Debug, Serialize, Deserialize)]
struct SessionLine {
    speaker: String,
    sentence_id: u32,
    word: String,
    start: f64,
    end: f64,
}

/// Read a newline-delimited JSON session file; the file stem is the
/// session id.
pub fn read_session_file(path: &Path) -> Result<DialogSession, CorpusError> {
    let session_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| CorpusError::Invalid(format!("bad session path {}", path.display())))?
        .to_string();
    let file = std::fs::File::open(path)?;
    let mut words = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: SessionLine =
            serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
                file: path.display().to_string(),
                line: lineno + 1,
                msg: e.to_string(),
            })?;
        words.push(AlignedWord {
            speaker: parsed.speaker,
            sentence_id: parsed.sentence_id,
            text: parsed.word,
            start: parsed.start,
            end: parsed.end,
        });
    }
    DialogSession::new(&session_id, words)
}

/// Write a session as newline-delimited JSON, one word per line.
pub fn write_session_file(session: &DialogSession, path: &Path) -> Result<(), CorpusError> {
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    for w in session.words() {
        let line = SessionLine {
            speaker: w.speaker.clone(),
            sentence_id: w.sentence_id,
            word: w.text.clone(),
            start: w.start,
            end: w.end,
        };
        serde_json::to_writer(&mut out, &line)
            .map_err(|e| CorpusError::Invalid(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Read every `*.jsonl` session in a directory, sorted by filename.
pub fn read_session_dir(dir: &Path) -> Result<Vec<DialogSession>, CorpusError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("jsonl"))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_session_file(p)).collect()
}

/// Read a newline-delimited JSON sample file.
pub fn read_samples_jsonl(path: &Path) -> Result<Vec<Sample>, CorpusError> {
    let file = std::fs::File::open(path)?;
    let mut samples = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: Sample = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            file: path.display().to_string(),
            line: lineno + 1,
            msg: e.to_string(),
        })?;
        samples.push(sample);
    }
    Ok(samples)
}

/// Write samples as newline-delimited JSON, one object per line.
pub fn write_samples_jsonl(samples: &[Sample], path: &Path) -> Result<(), CorpusError> {
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    for s in samples {
        serde_json::to_writer(&mut out, s).map_err(|e| CorpusError::Invalid(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Read a split manifest: a JSON map from session id to split name.
pub fn read_split_manifest(path: &Path) -> Result<SplitAssignment, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CorpusError::Parse {
        file: path.display().to_string(),
        line: 0,
        msg: e.to_string(),
    })
}

/// Write a split manifest as pretty-printed JSON.
pub fn write_split_manifest(
    assignment: &SplitAssignment,
    path: &Path,
) -> Result<(), CorpusError> {
    let text = serde_json::to_string_pretty(assignment)
        .map_err(|e| CorpusError::Invalid(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
