//! Per-sentence acoustic frame features on disk.
//!
//! Each sentence of a session side is one raw matrix file
//! `{session}__{speaker}__{sentence_id}.f32` holding row-major `T x d_f`
//! little-endian 32-bit floats, next to a JSON sidecar with the shape,
//! frame rate, and the sentence's absolute start time.

use crate::corpus::AcousticRef;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("sidecar {path}: {msg}")]
    BadSidecar { path: String, msg: String },
    #[error("{path}: expected {expected} bytes for {t}x{d_f} f32 frames, found {found}")]
    SizeMismatch { path: String, expected: usize, found: usize, t: usize, d_f: usize },
    #[error("no frames for session {session} speaker {speaker} starting at {start}")]
    NoMatch { session: String, speaker: String, start: f64 },
    #[error("feature dims disagree: {0} vs {1}")]
    DimMismatch(usize, usize),
}

/// Sidecar contents describing one `.f32` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    #[serde(rename = "T")]
    pub t: usize,
    pub d_f: usize,
    pub frame_rate: f64,
    pub start: f64,
}

fn base_name(session: &str, speaker: &str, sentence_id: u32) -> String {
    format!("{session}__{speaker}__{sentence_id}")
}

/// Write one sentence's frames plus sidecar; returns the `.f32` path.
pub fn write_feature_file(
    dir: &Path,
    session: &str,
    speaker: &str,
    sentence_id: u32,
    start: f64,
    frame_rate: f64,
    frames: &Array2<f32>,
) -> Result<PathBuf, FeatureError> {
    let base = dir.join(base_name(session, speaker, sentence_id));
    let meta = FrameMeta {
        t: frames.nrows(),
        d_f: frames.ncols(),
        frame_rate,
        start,
    };
    let mut bytes = Vec::with_capacity(frames.len() * 4);
    for &v in frames.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let f32_path = base.with_extension("f32");
    std::fs::write(&f32_path, bytes)?;
    let json = serde_json::to_string(&meta).expect("sidecar serializes");
    std::fs::write(base.with_extension("json"), json + "\n")?;
    Ok(f32_path)
}

/// Read one `.f32` matrix given the path of either the matrix or sidecar.
pub fn read_feature_file(path: &Path) -> Result<(FrameMeta, Array2<f32>), FeatureError> {
    let base = path.with_extension("");
    let sidecar = base.with_extension("json");
    let meta: FrameMeta = serde_json::from_str(&std::fs::read_to_string(&sidecar)?)
        .map_err(|e| FeatureError::BadSidecar {
            path: sidecar.display().to_string(),
            msg: e.to_string(),
        })?;
    let bytes = std::fs::read(base.with_extension("f32"))?;
    let expected = meta.t * meta.d_f * 4;
    if bytes.len() != expected {
        return Err(FeatureError::SizeMismatch {
            path: base.with_extension("f32").display().to_string(),
            expected,
            found: bytes.len(),
            t: meta.t,
            d_f: meta.d_f,
        });
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let frames = Array2::from_shape_vec((meta.t, meta.d_f), values)
        .expect("shape checked against byte length");
    Ok((meta, frames))
}

struct StoredSentence {
    start: f64,
    frame_rate: f64,
    frames: Array2<f32>,
}

/// All feature files of a directory, indexed for per-sample span lookup.
pub struct FeatureStore {
    by_side: HashMap<(String, String), Vec<StoredSentence>>,
    d_f: usize,
}

impl FeatureStore {
    /// Eagerly load every `{session}__{speaker}__{sid}.f32` in `dir`.
    pub fn open(dir: &Path) -> Result<Self, FeatureError> {
        let mut by_side: HashMap<(String, String), Vec<StoredSentence>> = HashMap::new();
        let mut d_f: Option<usize> = None;
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("f32"))
            .collect();
        paths.sort();
        for path in paths {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let parts: Vec<&str> = stem.split("__").collect();
            if parts.len() != 3 {
                continue;
            }
            let (meta, frames) = read_feature_file(&path)?;
            match d_f {
                None => d_f = Some(meta.d_f),
                Some(d) if d != meta.d_f => {
                    return Err(FeatureError::DimMismatch(d, meta.d_f));
                }
                _ => {}
            }
            by_side
                .entry((parts[0].to_string(), parts[1].to_string()))
                .or_default()
                .push(StoredSentence { start: meta.start, frame_rate: meta.frame_rate, frames });
        }
        for sentences in by_side.values_mut() {
            sentences.sort_by(|a, b| a.start.total_cmp(&b.start));
        }
        Ok(FeatureStore { by_side, d_f: d_f.unwrap_or(0) })
    }

    /// Frame dimension shared by all loaded files (0 when the store is empty).
    pub fn frame_dim(&self) -> usize {
        self.d_f
    }

    pub fn is_empty(&self) -> bool {
        self.by_side.is_empty()
    }

    /// Frames covering a sample's span: the sentence matrix whose start
    /// matches `acoustic_ref.start` for `speaker`, truncated after the frame
    /// containing `acoustic_ref.end`. Always yields at least one frame.
    pub fn frames_for(
        &self,
        speaker: &str,
        acoustic_ref: &AcousticRef,
    ) -> Result<Array2<f64>, FeatureError> {
        let key = (acoustic_ref.session_id.clone(), speaker.to_string());
        let no_match = || FeatureError::NoMatch {
            session: acoustic_ref.session_id.clone(),
            speaker: speaker.to_string(),
            start: acoustic_ref.start,
        };
        let sentences = self.by_side.get(&key).ok_or_else(no_match)?;
        let sentence = sentences
            .iter()
            .find(|s| (s.start - acoustic_ref.start).abs() < 1e-9)
            .ok_or_else(no_match)?;
        let span = (acoustic_ref.end - acoustic_ref.start).max(0.0);
        let wanted = (span * sentence.frame_rate).ceil() as usize;
        let n = wanted.clamp(1, sentence.frames.nrows().max(1));
        Ok(sentence.frames.slice(ndarray::s![..n, ..]).mapv(f64::from))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn ramp(t: usize, d: usize, offset: f32) -> Array2<f32> {
        Array2::from_shape_fn((t, d), |(i, j)| offset + i as f32 + j as f32 / 10.0)
    }

    #[test]
    fn feature_file_round_trips_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let frames = array![[0.125f32, -3.5], [f32::MIN_POSITIVE, 7.25]];
        let path =
            write_feature_file(dir.path(), "sess", "A", 4, 1.5, 100.0, &frames).unwrap();
        let (meta, back) = read_feature_file(&path).unwrap();
        assert_eq!(meta, FrameMeta { t: 2, d_f: 2, frame_rate: 100.0, start: 1.5 });
        assert_eq!(back, frames);
        let sidecar = std::fs::read_to_string(path.with_extension("json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&sidecar).unwrap();
        assert_eq!(v["T"], 2);
        assert_eq!(v["d_f"], 2);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let frames = ramp(3, 2, 0.0);
        let path = write_feature_file(dir.path(), "s", "A", 0, 0.0, 50.0, &frames).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(
            read_feature_file(&path),
            Err(FeatureError::SizeMismatch { .. })
        ));
    }

    #[test]
    fn store_slices_by_time_span() {
        let dir = tempfile::tempdir().unwrap();
        // Sentence of 1.0 s at 10 frames/s starting at t = 2.0.
        write_feature_file(dir.path(), "sess", "A", 0, 2.0, 10.0, &ramp(10, 3, 0.0)).unwrap();
        let store = FeatureStore::open(dir.path()).unwrap();
        assert_eq!(store.frame_dim(), 3);

        let mid = AcousticRef { session_id: "sess".into(), start: 2.0, end: 2.45 };
        let frames = store.frames_for("A", &mid).unwrap();
        assert_eq!(frames.nrows(), 5); // ceil(0.45 * 10)
        assert_eq!(frames[[0, 0]], 0.0);

        let full = AcousticRef { session_id: "sess".into(), start: 2.0, end: 3.0 };
        assert_eq!(store.frames_for("A", &full).unwrap().nrows(), 10);

        let beyond = AcousticRef { session_id: "sess".into(), start: 2.0, end: 9.9 };
        assert_eq!(store.frames_for("A", &beyond).unwrap().nrows(), 10);

        let degenerate = AcousticRef { session_id: "sess".into(), start: 2.0, end: 2.0 };
        assert_eq!(store.frames_for("A", &degenerate).unwrap().nrows(), 1);
    }

    #[test]
    fn store_distinguishes_speakers_and_sentences() {
        let dir = tempfile::tempdir().unwrap();
        write_feature_file(dir.path(), "sess", "A", 0, 0.0, 10.0, &ramp(4, 2, 0.0)).unwrap();
        write_feature_file(dir.path(), "sess", "B", 0, 0.0, 10.0, &ramp(4, 2, 100.0)).unwrap();
        write_feature_file(dir.path(), "sess", "A", 1, 5.0, 10.0, &ramp(4, 2, 200.0)).unwrap();
        let store = FeatureStore::open(dir.path()).unwrap();

        let first = AcousticRef { session_id: "sess".into(), start: 0.0, end: 0.2 };
        assert_eq!(store.frames_for("A", &first).unwrap()[[0, 0]], 0.0);
        assert_eq!(store.frames_for("B", &first).unwrap()[[0, 0]], 100.0);

        let second = AcousticRef { session_id: "sess".into(), start: 5.0, end: 5.2 };
        assert_eq!(store.frames_for("A", &second).unwrap()[[0, 0]], 200.0);

        let missing = AcousticRef { session_id: "sess".into(), start: 9.0, end: 9.5 };
        assert!(store.frames_for("A", &missing).is_err());
        assert!(store.frames_for("C", &first).is_err());
    }
}
