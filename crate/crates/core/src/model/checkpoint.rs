//! Single-file model checkpoints: JSON manifest plus raw parameter payload.

use super::{EncoderConfig, FusionOption, HeadKind, Model, ModelError, ParamStore, Vocab};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"TTCKPT01";
const FORMAT_VERSION: u32 = 1;

/// Training provenance stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Epoch (1-based) whose validation loss selected this checkpoint.
    pub epoch: usize,
    pub val_loss: Option<f64>,
    pub n_params: usize,
    pub n_trainable: usize,
    pub trainable_fraction: f64,
}

impl CheckpointMeta {
    pub fn new(epoch: usize, val_loss: Option<f64>, n_params: usize, n_trainable: usize) -> Self {
        let trainable_fraction = if n_params == 0 {
            0.0
        } else {
            n_trainable as f64 / n_params as f64
        };
        CheckpointMeta {
            epoch,
            val_loss,
            n_params,
            n_trainable,
            trainable_fraction,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    config: EncoderConfig,
    fusion: FusionOption,
    head: HeadKind,
    lora_rank: Option<usize>,
    vocab: Vec<String>,
    meta: CheckpointMeta,
    params: Vec<ParamEntry>,
}

/// Write a model and its metadata; the file is staged and renamed so a
/// crash never leaves a partial checkpoint behind.
pub fn save_checkpoint(
    model: &Model,
    meta: &CheckpointMeta,
    path: &Path,
) -> Result<(), ModelError> {
    let entries: Vec<ParamEntry> = model
        .params
        .iter()
        .map(|(name, v)| ParamEntry {
            name: name.to_string(),
            rows: v.nrows(),
            cols: v.ncols(),
        })
        .collect();
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: model.config.clone(),
        fusion: model.fusion,
        head: model.head,
        lora_rank: model.lora_rank,
        vocab: model.vocab.tokens().to_vec(),
        meta: meta.clone(),
        params: entries,
    };
    let manifest_bytes =
        serde_json::to_vec(&manifest).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let mut payload = Vec::with_capacity(model.params.n_scalars() * 4);
    for (_, v) in model.params.iter() {
        for &x in v.iter() {
            payload.extend_from_slice(&x.to_le_bytes());
        }
    }
    let staged = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&staged)?;
        f.write_all(MAGIC)?;
        f.write_all(&(manifest_bytes.len() as u64).to_le_bytes())?;
        f.write_all(&manifest_bytes)?;
        f.write_all(&payload)?;
        f.sync_all()?;
    }
    fs::rename(&staged, path)?;
    Ok(())
}

/// Read a checkpoint back; the restored model is validated against a fresh
/// model of the same configuration so shape drift is caught on load.
pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointMeta), ModelError> {
    let mut f = fs::File::open(path)?;
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)
        .map_err(|_| ModelError::Checkpoint("file too short for header".into()))?;
    if &magic != MAGIC {
        return Err(ModelError::Checkpoint(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let mut len_bytes = [0u8; 8];
    f.read_exact(&mut len_bytes)
        .map_err(|_| ModelError::Checkpoint("file too short for manifest length".into()))?;
    let manifest_len = u64::from_le_bytes(len_bytes) as usize;
    let mut manifest_bytes = vec![0u8; manifest_len];
    f.read_exact(&mut manifest_bytes)
        .map_err(|_| ModelError::Checkpoint("truncated manifest".into()))?;
    let manifest: Manifest = serde_json::from_slice(&manifest_bytes)
        .map_err(|e| ModelError::Checkpoint(format!("manifest parse: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported format version {}",
            manifest.format_version
        )));
    }
    let expected_scalars: usize = manifest.params.iter().map(|e| e.rows * e.cols).sum();
    let mut payload = Vec::new();
    f.read_to_end(&mut payload)?;
    if payload.len() != expected_scalars * 4 {
        return Err(ModelError::Checkpoint(format!(
            "payload holds {} bytes, manifest expects {}",
            payload.len(),
            expected_scalars * 4
        )));
    }
    let mut params = ParamStore::new();
    let mut offset = 0usize;
    for entry in &manifest.params {
        let n = entry.rows * entry.cols;
        let mut values = Vec::with_capacity(n);
        for i in 0..n {
            let at = (offset + i) * 4;
            let bytes: [u8; 4] = payload[at..at + 4].try_into().expect("length checked");
            values.push(f32::from_le_bytes(bytes));
        }
        offset += n;
        let arr = Array2::from_shape_vec((entry.rows, entry.cols), values)
            .map_err(|e| ModelError::Checkpoint(format!("shape {}: {e}", entry.name)))?;
        params.insert(entry.name.clone(), arr);
    }
    let vocab = Vocab::from_tokens(manifest.vocab);
    let reference = Model::new(
        manifest.config.clone(),
        vocab.clone(),
        manifest.fusion,
        manifest.head,
        manifest.lora_rank,
    )?;
    if reference.params.len() != params.len() {
        return Err(ModelError::Checkpoint(format!(
            "expected {} parameters, found {}",
            reference.params.len(),
            params.len()
        )));
    }
    for (name, expect) in reference.params.iter() {
        if !params.contains(name) {
            return Err(ModelError::Checkpoint(format!("missing parameter {name}")));
        }
        let got = params.get(name);
        if got.dim() != expect.dim() {
            return Err(ModelError::Checkpoint(format!(
                "parameter {name} has shape {:?}, expected {:?}",
                got.dim(),
                expect.dim()
            )));
        }
    }
    let model = Model {
        config: manifest.config,
        vocab,
        fusion: manifest.fusion,
        head: manifest.head,
        lora_rank: manifest.lora_rank,
        params,
    };
    Ok((model, manifest.meta))
}
