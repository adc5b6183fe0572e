//! Class rebalancing for the training split.

use super::{Sample, TurnEvent};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Target count for continuing-speech samples: the rounded mean of the
/// backchannel and turn-taking counts.
pub fn downsample_target(n_backchannel: usize, n_turn_taking: usize) -> usize {
    ((n_backchannel + n_turn_taking) as f64 / 2.0).round() as usize
}

/// Subsample the majority continuing-speech class down to
/// [`downsample_target`], leaving the other classes and the relative sample
/// order untouched. Selection is uniform and fully determined by `rng_seed`.
pub fn downsample_continuing(samples: &[Sample], rng_seed: u64) -> Vec<Sample> {
    let n_b = samples.iter().filter(|s| s.label == TurnEvent::Backchannel).count();
    let n_t = samples.iter().filter(|s| s.label == TurnEvent::TurnTaking).count();
    let continuing: Vec<usize> = samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.label == TurnEvent::ContinuingSpeech)
        .map(|(i, _)| i)
        .collect();

    let target = downsample_target(n_b, n_t);
    if continuing.len() <= target {
        return samples.to_vec();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let picked = rand::seq::index::sample(&mut rng, continuing.len(), target);
    let mut keep = vec![false; samples.len()];
    for (i, s) in samples.iter().enumerate() {
        if s.label != TurnEvent::ContinuingSpeech {
            keep[i] = true;
        }
    }
    for j in picked.iter() {
        keep[continuing[j]] = true;
    }
    samples
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(s, _)| s.clone())
        .collect()
}
