//! Session-level train/val/test partitioning.

use super::CorpusError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Which partition a session belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Number of sessions assigned to each partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Deterministic mapping from session id to partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SplitAssignment {
    assignment: BTreeMap<String, Split>,
}

impl SplitAssignment {
    pub fn get(&self, session_id: &str) -> Option<Split> {
        self.assignment.get(session_id).copied()
    }

    /// Session ids in one partition, in sorted order.
    pub fn sessions_in(&self, split: Split) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, s)| **s == split)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn counts(&self) -> SplitCounts {
        let n = |split| self.assignment.values().filter(|s| **s == split).count();
        SplitCounts { train: n(Split::Train), val: n(Split::Val), test: n(Split::Test) }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Split)> {
        self.assignment.iter().map(|(id, s)| (id.as_str(), *s))
    }

    pub(crate) fn from_map(assignment: BTreeMap<String, Split>) -> Self {
        SplitAssignment { assignment }
    }
}

/// Partition `session_ids` in input order so partition sizes follow `ratio`
/// under largest-remainder rounding, with every partition non-empty.
pub fn split_sessions(
    session_ids: &[String],
    ratio: (u64, u64, u64),
) -> Result<SplitAssignment, CorpusError> {
    let n = session_ids.len();
    if n < 3 {
        return Err(CorpusError::TooFewSessions { n });
    }
    if ratio.0 == 0 || ratio.1 == 0 || ratio.2 == 0 {
        return Err(CorpusError::InvalidRatio);
    }
    let ratio = [ratio.0 as f64, ratio.1 as f64, ratio.2 as f64];
    let total: f64 = ratio.iter().sum();

    let quotas: Vec<f64> = ratio.iter().map(|r| n as f64 * r / total).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();

    let mut by_remainder: Vec<usize> = (0..3).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then_with(|| a.cmp(&b))
    });
    for i in 0..(n - assigned) {
        counts[by_remainder[i % 3]] += 1;
    }

    // Every partition must hold at least one session; borrow from the largest.
    for i in 0..3 {
        while counts[i] == 0 {
            let donor = (0..3).max_by_key(|&j| counts[j]).unwrap();
            counts[donor] -= 1;
            counts[i] += 1;
        }
    }

    let mut assignment = BTreeMap::new();
    let mut cursor = 0usize;
    for (split, &count) in Split::ALL.iter().zip(&counts) {
        for id in &session_ids[cursor..cursor + count] {
            assignment.insert(id.clone(), *split);
        }
        cursor += count;
    }
    Ok(SplitAssignment::from_map(assignment))
}
