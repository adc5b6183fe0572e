//! Threshold-free detection metrics: ROC, AUC, EER, balanced accuracy.

use crate::corpus::TurnEvent;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no {side} scores supplied")]
    EmptySide { side: &'static str },
    #[error("no records with class {class}")]
    MissingClass { class: &'static str },
    #[error("no class has both positive and negative records")]
    NoScorableClass,
    #[error("scores must be finite (sample {sample_id})")]
    NonFiniteScore { sample_id: String },
    #[error("score file malformed: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Per-sample model output: one posterior per turn event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub sample_id: String,
    pub true_label: TurnEvent,
    pub scores: [f64; 3],
}

impl ScoreRecord {
    pub fn score(&self, event: TurnEvent) -> f64 {
        self.scores[event.index()]
    }
}

/// Detection metrics of one one-vs-rest class task. `auc`/`eer` are absent
/// when the class has no positives (or no negatives) in the evaluated split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eer: Option<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageMetrics {
    pub auc: f64,
    pub eer: f64,
}

/// Which trained model produced the evaluated scores; carried through the
/// metrics file so result tables can be grouped without re-reading configs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDesc {
    pub fusion: String,
    pub head: String,
    pub use_history: bool,
}

/// Full evaluation result for one score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub classes: BTreeMap<String, ClassMetrics>,
    pub average: AverageMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bacc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelDesc>,
}

/// ROC staircase: one `(FPR, TPR)` point per distinct threshold, from the
/// everything-negative sentinel `(0,0)` to the everything-positive `(1,1)`.
pub fn roc_points(pos: &[f64], neg: &[f64]) -> Result<Vec<(f64, f64)>, MetricsError> {
    if pos.is_empty() {
        return Err(MetricsError::EmptySide { side: "positive" });
    }
    if neg.is_empty() {
        return Err(MetricsError::EmptySide { side: "negative" });
    }
    let mut scored: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (n_pos, n_neg) = (pos.len() as f64, neg.len() as f64);
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < scored.len() {
        let threshold = scored[i].0;
        while i < scored.len() && scored[i].0 == threshold {
            if scored[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n_neg, tp as f64 / n_pos));
    }
    Ok(points)
}

/// Trapezoidal area under the ROC staircase. Equal to the probability that
/// a random positive outscores a random negative, counting ties as half.
pub fn auc(pos: &[f64], neg: &[f64]) -> Result<f64, MetricsError> {
    let points = roc_points(pos, neg)?;
    let mut area = 0.0;
    for w in points.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        area += (x1 - x0) * (y0 + y1) / 2.0;
    }
    Ok(area)
}

/// Point on the ROC where the false-positive and false-negative rates meet,
/// found by linear interpolation on the segment where their difference
/// changes sign. Returns `(fpr, fnr)` there; the two agree to within 1e-9.
pub fn eer_crossing(pos: &[f64], neg: &[f64]) -> Result<(f64, f64), MetricsError> {
    let points = roc_points(pos, neg)?;
    // diff = FPR - FNR = x + y - 1; runs from -1 at (0,0) to +1 at (1,1).
    for w in points.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        let d0 = x0 + y0 - 1.0;
        let d1 = x1 + y1 - 1.0;
        if d0 <= 0.0 && d1 >= 0.0 {
            let (dx, dy) = (x1 - x0, y1 - y0);
            let denom = dx + dy;
            let s = if denom == 0.0 { 0.0 } else { (1.0 - x0 - y0) / denom };
            let fpr = x0 + s * dx;
            let fnr = 1.0 - (y0 + s * dy);
            return Ok((fpr, fnr));
        }
    }
    unreachable!("FPR - FNR spans [-1, 1] over the ROC");
}

/// Equal error rate: the common error value at the ROC's FPR = FNR point.
pub fn eer(pos: &[f64], neg: &[f64]) -> Result<f64, MetricsError> {
    let (fpr, fnr) = eer_crossing(pos, neg)?;
    Ok((fpr + fnr) / 2.0)
}

/// Balanced accuracy over turn-taking vs. continuing speech. A record is
/// predicted as a turn shift iff its turn-taking score exceeds its
/// continuing-speech score; backchannel records are ignored.
pub fn balanced_accuracy_two_class(records: &[ScoreRecord]) -> Result<f64, MetricsError> {
    let mut correct = [0usize; 2];
    let mut total = [0usize; 2];
    for r in records {
        let truth_is_turn = match r.true_label {
            TurnEvent::TurnTaking => true,
            TurnEvent::ContinuingSpeech => false,
            TurnEvent::Backchannel => continue,
        };
        let predicted_turn = r.score(TurnEvent::TurnTaking) > r.score(TurnEvent::ContinuingSpeech);
        let side = truth_is_turn as usize;
        total[side] += 1;
        if predicted_turn == truth_is_turn {
            correct[side] += 1;
        }
    }
    if total[1] == 0 {
        return Err(MetricsError::MissingClass { class: TurnEvent::TurnTaking.name() });
    }
    if total[0] == 0 {
        return Err(MetricsError::MissingClass { class: TurnEvent::ContinuingSpeech.name() });
    }
    let recall_turn = correct[1] as f64 / total[1] as f64;
    let recall_continue = correct[0] as f64 / total[0] as f64;
    Ok((recall_turn + recall_continue) / 2.0)
}

fn one_vs_rest(records: &[ScoreRecord], class: TurnEvent) -> (Vec<f64>, Vec<f64>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for r in records {
        if r.true_label == class {
            pos.push(r.score(class));
        } else {
            neg.push(r.score(class));
        }
    }
    (pos, neg)
}

/// Per-class one-vs-rest AUC/EER plus their unweighted averages. Classes
/// without both positives and negatives keep their counts but are excluded
/// from the averages. Balanced accuracy is attached when both turn-taking
/// and continuing-speech records exist.
pub fn report(records: &[ScoreRecord]) -> Result<MetricsReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::NoScorableClass);
    }
    for r in records {
        if r.scores.iter().any(|s| !s.is_finite()) {
            return Err(MetricsError::NonFiniteScore { sample_id: r.sample_id.clone() });
        }
    }
    let mut classes = BTreeMap::new();
    let mut aucs = Vec::new();
    let mut eers = Vec::new();
    for class in TurnEvent::ALL {
        let (pos, neg) = one_vs_rest(records, class);
        let metrics = if pos.is_empty() || neg.is_empty() {
            log::warn!(
                "class {} has {} positives / {} negatives; excluded from the average",
                class.name(),
                pos.len(),
                neg.len()
            );
            ClassMetrics { auc: None, eer: None, n_pos: pos.len(), n_neg: neg.len() }
        } else {
            let class_auc = auc(&pos, &neg)?;
            let class_eer = eer(&pos, &neg)?;
            aucs.push(class_auc);
            eers.push(class_eer);
            ClassMetrics {
                auc: Some(class_auc),
                eer: Some(class_eer),
                n_pos: pos.len(),
                n_neg: neg.len(),
            }
        };
        classes.insert(class.name().to_string(), metrics);
    }
    if aucs.is_empty() {
        return Err(MetricsError::NoScorableClass);
    }
    let average = AverageMetrics {
        auc: aucs.iter().sum::<f64>() / aucs.len() as f64,
        eer: eers.iter().sum::<f64>() / eers.len() as f64,
    };
    Ok(MetricsReport {
        classes,
        average,
        bacc: balanced_accuracy_two_class(records).ok(),
        model: None,
    })
}

/// Write the per-class ROC staircases as CSV rows `class,fpr,tpr`.
pub fn export_roc_csv(records: &[ScoreRecord], path: &Path) -> Result<(), MetricsError> {
    let mut out = csv::Writer::from_path(path)?;
    out.write_record(["class", "fpr", "tpr"])?;
    for class in TurnEvent::ALL {
        let (pos, neg) = one_vs_rest(records, class);
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        for (fpr, tpr) in roc_points(&pos, &neg)? {
            out.write_record([class.name(), &format!("{fpr}"), &format!("{tpr}")])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Write per-class score histograms (positives vs. rest) as CSV rows
/// `class,bin_low,bin_high,positives,negatives` over `bins` uniform bins
/// spanning `[0, 1]`.
pub fn export_histogram_csv(
    records: &[ScoreRecord],
    bins: usize,
    path: &Path,
) -> Result<(), MetricsError> {
    let bins = bins.max(1);
    let mut out = csv::Writer::from_path(path)?;
    out.write_record(["class", "bin_low", "bin_high", "positives", "negatives"])?;
    for class in TurnEvent::ALL {
        let (pos, neg) = one_vs_rest(records, class);
        let mut pos_counts = vec![0usize; bins];
        let mut neg_counts = vec![0usize; bins];
        for (scores, counts) in [(&pos, &mut pos_counts), (&neg, &mut neg_counts)] {
            for &s in scores.iter() {
                let idx = ((s * bins as f64) as usize).min(bins - 1);
                counts[idx] += 1;
            }
        }
        for b in 0..bins {
            out.write_record([
                class.name(),
                &format!("{}", b as f64 / bins as f64),
                &format!("{}", (b + 1) as f64 / bins as f64),
                &pos_counts[b].to_string(),
                &neg_counts[b].to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Fixed column order of score files.
pub const SCORE_CSV_HEADER: [&str; 5] = [
    "sample_id",
    "true_label",
    "score_continue",
    "score_backchannel",
    "score_turn",
];

/// Write score records as CSV; float formatting is shortest-round-trip, so
/// identical records always produce byte-identical files.
pub fn write_score_csv(records: &[ScoreRecord], path: &Path) -> Result<(), MetricsError> {
    let mut out = csv::Writer::from_path(path)?;
    out.write_record(SCORE_CSV_HEADER)?;
    for r in records {
        out.write_record([
            r.sample_id.as_str(),
            &r.true_label.index().to_string(),
            &r.scores[0].to_string(),
            &r.scores[1].to_string(),
            &r.scores[2].to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Read a score CSV, validating the header, label range, and score finiteness.
pub fn read_score_csv(path: &Path) -> Result<Vec<ScoreRecord>, MetricsError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != SCORE_CSV_HEADER {
        return Err(MetricsError::Malformed(format!(
            "unexpected header {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let field = |j: usize| -> Result<&str, MetricsError> {
            row.get(j)
                .ok_or_else(|| MetricsError::Malformed(format!("row {} too short", i + 2)))
        };
        let label_idx: usize = field(1)?
            .parse()
            .map_err(|_| MetricsError::Malformed(format!("row {}: bad label", i + 2)))?;
        let true_label = TurnEvent::from_index(label_idx)
            .ok_or_else(|| MetricsError::Malformed(format!("row {}: label {label_idx}", i + 2)))?;
        let mut scores = [0.0f64; 3];
        for (k, slot) in scores.iter_mut().enumerate() {
            *slot = field(2 + k)?
                .parse()
                .map_err(|_| MetricsError::Malformed(format!("row {}: bad score", i + 2)))?;
        }
        let sample_id = field(0)?.to_string();
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(MetricsError::NonFiniteScore { sample_id });
        }
        records.push(ScoreRecord { sample_id, true_label, scores });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn record(id: &str, label: TurnEvent, scores: [f64; 3]) -> ScoreRecord {
        ScoreRecord { sample_id: id.into(), true_label: label, scores }
    }

    #[test]
    fn perfect_separation() {
        assert_eq!(auc(&[0.9], &[0.1]).unwrap(), 1.0);
        assert_eq!(eer(&[0.9], &[0.1]).unwrap(), 0.0);
        let points = roc_points(&[0.9], &[0.1]).unwrap();
        assert!(points.contains(&(0.0, 0.0)));
        assert!(points.contains(&(0.0, 1.0)));
        assert!(points.contains(&(1.0, 1.0)));
    }

    #[test]
    fn all_ties_give_half() {
        assert_abs_diff_eq!(auc(&[0.5, 0.5], &[0.5, 0.5, 0.5]).unwrap(), 0.5);
    }

    #[test]
    fn interleaved_example_matches_hand_enumeration() {
        let pos = [0.9, 0.2];
        let neg = [0.8, 0.1];
        let points = roc_points(&pos, &neg).unwrap();
        assert_eq!(
            points,
            vec![(0.0, 0.0), (0.0, 0.5), (0.5, 0.5), (0.5, 1.0), (1.0, 1.0)]
        );
        assert_abs_diff_eq!(auc(&pos, &neg).unwrap(), 0.75);
    }

    #[test]
    fn eer_matches_dense_threshold_sweep() {
        let pos = [0.9, 0.2];
        let neg = [0.8, 0.1];
        let got = eer(&pos, &neg).unwrap();
        // Densely sweep thresholds and report the smallest max(FPR, FNR)
        // where the two rates cross.
        let mut best = f64::INFINITY;
        for k in 0..=1_000_000 {
            let t = k as f64 / 1_000_000.0;
            let fpr = neg.iter().filter(|&&s| s >= t).count() as f64 / neg.len() as f64;
            let fnr = pos.iter().filter(|&&s| s < t).count() as f64 / pos.len() as f64;
            if (fpr - fnr).abs() < 1e-12 {
                best = best.min(fpr);
            }
        }
        // The staircase has no exact crossing vertex here, so interpolation
        // lands between the sweep's nearest achievable operating points.
        if best.is_finite() {
            assert_abs_diff_eq!(got, best, epsilon = 1e-6);
        } else {
            let (fpr, fnr) = eer_crossing(&pos, &neg).unwrap();
            assert!((fpr - fnr).abs() <= 1e-9);
            assert!((0.0..=1.0).contains(&got));
        }
    }

    #[test]
    fn empty_side_errors() {
        assert!(auc(&[], &[0.1]).is_err());
        assert!(auc(&[0.9], &[]).is_err());
    }

    #[test]
    fn balanced_accuracy_hand_count() {
        // 3 turn-taking records, 2 predicted as turns; 2 continuing both
        // predicted as continuing: 0.5 * (2/3 + 2/2).
        let records = vec![
            record("t1", TurnEvent::TurnTaking, [0.2, 0.1, 0.7]),
            record("t2", TurnEvent::TurnTaking, [0.3, 0.1, 0.6]),
            record("t3", TurnEvent::TurnTaking, [0.6, 0.1, 0.3]),
            record("c1", TurnEvent::ContinuingSpeech, [0.8, 0.1, 0.1]),
            record("c2", TurnEvent::ContinuingSpeech, [0.7, 0.1, 0.2]),
        ];
        assert_abs_diff_eq!(
            balanced_accuracy_two_class(&records).unwrap(),
            0.5 * (2.0 / 3.0 + 1.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn balanced_accuracy_needs_both_classes() {
        let records = vec![record("t1", TurnEvent::TurnTaking, [0.2, 0.1, 0.7])];
        assert!(balanced_accuracy_two_class(&records).is_err());
    }

    #[test]
    fn constant_prediction_scores_half() {
        let records = vec![
            record("t1", TurnEvent::TurnTaking, [0.2, 0.0, 0.8]),
            record("c1", TurnEvent::ContinuingSpeech, [0.3, 0.0, 0.7]),
        ];
        assert_abs_diff_eq!(balanced_accuracy_two_class(&records).unwrap(), 0.5);
    }

    #[test]
    fn report_averages_present_classes() {
        let records = vec![
            record("a", TurnEvent::ContinuingSpeech, [0.9, 0.2, 0.1]),
            record("b", TurnEvent::ContinuingSpeech, [0.8, 0.3, 0.2]),
            record("c", TurnEvent::Backchannel, [0.2, 0.9, 0.1]),
            record("d", TurnEvent::TurnTaking, [0.1, 0.2, 0.9]),
        ];
        let rep = report(&records).unwrap();
        assert_eq!(rep.classes.len(), 3);
        let aucs: Vec<f64> = rep.classes.values().map(|c| c.auc.unwrap()).collect();
        assert_abs_diff_eq!(rep.average.auc, aucs.iter().sum::<f64>() / 3.0, epsilon = 1e-12);
        assert!(rep.bacc.is_some());
    }

    #[test]
    fn report_excludes_absent_class_from_average() {
        let records = vec![
            record("a", TurnEvent::ContinuingSpeech, [0.9, 0.2, 0.1]),
            record("d", TurnEvent::TurnTaking, [0.1, 0.2, 0.9]),
        ];
        let rep = report(&records).unwrap();
        let bc = &rep.classes[TurnEvent::Backchannel.name()];
        assert!(bc.auc.is_none());
        assert_eq!(bc.n_pos, 0);
        assert_eq!(bc.n_neg, 2);
        let cs = rep.classes[TurnEvent::ContinuingSpeech.name()].auc.unwrap();
        let tt = rep.classes[TurnEvent::TurnTaking.name()].auc.unwrap();
        assert_abs_diff_eq!(rep.average.auc, (cs + tt) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn report_serializes_expected_shape() {
        let records = vec![
            record("a", TurnEvent::ContinuingSpeech, [0.9, 0.2, 0.1]),
            record("c", TurnEvent::Backchannel, [0.2, 0.9, 0.1]),
            record("d", TurnEvent::TurnTaking, [0.1, 0.2, 0.9]),
        ];
        let rep = report(&records).unwrap();
        let v = serde_json::to_value(&rep).unwrap();
        assert!(v["classes"]["backchannel"]["auc"].is_number());
        assert!(v["classes"]["turn_taking"]["n_pos"].is_number());
        assert!(v["average"]["eer"].is_number());
        assert!(v.get("model").is_none());
    }

    #[test]
    fn exports_write_csv() {
        let records = vec![
            record("a", TurnEvent::ContinuingSpeech, [0.9, 0.2, 0.1]),
            record("c", TurnEvent::Backchannel, [0.2, 0.9, 0.1]),
            record("d", TurnEvent::TurnTaking, [0.1, 0.2, 0.9]),
        ];
        let dir = tempfile::tempdir().unwrap();
        let roc = dir.path().join("roc.csv");
        let hist = dir.path().join("hist.csv");
        export_roc_csv(&records, &roc).unwrap();
        export_histogram_csv(&records, 10, &hist).unwrap();
        let roc_text = std::fs::read_to_string(&roc).unwrap();
        assert!(roc_text.starts_with("class,fpr,tpr"));
        assert!(roc_text.contains("turn_taking"));
        let hist_text = std::fs::read_to_string(&hist).unwrap();
        assert!(hist_text.starts_with("class,bin_low,bin_high,positives,negatives"));
        let hist_rows = hist_text.lines().count();
        assert_eq!(hist_rows, 1 + 3 * 10);
    }

    #[test]
    fn score_csv_round_trips_exactly() {
        let records = vec![
            record("s1", TurnEvent::ContinuingSpeech, [0.123456789012345, 0.2, 0.1]),
            record("s2", TurnEvent::TurnTaking, [1.0 / 3.0, 2.0 / 7.0, 1e-12]),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        write_score_csv(&records, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("sample_id,true_label,score_continue,score_backchannel,score_turn"));
        let back = read_score_csv(&path).unwrap();
        assert_eq!(back, records, "floats must survive the CSV round trip bit-exactly");

        write_score_csv(&records, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
    }

    #[test]
    fn score_csv_rejects_bad_headers_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        let bad_header = dir.path().join("bad1.csv");
        std::fs::write(&bad_header, "id,label,a,b,c\nx,0,0.1,0.2,0.3\n").unwrap();
        assert!(matches!(
            read_score_csv(&bad_header),
            Err(MetricsError::Malformed(_))
        ));
        let bad_label = dir.path().join("bad2.csv");
        std::fs::write(
            &bad_label,
            "sample_id,true_label,score_continue,score_backchannel,score_turn\nx,7,0.1,0.2,0.3\n",
        )
        .unwrap();
        assert!(matches!(
            read_score_csv(&bad_label),
            Err(MetricsError::Malformed(_))
        ));
    }
}
