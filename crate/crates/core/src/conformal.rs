//! Least-ambiguous-classifier calibration and set-valued prediction.
//!
//! The nonconformity score of label `y` for a record with probabilities `p`
//! is `s = 1 - p[y]`: lower means more confident. Calibration collects the
//! true-label scores of `n` held-out records and takes the
//! `⌈(n+1)(1-α)⌉`-th smallest as the threshold `q_alpha`; when that rank
//! exceeds `n` the threshold saturates at 1 and every label is admitted.
//! Prediction sets then contain exactly the labels scoring at or below the
//! threshold.
//!
//! The `+1` in the rank is what turns the empirical quantile into a
//! finite-sample guarantee: under exchangeability of calibration and test
//! records, `Pr[y ∈ C(x)] ≥ 1 - α` holds for any classifier, however badly
//! calibrated its probabilities are. The threshold is stored exactly as the
//! selected order statistic — interpolated quantiles would break the
//! finite-sample argument.
//!
//! Empty sets are possible (every label scores above the threshold) and are
//! kept by default; the opt-in `force_nonempty` policy falls back to the
//! argmax label instead, which can only widen sets and therefore never
//! lowers coverage.

use crate::dataset::{ProbRecord, RecordSet};
use crate::label_space::LabelSpace;
use crate::metrics::point_prediction;
use crate::util;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConformalError {
    #[error("alpha must be in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("record `{0}` has no true label")]
    MissingTrueLabel(String),
    #[error("label {label} out of range for {k} labels")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("probs has {got} entries, the model expects {expected}")]
    WrongProbCount { got: usize, expected: usize },
    #[error("record set label space does not match the model's")]
    LabelSpaceMismatch,
    #[error("threshold must be in [0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("n_calibration must be at least 1")]
    InvalidCalibrationCount,
    #[error("invalid model file: {0}")]
    BadModelFile(String),
    #[error("prediction set for `{id}` names unknown label `{label}`")]
    UnknownSetLabel { id: String, label: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// LAC nonconformity score: `1 - probs[label]`.
pub fn lac_score(probs: &[f64], label: usize) -> Result<f64, ConformalError> {
    if label >= probs.len() {
        return Err(ConformalError::LabelOutOfRange {
            label,
            k: probs.len(),
        });
    }
    Ok(1.0 - probs[label])
}

/// The labels admitted for one record, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionSet {
    record_id: String,
    members: Vec<usize>,
}

impl PredictionSet {
    pub fn new(record_id: impl Into<String>, mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        Self {
            record_id: record_id.into(),
            members,
        }
    }

    pub fn record_id(&self) -> &str {
        &self.record_id
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, label: usize) -> bool {
        self.members.binary_search(&label).is_ok()
    }
}

/// Calibrated artifact: the risk level, the threshold, and the label space
/// the threshold was computed against. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalModel {
    alpha: f64,
    q_alpha: f64,
    n_calibration: usize,
    label_space: LabelSpace,
    force_nonempty: bool,
}

/// `⌈(n+1)(1-α)⌉`-th smallest score, or 1.0 when the rank exceeds `n`.
fn threshold_from_scores(scores: &mut [f64], alpha: f64) -> f64 {
    let n = scores.len();
    let rank = ((n as f64 + 1.0) * (1.0 - alpha)).ceil() as usize;
    if rank > n {
        return 1.0;
    }
    let (_, q, _) = scores.select_nth_unstable_by(rank - 1, f64::total_cmp);
    *q
}

/// Computes the threshold from every calibration record's true-label score.
pub fn calibrate(
    calibration: &RecordSet,
    alpha: f64,
    force_nonempty: bool,
) -> Result<ConformalModel, ConformalError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ConformalError::InvalidAlpha(alpha));
    }
    if calibration.is_empty() {
        return Err(ConformalError::EmptyCalibration);
    }
    let mut scores = Vec::with_capacity(calibration.len());
    for record in calibration.iter() {
        let label = record
            .true_label()
            .ok_or_else(|| ConformalError::MissingTrueLabel(record.id().to_string()))?;
        scores.push(lac_score(record.probs(), label)?);
    }
    let q_alpha = threshold_from_scores(&mut scores, alpha);
    Ok(ConformalModel {
        alpha,
        q_alpha,
        n_calibration: calibration.len(),
        label_space: calibration.label_space().clone(),
        force_nonempty,
    })
}

impl ConformalModel {
    /// Rebuild a model from stored fields, validating the invariants.
    pub fn from_parts(
        alpha: f64,
        q_alpha: f64,
        n_calibration: usize,
        label_space: LabelSpace,
        force_nonempty: bool,
    ) -> Result<Self, ConformalError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(ConformalError::InvalidAlpha(alpha));
        }
        if !(0.0..=1.0).contains(&q_alpha) {
            return Err(ConformalError::InvalidThreshold(q_alpha));
        }
        if n_calibration == 0 {
            return Err(ConformalError::InvalidCalibrationCount);
        }
        Ok(Self {
            alpha,
            q_alpha,
            n_calibration,
            label_space,
            force_nonempty,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn q_alpha(&self) -> f64 {
        self.q_alpha
    }

    pub fn n_calibration(&self) -> usize {
        self.n_calibration
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    pub fn force_nonempty(&self) -> bool {
        self.force_nonempty
    }

    /// Labels whose score `1 - probs[y]` does not exceed the threshold
    /// (boundary scores are admitted). With `force_nonempty`, an empty
    /// result falls back to the argmax label, lowest index on ties.
    pub fn admitted_labels(&self, probs: &[f64]) -> Result<Vec<usize>, ConformalError> {
        let k = self.label_space.len();
        if probs.len() != k {
            return Err(ConformalError::WrongProbCount {
                got: probs.len(),
                expected: k,
            });
        }
        let mut members: Vec<usize> = (0..k)
            .filter(|&y| 1.0 - probs[y] <= self.q_alpha)
            .collect();
        if members.is_empty() && self.force_nonempty {
            members.push(point_prediction(probs));
        }
        Ok(members)
    }

    pub fn predict_set(&self, record: &ProbRecord) -> Result<PredictionSet, ConformalError> {
        Ok(PredictionSet {
            record_id: record.id().to_string(),
            members: self.admitted_labels(record.probs())?,
        })
    }

    /// Element-wise [`Self::predict_set`] over a record set, order-preserving.
    pub fn predict_batch(&self, records: &RecordSet) -> Result<Vec<PredictionSet>, ConformalError> {
        if records.label_space() != &self.label_space {
            return Err(ConformalError::LabelSpaceMismatch);
        }
        records.iter().map(|r| self.predict_set(r)).collect()
    }
}

// ---------------------------------------------------------------------------
// Model file
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredModel {
    alpha: f64,
    q_alpha: f64,
    n_calibration: usize,
    labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ordinal_values: Option<Vec<i64>>,
    force_nonempty: bool,
    calibration_sha256: String,
}

/// Serialize a model together with the content hash of the calibration file
/// it was computed from, so downstream evaluations stay auditable.
pub fn write_model<W: Write>(
    model: &ConformalModel,
    calibration_sha256: &str,
    mut writer: W,
) -> Result<(), ConformalError> {
    let stored = StoredModel {
        alpha: model.alpha,
        q_alpha: model.q_alpha,
        n_calibration: model.n_calibration,
        labels: model.label_space.names().to_vec(),
        ordinal_values: model.label_space.ordinal_values().map(<[i64]>::to_vec),
        force_nonempty: model.force_nonempty,
        calibration_sha256: calibration_sha256.to_string(),
    };
    serde_json::to_writer_pretty(&mut writer, &stored)
        .map_err(|e| ConformalError::BadModelFile(e.to_string()))?;
    writer.write_all(b"\n")?;
    Ok(())
}

/// Parse a model file; returns the model and the recorded calibration hash.
pub fn read_model<R: Read>(reader: R) -> Result<(ConformalModel, String), ConformalError> {
    let stored: StoredModel = serde_json::from_reader(reader)
        .map_err(|e| ConformalError::BadModelFile(e.to_string()))?;
    let label_space = LabelSpace::new(stored.labels, stored.ordinal_values)
        .map_err(|e| ConformalError::BadModelFile(e.to_string()))?;
    let model = ConformalModel::from_parts(
        stored.alpha,
        stored.q_alpha,
        stored.n_calibration,
        label_space,
        stored.force_nonempty,
    )?;
    Ok((model, stored.calibration_sha256))
}

pub fn save_model(
    model: &ConformalModel,
    calibration_sha256: &str,
    path: impl AsRef<Path>,
) -> Result<(), ConformalError> {
    let mut bytes = Vec::new();
    write_model(model, calibration_sha256, &mut bytes)?;
    util::write_atomic(path.as_ref(), &bytes)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(ConformalModel, String), ConformalError> {
    read_model(std::fs::File::open(path)?)
}

// ---------------------------------------------------------------------------
// Prediction file
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct PredictionLine {
    id: String,
    set: Vec<String>,
}

/// JSON Lines with `id` and `set` (label names in ordinal order), for
/// downstream triage tooling.
pub fn write_predictions<W: Write>(
    sets: &[PredictionSet],
    space: &LabelSpace,
    mut writer: W,
) -> Result<(), ConformalError> {
    for set in sets {
        let line = PredictionLine {
            id: set.record_id.clone(),
            set: set.members.iter().map(|&i| space.name(i).to_string()).collect(),
        };
        serde_json::to_writer(&mut writer, &line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_predictions<R: Read>(
    reader: R,
    space: &LabelSpace,
) -> Result<Vec<PredictionSet>, ConformalError> {
    let mut sets = Vec::new();
    for line in std::io::BufReader::new(reader).lines() {
        let line = line?;
        let parsed: PredictionLine = serde_json::from_str(&line)
            .map_err(|e| ConformalError::BadModelFile(e.to_string()))?;
        let mut members = Vec::with_capacity(parsed.set.len());
        for name in &parsed.set {
            let index = space
                .index_of(name)
                .ok_or_else(|| ConformalError::UnknownSetLabel {
                    id: parsed.id.clone(),
                    label: name.clone(),
                })?;
            members.push(index);
        }
        sets.push(PredictionSet::new(parsed.id, members));
    }
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ProbRecord;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn space(k: usize) -> LabelSpace {
        LabelSpace::new((0..k).map(|i| format!("c{i}")).collect::<Vec<_>>(), None).unwrap()
    }

    /// One record per score, arranged so the true-label LAC score is `s`.
    fn set_from_scores(scores: &[f64]) -> RecordSet {
        let records = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| ProbRecord::new(format!("r{i}"), vec![1.0 - s, s], Some(0)).unwrap())
            .collect();
        RecordSet::new(space(2), records).unwrap()
    }

    fn model_with_q(k: usize, q: f64, force_nonempty: bool) -> ConformalModel {
        ConformalModel::from_parts(0.1, q, 1, space(k), force_nonempty).unwrap()
    }

    #[test]
    fn lac_score_examples() {
        assert_eq!(lac_score(&[1.0, 0.0, 0.0], 0).unwrap(), 0.0);
        assert_eq!(lac_score(&[0.2, 0.5, 0.3], 1).unwrap(), 0.5);
        let uniform = vec![1.0 / 11.0; 11];
        for y in 0..11 {
            let s = lac_score(&uniform, y).unwrap();
            assert!((s - (1.0 - 1.0 / 11.0)).abs() < 1e-12);
        }
        assert!(lac_score(&[1.0, 0.0], 2).is_err());
    }

    #[test]
    fn calibration_picks_the_rank_statistic() {
        // n=4, alpha=0.5: rank ceil(5*0.5)=3, third smallest of {.1,.2,.3,.4}.
        let set = set_from_scores(&[0.4, 0.1, 0.3, 0.2]);
        let model = calibrate(&set, 0.5, false).unwrap();
        assert_eq!(model.q_alpha(), 0.3);
        assert_eq!(model.n_calibration(), 4);
    }

    #[test]
    fn tiny_calibration_saturates_to_one() {
        let set = set_from_scores(&[0.25]);
        let model = calibrate(&set, 0.1, false).unwrap();
        assert_eq!(model.q_alpha(), 1.0);
    }

    #[test]
    fn rank_243_of_268() {
        let mut rng = SplitMix64::new(11);
        let scores: Vec<f64> = (0..268)
            .map(|_| (rng.next() >> 11) as f64 / (1u64 << 53) as f64)
            .collect();
        let set = set_from_scores(&scores);
        let model = calibrate(&set, 0.1, false).unwrap();
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(model.q_alpha().to_bits(), sorted[242].to_bits());
    }

    #[test]
    fn calibration_errors() {
        let empty = RecordSet::new(space(2), Vec::new()).unwrap();
        assert!(matches!(
            calibrate(&empty, 0.1, false),
            Err(ConformalError::EmptyCalibration)
        ));

        let unlabeled = RecordSet::new(
            space(2),
            vec![ProbRecord::new("mystery", vec![0.6, 0.4], None).unwrap()],
        )
        .unwrap();
        match calibrate(&unlabeled, 0.1, false) {
            Err(ConformalError::MissingTrueLabel(id)) => assert_eq!(id, "mystery"),
            other => panic!("unexpected: {other:?}"),
        }

        let set = set_from_scores(&[0.1, 0.2]);
        assert!(matches!(
            calibrate(&set, 0.0, false),
            Err(ConformalError::InvalidAlpha(_))
        ));
        assert!(matches!(
            calibrate(&set, 1.0, false),
            Err(ConformalError::InvalidAlpha(_))
        ));
    }

    #[test]
    fn saturated_threshold_admits_everything() {
        let model = model_with_q(3, 1.0, false);
        assert_eq!(
            model.admitted_labels(&[0.9, 0.05, 0.05]).unwrap(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn only_confident_labels_admitted() {
        let model = model_with_q(3, 0.35, false);
        assert_eq!(model.admitted_labels(&[0.7, 0.2, 0.1]).unwrap(), vec![0]);
    }

    #[test]
    fn forced_fallback_is_argmax() {
        let strict = model_with_q(3, 0.1, false);
        assert!(strict.admitted_labels(&[0.5, 0.3, 0.2]).unwrap().is_empty());
        let forced = model_with_q(3, 0.1, true);
        assert_eq!(forced.admitted_labels(&[0.5, 0.3, 0.2]).unwrap(), vec![0]);
    }

    #[test]
    fn batch_matches_one_at_a_time() {
        let set = set_from_scores(&[0.1, 0.5, 0.9, 0.3]);
        let model = calibrate(&set, 0.25, false).unwrap();
        let batch = model.predict_batch(&set).unwrap();
        assert_eq!(batch.len(), set.len());
        for (got, record) in batch.iter().zip(set.iter()) {
            assert_eq!(got, &model.predict_set(record).unwrap());
        }

        let empty = RecordSet::new(space(2), Vec::new()).unwrap();
        assert!(model.predict_batch(&empty).unwrap().is_empty());
    }

    #[test]
    fn batch_rejects_mismatched_label_space() {
        let set = set_from_scores(&[0.1]);
        let model = model_with_q(3, 0.5, false);
        assert!(matches!(
            model.predict_batch(&set),
            Err(ConformalError::LabelSpaceMismatch)
        ));
    }

    #[test]
    fn model_file_roundtrip() {
        let model = model_with_q(3, 0.42, true);
        let mut bytes = Vec::new();
        write_model(&model, "deadbeef", &mut bytes).unwrap();
        let (reloaded, hash) = read_model(bytes.as_slice()).unwrap();
        assert_eq!(reloaded, model);
        assert_eq!(hash, "deadbeef");
    }

    #[test]
    fn prediction_file_roundtrip() {
        let space = space(3);
        let sets = vec![
            PredictionSet::new("a", vec![0, 2]),
            PredictionSet::new("b", vec![]),
            PredictionSet::new("c", vec![1]),
        ];
        let mut bytes = Vec::new();
        write_predictions(&sets, &space, &mut bytes).unwrap();
        let reloaded = read_predictions(bytes.as_slice(), &space).unwrap();
        assert_eq!(reloaded, sets);
    }

    proptest! {
        /// Growing the threshold can only grow the set.
        #[test]
        fn sets_are_monotone_in_threshold(
            probs in proptest::collection::vec(0.0f64..1.0, 3),
            q1 in 0.0f64..=1.0,
            q2 in 0.0f64..=1.0,
        ) {
            let sum: f64 = probs.iter().sum();
            prop_assume!(sum > 0.0);
            let probs: Vec<f64> = probs.iter().map(|p| p / sum).collect();
            let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
            let small = model_with_q(3, lo, false).admitted_labels(&probs).unwrap();
            let large = model_with_q(3, hi, false).admitted_labels(&probs).unwrap();
            for y in &small {
                prop_assert!(large.contains(y));
            }
        }

        /// Lower risk means a higher threshold and therefore supersets.
        #[test]
        fn sets_are_nested_in_alpha(seed in any::<u64>()) {
            let mut rng = SplitMix64::new(seed);
            let scores: Vec<f64> = (0..40).map(|_| (rng.next() >> 11) as f64 / (1u64 << 53) as f64).collect();
            let cal = set_from_scores(&scores);
            let strict = calibrate(&cal, 0.05, false).unwrap();
            let loose = calibrate(&cal, 0.30, false).unwrap();
            prop_assert!(strict.q_alpha() >= loose.q_alpha());
        }

        /// Forcing nonempty sets only ever adds labels.
        #[test]
        fn force_nonempty_is_a_superset(
            probs in proptest::collection::vec(0.01f64..1.0, 4),
            q in 0.0f64..0.5,
        ) {
            let sum: f64 = probs.iter().sum();
            let probs: Vec<f64> = probs.iter().map(|p| p / sum).collect();
            let plain = model_with_q(4, q, false).admitted_labels(&probs).unwrap();
            let forced = model_with_q(4, q, true).admitted_labels(&probs).unwrap();
            for y in &plain {
                prop_assert!(forced.contains(y));
            }
            prop_assert!(!forced.is_empty());
        }
    }
}
