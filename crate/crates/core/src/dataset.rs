//! Probability-record files, manifests, and the seeded three-way split.
//!
//! Record files are UTF-8, LF-terminated JSON Lines. Every line carries an
//! `id` and a `probs` array with one probability per label; ground truth is
//! optional and comes as either a `label` name or a `raw_score` integer,
//! never both (raw scores additionally require a band map in the manifest):
//!
//! ```text
//! {"id":"e1","probs":[0.7,0.2,0.1],"label":"low"}
//! {"id":"e2","probs":[0.1,0.6,0.3],"raw_score":25}
//! {"id":"e3","probs":[0.2,0.3,0.5]}
//! ```
//!
//! The manifest is a JSON document declaring the label space and optionally
//! a band map:
//!
//! ```json
//! {"labels": ["low", "medium", "high"],
//!  "band_map": {"scale_min": 1, "cut_points": [18, 30, 40]}}
//! ```
//!
//! [`split`] partitions a record set into train/calibration/test parts. The
//! permutation is a pure function of `(seed, record count)` — see
//! [`crate::rng`] for the exact generator contract — and sizes follow a
//! floor-then-largest-remainder rule: train takes `floor(f_train · n)`, the
//! remainder goes to calibration and test as evenly as their fractions
//! allow, calibration winning the odd element.

use crate::label_space::{BandMap, LabelSpace, LabelSpaceError};
use crate::rng;
use crate::util;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::{BufRead, Read, Write};
use std::path::Path;
use thiserror::Error;

/// Probability vectors must sum to 1 within this tolerance; vectors inside
/// the tolerance are renormalised, vectors outside are rejected.
pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<DataError>,
    },
    #[error("line {line}: malformed record: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("record `{id}`: probs has {got} entries, expected {expected}")]
    WrongProbCount {
        id: String,
        got: usize,
        expected: usize,
    },
    #[error("record `{id}`: probability {value} outside [0, 1]")]
    ProbOutOfRange { id: String, value: f64 },
    #[error("record `{id}`: probs sum to {sum}, more than 1e-6 away from 1")]
    NotNormalised { id: String, sum: f64 },
    #[error("record `{id}`: true label {label} out of range for {k} labels")]
    TrueLabelOutOfRange { id: String, label: usize, k: usize },
    #[error("duplicate record id `{id}`")]
    DuplicateId { id: String },
    #[error("record `{id}`: unknown label `{label}`")]
    UnknownLabel { id: String, label: String },
    #[error("record `{id}`: has both `label` and `raw_score`")]
    LabelAndRawScore { id: String },
    #[error("record `{id}`: carries `raw_score` but the manifest declares no band map")]
    RawScoreWithoutBandMap { id: String },
    #[error("record `{id}`: {source}")]
    BadRawScore {
        id: String,
        #[source]
        source: LabelSpaceError,
    },
    #[error("invalid manifest: {0}")]
    BadManifest(String),
    #[error(transparent)]
    LabelSpace(#[from] LabelSpaceError),
    #[error("split fractions must be positive and sum to 1, got ({0}, {1}, {2})")]
    BadFractions(f64, f64, f64),
    #[error("cannot split {n} records so that every part keeps at least one")]
    TooFewRecords { n: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One example: an identifier, a probability per label, and optionally the
/// true label index. Construction validates and renormalises the vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbRecord {
    id: String,
    probs: Vec<f64>,
    true_label: Option<usize>,
}

impl ProbRecord {
    pub fn new(
        id: impl Into<String>,
        mut probs: Vec<f64>,
        true_label: Option<usize>,
    ) -> Result<Self, DataError> {
        let id = id.into();
        for &p in &probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(DataError::ProbOutOfRange { id, value: p });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(DataError::NotNormalised { id, sum });
        }
        if sum != 1.0 {
            for p in &mut probs {
                *p /= sum;
            }
        }
        if let Some(label) = true_label {
            if label >= probs.len() {
                return Err(DataError::TrueLabelOutOfRange {
                    id,
                    label,
                    k: probs.len(),
                });
            }
        }
        Ok(Self {
            id,
            probs,
            true_label,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn true_label(&self) -> Option<usize> {
        self.true_label
    }
}

/// An ordered collection of records sharing one label space, with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSet {
    label_space: LabelSpace,
    records: Vec<ProbRecord>,
}

impl RecordSet {
    pub fn new(label_space: LabelSpace, records: Vec<ProbRecord>) -> Result<Self, DataError> {
        let k = label_space.len();
        let mut seen = HashSet::with_capacity(records.len());
        for record in &records {
            if record.probs.len() != k {
                return Err(DataError::WrongProbCount {
                    id: record.id.clone(),
                    got: record.probs.len(),
                    expected: k,
                });
            }
            if !seen.insert(record.id.as_str()) {
                return Err(DataError::DuplicateId {
                    id: record.id.clone(),
                });
            }
        }
        Ok(Self {
            label_space,
            records,
        })
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    pub fn records(&self) -> &[ProbRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ProbRecord> {
        self.records.iter()
    }
}

/// Train/calibration/test proportions plus the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub fractions: (f64, f64, f64),
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(fractions: (f64, f64, f64), seed: u64) -> Result<Self, DataError> {
        let spec = Self { fractions, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let (a, b, c) = self.fractions;
        let positive = a > 0.0 && b > 0.0 && c > 0.0;
        if !positive || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(DataError::BadFractions(a, b, c));
        }
        Ok(())
    }
}

/// Summary written alongside the three split files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub seed: u64,
    pub fractions: (f64, f64, f64),
    pub n_total: usize,
    pub n_train: usize,
    pub n_calibration: usize,
    pub n_test: usize,
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordinal_values: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_map: Option<ManifestBandMap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestBandMap {
    #[serde(default = "default_scale_min")]
    pub scale_min: i64,
    pub cut_points: Vec<i64>,
}

fn default_scale_min() -> i64 {
    1
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let manifest: Manifest =
            serde_json::from_str(text).map_err(|e| DataError::BadManifest(e.to_string()))?;
        // Surface label-space and band-map problems at load time.
        manifest.band_map()?;
        Ok(manifest)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        text
    }

    pub fn label_space(&self) -> Result<LabelSpace, DataError> {
        Ok(LabelSpace::new(
            self.labels.clone(),
            self.ordinal_values.clone(),
        )?)
    }

    pub fn band_map(&self) -> Result<Option<BandMap>, DataError> {
        let space = self.label_space()?;
        match &self.band_map {
            Some(bm) => Ok(Some(BandMap::new(
                bm.scale_min,
                bm.cut_points.clone(),
                space,
            )?)),
            None => Ok(None),
        }
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest, DataError> {
    let text = std::fs::read_to_string(path)?;
    Manifest::from_json(&text)
}

// ---------------------------------------------------------------------------
// Record file I/O
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: String,
    probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    raw_score: Option<i64>,
}

fn at_line(line: usize, err: DataError) -> DataError {
    DataError::AtLine {
        line,
        source: Box::new(err),
    }
}

/// Parse records from a reader against a known label space and optional
/// band map. Line numbers are 1-based in errors.
pub fn read_records<R: Read>(
    reader: R,
    label_space: &LabelSpace,
    band_map: Option<&BandMap>,
) -> Result<RecordSet, DataError> {
    let k = label_space.len();
    let mut records = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (number, line) in std::io::BufReader::new(reader).lines().enumerate() {
        let number = number + 1;
        let line = line?;
        let parsed: RecordLine =
            serde_json::from_str(&line).map_err(|e| DataError::MalformedLine {
                line: number,
                message: e.to_string(),
            })?;
        let id = parsed.id.clone();
        if parsed.probs.len() != k {
            return Err(at_line(
                number,
                DataError::WrongProbCount {
                    id,
                    got: parsed.probs.len(),
                    expected: k,
                },
            ));
        }
        let true_label = match (parsed.label, parsed.raw_score) {
            (Some(_), Some(_)) => {
                return Err(at_line(number, DataError::LabelAndRawScore { id }));
            }
            (Some(name), None) => match label_space.index_of(&name) {
                Some(index) => Some(index),
                None => {
                    return Err(at_line(number, DataError::UnknownLabel { id, label: name }));
                }
            },
            (None, Some(raw)) => {
                let map = band_map
                    .ok_or_else(|| DataError::RawScoreWithoutBandMap { id: id.clone() })
                    .map_err(|e| at_line(number, e))?;
                let band = map
                    .map_raw_score(raw)
                    .map_err(|source| at_line(number, DataError::BadRawScore { id: id.clone(), source }))?;
                Some(band)
            }
            (None, None) => None,
        };
        if !seen.insert(parsed.id.clone()) {
            return Err(at_line(number, DataError::DuplicateId { id: parsed.id }));
        }
        let record =
            ProbRecord::new(parsed.id, parsed.probs, true_label).map_err(|e| at_line(number, e))?;
        records.push(record);
    }
    RecordSet::new(label_space.clone(), records)
}

/// Load a record file against its manifest. Raw integer scores are
/// band-mapped when the manifest declares a band map.
pub fn load_records(
    path: impl AsRef<Path>,
    manifest_path: impl AsRef<Path>,
) -> Result<RecordSet, DataError> {
    let manifest = load_manifest(manifest_path)?;
    let label_space = manifest.label_space()?;
    let band_map = manifest.band_map()?;
    let file = std::fs::File::open(path)?;
    read_records(file, &label_space, band_map.as_ref())
}

/// Serialize records as JSON Lines. True labels are written as label names;
/// raw scores never round-trip (banding is one-way).
pub fn write_records_to<W: Write>(set: &RecordSet, mut writer: W) -> Result<(), DataError> {
    for record in set.iter() {
        let line = RecordLine {
            id: record.id().to_string(),
            probs: record.probs().to_vec(),
            label: record
                .true_label()
                .map(|idx| set.label_space().name(idx).to_string()),
            raw_score: None,
        };
        serde_json::to_writer(&mut writer, &line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Write a record file atomically.
pub fn write_records(set: &RecordSet, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut bytes = Vec::new();
    write_records_to(set, &mut bytes)?;
    util::write_atomic(path.as_ref(), &bytes)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Split
// ---------------------------------------------------------------------------

/// Floor that shrugs off the few-ulp error of `fraction * n` products
/// (0.70 * 12100 lands just below 8470 in binary floating point).
fn stable_floor(x: f64) -> usize {
    (x + x * 1e-12 + 1e-12).floor() as usize
}

/// Part sizes for `n` records: train gets `floor(a·n)`, the rest is split
/// between calibration and test by largest remainder, calibration first.
fn split_sizes(n: usize, fractions: (f64, f64, f64)) -> Result<(usize, usize, usize), DataError> {
    let (a, b, c) = fractions;
    let n_train = stable_floor(a * n as f64).min(n);
    let rest = n - n_train;
    // Rounding cal half-up implements the largest-remainder rule for two
    // parts whose remainders sum to a whole, with ties going to calibration.
    let n_cal = stable_floor(rest as f64 * (b / (b + c)) + 0.5).min(rest);
    let n_test = rest - n_cal;
    if n_train == 0 || n_cal == 0 || n_test == 0 {
        return Err(DataError::TooFewRecords { n });
    }
    Ok((n_train, n_cal, n_test))
}

/// Deterministically shuffle and partition records into
/// (train, calibration, test). The same `(records, seed)` input produces
/// byte-identical partitions on every platform.
pub fn split(
    records: &RecordSet,
    spec: &SplitSpec,
) -> Result<(RecordSet, RecordSet, RecordSet), DataError> {
    spec.validate()?;
    let n = records.len();
    let (n_train, n_cal, _) = split_sizes(n, spec.fractions)?;
    let order = rng::shuffled_indices(n, spec.seed);
    let part = |range: std::ops::Range<usize>| -> Result<RecordSet, DataError> {
        let picked = order[range]
            .iter()
            .map(|&i| records.records()[i].clone())
            .collect();
        RecordSet::new(records.label_space().clone(), picked)
    };
    Ok((
        part(0..n_train)?,
        part(n_train..n_train + n_cal)?,
        part(n_train + n_cal..n)?,
    ))
}
