//! Ordered label spaces and raw-score banding.
//!
//! A [`LabelSpace`] fixes the K possible labels of a task in ordinal order;
//! indices `0..K-1` are the canonical representation everywhere else in the
//! crate, display names only appear at I/O boundaries. A [`BandMap`] folds a
//! raw integer scale (say holistic scores 1–40) onto a label space through
//! inclusive upper bounds, so rubrics of different granularity can share one
//! evaluation path.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LabelSpaceError {
    #[error("label space needs at least 2 labels, got {0}")]
    TooFewLabels(usize),
    #[error("duplicate label name `{0}`")]
    DuplicateName(String),
    #[error("ordinal_values has {got} entries for {expected} labels")]
    OrdinalLengthMismatch { got: usize, expected: usize },
    #[error("ordinal_values must be strictly increasing")]
    OrdinalNotIncreasing,
    #[error("band map has {got} cut points for {expected} labels")]
    CutPointCountMismatch { got: usize, expected: usize },
    #[error("cut points must be strictly increasing and at least scale_min ({scale_min})")]
    BadCutPoints { scale_min: i64 },
    #[error("raw score {raw} outside the declared scale {min}..={max}")]
    RawScoreOutOfRange { raw: i64, min: i64, max: i64 },
}

/// An ordered set of K labels. Index order is the ordinal order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    names: Vec<String>,
    ordinal_values: Option<Vec<i64>>,
}

impl LabelSpace {
    /// Validates and builds a label space. `ordinal_values`, when given,
    /// attaches the underlying rubric values (e.g. `2..=12`) to the labels
    /// and must be strictly increasing with one entry per name.
    pub fn new<S: Into<String>>(
        names: Vec<S>,
        ordinal_values: Option<Vec<i64>>,
    ) -> Result<Self, LabelSpaceError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(LabelSpaceError::TooFewLabels(names.len()));
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(LabelSpaceError::DuplicateName(name.clone()));
            }
        }
        if let Some(values) = &ordinal_values {
            if values.len() != names.len() {
                return Err(LabelSpaceError::OrdinalLengthMismatch {
                    got: values.len(),
                    expected: names.len(),
                });
            }
            if values.windows(2).any(|w| w[0] >= w[1]) {
                return Err(LabelSpaceError::OrdinalNotIncreasing);
            }
        }
        Ok(Self {
            names,
            ordinal_values,
        })
    }

    /// Number of labels (K).
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn ordinal_values(&self) -> Option<&[i64]> {
        self.ordinal_values.as_deref()
    }
}

/// Maps raw integer scores onto a label space via inclusive upper bounds:
/// band `b` covers `cut_points[b-1] + 1 ..= cut_points[b]` (the first band
/// starts at `scale_min`). The last cut point is the scale maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandMap {
    scale_min: i64,
    cut_points: Vec<i64>,
    target: LabelSpace,
}

impl BandMap {
    pub fn new(
        scale_min: i64,
        cut_points: Vec<i64>,
        target: LabelSpace,
    ) -> Result<Self, LabelSpaceError> {
        if cut_points.len() != target.len() {
            return Err(LabelSpaceError::CutPointCountMismatch {
                got: cut_points.len(),
                expected: target.len(),
            });
        }
        let increasing = cut_points.windows(2).all(|w| w[0] < w[1]);
        if !increasing || cut_points[0] < scale_min {
            return Err(LabelSpaceError::BadCutPoints { scale_min });
        }
        Ok(Self {
            scale_min,
            cut_points,
            target,
        })
    }

    /// Index of the first band whose cut point is at least `raw`.
    pub fn map_raw_score(&self, raw: i64) -> Result<usize, LabelSpaceError> {
        if raw < self.scale_min || raw > self.scale_max() {
            return Err(LabelSpaceError::RawScoreOutOfRange {
                raw,
                min: self.scale_min,
                max: self.scale_max(),
            });
        }
        Ok(self.cut_points.partition_point(|&cut| cut < raw))
    }

    pub fn scale_min(&self) -> i64 {
        self.scale_min
    }

    pub fn scale_max(&self) -> i64 {
        *self.cut_points.last().expect("band map is never empty")
    }

    pub fn cut_points(&self) -> &[i64] {
        &self.cut_points
    }

    pub fn target(&self) -> &LabelSpace {
        &self.target
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_bands() -> LabelSpace {
        LabelSpace::new(vec!["low", "medium", "high"], None).unwrap()
    }

    /// 1–40 holistic scale banded as 1–18 / 19–30 / 31–40.
    fn forty_point_map() -> BandMap {
        BandMap::new(1, vec![18, 30, 40], three_bands()).unwrap()
    }

    #[test]
    fn three_named_labels() {
        let space = three_bands();
        assert_eq!(space.len(), 3);
        assert_eq!(space.index_of("medium"), Some(1));
        assert_eq!(space.index_of("unknown"), None);
    }

    #[test]
    fn eleven_point_rubric() {
        let names: Vec<String> = (2..=12).map(|v| format!("s{v}")).collect();
        let values: Vec<i64> = (2..=12).collect();
        let space = LabelSpace::new(names, Some(values)).unwrap();
        assert_eq!(space.len(), 11);
        assert_eq!(space.ordinal_values().unwrap()[0], 2);
    }

    #[test]
    fn degenerate_space_rejected() {
        assert_eq!(
            LabelSpace::new(vec!["a"], None),
            Err(LabelSpaceError::TooFewLabels(1))
        );
    }

    #[test]
    fn duplicate_names_rejected() {
        assert_eq!(
            LabelSpace::new(vec!["a", "b", "a"], None),
            Err(LabelSpaceError::DuplicateName("a".into()))
        );
    }

    #[test]
    fn ordinal_validation() {
        assert!(matches!(
            LabelSpace::new(vec!["a", "b"], Some(vec![1])),
            Err(LabelSpaceError::OrdinalLengthMismatch { got: 1, expected: 2 })
        ));
        assert_eq!(
            LabelSpace::new(vec!["a", "b"], Some(vec![5, 5])),
            Err(LabelSpaceError::OrdinalNotIncreasing)
        );
    }

    #[test]
    fn band_boundaries() {
        let map = forty_point_map();
        assert_eq!(map.map_raw_score(18).unwrap(), 0);
        assert_eq!(map.map_raw_score(19).unwrap(), 1);
        assert_eq!(map.map_raw_score(30).unwrap(), 1);
        assert_eq!(map.map_raw_score(31).unwrap(), 2);
        assert!(matches!(
            map.map_raw_score(41),
            Err(LabelSpaceError::RawScoreOutOfRange { raw: 41, .. })
        ));
        assert!(map.map_raw_score(0).is_err());
    }

    #[test]
    fn banding_is_monotone_and_total() {
        let map = forty_point_map();
        let mut previous = 0;
        for raw in 1..=40 {
            let band = map.map_raw_score(raw).unwrap();
            assert!(band >= previous, "band dropped at raw={raw}");
            previous = band;
        }
    }

    #[test]
    fn every_band_interval_maps_to_its_band() {
        let map = forty_point_map();
        let intervals = [(1, 18, 0), (19, 30, 1), (31, 40, 2)];
        for (lo, hi, band) in intervals {
            for raw in lo..=hi {
                assert_eq!(map.map_raw_score(raw).unwrap(), band);
            }
        }
    }

    #[test]
    fn band_map_validation() {
        let space = three_bands();
        assert!(matches!(
            BandMap::new(1, vec![18, 30], space.clone()),
            Err(LabelSpaceError::CutPointCountMismatch { .. })
        ));
        assert!(matches!(
            BandMap::new(1, vec![18, 18, 40], space.clone()),
            Err(LabelSpaceError::BadCutPoints { .. })
        ));
        assert!(matches!(
            BandMap::new(20, vec![18, 30, 40], space),
            Err(LabelSpaceError::BadCutPoints { .. })
        ));
    }
}
