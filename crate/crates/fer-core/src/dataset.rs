//! Samples, datasets, and pair views.
//!
//! Class indices follow one fixed order everywhere — confusion matrices,
//! report tables, and file labels all use it:
//! `0 Neutral, 1 Happy, 2 Sad, 3 Surprise, 4 Fear, 5 Disgust, 6 Anger, 7 Contempt`.

use crate::error::{Error, Result};
use crate::seed;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

/// Number of expression classes.
pub const NUM_CLASSES: usize = 8;

/// Canonical class names, indexed by class id.
pub const CLASS_NAMES: [&str; NUM_CLASSES] =
    ["Neutral", "Happy", "Sad", "Surprise", "Fear", "Disgust", "Anger", "Contempt"];

/// Look up a class index by its (case-insensitive) name.
pub fn class_index(name: &str) -> Option<usize> {
    CLASS_NAMES.iter().position(|c| c.eq_ignore_ascii_case(name))
}

/// One sample: a frozen-backbone embedding plus its four annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub id: String,
    pub features: Vec<f64>,
    /// Class index in `0..NUM_CLASSES`.
    pub expression: usize,
    /// In `[-1, 1]`.
    pub valence: f64,
    /// In `[-1, 1]`.
    pub arousal: f64,
    /// Flattened (x, y) coordinates, length `2L`; `None` when the dataset
    /// carries no landmark annotations.
    pub landmarks: Option<Vec<f64>>,
}

impl FeatureRecord {
    /// Validate bounds and finiteness. `row` feeds error messages.
    pub(crate) fn validate(&self, row: Option<usize>) -> Result<()> {
        let err = |msg: String| match row {
            Some(r) => Error::data_at(r, msg),
            None => Error::data(msg),
        };
        if self.expression >= NUM_CLASSES {
            return Err(err(format!(
                "expression label {} outside 0..{NUM_CLASSES}",
                self.expression
            )));
        }
        if !(-1.0..=1.0).contains(&self.valence) || !self.valence.is_finite() {
            return Err(err(format!("valence {} outside [-1, 1]", self.valence)));
        }
        if !(-1.0..=1.0).contains(&self.arousal) || !self.arousal.is_finite() {
            return Err(err(format!("arousal {} outside [-1, 1]", self.arousal)));
        }
        if let Some(bad) = self.features.iter().find(|v| !v.is_finite()) {
            return Err(err(format!("non-finite feature value {bad}")));
        }
        if let Some(lm) = &self.landmarks {
            if let Some(bad) = lm.iter().find(|v| !v.is_finite()) {
                return Err(err(format!("non-finite landmark value {bad}")));
            }
        }
        Ok(())
    }
}

/// Canonical unordered class pair, `lo < hi`. Exactly 28 keys over 8 classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairKey {
    lo: usize,
    hi: usize,
}

impl PairKey {
    /// Build a key from two distinct class indices, canonicalizing the order.
    pub fn new(a: usize, b: usize) -> Result<Self> {
        if a >= NUM_CLASSES || b >= NUM_CLASSES {
            return Err(Error::config(format!("class index out of range in pair ({a}, {b})")));
        }
        if a == b {
            return Err(Error::config(format!("pair requires two distinct classes, got ({a}, {a})")));
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        Ok(PairKey { lo, hi })
    }

    pub fn lo(&self) -> usize {
        self.lo
    }

    pub fn hi(&self) -> usize {
        self.hi
    }

    pub fn contains(&self, class: usize) -> bool {
        class == self.lo || class == self.hi
    }

    /// All 28 pairs in lexicographic order.
    pub fn all() -> Vec<PairKey> {
        let mut out = Vec::with_capacity(28);
        for lo in 0..NUM_CLASSES {
            for hi in (lo + 1)..NUM_CLASSES {
                out.push(PairKey { lo, hi });
            }
        }
        out
    }

    /// `Fear+Contempt` style display name.
    pub fn name(&self) -> String {
        format!("{}+{}", CLASS_NAMES[self.lo], CLASS_NAMES[self.hi])
    }

    /// Parse `fear-contempt` / `Fear+Contempt` / `4-7` forms.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(['-', '+', ',']).collect();
        if parts.len() != 2 {
            return Err(Error::config(format!("cannot parse pair {s:?}: expected two classes")));
        }
        let resolve = |p: &str| -> Result<usize> {
            if let Some(idx) = class_index(p.trim()) {
                return Ok(idx);
            }
            p.trim()
                .parse::<usize>()
                .ok()
                .filter(|&i| i < NUM_CLASSES)
                .ok_or_else(|| Error::config(format!("unknown class {p:?} in pair {s:?}")))
        };
        PairKey::new(resolve(parts[0])?, resolve(parts[1])?)
    }
}

/// Ordered collection of records with cached class counts and fixed dims.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<FeatureRecord>,
    feature_dim: usize,
    /// `2L`; zero when records carry no landmarks.
    landmark_dim: usize,
    class_counts: [usize; NUM_CLASSES],
}

impl Dataset {
    /// Build a dataset, validating every record against `feature_dim` and a
    /// uniform `landmark_dim` (0 means no record may carry landmarks).
    pub fn new(records: Vec<FeatureRecord>, feature_dim: usize, landmark_dim: usize) -> Result<Self> {
        let mut class_counts = [0usize; NUM_CLASSES];
        for (i, rec) in records.iter().enumerate() {
            rec.validate(Some(i + 1))?;
            if rec.features.len() != feature_dim {
                return Err(Error::data_at(
                    i + 1,
                    format!("feature dimension {} != dataset dimension {feature_dim}", rec.features.len()),
                ));
            }
            let lm_len = rec.landmarks.as_ref().map_or(0, Vec::len);
            if lm_len != landmark_dim {
                return Err(Error::data_at(
                    i + 1,
                    format!("landmark length {lm_len} != dataset landmark length {landmark_dim}"),
                ));
            }
            class_counts[rec.expression] += 1;
        }
        Ok(Dataset { records, feature_dim, landmark_dim, class_counts })
    }

    /// Build from records, inferring dimensions from the first one.
    pub fn from_records(records: Vec<FeatureRecord>) -> Result<Self> {
        let first = records.first().ok_or_else(|| Error::data("no records"))?;
        let feature_dim = first.features.len();
        let landmark_dim = first.landmarks.as_ref().map_or(0, Vec::len);
        Dataset::new(records, feature_dim, landmark_dim)
    }

    pub fn records(&self) -> &[FeatureRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn landmark_dim(&self) -> usize {
        self.landmark_dim
    }

    pub fn has_landmarks(&self) -> bool {
        self.landmark_dim > 0
    }

    pub fn class_counts(&self) -> &[usize; NUM_CLASSES] {
        &self.class_counts
    }

    /// Class proportions; they sum to 1 within 1e-12.
    pub fn class_distribution(&self) -> Result<[f64; NUM_CLASSES]> {
        if self.is_empty() {
            return Err(Error::data("class distribution of an empty dataset"));
        }
        let n = self.len() as f64;
        let mut out = [0.0; NUM_CLASSES];
        for (p, &c) in out.iter_mut().zip(&self.class_counts) {
            *p = c as f64 / n;
        }
        Ok(out)
    }

    /// Restriction to the records whose expression is in the pair.
    /// Original labels are retained; may be empty.
    pub fn pair_view(&self, key: PairKey) -> Dataset {
        let records: Vec<FeatureRecord> =
            self.records.iter().filter(|r| key.contains(r.expression)).cloned().collect();
        let mut class_counts = [0usize; NUM_CLASSES];
        for rec in &records {
            class_counts[rec.expression] += 1;
        }
        Dataset { records, feature_dim: self.feature_dim, landmark_dim: self.landmark_dim, class_counts }
    }

    /// Stratified train/validation split: each class is split independently
    /// at `train_fraction`, rounding the train share down. Deterministic
    /// given `seed`; record order within each side follows the input order.
    pub fn split(&self, train_fraction: f64, split_seed: u64) -> Result<(Dataset, Dataset)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::config(format!("train fraction {train_fraction} outside (0, 1)")));
        }
        if self.is_empty() {
            return Err(Error::data("cannot split an empty dataset"));
        }
        let mut in_train = vec![false; self.len()];
        for class in 0..NUM_CLASSES {
            let mut idx: Vec<usize> = (0..self.len())
                .filter(|&i| self.records[i].expression == class)
                .collect();
            let take = (train_fraction * idx.len() as f64).floor() as usize;
            idx.shuffle(&mut seed::rng(seed::mix(split_seed, class as u64)));
            for &i in idx.iter().take(take) {
                in_train[i] = true;
            }
        }
        let (mut train, mut val) = (Vec::new(), Vec::new());
        for (i, rec) in self.records.iter().enumerate() {
            if in_train[i] {
                train.push(rec.clone());
            } else {
                val.push(rec.clone());
            }
        }
        Ok((
            Dataset { records: train, feature_dim: self.feature_dim, landmark_dim: self.landmark_dim, class_counts: count_classes_slice(&in_train, &self.records, true) },
            Dataset { records: val, feature_dim: self.feature_dim, landmark_dim: self.landmark_dim, class_counts: count_classes_slice(&in_train, &self.records, false) },
        ))
    }
}

fn count_classes_slice(mask: &[bool], records: &[FeatureRecord], keep: bool) -> [usize; NUM_CLASSES] {
    let mut counts = [0usize; NUM_CLASSES];
    for (m, rec) in mask.iter().zip(records) {
        if *m == keep {
            counts[rec.expression] += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(class: usize, features: Vec<f64>) -> FeatureRecord {
        FeatureRecord {
            id: format!("r{class}"),
            features,
            expression: class,
            valence: 0.0,
            arousal: 0.0,
            landmarks: None,
        }
    }

    fn uniform_dataset(per_class: usize, dim: usize) -> Dataset {
        let mut records = Vec::new();
        for c in 0..NUM_CLASSES {
            for _ in 0..per_class {
                records.push(rec(c, vec![c as f64; dim]));
            }
        }
        Dataset::from_records(records).unwrap()
    }

    #[test]
    fn counts_track_records() {
        let d = Dataset::from_records(vec![rec(1, vec![0.0; 4]), rec(1, vec![1.0; 4])]).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.class_counts(), &[0, 2, 0, 0, 0, 0, 0, 0]);
        assert_eq!(d.feature_dim(), 4);
    }

    #[test]
    fn affectnet_happy_proportion() {
        // Full AffectNet training counts; building 287k records is pointless,
        // so check the proportion arithmetic at the real scale directly and
        // the Dataset mechanics on a 1/250 replica.
        let counts = [74874usize, 134415, 25459, 14090, 6378, 3803, 24882, 3750];
        let total: usize = counts.iter().sum();
        assert_eq!(total, 287651);
        assert!((counts[1] as f64 / total as f64 - 0.4672).abs() < 0.005);

        let mut records = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            for _ in 0..n.div_ceil(250) {
                records.push(rec(c, vec![0.0]));
            }
        }
        let d = Dataset::from_records(records).unwrap();
        let dist = d.class_distribution().unwrap();
        assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((dist[1] - 0.4672).abs() < 0.01);
    }

    #[test]
    fn single_class_distribution_is_degenerate() {
        let d = Dataset::from_records(vec![rec(0, vec![1.0])]).unwrap();
        assert_eq!(d.class_distribution().unwrap(), [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn equal_counts_give_one_eighth() {
        let d = uniform_dataset(500, 2);
        for p in d.class_distribution().unwrap() {
            assert!((p - 0.125).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_distribution_errors() {
        let d = Dataset::new(vec![], 3, 0).unwrap();
        assert!(d.class_distribution().is_err());
    }

    #[test]
    fn pair_view_restricts_and_is_idempotent() {
        let d = uniform_dataset(3, 2);
        let key = PairKey::new(4, 7).unwrap();
        let view = d.pair_view(key);
        assert_eq!(view.len(), 6);
        for (c, &n) in view.class_counts().iter().enumerate() {
            assert_eq!(n, if key.contains(c) { 3 } else { 0 });
        }
        assert_eq!(view.pair_view(key), view);
    }

    #[test]
    fn pair_view_of_absent_classes_is_empty() {
        let d = Dataset::from_records(vec![rec(0, vec![1.0]), rec(1, vec![2.0])]).unwrap();
        let view = d.pair_view(PairKey::new(4, 7).unwrap());
        assert!(view.is_empty());
        assert_eq!(view.feature_dim(), 1);
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let mut records = Vec::new();
        for i in 0..100 {
            let mut r = rec(2, vec![i as f64]);
            r.id = format!("s{i}");
            records.push(r);
        }
        let d = Dataset::from_records(records).unwrap();
        let (train, val) = d.split(0.8, 9).unwrap();
        assert_eq!((train.len(), val.len()), (80, 20));
    }

    #[test]
    fn singleton_class_lands_in_validation() {
        let d = Dataset::from_records(vec![rec(3, vec![0.5])]).unwrap();
        let (train, val) = d.split(0.8, 1).unwrap();
        assert_eq!(train.len(), 0);
        assert_eq!(val.len(), 1);
    }

    #[test]
    fn split_preserves_multiset_and_stratifies() {
        let d = uniform_dataset(10, 3);
        let (train, val) = d.split(0.7, 42).unwrap();
        assert_eq!(train.len() + val.len(), d.len());
        for c in 0..NUM_CLASSES {
            assert_eq!(train.class_counts()[c], 7);
            assert_eq!(val.class_counts()[c], 3);
        }
        // Union as multisets of ids.
        let mut ids: Vec<&str> = train.records().iter().chain(val.records()).map(|r| r.id.as_str()).collect();
        let mut orig: Vec<&str> = d.records().iter().map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        orig.sort_unstable();
        assert_eq!(ids, orig);
    }

    #[test]
    fn split_is_deterministic() {
        let d = uniform_dataset(10, 3);
        assert_eq!(d.split(0.7, 42).unwrap(), d.split(0.7, 42).unwrap());
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let d = uniform_dataset(2, 1);
        assert!(d.split(0.0, 1).is_err());
        assert!(d.split(1.0, 1).is_err());
    }

    #[test]
    fn pair_key_is_canonical() {
        let k = PairKey::new(7, 4).unwrap();
        assert_eq!((k.lo(), k.hi()), (4, 7));
        assert_eq!(k.name(), "Fear+Contempt");
        assert!(PairKey::new(3, 3).is_err());
        assert!(PairKey::new(0, 8).is_err());
        assert_eq!(PairKey::all().len(), 28);
    }

    #[test]
    fn pair_key_parses_names_and_indices() {
        assert_eq!(PairKey::parse("fear-contempt").unwrap(), PairKey::new(4, 7).unwrap());
        assert_eq!(PairKey::parse("Happy+Sad").unwrap(), PairKey::new(1, 2).unwrap());
        assert_eq!(PairKey::parse("7-4").unwrap(), PairKey::new(4, 7).unwrap());
        assert!(PairKey::parse("happy").is_err());
        assert!(PairKey::parse("happy-joy").is_err());
    }

    #[test]
    fn record_bounds_are_enforced() {
        let mut r = rec(0, vec![0.0]);
        r.valence = 1.5;
        assert!(Dataset::from_records(vec![r]).is_err());
        let mut r = rec(0, vec![0.0]);
        r.features = vec![f64::NAN];
        assert!(Dataset::from_records(vec![r]).is_err());
    }
}
