//! Synthetic Gaussian-mixture datasets that stand in for precomputed
//! embeddings, with class skews mirroring the real training distribution.

use crate::dataset::{CLASS_NAMES, Dataset, FeatureRecord, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::seed;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// AffectNet training-set class counts (Neutral..Contempt order).
pub const AFFECTNET_TRAIN_COUNTS: [usize; NUM_CLASSES] =
    [74874, 134415, 25459, 14090, 6378, 3803, 24882, 3750];

/// Balanced working test-set counts (Contempt has one fewer).
pub const BALANCED_TEST_COUNTS: [usize; NUM_CLASSES] = [500, 500, 500, 500, 500, 500, 500, 499];

/// Skewed test-set counts.
pub const SKEWED_TEST_COUNTS: [usize; NUM_CLASSES] = [278, 500, 94, 52, 23, 14, 92, 13];

/// Fixed per-class (valence, arousal) anchors for synthetic annotation.
/// Chosen on the usual positivity/excitation circumplex; echoed into run
/// manifests so every synthetic dataset is self-describing.
pub const VA_ANCHORS: [(f64, f64); NUM_CLASSES] = [
    (0.0, 0.0),   // Neutral
    (0.8, 0.5),   // Happy
    (-0.7, -0.3), // Sad
    (0.2, 0.8),   // Surprise
    (-0.6, 0.7),  // Fear
    (-0.7, 0.2),  // Disgust
    (-0.6, 0.6),  // Anger
    (-0.4, 0.1),  // Contempt
];

/// Gaussian noise applied to the anchors before clamping to [-1, 1].
pub const VA_NOISE_STDDEV: f64 = 0.1;

/// Generation parameters for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSynthSpec {
    /// Class index in `0..NUM_CLASSES`.
    pub class: usize,
    /// Number of samples; must be positive (omit the class instead).
    pub count: usize,
    /// Cluster mean, length `feature_dim`.
    pub mean: Vec<f64>,
    /// Isotropic standard deviation; must be positive.
    pub stddev: f64,
}

/// Full synthesis configuration. Classes not listed produce no records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub feature_dim: usize,
    pub seed: u64,
    pub classes: Vec<ClassSynthSpec>,
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(Error::config("feature_dim must be positive"));
        }
        if self.classes.is_empty() {
            return Err(Error::config("at least one class must be specified"));
        }
        let mut seen = [false; NUM_CLASSES];
        for spec in &self.classes {
            if spec.class >= NUM_CLASSES {
                return Err(Error::config(format!("class index {} out of range", spec.class)));
            }
            if seen[spec.class] {
                return Err(Error::config(format!("duplicate class {} in synthesis config", spec.class)));
            }
            seen[spec.class] = true;
            if spec.count == 0 {
                return Err(Error::config(format!("count for class {} must be positive", spec.class)));
            }
            if !(spec.stddev > 0.0) {
                return Err(Error::config(format!("stddev for class {} must be positive", spec.class)));
            }
            if spec.mean.len() != self.feature_dim {
                return Err(Error::config(format!(
                    "mean for class {} has length {}, expected {}",
                    spec.class,
                    spec.mean.len(),
                    self.feature_dim
                )));
            }
            if spec.mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::config(format!("non-finite mean entry for class {}", spec.class)));
            }
        }
        Ok(())
    }
}

/// Draw the configured Gaussian clusters. Classes are generated in ascending
/// class order from independent per-class streams, so the result depends
/// only on (config, seed), not on the listing order.
pub fn synthesize_dataset(config: &SynthesisConfig) -> Result<Dataset> {
    config.validate()?;
    let mut specs: Vec<&ClassSynthSpec> = config.classes.iter().collect();
    specs.sort_by_key(|s| s.class);
    let mut records = Vec::new();
    for spec in specs {
        let mut rng = seed::rng(seed::mix(config.seed, spec.class as u64));
        let feat = Normal::new(0.0, spec.stddev).expect("stddev validated positive");
        let va = Normal::new(0.0, VA_NOISE_STDDEV).expect("constant stddev");
        let (anchor_v, anchor_a) = VA_ANCHORS[spec.class];
        for i in 0..spec.count {
            let features: Vec<f64> =
                spec.mean.iter().map(|m| m + feat.sample(&mut rng)).collect();
            let valence = (anchor_v + va.sample(&mut rng)).clamp(-1.0, 1.0);
            let arousal = (anchor_a + va.sample(&mut rng)).clamp(-1.0, 1.0);
            records.push(FeatureRecord {
                id: format!("syn-{}-{i}", CLASS_NAMES[spec.class].to_ascii_lowercase()),
                features,
                expression: spec.class,
                valence,
                arousal,
                landmarks: None,
            });
        }
    }
    Dataset::new(records, config.feature_dim, 0)
}

/// Named count profiles for the CLI presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountProfile {
    /// Training-set skew.
    AffectnetSkew,
    /// 500 per class, 499 Contempt.
    BalancedTest,
    /// Skewed test counts.
    SkewedTest,
}

impl CountProfile {
    pub fn counts(self) -> [usize; NUM_CLASSES] {
        match self {
            CountProfile::AffectnetSkew => AFFECTNET_TRAIN_COUNTS,
            CountProfile::BalancedTest => BALANCED_TEST_COUNTS,
            CountProfile::SkewedTest => SKEWED_TEST_COUNTS,
        }
    }
}

/// Scale a count profile, rounding to nearest (the 10% skew profile pins
/// Happy 13441.5 -> 13442). Classes that round to zero are dropped.
pub fn scaled_counts(profile: CountProfile, scale: f64) -> Result<[usize; NUM_CLASSES]> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::config(format!("scale {scale} must be positive")));
    }
    let mut out = [0usize; NUM_CLASSES];
    for (o, &c) in out.iter_mut().zip(&profile.counts()) {
        *o = (c as f64 * scale).round() as usize;
    }
    Ok(out)
}

/// Build a full synthesis config for a count profile: class means placed at
/// `separation * e_c` (axis-aligned, so every pair of means is distinct),
/// unit stddev. `feature_dim` must be at least `NUM_CLASSES`.
pub fn profile_config(
    profile: CountProfile,
    scale: f64,
    feature_dim: usize,
    separation: f64,
    config_seed: u64,
) -> Result<SynthesisConfig> {
    if feature_dim < NUM_CLASSES {
        return Err(Error::config(format!(
            "feature_dim {feature_dim} too small for {NUM_CLASSES} axis-aligned class means"
        )));
    }
    if !(separation > 0.0) || !separation.is_finite() {
        return Err(Error::config(format!("separation {separation} must be positive")));
    }
    let counts = scaled_counts(profile, scale)?;
    let classes = counts
        .iter()
        .enumerate()
        .filter(|&(_, &count)| count > 0)
        .map(|(class, &count)| {
            let mut mean = vec![0.0; feature_dim];
            mean[class] = separation;
            ClassSynthSpec { class, count, mean, stddev: 1.0 }
        })
        .collect();
    Ok(SynthesisConfig { feature_dim, seed: config_seed, classes })
}
