//! The three sampling regimes: natural order, inverse-class-frequency
//! weighted draws with a balancing cap, and exact pair-balanced draws.

use crate::dataset::{Dataset, NUM_CLASSES, PairKey};
use crate::error::{Error, Result};
use crate::seed;
use rand::distr::Distribution;
use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

/// Default balancing cap: 2 x size of the smallest class, per class.
pub const DEFAULT_CAP_MULTIPLIER: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerVariant {
    /// A seeded permutation of the whole dataset.
    Natural,
    /// Draws with replacement, per-record probability proportional to the
    /// reciprocal of its class count. Epoch length is
    /// `cap_multiplier x smallest present class x number of present classes`.
    InverseFrequency { cap_multiplier: f64 },
    /// Exactly `2 x min(n_lo, n_hi)` indices, the same number from each
    /// class of the pair, drawn without replacement per class and shuffled.
    PairBalanced { key: PairKey },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    pub variant: SamplerVariant,
    pub seed: u64,
}

/// Per-class reciprocal-count weights; absent classes get weight 0.
pub fn inverse_frequency_weights(class_counts: &[usize; NUM_CLASSES]) -> Result<[f64; NUM_CLASSES]> {
    if class_counts.iter().all(|&c| c == 0) {
        return Err(Error::data("all class counts are zero"));
    }
    let mut weights = [0.0; NUM_CLASSES];
    for (w, &c) in weights.iter_mut().zip(class_counts) {
        if c > 0 {
            *w = 1.0 / c as f64;
        }
    }
    Ok(weights)
}

/// `draws` reciprocal-frequency weighted indices with replacement.
pub fn inverse_frequency_draws(dataset: &Dataset, draws: usize, draw_seed: u64) -> Result<Vec<usize>> {
    let class_weights = inverse_frequency_weights(dataset.class_counts())?;
    let record_weights: Vec<f64> =
        dataset.records().iter().map(|r| class_weights[r.expression]).collect();
    let dist = WeightedIndex::new(&record_weights)
        .map_err(|e| Error::data(format!("weighted sampler: {e}")))?;
    let mut rng = seed::rng(draw_seed);
    Ok((0..draws).map(|_| dist.sample(&mut rng)).collect())
}

fn class_indices(dataset: &Dataset, class: usize) -> Vec<usize> {
    dataset
        .records()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.expression == class)
        .map(|(i, _)| i)
        .collect()
}

/// Produce one epoch's index sequence for the given sampler.
pub fn draw_epoch(dataset: &Dataset, spec: &SamplerSpec) -> Result<Vec<usize>> {
    if dataset.is_empty() {
        return Err(Error::data("cannot sample from an empty dataset"));
    }
    match spec.variant {
        SamplerVariant::Natural => {
            let mut idx: Vec<usize> = (0..dataset.len()).collect();
            idx.shuffle(&mut seed::rng(spec.seed));
            Ok(idx)
        }
        SamplerVariant::InverseFrequency { cap_multiplier } => {
            if !(cap_multiplier > 0.0) {
                return Err(Error::config(format!("cap multiplier {cap_multiplier} must be positive")));
            }
            let present: Vec<usize> =
                dataset.class_counts().iter().copied().filter(|&c| c > 0).collect();
            let smallest = *present.iter().min().expect("dataset non-empty");
            let draws = (cap_multiplier * smallest as f64 * present.len() as f64).round() as usize;
            inverse_frequency_draws(dataset, draws, spec.seed)
        }
        SamplerVariant::PairBalanced { key } => {
            let counts = dataset.class_counts();
            let (n_lo, n_hi) = (counts[key.lo()], counts[key.hi()]);
            if n_lo == 0 || n_hi == 0 {
                return Err(Error::data(format!(
                    "pair {} has an empty class (counts {n_lo}, {n_hi})",
                    key.name()
                )));
            }
            let take = n_lo.min(n_hi);
            let mut rng = seed::rng(spec.seed);
            let mut out = Vec::with_capacity(2 * take);
            for class in [key.lo(), key.hi()] {
                let mut idx = class_indices(dataset, class);
                idx.shuffle(&mut rng);
                out.extend_from_slice(&idx[..take]);
            }
            out.shuffle(&mut rng);
            Ok(out)
        }
    }
}
