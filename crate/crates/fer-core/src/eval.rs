//! Dataset-level evaluation: general 8-way reports and the pairwise
//! comparison between restricted-argmax evaluation and the dictionary.

use crate::dataset::{Dataset, NUM_CLASSES, PairKey};
use crate::error::{Error, Result};
use crate::heads::{MultiOutputHead, PairwiseHeadDict};
use crate::metrics::{
    ConfusionMatrix, GeneralReport, PairwiseReport, class_metrics, pair_accuracy, pair_report,
};
use std::collections::BTreeMap;

/// Evaluate the general head over a dataset: confusion matrix, per-class
/// metrics, and overall aggregates.
pub fn evaluate_general(head: &MultiOutputHead, data: &Dataset) -> Result<GeneralReport> {
    if data.is_empty() {
        return Err(Error::data("cannot evaluate on an empty dataset"));
    }
    let mut cm = ConfusionMatrix::new(NUM_CLASSES);
    for rec in data.records() {
        cm.record(rec.expression, head.predict(&rec.features)?)?;
    }
    let (per_class, overall) = class_metrics(&cm)?;
    Ok(GeneralReport { overall, per_class, confusion: cm })
}

/// Evaluate every dictionary pair two ways on the pair's restriction of
/// `data`: restricted-argmax through the general head ("one FC layer") and
/// through the pair dictionary. Pairs with a class absent from `data` are
/// skipped and returned separately.
pub fn evaluate_pairwise(
    general: &MultiOutputHead,
    dict: &PairwiseHeadDict,
    data: &Dataset,
) -> Result<(PairwiseReport, Vec<PairKey>)> {
    let mut one_fc = BTreeMap::new();
    let mut dict_acc = BTreeMap::new();
    let mut one_fc_stats = Vec::new();
    let mut dict_stats = Vec::new();
    let mut skipped = Vec::new();

    for (&key, _) in dict.entries() {
        let counts = data.class_counts();
        if counts[key.lo()] == 0 || counts[key.hi()] == 0 {
            skipped.push(key);
            continue;
        }
        let view = data.pair_view(key);
        let labels: Vec<usize> = view.records().iter().map(|r| r.expression).collect();
        let mut general_preds = Vec::with_capacity(view.len());
        let mut dict_preds = Vec::with_capacity(view.len());
        for rec in view.records() {
            general_preds.push(general.pair_eval(&rec.features, key)?);
            dict_preds.push(dict.predict(Some(general), &rec.features, key)?);
        }
        let g = pair_accuracy(&general_preds, &labels, key)?;
        let d = pair_accuracy(&dict_preds, &labels, key)?;
        one_fc.insert(key, g.overall_pct);
        dict_acc.insert(key, d.overall_pct);
        one_fc_stats.push(g);
        dict_stats.push(d);
    }

    let rows = pair_report(&one_fc, &dict_acc)?;
    // Class-specific blocks follow the comparison table's row order.
    let order: BTreeMap<PairKey, usize> =
        rows.iter().enumerate().map(|(i, r)| (r.key, i)).collect();
    one_fc_stats.sort_by_key(|s| order[&s.key]);
    dict_stats.sort_by_key(|s| order[&s.key]);
    Ok((PairwiseReport { rows, one_fc_stats, dict_stats }, skipped))
}
