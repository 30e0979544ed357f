//! Confusion matrices, per-class and overall precision/recall/F1, pairwise
//! accuracy tables, and the TSV/markdown report emitters.

use crate::dataset::{CLASS_NAMES, PairKey};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Row = true class, column = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix { classes, counts: vec![0; classes * classes] }
    }

    /// Tally predictions against labels.
    pub fn from_predictions(preds: &[usize], labels: &[usize], classes: usize) -> Result<Self> {
        if preds.len() != labels.len() {
            return Err(Error::data(format!(
                "length mismatch: {} predictions vs {} labels",
                preds.len(),
                labels.len()
            )));
        }
        let mut cm = ConfusionMatrix::new(classes);
        for (&p, &l) in preds.iter().zip(labels) {
            cm.record(l, p)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, label: usize, pred: usize) -> Result<()> {
        if label >= self.classes || pred >= self.classes {
            return Err(Error::data(format!(
                "class out of range: label {label}, prediction {pred}, classes {}",
                self.classes
            )));
        }
        self.counts[label * self.classes + pred] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn count(&self, label: usize, pred: usize) -> u64 {
        self.counts[label * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.count(c, c)).sum()
    }

    pub fn row_sum(&self, label: usize) -> u64 {
        (0..self.classes).map(|p| self.count(label, p)).sum()
    }

    pub fn col_sum(&self, pred: usize) -> u64 {
        (0..self.classes).map(|l| self.count(l, pred)).sum()
    }
}

/// `2PR/(P+R)`, 0 when both are 0. The harmonic mean of equal values is
/// that value; taking the branch keeps the identity exact in floating point.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision == recall {
        precision
    } else if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverallMetrics {
    pub accuracy: f64,
    pub weighted_precision: f64,
    /// Support-weighted recall simplifies to trace/total, i.e. accuracy;
    /// kept as its own field because reports print both.
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

/// Per-class precision/recall/F1 plus the overall aggregates. Zero
/// denominators yield 0 so reports stay total.
pub fn class_metrics(cm: &ConfusionMatrix) -> Result<(Vec<ClassMetrics>, OverallMetrics)> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::data("empty confusion matrix"));
    }
    let per_class: Vec<ClassMetrics> = (0..cm.classes())
        .map(|c| {
            let diag = cm.count(c, c) as f64;
            let col = cm.col_sum(c) as f64;
            let row = cm.row_sum(c) as f64;
            let precision = if col > 0.0 { diag / col } else { 0.0 };
            let recall = if row > 0.0 { diag / row } else { 0.0 };
            ClassMetrics { precision, recall, f1: f1_score(precision, recall), support: cm.row_sum(c) }
        })
        .collect();

    let n = total as f64;
    let accuracy = cm.trace() as f64 / n;
    let weighted = |f: &dyn Fn(&ClassMetrics) -> f64| {
        per_class.iter().map(|m| m.support as f64 * f(m)).sum::<f64>() / n
    };
    let macro_mean = |f: &dyn Fn(&ClassMetrics) -> f64| {
        per_class.iter().map(f).sum::<f64>() / cm.classes() as f64
    };
    let overall = OverallMetrics {
        accuracy,
        weighted_precision: weighted(&|m| m.precision),
        // sum_c support_c * (diag_c / support_c) = trace, exactly.
        weighted_recall: accuracy,
        weighted_f1: weighted(&|m| m.f1),
        macro_precision: macro_mean(&|m| m.precision),
        macro_recall: macro_mean(&|m| m.recall),
        macro_f1: macro_mean(&|m| m.f1),
    };
    Ok((per_class, overall))
}

/// One class's share of a pair evaluation. Accuracy is recall in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairClassStats {
    pub class: usize,
    pub accuracy_pct: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairAccuracy {
    pub key: PairKey,
    pub overall_pct: f64,
    pub lo: PairClassStats,
    pub hi: PairClassStats,
}

/// Accuracy and per-class statistics over one pair's 2x2 restriction.
/// Labels (and predictions) must belong to the pair.
pub fn pair_accuracy(preds: &[usize], labels: &[usize], key: PairKey) -> Result<PairAccuracy> {
    if preds.is_empty() {
        return Err(Error::data(format!("no samples for pair {}", key.name())));
    }
    if preds.len() != labels.len() {
        return Err(Error::data(format!(
            "length mismatch: {} predictions vs {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let to_bin = |class: usize, what: &str| -> Result<usize> {
        if class == key.lo() {
            Ok(0)
        } else if class == key.hi() {
            Ok(1)
        } else {
            Err(Error::data(format!("{what} {class} outside pair {}", key.name())))
        }
    };
    let mut cm = ConfusionMatrix::new(2);
    for (&p, &l) in preds.iter().zip(labels) {
        cm.record(to_bin(l, "label")?, to_bin(p, "prediction")?)?;
    }
    let (per_class, overall) = class_metrics(&cm)?;
    let stats = |bin: usize, class: usize| PairClassStats {
        class,
        accuracy_pct: per_class[bin].recall * 100.0,
        precision: per_class[bin].precision,
        recall: per_class[bin].recall,
        f1: per_class[bin].f1,
        support: per_class[bin].support,
    };
    Ok(PairAccuracy {
        key,
        overall_pct: overall.accuracy * 100.0,
        lo: stats(0, key.lo()),
        hi: stats(1, key.hi()),
    })
}

/// One comparison row: restricted-argmax general evaluation vs the pair
/// dictionary. Percentages are raw; rendering rounds to one decimal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairReportRow {
    pub key: PairKey,
    pub one_fc_accuracy: f64,
    pub dict_accuracy: f64,
    /// `dict_accuracy - one_fc_accuracy`.
    pub difference: f64,
}

/// Join the two per-pair accuracy maps into rows sorted by descending
/// one-FC accuracy (key order breaks ties).
pub fn pair_report(
    one_fc: &BTreeMap<PairKey, f64>,
    dict: &BTreeMap<PairKey, f64>,
) -> Result<Vec<PairReportRow>> {
    if one_fc.len() != dict.len() || one_fc.keys().any(|k| !dict.contains_key(k)) {
        return Err(Error::data("pair report inputs cover different key sets"));
    }
    let mut rows: Vec<PairReportRow> = one_fc
        .iter()
        .map(|(&key, &one)| {
            let d = dict[&key];
            PairReportRow { key, one_fc_accuracy: one, dict_accuracy: d, difference: d - one }
        })
        .collect();
    rows.sort_by(|a, b| {
        b.one_fc_accuracy
            .partial_cmp(&a.one_fc_accuracy)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.key.cmp(&b.key))
    });
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Tsv,
    Markdown,
}

/// General (8-way) evaluation report, Table-2 shaped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralReport {
    pub overall: OverallMetrics,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

/// Pairwise evaluation report: the comparison table plus per-pair
/// class-specific statistics for both evaluators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseReport {
    pub rows: Vec<PairReportRow>,
    pub one_fc_stats: Vec<PairAccuracy>,
    pub dict_stats: Vec<PairAccuracy>,
}

fn row_line(format: ReportFormat, cells: &[String]) -> String {
    match format {
        ReportFormat::Tsv => cells.join("\t"),
        ReportFormat::Markdown => format!("| {} |", cells.join(" | ")),
    }
}

fn md_separator(n: usize) -> String {
    format!("|{}", " --- |".repeat(n))
}

fn pct(v: f64) -> String {
    format!("{v:.1}")
}

fn signed_pct(v: f64) -> String {
    format!("{v:+.1}")
}

fn ratio(v: f64) -> String {
    format!("{v:.3}")
}

/// An evaluation report file: what `eval` writes as JSON and `report`
/// re-renders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ReportFile {
    General(GeneralReport),
    Pairwise(PairwiseReport),
}

/// Render either report kind; byte-stable given equal inputs.
pub fn render_report(report: &ReportFile, format: ReportFormat) -> String {
    match report {
        ReportFile::General(r) => render_general(r, format),
        ReportFile::Pairwise(r) => {
            let mut out = render_pair_comparison(&r.rows, format);
            out.push('\n');
            out.push_str(&render_pair_class_stats(&r.one_fc_stats, format));
            out
        }
    }
}

/// Render the general report: an overall block then the per-class table.
pub fn render_general(report: &GeneralReport, format: ReportFormat) -> String {
    let mut out = String::new();
    let header = ["Overall Metric", "Precision", "Recall", "F1 Score", "Accuracy (%)"];
    out.push_str(&row_line(format, &header.iter().map(|s| s.to_string()).collect::<Vec<_>>()));
    out.push('\n');
    if format == ReportFormat::Markdown {
        out.push_str(&md_separator(header.len()));
        out.push('\n');
    }
    out.push_str(&row_line(format, &[
        "Values".to_string(),
        ratio(report.overall.weighted_precision),
        ratio(report.overall.weighted_recall),
        ratio(report.overall.weighted_f1),
        pct(report.overall.accuracy * 100.0),
    ]));
    out.push_str("\n\n");

    let header = ["Class", "Precision", "Recall", "F1 Score"];
    out.push_str(&row_line(format, &header.iter().map(|s| s.to_string()).collect::<Vec<_>>()));
    out.push('\n');
    if format == ReportFormat::Markdown {
        out.push_str(&md_separator(header.len()));
        out.push('\n');
    }
    for (c, m) in report.per_class.iter().enumerate() {
        let name = CLASS_NAMES.get(c).copied().unwrap_or("?");
        out.push_str(&row_line(format, &[
            name.to_string(),
            ratio(m.precision),
            ratio(m.recall),
            ratio(m.f1),
        ]));
        out.push('\n');
    }
    out
}

/// Render the pair comparison table (one-FC vs dictionary, difference).
pub fn render_pair_comparison(rows: &[PairReportRow], format: ReportFormat) -> String {
    let mut out = String::new();
    let header = ["Class Pair", "One FC Layer Accuracy (%)", "FC Pair Dict Accuracy (%)", "Difference (%)"];
    out.push_str(&row_line(format, &header.iter().map(|s| s.to_string()).collect::<Vec<_>>()));
    out.push('\n');
    if format == ReportFormat::Markdown {
        out.push_str(&md_separator(header.len()));
        out.push('\n');
    }
    for row in rows {
        out.push_str(&row_line(format, &[
            row.key.name(),
            pct(row.one_fc_accuracy),
            pct(row.dict_accuracy),
            signed_pct(row.difference),
        ]));
        out.push('\n');
    }
    out
}

/// Render per-pair class-specific statistics (two lines per pair).
pub fn render_pair_class_stats(stats: &[PairAccuracy], format: ReportFormat) -> String {
    let mut out = String::new();
    let header = ["Class", "Accuracy (%)", "Precision", "Recall", "F1 Score"];
    out.push_str(&row_line(format, &header.iter().map(|s| s.to_string()).collect::<Vec<_>>()));
    out.push('\n');
    if format == ReportFormat::Markdown {
        out.push_str(&md_separator(header.len()));
        out.push('\n');
    }
    for pa in stats {
        for side in [&pa.lo, &pa.hi] {
            let name = CLASS_NAMES.get(side.class).copied().unwrap_or("?");
            out.push_str(&row_line(format, &[
                name.to_string(),
                pct(side.accuracy_pct),
                ratio(side.precision),
                ratio(side.recall),
                ratio(side.f1),
            ]));
            out.push('\n');
        }
    }
    out
}
