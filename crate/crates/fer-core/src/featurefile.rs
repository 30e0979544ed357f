//! Text feature-file format.
//!
//! One record per line, fields separated by a single tab:
//!
//! ```text
//! id \t expression \t valence \t arousal \t L \t lm_1 .. lm_2L \t D \t f_1 .. f_D
//! ```
//!
//! `L` is the landmark point count (2L coordinate fields follow; `L` may be
//! 0, in which case no landmark fields follow). Lines beginning with `#` are
//! ignored. Numbers are decimal with optional exponent. Errors name the
//! 1-based physical line.

use crate::dataset::{Dataset, FeatureRecord, NUM_CLASSES};
use crate::error::{Error, Result};
use std::io::{BufRead, Write};

fn parse_f64(field: &str, what: &str, row: usize) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::data_at(row, format!("non-numeric {what} {field:?}")))?;
    if !v.is_finite() {
        return Err(Error::data_at(row, format!("non-finite {what} {field:?}")));
    }
    Ok(v)
}

fn parse_usize(field: &str, what: &str, row: usize) -> Result<usize> {
    field.parse().map_err(|_| Error::data_at(row, format!("non-numeric {what} {field:?}")))
}

fn parse_row(line: &str, row: usize) -> Result<FeatureRecord> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() < 6 {
        return Err(Error::data_at(row, format!("expected at least 6 fields, got {}", fields.len())));
    }
    let id = fields[0].to_string();
    let expression = parse_usize(fields[1], "expression label", row)?;
    if expression >= NUM_CLASSES {
        return Err(Error::data_at(row, format!("expression label {expression} outside 0..{NUM_CLASSES}")));
    }
    let valence = parse_f64(fields[2], "valence", row)?;
    let arousal = parse_f64(fields[3], "arousal", row)?;
    for (v, what) in [(valence, "valence"), (arousal, "arousal")] {
        if !(-1.0..=1.0).contains(&v) {
            return Err(Error::data_at(row, format!("{what} {v} outside [-1, 1]")));
        }
    }
    let landmark_points = parse_usize(fields[4], "landmark count", row)?;
    // Guard the arithmetic: field counts come from untrusted input.
    let lm_len = landmark_points
        .checked_mul(2)
        .filter(|n| n.checked_add(6).is_some_and(|m| m <= fields.len()))
        .ok_or_else(|| Error::data_at(row, format!("landmark count {landmark_points} exceeds row length")))?;
    let landmarks: Option<Vec<f64>> = if lm_len == 0 {
        None
    } else {
        Some(
            fields[5..5 + lm_len]
                .iter()
                .map(|f| parse_f64(f, "landmark", row))
                .collect::<Result<_>>()?,
        )
    };
    let dim_pos = 5 + lm_len;
    let feature_dim = parse_usize(fields[dim_pos], "feature dimension", row)?;
    let expected = (dim_pos + 1)
        .checked_add(feature_dim)
        .ok_or_else(|| Error::data_at(row, format!("feature dimension {feature_dim} overflows row length")))?;
    if fields.len() != expected {
        return Err(Error::data_at(
            row,
            format!("expected {expected} fields for D={feature_dim}, L={landmark_points}, got {}", fields.len()),
        ));
    }
    let features = fields[dim_pos + 1..]
        .iter()
        .map(|f| parse_f64(f, "feature", row))
        .collect::<Result<Vec<f64>>>()?;
    Ok(FeatureRecord { id, features, expression, valence, arousal, landmarks })
}

/// Parse a feature file. `dim_hint`, when given, pins the expected feature
/// dimension; otherwise the first record sets it. Row order is preserved.
pub fn load_feature_file<R: BufRead>(source: R, dim_hint: Option<usize>) -> Result<Dataset> {
    let mut records: Vec<FeatureRecord> = Vec::new();
    let mut feature_dim = dim_hint;
    let mut landmark_dim: Option<usize> = None;
    for (i, line) in source.lines().enumerate() {
        let row = i + 1;
        let line = line?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let rec = parse_row(trimmed, row)?;
        match feature_dim {
            None => feature_dim = Some(rec.features.len()),
            Some(d) if d != rec.features.len() => {
                return Err(Error::data_at(
                    row,
                    format!("feature dimension {} inconsistent with {d}", rec.features.len()),
                ));
            }
            Some(_) => {}
        }
        let lm = rec.landmarks.as_ref().map_or(0, Vec::len);
        match landmark_dim {
            None => landmark_dim = Some(lm),
            Some(l) if l != lm => {
                return Err(Error::data_at(row, format!("landmark length {lm} inconsistent with {l}")));
            }
            Some(_) => {}
        }
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::data("no records"));
    }
    Dataset::new(records, feature_dim.unwrap(), landmark_dim.unwrap_or(0))
}

/// Write a dataset in the feature-file format. Floats use Rust's shortest
/// round-trip formatting, so load(write(d)) == d exactly.
pub fn write_feature_file<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    writeln!(out, "# id\texpression\tvalence\tarousal\tL\tlm_1..lm_2L\tD\tf_1..f_D")?;
    for rec in dataset.records() {
        write!(out, "{}\t{}\t{}\t{}", rec.id, rec.expression, rec.valence, rec.arousal)?;
        match &rec.landmarks {
            None => write!(out, "\t0")?,
            Some(lm) => {
                write!(out, "\t{}", lm.len() / 2)?;
                for v in lm {
                    write!(out, "\t{v}")?;
                }
            }
        }
        write!(out, "\t{}", rec.features.len())?;
        for v in &rec.features {
            write!(out, "\t{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn load_feature_path(path: &std::path::Path, dim_hint: Option<usize>) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    load_feature_file(std::io::BufReader::new(file), dim_hint)
}

pub fn write_feature_path(dataset: &Dataset, path: &std::path::Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_feature_file(dataset, std::io::BufWriter::new(file))
}
