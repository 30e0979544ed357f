//! Run manifests: the merged configuration, seeds, and history that make
//! every command's outputs reproducible. No timestamps or host details, so
//! identical invocations write identical manifests.

use fer_core::error::Result;
use fer_core::synth::SynthesisConfig;
use fer_core::training::{EpochStats, PairEpochStats, TrainConfig};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;

pub const TOOL: &str = "fer";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize)]
pub struct SynthManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub profile: Option<String>,
    pub scale: f64,
    pub separation: f64,
    pub class_counts: Vec<usize>,
    /// Fixed per-class (valence, arousal) anchors used for the annotations.
    pub va_anchors: Vec<(f64, f64)>,
    pub va_noise_stddev: f64,
    pub config: SynthesisConfig,
    pub output: String,
}

#[derive(Serialize)]
pub struct TrainManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub features: String,
    pub val_fraction: f64,
    pub split_seed: u64,
    pub config: TrainConfig,
    pub train_records: usize,
    pub val_records: usize,
    pub history: Vec<EpochStats>,
    pub final_train_loss: Option<f64>,
    pub final_val_loss: Option<f64>,
    pub final_val_accuracy: Option<f64>,
    pub checkpoint: String,
}

#[derive(Serialize)]
pub struct PairTrainManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub features: String,
    pub mode: String,
    pub general: Option<String>,
    pub jobs: usize,
    pub config: TrainConfig,
    pub trained_pairs: Vec<String>,
    pub skipped_pairs: Vec<String>,
    pub histories: BTreeMap<String, Vec<PairEpochStats>>,
    pub checkpoint: String,
}

#[derive(Serialize)]
pub struct EvalManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub checkpoint: String,
    pub features: String,
    pub dict: Option<String>,
    pub format: String,
    pub outputs: Vec<String>,
    pub skipped_pairs: Vec<String>,
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| fer_core::Error::data(format!("serializing manifest: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
