use super::train::{TrainFileConfig, TrainFlags, resolve_config};
use crate::manifest::{self, PairTrainManifest};
use clap::Args;
use fer_core::checkpoint::{load_multi_path, save_pairdict_path};
use fer_core::dataset::PairKey;
use fer_core::error::{Error, Result};
use fer_core::featurefile::load_feature_path;
use fer_core::heads::PairMode;
use fer_core::training::train_pairwise;
use std::path::PathBuf;

#[derive(Args)]
pub struct PairTrainArgs {
    #[command(flatten)]
    pub flags: TrainFlags,

    /// Dictionary variant: stacked consumes the general head's logits,
    /// detached consumes raw features.
    #[arg(long, value_enum)]
    pub mode: PairModeArg,

    /// General checkpoint; required in stacked mode.
    #[arg(long)]
    pub general: Option<PathBuf>,

    /// Comma-separated pair subset, e.g. `fear-contempt,happy-sad`
    /// [default: all 28 pairs]
    #[arg(long, value_delimiter = ',')]
    pub pairs: Option<Vec<String>>,

    /// Pairs trained in parallel [default: 1]
    #[arg(long)]
    pub jobs: Option<usize>,

    /// Output directory for pairdict.fer and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum PairModeArg {
    Stacked,
    Detached,
}

pub fn run(args: PairTrainArgs) -> Result<()> {
    crate::commands::require_input(&args.flags.features, "feature file")?;
    let mode = match args.mode {
        PairModeArg::Stacked => PairMode::Stacked,
        PairModeArg::Detached => PairMode::Detached,
    };
    let general = match (&args.general, mode) {
        (Some(path), _) => {
            crate::commands::require_input(path, "general checkpoint")?;
            Some(load_multi_path(path)?)
        }
        (None, PairMode::Stacked) => {
            return Err(Error::config("stacked mode requires --general <checkpoint>"));
        }
        (None, PairMode::Detached) => None,
    };

    let file = TrainFileConfig::load(args.flags.config.as_ref())?;
    let config = resolve_config(&args.flags, &file)?;
    let keys: Vec<PairKey> = match &args.pairs {
        None => PairKey::all(),
        Some(names) => names.iter().map(|n| PairKey::parse(n)).collect::<Result<_>>()?,
    };
    let jobs = args.jobs.unwrap_or(1).max(1);

    let data = load_feature_path(&args.flags.features, args.flags.dim_hint)?;
    let out = crate::commands::ensure_out_dir(&args.out)?;
    let outcome = train_pairwise(&data, &keys, general.as_ref(), &config, mode, jobs)?;
    let checkpoint = out.join("pairdict.fer");
    save_pairdict_path(&outcome.dict, &checkpoint)?;

    for key in &outcome.skipped {
        eprintln!("skipped {}: a class is absent from the data", key.name());
    }
    let manifest = PairTrainManifest {
        tool: manifest::TOOL,
        version: manifest::VERSION,
        command: "pair-train",
        features: args.flags.features.display().to_string(),
        mode: match mode {
            PairMode::Stacked => "stacked".to_string(),
            PairMode::Detached => "detached".to_string(),
        },
        general: args.general.as_ref().map(|p| p.display().to_string()),
        jobs,
        config,
        trained_pairs: outcome.dict.keys().map(PairKey::name).collect(),
        skipped_pairs: outcome.skipped.iter().map(PairKey::name).collect(),
        histories: outcome.histories.iter().map(|(k, h)| (k.name(), h.clone())).collect(),
        checkpoint: checkpoint.display().to_string(),
    };
    manifest::write_json(&manifest, &out.join("manifest.json"))?;
    println!(
        "trained {} pair heads ({} skipped) into {}",
        outcome.dict.len(),
        outcome.skipped.len(),
        checkpoint.display()
    );
    Ok(())
}
