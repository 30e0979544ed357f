use crate::manifest::{self, TrainManifest};
use clap::Args;
use fer_core::checkpoint::save_multi_path;
use fer_core::error::{Error, Result};
use fer_core::featurefile::load_feature_path;
use fer_core::losses::{AamParams, LossWeights, RegressionMode, SignedMseParams};
use fer_core::sampling::{DEFAULT_CAP_MULTIPLIER, SamplerVariant};
use fer_core::training::{ExpressionLoss, RopConfig, RopMonitor, TrainConfig, train_general};
use serde::Deserialize;
use std::path::PathBuf;

/// Flags shared by `train` and `pair-train`. Precedence: command line over
/// `--config` file over built-in defaults. Defaults are the pairwise
/// training settings: 30 epochs, lr 1e-4, batch 256, weight decay 5e-4,
/// plateau patience 5 with factor 0.25.
#[derive(Args)]
pub struct TrainFlags {
    /// Training feature file (tab-separated).
    #[arg(long)]
    pub features: PathBuf,

    /// Expected feature dimension; inferred from the file when omitted.
    #[arg(long)]
    pub dim_hint: Option<usize>,

    /// JSON config file; command-line flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Epochs [default: 30]
    #[arg(long)]
    pub epochs: Option<usize>,

    /// Initial learning rate [default: 0.0001]
    #[arg(long)]
    pub lr: Option<f64>,

    /// Batch size [default: 256]
    #[arg(long)]
    pub batch_size: Option<usize>,

    /// L2 weight decay added to gradients [default: 0.0005]
    #[arg(long)]
    pub weight_decay: Option<f64>,

    /// Master seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,

    /// Epoch sampler: natural or inverse-frequency [default: natural]
    #[arg(long, value_enum)]
    pub sampler: Option<SamplerArg>,

    /// Inverse-frequency balancing cap multiplier [default: 2.0]
    #[arg(long)]
    pub cap_multiplier: Option<f64>,

    /// Expression loss: softmax-ce or aam [default: softmax-ce]
    #[arg(long, value_enum)]
    pub expression_loss: Option<ExpressionLossArg>,

    /// AAM hypersphere scale s [default: 64]
    #[arg(long)]
    pub aam_scale: Option<f64>,

    /// AAM angular margin m in radians [default: 0.5]
    #[arg(long)]
    pub aam_margin: Option<f64>,

    /// Regression loss: signed-mse or pearson [default: signed-mse]
    #[arg(long, value_enum)]
    pub regression: Option<RegressionArg>,

    /// Signed-MSE sign-mismatch penalty kappa [default: 1.0]
    #[arg(long)]
    pub kappa: Option<f64>,

    /// Plateau patience in epochs [default: 5]
    #[arg(long)]
    pub patience: Option<usize>,

    /// Plateau reduction factor [default: 0.25]
    #[arg(long)]
    pub factor: Option<f64>,

    /// Metric the scheduler watches: train-loss or val-loss
    /// [default: train-loss]
    #[arg(long, value_enum)]
    pub monitor: Option<MonitorArg>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub flags: TrainFlags,

    /// Fraction of records held out per class for validation [default: 0.2]
    #[arg(long)]
    pub val_fraction: Option<f64>,

    /// Output directory for checkpoint.fer and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum SamplerArg {
    Natural,
    InverseFrequency,
}

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum ExpressionLossArg {
    SoftmaxCe,
    Aam,
}

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum RegressionArg {
    SignedMse,
    Pearson,
}

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum MonitorArg {
    TrainLoss,
    ValLoss,
}

/// The `--config` file schema: every entry optional, unknown keys rejected.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFileConfig {
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub weight_decay: Option<f64>,
    pub seed: Option<u64>,
    pub sampler: Option<String>,
    pub cap_multiplier: Option<f64>,
    pub expression_loss: Option<String>,
    pub aam_scale: Option<f64>,
    pub aam_margin: Option<f64>,
    pub regression: Option<String>,
    pub kappa: Option<f64>,
    pub patience: Option<usize>,
    pub factor: Option<f64>,
    pub monitor: Option<String>,
    pub val_fraction: Option<f64>,
}

impl TrainFileConfig {
    pub fn load(path: Option<&PathBuf>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(TrainFileConfig::default());
        };
        crate::commands::require_input(path, "config file")?;
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("config file {}: {e}", path.display())))
    }
}

fn keyword<T>(value: Option<&String>, what: &str, table: &[(&str, T)]) -> Result<Option<T>>
where
    T: Copy,
{
    match value {
        None => Ok(None),
        Some(s) => table
            .iter()
            .find(|(k, _)| k == s)
            .map(|&(_, v)| Some(v))
            .ok_or_else(|| Error::config(format!("unknown {what} {s:?}"))),
    }
}

/// Merge flags over the config file over defaults into a full TrainConfig.
pub fn resolve_config(flags: &TrainFlags, file: &TrainFileConfig) -> Result<TrainConfig> {
    let defaults = TrainConfig::default();

    let sampler_flag = flags.sampler.map(|s| match s {
        SamplerArg::Natural => SamplerKind::Natural,
        SamplerArg::InverseFrequency => SamplerKind::InverseFrequency,
    });
    let sampler_file = keyword(
        file.sampler.as_ref(),
        "sampler",
        &[("natural", SamplerKind::Natural), ("inverse-frequency", SamplerKind::InverseFrequency)],
    )?;
    let cap = flags
        .cap_multiplier
        .or(file.cap_multiplier)
        .unwrap_or(DEFAULT_CAP_MULTIPLIER);
    let sampler = match sampler_flag.or(sampler_file).unwrap_or(SamplerKind::Natural) {
        SamplerKind::Natural => SamplerVariant::Natural,
        SamplerKind::InverseFrequency => SamplerVariant::InverseFrequency { cap_multiplier: cap },
    };

    let expr_flag = flags.expression_loss.map(|e| match e {
        ExpressionLossArg::SoftmaxCe => ExprKind::SoftmaxCe,
        ExpressionLossArg::Aam => ExprKind::Aam,
    });
    let expr_file = keyword(
        file.expression_loss.as_ref(),
        "expression loss",
        &[("softmax-ce", ExprKind::SoftmaxCe), ("aam", ExprKind::Aam)],
    )?;
    let aam_defaults = AamParams::default();
    let expression_loss = match expr_flag.or(expr_file).unwrap_or(ExprKind::SoftmaxCe) {
        ExprKind::SoftmaxCe => ExpressionLoss::SoftmaxCe,
        ExprKind::Aam => ExpressionLoss::Aam(AamParams::new(
            flags.aam_scale.or(file.aam_scale).unwrap_or(aam_defaults.scale),
            flags.aam_margin.or(file.aam_margin).unwrap_or(aam_defaults.margin),
        )?),
    };

    let regr_flag = flags.regression.map(|r| match r {
        RegressionArg::SignedMse => RegrKind::SignedMse,
        RegressionArg::Pearson => RegrKind::Pearson,
    });
    let regr_file = keyword(
        file.regression.as_ref(),
        "regression loss",
        &[("signed-mse", RegrKind::SignedMse), ("pearson", RegrKind::Pearson)],
    )?;
    let regression = match regr_flag.or(regr_file).unwrap_or(RegrKind::SignedMse) {
        RegrKind::SignedMse => RegressionMode::SignedMse(SignedMseParams::new(
            flags.kappa.or(file.kappa).unwrap_or(1.0),
        )?),
        RegrKind::Pearson => RegressionMode::Pearson,
    };

    let monitor_flag = flags.monitor.map(|m| match m {
        MonitorArg::TrainLoss => RopMonitor::TrainLoss,
        MonitorArg::ValLoss => RopMonitor::ValLoss,
    });
    let monitor_file = keyword(
        file.monitor.as_ref(),
        "monitor",
        &[("train-loss", RopMonitor::TrainLoss), ("val-loss", RopMonitor::ValLoss)],
    )?;

    let config = TrainConfig {
        initial_lr: flags.lr.or(file.lr).unwrap_or(defaults.initial_lr),
        epochs: flags.epochs.or(file.epochs).unwrap_or(defaults.epochs),
        batch_size: flags.batch_size.or(file.batch_size).unwrap_or(defaults.batch_size),
        weight_decay: flags.weight_decay.or(file.weight_decay).unwrap_or(defaults.weight_decay),
        seed: flags.seed.or(file.seed).unwrap_or(0),
        sampler,
        expression_loss,
        regression,
        loss_weights: LossWeights::default(),
        rop: RopConfig {
            patience: flags.patience.or(file.patience).unwrap_or(defaults.rop.patience),
            factor: flags.factor.or(file.factor).unwrap_or(defaults.rop.factor),
        },
        monitor: monitor_flag.or(monitor_file).unwrap_or(RopMonitor::TrainLoss),
    };
    config.validate()?;
    Ok(config)
}

#[derive(Clone, Copy)]
enum SamplerKind {
    Natural,
    InverseFrequency,
}

#[derive(Clone, Copy)]
enum ExprKind {
    SoftmaxCe,
    Aam,
}

#[derive(Clone, Copy)]
enum RegrKind {
    SignedMse,
    Pearson,
}

pub fn run(args: TrainArgs) -> Result<()> {
    crate::commands::require_input(&args.flags.features, "feature file")?;
    let file = TrainFileConfig::load(args.flags.config.as_ref())?;
    let config = resolve_config(&args.flags, &file)?;
    let val_fraction = args.val_fraction.or(file.val_fraction).unwrap_or(0.2);

    let data = load_feature_path(&args.flags.features, args.flags.dim_hint)?;
    let split_seed = fer_core::seed::mix(config.seed, 0x5711);
    let (train, val) = data.split(1.0 - val_fraction, split_seed)?;

    let out = crate::commands::ensure_out_dir(&args.out)?;
    let (head, history) = train_general(&train, &val, &config)?;
    let checkpoint = out.join("checkpoint.fer");
    save_multi_path(&head, &checkpoint)?;

    let manifest = TrainManifest {
        tool: manifest::TOOL,
        version: manifest::VERSION,
        command: "train",
        features: args.flags.features.display().to_string(),
        val_fraction,
        split_seed,
        config,
        train_records: train.len(),
        val_records: val.len(),
        final_train_loss: history.last().map(|e| e.train_loss),
        final_val_loss: history.last().map(|e| e.val_loss),
        final_val_accuracy: history.last().map(|e| e.val_accuracy),
        history,
        checkpoint: checkpoint.display().to_string(),
    };
    manifest::write_json(&manifest, &out.join("manifest.json"))?;
    match manifest.final_val_accuracy {
        Some(acc) => println!("trained {} epochs, val accuracy {:.4}", manifest.history.len(), acc),
        None => println!("wrote initialized checkpoint (0 epochs)"),
    }
    Ok(())
}
