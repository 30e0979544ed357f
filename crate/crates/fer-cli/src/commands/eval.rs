use crate::manifest::{self, EvalManifest};
use clap::Args;
use fer_core::checkpoint::{load_multi_path, load_pairdict_path};
use fer_core::dataset::PairKey;
use fer_core::error::{Error, Result};
use fer_core::eval::{evaluate_general, evaluate_pairwise};
use fer_core::featurefile::load_feature_path;
use fer_core::metrics::{
    ReportFile, ReportFormat, render_general, render_pair_class_stats, render_pair_comparison,
};
use std::path::PathBuf;

#[derive(Args)]
pub struct EvalArgs {
    /// General head checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,

    /// Test feature file.
    #[arg(long)]
    pub features: PathBuf,

    /// Expected feature dimension; inferred when omitted.
    #[arg(long)]
    pub dim_hint: Option<usize>,

    /// Also emit the pairwise comparison (requires --dict).
    #[arg(long)]
    pub pairwise: bool,

    /// Pair dictionary checkpoint for --pairwise.
    #[arg(long)]
    pub dict: Option<PathBuf>,

    /// Rendered output format: tsv or markdown [default: tsv]
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,

    /// Output directory for report files.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum FormatArg {
    Tsv,
    Markdown,
}

pub fn run(args: EvalArgs) -> Result<()> {
    crate::commands::require_input(&args.checkpoint, "checkpoint")?;
    crate::commands::require_input(&args.features, "feature file")?;
    let (format, ext) = match args.format.unwrap_or(FormatArg::Tsv) {
        FormatArg::Tsv => (ReportFormat::Tsv, "tsv"),
        FormatArg::Markdown => (ReportFormat::Markdown, "md"),
    };

    let head = load_multi_path(&args.checkpoint)?;
    let data = load_feature_path(&args.features, args.dim_hint)?;
    if head.feature_dim() != data.feature_dim() {
        return Err(Error::data(format!(
            "checkpoint dimension {} != dataset dimension {}",
            head.feature_dim(),
            data.feature_dim()
        )));
    }

    let out = crate::commands::ensure_out_dir(&args.out)?;
    let mut outputs = Vec::new();
    let mut skipped = Vec::new();

    let general = evaluate_general(&head, &data)?;
    let report_json = out.join("report.json");
    manifest::write_json(&ReportFile::General(general.clone()), &report_json)?;
    let rendered = out.join(format!("report.{ext}"));
    std::fs::write(&rendered, render_general(&general, format))?;
    outputs.push(report_json.display().to_string());
    outputs.push(rendered.display().to_string());

    if args.pairwise {
        let dict_path = args
            .dict
            .as_ref()
            .ok_or_else(|| Error::config("--pairwise requires --dict <checkpoint>"))?;
        crate::commands::require_input(dict_path, "pair dictionary")?;
        let dict = load_pairdict_path(dict_path)?;
        let (pairwise, missing) = evaluate_pairwise(&head, &dict, &data)?;
        skipped = missing;
        for key in &skipped {
            eprintln!("skipped {}: a class is absent from the test data", key.name());
        }
        let pair_json = out.join("pair_report.json");
        manifest::write_json(&ReportFile::Pairwise(pairwise.clone()), &pair_json)?;
        let comparison = out.join(format!("pair_comparison.{ext}"));
        std::fs::write(&comparison, render_pair_comparison(&pairwise.rows, format))?;
        let class_stats = out.join(format!("pair_class_stats.{ext}"));
        std::fs::write(&class_stats, render_pair_class_stats(&pairwise.one_fc_stats, format))?;
        outputs.push(pair_json.display().to_string());
        outputs.push(comparison.display().to_string());
        outputs.push(class_stats.display().to_string());
    }

    let manifest = EvalManifest {
        tool: manifest::TOOL,
        version: manifest::VERSION,
        command: "eval",
        checkpoint: args.checkpoint.display().to_string(),
        features: args.features.display().to_string(),
        dict: args.dict.as_ref().map(|p| p.display().to_string()),
        format: ext.to_string(),
        outputs,
        skipped_pairs: skipped.iter().map(PairKey::name).collect(),
    };
    manifest::write_json(&manifest, &out.join("manifest.json"))?;
    println!("accuracy {:.1}%", general.overall.accuracy * 100.0);
    Ok(())
}
