use clap::Args;
use fer_core::error::{Error, Result};
use fer_core::metrics::{ReportFile, ReportFormat, render_report};
use std::path::PathBuf;

#[derive(Args)]
pub struct ReportArgs {
    /// A report.json or pair_report.json written by `eval`.
    #[arg(long)]
    pub input: PathBuf,

    /// Output format: tsv or markdown [default: tsv]
    #[arg(long, value_enum)]
    pub format: Option<super::eval::FormatArg>,

    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: ReportArgs) -> Result<()> {
    crate::commands::require_input(&args.input, "report file")?;
    let text = std::fs::read_to_string(&args.input)?;
    let report: ReportFile = serde_json::from_str(&text)
        .map_err(|e| Error::data(format!("report file {}: {e}", args.input.display())))?;
    let format = match args.format.unwrap_or(super::eval::FormatArg::Tsv) {
        super::eval::FormatArg::Tsv => ReportFormat::Tsv,
        super::eval::FormatArg::Markdown => ReportFormat::Markdown,
    };
    let rendered = render_report(&report, format);
    match &args.out {
        Some(path) => std::fs::write(path, rendered)?,
        None => print!("{rendered}"),
    }
    Ok(())
}
