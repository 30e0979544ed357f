use crate::manifest::{self, SynthManifest};
use clap::Args;
use fer_core::error::{Error, Result};
use fer_core::featurefile::write_feature_path;
use fer_core::synth::{
    CountProfile, SynthesisConfig, VA_ANCHORS, VA_NOISE_STDDEV, profile_config, scaled_counts,
    synthesize_dataset,
};

#[derive(Args)]
pub struct SynthArgs {
    /// Count preset: affectnet-skew, balanced-test, or skewed-test.
    #[arg(long, value_enum, conflicts_with = "config")]
    pub profile: Option<CountProfileArg>,

    /// Scale applied to the profile counts, rounded to nearest [default: 1.0]
    #[arg(long)]
    pub scale: Option<f64>,

    /// Embedding dimension for profile presets [default: 16]
    #[arg(long)]
    pub feature_dim: Option<usize>,

    /// Distance of each class mean from the origin along its own axis
    /// [default: 2.0]
    #[arg(long)]
    pub separation: Option<f64>,

    /// Full SynthesisConfig as JSON (alternative to --profile).
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,

    /// Generator seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,

    /// Output directory for features.tsv and manifest.json.
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum CountProfileArg {
    AffectnetSkew,
    BalancedTest,
    SkewedTest,
}

impl From<CountProfileArg> for CountProfile {
    fn from(p: CountProfileArg) -> Self {
        match p {
            CountProfileArg::AffectnetSkew => CountProfile::AffectnetSkew,
            CountProfileArg::BalancedTest => CountProfile::BalancedTest,
            CountProfileArg::SkewedTest => CountProfile::SkewedTest,
        }
    }
}

pub fn run(args: SynthArgs) -> Result<()> {
    let scale = args.scale.unwrap_or(1.0);
    let separation = args.separation.unwrap_or(2.0);
    let feature_dim = args.feature_dim.unwrap_or(16);
    let seed = args.seed.unwrap_or(0);

    let (config, profile_name): (SynthesisConfig, Option<String>) = match (&args.profile, &args.config)
    {
        (Some(profile), None) => {
            let p: CountProfile = (*profile).into();
            let name = serde_json::to_value(p)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string));
            (profile_config(p, scale, feature_dim, separation, seed)?, name)
        }
        (None, Some(path)) => {
            crate::commands::require_input(path, "config file")?;
            let text = std::fs::read_to_string(path)?;
            let mut config: SynthesisConfig = serde_json::from_str(&text)
                .map_err(|e| Error::config(format!("config file {}: {e}", path.display())))?;
            if args.seed.is_some() {
                config.seed = seed;
            }
            (config, None)
        }
        _ => return Err(Error::config("exactly one of --profile or --config is required")),
    };

    let out = crate::commands::ensure_out_dir(&args.out)?;
    let dataset = synthesize_dataset(&config)?;
    let features = out.join("features.tsv");
    write_feature_path(&dataset, &features)?;

    let class_counts = match &args.profile {
        Some(p) => scaled_counts((*p).into(), scale)?.to_vec(),
        None => dataset.class_counts().to_vec(),
    };
    let manifest = SynthManifest {
        tool: manifest::TOOL,
        version: manifest::VERSION,
        command: "synth",
        profile: profile_name,
        scale,
        separation,
        class_counts,
        va_anchors: VA_ANCHORS.to_vec(),
        va_noise_stddev: VA_NOISE_STDDEV,
        config,
        output: features.display().to_string(),
    };
    manifest::write_json(&manifest, &out.join("manifest.json"))?;
    println!("wrote {} records to {}", dataset.len(), features.display());
    Ok(())
}
