//! Frozen-backbone facial-expression head training.
//!
//! Everything operates on precomputed (or synthetic) embedding vectors:
//! margin and regression losses with analytic gradients, imbalance-aware
//! samplers, multi-output and pairwise-dictionary heads, Adam with
//! reduce-on-plateau scheduling, and the metrics/report pipeline.

pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod featurefile;
pub mod gradcheck;
pub mod heads;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod sampling;
pub mod seed;
pub mod synth;
pub mod training;

pub use dataset::{CLASS_NAMES, Dataset, FeatureRecord, NUM_CLASSES, PairKey};
pub use error::{Error, Result};
pub use heads::{HeadOutputs, LinearHead, MultiOutputHead, PairMode, PairwiseHeadDict};
pub use losses::{AamParams, LossWeights, RegressionMode, SignedMseParams, TargetBundle};
pub use metrics::{ConfusionMatrix, GeneralReport, PairwiseReport, ReportFormat};
pub use sampling::{SamplerSpec, SamplerVariant};
pub use synth::{CountProfile, SynthesisConfig};
pub use training::{EpochStats, ExpressionLoss, TrainConfig, train_general, train_pairwise};
