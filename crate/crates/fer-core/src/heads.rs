//! Linear heads over frozen features: the general multi-output head, the
//! pairwise FC dictionary (stacked and detached), and restricted-argmax
//! pair evaluation through the general head.

use crate::dataset::{NUM_CLASSES, PairKey};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::losses::cosine_logits;
use crate::seed;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One affine (or hypersphere-normalized) layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    weights: Matrix,
    bias: Option<Vec<f64>>,
    normalized: bool,
    /// Cosine logit scale; only meaningful when `normalized`.
    scale: f64,
}

impl LinearHead {
    pub fn new(weights: Matrix, bias: Option<Vec<f64>>, normalized: bool, scale: f64) -> Result<Self> {
        if let Some(b) = &bias {
            if b.len() != weights.rows() {
                return Err(Error::config(format!(
                    "bias length {} != output dim {}",
                    b.len(),
                    weights.rows()
                )));
            }
            if normalized {
                return Err(Error::config("normalized head cannot carry a bias"));
            }
        }
        if normalized && !(scale > 0.0) {
            return Err(Error::config(format!("normalized head scale {scale} must be positive")));
        }
        Ok(LinearHead { weights, bias, normalized, scale })
    }

    /// Uniform init on `[-a, a]` with `a = init_range` (default `1/sqrt(d)`),
    /// zero bias. Deterministic given the seed.
    pub fn init(c_out: usize, d: usize, init_seed: u64, init_range: Option<f64>) -> Self {
        let a = init_range.unwrap_or(1.0 / (d as f64).sqrt());
        let mut rng = seed::rng(init_seed);
        let data = (0..c_out * d).map(|_| rng.random_range(-a..a)).collect();
        LinearHead {
            weights: Matrix::from_vec(c_out, d, data).expect("sized by construction"),
            bias: Some(vec![0.0; c_out]),
            normalized: false,
            scale: 1.0,
        }
    }

    /// Convert to a hypersphere-normalized head: bias dropped, forward
    /// becomes `scale * cos(theta_j)`.
    pub fn into_normalized(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::config(format!("scale {scale} must be positive")));
        }
        self.bias = None;
        self.normalized = true;
        self.scale = scale;
        Ok(self)
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub(crate) fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    pub(crate) fn bias_mut(&mut self) -> Option<&mut Vec<f64>> {
        self.bias.as_mut()
    }

    /// Raw head output: `Wx + b`, or `scale * cos(theta)` when normalized.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim() {
            return Err(Error::config(format!(
                "input dim {} != head input dim {}",
                x.len(),
                self.in_dim()
            )));
        }
        if self.normalized {
            return Ok(cosine_logits(x, &self.weights)?.iter().map(|c| c * self.scale).collect());
        }
        let mut out = self.weights.matvec(x);
        if let Some(b) = &self.bias {
            for (o, &bi) in out.iter_mut().zip(b) {
                *o += bi;
            }
        }
        Ok(out)
    }
}

/// The four-layer multi-output module over a shared input dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiOutputHead {
    pub expression: LinearHead,
    pub valence: LinearHead,
    pub arousal: LinearHead,
    pub landmarks: Option<LinearHead>,
}

/// Per-sample predictions of the four heads. Valence/arousal pass through
/// tanh so predictions respect `[-1, 1]`; landmarks are plain affine.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    pub expression_logits: Vec<f64>,
    pub valence: f64,
    pub arousal: f64,
    pub landmarks: Option<Vec<f64>>,
}

impl MultiOutputHead {
    /// Initialize all heads for `feature_dim` inputs. `landmark_dim = 0`
    /// omits the landmark head; `normalized_scale` switches the expression
    /// head to hypersphere mode.
    pub fn init(
        feature_dim: usize,
        landmark_dim: usize,
        init_seed: u64,
        normalized_scale: Option<f64>,
    ) -> Result<Self> {
        let expression = LinearHead::init(NUM_CLASSES, feature_dim, seed::mix(init_seed, 0), None);
        let expression = match normalized_scale {
            Some(s) => expression.into_normalized(s)?,
            None => expression,
        };
        Ok(MultiOutputHead {
            expression,
            valence: LinearHead::init(1, feature_dim, seed::mix(init_seed, 1), None),
            arousal: LinearHead::init(1, feature_dim, seed::mix(init_seed, 2), None),
            landmarks: (landmark_dim > 0)
                .then(|| LinearHead::init(landmark_dim, feature_dim, seed::mix(init_seed, 3), None)),
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.expression.in_dim()
    }

    pub fn forward(&self, x: &[f64]) -> Result<HeadOutputs> {
        Ok(HeadOutputs {
            expression_logits: self.expression.forward(x)?,
            valence: self.valence.forward(x)?[0].tanh(),
            arousal: self.arousal.forward(x)?[0].tanh(),
            landmarks: match &self.landmarks {
                Some(head) => Some(head.forward(x)?),
                None => None,
            },
        })
    }

    /// Predicted class: argmax over the 8 expression logits, ties to the
    /// lower index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax_tie_low(&self.expression.forward(x)?))
    }

    /// Restricted-argmax pair evaluation: compare only the pair's two
    /// entries of the 8-way logits; tie goes to `key.lo()`.
    pub fn pair_eval(&self, x: &[f64], key: PairKey) -> Result<usize> {
        let logits = self.expression.forward(x)?;
        Ok(if logits[key.hi()] > logits[key.lo()] { key.hi() } else { key.lo() })
    }
}

fn argmax_tie_low(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Whether pair heads consume the general head's logits or raw features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairMode {
    /// 8 -> 2 over the general expression logits.
    Stacked,
    /// D -> 2 over raw features, general head removed.
    Detached,
}

/// Map from class pair to its dedicated 2-way head.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseHeadDict {
    mode: PairMode,
    entries: BTreeMap<PairKey, LinearHead>,
}

impl PairwiseHeadDict {
    pub fn new(mode: PairMode) -> Self {
        PairwiseHeadDict { mode, entries: BTreeMap::new() }
    }

    pub fn mode(&self) -> PairMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &PairKey) -> Option<&LinearHead> {
        self.entries.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &PairKey> {
        self.entries.keys()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&PairKey, &LinearHead)> {
        self.entries.iter()
    }

    pub fn insert(&mut self, key: PairKey, head: LinearHead) -> Result<()> {
        if head.out_dim() != 2 {
            return Err(Error::config(format!("pair head must have 2 outputs, got {}", head.out_dim())));
        }
        if self.mode == PairMode::Stacked && head.in_dim() != NUM_CLASSES {
            return Err(Error::config(format!(
                "stacked pair head input must be {NUM_CLASSES}, got {}",
                head.in_dim()
            )));
        }
        self.entries.insert(key, head);
        Ok(())
    }

    /// Pair input as seen by the pair head: general logits when stacked,
    /// raw features when detached.
    pub fn pair_input(
        &self,
        general: Option<&MultiOutputHead>,
        x: &[f64],
    ) -> Result<Vec<f64>> {
        match self.mode {
            PairMode::Stacked => {
                let general = general
                    .ok_or_else(|| Error::config("stacked pair dictionary needs the general head"))?;
                general.expression.forward(x)
            }
            PairMode::Detached => Ok(x.to_vec()),
        }
    }

    /// 2-way logits for the pair; index 0 maps to `key.lo()`, 1 to `key.hi()`.
    pub fn forward(
        &self,
        general: Option<&MultiOutputHead>,
        x: &[f64],
        key: PairKey,
    ) -> Result<[f64; 2]> {
        let head = self
            .entries
            .get(&key)
            .ok_or_else(|| Error::config(format!("no pair head for {}", key.name())))?;
        let input = self.pair_input(general, x)?;
        let out = head.forward(&input)?;
        Ok([out[0], out[1]])
    }

    /// Predicted class for the pair; ties go to `key.lo()`.
    pub fn predict(
        &self,
        general: Option<&MultiOutputHead>,
        x: &[f64],
        key: PairKey,
    ) -> Result<usize> {
        let logits = self.forward(general, x, key)?;
        Ok(if logits[1] > logits[0] { key.hi() } else { key.lo() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_respects_range_and_seed() {
        let a = LinearHead::init(4, 16, 7, None);
        assert!(a.weights().iter().all(|v| v.abs() <= 0.25));
        assert_eq!(a.bias().unwrap(), &[0.0; 4]);
        let b = LinearHead::init(4, 16, 7, None);
        assert_eq!(a, b);
        let c = LinearHead::init(4, 16, 8, None);
        assert_ne!(a, c);
    }

    #[test]
    fn init_mean_is_near_zero() {
        let head = LinearHead::init(64, 64, 21, None);
        let n = 64.0 * 64.0;
        let mean: f64 = head.weights().iter().sum::<f64>() / n;
        // Uniform on [-a, a] has variance a^2/3; 3 sigma of the sample mean.
        let a = 1.0 / 8.0;
        let bound = 3.0 * a / (3.0f64 * n).sqrt();
        assert!(mean.abs() < bound, "mean {mean} vs bound {bound}");
    }

    #[test]
    fn zero_head_outputs_zero_and_tanh_zero() {
        let head = MultiOutputHead {
            expression: LinearHead::new(Matrix::zeros(NUM_CLASSES, 3), Some(vec![0.0; NUM_CLASSES]), false, 1.0).unwrap(),
            valence: LinearHead::new(Matrix::zeros(1, 3), Some(vec![0.0]), false, 1.0).unwrap(),
            arousal: LinearHead::new(Matrix::zeros(1, 3), Some(vec![0.0]), false, 1.0).unwrap(),
            landmarks: None,
        };
        let out = head.forward(&[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(out.expression_logits, vec![0.0; NUM_CLASSES]);
        assert_eq!(out.valence, 0.0);
        assert_eq!(out.arousal, 0.0);
        assert!(out.landmarks.is_none());
    }

    #[test]
    fn normalized_head_hits_scale_on_parallel_input() {
        let mut w = Matrix::zeros(NUM_CLASSES, 4);
        for j in 0..NUM_CLASSES {
            w.row_mut(j)[j % 4] = 1.0 + j as f64;
        }
        let head = LinearHead::new(w, None, true, 20.0).unwrap();
        let x = [0.0, 3.0, 0.0, 0.0]; // parallel to row 1
        let logits = head.forward(&x).unwrap();
        assert!((logits[1] - 20.0).abs() < 1e-12);
        // Positive rescaling leaves normalized logits unchanged.
        let x2 = [0.0, 6.0, 0.0, 0.0];
        let logits2 = head.forward(&x2).unwrap();
        for (a, b) in logits.iter().zip(&logits2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn normalized_head_rejects_bias() {
        let w = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(LinearHead::new(w, Some(vec![0.0, 0.0]), true, 10.0).is_err());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let head = LinearHead::init(2, 3, 0, None);
        assert!(head.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn pair_eval_restricts_to_the_pair() {
        // Logits peak at class 0, but within (2, 5) class 2 wins.
        let mut w = Matrix::zeros(NUM_CLASSES, 2);
        w.row_mut(0)[0] = 5.0;
        w.row_mut(2)[0] = 2.0;
        w.row_mut(5)[0] = 1.0;
        let head = MultiOutputHead {
            expression: LinearHead::new(w, None, false, 1.0).unwrap(),
            valence: LinearHead::init(1, 2, 1, None),
            arousal: LinearHead::init(1, 2, 2, None),
            landmarks: None,
        };
        let key = PairKey::new(2, 5).unwrap();
        assert_eq!(head.pair_eval(&[1.0, 0.0], key).unwrap(), 2);
        assert_eq!(head.predict(&[1.0, 0.0]).unwrap(), 0);
        // Equal logits tie to lo: an input orthogonal to every row.
        assert_eq!(head.pair_eval(&[0.0, 1.0], key).unwrap(), 2);
    }

    #[test]
    fn detached_zero_pair_head_ties_to_lo() {
        let key = PairKey::new(4, 7).unwrap();
        let mut dict = PairwiseHeadDict::new(PairMode::Detached);
        dict.insert(key, LinearHead::new(Matrix::zeros(2, 3), Some(vec![0.0, 0.0]), false, 1.0).unwrap())
            .unwrap();
        let logits = dict.forward(None, &[1.0, 2.0, 3.0], key).unwrap();
        assert_eq!(logits, [0.0, 0.0]);
        assert_eq!(dict.predict(None, &[1.0, 2.0, 3.0], key).unwrap(), 4);
    }

    #[test]
    fn stacked_selector_head_reduces_to_restricted_logits() {
        let general = MultiOutputHead::init(5, 0, 3, None).unwrap();
        let key = PairKey::new(1, 6).unwrap();
        // Pair head picking out rows lo and hi of the general logits.
        let mut w = Matrix::zeros(2, NUM_CLASSES);
        w.row_mut(0)[1] = 1.0;
        w.row_mut(1)[6] = 1.0;
        let mut dict = PairwiseHeadDict::new(PairMode::Stacked);
        dict.insert(key, LinearHead::new(w, Some(vec![0.0, 0.0]), false, 1.0).unwrap()).unwrap();
        let x = [0.3, -0.7, 0.2, 0.9, -0.1];
        let general_logits = general.expression.forward(&x).unwrap();
        let pair_logits = dict.forward(Some(&general), &x, key).unwrap();
        assert_eq!(pair_logits, [general_logits[1], general_logits[6]]);
        assert_eq!(
            dict.predict(Some(&general), &x, key).unwrap(),
            general.pair_eval(&x, key).unwrap()
        );
    }

    #[test]
    fn stacked_mode_requires_general_head() {
        let key = PairKey::new(0, 1).unwrap();
        let mut dict = PairwiseHeadDict::new(PairMode::Stacked);
        dict.insert(key, LinearHead::init(2, NUM_CLASSES, 0, None)).unwrap();
        assert!(dict.forward(None, &[0.0; NUM_CLASSES], key).is_err());
    }

    #[test]
    fn missing_key_is_an_error() {
        let dict = PairwiseHeadDict::new(PairMode::Detached);
        let key = PairKey::new(0, 1).unwrap();
        assert!(dict.forward(None, &[1.0], key).is_err());
    }

    #[test]
    fn insert_validates_shapes() {
        let mut dict = PairwiseHeadDict::new(PairMode::Stacked);
        let key = PairKey::new(0, 1).unwrap();
        assert!(dict.insert(key, LinearHead::init(2, 4, 0, None)).is_err());
        assert!(dict.insert(key, LinearHead::init(3, NUM_CLASSES, 0, None)).is_err());
        assert!(dict.insert(key, LinearHead::init(2, NUM_CLASSES, 0, None)).is_ok());
    }
}
