//! Adam with L2 weight decay, reduce-on-plateau scheduling, and the two
//! training drivers (general multi-head, pairwise dictionary). Everything
//! is deterministic under the config seed; the feature data is never
//! mutated (the backbone stays frozen).

use crate::dataset::{Dataset, PairKey};
use crate::error::{Error, Result};
use crate::heads::{LinearHead, MultiOutputHead, PairMode, PairwiseHeadDict};
use crate::linalg::{Matrix, add_scaled, add_scaled_outer};
use crate::losses::{
    AamParams, CombinedLoss, LossWeights, RegressionMode, TargetBundle, aam_loss, combined_loss,
    softmax_ce,
};
use crate::sampling::{SamplerSpec, SamplerVariant, draw_epoch};
use crate::seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Adam accumulators for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState { m: vec![0.0; len], v: vec![0.0; len], t: 0, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update: `g' = g + weight_decay * p`, bias-corrected moments,
/// `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::config(format!(
            "adam shapes disagree: {} params, {} grads, {} state",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if let Some(bad) = grads.iter().find(|g| !g.is_finite()) {
        return Err(Error::numeric(format!("non-finite gradient {bad} at step {}", state.t + 1)));
    }
    state.t += 1;
    let bc1 = 1.0 - state.beta1.powi(state.t as i32);
    let bc2 = 1.0 - state.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i] + weight_decay * params[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

/// Reduce-on-plateau state. An epoch improves when its metric drops below
/// `best * (1 - threshold)`; after `patience` epochs without improvement the
/// rate is multiplied by `factor` (floored at `min_lr`) and the counter
/// resets. The rate never increases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RopState {
    current_lr: f64,
    best_metric: f64,
    epochs_since_improvement: usize,
    pub patience: usize,
    pub factor: f64,
    pub threshold: f64,
    pub min_lr: f64,
}

impl RopState {
    pub fn new(initial_lr: f64, patience: usize, factor: f64) -> Result<Self> {
        if !(initial_lr > 0.0) || !initial_lr.is_finite() {
            return Err(Error::config(format!("initial lr {initial_lr} must be positive")));
        }
        if patience == 0 {
            return Err(Error::config("patience must be at least 1"));
        }
        if !(factor > 0.0 && factor < 1.0) {
            return Err(Error::config(format!("factor {factor} outside (0, 1)")));
        }
        Ok(RopState {
            current_lr: initial_lr,
            best_metric: f64::INFINITY,
            epochs_since_improvement: 0,
            patience,
            factor,
            threshold: 1e-4,
            min_lr: 1e-8,
        })
    }

    pub fn lr(&self) -> f64 {
        self.current_lr
    }

    pub fn update(&mut self, epoch_metric: f64) -> Result<()> {
        if !epoch_metric.is_finite() {
            return Err(Error::numeric(format!("plateau metric {epoch_metric} not finite")));
        }
        if epoch_metric < self.best_metric * (1.0 - self.threshold) {
            self.best_metric = epoch_metric;
            self.epochs_since_improvement = 0;
        } else {
            self.epochs_since_improvement += 1;
            if self.epochs_since_improvement >= self.patience {
                self.current_lr = (self.current_lr * self.factor).max(self.min_lr);
                self.epochs_since_improvement = 0;
            }
        }
        Ok(())
    }
}

/// Which loss trains the expression head. AAM implies a hypersphere-
/// normalized head without bias; softmax CE uses a plain affine head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpressionLoss {
    SoftmaxCe,
    Aam(AamParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RopMonitor {
    TrainLoss,
    ValLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RopConfig {
    pub patience: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub sampler: SamplerVariant,
    pub expression_loss: ExpressionLoss,
    pub regression: RegressionMode,
    pub loss_weights: LossWeights,
    pub rop: RopConfig,
    pub monitor: RopMonitor,
}

impl Default for TrainConfig {
    /// The pairwise-training hyperparameters: 30 epochs, lr 1e-4, plateau
    /// factor 0.25 with patience 5, weight decay 5e-4, batch size 256.
    fn default() -> Self {
        TrainConfig {
            initial_lr: 1e-4,
            epochs: 30,
            batch_size: 256,
            weight_decay: 5e-4,
            seed: 0,
            sampler: SamplerVariant::Natural,
            expression_loss: ExpressionLoss::SoftmaxCe,
            regression: RegressionMode::SignedMse(Default::default()),
            loss_weights: LossWeights::default(),
            rop: RopConfig { patience: 5, factor: 0.25 },
            monitor: RopMonitor::TrainLoss,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0) || !self.initial_lr.is_finite() {
            return Err(Error::config(format!("learning rate {} must be positive", self.initial_lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::config(format!("weight decay {} must be non-negative", self.weight_decay)));
        }
        if let ExpressionLoss::Aam(params) = self.expression_loss {
            AamParams::new(params.scale, params.margin)?;
        }
        RopState::new(self.initial_lr, self.rop.patience, self.rop.factor)?;
        Ok(())
    }
}

/// One epoch of the general training history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub lr: f64,
}

/// One epoch of a single pair head's history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairEpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub lr: f64,
}

struct HeadOptimizer {
    weights: AdamState,
    bias: Option<AdamState>,
}

impl HeadOptimizer {
    fn for_head(head: &LinearHead) -> Self {
        HeadOptimizer {
            weights: AdamState::new(head.weights().rows() * head.weights().cols()),
            bias: head.bias().map(|b| AdamState::new(b.len())),
        }
    }

    fn step(
        &mut self,
        head: &mut LinearHead,
        grad_w: &Matrix,
        grad_b: Option<&[f64]>,
        lr: f64,
        weight_decay: f64,
    ) -> Result<()> {
        adam_step(head.weights_mut().as_mut_slice(), grad_w.as_slice(), &mut self.weights, lr, weight_decay)?;
        if let (Some(bias), Some(gb), Some(state)) = (head.bias_mut(), grad_b, self.bias.as_mut()) {
            adam_step(bias, gb, state, lr, weight_decay)?;
        }
        Ok(())
    }
}

/// Batch loss and the accumulated parameter gradients for the general head.
struct GeneralBatch {
    loss: f64,
    grad_expr_w: Matrix,
    grad_expr_b: Vec<f64>,
    grad_val_w: Matrix,
    grad_val_b: Vec<f64>,
    grad_ar_w: Matrix,
    grad_ar_b: Vec<f64>,
    grad_lm: Option<(Matrix, Vec<f64>)>,
}

fn general_batch(
    head: &MultiOutputHead,
    train: &Dataset,
    batch: &[usize],
    config: &TrainConfig,
) -> Result<GeneralBatch> {
    let d = head.feature_dim();
    let n = batch.len() as f64;
    let mut outputs = Vec::with_capacity(batch.len());
    let mut targets = Vec::with_capacity(batch.len());
    for &i in batch {
        let rec = &train.records()[i];
        outputs.push(head.forward(&rec.features)?);
        targets.push(TargetBundle::from(rec));
    }

    // Under AAM the expression term is computed from (x, W) directly, so
    // zero its weight in the combined pass and add the margin term after.
    let mut weights = config.loss_weights;
    if matches!(config.expression_loss, ExpressionLoss::Aam(_)) {
        weights.expression = 0.0;
    }
    let combined: CombinedLoss = combined_loss(&outputs, &targets, &config.regression, &weights)?;

    let mut grad_expr_w = Matrix::zeros(head.expression.out_dim(), d);
    let mut grad_expr_b = vec![0.0; head.expression.out_dim()];
    let mut loss = combined.value;
    match config.expression_loss {
        ExpressionLoss::SoftmaxCe => {
            for (gi, &i) in combined.grad_expression_logits.iter().zip(batch) {
                let x = &train.records()[i].features;
                add_scaled_outer(&mut grad_expr_w, 1.0, gi, x);
                add_scaled(&mut grad_expr_b, 1.0, gi);
            }
        }
        ExpressionLoss::Aam(params) => {
            let w_e = config.loss_weights.expression;
            let mut term = 0.0;
            for (tgt, &i) in targets.iter().zip(batch) {
                let x = &train.records()[i].features;
                let aam = aam_loss(x, head.expression.weights(), tgt.expression, &params)?;
                term += aam.value / n;
                for r in 0..grad_expr_w.rows() {
                    add_scaled(grad_expr_w.row_mut(r), w_e / n, aam.grad_w.row(r));
                }
            }
            loss += w_e * term;
        }
    }

    let mut grad_val_w = Matrix::zeros(1, d);
    let mut grad_val_b = vec![0.0; 1];
    let mut grad_ar_w = Matrix::zeros(1, d);
    let mut grad_ar_b = vec![0.0; 1];
    for (k, &i) in batch.iter().enumerate() {
        let x = &train.records()[i].features;
        // Chain through tanh: d(tanh u)/du = 1 - tanh^2 u.
        let gv = combined.grad_valence[k] * (1.0 - outputs[k].valence * outputs[k].valence);
        add_scaled(grad_val_w.row_mut(0), gv, x);
        grad_val_b[0] += gv;
        let ga = combined.grad_arousal[k] * (1.0 - outputs[k].arousal * outputs[k].arousal);
        add_scaled(grad_ar_w.row_mut(0), ga, x);
        grad_ar_b[0] += ga;
    }

    let grad_lm = match (&head.landmarks, &combined.grad_landmarks) {
        (Some(lm_head), Some(grads)) => {
            let mut gw = Matrix::zeros(lm_head.out_dim(), d);
            let mut gb = vec![0.0; lm_head.out_dim()];
            for (gi, &i) in grads.iter().zip(batch) {
                let x = &train.records()[i].features;
                add_scaled_outer(&mut gw, 1.0, gi, x);
                add_scaled(&mut gb, 1.0, gi);
            }
            Some((gw, gb))
        }
        _ => None,
    };

    Ok(GeneralBatch {
        loss,
        grad_expr_w,
        grad_expr_b,
        grad_val_w,
        grad_val_b,
        grad_ar_w,
        grad_ar_b,
        grad_lm,
    })
}

/// Loss (per the training config) and accuracy over a dataset, evaluated in
/// natural order as one batch. Accuracy always uses margin-free argmax.
fn evaluate_loss_accuracy(
    head: &MultiOutputHead,
    data: &Dataset,
    config: &TrainConfig,
) -> Result<(f64, f64)> {
    let mut outputs = Vec::with_capacity(data.len());
    let mut targets = Vec::with_capacity(data.len());
    let mut correct = 0usize;
    for rec in data.records() {
        let out = head.forward(&rec.features)?;
        let pred = argmax(&out.expression_logits);
        if pred == rec.expression {
            correct += 1;
        }
        outputs.push(out);
        targets.push(TargetBundle::from(rec));
    }
    let mut weights = config.loss_weights;
    if matches!(config.expression_loss, ExpressionLoss::Aam(_)) {
        weights.expression = 0.0;
    }
    let mut loss = combined_loss(&outputs, &targets, &config.regression, &weights)?.value;
    if let ExpressionLoss::Aam(params) = config.expression_loss {
        let mut term = 0.0;
        for rec in data.records() {
            term += aam_loss(&rec.features, head.expression.weights(), rec.expression, &params)?.value;
        }
        loss += config.loss_weights.expression * term / data.len() as f64;
    }
    Ok((loss, correct as f64 / data.len() as f64))
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Train the general multi-output head. Returns the head and the per-epoch
/// history (one entry per epoch: train loss, val loss, val accuracy, lr).
pub fn train_general(
    train: &Dataset,
    val: &Dataset,
    config: &TrainConfig,
) -> Result<(MultiOutputHead, Vec<EpochStats>)> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::data("training and validation sets must be non-empty"));
    }
    if train.feature_dim() != val.feature_dim() {
        return Err(Error::data(format!(
            "feature dims disagree: train {} vs val {}",
            train.feature_dim(),
            val.feature_dim()
        )));
    }

    let normalized_scale = match config.expression_loss {
        ExpressionLoss::Aam(params) => Some(params.scale),
        ExpressionLoss::SoftmaxCe => None,
    };
    let mut head =
        MultiOutputHead::init(train.feature_dim(), train.landmark_dim(), seed::mix(config.seed, 0x11ead), normalized_scale)?;

    let mut opt_expr = HeadOptimizer::for_head(&head.expression);
    let mut opt_val = HeadOptimizer::for_head(&head.valence);
    let mut opt_ar = HeadOptimizer::for_head(&head.arousal);
    let mut opt_lm = head.landmarks.as_ref().map(HeadOptimizer::for_head);

    let mut rop = RopState::new(config.initial_lr, config.rop.patience, config.rop.factor)?;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = rop.lr();
        let spec = SamplerSpec { variant: config.sampler, seed: seed::mix(config.seed, epoch as u64) };
        let indices = draw_epoch(train, &spec)?;
        let mut epoch_loss = 0.0;
        for (batch_no, batch) in indices.chunks(config.batch_size).enumerate() {
            let grads = general_batch(&head, train, batch, config).map_err(|e| {
                Error::numeric(format!("epoch {epoch} batch {batch_no}: {e}"))
            })?;
            if !grads.loss.is_finite() {
                return Err(Error::numeric(format!(
                    "epoch {epoch} batch {batch_no}: loss {} not finite",
                    grads.loss
                )));
            }
            epoch_loss += grads.loss * batch.len() as f64;
            opt_expr.step(&mut head.expression, &grads.grad_expr_w, Some(&grads.grad_expr_b), lr, config.weight_decay)?;
            opt_val.step(&mut head.valence, &grads.grad_val_w, Some(&grads.grad_val_b), lr, config.weight_decay)?;
            opt_ar.step(&mut head.arousal, &grads.grad_ar_w, Some(&grads.grad_ar_b), lr, config.weight_decay)?;
            if let (Some(lm_head), Some((gw, gb)), Some(opt)) =
                (head.landmarks.as_mut(), grads.grad_lm.as_ref(), opt_lm.as_mut())
            {
                opt.step(lm_head, gw, Some(gb), lr, config.weight_decay)?;
            }
        }
        let train_loss = epoch_loss / indices.len() as f64;
        let (val_loss, val_accuracy) = evaluate_loss_accuracy(&head, val, config)?;
        history.push(EpochStats { epoch, train_loss, val_loss, val_accuracy, lr });
        let metric = match config.monitor {
            RopMonitor::TrainLoss => train_loss,
            RopMonitor::ValLoss => val_loss,
        };
        rop.update(metric)?;
    }
    Ok((head, history))
}

/// Result of pairwise dictionary training.
#[derive(Debug)]
pub struct PairTrainOutcome {
    pub dict: PairwiseHeadDict,
    pub histories: BTreeMap<PairKey, Vec<PairEpochStats>>,
    /// Pairs skipped because one of their classes is absent from the data.
    pub skipped: Vec<PairKey>,
}

fn train_single_pair(
    train: &Dataset,
    key: PairKey,
    general: Option<&MultiOutputHead>,
    config: &TrainConfig,
    mode: PairMode,
) -> Result<(LinearHead, Vec<PairEpochStats>)> {
    let pair_seed = seed::mix_pair(config.seed, key.lo(), key.hi());
    let in_dim = match mode {
        PairMode::Stacked => crate::dataset::NUM_CLASSES,
        PairMode::Detached => train.feature_dim(),
    };
    let mut head = LinearHead::init(2, in_dim, seed::mix(pair_seed, 0x11ead), None);
    let mut opt = HeadOptimizer::for_head(&head);
    let mut rop = RopState::new(config.initial_lr, config.rop.patience, config.rop.factor)?;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = rop.lr();
        let spec = SamplerSpec {
            variant: SamplerVariant::PairBalanced { key },
            seed: seed::mix(pair_seed, epoch as u64),
        };
        let indices = draw_epoch(train, &spec)?;
        let mut epoch_loss = 0.0;
        for (batch_no, batch) in indices.chunks(config.batch_size).enumerate() {
            let n = batch.len() as f64;
            let mut grad_w = Matrix::zeros(2, in_dim);
            let mut grad_b = vec![0.0; 2];
            let mut batch_loss = 0.0;
            for &i in batch {
                let rec = &train.records()[i];
                let input = match mode {
                    PairMode::Stacked => general
                        .expect("stacked mode validated to carry a general head")
                        .expression
                        .forward(&rec.features)?,
                    PairMode::Detached => rec.features.clone(),
                };
                let target = usize::from(rec.expression == key.hi());
                let logits = head.forward(&input)?;
                let ce = softmax_ce(&logits, target)?;
                batch_loss += ce.value / n;
                let g: Vec<f64> = ce.grad.iter().map(|v| v / n).collect();
                add_scaled_outer(&mut grad_w, 1.0, &g, &input);
                add_scaled(&mut grad_b, 1.0, &g);
            }
            if !batch_loss.is_finite() {
                return Err(Error::numeric(format!(
                    "pair {} epoch {epoch} batch {batch_no}: loss {batch_loss} not finite",
                    key.name()
                )));
            }
            epoch_loss += batch_loss * n;
            opt.step(&mut head, &grad_w, Some(&grad_b), lr, config.weight_decay)?;
        }
        let train_loss = epoch_loss / indices.len() as f64;
        history.push(PairEpochStats { epoch, train_loss, lr });
        rop.update(train_loss)?;
    }
    Ok((head, history))
}

/// Train one pair head per key with pair-balanced sampling and 2-class
/// cross-entropy. Pairs whose classes are absent are skipped and reported.
/// `jobs > 1` runs pairs in parallel; per-pair seeds derive from
/// `(config.seed, key)`, so results do not depend on scheduling.
pub fn train_pairwise(
    train: &Dataset,
    keys: &[PairKey],
    general: Option<&MultiOutputHead>,
    config: &TrainConfig,
    mode: PairMode,
    jobs: usize,
) -> Result<PairTrainOutcome> {
    config.validate()?;
    if mode == PairMode::Stacked {
        let general = general.ok_or_else(|| Error::config("stacked mode requires a general head"))?;
        if general.feature_dim() != train.feature_dim() {
            return Err(Error::data(format!(
                "general head dim {} != dataset dim {}",
                general.feature_dim(),
                train.feature_dim()
            )));
        }
    }

    let unique: Vec<PairKey> = keys.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let mut runnable = Vec::new();
    let mut skipped = Vec::new();
    for key in unique {
        let counts = train.class_counts();
        if counts[key.lo()] == 0 || counts[key.hi()] == 0 {
            skipped.push(key);
        } else {
            runnable.push(key);
        }
    }

    let run = |key: &PairKey| -> Result<(PairKey, LinearHead, Vec<PairEpochStats>)> {
        let (head, history) = train_single_pair(train, *key, general, config, mode)?;
        Ok((*key, head, history))
    };
    let results: Vec<Result<(PairKey, LinearHead, Vec<PairEpochStats>)>> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?;
        pool.install(|| runnable.par_iter().map(run).collect())
    } else {
        runnable.iter().map(run).collect()
    };

    let mut dict = PairwiseHeadDict::new(mode);
    let mut histories = BTreeMap::new();
    for result in results {
        let (key, head, history) = result?;
        dict.insert(key, head)?;
        histories.insert(key, history);
    }
    Ok(PairTrainOutcome { dict, histories, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{ClassSynthSpec, SynthesisConfig, synthesize_dataset};

    #[test]
    fn adam_zero_grad_is_a_fixed_point() {
        let mut params = vec![0.3, -0.7, 2.5];
        let before = params.clone();
        let mut state = AdamState::new(3);
        adam_step(&mut params, &[0.0; 3], &mut state, 0.1, 0.0).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn first_adam_step_is_signed_lr() {
        let mut params = vec![1.0, 1.0, 1.0];
        let mut state = AdamState::new(3);
        adam_step(&mut params, &[0.5, -3.0, 1e-3], &mut state, 0.01, 0.0).unwrap();
        // Bias correction cancels the magnitude up to epsilon.
        assert!((params[0] - (1.0 - 0.01)).abs() < 1e-6);
        assert!((params[1] - (1.0 + 0.01)).abs() < 1e-6);
        assert!((params[2] - (1.0 - 0.01)).abs() < 1e-4);
    }

    #[test]
    fn adam_rejects_non_finite_grads() {
        let mut params = vec![1.0];
        let mut state = AdamState::new(1);
        let err = adam_step(&mut params, &[f64::NAN], &mut state, 0.1, 0.0).unwrap_err();
        assert!(err.to_string().contains("non-finite gradient"), "{err}");
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut params = vec![0.5, -0.5];
            let mut state = AdamState::new(2);
            for i in 0..50 {
                let g = [(i as f64).sin(), (i as f64).cos()];
                adam_step(&mut params, &g, &mut state, 0.01, 1e-4).unwrap();
            }
            params
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rop_never_reduces_while_improving() {
        let mut rop = RopState::new(0.01, 5, 0.25).unwrap();
        let mut loss = 100.0;
        for _ in 0..40 {
            rop.update(loss).unwrap();
            loss *= 0.9;
        }
        assert_eq!(rop.lr(), 0.01);
    }

    #[test]
    fn rop_quarter_factor_schedule() {
        // Constant loss, patience 5, factor 0.25, lr 0.01: the reduction
        // fires on update index 5 (the first update records the best).
        let mut rop = RopState::new(0.01, 5, 0.25).unwrap();
        let mut lr_at = Vec::new();
        for _ in 0..=10 {
            rop.update(1.0).unwrap();
            lr_at.push(rop.lr());
        }
        assert_eq!(lr_at[4], 0.01);
        assert_eq!(lr_at[5], 0.0025);
        assert_eq!(lr_at[9], 0.0025);
        assert_eq!(lr_at[10], 0.000625);
    }

    #[test]
    fn rop_tenth_factor_schedule() {
        // Factor-10 reduction semantics from 0.128.
        let mut rop = RopState::new(0.128, 5, 0.1).unwrap();
        for i in 0..=10 {
            rop.update(2.5).unwrap();
            if i == 5 {
                assert!((rop.lr() - 0.0128).abs() < 1e-15);
            }
        }
        assert!((rop.lr() - 0.00128).abs() < 1e-15);
    }

    #[test]
    fn rop_floors_at_min_lr_and_never_increases() {
        let mut rop = RopState::new(1e-7, 1, 0.1).unwrap();
        let mut last = rop.lr();
        for _ in 0..10 {
            rop.update(1.0).unwrap();
            assert!(rop.lr() <= last);
            last = rop.lr();
        }
        assert_eq!(rop.lr(), 1e-8);
    }

    #[test]
    fn rop_rejects_bad_config_and_metric() {
        assert!(RopState::new(0.0, 5, 0.25).is_err());
        assert!(RopState::new(0.01, 0, 0.25).is_err());
        assert!(RopState::new(0.01, 5, 1.0).is_err());
        let mut rop = RopState::new(0.01, 5, 0.25).unwrap();
        assert!(rop.update(f64::NAN).is_err());
    }

    /// Two linearly separable Gaussian classes. Means sit on different
    /// axes away from the origin so both affine and hypersphere heads can
    /// separate them.
    fn separable_dataset(seed: u64, per_class: usize) -> Dataset {
        let dim = 16;
        let mean = |axis: usize| {
            let mut m = vec![0.0; dim];
            m[axis] = 6.0;
            m
        };
        let config = SynthesisConfig {
            feature_dim: dim,
            seed,
            classes: vec![
                ClassSynthSpec { class: 0, count: per_class, mean: mean(0), stddev: 1.0 },
                ClassSynthSpec { class: 1, count: per_class, mean: mean(1), stddev: 1.0 },
            ],
        };
        synthesize_dataset(&config).unwrap()
    }

    fn fast_config() -> TrainConfig {
        TrainConfig {
            initial_lr: 0.05,
            epochs: 10,
            batch_size: 64,
            weight_decay: 5e-4,
            seed: 7,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn separable_data_trains_to_high_accuracy() {
        let data = separable_dataset(3, 500);
        let (train, val) = data.split(0.8, 5).unwrap();
        let (head, history) = train_general(&train, &val, &fast_config()).unwrap();
        assert_eq!(history.len(), 10);
        assert!(history.last().unwrap().val_accuracy >= 0.99, "{:?}", history.last());
        // Sanity: the trained head predicts within the present classes.
        let pred = head.predict(&val.records()[0].features).unwrap();
        assert!(pred < 2);
    }

    #[test]
    fn aam_expression_loss_also_learns() {
        let data = separable_dataset(4, 300);
        let (train, val) = data.split(0.8, 6).unwrap();
        let config = TrainConfig {
            expression_loss: ExpressionLoss::Aam(AamParams::new(16.0, 0.3).unwrap()),
            ..fast_config()
        };
        let (head, history) = train_general(&train, &val, &config).unwrap();
        assert!(head.expression.is_normalized());
        assert!(head.expression.bias().is_none());
        assert!(history.last().unwrap().val_accuracy >= 0.98, "{:?}", history.last());
    }

    #[test]
    fn zero_epochs_returns_initialized_head() {
        let data = separable_dataset(5, 20);
        let (train, val) = data.split(0.5, 1).unwrap();
        let config = TrainConfig { epochs: 0, ..fast_config() };
        let (head, history) = train_general(&train, &val, &config).unwrap();
        assert!(history.is_empty());
        let fresh = MultiOutputHead::init(
            train.feature_dim(),
            train.landmark_dim(),
            seed::mix(config.seed, 0x11ead),
            None,
        )
        .unwrap();
        assert_eq!(head, fresh);
    }

    #[test]
    fn history_carries_the_contracted_fields() {
        let data = separable_dataset(6, 50);
        let (train, val) = data.split(0.8, 2).unwrap();
        let config = TrainConfig { epochs: 3, ..fast_config() };
        let (_, history) = train_general(&train, &val, &config).unwrap();
        assert_eq!(history.len(), 3);
        for (i, e) in history.iter().enumerate() {
            assert_eq!(e.epoch, i);
            assert!(e.train_loss.is_finite());
            assert!(e.val_loss.is_finite());
            assert!((0.0..=1.0).contains(&e.val_accuracy));
            assert_eq!(e.lr, 0.05);
        }
    }

    #[test]
    fn training_is_bitwise_deterministic_and_never_mutates_data() {
        let data = separable_dataset(8, 60);
        let (train, val) = data.split(0.8, 3).unwrap();
        let before = train.clone();
        let config = TrainConfig { epochs: 4, ..fast_config() };
        let (head_a, hist_a) = train_general(&train, &val, &config).unwrap();
        let (head_b, hist_b) = train_general(&train, &val, &config).unwrap();
        assert_eq!(head_a, head_b);
        assert_eq!(hist_a, hist_b);
        assert_eq!(train, before, "training must not touch the features");
    }

    #[test]
    fn train_loss_moving_average_decreases() {
        let data = separable_dataset(9, 250);
        let (train, val) = data.split(0.8, 4).unwrap();
        let config = TrainConfig { epochs: 12, ..fast_config() };
        let (_, history) = train_general(&train, &val, &config).unwrap();
        let avg = |w: &[EpochStats]| w.iter().map(|e| e.train_loss).sum::<f64>() / w.len() as f64;
        let windows: Vec<f64> = history.windows(5).map(avg).collect();
        for pair in windows.windows(2) {
            assert!(pair[1] <= pair[0] * 1.02, "moving average rose: {windows:?}");
        }
    }

    #[test]
    fn pairwise_empty_keys_and_skipped_pairs() {
        let data = separable_dataset(10, 30);
        let out = train_pairwise(&data, &[], None, &fast_config(), PairMode::Detached, 1).unwrap();
        assert!(out.dict.is_empty());
        // Class 5 is absent, so (0, 5) must be skipped.
        let keys = [PairKey::new(0, 1).unwrap(), PairKey::new(0, 5).unwrap()];
        let config = TrainConfig { epochs: 2, ..fast_config() };
        let out = train_pairwise(&data, &keys, None, &config, PairMode::Detached, 1).unwrap();
        assert_eq!(out.dict.len(), 1);
        assert_eq!(out.skipped, vec![PairKey::new(0, 5).unwrap()]);
        assert_eq!(out.histories[&keys[0]].len(), 2);
    }

    #[test]
    fn pairwise_separable_pair_reaches_high_accuracy() {
        let data = separable_dataset(11, 300);
        let (train, val) = data.split(0.8, 7).unwrap();
        let key = PairKey::new(0, 1).unwrap();
        let config = TrainConfig { epochs: 8, ..fast_config() };
        let out = train_pairwise(&train, &[key], None, &config, PairMode::Detached, 1).unwrap();
        let mut correct = 0;
        for rec in val.records() {
            if out.dict.predict(None, &rec.features, key).unwrap() == rec.expression {
                correct += 1;
            }
        }
        let accuracy = correct as f64 / val.len() as f64;
        assert!(accuracy >= 0.99, "pair accuracy {accuracy}");
    }

    #[test]
    fn stacked_mode_requires_general() {
        let data = separable_dataset(12, 20);
        let key = PairKey::new(0, 1).unwrap();
        let err = train_pairwise(&data, &[key], None, &fast_config(), PairMode::Stacked, 1).unwrap_err();
        assert!(err.to_string().contains("general head"), "{err}");
    }

    #[test]
    fn parallel_pairwise_matches_sequential() {
        let data = separable_dataset(13, 40);
        let keys = [PairKey::new(0, 1).unwrap()];
        let config = TrainConfig { epochs: 2, ..fast_config() };
        let seq = train_pairwise(&data, &keys, None, &config, PairMode::Detached, 1).unwrap();
        let par = train_pairwise(&data, &keys, None, &config, PairMode::Detached, 4).unwrap();
        assert_eq!(seq.dict, par.dict);
        assert_eq!(seq.histories, par.histories);
    }

    #[test]
    fn default_config_mirrors_pair_training_settings() {
        let c = TrainConfig::default();
        assert_eq!(c.epochs, 30);
        assert_eq!(c.initial_lr, 1e-4);
        assert_eq!(c.rop.factor, 0.25);
        assert_eq!(c.rop.patience, 5);
        assert_eq!(c.weight_decay, 5e-4);
        assert_eq!(c.batch_size, 256);
        c.validate().unwrap();
    }
}
