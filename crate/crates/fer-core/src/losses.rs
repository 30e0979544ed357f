//! Loss functions with forward values and analytic gradients: softmax
//! cross-entropy, additive angular margin over hypersphere-normalized
//! features, signed MSE, Pearson correlation loss, and their four-head sum.

use crate::dataset::FeatureRecord;
use crate::error::{Error, Result};
use crate::heads::HeadOutputs;
use crate::linalg::{Matrix, add_scaled, dot, norm};
use serde::{Deserialize, Serialize};

/// Cosines are kept this far away from the poles so the margin derivative
/// `1/sin(theta)` stays finite.
const COS_CLAMP_EPS: f64 = 1e-7;

/// Additive-angular-margin parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AamParams {
    /// Hypersphere radius (logit scale), `s > 0`.
    pub scale: f64,
    /// Additive angular margin in radians, `0 <= m < pi/2`.
    pub margin: f64,
}

impl AamParams {
    pub fn new(scale: f64, margin: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::config(format!("AAM scale {scale} must be positive")));
        }
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&margin) {
            return Err(Error::config(format!("AAM margin {margin} outside [0, pi/2)")));
        }
        Ok(AamParams { scale, margin })
    }
}

impl Default for AamParams {
    /// The values the cited margin-loss formulation uses.
    fn default() -> Self {
        AamParams { scale: 64.0, margin: 0.5 }
    }
}

/// Sign-mismatch penalty multiplier for signed MSE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignedMseParams {
    /// `kappa >= 0`; 0 reduces to plain MSE.
    pub kappa: f64,
}

impl SignedMseParams {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::config(format!("kappa {kappa} must be non-negative")));
        }
        Ok(SignedMseParams { kappa })
    }
}

impl Default for SignedMseParams {
    fn default() -> Self {
        SignedMseParams { kappa: 1.0 }
    }
}

/// A loss value with the gradient of the differentiated argument.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Set when a Pearson batch had (near-)zero variance and the loss fell
    /// back to 1 with a zero gradient.
    pub degenerate: bool,
}

/// Ground truth for the four annotation heads.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetBundle {
    pub expression: usize,
    pub valence: f64,
    pub arousal: f64,
    pub landmarks: Option<Vec<f64>>,
}

impl From<&FeatureRecord> for TargetBundle {
    fn from(rec: &FeatureRecord) -> Self {
        TargetBundle {
            expression: rec.expression,
            valence: rec.valence,
            arousal: rec.arousal,
            landmarks: rec.landmarks.clone(),
        }
    }
}

/// Max-shift stabilized softmax cross-entropy; gradient wrt the logits.
pub fn softmax_ce(logits: &[f64], target: usize) -> Result<LossOutput> {
    if logits.len() < 2 {
        return Err(Error::config(format!("need at least 2 logits, got {}", logits.len())));
    }
    if target >= logits.len() {
        return Err(Error::config(format!("target {target} out of range for {} logits", logits.len())));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite logits"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp_sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    let value = exp_sum.ln() - (logits[target] - max);
    let mut grad: Vec<f64> = logits.iter().map(|&z| (z - max).exp() / exp_sum).collect();
    grad[target] -= 1.0;
    Ok(LossOutput { value, grad, degenerate: false })
}

/// Cosines between `x` and every row of `w`, clamped into `[-1, 1]`.
pub fn cosine_logits(x: &[f64], w: &Matrix) -> Result<Vec<f64>> {
    if x.len() != w.cols() {
        return Err(Error::config(format!("x has dim {}, weight rows have {}", x.len(), w.cols())));
    }
    let nx = norm(x);
    if !(nx > 0.0) || !nx.is_finite() {
        return Err(Error::numeric(format!("feature norm {nx} not positive and finite")));
    }
    (0..w.rows())
        .map(|j| {
            let row = w.row(j);
            let nw = norm(row);
            if !(nw > 0.0) || !nw.is_finite() {
                return Err(Error::numeric(format!("weight row {j} norm {nw} not positive and finite")));
            }
            Ok((dot(row, x) / (nw * nx)).clamp(-1.0, 1.0))
        })
        .collect()
}

/// Additive-angular-margin loss output: gradients wrt both the feature
/// vector and the weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AamLoss {
    pub value: f64,
    pub grad_x: Vec<f64>,
    pub grad_w: Matrix,
}

/// Margin loss over hypersphere-normalized logits: the target logit becomes
/// `s*cos(theta_t + m)` while the rest stay `s*cos(theta_j)`, then softmax
/// cross-entropy. `cos(theta + m)` expands to `cos*cos m - sin*sin m`, which
/// reduces *exactly* to the unmargined cosine at `m = 0`.
pub fn aam_loss(x: &[f64], w: &Matrix, target: usize, params: &AamParams) -> Result<AamLoss> {
    if target >= w.rows() {
        return Err(Error::config(format!("target {target} out of range for {} classes", w.rows())));
    }
    let cosines = cosine_logits(x, w)?;
    let (cos_m, sin_m) = (params.margin.cos(), params.margin.sin());

    let ct = cosines[target].clamp(-1.0 + COS_CLAMP_EPS, 1.0 - COS_CLAMP_EPS);
    let sin_t = (1.0 - ct * ct).sqrt();
    let mut logits: Vec<f64> = cosines.iter().map(|&c| params.scale * c).collect();
    logits[target] = params.scale * (ct * cos_m - sin_t * sin_m);

    let ce = softmax_ce(&logits, target)?;
    if !ce.value.is_finite() {
        return Err(Error::numeric(format!("margin loss value {} not finite", ce.value)));
    }

    // dL/dcos_j: chain through the logit map. For the target the logit is
    // s*(ct*cos m - sqrt(1-ct^2)*sin m), so d/dct = s*(cos m + ct*sin m/sin t).
    let mut dcos: Vec<f64> = ce.grad.iter().map(|&g| g * params.scale).collect();
    dcos[target] *= cos_m + ct * sin_m / sin_t;

    // dcos_j/dx = w_j/(|w_j||x|) - cos_j * x/|x|^2, and symmetrically for w_j.
    let nx = norm(x);
    let mut grad_x = vec![0.0; x.len()];
    let mut grad_w = Matrix::zeros(w.rows(), w.cols());
    for j in 0..w.rows() {
        let row = w.row(j);
        let nw = norm(row);
        let g = dcos[j];
        add_scaled(&mut grad_x, g / (nw * nx), row);
        add_scaled(&mut grad_x, -g * cosines[j] / (nx * nx), x);
        let grow = grad_w.row_mut(j);
        add_scaled(grow, g / (nw * nx), x);
        add_scaled(grow, -g * cosines[j] / (nw * nw), row);
    }
    Ok(AamLoss { value: ce.value, grad_x, grad_w })
}

/// Mean squared error with a multiplicative penalty on sign mismatches:
/// `mean (p - t)^2 * (1 + kappa*[sign(p) != sign(t)])`, where sign(0)
/// matches either sign. Gradient wrt `pred`.
pub fn signed_mse(pred: &[f64], target: &[f64], params: &SignedMseParams) -> Result<LossOutput> {
    if pred.is_empty() {
        return Err(Error::config("signed MSE of empty vectors"));
    }
    if pred.len() != target.len() {
        return Err(Error::config(format!("length mismatch {} vs {}", pred.len(), target.len())));
    }
    let n = pred.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for (i, (&p, &t)) in pred.iter().zip(target).enumerate() {
        // Strictly opposite signs; zero matches either side.
        let penalty = if p * t < 0.0 { 1.0 + params.kappa } else { 1.0 };
        let diff = p - t;
        value += diff * diff * penalty / n;
        grad[i] = 2.0 * diff * penalty / n;
    }
    if !value.is_finite() {
        return Err(Error::numeric(format!("signed MSE value {value} not finite")));
    }
    Ok(LossOutput { value, grad, degenerate: false })
}

/// Sample variance threshold below which a Pearson batch is degenerate.
const PEARSON_VAR_EPS: f64 = 1e-12;

/// One minus the sample Pearson correlation; in `[0, 2]`. A batch where
/// either side has (near-)zero variance yields loss 1 with zero gradient and
/// the degenerate flag set, so constant-prediction batches early in training
/// act as a no-op step rather than an abort.
pub fn pearson_loss(pred: &[f64], target: &[f64]) -> Result<LossOutput> {
    if pred.len() != target.len() {
        return Err(Error::config(format!("length mismatch {} vs {}", pred.len(), target.len())));
    }
    if pred.len() < 2 {
        return Err(Error::config(format!("Pearson loss needs at least 2 samples, got {}", pred.len())));
    }
    let n = pred.len() as f64;
    let mean_p = pred.iter().sum::<f64>() / n;
    let mean_t = target.iter().sum::<f64>() / n;
    let dp: Vec<f64> = pred.iter().map(|&p| p - mean_p).collect();
    let dt: Vec<f64> = target.iter().map(|&t| t - mean_t).collect();
    let ss_p = dot(&dp, &dp);
    let ss_t = dot(&dt, &dt);
    if ss_p / (n - 1.0) < PEARSON_VAR_EPS || ss_t / (n - 1.0) < PEARSON_VAR_EPS {
        return Ok(LossOutput { value: 1.0, grad: vec![0.0; pred.len()], degenerate: true });
    }
    let cov = dot(&dp, &dt);
    let denom = (ss_p * ss_t).sqrt();
    let rho = (cov / denom).clamp(-1.0, 1.0);
    // d rho / d p_i = (dt_i - (cov/ss_p) dp_i) / denom; loss = 1 - rho.
    let grad: Vec<f64> = dp
        .iter()
        .zip(&dt)
        .map(|(&dpi, &dti)| -(dti - cov / ss_p * dpi) / denom)
        .collect();
    Ok(LossOutput { value: 1.0 - rho, grad, degenerate: false })
}

/// How valence/arousal/landmark errors are scored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressionMode {
    SignedMse(SignedMseParams),
    Pearson,
}

/// Per-head weights of the four-term sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub expression: f64,
    pub valence: f64,
    pub arousal: f64,
    pub landmarks: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { expression: 1.0, valence: 1.0, arousal: 1.0, landmarks: 1.0 }
    }
}

/// Four-head sum over a batch: weighted expression CE plus regression losses
/// on valence, arousal and (when present on both sides) landmarks, with the
/// weighted gradients kept separate per head.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedLoss {
    pub value: f64,
    pub expression_term: f64,
    pub valence_term: f64,
    pub arousal_term: f64,
    /// `None` when the landmark term was skipped.
    pub landmark_term: Option<f64>,
    /// Per-sample gradients wrt the expression logits, scaled by the weight.
    pub grad_expression_logits: Vec<Vec<f64>>,
    pub grad_valence: Vec<f64>,
    pub grad_arousal: Vec<f64>,
    pub grad_landmarks: Option<Vec<Vec<f64>>>,
    pub degenerate: bool,
}

fn regression_term(pred: &[f64], target: &[f64], mode: &RegressionMode) -> Result<LossOutput> {
    match mode {
        RegressionMode::SignedMse(params) => signed_mse(pred, target, params),
        RegressionMode::Pearson => pearson_loss(pred, target),
    }
}

/// Sum of the four per-head losses over a batch of outputs and targets.
pub fn combined_loss(
    outputs: &[HeadOutputs],
    targets: &[TargetBundle],
    mode: &RegressionMode,
    weights: &LossWeights,
) -> Result<CombinedLoss> {
    if outputs.is_empty() {
        return Err(Error::config("combined loss over an empty batch"));
    }
    if outputs.len() != targets.len() {
        return Err(Error::config(format!(
            "batch size mismatch: {} outputs vs {} targets",
            outputs.len(),
            targets.len()
        )));
    }
    let n = outputs.len() as f64;

    let mut expression_term = 0.0;
    let mut grad_expression_logits = Vec::with_capacity(outputs.len());
    for (out, tgt) in outputs.iter().zip(targets) {
        let ce = softmax_ce(&out.expression_logits, tgt.expression)?;
        expression_term += ce.value / n;
        grad_expression_logits
            .push(ce.grad.iter().map(|g| g * weights.expression / n).collect());
    }

    let val_pred: Vec<f64> = outputs.iter().map(|o| o.valence).collect();
    let val_tgt: Vec<f64> = targets.iter().map(|t| t.valence).collect();
    let valence = regression_term(&val_pred, &val_tgt, mode)?;

    let ar_pred: Vec<f64> = outputs.iter().map(|o| o.arousal).collect();
    let ar_tgt: Vec<f64> = targets.iter().map(|t| t.arousal).collect();
    let arousal = regression_term(&ar_pred, &ar_tgt, mode)?;

    let mut degenerate = valence.degenerate || arousal.degenerate;

    let all_landmarks = outputs.iter().all(|o| o.landmarks.is_some())
        && targets.iter().all(|t| t.landmarks.is_some());
    let (landmark_term, grad_landmarks) = if all_landmarks {
        let lm_dim = outputs[0].landmarks.as_ref().unwrap().len();
        let mut pred = Vec::with_capacity(outputs.len() * lm_dim);
        let mut tgt = Vec::with_capacity(outputs.len() * lm_dim);
        for (out, t) in outputs.iter().zip(targets) {
            let (p, g) = (out.landmarks.as_ref().unwrap(), t.landmarks.as_ref().unwrap());
            if p.len() != lm_dim || g.len() != lm_dim {
                return Err(Error::config(format!(
                    "landmark length mismatch: {} and {} vs {lm_dim}",
                    p.len(),
                    g.len()
                )));
            }
            pred.extend_from_slice(p);
            tgt.extend_from_slice(g);
        }
        let lm = regression_term(&pred, &tgt, mode)?;
        degenerate |= lm.degenerate;
        let per_sample: Vec<Vec<f64>> = lm
            .grad
            .chunks(lm_dim)
            .map(|c| c.iter().map(|g| g * weights.landmarks).collect())
            .collect();
        (Some(lm.value), Some(per_sample))
    } else {
        (None, None)
    };

    let value = weights.expression * expression_term
        + weights.valence * valence.value
        + weights.arousal * arousal.value
        + weights.landmarks * landmark_term.unwrap_or(0.0);
    if !value.is_finite() {
        return Err(Error::numeric(format!("combined loss value {value} not finite")));
    }

    Ok(CombinedLoss {
        value,
        expression_term,
        valence_term: valence.value,
        arousal_term: arousal.value,
        landmark_term,
        grad_expression_logits,
        grad_valence: valence.grad.iter().map(|g| g * weights.valence).collect(),
        grad_arousal: arousal.grad.iter().map(|g| g * weights.arousal).collect(),
        grad_landmarks,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{REL_ERROR_FLOOR, central_diff, max_rel_error};
    use rand::Rng;

    fn rng(seed: u64) -> impl Rng {
        crate::seed::rng(seed)
    }

    fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn uniform_logits_give_ln_c() {
        let out = softmax_ce(&[0.5; 8], 3).unwrap();
        assert!((out.value - (8.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_logit() {
        let out = softmax_ce(&[10.0, 0.0], 0).unwrap();
        // Independent route: -ln(1/(1+e^-10)) = ln(1 + e^-10).
        let expected = (-10.0f64).exp().ln_1p();
        assert!((out.value - expected).abs() < 1e-15);
        assert!((out.value - 4.54e-5).abs() < 1e-7);
    }

    #[test]
    fn ce_grad_sums_to_zero_and_matches_fd() {
        let mut r = rng(1);
        for _ in 0..20 {
            let logits: Vec<f64> = (0..8).map(|_| r.random_range(-3.0..3.0)).collect();
            let target = r.random_range(0..8);
            let out = softmax_ce(&logits, target).unwrap();
            assert!(out.grad.iter().sum::<f64>().abs() < 1e-12);
            let numeric =
                central_diff(|z| softmax_ce(z, target).unwrap().value, &logits, 1e-5);
            assert!(max_rel_error(&out.grad, &numeric, REL_ERROR_FLOOR) < 1e-4);
        }
    }

    #[test]
    fn ce_rejects_bad_input() {
        assert!(softmax_ce(&[1.0], 0).is_err());
        assert!(softmax_ce(&[1.0, 2.0], 2).is_err());
        assert!(softmax_ce(&[f64::NAN, 0.0], 0).is_err());
    }

    #[test]
    fn cosine_parallel_orthogonal_and_scale_free() {
        let w = Matrix::from_vec(2, 2, vec![2.0, 0.0, 0.0, -3.0]).unwrap();
        let c = cosine_logits(&[5.0, 0.0], &w).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12);
        assert!(c[1].abs() < 1e-12);
        let scaled = cosine_logits(&[5.0 * 7.3, 0.0], &w).unwrap();
        for (a, b) in c.iter().zip(&scaled) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_rejects_zero_norms() {
        let w = Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        assert!(cosine_logits(&[0.0, 0.0], &w).is_err());
        let zero_row = Matrix::zeros(1, 2);
        assert!(cosine_logits(&[1.0, 0.0], &zero_row).is_err());
    }

    #[test]
    fn zero_margin_is_exactly_scaled_ce() {
        let mut r = rng(2);
        for _ in 0..50 {
            let x = random_vec(&mut r, 6);
            let w = Matrix::from_vec(4, 6, random_vec(&mut r, 24)).unwrap();
            let target = r.random_range(0..4);
            let params = AamParams::new(17.0, 0.0).unwrap();
            let aam = aam_loss(&x, &w, target, &params).unwrap();
            let logits: Vec<f64> =
                cosine_logits(&x, &w).unwrap().iter().map(|c| 17.0 * c).collect();
            let ce = softmax_ce(&logits, target).unwrap();
            assert_eq!(aam.value, ce.value, "bit-exact reduction at m = 0");
        }
    }

    #[test]
    fn margin_strictly_increases_loss() {
        let mut r = rng(3);
        let mut checked = 0;
        while checked < 25 {
            let x = random_vec(&mut r, 8);
            let w = Matrix::from_vec(8, 8, random_vec(&mut r, 64)).unwrap();
            let target = r.random_range(0..8);
            let ct = cosine_logits(&x, &w).unwrap()[target];
            let theta = ct.acos();
            if !(theta > 0.01 && theta < std::f64::consts::PI - 0.51) {
                continue;
            }
            let mut prev = f64::NEG_INFINITY;
            for step in 0..=5 {
                let m = 0.1 * step as f64;
                let params = AamParams::new(8.0, m).unwrap();
                let value = aam_loss(&x, &w, target, &params).unwrap().value;
                assert!(value > prev, "m={m}: {value} <= {prev}");
                prev = value;
            }
            checked += 1;
        }
    }

    #[test]
    fn aam_gradients_match_finite_differences() {
        let mut r = rng(4);
        let params = AamParams::new(12.0, 0.4).unwrap();
        for _ in 0..10 {
            let x = random_vec(&mut r, 8);
            let w_data = random_vec(&mut r, 64);
            let w = Matrix::from_vec(8, 8, w_data.clone()).unwrap();
            let target = r.random_range(0..8);
            let out = aam_loss(&x, &w, target, &params).unwrap();

            let numeric_x = central_diff(
                |xs| aam_loss(xs, &w, target, &params).unwrap().value,
                &x,
                1e-5,
            );
            assert!(max_rel_error(&out.grad_x, &numeric_x, REL_ERROR_FLOOR) < 1e-4);

            let numeric_w = central_diff(
                |ws| {
                    let wm = Matrix::from_vec(8, 8, ws.to_vec()).unwrap();
                    aam_loss(&x, &wm, target, &params).unwrap().value
                },
                &w_data,
                1e-5,
            );
            assert!(max_rel_error(out.grad_w.as_slice(), &numeric_w, REL_ERROR_FLOOR) < 1e-4);
        }
    }

    #[test]
    fn aam_invariant_under_positive_rescaling() {
        let mut r = rng(5);
        let x = random_vec(&mut r, 5);
        let w = Matrix::from_vec(3, 5, random_vec(&mut r, 15)).unwrap();
        let params = AamParams::default();
        let base = aam_loss(&x, &w, 1, &params).unwrap().value;
        let x2: Vec<f64> = x.iter().map(|v| v * 7.3).collect();
        assert!((aam_loss(&x2, &w, 1, &params).unwrap().value - base).abs() < 1e-9);
        let mut w2 = w.clone();
        for j in 0..w2.rows() {
            for v in w2.row_mut(j) {
                *v *= 0.01 + j as f64;
            }
        }
        assert!((aam_loss(&x, &w2, 1, &params).unwrap().value - base).abs() < 1e-9);
    }

    #[test]
    fn signed_mse_penalizes_wrong_direction() {
        let params = SignedMseParams::default();
        // Target 0.3: predicting -0.1 is worse than predicting 0.7 even
        // though both miss by 0.4.
        let wrong = signed_mse(&[-0.1], &[0.3], &params).unwrap().value;
        let right = signed_mse(&[0.7], &[0.3], &params).unwrap().value;
        assert!((wrong - 0.32).abs() < 1e-12);
        assert!((right - 0.16).abs() < 1e-12);
        assert!(wrong > right);
    }

    #[test]
    fn signed_mse_edge_cases() {
        let params = SignedMseParams::default();
        assert_eq!(signed_mse(&[0.2, -0.4], &[0.2, -0.4], &params).unwrap().value, 0.0);
        // kappa = 0 is plain MSE.
        let plain = SignedMseParams::new(0.0).unwrap();
        let out = signed_mse(&[-0.1], &[0.3], &plain).unwrap();
        assert!((out.value - 0.16).abs() < 1e-12);
        // sign(0) matches either side.
        let zero = signed_mse(&[0.0], &[0.3], &params).unwrap();
        assert!((zero.value - 0.09).abs() < 1e-12);
        assert!(signed_mse(&[], &[], &params).is_err());
        assert!(signed_mse(&[0.1], &[0.1, 0.2], &params).is_err());
    }

    #[test]
    fn signed_mse_gradient_matches_fd_off_the_kink() {
        let params = SignedMseParams::new(1.5).unwrap();
        let mut r = rng(6);
        for _ in 0..20 {
            // Keep |pred| > 2 steps away from the sign discontinuity.
            let pred: Vec<f64> = (0..5)
                .map(|_| {
                    let v: f64 = r.random_range(0.05..1.0);
                    if r.random_range(0..2) == 0 { v } else { -v }
                })
                .collect();
            let target = random_vec(&mut r, 5);
            let out = signed_mse(&pred, &target, &params).unwrap();
            let numeric =
                central_diff(|p| signed_mse(p, &target, &params).unwrap().value, &pred, 1e-5);
            assert!(max_rel_error(&out.grad, &numeric, REL_ERROR_FLOOR) < 1e-4);
        }
    }

    #[test]
    fn signed_mse_dominates_plain_mse() {
        let params = SignedMseParams::default();
        let plain = SignedMseParams::new(0.0).unwrap();
        let mut r = rng(7);
        for _ in 0..50 {
            let pred = random_vec(&mut r, 6);
            let target = random_vec(&mut r, 6);
            let a = signed_mse(&pred, &target, &params).unwrap().value;
            let b = signed_mse(&pred, &target, &plain).unwrap().value;
            assert!(a >= b);
        }
    }

    #[test]
    fn pearson_perfect_and_anticorrelated() {
        let t = [0.1, 0.4, -0.3, 0.8];
        assert!(pearson_loss(&t, &t).unwrap().value.abs() < 1e-12);
        let neg: Vec<f64> = t.iter().map(|v| -v).collect();
        assert!((pearson_loss(&neg, &t).unwrap().value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_affine_invariance() {
        let t = [0.1, 0.4, -0.3, 0.8, 0.0];
        for (a, b) in [(2.0, 0.5), (0.3, -1.0), (10.0, 0.0)] {
            let pred: Vec<f64> = t.iter().map(|v| a * v + b).collect();
            assert!(pearson_loss(&pred, &t).unwrap().value.abs() < 1e-9);
        }
    }

    #[test]
    fn pearson_degenerate_batch_is_a_noop() {
        let out = pearson_loss(&[0.5, 0.5, 0.5], &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(out.value, 1.0);
        assert!(out.degenerate);
        assert!(out.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn pearson_gradient_matches_fd() {
        let mut r = rng(8);
        for _ in 0..20 {
            let pred = random_vec(&mut r, 7);
            let target = random_vec(&mut r, 7);
            let out = pearson_loss(&pred, &target).unwrap();
            assert!((0.0..=2.0).contains(&out.value));
            let numeric = central_diff(|p| pearson_loss(p, &target).unwrap().value, &pred, 1e-5);
            assert!(max_rel_error(&out.grad, &numeric, REL_ERROR_FLOOR) < 1e-4);
        }
    }

    #[test]
    fn pearson_rejects_short_batches() {
        assert!(pearson_loss(&[1.0], &[1.0]).is_err());
        assert!(pearson_loss(&[1.0, 2.0], &[1.0]).is_err());
    }

    fn batch(n: usize, with_landmarks: bool, r: &mut impl Rng) -> (Vec<HeadOutputs>, Vec<TargetBundle>) {
        let outputs: Vec<HeadOutputs> = (0..n)
            .map(|_| HeadOutputs {
                expression_logits: random_vec(r, 8),
                valence: r.random_range(-0.9..0.9),
                arousal: r.random_range(-0.9..0.9),
                landmarks: with_landmarks.then(|| random_vec(r, 4)),
            })
            .collect();
        let targets: Vec<TargetBundle> = (0..n)
            .map(|_| TargetBundle {
                expression: r.random_range(0..8),
                valence: r.random_range(-0.9..0.9),
                arousal: r.random_range(-0.9..0.9),
                landmarks: with_landmarks.then(|| random_vec(r, 4)),
            })
            .collect();
        (outputs, targets)
    }

    #[test]
    fn combined_matches_independent_terms() {
        let mut r = rng(9);
        let (outputs, targets) = batch(5, true, &mut r);
        let mode = RegressionMode::SignedMse(SignedMseParams::default());
        let weights = LossWeights { expression: 0.5, valence: 2.0, arousal: 1.0, landmarks: 0.25 };
        let out = combined_loss(&outputs, &targets, &mode, &weights).unwrap();

        let expr: f64 = outputs
            .iter()
            .zip(&targets)
            .map(|(o, t)| softmax_ce(&o.expression_logits, t.expression).unwrap().value)
            .sum::<f64>()
            / 5.0;
        let v = signed_mse(
            &outputs.iter().map(|o| o.valence).collect::<Vec<_>>(),
            &targets.iter().map(|t| t.valence).collect::<Vec<_>>(),
            &SignedMseParams::default(),
        )
        .unwrap()
        .value;
        let a = signed_mse(
            &outputs.iter().map(|o| o.arousal).collect::<Vec<_>>(),
            &targets.iter().map(|t| t.arousal).collect::<Vec<_>>(),
            &SignedMseParams::default(),
        )
        .unwrap()
        .value;
        let lm_pred: Vec<f64> =
            outputs.iter().flat_map(|o| o.landmarks.clone().unwrap()).collect();
        let lm_tgt: Vec<f64> =
            targets.iter().flat_map(|t| t.landmarks.clone().unwrap()).collect();
        let l = signed_mse(&lm_pred, &lm_tgt, &SignedMseParams::default()).unwrap().value;

        let expected = 0.5 * expr + 2.0 * v + 1.0 * a + 0.25 * l;
        assert!((out.value - expected).abs() < 1e-12);
    }

    #[test]
    fn expression_only_weights() {
        let mut r = rng(10);
        let (outputs, targets) = batch(4, false, &mut r);
        let mode = RegressionMode::SignedMse(SignedMseParams::default());
        let weights = LossWeights { expression: 1.0, valence: 0.0, arousal: 0.0, landmarks: 0.0 };
        let out = combined_loss(&outputs, &targets, &mode, &weights).unwrap();
        assert!((out.value - out.expression_term).abs() < 1e-12);
        assert!(out.landmark_term.is_none());
    }

    #[test]
    fn zero_losses_sum_to_zero() {
        let outputs = vec![HeadOutputs {
            expression_logits: vec![50.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            valence: 0.3,
            arousal: -0.2,
            landmarks: None,
        }];
        let targets = vec![TargetBundle { expression: 0, valence: 0.3, arousal: -0.2, landmarks: None }];
        let mode = RegressionMode::SignedMse(SignedMseParams::default());
        let out = combined_loss(&outputs, &targets, &mode, &LossWeights::default()).unwrap();
        assert!(out.value < 1e-12);
    }

    #[test]
    fn combined_rejects_mismatched_batches() {
        let mut r = rng(11);
        let (outputs, targets) = batch(3, false, &mut r);
        let mode = RegressionMode::Pearson;
        assert!(combined_loss(&outputs[..2], &targets, &mode, &LossWeights::default()).is_err());
        assert!(combined_loss(&[], &[], &mode, &LossWeights::default()).is_err());
    }
}
