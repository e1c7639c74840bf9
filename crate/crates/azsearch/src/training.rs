//! The multi-task loss (zoom cross-entropy + per-prior confidence
//! cross-entropy + smooth-L1 box regression), analytic gradients verified
//! against central finite differences, and a momentum-SGD training loop.
//!
//! Classification losses are computed from logits in the stable
//! `max(l,0) - l*y + ln(1+exp(-|l|))` form, never through `ln(sigmoid)`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{hflip, render, Scene};
use crate::geometry::NUM_PRIORS;
use crate::predictor::{forward, pool_region, ForwardPass, ModelParameters, PredictorError, REG_OUTPUTS};
use crate::sampling::TrainingSample;
use crate::seeds::{self, Domain};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("sample {index} references unknown scene {id}")]
    UnknownScene { index: usize, id: String },
    #[error("prior {prior_index} is positive but carries no regression target")]
    MissingTarget { prior_index: usize },
    #[error("got {got} feature vectors for {expected} samples")]
    FeatureCountMismatch { got: usize, expected: usize },
    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
}

/// Smooth L1: `0.5 x^2` for `|x| < 1`, `|x| - 0.5` otherwise.
pub fn smooth_l1(x: f64) -> f64 {
    if x.abs() < 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

/// Derivative of [`smooth_l1`]: `x` inside the quadratic zone, `sign(x)`
/// outside.
pub fn smooth_l1_grad(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Binary cross-entropy on a probability: `-y ln p - (1-y) ln(1-p)`.
pub fn binary_ce(p: f64, label: bool) -> f64 {
    if label {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Binary cross-entropy straight from the logit, numerically stable for
/// any magnitude.
pub fn binary_ce_logit(logit: f64, label: bool) -> f64 {
    let y = if label { 1.0 } else { 0.0 };
    logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// The three loss components of one sample (or a minibatch mean of them).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub zoom_ce: f64,
    pub conf_ce: f64,
    pub bbox_smooth_l1: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.zoom_ce + self.conf_ce + self.bbox_smooth_l1
    }
}

/// Per-task loss weights. The defaults keep the plain sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub zoom: f64,
    pub conf: f64,
    pub bbox: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { zoom: 1.0, conf: 1.0, bbox: 1.0 }
    }
}

/// Parameter gradients, shaped exactly like [`ModelParameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w_zoom: Vec<f64>,
    pub b_zoom: f64,
    pub w_conf: Vec<f64>,
    pub b_conf: Vec<f64>,
    pub w_reg: Vec<f64>,
    pub b_reg: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParameters) -> Self {
        Gradients {
            w1: vec![0.0; params.w1.len()],
            b1: vec![0.0; params.b1.len()],
            w_zoom: vec![0.0; params.w_zoom.len()],
            b_zoom: 0.0,
            w_conf: vec![0.0; params.w_conf.len()],
            b_conf: vec![0.0; params.b_conf.len()],
            w_reg: vec![0.0; params.w_reg.len()],
            b_reg: vec![0.0; params.b_reg.len()],
        }
    }

    /// `self += other * scale`, block by block.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        let axpy = |dst: &mut [f64], src: &[f64]| {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s * scale;
            }
        };
        axpy(&mut self.w1, &other.w1);
        axpy(&mut self.b1, &other.b1);
        axpy(&mut self.w_zoom, &other.w_zoom);
        self.b_zoom += other.b_zoom * scale;
        axpy(&mut self.w_conf, &other.w_conf);
        axpy(&mut self.b_conf, &other.b_conf);
        axpy(&mut self.w_reg, &other.w_reg);
        axpy(&mut self.b_reg, &other.b_reg);
    }
}

/// Loss and parameter gradients for one sample, backpropagated through the
/// cached intermediates of `pass`.
///
/// Regression contributes only for positive priors; its gradient is zero
/// elsewhere. The reported breakdown is unweighted; `weights` scale each
/// task's contribution to the gradients (and to the weighted total used in
/// training).
#[allow(clippy::needless_range_loop)] // index-parallel math over flat row-major blocks
pub fn multitask_loss(
    params: &ModelParameters,
    pass: &ForwardPass,
    sample: &TrainingSample,
    weights: &LossWeights,
) -> Result<(LossBreakdown, Gradients), TrainError> {
    let hidden_n = params.hidden;
    let mut grads = Gradients::zeros_like(params);

    // zoom head
    let zoom_ce = binary_ce_logit(pass.zoom_logit, sample.zoom);
    let y_zoom = if sample.zoom { 1.0 } else { 0.0 };
    let d_zoom = weights.zoom * (sigmoid(pass.zoom_logit) - y_zoom);

    // confidence head
    let mut conf_ce = 0.0;
    let mut d_conf = [0.0; NUM_PRIORS];
    for i in 0..NUM_PRIORS {
        let label = sample.priors[i].positive;
        conf_ce += binary_ce_logit(pass.conf_logits[i], label);
        let y = if label { 1.0 } else { 0.0 };
        d_conf[i] = weights.conf * (sigmoid(pass.conf_logits[i]) - y);
    }

    // regression head, masked to positive priors
    let mut bbox_loss = 0.0;
    let mut d_reg = [0.0; REG_OUTPUTS];
    for i in 0..NUM_PRIORS {
        if !sample.priors[i].positive {
            continue;
        }
        let target = sample.priors[i]
            .target
            .ok_or(TrainError::MissingTarget { prior_index: i })?
            .as_array();
        for c in 0..4 {
            let diff = pass.regression[4 * i + c] - target[c];
            bbox_loss += smooth_l1(diff);
            d_reg[4 * i + c] = weights.bbox * smooth_l1_grad(diff);
        }
    }

    // head weights and the gradient flowing back into the hidden layer
    let mut d_hidden = vec![0.0; hidden_n];
    for h in 0..hidden_n {
        grads.w_zoom[h] = d_zoom * pass.hidden[h];
        d_hidden[h] += d_zoom * params.w_zoom[h];
    }
    grads.b_zoom = d_zoom;
    for i in 0..NUM_PRIORS {
        let row = i * hidden_n;
        for h in 0..hidden_n {
            grads.w_conf[row + h] = d_conf[i] * pass.hidden[h];
            d_hidden[h] += d_conf[i] * params.w_conf[row + h];
        }
        grads.b_conf[i] = d_conf[i];
    }
    for j in 0..REG_OUTPUTS {
        if d_reg[j] == 0.0 {
            grads.b_reg[j] = 0.0;
            continue;
        }
        let row = j * hidden_n;
        for h in 0..hidden_n {
            grads.w_reg[row + h] = d_reg[j] * pass.hidden[h];
            d_hidden[h] += d_reg[j] * params.w_reg[row + h];
        }
        grads.b_reg[j] = d_reg[j];
    }

    // through the ReLU into the first layer
    let feature_n = pass.features.len();
    for h in 0..hidden_n {
        if pass.hidden_pre[h] <= 0.0 {
            continue;
        }
        let dz = d_hidden[h];
        grads.b1[h] = dz;
        let row = h * feature_n;
        for f in 0..feature_n {
            grads.w1[row + f] = dz * pass.features[f];
        }
    }

    Ok((LossBreakdown { zoom_ce, conf_ce, bbox_smooth_l1: bbox_loss }, grads))
}

/// Weighted scalar loss plus the kink signature of the evaluation: the
/// ReLU activation mask and the smooth-L1 zones of active regression
/// outputs. The finite-difference checker compares signatures of the two
/// perturbed evaluations and skips coordinates whose epsilon-ball crosses
/// a kink, where central differences are meaningless.
struct LossProbe {
    loss: f64,
    relu_mask: Vec<bool>,
    smooth_l1_zones: Vec<i8>,
}

#[allow(clippy::needless_range_loop)]
fn probe_loss(
    params: &ModelParameters,
    features: &[f64],
    sample: &TrainingSample,
    weights: &LossWeights,
) -> Result<LossProbe, TrainError> {
    let pass = forward(params, features)?;
    let mut total = weights.zoom * binary_ce_logit(pass.zoom_logit, sample.zoom);
    let mut zones = Vec::with_capacity(REG_OUTPUTS);
    for i in 0..NUM_PRIORS {
        total += weights.conf * binary_ce_logit(pass.conf_logits[i], sample.priors[i].positive);
        if sample.priors[i].positive {
            let target = sample.priors[i]
                .target
                .ok_or(TrainError::MissingTarget { prior_index: i })?
                .as_array();
            for c in 0..4 {
                let diff = pass.regression[4 * i + c] - target[c];
                total += weights.bbox * smooth_l1(diff);
                zones.push(if diff < -1.0 {
                    -1
                } else if diff > 1.0 {
                    1
                } else {
                    0
                });
            }
        }
    }
    Ok(LossProbe {
        loss: total,
        relu_mask: pass.hidden_pre.iter().map(|&z| z > 0.0).collect(),
        smooth_l1_zones: zones,
    })
}

const NUM_BLOCKS: usize = 8;

fn block_len(params: &ModelParameters, block: usize) -> usize {
    match block {
        0 => params.w1.len(),
        1 => params.b1.len(),
        2 => params.w_zoom.len(),
        3 => 1, // b_zoom
        4 => params.w_conf.len(),
        5 => params.b_conf.len(),
        6 => params.w_reg.len(),
        7 => params.b_reg.len(),
        _ => unreachable!(),
    }
}

fn param_mut(params: &mut ModelParameters, block: usize, i: usize) -> &mut f64 {
    match block {
        0 => &mut params.w1[i],
        1 => &mut params.b1[i],
        2 => &mut params.w_zoom[i],
        3 => &mut params.b_zoom,
        4 => &mut params.w_conf[i],
        5 => &mut params.b_conf[i],
        6 => &mut params.w_reg[i],
        7 => &mut params.b_reg[i],
        _ => unreachable!(),
    }
}

fn grad_value(grads: &Gradients, block: usize, i: usize) -> f64 {
    match block {
        0 => grads.w1[i],
        1 => grads.b1[i],
        2 => grads.w_zoom[i],
        3 => grads.b_zoom,
        4 => grads.w_conf[i],
        5 => grads.b_conf[i],
        6 => grads.w_reg[i],
        7 => grads.b_reg[i],
        _ => unreachable!(),
    }
}

/// Worst relative error between `grads` and central finite differences,
/// over a seeded stratified subsample of parameters (`per_block` draws
/// from each of the eight blocks, so every head is always covered).
///
/// The error metric is `|a - n| / max(1e-8, |a| + |n|)`, symmetric in the
/// analytic and numeric values.
#[allow(clippy::too_many_arguments)]
pub fn gradient_error_vs_numeric(
    params: &ModelParameters,
    features: &[f64],
    sample: &TrainingSample,
    weights: &LossWeights,
    grads: &Gradients,
    epsilon: f64,
    per_block: usize,
    seed: u64,
) -> Result<f64, TrainError> {
    let mut rng = seeds::substream(seed, Domain::Test, 0);
    let mut scratch = params.clone();
    let mut worst: f64 = 0.0;
    for block in 0..NUM_BLOCKS {
        let len = block_len(params, block);
        let picks: Vec<usize> = if len <= per_block {
            (0..len).collect()
        } else {
            (0..per_block).map(|_| rng.random_range(0..len)).collect()
        };
        for i in picks {
            let original = *param_mut(&mut scratch, block, i);
            *param_mut(&mut scratch, block, i) = original + epsilon;
            let plus = probe_loss(&scratch, features, sample, weights)?;
            *param_mut(&mut scratch, block, i) = original - epsilon;
            let minus = probe_loss(&scratch, features, sample, weights)?;
            *param_mut(&mut scratch, block, i) = original;

            // a kink inside the epsilon ball invalidates the central
            // difference at this coordinate
            if plus.relu_mask != minus.relu_mask || plus.smooth_l1_zones != minus.smooth_l1_zones
            {
                continue;
            }

            let numeric = (plus.loss - minus.loss) / (2.0 * epsilon);
            let analytic = grad_value(grads, block, i);
            // (plus - minus) is quantized at the ulp of the loss itself;
            // differences below that floor measure f64 rounding, not the
            // gradient
            let noise = 16.0 * f64::EPSILON * plus.loss.abs().max(minus.loss.abs()) / epsilon;
            if (analytic - numeric).abs() <= noise {
                continue;
            }
            let err = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
            if err > worst {
                worst = err;
            }
        }
    }
    Ok(worst)
}

/// Run the analytic gradients of [`multitask_loss`] against central finite
/// differences and return the worst relative error seen.
pub fn grad_check(
    params: &ModelParameters,
    features: &[f64],
    sample: &TrainingSample,
    epsilon: f64,
    per_block: usize,
    seed: u64,
) -> Result<f64, TrainError> {
    let weights = LossWeights::default();
    let pass = forward(params, features)?;
    let (_, grads) = multitask_loss(params, &pass, sample, &weights)?;
    gradient_error_vs_numeric(params, features, sample, &weights, &grads, epsilon, per_block, seed)
}

/// Optimizer settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub minibatch: usize,
    pub iterations: usize,
    pub seed: u64,
    #[serde(default)]
    pub loss_weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.02,
            momentum: 0.9,
            weight_decay: 5e-4,
            minibatch: 64,
            iterations: 5000,
            seed: 0,
            loss_weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config("learning_rate must be finite and >= 0".into()));
        }
        if self.minibatch == 0 {
            return Err(TrainError::Config("minibatch must be at least 1".into()));
        }
        Ok(())
    }
}

/// One line of the loss log: minibatch-mean components at an iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRow {
    pub iteration: usize,
    pub zoom_ce: f64,
    pub conf_ce: f64,
    pub bbox_smooth_l1: f64,
    pub total: f64,
}

/// Pool the per-sample feature vectors for a training set. Scenes are
/// rendered once per (scene, flipped) group; samples referencing the
/// flipped variant pool from the horizontally flipped render.
pub fn pool_sample_features(
    samples: &[TrainingSample],
    scenes: &[Scene],
    g: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>, TrainError> {
    let by_id: std::collections::HashMap<&str, &Scene> =
        scenes.iter().map(|s| (s.id.as_str(), s)).collect();

    // group sample indices by (scene, flipped) so each grid is rendered once
    let mut groups: std::collections::BTreeMap<(String, bool), Vec<usize>> = Default::default();
    for (i, s) in samples.iter().enumerate() {
        groups.entry((s.scene_id.clone(), s.flipped)).or_default().push(i);
    }

    let mut features = vec![Vec::new(); samples.len()];
    for ((scene_id, flipped), indices) in groups {
        let scene = *by_id.get(scene_id.as_str()).ok_or_else(|| TrainError::UnknownScene {
            index: indices[0],
            id: scene_id.clone(),
        })?;
        let rendered =
            if flipped { render(&hflip(scene), noise_sigma, seed) } else { render(scene, noise_sigma, seed) };
        for i in indices {
            features[i] = pool_region(&rendered, &samples[i].anchor, g)?;
        }
    }
    Ok(features)
}

/// Momentum SGD with weight decay over `(samples, features)` pairs.
///
/// Minibatches are drawn with replacement from a seeded substream and
/// gradients accumulate in a fixed order, so the returned parameters and
/// loss log are identical across runs. The per-iteration log rows hold
/// minibatch means. Aborts on a non-finite loss.
pub fn sgd_train(
    samples: &[TrainingSample],
    features: &[Vec<f64>],
    init: ModelParameters,
    config: &TrainConfig,
) -> Result<(ModelParameters, Vec<LossRow>), TrainError> {
    config.validate()?;
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if features.len() != samples.len() {
        return Err(TrainError::FeatureCountMismatch {
            got: features.len(),
            expected: samples.len(),
        });
    }

    let mut params = init;
    let mut velocity = Gradients::zeros_like(&params);
    let mut rng = seeds::substream(config.seed, Domain::Minibatch, 0);
    let mut log = Vec::with_capacity(config.iterations);

    for iteration in 0..config.iterations {
        let mut batch_grads = Gradients::zeros_like(&params);
        let mut batch_loss = LossBreakdown::default();
        for _ in 0..config.minibatch {
            let i = rng.random_range(0..samples.len());
            let pass = forward(&params, &features[i])?;
            let (breakdown, grads) =
                multitask_loss(&params, &pass, &samples[i], &config.loss_weights)?;
            batch_grads.add_scaled(&grads, 1.0);
            batch_loss.zoom_ce += breakdown.zoom_ce;
            batch_loss.conf_ce += breakdown.conf_ce;
            batch_loss.bbox_smooth_l1 += breakdown.bbox_smooth_l1;
        }
        let m = config.minibatch as f64;
        let row = LossRow {
            iteration,
            zoom_ce: batch_loss.zoom_ce / m,
            conf_ce: batch_loss.conf_ce / m,
            bbox_smooth_l1: batch_loss.bbox_smooth_l1 / m,
            total: batch_loss.total() / m,
        };
        if !row.total.is_finite() {
            return Err(TrainError::NonFiniteLoss { iteration });
        }
        log.push(row);

        // v <- mu*v - lr*(grad/m + wd*w); w <- w + v
        let lr = config.learning_rate;
        let mu = config.momentum;
        let wd = config.weight_decay;
        let update = |w: &mut [f64], v: &mut [f64], g: &[f64]| {
            for ((w, v), g) in w.iter_mut().zip(v.iter_mut()).zip(g) {
                *v = mu * *v - lr * (g / m + wd * *w);
                *w += *v;
            }
        };
        update(&mut params.w1, &mut velocity.w1, &batch_grads.w1);
        update(&mut params.b1, &mut velocity.b1, &batch_grads.b1);
        update(&mut params.w_zoom, &mut velocity.w_zoom, &batch_grads.w_zoom);
        velocity.b_zoom =
            mu * velocity.b_zoom - lr * (batch_grads.b_zoom / m + wd * params.b_zoom);
        params.b_zoom += velocity.b_zoom;
        update(&mut params.w_conf, &mut velocity.w_conf, &batch_grads.w_conf);
        update(&mut params.b_conf, &mut velocity.b_conf, &batch_grads.b_conf);
        update(&mut params.w_reg, &mut velocity.w_reg, &batch_grads.w_reg);
        update(&mut params.b_reg, &mut velocity.b_reg, &batch_grads.b_reg);
    }

    Ok((params, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_scenes, SceneGenConfig};
    use crate::geometry::{BBox, PriorTable};
    use crate::sampling::{build_training_set, TrainingSetOptions};

    fn negative_sample(anchor: BBox) -> TrainingSample {
        TrainingSample {
            scene_id: "t".into(),
            flipped: false,
            anchor,
            zoom: false,
            priors: vec![crate::sampling::PriorLabel::negative(); NUM_PRIORS],
            source: crate::sampling::SampleSource::Mined,
        }
    }

    fn small_training_set() -> (Vec<TrainingSample>, Vec<Vec<f64>>, ModelParameters) {
        let scenes = generate_scenes(&SceneGenConfig::default(), 6, 31).unwrap();
        let priors = PriorTable::default();
        let (samples, _) =
            build_training_set(&scenes, &priors, &TrainingSetOptions::default(), 31);
        let params = ModelParameters::init(4, 16, 2, 31);
        let features = pool_sample_features(&samples, &scenes, params.g, 0.02, 31).unwrap();
        (samples, features, params)
    }

    #[test]
    fn smooth_l1_values() {
        assert_eq!(smooth_l1(0.0), 0.0);
        assert!((smooth_l1(0.5) - 0.125).abs() < 1e-12);
        assert!((smooth_l1(2.0) - 1.5).abs() < 1e-12);
        assert!((smooth_l1(-2.0) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn binary_ce_values() {
        assert!((binary_ce(0.5, true) - 2.0f64.ln()).abs() < 1e-12);
        assert!((binary_ce(0.5, false) - 2.0f64.ln()).abs() < 1e-12);
        assert!((binary_ce(0.9, false) - 10.0f64.ln()).abs() < 1e-9);
        assert!(binary_ce(1.0 - 1e-12, true) < 1e-10);
        // logit form agrees with the probability form away from saturation
        for logit in [-3.0, -0.5, 0.0, 1.2, 4.0] {
            let p = sigmoid(logit);
            assert!((binary_ce_logit(logit, true) - binary_ce(p, true)).abs() < 1e-9);
            assert!((binary_ce_logit(logit, false) - binary_ce(p, false)).abs() < 1e-9);
        }
        // and stays finite where the probability form cannot
        assert!(binary_ce_logit(1e4, false).is_finite());
    }

    #[test]
    fn zero_model_all_negative_sample_loss_is_12_ln2() {
        let params = ModelParameters::zeros(4, 8, 2);
        let sample = negative_sample(BBox::new(0.0, 0.0, 32.0, 32.0).unwrap());
        let features = vec![0.1; params.feature_len()];
        let pass = forward(&params, &features).unwrap();
        let (loss, _) =
            multitask_loss(&params, &pass, &sample, &LossWeights::default()).unwrap();
        assert!((loss.total() - 12.0 * 2.0f64.ln()).abs() < 1e-12);
        assert_eq!(loss.bbox_smooth_l1, 0.0);
    }

    #[test]
    fn negative_priors_have_zero_regression_gradient() {
        let (samples, features, params) = small_training_set();
        let (i, sample) = samples
            .iter()
            .enumerate()
            .find(|(_, s)| s.priors.iter().any(|p| !p.positive) && s.priors.iter().any(|p| p.positive))
            .expect("mixed sample exists");
        let pass = forward(&params, &features[i]).unwrap();
        let (_, grads) =
            multitask_loss(&params, &pass, sample, &LossWeights::default()).unwrap();
        for (pi, prior) in sample.priors.iter().enumerate() {
            if !prior.positive {
                for c in 0..4 {
                    let j = 4 * pi + c;
                    assert_eq!(grads.b_reg[j], 0.0);
                    let row = &grads.w_reg[j * params.hidden..(j + 1) * params.hidden];
                    assert!(row.iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    #[test]
    fn grad_check_passes_on_seeded_samples() {
        let (samples, features, params) = small_training_set();
        for k in 0..5 {
            let i = (k * 37) % samples.len();
            let err = grad_check(&params, &features[i], &samples[i], 1e-5, 30, 7).unwrap();
            assert!(err < 1e-5, "sample {i}: relative error {err}");
        }
    }

    #[test]
    fn grad_check_detects_injected_fault() {
        let (samples, features, params) = small_training_set();
        let weights = LossWeights::default();
        let pass = forward(&params, &features[0]).unwrap();
        let (_, mut grads) = multitask_loss(&params, &pass, &samples[0], &weights).unwrap();
        for g in &mut grads.w_zoom {
            *g *= 2.0;
        }
        let err = gradient_error_vs_numeric(
            &params, &features[0], &samples[0], &weights, &grads, 1e-5, 30, 7,
        )
        .unwrap();
        assert!(err > 0.3, "doubled w_zoom block went undetected: {err}");
    }

    #[test]
    fn sgd_zero_learning_rate_is_identity() {
        let (samples, features, params) = small_training_set();
        let config = TrainConfig {
            learning_rate: 0.0,
            iterations: 10,
            minibatch: 4,
            ..TrainConfig::default()
        };
        let (trained, log) = sgd_train(&samples, &features, params.clone(), &config).unwrap();
        assert_eq!(trained, params);
        assert_eq!(log.len(), 10);
    }

    #[test]
    fn sgd_is_deterministic() {
        let (samples, features, params) = small_training_set();
        let config = TrainConfig { iterations: 25, minibatch: 8, ..TrainConfig::default() };
        let (m1, log1) = sgd_train(&samples, &features, params.clone(), &config).unwrap();
        let (m2, log2) = sgd_train(&samples, &features, params, &config).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(log1, log2);
    }

    #[test]
    fn sgd_decreases_loss_on_small_set() {
        let (samples, features, params) = small_training_set();
        let config = TrainConfig { iterations: 300, minibatch: 16, ..TrainConfig::default() };
        let (_, log) = sgd_train(&samples, &features, params, &config).unwrap();
        let first = log[0].total;
        let last_mean: f64 =
            log[log.len() - 50..].iter().map(|r| r.total).sum::<f64>() / 50.0;
        assert!(
            last_mean < first,
            "loss did not decrease: first {first}, last-50 mean {last_mean}"
        );
    }

    #[test]
    fn sgd_rejects_empty_dataset() {
        let params = ModelParameters::zeros(2, 4, 2);
        assert!(matches!(
            sgd_train(&[], &[], params, &TrainConfig::default()),
            Err(TrainError::EmptyDataset)
        ));
    }
}
