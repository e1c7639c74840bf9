//! Zoom/adjacency predictors: pool features from an anchor region, emit a
//! zoom indicator plus one confidence-scored box regression per prior.
//!
//! Three implementations share the [`Predictor`] interface so the search
//! is agnostic to which one drives it:
//!
//! - [`OraclePredictor`]: the labeling rules used as a perfect predictor;
//! - [`RandomPredictor`]: seeded uniform scores, a control baseline;
//! - [`ModelPredictor`]: a small trainable network (region max-pooling,
//!   one ReLU hidden layer, three heads: zoom, confidence, regression).

use std::io::{BufReader, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{FeatureGrid, Scene};
use crate::geometry::{clip_to_frame, BBox, PriorTable, RegressionTarget, NUM_PRIORS};
use crate::sampling::{assign_adjacency, zoom_label};
use crate::seeds::{self, Domain};

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("region [{0},{1},{2},{3}] lies fully outside the frame")]
    RegionOutsideFrame(f64, f64, f64, f64),
    #[error("feature length {got} does not match model input length {expected}")]
    FeatureLengthMismatch { got: usize, expected: usize },
    #[error("model file: {0}")]
    ModelFile(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// One adjacency prediction: a confidence score and a box regression for
/// one prior of the anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjacencyPrediction {
    pub prior_index: usize,
    pub confidence: f64,
    pub regression: RegressionTarget,
}

/// A single predictor evaluation: the zoom indicator plus exactly
/// [`NUM_PRIORS`] adjacency predictions, one per prior in index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoomAdjacencyOutput {
    pub zoom: f64,
    pub adjacency: Vec<AdjacencyPrediction>,
}

impl ZoomAdjacencyOutput {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.zoom) {
            return Err(format!("zoom {} outside [0,1]", self.zoom));
        }
        if self.adjacency.len() != NUM_PRIORS {
            return Err(format!("expected {NUM_PRIORS} adjacency entries"));
        }
        for (i, a) in self.adjacency.iter().enumerate() {
            if a.prior_index != i {
                return Err(format!("adjacency {i} carries prior_index {}", a.prior_index));
            }
            if !(0.0..=1.0).contains(&a.confidence) {
                return Err(format!("confidence {} outside [0,1]", a.confidence));
            }
        }
        Ok(())
    }
}

/// Anything that can score an anchor region.
pub trait Predictor {
    fn predict(&self, anchor: &BBox) -> Result<ZoomAdjacencyOutput, PredictorError>;
}

/// Max-pool a feature grid over `region`, partitioned into `g x g` cells.
///
/// The region is clipped to the frame and divided into an even real-valued
/// grid; a pixel belongs to a cell when its center falls inside. Each
/// cell's value is the maximum over its pixels (zero when the cell covers
/// none). Output is channel-major, then row-major: length
/// `channels * g * g`.
pub fn pool_region(
    grid: &FeatureGrid,
    region: &BBox,
    g: usize,
) -> Result<Vec<f64>, PredictorError> {
    let clipped = clip_to_frame(region, grid.width as f64, grid.height as f64)
        .ok_or(PredictorError::RegionOutsideFrame(region.x1, region.y1, region.x2, region.y2))?;

    // pixel index range [lo, hi) covered by the cell span [a, b)
    let pixel_range = |a: f64, b: f64, n: usize| -> (usize, usize) {
        let lo = (a - 0.5).ceil().max(0.0) as usize;
        let hi = ((b - 0.5).ceil() as isize).clamp(0, n as isize) as usize;
        (lo, hi.max(lo))
    };

    let cw = clipped.width() / g as f64;
    let ch = clipped.height() / g as f64;
    let mut out = vec![0.0; grid.channels * g * g];
    for c in 0..grid.channels {
        for gy in 0..g {
            let (y_lo, y_hi) =
                pixel_range(clipped.y1 + gy as f64 * ch, clipped.y1 + (gy + 1) as f64 * ch, grid.height);
            for gx in 0..g {
                let (x_lo, x_hi) = pixel_range(
                    clipped.x1 + gx as f64 * cw,
                    clipped.x1 + (gx + 1) as f64 * cw,
                    grid.width,
                );
                let mut best = f64::NEG_INFINITY;
                for y in y_lo..y_hi {
                    for &v in &grid.row(c, y)[x_lo..x_hi] {
                        if v > best {
                            best = v;
                        }
                    }
                }
                out[(c * g + gy) * g + gx] = if best.is_finite() { best } else { 0.0 };
            }
        }
    }
    Ok(out)
}

/// Number of regression outputs: four per prior.
pub const REG_OUTPUTS: usize = 4 * NUM_PRIORS;

/// Weights of the trainable predictor. All matrices are row-major with one
/// row per output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    pub version: u32,
    /// Pooling grid size (g x g cells per channel).
    pub g: usize,
    /// Hidden layer width.
    #[serde(rename = "H")]
    pub hidden: usize,
    /// Feature grid channels pooled from.
    pub channels: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w_zoom: Vec<f64>,
    pub b_zoom: f64,
    pub w_conf: Vec<f64>,
    pub b_conf: Vec<f64>,
    pub w_reg: Vec<f64>,
    pub b_reg: Vec<f64>,
}

pub const MODEL_VERSION: u32 = 1;

impl ModelParameters {
    pub fn feature_len(&self) -> usize {
        self.channels * self.g * self.g
    }

    /// Seeded uniform init in [-0.05, 0.05], biases zero.
    pub fn init(g: usize, hidden: usize, channels: usize, seed: u64) -> Self {
        let mut rng = seeds::substream(seed, Domain::WeightInit, 0);
        let feature_len = channels * g * g;
        let mut uniform = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-0.05..0.05)).collect()
        };
        ModelParameters {
            version: MODEL_VERSION,
            g,
            hidden,
            channels,
            w1: uniform(hidden * feature_len),
            b1: vec![0.0; hidden],
            w_zoom: uniform(hidden),
            b_zoom: 0.0,
            w_conf: uniform(NUM_PRIORS * hidden),
            b_conf: vec![0.0; NUM_PRIORS],
            w_reg: uniform(REG_OUTPUTS * hidden),
            b_reg: vec![0.0; REG_OUTPUTS],
        }
    }

    /// All-zero parameters, mostly useful in tests (every sigmoid output
    /// is exactly 0.5).
    pub fn zeros(g: usize, hidden: usize, channels: usize) -> Self {
        let feature_len = channels * g * g;
        ModelParameters {
            version: MODEL_VERSION,
            g,
            hidden,
            channels,
            w1: vec![0.0; hidden * feature_len],
            b1: vec![0.0; hidden],
            w_zoom: vec![0.0; hidden],
            b_zoom: 0.0,
            w_conf: vec![0.0; NUM_PRIORS * hidden],
            b_conf: vec![0.0; NUM_PRIORS],
            w_reg: vec![0.0; REG_OUTPUTS * hidden],
            b_reg: vec![0.0; REG_OUTPUTS],
        }
    }

    pub fn validate(&self) -> Result<(), PredictorError> {
        let bad = |msg: String| Err(PredictorError::ModelFile(msg));
        if self.version != MODEL_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        if self.g == 0 || self.hidden == 0 || self.channels == 0 {
            return bad("g, H and channels must be positive".into());
        }
        let f = self.feature_len();
        let shapes = [
            ("w1", self.w1.len(), self.hidden * f),
            ("b1", self.b1.len(), self.hidden),
            ("w_zoom", self.w_zoom.len(), self.hidden),
            ("w_conf", self.w_conf.len(), NUM_PRIORS * self.hidden),
            ("b_conf", self.b_conf.len(), NUM_PRIORS),
            ("w_reg", self.w_reg.len(), REG_OUTPUTS * self.hidden),
            ("b_reg", self.b_reg.len(), REG_OUTPUTS),
        ];
        for (name, got, expected) in shapes {
            if got != expected {
                return bad(format!("{name} has length {got}, expected {expected}"));
            }
        }
        let finite = self.w1.iter().chain(&self.b1).chain(&self.w_zoom).chain(&self.w_conf)
            .chain(&self.b_conf).chain(&self.w_reg).chain(&self.b_reg)
            .all(|v| v.is_finite())
            && self.b_zoom.is_finite();
        if !finite {
            return bad("parameters contain non-finite values".into());
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), PredictorError> {
        let mut file = std::fs::File::create(path)?;
        serde_json::to_writer(&mut file, self)?;
        file.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PredictorError> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let params: ModelParameters = serde_json::from_reader(reader)?;
        params.validate()?;
        Ok(params)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Forward evaluation with every intermediate retained for
/// backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub features: Vec<f64>,
    /// Hidden pre-activations (before ReLU).
    pub hidden_pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub zoom_logit: f64,
    pub conf_logits: Vec<f64>,
    /// Raw regression outputs, four per prior.
    pub regression: Vec<f64>,
}

impl ForwardPass {
    /// Assemble the predictor output: sigmoid zoom/confidences, raw
    /// regression grouped four-per-prior.
    pub fn output(&self) -> ZoomAdjacencyOutput {
        ZoomAdjacencyOutput {
            zoom: sigmoid(self.zoom_logit),
            adjacency: (0..NUM_PRIORS)
                .map(|i| AdjacencyPrediction {
                    prior_index: i,
                    confidence: sigmoid(self.conf_logits[i]),
                    regression: RegressionTarget::new(
                        self.regression[4 * i],
                        self.regression[4 * i + 1],
                        self.regression[4 * i + 2],
                        self.regression[4 * i + 3],
                    ),
                })
                .collect(),
        }
    }
}

/// hidden = relu(W1 f + b1); zoom/confidence logits and raw regression
/// from the three linear heads.
pub fn forward(params: &ModelParameters, features: &[f64]) -> Result<ForwardPass, PredictorError> {
    let f = params.feature_len();
    if features.len() != f {
        return Err(PredictorError::FeatureLengthMismatch { got: features.len(), expected: f });
    }

    let matvec = |w: &[f64], b: &[f64], x: &[f64], rows: usize| -> Vec<f64> {
        (0..rows)
            .map(|r| {
                let row = &w[r * x.len()..(r + 1) * x.len()];
                row.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b[r]
            })
            .collect()
    };

    let hidden_pre = matvec(&params.w1, &params.b1, features, params.hidden);
    let hidden: Vec<f64> = hidden_pre.iter().map(|&z| z.max(0.0)).collect();

    let zoom_logit = params
        .w_zoom
        .iter()
        .zip(&hidden)
        .map(|(w, h)| w * h)
        .sum::<f64>()
        + params.b_zoom;
    let conf_logits = matvec(&params.w_conf, &params.b_conf, &hidden, NUM_PRIORS);
    let regression = matvec(&params.w_reg, &params.b_reg, &hidden, REG_OUTPUTS);

    Ok(ForwardPass { features: features.to_vec(), hidden_pre, hidden, zoom_logit, conf_logits, regression })
}

/// Perfect predictor driven by ground truth: the zoom label as a 0/1
/// indicator and confidence 1 with the exact regression for every prior
/// the greedy assignment matches to an object.
pub struct OraclePredictor<'a> {
    pub scene: &'a Scene,
    pub priors: &'a PriorTable,
    pub iou_assign_threshold: f64,
}

impl<'a> OraclePredictor<'a> {
    pub fn new(scene: &'a Scene, priors: &'a PriorTable, iou_assign_threshold: f64) -> Self {
        OraclePredictor { scene, priors, iou_assign_threshold }
    }
}

impl Predictor for OraclePredictor<'_> {
    fn predict(&self, anchor: &BBox) -> Result<ZoomAdjacencyOutput, PredictorError> {
        let labels =
            assign_adjacency(anchor, &self.scene.objects, self.priors, self.iou_assign_threshold);
        Ok(ZoomAdjacencyOutput {
            zoom: if zoom_label(anchor, &self.scene.objects) { 1.0 } else { 0.0 },
            adjacency: labels
                .into_iter()
                .enumerate()
                .map(|(i, l)| AdjacencyPrediction {
                    prior_index: i,
                    confidence: if l.positive { 1.0 } else { 0.0 },
                    regression: l.target.unwrap_or(RegressionTarget::ZERO),
                })
                .collect(),
        })
    }
}

/// Control baseline: seeded uniform zoom and confidences, zero regression.
/// Each anchor draws from its own substream so outputs are deterministic
/// per `(seed, anchor)` yet independent across anchors.
pub struct RandomPredictor {
    pub seed: u64,
}

impl Predictor for RandomPredictor {
    fn predict(&self, anchor: &BBox) -> Result<ZoomAdjacencyOutput, PredictorError> {
        let mut bytes = [0u8; 32];
        for (chunk, v) in
            bytes.chunks_exact_mut(8).zip([anchor.x1, anchor.y1, anchor.x2, anchor.y2])
        {
            chunk.copy_from_slice(&v.to_bits().to_le_bytes());
        }
        let mut rng =
            seeds::substream(self.seed, Domain::RandomPredict, seeds::stable_hash(&bytes));
        Ok(ZoomAdjacencyOutput {
            zoom: rng.random::<f64>(),
            adjacency: (0..NUM_PRIORS)
                .map(|i| AdjacencyPrediction {
                    prior_index: i,
                    confidence: rng.random::<f64>(),
                    regression: RegressionTarget::ZERO,
                })
                .collect(),
        })
    }
}

/// Trained-model predictor: pool the feature grid over the anchor, run the
/// network.
pub struct ModelPredictor<'a> {
    pub params: &'a ModelParameters,
    pub grid: &'a FeatureGrid,
}

impl<'a> ModelPredictor<'a> {
    pub fn new(params: &'a ModelParameters, grid: &'a FeatureGrid) -> Self {
        ModelPredictor { params, grid }
    }
}

impl Predictor for ModelPredictor<'_> {
    fn predict(&self, anchor: &BBox) -> Result<ZoomAdjacencyOutput, PredictorError> {
        let features = pool_region(self.grid, anchor, self.params.g)?;
        Ok(forward(self.params, &features)?.output())
    }
}
