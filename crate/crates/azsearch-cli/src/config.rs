//! Subcommand configuration files. Every field has a default, so a config
//! file only needs the keys it overrides; unknown keys are rejected to
//! catch typos.

use serde::{Deserialize, Serialize};

use azsearch::sampling::{MiningOptions, TrainingSetOptions};
use azsearch::search::{GridParams, SearchParams};
use azsearch::training::{LossWeights, TrainConfig};

/// Default noise level added to rendered intensity channels.
pub const DEFAULT_NOISE_SIGMA: f64 = 0.02;

/// Mining (training-set construction) config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MineConfig {
    pub iou_assign_threshold: f64,
    pub hflip: bool,
    pub mining: bool,
    pub flip_prob: f64,
    pub repeats: usize,
    /// Traversal stops dividing below this side length; `null` ties it to
    /// the frame (shorter side / 32).
    pub min_region_side: Option<f64>,
    pub max_depth: usize,
}

impl Default for MineConfig {
    fn default() -> Self {
        let mining = MiningOptions::default();
        MineConfig {
            iou_assign_threshold: 0.25,
            hflip: true,
            mining: true,
            flip_prob: mining.flip_prob,
            repeats: mining.repeats,
            min_region_side: None,
            max_depth: mining.max_depth,
        }
    }
}

impl MineConfig {
    pub fn training_set_options(&self, frame_min_side: f64) -> TrainingSetOptions {
        TrainingSetOptions {
            iou_assign_threshold: self.iou_assign_threshold,
            hflip: self.hflip,
            mining: self.mining.then(|| MiningOptions {
                flip_prob: self.flip_prob,
                repeats: self.repeats,
                min_region_side: self.min_region_side.unwrap_or(frame_min_side / 32.0),
                max_depth: self.max_depth,
            }),
        }
    }
}

/// Training config: model shape plus optimizer settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCliConfig {
    /// Pooling grid (g x g cells per channel).
    pub g: usize,
    /// Hidden layer width.
    pub hidden: usize,
    /// Feature grid channels.
    pub channels: usize,
    pub noise_sigma: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub minibatch: usize,
    pub iterations: usize,
    pub loss_weights: LossWeights,
}

impl Default for TrainCliConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainCliConfig {
            g: 6,
            hidden: 96,
            channels: 2,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            minibatch: t.minibatch,
            iterations: t.iterations,
            loss_weights: t.loss_weights,
        }
    }
}

impl TrainCliConfig {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            minibatch: self.minibatch,
            iterations: self.iterations,
            seed,
            loss_weights: self.loss_weights,
        }
    }
}

/// Search config for `propose` and the adaptive side of `compare`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposeConfig {
    pub zoom_threshold: f64,
    pub confidence_threshold: f64,
    /// `null` ties the cutoff to the frame (shorter side / 32).
    pub min_region_side: Option<f64>,
    pub max_steps: usize,
    pub top_k: usize,
    pub noise_sigma: f64,
}

impl Default for ProposeConfig {
    fn default() -> Self {
        let s = SearchParams::default();
        ProposeConfig {
            zoom_threshold: s.zoom_threshold,
            confidence_threshold: s.confidence_threshold,
            min_region_side: None,
            max_steps: s.max_steps,
            top_k: s.top_k,
            noise_sigma: DEFAULT_NOISE_SIGMA,
        }
    }
}

impl ProposeConfig {
    pub fn search_params(&self, frame_min_side: f64) -> SearchParams {
        SearchParams {
            zoom_threshold: self.zoom_threshold,
            confidence_threshold: self.confidence_threshold,
            min_region_side: self.min_region_side.unwrap_or(frame_min_side / 32.0),
            max_steps: self.max_steps,
            top_k: self.top_k,
        }
    }
}

/// Fixed-grid baseline config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub scales: Vec<f64>,
    pub ratios: Vec<f64>,
    pub stride: f64,
    pub confidence_threshold: f64,
}

impl Default for GridConfig {
    /// A four-octave grid dense enough to roughly match the oracle-driven
    /// adaptive search's recall on 512px frames while staying under the
    /// top-300 proposal budget per scene.
    fn default() -> Self {
        GridConfig {
            scales: vec![24.0, 48.0, 96.0, 192.0],
            ratios: vec![1.0],
            stride: 24.0,
            confidence_threshold: 0.05,
        }
    }
}

impl GridConfig {
    pub fn grid_params(&self) -> GridParams {
        GridParams {
            scales: self.scales.clone(),
            ratios: self.ratios.clone(),
            stride: self.stride,
            confidence_threshold: self.confidence_threshold,
        }
    }
}

/// Side-by-side comparison config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub search: ProposeConfig,
    pub grid: GridConfig,
    /// Proposal budget for the recall columns.
    pub top_n: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig { search: ProposeConfig::default(), grid: GridConfig::default(), top_n: 300 }
    }
}
