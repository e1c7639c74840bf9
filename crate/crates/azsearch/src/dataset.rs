//! Synthetic scenes: rectangle ground truth over a pixel frame, rendered
//! to small feature grids the predictor can pool from.
//!
//! Scenes stand in for photographic datasets at desk scale. Objects are
//! axis-aligned rectangles with a class id and a fill intensity; rendering
//! produces an intensity channel and a discrete edge channel.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;
use crate::seeds::{self, Domain};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("scene {id}: {reason}")]
    InvalidScene { id: String, reason: String },
    #[error("duplicate scene id {0}")]
    DuplicateId(String),
    #[error("scene config: {0}")]
    Config(String),
}

/// A ground-truth object: a box, a class id and the fill intensity used
/// when rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub class_id: u32,
    pub intensity: f64,
}

/// A synthetic image: frame dimensions plus ground-truth objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<SceneObject>,
}

impl Scene {
    /// The whole frame as a box.
    pub fn frame(&self) -> BBox {
        BBox { x1: 0.0, y1: 0.0, x2: f64::from(self.width), y2: f64::from(self.height) }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let fail = |reason: String| DatasetError::InvalidScene { id: self.id.clone(), reason };
        if self.width == 0 || self.height == 0 {
            return Err(fail("frame dimensions must be positive".into()));
        }
        for (i, obj) in self.objects.iter().enumerate() {
            if !obj.bbox.is_valid() {
                return Err(fail(format!("object {i} has a degenerate box")));
            }
            if !(obj.intensity > 0.0 && obj.intensity <= 1.0) {
                return Err(fail(format!("object {i} intensity {} outside (0,1]", obj.intensity)));
            }
            if !self.frame().contains(&obj.bbox) {
                return Err(fail(format!("object {i} extends outside the frame")));
            }
        }
        Ok(())
    }
}

/// Per-bucket object spec: how many rectangles to draw per scene and the
/// side-length range to draw them from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectBucket {
    pub count: usize,
    pub side_min: f64,
    pub side_max: f64,
}

/// Scene generation parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneGenConfig {
    pub frame_width: u32,
    pub frame_height: u32,
    pub buckets: Vec<ObjectBucket>,
    pub intensity_min: f64,
    pub intensity_max: f64,
    pub num_classes: u32,
}

impl Default for SceneGenConfig {
    /// 512x512 frames with a small/medium/large object mix. Bucket sides
    /// are chosen so areas land inside the evaluation size buckets
    /// (boundaries 32^2 and 96^2).
    fn default() -> Self {
        SceneGenConfig {
            frame_width: 512,
            frame_height: 512,
            buckets: vec![
                ObjectBucket { count: 2, side_min: 12.0, side_max: 30.0 },
                ObjectBucket { count: 2, side_min: 36.0, side_max: 90.0 },
                ObjectBucket { count: 1, side_min: 100.0, side_max: 220.0 },
            ],
            intensity_min: 0.4,
            intensity_max: 1.0,
            num_classes: 3,
        }
    }
}

impl SceneGenConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.frame_width == 0 || self.frame_height == 0 {
            return Err(DatasetError::Config("frame dimensions must be positive".into()));
        }
        let frame_min = f64::from(self.frame_width.min(self.frame_height));
        for (i, b) in self.buckets.iter().enumerate() {
            if !(b.side_min > 0.0 && b.side_max >= b.side_min) {
                return Err(DatasetError::Config(format!(
                    "bucket {i}: side range [{}, {}] is not a valid range",
                    b.side_min, b.side_max
                )));
            }
            if b.side_max > frame_min {
                return Err(DatasetError::Config(format!(
                    "bucket {i}: side_max {} exceeds frame min side {frame_min}",
                    b.side_max
                )));
            }
        }
        if !(self.intensity_min > 0.0
            && self.intensity_max <= 1.0
            && self.intensity_min <= self.intensity_max)
        {
            return Err(DatasetError::Config("intensity range must sit inside (0,1]".into()));
        }
        if self.num_classes == 0 {
            return Err(DatasetError::Config("num_classes must be at least 1".into()));
        }
        Ok(())
    }
}

/// Generate `n` scenes, deterministically for a fixed `(config, seed)`.
/// Scene `i` draws from its own seed substream, so generation order (or
/// parallelism) cannot affect the output.
pub fn generate_scenes(
    config: &SceneGenConfig,
    n: usize,
    seed: u64,
) -> Result<Vec<Scene>, DatasetError> {
    config.validate()?;
    let mut scenes = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = seeds::substream(seed, Domain::SceneGen, i as u64);
        let mut objects = Vec::new();
        for bucket in &config.buckets {
            for _ in 0..bucket.count {
                let w = rng.random_range(bucket.side_min..=bucket.side_max);
                let h = rng.random_range(bucket.side_min..=bucket.side_max);
                let x1 = rng.random_range(0.0..=(f64::from(config.frame_width) - w));
                let y1 = rng.random_range(0.0..=(f64::from(config.frame_height) - h));
                let intensity = rng.random_range(config.intensity_min..=config.intensity_max);
                let class_id = rng.random_range(0..config.num_classes);
                objects.push(SceneObject {
                    bbox: BBox { x1, y1, x2: x1 + w, y2: y1 + h },
                    class_id,
                    intensity,
                });
            }
        }
        scenes.push(Scene {
            id: format!("scene-{i:05}"),
            width: config.frame_width,
            height: config.frame_height,
            objects,
        });
    }
    Ok(scenes)
}

/// Channel-major scalar grid rendered from a scene. Channel 0 is object
/// intensity over a zero background, channel 1 the discrete gradient
/// magnitude of channel 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    values: Vec<f64>,
}

impl FeatureGrid {
    pub fn zeros(channels: usize, width: usize, height: usize) -> Self {
        FeatureGrid { channels, width, height, values: vec![0.0; channels * width * height] }
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f64 {
        self.values[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f64) {
        self.values[(c * self.height + y) * self.width + x] = v;
    }

    /// Row of channel `c` at `y`, for pooling without per-pixel indexing.
    #[inline]
    pub fn row(&self, c: usize, y: usize) -> &[f64] {
        let start = (c * self.height + y) * self.width;
        &self.values[start..start + self.width]
    }
}

/// Rasterize a scene into a two-channel feature grid. A pixel belongs to a
/// box when its center lies inside; overlapping objects composite by
/// maximum intensity. Gaussian noise with `noise_sigma` is added to the
/// intensity channel from the scene's render substream before the edge
/// channel is computed.
pub fn render(scene: &Scene, noise_sigma: f64, seed: u64) -> FeatureGrid {
    let w = scene.width as usize;
    let h = scene.height as usize;
    let mut grid = FeatureGrid::zeros(2, w, h);

    for obj in &scene.objects {
        // pixel centers (ix + 0.5, iy + 0.5) inside the box
        let x_start = (obj.bbox.x1 - 0.5).ceil().max(0.0) as usize;
        let x_end = ((obj.bbox.x2 - 0.5).ceil() as isize).clamp(0, w as isize) as usize;
        let y_start = (obj.bbox.y1 - 0.5).ceil().max(0.0) as usize;
        let y_end = ((obj.bbox.y2 - 0.5).ceil() as isize).clamp(0, h as isize) as usize;
        for y in y_start..y_end {
            for x in x_start..x_end {
                let v = grid.get(0, x, y);
                if obj.intensity > v {
                    grid.set(0, x, y, obj.intensity);
                }
            }
        }
    }

    if noise_sigma > 0.0 {
        let mut rng =
            seeds::substream(seed, Domain::Render, seeds::stable_hash(scene.id.as_bytes()));
        let normal = Normal::new(0.0, noise_sigma).expect("sigma is finite and positive");
        for y in 0..h {
            for x in 0..w {
                let v = grid.get(0, x, y) + normal.sample(&mut rng);
                grid.set(0, x, y, v);
            }
        }
    }

    // central-difference gradient magnitude with replicated borders
    for y in 0..h {
        for x in 0..w {
            let xl = grid.get(0, x.saturating_sub(1), y);
            let xr = grid.get(0, (x + 1).min(w - 1), y);
            let yu = grid.get(0, x, y.saturating_sub(1));
            let yd = grid.get(0, x, (y + 1).min(h - 1));
            let gx = (xr - xl) / 2.0;
            let gy = (yd - yu) / 2.0;
            grid.set(1, x, y, (gx * gx + gy * gy).sqrt());
        }
    }
    grid
}

/// Mirror a scene about its vertical centerline. An involution:
/// `hflip(hflip(s)) == s`.
pub fn hflip(scene: &Scene) -> Scene {
    let w = f64::from(scene.width);
    Scene {
        id: scene.id.clone(),
        width: scene.width,
        height: scene.height,
        objects: scene
            .objects
            .iter()
            .map(|o| SceneObject {
                bbox: BBox { x1: w - o.bbox.x2, y1: o.bbox.y1, x2: w - o.bbox.x1, y2: o.bbox.y2 },
                class_id: o.class_id,
                intensity: o.intensity,
            })
            .collect(),
    }
}

/// Write scenes as a JSON array.
pub fn save_scenes(scenes: &[Scene], path: &Path) -> Result<(), DatasetError> {
    let mut file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, scenes)?;
    file.write_all(b"\n")?;
    Ok(())
}

/// Load scenes from a JSON array, validating invariants and id uniqueness.
pub fn load_scenes(path: &Path) -> Result<Vec<Scene>, DatasetError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let scenes: Vec<Scene> = serde_json::from_reader(reader)?;
    validate_scenes(&scenes)?;
    Ok(scenes)
}

/// Invariant and id-uniqueness gate shared by loaders.
pub fn validate_scenes(scenes: &[Scene]) -> Result<(), DatasetError> {
    let mut ids = HashSet::new();
    for scene in scenes {
        scene.validate()?;
        if !ids.insert(scene.id.as_str()) {
            return Err(DatasetError::DuplicateId(scene.id.clone()));
        }
    }
    Ok(())
}

/// Read scenes back from a `BufRead`, used by callers that do not have a
/// filesystem path.
pub fn read_scenes<R: BufRead>(reader: R) -> Result<Vec<Scene>, DatasetError> {
    let scenes: Vec<Scene> = serde_json::from_reader(reader)?;
    validate_scenes(&scenes)?;
    Ok(scenes)
}
