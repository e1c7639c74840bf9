//! Training-set construction: zoom and adjacency label assignment,
//! inverse matching of objects to prior templates, and noisy-label-driven
//! hard-example mining.
//!
//! Labeling rules:
//!
//! - the zoom label of a region is 1 iff some object has at least 50% of
//!   its area inside the region and the object area is at most 25% of the
//!   region area (both boundaries inclusive);
//! - objects overlapping the anchor sufficiently (IoU at or above the
//!   assignment threshold) are greedily matched to the anchor's
//!   instantiated prior boxes by descending IoU, each object and prior
//!   used at most once. Regression targets are encoded against the
//!   instantiated prior box, so a perfect fit yields the zero target.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{hflip, Scene, SceneObject};
use crate::geometry::{
    divide_region, encode_box, instantiate_prior, BBox, PriorTable, PriorTemplate,
    RegressionTarget, NUM_PRIORS,
};
use crate::seeds::{self, Domain};

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("sample line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("sample line {line}: {reason}")]
    Invalid { line: usize, reason: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Label slot for one prior of one anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorLabel {
    /// Confidence label: does this prior detect an object from here?
    pub positive: bool,
    /// Regression target toward the matched object, present iff
    /// `positive`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<RegressionTarget>,
}

impl PriorLabel {
    pub fn negative() -> Self {
        PriorLabel { positive: false, target: None }
    }
}

/// How a training anchor was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleSource {
    /// Inverse matching: the anchor sees an object as a perfect fit to one
    /// of its priors.
    InverseMatch,
    /// Visited by the noisy label-driven search traversal.
    Mined,
}

/// An anchor region paired with its zoom label and per-prior
/// confidence/regression labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub scene_id: String,
    /// True when the anchor refers to the horizontally flipped variant of
    /// the scene (the feature grid must be rendered from the flipped
    /// scene).
    #[serde(default)]
    pub flipped: bool,
    pub anchor: BBox,
    pub zoom: bool,
    pub priors: Vec<PriorLabel>,
    pub source: SampleSource,
}

impl TrainingSample {
    pub fn validate(&self) -> Result<(), String> {
        if !self.anchor.is_valid() {
            return Err("anchor box is degenerate".into());
        }
        if self.priors.len() != NUM_PRIORS {
            return Err(format!("expected {NUM_PRIORS} prior slots, got {}", self.priors.len()));
        }
        for (i, p) in self.priors.iter().enumerate() {
            match (&p.positive, &p.target) {
                (true, None) => return Err(format!("prior {i} positive but has no target")),
                (false, Some(_)) => return Err(format!("prior {i} negative but has a target")),
                (true, Some(t)) if !t.is_finite() => {
                    return Err(format!("prior {i} target is not finite"))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Zoom indicator label: 1 iff some object has >= 50% of its area inside
/// the region and its area is at most 25% of the region area.
pub fn zoom_label(region: &BBox, objects: &[SceneObject]) -> bool {
    objects.iter().any(|o| {
        o.bbox.intersection_area(region) >= 0.5 * o.bbox.area()
            && o.bbox.area() <= 0.25 * region.area()
    })
}

/// Greedy adjacency assignment for one anchor.
///
/// Candidate objects are those overlapping the anchor or any of its
/// instantiated priors at or above `iou_assign_threshold` (the stripe and
/// neighbor priors reach beyond the anchor, which is what catches objects
/// falling in the gaps between anchors). Candidates are matched to priors
/// by repeatedly taking the highest-IoU (object, prior) pair; each object
/// and each prior is used at most once, so several priors can fire for one
/// anchor but never for the same object twice.
pub fn assign_adjacency(
    anchor: &BBox,
    objects: &[SceneObject],
    priors: &PriorTable,
    iou_assign_threshold: f64,
) -> Vec<PriorLabel> {
    let mut labels = vec![PriorLabel::negative(); NUM_PRIORS];

    let prior_boxes: Vec<BBox> =
        priors.templates().iter().map(|p| instantiate_prior(anchor, p)).collect();

    let candidates: Vec<&SceneObject> = objects
        .iter()
        .filter(|o| {
            o.bbox.iou(anchor) >= iou_assign_threshold
                || prior_boxes.iter().any(|p| o.bbox.iou(p) >= iou_assign_threshold)
        })
        .collect();
    if candidates.is_empty() {
        return labels;
    }

    let mut object_used = vec![false; candidates.len()];
    let mut prior_used = [false; NUM_PRIORS];
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for (oi, obj) in candidates.iter().enumerate() {
            if object_used[oi] {
                continue;
            }
            for (pi, pbox) in prior_boxes.iter().enumerate() {
                if prior_used[pi] {
                    continue;
                }
                let v = obj.bbox.iou(pbox);
                // strictly-better wins; scan order (object, prior) breaks ties
                if v > 0.0 && best.is_none_or(|(bv, _, _)| v > bv) {
                    best = Some((v, oi, pi));
                }
            }
        }
        let Some((_, oi, pi)) = best else { break };
        object_used[oi] = true;
        prior_used[pi] = true;
        labels[pi] = PriorLabel {
            positive: true,
            target: Some(encode_box(&prior_boxes[pi], &candidates[oi].bbox)),
        };
    }
    labels
}

/// The unique anchor for which `instantiate_prior(anchor, p) == object`.
pub fn inverse_match(object: &BBox, p: &PriorTemplate) -> BBox {
    let aw = object.width() / p.rect.width();
    let ah = object.height() / p.rect.height();
    let x1 = object.x1 - p.rect.x1 * aw;
    let y1 = object.y1 - p.rect.y1 * ah;
    BBox { x1, y1, x2: x1 + aw, y2: y1 + ah }
}

/// One training sample per (object, prior) pair: the anchor that sees the
/// object as a perfect fit to that prior. Anchors may extend outside the
/// frame and are deliberately kept unclipped.
pub fn build_inverse_samples(
    scene: &Scene,
    priors: &PriorTable,
    iou_assign_threshold: f64,
) -> Vec<TrainingSample> {
    let mut samples = Vec::with_capacity(scene.objects.len() * NUM_PRIORS);
    for obj in &scene.objects {
        for template in priors.templates() {
            let anchor = inverse_match(&obj.bbox, template);
            samples.push(TrainingSample {
                scene_id: scene.id.clone(),
                flipped: false,
                anchor,
                zoom: zoom_label(&anchor, &scene.objects),
                priors: assign_adjacency(&anchor, &scene.objects, priors, iou_assign_threshold),
                source: SampleSource::InverseMatch,
            });
        }
    }
    samples
}

/// Hard-example mining parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MiningOptions {
    /// Probability of flipping the ground-truth zoom decision while
    /// traversing.
    pub flip_prob: f64,
    /// Number of independent traversals per scene.
    pub repeats: usize,
    /// Regions are not divided once their children would fall below this
    /// side length.
    pub min_region_side: f64,
    /// Depth cap on the traversal (root is depth 0).
    pub max_depth: usize,
}

impl Default for MiningOptions {
    fn default() -> Self {
        MiningOptions { flip_prob: 0.3, repeats: 3, min_region_side: 16.0, max_depth: 8 }
    }
}

/// Counters over the Bernoulli zoom-flip stream, for auditing the flip
/// rate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MiningStats {
    pub decisions: u64,
    pub flips: u64,
}

impl MiningStats {
    pub fn merge(&mut self, other: MiningStats) {
        self.decisions += other.decisions;
        self.flips += other.flips;
    }

    pub fn flip_rate(&self) -> f64 {
        if self.decisions == 0 {
            0.0
        } else {
            self.flips as f64 / self.decisions as f64
        }
    }
}

/// Mine training anchors by running the adaptive-search traversal with the
/// zoom prediction replaced by the ground-truth zoom label, flipped with
/// probability `flip_prob`.
///
/// Each repeat starts from the whole frame (emitted as a root sample) and
/// the five sub-images of its division. Every visited region becomes a
/// sample with its true (unflipped) labels; the noise only steers the
/// traversal. Deterministic per `(scene, seed, repeat)`.
pub fn mine_samples(
    scene: &Scene,
    priors: &PriorTable,
    iou_assign_threshold: f64,
    options: &MiningOptions,
    seed: u64,
) -> (Vec<TrainingSample>, MiningStats) {
    let mut samples = Vec::new();
    let mut stats = MiningStats::default();
    let frame = scene.frame();

    let make_sample = |region: &BBox| TrainingSample {
        scene_id: scene.id.clone(),
        flipped: false,
        anchor: *region,
        zoom: zoom_label(region, &scene.objects),
        priors: assign_adjacency(region, &scene.objects, priors, iou_assign_threshold),
        source: SampleSource::Mined,
    };

    for repeat in 0..options.repeats {
        let stream = seeds::stable_hash(format!("{}|{repeat}", scene.id).as_bytes());
        let mut rng = seeds::substream(seed, Domain::Mining, stream);

        samples.push(make_sample(&frame));
        let mut queue: VecDeque<(BBox, usize)> =
            divide_region(&frame).into_iter().map(|b| (b, 1)).collect();

        while let Some((region, depth)) = queue.pop_front() {
            samples.push(make_sample(&region));

            let label = zoom_label(&region, &scene.objects);
            let flip = rng.random_bool(options.flip_prob);
            stats.decisions += 1;
            if flip {
                stats.flips += 1;
            }
            let descend = label != flip;
            if descend && depth < options.max_depth && region.min_side() / 2.0 >= options.min_region_side
            {
                queue.extend(divide_region(&region).into_iter().map(|b| (b, depth + 1)));
            }
        }
    }
    (samples, stats)
}

/// Options for [`build_training_set`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingSetOptions {
    /// IoU gate between an object and an anchor for adjacency assignment.
    pub iou_assign_threshold: f64,
    /// Append horizontally flipped scenes.
    pub hflip: bool,
    /// Hard-example mining; `None` keeps only inverse-matched samples.
    pub mining: Option<MiningOptions>,
}

impl Default for TrainingSetOptions {
    fn default() -> Self {
        TrainingSetOptions {
            iou_assign_threshold: 0.25,
            hflip: true,
            mining: Some(MiningOptions::default()),
        }
    }
}

/// Samples for one scene and (when enabled) its horizontal flip. The
/// result depends only on `(scene, options, seed)`, so scenes can be
/// processed in any order or in parallel.
pub fn scene_training_samples(
    scene: &Scene,
    priors: &PriorTable,
    options: &TrainingSetOptions,
    seed: u64,
) -> (Vec<TrainingSample>, MiningStats) {
    let mut samples = Vec::new();
    let mut stats = MiningStats::default();

    let mut process = |scene: &Scene, flipped: bool| {
        let mut scene_samples =
            build_inverse_samples(scene, priors, options.iou_assign_threshold);
        if let Some(mining) = &options.mining {
            // distinct mining streams for the flipped variant
            let mut mined_scene = scene.clone();
            if flipped {
                mined_scene.id = format!("{}|hflip", scene.id);
            }
            let (mut mined, mined_stats) =
                mine_samples(&mined_scene, priors, options.iou_assign_threshold, mining, seed);
            for s in &mut mined {
                s.scene_id = scene.id.clone();
            }
            stats.merge(mined_stats);
            scene_samples.append(&mut mined);
        }
        for s in &mut scene_samples {
            s.flipped = flipped;
        }
        samples.append(&mut scene_samples);
    };

    process(scene, false);
    if options.hflip {
        process(&hflip(scene), true);
    }
    (samples, stats)
}

/// Shuffle samples in place with the seeded permutation substream.
pub fn shuffle_samples(samples: &mut [TrainingSample], seed: u64) {
    let mut rng = seeds::substream(seed, Domain::Shuffle, 0);
    // Fisher-Yates
    for i in (1..samples.len()).rev() {
        samples.swap(i, rng.random_range(0..=i));
    }
}

/// Build the full training set: inverse-matched plus mined samples for
/// every scene (and its horizontal flip when enabled), shuffled by a
/// seeded permutation.
pub fn build_training_set(
    scenes: &[Scene],
    priors: &PriorTable,
    options: &TrainingSetOptions,
    seed: u64,
) -> (Vec<TrainingSample>, MiningStats) {
    let mut samples = Vec::new();
    let mut stats = MiningStats::default();
    for scene in scenes {
        let (mut scene_samples, scene_stats) =
            scene_training_samples(scene, priors, options, seed);
        stats.merge(scene_stats);
        samples.append(&mut scene_samples);
    }
    shuffle_samples(&mut samples, seed);
    (samples, stats)
}

/// Write samples as JSON lines.
pub fn save_samples(samples: &[TrainingSample], path: &Path) -> Result<(), SamplingError> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for s in samples {
        serde_json::to_writer(&mut file, s)?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

/// Read and validate samples from JSON lines.
pub fn load_samples(path: &Path) -> Result<Vec<TrainingSample>, SamplingError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut samples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: TrainingSample = serde_json::from_str(&line)
            .map_err(|source| SamplingError::Parse { line: i + 1, source })?;
        sample
            .validate()
            .map_err(|reason| SamplingError::Invalid { line: i + 1, reason })?;
        samples.push(sample);
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PriorKind;
    use proptest::prelude::*;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn obj(b: BBox) -> SceneObject {
        SceneObject { bbox: b, class_id: 0, intensity: 1.0 }
    }

    fn scene_with(objects: Vec<SceneObject>) -> Scene {
        Scene { id: "s".into(), width: 512, height: 512, objects }
    }

    #[test]
    fn zoom_label_boundary_cases() {
        let region = bb(0.0, 0.0, 100.0, 100.0);
        // area exactly 25%, fully inside -> 1
        assert!(zoom_label(&region, &[obj(bb(10.0, 10.0, 60.0, 60.0))]));
        // 64% of region area -> too large
        assert!(!zoom_label(&region, &[obj(bb(0.0, 0.0, 80.0, 80.0))]));
        // only 4% of its own area inside -> mostly outside
        assert!(!zoom_label(&region, &[obj(bb(90.0, 90.0, 140.0, 140.0))]));
        // empty scene
        assert!(!zoom_label(&region, &[]));
    }

    #[test]
    fn assign_empty_scene_all_negative() {
        let priors = PriorTable::default();
        let labels = assign_adjacency(&bb(0.0, 0.0, 100.0, 100.0), &[], &priors, 0.25);
        assert_eq!(labels.len(), NUM_PRIORS);
        assert!(labels.iter().all(|l| !l.positive && l.target.is_none()));
    }

    #[test]
    fn assign_exact_anchor_matches_self_prior() {
        let priors = PriorTable::default();
        let anchor = bb(10.0, 20.0, 110.0, 140.0);
        let labels = assign_adjacency(&anchor, &[obj(anchor)], &priors, 0.25);
        assert!(labels[0].positive);
        let t = labels[0].target.unwrap();
        assert!(t.as_array().iter().all(|v| v.abs() < 1e-12));
        assert!(labels[1..].iter().all(|l| !l.positive));
    }

    #[test]
    fn assign_two_objects_two_priors() {
        let priors = PriorTable::default();
        let anchor = bb(0.0, 0.0, 100.0, 100.0);
        // exact fits for the left- and right-neighbor squares
        let left = obj(bb(-50.0, 0.0, 50.0, 100.0));
        let right = obj(bb(50.0, 0.0, 150.0, 100.0));
        let labels = assign_adjacency(&anchor, &[left, right], &priors, 0.25);
        assert!(labels[7].positive, "left-neighbor prior fires");
        assert!(labels[8].positive, "right-neighbor prior fires");
        assert!(labels[7].target.unwrap().as_array().iter().all(|v| v.abs() < 1e-12));
        assert!(labels[8].target.unwrap().as_array().iter().all(|v| v.abs() < 1e-12));
        assert_eq!(labels.iter().filter(|l| l.positive).count(), 2);
    }

    #[test]
    fn inverse_match_hand_example() {
        let priors = PriorTable::default();
        // right-neighbor square [0.5,0,1.5,1]
        let anchor = inverse_match(&bb(100.0, 100.0, 150.0, 150.0), priors.get(8));
        assert_eq!(anchor, bb(75.0, 100.0, 125.0, 150.0));
        // self prior: anchor is the object
        let o = bb(3.0, 4.0, 10.0, 9.0);
        assert_eq!(inverse_match(&o, priors.get(0)), o);
    }

    #[test]
    fn inverse_samples_count_and_self_consistency() {
        let priors = PriorTable::default();
        let scene = scene_with(vec![
            obj(bb(100.0, 100.0, 140.0, 130.0)),
            obj(bb(300.0, 50.0, 330.0, 90.0)),
            obj(bb(200.0, 400.0, 280.0, 460.0)),
        ]);
        let samples = build_inverse_samples(&scene, &priors, 0.25);
        assert_eq!(samples.len(), 3 * NUM_PRIORS);
        for (i, sample) in samples.iter().enumerate() {
            sample.validate().unwrap();
            assert_eq!(sample.source, SampleSource::InverseMatch);
            let generating_prior = i % NUM_PRIORS;
            let label = &sample.priors[generating_prior];
            assert!(label.positive, "sample {i}: generating prior fires");
            let t = label.target.unwrap();
            assert!(
                t.as_array().iter().all(|v| v.abs() < 1e-9),
                "sample {i}: perfect fit encodes to zero, got {t:?}"
            );
        }
        assert!(build_inverse_samples(&scene_with(vec![]), &priors, 0.25).is_empty());
    }

    #[test]
    fn mining_huge_objects_stops_at_depth_one() {
        let priors = PriorTable::default();
        // both objects exceed 25% of the frame area
        let scene = scene_with(vec![
            obj(bb(0.0, 0.0, 300.0, 300.0)),
            obj(bb(200.0, 200.0, 500.0, 500.0)),
        ]);
        let options = MiningOptions { flip_prob: 0.0, repeats: 1, ..MiningOptions::default() };
        let (samples, stats) = mine_samples(&scene, &priors, 0.25, &options, 11);
        assert_eq!(samples.len(), 6, "frame plus five sub-images");
        assert_eq!(stats.decisions, 5);
        assert_eq!(stats.flips, 0);
    }

    #[test]
    fn mining_is_deterministic() {
        let priors = PriorTable::default();
        let scene = scene_with(vec![obj(bb(100.0, 100.0, 130.0, 130.0))]);
        let options = MiningOptions::default();
        let (a, sa) = mine_samples(&scene, &priors, 0.25, &options, 5);
        let (b, sb) = mine_samples(&scene, &priors, 0.25, &options, 5);
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        let (c, _) = mine_samples(&scene, &priors, 0.25, &options, 6);
        assert_ne!(a, c);
    }

    #[test]
    fn mining_labels_are_true_labels() {
        let priors = PriorTable::default();
        let scene = scene_with(vec![obj(bb(100.0, 100.0, 130.0, 130.0))]);
        let options = MiningOptions { flip_prob: 0.5, ..MiningOptions::default() };
        let (samples, _) = mine_samples(&scene, &priors, 0.25, &options, 3);
        for s in &samples {
            assert_eq!(s.zoom, zoom_label(&s.anchor, &scene.objects));
            assert_eq!(s.priors, assign_adjacency(&s.anchor, &scene.objects, &priors, 0.25));
        }
    }

    #[test]
    fn flip_rate_matches_bernoulli() {
        let priors = PriorTable::default();
        // small objects spread out, so traversals go deep and many
        // decisions accumulate
        let scene = scene_with(vec![
            obj(bb(50.0, 50.0, 70.0, 70.0)),
            obj(bb(400.0, 100.0, 425.0, 125.0)),
            obj(bb(200.0, 380.0, 230.0, 410.0)),
        ]);
        let options = MiningOptions { repeats: 60, ..MiningOptions::default() };
        let (_, stats) = mine_samples(&scene, &priors, 0.25, &options, 123);
        assert!(stats.decisions >= 1000, "need >= 1000 decisions, got {}", stats.decisions);
        let rate = stats.flip_rate();
        assert!((rate - 0.3).abs() <= 0.05, "flip rate {rate} outside 0.3 +/- 0.05");
    }

    #[test]
    fn training_set_without_mining_or_flip_is_k_times_11() {
        let priors = PriorTable::default();
        let scenes = vec![
            scene_with(vec![obj(bb(10.0, 10.0, 40.0, 40.0)), obj(bb(100.0, 100.0, 150.0, 160.0))]),
            {
                let mut s = scene_with(vec![obj(bb(200.0, 200.0, 260.0, 240.0))]);
                s.id = "s2".into();
                s
            },
        ];
        let options =
            TrainingSetOptions { iou_assign_threshold: 0.25, hflip: false, mining: None };
        let (samples, stats) = build_training_set(&scenes, &priors, &options, 1);
        assert_eq!(samples.len(), (2 + 1) * NUM_PRIORS);
        assert_eq!(stats.decisions, 0);
    }

    #[test]
    fn training_set_hflip_doubles_inverse_samples() {
        let priors = PriorTable::default();
        let scenes = vec![scene_with(vec![obj(bb(10.0, 10.0, 40.0, 40.0))])];
        let base = TrainingSetOptions { iou_assign_threshold: 0.25, hflip: false, mining: None };
        let flipped = TrainingSetOptions { hflip: true, ..base.clone() };
        let (a, _) = build_training_set(&scenes, &priors, &base, 1);
        let (b, _) = build_training_set(&scenes, &priors, &flipped, 1);
        assert_eq!(b.len(), 2 * a.len());
        assert!(b.iter().any(|s| s.flipped));
        for s in &b {
            s.validate().unwrap();
        }
    }

    #[test]
    fn samples_round_trip_jsonl() {
        let priors = PriorTable::default();
        let scene = scene_with(vec![obj(bb(100.0, 100.0, 130.0, 130.0))]);
        let (samples, _) =
            build_training_set(&[scene], &priors, &TrainingSetOptions::default(), 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.jsonl");
        save_samples(&samples, &path).unwrap();
        assert_eq!(load_samples(&path).unwrap(), samples);
    }

    #[test]
    fn load_rejects_positive_prior_without_target() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let mut priors = vec![r#"{"positive":false}"#.to_string(); NUM_PRIORS];
        priors[3] = r#"{"positive":true}"#.into();
        let line = format!(
            r#"{{"scene_id":"x","anchor":[0,0,10,10],"zoom":false,"priors":[{}],"source":"mined"}}"#,
            priors.join(",")
        );
        std::fs::write(&path, line).unwrap();
        assert!(matches!(load_samples(&path), Err(SamplingError::Invalid { line: 1, .. })));
    }

    prop_compose! {
        fn arb_box()(x1 in -200.0..600.0f64, y1 in -200.0..600.0f64,
                     w in 0.5..300.0f64, h in 0.5..300.0f64) -> BBox {
            BBox { x1, y1, x2: x1 + w, y2: y1 + h }
        }
    }

    proptest! {
        #[test]
        fn inverse_and_instantiate_are_mutual_inverses(
            object in arb_box(),
            idx in 0usize..NUM_PRIORS,
        ) {
            let table = PriorTable::default();
            let p = table.get(idx);
            let anchor = inverse_match(&object, p);
            let back = instantiate_prior(&anchor, p);
            let tol = 1e-9 * (1.0 + object.x2.abs() + object.y2.abs());
            prop_assert!((back.x1 - object.x1).abs() < tol);
            prop_assert!((back.y1 - object.y1).abs() < tol);
            prop_assert!((back.x2 - object.x2).abs() < tol);
            prop_assert!((back.y2 - object.y2).abs() < tol);
            // and the anchor is the prior's kind of neighborhood: valid box
            prop_assert!(anchor.is_valid());
            let _ = PriorKind::SelfRegion;
        }

        #[test]
        fn assignment_is_an_injective_matching(
            boxes in proptest::collection::vec(arb_box(), 1..6),
            anchor in arb_box(),
        ) {
            let table = PriorTable::default();
            let objects: Vec<SceneObject> = boxes.into_iter().map(obj).collect();
            let labels = assign_adjacency(&anchor, &objects, &table, 0.25);
            prop_assert_eq!(labels.len(), NUM_PRIORS);
            // at most one object per prior is structural; at most one prior
            // per object follows from matched count <= candidate count
            let positives = labels.iter().filter(|l| l.positive).count();
            let candidates = objects
                .iter()
                .filter(|o| {
                    o.bbox.iou(&anchor) >= 0.25
                        || table
                            .templates()
                            .iter()
                            .any(|p| o.bbox.iou(&instantiate_prior(&anchor, p)) >= 0.25)
                })
                .count();
            prop_assert!(positives <= candidates.min(NUM_PRIORS));
            for l in &labels {
                prop_assert_eq!(l.positive, l.target.is_some());
            }
        }
    }
}
