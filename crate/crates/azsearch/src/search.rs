//! The adaptive anchor search and a fixed sliding-window baseline.
//!
//! The adaptive loop starts from the whole frame and grows a tree of
//! anchor regions breadth-first. Each anchor is scored once: adjacency
//! predictions above the confidence threshold are decoded into proposals,
//! and anchors whose zoom indicator clears the zoom threshold are divided
//! into five sub-regions for the next step, as long as the children stay
//! above the minimum side length. The trace records every frontier for
//! efficiency analysis.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{clip_to_frame, decode_box, divide_region, instantiate_prior, BBox, PriorTable};
use crate::predictor::{Predictor, PredictorError};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search params: {0}")]
    InvalidParams(String),
    #[error("predictor failed at anchor {anchor_id}: {source}")]
    Predictor { anchor_id: usize, source: PredictorError },
    #[error("predictor returned an invalid output at anchor {anchor_id}: {reason}")]
    BadPrediction { anchor_id: usize, reason: String },
}

/// Knobs of the adaptive search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchParams {
    /// Anchors with a zoom indicator at or above this are divided.
    pub zoom_threshold: f64,
    /// Adjacency predictions at or above this become proposals; the
    /// top-k ranking does the real selection afterwards.
    pub confidence_threshold: f64,
    /// Anchors are not divided once a child's side would drop below this.
    pub min_region_side: f64,
    /// Maximum number of frontier expansions (the root frontier is step 0).
    pub max_steps: usize,
    /// Proposal budget used by ranking.
    pub top_k: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            zoom_threshold: 0.5,
            confidence_threshold: 0.05,
            min_region_side: 16.0,
            max_steps: 8,
            top_k: 300,
        }
    }
}

impl SearchParams {
    /// Defaults with the minimum region side tied to the frame: 1/32 of
    /// its shorter side, so anchors can shrink to roughly twice the
    /// smallest objects worth assigning.
    pub fn for_frame(width: f64, height: f64) -> Self {
        SearchParams { min_region_side: width.min(height) / 32.0, ..SearchParams::default() }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |msg: &str| Err(SearchError::InvalidParams(msg.into()));
        if !(0.0..=1.0).contains(&self.zoom_threshold) {
            return bad("zoom_threshold must be in [0,1]");
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return bad("confidence_threshold must be in [0,1]");
        }
        if !(self.min_region_side.is_finite() && self.min_region_side > 0.0) {
            return bad("min_region_side must be positive");
        }
        if self.top_k == 0 {
            return bad("top_k must be at least 1");
        }
        Ok(())
    }
}

/// A scored candidate box, tagged with the anchor and prior that produced
/// it.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub bbox: BBox,
    pub score: f64,
    pub anchor_id: usize,
    pub prior_index: usize,
}

/// One evaluated anchor in the trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceAnchor {
    pub id: usize,
    pub bbox: BBox,
}

/// One step of the search: the frontier B_k, the ids accepted into the
/// zoom set Z_k, and how many proposals Y_k the step emitted.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchStep {
    pub anchors: Vec<TraceAnchor>,
    pub zoomed: Vec<usize>,
    pub proposals: usize,
}

/// The anchor tree visited by a search.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchTrace {
    pub steps: Vec<SearchStep>,
    pub anchors_evaluated: usize,
}

impl SearchTrace {
    pub fn summary(&self) -> TraceSummary {
        TraceSummary {
            steps: self
                .steps
                .iter()
                .map(|s| StepCounts {
                    anchors: s.anchors.len(),
                    zoomed: s.zoomed.len(),
                    proposals: s.proposals,
                })
                .collect(),
            anchors_evaluated: self.anchors_evaluated,
        }
    }
}

/// Per-step counts, the serialized form of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCounts {
    #[serde(rename = "B")]
    pub anchors: usize,
    #[serde(rename = "Z")]
    pub zoomed: usize,
    #[serde(rename = "Y")]
    pub proposals: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub steps: Vec<StepCounts>,
    pub anchors_evaluated: usize,
}

/// Evaluate one anchor: decode confident adjacency predictions into
/// clipped proposals (dropping non-finite decodes and boxes that clip to
/// nothing) and report whether the zoom gate passed.
#[allow(clippy::too_many_arguments)]
fn evaluate_anchor(
    predictor: &dyn Predictor,
    priors: &PriorTable,
    frame_w: f64,
    frame_h: f64,
    params: &SearchParams,
    id: usize,
    bbox: &BBox,
    proposals: &mut Vec<Proposal>,
) -> Result<(bool, usize), SearchError> {
    let out = predictor
        .predict(bbox)
        .map_err(|source| SearchError::Predictor { anchor_id: id, source })?;
    out.validate().map_err(|reason| SearchError::BadPrediction { anchor_id: id, reason })?;

    let mut emitted = 0;
    for a in &out.adjacency {
        if a.confidence < params.confidence_threshold {
            continue;
        }
        let prior_box = instantiate_prior(bbox, priors.get(a.prior_index));
        let Ok(decoded) = decode_box(&prior_box, &a.regression) else {
            continue; // non-finite decode from a degenerate prediction
        };
        if let Some(clipped) = clip_to_frame(&decoded, frame_w, frame_h) {
            proposals.push(Proposal {
                bbox: clipped,
                score: a.confidence,
                anchor_id: id,
                prior_index: a.prior_index,
            });
            emitted += 1;
        }
    }

    let zoom = out.zoom >= params.zoom_threshold && bbox.min_side() / 2.0 >= params.min_region_side;
    Ok((zoom, emitted))
}

/// Run the adaptive search over a frame.
///
/// Starts with the whole frame as the only anchor; each step scores the
/// frontier, accumulates proposals, and divides the anchors that pass the
/// zoom gate. Stops when the frontier empties or after `max_steps`
/// frontiers.
pub fn adaptive_search(
    predictor: &dyn Predictor,
    frame_w: f64,
    frame_h: f64,
    priors: &PriorTable,
    params: &SearchParams,
) -> Result<(Vec<Proposal>, SearchTrace), SearchError> {
    params.validate()?;
    let frame = BBox { x1: 0.0, y1: 0.0, x2: frame_w, y2: frame_h };

    let mut proposals = Vec::new();
    let mut trace = SearchTrace::default();
    let mut frontier = vec![frame];
    let mut next_id = 0;

    for _step in 0..params.max_steps {
        if frontier.is_empty() {
            break;
        }
        let mut step = SearchStep {
            anchors: Vec::with_capacity(frontier.len()),
            zoomed: Vec::new(),
            proposals: 0,
        };
        let mut zoomed_boxes = Vec::new();
        for bbox in &frontier {
            let id = next_id;
            next_id += 1;
            step.anchors.push(TraceAnchor { id, bbox: *bbox });
            let (zoom, emitted) = evaluate_anchor(
                predictor, priors, frame_w, frame_h, params, id, bbox, &mut proposals,
            )?;
            step.proposals += emitted;
            if zoom {
                step.zoomed.push(id);
                zoomed_boxes.push(*bbox);
            }
        }
        trace.steps.push(step);
        frontier = zoomed_boxes.iter().flat_map(divide_region).collect();
    }

    trace.anchors_evaluated = next_id;
    Ok((proposals, trace))
}

/// Top-k proposals by descending score; ties break by `(anchor_id,
/// prior_index)` so the ranking is deterministic. Returns fewer than `k`
/// when fewer exist.
pub fn rank_proposals(proposals: &[Proposal], k: usize) -> Vec<Proposal> {
    let mut ranked = proposals.to_vec();
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.anchor_id.cmp(&b.anchor_id))
            .then(a.prior_index.cmp(&b.prior_index))
    });
    ranked.truncate(k);
    ranked
}

/// Sliding-window baseline configuration. Anchor boxes have area
/// `scale^2` and aspect `ratio` (width over height), centered on a stride
/// grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridParams {
    pub scales: Vec<f64>,
    pub ratios: Vec<f64>,
    pub stride: f64,
    pub confidence_threshold: f64,
}

impl GridParams {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.scales.is_empty() || self.ratios.is_empty() {
            return Err(SearchError::InvalidParams("scales and ratios must be non-empty".into()));
        }
        if !(self.stride.is_finite() && self.stride > 0.0) {
            return Err(SearchError::InvalidParams("stride must be positive".into()));
        }
        Ok(())
    }

    /// The anchor boxes of this grid over a frame, clipped to it, in scan
    /// order (rows, columns, scales, ratios).
    pub fn anchors(&self, frame_w: f64, frame_h: f64) -> Vec<BBox> {
        let nx = ((frame_w / self.stride).floor() as usize).max(1);
        let ny = ((frame_h / self.stride).floor() as usize).max(1);
        let mut anchors = Vec::with_capacity(nx * ny * self.scales.len() * self.ratios.len());
        for iy in 0..ny {
            for ix in 0..nx {
                let cx = (ix as f64 + 0.5) * self.stride;
                let cy = (iy as f64 + 0.5) * self.stride;
                for &scale in &self.scales {
                    for &ratio in &self.ratios {
                        let w = scale * ratio.sqrt();
                        let h = scale / ratio.sqrt();
                        let raw = BBox {
                            x1: cx - w / 2.0,
                            y1: cy - h / 2.0,
                            x2: cx + w / 2.0,
                            y2: cy + h / 2.0,
                        };
                        // centers lie inside the frame, so clipping never
                        // empties an anchor
                        if let Some(clipped) = clip_to_frame(&raw, frame_w, frame_h) {
                            anchors.push(clipped);
                        }
                    }
                }
            }
        }
        anchors
    }
}

/// Evaluate every grid anchor once (non-adaptive) and decode proposals
/// exactly as the adaptive search does. The trace holds a single step with
/// an empty zoom set.
pub fn fixed_grid_search(
    predictor: &dyn Predictor,
    frame_w: f64,
    frame_h: f64,
    priors: &PriorTable,
    grid: &GridParams,
) -> Result<(Vec<Proposal>, SearchTrace), SearchError> {
    grid.validate()?;
    let params = SearchParams {
        confidence_threshold: grid.confidence_threshold,
        ..SearchParams::default()
    };

    let mut proposals = Vec::new();
    let mut step = SearchStep { anchors: Vec::new(), zoomed: Vec::new(), proposals: 0 };
    for (id, bbox) in grid.anchors(frame_w, frame_h).into_iter().enumerate() {
        step.anchors.push(TraceAnchor { id, bbox });
        let (_, emitted) = evaluate_anchor(
            predictor, priors, frame_w, frame_h, &params, id, &bbox, &mut proposals,
        )?;
        step.proposals += emitted;
    }

    let anchors_evaluated = step.anchors.len();
    Ok((proposals, SearchTrace { steps: vec![step], anchors_evaluated }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Scene, SceneObject};
    use crate::predictor::{
        AdjacencyPrediction, OraclePredictor, RandomPredictor, ZoomAdjacencyOutput,
    };
    use crate::geometry::{RegressionTarget, NUM_PRIORS};

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    /// Test predictor with constant zoom and confidence.
    struct Constant {
        zoom: f64,
        confidence: f64,
    }

    impl Predictor for Constant {
        fn predict(&self, _anchor: &BBox) -> Result<ZoomAdjacencyOutput, PredictorError> {
            Ok(ZoomAdjacencyOutput {
                zoom: self.zoom,
                adjacency: (0..NUM_PRIORS)
                    .map(|i| AdjacencyPrediction {
                        prior_index: i,
                        confidence: self.confidence,
                        regression: RegressionTarget::ZERO,
                    })
                    .collect(),
            })
        }
    }

    fn scene_with(objects: Vec<BBox>) -> Scene {
        Scene {
            id: "s".into(),
            width: 512,
            height: 512,
            objects: objects
                .into_iter()
                .map(|bbox| SceneObject { bbox, class_id: 0, intensity: 1.0 })
                .collect(),
        }
    }

    #[test]
    fn dead_predictor_stops_immediately() {
        let priors = PriorTable::default();
        let (proposals, trace) = adaptive_search(
            &Constant { zoom: 0.0, confidence: 0.0 },
            512.0,
            512.0,
            &priors,
            &SearchParams::default(),
        )
        .unwrap();
        assert!(proposals.is_empty());
        assert_eq!(trace.anchors_evaluated, 1);
        assert_eq!(trace.steps.len(), 1);
    }

    #[test]
    fn always_zoom_gives_powers_of_five() {
        let priors = PriorTable::default();
        let params = SearchParams {
            min_region_side: 64.0,
            confidence_threshold: 0.5, // drop the zero-score proposals
            ..SearchParams::default()
        };
        let (_, trace) = adaptive_search(
            &Constant { zoom: 1.0, confidence: 0.0 },
            512.0,
            512.0,
            &priors,
            &params,
        )
        .unwrap();
        let counts: Vec<usize> = trace.steps.iter().map(|s| s.anchors.len()).collect();
        assert_eq!(counts, vec![1, 5, 25, 125]);
        assert_eq!(trace.anchors_evaluated, 156);
    }

    #[test]
    fn oracle_search_finds_small_object() {
        let priors = PriorTable::default();
        let object = bb(100.0, 100.0, 130.0, 124.0);
        let scene = scene_with(vec![object]);
        let oracle = OraclePredictor::new(&scene, &priors, 0.25);
        let (proposals, _) = adaptive_search(
            &oracle,
            512.0,
            512.0,
            &priors,
            &SearchParams::for_frame(512.0, 512.0),
        )
        .unwrap();
        assert!(
            proposals.iter().any(|p| p.bbox.iou(&object) >= 0.5),
            "no proposal overlaps the object: {} proposals",
            proposals.len()
        );
    }

    #[test]
    fn huge_objects_stop_at_root() {
        // every object exceeds 25% of the frame area, so the root zoom
        // label is 0 and the search evaluates exactly one anchor
        let priors = PriorTable::default();
        let scene = scene_with(vec![bb(0.0, 0.0, 280.0, 480.0), bb(150.0, 100.0, 500.0, 460.0)]);
        let oracle = OraclePredictor::new(&scene, &priors, 0.25);
        let (_, trace) = adaptive_search(
            &oracle,
            512.0,
            512.0,
            &priors,
            &SearchParams::for_frame(512.0, 512.0),
        )
        .unwrap();
        assert_eq!(trace.anchors_evaluated, 1);
    }

    #[test]
    fn trace_is_consistent() {
        let priors = PriorTable::default();
        let scene = scene_with(vec![bb(40.0, 40.0, 70.0, 64.0), bb(300.0, 300.0, 340.0, 330.0)]);
        let oracle = OraclePredictor::new(&scene, &priors, 0.25);
        let (proposals, trace) = adaptive_search(
            &oracle,
            512.0,
            512.0,
            &priors,
            &SearchParams::for_frame(512.0, 512.0),
        )
        .unwrap();

        // anchors_evaluated is the sum over steps
        let total: usize = trace.steps.iter().map(|s| s.anchors.len()).sum();
        assert_eq!(total, trace.anchors_evaluated);

        // B_{k+1} is exactly the divisions of Z_k members, in order
        for w in trace.steps.windows(2) {
            let by_id: std::collections::HashMap<usize, BBox> =
                w[0].anchors.iter().map(|a| (a.id, a.bbox)).collect();
            let expected: Vec<BBox> =
                w[0].zoomed.iter().flat_map(|id| divide_region(&by_id[id])).collect();
            let actual: Vec<BBox> = w[1].anchors.iter().map(|a| a.bbox).collect();
            assert_eq!(actual, expected);
        }

        // every proposal's source anchor was visited
        let ids: std::collections::HashSet<usize> =
            trace.steps.iter().flat_map(|s| s.anchors.iter().map(|a| a.id)).collect();
        assert!(proposals.iter().all(|p| ids.contains(&p.anchor_id)));
    }

    #[test]
    fn zoom_threshold_monotonicity() {
        let priors = PriorTable::default();
        let predictor = RandomPredictor { seed: 21 };
        let mut last = usize::MAX;
        for zt in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let params = SearchParams {
                zoom_threshold: zt,
                min_region_side: 16.0,
                ..SearchParams::default()
            };
            let (_, trace) =
                adaptive_search(&predictor, 512.0, 512.0, &priors, &params).unwrap();
            assert!(
                trace.anchors_evaluated <= last,
                "raising the threshold increased anchors: {} -> {}",
                last,
                trace.anchors_evaluated
            );
            last = trace.anchors_evaluated;
        }
    }

    #[test]
    fn search_is_deterministic() {
        let priors = PriorTable::default();
        let predictor = RandomPredictor { seed: 4 };
        let params = SearchParams::for_frame(512.0, 512.0);
        let a = adaptive_search(&predictor, 512.0, 512.0, &priors, &params).unwrap();
        let b = adaptive_search(&predictor, 512.0, 512.0, &priors, &params).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn rank_orders_and_truncates() {
        let p = |score: f64, anchor_id: usize| Proposal {
            bbox: bb(0.0, 0.0, 1.0, 1.0),
            score,
            anchor_id,
            prior_index: 0,
        };
        let proposals = vec![p(0.9, 0), p(0.1, 1), p(0.5, 2)];
        let top = rank_proposals(&proposals, 2);
        assert_eq!(top.iter().map(|p| p.score).collect::<Vec<_>>(), vec![0.9, 0.5]);
        // k larger than the list returns the whole list sorted
        let all = rank_proposals(&proposals, 10);
        assert_eq!(all.len(), 3);
        assert_eq!(all.iter().map(|p| p.score).collect::<Vec<_>>(), vec![0.9, 0.5, 0.1]);
    }

    #[test]
    fn rank_ties_are_deterministic() {
        let p = |anchor_id: usize, prior_index: usize| Proposal {
            bbox: bb(0.0, 0.0, 1.0, 1.0),
            score: 0.7,
            anchor_id,
            prior_index,
        };
        let proposals = vec![p(3, 1), p(1, 2), p(1, 0), p(2, 5)];
        let ranked = rank_proposals(&proposals, 4);
        let order: Vec<(usize, usize)> =
            ranked.iter().map(|p| (p.anchor_id, p.prior_index)).collect();
        assert_eq!(order, vec![(1, 0), (1, 2), (2, 5), (3, 1)]);
        assert_eq!(rank_proposals(&proposals, 4), ranked);
    }

    #[test]
    fn grid_count_arithmetic() {
        let grid = GridParams {
            scales: vec![64.0, 128.0, 256.0],
            ratios: vec![0.5, 1.0, 2.0],
            stride: 100.0,
            confidence_threshold: 0.05,
        };
        assert_eq!(grid.anchors(600.0, 600.0).len(), 6 * 6 * 9);

        let single = GridParams {
            scales: vec![100.0],
            ratios: vec![1.0],
            stride: 600.0,
            confidence_threshold: 0.05,
        };
        assert_eq!(single.anchors(600.0, 600.0).len(), 1);
    }

    #[test]
    fn grid_trace_is_scene_independent() {
        let priors = PriorTable::default();
        let grid = GridParams {
            scales: vec![64.0, 128.0],
            ratios: vec![1.0],
            stride: 128.0,
            confidence_threshold: 0.05,
        };
        let sparse = scene_with(vec![bb(10.0, 10.0, 40.0, 40.0)]);
        let busy = scene_with(vec![
            bb(10.0, 10.0, 40.0, 40.0),
            bb(100.0, 100.0, 300.0, 300.0),
            bb(400.0, 60.0, 470.0, 200.0),
        ]);
        let (_, t1) = fixed_grid_search(
            &OraclePredictor::new(&sparse, &priors, 0.25), 512.0, 512.0, &priors, &grid,
        )
        .unwrap();
        let (_, t2) = fixed_grid_search(
            &OraclePredictor::new(&busy, &priors, 0.25), 512.0, 512.0, &priors, &grid,
        )
        .unwrap();
        assert_eq!(t1.anchors_evaluated, t2.anchors_evaluated);
        assert_eq!(t1.anchors_evaluated, 4 * 4 * 2);
    }

    #[test]
    fn trace_summary_serializes_counts() {
        let trace = SearchTrace {
            steps: vec![SearchStep {
                anchors: vec![TraceAnchor { id: 0, bbox: bb(0.0, 0.0, 1.0, 1.0) }],
                zoomed: vec![],
                proposals: 3,
            }],
            anchors_evaluated: 1,
        };
        let json = serde_json::to_string(&trace.summary()).unwrap();
        assert_eq!(json, r#"{"steps":[{"B":1,"Z":0,"Y":3}],"anchors_evaluated":1}"#);
    }
}
