//! Recall and anchor-efficiency reports over proposal sets.
//!
//! Retrieval is existential: an object counts as retrieved when at least
//! one of the kept proposals overlaps it at or above the IoU threshold.
//! One proposal may retrieve several objects and several proposals may
//! retrieve the same object; there is no one-to-one matching.
//!
//! Size buckets follow the MSCOCO convention with strict-less boundaries
//! applied uniformly: small `area < 32^2`, medium `32^2 <= area < 96^2`,
//! large `area >= 96^2`.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Scene;
use crate::geometry::BBox;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("proposal line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("proposals reference unknown scene {0}")]
    UnknownScene(String),
}

/// IoU thresholds swept by [`recall_curve_iou`].
pub const IOU_THRESHOLDS: [f64; 10] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];

/// Proposal budgets swept by [`recall_curve_topn`].
pub const TOP_N_SWEEP: [usize; 9] = [1, 2, 5, 10, 20, 50, 100, 200, 300];

/// Area boundaries of the size buckets.
pub const SMALL_AREA: f64 = 32.0 * 32.0;
pub const LARGE_AREA: f64 = 96.0 * 96.0;

/// One proposal as stored in a `.jsonl` proposals file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub scene_id: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
}

/// Proposals grouped per scene, preserving input order within a scene (a
/// stable order for equal scores).
pub type ProposalSet = BTreeMap<String, Vec<ProposalRecord>>;

pub fn group_by_scene(records: Vec<ProposalRecord>) -> ProposalSet {
    let mut set = ProposalSet::new();
    for r in records {
        set.entry(r.scene_id.clone()).or_default().push(r);
    }
    set
}

pub fn save_proposals(records: &[ProposalRecord], path: &Path) -> Result<(), EvalError> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut file, r)
            .map_err(|source| EvalError::Parse { line: 0, source })?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_proposals(path: &Path) -> Result<Vec<ProposalRecord>, EvalError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(&line)
                .map_err(|source| EvalError::Parse { line: i + 1, source })?,
        );
    }
    Ok(records)
}

fn check_scene_ids(proposals: &ProposalSet, scenes: &[Scene]) -> Result<(), EvalError> {
    let known: std::collections::HashSet<&str> = scenes.iter().map(|s| s.id.as_str()).collect();
    for id in proposals.keys() {
        if !known.contains(id.as_str()) {
            return Err(EvalError::UnknownScene(id.clone()));
        }
    }
    Ok(())
}

/// The top `n` proposals of one scene by descending score. The sort is
/// stable, so equal scores keep their file order.
fn top_n(records: &[ProposalRecord], n: usize) -> Vec<&ProposalRecord> {
    let mut refs: Vec<&ProposalRecord> = records.iter().collect();
    refs.sort_by(|a, b| b.score.total_cmp(&a.score));
    refs.truncate(n);
    refs
}

fn retrieved(object: &BBox, kept: &[&ProposalRecord], iou_threshold: f64) -> bool {
    kept.iter().any(|p| p.bbox.iou(object) >= iou_threshold)
}

/// Recall over all objects of all scenes: each scene keeps its top `n`
/// proposals by score, and an object is retrieved when some kept proposal
/// reaches the IoU threshold. A scene set without objects yields 1.0
/// (nothing was missed).
pub fn recall_at(
    proposals: &ProposalSet,
    scenes: &[Scene],
    iou_threshold: f64,
    top_n_count: usize,
) -> Result<f64, EvalError> {
    check_scene_ids(proposals, scenes)?;
    static EMPTY: Vec<ProposalRecord> = Vec::new();
    let mut total = 0usize;
    let mut hit = 0usize;
    for scene in scenes {
        let kept = top_n(proposals.get(&scene.id).unwrap_or(&EMPTY), top_n_count);
        for obj in &scene.objects {
            total += 1;
            if retrieved(&obj.bbox, &kept, iou_threshold) {
                hit += 1;
            }
        }
    }
    Ok(if total == 0 { 1.0 } else { hit as f64 / total as f64 })
}

/// Recall swept over [`IOU_THRESHOLDS`] at a fixed proposal budget.
pub fn recall_curve_iou(
    proposals: &ProposalSet,
    scenes: &[Scene],
    top_n_count: usize,
) -> Result<Vec<(f64, f64)>, EvalError> {
    IOU_THRESHOLDS
        .iter()
        .map(|&t| Ok((t, recall_at(proposals, scenes, t, top_n_count)?)))
        .collect()
}

/// Recall swept over [`TOP_N_SWEEP`] at IoU 0.5.
pub fn recall_curve_topn(
    proposals: &ProposalSet,
    scenes: &[Scene],
) -> Result<Vec<(usize, f64)>, EvalError> {
    TOP_N_SWEEP
        .iter()
        .map(|&n| Ok((n, recall_at(proposals, scenes, 0.5, n)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SizeBucket {
    Small,
    Medium,
    Large,
}

impl SizeBucket {
    pub fn of_area(area: f64) -> SizeBucket {
        if area < SMALL_AREA {
            SizeBucket::Small
        } else if area < LARGE_AREA {
            SizeBucket::Medium
        } else {
            SizeBucket::Large
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SizeBucket::Small => "small",
            SizeBucket::Medium => "medium",
            SizeBucket::Large => "large",
        }
    }
}

/// Recall and object count of one size bucket; `recall` is `None` when the
/// bucket holds no objects (not applicable rather than zero).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucketRecall {
    pub recall: Option<f64>,
    pub objects: usize,
}

/// Per-size-bucket recall at IoU 0.5 with the given proposal budget.
pub fn recall_by_size(
    proposals: &ProposalSet,
    scenes: &[Scene],
    iou_threshold: f64,
    top_n_count: usize,
) -> Result<BTreeMap<SizeBucket, BucketRecall>, EvalError> {
    check_scene_ids(proposals, scenes)?;
    static EMPTY: Vec<ProposalRecord> = Vec::new();
    let mut totals: BTreeMap<SizeBucket, (usize, usize)> = BTreeMap::new();
    for bucket in [SizeBucket::Small, SizeBucket::Medium, SizeBucket::Large] {
        totals.insert(bucket, (0, 0));
    }
    for scene in scenes {
        let kept = top_n(proposals.get(&scene.id).unwrap_or(&EMPTY), top_n_count);
        for obj in &scene.objects {
            let entry = totals.get_mut(&SizeBucket::of_area(obj.bbox.area())).unwrap();
            entry.0 += 1;
            if retrieved(&obj.bbox, &kept, iou_threshold) {
                entry.1 += 1;
            }
        }
    }
    Ok(totals
        .into_iter()
        .map(|(bucket, (total, hit))| {
            let recall = (total > 0).then(|| hit as f64 / total as f64);
            (bucket, BucketRecall { recall, objects: total })
        })
        .collect())
}

/// Histogram of per-object matched-proposal counts: for every object,
/// count the proposals overlapping it at or above the threshold. Keys are
/// counts, values the number of objects with that count.
pub fn matched_counts(
    proposals: &ProposalSet,
    scenes: &[Scene],
    iou_threshold: f64,
) -> Result<BTreeMap<usize, usize>, EvalError> {
    check_scene_ids(proposals, scenes)?;
    static EMPTY: Vec<ProposalRecord> = Vec::new();
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    for scene in scenes {
        let records = proposals.get(&scene.id).unwrap_or(&EMPTY);
        for obj in &scene.objects {
            let count =
                records.iter().filter(|p| p.bbox.iou(&obj.bbox) >= iou_threshold).count();
            *hist.entry(count).or_default() += 1;
        }
    }
    Ok(hist)
}

/// Aggregate of per-scene anchor-evaluation counts.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorStats {
    pub mean: f64,
    pub median: f64,
    /// count -> number of scenes with that count
    pub histogram: BTreeMap<usize, usize>,
}

/// Everything the evaluation produces for one proposal source: the two
/// recall curves, per-size-bucket recall, the matched-proposal histogram,
/// anchor statistics when traces are available, and the raw totals.
#[derive(Debug, Clone, PartialEq)]
pub struct RecallReport {
    pub iou_curve: Vec<(f64, f64)>,
    pub topn_curve: Vec<(usize, f64)>,
    pub size_recall: BTreeMap<SizeBucket, BucketRecall>,
    /// Matched-proposal counts at IoU 0.5 within the top-n budget.
    pub matched_hist: BTreeMap<usize, usize>,
    pub anchor_stats: Option<AnchorStats>,
    pub total_objects: usize,
    pub retrieved_at_05: usize,
}

/// Build the full report at the given proposal budget. `anchor_counts`
/// come from search traces when the caller has them.
pub fn build_report(
    proposals: &ProposalSet,
    scenes: &[Scene],
    top_n_count: usize,
    anchor_counts: Option<&[usize]>,
) -> Result<RecallReport, EvalError> {
    check_scene_ids(proposals, scenes)?;
    static EMPTY: Vec<ProposalRecord> = Vec::new();

    // matched counts restricted to the kept budget
    let mut kept_set = ProposalSet::new();
    for scene in scenes {
        let kept: Vec<ProposalRecord> = top_n(proposals.get(&scene.id).unwrap_or(&EMPTY), top_n_count)
            .into_iter()
            .cloned()
            .collect();
        kept_set.insert(scene.id.clone(), kept);
    }

    let total_objects = scenes.iter().map(|s| s.objects.len()).sum();
    let recall05 = recall_at(proposals, scenes, 0.5, top_n_count)?;
    let retrieved_at_05 = (recall05 * total_objects as f64).round() as usize;

    Ok(RecallReport {
        iou_curve: recall_curve_iou(proposals, scenes, top_n_count)?,
        topn_curve: recall_curve_topn(proposals, scenes)?,
        size_recall: recall_by_size(proposals, scenes, 0.5, top_n_count)?,
        matched_hist: matched_counts(&kept_set, scenes, 0.5)?,
        anchor_stats: anchor_counts.map(anchor_stats),
        total_objects,
        retrieved_at_05,
    })
}

pub fn anchor_stats(counts: &[usize]) -> AnchorStats {
    if counts.is_empty() {
        return AnchorStats { mean: 0.0, median: 0.0, histogram: BTreeMap::new() };
    }
    let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
    for &c in counts {
        *histogram.entry(c).or_default() += 1;
    }
    let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2] as f64
    } else {
        (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) as f64 / 2.0
    };
    AnchorStats { mean, median, histogram }
}

// ---------------------------------------------------------------------------
// CSV and SVG output. Formatting is fixed-precision so identical inputs
// produce byte-identical files.

pub fn write_recall_iou_csv(path: &Path, curve: &[(f64, f64)]) -> Result<(), EvalError> {
    let mut out = String::from("threshold,recall\n");
    for (t, r) in curve {
        out.push_str(&format!("{t:.2},{r:.6}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_recall_topn_csv(path: &Path, curve: &[(usize, f64)]) -> Result<(), EvalError> {
    let mut out = String::from("n,recall\n");
    for (n, r) in curve {
        out.push_str(&format!("{n},{r:.6}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_recall_size_csv(
    path: &Path,
    buckets: &BTreeMap<SizeBucket, BucketRecall>,
) -> Result<(), EvalError> {
    let mut out = String::from("bucket,recall,n_objects\n");
    for (bucket, r) in buckets {
        match r.recall {
            Some(v) => out.push_str(&format!("{},{:.6},{}\n", bucket.name(), v, r.objects)),
            None => out.push_str(&format!("{},na,{}\n", bucket.name(), r.objects)),
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_count_hist_csv(
    path: &Path,
    header: (&str, &str),
    hist: &BTreeMap<usize, usize>,
) -> Result<(), EvalError> {
    let mut out = format!("{},{}\n", header.0, header.1);
    for (k, v) in hist {
        out.push_str(&format!("{k},{v}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Minimal single-file line chart. Good enough to eyeball a recall curve
/// without pulling in a plotting stack.
pub fn write_line_chart_svg(
    path: &Path,
    title: &str,
    series: &[(&str, &[(f64, f64)])],
) -> Result<(), EvalError> {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const M: f64 = 56.0; // margin
    let all: Vec<(f64, f64)> = series.iter().flat_map(|(_, pts)| pts.iter().copied()).collect();
    if all.is_empty() {
        return Ok(());
    }
    let (x_min, x_max) = all.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    let (y_min, y_max) = (0.0, 1.0f64.max(all.iter().fold(f64::MIN, |hi, p| hi.max(p.1))));
    let x_span = (x_max - x_min).max(1e-9);
    let y_span = (y_max - y_min).max(1e-9);
    let sx = |x: f64| M + (x - x_min) / x_span * (W - 2.0 * M);
    let sy = |y: f64| H - M - (y - y_min) / y_span * (H - 2.0 * M);

    let mut svg = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{:.1}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{title}</text>
<line x1="{M}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>
<line x1="{M}" y1="{M}" x2="{M}" y2="{:.1}" stroke="black"/>
"#,
        W / 2.0,
        H - M,
        W - M,
        H - M,
        H - M,
    );
    for i in 0..=4 {
        let y = y_min + y_span * f64::from(i) / 4.0;
        svg.push_str(&format!(
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{y:.2}</text>
"#,
            M - 6.0,
            sy(y) + 4.0,
        ));
        let x = x_min + x_span * f64::from(i) / 4.0;
        svg.push_str(&format!(
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{x:.2}</text>
"#,
            sx(x),
            H - M + 16.0,
        ));
    }
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    for (si, (name, pts)) in series.iter().enumerate() {
        let color = colors[si % colors.len()];
        let d: Vec<String> =
            pts.iter().map(|(x, y)| format!("{:.1},{:.1}", sx(*x), sy(*y))).collect();
        svg.push_str(&format!(
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>
<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" fill="{color}">{name}</text>
"#,
            d.join(" "),
            W - M - 120.0,
            40.0 + 16.0 * si as f64,
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)?;
    Ok(())
}
