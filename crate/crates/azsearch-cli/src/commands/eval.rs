use std::path::{Path, PathBuf};

use azsearch::eval::{
    build_report, group_by_scene, write_count_hist_csv, write_line_chart_svg,
    write_recall_iou_csv, write_recall_size_csv, write_recall_topn_csv, EvalError,
};

use crate::io::{load_proposals, load_scenes, load_traces, write_failed};
use crate::{CliError, RunManifest};

fn map_eval(e: EvalError) -> CliError {
    match e {
        EvalError::Io(e) => CliError::Io(e.to_string()),
        other => CliError::Data(other.to_string()),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn run(
    seed: u64,
    threads: usize,
    props_path: &Path,
    scenes_path: &Path,
    trace_path: Option<&PathBuf>,
    outdir: &Path,
    top_n: usize,
    plots: bool,
) -> Result<(), CliError> {
    let records = load_proposals(props_path)?;
    let scenes = load_scenes(scenes_path)?;
    let proposals = group_by_scene(records);

    let anchor_counts: Option<Vec<usize>> = trace_path
        .map(|p| load_traces(p))
        .transpose()?
        .map(|traces| traces.iter().map(|t| t.anchors_evaluated).collect());

    let report =
        build_report(&proposals, &scenes, top_n, anchor_counts.as_deref()).map_err(map_eval)?;

    std::fs::create_dir_all(outdir).map_err(|e| write_failed(outdir, e))?;
    write_recall_iou_csv(&outdir.join("recall_iou.csv"), &report.iou_curve).map_err(map_eval)?;
    write_recall_topn_csv(&outdir.join("recall_topn.csv"), &report.topn_curve)
        .map_err(map_eval)?;
    write_recall_size_csv(&outdir.join("recall_size.csv"), &report.size_recall)
        .map_err(map_eval)?;
    write_count_hist_csv(
        &outdir.join("matched_hist.csv"),
        ("matched", "objects"),
        &report.matched_hist,
    )
    .map_err(map_eval)?;

    let mut manifest = RunManifest::new("eval", seed, threads)
        .input("proposals", props_path)
        .input("scenes", scenes_path)
        .output("recall_iou", &outdir.join("recall_iou.csv"))
        .output("recall_topn", &outdir.join("recall_topn.csv"))
        .output("recall_size", &outdir.join("recall_size.csv"))
        .output("matched_hist", &outdir.join("matched_hist.csv"))
        .config_value(&serde_json::json!({ "top_n": top_n }));

    if let Some(stats) = &report.anchor_stats {
        write_count_hist_csv(
            &outdir.join("anchor_hist.csv"),
            ("anchors", "scenes"),
            &stats.histogram,
        )
        .map_err(map_eval)?;
        manifest = manifest
            .input("trace", trace_path.expect("stats imply a trace path"))
            .output("anchor_hist", &outdir.join("anchor_hist.csv"));
        println!("anchors/scene: mean {:.1}, median {:.1}", stats.mean, stats.median);
    }

    if plots {
        let topn_pts: Vec<(f64, f64)> =
            report.topn_curve.iter().map(|(n, r)| (*n as f64, *r)).collect();
        write_line_chart_svg(
            &outdir.join("recall_iou.svg"),
            "recall vs IoU threshold",
            &[("recall", &report.iou_curve)],
        )
        .map_err(map_eval)?;
        write_line_chart_svg(
            &outdir.join("recall_topn.svg"),
            "recall vs proposal budget",
            &[("recall", &topn_pts)],
        )
        .map_err(map_eval)?;
    }

    manifest.write_in_dir(outdir)?;

    let recall50 = report.iou_curve.first().map(|(_, r)| *r).unwrap_or(0.0);
    println!(
        "recall@0.5 (top {top_n}): {recall50:.4} ({}/{} objects); reports in {}",
        report.retrieved_at_05,
        report.total_objects,
        outdir.display()
    );
    Ok(())
}
