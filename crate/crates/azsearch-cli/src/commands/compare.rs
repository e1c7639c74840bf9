use std::path::{Path, PathBuf};

use rayon::prelude::*;

use azsearch::dataset::Scene;
use azsearch::eval::{
    anchor_stats, group_by_scene, recall_at, recall_by_size, recall_curve_iou, recall_curve_topn,
    write_count_hist_csv, write_line_chart_svg, write_recall_iou_csv, write_recall_size_csv,
    write_recall_topn_csv, AnchorStats, BucketRecall, EvalError, ProposalRecord, SizeBucket,
};
use azsearch::geometry::PriorTable;
use azsearch::predictor::ModelParameters;

use crate::io::{
    load_config, load_model, load_scenes, resolved_params, search_scene, write_failed,
    SceneTraceRecord, SearchMode,
};
use crate::{CliError, CompareConfig, PredictorKind, RunManifest};

fn map_eval(e: EvalError) -> CliError {
    match e {
        EvalError::Io(e) => CliError::Io(e.to_string()),
        other => CliError::Data(other.to_string()),
    }
}

/// Everything the summary table needs about one method.
pub struct MethodReport {
    pub records: Vec<ProposalRecord>,
    pub traces: Vec<SceneTraceRecord>,
    pub anchors: AnchorStats,
    pub recall50: f64,
    pub iou_curve: Vec<(f64, f64)>,
    pub topn_curve: Vec<(usize, f64)>,
    pub size_recall: std::collections::BTreeMap<SizeBucket, BucketRecall>,
}

#[allow(clippy::too_many_arguments)]
pub fn run_method(
    scenes: &[Scene],
    priors: &PriorTable,
    config: &CompareConfig,
    kind: PredictorKind,
    model: Option<&ModelParameters>,
    seed: u64,
    adaptive: bool,
) -> Result<MethodReport, CliError> {
    let grid_params = config.grid.grid_params();
    let results: Vec<_> = scenes
        .par_iter()
        .map(|scene| {
            let params = resolved_params(&config.search, scene);
            let mode = if adaptive {
                SearchMode::Adaptive(&params)
            } else {
                SearchMode::Grid(&grid_params)
            };
            search_scene(
                scene,
                priors,
                kind,
                model,
                config.search.noise_sigma,
                seed,
                config.search.top_k,
                &mode,
            )
        })
        .collect::<Result<_, _>>()?;

    let mut records = Vec::new();
    let mut traces = Vec::new();
    for (scene_records, trace) in results {
        records.extend(scene_records);
        traces.push(trace);
    }

    let proposals = group_by_scene(records.clone());
    let counts: Vec<usize> = traces.iter().map(|t| t.anchors_evaluated).collect();
    Ok(MethodReport {
        anchors: anchor_stats(&counts),
        recall50: recall_at(&proposals, scenes, 0.5, config.top_n).map_err(map_eval)?,
        iou_curve: recall_curve_iou(&proposals, scenes, config.top_n).map_err(map_eval)?,
        topn_curve: recall_curve_topn(&proposals, scenes).map_err(map_eval)?,
        size_recall: recall_by_size(&proposals, scenes, 0.5, config.top_n).map_err(map_eval)?,
        records,
        traces,
    })
}

fn bucket_cell(r: &BucketRecall) -> String {
    match r.recall {
        Some(v) => format!("{v:.6}"),
        None => "na".into(),
    }
}

fn write_method_files(
    outdir: &Path,
    name: &str,
    report: &MethodReport,
) -> Result<(), CliError> {
    write_recall_iou_csv(&outdir.join(format!("{name}_recall_iou.csv")), &report.iou_curve)
        .map_err(map_eval)?;
    write_recall_topn_csv(&outdir.join(format!("{name}_recall_topn.csv")), &report.topn_curve)
        .map_err(map_eval)?;
    write_recall_size_csv(&outdir.join(format!("{name}_recall_size.csv")), &report.size_recall)
        .map_err(map_eval)?;
    write_count_hist_csv(
        &outdir.join(format!("{name}_anchor_hist.csv")),
        ("anchors", "scenes"),
        &report.anchors.histogram,
    )
    .map_err(map_eval)?;
    azsearch::eval::save_proposals(&report.records, &outdir.join(format!("{name}_props.jsonl")))
        .map_err(map_eval)?;
    crate::io::save_traces(&report.traces, &outdir.join(format!("{name}_trace.json")))?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn run(
    seed: u64,
    threads: usize,
    scenes_path: &Path,
    config_path: Option<&PathBuf>,
    predictor: PredictorKind,
    model_path: Option<&PathBuf>,
    outdir: &Path,
    plots: bool,
    print_config: bool,
) -> Result<(), CliError> {
    let config: CompareConfig = load_config(config_path)?;
    if print_config {
        println!("{}", serde_json::to_string_pretty(&config).expect("config serializes"));
        return Ok(());
    }

    if predictor == PredictorKind::Model && model_path.is_none() {
        return Err(CliError::Config("--predictor model requires --model".into()));
    }
    let model = model_path.map(|p| load_model(p)).transpose()?;
    let scenes = load_scenes(scenes_path)?;
    let priors = PriorTable::default();

    let adaptive =
        run_method(&scenes, &priors, &config, predictor, model.as_ref(), seed, true)?;
    let grid = run_method(&scenes, &priors, &config, predictor, model.as_ref(), seed, false)?;

    std::fs::create_dir_all(outdir).map_err(|e| write_failed(outdir, e))?;
    write_method_files(outdir, "adaptive", &adaptive)?;
    write_method_files(outdir, "grid", &grid)?;

    // the side-by-side table
    let mut summary = String::from(
        "method,mean_anchors,median_anchors,total_proposals,recall_iou50,recall_small,recall_medium,recall_large\n",
    );
    for (name, r) in [("adaptive", &adaptive), ("grid", &grid)] {
        summary.push_str(&format!(
            "{name},{:.3},{:.1},{},{:.6},{},{},{}\n",
            r.anchors.mean,
            r.anchors.median,
            r.records.len(),
            r.recall50,
            bucket_cell(&r.size_recall[&SizeBucket::Small]),
            bucket_cell(&r.size_recall[&SizeBucket::Medium]),
            bucket_cell(&r.size_recall[&SizeBucket::Large]),
        ));
    }
    let summary_path = outdir.join("compare_summary.csv");
    std::fs::write(&summary_path, &summary).map_err(|e| write_failed(&summary_path, e))?;

    if plots {
        let a: Vec<(f64, f64)> = adaptive.topn_curve.iter().map(|(n, r)| (*n as f64, *r)).collect();
        let g: Vec<(f64, f64)> = grid.topn_curve.iter().map(|(n, r)| (*n as f64, *r)).collect();
        write_line_chart_svg(
            &outdir.join("recall_topn.svg"),
            "recall vs proposal budget",
            &[("adaptive", &a), ("grid", &g)],
        )
        .map_err(map_eval)?;
        write_line_chart_svg(
            &outdir.join("recall_iou.svg"),
            "recall vs IoU threshold",
            &[("adaptive", &adaptive.iou_curve), ("grid", &grid.iou_curve)],
        )
        .map_err(map_eval)?;
    }

    RunManifest::new("compare", seed, threads)
        .input("scenes", scenes_path)
        .input_opt("config", config_path)
        .input_opt("model", model_path)
        .output("summary", &summary_path)
        .config_value(&config)
        .write_in_dir(outdir)?;

    println!(
        "adaptive: {:.1} anchors/scene, recall@0.5 {:.4} | grid: {:.1} anchors/scene, recall@0.5 {:.4}",
        adaptive.anchors.mean, adaptive.recall50, grid.anchors.mean, grid.recall50
    );
    println!("reports in {}", outdir.display());
    Ok(())
}
