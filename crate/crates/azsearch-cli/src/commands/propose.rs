use std::path::{Path, PathBuf};

use rayon::prelude::*;

use azsearch::eval::save_proposals;
use azsearch::geometry::PriorTable;

use crate::io::{
    load_config, load_model, load_scenes, resolved_params, save_traces, search_scene,
    write_failed, SearchMode,
};
use crate::{CliError, PredictorKind, ProposeConfig, RunManifest};

#[allow(clippy::too_many_arguments)]
pub fn run(
    seed: u64,
    threads: usize,
    scenes_path: &Path,
    params_path: Option<&PathBuf>,
    predictor: PredictorKind,
    model_path: Option<&PathBuf>,
    out: &Path,
    trace_path: Option<&PathBuf>,
    print_config: bool,
) -> Result<(), CliError> {
    let config: ProposeConfig = load_config(params_path)?;
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

    let results: Vec<_> = scenes
        .par_iter()
        .map(|scene| {
            let params = resolved_params(&config, scene);
            search_scene(
                scene,
                &priors,
                predictor,
                model.as_ref(),
                config.noise_sigma,
                seed,
                config.top_k,
                &SearchMode::Adaptive(&params),
            )
        })
        .collect::<Result<_, _>>()?;

    let mut records = Vec::new();
    let mut traces = Vec::new();
    for (scene_records, trace) in results {
        records.extend(scene_records);
        traces.push(trace);
    }

    save_proposals(&records, out).map_err(|e| write_failed(out, e))?;
    if let Some(trace_path) = trace_path {
        save_traces(&traces, trace_path)?;
    }

    let mut manifest = RunManifest::new("propose", seed, threads)
        .input("scenes", scenes_path)
        .input_opt("params", params_path)
        .input_opt("model", model_path)
        .output("proposals", out)
        .config_value(&config);
    if let Some(trace_path) = trace_path {
        manifest = manifest.output("trace", trace_path);
    }
    manifest.write_beside(out)?;

    let total_anchors: usize = traces.iter().map(|t| t.anchors_evaluated).sum();
    println!(
        "wrote {} proposals over {} scenes ({:.1} anchors/scene) to {}",
        records.len(),
        scenes.len(),
        total_anchors as f64 / scenes.len().max(1) as f64,
        out.display()
    );
    Ok(())
}
