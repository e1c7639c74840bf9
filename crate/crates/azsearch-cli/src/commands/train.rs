use std::path::{Path, PathBuf};

use azsearch::predictor::ModelParameters;
use azsearch::training::{pool_sample_features, sgd_train, LossRow, TrainError};

use crate::io::{load_config, load_samples, load_scenes, write_failed};
use crate::{CliError, RunManifest, TrainCliConfig};

fn write_loss_csv(path: &Path, log: &[LossRow]) -> Result<(), CliError> {
    let mut out = String::from("iteration,zoom_ce,conf_ce,bbox,total\n");
    for r in log {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6}\n",
            r.iteration, r.zoom_ce, r.conf_ce, r.bbox_smooth_l1, r.total
        ));
    }
    std::fs::write(path, out).map_err(|e| write_failed(path, e))
}

#[allow(clippy::too_many_arguments)]
pub fn run(
    seed: u64,
    threads: usize,
    data_path: &Path,
    scenes_path: &Path,
    config_path: Option<&PathBuf>,
    out: &Path,
    log_path: Option<&PathBuf>,
    print_config: bool,
) -> Result<(), CliError> {
    let config: TrainCliConfig = load_config(config_path)?;
    if print_config {
        println!("{}", serde_json::to_string_pretty(&config).expect("config serializes"));
        return Ok(());
    }

    let samples = load_samples(data_path)?;
    let scenes = load_scenes(scenes_path)?;

    let map_err = |e: TrainError| match e {
        TrainError::Config(m) => CliError::Config(m),
        TrainError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
        TrainError::UnknownScene { .. }
        | TrainError::EmptyDataset
        | TrainError::MissingTarget { .. }
        | TrainError::FeatureCountMismatch { .. } => CliError::Data(e.to_string()),
        TrainError::Predictor(p) => CliError::Numeric(p.to_string()),
    };

    let features =
        pool_sample_features(&samples, &scenes, config.g, config.noise_sigma, seed)
            .map_err(map_err)?;
    let init = ModelParameters::init(config.g, config.hidden, config.channels, seed);
    let (params, log) =
        sgd_train(&samples, &features, init, &config.train_config(seed)).map_err(map_err)?;

    params.save(out).map_err(|e| write_failed(out, e))?;
    if let Some(log_path) = log_path {
        write_loss_csv(log_path, &log)?;
    }

    let mut manifest = RunManifest::new("train", seed, threads)
        .input("data", data_path)
        .input("scenes", scenes_path)
        .input_opt("config", config_path)
        .output("model", out)
        .config_value(&config);
    if let Some(log_path) = log_path {
        manifest = manifest.output("loss_log", log_path);
    }
    manifest.write_beside(out)?;

    let first = log.first().map(|r| r.total).unwrap_or(0.0);
    let last = log.last().map(|r| r.total).unwrap_or(0.0);
    println!(
        "trained on {} samples for {} iterations (loss {first:.4} -> {last:.4}), model at {}",
        samples.len(),
        log.len(),
        out.display()
    );
    Ok(())
}
