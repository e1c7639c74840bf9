use std::path::{Path, PathBuf};

use rayon::prelude::*;

use azsearch::geometry::PriorTable;
use azsearch::sampling::{save_samples, scene_training_samples, shuffle_samples, MiningStats};

use crate::io::{load_config, load_scenes, write_failed};
use crate::{CliError, MineConfig, RunManifest};

pub fn run(
    seed: u64,
    threads: usize,
    scenes_path: &Path,
    config_path: Option<&PathBuf>,
    out: &Path,
    print_config: bool,
) -> Result<(), CliError> {
    let config: MineConfig = load_config(config_path)?;
    if print_config {
        println!("{}", serde_json::to_string_pretty(&config).expect("config serializes"));
        return Ok(());
    }

    let scenes = load_scenes(scenes_path)?;
    let priors = PriorTable::default();

    // per-scene substreams make the order (and the thread count) irrelevant
    let per_scene: Vec<_> = scenes
        .par_iter()
        .map(|scene| {
            let options =
                config.training_set_options(f64::from(scene.width.min(scene.height)));
            scene_training_samples(scene, &priors, &options, seed)
        })
        .collect();

    let mut samples = Vec::new();
    let mut stats = MiningStats::default();
    for (scene_samples, scene_stats) in per_scene {
        samples.extend(scene_samples);
        stats.merge(scene_stats);
    }
    shuffle_samples(&mut samples, seed);

    save_samples(&samples, out).map_err(|e| write_failed(out, e))?;

    RunManifest::new("mine", seed, threads)
        .input("scenes", scenes_path)
        .input_opt("config", config_path)
        .output("samples", out)
        .config_value(&config)
        .write_beside(out)?;

    println!(
        "wrote {} samples from {} scenes (flip rate {:.3} over {} decisions) to {}",
        samples.len(),
        scenes.len(),
        stats.flip_rate(),
        stats.decisions,
        out.display()
    );
    Ok(())
}
