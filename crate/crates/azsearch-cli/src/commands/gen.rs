use std::path::{Path, PathBuf};

use azsearch::dataset::{generate_scenes, save_scenes, DatasetError, SceneGenConfig};

use crate::io::{load_config, write_failed};
use crate::{CliError, RunManifest};

pub fn run(
    seed: u64,
    threads: usize,
    config_path: Option<&PathBuf>,
    n: usize,
    out: &Path,
    print_config: bool,
) -> Result<(), CliError> {
    let config: SceneGenConfig = load_config(config_path)?;
    if print_config {
        println!("{}", serde_json::to_string_pretty(&config).expect("config serializes"));
        return Ok(());
    }

    let scenes = generate_scenes(&config, n, seed).map_err(|e| match e {
        DatasetError::Config(m) => CliError::Config(m),
        other => CliError::Data(other.to_string()),
    })?;
    save_scenes(&scenes, out).map_err(|e| write_failed(out, e))?;

    RunManifest::new("gen", seed, threads)
        .input_opt("config", config_path)
        .output("scenes", out)
        .config_value(&config)
        .write_beside(out)?;

    println!("wrote {} scenes to {}", scenes.len(), out.display());
    Ok(())
}
