//! Input loading with error-category mapping, trace records, and the
//! shared per-scene proposing helper.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use azsearch::dataset::{render, Scene};
use azsearch::eval::ProposalRecord;
use azsearch::geometry::PriorTable;
use azsearch::predictor::{ModelParameters, ModelPredictor, OraclePredictor, RandomPredictor};
use azsearch::sampling::TrainingSample;
use azsearch::search::{
    adaptive_search, fixed_grid_search, rank_proposals, GridParams, Proposal, SearchParams,
    SearchTrace, StepCounts,
};

use crate::{CliError, PredictorKind, ProposeConfig};

pub fn load_config<T: DeserializeOwned + Default>(path: Option<&PathBuf>) -> Result<T, CliError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("config {}: {e}", p.display())))
        }
    }
}

pub fn load_scenes(path: &Path) -> Result<Vec<Scene>, CliError> {
    if !path.exists() {
        return Err(CliError::Config(format!("missing input file: {}", path.display())));
    }
    azsearch::dataset::load_scenes(path).map_err(|e| match e {
        azsearch::dataset::DatasetError::Io(e) => {
            CliError::Config(format!("cannot read {}: {e}", path.display()))
        }
        other => CliError::Data(format!("{}: {other}", path.display())),
    })
}

pub fn load_samples(path: &Path) -> Result<Vec<TrainingSample>, CliError> {
    if !path.exists() {
        return Err(CliError::Config(format!("missing input file: {}", path.display())));
    }
    azsearch::sampling::load_samples(path).map_err(|e| match e {
        azsearch::sampling::SamplingError::Io(e) => {
            CliError::Config(format!("cannot read {}: {e}", path.display()))
        }
        other => CliError::Data(format!("{}: {other}", path.display())),
    })
}

pub fn load_model(path: &Path) -> Result<ModelParameters, CliError> {
    if !path.exists() {
        return Err(CliError::Config(format!("missing model file: {}", path.display())));
    }
    ModelParameters::load(path).map_err(|e| match e {
        azsearch::predictor::PredictorError::Io(e) => {
            CliError::Config(format!("cannot read {}: {e}", path.display()))
        }
        other => CliError::Data(format!("{}: {other}", path.display())),
    })
}

pub fn load_proposals(path: &Path) -> Result<Vec<ProposalRecord>, CliError> {
    if !path.exists() {
        return Err(CliError::Config(format!("missing input file: {}", path.display())));
    }
    azsearch::eval::load_proposals(path).map_err(|e| match e {
        azsearch::eval::EvalError::Io(e) => {
            CliError::Config(format!("cannot read {}: {e}", path.display()))
        }
        other => CliError::Data(format!("{}: {other}", path.display())),
    })
}

pub fn write_failed(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("cannot write {}: {e}", path.display()))
}

/// One scene's search trace in the trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTraceRecord {
    pub scene_id: String,
    pub steps: Vec<StepCounts>,
    pub anchors_evaluated: usize,
}

impl SceneTraceRecord {
    pub fn from_trace(scene_id: &str, trace: &SearchTrace) -> Self {
        let summary = trace.summary();
        SceneTraceRecord {
            scene_id: scene_id.to_string(),
            steps: summary.steps,
            anchors_evaluated: summary.anchors_evaluated,
        }
    }
}

pub fn save_traces(records: &[SceneTraceRecord], path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(records).expect("traces serialize");
    std::fs::write(path, text + "\n").map_err(|e| write_failed(path, e))
}

pub fn load_traces(path: &Path) -> Result<Vec<SceneTraceRecord>, CliError> {
    if !path.exists() {
        return Err(CliError::Config(format!("missing input file: {}", path.display())));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Which searches to run for a scene.
pub enum SearchMode<'a> {
    Adaptive(&'a SearchParams),
    Grid(&'a GridParams),
}

/// Run one search over one scene with the chosen predictor, returning the
/// ranked proposal records and the trace. The model predictor renders the
/// scene first; oracle and random work straight off the ground truth.
#[allow(clippy::too_many_arguments)]
pub fn search_scene(
    scene: &Scene,
    priors: &PriorTable,
    kind: PredictorKind,
    model: Option<&ModelParameters>,
    noise_sigma: f64,
    seed: u64,
    top_k: usize,
    mode: &SearchMode,
) -> Result<(Vec<ProposalRecord>, SceneTraceRecord), CliError> {
    let w = f64::from(scene.width);
    let h = f64::from(scene.height);

    let run = |predictor: &dyn azsearch::predictor::Predictor| -> Result<(Vec<Proposal>, SearchTrace), CliError> {
        let result = match mode {
            SearchMode::Adaptive(params) => adaptive_search(predictor, w, h, priors, params),
            SearchMode::Grid(grid) => fixed_grid_search(predictor, w, h, priors, grid),
        };
        result.map_err(|e| match e {
            azsearch::search::SearchError::InvalidParams(m) => CliError::Config(m),
            other => CliError::Numeric(format!("scene {}: {other}", scene.id)),
        })
    };

    let (proposals, trace) = match kind {
        PredictorKind::Oracle => run(&OraclePredictor::new(scene, priors, 0.25))?,
        PredictorKind::Random => run(&RandomPredictor { seed })?,
        PredictorKind::Model => {
            let params = model.expect("model presence checked at dispatch");
            let grid = render(scene, noise_sigma, seed);
            run(&ModelPredictor::new(params, &grid))?
        }
    };

    let ranked = rank_proposals(&proposals, top_k);
    let records = ranked
        .into_iter()
        .map(|p| ProposalRecord { scene_id: scene.id.clone(), bbox: p.bbox, score: p.score })
        .collect();
    Ok((records, SceneTraceRecord::from_trace(&scene.id, &trace)))
}

/// The adaptive search parameters a scene set resolves to (frames may
/// differ per scene, so the cutoff is resolved per scene).
pub fn resolved_params(config: &ProposeConfig, scene: &Scene) -> SearchParams {
    config.search_params(f64::from(scene.width.min(scene.height)))
}
