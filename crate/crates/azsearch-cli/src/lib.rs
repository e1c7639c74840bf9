//! The `azsearch` command line: scene generation, sample mining, training,
//! proposing, evaluation, and an adaptive-vs-grid comparison — one
//! deterministic pipeline driven by a single `--seed`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data validation error,
//! 4 numeric failure, 1 anything else (I/O). Errors are also emitted as a
//! single JSON object on stderr.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub mod commands;
pub mod config;
pub mod io;

pub use config::*;

/// Adaptive zoom/adjacency region-proposal search pipeline.
#[derive(Debug, Parser)]
#[command(name = "azsearch", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Global seed; all randomness flows from it through named substreams.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads for per-scene work. Outputs are identical for any
    /// value.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PredictorKind {
    Oracle,
    Random,
    Model,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic scenes.
    Gen {
        /// Scene generation config (JSON); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of scenes.
        #[arg(long)]
        n: usize,
        /// Output scenes file (JSON array).
        #[arg(long)]
        out: PathBuf,
        /// Print the resolved config and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Build a training set from scenes (inverse matching + mining).
    Mine {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output training samples (JSON lines).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        print_config: bool,
    },
    /// Train the predictor on mined samples.
    Train {
        /// Training samples (JSON lines).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output model file (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Loss log (CSV: iteration,zoom_ce,conf_ce,bbox,total).
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        print_config: bool,
    },
    /// Run the adaptive search over scenes and emit ranked proposals.
    Propose {
        #[arg(long)]
        scenes: PathBuf,
        /// Search params (JSON); defaults apply when omitted.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Which predictor drives the search.
        #[arg(long, value_enum, default_value_t = PredictorKind::Oracle)]
        predictor: PredictorKind,
        /// Model file, required with `--predictor model`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Output proposals (JSON lines).
        #[arg(long)]
        out: PathBuf,
        /// Output per-scene search traces (JSON).
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        print_config: bool,
    },
    /// Recall and efficiency reports for a proposals file.
    Eval {
        #[arg(long)]
        props: PathBuf,
        #[arg(long)]
        scenes: PathBuf,
        /// Trace file from `propose`, enables the anchor histogram.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        outdir: PathBuf,
        /// Proposal budget per scene.
        #[arg(long, default_value_t = 300)]
        top_n: usize,
        /// Also write SVG line charts.
        #[arg(long)]
        plots: bool,
    },
    /// Run adaptive and fixed-grid searches on the same scenes and emit a
    /// side-by-side report.
    Compare {
        #[arg(long)]
        scenes: PathBuf,
        /// Comparison config (JSON); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = PredictorKind::Oracle)]
        predictor: PredictorKind,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        outdir: PathBuf,
        #[arg(long)]
        plots: bool,
        #[arg(long)]
        print_config: bool,
    },
}

/// Error categories carrying the exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, missing input files, malformed config: exit 2.
    Config(String),
    /// Input data failing schema or invariant validation: exit 3.
    Data(String),
    /// Non-finite losses, predictor failures mid-search: exit 4.
    Numeric(String),
    /// Everything else (output I/O): exit 1.
    Io(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Io(_) => 1,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Numeric(_) => "numeric",
            CliError::Io(_) => "io",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Numeric(m) | CliError::Io(m) => m,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} error: {}", self.category(), self.message())
    }
}

/// Provenance record written alongside every output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub seed: u64,
    pub threads: usize,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub config: serde_json::Value,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: u64, threads: usize) -> Self {
        RunManifest {
            tool: "azsearch",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            seed,
            threads,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            config: serde_json::Value::Null,
        }
    }

    pub fn input(mut self, name: &str, path: &Path) -> Self {
        self.inputs.insert(name.into(), path.display().to_string());
        self
    }

    pub fn input_opt(self, name: &str, path: Option<&PathBuf>) -> Self {
        match path {
            Some(p) => self.input(name, p),
            None => self,
        }
    }

    pub fn output(mut self, name: &str, path: &Path) -> Self {
        self.outputs.insert(name.into(), path.display().to_string());
        self
    }

    pub fn config_value<T: Serialize>(mut self, config: &T) -> Self {
        self.config = serde_json::to_value(config).expect("config serializes");
        self
    }

    /// Write next to a single output file (`<out>.manifest.json`).
    pub fn write_beside(&self, out: &Path) -> Result<(), CliError> {
        let mut path = out.as_os_str().to_owned();
        path.push(".manifest.json");
        self.write_to(Path::new(&path))
    }

    /// Write into an output directory as `manifest.json`.
    pub fn write_in_dir(&self, dir: &Path) -> Result<(), CliError> {
        self.write_to(&dir.join("manifest.json"))
    }

    fn write_to(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n")
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
    }
}

/// Parse arguments and run. Returns the process exit code; errors have
/// already been reported on stderr as JSON.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are not errors
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = CliError::Config(e.to_string());
            emit_error(&err);
            return err.code();
        }
    };

    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            emit_error(&e);
            e.code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("cannot build thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Gen { ref config, n, ref out, print_config } => {
            commands::gen::run(cli.seed, cli.threads, config.as_ref(), n, out, print_config)
        }
        Command::Mine { ref scenes, ref config, ref out, print_config } => {
            commands::mine::run(cli.seed, cli.threads, scenes, config.as_ref(), out, print_config)
        }
        Command::Train { ref data, ref scenes, ref config, ref out, ref log, print_config } => {
            commands::train::run(
                cli.seed,
                cli.threads,
                data,
                scenes,
                config.as_ref(),
                out,
                log.as_ref(),
                print_config,
            )
        }
        Command::Propose {
            ref scenes,
            ref params,
            predictor,
            ref model,
            ref out,
            ref trace,
            print_config,
        } => commands::propose::run(
            cli.seed,
            cli.threads,
            scenes,
            params.as_ref(),
            predictor,
            model.as_ref(),
            out,
            trace.as_ref(),
            print_config,
        ),
        Command::Eval { ref props, ref scenes, ref trace, ref outdir, top_n, plots } => {
            commands::eval::run(
                cli.seed,
                cli.threads,
                props,
                scenes,
                trace.as_ref(),
                outdir,
                top_n,
                plots,
            )
        }
        Command::Compare {
            ref scenes,
            ref config,
            predictor,
            ref model,
            ref outdir,
            plots,
            print_config,
        } => commands::compare::run(
            cli.seed,
            cli.threads,
            scenes,
            config.as_ref(),
            predictor,
            model.as_ref(),
            outdir,
            plots,
            print_config,
        ),
    })
}

/// One machine-readable JSON object on the diagnostic stream.
fn emit_error(e: &CliError) {
    let json = serde_json::json!({
        "error": { "category": e.category(), "code": e.code(), "message": e.message() }
    });
    eprintln!("{json}");
}
