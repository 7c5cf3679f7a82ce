//! Scenario runner: parses a TOML scenario, runs one pipeline and writes its
//! outputs together with a manifest of content digests.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use atomlink_core::analysis::AnalysisError;
use atomlink_core::bloch::BlochError;
use atomlink_core::holo::HoloError;
use atomlink_core::lm::LmError;
use atomlink_core::planner::PlanError;
use atomlink_core::sim::{RecordError, SimError};
use thiserror::Error;

pub mod manifest;
pub mod pipelines;
pub mod scenario;

pub use manifest::{verify_manifest, FileEntry, RunManifest, MANIFEST_NAME};
pub use scenario::{Mode, Scenario};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Schema(_) => 2,
            HarnessError::NonConvergence(_) => 3,
            HarnessError::Io { .. } | HarnessError::Runtime(_) => 1,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: io::Error) -> Self {
        HarnessError::Io { context: context.into(), source }
    }
}

impl From<SimError> for HarnessError {
    fn from(e: SimError) -> Self {
        HarnessError::Schema(e.to_string())
    }
}

impl From<PlanError> for HarnessError {
    fn from(e: PlanError) -> Self {
        HarnessError::Schema(format!("plan: {e}"))
    }
}

impl From<BlochError> for HarnessError {
    fn from(e: BlochError) -> Self {
        match e {
            BlochError::Config(_) | BlochError::InvalidPulse(_) | BlochError::StepTooLarge { .. } => {
                HarnessError::Schema(e.to_string())
            }
            BlochError::Fit(LmError::Underdetermined { .. }) => HarnessError::Schema(e.to_string()),
            _ => HarnessError::NonConvergence(e.to_string()),
        }
    }
}

impl From<HoloError> for HarnessError {
    fn from(e: HoloError) -> Self {
        match e {
            HoloError::Io(source) => HarnessError::io("mask", source),
            other => HarnessError::Schema(format!("wgs: {other}")),
        }
    }
}

impl From<AnalysisError> for HarnessError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Fringe(_) | AnalysisError::ZeroFactor => HarnessError::NonConvergence(e.to_string()),
            _ => HarnessError::Runtime(e.to_string()),
        }
    }
}

impl From<RecordError> for HarnessError {
    fn from(e: RecordError) -> Self {
        HarnessError::Runtime(e.to_string())
    }
}

/// Output files of one run keyed by path relative to the output directory.
pub type Outputs = BTreeMap<String, Vec<u8>>;

/// Everything a run needs besides the scenario itself.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub mode: Mode,
    pub scenario_path: PathBuf,
    pub out_dir: PathBuf,
    /// Overrides the scenario's seed.
    pub seed: Option<u64>,
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
}

/// Reads, validates and runs a scenario file, then writes outputs and
/// `manifest.json`. On failure nothing written by this run is left behind.
pub fn run(opts: &RunOptions) -> Result<RunManifest, HarnessError> {
    let started = manifest::now();
    let bytes = fs::read(&opts.scenario_path)
        .map_err(|e| HarnessError::io(format!("reading {}", opts.scenario_path.display()), e))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| HarnessError::Schema("scenario is not UTF-8".into()))?;
    let mut scenario = Scenario::parse(&text)?;
    if opts.seed.is_some() {
        scenario.seed = opts.seed;
    }
    scenario.validate(opts.mode)?;
    let base = opts.scenario_path.parent().map(Path::to_path_buf).unwrap_or_default();

    let outputs = match opts.threads {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| HarnessError::Runtime(e.to_string()))?;
            pool.install(|| pipelines::execute(opts.mode, &scenario, &base))?
        }
        None => pipelines::execute(opts.mode, &scenario, &base)?,
    };

    let threads = opts.threads.unwrap_or_else(rayon::current_num_threads);
    let mut man = RunManifest::new(opts.mode, scenario.seed, &bytes, threads, &outputs, started);
    write_outputs(&opts.out_dir, &outputs, &mut man)?;
    Ok(man)
}

/// Writes every output, then the manifest. Files created here are removed
/// again if any write fails.
fn write_outputs(dir: &Path, outputs: &Outputs, man: &mut RunManifest) -> Result<(), HarnessError> {
    let mut written: Vec<PathBuf> = Vec::new();
    let mut created: Vec<PathBuf> = Vec::new();
    let result = (|| {
        for (rel, data) in outputs {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                for d in parent.ancestors().collect::<Vec<_>>().into_iter().rev() {
                    if !d.as_os_str().is_empty() && !d.exists() {
                        fs::create_dir(d).map_err(|e| HarnessError::io(format!("creating {}", d.display()), e))?;
                        created.push(d.to_path_buf());
                    }
                }
            }
            fs::write(&path, data).map_err(|e| HarnessError::io(format!("writing {}", path.display()), e))?;
            written.push(path);
        }
        man.finished_at = manifest::now();
        let path = dir.join(MANIFEST_NAME);
        let json = serde_json::to_vec_pretty(man).map_err(|e| HarnessError::Runtime(e.to_string()))?;
        fs::write(&path, json).map_err(|e| HarnessError::io(format!("writing {}", path.display()), e))?;
        Ok(())
    })();
    if result.is_err() {
        for p in &written {
            let _ = fs::remove_file(p);
        }
        for d in created.iter().rev() {
            let _ = fs::remove_dir(d);
        }
    }
    result
}
