// SPDX-License-Identifier: MIT OR Apache-2.0

//! End-to-end experiment: batch, extraction, preservation, runners, metrics.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{load_corpus, save_corpus, ConditionKind, Language, TestCorpus};
use crate::error::{Error, Result};
use crate::extraction::{
    extract_code_blocks, extract_run, first_block_for, measure_preservation, measurement_target, scan_markers,
    MeasurementTarget,
};
use crate::layout::{existing_runs, RunPaths, METRICS_FILE};
use crate::metrics::{aggregate, content_hash, MeasuredRun};
use crate::providers::{run_batch, BatchManifest, BatchRequest, Client, EndpointKind, ProviderConfig, SystemClock};
use crate::report::{ExperimentReport, Provenance};
use crate::runners::{probe_toolchain, run_spec, RunSpec, RunnerKind, DEFAULT_TIMEOUT_S};

pub const EXPERIMENT_FILE: &str = "experiment.json";
pub const CORPUS_STEM: &str = "corpus";

/// Everything `run` needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model_id: String,
    pub provider: EndpointKind,
    pub prompt_file: PathBuf,
    pub experiment_label: String,
    pub runs: u32,
    pub delay_ms: u64,
    pub language: Language,
    pub condition: ConditionKind,
    pub output_root: PathBuf,
    /// Corpus manifest whose cases set the preservation denominator.
    pub corpus: PathBuf,
    #[serde(default)]
    pub runner: Option<RunnerKind>,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub credential_env_var: Option<String>,
    #[serde(default)]
    pub max_output_tokens: Option<u32>,
    /// Files whose contents the stub provider replays, cycled by run.
    #[serde(default)]
    pub stub_responses: Vec<PathBuf>,
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_S
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("--runs must be at least 1".into()));
        }
        if let Some(r) = self.runner {
            if r.language() != self.language {
                return Err(Error::Capability(format!("{r} cannot run {} code", self.language)));
            }
        }
        if self.timeout_s == 0 {
            return Err(Error::Config("timeout must be positive".into()));
        }
        Ok(())
    }

    pub fn provider_config(&self) -> Result<ProviderConfig> {
        let mut p = ProviderConfig::new(self.provider, self.model_id.clone());
        if let Some(url) = &self.base_url {
            p.base_url = url.clone();
        }
        if let Some(var) = &self.credential_env_var {
            p.credential_env_var = Some(var.clone());
        }
        if let Some(n) = self.max_output_tokens {
            p.max_output_tokens = n;
        }
        p.delay_ms = self.delay_ms;
        for path in &self.stub_responses {
            p.stub_responses
                .push(fs::read_to_string(path).map_err(|e| Error::io(path, e))?);
        }
        p.validate()?;
        Ok(p)
    }
}

/// The subset of a run's configuration that `measure` needs, stored with the batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentInfo {
    pub label: String,
    pub model_id: String,
    pub provider: EndpointKind,
    pub language: Language,
    pub condition: ConditionKind,
    pub runner: Option<RunnerKind>,
    pub timeout_s: u64,
    pub corpus_hash: String,
    pub prompt_hash: String,
}

impl ExperimentInfo {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(EXPERIMENT_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path,
            message: e.to_string(),
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(EXPERIMENT_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    fn provenance(&self) -> Provenance {
        Provenance {
            model_id: self.model_id.clone(),
            provider: self.provider.as_str().into(),
            condition: self.condition.as_str().into(),
            language: self.language.as_str().into(),
            corpus_hash: self.corpus_hash.clone(),
            prompt_hash: self.prompt_hash.clone(),
            runner: self.runner.map(|r| r.as_str().into()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub manifest: BatchManifest,
    /// Present when the batch completed and was measured.
    pub report: Option<ExperimentReport>,
}

/// Run the batch, then measure it if every run succeeded.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let prompt = fs::read_to_string(&config.prompt_file).map_err(|e| Error::io(&config.prompt_file, e))?;
    let corpus = load_corpus(&config.corpus)?;
    if corpus.target_language != config.language {
        return Err(Error::Config(format!(
            "corpus is {} but --language is {}",
            corpus.target_language, config.language
        )));
    }
    if let Some(r) = config.runner {
        probe_toolchain(r)?;
    }
    let client = Client::new(config.provider_config()?)?;
    let dir = config.output_root.join(&config.experiment_label);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    save_corpus(&corpus, &dir, CORPUS_STEM)?;
    ExperimentInfo {
        label: config.experiment_label.clone(),
        model_id: config.model_id.clone(),
        provider: config.provider,
        language: config.language,
        condition: config.condition,
        runner: config.runner,
        timeout_s: config.timeout_s,
        corpus_hash: content_hash(corpus.full_text.as_bytes()),
        prompt_hash: content_hash(prompt.as_bytes()),
    }
    .save(&dir)?;

    let manifest = run_batch(
        &client,
        &BatchRequest {
            prompt: &prompt,
            n_runs: config.runs,
            delay_ms: config.delay_ms,
            label: &config.experiment_label,
            output_root: &config.output_root,
            temperature: config.temperature,
        },
        &mut SystemClock::default(),
    )?;
    let report = if manifest.is_complete() {
        Some(measure(&dir)?)
    } else {
        None
    };
    Ok(ExperimentOutcome { manifest, report })
}

static FROM_IMPORT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^\s*from\s+([A-Za-z_]\w*)\s+import\b").unwrap());

/// Runner invocation for one run.
///
/// A sidecar answer splits implementation and tests across blocks; the test
/// block then runs against the first block saved under the imported name.
fn run_spec_for(info: &ExperimentInfo, corpus: &TestCorpus, runner: RunnerKind, code_path: &Path, response: &str) -> RunSpec {
    let mut spec = RunSpec::new(code_path, runner, info.timeout_s);
    if runner != RunnerKind::UnittestRunner
        || measurement_target(info.condition, info.language) != MeasurementTarget::FullResponse
    {
        return spec;
    }
    let blocks = extract_code_blocks(response);
    let Some(code) = first_block_for(&blocks, info.language) else {
        return spec;
    };
    let marker = corpus.marker_spec();
    let Some(tests) = blocks
        .iter()
        .find(|b| b.ordinal != code.ordinal && scan_markers(&b.body, &marker).count > 0)
    else {
        return spec;
    };
    let module = FROM_IMPORT
        .captures_iter(&tests.body)
        .map(|c| c[1].to_owned())
        .find(|m| m != "unittest")
        .unwrap_or_else(|| "generated".into());
    spec.file_name = Some(format!("{module}.py"));
    spec.support_files.push(("test_generated.py".into(), tests.body.clone()));
    spec.test_entry = Some("test_generated.py".into());
    spec
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Measure every persisted run in `dir` and write `metrics.json`.
///
/// Reads only local artifacts.
pub fn measure(dir: &Path) -> Result<ExperimentReport> {
    let info = ExperimentInfo::load(dir)?;
    let corpus = load_corpus(dir.join(format!("{CORPUS_STEM}.json")))?;
    let runs = existing_runs(dir).map_err(|e| Error::io(dir, e))?;
    if runs.is_empty() {
        return Err(Error::Precondition(format!("{} has no run responses", dir.display())));
    }
    if let Some(r) = info.runner {
        probe_toolchain(r)?;
    }
    let mut measured = Vec::with_capacity(runs.len());
    for run in runs {
        let paths = RunPaths::new(dir, run);
        extract_run(dir, run, info.language)?;
        let preservation = measure_preservation(dir, run, info.condition, &corpus)?;
        write_json(&paths.preservation(), &preservation)?;
        let code_path = paths.code(info.language.file_extension());
        let code = fs::read(&code_path).map_err(|e| Error::io(&code_path, e))?;
        let outcome = match info.runner {
            Some(runner) => {
                let response_path = paths.response();
                let response = fs::read_to_string(&response_path).map_err(|e| Error::io(&response_path, e))?;
                let outcome = run_spec(&run_spec_for(&info, &corpus, runner, &code_path, &response))?;
                write_json(&paths.outcome(), &outcome)?;
                Some(outcome)
            }
            None => None,
        };
        measured.push(MeasuredRun::new(run, &code, preservation, outcome));
    }
    let (triple, det) = aggregate(&measured)?;
    let report = ExperimentReport::new(info.label.clone(), info.provenance(), triple, &det, &measured)?;
    let path = dir.join(METRICS_FILE);
    fs::write(&path, report.to_json()?).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

/// Load `metrics.json` from a measured batch directory.
pub fn load_metrics(dir: &Path) -> Result<ExperimentReport> {
    let path = dir.join(METRICS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path,
        message: e.to_string(),
    })
}
