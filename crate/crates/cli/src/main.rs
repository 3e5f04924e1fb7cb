// SPDX-License-Identifier: MIT OR Apache-2.0

//! `sega`: run, measure and report code-generation experiments, and drive
//! the attention-intervention testbed.
//!
//! Exit codes: 0 success, 1 pipeline incomplete or failed, 2 usage error.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use sega_core::corpus::{
    load_corpus, render_prompt, save_corpus, ConditionKind, ImplementationStub, Language, MarkerKind,
    PromptTemplate, TestCorpus,
};
use sega_core::mechanism::{self, EffectiveAttention, Probe, WkvParams, DEFAULT_SCALES};
use sega_core::pipeline::{load_metrics, measure, run_experiment, RunConfig};
use sega_core::providers::EndpointKind;
use sega_core::report::{emit_report, ReportFormat};
use sega_core::runners::{RunnerKind, DEFAULT_TIMEOUT_S};
use sega_core::stats::{attention_contrast, kl_divergence, welch_t, Distribution, KlMode, Sample, DEFAULT_KL_EPSILON};
use sega_core::Error;

#[derive(Parser)]
#[command(name = "sega", version, about = "Test co-location experiments and attention interventions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an n-run batch and measure it.
    Run(RunArgs),
    /// Re-measure an existing batch directory without network access.
    Measure {
        dir: PathBuf,
    },
    /// Welch's t-test, KL divergence and attention contrast.
    Stats {
        #[command(subcommand)]
        op: StatsOp,
    },
    /// Synthetic WKV instance: effective attention and dose-response.
    Mechanism(MechanismArgs),
    /// Collect metrics.json files into report.json/.csv and an SVG plot.
    Report(ReportArgs),
    /// Index a test-corpus text file into a corpus manifest.
    CorpusIndex(CorpusIndexArgs),
    /// Render a prompt for one condition.
    Prompt(PromptArgs),
}

#[derive(Args, Default)]
struct RunArgs {
    /// JSON file with default values for any of these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "SEGA_MODEL")]
    model: Option<String>,
    /// anthropic, openai, local or stub.
    #[arg(long, env = "SEGA_PROVIDER")]
    provider: Option<String>,
    #[arg(long, env = "SEGA_RUNS")]
    runs: Option<u32>,
    /// Milliseconds between request starts.
    #[arg(long, env = "SEGA_DELAY")]
    delay: Option<u64>,
    #[arg(long)]
    prompt_file: Option<PathBuf>,
    #[arg(long)]
    experiment_label: Option<String>,
    #[arg(long)]
    language: Option<String>,
    #[arg(long)]
    condition: Option<String>,
    #[arg(long, env = "SEGA_OUTPUT_ROOT")]
    output_root: Option<PathBuf>,
    /// Corpus manifest (JSON) for the prompt's tests.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// doctest, unittest or cargo. Omit to skip execution.
    #[arg(long)]
    runner: Option<String>,
    /// Per-run runner timeout in seconds.
    #[arg(long)]
    timeout: Option<u64>,
    #[arg(long, env = "SEGA_BASE_URL")]
    base_url: Option<String>,
    /// Name of the environment variable holding the API key.
    #[arg(long)]
    credential_env: Option<String>,
    #[arg(long)]
    max_tokens: Option<u32>,
    /// Canned reply file for the stub provider; repeat to cycle.
    #[arg(long = "stub-response")]
    stub_responses: Vec<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct RunFile {
    model: Option<String>,
    provider: Option<String>,
    runs: Option<u32>,
    delay: Option<u64>,
    prompt_file: Option<PathBuf>,
    experiment_label: Option<String>,
    language: Option<String>,
    condition: Option<String>,
    output_root: Option<PathBuf>,
    corpus: Option<PathBuf>,
    runner: Option<String>,
    timeout: Option<u64>,
    base_url: Option<String>,
    credential_env: Option<String>,
    max_tokens: Option<u32>,
    #[serde(default)]
    stub_response: Vec<PathBuf>,
}

#[derive(Subcommand)]
enum StatsOp {
    /// Welch's t-test on two samples.
    Welch { a: PathBuf, b: PathBuf },
    /// KL(p || q) of two distributions.
    Kl {
        p: PathBuf,
        q: PathBuf,
        /// Smooth q with this epsilon instead of reporting infinity.
        #[arg(long, num_args = 0..=1, default_missing_value = "1e-10")]
        smooth: Option<f64>,
    },
    /// Ratio of means plus Welch's test.
    Contrast { a: PathBuf, b: PathBuf },
}

#[derive(Args)]
struct MechanismArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    seq_len: usize,
    #[arg(long, default_value_t = 2)]
    heads: usize,
    #[arg(long, default_value_t = 8)]
    head_dim: usize,
    /// Positions whose state write is steered.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0usize])]
    positions: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SCALES.to_vec())]
    scales: Vec<f64>,
    #[arg(long, default_value_t = 32)]
    probe_vocab: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Batch directories containing metrics.json.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = vec!["json".to_owned(), "csv".to_owned(), "svg".to_owned()])]
    format: Vec<String>,
}

#[derive(Args)]
struct CorpusIndexArgs {
    #[arg(long)]
    language: String,
    #[arg(long)]
    marker: String,
    #[arg(long)]
    text: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    stem: String,
}

#[derive(Args)]
struct PromptArgs {
    #[arg(long)]
    task: PathBuf,
    #[arg(long)]
    condition: String,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Implementation stub source.
    #[arg(long)]
    stub: Option<PathBuf>,
    #[arg(long, default_value = "heap")]
    module: String,
    #[arg(long, value_delimiter = ',')]
    exports: Vec<String>,
    #[arg(long)]
    api_docs: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failure and the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Capability(_) => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T, Failure> {
    s.parse().map_err(|e: Error| usage(e.to_string()))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::from(Error::Io {
        path: path.to_owned(),
        source: e,
    }))
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<(), Failure> {
    let s = serde_json::to_string_pretty(v).map_err(|e| Failure::from(Error::from(e)))?;
    println!("{s}");
    Ok(())
}

fn run_config(args: RunArgs) -> Result<RunConfig, Failure> {
    let file: RunFile = match &args.config {
        Some(p) => serde_json::from_str(&read(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        None => RunFile::default(),
    };
    fn need<T>(v: Option<T>, flag: &str) -> Result<T, Failure> {
        v.ok_or_else(|| usage(format!("missing --{flag}")))
    }
    let provider = args.provider.or(file.provider).unwrap_or_else(|| "anthropic".into());
    let language = args.language.or(file.language).unwrap_or_else(|| "python".into());
    let runner = args.runner.or(file.runner);
    let mut stub_responses = args.stub_responses;
    if stub_responses.is_empty() {
        stub_responses = file.stub_response;
    }
    Ok(RunConfig {
        model_id: need(args.model.or(file.model), "model")?,
        provider: parse::<EndpointKind>(&provider)?,
        prompt_file: need(args.prompt_file.or(file.prompt_file), "prompt-file")?,
        experiment_label: need(args.experiment_label.or(file.experiment_label), "experiment-label")?,
        runs: args.runs.or(file.runs).unwrap_or(50),
        delay_ms: args.delay.or(file.delay).unwrap_or(4_000),
        language: parse::<Language>(&language)?,
        condition: parse::<ConditionKind>(&need(args.condition.or(file.condition), "condition")?)?,
        output_root: args.output_root.or(file.output_root).unwrap_or_else(|| PathBuf::from(".")),
        corpus: need(args.corpus.or(file.corpus), "corpus")?,
        runner: runner.as_deref().map(parse::<RunnerKind>).transpose()?,
        timeout_s: args.timeout.or(file.timeout).unwrap_or(DEFAULT_TIMEOUT_S),
        temperature: 0.0,
        base_url: args.base_url.or(file.base_url),
        credential_env_var: args.credential_env.or(file.credential_env),
        max_output_tokens: args.max_tokens.or(file.max_tokens),
        stub_responses,
    })
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let config = run_config(args)?;
    config.validate()?;
    let outcome = run_experiment(&config)?;
    let m = &outcome.manifest;
    match &outcome.report {
        Some(r) => {
            eprintln!(
                "{}: {} runs, determinism {}%, preservation {}%, correctness {}",
                m.experiment_label,
                m.records.len(),
                r.triple.determinism_pct,
                r.triple.preservation_pct,
                r.triple.correctness_pct.map_or_else(|| "N/A".to_owned(), |c| format!("{c}%")),
            );
            Ok(())
        }
        None => Err(Failure {
            code: 1,
            message: format!(
                "batch incomplete after run {:?}: {}",
                m.last_successful_run,
                m.error.as_deref().unwrap_or("unknown error")
            ),
        }),
    }
}

/// Whitespace/comma separated numbers, a JSON array, or a JSON sample.
fn read_numbers(path: &Path) -> Result<Sample, Failure> {
    let text = read(path)?;
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        return serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())));
    }
    if trimmed.starts_with('[') {
        let values: Vec<f64> = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        return Ok(Sample::new(label, values));
    }
    let values = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|e| usage(format!("{}: {t:?}: {e}", path.display()))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Sample::new(label, values))
}

fn cmd_stats(op: StatsOp) -> Result<(), Failure> {
    match op {
        StatsOp::Welch { a, b } => print_json(&welch_t(&read_numbers(&a)?, &read_numbers(&b)?)?),
        StatsOp::Kl { p, q, smooth } => {
            let p = Distribution::new(read_numbers(&p)?.values)?;
            let q = Distribution::new(read_numbers(&q)?.values)?;
            let mode = match smooth {
                Some(epsilon) => KlMode::Smoothed { epsilon },
                None => KlMode::Exact,
            };
            let r = kl_divergence(&p, &q, mode)?;
            print_json(&serde_json::json!({
                "nats": if r.infinite { serde_json::Value::from("inf") } else { r.nats.into() },
                "percent": if r.infinite { serde_json::Value::from("inf") } else { r.percent.into() },
                "infinite": r.infinite,
                "mode": r.mode,
                "default_epsilon": DEFAULT_KL_EPSILON,
            }))
        }
        StatsOp::Contrast { a, b } => print_json(&attention_contrast(&read_numbers(&a)?, &read_numbers(&b)?)?),
    }
}

fn cmd_mechanism(args: MechanismArgs) -> Result<(), Failure> {
    let params = WkvParams::random(args.seed, args.seq_len, args.heads, args.head_dim)?;
    let ea: EffectiveAttention = mechanism::effective_attention(&params)?;
    let probe = Probe::random(args.seed.wrapping_add(1), args.probe_vocab, args.heads, args.head_dim)?;
    let positions: BTreeSet<usize> = args.positions.into_iter().collect();
    let curve = mechanism::dose_response(&params, &positions, &args.scales, &probe)?;
    let outputs = mechanism::wkv_forward(&params, None)?;
    fs::create_dir_all(&args.out).map_err(|e| Failure::from(Error::Io {
        path: args.out.clone(),
        source: e,
    }))?;
    let write = |name: &str, body: String| -> Result<(), Failure> {
        let p = args.out.join(name);
        fs::write(&p, body).map_err(|e| Failure::from(Error::Io { path: p, source: e }))
    };
    let to_json = |v: &serde_json::Value| serde_json::to_string_pretty(v).map(|s| s + "\n").map_err(|e| Failure::from(Error::from(e)));
    write(
        "instance.json",
        to_json(&serde_json::json!({
            "seed": args.seed,
            "seq_len": args.seq_len,
            "heads": args.heads,
            "head_dim": args.head_dim,
            "params": params,
            "outputs": outputs,
        }))?,
    )?;
    write("effective_attention.json", to_json(&serde_json::to_value(&ea).map_err(|e| Failure::from(Error::from(e)))?)?)?;
    let mut csv = String::from("scale,kl_nats,kl_percent\n");
    for p in &curve {
        csv.push_str(&format!("{},{},{}\n", p.scale, p.kl.nats, p.kl.percent));
    }
    write("dose_response.csv", csv)?;
    write(
        "dose_response.json",
        to_json(&serde_json::json!({ "positions": positions, "points": curve }))?,
    )?;
    for p in &curve {
        println!("scale {:>5}  KL {:.6e} nats", p.scale, p.kl.nats);
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), Failure> {
    let formats = args
        .format
        .iter()
        .map(|f| parse::<ReportFormat>(f))
        .collect::<Result<BTreeSet<_>, _>>()?;
    let reports = args
        .dirs
        .iter()
        .map(|d| load_metrics(d).map_err(Failure::from))
        .collect::<Result<Vec<_>, _>>()?;
    for p in emit_report(&reports, &formats, &args.out)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn cmd_corpus_index(args: CorpusIndexArgs) -> Result<(), Failure> {
    let language = parse::<Language>(&args.language)?;
    let kind = parse::<MarkerKind>(&args.marker)?;
    let corpus = TestCorpus::from_text(language, kind, read(&args.text)?)?;
    let path = save_corpus(&corpus, &args.out_dir, &args.stem)?;
    println!("{} ({} cases)", path.display(), corpus.denominator);
    Ok(())
}

fn cmd_prompt(args: PromptArgs) -> Result<(), Failure> {
    let condition = parse::<ConditionKind>(&args.condition)?;
    let mut template = PromptTemplate::new(read(&args.task)?, condition);
    if let Some(c) = &args.corpus {
        template = template.with_corpus(load_corpus(c)?);
    }
    if let Some(s) = &args.stub {
        let language = template.corpus_slot.as_ref().map_or(Language::Python, |c| c.target_language);
        template = template.with_stub(ImplementationStub {
            module_name: args.module.clone(),
            language,
            source: read(s)?,
            exported_names: args.exports.clone(),
        });
    }
    if let Some(d) = &args.api_docs {
        template = template.with_api_docs(read(d)?);
    }
    let prompt = render_prompt(&template)?;
    match &args.out {
        Some(p) => fs::write(p, prompt).map_err(|e| Failure::from(Error::Io {
            path: p.clone(),
            source: e,
        })),
        None => {
            print!("{prompt}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Measure { dir } => measure(&dir).map(|_| ()).map_err(Failure::from),
        Command::Stats { op } => cmd_stats(op),
        Command::Mechanism(args) => cmd_mechanism(args),
        Command::Report(args) => cmd_report(args),
        Command::CorpusIndex(args) => cmd_corpus_index(args),
        Command::Prompt(args) => cmd_prompt(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
