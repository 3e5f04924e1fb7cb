// SPDX-License-Identifier: MIT OR Apache-2.0

//! Native test runners and their summary-line parsers.
//!
//! Summary formats understood:
//!
//! ```text
//! doctest -v     64 tests in 9 items.
//!                62 passed and 2 failed.
//! unittest -v    Ran 4 tests in 0.001s
//!                FAILED (failures=1, errors=1, skipped=1)
//! cargo test     test result: ok. 27 passed; 0 failed; 1 ignored; 0 measured; ...
//! ```
//!
//! Cargo prints one `test result` line per test binary; they are summed.

use std::fmt;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::str::FromStr;
use std::sync::LazyLock;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::Language;
use crate::error::{Error, Result};

pub const DEFAULT_TIMEOUT_S: u64 = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunnerKind {
    DoctestRunner,
    UnittestRunner,
    CargoTestRunner,
}

impl RunnerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RunnerKind::DoctestRunner => "doctest_runner",
            RunnerKind::UnittestRunner => "unittest_runner",
            RunnerKind::CargoTestRunner => "cargo_test_runner",
        }
    }

    pub fn language(self) -> Language {
        match self {
            RunnerKind::DoctestRunner | RunnerKind::UnittestRunner => Language::Python,
            RunnerKind::CargoTestRunner => Language::Rust,
        }
    }

    fn toolchain(self) -> (&'static str, &'static [&'static str]) {
        match self {
            RunnerKind::DoctestRunner | RunnerKind::UnittestRunner => ("python3", &["--version"]),
            RunnerKind::CargoTestRunner => ("cargo", &["--version"]),
        }
    }
}

impl fmt::Display for RunnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RunnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "doctest" | "doctest_runner" => Ok(RunnerKind::DoctestRunner),
            "unittest" | "unittest_runner" => Ok(RunnerKind::UnittestRunner),
            "cargo" | "cargo_test" | "cargo_test_runner" => Ok(RunnerKind::CargoTestRunner),
            other => Err(Error::Capability(format!("unknown runner {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunnerCounts {
    pub passed: u32,
    pub failed: u32,
    pub ignored: u32,
}

/// Outcome of one native runner invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    /// `None` when the run timed out before we could tell.
    pub compiled: Option<bool>,
    pub file_pass: bool,
    pub individual_passed: u32,
    pub individual_failed: u32,
    pub individual_ignored: u32,
    pub runner_kind: RunnerKind,
    #[serde(default)]
    pub timed_out: bool,
    #[serde(default)]
    pub no_tests: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub raw_output: String,
}

impl TestOutcome {
    fn not_compiled(runner_kind: RunnerKind, raw_output: String, note: impl Into<String>) -> Self {
        Self {
            compiled: Some(false),
            file_pass: false,
            individual_passed: 0,
            individual_failed: 0,
            individual_ignored: 0,
            runner_kind,
            timed_out: false,
            no_tests: false,
            note: Some(note.into()),
            raw_output,
        }
    }

    fn timed_out(runner_kind: RunnerKind, raw_output: String, timeout: Duration) -> Self {
        Self {
            compiled: None,
            file_pass: false,
            individual_passed: 0,
            individual_failed: 0,
            individual_ignored: 0,
            runner_kind,
            timed_out: true,
            no_tests: false,
            note: Some(format!("killed after {} s", timeout.as_secs())),
            raw_output,
        }
    }

    fn from_counts(runner_kind: RunnerKind, counts: RunnerCounts, raw_output: String) -> Self {
        let no_tests = counts.passed + counts.failed == 0;
        Self {
            compiled: Some(true),
            file_pass: counts.failed == 0,
            individual_passed: counts.passed,
            individual_failed: counts.failed,
            individual_ignored: counts.ignored,
            runner_kind,
            timed_out: false,
            no_tests,
            note: None,
            raw_output,
        }
    }

    /// Per-run individual-test correctness in percent.
    ///
    /// A run that did not compile or timed out scores 0. A compiling run with
    /// nothing executed has no defined correctness.
    pub fn correctness_pct(&self) -> Option<f64> {
        if self.compiled != Some(true) {
            return Some(0.0);
        }
        let total = self.individual_passed + self.individual_failed;
        if total == 0 {
            None
        } else {
            Some(100.0 * f64::from(self.individual_passed) / f64::from(total))
        }
    }
}

static DOCTEST_TOTAL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^(\d+) tests? in \d+ items?\.\s*$").unwrap());
static DOCTEST_PASSED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(\d+) passed").unwrap());
static DOCTEST_FAILED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(\d+) failed").unwrap());
static DOCTEST_SKIPPED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(\d+) skipped").unwrap());
static UNITTEST_RAN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^Ran (\d+) tests? in ").unwrap());
static UNITTEST_STATUS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^(OK|FAILED|NO TESTS RAN)(?: \(([^)]*)\))?\s*$").unwrap());
static CARGO_RESULT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?m)^test result: \w+\. (\d+) passed; (\d+) failed; (\d+) ignored;").unwrap()
});

fn num(s: &str) -> u32 {
    s.parse().unwrap_or(u32::MAX)
}

fn parse_error(kind: RunnerKind, raw: &str) -> Error {
    Error::RunnerParse {
        runner: kind.as_str().into(),
        raw: raw.into(),
    }
}

/// Extract pass/fail/ignore counts from a runner's summary lines.
pub fn parse_runner_output(raw: &str, kind: RunnerKind) -> Result<RunnerCounts> {
    match kind {
        RunnerKind::DoctestRunner => {
            let total = DOCTEST_TOTAL
                .captures_iter(raw)
                .last()
                .ok_or_else(|| parse_error(kind, raw))?;
            let tail = &raw[total.get(0).unwrap().end()..];
            let summary = tail.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
            let get = |re: &Regex| re.captures(summary).map_or(0, |c| num(&c[1]));
            let passed = DOCTEST_PASSED
                .captures(summary)
                .map(|c| num(&c[1]))
                .ok_or_else(|| parse_error(kind, raw))?;
            Ok(RunnerCounts {
                passed,
                failed: get(&DOCTEST_FAILED),
                ignored: get(&DOCTEST_SKIPPED),
            })
        }
        RunnerKind::UnittestRunner => {
            let ran = UNITTEST_RAN
                .captures_iter(raw)
                .last()
                .map(|c| num(&c[1]))
                .ok_or_else(|| parse_error(kind, raw))?;
            let status = UNITTEST_STATUS
                .captures_iter(raw)
                .last()
                .ok_or_else(|| parse_error(kind, raw))?;
            let (mut failed, mut ignored) = (0u32, 0u32);
            if let Some(detail) = status.get(2) {
                for part in detail.as_str().split(',') {
                    let Some((key, value)) = part.trim().split_once('=') else {
                        continue;
                    };
                    let value = num(value);
                    match key {
                        "failures" | "errors" | "unexpected successes" => failed += value,
                        "skipped" | "expected failures" => ignored += value,
                        _ => {}
                    }
                }
            }
            let passed = ran
                .checked_sub(failed + ignored)
                .ok_or_else(|| parse_error(kind, raw))?;
            Ok(RunnerCounts {
                passed,
                failed,
                ignored,
            })
        }
        RunnerKind::CargoTestRunner => {
            let mut counts = RunnerCounts::default();
            let mut seen = false;
            for c in CARGO_RESULT.captures_iter(raw) {
                seen = true;
                counts.passed += num(&c[1]);
                counts.failed += num(&c[2]);
                counts.ignored += num(&c[3]);
            }
            if seen {
                Ok(counts)
            } else {
                Err(parse_error(kind, raw))
            }
        }
    }
}

/// Check that the runner's toolchain can be launched.
pub fn probe_toolchain(kind: RunnerKind) -> Result<String> {
    let (program, args) = kind.toolchain();
    let out = Command::new(program)
        .args(args)
        .output()
        .map_err(|e| Error::Environment(format!("{program} not available: {e}")))?;
    if !out.status.success() {
        return Err(Error::Environment(format!("{program} --version failed")));
    }
    let mut v = String::from_utf8_lossy(&out.stdout).trim().to_owned();
    if v.is_empty() {
        v = String::from_utf8_lossy(&out.stderr).trim().to_owned();
    }
    Ok(v)
}

/// A runner invocation, possibly with sibling files the code imports.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub code_path: PathBuf,
    pub runner_kind: RunnerKind,
    pub timeout: Duration,
    /// Name the code file gets inside the scratch directory.
    pub file_name: Option<String>,
    /// Extra `(file name, contents)` pairs written next to the code.
    pub support_files: Vec<(String, String)>,
    /// For unittest: run this file instead of the code file.
    pub test_entry: Option<String>,
}

impl RunSpec {
    pub fn new(code_path: impl Into<PathBuf>, runner_kind: RunnerKind, timeout_s: u64) -> Self {
        Self {
            code_path: code_path.into(),
            runner_kind,
            timeout: Duration::from_secs(timeout_s),
            file_name: None,
            support_files: Vec::new(),
            test_entry: None,
        }
    }
}

struct Captured {
    status: Option<i32>,
    output: String,
    timed_out: bool,
}

fn run_child(mut cmd: Command, dir: &Path, timeout: Duration) -> Result<Captured> {
    let out_path = dir.join(".runner_stdout");
    let err_path = dir.join(".runner_stderr");
    let stdout = File::create(&out_path).map_err(|e| Error::io(&out_path, e))?;
    let stderr = File::create(&err_path).map_err(|e| Error::io(&err_path, e))?;
    let mut child = cmd
        .current_dir(dir)
        .stdin(Stdio::null())
        .stdout(stdout)
        .stderr(stderr)
        .spawn()
        .map_err(|e| Error::Environment(format!("failed to launch {:?}: {e}", cmd.get_program())))?;
    let start = Instant::now();
    let (status, timed_out) = loop {
        match child.try_wait().map_err(|e| Error::io(dir, e))? {
            Some(s) => break (s.code(), false),
            None if start.elapsed() >= timeout => {
                let _ = child.kill();
                let _ = child.wait();
                break (None, true);
            }
            None => std::thread::sleep(Duration::from_millis(20)),
        }
    };
    let mut output = fs::read_to_string(&out_path).unwrap_or_default();
    let err = fs::read_to_string(&err_path).unwrap_or_default();
    if !err.is_empty() {
        if !output.is_empty() && !output.ends_with('\n') {
            output.push('\n');
        }
        output.push_str(&err);
    }
    Ok(Captured {
        status,
        output,
        timed_out,
    })
}

fn python_command(args: &[&str]) -> Command {
    let mut cmd = Command::new("python3");
    cmd.args(args)
        .env("PYTHONHASHSEED", "0")
        .env("PYTHONDONTWRITEBYTECODE", "1");
    cmd
}

/// Run the file's tests under the native runner.
///
/// Test failures are data, never errors. Errors are reserved for a missing
/// toolchain, an unreadable input, or a summary we cannot parse.
pub fn run_native_tests(code_path: &Path, runner_kind: RunnerKind, timeout_s: u64) -> Result<TestOutcome> {
    run_spec(&RunSpec::new(code_path, runner_kind, timeout_s))
}

pub fn run_spec(spec: &RunSpec) -> Result<TestOutcome> {
    probe_toolchain(spec.runner_kind)?;
    let code = fs::read_to_string(&spec.code_path).map_err(|e| Error::io(&spec.code_path, e))?;
    let scratch = tempfile::Builder::new()
        .prefix("sega-run-")
        .tempdir()
        .map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let dir = scratch.path();
    for (name, contents) in &spec.support_files {
        let p = dir.join(name);
        fs::write(&p, contents).map_err(|e| Error::io(&p, e))?;
    }
    let kind = spec.runner_kind;
    match kind {
        RunnerKind::DoctestRunner | RunnerKind::UnittestRunner => {
            let name = spec.file_name.clone().unwrap_or_else(|| "generated.py".into());
            let p = dir.join(&name);
            fs::write(&p, &code).map_err(|e| Error::io(&p, e))?;
            let mut to_compile = vec![name.clone()];
            to_compile.extend(spec.support_files.iter().map(|(n, _)| n.clone()).filter(|n| n.ends_with(".py")));
            for file in &to_compile {
                let check = run_child(python_command(&["-m", "py_compile", file]), dir, spec.timeout)?;
                if check.timed_out {
                    return Ok(TestOutcome::timed_out(kind, check.output, spec.timeout));
                }
                if check.status != Some(0) {
                    return Ok(TestOutcome::not_compiled(kind, check.output, format!("{file} does not compile")));
                }
            }
            let entry = spec.test_entry.clone().unwrap_or(name);
            let args: Vec<&str> = match kind {
                RunnerKind::DoctestRunner => vec!["-m", "doctest", "-v", &entry],
                _ => vec!["-m", "unittest", "-v", &entry],
            };
            let run = run_child(python_command(&args), dir, spec.timeout)?;
            if run.timed_out {
                return Ok(TestOutcome::timed_out(kind, run.output, spec.timeout));
            }
            match parse_runner_output(&run.output, kind) {
                Ok(counts) => Ok(TestOutcome::from_counts(kind, counts, run.output)),
                // Compiles but raises on import: nothing ran.
                Err(_) if run.output.contains("Traceback (most recent call last)") => Ok(
                    TestOutcome::not_compiled(kind, run.output, "module raised during import"),
                ),
                Err(e) => Err(e),
            }
        }
        RunnerKind::CargoTestRunner => {
            let src = dir.join("src");
            fs::create_dir(&src).map_err(|e| Error::io(&src, e))?;
            let manifest = "[package]\nname = \"generated\"\nversion = \"0.0.0\"\nedition = \"2021\"\n\n[lib]\npath = \"src/lib.rs\"\n\n[workspace]\n";
            let files = [(dir.join("Cargo.toml"), manifest), (src.join("lib.rs"), code.as_str())];
            for (p, body) in files {
                fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
            }
            let mut cmd = Command::new("cargo");
            cmd.args(["test", "--offline", "--quiet", "--color", "never"])
                .env("CARGO_TARGET_DIR", dir.join("target"))
                .env("RUST_TEST_THREADS", "1")
                .env_remove("RUSTFLAGS");
            let run = run_child(cmd, dir, spec.timeout)?;
            if run.timed_out {
                return Ok(TestOutcome::timed_out(kind, run.output, spec.timeout));
            }
            match parse_runner_output(&run.output, kind) {
                Ok(counts) => Ok(TestOutcome::from_counts(kind, counts, run.output)),
                Err(_) if run.output.contains("error") => {
                    Ok(TestOutcome::not_compiled(kind, run.output, "cargo build failed"))
                }
                Err(e) => Err(e),
            }
        }
    }
}
