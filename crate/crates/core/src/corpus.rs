// SPDX-License-Identifier: MIT OR Apache-2.0

//! Test corpora, marker grammars and prompt rendering.
//!
//! A corpus is a raw text file (kept byte-exact) plus a JSON manifest that
//! lists every test case by byte range. Offsets are validated on load: each
//! case must start at a line-anchored marker for its [`MarkerKind`], so the
//! same corpus can be located inside any tokenizer's view of the text.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{LazyLock, Mutex};

use regex::Regex;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

/// Target languages covered by the condition matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Language {
    Python,
    Rust,
    Go,
    Cpp,
    Typescript,
    Zig,
}

/// Where a language's native tests live relative to the implementation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestPlacement {
    /// Tests share the implementation file (doctests, `mod tests`).
    SameFile,
    /// Tests live in their own file and import the implementation.
    SeparateFile,
}

impl Language {
    pub const ALL: [Language; 6] = [
        Language::Python,
        Language::Rust,
        Language::Go,
        Language::Cpp,
        Language::Typescript,
        Language::Zig,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Language::Python => "python",
            Language::Rust => "rust",
            Language::Go => "go",
            Language::Cpp => "cpp",
            Language::Typescript => "typescript",
            Language::Zig => "zig",
        }
    }

    /// Extension used for extracted `<NN>_code.<ext>` files.
    pub fn file_extension(self) -> &'static str {
        match self {
            Language::Python => "py",
            Language::Rust => "rs",
            Language::Go => "go",
            Language::Cpp => "cpp",
            Language::Typescript => "ts",
            Language::Zig => "zig",
        }
    }

    /// Info string written on fenced blocks in rendered prompts.
    pub fn fence_tag(self) -> &'static str {
        match self {
            Language::Python => "python",
            Language::Rust => "rust",
            Language::Go => "go",
            Language::Cpp => "cpp",
            Language::Typescript => "typescript",
            Language::Zig => "zig",
        }
    }

    /// Native test placement under the test-guided condition.
    ///
    /// Zig is listed as separate-file because its standard test prompt opens
    /// with `@import("d_heap")`; the inline Zig variant is a different prompt.
    pub fn test_placement(self) -> TestPlacement {
        match self {
            Language::Python | Language::Rust => TestPlacement::SameFile,
            Language::Go | Language::Cpp | Language::Typescript | Language::Zig => {
                TestPlacement::SeparateFile
            }
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "python" | "py" => Ok(Language::Python),
            "rust" | "rs" => Ok(Language::Rust),
            "go" => Ok(Language::Go),
            "cpp" | "c++" => Ok(Language::Cpp),
            "typescript" | "ts" => Ok(Language::Typescript),
            "zig" => Ok(Language::Zig),
            other => Err(Error::Config(format!("unknown language `{other}`"))),
        }
    }
}

/// Syntactic token that identifies one test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkerKind {
    DoctestChevron,
    RustTestAttr,
    UnittestMethod,
    ZigTestBlock,
    GtestMacro,
    VitestCall,
    GoTestFunc,
}

impl MarkerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MarkerKind::DoctestChevron => "doctest_chevron",
            MarkerKind::RustTestAttr => "rust_test_attr",
            MarkerKind::UnittestMethod => "unittest_method",
            MarkerKind::ZigTestBlock => "zig_test_block",
            MarkerKind::GtestMacro => "gtest_macro",
            MarkerKind::VitestCall => "vitest_call",
            MarkerKind::GoTestFunc => "go_test_func",
        }
    }

    /// The language whose test convention this marker belongs to.
    pub fn language(self) -> Language {
        match self {
            MarkerKind::DoctestChevron | MarkerKind::UnittestMethod => Language::Python,
            MarkerKind::RustTestAttr => Language::Rust,
            MarkerKind::ZigTestBlock => Language::Zig,
            MarkerKind::GtestMacro => Language::Cpp,
            MarkerKind::VitestCall => Language::Typescript,
            MarkerKind::GoTestFunc => Language::Go,
        }
    }

    /// Human-readable marker literal.
    pub fn literal(self) -> &'static str {
        match self {
            MarkerKind::DoctestChevron => ">>>",
            MarkerKind::RustTestAttr => "#[test]",
            MarkerKind::UnittestMethod => "def test_",
            MarkerKind::ZigTestBlock => "test \"",
            MarkerKind::GtestMacro => "TEST(",
            MarkerKind::VitestCall => "it(",
            MarkerKind::GoTestFunc => "func Test",
        }
    }

    /// Regex for the marker itself, without the line anchor.
    fn marker_pattern(self) -> &'static str {
        match self {
            MarkerKind::DoctestChevron => r">>>",
            MarkerKind::RustTestAttr => r"#\[test\]",
            MarkerKind::UnittestMethod => r"def test_",
            MarkerKind::ZigTestBlock => r#"test[ \t]+""#,
            MarkerKind::GtestMacro => r"TEST(?:_F|_P)?[ \t]*\(",
            MarkerKind::VitestCall => r"(?:it|test)(?:\.(?:only|skip|concurrent))?[ \t]*\(",
            MarkerKind::GoTestFunc => r"func[ \t]+Test\w*[ \t]*\(",
        }
    }
}

impl fmt::Display for MarkerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MarkerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "doctest_chevron" => Ok(MarkerKind::DoctestChevron),
            "rust_test_attr" => Ok(MarkerKind::RustTestAttr),
            "unittest_method" => Ok(MarkerKind::UnittestMethod),
            "zig_test_block" => Ok(MarkerKind::ZigTestBlock),
            "gtest_macro" => Ok(MarkerKind::GtestMacro),
            "vitest_call" => Ok(MarkerKind::VitestCall),
            "go_test_func" => Ok(MarkerKind::GoTestFunc),
            other => Err(Error::Config(format!("unknown marker kind `{other}`"))),
        }
    }
}

/// Where a preservation denominator comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenominatorPolicy {
    /// The corpus manifest's `denominator` (one per prompt-provided case).
    CorpusDenominator,
}

/// Line-anchored marker grammar for one (language, marker kind) pair.
#[derive(Debug, Clone, Serialize)]
pub struct MarkerSpec {
    pub language: Language,
    pub kind: MarkerKind,
    #[serde(serialize_with = "serialize_regex")]
    pub pattern: Regex,
    pub denominator: DenominatorPolicy,
    #[serde(skip)]
    marker_only: Regex,
}

fn serialize_regex<S: Serializer>(re: &Regex, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(re.as_str())
}

impl MarkerSpec {
    /// Byte offset of the marker within `line`, if the line is a marker line.
    ///
    /// Only horizontal whitespace may precede the marker.
    pub fn match_line(&self, line: &str) -> Option<usize> {
        self.pattern
            .captures(line)
            .and_then(|c| c.get(1))
            .map(|m| m.start())
    }

    /// True when the marker regex matches at the very start of `text`.
    pub fn matches_at(&self, text: &str) -> bool {
        self.marker_only.is_match(text)
    }
}

/// Grammar for `(language, kind)`.
///
/// Only the native pairing of each marker is supported; anything else is a
/// capability error.
pub fn marker_spec_for(language: Language, kind: MarkerKind) -> Result<MarkerSpec> {
    if kind.language() != language {
        return Err(Error::Capability(format!(
            "marker `{kind}` is not a {language} test convention"
        )));
    }
    static COMPILED: LazyLock<Mutex<HashMap<MarkerKind, (Regex, Regex)>>> = LazyLock::new(Default::default);
    let (pattern, marker_only) = COMPILED
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .entry(kind)
        .or_insert_with(|| {
            let marker = kind.marker_pattern();
            // `[^\S\n]` is whitespace other than a newline, so a match never crosses lines.
            (
                Regex::new(&format!(r"^[^\S\n]*({marker})")).expect("static marker pattern"),
                Regex::new(&format!(r"^(?:{marker})")).expect("static marker pattern"),
            )
        })
        .clone();
    Ok(MarkerSpec {
        language,
        kind,
        pattern,
        denominator: DenominatorPolicy::CorpusDenominator,
        marker_only,
    })
}

/// One prompt-provided test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub identifier: String,
    pub marker_kind: MarkerKind,
    pub byte_start: usize,
    pub byte_end: usize,
    pub logical_index: usize,
}

/// A validated test corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TestCorpus {
    pub target_language: Language,
    pub cases: Vec<TestCase>,
    pub denominator: usize,
    #[serde(skip)]
    pub full_text: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestCase {
    identifier: String,
    marker_kind: MarkerKind,
    byte_start: usize,
    byte_end: usize,
}

/// On-disk corpus manifest.
#[derive(Debug, Serialize, Deserialize)]
pub struct CorpusManifest {
    target_language: Language,
    denominator: usize,
    cases: Vec<ManifestCase>,
    /// Corpus text path relative to the manifest; defaults to the manifest
    /// path with a `.txt` extension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text_file: Option<PathBuf>,
}

impl TestCorpus {
    /// The single marker kind shared by every case.
    pub fn marker_kind(&self) -> MarkerKind {
        self.cases[0].marker_kind
    }

    pub fn marker_spec(&self) -> MarkerSpec {
        marker_spec_for(self.target_language, self.marker_kind())
            .expect("validated corpus has a supported marker pairing")
    }

    /// Index `text` by scanning it for `kind` markers.
    pub fn from_text(language: Language, kind: MarkerKind, text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        let spec = marker_spec_for(language, kind)?;
        let mut cases = Vec::new();
        let mut offset = 0;
        let lines: Vec<&str> = text.split_inclusive('\n').collect();
        for (i, line) in lines.iter().enumerate() {
            if let Some(col) = spec.match_line(line) {
                let body = line.trim_end_matches(['\n', '\r']);
                let identifier = case_identifier(kind, &body[col..], &lines[i + 1..]);
                cases.push(TestCase {
                    identifier,
                    marker_kind: kind,
                    byte_start: offset + col,
                    byte_end: offset + body.len(),
                    logical_index: cases.len(),
                });
            }
            offset += line.len();
        }
        let corpus = TestCorpus {
            target_language: language,
            denominator: cases.len(),
            cases,
            full_text: text,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    /// Manifest describing this corpus, for writing next to its text file.
    pub fn manifest(&self) -> CorpusManifest {
        CorpusManifest {
            target_language: self.target_language,
            denominator: self.denominator,
            cases: self
                .cases
                .iter()
                .map(|c| ManifestCase {
                    identifier: c.identifier.clone(),
                    marker_kind: c.marker_kind,
                    byte_start: c.byte_start,
                    byte_end: c.byte_end,
                })
                .collect(),
            text_file: None,
        }
    }

    /// Check every invariant of the corpus.
    pub fn validate(&self) -> Result<()> {
        if self.denominator == 0 {
            return Err(Error::Validation("denominator must be positive".into()));
        }
        if self.denominator != self.cases.len() {
            return Err(Error::Validation(format!(
                "denominator {} does not match {} cases",
                self.denominator,
                self.cases.len()
            )));
        }
        let kind = self.cases[0].marker_kind;
        let spec = marker_spec_for(self.target_language, kind).map_err(|_| {
            Error::CaseValidation {
                logical_index: 0,
                message: format!(
                    "marker `{kind}` is not compatible with {}",
                    self.target_language
                ),
            }
        })?;
        let text = self.full_text.as_str();
        let mut previous_start = None;
        for (i, case) in self.cases.iter().enumerate() {
            let fail = |message: String| Error::CaseValidation {
                logical_index: i,
                message,
            };
            if case.logical_index != i {
                return Err(fail(format!(
                    "logical_index {} out of sequence",
                    case.logical_index
                )));
            }
            if case.marker_kind != kind {
                return Err(fail(format!(
                    "mixed marker kinds `{}` and `{kind}`",
                    case.marker_kind
                )));
            }
            if case.byte_start >= case.byte_end || case.byte_end > text.len() {
                return Err(fail(format!(
                    "byte range {}..{} invalid for text of {} bytes",
                    case.byte_start,
                    case.byte_end,
                    text.len()
                )));
            }
            if !text.is_char_boundary(case.byte_start) || !text.is_char_boundary(case.byte_end) {
                return Err(fail("byte range splits a UTF-8 character".into()));
            }
            if previous_start.is_some_and(|p| case.byte_start <= p) {
                return Err(fail("cases are not in text order".into()));
            }
            previous_start = Some(case.byte_start);
            if !spec.matches_at(&text[case.byte_start..case.byte_end]) {
                return Err(fail(format!(
                    "no `{}` marker at byte {}",
                    kind.literal(),
                    case.byte_start
                )));
            }
            let line_start = text[..case.byte_start].rfind('\n').map_or(0, |p| p + 1);
            let indent = &text[line_start..case.byte_start];
            if !indent.chars().all(|c| c.is_whitespace() && c != '\n') {
                return Err(fail(format!(
                    "marker at byte {} is not at the start of its line",
                    case.byte_start
                )));
            }
        }
        Ok(())
    }
}

fn case_identifier(kind: MarkerKind, marker_line: &str, following: &[&str]) -> String {
    let quoted = |s: &str| s.split('"').nth(1).map(str::to_owned);
    let word_after = |s: &str, prefix: &str| {
        s.find(prefix).map(|p| {
            s[p + prefix.len()..]
                .chars()
                .take_while(|c| c.is_alphanumeric() || *c == '_')
                .collect::<String>()
        })
    };
    let id = match kind {
        MarkerKind::DoctestChevron => Some(marker_line.trim_start_matches(">>>").trim().to_owned()),
        MarkerKind::UnittestMethod => word_after(marker_line, "def ").map(|w| w.to_owned()),
        MarkerKind::GoTestFunc => word_after(marker_line, "func ").map(|w| w.trim().to_owned()),
        MarkerKind::ZigTestBlock => quoted(marker_line),
        MarkerKind::VitestCall => marker_line
            .split(['\'', '"', '`'])
            .nth(1)
            .map(str::to_owned),
        MarkerKind::GtestMacro => marker_line
            .split_once('(')
            .and_then(|(_, rest)| rest.split_once(')'))
            .map(|(args, _)| args.replace(' ', "").replace(',', ".")),
        MarkerKind::RustTestAttr => std::iter::once(marker_line)
            .chain(following.iter().copied().take(4))
            .find_map(|l| word_after(l, "fn ").filter(|w| !w.is_empty())),
    };
    id.filter(|s| !s.is_empty())
        .unwrap_or_else(|| marker_line.trim().to_owned())
}

/// Load a corpus from its JSON manifest and sibling text file.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<TestCorpus> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: CorpusManifest = serde_json::from_str(&raw).map_err(|e| Error::Format {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    let text_path = match &manifest.text_file {
        Some(rel) => path.parent().unwrap_or(Path::new(".")).join(rel),
        None => path.with_extension("txt"),
    };
    let full_text = fs::read_to_string(&text_path).map_err(|e| Error::io(&text_path, e))?;
    let corpus = TestCorpus {
        target_language: manifest.target_language,
        denominator: manifest.denominator,
        cases: manifest
            .cases
            .into_iter()
            .enumerate()
            .map(|(i, c)| TestCase {
                identifier: c.identifier,
                marker_kind: c.marker_kind,
                byte_start: c.byte_start,
                byte_end: c.byte_end,
                logical_index: i,
            })
            .collect(),
        full_text,
    };
    corpus.validate()?;
    Ok(corpus)
}

/// Write `corpus` as `<stem>.txt` + `<stem>.json` in `dir`.
pub fn save_corpus(corpus: &TestCorpus, dir: impl AsRef<Path>, stem: &str) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let text_path = dir.join(format!("{stem}.txt"));
    let manifest_path = dir.join(format!("{stem}.json"));
    fs::write(&text_path, &corpus.full_text).map_err(|e| Error::io(&text_path, e))?;
    let json = serde_json::to_string_pretty(&corpus.manifest())? + "\n";
    fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

/// Prompt condition, covering both the assistance matrix and the
/// three-point structural spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    Baseline,
    DocGuided,
    StructGuided,
    TestGuided,
    Combined,
    #[serde(rename = "c1_inline")]
    C1Inline,
    #[serde(rename = "c2_samefile")]
    C2Samefile,
    #[serde(rename = "c3_sidecar")]
    C3Sidecar,
}

impl ConditionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConditionKind::Baseline => "baseline",
            ConditionKind::DocGuided => "doc_guided",
            ConditionKind::StructGuided => "struct_guided",
            ConditionKind::TestGuided => "test_guided",
            ConditionKind::Combined => "combined",
            ConditionKind::C1Inline => "c1_inline",
            ConditionKind::C2Samefile => "c2_samefile",
            ConditionKind::C3Sidecar => "c3_sidecar",
        }
    }

    /// Conditions whose prompt carries the test corpus.
    pub fn requires_tests(self) -> bool {
        matches!(
            self,
            ConditionKind::TestGuided
                | ConditionKind::Combined
                | ConditionKind::C1Inline
                | ConditionKind::C2Samefile
                | ConditionKind::C3Sidecar
        )
    }
}

impl fmt::Display for ConditionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConditionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let normalized = s.to_ascii_lowercase().replace('-', "_");
        match normalized.as_str() {
            "baseline" => Ok(ConditionKind::Baseline),
            "doc_guided" => Ok(ConditionKind::DocGuided),
            "struct_guided" => Ok(ConditionKind::StructGuided),
            "test_guided" => Ok(ConditionKind::TestGuided),
            "combined" => Ok(ConditionKind::Combined),
            "c1" | "c1_inline" => Ok(ConditionKind::C1Inline),
            "c2" | "c2_samefile" => Ok(ConditionKind::C2Samefile),
            "c3" | "c3_sidecar" => Ok(ConditionKind::C3Sidecar),
            other => Err(Error::Config(format!("unknown condition `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub kind: ConditionKind,
    #[serde(default)]
    pub notes: String,
}

impl Condition {
    pub fn new(kind: ConditionKind) -> Self {
        Self {
            kind,
            notes: String::new(),
        }
    }
}

/// The implementation skeleton shown alongside tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImplementationStub {
    /// Module the sidecar imports from, e.g. `heap`.
    pub module_name: String,
    pub language: Language,
    pub source: String,
    /// Names listed on the sidecar import line.
    pub exported_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub task_description: String,
    pub condition: Condition,
    pub corpus_slot: Option<TestCorpus>,
    pub stub: Option<ImplementationStub>,
    pub api_docs: Option<String>,
}

impl PromptTemplate {
    pub fn new(task_description: impl Into<String>, condition: ConditionKind) -> Self {
        Self {
            task_description: task_description.into(),
            condition: Condition::new(condition),
            corpus_slot: None,
            stub: None,
            api_docs: None,
        }
    }

    pub fn with_corpus(mut self, corpus: TestCorpus) -> Self {
        self.corpus_slot = Some(corpus);
        self
    }

    pub fn with_stub(mut self, stub: ImplementationStub) -> Self {
        self.stub = Some(stub);
        self
    }

    pub fn with_api_docs(mut self, docs: impl Into<String>) -> Self {
        self.api_docs = Some(docs.into());
        self
    }
}

fn fenced(out: &mut String, tag: &str, header: Option<&str>, body: &str) {
    out.push_str("```");
    out.push_str(tag);
    out.push('\n');
    if let Some(h) = header {
        out.push_str(h);
        out.push('\n');
    }
    out.push_str(body);
    if !body.ends_with('\n') {
        out.push('\n');
    }
    out.push_str("```\n");
}

fn file_comment(language: Language, name: &str) -> String {
    match language {
        Language::Python => format!("# {name}"),
        _ => format!("// {name}"),
    }
}

/// Render a prompt. Pure: identical templates give identical bytes.
pub fn render_prompt(template: &PromptTemplate) -> Result<String> {
    let kind = template.condition.kind;
    let need_corpus = || {
        template.corpus_slot.as_ref().ok_or_else(|| {
            Error::Config(format!("condition `{kind}` needs a test corpus"))
        })
    };
    let need_stub = || {
        template.stub.as_ref().ok_or_else(|| {
            Error::Config(format!("condition `{kind}` needs an implementation stub"))
        })
    };
    let need_marker = |corpus: &TestCorpus, marker: MarkerKind| {
        if corpus.marker_kind() == marker {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "condition `{kind}` needs a `{marker}` corpus, got `{}`",
                corpus.marker_kind()
            )))
        }
    };

    let task = template.task_description.trim_end();
    if kind == ConditionKind::Baseline {
        return Ok(template.task_description.clone());
    }

    let mut out = String::with_capacity(task.len() + 4096);
    out.push_str(task);
    out.push_str("\n\n");

    match kind {
        ConditionKind::Baseline => unreachable!(),
        ConditionKind::DocGuided => {
            let docs = template
                .api_docs
                .as_deref()
                .ok_or_else(|| Error::Config("condition `doc_guided` needs API docs".into()))?;
            out.push_str("## API documentation\n\n");
            out.push_str(docs.trim_end());
            out.push('\n');
        }
        ConditionKind::StructGuided => {
            let stub = need_stub()?;
            out.push_str("## Type signatures and stubs\n\n");
            fenced(&mut out, stub.language.fence_tag(), None, &stub.source);
        }
        ConditionKind::TestGuided => {
            let corpus = need_corpus()?;
            out.push_str("## Tests\n\n");
            fenced(&mut out, corpus.target_language.fence_tag(), None, &corpus.full_text);
        }
        ConditionKind::Combined => {
            let corpus = need_corpus()?;
            if let Some(docs) = template.api_docs.as_deref() {
                out.push_str("## API documentation\n\n");
                out.push_str(docs.trim_end());
                out.push_str("\n\n");
            }
            if let Some(stub) = template.stub.as_ref() {
                out.push_str("## Type signatures and stubs\n\n");
                fenced(&mut out, stub.language.fence_tag(), None, &stub.source);
                out.push('\n');
            }
            out.push_str("## Tests\n\n");
            fenced(&mut out, corpus.target_language.fence_tag(), None, &corpus.full_text);
        }
        ConditionKind::C1Inline => {
            let corpus = need_corpus()?;
            need_marker(corpus, MarkerKind::DoctestChevron)?;
            let module = template
                .stub
                .as_ref()
                .map_or("heap", |s| s.module_name.as_str());
            let header = file_comment(Language::Python, &format!("{module}.py"));
            fenced(&mut out, "python", Some(&header), &corpus.full_text);
        }
        ConditionKind::C2Samefile => {
            let corpus = need_corpus()?;
            need_marker(corpus, MarkerKind::UnittestMethod)?;
            let stub = need_stub()?;
            let header = file_comment(Language::Python, &format!("{}.py", stub.module_name));
            let body = format!(
                "import unittest\n\n\n{}\n\n{}\n\nif __name__ == \"__main__\":\n    unittest.main()\n",
                stub.source.trim_end(),
                corpus.full_text.trim_end()
            );
            fenced(&mut out, "python", Some(&header), &body);
        }
        ConditionKind::C3Sidecar => {
            let corpus = need_corpus()?;
            need_marker(corpus, MarkerKind::UnittestMethod)?;
            let stub = need_stub()?;
            let module = &stub.module_name;
            let impl_header = file_comment(Language::Python, &format!("{module}.py"));
            fenced(&mut out, "python", Some(&impl_header), &stub.source);
            out.push('\n');
            let test_header = file_comment(Language::Python, &format!("test_{module}.py"));
            let body = format!(
                "{}\nimport unittest\n\n\n{}",
                sidecar_import_line(stub),
                corpus.full_text
            );
            fenced(&mut out, "python", Some(&test_header), &body);
        }
    }
    Ok(out)
}

/// `from <module> import <names>` line opening a sidecar test file.
pub fn sidecar_import_line(stub: &ImplementationStub) -> String {
    format!(
        "from {} import {}",
        stub.module_name,
        stub.exported_names.join(", ")
    )
}
