// SPDX-License-Identifier: MIT OR Apache-2.0

//! Fenced code block extraction and preservation measurement.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{ConditionKind, Language, MarkerSpec, TestCorpus, TestPlacement};
use crate::error::{Error, Result};
use crate::layout::RunPaths;

/// One fenced block from a response, in response order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeBlock {
    pub fence_language_tag: Option<String>,
    pub body: String,
    pub ordinal: usize,
    /// The closing fence was missing; the block runs to end of text.
    pub unterminated: bool,
}

struct Fence {
    ch: char,
    len: usize,
    indent: usize,
}

fn parse_fence(line: &str) -> Option<(Fence, &str)> {
    let trimmed = line.trim_start_matches([' ', '\t']);
    let indent = line.len() - trimmed.len();
    let ch = trimmed.chars().next().filter(|c| *c == '`' || *c == '~')?;
    let len = trimmed.chars().take_while(|c| *c == ch).count();
    if len < 3 {
        return None;
    }
    let info = trimmed[len..].trim();
    if ch == '`' && info.contains('`') {
        return None;
    }
    Some((Fence { ch, len, indent }, info))
}

fn closes(open: &Fence, line: &str) -> bool {
    match parse_fence(line) {
        Some((f, info)) => f.ch == open.ch && f.len >= open.len && info.is_empty(),
        None => false,
    }
}

fn strip_indent(line: &str, indent: usize) -> &str {
    let ws = line.len() - line.trim_start_matches([' ', '\t']).len();
    &line[ws.min(indent)..]
}

/// Every fenced block in `response`, tagged or not.
///
/// A fence closes only on a run of the same character at least as long as
/// the opener, so a ```` ```` ```` block can carry ``` ``` ``` lines inside it.
pub fn extract_code_blocks(response: &str) -> Vec<CodeBlock> {
    let mut blocks = Vec::new();
    let mut lines = response.split_inclusive('\n');
    while let Some(line) = lines.next() {
        let Some((fence, info)) = parse_fence(line.trim_end_matches(['\n', '\r'])) else {
            continue;
        };
        let tag = info
            .split_whitespace()
            .next()
            .map(|t| t.trim_start_matches('{').trim_start_matches('.').to_owned())
            .filter(|t| !t.is_empty());
        let mut body = String::new();
        let mut terminated = false;
        for inner in lines.by_ref() {
            if closes(&fence, inner.trim_end_matches(['\n', '\r'])) {
                terminated = true;
                break;
            }
            body.push_str(strip_indent(inner, fence.indent));
        }
        blocks.push(CodeBlock {
            fence_language_tag: tag,
            body,
            ordinal: blocks.len(),
            unterminated: !terminated,
        });
    }
    blocks
}

fn tag_matches(tag: &str, language: Language) -> bool {
    let tag = tag.to_ascii_lowercase();
    match language {
        Language::Python => matches!(tag.as_str(), "python" | "py" | "python3"),
        Language::Rust => matches!(tag.as_str(), "rust" | "rs"),
        Language::Go => matches!(tag.as_str(), "go" | "golang"),
        Language::Cpp => matches!(tag.as_str(), "cpp" | "c++" | "cc" | "cxx"),
        Language::Typescript => matches!(tag.as_str(), "typescript" | "ts"),
        Language::Zig => tag == "zig",
    }
}

/// First block for `language`: a matching tag wins, else the first untagged block.
pub fn first_block_for(blocks: &[CodeBlock], language: Language) -> Option<&CodeBlock> {
    blocks
        .iter()
        .find(|b| b.fence_language_tag.as_deref().is_some_and(|t| tag_matches(t, language)))
        .or_else(|| blocks.iter().find(|b| b.fence_language_tag.is_none()))
}

/// Result of scanning text for marker lines.
#[derive(Debug, Clone, Serialize)]
pub struct MarkerScan {
    pub marker_spec: MarkerSpec,
    pub count: usize,
    /// 1-based line numbers of matching lines.
    pub line_numbers: Vec<usize>,
    /// Byte offset of each marker (after indentation).
    pub byte_offsets: Vec<usize>,
}

/// Count line-anchored marker matches in `text`.
pub fn scan_markers(text: &str, spec: &MarkerSpec) -> MarkerScan {
    let mut line_numbers = Vec::new();
    let mut byte_offsets = Vec::new();
    let mut offset = 0;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        if let Some(col) = spec.match_line(line) {
            line_numbers.push(i + 1);
            byte_offsets.push(offset + col);
        }
        offset += line.len();
    }
    MarkerScan {
        marker_spec: spec.clone(),
        count: line_numbers.len(),
        line_numbers,
        byte_offsets,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementTarget {
    ExtractedCode,
    FullResponse,
}

/// Which artifact a condition's preservation is measured against.
///
/// Sidecar-style prompts invite a multi-file answer whose tests land in a
/// later block than the one extracted, so they are scanned on the full
/// response.
pub fn measurement_target(condition: ConditionKind, language: Language) -> MeasurementTarget {
    match condition {
        ConditionKind::C3Sidecar => MeasurementTarget::FullResponse,
        ConditionKind::TestGuided | ConditionKind::Combined
            if language.test_placement() == TestPlacement::SeparateFile =>
        {
            MeasurementTarget::FullResponse
        }
        _ => MeasurementTarget::ExtractedCode,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreservationResult {
    pub run_index: u32,
    /// Marker count clamped to the denominator.
    pub preserved: usize,
    /// Marker count before clamping.
    pub raw_count: usize,
    pub denominator: usize,
    pub percentage: f64,
    pub measurement_target: MeasurementTarget,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl PreservationResult {
    pub fn from_count(
        run_index: u32,
        raw_count: usize,
        denominator: usize,
        measurement_target: MeasurementTarget,
    ) -> Self {
        let preserved = raw_count.min(denominator);
        let mut notes = Vec::new();
        if raw_count > denominator {
            notes.push(format!(
                "{raw_count} markers found, clamped to the {denominator} prompt-provided tests"
            ));
        }
        Self {
            run_index,
            preserved,
            raw_count,
            denominator,
            percentage: 100.0 * preserved as f64 / denominator as f64,
            measurement_target,
            notes,
        }
    }
}

/// Write `<NN>_code.<ext>` from the persisted response.
///
/// A response with no usable block yields an empty code file so that every
/// run has one to hash. Returns the block that was written, if any.
pub fn extract_run(batch_dir: &Path, run_index: u32, language: Language) -> Result<Option<CodeBlock>> {
    let paths = RunPaths::new(batch_dir, run_index);
    let response_path = paths.response();
    let response = fs::read_to_string(&response_path).map_err(|e| Error::io(&response_path, e))?;
    let blocks = extract_code_blocks(&response);
    let block = first_block_for(&blocks, language).cloned();
    let code_path = paths.code(language.file_extension());
    let body = block.as_ref().map_or("", |b| b.body.as_str());
    fs::write(&code_path, body).map_err(|e| Error::io(&code_path, e))?;
    Ok(block)
}

/// Preservation of one run's artifacts against `corpus`.
pub fn measure_preservation(
    batch_dir: &Path,
    run_index: u32,
    condition: ConditionKind,
    corpus: &TestCorpus,
) -> Result<PreservationResult> {
    let paths = RunPaths::new(batch_dir, run_index);
    let language = corpus.target_language;
    let target = measurement_target(condition, language);
    let path = match target {
        MeasurementTarget::FullResponse => paths.response(),
        MeasurementTarget::ExtractedCode => paths.code(language.file_extension()),
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::Io {
        path: path.clone(),
        source: std::io::Error::new(e.kind(), format!("run {run_index}: {e}")),
    })?;
    let scan = scan_markers(&text, &corpus.marker_spec());
    let mut result = PreservationResult::from_count(run_index, scan.count, corpus.denominator, target);
    if target == MeasurementTarget::ExtractedCode && text.is_empty() {
        result.notes.push("no code block extracted".into());
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{marker_spec_for, MarkerKind};

    #[test]
    fn two_blocks_in_order() {
        let r = "Impl:\n```python\nclass A: pass\n```\nTests:\n```python\ndef test_a(): pass\n```\n";
        let blocks = extract_code_blocks(r);
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].ordinal, 0);
        assert_eq!(blocks[0].body, "class A: pass\n");
        assert_eq!(blocks[1].body, "def test_a(): pass\n");
        assert!(!blocks[0].unterminated);
    }

    #[test]
    fn prose_has_no_blocks() {
        assert!(extract_code_blocks("Just words.\nNo code here.").is_empty());
        assert!(extract_code_blocks("").is_empty());
    }

    #[test]
    fn untagged_and_tilde_fences() {
        let r = "```\nplain\n```\n~~~rust\nfn x() {}\n~~~\n";
        let blocks = extract_code_blocks(r);
        assert_eq!(blocks[0].fence_language_tag, None);
        assert_eq!(blocks[1].fence_language_tag.as_deref(), Some("rust"));
        assert_eq!(blocks[1].body, "fn x() {}\n");
    }

    #[test]
    fn longer_outer_fence_nests() {
        let r = "````markdown\n```python\nx = 1\n```\n````\n";
        let blocks = extract_code_blocks(r);
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].body, "```python\nx = 1\n```\n");
    }

    #[test]
    fn first_block_prefers_language_tag() {
        let r = "```bash\npip install x\n```\n```python\nimport x\n```\n";
        let blocks = extract_code_blocks(r);
        assert_eq!(first_block_for(&blocks, Language::Python).unwrap().ordinal, 1);
        assert!(first_block_for(&blocks, Language::Rust).is_none());
    }

    #[test]
    fn indented_fence_body_is_dedented() {
        let r = "1. file:\n   ```python\n   x = 1\n       y = 2\n   ```\n";
        let blocks = extract_code_blocks(r);
        assert_eq!(blocks[0].body, "x = 1\n    y = 2\n");
    }

    #[test]
    fn scan_counts_chevrons() {
        let snippet = r#"    def insert(self, item: Item) -> None:
        """Insert an item into the heap.

        >>> pq = DHeap(4)
        >>> pq.insert(Item(50, 50))
        >>> pq.contains(Item(50, 0))
        True
        >>> len(pq)
        1
        """
        pass
"#;
        let spec = marker_spec_for(Language::Python, MarkerKind::DoctestChevron).unwrap();
        let scan = scan_markers(snippet, &spec);
        assert_eq!(scan.count, 4);
        assert_eq!(scan.line_numbers, vec![4, 5, 6, 8]);
        assert_eq!(scan_markers("", &spec).count, 0);
    }

    #[test]
    fn target_depends_on_condition_and_convention() {
        use ConditionKind::*;
        assert_eq!(measurement_target(C1Inline, Language::Python), MeasurementTarget::ExtractedCode);
        assert_eq!(measurement_target(C2Samefile, Language::Python), MeasurementTarget::ExtractedCode);
        assert_eq!(measurement_target(C3Sidecar, Language::Python), MeasurementTarget::FullResponse);
        assert_eq!(measurement_target(TestGuided, Language::Rust), MeasurementTarget::ExtractedCode);
        assert_eq!(measurement_target(TestGuided, Language::Go), MeasurementTarget::FullResponse);
        assert_eq!(measurement_target(Baseline, Language::Go), MeasurementTarget::ExtractedCode);
    }

    #[test]
    fn excess_markers_clamped_with_note() {
        let r = PreservationResult::from_count(1, 30, 26, MeasurementTarget::ExtractedCode);
        assert_eq!(r.preserved, 26);
        assert_eq!(r.raw_count, 30);
        assert_eq!(r.percentage, 100.0);
        assert_eq!(r.notes.len(), 1);
    }
}
