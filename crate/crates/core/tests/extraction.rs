// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};

use proptest::prelude::*;
use sega_core::corpus::{load_corpus, marker_spec_for, ConditionKind, Language, MarkerKind, TestCorpus};
use sega_core::extraction::{
    extract_code_blocks, extract_run, measure_preservation, measurement_target, scan_markers, MeasurementTarget,
};
use sega_core::layout::RunPaths;

fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/dheap").join(rel)
}

fn corpus_for(cond: ConditionKind) -> TestCorpus {
    match cond {
        ConditionKind::C1Inline => load_corpus(fixture("c1_inline.json")).unwrap(),
        _ => load_corpus(fixture("testheap.json")).unwrap(),
    }
}

fn measure_fixture(dir: &Path, response: &str, cond: ConditionKind) -> (usize, usize) {
    fs::copy(fixture("responses").join(response), RunPaths::new(dir, 1).response()).unwrap();
    extract_run(dir, 1, Language::Python).unwrap();
    let r = measure_preservation(dir, 1, cond, &corpus_for(cond)).unwrap();
    (r.preserved, r.denominator)
}

#[test]
fn preservation_table_for_shipped_responses() {
    let expected = [
        ("rnj1_c1.md", ConditionKind::C1Inline, (34, 73)),
        ("rnj1_c2.md", ConditionKind::C2Samefile, (0, 26)),
        ("rnj1_c3.md", ConditionKind::C3Sidecar, (0, 26)),
        ("frontier_c1.md", ConditionKind::C1Inline, (73, 73)),
        ("frontier_c2.md", ConditionKind::C2Samefile, (26, 26)),
        ("frontier_c3.md", ConditionKind::C3Sidecar, (26, 26)),
    ];
    for (file, cond, want) in expected {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(measure_fixture(dir.path(), file, cond), want, "{file}");
    }
}

#[test]
fn sidecar_tests_live_outside_first_block() {
    let dir = tempfile::tempdir().unwrap();
    measure_fixture(dir.path(), "frontier_c3.md", ConditionKind::C3Sidecar);
    let code = fs::read_to_string(RunPaths::new(dir.path(), 1).code("py")).unwrap();
    let spec = marker_spec_for(Language::Python, MarkerKind::UnittestMethod).unwrap();
    assert_eq!(scan_markers(&code, &spec).count, 0);
}

#[test]
fn target_depends_on_condition_and_placement() {
    use MeasurementTarget::*;
    assert_eq!(measurement_target(ConditionKind::C1Inline, Language::Python), ExtractedCode);
    assert_eq!(measurement_target(ConditionKind::C2Samefile, Language::Python), ExtractedCode);
    assert_eq!(measurement_target(ConditionKind::C3Sidecar, Language::Python), FullResponse);
    assert_eq!(measurement_target(ConditionKind::TestGuided, Language::Rust), ExtractedCode);
    assert_eq!(measurement_target(ConditionKind::TestGuided, Language::Go), FullResponse);
}

#[test]
fn no_block_leaves_empty_code_and_zero() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(RunPaths::new(dir.path(), 1).response(), "I cannot write that.\n>>> DHeap(2)\n").unwrap();
    assert!(extract_run(dir.path(), 1, Language::Python).unwrap().is_none());
    let r = measure_preservation(dir.path(), 1, ConditionKind::C1Inline, &corpus_for(ConditionKind::C1Inline)).unwrap();
    assert_eq!(r.preserved, 0);
    assert_eq!(r.percentage, 0.0);
    assert!(!r.notes.is_empty());
}

#[test]
fn over_count_is_clamped_but_kept() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = String::from("```python\n");
    for _ in 0..30 {
        body.push_str("    def test_x(self):\n        pass\n");
    }
    body.push_str("```\n");
    fs::write(RunPaths::new(dir.path(), 1).response(), body).unwrap();
    extract_run(dir.path(), 1, Language::Python).unwrap();
    let r = measure_preservation(dir.path(), 1, ConditionKind::C2Samefile, &corpus_for(ConditionKind::C2Samefile)).unwrap();
    assert_eq!((r.preserved, r.raw_count, r.percentage), (26, 30, 100.0));
}

/// Independent line walk: body of an unterminated fence is everything after
/// the opener.
fn walk_unterminated(text: &str) -> String {
    let mut lines = text.split_inclusive('\n');
    for line in lines.by_ref() {
        if line.starts_with("```") {
            break;
        }
    }
    lines.collect()
}

#[test]
fn unterminated_fence_runs_to_end() {
    let text = "Here:\n```python\ndef f():\n    return 1\n>>> f()\n1\n";
    let blocks = extract_code_blocks(text);
    assert_eq!(blocks.len(), 1);
    assert!(blocks[0].unterminated);
    assert_eq!(blocks[0].body, walk_unterminated(text));
}

proptest! {
    #[test]
    fn unterminated_body_matches_line_walk(lines in proptest::collection::vec("[a-z >=()]{0,20}", 0..20)) {
        let text = format!("prose\n```python\n{}", lines.iter().map(|l| format!("{l}\n")).collect::<String>());
        let blocks = extract_code_blocks(&text);
        prop_assert_eq!(blocks.len(), 1);
        prop_assert!(blocks[0].unterminated);
        prop_assert_eq!(&blocks[0].body, &walk_unterminated(&text));
    }

    #[test]
    fn marker_count_matches_line_prefix(lines in proptest::collection::vec("( {0,4}>>> x| {0,4}>> x|x >>> y|[a-z]{0,5})", 0..40)) {
        let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
        let want = lines.iter().filter(|l| l.trim_start().starts_with(">>>")).count();
        let scan = scan_markers(&text, &marker_spec_for(Language::Python, MarkerKind::DoctestChevron).unwrap());
        prop_assert_eq!(scan.count, want);
    }
}
