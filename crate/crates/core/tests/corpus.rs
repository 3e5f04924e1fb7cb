// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs;
use std::path::PathBuf;

use sega_core::corpus::{
    load_corpus, render_prompt, save_corpus, ConditionKind, ImplementationStub, Language, MarkerKind,
    PromptTemplate, TestCorpus,
};
use sega_core::extraction::extract_code_blocks;
use sega_core::Error;

fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/dheap").join(rel)
}

fn stub() -> ImplementationStub {
    ImplementationStub {
        module_name: "heap".into(),
        language: Language::Python,
        source: fs::read_to_string(fixture("heap_stub.py")).unwrap(),
        exported_names: vec!["DHeap".into(), "Item".into()],
    }
}

fn template(condition: ConditionKind, corpus: &str) -> PromptTemplate {
    PromptTemplate::new(fs::read_to_string(fixture("task.md")).unwrap(), condition)
        .with_corpus(load_corpus(fixture(corpus)).unwrap())
        .with_stub(stub())
}

#[test]
fn shipped_corpora_have_expected_denominators() {
    let c1 = load_corpus(fixture("c1_inline.json")).unwrap();
    assert_eq!(c1.denominator, 73);
    assert_eq!(c1.marker_kind(), MarkerKind::DoctestChevron);
    let tests = load_corpus(fixture("testheap.json")).unwrap();
    assert_eq!(tests.denominator, 26);
    assert_eq!(tests.marker_kind(), MarkerKind::UnittestMethod);
    assert!(tests.cases.iter().all(|c| c.identifier.starts_with("test_")));
}

#[test]
fn empty_corpus_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("e.txt"), "no markers here\n").unwrap();
    fs::write(
        dir.path().join("e.json"),
        r#"{"target_language":"python","denominator":0,"cases":[]}"#,
    )
    .unwrap();
    let err = load_corpus(dir.path().join("e.json")).unwrap_err();
    assert!(matches!(err, Error::Validation(ref m) if m.contains("positive")), "{err}");
}

#[test]
fn misplaced_first_offset_names_case_zero() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = load_corpus(fixture("c1_inline.json")).unwrap();
    let path = save_corpus(&corpus, dir.path(), "c1").unwrap();
    let mut json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    json["cases"][0]["byte_start"] = serde_json::json!(0);
    fs::write(&path, serde_json::to_string(&json).unwrap()).unwrap();
    let err = load_corpus(&path).unwrap_err();
    assert!(matches!(err, Error::CaseValidation { logical_index: 0, .. }), "{err}");
}

#[test]
fn malformed_manifest_is_format_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), "{ not json").unwrap();
    assert!(matches!(load_corpus(dir.path().join("bad.json")), Err(Error::Format { .. })));
}

#[test]
fn offsets_point_at_markers() {
    let c = load_corpus(fixture("c1_inline.json")).unwrap();
    for case in &c.cases {
        assert!(c.full_text[case.byte_start..case.byte_end].starts_with(">>>"));
    }
    let idx: Vec<usize> = c.cases.iter().map(|c| c.logical_index).collect();
    assert_eq!(idx, (0..73).collect::<Vec<_>>());
}

#[test]
fn reindexing_round_trips() {
    let c = load_corpus(fixture("testheap.json")).unwrap();
    let again = TestCorpus::from_text(Language::Python, MarkerKind::UnittestMethod, c.full_text.clone()).unwrap();
    assert_eq!(again.cases, c.cases);
}

#[test]
fn shipped_prompts_match_renderer() {
    for (cond, corpus, file) in [
        (ConditionKind::C1Inline, "c1_inline.json", "prompt_C1_inline.md"),
        (ConditionKind::C2Samefile, "testheap.json", "prompt_C2_samefile.md"),
        (ConditionKind::C3Sidecar, "testheap.json", "prompt_C3_sidecar.md"),
    ] {
        let rendered = render_prompt(&template(cond, corpus)).unwrap();
        let shipped = fs::read_to_string(fixture("prompts").join(file)).unwrap();
        assert_eq!(rendered, shipped, "{file}");
        assert_eq!(rendered, render_prompt(&template(cond, corpus)).unwrap());
    }
}

#[test]
fn samefile_prompt_puts_26_tests_after_stub() {
    let p = render_prompt(&template(ConditionKind::C2Samefile, "testheap.json")).unwrap();
    let blocks = extract_code_blocks(&p);
    assert_eq!(blocks.len(), 1);
    let body = &blocks[0].body;
    let class_at = body.find("class DHeap").unwrap();
    let tests_at = body.find("class TestHeap").unwrap();
    assert!(class_at < tests_at);
    assert_eq!(body[tests_at..].matches("def test_").count(), 26);
}

#[test]
fn sidecar_second_file_opens_with_import() {
    let p = render_prompt(&template(ConditionKind::C3Sidecar, "testheap.json")).unwrap();
    let blocks = extract_code_blocks(&p);
    assert_eq!(blocks.len(), 2);
    let first_code_line = blocks[1]
        .body
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .unwrap();
    assert_eq!(first_code_line, "from heap import DHeap, Item");
    assert_eq!(blocks[0].body.matches("def test_").count(), 0);
}

#[test]
fn inline_prompt_carries_all_doctests() {
    let p = render_prompt(&template(ConditionKind::C1Inline, "c1_inline.json")).unwrap();
    let lines = p.lines().filter(|l| l.trim_start().starts_with(">>>")).count();
    assert_eq!(lines, 73);
}

#[test]
fn baseline_is_bare_task() {
    let task = fs::read_to_string(fixture("task.md")).unwrap();
    let p = render_prompt(&PromptTemplate::new(task.clone(), ConditionKind::Baseline)).unwrap();
    assert_eq!(p, task);
}

#[test]
fn test_bearing_conditions_need_a_corpus() {
    for cond in [
        ConditionKind::TestGuided,
        ConditionKind::Combined,
        ConditionKind::C1Inline,
        ConditionKind::C2Samefile,
        ConditionKind::C3Sidecar,
    ] {
        let t = PromptTemplate::new("task", cond).with_stub(stub());
        assert!(matches!(render_prompt(&t), Err(Error::Config(_))), "{cond}");
    }
}
