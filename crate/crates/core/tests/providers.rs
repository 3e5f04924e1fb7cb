// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use sega_core::layout::RunPaths;
use sega_core::providers::{
    run_batch, BatchRequest, BatchStatus, Client, Clock, EndpointKind, Pacer, ProviderConfig, RetryPolicy,
};
use sega_core::Error;

const OPENAI_OK: &str = r#"{"choices":[{"message":{"role":"assistant","content":"```python\nx = 1\n```"}}],"usage":{"prompt_tokens":7,"completion_tokens":5}}"#;
const ANTHROPIC_OK: &str = r#"{"content":[{"type":"text","text":"hello "},{"type":"text","text":"world"}],"usage":{"input_tokens":3,"output_tokens":2}}"#;

struct Seen {
    head: String,
    body: String,
}

/// Serves `script` one response per connection, then stops.
fn scripted_server(script: Vec<(u16, &'static str)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in script {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut head = String::new();
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
                    break;
                }
                head.push_str(&line);
            }
            let len = head
                .lines()
                .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
                .unwrap_or(0);
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen { head, body: String::from_utf8(buf).unwrap() });
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen)
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy { max_retries: 3, base_delay_ms: 1, max_delay_ms: 5 }
}

fn local(url: &str) -> ProviderConfig {
    let mut c = ProviderConfig::new(EndpointKind::LocalOpenaiCompatible, "local-model");
    c.base_url = url.to_owned();
    c.retry = fast_retry();
    c.request_timeout_s = 10;
    c
}

#[test]
fn throttled_three_times_then_succeeds() {
    let (url, seen) = scripted_server(vec![(429, "{}"), (429, "{}"), (429, "{}"), (200, OPENAI_OK)]);
    let slept = Arc::new(Mutex::new(Vec::new()));
    let record = Arc::clone(&slept);
    let client = Client::new(local(&url)).unwrap().with_sleeper(move |d| record.lock().unwrap().push(d));
    let r = client.generate("write a heap", 0.0, 1).unwrap();
    assert_eq!(r.attempts, 4);
    assert_eq!(r.response_text, "```python\nx = 1\n```");
    assert_eq!((r.input_tokens, r.output_tokens), (7, 5));
    assert_eq!(seen.lock().unwrap().len(), 4);
    let waits = slept.lock().unwrap().clone();
    assert_eq!(waits, vec![Duration::from_millis(1), Duration::from_millis(2), Duration::from_millis(4)]);
    let body: serde_json::Value = serde_json::from_str(&seen.lock().unwrap()[0].body).unwrap();
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["content"], "write a heap");
}

#[test]
fn persistent_throttling_exhausts_retries() {
    let (url, _) = scripted_server(vec![(503, "{}"); 4]);
    let client = Client::new(local(&url)).unwrap().with_sleeper(|_| {});
    let err = client.generate("p", 0.0, 1).unwrap_err();
    assert!(matches!(err, Error::Throttle { attempts: 4, .. }), "{err}");
}

#[test]
fn unauthorized_is_not_retried() {
    let (url, seen) = scripted_server(vec![(401, r#"{"error":"bad key"}"#)]);
    let client = Client::new(local(&url)).unwrap().with_sleeper(|_| panic!("no retry expected"));
    assert!(matches!(client.generate("p", 0.0, 1), Err(Error::Credential(_))));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn malformed_reply_is_protocol_error() {
    let (url, _) = scripted_server(vec![(200, r#"{"unexpected":true}"#)]);
    let client = Client::new(local(&url)).unwrap();
    assert!(matches!(client.generate("p", 0.0, 1), Err(Error::Protocol(_))));
    let (url, _) = scripted_server(vec![(400, "nope")]);
    let client = Client::new(local(&url)).unwrap();
    assert!(matches!(client.generate("p", 0.0, 1), Err(Error::Protocol(_))));
}

#[test]
fn anthropic_wire_format() {
    let (url, seen) = scripted_server(vec![(200, ANTHROPIC_OK)]);
    let var = "SEGA_TEST_ANTHROPIC_KEY";
    std::env::set_var(var, "k-123");
    let mut c = ProviderConfig::new(EndpointKind::AnthropicMessages, "m");
    c.base_url = format!("{url}/v1/");
    c.credential_env_var = Some(var.into());
    let r = Client::new(c).unwrap().generate("p", 0.0, 1).unwrap();
    assert_eq!(r.response_text, "hello world");
    let seen = seen.lock().unwrap();
    let head = seen[0].head.to_ascii_lowercase();
    assert!(head.starts_with("post /v1/messages "), "{head}");
    assert!(head.contains("x-api-key: k-123"));
    assert!(head.contains("anthropic-version:"));
}

#[test]
fn missing_credential_fails_before_any_request() {
    let mut c = ProviderConfig::new(EndpointKind::OpenaiCompatible, "m");
    c.base_url = "http://127.0.0.1:9".into();
    c.credential_env_var = Some("SEGA_TEST_KEY_THAT_IS_NEVER_SET".into());
    assert!(matches!(Client::new(c).unwrap().generate("p", 0.0, 1), Err(Error::Credential(_))));
}

#[test]
fn empty_prompt_rejected() {
    let client = Client::new(ProviderConfig::stub(vec!["x".into()])).unwrap();
    assert!(matches!(client.generate("  \n", 0.0, 1), Err(Error::Precondition(_))));
}

#[test]
fn stub_batch_writes_every_run() {
    let root = tempfile::tempdir().unwrap();
    let client = Client::new(ProviderConfig::stub(vec!["a".into(), "b".into()])).unwrap();
    let m = run_batch(&client, &request(root.path(), 3), &mut SimClock::default()).unwrap();
    assert!(m.is_complete());
    assert_eq!(m.records.len(), 3);
    let dir = root.path().join("batch");
    let texts: Vec<String> = (1..=3).map(|i| fs::read_to_string(RunPaths::new(&dir, i).response()).unwrap()).collect();
    assert_eq!(texts, ["a", "b", "a"]);
    assert!(dir.join("manifest.json").exists());
}

fn request(root: &std::path::Path, n: u32) -> BatchRequest<'_> {
    BatchRequest {
        prompt: "prompt",
        n_runs: n,
        delay_ms: 0,
        label: "batch",
        output_root: root,
        temperature: 0.0,
    }
}

#[test]
fn failed_batch_resumes_without_touching_finished_runs() {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("batch");
    let mut failing = ProviderConfig::stub(vec!["first".into()]);
    failing.stub_fail_runs = vec![3];
    let m = run_batch(&Client::new(failing).unwrap(), &request(root.path(), 5), &mut SimClock::default()).unwrap();
    assert_eq!(m.status, BatchStatus::Partial);
    assert_eq!(m.last_successful_run, Some(2));
    assert!(m.error.as_deref().unwrap().contains("run 3"));
    assert!(!RunPaths::new(&dir, 3).response().exists());
    let before: Vec<_> = (1..=2).map(|i| fs::metadata(RunPaths::new(&dir, i).response()).unwrap().modified().unwrap()).collect();

    let healed = ProviderConfig::stub(vec!["second".into()]);
    let m = run_batch(&Client::new(healed).unwrap(), &request(root.path(), 5), &mut SimClock::default()).unwrap();
    assert!(m.is_complete());
    assert_eq!(m.records.len(), 5);
    for (i, t) in before.iter().enumerate() {
        let p = RunPaths::new(&dir, i as u32 + 1).response();
        assert_eq!(fs::metadata(&p).unwrap().modified().unwrap(), *t);
        assert_eq!(fs::read_to_string(&p).unwrap(), "first");
    }
    assert_eq!(fs::read_to_string(RunPaths::new(&dir, 3).response()).unwrap(), "second");
}

#[test]
fn resume_refuses_other_prompt() {
    let root = tempfile::tempdir().unwrap();
    let client = Client::new(ProviderConfig::stub(vec!["x".into()])).unwrap();
    run_batch(&client, &request(root.path(), 1), &mut SimClock::default()).unwrap();
    let mut other = request(root.path(), 1);
    other.prompt = "different";
    assert!(matches!(run_batch(&client, &other, &mut SimClock::default()), Err(Error::Precondition(_))));
}

#[derive(Default)]
struct SimClock {
    now: Duration,
    slept: Duration,
}

impl Clock for SimClock {
    fn now(&self) -> Duration {
        self.now
    }

    fn sleep(&mut self, d: Duration) {
        self.now += d;
        self.slept += d;
    }
}

#[test]
fn pacing_spaces_request_starts() {
    let mut clock = SimClock::default();
    let mut pacer = Pacer::new(4000);
    let mut starts = Vec::new();
    for i in 0..50u64 {
        starts.push(pacer.start(&mut clock));
        // Simulated request latency, sometimes longer than the gap.
        clock.now += Duration::from_millis((i * 733) % 5200);
    }
    for w in starts.windows(2) {
        assert!(w[1] - w[0] >= Duration::from_millis(4000), "{:?}", w);
    }
}

#[test]
fn batch_pacing_uses_injected_clock() {
    let root = tempfile::tempdir().unwrap();
    let client = Client::new(ProviderConfig::stub(vec!["x".into()])).unwrap();
    let mut req = request(root.path(), 50);
    req.delay_ms = 4000;
    let mut clock = SimClock::default();
    let started = std::time::Instant::now();
    run_batch(&client, &req, &mut clock).unwrap();
    assert_eq!(clock.slept, Duration::from_millis(49 * 4000));
    assert!(started.elapsed() < Duration::from_secs(20));
}
