//! Live-endpoint backend tests against a loopback mock server: a plain
//! `TcpListener` that speaks just enough HTTP/1.1 to exercise request
//! shaping, batch top-up, rate-limit metadata, and response parsing.
#![cfg(feature = "live")]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use ttc_core::{
    Backend, BackendError, LiveBackend, LiveConfig, LiveError, QueryId, ScoredResponse,
};

/// Accepts one connection per canned response, records each request body,
/// and replies verbatim.
fn serve(responses: Vec<String>) -> (String, mpsc::Receiver<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for response in responses {
            let (mut stream, _) = listener.accept().unwrap();
            let body = read_request_body(&mut stream);
            let _ = tx.send(body);
            stream.write_all(response.as_bytes()).unwrap();
            let _ = stream.flush();
        }
    });
    (base, rx)
}

fn read_request_body(stream: &mut TcpStream) -> String {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut content_length = 0usize;
    let mut line = String::new();
    loop {
        line.clear();
        reader.read_line(&mut line).unwrap();
        if line == "\r\n" || line == "\n" || line.is_empty() {
            break;
        }
        if let Some(value) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            content_length = value.trim().parse().unwrap();
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body).unwrap();
    String::from_utf8(body).unwrap()
}

fn http_response(status: &str, extra_headers: &[(&str, &str)], body: &str) -> String {
    let mut headers = String::new();
    for (name, value) in extra_headers {
        headers.push_str(&format!("{name}: {value}\r\n"));
    }
    format!(
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n{headers}\r\n{body}",
        body.len()
    )
}

fn chat_body(contents: &[&str]) -> String {
    let choices: Vec<String> = contents
        .iter()
        .enumerate()
        .map(|(i, content)| {
            format!(
                r#"{{"index": {i}, "message": {{"role": "assistant", "content": {}}}, "finish_reason": "stop"}}"#,
                serde_json::to_string(content).unwrap()
            )
        })
        .collect();
    format!(
        r#"{{"id": "chatcmpl-test", "object": "chat.completion", "model": "test-model", "choices": [{}]}}"#,
        choices.join(",")
    )
}

fn test_config(base: &str) -> LiveConfig {
    let mut config = LiveConfig::new(base, "test-key", "test-model");
    config.timeout = Duration::from_secs(5);
    config
}

/// Scorer that keys each completion by its text and rewards mentions of 42.
fn keyed_scorer() -> ttc_core::ScoreFn {
    Box::new(|_q: &QueryId, text: &str| ScoredResponse {
        answer_key: text.to_string(),
        reward: if text.contains("42") { 1.0 } else { 0.0 },
        correct: Some(text.contains("42")),
    })
}

#[test]
fn batch_request_carries_prompt_and_sampling_parameters() {
    let (base, requests) = serve(vec![http_response(
        "200 OK",
        &[],
        &chat_body(&["first answer", "second answer"]),
    )]);
    let query = QueryId::new("q0", 0);
    let mut backend = LiveBackend::new(
        test_config(&base),
        vec![(query.clone(), "What is 6 times 7?".to_string())],
        keyed_scorer(),
    )
    .unwrap();

    let batch = backend.generate_batch(&query, 2).unwrap();
    assert_eq!(batch.results.len(), 2);
    assert!(!batch.exhausted);
    assert_eq!(batch.results[0].answer_key, "first answer");
    assert_eq!(batch.results[0].gen_index, 0);
    assert_eq!(batch.results[1].answer_key, "second answer");
    assert_eq!(batch.results[1].gen_index, 1);

    let body: serde_json::Value =
        serde_json::from_str(&requests.recv_timeout(Duration::from_secs(5)).unwrap()).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["n"], 2);
    assert_eq!(body["temperature"], 0.6);
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"], "What is 6 times 7?");
}

#[test]
fn short_batches_are_topped_up_with_follow_up_requests() {
    let (base, requests) = serve(vec![
        http_response("200 OK", &[], &chat_body(&["only one"])),
        http_response("200 OK", &[], &chat_body(&["the second"])),
    ]);
    let query = QueryId::new("q0", 0);
    let mut backend = LiveBackend::new(
        test_config(&base),
        vec![(query.clone(), "prompt".to_string())],
        keyed_scorer(),
    )
    .unwrap();

    let batch = backend.generate_batch(&query, 2).unwrap();
    assert_eq!(batch.results.len(), 2);
    assert_eq!(batch.results[1].answer_key, "the second");
    assert_eq!(batch.results[1].gen_index, 1);

    let first: serde_json::Value =
        serde_json::from_str(&requests.recv_timeout(Duration::from_secs(5)).unwrap()).unwrap();
    let second: serde_json::Value =
        serde_json::from_str(&requests.recv_timeout(Duration::from_secs(5)).unwrap()).unwrap();
    assert_eq!(first["n"], 2, "first request asks for the full batch");
    assert_eq!(second["n"], 1, "top-up asks only for the shortfall");
}

#[test]
fn rate_limits_surface_retry_metadata_and_preserve_the_stream() {
    let (base, _requests) = serve(vec![
        http_response(
            "429 Too Many Requests",
            &[("Retry-After", "7")],
            r#"{"error": {"message": "slow down"}}"#,
        ),
        http_response("200 OK", &[], &chat_body(&["The answer is 42."])),
    ]);
    let query = QueryId::new("q0", 0);
    let mut backend = LiveBackend::new(
        test_config(&base),
        vec![(query.clone(), "prompt".to_string())],
        keyed_scorer(),
    )
    .unwrap();

    let err = backend.generate_batch(&query, 1).unwrap_err();
    match err {
        BackendError::Live(live) => {
            assert!(live.retriable());
            assert_eq!(live.retry_after(), Some(Duration::from_secs(7)));
            match live {
                LiveError::Http { status, detail, .. } => {
                    assert_eq!(status, 429);
                    assert!(detail.contains("slow down"));
                }
                other => panic!("expected Http error, got {other}"),
            }
        }
        other => panic!("expected live error, got {other}"),
    }

    // The failed request consumed nothing: the retry starts at gen_index 0.
    let batch = backend.generate_batch(&query, 1).unwrap();
    assert_eq!(batch.results[0].gen_index, 0);
    assert_eq!(batch.results[0].correct, Some(true));
}

#[test]
fn fixture_response_round_trips() {
    let fixture = include_str!("fixtures/chat_completion.json");
    let (base, _requests) = serve(vec![http_response("200 OK", &[], fixture)]);
    let query = QueryId::new("q0", 0);
    let mut backend = LiveBackend::new(
        test_config(&base),
        vec![(query.clone(), "prompt".to_string())],
        keyed_scorer(),
    )
    .unwrap();

    let batch = backend.generate_batch(&query, 2).unwrap();
    let texts: Vec<&str> = batch.results.iter().map(|r| r.answer_key.as_str()).collect();
    assert_eq!(texts, vec!["The answer is 42.", "After simplifying both sides, x = 42."]);
    assert!(batch.results.iter().all(|r| r.reward == 1.0));
}

#[test]
fn malformed_and_empty_responses_are_errors() {
    let (base, _requests) = serve(vec![
        http_response("200 OK", &[], r#"{"unexpected": true}"#),
        http_response("200 OK", &[], r#"{"choices": []}"#),
    ]);
    let query = QueryId::new("q0", 0);
    let mut backend = LiveBackend::new(
        test_config(&base),
        vec![(query.clone(), "prompt".to_string())],
        keyed_scorer(),
    )
    .unwrap();

    for _ in 0..2 {
        let err = backend.generate_batch(&query, 1).unwrap_err();
        match err {
            BackendError::Live(live) => {
                assert!(matches!(live, LiveError::MalformedResponse { .. }));
                assert!(!live.retriable());
            }
            other => panic!("expected live error, got {other}"),
        }
    }
}

#[test]
fn out_of_range_scores_are_rejected() {
    let (base, _requests) =
        serve(vec![http_response("200 OK", &[], &chat_body(&["anything"]))]);
    let query = QueryId::new("q0", 0);
    let scorer: ttc_core::ScoreFn = Box::new(|_q, text| ScoredResponse {
        answer_key: text.to_string(),
        reward: 1.5,
        correct: None,
    });
    let mut backend = LiveBackend::new(
        test_config(&base),
        vec![(query.clone(), "prompt".to_string())],
        scorer,
    )
    .unwrap();

    let err = backend.generate_batch(&query, 1).unwrap_err();
    assert!(matches!(err, BackendError::ScoreOutOfRange { .. }));
}

#[test]
fn unknown_queries_are_rejected_without_a_request() {
    // No server at all: the lookup fails before any transport is attempted.
    let query = QueryId::new("q0", 0);
    let mut backend = LiveBackend::new(
        test_config("http://127.0.0.1:9"),
        vec![(query, "prompt".to_string())],
        keyed_scorer(),
    )
    .unwrap();
    let other = QueryId::new("other", 0);
    let err = backend.generate_batch(&other, 1).unwrap_err();
    assert!(matches!(err, BackendError::UnknownQuery { .. }));
}

#[test]
fn missing_environment_variables_are_reported_by_name() {
    use ttc_core::backend::live::{ENV_API_BASE, ENV_API_KEY, ENV_MODEL};
    for name in [ENV_API_BASE, ENV_API_KEY, ENV_MODEL] {
        std::env::remove_var(name);
    }
    let err = LiveConfig::from_env().unwrap_err();
    match err {
        LiveError::MissingEnv { name } => assert_eq!(name, "TTC_API_BASE"),
        other => panic!("expected MissingEnv, got {other}"),
    }
}
