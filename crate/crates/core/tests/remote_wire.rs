//! Wire-contract tests for the remote tool endpoint and the chat-completion
//! backend, against a minimal in-process HTTP stub.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::sync::Arc;
use std::time::Duration;

use claimcheck::agents::remote::{RemoteBackend, RemoteBackendConfig};
use claimcheck::agents::{AgentRole, AgentSet, Backend};
use claimcheck::clock::{Clock, ClockKind};
use claimcheck::model::{Action, Claim, SearchState, Subtask, Trajectory};
use claimcheck::toolplane::{
    Environment, ModalityHint, RemoteTool, ToolDescriptor, ToolKind, ToolRegistry,
};

/// Serve `responses.len()` requests, capturing each request body.
fn spawn_stub(responses: Vec<String>) -> (String, mpsc::Receiver<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub");
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        for body in responses {
            let (mut stream, _) = match listener.accept() {
                Ok(pair) => pair,
                Err(_) => return,
            };
            stream
                .set_read_timeout(Some(Duration::from_secs(5)))
                .unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            let request = loop {
                let n = stream.read(&mut chunk).unwrap_or(0);
                if n == 0 {
                    break String::from_utf8_lossy(&buf).to_string();
                }
                buf.extend_from_slice(&chunk[..n]);
                let text = String::from_utf8_lossy(&buf).to_string();
                if let Some(header_end) = text.find("\r\n\r\n") {
                    let content_length = text
                        .lines()
                        .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(str::trim).map(String::from))
                        .and_then(|v| v.parse::<usize>().ok())
                        .unwrap_or(0);
                    if buf.len() >= header_end + 4 + content_length {
                        break text;
                    }
                }
            };
            let payload = request
                .split("\r\n\r\n")
                .nth(1)
                .unwrap_or_default()
                .to_string();
            tx.send(payload).ok();
            let reply = format!(
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                body.len(),
                body
            );
            stream.write_all(reply.as_bytes()).ok();
        }
    });
    (format!("http://{addr}"), rx)
}

#[test]
fn remote_tool_round_trips_the_wire_contract() {
    let (url, rx) = spawn_stub(vec![
        "{\"observation\": \"remote archive confirms the event\"}".to_string(),
    ]);
    let mut registry = ToolRegistry::new();
    registry
        .register(
            ToolDescriptor {
                name: "web_search".into(),
                modality_hint: ModalityHint::Text,
                description: "remote web search".into(),
                kind: ToolKind::RemoteEndpoint,
            },
            Arc::new(RemoteTool::new("web_search", url, Duration::from_secs(5)).unwrap()),
        )
        .unwrap();
    let claim = Claim::new("c1", "img.png", "the claim text");
    let state = SearchState::initial(claim, Subtask::Text, 5);
    let mut env = Environment::new(Arc::new(registry), Clock::new(ClockKind::Logical), 2048);
    let action = Action::new("web_search").with_arg("q", "the claim text");
    let (next, observation) = env.step(&state, &action).unwrap();

    assert_eq!(observation, "remote archive confirms the event");
    assert_eq!(next.evidence[0].source, "web_search#1");

    let request: serde_json::Value = serde_json::from_str(&rx.recv().unwrap()).unwrap();
    assert_eq!(request["tool"], "web_search");
    assert_eq!(request["args"]["q"], "the claim text");
    assert_eq!(request["claim_text"], "the claim text");
    assert_eq!(request["image_ref"], "img.png");
}

#[test]
fn remote_tool_error_response_becomes_tool_error_observation() {
    // both the first call and the retry report an error
    let (url, _rx) = spawn_stub(vec![
        "{\"error\": \"rate limited\"}".to_string(),
        "{\"error\": \"rate limited\"}".to_string(),
    ]);
    let mut registry = ToolRegistry::new();
    registry
        .register(
            ToolDescriptor {
                name: "web_search".into(),
                modality_hint: ModalityHint::Text,
                description: "remote web search".into(),
                kind: ToolKind::RemoteEndpoint,
            },
            Arc::new(RemoteTool::new("web_search", url, Duration::from_secs(5)).unwrap()),
        )
        .unwrap();
    let claim = Claim::new("c1", "img.png", "text");
    let state = SearchState::initial(claim, Subtask::Text, 5);
    let mut env = Environment::new(Arc::new(registry), Clock::new(ClockKind::Logical), 2048);
    let (next, observation) = env.step(&state, &Action::new("web_search")).unwrap();
    assert!(observation.starts_with("TOOL_ERROR:"), "{observation}");
    assert!(observation.contains("rate limited"));
    assert_eq!(next.evidence.len(), 1);
}

#[test]
fn chat_backend_sends_rendered_prompt_and_reads_content() {
    let reply = serde_json::json!({
        "choices": [{"message": {"content": "{\"coherence\": 0.7}"}}]
    })
    .to_string();
    let (url, rx) = spawn_stub(vec![reply]);
    let backend = RemoteBackend::new(RemoteBackendConfig {
        url,
        model: "test-model".into(),
        token_env: None,
        timeout_secs: 5,
        temperature: 0.0,
        seed: Some(7),
    })
    .unwrap();
    let agents = AgentSet::uniform(Arc::new(backend));
    let trajectory = Trajectory::default().extended(Action::new("corpus_search"), "obs".into());
    let coherence = agents.grade_coherence(&trajectory).unwrap();
    assert_eq!(coherence, 0.7);

    let request: serde_json::Value = serde_json::from_str(&rx.recv().unwrap()).unwrap();
    assert_eq!(request["model"], "test-model");
    assert_eq!(request["temperature"], 0.0);
    assert_eq!(request["seed"], 7);
    assert_eq!(request["messages"][0]["role"], "user");
    let content = request["messages"][0]["content"].as_str().unwrap();
    assert!(content.contains("corpus_search"), "prompt carries the trajectory");
    assert!(content.contains("coherence"), "prompt asks for the schema");
}

#[test]
fn chat_backend_auth_token_comes_from_the_environment() {
    let reply = serde_json::json!({
        "choices": [{"message": {"content": "{\"coherence\": 0.5}"}}]
    })
    .to_string();
    let (url, _rx) = spawn_stub(vec![reply]);
    let backend = RemoteBackend::new(RemoteBackendConfig {
        url,
        model: "m".into(),
        token_env: Some("CLAIMCHECK_TEST_TOKEN_UNSET".into()),
        timeout_secs: 5,
        temperature: 0.0,
        seed: None,
    })
    .unwrap();
    let err = backend.complete(
        AgentRole::CoherenceGrader,
        &[],
        &std::collections::BTreeMap::new(),
        0,
    );
    assert!(err.is_err(), "missing auth env var is a backend error");
}
