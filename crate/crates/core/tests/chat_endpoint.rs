//! The chat-completions client against a real socket.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use tempamb::oracle::{
    ChatEndpointOracle, ManualClock, Oracle, OracleConfig, OracleError, OracleKind, ReqwestTransport,
};

#[derive(Debug, Clone, Default)]
struct Seen {
    path: String,
    authorization: Option<String>,
    body: serde_json::Value,
}

/// Serves the scripted `(status, body)` replies in order, one per connection.
fn scripted_server(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    std::thread::spawn(move || {
        for (status, reply) in replies {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut entry = Seen {
                path: request_line.split_whitespace().nth(1).unwrap_or("").to_string(),
                ..Default::default()
            };
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (k, v) = line.split_once(':').unwrap();
                match k.to_ascii_lowercase().as_str() {
                    "content-length" => len = v.trim().parse().unwrap(),
                    "authorization" => entry.authorization = Some(v.trim().to_string()),
                    _ => {}
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            entry.body = serde_json::from_slice(&body).unwrap();
            log.lock().unwrap().push(entry);
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
        }
    });
    (base, seen)
}

fn config(url: &str) -> OracleConfig {
    OracleConfig {
        kind: OracleKind::ChatEndpoint,
        endpoint_url: Some(url.to_string()),
        model_name: Some("test-model".into()),
        max_retries: 2,
        ..OracleConfig::default()
    }
}

fn reply(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

#[test]
fn retries_transient_status_then_succeeds() {
    let (url, seen) = scripted_server(vec![
        (503, "busy".into()),
        (429, "slow down".into()),
        (200, reply(" Yes")),
    ]);
    std::env::set_var("TEMPAMB_TEST_KEY_A", "secret-token");
    let mut cfg = config(&url);
    cfg.api_key_env_var = Some("TEMPAMB_TEST_KEY_A".into());
    let clock = Arc::new(ManualClock::default());
    let oracle =
        ChatEndpointOracle::with_parts(&cfg, Box::new(ReqwestTransport::new().unwrap()), clock.clone(), None).unwrap();

    assert_eq!(oracle.complete("Q1: a\nQ2: b\nAnswer:").unwrap(), " Yes");
    assert_eq!(
        clock.sleeps(),
        vec![Duration::from_millis(250), Duration::from_millis(500)]
    );

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    for s in seen.iter() {
        assert_eq!(s.path, "/v1/chat/completions");
        assert_eq!(s.authorization.as_deref(), Some("Bearer secret-token"));
        assert_eq!(s.body["model"], "test-model");
        assert_eq!(s.body["messages"][0]["role"], "user");
        assert_eq!(s.body["messages"][0]["content"], "Q1: a\nQ2: b\nAnswer:");
        assert_eq!(s.body["temperature"], 0.0);
        assert_eq!(s.body["max_tokens"], 16);
    }
}

#[test]
fn gives_up_after_max_retries() {
    let (url, seen) = scripted_server(vec![(500, "a".into()), (502, "b".into()), (503, "c".into())]);
    let clock = Arc::new(ManualClock::default());
    let oracle =
        ChatEndpointOracle::with_parts(&config(&url), Box::new(ReqwestTransport::new().unwrap()), clock, None).unwrap();
    match oracle.complete("hello") {
        Err(OracleError::RetriesExhausted { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = scripted_server(vec![(400, "bad request".into())]);
    let oracle = ChatEndpointOracle::with_parts(
        &config(&url),
        Box::new(ReqwestTransport::new().unwrap()),
        Arc::new(ManualClock::default()),
        None,
    )
    .unwrap();
    match oracle.complete("hello") {
        Err(OracleError::Endpoint { status, body }) => assert_eq!((status, body.as_str()), (400, "bad request")),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn malformed_body_is_reported() {
    let (url, _) = scripted_server(vec![(200, r#"{"choices": []}"#.into())]);
    let oracle = ChatEndpointOracle::with_parts(
        &config(&url),
        Box::new(ReqwestTransport::new().unwrap()),
        Arc::new(ManualClock::default()),
        None,
    )
    .unwrap();
    assert!(matches!(
        oracle.complete("hello"),
        Err(OracleError::MalformedResponse(_))
    ));
}
