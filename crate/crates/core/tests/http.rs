//! Service clients against a local server.

use std::path::Path;
use std::thread::JoinHandle;

use persona_audit::corpus::{load_corpus, AuthenticityScorer, CorpusFormat, HttpScorer, ScorerError};
use persona_audit::genharness::{ChatMessage, ChatProvider, OpenAiCompatible};
use persona_audit::net::{Endpoint, HttpError, JsonClient};
use serde_json::{json, Value};

struct Seen {
    url: String,
    auth: Option<String>,
    body: Value,
}

/// Serve one canned `(status, body)` per request, in order, and hand back
/// what each request carried.
fn serve(replies: Vec<(u16, String)>) -> (String, JoinHandle<Vec<Seen>>) {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let base = format!("http://{}", server.server_addr().to_ip().unwrap());
    let handle = std::thread::spawn(move || {
        let mut seen = Vec::new();
        for (status, body) in replies {
            let mut req = server.recv().unwrap();
            let mut text = String::new();
            req.as_reader().read_to_string(&mut text).unwrap();
            seen.push(Seen {
                url: req.url().to_owned(),
                auth: req.headers().iter().find(|h| h.field.equiv("Authorization")).map(|h| h.value.to_string()),
                body: serde_json::from_str(&text).unwrap_or(Value::Null),
            });
            req.respond(tiny_http::Response::from_string(body).with_status_code(status)).unwrap();
        }
        seen
    });
    (base, handle)
}

#[test]
fn chat_completion_round_trip() {
    let reply = json!({
        "id": "c1",
        "model": "m-2024",
        "choices": [{ "message": { "role": "assistant", "content": "I am a persona." }, "finish_reason": "stop" }],
        "usage": { "total_tokens": 12 }
    });
    let (base, server) = serve(vec![(200, reply.to_string())]);
    std::env::set_var("PERSONA_AUDIT_TEST_CHAT_KEY", "secret");
    let endpoint = Endpoint::new(format!("{base}/v1/")).with_key_env("PERSONA_AUDIT_TEST_CHAT_KEY");
    let provider = OpenAiCompatible::new("m", endpoint);
    let c = provider.complete(&[ChatMessage::user("Describe yourself.")], 0.7).unwrap();
    assert_eq!(c.text, "I am a persona.");
    assert_eq!(c.metadata["finish_reason"], "stop");
    assert_eq!(c.metadata["usage"]["total_tokens"], 12);

    let seen = server.join().unwrap();
    assert_eq!(seen[0].url, "/v1/chat/completions");
    assert_eq!(seen[0].auth.as_deref(), Some("Bearer secret"));
    assert_eq!(seen[0].body["model"], "m");
    assert_eq!(seen[0].body["temperature"], 0.7);
    assert_eq!(seen[0].body["messages"][0]["content"], "Describe yourself.");
}

#[test]
fn statuses_map_to_error_classes() {
    let (base, server) = serve(vec![
        (402, "payment required".into()),
        (429, "insufficient_quota".into()),
        (429, "slow down".into()),
        (503, "busy".into()),
        (400, "bad".into()),
        (200, "not json".into()),
    ]);
    let client = JsonClient::new(Endpoint::new(base));
    let mut got = Vec::new();
    for _ in 0..6 {
        got.push(client.post(None, &json!({})).unwrap_err());
    }
    assert!(matches!(got[0], HttpError::Quota(_)));
    assert!(matches!(got[1], HttpError::Quota(_)));
    assert!(matches!(got[2], HttpError::Transient(_)));
    assert!(matches!(got[3], HttpError::Transient(_)));
    assert!(matches!(got[4], HttpError::Fatal(_)));
    assert!(matches!(got[5], HttpError::Fatal(_)));
    assert!(server.join().unwrap()[0].auth.is_none());
}

#[test]
fn detector_score_is_read_through_the_pointer() {
    let docs = load_corpus(
        &Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mini_corpus.jsonl"),
        CorpusFormat::JsonLines,
    )
    .unwrap();
    let (base, server) = serve(vec![
        (200, json!({ "result": { "ai_probability": 0.91 } }).to_string()),
        (200, json!({ "result": {} }).to_string()),
    ]);
    let scorer = HttpScorer::new(Endpoint::new(base), "/result/ai_probability");
    assert_eq!(scorer.score(&docs[0]).unwrap(), 0.91);
    assert!(matches!(scorer.score(&docs[0]), Err(ScorerError::Malformed(_))));
    assert_eq!(server.join().unwrap()[0].body["document"], docs[0].text.as_str());
}
