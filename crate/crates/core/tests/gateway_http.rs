use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use ctxqa_core::gateway::{EndpointConfig, Gateway, GatewayError, Message};
use serde_json::{json, Value};

#[derive(Default)]
struct Counters {
    flaky: AtomicU32,
    total: AtomicU32,
}

async fn chat(
    State(c): State<Arc<Counters>>,
    headers: HeaderMap,
    Json(body): Json<Value>,
) -> (StatusCode, Json<Value>) {
    c.total.fetch_add(1, Ordering::SeqCst);
    let reply = |text: String| {
        (StatusCode::OK, Json(json!({"choices": [{"message": {"role": "assistant", "content": text}}]})))
    };
    let last = body["messages"].as_array().and_then(|m| m.last()).cloned().unwrap_or_default();
    let echo = format!("echo: {}", last["content"].as_str().unwrap_or(""));
    match body["model"].as_str().unwrap_or("") {
        "flaky" if c.flaky.fetch_add(1, Ordering::SeqCst) < 2 => {
            (StatusCode::TOO_MANY_REQUESTS, Json(json!({"error": "slow down"})))
        }
        "keyed" => match headers.get("authorization").and_then(|h| h.to_str().ok()) {
            Some("Bearer sekret") => reply(echo),
            _ => (StatusCode::UNAUTHORIZED, Json(json!({"error": "bad key"}))),
        },
        "garbage" => (StatusCode::OK, Json(json!({"unexpected": true}))),
        "down" => (StatusCode::SERVICE_UNAVAILABLE, Json(json!({}))),
        "bad-request" => (StatusCode::BAD_REQUEST, Json(json!({"error": "nope"}))),
        _ => {
            assert_eq!(body["temperature"], 0.0);
            assert!(body["max_tokens"].as_u64().unwrap() > 0);
            reply(echo)
        }
    }
}

async fn serve() -> (String, Arc<Counters>) {
    let counters = Arc::new(Counters::default());
    let app = Router::new().route("/v1/chat/completions", post(chat)).with_state(counters.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (format!("http://{addr}/v1"), counters)
}

fn config(base: &str, model: &str) -> EndpointConfig {
    EndpointConfig {
        requests_per_minute: 0,
        backoff_base_ms: 1,
        timeout_secs: 5.0,
        ..EndpointConfig::new(base, model)
    }
}

#[tokio::test]
async fn success_returns_first_choice() {
    let (base, _) = serve().await;
    let gw = Gateway::http(config(&base, "plain")).unwrap();
    let ex = gw.complete(&[Message::user("hello")]).await.unwrap();
    assert_eq!(ex.response_text, "echo: hello");
    assert_eq!(ex.attempts, 1);
    assert_eq!(ex.endpoint_fingerprint, gw.fingerprint());
}

#[tokio::test]
async fn rate_limit_is_retried() {
    let (base, counters) = serve().await;
    let gw = Gateway::http(config(&base, "flaky")).unwrap();
    let ex = gw.complete(&[Message::user("x")]).await.unwrap();
    assert_eq!(ex.attempts, 3);
    assert_eq!(counters.total.load(Ordering::SeqCst), 3);
}

#[tokio::test]
async fn retries_are_bounded() {
    let (base, counters) = serve().await;
    let gw = Gateway::http(EndpointConfig { max_retries: 2, ..config(&base, "down") }).unwrap();
    let err = gw.complete(&[Message::user("x")]).await.unwrap_err();
    assert_eq!(err, GatewayError::Server { status: 503, attempts: 3 });
    assert_eq!(counters.total.load(Ordering::SeqCst), 3);
}

#[tokio::test]
async fn auth_uses_environment_key() {
    let (base, counters) = serve().await;
    let var = "CTXQA_TEST_GATEWAY_KEY";
    let keyed = EndpointConfig { api_key_env: Some(var.into()), ..config(&base, "keyed") };

    std::env::remove_var(var);
    assert!(matches!(Gateway::http(keyed.clone()), Err(GatewayError::Auth(_))));

    std::env::set_var(var, "wrong");
    let gw = Gateway::http(keyed.clone()).unwrap();
    assert!(!format!("{gw:?}").contains("wrong"));
    assert!(matches!(gw.complete(&[Message::user("x")]).await, Err(GatewayError::Auth(_))));
    assert_eq!(counters.total.load(Ordering::SeqCst), 1, "auth errors are not retried");

    std::env::set_var(var, "sekret");
    let gw = Gateway::http(keyed).unwrap();
    assert_eq!(gw.complete(&[Message::user("k")]).await.unwrap().response_text, "echo: k");
}

#[tokio::test]
async fn malformed_and_rejected_bodies() {
    let (base, _) = serve().await;
    let gw = Gateway::http(config(&base, "garbage")).unwrap();
    assert!(matches!(gw.complete(&[Message::user("x")]).await, Err(GatewayError::MalformedResponse(_))));
    let gw = Gateway::http(config(&base, "bad-request")).unwrap();
    assert!(matches!(
        gw.complete(&[Message::user("x")]).await,
        Err(GatewayError::Rejected { status: 400, .. })
    ));
}

#[tokio::test]
async fn unreachable_endpoint() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    drop(listener);
    let cfg = EndpointConfig { max_retries: 1, ..config(&format!("http://127.0.0.1:{port}/v1"), "m") };
    let gw = Gateway::http(cfg).unwrap();
    let err = gw.complete(&[Message::user("x")]).await.unwrap_err();
    assert!(matches!(err, GatewayError::Unreachable { attempts: 2, .. }), "{err:?}");
}
