//! HTTP service tests against an in-process server.

use std::net::SocketAddr;
use std::sync::mpsc;
use std::thread;

use pagepyramid::clients::ServiceClients;
use pagepyramid::corpus;
use pagepyramid::indexer;
use pagepyramid::service::{serve_on, AppState};
use pagepyramid::synth::{self, SynthSpec};
use pagepyramid_core::fusion::FusionConfig;
use serde_json::{json, Value};

const DIM: usize = 128;

/// Starts the service on a free port in a background thread. The
/// thread is detached; it dies with the test process.
fn spawn_service(state: AppState) -> SocketAddr {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build()
            .expect("build runtime");
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0")
                .await
                .expect("bind");
            tx.send(listener.local_addr().unwrap()).unwrap();
            serve_on(listener, state).await.expect("serve");
        });
    });
    rx.recv().expect("service never reported its address")
}

struct Server {
    addr: SocketAddr,
    planted_page: String,
    planted_token: String,
    pages: u64,
    // Keeps the corpus on disk while the server reads from it.
    _tmp: tempfile::TempDir,
}

fn start_full_server() -> Server {
    let tmp = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        seed: 31,
        docs: 5,
        pages_per_doc: 4,
        dim: DIM,
    };
    let out = synth::generate(&spec);
    out.write_tree(tmp.path()).unwrap();

    let manifests = corpus::ingest(&tmp.path().join(synth::CORPUS_SUBDIR)).unwrap();
    let clients = ServiceClients::mock(DIM);
    let (index, report) = indexer::build_index(&manifests, &clients).unwrap();
    let state = AppState::new(Some(index), manifests, clients, FusionConfig::default());
    Server {
        addr: spawn_service(state),
        planted_page: out.planted_page.to_string(),
        planted_token: out.planted_token,
        pages: report.pages as u64,
        _tmp: tmp,
    }
}

fn http() -> reqwest::blocking::Client {
    reqwest::blocking::Client::new()
}

fn get(addr: SocketAddr, path: &str) -> (u16, Value) {
    let resp = http()
        .get(format!("http://{addr}{path}"))
        .send()
        .expect("GET");
    let status = resp.status().as_u16();
    (status, resp.json().expect("JSON body"))
}

fn post(addr: SocketAddr, path: &str, body: &Value) -> (u16, Value) {
    let resp = http()
        .post(format!("http://{addr}{path}"))
        .json(body)
        .send()
        .expect("POST");
    let status = resp.status().as_u16();
    (status, resp.json().expect("JSON body"))
}

#[test]
fn routes_cover_health_query_and_answer() {
    let server = start_full_server();

    let (status, health) = get(server.addr, "/healthz");
    assert_eq!(status, 200);
    assert_eq!(health["status"], "ok");
    assert_eq!(health["index"]["pages"].as_u64().unwrap(), server.pages);
    assert_eq!(health["index"]["dim"].as_u64().unwrap(), DIM as u64);

    let (status, body) = post(
        server.addr,
        "/query",
        &json!({ "question": server.planted_token, "k": 3 }),
    );
    assert_eq!(status, 200, "body: {body}");
    let entries = body["entries"].as_array().unwrap();
    assert!(!entries.is_empty());
    let top = format!(
        "{}#{}",
        entries[0]["page"]["doc_id"].as_str().unwrap(),
        entries[0]["page"]["page_no"].as_u64().unwrap()
    );
    assert_eq!(top, server.planted_page);

    let (status, body) = post(
        server.addr,
        "/answer",
        &json!({ "question": server.planted_token, "k": 5 }),
    );
    assert_eq!(status, 200, "body: {body}");
    assert_eq!(body["answer"].as_str().unwrap(), server.planted_token);
    let pages = body["pages"].as_array().unwrap();
    assert_eq!(pages[0].as_str().unwrap(), server.planted_page);
}

#[test]
fn query_accepts_a_full_config_override() {
    let server = start_full_server();

    // Restricting retrieval to the page index hides the planted fact,
    // so the same question returns an empty ranking.
    let mut narrowed = serde_json::to_value(FusionConfig::default()).unwrap();
    narrowed["enabled_indices"] = json!(["fused_page"]);
    let (status, body) = post(
        server.addr,
        "/query",
        &json!({ "question": server.planted_token, "config": narrowed }),
    );
    assert_eq!(status, 200, "body: {body}");
    assert!(body["entries"].as_array().unwrap().is_empty());

    // An invalid override is the caller's fault.
    let mut broken = serde_json::to_value(FusionConfig::default()).unwrap();
    broken["k_final"] = json!(0);
    let (status, body) = post(
        server.addr,
        "/query",
        &json!({ "question": "anything", "config": broken }),
    );
    assert_eq!(status, 400, "body: {body}");
    assert!(body["error"].is_string());
}

#[test]
fn malformed_requests_get_400_with_json_errors() {
    let server = start_full_server();

    let resp = http()
        .post(format!("http://{}/query", server.addr))
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .unwrap();
    assert_eq!(resp.status().as_u16(), 400);
    let body: Value = resp.json().unwrap();
    assert!(body["error"].is_string(), "body: {body}");

    let (status, body) = post(server.addr, "/query", &json!({ "question": "   " }));
    assert_eq!(status, 400, "body: {body}");
    assert!(body["error"].is_string());

    let (status, body) = post(
        server.addr,
        "/query",
        &json!({ "question": "x", "unexpected": true }),
    );
    assert_eq!(status, 400, "unknown fields must be rejected, body: {body}");
}

#[test]
fn missing_index_and_unknown_routes_get_404() {
    let state = AppState::new(
        None,
        Vec::new(),
        ServiceClients::mock(DIM),
        FusionConfig::default(),
    );
    let addr = spawn_service(state);

    let (status, health) = get(addr, "/healthz");
    assert_eq!(status, 200);
    assert!(health["index"].is_null());

    let (status, body) = post(addr, "/query", &json!({ "question": "x" }));
    assert_eq!(status, 404, "body: {body}");
    let (status, _) = post(addr, "/answer", &json!({ "question": "x" }));
    assert_eq!(status, 404);

    let (status, body) = get(addr, "/definitely-not-a-route");
    assert_eq!(status, 404);
    assert!(body["error"].is_string());
}
