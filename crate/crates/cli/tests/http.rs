use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use hitlbo_cli::server::{router, Registry};
use hitlbo_core::ExpertQueue;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const TRIANGLE: &str = "p edge 3 3\ne 1 2\ne 2 3\ne 1 3\n";

fn app() -> Router {
    router(Registry::with_poll(Arc::new(ExpertQueue::new()), Duration::from_millis(20)))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

fn run_request(expert: &str) -> Value {
    json!({
        "s": 2, "x": 8, "max_expansions": 3, "epsilon": 0.0, "seed": 5,
        "instance": { "text": TRIANGLE, "format": "graph" },
        "expert": expert,
    })
}

async fn wait_for<F: Fn(&Value) -> bool>(app: &Router, uri: &str, ok: F) -> Value {
    let start = Instant::now();
    loop {
        let (status, v) = call(app, "GET", uri, None).await;
        assert_eq!(status, StatusCode::OK);
        if ok(&v) {
            return v;
        }
        assert!(start.elapsed() < Duration::from_secs(20), "timed out waiting on {uri}: {v}");
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
}

async fn next_pending(app: &Router) -> Value {
    let list = wait_for(app, "/api/v1/queries?state=pending", |v| !v.as_array().unwrap().is_empty()).await;
    list[0].clone()
}

fn wiener(variance: f64) -> Value {
    json!({ "kernel": "wiener", "variance": variance, "mean": 0.0, "annotation": "looks smooth" })
}

#[tokio::test]
async fn remote_round_trip_with_contradiction() {
    let app = app();
    let (status, created) = call(&app, "POST", "/api/v1/runs", Some(run_request("remote"))).await;
    assert_eq!(status, StatusCode::CREATED, "{created}");
    let run_id = created["run_id"].as_str().unwrap().to_string();

    let q = next_pending(&app).await;
    assert_eq!(q["run_id"], run_id.as_str());
    assert_eq!((q["lo"].as_u64(), q["hi"].as_u64(), q["size"].as_u64()), (Some(1), Some(4), Some(4)));
    assert_eq!(q["sibling"], json!([5, 8]));
    assert!(q["enqueued_at"].as_str().unwrap().ends_with('Z'));
    let first = q["query_id"].as_str().unwrap().to_string();

    let (status, runs) = call(&app, "GET", "/api/v1/runs", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(runs[0]["status"], "waiting");
    assert_eq!(runs[0]["pending_query"], first.as_str());

    let uri = format!("/api/v1/queries/{first}/response");
    let (status, ack) = call(&app, "POST", &uri, Some(wiener(1.0))).await;
    assert_eq!(status, StatusCode::OK, "{ack}");
    assert_eq!(ack["status"], "accepted");
    // Answered queries are closed.
    let (status, _) = call(&app, "POST", &uri, Some(wiener(1.0))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    // The second re-sample of the same cell overlaps the first.
    let q = wait_for(&app, "/api/v1/queries?state=pending", |v| {
        v.as_array().unwrap().first().is_some_and(|q| q["query_id"] != first.as_str())
    })
    .await[0]
        .clone();
    let second = q["query_id"].as_str().unwrap().to_string();
    assert_eq!(q["sample_index"], 1);
    let uri = format!("/api/v1/queries/{second}/response");
    let (status, body) = call(&app, "POST", &uri, Some(wiener(100.0))).await;
    assert_eq!(status, StatusCode::CONFLICT, "{body}");
    assert!(body["diagnostic"].as_str().unwrap().contains("variance"), "{body}");
    let (_, pending) = call(&app, "GET", "/api/v1/queries?state=pending", None).await;
    assert_eq!(pending[0]["query_id"], second.as_str());
    let (status, _) = call(&app, "POST", &uri, Some(wiener(1.1))).await;
    assert_eq!(status, StatusCode::OK);

    let mut answered = 2;
    let detail = loop {
        let (_, d) = call(&app, "GET", &format!("/api/v1/runs/{run_id}"), None).await;
        if d["status"] == "finished" {
            break d;
        }
        let (_, pending) = call(&app, "GET", "/api/v1/queries?state=pending", None).await;
        if let Some(q) = pending.as_array().unwrap().first() {
            let uri = format!("/api/v1/queries/{}/response", q["query_id"].as_str().unwrap());
            if call(&app, "POST", &uri, Some(wiener(1.0))).await.0 == StatusCode::OK {
                answered += 1;
            }
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    };
    assert_eq!(answered, 4);
    assert_eq!(detail["result"]["best_value"], 3.0);
    assert_eq!(detail["result"]["expert_queries"], 4);
    assert_eq!(detail["cells"].as_array().unwrap().len(), 3);
    assert_eq!(detail["cells"][0]["status"], "expanded");
    assert_eq!(detail["config"]["s"], 2);
    assert!(detail["pending_query"].is_null());
}

#[tokio::test]
async fn simulated_run_completes_without_a_human() {
    let app = app();
    let (status, created) = call(&app, "POST", "/api/v1/runs", Some(run_request("sim"))).await;
    assert_eq!(status, StatusCode::CREATED);
    let uri = format!("/api/v1/runs/{}", created["run_id"].as_str().unwrap());
    let detail = wait_for(&app, &uri, |d| d["status"] == "finished").await;
    assert_eq!(detail["result"]["best_value"], 3.0);
    assert_eq!(detail["instance"]["problem"], "max-clique");
}

#[tokio::test]
async fn rejections() {
    let app = app();
    let (status, _) = call(&app, "POST", "/api/v1/queries/nope/response", Some(wiener(1.0))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "GET", "/api/v1/runs/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "GET", "/api/v1/queries?state=answered", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    // Stationary kernels need a lengthscale.
    let body = json!({ "kernel": "se", "variance": 1.0, "mean": 0.0 });
    let (status, _) = call(&app, "POST", "/api/v1/queries/nope/response", Some(body)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let mut bad = run_request("sim");
    bad["x"] = json!(1);
    let (status, body) = call(&app, "POST", "/api/v1/runs", Some(bad)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("X must be at least 2"));

    let mut bad = run_request("sim");
    bad["instance"] = json!({ "text": "p edge 2 1\ne 1 1\n" });
    let (status, body) = call(&app, "POST", "/api/v1/runs", Some(bad)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("self-loop"));

    let (_, runs) = call(&app, "GET", "/api/v1/runs", None).await;
    assert!(runs.as_array().unwrap().is_empty());
}
