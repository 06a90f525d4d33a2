#![allow(dead_code)]

use std::sync::Arc;

use adaptest_core::simulator::{assign_concepts, generate_pool};
use adaptest_core::{CalibratedPool, PoolRegistry};
use adaptest_service::api::{router, AppState};
use adaptest_service::config::ServiceConfig;
use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

/// 60 items over Algebra and Geometry, every item with text.
pub fn pool() -> CalibratedPool {
    let mut pool = generate_pool(60, 11);
    assign_concepts(&mut pool, &[("Algebra", 30), ("Geometry", 30)]);
    pool.content = pool
        .items
        .keys()
        .map(|q| (q.clone(), format!("What is question {q}?")))
        .collect();
    pool
}

pub fn registry() -> PoolRegistry {
    let mut registry = PoolRegistry::new();
    registry.insert("main", pool());
    let mut other = generate_pool(40, 12);
    assign_concepts(&mut other, &[("Logic", 40)]);
    registry.insert("other", other);
    registry
}

pub fn state(config: ServiceConfig) -> Arc<AppState> {
    Arc::new(AppState::new(registry(), config))
}

pub fn app() -> (Arc<AppState>, Router) {
    let st = state(ServiceConfig::default());
    (Arc::clone(&st), router(st))
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req
            .header("content-type", "application/json")
            .body(Body::from(v.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    send(app, req).await
}

pub async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into_owned()))
    };
    (status, value)
}

/// Deterministic examinee: correct on questions easier than `theta`.
pub fn answer(pool: &CalibratedPool, question_id: &str, theta: f64) -> bool {
    pool.get(&question_id.into()).unwrap().beta < theta
}
