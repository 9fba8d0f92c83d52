#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use orchestrator_cli::artifacts::demo_copilot;
use orchestrator_cli::service::{self, AppState, Loader};
use orchestrator_core::config::AppConfig;
use orchestrator_core::pipeline::Copilot;
use serde_json::Value;
use tower::ServiceExt;

pub fn copilot() -> Copilot {
    static C: OnceLock<Copilot> = OnceLock::new();
    C.get_or_init(|| demo_copilot(&AppConfig::default(), 11).expect("demo copilot")).clone()
}

pub fn fixed_state() -> Arc<AppState> {
    let c = copilot();
    let reload = c.clone();
    AppState::new(c, Box::new(move || Ok(reload.clone())))
}

pub fn app_with(copilot: Copilot, loader: Loader) -> (Arc<AppState>, Router) {
    let st = AppState::new(copilot, loader);
    (st.clone(), service::router(st))
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).expect("json body") };
    (status, v)
}
