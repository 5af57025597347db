use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use pap_cli::service::{router, ServiceConfig};

fn app() -> Router {
    router(&ServiceConfig::default()).unwrap()
}

async fn post(app: Router, path: &str, body: String) -> (StatusCode, Value) {
    let req = Request::post(path).header(header::CONTENT_TYPE, "application/json").body(Body::from(body)).unwrap();
    let res = app.oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn two_cell(alpha: f64) -> Value {
    json!({
        "statistics": [{"edges": [-8.0, 1.6448536269514722, 8.0]}],
        "null": {"table": [0.95, 0.05]},
        "signals": [{"joint": [0.0, 0.5, 0.5]}],
        "alpha": alpha,
        "signal": 0
    })
}

fn motivating(kinds: Value, reps: usize) -> Value {
    json!({"n": 2, "theta": [0.0, 1.0], "availability": [0.9, 0.5], "alpha": 0.05, "reps": reps, "seed": 3, "kinds": kinds})
}

fn design() -> Value {
    json!({"mu": [100.0, 120.0], "prior_cov": [[22500.0, 7200.0], [7200.0, 25600.0]],
           "arm_sd": [700.0, 700.0], "control_sd": 700.0, "n_sample": 100.0})
}

fn assert_error_shape(v: &Value) {
    assert!(v["code"].is_string() && v["message"].is_string() && v.get("field_path").is_some(), "{v}");
}

#[tokio::test]
async fn health() {
    let res = app().oneshot(Request::get("/api/v1/health").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    let v: Value = serde_json::from_slice(&res.into_body().collect().await.unwrap().to_bytes()).unwrap();
    assert_eq!(v["status"], "ok");
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
}

#[tokio::test]
async fn solve_two_cell() {
    let (status, v) = post(app(), "/api/v1/solve", two_cell(0.05).to_string()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["result"]["power"], 0.5);
    assert_eq!(v["result"]["extremality"]["is_extremal"], true);
    assert!(v["diagnostics"]["runtime_ms"].is_number());
    assert!(v["diagnostics"]["iterations"].is_number());
    assert_eq!(v["digest"].as_str().unwrap().len(), 64);
}

#[tokio::test]
async fn solve_at_zero_size() {
    let (status, v) = post(app(), "/api/v1/solve", two_cell(0.0).to_string()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["result"]["power"], 0.0);
    assert!(v["result"]["rule"]["entries"].as_array().unwrap().iter().all(|e| e["value"] == 0.0));
}

#[tokio::test]
async fn identical_requests_give_identical_results() {
    let body = motivating(json!(["a1", "a2", "a5"]), 10_000).to_string();
    let (_, a) = post(app(), "/api/v1/power", body.clone()).await;
    let (_, b) = post(app(), "/api/v1/power", body).await;
    assert_eq!(a["result"], b["result"]);
    assert_eq!(a["digest"], b["digest"]);
}

#[tokio::test]
async fn size_guards() {
    let axis = json!({"edges": [-8.0, 0.0, 8.0]});
    let five = json!({
        "statistics": [axis, axis, axis, axis, axis],
        "null": {"mean": [0, 0, 0, 0, 0], "covariance": [[1,0,0,0,0],[0,1,0,0,0],[0,0,1,0,0],[0,0,0,1,0],[0,0,0,0,1]]},
        "signals": [], "alpha": 0.05
    });
    let (status, v) = post(app(), "/api/v1/solve", five.to_string()).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
    assert_error_shape(&v);

    let small = router(&ServiceConfig { max_cells: 1, ..ServiceConfig::default() }).unwrap();
    let (status, _) = post(small, "/api/v1/solve", two_cell(0.05).to_string()).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);

    let body = json!({"design": design(), "availability": {"independent": [1.0, 1.0]}, "family": "optimal-lp",
                      "alpha": 0.05, "grid": {"cells": 80, "span_sds": 4.0}});
    let (status, v) = post(app(), "/api/v1/casestudy", body.to_string()).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
    assert_eq!(v["field_path"], "grid.cells");
}

#[tokio::test]
async fn malformed_and_invalid_bodies() {
    let (status, v) = post(app(), "/api/v1/solve", "{\"statistics\": [".into()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["code"], "syntax");

    let mut bad = two_cell(0.05);
    bad["alpha"] = json!("five percent");
    let (status, v) = post(app(), "/api/v1/solve", bad.to_string()).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error_shape(&v);

    let mut bad = two_cell(0.05);
    bad["signals"][0]["joint"] = json!([0.5, 0.5]);
    let (status, v) = post(app(), "/api/v1/solve", bad.to_string()).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["field_path"], "signals[0].joint");
}

#[tokio::test]
async fn power_series() {
    let (status, v) = post(app(), "/api/v1/power", motivating(json!(["a1", "a2", "a3", "a4", "a5"]), 100_000).to_string()).await;
    assert_eq!(status, StatusCode::OK);
    let r = &v["result"];
    assert_eq!(r["rules"].as_array().unwrap().len(), 5);
    let a5 = r["points"].as_array().unwrap().iter().find(|p| p["theta"] == 0.0 && p["rule"] == "a5").unwrap();
    let (p, se) = (a5["mc"].as_f64().unwrap(), a5["se"].as_f64().unwrap());
    assert!((p - 0.0475).abs() <= 3.0 * se, "{p} ± {se}");
}

#[tokio::test]
async fn power_validation() {
    let (status, v) = post(app(), "/api/v1/power", motivating(json!([]), 100_000).to_string()).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["field_path"], "kinds");
    let (status, v) = post(app(), "/api/v1/power", motivating(json!(["a1"]), 500).to_string()).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["message"].as_str().unwrap().contains("reps"));
}

#[tokio::test]
async fn casestudy_wald_critical_value() {
    let body = json!({"design": design(), "availability": {"independent": [1.0, 1.0]},
                      "family": "wald-fixed-subset", "alpha": 0.05});
    let (status, v) = post(app(), "/api/v1/casestudy", body.to_string()).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let spec = &v["result"]["spec"];
    assert_eq!(spec["registered"], 3);
    assert!((spec["critical"].as_f64().unwrap() - 5.99).abs() < 0.05);
}

#[tokio::test]
async fn casestudy_without_availability_has_no_power() {
    let body = json!({"design": design(), "availability": {"independent": [0.0, 0.0]},
                      "family": "wald-fixed-subset", "alpha": 0.05,
                      "mc": {"calibration_reps": 100000, "search_reps": 20000, "eval_reps": 20000, "seed": 1}});
    let (status, v) = post(app(), "/api/v1/casestudy", body.to_string()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["result"]["power"], 0.0);
}

#[tokio::test]
async fn casestudy_optimal_lp_with_regions() {
    let body = json!({"design": design(), "availability": {"independent": [0.5, 0.7]},
                      "family": "optimal-lp", "alpha": 0.05, "region": {"extent": 4.0, "points": 21}});
    let start = std::time::Instant::now();
    let (status, v) = post(app(), "/api/v1/casestudy", body.to_string()).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert!(start.elapsed().as_secs_f64() < 10.0);
    let r = &v["result"];
    assert!(r["lp"]["solver"]["iterations"].as_u64().unwrap() > 0);
    assert_eq!(r["lp"]["cells"], json!([24, 24]));
    assert_eq!(r["regions"].as_array().unwrap().len(), 3);
    assert!(v["diagnostics"]["iterations"].is_number());
}

#[tokio::test]
async fn singular_covariance_is_unprocessable() {
    let mut d = design();
    d["prior_cov"] = json!([[1.0, 2.0], [2.0, 1.0]]);
    let body = json!({"design": d, "availability": {"independent": [1.0, 1.0]}, "family": "wald-fixed-subset", "alpha": 0.05});
    let (status, v) = post(app(), "/api/v1/casestudy", body.to_string()).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error_shape(&v);
}

#[tokio::test]
async fn cors_allows_the_designer_origin() {
    let req = Request::get("/api/v1/health").header(header::ORIGIN, "http://localhost:5173").body(Body::empty()).unwrap();
    let res = app().oneshot(req).await.unwrap();
    assert_eq!(res.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "http://localhost:5173");
}
