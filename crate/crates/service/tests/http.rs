mod common;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use common::{BAD, QUEUE, TOPIC};
use http_body_util::BodyExt;
use redd_service::{router, Service, ServiceConfig, TOKEN_HEADER};
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(root: &std::path::Path, tokens: &[(&str, &str)]) -> (Router, Service) {
    let cfg = ServiceConfig {
        tokens: tokens
            .iter()
            .map(|(t, r)| (t.to_string(), r.to_string()))
            .collect(),
        ..common::data_dir(root)
    };
    let svc = Service::open(cfg).unwrap();
    (router(svc.clone()), svc)
}

async fn call(
    app: &Router,
    method: Method,
    uri: &str,
    token: Option<&str>,
    body: Option<Value>,
) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header(TOKEN_HEADER, t);
    }
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes)
        .unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

#[tokio::test]
async fn queue_paging_and_missing_queue() {
    let dir = tempfile::tempdir().unwrap();
    let (app, svc) = app(dir.path(), &[]);
    let (status, body) = call(
        &app,
        Method::GET,
        &format!("/queues/{QUEUE}?first=2&last=4"),
        None,
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let rows = body["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["rank"], 2);
    assert_eq!(
        rows[0]["domain"],
        svc.queue(QUEUE).unwrap().entries[1].domain.as_str()
    );
    assert_eq!(body["total_ranked"], svc.queue(QUEUE).unwrap().len());

    let (status, body) = call(&app, Method::GET, "/queues/missing", None, None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "not_found");
    assert_eq!(body["retryable"], false);

    let (status, body) = call(&app, Method::GET, "/queues", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!([QUEUE]));
}

#[tokio::test]
async fn decisions_need_a_known_token() {
    let dir = tempfile::tempdir().unwrap();
    let (app, svc) = app(dir.path(), &[("secret", "alice")]);
    let uri = format!("/queues/{QUEUE}/decisions");
    let body = json!({"domain": BAD, "verdict": "blocklist", "idempotency_key": "x"});

    let (status, resp) = call(&app, Method::POST, &uri, None, Some(body.clone())).await;
    assert_eq!(
        (status, resp["error"].as_str()),
        (StatusCode::UNAUTHORIZED, Some("unauthorized"))
    );
    let (status, _) = call(&app, Method::POST, &uri, Some("wrong"), Some(body.clone())).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert!(svc.decisions().is_empty());

    let (status, resp) = call(&app, Method::POST, &uri, Some("secret"), Some(body.clone())).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(resp["decision"]["reviewer_id"], "alice");
    assert_eq!(resp["decision"]["decision_id"], 1);
    let (status, resp) = call(&app, Method::POST, &uri, Some("secret"), Some(body)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(resp["created"], false);

    let (status, resp) = call(&app, Method::GET, &uri, None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(resp.as_array().unwrap().len(), 1);

    let (status, resp) = call(
        &app,
        Method::POST,
        &uri,
        Some("secret"),
        Some(json!({"domain": BAD})),
    )
    .await;
    assert_eq!(
        (status, resp["error"].as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, Some("invalid"))
    );
    let (status, _) = call(
        &app,
        Method::POST,
        &uri,
        Some("secret"),
        Some(json!({"domain": BAD, "verdict": "maybe"})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(
        &app,
        Method::POST,
        "/queues/missing/decisions",
        Some("secret"),
        Some(json!({"domain": BAD, "verdict": "flag"})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn calibration_flow() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path(), &[]);
    let uri = format!("/topics/{TOPIC}/calibration");
    let (status, _) = call(&app, Method::GET, &uri, None, None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, session) = call(&app, Method::POST, &uri, Some("t"), None).await;
    assert_eq!(status, StatusCode::OK);
    let buckets = session["report"]["buckets"].as_array().unwrap();
    let (b, bucket) = buckets
        .iter()
        .enumerate()
        .find(|(_, b)| !b["sample"].as_array().unwrap().is_empty())
        .unwrap();
    let page = bucket["sample"][0].clone();
    let mark = json!({"bucket": b, "page_id": page, "relevant": true});
    let (status, after) = call(
        &app,
        Method::POST,
        &format!("{uri}/marks"),
        Some("t"),
        Some(mark.clone()),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(after["marks"][page.as_str().unwrap()], true);

    let (status, _) = call(
        &app,
        Method::POST,
        &format!("{uri}/confirm"),
        Some("t"),
        None,
    )
    .await;
    assert_eq!(
        status,
        StatusCode::UNPROCESSABLE_ENTITY,
        "unmarked buckets remain"
    );
    for (b, bucket) in buckets.iter().enumerate() {
        for id in bucket["sample"].as_array().unwrap() {
            let m = json!({"bucket": b, "page_id": id, "relevant": true});
            let (status, _) = call(
                &app,
                Method::POST,
                &format!("{uri}/marks"),
                Some("t"),
                Some(m),
            )
            .await;
            assert_eq!(status, StatusCode::OK);
        }
    }
    let (status, frozen) = call(
        &app,
        Method::POST,
        &format!("{uri}/confirm"),
        Some("t"),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{frozen}");
    assert_eq!(frozen["frozen"], true);
    let (status, resp) = call(
        &app,
        Method::POST,
        &format!("{uri}/marks"),
        Some("t"),
        Some(mark),
    )
    .await;
    assert_eq!(
        (status, resp["error"].as_str()),
        (StatusCode::CONFLICT, Some("conflict"))
    );
}

#[tokio::test]
async fn retrain_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (app, svc) = app(dir.path(), &[]);
    let retrain = json!({"topic_id": TOPIC, "train": {"epochs": 5, "hidden_dims": [8, 8, 4]}});
    let (status, resp) = call(
        &app,
        Method::POST,
        "/models/retrain",
        Some("t"),
        Some(retrain.clone()),
    )
    .await;
    assert_eq!(
        (status, resp["error"].as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, Some("no_new_labels"))
    );
    let (_, st) = call(&app, Method::GET, "/models/retrain", None, None).await;
    assert_eq!(st["state"], "failed");

    let (status, _) = call(
        &app,
        Method::POST,
        &format!("/queues/{QUEUE}/decisions"),
        Some("t"),
        Some(json!({"domain": BAD, "verdict": "blocklist"})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    let (status, out) = call(
        &app,
        Method::POST,
        "/models/retrain",
        Some("t"),
        Some(retrain),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{out}");
    assert_eq!(out["version"], 2);
    let (_, st) = call(&app, Method::GET, "/models/retrain", None, None).await;
    assert_eq!(
        (st["state"].as_str(), st["version"].as_u64()),
        (Some("succeeded"), Some(2))
    );
    let (_, reg) = call(&app, Method::GET, "/models", None, None).await;
    assert_eq!(reg["active"][TOPIC], 2);

    let (status, m) = call(
        &app,
        Method::GET,
        &format!("/models/2/metrics?topic={TOPIC}"),
        None,
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let direct = svc.get_metrics(2, TOPIC).unwrap();
    assert_eq!(m, serde_json::to_value(&direct).unwrap());
    let (status, _) = call(
        &app,
        Method::GET,
        &format!("/models/7/metrics?topic={TOPIC}"),
        None,
        None,
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}
