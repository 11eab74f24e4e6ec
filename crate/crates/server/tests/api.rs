use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use kaya_core::dbdl::format_dbdl;
use kaya_core::pipeline::{load_source, load_suite, run_pipeline, PipelineOptions};
use kaya_core::report::ReportFormat;
use kaya_server::{router, CaseForm, Store, DEFAULT_TTL};
use kaya_testkit::fixture;

struct Api {
    app: Router,
    store: Arc<Store>,
}

impl Api {
    fn new() -> Self {
        let store = Arc::new(Store::new(DEFAULT_TTL, None).unwrap());
        Api {
            app: router(store.clone()),
            store,
        }
    }

    async fn send(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
        let req = Request::builder().method(method).uri(uri);
        let req = match body {
            Some(b) => req
                .header(header::CONTENT_TYPE, "application/json")
                .body(Body::from(b.to_string())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        (
            status,
            resp.into_body()
                .collect()
                .await
                .unwrap()
                .to_bytes()
                .to_vec(),
        )
    }

    async fn session(&self) -> String {
        let (status, body) = self.send(Method::POST, "/sessions", None).await;
        assert_eq!(status, StatusCode::CREATED);
        let v: Value = serde_json::from_slice(&body).unwrap();
        v["id"].as_str().unwrap().to_string()
    }
}

fn json(body: &[u8]) -> Value {
    serde_json::from_slice(body).unwrap()
}

#[tokio::test]
async fn snailthrone_walkthrough_matches_the_shared_pipeline() {
    let api = Api::new();
    let id = api.session().await;
    let source = fixture("snailthrone.msol");
    let (status, body) = api
        .send(
            Method::POST,
            &format!("/sessions/{id}/contracts"),
            Some(json!({"name": "snailthrone.msol", "source": source})),
        )
        .await;
    assert_eq!(status, StatusCode::OK);
    let names: Vec<String> = json(&body)["variables"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["name"].as_str().unwrap().to_string())
        .collect();
    assert!(names.contains(&"hatcherySnail".into()) && names.contains(&"playerEarnings".into()));

    let suite = load_suite("sweep", &fixture("snailthrone_sweep.dbdl")).unwrap();
    let mut dbdl = String::new();
    for case in &suite.cases {
        let form = serde_json::to_value(CaseForm::from_case(case)).unwrap();
        let (status, body) = api
            .send(Method::PUT, &format!("/sessions/{id}/case"), Some(form))
            .await;
        assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
        dbdl = json(&body)["dbdl"].as_str().unwrap().to_string();
    }
    assert_eq!(dbdl, format_dbdl(&suite));

    let (status, _) = api
        .send(Method::GET, &format!("/sessions/{id}/report"), None)
        .await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, report) = api
        .send(Method::POST, &format!("/sessions/{id}/run"), None)
        .await;
    assert_eq!(status, StatusCode::OK);
    let units = vec![load_source("snailthrone.msol", &source).unwrap()];
    let expected = run_pipeline(&units, &suite, &PipelineOptions::default())
        .unwrap()
        .render(ReportFormat::Json);
    assert_eq!(report, expected);
    let v = json(&report);
    let correlated = v["correlations"].as_array().unwrap().iter().any(|c| {
        let pair = [c["a"].as_str().unwrap(), c["b"].as_str().unwrap()];
        pair.iter().any(|p| p.contains("hatcherySnail"))
            && pair.iter().any(|p| p.contains("playerEarnings"))
    });
    assert!(correlated, "{v}");

    let (status, again) = api
        .send(Method::GET, &format!("/sessions/{id}/report"), None)
        .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again, report);
}

#[tokio::test]
async fn unknown_session_is_404() {
    let api = Api::new();
    for (m, path) in [
        (Method::POST, "/sessions/00/contracts"),
        (Method::PUT, "/sessions/00/case"),
        (Method::POST, "/sessions/00/run"),
        (Method::GET, "/sessions/00/report"),
    ] {
        let (status, _) = api.send(m, path, Some(json!({}))).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{path}");
    }
    let (status, body) = api.send(Method::GET, "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json(&body)["status"], "ok");
}

#[tokio::test]
async fn invalid_input_is_422_with_diagnostics() {
    let api = Api::new();
    let id = api.session().await;
    let (status, body) = api
        .send(
            Method::POST,
            &format!("/sessions/{id}/contracts"),
            Some(json!({"name": "c.msol", "source": "contract C {\n uint256 ;\n}"})),
        )
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let d = &json(&body)["diagnostics"][0];
    assert_eq!((d["line"].as_u64(), d["col"].as_u64()), (Some(2), Some(10)));

    let (status, _) = api
        .send(
            Method::POST,
            &format!("/sessions/{id}/contracts"),
            Some(json!({"name": "c.msol", "source": fixture("counter.msol")})),
        )
        .await;
    assert_eq!(status, StatusCode::OK);
    let case = json!({
        "name": "t",
        "accounts": [{"alias": "alice", "balance": "1 ether"}],
        "prestate": [{"path": "Counter.nope[alice]", "value": "1"}],
        "events": [{"call": "Counter.inc()", "from": "alice"}],
    });
    let (status, body) = api
        .send(Method::PUT, &format!("/sessions/{id}/case"), Some(case))
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(String::from_utf8_lossy(&body).contains("Counter.nope[alice]"));

    let (status, _) = api
        .send(Method::POST, &format!("/sessions/{id}/run"), None)
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "no cases yet");
    let (status, _) = api
        .send(
            Method::PUT,
            &format!("/sessions/{id}/case"),
            Some(json!({"bogus": 1})),
        )
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = api
        .send(
            Method::POST,
            &format!("/sessions/{id}/run"),
            Some(json!({"threshold": 3.0})),
        )
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn second_run_while_running_is_409() {
    let api = Api::new();
    let id = api.session().await;
    api.send(
        Method::POST,
        &format!("/sessions/{id}/contracts"),
        Some(json!({"name": "c.msol", "source": fixture("counter.msol")})),
    )
    .await;
    let suite = load_suite("c", &fixture("counter.dbdl")).unwrap();
    let form = serde_json::to_value(CaseForm::from_case(&suite.cases[0])).unwrap();
    api.send(Method::PUT, &format!("/sessions/{id}/case"), Some(form))
        .await;
    let s = api.store.get(&id).unwrap();
    s.lock().await.running = true;
    let (status, _) = api
        .send(Method::POST, &format!("/sessions/{id}/run"), None)
        .await;
    assert_eq!(status, StatusCode::CONFLICT);
    s.lock().await.running = false;
    let (status, _) = api
        .send(Method::POST, &format!("/sessions/{id}/run"), None)
        .await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn concurrent_sessions_stay_isolated() {
    let api = Arc::new(Api::new());
    let mut handles = Vec::new();
    for (i, file) in ["counter.dbdl", "counter_failing.dbdl"]
        .iter()
        .cycle()
        .take(8)
        .enumerate()
    {
        let api = api.clone();
        let file = file.to_string();
        handles.push(tokio::spawn(async move {
            let id = api.session().await;
            api.send(
                Method::POST,
                &format!("/sessions/{id}/contracts"),
                Some(json!({"name": "counter.msol", "source": fixture("counter.msol")})),
            )
            .await;
            let suite = load_suite("c", &fixture(&file)).unwrap();
            for case in &suite.cases {
                let form = serde_json::to_value(CaseForm::from_case(case)).unwrap();
                api.send(Method::PUT, &format!("/sessions/{id}/case"), Some(form))
                    .await;
            }
            let (_, report) = api
                .send(
                    Method::POST,
                    &format!("/sessions/{id}/run"),
                    Some(json!({"jobs": 1 + i % 3})),
                )
                .await;
            let units = vec![load_source("counter.msol", &fixture("counter.msol")).unwrap()];
            let expected = run_pipeline(&units, &suite, &PipelineOptions::default())
                .unwrap()
                .render(ReportFormat::Json);
            assert_eq!(report, expected);
        }));
    }
    for h in handles {
        h.await.unwrap();
    }
}

#[tokio::test]
async fn cors_allows_only_local_origins() {
    let api = Api::new();
    for (origin, allowed) in [
        ("http://localhost:5173", true),
        ("http://evil.example", false),
    ] {
        let req = Request::builder()
            .method(Method::OPTIONS)
            .uri("/sessions")
            .header(header::ORIGIN, origin)
            .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
            .body(Body::empty())
            .unwrap();
        let resp = api.app.clone().oneshot(req).await.unwrap();
        let got = resp
            .headers()
            .get(header::ACCESS_CONTROL_ALLOW_ORIGIN)
            .map(|v| v.to_str().unwrap().to_string());
        assert_eq!(got.is_some(), allowed, "{origin}");
    }
}
