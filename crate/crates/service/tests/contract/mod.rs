//! HTTP contract checks, driven in-process through `tower::ServiceExt::oneshot`.
//! Each check panics on failure. Shared by this crate's tests and the
//! workspace acceptance run.
#![allow(dead_code)]

use std::future::Future;
use std::pin::Pin;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{HeaderMap, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use tweettopic::store::{Granularity, StoredTweet};
use tweettopic::synth::{generate, SynthConfig};
use tweettopic::{ExtractorConfig, Store, Topic, TopicLabels, TrainConfig};
use tweettopic_service::{router, AppConfig, AppState};

pub const TOKEN: &str = "s3cret";

pub struct Fixture {
    pub state: Arc<AppState>,
    pub app: Router,
    /// Cleaned tweets with their planted labels, ordered by id.
    pub tweets: Vec<(StoredTweet, TopicLabels)>,
}

pub fn config() -> AppConfig {
    AppConfig {
        admin_token: TOKEN.into(),
        extractor: ExtractorConfig::hashed(1, 3, 4096, 0),
        train: TrainConfig {
            peak_lr: 5e-2,
            epochs: 20,
            ..TrainConfig::default()
        },
        ..AppConfig::default()
    }
}

pub fn corpus(n: usize) -> Vec<(StoredTweet, TopicLabels)> {
    let corpus = generate(&SynthConfig {
        n,
        seed: 42,
        start: chrono::TimeZone::with_ymd_and_hms(&chrono::Utc, 2021, 8, 1, 0, 0, 0).unwrap(),
        days: 90,
        ..SynthConfig::default()
    });
    let mut rows: Vec<_> = corpus
        .dataset_rows()
        .into_iter()
        .map(|r| {
            (
                StoredTweet {
                    id: r.tweet_id,
                    created_at: r.created_at,
                    text: r.text,
                    source: "synthetic".into(),
                },
                r.labels,
            )
        })
        .collect();
    rows.sort_by(|a, b| a.0.id.cmp(&b.0.id));
    rows
}

pub fn fixture_with(n: usize, config: AppConfig) -> Fixture {
    let tweets = corpus(n);
    let store = Store::in_memory();
    store.upsert_tweets(tweets.iter().map(|t| t.0.clone()).collect()).unwrap();
    let state = Arc::new(AppState::new(config, store, None).unwrap());
    Fixture {
        app: router(Arc::clone(&state)),
        state,
        tweets,
    }
}

pub fn fixture(n: usize) -> Fixture {
    fixture_with(n, config())
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Value,
}

impl Reply {
    pub fn stamped_version(&self) -> Option<String> {
        let header = self
            .headers
            .get("x-model-version")
            .map(|v| v.to_str().unwrap().to_string());
        let body = self.body["model_version"].as_str().map(str::to_string);
        assert_eq!(header, body, "header and body versions disagree");
        body
    }
}

pub async fn call(app: &Router, method: Method, uri: &str, token: Option<&str>, body: Option<Value>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("X-Admin-Token", t);
    }
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    Reply { status, headers, body }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    call(app, Method::GET, uri, None, None).await
}

pub async fn post(app: &Router, uri: &str, body: Value) -> Reply {
    call(app, Method::POST, uri, Some(TOKEN), Some(body)).await
}

pub fn labels_json(l: &TopicLabels) -> Value {
    serde_json::to_value(l).unwrap()
}

pub async fn annotate(app: &Router, id: &str, rater: &str, l: &TopicLabels) -> Reply {
    post(app, "/api/v1/annotations", json!({"tweet_id": id, "rater_id": rater, "labels": labels_json(l)})).await
}

/// Starts a retrain and polls until it leaves queued/running.
pub async fn retrain(app: &Router) -> Value {
    let r = call(app, Method::POST, "/api/v1/retrain", Some(TOKEN), None).await;
    assert_eq!(r.status, StatusCode::ACCEPTED, "{}", r.body);
    let id = r.body["job_id"].as_u64().unwrap();
    for _ in 0..1200 {
        let j = get(app, &format!("/api/v1/retrain/{id}")).await;
        assert_eq!(j.status, StatusCode::OK);
        match j.body["state"].as_str().unwrap() {
            "queued" | "running" => tokio::time::sleep(Duration::from_millis(25)).await,
            _ => return j.body,
        }
    }
    panic!("retrain job {id} did not finish");
}

fn uri_escape(s: &str) -> String {
    s.replace(' ', "%20")
}

// ---------------------------------------------------------------------------

pub async fn fresh_deploy_has_no_model() {
    let f = fixture(20);
    assert_eq!(get(&f.app, "/api/v1/model").await.status, StatusCode::NOT_FOUND);
    assert_eq!(get(&f.app, "/api/v1/metrics").await.status, StatusCode::NOT_FOUND);
    assert_eq!(get(&f.app, "/api/v1/kappa").await.status, StatusCode::NOT_FOUND);
    assert_eq!(get(&f.app, "/api/v1/retrain/99").await.status, StatusCode::NOT_FOUND);
    assert_eq!(get(&f.app, "/api/v1/retrain/abc").await.status, StatusCode::NOT_FOUND);
    assert_eq!(get(&f.app, "/api/v1/agreement-subset").await.status, StatusCode::NOT_FOUND);
    let r = get(&f.app, "/api/v1/tweets?limit=5").await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.body["total"].as_u64().unwrap() as usize, f.tweets.len());
    assert_eq!(r.body["items"].as_array().unwrap().len(), 5);
    assert_eq!(r.stamped_version(), None);
    assert!(r.body["items"][0]["labels"].is_null());
}

pub async fn query_validation() {
    let f = fixture(20);
    let r = get(&f.app, "/api/v1/tweets?topic=Nonexistent").await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let allowed: Vec<&str> = r.body["allowed_topics"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(allowed, Topic::names());

    for bad in [
        "/api/v1/tweets?from=yesterday",
        "/api/v1/tweets?from=2021-09-10&to=2021-09-01",
        "/api/v1/tweets?status=done",
        "/api/v1/tweets?limit=-1",
        "/api/v1/tweets?limit=5000",
        "/api/v1/trends?granularity=month",
        "/api/v1/trends?topic=Nope",
    ] {
        let r = get(&f.app, bad).await;
        assert_eq!(r.status, StatusCode::BAD_REQUEST, "{bad}: {}", r.body);
        assert!(r.body["error"].is_string());
    }
    let ok = get(&f.app, "/api/v1/tweets?topic=waves%20and%20variants&from=2021-08-01&to=2021-12-31T00:00:00Z").await;
    assert_eq!(ok.status, StatusCode::OK);
}

pub async fn annotation_auth_and_validation() {
    let f = fixture(20);
    let id = f.tweets[0].0.id.clone();
    let body = json!({"tweet_id": id, "rater_id": "ana", "labels": labels_json(&f.tweets[0].1)});

    let r = call(&f.app, Method::POST, "/api/v1/annotations", None, Some(body.clone())).await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);
    let r = call(&f.app, Method::POST, "/api/v1/annotations", Some("wrong"), Some(body.clone())).await;
    assert_eq!(r.status, StatusCode::FORBIDDEN);

    let r = post(&f.app, "/api/v1/annotations", json!({"tweet_id": "missing", "rater_id": "ana", "labels": labels_json(&TopicLabels::empty())})).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);

    let mut seven = labels_json(&TopicLabels::empty());
    seven.as_object_mut().unwrap().remove("Waves and Variants");
    let r = post(&f.app, "/api/v1/annotations", json!({"tweet_id": id, "rater_id": "ana", "labels": seven})).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.body["missing_topics"], json!(["Waves and Variants"]));
    assert!(r.body["error"].as_str().unwrap().contains("Waves and Variants"));

    let mut extra = labels_json(&TopicLabels::empty());
    extra["Sports"] = json!(true);
    let r = post(&f.app, "/api/v1/annotations", json!({"tweet_id": id, "rater_id": "ana", "labels": extra})).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.body["allowed_topics"].as_array().unwrap().len(), 8);

    let mut not_bool = labels_json(&TopicLabels::empty());
    not_bool["Humor"] = json!("yes");
    let r = post(&f.app, "/api/v1/annotations", json!({"tweet_id": id, "rater_id": "ana", "labels": not_bool})).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);

    let r = call(&f.app, Method::POST, "/api/v1/annotations", Some(TOKEN), None).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);

    let r = post(&f.app, "/api/v1/annotations", json!({"tweet_id": id, "rater_id": "model:v9", "labels": labels_json(&TopicLabels::empty())})).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

pub async fn correction_lifecycle_and_idempotence() {
    let f = fixture(20);
    let (t, truth) = &f.tweets[0];
    let before = f.state.store.history_len();
    let a = annotate(&f.app, &t.id, "ana", truth).await;
    assert_eq!(a.status, StatusCode::OK);
    assert_eq!(a.body["record"]["status"], "human_validated");
    let b = annotate(&f.app, &t.id, "ana", truth).await;
    assert_eq!(b.body["record"], a.body["record"]);
    assert_eq!(f.state.store.history_len(), before + 1);

    let mut other = *truth;
    other.0[7] = !other.0[7];
    let c = annotate(&f.app, &t.id, "ana", &other).await;
    assert_eq!(c.body["record"]["status"], "human_validated");
    assert_eq!(f.state.store.history_len(), before + 2);

    let p = post(&f.app, "/api/v1/proofread", json!({"tweet_id": t.id, "rater_id": "ana"})).await;
    assert_eq!(p.status, StatusCode::OK);
    assert_eq!(p.body["record"]["status"], "proofread");
    let again = post(&f.app, "/api/v1/proofread", json!({"tweet_id": t.id, "rater_id": "ana"})).await;
    assert_eq!(again.body["record"], p.body["record"]);
    let late = annotate(&f.app, &t.id, "ana", truth).await;
    assert_eq!(late.status, StatusCode::CONFLICT);
    let nobody = post(&f.app, "/api/v1/proofread", json!({"tweet_id": t.id, "rater_id": "bikash"})).await;
    assert_eq!(nobody.status, StatusCode::NOT_FOUND);

    let view = get(&f.app, &format!("/api/v1/tweets/{}", t.id)).await;
    assert_eq!(view.body["tweet"]["status"], "proofread");
    assert_eq!(view.body["tweet"]["labels"], labels_json(&other));
    let filtered = get(&f.app, "/api/v1/tweets?status=proofread").await;
    assert_eq!(filtered.body["total"], 1);
}

pub async fn retrain_without_supervision_fails_fast() {
    let f = fixture(20);
    let job = retrain(&f.app).await;
    assert_eq!(job["state"], "failed");
    assert!(job["error"].as_str().unwrap().contains("insufficient supervision"), "{job}");
    assert_eq!(get(&f.app, "/api/v1/model").await.status, StatusCode::NOT_FOUND);
}

pub async fn single_flight_retrain() {
    let f = fixture(20);
    let held = f.state.enqueue_retrain().unwrap();
    let r = call(&f.app, Method::POST, "/api/v1/retrain", Some(TOKEN), None).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.body["active_job"]["job_id"].as_u64(), Some(held.job_id));
    let r = call(&f.app, Method::POST, "/api/v1/retrain", None, None).await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);

    f.state.run_retrain(held.job_id);
    assert_eq!(f.state.job(held.job_id).unwrap().state, tweettopic_service::JobState::Failed);
    let r = call(&f.app, Method::POST, "/api/v1/retrain", Some(TOKEN), None).await;
    assert_eq!(r.status, StatusCode::ACCEPTED);
}

/// Every model-sourced label in a response comes from the stamped version.
fn assert_consistent(r: &Reply) {
    let version = r.stamped_version();
    for item in r.body["items"].as_array().unwrap() {
        if let Some(src) = item["label_source"].as_str() {
            if let Some(v) = src.strip_prefix("model:") {
                assert_eq!(Some(v), version.as_deref(), "item {} labeled by another model", item["id"]);
            }
        }
    }
}

async fn label_first(f: &Fixture, n: usize) {
    for (i, (t, truth)) in f.tweets.iter().take(n).enumerate() {
        let r = annotate(&f.app, &t.id, ["ana", "bikash"][i % 2], truth).await;
        assert_eq!(r.status, StatusCode::OK);
    }
}

pub async fn retrain_swaps_and_stamps_versions() {
    let f = fixture(160);
    label_first(&f, 100).await;
    let job = retrain(&f.app).await;
    assert_eq!(job["state"], "succeeded", "{job}");
    let version = job["snapshot_version"].as_str().unwrap().to_string();
    assert_eq!(job["training_examples"], 100);
    assert_eq!(job["repredicted"].as_u64().unwrap() as usize, f.tweets.len() - 100);

    let m = get(&f.app, "/api/v1/model").await;
    assert_eq!(m.status, StatusCode::OK);
    assert_eq!(m.body["version"], version.as_str());
    assert_eq!(m.stamped_version().as_deref(), Some(version.as_str()));
    assert_eq!(m.body["topics"], json!(Topic::names()));

    let metrics = get(&f.app, "/api/v1/metrics").await;
    assert_eq!(metrics.status, StatusCode::OK);
    assert_eq!(metrics.body["model_version"], version.as_str());
    assert!(metrics.body["report"]["averaged"]["weighted_f1"].as_f64().unwrap() > 0.5);

    let r = get(&f.app, "/api/v1/tweets?limit=1000").await;
    assert_consistent(&r);
    let items = r.body["items"].as_array().unwrap();
    assert!(items.iter().all(|i| !i["labels"].is_null()));
    let by_model = items.iter().filter(|i| i["label_source"].as_str().unwrap().starts_with("model:")).count();
    assert_eq!(by_model, f.tweets.len() - 100);

    // concurrent readers during a second retrain never see a mixed response
    label_first(&f, 120).await;
    let app = f.app.clone();
    let readers = tokio::spawn(async move {
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..60 {
            let r = get(&app, "/api/v1/tweets?limit=1000").await;
            assert_consistent(&r);
            seen.insert(r.stamped_version());
            tokio::task::yield_now().await;
        }
        seen
    });
    let job2 = retrain(&f.app).await;
    assert_eq!(job2["state"], "succeeded");
    readers.await.unwrap();
    let after = get(&f.app, "/api/v1/tweets?limit=1000").await;
    assert_consistent(&after);
    assert_eq!(after.stamped_version().as_deref(), job2["snapshot_version"].as_str());
}

pub async fn human_labels_override_model() {
    let f = fixture(160);
    label_first(&f, 100).await;
    assert_eq!(retrain(&f.app).await["state"], "succeeded");
    let (t, _) = &f.tweets[150];
    let view = get(&f.app, &format!("/api/v1/tweets/{}", t.id)).await;
    assert!(view.body["tweet"]["label_source"].as_str().unwrap().starts_with("model:"));
    assert_eq!(view.body["tweet"]["status"], "model_predicted");
    let predicted: TopicLabels = serde_json::from_value(view.body["tweet"]["labels"].clone()).unwrap();

    let mut flipped = predicted;
    flipped.0[Topic::Lockdown.index()] = !predicted.get(Topic::Lockdown);
    assert_eq!(annotate(&f.app, &t.id, "chandra", &flipped).await.status, StatusCode::OK);

    let view = get(&f.app, &format!("/api/v1/tweets/{}", t.id)).await;
    assert_eq!(view.body["tweet"]["label_source"], "chandra");
    assert_eq!(view.body["tweet"]["labels"], labels_json(&flipped));
    assert_eq!(view.body["tweet"]["status"], "human_validated");

    let day = t.created_at.format("%Y-%m-%d").to_string();
    let q = get(&f.app, &format!("/api/v1/tweets?topic=Lockdown&from={day}&to={day}&limit=1000")).await;
    let ids: Vec<&str> = q.body["items"].as_array().unwrap().iter().map(|i| i["id"].as_str().unwrap()).collect();
    assert_eq!(ids.contains(&t.id.as_str()), flipped.get(Topic::Lockdown));

    let tr = get(&f.app, &format!("/api/v1/trends?granularity=day&topic=Lockdown&from={day}&to={day}")).await;
    let want = f
        .state
        .store
        .query_tweets(
            &tweettopic::store::TweetFilter {
                topic: Some(Topic::Lockdown),
                from: Some(chrono::DateTime::parse_from_rfc3339(&format!("{day}T00:00:00Z")).unwrap().into()),
                to: Some(chrono::DateTime::parse_from_rfc3339(&format!("{day}T23:59:59Z")).unwrap().into()),
                status: None,
            },
            tweettopic::store::Page { offset: 0, limit: 1000 },
        )
        .unwrap()
        .total;
    assert_eq!(tr.body["buckets"][0]["count"].as_u64().unwrap() as usize, want);
}

pub async fn trends_pass_through() {
    let f = fixture(160);
    label_first(&f, 100).await;
    assert_eq!(retrain(&f.app).await["state"], "succeeded");
    let r = get(&f.app, "/api/v1/trends?granularity=week&topic=Vaccination&from=2021-08-01&to=2021-10-31").await;
    assert_eq!(r.status, StatusCode::OK);
    let from = chrono::DateTime::parse_from_rfc3339("2021-08-01T00:00:00Z").unwrap().into();
    let to = chrono::DateTime::parse_from_rfc3339("2021-10-31T23:59:59Z").unwrap().into();
    let direct = f.state.store.trend_series(Granularity::Week, Some(Topic::Vaccination), from, to).unwrap();
    assert_eq!(r.body["buckets"], serde_json::to_value(&direct).unwrap());
    assert!(direct.iter().map(|b| b.count).sum::<u64>() > 0);
    r.stamped_version();

    let all = get(&f.app, "/api/v1/trends").await;
    assert_eq!(all.status, StatusCode::OK);
    let total: u64 = all.body["buckets"].as_array().unwrap().iter().map(|b| b["count"].as_u64().unwrap()).sum();
    let labels: usize = f
        .state
        .store
        .query_tweets(&Default::default(), tweettopic::store::Page { offset: 0, limit: 1000 })
        .unwrap()
        .items
        .iter()
        .map(|v| v.labels.map_or(0, |l| l.count()))
        .sum();
    assert_eq!(total as usize, labels);
}

/// Held-out tweets are never corrected; their labels come from the model.
fn held_out_f1(f: &Fixture, items: &[Value], held: &[(StoredTweet, TopicLabels)]) -> f64 {
    let pred: Vec<TopicLabels> = held
        .iter()
        .map(|(t, _)| {
            let item = items.iter().find(|i| i["id"] == t.id.as_str()).unwrap();
            serde_json::from_value(item["labels"].clone()).unwrap()
        })
        .collect();
    let truth: Vec<TopicLabels> = held.iter().map(|h| h.1).collect();
    let _ = f;
    tweettopic::metrics::f1_scores(&pred, &truth).unwrap().averaged.weighted_f1
}

pub async fn more_corrections_do_not_hurt_held_out_f1() {
    let f = fixture(500);
    let held: Vec<_> = f.tweets[400..].to_vec();
    label_first(&f, 100).await;
    let first = retrain(&f.app).await;
    assert_eq!(first["state"], "succeeded");
    let r1 = get(&f.app, "/api/v1/tweets?limit=1000").await;
    let f1_before = held_out_f1(&f, r1.body["items"].as_array().unwrap(), &held);

    label_first(&f, 400).await;
    let second = retrain(&f.app).await;
    assert_eq!(second["state"], "succeeded");
    assert_ne!(first["snapshot_version"], second["snapshot_version"]);
    let r2 = get(&f.app, "/api/v1/tweets?limit=1000").await;
    assert_eq!(r2.stamped_version().as_deref(), second["snapshot_version"].as_str());
    let f1_after = held_out_f1(&f, r2.body["items"].as_array().unwrap(), &held);
    assert!(f1_after >= f1_before, "held-out weighted F1 fell from {f1_before} to {f1_after}");
}

pub async fn agreement_subset_and_kappa() {
    let f = fixture(40);
    let r = post(&f.app, "/api/v1/agreement-subset", json!({"n": 10, "seed": 3})).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.body);
    let ids: Vec<String> = r.body["ids"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    assert_eq!(ids.len(), 10);
    assert_eq!(post(&f.app, "/api/v1/agreement-subset", json!({"n": 10})).await.status, StatusCode::CONFLICT);
    assert_eq!(post(&f.app, "/api/v1/agreement-subset", json!({"n": 999, "replace": true})).await.status, StatusCode::BAD_REQUEST);
    assert_eq!(get(&f.app, "/api/v1/agreement-subset").await.body["ids"], json!(ids));

    assert_eq!(get(&f.app, "/api/v1/kappa").await.status, StatusCode::NOT_FOUND);
    let truth = |id: &str| f.tweets.iter().find(|t| t.0.id == id).unwrap().1;
    for id in &ids {
        annotate(&f.app, id, "ana", &truth(id)).await;
    }
    annotate(&f.app, &ids[0], "bikash", &truth(&ids[0])).await;
    let r = get(&f.app, "/api/v1/kappa").await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.body["missing"].as_array().unwrap().len(), 9);

    for id in &ids[1..] {
        annotate(&f.app, id, "bikash", &truth(id)).await;
    }
    let r = get(&f.app, "/api/v1/kappa").await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    assert_eq!((r.body["r"].as_u64(), r.body["N"].as_u64()), (Some(2), Some(10)));
    assert_eq!(r.body["per_label"].as_array().unwrap().len(), 8);
    for l in r.body["per_label"].as_array().unwrap() {
        assert!(l["value"].is_null() || l["value"].as_f64() == Some(1.0), "{l}");
    }
    if !r.body["mean_kappa"].is_null() {
        assert_eq!(r.body["mean_kappa"].as_f64(), Some(1.0));
    }
}

pub async fn model_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = AppConfig {
        store_path: dir.path().join("store.jsonl"),
        model_path: Some(dir.path().join("model.bin")),
        ..config()
    };
    let tweets = corpus(80);
    let version = {
        let state = Arc::new(AppState::open(cfg.clone()).unwrap());
        state.store.upsert_tweets(tweets.iter().map(|t| t.0.clone()).collect()).unwrap();
        let app = router(Arc::clone(&state));
        for (t, truth) in tweets.iter().take(50) {
            annotate(&app, &t.id, "ana", truth).await;
        }
        let job = retrain(&app).await;
        assert_eq!(job["state"], "succeeded");
        job["snapshot_version"].as_str().unwrap().to_string()
    };
    let state = Arc::new(AppState::open(cfg).unwrap());
    let app = router(state);
    let m = get(&app, "/api/v1/model").await;
    assert_eq!(m.body["version"], version.as_str());
    assert_eq!(get(&app, "/api/v1/metrics").await.body["model_version"], version.as_str());
    let r = get(&app, "/api/v1/tweets?limit=1000").await;
    assert_consistent(&r);
    assert_eq!(r.body["total"], 80);
}

pub async fn ingest_from_configured_source() {
    let dir = tempfile::tempdir().unwrap();
    let synth = generate(&SynthConfig { n: 30, distractor_rate: 0.5, ..SynthConfig::default() });
    let source = dir.path().join("incoming.jsonl");
    let lines: Vec<String> = synth.tweets.iter().map(|t| serde_json::to_string(t).unwrap()).collect();
    std::fs::write(&source, lines.join("\n") + "\n").unwrap();
    let kw = dir.path().join("keywords.txt");
    std::fs::write(&kw, synth.keyword_file()).unwrap();

    let unconfigured = fixture(5);
    let r = call(&unconfigured.app, Method::POST, "/api/v1/ingest", Some(TOKEN), None).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);

    let f = fixture_with(0, AppConfig { source_path: Some(source), keyword_file: Some(kw), ..config() });
    let r = call(&f.app, Method::POST, "/api/v1/ingest", Some(TOKEN), None).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    assert_eq!(r.body["fetched"].as_u64().unwrap() as usize, synth.tweets.len());
    assert_eq!(r.body["filtered_out"], 15);
    let written = r.body["written"].as_u64().unwrap() as usize;
    assert_eq!(written + r.body["too_short"].as_u64().unwrap() as usize, 30);
    assert_eq!(f.state.store.tweet_count(), written);
    let again = call(&f.app, Method::POST, "/api/v1/ingest", Some(TOKEN), Some(json!({}))).await;
    assert_eq!(again.body["written"], 0);
}

type Check = Pin<Box<dyn Future<Output = ()> + Send>>;
type CheckFn = fn() -> Check;

/// Every check, by name, for runners that want to report them one by one.
pub fn all_checks() -> Vec<(&'static str, CheckFn)> {
    vec![
        ("fresh deploy: 404 for model, metrics, kappa, jobs", || Box::pin(fresh_deploy_has_no_model())),
        ("query validation: 400 with allowed topics", || Box::pin(query_validation())),
        ("annotations: 401/403/404/422/400", || Box::pin(annotation_auth_and_validation())),
        ("correction lifecycle and idempotence", || Box::pin(correction_lifecycle_and_idempotence())),
        ("retrain with zero human labels fails fast", || Box::pin(retrain_without_supervision_fails_fast())),
        ("single-flight retrain returns 409", || Box::pin(single_flight_retrain())),
        ("snapshot swap and version stamping", || Box::pin(retrain_swaps_and_stamps_versions())),
        ("human labels override model labels", || Box::pin(human_labels_override_model())),
        ("trends pass through the store", || Box::pin(trends_pass_through())),
        ("more corrections keep held-out F1", || Box::pin(more_corrections_do_not_hurt_held_out_f1())),
        ("agreement subset and kappa", || Box::pin(agreement_subset_and_kappa())),
        ("model and metrics survive restart", || Box::pin(model_survives_restart())),
        ("ingest from configured source", || Box::pin(ingest_from_configured_source())),
    ]
}

pub fn uri_topic(t: Topic) -> String {
    uri_escape(t.name())
}
