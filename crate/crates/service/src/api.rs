//! Routes under `/api/v1`.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tweettopic::agreement::{agreement_subset, kappa_report};
use tweettopic::store::{AgreementSubset, AnnotationStatus, Granularity, Page, TweetFilter};
use tweettopic::topics::LabelsError;
use tweettopic::{Error, Topic, TopicLabels};

use crate::state::{now, AppState};

pub const ADMIN_HEADER: &str = "x-admin-token";
pub const VERSION_HEADER: &str = "x-model-version";

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({ "error": message.into() }),
        }
    }

    fn with(mut self, key: &str, value: Value) -> Self {
        self.body[key] = value;
        self
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn unknown_topic(name: &str, status: StatusCode) -> Self {
        Self::new(status, format!("unknown topic '{name}'")).with("allowed_topics", json!(Topic::names()))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::InvalidArgument(_) => StatusCode::BAD_REQUEST,
            Error::InvalidTransition(_) => StatusCode::CONFLICT,
            Error::IncompleteRatings { missing } => {
                return ApiError::new(StatusCode::CONFLICT, e.to_string()).with(
                    "missing",
                    json!(missing
                        .iter()
                        .map(|(t, r)| json!({"tweet_id": t, "rater_id": r}))
                        .collect::<Vec<_>>()),
                );
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{e}");
        }
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// JSON body plus the `X-Model-Version` header; `model_version` is also
/// written into the body.
struct Stamped {
    version: Option<String>,
    status: StatusCode,
    body: Value,
}

impl Stamped {
    fn new<T: Serialize>(version: Option<String>, body: &T) -> Self {
        let mut body = serde_json::to_value(body).expect("response serializes");
        if let Value::Object(map) = &mut body {
            map.insert("model_version".into(), json!(version));
        }
        Stamped {
            version,
            status: StatusCode::OK,
            body,
        }
    }

    fn status(mut self, status: StatusCode) -> Self {
        self.status = status;
        self
    }
}

impl IntoResponse for Stamped {
    fn into_response(self) -> Response {
        let mut resp = (self.status, Json(self.body)).into_response();
        if let Some(v) = self.version.and_then(|v| HeaderValue::from_str(&v).ok()) {
            resp.headers_mut().insert(VERSION_HEADER, v);
        }
        resp
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/tweets", get(list_tweets))
        .route("/tweets/{id}", get(get_tweet))
        .route("/trends", get(trends))
        .route("/model", get(model))
        .route("/metrics", get(metrics))
        .route("/kappa", get(kappa))
        .route("/annotations", post(annotate))
        .route("/proofread", post(proofread))
        .route("/retrain", post(start_retrain).get(list_jobs))
        .route("/retrain/{id}", get(get_job))
        .route("/agreement-subset", post(draw_subset).get(get_subset))
        .route("/ingest", post(ingest))
        .with_state(state);
    Router::new().nest("/api/v1", api)
}

fn require_admin(state: &AppState, headers: &HeaderMap) -> ApiResult<()> {
    let Some(given) = headers.get(ADMIN_HEADER) else {
        return Err(ApiError::new(StatusCode::UNAUTHORIZED, "missing X-Admin-Token header"));
    };
    let expected = state.config.admin_token.as_bytes();
    let given = given.as_bytes();
    // compare every byte so timing does not reveal the matching prefix
    let same = given.len() == expected.len()
        && given.iter().zip(expected).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0;
    if same {
        Ok(())
    } else {
        Err(ApiError::new(StatusCode::FORBIDDEN, "invalid admin token"))
    }
}

fn parse_body<T: DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    let value: Value =
        serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))?;
    serde_json::from_value(value).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))
}

/// Accepts RFC 3339, a naive `YYYY-MM-DDTHH:MM:SS` (read as UTC) or a bare
/// date. A bare date used as an upper bound covers the whole day.
fn parse_time(key: &str, s: &str, end_of_day: bool) -> ApiResult<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    if let Ok(t) = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S") {
        return Ok(t.and_utc());
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        let t = if end_of_day {
            d.and_hms_opt(23, 59, 59)
        } else {
            d.and_hms_opt(0, 0, 0)
        };
        return Ok(t.expect("valid time of day").and_utc());
    }
    Err(ApiError::bad_request(format!(
        "'{key}' must be an ISO-8601 date or timestamp, got '{s}'"
    )))
}

struct Params(HashMap<String, String>);

impl Params {
    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str).filter(|s| !s.is_empty())
    }

    fn topic(&self) -> ApiResult<Option<Topic>> {
        self.get("topic")
            .map(|s| s.parse::<Topic>().map_err(|_| ApiError::unknown_topic(s, StatusCode::BAD_REQUEST)))
            .transpose()
    }

    fn time(&self, key: &str, end_of_day: bool) -> ApiResult<Option<DateTime<Utc>>> {
        self.get(key).map(|s| parse_time(key, s, end_of_day)).transpose()
    }

    fn number(&self, key: &str, default: usize) -> ApiResult<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| ApiError::bad_request(format!("'{key}' must be a nonnegative integer, got '{s}'"))),
        }
    }

    fn window(&self) -> ApiResult<(Option<DateTime<Utc>>, Option<DateTime<Utc>>)> {
        let (from, to) = (self.time("from", false)?, self.time("to", true)?);
        if let (Some(f), Some(t)) = (from, to) {
            if f > t {
                return Err(ApiError::bad_request(format!("'from' ({f}) is after 'to' ({t})")));
            }
        }
        Ok((from, to))
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Stamped {
    Stamped::new(state.model_version(), &json!({ "status": "ok", "tweets": state.store.tweet_count() }))
}

async fn list_tweets(State(state): State<Arc<AppState>>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Stamped> {
    let q = Params(q);
    let (from, to) = q.window()?;
    let status = q
        .get("status")
        .map(|s| s.parse::<AnnotationStatus>().map_err(ApiError::bad_request))
        .transpose()?;
    let filter = TweetFilter {
        topic: q.topic()?,
        from,
        to,
        status,
    };
    let page = Page {
        offset: q.number("offset", 0)?,
        limit: q.number("limit", Page::default().limit)?,
    };
    let serving = state.serving();
    let result = state.store.query_tweets(&filter, page)?;
    Ok(Stamped::new(serving.as_ref().map(|s| s.version().to_string()), &result))
}

async fn get_tweet(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Stamped> {
    let serving = state.serving();
    let view = state
        .store
        .get_tweet(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("tweet '{id}' not found")))?;
    let records = state.store.current_records(&id)?;
    Ok(Stamped::new(
        serving.as_ref().map(|s| s.version().to_string()),
        &json!({ "tweet": view, "records": records }),
    ))
}

async fn trends(State(state): State<Arc<AppState>>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Stamped> {
    let q = Params(q);
    let granularity: Granularity = q
        .get("granularity")
        .unwrap_or("day")
        .parse()
        .map_err(ApiError::bad_request)?;
    let topic = q.topic()?;
    let (from, to) = q.window()?;
    let serving = state.serving();
    let version = serving.as_ref().map(|s| s.version().to_string());
    let bounds = match (from, to) {
        (Some(f), Some(t)) => Some((f, t)),
        _ => {
            let tweets = state.store.all_tweets();
            let lo = tweets.iter().map(|t| t.created_at).min();
            let hi = tweets.iter().map(|t| t.created_at).max();
            lo.zip(hi).map(|(lo, hi)| (from.unwrap_or(lo), to.unwrap_or(hi)))
        }
    };
    let buckets = match bounds {
        Some((f, t)) if f <= t => state.store.trend_series(granularity, topic, f, t)?,
        Some(_) | None => Vec::new(),
    };
    Ok(Stamped::new(
        version,
        &json!({
            "granularity": granularity,
            "topic": topic,
            "from": bounds.map(|b| b.0),
            "to": bounds.map(|b| b.1),
            "buckets": buckets,
        }),
    ))
}

async fn model(State(state): State<Arc<AppState>>) -> ApiResult<Stamped> {
    let serving = state.serving();
    let s = serving
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no model has been trained or loaded"))?;
    let snap = &s.snapshot;
    Ok(Stamped::new(
        Some(s.version().to_string()),
        &json!({
            "version": snap.version,
            "trained_on": snap.trained_on,
            "topics": Topic::names(),
            "threshold": Topic::ALL.iter().map(|t| (t.name(), snap.threshold[t.index()])).collect::<BTreeMap<_, _>>(),
            "extractor": snap.extractor,
            "hash_algorithm": tweettopic::features::HASH_ALGORITHM,
            "dim": snap.head.dim,
            "dropout": snap.head.dropout,
            "bn_momentum": snap.head.bn.momentum,
            "bn_eps": snap.head.bn.eps,
        }),
    ))
}

async fn metrics(State(state): State<Arc<AppState>>) -> ApiResult<Stamped> {
    let serving = state.serving();
    let m = serving
        .as_ref()
        .and_then(|s| s.metrics.clone())
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no evaluation report for the serving model"))?;
    Ok(Stamped::new(Some(m.model_version.clone()), &*m))
}

async fn kappa(State(state): State<Arc<AppState>>) -> ApiResult<Stamped> {
    let rows = state.store.agreement_ratings()?;
    let report = kappa_report(&rows).map_err(|e| match e {
        Error::InvalidArgument(m) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, m),
        other => other.into(),
    })?;
    let degenerate: Vec<Topic> = report.degenerate_topics();
    let mut body = serde_json::to_value(&report).expect("report serializes");
    body["degenerate_topics"] = json!(degenerate);
    Ok(Stamped::new(state.model_version(), &body))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationBody {
    tweet_id: String,
    rater_id: String,
    labels: BTreeMap<String, bool>,
}

async fn annotate(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult<Stamped> {
    require_admin(&state, &headers)?;
    let body: AnnotationBody = parse_body(&body)?;
    let labels = TopicLabels::try_from(body.labels).map_err(|e| match e {
        LabelsError::Unknown(name) => ApiError::unknown_topic(&name, StatusCode::UNPROCESSABLE_ENTITY),
        LabelsError::Missing(ref missing) => {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()).with("missing_topics", json!(missing))
        }
    })?;
    let serving = state.serving();
    let record = state
        .store
        .record_correction(&body.tweet_id, &body.rater_id, labels, now())?;
    Ok(Stamped::new(serving.as_ref().map(|s| s.version().to_string()), &json!({ "record": record })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProofreadBody {
    tweet_id: String,
    rater_id: String,
}

async fn proofread(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult<Stamped> {
    require_admin(&state, &headers)?;
    let body: ProofreadBody = parse_body(&body)?;
    let serving = state.serving();
    let record = state.store.proofread(&body.tweet_id, &body.rater_id, now())?;
    Ok(Stamped::new(serving.as_ref().map(|s| s.version().to_string()), &json!({ "record": record })))
}

async fn start_retrain(State(state): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult<Stamped> {
    require_admin(&state, &headers)?;
    let job = state.enqueue_retrain().map_err(|active| {
        ApiError::new(StatusCode::CONFLICT, format!("retrain job {} is already {:?}", active.job_id, active.state))
            .with("active_job", json!(active))
    })?;
    let id = job.job_id;
    let worker = Arc::clone(&state);
    tokio::task::spawn_blocking(move || worker.run_retrain(id));
    Ok(Stamped::new(state.model_version(), &job).status(StatusCode::ACCEPTED))
}

async fn get_job(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Stamped> {
    let job = id
        .parse()
        .ok()
        .and_then(|id| state.job(id))
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("retrain job '{id}' not found")))?;
    Ok(Stamped::new(state.model_version(), &job))
}

async fn list_jobs(State(state): State<Arc<AppState>>) -> Stamped {
    Stamped::new(state.model_version(), &json!({ "jobs": state.jobs() }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SubsetBody {
    n: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    replace: bool,
}

async fn draw_subset(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult<Stamped> {
    require_admin(&state, &headers)?;
    let body: SubsetBody = parse_body(&body)?;
    if !body.replace {
        if let Some(existing) = state.store.agreement_subset() {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "an agreement subset already exists; pass \"replace\": true to draw a new one",
            )
            .with("subset", json!(existing)));
        }
    }
    let ids: Vec<String> = state.store.all_tweets().into_iter().map(|t| t.id).collect();
    let subset = AgreementSubset {
        ids: agreement_subset(&ids, body.n, body.seed)?,
        seed: body.seed,
        created_at: now(),
    };
    state.store.set_agreement_subset(subset.clone())?;
    Ok(Stamped::new(state.model_version(), &subset).status(StatusCode::CREATED))
}

async fn get_subset(State(state): State<Arc<AppState>>) -> ApiResult<Stamped> {
    let subset = state
        .store
        .agreement_subset()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no agreement subset has been drawn"))?;
    Ok(Stamped::new(state.model_version(), &subset))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct IngestBody {
    since: Option<DateTime<Utc>>,
}

async fn ingest(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult<Stamped> {
    require_admin(&state, &headers)?;
    let body: IngestBody = if body.is_empty() { IngestBody::default() } else { parse_body(&body)? };
    if state.config.source_path.is_none() || state.config.keyword_file.is_none() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "ingest needs source_path and keyword_file in the service config",
        ));
    }
    let since = body.since.unwrap_or(DateTime::<Utc>::MIN_UTC);
    let worker = Arc::clone(&state);
    let summary = tokio::task::spawn_blocking(move || worker.ingest(since))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Stamped::new(state.model_version(), &summary))
}
