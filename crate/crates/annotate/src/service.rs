//! HTTP API over the task store.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Duration, Utc};
use mmhop_core::composer::TemplateRegistry;
use mmhop_core::dataset::{read_dataset_file, read_split_dir, write_dataset, Example};
use mmhop_core::distractor::AssembledContext;
use mmhop_core::eval::list_em_f1;
use mmhop_core::executor::{AnswererSet, Executor, GoldTypePredictor};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::config::Config;
use crate::ned::{diversity_bonus, normalized_edit_distance};
use crate::store::{Event, Queue, StoreError, Submission, TaskState, TaskStore};

/// Name recorded on exported paraphrases whose AI answer was requested.
pub const CHECKER: &str = "implicit-decomp/table-deterministic";

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Internal(String),
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Transition(t) => ApiError::Conflict(t.to_string()),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self {
            ApiError::UnknownTask(_) => StatusCode::NOT_FOUND,
            ApiError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

pub type Clock = Box<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub struct App {
    examples: Vec<Example>,
    index: BTreeMap<String, usize>,
    registry: TemplateRegistry,
    answerers: AnswererSet,
    store: RwLock<TaskStore>,
    lease: Duration,
    clock: Clock,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("dataset: {0}")]
    Dataset(#[from] mmhop_core::dataset::DatasetError),
    #[error("templates: {0}")]
    Templates(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl App {
    pub fn new(examples: Vec<Example>, registry: TemplateRegistry, store: TaskStore, lease: Duration, clock: Clock) -> Self {
        let index = examples.iter().enumerate().map(|(i, e)| (e.qid.clone(), i)).collect();
        let answerers = AnswererSet::table_deterministic(&registry);
        App {
            examples,
            index,
            registry,
            answerers,
            store: RwLock::new(store),
            lease,
            clock,
        }
    }

    /// Loads the dataset, registry and store a config names.
    pub fn from_config(c: &Config) -> Result<Self, LoadError> {
        let examples = if c.dataset.is_dir() {
            read_split_dir(&c.dataset)?.1
        } else {
            read_dataset_file(&c.dataset)?
        };
        let registry = match &c.templates {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| LoadError::Templates(format!("{}: {e}", p.display())))?;
                TemplateRegistry::from_json(&text).map_err(|e| LoadError::Templates(e.to_string()))?
            }
            None => TemplateRegistry::default(),
        };
        let store = TaskStore::open(&c.store, examples.iter().map(|e| e.qid.as_str()))?;
        Ok(Self::new(
            examples,
            registry,
            store,
            Duration::minutes(c.lease_minutes),
            Box::new(Utc::now),
        ))
    }

    fn example(&self, qid: &str) -> Result<&Example, ApiError> {
        self.index
            .get(qid)
            .map(|&i| &self.examples[i])
            .ok_or_else(|| ApiError::UnknownTask(qid.to_string()))
    }

    fn view(&self, store: &TaskStore, ex: &Example) -> TaskView {
        let status = store.get(&ex.qid).expect("every example has a task");
        let two_hop = self.registry.get(&ex.question_type).is_some_and(|t| t.hop_plan.len() == 2);
        TaskView {
            qid: ex.qid.clone(),
            pl_question: ex.pl_question.clone(),
            question_type: ex.question_type.clone(),
            state: status.state,
            bridge_answer: two_hop.then(|| ex.intermediate_answers.as_ref().map(|a| a.values.clone())).flatten(),
            answers: ex.answers.values.clone(),
            context: ex.context.clone(),
            submissions: status.submissions.clone(),
            lease_until: status.live_lease((self.clock)()).map(|l| l.until),
        }
    }

    /// Whether the executor answers `text` correctly for this example.
    fn answers_correctly(&self, ex: &Example, text: &str) -> bool {
        let exec = Executor {
            registry: &self.registry,
            answerers: &self.answerers,
            predictor: &GoldTypePredictor,
        };
        exec.implicit_decomp(ex, text)
            .map(|p| list_em_f1(&ex.answers.values, &p).0 == 1.0)
            .unwrap_or(false)
    }

    /// The dataset with every validated paraphrase merged in.
    pub fn export(&self) -> Vec<Example> {
        let store = self.store.read().expect("store lock");
        self.examples
            .iter()
            .map(|e| {
                let mut e = e.clone();
                let status = store.get(&e.qid).expect("every example has a task");
                if let Some(a) = status.validated_attempt {
                    let s = &status.submissions[a as usize - 1];
                    e.nl_question = Some(s.nl_text.clone());
                    e.nl_checker = s.checked_by.clone();
                }
                e
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskView {
    pub qid: String,
    pub pl_question: String,
    pub question_type: String,
    pub state: TaskState,
    /// Hop-1 answers, present for two-hop questions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bridge_answer: Option<Vec<String>>,
    pub answers: Vec<String>,
    pub context: AssembledContext,
    pub submissions: Vec<Submission>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lease_until: Option<DateTime<Utc>>,
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    session: String,
    #[serde(default = "paraphrase_queue")]
    queue: Queue,
}

fn paraphrase_queue() -> Queue {
    Queue::Paraphrase
}

/// Leases the first task of the queue nobody else holds; a session asking
/// again gets its own live lease back.
async fn next_task(State(app): State<Arc<App>>, Query(q): Query<NextQuery>) -> Result<Response, ApiError> {
    let now = (app.clock)();
    let mut store = app.store.write().expect("store lock");
    let mut pick = None;
    for ex in &app.examples {
        let status = store.get(&ex.qid).expect("every example has a task");
        if !q.queue.serves(status.state) {
            continue;
        }
        match status.live_lease(now) {
            Some(l) if l.session == q.session => {
                pick = Some(ex);
                break;
            }
            Some(_) => {}
            None => {
                if pick.is_none() {
                    pick = Some(ex);
                }
            }
        }
    }
    let Some(ex) = pick else {
        return Ok(StatusCode::NO_CONTENT.into_response());
    };
    store.append(
        &ex.qid,
        Event::Leased {
            session: q.session,
            queue: q.queue,
            until: now + app.lease,
        },
    )?;
    Ok(Json(app.view(&store, ex)).into_response())
}

async fn get_task(State(app): State<Arc<App>>, Path(qid): Path<String>) -> Result<Json<TaskView>, ApiError> {
    let ex = app.example(&qid)?;
    let store = app.store.read().expect("store lock");
    Ok(Json(app.view(&store, ex)))
}

#[derive(Debug, Deserialize)]
struct NedRequest {
    text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NedFeedback {
    pub ned: f64,
    pub diversity_bonus: bool,
}

/// Live feedback while typing; nothing is stored.
async fn ned(State(app): State<Arc<App>>, Path(qid): Path<String>, Json(r): Json<NedRequest>) -> Result<Json<NedFeedback>, ApiError> {
    let ex = app.example(&qid)?;
    let ned = normalized_edit_distance(&ex.pl_question, &r.text);
    Ok(Json(NedFeedback {
        ned,
        diversity_bonus: diversity_bonus(ned),
    }))
}

#[derive(Debug, Deserialize)]
struct ParaphraseRequest {
    nl_text: String,
    #[serde(default)]
    annotator: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ParaphraseFeedback {
    pub attempt_number: u32,
    pub ned: f64,
    pub diversity_bonus: bool,
    pub ai_answer_available: bool,
}

async fn paraphrase(
    State(app): State<Arc<App>>,
    Path(qid): Path<String>,
    Json(r): Json<ParaphraseRequest>,
) -> Result<Json<ParaphraseFeedback>, ApiError> {
    let ex = app.example(&qid)?;
    if r.nl_text.trim().is_empty() {
        return Err(ApiError::Invalid("paraphrase text is empty".into()));
    }
    let ned = normalized_edit_distance(&ex.pl_question, &r.nl_text);
    let mut store = app.store.write().expect("store lock");
    let status = store.get(&qid).expect("every example has a task");
    let attempt = status.submissions.len() as u32 + 1;
    store.append(
        &qid,
        Event::Submitted {
            attempt,
            nl_text: r.nl_text,
            ned,
            diversity_bonus: diversity_bonus(ned),
            annotator: r.annotator,
            at: (app.clock)(),
        },
    )?;
    Ok(Json(ParaphraseFeedback {
        attempt_number: attempt,
        ned,
        diversity_bonus: diversity_bonus(ned),
        ai_answer_available: true,
    }))
}

#[derive(Debug, Default, Deserialize)]
struct AiCheckRequest {
    #[serde(default)]
    attempt_number: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AiCheck {
    pub attempt_number: u32,
    pub first_attempt_correct: bool,
    pub this_attempt_correct: bool,
    pub adversarial_bonus: bool,
    pub checker: String,
}

/// Runs the baseline on the first and the given (default latest) attempt.
async fn ai_check(
    State(app): State<Arc<App>>,
    Path(qid): Path<String>,
    body: Option<Json<AiCheckRequest>>,
) -> Result<Json<AiCheck>, ApiError> {
    let ex = app.example(&qid)?;
    let r = body.map(|b| b.0).unwrap_or_default();
    let (first, this, attempt) = {
        let store = app.store.read().expect("store lock");
        let subs = &store.get(&qid).expect("every example has a task").submissions;
        let Some(first) = subs.first() else {
            return Err(ApiError::Conflict("no paraphrase has been submitted".into()));
        };
        let attempt = r.attempt_number.unwrap_or(subs.len() as u32);
        let this = subs
            .get((attempt as usize).wrapping_sub(1))
            .ok_or_else(|| ApiError::Invalid(format!("attempt {attempt} does not exist")))?;
        (first.nl_text.clone(), this.nl_text.clone(), attempt)
    };
    let first_ok = app.answers_correctly(ex, &first);
    let this_ok = app.answers_correctly(ex, &this);
    let check = AiCheck {
        attempt_number: attempt,
        first_attempt_correct: first_ok,
        this_attempt_correct: this_ok,
        adversarial_bonus: first_ok && !this_ok,
        checker: CHECKER.into(),
    };
    app.store.write().expect("store lock").append(
        &qid,
        Event::AiChecked {
            attempt,
            first_attempt_correct: first_ok,
            this_attempt_correct: this_ok,
            adversarial_bonus: check.adversarial_bonus,
            checker: CHECKER.into(),
            at: (app.clock)(),
        },
    )?;
    Ok(Json(check))
}

#[derive(Debug, Deserialize)]
struct Verdict {
    meaning_preserved: bool,
    naturalness: u8,
    #[serde(default)]
    validator: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VerdictResult {
    pub verdict: String,
    pub state: TaskState,
}

async fn validate(State(app): State<Arc<App>>, Path(qid): Path<String>, Json(v): Json<Verdict>) -> Result<Json<VerdictResult>, ApiError> {
    app.example(&qid)?;
    if !(1..=5).contains(&v.naturalness) {
        return Err(ApiError::Invalid("naturalness must be 1 to 5".into()));
    }
    let mut store = app.store.write().expect("store lock");
    let attempt = store.get(&qid).expect("every example has a task").submissions.len() as u32;
    store.append(
        &qid,
        Event::Validated {
            attempt,
            meaning_preserved: v.meaning_preserved,
            naturalness: v.naturalness,
            validator: v.validator,
            at: (app.clock)(),
        },
    )?;
    Ok(Json(VerdictResult {
        verdict: if v.meaning_preserved { "validated" } else { "rejected" }.into(),
        state: store.get(&qid).expect("every example has a task").state,
    }))
}

async fn export(State(app): State<Arc<App>>) -> impl IntoResponse {
    (
        [(header::CONTENT_TYPE, HeaderValue::from_static("application/x-ndjson"))],
        write_dataset(&app.export()),
    )
}

pub fn router(app: Arc<App>, cors_origins: &[String]) -> Router {
    let origins: Vec<HeaderValue> = cors_origins.iter().filter_map(|o| o.parse().ok()).collect();
    let cors = CorsLayer::new()
        .allow_origin(AllowOrigin::list(origins))
        .allow_methods(Any)
        .allow_headers(Any);
    Router::new()
        .route("/tasks/next", get(next_task))
        .route("/tasks/{qid}", get(get_task))
        .route("/tasks/{qid}/ned", post(ned))
        .route("/tasks/{qid}/paraphrase", post(paraphrase))
        .route("/tasks/{qid}/ai-check", post(ai_check))
        .route("/tasks/{qid}/validate", post(validate))
        .route("/export", get(export))
        .layer(cors)
        .with_state(app)
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server: {0}")]
    Server(std::io::Error),
}

/// Loads everything the config names and serves until the process ends.
pub async fn serve(config: &Config) -> Result<(), ServeError> {
    let app = Arc::new(App::from_config(config)?);
    let addr = format!("{}:{}", config.host, config.port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })?;
    axum::serve(listener, router(app, &config.cors_origins))
        .await
        .map_err(ServeError::Server)
}
