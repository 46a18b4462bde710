use std::sync::Arc;
use std::time::Instant;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use hepx_core::inference::{Outcome, Session, SessionStatus, UNKNOWN_ANSWER};
use hepx_core::learner::{
    abort_discovery, commit_discovery, propose_discovery, record_firings, DiscoveryProposal, DiscoveryTemplate,
    ValidationResult,
};
use hepx_core::model::{Condition, Fact, KnowledgeBase};

use crate::error::{ApiError, JsonBody, OptionalJsonBody};
use crate::{AppState, Slot};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionView {
    pub attribute: String,
    pub prompt: String,
    /// Allowed answers, `unknown` last.
    pub answers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultView {
    pub fact: Fact,
    pub advice: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub goal: String,
    pub status: String,
    /// Answers applied so far; the next answer carries `seq + 1`.
    pub seq: u64,
    pub question: Option<QuestionView>,
    pub result: Option<ResultView>,
    /// For unknown sessions, the premise sets that failed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing: Vec<Vec<Condition>>,
}

impl SessionView {
    pub fn of(session: &Session, seq: u64, kb: &KnowledgeBase) -> Self {
        let question = session.pending().map(|q| {
            let attr = kb.attribute(&q.attribute);
            let mut answers = attr.map(|a| a.domain.clone()).unwrap_or_default();
            answers.push(UNKNOWN_ANSWER.to_string());
            QuestionView {
                attribute: q.attribute.clone(),
                prompt: attr.map(|a| a.prompt_text()).unwrap_or_else(|| q.attribute.clone()),
                answers,
            }
        });
        let result = session.result().map(|f| ResultView {
            fact: f.clone(),
            advice: kb.advice_for(f).map(str::to_string),
        });
        let missing = match session.outcome() {
            Some(Outcome::Unknown { missing }) => missing.clone(),
            _ => Vec::new(),
        };
        Self {
            id: session.id.clone(),
            goal: session.goal.clone(),
            status: session.status().to_string(),
            seq,
            question,
            result,
            missing,
        }
    }
}

/// Credits the session's fired rules once it concludes. Rules removed
/// since they fired are skipped.
fn record_if_concluded(state: &AppState, slot: &mut Slot) -> Result<(), ApiError> {
    if slot.recorded || slot.session.status() != SessionStatus::Concluded {
        return Ok(());
    }
    let fired = slot.session.fired_rules().to_vec();
    if !fired.is_empty() {
        state.kb.mutate(|kb| {
            let present: Vec<String> = fired.iter().filter(|id| kb.rule(id).is_some()).cloned().collect();
            record_firings(kb, &present)
        })?;
    }
    slot.recorded = true;
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
pub struct CreateRequest {
    goal: Option<String>,
    #[serde(default)]
    given: Vec<Fact>,
}

pub async fn create(
    State(state): State<Arc<AppState>>,
    OptionalJsonBody(req): OptionalJsonBody<CreateRequest>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let kb = state.kb.snapshot();
    let goal = req.goal.unwrap_or_else(|| kb.goal_attribute.clone());
    let id = uuid::Uuid::new_v4().to_string();
    let session = Session::start(id.clone(), &kb, &goal, &req.given)?;
    let mut slot = Slot {
        session,
        seq: 0,
        last_answer: None,
        recorded: false,
        touched: Instant::now(),
    };
    record_if_concluded(&state, &mut slot)?;
    let view = SessionView::of(&slot.session, 0, &state.kb.snapshot());
    state.insert(id, slot);
    Ok((StatusCode::CREATED, Json(view)))
}

pub async fn show(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let slot = state.slot(&id)?;
    let mut slot = slot.lock().unwrap_or_else(|e| e.into_inner());
    slot.touched = Instant::now();
    Ok(Json(SessionView::of(&slot.session, slot.seq, &state.kb.snapshot())))
}

#[derive(Debug, Deserialize)]
pub struct AnswerRequest {
    attribute: String,
    value: String,
    /// Sequence number of this answer. Resending the previous number with
    /// the same answer returns the current view unchanged.
    seq: Option<u64>,
}

pub async fn answer(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<AnswerRequest>,
) -> Result<Json<SessionView>, ApiError> {
    let slot = state.slot(&id)?;
    let mut slot = slot.lock().unwrap_or_else(|e| e.into_inner());
    slot.touched = Instant::now();
    let this = (req.attribute.clone(), req.value.clone());
    let replay = slot.last_answer.as_ref() == Some(&this);
    match req.seq {
        Some(seq) if seq == slot.seq && replay => {
            return Ok(Json(SessionView::of(&slot.session, slot.seq, &state.kb.snapshot())));
        }
        Some(seq) if seq != slot.seq + 1 => {
            return Err(ApiError::new(StatusCode::CONFLICT, "stale_sequence", "answer sequence number is out of date")
                .with_details(json!({ "expected": slot.seq + 1, "received": seq })));
        }
        None if replay && slot.session.pending().is_none_or(|q| q.attribute != req.attribute) => {
            return Ok(Json(SessionView::of(&slot.session, slot.seq, &state.kb.snapshot())));
        }
        _ => {}
    }
    let kb = state.kb.snapshot();
    slot.session.answer(&kb, &req.attribute, &req.value)?;
    slot.seq += 1;
    slot.last_answer = Some(this);
    record_if_concluded(&state, &mut slot)?;
    Ok(Json(SessionView::of(&slot.session, slot.seq, &state.kb.snapshot())))
}

#[derive(Debug, Deserialize)]
pub struct ExplanationQuery {
    mode: Option<String>,
}

pub async fn explanation(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<ExplanationQuery>,
) -> Result<Json<Value>, ApiError> {
    let slot = state.slot(&id)?;
    let mut slot = slot.lock().unwrap_or_else(|e| e.into_inner());
    slot.touched = Instant::now();
    match q.mode.as_deref() {
        Some("why") => {
            let why = slot.session.explain_why(&state.kb.snapshot())?;
            let mut body = serde_json::to_value(&why).unwrap_or(Value::Null);
            body["mode"] = json!("why");
            body["text"] = json!(why.to_string());
            Ok(Json(body))
        }
        Some("how") => {
            let text = slot.session.explain_how()?;
            Ok(Json(json!({ "mode": "how", "text": text })))
        }
        other => Err(
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_mode", "mode must be 'why' or 'how'")
                .with_details(json!({ "mode": other })),
        ),
    }
}

pub async fn propose(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<DiscoveryTemplate>, ApiError> {
    let slot = state.slot(&id)?;
    let mut slot = slot.lock().unwrap_or_else(|e| e.into_inner());
    slot.touched = Instant::now();
    let kb = state.kb.snapshot();
    Ok(Json(propose_discovery(&kb, &mut slot.session)?))
}

pub async fn abort(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let slot = state.slot(&id)?;
    let mut slot = slot.lock().unwrap_or_else(|e| e.into_inner());
    slot.touched = Instant::now();
    abort_discovery(&mut slot.session)?;
    Ok(Json(SessionView::of(&slot.session, slot.seq, &state.kb.snapshot())))
}

#[derive(Debug, Serialize)]
pub struct CommitResponse {
    #[serde(flatten)]
    pub result: ValidationResult,
    pub session: SessionView,
}

pub async fn commit(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    JsonBody(proposal): JsonBody<DiscoveryProposal>,
) -> Result<Json<CommitResponse>, ApiError> {
    let slot = state.slot(&id)?;
    let mut slot = slot.lock().unwrap_or_else(|e| e.into_inner());
    slot.touched = Instant::now();
    // Work on a copy so a failed write leaves the session as it was.
    let mut session = slot.session.clone();
    let result = state.kb.mutate(|kb| commit_discovery(kb, &mut session, &proposal))?;
    let concluded = session.status() == SessionStatus::Concluded;
    slot.session = session;
    // The re-run after a discovery is not credited as experience.
    slot.recorded |= concluded;
    let view = SessionView::of(&slot.session, slot.seq, &state.kb.snapshot());
    Ok(Json(CommitResponse { result, session: view }))
}
