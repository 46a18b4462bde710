use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::json;

use hepx_core::induction::{induce_kb, tree_to_rules};
use hepx_core::lang::{format_experience_report, serialize_audit, serialize_rule};
use hepx_core::learner::{
    experience_generalize, install_induced_rules, subsume_generalize, ExperienceOptions, GeneralizationReport,
    LearnerError,
};
use hepx_core::model::{Actor, CaseRecord, Condition, Fact, KnowledgeBase, Rule};

use crate::error::{ApiError, JsonBody, OptionalJsonBody};
use crate::AppState;

#[derive(Debug, Serialize)]
pub struct RuleView {
    pub id: String,
    pub text: String,
    pub premises: Vec<Condition>,
    pub conclusion: Fact,
    pub support: u64,
    pub firings: u64,
    pub experience: u64,
    pub origin: &'static str,
}

impl From<&Rule> for RuleView {
    fn from(r: &Rule) -> Self {
        Self {
            id: r.id.clone(),
            text: serialize_rule(r),
            premises: r.premises.clone(),
            conclusion: r.conclusion.clone(),
            support: r.stats.support,
            firings: r.stats.firings,
            experience: r.experience(),
            origin: r.origin.as_str(),
        }
    }
}

pub async fn rules(State(state): State<Arc<AppState>>) -> Json<Vec<RuleView>> {
    Json(state.kb.snapshot().rules.iter().map(RuleView::from).collect())
}

pub async fn rule(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<RuleView>, ApiError> {
    let kb = state.kb.snapshot();
    kb.rule(&id)
        .map(|r| Json(RuleView::from(r)))
        .ok_or_else(|| LearnerError::UnknownRule { id }.into())
}

pub async fn cases(State(state): State<Arc<AppState>>) -> Json<Vec<CaseRecord>> {
    Json(state.kb.snapshot().cases.clone())
}

#[derive(Debug, Serialize)]
pub struct AuditView {
    pub timestamp: String,
    pub actor: String,
    pub action: &'static str,
    pub rule_ids: Vec<String>,
    /// The entry in `.kb` file form.
    pub line: String,
}

pub async fn audit(State(state): State<Arc<AppState>>) -> Json<Vec<AuditView>> {
    let kb = state.kb.snapshot();
    Json(
        kb.audit
            .iter()
            .map(|e| AuditView {
                timestamp: e.timestamp.to_rfc3339(),
                actor: match &e.actor {
                    Actor::System => "system".into(),
                    Actor::Expert(name) => format!("expert:{name}"),
                },
                action: e.action.as_str(),
                rule_ids: e.rule_ids.clone(),
                line: serialize_audit(e),
            })
            .collect(),
    )
}

fn unprocessable(code: &str, message: impl Into<String>) -> ApiError {
    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
}

fn report_of(kb: &KnowledgeBase) -> Result<(String, Vec<Rule>, Vec<String>), ApiError> {
    let induced = induce_kb(kb).map_err(|e| unprocessable("induction_failed", e.to_string()))?;
    let compiled = tree_to_rules(&induced.tree, &kb.goal_attribute, kb.allow_defaults);
    let diagnostics = induced
        .diagnostics
        .iter()
        .chain(&compiled.diagnostics)
        .map(ToString::to_string)
        .collect();
    Ok((format_experience_report(&induced.tree), compiled.rules, diagnostics))
}

pub async fn experience_report(State(state): State<Arc<AppState>>) -> Result<Json<serde_json::Value>, ApiError> {
    let (report, _, _) = report_of(&state.kb.snapshot())?;
    Ok(Json(json!({ "report": report })))
}

#[derive(Debug, Default, Deserialize)]
pub struct InduceRequest {
    /// Replace the induced goal rules in the knowledge base.
    #[serde(default)]
    emit_rules: bool,
}

#[derive(Debug, Serialize)]
pub struct InduceResponse {
    pub report: String,
    pub rules: Vec<RuleView>,
    pub diagnostics: Vec<String>,
    pub emitted: bool,
}

pub async fn induce(
    State(state): State<Arc<AppState>>,
    OptionalJsonBody(req): OptionalJsonBody<InduceRequest>,
) -> Result<Json<InduceResponse>, ApiError> {
    let (report, rules, diagnostics) = report_of(&state.kb.snapshot())?;
    if req.emit_rules {
        let emitted = rules.clone();
        state.kb.mutate::<_, ApiError>(|kb| {
            install_induced_rules(kb, emitted);
            Ok(())
        })?;
    }
    Ok(Json(InduceResponse {
        report,
        rules: rules.iter().map(RuleView::from).collect(),
        diagnostics,
        emitted: req.emit_rules,
    }))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeParam {
    Subsume,
    Experience,
}

#[derive(Debug, Deserialize)]
pub struct GeneralizeRequest {
    mode: ModeParam,
    threshold: Option<u64>,
    max_minority: Option<u64>,
    #[serde(default)]
    dry_run: bool,
}

pub async fn generalize(
    State(state): State<Arc<AppState>>,
    JsonBody(req): JsonBody<GeneralizeRequest>,
) -> Result<Json<GeneralizationReport>, ApiError> {
    let defaults = ExperienceOptions::default();
    let options = ExperienceOptions {
        threshold: req.threshold.unwrap_or(defaults.threshold),
        max_minority: req.max_minority.unwrap_or(defaults.max_minority),
    };
    let run = |kb: &mut KnowledgeBase| -> Result<GeneralizationReport, LearnerError> {
        match req.mode {
            ModeParam::Subsume => Ok(subsume_generalize(kb)),
            ModeParam::Experience => experience_generalize(kb, options),
        }
    };
    let report = if req.dry_run {
        let mut scratch = (*state.kb.snapshot()).clone();
        run(&mut scratch)?
    } else {
        state.kb.mutate(run)?
    };
    Ok(Json(report))
}
