use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::inference::{Session, SessionStatus};
use crate::model::{
    Actor, AttributeDef, AuditAction, AuditEntry, Condition, Fact, KnowledgeBase, Rule, RuleOrigin,
};

use super::LearnerError;

/// Pre-filled proposal shown to the expert when a session ends unknown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DiscoveryTemplate {
    pub session_id: String,
    /// Facts established in the session; candidate premises.
    pub premises: Vec<Fact>,
    pub goal: String,
    /// Values the conclusion may take.
    pub conclusions: Vec<String>,
}

/// A new rule offered by an expert.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscoveryProposal {
    pub premises: Vec<Condition>,
    pub conclusion: Fact,
    pub expert: String,
    /// Further domain values for attributes the proposal introduces.
    #[serde(default)]
    pub alternatives: BTreeMap<String, Vec<String>>,
    /// Accept even when stored cases contradict the rule.
    #[serde(default, alias = "override")]
    pub override_conflicts: bool,
    /// Remove existing rules the new rule subsumes.
    #[serde(default)]
    pub replace_subsumed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationStatus {
    Accepted,
    Conflicts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationResult {
    pub status: ValidationStatus,
    /// Stored cases matching every premise but labelled otherwise.
    pub conflicting_cases: Vec<u32>,
    /// Existing rules with the same conclusion and a premise superset.
    pub subsumed_existing: Vec<String>,
    /// Id of the committed rule.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<String>,
}

/// Moves an unknown session to `awaiting_discovery` and returns a template
/// holding its facts.
pub fn propose_discovery(kb: &KnowledgeBase, session: &mut Session) -> Result<DiscoveryTemplate, LearnerError> {
    session.require_status(SessionStatus::Unknown)?;
    session.set_status(SessionStatus::AwaitingDiscovery);
    Ok(DiscoveryTemplate {
        session_id: session.id.clone(),
        premises: session.memory().facts().cloned().collect(),
        goal: session.goal.clone(),
        conclusions: kb
            .attribute(&session.goal)
            .map(|a| a.domain.clone())
            .unwrap_or_default(),
    })
}

/// Returns an awaiting session to `unknown`; the knowledge base is not
/// touched.
pub fn abort_discovery(session: &mut Session) -> Result<(), LearnerError> {
    session.require_status(SessionStatus::AwaitingDiscovery)?;
    session.set_status(SessionStatus::Unknown);
    Ok(())
}

fn malformed(reason: impl Into<String>) -> LearnerError {
    LearnerError::MalformedProposal { reason: reason.into() }
}

fn check_shape(kb: &KnowledgeBase, goal: &str, p: &DiscoveryProposal) -> Result<(), LearnerError> {
    if p.conclusion.attribute != goal {
        return Err(LearnerError::ConclusionNotGoal {
            attribute: p.conclusion.attribute.clone(),
            goal: goal.to_string(),
        });
    }
    if !kb.attribute(goal).is_some_and(|a| a.allows(&p.conclusion.value)) {
        return Err(malformed(format!("'{}' is not a value of {goal}", p.conclusion.value)));
    }
    if p.expert.trim().is_empty() {
        return Err(malformed("expert identity is required"));
    }
    if p.premises.is_empty() {
        return Err(malformed("at least one premise is required"));
    }
    let mut seen = BTreeSet::new();
    for c in &p.premises {
        if !crate::lang::is_identifier(&c.attribute) || !crate::lang::is_identifier(&c.value) {
            return Err(malformed(format!("'{c}' is not a valid condition")));
        }
        if !seen.insert(c.attribute.as_str()) {
            return Err(malformed(format!("attribute '{}' appears twice", c.attribute)));
        }
        if c.attribute == goal {
            return Err(malformed("the goal cannot be a premise"));
        }
        if let Some(a) = kb.attribute(&c.attribute) {
            if !a.allows(&c.value) {
                return Err(LearnerError::Inference(crate::inference::InferenceError::InvalidValue {
                    attribute: c.attribute.clone(),
                    value: c.value.clone(),
                }));
            }
        }
    }
    for (attr, values) in &p.alternatives {
        if kb.attribute(attr).is_some() || !seen.contains(attr.as_str()) {
            return Err(malformed(format!("alternatives given for '{attr}', which is not a new premise attribute")));
        }
        if let Some(v) = values.iter().find(|v| !crate::lang::is_identifier(v)) {
            return Err(malformed(format!("'{v}' is not a valid value")));
        }
    }
    Ok(())
}

/// Checks a proposal against the stored cases without changing anything.
/// A case lacking one of the premise attributes does not match.
pub fn validate_discovery(kb: &KnowledgeBase, proposal: &DiscoveryProposal) -> ValidationResult {
    let rule = Rule::new("", proposal.premises.clone(), proposal.conclusion.clone());
    let conflicting_cases: Vec<u32> = kb
        .cases
        .iter()
        .filter(|c| rule.matches_case(c) && c.label.value != proposal.conclusion.value)
        .map(|c| c.id)
        .collect();
    let subsumed_existing = kb
        .rules
        .iter()
        .filter(|r| r.conclusion == proposal.conclusion && rule.premises_subset_of(r))
        .map(|r| r.id.clone())
        .collect();
    let status = if conflicting_cases.is_empty() || proposal.override_conflicts {
        ValidationStatus::Accepted
    } else {
        ValidationStatus::Conflicts
    };
    ValidationResult {
        status,
        conflicting_cases,
        subsumed_existing,
        rule_id: None,
    }
}

/// Validates and, when accepted, appends the proposal as a discovered rule
/// and re-runs the session.
///
/// New premise attributes join the schema as askable, with the given value
/// plus any declared alternatives. Premises the session does not already
/// hold are added to it as given facts. On acceptance exactly one audit
/// entry is written; on conflicts nothing changes.
pub fn commit_discovery(
    kb: &mut KnowledgeBase,
    session: &mut Session,
    proposal: &DiscoveryProposal,
) -> Result<ValidationResult, LearnerError> {
    if !matches!(session.status(), SessionStatus::AwaitingDiscovery | SessionStatus::Unknown) {
        return Err(crate::inference::InferenceError::WrongState {
            expected: SessionStatus::AwaitingDiscovery.to_string(),
            actual: session.status().to_string(),
        }
        .into());
    }
    check_shape(kb, &session.goal, proposal)?;
    for c in &proposal.premises {
        if let Some(v) = session.memory().value_of(&c.attribute) {
            if v != c.value {
                return Err(malformed(format!("premise {c} contradicts session fact {}={v}", c.attribute)));
            }
        }
    }
    let mut result = validate_discovery(kb, proposal);
    if result.status == ValidationStatus::Conflicts {
        return Ok(result);
    }

    for c in &proposal.premises {
        if kb.attribute(&c.attribute).is_none() {
            let mut domain = vec![c.value.clone()];
            for v in proposal.alternatives.get(&c.attribute).into_iter().flatten() {
                if !domain.contains(v) {
                    domain.push(v.clone());
                }
            }
            kb.schema.push(AttributeDef {
                name: c.attribute.clone(),
                domain,
                askable: true,
                prompt: None,
            });
        }
    }
    let id = kb.next_rule_id("d");
    let rule = Rule::new(id.clone(), proposal.premises.clone(), proposal.conclusion.clone())
        .with_origin(RuleOrigin::Discovered);
    let mut ids = vec![id.clone()];
    if proposal.replace_subsumed {
        kb.rules.retain(|r| !result.subsumed_existing.contains(&r.id));
        ids.extend(result.subsumed_existing.iter().cloned());
    }
    kb.rules.push(rule.clone());
    kb.record(AuditEntry::now(
        Actor::Expert(proposal.expert.clone()),
        AuditAction::RuleAdded,
        ids,
        vec![rule],
    ));

    let missing: Vec<Fact> = proposal
        .premises
        .iter()
        .filter(|c| !session.memory().holds(c))
        .cloned()
        .collect();
    session.add_given(&missing)?;
    session.run(kb)?;
    result.rule_id = Some(id);
    Ok(result)
}
