//! Adaptive learning: firing statistics, generalization of the rule base and
//! discovery of new rules from experts.
//!
//! Every mutation here appends exactly one audit entry per logical change,
//! so replaying the audit log over the authored baseline reproduces the rule
//! list.

use serde::Serialize;

use crate::inference::{forward_chain_rules, InferenceError};
use crate::model::{Actor, AuditAction, AuditEntry, ExperienceStats, KnowledgeBase, Rule, RuleOrigin};

mod discovery;
mod generalize;

pub use discovery::{
    abort_discovery, commit_discovery, propose_discovery, validate_discovery, DiscoveryProposal, DiscoveryTemplate,
    ValidationResult, ValidationStatus,
};
pub use generalize::{
    experience_generalize, subsume_generalize, BlockedPair, ExperienceOptions, GeneralizationMode,
    GeneralizationReport, Merge,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum LearnerError {
    #[error("unknown rule '{id}'")]
    UnknownRule { id: String },
    #[error("threshold must be at least 1")]
    InvalidThreshold,
    #[error("malformed proposal: {reason}")]
    MalformedProposal { reason: String },
    #[error("conclusion attribute '{attribute}' is not the session goal '{goal}'")]
    ConclusionNotGoal { attribute: String, goal: String },
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

/// Increments one rule's firing count and logs it.
pub fn record_firing(kb: &mut KnowledgeBase, rule_id: &str) -> Result<ExperienceStats, LearnerError> {
    record_firings(kb, &[rule_id.to_string()])?;
    Ok(kb.rule(rule_id).expect("checked above").stats)
}

/// Increments the firing count of each listed rule (repeats count again)
/// under a single audit entry. Unknown ids fail the whole call.
pub fn record_firings(kb: &mut KnowledgeBase, rule_ids: &[String]) -> Result<(), LearnerError> {
    if let Some(id) = rule_ids.iter().find(|id| kb.rule(id).is_none()) {
        return Err(LearnerError::UnknownRule { id: id.clone() });
    }
    if rule_ids.is_empty() {
        return Ok(());
    }
    let mut touched: Vec<String> = Vec::new();
    for id in rule_ids {
        kb.rule_mut(id).expect("checked above").stats.firings += 1;
        if !touched.contains(id) {
            touched.push(id.clone());
        }
    }
    let rules = touched.iter().filter_map(|id| kb.rule(id).cloned()).collect();
    kb.record(AuditEntry::now(Actor::System, AuditAction::StatsUpdated, touched, rules));
    Ok(())
}

/// Replaces every induced or generalized rule for the goal with `rules`,
/// logged as one `rule_added` entry.
pub fn install_induced_rules(kb: &mut KnowledgeBase, rules: Vec<Rule>) {
    let goal = kb.goal_attribute.clone();
    let old: Vec<String> = kb
        .rules
        .iter()
        .filter(|r| r.conclusion.attribute == goal)
        .filter(|r| matches!(r.origin, RuleOrigin::Induced | RuleOrigin::Generalized))
        .map(|r| r.id.clone())
        .collect();
    kb.rules.retain(|r| !old.contains(&r.id));
    let mut ids = old;
    for r in &rules {
        if !ids.contains(&r.id) {
            ids.push(r.id.clone());
        }
    }
    kb.rules.extend(rules.iter().cloned());
    kb.record(AuditEntry::now(Actor::System, AuditAction::RuleAdded, ids, rules));
}

/// Goal value forward chaining derives from each case's observations.
pub fn replay_cases(rules: &[Rule], kb: &KnowledgeBase) -> Vec<(u32, Option<String>)> {
    kb.cases
        .iter()
        .map(|c| {
            let value = forward_chain_rules(rules, &c.observations)
                .ok()
                .and_then(|r| r.value_of(&kb.goal_attribute).map(str::to_string));
            (c.id, value)
        })
        .collect()
}

/// Ids of cases whose replayed outcome differs from their label, and the
/// resulting accuracy (1.0 for an empty case base).
pub(crate) fn misclassified(rules: &[Rule], kb: &KnowledgeBase) -> (Vec<u32>, f64) {
    let wrong: Vec<u32> = replay_cases(rules, kb)
        .into_iter()
        .zip(&kb.cases)
        .filter(|((_, v), c)| v.as_deref() != Some(c.label.value.as_str()))
        .map(|((id, _), _)| id)
        .collect();
    let n = kb.cases.len();
    let acc = if n == 0 { 1.0 } else { 1.0 - wrong.len() as f64 / n as f64 };
    (wrong, acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_rule;
    use crate::model::{replay_audit, Schema};

    fn kb() -> KnowledgeBase {
        let mut kb = KnowledgeBase::new(Schema::new(), "g");
        kb.rules = vec![parse_rule("RULE r2: IF a=yes THEN g=p [exp=9]").unwrap()];
        kb
    }

    #[test]
    fn firing_increments_and_audits() {
        let mut kb = kb();
        assert_eq!(record_firing(&mut kb, "r2").unwrap().firings, 1);
        assert_eq!(kb.audit.len(), 1);
        assert_eq!(kb.audit[0].action, AuditAction::StatsUpdated);
        for _ in 0..8 {
            record_firing(&mut kb, "r2").unwrap();
        }
        assert_eq!(kb.rule("r2").unwrap().stats.firings, 9);
        assert_eq!(kb.rule("r2").unwrap().experience(), 18);
    }

    #[test]
    fn unknown_rule_changes_nothing() {
        let mut kb = kb();
        let before = kb.clone();
        assert_eq!(
            record_firings(&mut kb, &["r2".into(), "zz".into()]),
            Err(LearnerError::UnknownRule { id: "zz".into() })
        );
        assert_eq!(kb, before);
    }

    #[test]
    fn audit_replays_stats() {
        let mut kb = kb();
        let baseline = kb.rules.clone();
        record_firings(&mut kb, &["r2".into(), "r2".into()]).unwrap();
        assert_eq!(kb.rule("r2").unwrap().stats.firings, 2);
        assert_eq!(replay_audit(baseline, &kb.audit), kb.rules);
    }
}
