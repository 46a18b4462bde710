//! Forward and backward chaining over a rule list, consultation sessions and
//! their explanations.
//!
//! Both directions share one notion of priority (see [`priority_cmp`]): for
//! any attribute, the value established is the conclusion of the
//! highest-priority rule whose premises hold. Forward chaining therefore
//! defers a fireable rule while a higher-priority rule for the same
//! attribute could still fire.

use std::cmp::Ordering;

use serde::Serialize;

use crate::model::{natural_id_cmp, Rule};

mod backward;
mod forward;
mod memory;
mod session;

pub use backward::{backward_chain, Outcome, QuestionStep};
pub use forward::{forward_chain, forward_chain_rules, ForwardResult};
pub use memory::{MemoryEntry, WorkingMemory};
pub use session::{
    render_derivation, PendingQuestion, Session, SessionStatus, TraceEvent, WhyExplanation, WhyStep, UNKNOWN_ANSWER,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum InferenceError {
    #[error("rule cycle through {}", rule_ids.join(" -> "))]
    Cycle { rule_ids: Vec<String> },
    #[error("attribute '{attribute}' already has value '{existing}', cannot set '{value}'")]
    ConflictingFact {
        attribute: String,
        existing: String,
        value: String,
    },
    #[error("unknown attribute '{attribute}'")]
    UnknownAttribute { attribute: String },
    #[error("value '{value}' is not allowed for '{attribute}'")]
    InvalidValue { attribute: String, value: String },
    #[error("no question is pending")]
    NoPendingQuestion,
    #[error("question pending for '{pending}', not '{attribute}'")]
    NotPending { pending: String, attribute: String },
    #[error("session is {actual}, expected {expected}")]
    WrongState { expected: String, actual: String },
}

/// Total priority order. `Less` means `a` wins: higher experience, then more
/// premises, then the smaller id (numeric suffixes compare numerically).
pub fn priority_cmp(a: &Rule, b: &Rule) -> Ordering {
    b.experience()
        .cmp(&a.experience())
        .then_with(|| b.premises.len().cmp(&a.premises.len()))
        .then_with(|| natural_id_cmp(&a.id, &b.id))
}

/// Rules whose premises all hold and whose conclusion attribute is unset.
#[derive(Debug, Clone, Default)]
pub struct ConflictSet<'a> {
    pub members: Vec<&'a Rule>,
}

impl<'a> ConflictSet<'a> {
    pub fn build(rules: &'a [Rule], memory: &WorkingMemory) -> Self {
        let members = rules
            .iter()
            .filter(|r| !memory.contains_attribute(&r.conclusion.attribute))
            .filter(|r| r.matches(|a| memory.value_of(a)))
            .collect();
        Self { members }
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// The highest-priority member, or `None` for an empty set.
pub fn resolve_conflict<'a>(conflict: &ConflictSet<'a>) -> Option<&'a Rule> {
    conflict.members.iter().copied().min_by(|a, b| priority_cmp(a, b))
}

/// Rules concluding `attribute`, highest priority first.
pub(crate) fn candidates<'a>(rules: &'a [Rule], attribute: &str) -> Vec<&'a Rule> {
    let mut out: Vec<&Rule> = rules
        .iter()
        .filter(|r| r.conclusion.attribute == attribute)
        .collect();
    out.sort_by(|a, b| priority_cmp(a, b));
    out
}
