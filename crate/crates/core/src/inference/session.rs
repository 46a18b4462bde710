use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::lang::serialize_rule;
use crate::model::{Derivation, Fact, KnowledgeBase, Source};

use super::{backward_chain, InferenceError, Outcome, QuestionStep, WorkingMemory};

/// Reserved answer marking an attribute as unanswerable.
pub const UNKNOWN_ANSWER: &str = "unknown";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Concluded,
    Unknown,
    AwaitingDiscovery,
}

impl SessionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionStatus::Active => "active",
            SessionStatus::Concluded => "concluded",
            SessionStatus::Unknown => "unknown",
            SessionStatus::AwaitingDiscovery => "awaiting_discovery",
        }
    }
}

impl fmt::Display for SessionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Question { attribute: String, rule: Option<String> },
    Answer { attribute: String, value: String },
    Fired { rule: String, conclusion: Fact },
    Concluded { fact: Fact },
    Unknown,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceEvent::Question { attribute, rule } => match rule {
                Some(r) => write!(f, "ask {attribute} (rule {r})"),
                None => write!(f, "ask {attribute}"),
            },
            TraceEvent::Answer { attribute, value } => write!(f, "answer {attribute}={value}"),
            TraceEvent::Fired { rule, conclusion } => write!(f, "fire {rule} => {conclusion}"),
            TraceEvent::Concluded { fact } => write!(f, "concluded {fact}"),
            TraceEvent::Unknown => write!(f, "unknown"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PendingQuestion {
    pub attribute: String,
    pub chain: Vec<QuestionStep>,
}

impl PendingQuestion {
    /// The rule whose premise asked the question.
    pub fn rule(&self) -> Option<&str> {
        self.chain.last().map(|s| s.rule.as_str())
    }
}

/// One consultation. Holds no reference to the knowledge base; every call
/// that runs inference takes the current snapshot.
#[derive(Debug, Clone, Serialize)]
pub struct Session {
    pub id: String,
    pub goal: String,
    memory: WorkingMemory,
    unanswerable: BTreeSet<String>,
    pending: Option<PendingQuestion>,
    status: SessionStatus,
    outcome: Option<Outcome>,
    trace: Vec<TraceEvent>,
    fired: Vec<String>,
}

fn check_fact(kb: &KnowledgeBase, fact: &Fact) -> Result<(), InferenceError> {
    let attr = kb
        .attribute(&fact.attribute)
        .ok_or_else(|| InferenceError::UnknownAttribute {
            attribute: fact.attribute.clone(),
        })?;
    if attr.allows(&fact.value) {
        Ok(())
    } else {
        Err(InferenceError::InvalidValue {
            attribute: fact.attribute.clone(),
            value: fact.value.clone(),
        })
    }
}

impl Session {
    /// Starts a consultation for `goal` with optional given facts and runs
    /// inference up to the first question or a result.
    pub fn start(
        id: impl Into<String>,
        kb: &KnowledgeBase,
        goal: &str,
        given: &[Fact],
    ) -> Result<Self, InferenceError> {
        if kb.attribute(goal).is_none() {
            return Err(InferenceError::UnknownAttribute {
                attribute: goal.to_string(),
            });
        }
        for f in given {
            check_fact(kb, f)?;
        }
        let mut s = Session {
            id: id.into(),
            goal: goal.to_string(),
            memory: WorkingMemory::from_given(given)?,
            unanswerable: BTreeSet::new(),
            pending: None,
            status: SessionStatus::Active,
            outcome: None,
            trace: Vec::new(),
            fired: Vec::new(),
        };
        s.run(kb)?;
        Ok(s)
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn pending(&self) -> Option<&PendingQuestion> {
        self.pending.as_ref()
    }

    pub fn memory(&self) -> &WorkingMemory {
        &self.memory
    }

    pub fn unanswerable(&self) -> &BTreeSet<String> {
        &self.unanswerable
    }

    pub fn outcome(&self) -> Option<&Outcome> {
        self.outcome.as_ref()
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    /// Rules fired in this session, in order.
    pub fn fired_rules(&self) -> &[String] {
        &self.fired
    }

    /// The goal fact once concluded.
    pub fn result(&self) -> Option<&Fact> {
        match (&self.status, &self.outcome) {
            (SessionStatus::Concluded, Some(Outcome::Proved { fact, .. })) => Some(fact),
            _ => None,
        }
    }

    /// Facts established from outside the rule base (given or asked).
    pub fn observed_facts(&self) -> Vec<Fact> {
        self.memory
            .entries()
            .iter()
            .filter(|e| !matches!(e.source, Source::Derived { .. }))
            .map(|e| e.fact.clone())
            .collect()
    }

    /// Runs backward chaining from the current memory and updates status.
    pub fn run(&mut self, kb: &KnowledgeBase) -> Result<(), InferenceError> {
        let (outcome, fired) = backward_chain(&kb.rules, &kb.schema, &mut self.memory, &self.unanswerable, &self.goal)?;
        for id in fired {
            let conclusion = kb
                .rule(&id)
                .map(|r| r.conclusion.clone())
                .unwrap_or_else(|| Fact::new(&self.goal, ""));
            self.trace.push(TraceEvent::Fired {
                rule: id.clone(),
                conclusion,
            });
            self.fired.push(id);
        }
        match &outcome {
            Outcome::Proved { fact, .. } => {
                self.status = SessionStatus::Concluded;
                self.pending = None;
                self.trace.push(TraceEvent::Concluded { fact: fact.clone() });
            }
            Outcome::NextQuestion { attribute, chain } => {
                self.status = SessionStatus::Active;
                let q = PendingQuestion {
                    attribute: attribute.clone(),
                    chain: chain.clone(),
                };
                self.trace.push(TraceEvent::Question {
                    attribute: attribute.clone(),
                    rule: q.rule().map(str::to_string),
                });
                self.pending = Some(q);
            }
            Outcome::Unknown { .. } => {
                self.status = SessionStatus::Unknown;
                self.pending = None;
                self.trace.push(TraceEvent::Unknown);
            }
        }
        self.outcome = Some(outcome);
        Ok(())
    }

    /// Answers the pending question and resumes. `unknown` marks the
    /// attribute unanswerable.
    pub fn answer(&mut self, kb: &KnowledgeBase, attribute: &str, value: &str) -> Result<(), InferenceError> {
        let pending = self.pending.as_ref().ok_or(InferenceError::NoPendingQuestion)?;
        if pending.attribute != attribute {
            return Err(InferenceError::NotPending {
                pending: pending.attribute.clone(),
                attribute: attribute.to_string(),
            });
        }
        let fact = Fact::new(attribute, value);
        if value != UNKNOWN_ANSWER {
            check_fact(kb, &fact)?;
        }
        self.trace.push(TraceEvent::Answer {
            attribute: attribute.to_string(),
            value: value.to_string(),
        });
        if value == UNKNOWN_ANSWER {
            self.unanswerable.insert(attribute.to_string());
        } else {
            self.memory.insert(fact, Source::Asked)?;
        }
        self.pending = None;
        self.run(kb)
    }

    /// Why the pending question is asked: the rule chain from the goal down
    /// to the question.
    pub fn explain_why(&self, kb: &KnowledgeBase) -> Result<WhyExplanation, InferenceError> {
        let pending = self.pending.as_ref().ok_or_else(|| InferenceError::WrongState {
            expected: "active with a pending question".into(),
            actual: self.status.to_string(),
        })?;
        Ok(WhyExplanation {
            goal: self.goal.clone(),
            question: pending.attribute.clone(),
            steps: pending
                .chain
                .iter()
                .map(|s| WhyStep {
                    attribute: s.attribute.clone(),
                    rule: s.rule.clone(),
                    rule_text: kb.rule(&s.rule).map(serialize_rule).unwrap_or_default(),
                })
                .collect(),
        })
    }

    /// Indented proof of the concluded goal.
    pub fn explain_how(&self) -> Result<String, InferenceError> {
        match (&self.status, &self.outcome) {
            (SessionStatus::Concluded, Some(Outcome::Proved { fact, derivation })) => Ok(match derivation {
                Some(d) => render_derivation(d),
                None => {
                    let source = self.memory.get(&fact.attribute).map(|e| source_label(&e.source));
                    format!("{fact} ({})\n", source.unwrap_or("given"))
                }
            }),
            _ => Err(InferenceError::WrongState {
                expected: SessionStatus::Concluded.to_string(),
                actual: self.status.to_string(),
            }),
        }
    }

    pub(crate) fn require_status(&self, expected: SessionStatus) -> Result<(), InferenceError> {
        if self.status == expected {
            Ok(())
        } else {
            Err(InferenceError::WrongState {
                expected: expected.to_string(),
                actual: self.status.to_string(),
            })
        }
    }

    pub(crate) fn set_status(&mut self, status: SessionStatus) {
        self.status = status;
    }

    /// Adds facts as given. Existing equal facts are left alone.
    pub(crate) fn add_given(&mut self, facts: &[Fact]) -> Result<(), InferenceError> {
        for f in facts {
            self.memory.insert(f.clone(), Source::Given)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WhyStep {
    pub attribute: String,
    pub rule: String,
    pub rule_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WhyExplanation {
    pub goal: String,
    pub question: String,
    /// Goal first; the last step's rule has the question as a premise.
    pub steps: Vec<WhyStep>,
}

impl fmt::Display for WhyExplanation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "goal {}", self.goal)?;
        if self.steps.is_empty() {
            return writeln!(f, "  {} is asked directly; no rule concludes it", self.question);
        }
        for (depth, step) in self.steps.iter().enumerate() {
            let indent = "  ".repeat(depth + 1);
            writeln!(f, "{indent}{} may conclude {}: {}", step.rule, step.attribute, step.rule_text)?;
        }
        writeln!(f, "{}which needs {}", "  ".repeat(self.steps.len() + 1), self.question)
    }
}

fn source_label(source: &Source) -> &'static str {
    match source {
        Source::Given => "given",
        Source::Asked => "asked",
        Source::Derived { .. } => "derived",
    }
}

/// Renders a derivation tree, two spaces per level.
pub fn render_derivation(d: &Derivation) -> String {
    let mut out = String::new();
    render_into(d, 0, &mut out);
    out
}

fn render_into(d: &Derivation, depth: usize, out: &mut String) {
    out.push_str(&format!("{}{} by {}\n", "  ".repeat(depth), d.conclusion, d.rule));
    for a in &d.antecedents {
        match &a.source {
            Source::Derived { derivation } => render_into(derivation, depth + 1, out),
            s => out.push_str(&format!("{}{} ({})\n", "  ".repeat(depth + 1), a.condition, source_label(s))),
        }
    }
}
