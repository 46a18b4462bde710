use std::fmt::Write;

use chrono::SecondsFormat;

use crate::model::{Actor, AttributeDef, AuditEntry, CaseRecord, Fact, Rule, RuleOrigin};

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Canonical rule text: premises sorted by attribute, upper-case keywords,
/// single spaces. The annotation is omitted for zero stats and authored
/// origin.
pub fn serialize_rule(rule: &Rule) -> String {
    let mut out = format!("RULE {}: ", rule.id);
    if rule.is_default() {
        out.push_str("DEFAULT");
    } else {
        out.push_str("IF ");
        let premises: Vec<String> = rule.sorted_premises().iter().map(|p| p.to_string()).collect();
        out.push_str(&premises.join(" AND "));
    }
    let _ = write!(out, " THEN {}", rule.conclusion);
    let stats = rule.stats;
    if stats.support > 0 || stats.firings > 0 || rule.origin != RuleOrigin::Authored {
        let _ = write!(out, " [exp={}", stats.support);
        if stats.firings > 0 {
            let _ = write!(out, ", fired={}", stats.firings);
        }
        if rule.origin != RuleOrigin::Authored {
            let _ = write!(out, ", origin={}", rule.origin.as_str());
        }
        out.push(']');
    }
    out
}

/// Native case syntax, observations in stored order.
pub fn serialize_case(case: &CaseRecord) -> String {
    let obs: Vec<String> = case.observations.iter().map(Fact::to_string).collect();
    format!("CASE {} {}: {}", case.id, case.label.value, obs.join(", "))
}

pub fn serialize_attribute(attr: &AttributeDef) -> String {
    let mut out = format!("ATTR {} {{{}}}", attr.name, attr.domain.join(", "));
    if attr.askable {
        out.push_str(" askable");
    }
    if let Some(p) = &attr.prompt {
        out.push(' ');
        out.push_str(&quote(p));
    }
    out
}

pub fn serialize_advice(fact: &Fact, text: &str) -> String {
    format!("ADVICE {fact} {}", quote(text))
}

pub fn serialize_audit(entry: &AuditEntry) -> String {
    let actor = match &entry.actor {
        Actor::System => "system".to_string(),
        Actor::Expert(name) => format!("expert {}", quote(name)),
    };
    let mut out = format!(
        "AUDIT {} {actor} {} ids={}",
        entry.timestamp.to_rfc3339_opts(SecondsFormat::AutoSi, true),
        entry.action.as_str(),
        entry.rule_ids.join(",")
    );
    for rule in &entry.rules {
        out.push_str(" | ");
        out.push_str(&serialize_rule(rule));
    }
    out
}
