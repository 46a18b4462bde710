//! Knowledge-base validation. Reports problems as diagnostics and never
//! fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::lang::Severity;
use crate::model::{Fact, KnowledgeBase, Rule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    SchemaViolation,
    DuplicateAttribute,
    DuplicateRuleId,
    DuplicateCaseId,
    MalformedRule,
    RuleCycle,
    ContradictoryRules,
    ContradictoryCases,
    RuleCaseConflict,
}

impl DiagnosticKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosticKind::SchemaViolation => "schema_violation",
            DiagnosticKind::DuplicateAttribute => "duplicate_attribute",
            DiagnosticKind::DuplicateRuleId => "duplicate_rule_id",
            DiagnosticKind::DuplicateCaseId => "duplicate_case_id",
            DiagnosticKind::MalformedRule => "malformed_rule",
            DiagnosticKind::RuleCycle => "rule_cycle",
            DiagnosticKind::ContradictoryRules => "contradictory_rules",
            DiagnosticKind::ContradictoryCases => "contradictory_cases",
            DiagnosticKind::RuleCaseConflict => "rule_case_conflict",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub kind: DiagnosticKind,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub rule_ids: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub case_ids: Vec<u32>,
}

impl Diagnostic {
    fn error(kind: DiagnosticKind, message: String) -> Self {
        Self {
            severity: Severity::Error,
            kind,
            message,
            rule_ids: Vec::new(),
            case_ids: Vec::new(),
        }
    }

    fn warning(kind: DiagnosticKind, message: String) -> Self {
        Self {
            severity: Severity::Warning,
            ..Self::error(kind, message)
        }
    }

    fn rules(mut self, ids: &[&str]) -> Self {
        self.rule_ids = ids.iter().map(|s| s.to_string()).collect();
        self
    }

    fn cases(mut self, ids: Vec<u32>) -> Self {
        self.case_ids = ids;
        self
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}[{}]: {}", self.kind.as_str(), self.message)
    }
}

fn check_fact(kb: &KnowledgeBase, fact: &Fact, context: &str, out: &mut Vec<Diagnostic>) -> bool {
    match kb.attribute(&fact.attribute) {
        None => {
            out.push(Diagnostic::error(
                DiagnosticKind::SchemaViolation,
                format!("{context}: unknown attribute '{}'", fact.attribute),
            ));
            false
        }
        Some(a) if !a.allows(&fact.value) => {
            out.push(Diagnostic::error(
                DiagnosticKind::SchemaViolation,
                format!("{context}: value '{}' not in domain of '{}'", fact.value, fact.attribute),
            ));
            false
        }
        Some(_) => true,
    }
}

/// All problems found in `kb`; an empty list means it is valid.
///
/// Errors: schema violations, duplicate ids, malformed rules, rule cycles and
/// contradictory rule pairs. Warnings: contradictory cases and goal rules
/// that misclassify a stored case.
pub fn validate_kb(kb: &KnowledgeBase) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    check_schema(kb, &mut out);
    check_rules(kb, &mut out);
    check_cases(kb, &mut out);
    check_contradictory_rules(kb, &mut out);
    check_cycles(kb, &mut out);
    check_contradictory_cases(kb, &mut out);
    check_rule_case_conflicts(kb, &mut out);
    for (fact, _) in &kb.advice {
        check_fact(kb, fact, "advice", &mut out);
    }
    out
}

fn check_schema(kb: &KnowledgeBase, out: &mut Vec<Diagnostic>) {
    let mut seen = BTreeSet::new();
    for a in kb.schema.iter() {
        if !seen.insert(a.name.as_str()) {
            out.push(Diagnostic::error(
                DiagnosticKind::DuplicateAttribute,
                format!("attribute '{}' declared more than once", a.name),
            ));
        }
        if a.domain.is_empty() {
            out.push(Diagnostic::error(
                DiagnosticKind::SchemaViolation,
                format!("attribute '{}' has an empty domain", a.name),
            ));
        }
        let distinct: BTreeSet<&String> = a.domain.iter().collect();
        if distinct.len() != a.domain.len() {
            out.push(Diagnostic::error(
                DiagnosticKind::SchemaViolation,
                format!("attribute '{}' repeats a domain value", a.name),
            ));
        }
    }
    if !kb.schema.is_empty() && !kb.schema.contains(&kb.goal_attribute) {
        out.push(Diagnostic::error(
            DiagnosticKind::SchemaViolation,
            format!("goal attribute '{}' is not in the schema", kb.goal_attribute),
        ));
    }
}

fn check_rules(kb: &KnowledgeBase, out: &mut Vec<Diagnostic>) {
    let mut seen = BTreeSet::new();
    for r in &kb.rules {
        if !seen.insert(r.id.as_str()) {
            out.push(
                Diagnostic::error(DiagnosticKind::DuplicateRuleId, format!("rule id '{}' is used more than once", r.id))
                    .rules(&[&r.id]),
            );
        }
        let context = format!("rule {}", r.id);
        for p in &r.premises {
            check_fact(kb, p, &context, out);
        }
        check_fact(kb, &r.conclusion, &context, out);
        let attrs: BTreeSet<&str> = r.premises.iter().map(|p| p.attribute.as_str()).collect();
        if attrs.len() != r.premises.len() {
            out.push(
                Diagnostic::error(DiagnosticKind::MalformedRule, format!("{context} tests an attribute twice"))
                    .rules(&[&r.id]),
            );
        }
        if attrs.contains(r.conclusion.attribute.as_str()) {
            out.push(
                Diagnostic::error(
                    DiagnosticKind::MalformedRule,
                    format!("{context} concludes an attribute it also tests"),
                )
                .rules(&[&r.id]),
            );
        }
        if r.is_default() && !kb.allow_defaults {
            out.push(
                Diagnostic::error(
                    DiagnosticKind::MalformedRule,
                    format!("{context} has no premises and default rules are disabled"),
                )
                .rules(&[&r.id]),
            );
        }
    }
}

fn check_cases(kb: &KnowledgeBase, out: &mut Vec<Diagnostic>) {
    let attrs = kb.case_attributes();
    let expected: BTreeSet<&str> = attrs.iter().map(String::as_str).collect();
    let mut seen = BTreeSet::new();
    for c in &kb.cases {
        if !seen.insert(c.id) {
            out.push(
                Diagnostic::error(DiagnosticKind::DuplicateCaseId, format!("case id {} is used more than once", c.id))
                    .cases(vec![c.id]),
            );
        }
        let context = format!("case {}", c.id);
        if c.label.attribute != kb.goal_attribute {
            out.push(
                Diagnostic::error(
                    DiagnosticKind::SchemaViolation,
                    format!("{context}: label attribute '{}' is not the goal", c.label.attribute),
                )
                .cases(vec![c.id]),
            );
        }
        check_fact(kb, &c.label, &context, out);
        for f in &c.observations {
            check_fact(kb, f, &context, out);
        }
        let present: Vec<&str> = c.observations.iter().map(|f| f.attribute.as_str()).collect();
        let present_set: BTreeSet<&str> = present.iter().copied().collect();
        if present_set != expected || present.len() != present_set.len() {
            out.push(
                Diagnostic::error(
                    DiagnosticKind::SchemaViolation,
                    format!("{context}: observations must cover each case attribute exactly once"),
                )
                .cases(vec![c.id]),
            );
        }
    }
}

fn check_contradictory_rules(kb: &KnowledgeBase, out: &mut Vec<Diagnostic>) {
    for (i, a) in kb.rules.iter().enumerate() {
        for b in &kb.rules[i + 1..] {
            if a.conclusion.attribute == b.conclusion.attribute
                && a.conclusion.value != b.conclusion.value
                && a.premises.len() == b.premises.len()
                && a.same_premises(b)
            {
                out.push(
                    Diagnostic::error(
                        DiagnosticKind::ContradictoryRules,
                        format!(
                            "rules {} and {} share premises but conclude {} and {}",
                            a.id, b.id, a.conclusion, b.conclusion
                        ),
                    )
                    .rules(&[&a.id, &b.id]),
                );
            }
        }
    }
}

/// Depth-first search over "rule concludes an attribute another rule
/// tests" edges.
fn check_cycles(kb: &KnowledgeBase, out: &mut Vec<Diagnostic>) {
    let mut by_attr: BTreeMap<&str, Vec<&Rule>> = BTreeMap::new();
    for r in &kb.rules {
        by_attr.entry(r.conclusion.attribute.as_str()).or_default().push(r);
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state: BTreeMap<&str, u8> = BTreeMap::new();
    let mut reported = BTreeSet::new();

    fn visit<'a>(
        attr: &'a str,
        by_attr: &BTreeMap<&'a str, Vec<&'a Rule>>,
        state: &mut BTreeMap<&'a str, u8>,
        path: &mut Vec<(&'a str, &'a str)>,
        found: &mut Vec<Vec<String>>,
    ) {
        state.insert(attr, 1);
        for r in by_attr.get(attr).into_iter().flatten() {
            for p in &r.premises {
                let next = p.attribute.as_str();
                path.push((attr, r.id.as_str()));
                match state.get(next).copied().unwrap_or(0) {
                    0 => visit(next, by_attr, state, path, found),
                    1 => {
                        let start = path.iter().position(|(a, _)| *a == next).unwrap_or(0);
                        found.push(path[start..].iter().map(|(_, id)| id.to_string()).collect());
                    }
                    _ => {}
                }
                path.pop();
            }
        }
        state.insert(attr, 2);
    }

    let mut found = Vec::new();
    for attr in by_attr.keys().copied().collect::<Vec<_>>() {
        if state.get(attr).copied().unwrap_or(0) == 0 {
            visit(attr, &by_attr, &mut state, &mut Vec::new(), &mut found);
        }
    }
    for ids in found {
        let mut key = ids.clone();
        key.sort();
        if reported.insert(key) {
            let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
            out.push(
                Diagnostic::error(DiagnosticKind::RuleCycle, format!("rule cycle through {}", ids.join(" -> ")))
                    .rules(&refs),
            );
        }
    }
}

fn check_contradictory_cases(kb: &KnowledgeBase, out: &mut Vec<Diagnostic>) {
    let mut groups: BTreeMap<Vec<(&str, &str)>, Vec<&crate::model::CaseRecord>> = BTreeMap::new();
    for c in &kb.cases {
        groups
            .entry(c.observation_map().into_iter().collect())
            .or_default()
            .push(c);
    }
    for cases in groups.values() {
        let labels: BTreeSet<&str> = cases.iter().map(|c| c.label.value.as_str()).collect();
        if labels.len() > 1 {
            let ids: Vec<u32> = cases.iter().map(|c| c.id).collect();
            out.push(
                Diagnostic::warning(
                    DiagnosticKind::ContradictoryCases,
                    format!(
                        "cases {} have identical observations but different labels",
                        ids.iter().map(u32::to_string).collect::<Vec<_>>().join(", ")
                    ),
                )
                .cases(ids),
            );
        }
    }
}

fn check_rule_case_conflicts(kb: &KnowledgeBase, out: &mut Vec<Diagnostic>) {
    for r in kb.rules.iter().filter(|r| r.conclusion.attribute == kb.goal_attribute) {
        let ids: Vec<u32> = kb
            .cases
            .iter()
            .filter(|c| r.matches_case(c) && c.label.value != r.conclusion.value)
            .map(|c| c.id)
            .collect();
        if !ids.is_empty() {
            out.push(
                Diagnostic::warning(
                    DiagnosticKind::RuleCaseConflict,
                    format!(
                        "rule {} concludes {} but case(s) {} say otherwise",
                        r.id,
                        r.conclusion,
                        ids.iter().map(u32::to_string).collect::<Vec<_>>().join(", ")
                    ),
                )
                .rules(&[&r.id])
                .cases(ids),
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_rule;
    use crate::model::{AttributeDef, CaseRecord, Schema};

    fn base() -> KnowledgeBase {
        let schema: Schema = [
            AttributeDef::new("a", &["yes", "no"], true),
            AttributeDef::new("b", &["yes", "no"], true),
            AttributeDef::new("g", &["p", "n"], false),
        ]
        .into_iter()
        .collect();
        KnowledgeBase::new(schema, "g")
    }

    fn case(id: u32, label: &str, a: &str, b: &str) -> CaseRecord {
        CaseRecord {
            id,
            label: Fact::new("g", label),
            observations: vec![Fact::new("a", a), Fact::new("b", b)],
        }
    }

    #[test]
    fn empty_kb_is_valid() {
        let kb = KnowledgeBase::new(Schema::new(), "g");
        assert!(validate_kb(&kb).is_empty());
        assert!(validate_kb(&base()).is_empty());
    }

    #[test]
    fn opposite_rules_give_one_contradiction() {
        let mut kb = base();
        kb.rules = vec![
            parse_rule("RULE x: IF a=yes AND b=no THEN g=p").unwrap(),
            parse_rule("RULE y: IF b=no AND a=yes THEN g=n").unwrap(),
        ];
        let d = validate_kb(&kb);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].kind, DiagnosticKind::ContradictoryRules);
        assert_eq!(d[0].rule_ids, vec!["x", "y"]);
    }

    #[test]
    fn schema_and_id_problems() {
        let mut kb = base();
        kb.rules = vec![
            parse_rule("RULE x: IF a=maybe THEN g=p").unwrap(),
            parse_rule("RULE x: IF c=yes THEN g=p").unwrap(),
            parse_rule("RULE d: DEFAULT THEN g=n").unwrap(),
        ];
        let kinds: Vec<_> = validate_kb(&kb).into_iter().map(|d| d.kind).collect();
        assert_eq!(
            kinds,
            vec![
                DiagnosticKind::SchemaViolation,
                DiagnosticKind::DuplicateRuleId,
                DiagnosticKind::SchemaViolation,
                DiagnosticKind::MalformedRule
            ]
        );
    }

    #[test]
    fn cases_checked() {
        let mut kb = base();
        kb.cases = vec![case(1, "p", "yes", "no"), case(1, "n", "yes", "no")];
        kb.cases.push(CaseRecord {
            id: 3,
            label: Fact::new("g", "p"),
            observations: vec![Fact::new("a", "yes")],
        });
        let kinds: Vec<_> = validate_kb(&kb).into_iter().map(|d| d.kind).collect();
        assert!(kinds.contains(&DiagnosticKind::DuplicateCaseId));
        assert!(kinds.contains(&DiagnosticKind::SchemaViolation));
        assert!(kinds.contains(&DiagnosticKind::ContradictoryCases));
    }

    #[test]
    fn rule_case_conflict_is_a_warning() {
        let mut kb = base();
        kb.cases = vec![case(1, "p", "yes", "no"), case(27, "n", "yes", "yes")];
        kb.rules = vec![parse_rule("RULE s1: IF a=yes THEN g=p").unwrap()];
        let d = validate_kb(&kb);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].severity, Severity::Warning);
        assert_eq!(d[0].case_ids, vec![27]);
    }

    #[test]
    fn cycles_reported_once() {
        let mut kb = base();
        kb.schema.push(AttributeDef::new("x", &["on"], false));
        kb.schema.push(AttributeDef::new("y", &["on"], false));
        kb.rules = vec![
            parse_rule("RULE c1: IF x=on THEN y=on").unwrap(),
            parse_rule("RULE c2: IF y=on THEN x=on").unwrap(),
        ];
        let d = validate_kb(&kb);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].kind, DiagnosticKind::RuleCycle);
    }

    #[test]
    fn idempotent() {
        let mut kb = base();
        kb.rules = vec![parse_rule("RULE x: IF a=maybe THEN g=p").unwrap()];
        assert_eq!(validate_kb(&kb), validate_kb(&kb));
    }
}
