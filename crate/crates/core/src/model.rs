//! Core domain types: attributes, facts, rules, cases, the knowledge base
//! and derivations.
//!
//! Everything here is a plain value type. Mutation of a [`KnowledgeBase`]
//! happens through the learner and the store, which also keep the audit log
//! in step with the rule list.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// Name and value domain of one attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDef {
    pub name: String,
    /// Allowed values, in declared order. The order drives branch tie-breaks
    /// in induction and the allowed-answer list shown to users.
    pub domain: Vec<String>,
    /// Whether the engine may ask the user for this attribute.
    pub askable: bool,
    /// Human-readable question text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
}

impl AttributeDef {
    pub fn new(name: impl Into<String>, domain: &[&str], askable: bool) -> Self {
        Self {
            name: name.into(),
            domain: domain.iter().map(|v| v.to_string()).collect(),
            askable,
            prompt: None,
        }
    }

    pub fn allows(&self, value: &str) -> bool {
        self.domain.iter().any(|v| v == value)
    }

    /// Position of `value` in the declared domain, used for ordering.
    pub fn value_rank(&self, value: &str) -> usize {
        self.domain
            .iter()
            .position(|v| v == value)
            .unwrap_or(usize::MAX)
    }

    pub fn prompt_text(&self) -> String {
        self.prompt
            .clone()
            .unwrap_or_else(|| format!("What is the value of {}?", self.name))
    }
}

/// Ordered set of attribute definitions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Schema {
    attributes: Vec<AttributeDef>,
}

impl Schema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&AttributeDef> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    /// Appends an attribute. Duplicate names are kept so that
    /// [`validate_kb`](crate::validate::validate_kb) can report them.
    pub fn push(&mut self, attr: AttributeDef) {
        self.attributes.push(attr);
    }

    /// Adds `value` to the domain of `name`, creating an askable attribute
    /// when it does not exist yet.
    pub fn extend_with(&mut self, name: &str, value: &str) {
        match self.attributes.iter_mut().find(|a| a.name == name) {
            Some(attr) => {
                if !attr.allows(value) {
                    attr.domain.push(value.to_string());
                }
            }
            None => self.attributes.push(AttributeDef::new(name, &[value], true)),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &AttributeDef> {
        self.attributes.iter()
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }
}

impl FromIterator<AttributeDef> for Schema {
    fn from_iter<T: IntoIterator<Item = AttributeDef>>(iter: T) -> Self {
        Self {
            attributes: iter.into_iter().collect(),
        }
    }
}

/// A ground `attribute=value` pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Fact {
    pub attribute: String,
    pub value: String,
}

/// Premise of a rule. Conditions are equality tests, so they share the
/// representation of a fact.
pub type Condition = Fact;

impl Fact {
    pub fn new(attribute: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            attribute: attribute.into(),
            value: value.into(),
        }
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.attribute, self.value)
    }
}

/// Induction support plus live firing count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperienceStats {
    pub support: u64,
    pub firings: u64,
}

impl ExperienceStats {
    pub fn with_support(support: u64) -> Self {
        Self {
            support,
            firings: 0,
        }
    }

    pub fn experience(&self) -> u64 {
        self.support + self.firings
    }

    pub fn absorb(&mut self, other: ExperienceStats) {
        self.support += other.support;
        self.firings += other.firings;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleOrigin {
    #[default]
    Authored,
    Induced,
    Discovered,
    Generalized,
}

impl RuleOrigin {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleOrigin::Authored => "authored",
            RuleOrigin::Induced => "induced",
            RuleOrigin::Discovered => "discovered",
            RuleOrigin::Generalized => "generalized",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "authored" => Some(RuleOrigin::Authored),
            "induced" => Some(RuleOrigin::Induced),
            "discovered" => Some(RuleOrigin::Discovered),
            "generalized" => Some(RuleOrigin::Generalized),
            _ => None,
        }
    }
}

/// An IF/THEN rule.
///
/// Premises keep the order they were written in; that order decides which
/// question is asked first during backward chaining. Equality ignores premise
/// order since premises form a set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rule {
    pub id: String,
    pub premises: Vec<Condition>,
    pub conclusion: Fact,
    #[serde(default)]
    pub stats: ExperienceStats,
    #[serde(default)]
    pub origin: RuleOrigin,
}

impl Rule {
    pub fn new(id: impl Into<String>, premises: Vec<Condition>, conclusion: Fact) -> Self {
        Self {
            id: id.into(),
            premises,
            conclusion,
            stats: ExperienceStats::default(),
            origin: RuleOrigin::Authored,
        }
    }

    pub fn with_stats(mut self, stats: ExperienceStats) -> Self {
        self.stats = stats;
        self
    }

    pub fn with_origin(mut self, origin: RuleOrigin) -> Self {
        self.origin = origin;
        self
    }

    /// Zero-premise rules act as defaults and are only legal when the
    /// knowledge base enables them.
    pub fn is_default(&self) -> bool {
        self.premises.is_empty()
    }

    pub fn experience(&self) -> u64 {
        self.stats.experience()
    }

    pub fn premise_on(&self, attribute: &str) -> Option<&Condition> {
        self.premises.iter().find(|p| p.attribute == attribute)
    }

    /// Premises sorted by attribute name (canonical order).
    pub fn sorted_premises(&self) -> Vec<&Condition> {
        let mut ps: Vec<&Condition> = self.premises.iter().collect();
        ps.sort();
        ps
    }

    /// True when every premise holds under `lookup`.
    pub fn matches<'a>(&self, lookup: impl Fn(&str) -> Option<&'a str>) -> bool {
        self.premises
            .iter()
            .all(|p| lookup(&p.attribute) == Some(p.value.as_str()))
    }

    pub fn matches_case(&self, case: &CaseRecord) -> bool {
        self.matches(|attr| case.value_of(attr))
    }

    /// Whether `self` and `other` have the same premise set.
    pub fn same_premises(&self, other: &Rule) -> bool {
        self.sorted_premises() == other.sorted_premises()
    }

    /// Whether the premises of `self` are a subset (not necessarily strict)
    /// of the premises of `other`.
    pub fn premises_subset_of(&self, other: &Rule) -> bool {
        self.premises.iter().all(|p| other.premises.contains(p))
    }
}

impl PartialEq for Rule {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.conclusion == other.conclusion
            && self.stats == other.stats
            && self.origin == other.origin
            && self.premises.len() == other.premises.len()
            && self.same_premises(other)
    }
}

impl Eq for Rule {}

/// One labelled training case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CaseRecord {
    pub id: u32,
    pub label: Fact,
    pub observations: Vec<Fact>,
}

impl CaseRecord {
    pub fn value_of(&self, attribute: &str) -> Option<&str> {
        self.observations
            .iter()
            .find(|f| f.attribute == attribute)
            .map(|f| f.value.as_str())
    }

    /// Observations keyed by attribute, for order-insensitive comparison.
    pub fn observation_map(&self) -> BTreeMap<&str, &str> {
        self.observations
            .iter()
            .map(|f| (f.attribute.as_str(), f.value.as_str()))
            .collect()
    }
}

/// Who performed an audited action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "identity", rename_all = "snake_case")]
pub enum Actor {
    System,
    Expert(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditAction {
    RuleAdded,
    RuleRemoved,
    RuleGeneralized,
    StatsUpdated,
}

impl AuditAction {
    pub fn as_str(self) -> &'static str {
        match self {
            AuditAction::RuleAdded => "rule_added",
            AuditAction::RuleRemoved => "rule_removed",
            AuditAction::RuleGeneralized => "rule_generalized",
            AuditAction::StatsUpdated => "stats_updated",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rule_added" => Some(AuditAction::RuleAdded),
            "rule_removed" => Some(AuditAction::RuleRemoved),
            "rule_generalized" => Some(AuditAction::RuleGeneralized),
            "stats_updated" => Some(AuditAction::StatsUpdated),
            _ => None,
        }
    }
}

/// One append-only audit record.
///
/// `rule_ids` lists every affected rule. Rules that appear in `rules` are
/// upserted on replay (replaced in place, or appended when new); ids without
/// an accompanying rule text are removed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditEntry {
    pub timestamp: DateTime<Utc>,
    pub actor: Actor,
    pub action: AuditAction,
    pub rule_ids: Vec<String>,
    pub rules: Vec<Rule>,
}

impl AuditEntry {
    /// Entry stamped with the current time, truncated to whole seconds so
    /// that it survives a save/load cycle unchanged.
    pub fn now(actor: Actor, action: AuditAction, rule_ids: Vec<String>, rules: Vec<Rule>) -> Self {
        let now = Utc::now();
        let timestamp = DateTime::from_timestamp(now.timestamp(), 0).unwrap_or(now);
        Self {
            timestamp,
            actor,
            action,
            rule_ids,
            rules,
        }
    }
}

/// Rebuilds a rule list by replaying audit entries over `baseline`.
pub fn replay_audit<'a>(
    baseline: Vec<Rule>,
    entries: impl IntoIterator<Item = &'a AuditEntry>,
) -> Vec<Rule> {
    let mut rules = baseline;
    for entry in entries {
        for rule in &entry.rules {
            match rules.iter_mut().find(|r| r.id == rule.id) {
                Some(slot) => *slot = rule.clone(),
                None => rules.push(rule.clone()),
            }
        }
        for id in &entry.rule_ids {
            if !entry.rules.iter().any(|r| &r.id == id) {
                rules.retain(|r| &r.id != id);
            }
        }
    }
    rules
}

/// Schema, rules, cases, advice and audit trail of one knowledge domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KnowledgeBase {
    pub schema: Schema,
    /// Attribute that case labels refer to; the default consultation goal.
    pub goal_attribute: String,
    pub allow_defaults: bool,
    pub rules: Vec<Rule>,
    pub cases: Vec<CaseRecord>,
    pub advice: BTreeMap<Fact, String>,
    pub audit: Vec<AuditEntry>,
}

impl KnowledgeBase {
    pub fn new(schema: Schema, goal_attribute: impl Into<String>) -> Self {
        Self {
            schema,
            goal_attribute: goal_attribute.into(),
            allow_defaults: false,
            rules: Vec::new(),
            cases: Vec::new(),
            advice: BTreeMap::new(),
            audit: Vec::new(),
        }
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeDef> {
        self.schema.get(name)
    }

    pub fn rule(&self, id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn rule_mut(&mut self, id: &str) -> Option<&mut Rule> {
        self.rules.iter_mut().find(|r| r.id == id)
    }

    pub fn rules_for<'a>(&'a self, attribute: &'a str) -> impl Iterator<Item = &'a Rule> + 'a {
        self.rules
            .iter()
            .filter(move |r| r.conclusion.attribute == attribute)
    }

    pub fn advice_for(&self, fact: &Fact) -> Option<&str> {
        self.advice.get(fact).map(String::as_str)
    }

    /// Attribute names carried by the stored cases, in first-case order.
    pub fn case_attributes(&self) -> Vec<String> {
        self.cases
            .first()
            .map(|c| c.observations.iter().map(|f| f.attribute.clone()).collect())
            .unwrap_or_default()
    }

    /// Smallest `{prefix}{n}` (n ≥ 1) not used as a rule id.
    pub fn next_rule_id(&self, prefix: &str) -> String {
        (1..)
            .map(|n| format!("{prefix}{n}"))
            .find(|id| self.rule(id).is_none())
            .expect("unbounded id space")
    }

    /// Appends an audit entry.
    pub fn record(&mut self, entry: AuditEntry) {
        self.audit.push(entry);
    }
}

/// Where a condition's value came from in a derivation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Given,
    Asked,
    Derived { derivation: Box<Derivation> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Antecedent {
    pub condition: Condition,
    pub source: Source,
}

/// Proof tree for one derived fact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Derivation {
    pub conclusion: Fact,
    pub rule: String,
    pub antecedents: Vec<Antecedent>,
}

impl Derivation {
    /// Number of rule levels in the tree (a flat derivation has depth 1).
    pub fn depth(&self) -> usize {
        1 + self
            .antecedents
            .iter()
            .map(|a| match &a.source {
                Source::Derived { derivation } => derivation.depth(),
                _ => 0,
            })
            .max()
            .unwrap_or(0)
    }

    /// Rule ids used anywhere in the tree, root first.
    pub fn rule_ids(&self) -> Vec<String> {
        let mut out = vec![self.rule.clone()];
        for a in &self.antecedents {
            if let Source::Derived { derivation } = &a.source {
                out.extend(derivation.rule_ids());
            }
        }
        out
    }

    /// True when every leaf is a given or asked fact.
    pub fn grounded(&self) -> bool {
        self.antecedents.iter().all(|a| match &a.source {
            Source::Given | Source::Asked => true,
            Source::Derived { derivation } => derivation.grounded(),
        })
    }
}

/// Compares rule ids so that numeric suffixes order numerically
/// (`r2` < `r10`).
pub fn natural_id_cmp(a: &str, b: &str) -> Ordering {
    fn chunks(s: &str) -> Vec<(bool, &str)> {
        let mut out = Vec::new();
        let mut start = 0;
        let bytes = s.as_bytes();
        for i in 1..=bytes.len() {
            if i == bytes.len() || bytes[i].is_ascii_digit() != bytes[start].is_ascii_digit() {
                out.push((bytes[start].is_ascii_digit(), &s[start..i]));
                start = i;
            }
        }
        out
    }
    if a.is_empty() || b.is_empty() {
        return a.cmp(b);
    }
    let (ca, cb) = (chunks(a), chunks(b));
    for ((da, xa), (db, xb)) in ca.iter().zip(cb.iter()) {
        let ord = match (da, db) {
            (true, true) => {
                let ta = xa.trim_start_matches('0');
                let tb = xb.trim_start_matches('0');
                ta.len().cmp(&tb.len()).then_with(|| ta.cmp(tb))
            }
            _ => xa.cmp(xb),
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    ca.len().cmp(&cb.len()).then_with(|| a.cmp(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fact(a: &str, v: &str) -> Fact {
        Fact::new(a, v)
    }

    #[test]
    fn experience_is_support_plus_firings() {
        assert_eq!(ExperienceStats::with_support(9).experience(), 9);
        assert_eq!(ExperienceStats::default().experience(), 0);
        let s = ExperienceStats {
            support: 1,
            firings: 3,
        };
        assert_eq!(s.experience(), 4);
    }

    #[test]
    fn rule_equality_ignores_premise_order() {
        let a = Rule::new("r", vec![fact("a", "yes"), fact("b", "no")], fact("g", "p"));
        let b = Rule::new("r", vec![fact("b", "no"), fact("a", "yes")], fact("g", "p"));
        assert_eq!(a, b);
        let c = Rule::new("r", vec![fact("b", "no")], fact("g", "p"));
        assert_ne!(a, c);
    }

    #[test]
    fn natural_ordering_of_ids() {
        assert_eq!(natural_id_cmp("r2", "r10"), Ordering::Less);
        assert_eq!(natural_id_cmp("r10", "r9"), Ordering::Greater);
        assert_eq!(natural_id_cmp("d1", "r1"), Ordering::Less);
        assert_eq!(natural_id_cmp("r1", "r1"), Ordering::Equal);
        assert_eq!(natural_id_cmp("r1", "r1a"), Ordering::Less);
    }

    #[test]
    fn replay_upserts_and_removes() {
        let r1 = Rule::new("r1", vec![fact("a", "yes")], fact("g", "p"));
        let r2 = Rule::new("r2", vec![fact("b", "yes")], fact("g", "n"));
        let entries = vec![
            AuditEntry::now(Actor::System, AuditAction::RuleAdded, vec!["r1".into()], vec![r1.clone()]),
            AuditEntry::now(Actor::System, AuditAction::RuleAdded, vec!["r2".into()], vec![r2.clone()]),
            AuditEntry::now(
                Actor::System,
                AuditAction::StatsUpdated,
                vec!["r1".into()],
                vec![r1.clone().with_stats(ExperienceStats { support: 0, firings: 1 })],
            ),
            AuditEntry::now(Actor::System, AuditAction::RuleRemoved, vec!["r2".into()], vec![]),
        ];
        let rules = replay_audit(Vec::new(), &entries);
        assert_eq!(rules.len(), 1);
        assert_eq!(rules[0].stats.firings, 1);
    }

    #[test]
    fn derivation_depth_and_grounding() {
        let inner = Derivation {
            conclusion: fact("m", "yes"),
            rule: "r1".into(),
            antecedents: vec![Antecedent {
                condition: fact("a", "yes"),
                source: Source::Given,
            }],
        };
        let outer = Derivation {
            conclusion: fact("g", "p"),
            rule: "r2".into(),
            antecedents: vec![Antecedent {
                condition: fact("m", "yes"),
                source: Source::Derived {
                    derivation: Box::new(inner),
                },
            }],
        };
        assert_eq!(outer.depth(), 2);
        assert!(outer.grounded());
        assert_eq!(outer.rule_ids(), vec!["r2", "r1"]);
    }

    #[test]
    fn next_rule_id_skips_used() {
        let mut kb = KnowledgeBase::new(Schema::new(), "g");
        kb.rules.push(Rule::new("d1", vec![fact("a", "yes")], fact("g", "p")));
        assert_eq!(kb.next_rule_id("d"), "d2");
        assert_eq!(kb.next_rule_id("r"), "r1");
    }
}
