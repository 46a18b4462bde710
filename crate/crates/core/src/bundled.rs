//! The viral hepatitis reference knowledge base.

use crate::lang::{parse_prolog_cases, parse_rule};
use crate::model::{CaseRecord, KnowledgeBase, Rule, RuleOrigin};
use crate::store::parse_kb;

/// The 32-record case base as a numbered Prolog listing.
pub const PROLOG_CASES: &str = include_str!("../data/hepatitis_cases.pl");

/// The complete reference knowledge base in `.kb` form.
pub const HEPATITIS_KB: &str = include_str!("../data/hepatitis.kb");

pub const GOAL: &str = "hbv";

pub fn hepatitis() -> KnowledgeBase {
    parse_kb(HEPATITIS_KB).expect("bundled knowledge base parses")
}

pub fn prolog_cases() -> Vec<CaseRecord> {
    parse_prolog_cases(PROLOG_CASES, GOAL).expect("bundled case listing parses")
}

/// The HBV rules exactly as the clinicians wrote them. They contain an
/// inconsistent pair (`p2` against `p5`) and `p1` misclassifies case 27,
/// so they are only used on request.
pub fn literal_hbv_rules() -> Vec<Rule> {
    [
        "RULE p1: IF hbsagreact=yes THEN hbv=positive",
        "RULE p2: IF hbsagnonreact=yes THEN hbv=positive",
        "RULE p3: IF hbsagreact=yes AND igmantihbcreact=yes THEN hbv=positive",
        "RULE p4: IF hbsagreact=yes AND igmantihbcreact=no THEN hbv=positive",
        "RULE p5: IF hbsagnonreact=yes AND igmantihbcreact=no THEN hbv=negative",
    ]
    .iter()
    .map(|t| parse_rule(t).expect("literal rule parses"))
    .collect()
}

/// `kb` with its induced and generalized goal rules swapped for
/// [`literal_hbv_rules`]. The swap is not audited.
pub fn with_literal_rules(mut kb: KnowledgeBase) -> KnowledgeBase {
    let goal = kb.goal_attribute.clone();
    kb.rules.retain(|r| {
        r.conclusion.attribute != goal || !matches!(r.origin, RuleOrigin::Induced | RuleOrigin::Generalized)
    });
    kb.rules.extend(literal_hbv_rules());
    kb
}
