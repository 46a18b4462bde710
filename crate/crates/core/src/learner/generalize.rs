use serde::Serialize;

use crate::inference::priority_cmp;
use crate::lang::serialize_rule;
use crate::model::{natural_id_cmp, Actor, AuditAction, AuditEntry, KnowledgeBase, Rule, RuleOrigin};

use super::{misclassified, LearnerError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneralizationMode {
    Subsume,
    Experience,
}

/// One applied generalization step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Merge {
    /// Rule that remains, with its new text.
    pub kept: String,
    pub removed: Vec<String>,
    pub result: String,
}

/// A subsumption pair left alone because removing the specific rule could
/// change some outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockedPair {
    pub general: String,
    pub specific: String,
    /// Rules concluding another value that could fire alongside `general`.
    pub rivals: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneralizationReport {
    pub mode: GeneralizationMode,
    pub removed: Vec<String>,
    pub kept: Vec<String>,
    pub merges: Vec<Merge>,
    pub blocked: Vec<BlockedPair>,
    /// Cases the final rule set misclassifies on forward-chain replay.
    pub exceptions: Vec<u32>,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
}

impl GeneralizationReport {
    pub fn is_noop(&self) -> bool {
        self.merges.is_empty()
    }
}

impl std::fmt::Display for GeneralizationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mode = match self.mode {
            GeneralizationMode::Subsume => "subsume",
            GeneralizationMode::Experience => "experience",
        };
        writeln!(f, "mode: {mode}")?;
        for m in &self.merges {
            writeln!(f, "merge: {} absorbs {} -> {}", m.kept, m.removed.join(", "), m.result)?;
        }
        for b in &self.blocked {
            writeln!(
                f,
                "blocked: {} would absorb {} (rivals {})",
                b.general,
                b.specific,
                b.rivals.join(", ")
            )?;
        }
        writeln!(f, "removed: {}", self.removed.join(", "))?;
        writeln!(f, "kept: {}", self.kept.join(", "))?;
        let ex: Vec<String> = self.exceptions.iter().map(u32::to_string).collect();
        writeln!(f, "exceptions: {}", ex.join(", "))?;
        writeln!(f, "accuracy before: {:.4}", self.accuracy_before)?;
        writeln!(f, "accuracy after: {:.4}", self.accuracy_after)
    }
}

fn compatible(a: &Rule, b: &Rule) -> bool {
    a.premises
        .iter()
        .all(|p| b.premise_on(&p.attribute).is_none_or(|q| q.value == p.value))
}

/// Whether `g` subsumes `s`: same conclusion and a strictly smaller premise
/// set, or an identical premise set with `g` ranking first.
fn subsumes(g: &Rule, s: &Rule) -> bool {
    g.id != s.id
        && g.conclusion == s.conclusion
        && g.premises_subset_of(s)
        && (g.premises.len() < s.premises.len() || priority_cmp(g, s).is_lt())
}

fn record(kb: &mut KnowledgeBase, kept: &str, removed: &[String]) -> Merge {
    let rule = kb.rule(kept).cloned().expect("kept rule exists");
    let mut ids = vec![kept.to_string()];
    ids.extend(removed.iter().cloned());
    kb.record(AuditEntry::now(
        Actor::System,
        AuditAction::RuleGeneralized,
        ids,
        vec![rule.clone()],
    ));
    Merge {
        kept: kept.to_string(),
        removed: removed.to_vec(),
        result: serialize_rule(&rule),
    }
}

/// Removes rules subsumed by a more general rule with the same conclusion.
/// The general rule absorbs the removed rule's statistics.
///
/// A pair is applied only when no rule concluding a different value for the
/// same attribute could fire together with the general rule; otherwise the
/// pair is reported as blocked. This keeps every forward-chain outcome
/// unchanged. Runs to a fixpoint.
pub fn subsume_generalize(kb: &mut KnowledgeBase) -> GeneralizationReport {
    let (_, accuracy_before) = misclassified(&kb.rules, kb);
    let mut merges = Vec::new();
    let mut blocked: Vec<BlockedPair> = Vec::new();
    loop {
        let mut applied = false;
        for s in kb.rules.clone() {
            let mut generals: Vec<&Rule> = kb.rules.iter().filter(|g| subsumes(g, &s)).collect();
            generals.sort_by(|a, b| {
                a.premises
                    .len()
                    .cmp(&b.premises.len())
                    .then_with(|| natural_id_cmp(&a.id, &b.id))
            });
            let Some(g) = generals.first().map(|g| (*g).clone()) else {
                continue;
            };
            let rivals: Vec<String> = kb
                .rules
                .iter()
                .filter(|x| {
                    x.conclusion.attribute == g.conclusion.attribute
                        && x.conclusion.value != g.conclusion.value
                        && compatible(x, &g)
                })
                .map(|x| x.id.clone())
                .collect();
            if !rivals.is_empty() {
                if !blocked.iter().any(|b| b.general == g.id && b.specific == s.id) {
                    blocked.push(BlockedPair {
                        general: g.id.clone(),
                        specific: s.id.clone(),
                        rivals,
                    });
                }
                continue;
            }
            kb.rule_mut(&g.id).expect("general rule exists").stats.absorb(s.stats);
            kb.rules.retain(|r| r.id != s.id);
            merges.push(record(kb, &g.id, std::slice::from_ref(&s.id)));
            applied = true;
            break;
        }
        if !applied {
            break;
        }
    }
    finish(kb, GeneralizationMode::Subsume, merges, blocked, accuracy_before)
}

fn finish(
    kb: &KnowledgeBase,
    mode: GeneralizationMode,
    merges: Vec<Merge>,
    blocked: Vec<BlockedPair>,
    accuracy_before: f64,
) -> GeneralizationReport {
    let (exceptions, accuracy_after) = misclassified(&kb.rules, kb);
    let removed: Vec<String> = merges.iter().flat_map(|m| m.removed.clone()).collect();
    let mut kept: Vec<String> = Vec::new();
    for m in &merges {
        if !kept.contains(&m.kept) && !removed.contains(&m.kept) {
            kept.push(m.kept.clone());
        }
    }
    GeneralizationReport {
        mode,
        removed,
        kept,
        merges,
        blocked,
        exceptions,
        accuracy_before,
        accuracy_after,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExperienceOptions {
    /// Required ratio between the majority and minority experience.
    pub threshold: u64,
    /// Largest minority experience that may be overruled.
    pub max_minority: u64,
}

impl Default for ExperienceOptions {
    fn default() -> Self {
        Self {
            threshold: 9,
            max_minority: 1,
        }
    }
}

/// The attribute on which two rules differ when they test the same
/// attributes and disagree on exactly one value.
fn single_difference<'a>(a: &'a Rule, b: &Rule) -> Option<&'a str> {
    if a.premises.len() != b.premises.len() || a.conclusion.attribute != b.conclusion.attribute {
        return None;
    }
    let mut diff = None;
    for p in &a.premises {
        let q = b.premise_on(&p.attribute)?;
        if q.value != p.value {
            if diff.is_some() {
                return None;
            }
            diff = Some(p.attribute.as_str());
        }
    }
    diff
}

/// Merges sibling induced rules that differ in one premise value.
///
/// Pairs with the same conclusion always merge. Pairs with different
/// conclusions merge when the majority experience is at least `threshold`
/// times the minority's and the minority is at most `max_minority`; the
/// minority's cases become exceptions. The merged rule keeps the majority's
/// id, drops the differing premise and sums both rules' statistics. Repeats
/// until no pair qualifies.
pub fn experience_generalize(
    kb: &mut KnowledgeBase,
    options: ExperienceOptions,
) -> Result<GeneralizationReport, LearnerError> {
    if options.threshold < 1 {
        return Err(LearnerError::InvalidThreshold);
    }
    let (_, accuracy_before) = misclassified(&kb.rules, kb);
    let mut merges = Vec::new();
    loop {
        let mut eligible: Vec<&Rule> = kb
            .rules
            .iter()
            .filter(|r| matches!(r.origin, RuleOrigin::Induced | RuleOrigin::Generalized))
            .collect();
        eligible.sort_by(|a, b| priority_cmp(a, b));
        let mut pick = None;
        'search: for (i, major) in eligible.iter().enumerate() {
            for minor in &eligible[i + 1..] {
                let Some(attr) = single_difference(major, minor) else {
                    continue;
                };
                let (hi, lo) = (major.experience(), minor.experience());
                let ok = major.conclusion == minor.conclusion
                    || (lo <= options.max_minority && hi >= options.threshold.saturating_mul(lo));
                if ok {
                    pick = Some((major.id.clone(), minor.id.clone(), attr.to_string()));
                    break 'search;
                }
            }
        }
        let Some((major, minor, attr)) = pick else {
            break;
        };
        let minor_stats = kb.rule(&minor).expect("exists").stats;
        let rule = kb.rule_mut(&major).expect("exists");
        rule.premises.retain(|p| p.attribute != attr);
        rule.stats.absorb(minor_stats);
        rule.origin = RuleOrigin::Generalized;
        kb.rules.retain(|r| r.id != minor);
        merges.push(record(kb, &major, &[minor]));
    }
    Ok(finish(kb, GeneralizationMode::Experience, merges, Vec::new(), accuracy_before))
}
