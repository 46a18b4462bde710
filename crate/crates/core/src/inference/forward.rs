use std::collections::BTreeSet;

use crate::model::{Antecedent, Derivation, Fact, KnowledgeBase, Rule, Source};

use super::{priority_cmp, resolve_conflict, ConflictSet, InferenceError, WorkingMemory};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardResult {
    pub memory: WorkingMemory,
    /// One derivation per fired rule, in firing order.
    pub derivations: Vec<Derivation>,
}

impl ForwardResult {
    pub fn fired(&self) -> Vec<&str> {
        self.derivations.iter().map(|d| d.rule.as_str()).collect()
    }

    pub fn value_of(&self, attribute: &str) -> Option<&str> {
        self.memory.value_of(attribute)
    }
}

/// Forward chaining over the knowledge base's rules.
pub fn forward_chain(kb: &KnowledgeBase, initial: &[Fact]) -> Result<ForwardResult, InferenceError> {
    forward_chain_rules(&kb.rules, initial)
}

/// Match, resolve, act until no rule can fire.
///
/// Each cycle builds the conflict set and drops every member that a
/// higher-priority rule for the same attribute could still pre-empt. The
/// survivor chosen by [`resolve_conflict`] fires. On cyclic rule sets the
/// deferral can stall; the full conflict set is then used instead.
pub fn forward_chain_rules(rules: &[Rule], initial: &[Fact]) -> Result<ForwardResult, InferenceError> {
    let mut memory = WorkingMemory::from_given(initial)?;
    let mut derivations = Vec::new();
    loop {
        let conflict = ConflictSet::build(rules, &memory);
        if conflict.is_empty() {
            break;
        }
        let settable = settable_attributes(rules, &memory);
        let eligible = ConflictSet {
            members: conflict
                .members
                .iter()
                .copied()
                .filter(|r| !preempted(r, rules, &memory, &settable))
                .collect(),
        };
        let winner = match resolve_conflict(&eligible) {
            Some(w) => w,
            None => resolve_conflict(&conflict).expect("conflict set is non-empty"),
        };
        let derivation = derive(winner, &memory);
        memory.insert(
            winner.conclusion.clone(),
            Source::Derived {
                derivation: Box::new(derivation.clone()),
            },
        )?;
        derivations.push(derivation);
    }
    Ok(ForwardResult { memory, derivations })
}

pub(crate) fn derive(rule: &Rule, memory: &WorkingMemory) -> Derivation {
    Derivation {
        conclusion: rule.conclusion.clone(),
        rule: rule.id.clone(),
        antecedents: rule
            .premises
            .iter()
            .map(|p| Antecedent {
                condition: p.clone(),
                source: memory
                    .get(&p.attribute)
                    .map(|e| e.source.clone())
                    .unwrap_or(Source::Given),
            })
            .collect(),
    }
}

/// Unset attributes that some rule could still establish: the least set
/// closed under "a rule for the attribute has every premise either holding
/// or on an attribute already in the set".
fn settable_attributes(rules: &[Rule], memory: &WorkingMemory) -> BTreeSet<String> {
    let mut set = BTreeSet::new();
    loop {
        let mut grew = false;
        for r in rules {
            let attr = &r.conclusion.attribute;
            if memory.contains_attribute(attr) || set.contains(attr) {
                continue;
            }
            if r
                .premises
                .iter()
                .all(|p| memory.holds(p) || (!memory.contains_attribute(&p.attribute) && set.contains(&p.attribute)))
            {
                set.insert(attr.clone());
                grew = true;
            }
        }
        if !grew {
            return set;
        }
    }
}

/// Whether a higher-priority rule for the same attribute may still fire.
fn preempted(rule: &Rule, rules: &[Rule], memory: &WorkingMemory, settable: &BTreeSet<String>) -> bool {
    rules.iter().any(|other| {
        other.conclusion.attribute == rule.conclusion.attribute
            && priority_cmp(other, rule).is_lt()
            && other.premises.iter().all(|p| {
                memory.holds(p) || (!memory.contains_attribute(&p.attribute) && settable.contains(&p.attribute))
            })
    })
}
