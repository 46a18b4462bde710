use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::model::{Condition, Derivation, Fact, Rule, Schema, Source};

use super::forward::derive;
use super::{candidates, InferenceError, WorkingMemory};

/// One level of the goal stack: the attribute being proved and the rule
/// currently tried for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuestionStep {
    pub attribute: String,
    pub rule: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    /// `derivation` is `None` when the goal was already a given or asked
    /// fact.
    Proved {
        fact: Fact,
        derivation: Option<Derivation>,
    },
    /// The engine needs `attribute`. `chain` runs from the goal down to the
    /// rule whose premise asked it; it is empty when the goal itself is
    /// asked.
    NextQuestion {
        attribute: String,
        chain: Vec<QuestionStep>,
    },
    /// No rule for the goal can fire. `missing` holds the minimal sets of
    /// premises that did not hold, one set per candidate rule.
    Unknown { missing: Vec<Vec<Condition>> },
}

enum Eval {
    Value(String),
    Ask(String, Vec<QuestionStep>),
    Fail,
}

struct Prover<'a> {
    rules: &'a [Rule],
    schema: &'a Schema,
    by_attr: BTreeMap<&'a str, Vec<&'a Rule>>,
    memory: &'a mut WorkingMemory,
    unanswerable: &'a BTreeSet<String>,
    stack: Vec<QuestionStep>,
    failed: BTreeSet<String>,
    fired: Vec<String>,
}

impl<'a> Prover<'a> {
    fn askable(&self, attribute: &str) -> bool {
        !self.unanswerable.contains(attribute)
            && self.schema.get(attribute).is_some_and(|a| a.askable)
    }

    fn has_rules(&self, attribute: &str) -> bool {
        self.by_attr.contains_key(attribute)
    }

    /// Cheap test run before a rule is tried: a premise that is already
    /// contradicted, or can never be resolved, rules the rule out without
    /// asking anything.
    fn dead(&self, rule: &Rule) -> bool {
        rule.premises.iter().any(|p| match self.memory.value_of(&p.attribute) {
            Some(v) => v != p.value,
            None => {
                self.failed.contains(&p.attribute) && !self.askable(&p.attribute)
                    || !self.has_rules(&p.attribute) && !self.askable(&p.attribute)
            }
        })
    }

    fn prove(&mut self, attribute: &str) -> Result<Eval, InferenceError> {
        if let Some(v) = self.memory.value_of(attribute) {
            return Ok(Eval::Value(v.to_string()));
        }
        if self.failed.contains(attribute) {
            return Ok(Eval::Fail);
        }
        if let Some(pos) = self.stack.iter().position(|s| s.attribute == attribute) {
            return Err(InferenceError::Cycle {
                rule_ids: self.stack[pos..].iter().map(|s| s.rule.clone()).collect(),
            });
        }
        let cands = self.by_attr.get(attribute).cloned().unwrap_or_default();
        self.stack.push(QuestionStep {
            attribute: attribute.to_string(),
            rule: String::new(),
        });
        let mut result = Eval::Fail;
        'rules: for rule in cands {
            if self.dead(rule) {
                continue;
            }
            self.stack.last_mut().expect("pushed above").rule = rule.id.clone();
            for p in &rule.premises {
                match self.resolve(&p.attribute)? {
                    Eval::Value(v) if v == p.value => {}
                    Eval::Value(_) | Eval::Fail => continue 'rules,
                    ask @ Eval::Ask(..) => {
                        result = ask;
                        break 'rules;
                    }
                }
            }
            let derivation = derive(rule, self.memory);
            self.memory.insert(
                rule.conclusion.clone(),
                Source::Derived {
                    derivation: Box::new(derivation),
                },
            )?;
            self.fired.push(rule.id.clone());
            result = Eval::Value(rule.conclusion.value.clone());
            break;
        }
        self.stack.pop();
        if matches!(result, Eval::Fail) {
            self.failed.insert(attribute.to_string());
        }
        Ok(result)
    }

    /// A premise attribute: memory, then its rules, then the user.
    fn resolve(&mut self, attribute: &str) -> Result<Eval, InferenceError> {
        let proved = self.prove(attribute)?;
        Ok(match proved {
            Eval::Fail if self.askable(attribute) => Eval::Ask(attribute.to_string(), self.stack.clone()),
            other => other,
        })
    }
}

/// Goal-driven inference from the current memory.
///
/// Rules for the goal are tried in priority order and their premises in
/// written order. Derived facts, including intermediate ones, are added to
/// `memory`. Attributes in `unanswerable` are never asked. Returns the fired
/// rule ids alongside the outcome.
pub fn backward_chain(
    rules: &[Rule],
    schema: &Schema,
    memory: &mut WorkingMemory,
    unanswerable: &BTreeSet<String>,
    goal: &str,
) -> Result<(Outcome, Vec<String>), InferenceError> {
    if let Some(entry) = memory.get(goal) {
        let derivation = match &entry.source {
            Source::Derived { derivation } => Some((**derivation).clone()),
            _ => None,
        };
        return Ok((
            Outcome::Proved {
                fact: entry.fact.clone(),
                derivation,
            },
            Vec::new(),
        ));
    }
    let mut by_attr: BTreeMap<&str, Vec<&Rule>> = BTreeMap::new();
    for r in rules {
        by_attr.entry(r.conclusion.attribute.as_str()).or_default();
    }
    for (attr, list) in by_attr.iter_mut() {
        *list = candidates(rules, attr);
    }
    let mut prover = Prover {
        rules,
        schema,
        by_attr,
        memory,
        unanswerable,
        stack: Vec::new(),
        failed: BTreeSet::new(),
        fired: Vec::new(),
    };
    let outcome = match prover.resolve(goal)? {
        Eval::Value(_) => {
            let entry = prover.memory.get(goal).expect("proved goal is in memory");
            Outcome::Proved {
                fact: entry.fact.clone(),
                derivation: prover.memory.derivation_of(goal).cloned(),
            }
        }
        Eval::Ask(attribute, chain) => Outcome::NextQuestion { attribute, chain },
        Eval::Fail => Outcome::Unknown {
            missing: missing_sets(prover.rules, prover.memory, goal),
        },
    };
    Ok((outcome, prover.fired))
}

fn missing_sets(rules: &[Rule], memory: &WorkingMemory, goal: &str) -> Vec<Vec<Condition>> {
    let mut sets: Vec<Vec<Condition>> = candidates(rules, goal)
        .into_iter()
        .map(|r| {
            let mut s: Vec<Condition> = r.premises.iter().filter(|p| !memory.holds(p)).cloned().collect();
            s.sort();
            s
        })
        .collect();
    sets.sort();
    sets.dedup();
    let all = sets.clone();
    sets.retain(|s| !all.iter().any(|t| t != s && t.iter().all(|c| s.contains(c))));
    sets
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_rule;
    use crate::model::AttributeDef;

    fn rules(texts: &[&str]) -> Vec<Rule> {
        texts.iter().map(|t| parse_rule(t).unwrap()).collect()
    }

    fn schema(askable: &[&str]) -> Schema {
        askable
            .iter()
            .map(|a| AttributeDef::new(*a, &["yes", "no"], true))
            .collect()
    }

    #[test]
    fn goal_in_memory_is_proved_without_derivation() {
        let mut m = WorkingMemory::from_given(&[Fact::new("g", "p")]).unwrap();
        let (out, fired) = backward_chain(&[], &Schema::new(), &mut m, &BTreeSet::new(), "g").unwrap();
        assert_eq!(
            out,
            Outcome::Proved {
                fact: Fact::new("g", "p"),
                derivation: None
            }
        );
        assert!(fired.is_empty());
    }

    #[test]
    fn asks_premises_in_order() {
        let rs = rules(&["RULE r2: IF a=yes AND b=no THEN g=p [exp=9]"]);
        let s = schema(&["a", "b"]);
        let mut m = WorkingMemory::new();
        let none = BTreeSet::new();
        let (out, _) = backward_chain(&rs, &s, &mut m, &none, "g").unwrap();
        assert!(matches!(&out, Outcome::NextQuestion { attribute, chain } if attribute == "a" && chain[0].rule == "r2"));
        m.insert(Fact::new("a", "yes"), Source::Asked).unwrap();
        let (out, _) = backward_chain(&rs, &s, &mut m, &none, "g").unwrap();
        assert!(matches!(&out, Outcome::NextQuestion { attribute, .. } if attribute == "b"));
        m.insert(Fact::new("b", "no"), Source::Asked).unwrap();
        let (out, fired) = backward_chain(&rs, &s, &mut m, &none, "g").unwrap();
        assert!(matches!(out, Outcome::Proved { fact, .. } if fact == Fact::new("g", "p")));
        assert_eq!(fired, vec!["r2"]);
    }

    #[test]
    fn skips_contradicted_rules_without_asking() {
        let rs = rules(&[
            "RULE r1: IF a=yes AND b=yes THEN g=p [exp=5]",
            "RULE r2: IF c=yes THEN g=n [exp=1]",
        ]);
        let s = schema(&["a", "b", "c"]);
        let mut m = WorkingMemory::from_given(&[Fact::new("b", "no")]).unwrap();
        let (out, _) = backward_chain(&rs, &s, &mut m, &BTreeSet::new(), "g").unwrap();
        assert!(matches!(&out, Outcome::NextQuestion { attribute, .. } if attribute == "c"));
    }

    #[test]
    fn unanswerable_leads_to_unknown_with_minimal_sets() {
        let rs = rules(&[
            "RULE r1: IF a=yes AND b=yes THEN g=p",
            "RULE r2: IF a=yes THEN g=n",
            "RULE r3: IF a=no THEN g=n",
        ]);
        let s = schema(&["a", "b"]);
        let mut m = WorkingMemory::new();
        let unans: BTreeSet<String> = ["a".to_string()].into();
        let (out, _) = backward_chain(&rs, &s, &mut m, &unans, "g").unwrap();
        assert_eq!(
            out,
            Outcome::Unknown {
                missing: vec![vec![Fact::new("a", "no")], vec![Fact::new("a", "yes")]]
            }
        );
    }

    #[test]
    fn two_level_derivation() {
        let rs = rules(&["RULE top: IF m=hi AND a=yes THEN g=p", "RULE sub: IF b=yes THEN m=hi"]);
        let s = schema(&["a", "b"]);
        let mut m = WorkingMemory::from_given(&[Fact::new("a", "yes"), Fact::new("b", "yes")]).unwrap();
        let (out, fired) = backward_chain(&rs, &s, &mut m, &BTreeSet::new(), "g").unwrap();
        let Outcome::Proved {
            derivation: Some(d), ..
        } = out
        else {
            panic!("expected proof")
        };
        assert_eq!(d.depth(), 2);
        assert!(d.grounded());
        assert_eq!(fired, vec!["sub", "top"]);
    }

    #[test]
    fn question_chain_runs_goal_to_question() {
        let rs = rules(&["RULE top: IF m=hi THEN g=p", "RULE sub: IF b=yes THEN m=hi"]);
        let s = schema(&["b"]);
        let mut m = WorkingMemory::new();
        let (out, _) = backward_chain(&rs, &s, &mut m, &BTreeSet::new(), "g").unwrap();
        let Outcome::NextQuestion { attribute, chain } = out else {
            panic!()
        };
        assert_eq!(attribute, "b");
        let rules_in_chain: Vec<_> = chain.iter().map(|c| c.rule.as_str()).collect();
        assert_eq!(rules_in_chain, vec!["top", "sub"]);
    }

    #[test]
    fn cycle_is_an_error() {
        let rs = rules(&["RULE c1: IF x=on THEN y=on", "RULE c2: IF y=on THEN x=on"]);
        let mut m = WorkingMemory::new();
        let err = backward_chain(&rs, &Schema::new(), &mut m, &BTreeSet::new(), "y").unwrap_err();
        assert_eq!(
            err,
            InferenceError::Cycle {
                rule_ids: vec!["c1".into(), "c2".into()]
            }
        );
    }

    #[test]
    fn askable_goal_without_rules_is_asked() {
        let s = schema(&["g"]);
        let mut m = WorkingMemory::new();
        let (out, _) = backward_chain(&[], &s, &mut m, &BTreeSet::new(), "g").unwrap();
        assert_eq!(
            out,
            Outcome::NextQuestion {
                attribute: "g".into(),
                chain: vec![]
            }
        );
    }
}
