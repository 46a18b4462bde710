//! Seeded random knowledge bases and independent reference evaluators.
//!
//! Generated rule sets are layered: a rule only tests attributes that come
//! before its conclusion attribute, so every rule set is acyclic. The first
//! attributes are askable inputs and the last one is the goal.

#![allow(dead_code)]

use std::collections::BTreeMap;

use hepx_core::learner::record_firings;
use hepx_core::model::{
    AttributeDef, CaseRecord, ExperienceStats, Fact, KnowledgeBase, Rule, RuleOrigin, Schema,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VALUES: [&str; 3] = ["yes", "no", "maybe"];

pub struct RandomKb {
    pub kb: KnowledgeBase,
    /// Askable attributes, in schema order.
    pub inputs: Vec<String>,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Up to `max_attrs` attributes and `max_rules` rules.
pub fn random_kb(seed: u64, max_attrs: usize, max_rules: usize) -> RandomKb {
    let mut rng = rng(seed);
    let n_attrs = rng.gen_range(3..=max_attrs.max(3));
    let n_inputs = rng.gen_range(2..n_attrs);
    let mut schema = Schema::new();
    for i in 0..n_attrs {
        let width = rng.gen_range(2..=3);
        schema.push(AttributeDef::new(format!("a{i}"), &VALUES[..width], i < n_inputs));
    }
    let attrs: Vec<AttributeDef> = schema.iter().cloned().collect();
    let goal = attrs[n_attrs - 1].name.clone();
    let mut kb = KnowledgeBase::new(schema, goal);

    let n_rules = rng.gen_range(1..=max_rules);
    for n in 1..=n_rules {
        // Bias conclusions towards the goal so most rule sets matter.
        let target = if rng.gen_bool(0.5) {
            n_attrs - 1
        } else {
            rng.gen_range(n_inputs..n_attrs)
        };
        let mut earlier: Vec<usize> = (0..target).collect();
        earlier.shuffle(&mut rng);
        let n_premises = rng.gen_range(1..=3.min(target));
        let premises = earlier[..n_premises]
            .iter()
            .map(|&i| {
                let a = &attrs[i];
                Fact::new(a.name.clone(), a.domain.choose(&mut rng).unwrap().clone())
            })
            .collect();
        let t = &attrs[target];
        let conclusion = Fact::new(t.name.clone(), t.domain.choose(&mut rng).unwrap().clone());
        let stats = ExperienceStats {
            support: rng.gen_range(0..6),
            firings: rng.gen_range(0..3),
        };
        let origin = *[RuleOrigin::Authored, RuleOrigin::Induced].choose(&mut rng).unwrap();
        kb.rules.push(
            Rule::new(format!("r{n}"), premises, conclusion)
                .with_stats(stats)
                .with_origin(origin),
        );
    }
    let inputs: Vec<String> = attrs[..n_inputs].iter().map(|a| a.name.clone()).collect();
    RandomKb { kb, inputs }
}

/// A random KB with cases, advice and a logged firing, for storage tests.
pub fn random_full_kb(seed: u64) -> KnowledgeBase {
    let RandomKb { mut kb, inputs } = random_kb(seed, 6, 12);
    let mut rng = rng(seed ^ 0x5eed);
    let goal = kb.attribute(&kb.goal_attribute).unwrap().clone();
    for id in 1..=rng.gen_range(0..8u32) {
        let observations = inputs
            .iter()
            .map(|name| {
                let d = &kb.attribute(name).unwrap().domain;
                Fact::new(name.clone(), d.choose(&mut rng).unwrap().clone())
            })
            .collect();
        kb.cases.push(CaseRecord {
            id,
            label: Fact::new(goal.name.clone(), goal.domain.choose(&mut rng).unwrap().clone()),
            observations,
        });
    }
    if rng.gen_bool(0.5) {
        kb.advice.insert(
            Fact::new(goal.name.clone(), goal.domain[0].clone()),
            format!("Advice \"{seed}\" with a \\ backslash"),
        );
    }
    let fired = vec![kb.rules[0].id.clone()];
    record_firings(&mut kb, &fired).unwrap();
    kb
}

/// Adds copies of existing rules with one extra premise, so that random
/// rule sets contain subsumption pairs.
pub fn with_specializations(mut kb: KnowledgeBase, seed: u64) -> KnowledgeBase {
    let mut r = rng(seed);
    let attrs: Vec<String> = kb.schema.iter().map(|a| a.name.clone()).collect();
    let base = kb.rules.clone();
    let mut next = base.len() + 1;
    for rule in base.choose_multiple(&mut r, 3) {
        let limit = attrs.iter().position(|a| *a == rule.conclusion.attribute).unwrap();
        let free: Vec<&String> = attrs[..limit].iter().filter(|a| rule.premise_on(a).is_none()).collect();
        let Some(extra) = free.choose(&mut r) else { continue };
        let value = kb.attribute(extra).unwrap().domain.choose(&mut r).unwrap().clone();
        let mut premises = rule.premises.clone();
        premises.push(Fact::new((*extra).clone(), value));
        let stats = ExperienceStats {
            support: r.gen_range(0..6),
            firings: 0,
        };
        kb.rules.push(Rule::new(format!("r{next}"), premises, rule.conclusion.clone()).with_stats(stats));
        next += 1;
    }
    kb
}

/// Every complete assignment of `inputs`.
pub fn assignments(kb: &KnowledgeBase, inputs: &[String]) -> Vec<Vec<Fact>> {
    let mut out = vec![Vec::new()];
    for name in inputs {
        let domain = &kb.attribute(name).unwrap().domain;
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<Fact>| {
                domain.iter().map(move |v| {
                    let mut next = prefix.clone();
                    next.push(Fact::new(name.clone(), v.clone()));
                    next
                })
            })
            .collect();
    }
    out
}

/// Rule precedence written out longhand: more experience wins, then more
/// premises, then the smaller numeric id suffix.
fn outranks(a: &Rule, b: &Rule) -> bool {
    let exp = |r: &Rule| r.stats.support + r.stats.firings;
    let num = |r: &Rule| -> u64 {
        r.id.trim_start_matches(|c: char| !c.is_ascii_digit())
            .parse()
            .unwrap_or(u64::MAX)
    };
    (exp(a), a.premises.len(), std::cmp::Reverse(num(a))) > (exp(b), b.premises.len(), std::cmp::Reverse(num(b)))
}

/// Reference forward evaluation for acyclic rule sets. Each pass recomputes
/// every non-given attribute from the previous pass's values as the
/// conclusion of the best rule whose premises hold; passes repeat until
/// nothing changes.
pub fn naive_forward(rules: &[Rule], given: &[Fact]) -> BTreeMap<String, String> {
    let given: BTreeMap<String, String> = given.iter().map(|f| (f.attribute.clone(), f.value.clone())).collect();
    let mut values = given.clone();
    for _ in 0..=rules.len() + 1 {
        let mut next = given.clone();
        for r in rules {
            let attr = &r.conclusion.attribute;
            if given.contains_key(attr) {
                continue;
            }
            let holds = r.premises.iter().all(|p| values.get(&p.attribute) == Some(&p.value));
            if !holds {
                continue;
            }
            let better = rules
                .iter()
                .filter(|o| &o.conclusion.attribute == attr && outranks(o, r))
                .any(|o| o.premises.iter().all(|p| values.get(&p.attribute) == Some(&p.value)));
            if !better {
                next.insert(attr.clone(), r.conclusion.value.clone());
            }
        }
        if next == values {
            return values;
        }
        values = next;
    }
    panic!("reference evaluation did not settle; rule set is cyclic");
}
