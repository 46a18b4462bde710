mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{assignments, naive_forward, random_kb, rng};
use hepx_core::bundled;
use hepx_core::inference::{backward_chain, forward_chain, Outcome, Session, SessionStatus, WorkingMemory};
use hepx_core::model::{Fact, KnowledgeBase};
use rand::Rng;

fn forward_values(kb: &KnowledgeBase, given: &[Fact]) -> BTreeMap<String, String> {
    forward_chain(kb, given)
        .unwrap()
        .memory
        .facts()
        .map(|f| (f.attribute.clone(), f.value.clone()))
        .collect()
}

fn backward_goal(kb: &KnowledgeBase, given: &[Fact]) -> Option<String> {
    let mut memory = WorkingMemory::from_given(given).unwrap();
    let (outcome, _) = backward_chain(&kb.rules, &kb.schema, &mut memory, &BTreeSet::new(), &kb.goal_attribute).unwrap();
    match outcome {
        Outcome::Proved { fact, .. } => Some(fact.value),
        Outcome::Unknown { .. } => None,
        Outcome::NextQuestion { attribute, .. } => panic!("asked for {attribute} with every input given"),
    }
}

#[test]
fn forward_matches_reference_on_random_kbs() {
    let mut differences = 0;
    for seed in 0..200 {
        let rk = random_kb(seed, 6, 12);
        let mut r = rng(seed + 10_000);
        let mut inputs = assignments(&rk.kb, &rk.inputs);
        // Partial assignments exercise rules whose inputs never arrive.
        for full in inputs.clone().iter().take(8) {
            inputs.push(full.iter().filter(|_| r.gen_bool(0.6)).cloned().collect());
        }
        for given in &inputs {
            if forward_values(&rk.kb, given) != naive_forward(&rk.kb.rules, given) {
                differences += 1;
            }
        }
    }
    assert_eq!(differences, 0);
}

#[test]
fn backward_agrees_with_forward_on_bundled_schema() {
    let kb = bundled::hepatitis();
    let inputs: Vec<String> = ["symptoms", "jaundice", "hbsagreact", "hbsagnonreact", "igmantihbcreact", "checkHBV"]
        .map(String::from)
        .to_vec();
    let all = assignments(&kb, &inputs);
    assert_eq!(all.len(), 64);
    for given in &all {
        let forward = forward_values(&kb, given).get("hbv").cloned();
        assert_eq!(backward_goal(&kb, given), forward, "{given:?}");
    }
}

#[test]
fn backward_agrees_with_forward_on_random_kbs() {
    let mut disagreements = 0;
    let mut proved = 0;
    let mut total = 0;
    for seed in 0..100 {
        let rk = random_kb(seed * 7 + 3, 6, 12);
        for given in assignments(&rk.kb, &rk.inputs) {
            let forward = forward_values(&rk.kb, &given).get(&rk.kb.goal_attribute).cloned();
            proved += usize::from(forward.is_some());
            total += 1;
            if backward_goal(&rk.kb, &given) != forward {
                disagreements += 1;
            }
        }
    }
    assert_eq!(disagreements, 0);
    // Guard against a generator that never reaches the goal.
    assert!(proved * 5 > total, "{proved}/{total}");
}

#[test]
fn hcv_consultation() {
    let kb = bundled::hepatitis();
    for (answer, expected) in [("reactive", "positive"), ("nonreactive", "negative")] {
        let mut s = Session::start("hcv", &kb, "hcv", &[]).unwrap();
        assert_eq!(s.pending().unwrap().attribute, "antihcv");
        s.answer(&kb, "antihcv", answer).unwrap();
        assert_eq!(s.status(), SessionStatus::Concluded);
        assert_eq!(s.result(), Some(&Fact::new("hcv", expected)));
    }
}

#[test]
fn interactive_session_matches_forward_chaining() {
    let kb = bundled::hepatitis();
    let case = kb.cases.iter().find(|c| c.id == 7).unwrap();
    let mut s = Session::start("c7", &kb, "hbv", &[]).unwrap();
    while let Some(q) = s.pending().cloned() {
        let v = case.value_of(&q.attribute).unwrap().to_string();
        s.answer(&kb, &q.attribute, &v).unwrap();
    }
    let forward = forward_chain(&kb, &case.observations).unwrap();
    assert_eq!(s.result().map(|f| f.value.as_str()), forward.value_of("hbv"));
    assert_eq!(s.result(), Some(&case.label));
}
