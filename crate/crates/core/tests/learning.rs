mod common;

use common::{assignments, naive_forward, random_kb, with_specializations};
use hepx_core::bundled;
use hepx_core::inference::{forward_chain, Session, SessionStatus, UNKNOWN_ANSWER};
use hepx_core::learner::{
    commit_discovery, experience_generalize, propose_discovery, subsume_generalize, DiscoveryProposal,
    ExperienceOptions, ValidationStatus,
};
use hepx_core::lang::parse_rule;
use hepx_core::model::{replay_audit, Fact, KnowledgeBase};
use hepx_core::store;

fn memory_of(kb: &KnowledgeBase, given: &[Fact]) -> Vec<Fact> {
    let mut facts: Vec<Fact> = forward_chain(kb, given).unwrap().memory.facts().cloned().collect();
    facts.sort();
    facts
}

/// Every removed rule must have a surviving rule with the same conclusion
/// and a subset of its premises.
fn removals_are_supersets(before: &KnowledgeBase, after: &KnowledgeBase, removed: &[String]) {
    for id in removed {
        let gone = before.rule(id).unwrap();
        assert!(after.rule(id).is_none());
        assert!(
            after
                .rules
                .iter()
                .any(|r| r.conclusion == gone.conclusion && r.premises_subset_of(gone)),
            "{id} removed without a general rule"
        );
    }
}

fn four_rule_example() -> KnowledgeBase {
    let mut kb = bundled::hepatitis();
    kb.rules = [
        "RULE rule1: IF symptoms=yes AND jaundice=yes AND hbsagreact=yes AND hbsagnonreact=yes AND igmantihbcreact=yes THEN hbv=positive",
        "RULE rule2: IF symptoms=yes AND jaundice=yes AND hbsagreact=yes THEN hbv=positive",
        "RULE rule3: IF symptoms=yes AND jaundice=yes AND hbsagnonreact=yes THEN hbv=positive",
        "RULE rule4: IF symptoms=yes AND jaundice=yes AND igmantihbcreact=yes THEN hbv=positive",
    ]
    .iter()
    .map(|t| parse_rule(t).unwrap())
    .collect();
    kb.audit.clear();
    kb
}

#[test]
fn subsumption_on_four_rule_example() {
    let before = four_rule_example();
    let mut kb = before.clone();
    let report = subsume_generalize(&mut kb);
    assert_eq!(report.removed, vec!["rule1".to_string()]);
    removals_are_supersets(&before, &kb, &report.removed);
    for case in &before.cases {
        assert_eq!(memory_of(&before, &case.observations), memory_of(&kb, &case.observations));
    }
    assert_eq!(kb.audit.len(), 1);
    assert_eq!(replay_audit(before.rules.clone(), &kb.audit), kb.rules);
}

#[test]
fn subsumption_preserves_outcomes_on_random_kbs() {
    let mut differences = 0;
    let mut removed_total = 0;
    for seed in 0..100 {
        let rk = random_kb(seed + 500, 6, 9);
        let before = with_specializations(rk.kb, seed);
        let mut kb = before.clone();
        let report = subsume_generalize(&mut kb);
        removals_are_supersets(&before, &kb, &report.removed);
        removed_total += report.removed.len();
        for given in assignments(&before, &rk.inputs) {
            if memory_of(&before, &given) != memory_of(&kb, &given) {
                differences += 1;
            }
        }
        let baseline = before.rules.clone();
        assert_eq!(replay_audit(baseline, &kb.audit), kb.rules);
    }
    assert_eq!(differences, 0);
    assert!(removed_total >= 50, "only {removed_total} rules removed");
}

#[test]
fn experience_generalization_on_corpus() {
    let mut kb = bundled::hepatitis();
    let report = experience_generalize(&mut kb, ExperienceOptions::default()).unwrap();
    assert_eq!(report.merges.len(), 1);
    assert_eq!(report.merges[0].kept, "r2");
    assert_eq!(report.merges[0].removed, vec!["r1".to_string()]);
    assert_eq!(
        kb.rule("r2").map(hepx_core::lang::serialize_rule).unwrap(),
        "RULE r2: IF hbsagreact=yes THEN hbv=positive [exp=10, origin=generalized]"
    );
    assert_eq!(report.exceptions, vec![27]);

    // Replay every case through the reference evaluator.
    let correct = kb
        .cases
        .iter()
        .filter(|c| naive_forward(&kb.rules, &c.observations).get("hbv") == Some(&c.label.value))
        .count();
    assert_eq!(correct, 31);
    assert_eq!(report.accuracy_after, 31.0 / 32.0);
    assert_eq!(report.accuracy_before, 1.0);
}

#[test]
fn experience_generalization_respects_threshold() {
    let mut kb = bundled::hepatitis();
    let report = experience_generalize(
        &mut kb,
        ExperienceOptions {
            threshold: 10,
            ..ExperienceOptions::default()
        },
    )
    .unwrap();
    assert!(report.is_noop());
    assert_eq!(kb, bundled::hepatitis());
}

fn discovery_facts() -> Vec<Fact> {
    vec![
        Fact::new("symptoms", "yes"),
        Fact::new("jaundice", "yes"),
        Fact::new("hbsagnonreact", "yes"),
        Fact::new("igmantihbcreact", "yes"),
    ]
}

#[test]
fn discovery_end_to_end_with_persistence() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hepatitis.kb");
    std::fs::write(&path, bundled::HEPATITIS_KB).unwrap();
    let kb = store::load(&path).unwrap();

    let mut session = Session::start("s1", &kb, "hbv", &discovery_facts()).unwrap();
    while let Some(q) = session.pending().cloned() {
        session.answer(&kb, &q.attribute, UNKNOWN_ANSWER).unwrap();
    }
    assert_eq!(session.status(), SessionStatus::Unknown);
    let template = propose_discovery(&kb, &mut session).unwrap();
    assert_eq!(session.status(), SessionStatus::AwaitingDiscovery);

    let mut premises = template.premises.clone();
    premises.push(Fact::new("hiv", "positive"));
    let proposal = DiscoveryProposal {
        premises,
        conclusion: Fact::new("hbv", "positive"),
        expert: "internist".into(),
        alternatives: [("hiv".to_string(), vec!["negative".to_string()])].into(),
        override_conflicts: false,
        replace_subsumed: false,
    };
    let audit_before = kb.audit.len();
    let (saved, result) = store::commit(&path, |kb| commit_discovery(kb, &mut session, &proposal)).unwrap();
    assert_eq!(result.status, ValidationStatus::Accepted);
    assert_eq!(session.status(), SessionStatus::Concluded);
    assert_eq!(session.result(), Some(&Fact::new("hbv", "positive")));
    assert_eq!(saved.audit.len(), audit_before + 1);

    let reloaded = store::load(&path).unwrap();
    assert_eq!(reloaded, saved);
    let id = result.rule_id.unwrap();
    assert!(reloaded.rule(&id).is_some());
    assert!(reloaded.attribute("hiv").unwrap().askable);
    assert_eq!(replay_audit(Vec::new(), &reloaded.audit), reloaded.rules);

    // A fresh consultation on the reloaded base now concludes directly.
    let mut given = discovery_facts();
    given.push(Fact::new("hiv", "positive"));
    let mut again = Session::start("s2", &reloaded, "hbv", &given).unwrap();
    while let Some(q) = again.pending().cloned() {
        again.answer(&reloaded, &q.attribute, UNKNOWN_ANSWER).unwrap();
    }
    assert_eq!(again.result(), Some(&Fact::new("hbv", "positive")));
}
