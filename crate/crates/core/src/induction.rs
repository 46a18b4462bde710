//! Decision-tree induction over the case base and compilation of the tree
//! into rules that carry their training support.
//!
//! Splits maximise binary-entropy information gain. Ties go to the
//! lexicographically smallest attribute name, so identical case multisets
//! always produce identical trees.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::model::{AttributeDef, CaseRecord, Condition, ExperienceStats, Fact, KnowledgeBase, Rule, RuleOrigin};

/// Gains closer than this are treated as equal.
const GAIN_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecisionTree {
    Leaf {
        label: String,
        /// Number of training cases that reached this leaf.
        count: usize,
        case_ids: Vec<u32>,
    },
    Split {
        attribute: String,
        gains: GainTable,
        /// One branch per attribute value, in domain order.
        branches: Vec<(String, DecisionTree)>,
    },
}

/// Information gain of every candidate attribute at one node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainTable {
    /// Entropy of the node's label distribution, in bits.
    pub entropy: f64,
    pub gains: Vec<(String, f64)>,
}

impl GainTable {
    pub fn gain_of(&self, attribute: &str) -> Option<f64> {
        self.gains.iter().find(|(a, _)| a == attribute).map(|(_, g)| *g)
    }
}

impl DecisionTree {
    /// Number of cases under this node.
    pub fn total(&self) -> usize {
        match self {
            DecisionTree::Leaf { count, .. } => *count,
            DecisionTree::Split { branches, .. } => branches.iter().map(|(_, t)| t.total()).sum(),
        }
    }

    /// Branches in print order: ascending subtree support, ties in domain
    /// order. Zero-support branches are dropped.
    pub fn ordered_branches(&self) -> Vec<(&str, &DecisionTree)> {
        match self {
            DecisionTree::Leaf { .. } => Vec::new(),
            DecisionTree::Split { branches, .. } => {
                let mut out: Vec<(usize, &str, &DecisionTree)> = branches
                    .iter()
                    .enumerate()
                    .filter(|(_, (_, t))| t.total() > 0)
                    .map(|(i, (v, t))| (i, v.as_str(), t))
                    .collect();
                out.sort_by_key(|(i, _, t)| (t.total(), *i));
                out.into_iter().map(|(_, v, t)| (v, t)).collect()
            }
        }
    }

    /// Every leaf with its root-to-leaf path, in print order. Includes
    /// zero-count leaves only when `include_empty` is set (they come last
    /// within their parent).
    pub fn leaves(&self, include_empty: bool) -> Vec<(Vec<Condition>, &DecisionTree)> {
        let mut out = Vec::new();
        self.collect_leaves(&mut Vec::new(), include_empty, &mut out);
        out
    }

    fn collect_leaves<'a>(
        &'a self,
        path: &mut Vec<Condition>,
        include_empty: bool,
        out: &mut Vec<(Vec<Condition>, &'a DecisionTree)>,
    ) {
        match self {
            DecisionTree::Leaf { .. } => out.push((path.clone(), self)),
            DecisionTree::Split {
                attribute,
                branches,
                ..
            } => {
                let mut children = self.ordered_branches();
                if include_empty {
                    children.extend(
                        branches
                            .iter()
                            .filter(|(_, t)| t.total() == 0)
                            .map(|(v, t)| (v.as_str(), t)),
                    );
                }
                for (value, child) in children {
                    path.push(Fact::new(attribute.clone(), value));
                    child.collect_leaves(path, include_empty, out);
                    path.pop();
                }
            }
        }
    }

    /// Walks the tree. Returns `None` (unknown) when a tested attribute has no
    /// value or a value with no branch.
    pub fn classify<'a>(&'a self, lookup: impl Fn(&str) -> Option<&'a str>) -> Option<&'a str> {
        self.classify_with(&lookup)
    }

    fn classify_with<'a>(&'a self, lookup: &dyn Fn(&str) -> Option<&'a str>) -> Option<&'a str> {
        match self {
            DecisionTree::Leaf { label, .. } => Some(label.as_str()),
            DecisionTree::Split {
                attribute,
                branches,
                ..
            } => {
                let v = lookup(attribute)?;
                branches
                    .iter()
                    .find(|(bv, _)| bv == v)
                    .and_then(|(_, t)| t.classify_with(lookup))
            }
        }
    }
}

/// Classifies a set of observations; missing values give `None`.
pub fn classify<'a>(tree: &'a DecisionTree, observations: &'a [Fact]) -> Option<&'a str> {
    tree.classify(|attr| {
        observations
            .iter()
            .find(|f| f.attribute == attr)
            .map(|f| f.value.as_str())
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InductionDiagnostic {
    /// Cases agreeing on every candidate attribute but not on the label.
    /// The leaf takes the majority label.
    ContradictoryCases { case_ids: Vec<u32>, path: Vec<Condition> },
    /// A mixed leaf whose labels are tied; the first label in goal-domain
    /// order was used.
    MajorityTie { case_ids: Vec<u32>, chosen: String, path: Vec<Condition> },
    /// The tree is a single leaf and default rules are disabled, so no rule
    /// was produced.
    DefaultRuleSuppressed { label: String },
}

fn path_text(path: &[Condition]) -> String {
    if path.is_empty() {
        return "root".into();
    }
    path.iter().map(Condition::to_string).collect::<Vec<_>>().join(" AND ")
}

fn ids_text(ids: &[u32]) -> String {
    ids.iter().map(u32::to_string).collect::<Vec<_>>().join(", ")
}

impl std::fmt::Display for InductionDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InductionDiagnostic::ContradictoryCases { case_ids, path } => write!(
                f,
                "contradictory cases {} at {}; majority label used",
                ids_text(case_ids),
                path_text(path)
            ),
            InductionDiagnostic::MajorityTie { case_ids, chosen, path } => write!(
                f,
                "tied labels for cases {} at {}; chose {chosen}",
                ids_text(case_ids),
                path_text(path)
            ),
            InductionDiagnostic::DefaultRuleSuppressed { label } => {
                write!(f, "tree is a single leaf ({label}) and default rules are disabled")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InductionError {
    #[error("cannot induce a tree from an empty case set")]
    NoCases,
    #[error("candidate attribute '{0}' is the goal attribute")]
    GoalAsCandidate(String),
    #[error("knowledge base has no definition for goal attribute '{0}'")]
    UnknownGoal(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Induction {
    pub tree: DecisionTree,
    pub diagnostics: Vec<InductionDiagnostic>,
}

/// Shannon entropy (base 2) of a label histogram.
pub fn entropy(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.log2()
        })
        .sum()
}

fn label_counts<'a>(cases: &[&'a CaseRecord]) -> BTreeMap<&'a str, usize> {
    let mut counts = BTreeMap::new();
    for c in cases {
        *counts.entry(c.label.value.as_str()).or_insert(0) += 1;
    }
    counts
}

/// Values an attribute takes: declared domain first, then any extra value
/// seen in the cases.
fn branch_values(attr: &AttributeDef, cases: &[&CaseRecord]) -> Vec<String> {
    let mut values = attr.domain.clone();
    for c in cases {
        if let Some(v) = c.value_of(&attr.name) {
            if !values.iter().any(|x| x == v) {
                values.push(v.to_string());
            }
        }
    }
    values
}

fn gain(attr: &AttributeDef, cases: &[&CaseRecord], node_entropy: f64) -> f64 {
    let n = cases.len() as f64;
    let remainder: f64 = branch_values(attr, cases)
        .iter()
        .map(|v| {
            let subset: Vec<&CaseRecord> = cases
                .iter()
                .copied()
                .filter(|c| c.value_of(&attr.name) == Some(v.as_str()))
                .collect();
            let counts: Vec<usize> = label_counts(&subset).into_values().collect();
            subset.len() as f64 / n * entropy(&counts)
        })
        .sum();
    (node_entropy - remainder).max(0.0)
}

struct Inducer<'a> {
    goal: &'a AttributeDef,
    diagnostics: Vec<InductionDiagnostic>,
}

impl<'a> Inducer<'a> {
    /// Majority label; ties resolved by goal-domain order. Returns the label
    /// and whether a tie occurred.
    fn majority(&self, cases: &[&CaseRecord]) -> (String, bool) {
        let counts = label_counts(cases);
        let best = counts.values().copied().max().unwrap_or(0);
        let mut tied: Vec<&str> = counts
            .iter()
            .filter(|(_, &c)| c == best)
            .map(|(l, _)| *l)
            .collect();
        tied.sort_by_key(|l| (self.goal.value_rank(l), l.to_string()));
        (tied.first().map(|s| s.to_string()).unwrap_or_default(), tied.len() > 1)
    }

    fn build(
        &mut self,
        cases: &[&CaseRecord],
        candidates: &[&AttributeDef],
        parent_majority: &str,
        path: &mut Vec<Condition>,
    ) -> DecisionTree {
        if cases.is_empty() {
            return DecisionTree::Leaf {
                label: parent_majority.to_string(),
                count: 0,
                case_ids: Vec::new(),
            };
        }
        let ids: Vec<u32> = cases.iter().map(|c| c.id).collect();
        let counts = label_counts(cases);
        if counts.len() == 1 {
            return DecisionTree::Leaf {
                label: counts.keys().next().map(|s| s.to_string()).unwrap_or_default(),
                count: cases.len(),
                case_ids: ids,
            };
        }
        let (majority, tie) = self.majority(cases);
        if candidates.is_empty() {
            self.diagnostics.push(InductionDiagnostic::ContradictoryCases {
                case_ids: ids.clone(),
                path: path.clone(),
            });
            if tie {
                self.diagnostics.push(InductionDiagnostic::MajorityTie {
                    case_ids: ids.clone(),
                    chosen: majority.clone(),
                    path: path.clone(),
                });
            }
            return DecisionTree::Leaf {
                label: majority,
                count: cases.len(),
                case_ids: ids,
            };
        }

        let node_entropy = entropy(&counts.values().copied().collect::<Vec<_>>());
        let mut gains: Vec<(String, f64)> = candidates
            .iter()
            .map(|a| (a.name.clone(), gain(a, cases, node_entropy)))
            .collect();
        gains.sort_by(|a, b| a.0.cmp(&b.0));
        let mut best = 0;
        for (i, (_, g)) in gains.iter().enumerate() {
            if *g > gains[best].1 + GAIN_EPSILON {
                best = i;
            }
        }
        let chosen_name = gains[best].0.clone();
        let chosen = *candidates
            .iter()
            .find(|a| a.name == chosen_name)
            .expect("chosen attribute is a candidate");
        let remaining: Vec<&AttributeDef> = candidates
            .iter()
            .copied()
            .filter(|a| a.name != chosen_name)
            .collect();

        let branches = branch_values(chosen, cases)
            .into_iter()
            .map(|v| {
                let subset: Vec<&CaseRecord> = cases
                    .iter()
                    .copied()
                    .filter(|c| c.value_of(&chosen_name) == Some(v.as_str()))
                    .collect();
                path.push(Fact::new(chosen_name.clone(), v.clone()));
                let child = self.build(&subset, &remaining, &majority, path);
                path.pop();
                (v, child)
            })
            .collect();
        DecisionTree::Split {
            attribute: chosen_name,
            gains: GainTable {
                entropy: node_entropy,
                gains,
            },
            branches,
        }
    }
}

/// Induces a decision tree from `cases` over `candidates`.
///
/// Pure nodes become leaves. Otherwise the node splits on the attribute with
/// maximal information gain. Mixed nodes with no attribute left become a
/// majority leaf and raise a diagnostic. Value branches with no cases become
/// zero-count leaves labelled with the parent's majority.
pub fn induce_tree(
    cases: &[CaseRecord],
    candidates: &[AttributeDef],
    goal: &AttributeDef,
) -> Result<Induction, InductionError> {
    if cases.is_empty() {
        return Err(InductionError::NoCases);
    }
    if let Some(a) = candidates.iter().find(|a| a.name == goal.name) {
        return Err(InductionError::GoalAsCandidate(a.name.clone()));
    }
    let refs: Vec<&CaseRecord> = cases.iter().collect();
    let cands: Vec<&AttributeDef> = candidates.iter().collect();
    let mut inducer = Inducer {
        goal,
        diagnostics: Vec::new(),
    };
    let (root_majority, _) = inducer.majority(&refs);
    let tree = inducer.build(&refs, &cands, &root_majority, &mut Vec::new());
    Ok(Induction {
        tree,
        diagnostics: inducer.diagnostics,
    })
}

/// Induces a tree from the knowledge base's stored cases, using every case
/// attribute as a candidate.
pub fn induce_kb(kb: &KnowledgeBase) -> Result<Induction, InductionError> {
    let goal = kb
        .attribute(&kb.goal_attribute)
        .ok_or_else(|| InductionError::UnknownGoal(kb.goal_attribute.clone()))?;
    let candidates: Vec<AttributeDef> = kb
        .case_attributes()
        .into_iter()
        .filter(|a| a != &kb.goal_attribute)
        .map(|name| {
            kb.attribute(&name)
                .cloned()
                .unwrap_or_else(|| AttributeDef::new(name, &[], true))
        })
        .collect();
    induce_tree(&kb.cases, &candidates, goal)
}

/// Rules compiled from a tree.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledRules {
    pub rules: Vec<Rule>,
    pub diagnostics: Vec<InductionDiagnostic>,
}

/// One rule per non-empty leaf, premises in path order, support = leaf count.
///
/// Ids are `r1`, `r2`, ... in report order, so they depend only on the tree.
/// A single-leaf tree yields a default rule when `allow_defaults` is set and
/// nothing (plus a diagnostic) otherwise.
pub fn tree_to_rules(tree: &DecisionTree, goal_attribute: &str, allow_defaults: bool) -> CompiledRules {
    let mut rules = Vec::new();
    let mut diagnostics = Vec::new();
    for (path, leaf) in tree.leaves(false) {
        let DecisionTree::Leaf { label, count, .. } = leaf else {
            continue;
        };
        if path.is_empty() && !allow_defaults {
            diagnostics.push(InductionDiagnostic::DefaultRuleSuppressed {
                label: label.clone(),
            });
            continue;
        }
        let id = format!("r{}", rules.len() + 1);
        rules.push(
            Rule::new(id, path, Fact::new(goal_attribute, label.clone()))
                .with_stats(ExperienceStats::with_support(*count as u64))
                .with_origin(RuleOrigin::Induced),
        );
    }
    CompiledRules { rules, diagnostics }
}
