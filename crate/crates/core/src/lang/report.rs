use crate::induction::DecisionTree;

/// Indented experience report of a decision tree.
///
/// One line per tested value, two spaces per depth. Leaves print
/// `=> label/count`; single-case leaves are bracketed as weak evidence.
/// Siblings are ordered by ascending support, ties in domain order, and
/// zero-support branches are omitted. Every line ends with a newline.
pub fn format_experience_report(tree: &DecisionTree) -> String {
    let mut out = String::new();
    match tree {
        DecisionTree::Leaf { .. } => {
            out.push(' ');
            push_leaf(&mut out, tree);
            out.push('\n');
        }
        DecisionTree::Split { .. } => write_node(&mut out, tree, 0),
    }
    out
}

fn push_leaf(out: &mut String, leaf: &DecisionTree) {
    if let DecisionTree::Leaf { label, count, .. } = leaf {
        if *count == 1 {
            out.push_str(&format!("=> [{label}/{count}]"));
        } else {
            out.push_str(&format!("=> {label}/{count}"));
        }
    }
}

fn write_node(out: &mut String, tree: &DecisionTree, depth: usize) {
    let DecisionTree::Split { attribute, .. } = tree else {
        return;
    };
    for (value, child) in tree.ordered_branches() {
        out.push_str(&"  ".repeat(depth));
        out.push_str(&format!("{attribute}={value}"));
        match child {
            DecisionTree::Leaf { .. } => {
                out.push(' ');
                push_leaf(out, child);
                out.push('\n');
            }
            DecisionTree::Split { .. } => {
                out.push('\n');
                write_node(out, child, depth + 1);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::induction::GainTable;

    fn leaf(label: &str, count: usize) -> DecisionTree {
        DecisionTree::Leaf {
            label: label.into(),
            count,
            case_ids: (1..=count as u32).collect(),
        }
    }

    fn split(attr: &str, branches: Vec<(&str, DecisionTree)>) -> DecisionTree {
        DecisionTree::Split {
            attribute: attr.into(),
            gains: GainTable {
                entropy: 1.0,
                gains: vec![],
            },
            branches: branches.into_iter().map(|(v, t)| (v.to_string(), t)).collect(),
        }
    }

    #[test]
    fn single_leaf() {
        assert_eq!(format_experience_report(&leaf("positive", 5)), " => positive/5\n");
        assert_eq!(format_experience_report(&leaf("positive", 1)), " => [positive/1]\n");
    }

    #[test]
    fn orders_by_support_then_domain() {
        let t = split(
            "a",
            vec![
                ("yes", leaf("p", 3)),
                ("no", split("b", vec![("yes", leaf("n", 1)), ("no", leaf("p", 1))])),
                ("maybe", leaf("n", 0)),
            ],
        );
        assert_eq!(
            format_experience_report(&t),
            "a=no\n  b=yes => [n/1]\n  b=no => [p/1]\na=yes => p/3\n"
        );
    }
}
