//! Binary decision tree over one-hot categorical tests, grown to pure leaves.
//!
//! Each internal node tests `x_f = v`; the `true` branch is the left child.
//! Splits are chosen by Gini impurity with exact rational arithmetic, ties
//! going to the lowest `(feature, value)` column. There is no depth limit,
//! pruning, or minimum leaf size.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt::Write;

use crate::error::{Error, Result};
use crate::schema::{Item, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SplitTest {
    pub feature: usize,
    pub value: usize,
}

impl SplitTest {
    pub fn eval(&self, item: &Item) -> bool {
        item.values[self.feature] == self.value
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LeafLabel {
    Positive,
    Negative,
    /// Identical value vectors carry both labels.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConflictPolicy {
    /// Refuse to fit when a value vector appears with both labels.
    Reject,
    /// Fit anyway; such vectors end in `Mixed` leaves.
    Tolerate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Node {
    Split {
        test: SplitTest,
        yes: usize,
        no: usize,
    },
    Leaf {
        label: LeafLabel,
        members: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    training: Vec<Item>,
    labels: Vec<bool>,
    seed: u64,
}

/// A leaf with its training members and root-to-leaf path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafInfo {
    pub leaf_id: usize,
    pub label: LeafLabel,
    pub members: Vec<Item>,
    pub path: Vec<(SplitTest, bool)>,
}

impl LeafInfo {
    pub fn member_ids(&self) -> Vec<usize> {
        self.members.iter().map(|i| i.id).collect()
    }
}

/// Value vectors shared between the two classes, as indices into `negatives`.
pub fn conflicting_negatives(positives: &[Item], negatives: &[Item]) -> Vec<usize> {
    let pos: HashSet<&[usize]> = positives.iter().map(|i| i.values.as_slice()).collect();
    negatives
        .iter()
        .enumerate()
        .filter(|(_, n)| pos.contains(n.values.as_slice()))
        .map(|(k, _)| k)
        .collect()
}

pub fn fit_tree(
    positives: &[Item],
    negatives: &[Item],
    schema: &Schema,
    seed: u64,
) -> Result<DecisionTree> {
    fit_tree_with(positives, negatives, schema, seed, ConflictPolicy::Reject)
}

pub fn fit_tree_with(
    positives: &[Item],
    negatives: &[Item],
    schema: &Schema,
    seed: u64,
    policy: ConflictPolicy,
) -> Result<DecisionTree> {
    if positives.is_empty() {
        return Err(Error::Empty("positive class"));
    }
    if negatives.is_empty() {
        return Err(Error::Empty("negative class"));
    }
    for item in positives.iter().chain(negatives) {
        schema.check_values(&item.values)?;
    }
    if policy == ConflictPolicy::Reject {
        let conflicts = conflicting_negatives(positives, negatives);
        if let Some(&first) = conflicts.first() {
            return Err(Error::LabelConflict {
                count: conflicts.len(),
                first_item: negatives[first].id,
            });
        }
    }
    let training: Vec<Item> = positives.iter().chain(negatives).cloned().collect();
    let labels: Vec<bool> = (0..training.len()).map(|k| k < positives.len()).collect();
    let mut builder = Builder {
        schema,
        training: &training,
        labels: &labels,
        nodes: Vec::new(),
    };
    builder.grow((0..training.len()).collect());
    let nodes = builder.nodes;
    Ok(DecisionTree {
        nodes,
        training,
        labels,
        seed,
    })
}

struct Builder<'a> {
    schema: &'a Schema,
    training: &'a [Item],
    labels: &'a [bool],
    nodes: Vec<Node>,
}

/// Sum of squared class counts over node size, `(p^2 + q^2) / n`, kept as a
/// fraction. Larger means purer.
#[derive(Clone, Copy)]
struct Purity {
    num: u128,
    den: u128,
}

impl Purity {
    fn of(pos: u64, neg: u64) -> Self {
        let (p, q) = (pos as u128, neg as u128);
        Purity {
            num: p * p + q * q,
            den: p + q,
        }
    }

    fn plus(self, other: Purity) -> Purity {
        Purity {
            num: self.num * other.den + other.num * self.den,
            den: self.den * other.den,
        }
    }

    fn cmp(&self, other: &Purity) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

impl Builder<'_> {
    fn grow(&mut self, members: Vec<usize>) -> usize {
        let pos = members.iter().filter(|&&k| self.labels[k]).count();
        let id = self.nodes.len();
        if pos == 0 || pos == members.len() {
            let label = if pos == 0 {
                LeafLabel::Negative
            } else {
                LeafLabel::Positive
            };
            self.nodes.push(Node::Leaf { label, members });
            return id;
        }
        let Some(test) = self.best_split(&members, pos) else {
            self.nodes.push(Node::Leaf {
                label: LeafLabel::Mixed,
                members,
            });
            return id;
        };
        let (yes, no): (Vec<usize>, Vec<usize>) = members
            .into_iter()
            .partition(|&k| test.eval(&self.training[k]));
        // placeholder, patched once the children exist
        self.nodes.push(Node::Split {
            test,
            yes: 0,
            no: 0,
        });
        let yes = self.grow(yes);
        let no = self.grow(no);
        self.nodes[id] = Node::Split { test, yes, no };
        id
    }

    /// Best non-trivial split by Gini. Zero-gain splits are accepted when
    /// nothing better exists so that impure nodes keep splitting until every
    /// leaf is pure or holds identical value vectors only.
    fn best_split(&self, members: &[usize], pos: usize) -> Option<SplitTest> {
        let width = self.schema.width();
        let mut pos_hits = vec![0u64; width];
        let mut all_hits = vec![0u64; width];
        for &k in members {
            let item = &self.training[k];
            for (f, &v) in item.values.iter().enumerate() {
                let col = self.schema.offset(f) + v;
                all_hits[col] += 1;
                if self.labels[k] {
                    pos_hits[col] += 1;
                }
            }
        }
        let n = members.len() as u64;
        let pos = pos as u64;
        let mut best: Option<(Purity, SplitTest)> = None;
        for f in 0..self.schema.num_features() {
            for v in 0..self.schema.domain_size(f) {
                let col = self.schema.offset(f) + v;
                let left = all_hits[col];
                if left == 0 || left == n {
                    continue;
                }
                let lp = pos_hits[col];
                let score =
                    Purity::of(lp, left - lp).plus(Purity::of(pos - lp, (n - left) - (pos - lp)));
                if best
                    .as_ref()
                    .is_none_or(|(b, _)| score.cmp(b) == Ordering::Greater)
                {
                    best = Some((
                        score,
                        SplitTest {
                            feature: f,
                            value: v,
                        },
                    ));
                }
            }
        }
        best.map(|(_, t)| t)
    }
}

impl DecisionTree {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { yes, no, .. } => 1 + go(nodes, *yes).max(go(nodes, *no)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn training_items(&self) -> &[Item] {
        &self.training
    }

    pub fn training_labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn predict(&self, item: &Item) -> LeafLabel {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { label, .. } => return *label,
                Node::Split { test, yes, no } => id = if test.eval(item) { *yes } else { *no },
            }
        }
    }

    /// All leaves, left (test true) before right.
    pub fn leaves(&self) -> Vec<LeafInfo> {
        let mut out = Vec::new();
        let mut path = Vec::new();
        self.collect(0, &mut path, &mut out);
        out
    }

    fn collect(&self, id: usize, path: &mut Vec<(SplitTest, bool)>, out: &mut Vec<LeafInfo>) {
        match &self.nodes[id] {
            Node::Leaf { label, members } => out.push(LeafInfo {
                leaf_id: id,
                label: *label,
                members: members.iter().map(|&k| self.training[k].clone()).collect(),
                path: path.clone(),
            }),
            Node::Split { test, yes, no } => {
                path.push((*test, true));
                self.collect(*yes, path, out);
                path.pop();
                path.push((*test, false));
                self.collect(*no, path, out);
                path.pop();
            }
        }
    }

    /// Indented text dump for inspection; not a stable format.
    pub fn dump(&self, schema: &Schema) -> String {
        let mut s = String::new();
        self.dump_node(0, 0, schema, &mut s);
        s
    }

    fn dump_node(&self, id: usize, depth: usize, schema: &Schema, out: &mut String) {
        let pad = "  ".repeat(depth);
        match &self.nodes[id] {
            Node::Leaf { label, members } => {
                let _ = writeln!(out, "{pad}leaf #{id} {label:?} ({} items)", members.len());
            }
            Node::Split { test, yes, no } => {
                let name = schema.feature_name(test.feature);
                let value = schema.value_name(test.feature, test.value);
                let _ = writeln!(out, "{pad}{name} = {value}");
                self.dump_node(*yes, depth + 1, schema, out);
                let _ = writeln!(out, "{pad}{name} != {value}");
                self.dump_node(*no, depth + 1, schema, out);
            }
        }
    }
}

/// Positive leaves in left-to-right order.
pub fn positive_leaves(tree: &DecisionTree) -> Vec<LeafInfo> {
    tree.leaves()
        .into_iter()
        .filter(|l| l.label == LeafLabel::Positive)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{parse_dataset, Dataset};

    #[test]
    fn forced_single_split() {
        let d = parse_dataset("color,size\nred,s\nred,m\nblue,s\nblue,m\n").unwrap();
        let red = d.schema.value_index(0, "red").unwrap();
        let pos: Vec<Item> = d
            .items
            .iter()
            .filter(|i| i.values[0] == red)
            .cloned()
            .collect();
        let neg: Vec<Item> = d
            .items
            .iter()
            .filter(|i| i.values[0] != red)
            .cloned()
            .collect();
        let t = fit_tree(&pos, &neg, &d.schema, 0).unwrap();
        assert_eq!(t.depth(), 1);
        assert_eq!(t.leaf_count(), 2);
        let leaves = positive_leaves(&t);
        assert_eq!(leaves.len(), 1);
        // Binary domain: color=blue and color=red split equally well; the
        // lowest column (blue) wins, so the positive leaf is its false branch.
        let blue = d.schema.value_index(0, "blue").unwrap();
        assert_eq!(
            leaves[0].path,
            vec![(
                SplitTest {
                    feature: 0,
                    value: blue
                },
                false
            )]
        );
        assert_eq!(leaves[0].members.len(), 2);
        assert!(t.dump(&d.schema).contains("color = blue"));
    }

    #[test]
    fn declared_value_order_breaks_ties() {
        let schema = Schema::from_pairs([("color", vec!["red", "blue"])]).unwrap();
        let d = Dataset::new(schema, vec![vec![0], vec![0], vec![1]]).unwrap();
        let t = fit_tree(&d.items[..2], &d.items[2..], &d.schema, 0).unwrap();
        assert_eq!(t.depth(), 1);
        assert_eq!(
            positive_leaves(&t)[0].path,
            vec![(
                SplitTest {
                    feature: 0,
                    value: 0
                },
                true
            )]
        );
    }

    #[test]
    fn single_split_on_true_branch() {
        let d = parse_dataset("color\nred\nred\nblue\ngreen\n").unwrap();
        let red = d.schema.value_index(0, "red").unwrap();
        let (pos, neg): (Vec<Item>, Vec<Item>) =
            d.items.iter().cloned().partition(|i| i.values[0] == red);
        let t = fit_tree(&pos, &neg, &d.schema, 0).unwrap();
        let leaves = positive_leaves(&t);
        assert_eq!(leaves.len(), 1);
        assert_eq!(
            leaves[0].path,
            vec![(
                SplitTest {
                    feature: 0,
                    value: red
                },
                true
            )]
        );
    }

    #[test]
    fn identical_classes_rejected() {
        let d = parse_dataset("color\nred\nblue\n").unwrap();
        let err = fit_tree(&d.items, &d.items, &d.schema, 0).unwrap_err();
        assert!(matches!(err, Error::LabelConflict { count: 2, .. }));
        assert!(matches!(
            fit_tree(&[], &d.items, &d.schema, 0),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn tolerated_conflicts_become_mixed() {
        let d = parse_dataset("color\nred\nblue\n").unwrap();
        let neg = vec![d.items[0].clone(), d.items[1].clone()];
        let t = fit_tree_with(&d.items[..1], &neg, &d.schema, 0, ConflictPolicy::Tolerate).unwrap();
        assert!(t.leaves().iter().any(|l| l.label == LeafLabel::Mixed));
    }

    #[test]
    fn xor_is_split_to_purity() {
        let d = parse_dataset("a,b\n0,0\n1,1\n0,1\n1,0\n").unwrap();
        let t = fit_tree(&d.items[..2], &d.items[2..], &d.schema, 0).unwrap();
        assert!(t.leaves().iter().all(|l| l.label != LeafLabel::Mixed));
        assert_eq!(positive_leaves(&t).len(), 2);
    }

    #[test]
    fn no_positive_training_items_means_no_positive_leaves() {
        let d = parse_dataset("color\nred\nblue\n").unwrap();
        let neg = d.items.clone();
        let t = fit_tree_with(&d.items[..1], &neg, &d.schema, 0, ConflictPolicy::Tolerate).unwrap();
        assert!(positive_leaves(&t).is_empty());
    }
}
