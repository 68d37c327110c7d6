//! Positive-only concept query learning: reliable negatives, a pure-leaf
//! tree, then one disjunct per sufficiently large positive leaf.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::negatives::{likelihood_negatives, rocchio_negatives};
use crate::query::{most_specific_query, ConceptQuery, ConjunctiveQuery};
use crate::schema::{Dataset, Item, Schema};
use crate::seed::DEFAULT_SEED;
use crate::tree::{conflicting_negatives, fit_tree, positive_leaves, DecisionTree, LeafInfo};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegativeMethod {
    Likelihood,
    Rocchio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryType {
    /// Conjunction of the split tests on the root-to-leaf path.
    Dt,
    /// Most specific query covering the leaf's members.
    Items,
}

macro_rules! text_enum {
    ($ty:ty { $($variant:ident => $text:literal),+ }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$variant => $text),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok(Self::$variant),)+
                    other => Err(Error::InvalidParameter(format!(
                        "unknown {} {other:?}", stringify!($ty)
                    ))),
                }
            }
        }
    };
}

text_enum!(NegativeMethod { Likelihood => "likelihood", Rocchio => "rocchio" });
text_enum!(QueryType { Dt => "dt", Items => "items" });

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub negative_method: NegativeMethod,
    pub query_type: QueryType,
    /// Minimum positive-leaf size as a fraction of `|S|`, in `[0, 1]`.
    pub discard_threshold: f64,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            negative_method: NegativeMethod::Likelihood,
            query_type: QueryType::Items,
            discard_threshold: 0.0,
            seed: DEFAULT_SEED,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.discard_threshold) {
            return Err(Error::InvalidParameter(format!(
                "discard threshold {} outside [0, 1]",
                self.discard_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnReport {
    pub positives: usize,
    pub negatives: usize,
    pub conflicts_dropped: usize,
    pub tree_nodes: usize,
    pub tree_leaves: usize,
    pub positive_leaves: usize,
    pub kept_leaves: usize,
    pub discarded_leaves: usize,
    pub min_leaf_size: usize,
    /// Set when every positive leaf was discarded; the query matches nothing.
    pub empty_query: bool,
}

/// Smallest leaf size satisfying `size >= d * |S|`.
pub fn min_leaf_size(discard_threshold: f64, positives: usize) -> usize {
    // A small slack absorbs binary rounding of d (0.1 * 110 = 11.000000000000002).
    (discard_threshold * positives as f64 - 1e-9)
        .ceil()
        .max(0.0) as usize
}

/// Conjunction of a leaf's path tests, with tests on one feature
/// intersected into a single clause.
pub fn leaf_to_dt_query(leaf: &LeafInfo, schema: &Schema) -> Result<ConjunctiveQuery> {
    let mut allowed: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for (test, branch) in &leaf.path {
        let f = test.feature;
        if f >= schema.num_features() || test.value >= schema.domain_size(f) {
            return Err(Error::SchemaMismatch(format!(
                "split test {test:?} outside schema"
            )));
        }
        let set = allowed
            .entry(f)
            .or_insert_with(|| (0..schema.domain_size(f)).collect());
        if *branch {
            let keep = set.contains(&test.value);
            set.clear();
            if keep {
                set.insert(test.value);
            }
        } else {
            set.remove(&test.value);
        }
        if set.is_empty() {
            return Err(Error::InconsistentPath { feature: f });
        }
    }
    ConjunctiveQuery::new(allowed, schema)
}

pub fn leaf_to_items_query(leaf: &LeafInfo, schema: &Schema) -> Result<ConjunctiveQuery> {
    if leaf.members.is_empty() {
        return Err(Error::Empty("leaf member list"));
    }
    most_specific_query(&leaf.members, schema)
}

/// A tree fitted on positives against reliable negatives, from which
/// queries for any discard threshold and query type can be cut.
#[derive(Debug, Clone)]
pub struct LearnedTree {
    pub tree: DecisionTree,
    pub positives: usize,
    pub negatives: usize,
    pub conflicts_dropped: usize,
}

/// Reliable negatives by the given rule, as items.
pub fn reliable_negatives(
    positives: &[Item],
    data: &Dataset,
    method: NegativeMethod,
) -> Result<Vec<Item>> {
    let ids = match method {
        NegativeMethod::Likelihood => likelihood_negatives(positives, data)?,
        NegativeMethod::Rocchio => rocchio_negatives(positives, data)?,
    };
    Ok(ids.into_iter().map(|id| data.items[id].clone()).collect())
}

pub fn fit_concept_tree(
    positives: &[Item],
    data: &Dataset,
    method: NegativeMethod,
    seed: u64,
) -> Result<LearnedTree> {
    if positives.is_empty() {
        return Err(Error::Empty("positive set"));
    }
    let mut negatives = reliable_negatives(positives, data, method)?;
    let conflicts = conflicting_negatives(positives, &negatives);
    for &k in conflicts.iter().rev() {
        negatives.remove(k);
    }
    if negatives.is_empty() {
        return Err(Error::NoNegatives);
    }
    let tree = fit_tree(positives, &negatives, &data.schema, seed)?;
    Ok(LearnedTree {
        tree,
        positives: positives.len(),
        negatives: negatives.len(),
        conflicts_dropped: conflicts.len(),
    })
}

impl LearnedTree {
    /// Disjunction of the kept positive leaves' queries, left to right.
    pub fn concept_query(
        &self,
        discard_threshold: f64,
        query_type: QueryType,
        schema: &Schema,
    ) -> Result<(ConceptQuery, LearnReport)> {
        let leaves = positive_leaves(&self.tree);
        let min_size = min_leaf_size(discard_threshold, self.positives);
        let mut disjuncts = Vec::new();
        for leaf in leaves.iter().filter(|l| l.members.len() >= min_size) {
            disjuncts.push(match query_type {
                QueryType::Dt => leaf_to_dt_query(leaf, schema)?,
                QueryType::Items => leaf_to_items_query(leaf, schema)?,
            });
        }
        let kept = disjuncts.len();
        let report = LearnReport {
            positives: self.positives,
            negatives: self.negatives,
            conflicts_dropped: self.conflicts_dropped,
            tree_nodes: self.tree.node_count(),
            tree_leaves: self.tree.leaf_count(),
            positive_leaves: leaves.len(),
            kept_leaves: kept,
            discarded_leaves: leaves.len() - kept,
            min_leaf_size: min_size,
            empty_query: kept == 0,
        };
        Ok((ConceptQuery { disjuncts }, report))
    }
}

/// Learns a concept query from positive examples `positives` drawn from
/// `data`'s catalog.
pub fn learn_concept_query(
    positives: &[Item],
    data: &Dataset,
    config: &LearnerConfig,
) -> Result<(ConceptQuery, LearnReport)> {
    config.validate()?;
    let learned = fit_concept_tree(positives, data, config.negative_method, config.seed)?;
    learned.concept_query(config.discard_threshold, config.query_type, &data.schema)
}
