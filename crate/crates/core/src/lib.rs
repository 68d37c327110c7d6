//! Learning concept queries from positive examples.
//!
//! A concept query is a disjunction of conjunctive value-set filters over a
//! catalog of items with discrete features. This crate learns such queries
//! from a set of positive items (reliable negatives, a pure-leaf decision
//! tree, and per-leaf query extraction), discovers several concepts at once
//! from a collection of itemsets by clustering their centroids, and ships a
//! simulation harness that measures the learned queries against planted
//! ground truth.
//!
//! Bulk loops (query evaluation, per-item negative classification,
//! experiment grid cells) run on rayon when the `parallel` feature is on and
//! fall back to plain iterators otherwise.

pub mod discovery;
pub mod error;
pub mod harness;
pub mod learner;
pub mod negatives;
pub mod par;
pub mod query;
pub mod schema;
pub mod seed;
pub mod tree;

pub use discovery::{
    discover_concepts, itemset_centroid, kmeans, select_k_silhouette, Centroid, ClusterModel,
    Itemset, KChoice,
};
pub use error::{Error, Result};
pub use learner::{
    leaf_to_dt_query, leaf_to_items_query, learn_concept_query, LearnReport, LearnerConfig,
    NegativeMethod, QueryType,
};
pub use negatives::{likelihood_negatives, rocchio_negatives, MarginalTable, Prototype};
pub use par::Execution;
pub use query::{
    evaluate, most_specific_query, parse_query, serialize_query, ConceptQuery, ConjunctiveQuery,
};
pub use schema::{binarize, load_dataset, BinaryVector, Dataset, Item, Schema};
pub use tree::{fit_tree, positive_leaves, DecisionTree, LeafInfo, LeafLabel, SplitTest};

/// Sorted set of item ids.
pub type IdSet = std::collections::BTreeSet<usize>;
