//! Reliable negatives for positive-unlabelled learning.
//!
//! Two rules pick items of the unlabelled pool that are confidently outside
//! the target concept:
//!
//! * **likelihood**: estimate each feature-value marginal from the positives;
//!   an item carrying any value with marginal zero has joint probability
//!   zero under the positive distribution and is taken as negative.
//! * **Rocchio**: average the one-hot vectors of the positives and of the
//!   unlabelled pool into two prototypes; an unlabelled item strictly closer
//!   (Euclidean) to the unlabelled prototype is taken as negative.
//!
//! Membership of an item in the positive set is decided by value-vector
//! equality, so duplicates of a positive elsewhere in the dataset are never
//! returned and never enter the unlabelled prototype.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::schema::{Dataset, Item, Schema};
use crate::IdSet;

/// Per feature-value frequencies `P(f = v | S) = count / |S|`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTable {
    pub counts: Vec<Vec<usize>>,
    pub probs: Vec<Vec<f64>>,
    pub support_size: usize,
}

impl MarginalTable {
    pub fn estimate(items: &[Item], schema: &Schema) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Empty("positive set"));
        }
        let mut counts: Vec<Vec<usize>> = (0..schema.num_features())
            .map(|f| vec![0; schema.domain_size(f)])
            .collect();
        for item in items {
            schema.check_values(&item.values)?;
            for (f, &v) in item.values.iter().enumerate() {
                counts[f][v] += 1;
            }
        }
        let n = items.len() as f64;
        let probs = counts
            .iter()
            .map(|c| c.iter().map(|&k| k as f64 / n).collect())
            .collect();
        Ok(MarginalTable {
            counts,
            probs,
            support_size: items.len(),
        })
    }

    pub fn prob(&self, feature: usize, value: usize) -> f64 {
        self.probs[feature][value]
    }

    /// True if some value of `item` was never observed.
    pub fn has_zero_marginal(&self, item: &Item) -> bool {
        item.values
            .iter()
            .enumerate()
            .any(|(f, &v)| self.counts[f][v] == 0)
    }
}

fn value_set(items: &[Item]) -> HashSet<&[usize]> {
    items.iter().map(|i| i.values.as_slice()).collect()
}

/// Items outside `positives` with at least one zero-marginal value.
pub fn likelihood_negatives(positives: &[Item], data: &Dataset) -> Result<IdSet> {
    likelihood_negatives_with(positives, data, Execution::default())
}

pub fn likelihood_negatives_with(
    positives: &[Item],
    data: &Dataset,
    exec: Execution,
) -> Result<IdSet> {
    let table = MarginalTable::estimate(positives, &data.schema)?;
    let members = value_set(positives);
    let ids = par::filter_map(&data.items, exec, |item| {
        (table.has_zero_marginal(item) && !members.contains(item.values.as_slice()))
            .then_some(item.id)
    });
    Ok(ids.into_iter().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrototypeSource {
    Labelled,
    Unlabelled,
}

/// Mean of one-hot vectors, kept as integer column counts so that distance
/// comparisons are exact.
#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub source: PrototypeSource,
    pub center: Vec<f64>,
    counts: Vec<u64>,
    offsets: Vec<usize>,
    n: u64,
    count_sq_sum: i128,
}

impl Prototype {
    pub fn from_items<'a>(
        items: impl IntoIterator<Item = &'a Item>,
        schema: &Schema,
        source: PrototypeSource,
    ) -> Self {
        let mut counts = vec![0u64; schema.width()];
        let mut n = 0u64;
        for item in items {
            for (f, &v) in item.values.iter().enumerate() {
                counts[schema.offset(f) + v] += 1;
            }
            n += 1;
        }
        let center = counts
            .iter()
            .map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
            .collect();
        let count_sq_sum = counts.iter().map(|&c| (c as i128) * (c as i128)).sum();
        Prototype {
            source,
            center,
            counts,
            offsets: (0..schema.num_features())
                .map(|f| schema.offset(f))
                .collect(),
            n,
            count_sq_sum,
        }
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `n^2 * ||x - center||^2`, exact.
    fn scaled_sq_distance(&self, item: &Item) -> i128 {
        let n = self.n as i128;
        let hits: i128 = item
            .values
            .iter()
            .enumerate()
            .map(|(f, &v)| self.counts[self.offsets[f] + v] as i128)
            .sum();
        self.count_sq_sum + item.values.len() as i128 * n * n - 2 * n * hits
    }

    /// Euclidean distance from an item's one-hot vector.
    pub fn distance(&self, item: &Item) -> f64 {
        let n = self.n as f64;
        (self.scaled_sq_distance(item) as f64).sqrt() / n
    }

    /// True iff `item` is strictly closer to `self` than to `other`.
    pub fn strictly_closer(&self, other: &Prototype, item: &Item) -> bool {
        let a = self.n as i128;
        let b = other.n as i128;
        self.scaled_sq_distance(item) * b * b < other.scaled_sq_distance(item) * a * a
    }
}

/// Unlabelled items strictly closer to the unlabelled prototype than to the
/// labelled one.
pub fn rocchio_negatives(positives: &[Item], data: &Dataset) -> Result<IdSet> {
    rocchio_negatives_with(positives, data, Execution::default())
}

pub fn rocchio_negatives_with(
    positives: &[Item],
    data: &Dataset,
    exec: Execution,
) -> Result<IdSet> {
    if positives.is_empty() {
        return Err(Error::Empty("positive set"));
    }
    for item in positives {
        data.schema.check_values(&item.values)?;
    }
    let members = value_set(positives);
    let unlabelled: Vec<&Item> = data
        .items
        .iter()
        .filter(|i| !members.contains(i.values.as_slice()))
        .collect();
    if unlabelled.is_empty() {
        return Err(Error::Empty("unlabelled pool"));
    }
    let labelled = Prototype::from_items(positives, &data.schema, PrototypeSource::Labelled);
    let pool = Prototype::from_items(
        unlabelled.iter().copied(),
        &data.schema,
        PrototypeSource::Unlabelled,
    );
    let ids = par::filter_map(&unlabelled, exec, |item| {
        pool.strictly_closer(&labelled, item).then_some(item.id)
    });
    Ok(ids.into_iter().collect())
}
