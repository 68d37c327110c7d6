//! Discovering several concepts from a collection of itemsets.
//!
//! Each itemset is embedded as the mean of its members' one-hot vectors.
//! The embeddings are clustered with k-means (greedy k-means++ seeding,
//! Lloyd iterations), every cluster's itemsets are merged into one positive
//! set, and a concept query is learned per cluster.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::ops::RangeInclusive;

use rand::Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::learner::{learn_concept_query, LearnReport, LearnerConfig};
use crate::par::{self, Execution};
use crate::query::ConceptQuery;
use crate::schema::{Dataset, Item, Schema};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Itemset {
    pub id: String,
    pub members: Vec<Item>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Centroid {
    pub itemset_id: String,
    pub vector: Vec<f64>,
}

pub fn itemset_centroid(itemset: &Itemset, schema: &Schema) -> Result<Centroid> {
    if itemset.members.is_empty() {
        return Err(Error::Empty("itemset"));
    }
    let mut vector = vec![0.0; schema.width()];
    for item in &itemset.members {
        schema.check_values(&item.values)?;
        for (f, &v) in item.values.iter().enumerate() {
            vector[schema.offset(f) + v] += 1.0;
        }
    }
    let n = itemset.members.len() as f64;
    vector.iter_mut().for_each(|x| *x /= n);
    Ok(Centroid {
        itemset_id: itemset.id.clone(),
        vector,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    /// Itemset id to cluster index.
    pub assignments: BTreeMap<String, usize>,
    pub means: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    /// Within-cluster sum of squares after each assignment step.
    pub objective_history: Vec<f64>,
}

impl ClusterModel {
    pub fn inertia(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(0.0)
    }

    pub fn cluster_of(&self, itemset_id: &str) -> Option<usize> {
        self.assignments.get(itemset_id).copied()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in self.assignments.values() {
            sizes[c] += 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusterOptions {
    pub max_iter: usize,
    /// Independent seedings; the run with the lowest final objective wins.
    pub restarts: usize,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        ClusterOptions {
            max_iter: 300,
            restarts: 10,
        }
    }
}

fn sorted_by_id(centroids: &[Centroid]) -> Vec<&Centroid> {
    let mut sorted: Vec<&Centroid> = centroids.iter().collect();
    sorted.sort_by(|a, b| a.itemset_id.cmp(&b.itemset_id));
    sorted
}

fn nearest(point: &[f64], means: &[Vec<f64>]) -> (usize, f64) {
    means
        .iter()
        .enumerate()
        .map(|(c, m)| (c, sq_dist(point, m)))
        .fold(
            (0, f64::INFINITY),
            |best, cur| if cur.1 < best.1 { cur } else { best },
        )
}

/// Greedy k-means++: each new center is the best of a few D^2-sampled
/// candidates.
fn seed_means<R: Rng>(points: &[&[f64]], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut means = vec![points[rng.gen_range(0..n)].to_vec()];
    let mut closest: Vec<f64> = points.iter().map(|p| sq_dist(p, &means[0])).collect();
    while means.len() < k {
        let total: f64 = closest.iter().sum();
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let pick = if total > 0.0 {
                let mut target = rng.gen::<f64>() * total;
                let mut chosen = n - 1;
                for (i, &d) in closest.iter().enumerate() {
                    if d > 0.0 && target < d {
                        chosen = i;
                        break;
                    }
                    target -= d;
                }
                chosen
            } else {
                rng.gen_range(0..n)
            };
            let updated: Vec<f64> = points
                .iter()
                .zip(&closest)
                .map(|(p, &c)| c.min(sq_dist(p, points[pick])))
                .collect();
            let potential: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|(b, _, _)| potential < *b) {
                best = Some((potential, pick, updated));
            }
        }
        let (_, pick, updated) = best.expect("at least two trials");
        closest = updated;
        means.push(points[pick].to_vec());
    }
    means
}

/// One k-means run from a single seeding.
pub fn kmeans(
    centroids: &[Centroid],
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<ClusterModel> {
    if centroids.is_empty() {
        return Err(Error::Empty("centroid list"));
    }
    if k == 0 || k > centroids.len() {
        return Err(Error::KOutOfRange {
            k,
            max: centroids.len(),
        });
    }
    let sorted = sorted_by_id(centroids);
    let points: Vec<&[f64]> = sorted.iter().map(|c| c.vector.as_slice()).collect();
    let n = points.len();
    let dim = points[0].len();
    let mut rng = seed::rng(seed);
    let mut means = seed_means(&points, k, &mut rng);
    let mut labels: Vec<usize> = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter.max(1) {
        iterations += 1;
        let mut next: Vec<usize> = points.iter().map(|p| nearest(p, &means).0).collect();
        repair_empty(&points, &mut means, &mut next, k);
        history.push(
            points
                .iter()
                .zip(&next)
                .map(|(p, &c)| sq_dist(p, &means[c]))
                .sum(),
        );
        let stable = next == labels;
        labels = next;
        update_means(&points, &labels, &mut means, dim);
        if stable {
            converged = true;
            break;
        }
    }

    Ok(ClusterModel {
        k,
        assignments: sorted
            .iter()
            .zip(&labels)
            .map(|(c, &l)| (c.itemset_id.clone(), l))
            .collect(),
        means,
        iterations,
        converged,
        objective_history: history,
    })
}

/// Moves the point farthest from its mean into each empty cluster.
fn repair_empty(points: &[&[f64]], means: &mut [Vec<f64>], labels: &mut [usize], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let far = (0..points.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .map(|i| (i, sq_dist(points[i], &means[labels[i]])))
            .fold(None, |best: Option<(usize, f64)>, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            });
        let Some((i, _)) = far else { return };
        labels[i] = empty;
        means[empty] = points[i].to_vec();
    }
}

fn update_means(points: &[&[f64]], labels: &[usize], means: &mut [Vec<f64>], dim: usize) {
    let mut sums = vec![vec![0.0; dim]; means.len()];
    let mut counts = vec![0usize; means.len()];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        sums[l].iter_mut().zip(p.iter()).for_each(|(s, x)| *s += x);
    }
    for ((m, s), &c) in means.iter_mut().zip(sums).zip(&counts) {
        if c > 0 {
            *m = s.into_iter().map(|x| x / c as f64).collect();
        }
    }
}

/// Best of `options.restarts` k-means runs by final objective.
pub fn kmeans_restarts(
    centroids: &[Centroid],
    k: usize,
    seed: u64,
    options: &ClusterOptions,
) -> Result<ClusterModel> {
    let mut best: Option<ClusterModel> = None;
    for r in 0..options.restarts.max(1) {
        let run_seed = if r == 0 {
            seed
        } else {
            seed::derive(seed, &[r as u64])
        };
        let model = kmeans(centroids, k, run_seed, options.max_iter)?;
        if best.as_ref().is_none_or(|b| model.inertia() < b.inertia()) {
            best = Some(model);
        }
    }
    Ok(best.expect("at least one run"))
}

/// Mean silhouette of a clustering; singleton clusters score 0.
pub fn silhouette(centroids: &[Centroid], model: &ClusterModel) -> f64 {
    let labels: Vec<usize> = centroids
        .iter()
        .map(|c| model.assignments[&c.itemset_id])
        .collect();
    let n = centroids.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; model.k];
        let mut counts = vec![0usize; model.k];
        for j in 0..n {
            if i != j {
                sums[labels[j]] += sq_dist(&centroids[i].vector, &centroids[j].vector).sqrt();
                counts[labels[j]] += 1;
            }
        }
        let own = labels[i];
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..model.k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() && a.max(b) > 0.0 {
            total += (b - a) / a.max(b);
        }
    }
    total / n as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct KSelection {
    pub k: usize,
    pub scores: Vec<(usize, f64)>,
    /// All centroids coincide; silhouette is undefined and `k` is the range
    /// minimum.
    pub degenerate: bool,
}

/// Picks the k in `range` with the highest mean silhouette; ties go to the
/// smallest k.
pub fn select_k_silhouette(
    centroids: &[Centroid],
    range: RangeInclusive<usize>,
    seed: u64,
) -> Result<KSelection> {
    select_k_silhouette_with(centroids, range, seed, &ClusterOptions::default())
}

pub fn select_k_silhouette_with(
    centroids: &[Centroid],
    range: RangeInclusive<usize>,
    seed: u64,
    options: &ClusterOptions,
) -> Result<KSelection> {
    let (lo, hi) = (*range.start(), *range.end());
    if lo < 2 || lo > hi || hi + 1 > centroids.len() {
        return Err(Error::InvalidParameter(format!(
            "k range {lo}..={hi} must lie within 2..={}",
            centroids.len().saturating_sub(1)
        )));
    }
    let first = &centroids[0].vector;
    if centroids.iter().all(|c| &c.vector == first) {
        return Ok(KSelection {
            k: lo,
            scores: Vec::new(),
            degenerate: true,
        });
    }
    let mut scores = Vec::new();
    for k in range {
        let model = kmeans_restarts(centroids, k, seed::derive(seed, &[k as u64]), options)?;
        scores.push((k, silhouette(centroids, &model)));
    }
    let (k, _) = scores
        .iter()
        .copied()
        .fold((lo, f64::NEG_INFINITY), |best, cur| {
            if cur.1 > best.1 {
                cur
            } else {
                best
            }
        });
    Ok(KSelection {
        k,
        scores,
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KChoice {
    Fixed(usize),
    /// Silhouette selection over `min..=max`, clipped to the itemset count.
    Auto {
        min: usize,
        max: usize,
    },
}

impl std::str::FromStr for KChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(KChoice::Auto { min: 2, max: 20 });
        }
        s.parse().map(KChoice::Fixed).map_err(|_| {
            Error::InvalidParameter(format!(
                "k must be a positive integer or \"auto\", got {s:?}"
            ))
        })
    }
}

/// Merged member items of each cluster, itemsets in id order, duplicates
/// kept.
pub fn merge_clusters(itemsets: &[Itemset], model: &ClusterModel) -> Vec<Vec<Item>> {
    let mut sorted: Vec<&Itemset> = itemsets.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut merged = vec![Vec::new(); model.k];
    for set in sorted {
        if let Some(c) = model.cluster_of(&set.id) {
            merged[c].extend(set.members.iter().cloned());
        }
    }
    merged
}

/// Keeps the first item of each distinct value vector.
pub fn dedup_by_value(items: Vec<Item>) -> Vec<Item> {
    let mut seen = HashSet::new();
    items
        .into_iter()
        .filter(|i| seen.insert(i.values.clone()))
        .collect()
}

#[derive(Debug)]
pub struct ClusterConcept {
    pub cluster: usize,
    pub itemset_ids: Vec<String>,
    pub merged_items: usize,
    pub positives: usize,
    pub outcome: Result<(ConceptQuery, LearnReport)>,
}

#[derive(Debug)]
pub struct Discovery {
    pub model: ClusterModel,
    pub k_selection: Option<KSelection>,
    pub concepts: Vec<ClusterConcept>,
    pub warnings: Vec<String>,
}

/// Clusters itemsets and returns the model plus the deduplicated positive
/// set of each cluster.
pub fn cluster_itemsets(
    itemsets: &[Itemset],
    schema: &Schema,
    k: &KChoice,
    seed: u64,
    options: &ClusterOptions,
) -> Result<(ClusterModel, Option<KSelection>)> {
    if itemsets.is_empty() {
        return Err(Error::Empty("itemset collection"));
    }
    let centroids = itemsets
        .iter()
        .map(|p| itemset_centroid(p, schema))
        .collect::<Result<Vec<_>>>()?;
    let ids: HashSet<&str> = itemsets.iter().map(|p| p.id.as_str()).collect();
    if ids.len() != itemsets.len() {
        return Err(Error::InvalidParameter("itemset ids must be unique".into()));
    }
    let (k, selection) = match *k {
        KChoice::Fixed(k) => (k, None),
        KChoice::Auto { min, max } => {
            let hi = max.min(centroids.len().saturating_sub(1));
            if centroids.len() < 3 || hi < min.max(2) {
                (1.min(centroids.len()), None)
            } else {
                let sel = select_k_silhouette_with(&centroids, min.max(2)..=hi, seed, options)?;
                (sel.k, Some(sel))
            }
        }
    };
    let model = kmeans_restarts(&centroids, k, seed, options)?;
    Ok((model, selection))
}

pub fn discover_concepts(
    itemsets: &[Itemset],
    data: &Dataset,
    k: &KChoice,
    config: &LearnerConfig,
) -> Result<Discovery> {
    discover_concepts_with(
        itemsets,
        data,
        k,
        config,
        &ClusterOptions::default(),
        Execution::default(),
    )
}

pub fn discover_concepts_with(
    itemsets: &[Itemset],
    data: &Dataset,
    k: &KChoice,
    config: &LearnerConfig,
    options: &ClusterOptions,
    exec: Execution,
) -> Result<Discovery> {
    config.validate()?;
    let (model, k_selection) = cluster_itemsets(itemsets, &data.schema, k, config.seed, options)?;
    let mut warnings = Vec::new();
    if k_selection.as_ref().is_some_and(|s| s.degenerate) {
        warnings.push("all itemset centroids coincide; silhouette undefined".to_owned());
    }
    let mut members: Vec<Vec<String>> = vec![Vec::new(); model.k];
    for (id, &c) in &model.assignments {
        members[c].push(id.clone());
    }
    let merged = merge_clusters(itemsets, &model);
    let jobs: Vec<(usize, Vec<Item>)> = merged
        .into_iter()
        .enumerate()
        .filter(|(c, items)| {
            if items.is_empty() {
                warnings.push(format!("cluster {c} is empty; skipped"));
                false
            } else {
                true
            }
        })
        .collect();
    let concepts = par::map(&jobs, exec, |(c, items)| {
        let positives = dedup_by_value(items.clone());
        let cluster_config = LearnerConfig {
            seed: seed::derive(config.seed, &[*c as u64]),
            ..*config
        };
        ClusterConcept {
            cluster: *c,
            itemset_ids: members[*c].clone(),
            merged_items: items.len(),
            positives: positives.len(),
            outcome: learn_concept_query(&positives, data, &cluster_config),
        }
    });
    Ok(Discovery {
        model,
        k_selection,
        concepts,
        warnings,
    })
}

#[derive(Deserialize)]
struct WireItemset {
    id: serde_json::Value,
    items: Vec<BTreeMap<String, String>>,
}

/// Parses JSON-lines itemsets, resolving each item by value against `data`.
pub fn parse_itemsets(text: &str, data: &Dataset) -> Result<Vec<Itemset>> {
    let schema = &data.schema;
    let index: HashMap<&[usize], usize> = data
        .items
        .iter()
        .rev()
        .map(|i| (i.values.as_slice(), i.id))
        .collect();
    let mut out = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireItemset = serde_json::from_str(line).map_err(|e| Error::MalformedQuery {
            line: line_no + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        let id = match wire.id {
            serde_json::Value::String(s) => s,
            other => other.to_string(),
        };
        let mut members = Vec::with_capacity(wire.items.len());
        for cells in wire.items {
            let mut values = vec![usize::MAX; schema.num_features()];
            for (name, value) in &cells {
                let f = schema
                    .feature_index(name)
                    .ok_or_else(|| Error::UnknownFeature(name.clone()))?;
                values[f] = schema
                    .value_index(f, value)
                    .ok_or_else(|| Error::UnknownValue {
                        feature: name.clone(),
                        value: value.clone(),
                    })?;
            }
            if let Some(f) = values.iter().position(|&v| v == usize::MAX) {
                return Err(Error::SchemaMismatch(format!(
                    "itemset {id} (line {}) has an item without feature {:?}",
                    line_no + 1,
                    schema.feature_name(f)
                )));
            }
            let item_id = *index.get(values.as_slice()).ok_or_else(|| {
                Error::SchemaMismatch(format!(
                    "itemset {id} (line {}) has an item not present in the dataset",
                    line_no + 1
                ))
            })?;
            members.push(Item::new(item_id, values));
        }
        if members.is_empty() {
            return Err(Error::Empty("itemset"));
        }
        out.push(Itemset { id, members });
    }
    Ok(out)
}

/// One JSON line per itemset, items written as `{feature: value}` maps.
pub fn write_itemsets(itemsets: &[Itemset], schema: &Schema) -> String {
    let mut out = String::new();
    for set in itemsets {
        let items: Vec<BTreeMap<&str, &str>> = set
            .members
            .iter()
            .map(|i| {
                i.values
                    .iter()
                    .enumerate()
                    .map(|(f, &v)| (schema.feature_name(f), schema.value_name(f, v)))
                    .collect()
            })
            .collect();
        let line = serde_json::json!({ "id": set.id, "items": items });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}
