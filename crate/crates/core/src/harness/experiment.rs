//! Experiment grids.
//!
//! Experiment 1 samples positives from one planted concept (optionally with
//! noise), learns a query, and scores it against the concept's extension.
//! Experiment 2 samples itemsets from several concepts, discovers concepts
//! by clustering, and maps each learned concept to its best-f1 source.
//!
//! Every random stream is derived from the master seed and the cell's
//! coordinates, so results do not depend on scheduling. The sample of a
//! `(concept, s, n, repeat)` cell is shared by all methods, thresholds and
//! query types, which makes their metrics directly comparable.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::metrics::set_metrics;
use super::world::{sample_with_noise, World, WorldSpec};
use crate::discovery::{
    cluster_itemsets, dedup_by_value, merge_clusters, ClusterOptions, Itemset, KChoice,
};
use crate::error::{Error, Result};
use crate::learner::{fit_concept_tree, LearnedTree, NegativeMethod, QueryType};
use crate::par::{self, Execution};
use crate::query::evaluate_with;
use crate::seed::{self, ratio_key, DEFAULT_SEED};

fn method_key(m: NegativeMethod) -> u64 {
    match m {
        NegativeMethod::Likelihood => 1,
        NegativeMethod::Rocchio => 2,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exp1Config {
    pub sample_sizes: Vec<usize>,
    pub noise_ratios: Vec<f64>,
    pub discard_thresholds: Vec<f64>,
    pub methods: Vec<NegativeMethod>,
    pub query_types: Vec<QueryType>,
    pub repeats: usize,
    pub master_seed: u64,
    /// Concept ids to run; all when absent.
    pub concepts: Option<Vec<usize>>,
    /// Adds per-cell wall time, which makes reports non-reproducible.
    pub record_timings: bool,
}

impl Default for Exp1Config {
    fn default() -> Self {
        Exp1Config::desk()
    }
}

impl Exp1Config {
    pub fn desk() -> Self {
        Exp1Config {
            sample_sizes: vec![20, 50, 100, 200, 500],
            noise_ratios: vec![0.0, 0.1, 0.2],
            discard_thresholds: vec![0.0, 0.1, 0.2],
            methods: vec![NegativeMethod::Likelihood, NegativeMethod::Rocchio],
            query_types: vec![QueryType::Dt, QueryType::Items],
            repeats: 3,
            master_seed: DEFAULT_SEED,
            concepts: None,
            record_timings: false,
        }
    }

    pub fn full() -> Self {
        Exp1Config {
            sample_sizes: vec![20, 50, 100, 200, 500, 1000],
            repeats: 5,
            ..Exp1Config::desk()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.sample_sizes.is_empty()
            || self.noise_ratios.is_empty()
            || self.discard_thresholds.is_empty()
            || self.methods.is_empty()
            || self.query_types.is_empty()
        {
            return Err(Error::InvalidParameter(
                "experiment grids must be non-empty".into(),
            ));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidParameter("repeats must be at least 1".into()));
        }
        if let Some(d) = self
            .discard_thresholds
            .iter()
            .find(|d| !(0.0..=1.0).contains(*d))
        {
            return Err(Error::InvalidParameter(format!(
                "discard threshold {d} outside [0, 1]"
            )));
        }
        Ok(())
    }
}

/// One learned query scored against its source concept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp1Row {
    pub concept: usize,
    pub s: usize,
    pub n: f64,
    pub d: f64,
    pub method: NegativeMethod,
    pub query_type: QueryType,
    pub repeat: usize,
    pub sample_seed: u64,
    pub positives: usize,
    pub negatives: Option<usize>,
    pub tree_nodes: Option<usize>,
    pub positive_leaves: Option<usize>,
    pub kept_leaves: Option<usize>,
    pub discarded_leaves: Option<usize>,
    pub predicted: Option<usize>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub wall_ms: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp1Aggregate {
    pub concept: Option<usize>,
    pub s: usize,
    pub n: f64,
    pub d: f64,
    pub method: NegativeMethod,
    pub query_type: QueryType,
    pub cells: usize,
    pub failures: usize,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
    pub std_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp1Report {
    pub world_seed: u64,
    pub world: WorldSpec,
    pub config: Exp1Config,
    pub rows: Vec<Exp1Row>,
    /// Mean over repeats for each concept.
    pub per_concept: Vec<Exp1Aggregate>,
    /// Mean over concepts and repeats.
    pub summary: Vec<Exp1Aggregate>,
}

impl Exp1Report {
    pub fn summary_cell(
        &self,
        s: usize,
        n: f64,
        d: f64,
        method: NegativeMethod,
        query_type: QueryType,
    ) -> Option<&Exp1Aggregate> {
        self.summary.iter().find(|a| {
            a.s == s && a.n == n && a.d == d && a.method == method && a.query_type == query_type
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv(out, &self.rows)
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv(out, &self.summary)
    }
}

pub(crate) fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Csv {
            row: 0,
            message: e.to_string(),
        })?;
    }
    w.flush().map_err(|e| Error::Csv {
        row: 0,
        message: e.to_string(),
    })
}

struct Unit {
    concept: usize,
    s: usize,
    n: f64,
    method: NegativeMethod,
    repeat: usize,
}

pub fn run_experiment_1(world: &World, config: &Exp1Config) -> Result<Exp1Report> {
    run_experiment_1_with(world, config, Execution::default())
}

pub fn run_experiment_1_with(
    world: &World,
    config: &Exp1Config,
    exec: Execution,
) -> Result<Exp1Report> {
    config.validate()?;
    let concept_ids: Vec<usize> = match &config.concepts {
        Some(ids) => ids.clone(),
        None => world.concepts.iter().map(|c| c.id).collect(),
    };
    if let Some(bad) = concept_ids.iter().find(|&&id| id >= world.concepts.len()) {
        return Err(Error::InvalidParameter(format!("unknown concept id {bad}")));
    }
    let mut units = Vec::new();
    for &concept in &concept_ids {
        for &s in &config.sample_sizes {
            for &n in &config.noise_ratios {
                for &method in &config.methods {
                    for repeat in 0..config.repeats {
                        units.push(Unit {
                            concept,
                            s,
                            n,
                            method,
                            repeat,
                        });
                    }
                }
            }
        }
    }
    let rows: Vec<Exp1Row> = par::map(&units, exec, |u| run_unit(world, config, u))
        .into_iter()
        .flatten()
        .collect();
    let per_concept = aggregate(&rows, true);
    let summary = aggregate(&rows, false);
    Ok(Exp1Report {
        world_seed: world.seed,
        world: world.spec.clone(),
        config: config.clone(),
        rows,
        per_concept,
        summary,
    })
}

fn run_unit(world: &World, config: &Exp1Config, u: &Unit) -> Vec<Exp1Row> {
    let started = Instant::now();
    let sample_seed = seed::derive(
        config.master_seed,
        &[
            u.concept as u64,
            u.s as u64,
            ratio_key(u.n),
            u.repeat as u64,
        ],
    );
    let concept = &world.concepts[u.concept];
    let row = |d: f64, query_type: QueryType| Exp1Row {
        concept: u.concept,
        s: u.s,
        n: u.n,
        d,
        method: u.method,
        query_type,
        repeat: u.repeat,
        sample_seed,
        positives: 0,
        negatives: None,
        tree_nodes: None,
        positive_leaves: None,
        kept_leaves: None,
        discarded_leaves: None,
        predicted: None,
        precision: None,
        recall: None,
        f1: None,
        wall_ms: None,
        error: None,
    };
    let fitted =
        sample_with_noise(concept, &world.data, u.s, u.n, sample_seed).and_then(|sample| {
            let tree_seed = seed::derive(sample_seed, &[method_key(u.method)]);
            fit_concept_tree(&sample, &world.data, u.method, tree_seed).map(|t| (sample.len(), t))
        });
    let mut rows = Vec::new();
    for &d in &config.discard_thresholds {
        for &qt in &config.query_types {
            let mut r = row(d, qt);
            match &fitted {
                Err(e) => r.error = Some(e.to_string()),
                Ok((size, learned)) => {
                    r.positives = *size;
                    if let Err(e) = score(learned, d, qt, world, concept.id, &mut r) {
                        r.error = Some(e.to_string());
                    }
                }
            }
            rows.push(r);
        }
    }
    if config.record_timings {
        let ms = started.elapsed().as_secs_f64() * 1e3 / rows.len() as f64;
        rows.iter_mut().for_each(|r| r.wall_ms = Some(ms));
    }
    rows
}

fn score(
    learned: &LearnedTree,
    d: f64,
    qt: QueryType,
    world: &World,
    concept: usize,
    r: &mut Exp1Row,
) -> Result<()> {
    let (query, report) = learned.concept_query(d, qt, &world.data.schema)?;
    let predicted = evaluate_with(&query, &world.data, Execution::Sequential)?;
    let m = set_metrics(&predicted, &world.concepts[concept].extension);
    r.negatives = Some(report.negatives);
    r.tree_nodes = Some(report.tree_nodes);
    r.positive_leaves = Some(report.positive_leaves);
    r.kept_leaves = Some(report.kept_leaves);
    r.discarded_leaves = Some(report.discarded_leaves);
    r.predicted = Some(predicted.len());
    r.precision = Some(m.precision);
    r.recall = Some(m.recall);
    r.f1 = Some(m.f1);
    Ok(())
}

type GroupKey = (Option<usize>, usize, u64, u64, NegativeMethod, QueryType);

fn aggregate(rows: &[Exp1Row], per_concept: bool) -> Vec<Exp1Aggregate> {
    let mut groups: BTreeMap<GroupKey, Vec<&Exp1Row>> = BTreeMap::new();
    for r in rows {
        let key = (
            per_concept.then_some(r.concept),
            r.s,
            ratio_key(r.n),
            ratio_key(r.d),
            r.method,
            r.query_type,
        );
        groups.entry(key).or_default().push(r);
    }
    groups
        .into_values()
        .map(|rs| {
            let ok: Vec<&&Exp1Row> = rs.iter().filter(|r| r.f1.is_some()).collect();
            let mean = |f: fn(&Exp1Row) -> Option<f64>| {
                if ok.is_empty() {
                    0.0
                } else {
                    ok.iter().filter_map(|r| f(r)).sum::<f64>() / ok.len() as f64
                }
            };
            let mean_f1 = mean(|r| r.f1);
            let std_f1 = if ok.len() < 2 {
                0.0
            } else {
                (ok.iter()
                    .map(|r| (r.f1.unwrap() - mean_f1).powi(2))
                    .sum::<f64>()
                    / (ok.len() - 1) as f64)
                    .sqrt()
            };
            let first = rs[0];
            Exp1Aggregate {
                concept: per_concept.then_some(first.concept),
                s: first.s,
                n: first.n,
                d: first.d,
                method: first.method,
                query_type: first.query_type,
                cells: rs.len(),
                failures: rs.len() - ok.len(),
                mean_precision: mean(|r| r.precision),
                mean_recall: mean(|r| r.recall),
                mean_f1,
                std_f1,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exp2Config {
    pub sources: usize,
    pub itemsets_min: usize,
    pub itemsets_max: usize,
    pub itemset_size_min: usize,
    pub itemset_size_max: usize,
    pub discard_thresholds: Vec<f64>,
    pub methods: Vec<NegativeMethod>,
    pub query_types: Vec<QueryType>,
    pub repeats: usize,
    pub master_seed: u64,
    /// A learned concept counts as mapped when its best f1 exceeds this.
    pub f1_cutoff: f64,
    /// Number of clusters; defaults to the number of sources.
    pub k: Option<usize>,
    pub max_iter: usize,
    pub restarts: usize,
}

impl Default for Exp2Config {
    fn default() -> Self {
        Exp2Config::desk()
    }
}

impl Exp2Config {
    pub fn desk() -> Self {
        Exp2Config {
            sources: 10,
            itemsets_min: 5,
            itemsets_max: 15,
            itemset_size_min: 15,
            itemset_size_max: 40,
            discard_thresholds: vec![0.0, 0.1, 0.2],
            methods: vec![NegativeMethod::Likelihood, NegativeMethod::Rocchio],
            query_types: vec![QueryType::Dt, QueryType::Items],
            repeats: 10,
            master_seed: DEFAULT_SEED,
            f1_cutoff: 0.7,
            k: None,
            max_iter: 300,
            restarts: 10,
        }
    }

    pub fn full() -> Self {
        Exp2Config {
            sources: 40,
            ..Exp2Config::desk()
        }
    }

    fn validate(&self, world: &World) -> Result<()> {
        if self.sources == 0 || self.sources > world.concepts.len() {
            return Err(Error::InvalidParameter(format!(
                "{} sources requested, world has {} concepts",
                self.sources,
                world.concepts.len()
            )));
        }
        if self.itemsets_min == 0
            || self.itemsets_min > self.itemsets_max
            || self.itemset_size_min == 0
            || self.itemset_size_min > self.itemset_size_max
        {
            return Err(Error::InvalidParameter(
                "itemset count/size ranges are invalid".into(),
            ));
        }
        if self.repeats == 0
            || self.discard_thresholds.is_empty()
            || self.methods.is_empty()
            || self.query_types.is_empty()
        {
            return Err(Error::InvalidParameter(
                "experiment grids must be non-empty".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mapping {
    pub cluster: usize,
    pub source: Option<usize>,
    pub f1: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Row {
    pub repeat: usize,
    pub d: f64,
    pub method: NegativeMethod,
    pub query_type: QueryType,
    pub itemsets: usize,
    pub learned: usize,
    pub mapped: usize,
    pub failures: usize,
    pub overlap_accuracy: f64,
    pub mean_best_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Aggregate {
    pub d: f64,
    pub method: NegativeMethod,
    pub query_type: QueryType,
    pub repeats: usize,
    pub mean_overlap_accuracy: f64,
    /// Mapped over learned, pooled across repeats.
    pub pooled_overlap_accuracy: f64,
    pub mean_best_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Report {
    pub world_seed: u64,
    pub world: WorldSpec,
    pub config: Exp2Config,
    pub rows: Vec<Exp2Row>,
    pub mappings: Vec<(usize, f64, NegativeMethod, QueryType, Vec<Mapping>)>,
    pub summary: Vec<Exp2Aggregate>,
}

impl Exp2Report {
    pub fn summary_cell(
        &self,
        d: f64,
        method: NegativeMethod,
        query_type: QueryType,
    ) -> Option<&Exp2Aggregate> {
        self.summary
            .iter()
            .find(|a| a.d == d && a.method == method && a.query_type == query_type)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv(out, &self.rows)
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv(out, &self.summary)
    }
}

/// Draws itemsets for `sources`, shuffled and given opaque ids.
pub fn sample_itemsets(
    world: &World,
    sources: &[usize],
    config: &Exp2Config,
    sample_seed: u64,
) -> Result<Vec<Itemset>> {
    let mut rng = seed::rng(sample_seed);
    let mut sets = Vec::new();
    for &src in sources {
        let ext: Vec<usize> = world.concepts[src].extension.iter().copied().collect();
        let count = rng.gen_range(config.itemsets_min..=config.itemsets_max);
        for _ in 0..count {
            let size = rng.gen_range(config.itemset_size_min..=config.itemset_size_max);
            if size > ext.len() {
                return Err(Error::InvalidParameter(format!(
                    "itemset size {size} exceeds extension of concept {src}"
                )));
            }
            let ids: Vec<usize> = index::sample(&mut rng, ext.len(), size)
                .into_iter()
                .map(|k| ext[k])
                .collect();
            sets.push(world.data.select(&ids)?);
        }
    }
    sets.shuffle(&mut rng);
    Ok(sets
        .into_iter()
        .enumerate()
        .map(|(i, members)| Itemset {
            id: format!("p{i:04}"),
            members,
        })
        .collect())
}

pub fn run_experiment_2(world: &World, config: &Exp2Config) -> Result<Exp2Report> {
    run_experiment_2_with(world, config, Execution::default())
}

pub fn run_experiment_2_with(
    world: &World,
    config: &Exp2Config,
    exec: Execution,
) -> Result<Exp2Report> {
    config.validate(world)?;
    let repeats: Vec<usize> = (0..config.repeats).collect();
    let per_repeat = par::map(&repeats, exec, |&r| run_repeat(world, config, r));
    let mut rows = Vec::new();
    let mut mappings = Vec::new();
    for result in per_repeat {
        let (r_rows, r_maps) = result?;
        rows.extend(r_rows);
        mappings.extend(r_maps);
    }
    let mut groups: BTreeMap<(u64, NegativeMethod, QueryType), Vec<&Exp2Row>> = BTreeMap::new();
    for r in &rows {
        groups
            .entry((ratio_key(r.d), r.method, r.query_type))
            .or_default()
            .push(r);
    }
    let summary = groups
        .into_values()
        .map(|rs| {
            let n = rs.len() as f64;
            let learned: usize = rs.iter().map(|r| r.learned).sum();
            let mapped: usize = rs.iter().map(|r| r.mapped).sum();
            Exp2Aggregate {
                d: rs[0].d,
                method: rs[0].method,
                query_type: rs[0].query_type,
                repeats: rs.len(),
                mean_overlap_accuracy: rs.iter().map(|r| r.overlap_accuracy).sum::<f64>() / n,
                pooled_overlap_accuracy: if learned == 0 {
                    0.0
                } else {
                    mapped as f64 / learned as f64
                },
                mean_best_f1: rs.iter().map(|r| r.mean_best_f1).sum::<f64>() / n,
            }
        })
        .collect();
    Ok(Exp2Report {
        world_seed: world.seed,
        world: world.spec.clone(),
        config: config.clone(),
        rows,
        mappings,
        summary,
    })
}

type RepeatOutput = (
    Vec<Exp2Row>,
    Vec<(usize, f64, NegativeMethod, QueryType, Vec<Mapping>)>,
);

fn run_repeat(world: &World, config: &Exp2Config, repeat: usize) -> Result<RepeatOutput> {
    let repeat_seed = seed::derive(config.master_seed, &[repeat as u64]);
    let mut rng = seed::rng(repeat_seed);
    let mut sources: Vec<usize> =
        index::sample(&mut rng, world.concepts.len(), config.sources).into_vec();
    sources.sort_unstable();
    let itemsets = sample_itemsets(world, &sources, config, seed::derive(repeat_seed, &[1]))?;
    let options = ClusterOptions {
        max_iter: config.max_iter,
        restarts: config.restarts,
    };
    let k = config.k.unwrap_or(config.sources).min(itemsets.len());
    let (model, _) = cluster_itemsets(
        &itemsets,
        &world.data.schema,
        &KChoice::Fixed(k),
        seed::derive(repeat_seed, &[2]),
        &options,
    )?;
    let positives: Vec<Vec<_>> = merge_clusters(&itemsets, &model)
        .into_iter()
        .map(dedup_by_value)
        .filter(|p| !p.is_empty())
        .collect();

    let mut rows = Vec::new();
    let mut maps = Vec::new();
    for &method in &config.methods {
        let trees: Vec<Result<LearnedTree>> = positives
            .iter()
            .enumerate()
            .map(|(c, s)| {
                let tree_seed = seed::derive(repeat_seed, &[3, method_key(method), c as u64]);
                fit_concept_tree(s, &world.data, method, tree_seed)
            })
            .collect();
        for &d in &config.discard_thresholds {
            for &qt in &config.query_types {
                let mapping: Vec<Mapping> = trees
                    .iter()
                    .enumerate()
                    .map(|(c, t)| map_cluster(world, &sources, c, t, d, qt))
                    .collect();
                let learned = mapping.len();
                let mapped = mapping
                    .iter()
                    .filter(|m| m.error.is_none() && m.f1 > config.f1_cutoff)
                    .count();
                rows.push(Exp2Row {
                    repeat,
                    d,
                    method,
                    query_type: qt,
                    itemsets: itemsets.len(),
                    learned,
                    mapped,
                    failures: mapping.iter().filter(|m| m.error.is_some()).count(),
                    overlap_accuracy: if learned == 0 {
                        0.0
                    } else {
                        mapped as f64 / learned as f64
                    },
                    mean_best_f1: if learned == 0 {
                        0.0
                    } else {
                        mapping.iter().map(|m| m.f1).sum::<f64>() / learned as f64
                    },
                });
                maps.push((repeat, d, method, qt, mapping));
            }
        }
    }
    Ok((rows, maps))
}

fn map_cluster(
    world: &World,
    sources: &[usize],
    cluster: usize,
    tree: &Result<LearnedTree>,
    d: f64,
    qt: QueryType,
) -> Mapping {
    let attempt = || -> Result<(Option<usize>, f64)> {
        let learned = tree.as_ref().map_err(|e| Error::Generator(e.to_string()))?;
        let (query, _) = learned.concept_query(d, qt, &world.data.schema)?;
        let predicted = evaluate_with(&query, &world.data, Execution::Sequential)?;
        let mut best: (Option<usize>, f64) = (None, -1.0);
        for &src in sources {
            let f1 = set_metrics(&predicted, &world.concepts[src].extension).f1;
            if f1 > best.1 {
                best = (Some(src), f1);
            }
        }
        Ok((best.0, best.1.max(0.0)))
    };
    match attempt() {
        Ok((source, f1)) => Mapping {
            cluster,
            source,
            f1,
            error: None,
        },
        Err(e) => Mapping {
            cluster,
            source: None,
            f1: 0.0,
            error: Some(e.to_string()),
        },
    }
}
