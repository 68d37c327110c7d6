//! Synthetic catalog with planted conjunctive concepts.

use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::query::{evaluate, ConceptQuery, ConjunctiveQuery};
use crate::schema::{Dataset, Feature, Item, Schema};
use crate::{seed, IdSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSpec {
    pub items: usize,
    pub features: usize,
    pub domain_min: usize,
    pub domain_max: usize,
    pub concepts: usize,
    pub constrained_min: usize,
    pub constrained_max: usize,
    /// Fraction of a constrained feature's domain that a concept allows.
    pub fraction_min: f64,
    pub fraction_max: f64,
    pub extension_floor: usize,
    pub max_retries: usize,
    /// Number of distinct attribute profiles items are drawn from; 0 draws
    /// every item independently and uniformly.
    pub profiles: usize,
    /// Zipf exponent of profile popularity.
    pub profile_skew: f64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec::desk()
    }
}

impl WorldSpec {
    pub fn full() -> Self {
        WorldSpec {
            items: 50_000,
            features: 8,
            domain_min: 5,
            domain_max: 15,
            concepts: 40,
            constrained_min: 2,
            constrained_max: 4,
            fraction_min: 0.3,
            fraction_max: 0.7,
            extension_floor: 1500,
            max_retries: 10_000,
            profiles: 1_000,
            profile_skew: 1.5,
        }
    }

    /// Small enough for CI: 8,000 items and 20 concepts.
    pub fn desk() -> Self {
        WorldSpec {
            items: 8_000,
            concepts: 20,
            extension_floor: 1000,
            ..WorldSpec::full()
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("world spec: {m}")));
        if self.items == 0 || self.features == 0 {
            return bad("items and features must be positive");
        }
        if self.domain_min < 1 || self.domain_min > self.domain_max {
            return bad("domain range must satisfy 1 <= min <= max");
        }
        if self.constrained_min > self.constrained_max {
            return bad("constrained range is empty");
        }
        if !(0.0..=1.0).contains(&self.fraction_min)
            || !(0.0..=1.0).contains(&self.fraction_max)
            || self.fraction_min > self.fraction_max
        {
            return bad("fraction range must lie in [0, 1]");
        }
        if !self.profile_skew.is_finite() || self.profile_skew < 0.0 {
            return bad("profile skew must be a finite non-negative number");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthConcept {
    pub id: usize,
    pub query: ConceptQuery,
    pub extension: IdSet,
}

impl GroundTruthConcept {
    pub fn new(id: usize, query: ConceptQuery, data: &Dataset) -> Result<Self> {
        let extension = evaluate(&query, data)?;
        Ok(GroundTruthConcept {
            id,
            query,
            extension,
        })
    }
}

#[derive(Debug, Clone)]
pub struct World {
    pub data: Dataset,
    pub concepts: Vec<GroundTruthConcept>,
    pub spec: WorldSpec,
    pub seed: u64,
}

pub fn generate_world(spec: &WorldSpec, world_seed: u64) -> Result<World> {
    spec.validate()?;
    let mut rng = seed::rng(world_seed);
    let features: Vec<Feature> = (0..spec.features)
        .map(|f| {
            let size = rng.gen_range(spec.domain_min..=spec.domain_max);
            Feature {
                name: format!("f{f}"),
                values: (0..size).map(|v| format!("v{v:02}")).collect(),
            }
        })
        .collect();
    let schema = Schema::new(features)?;
    let uniform_row = |rng: &mut ChaCha8Rng| -> Vec<usize> {
        (0..spec.features)
            .map(|f| rng.gen_range(0..schema.domain_size(f)))
            .collect()
    };
    let rows: Vec<Vec<usize>> = if spec.profiles == 0 {
        (0..spec.items).map(|_| uniform_row(&mut rng)).collect()
    } else {
        let profiles: Vec<Vec<usize>> = (0..spec.profiles).map(|_| uniform_row(&mut rng)).collect();
        let weights = (1..=spec.profiles).map(|r| (r as f64).powf(-spec.profile_skew));
        let popularity = WeightedIndex::new(weights)
            .map_err(|e| Error::InvalidParameter(format!("profile weights: {e}")))?;
        (0..spec.items)
            .map(|_| profiles[popularity.sample(&mut rng)].clone())
            .collect()
    };
    let data = Dataset::new(schema, rows)?;

    let mut concepts = Vec::with_capacity(spec.concepts);
    for id in 0..spec.concepts {
        let mut attempt = 0;
        let concept = loop {
            if attempt == spec.max_retries {
                return Err(Error::Generator(format!(
                    "concept {id}: no extension >= {} after {} attempts",
                    spec.extension_floor, spec.max_retries
                )));
            }
            attempt += 1;
            let query = plant_concept(spec, &data.schema, &mut rng)?;
            let concept = GroundTruthConcept::new(id, query, &data)?;
            if concept.extension.len() >= spec.extension_floor {
                break concept;
            }
        };
        concepts.push(concept);
    }
    Ok(World {
        data,
        concepts,
        spec: spec.clone(),
        seed: world_seed,
    })
}

fn plant_concept<R: Rng>(spec: &WorldSpec, schema: &Schema, rng: &mut R) -> Result<ConceptQuery> {
    let n = schema.num_features();
    let count = rng
        .gen_range(spec.constrained_min..=spec.constrained_max)
        .min(n);
    let mut clauses = BTreeMap::new();
    for f in index::sample(rng, n, count).into_vec() {
        let size = schema.domain_size(f);
        let fraction = rng.gen_range(spec.fraction_min..=spec.fraction_max);
        let allowed = ((fraction * size as f64).round() as usize).clamp(1, size);
        let values: BTreeSet<usize> = index::sample(rng, size, allowed).into_iter().collect();
        clauses.insert(f, values);
    }
    Ok(ConceptQuery::single(ConjunctiveQuery::new(
        clauses, schema,
    )?))
}

/// `s` items from the concept's extension plus `floor(n * s)` items from
/// outside it, shuffled.
pub fn sample_with_noise(
    concept: &GroundTruthConcept,
    data: &Dataset,
    s: usize,
    noise_ratio: f64,
    sample_seed: u64,
) -> Result<Vec<Item>> {
    if noise_ratio.is_nan() || noise_ratio < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "noise ratio {noise_ratio}"
        )));
    }
    let noisy = (noise_ratio * s as f64 + 1e-9).floor() as usize;
    let inside: Vec<usize> = concept.extension.iter().copied().collect();
    let outside: Vec<usize> = (0..data.len())
        .filter(|i| !concept.extension.contains(i))
        .collect();
    if s > inside.len() {
        return Err(Error::InvalidParameter(format!(
            "sample size {s} exceeds concept extension {}",
            inside.len()
        )));
    }
    if noisy > outside.len() {
        return Err(Error::InvalidParameter(format!(
            "{noisy} noisy items requested, only {} outside the concept",
            outside.len()
        )));
    }
    let mut rng = seed::rng(sample_seed);
    let mut ids: Vec<usize> = index::sample(&mut rng, inside.len(), s)
        .into_iter()
        .map(|k| inside[k])
        .collect();
    ids.extend(
        index::sample(&mut rng, outside.len(), noisy)
            .into_iter()
            .map(|k| outside[k]),
    );
    ids.shuffle(&mut rng);
    data.select(&ids)
}
