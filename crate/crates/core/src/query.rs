//! Conjunctive and disjunctive concept queries: evaluation, most-specific
//! covers, normalization, and the canonical JSON form.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::schema::{Dataset, Item, Schema};
use crate::IdSet;

/// A conjunction of per-feature membership tests, `AND_f (x_f in V_f)`.
///
/// Features without a clause are unconstrained. Allowed sets are never empty
/// and never equal to the full domain once normalized.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConjunctiveQuery {
    clauses: BTreeMap<usize, BTreeSet<usize>>,
}

impl ConjunctiveQuery {
    /// The query with no clauses; every item satisfies it.
    pub fn any() -> Self {
        Self::default()
    }

    /// Validates the clauses against `schema` and drops full-domain clauses.
    pub fn new(clauses: BTreeMap<usize, BTreeSet<usize>>, schema: &Schema) -> Result<Self> {
        let q = ConjunctiveQuery { clauses };
        q.check(schema)?;
        Ok(q.normalized(schema))
    }

    pub fn clauses(&self) -> &BTreeMap<usize, BTreeSet<usize>> {
        &self.clauses
    }

    pub fn allowed(&self, feature: usize) -> Option<&BTreeSet<usize>> {
        self.clauses.get(&feature)
    }

    pub fn is_unconstrained(&self) -> bool {
        self.clauses.is_empty()
    }

    pub fn check(&self, schema: &Schema) -> Result<()> {
        for (&f, values) in &self.clauses {
            if f >= schema.num_features() {
                return Err(Error::SchemaMismatch(format!(
                    "clause on feature index {f}, schema has {}",
                    schema.num_features()
                )));
            }
            if values.is_empty() {
                return Err(Error::SchemaMismatch(format!(
                    "empty allowed set for feature {:?}",
                    schema.feature_name(f)
                )));
            }
            if let Some(&v) = values.iter().find(|&&v| v >= schema.domain_size(f)) {
                return Err(Error::SchemaMismatch(format!(
                    "value index {v} out of range for feature {:?}",
                    schema.feature_name(f)
                )));
            }
        }
        Ok(())
    }

    /// Drops vacuous clauses whose allowed set is the whole domain.
    pub fn normalized(mut self, schema: &Schema) -> Self {
        self.clauses
            .retain(|&f, values| values.len() < schema.domain_size(f));
        self
    }

    /// Returns a copy with `value` added to the clause on `feature`.
    /// Adding to an unconstrained feature is a no-op.
    pub fn widened(&self, feature: usize, value: usize, schema: &Schema) -> Self {
        let mut q = self.clone();
        if let Some(values) = q.clauses.get_mut(&feature) {
            values.insert(value);
        }
        q.normalized(schema)
    }

    fn masks(&self, schema: &Schema) -> Vec<(usize, Vec<bool>)> {
        self.clauses
            .iter()
            .map(|(&f, values)| {
                let mut mask = vec![false; schema.domain_size(f)];
                for &v in values {
                    mask[v] = true;
                }
                (f, mask)
            })
            .collect()
    }
}

/// True iff the item's value lies in every clause's allowed set.
pub fn satisfies(item: &Item, q: &ConjunctiveQuery) -> bool {
    q.clauses
        .iter()
        .all(|(&f, allowed)| item.values.get(f).is_some_and(|v| allowed.contains(v)))
}

/// A disjunction of conjunctive queries. No disjuncts matches nothing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct ConceptQuery {
    pub disjuncts: Vec<ConjunctiveQuery>,
}

impl ConceptQuery {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn single(q: ConjunctiveQuery) -> Self {
        ConceptQuery { disjuncts: vec![q] }
    }

    pub fn is_empty(&self) -> bool {
        self.disjuncts.is_empty()
    }

    pub fn check(&self, schema: &Schema) -> Result<()> {
        self.disjuncts.iter().try_for_each(|q| q.check(schema))
    }

    pub fn matches(&self, item: &Item) -> bool {
        self.disjuncts.iter().any(|q| satisfies(item, q))
    }
}

impl FromIterator<ConjunctiveQuery> for ConceptQuery {
    fn from_iter<I: IntoIterator<Item = ConjunctiveQuery>>(iter: I) -> Self {
        ConceptQuery {
            disjuncts: iter.into_iter().collect(),
        }
    }
}

/// Ids of the dataset items matched by at least one disjunct.
pub fn evaluate(query: &ConceptQuery, data: &Dataset) -> Result<IdSet> {
    evaluate_with(query, data, Execution::default())
}

pub fn evaluate_with(query: &ConceptQuery, data: &Dataset, exec: Execution) -> Result<IdSet> {
    query.check(&data.schema)?;
    if query.is_empty() {
        return Ok(IdSet::new());
    }
    if query
        .disjuncts
        .iter()
        .any(ConjunctiveQuery::is_unconstrained)
    {
        return Ok(data.items.iter().map(|i| i.id).collect());
    }
    let compiled: Vec<_> = query
        .disjuncts
        .iter()
        .map(|q| q.masks(&data.schema))
        .collect();
    let ids = par::filter_map(&data.items, exec, |item| {
        compiled
            .iter()
            .any(|masks| masks.iter().all(|(f, mask)| mask[item.values[*f]]))
            .then_some(item.id)
    });
    Ok(ids.into_iter().collect())
}

/// The tightest conjunctive query covering `items`: each feature is limited
/// to the values observed among them.
pub fn most_specific_query(items: &[Item], schema: &Schema) -> Result<ConjunctiveQuery> {
    if items.is_empty() {
        return Err(Error::Empty("item list"));
    }
    let mut clauses: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for item in items {
        schema.check_values(&item.values)?;
        for (f, &v) in item.values.iter().enumerate() {
            clauses.entry(f).or_default().insert(v);
        }
    }
    Ok(ConjunctiveQuery { clauses }.normalized(schema))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireQuery {
    disjuncts: Vec<BTreeMap<String, Vec<String>>>,
}

/// Canonical JSON text: features referenced by name, clause keys and values
/// sorted lexicographically.
pub fn serialize_query(q: &ConceptQuery, schema: &Schema) -> String {
    let wire = WireQuery {
        disjuncts: q
            .disjuncts
            .iter()
            .map(|d| {
                d.clauses
                    .iter()
                    .map(|(&f, values)| {
                        let mut names: Vec<String> = values
                            .iter()
                            .map(|&v| schema.value_name(f, v).to_owned())
                            .collect();
                        names.sort();
                        (schema.feature_name(f).to_owned(), names)
                    })
                    .collect()
            })
            .collect(),
    };
    serde_json::to_string(&wire).expect("query serializes")
}

/// Parses canonical JSON, resolving names against `schema`. The result is
/// normalized.
pub fn parse_query(text: &str, schema: &Schema) -> Result<ConceptQuery> {
    let wire: WireQuery = serde_json::from_str(text).map_err(|e| Error::MalformedQuery {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    wire.disjuncts
        .into_iter()
        .map(|d| {
            let mut clauses = BTreeMap::new();
            for (name, values) in d {
                let f = schema
                    .feature_index(&name)
                    .ok_or_else(|| Error::UnknownFeature(name.clone()))?;
                if values.is_empty() {
                    return Err(Error::SchemaMismatch(format!(
                        "empty value list for feature {name:?}"
                    )));
                }
                let set = values
                    .iter()
                    .map(|v| {
                        schema.value_index(f, v).ok_or_else(|| Error::UnknownValue {
                            feature: name.clone(),
                            value: v.clone(),
                        })
                    })
                    .collect::<Result<BTreeSet<_>>>()?;
                clauses.insert(f, set);
            }
            ConjunctiveQuery::new(clauses, schema)
        })
        .collect::<Result<Vec<_>>>()
        .map(|disjuncts| ConceptQuery { disjuncts })
}
