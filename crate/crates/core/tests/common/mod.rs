//! Brute-force oracles and random instance builders shared by the
//! integration suites.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::json;

use conceptq::schema::parse_dataset;
use conceptq::{Dataset, IdSet, Item, Schema};

/// A catalog as raw strings, plus the dataset parsed from its CSV form.
pub struct RawCatalog {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub data: Dataset,
}

/// Random catalog with `features` columns; feature `f` draws from
/// `domain[f]` distinct values.
pub fn random_catalog<R: Rng>(rng: &mut R, rows: usize, domains: &[usize]) -> RawCatalog {
    let header: Vec<String> = (0..domains.len()).map(|f| format!("f{f}")).collect();
    let rows: Vec<Vec<String>> = (0..rows)
        .map(|_| {
            domains
                .iter()
                .map(|&k| format!("v{}", rng.gen_range(0..k)))
                .collect()
        })
        .collect();
    let mut csv = header.join(",");
    csv.push('\n');
    for row in &rows {
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    let data = parse_dataset(&csv).expect("random catalog parses");
    RawCatalog { header, rows, data }
}

/// Distinct values observed in each column.
pub fn observed_values(cat: &RawCatalog) -> Vec<Vec<String>> {
    (0..cat.header.len())
        .map(|f| {
            cat.rows
                .iter()
                .map(|r| r[f].clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        })
        .collect()
}

/// A disjunction in string form: feature name -> allowed value names.
pub type RawQuery = Vec<BTreeMap<String, BTreeSet<String>>>;

pub fn random_raw_query<R: Rng>(rng: &mut R, cat: &RawCatalog) -> RawQuery {
    let values = observed_values(cat);
    let disjuncts = rng.gen_range(0..=3);
    (0..disjuncts)
        .map(|_| {
            let mut conj = BTreeMap::new();
            for (f, name) in cat.header.iter().enumerate() {
                if rng.gen_bool(0.5) {
                    let k = rng.gen_range(1..=values[f].len());
                    let chosen: BTreeSet<String> =
                        values[f].choose_multiple(rng, k).cloned().collect();
                    conj.insert(name.clone(), chosen);
                }
            }
            conj
        })
        .collect()
}

pub fn raw_query_json(q: &RawQuery) -> String {
    let disjuncts: Vec<_> = q
        .iter()
        .map(|conj| {
            conj.iter()
                .map(|(f, vs)| (f.clone(), json!(vs.iter().collect::<Vec<_>>())))
                .collect::<serde_json::Map<_, _>>()
        })
        .collect();
    json!({ "disjuncts": disjuncts }).to_string()
}

/// Row indices whose cells satisfy some disjunct of `q`.
pub fn brute_force_matches(q: &RawQuery, cat: &RawCatalog) -> IdSet {
    let column = |name: &str| cat.header.iter().position(|h| h == name).unwrap();
    cat.rows
        .iter()
        .enumerate()
        .filter(|(_, row)| {
            q.iter().any(|conj| {
                conj.iter()
                    .all(|(name, allowed)| allowed.contains(&row[column(name)]))
            })
        })
        .map(|(i, _)| i)
        .collect()
}

/// Items whose value vector equals no positive's.
pub fn unlabelled<'a>(positives: &[Item], data: &'a Dataset) -> Vec<&'a Item> {
    let seen: HashSet<&[usize]> = positives.iter().map(|i| i.values.as_slice()).collect();
    data.items
        .iter()
        .filter(|i| !seen.contains(i.values.as_slice()))
        .collect()
}

/// Unlabelled items carrying a value never observed among the positives.
pub fn brute_force_zero_marginal(positives: &[Item], data: &Dataset) -> IdSet {
    unlabelled(positives, data)
        .into_iter()
        .filter(|item| {
            item.values
                .iter()
                .enumerate()
                .any(|(f, v)| !positives.iter().any(|p| p.values[f] == *v))
        })
        .map(|i| i.id)
        .collect()
}

pub fn one_hot(item: &Item, schema: &Schema) -> Vec<i128> {
    let mut bits = Vec::new();
    for (f, &v) in item.values.iter().enumerate() {
        let mut block = vec![0; schema.domain_size(f)];
        block[v] = 1;
        bits.extend(block);
    }
    bits
}

/// Rocchio rule evaluated on dense one-hot vectors with exact arithmetic:
/// `|x - cU|^2 < |x - cL|^2` scaled by `nU^2 nL^2`.
pub fn brute_force_rocchio(positives: &[Item], data: &Dataset) -> IdSet {
    let pool = unlabelled(positives, data);
    let column_sums = |items: &mut dyn Iterator<Item = &Item>| {
        let mut sums = vec![0i128; data.schema.width()];
        let mut n = 0i128;
        for item in items {
            for (s, b) in sums.iter_mut().zip(one_hot(item, &data.schema)) {
                *s += b;
            }
            n += 1;
        }
        (sums, n)
    };
    let (sl, nl) = column_sums(&mut positives.iter());
    let (su, nu) = column_sums(&mut pool.iter().copied());
    pool.iter()
        .filter(|item| {
            let x = one_hot(item, &data.schema);
            let du: i128 = x.iter().zip(&su).map(|(&b, &c)| (nu * b - c).pow(2)).sum();
            let dl: i128 = x.iter().zip(&sl).map(|(&b, &c)| (nl * b - c).pow(2)).sum();
            du * nl * nl < dl * nu * nu
        })
        .map(|i| i.id)
        .collect()
}

/// `k` distinct random items of `data`.
pub fn random_subset<R: Rng>(rng: &mut R, data: &Dataset, k: usize) -> Vec<Item> {
    let mut ids: Vec<usize> = (0..data.len()).collect();
    ids.shuffle(rng);
    ids.truncate(k.min(data.len()));
    ids.sort_unstable();
    data.select(&ids).unwrap()
}
