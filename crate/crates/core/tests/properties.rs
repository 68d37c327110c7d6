mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;
use conceptq::discovery::{itemset_centroid, kmeans, merge_clusters, select_k_silhouette};
use conceptq::harness::{
    generate_world, run_experiment_1_with, run_experiment_2_with, set_metrics, Exp1Config,
    Exp2Config, WorldSpec,
};
use conceptq::query::{
    evaluate_with, most_specific_query, parse_query, satisfies, serialize_query,
};
use conceptq::tree::LeafLabel;
use conceptq::{
    binarize, evaluate, fit_tree, leaf_to_dt_query, leaf_to_items_query, likelihood_negatives,
    positive_leaves, rocchio_negatives, Centroid, ConceptQuery, ConjunctiveQuery, Dataset,
    Execution, IdSet, Item, Itemset, Schema,
};

/// Dataset over `domains`, rows given as raw indices reduced modulo each
/// domain.
fn dataset(domains: &[usize], rows: &[Vec<usize>]) -> Dataset {
    let schema = Schema::from_pairs(domains.iter().enumerate().map(|(f, &k)| {
        (
            format!("f{f}"),
            (0..k).map(|v| format!("v{v}")).collect::<Vec<_>>(),
        )
    }))
    .unwrap();
    let rows = rows
        .iter()
        .map(|r| r.iter().zip(domains).map(|(&x, &k)| x % k).collect())
        .collect();
    Dataset::new(schema, rows).unwrap()
}

fn arb_dataset(max_rows: usize) -> impl Strategy<Value = Dataset> {
    prop::collection::vec(1usize..5, 1..5).prop_flat_map(move |domains| {
        let width = domains.len();
        prop::collection::vec(prop::collection::vec(0usize..100, width), 1..max_rows)
            .prop_map(move |rows| dataset(&domains, &rows))
    })
}

/// A conjunction drawn from `bits`: feature `f` is constrained when bit
/// `2f` is set, allowing the values whose bits are set in the following
/// byte (falling back to value 0).
fn conj_from(schema: &Schema, bits: u64, salt: u64) -> ConjunctiveQuery {
    let mut clauses = BTreeMap::new();
    for f in 0..schema.num_features() {
        if (bits >> (2 * f)) & 1 == 1 {
            let k = schema.domain_size(f);
            let mask = salt.rotate_left(8 * f as u32);
            let mut allowed: BTreeSet<usize> = (0..k).filter(|v| (mask >> v) & 1 == 1).collect();
            if allowed.is_empty() {
                allowed.insert(0);
            }
            clauses.insert(f, allowed);
        }
    }
    ConjunctiveQuery::new(clauses, schema).unwrap()
}

fn arb_instance() -> impl Strategy<Value = (Dataset, ConceptQuery)> {
    (
        arb_dataset(60),
        prop::collection::vec((any::<u64>(), any::<u64>()), 0..4),
    )
        .prop_map(|(data, parts)| {
            let q = parts
                .iter()
                .map(|&(b, s)| conj_from(&data.schema, b, s))
                .collect();
            (data, q)
        })
}

fn brute_force(q: &ConceptQuery, data: &Dataset) -> IdSet {
    data.items
        .iter()
        .filter(|i| {
            q.disjuncts.iter().any(|c| {
                c.clauses()
                    .iter()
                    .all(|(f, allowed)| allowed.contains(&i.values[*f]))
            })
        })
        .map(|i| i.id)
        .collect()
}

fn subset(data: &Dataset, mask: &[bool]) -> Vec<Item> {
    data.items
        .iter()
        .zip(mask.iter().cycle())
        .filter(|(_, &keep)| keep)
        .map(|(i, _)| i.clone())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn evaluate_matches_brute_force((data, q) in arb_instance()) {
        prop_assert_eq!(evaluate(&q, &data).unwrap(), brute_force(&q, &data));
        prop_assert_eq!(
            evaluate_with(&q, &data, Execution::Sequential).unwrap(),
            evaluate_with(&q, &data, Execution::Parallel).unwrap()
        );
    }

    #[test]
    fn widening_never_shrinks((data, q) in arb_instance(), f in 0usize..8, v in 0usize..8) {
        prop_assume!(!q.disjuncts.is_empty());
        let f = f % data.schema.num_features();
        let v = v % data.schema.domain_size(f);
        let before = evaluate(&q, &data).unwrap();
        let wider: ConceptQuery = q
            .disjuncts
            .iter()
            .map(|c| c.widened(f, v, &data.schema))
            .collect();
        prop_assert!(before.is_subset(&evaluate(&wider, &data).unwrap()));
    }

    #[test]
    fn disjunction_is_union((data, q) in arb_instance()) {
        let mut union = IdSet::new();
        for c in &q.disjuncts {
            union.extend(evaluate(&ConceptQuery::single(c.clone()), &data).unwrap());
        }
        prop_assert_eq!(evaluate(&q, &data).unwrap(), union);
    }

    #[test]
    fn query_json_round_trips((data, q) in arb_instance()) {
        let text = serialize_query(&q, &data.schema);
        let back = parse_query(&text, &data.schema).unwrap();
        prop_assert_eq!(serialize_query(&back, &data.schema), text);
        prop_assert_eq!(evaluate(&back, &data).unwrap(), evaluate(&q, &data).unwrap());
    }

    #[test]
    fn most_specific_query_is_minimal(data in arb_dataset(60), mask in prop::collection::vec(any::<bool>(), 1..8)) {
        let s = subset(&data, &mask);
        prop_assume!(!s.is_empty());
        let q = most_specific_query(&s, &data.schema).unwrap();
        prop_assert!(s.iter().all(|i| satisfies(i, &q)));
        for (&f, allowed) in q.clauses() {
            for &v in allowed {
                prop_assert!(s.iter().any(|i| i.values[f] == v));
            }
        }
        for f in 0..data.schema.num_features() {
            if q.allowed(f).is_none() {
                let seen: HashSet<usize> = s.iter().map(|i| i.values[f]).collect();
                prop_assert_eq!(seen.len(), data.schema.domain_size(f));
            }
        }
    }

    #[test]
    fn binarize_is_one_hot_and_injective(data in arb_dataset(60)) {
        let schema = &data.schema;
        let mut seen = std::collections::HashMap::new();
        for item in &data.items {
            let b = binarize(item, schema);
            prop_assert_eq!(b.bits.len(), schema.width());
            prop_assert_eq!(b.count_ones(), schema.num_features());
            let decoded: Vec<usize> = (0..schema.num_features())
                .map(|f| {
                    let block = &b.bits[schema.offset(f)..schema.offset(f) + schema.domain_size(f)];
                    block.iter().position(|&x| x == 1).unwrap()
                })
                .collect();
            prop_assert_eq!(&decoded, &item.values);
            if let Some(prev) = seen.insert(b.bits.clone(), item.values.clone()) {
                prop_assert_eq!(prev, item.values.clone());
            }
        }
    }

    #[test]
    fn likelihood_negatives_shrink_as_positives_grow(
        data in arb_dataset(80),
        mask in prop::collection::vec(any::<bool>(), 1..8),
        extra in prop::collection::vec(any::<bool>(), 1..8),
    ) {
        let small = subset(&data, &mask);
        prop_assume!(!small.is_empty());
        let mut large = small.clone();
        large.extend(subset(&data, &extra));
        let n_small = likelihood_negatives(&small, &data).unwrap();
        let n_large = likelihood_negatives(&large, &data).unwrap();
        prop_assert!(n_large.is_subset(&n_small));
        prop_assert_eq!(&n_small, &brute_force_zero_marginal(&small, &data));
        let cover = most_specific_query(&small, &data.schema).unwrap();
        prop_assert!(n_small.iter().all(|&id| !satisfies(&data.items[id], &cover)));
    }

    #[test]
    fn rocchio_matches_dense_oracle(data in arb_dataset(80), mask in prop::collection::vec(any::<bool>(), 1..8)) {
        let s = subset(&data, &mask);
        prop_assume!(!s.is_empty() && !unlabelled(&s, &data).is_empty());
        let n = rocchio_negatives(&s, &data).unwrap();
        prop_assert_eq!(&n, &brute_force_rocchio(&s, &data));
        let values: HashSet<&[usize]> = s.iter().map(|i| i.values.as_slice()).collect();
        prop_assert!(n.iter().all(|&id| !values.contains(data.items[id].values.as_slice())));
    }

    #[test]
    fn tree_leaves_partition_pure_and_consistent(
        data in arb_dataset(80),
        mask in prop::collection::vec(any::<bool>(), 2..8),
        seed in any::<u64>(),
    ) {
        let pos = subset(&data, &mask);
        let pos_values: HashSet<&[usize]> = pos.iter().map(|i| i.values.as_slice()).collect();
        let neg: Vec<Item> = data
            .items
            .iter()
            .filter(|i| !pos_values.contains(i.values.as_slice()))
            .cloned()
            .collect();
        prop_assume!(!pos.is_empty() && !neg.is_empty());
        let tree = fit_tree(&pos, &neg, &data.schema, seed).unwrap();
        let leaves = tree.leaves();
        let mut placed: Vec<usize> = Vec::new();
        for leaf in &leaves {
            prop_assert!(leaf.label != LeafLabel::Mixed);
            for m in &leaf.members {
                prop_assert_eq!(pos_values.contains(m.values.as_slice()), leaf.label == LeafLabel::Positive);
                prop_assert!(leaf.path.iter().all(|(test, branch)| test.eval(m) == *branch));
                prop_assert_eq!(tree.predict(m), leaf.label);
            }
            placed.push(leaf.members.len());
        }
        prop_assert_eq!(placed.iter().sum::<usize>(), pos.len() + neg.len());
        let again = fit_tree(&pos, &neg, &data.schema, seed).unwrap();
        prop_assert_eq!(tree.dump(&data.schema), again.dump(&data.schema));

        for leaf in positive_leaves(&tree) {
            let dt = evaluate(&ConceptQuery::single(leaf_to_dt_query(&leaf, &data.schema).unwrap()), &data).unwrap();
            let items = evaluate(&ConceptQuery::single(leaf_to_items_query(&leaf, &data.schema).unwrap()), &data).unwrap();
            prop_assert!(items.is_subset(&dt));
            prop_assert!(leaf.members.iter().all(|m| items.contains(&m.id)));
        }
    }

    #[test]
    fn kmeans_objective_never_increases(
        points in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 2..30),
        k in 1usize..6,
        seed in any::<u64>(),
    ) {
        let centroids: Vec<Centroid> = points
            .iter()
            .enumerate()
            .map(|(i, v)| Centroid { itemset_id: format!("p{i:03}"), vector: v.clone() })
            .collect();
        let k = k.min(centroids.len());
        let model = kmeans(&centroids, k, seed, 300).unwrap();
        for w in model.objective_history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9);
        }
        prop_assert_eq!(model.assignments.len(), centroids.len());
        prop_assert!(model.cluster_sizes().iter().all(|&n| n > 0));

        let mut shuffled = centroids.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let permuted = kmeans(&shuffled, k, seed, 300).unwrap();
        prop_assert_eq!(permuted.assignments, model.assignments);
    }

    #[test]
    fn merging_keeps_every_member(
        data in arb_dataset(60),
        sizes in prop::collection::vec(1usize..6, 2..10),
        k in 1usize..4,
        seed in any::<u64>(),
    ) {
        let mut next = 0;
        let itemsets: Vec<Itemset> = sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let members = (0..n).map(|j| data.items[(next + j) % data.len()].clone()).collect();
                next += n;
                Itemset { id: format!("set{i:02}"), members }
            })
            .collect();
        let centroids: Vec<Centroid> = itemsets
            .iter()
            .map(|p| itemset_centroid(p, &data.schema).unwrap())
            .collect();
        let model = kmeans(&centroids, k.min(itemsets.len()), seed, 300).unwrap();
        let merged = merge_clusters(&itemsets, &model);
        let mut got: Vec<usize> = merged.iter().flatten().map(|i| i.id).collect();
        let mut want: Vec<usize> = itemsets.iter().flat_map(|p| p.members.iter().map(|i| i.id)).collect();
        got.sort_unstable();
        want.sort_unstable();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn f1_is_harmonic_mean(pred in prop::collection::btree_set(0usize..50, 0..30), truth in prop::collection::btree_set(0usize..50, 0..30)) {
        let m = set_metrics(&pred, &truth);
        let expect = if m.precision + m.recall == 0.0 { 0.0 } else { 2.0 * m.precision * m.recall / (m.precision + m.recall) };
        prop_assert!((m.f1 - expect).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&m.precision) && (0.0..=1.0).contains(&m.recall));
    }
}

fn planted(groups: &[[f64; 3]], per_group: usize) -> Vec<Centroid> {
    let mut out = Vec::new();
    for (g, center) in groups.iter().enumerate() {
        for j in 0..per_group {
            let jitter = 0.01 * j as f64;
            out.push(Centroid {
                itemset_id: format!("g{g}-{j}"),
                vector: center.iter().map(|x| x + jitter).collect(),
            });
        }
    }
    out
}

#[test]
fn silhouette_recovers_three_planted_groups() {
    let points = planted(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 1.0]], 5);
    let sel = select_k_silhouette(&points, 2..=6, 3).unwrap();
    assert_eq!(sel.k, 3);
    let model = kmeans(&points, 3, 3, 300).unwrap();
    for g in 0..3 {
        let clusters: HashSet<usize> = (0..5)
            .map(|j| model.assignments[&format!("g{g}-{j}")])
            .collect();
        assert_eq!(clusters.len(), 1);
    }
}

#[test]
fn silhouette_recovers_two_planted_groups() {
    let points = planted(&[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]], 6);
    assert_eq!(select_k_silhouette(&points, 2..=6, 8).unwrap().k, 2);
}

#[test]
fn experiments_agree_across_execution_modes() {
    let spec = WorldSpec {
        items: 1_500,
        concepts: 4,
        extension_floor: 150,
        ..WorldSpec::desk()
    };
    let world = generate_world(&spec, 21).unwrap();
    let config = Exp1Config {
        sample_sizes: vec![20, 80],
        noise_ratios: vec![0.0, 0.2],
        discard_thresholds: vec![0.0, 0.2],
        repeats: 2,
        ..Exp1Config::desk()
    };
    assert_eq!(
        run_experiment_1_with(&world, &config, Execution::Sequential).unwrap(),
        run_experiment_1_with(&world, &config, Execution::Parallel).unwrap()
    );
    let config = Exp2Config {
        sources: 3,
        repeats: 2,
        discard_thresholds: vec![0.0],
        ..Exp2Config::desk()
    };
    assert_eq!(
        run_experiment_2_with(&world, &config, Execution::Sequential).unwrap(),
        run_experiment_2_with(&world, &config, Execution::Parallel).unwrap()
    );
}

#[test]
fn exp1_rows_satisfy_containment_relations() {
    let spec = WorldSpec {
        items: 1_500,
        concepts: 4,
        extension_floor: 150,
        ..WorldSpec::desk()
    };
    let world = generate_world(&spec, 5).unwrap();
    let report = run_experiment_1_with(
        &world,
        &Exp1Config {
            sample_sizes: vec![30, 100],
            noise_ratios: vec![0.0, 0.1],
            discard_thresholds: vec![0.0],
            repeats: 2,
            ..Exp1Config::desk()
        },
        Execution::default(),
    )
    .unwrap();
    for row in &report.rows {
        if let (Some(p), Some(r), Some(f)) = (row.precision, row.recall, row.f1) {
            let expect = if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            };
            assert!((f - expect).abs() < 1e-9);
        }
    }
    for dt in report
        .rows
        .iter()
        .filter(|r| r.query_type == conceptq::QueryType::Dt)
    {
        let items = report
            .rows
            .iter()
            .find(|r| {
                r.query_type == conceptq::QueryType::Items
                    && (r.concept, r.s, r.n, r.d, r.method, r.repeat)
                        == (dt.concept, dt.s, dt.n, dt.d, dt.method, dt.repeat)
            })
            .unwrap();
        if let (Some(a), Some(b)) = (dt.recall, items.recall) {
            assert!(a >= b, "dt recall {a} < items recall {b}");
        }
    }
}
