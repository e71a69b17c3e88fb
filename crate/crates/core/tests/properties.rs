mod common;

use gus_core::algebra::{
    c_coefficients, compact, gus_of_bernoulli_over, gus_of_sampler, gus_of_wor_over, identity_gus, join_merge,
    null_gus, union_merge,
};
use gus_core::engine::{self, execute, Catalog, SampleRelation};
use gus_core::expr::{CompareOp, JoinCondition, Predicate, Value};
use gus_core::lineage::{Lineage, LineageSchema, SubsetMask};
use gus_core::oracle::{exact_y_terms, full_result};
use gus_core::params::GusParams;
use gus_core::sampling::SamplerSpec;
use gus_core::sbox::{confidence_interval, variance_estimate, y_sample_terms, CiMethod};
use gus_core::algebra::normalize_plan;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NAMES: [&str; 4] = ["a", "b", "c", "d"];

/// A random sampler translation over `schema`.
fn random_leaf(schema: &LineageSchema, rng: &mut ChaCha8Rng) -> GusParams {
    match rng.gen_range(0..4) {
        0 => gus_of_bernoulli_over(rng.gen_range(0.0..=1.0), schema).unwrap(),
        1 => {
            let population = rng.gen_range(2..50);
            gus_of_wor_over(rng.gen_range(0..=population), population, schema).unwrap()
        }
        2 => {
            let dims: Vec<(String, f64, u64)> =
                schema.relations().iter().map(|r| (r.clone(), rng.gen_range(0.0..=1.0), 0)).collect();
            gus_of_sampler(&SamplerSpec::lineage_bernoulli(dims), schema).unwrap()
        }
        _ => identity_gus(schema),
    }
}

/// A random operator tree whose result lives over `names`.
fn random_tree(names: &[&str], depth: u32, rng: &mut ChaCha8Rng) -> GusParams {
    let schema = LineageSchema::new(names.iter().copied()).unwrap();
    if depth == 0 {
        return random_leaf(&schema, rng);
    }
    match rng.gen_range(0..4) {
        0 if names.len() > 1 => {
            let split = rng.gen_range(1..names.len());
            let left = random_tree(&names[..split], depth - 1, rng);
            let right = random_tree(&names[split..], depth - 1, rng);
            join_merge(&left, &right).unwrap()
        }
        1 => union_merge(&random_tree(names, depth - 1, rng), &random_tree(names, depth - 1, rng)).unwrap(),
        2 => compact(&random_leaf(&schema, rng), &random_tree(names, depth - 1, rng)).unwrap(),
        _ => random_leaf(&schema, rng),
    }
}

fn schema_of(n: usize) -> LineageSchema {
    LineageSchema::new(NAMES[..n].iter().copied()).unwrap()
}

fn close(x: &GusParams, y: &GusParams) -> bool {
    x.schema() == y.schema()
        && (x.a() - y.a()).abs() < 1e-12
        && x.b_table().values().iter().zip(y.b_table().values()).all(|(p, q)| (p - q).abs() < 1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn operator_trees_stay_valid(seed in any::<u64>(), n in 1usize..=4, depth in 0u32..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_tree(&NAMES[..n], depth, &mut rng);
        prop_assert_eq!(g.b(g.schema().full_mask()), g.a());
        prop_assert!((0.0..=1.0).contains(&g.a()));
        for (_, b) in g.b_table().iter() {
            prop_assert!((0.0..=1.0).contains(&b), "b = {}", b);
        }
    }

    #[test]
    fn c_coefficients_sum_to_a(seed in any::<u64>(), n in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_tree(&NAMES[..n], 2, &mut rng);
        let total: f64 = c_coefficients(&g).values().iter().sum();
        prop_assert!((total - g.a()).abs() < 1e-12);
    }

    #[test]
    fn union_and_compaction_laws(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schema = schema_of(n);
        let (g, h, k) = (
            common::dyadic_params(&schema, &mut rng),
            common::dyadic_params(&schema, &mut rng),
            common::dyadic_params(&schema, &mut rng),
        );
        let u = |x: &GusParams, y: &GusParams| union_merge(x, y).unwrap();
        let c = |x: &GusParams, y: &GusParams| compact(x, y).unwrap();
        prop_assert_eq!(u(&g, &h), u(&h, &g));
        prop_assert_eq!(u(&u(&g, &h), &k), u(&g, &u(&h, &k)));
        prop_assert_eq!(c(&g, &h), c(&h, &g));
        prop_assert_eq!(c(&c(&g, &h), &k), c(&g, &c(&h, &k)));
        prop_assert_eq!(u(&g, &null_gus(&schema)), g.clone());
        prop_assert_eq!(c(&g, &identity_gus(&schema)), g.clone());
        prop_assert_eq!(u(&g, &identity_gus(&schema)), identity_gus(&schema));
    }

    #[test]
    fn distributivity_holds_for_trivial_left_factor(seed in any::<u64>(), n in 1usize..=3, null in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schema = schema_of(n);
        let g = if null { null_gus(&schema) } else { identity_gus(&schema) };
        let h = common::dyadic_params(&schema, &mut rng);
        let k = common::dyadic_params(&schema, &mut rng);
        let lhs = compact(&g, &union_merge(&h, &k).unwrap()).unwrap();
        let rhs = union_merge(&compact(&g, &h).unwrap(), &compact(&g, &k).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn join_merge_is_commutative_and_associative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_tree(&["a"], 1, &mut rng);
        let b = random_tree(&["b", "c"], 1, &mut rng);
        let d = random_tree(&["d"], 1, &mut rng);
        prop_assert!(close(&join_merge(&a, &b).unwrap(), &join_merge(&b, &a).unwrap()));
        let left = join_merge(&join_merge(&a, &b).unwrap(), &d).unwrap();
        let right = join_merge(&a, &join_merge(&b, &d).unwrap()).unwrap();
        prop_assert!(close(&left, &right));
    }

    #[test]
    fn chebyshev_interval_contains_normal(mu in -1e6f64..1e6, sigma in 0.0f64..1e4, level in 0.5f64..0.999) {
        let (nl, nh) = confidence_interval(mu, sigma, CiMethod::Normal, level).unwrap();
        let (cl, ch) = confidence_interval(mu, sigma, CiMethod::Chebyshev, level).unwrap();
        prop_assert!(cl <= nl && nh <= ch);
    }

    #[test]
    fn y_terms_ignore_row_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schema = schema_of(3);
        let mut seen = std::collections::BTreeMap::new();
        for _ in 0..rng.gen_range(0..40) {
            let ids: Vec<u64> = (0..3).map(|_| rng.gen_range(0..3)).collect();
            seen.insert(ids, rng.gen_range(-100.0..100.0));
        }
        let rows: Vec<(Lineage, f64)> = seen.into_iter().map(|(ids, f)| (Lineage(ids), f)).collect();
        let ordered = SampleRelation::from_lineage(schema.clone(), rows.clone()).unwrap();
        let mut shuffled = rows;
        shuffled.shuffle(&mut rng);
        let shuffled = SampleRelation::from_lineage(schema, shuffled).unwrap();
        let reference = exact_y_terms(&ordered);
        for table in [y_sample_terms(&shuffled), exact_y_terms(&shuffled), y_sample_terms(&ordered)] {
            let same = table.values().iter().zip(reference.values()).all(|(x, y)| x.to_bits() == y.to_bits());
            prop_assert!(same);
        }
    }

    #[test]
    fn select_conditions_fuse(threshold in -3.0f64..5.0, key in 0i64..2) {
        let mut rng = ChaCha8Rng::seed_from_u64(threshold.to_bits());
        let base = engine::scan(&common::keyed_table("t", 12, &mut rng));
        let p1 = Predicate::cmp("t_v", CompareOp::Gt, Value::Float(threshold));
        let p2 = Predicate::cmp("t_k", CompareOp::Eq, Value::Int(key));
        let nested = engine::select(&p2, engine::select(&p1, base.clone()).unwrap()).unwrap();
        let fused = engine::select(&p1.and(p2), base).unwrap();
        prop_assert_eq!(nested, fused);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn join_lineage_projects_onto_inputs(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = engine::scan(&common::keyed_table("r", rng.gen_range(1..8), &mut rng));
        let s = engine::scan(&common::keyed_table("s", rng.gen_range(1..8), &mut rng));
        let joined = engine::join(&JoinCondition::equi("r_j", "s_k"), &r, &s).unwrap();
        let schema = joined.schema().clone();
        let r_mask = schema.mask_of(&["r"]).unwrap();
        let s_mask = schema.mask_of(&["s"]).unwrap();
        for row in joined.rows() {
            let rid = row.lineage.project(r_mask);
            let sid = row.lineage.project(s_mask);
            let left = r.rows().iter().find(|x| x.lineage.ids() == rid.as_slice()).unwrap();
            let right = s.rows().iter().find(|x| x.lineage.ids() == sid.as_slice()).unwrap();
            prop_assert_eq!(&left.values[1], &right.values[0]);
        }
        let expected = r
            .rows()
            .iter()
            .map(|x| s.rows().iter().filter(|y| y.values[0] == x.values[1]).count())
            .sum::<usize>();
        prop_assert_eq!(joined.len(), expected);
    }

    #[test]
    fn executor_is_deterministic(instance in 0u64..1000, run in any::<u64>()) {
        let (plan, catalog) = common::random_tiny_instance(instance);
        let bound = plan.bind_populations(&catalog).unwrap();
        prop_assert_eq!(execute(&bound, &catalog, run).unwrap(), execute(&bound, &catalog, run).unwrap());
    }

    #[test]
    fn exact_variance_is_non_negative(instance in 0u64..1000) {
        let (plan, catalog) = common::random_tiny_instance(instance);
        let bound = plan.bind_populations(&catalog).unwrap();
        let g = normalize_plan(&bound).unwrap().top;
        let full = full_result(&bound, &catalog).unwrap();
        let y = exact_y_terms(&full);
        let v = variance_estimate(&y, &c_coefficients(&g), g.a()).unwrap().raw;
        let scale = y.get(SubsetMask::EMPTY).abs().max(1.0) / g.a().powi(2);
        prop_assert!(v >= -1e-9 * scale, "variance {}", v);
    }
}

#[test]
fn sample_is_a_subset_of_the_full_result() {
    for instance in 0..20 {
        let (plan, catalog) = common::random_tiny_instance(instance);
        let bound = plan.bind_populations(&catalog).unwrap();
        let full = full_result(&bound, &catalog).unwrap();
        let sample = execute(&bound, &catalog, 99).unwrap();
        for row in sample.rows() {
            let twin = full.rows().iter().find(|f| f.lineage == row.lineage).unwrap();
            assert_eq!(twin.f, row.f);
        }
    }
}

#[test]
fn unsampled_catalog_tables_scan_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let table = common::keyed_table("t", 5, &mut rng);
    let catalog = Catalog::new().with(table.clone());
    let plan = gus_core::plan::PlanNode::scan("t");
    let r = execute(&plan, &catalog, 0).unwrap();
    let ids: Vec<u64> = r.rows().iter().map(|row| row.lineage.ids()[0]).collect();
    assert_eq!(ids, table.ids());
}
