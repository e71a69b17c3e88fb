mod common;

use std::collections::BTreeMap;

use gus_core::algebra::{gus_of_bernoulli, normalize_plan};
use gus_core::engine::{execute, Catalog};
use gus_core::expr::Expr;
use gus_core::lineage::common_lineage;
use gus_core::oracle::{exact_y_terms, full_result, inclusion_probabilities, moments_of, run_trials};
use gus_core::plan::PlanNode;
use gus_core::run::{run_document, RunOptions};
use gus_core::sampling::{DimSpec, SamplerSpec};
use gus_core::sbox::{analyze, subsample_variance, EstimateOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn one_table(rows: usize) -> Catalog {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    Catalog::new().with(common::keyed_table("t", rows, &mut rng))
}

#[test]
fn bernoulli_pair_retention_is_p_squared() {
    let catalog = one_table(6);
    let p = 0.4;
    let plan = PlanNode::scan("t").sample(SamplerSpec::bernoulli(p, 3));
    let trials = 20_000;
    let freq = inclusion_probabilities(&plan, &catalog, trials, 8).unwrap();
    let band = 5.0 * (p * p * (1.0 - p * p) / trials as f64).sqrt();
    for (i, j) in freq.pairs() {
        if i != j {
            assert!((freq.second[i][j] - p * p).abs() < band, "pair ({i}, {j}): {}", freq.second[i][j]);
        }
    }
}

#[test]
fn lineage_bernoulli_pairs_follow_shared_lineage() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let catalog = Catalog::new()
        .with(common::keyed_table("r", 3, &mut rng))
        .with(common::keyed_table("s", 3, &mut rng));
    let (pr, ps) = (0.5, 0.7);
    let plan = PlanNode::scan("r")
        .cross(PlanNode::scan("s"))
        .sample(SamplerSpec::lineage_bernoulli([("r", pr, 1), ("s", ps, 2)]));
    let trials = 20_000;
    let freq = inclusion_probabilities(&plan, &catalog, trials, 5).unwrap();
    for (i, j) in freq.pairs() {
        let shared = common_lineage(&freq.universe[i], &freq.universe[j]).unwrap();
        let r_factor = if shared.contains(0) { pr } else { pr * pr };
        let s_factor = if shared.contains(1) { ps } else { ps * ps };
        let expected = r_factor * s_factor;
        let band = 5.0 * (expected * (1.0 - expected) / trials as f64).sqrt() + 1e-12;
        assert!((freq.second[i][j] - expected).abs() < band);
    }
}

#[test]
fn bernoulli_y_hat_is_unbiased() {
    let catalog = one_table(8);
    let plan = PlanNode::scan("t")
        .sample(SamplerSpec::bernoulli(0.5, 1))
        .sum(Expr::parse("t_v + 3").unwrap());
    let g = gus_of_bernoulli(0.5, "t").unwrap();
    let exact = exact_y_terms(&full_result(&plan, &catalog).unwrap());
    let opts = EstimateOptions::default();
    let y_hats = run_trials(20_000, 12, |seed| {
        Ok(analyze(&execute(&plan, &catalog, seed)?, &g, &opts)?.y_hat.values().to_vec())
    })
    .unwrap();
    for (s, y) in exact.iter() {
        let m = moments_of(&y_hats.iter().map(|v| v[s.index()]).collect::<Vec<_>>());
        assert!((m.mean - y).abs() < 5.0 * m.stderr, "S = {s:?}: {} vs {y}", m.mean);
    }
}

#[test]
fn desk_query_is_deterministic_per_seed() {
    let (doc, catalog) = common::desk_query1();
    let run = |seed| {
        run_document(&doc, &catalog, &RunOptions { seed, ..Default::default() })
            .unwrap()
            .to_json()
    };
    assert_eq!(run(9), run(9));
    assert_ne!(run(9), run(10));
}

#[test]
fn subsampled_variance_tracks_direct_variance() {
    let (doc, catalog) = common::desk_query1();
    let bound = doc.plan.bind_populations(&catalog).unwrap();
    let g = normalize_plan(&bound).unwrap().top;
    let dims: BTreeMap<String, DimSpec> = [
        ("lineitem".to_string(), DimSpec { p: 0.5, seed: 1 }),
        ("orders".to_string(), DimSpec { p: 0.5, seed: 2 }),
    ]
    .into_iter()
    .collect();
    let opts = EstimateOptions::default();
    let pairs = run_trials(200, 21, |seed| {
        let sample = execute(&bound, &catalog, seed)?;
        let direct = analyze(&sample, &g, &opts)?.variance_hat;
        let sub = subsample_variance(&sample, &g, &dims, seed ^ 1, &opts)?.variance_hat;
        Ok((direct, sub))
    })
    .unwrap();
    let direct: f64 = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64;
    let sub: f64 = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64;
    let ratio = sub / direct;
    assert!((1.0 / 3.0..=3.0).contains(&ratio), "mean subsampled {sub} vs direct {direct}");
}
