#![allow(dead_code)]

use gus_core::dsl::{parse_plan, PlanDocument};
use gus_core::engine::{BaseTable, Catalog, ColumnDef};
use gus_core::expr::{CompareOp, Expr, JoinCondition, Predicate, ScalarType, Value};
use gus_core::lineage::LineageSchema;
use gus_core::params::GusParams;
use gus_core::plan::PlanNode;
use gus_core::sampling::SamplerSpec;
use gus_core::tpch::{generate_tpch_tiny, TpchScale};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generated desk-scale data and its Query-1 document.
pub fn desk_query1() -> (PlanDocument, Catalog) {
    let dir = tempfile::tempdir().unwrap();
    generate_tpch_tiny(&TpchScale::default(), 7, dir.path()).unwrap();
    let doc = parse_plan(&std::fs::read_to_string(dir.path().join("query1.json")).unwrap()).unwrap();
    let catalog = doc.load_catalog(dir.path()).unwrap();
    (doc, catalog)
}

/// Table `name` with columns `{name}_k`, `{name}_j` (small int keys) and
/// `{name}_v` (float).
pub fn keyed_table(name: &str, rows: usize, rng: &mut ChaCha8Rng) -> BaseTable {
    BaseTable::with_row_ids(
        name,
        vec![
            ColumnDef::new(format!("{name}_k"), ScalarType::Int),
            ColumnDef::new(format!("{name}_j"), ScalarType::Int),
            ColumnDef::new(format!("{name}_v"), ScalarType::Float),
        ],
        (0..rows)
            .map(|_| {
                vec![
                    Value::Int(rng.gen_range(0..2)),
                    Value::Int(rng.gen_range(0..2)),
                    Value::Float(rng.gen_range(-4..=9) as f64 * 0.5),
                ]
            })
            .collect(),
    )
    .unwrap()
}

/// Leaf with optional sampler: 0 none, 1 Bernoulli, 2 WOR.
fn leaf(name: &str, rows: usize, kind: u8, rng: &mut ChaCha8Rng) -> (PlanNode, f64) {
    let scan = PlanNode::scan(name);
    match kind {
        1 => {
            let p = [0.2, 0.35, 0.5, 0.7, 0.9][rng.gen_range(0..5)];
            (scan.sample(SamplerSpec::bernoulli(p, rng.gen())), 2f64.powi(rows as i32))
        }
        2 => {
            let n = rng.gen_range(1..=rows);
            let configs = (0..n).fold(1.0, |acc, i| acc * (rows - i) as f64 / (i + 1) as f64);
            (scan.sample(SamplerSpec::wor(n, rng.gen())), configs)
        }
        _ => (scan, 1.0),
    }
}

/// A random tiny join plan with 1 to 3 joins, up to 6 rows per relation,
/// a Bernoulli/WOR mix and enumerable sample space.
pub fn random_tiny_instance(seed: u64) -> (PlanNode, Catalog) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let k = rng.gen_range(2..=4);
        let mut catalog = Catalog::new();
        let mut space = 1.0;
        let mut plan: Option<PlanNode> = None;
        let mut any_sampled = false;
        let mut f_terms = Vec::new();
        for i in 0..k {
            let name = format!("r{i}");
            let rows = rng.gen_range(2..=6);
            catalog.register(keyed_table(&name, rows, &mut rng));
            let kind = rng.gen_range(0..3u8);
            any_sampled |= kind != 0;
            let (node, configs) = leaf(&name, rows, kind, &mut rng);
            space *= configs;
            f_terms.push(format!("{}*{name}_v", rng.gen_range(1..=3)));
            plan = Some(match plan {
                None => node,
                Some(left) => left.join(JoinCondition::equi(format!("r{}_j", i - 1), format!("{name}_k")), node),
            });
        }
        if !any_sampled || space > (1u64 << 20) as f64 {
            continue;
        }
        let mut plan = plan.unwrap();
        if rng.gen_bool(0.3) {
            plan = plan.select(Predicate::cmp("r0_v", CompareOp::Gt, Value::Float(-1.0)));
        }
        let plan = plan.sum(Expr::parse(&f_terms.join("+")).unwrap());
        return (plan, catalog);
    }
}

/// Parameters on a 1/64 grid satisfying `max(0, 2a−1) ≤ b_T ≤ a` and
/// `b_full = a`, so products and sums in the algebra are exact.
pub fn dyadic_params(schema: &LineageSchema, rng: &mut ChaCha8Rng) -> GusParams {
    let a_units: i32 = rng.gen_range(0..=64);
    let lo = (2 * a_units - 64).max(0);
    let full = schema.full_mask();
    GusParams::from_fn(schema.clone(), a_units as f64 / 64.0, |s| {
        if s == full {
            a_units as f64 / 64.0
        } else {
            rng.gen_range(lo..=a_units) as f64 / 64.0
        }
    })
    .unwrap()
}

/// `true` when `value` rounds to `printed` at `max(digits printed, 4)`
/// significant digits.
pub fn matches_printed(value: f64, printed: &str) -> bool {
    let target: f64 = printed.parse().unwrap();
    let mantissa = printed.split(['e', 'E']).next().unwrap();
    let digits = mantissa.trim_start_matches(['-', '0', '.']).chars().filter(char::is_ascii_digit).count();
    let digits = digits.max(4) as i32;
    let exp = target.abs().log10().floor() as i32;
    let half_unit = 0.5 * 10f64.powi(exp - digits + 1);
    (value - target).abs() <= half_unit * (1.0 + 1e-9)
}
