//! Seeded generator for small TPC-H-shaped tables plus ready-to-run plan
//! documents over them.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::{GusError, Result};

/// Lines per order are capped so `l_orderkey*10+l_linenumber` stays unique.
pub const MAX_LINES_PER_ORDER: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TpchScale {
    pub lineitem: usize,
    pub orders: usize,
    pub customer: usize,
    pub part: usize,
}

impl Default for TpchScale {
    fn default() -> Self {
        TpchScale {
            lineitem: 1000,
            orders: 250,
            customer: 50,
            part: 100,
        }
    }
}

impl TpchScale {
    /// `"l=1000,o=250,c=50,p=100"`; omitted tables keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut scale = TpchScale::default();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| GusError::InvalidArgument(format!("scale item `{item}` is not key=count")))?;
            let n: usize = value
                .trim()
                .parse()
                .map_err(|_| GusError::InvalidArgument(format!("bad row count in `{item}`")))?;
            match key.trim() {
                "l" | "lineitem" => scale.lineitem = n,
                "o" | "orders" => scale.orders = n,
                "c" | "customer" => scale.customer = n,
                "p" | "part" => scale.part = n,
                other => return Err(GusError::InvalidArgument(format!("unknown table `{other}` in scale"))),
            }
        }
        scale.check()?;
        Ok(scale)
    }

    fn check(&self) -> Result<()> {
        if self.orders == 0 || self.customer == 0 || self.part == 0 {
            return Err(GusError::InvalidArgument("orders, customer and part need at least one row".into()));
        }
        if self.lineitem > self.orders * MAX_LINES_PER_ORDER {
            return Err(GusError::InvalidArgument(format!(
                "{} lineitems cannot fit in {} orders at {MAX_LINES_PER_ORDER} lines each",
                self.lineitem, self.orders
            )));
        }
        Ok(())
    }
}

fn cents(x: f64) -> String {
    format!("{x:.2}")
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `customer.csv`, `part.csv`, `orders.csv`, `lineitem.csv`,
/// `query1.json` and `query_large.json` into `out_dir`. The same scale and
/// seed always produce the same bytes.
pub fn generate_tpch_tiny(scale: &TpchScale, seed: u64, out_dir: &Path) -> Result<Vec<PathBuf>> {
    scale.check()?;
    std::fs::create_dir_all(out_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut written = Vec::new();

    let path = out_dir.join("customer.csv");
    let rows: Vec<Vec<String>> = (1..=scale.customer)
        .map(|k| {
            vec![
                k.to_string(),
                rng.gen_range(0..25).to_string(),
                cents(rng.gen_range(-999.99..9999.99)),
            ]
        })
        .collect();
    write_csv(&path, &["c_custkey", "c_nationkey", "c_acctbal"], rows)?;
    written.push(path);

    let path = out_dir.join("part.csv");
    let rows: Vec<Vec<String>> = (1..=scale.part)
        .map(|k| {
            vec![
                k.to_string(),
                rng.gen_range(1..=50).to_string(),
                cents(rng.gen_range(900.0..2000.0)),
            ]
        })
        .collect();
    write_csv(&path, &["p_partkey", "p_size", "p_retailprice"], rows)?;
    written.push(path);

    // Every order gets a line while lines last; the rest go to random
    // orders below the cap.
    let mut lines = vec![0usize; scale.orders];
    for count in lines.iter_mut().take(scale.lineitem) {
        *count = 1;
    }
    let mut remaining = scale.lineitem.saturating_sub(scale.orders);
    while remaining > 0 {
        let o = rng.gen_range(0..scale.orders);
        if lines[o] < MAX_LINES_PER_ORDER {
            lines[o] += 1;
            remaining -= 1;
        }
    }

    let mut line_rows = Vec::with_capacity(scale.lineitem);
    let mut order_rows = Vec::with_capacity(scale.orders);
    for (o, &count) in lines.iter().enumerate() {
        let orderkey = o + 1;
        let mut total = 0.0;
        for linenumber in 1..=count {
            let quantity: u32 = rng.gen_range(1..=50);
            let price = (rng.gen_range(1.0..100_000.0f64) * 100.0).round() / 100.0;
            let discount = rng.gen_range(0..=10) as f64 / 100.0;
            let tax = rng.gen_range(0..=8) as f64 / 100.0;
            total += price * (1.0 - discount) * (1.0 + tax);
            line_rows.push(vec![
                orderkey.to_string(),
                linenumber.to_string(),
                rng.gen_range(1..=scale.part).to_string(),
                quantity.to_string(),
                cents(price),
                cents(discount),
                cents(tax),
            ]);
        }
        order_rows.push(vec![
            orderkey.to_string(),
            rng.gen_range(1..=scale.customer).to_string(),
            cents(total),
            rng.gen_range(0..2557).to_string(),
        ]);
    }
    let path = out_dir.join("orders.csv");
    write_csv(&path, &["o_orderkey", "o_custkey", "o_totalprice", "o_orderdate"], order_rows)?;
    written.push(path);
    let path = out_dir.join("lineitem.csv");
    write_csv(
        &path,
        &[
            "l_orderkey",
            "l_linenumber",
            "l_partkey",
            "l_quantity",
            "l_extendedprice",
            "l_discount",
            "l_tax",
        ],
        line_rows,
    )?;
    written.push(path);

    let wor_n = scale.orders.div_ceil(5).max(1);
    for (name, doc) in [
        ("query1.json", query1_document(wor_n)),
        ("query_large.json", large_document(wor_n)),
    ] {
        let path = out_dir.join(name);
        std::fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")?;
        written.push(path);
    }
    Ok(written)
}

fn table_specs() -> serde_json::Value {
    json!({
        "lineitem": {
            "path": "lineitem.csv",
            "idColumn": "l_orderkey*10+l_linenumber",
            "columnTypes": {
                "l_orderkey": "int", "l_partkey": "int", "l_quantity": "int",
                "l_extendedprice": "float", "l_discount": "float", "l_tax": "float"
            }
        },
        "orders": {
            "path": "orders.csv",
            "idColumn": "o_orderkey",
            "columnTypes": {"o_orderkey": "int", "o_custkey": "int", "o_totalprice": "float"}
        },
        "customer": {
            "path": "customer.csv",
            "idColumn": "c_custkey",
            "columnTypes": {"c_custkey": "int", "c_acctbal": "float"}
        },
        "part": {
            "path": "part.csv",
            "idColumn": "p_partkey",
            "columnTypes": {"p_partkey": "int", "p_retailprice": "float"}
        }
    })
}

fn sampled(method: serde_json::Value, table: &str) -> serde_json::Value {
    json!({"op": "sample", "sampler": method, "input": {"op": "scan", "table": table}})
}

fn only_tables(names: &[&str]) -> serde_json::Value {
    let all = table_specs();
    let map: serde_json::Map<String, serde_json::Value> = names
        .iter()
        .map(|n| (n.to_string(), all[*n].clone()))
        .collect();
    serde_json::Value::Object(map)
}

/// Lineitem Bernoulli(0.1) joined with a WOR sample of orders, filtered on
/// price, summing `l_discount*(1-l_tax)`.
pub fn query1_document(wor_n: usize) -> serde_json::Value {
    json!({
        "tables": only_tables(&["lineitem", "orders"]),
        "plan": {
            "op": "sum",
            "expr": "l_discount*(1-l_tax)",
            "input": {
                "op": "select",
                "predicate": [{"column": "l_extendedprice", "op": ">", "value": 100}],
                "input": {
                    "op": "join",
                    "on": [{"left": "l_orderkey", "right": "o_orderkey"}],
                    "left": sampled(json!({"method": "bernoulli", "p": 0.1, "seed": 1}), "lineitem"),
                    "right": sampled(json!({"method": "wor", "n": wor_n, "seed": 2}), "orders")
                }
            }
        },
        "quantiles": [0.05, 0.95]
    })
}

/// Four-relation join: sampled lineitem and orders, full customer, part
/// sampled with Bernoulli(0.5).
pub fn large_document(wor_n: usize) -> serde_json::Value {
    json!({
        "tables": table_specs(),
        "plan": {
            "op": "sum",
            "expr": "l_extendedprice*(1-l_discount)",
            "input": {
                "op": "join",
                "on": [{"left": "l_partkey", "right": "p_partkey"}],
                "left": {
                    "op": "join",
                    "on": [{"left": "o_custkey", "right": "c_custkey"}],
                    "left": {
                        "op": "join",
                        "on": [{"left": "l_orderkey", "right": "o_orderkey"}],
                        "left": sampled(json!({"method": "bernoulli", "p": 0.1, "seed": 1}), "lineitem"),
                        "right": sampled(json!({"method": "wor", "n": wor_n, "seed": 2}), "orders")
                    },
                    "right": {"op": "scan", "table": "customer"}
                },
                "right": sampled(json!({"method": "bernoulli", "p": 0.5, "seed": 3}), "part")
            }
        },
        "quantiles": [0.05, 0.95]
    })
}
