//! JSON plan documents.
//!
//! ```json
//! {
//!   "tables": {"lineitem": {"path": "lineitem.csv", "idColumn": "rowIndex",
//!                            "columnTypes": {"l_orderkey": "int"}}},
//!   "plan": {"op": "sum", "expr": "l_discount*(1-l_tax)", "input": {...}},
//!   "quantiles": [0.05, 0.95]
//! }
//! ```
//!
//! Node shapes: `scan {table}`, `select {predicate, input}`,
//! `join {on, left, right}`, `cross {left, right}`, `union {left, right}`,
//! `sample {sampler, input}`, `sum {expr, input}`. Errors name the JSON path
//! of the offending node, e.g. `$.plan.input.left.sampler`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde_json::{Map, Value as Json};

use crate::engine::{execute, BaseTable, Catalog, ColumnDef};
use crate::error::{GusError, Result};
use crate::expr::{Expr, JoinCondition, Predicate};
use crate::ingest::{ingest_csv, TableSpec};
use crate::plan::PlanNode;
use crate::sampling::SamplerSpec;
use crate::sbox::{EstimateOptions, DEFAULT_LEVEL};

#[derive(Clone, Debug, PartialEq)]
pub struct PlanDocument {
    pub tables: BTreeMap<String, TableSpec>,
    pub plan: PlanNode,
    pub quantiles: Vec<f64>,
    pub level: f64,
}

impl PlanDocument {
    pub fn options(&self) -> EstimateOptions {
        EstimateOptions {
            level: self.level,
            quantiles: self.quantiles.clone(),
        }
    }

    /// Loads every declared table, resolving relative paths against
    /// `base_dir`.
    pub fn load_catalog(&self, base_dir: &Path) -> Result<Catalog> {
        let mut catalog = Catalog::new();
        for (name, spec) in &self.tables {
            catalog.register(ingest_csv(name, spec, base_dir)?);
        }
        Ok(catalog)
    }

    /// Empty tables with the declared column types.
    pub fn schema_catalog(&self) -> Result<Catalog> {
        let mut catalog = Catalog::new();
        for (name, spec) in &self.tables {
            let columns = spec
                .column_types
                .iter()
                .map(|(c, &ty)| ColumnDef::new(c.clone(), ty))
                .collect();
            catalog.register(BaseTable::new(name.clone(), columns, vec![], vec![])?);
        }
        Ok(catalog)
    }
}

/// Parses and validates a plan document.
pub fn parse_plan(text: &str) -> Result<PlanDocument> {
    if text.trim().is_empty() {
        return Err(GusError::parse("$", "empty document"));
    }
    let json: Json = serde_json::from_str(text).map_err(|e| {
        GusError::parse("$", format!("line {} column {}: {e}", e.line(), e.column()))
    })?;
    let root = as_object(&json, "$")?;
    check_keys(root, "$", &["tables", "plan", "quantiles", "level"])?;

    let tables: BTreeMap<String, TableSpec> = match root.get("tables") {
        Some(t) => typed(t, "$.tables")?,
        None => return Err(GusError::parse("$", "missing `tables`")),
    };
    let plan_json = root.get("plan").ok_or_else(|| GusError::parse("$", "missing `plan`"))?;
    let mut scanned = BTreeSet::new();
    let plan = parse_node(plan_json, "$.plan", &mut scanned)?;

    for table in &scanned {
        if !tables.contains_key(table) {
            return Err(GusError::parse("$.tables", format!("table `{table}` is scanned but not declared")));
        }
    }
    let quantiles: Vec<f64> = match root.get("quantiles") {
        Some(q) => typed(q, "$.quantiles")?,
        None => EstimateOptions::default().quantiles,
    };
    for (i, q) in quantiles.iter().enumerate() {
        if !(*q > 0.0 && *q < 1.0) {
            return Err(GusError::parse(format!("$.quantiles[{i}]"), format!("quantile {q} is not in (0, 1)")));
        }
    }
    let level: f64 = match root.get("level") {
        Some(l) => typed(l, "$.level")?,
        None => DEFAULT_LEVEL,
    };
    if !(level > 0.0 && level < 1.0) {
        return Err(GusError::parse("$.level", format!("level {level} is not in (0, 1)")));
    }

    let doc = PlanDocument {
        tables,
        plan,
        quantiles,
        level,
    };
    doc.plan.lineage_schema()?;
    // Resolve every column and type against the declared schemas.
    execute(&doc.plan.strip_sampling(), &doc.schema_catalog()?, 0)?;
    Ok(doc)
}

pub fn load_plan(path: &Path) -> Result<(PlanDocument, PathBuf)> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((parse_plan(&text)?, base))
}

fn as_object<'a>(v: &'a Json, path: &str) -> Result<&'a Map<String, Json>> {
    v.as_object()
        .ok_or_else(|| GusError::parse(path, format!("expected an object, found {}", kind(v))))
}

fn kind(v: &Json) -> &'static str {
    match v {
        Json::Null => "null",
        Json::Bool(_) => "a boolean",
        Json::Number(_) => "a number",
        Json::String(_) => "a string",
        Json::Array(_) => "an array",
        Json::Object(_) => "an object",
    }
}

fn check_keys(obj: &Map<String, Json>, path: &str, allowed: &[&str]) -> Result<()> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(GusError::parse(
            path,
            format!("unexpected field `{k}` (expected one of: {})", allowed.join(", ")),
        )),
        None => Ok(()),
    }
}

fn typed<T: DeserializeOwned>(v: &Json, path: &str) -> Result<T> {
    serde_json::from_value(v.clone()).map_err(|e| GusError::parse(path, e.to_string()))
}

fn field<'a>(obj: &'a Map<String, Json>, path: &str, name: &str) -> Result<&'a Json> {
    obj.get(name)
        .ok_or_else(|| GusError::parse(path, format!("missing field `{name}`")))
}

fn child(obj: &Map<String, Json>, path: &str, name: &str, scanned: &mut BTreeSet<String>) -> Result<Box<PlanNode>> {
    let sub = format!("{path}.{name}");
    Ok(Box::new(parse_node(field(obj, path, name)?, &sub, scanned)?))
}

fn parse_node(v: &Json, path: &str, scanned: &mut BTreeSet<String>) -> Result<PlanNode> {
    let obj = as_object(v, path)?;
    let op = match field(obj, path, "op")? {
        Json::String(s) => s.as_str(),
        other => return Err(GusError::parse(path, format!("`op` must be a string, found {}", kind(other)))),
    };
    Ok(match op {
        "scan" => {
            check_keys(obj, path, &["op", "table"])?;
            let table: String = typed(field(obj, path, "table")?, &format!("{path}.table"))?;
            if !scanned.insert(table.clone()) {
                return Err(GusError::SelfJoin(format!(
                    "`{table}` (scanned twice, at {path} and earlier)"
                )));
            }
            PlanNode::Scan { table }
        }
        "select" => {
            check_keys(obj, path, &["op", "predicate", "input"])?;
            let predicate: Predicate = typed(field(obj, path, "predicate")?, &format!("{path}.predicate"))?;
            PlanNode::Select {
                predicate,
                input: child(obj, path, "input", scanned)?,
            }
        }
        "join" => {
            check_keys(obj, path, &["op", "on", "left", "right"])?;
            let condition: JoinCondition = typed(field(obj, path, "on")?, &format!("{path}.on"))?;
            PlanNode::Join {
                condition,
                left: child(obj, path, "left", scanned)?,
                right: child(obj, path, "right", scanned)?,
            }
        }
        "cross" => {
            check_keys(obj, path, &["op", "left", "right"])?;
            PlanNode::Cross {
                left: child(obj, path, "left", scanned)?,
                right: child(obj, path, "right", scanned)?,
            }
        }
        "union" => {
            check_keys(obj, path, &["op", "left", "right"])?;
            let left = child(obj, path, "left", &mut scanned.clone())?;
            // Both union branches scan the same relations by construction.
            let right = child(obj, path, "right", scanned)?;
            PlanNode::UnionDedup { left, right }
        }
        "sample" => {
            check_keys(obj, path, &["op", "sampler", "input"])?;
            let sampler_path = format!("{path}.sampler");
            let sampler: SamplerSpec = typed(field(obj, path, "sampler")?, &sampler_path)?;
            sampler
                .validate()
                .map_err(|e| GusError::parse(&sampler_path, e.to_string()))?;
            PlanNode::Sample {
                sampler,
                input: child(obj, path, "input", scanned)?,
            }
        }
        "sum" => {
            check_keys(obj, path, &["op", "expr", "input"])?;
            let expr_path = format!("{path}.expr");
            let text: String = typed(field(obj, path, "expr")?, &expr_path)?;
            let expr = Expr::parse(&text).map_err(|e| GusError::parse(&expr_path, e.to_string()))?;
            PlanNode::SumAggregate {
                expr,
                input: child(obj, path, "input", scanned)?,
            }
        }
        "gus" => {
            return Err(GusError::parse(
                path,
                "`gus` nodes are analysis-only and cannot appear in an executable plan",
            ))
        }
        other => {
            return Err(GusError::parse(
                format!("{path}.op"),
                format!("unknown op `{other}` (expected scan, select, join, cross, union, sample or sum)"),
            ))
        }
    })
}
