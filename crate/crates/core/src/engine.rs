//! In-memory execution of the relational part of a plan.
//!
//! Every derived row carries its lineage: the ids of the base rows it was
//! built from, one per relation of the relation's [`LineageSchema`]. Selection
//! keeps lineage unchanged, joins concatenate it, and union deduplicates on
//! it.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{GusError, Result};
use crate::expr::{
    check_comparable, ColumnResolver, CompareOp, Expr, JoinCondition, JoinKey, Predicate,
    ScalarType, Value,
};
use crate::lineage::{Lineage, LineageSchema};
use crate::plan::PlanNode;
use crate::sampling;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub ty: ScalarType,
}

impl ColumnDef {
    pub fn new(name: impl Into<String>, ty: ScalarType) -> Self {
        ColumnDef {
            name: name.into(),
            ty,
        }
    }
}

/// A registered base relation. Row ids are unique and are the only thing
/// lineage ever compares.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseTable {
    name: String,
    columns: Arc<[ColumnDef]>,
    rows: Vec<Vec<Value>>,
    ids: Vec<u64>,
}

impl BaseTable {
    pub fn new(
        name: impl Into<String>,
        columns: Vec<ColumnDef>,
        rows: Vec<Vec<Value>>,
        ids: Vec<u64>,
    ) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(GusError::Schema("table name must be non-empty".into()));
        }
        if ids.len() != rows.len() {
            return Err(GusError::Schema(format!(
                "table `{name}`: {} ids for {} rows",
                ids.len(),
                rows.len()
            )));
        }
        let mut seen_cols = HashSet::new();
        for c in &columns {
            if !seen_cols.insert(c.name.as_str()) {
                return Err(GusError::Schema(format!(
                    "table `{name}`: duplicate column `{}`",
                    c.name
                )));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(GusError::Schema(format!(
                    "table `{name}` row {i}: {} values for {} columns",
                    row.len(),
                    columns.len()
                )));
            }
            for (v, c) in row.iter().zip(&columns) {
                if v.scalar_type() != c.ty {
                    return Err(GusError::Type(format!(
                        "table `{name}` row {i}: column `{}` expects {:?}, got {v}",
                        c.name, c.ty
                    )));
                }
            }
        }
        let mut seen = HashSet::with_capacity(ids.len());
        if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(GusError::Schema(format!(
                "table `{name}`: duplicate row id {}",
                *dup as i64
            )));
        }
        Ok(BaseTable {
            name,
            columns: columns.into(),
            rows,
            ids,
        })
    }

    /// Ids are the row positions.
    pub fn with_row_ids(
        name: impl Into<String>,
        columns: Vec<ColumnDef>,
        rows: Vec<Vec<Value>>,
    ) -> Result<Self> {
        let ids = (0..rows.len() as u64).collect();
        Self::new(name, columns, rows, ids)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn columns(&self) -> &[ColumnDef] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Registered base tables, keyed by the name scans refer to. That name is
/// also the table's lineage relation name.
#[derive(Clone, Debug, Default)]
pub struct Catalog {
    tables: BTreeMap<String, BaseTable>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, table: BaseTable) -> &mut Self {
        self.tables.insert(table.name.clone(), table);
        self
    }

    pub fn with(mut self, table: BaseTable) -> Self {
        self.register(table);
        self
    }

    pub fn get(&self, name: &str) -> Result<&BaseTable> {
        self.tables
            .get(name)
            .ok_or_else(|| GusError::UnknownTable(name.to_string()))
    }

    pub fn tables(&self) -> impl Iterator<Item = &BaseTable> {
        self.tables.values()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub values: Vec<Value>,
    pub lineage: Lineage,
    pub f: f64,
}

/// A bag of derived rows with lineage. Filter semantics keep it a set:
/// no two rows share a lineage vector.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRelation {
    schema: LineageSchema,
    columns: Arc<[ColumnDef]>,
    rows: Vec<Row>,
}

impl SampleRelation {
    pub fn new(schema: LineageSchema, columns: Vec<ColumnDef>, rows: Vec<Row>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(rows.len());
        for row in &rows {
            if row.lineage.len() != schema.len() {
                return Err(GusError::Schema(format!(
                    "lineage of length {} in a relation over {schema}",
                    row.lineage.len()
                )));
            }
            if !seen.insert(&row.lineage) {
                return Err(GusError::Schema(format!(
                    "duplicate lineage {:?}",
                    row.lineage.ids()
                )));
            }
        }
        Ok(SampleRelation {
            schema,
            columns: columns.into(),
            rows,
        })
    }

    /// Rows with only lineage and aggregate values, as the estimator sees
    /// them.
    pub fn from_lineage(schema: LineageSchema, rows: Vec<(Lineage, f64)>) -> Result<Self> {
        let rows = rows
            .into_iter()
            .map(|(lineage, f)| Row {
                values: Vec::new(),
                lineage,
                f,
            })
            .collect();
        Self::new(schema, Vec::new(), rows)
    }

    pub fn schema(&self) -> &LineageSchema {
        &self.schema
    }

    pub fn columns(&self) -> &[ColumnDef] {
        &self.columns
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.rows.iter().fold(0.0, |acc, r| acc + r.f)
    }

    /// Same rows, sorted by lineage.
    pub fn sorted(mut self) -> Self {
        self.rows.sort_by(|a, b| a.lineage.cmp(&b.lineage));
        self
    }

    pub(crate) fn filter_rows(self, mut keep: impl FnMut(usize, &Row) -> bool) -> Self {
        let SampleRelation {
            schema,
            columns,
            rows,
        } = self;
        let rows = rows
            .into_iter()
            .enumerate()
            .filter(|(i, r)| keep(*i, r))
            .map(|(_, r)| r)
            .collect();
        SampleRelation {
            schema,
            columns,
            rows,
        }
    }

    /// Binds `f(t)` for every row.
    pub fn bind_aggregate(&mut self, expr: &Expr) -> Result<()> {
        let bound = expr.bind(self)?;
        for row in &mut self.rows {
            row.f = bound.eval(&row.values);
        }
        Ok(())
    }

    pub fn lineages(&self) -> impl Iterator<Item = &Lineage> {
        self.rows.iter().map(|r| &r.lineage)
    }
}

impl ColumnResolver for SampleRelation {
    fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    fn column_type(&self, index: usize) -> ScalarType {
        self.columns[index].ty
    }
}

/// One row per base row, lineage `[id]`, `f = 0`.
pub fn scan(table: &BaseTable) -> SampleRelation {
    let rows = table
        .rows
        .iter()
        .zip(&table.ids)
        .map(|(values, &id)| Row {
            values: values.clone(),
            lineage: Lineage(vec![id]),
            f: 0.0,
        })
        .collect();
    SampleRelation {
        schema: LineageSchema::single(table.name.clone()).expect("table names are non-empty"),
        columns: table.columns.clone(),
        rows,
    }
}

pub fn select(predicate: &Predicate, r: SampleRelation) -> Result<SampleRelation> {
    let bound = predicate.bind(&r)?;
    Ok(r.filter_rows(|_, row| bound.eval(&row.values)))
}

/// θ-join on a conjunctive condition. Equality atoms are hashed; the rest
/// are checked per candidate pair. An empty condition is a cross product.
pub fn join(
    condition: &JoinCondition,
    left: &SampleRelation,
    right: &SampleRelation,
) -> Result<SampleRelation> {
    let schema = left.schema.merge_disjoint(&right.schema)?;

    let mut columns: Vec<ColumnDef> = left.columns.to_vec();
    for c in right.columns.iter() {
        if columns.iter().any(|l| l.name == c.name) {
            return Err(GusError::Schema(format!(
                "column `{}` exists on both sides of the join",
                c.name
            )));
        }
        columns.push(c.clone());
    }

    // (left column, op, right column) with sides resolved.
    let mut eq_keys = Vec::new();
    let mut residual = Vec::new();
    for atom in &condition.0 {
        let (l, op, r) = match (left.column_index(&atom.left), right.column_index(&atom.right)) {
            (Some(l), Some(r)) => (l, atom.op, r),
            _ => match (left.column_index(&atom.right), right.column_index(&atom.left)) {
                (Some(l), Some(r)) => (l, flip(atom.op), r),
                _ => {
                    let missing = if left.column_index(&atom.left).is_none()
                        && right.column_index(&atom.left).is_none()
                    {
                        &atom.left
                    } else {
                        &atom.right
                    };
                    return Err(GusError::UnknownColumn(missing.clone()));
                }
            },
        };
        check_comparable(&atom.left, left.columns[l].ty, right.columns[r].ty)?;
        if op == CompareOp::Eq {
            eq_keys.push((l, r));
        } else {
            residual.push((l, op, r));
        }
    }

    // Where each output lineage slot comes from: (from_left, index).
    let sources: Vec<(bool, usize)> = schema
        .relations()
        .iter()
        .map(|name| match left.schema.position(name) {
            Some(i) => (true, i),
            None => (false, right.schema.position(name).unwrap()),
        })
        .collect();

    let emit = |l: &Row, r: &Row, out: &mut Vec<Row>| {
        if residual.iter().all(|&(li, op, ri)| {
            l.values[li]
                .compare(&r.values[ri])
                .is_ok_and(|o| op.holds(o))
        }) {
            let lineage = sources
                .iter()
                .map(|&(from_left, i)| if from_left { l.lineage.0[i] } else { r.lineage.0[i] })
                .collect();
            let mut values = Vec::with_capacity(l.values.len() + r.values.len());
            values.extend_from_slice(&l.values);
            values.extend_from_slice(&r.values);
            out.push(Row {
                values,
                lineage: Lineage(lineage),
                f: 0.0,
            });
        }
    };

    let mut rows = Vec::new();
    if eq_keys.is_empty() {
        for l in &left.rows {
            for r in &right.rows {
                emit(l, r, &mut rows);
            }
        }
    } else {
        let mut table: HashMap<Vec<JoinKey>, Vec<usize>> = HashMap::new();
        for (i, r) in right.rows.iter().enumerate() {
            let key = eq_keys.iter().map(|&(_, ri)| r.values[ri].join_key()).collect();
            table.entry(key).or_default().push(i);
        }
        for l in &left.rows {
            let key: Vec<JoinKey> = eq_keys.iter().map(|&(li, _)| l.values[li].join_key()).collect();
            if let Some(matches) = table.get(&key) {
                for &i in matches {
                    emit(l, &right.rows[i], &mut rows);
                }
            }
        }
    }

    Ok(SampleRelation {
        schema,
        columns: columns.into(),
        rows,
    })
}

fn flip(op: CompareOp) -> CompareOp {
    match op {
        CompareOp::Lt => CompareOp::Gt,
        CompareOp::Le => CompareOp::Ge,
        CompareOp::Gt => CompareOp::Lt,
        CompareOp::Ge => CompareOp::Le,
        other => other,
    }
}

/// Set union keyed by lineage; a lineage on both sides appears once.
pub fn union_dedup(left: SampleRelation, right: &SampleRelation) -> Result<SampleRelation> {
    if left.schema != right.schema || left.columns != right.columns {
        return Err(GusError::Schema(format!(
            "union inputs differ: {} vs {}",
            left.schema, right.schema
        )));
    }
    let present: HashSet<Lineage> = left.rows.iter().map(|r| r.lineage.clone()).collect();
    let mut out = left;
    out.rows.extend(
        right
            .rows
            .iter()
            .filter(|r| !present.contains(&r.lineage))
            .cloned(),
    );
    Ok(out)
}

/// Binds `f` per row and returns `Σ f`.
pub fn sum_aggregate(expr: &Expr, r: &mut SampleRelation) -> Result<f64> {
    r.bind_aggregate(expr)?;
    Ok(r.total())
}

/// Executes a plan. Sampling operators draw from streams derived from
/// `seed`, so the same plan, data and seed always give the same rows.
/// The result carries `f` when the plan ends in a sum aggregate.
pub fn execute(plan: &PlanNode, catalog: &Catalog, seed: u64) -> Result<SampleRelation> {
    let mut counter = 0u64;
    exec_node(plan, catalog, seed, &mut counter)
}

fn exec_node(
    node: &PlanNode,
    catalog: &Catalog,
    seed: u64,
    counter: &mut u64,
) -> Result<SampleRelation> {
    let node_id = *counter;
    *counter += 1;
    match node {
        PlanNode::Scan { table } => Ok(scan(catalog.get(table)?)),
        PlanNode::Select { predicate, input } => {
            select(predicate, exec_node(input, catalog, seed, counter)?)
        }
        PlanNode::Join {
            condition,
            left,
            right,
        } => {
            let l = exec_node(left, catalog, seed, counter)?;
            let r = exec_node(right, catalog, seed, counter)?;
            join(condition, &l, &r)
        }
        PlanNode::Cross { left, right } => {
            let l = exec_node(left, catalog, seed, counter)?;
            let r = exec_node(right, catalog, seed, counter)?;
            join(&JoinCondition::default(), &l, &r)
        }
        PlanNode::UnionDedup { left, right } => {
            let l = exec_node(left, catalog, seed, counter)?;
            let r = exec_node(right, catalog, seed, counter)?;
            union_dedup(l, &r)
        }
        PlanNode::Sample { sampler, input } => {
            let r = exec_node(input, catalog, seed, counter)?;
            sampling::apply(sampler, r, sampling::derive_seed(seed, node_id))
        }
        PlanNode::GusQuasi { .. } => Err(GusError::Unsupported(
            "GUS quasi-operators are analysis-only and cannot be executed".into(),
        )),
        PlanNode::SumAggregate { expr, input } => {
            let mut r = exec_node(input, catalog, seed, counter)?;
            r.bind_aggregate(expr)?;
            Ok(r)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Atom;

    fn table(name: &str, key: &str, val: &str, rows: &[(i64, f64)]) -> BaseTable {
        BaseTable::with_row_ids(
            name,
            vec![ColumnDef::new(key, ScalarType::Int), ColumnDef::new(val, ScalarType::Float)],
            rows.iter().map(|&(k, v)| vec![Value::Int(k), Value::Float(v)]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn scan_assigns_lineage() {
        let t = table("l", "k", "v", &[(1, 1.0), (2, 2.0), (3, 3.0)]);
        let r = scan(&t);
        let ids: Vec<_> = r.lineages().map(|l| l.0.clone()).collect();
        assert_eq!(ids, vec![vec![0], vec![1], vec![2]]);
        assert!(r.rows().iter().all(|row| row.f == 0.0));
        assert!(scan(&table("e", "k", "v", &[])).is_empty());
    }

    #[test]
    fn ingestion_rejects_duplicate_ids_and_bad_types() {
        let cols = vec![ColumnDef::new("k", ScalarType::Int)];
        let rows = vec![vec![Value::Int(1)], vec![Value::Int(2)]];
        assert!(BaseTable::new("t", cols.clone(), rows.clone(), vec![5, 5]).is_err());
        assert!(BaseTable::new("t", cols.clone(), vec![vec![Value::Float(1.0)]], vec![0]).is_err());
        assert!(BaseTable::new("t", cols, rows, vec![5, 6]).is_ok());
    }

    #[test]
    fn select_identity_and_empty() {
        let r = scan(&table("l", "k", "v", &[(1, 1.0), (2, 200.0)]));
        assert_eq!(select(&Predicate::always_true(), r.clone()).unwrap(), r);
        let never = Predicate::cmp("k", CompareOp::Gt, Value::Int(100));
        assert!(select(&never, r.clone()).unwrap().is_empty());
        let bad = Predicate::cmp("k", CompareOp::Gt, Value::Str("x".into()));
        assert!(matches!(select(&bad, r), Err(GusError::Type(_))));
    }

    #[test]
    fn select_fuses() {
        let r = scan(&table("l", "k", "v", &[(1, 1.0), (2, 5.0), (3, 9.0), (4, 2.0)]));
        let a = Predicate::cmp("k", CompareOp::Ge, Value::Int(2));
        let b = Predicate::cmp("v", CompareOp::Lt, Value::Float(6.0));
        let nested = select(&a, select(&b, r.clone()).unwrap()).unwrap();
        let fused = select(&a.clone().and(b), r).unwrap();
        assert_eq!(nested.sorted(), fused.sorted());
    }

    #[test]
    fn join_single_match_concatenates_lineage() {
        let l = scan(&table("l", "lk", "lv", &[(7, 1.0), (8, 2.0)]));
        let o = scan(&table("o", "ok", "ov", &[(8, 3.0)]));
        let j = join(&JoinCondition::equi("lk", "ok"), &l, &o).unwrap();
        assert_eq!(j.len(), 1);
        assert_eq!(j.schema().relations(), ["l", "o"]);
        assert_eq!(j.rows()[0].lineage, Lineage(vec![1, 0]));

        // Reversed operand order still yields canonical lineage order.
        let j2 = join(&JoinCondition::equi("ok", "lk"), &o, &l).unwrap();
        assert_eq!(j2.rows()[0].lineage, Lineage(vec![1, 0]));
    }

    #[test]
    fn cross_product_size_and_self_join_ban() {
        let l = scan(&table("l", "lk", "lv", &[(1, 1.0), (2, 2.0), (3, 3.0)]));
        let o = scan(&table("o", "ok", "ov", &[(1, 1.0), (2, 2.0)]));
        assert_eq!(join(&JoinCondition::default(), &l, &o).unwrap().len(), 6);
        assert!(matches!(join(&JoinCondition::default(), &l, &l), Err(GusError::SelfJoin(_))));
    }

    #[test]
    fn theta_join_residual() {
        let l = scan(&table("l", "lk", "lv", &[(1, 1.0), (2, 5.0)]));
        let o = scan(&table("o", "ok", "ov", &[(1, 3.0), (2, 3.0)]));
        let cond = JoinCondition::equi("lk", "ok").and("lv", CompareOp::Lt, "ov");
        let j = join(&cond, &l, &o).unwrap();
        assert_eq!(j.len(), 1);
        assert_eq!(j.rows()[0].lineage, Lineage(vec![0, 0]));
    }

    #[test]
    fn union_dedup_cases() {
        let t = table("l", "k", "v", &[(1, 1.0), (2, 2.0), (3, 3.0)]);
        let all = scan(&t);
        let first = all.clone().filter_rows(|i, _| i < 2);
        let last = all.clone().filter_rows(|i, _| i >= 1);
        let only_last = all.clone().filter_rows(|i, _| i == 2);

        assert_eq!(union_dedup(first.clone(), &last).unwrap().len(), 3);
        assert_eq!(union_dedup(first.clone(), &only_last).unwrap().sorted(), all.clone().sorted());
        assert_eq!(union_dedup(all.clone(), &all).unwrap(), all);

        let other = scan(&table("o", "k", "v", &[(1, 1.0)]));
        assert!(union_dedup(first, &other).is_err());
    }

    #[test]
    fn sum_aggregate_examples() {
        let t = BaseTable::with_row_ids(
            "l",
            vec![
                ColumnDef::new("l_discount", ScalarType::Float),
                ColumnDef::new("l_tax", ScalarType::Float),
            ],
            vec![
                vec![Value::Float(0.1), Value::Float(0.0)],
                vec![Value::Float(0.2), Value::Float(0.5)],
            ],
        )
        .unwrap();
        let mut r = scan(&t);
        let total = sum_aggregate(&Expr::parse("l_discount*(1.0-l_tax)").unwrap(), &mut r).unwrap();
        assert!((total - 0.2).abs() < 1e-15);
        assert_eq!(sum_aggregate(&Expr::Int(1), &mut r.clone()).unwrap(), 2.0);

        let mut empty = r.clone().filter_rows(|_, _| false);
        assert_eq!(sum_aggregate(&Expr::Int(1), &mut empty).unwrap(), 0.0);

        let strings = BaseTable::with_row_ids(
            "s",
            vec![ColumnDef::new("name", ScalarType::Str)],
            vec![vec![Value::Str("x".into())]],
        )
        .unwrap();
        assert!(sum_aggregate(&Expr::parse("name").unwrap(), &mut scan(&strings)).is_err());
    }

    #[test]
    fn column_equality_atom() {
        let t = BaseTable::with_row_ids(
            "t",
            vec![ColumnDef::new("a", ScalarType::Int), ColumnDef::new("b", ScalarType::Float)],
            vec![vec![Value::Int(1), Value::Float(1.0)], vec![Value::Int(1), Value::Float(2.0)]],
        )
        .unwrap();
        let p = Predicate(vec![Atom::Columns {
            column: "a".into(),
            equals: "b".into(),
        }]);
        assert_eq!(select(&p, scan(&t)).unwrap().len(), 1);
    }
}
