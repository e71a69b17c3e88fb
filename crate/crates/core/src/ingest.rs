//! Typed CSV ingestion into base tables.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{BaseTable, ColumnDef};
use crate::error::{GusError, Result};
use crate::expr::{Expr, ScalarType, Value};

/// Where row ids come from.
#[derive(Clone, Debug, PartialEq)]
pub enum IdSource {
    RowIndex,
    Column(String),
    /// Integer expression over columns, e.g. `l_orderkey*10+l_linenumber`.
    Expr(Expr),
}

impl IdSource {
    /// `"rowIndex"`, a bare column name, or an integer expression.
    pub fn parse(text: &str) -> Result<IdSource> {
        let text = text.trim();
        if text == "rowIndex" {
            return Ok(IdSource::RowIndex);
        }
        match Expr::parse(text)? {
            Expr::Column(c) => Ok(IdSource::Column(c)),
            e => Ok(IdSource::Expr(e)),
        }
    }
}

impl Serialize for IdSource {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            IdSource::RowIndex => s.serialize_str("rowIndex"),
            IdSource::Column(c) => s.serialize_str(c),
            IdSource::Expr(e) => s.collect_str(e),
        }
    }
}

impl<'de> Deserialize<'de> for IdSource {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        IdSource::parse(&String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

fn row_index() -> IdSource {
    IdSource::RowIndex
}

/// How to load one table. Only the declared columns are loaded, in header
/// order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TableSpec {
    pub path: PathBuf,
    #[serde(default = "row_index")]
    pub id_column: IdSource,
    pub column_types: BTreeMap<String, ScalarType>,
}

fn ingest_error(source_name: &str, message: impl Into<String>) -> GusError {
    GusError::Ingest {
        source_name: source_name.to_string(),
        message: message.into(),
    }
}

fn parse_value(text: &str, ty: ScalarType) -> Option<Value> {
    let t = text.trim();
    match ty {
        ScalarType::Int => t.parse().ok().map(Value::Int),
        ScalarType::Float => t.parse().ok().filter(|x: &f64| x.is_finite()).map(Value::Float),
        ScalarType::Str => (!text.is_empty()).then(|| Value::Str(text.to_string())),
    }
}

/// Loads `spec.path` (relative paths resolve against `base_dir`).
pub fn ingest_csv(name: &str, spec: &TableSpec, base_dir: &Path) -> Result<BaseTable> {
    let path = base_dir.join(&spec.path);
    let file = std::fs::File::open(&path)
        .map_err(|e| ingest_error(&path.display().to_string(), e.to_string()))?;
    read_table(name, spec, file, &path.display().to_string())
}

/// Like [`ingest_csv`] but reads from any source.
pub fn read_table(name: &str, spec: &TableSpec, input: impl Read, source_name: &str) -> Result<BaseTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| ingest_error(source_name, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    for declared in spec.column_types.keys() {
        if !header.contains(declared) {
            return Err(ingest_error(source_name, format!("missing column `{declared}`")));
        }
    }
    let loaded: Vec<(usize, ColumnDef)> = header
        .iter()
        .enumerate()
        .filter_map(|(i, h)| spec.column_types.get(h).map(|&ty| (i, ColumnDef::new(h.clone(), ty))))
        .collect();
    let id_column = match &spec.id_column {
        IdSource::Column(c) => Some(
            header
                .iter()
                .position(|h| h == c)
                .ok_or_else(|| ingest_error(source_name, format!("missing id column `{c}`")))?,
        ),
        _ => None,
    };
    if let IdSource::Expr(e) = &spec.id_column {
        for c in e.columns() {
            if !header.iter().any(|h| h == c) {
                return Err(ingest_error(source_name, format!("id expression uses missing column `{c}`")));
            }
        }
    }

    let mut rows = Vec::new();
    let mut ids = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| ingest_error(source_name, e.to_string()))?;
        let mut values = Vec::with_capacity(loaded.len());
        for (pos, col) in &loaded {
            let text = record.get(*pos).unwrap_or("");
            let v = parse_value(text, col.ty).ok_or_else(|| {
                ingest_error(
                    source_name,
                    format!("line {line}: column `{}`: cannot parse {text:?} as {:?}", col.name, col.ty),
                )
            })?;
            values.push(v);
        }
        let raw_id: i64 = match (&spec.id_column, id_column) {
            (IdSource::RowIndex, _) => i as i64,
            (IdSource::Column(c), Some(pos)) => {
                let text = record.get(pos).unwrap_or("").trim();
                text.parse().map_err(|_| {
                    ingest_error(source_name, format!("line {line}: id column `{c}` holds {text:?}"))
                })?
            }
            (IdSource::Expr(e), _) => {
                let lookup = |col: &str| {
                    header
                        .iter()
                        .position(|h| h == col)
                        .and_then(|p| parse_value(record.get(p)?, ScalarType::Int))
                };
                e.eval_int(&lookup)
                    .map_err(|err| ingest_error(source_name, format!("line {line}: {err}")))?
            }
            (IdSource::Column(_), None) => unreachable!("id column resolved above"),
        };
        let id = u64::try_from(raw_id)
            .map_err(|_| ingest_error(source_name, format!("line {line}: negative row id {raw_id}")))?;
        rows.push(values);
        ids.push(id);
    }
    let columns = loaded.into_iter().map(|(_, c)| c).collect();
    BaseTable::new(name, columns, rows, ids).map_err(|e| match e {
        GusError::Schema(msg) => ingest_error(source_name, msg),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(id: &str, cols: &[(&str, ScalarType)]) -> TableSpec {
        TableSpec {
            path: "t.csv".into(),
            id_column: IdSource::parse(id).unwrap(),
            column_types: cols.iter().map(|(n, t)| (n.to_string(), *t)).collect(),
        }
    }

    #[test]
    fn three_rows() {
        let csv = "k,v\n1,0.5\n2,1.5\n3,2.5\n";
        let t = read_table(
            "t",
            &spec("rowIndex", &[("k", ScalarType::Int), ("v", ScalarType::Float)]),
            csv.as_bytes(),
            "mem",
        )
        .unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.ids(), &[0, 1, 2]);
        assert_eq!(t.rows()[1], vec![Value::Int(2), Value::Float(1.5)]);
    }

    #[test]
    fn id_expression() {
        let csv = "l_orderkey,l_linenumber,x\n42,3,1.0\n42,4,2.0\n";
        let t = read_table(
            "lineitem",
            &spec("l_orderkey*10+l_linenumber", &[("x", ScalarType::Float)]),
            csv.as_bytes(),
            "mem",
        )
        .unwrap();
        assert_eq!(t.ids(), &[423, 424]);
        assert_eq!(t.columns().len(), 1);
    }

    #[test]
    fn id_column_and_duplicates() {
        let csv = "k,v\n7,1\n9,2\n";
        let t = read_table("t", &spec("k", &[("v", ScalarType::Int)]), csv.as_bytes(), "mem").unwrap();
        assert_eq!(t.ids(), &[7, 9]);
        let dup = "k,v\n7,1\n7,2\n";
        let err = read_table("t", &spec("k", &[("v", ScalarType::Int)]), dup.as_bytes(), "mem").unwrap_err();
        assert!(matches!(err, GusError::Ingest { .. }), "{err}");
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn errors() {
        let csv = "k,v\n1,abc\n";
        let bad_type = read_table("t", &spec("rowIndex", &[("v", ScalarType::Float)]), csv.as_bytes(), "mem");
        assert!(bad_type.unwrap_err().to_string().contains("line 2"));
        let missing = read_table("t", &spec("rowIndex", &[("w", ScalarType::Float)]), csv.as_bytes(), "mem");
        assert!(missing.unwrap_err().to_string().contains("missing column `w`"));
        let null = read_table("t", &spec("rowIndex", &[("s", ScalarType::Str)]), "s\n\"\"\n".as_bytes(), "mem");
        assert!(null.is_err());
        let missing_id = read_table("t", &spec("z", &[]), csv.as_bytes(), "mem");
        assert!(missing_id.is_err());
    }

    #[test]
    fn file_ingestion_and_spec_json() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("t.csv"), "k,s\n1,a\n2,b\n").unwrap();
        let spec: TableSpec = serde_json::from_str(
            r#"{"path":"t.csv","idColumn":"k","columnTypes":{"s":"str"}}"#,
        )
        .unwrap();
        let t = ingest_csv("t", &spec, dir.path()).unwrap();
        assert_eq!(t.rows()[1], vec![Value::Str("b".into())]);
        assert!(ingest_csv("t", &TableSpec { path: "nope.csv".into(), ..spec }, dir.path()).is_err());
    }
}
