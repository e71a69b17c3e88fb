//! GUS parameter tables.

use std::collections::BTreeMap;
use std::ops::Index;

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{GusError, Result};
use crate::lineage::{LineageSchema, MaskEmbedding, SubsetMask};

/// Slack allowed on probabilities produced by floating-point arithmetic
/// before they are clamped into `[0, 1]`.
const PROBABILITY_SLACK: f64 = 1e-12;

/// A real value for every subset of a lineage schema, stored densely by mask.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsetTable {
    schema: LineageSchema,
    values: Vec<f64>,
}

impl SubsetTable {
    pub fn new(schema: LineageSchema, values: Vec<f64>) -> Result<Self> {
        if values.len() != schema.subset_count() {
            return Err(GusError::Schema(format!(
                "subset table over {schema} needs {} entries, got {}",
                schema.subset_count(),
                values.len()
            )));
        }
        Ok(SubsetTable { schema, values })
    }

    pub fn from_fn(schema: LineageSchema, f: impl FnMut(SubsetMask) -> f64) -> Self {
        let values = SubsetMask::all(schema.len()).map(f).collect();
        SubsetTable { schema, values }
    }

    pub fn zeros(schema: LineageSchema) -> Self {
        let values = vec![0.0; schema.subset_count()];
        SubsetTable { schema, values }
    }

    pub fn schema(&self) -> &LineageSchema {
        &self.schema
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, mask: SubsetMask) -> f64 {
        self.values[mask.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (SubsetMask, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &v)| (SubsetMask(i as u32), v))
    }

    pub fn by_key(&self) -> BTreeMap<String, f64> {
        self.iter()
            .map(|(m, v)| (self.schema.subset_key(m), v))
            .collect()
    }

    fn from_keyed(schema: LineageSchema, keyed: &BTreeMap<String, f64>) -> Result<Self> {
        let index = schema.key_index()?;
        let mut values = vec![f64::NAN; schema.subset_count()];
        for (key, &v) in keyed {
            let mask = index.get(key).ok_or_else(|| {
                GusError::Schema(format!("subset key `{key}` is not a subset of {schema}"))
            })?;
            values[mask.index()] = v;
        }
        if let Some(missing) = values.iter().position(|v| v.is_nan()) {
            return Err(GusError::Schema(format!(
                "missing entry for subset `{}`",
                schema.subset_key(SubsetMask(missing as u32))
            )));
        }
        Ok(SubsetTable { schema, values })
    }
}

impl Index<SubsetMask> for SubsetTable {
    type Output = f64;

    fn index(&self, mask: SubsetMask) -> &f64 {
        &self.values[mask.index()]
    }
}

impl Serialize for SubsetTable {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.values.len()))?;
        for (mask, v) in self.iter() {
            map.serialize_entry(&self.schema.subset_key(mask), &v)?;
        }
        map.end()
    }
}

/// Parameters `(a, {b_T})` of a generalized uniform sampling method.
///
/// `a` is the probability that a tuple survives; `b_T` is the probability
/// that two tuples survive together given that they share base tuples
/// exactly on the relations in `T`. Two tuples agreeing on every relation
/// are the same tuple, so `b` at the full mask always equals `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct GusParams {
    a: f64,
    b: SubsetTable,
}

impl GusParams {
    /// Validates ranges and the `b_full = a` identity. Values within
    /// `1e-12` of the unit interval are clamped into it, and `b_full` is set
    /// to exactly `a` after the check.
    pub fn new(schema: LineageSchema, a: f64, b: Vec<f64>) -> Result<Self> {
        let mut b = SubsetTable::new(schema, b)?;
        let a = clamp_probability("a", a)?;
        for (i, v) in b.values.iter_mut().enumerate() {
            *v = clamp_probability(&format!("b[{i:#b}]"), *v)?;
        }
        let full = b.schema.full_mask().index();
        if (b.values[full] - a).abs() > PROBABILITY_SLACK {
            return Err(GusError::Schema(format!(
                "b at the full mask ({}) must equal a ({a})",
                b.values[full]
            )));
        }
        b.values[full] = a;
        Ok(GusParams { a, b })
    }

    pub fn from_fn(schema: LineageSchema, a: f64, f: impl FnMut(SubsetMask) -> f64) -> Result<Self> {
        let table = SubsetTable::from_fn(schema, f);
        Self::new(table.schema, a, table.values)
    }

    /// The method that keeps everything: `(1, 1̄)`.
    pub fn identity(schema: LineageSchema) -> Self {
        let b = SubsetTable::from_fn(schema, |_| 1.0);
        GusParams { a: 1.0, b }
    }

    /// The method that blocks everything: `(0, 0̄)`.
    pub fn null(schema: LineageSchema) -> Self {
        GusParams {
            a: 0.0,
            b: SubsetTable::zeros(schema),
        }
    }

    pub fn schema(&self) -> &LineageSchema {
        &self.b.schema
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self, mask: SubsetMask) -> f64 {
        self.b[mask]
    }

    pub fn b_table(&self) -> &SubsetTable {
        &self.b
    }

    pub fn is_identity(&self) -> bool {
        self.a == 1.0 && self.b.values.iter().all(|&v| v == 1.0)
    }

    /// Re-express over a wider schema. A method that never looks at a
    /// relation treats it as identity, so `b_T = b_{T ∩ old schema}`.
    pub fn extend_schema(&self, wider: &LineageSchema) -> Result<GusParams> {
        if self.schema() == wider {
            return Ok(self.clone());
        }
        if !self.schema().is_subset_of(wider) {
            return Err(GusError::Schema(format!(
                "cannot extend {} to {wider}: not a subset",
                self.schema()
            )));
        }
        let embed = MaskEmbedding::new(self.schema(), wider)?;
        let b = SubsetTable::from_fn(wider.clone(), |m| self.b[embed.restrict(m)]);
        Ok(GusParams { a: self.a, b })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("GusParams serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn clamp_probability(what: &str, v: f64) -> Result<f64> {
    if !v.is_finite() || !(-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(&v) {
        return Err(GusError::InvalidProbability {
            what: what.to_string(),
            value: v,
        });
    }
    Ok(v.clamp(0.0, 1.0))
}

impl Serialize for GusParams {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(3))?;
        map.serialize_entry("schema", self.schema())?;
        map.serialize_entry("a", &self.a)?;
        map.serialize_entry("b", &self.b)?;
        map.end()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGusParams {
    schema: Vec<String>,
    a: f64,
    b: BTreeMap<String, f64>,
}

impl<'de> Deserialize<'de> for GusParams {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = RawGusParams::deserialize(deserializer)?;
        let schema = LineageSchema::new(raw.schema).map_err(D::Error::custom)?;
        let table = SubsetTable::from_keyed(schema, &raw.b).map_err(D::Error::custom)?;
        GusParams::new(table.schema, raw.a, table.values).map_err(D::Error::custom)
    }
}
