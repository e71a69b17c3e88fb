//! Lineage schemas, subset masks and per-tuple lineage vectors.
//!
//! A derived tuple is identified by the ids of the base tuples it was built
//! from, one id per base relation. The set of base relations is a
//! [`LineageSchema`]; its names are kept sorted so that a subset of relations
//! can be written as a bitmask ([`SubsetMask`]) that means the same thing for
//! every value over the same schema.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{GusError, Result};

/// Upper bound on relations per schema. Subset tables are dense arrays of
/// length `2^n`, so this also bounds their memory.
pub const MAX_RELATIONS: usize = 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubsetMask(pub u32);

impl SubsetMask {
    pub const EMPTY: SubsetMask = SubsetMask(0);

    pub fn full(n: usize) -> Self {
        SubsetMask(((1u64 << n) - 1) as u32)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, position: usize) -> bool {
        self.0 & (1 << position) != 0
    }

    pub fn with(self, position: usize) -> Self {
        SubsetMask(self.0 | (1 << position))
    }

    pub fn union(self, other: SubsetMask) -> Self {
        SubsetMask(self.0 | other.0)
    }

    pub fn intersect(self, other: SubsetMask) -> Self {
        SubsetMask(self.0 & other.0)
    }

    pub fn is_subset_of(self, other: SubsetMask) -> bool {
        self.0 & !other.0 == 0
    }

    /// Complement within a schema of `n` relations.
    pub fn complement(self, n: usize) -> Self {
        SubsetMask(!self.0 & Self::full(n).0)
    }

    /// All subsets of `self`, including the empty set and `self`, in
    /// decreasing numeric order.
    pub fn subsets(self) -> Subsets {
        Subsets {
            mask: self.0,
            next: Some(self.0),
        }
    }

    /// Every mask of a schema with `n` relations, in increasing numeric order.
    pub fn all(n: usize) -> impl Iterator<Item = SubsetMask> {
        (0..(1u32 << n)).map(SubsetMask)
    }
}

pub struct Subsets {
    mask: u32,
    next: Option<u32>,
}

impl Iterator for Subsets {
    type Item = SubsetMask;

    fn next(&mut self) -> Option<SubsetMask> {
        let current = self.next?;
        self.next = if current == 0 {
            None
        } else {
            Some((current - 1) & self.mask)
        };
        Some(SubsetMask(current))
    }
}

/// Ordered set of base-relation names, kept in lexicographic order.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct LineageSchema {
    relations: Arc<[String]>,
}

impl LineageSchema {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut relations: Vec<String> = names.into_iter().map(Into::into).collect();
        if relations.iter().any(|r| r.is_empty()) {
            return Err(GusError::Schema("relation names must be non-empty".into()));
        }
        relations.sort();
        if let Some(w) = relations.windows(2).find(|w| w[0] == w[1]) {
            return Err(GusError::Schema(format!(
                "relation `{}` listed twice",
                w[0]
            )));
        }
        if relations.len() > MAX_RELATIONS {
            return Err(GusError::Schema(format!(
                "{} relations exceed the supported maximum of {MAX_RELATIONS}",
                relations.len()
            )));
        }
        Ok(LineageSchema {
            relations: relations.into(),
        })
    }

    pub fn single(name: impl Into<String>) -> Result<Self> {
        Self::new([name.into()])
    }

    pub fn empty() -> Self {
        LineageSchema {
            relations: Arc::from(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.relations.binary_search_by(|r| r.as_str().cmp(name)).ok()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.position(name).is_some()
    }

    pub fn full_mask(&self) -> SubsetMask {
        SubsetMask::full(self.len())
    }

    /// Number of subsets, `2^n`.
    pub fn subset_count(&self) -> usize {
        1 << self.len()
    }

    pub fn mask_of<S: AsRef<str>>(&self, names: &[S]) -> Result<SubsetMask> {
        names.iter().try_fold(SubsetMask::EMPTY, |mask, name| {
            let name = name.as_ref();
            self.position(name)
                .map(|p| mask.with(p))
                .ok_or_else(|| GusError::Schema(format!("relation `{name}` not in schema {self}")))
        })
    }

    pub fn names_of(&self, mask: SubsetMask) -> Vec<&str> {
        (0..self.len())
            .filter(|&i| mask.contains(i))
            .map(|i| self.relations[i].as_str())
            .collect()
    }

    /// Text key of a subset: the sorted member names concatenated, `""` for
    /// the empty set.
    pub fn subset_key(&self, mask: SubsetMask) -> String {
        self.names_of(mask).concat()
    }

    /// Inverse of [`subset_key`](Self::subset_key) over all `2^n` subsets.
    /// Fails when two subsets share a key, which can happen when one
    /// relation name is the concatenation of others.
    pub fn key_index(&self) -> Result<HashMap<String, SubsetMask>> {
        let mut index = HashMap::with_capacity(self.subset_count());
        for mask in SubsetMask::all(self.len()) {
            if let Some(prev) = index.insert(self.subset_key(mask), mask) {
                return Err(GusError::Schema(format!(
                    "subset key `{}` is ambiguous in schema {self} (masks {:#b} and {:#b})",
                    self.subset_key(mask),
                    prev.0,
                    mask.0
                )));
            }
        }
        Ok(index)
    }

    pub fn is_subset_of(&self, wider: &LineageSchema) -> bool {
        self.relations.iter().all(|r| wider.contains(r))
    }

    pub fn is_disjoint(&self, other: &LineageSchema) -> bool {
        self.relations.iter().all(|r| !other.contains(r))
    }

    pub fn overlap(&self, other: &LineageSchema) -> Vec<String> {
        self.relations
            .iter()
            .filter(|r| other.contains(r))
            .cloned()
            .collect()
    }

    /// Canonical merge of two disjoint schemas.
    pub fn merge_disjoint(&self, other: &LineageSchema) -> Result<Self> {
        let overlap = self.overlap(other);
        if !overlap.is_empty() {
            return Err(GusError::SelfJoin(overlap.join(", ")));
        }
        Self::new(self.relations.iter().chain(other.relations.iter()).cloned())
    }

    /// For each position of `self`, its position in `wider`.
    pub fn embedding(&self, wider: &LineageSchema) -> Result<Vec<usize>> {
        self.relations
            .iter()
            .map(|r| {
                wider.position(r).ok_or_else(|| {
                    GusError::Schema(format!("schema {self} is not contained in {wider}"))
                })
            })
            .collect()
    }
}

/// Maps masks of a narrow schema to masks of a wider one and back.
#[derive(Clone, Debug)]
pub struct MaskEmbedding {
    positions: Vec<usize>,
}

impl MaskEmbedding {
    pub fn new(narrow: &LineageSchema, wider: &LineageSchema) -> Result<Self> {
        Ok(MaskEmbedding {
            positions: narrow.embedding(wider)?,
        })
    }

    pub fn widen(&self, mask: SubsetMask) -> SubsetMask {
        self.positions
            .iter()
            .enumerate()
            .filter(|(i, _)| mask.contains(*i))
            .fold(SubsetMask::EMPTY, |acc, (_, &p)| acc.with(p))
    }

    /// `wide ∩ narrow`, expressed in the narrow schema.
    pub fn restrict(&self, wide: SubsetMask) -> SubsetMask {
        self.positions
            .iter()
            .enumerate()
            .filter(|(_, &p)| wide.contains(p))
            .fold(SubsetMask::EMPTY, |acc, (i, _)| acc.with(i))
    }
}

impl fmt::Display for LineageSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.relations.join(","))
    }
}

impl fmt::Debug for LineageSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LineageSchema{self}")
    }
}

impl Serialize for LineageSchema {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.relations.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LineageSchema {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let names = Vec::<String>::deserialize(deserializer)?;
        LineageSchema::new(names).map_err(serde::de::Error::custom)
    }
}

/// Base-tuple ids of a derived tuple, aligned with its schema's order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Lineage(pub Vec<u64>);

impl Lineage {
    pub fn new(ids: Vec<u64>) -> Self {
        Lineage(ids)
    }

    pub fn ids(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Ids at the positions in `mask`, in schema order.
    pub fn project(&self, mask: SubsetMask) -> Vec<u64> {
        self.0
            .iter()
            .enumerate()
            .filter(|(i, _)| mask.contains(*i))
            .map(|(_, &id)| id)
            .collect()
    }
}

/// Relations on which two tuples of the same schema share a base tuple.
pub fn common_lineage(t: &Lineage, u: &Lineage) -> Result<SubsetMask> {
    if t.len() != u.len() {
        return Err(GusError::Schema(format!(
            "lineage length mismatch: {} vs {}",
            t.len(),
            u.len()
        )));
    }
    Ok(t.0
        .iter()
        .zip(&u.0)
        .enumerate()
        .filter(|(_, (a, b))| a == b)
        .fold(SubsetMask::EMPTY, |m, (i, _)| m.with(i)))
}
