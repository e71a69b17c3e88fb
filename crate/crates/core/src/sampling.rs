//! Executable randomized filters: Bernoulli, fixed-size sampling without
//! replacement, and the lineage-keyed multi-dimensional Bernoulli.
//!
//! Row-level draws use ChaCha8, which produces the same stream on every
//! platform for a given seed. Lineage-keyed decisions use a SplitMix64-style
//! keyed hash so that a base tuple gets the same decision in every derived
//! row it appears in.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::SampleRelation;
use crate::error::{GusError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimSpec {
    pub p: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplerSpec {
    Bernoulli {
        p: f64,
        #[serde(default)]
        seed: u64,
    },
    Wor {
        n: usize,
        #[serde(default)]
        seed: u64,
        /// Size of the sampled input; filled in when the plan is bound to data.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        population: Option<usize>,
    },
    LineageBernoulli {
        dims: BTreeMap<String, DimSpec>,
    },
}

impl SamplerSpec {
    pub fn bernoulli(p: f64, seed: u64) -> Self {
        SamplerSpec::Bernoulli { p, seed }
    }

    pub fn wor(n: usize, seed: u64) -> Self {
        SamplerSpec::Wor {
            n,
            seed,
            population: None,
        }
    }

    pub fn wor_of(n: usize, population: usize, seed: u64) -> Self {
        SamplerSpec::Wor {
            n,
            seed,
            population: Some(population),
        }
    }

    pub fn lineage_bernoulli<I, S>(dims: I) -> Self
    where
        I: IntoIterator<Item = (S, f64, u64)>,
        S: Into<String>,
    {
        SamplerSpec::LineageBernoulli {
            dims: dims
                .into_iter()
                .map(|(name, p, seed)| (name.into(), DimSpec { p, seed }))
                .collect(),
        }
    }

    /// Parses `"l=0.2,o=0.3"` (optionally `l=0.2:5` to give a seed).
    pub fn parse_dims(text: &str) -> Result<Self> {
        let mut dims = BTreeMap::new();
        for (i, part) in text.split(',').map(str::trim).filter(|s| !s.is_empty()).enumerate() {
            let (name, rest) = part.split_once('=').ok_or_else(|| {
                GusError::InvalidArgument(format!("expected `relation=p` in `{part}`"))
            })?;
            let (p, seed) = match rest.split_once(':') {
                Some((p, seed)) => (p, seed.parse().map_err(|_| {
                    GusError::InvalidArgument(format!("bad seed in `{part}`"))
                })?),
                None => (rest, i as u64 + 1),
            };
            let p: f64 = p
                .trim()
                .parse()
                .map_err(|_| GusError::InvalidArgument(format!("bad probability in `{part}`")))?;
            check_probability(&format!("subsample {name}"), p)?;
            if dims.insert(name.trim().to_string(), DimSpec { p, seed }).is_some() {
                return Err(GusError::InvalidArgument(format!("relation `{name}` repeated")));
            }
        }
        if dims.is_empty() {
            return Err(GusError::InvalidArgument("empty subsample spec".into()));
        }
        Ok(SamplerSpec::LineageBernoulli { dims })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SamplerSpec::Bernoulli { p, .. } => check_probability("bernoulli p", *p),
            SamplerSpec::Wor { n, population, .. } => match population {
                Some(pop) if n > pop => Err(GusError::SampleSize {
                    n: *n,
                    population: *pop,
                }),
                _ => Ok(()),
            },
            SamplerSpec::LineageBernoulli { dims } => dims
                .iter()
                .try_for_each(|(name, d)| check_probability(&format!("p for {name}"), d.p)),
        }
    }
}

pub(crate) fn check_probability(what: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(GusError::InvalidProbability {
            what: what.to_string(),
            value: p,
        });
    }
    Ok(())
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one sampling operator of one execution.
pub fn derive_seed(run_seed: u64, node: u64) -> u64 {
    mix64(run_seed ^ mix64(node.wrapping_mul(0xd6e8_feb8_6659_fd93)))
}

/// Keyed hash of a base-tuple id mapped to `[0, 1)`.
pub fn keyed_unit(seed: u64, id: u64) -> f64 {
    let h = mix64(seed ^ mix64(id));
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn bernoulli_sample(r: SampleRelation, p: f64, seed: u64) -> Result<SampleRelation> {
    check_probability("bernoulli p", p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(r.filter_rows(|_, _| rng.gen::<f64>() < p))
}

/// Uniform `n`-subset; rows keep their input order.
pub fn wor_sample(r: SampleRelation, n: usize, seed: u64) -> Result<SampleRelation> {
    if n > r.len() {
        return Err(GusError::SampleSize {
            n,
            population: r.len(),
        });
    }
    // Partial Fisher-Yates: the first n slots end up a uniform n-subset.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..r.len()).collect();
    for i in 0..n {
        let j = rng.gen_range(i..order.len());
        order.swap(i, j);
    }
    let mut keep = vec![false; r.len()];
    for &i in &order[..n] {
        keep[i] = true;
    }
    Ok(r.filter_rows(|i, _| keep[i]))
}

/// Keeps a row iff, for every covered relation `k`,
/// `keyed_unit(seed_k, id_k) < p_k`.
pub fn lineage_bernoulli(
    r: SampleRelation,
    dims: &BTreeMap<String, DimSpec>,
    run_seed: u64,
) -> Result<SampleRelation> {
    let tests = dims
        .iter()
        .map(|(name, d)| {
            check_probability(&format!("p for {name}"), d.p)?;
            let pos = r.schema().position(name).ok_or_else(|| {
                GusError::Schema(format!(
                    "subsample relation `{name}` is not in {}",
                    r.schema()
                ))
            })?;
            Ok((pos, d.p, mix64(run_seed ^ mix64(d.seed))))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(r.filter_rows(|_, row| {
        tests
            .iter()
            .all(|&(pos, p, seed)| keyed_unit(seed, row.lineage.0[pos]) < p)
    }))
}

/// Runs a sampler with an already-derived seed.
pub fn apply(spec: &SamplerSpec, r: SampleRelation, seed: u64) -> Result<SampleRelation> {
    match spec {
        SamplerSpec::Bernoulli { p, seed: own } => bernoulli_sample(r, *p, mix64(seed ^ *own)),
        SamplerSpec::Wor {
            n,
            seed: own,
            population,
        } => {
            if let Some(pop) = population {
                if *pop != r.len() {
                    return Err(GusError::Unsupported(format!(
                        "WOR population changed between binding ({pop}) and execution ({})",
                        r.len()
                    )));
                }
            }
            wor_sample(r, *n, mix64(seed ^ *own))
        }
        SamplerSpec::LineageBernoulli { dims } => lineage_bernoulli(r, dims, seed),
    }
}
