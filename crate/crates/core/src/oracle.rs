//! Ground truth for testing the estimator: exact data terms on full data,
//! exact moments by enumerating every sampling outcome, Monte-Carlo moments
//! and empirical inclusion probabilities.
//!
//! Nothing here shares code with the estimator's own group-by or with the
//! rewrite rules beyond plan execution itself.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::normalize_plan;
use crate::engine::{execute, join, select, union_dedup, Catalog, SampleRelation};
use crate::error::{GusError, Result};
use crate::expr::JoinCondition;
use crate::lineage::Lineage;
use crate::params::SubsetTable;
use crate::plan::PlanNode;
use crate::sampling::{derive_seed, SamplerSpec};

/// Largest sample space [`enumerate_exact_moments`] will walk.
pub const ENUMERATION_LIMIT: u64 = 1 << 20;

/// `y_S` by sorting rows on `(π_S lineage, lineage)` and sweeping runs.
pub fn exact_y_terms(full: &SampleRelation) -> SubsetTable {
    let schema = full.schema().clone();
    let rows = full.rows();
    SubsetTable::from_fn(schema, |s| {
        let mut keyed: Vec<(Vec<u64>, &Lineage, f64)> = rows
            .iter()
            .map(|r| (r.lineage.project(s), &r.lineage, r.f))
            .collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        let mut total = 0.0;
        let mut i = 0;
        while i < keyed.len() {
            let mut group = 0.0;
            let mut j = i;
            while j < keyed.len() && keyed[j].0 == keyed[i].0 {
                group += keyed[j].2;
                j += 1;
            }
            total += group * group;
            i = j;
        }
        total
    })
}

/// Sampling-free plan output with `f` bound.
pub fn full_result(plan: &PlanNode, catalog: &Catalog) -> Result<SampleRelation> {
    execute(&plan.strip_sampling(), catalog, 0)
}

pub fn true_sum(plan: &PlanNode, catalog: &Catalog) -> Result<f64> {
    Ok(full_result(plan, catalog)?.total())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExactMoments {
    pub mean: f64,
    pub variance: f64,
    pub configurations: u64,
}

type Dist = Vec<(f64, SampleRelation)>;

fn too_large(configurations: f64) -> GusError {
    GusError::EnumerationInfeasible {
        configurations,
        limit: ENUMERATION_LIMIT,
    }
}

fn check_space(configurations: f64) -> Result<()> {
    if configurations > ENUMERATION_LIMIT as f64 {
        Err(too_large(configurations))
    } else {
        Ok(())
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// All `k`-subsets of `0..n` as keep masks, in lexicographic order.
fn k_subsets(n: usize, k: usize) -> Vec<Vec<bool>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<bool>>) {
        if cur.len() == k {
            let mut keep = vec![false; n];
            for &i in cur.iter() {
                keep[i] = true;
            }
            out.push(keep);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

fn enumerate_node(node: &PlanNode, catalog: &Catalog) -> Result<Dist> {
    match node {
        PlanNode::Scan { .. } => Ok(vec![(1.0, execute(node, catalog, 0)?)]),
        PlanNode::Select { predicate, input } => enumerate_node(input, catalog)?
            .into_iter()
            .map(|(p, r)| Ok((p, select(predicate, r)?)))
            .collect(),
        PlanNode::SumAggregate { input, .. } => enumerate_node(input, catalog),
        PlanNode::Join { condition, left, right } => pairwise(left, right, catalog, |l, r| join(condition, l, r)),
        PlanNode::Cross { left, right } => {
            pairwise(left, right, catalog, |l, r| join(&JoinCondition::default(), l, r))
        }
        PlanNode::UnionDedup { left, right } => {
            pairwise(left, right, catalog, |l, r| union_dedup(l.clone(), r))
        }
        PlanNode::GusQuasi { .. } => Err(GusError::Unsupported(
            "GUS quasi-operators have no sampling distribution to enumerate".into(),
        )),
        PlanNode::Sample { sampler, input } => {
            let inputs = enumerate_node(input, catalog)?;
            match sampler {
                SamplerSpec::Bernoulli { p, .. } => {
                    check_space(inputs.iter().map(|(_, r)| 2f64.powi(r.len() as i32)).sum())?;
                    let mut out = Vec::new();
                    for (q, r) in inputs {
                        let m = r.len();
                        for bits in 0u64..(1u64 << m) {
                            let k = bits.count_ones() as i32;
                            let prob = q * p.powi(k) * (1.0 - p).powi(m as i32 - k);
                            out.push((prob, r.clone().filter_rows(|i, _| bits >> i & 1 == 1)));
                        }
                    }
                    Ok(out)
                }
                SamplerSpec::Wor { n, .. } => {
                    let mut space = 0.0;
                    for (_, r) in &inputs {
                        if *n > r.len() {
                            return Err(GusError::SampleSize { n: *n, population: r.len() });
                        }
                        space += binomial(r.len(), *n);
                    }
                    check_space(space)?;
                    let mut out = Vec::new();
                    for (q, r) in inputs {
                        let subsets = k_subsets(r.len(), *n);
                        let prob = q / subsets.len() as f64;
                        for keep in subsets {
                            out.push((prob, r.clone().filter_rows(|i, _| keep[i])));
                        }
                    }
                    Ok(out)
                }
                SamplerSpec::LineageBernoulli { dims } => {
                    let mut out = Vec::new();
                    let mut space = 0.0;
                    let mut prepared = Vec::new();
                    for (q, r) in inputs {
                        // One keep/drop decision per (dimension, distinct base id).
                        let mut decisions: Vec<(usize, u64, f64)> = Vec::new();
                        for (name, d) in dims {
                            let pos = r.schema().position(name).ok_or_else(|| {
                                GusError::Schema(format!("`{name}` is not in {}", r.schema()))
                            })?;
                            let ids: BTreeSet<u64> = r.lineages().map(|l| l.0[pos]).collect();
                            decisions.extend(ids.into_iter().map(|id| (pos, id, d.p)));
                        }
                        space += 2f64.powi(decisions.len() as i32);
                        check_space(space)?;
                        prepared.push((q, r, decisions));
                    }
                    for (q, r, decisions) in prepared {
                        let index: HashMap<(usize, u64), usize> = decisions
                            .iter()
                            .enumerate()
                            .map(|(i, &(pos, id, _))| ((pos, id), i))
                            .collect();
                        let positions: BTreeSet<usize> = decisions.iter().map(|d| d.0).collect();
                        for bits in 0u64..(1u64 << decisions.len()) {
                            let prob = decisions.iter().enumerate().fold(q, |acc, (i, d)| {
                                acc * if bits >> i & 1 == 1 { d.2 } else { 1.0 - d.2 }
                            });
                            let kept = r.clone().filter_rows(|_, row| {
                                positions.iter().all(|&pos| {
                                    let i = index[&(pos, row.lineage.0[pos])];
                                    bits >> i & 1 == 1
                                })
                            });
                            out.push((prob, kept));
                        }
                    }
                    Ok(out)
                }
            }
        }
    }
}

fn pairwise(
    left: &PlanNode,
    right: &PlanNode,
    catalog: &Catalog,
    combine: impl Fn(&SampleRelation, &SampleRelation) -> Result<SampleRelation>,
) -> Result<Dist> {
    let l = enumerate_node(left, catalog)?;
    let r = enumerate_node(right, catalog)?;
    check_space(l.len() as f64 * r.len() as f64)?;
    let mut out = Vec::with_capacity(l.len() * r.len());
    for (pl, rl) in &l {
        for (pr, rr) in &r {
            out.push((pl * pr, combine(rl, rr)?));
        }
    }
    Ok(out)
}

fn with_populations(plan: &PlanNode, catalog: &Catalog) -> Result<(PlanNode, f64)> {
    let bound = plan.bind_populations(catalog)?;
    let a = normalize_plan(&bound)?.top.a();
    if a <= 0.0 {
        return Err(GusError::Degenerate("a = 0".into()));
    }
    Ok((bound, a))
}

fn f_by_lineage(plan: &PlanNode, catalog: &Catalog) -> Result<HashMap<Lineage, f64>> {
    Ok(full_result(plan, catalog)?
        .rows()
        .iter()
        .map(|r| (r.lineage.clone(), r.f))
        .collect())
}

/// Exact `E[X]` and `Var(X)` of `X = Σ f / a`, with independent sampling
/// operators, by summing over every outcome.
pub fn enumerate_exact_moments(plan: &PlanNode, catalog: &Catalog) -> Result<ExactMoments> {
    let (bound, a) = with_populations(plan, catalog)?;
    let f = f_by_lineage(&bound, catalog)?;
    let dist = enumerate_node(&bound, catalog)?;
    let outcomes: Vec<(f64, f64)> = dist
        .iter()
        .map(|(p, r)| {
            let mut lineages: Vec<&Lineage> = r.lineages().collect();
            lineages.sort();
            (*p, lineages.iter().map(|l| f[*l]).sum::<f64>() / a)
        })
        .collect();
    let mean: f64 = outcomes.iter().map(|(p, x)| p * x).sum();
    let variance: f64 = outcomes.iter().map(|(p, x)| p * (x - mean) * (x - mean)).sum();
    Ok(ExactMoments {
        mean,
        variance,
        configurations: outcomes.len() as u64,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MonteCarloMoments {
    pub mean: f64,
    pub variance: f64,
    pub stderr: f64,
    pub trials: usize,
}

/// Seed of trial `i` of a run seeded with `seed`.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    derive_seed(seed ^ 0x5851_f42d_4c95_7f2d, trial as u64)
}

/// Runs `body` on every trial's seed in parallel; results are in trial order.
pub fn run_trials<T: Send>(
    trials: usize,
    seed: u64,
    body: impl Fn(u64) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    (0..trials)
        .into_par_iter()
        .map(|i| body(trial_seed(seed, i)))
        .collect()
}

/// `X` for each of `trials` seeded executions.
pub fn monte_carlo_estimates(plan: &PlanNode, catalog: &Catalog, trials: usize, seed: u64) -> Result<Vec<f64>> {
    let (bound, a) = with_populations(plan, catalog)?;
    run_trials(trials, seed, |s| {
        let r = execute(&bound, catalog, s)?.sorted();
        Ok(r.total() / a)
    })
}

pub fn moments_of(xs: &[f64]) -> MonteCarloMoments {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let variance = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    MonteCarloMoments {
        mean,
        variance,
        stderr: (variance / n).sqrt(),
        trials: xs.len(),
    }
}

pub fn monte_carlo_moments(plan: &PlanNode, catalog: &Catalog, trials: usize, seed: u64) -> Result<MonteCarloMoments> {
    if trials == 0 {
        return Err(GusError::InvalidArgument("trials must be ≥ 1".into()));
    }
    Ok(moments_of(&monte_carlo_estimates(plan, catalog, trials, seed)?))
}

/// Empirical inclusion frequencies over the tuples of the unsampled result.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InclusionFrequencies {
    pub trials: usize,
    pub universe: Vec<Lineage>,
    /// `first[i]`: fraction of trials containing `universe[i]`.
    pub first: Vec<f64>,
    /// `second[i][j]`: fraction of trials containing both; the diagonal
    /// repeats `first`.
    pub second: Vec<Vec<f64>>,
}

impl InclusionFrequencies {
    fn position(&self, t: &Lineage) -> Option<usize> {
        self.universe.binary_search(t).ok()
    }

    pub fn first_order(&self, t: &Lineage) -> Option<f64> {
        self.position(t).map(|i| self.first[i])
    }

    pub fn second_order(&self, t: &Lineage, u: &Lineage) -> Option<f64> {
        Some(self.second[self.position(t)?][self.position(u)?])
    }

    /// Distinct pairs `(i, j)`, `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.universe.len();
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

pub fn inclusion_probabilities(
    plan: &PlanNode,
    catalog: &Catalog,
    trials: usize,
    seed: u64,
) -> Result<InclusionFrequencies> {
    if trials == 0 {
        return Err(GusError::InvalidArgument("trials must be ≥ 1".into()));
    }
    let bound = plan.bind_populations(catalog)?;
    let mut universe: Vec<Lineage> = full_result(&bound, catalog)?.lineages().cloned().collect();
    universe.sort();
    let n = universe.len();
    let index: HashMap<&Lineage, usize> = universe.iter().enumerate().map(|(i, l)| (l, i)).collect();
    let counts = run_trials(trials, seed, |s| {
        let r = execute(&bound, catalog, s)?;
        Ok(r.lineages().map(|l| index[l]).collect::<Vec<usize>>())
    })?
    .into_iter()
    .fold(vec![0u64; n * n], |mut acc, present| {
        for &i in &present {
            for &j in &present {
                acc[i * n + j] += 1;
            }
        }
        acc
    });
    let t = trials as f64;
    let second: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| counts[i * n + j] as f64 / t).collect())
        .collect();
    Ok(InclusionFrequencies {
        trials,
        first: (0..n).map(|i| second[i][i]).collect(),
        second,
        universe,
    })
}

/// Exact-input comparison record for a plan: true sum, exact `y_S` and the
/// variance they imply under the normalized GUS.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExactSummary {
    pub true_sum: f64,
    pub exact_y: SubsetTable,
    pub exact_variance: f64,
}

pub fn exact_summary(plan: &PlanNode, catalog: &Catalog) -> Result<ExactSummary> {
    let bound = plan.bind_populations(catalog)?;
    let g = normalize_plan(&bound)?.top;
    let full = full_result(&bound, catalog)?;
    let exact_y = exact_y_terms(&full);
    let c = crate::algebra::c_coefficients(&g);
    let exact_variance = crate::sbox::variance_estimate(&exact_y, &c, g.a())?.raw;
    Ok(ExactSummary {
        true_sum: full.total(),
        exact_y,
        exact_variance,
    })
}

/// Named tables for JSON dumps.
pub fn y_terms_json(y: &SubsetTable) -> String {
    serde_json::to_string_pretty(&y.by_key().into_iter().collect::<BTreeMap<_, _>>()).expect("serializable")
}
