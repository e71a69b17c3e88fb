//! The statistical box between plan execution and the aggregate.
//!
//! Given the sampled rows (lineage plus aggregate value) and the GUS
//! parameters of the normalized plan, it produces the unbiased SUM estimate,
//! unbiased estimates `ŷ_S` of the data terms, the variance estimate and
//! confidence intervals.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::algebra::{c_coefficients, c_pair_coefficients, compact, gus_of_sampler};
use crate::engine::SampleRelation;
use crate::error::{GusError, Result};
use crate::lineage::{Lineage, SubsetMask};
use crate::params::{GusParams, SubsetTable};
use crate::sampling::{lineage_bernoulli, DimSpec, SamplerSpec};

use std::collections::BTreeMap;

pub const DEFAULT_LEVEL: f64 = 0.95;

/// `X = Σ f / a`.
pub fn estimate_sum(sample: &SampleRelation, a: f64) -> Result<f64> {
    if a <= 0.0 {
        return Err(GusError::Degenerate(
            "a = 0: the sampling keeps no tuple, so the sum cannot be scaled up".into(),
        ));
    }
    Ok(sorted_rows(sample).iter().fold(0.0, |acc, &(_, f)| acc + f) / a)
}

fn sorted_rows(sample: &SampleRelation) -> Vec<(&Lineage, f64)> {
    let mut rows: Vec<(&Lineage, f64)> = sample.rows().iter().map(|r| (&r.lineage, r.f)).collect();
    rows.sort_by(|a, b| a.0.cmp(b.0));
    rows
}

/// `Y_S`: for every subset `S`, group the sample by the lineage restricted
/// to `S` and sum the squared group totals. Rows are visited in lineage
/// order and groups are combined in key order, so results do not depend on
/// input order or thread scheduling.
pub fn y_sample_terms(sample: &SampleRelation) -> SubsetTable {
    let schema = sample.schema().clone();
    let rows = sorted_rows(sample);
    let values: Vec<f64> = SubsetMask::all(schema.len())
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|s| {
            let mut groups: HashMap<Vec<u64>, f64> = HashMap::new();
            for &(lineage, f) in &rows {
                *groups.entry(lineage.project(s)).or_insert(0.0) += f;
            }
            let mut groups: Vec<(Vec<u64>, f64)> = groups.into_iter().collect();
            groups.sort_by(|a, b| a.0.cmp(&b.0));
            groups.iter().fold(0.0, |acc, (_, total)| acc + total * total)
        })
        .collect();
    SubsetTable::new(schema, values).expect("one value per subset")
}

/// Unbiased `ŷ_S` from sample terms `Y_S`, solving
/// `E[Y_S] = Σ_{T⊆S^C} c_{S,T} y_{S∪T}` from the full mask downwards.
pub fn y_unbiased(y_sample: &SubsetTable, g: &GusParams) -> Result<SubsetTable> {
    let schema = g.schema();
    if y_sample.schema() != schema {
        return Err(GusError::Schema(format!(
            "y-terms over {} but GUS over {schema}",
            y_sample.schema()
        )));
    }
    let n = schema.len();
    if let Some((s, _)) = g.b_table().iter().find(|&(_, b)| b <= 0.0) {
        return Err(GusError::NotIdentifiable {
            subset: schema.subset_key(s),
        });
    }
    let mut order: Vec<SubsetMask> = SubsetMask::all(n).collect();
    order.sort_by_key(|m| (std::cmp::Reverse(m.len()), m.0));

    let mut y_hat = vec![0.0; 1 << n];
    for s in order {
        let c = c_pair_coefficients(g, s);
        let mut acc = y_sample[s];
        for t in s.complement(n).subsets().filter(|t| !t.is_empty()) {
            acc -= c[t.index()] * y_hat[s.union(t).index()];
        }
        y_hat[s.index()] = acc / c[0];
    }
    SubsetTable::new(schema.clone(), y_hat)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VarianceEstimate {
    /// Clamped at zero.
    pub value: f64,
    pub raw: f64,
}

impl VarianceEstimate {
    pub fn was_clamped(&self) -> bool {
        self.raw < 0.0
    }
}

/// `σ̂² = Σ_S (c_S / a²) ŷ_S − ŷ_∅`, clamped at zero.
pub fn variance_estimate(y_hat: &SubsetTable, c: &SubsetTable, a: f64) -> Result<VarianceEstimate> {
    if a <= 0.0 {
        return Err(GusError::Degenerate("a = 0".into()));
    }
    if y_hat.schema() != c.schema() {
        return Err(GusError::Schema("y-term and coefficient tables differ in schema".into()));
    }
    let a2 = a * a;
    let raw = y_hat
        .iter()
        .map(|(s, y)| c[s] / a2 * y)
        .sum::<f64>()
        - y_hat[SubsetMask::EMPTY];
    Ok(VarianceEstimate {
        value: if raw > 0.0 { raw } else { 0.0 },
        raw,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CiMethod {
    Normal,
    Chebyshev,
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(GusError::InvalidArgument(format!(
            "confidence level must be in (0, 1), got {level}"
        )));
    }
    Ok(())
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Half-width multiplier: `Φ⁻¹((1+level)/2)` for the normal interval,
/// `1/√(1−level)` for Chebyshev.
pub fn ci_multiplier(method: CiMethod, level: f64) -> Result<f64> {
    check_level(level)?;
    Ok(match method {
        CiMethod::Normal => standard_normal().inverse_cdf((1.0 + level) / 2.0),
        CiMethod::Chebyshev => 1.0 / (1.0 - level).sqrt(),
    })
}

pub fn confidence_interval(mu: f64, sigma: f64, method: CiMethod, level: f64) -> Result<(f64, f64)> {
    if sigma.is_nan() || sigma < 0.0 {
        return Err(GusError::InvalidArgument(format!("sigma must be ≥ 0, got {sigma}")));
    }
    let k = ci_multiplier(method, level)?;
    Ok((mu - k * sigma, mu + k * sigma))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuantileValue {
    pub q: f64,
    pub value: f64,
}

/// Normal-approximation quantiles `μ + Φ⁻¹(q)·σ` of the estimate.
pub fn quantile_bounds(mu: f64, sigma: f64, quantiles: &[f64]) -> Result<Vec<QuantileValue>> {
    let normal = standard_normal();
    quantiles
        .iter()
        .map(|&q| {
            if !(q > 0.0 && q < 1.0) {
                return Err(GusError::InvalidArgument(format!("quantile must be in (0, 1), got {q}")));
            }
            Ok(QuantileValue {
                q,
                value: mu + normal.inverse_cdf(q) * sigma,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateOptions {
    pub level: f64,
    pub quantiles: Vec<f64>,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            level: DEFAULT_LEVEL,
            quantiles: vec![0.05, 0.95],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EstimateReport {
    pub estimate: f64,
    pub a: f64,
    /// The GUS method the estimate and variance are computed for.
    pub gus: GusParams,
    /// GUS method the `y` terms were estimated under (differs from `gus`
    /// only on the subsampling path).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_gus: Option<GusParams>,
    pub y_sample: SubsetTable,
    pub y_hat: SubsetTable,
    pub c_table: SubsetTable,
    pub variance_hat: f64,
    pub std_dev: f64,
    pub level: f64,
    pub ci_normal: (f64, f64),
    pub ci_chebyshev: (f64, f64),
    pub quantiles: Vec<QuantileValue>,
    pub sample_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subsample_size: Option<usize>,
    pub diagnostics: Vec<String>,
}

impl EstimateReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }
}

fn assemble(
    sample: &SampleRelation,
    g: &GusParams,
    y_rows: &SampleRelation,
    y_gus: &GusParams,
    options: &EstimateOptions,
    subsample_size: Option<usize>,
) -> Result<EstimateReport> {
    if sample.schema() != g.schema() {
        return Err(GusError::Schema(format!(
            "sample over {} but GUS over {}",
            sample.schema(),
            g.schema()
        )));
    }
    check_level(options.level)?;
    let mut diagnostics = Vec::new();
    let estimate = estimate_sum(sample, g.a())?;
    let y_sample = y_sample_terms(y_rows);
    let y_hat = y_unbiased(&y_sample, y_gus)?;
    let c_table = c_coefficients(g);
    let variance = variance_estimate(&y_hat, &c_table, g.a())?;
    if sample.is_empty() {
        diagnostics.push("empty sample: estimate and variance are 0".to_string());
    }
    if let Some(k) = subsample_size {
        diagnostics.push(format!(
            "y-terms estimated from a lineage-keyed subsample of {k} of {} rows",
            sample.len()
        ));
    }
    if variance.was_clamped() {
        diagnostics.push(format!(
            "negative variance estimate {:.4e} clamped to 0; the sample is too small for \
             reliable y-term estimates",
            variance.raw
        ));
    }
    let sigma = variance.value.sqrt();
    let ci_normal = confidence_interval(estimate, sigma, CiMethod::Normal, options.level)?;
    let ci_chebyshev = confidence_interval(estimate, sigma, CiMethod::Chebyshev, options.level)?;
    let quantiles = quantile_bounds(estimate, sigma, &options.quantiles)?;
    Ok(EstimateReport {
        estimate,
        a: g.a(),
        gus: g.clone(),
        y_gus: subsample_size.map(|_| y_gus.clone()),
        y_sample,
        y_hat,
        c_table,
        variance_hat: variance.value,
        std_dev: sigma,
        level: options.level,
        ci_normal,
        ci_chebyshev,
        quantiles,
        sample_size: sample.len(),
        subsample_size,
        diagnostics,
    })
}

/// Estimate, `y` terms and variance all from the full sample.
pub fn analyze(sample: &SampleRelation, g: &GusParams, options: &EstimateOptions) -> Result<EstimateReport> {
    assemble(sample, g, sample, g, options, None)
}

/// Estimate from the full sample; `y` terms from a lineage-keyed Bernoulli
/// subsample of it, analysed under the compaction of the subsampler with
/// `g`.
pub fn subsample_variance(
    sample: &SampleRelation,
    g: &GusParams,
    dims: &BTreeMap<String, DimSpec>,
    seed: u64,
    options: &EstimateOptions,
) -> Result<EstimateReport> {
    let spec = SamplerSpec::LineageBernoulli { dims: dims.clone() };
    let sub_gus = gus_of_sampler(&spec, sample.schema())?;
    let y_gus = compact(&sub_gus, g)?;
    let sub = lineage_bernoulli(sample.clone(), dims, seed)?;
    assemble(sample, g, &sub, &y_gus, options, Some(sub.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{gus_of_bernoulli, identity_gus};
    use crate::lineage::LineageSchema;

    fn lo() -> LineageSchema {
        LineageSchema::new(["l", "o"]).unwrap()
    }

    #[test]
    fn estimate_scales_by_a() {
        let s = SampleRelation::from_lineage(
            LineageSchema::single("r").unwrap(),
            vec![(Lineage(vec![1]), 2.0), (Lineage(vec![2]), 3.0)],
        )
        .unwrap();
        assert_eq!(estimate_sum(&s, 1.0).unwrap(), 5.0);
        assert!((estimate_sum(&s, 0.1).unwrap() - 50.0).abs() < 1e-12);
        assert!(matches!(estimate_sum(&s, 0.0), Err(GusError::Degenerate(_))));
    }

    #[test]
    fn y_terms_hand_examples() {
        let one = SampleRelation::from_lineage(lo(), vec![(Lineage(vec![1, 1]), 3.0)]).unwrap();
        assert!(y_sample_terms(&one).values().iter().all(|&v| v == 9.0));

        let shared_l = SampleRelation::from_lineage(
            lo(),
            vec![(Lineage(vec![1, 1]), 1.0), (Lineage(vec![1, 2]), 1.0)],
        )
        .unwrap();
        let y = y_sample_terms(&shared_l);
        let m = |names: &[&str]| lo().mask_of(names).unwrap();
        assert_eq!(y[m(&["l"])], 4.0);
        assert_eq!(y[m(&["o"])], 2.0);
        assert_eq!(y[m(&["l", "o"])], 2.0);
        assert_eq!(y[m(&[])], 4.0);
    }

    #[test]
    fn identity_gus_gives_y_hat_equal_to_y_and_zero_variance() {
        let s = SampleRelation::from_lineage(
            lo(),
            vec![(Lineage(vec![1, 1]), 1.5), (Lineage(vec![1, 2]), -0.5), (Lineage(vec![2, 2]), 2.0)],
        )
        .unwrap();
        let g = identity_gus(&lo());
        let y = y_sample_terms(&s);
        assert_eq!(y_unbiased(&y, &g).unwrap(), y);
        let v = variance_estimate(&y, &c_coefficients(&g), 1.0).unwrap();
        assert_eq!(v.value, 0.0);
    }

    #[test]
    fn bernoulli_closed_form_recursion() {
        let p = 0.3;
        let g = gus_of_bernoulli(p, "r").unwrap();
        let y = SubsetTable::new(g.schema().clone(), vec![10.0, 4.0]).unwrap();
        let yh = y_unbiased(&y, &g).unwrap();
        assert!((yh[SubsetMask(1)] - 4.0 / p).abs() < 1e-12);
        let expect_empty = (10.0 - (p - p * p) * (4.0 / p)) / (p * p);
        assert!((yh[SubsetMask(0)] - expect_empty).abs() < 1e-9);

        // Exact y gives (1/p − 1)·Σf².
        let exact = SubsetTable::new(g.schema().clone(), vec![25.0, 7.0]).unwrap();
        let v = variance_estimate(&exact, &c_coefficients(&g), p).unwrap();
        assert!((v.value - (1.0 / p - 1.0) * 7.0).abs() < 1e-12);
    }

    #[test]
    fn not_identifiable_names_subset() {
        let g = crate::algebra::gus_of_wor(1, 10, "o").unwrap();
        let y = SubsetTable::zeros(g.schema().clone());
        match y_unbiased(&y, &g) {
            Err(GusError::NotIdentifiable { subset }) => assert_eq!(subset, ""),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn interval_multipliers() {
        let (lo, hi) = confidence_interval(0.0, 1.0, CiMethod::Normal, 0.95).unwrap();
        assert_eq!(((hi * 100.0).round(), (lo * 100.0).round()), (196.0, -196.0));
        let (lo, hi) = confidence_interval(0.0, 1.0, CiMethod::Chebyshev, 0.95).unwrap();
        assert_eq!(((hi * 100.0).round(), (lo * 100.0).round()), (447.0, -447.0));
        assert_eq!(confidence_interval(3.0, 0.0, CiMethod::Normal, 0.95).unwrap(), (3.0, 3.0));
        assert!(confidence_interval(0.0, 1.0, CiMethod::Normal, 1.0).is_err());
        assert!(confidence_interval(0.0, -1.0, CiMethod::Normal, 0.9).is_err());
    }

    #[test]
    fn quantiles() {
        let q = quantile_bounds(100.0, 10.0, &[0.05, 0.5, 0.95]).unwrap();
        assert!((q[0].value - 83.55).abs() < 5e-3);
        assert_eq!(q[1].value, 100.0);
        assert!((q[2].value - 116.45).abs() < 5e-3);
        assert!(quantile_bounds(0.0, 1.0, &[0.0]).is_err());
    }

    #[test]
    fn empty_sample_report() {
        let s = SampleRelation::from_lineage(lo(), vec![]).unwrap();
        let g = crate::algebra::join_merge(
            &gus_of_bernoulli(0.5, "l").unwrap(),
            &gus_of_bernoulli(0.5, "o").unwrap(),
        )
        .unwrap();
        let r = analyze(&s, &g, &EstimateOptions::default()).unwrap();
        assert_eq!(r.estimate, 0.0);
        assert_eq!(r.variance_hat, 0.0);
        assert!(r.diagnostics.iter().any(|d| d.contains("empty sample")));
    }

    #[test]
    fn subsample_with_all_ones_matches_direct_path() {
        let s = SampleRelation::from_lineage(
            lo(),
            vec![(Lineage(vec![1, 1]), 1.5), (Lineage(vec![1, 2]), -0.5), (Lineage(vec![2, 2]), 2.0)],
        )
        .unwrap();
        let g = crate::algebra::join_merge(
            &gus_of_bernoulli(0.5, "l").unwrap(),
            &gus_of_bernoulli(0.25, "o").unwrap(),
        )
        .unwrap();
        let opts = EstimateOptions::default();
        let direct = analyze(&s, &g, &opts).unwrap();
        let SamplerSpec::LineageBernoulli { dims } = SamplerSpec::parse_dims("l=1,o=1").unwrap() else {
            unreachable!()
        };
        let sub = subsample_variance(&s, &g, &dims, 3, &opts).unwrap();
        assert_eq!(sub.y_hat, direct.y_hat);
        assert_eq!(sub.variance_hat, direct.variance_hat);
        assert_eq!(sub.ci_chebyshev, direct.ci_chebyshev);
    }
}
