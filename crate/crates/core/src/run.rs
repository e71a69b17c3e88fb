//! End-to-end runs: bind a plan to data, execute it, normalize its sampling,
//! estimate, and render the result.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::algebra::{normalize_plan, RewriteStep};
use crate::dsl::PlanDocument;
use crate::engine::{execute, Catalog};
use crate::error::{GusError, Result};
use crate::lineage::SubsetMask;
use crate::oracle::{
    enumerate_exact_moments, exact_summary, monte_carlo_moments, ExactMoments, ExactSummary,
    MonteCarloMoments,
};
use crate::params::GusParams;
use crate::plan::PlanNode;
use crate::sampling::{derive_seed, DimSpec};
use crate::sbox::{analyze, subsample_variance, EstimateOptions, EstimateReport};

/// Trials used for the Monte-Carlo fallback when enumeration is infeasible.
pub const ORACLE_MC_TRIALS: usize = 2000;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOptions {
    pub seed: u64,
    pub explain: bool,
    pub oracle: bool,
    pub subsample: Option<BTreeMap<String, DimSpec>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct OracleReport {
    #[serde(flatten)]
    pub exact: ExactSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub enumerated: Option<ExactMoments>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloMoments>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunOutcome {
    #[serde(flatten)]
    pub report: EstimateReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<RewriteStep>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleReport>,
}

impl RunOutcome {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

/// Runs a sum plan on a catalog.
pub fn run_plan(plan: &PlanNode, catalog: &Catalog, estimate: &EstimateOptions, options: &RunOptions) -> Result<RunOutcome> {
    if !matches!(plan, PlanNode::SumAggregate { .. }) {
        return Err(GusError::Unsupported("the plan root must be a sum aggregate".into()));
    }
    plan.validate(catalog)?;
    let bound = plan.bind_populations(catalog)?;
    let normalized = normalize_plan(&bound)?;
    let sample = execute(&bound, catalog, options.seed)?;
    let report = match &options.subsample {
        Some(dims) => subsample_variance(
            &sample,
            &normalized.top,
            dims,
            derive_seed(options.seed, u64::MAX),
            estimate,
        )?,
        None => analyze(&sample, &normalized.top, estimate)?,
    };
    let oracle = if options.oracle {
        Some(attach_oracle(&bound, catalog, options.seed)?)
    } else {
        None
    };
    Ok(RunOutcome {
        report,
        trace: options.explain.then_some(normalized.trace),
        oracle,
    })
}

pub fn run_document(doc: &PlanDocument, catalog: &Catalog, options: &RunOptions) -> Result<RunOutcome> {
    run_plan(&doc.plan, catalog, &doc.options(), options)
}

fn attach_oracle(plan: &PlanNode, catalog: &Catalog, seed: u64) -> Result<OracleReport> {
    let exact = exact_summary(plan, catalog)?;
    match enumerate_exact_moments(plan, catalog) {
        Ok(m) => Ok(OracleReport {
            exact,
            enumerated: Some(m),
            monte_carlo: None,
            note: None,
        }),
        Err(GusError::EnumerationInfeasible { configurations, .. }) => Ok(OracleReport {
            exact,
            enumerated: None,
            monte_carlo: Some(monte_carlo_moments(plan, catalog, ORACLE_MC_TRIALS, seed)?),
            note: Some(format!(
                "exact enumeration skipped ({configurations:.3e} configurations); Monte-Carlo moments shown"
            )),
        }),
        Err(e) => Err(e),
    }
}

/// `x` with four significant digits.
pub fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-3..5).contains(&mag) {
        format!("{x:.*}", (3 - mag).max(0) as usize)
    } else {
        format!("{x:.3e}")
    }
}

fn subset_label(g: &GusParams, s: SubsetMask) -> String {
    let key = g.schema().names_of(s).join(",");
    if key.is_empty() {
        "∅".into()
    } else {
        key
    }
}

fn gus_line(g: &GusParams) -> String {
    let b: Vec<String> = g
        .b_table()
        .iter()
        .map(|(s, b)| format!("b[{}]={}", subset_label(g, s), sig4(b)))
        .collect();
    format!("a={} {}", sig4(g.a()), b.join(" "))
}

/// Human-readable report.
pub fn render_text(outcome: &RunOutcome) -> String {
    let r = &outcome.report;
    let pct = (r.level * 1e4).round() / 1e2;
    let mut out = String::new();
    let _ = writeln!(out, "estimate            {}", sig4(r.estimate));
    let _ = writeln!(out, "std dev             {}", sig4(r.std_dev));
    let _ = writeln!(out, "variance            {}", sig4(r.variance_hat));
    let _ = writeln!(out, "{pct}% normal CI      [{}, {}]", sig4(r.ci_normal.0), sig4(r.ci_normal.1));
    let _ = writeln!(out, "{pct}% Chebyshev CI   [{}, {}]", sig4(r.ci_chebyshev.0), sig4(r.ci_chebyshev.1));
    for q in &r.quantiles {
        let _ = writeln!(out, "quantile {:<10} {}", q.q, sig4(q.value));
    }
    match r.subsample_size {
        Some(k) => {
            let _ = writeln!(out, "sample size         {} (subsample {k})", r.sample_size);
        }
        None => {
            let _ = writeln!(out, "sample size         {}", r.sample_size);
        }
    }
    let _ = writeln!(out, "GUS {}", r.gus.schema());
    let labels: Vec<String> = r.gus.b_table().iter().map(|(s, _)| subset_label(&r.gus, s)).collect();
    let w = labels.iter().map(|l| l.chars().count()).max().unwrap_or(0).max(6);
    let _ = writeln!(out, "  {:<w$} {:>11} {:>11} {:>11} {:>11}", "subset", "b", "c", "Y", "y_hat");
    for ((s, b), label) in r.gus.b_table().iter().zip(&labels) {
        let _ = writeln!(
            out,
            "  {label:<w$} {:>11} {:>11} {:>11} {:>11}",
            sig4(b),
            sig4(r.c_table[s]),
            sig4(r.y_sample[s]),
            sig4(r.y_hat[s]),
        );
    }
    let _ = writeln!(out, "  a = {}", sig4(r.a));
    for d in &r.diagnostics {
        let _ = writeln!(out, "note: {d}");
    }
    if let Some(trace) = &outcome.trace {
        let _ = writeln!(out, "rewrite trace:");
        for (i, step) in trace.iter().enumerate() {
            let _ = writeln!(out, "  {}. {:<10} {}", i + 1, step.rule, step.node);
            let _ = writeln!(out, "     -> {}", gus_line(&step.after));
        }
    }
    if let Some(o) = &outcome.oracle {
        let _ = writeln!(out, "oracle:");
        let _ = writeln!(out, "  true sum          {}", sig4(o.exact.true_sum));
        let _ = writeln!(out, "  exact variance    {}", sig4(o.exact.exact_variance));
        if let Some(m) = &o.enumerated {
            let _ = writeln!(
                out,
                "  enumerated        mean {} variance {} ({} configurations)",
                sig4(m.mean),
                sig4(m.variance),
                m.configurations
            );
        }
        if let Some(m) = &o.monte_carlo {
            let _ = writeln!(
                out,
                "  monte carlo       mean {} variance {} stderr {} ({} trials)",
                sig4(m.mean),
                sig4(m.variance),
                sig4(m.stderr),
                m.trials
            );
        }
        if let Some(n) = &o.note {
            let _ = writeln!(out, "  note: {n}");
        }
    }
    out
}
