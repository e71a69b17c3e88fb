//! The GUS algebra: translating samplers into GUS parameters, combining
//! parameters across joins, unions and stacked filters, and rewriting a plan
//! so that a single GUS quasi-operator sits directly beneath the aggregate.

use serde::Serialize;

use crate::error::{GusError, Result};
use crate::lineage::{LineageSchema, MaskEmbedding, SubsetMask};
use crate::params::{GusParams, SubsetTable};
use crate::plan::PlanNode;
use crate::sampling::{check_probability, SamplerSpec};

/// Bernoulli(p) on a single relation: `a = p`, `b_∅ = p²`, `b_R = p`.
pub fn gus_of_bernoulli(p: f64, relation: &str) -> Result<GusParams> {
    gus_of_bernoulli_over(p, &LineageSchema::single(relation)?)
}

/// Independent per-row Bernoulli(p) over a relation with any lineage
/// schema: distinct rows survive together with probability `p²`.
pub fn gus_of_bernoulli_over(p: f64, schema: &LineageSchema) -> Result<GusParams> {
    check_probability("bernoulli p", p)?;
    let full = schema.full_mask();
    GusParams::from_fn(schema.clone(), p, |m| if m == full { p } else { p * p })
}

/// WOR(n, N) on a single relation: `a = n/N`, `b_∅ = n(n−1)/(N(N−1))`.
pub fn gus_of_wor(n: usize, population: usize, relation: &str) -> Result<GusParams> {
    gus_of_wor_over(n, population, &LineageSchema::single(relation)?)
}

pub fn gus_of_wor_over(n: usize, population: usize, schema: &LineageSchema) -> Result<GusParams> {
    if population == 0 {
        return Err(GusError::SampleSize { n, population });
    }
    if n > population {
        return Err(GusError::SampleSize { n, population });
    }
    let (n, big_n) = (n as f64, population as f64);
    let a = n / big_n;
    let pair = if population < 2 {
        0.0
    } else {
        (n * (n - 1.0)) / (big_n * (big_n - 1.0))
    };
    let full = schema.full_mask();
    GusParams::from_fn(schema.clone(), a, |m| if m == full { a } else { pair })
}

pub fn identity_gus(schema: &LineageSchema) -> GusParams {
    GusParams::identity(schema.clone())
}

pub fn null_gus(schema: &LineageSchema) -> GusParams {
    GusParams::null(schema.clone())
}

/// GUS of a join whose inputs were sampled by independent GUS methods over
/// disjoint lineage: `a = a₁a₂`, `b_T = b₁[T∩L₁]·b₂[T∩L₂]`.
pub fn join_merge(g1: &GusParams, g2: &GusParams) -> Result<GusParams> {
    let schema = g1.schema().merge_disjoint(g2.schema())?;
    let e1 = MaskEmbedding::new(g1.schema(), &schema)?;
    let e2 = MaskEmbedding::new(g2.schema(), &schema)?;
    GusParams::from_fn(schema, g1.a() * g2.a(), |t| {
        g1.b(e1.restrict(t)) * g2.b(e2.restrict(t))
    })
}

/// Builds a multi-dimensional sampler from samplers over disjoint
/// relations; same parameters as [`join_merge`].
pub fn compose(g1: &GusParams, g2: &GusParams) -> Result<GusParams> {
    join_merge(g1, g2)
}

fn require_same_schema(g1: &GusParams, g2: &GusParams, op: &str) -> Result<()> {
    if g1.schema() != g2.schema() {
        return Err(GusError::Schema(format!(
            "{op} needs identical schemas, got {} and {}",
            g1.schema(),
            g2.schema()
        )));
    }
    Ok(())
}

/// Union of two independent samples of the same relation:
/// `a = a₁ + a₂ − a₁a₂`, `b_T = 2a − 1 + (1 − 2a₁ + b₁T)(1 − 2a₂ + b₂T)`.
pub fn union_merge(g1: &GusParams, g2: &GusParams) -> Result<GusParams> {
    require_same_schema(g1, g2, "union")?;
    let (a1, a2) = (g1.a(), g2.a());
    let a = a1 + a2 - a1 * a2;
    GusParams::from_fn(g1.schema().clone(), a, |t| {
        2.0 * a - 1.0 + (1.0 - 2.0 * a1 + g1.b(t)) * (1.0 - 2.0 * a2 + g2.b(t))
    })
}

/// Two independent filters stacked on the same relation:
/// `a = a₁a₂`, `b_T = b₁T·b₂T`.
pub fn compact(g1: &GusParams, g2: &GusParams) -> Result<GusParams> {
    require_same_schema(g1, g2, "compaction")?;
    GusParams::from_fn(g1.schema().clone(), g1.a() * g2.a(), |t| g1.b(t) * g2.b(t))
}

/// GUS parameters of an executable sampler applied to a relation with the
/// given lineage schema.
pub fn gus_of_sampler(spec: &SamplerSpec, schema: &LineageSchema) -> Result<GusParams> {
    match spec {
        SamplerSpec::Bernoulli { p, .. } => gus_of_bernoulli_over(*p, schema),
        SamplerSpec::Wor { n, population, .. } => {
            let population = population.ok_or_else(|| {
                GusError::Unsupported(
                    "WOR population is unknown; bind the plan to data first".into(),
                )
            })?;
            gus_of_wor_over(*n, population, schema)
        }
        SamplerSpec::LineageBernoulli { dims } => {
            let mut g: Option<GusParams> = None;
            for (name, d) in dims {
                if !schema.contains(name) {
                    return Err(GusError::Schema(format!(
                        "subsample relation `{name}` is not in {schema}"
                    )));
                }
                let dim = gus_of_bernoulli(d.p, name)?;
                g = Some(match g {
                    None => dim,
                    Some(prev) => compose(&prev, &dim)?,
                });
            }
            match g {
                Some(g) => g.extend_schema(schema),
                None => Ok(identity_gus(schema)),
            }
        }
    }
}

/// `c_S = Σ_{T⊆S} (−1)^{|S|−|T|} b_T` for every `S`, by an in-place Möbius
/// transform over the subset lattice.
pub fn c_coefficients(g: &GusParams) -> SubsetTable {
    let n = g.schema().len();
    let mut c = g.b_table().values().to_vec();
    for bit in 0..n {
        let step = 1usize << bit;
        for mask in 0..c.len() {
            if mask & step != 0 {
                c[mask] -= c[mask ^ step];
            }
        }
    }
    SubsetTable::new(g.schema().clone(), c).expect("table size matches schema")
}

/// `c_{S,T} = Σ_{U⊆T} (−1)^{|T|−|U|} b_{S∪U}` for every `T ⊆ S^C`,
/// returned as a dense table indexed by `T` (entries outside `S^C` are
/// zero).
pub fn c_pair_coefficients(g: &GusParams, s: SubsetMask) -> Vec<f64> {
    let n = g.schema().len();
    let comp = s.complement(n);
    let mut c = vec![0.0; 1 << n];
    for t in comp.subsets() {
        c[t.index()] = g.b(s.union(t));
    }
    for bit in (0..n).filter(|&i| comp.contains(i)) {
        let step = 1usize << bit;
        for t in comp.subsets() {
            if t.index() & step != 0 {
                c[t.index()] -= c[t.index() ^ step];
            }
        }
    }
    c
}

/// One rewrite applied while pushing GUS nodes to the top of a plan.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RewriteStep {
    pub rule: String,
    pub node: String,
    pub before: Vec<GusParams>,
    pub after: GusParams,
}

#[derive(Clone, Debug)]
pub struct NormalizedPlan {
    /// The original plan with all sampling removed.
    pub relational: PlanNode,
    /// The single GUS method that is SOA-equivalent to all sampling in the
    /// plan, over the plan's full lineage schema.
    pub top: GusParams,
    pub trace: Vec<RewriteStep>,
}

/// Rewrites a plan into `SUM(G(relational plan))`.
///
/// Samplers are translated to GUS parameters and pushed up bottom-up:
/// selections commute with GUS unchanged, joins merge the GUS of their
/// inputs (an identity GUS stands in for an unsampled input), unions of
/// identically-built inputs merge by the union rule, and stacked GUS nodes
/// are compacted.
pub fn normalize_plan(plan: &PlanNode) -> Result<NormalizedPlan> {
    let schema = plan.lineage_schema()?;
    let mut trace = Vec::new();
    let (expr, body) = plan.split_aggregate();
    let pushed = push_up(body, &mut trace)?;
    let top = match pushed.gus {
        Some(g) => g,
        None => {
            let g = identity_gus(&schema);
            trace.push(RewriteStep {
                rule: "identity".into(),
                node: describe(body),
                before: vec![],
                after: g.clone(),
            });
            g
        }
    };
    let relational = match expr {
        Some(e) => pushed.relational.sum(e.clone()),
        None => pushed.relational,
    };
    Ok(NormalizedPlan {
        relational,
        top,
        trace,
    })
}

struct Pushed {
    relational: PlanNode,
    schema: LineageSchema,
    gus: Option<GusParams>,
}

fn describe(node: &PlanNode) -> String {
    match node {
        PlanNode::Scan { table } => format!("scan({table})"),
        PlanNode::Sample { sampler, input } => {
            let method = match sampler {
                SamplerSpec::Bernoulli { p, .. } => format!("bernoulli({p})"),
                SamplerSpec::Wor { n, population, .. } => match population {
                    Some(pop) => format!("wor({n}/{pop})"),
                    None => format!("wor({n})"),
                },
                SamplerSpec::LineageBernoulli { dims } => {
                    let parts: Vec<String> =
                        dims.iter().map(|(k, d)| format!("{k}={}", d.p)).collect();
                    format!("lineage_bernoulli({})", parts.join(","))
                }
            };
            format!("{method} over {}", describe(input))
        }
        other => {
            let schema = other
                .lineage_schema()
                .map(|s| s.to_string())
                .unwrap_or_default();
            format!("{} {schema}", other.op_name())
        }
    }
}

fn stack(
    outer: GusParams,
    inner: Option<GusParams>,
    node: &PlanNode,
    trace: &mut Vec<RewriteStep>,
) -> Result<GusParams> {
    match inner {
        None => Ok(outer),
        Some(inner) => {
            let merged = compact(&outer, &inner)?;
            trace.push(RewriteStep {
                rule: "compaction".into(),
                node: describe(node),
                before: vec![outer, inner],
                after: merged.clone(),
            });
            Ok(merged)
        }
    }
}

fn identity_for(side: &Pushed, trace: &mut Vec<RewriteStep>) -> GusParams {
    match &side.gus {
        Some(g) => g.clone(),
        None => {
            let g = identity_gus(&side.schema);
            trace.push(RewriteStep {
                rule: "identity".into(),
                node: describe(&side.relational),
                before: vec![],
                after: g.clone(),
            });
            g
        }
    }
}

fn push_up(node: &PlanNode, trace: &mut Vec<RewriteStep>) -> Result<Pushed> {
    match node {
        PlanNode::Scan { table } => Ok(Pushed {
            relational: node.clone(),
            schema: LineageSchema::single(table.clone())?,
            gus: None,
        }),
        PlanNode::Select { predicate, input } => {
            // Selection commutes with GUS; parameters are unchanged.
            let inner = push_up(input, trace)?;
            Ok(Pushed {
                relational: inner.relational.select(predicate.clone()),
                ..inner
            })
        }
        PlanNode::Sample { sampler, input } => {
            sampler.validate()?;
            let inner = push_up(input, trace)?;
            if matches!(sampler, SamplerSpec::Wor { .. }) && inner.gus.is_some() {
                return Err(GusError::Unsupported(
                    "WOR sampling over an already-sampled input is not a GUS method".into(),
                ));
            }
            let g = gus_of_sampler(sampler, &inner.schema)?;
            trace.push(RewriteStep {
                rule: "translate".into(),
                node: describe(node),
                before: vec![],
                after: g.clone(),
            });
            let gus = stack(g, inner.gus, node, trace)?;
            Ok(Pushed {
                gus: Some(gus),
                ..inner
            })
        }
        PlanNode::GusQuasi { params, input } => {
            let inner = push_up(input, trace)?;
            let g = params.extend_schema(&inner.schema)?;
            let gus = stack(g, inner.gus, node, trace)?;
            Ok(Pushed {
                gus: Some(gus),
                ..inner
            })
        }
        PlanNode::Join { left, right, .. } | PlanNode::Cross { left, right } => {
            let (l, r) = (push_up(left, trace)?, push_up(right, trace)?);
            let schema = l.schema.merge_disjoint(&r.schema)?;
            let gus = if l.gus.is_none() && r.gus.is_none() {
                None
            } else {
                let (gl, gr) = (identity_for(&l, trace), identity_for(&r, trace));
                let merged = join_merge(&gl, &gr)?;
                trace.push(RewriteStep {
                    rule: "join".into(),
                    node: describe(node),
                    before: vec![gl, gr],
                    after: merged.clone(),
                });
                Some(merged)
            };
            let relational = match node {
                PlanNode::Join { condition, .. } => l.relational.join(condition.clone(), r.relational),
                _ => l.relational.cross(r.relational),
            };
            Ok(Pushed {
                relational,
                schema,
                gus,
            })
        }
        PlanNode::UnionDedup { left, right } => {
            let (l, r) = (push_up(left, trace)?, push_up(right, trace)?);
            if l.relational != r.relational {
                return Err(GusError::Unsupported(
                    "union inputs must be the same relational expression with different \
                     sampling"
                        .into(),
                ));
            }
            let gus = if l.gus.is_none() && r.gus.is_none() {
                None
            } else {
                let (gl, gr) = (identity_for(&l, trace), identity_for(&r, trace));
                let merged = union_merge(&gl, &gr)?;
                trace.push(RewriteStep {
                    rule: "union".into(),
                    node: describe(node),
                    before: vec![gl, gr],
                    after: merged.clone(),
                });
                Some(merged)
            };
            Ok(Pushed { gus, ..l })
        }
        PlanNode::SumAggregate { .. } => Err(GusError::Unsupported(
            "sum aggregate may only appear at the plan root".into(),
        )),
    }
}
