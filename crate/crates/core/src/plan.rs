//! Query plans: relational operators with sampling operators interspersed.

use crate::engine::Catalog;
use crate::error::{GusError, Result};
use crate::expr::{Expr, JoinCondition, Predicate};
use crate::lineage::LineageSchema;
use crate::params::GusParams;
use crate::sampling::SamplerSpec;

#[derive(Clone, Debug, PartialEq)]
pub enum PlanNode {
    Scan {
        table: String,
    },
    Select {
        predicate: Predicate,
        input: Box<PlanNode>,
    },
    Join {
        condition: JoinCondition,
        left: Box<PlanNode>,
        right: Box<PlanNode>,
    },
    Cross {
        left: Box<PlanNode>,
        right: Box<PlanNode>,
    },
    UnionDedup {
        left: Box<PlanNode>,
        right: Box<PlanNode>,
    },
    Sample {
        sampler: SamplerSpec,
        input: Box<PlanNode>,
    },
    /// Analysis-only GUS node. Produced by rewriting; also accepted by the
    /// rewriter when built programmatically, for sampling methods that have
    /// no executable implementation here.
    GusQuasi {
        params: GusParams,
        input: Box<PlanNode>,
    },
    SumAggregate {
        expr: Expr,
        input: Box<PlanNode>,
    },
}

impl PlanNode {
    pub fn scan(table: impl Into<String>) -> Self {
        PlanNode::Scan {
            table: table.into(),
        }
    }

    pub fn select(self, predicate: Predicate) -> Self {
        PlanNode::Select {
            predicate,
            input: Box::new(self),
        }
    }

    pub fn join(self, condition: JoinCondition, right: PlanNode) -> Self {
        PlanNode::Join {
            condition,
            left: Box::new(self),
            right: Box::new(right),
        }
    }

    pub fn cross(self, right: PlanNode) -> Self {
        PlanNode::Cross {
            left: Box::new(self),
            right: Box::new(right),
        }
    }

    pub fn union(self, right: PlanNode) -> Self {
        PlanNode::UnionDedup {
            left: Box::new(self),
            right: Box::new(right),
        }
    }

    pub fn sample(self, sampler: SamplerSpec) -> Self {
        PlanNode::Sample {
            sampler,
            input: Box::new(self),
        }
    }

    pub fn gus(self, params: GusParams) -> Self {
        PlanNode::GusQuasi {
            params,
            input: Box::new(self),
        }
    }

    pub fn sum(self, expr: Expr) -> Self {
        PlanNode::SumAggregate {
            expr,
            input: Box::new(self),
        }
    }

    pub fn children(&self) -> Vec<&PlanNode> {
        match self {
            PlanNode::Scan { .. } => vec![],
            PlanNode::Select { input, .. }
            | PlanNode::Sample { input, .. }
            | PlanNode::GusQuasi { input, .. }
            | PlanNode::SumAggregate { input, .. } => vec![input],
            PlanNode::Join { left, right, .. }
            | PlanNode::Cross { left, right }
            | PlanNode::UnionDedup { left, right } => vec![left, right],
        }
    }

    pub fn op_name(&self) -> &'static str {
        match self {
            PlanNode::Scan { .. } => "scan",
            PlanNode::Select { .. } => "select",
            PlanNode::Join { .. } => "join",
            PlanNode::Cross { .. } => "cross",
            PlanNode::UnionDedup { .. } => "union",
            PlanNode::Sample { .. } => "sample",
            PlanNode::GusQuasi { .. } => "gus",
            PlanNode::SumAggregate { .. } => "sum",
        }
    }

    pub fn has_sampling(&self) -> bool {
        matches!(self, PlanNode::Sample { .. } | PlanNode::GusQuasi { .. })
            || self.children().into_iter().any(PlanNode::has_sampling)
    }

    /// The plan's aggregate expression and its input, if the root is a sum.
    pub fn split_aggregate(&self) -> (Option<&Expr>, &PlanNode) {
        match self {
            PlanNode::SumAggregate { expr, input } => (Some(expr), input),
            other => (None, other),
        }
    }

    /// Lineage schema of the plan's output, checking structural rules on
    /// the way: the aggregate only at the root, disjoint join inputs,
    /// union inputs over the same relations.
    pub fn lineage_schema(&self) -> Result<LineageSchema> {
        self.check(true)
    }

    fn check(&self, is_root: bool) -> Result<LineageSchema> {
        match self {
            PlanNode::Scan { table } => LineageSchema::single(table.clone()),
            PlanNode::SumAggregate { input, .. } => {
                if !is_root {
                    return Err(GusError::Unsupported(
                        "sum aggregate may only appear at the plan root".into(),
                    ));
                }
                input.check(false)
            }
            PlanNode::Select { input, .. }
            | PlanNode::Sample { input, .. }
            | PlanNode::GusQuasi { input, .. } => input.check(false),
            PlanNode::Join { left, right, .. } | PlanNode::Cross { left, right } => {
                let (l, r) = (left.check(false)?, right.check(false)?);
                l.merge_disjoint(&r)
            }
            PlanNode::UnionDedup { left, right } => {
                let (l, r) = (left.check(false)?, right.check(false)?);
                if l != r {
                    return Err(GusError::Schema(format!(
                        "union inputs must cover the same relations: {l} vs {r}"
                    )));
                }
                Ok(l)
            }
        }
    }

    /// Checks structure and that every scanned table is registered.
    pub fn validate(&self, catalog: &Catalog) -> Result<LineageSchema> {
        fn scans<'a>(node: &'a PlanNode, out: &mut Vec<&'a str>) {
            if let PlanNode::Scan { table } = node {
                out.push(table);
            }
            for c in node.children() {
                scans(c, out);
            }
        }
        let mut tables = Vec::new();
        scans(self, &mut tables);
        for t in tables {
            catalog.get(t)?;
        }
        self.lineage_schema()
    }

    /// The plan with every sampling operator and GUS node removed.
    pub fn strip_sampling(&self) -> PlanNode {
        match self {
            PlanNode::Scan { .. } => self.clone(),
            PlanNode::Sample { input, .. } | PlanNode::GusQuasi { input, .. } => {
                input.strip_sampling()
            }
            PlanNode::Select { predicate, input } => PlanNode::Select {
                predicate: predicate.clone(),
                input: Box::new(input.strip_sampling()),
            },
            PlanNode::SumAggregate { expr, input } => PlanNode::SumAggregate {
                expr: expr.clone(),
                input: Box::new(input.strip_sampling()),
            },
            PlanNode::Join {
                condition,
                left,
                right,
            } => PlanNode::Join {
                condition: condition.clone(),
                left: Box::new(left.strip_sampling()),
                right: Box::new(right.strip_sampling()),
            },
            PlanNode::Cross { left, right } => PlanNode::Cross {
                left: Box::new(left.strip_sampling()),
                right: Box::new(right.strip_sampling()),
            },
            PlanNode::UnionDedup { left, right } => {
                let (l, r) = (left.strip_sampling(), right.strip_sampling());
                // Both branches compute the same relation once sampling is gone.
                if l == r {
                    l
                } else {
                    PlanNode::UnionDedup {
                        left: Box::new(l),
                        right: Box::new(r),
                    }
                }
            }
        }
    }

    /// Fills in the population size of every WOR sampler by evaluating its
    /// (sampling-free) input on the catalog.
    pub fn bind_populations(&self, catalog: &Catalog) -> Result<PlanNode> {
        Ok(match self {
            PlanNode::Sample { sampler, input } => {
                let input = input.bind_populations(catalog)?;
                let sampler = match sampler {
                    SamplerSpec::Wor { n, seed, .. } => {
                        if input.has_sampling() {
                            return Err(GusError::Unsupported(
                                "WOR sampling over an already-sampled input has a random \
                                 population and is not a GUS method"
                                    .into(),
                            ));
                        }
                        let population = crate::engine::execute(&input, catalog, 0)?.len();
                        SamplerSpec::Wor {
                            n: *n,
                            seed: *seed,
                            population: Some(population),
                        }
                    }
                    other => other.clone(),
                };
                PlanNode::Sample {
                    sampler,
                    input: Box::new(input),
                }
            }
            PlanNode::Scan { .. } => self.clone(),
            PlanNode::Select { predicate, input } => PlanNode::Select {
                predicate: predicate.clone(),
                input: Box::new(input.bind_populations(catalog)?),
            },
            PlanNode::GusQuasi { params, input } => PlanNode::GusQuasi {
                params: params.clone(),
                input: Box::new(input.bind_populations(catalog)?),
            },
            PlanNode::SumAggregate { expr, input } => PlanNode::SumAggregate {
                expr: expr.clone(),
                input: Box::new(input.bind_populations(catalog)?),
            },
            PlanNode::Join {
                condition,
                left,
                right,
            } => PlanNode::Join {
                condition: condition.clone(),
                left: Box::new(left.bind_populations(catalog)?),
                right: Box::new(right.bind_populations(catalog)?),
            },
            PlanNode::Cross { left, right } => PlanNode::Cross {
                left: Box::new(left.bind_populations(catalog)?),
                right: Box::new(right.bind_populations(catalog)?),
            },
            PlanNode::UnionDedup { left, right } => PlanNode::UnionDedup {
                left: Box::new(left.bind_populations(catalog)?),
                right: Box::new(right.bind_populations(catalog)?),
            },
        })
    }
}
