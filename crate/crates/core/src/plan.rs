//! Rate-curve driven partitioning of a pipeline into VNFs along a node chain.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::pipeline::{PipelineError, PipelineSpec, Rate};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("chain has no processing nodes")]
    EmptyChain,
    #[error("plan does not fit the chain: {0}")]
    PlanChainMismatch(String),
    #[error("invalid plan: {0}")]
    Invalid(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("plan document: {0}")]
    Config(String),
}

/// A rational serialized as `"num/den"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExactRate(pub Rate);

impl ExactRate {
    pub fn value(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }
}

impl fmt::Display for ExactRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

impl FromStr for ExactRate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (n, d) = s.split_once('/').unwrap_or((s, "1"));
        let n: u64 = n
            .trim()
            .parse()
            .map_err(|_| format!("bad rate numerator in {s:?}"))?;
        let d: u64 = d
            .trim()
            .parse()
            .map_err(|_| format!("bad rate denominator in {s:?}"))?;
        if d == 0 {
            return Err(format!("zero denominator in {s:?}"));
        }
        Ok(ExactRate(Rate::new(n, d)))
    }
}

impl Serialize for ExactRate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ExactRate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A contiguous, inclusive block interval hosted on one node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vnf {
    pub first_block: usize,
    pub last_block: usize,
    pub node: String,
    /// Filter rate after the last block of this VNF.
    pub boundary_rate: ExactRate,
}

impl Vnf {
    pub fn blocks(&self) -> std::ops::Range<usize> {
        self.first_block..self.last_block + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionPlan {
    pub m: usize,
    pub block_count: usize,
    pub vnfs: Vec<Vnf>,
}

impl PartitionPlan {
    pub fn theoretical_rates(&self) -> Vec<Rate> {
        self.vnfs.iter().map(|v| v.boundary_rate.0).collect()
    }

    /// Intervals must be non-empty, in order, and tile `0..block_count`.
    pub fn validate(&self) -> Result<(), PlanError> {
        if self.vnfs.is_empty() {
            return Err(PlanError::Invalid("no VNFs".into()));
        }
        let mut next = 0;
        for (i, v) in self.vnfs.iter().enumerate() {
            if v.first_block != next || v.last_block < v.first_block {
                return Err(PlanError::Invalid(format!(
                    "VNF {i} covers {}..={}, expected to start at block {next}",
                    v.first_block, v.last_block
                )));
            }
            next = v.last_block + 1;
        }
        if next != self.block_count {
            return Err(PlanError::Invalid(format!(
                "VNFs cover {next} of {} blocks",
                self.block_count
            )));
        }
        Ok(())
    }

    /// Position in `chain` of each VNF's node, checking path order.
    pub fn node_positions(&self, chain: &[String]) -> Result<Vec<usize>, PlanError> {
        let mut last = 0;
        self.vnfs
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let pos = chain.iter().position(|n| *n == v.node).ok_or_else(|| {
                    PlanError::PlanChainMismatch(format!(
                        "VNF {i} placed on unknown node {:?}",
                        v.node
                    ))
                })?;
                if pos < last {
                    return Err(PlanError::PlanChainMismatch(format!(
                        "VNF {i} on {:?} precedes the previous VNF's node",
                        v.node
                    )));
                }
                last = pos;
                Ok(pos)
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PlanError> {
        let plan: Self =
            serde_json::from_str(text).map_err(|e| PlanError::Config(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn from_path(path: &Path) -> Result<Self, PlanError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PlanError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Strict interior local minima: `r[i-1] > r[i] < r[i+1]`.
pub fn concave_points<T: PartialOrd>(rates: &[T]) -> Vec<usize> {
    if rates.len() < 3 {
        return Vec::new();
    }
    (1..rates.len() - 1)
        .filter(|&i| rates[i - 1] > rates[i] && rates[i] < rates[i + 1])
        .collect()
}

/// Inclusive intervals obtained by cutting after each kept concave point.
/// At most `nodes - 1` cuts are kept (the earliest ones); the remainder is
/// merged into the trailing interval.
pub fn split_intervals<T: PartialOrd>(rates: &[T], nodes: usize) -> Vec<(usize, usize)> {
    if rates.is_empty() || nodes == 0 {
        return Vec::new();
    }
    let cuts: Vec<usize> = concave_points(rates).into_iter().take(nodes - 1).collect();
    let mut intervals = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0;
    for c in cuts {
        intervals.push((start, c));
        start = c + 1;
    }
    intervals.push((start, rates.len() - 1));
    intervals
}

/// Partitions `spec` over the processing nodes in `chain` (path order,
/// server excluded). Leading VNFs go to the leading nodes; the trailing VNF
/// always lands on the last processing node.
pub fn make_plan(
    spec: &PipelineSpec,
    m: usize,
    chain: &[String],
) -> Result<PartitionPlan, PlanError> {
    if chain.is_empty() {
        return Err(PlanError::EmptyChain);
    }
    if spec.is_empty() {
        return Err(PlanError::Invalid("pipeline has no blocks".into()));
    }
    let rates = spec.filter_rates(m)?;
    let intervals = split_intervals(&rates, chain.len());
    let last = intervals.len() - 1;
    let vnfs = intervals
        .into_iter()
        .enumerate()
        .map(|(i, (first, end))| Vnf {
            first_block: first,
            last_block: end,
            node: if i == last {
                chain[chain.len() - 1].clone()
            } else {
                chain[i].clone()
            },
            boundary_rate: ExactRate(rates[end]),
        })
        .collect();
    Ok(PartitionPlan {
        m,
        block_count: spec.len(),
        vnfs,
    })
}

/// Single VNF covering the whole pipeline on `node`.
pub fn monolithic_plan(
    spec: &PipelineSpec,
    m: usize,
    node: &str,
) -> Result<PartitionPlan, PlanError> {
    make_plan_with(spec, m, &[(0, spec.len().saturating_sub(1), node)])
}

/// Plan from explicit inclusive intervals and nodes.
pub fn make_plan_with(
    spec: &PipelineSpec,
    m: usize,
    parts: &[(usize, usize, &str)],
) -> Result<PartitionPlan, PlanError> {
    let rates = spec.filter_rates(m)?;
    let vnfs = parts
        .iter()
        .map(|&(first, last, node)| {
            let boundary_rate = rates
                .get(last)
                .copied()
                .map(ExactRate)
                .ok_or_else(|| PlanError::Invalid(format!("block {last} out of range")))?;
            Ok(Vnf {
                first_block: first,
                last_block: last,
                node: node.to_string(),
                boundary_rate,
            })
        })
        .collect::<Result<_, PlanError>>()?;
    let plan = PartitionPlan {
        m,
        block_count: spec.len(),
        vnfs,
    };
    plan.validate()?;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::canonical_pipeline;

    fn chain(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn canonical_concave_points() {
        let rates = [8.0, 4.0, 1.5, 0.5, 0.25, 0.375, 0.15625, 0.3125, 1.25];
        assert_eq!(concave_points(&rates), vec![4, 6]);
    }

    #[test]
    fn monotone_and_plateau_have_none() {
        assert!(concave_points(&[5.0, 4.0, 3.0, 1.0]).is_empty());
        assert!(concave_points(&[1, 1, 1]).is_empty());
        assert!(concave_points(&[3, 1, 1, 3]).is_empty());
        assert!(concave_points::<u8>(&[]).is_empty());
        assert!(concave_points(&[2, 1]).is_empty());
    }

    #[test]
    fn canonical_three_vnfs() {
        let m = 163_840;
        let plan = make_plan(&canonical_pipeline(), m, &chain(&["client", "s1", "s2"])).unwrap();
        let got: Vec<_> = plan
            .vnfs
            .iter()
            .map(|v| (v.first_block, v.last_block, v.node.as_str()))
            .collect();
        assert_eq!(got, vec![(0, 4, "client"), (5, 6, "s1"), (7, 9, "s2")]);
        assert_eq!(
            plan.theoretical_rates(),
            vec![Rate::new(1, 4), Rate::new(5, 32), Rate::new(1024, m as u64)]
        );
    }

    #[test]
    fn single_node_gets_everything() {
        let plan = make_plan(&canonical_pipeline(), 4096, &chain(&["edge"])).unwrap();
        assert_eq!(plan.vnfs.len(), 1);
        assert_eq!(plan.vnfs[0].blocks(), 0..10);
    }

    #[test]
    fn overflow_keeps_earliest_minimum() {
        let plan = make_plan(&canonical_pipeline(), 4096, &chain(&["client", "s1"])).unwrap();
        let got: Vec<_> = plan
            .vnfs
            .iter()
            .map(|v| (v.first_block, v.last_block))
            .collect();
        assert_eq!(got, vec![(0, 4), (5, 9)]);
        assert_eq!(plan.vnfs[1].node, "s1");
    }

    #[test]
    fn extra_nodes_leave_trailing_vnf_on_last() {
        let plan = make_plan(&canonical_pipeline(), 4096, &chain(&["a", "b", "c", "d"])).unwrap();
        let nodes: Vec<_> = plan.vnfs.iter().map(|v| v.node.as_str()).collect();
        assert_eq!(nodes, vec!["a", "b", "d"]);
    }

    #[test]
    fn empty_chain() {
        assert_eq!(
            make_plan(&canonical_pipeline(), 4096, &[]),
            Err(PlanError::EmptyChain)
        );
    }

    #[test]
    fn plan_json_round_trip_and_validation() {
        let plan = make_plan(&canonical_pipeline(), 8192, &chain(&["client", "s1", "s2"])).unwrap();
        assert_eq!(PartitionPlan::from_json(&plan.to_json()).unwrap(), plan);
        let mut broken = plan.clone();
        broken.vnfs[1].first_block = 6;
        assert!(broken.validate().is_err());
    }

    #[test]
    fn node_order_enforced() {
        let mut plan =
            make_plan(&canonical_pipeline(), 8192, &chain(&["client", "s1", "s2"])).unwrap();
        let path = chain(&["client", "s1", "s2", "server"]);
        assert_eq!(plan.node_positions(&path).unwrap(), vec![0, 1, 2]);
        plan.vnfs.swap(0, 1);
        plan.vnfs[0].node = "s1".into();
        plan.vnfs[1].node = "client".into();
        assert!(matches!(
            plan.node_positions(&path),
            Err(PlanError::PlanChainMismatch(_))
        ));
        plan.vnfs[1].node = "nowhere".into();
        assert!(matches!(
            plan.node_positions(&path),
            Err(PlanError::PlanChainMismatch(_))
        ));
    }

    #[test]
    fn exact_rate_parsing() {
        assert_eq!(
            "5/32".parse::<ExactRate>().unwrap(),
            ExactRate(Rate::new(5, 32))
        );
        assert_eq!(
            "3".parse::<ExactRate>().unwrap(),
            ExactRate(Rate::new(3, 1))
        );
        assert!("1/0".parse::<ExactRate>().is_err());
    }
}
