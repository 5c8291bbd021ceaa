//! Planner behaviour against brute-force partition enumeration.

use innet::pipeline::{canonical_pipeline, BlockSpec, PipelineSpec, Rate};
use innet::plan::{concave_points, make_plan, split_intervals};
use proptest::prelude::*;

fn chain(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn toy(blocks: &[(usize, usize)]) -> PipelineSpec {
    let mut in_ch = 1;
    let blocks = blocks
        .iter()
        .enumerate()
        .map(|(i, &(out, stride))| {
            let b = BlockSpec::conv(i, &format!("b{i}"), in_ch, out, 3, stride);
            in_ch = out;
            b
        })
        .collect();
    PipelineSpec {
        blocks,
        input_channels: 1,
        element_bytes: 4,
    }
}

/// All ways to cut `n` blocks into contiguous intervals, as inclusive end indices.
fn partitions(n: usize) -> Vec<Vec<usize>> {
    (0..1u32 << (n - 1))
        .map(|mask| {
            let mut ends: Vec<usize> = (0..n - 1).filter(|i| mask >> i & 1 == 1).collect();
            ends.push(n - 1);
            ends
        })
        .collect()
}

/// Largest volume any VNF emits, the final egress included.
fn max_emitted(rates: &[Rate], ends: &[usize]) -> Rate {
    ends.iter().map(|&e| rates[e]).max().unwrap()
}

fn block_shape() -> impl Strategy<Value = (usize, usize)> {
    (1usize..48, prop::sample::select(vec![1usize, 4]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn no_concave_points_means_one_vnf_on_the_last_node(
        shape in prop::collection::vec(block_shape(), 4),
    ) {
        let spec = toy(&shape);
        spec.validate().unwrap();
        let m = 4096;
        let rates = spec.filter_rates(m).unwrap();
        prop_assume!(concave_points(&rates).is_empty());

        let plan = make_plan(&spec, m, &chain(&["client", "s1", "s2"])).unwrap();
        prop_assert_eq!(plan.vnfs.len(), 1);
        prop_assert_eq!(plan.vnfs[0].blocks(), 0..4);
        prop_assert_eq!(plan.vnfs[0].node.as_str(), "s2");

        let all = partitions(4);
        let best = all.iter().map(|p| max_emitted(&rates, p)).min().unwrap();
        prop_assert_eq!(max_emitted(&rates, &[3]), best);
        let fewest = all.iter().filter(|p| max_emitted(&rates, p) == best).map(Vec::len).min().unwrap();
        prop_assert_eq!(fewest, 1);
    }

    #[test]
    fn interior_boundaries_are_strict_local_minima(
        rates in prop::collection::vec(0u32..8, 1..14),
        nodes in 1usize..6,
    ) {
        let intervals = split_intervals(&rates, nodes);
        prop_assert!(intervals.len() <= nodes);
        prop_assert_eq!(intervals[0].0, 0);
        prop_assert_eq!(intervals.last().unwrap().1, rates.len() - 1);
        for w in intervals.windows(2) {
            prop_assert_eq!(w[0].1 + 1, w[1].0);
        }
        for &(_, end) in &intervals[..intervals.len() - 1] {
            prop_assert!(rates[end - 1] > rates[end] && rates[end] < rates[end + 1]);
        }
        // overflow keeps the earliest minima
        let minima = concave_points(&rates);
        let kept: Vec<usize> = intervals[..intervals.len() - 1].iter().map(|i| i.1).collect();
        prop_assert_eq!(&kept[..], &minima[..kept.len()]);
        prop_assert_eq!(kept.len(), minima.len().min(nodes - 1));
    }
}

#[test]
fn canonical_boundaries_are_local_best() {
    let spec = canonical_pipeline();
    let rates = spec.filter_rates(163_840).unwrap();
    let plan = make_plan(&spec, 163_840, &chain(&["client", "s1", "s2"])).unwrap();
    let mut prev = 0;
    for v in &plan.vnfs {
        for r in &rates[prev..v.last_block] {
            assert!(v.boundary_rate.0 <= *r);
        }
        prev = v.last_block + 1;
    }
}

#[test]
fn canonical_plan_is_invariant_under_m() {
    let spec = canonical_pipeline();
    let nodes = chain(&["client", "s1", "s2"]);
    let reference = make_plan(&spec, 1024, &nodes).unwrap();
    for k in 2..=256 {
        let plan = make_plan(&spec, 1024 * k, &nodes).unwrap();
        let layout: Vec<_> = plan
            .vnfs
            .iter()
            .map(|v| (v.blocks(), v.node.clone()))
            .collect();
        let expected: Vec<_> = reference
            .vnfs
            .iter()
            .map(|v| (v.blocks(), v.node.clone()))
            .collect();
        assert_eq!(layout, expected, "m = {}", 1024 * k);
    }
}

#[test]
fn two_nodes_merge_the_trailing_minimum() {
    let spec = canonical_pipeline();
    let plan = make_plan(&spec, 163_840, &chain(&["client", "s1"])).unwrap();
    let layout: Vec<_> = plan
        .vnfs
        .iter()
        .map(|v| (v.first_block, v.last_block, v.node.as_str()))
        .collect();
    assert_eq!(layout, [(0, 4, "client"), (5, 9, "s1")]);
}
