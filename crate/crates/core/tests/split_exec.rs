//! Partitioned execution across serialization boundaries.

use innet::cli::execute_with_digests;
use innet::exec::{make_weights, run_pipeline, run_traced, Tensor};
use innet::pipeline::canonical_pipeline;
use innet::plan::make_plan_with;
use innet::scoring::synth_mixture;
use innet::wire;
use proptest::prelude::*;

fn over_wire(t: &Tensor) -> Tensor {
    wire::deserialize(&wire::serialize(t)).unwrap()
}

#[test]
fn every_split_point_with_twenty_inputs() {
    let spec = canonical_pipeline();
    let n = spec.len();
    let m = 4096;
    for input_seed in 0..20u64 {
        let weights = make_weights(&spec, 100 + input_seed);
        let input = synth_mixture(3, m, input_seed).observation;
        let whole = run_pipeline(&spec, &weights, &input, 0..n).unwrap();
        for s in 1..n {
            let head = run_pipeline(&spec, &weights, &input, 0..s).unwrap();
            let tail = run_pipeline(&spec, &weights, &over_wire(&head), s..n).unwrap();
            assert!(tail.bit_eq(&whole), "split at {s}, input {input_seed}");
        }
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let spec = canonical_pipeline();
    let input = synth_mixture(4, 2048, 5).observation;
    let a = run_traced(&spec, &make_weights(&spec, 5), &input).unwrap();
    let b = run_traced(&spec, &make_weights(&spec, 5), &input).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(wire::serialize(x), wire::serialize(y));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn composition_over_inner_ranges(
        k in 1usize..=8,
        seed in any::<u64>(),
        cuts in proptest::sample::subsequence((1usize..10).collect::<Vec<_>>(), 2),
        start in 0usize..9,
    ) {
        let spec = canonical_pipeline();
        let weights = make_weights(&spec, seed);
        let input = synth_mixture(2, 1024 * k, seed).observation;
        let trace = run_traced(&spec, &weights, &input).unwrap();
        // A..C versus (B..C) after (A..B), A possibly mid-pipeline
        let a = start.min(cuts[0] - 1);
        let (b, c) = (cuts[0], cuts[1] + 1);
        let src = if a == 0 { input.clone() } else { trace[a - 1].clone() };
        let direct = run_pipeline(&spec, &weights, &src, a..c).unwrap();
        let first = run_pipeline(&spec, &weights, &src, a..b).unwrap();
        let composed = run_pipeline(&spec, &weights, &over_wire(&first), b..c).unwrap();
        prop_assert!(direct.bit_eq(&composed));
        prop_assert!(direct.bit_eq(&trace[c - 1]));
    }

    #[test]
    fn arbitrary_partitions_match_monolithic_digests(
        k in 1usize..=4,
        seed in any::<u64>(),
        mask in 0u16..512,
    ) {
        let spec = canonical_pipeline();
        let n = spec.len();
        let m = 1024 * k;
        let mut parts = Vec::new();
        let mut first = 0;
        for cut in 1..n {
            if mask >> (cut - 1) & 1 == 1 {
                parts.push((first, cut - 1, "node"));
                first = cut;
            }
        }
        parts.push((first, n - 1, "node"));
        let plan = make_plan_with(&spec, m, &parts).unwrap();
        let input = synth_mixture(4, m, seed).observation;
        let (whole, plain) = execute_with_digests(&spec, seed, &input, None).unwrap();
        let (split, audited) = execute_with_digests(&spec, seed, &input, Some(&plan)).unwrap();
        prop_assert!(whole.bit_eq(&split));
        prop_assert_eq!(plain, audited);
    }
}
