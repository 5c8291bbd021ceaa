//! Parameter and MAC counts against an enumeration oracle, plus shape laws.

use innet::exec::{make_weights, run_traced};
use innet::pipeline::{canonical_pipeline, reference_pipeline, BlockKind, PipelineSpec, Rate};
use innet::scoring::synth_mixture;
use proptest::prelude::*;

/// Walks every conv in the pipeline and counts (output channel, output frame,
/// input channel, tap) quadruples one at a time. Padded taps count: the cost
/// model charges one MAC per weight per output frame.
fn enumerate(spec: &PipelineSpec, m: usize) -> (u64, u64) {
    let mut params = 0u64;
    let mut macs = 0u64;
    let mut conv = |out_ch: usize, in_per_group: usize, kernel: usize, frames_out: usize| {
        for _o in 0..out_ch {
            for _i in 0..in_per_group {
                for _t in 0..kernel {
                    params += 1;
                    for _j in 0..frames_out {
                        macs += 1;
                    }
                }
            }
        }
    };
    let mut norm_params = 0u64;
    let mut frames = m;
    for b in &spec.blocks {
        match b.kind {
            BlockKind::Conv1D => {
                frames = frames.div_ceil(b.stride);
                conv(b.out_channels, b.in_channels, b.kernel_lengths[0], frames);
            }
            BlockKind::RConvStack => {
                for u in 0..b.repeat {
                    let cin = if u == 0 {
                        b.in_channels
                    } else {
                        b.out_channels
                    };
                    let stride = if u == 0 { b.stride } else { 1 };
                    let expanded = b.expansion * cin;
                    conv(expanded, cin, 1, frames);
                    norm_params += 2 * expanded as u64;
                    let out = frames.div_ceil(stride);
                    let per_path = expanded / b.kernel_lengths.len();
                    for &k in &b.kernel_lengths {
                        conv(per_path, 1, k, out);
                        norm_params += 2 * per_path as u64;
                    }
                    conv(b.out_channels, expanded, 1, out);
                    norm_params += 2 * b.out_channels as u64;
                    frames = out;
                }
            }
            BlockKind::SeparationHead => {
                conv(b.head_width(), b.in_channels, 1, frames);
                frames = b.feature_len.unwrap();
            }
        }
    }
    (params + norm_params, macs)
}

#[test]
fn closed_form_counts_match_enumeration() {
    for spec in [canonical_pipeline(), reference_pipeline()] {
        for m in [1024, 4096] {
            let report = spec.count_costs(m).unwrap();
            let (params, macs) = enumerate(&spec, m);
            assert_eq!(report.total().params, params);
            assert_eq!(report.total().macs, macs);
        }
    }
}

#[test]
fn generated_weights_match_param_count() {
    for spec in [canonical_pipeline(), reference_pipeline()] {
        let params = spec.count_costs(1024).unwrap().total().params;
        for seed in [0, 7] {
            assert_eq!(make_weights(&spec, seed).scalar_count() as u64, params);
        }
    }
}

#[test]
fn encoder_params_are_bias_free() {
    let report = canonical_pipeline().count_costs(163_840).unwrap();
    assert_eq!(report.encoder.params, 32 * 5);
    assert_eq!(report.per_block.len(), 10);
    let blocks: u64 = report.per_block.iter().map(|c| c.macs).sum();
    assert_eq!(blocks, report.total().macs);
}

#[test]
fn composed_factor_is_product_of_table_ratios() {
    // frame divisors of consecutive rows: m -> m/4 -> m/4 -> m/16 -> ... -> m/1024
    let divisors = [1u64, 4, 4, 16, 64, 256, 256, 1024, 1024, 1024];
    let product = divisors
        .windows(2)
        .map(|w| Rate::new(w[0], w[1]))
        .fold(Rate::new(1, 1), |a, r| a * r);
    assert_eq!(product, Rate::new(1, 1024));
    assert_eq!(canonical_pipeline().composed_factor(), product);
    assert_eq!(canonical_pipeline().composed_denominator(), 1024);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn params_fixed_and_macs_linear_in_m(k in 1usize..160, j in 1usize..160) {
        for spec in [canonical_pipeline(), reference_pipeline()] {
            let a = spec.count_costs(1024 * k).unwrap();
            let b = spec.count_costs(1024 * j).unwrap();
            prop_assert_eq!(a.total().params, b.total().params);
            prop_assert_eq!(a.total().macs * j as u64, b.total().macs * k as u64);
        }
    }

    #[test]
    fn element_count_is_m_times_rate(k in 1usize..160) {
        let m = 1024 * k;
        let spec = canonical_pipeline();
        let shapes = spec.infer_shape(m).unwrap();
        let rates = spec.filter_rates(m).unwrap();
        for (s, r) in shapes.iter().zip(&rates) {
            prop_assert_eq!(Rate::new(s.elements() as u64, 1), *r * Rate::new(m as u64, 1));
        }
    }

    #[test]
    fn rejects_lengths_off_the_composed_denominator(m in 1usize..20_000) {
        let ok = canonical_pipeline().infer_shape(m).is_ok();
        prop_assert_eq!(ok, m % 1024 == 0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn executed_shapes_agree_with_analysis(k in 1usize..=16, seed in any::<u64>()) {
        let m = 1024 * k;
        let spec = canonical_pipeline();
        let weights = make_weights(&spec, seed);
        let input = synth_mixture(4, m, seed).observation;
        let trace = run_traced(&spec, &weights, &input).unwrap();
        let shapes = spec.infer_shape(m).unwrap();
        let executed: Vec<_> = trace.iter().map(|t| t.shape()).collect();
        prop_assert_eq!(executed, shapes);
    }
}
