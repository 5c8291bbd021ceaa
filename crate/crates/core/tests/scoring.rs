//! Anomaly scoring and AUC against brute-force oracles.

use innet::exec::Tensor;
use innet::pipeline::TensorShape;
use innet::scoring::{
    anomaly_score, auc, mauc, mix, read_scores_csv, synth_mixture, synth_sources,
    threshold_decision, write_scores_csv, FeatureSet, Label, LabeledScore,
};
use proptest::prelude::*;

fn features(rows: usize, dim: usize, data: Vec<f32>) -> FeatureSet {
    FeatureSet::new(Tensor::new(TensorShape::new(rows, dim), data).unwrap())
}

fn labeled() -> impl Strategy<Value = Vec<LabeledScore>> {
    prop::collection::vec((0i32..6, prop::bool::ANY), 2..=12)
        .prop_filter("both labels present", |v| {
            v.iter().any(|s| s.1) && v.iter().any(|s| !s.1)
        })
        .prop_map(|v| {
            v.into_iter()
                .map(|(s, a)| {
                    LabeledScore::new(s as f64, if a { Label::Anomalous } else { Label::Normal })
                })
                .collect()
        })
}

fn pair_oracle(samples: &[LabeledScore]) -> f64 {
    let pos: Vec<f64> = samples
        .iter()
        .filter(|s| s.label == Label::Anomalous)
        .map(|s| s.score)
        .collect();
    let neg: Vec<f64> = samples
        .iter()
        .filter(|s| s.label == Label::Normal)
        .map(|s| s.score)
        .collect();
    let mut twice = 0u64;
    for a in &pos {
        for n in &neg {
            twice += if a > n { 2 } else { u64::from(a == n) };
        }
    }
    twice as f64 / 2.0 / (pos.len() * neg.len()) as f64
}

proptest! {
    #[test]
    fn distance_matches_explicit_sum(data in prop::collection::vec(-50.0f32..50.0, 2 * 4 * 16)) {
        let (a, b) = data.split_at(4 * 16);
        let f = features(4, 16, a.to_vec());
        let r = features(4, 16, b.to_vec());
        let scores = anomaly_score(&f, &r).unwrap();
        for (i, s) in scores.iter().enumerate() {
            let mut sum = 0.0f64;
            for j in 0..16 {
                let d = a[i * 16 + j] as f64 - b[i * 16 + j] as f64;
                sum += d * d;
            }
            prop_assert!((s - sum.sqrt()).abs() <= 1e-9 * (1.0 + sum.sqrt()));
            prop_assert!(*s >= 0.0);
        }
        prop_assert_eq!(scores, anomaly_score(&r, &f).unwrap());
    }

    #[test]
    fn auc_equals_pair_counting(samples in labeled()) {
        prop_assert_eq!(auc(&samples).unwrap(), pair_oracle(&samples));
    }

    #[test]
    fn auc_ignores_strictly_increasing_maps(samples in labeled(), a in 0.1f64..4.0, b in -5.0f64..5.0) {
        let mapped: Vec<LabeledScore> = samples
            .iter()
            .map(|s| LabeledScore::new((a * s.score).exp() + b, s.label))
            .collect();
        prop_assert_eq!(auc(&samples).unwrap(), auc(&mapped).unwrap());
    }

    #[test]
    fn mauc_of_identical_lists_is_their_auc(samples in labeled(), machines in 1usize..6) {
        let single = auc(&samples).unwrap();
        prop_assert_eq!(mauc(&vec![samples; machines]).unwrap(), single);
    }
}

#[test]
fn perfect_and_chance_ranking() {
    let mut perfect: Vec<LabeledScore> = (0..10)
        .map(|i| LabeledScore::new(i as f64, Label::Normal))
        .collect();
    perfect.extend((10..15).map(|i| LabeledScore::new(i as f64, Label::Anomalous)));
    assert_eq!(auc(&perfect).unwrap(), 1.0);

    // labels drawn independently of scores
    let mut state = 0x2545_F491_4F6C_DD1Du64;
    let random: Vec<LabeledScore> = (0..20_000)
        .map(|i| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            LabeledScore::new(
                i as f64,
                if state & 1 == 1 {
                    Label::Anomalous
                } else {
                    Label::Normal
                },
            )
        })
        .collect();
    assert!((auc(&random).unwrap() - 0.5).abs() < 0.02);
}

#[test]
fn threshold_is_strict() {
    assert_eq!(threshold_decision(&[0.0; 4], 0.0), vec![Label::Normal; 4]);
    assert_eq!(
        threshold_decision(&[0.0, 3.0], -1.0),
        vec![Label::Anomalous; 2]
    );
    assert_eq!(
        threshold_decision(&[0.5, 2.0], 1.0),
        vec![Label::Normal, Label::Anomalous]
    );
}

#[test]
fn mixture_linearity() {
    let sources = synth_sources(3, 512, 4);
    assert!(mix(&sources, &[0.0; 3]).data().iter().all(|v| *v == 0.0));
    let one = synth_sources(1, 512, 9);
    assert_eq!(mix(&one, &[1.0]).data(), &one[0][..]);
    let a = synth_mixture(4, 2048, 77);
    let b = synth_mixture(4, 2048, 77);
    assert!(a.observation.bit_eq(&b.observation));
    assert_eq!(a.observation.shape(), TensorShape::new(1, 2048));
    assert!(!synth_mixture(4, 2048, 78)
        .observation
        .bit_eq(&a.observation));
}

#[test]
fn labeled_scores_survive_csv() {
    let samples = vec![
        LabeledScore::new(0.25, Label::Normal),
        LabeledScore::new(3.5, Label::Anomalous),
        LabeledScore::new(1e-7, Label::Normal),
    ];
    let mut buf = Vec::new();
    write_scores_csv(&mut buf, &samples).unwrap();
    assert!(String::from_utf8_lossy(&buf).starts_with("score,label\n"));
    assert_eq!(read_scores_csv(&buf[..]).unwrap(), samples);
}
