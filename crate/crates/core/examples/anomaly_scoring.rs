//! Scores features of normal and anomalous mixtures against a reference
//! taken from a normal mixture, then ranks them with per-machine AUC.
//!
//! The weights are untrained, so the AUC here only shows the plumbing.
//!
//! ```bash
//! cargo run --release -p innet --example anomaly_scoring
//! ```

use innet::exec::{make_weights, run_pipeline, Tensor};
use innet::pipeline::canonical_pipeline;
use innet::scoring::{
    anomaly_score, inject_anomaly, mauc, mix, synth_mixture, threshold_decision, FeatureSet, Label,
    LabeledScore,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = 16_384;
    let spec = canonical_pipeline();
    let weights = make_weights(&spec, 3);
    let extract = |x: &Tensor| run_pipeline(&spec, &weights, x, 0..spec.len()).map(FeatureSet::new);

    let normal = synth_mixture(4, m, 0);
    let reference = extract(&normal.observation)?;

    let mut per_machine: Vec<Vec<LabeledScore>> = vec![Vec::new(); 4];
    for trial in 0..24u64 {
        let mut sources = normal.sources.clone();
        let anomalous = trial % 2 == 1;
        if anomalous {
            inject_anomaly(&mut sources[(trial / 2 % 4) as usize], trial);
        }
        // small level changes keep normal trials from being identical
        let weights: Vec<f32> = normal
            .weights
            .iter()
            .map(|w| w * (1.0 + 0.01 * trial as f32))
            .collect();
        let observation = mix(&sources, &weights);
        let scores = anomaly_score(&extract(&observation)?, &reference)?;
        let label = if anomalous {
            Label::Anomalous
        } else {
            Label::Normal
        };
        for (machine, s) in scores.iter().enumerate() {
            per_machine[machine].push(LabeledScore::new(*s, label));
        }
        if trial < 4 {
            println!(
                "trial {trial} ({label:?}): scores {scores:.4?} -> {:?}",
                threshold_decision(&scores, 0.6)
            );
        }
    }
    println!("mAUC over 4 machines: {:.3}", mauc(&per_machine)?);
    Ok(())
}
