//! Anomaly scores, thresholding, rank AUC and synthetic source mixtures.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Tensor;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("AUC needs at least one normal and one anomalous sample")]
    DegenerateLabels,
    #[error("score csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Per-machine feature rows (`machines x dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet(Tensor);

impl FeatureSet {
    pub fn new(features: Tensor) -> Self {
        Self(features)
    }

    pub fn machines(&self) -> usize {
        self.0.shape().channels
    }

    pub fn dim(&self) -> usize {
        self.0.shape().frames
    }

    pub fn row(&self, i: usize) -> &[f32] {
        self.0.row(i)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    #[default]
    Euclidean,
    /// `1 - cos(a, b)`; zero vectors are at distance 1 from everything but themselves.
    Cosine,
}

impl Distance {
    pub fn between(self, a: &[f32], b: &[f32]) -> f64 {
        match self {
            Distance::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| {
                    let d = *x as f64 - *y as f64;
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
            Distance::Cosine => {
                let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
                for (x, y) in a.iter().zip(b) {
                    let (x, y) = (*x as f64, *y as f64);
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                if na == 0.0 || nb == 0.0 {
                    return if a == b { 0.0 } else { 1.0 };
                }
                (1.0 - dot / (na.sqrt() * nb.sqrt())).max(0.0)
            }
        }
    }
}

pub fn anomaly_score(f: &FeatureSet, reference: &FeatureSet) -> Result<Vec<f64>, ScoringError> {
    anomaly_score_with(f, reference, Distance::Euclidean)
}

pub fn anomaly_score_with(
    f: &FeatureSet,
    reference: &FeatureSet,
    distance: Distance,
) -> Result<Vec<f64>, ScoringError> {
    if f.tensor().shape() != reference.tensor().shape() {
        return Err(ScoringError::DimensionMismatch(format!(
            "features {} vs reference {}",
            f.tensor().shape(),
            reference.tensor().shape()
        )));
    }
    Ok((0..f.machines())
        .map(|i| distance.between(f.row(i), reference.row(i)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Anomalous,
}

/// Anomalous iff `score > threshold`.
pub fn threshold_decision(scores: &[f64], threshold: f64) -> Vec<Label> {
    scores
        .iter()
        .map(|&s| {
            if s > threshold {
                Label::Anomalous
            } else {
                Label::Normal
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub score: f64,
    pub label: Label,
}

impl LabeledScore {
    pub fn new(score: f64, label: Label) -> Self {
        Self { score, label }
    }
}

/// Mann-Whitney AUC with mid-ranks for ties: P(anomalous > normal) + P(tie) / 2.
pub fn auc(samples: &[LabeledScore]) -> Result<f64, ScoringError> {
    let positives = samples
        .iter()
        .filter(|s| s.label == Label::Anomalous)
        .count();
    let negatives = samples.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(ScoringError::DegenerateLabels);
    }
    let mut order: Vec<&LabeledScore> = samples.iter().collect();
    order.sort_by(|a, b| a.score.total_cmp(&b.score));

    // twice the rank sum keeps mid-ranks integral
    let mut twice_rank_sum: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && order[j + 1].score == order[i].score {
            j += 1;
        }
        // ranks i+1 ..= j+1 share (i + j + 2) / 2
        let twice_mid = (i + j + 2) as u64;
        let pos_in_group = order[i..=j]
            .iter()
            .filter(|s| s.label == Label::Anomalous)
            .count() as u64;
        twice_rank_sum += twice_mid * pos_in_group;
        i = j + 1;
    }
    let p = positives as u64;
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / 2.0 / (positives * negatives) as f64)
}

/// Unweighted mean of per-machine AUCs.
pub fn mauc(per_machine: &[Vec<LabeledScore>]) -> Result<f64, ScoringError> {
    if per_machine.is_empty() {
        return Err(ScoringError::DegenerateLabels);
    }
    let aucs = per_machine
        .iter()
        .map(|s| auc(s))
        .collect::<Result<Vec<_>, _>>()?;
    // shifted by the first value so identical machines average exactly
    let base = aucs[0];
    let spread: f64 = aucs.iter().map(|a| a - base).sum();
    Ok(base + spread / aucs.len() as f64)
}

pub fn write_scores_csv<W: Write>(out: W, samples: &[LabeledScore]) -> Result<(), ScoringError> {
    let mut w = csv::Writer::from_writer(out);
    for s in samples {
        w.serialize(s)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_scores_csv<R: Read>(input: R) -> Result<Vec<LabeledScore>, ScoringError> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| Ok(row?)).collect()
}

/// Synthetic sources and their mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub sources: Vec<Vec<f32>>,
    pub weights: Vec<f32>,
    pub observation: Tensor,
}

const TONES_PER_SOURCE: usize = 3;

/// `n` band-limited sources: source `k` is a sum of a few sinusoids whose
/// normalized frequencies fall in the k-th of `n` equal sub-bands of
/// `[0.01, 0.45]` cycles/sample, each with a slow amplitude envelope.
pub fn synth_sources(n: usize, m: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (0.01f64, 0.45f64);
    let width = (hi - lo) / n.max(1) as f64;
    (0..n)
        .map(|k| {
            let tones: Vec<(f64, f64, f64)> = (0..TONES_PER_SOURCE)
                .map(|_| {
                    let freq = lo + width * (k as f64 + rng.random::<f64>());
                    let amp = 0.2 + 0.8 * rng.random::<f64>();
                    let phase = std::f64::consts::TAU * rng.random::<f64>();
                    (freq, amp, phase)
                })
                .collect();
            let env_freq = 1.0 / (m.max(2) as f64) * (1.0 + 3.0 * rng.random::<f64>());
            let norm: f64 = tones.iter().map(|t| t.1).sum();
            (0..m)
                .map(|t| {
                    let t = t as f64;
                    let env = 0.75 + 0.25 * (std::f64::consts::TAU * env_freq * t).sin();
                    let v: f64 = tones
                        .iter()
                        .map(|(f, a, p)| a * (std::f64::consts::TAU * f * t + p).sin())
                        .sum();
                    (env * v / norm) as f32
                })
                .collect()
        })
        .collect()
}

/// Weighted sum of equal-length sources as a `1 x m` observation.
pub fn mix(sources: &[Vec<f32>], weights: &[f32]) -> Tensor {
    let m = sources.first().map_or(0, Vec::len);
    let data = (0..m)
        .map(|t| {
            let mut acc = 0.0f64;
            for (s, w) in sources.iter().zip(weights) {
                acc += *w as f64 * s[t] as f64;
            }
            acc as f32
        })
        .collect();
    Tensor::signal(data).expect("finite mixture")
}

/// Mixes [`synth_sources`] with standard-normal weights drawn from the same seed.
pub fn synth_mixture(n_sources: usize, m: usize, seed: u64) -> Mixture {
    let sources = synth_sources(n_sources, m, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
    let weights: Vec<f32> = (0..n_sources)
        .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
        .collect();
    let observation = mix(&sources, &weights);
    Mixture {
        sources,
        weights,
        observation,
    }
}

/// Adds a short tone burst outside the source's band, in place.
pub fn inject_anomaly(source: &mut [f32], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = (source.len() / 8).max(1);
    let start = rng.random_range(0..source.len().saturating_sub(len).max(1));
    let freq = 0.46 + 0.03 * rng.random::<f64>();
    for (i, v) in source[start..start + len].iter_mut().enumerate() {
        *v += (0.8 * (std::f64::consts::TAU * freq * i as f64).sin()) as f32;
    }
}
