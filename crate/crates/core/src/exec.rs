//! Deterministic forward execution with synthetic weights.
//!
//! All reductions run in a fixed order on `f32`, so executing a pipeline in
//! one go or piecewise (with serialization in between) yields identical bits.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::pipeline::{BlockKind, BlockSpec, PipelineError, PipelineSpec, TensorShape, UnitSpec};

pub const NORM_EPS: f32 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch {
        expected: TensorShape,
        found: TensorShape,
    },
    #[error("empty block range")]
    EmptyRange,
    #[error("block range {start}..{end} exceeds {len} blocks")]
    RangeOutOfBounds {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("tensor data length {len} does not match shape {shape}")]
    DataLength { shape: TensorShape, len: usize },
    #[error("tensor contains non-finite values")]
    NonFinite,
    #[error("weights do not match block {0}")]
    WeightMismatch(usize),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Rank-2 `channels x frames` array, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: TensorShape,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: TensorShape, data: Vec<f32>) -> Result<Self, ExecError> {
        if data.len() != shape.elements() {
            return Err(ExecError::DataLength {
                shape,
                len: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ExecError::NonFinite);
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: TensorShape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.elements()],
        }
    }

    /// Single-channel signal.
    pub fn signal(samples: Vec<f32>) -> Result<Self, ExecError> {
        Self::new(TensorShape::new(1, samples.len()), samples)
    }

    pub fn shape(&self) -> TensorShape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn row(&self, channel: usize) -> &[f32] {
        let f = self.shape.frames;
        &self.data[channel * f..(channel + 1) * f]
    }

    /// Bitwise equality, distinguishing `0.0` from `-0.0`.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    pub out_channels: usize,
    pub in_per_group: usize,
    pub kernel: usize,
    /// `out x in_per_group x kernel`, row-major.
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormWeights {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitWeights {
    pub expand: ConvWeights,
    pub expand_norm: NormWeights,
    pub paths: Vec<(ConvWeights, NormWeights)>,
    pub project: ConvWeights,
    pub project_norm: NormWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockWeights {
    Conv(ConvWeights),
    Stack(Vec<UnitWeights>),
    Head(ConvWeights),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    pub seed: u64,
    pub blocks: Vec<BlockWeights>,
}

impl ConvWeights {
    fn random(
        rng: &mut ChaCha8Rng,
        out_channels: usize,
        in_per_group: usize,
        kernel: usize,
    ) -> Self {
        let fan_in = (in_per_group * kernel) as f32;
        let scale = 1.0 / fan_in.sqrt();
        let data = (0..out_channels * in_per_group * kernel)
            .map(|_| (2.0 * rng.random::<f32>() - 1.0) * scale)
            .collect();
        Self {
            out_channels,
            in_per_group,
            kernel,
            data,
        }
    }

    fn len(&self) -> usize {
        self.data.len()
    }
}

impl NormWeights {
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
        }
    }

    fn len(&self) -> usize {
        self.gamma.len() + self.beta.len()
    }
}

impl UnitWeights {
    fn random(rng: &mut ChaCha8Rng, unit: &UnitSpec) -> Self {
        let per_path = unit.path_channels();
        Self {
            expand: ConvWeights::random(rng, unit.expanded, unit.in_channels, 1),
            expand_norm: NormWeights::identity(unit.expanded),
            paths: unit
                .kernel_lengths
                .iter()
                .map(|&k| {
                    (
                        ConvWeights::random(rng, per_path, 1, k),
                        NormWeights::identity(per_path),
                    )
                })
                .collect(),
            project: ConvWeights::random(rng, unit.out_channels, unit.expanded, 1),
            project_norm: NormWeights::identity(unit.out_channels),
        }
    }

    fn scalar_count(&self) -> usize {
        self.expand.len()
            + self.expand_norm.len()
            + self
                .paths
                .iter()
                .map(|(c, n)| c.len() + n.len())
                .sum::<usize>()
            + self.project.len()
            + self.project_norm.len()
    }
}

impl BlockWeights {
    pub fn scalar_count(&self) -> usize {
        match self {
            BlockWeights::Conv(c) | BlockWeights::Head(c) => c.len(),
            BlockWeights::Stack(units) => units.iter().map(UnitWeights::scalar_count).sum(),
        }
    }
}

/// Synthetic weights, uniform in `[-1, 1) / sqrt(fan_in)`, with identity
/// norm affines. One ChaCha8 stream per seed, consumed block by block.
pub fn make_weights(spec: &PipelineSpec, seed: u64) -> WeightSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks = spec
        .blocks
        .iter()
        .map(|block| match block.kind {
            BlockKind::Conv1D => BlockWeights::Conv(ConvWeights::random(
                &mut rng,
                block.out_channels,
                block.in_channels,
                block.kernel_lengths[0],
            )),
            BlockKind::RConvStack => BlockWeights::Stack(
                block
                    .units()
                    .iter()
                    .map(|u| UnitWeights::random(&mut rng, u))
                    .collect(),
            ),
            BlockKind::SeparationHead => BlockWeights::Head(ConvWeights::random(
                &mut rng,
                block.head_width(),
                block.in_channels,
                1,
            )),
        })
        .collect();
    WeightSet { seed, blocks }
}

impl WeightSet {
    pub fn scalar_count(&self) -> usize {
        self.blocks.iter().map(BlockWeights::scalar_count).sum()
    }
}

/// Raw kernels on channel-major buffers.
pub mod ops {
    use super::{ConvWeights, NormWeights, NORM_EPS};

    /// Output frames of a conv. Stride 1 keeps the length (same padding);
    /// larger strides use left-aligned windows and produce `ceil(frames / stride)`.
    pub fn out_frames(frames: usize, stride: usize) -> usize {
        frames.div_ceil(stride)
    }

    fn left_pad(kernel: usize, stride: usize) -> usize {
        if stride == 1 {
            (kernel - 1) / 2
        } else {
            0
        }
    }

    /// Output frame range `[lo, hi)` whose tap `t` reads inside the input.
    fn valid_frames(
        t: usize,
        pad: usize,
        stride: usize,
        frames: usize,
        out: usize,
    ) -> (usize, usize) {
        // input index = j * stride + t - pad, must lie in [0, frames)
        let lo = if t >= pad {
            0
        } else {
            (pad - t).div_ceil(stride)
        };
        let hi = if frames + pad > t {
            (frames + pad - t).div_ceil(stride).min(out)
        } else {
            0
        };
        (lo, hi)
    }

    fn accumulate_row(acc: &mut [f32], x: &[f32], w: f32, t: usize, pad: usize, stride: usize) {
        let (lo, hi) = valid_frames(t, pad, stride, x.len(), acc.len());
        if lo >= hi {
            return;
        }
        if stride == 1 {
            let off = lo + t - pad;
            for (a, v) in acc[lo..hi].iter_mut().zip(&x[off..off + (hi - lo)]) {
                *a += w * *v;
            }
        } else {
            for (j, a) in acc[lo..hi].iter_mut().enumerate() {
                *a += w * x[(lo + j) * stride + t - pad];
            }
        }
    }

    /// Dense conv over `in_channels x frames`. Each output accumulates over
    /// input channels, then taps, in ascending order.
    pub fn conv_dense(x: &[f32], frames: usize, w: &ConvWeights, stride: usize) -> Vec<f32> {
        let out = out_frames(frames, stride);
        let pad = left_pad(w.kernel, stride);
        let mut y = vec![0.0f32; w.out_channels * out];
        for o in 0..w.out_channels {
            let acc = &mut y[o * out..(o + 1) * out];
            for i in 0..w.in_per_group {
                let row = &x[i * frames..(i + 1) * frames];
                for t in 0..w.kernel {
                    let wv = w.data[(o * w.in_per_group + i) * w.kernel + t];
                    accumulate_row(acc, row, wv, t, pad, stride);
                }
            }
        }
        y
    }

    /// Depthwise conv: channel `c` of the output only reads channel `c`.
    pub fn conv_depthwise(x: &[f32], frames: usize, w: &ConvWeights, stride: usize) -> Vec<f32> {
        debug_assert_eq!(w.in_per_group, 1);
        let out = out_frames(frames, stride);
        let pad = left_pad(w.kernel, stride);
        let mut y = vec![0.0f32; w.out_channels * out];
        for c in 0..w.out_channels {
            let acc = &mut y[c * out..(c + 1) * out];
            let row = &x[c * frames..(c + 1) * frames];
            for t in 0..w.kernel {
                accumulate_row(acc, row, w.data[c * w.kernel + t], t, pad, stride);
            }
        }
        y
    }

    pub fn relu(x: &mut [f32]) {
        for v in x.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }

    /// Normalizes across channels independently at every frame.
    pub fn layer_norm(x: &mut [f32], channels: usize, frames: usize, norm: &NormWeights) {
        let n = channels as f32;
        let mut mean = vec![0.0f32; frames];
        for c in 0..channels {
            for (m, v) in mean.iter_mut().zip(&x[c * frames..(c + 1) * frames]) {
                *m += *v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut var = vec![0.0f32; frames];
        for c in 0..channels {
            for ((s, v), m) in var
                .iter_mut()
                .zip(&x[c * frames..(c + 1) * frames])
                .zip(&mean)
            {
                let d = *v - *m;
                *s += d * d;
            }
        }
        let inv: Vec<f32> = var
            .iter()
            .map(|s| 1.0 / (*s / n + NORM_EPS).sqrt())
            .collect();
        for c in 0..channels {
            let (g, b) = (norm.gamma[c], norm.beta[c]);
            for ((v, m), k) in x[c * frames..(c + 1) * frames]
                .iter_mut()
                .zip(&mean)
                .zip(&inv)
            {
                *v = g * ((*v - *m) * *k) + b;
            }
        }
    }

    /// Mean over the full temporal extent of every channel.
    pub fn temporal_mean(x: &[f32], channels: usize, frames: usize) -> Vec<f32> {
        (0..channels)
            .map(|c| {
                let mut s = 0.0f32;
                for v in &x[c * frames..(c + 1) * frames] {
                    s += *v;
                }
                s / frames as f32
            })
            .collect()
    }
}

fn conv_relu_norm(
    x: &[f32],
    frames: usize,
    w: &ConvWeights,
    norm: &NormWeights,
    stride: usize,
    depthwise: bool,
) -> Vec<f32> {
    let mut y = if depthwise {
        ops::conv_depthwise(x, frames, w, stride)
    } else {
        ops::conv_dense(x, frames, w, stride)
    };
    ops::relu(&mut y);
    ops::layer_norm(
        &mut y,
        w.out_channels,
        ops::out_frames(frames, stride),
        norm,
    );
    y
}

fn run_unit(unit: &UnitSpec, w: &UnitWeights, x: &[f32], frames: usize) -> Vec<f32> {
    let expanded = conv_relu_norm(x, frames, &w.expand, &w.expand_norm, 1, false);
    let out_frames = ops::out_frames(frames, unit.stride);
    let per_path = unit.path_channels();
    let mut concat = Vec::with_capacity(unit.expanded * out_frames);
    for (p, (conv, norm)) in w.paths.iter().enumerate() {
        let slice = &expanded[p * per_path * frames..(p + 1) * per_path * frames];
        concat.extend(conv_relu_norm(slice, frames, conv, norm, unit.stride, true));
    }
    let mut y = conv_relu_norm(&concat, out_frames, &w.project, &w.project_norm, 1, false);
    if unit.residual() {
        for (a, b) in y.iter_mut().zip(x) {
            *a += *b;
        }
    }
    y
}

/// Runs a single block on `input`.
pub fn run_block(
    block: &BlockSpec,
    weights: &BlockWeights,
    input: &Tensor,
) -> Result<Tensor, ExecError> {
    let in_shape = input.shape();
    let out_shape = block.output_shape(in_shape).map_err(|e| match e {
        PipelineError::ChannelMismatch { expected, .. } => ExecError::ShapeMismatch {
            expected: TensorShape::new(expected, in_shape.frames),
            found: in_shape,
        },
        other => ExecError::Pipeline(other),
    })?;
    let frames = in_shape.frames;
    let data = match (block.kind, weights) {
        (BlockKind::Conv1D, BlockWeights::Conv(w)) => {
            let mut y = ops::conv_dense(input.data(), frames, w, block.stride);
            ops::relu(&mut y);
            y
        }
        (BlockKind::RConvStack, BlockWeights::Stack(units)) => {
            let specs = block.units();
            if specs.len() != units.len() {
                return Err(ExecError::WeightMismatch(block.id));
            }
            let mut x = input.data().to_vec();
            let mut f = frames;
            for (spec, w) in specs.iter().zip(units) {
                x = run_unit(spec, w, &x, f);
                f /= spec.stride;
            }
            x
        }
        (BlockKind::SeparationHead, BlockWeights::Head(w)) => {
            let projected = ops::conv_dense(input.data(), frames, w, 1);
            ops::temporal_mean(&projected, w.out_channels, frames)
        }
        _ => return Err(ExecError::WeightMismatch(block.id)),
    };
    Tensor::new(out_shape, data)
}

/// Runs blocks `range` in order, starting from `input`.
pub fn run_pipeline(
    spec: &PipelineSpec,
    weights: &WeightSet,
    input: &Tensor,
    range: Range<usize>,
) -> Result<Tensor, ExecError> {
    if range.is_empty() {
        return Err(ExecError::EmptyRange);
    }
    if range.end > spec.blocks.len() || weights.blocks.len() != spec.blocks.len() {
        return Err(ExecError::RangeOutOfBounds {
            start: range.start,
            end: range.end,
            len: spec.blocks.len(),
        });
    }
    let mut x = run_block(
        &spec.blocks[range.start],
        &weights.blocks[range.start],
        input,
    )?;
    for i in range.start + 1..range.end {
        x = run_block(&spec.blocks[i], &weights.blocks[i], &x)?;
    }
    Ok(x)
}

/// Whole-pipeline run that also returns every intermediate output.
pub fn run_traced(
    spec: &PipelineSpec,
    weights: &WeightSet,
    input: &Tensor,
) -> Result<Vec<Tensor>, ExecError> {
    spec.check_input_len(input.shape().frames)?;
    let mut outputs: Vec<Tensor> = Vec::with_capacity(spec.blocks.len());
    for (i, block) in spec.blocks.iter().enumerate() {
        let x = outputs.last().unwrap_or(input);
        let y = run_block(block, &weights.blocks[i], x)?;
        outputs.push(y);
    }
    Ok(outputs)
}
