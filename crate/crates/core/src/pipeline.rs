//! Declarative description of the abstraction pipeline.
//!
//! A [`PipelineSpec`] is an ordered list of [`BlockSpec`]s. Everything in this
//! module is pure shape arithmetic: shape inference, filter rates and the
//! parameter / MAC cost model. Temporal factors are kept as exact rationals.

use std::fmt;
use std::path::Path;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact rational used for filter rates and temporal factors.
pub type Rate = Ratio<u64>;

/// Strides a block may apply to the temporal axis.
pub const ALLOWED_STRIDES: [usize; 3] = [1, 4, 16];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PipelineError {
    #[error(
        "input length {m} is not divisible by the composed temporal denominator {denominator}"
    )]
    IndivisibleInput { m: usize, denominator: usize },
    #[error("block {index}: {reason}")]
    InvalidBlock { index: usize, reason: String },
    #[error("block {index}: expected {expected} input channels, found {found}")]
    ChannelMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid pipeline: {0}")]
    Invalid(String),
    #[error("pipeline config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockKind {
    /// Plain (grouped = 1) 1-D convolution followed by ReLU.
    Conv1D,
    /// Stack of dual-path depthwise residual units.
    RConvStack,
    /// 1x1 projection, full temporal average and reshape to per-machine features.
    SeparationHead,
}

/// Which module of the model a block belongs to, for cost totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModuleGroup {
    Encoder,
    Abstraction,
    Decoder,
}

fn one() -> usize {
    1
}

fn default_expansion() -> usize {
    2
}

fn default_element_bytes() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub id: usize,
    pub name: String,
    pub kind: BlockKind,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Number of stacked residual units; 1 for the other kinds.
    #[serde(default = "one")]
    pub repeat: usize,
    pub kernel_lengths: Vec<usize>,
    #[serde(default = "one")]
    pub stride: usize,
    /// Channel expansion of the first 1x1 conv inside a residual unit.
    #[serde(default = "default_expansion")]
    pub expansion: usize,
    /// Per-machine feature length produced by a separation head.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_len: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorShape {
    pub channels: usize,
    pub frames: usize,
}

impl TensorShape {
    pub fn new(channels: usize, frames: usize) -> Self {
        Self { channels, frames }
    }

    pub fn elements(&self) -> usize {
        self.channels * self.frames
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.channels, self.frames)
    }
}

/// One residual unit inside an [`BlockKind::RConvStack`], fully resolved.
///
/// Layout: 1x1 expansion to `expanded` channels, one depthwise path per
/// kernel length over an equal slice of the expanded channels, concat,
/// 1x1 projection to `out_channels`. Every conv is followed by ReLU and a
/// channel-wise layer norm. The residual add applies only when the unit
/// preserves both channel count and frame count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub expanded: usize,
    pub stride: usize,
    pub kernel_lengths: Vec<usize>,
}

impl UnitSpec {
    pub fn path_channels(&self) -> usize {
        self.expanded / self.kernel_lengths.len()
    }

    pub fn residual(&self) -> bool {
        self.stride == 1 && self.in_channels == self.out_channels
    }
}

impl BlockSpec {
    pub fn conv(
        id: usize,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
    ) -> Self {
        Self {
            id,
            name: name.to_string(),
            kind: BlockKind::Conv1D,
            in_channels: in_ch,
            out_channels: out_ch,
            repeat: 1,
            kernel_lengths: vec![kernel],
            stride,
            expansion: default_expansion(),
            feature_len: None,
        }
    }

    pub fn rconv(
        id: usize,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        repeat: usize,
        stride: usize,
    ) -> Self {
        Self {
            id,
            name: name.to_string(),
            kind: BlockKind::RConvStack,
            in_channels: in_ch,
            out_channels: out_ch,
            repeat,
            kernel_lengths: vec![7, 5],
            stride,
            expansion: default_expansion(),
            feature_len: None,
        }
    }

    pub fn separation(
        id: usize,
        name: &str,
        in_ch: usize,
        machines: usize,
        feature_len: usize,
    ) -> Self {
        Self {
            id,
            name: name.to_string(),
            kind: BlockKind::SeparationHead,
            in_channels: in_ch,
            out_channels: machines,
            repeat: 1,
            kernel_lengths: vec![1],
            stride: 1,
            expansion: default_expansion(),
            feature_len: Some(feature_len),
        }
    }

    /// Output frames = input frames x factor. `None` for a separation head,
    /// whose output length does not depend on the input length.
    pub fn temporal_factor(&self) -> Option<Rate> {
        match self.kind {
            BlockKind::SeparationHead => None,
            _ => Some(Rate::new(1, self.stride as u64)),
        }
    }

    /// Residual units of a stack; the stride lives in the first unit only.
    pub fn units(&self) -> Vec<UnitSpec> {
        if self.kind != BlockKind::RConvStack {
            return Vec::new();
        }
        (0..self.repeat)
            .map(|u| {
                let in_channels = if u == 0 {
                    self.in_channels
                } else {
                    self.out_channels
                };
                UnitSpec {
                    in_channels,
                    out_channels: self.out_channels,
                    expanded: self.expansion * in_channels,
                    stride: if u == 0 { self.stride } else { 1 },
                    kernel_lengths: self.kernel_lengths.clone(),
                }
            })
            .collect()
    }

    /// Channel count of the 1x1 projection in a separation head.
    pub fn head_width(&self) -> usize {
        self.out_channels * self.feature_len.unwrap_or(0)
    }

    pub fn output_shape(&self, input: TensorShape) -> Result<TensorShape, PipelineError> {
        if input.channels != self.in_channels {
            return Err(PipelineError::ChannelMismatch {
                index: self.id,
                expected: self.in_channels,
                found: input.channels,
            });
        }
        match self.kind {
            BlockKind::SeparationHead => Ok(TensorShape::new(
                self.out_channels,
                self.feature_len.unwrap_or(0),
            )),
            _ => {
                if !input.frames.is_multiple_of(self.stride) {
                    return Err(PipelineError::IndivisibleInput {
                        m: input.frames,
                        denominator: self.stride,
                    });
                }
                Ok(TensorShape::new(
                    self.out_channels,
                    input.frames / self.stride,
                ))
            }
        }
    }

    fn validate(&self, index: usize) -> Result<(), PipelineError> {
        let bad = |reason: String| Err(PipelineError::InvalidBlock { index, reason });
        if self.id != index {
            return bad(format!("id {} does not match its position", self.id));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad("channel counts must be at least 1".into());
        }
        if self.kernel_lengths.is_empty() || self.kernel_lengths.contains(&0) {
            return bad("kernel_lengths must be non-empty and positive".into());
        }
        if !ALLOWED_STRIDES.contains(&self.stride) {
            return bad(format!(
                "stride {} not in {:?}",
                self.stride, ALLOWED_STRIDES
            ));
        }
        match self.kind {
            BlockKind::Conv1D => {
                if self.repeat != 1 || self.kernel_lengths.len() != 1 {
                    return bad("Conv1D takes repeat = 1 and a single kernel length".into());
                }
            }
            BlockKind::RConvStack => {
                if self.repeat == 0 {
                    return bad("RConvStack needs repeat >= 1".into());
                }
                if self.expansion == 0 {
                    return bad("expansion must be at least 1".into());
                }
                for unit in self.units() {
                    if unit.expanded % unit.kernel_lengths.len() != 0 {
                        return bad(format!(
                            "{} expanded channels cannot be split across {} paths",
                            unit.expanded,
                            unit.kernel_lengths.len()
                        ));
                    }
                }
            }
            BlockKind::SeparationHead => {
                if self.repeat != 1 || self.stride != 1 || self.kernel_lengths != [1] {
                    return bad("SeparationHead is a single 1x1 stride-1 projection".into());
                }
                match self.feature_len {
                    Some(n) if n > 0 => {}
                    _ => return bad("SeparationHead needs feature_len >= 1".into()),
                }
            }
        }
        if self.kind != BlockKind::SeparationHead && self.feature_len.is_some() {
            return bad("feature_len only applies to SeparationHead".into());
        }
        Ok(())
    }

    pub fn group(&self, index: usize) -> ModuleGroup {
        match self.kind {
            BlockKind::SeparationHead => ModuleGroup::Decoder,
            _ if index == 0 => ModuleGroup::Encoder,
            _ => ModuleGroup::Abstraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    pub blocks: Vec<BlockSpec>,
    #[serde(default = "one")]
    pub input_channels: usize,
    /// Bytes per tensor element on the wire.
    #[serde(default = "default_element_bytes")]
    pub element_bytes: usize,
}

/// Encoder kernel length of the canonical preset.
pub const ENCODER_KERNEL: usize = 5;

/// The ten-block lightweight preset.
pub fn canonical_pipeline() -> PipelineSpec {
    let blocks = vec![
        BlockSpec::conv(0, "Encoder", 1, 32, ENCODER_KERNEL, 4),
        BlockSpec::rconv(1, "Layer 1", 32, 16, 1, 1),
        BlockSpec::rconv(2, "Layer 2", 16, 24, 2, 4),
        BlockSpec::rconv(3, "Layer 3", 24, 32, 3, 4),
        BlockSpec::rconv(4, "Layer 4", 32, 64, 4, 4),
        BlockSpec::rconv(5, "Layer 5", 64, 96, 3, 1),
        BlockSpec::rconv(6, "Layer 6", 96, 160, 3, 4),
        BlockSpec::rconv(7, "Layer 7", 160, 320, 1, 1),
        BlockSpec::conv(8, "Layer 8", 320, 1280, 1, 1),
        BlockSpec::separation(9, "Separation", 1280, 4, 256),
    ];
    PipelineSpec {
        blocks,
        input_channels: 1,
        element_bytes: 4,
    }
}

/// Heavier baseline: the canonical preset with every channel width doubled
/// (the single input channel excepted), including the separation features.
pub fn reference_pipeline() -> PipelineSpec {
    canonical_pipeline().widened(2)
}

impl PipelineSpec {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let spec: Self =
            serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pipeline spec serializes")
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block_index(&self, name: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.name == name)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.input_channels == 0 {
            return Err(PipelineError::Invalid(
                "input_channels must be at least 1".into(),
            ));
        }
        if self.element_bytes == 0 {
            return Err(PipelineError::Invalid(
                "element_bytes must be at least 1".into(),
            ));
        }
        let mut channels = self.input_channels;
        for (i, block) in self.blocks.iter().enumerate() {
            block.validate(i)?;
            if block.in_channels != channels {
                return Err(PipelineError::ChannelMismatch {
                    index: i,
                    expected: channels,
                    found: block.in_channels,
                });
            }
            if block.kind == BlockKind::SeparationHead && i + 1 != self.blocks.len() {
                return Err(PipelineError::InvalidBlock {
                    index: i,
                    reason: "SeparationHead must be the last block".into(),
                });
            }
            channels = block.out_channels;
        }
        Ok(())
    }

    /// Product of all temporal factors of blocks that have one.
    pub fn composed_factor(&self) -> Rate {
        self.blocks
            .iter()
            .filter_map(BlockSpec::temporal_factor)
            .fold(Rate::from_integer(1), |acc, f| acc * f)
    }

    /// Input lengths must be a multiple of this.
    pub fn composed_denominator(&self) -> usize {
        *self.composed_factor().denom() as usize
    }

    pub fn check_input_len(&self, m: usize) -> Result<(), PipelineError> {
        let denominator = self.composed_denominator();
        if m == 0 || !m.is_multiple_of(denominator) {
            return Err(PipelineError::IndivisibleInput { m, denominator });
        }
        Ok(())
    }

    pub fn input_shape(&self, m: usize) -> TensorShape {
        TensorShape::new(self.input_channels, m)
    }

    /// Output shape after every block, in order.
    pub fn infer_shape(&self, m: usize) -> Result<Vec<TensorShape>, PipelineError> {
        self.check_input_len(m)?;
        let mut shape = self.input_shape(m);
        self.blocks
            .iter()
            .map(|block| {
                shape = block.output_shape(shape)?;
                Ok(shape)
            })
            .collect()
    }

    /// Element-count ratio of each block output to the system input.
    pub fn filter_rates(&self, m: usize) -> Result<Vec<Rate>, PipelineError> {
        let input = self.input_shape(m).elements() as u64;
        Ok(self
            .infer_shape(m)?
            .iter()
            .map(|s| Rate::new(s.elements() as u64, input))
            .collect())
    }

    /// Copy with every channel width multiplied by `factor`.
    pub fn widened(&self, factor: usize) -> PipelineSpec {
        let mut out = self.clone();
        for (i, block) in out.blocks.iter_mut().enumerate() {
            if i > 0 {
                block.in_channels *= factor;
            }
            match block.kind {
                BlockKind::SeparationHead => {
                    block.feature_len = block.feature_len.map(|n| n * factor);
                }
                _ => block.out_channels *= factor,
            }
        }
        out
    }

    pub fn count_costs(&self, m: usize) -> Result<CostReport, PipelineError> {
        let shapes = self.infer_shape(m)?;
        let mut input = self.input_shape(m);
        let mut report = CostReport::default();
        for (i, (block, &output)) in self.blocks.iter().zip(&shapes).enumerate() {
            let cost = block_cost(block, input, output);
            report.add(block.group(i), cost);
            report.per_block.push(cost);
            input = output;
        }
        Ok(report)
    }
}

/// Parameters and multiply-accumulates of one block (or a group of blocks).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockCost {
    pub params: u64,
    pub macs: u64,
}

impl std::ops::AddAssign for BlockCost {
    fn add_assign(&mut self, rhs: Self) {
        self.params += rhs.params;
        self.macs += rhs.macs;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub per_block: Vec<BlockCost>,
    pub encoder: BlockCost,
    pub abstraction: BlockCost,
    pub decoder: BlockCost,
}

impl CostReport {
    fn add(&mut self, group: ModuleGroup, cost: BlockCost) {
        match group {
            ModuleGroup::Encoder => self.encoder += cost,
            ModuleGroup::Abstraction => self.abstraction += cost,
            ModuleGroup::Decoder => self.decoder += cost,
        }
    }

    pub fn total(&self) -> BlockCost {
        let mut t = self.encoder;
        t += self.abstraction;
        t += self.decoder;
        t
    }

    /// Summed cost over a contiguous block range.
    pub fn range(&self, blocks: std::ops::RangeInclusive<usize>) -> BlockCost {
        let mut t = BlockCost::default();
        for c in &self.per_block[blocks] {
            t += *c;
        }
        t
    }
}

// conv: out x in/groups x kernel weights, one MAC per weight per output frame
fn conv_cost(out_ch: usize, in_per_group: usize, kernel: usize, out_frames: usize) -> BlockCost {
    let params = (out_ch * in_per_group * kernel) as u64;
    BlockCost {
        params,
        macs: params * out_frames as u64,
    }
}

fn norm_params(channels: usize) -> BlockCost {
    BlockCost {
        params: 2 * channels as u64,
        macs: 0,
    }
}

pub(crate) fn unit_cost(unit: &UnitSpec, in_frames: usize) -> BlockCost {
    let out_frames = in_frames / unit.stride;
    let mut c = conv_cost(unit.expanded, unit.in_channels, 1, in_frames);
    c += norm_params(unit.expanded);
    let per_path = unit.path_channels();
    for &k in &unit.kernel_lengths {
        c += conv_cost(per_path, 1, k, out_frames);
        c += norm_params(per_path);
    }
    c += conv_cost(unit.out_channels, unit.expanded, 1, out_frames);
    c += norm_params(unit.out_channels);
    c
}

fn block_cost(block: &BlockSpec, input: TensorShape, output: TensorShape) -> BlockCost {
    match block.kind {
        BlockKind::Conv1D => conv_cost(
            block.out_channels,
            block.in_channels,
            block.kernel_lengths[0],
            output.frames,
        ),
        BlockKind::RConvStack => {
            let mut frames = input.frames;
            let mut total = BlockCost::default();
            for unit in block.units() {
                total += unit_cost(&unit, frames);
                frames /= unit.stride;
            }
            total
        }
        // projection runs per frame before the temporal mean
        BlockKind::SeparationHead => {
            conv_cost(block.head_width(), block.in_channels, 1, input.frames)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: u64, d: u64) -> Rate {
        Rate::new(n, d)
    }

    #[test]
    fn canonical_has_ten_blocks() {
        let spec = canonical_pipeline();
        assert_eq!(spec.len(), 10);
        spec.validate().unwrap();
    }

    #[test]
    fn layer4_shape() {
        let m = 163_840;
        let spec = canonical_pipeline();
        let shapes = spec.infer_shape(m).unwrap();
        let l4 = spec.block_index("Layer 4").unwrap();
        assert_eq!(shapes[l4 - 1], TensorShape::new(32, m / 64));
        assert_eq!(shapes[l4], TensorShape::new(64, m / 256));
    }

    #[test]
    fn composed_factor_is_one_over_1024() {
        let spec = canonical_pipeline();
        let product: Rate = spec.blocks[..9]
            .iter()
            .map(|b| b.temporal_factor().unwrap())
            .product();
        assert_eq!(product, r(1, 1024));
        assert_eq!(spec.composed_denominator(), 1024);
    }

    #[test]
    fn encoder_output_at_1024() {
        let shapes = canonical_pipeline().infer_shape(1024).unwrap();
        assert_eq!(shapes[0], TensorShape::new(32, 256));
    }

    #[test]
    fn indivisible_input_rejected() {
        let spec = canonical_pipeline();
        assert_eq!(
            spec.infer_shape(1000),
            Err(PipelineError::IndivisibleInput {
                m: 1000,
                denominator: 1024
            })
        );
        assert!(spec.infer_shape(160_000).is_err());
        assert!(spec.filter_rates(0).is_err());
    }

    #[test]
    fn rates_at_163840() {
        let m = 163_840;
        let shapes = canonical_pipeline().infer_shape(m).unwrap();
        assert_eq!(shapes[8], TensorShape::new(1280, 160));
        assert_eq!(shapes[9], TensorShape::new(4, 256));
        let rates = canonical_pipeline().filter_rates(m).unwrap();
        let expected = [
            r(8, 1),
            r(4, 1),
            r(3, 2),
            r(1, 2),
            r(1, 4),
            r(3, 8),
            r(5, 32),
            r(5, 16),
            r(5, 4),
            r(1024, 163_840),
        ];
        assert_eq!(rates, expected);
    }

    #[test]
    fn encoder_params_and_mac_share() {
        let costs = canonical_pipeline().count_costs(163_840).unwrap();
        assert_eq!(costs.encoder.params, 32 * ENCODER_KERNEL as u64);
        let share = costs.encoder.macs as f64 / costs.total().macs as f64;
        assert!(share < 0.01, "encoder share {share}");
    }

    #[test]
    fn empty_pipeline_costs_nothing() {
        let spec = PipelineSpec {
            blocks: vec![],
            input_channels: 1,
            element_bytes: 4,
        };
        let costs = spec.count_costs(17).unwrap();
        assert!(costs.per_block.is_empty());
        assert_eq!(costs.total(), BlockCost::default());
    }

    #[test]
    fn params_m_invariant_macs_linear() {
        let spec = canonical_pipeline();
        let a = spec.count_costs(4096).unwrap();
        let b = spec.count_costs(3 * 4096).unwrap();
        assert_eq!(a.total().params, b.total().params);
        for (x, y) in a.per_block.iter().zip(&b.per_block) {
            assert_eq!(x.params, y.params);
            assert_eq!(3 * x.macs, y.macs);
        }
    }

    #[test]
    fn totals_sum_members() {
        let c = canonical_pipeline().count_costs(8192).unwrap();
        let mut sum = BlockCost::default();
        for b in &c.per_block {
            sum += *b;
        }
        assert_eq!(sum, c.total());
        assert_eq!(c.decoder, c.per_block[9]);
        assert_eq!(c.encoder, c.per_block[0]);
    }

    #[test]
    fn two_strict_minima() {
        let rates = canonical_pipeline().filter_rates(163_840).unwrap();
        let minima: Vec<usize> = (1..8)
            .filter(|&i| rates[i - 1] > rates[i] && rates[i] < rates[i + 1])
            .collect();
        assert_eq!(minima, vec![4, 6]);
    }

    #[test]
    fn config_rejects_unknown_key() {
        let mut v: serde_json::Value =
            serde_json::from_str(&canonical_pipeline().to_json()).unwrap();
        v["blocks"][3]["dilation"] = serde_json::json!(2);
        let err = PipelineSpec::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("dilation"), "{err}");
    }

    #[test]
    fn config_round_trips_canonical() {
        let spec = canonical_pipeline();
        assert_eq!(PipelineSpec::from_json(&spec.to_json()).unwrap(), spec);
    }

    #[test]
    fn channel_chain_is_checked() {
        let mut spec = canonical_pipeline();
        spec.blocks[3].in_channels = 25;
        assert!(matches!(
            spec.validate(),
            Err(PipelineError::ChannelMismatch { index: 3, .. })
        ));
    }

    #[test]
    fn odd_stride_rejected() {
        let mut spec = canonical_pipeline();
        spec.blocks[2].stride = 2;
        assert!(matches!(
            spec.validate(),
            Err(PipelineError::InvalidBlock { index: 2, .. })
        ));
    }

    #[test]
    fn reference_is_roughly_four_times_heavier() {
        let m = 163_840;
        let lite = canonical_pipeline().count_costs(m).unwrap().total().macs as f64;
        let heavy = reference_pipeline().count_costs(m).unwrap().total().macs as f64;
        let ratio = lite / heavy;
        assert!((ratio - 0.25).abs() <= 0.05, "{ratio}");
    }
}
