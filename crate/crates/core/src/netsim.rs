//! Discrete-event simulation of a node chain carrying pipeline traffic.
//!
//! Nodes are ordered client..server and joined by one link per hop. In
//! store-and-forward (SF) mode the client ships the raw input and the server
//! runs the whole pipeline. In compute-and-forward (CF) mode every node that
//! hosts a VNF waits for the full message, runs its blocks and forwards the
//! serialized intermediate tensor. Nodes without work forward packet by packet.
//!
//! Processing time (`t_p`) and transmission time (`t_t`) are accumulated from
//! disjoint phases of a single sequential job, so `t_s = t_p + t_t`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{make_weights, run_pipeline, ExecError, Tensor};
use crate::pipeline::{canonical_pipeline, reference_pipeline, PipelineError, PipelineSpec, Rate};
use crate::plan::{make_plan, ExactRate, PartitionPlan, PlanError};
use crate::scoring::synth_mixture;
use crate::wire::{self, WireError};

#[derive(Debug, Error)]
pub enum NetsimError {
    #[error("plan/chain mismatch: {0}")]
    PlanChainMismatch(String),
    #[error("input length {m} is not divisible by {denominator}")]
    IndivisibleInput { m: usize, denominator: usize },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("report has no SF baseline byte count")]
    MissingBaseline,
    #[error("scenario config: {0}")]
    Config(String),
    #[error(transparent)]
    Pipeline(PipelineError),
    #[error(transparent)]
    Plan(PlanError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Wire(#[from] WireError),
}

impl From<PipelineError> for NetsimError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::IndivisibleInput { m, denominator } => {
                NetsimError::IndivisibleInput { m, denominator }
            }
            other => NetsimError::Pipeline(other),
        }
    }
}

impl From<PlanError> for NetsimError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::PlanChainMismatch(s) => NetsimError::PlanChainMismatch(s),
            PlanError::Pipeline(p) => p.into(),
            other => NetsimError::Plan(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sf,
    Cf,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Sf => "sf",
            Mode::Cf => "cf",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    /// bits per second
    pub bandwidth: f64,
    /// seconds
    pub prop_delay: f64,
    /// Fixed sender-side cost per packet, seconds.
    #[serde(default)]
    pub per_packet_overhead: f64,
}

impl LinkSpec {
    pub fn new(bandwidth: f64, prop_delay: f64) -> Self {
        Self {
            bandwidth,
            prop_delay,
            per_packet_overhead: 0.0,
        }
    }

    fn service_time(&self, wire_bytes: usize) -> f64 {
        wire_bytes as f64 * 8.0 / self.bandwidth + self.per_packet_overhead
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    /// MACs per second
    pub compute_rate: f64,
    /// Seconds added per hosted VNF in CF mode.
    #[serde(default)]
    pub cf_io_overhead: f64,
    /// Seconds spent before the first packet of a message this node originates.
    #[serde(default)]
    pub per_message_overhead: f64,
}

impl NodeSpec {
    pub fn new(id: &str, compute_rate: f64) -> Self {
        Self {
            id: id.to_string(),
            compute_rate,
            cf_io_overhead: 0.0,
            per_message_overhead: 0.0,
        }
    }
}

fn default_mtu() -> usize {
    1472
}

fn default_header() -> usize {
    28
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketizationSpec {
    #[serde(default = "default_mtu")]
    pub mtu_payload: usize,
    #[serde(default = "default_header")]
    pub header_bytes: usize,
}

impl Default for PacketizationSpec {
    fn default() -> Self {
        Self {
            mtu_payload: default_mtu(),
            header_bytes: default_header(),
        }
    }
}

impl PacketizationSpec {
    /// Payload sizes of the packets carrying `bytes`; an empty message is
    /// still one (empty) packet.
    pub fn payloads(&self, bytes: usize) -> Vec<usize> {
        if bytes == 0 {
            return vec![0];
        }
        let full = bytes / self.mtu_payload;
        let mut out = vec![self.mtu_payload; full];
        if !bytes.is_multiple_of(self.mtu_payload) {
            out.push(bytes % self.mtu_payload);
        }
        out
    }

    /// Bytes on the wire, headers included.
    pub fn wire_bytes(&self, bytes: usize) -> u64 {
        let packets = self.payloads(bytes).len();
        (bytes + packets * self.header_bytes) as u64
    }
}

/// Multiplicative log-normal noise on compute rates and CF I/O overheads.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Jitter {
    #[serde(default)]
    pub compute_rate_sd: f64,
    #[serde(default)]
    pub io_overhead_sd: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Jitter {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_none(&self) -> bool {
        self.compute_rate_sd == 0.0 && self.io_overhead_sd == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PipelineSource {
    /// `"canonical"` or `"reference"`; the model names are accepted as aliases.
    Preset(String),
    Inline(PipelineSpec),
}

impl Default for PipelineSource {
    fn default() -> Self {
        PipelineSource::Preset("canonical".into())
    }
}

impl PipelineSource {
    pub fn resolve(&self) -> Result<PipelineSpec, NetsimError> {
        match self {
            PipelineSource::Preset(name) => preset(name)
                .ok_or_else(|| NetsimError::Config(format!("unknown pipeline preset {name:?}"))),
            PipelineSource::Inline(spec) => {
                spec.validate()?;
                Ok(spec.clone())
            }
        }
    }
}

/// Named pipeline presets.
pub fn preset(name: &str) -> Option<PipelineSpec> {
    match name {
        "ia-net-lite" | "canonical" => Some(canonical_pipeline()),
        "reference" | "ia-net" => Some(reference_pipeline()),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InputSource {
    /// Synthetic mixture of `sources` band-limited signals.
    Synth { sources: usize, seed: u64 },
    /// 16-bit little-endian PCM file; its length must equal `m`.
    Pcm { path: PathBuf },
}

impl Default for InputSource {
    fn default() -> Self {
        InputSource::Synth {
            sources: 4,
            seed: 0,
        }
    }
}

impl InputSource {
    pub fn load(&self, m: usize) -> Result<Tensor, NetsimError> {
        match self {
            InputSource::Synth { sources, seed } => {
                Ok(synth_mixture(*sources, m, *seed).observation)
            }
            InputSource::Pcm { path } => {
                let t = wire::read_pcm16(path)?;
                if t.shape().frames != m {
                    return Err(NetsimError::Invalid(format!(
                        "{} holds {} samples, scenario m = {m}",
                        path.display(),
                        t.shape().frames
                    )));
                }
                Ok(t)
            }
        }
    }
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub mode: Mode,
    #[serde(default)]
    pub pipeline: PipelineSource,
    pub m: usize,
    /// Weight seed.
    #[serde(default)]
    pub seed: u64,
    /// client .. server, in path order.
    pub nodes: Vec<NodeSpec>,
    /// `links[i]` joins `nodes[i]` and `nodes[i + 1]`.
    pub links: Vec<LinkSpec>,
    #[serde(default)]
    pub packetization: PacketizationSpec,
    /// CF only. When absent, a plan is derived over every node but the server.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PartitionPlan>,
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default)]
    pub jitter: Jitter,
    /// Run the tensors for real; otherwise message sizes come from shape arithmetic.
    #[serde(default = "yes")]
    pub execute: bool,
    #[serde(default)]
    pub input: InputSource,
}

impl Scenario {
    /// The chain used in the evaluation setup: client, two switches, server,
    /// 10 Mbit/s links with 150 ms propagation delay each.
    pub fn chain(name: &str, mode: Mode, m: usize, compute_rate: f64) -> Self {
        let nodes = ["client", "s1", "s2", "server"]
            .iter()
            .map(|id| NodeSpec::new(id, compute_rate))
            .collect();
        Self {
            name: name.to_string(),
            mode,
            pipeline: PipelineSource::default(),
            m,
            seed: 0,
            nodes,
            links: vec![LinkSpec::new(10e6, 0.150); 3],
            packetization: PacketizationSpec::default(),
            plan: None,
            repetitions: 1,
            jitter: Jitter::none(),
            execute: true,
            input: InputSource::default(),
        }
    }

    pub fn node_ids(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.id.clone()).collect()
    }

    fn validate(&self) -> Result<(), NetsimError> {
        let bad = |s: String| Err(NetsimError::Invalid(s));
        if self.nodes.len() < 2 {
            return bad("need at least a client and a server".into());
        }
        if self.links.len() + 1 != self.nodes.len() {
            return bad(format!(
                "{} nodes need {} links, got {}",
                self.nodes.len(),
                self.nodes.len() - 1,
                self.links.len()
            ));
        }
        for (i, l) in self.links.iter().enumerate() {
            if !(l.bandwidth > 0.0 && l.bandwidth.is_finite()) {
                return bad(format!("link {i}: bandwidth must be positive"));
            }
            if !(l.prop_delay >= 0.0 && l.per_packet_overhead >= 0.0) {
                return bad(format!("link {i}: delays must be non-negative"));
            }
        }
        for n in &self.nodes {
            if !(n.compute_rate > 0.0 && n.compute_rate.is_finite()) {
                return bad(format!("node {}: compute_rate must be positive", n.id));
            }
            if !(n.cf_io_overhead >= 0.0 && n.per_message_overhead >= 0.0) {
                return bad(format!("node {}: overheads must be non-negative", n.id));
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if self.nodes[..i].iter().any(|o| o.id == n.id) {
                return bad(format!("duplicate node id {:?}", n.id));
            }
        }
        if self.packetization.mtu_payload == 0 {
            return bad("mtu_payload must be positive".into());
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        Ok(())
    }

    /// The plan a CF run uses: the explicit one, or one derived over the
    /// non-server nodes.
    pub fn effective_plan(&self, spec: &PipelineSpec) -> Result<PartitionPlan, NetsimError> {
        let plan = match &self.plan {
            Some(p) => p.clone(),
            None => {
                let ids = self.node_ids();
                make_plan(spec, self.m, &ids[..ids.len() - 1])?
            }
        };
        plan.validate()?;
        if plan.block_count != spec.len() {
            return Err(NetsimError::PlanChainMismatch(format!(
                "plan covers {} blocks, pipeline has {}",
                plan.block_count,
                spec.len()
            )));
        }
        plan.node_positions(&self.node_ids())?;
        Ok(plan)
    }
}

/// A scenario document: one or more scenarios plus an optional grid that
/// expands each of them over link bandwidths and compute rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub scenarios: Vec<Scenario>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub bandwidths: Vec<f64>,
    pub compute_rates: Vec<f64>,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, NetsimError> {
        let file: Self =
            serde_json::from_str(text).map_err(|e| NetsimError::Config(e.to_string()))?;
        if file.scenarios.is_empty() {
            return Err(NetsimError::Config("no scenarios".into()));
        }
        Ok(file)
    }

    pub fn from_path(path: &Path) -> Result<Self, NetsimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| NetsimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Bundled scenario files by name.
    pub fn bundled(name: &str) -> Option<Self> {
        let text = match name {
            "theoretical" => include_str!("../scenarios/theoretical.json"),
            "paper-calibrated" => include_str!("../scenarios/paper-calibrated.json"),
            "sweep" => include_str!("../scenarios/sweep.json"),
            _ => return None,
        };
        Some(Self::from_json(text).expect("bundled scenario parses"))
    }

    pub const BUNDLED: [&'static str; 3] = ["theoretical", "paper-calibrated", "sweep"];

    /// Scenarios with the sweep grid applied.
    pub fn expand(&self) -> Vec<Scenario> {
        let Some(sweep) = &self.sweep else {
            return self.scenarios.clone();
        };
        let mut out = Vec::new();
        for base in &self.scenarios {
            for &bw in &sweep.bandwidths {
                for &rate in &sweep.compute_rates {
                    let mut s = base.clone();
                    s.name = format!("{}@bw={:e},rate={:e}", base.name, bw, rate);
                    for l in &mut s.links {
                        l.bandwidth = bw;
                    }
                    for n in &mut s.nodes {
                        n.compute_rate = rate;
                    }
                    out.push(s);
                }
            }
        }
        out
    }
}

/// One phase of the sequential job.
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    /// `vnfs` hosted functions, each paying the node's CF I/O overhead.
    Compute { node: usize, macs: u64, vnfs: usize },
    /// Message of `bytes` from `from` to `to` (node indices, `from < to`).
    Transfer {
        from: usize,
        to: usize,
        bytes: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunTimes {
    pub t_p: f64,
    pub t_t: f64,
    pub t_s: f64,
}

/// Result of executing a step list once.
#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub times: RunTimes,
    /// Simulation clock when the job finished.
    pub clock: f64,
    pub link_bytes: Vec<u64>,
    pub link_payload_bytes: Vec<u64>,
    pub link_packets: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EventKind {
    StartStep(usize),
    ComputeDone(usize),
    PacketArrive {
        step: usize,
        link: usize,
        payload: usize,
    },
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    node: usize,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// reversed: BinaryHeap pops the earliest (time, node, seq) first
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.node.cmp(&self.node))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Engine<'a> {
    nodes: &'a [NodeSpec],
    links: &'a [LinkSpec],
    packets: PacketizationSpec,
    queue: BinaryHeap<Event>,
    seq: u64,
    busy_until: Vec<f64>,
    timing: Timing,
}

impl<'a> Engine<'a> {
    fn push(&mut self, time: f64, node: usize, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Event {
            time,
            node,
            seq: self.seq,
            kind,
        });
    }

    /// FIFO transmitter: the packet starts when the link is free.
    fn transmit(&mut self, step: usize, link: usize, at: f64, payload: usize) {
        let wire = payload + self.packets.header_bytes;
        let start = at.max(self.busy_until[link]);
        let done = start + self.links[link].service_time(wire);
        self.busy_until[link] = done;
        self.timing.link_bytes[link] += wire as u64;
        self.timing.link_payload_bytes[link] += payload as u64;
        self.timing.link_packets[link] += 1;
        let arrival = done + self.links[link].prop_delay;
        self.push(
            arrival,
            link + 1,
            EventKind::PacketArrive {
                step,
                link,
                payload,
            },
        );
    }
}

/// Runs `steps` sequentially through the event loop.
pub fn run_steps(
    nodes: &[NodeSpec],
    links: &[LinkSpec],
    packets: PacketizationSpec,
    steps: &[Step],
) -> Timing {
    let mut engine = Engine {
        nodes,
        links,
        packets,
        queue: BinaryHeap::new(),
        seq: 0,
        busy_until: vec![0.0; links.len()],
        timing: Timing {
            times: RunTimes {
                t_p: 0.0,
                t_t: 0.0,
                t_s: 0.0,
            },
            clock: 0.0,
            link_bytes: vec![0; links.len()],
            link_payload_bytes: vec![0; links.len()],
            link_packets: vec![0; links.len()],
        },
    };
    let mut phase_start = 0.0;
    let mut expected = 0usize;
    let mut received = 0usize;
    engine.push(0.0, 0, EventKind::StartStep(0));

    while let Some(ev) = engine.queue.pop() {
        let now = ev.time;
        engine.timing.clock = now;
        match ev.kind {
            EventKind::StartStep(s) => match steps.get(s) {
                None => break,
                Some(Step::Compute { node, macs, vnfs }) => {
                    let n = &engine.nodes[*node];
                    let dt = *macs as f64 / n.compute_rate + *vnfs as f64 * n.cf_io_overhead;
                    engine.timing.times.t_p += dt;
                    engine.push(now + dt, *node, EventKind::ComputeDone(s));
                }
                Some(Step::Transfer { from, to, bytes }) => {
                    if from >= to {
                        engine.push(now, *from, EventKind::StartStep(s + 1));
                        continue;
                    }
                    phase_start = now;
                    let payloads = engine.packets.payloads(*bytes);
                    expected = payloads.len();
                    received = 0;
                    let release = now + engine.nodes[*from].per_message_overhead;
                    for p in payloads {
                        engine.transmit(s, *from, release, p);
                    }
                }
            },
            EventKind::ComputeDone(s) => {
                engine.push(now, ev.node, EventKind::StartStep(s + 1));
            }
            EventKind::PacketArrive {
                step,
                link,
                payload,
            } => {
                let here = link + 1;
                let Step::Transfer { to, .. } = steps[step] else {
                    unreachable!("packets only belong to transfers")
                };
                if here == to {
                    received += 1;
                    if received == expected {
                        engine.timing.times.t_t += now - phase_start;
                        engine.push(now, here, EventKind::StartStep(step + 1));
                    }
                } else {
                    engine.transmit(step, here, now, payload);
                }
            }
        }
    }
    let t = &mut engine.timing.times;
    t.t_s = t.t_p + t.t_t;
    engine.timing
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkReport {
    pub from: String,
    pub to: String,
    pub bytes: u64,
    pub payload_bytes: u64,
    pub packets: u64,
    /// Element-count rate of the tensor carried on this link.
    pub theoretical_rate: ExactRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub scenario: String,
    pub mode: Mode,
    pub m: usize,
    pub runs: Vec<RunTimes>,
    pub links: Vec<LinkReport>,
    /// First-link bytes had the raw input been sent in SF mode.
    pub sf_baseline_bytes: Option<u64>,
    /// SHA-256 of the serialized feature tensor at the server, when executed.
    pub feature_digest: Option<String>,
}

/// Per-link bytes over the SF first-link bytes, headers included.
pub fn measured_rates(report: &LatencyReport) -> Result<Vec<f64>, NetsimError> {
    match report.sf_baseline_bytes {
        Some(b) if b > 0 => Ok(report
            .links
            .iter()
            .map(|l| l.bytes as f64 / b as f64)
            .collect()),
        _ => Err(NetsimError::MissingBaseline),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub min: f64,
    pub p05: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub p95: f64,
    pub max: f64,
    pub mean: f64,
}

impl Percentiles {
    /// Linear interpolation between closest ranks.
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            if v.len() == 1 {
                return v[0];
            }
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Self {
            min: v[0],
            p05: q(0.05),
            p25: q(0.25),
            median: q(0.5),
            p75: q(0.75),
            p95: q(0.95),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub t_s: Percentiles,
    pub t_p: Percentiles,
    pub t_t: Percentiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub report: LatencyReport,
    pub summary: Summary,
}

/// Scenario resolved into a step list, link rates and (optionally) the
/// executed feature tensor. Independent of jitter.
#[derive(Debug, Clone)]
pub struct PreparedJob {
    pub steps: Vec<Step>,
    pub link_rates: Vec<Rate>,
    pub sf_baseline_bytes: u64,
    pub features: Option<Tensor>,
}

/// Builds the job for a scenario, executing the pipeline when requested.
pub fn prepare(scenario: &Scenario) -> Result<PreparedJob, NetsimError> {
    scenario.validate()?;
    let spec = scenario.pipeline.resolve()?;
    if spec.is_empty() {
        return Err(NetsimError::Invalid("pipeline has no blocks".into()));
    }
    let m = scenario.m;
    let shapes = spec.infer_shape(m)?;
    let costs = spec.count_costs(m)?;
    let server = scenario.nodes.len() - 1;
    let input_elems = spec.input_shape(m).elements() as u64;
    let input_bytes = wire::encoded_len(spec.input_shape(m));
    let sf_baseline_bytes = scenario.packetization.wire_bytes(input_bytes);

    let exec = if scenario.execute {
        let input = scenario.input.load(m)?;
        Some((make_weights(&spec, scenario.seed), input))
    } else {
        None
    };

    // (first block, last block, node) per compute stage
    let stages: Vec<(usize, usize, usize)> = match scenario.mode {
        Mode::Sf => vec![(0, spec.len() - 1, server)],
        Mode::Cf => {
            let plan = scenario.effective_plan(&spec)?;
            let pos = plan.node_positions(&scenario.node_ids())?;
            plan.vnfs
                .iter()
                .zip(pos)
                .map(|(v, p)| (v.first_block, v.last_block, p))
                .collect()
        }
    };

    let mut steps = Vec::new();
    let mut link_rates = vec![Rate::new(0, 1); scenario.links.len()];
    let mut at = 0usize;
    let mut msg_bytes = input_bytes;
    let mut msg_rate = Rate::new(spec.input_shape(m).elements() as u64, input_elems);
    let mut current = exec.as_ref().map(|(_, x)| x.clone());

    let mut send = |steps: &mut Vec<Step>, from: usize, to: usize, bytes: usize, rate: Rate| {
        if from < to {
            steps.push(Step::Transfer { from, to, bytes });
            for r in &mut link_rates[from..to] {
                *r = rate;
            }
        }
    };

    let mut i = 0;
    while i < stages.len() {
        let node = stages[i].2;
        send(&mut steps, at, node, msg_bytes, msg_rate);
        at = node;
        // consecutive VNFs on one node run back to back
        let mut macs = 0;
        let mut vnfs = 0;
        while i < stages.len() && stages[i].2 == node {
            let (first, last, _) = stages[i];
            macs += costs.range(first..=last).macs;
            vnfs += 1;
            if let (Some((weights, _)), Some(x)) = (&exec, current.take()) {
                // the node only ever sees the bytes that crossed the wire
                let received = wire::deserialize(&wire::serialize(&x))?;
                current = Some(run_pipeline(&spec, weights, &received, first..last + 1)?);
            }
            let out = shapes[last];
            msg_bytes = wire::encoded_len(out);
            msg_rate = Rate::new(out.elements() as u64, input_elems);
            i += 1;
        }
        let vnfs = if scenario.mode == Mode::Cf { vnfs } else { 0 };
        steps.push(Step::Compute { node, macs, vnfs });
        if let Some(x) = &current {
            debug_assert_eq!(wire::encoded_len(x.shape()), msg_bytes);
        }
    }
    send(&mut steps, at, server, msg_bytes, msg_rate);

    Ok(PreparedJob {
        steps,
        link_rates,
        sf_baseline_bytes,
        features: current,
    })
}

fn jittered_nodes(nodes: &[NodeSpec], jitter: &Jitter, rng: &mut ChaCha8Rng) -> Vec<NodeSpec> {
    nodes
        .iter()
        .map(|n| {
            let a: f64 = StandardNormal.sample(rng);
            let b: f64 = StandardNormal.sample(rng);
            NodeSpec {
                compute_rate: n.compute_rate * (jitter.compute_rate_sd * a).exp(),
                cf_io_overhead: n.cf_io_overhead * (jitter.io_overhead_sd * b).exp(),
                ..n.clone()
            }
        })
        .collect()
}

fn report_from(
    scenario: &Scenario,
    job: &PreparedJob,
    runs: Vec<RunTimes>,
    first: &Timing,
) -> LatencyReport {
    let links = (0..scenario.links.len())
        .map(|i| LinkReport {
            from: scenario.nodes[i].id.clone(),
            to: scenario.nodes[i + 1].id.clone(),
            bytes: first.link_bytes[i],
            payload_bytes: first.link_payload_bytes[i],
            packets: first.link_packets[i],
            theoretical_rate: ExactRate(job.link_rates[i]),
        })
        .collect();
    LatencyReport {
        scenario: scenario.name.clone(),
        mode: scenario.mode,
        m: scenario.m,
        runs,
        links,
        sf_baseline_bytes: Some(job.sf_baseline_bytes),
        feature_digest: job.features.as_ref().map(wire::digest),
    }
}

/// One nominal run of `scenario` (no jitter).
pub fn simulate(scenario: &Scenario) -> Result<LatencyReport, NetsimError> {
    let job = prepare(scenario)?;
    let timing = run_steps(
        &scenario.nodes,
        &scenario.links,
        scenario.packetization,
        &job.steps,
    );
    Ok(report_from(scenario, &job, vec![timing.times], &timing))
}

/// `n` runs of `scenario`, perturbing compute rates and I/O overheads with
/// `jitter`. The pipeline is executed once; only timing varies.
pub fn run_batch(
    scenario: &Scenario,
    n: usize,
    jitter: &Jitter,
) -> Result<BatchReport, NetsimError> {
    if n == 0 {
        return Err(NetsimError::Invalid("batch needs at least one run".into()));
    }
    let job = prepare(scenario)?;
    let mut rng = ChaCha8Rng::seed_from_u64(jitter.seed);
    let mut runs = Vec::with_capacity(n);
    let mut first = None;
    for _ in 0..n {
        let nodes = if jitter.is_none() {
            scenario.nodes.clone()
        } else {
            jittered_nodes(&scenario.nodes, jitter, &mut rng)
        };
        let timing = run_steps(&nodes, &scenario.links, scenario.packetization, &job.steps);
        runs.push(timing.times);
        first.get_or_insert(timing);
    }
    let first = first.expect("n >= 1");
    let pick = |f: fn(&RunTimes) -> f64| Percentiles::of(&runs.iter().map(f).collect::<Vec<_>>());
    let summary = Summary {
        t_s: pick(|r| r.t_s),
        t_p: pick(|r| r.t_p),
        t_t: pick(|r| r.t_t),
    };
    Ok(BatchReport {
        report: report_from(scenario, &job, runs, &first),
        summary,
    })
}

/// Runs a scenario with its own repetition count and jitter.
pub fn run_scenario(scenario: &Scenario) -> Result<BatchReport, NetsimError> {
    run_batch(scenario, scenario.repetitions, &scenario.jitter)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_nodes(rate: f64) -> Vec<NodeSpec> {
        ["client", "s1", "s2", "server"]
            .iter()
            .map(|id| NodeSpec::new(id, rate))
            .collect()
    }

    #[test]
    fn zero_size_message_costs_propagation_only() {
        let nodes = chain_nodes(1e9);
        let links = vec![LinkSpec::new(10e6, 0.150); 3];
        let pk = PacketizationSpec {
            mtu_payload: 1472,
            header_bytes: 0,
        };
        let steps = vec![
            Step::Transfer {
                from: 0,
                to: 3,
                bytes: 0,
            },
            Step::Compute {
                node: 3,
                macs: 2_000_000_000,
                vnfs: 0,
            },
        ];
        let t = run_steps(&nodes, &links, pk, &steps);
        assert!((t.times.t_t - 0.45).abs() < 1e-12);
        assert_eq!(t.times.t_p, 2.0);
        assert!((t.clock - t.times.t_s).abs() < 1e-9);
    }

    #[test]
    fn single_link_transfer_time() {
        let nodes = vec![NodeSpec::new("a", 1.0), NodeSpec::new("b", 1.0)];
        let links = vec![LinkSpec::new(8000.0, 0.5)];
        let pk = PacketizationSpec {
            mtu_payload: 100,
            header_bytes: 10,
        };
        // 250 bytes -> 100 + 100 + 50 payload, 280 wire bytes -> 0.28 s serialization
        let t = run_steps(
            &nodes,
            &links,
            pk,
            &[Step::Transfer {
                from: 0,
                to: 1,
                bytes: 250,
            }],
        );
        assert!((t.times.t_t - 0.78).abs() < 1e-12);
        assert_eq!(t.link_bytes, vec![280]);
        assert_eq!(t.link_packets, vec![3]);
    }

    #[test]
    fn cut_through_pipelines_packets() {
        // 10 equal packets over two identical hops: 10 + 1 packet times plus propagation
        let nodes = vec![
            NodeSpec::new("a", 1.0),
            NodeSpec::new("b", 1.0),
            NodeSpec::new("c", 1.0),
        ];
        let links = vec![LinkSpec::new(8000.0, 0.1); 2];
        let pk = PacketizationSpec {
            mtu_payload: 100,
            header_bytes: 0,
        };
        let t = run_steps(
            &nodes,
            &links,
            pk,
            &[Step::Transfer {
                from: 0,
                to: 2,
                bytes: 1000,
            }],
        );
        assert!(
            (t.times.t_t - (11.0 * 0.1 + 0.2)).abs() < 1e-12,
            "{}",
            t.times.t_t
        );
    }

    #[test]
    fn packetization() {
        let p = PacketizationSpec::default();
        assert_eq!(p.payloads(0), vec![0]);
        assert_eq!(p.payloads(1472), vec![1472]);
        assert_eq!(p.payloads(1473), vec![1472, 1]);
        assert_eq!(p.wire_bytes(1473), 1473 + 56);
    }

    #[test]
    fn percentiles_interpolate() {
        let p = Percentiles::of(&[4.0, 1.0, 3.0, 2.0, 5.0]);
        assert_eq!(p.median, 3.0);
        assert_eq!(p.min, 1.0);
        assert_eq!(p.max, 5.0);
        assert_eq!(p.p25, 2.0);
        assert!((p.p05 - 1.2).abs() < 1e-12);
        let one = Percentiles::of(&[7.0]);
        assert_eq!((one.p05, one.median, one.p95), (7.0, 7.0, 7.0));
    }

    #[test]
    fn scenario_validation() {
        let mut s = Scenario::chain("x", Mode::Sf, 4096, 1e9);
        s.links.pop();
        assert!(matches!(prepare(&s), Err(NetsimError::Invalid(_))));
        let mut s = Scenario::chain("x", Mode::Sf, 4096, 1e9);
        s.nodes[1].compute_rate = 0.0;
        assert!(matches!(prepare(&s), Err(NetsimError::Invalid(_))));
        let s = Scenario::chain("x", Mode::Sf, 1000, 1e9);
        assert!(matches!(
            prepare(&s),
            Err(NetsimError::IndivisibleInput { m: 1000, .. })
        ));
    }

    #[test]
    fn measured_rates_need_baseline() {
        let mut s = Scenario::chain("x", Mode::Sf, 4096, 1e9);
        s.execute = false;
        let mut r = simulate(&s).unwrap();
        assert_eq!(measured_rates(&r).unwrap(), vec![1.0; 3]);
        r.sf_baseline_bytes = None;
        assert!(matches!(
            measured_rates(&r),
            Err(NetsimError::MissingBaseline)
        ));
    }

    #[test]
    fn bundled_files_parse() {
        for name in ScenarioFile::BUNDLED {
            let f = ScenarioFile::bundled(name).unwrap();
            assert!(!f.expand().is_empty());
        }
        assert!(ScenarioFile::bundled("nope").is_none());
    }

    #[test]
    fn unknown_scenario_key_rejected() {
        let text = r#"{"name":"x","scenarios":[{"name":"a","mode":"sf","m":1024,"nodes":[],"links":[],"bogus":1}]}"#;
        let err = ScenarioFile::from_json(text).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }
}
