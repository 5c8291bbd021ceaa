//! In-network processing toolkit for a lightweight acoustic anomaly
//! abstraction model.
//!
//! * [`pipeline`]: block descriptions, shape inference, filter rates, costs.
//! * [`exec`]: deterministic forward execution with synthetic weights.
//! * [`wire`]: tensor wire format and PCM input.
//! * [`plan`]: splitting the pipeline into VNFs at filter-rate minima.
//! * [`netsim`]: discrete-event chain simulator for SF and CF deployment.
//! * [`scoring`]: anomaly scores, thresholds, AUC, synthetic mixtures.
//! * [`cli`]: the `innet` command line.
//!
//! Runnable walkthroughs live in `examples/`.

pub mod cli;
pub mod exec;
pub mod netsim;
pub mod pipeline;
pub mod plan;
pub mod scoring;
pub mod wire;

pub use exec::{make_weights, run_block, run_pipeline, Tensor, WeightSet};
pub use netsim::{measured_rates, run_batch, simulate, LatencyReport, Mode, Scenario};
pub use pipeline::{
    canonical_pipeline, reference_pipeline, BlockSpec, PipelineSpec, Rate, TensorShape,
};
pub use plan::{concave_points, make_plan, PartitionPlan};
