//! Runs the light pipeline whole and split into VNFs, shipping each
//! intermediate tensor through the wire format, and compares the results.
//!
//! ```bash
//! cargo run --release -p innet --example split_inference
//! ```

use innet::exec::{make_weights, run_pipeline};
use innet::pipeline::canonical_pipeline;
use innet::plan::make_plan;
use innet::scoring::synth_mixture;
use innet::wire;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = 163_840;
    let seed = 42;
    let spec = canonical_pipeline();
    let weights = make_weights(&spec, seed);
    let input = synth_mixture(4, m, seed).observation;

    let whole = run_pipeline(&spec, &weights, &input, 0..spec.len())?;

    let chain = ["client", "s1", "s2"].map(String::from);
    let plan = make_plan(&spec, m, &chain)?;
    let mut bytes = wire::serialize(&input);
    println!("client receives {:>7} bytes", bytes.len());
    for v in &plan.vnfs {
        let x = wire::deserialize(&bytes)?;
        let y = run_pipeline(&spec, &weights, &x, v.blocks())?;
        bytes = wire::serialize(&y);
        println!(
            "{:<6} ran blocks {:?}, sends {:>7} bytes ({}x{})",
            v.node,
            v.blocks(),
            bytes.len(),
            y.shape().channels,
            y.shape().frames
        );
    }
    let split = wire::deserialize(&bytes)?;
    println!("\nmonolithic digest {}", wire::digest(&whole));
    println!("split digest      {}", wire::digest(&split));
    println!("bit-identical: {}", whole.bit_eq(&split));
    Ok(())
}
