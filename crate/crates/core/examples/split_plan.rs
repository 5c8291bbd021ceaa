//! Concave points of the filter-rate curve and the resulting VNF plan.
//!
//! ```bash
//! cargo run -p innet --example split_plan
//! cargo run -p innet --example split_plan -- client,s1
//! ```

use innet::pipeline::canonical_pipeline;
use innet::plan::{concave_points, make_plan};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let chain: Vec<String> = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "client,s1,s2".into())
        .split(',')
        .map(str::to_string)
        .collect();
    let m = 163_840;
    let spec = canonical_pipeline();
    let rates = spec.filter_rates(m)?;

    println!("filter rates at m = {m}:");
    for (b, r) in spec.blocks.iter().zip(&rates) {
        let v = *r.numer() as f64 / *r.denom() as f64;
        println!(
            "  {:<11} {:>9.5}  {}",
            b.name,
            v,
            "#".repeat((v * 8.0).ceil() as usize)
        );
    }
    let minima: Vec<&str> = concave_points(&rates)
        .iter()
        .map(|&i| spec.blocks[i].name.as_str())
        .collect();
    println!("concave points: {minima:?}\n");

    let plan = make_plan(&spec, m, &chain)?;
    for v in &plan.vnfs {
        println!(
            "{:<8} {} .. {}  emits {:.3}% of the input",
            v.node,
            spec.blocks[v.first_block].name,
            spec.blocks[v.last_block].name,
            100.0 * v.boundary_rate.value()
        );
    }
    println!("\n{}", plan.to_json());
    Ok(())
}
