//! Shapes, filter rates and costs of the two pipeline presets.
//!
//! ```bash
//! cargo run -p innet --example shape_table -- 163840
//! ```

use innet::pipeline::{canonical_pipeline, reference_pipeline};
use innet::plan::ExactRate;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(163_840);
    for (label, spec) in [
        ("light", canonical_pipeline()),
        ("reference", reference_pipeline()),
    ] {
        let shapes = spec.infer_shape(m)?;
        let rates = spec.filter_rates(m)?;
        let costs = spec.count_costs(m)?;
        println!("{label} pipeline, m = {m}");
        println!(
            "{:<11} {:>6} {:>8} {:>12} {:>10} {:>14}",
            "block", "ch", "frames", "rate", "params", "MACs"
        );
        for (i, b) in spec.blocks.iter().enumerate() {
            println!(
                "{:<11} {:>6} {:>8} {:>12} {:>10} {:>14}",
                b.name,
                shapes[i].channels,
                shapes[i].frames,
                ExactRate(rates[i]).to_string(),
                costs.per_block[i].params,
                costs.per_block[i].macs
            );
        }
        let total = costs.total();
        println!(
            "total {} params, {} MACs (encoder {:.2}%, abstraction {:.2}%, separation {:.2}%)\n",
            total.params,
            total.macs,
            100.0 * costs.encoder.macs as f64 / total.macs as f64,
            100.0 * costs.abstraction.macs as f64 / total.macs as f64,
            100.0 * costs.decoder.macs as f64 / total.macs as f64,
        );
    }
    let ratio = canonical_pipeline().count_costs(m)?.total().macs as f64
        / reference_pipeline().count_costs(m)?.total().macs as f64;
    println!("light / reference MACs = {ratio:.3}");
    Ok(())
}
