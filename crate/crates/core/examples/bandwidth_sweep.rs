//! Service latency of both modes over the bundled bandwidth by compute-rate
//! grid, as CSV on stdout.
//!
//! ```bash
//! cargo run --release -p innet --example bandwidth_sweep > sweep.csv
//! ```

use innet::netsim::{simulate, ScenarioFile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let file = ScenarioFile::bundled("sweep").expect("bundled");
    println!("mode,bandwidth,compute_rate,t_p,t_t,t_s");
    for sc in file.expand() {
        let t = simulate(&sc)?.runs[0];
        println!(
            "{},{},{},{},{},{}",
            sc.mode, sc.links[0].bandwidth, sc.nodes[0].compute_rate, t.t_p, t.t_t, t.t_s
        );
    }
    Ok(())
}
