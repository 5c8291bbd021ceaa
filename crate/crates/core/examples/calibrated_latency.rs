//! Latency distributions of the calibrated scenarios: 60 jittered runs each,
//! summarized as percentiles, with per-run values written as CSV for CDF plots.
//!
//! ```bash
//! cargo run --release -p innet --example calibrated_latency -- /tmp/latency
//! ```

use innet::cli::runs_csv;
use innet::netsim::{run_scenario, ScenarioFile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1);
    let file = ScenarioFile::bundled("paper-calibrated").expect("bundled");
    let mut medians = Vec::new();
    println!(
        "{:<13} {:>7} {:>7} {:>7} {:>7}",
        "scenario", "p05", "median", "p95", "t_p"
    );
    for sc in &file.scenarios {
        let b = run_scenario(sc)?;
        let s = b.summary;
        println!(
            "{:<13} {:>7.3} {:>7.3} {:>7.3} {:>7.3}",
            sc.name, s.t_s.p05, s.t_s.median, s.t_s.p95, s.t_p.median
        );
        medians.push(s.t_s.median);
        if let Some(dir) = &out {
            std::fs::create_dir_all(dir)?;
            std::fs::write(format!("{dir}/{}.runs.csv", sc.name), runs_csv(&b))?;
        }
    }
    println!(
        "\nCF saves {:.1}% against the reference model in SF mode",
        100.0 * (medians[2] - medians[0]) / medians[2]
    );
    Ok(())
}
