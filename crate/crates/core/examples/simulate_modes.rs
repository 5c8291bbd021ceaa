//! SF versus CF on the four-node chain with overhead-free links: only
//! bandwidth, propagation and compute rate matter.
//!
//! ```bash
//! cargo run --release -p innet --example simulate_modes
//! ```

use innet::netsim::{measured_rates, simulate, Mode, ScenarioFile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let file = ScenarioFile::bundled("theoretical").expect("bundled");
    for sc in &file.scenarios {
        let r = simulate(sc)?;
        let t = r.runs[0];
        println!(
            "{:<13} {}  t_p {:.4} s  t_t {:.4} s  t_s {:.4} s",
            sc.name, sc.mode, t.t_p, t.t_t, t.t_s
        );
        if sc.mode == Mode::Cf {
            for (l, rate) in r.links.iter().zip(measured_rates(&r)?) {
                println!(
                    "    {:>6} -> {:<6} {:>7} bytes  measured {:>7.3}%  theoretical {:>7.3}%",
                    l.from,
                    l.to,
                    l.bytes,
                    100.0 * rate,
                    100.0 * l.theoretical_rate.value()
                );
            }
        }
    }
    Ok(())
}
