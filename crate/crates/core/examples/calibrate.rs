//! Fits the two emulator overheads of the `paper-calibrated` scenario.
//!
//! Targets (medians, seconds): SF transmission 3.2, CF service 2.2, SF
//! processing 0.1 for the light model. Processing fixes the compute rate;
//! the transmission targets are affine in the per-packet and per-message
//! overheads, so two probe runs per unknown give an exact 2x2 solve.
//!
//! ```bash
//! cargo run -p innet --example calibrate
//! cargo run -p innet --example calibrate -- crates/core/scenarios/paper-calibrated.json
//! ```
//!
//! With a path argument the fitted scenario file is written there.

use innet::netsim::{run_scenario, simulate, Jitter, Mode, PipelineSource, Scenario, ScenarioFile};
use innet::pipeline::canonical_pipeline;

const M: usize = 163_840;
const SF_PROCESSING: f64 = 0.1;
const SF_TRANSMISSION: f64 = 3.2;
const CF_SERVICE: f64 = 2.2;
const CF_EXTRA_PROCESSING: f64 = 0.005;

fn scenario(mode: Mode, rate: f64, io: f64, per_packet: f64, per_message: f64) -> Scenario {
    let mut s = Scenario::chain("probe", mode, M, rate);
    s.execute = false;
    for n in &mut s.nodes {
        n.cf_io_overhead = io;
        n.per_message_overhead = per_message;
    }
    for l in &mut s.links {
        l.per_packet_overhead = per_packet;
    }
    s
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let macs = canonical_pipeline().count_costs(M)?.total().macs as f64;
    let rate = macs / SF_PROCESSING;
    let io = CF_EXTRA_PROCESSING / 3.0;

    let sf = |p, q| simulate(&scenario(Mode::Sf, rate, io, p, q)).map(|r| r.runs[0].t_t);
    let cf = |p, q| simulate(&scenario(Mode::Cf, rate, io, p, q)).map(|r| r.runs[0].t_s);

    let (dp, dq) = (1e-3, 1e-2);
    let (sf0, cf0) = (sf(0.0, 0.0)?, cf(0.0, 0.0)?);
    let (a11, a12) = ((sf(dp, 0.0)? - sf0) / dp, (sf(0.0, dq)? - sf0) / dq);
    let (a21, a22) = ((cf(dp, 0.0)? - cf0) / dp, (cf(0.0, dq)? - cf0) / dq);
    let (b1, b2) = (SF_TRANSMISSION - sf0, CF_SERVICE - cf0);
    let det = a11 * a22 - a12 * a21;
    let p = (b1 * a22 - a12 * b2) / det;
    let q = (a11 * b2 - a21 * b1) / det;

    println!("light-model MACs at m={M}: {macs:.0}");
    println!("compute_rate         = {rate:e} MAC/s");
    println!("cf_io_overhead       = {io:e} s");
    println!("per_packet_overhead  = {p:e} s");
    println!("per_message_overhead = {q:e} s");
    println!(
        "check: SF t_t = {:.4}, CF t_s = {:.4}",
        sf(p, q)?,
        cf(p, q)?
    );

    // Frozen constants are rounded so the file stays readable.
    let round = |x: f64, digits: i32| {
        let k = 10f64.powi(digits - 1 - x.abs().log10().floor() as i32);
        (x * k).round() / k
    };
    let (rate, io, p, q) = (round(rate, 6), round(io, 6), round(p, 6), round(q, 6));
    let jitter = |seed| Jitter {
        compute_rate_sd: 0.15,
        io_overhead_sd: 0.3,
        seed,
    };
    let mut lite_cf = scenario(Mode::Cf, rate, io, p, q);
    lite_cf.name = "lite-cf".into();
    lite_cf.execute = true;
    let mut lite_sf = scenario(Mode::Sf, rate, io, p, q);
    lite_sf.name = "lite-sf".into();
    lite_sf.execute = true;
    let mut reference_sf = scenario(Mode::Sf, rate, io, p, q);
    reference_sf.name = "reference-sf".into();
    reference_sf.pipeline = PipelineSource::Preset("reference".into());
    for (i, s) in [&mut lite_cf, &mut lite_sf, &mut reference_sf]
        .into_iter()
        .enumerate()
    {
        s.repetitions = 60;
        s.jitter = jitter(11 + i as u64);
    }
    let file = ScenarioFile {
        name: "paper-calibrated".into(),
        description: format!(
            "Overheads fitted by examples/calibrate.rs: light-model SF processing {SF_PROCESSING} s, \
             SF transmission {SF_TRANSMISSION} s, CF service {CF_SERVICE} s at m = {M}."
        ),
        scenarios: vec![lite_cf, lite_sf, reference_sf],
        sweep: None,
    };
    for s in &file.scenarios {
        let b = run_scenario(s)?;
        println!("{:<13} median t_s = {:.4}", s.name, b.summary.t_s.median);
    }
    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, serde_json::to_string_pretty(&file)? + "\n")?;
        println!("wrote {path}");
    }
    Ok(())
}
