//! One paraxial geometry point: peak squeezing of the fundamental spin wave.
//!
//! `cargo run --release --example paraxial_point -- 0.5 256 31 [slices] [p_max]`

use spinsqueeze::paraxial::{run_paraxial, ParaxialConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let get = |i: usize, d: f64| args.get(i).copied().unwrap_or(d);
    let mut cfg = ParaxialConfig::paper(get(0, 0.5), get(1, 256.0), get(2, 31.0));
    cfg.slices = get(3, cfg.slices as f64) as usize;
    cfg.p_max = get(4, cfg.p_max as f64) as usize;
    let t0 = std::time::Instant::now();
    let run = run_paraxial(&cfg)?;
    let pk = run.peak();
    println!(
        "f={} AR={} w0={} um K={} p_max={}: OD_eff {:.1}, peak {:.3} dB at t = {:.3}/gamma0 ({:.1?})",
        cfg.f,
        cfg.aspect_ratio,
        cfg.w0_um,
        cfg.slices,
        cfg.p_max,
        run.od_eff,
        pk.db,
        pk.t,
        t0.elapsed()
    );
    Ok(())
}
