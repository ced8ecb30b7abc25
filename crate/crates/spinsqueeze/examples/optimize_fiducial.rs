//! Multi-start search for the fiducial state with the best QND peak.

use spinsqueeze::protocols::{ProtocolParams, Target};
use spinsqueeze::qnd_ode::{optimize_fiducial, OptimizerSettings};

fn main() -> spinsqueeze::Result<()> {
    let f: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(4.0);
    let n_seeds = std::env::args().nth(2).and_then(|a| a.parse().ok()).unwrap_or(8);
    let s = OptimizerSettings { n_seeds, ..OptimizerSettings::default() };
    let t0 = std::time::Instant::now();
    let opt = optimize_fiducial(f, &ProtocolParams::paper(f), Target::Scs, &s)?;
    for r in &opt.seeds {
        println!("seed {:>3}: {:.2} -> {:.2} dB in {} iterations", r.seed_index, r.start_db, r.peak_db, r.iterations);
    }
    println!("best {:.3} dB at t={:.3} ({:.1?})", opt.best.peak_db, opt.best.t_peak, t0.elapsed());
    for (k, [re, im]) in opt.best.amplitudes.iter().enumerate() {
        println!("  m={:>5}: {re:+.4} {im:+.4}i", f - k as f64);
    }
    Ok(())
}
