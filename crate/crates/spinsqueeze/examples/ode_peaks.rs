//! Peak squeezing from the differential formulation for the named preparations.

use spinsqueeze::protocols::{basis_for, ProtocolParams, Target};
use spinsqueeze::qnd_ode::{integrate, OdeSettings};
use spinsqueeze::spin_algebra::Preparation;

fn main() -> spinsqueeze::Result<()> {
    for (prep, f) in [(Preparation::Mx0, 4.0), (Preparation::Scs, 2.0), (Preparation::Cat, 2.0), (Preparation::Scs, 4.0)] {
        let b = basis_for(prep, f)?;
        let run = integrate(&b, &ProtocolParams::paper(f), 3.0, Target::Scs, &OdeSettings::default())?;
        let pk = run.trajectory.peak();
        println!(
            "{:>4} f={f}: {:.2} dB at t={:.3} (transfer kept: {}, dropped-term ratio {:.1e})",
            prep.name(),
            pk.db,
            pk.t,
            run.trajectory.keep,
            run.dropped_ratio
        );
    }
    Ok(())
}
