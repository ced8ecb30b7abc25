//! Plane-wave peak squeezing of QND and phase matching at OD 300.

use spinsqueeze::protocols::{basis_for, simulate, Protocol, ProtocolParams, Target};
use spinsqueeze::spin_algebra::Preparation;

fn main() -> spinsqueeze::Result<()> {
    for (prep, f) in [(Preparation::Mx0, 4.0), (Preparation::Mx0, 2.0), (Preparation::Scs, 2.0), (Preparation::Cat, 2.0)] {
        let b = basis_for(prep, f)?;
        let p = ProtocolParams::paper(f);
        let pm = simulate(Protocol::PhaseMatching, &b, &p, 3.0, Target::Scs, None)?.peak();
        let q = simulate(Protocol::Qnd, &b, &p, 5.0, Target::Scs, None)?.peak();
        println!("{:>4} f={f}: phase matching {:.2} dB, QND {:.2} dB", prep.name(), pm.db, q.db);
    }
    Ok(())
}
