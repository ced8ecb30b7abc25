//! Covariance map against the exact f = 1 moment equations for the spin coherent state.

use spinsqueeze::protocols::{basis_for, simulate, Protocol, ProtocolParams, Target};
use spinsqueeze::qnd_ode::{exact_f1_reference, OdeSettings};
use spinsqueeze::spin_algebra::Preparation;

fn main() -> spinsqueeze::Result<()> {
    let p = ProtocolParams::paper(1.0);
    let t_max = 3.0;
    let map = simulate(Protocol::Qnd, &basis_for(Preparation::Scs, 1.0)?, &p, t_max, Target::Scs, None)?;
    let exact = exact_f1_reference(&p, t_max, &OdeSettings::default())?;
    let (a, b) = (map.peak(), exact.peak());
    println!("map peak {:.3} dB at t={:.3}, exact {:.3} dB at t={:.3}", a.db, a.t, b.db, b.t);
    let end = map.len() - 1;
    let k = exact.nearest(map.t[end]);
    println!("at t={:.2}: map {:.3} dB, exact {:.3} dB", map.t[end], map.db()[end], exact.db()[k]);
    Ok(())
}
