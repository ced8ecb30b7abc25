//! Optical-pumping rates and transfer-of-coherence diagnostics per fiducial state.

use spinsqueeze::optical_pumping::{coherence_diagnostics, rates, Axis, PumpModel};
use spinsqueeze::protocols::basis_for;
use spinsqueeze::spin_algebra::{Preparation, SpinSystem};

fn main() -> spinsqueeze::Result<()> {
    for f in [1.0, 2.0, 4.0] {
        let model = PumpModel::new(&SpinSystem::new(f)?);
        for prep in [Preparation::Scs, Preparation::Cat, Preparation::Mx0] {
            let b = basis_for(prep, f)?;
            let r = rates(&b, &model, Axis::Parallel);
            let d = coherence_diagnostics(&b, &model, Axis::Parallel);
            println!(
                "f={f} {:<4} Γop={:.4} flip={:.4} loss↑={:.4} loss↓={:.4} c↑={:+.4} keep transfer: {}",
                prep.name(),
                r.gamma_op,
                r.flip,
                r.loss_up,
                r.loss_down,
                d.c_up,
                d.keep_transfer
            );
        }
    }
    Ok(())
}
