//! Embedded qutrit of each named fiducial state: coupling amplitudes and Wineland ζ of |↑⟩.

use spinsqueeze::spin_algebra::{prepare_fiducial, EmbeddedBasis, Preparation, SpinSystem};

fn main() -> spinsqueeze::Result<()> {
    for f in [0.5, 1.0, 2.0, 4.0] {
        let sys = SpinSystem::new(f)?;
        for prep in [Preparation::Scs, Preparation::Cat, Preparation::Mx0, Preparation::Yurke { alpha: 0.6 }] {
            let b = match prepare_fiducial(&sys, prep).and_then(|up| EmbeddedBasis::new(&sys, up)) {
                Ok(b) => b,
                Err(e) => {
                    println!("f={f:<3} {:<6} {e}", prep.name());
                    continue;
                }
            };
            println!(
                "f={f:<3} {:<6} v={:.4} w={:.4} var_up={:.4} transfer={} zeta_up={:.4e}",
                prep.name(),
                b.v,
                b.w,
                b.var_up,
                b.has_transfer(),
                b.zeta_m_up
            );
        }
    }
    Ok(())
}
