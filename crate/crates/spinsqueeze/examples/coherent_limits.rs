//! Pumping-free squeezing of the four protocols against their closed forms.

use spinsqueeze::gaussian_core::double_pass_eigenvalues;
use spinsqueeze::protocols::{coherent_double_pass, coherent_phase_matching, coherent_qnd, db};

fn main() -> spinsqueeze::Result<()> {
    println!("{:>5} {:>16} {:>18} {:>16} {:>18}", "xi", "QND / 1+xi", "double pass", "eraser / xi^2", "phase match / e^xi");
    for xi in [0.5, 1.0, 3.0, 10.0, 30.0] {
        let q = db(coherent_qnd(xi, 1)?);
        let dp = db(coherent_double_pass(xi, false)?);
        let dp_exact = db(2.0 * double_pass_eigenvalues(xi).0);
        let er = db(coherent_double_pass(xi, true)?);
        // 1000 Trotter steps resolve e^{-xi} up to xi of a few
        let pm = if xi <= 3.0 { format!("{:.3}/{:.3}", db(coherent_phase_matching(xi, 1000)?), db((-xi).exp())) } else { "-".into() };
        println!(
            "{xi:>5} {:>16} {:>18} {:>16} {:>18}",
            format!("{q:.3}/{:.3}", db(1.0 / (1.0 + xi))),
            format!("{dp:.3}/{dp_exact:.3}"),
            format!("{er:.3}/{:.3}", db(1.0 / (xi * xi))),
            pm
        );
    }
    Ok(())
}
