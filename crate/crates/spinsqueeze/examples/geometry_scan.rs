//! Coarse (AR, w0) scan around a paraxial optimum; writes the contour CSV to stdout.
//!
//! `cargo run --release --example geometry_scan -- 0.5 64 1024 19 43`

use spinsqueeze::paraxial::{geometry_scan, write_scan_csv, ParaxialConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a: Vec<f64> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let (f, ar_lo, ar_hi, w_lo, w_hi) = match a[..] {
        [f, b, c, d, e] => (f, b, c, d, e),
        _ => (0.5, 64.0, 1024.0, 19.0, 43.0),
    };
    let ars: Vec<f64> = (0..8).map(|i| ar_lo * (ar_hi / ar_lo).powf(i as f64 / 7.0)).collect();
    let ws: Vec<f64> = (0..8).map(|i| w_lo + (w_hi - w_lo) * i as f64 / 7.0).collect();
    let base = ParaxialConfig { slices: 21, p_max: 5, ..ParaxialConfig::paper(f, ars[0], ws[0]) };
    let pts = geometry_scan(&base, &ars, &ws)?;
    write_scan_csv(&pts, std::io::stdout())?;
    let best = pts.iter().max_by(|x, y| x.peak_db.total_cmp(&y.peak_db)).ok_or("empty grid")?;
    eprintln!("best: AR {:.1}, w0 {:.1} um, {:.2} dB, OD_eff {:.1}", best.aspect_ratio, best.w0_um, best.peak_db, best.od_eff);
    Ok(())
}
