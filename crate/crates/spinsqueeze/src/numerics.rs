//! Thin wrappers over `argmin` solvers, plus an endpoint-only Runge–Kutta stepper.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::goldensectionsearch::GoldenSectionSearch;

use crate::error::{Error, Result};

struct Scalar<'a>(&'a dyn Fn(f64) -> f64);

impl CostFunction for Scalar<'_> {
    type Param = f64;
    type Output = f64;
    fn cost(&self, x: &f64) -> std::result::Result<f64, argmin::core::Error> {
        Ok((self.0)(*x))
    }
}

/// Golden-section minimization of `f` on [lo, hi]; returns (x*, f(x*)).
pub fn golden_section(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, rel_tol: f64) -> Result<(f64, f64)> {
    let solver = GoldenSectionSearch::new(lo, hi)
        .and_then(|s| s.with_tolerance(rel_tol))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let res = Executor::new(Scalar(f), solver)
        .configure(|s| s.param(0.5 * (lo + hi)).max_iters(90))
        .run()
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let st = res.state();
    let x = *st.get_best_param().ok_or_else(|| Error::Numerical("golden section found no point".into()))?;
    Ok((x, st.get_best_cost()))
}

struct Multi<'a>(&'a dyn Fn(&[f64]) -> f64);

impl CostFunction for Multi<'_> {
    type Param = Vec<f64>;
    type Output = f64;
    fn cost(&self, x: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        Ok((self.0)(x))
    }
}

/// Nelder–Mead from `x0` with an axis-aligned initial simplex of size `step`.
/// Returns (x*, f(x*), iterations).
pub fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    max_iters: u64,
    sd_tol: f64,
) -> Result<(Vec<f64>, f64, u64)> {
    let mut simplex = vec![x0.to_vec()];
    for i in 0..x0.len() {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let solver = argmin::solver::neldermead::NelderMead::new(simplex)
        .with_sd_tolerance(sd_tol)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let res = Executor::new(Multi(f), solver)
        .configure(|s| s.max_iters(max_iters))
        .run()
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let st = res.state();
    let x = st.get_best_param().cloned().ok_or_else(|| Error::Numerical("simplex search found no point".into()))?;
    Ok((x, st.get_best_cost(), st.get_iter()))
}

// Dormand–Prince 5(4) tableau
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// 5th minus embedded 4th order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Adaptive Dormand–Prince integrator that keeps only the current state.
///
/// Meant for large flat systems where storing every accepted step is not an option.
pub struct DormandPrince {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    h: f64,
    k: Vec<Vec<f64>>,
    tmp: Vec<f64>,
    pub evaluations: u64,
}

/// Right-hand side `f(t, y, dy)`.
pub type Rhs<'a> = dyn FnMut(f64, &[f64], &mut [f64]) + 'a;

impl DormandPrince {
    pub fn new(dim: usize, rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, max_steps: 1_000_000, h: 0.0, k: vec![vec![0.0; dim]; 7], tmp: vec![0.0; dim], evaluations: 0 }
    }

    /// Advances `y` from `t0` to `t1` in place. The step size carries over between calls.
    #[allow(clippy::needless_range_loop)]
    pub fn advance(&mut self, f: &mut Rhs<'_>, y: &mut [f64], t0: f64, t1: f64) -> Result<()> {
        let n = y.len();
        let span = t1 - t0;
        if span <= 0.0 {
            return Ok(());
        }
        let mut t = t0;
        f(t, y, &mut self.k[0]);
        self.evaluations += 1;
        if self.h <= 0.0 {
            let (mut d0, mut d1) = (0.0f64, 0.0f64);
            for i in 0..n {
                let sc = self.atol + self.rtol * y[i].abs();
                d0 = d0.max((y[i] / sc).abs());
                d1 = d1.max((self.k[0][i] / sc).abs());
            }
            self.h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 * span } else { 0.01 * d0 / d1 };
        }
        let mut fac_old: f64 = 1e-4;
        for _ in 0..self.max_steps {
            let last = t + 1.01 * self.h >= t1;
            let h = if last { t1 - t } else { self.h };
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = y[i];
                    for j in 0..s {
                        acc += h * A[s][j] * self.k[j][i];
                    }
                    self.tmp[i] = acc;
                }
                f(t + C[s] * h, &self.tmp, &mut self.k[s]);
            }
            self.evaluations += 6;
            // tmp now holds the 5th order solution
            let mut err = 0.0;
            for i in 0..n {
                let e: f64 = h * (0..7).map(|s| E[s] * self.k[s][i]).sum::<f64>();
                let sc = self.atol + self.rtol * y[i].abs().max(self.tmp[i].abs());
                err += (e / sc).powi(2);
            }
            let err = (err / n as f64).sqrt();
            if !err.is_finite() {
                return Err(Error::Numerical(format!("non-finite error estimate at t = {t}")));
            }
            if err <= 1.0 {
                y.copy_from_slice(&self.tmp);
                self.k.swap(0, 6);
                t += h;
                // PI controller (β = 0.04)
                let fac = (err.max(1e-10).powf(0.17) * fac_old.powf(-0.04) / 0.9).clamp(0.1, 5.0);
                fac_old = err.max(1e-4);
                if !last || h >= self.h {
                    self.h = h / fac;
                }
                if last {
                    return Ok(());
                }
            } else {
                self.h = h / (err.powf(0.2) / 0.9).min(10.0);
            }
            if self.h <= 1e-14 * span.max(t.abs()) {
                return Err(Error::Numerical(format!("step size underflow at t = {t}")));
            }
        }
        Err(Error::Numerical(format!("step limit reached at t = {t}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dormand_prince_riccati_and_oscillator() {
        let mut dp = DormandPrince::new(1, 1e-9, 1e-12);
        let mut y = [2.0];
        let mut f = |_t: f64, y: &[f64], d: &mut [f64]| d[0] = -3.0 * y[0] * y[0];
        for k in 0..10 {
            dp.advance(&mut f, &mut y, k as f64 * 0.1, (k + 1) as f64 * 0.1).unwrap();
        }
        assert!((y[0] - 2.0 / (1.0 + 6.0)).abs() < 1e-8);
        let mut dp = DormandPrince::new(2, 1e-10, 1e-12);
        let mut y = [1.0, 0.0];
        let mut f = |_t: f64, y: &[f64], d: &mut [f64]| {
            d[0] = y[1];
            d[1] = -y[0];
        };
        dp.advance(&mut f, &mut y, 0.0, 10.0).unwrap();
        assert!((y[0] - 10f64.cos()).abs() < 1e-8 && (y[1] + 10f64.sin()).abs() < 1e-8);
    }
}
