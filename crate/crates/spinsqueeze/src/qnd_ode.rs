//! Differential form of continuous QND measurement with optical pumping: the
//! 21 covariances of the six collective pseudo-spins plus the three
//! populations, closed at second order.
//!
//! Operator order: X↓↑, Y↓↑, X≀↓, Y≀↓, X↑≀, Y↑≀.

use nalgebra::{Matrix3, Matrix6, SVector, Vector3, Vector4};
use num_complex::Complex64;
use ode_solvers::{Dop853, System};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian_core::{GaussianState, Mode, Normalization};
use crate::numerics::nelder_mead;
use crate::optical_pumping::{PumpModel, QutritOps};
use crate::protocols::{db, scorer, ProtocolParams, Target, Trajectory};
use crate::spin_algebra::{CMat, CVec, EmbeddedBasis, SpinSystem};

type Packed = SVector<f64, 24>;

fn tr(a: &CMat, b: &CMat) -> f64 {
    (a * b).trace().re
}

#[derive(Debug, Clone)]
pub struct OdeCoefficients {
    /// Tr(D(x_a) x_b)
    pub drift: Matrix6<f64>,
    /// Tr(𝒩(x_a, x_b) n_ψ), one table per ψ
    pub noise: [Matrix6<f64>; 3],
    /// Tr(D(n_φ) n_ψ)
    pub pop: Matrix3<f64>,
    /// ⟨ψ|[X_c, x_a]|ψ⟩ for X_c ∈ {X↓↑, X≀↓}
    pub commutators: [[[Complex64; 3]; 6]; 2],
    /// Projection of Σ coef·[X_c,[x_a,X_d]] on the pseudo-spins; source of the dropped terms.
    pub double_commutators: Matrix6<f64>,
    pub v: f64,
    pub w: f64,
    pub kappa: f64,
    pub has_transfer: bool,
}

impl OdeCoefficients {
    pub fn new(b: &EmbeddedBasis, p: &ProtocolParams) -> Result<Self> {
        let ops = QutritOps::new(b);
        let model = PumpModel::new(&SpinSystem::with_lande(b.f, b.g_f)?);
        let l = &ops.l;
        let mut drift = Matrix6::zeros();
        let mut noise = [Matrix6::zeros(); 3];
        let mut pop = Matrix3::zeros();
        if p.pumping {
            let dl: Vec<CMat> = l.iter().map(|o| model.dissipator(o)).collect();
            for a in 0..6 {
                for c in 0..6 {
                    drift[(a, c)] = tr(&dl[a], &l[c]);
                    let nz = model.noise_superop(&l[a], &l[c]);
                    for (k, n) in ops.n.iter().enumerate() {
                        noise[k][(a, c)] = tr(&nz, n);
                    }
                }
            }
            for i in 0..3 {
                let d = model.dissipator(&ops.n[i]);
                for j in 0..3 {
                    pop[(i, j)] = tr(&d, &ops.n[j]);
                }
            }
        }
        let zero = CVec::zeros(b.up.len());
        let states = [&b.up, &b.down, b.wr.as_ref().unwrap_or(&zero)];
        let meas = [&l[0], &l[2]];
        let mut commutators = [[[Complex64::new(0.0, 0.0); 3]; 6]; 2];
        for (i, x) in meas.iter().enumerate() {
            for a in 0..6 {
                let c = *x * &l[a] - &l[a] * *x;
                for (k, s) in states.iter().enumerate() {
                    commutators[i][a][k] = s.dotc(&(&c * *s));
                }
            }
        }
        let coef = [[b.v * b.v, b.v * b.w], [b.v * b.w, b.w * b.w]];
        let mut double_commutators = Matrix6::zeros();
        for a in 0..6 {
            let mut q = CMat::zeros(b.up.len(), b.up.len());
            for i in 0..2 {
                for j in 0..2 {
                    let inner = &l[a] * meas[j] - meas[j] * &l[a];
                    q += (meas[i] * &inner - &inner * meas[i]) * Complex64::new(coef[i][j], 0.0);
                }
            }
            for e in 0..6 {
                double_commutators[(a, e)] = tr(&l[e], &q);
            }
        }
        Ok(Self {
            drift,
            noise,
            pop,
            commutators,
            double_commutators,
            v: b.v,
            w: b.w,
            kappa: p.kappa(),
            has_transfer: b.has_transfer(),
        })
    }

    fn measured_commutators(&self, n: &Vector3<f64>) -> [[Complex64; 6]; 2] {
        let mut cm = [[Complex64::new(0.0, 0.0); 6]; 2];
        for (i, row) in cm.iter_mut().enumerate() {
            for (a, x) in row.iter_mut().enumerate() {
                *x = (0..3).map(|k| self.commutators[i][a][k] * n[k]).sum();
            }
        }
        cm
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeState {
    pub cov: Matrix6<f64>,
    /// N_↑, N_↓, N_≀
    pub populations: Vector3<f64>,
    pub t: f64,
}

impl OdeState {
    /// All atoms in |↑⟩; the ↑≀ pair is populated only when a transfer state exists.
    pub fn initial(n_a: f64, b: &EmbeddedBasis) -> Self {
        let mut cov = Matrix6::zeros();
        cov[(0, 0)] = n_a / 2.0;
        cov[(1, 1)] = n_a / 2.0;
        if b.has_transfer() {
            cov[(4, 4)] = n_a / 2.0;
            cov[(5, 5)] = n_a / 2.0;
        }
        Self { cov, populations: Vector3::new(n_a, 0.0, 0.0), t: 0.0 }
    }

    fn pack(&self) -> Packed {
        let mut y = Packed::zeros();
        let mut k = 0;
        for i in 0..6 {
            for j in i..6 {
                y[k] = self.cov[(i, j)];
                k += 1;
            }
        }
        y.fixed_rows_mut::<3>(21).copy_from(&self.populations);
        y
    }

    fn unpack(y: &Packed, t: f64) -> Self {
        let mut cov = Matrix6::zeros();
        let mut k = 0;
        for i in 0..6 {
            for j in i..6 {
                cov[(i, j)] = y[k];
                cov[(j, i)] = y[k];
                k += 1;
            }
        }
        Self { cov, populations: y.fixed_rows::<3>(21).into_owned(), t }
    }

    /// Atomic Gaussian state in population normalization, with or without the ≀↓ mode.
    pub fn gaussian(&self, keep: bool) -> GaussianState {
        let (modes, k) = if keep { (vec![Mode::DownUp, Mode::WrDown], 4) } else { (vec![Mode::DownUp], 2) };
        GaussianState {
            modes,
            sigma: nalgebra::DMatrix::from_fn(k, k, |i, j| self.cov[(i, j)]),
            populations: [self.populations[0], self.populations[1], self.populations[2]],
            n_l: 0.0,
            normalization: Normalization::Population,
        }
    }
}

fn measurement_vector(s: &OdeState, c: &OdeCoefficients) -> SVector<f64, 6> {
    s.cov.row(0).transpose() * c.v + s.cov.row(2).transpose() * c.w
}

/// dCov/dt: backaction, commutator-anticommutator terms, pumping drift and noise.
pub fn covariance_rhs(s: &OdeState, c: &OdeCoefficients) -> Matrix6<f64> {
    let dc = c.drift * s.cov;
    let mut out = dc + dc.transpose();
    for k in 0..3 {
        out += c.noise[k] * s.populations[k];
    }
    let u = measurement_vector(s, c);
    out -= u * u.transpose() * c.kappa;
    let cm = c.measured_commutators(&s.populations);
    let coef = [[c.v * c.v, c.v * c.w], [c.v * c.w, c.w * c.w]];
    for i in 0..2 {
        for j in 0..2 {
            let k = c.kappa / 4.0 * coef[i][j];
            for a in 0..6 {
                for b in 0..6 {
                    out[(a, b)] -= k * (cm[i][a] * cm[j][b]).re;
                }
            }
        }
    }
    out
}

pub fn population_rhs(s: &OdeState, c: &OdeCoefficients) -> Vector3<f64> {
    c.pop * s.populations
}

/// Double-commutator covariance terms left out of [`covariance_rhs`].
pub fn dropped_terms(s: &OdeState, c: &OdeCoefficients) -> Matrix6<f64> {
    let p = &c.double_commutators;
    (s.cov * p.transpose() + p * s.cov) * (-c.kappa / 8.0)
}

struct Rhs<'a>(&'a OdeCoefficients);

impl System<f64, Packed> for Rhs<'_> {
    fn system(&self, t: f64, y: &Packed, dy: &mut Packed) {
        let s = OdeState::unpack(y, t);
        *dy = OdeState { cov: covariance_rhs(&s, self.0), populations: population_rhs(&s, self.0), t }.pack();
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct OdeSettings {
    pub rtol: f64,
    pub atol: f64,
    /// Output grid spacing in 1/γ_s.
    pub dt_out: f64,
}

impl Default for OdeSettings {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-6, dt_out: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct OdeRun {
    /// ζ_m is the smaller of the keep and drop readouts at each time.
    pub trajectory: Trajectory,
    pub states: Vec<OdeState>,
    pub zeta_keep: Vec<f64>,
    pub zeta_drop: Vec<f64>,
    /// max |dropped| / max |κ u uᵀ| over the run.
    pub dropped_ratio: f64,
    pub evaluations: u32,
}

fn run_solver<S, const N: usize>(sys: S, y0: SVector<f64, N>, t_max: f64, st: &OdeSettings) -> Result<(Vec<f64>, Vec<SVector<f64, N>>, u32)>
where
    S: System<f64, SVector<f64, N>>,
{
    if !(t_max > 0.0 && st.dt_out > 0.0 && st.rtol > 0.0 && st.atol > 0.0) {
        return Err(Error::Validation("integration span, grid and tolerances must be positive".into()));
    }
    let mut solver = Dop853::new(sys, 0.0, t_max, st.dt_out, y0, st.rtol, st.atol);
    let stats = solver.integrate().map_err(|e| Error::Numerical(format!("integrator stopped: {e}")))?;
    let ys = solver.y_out().clone();
    let ts = (0..ys.len()).map(|k| (k as f64 * st.dt_out).min(t_max)).collect();
    Ok((ts, ys, stats.num_eval))
}

/// Integrate from the vacuum of `b` to `t_max`.
pub fn integrate(b: &EmbeddedBasis, p: &ProtocolParams, t_max: f64, target: Target, st: &OdeSettings) -> Result<OdeRun> {
    p.validate()?;
    let c = OdeCoefficients::new(b, p)?;
    let s0 = OdeState::initial(p.n_a, b);
    let (ts, ys, evaluations) = run_solver(Rhs(&c), s0.pack(), t_max, st)?;
    let zeta = scorer(b.f, target, false)?;

    let keep = b.has_transfer();
    let mut tr = Trajectory::new("ode", keep);
    let (mut zk, mut zd, mut states) = (vec![], vec![], vec![]);
    let (mut dropped, mut retained) = (0.0f64, 0.0f64);
    for (t, y) in ts.into_iter().zip(ys.iter()) {
        let s = OdeState::unpack(y, t);
        if s.cov.iter().chain(s.populations.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!("non-finite covariance at t = {t}")));
        }
        let k = if keep { zeta(&s.gaussian(true))? } else { f64::INFINITY };
        let d = zeta(&s.gaussian(false))?;
        let u = measurement_vector(&s, &c);
        dropped = dropped.max(dropped_terms(&s, &c).abs().max());
        retained = retained.max((u * u.transpose() * c.kappa).abs().max());
        let pops = [s.populations[0], s.populations[1], s.populations[2]];
        tr.push(t, s.cov[(0, 0)], s.cov[(2, 2)], s.cov[(0, 2)], pops, k.min(d));
        zk.push(k);
        zd.push(d);
        states.push(s);
    }
    let kmin = zk.iter().copied().fold(f64::INFINITY, f64::min);
    let dmin = zd.iter().copied().fold(f64::INFINITY, f64::min);
    tr.keep = keep && kmin <= dmin;
    let dropped_ratio = if retained > 0.0 { dropped / retained } else { 0.0 };
    Ok(OdeRun { trajectory: tr, states, zeta_keep: zk, zeta_drop: zd, dropped_ratio, evaluations })
}

struct ExactF1 {
    kappa: f64,
    gamma: f64,
}

impl System<f64, Vector4<f64>> for ExactF1 {
    fn system(&self, _t: f64, y: &Vector4<f64>, dy: &mut Vector4<f64>) {
        let (v, n1, n0, nm) = (y[0], y[1], y[2], y[3]);
        let g = self.gamma;
        dy[0] = -self.kappa * v * v + g * (-2.0 / 9.0 * v + (n1 + n0 + nm) / 9.0);
        dy[1] = g * (-n1 / 6.0 + n0 / 12.0);
        dy[2] = g * (n1 / 12.0 - 2.0 * n0 / 9.0 + nm / 12.0);
        dy[3] = g * (-nm / 6.0 + n0 / 12.0);
    }
}

/// Closed four-variable system for the f = 1 spin coherent state: ΔF_z² and
/// the m_x populations, with ⟨F_x⟩ = N_A e^{−t/6}. `var_xdu` holds ΔF_z²/f so
/// that it compares with the pseudo-spin variance; populations are m_x = 1, 0, −1.
pub fn exact_f1_reference(p: &ProtocolParams, t_max: f64, st: &OdeSettings) -> Result<Trajectory> {
    p.validate()?;
    if p.f != 1.0 {
        return Err(Error::Validation(format!("exact reference needs f = 1, got {}", p.f)));
    }
    let gamma = if p.pumping { 1.0 } else { 0.0 };
    let y0 = Vector4::new(p.n_a / 2.0, p.n_a, 0.0, 0.0);
    let (ts, ys, _) = run_solver(ExactF1 { kappa: p.kappa(), gamma }, y0, t_max, st)?;
    let mut tr = Trajectory::new("exact_f1", false);
    for (t, y) in ts.into_iter().zip(ys) {
        let fx = p.n_a * (-gamma * t / 6.0).exp();
        let ntot = y[1] + y[2] + y[3];
        tr.push(t, y[0], 0.0, 0.0, [y[1], y[2], y[3]], 2.0 * ntot * y[0] / (fx * fx));
    }
    Ok(tr)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct OptimizerSettings {
    pub n_seeds: usize,
    pub seed: u64,
    pub t_max: f64,
    pub max_iters: u64,
    pub simplex_step: f64,
    pub ode: OdeSettings,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self { n_seeds: 128, seed: 0, t_max: 3.0, max_iters: 400, simplex_step: 0.2, ode: OdeSettings::default() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedResult {
    pub seed_index: usize,
    pub iterations: u64,
    /// (Re, Im) of ⟨f, m|↑⟩ for m = f … −f, unit norm, largest entry real.
    pub amplitudes: Vec<[f64; 2]>,
    pub start_db: f64,
    pub peak_db: f64,
    pub t_peak: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Optimum {
    pub best: SeedResult,
    pub seeds: Vec<SeedResult>,
}

fn to_state(p: &[f64]) -> Option<CVec> {
    let n: f64 = p.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(n > 1e-12 && n.is_finite()) {
        return None;
    }
    Some(CVec::from_fn(p.len() / 2, |k, _| Complex64::new(p[2 * k], p[2 * k + 1]) / n))
}

fn canonical(v: &CVec) -> Vec<[f64; 2]> {
    let k = v.iter().enumerate().fold(0, |m, (i, z)| if z.norm() > v[m].norm() { i } else { m });
    let ph = Complex64::from_polar(1.0, -v[k].arg());
    v.iter().map(|z| {
        let z = z * ph;
        [z.re, z.im]
    })
    .collect()
}

/// Peak of the ODE run for fiducial `up`; degenerate states give ζ = ∞.
pub fn fiducial_peak(sys: &SpinSystem, up: CVec, p: &ProtocolParams, t_max: f64, target: Target, st: &OdeSettings) -> Result<(f64, f64)> {
    match EmbeddedBasis::new(sys, up) {
        Ok(b) => {
            let pk = integrate(&b, p, t_max, target, st)?.trajectory.peak();
            Ok((pk.zeta, pk.t))
        }
        Err(Error::NoCoupledState) => Ok((f64::INFINITY, 0.0)),
        Err(e) => Err(e),
    }
}

/// Multi-start simplex search over |↑⟩ from Haar-random seeds; seed k uses
/// the stream `seed + k`.
pub fn optimize_fiducial(f: f64, p: &ProtocolParams, target: Target, s: &OptimizerSettings) -> Result<Optimum> {
    if s.n_seeds == 0 {
        return Err(Error::Validation("at least one seed is required".into()));
    }
    let p = ProtocolParams { f, ..*p };
    p.validate()?;
    let sys = SpinSystem::with_lande(f, p.g_f)?;
    let dim = 2 * sys.dim();
    let cost = |x: &[f64]| match to_state(x) {
        Some(v) => fiducial_peak(&sys, v, &p, s.t_max, target, &s.ode).map(|r| r.0).unwrap_or(f64::INFINITY),
        None => f64::INFINITY,
    };
    let seeds: Vec<Result<SeedResult>> = (0..s.n_seeds)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed.wrapping_add(k as u64));
            let x0: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = x0.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
            let x0: Vec<f64> = x0.iter().map(|x| x / n).collect();
            let start = cost(&x0);
            let (x, z, iterations) = nelder_mead(&cost, &x0, s.simplex_step, s.max_iters, 1e-10)?;
            let (x, z) = if z <= start { (x, z) } else { (x0, start) };
            let up = to_state(&x).ok_or_else(|| Error::Numerical("simplex collapsed to zero".into()))?;
            let (_, t_peak) = fiducial_peak(&sys, up.clone(), &p, s.t_max, target, &s.ode)?;
            Ok(SeedResult { seed_index: k, iterations, amplitudes: canonical(&up), start_db: db(start), peak_db: db(z), t_peak })
        })
        .collect();
    let seeds = seeds.into_iter().collect::<Result<Vec<_>>>()?;
    let best = seeds
        .iter()
        .max_by(|a, b| a.peak_db.total_cmp(&b.peak_db))
        .cloned()
        .expect("at least one seed");
    Ok(Optimum { best, seeds })
}
