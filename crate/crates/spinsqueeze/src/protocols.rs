//! Squeezing protocols as alternating Gaussian maps with optical pumping, and
//! the post-processing readouts that turn phase-plane squeezing into ζ_m.
//!
//! Time is in units of 1/γ_s.

use std::io::Write;

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_core::{GaussianState, Mode, Normalization, RMat};
use crate::numerics::golden_section;
use crate::optical_pumping::{build_updates, coherence_diagnostics, Axis, PumpModel, PumpUpdates};
use crate::spin_algebra::{collective_coupling_xi, prepare_fiducial, EmbeddedBasis, Preparation, SpinSystem};

/// Bracket for the per-step phase-plane rotation search.
const THETA_BOUND: f64 = 0.3;
const ALPHA_EDGE: f64 = 1e-6;

pub fn db(zeta: f64) -> f64 {
    -10.0 * zeta.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub od: f64,
    pub n_a: f64,
    /// Photons per probe pulse.
    pub n_l: f64,
    pub sigma0_over_a: f64,
    pub gamma_over_delta: f64,
    pub f: f64,
    pub g_f: f64,
    /// Simulation step γ_s·dt.
    pub dt: f64,
    /// False switches optical pumping off while keeping the coupling.
    pub pumping: bool,
}

impl ProtocolParams {
    /// OD 300, N_A 1e6, N_L 3e8, σ₀/A 3e-4, Γ/Δ 1e-3.
    pub fn paper(f: f64) -> Self {
        Self {
            od: 300.0,
            n_a: 1e6,
            n_l: 3e8,
            sigma0_over_a: 3e-4,
            gamma_over_delta: 1e-3,
            f,
            g_f: 1.0 / f,
            dt: 1e-3,
            pumping: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [self.od, self.n_a, self.n_l, self.sigma0_over_a, self.gamma_over_delta, self.f, self.g_f];
        if pos.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::Validation("all physical parameters must be positive".into()));
        }
        let od = self.n_a * self.sigma0_over_a;
        if ((self.od - od) / od).abs() > 1e-9 {
            return Err(Error::Validation(format!("OD {} inconsistent with N_A·σ₀/A = {od}", self.od)));
        }
        if self.chi() >= 0.1 {
            return Err(Error::Validation(format!("χ = {} is not small", self.chi())));
        }
        if !(self.dt > 0.0 && self.dt <= crate::optical_pumping::MAX_STEP) {
            return Err(Error::Validation(format!("step γ_s·dt = {} outside (0, 1e-2]", self.dt)));
        }
        Ok(())
    }

    /// χ = g_f (σ₀/A)(Γ/6Δ)
    pub fn chi(&self) -> f64 {
        self.g_f * self.sigma0_over_a * self.gamma_over_delta / 6.0
    }

    /// κ in units of γ_s.
    pub fn kappa(&self) -> f64 {
        self.chi().powi(2) * 4.0 / (self.sigma0_over_a * self.gamma_over_delta.powi(2))
    }

    /// γ_s Δt of one probe pulse of N_L photons.
    pub fn pulse_duration(&self) -> f64 {
        self.n_l * self.sigma0_over_a * self.gamma_over_delta.powi(2) / 4.0
    }

    /// Photons delivered during one simulation step.
    pub fn photons_per_step(&self) -> f64 {
        4.0 * self.dt / (self.sigma0_over_a * self.gamma_over_delta.powi(2))
    }

    /// Collective coupling ξ of one simulation step.
    pub fn xi_step(&self, b: &EmbeddedBasis) -> f64 {
        collective_coupling_xi(b, self.chi(), self.photons_per_step(), self.n_a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Qnd,
    DoublePass,
    Eraser,
    PhaseMatching,
}

impl std::str::FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "qnd" => Protocol::Qnd,
            "double_pass" | "double-pass" => Protocol::DoublePass,
            "eraser" => Protocol::Eraser,
            "phase_matching" | "phase-matching" => Protocol::PhaseMatching,
            other => return Err(Error::InvalidArgument(format!("unknown protocol `{other}`"))),
        })
    }
}

/// Post-processing target. `alpha: None` searches α on (0, π/2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Scs,
    Yurke { alpha: Option<f64> },
    HalfYurke { alpha: Option<f64> },
}

/// Readout coefficients of a post-processed target state.
#[derive(Debug, Clone, Copy)]
pub struct Readout {
    pub f: f64,
    pub v: f64,
    pub w: f64,
    pub mean_fx: [f64; 3],
}

impl Readout {
    pub fn from_basis(b: &EmbeddedBasis) -> Self {
        Self { f: b.f, v: b.v, w: b.w, mean_fx: b.mean_fx }
    }

    pub fn for_target(prep: Preparation, f: f64) -> Result<Self> {
        let s = SpinSystem::new(f)?;
        Ok(Self::from_basis(&EmbeddedBasis::new(&s, prepare_fiducial(&s, prep)?)?))
    }

    /// Quadratic form of the readout numerator over the readout angle.
    pub fn form(&self, s: &GaussianState) -> Result<Matrix2<f64>> {
        s.require(Normalization::Population)?;
        let (v, w) = (self.v, self.w);
        let a = s.offset(Mode::DownUp)?;
        let sg = &s.sigma;
        Ok(match s.offset(Mode::WrDown) {
            Ok(b) => {
                let q00 = v * v * sg[(a, a)] + 2.0 * v * w * sg[(a, b)] + w * w * sg[(b, b)];
                let q11 = v * v * sg[(a + 1, a + 1)] + 2.0 * v * w * sg[(a + 1, b + 1)] + w * w * sg[(b + 1, b + 1)];
                let q01 = v * v * sg[(a, a + 1)]
                    + v * w * (sg[(a, b + 1)] + sg[(b, a + 1)])
                    + w * w * sg[(b, b + 1)];
                Matrix2::new(q00, -q01, -q01, q11)
            }
            Err(_) => {
                let e = w * w * s.populations[1] / 2.0;
                Matrix2::new(
                    v * v * sg[(a, a)] + e,
                    -v * v * sg[(a, a + 1)],
                    -v * v * sg[(a, a + 1)],
                    v * v * sg[(a + 1, a + 1)] + e,
                )
            }
        })
    }

    fn prefactor(&self, s: &GaussianState) -> f64 {
        let [nu, nd, nw] = s.populations;
        let keep = s.offset(Mode::WrDown).is_ok();
        let (ntot, fx) = if keep {
            (nu + nd + nw, self.mean_fx[0] * nu + self.mean_fx[1] * nd + self.mean_fx[2] * nw)
        } else {
            (nu + nd, self.mean_fx[0] * nu + self.mean_fx[1] * nd)
        };
        if fx.abs() < 1e-300 {
            return f64::INFINITY;
        }
        2.0 * self.f * ntot / (fx * fx)
    }

    /// ζ_m with the readout along X.
    pub fn zeta(&self, s: &GaussianState) -> Result<f64> {
        Ok(self.prefactor(s) * self.form(s)?[(0, 0)])
    }

    /// ζ_m minimized over the readout angle.
    pub fn zeta_min(&self, s: &GaussianState) -> Result<f64> {
        let q = self.form(s)?;
        Ok(self.prefactor(s) * q.symmetric_eigen().eigenvalues.min())
    }
}

fn target_readout(f: f64, t: Target, alpha: f64) -> Result<Option<Readout>> {
    let prep = match t {
        Target::Scs => Preparation::Scs,
        Target::Yurke { .. } => Preparation::Yurke { alpha },
        Target::HalfYurke { .. } => Preparation::HalfYurke { alpha },
    };
    if !matches!(t, Target::Scs) && (alpha.sin() * alpha.cos()).abs() < 1e-12 {
        // α at the edge: the mean spin vanishes while the anti-squeezed term does not
        return Ok(None);
    }
    Readout::for_target(prep, f).map(Some)
}

fn evaluate(s: &GaussianState, f: f64, target: Target, min_angle: bool) -> Result<f64> {
    let z = |r: &Readout| if min_angle { r.zeta_min(s) } else { r.zeta(s) };
    match target {
        Target::Scs => z(&Readout::for_target(Preparation::Scs, f)?),
        Target::Yurke { alpha: Some(a) } | Target::HalfYurke { alpha: Some(a) } => match target_readout(f, target, a)? {
            Some(r) => z(&r),
            None => Ok(f64::INFINITY),
        },
        Target::Yurke { alpha: None } | Target::HalfYurke { alpha: None } => {
            let cost = |a: f64| match target_readout(f, target, a) {
                Ok(Some(r)) => z(&r).unwrap_or(f64::INFINITY),
                _ => f64::INFINITY,
            };
            let (_, best) = golden_section(&cost, ALPHA_EDGE, std::f64::consts::FRAC_PI_2 - ALPHA_EDGE, 1e-9)?;
            Ok(best)
        }
    }
}

pub type Scorer = Box<dyn Fn(&GaussianState) -> Result<f64> + Send + Sync>;

/// Boxed ζ_m evaluator for a target; fixed readouts are built once.
pub fn scorer(f: f64, target: Target, min_angle: bool) -> Result<Scorer> {
    let alpha = match target {
        Target::Scs => Some(0.0),
        Target::Yurke { alpha } | Target::HalfYurke { alpha } => alpha,
    };
    Ok(match alpha {
        Some(a) => match target_readout(f, target, a)? {
            Some(r) if min_angle => Box::new(move |s: &GaussianState| r.zeta_min(s)),
            Some(r) => Box::new(move |s: &GaussianState| r.zeta(s)),
            None => Box::new(|_: &GaussianState| Ok(f64::INFINITY)),
        },
        None => Box::new(move |s: &GaussianState| evaluate(s, f, target, min_angle)),
    })
}

/// ζ_m of a population-normalized state for a post-processing target.
pub fn squeezing_parameter(s: &GaussianState, f: f64, target: Target) -> Result<f64> {
    evaluate(s, f, target, false)
}

/// As [`squeezing_parameter`], minimized over the readout angle.
pub fn squeezing_parameter_min_angle(s: &GaussianState, f: f64, target: Target) -> Result<f64> {
    evaluate(s, f, target, true)
}

/// Pumping channel on the atomic block; light untouched.
pub fn pump_step(s: &GaussianState, u: &PumpUpdates) -> Result<GaussianState> {
    let d = s.dim();
    let k = u.m.nrows();
    let mut m = RMat::identity(d, d);
    let mut n = RMat::zeros(d, d);
    m.view_mut((0, 0), (k, k)).copy_from(&u.m);
    n.view_mut((0, 0), (k, k)).copy_from(&u.noise(s.populations));
    let mut out = s.apply_map(&m, &n)?;
    out.populations = u.step_populations(s.populations);
    Ok(out)
}

/// Per-step maps of one run.
#[derive(Debug, Clone)]
pub struct Stepper {
    /// Single-atom couplings χ²(Δf_z²)_↑ and χ²w²/2 (collective ξ in unit normalization).
    pub xi_up: f64,
    pub xi_dn: f64,
    /// Photons per step.
    pub n_l: f64,
    pub pump: Option<PumpUpdates>,
    pub keep: bool,
}

impl Stepper {
    /// Coherent, unit-normalized stepper with collective coupling ξ per pass.
    pub fn unit(xi: f64) -> Self {
        Self { xi_up: xi, xi_dn: 0.0, n_l: 1.0, pump: None, keep: false }
    }

    pub fn new(b: &EmbeddedBasis, p: &ProtocolParams, keep: bool) -> Result<Self> {
        p.validate()?;
        let keep = keep && b.has_transfer();
        let chi2 = p.chi().powi(2);
        let pump = if p.pumping {
            let s = SpinSystem::with_lande(b.f, b.g_f)?;
            Some(build_updates(b, &PumpModel::new(&s), p.dt, keep)?)
        } else {
            None
        };
        Ok(Self {
            xi_up: chi2 * b.var_up,
            xi_dn: if keep { chi2 * b.w * b.w / 2.0 } else { 0.0 },
            n_l: p.photons_per_step(),
            pump,
            keep,
        })
    }

    pub fn initial_state(&self, n_a: f64) -> GaussianState {
        GaussianState::vacuum(n_a, self.n_l, self.keep)
    }

    /// Faraday map at the state's current populations.
    pub fn faraday(&self, s: &GaussianState) -> Result<RMat> {
        let w = s.commutator_weights();
        let l = s.offset(Mode::Light)?;
        let wl = w[l / 2];
        let mut m = RMat::identity(s.dim(), s.dim());
        let a = s.offset(Mode::DownUp)?;
        m[(a + 1, l + 1)] = -self.xi_up.sqrt() * w[a / 2];
        m[(l, a)] = self.xi_up.sqrt() * wl;
        if let Ok(b) = s.offset(Mode::WrDown) {
            m[(b + 1, l + 1)] = -self.xi_dn.sqrt() * w[b / 2];
            m[(l, b)] = self.xi_dn.sqrt() * wl;
        }
        Ok(m)
    }

    fn faraday_pass(&self, s: &GaussianState) -> Result<GaussianState> {
        let m = self.faraday(s)?;
        let z = DMatrix::zeros(s.dim(), s.dim());
        s.apply_map(&m, &z)
    }

    pub fn pump(&self, s: &GaussianState) -> Result<GaussianState> {
        match &self.pump {
            Some(u) => pump_step(s, u),
            None => Ok(s.clone()),
        }
    }

    /// Pump, Faraday, homodyne on X_y, fresh light.
    pub fn qnd(&self, s: &GaussianState) -> Result<GaussianState> {
        let s = self.faraday_pass(&self.pump(s)?)?;
        Ok(s.homodyne(Mode::Light)?.append_fresh_light(self.n_l))
    }

    /// Two pumped passes around a waveplate; then the light is traced out or
    /// erased by homodyne on (X_y − Y_y)/√2. Fresh light is appended.
    pub fn double_pass(&self, s: &GaussianState, eraser: bool) -> Result<GaussianState> {
        let s = self.faraday_pass(&self.pump(s)?)?;
        let z = DMatrix::zeros(s.dim(), s.dim());
        let s = s.apply_map(&s.waveplate(), &z)?;
        let s = self.faraday_pass(&self.pump(&s)?)?;
        let s = if eraser {
            s.apply_map(&s.eraser(), &z)?.homodyne(Mode::Light)?
        } else {
            s.partial_trace(Mode::Light)?
        };
        Ok(s.append_fresh_light(self.n_l))
    }

    fn atomic_modes(s: &GaussianState) -> Vec<Mode> {
        s.modes.iter().copied().filter(|m| *m != Mode::Light).collect()
    }

    /// Rotation angle that minimizes `objective` after the next eraser double pass.
    pub fn best_rotation(&self, s: &GaussianState, objective: &dyn Fn(&GaussianState) -> f64) -> Result<f64> {
        let modes = Self::atomic_modes(s);
        let z = DMatrix::zeros(s.dim(), s.dim());
        let cost = |th: f64| {
            s.apply_map(&s.rotation(th, &modes), &z)
                .and_then(|r| self.double_pass(&r, true))
                .map(|n| objective(&n))
                .unwrap_or(f64::INFINITY)
        };
        Ok(golden_section(&cost, -THETA_BOUND, THETA_BOUND, 1e-7)?.0)
    }

    pub fn rotate(&self, s: &GaussianState, theta: f64) -> Result<GaussianState> {
        let modes = Self::atomic_modes(s);
        s.apply_map(&s.rotation(theta, &modes), &DMatrix::zeros(s.dim(), s.dim()))
    }
}

fn unit_zeta(s: &GaussianState) -> f64 {
    let b = s.sigma.view((0, 0), (2, 2)).into_owned();
    2.0 * b.symmetric_eigen().eigenvalues.min()
}

/// ζ_q after n coherent QND steps of coupling ξ.
pub fn coherent_qnd(xi: f64, n: usize) -> Result<f64> {
    let st = Stepper::unit(xi);
    let mut s = GaussianState::unit_vacuum(&[Mode::DownUp, Mode::Light]);
    for _ in 0..n {
        s = st.qnd(&s)?;
    }
    Ok(2.0 * s.sigma[(0, 0)])
}

/// ζ_q after one coherent double pass of coupling ξ per pass.
pub fn coherent_double_pass(xi: f64, eraser: bool) -> Result<f64> {
    let s = Stepper::unit(xi).double_pass(&GaussianState::unit_vacuum(&[Mode::DownUp, Mode::Light]), eraser)?;
    Ok(unit_zeta(&s))
}

/// ζ_q after n phase-matching iterations sharing a total coupling ξ.
pub fn coherent_phase_matching(xi_total: f64, n: usize) -> Result<f64> {
    let st = Stepper::unit(xi_total / n as f64);
    let mut s = GaussianState::unit_vacuum(&[Mode::DownUp, Mode::Light]);
    for k in 0..n {
        s = st.double_pass(&s, true)?;
        if k + 1 < n {
            let th = st.best_rotation(&s, &unit_zeta)?;
            s = st.rotate(&s, th)?;
        }
    }
    Ok(unit_zeta(&s))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Peak {
    pub t: f64,
    pub zeta: f64,
    pub db: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub label: String,
    pub keep: bool,
    pub t: Vec<f64>,
    pub var_xdu: Vec<f64>,
    pub var_xwd: Vec<f64>,
    pub cov: Vec<f64>,
    pub n_up: Vec<f64>,
    pub n_down: Vec<f64>,
    pub n_wr: Vec<f64>,
    pub zeta: Vec<f64>,
}

impl Trajectory {
    pub fn new(label: impl Into<String>, keep: bool) -> Self {
        Self {
            label: label.into(),
            keep,
            t: vec![],
            var_xdu: vec![],
            var_xwd: vec![],
            cov: vec![],
            n_up: vec![],
            n_down: vec![],
            n_wr: vec![],
            zeta: vec![],
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(&mut self, t: f64, vx: f64, vw: f64, c: f64, pops: [f64; 3], zeta: f64) {
        self.t.push(t);
        self.var_xdu.push(vx);
        self.var_xwd.push(vw);
        self.cov.push(c);
        self.n_up.push(pops[0]);
        self.n_down.push(pops[1]);
        self.n_wr.push(pops[2]);
        self.zeta.push(zeta);
    }

    fn record(&mut self, t: f64, s: &GaussianState, zeta: f64) {
        let a = s.offset(Mode::DownUp).unwrap_or(0);
        let (vw, c) = match s.offset(Mode::WrDown) {
            Ok(b) => (s.sigma[(b, b)], s.sigma[(a, b)]),
            Err(_) => (0.0, 0.0),
        };
        self.push(t, s.sigma[(a, a)], vw, c, s.populations, zeta);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Global minimum of ζ_m on the grid.
    pub fn peak(&self) -> Peak {
        let (k, z) = self
            .zeta
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (k, z)| if z < acc.1 { (k, z) } else { acc });
        Peak { t: self.t.get(k).copied().unwrap_or(0.0), zeta: z, db: db(z) }
    }

    pub fn db(&self) -> Vec<f64> {
        self.zeta.iter().map(|&z| db(z)).collect()
    }

    /// Index of the grid time nearest to `t`.
    pub fn nearest(&self, t: f64) -> usize {
        let k = self.t.partition_point(|&x| x < t);
        if k == 0 {
            0
        } else if k >= self.t.len() {
            self.t.len() - 1
        } else if (self.t[k] - t).abs() < (t - self.t[k - 1]).abs() {
            k
        } else {
            k - 1
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t_gamma_s", "varXdu", "varXwd", "cov", "N_up", "N_down", "N_wr", "zeta_m", "zeta_m_dB"])?;
        for k in 0..self.t.len() {
            let row = [
                self.t[k],
                self.var_xdu[k],
                self.var_xwd[k],
                self.cov[k],
                self.n_up[k],
                self.n_down[k],
                self.n_wr[k],
                self.zeta[k],
                db(self.zeta[k]),
            ];
            wr.write_record(row.iter().map(|x| format!("{x:.10e}")))?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Run a protocol from the vacuum of `basis` up to `t_max`. `keep: None`
/// preserves the transfer state when the pumping diagnostics favour it.
pub fn simulate(
    protocol: Protocol,
    basis: &EmbeddedBasis,
    params: &ProtocolParams,
    t_max: f64,
    target: Target,
    keep: Option<bool>,
) -> Result<Trajectory> {
    params.validate()?;
    if (basis.f - params.f).abs() > 1e-12 {
        return Err(Error::Validation(format!("basis f = {} but params f = {}", basis.f, params.f)));
    }
    let keep = match keep {
        Some(k) => k,
        None => {
            let s = SpinSystem::with_lande(basis.f, basis.g_f)?;
            coherence_diagnostics(basis, &PumpModel::new(&s), Axis::Parallel).keep_transfer
        }
    } && basis.has_transfer();
    let st = Stepper::new(basis, params, keep)?;
    let f = params.f;
    let scs = Readout::for_target(Preparation::Scs, f)?;
    let zeta = scorer(f, target, protocol != Protocol::Qnd)?;

    let mut s = st.initial_state(params.n_a);
    let mut tr = Trajectory::new(format!("{protocol:?}"), keep);
    tr.record(0.0, &s, zeta(&s)?);
    let step = if protocol == Protocol::Qnd { params.dt } else { 2.0 * params.dt };
    let n = (t_max / step).round() as usize;
    for k in 1..=n {
        s = match protocol {
            Protocol::Qnd => st.qnd(&s)?,
            Protocol::DoublePass => st.double_pass(&s, false)?,
            Protocol::Eraser | Protocol::PhaseMatching => st.double_pass(&s, true)?,
        };
        if !s.is_physical() {
            return Err(Error::Numerical(format!("covariance left the physical set at t = {}", k as f64 * step)));
        }
        let z = zeta(&s)?;
        if z.is_nan() {
            return Err(Error::Numerical(format!("ζ_m is NaN at t = {}", k as f64 * step)));
        }
        tr.record(k as f64 * step, &s, z);
        if protocol == Protocol::PhaseMatching && k < n {
            let obj = |x: &GaussianState| scs.form(x).map(|q| q.symmetric_eigen().eigenvalues.min()).unwrap_or(f64::INFINITY);
            let th = st.best_rotation(&s, &obj)?;
            s = st.rotate(&s, th)?;
        }
    }
    Ok(tr)
}

/// Embedded basis of a named preparation.
pub fn basis_for(prep: Preparation, f: f64) -> Result<EmbeddedBasis> {
    let s = SpinSystem::new(f)?;
    EmbeddedBasis::new(&s, prepare_fiducial(&s, prep)?)
}
