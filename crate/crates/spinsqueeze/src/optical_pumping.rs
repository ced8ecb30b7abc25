//! Optical pumping: rotating-frame dissipator, jump operators, decoherence rates
//! and the Gaussian-channel generators on the embedded qutrit.
//!
//! Time is measured in units of 1/γ_s throughout.

use nalgebra::{DMatrix, Matrix3};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spin_algebra::{CMat, CVec, EmbeddedBasis, SpinSystem};

/// Largest γ_s·dt accepted by [`build_updates`].
pub const MAX_STEP: f64 = 1e-2;
const MODE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Quantization along the bias field (x).
    Parallel,
    Perpendicular,
}

#[derive(Debug, Clone)]
pub struct PumpModel {
    sys: SpinSystem,
    project: bool,
}

fn c(x: f64) -> Complex64 {
    Complex64::from(x)
}

impl PumpModel {
    pub fn new(sys: &SpinSystem) -> Self {
        Self { sys: sys.clone(), project: true }
    }

    /// Skip the projection onto the embedded qutrit before coefficient extraction.
    pub fn without_projection(mut self) -> Self {
        self.project = false;
        self
    }

    pub fn spin(&self) -> &SpinSystem {
        &self.sys
    }

    pub fn gamma_op(&self) -> f64 {
        2.0 / 3.0
    }

    /// D(o) = −(2/9)o + (g²/9)(f_z o f_z + ½ f_y o f_y + ½ f_x o f_x)
    pub fn dissipator(&self, o: &CMat) -> CMat {
        let s = &self.sys;
        let g2 = s.g_f() * s.g_f();
        let (fx, fy, fz) = (s.fx(), s.fy(), s.fz());
        o * c(-2.0 / 9.0) + (fz * o * fz + (fy * o * fy + fx * o * fx) * c(0.5)) * c(g2 / 9.0)
    }

    /// 𝒩(o, a) = ½D({o,a}) − ½{D(o), a} − ½{o, D(a)}
    pub fn noise_superop(&self, o: &CMat, a: &CMat) -> CMat {
        let d_o = self.dissipator(o);
        let d_a = self.dissipator(a);
        let h = c(0.5);
        self.dissipator(&(o * a + a * o)) * h - (&d_o * a + a * &d_o) * h - (o * &d_a + &d_a * o) * h
    }

    /// Jump operators {W_+, W_0, W_−}.
    pub fn jump_operators(&self, axis: Axis) -> [CMat; 3] {
        let s = &self.sys;
        let g = s.g_f();
        let id = s.identity();
        let i = Complex64::new(0.0, 1.0);
        match axis {
            Axis::Parallel => {
                let fp = s.fy() + s.fz() * i;
                let fm = s.fy() - s.fz() * i;
                let a = g / 3.0 * 0.5f64.sqrt();
                [fm * c(a), id * c(2.0 / 3.0), fp * c(a)]
            }
            Axis::Perpendicular => {
                let r = 0.5f64.sqrt();
                [
                    (&id * c(2.0 / 3.0) - s.fz() * c(g / 3.0)) * c(r),
                    s.fy() * c(g / 3.0),
                    (&id * c(2.0 / 3.0) + s.fz() * c(g / 3.0)) * c(r),
                ]
            }
        }
    }

    fn superop(&self, f: impl Fn(&CMat) -> CMat) -> CMat {
        let d = self.sys.dim();
        let mut out = CMat::zeros(d * d, d * d);
        for j in 0..d {
            for i in 0..d {
                let mut e = CMat::zeros(d, d);
                e[(i, j)] = c(1.0);
                let r = f(&e);
                for (k, z) in r.iter().enumerate() {
                    out[(k, i + d * j)] = *z;
                }
            }
        }
        out
    }

    /// Σ_q W_q ρ W_q† − Γ_op ρ in column-stacked form.
    pub fn superoperator_from_jumps(&self, axis: Axis) -> CMat {
        let w = self.jump_operators(axis);
        let gop = self.gamma_op();
        self.superop(|r| {
            let mut out = r * c(-gop);
            for wq in &w {
                out += wq * r * wq.adjoint();
            }
            out
        })
    }

    /// −(2/9)ρ + (g²/9)(f_y ρ f_y + f_z ρ f_z) in column-stacked form.
    pub fn lab_superoperator(&self) -> CMat {
        let s = &self.sys;
        let g2 = s.g_f() * s.g_f();
        self.superop(|r| r * c(-2.0 / 9.0) + (s.fy() * r * s.fy() + s.fz() * r * s.fz()) * c(g2 / 9.0))
    }

    /// The dissipator D in column-stacked form.
    pub fn rotating_superoperator(&self) -> CMat {
        self.superop(|r| self.dissipator(r))
    }

    fn projected(&self, o: CMat, p: &Option<CMat>) -> CMat {
        match p {
            Some(p) if self.project => p * o * p,
            _ => o,
        }
    }
}

/// Hilbert–Schmidt orthonormal qutrit operators.
#[derive(Debug, Clone)]
pub struct QutritOps {
    /// X↓↑, Y↓↑, X≀↓, Y≀↓, X↑≀, Y↑≀ (zero when ≀ is absent)
    pub l: [CMat; 6],
    /// |↑⟩⟨↑|, |↓⟩⟨↓|, |≀⟩⟨≀|
    pub n: [CMat; 3],
}

impl QutritOps {
    pub fn new(b: &EmbeddedBasis) -> Self {
        let zero = CVec::zeros(b.up.len());
        let wr = b.wr.as_ref().unwrap_or(&zero);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let x = |a: &CVec, k: &CVec| (a * k.adjoint() + k * a.adjoint()) * c(r);
        let y = |a: &CVec, k: &CVec| (a * k.adjoint() - k * a.adjoint()) * Complex64::new(0.0, r);
        let (up, dn) = (&b.up, &b.down);
        Self {
            l: [x(dn, up), y(dn, up), x(wr, dn), y(wr, dn), x(up, wr), y(up, wr)],
            n: [up * up.adjoint(), dn * dn.adjoint(), wr * wr.adjoint()],
        }
    }

    pub fn all(&self) -> Vec<&CMat> {
        self.l.iter().chain(self.n.iter()).collect()
    }

    pub fn projector(&self) -> CMat {
        &self.n[0] + &self.n[1] + &self.n[2]
    }
}

fn tr(a: &CMat, b: &CMat) -> f64 {
    let mut s = Complex64::from(0.0);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s.re
}

/// Generator matrices in units of γ_s.
#[derive(Debug, Clone)]
pub struct Generators {
    /// Tr(D(L_i) L_j)
    pub m: DMatrix<f64>,
    /// Tr(𝒩(L_i, L_j) n_↑)
    pub n_up: DMatrix<f64>,
    /// Tr(𝒩(L_i, L_j) n_↓)
    pub n_dn: DMatrix<f64>,
    /// Tr(D(n_φ) n_ψ) over ↑, ↓, ≀
    pub pop: Matrix3<f64>,
}

impl Generators {
    /// Population generator on (N_↑, N_↓).
    pub fn j2(&self) -> DMatrix<f64> {
        DMatrix::from_fn(2, 2, |i, j| self.pop[(i, j)])
    }
}

/// Generators over X↓↑, Y↓↑ and, with `keep` and an existing ≀, X≀↓, Y≀↓.
pub fn generators(b: &EmbeddedBasis, model: &PumpModel, keep: bool) -> Generators {
    let q = QutritOps::new(b);
    let p = Some(q.projector());
    let k = if keep && b.has_transfer() { 4 } else { 2 };
    let dl: Vec<CMat> = (0..k).map(|i| model.projected(model.dissipator(&q.l[i]), &p)).collect();
    let m = DMatrix::from_fn(k, k, |i, j| tr(&dl[i], &q.l[j]));
    let mut n_up = DMatrix::zeros(k, k);
    let mut n_dn = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let nz = model.projected(model.noise_superop(&q.l[i], &q.l[j]), &p);
            let (u, d) = (tr(&nz, &q.n[0]), tr(&nz, &q.n[1]));
            n_up[(i, j)] = u;
            n_up[(j, i)] = u;
            n_dn[(i, j)] = d;
            n_dn[(j, i)] = d;
        }
    }
    let dn: Vec<CMat> = q.n.iter().map(|n| model.projected(model.dissipator(n), &p)).collect();
    let pop = Matrix3::from_fn(|i, j| tr(&dn[i], &q.n[j]));
    Generators { m, n_up, n_dn, pop }
}

#[derive(Debug, Clone, Copy)]
pub struct Rates {
    pub gamma_op: f64,
    pub flip: f64,
    /// Γ_op − Σ_q |⟨ψ|W_q|ψ⟩|², every event that takes an atom out of |ψ⟩.
    pub loss_up: f64,
    pub loss_down: f64,
    /// Γ_op − Σ_q ‖W_q|ψ⟩‖², events that leave the f manifold.
    pub escape_up: f64,
    pub escape_down: f64,
}

pub fn rates(b: &EmbeddedBasis, model: &PumpModel, axis: Axis) -> Rates {
    let w = model.jump_operators(axis);
    let gop = model.gamma_op();
    let diag = |v: &CVec| w.iter().map(|wq| v.dotc(&(wq * v)).norm_sqr()).sum::<f64>();
    let kept = |v: &CVec| w.iter().map(|wq| (wq * v).norm_squared()).sum::<f64>();
    Rates {
        gamma_op: gop,
        flip: w.iter().map(|wq| b.down.dotc(&(wq * &b.up)).norm_sqr()).sum(),
        loss_up: gop - diag(&b.up),
        loss_down: gop - diag(&b.down),
        escape_up: gop - kept(&b.up),
        escape_down: gop - kept(&b.down),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CoherenceDiagnostics {
    pub c_up: f64,
    pub t_up: Option<f64>,
    pub n_up: Option<f64>,
    pub mode_condition: Option<f64>,
    pub keep_transfer: bool,
}

impl CoherenceDiagnostics {
    /// True when no fiducial/transfer pairwise coherences develop.
    pub fn mode_condition_holds(&self) -> bool {
        self.mode_condition.is_none_or(|m| m.abs() < MODE_TOL)
    }
}

fn unit(v: CVec) -> CVec {
    let n = v.norm();
    if n > 1e-14 {
        v / c(n)
    } else {
        v * c(0.0)
    }
}

pub fn coherence_diagnostics(b: &EmbeddedBasis, model: &PumpModel, axis: Axis) -> CoherenceDiagnostics {
    let w = model.jump_operators(axis);
    let s = model.spin();
    let dfz = s.fz() - s.identity() * c(b.mean_fz[0]);
    let c_up = 2.0
        * b.var_up.sqrt()
        * w.iter().map(|wq| (wq * &b.up).dotc(&(&dfz * (wq * &b.down))).re).sum::<f64>();
    let (t_up, n_up, mode_condition) = match &b.wr {
        None => (None, None, None),
        Some(wr) => {
            let mut t = 0.0;
            let mut n = 0.0;
            let mut mc = 0.0;
            for wq in &w {
                let qu = unit(wq * &b.up);
                let qd = unit(wq * &b.down);
                t += (qu.dotc(&b.down) * wr.dotc(&qd)).re;
                n += qu.dotc(wr).norm_sqr();
                mc += (b.up.dotc(&(wq * &b.up)) * b.down.dotc(&(wq.adjoint() * wr))).re;
            }
            (Some(t), Some(n), Some(mc))
        }
    };
    let keep_transfer = matches!((t_up, n_up), (Some(t), Some(n)) if t > 0.0 && n < MODE_TOL);
    CoherenceDiagnostics { c_up, t_up, n_up, mode_condition, keep_transfer }
}

/// Per-step pumping channel on the atomic block and the (N_↑, N_↓) populations.
#[derive(Debug, Clone)]
pub struct PumpUpdates {
    /// I + dt·M
    pub m: DMatrix<f64>,
    /// dt·N_↑-weighted generator
    pub n_up: DMatrix<f64>,
    /// dt·N_↓-weighted generator
    pub n_dn: DMatrix<f64>,
    /// I + dt·J on (N_↑, N_↓)
    pub j: DMatrix<f64>,
    pub dt: f64,
    pub keep: bool,
}

impl PumpUpdates {
    pub fn noise(&self, pops: [f64; 3]) -> DMatrix<f64> {
        &self.n_up * pops[0] + &self.n_dn * pops[1]
    }

    pub fn step_populations(&self, pops: [f64; 3]) -> [f64; 3] {
        let p = &self.j * nalgebra::DVector::from_vec(vec![pops[0], pops[1]]);
        [p[0], p[1], pops[2]]
    }
}

/// Build the first-order pumping channel for a step of γ_s·dt.
pub fn build_updates(b: &EmbeddedBasis, model: &PumpModel, dt: f64, keep: bool) -> Result<PumpUpdates> {
    if !(dt > 0.0 && dt <= MAX_STEP) {
        return Err(Error::Validation(format!("pump step γ_s·dt = {dt} outside (0, {MAX_STEP}]")));
    }
    let keep = keep && b.has_transfer();
    if keep {
        let d = coherence_diagnostics(b, model, Axis::Parallel);
        if !d.mode_condition_holds() {
            return Err(Error::UnsupportedPreparation(format!(
                "fiducial/transfer coherences develop (mode condition {:e})",
                d.mode_condition.unwrap_or(0.0)
            )));
        }
    }
    let g = generators(b, model, keep);
    let k = g.m.nrows();
    Ok(PumpUpdates {
        m: DMatrix::identity(k, k) + &g.m * dt,
        n_up: &g.n_up * dt,
        n_dn: &g.n_dn * dt,
        j: DMatrix::identity(2, 2) + g.j2() * dt,
        dt,
        keep,
    })
}
