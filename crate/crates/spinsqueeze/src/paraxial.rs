//! Three-dimensional probe and cloud: Laguerre–Gauss spin waves on
//! longitudinal slices, driven by QND measurement of the fundamental mode and
//! by spatially varying optical pumping.
//!
//! Lengths are in μm, time in units of the peak scattering rate γ₀.
//! Only l = 0 radial modes enter; Gouy phases are absorbed into the spin waves
//! of each slice, which leaves real tables and a real symmetric covariance.

use std::f64::consts::PI;
use std::io::Write;

use gauss_quad::{GaussLaguerre, GaussLegendre};
use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut, DVector, Matrix3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::DormandPrince;
use crate::optical_pumping::{PumpModel, QutritOps};
use crate::protocols::{db, Peak, Readout};
use crate::spin_algebra::{prepare_fiducial, CMat, EmbeddedBasis, Preparation, SpinSystem};

/// Cs D2 line.
pub const WAVELENGTH_UM: f64 = 0.852;
const RADIAL_NODES: usize = 40;
const SLAB_NODES: usize = 12;

/// Generalized Laguerre polynomial L_p^α(x).
pub fn laguerre(p: usize, alpha: f64, x: f64) -> f64 {
    let (mut a, mut b) = (1.0, 1.0 + alpha - x);
    if p == 0 {
        return a;
    }
    for n in 1..p {
        let n = n as f64;
        let c = ((2.0 * n + 1.0 + alpha - x) * b - (n + alpha) * a) / (n + 1.0);
        a = b;
        b = c;
    }
    b
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BeamGeometry {
    pub w0: f64,
    pub wavelength: f64,
}

impl BeamGeometry {
    pub fn new(w0: f64, wavelength: f64) -> Result<Self> {
        if !(w0 > 0.0 && wavelength > 0.0 && w0.is_finite()) {
            return Err(Error::Validation(format!("beam waist {w0} and wavelength {wavelength} must be positive")));
        }
        Ok(Self { w0, wavelength })
    }

    pub fn k0(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    pub fn z_r(&self) -> f64 {
        self.k0() * self.w0 * self.w0 / 2.0
    }

    /// A = πw0²/2
    pub fn area(&self) -> f64 {
        PI * self.w0 * self.w0 / 2.0
    }

    /// Resonant cross section 3λ²/2π.
    pub fn sigma0(&self) -> f64 {
        3.0 * self.wavelength * self.wavelength / (2.0 * PI)
    }

    pub fn waist(&self, z: f64) -> f64 {
        self.w0 * (1.0 + (z / self.z_r()).powi(2)).sqrt()
    }

    pub fn curvature(&self, z: f64) -> f64 {
        if z == 0.0 {
            f64::INFINITY
        } else {
            z * (1.0 + (self.z_r() / z).powi(2))
        }
    }

    pub fn gouy(&self, z: f64) -> f64 {
        (z / self.z_r()).atan()
    }
}

/// Laguerre–Gauss mode u_pl with ∫|u|² d²r = A and u_00(0, 0) = 1.
pub fn mode_function(p: usize, l: i32, r: f64, phi: f64, z: f64, beam: &BeamGeometry) -> Complex64 {
    let al = l.unsigned_abs() as usize;
    let w = beam.waist(z);
    let x = 2.0 * r * r / (w * w);
    let norm = ((1..=p).map(|k| k as f64).product::<f64>() / (1..=p + al).map(|k| k as f64).product::<f64>()).sqrt();
    let amp = norm * beam.w0 / w * x.sqrt().powi(al as i32) * laguerre(p, al as f64, x) * (-r * r / (w * w)).exp();
    let phase = beam.k0() * r * r / (2.0 * beam.curvature(z)) + l as f64 * phi
        - (2 * p + al + 1) as f64 * beam.gouy(z);
    Complex64::from_polar(amp, phase)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CloudGeometry {
    /// Peak density in μm⁻³.
    pub eta0: f64,
    pub sigma_perp: f64,
    pub sigma_z: f64,
}

impl CloudGeometry {
    pub fn new(eta0: f64, sigma_perp: f64, sigma_z: f64) -> Result<Self> {
        if [eta0, sigma_perp, sigma_z].iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::Validation("cloud density and widths must be positive".into()));
        }
        Ok(Self { eta0, sigma_perp, sigma_z })
    }

    /// Cloud holding `n_a` atoms at peak density `eta0_cm3` (cm⁻³) and aspect ratio σ_z/σ_⊥.
    pub fn from_atoms(n_a: f64, eta0_cm3: f64, aspect_ratio: f64) -> Result<Self> {
        if [n_a, eta0_cm3, aspect_ratio].iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::Validation("atom number, density and aspect ratio must be positive".into()));
        }
        let eta0 = eta0_cm3 * 1e-12;
        let sp = (n_a / (eta0 * (PI / 2.0).powf(1.5) * aspect_ratio)).cbrt();
        Self::new(eta0, sp, aspect_ratio * sp)
    }

    pub fn n_a(&self) -> f64 {
        self.eta0 * (PI / 2.0).powf(1.5) * self.sigma_perp.powi(2) * self.sigma_z
    }

    pub fn aspect_ratio(&self) -> f64 {
        self.sigma_z / self.sigma_perp
    }

    pub fn density(&self, r: f64, z: f64) -> f64 {
        self.eta0 * (-2.0 * (r / self.sigma_perp).powi(2) - 2.0 * (z / self.sigma_z).powi(2)).exp()
    }

    /// Same widths, density rescaled to reach `od`.
    pub fn with_od_eff(&self, od: f64, beam: &BeamGeometry) -> Result<Self> {
        let now = od_eff(self, beam)?;
        Self::new(self.eta0 * od / now, self.sigma_perp, self.sigma_z)
    }
}

struct Radial(GaussLaguerre);

impl Radial {
    fn new() -> Self {
        Self(GaussLaguerre::new(RADIAL_NODES, 0.0).expect("valid Gauss-Laguerre order"))
    }

    /// ∫₀^∞ e^{−a x} g(x) dx
    fn integrate(&self, a: f64, g: impl Fn(f64) -> f64) -> f64 {
        self.0.integrate(|x| g(x / a)) / a
    }
}

/// Transverse quantities of a plane: s = w0²/w², a = w²/σ_⊥², and the slab weight (πw²/2)η(z).
fn plane(cloud: &CloudGeometry, beam: &BeamGeometry, z: f64) -> (f64, f64, f64) {
    let w2 = beam.waist(z).powi(2);
    let s = beam.w0 * beam.w0 / w2;
    let a = w2 / cloud.sigma_perp.powi(2);
    (s, a, PI * w2 / 2.0 * cloud.density(0.0, z))
}

/// N_eff^{p0(K)} = ∫ η β_p0^K d³r, Gouy phase removed.
pub fn effective_atom_number(cloud: &CloudGeometry, beam: &BeamGeometry, p: usize, k: u32) -> Result<f64> {
    if !(1..=3).contains(&k) {
        return Err(Error::Validation(format!("effective atom number order {k} outside 1..=3")));
    }
    let rad = Radial::new();
    let kf = k as f64;
    let integrand = |z: f64| {
        let (s, a, wt) = plane(cloud, beam, z);
        wt * s.powi(k as i32) * rad.integrate(a + kf, |x| laguerre(p, 0.0, x).powi(k as i32))
    };
    let half = 6.0 * cloud.sigma_z;
    let scale = cloud.n_a();
    let out = quadrature::double_exponential::integrate(integrand, -half, half, 1e-10 * scale);
    if !out.integral.is_finite() {
        return Err(Error::Numerical("effective atom number did not converge".into()));
    }
    Ok(out.integral)
}

/// OD_eff = N_eff^{00(2)} σ₀/A
pub fn od_eff(cloud: &CloudGeometry, beam: &BeamGeometry) -> Result<f64> {
    Ok(effective_atom_number(cloud, beam, 0, 2)? * beam.sigma0() / beam.area())
}

/// Per-slice projection coefficients with the Gouy phases factored out.
#[derive(Debug, Clone)]
pub struct ProjectionTables {
    pub z: Vec<f64>,
    pub gouy: Vec<f64>,
    /// c[k][(p, q)] = s·∫e^{−2x}L_pL_q
    pub c: Vec<DMatrix<f64>>,
    /// g[k][p][(q, r)] = s²·∫e^{−3x}L_pL_qL_r
    pub g: Vec<Vec<DMatrix<f64>>>,
}

impl ProjectionTables {
    pub fn modes(&self) -> usize {
        self.c.first().map_or(0, |m| m.nrows())
    }

    /// c^{p0}_{q0}(z_k) with its Gouy phase.
    pub fn c_complex(&self, k: usize, p: usize, q: usize) -> Complex64 {
        Complex64::from_polar(self.c[k][(p, q)], 2.0 * (p as f64 - q as f64) * self.gouy[k])
    }
}

pub fn projection_tables(beam: &BeamGeometry, z: &[f64], p_max: usize) -> ProjectionTables {
    let rad = Radial::new();
    let n = p_max + 1;
    let l = |p: usize, x: f64| laguerre(p, 0.0, x);
    let m2 = DMatrix::from_fn(n, n, |p, q| rad.integrate(2.0, |x| l(p, x) * l(q, x)));
    let m3: Vec<DMatrix<f64>> =
        (0..n).map(|p| DMatrix::from_fn(n, n, |q, r| rad.integrate(3.0, |x| l(p, x) * l(q, x) * l(r, x)))).collect();
    let mut c = vec![];
    let mut g = vec![];
    for &zk in z {
        let s = (beam.w0 / beam.waist(zk)).powi(2);
        c.push(&m2 * s);
        g.push(m3.iter().map(|m| m * (s * s)).collect());
    }
    ProjectionTables { z: z.to_vec(), gouy: z.iter().map(|&zk| beam.gouy(zk)).collect(), c, g }
}

/// Pumping generators of the carried quadratures (X↓↑ and, with a transfer state, X≀↓).
#[derive(Debug, Clone)]
struct SliceGenerators {
    drift: DMatrix<f64>,
    noise: [DMatrix<f64>; 3],
    pop: Matrix3<f64>,
    single: DMatrix<f64>,
}

fn slice_generators(b: &EmbeddedBasis) -> Result<SliceGenerators> {
    let ops = QutritOps::new(b);
    let model = PumpModel::new(&SpinSystem::with_lande(b.f, b.g_f)?);
    let q: Vec<&CMat> = if b.has_transfer() { vec![&ops.l[0], &ops.l[2]] } else { vec![&ops.l[0]] };
    let n = q.len();
    let tr = |a: &CMat, c: &CMat| (a * c).trace().re;
    let drift = DMatrix::from_fn(n, n, |i, j| tr(&model.dissipator(q[i]), q[j]));
    let noise = [0, 1, 2].map(|k| DMatrix::from_fn(n, n, |i, j| tr(&model.noise_superop(q[i], q[j]), &ops.n[k])));
    let pop = Matrix3::from_fn(|i, j| tr(&model.dissipator(&ops.n[i]), &ops.n[j]));
    let up = &b.up;
    let single = DMatrix::from_fn(n, n, |i, j| {
        let sym = (q[i] * q[j] + q[j] * q[i]) * Complex64::new(0.5, 0.0);
        up.dotc(&(&sym * up)).re - up.dotc(&(q[i] * up)).re * up.dotc(&(q[j] * up)).re
    });
    Ok(SliceGenerators { drift, noise, pop, single })
}

/// Coarse-grained spin waves: covariance over (slice k, radial mode p,
/// quadrature i) and effective populations N_ψ^{p0}(z_k).
#[derive(Debug, Clone)]
pub struct SpinWaveLattice {
    pub slices: usize,
    pub modes: usize,
    pub quadratures: usize,
    pub dz: f64,
    pub tables: ProjectionTables,
    pub cov: DMatrix<f64>,
    /// Row k·modes + p holds (N_↑, N_↓, N_≀).
    pub populations: DMatrix<f64>,
    /// N_eff^{(1)} and N_eff^{(2)} summed over slices.
    pub n1: f64,
    pub n2: f64,
    pub f: f64,
    coupling: [f64; 2],
    readout: Readout,
    gens: SliceGenerators,
}

/// Slice grid spanning ±3σ_z, then per-slice initial means and δ_kk' covariances.
pub fn lattice_init(
    cloud: &CloudGeometry,
    beam: &BeamGeometry,
    slices: usize,
    p_max: usize,
    f: f64,
    prep: Preparation,
) -> Result<SpinWaveLattice> {
    if prep != Preparation::Scs {
        return Err(Error::Validation(format!("paraxial runs support the SCS only, got {}", prep.name())));
    }
    if slices == 0 {
        return Err(Error::Validation("at least one slice is required".into()));
    }
    let sys = SpinSystem::new(f)?;
    let b = EmbeddedBasis::new(&sys, prepare_fiducial(&sys, prep)?)?;
    let gens = slice_generators(&b)?;
    let nq = gens.drift.nrows();
    let np = p_max + 1;
    let dz = 6.0 * cloud.sigma_z / slices as f64;
    let z: Vec<f64> = (0..slices).map(|k| -3.0 * cloud.sigma_z + (k as f64 + 0.5) * dz).collect();
    let tables = projection_tables(beam, &z, p_max);
    let rad = Radial::new();
    let l = |p: usize, x: f64| laguerre(p, 0.0, x);

    let dim = slices * np * nq;
    let mut cov = DMatrix::zeros(dim, dim);
    let mut populations = DMatrix::zeros(slices * np, 3);
    let (mut n1, mut n2) = (0.0, 0.0);
    // slab integrals over each slice, so coarse grids still conserve N_eff
    let gl = GaussLegendre::new(SLAB_NODES).expect("valid Gauss-Legendre order");
    for (k, &zk) in z.iter().enumerate() {
        let slab = |g: &dyn Fn(f64, f64) -> f64| {
            gl.integrate(zk - dz / 2.0, zk + dz / 2.0, |zz| {
                let (s, a, wt) = plane(cloud, beam, zz);
                wt * g(s, a)
            })
        };
        for p in 0..np {
            populations[(k * np + p, 0)] = slab(&|s, a| s * rad.integrate(a + 1.0, |x| l(p, x)));
            for q in 0..np {
                let c0 = slab(&|s, a| s * s * rad.integrate(a + 2.0, |x| l(p, x) * l(q, x)));
                for i in 0..nq {
                    for j in 0..nq {
                        cov[((k * np + p) * nq + i, (k * np + q) * nq + j)] = c0 * gens.single[(i, j)];
                    }
                }
                if p == 0 && q == 0 {
                    n2 += c0;
                }
            }
        }
        n1 += populations[(k * np, 0)];
    }
    Ok(SpinWaveLattice {
        slices,
        modes: np,
        quadratures: nq,
        dz,
        tables,
        cov,
        populations,
        n1,
        n2,
        f,
        coupling: [b.v, b.w],
        readout: Readout::for_target(Preparation::Scs, f)?,
        gens,
    })
}

impl SpinWaveLattice {
    pub fn index(&self, k: usize, p: usize, i: usize) -> usize {
        (k * self.modes + p) * self.quadratures + i
    }

    fn readout_weights(&self) -> [f64; 2] {
        [self.readout.v, self.readout.w]
    }

    /// Σ_{k,k'} r_i r_j M[(k,0,i),(k',0,j)] with the readout weights r.
    pub fn fundamental_form(&self, m: &DMatrix<f64>) -> f64 {
        let r = self.readout_weights();
        let mut acc = 0.0;
        for k in 0..self.slices {
            for kp in 0..self.slices {
                for i in 0..self.quadratures {
                    for j in 0..self.quadratures {
                        acc += r[i] * r[j] * m[(self.index(k, 0, i), self.index(kp, 0, j))];
                    }
                }
            }
        }
        acc
    }

    pub fn fundamental_variance(&self) -> f64 {
        self.fundamental_form(&self.cov)
    }

    /// ⟨F_x^{00}⟩ of the post-processed state.
    pub fn mean_fx(&self) -> f64 {
        let fx = self.readout.mean_fx;
        (0..self.slices)
            .map(|k| (0..3).map(|s| self.populations[(k * self.modes, s)] * fx[s]).sum::<f64>())
            .sum()
    }
}

/// ζ_para = 2f (N⁽¹⁾)²/N⁽²⁾ · Var F_z^{00} / ⟨F_x^{00}⟩²
pub fn paraxial_zeta(lat: &SpinWaveLattice) -> f64 {
    let fx = lat.mean_fx();
    2.0 * lat.f * lat.n1 * lat.n1 / lat.n2 * lat.fundamental_variance() / (fx * fx)
}

/// Time derivatives of a lattice; `noise` is the population-driven part of `cov`.
#[derive(Debug, Clone)]
pub struct SpinWaveDerivative {
    pub cov: DMatrix<f64>,
    pub noise: DMatrix<f64>,
    pub populations: DMatrix<f64>,
}

#[allow(clippy::too_many_arguments)]
fn rhs_into(
    lat: &SpinWaveLattice,
    cov: &DMatrixView<f64>,
    pops: &DMatrixView<f64>,
    kappa: f64,
    pumping: bool,
    dcov: &mut DMatrixViewMut<f64>,
    dpop: &mut DMatrixViewMut<f64>,
    mut noise_out: Option<&mut DMatrix<f64>>,
) {
    let (np, nq) = (lat.modes, lat.quadratures);
    let m = np * nq;
    let g = &lat.gens;
    dcov.fill(0.0);
    dpop.fill(0.0);
    if pumping {
        for k in 0..lat.slices {
            let c = &lat.tables.c[k];
            let bk = DMatrix::from_fn(m, m, |a, b| c[(a / nq, b / nq)] * g.drift[(a % nq, b % nq)]);
            let r0 = k * m;
            dcov.rows_mut(r0, m).gemm(1.0, &bk, &cov.rows(r0, m), 0.0);
        }
        let n = dcov.nrows();
        for i in 0..n {
            for j in i..n {
                let s = dcov[(i, j)] + dcov[(j, i)];
                dcov[(i, j)] = s;
                dcov[(j, i)] = s;
            }
        }
        for k in 0..lat.slices {
            let r0 = k * m;
            let gk = &lat.tables.g[k];
            let mut blk = DMatrix::zeros(m, m);
            for p in 0..np {
                for q in 0..np {
                    for s in 0..3 {
                        let w: f64 = (0..np).map(|r| gk[p][(q, r)] * pops[(k * np + r, s)]).sum();
                        if w == 0.0 {
                            continue;
                        }
                        for i in 0..nq {
                            for j in 0..nq {
                                blk[(p * nq + i, q * nq + j)] += w * g.noise[s][(i, j)];
                            }
                        }
                    }
                }
            }
            let mut view = dcov.view_mut((r0, r0), (m, m));
            view += &blk;
            if let Some(out) = noise_out.as_deref_mut() {
                out.view_mut((r0, r0), (m, m)).copy_from(&blk);
            }
            let c = &lat.tables.c[k];
            for p in 0..np {
                for s in 0..3 {
                    let mut acc = 0.0;
                    for q in 0..np {
                        let jn: f64 = (0..3).map(|r| g.pop[(s, r)] * pops[(k * np + q, r)]).sum();
                        acc += c[(p, q)] * jn;
                    }
                    dpop[(k * np + p, s)] = acc;
                }
            }
        }
    }
    let mut u = DVector::zeros(cov.ncols());
    for k in 0..lat.slices {
        for i in 0..nq {
            u += cov.row(lat.index(k, 0, i)).transpose() * lat.coupling[i];
        }
    }
    dcov.ger(-kappa, &u, &u, 1.0);
}

/// Right-hand side of the spin-wave equations at `kappa` (in units of γ₀).
pub fn spinwave_rhs(lat: &SpinWaveLattice, kappa: f64, pumping: bool) -> SpinWaveDerivative {
    let n = lat.cov.nrows();
    let mut cov = DMatrix::zeros(n, n);
    let mut pops = DMatrix::zeros(lat.populations.nrows(), 3);
    let mut noise = DMatrix::zeros(n, n);
    rhs_into(
        lat,
        &lat.cov.as_view(),
        &lat.populations.as_view(),
        kappa,
        pumping,
        &mut cov.as_view_mut(),
        &mut pops.as_view_mut(),
        Some(&mut noise),
    );
    SpinWaveDerivative { cov, noise, populations: pops }
}

/// Inputs of one paraxial point.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ParaxialConfig {
    pub f: f64,
    pub n_a: f64,
    /// cm⁻³
    pub eta0_cm3: f64,
    pub aspect_ratio: f64,
    pub w0_um: f64,
    pub wavelength_um: f64,
    pub slices: usize,
    pub p_max: usize,
    /// γ₀·t window and number of output intervals
    pub t_max: f64,
    pub n_out: usize,
    pub rtol: f64,
    pub atol: f64,
    pub pumping: bool,
}

impl ParaxialConfig {
    /// N_A = 9.8e6, η₀ = 5e11 cm⁻³, K = 61 slices, p_max = 6.
    pub fn paper(f: f64, aspect_ratio: f64, w0_um: f64) -> Self {
        Self {
            f,
            n_a: 9.8e6,
            eta0_cm3: 5e11,
            aspect_ratio,
            w0_um,
            wavelength_um: WAVELENGTH_UM,
            slices: 61,
            p_max: 6,
            t_max: if f < 1.0 { 1.5 } else { 5.0 },
            n_out: 300,
            rtol: 1e-6,
            atol: 1e-3,
            pumping: true,
        }
    }

    pub fn geometry(&self) -> Result<(CloudGeometry, BeamGeometry)> {
        Ok((
            CloudGeometry::from_atoms(self.n_a, self.eta0_cm3, self.aspect_ratio)?,
            BeamGeometry::new(self.w0_um, self.wavelength_um)?,
        ))
    }

    /// κ/γ₀ = g_f²(σ₀/A)/9
    pub fn kappa(&self, beam: &BeamGeometry) -> f64 {
        (1.0 / self.f).powi(2) * beam.sigma0() / beam.area() / 9.0
    }
}

#[derive(Debug, Clone)]
pub struct ParaxialRun {
    pub t: Vec<f64>,
    pub zeta: Vec<f64>,
    pub kappa: f64,
    pub n1: f64,
    pub n2: f64,
    pub od_eff: f64,
    pub final_lattice: SpinWaveLattice,
}

impl ParaxialRun {
    pub fn peak(&self) -> Peak {
        let (k, z) = self
            .zeta
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (k, z)| if z < acc.1 { (k, z) } else { acc });
        Peak { t: self.t[k], zeta: z, db: db(z) }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t_gamma0", "zeta_para", "zeta_para_dB"])?;
        for (t, z) in self.t.iter().zip(&self.zeta) {
            wr.write_record([format!("{t:.10e}"), format!("{z:.10e}"), format!("{:.10e}", db(*z))])?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub fn run_paraxial(cfg: &ParaxialConfig) -> Result<ParaxialRun> {
    if !(cfg.t_max > 0.0 && cfg.n_out > 0 && cfg.rtol > 0.0 && cfg.atol > 0.0) {
        return Err(Error::Validation("time window, output count and tolerances must be positive".into()));
    }
    let (cloud, beam) = cfg.geometry()?;
    let mut lat = lattice_init(&cloud, &beam, cfg.slices, cfg.p_max, cfg.f, Preparation::Scs)?;
    let kappa = cfg.kappa(&beam);
    let n = lat.cov.nrows();
    let np = lat.populations.nrows();
    let mut y: Vec<f64> = lat.cov.iter().copied().chain(lat.populations.iter().copied()).collect();
    let frozen = lat.clone();
    let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let (yc, yp) = y.split_at(n * n);
        let (dc, dp) = dy.split_at_mut(n * n);
        rhs_into(
            &frozen,
            &DMatrixView::from_slice(yc, n, n),
            &DMatrixView::from_slice(yp, np, 3),
            kappa,
            cfg.pumping,
            &mut DMatrixViewMut::from_slice(dc, n, n),
            &mut DMatrixViewMut::from_slice(dp, np, 3),
            None,
        );
    };
    let mut stepper = DormandPrince::new(y.len(), cfg.rtol, cfg.atol);
    let dt = cfg.t_max / cfg.n_out as f64;
    let mut t = vec![0.0];
    let mut zeta = vec![paraxial_zeta(&lat)];
    for step in 0..cfg.n_out {
        let (t0, t1) = (step as f64 * dt, (step + 1) as f64 * dt);
        stepper.advance(&mut rhs, &mut y, t0, t1)?;
        lat.cov.copy_from_slice(&y[..n * n]);
        lat.populations.copy_from_slice(&y[n * n..]);
        let z = paraxial_zeta(&lat);
        if !z.is_finite() {
            return Err(Error::Numerical(format!("ζ_para not finite at γ₀t = {t1}")));
        }
        t.push(t1);
        zeta.push(z);
    }
    let (n1, n2) = (lat.n1, lat.n2);
    Ok(ParaxialRun { t, zeta, kappa, n1, n2, od_eff: od_eff(&cloud, &beam)?, final_lattice: lat })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScanPoint {
    pub aspect_ratio: f64,
    pub w0_um: f64,
    pub od_eff: f64,
    pub peak_db: f64,
    pub t_peak: f64,
}

/// Peak squeezing over an (AR, w0) grid at fixed N_A and η₀, one task per point.
pub fn geometry_scan(base: &ParaxialConfig, aspect_ratios: &[f64], waists: &[f64]) -> Result<Vec<ScanPoint>> {
    let grid: Vec<(f64, f64)> = aspect_ratios.iter().flat_map(|&a| waists.iter().map(move |&w| (a, w))).collect();
    grid.par_iter()
        .map(|&(aspect_ratio, w0_um)| {
            let run = run_paraxial(&ParaxialConfig { aspect_ratio, w0_um, ..*base })?;
            let pk = run.peak();
            Ok(ScanPoint { aspect_ratio, w0_um, od_eff: run.od_eff, peak_db: pk.db, t_peak: pk.t })
        })
        .collect()
}

pub fn write_scan_csv<W: Write>(points: &[ScanPoint], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["AR", "w0_um", "OD_eff", "peak_dB", "t_peak_gamma0"])?;
    for p in points {
        wr.write_record([p.aspect_ratio, p.w0_um, p.od_eff, p.peak_db, p.t_peak].iter().map(|x| format!("{x:.8e}")))?;
    }
    wr.flush()?;
    Ok(())
}
