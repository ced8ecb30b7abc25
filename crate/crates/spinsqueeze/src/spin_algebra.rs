//! Spin-f operator matrices, fiducial preparations and the embedded qutrit basis.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

const ORTHO_TOL: f64 = 1e-12;
/// Below this norm the transfer state is treated as absent.
pub const TRANSFER_THRESHOLD: f64 = 1e-9;

/// Angular-momentum matrices in the f_z eigenbasis, ordered m = f, f-1, ..., -f.
#[derive(Debug, Clone)]
pub struct SpinSystem {
    f: f64,
    g_f: f64,
    fx: CMat,
    fy: CMat,
    fz: CMat,
}

fn twice_f(f: f64) -> Result<usize> {
    let t = 2.0 * f;
    if !(t.is_finite() && t >= 1.0 && (t - t.round()).abs() < 1e-12) {
        return Err(Error::InvalidArgument(format!("spin f = {f} is not a positive half-integer")));
    }
    Ok(t.round() as usize)
}

impl SpinSystem {
    /// Upper hyperfine manifold, g_f = 1/f.
    pub fn new(f: f64) -> Result<Self> {
        Self::with_lande(f, 1.0 / f)
    }

    /// Lower hyperfine manifold, g_f = 1/(f+1).
    pub fn lower_manifold(f: f64) -> Result<Self> {
        Self::with_lande(f, 1.0 / (f + 1.0))
    }

    pub fn with_lande(f: f64, g_f: f64) -> Result<Self> {
        let d = twice_f(f)? + 1;
        let f = (d - 1) as f64 / 2.0;
        let mut jp = CMat::zeros(d, d);
        for k in 1..d {
            let m = f - k as f64;
            jp[(k - 1, k)] = Complex64::from((f * (f + 1.0) - m * (m + 1.0)).sqrt());
        }
        let jm = jp.adjoint();
        let fx = (&jp + &jm) * Complex64::from(0.5);
        let fy = (&jp - &jm) * Complex64::new(0.0, -0.5);
        let fz = CMat::from_fn(d, d, |i, j| {
            if i == j {
                Complex64::from(f - i as f64)
            } else {
                Complex64::from(0.0)
            }
        });
        Ok(Self { f, g_f, fx, fy, fz })
    }

    pub fn f(&self) -> f64 {
        self.f
    }
    pub fn g_f(&self) -> f64 {
        self.g_f
    }
    pub fn dim(&self) -> usize {
        self.fz.nrows()
    }
    pub fn fx(&self) -> &CMat {
        &self.fx
    }
    pub fn fy(&self) -> &CMat {
        &self.fy
    }
    pub fn fz(&self) -> &CMat {
        &self.fz
    }
    pub fn identity(&self) -> CMat {
        CMat::identity(self.dim(), self.dim())
    }

    /// Index of m in the basis ordering.
    pub fn index(&self, m: f64) -> Result<usize> {
        let k = self.f - m;
        if (k - k.round()).abs() > 1e-12 || k < -1e-12 || k.round() as usize >= self.dim() {
            return Err(Error::InvalidArgument(format!("m = {m} not allowed for f = {}", self.f)));
        }
        Ok(k.round() as usize)
    }

    /// |f, m⟩ quantized along z.
    pub fn z_state(&self, m: f64) -> Result<CVec> {
        let mut v = CVec::zeros(self.dim());
        v[self.index(m)?] = Complex64::from(1.0);
        Ok(v)
    }

    /// |f, m⟩ quantized along x, defined as exp(-iπ/2 f_y)|f, m⟩_z.
    pub fn x_state(&self, m: f64) -> Result<CVec> {
        Ok(self.rotate_y(std::f64::consts::FRAC_PI_2) * self.z_state(m)?)
    }

    /// exp(-iθ f_y), exact through the eigendecomposition of f_y.
    pub fn rotate_y(&self, theta: f64) -> CMat {
        hermitian_exp(&self.fy, -theta)
    }
}

/// exp(i s H) for Hermitian H.
pub fn hermitian_exp(h: &CMat, s: f64) -> CMat {
    let eig = h.clone().symmetric_eigen();
    let phases = eig.eigenvalues.map(|l| Complex64::from_polar(1.0, s * l));
    let v = &eig.eigenvectors;
    v * CMat::from_diagonal(&phases) * v.adjoint()
}

/// Named fiducial preparations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preparation {
    Scs,
    Cat,
    Mx0,
    Yurke { alpha: f64 },
    HalfYurke { alpha: f64 },
}

impl Preparation {
    pub fn name(&self) -> &'static str {
        match self {
            Preparation::Scs => "scs",
            Preparation::Cat => "cat",
            Preparation::Mx0 => "mx0",
            Preparation::Yurke { .. } => "yurke",
            Preparation::HalfYurke { .. } => "half_yurke",
        }
    }

    /// Parse a preparation name; the Yurke family takes `alpha`.
    pub fn parse(name: &str, alpha: Option<f64>) -> Result<Self> {
        let need_alpha = || {
            alpha.ok_or_else(|| Error::InvalidArgument(format!("preparation {name} requires alpha")))
        };
        Ok(match name {
            "scs" => Preparation::Scs,
            "cat" => Preparation::Cat,
            "mx0" => Preparation::Mx0,
            "yurke" => Preparation::Yurke { alpha: need_alpha()? },
            "half_yurke" => Preparation::HalfYurke { alpha: need_alpha()? },
            other => return Err(Error::InvalidArgument(format!("unknown preparation `{other}`"))),
        })
    }
}

impl fmt::Display for Preparation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preparation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Preparation::parse(s, None)
    }
}

/// Normalized state vector for a named preparation.
pub fn prepare_fiducial(sys: &SpinSystem, prep: Preparation) -> Result<CVec> {
    let f = sys.f();
    let integer = (f - f.round()).abs() < 1e-12;
    let r2 = std::f64::consts::SQRT_2;
    let v = match prep {
        Preparation::Scs => sys.x_state(f)?,
        Preparation::Cat => (sys.z_state(f)? + sys.z_state(-f)?) / Complex64::from(r2),
        Preparation::Mx0 => {
            if !integer {
                return Err(Error::InvalidArgument("mx0 requires integer f".into()));
            }
            sys.x_state(0.0)?
        }
        Preparation::Yurke { alpha } => {
            if !integer {
                return Err(Error::InvalidArgument("yurke requires integer f".into()));
            }
            three_level(sys, [1.0, 0.0, -1.0], alpha)?
        }
        Preparation::HalfYurke { alpha } => {
            if integer || f < 1.5 {
                return Err(Error::InvalidArgument("half_yurke requires half-integer f >= 3/2".into()));
            }
            three_level(sys, [1.5, 0.5, -0.5], alpha)?
        }
    };
    Ok(v)
}

fn three_level(sys: &SpinSystem, m: [f64; 3], alpha: f64) -> Result<CVec> {
    let s = Complex64::from(alpha.sin() / std::f64::consts::SQRT_2);
    let c = Complex64::from(alpha.cos());
    Ok(sys.z_state(m[0])? * s + sys.z_state(m[1])? * c + sys.z_state(m[2])? * s)
}

fn expect(op: &CMat, v: &CVec) -> f64 {
    v.dotc(&(op * v)).re
}

/// Fiducial, coupled and transfer states with their derived scalars.
#[derive(Debug, Clone)]
pub struct EmbeddedBasis {
    pub f: f64,
    pub g_f: f64,
    pub up: CVec,
    pub down: CVec,
    pub wr: Option<CVec>,
    /// v(↑) = sqrt(2 Var_↑ f_z).
    pub v: f64,
    /// w(↑), zero when there is no transfer state.
    pub w: f64,
    pub var_up: f64,
    pub var_down: f64,
    /// ⟨f_z⟩ for ↑, ↓, ≀ (zero for an absent ≀).
    pub mean_fz: [f64; 3],
    pub mean_fx: [f64; 3],
    pub zeta_m_up: f64,
}

impl EmbeddedBasis {
    pub fn new(sys: &SpinSystem, up: CVec) -> Result<Self> {
        if up.len() != sys.dim() {
            return Err(Error::InvalidArgument(format!(
                "state has length {}, expected {}",
                up.len(),
                sys.dim()
            )));
        }
        let nrm = up.norm();
        if (nrm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!("fiducial state norm {nrm} != 1")));
        }
        let id = sys.identity();
        let fz = sys.fz();
        let mu = expect(fz, &up);
        let var_up = expect(&(fz * fz), &up) - mu * mu;
        if var_up < 1e-12 {
            return Err(Error::NoCoupledState);
        }
        let down = (fz - &id * Complex64::from(mu)) * &up / Complex64::from(var_up.sqrt());
        let md = expect(fz, &down);
        let var_down = expect(&(fz * fz), &down) - md * md;
        let v = (2.0 * var_up).sqrt();
        let r = (fz - &id * Complex64::from(md)) * &down * Complex64::from(std::f64::consts::SQRT_2)
            - &up * Complex64::from(v);
        let wn = r.norm();
        let (wr, w) = if wn > TRANSFER_THRESHOLD {
            (Some(r / Complex64::from(wn)), wn)
        } else {
            (None, 0.0)
        };
        let mean_fz = [mu, md, wr.as_ref().map_or(0.0, |s| expect(fz, s))];
        let mean_fx = [
            expect(sys.fx(), &up),
            expect(sys.fx(), &down),
            wr.as_ref().map_or(0.0, |s| expect(sys.fx(), s)),
        ];
        let zeta_m_up = if mean_fx[0].abs() > 0.0 {
            2.0 * sys.f() * var_up / (mean_fx[0] * mean_fx[0])
        } else {
            f64::INFINITY
        };
        let b = Self {
            f: sys.f(),
            g_f: sys.g_f(),
            up,
            down,
            wr,
            v,
            w,
            var_up,
            var_down,
            mean_fz,
            mean_fx,
            zeta_m_up,
        };
        b.check_orthogonal()?;
        Ok(b)
    }

    fn check_orthogonal(&self) -> Result<()> {
        let mut o = self.up.dotc(&self.down).norm();
        if let Some(wr) = &self.wr {
            o = o.max(self.up.dotc(wr).norm()).max(self.down.dotc(wr).norm());
        }
        if o > ORTHO_TOL * 100.0 {
            return Err(Error::Numerical(format!("embedded basis overlap {o:e}")));
        }
        Ok(())
    }

    pub fn has_transfer(&self) -> bool {
        self.wr.is_some()
    }

    /// The three qutrit states, absent ≀ replaced by None.
    pub fn states(&self) -> [Option<&CVec>; 3] {
        [Some(&self.up), Some(&self.down), self.wr.as_ref()]
    }
}

/// ξ = χ² N_L N_A Var_↑ f_z.
pub fn collective_coupling_xi(basis: &EmbeddedBasis, chi: f64, n_l: f64, n_a: f64) -> f64 {
    chi * chi * n_l * n_a * basis.var_up
}
