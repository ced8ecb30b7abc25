//! Covariance-matrix engine for the joint atom-light Gaussian state.
//!
//! Each mode carries an (X, Y) quadrature pair. In population normalization the
//! commutator of a pair is weighted by the population difference of its two
//! levels (or by N_L for the light), so vacuum variances are N/2 rather than 1/2.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

pub type RMat = DMatrix<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mode {
    /// X_{↓↑}, Y_{↓↑}
    DownUp,
    /// X_{≀↓}, Y_{≀↓}
    WrDown,
    /// X_y, Y_y
    Light,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Normalization {
    Unit,
    Population,
}

#[derive(Debug, Clone)]
pub struct GaussianState {
    pub modes: Vec<Mode>,
    pub sigma: RMat,
    /// N_↑, N_↓, N_≀
    pub populations: [f64; 3],
    pub n_l: f64,
    pub normalization: Normalization,
}

impl GaussianState {
    /// Atoms in |↑⟩ and light in vacuum, population weighted.
    pub fn vacuum(n_a: f64, n_l: f64, with_transfer: bool) -> Self {
        let mut modes = vec![Mode::DownUp];
        if with_transfer {
            modes.push(Mode::WrDown);
        }
        modes.push(Mode::Light);
        let d = 2 * modes.len();
        let mut sigma = RMat::zeros(d, d);
        sigma[(0, 0)] = n_a / 2.0;
        sigma[(1, 1)] = n_a / 2.0;
        sigma[(d - 2, d - 2)] = n_l / 2.0;
        sigma[(d - 1, d - 1)] = n_l / 2.0;
        Self { modes, sigma, populations: [n_a, 0.0, 0.0], n_l, normalization: Normalization::Population }
    }

    /// Unit-normalized vacuum, all variances 1/2.
    pub fn unit_vacuum(modes: &[Mode]) -> Self {
        let d = 2 * modes.len();
        Self {
            modes: modes.to_vec(),
            sigma: RMat::from_diagonal_element(d, d, 0.5),
            populations: [1.0, 0.0, 0.0],
            n_l: 1.0,
            normalization: Normalization::Unit,
        }
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    /// Position of the X quadrature of `mode`.
    pub fn offset(&self, mode: Mode) -> Result<usize> {
        self.modes
            .iter()
            .position(|&m| m == mode)
            .map(|k| 2 * k)
            .ok_or_else(|| Error::InvalidArgument(format!("mode {mode:?} not present")))
    }

    pub fn require(&self, n: Normalization) -> Result<()> {
        if self.normalization != n {
            return Err(Error::NormalizationMismatch(format!(
                "state is {:?}, operation needs {n:?}",
                self.normalization
            )));
        }
        Ok(())
    }

    /// Commutator weight of each mode.
    pub fn commutator_weights(&self) -> Vec<f64> {
        let [nu, nd, nw] = self.populations;
        self.modes
            .iter()
            .map(|m| match (self.normalization, m) {
                (Normalization::Unit, _) => 1.0,
                (Normalization::Population, Mode::DownUp) => nu - nd,
                (Normalization::Population, Mode::WrDown) => nd - nw,
                (Normalization::Population, Mode::Light) => self.n_l,
            })
            .collect()
    }

    /// The weighted symplectic form nσ.
    pub fn symplectic_form(&self) -> RMat {
        let d = self.dim();
        let mut s = RMat::zeros(d, d);
        for (k, w) in self.commutator_weights().into_iter().enumerate() {
            s[(2 * k, 2 * k + 1)] = w;
            s[(2 * k + 1, 2 * k)] = -w;
        }
        s
    }

    /// Σ' = M Σ Mᵀ + N.
    pub fn apply_map(&self, m: &RMat, n: &RMat) -> Result<Self> {
        let d = self.dim();
        if m.shape() != (d, d) || n.shape() != (d, d) {
            return Err(Error::InvalidArgument(format!(
                "map of shape {:?} on a {d}-dimensional state",
                m.shape()
            )));
        }
        let scale = n.abs().max().max(1.0);
        let sym = (n + n.transpose()) * 0.5;
        let min = sym.symmetric_eigen().eigenvalues.min();
        if min < -1e-10 * scale {
            return Err(Error::InvalidChannel(min));
        }
        let mut out = self.clone();
        out.sigma = m * &self.sigma * m.transpose() + n;
        Ok(out)
    }

    /// S nσ Sᵀ = nσ to relative tolerance.
    pub fn preserves_symplectic_form(&self, s: &RMat, rel: f64) -> bool {
        let o = self.symplectic_form();
        let diff = s * &o * s.transpose() - &o;
        diff.abs().max() <= rel * o.abs().max().max(f64::MIN_POSITIVE)
    }

    /// Condition on the X quadrature of `mode`; its correlations are removed but
    /// the mode is kept.
    pub fn condition_on(&self, mode: Mode) -> Result<Self> {
        if mode != Mode::Light {
            return Err(Error::InvalidArgument("only the light mode is measured".into()));
        }
        let i = self.offset(mode)?;
        let b = self.sigma[(i, i)];
        let cutoff = 1e-12 * self.sigma.abs().max();
        let mut out = self.clone();
        if b > cutoff {
            let c: DVector<f64> = self.sigma.column(i).into_owned();
            out.sigma -= &c * c.transpose() / b;
            // exact zeros on the measured row
            for k in 0..self.dim() {
                out.sigma[(i, k)] = 0.0;
                out.sigma[(k, i)] = 0.0;
            }
        }
        Ok(out)
    }

    /// Homodyne on the X quadrature of `mode` followed by discarding the mode.
    pub fn homodyne(&self, mode: Mode) -> Result<Self> {
        self.condition_on(mode)?.partial_trace(mode)
    }

    pub fn partial_trace(&self, mode: Mode) -> Result<Self> {
        let i = self.offset(mode)?;
        let mut out = self.clone();
        out.sigma = self.sigma.clone().remove_rows(i, 2).remove_columns(i, 2);
        out.modes.remove(i / 2);
        Ok(out)
    }

    pub fn append_fresh_light(&self, n_l: f64) -> Self {
        let d = self.dim();
        let var = match self.normalization {
            Normalization::Unit => 0.5,
            Normalization::Population => n_l / 2.0,
        };
        let mut sigma = self.sigma.clone().resize(d + 2, d + 2, 0.0);
        sigma[(d, d)] = var;
        sigma[(d + 1, d + 1)] = var;
        let mut modes = self.modes.clone();
        modes.push(Mode::Light);
        Self { modes, sigma, n_l, ..self.clone() }
    }

    /// Rotation by θ of the listed modes, identity elsewhere.
    pub fn rotation(&self, theta: f64, modes: &[Mode]) -> RMat {
        let (s, c) = theta.sin_cos();
        self.block_map(modes, [[c, -s], [s, c]])
    }

    /// π/2 rotation of the light quadratures.
    pub fn waveplate(&self) -> RMat {
        self.block_map(&[Mode::Light], [[0.0, -1.0], [1.0, 0.0]])
    }

    /// Brings X'_y = (X_y − Y_y)/√2 into the X slot of the light.
    pub fn eraser(&self) -> RMat {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        self.block_map(&[Mode::Light], [[c, -c], [c, c]])
    }

    fn block_map(&self, modes: &[Mode], b: [[f64; 2]; 2]) -> RMat {
        let mut r = RMat::identity(self.dim(), self.dim());
        for (k, m) in self.modes.iter().enumerate() {
            if modes.contains(m) {
                let i = 2 * k;
                r[(i, i)] = b[0][0];
                r[(i, i + 1)] = b[0][1];
                r[(i + 1, i)] = b[1][0];
                r[(i + 1, i + 1)] = b[1][1];
            }
        }
        r
    }

    /// Smallest eigenvalue of Σ + (i/2) nσ.
    pub fn uncertainty_min_eigenvalue(&self) -> f64 {
        let d = self.dim();
        let o = self.symplectic_form();
        let h = DMatrix::<Complex64>::from_fn(d, d, |i, j| Complex64::new(self.sigma[(i, j)], 0.5 * o[(i, j)]));
        h.symmetric_eigen().eigenvalues.min()
    }

    pub fn is_physical(&self) -> bool {
        let tol = 1e-8 * self.sigma.abs().max();
        self.populations.iter().all(|&p| p >= -1e-9 * self.populations[0].abs())
            && self.uncertainty_min_eigenvalue() >= -tol
    }

    /// Covariance of two quadratures addressed by (mode, 0 for X / 1 for Y).
    pub fn cov(&self, a: (Mode, usize), b: (Mode, usize)) -> Result<f64> {
        Ok(self.sigma[(self.offset(a.0)? + a.1, self.offset(b.0)? + b.1)])
    }
}

/// Two-mode Faraday map on (X_A, Y_A, X_y, Y_y), unit normalization.
pub fn faraday_unit(xi: f64) -> RMat {
    let mut m = RMat::identity(4, 4);
    m[(2, 0)] = xi.sqrt();
    m[(1, 3)] = -xi.sqrt();
    m
}

/// Population-weighted Faraday map on the (↓↑, [≀↓], light) layout.
pub fn faraday_population(xi_up: f64, xi_dn: f64, pops: [f64; 3], n_l: f64, with_transfer: bool) -> RMat {
    let k = if with_transfer { 4 } else { 2 };
    let mut m = RMat::identity(k + 2, k + 2);
    m[(1, k + 1)] = -xi_up.sqrt() * (pops[0] - pops[1]);
    m[(k, 0)] = xi_up.sqrt() * n_l;
    if with_transfer {
        m[(3, k + 1)] = -xi_dn.sqrt() * (pops[1] - pops[2]);
        m[(k, 2)] = xi_dn.sqrt() * n_l;
    }
    m
}

/// Eigenvalues of the reduced atomic covariance after a double pass, unit normalization.
pub fn double_pass_eigenvalues(xi: f64) -> (f64, f64) {
    let a = 2.0 + 2.0 * xi + xi * xi;
    let b = xi * (xi * xi + 4.0 * xi + 8.0).sqrt();
    ((a - b) / 4.0, (a + b) / 4.0)
}
