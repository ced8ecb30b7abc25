use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use num_complex::Complex64;
use spinsqueeze::optical_pumping::{
    build_updates, coherence_diagnostics, generators, rates, Axis, PumpModel, QutritOps,
};
use spinsqueeze::spin_algebra::{prepare_fiducial, CMat, EmbeddedBasis, Preparation, SpinSystem};
use spinsqueeze::Error;

fn basis(p: Preparation, f: f64) -> (SpinSystem, EmbeddedBasis) {
    let s = SpinSystem::new(f).unwrap();
    let b = EmbeddedBasis::new(&s, prepare_fiducial(&s, p).unwrap()).unwrap();
    (s, b)
}

fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

#[test]
fn axis_choice_does_not_change_master_equation() {
    for &f in &[0.5, 1.0, 2.0, 4.0] {
        let m = PumpModel::new(&SpinSystem::new(f).unwrap());
        let lab = m.lab_superoperator();
        let par = m.superoperator_from_jumps(Axis::Parallel);
        let perp = m.superoperator_from_jumps(Axis::Perpendicular);
        assert!(max_abs(&(&par - &lab)) < 1e-12);
        assert!(max_abs(&(&perp - &lab)) < 1e-12);
    }
}

#[test]
fn rotating_frame_is_average_of_lab_frame() {
    let s = SpinSystem::new(2.0).unwrap();
    let m = PumpModel::new(&s);
    let lab = m.lab_superoperator();
    let d = s.dim();
    let n = 8;
    let mut avg = CMat::zeros(d * d, d * d);
    for k in 0..n {
        let phi = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        let u = spinsqueeze::spin_algebra::hermitian_exp(s.fz(), phi);
        // superoperator of ρ -> U ρ U†
        let r = u.conjugate().kronecker(&u);
        avg += r.adjoint() * &lab * &r;
    }
    avg /= Complex64::from(n as f64);
    assert!(max_abs(&(avg - m.rotating_superoperator())) < 1e-12);
}

#[test]
fn spin_half_dissipator_trace_preserving() {
    let s = SpinSystem::new(0.5).unwrap();
    let m = PumpModel::new(&s);
    let rho = CMat::from_row_slice(2, 2, &[
        Complex64::from(0.7), Complex64::new(0.1, 0.2),
        Complex64::new(0.1, -0.2), Complex64::from(0.3),
    ]);
    assert_abs_diff_eq!(m.dissipator(&rho).trace().norm(), 0.0, epsilon = 1e-15);
}

#[test]
fn higher_spin_loses_trace() {
    let s = SpinSystem::new(2.0).unwrap();
    let m = PumpModel::new(&s);
    let rho = s.identity() / Complex64::from(5.0);
    assert!(m.dissipator(&rho).trace().re < -1e-3);
}

#[test]
fn dissipator_preserves_hermiticity() {
    let s = SpinSystem::new(1.5).unwrap();
    let m = PumpModel::new(&s);
    let h = s.fx() * s.fz() + s.fz() * s.fx() + s.fy();
    let out = m.dissipator(&h);
    assert!(max_abs(&(&out - out.adjoint())) < 1e-14);
}

#[test]
fn spin_one_mean_spin_decay() {
    let s = SpinSystem::new(1.0).unwrap();
    let m = PumpModel::new(&s);
    let out = m.dissipator(s.fx()) + s.fx() / Complex64::from(6.0);
    assert!(max_abs(&out) < 1e-14);
}

#[test]
fn parallel_lowering_annihilates_stretched_state() {
    let s = SpinSystem::new(0.5).unwrap();
    let m = PumpModel::new(&s);
    let w = m.jump_operators(Axis::Parallel);
    let up = s.x_state(0.5).unwrap();
    // W_- ∝ f_+ raises m_x beyond f
    assert!((&w[2] * &up).norm() < 1e-15);
    let fm = s.fy() - s.fz() * Complex64::new(0.0, 1.0);
    let want = fm * Complex64::from(2.0 / 3.0 * 0.5f64.sqrt());
    assert!(max_abs(&(&w[0] - want)) < 1e-15);
}

#[test]
fn qutrit_operators_orthonormal() {
    for (p, f) in [(Preparation::Scs, 4.0), (Preparation::Mx0, 2.0), (Preparation::Scs, 1.0)] {
        let (_, b) = basis(p, f);
        let q = QutritOps::new(&b);
        let all = q.all();
        assert_eq!(all.len(), 9);
        for (i, a) in all.iter().enumerate() {
            assert!(max_abs(&(*a - a.adjoint())) < 1e-14);
            for (j, c) in all.iter().enumerate() {
                let t = (*a * *c).trace();
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(t.re, want, epsilon = 1e-12);
                assert_abs_diff_eq!(t.im, 0.0, epsilon = 1e-12);
            }
        }
    }
}

#[test]
fn spin_half_rates() {
    let (s, b) = basis(Preparation::Scs, 0.5);
    let r = rates(&b, &PumpModel::new(&s), Axis::Parallel);
    assert_abs_diff_eq!(r.gamma_op, 2.0 / 3.0, epsilon = 1e-15);
    assert_abs_diff_eq!(r.escape_up, 0.0, epsilon = 1e-14);
    assert_abs_diff_eq!(r.escape_down, 0.0, epsilon = 1e-14);
    // with a single manifold every departure from |↑⟩ is a flip
    assert_abs_diff_eq!(r.loss_up, r.flip, epsilon = 1e-14);
}

#[test]
fn scs_rates_by_direct_summation() {
    for &f in &[1.0, 2.0, 4.0] {
        let (s, b) = basis(Preparation::Scs, f);
        let r = rates(&b, &PumpModel::new(&s), Axis::Parallel);
        assert_abs_diff_eq!(r.flip, 1.0 / (9.0 * f), epsilon = 1e-12);
        assert_abs_diff_eq!(r.loss_up, 2.0 / 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.escape_up, 2.0 / 9.0 - 1.0 / (9.0 * f), epsilon = 1e-12);
    }
}

#[test]
fn cat_rates_independent_of_f() {
    let r: Vec<_> = [1.0, 2.0, 3.0, 4.0]
        .iter()
        .map(|&f| {
            let (s, b) = basis(Preparation::Cat, f);
            rates(&b, &PumpModel::new(&s), Axis::Parallel)
        })
        .collect();
    for x in &r[1..] {
        assert_abs_diff_eq!(x.flip, r[0].flip, epsilon = 1e-12);
        assert_abs_diff_eq!(x.loss_up, r[0].loss_up, epsilon = 1e-12);
        assert_abs_diff_eq!(x.loss_down, r[0].loss_down, epsilon = 1e-12);
    }
}

#[test]
fn transfer_diagnostics() {
    let (s, b) = basis(Preparation::Cat, 2.0);
    let d = coherence_diagnostics(&b, &PumpModel::new(&s), Axis::Parallel);
    assert!(d.t_up.is_none() && d.n_up.is_none());
    assert!(!d.keep_transfer);

    let (s, b) = basis(Preparation::Scs, 4.0);
    let d = coherence_diagnostics(&b, &PumpModel::new(&s), Axis::Parallel);
    assert!(d.keep_transfer);
    assert_abs_diff_eq!(d.t_up.unwrap(), 1.0, epsilon = 1e-10);
    assert!(d.mode_condition_holds());

    for &f in &[2.0, 3.0, 4.0] {
        let (s, b) = basis(Preparation::Mx0, f);
        let d = coherence_diagnostics(&b, &PumpModel::new(&s), Axis::Parallel);
        assert!(d.mode_condition_holds());
        assert!(d.keep_transfer);
    }
}

#[test]
fn generic_state_violates_mode_condition() {
    let s = SpinSystem::new(2.0).unwrap();
    let up = prepare_fiducial(&s, Preparation::Scs).unwrap();
    let mix = (up + s.z_state(1.0).unwrap() * Complex64::new(0.3, 0.2)).normalize();
    let b = EmbeddedBasis::new(&s, mix).unwrap();
    let m = PumpModel::new(&s);
    let d = coherence_diagnostics(&b, &m, Axis::Parallel);
    assert!(!d.mode_condition_holds());
    assert!(matches!(build_updates(&b, &m, 1e-3, true), Err(Error::UnsupportedPreparation(_))));
}

#[test]
fn step_guard() {
    let (s, b) = basis(Preparation::Scs, 2.0);
    assert!(build_updates(&b, &PumpModel::new(&s), 2e-2, true).is_err());
}

fn r_mat(rows: &[&[f64]]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

#[test]
fn cat_generators_match_closed_forms() {
    for &f in &[1.0, 2.0, 4.0] {
        let (s, b) = basis(Preparation::Cat, f);
        let g = generators(&b, &PumpModel::new(&s), false);
        assert!(max_diff(&g.m, &r_mat(&[&[-1.0 / 9.0, 0.0], &[0.0, -1.0 / 3.0]])) < 1e-12);
        let nn = r_mat(&[&[1.0 / 18.0, 0.0], &[0.0, 5.0 / 18.0]]);
        assert!(max_diff(&g.n_up, &nn) < 1e-12);
        assert!(max_diff(&g.n_dn, &nn) < 1e-12);
        let j = r_mat(&[&[-2.0 / 9.0, 1.0 / 9.0], &[1.0 / 9.0, -2.0 / 9.0]]);
        assert!(max_diff(&g.j2(), &j) < 1e-12);
    }
}

#[test]
fn scs_drift_and_population_match_closed_forms() {
    for &f in &[1.0, 2.0, 4.0] {
        let (s, b) = basis(Preparation::Scs, f);
        let g = generators(&b, &PumpModel::new(&s), true);
        let c = (f * (2.0 * f - 1.0)).sqrt() / (12.0 * f * f);
        let m = r_mat(&[
            &[-(6.0 * f + 1.0) / (36.0 * f), 0.0, c, 0.0],
            &[0.0, -(2.0 * f + 1.0) / (12.0 * f), 0.0, c],
            &[c, 0.0, -(6.0 * f * f + 4.0 * f - 3.0) / (36.0 * f * f), 0.0],
            &[0.0, c, 0.0, -(6.0 * f * f + 8.0 * f - 5.0) / (36.0 * f * f)],
        ]);
        assert!(max_diff(&g.m, &m) < 1e-12, "f={f}\n{}\n{}", g.m, m);
        let j = r_mat(&[
            &[-1.0 / 6.0, 1.0 / (12.0 * f)],
            &[1.0 / (12.0 * f), -(3.0 * f * f + 2.0 * f - 1.0) / (18.0 * f * f)],
        ]);
        assert!(max_diff(&g.j2(), &j) < 1e-12);
    }
}

#[test]
fn scs_spin_half_generators() {
    let (s, b) = basis(Preparation::Scs, 0.5);
    let g = generators(&b, &PumpModel::new(&s), true);
    assert_eq!(g.m.nrows(), 2);
    // f = 1/2 column sums of J vanish
    for c in 0..2 {
        assert_abs_diff_eq!(g.j2().column(c).sum(), 0.0, epsilon = 1e-14);
    }
    // vacuum variance N/2 is stationary: 2 m_00 / 2 + n_00 = 0 with N_↓ = 0
    assert_abs_diff_eq!(g.m[(0, 0)] + g.n_up[(0, 0)], 0.0, epsilon = 1e-14);
}

#[test]
fn mx0_generators_match_closed_forms() {
    for &f in &[2.0, 4.0] {
        let (s, b) = basis(Preparation::Mx0, f);
        let g = generators(&b, &PumpModel::new(&s), true);
        let r = (f * (f + 1.0) * (f - 1.0) * (f + 2.0) / 2.0).sqrt();
        let c = r / (18.0 * f * f);
        let m = r_mat(&[
            &[-(3.0 * f - 1.0) / (18.0 * f), 0.0, c, 0.0],
            &[0.0, -(5.0 * f + 1.0) / (18.0 * f), 0.0, c],
            &[c, 0.0, -(7.0 * f * f - f + 2.0) / (36.0 * f * f), 0.0],
            &[0.0, c, 0.0, -(9.0 * f * f + f - 2.0) / (36.0 * f * f)],
        ]);
        assert!(max_diff(&g.m, &m) < 1e-12, "f={f}\n{}\n{}", g.m, m);
        let nu = r_mat(&[
            &[(3.0 * f - 1.0) / (36.0 * f), 0.0, -r / (36.0 * f * f), 0.0],
            &[0.0, (7.0 * f + 3.0) / (36.0 * f), 0.0, -r / (36.0 * f * f)],
            &[-r / (36.0 * f * f), 0.0, (f + 1.0) / (36.0 * f), 0.0],
            &[0.0, -r / (36.0 * f * f), 0.0, (f + 1.0) / (36.0 * f)],
        ]);
        assert!(max_diff(&g.n_up, &nu) < 1e-12);
        let nd_diag = [
            (3.0 * f - 1.0) / (36.0 * f),
            (7.0 * f + 3.0) / (36.0 * f),
            (7.0 * f * f - f + 2.0) / (72.0 * f * f),
            (11.0 * f * f + 3.0 * f - 6.0) / (72.0 * f * f),
        ];
        for (k, &want) in nd_diag.iter().enumerate() {
            assert_abs_diff_eq!(g.n_dn[(k, k)], want, epsilon = 1e-12);
        }
        let j = r_mat(&[
            &[-2.0 / 9.0, (f + 1.0) / (18.0 * f)],
            &[(f + 1.0) / (18.0 * f), -2.0 / 9.0],
        ]);
        assert!(max_diff(&g.j2(), &j) < 1e-12);
    }
}

#[test]
fn projection_flag_has_no_effect() {
    let (s, b) = basis(Preparation::Mx0, 3.0);
    let a = generators(&b, &PumpModel::new(&s), true);
    let c = generators(&b, &PumpModel::new(&s).without_projection(), true);
    assert!(max_diff(&a.m, &c.m) < 1e-14);
    assert!(max_diff(&a.n_dn, &c.n_dn) < 1e-14);
}

#[test]
fn update_noise_is_psd_and_sized() {
    for (p, f) in [(Preparation::Scs, 4.0), (Preparation::Cat, 2.0), (Preparation::Mx0, 4.0)] {
        let (s, b) = basis(p, f);
        let u = build_updates(&b, &PumpModel::new(&s), 1e-3, true).unwrap();
        let k = if b.has_transfer() { 4 } else { 2 };
        assert_eq!(u.m.nrows(), k);
        let n = u.noise([1e6, 2e5, 0.0]);
        assert!(n.clone().symmetric_eigen().eigenvalues.min() > -1e-12 * n.abs().max());
        for r in 0..2 {
            assert!((u.j.row(r).sum() - 1.0) <= 1e-15);
        }
    }
}
