use approx::assert_abs_diff_eq;
use num_complex::Complex64;
use spinsqueeze::optical_pumping::{generators, PumpModel};
use spinsqueeze::protocols::{simulate, Protocol, ProtocolParams, Target};
use spinsqueeze::qnd_ode::{
    covariance_rhs, dropped_terms, exact_f1_reference, integrate, optimize_fiducial, population_rhs,
    OdeCoefficients, OdeSettings, OdeState, OptimizerSettings,
};
use spinsqueeze::spin_algebra::{prepare_fiducial, EmbeddedBasis, Preparation, SpinSystem};
use spinsqueeze::Error;

fn basis(p: Preparation, f: f64) -> EmbeddedBasis {
    let s = SpinSystem::new(f).unwrap();
    EmbeddedBasis::new(&s, prepare_fiducial(&s, p).unwrap()).unwrap()
}

fn coherent(f: f64) -> ProtocolParams {
    ProtocolParams { pumping: false, ..ProtocolParams::paper(f) }
}

#[test]
fn zero_rates_freeze_everything() {
    let b = basis(Preparation::Mx0, 2.0);
    let mut p = coherent(2.0);
    let mut c = OdeCoefficients::new(&b, &p).unwrap();
    c.kappa = 0.0;
    let s = OdeState::initial(1e6, &b);
    assert_eq!(covariance_rhs(&s, &c).abs().max(), 0.0);
    assert_eq!(population_rhs(&s, &c).abs().max(), 0.0);
    p.pumping = true;
    let c = OdeCoefficients::new(&b, &p).unwrap();
    assert!(population_rhs(&s, &c).abs().max() > 0.0);
}

#[test]
fn initial_state_layout() {
    let s = OdeState::initial(1e6, &basis(Preparation::Scs, 2.0));
    assert_eq!(s.cov[(0, 0)], 5e5);
    assert_eq!(s.cov[(1, 1)], 5e5);
    assert_eq!(s.cov[(4, 4)], 5e5);
    assert_eq!(s.cov[(2, 2)], 0.0);
    let s = OdeState::initial(1e6, &basis(Preparation::Cat, 2.0));
    assert_eq!(s.cov[(4, 4)], 0.0);
    assert_eq!(s.populations.as_slice(), &[1e6, 0.0, 0.0]);
}

#[test]
fn drift_matches_map_generator() {
    for &(p, f) in &[(Preparation::Scs, 2.0), (Preparation::Mx0, 4.0), (Preparation::Cat, 2.0)] {
        let b = basis(p, f);
        let c = OdeCoefficients::new(&b, &ProtocolParams::paper(f)).unwrap();
        let g = generators(&b, &PumpModel::new(&SpinSystem::new(f).unwrap()), b.has_transfer());
        let k = g.m.nrows();
        for i in 0..k {
            for j in 0..k {
                assert_abs_diff_eq!(c.drift[(i, j)], g.m[(i, j)], epsilon = 1e-12);
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(c.pop[(i, j)], g.pop[(i, j)], epsilon = 1e-12);
            }
        }
    }
}

#[test]
fn spin_half_total_population_conserved() {
    let b = basis(Preparation::Scs, 0.5);
    let c = OdeCoefficients::new(&b, &ProtocolParams::paper(0.5)).unwrap();
    let mut s = OdeState::initial(1e6, &b);
    s.populations = nalgebra::Vector3::new(7e5, 3e5, 0.0);
    assert_abs_diff_eq!(population_rhs(&s, &c).sum(), 0.0, epsilon = 1e-6);
}

#[test]
fn coherent_riccati() {
    // Var X solves V' = -κ v² V², ζ_m = 1/(1 + κ v² N t/2) for the SCS
    let f = 2.0;
    let b = basis(Preparation::Scs, f);
    let p = coherent(f);
    let run = integrate(&b, &p, 2.0, Target::Scs, &OdeSettings::default()).unwrap();
    let k = p.kappa() * b.v * b.v;
    for i in (0..run.trajectory.len()).step_by(97) {
        let t = run.trajectory.t[i];
        let want = 1.0 / (1.0 + k * 1e6 * t / 2.0);
        assert_abs_diff_eq!(run.trajectory.zeta[i], want, epsilon = 1e-6 * want);
    }
}

#[test]
fn coherent_closure_touches_only_the_measured_pair() {
    let b = basis(Preparation::Mx0, 4.0);
    let run = integrate(&b, &coherent(4.0), 1.0, Target::Scs, &OdeSettings::default()).unwrap();
    let s0 = &run.states[0];
    let s1 = run.states.last().unwrap();
    for i in 0..6 {
        for j in 0..6 {
            if (i, j) == (0, 0) || (i, j) == (1, 1) {
                continue;
            }
            assert_abs_diff_eq!(s1.cov[(i, j)], s0.cov[(i, j)], epsilon = 1e-3);
        }
    }
    assert!(s1.cov[(0, 0)] < 0.5 * s0.cov[(0, 0)]);
    assert!(s1.cov[(1, 1)] > s0.cov[(1, 1)]);
}

#[test]
fn coherent_limit_factorizes() {
    // ζ_m = ζ_m^↑·ζ_q when the target is the fiducial itself
    let b = basis(Preparation::Mx0, 2.0);
    let p = coherent(2.0);
    let run = integrate(&b, &p, 1.0, Target::Scs, &OdeSettings::default()).unwrap();
    let scs = basis(Preparation::Scs, 2.0);
    let run_s = integrate(&scs, &p, 2.0, Target::Scs, &OdeSettings::default()).unwrap();
    // both are QND squeezers with couplings ∝ v²; compare at equal κv²t
    let r = (b.v / scs.v).powi(2);
    let i = run.trajectory.nearest(0.5);
    let j = run_s.trajectory.nearest(0.5 * r);
    assert_abs_diff_eq!(run.trajectory.zeta[i], run_s.trajectory.zeta[j], epsilon = 1e-4);
}

#[test]
fn hermitian_commutator_tables_are_imaginary() {
    let b = basis(Preparation::Mx0, 4.0);
    let c = OdeCoefficients::new(&b, &ProtocolParams::paper(4.0)).unwrap();
    for row in c.commutators.iter().flatten().flatten() {
        assert!(row.re.abs() < 1e-12, "{row}");
    }
    let _: Complex64 = c.commutators[0][1][0];
    // ⟨↑|[X↓↑, Y↓↑]|↑⟩ = i
    assert_abs_diff_eq!(c.commutators[0][1][0].im, 1.0, epsilon = 1e-12);
}

#[test]
fn dropped_terms_reported() {
    let b = basis(Preparation::Scs, 2.0);
    let p = ProtocolParams::paper(2.0);
    let c = OdeCoefficients::new(&b, &p).unwrap();
    let s = OdeState::initial(1e6, &b);
    let d = dropped_terms(&s, &c);
    assert!((d - d.transpose()).abs().max() < 1e-9 * d.abs().max().max(1.0));
    let run = integrate(&b, &p, 1.0, Target::Scs, &OdeSettings::default()).unwrap();
    assert!(run.dropped_ratio.is_finite() && run.dropped_ratio >= 0.0);
}

#[test]
fn map_and_ode_agree_for_mx0() {
    let f = 4.0;
    let b = basis(Preparation::Mx0, f);
    let p = ProtocolParams::paper(f);
    let ode = integrate(&b, &p, 3.0, Target::Scs, &OdeSettings::default()).unwrap();
    let map = simulate(Protocol::Qnd, &b, &p, 3.0, Target::Scs, None).unwrap();
    let (a, m) = (ode.trajectory.peak(), map.peak());
    assert!((a.db - m.db).abs() < 0.1, "ode {} map {}", a.db, m.db);
    assert!((a.db - 9.3).abs() < 0.3, "{}", a.db);
}

#[test]
fn exact_oracle_initial_and_coherent() {
    let p = coherent(1.0);
    let tr = exact_f1_reference(&p, 1.0, &OdeSettings::default()).unwrap();
    assert_eq!(tr.t[0], 0.0);
    assert_eq!([tr.n_up[0], tr.n_down[0], tr.n_wr[0]], [1e6, 0.0, 0.0]);
    assert_abs_diff_eq!(tr.zeta[0], 1.0, epsilon = 1e-12);
    // V = V0/(1+κV0 t), V0 = N f/2
    let v0 = 5e5;
    for i in (0..tr.len()).step_by(101) {
        let want = 2.0 * 1e6 * (v0 / (1.0 + p.kappa() * v0 * tr.t[i])) / 1e12;
        assert_abs_diff_eq!(tr.zeta[i], want, epsilon = 1e-7 * want);
    }
    assert!(matches!(exact_f1_reference(&ProtocolParams::paper(2.0), 1.0, &OdeSettings::default()), Err(Error::Validation(_))));
}

#[test]
fn exact_oracle_against_map() {
    let p = ProtocolParams::paper(1.0);
    let ex = exact_f1_reference(&p, 3.0, &OdeSettings::default()).unwrap();
    let hp = simulate(Protocol::Qnd, &basis(Preparation::Scs, 1.0), &p, 3.0, Target::Scs, None).unwrap();
    assert!((ex.peak().db - hp.peak().db).abs() <= 0.15, "{} {}", ex.peak().db, hp.peak().db);
    let (i, j) = (ex.nearest(3.0), hp.nearest(3.0));
    assert!((ex.db()[i] - hp.db()[j]).abs() <= 0.6);
}

#[test]
fn global_phase_and_rebasing_invariance() {
    let f = 2.0;
    let sys = SpinSystem::new(f).unwrap();
    let up = prepare_fiducial(&sys, Preparation::Mx0).unwrap();
    let p = ProtocolParams::paper(f);
    let peak = |v: nalgebra::DVector<Complex64>| {
        let b = EmbeddedBasis::new(&sys, v).unwrap();
        integrate(&b, &p, 2.0, Target::Scs, &OdeSettings::default()).unwrap().trajectory.peak().zeta
    };
    let z0 = peak(up.clone());
    let z1 = peak(&up * Complex64::from_polar(1.0, 0.7));
    let u = spinsqueeze::spin_algebra::hermitian_exp(sys.fz(), 0.4);
    let z2 = peak(&u * &up);
    assert_abs_diff_eq!(z0, z1, epsilon = 1e-8 * z0);
    assert_abs_diff_eq!(z0, z2, epsilon = 1e-8 * z0);
}

#[test]
fn tolerance_halving_is_stable() {
    let b = basis(Preparation::Scs, 2.0);
    let p = ProtocolParams::paper(2.0);
    let a = integrate(&b, &p, 3.0, Target::Scs, &OdeSettings::default()).unwrap();
    let s = OdeSettings { rtol: 5e-9, atol: 5e-7, ..OdeSettings::default() };
    let c = integrate(&b, &p, 3.0, Target::Scs, &s).unwrap();
    assert!((a.trajectory.peak().db - c.trajectory.peak().db).abs() < 0.02);
}

#[test]
fn keep_form_never_worse_when_diagnostics_keep() {
    for &(prep, f) in &[(Preparation::Scs, 2.0), (Preparation::Mx0, 4.0)] {
        let b = basis(prep, f);
        let run = integrate(&b, &ProtocolParams::paper(f), 3.0, Target::Scs, &OdeSettings::default()).unwrap();
        let kp = run.zeta_keep.iter().copied().fold(f64::INFINITY, f64::min);
        let dp = run.zeta_drop.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(kp <= dp, "{prep:?} keep {kp} drop {dp}");
    }
}

#[test]
fn optimizer_is_deterministic_and_beats_its_seeds() {
    let p = ProtocolParams::paper(1.0);
    let s = OptimizerSettings { n_seeds: 3, seed: 11, t_max: 3.0, max_iters: 40, ..OptimizerSettings::default() };
    let a = optimize_fiducial(1.0, &p, Target::Scs, &s).unwrap();
    let b = optimize_fiducial(1.0, &p, Target::Scs, &s).unwrap();
    assert_eq!(a.best.peak_db, b.best.peak_db);
    assert_eq!(a.seeds.len(), 3);
    let norm: f64 = a.best.amplitudes.iter().map(|[r, i]| r * r + i * i).sum();
    assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-12);
    assert!(a.seeds.iter().all(|r| r.peak_db <= a.best.peak_db));
    assert!(a.seeds.iter().all(|r| r.peak_db >= r.start_db - 1e-9));
}
