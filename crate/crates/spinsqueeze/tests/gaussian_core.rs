use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;
use spinsqueeze::gaussian_core::{
    double_pass_eigenvalues, faraday_population, faraday_unit, GaussianState, Mode, Normalization,
};
use spinsqueeze::Error;

fn two_mode_unit() -> GaussianState {
    GaussianState::unit_vacuum(&[Mode::DownUp, Mode::Light])
}

#[test]
fn vacuum_diagonal() {
    let s = GaussianState::vacuum(1e6, 3e8, true);
    let d: Vec<f64> = s.sigma.diagonal().iter().copied().collect();
    assert_eq!(d, vec![5e5, 5e5, 0.0, 0.0, 1.5e8, 1.5e8]);
    assert_eq!(s.populations, [1e6, 0.0, 0.0]);
    assert!(s.is_physical());
    assert_eq!(s.normalization, Normalization::Population);
}

#[test]
fn identity_map_leaves_state() {
    let s = GaussianState::vacuum(1e6, 3e8, true);
    let t = s.apply_map(&DMatrix::identity(6, 6), &DMatrix::zeros(6, 6)).unwrap();
    assert_eq!(s.sigma, t.sigma);
}

#[test]
fn rejects_non_psd_noise() {
    let s = two_mode_unit();
    let mut n = DMatrix::zeros(4, 4);
    n[(0, 0)] = -1e-3;
    assert!(matches!(s.apply_map(&DMatrix::identity(4, 4), &n), Err(Error::InvalidChannel(_))));
}

#[test]
fn unit_faraday_entries_and_correlation() {
    let xi: f64 = 0.7;
    let m = faraday_unit(xi);
    assert_abs_diff_eq!(m[(2, 0)], xi.sqrt());
    assert_abs_diff_eq!(m[(1, 3)], -xi.sqrt());
    let s = two_mode_unit().apply_map(&m, &DMatrix::zeros(4, 4)).unwrap();
    assert_abs_diff_eq!(s.sigma[(0, 2)], xi.sqrt() / 2.0, epsilon = 1e-15);
    assert!(s.preserves_symplectic_form(&m, 1e-12));
}

#[test]
fn zero_coupling_is_identity() {
    assert_eq!(faraday_unit(0.0), DMatrix::identity(4, 4));
}

#[test]
fn population_faraday_layout_and_symplectic() {
    let (xu, xd, nl) = (2.5e-14, 4e-14, 1.3e7);
    let pops = [8e5, 1.5e5, 2e4];
    let m = faraday_population(xu, xd, pops, nl, true);
    assert_abs_diff_eq!(m[(4, 0)], xu.sqrt() * nl);
    assert_abs_diff_eq!(m[(4, 2)], xd.sqrt() * nl);
    assert_abs_diff_eq!(m[(1, 5)], -xu.sqrt() * (pops[0] - pops[1]));
    assert_abs_diff_eq!(m[(3, 5)], -xd.sqrt() * (pops[1] - pops[2]));
    let mut s = GaussianState::vacuum(1e6, nl, true);
    s.populations = pops;
    assert!(s.preserves_symplectic_form(&m, 1e-9));
}

#[test]
fn qnd_homodyne_variance() {
    for &xi in &[0.1, 1.0, 5.0] {
        let s = two_mode_unit()
            .apply_map(&faraday_unit(xi), &DMatrix::zeros(4, 4))
            .unwrap()
            .homodyne(Mode::Light)
            .unwrap();
        assert_eq!(s.sigma.nrows(), 2);
        assert_abs_diff_eq!(s.sigma[(0, 0)], 0.5 / (1.0 + xi), epsilon = 1e-15);
    }
    let s = two_mode_unit()
        .apply_map(&faraday_unit(1.0), &DMatrix::zeros(4, 4))
        .unwrap()
        .homodyne(Mode::Light)
        .unwrap();
    assert_abs_diff_eq!(s.sigma[(0, 0)], 0.25, epsilon = 1e-15);
}

#[test]
fn homodyne_uncorrelated_is_noop_on_rest() {
    let s = two_mode_unit().homodyne(Mode::Light).unwrap();
    assert_eq!(s.sigma, DMatrix::from_diagonal_element(2, 2, 0.5));
}

#[test]
fn homodyne_zero_variance_keeps_rest() {
    let mut s = two_mode_unit();
    s.sigma[(2, 2)] = 0.0;
    let t = s.condition_on(Mode::Light).unwrap();
    assert_eq!(t.sigma.view((0, 0), (2, 2)), s.sigma.view((0, 0), (2, 2)));
}

#[test]
fn homodyne_requires_light_mode() {
    let s = two_mode_unit();
    assert!(s.homodyne(Mode::DownUp).is_err());
}

#[test]
fn waveplate_rotates_light() {
    let s = two_mode_unit();
    let w = s.waveplate();
    // (X_y, Y_y) -> (-Y_y, X_y)
    assert_eq!(w[(2, 3)], -1.0);
    assert_eq!(w[(3, 2)], 1.0);
    assert_eq!(w[(2, 2)], 0.0);
    let r = s.rotation(0.3, &[Mode::DownUp]);
    let ri = s.rotation(-0.3, &[Mode::DownUp]);
    assert!((&r * &ri - DMatrix::<f64>::identity(4, 4)).abs().max() < 1e-15);
    assert_eq!(s.rotation(0.0, &[Mode::DownUp]), DMatrix::identity(4, 4));
}

#[test]
fn double_pass_partial_trace_eigenvalues() {
    for &xi in &[0.2, 1.0, 4.0, 20.0] {
        let s = two_mode_unit();
        let f = faraday_unit(xi);
        let m = &f * s.waveplate() * &f;
        let r = s.apply_map(&m, &DMatrix::zeros(4, 4)).unwrap().partial_trace(Mode::Light).unwrap();
        let mut ev: Vec<f64> = r.sigma.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let want = double_pass_eigenvalues(xi);
        assert_abs_diff_eq!(ev[0], want.0, epsilon = 1e-10 * want.1);
        assert_abs_diff_eq!(ev[1], want.1, epsilon = 1e-10 * want.1);
    }
}

#[test]
fn trace_and_measure_differ() {
    let s = two_mode_unit().apply_map(&faraday_unit(1.0), &DMatrix::zeros(4, 4)).unwrap();
    let a = s.partial_trace(Mode::Light).unwrap();
    let b = s.homodyne(Mode::Light).unwrap();
    assert!((a.sigma[(0, 0)] - b.sigma[(0, 0)]).abs() > 0.1);
}

#[test]
fn append_then_trace_roundtrip() {
    let s = GaussianState::vacuum(1e6, 3e8, false).partial_trace(Mode::Light).unwrap();
    let a = s.append_fresh_light(3e8);
    assert_eq!(a.sigma, GaussianState::vacuum(1e6, 3e8, false).sigma);
    assert_eq!(a.partial_trace(Mode::Light).unwrap().sigma, s.sigma);
}

#[test]
fn conditioning_is_idempotent() {
    let s = two_mode_unit().apply_map(&faraday_unit(2.0), &DMatrix::zeros(4, 4)).unwrap();
    let once = s.condition_on(Mode::Light).unwrap();
    let twice = once.condition_on(Mode::Light).unwrap();
    assert!((once.sigma - twice.sigma).abs().max() < 1e-15);
}

#[test]
fn unphysical_state_detected() {
    let mut s = two_mode_unit();
    s.sigma[(0, 0)] = 0.1;
    assert!(!s.is_physical());
}

#[derive(Debug, Clone)]
enum Step {
    Faraday(f64),
    Rotate(f64),
    Wave,
    Noise(f64),
    Measure,
    Trace,
}

fn step_strategy() -> impl Strategy<Value = Step> {
    prop_oneof![
        (0.0..5.0f64).prop_map(Step::Faraday),
        (-3.2..3.2f64).prop_map(Step::Rotate),
        Just(Step::Wave),
        (0.0..1.0f64).prop_map(Step::Noise),
        Just(Step::Measure),
        Just(Step::Trace),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]
    #[test]
    fn physicality_preserved(steps in prop::collection::vec(step_strategy(), 1..30)) {
        let mut s = GaussianState::unit_vacuum(&[Mode::DownUp, Mode::WrDown, Mode::Light]);
        let dim = s.sigma.nrows();
        let z = DMatrix::zeros(dim, dim);
        for st in steps {
            let before = s.sigma.clone();
            s = match st {
                Step::Faraday(xi) => {
                    let mut m = DMatrix::identity(6, 6);
                    m[(4, 0)] = xi.sqrt();
                    m[(1, 5)] = -xi.sqrt();
                    prop_assert!(s.preserves_symplectic_form(&m, 1e-9));
                    s.apply_map(&m, &z).unwrap()
                }
                Step::Rotate(t) => s.apply_map(&s.rotation(t, &[Mode::DownUp, Mode::WrDown]), &z).unwrap(),
                Step::Wave => s.apply_map(&s.waveplate(), &z).unwrap(),
                Step::Noise(a) => s.apply_map(&DMatrix::identity(6, 6), &(DMatrix::identity(6, 6) * a)).unwrap(),
                Step::Measure => {
                    let c = s.homodyne(Mode::Light).unwrap();
                    let n = c.sigma.nrows();
                    for i in 0..n {
                        prop_assert!(c.sigma[(i, i)] <= before[(i, i)] + 1e-12);
                    }
                    c.append_fresh_light(1.0)
                }
                Step::Trace => s.partial_trace(Mode::Light).unwrap().append_fresh_light(1.0),
            };
            prop_assert!(s.is_physical());
        }
    }
}
