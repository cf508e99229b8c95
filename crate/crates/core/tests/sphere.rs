mod common;

use std::f64::consts::PI;

use mcf_core::sphere::{self, BoundaryKind, ProfileSettings, ProfileState};
use mcf_core::{Error, Exec};
use proptest::prelude::*;

fn oracle_error(n: usize, len: usize, boundary: BoundaryKind, psi: &dyn Fn(f64) -> f64) -> f64 {
    let s = ProfileState::from_function(n, len, boundary, psi).unwrap();
    let rhs = sphere::reduced_rhs(&s).unwrap();
    (0..len)
        .map(|j| (common::equivariant_velocity(n, psi, s.theta(j as isize))[0] - rhs[j]).abs())
        .fold(0.0, f64::max)
}

#[test]
fn reduced_flow_matches_full_chart_velocity() {
    let null = |t: f64| 0.4 * t.sin() - 0.1 * (2.0 * t).sin();
    let degree_one = |t: f64| t + 0.3 * (2.0 * t).sin();
    for n in [2, 3] {
        for (boundary, psi) in [
            (BoundaryKind::NullHomotopic, &null as &dyn Fn(f64) -> f64),
            (BoundaryKind::DegreeOne, &degree_one),
        ] {
            let e0 = oracle_error(n, 64, boundary, psi);
            let e1 = oracle_error(n, 128, boundary, psi);
            assert!(e1 < 1e-2, "n {n} {boundary:?}: {e0:e} {e1:e}");
            assert!(e0 / e1 > 3.3, "n {n} {boundary:?}: ratio {}", e0 / e1);
        }
    }
}

#[test]
fn off_equator_velocity_has_no_transverse_part() {
    // The oracle is evaluated on the equator of the remaining angles; the
    // other components of the velocity vanish for an equivariant map.
    let psi = |t: f64| 0.5 * t.sin();
    for n in [2, 3] {
        let v = common::equivariant_velocity(n, &psi, 1.1);
        assert!(v[1..].iter().all(|c| c.abs() < 1e-6), "{v:?}");
    }
}

#[test]
fn trivial_and_identity_profiles_are_stationary() {
    for n in [2, 3, 4] {
        let zero = ProfileState::from_function(n, 32, BoundaryKind::NullHomotopic, |_| 0.0).unwrap();
        assert!(sphere::reduced_rhs(&zero).unwrap().iter().all(|v| *v == 0.0));
        let id = ProfileState::from_function(n, 32, BoundaryKind::DegreeOne, |t| t).unwrap();
        let rhs = sphere::reduced_rhs(&id).unwrap();
        assert!(rhs.iter().all(|v| v.abs() < 1e-10), "n {n}: {rhs:?}");
    }
}

#[test]
fn small_profile_flows_to_the_constant_map() {
    let state = ProfileState::from_function(2, 64, BoundaryKind::NullHomotopic, |t| 0.3 * t.sin()).unwrap();
    let settings = ProfileSettings {
        t_end: 2.0,
        sigma: sphere::DEFAULT_PROFILE_SIGMA,
        output_every: 0.5,
        blowup_lambda: sphere::DEFAULT_BLOWUP_LAMBDA,
        exec: Exec::Sequential,
    };
    let out = sphere::run_profile(state, &settings, |_| {}).unwrap();
    let first = out.series[0];
    let last = *out.series.last().unwrap();
    assert!(last.max_abs_psi < 0.3 * first.max_abs_psi);
    for w in out.series.windows(2) {
        assert!(w[1].total_volume <= w[0].total_volume + 1e-12);
        assert!(w[1].max_abs_psi < w[0].max_abs_psi);
    }
    let area = common::sphere_area(2);
    assert!((last.total_volume - area).abs() < (first.total_volume - area).abs());
}

#[test]
fn modes_agree_bitwise() {
    let run = |exec| {
        let state = ProfileState::from_function(3, 48, BoundaryKind::DegreeOne, |t| t + 0.2 * (2.0 * t).sin()).unwrap();
        let settings = ProfileSettings { t_end: 0.05, sigma: 0.4, output_every: 0.01, blowup_lambda: 1e3, exec };
        sphere::run_profile(state, &settings, |_| {}).unwrap()
    };
    let a = run(Exec::Sequential);
    let b = run(Exec::Parallel);
    assert_eq!(a.state, b.state);
    assert_eq!(a.series, b.series);
}

#[test]
fn gradient_threshold_stops_the_run() {
    let state = ProfileState::from_function(2, 64, BoundaryKind::DegreeOne, |t| {
        PI * (1.0 / (1.0 + (-10.0 * (t - PI / 2.0)).exp()))
    })
    .unwrap();
    let settings = ProfileSettings { t_end: 1.0, sigma: 0.4, output_every: 0.1, blowup_lambda: 2.0, exec: Exec::Sequential };
    let failure = sphere::run_profile(state, &settings, |_| {}).unwrap_err();
    assert!(matches!(failure.error, Error::Blowup { .. }), "{}", failure.error);
}

#[test]
fn invalid_profiles_are_rejected() {
    assert!(ProfileState::new(1, vec![0.0; 16], BoundaryKind::NullHomotopic, 0.0).is_err());
    assert!(ProfileState::new(2, vec![0.0; 4], BoundaryKind::NullHomotopic, 0.0).is_err());
    let mut psi = vec![0.0; 16];
    psi[3] = f64::INFINITY;
    assert!(ProfileState::new(2, psi, BoundaryKind::NullHomotopic, 0.0).is_err());
    let state = ProfileState::from_function(2, 16, BoundaryKind::NullHomotopic, |_| 0.0).unwrap();
    let bad = ProfileSettings { t_end: 0.0, sigma: 0.4, output_every: 0.1, blowup_lambda: 1e3, exec: Exec::Sequential };
    assert!(sphere::run_profile(state, &bad, |_| {}).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// `ψ ↦ −ψ` is the reflection of the target through the equatorial
    /// hyperplane, which commutes with the flow.
    #[test]
    fn reflection_symmetry(coef in prop::collection::vec(-0.3..0.3f64, 3), n in 2usize..=4) {
        let f = |s: f64| (1..=3).map(|k| coef[k - 1] * (k as f64 * s).sin()).sum::<f64>();
        let a = ProfileState::from_function(n, 32, BoundaryKind::NullHomotopic, f).unwrap();
        let b = ProfileState::from_function(n, 32, BoundaryKind::NullHomotopic, |s| -f(s)).unwrap();
        let ra = sphere::reduced_rhs(&a).unwrap();
        let rb = sphere::reduced_rhs(&b).unwrap();
        for (x, y) in ra.iter().zip(&rb) {
            prop_assert!((x + y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    /// Reversing `θ ↦ π − θ` together with `ψ ↦ π − ψ` maps degree-one
    /// profiles to degree-one profiles.
    #[test]
    fn antipodal_symmetry(coef in prop::collection::vec(-0.2..0.2f64, 2)) {
        let f = |s: f64| s + coef[0] * (2.0 * s).sin() + coef[1] * (4.0 * s).sin();
        let g = |s: f64| PI - f(PI - s);
        let len = 32;
        let a = ProfileState::from_function(2, len, BoundaryKind::DegreeOne, f).unwrap();
        let b = ProfileState::from_function(2, len, BoundaryKind::DegreeOne, g).unwrap();
        let ra = sphere::reduced_rhs(&a).unwrap();
        let rb = sphere::reduced_rhs(&b).unwrap();
        for j in 0..len {
            prop_assert!((ra[j] + rb[len - 1 - j]).abs() <= 1e-10, "{} {}", ra[j], rb[len - 1 - j]);
        }
    }
}
