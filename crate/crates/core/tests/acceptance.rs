//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero when
//! any criterion fails.

mod common;

use std::time::{Duration, Instant};

use mcf_core::geometry::{curvature_term, singular_decompose, ManifoldSpec, MapDifferential};
use mcf_core::monitor::{self, AmbientEmbedding, DensityProbe, Flag, PointCloud};
use mcf_core::presets::{self, Preset, PresetParams};
use mcf_core::sphere::{self, BoundaryKind, ProfileSettings, ProfileState};
use mcf_core::torus::{self, FlowState, GridMap, RunSettings};
use mcf_core::verifier::{self, MarginTracker};
use mcf_core::Exec;
use rand::{Rng, SeedableRng};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

/// Inequality margins gathered during runs 4 and 7, checked as criterion 9.
#[derive(Default)]
struct Shared {
    torus_margin: Option<MarginTracker>,
    sphere_margin: Option<MarginTracker>,
}

fn svd_roundtrip() -> Outcome {
    let suite = verifier::svd_roundtrip_suite(10_000, 11);
    // Singular values against an independent decomposition.
    let mut rng = rand::rngs::StdRng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    for (n, m) in [(1, 1), (1, 3), (2, 2), (2, 3), (3, 1), (3, 2), (3, 3)] {
        for _ in 0..1000 {
            let data: Vec<f64> = (0..n * m).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let d = MapDifferential::from_row_major(m, n, &data).unwrap();
            let ours = singular_decompose(&d);
            let mut theirs: Vec<f64> =
                nalgebra::DMatrix::from_row_slice(m, n, &data).singular_values().iter().copied().collect();
            theirs.sort_by(|a, b| b.total_cmp(a));
            for (a, b) in ours.lambdas().iter().zip(&theirs) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    outcome(
        suite.passed() && worst < 1e-12,
        format!(
            "{} matrices, {} failures, worst invariant error {:.2e}, singular values vs independent SVD {:.2e}",
            suite.samples, suite.failures, suite.worst, worst
        ),
    )
}

fn quadratic_bound() -> Outcome {
    let s = verifier::quadratic_bound_suite(10_000, 21, &[0.1, 0.5, 0.9]);
    outcome(s.passed(), format!("{} samples, {} failures, min margin {:.3e}", s.samples, s.failures, s.worst))
}

fn curvature_sign() -> Outcome {
    let s = verifier::curvature_sign_suite(10_000, 31, curvature_term);
    let neg = verifier::curvature_sign_suite(1_000, 31, verifier::negated_curvature_term);
    outcome(
        s.passed() && !neg.passed(),
        format!(
            "{} samples, {} failures, min value {:.3e}; sign-flipped control rejected ({} failures)",
            s.samples, s.failures, s.worst, neg.failures
        ),
    )
}

fn torus_preservation(shared: &mut Shared) -> Outcome {
    let spec = ManifoldSpec::flat_torus(2, 2).unwrap();
    let map = presets::torus_map(Preset::SmallSine, spec, &[64, 64], &PresetParams::default()).unwrap();
    let state = FlowState::new(map, Exec::Sequential).unwrap();
    let initial_det = state.diagnostics.max_det;
    let delta = 2.0 - initial_det;
    let dx2 = (1.0 / 64.0f64).powi(2);
    let settings = RunSettings { t_end: 10.0, sigma: 1.0, output_every: 0.5, exec: Exec::Sequential };
    let mut worst_omega_drop = f64::INFINITY;
    let mut worst_volume_rise = f64::NEG_INFINITY;
    let mut max_det = initial_det;
    let mut tracker = MarginTracker::default();
    let result = torus::run(state, &settings, |ev| {
        let (a, b) = (&ev.prev.diagnostics, &ev.next.diagnostics);
        let dt = b.t - a.t;
        worst_omega_drop = worst_omega_drop.min(b.min_star_omega - a.min_star_omega + 10.0 * dx2 * dt);
        worst_volume_rise = worst_volume_rise.max(b.total_volume - a.total_volume);
        max_det = max_det.max(b.max_det);
        tracker.observe_torus(ev, delta);
    });
    shared.torus_margin = Some(tracker);
    match result {
        Err(f) => outcome(false, format!("run failed: {}", f.error)),
        Ok(out) => {
            let last = out.state.diagnostics;
            outcome(
                worst_omega_drop >= 0.0 && max_det < 2.0 && worst_volume_rise <= 1e-8 && initial_det <= 1.6,
                format!(
                    "{} steps; initial max_det {:.4}, max over run {:.4}; min_star_omega {:.6} -> {:.12}; \
                     worst slack-adjusted drop {:.2e}; worst volume increase per step {:.2e}",
                    out.steps, initial_det, max_det, out.series[0].min_star_omega, last.min_star_omega,
                    worst_omega_drop.min(0.0), worst_volume_rise
                ),
            )
        }
    }
}

fn linear_decay() -> Outcome {
    let s = verifier::linear_decay_study(&[64, 128, 256], 1e-3, 0.05).unwrap();
    let within = s.residuals.iter().all(|r| *r < 0.01);
    outcome(
        within && s.min_order() >= 1.8,
        format!(
            "relative errors {:?}, orders {:?}",
            s.residuals.iter().map(|r| format!("{r:.3e}")).collect::<Vec<_>>(),
            s.orders().iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn evolution_identity() -> Outcome {
    let s = verifier::evolution_identity_study(&[32, 64, 128], curvature_term).unwrap();
    let spec = ManifoldSpec::flat_torus(2, 2).unwrap();
    let affine = GridMap::from_function(spec, &[16, 16], &[1, 0, 1, 1], |x, out| {
        out[0] = x[0] + x[1] + 0.25;
        out[1] = x[1] - 0.5;
    })
    .unwrap();
    let a0 = FlowState::new(affine, Exec::Sequential).unwrap();
    let dt = torus::cfl_dt(&a0.map, 0.5);
    let a1 = torus::step(&a0, dt, Exec::Sequential).unwrap();
    let affine_residual = verifier::evolution_identity_residual(&a0.map, &a1.map, dt, curvature_term).unwrap();
    outcome(
        s.min_ratio() >= 3.0 && affine_residual < 1e-12,
        format!(
            "residuals {:?}, reduction factors {:?}, affine residual {:.1e}",
            s.residuals.iter().map(|r| format!("{r:.3e}")).collect::<Vec<_>>(),
            s.residuals.windows(2).map(|w| format!("{:.2}", w[0] / w[1])).collect::<Vec<_>>(),
            affine_residual
        ),
    )
}

fn sphere_convergence(shared: &mut Shared) -> Outcome {
    let state = ProfileState::from_function(2, 256, BoundaryKind::NullHomotopic, |t| 0.5 * t.sin()).unwrap();
    let delta = 2.0 - state.field(Exec::Sequential).unwrap().iter().map(|p| p.det).fold(0.0, f64::max);
    let settings = ProfileSettings {
        t_end: 20.0,
        sigma: sphere::DEFAULT_PROFILE_SIGMA,
        output_every: 0.5,
        blowup_lambda: sphere::DEFAULT_BLOWUP_LAMBDA,
        exec: Exec::Sequential,
    };
    let mut tracker = MarginTracker::default();
    let result = sphere::run_profile(state, &settings, |ev| tracker.observe_profile(ev, delta));
    shared.sphere_margin = Some(tracker);
    let out = match result {
        Ok(o) => o,
        Err(f) => return outcome(false, format!("run failed: {}", f.error)),
    };
    let last = out.series.last().unwrap();
    let second_half: Vec<f64> = out.series.iter().filter(|r| r.t >= 10.0).map(|r| r.max_a2).collect();
    let a2_decreasing = second_half.windows(2).all(|w| w[1] < w[0]);

    let psi = |t: f64| 0.5 * t.sin() + 0.2 * (2.0 * t).sin() - 0.05 * (3.0 * t).sin();
    let levels = [64, 128, 256];
    let errors: Vec<f64> = levels
        .iter()
        .map(|&len| {
            let s = ProfileState::from_function(2, len, BoundaryKind::NullHomotopic, psi).unwrap();
            let rhs = sphere::reduced_rhs(&s).unwrap();
            (0..len)
                .map(|j| (common::equivariant_velocity(2, &psi, s.theta(j as isize))[0] - rhs[j]).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        last.max_abs_psi < 1e-3 && last.min_star_omega >= 1.0 - 1e-3 && a2_decreasing && min_order >= 1.8,
        format!(
            "{} steps; max|psi(20)| {:.2e}, min star_omega {:.12}, max_A2 decreasing on [10, 20]: {}; \
             full-chart oracle errors {:?}, orders {:?}",
            out.steps,
            last.max_abs_psi,
            last.min_star_omega,
            a2_decreasing,
            errors.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>(),
            orders.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn gaussian_density() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;

    // Flat sheet, tilted inside R^4.
    let dim = 4;
    let rot = common::compose(dim, &common::plane_rotation(dim, 0, 2, 0.7), &common::plane_rotation(dim, 1, 3, -0.4));
    let shift = [0.3, -0.1, 0.2, 0.05];
    let sheet = common::flat_sheet(2, dim, 1.0, 128, 0.0, &rot, &shift);
    let y0: Vec<f64> = shift.to_vec();
    let probe = DensityProbe::new(y0, 0.01).unwrap();
    let flat = monitor::density(&sheet, &probe, Exec::Sequential).unwrap();
    ok &= (flat - 1.0).abs() <= 1e-3;
    notes.push(format!("flat sheet {flat:.9}"));

    // Smooth sample: graph of a small map, probed on the graph.
    let spec = ManifoldSpec::flat_torus(2, 2).unwrap();
    let map = presets::torus_map(Preset::SmallSine, spec, &[64, 64], &PresetParams::default()).unwrap();
    let emb = AmbientEmbedding::flat_torus(spec).unwrap();
    let cloud = emb.torus_cloud(&map, 0.0, Exec::Sequential).unwrap();
    let p = 64 * 20 + 37;
    let y0 = cloud.point(p).to_vec();
    let t0 = 2e-3;
    let base = monitor::density(&cloud, &DensityProbe::new(y0.clone(), t0).unwrap(), Exec::Sequential).unwrap();
    let mut worst_scaling: f64 = 0.0;
    for lambda in [2.0, 10.0, 100.0] {
        let d = monitor::parabolic_dilate(&cloud, lambda, &y0, t0).unwrap();
        let origin = DensityProbe::new(vec![0.0; y0.len()], 0.0).unwrap();
        let v = monitor::density(&d, &origin, Exec::Sequential).unwrap();
        worst_scaling = worst_scaling.max((v - base).abs());
    }
    ok &= worst_scaling < 1e-6;
    notes.push(format!("scaling invariance {worst_scaling:.1e}"));

    // Probes along a smooth run.
    let state = FlowState::new(map, Exec::Sequential).unwrap();
    let settings = RunSettings { t_end: 0.2, sigma: 1.0, output_every: 0.1, exec: Exec::Sequential };
    let mut state = torus::run(state, &settings, |_| {}).unwrap().state;
    let t0 = 0.2 + 5.5e-3;
    let y0 = emb.embed(&[20.0 / 64.0, 37.0 / 64.0], &[state.map.value(p, 0), state.map.value(p, 1)]);
    let mut probe = DensityProbe::new(y0, t0).unwrap();
    let mut max_density: f64 = 0.0;
    for target in [0.2, 0.2 + 3e-3, 0.2 + 4.5e-3, 0.2 + 5e-3] {
        if target > state.t {
            let s = RunSettings { t_end: target, ..settings };
            state = torus::run(state, &s, |_| {}).unwrap().state;
        }
        let c = emb.torus_cloud(&state.map, state.t, Exec::Sequential).unwrap();
        max_density = max_density.max(monitor::gaussian_density(&c, &mut probe, Exec::Sequential).unwrap());
    }
    let (flag, limit) = monitor::white_flag(&probe, 0.05).unwrap();
    ok &= flag == Flag::Regular && max_density <= 1.2;
    notes.push(format!("smooth probe limit {limit:.5} ({flag}), max sample {max_density:.4}"));

    // Round 2-sphere shrinking to its center at t0 = 0.
    let mut probe = DensityProbe::new(vec![0.0; 3], 0.0).unwrap();
    let exact = 4.0 / std::f64::consts::E;
    let mut worst_fixture: f64 = 0.0;
    for tau in [1e-1f64, 3e-2, 1e-2] {
        let r = (4.0 * tau).sqrt();
        let c = PointCloud::round_sphere(2, &[0.0; 3], r, -tau, 256).unwrap();
        let v = monitor::gaussian_density(&c, &mut probe, Exec::Sequential).unwrap();
        worst_fixture = worst_fixture.max((v - exact).abs());
    }
    let (flag, limit) = monitor::white_flag(&probe, 0.05).unwrap();
    ok &= flag == Flag::Suspicious && worst_fixture < 1e-3;
    notes.push(format!("shrinking sphere limit {limit:.5} vs 4/e = {exact:.5} ({flag})"));

    outcome(ok, notes.join("; "))
}

fn differential_inequality(shared: &Shared) -> Outcome {
    match (&shared.torus_margin, &shared.sphere_margin) {
        (Some(t), Some(s)) => outcome(
            t.passed() && s.passed() && t.steps > 0 && s.steps > 0,
            format!(
                "torus: worst margin {:.3e} at t = {:.4}, worst margin / slack {:.3} over {} steps; \
                 sphere: worst margin {:.3e}, worst margin / slack {:.2e} over {} steps",
                t.worst, t.worst_t, t.worst_relative, t.steps, s.worst, s.worst_relative, s.steps
            ),
        ),
        _ => outcome(false, "runs 4 and 7 did not record margins".into()),
    }
}

fn main() {
    let mut shared = Shared::default();
    type Criterion<'a> = (&'a str, Duration, Box<dyn FnOnce(&mut Shared) -> Outcome + 'a>);
    let criteria: Vec<Criterion> = vec![
        ("svd roundtrip", Duration::from_secs(10), Box::new(|_| svd_roundtrip())),
        ("quadratic term bound", Duration::from_secs(30), Box::new(|_| quadratic_bound())),
        ("curvature term sign", Duration::from_secs(10), Box::new(|_| curvature_sign())),
        ("torus flow preservation", Duration::from_secs(300), Box::new(torus_preservation)),
        ("linear decay oracle", Duration::from_secs(60), Box::new(|_| linear_decay())),
        ("evolution identity refinement", Duration::from_secs(300), Box::new(|_| evolution_identity())),
        ("sphere convergence", Duration::from_secs(300), Box::new(sphere_convergence)),
        ("gaussian density", Duration::from_secs(120), Box::new(|_| gaussian_density())),
        ("differential inequality", Duration::from_secs(1), Box::new(|s| differential_inequality(s))),
    ];
    let mut failed = 0;
    for (k, (name, budget, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = check(&mut shared);
        let elapsed = start.elapsed();
        let passed = result.passed && elapsed <= budget;
        if !passed {
            failed += 1;
        }
        println!(
            "{} [{}] {name} ({:.1} s, budget {} s): {}",
            if passed { "PASS" } else { "FAIL" },
            k + 1,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            result.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
