//! Residuals of the `*Ω` evolution identities and margins of the derived
//! inequalities along discrete flows, plus randomized property suites for
//! the pointwise term evaluators.
//!
//! The flows are nonparametric: a grid point moves by `(0, f_t)`, which is
//! the mean curvature vector plus the tangential field `c^k ∂_k F`,
//! `c^k = Λ^{kl} ⟨f_t, ∂_l f⟩`. The identities hold for the normal motion, so
//! time derivatives at a fixed grid point are corrected by `−c^k ∂_k`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::{
    build_frames, curvature_term, graph_condition, quadratic_form_q, quadratic_term, singular_decompose,
    star_omega, ManifoldSpec, MapDifferential, PointGeometry, SecondFundamentalForm, MAX_DIM,
};
use crate::sphere::{BoundaryKind, ProfilePoint, ProfileState, ProfileStepEvent};
use crate::torus::{cfl_dt, step, FieldPoint, FlowState, GridMap, StepEvent};

/// Evaluator for the curvature term; injectable so that a deliberately
/// wrong evaluator can serve as a negative control.
pub type CurvatureFn = fn(&[f64], &ManifoldSpec) -> f64;

/// Minimum observed order demanded of refinement studies.
pub const MIN_ORDER: f64 = 1.8;

/// Constant in the `C · (Δx² + Δt)` discretization slack of pointwise checks.
pub const SLACK_CONSTANT: f64 = 10.0;

fn star_omega_field(field: &[FieldPoint]) -> Vec<f64> {
    field.iter().map(|p| p.geom.star_omega).collect()
}

/// Laplace–Beltrami of `u` for the induced metric described by `field`,
/// with the central gradient of `u`.
fn torus_laplacian(map: &GridMap, field: &[FieldPoint], u: &[f64]) -> (Vec<f64>, Vec<[f64; MAX_DIM]>) {
    let weight: Vec<f64> = field.iter().map(|p| p.geom.det.sqrt()).collect();
    map.grid().divergence_form_with_gradient(u, &weight, |p| field[p].geom.inv_metric)
}

/// `c^k ∂_k u` with `c^k = Λ^{kl} ⟨f_t, ∂_l f⟩`.
fn torus_transport(map: &GridMap, pt: &FieldPoint, grad: &[f64; MAX_DIM]) -> f64 {
    let (n, m) = (map.spec().n, map.spec().m);
    let mut w_dot = [0.0; MAX_DIM];
    for (l, w) in w_dot.iter_mut().enumerate().take(n) {
        *w = (0..m).map(|a| pt.geom.velocity[a] * pt.d.get(a, l)).sum();
    }
    let mut total = 0.0;
    for k in 0..n {
        let c: f64 = (0..n).map(|l| pt.geom.inv_metric[k][l] * w_dot[l]).sum();
        total += c * grad[k];
    }
    total
}

/// L∞ mismatch between `e_k(*Ω)` from central differences of the `*Ω` field
/// and `−*Ω Σ_i λ_i h_{n+i,ik}` from the frame components.
pub fn gradient_identity_residual(map: &GridMap) -> Result<f64> {
    let field = map.field(Exec::Sequential, 0.0)?;
    let omega = star_omega_field(&field);
    let n = map.spec().n;
    let mut worst: f64 = 0.0;
    for p in 0..omega.len() {
        let g = PointGeometry::from_jet(&map.jet(p));
        let grad = map.grid().gradient(&omega, p);
        for k in 0..n {
            let a = g.svd.base_vector(k);
            let lk = g.svd.lambda(k);
            let fd: f64 = (0..n).map(|l| a[l] * grad[l]).sum::<f64>() / (1.0 + lk * lk).sqrt();
            let frame = -g.star_omega * frame_gradient_sum(&g, k);
            worst = worst.max((fd - frame).abs());
        }
    }
    Ok(worst)
}

/// `Σ_i λ_i h_{n+i,ik}` with the zero convention beyond `min(n, m)`.
fn frame_gradient_sum(g: &PointGeometry, k: usize) -> f64 {
    (0..g.svd.rank_bound()).map(|i| g.svd.lambda(i) * g.sff.h(i, i, k)).sum()
}

/// L∞ residual of `d*Ω/dt = Δ*Ω + *Ω (Q + C)` between two consecutive torus
/// states, with a forward difference in time.
pub fn evolution_identity_residual(prev: &GridMap, next: &GridMap, dt: f64, curvature: CurvatureFn) -> Result<f64> {
    let f0 = prev.field(Exec::Sequential, 0.0)?;
    let f1 = next.field(Exec::Sequential, dt)?;
    let o0 = star_omega_field(&f0);
    let (lap, grads) = torus_laplacian(prev, &f0, &o0);
    let spec = *prev.spec();
    let mut worst: f64 = 0.0;
    for p in 0..o0.len() {
        let g = PointGeometry::from_jet(&prev.jet(p));
        let reaction = quadratic_term(&g.svd, &g.sff)? + curvature(g.svd.lambdas(), &spec);
        let dodt = (f1[p].geom.star_omega - o0[p]) / dt - torus_transport(prev, &f0[p], &grads[p]);
        worst = worst.max((dodt - lap[p] - o0[p] * reaction).abs());
    }
    Ok(worst)
}

/// `min (n ε₂ η² |A|² − |∇η|²)` over the grid, `η = *Ω`, with `|∇η|²` from
/// the frame form `Σ_k (η Σ_i λ_i h_{n+i,ik})²`.
pub fn gradient_inequality_check(map: &GridMap, eps2: f64) -> Result<f64> {
    let n = map.spec().n as f64;
    let mut worst = f64::INFINITY;
    for p in 0..map.grid().len() {
        let g = PointGeometry::from_jet(&map.jet(p));
        let energy: f64 = g.svd.lambdas().iter().map(|l| l * l).sum();
        if energy > eps2 {
            return Err(Error::Precondition(format!(
                "energy density {energy:e} at grid index {:?} exceeds eps2 = {eps2:e}",
                &map.grid().multi_index(p)[..map.spec().n]
            )));
        }
        let eta = g.star_omega;
        let grad_sq: f64 = (0..map.spec().n).map(|k| (eta * frame_gradient_sum(&g, k)).powi(2)).sum();
        worst = worst.min(n * eps2 * eta * eta * g.a2 - grad_sq);
    }
    Ok(worst)
}

/// Pointwise margin of `d*Ω/dt ≥ Δ*Ω + δ *Ω |A|²` over one torus step.
///
/// The factor `*Ω` comes from the evolution equation, where the quadratic
/// term bounded below by `δ|A|²` is multiplied by `*Ω`.
pub fn torus_inequality_margin(ev: &StepEvent<'_>, delta: f64) -> f64 {
    let dt = ev.next.t - ev.prev.t;
    let map = &ev.prev.map;
    let o0 = star_omega_field(ev.prev_field);
    let (lap, grads) = torus_laplacian(map, ev.prev_field, &o0);
    let mut worst = f64::INFINITY;
    for p in 0..o0.len() {
        let pt = &ev.prev_field[p];
        let dodt = (ev.next_field[p].geom.star_omega - o0[p]) / dt - torus_transport(map, pt, &grads[p]);
        worst = worst.min(dodt - lap[p] - delta * o0[p] * pt.geom.a2);
    }
    worst
}

fn profile_omega(field: &[ProfilePoint]) -> Vec<f64> {
    field.iter().map(|p| p.star_omega).collect()
}

/// `c^θ ∂_θ *Ω`, `c^θ = ψ_t ψ'/(1+ψ'²)`; `*Ω` is even across the poles.
fn profile_transport(state: &ProfileState, field: &[ProfilePoint], omega: &[f64], j: usize) -> f64 {
    let len = omega.len();
    let h = state.dtheta();
    let right = if j + 1 < len { omega[j + 1] } else { omega[j] };
    let left = if j > 0 { omega[j - 1] } else { omega[j] };
    let p = &field[j];
    p.rhs * p.dpsi / (1.0 + p.dpsi * p.dpsi) * (right - left) / (2.0 * h)
}

/// Pointwise margin of `d*Ω/dt ≥ Δ*Ω + δ *Ω |A|²` over one profile step.
pub fn profile_inequality_margin(ev: &ProfileStepEvent<'_>, delta: f64) -> f64 {
    let o0 = profile_omega(ev.prev_field);
    let lap = ev.prev.laplace_beltrami(&o0);
    let mut worst = f64::INFINITY;
    for j in 0..o0.len() {
        let dodt = (ev.next_field[j].star_omega - o0[j]) / ev.dt - profile_transport(ev.prev, ev.prev_field, &o0, j);
        worst = worst.min(dodt - lap[j] - delta * o0[j] * ev.prev_field[j].a2);
    }
    worst
}

/// L∞ residual of the `*Ω` evolution identity between two profile states.
pub fn profile_evolution_identity_residual(prev: &ProfileState, next: &ProfileState, curvature: CurvatureFn) -> Result<f64> {
    let dt = next.t - prev.t;
    let f0 = prev.field(Exec::Sequential)?;
    let f1 = next.field(Exec::Sequential)?;
    let o0 = profile_omega(&f0);
    let lap = prev.laplace_beltrami(&o0);
    let spec = prev.spec();
    let mut worst: f64 = 0.0;
    for j in 0..o0.len() {
        let g = PointGeometry::from_jet(&prev.jet(j));
        let reaction = quadratic_term(&g.svd, &g.sff)? + curvature(g.svd.lambdas(), &spec);
        let dodt = (f1[j].star_omega - o0[j]) / dt - profile_transport(prev, &f0, &o0, j);
        worst = worst.max((dodt - lap[j] - o0[j] * reaction).abs());
    }
    Ok(worst)
}

/// Running minimum of an inequality margin over the steps of a run,
/// alongside the discretization slack `C · (Δx² + Δt)` of each step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginTracker {
    pub worst: f64,
    pub worst_t: f64,
    /// Smallest `margin / slack`; the check passes while this is above −1.
    pub worst_relative: f64,
    pub steps: usize,
}

impl Default for MarginTracker {
    fn default() -> Self {
        Self { worst: f64::INFINITY, worst_t: f64::NAN, worst_relative: f64::INFINITY, steps: 0 }
    }
}

impl MarginTracker {
    pub fn update(&mut self, margin: f64, t: f64, dx2: f64, dt: f64) {
        self.steps += 1;
        if margin < self.worst {
            self.worst = margin;
            self.worst_t = t;
        }
        self.worst_relative = self.worst_relative.min(margin / (SLACK_CONSTANT * (dx2 + dt)));
    }

    pub fn passed(&self) -> bool {
        self.worst_relative >= -1.0
    }

    pub fn observe_torus(&mut self, ev: &StepEvent<'_>, delta: f64) {
        let h = ev.prev.map.grid().min_spacing();
        self.update(torus_inequality_margin(ev, delta), ev.prev.t, h * h, ev.next.t - ev.prev.t);
    }

    pub fn observe_profile(&mut self, ev: &ProfileStepEvent<'_>, delta: f64) {
        let h = ev.prev.dtheta();
        self.update(profile_inequality_margin(ev, delta), ev.prev.t, h * h, ev.dt);
    }
}

/// Residuals of one check on a sequence of grid levels.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementStudy {
    pub name: String,
    pub levels: Vec<usize>,
    pub residuals: Vec<f64>,
}

impl RefinementStudy {
    /// `log₂(r_k / r_{k+1})` for each consecutive pair of levels.
    pub fn orders(&self) -> Vec<f64> {
        self.residuals
            .windows(2)
            .zip(self.levels.windows(2))
            .map(|(r, l)| (r[0] / r[1]).ln() / (l[1] as f64 / l[0] as f64).ln())
            .collect()
    }

    pub fn min_order(&self) -> f64 {
        self.orders().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Smallest reduction factor per level pair.
    pub fn min_ratio(&self) -> f64 {
        self.residuals.windows(2).map(|r| r[0] / r[1]).fold(f64::INFINITY, f64::min)
    }
}

/// Fixed smooth map `T² → T²` used by the torus refinement studies.
pub fn smooth_test_map(resolution: usize) -> Result<GridMap> {
    let spec = ManifoldSpec::flat_torus(2, 2)?;
    GridMap::from_function(spec, &[resolution, resolution], &[0; 4], |x, out| {
        let (u, v) = (2.0 * PI * x[0], 2.0 * PI * x[1]);
        out[0] = 0.10 * u.sin() * v.cos() + 0.05 * (u + v).sin();
        out[1] = 0.08 * (u + 0.3).cos() + 0.06 * (2.0 * v).sin() * u.cos();
    })
}

pub fn gradient_identity_study(levels: &[usize]) -> Result<RefinementStudy> {
    let residuals = levels.iter().map(|&n| gradient_identity_residual(&smooth_test_map(n)?)).collect::<Result<_>>()?;
    Ok(RefinementStudy { name: "gradient_identity".into(), levels: levels.to_vec(), residuals })
}

/// One step with `dt = ½ cfl_dt` from the smooth test map on each level.
pub fn evolution_identity_study(levels: &[usize], curvature: CurvatureFn) -> Result<RefinementStudy> {
    let residuals = levels
        .iter()
        .map(|&n| {
            let state = FlowState::new(smooth_test_map(n)?, Exec::Sequential)?;
            let dt = cfl_dt(&state.map, 0.5);
            let next = step(&state, dt, Exec::Sequential)?;
            evolution_identity_residual(&state.map, &next.map, dt, curvature)
        })
        .collect::<Result<_>>()?;
    Ok(RefinementStudy { name: "evolution_identity".into(), levels: levels.to_vec(), residuals })
}

/// Same study for the equivariant sphere flow, where the curvature term is
/// active.
pub fn profile_evolution_identity_study(levels: &[usize], curvature: CurvatureFn) -> Result<RefinementStudy> {
    let residuals = levels
        .iter()
        .map(|&len| {
            let prev = ProfileState::from_function(2, len, BoundaryKind::NullHomotopic, |t| 0.5 * t.sin() + 0.1 * (2.0 * t).sin())?;
            let dt = crate::sphere::profile_dt(&prev, 0.2);
            let rhs = crate::sphere::reduced_rhs(&prev)?;
            let psi = prev.psi().iter().zip(&rhs).map(|(v, r)| v + dt * r).collect();
            let next = ProfileState::new(2, psi, prev.boundary(), prev.t + dt)?;
            profile_evolution_identity_residual(&prev, &next, curvature)
        })
        .collect::<Result<_>>()?;
    Ok(RefinementStudy { name: "sphere_evolution_identity".into(), levels: levels.to_vec(), residuals })
}

/// Amplitude of `sin(2πx)` in a sampled periodic scalar by the discrete
/// sine coefficient `(2/N) Σ u_j sin(2πx_j)`.
pub fn sine_amplitude(values: &[f64]) -> f64 {
    let len = values.len() as f64;
    2.0 / len * values.iter().enumerate().map(|(j, v)| v * (2.0 * PI * j as f64 / len).sin()).sum::<f64>()
}

/// Relative deviation of the decayed amplitude of `ε sin(2πx)` after time
/// `t_end` from `ε e^{−4π² t_end}`, one level per resolution.
pub fn linear_decay_study(levels: &[usize], eps: f64, t_end: f64) -> Result<RefinementStudy> {
    let spec = ManifoldSpec::flat_torus(1, 1)?;
    let residuals = levels
        .iter()
        .map(|&n| {
            let map = GridMap::from_function(spec, &[n], &[0], |x, out| out[0] = eps * (2.0 * PI * x[0]).sin())?;
            let state = FlowState::new(map, Exec::Sequential)?;
            let settings = crate::torus::RunSettings { t_end, sigma: 0.5, output_every: t_end, exec: Exec::Sequential };
            let out = crate::torus::run(state, &settings, |_| {}).map_err(|f| f.error)?;
            let amp = sine_amplitude(out.state.map.values());
            Ok((amp / (eps * (-4.0 * PI * PI * t_end).exp()) - 1.0).abs())
        })
        .collect::<Result<_>>()?;
    Ok(RefinementStudy { name: "linear_decay".into(), levels: levels.to_vec(), residuals })
}

/// Outcome of a randomized property suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: String,
    pub samples: usize,
    pub failures: usize,
    /// The statistic compared against the threshold (largest error or
    /// smallest margin, depending on the suite).
    pub worst: f64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

const SHAPES: [(usize, usize); 9] = [(1, 1), (1, 2), (1, 3), (2, 1), (2, 2), (2, 3), (3, 1), (3, 2), (3, 3)];

/// Reconstruction, diagonality, frame orthonormality and the projection
/// relations of the adapted frames, on random matrices of every shape.
pub fn svd_roundtrip_suite(samples_per_shape: usize, seed: u64) -> SuiteResult {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for &(n, m) in &SHAPES {
        for _ in 0..samples_per_shape {
            let data: Vec<f64> = (0..n * m).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let d = MapDifferential::from_row_major(m, n, &data).expect("finite sample");
            let err = svd_errors(&d);
            worst = worst.max(err);
            if !(err < 1e-12) {
                failures += 1;
            }
        }
    }
    SuiteResult { name: "svd_roundtrip".into(), samples: samples_per_shape * SHAPES.len(), failures, worst }
}

/// Largest violation of the decomposition and frame invariants.
pub fn svd_errors(d: &MapDifferential) -> f64 {
    let (m, n) = (d.rows(), d.cols());
    let s = singular_decompose(d);
    let f = build_frames(&s);
    let mut err: f64 = 0.0;
    let r = s.reconstruct();
    for a in 0..m {
        for i in 0..n {
            err = err.max((r.get(a, i) - d.get(a, i)).abs());
        }
    }
    for i in 0..n {
        let ai = s.base_vector(i);
        for b in 0..m {
            let proj: f64 = (0..m).map(|a| (0..n).map(|k| d.get(a, k) * ai[k]).sum::<f64>() * s.target_vector(b)[a]).sum();
            err = err.max((proj - s.lambda_matrix(i, b)).abs());
        }
    }
    let dim = n + m;
    let vecs: Vec<&[f64]> = (0..n).map(|i| f.tangent(i)).chain((0..m).map(|a| f.normal(a))).collect();
    for x in 0..dim {
        for y in 0..dim {
            let dotp: f64 = vecs[x].iter().zip(vecs[y]).map(|(p, q)| p * q).sum();
            err = err.max((dotp - if x == y { 1.0 } else { 0.0 }).abs());
        }
    }
    for i in 0..n {
        let l = s.lambda(i);
        let norm: f64 = f.pi1(f.tangent(i)).iter().map(|v| v * v).sum::<f64>().sqrt();
        err = err.max((norm - 1.0 / (1.0 + l * l).sqrt()).abs());
        err = err.max((f.pi1_tangent_norms()[i] - norm).abs());
    }
    // π₁(e_α) = −Σ_j λ_{jα} π₁(e_j).
    for a in 0..m {
        let lhs = f.pi1(f.normal(a));
        for k in 0..n {
            let rhs: f64 = -(0..n).map(|j| s.lambda_matrix(j, a) * f.pi1(f.tangent(j))[k]).sum::<f64>();
            err = err.max((lhs[k] - rhs).abs());
        }
    }
    err
}

/// Random singular values with `∏(1+λ_i²) = target`, in descending order.
fn lambdas_with_det(rng: &mut StdRng, count: usize, target: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..count).map(|_| rng.gen_range(0.0..1.0f64)).collect();
    let total: f64 = w.iter().sum::<f64>().max(1e-300);
    let mut ls: Vec<f64> = w.iter().map(|wi| ((wi / total * target.ln()).exp() - 1.0).max(0.0).sqrt()).collect();
    ls.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    ls
}

/// `quadratic_term − δ|A|² ≥ −1e-12` for random `(λ, h)` with
/// `∏(1+λ_i²) = 2 − δ`.
pub fn quadratic_bound_suite(samples_per_case: usize, seed: u64, deltas: &[f64]) -> SuiteResult {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let mut failures = 0;
    for &(n, m) in &SHAPES {
        for &delta in deltas {
            for _ in 0..samples_per_case {
                let ls = lambdas_with_det(&mut rng, n.min(m), 2.0 - delta);
                let mut d = MapDifferential::zeros(m, n);
                for (i, &l) in ls.iter().enumerate() {
                    d.set(i, i, l);
                }
                let svd = singular_decompose(&d);
                let mut h = [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM];
                for row in h.iter_mut().take(m) {
                    for i in 0..n {
                        for j in i..n {
                            let v = rng.gen_range(-1.0..1.0);
                            row[i][j] = v;
                            row[j][i] = v;
                        }
                    }
                }
                let sff = SecondFundamentalForm::from_components(n, m, |a, i, j| h[a][i][j]);
                let q = quadratic_term(&svd, &sff).expect("matching shapes");
                let margin = q - delta * sff.norm_sq();
                worst = worst.min(margin);
                if !(margin >= -1e-12) {
                    failures += 1;
                }
            }
        }
    }
    SuiteResult {
        name: "quadratic_term_bound".into(),
        samples: samples_per_case * deltas.len() * SHAPES.len(),
        failures,
        worst,
    }
}

/// Curvature-term sign for `λ_j² < 1` and `(k₁, k₂)` in
/// `{(1,1), (1,0), (1,−1), (0,0)}`: nonnegative always, strictly positive
/// when `k₁ + k₂ > 0`, `n ≥ 2` and `max λ > 1e-3`.
///
/// For `n = 1` the bracket reduces to `k₂ (1 − n) = 0`, so the term vanishes
/// identically and strict positivity is not expected.
pub fn curvature_sign_suite(samples: usize, seed: u64, curvature: CurvatureFn) -> SuiteResult {
    let mut rng = StdRng::seed_from_u64(seed);
    let pairs = [(1.0, 1.0), (1.0, 0.0), (1.0, -1.0), (0.0, 0.0)];
    let mut worst = f64::INFINITY;
    let mut failures = 0;
    let mut count = 0;
    for &(k1, k2) in &pairs {
        for n in 1..=3 {
            for _ in 0..samples {
                count += 1;
                let ls: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
                let spec = ManifoldSpec { n, m: n, k1, k2, chart: crate::geometry::ChartKind::RoundSphere };
                let v = curvature(&ls, &spec);
                let max_l = ls.iter().copied().fold(0.0, f64::max);
                let strict = k1 + k2 > 0.0 && n >= 2 && max_l > 1e-3;
                let ok = if strict { v > 1e-15 } else { v >= -1e-12 };
                worst = worst.min(v);
                if !ok {
                    failures += 1;
                }
            }
        }
    }
    SuiteResult { name: "curvature_term_sign".into(), samples: count, failures, worst }
}

/// `Q(x) > ½|x|²` for random `|Λ|² ≤ ε` and unit `x`.
pub fn q_form_suite(samples_per_shape: usize, seed: u64, eps: f64) -> SuiteResult {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let mut failures = 0;
    for &(n, m) in &SHAPES {
        for _ in 0..samples_per_shape {
            let mut lam: Vec<f64> = (0..n * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm: f64 = lam.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            let scale = (eps * rng.gen_range(0.0..=1.0f64)).sqrt() / norm;
            lam.iter_mut().for_each(|v| *v *= scale);
            let mut x: Vec<f64> = (0..n * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let xn: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            x.iter_mut().for_each(|v| *v /= xn);
            let q = quadratic_form_q(n, m, &lam, &x);
            worst = worst.min(q);
            if !(q > 0.5) {
                failures += 1;
            }
        }
    }
    SuiteResult { name: "q_form_small_lambda".into(), samples: samples_per_shape * SHAPES.len(), failures, worst }
}

/// Consistency of `star_omega` and `graph_condition` with the determinant of
/// `I + DᵀD` and the energy bound, on random matrices.
pub fn star_omega_suite(samples_per_shape: usize, seed: u64) -> SuiteResult {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for &(n, m) in &SHAPES {
        for _ in 0..samples_per_shape {
            let data: Vec<f64> = (0..n * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let d = MapDifferential::from_row_major(m, n, &data).expect("finite sample");
            let s = singular_decompose(&d);
            let geom = crate::geometry::fast_point(&crate::geometry::MapJet::new(d));
            let err = (star_omega(s.lambdas()) - geom.star_omega).abs();
            let energy: f64 = s.lambdas().iter().map(|l| l * l).sum();
            let err = err.max((energy - d.frobenius_sq()).abs());
            let cond = graph_condition(s.lambdas());
            worst = worst.max(err);
            if !(err < 1e-12) || !cond.energy_bound_holds(s.lambdas()) {
                failures += 1;
            }
        }
    }
    SuiteResult { name: "star_omega_consistency".into(), samples: samples_per_shape * SHAPES.len(), failures, worst }
}

/// One line of a verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub level: String,
    pub value: f64,
    pub threshold: String,
    pub passed: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn push(&mut self, name: &str, level: impl Into<String>, value: f64, threshold: impl Into<String>, passed: bool) {
        self.checks.push(Check { name: name.into(), level: level.into(), value, threshold: threshold.into(), passed });
    }

    pub fn push_suite(&mut self, s: &SuiteResult, threshold: &str) {
        self.push(&s.name, format!("samples={} failures={}", s.samples, s.failures), s.worst, threshold, s.passed());
    }

    /// Adds the raw residual per level and the order per level pair.
    pub fn push_study(&mut self, s: &RefinementStudy, min_order: f64) {
        for (l, r) in s.levels.iter().zip(&s.residuals) {
            self.push(&format!("{}_residual", s.name), format!("N={l}"), *r, "recorded", r.is_finite());
        }
        for ((pair, o), r) in s.levels.windows(2).zip(s.orders()).zip(s.residuals.windows(2)) {
            self.push(
                &format!("{}_order", s.name),
                format!("N={}->{}", pair[0], pair[1]),
                o,
                format!(">= {min_order}"),
                o >= min_order && r[0] / r[1] >= 3.0,
            );
        }
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// One check per line: status, name, level, value, threshold.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "{status} {:<34} {:<28} value={:<14.6e} threshold {}", c.name, c.level, c.value, c.threshold);
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        let _ = writeln!(out, "{} checks, {} failed", self.checks.len(), failed);
        out
    }
}

/// What `verify` runs.
#[derive(Debug, Clone)]
pub struct VerifySettings {
    pub samples: usize,
    pub seed: u64,
    pub levels: Vec<usize>,
    pub profile_levels: Vec<usize>,
    pub q_epsilon: f64,
    pub curvature: CurvatureFn,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            samples: 10_000,
            seed: 1,
            levels: vec![32, 64, 128],
            profile_levels: vec![64, 128, 256],
            q_epsilon: crate::geometry::DEFAULT_Q_EPSILON,
            curvature: curvature_term,
        }
    }
}

/// Property suites followed by the refinement studies.
pub fn run_suite(settings: &VerifySettings) -> Result<VerificationReport> {
    let mut report = VerificationReport::default();
    let seed = settings.seed;
    report.push_suite(&svd_roundtrip_suite(settings.samples, seed), "< 1e-12");
    report.push_suite(&star_omega_suite(settings.samples / 10 + 1, seed + 1), "< 1e-12");
    report.push_suite(&quadratic_bound_suite(settings.samples, seed + 2, &[0.1, 0.5, 0.9]), ">= -1e-12");
    report.push_suite(&curvature_sign_suite(settings.samples, seed + 3, settings.curvature), ">= -1e-12, > 0 if strict");
    report.push_suite(&q_form_suite(settings.samples, seed + 4, settings.q_epsilon), "> 0.5");

    let affine = GridMap::from_function(ManifoldSpec::flat_torus(2, 2)?, &[16, 16], &[1, 0, 1, 1], |x, out| {
        out[0] = x[0] + x[1] + 0.25;
        out[1] = x[1] - 0.5;
    })?;
    let r = gradient_identity_residual(&affine)?;
    report.push("gradient_identity_affine", "N=16", r, "< 1e-12", r < 1e-12);
    let a0 = FlowState::new(affine, Exec::Sequential)?;
    let dt = cfl_dt(&a0.map, 0.5);
    let a1 = step(&a0, dt, Exec::Sequential)?;
    let r = evolution_identity_residual(&a0.map, &a1.map, dt, settings.curvature)?;
    report.push("evolution_identity_affine", "N=16", r, "< 1e-12", r < 1e-12);

    let small = GridMap::from_function(ManifoldSpec::flat_torus(2, 2)?, &[128, 128], &[0; 4], |x, out| {
        let (u, v) = (2.0 * PI * x[0], 2.0 * PI * x[1]);
        out[0] = 0.01 * (u + 0.4).sin() * v.cos();
        out[1] = 0.008 * (v - 0.2).sin() + 0.004 * (u + v).cos();
    })?;
    let r = gradient_identity_residual(&small)?;
    report.push("gradient_identity_small_map", "N=128", r, "< 1e-3", r < 1e-3);
    let h = 1.0 / 128.0;
    let m = gradient_inequality_check(&small, 0.01)?;
    let slack = -SLACK_CONSTANT * h * h;
    report.push("gradient_inequality_margin", "N=128 eps2=0.01", m, format!(">= {slack:.3e}"), m >= slack);
    let pre = gradient_inequality_check(&small, 1e-8);
    report.push(
        "gradient_inequality_precondition",
        "eps2=1e-8",
        0.0,
        "precondition error",
        matches!(pre, Err(Error::Precondition(_))),
    );

    report.push_study(&gradient_identity_study(&settings.levels)?, MIN_ORDER);
    report.push_study(&evolution_identity_study(&settings.levels, settings.curvature)?, MIN_ORDER);
    report.push_study(&profile_evolution_identity_study(&settings.profile_levels, settings.curvature)?, MIN_ORDER);
    Ok(report)
}

/// The curvature evaluator with its sign flipped, for negative controls.
pub fn negated_curvature_term(lambdas: &[f64], spec: &ManifoldSpec) -> f64 {
    -curvature_term(lambdas, spec)
}
