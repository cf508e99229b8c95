//! Rotationally equivariant graph flow of maps `S^n → S^n`,
//! `f(θ, ω) = (ψ(θ), ω)`, reduced to a parabolic equation for the profile:
//!
//! `ψ_t = ψ''/(1+ψ'²) + (n−1) κ/(1+μ²)`, `κ = cot θ ψ' − sin ψ cos ψ / sin²θ`,
//! `μ = sin ψ / sin θ`.
//!
//! Nodes sit at cell centers `θ_j = (j+½)π/N`, so the poles are never
//! evaluated. Ghost values come from odd reflection of `ψ` about `θ = 0`
//! and about `(π, B)`, where `B` is the boundary value at the south pole.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::{ManifoldSpec, MapDifferential, MapJet};

pub const MIN_PROFILE_POINTS: usize = 8;

/// Gradient size at which a profile run is declared blown up.
pub const DEFAULT_BLOWUP_LAMBDA: f64 = 1e3;

/// Default `σ` in `dt = σ Δθ²/2`. The linearization about `ψ = 0` is
/// explicitly stable up to `σ ≈ 0.66` for `n = 2` and `σ ≈ 0.48` for `n = 3`;
/// the pole rows set the limit.
pub const DEFAULT_PROFILE_SIGMA: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    /// `ψ(0) = ψ(π) = 0`.
    NullHomotopic,
    /// `ψ(0) = 0`, `ψ(π) = π`.
    DegreeOne,
}

impl BoundaryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryKind::NullHomotopic => "null_homotopic",
            BoundaryKind::DegreeOne => "degree_one",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "null_homotopic" => Some(BoundaryKind::NullHomotopic),
            "degree_one" => Some(BoundaryKind::DegreeOne),
            _ => None,
        }
    }

    /// `ψ(π)`.
    pub fn south_value(self) -> f64 {
        match self {
            BoundaryKind::NullHomotopic => 0.0,
            BoundaryKind::DegreeOne => PI,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileState {
    n: usize,
    psi: Vec<f64>,
    boundary: BoundaryKind,
    pub t: f64,
}

impl ProfileState {
    pub fn new(n: usize, psi: Vec<f64>, boundary: BoundaryKind, t: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("equivariant profiles need n >= 2, got {n}")));
        }
        ManifoldSpec::round_sphere(n, n)?;
        if psi.len() < MIN_PROFILE_POINTS {
            return Err(Error::Config(format!(
                "profile needs at least {MIN_PROFILE_POINTS} points, got {}",
                psi.len()
            )));
        }
        if let Some(j) = psi.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("profile value at θ index {j}")));
        }
        Ok(Self { n, psi, boundary, t })
    }

    /// Samples `ψ₀` at the cell centers.
    pub fn from_function(n: usize, points: usize, boundary: BoundaryKind, f: impl Fn(f64) -> f64) -> Result<Self> {
        let h = PI / points as f64;
        let psi = (0..points).map(|j| f((j as f64 + 0.5) * h)).collect();
        Self::new(n, psi, boundary, 0.0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    pub fn boundary(&self) -> BoundaryKind {
        self.boundary
    }

    pub fn spec(&self) -> ManifoldSpec {
        ManifoldSpec::round_sphere(self.n, self.n).expect("validated at construction")
    }

    pub fn dtheta(&self) -> f64 {
        PI / self.psi.len() as f64
    }

    pub fn theta(&self, j: isize) -> f64 {
        (j as f64 + 0.5) * self.dtheta()
    }

    /// `ψ` at node `j`, extended by reflection for `j < 0` and `j ≥ N`.
    pub fn ext(&self, j: isize) -> f64 {
        let len = self.psi.len() as isize;
        if j < 0 {
            -self.psi[(-1 - j) as usize]
        } else if j >= len {
            2.0 * self.boundary.south_value() - self.psi[(2 * len - 1 - j) as usize]
        } else {
            self.psi[j as usize]
        }
    }

    /// Value at the poles implied by the reflection, `((ψ_{-1}+ψ_0)/2, (ψ_{N-1}+ψ_N)/2)`.
    pub fn pole_values(&self) -> (f64, f64) {
        let len = self.psi.len() as isize;
        (0.5 * (self.ext(-1) + self.ext(0)), 0.5 * (self.ext(len - 1) + self.ext(len)))
    }

    fn mu(&self, j: isize) -> f64 {
        self.ext(j).sin() / self.theta(j).sin()
    }

    /// Local quantities at node `j`.
    pub fn point(&self, j: usize) -> ProfilePoint {
        let n1 = (self.n - 1) as f64;
        let h = self.dtheta();
        let j = j as isize;
        let (pm2, pm1, p0, pp1, pp2) = (self.ext(j - 2), self.ext(j - 1), self.ext(j), self.ext(j + 1), self.ext(j + 2));
        let theta = self.theta(j);
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = p0.sin_cos();
        let dpsi = (pp1 - pm1) / (2.0 * h);
        // Fourth order here keeps cot θ · ψ' accurate at the nodes next to the
        // poles, where cot θ ~ 1/Δθ.
        let dpsi4 = (-pp2 + 8.0 * pp1 - 8.0 * pm1 + pm2) / (12.0 * h);
        let d2psi = (pp1 - 2.0 * p0 + pm1) / (h * h);
        let mu = sp / st;
        let dmu = (self.mu(j + 1) - self.mu(j - 1)) / (2.0 * h);
        let kappa = ct / st * dpsi4 - sp * cp / (st * st);
        let a1 = 1.0 + dpsi * dpsi;
        let a2 = 1.0 + mu * mu;
        let rhs = d2psi / a1 + n1 * kappa / a2;

        let det = a1 * a2.powi(self.n as i32 - 1);
        let sff_sq = d2psi * d2psi / (a1 * a1 * a1) + n1 * kappa * kappa / (a2 * a2 * a1) + 2.0 * n1 * dmu * dmu / (a1 * a2 * a2);
        ProfilePoint {
            theta,
            psi: p0,
            dpsi,
            dpsi4,
            d2psi,
            mu,
            dmu,
            kappa,
            rhs,
            det,
            star_omega: 1.0 / det.sqrt(),
            energy: dpsi * dpsi + n1 * mu * mu,
            a2: sff_sq,
            h2: rhs * rhs / a1,
            lambda_max: dpsi.abs().max(mu.abs()),
        }
    }

    /// Pointwise data at every node; non-finite data is a blow-up.
    pub fn field(&self, exec: Exec) -> Result<Vec<ProfilePoint>> {
        let pts = exec.map_indices(self.len(), |j| self.point(j));
        if let Some(j) = pts.iter().position(|p| !(p.rhs.is_finite() && p.a2.is_finite())) {
            return Err(Error::Blowup { index: vec![j], t: self.t, reason: "non-finite profile data".into() });
        }
        Ok(pts)
    }

    /// Orthonormal-frame jet of the full map at node `j`: base frame
    /// `(∂_θ, e_a/sin θ)`, target frame `(∂_ψ, e_a/sin ψ)`, with the radial
    /// tangent direction of the sphere `S^{n-1}` taken along the second axis.
    pub fn jet(&self, j: usize) -> MapJet {
        let p = self.point(j);
        let n = self.n;
        let mut d = MapDifferential::zeros(n, n);
        d.set(0, 0, p.dpsi);
        for a in 1..n {
            d.set(a, a, p.mu);
        }
        let mut jet = MapJet::new(d);
        jet.hess[0][0][0] = p.d2psi;
        for a in 1..n {
            jet.hess[a][a][0] = p.kappa;
            jet.hess[0][a][a] = p.dmu;
            jet.hess[a][0][a] = p.dmu;
        }
        jet
    }

    /// `Δu = (1/(a b^{n-1})) ∂_θ((b^{n-1}/a) ∂_θ u)` for the induced metric
    /// `a² dθ² + b² g_{S^{n-1}}`, `a = √(1+ψ'²)`, `b² = sin²θ + sin²ψ`, in
    /// finite-volume form. Face weights use `ψ` interpolated to the face and
    /// cell volumes use Simpson's rule; both vanish at the poles, where
    /// `b = 0`. Arithmetic averaging of node weights would be O(1) wrong at
    /// the first node for `n ≥ 3`.
    pub fn laplace_beltrami(&self, u: &[f64]) -> Vec<f64> {
        let len = self.len();
        let h = self.dtheta();
        let k = self.n as i32 - 1;
        // Face f sits at θ = f Δθ, between nodes f-1 and f.
        let face = |f: isize| {
            let psi = 0.5 * (self.ext(f - 1) + self.ext(f));
            let dpsi = (self.ext(f) - self.ext(f - 1)) / h;
            let theta = f as f64 * h;
            let a = (1.0 + dpsi * dpsi).sqrt();
            let b = (theta.sin().powi(2) + psi.sin().powi(2)).sqrt().powi(k);
            (a * b, b / a)
        };
        let faces: Vec<(f64, f64)> = (0..=len as isize).map(face).collect();
        (0..len)
            .map(|j| {
                let p = self.point(j);
                let node = (1.0 + p.dpsi * p.dpsi).sqrt() * (p.theta.sin().powi(2) + p.psi.sin().powi(2)).sqrt().powi(k);
                let volume = h / 6.0 * (faces[j].0 + 4.0 * node + faces[j + 1].0);
                let flux = |f: usize| {
                    if f == 0 || f == len {
                        0.0
                    } else {
                        faces[f].1 * (u[f] - u[f - 1]) / h
                    }
                };
                (flux(j + 1) - flux(j)) / volume
            })
            .collect()
    }

    /// Graph volume `|S^{n-1}| Σ a b^{n-1} Δθ`.
    pub fn volume(&self, field: &[ProfilePoint]) -> f64 {
        let k = self.n as i32 - 1;
        let total: f64 = field
            .iter()
            .map(|p| (1.0 + p.dpsi * p.dpsi).sqrt() * (p.theta.sin().powi(2) + p.psi.sin().powi(2)).sqrt().powi(k))
            .sum();
        total * self.dtheta() * sphere_area(self.n - 1)
    }
}

/// Area of the unit sphere `S^k`.
pub fn sphere_area(k: usize) -> f64 {
    match k {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (k as f64 - 1.0) * sphere_area(k - 2),
    }
}

/// Local quantities of the reduced flow at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub theta: f64,
    pub psi: f64,
    /// Second-order `ψ'`, used for `λ₁`.
    pub dpsi: f64,
    /// Fourth-order `ψ'`, used in the `cot θ ψ'` term.
    pub dpsi4: f64,
    pub d2psi: f64,
    /// `λ₂ = … = λ_n` up to sign.
    pub mu: f64,
    pub dmu: f64,
    pub kappa: f64,
    /// `ψ_t`.
    pub rhs: f64,
    pub det: f64,
    pub star_omega: f64,
    pub energy: f64,
    pub a2: f64,
    pub h2: f64,
    pub lambda_max: f64,
}

pub fn reduced_rhs(state: &ProfileState) -> Result<Vec<f64>> {
    Ok(state.field(Exec::Sequential)?.iter().map(|p| p.rhs).collect())
}

/// `σ Δθ² / 2`.
pub fn profile_dt(state: &ProfileState, sigma: f64) -> f64 {
    let h = state.dtheta();
    sigma * h * h / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileDiagnostics {
    pub t: f64,
    pub dt: f64,
    pub min_star_omega: f64,
    pub max_star_omega: f64,
    pub max_det: f64,
    pub max_energy_density: f64,
    pub max_a2: f64,
    pub max_h2: f64,
    pub total_volume: f64,
    pub max_velocity: f64,
    pub max_lambda: f64,
    pub max_abs_psi: f64,
}

impl ProfileDiagnostics {
    pub const COLUMNS: [&'static str; 12] = [
        "t",
        "dt",
        "min_star_omega",
        "max_star_omega",
        "max_det",
        "max_energy_density",
        "max_A2",
        "max_H2",
        "total_volume",
        "max_velocity",
        "max_lambda",
        "max_abs_psi",
    ];

    pub fn values(&self) -> [f64; 12] {
        [
            self.t,
            self.dt,
            self.min_star_omega,
            self.max_star_omega,
            self.max_det,
            self.max_energy_density,
            self.max_a2,
            self.max_h2,
            self.total_volume,
            self.max_velocity,
            self.max_lambda,
            self.max_abs_psi,
        ]
    }

    pub fn from_field(state: &ProfileState, field: &[ProfilePoint], dt: f64) -> Self {
        let mut r = ProfileDiagnostics {
            t: state.t,
            dt,
            min_star_omega: f64::INFINITY,
            max_star_omega: f64::NEG_INFINITY,
            max_det: f64::NEG_INFINITY,
            max_energy_density: 0.0,
            max_a2: 0.0,
            max_h2: 0.0,
            total_volume: state.volume(field),
            max_velocity: 0.0,
            max_lambda: 0.0,
            max_abs_psi: 0.0,
        };
        for p in field {
            r.min_star_omega = r.min_star_omega.min(p.star_omega);
            r.max_star_omega = r.max_star_omega.max(p.star_omega);
            r.max_det = r.max_det.max(p.det);
            r.max_energy_density = r.max_energy_density.max(p.energy);
            r.max_a2 = r.max_a2.max(p.a2);
            r.max_h2 = r.max_h2.max(p.h2);
            r.max_velocity = r.max_velocity.max(p.rhs.abs());
            r.max_lambda = r.max_lambda.max(p.lambda_max);
            r.max_abs_psi = r.max_abs_psi.max(p.psi.abs());
        }
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSettings {
    pub t_end: f64,
    pub sigma: f64,
    pub output_every: f64,
    pub blowup_lambda: f64,
    pub exec: Exec,
}

pub struct ProfileStepEvent<'a> {
    pub prev: &'a ProfileState,
    pub prev_field: &'a [ProfilePoint],
    pub next: &'a ProfileState,
    pub next_field: &'a [ProfilePoint],
    pub dt: f64,
}

#[derive(Debug, Clone)]
pub struct ProfileOutput {
    pub state: ProfileState,
    pub series: Vec<ProfileDiagnostics>,
    pub steps: usize,
}

#[derive(Debug)]
pub struct ProfileFailure {
    pub error: Error,
    pub last_state: ProfileState,
    pub series: Vec<ProfileDiagnostics>,
}

fn check_gradient(state: &ProfileState, field: &[ProfilePoint], limit: f64) -> Result<()> {
    match field.iter().position(|p| !(p.lambda_max <= limit)) {
        Some(j) => Err(Error::Blowup {
            index: vec![j],
            t: state.t,
            reason: format!("singular value {:e} exceeds {limit:e}", field[j].lambda_max),
        }),
        None => Ok(()),
    }
}

/// Forward Euler with `dt = profile_dt(σ)` until `t_end`.
pub fn run_profile<O>(
    state: ProfileState,
    settings: &ProfileSettings,
    mut observer: O,
) -> std::result::Result<ProfileOutput, Box<ProfileFailure>>
where
    O: FnMut(&ProfileStepEvent<'_>),
{
    let fail = |error, last_state, series| Err(Box::new(ProfileFailure { error, last_state, series }));
    if !(settings.t_end > state.t) {
        return fail(Error::Config(format!("t_end {} must exceed t {}", settings.t_end, state.t)), state, vec![]);
    }
    if !(settings.sigma > 0.0 && settings.sigma <= 1.0) {
        return fail(Error::Config(format!("sigma {} outside (0, 1]", settings.sigma)), state, vec![]);
    }
    if !(settings.output_every > 0.0) {
        return fail(Error::Config("output_every must be positive".into()), state, vec![]);
    }
    let exec = settings.exec;
    let mut field = match state.field(exec).and_then(|f| check_gradient(&state, &f, settings.blowup_lambda).map(|_| f)) {
        Ok(f) => f,
        Err(e) => return fail(e, state, vec![]),
    };
    let mut series = vec![ProfileDiagnostics::from_field(&state, &field, 0.0)];
    let dt_full = profile_dt(&state, settings.sigma);
    let mut next_output = state.t + settings.output_every;
    let mut current = state;
    let mut steps = 0;
    while settings.t_end - current.t > 1e-12 * settings.t_end.abs().max(1.0) {
        let dt = dt_full.min(settings.t_end - current.t);
        let psi = current.psi.iter().zip(&field).map(|(v, p)| v + dt * p.rhs).collect();
        let next = ProfileState { n: current.n, psi, boundary: current.boundary, t: current.t + dt };
        let next_field = match next.field(exec).and_then(|f| check_gradient(&next, &f, settings.blowup_lambda).map(|_| f)) {
            Ok(f) => f,
            Err(e) => return fail(e, current, series),
        };
        observer(&ProfileStepEvent { prev: &current, prev_field: &field, next: &next, next_field: &next_field, dt });
        steps += 1;
        current = next;
        field = next_field;
        if current.t >= next_output - 1e-12 * settings.output_every {
            series.push(ProfileDiagnostics::from_field(&current, &field, dt));
            while next_output <= current.t + 1e-12 * settings.output_every {
                next_output += settings.output_every;
            }
        }
    }
    if series.last().map(|r| r.t) != Some(current.t) {
        series.push(ProfileDiagnostics::from_field(&current, &field, dt_full.min(current.t)));
    }
    Ok(ProfileOutput { state: current, series, steps })
}
