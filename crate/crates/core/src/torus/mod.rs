//! Nonparametric graph flow `∂_t f = Λ^{ij} ∂_ij f` for maps between flat
//! tori, discretized on a periodic grid over the unit cube `[0,1)^n`.
//!
//! The state stores a lift of `f` to the universal cover together with its
//! integer linear part `L`: `f(x + e_i) = f(x) + L_i`. Stencils that cross
//! the periodic boundary add or subtract the corresponding row of `L`.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::{ChartKind, FastGeometry, ManifoldSpec, MapDifferential, MapJet, MAX_DIM};

mod kernel;

/// Smallest admissible number of grid points per axis.
pub const MIN_POINTS_PER_AXIS: usize = 8;

const PERIODICITY_TOL: f64 = 1e-9;

/// Index arithmetic for a periodic tensor-product grid, last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    shape: Vec<usize>,
    strides: Vec<usize>,
    spacing: Vec<f64>,
    len: usize,
}

impl Grid {
    pub fn new(shape: &[usize]) -> Result<Self> {
        if shape.is_empty() || shape.len() > MAX_DIM {
            return Err(Error::Config(format!(
                "grid must have between 1 and {MAX_DIM} axes, got {}",
                shape.len()
            )));
        }
        if let Some(&bad) = shape.iter().find(|&&s| s < MIN_POINTS_PER_AXIS) {
            return Err(Error::Config(format!(
                "grid resolution {bad} is below the minimum of {MIN_POINTS_PER_AXIS}"
            )));
        }
        let mut strides = vec![1; shape.len()];
        for i in (0..shape.len() - 1).rev() {
            strides[i] = strides[i + 1] * shape[i + 1];
        }
        Ok(Self {
            shape: shape.to_vec(),
            len: shape.iter().product(),
            spacing: shape.iter().map(|&s| 1.0 / s as f64).collect(),
            strides,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.shape.len()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn spacing(&self, axis: usize) -> f64 {
        self.spacing[axis]
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn multi_index(&self, p: usize) -> [usize; MAX_DIM] {
        let mut idx = [0; MAX_DIM];
        let mut rest = p;
        for i in 0..self.n() {
            idx[i] = rest / self.strides[i];
            rest %= self.strides[i];
        }
        idx
    }

    pub fn coords(&self, p: usize) -> [f64; MAX_DIM] {
        let idx = self.multi_index(p);
        let mut x = [0.0; MAX_DIM];
        for i in 0..self.n() {
            x[i] = idx[i] as f64 * self.spacing[i];
        }
        x
    }

    /// Neighbor of the point with multi-index `idx` one step along `axis` in
    /// direction `dir` (±1), with the number of periods crossed.
    #[inline]
    fn neighbor(&self, p: usize, idx: &[usize; MAX_DIM], axis: usize, dir: i32) -> (usize, i32) {
        let k = idx[axis];
        let s = self.strides[axis];
        if dir > 0 {
            if k + 1 == self.shape[axis] {
                (p - k * s, 1)
            } else {
                (p + s, 0)
            }
        } else if k == 0 {
            (p + (self.shape[axis] - 1) * s, -1)
        } else {
            (p - s, 0)
        }
    }

    /// Central-difference gradient of a periodic scalar field.
    pub fn gradient(&self, u: &[f64], p: usize) -> [f64; MAX_DIM] {
        let idx = self.multi_index(p);
        let mut g = [0.0; MAX_DIM];
        for i in 0..self.n() {
            let (qp, _) = self.neighbor(p, &idx, i, 1);
            let (qm, _) = self.neighbor(p, &idx, i, -1);
            g[i] = (u[qp] - u[qm]) / (2.0 * self.spacing[i]);
        }
        g
    }

    /// Divergence-form operator `(1/w) ∂_i (w a^{ij} ∂_j u)` of a periodic
    /// field, with `w a^{ij}` averaged arithmetically to half-grid points and
    /// cross derivatives at a half point taken as the mean of the central
    /// differences at its two ends. `coef(p)` returns `a^{ij}` at `p`.
    pub fn divergence_form<F>(&self, u: &[f64], weight: &[f64], coef: F) -> Vec<f64>
    where
        F: Fn(usize) -> [[f64; MAX_DIM]; MAX_DIM],
    {
        self.divergence_form_with_gradient(u, weight, coef).0
    }

    /// [`Grid::divergence_form`] together with the central gradients of `u`.
    pub(crate) fn divergence_form_with_gradient<F>(
        &self,
        u: &[f64],
        weight: &[f64],
        coef: F,
    ) -> (Vec<f64>, Vec<[f64; MAX_DIM]>)
    where
        F: Fn(usize) -> [[f64; MAX_DIM]; MAX_DIM],
    {
        let n = self.n();
        let grads: Vec<[f64; MAX_DIM]> = (0..self.len).map(|p| self.gradient(u, p)).collect();
        let wc: Vec<[[f64; MAX_DIM]; MAX_DIM]> = (0..self.len)
            .map(|p| {
                let mut a = coef(p);
                for row in a.iter_mut().take(n) {
                    for v in row.iter_mut().take(n) {
                        *v *= weight[p];
                    }
                }
                a
            })
            .collect();
        // faces[p * n + i]: flux through the face between p and its +1
        // neighbor along axis i.
        let mut faces = vec![0.0; self.len * n];
        let mut minus = vec![[0usize; MAX_DIM]; self.len];
        for p in 0..self.len {
            let idx = self.multi_index(p);
            for i in 0..n {
                let q = self.neighbor(p, &idx, i, 1).0;
                minus[p][i] = self.neighbor(p, &idx, i, -1).0;
                let mut f = 0.0;
                for j in 0..n {
                    let c = 0.5 * (wc[p][i][j] + wc[q][i][j]);
                    let dj = if j == i {
                        (u[q] - u[p]) / self.spacing[i]
                    } else {
                        0.5 * (grads[p][j] + grads[q][j])
                    };
                    f += c * dj;
                }
                faces[p * n + i] = f;
            }
        }
        let div = (0..self.len)
            .map(|p| {
                let mut total = 0.0;
                for i in 0..n {
                    total += (faces[p * n + i] - faces[minus[p][i] * n + i]) / self.spacing[i];
                }
                total / weight[p]
            })
            .collect();
        (div, grads)
    }
}

/// Lift of a map `T^n → T^m` sampled on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    spec: ManifoldSpec,
    grid: Grid,
    /// `values[p * m + alpha]`.
    values: Vec<f64>,
    /// `winding[i * m + alpha]`, the linear part `L`.
    winding: Vec<i64>,
}

impl GridMap {
    /// Samples `f` on the grid. `f(x, out)` writes the `m` components of the
    /// lift at `x`; `winding` is `L` in row-major `n x m` order.
    pub fn from_function<F>(spec: ManifoldSpec, shape: &[usize], winding: &[i64], f: F) -> Result<Self>
    where
        F: Fn(&[f64], &mut [f64]),
    {
        let grid = Self::check_shape(&spec, shape, winding)?;
        let (n, m) = (spec.n, spec.m);
        let mut values = vec![0.0; grid.len() * m];
        let mut shifted = vec![0.0; m];
        for p in 0..grid.len() {
            let x = grid.coords(p);
            f(&x[..n], &mut values[p * m..(p + 1) * m]);
            for i in 0..n {
                let mut y = x;
                y[i] += 1.0;
                f(&y[..n], &mut shifted);
                for a in 0..m {
                    let residual = shifted[a] - values[p * m + a] - winding[i * m + a] as f64;
                    if !(residual.abs() <= PERIODICITY_TOL) {
                        return Err(Error::Config(format!(
                            "initial map is not periodic modulo its winding: residual {residual:e} \
                             at grid index {:?}, axis {i}, component {a}",
                            &grid.multi_index(p)[..n]
                        )));
                    }
                }
            }
        }
        Self::from_parts(spec, shape, winding, values)
    }

    pub fn constant(spec: ManifoldSpec, shape: &[usize], value: &[f64]) -> Result<Self> {
        if value.len() != spec.m {
            return Err(Error::Dimension(format!("constant has {} components, m = {}", value.len(), spec.m)));
        }
        let winding = vec![0; spec.n * spec.m];
        Self::from_function(spec, shape, &winding, |_, out| out.copy_from_slice(value))
    }

    /// Assembles a map from raw storage, checking shapes and finiteness.
    pub fn from_parts(spec: ManifoldSpec, shape: &[usize], winding: &[i64], values: Vec<f64>) -> Result<Self> {
        let grid = Self::check_shape(&spec, shape, winding)?;
        if values.len() != grid.len() * spec.m {
            return Err(Error::Dimension(format!(
                "expected {} values, got {}",
                grid.len() * spec.m,
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "initial value at grid index {:?}",
                &grid.multi_index(k / spec.m)[..spec.n]
            )));
        }
        Ok(Self { spec, grid, values, winding: winding.to_vec() })
    }

    fn check_shape(spec: &ManifoldSpec, shape: &[usize], winding: &[i64]) -> Result<Grid> {
        if spec.chart != ChartKind::FlatTorus {
            return Err(Error::Config("grid maps live on the flat torus chart".into()));
        }
        if shape.len() != spec.n {
            return Err(Error::Dimension(format!("shape has {} axes, n = {}", shape.len(), spec.n)));
        }
        if winding.len() != spec.n * spec.m {
            return Err(Error::Dimension(format!(
                "winding has {} entries, expected n*m = {}",
                winding.len(),
                spec.n * spec.m
            )));
        }
        Grid::new(shape)
    }

    pub fn spec(&self) -> &ManifoldSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn shape(&self) -> &[usize] {
        self.grid.shape()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn winding(&self) -> &[i64] {
        &self.winding
    }

    #[inline]
    pub fn value(&self, p: usize, alpha: usize) -> f64 {
        self.values[p * self.spec.m + alpha]
    }

    /// Value of the lift at a grid neighbor reached by the given `(axis, dir)`
    /// moves, including the winding offsets.
    #[inline]
    fn shifted(&self, p: usize, idx: &[usize; MAX_DIM], moves: &[(usize, i32)], out: &mut [f64; MAX_DIM]) {
        let m = self.spec.m;
        let mut q = p;
        let mut qidx = *idx;
        let mut wraps = [0i32; MAX_DIM];
        for &(axis, dir) in moves {
            let (next, wrap) = self.grid.neighbor(q, &qidx, axis, dir);
            q = next;
            qidx[axis] = (qidx[axis] as i64 + dir as i64).rem_euclid(self.grid.shape[axis] as i64) as usize;
            wraps[axis] += wrap;
        }
        for a in 0..m {
            let mut v = self.values[q * m + a];
            for (axis, &w) in wraps.iter().enumerate().take(self.spec.n) {
                if w != 0 {
                    v += w as f64 * self.winding[axis * m + a] as f64;
                }
            }
            out[a] = v;
        }
    }

    /// First and second derivatives at grid point `p` by second-order
    /// central differences.
    pub fn jet(&self, p: usize) -> MapJet {
        let (n, m) = (self.spec.n, self.spec.m);
        let idx = self.grid.multi_index(p);
        let mut d = MapDifferential::zeros(m, n);
        let mut hess = [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM];
        let (mut fp, mut fm) = ([0.0; MAX_DIM], [0.0; MAX_DIM]);
        for i in 0..n {
            let h = self.grid.spacing[i];
            self.shifted(p, &idx, &[(i, 1)], &mut fp);
            self.shifted(p, &idx, &[(i, -1)], &mut fm);
            for a in 0..m {
                let f0 = self.values[p * m + a];
                d.set(a, i, (fp[a] - fm[a]) / (2.0 * h));
                hess[i][i][a] = (fp[a] - 2.0 * f0 + fm[a]) / (h * h);
            }
        }
        let (mut fpp, mut fpm, mut fmp, mut fmm) = ([0.0; MAX_DIM], [0.0; MAX_DIM], [0.0; MAX_DIM], [0.0; MAX_DIM]);
        for i in 0..n {
            for j in (i + 1)..n {
                self.shifted(p, &idx, &[(i, 1), (j, 1)], &mut fpp);
                self.shifted(p, &idx, &[(i, 1), (j, -1)], &mut fpm);
                self.shifted(p, &idx, &[(i, -1), (j, 1)], &mut fmp);
                self.shifted(p, &idx, &[(i, -1), (j, -1)], &mut fmm);
                let scale = 4.0 * self.grid.spacing[i] * self.grid.spacing[j];
                for a in 0..m {
                    let v = (fpp[a] - fpm[a] - fmp[a] + fmm[a]) / scale;
                    hess[i][j][a] = v;
                    hess[j][i][a] = v;
                }
            }
        }
        MapJet { d, hess }
    }

    /// Pointwise geometry at every grid point.
    pub fn field(&self, exec: Exec, t: f64) -> Result<Vec<FieldPoint>> {
        let pts = exec.map_indices(self.grid.len(), |p| kernel::field_point(self, p));
        let mut out = Vec::with_capacity(pts.len());
        for (p, pt) in pts.into_iter().enumerate() {
            match pt {
                Some(pt) => out.push(pt),
                None => {
                    return Err(Error::Blowup {
                        index: self.grid.multi_index(p)[..self.spec.n].to_vec(),
                        t,
                        reason: "induced metric lost positive definiteness or overflowed".into(),
                    })
                }
            }
        }
        Ok(out)
    }

    /// Replaces the stored values; `values.len()` must match.
    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// Pointwise data shared by the update, the diagnostics and the verifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldPoint {
    pub geom: FastGeometry,
    pub d: MapDifferential,
}

/// Grid-wide extrema and integrals of one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// Step that produced this state (0 for initial data).
    pub dt: f64,
    pub min_star_omega: f64,
    pub max_star_omega: f64,
    pub max_det: f64,
    pub max_energy_density: f64,
    pub max_a2: f64,
    pub max_h2: f64,
    pub total_volume: f64,
    pub max_velocity: f64,
}

impl DiagnosticsRecord {
    pub const COLUMNS: [&'static str; 10] = [
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
    ];

    pub fn values(&self) -> [f64; 10] {
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
        ]
    }

    /// Sequential left-to-right reduction over the field.
    pub fn from_field(field: &[FieldPoint], m: usize, cell_volume: f64, t: f64, dt: f64) -> Self {
        let mut r = DiagnosticsRecord {
            t,
            dt,
            min_star_omega: f64::INFINITY,
            max_star_omega: f64::NEG_INFINITY,
            max_det: f64::NEG_INFINITY,
            max_energy_density: 0.0,
            max_a2: 0.0,
            max_h2: 0.0,
            total_volume: 0.0,
            max_velocity: 0.0,
        };
        for pt in field {
            let g = &pt.geom;
            r.min_star_omega = r.min_star_omega.min(g.star_omega);
            r.max_star_omega = r.max_star_omega.max(g.star_omega);
            r.max_det = r.max_det.max(g.det);
            r.max_energy_density = r.max_energy_density.max(g.energy);
            r.max_a2 = r.max_a2.max(g.a2);
            r.max_h2 = r.max_h2.max(g.h2);
            r.total_volume += g.det.sqrt();
            let v: f64 = g.velocity[..m].iter().map(|x| x * x).sum();
            r.max_velocity = r.max_velocity.max(v.sqrt());
        }
        r.total_volume *= cell_volume;
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub map: GridMap,
    pub t: f64,
    pub dt_last: f64,
    pub diagnostics: DiagnosticsRecord,
}

impl FlowState {
    pub fn new(map: GridMap, exec: Exec) -> Result<Self> {
        let field = map.field(exec, 0.0)?;
        Ok(Self::with_field(map, &field, 0.0, 0.0))
    }

    fn with_field(map: GridMap, field: &[FieldPoint], t: f64, dt: f64) -> Self {
        let diagnostics = DiagnosticsRecord::from_field(field, map.spec.m, map.grid.cell_volume(), t, dt);
        Self { map, t, dt_last: dt, diagnostics }
    }
}

/// `σ · min_i Δx_i² / (2n)`.
pub fn cfl_dt(map: &GridMap, sigma: f64) -> f64 {
    let h = map.grid.min_spacing();
    sigma * h * h / (2.0 * map.spec.n as f64)
}

/// One forward-Euler step `f ← f + dt Λ^{ij} ∂_ij f`.
pub fn step(state: &FlowState, dt: f64, exec: Exec) -> Result<FlowState> {
    let field = state.map.field(exec, state.t)?;
    advance(state, &field, dt, exec).map(|(s, _)| s)
}

fn advance(state: &FlowState, field: &[FieldPoint], dt: f64, exec: Exec) -> Result<(FlowState, Vec<FieldPoint>)> {
    let limit = cfl_dt(&state.map, 1.0);
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::Config(format!("time step {dt:e} outside (0, {limit:e}]")));
    }
    let m = state.map.spec.m;
    let mut next = state.map.clone();
    let row = state.map.grid.shape[state.map.spec.n - 1];
    exec.for_each_chunk(next.values_mut(), row * m, |k, chunk| {
        for (local, v) in chunk.chunks_mut(m).enumerate() {
            let vel = &field[k * row + local].geom.velocity;
            for a in 0..m {
                v[a] += dt * vel[a];
            }
        }
    });
    let t = state.t + dt;
    if let Some(k) = next.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Blowup {
            index: next.grid.multi_index(k / m)[..next.spec.n].to_vec(),
            t,
            reason: "non-finite value after update".into(),
        });
    }
    let next_field = next.field(exec, t)?;
    Ok((FlowState::with_field(next, &next_field, t, dt), next_field))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub t_end: f64,
    pub sigma: f64,
    /// Spacing of the recorded time series; every step is still observed.
    pub output_every: f64,
    pub exec: Exec,
}

/// One accepted step, handed to the run observer.
pub struct StepEvent<'a> {
    pub prev: &'a FlowState,
    pub prev_field: &'a [FieldPoint],
    pub next: &'a FlowState,
    pub next_field: &'a [FieldPoint],
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: FlowState,
    pub series: Vec<DiagnosticsRecord>,
    pub steps: usize,
}

/// A run that stopped early, with everything produced up to the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub last_state: FlowState,
    pub series: Vec<DiagnosticsRecord>,
}

/// Steps with `dt = cfl_dt(σ)` (clipped at `t_end`) until `t_end`.
pub fn run<O>(state: FlowState, settings: &RunSettings, mut observer: O) -> std::result::Result<RunOutput, Box<RunFailure>>
where
    O: FnMut(&StepEvent<'_>),
{
    let fail = |error, last_state, series| Err(Box::new(RunFailure { error, last_state, series }));
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
    let mut field = match state.map.field(exec, state.t) {
        Ok(f) => f,
        Err(e) => return fail(e, state, vec![]),
    };
    let mut series = vec![state.diagnostics];
    let dt_full = cfl_dt(&state.map, settings.sigma);
    let mut next_output = state.t + settings.output_every;
    let mut current = state;
    let mut steps = 0;
    // Clip only when the remainder is a sliver, so the last step never
    // becomes a rounding artifact.
    while settings.t_end - current.t > 1e-12 * settings.t_end.abs().max(1.0) {
        let dt = dt_full.min(settings.t_end - current.t);
        match advance(&current, &field, dt, exec) {
            Ok((next, next_field)) => {
                observer(&StepEvent { prev: &current, prev_field: &field, next: &next, next_field: &next_field });
                steps += 1;
                current = next;
                field = next_field;
                if current.t >= next_output - 1e-12 * settings.output_every {
                    series.push(current.diagnostics);
                    while next_output <= current.t + 1e-12 * settings.output_every {
                        next_output += settings.output_every;
                    }
                }
            }
            Err(e) => return fail(e, current, series),
        }
    }
    if series.last().map(|r| r.t) != Some(current.t) {
        series.push(current.diagnostics);
    }
    Ok(RunOutput { state: current, series, steps })
}
