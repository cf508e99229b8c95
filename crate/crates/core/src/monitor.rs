//! Gaussian density of the evolving graph against the backward heat kernel,
//! parabolic rescaling, and the density threshold for regular points.
//!
//! Densities are midpoint quadratures over weighted point clouds in the
//! ambient Euclidean space. Both chart manifolds embed compactly (circles
//! and round spheres), so distances are chordal and no periodic images are
//! summed.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::{ChartKind, ManifoldSpec, MAX_DIM};
use crate::sphere::ProfileState;
use crate::torus::GridMap;

/// Kernel contributions whose exponent is below this are exact zeros.
pub const EXPONENT_CUTOFF: f64 = -80.0;

pub const DEFAULT_EPSILON: f64 = 0.05;

const CHUNK: usize = 4096;

type Evaluator = Box<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

/// Isometric embedding of the product chart `Σ₁ × Σ₂` into `R^N`.
pub struct AmbientEmbedding {
    spec: ManifoldSpec,
    ambient_dim: usize,
    evaluator: Evaluator,
}

impl fmt::Debug for AmbientEmbedding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AmbientEmbedding").field("spec", &self.spec).field("ambient_dim", &self.ambient_dim).finish()
    }
}

impl AmbientEmbedding {
    pub fn new<F>(spec: ManifoldSpec, ambient_dim: usize, evaluator: F) -> Self
    where
        F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self { spec, ambient_dim, evaluator: Box::new(evaluator) }
    }

    /// Each unit-period circle factor onto a circle of radius `1/(2π)`.
    pub fn flat_torus(spec: ManifoldSpec) -> Result<Self> {
        if spec.chart != ChartKind::FlatTorus {
            return Err(Error::Config("flat torus embedding needs a flat torus spec".into()));
        }
        let (n, m) = (spec.n, spec.m);
        Ok(Self::new(spec, 2 * (n + m), move |x, y, out| {
            let r = 1.0 / (2.0 * PI);
            for (k, &c) in x.iter().chain(y).enumerate() {
                let (s, co) = (2.0 * PI * c).sin_cos();
                out[2 * k] = r * co;
                out[2 * k + 1] = r * s;
            }
        }))
    }

    /// Hyperspherical angles of each factor onto the unit spheres in
    /// `R^{n+1} × R^{m+1}`.
    pub fn round_sphere(spec: ManifoldSpec) -> Result<Self> {
        if spec.chart != ChartKind::RoundSphere {
            return Err(Error::Config("round sphere embedding needs a round sphere spec".into()));
        }
        let n = spec.n;
        Ok(Self::new(spec, spec.n + spec.m + 2, move |x, y, out| {
            hyperspherical(x, &mut out[..n + 1]);
            hyperspherical(y, &mut out[n + 1..]);
        }))
    }

    pub fn spec(&self) -> &ManifoldSpec {
        &self.spec
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn embed(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ambient_dim];
        (self.evaluator)(x, y, &mut out);
        out
    }

    /// Graph points of a torus map with weights `√det Λ · cell volume`.
    pub fn torus_cloud(&self, map: &GridMap, t: f64, exec: Exec) -> Result<PointCloud> {
        if map.spec() != &self.spec {
            return Err(Error::Dimension("embedding and map specs differ".into()));
        }
        let field = map.field(exec, t)?;
        let (n, m, dim) = (self.spec.n, self.spec.m, self.ambient_dim);
        let grid = map.grid();
        let mut points = vec![0.0; field.len() * dim];
        exec.for_each_chunk(&mut points, dim, |p, out| {
            let x = grid.coords(p);
            let mut y = [0.0; MAX_DIM];
            for (a, v) in y.iter_mut().enumerate().take(m) {
                *v = map.value(p, a);
            }
            (self.evaluator)(&x[..n], &y[..m], out);
        });
        let vol = grid.cell_volume();
        let areas = field.iter().map(|q| q.geom.det.sqrt() * vol).collect();
        PointCloud::new(n, dim, t, points, areas)
    }

    /// Graph of an equivariant profile, sampled on `θ` times a midpoint
    /// grid on `S^{n−1}` with `angular` cells per polar angle (twice as many
    /// in azimuth).
    pub fn profile_cloud(&self, state: &ProfileState, angular: usize, exec: Exec) -> Result<PointCloud> {
        if state.spec() != self.spec {
            return Err(Error::Dimension("embedding and profile specs differ".into()));
        }
        let n = state.n();
        let field = state.field(exec)?;
        let sphere = sphere_grid(n - 1, angular);
        let dim = self.ambient_dim;
        let count = field.len() * sphere.len();
        let mut points = vec![0.0; count * dim];
        exec.for_each_chunk(&mut points, dim, |k, out| {
            let (j, s) = (k / sphere.len(), k % sphere.len());
            let omega = &sphere.angles[s * (n - 1)..(s + 1) * (n - 1)];
            let mut x = [0.0; MAX_DIM];
            let mut y = [0.0; MAX_DIM];
            x[0] = field[j].theta;
            y[0] = field[j].psi;
            x[1..n].copy_from_slice(omega);
            y[1..n].copy_from_slice(omega);
            (self.evaluator)(&x[..n], &y[..n], out);
        });
        let h = state.dtheta();
        let mut areas = Vec::with_capacity(count);
        for p in &field {
            let base = p.det.sqrt() * p.theta.sin().powi(n as i32 - 1) * h;
            areas.extend(sphere.weights.iter().map(|w| base * w));
        }
        PointCloud::new(n, dim, state.t, points, areas)
    }
}

/// `(cos a₀, sin a₀ cos a₁, …, sin a₀ ⋯ sin a_{k−1})` in `R^{k+1}`.
fn hyperspherical(angles: &[f64], out: &mut [f64]) {
    let mut s = 1.0;
    for (k, &a) in angles.iter().enumerate() {
        out[k] = s * a.cos();
        s *= a.sin();
    }
    out[angles.len()] = s;
}

/// Midpoint product grid on `S^k` in hyperspherical angles.
struct SphereGrid {
    k: usize,
    angles: Vec<f64>,
    weights: Vec<f64>,
}

impl SphereGrid {
    fn len(&self) -> usize {
        self.weights.len()
    }
}

fn sphere_grid(k: usize, angular: usize) -> SphereGrid {
    if k == 0 {
        return SphereGrid { k, angles: Vec::new(), weights: vec![1.0] };
    }
    let polar = PI / angular as f64;
    let azimuth_cells = 2 * angular;
    let azimuth = 2.0 * PI / azimuth_cells as f64;
    let mut counts = vec![angular; k];
    counts[k - 1] = azimuth_cells;
    let total: usize = counts.iter().product();
    let mut angles = Vec::with_capacity(total * k);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; k];
    for _ in 0..total {
        let mut w = 1.0;
        for (l, &i) in idx.iter().enumerate() {
            if l + 1 < k {
                let a = (i as f64 + 0.5) * polar;
                angles.push(a);
                w *= a.sin().powi((k - 1 - l) as i32) * polar;
            } else {
                angles.push((i as f64 + 0.5) * azimuth);
                w *= azimuth;
            }
        }
        weights.push(w);
        for l in (0..k).rev() {
            idx[l] += 1;
            if idx[l] < counts[l] {
                break;
            }
            idx[l] = 0;
        }
    }
    SphereGrid { k, angles, weights }
}

/// Weighted samples of an `n`-dimensional submanifold of `R^N` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    n: usize,
    ambient_dim: usize,
    pub t: f64,
    points: Vec<f64>,
    areas: Vec<f64>,
}

impl PointCloud {
    pub fn new(n: usize, ambient_dim: usize, t: f64, points: Vec<f64>, areas: Vec<f64>) -> Result<Self> {
        if n == 0 || ambient_dim < n {
            return Err(Error::Dimension(format!("cannot sample a {n}-manifold in R^{ambient_dim}")));
        }
        if points.len() != areas.len() * ambient_dim {
            return Err(Error::Dimension(format!(
                "{} coordinates for {} points in R^{ambient_dim}",
                points.len(),
                areas.len()
            )));
        }
        if let Some(k) = points.iter().chain(&areas).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("point cloud entry {k}")));
        }
        if !t.is_finite() {
            return Err(Error::NonFinite("point cloud time".into()));
        }
        Ok(Self { n, ambient_dim, t, points, areas })
    }

    /// Round `n`-sphere of the given radius about `center`, on a midpoint
    /// grid with `resolution` cells per polar angle.
    pub fn round_sphere(n: usize, center: &[f64], radius: f64, t: f64, resolution: usize) -> Result<Self> {
        if center.len() < n + 1 {
            return Err(Error::Dimension(format!("an {n}-sphere needs an ambient space of dimension ≥ {}", n + 1)));
        }
        let grid = sphere_grid(n, resolution);
        let dim = center.len();
        let mut points = Vec::with_capacity(grid.len() * dim);
        let mut unit = vec![0.0; n + 1];
        for s in 0..grid.len() {
            hyperspherical(&grid.angles[s * grid.k..(s + 1) * grid.k], &mut unit);
            points.extend(center.iter().enumerate().map(|(i, c)| c + radius * unit.get(i).copied().unwrap_or(0.0)));
        }
        let areas = grid.weights.iter().map(|w| w * radius.powi(n as i32)).collect();
        Self::new(n, dim, t, points, areas)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn len(&self) -> usize {
        self.areas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.areas.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.ambient_dim..(k + 1) * self.ambient_dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Applies `y ↦ R y + b` to every point.
    pub fn rigid_motion(&self, rotation: &[f64], shift: &[f64]) -> Result<Self> {
        let d = self.ambient_dim;
        if rotation.len() != d * d || shift.len() != d {
            return Err(Error::Dimension(format!("rigid motion of R^{d} needs a {d}x{d} matrix and a shift")));
        }
        let mut points = Vec::with_capacity(self.points.len());
        for k in 0..self.len() {
            let y = self.point(k);
            for i in 0..d {
                points.push(shift[i] + (0..d).map(|j| rotation[i * d + j] * y[j]).sum::<f64>());
            }
        }
        Self::new(self.n, d, self.t, points, self.areas.clone())
    }
}

/// Density samples `(t, ∫ρ_{y₀,t₀} dμ_t)` for one spacetime point.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProbe {
    pub y0: Vec<f64>,
    pub t0: f64,
    values: Vec<(f64, f64)>,
}

impl DensityProbe {
    pub fn new(y0: Vec<f64>, t0: f64) -> Result<Self> {
        if !t0.is_finite() || y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("probe center".into()));
        }
        Ok(Self { y0, t0, values: Vec::new() })
    }

    pub fn values(&self) -> &[(f64, f64)] {
        &self.values
    }

    /// Appends a sample; times must increase strictly and stay below `t0`.
    pub fn record(&mut self, t: f64, density: f64) -> Result<()> {
        if !(t < self.t0) {
            return Err(Error::Domain(format!("sample time {t} is not before t0 = {}", self.t0)));
        }
        if let Some(&(last, _)) = self.values.last() {
            if !(t > last) {
                return Err(Error::Domain(format!("sample time {t} does not follow {last}")));
            }
        }
        if !(density >= 0.0) {
            return Err(Error::Domain(format!("density {density} is negative or NaN")));
        }
        self.values.push((t, density));
        Ok(())
    }
}

/// `(4π(t₀−t))^{−n/2} exp(−|y−y₀|²/(4(t₀−t)))`.
pub fn rho(y: &[f64], t: f64, probe: &DensityProbe, n: usize) -> Result<f64> {
    let tau = probe.t0 - t;
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("t = {t} is not before t0 = {}", probe.t0)));
    }
    if y.len() != probe.y0.len() {
        return Err(Error::Dimension(format!("point in R^{} but probe center in R^{}", y.len(), probe.y0.len())));
    }
    Ok(kernel(y, &probe.y0, tau, n))
}

#[inline]
fn kernel(y: &[f64], y0: &[f64], tau: f64, n: usize) -> f64 {
    let d2: f64 = y.iter().zip(y0).map(|(a, b)| (a - b) * (a - b)).sum();
    let exponent = -d2 / (4.0 * tau);
    if exponent < EXPONENT_CUTOFF {
        return 0.0;
    }
    (4.0 * PI * tau).powf(-(n as f64) / 2.0) * exponent.exp()
}

/// Quadrature of `ρ_{y₀,t₀}(·, cloud.t)` against the cloud weights, without
/// recording it.
pub fn density(cloud: &PointCloud, probe: &DensityProbe, exec: Exec) -> Result<f64> {
    let tau = probe.t0 - cloud.t;
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("t = {} is not before t0 = {}", cloud.t, probe.t0)));
    }
    if cloud.ambient_dim != probe.y0.len() {
        return Err(Error::Dimension(format!(
            "cloud in R^{} but probe center in R^{}",
            cloud.ambient_dim,
            probe.y0.len()
        )));
    }
    let chunks = cloud.len().div_ceil(CHUNK);
    let partial = exec.map_indices(chunks, |c| {
        let range = c * CHUNK..((c + 1) * CHUNK).min(cloud.len());
        range.map(|k| cloud.areas[k] * kernel(cloud.point(k), &probe.y0, tau, cloud.n)).sum::<f64>()
    });
    Ok(partial.iter().sum())
}

/// [`density`] followed by appending `(cloud.t, value)` to the probe.
pub fn gaussian_density(cloud: &PointCloud, probe: &mut DensityProbe, exec: Exec) -> Result<f64> {
    let value = density(cloud, probe, exec)?;
    probe.record(cloud.t, value)?;
    Ok(value)
}

/// `y ↦ λ(y − y₀)`, areas times `λⁿ`, time `λ²(t − t₀)`.
pub fn parabolic_dilate(cloud: &PointCloud, lambda: f64, y0: &[f64], t0: f64) -> Result<PointCloud> {
    if !(lambda >= 1.0) {
        return Err(Error::Domain(format!("dilation factor {lambda} is below 1")));
    }
    if y0.len() != cloud.ambient_dim {
        return Err(Error::Dimension(format!("center in R^{} but cloud in R^{}", y0.len(), cloud.ambient_dim)));
    }
    let d = cloud.ambient_dim;
    let points = cloud.points.iter().enumerate().map(|(k, v)| lambda * (v - y0[k % d])).collect();
    let scale = lambda.powi(cloud.n as i32);
    let areas = cloud.areas.iter().map(|a| a * scale).collect();
    PointCloud::new(cloud.n, d, lambda * lambda * (cloud.t - t0), points, areas)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flag {
    Regular,
    Suspicious,
}

impl Flag {
    pub fn as_str(self) -> &'static str {
        match self {
            Flag::Regular => "regular",
            Flag::Suspicious => "suspicious",
        }
    }
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Limit of the density as `t → t₀` from the last three samples.
///
/// Two levels of Richardson elimination in `τ = t₀ − t`, which is Neville
/// extrapolation of the quadratic through the three points to `τ = 0`.
pub fn extrapolated_limit(probe: &DensityProbe) -> Result<f64> {
    let v = probe.values();
    if v.len() < 3 {
        return Err(Error::InsufficientSamples(format!("{} density samples, need at least 3", v.len())));
    }
    let last = &v[v.len() - 3..];
    let tau: Vec<f64> = last.iter().map(|(t, _)| probe.t0 - t).collect();
    let mut p: Vec<f64> = last.iter().map(|(_, d)| *d).collect();
    for level in 1..3 {
        for i in 0..3 - level {
            let (a, b) = (tau[i], tau[i + level]);
            p[i] = (a * p[i + 1] - b * p[i]) / (a - b);
        }
    }
    Ok(p[0])
}

/// Regular when the extrapolated limit is at most `1 + ε`.
///
/// The probe must hold at least three samples whose `t₀ − t` spans a
/// factor of ten.
pub fn white_flag(probe: &DensityProbe, epsilon: f64) -> Result<(Flag, f64)> {
    let v = probe.values();
    if v.len() < 3 {
        return Err(Error::InsufficientSamples(format!("{} density samples, need at least 3", v.len())));
    }
    let largest = probe.t0 - v[0].0;
    let smallest = probe.t0 - v[v.len() - 1].0;
    if largest < 10.0 * smallest * (1.0 - 1e-9) {
        return Err(Error::InsufficientSamples(format!(
            "t0 - t spans [{smallest:e}, {largest:e}], less than a decade"
        )));
    }
    let limit = extrapolated_limit(probe)?;
    let flag = if limit <= 1.0 + epsilon { Flag::Regular } else { Flag::Suspicious };
    Ok((flag, limit))
}

/// Writes `t,t0_minus_t,density,extrapolated_limit,flag`, one row per
/// sample. The limit and flag use the samples up to that row and are left
/// empty while fewer than three are available.
pub fn write_probe_log<W: Write>(out: &mut W, probe: &DensityProbe, epsilon: f64) -> Result<()> {
    writeln!(out, "t,t0_minus_t,density,extrapolated_limit,flag")?;
    let mut prefix = DensityProbe { y0: probe.y0.clone(), t0: probe.t0, values: Vec::new() };
    for &(t, d) in probe.values() {
        prefix.values.push((t, d));
        if prefix.values.len() >= 3 {
            let limit = extrapolated_limit(&prefix)?;
            let flag = if limit <= 1.0 + epsilon { Flag::Regular } else { Flag::Suspicious };
            writeln!(out, "{t},{},{d},{limit},{flag}", probe.t0 - t)?;
        } else {
            writeln!(out, "{t},{},{d},,", probe.t0 - t)?;
        }
    }
    Ok(())
}

/// `|Sⁿ|`.
pub fn sphere_volume(n: usize) -> f64 {
    crate::sphere::sphere_area(n)
}

/// Density of a round `n`-sphere shrinking to its center at `t₀`,
/// `(n/(2πe))^{n/2} |Sⁿ|`, independent of `t`.
pub fn shrinking_sphere_density(n: usize) -> f64 {
    let n_f = n as f64;
    (n_f / (2.0 * PI * std::f64::consts::E)).powf(n_f / 2.0) * sphere_volume(n)
}
