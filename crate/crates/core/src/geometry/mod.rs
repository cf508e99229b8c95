//! Pointwise differential geometry of a graph `{(x, f(x))}` inside a product
//! `Σ₁ × Σ₂` of constant-curvature manifolds.
//!
//! Every routine here receives the differential `df` and the covariant
//! Hessian `∇df` already expressed in orthonormal frames of the base and
//! target metrics. Chart metric factors are the flow modules' business.
//! Vectors of the product tangent space are stored base components first,
//! then target components.

mod frames;
mod point;
mod svd;
mod terms;

pub use frames::{build_frames, GraphFrames};
pub use point::{
    fast_point, normal_metric, second_fundamental_form, try_fast_point, FastGeometry,
    PointGeometry, SecondFundamentalForm,
};
pub use svd::{singular_decompose, SingularValueData};
pub use terms::{
    curvature_term, curvature_term_same, graph_condition, quadratic_form_q, quadratic_term,
    star_omega, GraphCondition, DEFAULT_Q_EPSILON,
};

use crate::error::{Error, Result};

/// Largest base or target dimension handled by the fixed-capacity kernels.
pub const MAX_DIM: usize = 4;

/// Capacity of a product tangent vector.
pub const AMBIENT_CAP: usize = 2 * MAX_DIM;

pub type AmbientVec = [f64; AMBIENT_CAP];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChartKind {
    FlatTorus,
    RoundSphere,
}

impl ChartKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ChartKind::FlatTorus => "flat_torus",
            ChartKind::RoundSphere => "round_sphere",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "flat_torus" => Some(ChartKind::FlatTorus),
            "round_sphere" => Some(ChartKind::RoundSphere),
            _ => None,
        }
    }
}

/// Dimensions and sectional curvatures of the base `Σ₁` and target `Σ₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldSpec {
    pub n: usize,
    pub m: usize,
    pub k1: f64,
    pub k2: f64,
    pub chart: ChartKind,
}

impl ManifoldSpec {
    pub fn new(n: usize, m: usize, k1: f64, k2: f64, chart: ChartKind) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::Config(format!("dimensions must be positive, got n={n}, m={m}")));
        }
        if n > MAX_DIM || m > MAX_DIM {
            return Err(Error::Config(format!(
                "dimensions above {MAX_DIM} are not supported, got n={n}, m={m}"
            )));
        }
        if !k1.is_finite() || !k2.is_finite() {
            return Err(Error::Config("curvatures must be finite".into()));
        }
        match chart {
            ChartKind::FlatTorus if k1 != 0.0 || k2 != 0.0 => {
                return Err(Error::Config("flat torus requires k1 = k2 = 0".into()))
            }
            ChartKind::RoundSphere if k1 <= 0.0 => {
                return Err(Error::Config("round sphere requires k1 > 0".into()))
            }
            _ => {}
        }
        Ok(Self { n, m, k1, k2, chart })
    }

    pub fn flat_torus(n: usize, m: usize) -> Result<Self> {
        Self::new(n, m, 0.0, 0.0, ChartKind::FlatTorus)
    }

    /// Unit spheres on both sides (`k1 = k2 = 1`).
    pub fn round_sphere(n: usize, m: usize) -> Result<Self> {
        Self::new(n, m, 1.0, 1.0, ChartKind::RoundSphere)
    }
}

/// `df` at one point as an `m x n` matrix in orthonormal frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapDifferential {
    m: usize,
    n: usize,
    /// `entries[alpha][i]`.
    entries: [[f64; MAX_DIM]; MAX_DIM],
}

impl MapDifferential {
    pub fn zeros(m: usize, n: usize) -> Self {
        assert!(m >= 1 && n >= 1 && m <= MAX_DIM && n <= MAX_DIM, "shape {m}x{n} out of range");
        Self { m, n, entries: [[0.0; MAX_DIM]; MAX_DIM] }
    }

    /// Builds the matrix from `m*n` row-major entries.
    pub fn from_row_major(m: usize, n: usize, data: &[f64]) -> Result<Self> {
        if m == 0 || n == 0 || m > MAX_DIM || n > MAX_DIM || data.len() != m * n {
            return Err(Error::Dimension(format!(
                "expected {m}x{n} entries within capacity {MAX_DIM}, got {}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("map differential entry {bad}")));
        }
        let mut d = Self::zeros(m, n);
        for a in 0..m {
            for i in 0..n {
                d.entries[a][i] = data[a * n + i];
            }
        }
        Ok(d)
    }

    pub fn identity(k: usize) -> Self {
        let mut d = Self::zeros(k, k);
        for i in 0..k {
            d.entries[i][i] = 1.0;
        }
        d
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, alpha: usize, i: usize) -> f64 {
        self.entries[alpha][i]
    }

    #[inline]
    pub fn set(&mut self, alpha: usize, i: usize, v: f64) {
        self.entries[alpha][i] = v;
    }

    /// `Σλ_i² = |df|²`.
    pub fn frobenius_sq(&self) -> f64 {
        let mut s = 0.0;
        for a in 0..self.m {
            for i in 0..self.n {
                s += self.entries[a][i] * self.entries[a][i];
            }
        }
        s
    }

    pub(crate) fn raw(&self) -> &[[f64; MAX_DIM]; MAX_DIM] {
        &self.entries
    }
}

/// First and second derivatives of the map at a point: `df` and the
/// covariant Hessian `∇df(e_i, e_j)` (an `m`-vector per index pair).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapJet {
    pub d: MapDifferential,
    /// `hess[i][j][alpha]`, symmetric in `i, j`.
    pub hess: [[[f64; MAX_DIM]; MAX_DIM]; MAX_DIM],
}

impl MapJet {
    pub fn new(d: MapDifferential) -> Self {
        Self { d, hess: [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM] }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.d.cols()
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.d.rows()
    }

    /// Tangent vectors `∂_i F = (e_i, df e_i)` of the graph.
    pub fn tangents(&self) -> [AmbientVec; MAX_DIM] {
        let (n, m) = (self.n(), self.m());
        let mut t = [[0.0; AMBIENT_CAP]; MAX_DIM];
        for i in 0..n {
            t[i][i] = 1.0;
            for a in 0..m {
                t[i][n + a] = self.d.get(a, i);
            }
        }
        t
    }

    /// Ambient second derivatives `∂_ij F = (0, ∇df(e_i, e_j))`.
    pub fn second_derivatives(&self) -> [[AmbientVec; MAX_DIM]; MAX_DIM] {
        let (n, m) = (self.n(), self.m());
        let mut s = [[[0.0; AMBIENT_CAP]; MAX_DIM]; MAX_DIM];
        for i in 0..n {
            for j in 0..n {
                for a in 0..m {
                    s[i][j][n + a] = self.hess[i][j][a];
                }
            }
        }
        s
    }
}
