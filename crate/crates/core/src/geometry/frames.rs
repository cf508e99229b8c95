use super::{AmbientVec, SingularValueData, AMBIENT_CAP, MAX_DIM};

/// Orthonormal tangent and normal frames of the graph of `D` adapted to its
/// singular value decomposition.
///
/// `tangent[i] = (a_i + λ_i a_{n+i}) / √(1+λ_i²)`,
/// `normal[α] = (a_{n+α} − λ_α a_α) / √(1+λ_α²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphFrames {
    n: usize,
    m: usize,
    tangent: [AmbientVec; MAX_DIM],
    normal: [AmbientVec; MAX_DIM],
    pi1_tangent_norms: [f64; MAX_DIM],
}

impl GraphFrames {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn tangent(&self, i: usize) -> &[f64] {
        &self.tangent[i][..self.n + self.m]
    }

    pub fn normal(&self, alpha: usize) -> &[f64] {
        &self.normal[alpha][..self.n + self.m]
    }

    /// `|π₁(e_i)|`.
    pub fn pi1_tangent_norms(&self) -> &[f64] {
        &self.pi1_tangent_norms[..self.n]
    }

    /// Projection of a product vector onto the base factor.
    pub fn pi1<'a>(&self, v: &'a [f64]) -> &'a [f64] {
        &v[..self.n]
    }

    /// Projection of a product vector onto the target factor.
    pub fn pi2<'a>(&self, v: &'a [f64]) -> &'a [f64] {
        &v[self.n..self.n + self.m]
    }
}

pub fn build_frames(svd: &SingularValueData) -> GraphFrames {
    let (n, m) = (svd.n(), svd.m());
    let mut tangent = [[0.0; AMBIENT_CAP]; MAX_DIM];
    let mut normal = [[0.0; AMBIENT_CAP]; MAX_DIM];
    let mut norms = [0.0; MAX_DIM];
    for i in 0..n {
        let l = svd.lambda(i);
        let scale = 1.0 / (1.0 + l * l).sqrt();
        let a = svd.base_vector(i);
        for k in 0..n {
            tangent[i][k] = a[k] * scale;
        }
        if i < m {
            let b = svd.target_vector(i);
            for k in 0..m {
                tangent[i][n + k] = l * b[k] * scale;
            }
        }
        norms[i] = scale;
    }
    for alpha in 0..m {
        let l = if alpha < n { svd.lambda(alpha) } else { 0.0 };
        let scale = 1.0 / (1.0 + l * l).sqrt();
        let b = svd.target_vector(alpha);
        for k in 0..m {
            normal[alpha][n + k] = b[k] * scale;
        }
        if alpha < n {
            let a = svd.base_vector(alpha);
            for k in 0..n {
                normal[alpha][k] = -l * a[k] * scale;
            }
        }
    }
    GraphFrames { n, m, tangent, normal, pi1_tangent_norms: norms }
}
