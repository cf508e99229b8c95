use super::{
    build_frames, singular_decompose, star_omega, AmbientVec, GraphFrames, MapDifferential,
    MapJet, SingularValueData, AMBIENT_CAP, MAX_DIM,
};
use crate::error::{Error, Result};
use crate::linalg::{dot, spd_inverse_det, Square};

/// Second fundamental form components `h_{αij} = ⟨B(e_i, e_j), e_α⟩` in an
/// adapted frame, with the invariant norms computed by the projector route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondFundamentalForm {
    n: usize,
    m: usize,
    /// `h[alpha][i][j]`.
    h: [[[f64; MAX_DIM]; MAX_DIM]; MAX_DIM],
    /// `|A|² = Λ^{ik}Λ^{jl}⟨B_ij, B_kl⟩`.
    pub a2: f64,
    /// `|H|² = |Λ^{ij} B_ij|²`.
    pub h2: f64,
}

impl SecondFundamentalForm {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self { n, m, h: [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM], a2: 0.0, h2: 0.0 }
    }

    /// Frame components from a closure; `a2`/`h2` are set from the frame sums.
    pub fn from_components(n: usize, m: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut s = Self::zeros(n, m);
        for a in 0..m {
            for i in 0..n {
                for j in 0..n {
                    s.h[a][i][j] = f(a, i, j);
                }
            }
        }
        s.a2 = s.norm_sq();
        s.h2 = (0..m)
            .map(|a| {
                let tr: f64 = (0..n).map(|i| s.h[a][i][i]).sum();
                tr * tr
            })
            .sum();
        s
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn h(&self, alpha: usize, i: usize, j: usize) -> f64 {
        self.h[alpha][i][j]
    }

    /// `Σ_{α,i,j} h_{αij}²`.
    pub fn norm_sq(&self) -> f64 {
        let mut s = 0.0;
        for a in 0..self.m {
            for i in 0..self.n {
                for j in 0..self.n {
                    s += self.h[a][i][j] * self.h[a][i][j];
                }
            }
        }
        s
    }
}

/// Second fundamental form from ambient first and second derivatives of the
/// immersion, in a chart where the product metric is Euclidean at the point.
///
/// `B_ij = P ∂_ij F` with `P = Id − ∂_iF Λ^{ij} (∂_jF)ᵀ`.
pub fn second_fundamental_form(
    tangents: &[AmbientVec],
    second_derivs: &[[AmbientVec; MAX_DIM]],
    inverse_metric: &[[f64; MAX_DIM]; MAX_DIM],
    frames: &GraphFrames,
) -> Result<SecondFundamentalForm> {
    let (n, m) = (frames.n(), frames.m());
    let dim = n + m;
    if tangents.len() != n || second_derivs.len() != n {
        return Err(Error::Dimension(format!(
            "expected {n} tangents and {n} rows of second derivatives, got {} and {}",
            tangents.len(),
            second_derivs.len()
        )));
    }

    let project = |v: &AmbientVec| -> AmbientVec {
        let mut coeff = [0.0; MAX_DIM];
        for (l, c) in coeff.iter_mut().enumerate().take(n) {
            *c = dot(&tangents[l][..dim], &v[..dim]);
        }
        let mut out = *v;
        for k in 0..n {
            let mut s = 0.0;
            for l in 0..n {
                s += inverse_metric[k][l] * coeff[l];
            }
            for c in 0..dim {
                out[c] -= s * tangents[k][c];
            }
        }
        out
    };

    let mut b = [[[0.0; AMBIENT_CAP]; MAX_DIM]; MAX_DIM];
    for i in 0..n {
        for j in 0..n {
            b[i][j] = project(&second_derivs[i][j]);
        }
    }

    let mut a2 = 0.0;
    let mut mean = [0.0; AMBIENT_CAP];
    for i in 0..n {
        for j in 0..n {
            for c in 0..dim {
                mean[c] += inverse_metric[i][j] * b[i][j][c];
            }
            for k in 0..n {
                for l in 0..n {
                    let w = inverse_metric[i][k] * inverse_metric[j][l];
                    if w != 0.0 {
                        a2 += w * dot(&b[i][j][..dim], &b[k][l][..dim]);
                    }
                }
            }
        }
    }
    let h2 = dot(&mean[..dim], &mean[..dim]);

    // Coordinates of e_i in the basis ∂_kF.
    let mut coords = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..n {
        let e = frames.tangent(i);
        for k in 0..n {
            let mut s = 0.0;
            for l in 0..n {
                s += inverse_metric[k][l] * dot(&tangents[l][..dim], e);
            }
            coords[i][k] = s;
        }
    }
    let mut out = SecondFundamentalForm::zeros(n, m);
    out.a2 = a2;
    out.h2 = h2;
    for i in 0..n {
        for j in i..n {
            let mut bij = [0.0; AMBIENT_CAP];
            for k in 0..n {
                for l in 0..n {
                    let w = coords[i][k] * coords[j][l];
                    if w != 0.0 {
                        for c in 0..dim {
                            bij[c] += w * b[k][l][c];
                        }
                    }
                }
            }
            for a in 0..m {
                let v = dot(&bij[..dim], frames.normal(a));
                out.h[a][i][j] = v;
                out.h[a][j][i] = v;
            }
        }
    }
    Ok(out)
}

/// Full pointwise geometry of the graph at one point.
#[derive(Debug, Clone, Copy)]
pub struct PointGeometry {
    pub induced_metric: [[f64; MAX_DIM]; MAX_DIM],
    pub inverse_metric: [[f64; MAX_DIM]; MAX_DIM],
    pub sff: SecondFundamentalForm,
    pub a2: f64,
    pub h2: f64,
    pub star_omega: f64,
    pub det_value: f64,
    pub svd: SingularValueData,
    pub frames: GraphFrames,
}

impl PointGeometry {
    pub fn from_jet(jet: &MapJet) -> Self {
        let n = jet.n();
        let lambda = induced_metric(&jet.d);
        // Λ ≥ I for a graph, so a failed factorization means corrupted input.
        let (inverse_metric, det_value) =
            spd_inverse_det(&lambda, n).expect("induced metric of a graph must be positive definite");
        let svd = singular_decompose(&jet.d);
        let frames = build_frames(&svd);
        let tangents = jet.tangents();
        let second = jet.second_derivatives();
        let sff = second_fundamental_form(&tangents[..n], &second[..n], &inverse_metric, &frames)
            .expect("jet dimensions are consistent");
        PointGeometry {
            induced_metric: lambda,
            inverse_metric,
            a2: sff.a2,
            h2: sff.h2,
            sff,
            star_omega: star_omega(svd.lambdas()),
            det_value,
            svd,
            frames,
        }
    }
}

/// `Λ = I + DᵀD`.
pub(crate) fn induced_metric(d: &MapDifferential) -> Square {
    let (m, n) = (d.rows(), d.cols());
    let raw = d.raw();
    let mut g = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..n {
        for j in 0..=i {
            let mut s = if i == j { 1.0 } else { 0.0 };
            for a in 0..m {
                s += raw[a][i] * raw[a][j];
            }
            g[i][j] = s;
            g[j][i] = s;
        }
    }
    g
}

/// Metric induced on the target factor by normal projection:
/// `⟨P(0,v), P(0,w)⟩ = vᵀ (I + D Dᵀ)^{-1} w`.
pub fn normal_metric(d: &MapDifferential) -> [[f64; MAX_DIM]; MAX_DIM] {
    try_normal_metric(d).expect("I + D Dᵀ is positive definite")
}

fn try_normal_metric(d: &MapDifferential) -> Option<Square> {
    let (m, n) = (d.rows(), d.cols());
    let raw = d.raw();
    let mut g = [[0.0; MAX_DIM]; MAX_DIM];
    for a in 0..m {
        for b in 0..=a {
            let mut s = if a == b { 1.0 } else { 0.0 };
            for i in 0..n {
                s += raw[a][i] * raw[b][i];
            }
            g[a][b] = s;
            g[b][a] = s;
        }
    }
    Some(spd_inverse_det(&g, m)?.0)
}

/// The scalar diagnostics needed at every grid point and every step, without
/// forming frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastGeometry {
    pub det: f64,
    pub star_omega: f64,
    /// `|df|² = Σλ_i²`.
    pub energy: f64,
    pub inv_metric: [[f64; MAX_DIM]; MAX_DIM],
    pub a2: f64,
    pub h2: f64,
    /// `Λ^{ij} ∇df(e_i, e_j)`, the graph-flow velocity.
    pub velocity: [f64; MAX_DIM],
}

pub fn fast_point(jet: &MapJet) -> FastGeometry {
    try_fast_point(jet).expect("induced metric of a graph must be positive definite")
}

/// `fast_point` that returns `None` instead of panicking when overflow has
/// destroyed positive definiteness.
pub fn try_fast_point(jet: &MapJet) -> Option<FastGeometry> {
    let (n, m) = (jet.n(), jet.m());
    let lambda = induced_metric(&jet.d);
    let (inv, det) = spd_inverse_det(&lambda, n)?;
    let g = try_normal_metric(&jet.d)?;
    let t = &jet.hess;

    let mut velocity = [0.0; MAX_DIM];
    for i in 0..n {
        for j in 0..n {
            let w = inv[i][j];
            for a in 0..m {
                velocity[a] += w * t[i][j][a];
            }
        }
    }
    let gdot = |x: &[f64; MAX_DIM], y: &[f64; MAX_DIM]| {
        let mut s = 0.0;
        for a in 0..m {
            for b in 0..m {
                s += g[a][b] * x[a] * y[b];
            }
        }
        s
    };
    let mut a2 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut z = [0.0; MAX_DIM];
            for k in 0..n {
                for l in 0..n {
                    let w = inv[i][k] * inv[j][l];
                    for a in 0..m {
                        z[a] += w * t[k][l][a];
                    }
                }
            }
            a2 += gdot(&t[i][j], &z);
        }
    }
    Some(FastGeometry {
        det,
        star_omega: 1.0 / det.sqrt(),
        energy: jet.d.frobenius_sq(),
        inv_metric: inv,
        a2,
        h2: gdot(&velocity, &velocity),
        velocity,
    })
}
