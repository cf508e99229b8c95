//! One-sided Jacobi SVD of a map differential.
//!
//! Columns of `D` are rotated in a fixed cyclic order until pairwise
//! orthogonal; the accumulated rotation gives the base frame `a_i` and the
//! normalized columns give the target frame `a_α`.

use super::{MapDifferential, MAX_DIM};

const MAX_SWEEPS: usize = 60;
const ORTHO_TOL: f64 = 1e-15;
const TIE_TOL: f64 = 1e-12;

/// Singular values with adapted orthonormal bases: `⟨D a_i, a_α⟩ = δ_{iα} λ_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularValueData {
    n: usize,
    m: usize,
    lambdas: [f64; MAX_DIM],
    base: [[f64; MAX_DIM]; MAX_DIM],
    target: [[f64; MAX_DIM]; MAX_DIM],
}

impl SingularValueData {
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn rank_bound(&self) -> usize {
        self.n.min(self.m)
    }

    /// The `min(n, m)` singular values in descending order.
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas[..self.rank_bound()]
    }

    /// `λ_i` for every base index `i < n`, zero beyond `min(n, m)`.
    #[inline]
    pub fn lambda(&self, i: usize) -> f64 {
        if i < self.rank_bound() {
            self.lambdas[i]
        } else {
            0.0
        }
    }

    /// All `n` values `λ_1..λ_n` with the zero padding applied.
    pub fn padded_lambdas(&self) -> [f64; MAX_DIM] {
        let mut out = [0.0; MAX_DIM];
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            *o = self.lambda(i);
        }
        out
    }

    /// `λ_{iα}` in the diagonalized convention.
    #[inline]
    pub fn lambda_matrix(&self, i: usize, alpha: usize) -> f64 {
        if i == alpha {
            self.lambda(i)
        } else {
            0.0
        }
    }

    /// Base frame vector `a_i` (length `n`).
    pub fn base_vector(&self, i: usize) -> &[f64] {
        &self.base[i][..self.n]
    }

    /// Target frame vector `a_α` (length `m`).
    pub fn target_vector(&self, alpha: usize) -> &[f64] {
        &self.target[alpha][..self.m]
    }

    /// `Σ_i λ_i a_α(i) a_iᵀ`.
    pub fn reconstruct(&self) -> MapDifferential {
        let mut d = MapDifferential::zeros(self.m, self.n);
        for k in 0..self.rank_bound() {
            let l = self.lambdas[k];
            for a in 0..self.m {
                for i in 0..self.n {
                    let v = d.get(a, i) + l * self.target[k][a] * self.base[k][i];
                    d.set(a, i, v);
                }
            }
        }
        d
    }
}

pub fn singular_decompose(d: &MapDifferential) -> SingularValueData {
    let (m, n) = (d.rows(), d.cols());
    let raw = d.raw();

    // cols[i] = D e_i, v[i] = column i of the accumulated rotation.
    let mut cols = [[0.0; MAX_DIM]; MAX_DIM];
    let mut v = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..n {
        for a in 0..m {
            cols[i][a] = raw[a][i];
        }
        v[i][i] = 1.0;
    }

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = norm_sq(&cols[p][..m]);
                let beta = norm_sq(&cols[q][..m]);
                let gamma: f64 = (0..m).map(|a| cols[p][a] * cols[q][a]).sum();
                if gamma == 0.0 || gamma.abs() <= ORTHO_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for a in 0..m {
                    let (x, y) = (cols[p][a], cols[q][a]);
                    cols[p][a] = c * x - s * y;
                    cols[q][a] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (v[p][k], v[q][k]);
                    v[p][k] = c * x - s * y;
                    v[q][k] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let sigma: Vec<f64> = (0..n).map(|i| norm_sq(&cols[i][..m]).sqrt()).collect();

    // Normalize the sign of each base vector before ordering so the tie key
    // is well defined.
    for i in 0..n {
        if leading_sign(&v[i][..n]) < 0.0 {
            for k in 0..n {
                v[i][k] = -v[i][k];
            }
            for a in 0..m {
                cols[i][a] = -cols[i][a];
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| sigma[y].partial_cmp(&sigma[x]).unwrap_or(std::cmp::Ordering::Equal));
    // Within runs of tied singular values order by the position of the
    // largest-magnitude component, then lexicographically.
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (sigma[order[end - 1]] - sigma[order[end]]).abs() <= TIE_TOL {
            end += 1;
        }
        order[start..end].sort_by(|&x, &y| tie_key_cmp(&v[x][..n], &v[y][..n]));
        start = end;
    }

    let r = n.min(m);
    let mut out = SingularValueData {
        n,
        m,
        lambdas: [0.0; MAX_DIM],
        base: [[0.0; MAX_DIM]; MAX_DIM],
        target: [[0.0; MAX_DIM]; MAX_DIM],
    };
    let sigma_max = order.first().map(|&k| sigma[k]).unwrap_or(0.0);
    let mut filled = 0;
    for (slot, &k) in order.iter().enumerate() {
        out.base[slot][..n].copy_from_slice(&v[k][..n]);
        if slot >= r {
            continue;
        }
        out.lambdas[slot] = sigma[k];
        // Numerically zero singular values get their target vectors from the
        // basis completion below.
        if filled < slot || !(sigma[k] > f64::MIN_POSITIVE && sigma[k] > 1e-13 * sigma_max) {
            continue;
        }
        let mut u = [0.0; MAX_DIM];
        u[..m].copy_from_slice(&cols[k][..m]);
        for prev in 0..filled {
            let p: f64 = (0..m).map(|a| u[a] * out.target[prev][a]).sum();
            for a in 0..m {
                u[a] -= p * out.target[prev][a];
            }
        }
        let nu = norm_sq(&u[..m]).sqrt();
        if nu > 0.0 {
            for x in u[..m].iter_mut() {
                *x /= nu;
            }
            out.target[filled] = u;
            filled += 1;
        }
    }
    complete_basis(&mut out.target, filled, m);
    for alpha in filled..m {
        if leading_sign(&out.target[alpha][..m]) < 0.0 {
            for a in 0..m {
                out.target[alpha][a] = -out.target[alpha][a];
            }
        }
    }
    out
}

#[inline]
fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn argmax_abs(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if v.abs() > x[best].abs() + TIE_TOL {
            best = i;
        }
    }
    best
}

fn leading_sign(x: &[f64]) -> f64 {
    if x.is_empty() {
        1.0
    } else if x[argmax_abs(x)] < 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn tie_key_cmp(x: &[f64], y: &[f64]) -> std::cmp::Ordering {
    argmax_abs(x).cmp(&argmax_abs(y)).then_with(|| {
        for (a, b) in x.iter().zip(y) {
            match b.partial_cmp(a) {
                Some(std::cmp::Ordering::Equal) | None => continue,
                Some(o) => return o,
            }
        }
        std::cmp::Ordering::Equal
    })
}

/// Extends the first `filled` orthonormal vectors to a basis of `R^m` using
/// the standard basis vector with the largest residual at each stage.
fn complete_basis(frame: &mut [[f64; MAX_DIM]; MAX_DIM], mut filled: usize, m: usize) {
    while filled < m {
        let mut best = [0.0; MAX_DIM];
        let mut best_norm = -1.0;
        for e in 0..m {
            let mut u = [0.0; MAX_DIM];
            u[e] = 1.0;
            for _ in 0..2 {
                for prev in 0..filled {
                    let p: f64 = (0..m).map(|a| u[a] * frame[prev][a]).sum();
                    for a in 0..m {
                        u[a] -= p * frame[prev][a];
                    }
                }
            }
            let nu = norm_sq(&u[..m]);
            if nu > best_norm + 1e-12 {
                best_norm = nu;
                best = u;
            }
        }
        let nb = best_norm.sqrt();
        for x in best[..m].iter_mut() {
            *x /= nb;
        }
        frame[filled] = best;
        filled += 1;
    }
}
