//! Reference computations shared by the integration tests. None of these
//! call into the solver internals; they work from closed forms or from
//! direct finite differences of analytic closures.

#![allow(dead_code)]

use std::f64::consts::PI;

use mcf_core::monitor::PointCloud;

/// Fourth-order central difference with step `h`.
pub fn d1(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

pub fn d2(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h) - f(x - 2.0 * h)) / (12.0 * h * h)
}

/// Diagonal of the round metric in hyperspherical angles,
/// `g_kk = ∏_{l<k} sin² x_l`.
fn sphere_metric(x: &[f64]) -> Vec<f64> {
    let mut g = vec![1.0; x.len()];
    for k in 1..x.len() {
        g[k] = g[k - 1] * x[k - 1].sin().powi(2);
    }
    g
}

/// Christoffel symbols `Γ^k_ij` of a diagonal metric, from finite
/// differences of the metric entries.
fn christoffel(x: &[f64]) -> Vec<Vec<Vec<f64>>> {
    let n = x.len();
    let g = sphere_metric(x);
    let h = 1e-4;
    // dg[l][k] = ∂_l g_kk
    let dg: Vec<Vec<f64>> = (0..n)
        .map(|l| {
            (0..n)
                .map(|k| {
                    let f = |s: f64| {
                        let mut y = x.to_vec();
                        y[l] = s;
                        sphere_metric(&y)[k]
                    };
                    d1(&f, x[l], h)
                })
                .collect()
        })
        .collect();
    let mut gam = vec![vec![vec![0.0; n]; n]; n];
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                if k == j {
                    s += dg[i][k];
                }
                if k == i {
                    s += dg[j][k];
                }
                if i == j {
                    s -= dg[k][i];
                }
                gam[k][i][j] = 0.5 * s / g[k];
            }
        }
    }
    gam
}

fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        inv.swap(c, p);
        let d = m[c][c];
        for j in 0..n {
            m[c][j] /= d;
            inv[c][j] /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                for j in 0..n {
                    m[r][j] -= f * m[c][j];
                    inv[r][j] -= f * inv[c][j];
                }
            }
        }
    }
    inv
}

/// Velocity `G^{ij} (∂_ij f − Γ^k_ij ∂_k f + Γ̃(∂_i f, ∂_j f))` of the graph
/// of `(θ, φ…) ↦ (ψ(θ), φ…)` between round `n`-spheres at the chart point
/// `(θ, π/2, …, π/2)`. Returns all `n` target components.
pub fn equivariant_velocity(n: usize, psi: &dyn Fn(f64) -> f64, theta: f64) -> Vec<f64> {
    let mut x = vec![PI / 2.0; n];
    x[0] = theta;
    let map = |y: &[f64]| -> Vec<f64> {
        let mut out = y.to_vec();
        out[0] = psi(y[0]);
        out
    };
    let h = 1e-3;
    let component = |i: usize, j: usize, a: usize| -> f64 {
        // ∂_i ∂_j f^a by nested fourth-order differences
        let inner = |s: f64| {
            let mut y = x.clone();
            y[i] = s;
            let g = |u: f64| {
                let mut z = y.clone();
                z[j] = u;
                map(&z)[a]
            };
            d1(&g, y[j], h)
        };
        if i == j {
            let g = |u: f64| {
                let mut z = x.clone();
                z[i] = u;
                map(&z)[a]
            };
            d2(&g, x[i], h)
        } else {
            d1(&inner, x[i], h)
        }
    };
    let df: Vec<Vec<f64>> = (0..n)
        .map(|a| {
            (0..n)
                .map(|i| {
                    let g = |u: f64| {
                        let mut z = x.clone();
                        z[i] = u;
                        map(&z)[a]
                    };
                    d1(&g, x[i], h)
                })
                .collect()
        })
        .collect();
    let fx = map(&x);
    let g_base = sphere_metric(&x);
    let g_target = sphere_metric(&fx);
    let gam = christoffel(&x);
    let gam_t = christoffel(&fx);
    let induced: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let mut s = if i == j { g_base[i] } else { 0.0 };
                    for a in 0..n {
                        s += g_target[a] * df[a][i] * df[a][j];
                    }
                    s
                })
                .collect()
        })
        .collect();
    let ginv = invert(&induced);
    (0..n)
        .map(|c| {
            let mut v = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let mut hess = component(i, j, c);
                    for k in 0..n {
                        hess -= gam[k][i][j] * df[c][k];
                    }
                    for a in 0..n {
                        for b in 0..n {
                            hess += gam_t[c][a][b] * df[a][i] * df[b][j];
                        }
                    }
                    v += ginv[i][j] * hess;
                }
            }
            v
        })
        .collect()
}

/// `e^{−x} I₀(x)`: power series below 20, large-argument expansion above
/// (error below 1e-12 on either side).
pub fn scaled_bessel_i0(x: f64) -> f64 {
    if x < 20.0 {
        let q = x * x / 4.0;
        let mut term = (-x).exp();
        let mut sum = term;
        for k in 1..200 {
            term *= q / (k * k) as f64;
            sum += term;
            if term < 1e-18 * sum {
                break;
            }
        }
        return sum;
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..12 {
        let odd = (2 * k - 1) as f64;
        term *= odd * odd / (8.0 * x * k as f64);
        sum += term;
    }
    sum / (2.0 * PI * x).sqrt()
}

/// Gaussian density at a point of a circle of radius `r`, `τ = t₀ − t`:
/// `(4πτ)^{−1/2} 2πr e^{−r²/2τ} I₀(r²/2τ)`.
pub fn circle_density(r: f64, tau: f64) -> f64 {
    let x = r * r / (2.0 * tau);
    (4.0 * PI * tau).powf(-0.5) * 2.0 * PI * r * scaled_bessel_i0(x)
}

/// Midpoint samples of the square `[−w, w]^n` in the first `n` coordinates
/// of `R^dim`, then rotated by `rotation` (row-major) and shifted.
pub fn flat_sheet(n: usize, dim: usize, w: f64, res: usize, t: f64, rotation: &[f64], shift: &[f64]) -> PointCloud {
    let h = 2.0 * w / res as f64;
    let count = res.pow(n as u32);
    let mut points = Vec::with_capacity(count * dim);
    for k in 0..count {
        let mut rest = k;
        let mut y = vec![0.0; dim];
        for c in y.iter_mut().take(n) {
            *c = -w + (rest % res) as f64 * h + h / 2.0;
            rest /= res;
        }
        for i in 0..dim {
            points.push(shift[i] + (0..dim).map(|j| rotation[i * dim + j] * y[j]).sum::<f64>());
        }
    }
    PointCloud::new(n, dim, t, points, vec![h.powi(n as i32); count]).unwrap()
}

pub fn identity(dim: usize) -> Vec<f64> {
    (0..dim * dim).map(|k| if k / dim == k % dim { 1.0 } else { 0.0 }).collect()
}

/// Rotation by `angle` in the `(i, j)` coordinate plane.
pub fn plane_rotation(dim: usize, i: usize, j: usize, angle: f64) -> Vec<f64> {
    let mut r = identity(dim);
    let (s, c) = angle.sin_cos();
    r[i * dim + i] = c;
    r[j * dim + j] = c;
    r[i * dim + j] = -s;
    r[j * dim + i] = s;
    r
}

pub fn compose(dim: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            out[i * dim + j] = (0..dim).map(|k| a[i * dim + k] * b[k * dim + j]).sum();
        }
    }
    out
}

/// `|Sⁿ| = 2π^{(n+1)/2} / Γ((n+1)/2)` via the recursion `|Sⁿ| = 2π/(n−1) |S^{n−2}|`.
pub fn sphere_area(n: usize) -> f64 {
    match n {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (n as f64 - 1.0) * sphere_area(n - 2),
    }
}
