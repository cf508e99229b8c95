//! Fixed-size stencil and geometry kernels, monomorphized per `(n, m)` so
//! the inner loops unroll.

use super::{FieldPoint, GridMap};
use crate::geometry::{FastGeometry, MapDifferential, MAX_DIM};

/// Offsets of the `±1` neighbors along one axis and the periods crossed.
#[derive(Clone, Copy, Default)]
struct AxisStep {
    plus: isize,
    minus: isize,
    wrap_plus: f64,
    wrap_minus: f64,
}

pub(super) fn field_point(map: &GridMap, p: usize) -> Option<FieldPoint> {
    match (map.spec.n, map.spec.m) {
        (1, 1) => point::<1, 1>(map, p),
        (1, 2) => point::<1, 2>(map, p),
        (1, 3) => point::<1, 3>(map, p),
        (1, 4) => point::<1, 4>(map, p),
        (2, 1) => point::<2, 1>(map, p),
        (2, 2) => point::<2, 2>(map, p),
        (2, 3) => point::<2, 3>(map, p),
        (2, 4) => point::<2, 4>(map, p),
        (3, 1) => point::<3, 1>(map, p),
        (3, 2) => point::<3, 2>(map, p),
        (3, 3) => point::<3, 3>(map, p),
        (3, 4) => point::<3, 4>(map, p),
        (4, 1) => point::<4, 1>(map, p),
        (4, 2) => point::<4, 2>(map, p),
        (4, 3) => point::<4, 3>(map, p),
        (4, 4) => point::<4, 4>(map, p),
        (n, m) => unreachable!("dimensions {n}x{m} exceed the kernel table"),
    }
}

#[inline(always)]
fn point<const N: usize, const M: usize>(map: &GridMap, p: usize) -> Option<FieldPoint> {
    let grid = &map.grid;
    let v = &map.values;
    let mut steps = [AxisStep::default(); N];
    let mut rest = p;
    for (i, s) in steps.iter_mut().enumerate() {
        let stride = grid.strides[i];
        let len = grid.shape[i];
        let k = rest / stride;
        rest %= stride;
        let stride = stride as isize;
        *s = if k + 1 == len {
            AxisStep { plus: -(k as isize) * stride, minus: -stride, wrap_plus: 1.0, wrap_minus: 0.0 }
        } else if k == 0 {
            AxisStep { plus: stride, minus: (len as isize - 1) * stride, wrap_plus: 0.0, wrap_minus: -1.0 }
        } else {
            AxisStep { plus: stride, minus: -stride, wrap_plus: 0.0, wrap_minus: 0.0 }
        };
    }
    let at = |offset: isize, a: usize| v[(p as isize + offset) as usize * M + a];

    let mut d = [[0.0; N]; M];
    let mut t = [[[0.0; M]; N]; N];
    for i in 0..N {
        let s = steps[i];
        let h = grid.spacing[i];
        for a in 0..M {
            let l = map.winding[i * M + a] as f64;
            let f0 = v[p * M + a];
            let fp = at(s.plus, a) + s.wrap_plus * l;
            let fm = at(s.minus, a) + s.wrap_minus * l;
            d[a][i] = (fp - fm) / (2.0 * h);
            t[i][i][a] = (fp - 2.0 * f0 + fm) / (h * h);
        }
    }
    // Winding offsets cancel in the four-point cross stencil.
    for i in 0..N {
        for j in (i + 1)..N {
            let (si, sj) = (steps[i], steps[j]);
            let scale = 4.0 * grid.spacing[i] * grid.spacing[j];
            for a in 0..M {
                let x = (at(si.plus + sj.plus, a) - at(si.plus + sj.minus, a) - at(si.minus + sj.plus, a)
                    + at(si.minus + sj.minus, a))
                    / scale;
                t[i][j][a] = x;
                t[j][i][a] = x;
            }
        }
    }
    geometry::<N, M>(&d, &t).map(|geom| {
        let mut md = MapDifferential::zeros(M, N);
        for a in 0..M {
            for i in 0..N {
                md.set(a, i, d[a][i]);
            }
        }
        FieldPoint { geom, d: md }
    })
}

/// Same quantities as `geometry::fast_point`, using `(I + DDᵀ)^{-1} =
/// I − D Λ^{-1} Dᵀ` in place of a second factorization.
#[inline(always)]
fn geometry<const N: usize, const M: usize>(d: &[[f64; N]; M], t: &[[[f64; M]; N]; N]) -> Option<FastGeometry> {
    let mut lam = [[0.0; N]; N];
    let mut energy = 0.0;
    for i in 0..N {
        for j in 0..N {
            let mut s = if i == j { 1.0 } else { 0.0 };
            for a in 0..M {
                s += d[a][i] * d[a][j];
            }
            lam[i][j] = s;
        }
        energy += lam[i][i] - 1.0;
    }
    let (inv, det) = spd_inverse::<N>(&lam)?;
    if !det.is_finite() {
        return None;
    }

    // D Λ^{-1}
    let mut dl = [[0.0; N]; M];
    for a in 0..M {
        for j in 0..N {
            let mut s = 0.0;
            for k in 0..N {
                s += d[a][k] * inv[k][j];
            }
            dl[a][j] = s;
        }
    }
    let mut g = [[0.0; M]; M];
    for a in 0..M {
        for b in 0..M {
            let mut s = if a == b { 1.0 } else { 0.0 };
            for k in 0..N {
                s -= dl[a][k] * d[b][k];
            }
            g[a][b] = s;
        }
    }

    let mut velocity = [0.0; M];
    for i in 0..N {
        for j in 0..N {
            for a in 0..M {
                velocity[a] += inv[i][j] * t[i][j][a];
            }
        }
    }
    // u[i][l] = Σ_k Λ^{ik} T_kl, z[i][j] = Σ_l u[i][l] Λ^{lj}.
    let mut u = [[[0.0; M]; N]; N];
    for i in 0..N {
        for l in 0..N {
            for k in 0..N {
                for a in 0..M {
                    u[i][l][a] += inv[i][k] * t[k][l][a];
                }
            }
        }
    }
    let mut a2 = 0.0;
    for i in 0..N {
        for j in 0..N {
            let mut z = [0.0; M];
            for l in 0..N {
                for a in 0..M {
                    z[a] += u[i][l][a] * inv[l][j];
                }
            }
            a2 += gdot::<M>(&g, &t[i][j], &z);
        }
    }
    let h2 = gdot::<M>(&g, &velocity, &velocity);
    if !(a2.is_finite() && h2.is_finite()) {
        return None;
    }

    let mut out = FastGeometry {
        det,
        star_omega: 1.0 / det.sqrt(),
        energy,
        inv_metric: [[0.0; MAX_DIM]; MAX_DIM],
        a2,
        h2,
        velocity: [0.0; MAX_DIM],
    };
    for i in 0..N {
        out.inv_metric[i][..N].copy_from_slice(&inv[i]);
    }
    out.velocity[..M].copy_from_slice(&velocity);
    Some(out)
}

#[inline(always)]
fn gdot<const M: usize>(g: &[[f64; M]; M], x: &[f64; M], y: &[f64; M]) -> f64 {
    let mut s = 0.0;
    for a in 0..M {
        for b in 0..M {
            s += g[a][b] * x[a] * y[b];
        }
    }
    s
}

#[inline(always)]
fn spd_inverse<const N: usize>(a: &[[f64; N]; N]) -> Option<([[f64; N]; N], f64)> {
    let mut l = [[0.0; N]; N];
    let mut det = 1.0;
    for i in 0..N {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                det *= s;
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut linv = [[0.0; N]; N];
    for c in 0..N {
        for i in c..N {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for k in c..i {
                s -= l[i][k] * linv[k][c];
            }
            linv[i][c] = s / l[i][i];
        }
    }
    let mut inv = [[0.0; N]; N];
    for i in 0..N {
        for j in 0..=i {
            let mut s = 0.0;
            for k in i..N {
                s += linv[k][i] * linv[k][j];
            }
            inv[i][j] = s;
            inv[j][i] = s;
        }
    }
    Some((inv, det))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{fast_point, ManifoldSpec};
    use std::f64::consts::PI;

    #[test]
    fn kernel_matches_generic_path() {
        for n in 1..=3 {
            for m in 1..=3 {
                let spec = ManifoldSpec::flat_torus(n, m).unwrap();
                let shape = vec![8 + n; n];
                let winding: Vec<i64> = (0..n * m).map(|k| (k as i64 % 3) - 1).collect();
                let w = winding.clone();
                let map = GridMap::from_function(spec, &shape, &winding, move |x, out| {
                    for a in 0..m {
                        let mut v = 0.0;
                        for i in 0..n {
                            v += w[i * m + a] as f64 * x[i]
                                + 0.1 * (2.0 * PI * x[i] + a as f64).sin() * (2.0 * PI * x[(i + 1) % n]).cos();
                        }
                        out[a] = v;
                    }
                })
                .unwrap();
                for p in 0..map.grid().len() {
                    let jet = map.jet(p);
                    let slow = fast_point(&jet);
                    let fast = field_point(&map, p).unwrap();
                    assert_eq!(fast.d, jet.d, "{n}x{m} at {p}");
                    let tol = 1e-12 * (1.0 + slow.a2);
                    assert!((fast.geom.a2 - slow.a2).abs() < tol);
                    assert!((fast.geom.h2 - slow.h2).abs() < tol);
                    assert!((fast.geom.det - slow.det).abs() < 1e-13);
                    for a in 0..m {
                        assert!((fast.geom.velocity[a] - slow.velocity[a]).abs() < 1e-10);
                    }
                }
            }
        }
    }
}
