//! Named initial data for both solvers.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::ManifoldSpec;
use crate::sphere::{BoundaryKind, ProfileState};
use crate::torus::GridMap;

pub const SMALL_SINE_AMPLITUDE: f64 = 0.08;
pub const HALF_SINE_AMPLITUDE: f64 = 0.5;
pub const STEEP_PROFILE_SLOPE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Constant,
    Affine,
    SmallSine,
    HalfSineSphere,
    DegreeOneSteep,
    CustomTrig,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Constant,
        Preset::Affine,
        Preset::SmallSine,
        Preset::HalfSineSphere,
        Preset::DegreeOneSteep,
        Preset::CustomTrig,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Constant => "constant",
            Preset::Affine => "affine",
            Preset::SmallSine => "small_sine",
            Preset::HalfSineSphere => "half_sine_sphere",
            Preset::DegreeOneSteep => "degree_one_steep",
            Preset::CustomTrig => "custom_trig",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

/// `amplitude · sin(2π Σ_i wave_i x_i + phase)` added to one component.
/// On the sphere only `wave[0]` is used, as `sin(wave_0 θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigTerm {
    pub component: usize,
    pub amplitude: f64,
    pub wave: Vec<i64>,
    pub phase: f64,
}

impl TrigTerm {
    /// Parses `component:amplitude:k1,k2,...:phase`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("trig term `{s}` is not component:amplitude:waves:phase"));
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(bad());
        }
        let wave = parts[2].split(',').map(|w| w.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?;
        Ok(Self {
            component: parts[0].parse().map_err(|_| bad())?,
            amplitude: parts[1].parse().map_err(|_| bad())?,
            wave,
            phase: parts[3].parse().map_err(|_| bad())?,
        })
    }
}

/// Optional parameters; each preset reads the ones it needs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PresetParams {
    pub amplitude: Option<f64>,
    /// Row-major `n × m` integer slopes `L_{iα}` of the linear part.
    pub winding: Option<Vec<i64>>,
    /// Constant added to each component.
    pub offset: Option<Vec<f64>>,
    pub slope: Option<f64>,
    pub terms: Vec<TrigTerm>,
}

fn linear_part(spec: &ManifoldSpec, params: &PresetParams) -> Result<(Vec<i64>, Vec<f64>)> {
    let (n, m) = (spec.n, spec.m);
    let winding = params.winding.clone().unwrap_or_else(|| vec![0; n * m]);
    if winding.len() != n * m {
        return Err(Error::Config(format!("winding needs {} entries, got {}", n * m, winding.len())));
    }
    let offset = params.offset.clone().unwrap_or_else(|| vec![0.0; m]);
    if offset.len() != m {
        return Err(Error::Config(format!("offset needs {m} entries, got {}", offset.len())));
    }
    Ok((winding, offset))
}

/// Initial map `T^n → T^m` on a grid of the given shape.
pub fn torus_map(preset: Preset, spec: ManifoldSpec, shape: &[usize], params: &PresetParams) -> Result<GridMap> {
    let (n, m) = (spec.n, spec.m);
    let (winding, offset) = match preset {
        Preset::Constant => (vec![0; n * m], linear_part(&spec, params)?.1),
        _ => linear_part(&spec, params)?,
    };
    for t in &params.terms {
        if t.component >= m || t.wave.len() != n {
            return Err(Error::Config(format!(
                "trig term for component {} with {} wave numbers does not fit a map T^{n} -> T^{m}",
                t.component,
                t.wave.len()
            )));
        }
    }
    let amplitude = params.amplitude.unwrap_or(SMALL_SINE_AMPLITUDE);
    let w = winding.clone();
    let terms = params.terms.clone();
    let eval = move |x: &[f64], out: &mut [f64]| {
        for a in 0..m {
            out[a] = offset[a] + (0..n).map(|i| w[i * m + a] as f64 * x[i]).sum::<f64>();
            match preset {
                Preset::SmallSine if n == 1 => {
                    out[a] += amplitude * (2.0 * PI * x[0] + a as f64 * PI / 3.0).sin();
                }
                Preset::SmallSine => {
                    out[a] += amplitude
                        * (2.0 * PI * x[a % n] + a as f64 * PI / 3.0).sin()
                        * (2.0 * PI * x[(a + 1) % n]).cos();
                }
                _ => {}
            }
        }
        if preset == Preset::CustomTrig {
            for t in &terms {
                let arg: f64 = (0..n).map(|i| t.wave[i] as f64 * x[i]).sum();
                out[t.component] += t.amplitude * (2.0 * PI * arg + t.phase).sin();
            }
        }
    };
    match preset {
        Preset::Constant | Preset::Affine | Preset::SmallSine | Preset::CustomTrig => {
            GridMap::from_function(spec, shape, &winding, eval)
        }
        other => Err(Error::Config(format!("preset {} is not defined on the torus", other.as_str()))),
    }
}

/// Initial profile `ψ` of an equivariant map `S^n → S^n`.
pub fn sphere_profile(preset: Preset, n: usize, points: usize, params: &PresetParams) -> Result<ProfileState> {
    match preset {
        Preset::Constant => ProfileState::from_function(n, points, BoundaryKind::NullHomotopic, |_| 0.0),
        Preset::HalfSineSphere => {
            let a = params.amplitude.unwrap_or(HALF_SINE_AMPLITUDE);
            ProfileState::from_function(n, points, BoundaryKind::NullHomotopic, |t| a * t.sin())
        }
        Preset::DegreeOneSteep => {
            let s = params.slope.unwrap_or(STEEP_PROFILE_SLOPE);
            let c = (s * PI / 2.0).tanh();
            ProfileState::from_function(n, points, BoundaryKind::DegreeOne, |t| {
                PI * ((s * (t - PI / 2.0)).tanh() + c) / (2.0 * c)
            })
        }
        Preset::Affine => ProfileState::from_function(n, points, BoundaryKind::DegreeOne, |t| t),
        Preset::CustomTrig => {
            let boundary = if params.winding.as_deref().is_some_and(|w| w.first() == Some(&1)) {
                BoundaryKind::DegreeOne
            } else {
                BoundaryKind::NullHomotopic
            };
            if let Some(t) = params.terms.iter().find(|t| t.component != 0 || t.wave.len() != 1) {
                return Err(Error::Config(format!(
                    "sphere trig terms need component 0 and one wave number, got {:?}",
                    t
                )));
            }
            let terms = params.terms.clone();
            let base = if boundary == BoundaryKind::DegreeOne { 1.0 } else { 0.0 };
            ProfileState::from_function(n, points, boundary, move |th| {
                base * th + terms.iter().map(|t| t.amplitude * (t.wave[0] as f64 * th).sin()).sum::<f64>()
            })
        }
        Preset::SmallSine => Err(Error::Config("preset small_sine is not defined on the sphere".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_roundtrip() {
        for p in Preset::ALL {
            assert_eq!(Preset::parse(p.as_str()), Some(p));
        }
        assert_eq!(Preset::parse("nope"), None);
    }

    #[test]
    fn trig_term_parse() {
        let t = TrigTerm::parse("1:0.05:2,-1:0.3").unwrap();
        assert_eq!(t, TrigTerm { component: 1, amplitude: 0.05, wave: vec![2, -1], phase: 0.3 });
        assert!(TrigTerm::parse("1:0.05:2").is_err());
    }

    #[test]
    fn degree_one_profile_hits_both_poles() {
        let s = sphere_profile(Preset::DegreeOneSteep, 2, 64, &PresetParams::default()).unwrap();
        let (north, south) = s.pole_values();
        assert_eq!(north, 0.0);
        assert!((south - PI).abs() < 1e-12);
    }

    #[test]
    fn small_sine_initial_det() {
        let spec = ManifoldSpec::flat_torus(2, 2).unwrap();
        let map = torus_map(Preset::SmallSine, spec, &[64, 64], &PresetParams::default()).unwrap();
        let state = crate::torus::FlowState::new(map, crate::Exec::Sequential).unwrap();
        assert!(state.diagnostics.max_det <= 1.6);
    }
}
