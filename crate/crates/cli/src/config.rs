//! TOML experiment configuration, flattened to dotted keys.
//!
//! Every key is looked up through [`Config`], which records the resolved
//! value (given or default) for the header echoed into output files. Keys
//! left unread after loading are rejected as unknown.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use mcf_core::presets::{Preset, PresetParams, TrigTerm};
use mcf_core::sphere::{DEFAULT_BLOWUP_LAMBDA, DEFAULT_PROFILE_SIGMA};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Torus,
    Sphere,
}

impl Experiment {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "torus" => Some(Experiment::Torus),
            "sphere_equivariant" => Some(Experiment::Sphere),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultInjection {
    None,
    NegateCurvature,
}

#[derive(Debug, Clone)]
pub struct Config {
    pub experiment: Experiment,
    pub n: usize,
    pub m: usize,
    pub resolution: Vec<usize>,
    pub preset: Preset,
    pub params: PresetParams,
    pub t_end: Option<f64>,
    pub sigma: f64,
    pub output_every: Option<f64>,
    pub checkpoint_every: Option<f64>,
    pub blowup_lambda: f64,
    pub check_inequality: bool,
    pub threads: usize,
    pub verify_samples: usize,
    pub verify_seed: u64,
    pub verify_levels: Vec<usize>,
    pub verify_profile_levels: Vec<usize>,
    pub fault_injection: FaultInjection,
    pub epsilon: f64,
    /// Cells per polar angle of `S^{n−1}` for profile clouds; `None` picks
    /// one from the profile resolution.
    pub angular: Option<usize>,
    echo: BTreeMap<String, String>,
}

struct Reader {
    values: BTreeMap<String, toml::Value>,
    echo: BTreeMap<String, String>,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn render(v: &toml::Value) -> String {
    v.to_string()
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<toml::Value> {
        let v = self.values.remove(key)?;
        self.echo.insert(key.to_string(), render(&v));
        Some(v)
    }

    fn default<T: Display>(&mut self, key: &str, v: T, quoted: bool) -> T {
        let s = if quoted { format!("\"{v}\"") } else { v.to_string() };
        self.echo.insert(key.to_string(), s);
        v
    }

    fn float(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Float(f)) => Ok(Some(f)),
            Some(toml::Value::Integer(i)) => Ok(Some(i as f64)),
            Some(other) => bail!("key {key}: expected a number, got {other}"),
        }
    }

    fn int(&mut self, key: &str) -> Result<Option<i64>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) => Ok(Some(i)),
            Some(other) => bail!("key {key}: expected an integer, got {other}"),
        }
    }

    fn usize(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.int(key)? {
            Some(i) if i >= 0 => Ok(i as usize),
            Some(i) => bail!("key {key}: expected a nonnegative integer, got {i}"),
            None => Ok(self.default(key, default, false)),
        }
    }

    fn string(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s)),
            Some(other) => bail!("key {key}: expected a string, got {other}"),
        }
    }

    fn boolean(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            None => Ok(self.default(key, default, false)),
            Some(toml::Value::Boolean(b)) => Ok(b),
            Some(other) => bail!("key {key}: expected true or false, got {other}"),
        }
    }

    fn array(&mut self, key: &str) -> Result<Option<Vec<toml::Value>>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Array(a)) => Ok(Some(a)),
            Some(other) => Ok(Some(vec![other])),
        }
    }

    fn ints(&mut self, key: &str) -> Result<Option<Vec<i64>>> {
        self.array(key)?
            .map(|a| {
                a.into_iter()
                    .map(|v| v.as_integer().ok_or_else(|| anyhow!("key {key}: expected integers, got {v}")))
                    .collect()
            })
            .transpose()
    }

    fn floats(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        self.array(key)?
            .map(|a| {
                a.into_iter()
                    .map(|v| match v {
                        toml::Value::Float(f) => Ok(f),
                        toml::Value::Integer(i) => Ok(i as f64),
                        other => Err(anyhow!("key {key}: expected numbers, got {other}")),
                    })
                    .collect()
            })
            .transpose()
    }

    fn levels(&mut self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.ints(key)? {
            Some(v) => {
                let v: Vec<usize> = v.into_iter().map(|i| i.max(0) as usize).collect();
                if v.len() < 2 || v.windows(2).any(|w| w[1] <= w[0]) {
                    bail!("key {key}: expected at least two increasing grid levels");
                }
                Ok(v)
            }
            None => {
                let s = format!("{default:?}");
                self.echo.insert(key.to_string(), s);
                Ok(default.to_vec())
            }
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().context("config is not valid TOML")?;
        let mut values = BTreeMap::new();
        flatten("", &table, &mut values);
        let mut r = Reader { values, echo: BTreeMap::new() };

        let kind = r.string("experiment.kind")?.unwrap_or_else(|| r.default("experiment.kind", "torus".into(), true));
        let experiment = Experiment::parse(&kind)
            .ok_or_else(|| anyhow!("key experiment.kind: expected torus or sphere_equivariant, got {kind}"))?;
        let sphere = experiment == Experiment::Sphere;

        let n = r.usize("grid.n", 2)?;
        let m = if sphere {
            match r.int("grid.m")? {
                Some(v) if v as usize != n => bail!("key grid.m: equivariant maps need m = n"),
                _ => n,
            }
        } else {
            r.usize("grid.m", n)?
        };
        let default_res = if sphere { 256 } else { 64 };
        let resolution: Vec<usize> = match r.ints("grid.resolution")? {
            Some(v) if v.len() == 1 => vec![v[0].max(0) as usize; if sphere { 1 } else { n }],
            Some(v) if !sphere && v.len() == n => v.into_iter().map(|i| i.max(0) as usize).collect(),
            Some(v) => bail!("key grid.resolution: expected 1 or {n} entries, got {}", v.len()),
            None => {
                r.default("grid.resolution", default_res, false);
                vec![default_res; if sphere { 1 } else { n }]
            }
        };

        let default_preset = if sphere { "half_sine_sphere" } else { "small_sine" };
        let preset_name =
            r.string("initial.preset")?.unwrap_or_else(|| r.default("initial.preset", default_preset.into(), true));
        let preset = Preset::parse(&preset_name).ok_or_else(|| anyhow!("key initial.preset: unknown preset {preset_name}"))?;
        let terms = match r.array("initial.terms")? {
            None => Vec::new(),
            Some(a) => a
                .iter()
                .map(|v| {
                    let s = v.as_str().ok_or_else(|| anyhow!("key initial.terms: expected strings"))?;
                    TrigTerm::parse(s).map_err(|e| anyhow!("key initial.terms: {e}"))
                })
                .collect::<Result<_>>()?,
        };
        let params = PresetParams {
            amplitude: r.float("initial.amplitude")?,
            winding: r.ints("initial.winding")?,
            offset: r.floats("initial.offset")?,
            slope: r.float("initial.slope")?,
            terms,
        };

        let t_end = r.float("solver.t_end")?;
        let default_sigma = if sphere { DEFAULT_PROFILE_SIGMA } else { 1.0 };
        let sigma = match r.float("solver.sigma")? {
            Some(s) => s,
            None => r.default("solver.sigma", default_sigma, false),
        };
        if !(sigma > 0.0 && sigma <= 1.0) {
            bail!("key solver.sigma: expected a value in (0, 1], got {sigma}");
        }
        let output_every = r.float("solver.output_every")?;
        let checkpoint_every = r.float("solver.checkpoint_every")?;
        for (k, v) in [("solver.t_end", t_end), ("solver.output_every", output_every), ("solver.checkpoint_every", checkpoint_every)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    bail!("key {k}: expected a positive number, got {v}");
                }
            }
        }
        let blowup_lambda = match r.float("solver.blowup_lambda")? {
            Some(v) => v,
            None => r.default("solver.blowup_lambda", DEFAULT_BLOWUP_LAMBDA, false),
        };
        let check_inequality = r.boolean("solver.check_inequality", false)?;
        let threads = r.usize("run.threads", 1)?.max(1);

        let verify_samples = r.usize("verify.samples", 10_000)?;
        let verify_seed = r.usize("verify.seed", 1)? as u64;
        let verify_levels = r.levels("verify.levels", &[32, 64, 128])?;
        let verify_profile_levels = r.levels("verify.profile_levels", &[64, 128, 256])?;
        let fault = r.string("verify.fault_injection")?.unwrap_or_else(|| r.default("verify.fault_injection", "none".into(), true));
        let fault_injection = match fault.as_str() {
            "none" => FaultInjection::None,
            "negate_curvature" => FaultInjection::NegateCurvature,
            other => bail!("key verify.fault_injection: expected none or negate_curvature, got {other}"),
        };

        let epsilon = match r.float("monitor.epsilon")? {
            Some(v) => v,
            None => r.default("monitor.epsilon", mcf_core::monitor::DEFAULT_EPSILON, false),
        };
        let angular = match r.take("monitor.angular") {
            None => {
                r.default("monitor.angular", "auto", true);
                None
            }
            Some(toml::Value::String(s)) if s == "auto" => None,
            Some(toml::Value::Integer(i)) if i >= 2 => Some(i as usize),
            Some(other) => bail!("key monitor.angular: expected \"auto\" or an integer >= 2, got {other}"),
        };

        if let Some(key) = r.values.keys().next() {
            bail!("unknown key: {key}");
        }
        Ok(Self {
            experiment,
            n,
            m,
            resolution,
            preset,
            params,
            t_end,
            sigma,
            output_every,
            checkpoint_every,
            blowup_lambda,
            check_inequality,
            threads,
            verify_samples,
            verify_seed,
            verify_levels,
            verify_profile_levels,
            fault_injection,
            epsilon,
            angular,
            echo: r.echo,
        })
    }

    pub fn require_t_end(&self) -> Result<f64> {
        self.t_end.ok_or_else(|| anyhow!("missing key: solver.t_end"))
    }

    /// Overrides applied from the command line after loading.
    pub fn set_threads(&mut self, threads: usize) {
        self.threads = threads.max(1);
        self.echo.insert("run.threads".into(), self.threads.to_string());
    }

    pub fn set_epsilon(&mut self, epsilon: f64) {
        self.epsilon = epsilon;
        self.echo.insert("monitor.epsilon".into(), epsilon.to_string());
    }

    /// `key = value` lines of the resolved configuration, sorted by key.
    pub fn echo(&self) -> String {
        self.echo.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
