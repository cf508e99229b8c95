use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use mcf_core::checkpoint::Checkpoint;
use mcf_core::geometry::{curvature_term, ManifoldSpec, MAX_DIM};
use mcf_core::monitor::{self, AmbientEmbedding, DensityProbe, PointCloud};
use mcf_core::presets;
use mcf_core::sphere::{self, ProfileDiagnostics, ProfileSettings, ProfileState};
use mcf_core::torus::{self, DiagnosticsRecord, FlowState, RunSettings};
use mcf_core::verifier::{self, MarginTracker, VerifySettings};
use mcf_core::{Error, Exec};

use crate::config::{Config, Experiment, FaultInjection};
use crate::output::{csv, ensure_dir, write_text};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_BLOWUP: u8 = 2;
pub const EXIT_VERIFY_FAILED: u8 = 3;
pub const EXIT_SUSPICIOUS: u8 = 4;

/// States kept for the density probe written after a blow-up.
const PROBE_HISTORY: usize = 32;

fn report(result: Result<u8>) -> u8 {
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        EXIT_ERROR
    })
}

fn executor(threads: usize) -> Result<Exec> {
    if threads <= 1 {
        return Ok(Exec::Sequential);
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().context("cannot start worker threads")?;
    Ok(Exec::Parallel)
}

pub fn run(config: &Path, out: &Path, threads: Option<usize>) -> u8 {
    report(run_inner(config, out, threads))
}

fn run_inner(path: &Path, out: &Path, threads: Option<usize>) -> Result<u8> {
    let mut cfg = Config::load(path)?;
    if let Some(k) = threads {
        cfg.set_threads(k);
    }
    let t_end = cfg.require_t_end()?;
    let exec = executor(cfg.threads)?;
    ensure_dir(&out.join("checkpoints"))?;
    match cfg.experiment {
        Experiment::Torus => run_torus(&cfg, t_end, exec, out),
        Experiment::Sphere => run_sphere(&cfg, t_end, exec, out),
    }
}

/// Writes a checkpoint whenever the flow time passes the next multiple of
/// the checkpoint interval.
struct Checkpointer<'a> {
    dir: PathBuf,
    header: &'a str,
    every: f64,
    next: f64,
    index: usize,
    last_t: Option<f64>,
    error: Option<Error>,
}

impl<'a> Checkpointer<'a> {
    fn new(out: &Path, header: &'a str, every: f64) -> Self {
        Self { dir: out.join("checkpoints"), header, every, next: 0.0, index: 0, last_t: None, error: None }
    }

    fn offer(&mut self, ck: impl FnOnce() -> Checkpoint, t: f64, force: bool) {
        if self.error.is_some() || self.last_t == Some(t) {
            return;
        }
        if !force && t < self.next - 1e-12 * self.every {
            return;
        }
        let path = self.dir.join(format!("checkpoint_{:05}.txt", self.index));
        if let Err(e) = ck().write(&path, self.header) {
            self.error = Some(e);
        }
        self.index += 1;
        self.last_t = Some(t);
        while self.next <= t + 1e-12 * self.every {
            self.next += self.every;
        }
    }

    fn finish(self) -> Result<()> {
        self.error.map_or(Ok(()), |e| Err(anyhow!(e).context("cannot write checkpoint")))
    }
}

fn summary(status: &str, steps: usize, t: f64, error: Option<&Error>, margin: Option<(&MarginTracker, f64)>) -> String {
    let mut s = format!("status = {status}\nsteps = {steps}\nt_final = {t}\n");
    if let Some(e) = error {
        s.push_str(&format!("error = {e}\n"));
    }
    if let Some((m, delta)) = margin {
        s.push_str(&format!(
            "inequality.delta = {delta}\ninequality.worst_margin = {}\ninequality.worst_t = {}\ninequality.worst_relative_to_slack = {}\ninequality.passed = {}\n",
            m.worst,
            m.worst_t,
            m.worst_relative,
            m.passed()
        ));
    }
    s
}

/// States whose `t₀ − t` shrinks by at least half from one to the next,
/// ending with the most recent.
fn thin_history<T>(history: &VecDeque<T>, time: impl Fn(&T) -> f64, t0: f64) -> Vec<&T> {
    let mut picked: Vec<&T> = Vec::new();
    for s in history {
        let tau = t0 - time(s);
        if tau <= 0.0 {
            continue;
        }
        match picked.last() {
            Some(p) if tau > 0.5 * (t0 - time(p)) => {}
            _ => picked.push(s),
        }
    }
    if let Some(last) = history.back() {
        if t0 - time(last) > 0.0 && !picked.last().is_some_and(|p| std::ptr::eq(*p, last)) {
            picked.pop();
            picked.push(last);
        }
    }
    picked
}

fn write_probe(out: &Path, header: &str, clouds: Vec<PointCloud>, y0: Vec<f64>, t0: f64, eps: f64, exec: Exec) -> Result<()> {
    let mut probe = DensityProbe::new(y0, t0)?;
    for c in &clouds {
        monitor::gaussian_density(c, &mut probe, exec)?;
    }
    let mut body = Vec::new();
    monitor::write_probe_log(&mut body, &probe, eps)?;
    write_text(&out.join("probe_log.csv"), header, &String::from_utf8(body)?)?;
    match monitor::white_flag(&probe, eps) {
        Ok((flag, limit)) => eprintln!("blow-up probe: density limit {limit:.6}, {flag}"),
        Err(e) => eprintln!("blow-up probe: {e}"),
    }
    Ok(())
}

fn run_torus(cfg: &Config, t_end: f64, exec: Exec, out: &Path) -> Result<u8> {
    let header = cfg.echo();
    let spec = ManifoldSpec::flat_torus(cfg.n, cfg.m)?;
    let map = presets::torus_map(cfg.preset, spec, &cfg.resolution, &cfg.params)?;
    let state = FlowState::new(map, exec)?;
    let delta = 2.0 - state.diagnostics.max_det;
    if cfg.check_inequality && delta <= 0.0 {
        bail!("key solver.check_inequality: initial data has max_det {} >= 2", state.diagnostics.max_det);
    }
    let settings = RunSettings {
        t_end,
        sigma: cfg.sigma,
        output_every: cfg.output_every.unwrap_or(t_end / 100.0),
        exec,
    };
    let mut ck = Checkpointer::new(out, &header, cfg.checkpoint_every.unwrap_or(t_end / 10.0));
    ck.offer(|| Checkpoint::Torus { map: state.map.clone(), t: state.t }, state.t, true);
    let mut tracker = MarginTracker::default();
    let mut history = VecDeque::from([state.clone()]);
    let mut steps = 0;
    let result = torus::run(state, &settings, |ev| {
        steps += 1;
        if cfg.check_inequality {
            tracker.observe_torus(ev, delta);
        }
        if history.len() == PROBE_HISTORY {
            history.pop_front();
        }
        history.push_back(ev.next.clone());
        ck.offer(|| Checkpoint::Torus { map: ev.next.map.clone(), t: ev.next.t }, ev.next.t, false);
    });
    let margin = cfg.check_inequality.then_some((&tracker, delta));
    let write_series = |series: &[DiagnosticsRecord]| {
        write_text(&out.join("timeseries.csv"), &header, &csv(&DiagnosticsRecord::COLUMNS, series.iter().map(|r| r.values())))
    };
    match result {
        Ok(done) => {
            ck.offer(|| Checkpoint::Torus { map: done.state.map.clone(), t: done.state.t }, done.state.t, true);
            ck.finish()?;
            write_series(&done.series)?;
            write_text(&out.join("summary.txt"), &header, &summary("completed", done.steps, done.state.t, None, margin))?;
            println!("completed t = {} in {} steps", done.state.t, done.steps);
            Ok(EXIT_OK)
        }
        Err(fail) => {
            let last = &fail.last_state;
            ck.offer(|| Checkpoint::Torus { map: last.map.clone(), t: last.t }, last.t, true);
            ck.finish()?;
            write_series(&fail.series)?;
            write_text(&out.join("summary.txt"), &header, &summary("failed", steps, last.t, Some(&fail.error), margin))?;
            let Error::Blowup { index, t, .. } = &fail.error else {
                return Err(anyhow!(fail.error));
            };
            eprintln!("{}", fail.error);
            let emb = AmbientEmbedding::flat_torus(spec)?;
            let grid = last.map.grid();
            let flat = index.iter().zip(grid.shape()).fold(0, |acc, (i, s)| acc * s + i);
            let x = grid.coords(flat);
            let y: Vec<f64> = (0..spec.m).map(|a| last.map.value(flat, a)).collect();
            let y0 = emb.embed(&x[..spec.n], &y);
            let t0 = t.max(last.t + last.dt_last.max(f64::EPSILON));
            let clouds = thin_history(&history, |s| s.t, t0)
                .into_iter()
                .map(|s| emb.torus_cloud(&s.map, s.t, exec))
                .collect::<mcf_core::Result<Vec<_>>>()?;
            write_probe(out, &header, clouds, y0, t0, cfg.epsilon, exec)?;
            Ok(EXIT_BLOWUP)
        }
    }
}

fn run_sphere(cfg: &Config, t_end: f64, exec: Exec, out: &Path) -> Result<u8> {
    let header = cfg.echo();
    let state = presets::sphere_profile(cfg.preset, cfg.n, cfg.resolution[0], &cfg.params)?;
    let initial_det = state.field(exec)?.iter().map(|p| p.det).fold(0.0, f64::max);
    let delta = 2.0 - initial_det;
    if cfg.check_inequality && delta <= 0.0 {
        bail!("key solver.check_inequality: initial data has max_det {initial_det} >= 2");
    }
    let settings = ProfileSettings {
        t_end,
        sigma: cfg.sigma,
        output_every: cfg.output_every.unwrap_or(t_end / 100.0),
        blowup_lambda: cfg.blowup_lambda,
        exec,
    };
    let mut ck = Checkpointer::new(out, &header, cfg.checkpoint_every.unwrap_or(t_end / 10.0));
    ck.offer(|| Checkpoint::Profile(state.clone()), state.t, true);
    let mut tracker = MarginTracker::default();
    let mut history = VecDeque::from([state.clone()]);
    let mut steps = 0;
    let result = sphere::run_profile(state, &settings, |ev| {
        steps += 1;
        if cfg.check_inequality {
            tracker.observe_profile(ev, delta);
        }
        if history.len() == PROBE_HISTORY {
            history.pop_front();
        }
        history.push_back(ev.next.clone());
        ck.offer(|| Checkpoint::Profile(ev.next.clone()), ev.next.t, false);
    });
    let margin = cfg.check_inequality.then_some((&tracker, delta));
    let write_series = |series: &[ProfileDiagnostics]| {
        write_text(&out.join("timeseries.csv"), &header, &csv(&ProfileDiagnostics::COLUMNS, series.iter().map(|r| r.values())))
    };
    match result {
        Ok(done) => {
            ck.offer(|| Checkpoint::Profile(done.state.clone()), done.state.t, true);
            ck.finish()?;
            write_series(&done.series)?;
            write_text(&out.join("summary.txt"), &header, &summary("completed", done.steps, done.state.t, None, margin))?;
            println!("completed t = {} in {} steps", done.state.t, done.steps);
            Ok(EXIT_OK)
        }
        Err(fail) => {
            let last = &fail.last_state;
            ck.offer(|| Checkpoint::Profile(last.clone()), last.t, true);
            ck.finish()?;
            write_series(&fail.series)?;
            write_text(&out.join("summary.txt"), &header, &summary("failed", steps, last.t, Some(&fail.error), margin))?;
            let Error::Blowup { index, t, .. } = &fail.error else {
                return Err(anyhow!(fail.error));
            };
            eprintln!("{}", fail.error);
            let emb = AmbientEmbedding::round_sphere(last.spec())?;
            let j = index.first().copied().unwrap_or(0).min(last.len() - 1);
            let (x, y) = profile_point(last, j);
            let y0 = emb.embed(&x[..last.n()], &y[..last.n()]);
            let dt = sphere::profile_dt(last, cfg.sigma);
            let t0 = t.max(last.t + dt);
            let clouds = thin_history(&history, |s| s.t, t0)
                .into_iter()
                .map(|s| emb.profile_cloud(s, angular_cells(s, cfg.angular), exec))
                .collect::<mcf_core::Result<Vec<_>>>()?;
            write_probe(out, &header, clouds, y0, t0, cfg.epsilon, exec)?;
            Ok(EXIT_BLOWUP)
        }
    }
}

/// Chart coordinates of the graph point over `(θ_j, 0, …, 0)`.
fn profile_point(state: &ProfileState, j: usize) -> ([f64; MAX_DIM], [f64; MAX_DIM]) {
    let mut x = [0.0; MAX_DIM];
    let mut y = [0.0; MAX_DIM];
    x[0] = state.theta(j as isize);
    y[0] = state.psi()[j];
    (x, y)
}

pub fn verify(config: Option<&Path>, out: &Path, threads: Option<usize>) -> u8 {
    report(verify_inner(config, out, threads))
}

fn verify_inner(config: Option<&Path>, out: &Path, threads: Option<usize>) -> Result<u8> {
    let mut cfg = match config {
        Some(p) => Config::load(p)?,
        None => Config::parse("")?,
    };
    if let Some(k) = threads {
        cfg.set_threads(k);
    }
    ensure_dir(out)?;
    let settings = VerifySettings {
        samples: cfg.verify_samples,
        seed: cfg.verify_seed,
        levels: cfg.verify_levels.clone(),
        profile_levels: cfg.verify_profile_levels.clone(),
        curvature: match cfg.fault_injection {
            FaultInjection::None => curvature_term,
            FaultInjection::NegateCurvature => verifier::negated_curvature_term,
        },
        ..VerifySettings::default()
    };
    let report = verifier::run_suite(&settings)?;
    let text = report.render();
    write_text(&out.join("report.txt"), &cfg.echo(), &text)?;
    print!("{text}");
    if report.all_passed() {
        return Ok(EXIT_OK);
    }
    for c in report.failed() {
        eprintln!("failed: {} ({})", c.name, c.level);
    }
    Ok(EXIT_VERIFY_FAILED)
}

pub struct MonitorArgs {
    pub checkpoints: String,
    pub y0: String,
    pub t0: f64,
    pub epsilon: Option<f64>,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

pub fn monitor(args: &MonitorArgs) -> u8 {
    report(monitor_inner(args))
}

fn monitor_inner(args: &MonitorArgs) -> Result<u8> {
    let mut cfg = match &args.config {
        Some(p) => Config::load(p)?,
        None => Config::parse("")?,
    };
    if let Some(k) = args.threads {
        cfg.set_threads(k);
    }
    if let Some(e) = args.epsilon {
        cfg.set_epsilon(e);
    }
    let exec = executor(cfg.threads)?;
    let mut paths: Vec<PathBuf> = glob::glob(&args.checkpoints)
        .with_context(|| format!("bad checkpoint pattern {}", args.checkpoints))?
        .collect::<std::result::Result<_, _>>()?;
    paths.sort();
    let mut checkpoints = paths
        .iter()
        .map(|p| Checkpoint::read(p).with_context(|| format!("cannot read checkpoint {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    if checkpoints.len() < 3 {
        bail!("pattern {} matched {} checkpoints, need at least 3", args.checkpoints, checkpoints.len());
    }
    checkpoints.sort_by(|a, b| a.t().total_cmp(&b.t()));
    if let Some(c) = checkpoints.iter().find(|c| c.t() >= args.t0) {
        bail!("checkpoint time {} is not before t0 = {}", c.t(), args.t0);
    }
    let latest = checkpoints.last().expect("at least three checkpoints");
    let y0 = resolve_y0(&args.y0, latest)?;
    let mut probe = DensityProbe::new(y0, args.t0)?;
    for c in &checkpoints {
        let cloud = to_cloud(c, cfg.angular, exec)?;
        monitor::gaussian_density(&cloud, &mut probe, exec)?;
    }
    let header = format!(
        "{}monitor.checkpoints = \"{}\"\nmonitor.y0 = \"{}\"\nmonitor.t0 = {}\n",
        cfg.echo(),
        args.checkpoints,
        args.y0,
        args.t0
    );
    ensure_dir(&args.out)?;
    let mut body = Vec::new();
    monitor::write_probe_log(&mut body, &probe, cfg.epsilon)?;
    write_text(&args.out.join("probe_log.csv"), &header, &String::from_utf8(body)?)?;
    let (flag, limit) = monitor::white_flag(&probe, cfg.epsilon)?;
    println!("density limit {limit:.6} (epsilon {}): {flag}", cfg.epsilon);
    Ok(match flag {
        monitor::Flag::Regular => EXIT_OK,
        monitor::Flag::Suspicious => EXIT_SUSPICIOUS,
    })
}

/// Azimuthal cells match the `θ` spacing for `n = 2`; higher `n` uses a
/// coarser fixed grid to bound the cloud size.
fn angular_cells(state: &ProfileState, angular: Option<usize>) -> usize {
    angular.unwrap_or(if state.n() == 2 { state.len() } else { 32 })
}

fn to_cloud(c: &Checkpoint, angular: Option<usize>, exec: Exec) -> Result<PointCloud> {
    Ok(match c {
        Checkpoint::Torus { map, t } => AmbientEmbedding::flat_torus(*map.spec())?.torus_cloud(map, *t, exec)?,
        Checkpoint::Profile(s) => {
            AmbientEmbedding::round_sphere(s.spec())?.profile_cloud(s, angular_cells(s, angular), exec)?
        }
        Checkpoint::PointCloud(cloud) => cloud.clone(),
    })
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',').map(|v| v.trim().parse().map_err(|_| anyhow!("cannot parse {what} `{s}`"))).collect()
}

/// Plain coordinates, or `grid:i,j,...` for a graph point of `latest`.
fn resolve_y0(spec: &str, latest: &Checkpoint) -> Result<Vec<f64>> {
    let Some(idx) = spec.strip_prefix("grid:") else {
        return parse_list(spec, "y0");
    };
    let idx: Vec<usize> = parse_list(idx, "grid index")?;
    match latest {
        Checkpoint::Torus { map, .. } => {
            let grid = map.grid();
            if idx.len() != grid.n() || idx.iter().zip(grid.shape()).any(|(i, s)| i >= s) {
                bail!("grid index {idx:?} outside shape {:?}", grid.shape());
            }
            let flat = idx.iter().zip(grid.shape()).fold(0, |acc, (i, s)| acc * s + i);
            let x = grid.coords(flat);
            let y: Vec<f64> = (0..map.spec().m).map(|a| map.value(flat, a)).collect();
            Ok(AmbientEmbedding::flat_torus(*map.spec())?.embed(&x[..grid.n()], &y))
        }
        Checkpoint::Profile(s) => {
            if idx.len() != 1 || idx[0] >= s.len() {
                bail!("profile index {idx:?} outside 0..{}", s.len());
            }
            let (x, y) = profile_point(s, idx[0]);
            Ok(AmbientEmbedding::round_sphere(s.spec())?.embed(&x[..s.n()], &y[..s.n()]))
        }
        Checkpoint::PointCloud(c) => {
            if idx.len() != 1 || idx[0] >= c.len() {
                bail!("cloud index {idx:?} outside 0..{}", c.len());
            }
            Ok(c.point(idx[0]).to_vec())
        }
    }
}
