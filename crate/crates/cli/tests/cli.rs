use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mcf_core::checkpoint::Checkpoint;
use mcf_core::monitor::PointCloud;

const TORUS: &str = r#"
[experiment]
kind = "torus"
[grid]
n = 2
m = 2
resolution = 16
[initial]
preset = "small_sine"
[solver]
t_end = 0.02
output_every = 0.005
checkpoint_every = 0.005
"#;

fn mcf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcf")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn run(config: &Path, out: &Path) -> Output {
    mcf(&["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect()
}

#[test]
fn torus_run_writes_series_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "torus.toml", TORUS);
    let out = dir.path().join("out");
    let res = run(&cfg, &out);
    assert_eq!(code(&res), 0, "{}", stderr(&res));

    let series = fs::read_to_string(out.join("timeseries.csv")).unwrap();
    assert!(series.starts_with("# "));
    assert!(series.contains("# experiment.kind = \"torus\"\n"));
    assert!(series.contains("# grid.resolution = "));
    let first_data = series.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(
        first_data,
        "t,dt,min_star_omega,max_star_omega,max_det,max_energy_density,max_A2,max_H2,total_volume,max_velocity"
    );
    let omega = column(&series, "min_star_omega");
    assert!(omega.windows(2).all(|w| w[1] >= w[0]));
    let t = column(&series, "t");
    assert!((t.last().unwrap() - 0.02).abs() < 1e-12);

    let mut checkpoints: Vec<_> = fs::read_dir(out.join("checkpoints")).unwrap().map(|e| e.unwrap().path()).collect();
    checkpoints.sort();
    assert!(checkpoints.len() >= 4);
    for p in &checkpoints {
        let text = fs::read_to_string(p).unwrap();
        assert!(text.starts_with("# "));
        assert!(matches!(Checkpoint::parse(&text).unwrap(), Checkpoint::Torus { .. }));
    }
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("status = completed") || summary.contains("completed"));
}

#[test]
fn repeated_runs_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "torus.toml", TORUS);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run(&cfg, &a)), 0);
    assert_eq!(code(&run(&cfg, &b)), 0);
    for name in ["timeseries.csv", "summary.txt"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let names: Vec<_> = fs::read_dir(a.join("checkpoints")).unwrap().map(|e| e.unwrap().file_name()).collect();
    for name in names {
        assert_eq!(fs::read(a.join("checkpoints").join(&name)).unwrap(), fs::read(b.join("checkpoints").join(&name)).unwrap());
    }
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "torus.toml", TORUS);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run(&cfg, &a)), 0);
    let res = mcf(&["run", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--threads", "3"]);
    assert_eq!(code(&res), 0);
    let strip = |p: PathBuf| {
        fs::read_to_string(p).unwrap().lines().filter(|l| !l.starts_with("# run.threads")).collect::<Vec<_>>().join("\n")
    };
    assert_eq!(strip(a.join("timeseries.csv")), strip(b.join("timeseries.csv")));
}

#[test]
fn config_errors_exit_one_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = write_config(dir.path(), "missing.toml", &TORUS.replace("t_end = 0.02\n", ""));
    let res = run(&missing, &out);
    assert_eq!(code(&res), 1);
    assert!(stderr(&res).contains("missing key: solver.t_end"), "{}", stderr(&res));

    let unknown = write_config(dir.path(), "unknown.toml", &format!("{TORUS}\n[solver2]\nfoo = 1\n"));
    let res = run(&unknown, &out);
    assert_eq!(code(&res), 1);
    assert!(stderr(&res).contains("unknown key: solver2.foo"), "{}", stderr(&res));

    let res = run(&dir.path().join("nope.toml"), &out);
    assert_eq!(code(&res), 1);
}

#[test]
fn sphere_run_and_blowup() {
    let dir = tempfile::tempdir().unwrap();
    let smooth = write_config(
        dir.path(),
        "sphere.toml",
        "experiment.kind = \"sphere_equivariant\"\ngrid.n = 2\ngrid.resolution = 32\n\
         initial.preset = \"half_sine_sphere\"\nsolver.t_end = 0.1\nsolver.output_every = 0.05\n",
    );
    let res = run(&smooth, &dir.path().join("smooth"));
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let series = fs::read_to_string(dir.path().join("smooth/timeseries.csv")).unwrap();
    assert!(series.contains("max_abs_psi"));

    let steep = write_config(
        dir.path(),
        "steep.toml",
        "experiment.kind = \"sphere_equivariant\"\ngrid.n = 2\ngrid.resolution = 64\n\
         initial.preset = \"degree_one_steep\"\nsolver.t_end = 1.0\nsolver.blowup_lambda = 3\n\
         solver.checkpoint_every = 0.001\n",
    );
    let out = dir.path().join("steep");
    let res = run(&steep, &out);
    assert_eq!(code(&res), 2, "{}", stderr(&res));
    assert!(stderr(&res).contains("grid index"), "{}", stderr(&res));
    assert!(out.join("timeseries.csv").exists());
    assert!(out.join("summary.txt").exists());
}

#[test]
fn verify_passes_and_catches_injected_fault() {
    let dir = tempfile::tempdir().unwrap();
    let base = "verify.samples = 200\nverify.levels = [32, 64, 128]\nverify.profile_levels = [32, 64, 128]\n";
    let cfg = write_config(dir.path(), "verify.toml", base);
    let out = dir.path().join("ok");
    let res = mcf(&["verify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.starts_with("# "));
    assert!(report.contains("0 failed"));
    assert!(report.contains("evolution_identity"));

    let bad = write_config(dir.path(), "bad.toml", &format!("{base}verify.fault_injection = \"negate_curvature\"\n"));
    let out = dir.path().join("bad");
    let res = mcf(&["verify", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 3);
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.lines().any(|l| l.starts_with("FAIL curvature")), "{report}");
}

fn monitor(glob: &str, y0: &str, t0: &str, out: &Path) -> Output {
    mcf(&["monitor", "--checkpoints", glob, "--y0", y0, "--t0", t0, "--out", out.to_str().unwrap()])
}

#[test]
fn monitor_on_smooth_run_is_regular() {
    let dir = tempfile::tempdir().unwrap();
    // the last probe scale √τ must stay above the grid spacing
    let text = TORUS.replace("resolution = 16", "resolution = 32").replace("checkpoint_every = 0.005", "checkpoint_every = 0.0025");
    let cfg = write_config(dir.path(), "torus.toml", &text);
    let out = dir.path().join("out");
    assert_eq!(code(&run(&cfg, &out)), 0);
    let glob = format!("{}/checkpoints/*.txt", out.display());
    let mon = dir.path().join("mon");
    let res = monitor(&glob, "grid:3,5", "0.0215", &mon);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let log = fs::read_to_string(mon.join("probe_log.csv")).unwrap();
    assert!(log.starts_with("# "));
    assert!(log.contains("t,t0_minus_t,density,extrapolated_limit,flag"));
    assert!(log.trim_end().ends_with("regular"));

    let res = monitor(&glob, "grid:3,5", "0.001", &mon);
    assert_eq!(code(&res), 1);
    let res = monitor(&format!("{}/nothing/*.txt", dir.path().display()), "0,0", "1", &mon);
    assert_eq!(code(&res), 1);
}

#[test]
fn monitor_flags_shrinking_sphere() {
    let dir = tempfile::tempdir().unwrap();
    let t0: f64 = 1.0;
    let center = [0.3, -0.1, 0.2];
    for (k, t) in [0.0, 0.5, 0.9, 0.95, 0.99].into_iter().enumerate() {
        let radius = (4.0 * (t0 - t)).sqrt();
        let cloud = PointCloud::round_sphere(2, &center, radius, t, 48).unwrap();
        Checkpoint::PointCloud(cloud).write(&dir.path().join(format!("sphere_{k}.txt")), "fixture").unwrap();
    }
    let glob = format!("{}/sphere_*.txt", dir.path().display());
    let out = dir.path().join("mon");
    let res = monitor(&glob, "0.3,-0.1,0.2", "1.0", &out);
    assert_eq!(code(&res), 4, "{}", stderr(&res));
    let log = fs::read_to_string(out.join("probe_log.csv")).unwrap();
    assert!(log.trim_end().ends_with("suspicious"));
    let last: Vec<&str> = log.lines().last().unwrap().split(',').collect();
    let density: f64 = last[2].parse().unwrap();
    assert!((density - 4.0 / std::f64::consts::E).abs() < 5e-3, "{density}");
}
