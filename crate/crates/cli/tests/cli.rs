use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_leechsim"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let o = run(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Every file under `dir`, relative path to contents.
fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

const SMALL_PLAN: &str = "scale_mm_per_cell=1
############
#AAAA#BBBBB#
#AAAA#BBBBB#
#AAAABBBBBB#
#AAAA#BBBBBX
############
";

fn small_plan(dir: &Path) -> PathBuf {
    let path = dir.join("small.plan");
    fs::write(&path, SMALL_PLAN).unwrap();
    path
}

#[test]
fn simulate_is_reproducible_across_runs_and_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    let common = ["simulate", "-n", "30", "--seed", "9", "--max-steps", "600"];
    ok(&[&common[..], &["--threads", "1", "--out", p(&a)]].concat());
    ok(&[&common[..], &["--threads", "1", "--out", p(&b)]].concat());
    ok(&[&common[..], &["--threads", "4", "--out", p(&c)]].concat());
    let snap = snapshot(&a);
    assert_eq!(snap, snapshot(&b));
    assert_eq!(snap, snapshot(&c));
    let names: Vec<String> = snap.iter().map(|(n, _)| n.display().to_string()).collect();
    for want in [
        "digests.txt",
        "domain_frequencies.json",
        "frequency.csv",
        "frequency.png",
        "report.txt",
        "run.manifest",
        "threshold_0.00.png",
        "threshold_0.05.png",
        "threshold_0.10.png",
        "threshold_0.15.png",
        "trajectories/trial_0029.csv",
    ] {
        assert!(names.contains(&want.to_string()), "missing {want}");
    }
    let digests = fs::read_to_string(a.join("digests.txt")).unwrap();
    assert_eq!(digests.lines().count(), snap.len() - 1);
}

#[test]
fn simulate_rejects_bad_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = run(&["simulate", "-n", "0", "--out", p(&out)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("at least 1"));

    let o = run(&["simulate", "--plan", "/no/such/file.plan", "--start", "1,1", "--out", p(&out)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("/no/such/file.plan"));

    let plan = small_plan(tmp.path());
    let o = run(&["simulate", "--plan", p(&plan), "--start", "0,0", "--out", p(&out)]);
    assert!(!o.status.success());
    let o = run(&["simulate", "--plan", p(&plan), "--out", p(&out)]);
    assert!(stderr(&o).contains("--start"));
}

#[test]
fn flags_override_config_which_overrides_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    small_plan(tmp.path());
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "plan=small.plan\nstart=2,2\ntrials=3\nseed=5\nout=from_config\nmax_steps=50\n").unwrap();

    ok(&["simulate", "--config", p(&cfg)]);
    let manifest = fs::read_to_string(tmp.path().join("from_config/run.manifest")).unwrap();
    assert!(manifest.contains("trials=3"), "{manifest}");
    assert!(manifest.contains("seed=5"));

    let flagged = tmp.path().join("flagged");
    ok(&["simulate", "--config", p(&cfg), "-n", "2", "--out", p(&flagged)]);
    let manifest = fs::read_to_string(flagged.join("run.manifest")).unwrap();
    assert!(manifest.contains("trials=2"));
    assert!(manifest.contains("seed=5"));
    assert!(flagged.join("trajectories/trial_0001.csv").exists());
    assert!(!flagged.join("trajectories/trial_0002.csv").exists());

    let defaults = tmp.path().join("defaults");
    ok(&["simulate", "--max-steps", "20", "--out", p(&defaults)]);
    let manifest = fs::read_to_string(defaults.join("run.manifest")).unwrap();
    assert!(manifest.contains("trials=20") && manifest.contains("seed=1"), "{manifest}");

    fs::write(&cfg, "colour=blue\n").unwrap();
    let o = run(&["simulate", "--config", p(&cfg)]);
    assert!(stderr(&o).contains("unknown key"));
}

#[test]
fn simulate_with_a_heat_source() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("hot");
    ok(&[
        "simulate", "-n", "4", "--max-steps", "100", "--thermal-source", "3,3,5,5", "--taxis-beta", "5",
        "--out", p(&out),
    ]);
    let manifest = fs::read_to_string(out.join("run.manifest")).unwrap();
    assert!(manifest.contains("thermal_source=3,3,5,5") && manifest.contains("taxis_beta=5"));
    let o = run(&["simulate", "--thermal-source", "0,0,1,1", "--out", p(&out)]);
    assert!(!o.status.success());
}

fn write_traces(dir: &Path, n: usize) -> Vec<PathBuf> {
    let sim = dir.join("sim");
    let plan = small_plan(dir);
    ok(&[
        "simulate", "--plan", p(&plan), "--start", "2,2", "-n", &n.to_string(), "--max-steps", "40",
        "--out", p(&sim),
    ]);
    (0..n).map(|i| sim.join(format!("trajectories/trial_{i:04}.csv"))).collect()
}

#[test]
fn analyze_reproduces_simulate_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let traces = write_traces(tmp.path(), 20);
    let plan = tmp.path().join("small.plan");
    let out = tmp.path().join("an");
    let mut args = vec!["analyze".to_string(), "--plan".into(), p(&plan).into(), "--out".into(), p(&out).into()];
    args.extend(traces.iter().map(|t| p(t).to_string()));
    let o = bin().args(&args).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["frequency.csv", "domain_frequencies.json", "report.txt", "threshold_0.15.png"] {
        assert_eq!(
            fs::read(out.join(name)).unwrap(),
            fs::read(tmp.path().join("sim").join(name)).unwrap(),
            "{name}"
        );
    }
    let total: f64 = fs::read_to_string(out.join("frequency.csv"))
        .unwrap()
        .split(|c| c == ',' || c == '\n')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9);

    let single = tmp.path().join("one");
    ok(&["analyze", "--plan", p(&plan), "--out", p(&single), p(&traces[0])]);
    assert!(single.join("report.txt").exists());
}

#[test]
fn analyze_names_bad_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = small_plan(tmp.path());
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "step,x,y,mode,outcome\n0,2,2,unknown,\n1,40,2,unknown,timed_out\n").unwrap();
    let o = run(&["analyze", "--plan", p(&plan), "--out", p(&tmp.path().join("x")), p(&bad)]);
    assert!(!o.status.success());
    let msg = stderr(&o);
    assert!(msg.contains("bad.csv") && msg.contains("sample 1"), "{msg}");
}

#[test]
fn render_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    ok(&["simulate", "-n", "1", "--max-steps", "200", "--out", p(&sim)]);
    let trace = sim.join("trajectories/trial_0000.csv");
    let a = tmp.path().join("a.png");
    let b = tmp.path().join("b.png");
    ok(&["render", "--trace", p(&trace), "--zoom", "4", "--out", p(&a)]);
    ok(&["render", "--trace", p(&trace), "--zoom", "4", "--out", p(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let img = image::open(&a).unwrap();
    assert_eq!((img.width(), img.height()), (440, 400));

    let ppm = tmp.path().join("a.ppm");
    ok(&["render", "--trace", p(&trace), "--out", p(&ppm)]);
    assert!(fs::read(&ppm).unwrap().starts_with(b"P6"));

    let o = run(&["render", "--trace", "/no/trace.csv", "--out", p(&a)]);
    assert!(!o.status.success());
}

#[test]
fn calibrate_writes_params_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = small_plan(tmp.path());
    let target = tmp.path().join("target.json");
    fs::write(&target, r#"{"A": 0.5, "B": 0.5}"#).unwrap();
    let out = tmp.path().join("best.params");
    ok(&[
        "calibrate", "--plan", p(&plan), "--start", "2,2", "--target", p(&target), "--budget", "1",
        "--trials-per-eval", "5", "--max-steps", "50", "--out", p(&out),
    ]);
    let params = fs::read_to_string(&out).unwrap();
    assert!(params.starts_with("# calibrate seed=1 budget=1"));
    assert!(params.contains("loss="));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("best.params.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["evaluations"], 1);
    assert!(summary["loss"].as_f64().unwrap() >= 0.0);

    // the written file is a valid parameter file for simulate
    ok(&[
        "simulate", "--plan", p(&plan), "--start", "2,2", "--params", p(&out), "-n", "2", "--max-steps", "20",
        "--out", p(&tmp.path().join("s")),
    ]);

    fs::write(&target, r#"{"A": 0.25, "B": 0.25}"#).unwrap();
    let o = run(&["calibrate", "--plan", p(&plan), "--start", "2,2", "--target", p(&target), "--out", p(&out)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("sum to"));
    fs::write(&target, "{not json").unwrap();
    let o = run(&["calibrate", "--plan", p(&plan), "--start", "2,2", "--target", p(&target), "--out", p(&out)]);
    assert!(!o.status.success());
}

#[test]
fn extract_round_trip_through_files() {
    use image::{Rgb, RgbImage};
    let tmp = tempfile::tempdir().unwrap();
    let frames = tmp.path().join("frames");
    fs::create_dir(&frames).unwrap();
    let path = [(5u32, 5u32), (9, 5), (9, 12), (3, 12)];
    let mut k = 0;
    for &(x, y) in &path {
        for _ in 0..25 {
            let mut img = RgbImage::from_pixel(16, 16, Rgb([220, 220, 220]));
            for dy in 0..3 {
                for dx in 0..3 {
                    img.put_pixel(x + dx - 1, y + dy - 1, Rgb([10, 10, 10]));
                }
            }
            img.save(frames.join(format!("f{k:04}.ppm"))).unwrap();
            k += 1;
        }
    }
    let out = tmp.path().join("trace.csv");
    ok(&["extract", "--frames", p(&frames), "--threshold", "40", "--out", p(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0], "0,5,5,unknown,");
    assert_eq!(rows[3], "3,3,12,unknown,timed_out");

    let o = run(&["extract", "--frames", "/no/frames", "--out", p(&out)]);
    assert!(!o.status.success());
}
