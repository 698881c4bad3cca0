use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lpq_sampling::config::parse_config;
use lpq_sampling::experiment::{RunSummary, SweepRow};
use lpq_sampling::grid::GridSpec;
use lpq_sampling::sampling::{generate_sampling_set, SamplingMode};

const BASE: &str = r#"
seed = 11
[grid]
d = 1
periods = [8, 8]
m = 16
[exponents]
p = 2
q = 2
[sampling]
gamma = 0.5
s = 0.5
eta = 0.2
[kernels]
a = 0.25
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lpq-sampling"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], cfg: &Path, out: &Path) -> Output {
    bin().args(args).arg("-c").arg(cfg).arg("--out").arg(out).output().unwrap()
}

fn report(out: &Path) -> RunSummary {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn run_writes_report_log_and_echo() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", BASE);
    let out = dir.path().join("out");
    let o = run(&["run"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = report(&out);
    assert!(rep.reconstruction.converged);
    let csv = std::fs::read_to_string(out.join("iterations.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("n,successive_change,true_error,timestamp"));
    assert_eq!(lines.count(), rep.reconstruction.iterations_run);
    // the echoed config parses back to the configuration that ran
    let echoed = parse_config(&out.join("config.toml")).unwrap();
    assert_eq!(echoed, rep.config);
    assert_eq!(echoed.output_dir, out);
}

#[test]
fn timestamps_are_iso_utc() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", BASE);
    let out = dir.path().join("out");
    let o = bin()
        .args(["run", "-c"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .env("SOURCE_DATE_EPOCH", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("iterations.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",1970-01-01T00:00:00.000000Z")));
}

#[test]
fn sparse_sampling_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let text = BASE.replace("gamma = 0.5\ns = 0.5\neta = 0.2", "gamma = 3.0");
    let cfg = write(dir.path(), "c.toml", &text);
    let out = dir.path().join("out");
    assert_eq!(run(&["run"], &cfg, &out).status.code(), Some(2));
    let rep = report(&out);
    assert!(!rep.reconstruction.converged);
}

#[test]
fn usage_and_input_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(run(&["run"], &dir.path().join("missing.toml"), &out).status.code(), Some(1));

    let bad = write(dir.path(), "bad.toml", &BASE.replace("p = 2\n", "p = 0.5\n"));
    let o = run(&["run"], &bad, &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("exponents.p"));

    assert_eq!(bin().arg("frobnicate").output().unwrap().status.code(), Some(1));
    assert_eq!(bin().arg("run").output().unwrap().status.code(), Some(1));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
}

#[test]
fn seed_override_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", BASE);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run(&["run"], &cfg, &a).status.code(), Some(0));
    assert_eq!(run(&["run", "--seed", "12"], &cfg, &b).status.code(), Some(0));
    let (ra, rb) = (report(&a), report(&b));
    assert_eq!(rb.config.seed, 12);
    assert_ne!(ra.run_seed, rb.run_seed);
}

#[test]
fn one_point_sweep_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", BASE);
    let out = dir.path().join("run");
    assert_eq!(run(&["run"], &cfg, &out).status.code(), Some(0));
    let sweep = dir.path().join("sweep");
    let o = run(&["sweep", "--gamma", "0.5", "--a", "0.25"], &cfg, &sweep);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(sweep.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], SweepRow::HEADER);
    assert_eq!(lines[1], SweepRow::from_summary(&report(&out)).csv_line());
    let frontier = std::fs::read_to_string(sweep.join("frontier.csv")).unwrap();
    assert_eq!(frontier, "gamma,a\n0.5,0.25\n");
}

#[test]
fn gamma_sweep_alpha_grows_with_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", BASE);
    let out = dir.path().join("sweep");
    let o = run(&["sweep", "--gamma", "0.25,0.5,1.0", "--a", "0.25"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let alpha: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(4).unwrap().parse().unwrap()).collect();
    assert_eq!(alpha.len(), 3);
    assert!(alpha.windows(2).all(|w| w[1] >= w[0] / 1.05), "{alpha:?}");
    // one directory per combination
    let dirs = std::fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count();
    assert_eq!(dirs, 3);
}

#[test]
fn empty_sweep_axis_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", BASE);
    let out = dir.path().join("sweep");
    assert_eq!(run(&["sweep", "--gamma", "--a", "0.25"], &cfg, &out).status.code(), Some(1));
    assert_eq!(run(&["sweep", "--a", "0.25"], &cfg, &out).status.code(), Some(1));
}

#[test]
fn verify_passes_on_default_and_minimal_grids() {
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in [("default", BASE.to_string()), ("coarse", BASE.replace("m = 16", "m = 4"))] {
        let cfg = write(dir.path(), &format!("{name}.toml"), &text);
        let o = run(&["verify"], &cfg, &dir.path().join(name));
        let table = String::from_utf8_lossy(&o.stdout);
        assert_eq!(o.status.code(), Some(0), "{name}:\n{table}");
        assert!(table.contains("partition-of-unity"));
        assert!(!table.contains("FAIL"));
    }
}

#[test]
fn corrupted_partition_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &BASE.replace("m = 16", "m = 4"));
    let o = run(&["verify", "--corrupt-bupu"], &cfg, &dir.path().join("v"));
    assert_eq!(o.status.code(), Some(3));
    let stdout = String::from_utf8_lossy(&o.stdout);
    let line = stdout.lines().find(|l| l.contains("partition-of-unity")).unwrap();
    assert!(line.contains("FAIL"), "{line}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("sampling/partition-of-unity"));
}

#[test]
fn sampling_set_imports_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let spec = GridSpec::new(1, 8, 8, 16).unwrap();
    let x = generate_sampling_set(SamplingMode::JitteredGrid { spacing: 0.5, jitter: 0.1, product: false }, &spec, 4)
        .unwrap();
    x.write_csv(&dir.path().join("points.csv")).unwrap();
    let text = BASE.replace("s = 0.5\neta = 0.2", "file = \"points.csv\"");
    let cfg = write(dir.path(), "c.toml", &text);
    let out = dir.path().join("out");
    let o = run(&["run"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(report(&out).density.samples, x.len());
}
