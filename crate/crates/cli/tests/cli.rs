use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_asmbench"));
    c.env_remove("ASMBENCH_WORKERS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn config(dir: &Path, json: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, json).unwrap();
    p.to_str().unwrap().to_string()
}

// two cheap inputs keep the sample runs short
const SMALL: &str = r#"{
  "distributions": [
    {"name": "K_La1", "kind": "uniform", "min": 200, "max": 280, "baseline": 240},
    {"name": "mu_H", "kind": "triangular", "min": 3.5, "mode": 4, "max": 4.5, "baseline": 4}
  ],
  "run": {"n": 4, "n_trajectory": 2, "bootstrap": 50},
  "sweep": {"x": {"name": "K_La1", "min": 200, "max": 280, "n": 2}, "y": {"name": "mu_H", "min": 3.5, "max": 4.5, "n": 2}},
  "filter": {"thresholds": {"TN": 15.0}}
}"#;

#[test]
fn simulate_writes_a_time_column() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["simulate", "--out", out, "--t-end", "0"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("t_d,A1.S_I,"));
    assert_eq!(lines[0].split(',').count(), 1 + 82);
    assert!(!text.contains('\r'));

    let o = run(&["simulate", "--out", out, "--t-end", "50"]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let t: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!((t[0], *t.last().unwrap()), (0.0, 50.0));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), r#"{"settngs": {}}"#);
    let o = run(&["steady", "--config", &cfg]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("settngs"));
    assert_eq!(code(&run(&["steady", "--workers", "0"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    let o = bin().args(["steady", "--out", dir.path().to_str().unwrap()]).env("ASMBENCH_WORKERS", "0").output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn unconverged_steady_state_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), r#"{"run": {"t_max": 0.01}}"#);
    let o = run(&["steady", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("0.01 d"));
}

#[test]
fn too_many_failed_samples_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &SMALL.replace(r#""n": 4"#, r#""n": 2, "t_max": 0.01"#));
    let o = run(&["uncertainty", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().nth(1).unwrap(), ",,,,,,,false");
}

#[test]
fn uncertainty_filter_and_chart_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = run(&["uncertainty", "--config", &cfg, "--out", d.to_str().unwrap(), "--seed", "3"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["samples.csv", "metrics.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let samples = std::fs::read_to_string(a.join("samples.csv")).unwrap();
    assert_eq!(samples.lines().next().unwrap(), "K_La1,mu_H");
    assert_eq!(samples.lines().count(), 5);

    // split the four samples two and two
    let metrics = std::fs::read_to_string(a.join("metrics.csv")).unwrap();
    let mut tn: Vec<f64> = metrics.lines().skip(1).map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    tn.sort_by(f64::total_cmp);
    let threshold = (tn[1] + tn[2]) / 2.0;
    let cfg = config(dir.path(), &SMALL.replace(r#""TN": 15.0"#, &format!(r#""TN": {threshold}"#)));
    let o = run(&["filter", "--config", &cfg, "--out", a.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let filter = std::fs::read_to_string(a.join("filter.csv")).unwrap();
    assert_eq!(filter.lines().next().unwrap(), "parameter,metric,threshold,D,p,n_above,n_below,low_confidence");
    assert_eq!(filter.lines().count(), 1 + 2);
    let spearman = std::fs::read_to_string(a.join("spearman.csv")).unwrap();
    assert_eq!(spearman.lines().count(), 1 + 2 * 7);

    let svg = a.join("tn.svg");
    let o = run(&[
        "chart", "--kind", "ecdf", "--input", a.join("metrics.csv").to_str().unwrap(), "--output",
        svg.to_str().unwrap(), "--columns", "TN", "--threshold", "18",
    ]);
    assert_eq!(code(&o), 0);
    assert!(std::fs::read_to_string(&svg).unwrap().contains(r#"class="threshold""#));

    let o = run(&[
        "chart", "--kind", "heatmap", "--input", a.join("metrics.csv").to_str().unwrap(), "--output",
        svg.to_str().unwrap(), "--x", "K_La1", "--y", "Q_WAS", "--columns", "TN",
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("K_La1, Q_WAS"));
}

#[test]
fn morris_logs_its_simulation_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let o = run(&["morris", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("morris: 6 simulations, 0 failed"));
    let text = std::fs::read_to_string(dir.path().join("morris.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 7);
    let svg = dir.path().join("m.svg");
    let o = run(&[
        "chart", "--kind", "morris-scatter", "--input", dir.path().join("morris.csv").to_str().unwrap(), "--output",
        svg.to_str().unwrap(), "--metric", "TN",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read_to_string(&svg).unwrap().matches(r#"class="guide""#).count(), 2);
}

#[test]
fn sweep_and_accounting_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let json = SMALL.replace(
        r#""filter""#,
        r#""impact_indicators": [{"id": "GWP", "unit": "kg CO2eq"}],
  "impact_items": [
    {"id": "aeration_electricity", "functional_unit": "kWh", "cf": {"GWP": 0.5}},
    {"id": "sludge_disposal", "functional_unit": "kg", "cf": {"GWP": 0.1}}
  ],
  "prices": {"electricity": 0.1, "sludge_disposal": 0.05},
  "tea": {"r": 0.05, "n": 20, "capital": [{"id": "blowers", "cost": 1000, "lifetime": 10}]},
  "filter""#,
    );
    let cfg = config(dir.path(), &json);
    let o = run(&["sweep", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let grid = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(grid.lines().next().unwrap(), "K_La1,mu_H,COD,BOD5,TSS,TN,TKN,sludge_production,SRT,converged");
    assert_eq!(grid.lines().count(), 1 + 4);
    let tea = std::fs::read_to_string(dir.path().join("tea_lca.csv")).unwrap();
    let header: Vec<&str> = tea.lines().next().unwrap().split(',').collect();
    assert!(header.contains(&"GWP") && header.contains(&"aeration_electricity:GWP") && header.contains(&"capital:blowers"));
    assert_eq!(tea.lines().count(), 1 + 4);
}
