use std::path::Path;
use std::process::Command;

use multibec_cli::config::{bundled, BUNDLED};
use multibec_cli::output::csv_header;
use multibec_cli::runner::{suite_configs, EXIT_CONFIG, EXIT_CONVERGED, EXIT_NOT_CONVERGED};
use multibec_cli::{compare, parse_config, solve, RunConfig};

fn into_dir(mut cfg: RunConfig, dir: &Path) -> RunConfig {
    cfg.output.dir = dir.to_path_buf();
    cfg
}

fn without_wall_time(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| {
            l.rsplit_once(',')
                .map(|(head, _)| head.to_string())
                .unwrap_or_default()
        })
        .collect()
}

#[test]
fn beta10_converges_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = solve(&into_dir(bundled("bench1d_beta10").unwrap(), dir.path())).unwrap();
    assert_eq!(out.exit_code(), EXIT_CONVERGED);
    assert!(out.summary.residual <= 1e-8);
    assert_eq!(out.artifacts.len(), 3);

    let csv = std::fs::read_to_string(dir.path().join("bench1d_beta10.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), csv_header(2));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), out.report.records.len());
    for row in &rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 7);
        for f in &fields[1..5] {
            let (mantissa, exp) = f.split_once('e').unwrap();
            assert_eq!(mantissa.trim_start_matches('-').len(), 18, "{f}");
            assert!(exp.starts_with('+') || exp.starts_with('-'), "{f}");
            f.parse::<f64>().unwrap();
        }
    }

    let field = std::fs::read_to_string(dir.path().join("bench1d_beta10.field")).unwrap();
    let mut lines = field.lines();
    assert_eq!(
        lines.next().unwrap(),
        "# dim=1 p=2 n=2049 h=3.1250000000000000e-02"
    );
    let nodes: Vec<Vec<f64>> = lines
        .map(|l| l.split(' ').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(nodes.len(), 2049);
    assert!(nodes.iter().all(|n| n.len() == 3));
    assert!(nodes.windows(2).all(|w| w[1][0] > w[0][0]), "mesh order");
    assert_eq!(nodes[0][0], -16.0);
    assert_eq!(nodes[2048][0], 16.0);

    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("bench1d_beta10.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["converged"], true);
    assert_eq!(summary["termination"]["reason"], "converged");
    assert_eq!(summary["lambda"].as_array().unwrap().len(), 2);
}

#[test]
fn repeated_runs_give_identical_csv_up_to_wall_time() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = bundled("bench1d_beta10").unwrap();
    solve(&into_dir(cfg.clone(), a.path())).unwrap();
    solve(&into_dir(cfg, b.path())).unwrap();
    let read = |d: &Path| std::fs::read_to_string(d.join("bench1d_beta10.csv")).unwrap();
    assert_eq!(
        without_wall_time(&read(a.path())),
        without_wall_time(&read(b.path()))
    );
    let field = |d: &Path| std::fs::read(d.join("bench1d_beta10.field")).unwrap();
    assert_eq!(field(a.path()), field(b.path()));
}

#[test]
fn single_outer_step_exits_not_converged() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = into_dir(bundled("bench1d_beta10").unwrap(), dir.path());
    cfg.solver.max_outer = 1;
    let out = solve(&cfg).unwrap();
    assert_eq!(out.exit_code(), EXIT_NOT_CONVERGED);
    assert_eq!(out.summary.iterations, 1);
}

#[test]
fn newton_at_beta1000_does_not_converge() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = into_dir(bundled("bench1d_beta1000").unwrap(), dir.path());
    cfg.solver.method = multibec::optim::Method::Rn;
    cfg.solver.alternating = None;
    let out = solve(&cfg).unwrap();
    assert_eq!(out.exit_code(), EXIT_NOT_CONVERGED);
    assert!(!out.summary.converged);
}

#[test]
fn comparison_has_one_sorted_row_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let groups = suite_configs("table1").unwrap();
    let (name, configs) = &groups[0];
    assert_eq!(name, "bench1d_beta10");
    let configs: Vec<RunConfig> = configs
        .iter()
        .cloned()
        .map(|c| into_dir(c, dir.path()))
        .collect();
    let rows = compare(&configs).unwrap();
    let methods: Vec<&str> = rows.iter().map(|r| r.summary.method.as_str()).collect();
    assert_eq!(methods, ["ea-rgd", "lgr-rgd", "reg-rn", "rn"]);
    let e0 = rows[0].summary.energy;
    for r in &rows {
        assert!(r.summary.converged, "{}", r.summary.method);
        assert!((r.summary.energy - e0).abs() <= 1e-7 * e0);
    }

    let single = compare(&configs[..1]).unwrap();
    assert_eq!(single.len(), 1);
}

#[test]
fn comparison_rejects_different_problems() {
    let a = bundled("bench1d_beta10").unwrap();
    let b = bundled("bench1d_beta100").unwrap();
    let err = compare(&[a, b]).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_CONFIG);
}

#[test]
fn binary_reports_config_errors_with_exit_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[problem]\ndomain = [[0.0, 1.0]]\nmasses = [1.0]\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_multibec"))
        .arg("solve")
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("`problem.kappa`"), "{stderr}");
    assert!(stderr.contains("`discretization`"), "{stderr}");
    assert!(parse_config(&path).is_err());
}

#[test]
fn binary_solves_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let (_, text) = BUNDLED
        .iter()
        .find(|(n, _)| *n == "bench1d_beta10")
        .unwrap();
    let toml = text.replace(
        "dir = \"results\"",
        &format!("dir = {:?}", dir.path().display().to_string()),
    );
    let path = dir.path().join("beta10.toml");
    std::fs::write(&path, toml).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_multibec"))
        .env("MULTIBEC_THREADS", "2")
        .args([
            "solve",
            path.to_str().unwrap(),
            "--method",
            "reg-rn",
            "--tol",
            "1e-10",
        ])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(EXIT_CONVERGED),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("beta10.json")).unwrap())
            .unwrap();
    assert_eq!(summary["method"], "reg-rn");
    assert!(summary["residual"].as_f64().unwrap() < 1e-10);
}

#[test]
fn unknown_suite_is_a_config_error() {
    assert!(suite_configs("table9").is_err());
}
