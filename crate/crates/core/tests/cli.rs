use std::path::PathBuf;
use std::process::{Command, Output};

use tpa_metrology::cli::{self, RunArgs, RunSpec};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tpa-metrology")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn error_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8(o.stderr.clone()).unwrap();
    let line = text.lines().last().expect("stderr has a report");
    serde_json::from_str(line).expect("error report is JSON")
}

#[test]
fn moments_of_a_coherent_pair() {
    let o = bin(&["moments", "--scenario", "classical", "--alpha1", "1", "--alpha2", "1"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let row = out.lines().find(|l| l.contains(",classical,1,1,")).unwrap();
    let cells: Vec<&str> = row.split(',').collect();
    assert_eq!(cells[5].parse::<f64>().unwrap(), 1.0);
    assert_eq!(cells[6].parse::<f64>().unwrap(), -3.0);
}

#[test]
fn result_rows_follow_the_column_contract() {
    let o = bin(&["error", "--scenario", "single", "--nT", "100,1000", "--r", "0.5", "--eta", "0.9"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], format!("# tpa-metrology {}", env!("CARGO_PKG_VERSION")));
    assert_eq!(lines[1], "# command: error");
    assert!(lines[2].starts_with("# spec: {"));
    assert_eq!(lines[3], "# partial: false");
    assert_eq!(
        lines[4],
        "n_T,eta,scenario,observable,r_opt,seed_split_opt,phase_opt,delta_eps_sq,value0,dvalue,variance,flags"
    );
    assert_eq!(lines.len(), 5 + 6);
    for row in &lines[5..] {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells.len(), 12);
        // 17 significant digits
        assert_eq!(cells[7].split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
    }
}

#[test]
fn output_is_byte_identical_across_runs_and_pool_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("sweep.csv");
    let args = ["sweep", "--scenario", "double", "--observable", "g11", "--nT", "100:1000:3"];
    let a = bin(&[&args[..], &["--jobs", "1"]].concat());
    let b = bin(&[&args[..], &["--jobs", "3"]].concat());
    let c = bin(&[&args[..], &["--out", file.to_str().unwrap()]].concat());
    assert!(a.status.success() && b.status.success() && c.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(std::fs::read(&file).unwrap(), a.stdout);
    assert!(c.stdout.is_empty());
}

#[test]
fn flags_override_config_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "command = \"error\"\nscenario = \"classical\"\nn_T = [100, 200]\neta = 0.5\n").unwrap();
    let o = bin(&["error", "--config", path.to_str().unwrap(), "--nT", "300", "--format", "json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["spec"]["n_T"], serde_json::json!([300.0]));
    assert_eq!(v["spec"]["eta"], serde_json::json!([0.5]));
    assert_eq!(v["table"]["rows"].as_array().unwrap().len(), 3);

    let o = bin(&["sweep", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_specs_exit_2() {
    for args in [
        vec!["optimize", "--nT", "100"],
        vec!["optimize", "--scenario", "quadruple", "--nT", "100"],
        vec!["sweep", "--scenario", "double", "--nT", "1000:100"],
        vec!["scaling", "--scenario", "classical", "--nT", "100,1000"],
        vec!["error", "--scenario", "classical", "--nT", "100", "--eta", "1.5"],
    ] {
        let o = bin(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert_eq!(error_json(&o)["exit_code"], 2);
    }
    let o = bin(&["optimize", "--scenario", "classical", "--nT", "100", "--out", "/nonexistent/dir/x.csv"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn infeasible_physics_exits_3_with_partial_output() {
    let o = bin(&["sweep", "--scenario", "single", "--observable", "G11", "--nT", "300,50", "--r", "3"]);
    assert_eq!(o.status.code(), Some(2), "decreasing grids are rejected first");

    let o = bin(&["sweep", "--scenario", "single", "--observable", "G11", "--nT", "250,300", "--r", "3"]);
    assert!(o.status.success());

    let o = bin(&["sweep", "--scenario", "single", "--observable", "G11", "--nT", "50,300", "--r", "3"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("# partial: true"));
    assert_eq!(error_json(&o)["error"], "Infeasible");
}

#[test]
fn insensitive_points_become_flagged_rows() {
    let o = bin(&["sweep", "--scenario", "vacuum", "--observable", "NRF", "--nT", "100"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let row = out.lines().last().unwrap();
    assert!(row.ends_with(",insensitive"));
    assert!(row.contains(",inf,"));
}

#[test]
fn scaling_reports_fits() {
    let o = bin(&["scaling", "--scenario", "classical", "--observable", "G11", "--nT", "1e2:1e5"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let fit = out.lines().find(|l| l.starts_with("# fit: ")).unwrap();
    let field = |key: &str| -> f64 {
        let tag = format!("{key}=");
        fit.split(' ').find_map(|kv| kv.strip_prefix(tag.as_str())).unwrap().parse().unwrap()
    };
    assert!((field("exponent") - 3.0).abs() < 0.02);
    assert!((field("prefactor") / 4.0 - 1.0).abs() < 0.05);
}

#[test]
fn optimize_with_phase_map() {
    let o = bin(&[
        "optimize", "--scenario", "double", "--observable", "G11", "--nT", "500", "--r", "1", "--phase-map",
        "--theta-points", "6", "--phi-points", "4",
    ]);
    assert!(o.status.success());
    let out = stdout(&o);
    let optimum = out.lines().find(|l| l.starts_with("# optimum: ")).unwrap();
    let phase: f64 = optimum.split(',').nth(6).unwrap().parse().unwrap();
    assert!((phase - std::f64::consts::PI).abs() < 1e-3);
    assert_eq!(out.lines().filter(|l| !l.starts_with('#')).count(), 1 + 24);
}

#[test]
fn quick_validation_suite_passes() {
    let o = bin(&["validate", "--suite", "quick"]);
    assert!(o.status.success());
    assert!(String::from_utf8(o.stderr).unwrap().contains("8/8 oracle agreements"));
}

#[test]
fn shipped_run_files_resolve() {
    let figs = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../figs");
    let mut names: Vec<_> = std::fs::read_dir(&figs).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    let stems: Vec<String> = names.iter().map(|p| p.file_stem().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(stems, ["fig2", "fig3", "fig4", "fig5", "fig6", "table1"]);
    for path in names {
        let text = std::fs::read_to_string(&path).unwrap();
        let command = text.lines().find_map(|l| l.strip_prefix("command = ")).unwrap().trim_matches('"');
        let command = <cli::Command as clap::ValueEnum>::from_str(command, false).unwrap();
        let args = RunArgs { config: Some(path.clone()), ..RunArgs::default() };
        RunSpec::resolve(command, &args).unwrap_or_else(|e| panic!("{}: {}", path.display(), e.message()));
    }
}
