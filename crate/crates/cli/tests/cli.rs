use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_kylebridge"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join("out").join(name)).unwrap()
}

/// `key,value` lookup in a summary file.
fn summary_value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key},")))
        .unwrap_or_else(|| panic!("no {key} in summary"))
        .parse()
        .unwrap()
}

#[test]
fn brownian_kernel_validates() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), "[kernel]\nfamily = \"brownian\"\n", &["validate-kernel"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = read(d.path(), "validation.csv");
    assert!(csv.starts_with("s,z,mass_error,ck_error\n"));
    for line in csv.lines().skip(1) {
        for cell in line.split(',').skip(2) {
            assert!(cell.parse::<f64>().unwrap() < 1e-10);
        }
    }
}

#[test]
fn coarse_fd_kernel_exits_one_with_report() {
    let d = TempDir::new().unwrap();
    let cfg = "[kernel]\nfamily = \"fd\"\nell = 0.0\nspace_steps = 50\ntime_steps = 50\n[grid]\nz_upper = 10.0\n";
    let o = run(d.path(), cfg, &["validate-kernel"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(read(d.path(), "validation.csv").lines().count() > 1);
}

#[test]
fn unknown_key_is_named() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), "[solver]\nepz = 0.5\n", &["sinkhorn"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("epz"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_two() {
    let d = TempDir::new().unwrap();
    // eps missing
    assert_eq!(code(&run(d.path(), "[solver]\ntol = 1e-8\n", &["sinkhorn"])), 2);
    // empty eps list
    let o = run(d.path(), "[solver]\neps_list = []\n", &["sweep"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("eps_list"));
    // unknown system tag
    let o = run(d.path(), "[sim]\nsystem = \"NOPE\"\npaths = 10\nsteps = 100\n", &["simulate"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("sim.system"));
    // wrong value type
    assert_eq!(code(&run(d.path(), "[grid]\nnodes = \"many\"\n", &["sinkhorn"])), 2);
}

#[test]
fn gaussian_sinkhorn_matches_closed_form() {
    let d = TempDir::new().unwrap();
    let cfg = "[grid]\nnodes = 801\n[solver]\neps = 0.5\nverify = true\n";
    let o = run(d.path(), cfg, &["sinkhorn"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let pot = read(d.path(), "potentials.csv");
    assert!(pot.starts_with("node,phi,zeta\n"));
    assert_eq!(pot.lines().count(), 802);
    assert!(read(d.path(), "coupling.csv").starts_with("z,y,f\n"));
    let s = read(d.path(), "sinkhorn_summary.csv");
    assert!(summary_value(&s, "closed_form_error") < 1e-6);
    assert!((summary_value(&s, "plan_corr") - 0.7807764).abs() < 1e-6);
}

#[test]
fn forced_early_stop_reports_residual() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), "[grid]\nnodes = 201\n[solver]\neps = 0.5\ntol = 1e-14\nmax_iter = 10\n", &["sinkhorn"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("residual"), "{}", stderr(&o));
}

#[test]
fn classical_kyle_summary_is_reproducible() {
    let d = TempDir::new().unwrap();
    let cfg = "[sim]\nsystem = \"CLASSICAL_KYLE\"\npaths = 2000\nsteps = 1000\nseed = 7\nz1 = 1.0\n";
    let o = run(d.path(), cfg, &["simulate"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let first: Vec<String> = ["summary.csv", "terminal.csv", "moments.csv"].iter().map(|f| read(d.path(), f)).collect();
    let gap = summary_value(&first[0], "terminal_gap_mean");
    assert!(gap < 0.05, "gap {gap}");

    let o = run(d.path(), cfg, &["simulate", "--threads", "2"]);
    assert_eq!(code(&o), 0);
    for (f, before) in ["summary.csv", "terminal.csv", "moments.csv"].iter().zip(&first) {
        assert_eq!(&read(d.path(), f), before, "{f} changed between runs");
    }

    let o = run(d.path(), cfg, &["simulate", "--seed", "8"]);
    assert_eq!(code(&o), 0);
    assert_ne!(read(d.path(), "terminal.csv"), first[1]);
    assert_eq!(summary_value(&read(d.path(), "summary.csv"), "seed"), 8.0);
}

#[test]
fn constrained_terminal_correlation() {
    let d = TempDir::new().unwrap();
    let cfg = "[grid]\nnodes = 201\n[solver]\neps = 0.5\n[sim]\nsystem = \"CONSTRAINED\"\npaths = 30000\nsteps = 1000\nseed = 11\ndump = true\n";
    let o = run(d.path(), cfg, &["simulate"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let corr = summary_value(&read(d.path(), "summary.csv"), "terminal_corr");
    assert!((corr - 0.781).abs() < 0.01, "corr {corr}");
    let bin = fs::read(d.path().join("out/paths.bin")).unwrap();
    assert_eq!(&bin[..4], b"SBPE");
}

#[test]
fn comparison_writes_equivalence_table() {
    let d = TempDir::new().unwrap();
    let cfg = "[grid]\nnodes = 101\n[solver]\neps = 0.5\n[sim]\nsystem = \"REFERENCE\"\ncompare = \"REFERENCE\"\npaths = 2000\nsteps = 200\n";
    let o = run(d.path(), cfg, &["simulate"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let eq = read(d.path(), "equivalence.csv");
    assert!(eq.starts_with("t,statistic,a,b,stderr,z_score\n"));
    assert_eq!(eq.lines().count(), 1 + 4 * 6);
}

#[test]
fn sweep_flags_failed_rows_and_exits_zero() {
    let d = TempDir::new().unwrap();
    let cfg = "[grid]\nnodes = 401\n[solver]\neps_list = [1.0, 0.5, 0.1, 0.01]\nmax_iter = 40\n";
    let o = run(d.path(), cfg, &["sweep"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"));
    let csv = read(d.path(), "sweep.csv");
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].ends_with(",true") && rows[3].ends_with(",false"));
    assert_eq!(read(d.path(), "sweep_reference.csv").lines().count(), 62);
}

#[test]
fn sweep_values_follow_closed_form() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), "[grid]\nnodes = 401\n[solver]\neps_list = [1.0, 0.5]\n", &["sweep"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = read(d.path(), "sweep.csv");
    for line in csv.lines().skip(1) {
        let c: Vec<f64> = line.split(',').take(3).map(|v| v.parse().unwrap()).collect();
        let (eps, lambda, value) = (c[0], c[1], c[2]);
        // V = (eps/2) log(eps lambda) + lambda, lambda solving lambda^2 + eps lambda = 1
        assert!((lambda * lambda + eps * lambda - 1.0).abs() < 1e-12);
        assert!((value - (0.5 * eps * (eps * lambda).ln() + lambda)).abs() < 1e-3, "{line}");
    }
}

#[test]
fn report_summarises_outputs() {
    let d = TempDir::new().unwrap();
    assert_eq!(code(&run(d.path(), "[kernel]\nfamily = \"killed_brownian\"\nell = 0.0\n", &["validate-kernel"])), 0);
    let o = run(d.path(), "", &["report"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rep = read(d.path(), "report.txt");
    assert!(rep.contains("== validation.csv") && rep.contains("max mass error"));

    let empty = TempDir::new().unwrap();
    assert_eq!(code(&run(empty.path(), "", &["report"])), 1);
}
