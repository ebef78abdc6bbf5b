use std::path::Path;
use std::process::{Command, Output};

use fdr_operator::config::RunConfig;

fn fdrop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdrop")).args(args).output().unwrap()
}

fn small_config(dir: &Path, gradients: Vec<f64>) -> String {
    let mut c = RunConfig::preset("desk-scale").unwrap();
    c.output_dir = dir.join("out");
    c.lattice.size = 200;
    c.basis.n_basis = 10;
    c.estimator.realizations = 100;
    c.estimator.h = 2.5e-8;
    c.estimator.t_eq = 0.0;
    c.grid.gradients = gradients;
    c.grid.affine_rho = Some(fdr_operator::grid::RangeSpec::new(4.0, 10.0, 1.0));
    c.solver.horizon = 1e-3;
    c.solver.snapshot_times = vec![];
    let path = dir.join("run.toml");
    std::fs::write(&path, c.to_toml()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn oracle_pipeline_runs_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), vec![0.0, 5.0]);
    for args in [
        vec!["tabulate", "--config", &config, "--oracle"],
        vec!["fit", "--config", &config],
        vec!["stencil", "--config", &config],
        vec!["compare", "--config", &config],
        vec!["evolve", "--config", &config],
        vec!["reference", "--config", &config],
        vec!["probe-locality", "--config", &config, "--workers", "2"],
        vec!["bias", "--config", &config, "--seed", "5"],
    ] {
        let out = fdrop(&args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let stencil = String::from_utf8(fdrop(&["stencil", "--config", &config]).stdout).unwrap();
    assert!(stencil.contains("K1 -1.000000 2.0"), "{stencil}");
    for f in ["config.toml", "config.source.toml", "table.csv", "fit.json", "trajectory.csv", "bias.json"] {
        assert!(dir.path().join("out").join(f).is_file(), "{f}");
    }
}

#[test]
fn particle_tables_match_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), vec![0.0, 5.0]);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, workers) in [(&a, "1"), (&b, "3")] {
        let o = fdrop(&["tabulate", "--config", &config, "--workers", workers, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(a.join("table.csv")).unwrap(), std::fs::read(b.join("table.csv")).unwrap());
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "output_dir = 3\n").unwrap();
    assert_eq!(fdrop(&["tabulate", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(fdrop(&["tabulate", "--preset", "no-such-preset"]).status.code(), Some(1));
    assert_eq!(fdrop(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(fdrop(&["--help"]).status.code(), Some(0));
}

#[test]
fn rank_deficiency_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), vec![0.0]);
    assert!(fdrop(&["tabulate", "--config", &config, "--oracle"]).status.success());
    let out = fdrop(&["fit", "--config", &config]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rank deficient"));
}
