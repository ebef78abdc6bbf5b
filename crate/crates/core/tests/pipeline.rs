use std::fs;
use std::path::Path;

use fdr_operator::config::RunConfig;
use fdr_operator::model::FitOptions;
use fdr_operator::pipeline::*;
use fdr_operator::table::TableError;

fn small_context(out: &Path) -> RunContext {
    let mut config = RunConfig::preset("desk-scale").unwrap();
    config.output_dir = out.to_path_buf();
    config.lattice.size = 200;
    config.basis.n_basis = 10;
    config.estimator.realizations = 200;
    config.estimator.h = 2.5e-8;
    config.estimator.t_eq = 0.0;
    config.solver.horizon = 1e-3;
    config.solver.snapshot_times = vec![5e-4];
    RunContext { config, source_text: None }
}

#[test]
fn particle_tables_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_context(&dir.path().join("a"));
    let b = small_context(&dir.path().join("b"));
    let (pa, ta) = cmd_tabulate(&a, false).unwrap();
    let (pb, _) = cmd_tabulate(&b, false).unwrap();
    assert_eq!(ta.rows.len(), 9);
    assert_eq!(fs::read(pa).unwrap(), fs::read(pb).unwrap());
    for d in [&a, &b] {
        let saved = RunConfig::load(&d.output_dir().join("config.toml")).unwrap();
        assert_eq!(saved, d.config);
    }
}

#[test]
fn oracle_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = small_context(dir.path());
    let (table_path, _) = cmd_tabulate(&ctx, true).unwrap();
    let options = FitOptions { constrained: true, weighted: false };
    let fit = cmd_fit(&table_path, options, dir.path()).unwrap();
    assert!(fit.constrained);
    let fit_path = dir.path().join(FIT_FILE);

    let stencil = cmd_stencil(&fit_path, 7.0, dir.path()).unwrap();
    assert!((stencil.k1[1] - 2.0).abs() < 0.02, "{:?}", stencil.k1);

    let (_, summary) = cmd_compare(&ctx, &fit_path).unwrap();
    assert!(summary.max_rel_linf < 0.05, "{summary:?}");
    assert!(summary.relative_mass_drift_fitted < 1e-10);
    let traj = cmd_evolve(&ctx, &fit_path).unwrap();
    let reference = cmd_reference(&ctx).unwrap();
    assert_eq!(traj.snapshots.len(), 3);
    assert_eq!(reference.snapshots.len(), 3);

    for file in [
        "config.toml",
        "table.csv",
        "table.meta.json",
        "fit.json",
        "stencil.json",
        "trajectory.csv",
        "errors.csv",
        "compare_summary.json",
        "trajectory_fitted.csv",
        "trajectory_reference.csv",
    ] {
        assert!(dir.path().join(file).is_file(), "{file} missing");
    }
    let errors = fs::read_to_string(dir.path().join("errors.csv")).unwrap();
    assert!(errors.starts_with("time,rel_L2,rel_Linf,mass_fitted,mass_reference\n"));
    let trajectory = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(trajectory.starts_with("time,node_index,x,rho_fitted,rho_reference\n"));
    assert_eq!(trajectory.lines().count(), 1 + 3 * 10);
}

#[test]
fn trajectories_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = small_context(dir.path());
    let (table_path, _) = cmd_tabulate(&ctx, true).unwrap();
    cmd_fit(&table_path, FitOptions { constrained: true, weighted: false }, dir.path()).unwrap();
    let fit_path = dir.path().join(FIT_FILE);
    cmd_compare(&ctx, &fit_path).unwrap();
    let first = fs::read(dir.path().join("trajectory.csv")).unwrap();
    cmd_compare(&ctx, &fit_path).unwrap();
    assert_eq!(first, fs::read(dir.path().join("trajectory.csv")).unwrap());
}

#[test]
fn probes_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = small_context(dir.path());
    let report = cmd_probe_locality(&ctx).unwrap();
    assert_eq!(report.entries.len(), 2);
    assert_eq!(report.entries[0].separation, 2);
    cmd_bias(&ctx).unwrap();
    assert!(dir.path().join("locality.json").is_file());
    assert!(dir.path().join("bias.json").is_file());
}

#[test]
fn source_config_is_kept_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_context(dir.path()).config;
    config.output_dir = dir.path().join("run");
    let text = format!("# hand written\n{}", config.to_toml());
    let path = dir.path().join("run.toml");
    fs::write(&path, &text).unwrap();
    let ctx = RunContext::from_file(&path).unwrap();
    cmd_tabulate(&ctx, true).unwrap();
    assert_eq!(fs::read_to_string(dir.path().join("run/config.source.toml")).unwrap(), text);
}

#[test]
fn malformed_inputs_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("bad.csv");
    fs::write(&table, "profile_index,rho\n0,4.0\n").unwrap();
    let err = cmd_fit(&table, FitOptions::default(), dir.path()).unwrap_err();
    assert!(matches!(err, PipelineError::Table(TableError::Schema { .. })), "{err}");
    assert_eq!(err.exit_code(), 1);

    let config = dir.path().join("bad.toml");
    fs::write(&config, "output_dir = \"x\"\n[lattice]\nsize = 10\nwat = 1\n").unwrap();
    let err = RunContext::from_file(&config).unwrap_err();
    assert_eq!(err.exit_code(), 1);

    assert_eq!(RunContext::from_preset("nope").unwrap_err().exit_code(), 1);
}

#[test]
fn rank_deficient_table_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let mut ctx = small_context(dir.path());
    ctx.config.grid.gradients = vec![0.0];
    ctx.config.grid.affine_rho = Some(fdr_operator::grid::RangeSpec::new(4.0, 10.0, 1.0));
    let (table_path, _) = cmd_tabulate(&ctx, true).unwrap();
    let err = cmd_fit(&table_path, FitOptions { constrained: true, weighted: false }, dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("grad_rho"), "{err}");
}
