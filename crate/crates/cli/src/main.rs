use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fdr_operator::model::FitOptions;
use fdr_operator::pipeline::{self, PipelineError, RunContext, FIT_FILE, TABLE_FILE};

#[derive(Parser)]
#[command(name = "fdrop", version, about = "Measure, fit and evolve with fluctuation-derived diffusion operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset: paper-scale, paper-scale-unconstrained, desk-scale, fig4-left, fig4-right.
    #[arg(long)]
    preset: Option<String>,
    /// Overrides estimator.master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate operator entries over the configured grid.
    Tabulate {
        #[command(flatten)]
        run: RunArgs,
        /// Exact quadrature instead of particle simulation.
        #[arg(long)]
        oracle: bool,
    },
    /// Fit the quadratic surrogate to a table.
    Fit {
        #[command(flatten)]
        run: RunArgs,
        /// Table CSV (default: <out>/table.csv).
        #[arg(long)]
        table: Option<PathBuf>,
        /// Force the mass constraint on or off, overriding the config.
        #[arg(long)]
        constrained: Option<bool>,
        /// Inverse-variance weighting, overriding the config.
        #[arg(long)]
        weighted: Option<bool>,
    },
    /// Normalized stencils of a fit at a reference density.
    Stencil {
        #[command(flatten)]
        run: RunArgs,
        /// Fit file (default: <out>/fit.json)
        #[arg(long)]
        fit: Option<PathBuf>,
        /// Overrides fit.rho_ref.
        #[arg(long)]
        rho_ref: Option<f64>,
    },
    /// Evolve the configured initial profile with a fitted operator.
    Evolve {
        #[command(flatten)]
        run: RunArgs,
        /// Fit file (default: <out>/fit.json)
        #[arg(long)]
        fit: Option<PathBuf>,
    },
    /// Evolve the configured initial profile with the exact dynamics.
    Reference {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Fitted and exact dynamics side by side, with error metrics.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Fit file (default: <out>/fit.json)
        #[arg(long)]
        fit: Option<PathBuf>,
    },
    /// Entries between hats with disjoint supports.
    ProbeLocality {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Row estimates at h and h/2 from the same random streams.
    Bias {
        #[command(flatten)]
        run: RunArgs,
    },
}

fn context(run: &RunArgs) -> Result<RunContext, PipelineError> {
    let mut ctx = match (&run.config, &run.preset) {
        (Some(path), _) => RunContext::from_file(path)?,
        (None, Some(name)) => RunContext::from_preset(name)?,
        (None, None) => RunContext::from_preset("desk-scale")?,
    };
    if let Some(seed) = run.seed {
        ctx.config.estimator.master_seed = seed;
    }
    if let Some(out) = &run.out {
        ctx.config.output_dir = out.clone();
    }
    if let Some(n) = run.workers {
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    Ok(ctx)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Tabulate { run, oracle } => {
            let ctx = context(&run)?;
            let (path, table) = pipeline::cmd_tabulate(&ctx, oracle)?;
            println!("wrote {} rows to {}", table.rows.len(), path.display());
        }
        Command::Fit { run, table, constrained, weighted } => {
            let ctx = context(&run)?;
            let table = table.unwrap_or_else(|| ctx.output_dir().join(TABLE_FILE));
            let defaults = ctx.config.fit_options();
            let options = FitOptions {
                constrained: constrained.unwrap_or(defaults.constrained),
                weighted: weighted.unwrap_or(defaults.weighted),
            };
            let fit = pipeline::cmd_fit(&table, options, ctx.output_dir())?;
            println!(
                "fit ({}constrained) residual rms sub {:.4e} diag {:.4e} super {:.4e}",
                if fit.constrained { "" } else { "un" },
                fit.residual_rms[0],
                fit.residual_rms[1],
                fit.residual_rms[2]
            );
        }
        Command::Stencil { run, fit, rho_ref } => {
            let ctx = context(&run)?;
            let fit = fit.unwrap_or_else(|| ctx.output_dir().join(FIT_FILE));
            let r = pipeline::cmd_stencil(&fit, rho_ref.unwrap_or(ctx.config.fit.rho_ref), ctx.output_dir())?;
            println!("rho_ref {}", r.rho_ref);
            println!("K1 {:.6} {:.6} {:.6}", r.k1[0], r.k1[1], r.k1[2]);
            println!("K2 {:.6} {:.6} {:.6}", r.k2[0], r.k2[1], r.k2[2]);
        }
        Command::Evolve { run, fit } => {
            let ctx = context(&run)?;
            let fit = fit.unwrap_or_else(|| ctx.output_dir().join(FIT_FILE));
            let traj = pipeline::cmd_evolve(&ctx, &fit)?;
            report_run(traj.steps, traj.extrapolated, &traj.warnings);
        }
        Command::Reference { run } => {
            let ctx = context(&run)?;
            let traj = pipeline::cmd_reference(&ctx)?;
            report_run(traj.steps, traj.extrapolated, &traj.warnings);
        }
        Command::Compare { run, fit } => {
            let ctx = context(&run)?;
            let fit = fit.unwrap_or_else(|| ctx.output_dir().join(FIT_FILE));
            let (_, s) = pipeline::cmd_compare(&ctx, &fit)?;
            report_run(s.steps, s.extrapolated, &s.warnings);
            println!("max rel L2 {:.4e}, max rel Linf {:.4e}", s.max_rel_l2, s.max_rel_linf);
        }
        Command::ProbeLocality { run } => {
            let ctx = context(&run)?;
            for e in pipeline::cmd_probe_locality(&ctx)?.entries {
                println!(
                    "separation {}: {:.4e} +- {:.4e} ({})",
                    e.separation,
                    e.value,
                    e.stderr,
                    if e.consistent_with_zero { "consistent with zero" } else { "NOT consistent with zero" }
                );
            }
        }
        Command::Bias { run } => {
            let ctx = context(&run)?;
            let r = pipeline::cmd_bias(&ctx)?;
            println!("h = {:e}: full - half = {:?} (tolerance {:?})", r.h, r.difference, r.tolerance);
            println!("consistent: {}", r.consistent);
            if r.outside_small_h {
                println!("warning: h is not small against the cell diffusion time");
            }
        }
    }
    Ok(())
}

fn report_run(steps: usize, extrapolated: bool, warnings: &[String]) {
    println!("{steps} steps");
    if extrapolated {
        println!("note: operator evaluated outside the tabulated region");
    }
    for w in warnings {
        println!("warning: {w}");
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
