//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage or validation problems (bad flags,
//! malformed configs, failed self-checks), 2 on runtime failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use rand::Rng;

use crate::algorithms::{
    drbsgt_step, init_swarm, Algorithm, InitRule, StepSchedule, SwarmRng,
};
use crate::blocks::{enumerate_block_error_moments, make_partition};
use crate::error::{Error, Result};
use crate::harness::{
    compare_algorithms, render_comparison_csv, render_comparison_summary, run_experiment,
    ExperimentConfig,
};
use crate::network::{build_mixing_matrix, NetworkGraph, WeightRule};
use crate::objectives::{make_quadratic_oracle, spectrum_linear, QuadraticConfig};
use crate::rng::{derive_stream, StreamPurpose};

#[derive(Parser)]
#[command(
    name = "blockgt",
    version,
    about = "Randomized block-coordinate gradient tracking over simulated agent networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file.
    Run(RunArgs),
    /// Run the algorithms listed in the config's [compare] section against
    /// one shared problem at an equal block-evaluation budget.
    Compare(RunArgs),
    /// Print the stepsize-schedule validity report for a config.
    Validate(ConfigArg),
    /// Run the built-in identity and enumeration checks.
    Selftest {
        /// Suppress per-check output.
        #[arg(long)]
        quiet: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the sample-path count.
    #[arg(long)]
    paths: Option<usize>,
    /// Suppress the summary printout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
}

/// Entry point used by the `blockgt` binary.
pub fn main(argv: Vec<String>) -> ExitCode {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(classify(&err))
        }
    }
}

fn classify(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) | Error::Parse { .. } => 1,
        _ => 2,
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let config = load_config(&args)?;
            let result = run_experiment(&config)?;
            if !args.quiet {
                if let Some(dir) = &config.output.dir {
                    println!("outputs written to {}", dir.display());
                }
                print!("{}", summary_text(&result));
            }
            Ok(())
        }
        Command::Compare(args) => {
            let base = load_config(&args)?;
            let section = base.compare.clone().ok_or_else(|| {
                Error::Config("compare requires a [compare] section in the config".into())
            })?;
            let configs: Vec<ExperimentConfig> = section
                .algorithms
                .iter()
                .map(|&algorithm| {
                    let mut cfg = base.clone();
                    cfg.algorithm = algorithm;
                    cfg.compare = None;
                    cfg.output.dir = None;
                    cfg
                })
                .collect();
            let comparison = compare_algorithms(&configs, section.budget)?;
            if let Some(dir) = &base.output.dir {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("comparison.csv"), render_comparison_csv(&comparison))?;
                std::fs::write(
                    dir.join("comparison_summary.txt"),
                    render_comparison_summary(&comparison),
                )?;
                for entry in &comparison.entries {
                    entry.result.write_outputs(&dir.join(entry.algorithm.name()))?;
                }
            }
            if !args.quiet {
                print!("{}", render_comparison_summary(&comparison));
            }
            Ok(())
        }
        Command::Validate(args) => {
            let config = ExperimentConfig::from_toml_file(&args.config)?;
            let built = crate::harness::build_experiment(&config)?;
            println!("measured rho = {}", built.mixing.rho());
            match &built.schedule_report {
                Some(report) => println!("{report}"),
                None => println!("constant schedule: rate conditions not applicable"),
            }
            Ok(())
        }
        Command::Selftest { quiet } => selftest(quiet),
    }
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_toml_file(&args.config)?;
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(paths) = args.paths {
        config.paths = paths;
    }
    if let Some(out) = &args.out {
        config.output.dir = Some(out.clone());
    }
    config.validate()?;
    Ok(config)
}

fn summary_text(result: &crate::harness::RunResult) -> String {
    let mut text = String::new();
    use std::fmt::Write;
    if let Some(last) = result.aggregate.last() {
        let _ = writeln!(
            text,
            "final k = {}: err1 {}  err2 {}  objective {}",
            last.iter, last.err1.mean, last.err2.mean, last.objective.mean
        );
    }
    let _ = writeln!(
        text,
        "paths {} ({} diverged), monitors {}",
        result.config.paths,
        result.failures.len(),
        if !result.monitors.enabled {
            "disabled"
        } else if result.monitors.clean() {
            "clean"
        } else {
            "VIOLATED"
        }
    );
    text
}

fn check(quiet: bool, name: &str, ok: bool, detail: String) -> Result<()> {
    if !quiet {
        println!("[{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("selftest failed: {name} ({detail})")))
    }
}

/// Built-in checks: block-error moment enumeration, embedding completeness,
/// and a short tracked run with all identity monitors on.
fn selftest(quiet: bool) -> Result<()> {
    // Block-error moments by exact enumeration.
    let mut rng = derive_stream(20_240_001, 0, 0, StreamPurpose::Probe);
    let mut worst_mean = 0.0_f64;
    let mut worst_sq = 0.0_f64;
    for _ in 0..50 {
        let g = DVector::from_fn(12, |_, _| rng.gen_range(-5.0..5.0));
        for b in [1usize, 2, 3, 4, 6, 12] {
            let p = make_partition(12, b)?;
            let (mean, mean_sq) = enumerate_block_error_moments(&g, &p)?;
            let expect = (b as f64 - 1.0) * g.norm_squared();
            worst_mean = worst_mean.max(mean.norm());
            worst_sq = worst_sq.max((mean_sq - expect).abs());
        }
    }
    check(
        quiet,
        "block-error moments",
        worst_mean <= 1e-12 && worst_sq <= 1e-12,
        format!("max |mean| {worst_mean:.2e}, max second-moment gap {worst_sq:.2e}"),
    )?;

    // Embedding completeness: blocks reassemble the vector, norms add up.
    let mut worst_embed = 0.0_f64;
    for _ in 0..50 {
        let n = rng.gen_range(1..=24);
        let b = rng.gen_range(1..=n);
        let p = make_partition(n, b)?;
        let x = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
        let mut rebuilt = DVector::zeros(n);
        let mut sq = 0.0;
        for l in 0..b {
            let range = p.range(l);
            let vals = DVector::from_iterator(range.len(), range.clone().map(|i| x[i]));
            let em = crate::blocks::embed_block(&p, l, &vals)?;
            sq += em.norm_squared();
            rebuilt += em;
        }
        worst_embed = worst_embed
            .max((rebuilt - &x).norm())
            .max((sq - x.norm_squared()).abs() / x.norm_squared().max(1.0));
    }
    check(
        quiet,
        "block embedding",
        worst_embed <= 1e-12,
        format!("max defect {worst_embed:.2e}"),
    )?;

    // Tracked smoke run.
    let oracle = make_quadratic_oracle(&QuadraticConfig {
        agents: 5,
        dim: 20,
        spectrum: spectrum_linear(1.0, 4.0, 20),
        noise: 0.1,
        center_scale: 1.0,
        seed: 99,
    })?;
    let partition = make_partition(20, 4)?;
    let w = build_mixing_matrix(&NetworkGraph::ring(5)?, WeightRule::Metropolis)?;
    let schedule = StepSchedule::diminishing(8.5, 500.0)?;
    let mut swarm_rng = SwarmRng::for_path(99, 0, 5);
    let mut state = init_swarm(Algorithm::Drbsgt, &oracle, &partition, InitRule::Gaussian, &mut swarm_rng)?;
    let mut worst_tracking = crate::algorithms::tracking_residual(&state, &partition);
    for _ in 0..200 {
        drbsgt_step(&mut state, &w, &schedule, &oracle, &partition, &mut swarm_rng)?;
        worst_tracking = worst_tracking.max(crate::algorithms::tracking_residual(&state, &partition));
    }
    check(
        quiet,
        "tracking identity",
        worst_tracking <= 1e-9,
        format!("max normalized residual {worst_tracking:.2e} over 200 steps"),
    )?;
    Ok(())
}
