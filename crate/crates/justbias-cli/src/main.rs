//! `justbias` command line: simulate panels, run the test batteries, and
//! write report bundles.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 estimation
//! failure. `JUSTBIAS_THREADS` caps worker threads; results are identical at
//! any thread count.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use justbias::biastests::{
    indirect_test, placebo_objective, run_variant, sweep_assumption1,
    test_assumption2_controls, test_assumption2_difference, PlaceboOutcome, Variant, WindowSpec,
};
use justbias::csvio;
use justbias::error::{Error, Result};
use justbias::estimation::tsls_fit;
use justbias::mcstudy::{run_mc, GridSpec};
use justbias::pipeline::{design_from_config, init_threads, obtain_panel, run_pipeline};
use justbias::report;
use justbias::runconfig::{PlaceboOutcomeChoice, RunConfig};
use justbias::thinning::{compare_se_traces, thin_biennial};

#[derive(Parser)]
#[command(
    name = "justbias",
    version,
    about = "Shrinking-window tests for justification bias on monthly retirement panels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration file (sectioned key = value); defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the synthetic-world seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "justbias_out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic panel and write panel.csv plus the manifest.
    Simulate(CommonArgs),
    /// Full-sample 2SLS benchmark estimate.
    Estimate(CommonArgs),
    /// Window sweeps under both identification readings.
    Sweep(CommonArgs),
    /// Indirect OLS-versus-IV comparison with objective instruments.
    Indirect(CommonArgs),
    /// Objective-health placebo sweep.
    Placebo(CommonArgs),
    /// Robustness variants of the main sweep.
    Variants(CommonArgs),
    /// Thin to a biennial survey and compare standard errors.
    Thin(CommonArgs),
    /// Monte Carlo grid of the main sweep.
    Mc(CommonArgs),
    /// Everything: the full report bundle.
    Report(CommonArgs),
}

fn load_config(args: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.dgp.seed = seed;
    }
    Ok(cfg)
}

fn ensure_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })
}

fn write(dir: &Path, name: &str, content: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, content).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = load_config(&args)?;
            ensure_out(&args.out)?;
            let data = obtain_panel(&cfg)?;
            write(&args.out, "panel.csv", &csvio::panel_to_csv(&data))?;
            write(&args.out, "manifest.txt", &cfg.serialize())?;
            println!(
                "simulated {} persons, {} rows",
                data.n_individuals(),
                data.rows.len()
            );
        }
        Command::Estimate(args) => {
            let cfg = load_config(&args)?;
            ensure_out(&args.out)?;
            let data = obtain_panel(&cfg)?;
            let spec = design_from_config(&cfg);
            let r = tsls_fit(&spec, &data)?;
            let text = format!(
                "first_stage: {}\nsecond_stage: {}\nfirst_stage_f: {}\nn_obs: {}\nn_individuals: {}\n",
                report::format_cell(r.first_stage_coef, r.first_stage_se),
                report::format_cell(r.endog_coef(), r.endog_se()),
                r.first_stage_f,
                r.n_obs,
                r.n_individuals
            );
            print!("{text}");
            write(&args.out, "estimate_full_sample.txt", &text)?;
        }
        Command::Sweep(args) => {
            let cfg = load_config(&args)?;
            ensure_out(&args.out)?;
            let data = obtain_panel(&cfg)?;
            let spec = design_from_config(&cfg);
            let windows = WindowSpec::new(cfg.widths.clone())?;
            let a1 = sweep_assumption1(&data, &windows, &spec)?;
            write(&args.out, "sweep_assumption1.csv", &report::sweep_table_csv(&a1))?;
            let a2d = test_assumption2_difference(&data, &windows, &spec)?;
            write(
                &args.out,
                "sweep_assumption2_difference.csv",
                &report::sweep_table_csv(&a2d),
            )?;
            let a2c = test_assumption2_controls(&data, &windows, &spec)?;
            write(
                &args.out,
                "sweep_assumption2_controls.csv",
                &report::sweep_table_csv(&a2c),
            )?;
            let trace = if cfg.fine_grid {
                sweep_assumption1(&data, &WindowSpec::fine_grid(), &spec)?
            } else {
                a1.clone()
            };
            write(
                &args.out,
                "trace_assumption1.svg",
                &report::render_trace_svg(&trace, "Retirement effect on reported health"),
            )?;
            println!("assumption1: {} ({})", a1.verdict, a1.rationale);
            println!("assumption2_difference: {} ({})", a2d.verdict, a2d.rationale);
            println!("assumption2_controls: {} ({})", a2c.verdict, a2c.rationale);
        }
        Command::Indirect(args) => {
            let cfg = load_config(&args)?;
            ensure_out(&args.out)?;
            let data = obtain_panel(&cfg)?;
            let r = indirect_test(&data)?;
            let text = report::indirect_report(&r);
            print!("{text}");
            write(&args.out, "indirect_test.txt", &text)?;
        }
        Command::Placebo(args) => {
            let cfg = load_config(&args)?;
            ensure_out(&args.out)?;
            let data = obtain_panel(&cfg)?;
            let spec = design_from_config(&cfg);
            let windows = WindowSpec::new(cfg.widths.clone())?;
            let kind = match cfg.placebo_outcome {
                PlaceboOutcomeChoice::Count => PlaceboOutcome::ConditionCount,
                PlaceboOutcomeChoice::Index => PlaceboOutcome::ContinuousIndex,
            };
            let sweep = placebo_objective(&data, &windows, &spec, kind)?;
            write(&args.out, "placebo_objective.csv", &report::sweep_table_csv(&sweep))?;
            write(
                &args.out,
                "trace_placebo.svg",
                &report::render_trace_svg(&sweep, "Retirement effect on objective health"),
            )?;
            println!("placebo_objective: {} ({})", sweep.verdict, sweep.rationale);
        }
        Command::Variants(args) => {
            let cfg = load_config(&args)?;
            ensure_out(&args.out)?;
            let data = obtain_panel(&cfg)?;
            let spec = design_from_config(&cfg);
            let windows = WindowSpec::new(cfg.widths.clone())?;
            for (variant, name) in [
                (Variant::NoFe, "variant_no_fe.csv"),
                (Variant::PiecewiseSlope, "variant_piecewise_slope.csv"),
                (Variant::BinaryOutcome, "variant_binary_outcome.csv"),
                (Variant::ExtraControls, "variant_extra_controls.csv"),
            ] {
                let sweep = run_variant(&data, &windows, variant, &spec)?;
                write(&args.out, name, &report::sweep_table_csv(&sweep))?;
            }
        }
        Command::Thin(args) => {
            let cfg = load_config(&args)?;
            ensure_out(&args.out)?;
            let data = obtain_panel(&cfg)?;
            let spec = design_from_config(&cfg);
            let windows = WindowSpec::new(cfg.widths.clone())?;
            let thinned = thin_biennial(&data, cfg.thin_seed);
            let traces = compare_se_traces(&data, &thinned, &windows, &spec)?;
            write(&args.out, "thinning.csv", &report::thinning_table_csv(&traces))?;
            println!(
                "kept {} of {} rows after thinning",
                thinned.panel.rows.len(),
                data.rows.len()
            );
        }
        Command::Mc(args) => {
            let cfg = load_config(&args)?;
            ensure_out(&args.out)?;
            let spec = design_from_config(&cfg);
            let windows = WindowSpec::new(cfg.widths.clone())?;
            let grid = GridSpec {
                lambda_values: cfg.mc_lambda_values.clone(),
                sigma_nu_values: cfg.mc_sigma_nu_values.clone(),
                p_c_values: cfg.mc_p_c_values.clone(),
                n_values: cfg.mc_n_values.clone(),
                reps: cfg.mc_reps,
                master_seed: cfg.mc_master_seed,
            };
            let summaries = run_mc(&grid, &windows, &cfg.dgp, &spec)?;
            let mut csv = String::from(
                "lambda,sigma_nu,p_c,n,width_months,mean_estimate,mc_se,rejection_rate,failures,reps\n",
            );
            for s in &summaries {
                for (i, w) in s.widths.iter().enumerate() {
                    csv.push_str(&format!(
                        "{},{},{},{},{w},{},{},{},{},{}\n",
                        s.cell.lambda,
                        s.cell.sigma_nu,
                        s.cell.p_c,
                        s.cell.n,
                        s.mean_estimate[i],
                        s.mc_se[i],
                        s.rejection_rate[i],
                        s.failures[i],
                        s.reps
                    ));
                }
            }
            write(&args.out, "mc_summary.csv", &csv)?;
        }
        Command::Report(args) => {
            let cfg = load_config(&args)?;
            let bundle = run_pipeline(&cfg, &args.out)?;
            for line in &bundle.verdict_lines {
                println!("{line}");
            }
            println!("{} files in {}", bundle.files.len(), bundle.out_dir.display());
        }
    }
    Ok(())
}

fn main() {
    init_threads();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
