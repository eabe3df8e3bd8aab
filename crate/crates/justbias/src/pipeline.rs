//! End-to-end orchestration: simulate or import a panel, run every test
//! battery, and write a deterministic report bundle.

use std::fs;
use std::path::{Path, PathBuf};

use crate::biastests::{
    indirect_test, placebo_objective, run_variant, sweep_assumption1,
    test_assumption2_controls, test_assumption2_difference, PlaceboOutcome, Variant, WindowSpec,
    WindowSweepResult,
};
use crate::csvio;
use crate::error::{Error, Result};
use crate::estimation::{tsls_fit, DesignSpec};
use crate::mcstudy::{run_mc, GridSpec};
use crate::panel::PanelDataset;
use crate::report;
use crate::runconfig::{PlaceboOutcomeChoice, RunConfig};
use crate::synthpanel::simulate_panel;
use crate::thinning::{compare_se_traces, thin_biennial};

/// Cap the global thread pool from `JUSTBIAS_THREADS`. Safe to call more
/// than once; the first caller wins. Results never depend on the thread
/// count, only wall time does.
pub fn init_threads() {
    static INIT: once_cell::sync::OnceCell<()> = once_cell::sync::OnceCell::new();
    INIT.get_or_init(|| {
        if let Ok(v) = std::env::var("JUSTBIAS_THREADS") {
            if let Ok(n) = v.parse::<usize>() {
                if n >= 1 {
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                }
            }
        }
    });
}

/// What a pipeline run produced: file names in write order plus the verdict
/// summary, for callers that want to print it.
#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub verdict_lines: Vec<String>,
}

fn write_file(dir: &Path, name: &str, content: &str, files: &mut Vec<String>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, content).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    files.push(name.to_string());
    Ok(())
}

/// The estimation design a run configuration describes.
pub fn design_from_config(cfg: &RunConfig) -> DesignSpec {
    let mut spec = DesignSpec::assumption1();
    spec.age_poly_order = cfg.age_poly_order;
    spec.fixed_effects = cfg.fixed_effects;
    spec.piecewise_slope = cfg.piecewise_slope;
    spec
}

/// Obtain the panel a run configuration describes: simulate, or import when
/// an import path is set (truth fields then absent).
pub fn obtain_panel(cfg: &RunConfig) -> Result<PanelDataset> {
    match &cfg.import_path {
        Some(path) => csvio::import_panel_csv(Path::new(path)),
        None => simulate_panel(&cfg.dgp),
    }
}

fn verdict_line(name: &str, sweep: &WindowSweepResult) -> String {
    format!("{name}: {} ({})", sweep.verdict, sweep.rationale)
}

/// Run the full pipeline and write the bundle under `out_dir` (created if
/// missing). Everything is deterministic given the configuration, including
/// the SVG bytes.
pub fn run_pipeline(cfg: &RunConfig, out_dir: &Path) -> Result<ReportBundle> {
    init_threads();
    fs::create_dir_all(out_dir).map_err(|e| Error::Io {
        path: out_dir.display().to_string(),
        source: e,
    })?;

    let windows = WindowSpec::new(cfg.widths.clone())?;
    let spec = design_from_config(cfg);
    let data = obtain_panel(cfg)?;

    let mut files = Vec::new();
    let mut verdicts = Vec::new();

    // Manifest first: configuration echo sufficient to reproduce the run.
    let manifest = format!(
        "# justbias {} report manifest\n{}",
        env!("CARGO_PKG_VERSION"),
        cfg.serialize()
    );
    write_file(out_dir, "manifest.txt", &manifest, &mut files)?;

    if cfg.import_path.is_none() {
        write_file(out_dir, "panel.csv", &csvio::panel_to_csv(&data), &mut files)?;
    }

    // Full-sample benchmark fit.
    let full = tsls_fit(&spec, &data);
    let full_txt = match &full {
        Ok(r) => {
            format!(
                "first_stage: {}\nsecond_stage: {}\nfirst_stage_f: {}\nn_obs: {}\n\
                 n_individuals: {}\ndropped_no_variation: {}\ndropped_singletons: {}\n",
                report::format_cell(r.first_stage_coef, r.first_stage_se),
                report::format_cell(r.endog_coef(), r.endog_se()),
                r.first_stage_f,
                r.n_obs,
                r.n_individuals,
                r.n_dropped_no_variation,
                r.n_dropped_singletons
            )
        }
        Err(e) => format!("error: {e}\n"),
    };
    write_file(out_dir, "estimate_full_sample.txt", &full_txt, &mut files)?;

    // Window sweeps.
    let a1 = sweep_assumption1(&data, &windows, &spec)?;
    write_file(
        out_dir,
        "sweep_assumption1.csv",
        &report::sweep_table_csv(&a1),
        &mut files,
    )?;
    verdicts.push(verdict_line("assumption1", &a1));

    let a2d = test_assumption2_difference(&data, &windows, &spec)?;
    write_file(
        out_dir,
        "sweep_assumption2_difference.csv",
        &report::sweep_table_csv(&a2d),
        &mut files,
    )?;
    verdicts.push(verdict_line("assumption2_difference", &a2d));

    let a2c = test_assumption2_controls(&data, &windows, &spec)?;
    write_file(
        out_dir,
        "sweep_assumption2_controls.csv",
        &report::sweep_table_csv(&a2c),
        &mut files,
    )?;
    verdicts.push(verdict_line("assumption2_controls", &a2c));

    let placebo_kind = match cfg.placebo_outcome {
        PlaceboOutcomeChoice::Count => PlaceboOutcome::ConditionCount,
        PlaceboOutcomeChoice::Index => PlaceboOutcome::ContinuousIndex,
    };
    let placebo = placebo_objective(&data, &windows, &spec, placebo_kind)?;
    write_file(
        out_dir,
        "placebo_objective.csv",
        &report::sweep_table_csv(&placebo),
        &mut files,
    )?;
    verdicts.push(format!(
        "placebo_objective: {} ({})",
        placebo.verdict, placebo.rationale
    ));

    if cfg.run_variants {
        for (variant, name) in [
            (Variant::NoFe, "variant_no_fe.csv"),
            (Variant::PiecewiseSlope, "variant_piecewise_slope.csv"),
            (Variant::BinaryOutcome, "variant_binary_outcome.csv"),
            (Variant::ExtraControls, "variant_extra_controls.csv"),
        ] {
            let sweep = run_variant(&data, &windows, variant, &spec)?;
            write_file(out_dir, name, &report::sweep_table_csv(&sweep), &mut files)?;
        }
    }

    // Indirect comparison; failure is recorded, not fatal.
    let indirect_txt = match indirect_test(&data) {
        Ok(r) => {
            verdicts.push(format!("indirect_test: {}", r.dominance));
            report::indirect_report(&r)
        }
        Err(e) => format!("error: {e}\n"),
    };
    write_file(out_dir, "indirect_test.txt", &indirect_txt, &mut files)?;

    if cfg.run_thinning {
        let thinned = thin_biennial(&data, cfg.thin_seed);
        let traces = compare_se_traces(&data, &thinned, &windows, &spec)?;
        write_file(
            out_dir,
            "thinning.csv",
            &report::thinning_table_csv(&traces),
            &mut files,
        )?;
    }

    if cfg.run_mc {
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
            "lambda,sigma_nu,p_c,n,width_months,mean_estimate,mc_se,rejection_rate,\
             failures,reps\n",
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
        write_file(out_dir, "mc_summary.csv", &csv, &mut files)?;
    }

    // Trace charts.
    let trace_sweep;
    let a1_trace = if cfg.fine_grid {
        trace_sweep = sweep_assumption1(&data, &WindowSpec::fine_grid(), &spec)?;
        &trace_sweep
    } else {
        &a1
    };
    write_file(
        out_dir,
        "trace_assumption1.svg",
        &report::render_trace_svg(a1_trace, "Retirement effect on reported health"),
        &mut files,
    )?;
    write_file(
        out_dir,
        "trace_assumption2_difference.svg",
        &report::render_trace_svg(&a2d, "Effect on reported minus objective health"),
        &mut files,
    )?;
    write_file(
        out_dir,
        "trace_placebo.svg",
        &report::render_trace_svg(&placebo, "Retirement effect on objective health"),
        &mut files,
    )?;

    let verdict_text = verdicts.join("\n") + "\n";
    write_file(out_dir, "verdicts.txt", &verdict_text, &mut files)?;

    Ok(ReportBundle {
        out_dir: out_dir.to_path_buf(),
        files,
        verdict_lines: verdicts,
    })
}

/// A small-world configuration for fast smoke runs and examples.
pub fn smoke_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.dgp.n_individuals = 400;
    cfg.dgp.complier_jump = 0.3;
    cfg.widths = vec![10, 20, 30, 40, 50, 60];
    cfg.fine_grid = false;
    cfg.run_mc = false;
    cfg
}
