//! Monte Carlo harness: size, power, bias recovery, and the asymptotic-limit
//! check for the naive OLS of retirement on reported health.
//!
//! Replications run on independent seed streams split from a master seed, so
//! cell results are identical under any parallel schedule. Failed
//! replications (singular narrow windows) are excluded from rate
//! denominators and reported separately.

use rayon::prelude::*;

use crate::biastests::{sweep_assumption1, WindowSpec};
use crate::error::{Error, EstimError, Result};
use crate::estimation::{lstsq, normal_critical};
use crate::panel::PanelDataset;
use crate::seeds::child_seed;
use crate::synthpanel::{simulate_panel, DgpConfig};
use nalgebra::{DMatrix, DVector};

/// Grid of worlds to replicate: every combination of the listed values.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// Injected bias values in raw health-index units.
    pub lambda_values: Vec<f64>,
    pub sigma_nu_values: Vec<f64>,
    pub p_c_values: Vec<f64>,
    pub n_values: Vec<usize>,
    pub reps: usize,
    pub master_seed: u64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_values.is_empty()
            || self.sigma_nu_values.is_empty()
            || self.p_c_values.is_empty()
            || self.n_values.is_empty()
        {
            return Err(Error::Config("grid value lists must be non-empty".into()));
        }
        if self.reps == 0 {
            return Err(Error::Config("reps must be positive".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for &lambda in &self.lambda_values {
            for &sigma_nu in &self.sigma_nu_values {
                for &p_c in &self.p_c_values {
                    for &n in &self.n_values {
                        out.push(CellKey {
                            lambda,
                            sigma_nu,
                            p_c,
                            n,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellKey {
    pub lambda: f64,
    pub sigma_nu: f64,
    pub p_c: f64,
    pub n: usize,
}

/// Replication-level sweep estimates aggregated per cell.
#[derive(Debug, Clone)]
pub struct McSummary {
    pub cell: CellKey,
    pub reps: usize,
    pub widths: Vec<u32>,
    /// Successful estimates per width, replication order.
    pub estimates: Vec<Vec<f64>>,
    pub ses: Vec<Vec<f64>>,
    /// Count of failed fits per width.
    pub failures: Vec<usize>,
    /// Share of |t| above the two-sided 5% critical value, per width.
    pub rejection_rate: Vec<f64>,
    pub mean_estimate: Vec<f64>,
    /// Monte Carlo SE of each width's mean estimate.
    pub mc_se: Vec<f64>,
    /// Per-rep (narrowest-window estimate minus lambda over that rep's
    /// reported-health SD): the bias against the standardized target.
    pub narrow_bias: Vec<f64>,
}

impl McSummary {
    pub fn mean_narrow_bias(&self) -> f64 {
        mean(&self.narrow_bias)
    }

    pub fn narrow_bias_mc_se(&self) -> f64 {
        sd(&self.narrow_bias) / (self.narrow_bias.len() as f64).sqrt()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

/// Share of |estimate/se| above the two-sided critical value at `level`.
pub fn rejection_rate(estimates: &[f64], ses: &[f64], level: f64) -> Result<f64> {
    if estimates.is_empty() || estimates.len() != ses.len() {
        return Err(Error::Config(
            "rejection_rate needs non-empty aligned arrays".into(),
        ));
    }
    let crit = normal_critical(level);
    let hits = estimates
        .iter()
        .zip(ses)
        .filter(|(e, s)| (*e / *s).abs() > crit)
        .count();
    Ok(hits as f64 / estimates.len() as f64)
}

/// Run the main sweep for every cell of the grid.
///
/// Per replication: derive a seed, simulate the cell's world, run the sweep,
/// and collect the endogenous coefficient and SE per width. The narrowest
/// width also records the gap to the standardized injected bias
/// `lambda / sd(reported health)` computed on that replication's sample.
pub fn run_mc(
    grid: &GridSpec,
    windows: &WindowSpec,
    base: &DgpConfig,
    spec: &crate::estimation::DesignSpec,
) -> Result<Vec<McSummary>> {
    grid.validate()?;
    spec.validate()?;
    let cells = grid.cells();
    let mut out = Vec::with_capacity(cells.len());
    for (cell_idx, cell) in cells.iter().enumerate() {
        let mut cfg = base.clone();
        cfg.lambda = cell.lambda;
        cfg.sigma_nu = cell.sigma_nu;
        cfg.complier_jump = cell.p_c;
        cfg.n_individuals = cell.n;
        cfg.validate()?;

        type RepOutcome = (Vec<Option<(f64, f64)>>, Option<f64>);
        let reps: Vec<RepOutcome> = (0..grid.reps)
            .into_par_iter()
            .map(|rep| {
                let mut world = cfg.clone();
                world.seed =
                    child_seed(grid.master_seed, (cell_idx * grid.reps + rep) as u64);
                let data = simulate_panel(&world).expect("validated config");
                let sweep = sweep_assumption1(&data, windows, spec).expect("validated spec");
                let per_width: Vec<Option<(f64, f64)>> = sweep
                    .entries
                    .iter()
                    .map(|e| e.as_ref().ok().map(|r| (r.endog_coef(), r.endog_se())))
                    .collect();
                let narrow_bias = per_width[0].map(|(est, _)| {
                    let hs: Vec<f64> = data.rows.iter().map(|r| r.h_subjective).collect();
                    est - world.lambda / sd(&hs)
                });
                (per_width, narrow_bias)
            })
            .collect();

        let n_widths = windows.widths_months.len();
        let mut estimates = vec![Vec::new(); n_widths];
        let mut ses = vec![Vec::new(); n_widths];
        let mut failures = vec![0usize; n_widths];
        let mut narrow_bias = Vec::new();
        for (per_width, nb) in &reps {
            for (w, cell_result) in per_width.iter().enumerate() {
                match cell_result {
                    Some((est, se)) => {
                        estimates[w].push(*est);
                        ses[w].push(*se);
                    }
                    None => failures[w] += 1,
                }
            }
            if let Some(nb) = nb {
                narrow_bias.push(*nb);
            }
        }
        let rejection: Vec<f64> = (0..n_widths)
            .map(|w| {
                if estimates[w].is_empty() {
                    f64::NAN
                } else {
                    rejection_rate(&estimates[w], &ses[w], 0.05).unwrap()
                }
            })
            .collect();
        let mean_estimate: Vec<f64> = estimates
            .iter()
            .map(|e| if e.is_empty() { f64::NAN } else { mean(e) })
            .collect();
        let mc_se: Vec<f64> = estimates
            .iter()
            .map(|e| {
                if e.len() < 2 {
                    f64::NAN
                } else {
                    sd(e) / (e.len() as f64).sqrt()
                }
            })
            .collect();

        out.push(McSummary {
            cell: *cell,
            reps: grid.reps,
            widths: windows.widths_months.clone(),
            estimates,
            ses,
            failures,
            rejection_rate: rejection,
            mean_estimate,
            mc_se,
            narrow_bias,
        });
    }
    Ok(out)
}

/// Second moments of the retirement/health joint distribution, measured on a
/// large simulated panel. These moments do not depend on the reporting
/// parameters (measurement error and bias touch only reported health), so
/// one measurement serves a whole (sigma_nu, lambda) grid.
#[derive(Debug, Clone, Copy)]
pub struct RetirementHealthMoments {
    pub var_h: f64,
    pub var_r: f64,
    pub cov_hr: f64,
    /// Linear projection coefficient of retirement on latent health.
    pub theta_proj: f64,
    /// Residual variance of that projection.
    pub var_e: f64,
}

impl RetirementHealthMoments {
    pub fn measure(cfg: &DgpConfig) -> Result<Self> {
        let data = simulate_panel(cfg)?;
        let h: Vec<f64> = data.rows.iter().map(|r| r.h_true.unwrap()).collect();
        let r: Vec<f64> = data.rows.iter().map(|r| r.retired as f64).collect();
        let (mh, mr) = (mean(&h), mean(&r));
        let n = h.len() as f64;
        let var_h = h.iter().map(|v| (v - mh) * (v - mh)).sum::<f64>() / (n - 1.0);
        let var_r = r.iter().map(|v| (v - mr) * (v - mr)).sum::<f64>() / (n - 1.0);
        let cov_hr = h
            .iter()
            .zip(&r)
            .map(|(a, b)| (a - mh) * (b - mr))
            .sum::<f64>()
            / (n - 1.0);
        let theta_proj = cov_hr / var_h;
        let var_e = var_r - theta_proj * theta_proj * var_h;
        Ok(Self {
            var_h,
            var_r,
            cov_hr,
            theta_proj,
            var_e,
        })
    }
}

/// Variance components entering the asymptotic-limit ratio. The convention
/// in the usual derivation treats latent health as orthogonal to the
/// reporting bias (`cov_h_eps = 0`); the state-dependent construction here
/// makes that cross-moment nonzero mechanically, so it is carried explicitly
/// and the ratio reduces to the textbook form when it vanishes.
#[derive(Debug, Clone, Copy)]
pub struct PlimComponents {
    pub theta_h: f64,
    pub var_h: f64,
    pub var_nu: f64,
    pub var_eps: f64,
    pub cov_e_eps: f64,
    pub cov_h_eps: f64,
}

impl PlimComponents {
    /// Components for a reporting cell (lambda, sigma_nu) given measured
    /// retirement/health moments: the bias term is `lambda * retired`, so
    /// its moments follow from the retirement moments.
    pub fn from_moments(m: &RetirementHealthMoments, lambda: f64, sigma_nu: f64) -> Self {
        Self {
            theta_h: m.theta_proj,
            var_h: m.var_h,
            var_nu: sigma_nu * sigma_nu,
            var_eps: lambda * lambda * m.var_r,
            cov_e_eps: lambda * m.var_e,
            cov_h_eps: lambda * m.cov_hr,
        }
    }
}

/// The asymptotic limit of the naive OLS slope of retirement on reported
/// health: (θ·Var(H) + Cov(e,ε) + θ·Cov(H,ε)) over
/// (Var(H) + Var(ν) + Var(ε) + 2·Cov(H,ε)).
pub fn ols_plim_target(c: &PlimComponents) -> Result<f64> {
    let num = c.theta_h * c.var_h + c.cov_e_eps + c.theta_h * c.cov_h_eps;
    let den = c.var_h + c.var_nu + c.var_eps + 2.0 * c.cov_h_eps;
    if den == 0.0 {
        return Err(Error::Config("zero denominator in plim target".into()));
    }
    Ok(num / den)
}

/// Exact variance of latent health over the row population when the health
/// path does not depend on retirement (no slope shift, no jump, no random
/// walk): the entry-age and wave distributions are discrete uniform, so the
/// age-trend moments are a finite sum.
pub fn analytic_var_h(cfg: &DgpConfig) -> Option<f64> {
    if cfg.post_ret_slope_shift != 0.0 || cfg.level_jump != 0.0 || cfg.random_walk_sd != 0.0 {
        return None;
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut count = 0.0;
    for entry in cfg.entry_age_min..=cfg.entry_age_max {
        for t in 0..cfg.months_observed {
            let x = (entry + t as i32) as f64;
            let trend = cfg.age_slope * x + cfg.age_curve * x * x;
            sum += trend;
            sum_sq += trend * trend;
            count += 1.0;
        }
    }
    let mean_trend = sum / count;
    Some(cfg.fe_sd_health * cfg.fe_sd_health + sum_sq / count - mean_trend * mean_trend)
}

/// One cell of the asymptotic-limit study.
#[derive(Debug, Clone, Copy)]
pub struct PlimCell {
    pub lambda: f64,
    pub sigma_nu: f64,
    pub target: f64,
    pub empirical_mean: f64,
    pub mc_se: f64,
    pub reps: usize,
}

/// Pooled bivariate OLS slope of retirement on reported health, intercept
/// included, no sample filters: the regression whose limit the target ratio
/// describes.
pub fn pooled_ols_slope(data: &PanelDataset) -> Result<f64> {
    let n = data.rows.len();
    let mut x = DMatrix::zeros(n, 2);
    let mut y = DVector::zeros(n);
    for (i, r) in data.rows.iter().enumerate() {
        x[(i, 0)] = 1.0;
        x[(i, 1)] = r.h_subjective;
        y[i] = r.retired as f64;
    }
    let fit = lstsq(&x, &y).map_err(|_| {
        Error::from(EstimError::SingularDesign {
            columns: vec!["h_subjective".into()],
        })
    })?;
    Ok(fit.coef[1])
}

/// Compare the empirical mean of the naive OLS slope against its target
/// ratio over a (lambda, sigma_nu) grid. Moments are measured once on a
/// scaled-up copy of the base world.
pub fn run_plim_study(
    base: &DgpConfig,
    lambda_values: &[f64],
    sigma_nu_values: &[f64],
    reps: usize,
    moment_individuals: usize,
    master_seed: u64,
) -> Result<Vec<PlimCell>> {
    let mut moment_cfg = base.clone();
    moment_cfg.n_individuals = moment_individuals;
    moment_cfg.sigma_nu = 0.0;
    moment_cfg.lambda = 0.0;
    moment_cfg.seed = child_seed(master_seed, u64::MAX);
    let moments = RetirementHealthMoments::measure(&moment_cfg)?;

    let mut out = Vec::new();
    let mut cell_idx = 0usize;
    for &lambda in lambda_values {
        for &sigma_nu in sigma_nu_values {
            let target =
                ols_plim_target(&PlimComponents::from_moments(&moments, lambda, sigma_nu))?;
            let slopes: Vec<f64> = (0..reps)
                .into_par_iter()
                .map(|rep| {
                    let mut cfg = base.clone();
                    cfg.lambda = lambda;
                    cfg.sigma_nu = sigma_nu;
                    cfg.seed = child_seed(master_seed, (cell_idx * reps + rep) as u64);
                    let data = simulate_panel(&cfg).expect("validated config");
                    pooled_ols_slope(&data).expect("bivariate design")
                })
                .collect();
            out.push(PlimCell {
                lambda,
                sigma_nu,
                target,
                empirical_mean: mean(&slopes),
                mc_se: sd(&slopes) / (reps as f64).sqrt(),
                reps,
            });
            cell_idx += 1;
        }
    }
    Ok(out)
}
