//! Synthetic monthly retirement panels with a known injected reporting bias.
//!
//! The generated world keeps the level of latent health continuous at
//! retirement (health transitions may kink, levels do not jump), gives each
//! person an individual health intercept, drives retirement by a logistic
//! monthly hazard plus a one-shot jump in the month the statutory threshold is
//! reached, and contaminates reported health with classical measurement error
//! plus an additive shift `lambda` for retirees. Two optional knobs inject
//! level discontinuities into latent health or into the unobserved component
//! of health, for building worlds that violate the identifying assumptions.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::panel::{Observation, PanelDataset};
use crate::policy::BirthMonth;
use crate::seeds::child_seed;

/// All structural parameters of the synthetic world.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpConfig {
    pub n_individuals: usize,
    /// Survey waves per individual.
    pub months_observed: usize,
    /// Centered age at the first wave, drawn uniformly on this inclusive range.
    pub entry_age_min: i32,
    pub entry_age_max: i32,
    /// SD of the individual health intercept.
    pub fe_sd_health: f64,
    /// Health-index drift per month of age.
    pub age_slope: f64,
    /// Health-index curvature per month of age squared.
    pub age_curve: f64,
    /// Extra health-index drift per month retired (level-continuous kink).
    pub post_ret_slope_shift: f64,
    /// SD of an optional random-walk health shock per month; 0 disables it.
    pub random_walk_sd: f64,
    /// Effect of latent health on the retirement hazard (logistic scale).
    pub theta_h: f64,
    /// Baseline of the monthly logistic retirement hazard.
    pub hazard_base: f64,
    /// Age slope of the monthly logistic retirement hazard (per month).
    pub hazard_age: f64,
    /// Extra one-shot retirement probability in the month x = 0.
    pub complier_jump: f64,
    /// Justification bias: additive shift in reported health for retirees.
    pub lambda: f64,
    /// SD of classical measurement error in reported health.
    pub sigma_nu: f64,
    /// Share of latent health observed objectively.
    pub omega: f64,
    /// SD of the person-level offset in the objective index.
    pub xi_sd: f64,
    pub n_conditions: usize,
    /// Latent thresholds for the binary condition indicators.
    pub condition_thresholds: Vec<f64>,
    /// SD of the per-row noise in each condition's latent index.
    pub condition_noise_sd: f64,
    /// Cutpoints mapping reported health to the 1-5 scale.
    pub sah_cutpoints: [f64; 4],
    /// Violation knob: discontinuity added to the unobserved health component
    /// at retirement. Nonzero breaks the relative-to-objective assumption.
    pub q_jump: f64,
    /// Violation knob: discontinuity added to latent health after retirement.
    /// Nonzero breaks level continuity.
    pub level_jump: f64,
    /// Initial probability of being married / having health insurance spend.
    pub married_p: f64,
    pub health_ins_p: f64,
    /// Monthly probability that a control flips state.
    pub state_flip_hazard: f64,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            n_individuals: 3000,
            months_observed: 54,
            entry_age_min: -96,
            entry_age_max: 102,
            fe_sd_health: 1.0,
            age_slope: 0.01,
            age_curve: 2.0e-5,
            post_ret_slope_shift: 0.005,
            random_walk_sd: 0.0,
            theta_h: 0.3,
            hazard_base: -6.0,
            hazard_age: 0.004,
            complier_jump: 0.05,
            lambda: 0.0,
            sigma_nu: 0.6,
            omega: 0.6,
            xi_sd: 0.0,
            n_conditions: 7,
            condition_thresholds: DEFAULT_CONDITION_THRESHOLDS.to_vec(),
            condition_noise_sd: 0.5,
            sah_cutpoints: DEFAULT_SAH_CUTPOINTS,
            q_jump: 0.0,
            level_jump: 0.0,
            married_p: 0.79,
            health_ins_p: 0.25,
            state_flip_hazard: 0.002,
            seed: 42,
        }
    }
}

/// Default condition thresholds, calibrated on a 3.2M-row default-world run
/// so prevalences land on the survey values for the seven chronic conditions
/// (hypertension 0.119, diabetes 0.080, cancer 0.012, heart problems 0.031,
/// stroke 0.006, arthritis 0.031, psychiatric problems 0.006).
pub const DEFAULT_CONDITION_THRESHOLDS: [f64; 7] =
    [1.2827, 1.4847, 2.2477, 1.8979, 2.4762, 1.8979, 2.4762];

/// Default 1-5 cutpoints, calibrated on the same run so the reported-health
/// scale has mean near 3.26 and SD near 0.87.
pub const DEFAULT_SAH_CUTPOINTS: [f64; 4] = [-2.2380, -0.8992, 0.7341, 2.4284];

/// Sample SD of reported health in the default world (3.2M-row run); the
/// scale for expressing an injected bias in SD units.
pub const DEFAULT_SAH_INDEX_SD: f64 = 1.3522;

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_individuals == 0 || self.months_observed == 0 {
            return Err(Error::Config(
                "n_individuals and months_observed must be positive".into(),
            ));
        }
        if self.entry_age_min > self.entry_age_max {
            return Err(Error::Config("entry_age_min exceeds entry_age_max".into()));
        }
        if !(0.0..=1.0).contains(&self.complier_jump) {
            return Err(Error::Config("complier_jump must lie in [0,1]".into()));
        }
        if self.sigma_nu < 0.0 {
            return Err(Error::Config("sigma_nu must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(Error::Config("omega must lie in [0,1]".into()));
        }
        if self.condition_thresholds.len() != self.n_conditions {
            return Err(Error::Config(format!(
                "{} condition thresholds for {} conditions",
                self.condition_thresholds.len(),
                self.n_conditions
            )));
        }
        if self.n_conditions > 16 {
            return Err(Error::Config("at most 16 conditions supported".into()));
        }
        for w in self.sah_cutpoints.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Config(
                    "sah_cutpoints must be strictly increasing".into(),
                ));
            }
        }
        for (name, v) in [
            ("fe_sd_health", self.fe_sd_health),
            ("age_slope", self.age_slope),
            ("age_curve", self.age_curve),
            ("post_ret_slope_shift", self.post_ret_slope_shift),
            ("random_walk_sd", self.random_walk_sd),
            ("theta_h", self.theta_h),
            ("hazard_base", self.hazard_base),
            ("hazard_age", self.hazard_age),
            ("lambda", self.lambda),
            ("xi_sd", self.xi_sd),
            ("condition_noise_sd", self.condition_noise_sd),
            ("q_jump", self.q_jump),
            ("level_jump", self.level_jump),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        for (name, p) in [
            ("married_p", self.married_p),
            ("health_ins_p", self.health_ins_p),
            ("state_flip_hazard", self.state_flip_hazard),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0,1]")));
            }
        }
        Ok(())
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Deterministic part of latent health.
///
/// Level-continuous at the retirement month: `months_retired = 0` there, so
/// both the slope-shift and the level-jump terms vanish.
pub fn latent_health_at(config: &DgpConfig, a_i: f64, x: i32, months_retired: u32) -> f64 {
    let xf = x as f64;
    a_i + config.age_slope * xf
        + config.age_curve * xf * xf
        + config.post_ret_slope_shift * months_retired as f64
        + if months_retired > 0 { config.level_jump } else { 0.0 }
}

/// One month's retirement decision for a person not yet retired.
///
/// Bernoulli with probability `logistic(c0 + c1·x + theta_h·h) + p_c·1{x=0}`,
/// clamped to [0,1].
pub fn retirement_hazard_step<R: Rng>(config: &DgpConfig, x: i32, h_true: f64, rng: &mut R) -> bool {
    let base = logistic(config.hazard_base + config.hazard_age * x as f64 + config.theta_h * h_true);
    let p = (base + if x == 0 { config.complier_jump } else { 0.0 }).clamp(0.0, 1.0);
    rng.gen::<f64>() < p
}

/// Reported health: truth plus classical error plus the retiree shift.
pub fn apply_reporting<R: Rng>(
    h_true: f64,
    retired: bool,
    config: &DgpConfig,
    rng: &mut R,
) -> (f64, f64) {
    let nu = if config.sigma_nu > 0.0 {
        Normal::new(0.0, config.sigma_nu).expect("validated sigma").sample(rng)
    } else {
        0.0
    };
    let h_subjective = h_true + nu + if retired { config.lambda } else { 0.0 };
    (h_subjective, nu)
}

/// Split latent health into the observed objective index and the unobserved
/// remainder. The identity `h_objective + q = h_true` holds exactly; `q`
/// jumps by `q_jump` at retirement when that violation knob is nonzero.
pub fn split_objective(config: &DgpConfig, h_true: f64, xi_i: f64, retired: bool) -> (f64, f64) {
    let h_objective =
        config.omega * h_true + xi_i - if retired { config.q_jump } else { 0.0 };
    let q = h_true - h_objective;
    (h_objective, q)
}

/// Map reported health to the 1-5 scale (larger is worse): one plus the
/// number of cutpoints strictly below the value.
pub fn discretize_five_point(h_subjective: f64, cutpoints: &[f64; 4]) -> Result<u8> {
    for w in cutpoints.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::Config(
                "sah_cutpoints must be strictly increasing".into(),
            ));
        }
    }
    Ok(1 + cutpoints.iter().filter(|&&c| c < h_subjective).count() as u8)
}

fn generate_person(config: &DgpConfig, person_index: usize) -> Vec<Observation> {
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(config.seed, person_index as u64));
    let entry = Uniform::new_inclusive(config.entry_age_min, config.entry_age_max);
    let entry_x: i32 = entry.sample(&mut rng);
    // Births stay inside the MRA-62 cohort (the study period predates anyone
    // reaching a 63 threshold), so centered ages line up with the policy
    // table for every person regardless of entry age.
    let birth = BirthMonth {
        year: rng.gen_range(1945..=1959),
        month: rng.gen_range(1..=12),
    };
    let a_i: f64 = if config.fe_sd_health > 0.0 {
        Normal::new(0.0, config.fe_sd_health).unwrap().sample(&mut rng)
    } else {
        0.0
    };
    let xi_i: f64 = if config.xi_sd > 0.0 {
        Normal::new(0.0, config.xi_sd).unwrap().sample(&mut rng)
    } else {
        0.0
    };
    let mut married = rng.gen::<f64>() < config.married_p;
    let mut health_ins = rng.gen::<f64>() < config.health_ins_p;

    let mut rows = Vec::with_capacity(config.months_observed);
    let mut retired = false;
    let mut months_retired: u32 = 0;
    let mut rw_cum = 0.0;
    let rw = if config.random_walk_sd > 0.0 {
        Some(Normal::new(0.0, config.random_walk_sd).unwrap())
    } else {
        None
    };

    for t in 0..config.months_observed {
        let x = entry_x + t as i32;
        if let Some(d) = &rw {
            rw_cum += d.sample(&mut rng);
        }
        if retired {
            months_retired += 1;
        }
        let h_true = latent_health_at(config, a_i, x, months_retired) + rw_cum;
        if !retired && retirement_hazard_step(config, x, h_true, &mut rng) {
            retired = true;
            months_retired = 0;
        }
        // Health on the retirement month itself is the pre-retirement value
        // (months_retired = 0), so the level stays continuous.
        let (h_subjective, _nu) = apply_reporting(h_true, retired, config, &mut rng);
        let (h_objective, _q) = split_objective(config, h_true, xi_i, retired);

        let mut conditions: u16 = 0;
        for k in 0..config.n_conditions {
            let eta = if config.condition_noise_sd > 0.0 {
                Normal::new(0.0, config.condition_noise_sd).unwrap().sample(&mut rng)
            } else {
                0.0
            };
            if config.omega * h_true + eta > config.condition_thresholds[k] {
                conditions |= 1 << k;
            }
        }

        if rng.gen::<f64>() < config.state_flip_hazard {
            married = !married;
        }
        if rng.gen::<f64>() < config.state_flip_hazard {
            health_ins = !health_ins;
        }

        let sah = discretize_five_point(h_subjective, &config.sah_cutpoints)
            .expect("validated cutpoints");

        rows.push(Observation {
            person_id: person_index as u64 + 1,
            t: t as i64,
            x,
            birth_year: birth.year,
            birth_month: birth.month,
            retired: u8::from(retired),
            months_retired,
            h_true: Some(h_true),
            h_subjective,
            h_objective_index: h_objective,
            conditions,
            sah_5pt: sah,
            poor_health: u8::from(sah >= 4),
            married: u8::from(married),
            health_ins: u8::from(health_ins),
        });
    }
    rows
}

/// Generate a synthetic panel. Individuals are generated on independent,
/// deterministically derived RNG streams, so parallel generation is
/// bit-identical to sequential order.
pub fn simulate_panel(config: &DgpConfig) -> Result<PanelDataset> {
    config.validate()?;
    let per_person: Vec<Vec<Observation>> = (0..config.n_individuals)
        .into_par_iter()
        .map(|i| generate_person(config, i))
        .collect();
    let rows: Vec<Observation> = per_person.into_iter().flatten().collect();
    Ok(PanelDataset {
        rows,
        n_conditions: config.n_conditions,
        truth: Some(config.clone()),
    })
}
