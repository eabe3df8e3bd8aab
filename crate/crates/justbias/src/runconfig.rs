//! Flat key=value run configuration with one section per module.
//!
//! Unknown sections or keys are errors, not warnings: a silently ignored
//! typo would invalidate a whole Monte Carlo study. The canonical
//! serialization materializes every field, so a written manifest re-parses
//! to the identical configuration.

use crate::error::{Error, Result};
use crate::synthpanel::DgpConfig;

/// Which objective outcome the placebo sweep uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlaceboOutcomeChoice {
    Count,
    Index,
}

/// Everything a pipeline run needs, with documented defaults for each field.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dgp: DgpConfig,
    /// Table window widths.
    pub widths: Vec<u32>,
    /// Render the trace chart on the one-month grid instead of the table widths.
    pub fine_grid: bool,
    pub age_poly_order: u8,
    pub fixed_effects: bool,
    pub piecewise_slope: bool,
    pub mc_reps: usize,
    pub mc_lambda_values: Vec<f64>,
    pub mc_sigma_nu_values: Vec<f64>,
    pub mc_p_c_values: Vec<f64>,
    pub mc_n_values: Vec<usize>,
    pub mc_master_seed: u64,
    /// Import a panel CSV instead of simulating.
    pub import_path: Option<String>,
    pub run_thinning: bool,
    pub run_mc: bool,
    pub run_variants: bool,
    pub thin_seed: u64,
    pub placebo_outcome: PlaceboOutcomeChoice,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dgp: DgpConfig::default(),
            widths: vec![10, 20, 30, 40, 50, 60],
            fine_grid: true,
            age_poly_order: 2,
            fixed_effects: true,
            piecewise_slope: false,
            mc_reps: 50,
            mc_lambda_values: vec![0.0],
            mc_sigma_nu_values: vec![0.6],
            mc_p_c_values: vec![0.3],
            mc_n_values: vec![1000],
            mc_master_seed: 20150801,
            import_path: None,
            run_thinning: true,
            run_mc: false,
            run_variants: true,
            thin_seed: 24,
            placebo_outcome: PlaceboOutcomeChoice::Count,
        }
    }
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str, line: usize) -> Result<Vec<T>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::Config(format!("line {line}: bad {what} entry '{p}'")))
        })
        .collect()
}

impl RunConfig {
    /// Canonical serialization: every field, fixed order. Used as the run
    /// manifest; re-parsing reproduces the configuration exactly.
    pub fn serialize(&self) -> String {
        let d = &self.dgp;
        let mut s = String::new();
        s.push_str("[dgp]\n");
        s.push_str(&format!("n_individuals = {}\n", d.n_individuals));
        s.push_str(&format!("months_observed = {}\n", d.months_observed));
        s.push_str(&format!("entry_age_min = {}\n", d.entry_age_min));
        s.push_str(&format!("entry_age_max = {}\n", d.entry_age_max));
        s.push_str(&format!("fe_sd_health = {}\n", d.fe_sd_health));
        s.push_str(&format!("age_slope = {}\n", d.age_slope));
        s.push_str(&format!("age_curve = {}\n", d.age_curve));
        s.push_str(&format!("post_ret_slope_shift = {}\n", d.post_ret_slope_shift));
        s.push_str(&format!("random_walk_sd = {}\n", d.random_walk_sd));
        s.push_str(&format!("theta_h = {}\n", d.theta_h));
        s.push_str(&format!("hazard_base = {}\n", d.hazard_base));
        s.push_str(&format!("hazard_age = {}\n", d.hazard_age));
        s.push_str(&format!("complier_jump = {}\n", d.complier_jump));
        s.push_str(&format!("lambda = {}\n", d.lambda));
        s.push_str(&format!("sigma_nu = {}\n", d.sigma_nu));
        s.push_str(&format!("omega = {}\n", d.omega));
        s.push_str(&format!("xi_sd = {}\n", d.xi_sd));
        s.push_str(&format!("n_conditions = {}\n", d.n_conditions));
        s.push_str(&format!(
            "condition_thresholds = {}\n",
            join(&d.condition_thresholds)
        ));
        s.push_str(&format!("condition_noise_sd = {}\n", d.condition_noise_sd));
        s.push_str(&format!("sah_cutpoints = {}\n", join(&d.sah_cutpoints)));
        s.push_str(&format!("q_jump = {}\n", d.q_jump));
        s.push_str(&format!("level_jump = {}\n", d.level_jump));
        s.push_str(&format!("married_p = {}\n", d.married_p));
        s.push_str(&format!("health_ins_p = {}\n", d.health_ins_p));
        s.push_str(&format!("state_flip_hazard = {}\n", d.state_flip_hazard));
        s.push_str(&format!("seed = {}\n", d.seed));
        s.push_str("\n[windows]\n");
        s.push_str(&format!("widths = {}\n", join(&self.widths)));
        s.push_str(&format!("fine_grid = {}\n", self.fine_grid));
        s.push_str("\n[design]\n");
        s.push_str(&format!("age_poly_order = {}\n", self.age_poly_order));
        s.push_str(&format!("fixed_effects = {}\n", self.fixed_effects));
        s.push_str(&format!("piecewise_slope = {}\n", self.piecewise_slope));
        s.push_str("\n[mc]\n");
        s.push_str(&format!("reps = {}\n", self.mc_reps));
        s.push_str(&format!("lambda_values = {}\n", join(&self.mc_lambda_values)));
        s.push_str(&format!(
            "sigma_nu_values = {}\n",
            join(&self.mc_sigma_nu_values)
        ));
        s.push_str(&format!("p_c_values = {}\n", join(&self.mc_p_c_values)));
        s.push_str(&format!("n_values = {}\n", join(&self.mc_n_values)));
        s.push_str(&format!("master_seed = {}\n", self.mc_master_seed));
        s.push_str("\n[pipeline]\n");
        s.push_str(&format!(
            "import_path = {}\n",
            self.import_path.as_deref().unwrap_or("")
        ));
        s.push_str(&format!("run_thinning = {}\n", self.run_thinning));
        s.push_str(&format!("run_mc = {}\n", self.run_mc));
        s.push_str(&format!("run_variants = {}\n", self.run_variants));
        s.push_str(&format!("thin_seed = {}\n", self.thin_seed));
        s.push_str(&format!(
            "placebo_outcome = {}\n",
            match self.placebo_outcome {
                PlaceboOutcomeChoice::Count => "count",
                PlaceboOutcomeChoice::Index => "index",
            }
        ));
        s
    }

    /// Parse a configuration, starting from the defaults. Unknown sections
    /// and keys are rejected with their line number.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {lineno}: unterminated section")))?;
                match name {
                    "dgp" | "windows" | "design" | "mc" | "pipeline" => {
                        section = name.to_string();
                    }
                    other => {
                        return Err(Error::Config(format!(
                            "line {lineno}: unknown section '[{other}]'"
                        )))
                    }
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {lineno}: expected 'key = value'"))
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.apply(&section, key, value, lineno)?;
        }
        cfg.dgp.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, section: &str, key: &str, value: &str, line: usize) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("line {line}: bad {what} '{value}'"));
        macro_rules! num {
            ($what:expr) => {
                value.parse().map_err(|_| bad($what))?
            };
        }
        let parse_bool = || -> Result<bool> {
            match value {
                "true" | "1" => Ok(true),
                "false" | "0" => Ok(false),
                _ => Err(bad("boolean")),
            }
        };
        match (section, key) {
            ("dgp", "n_individuals") => self.dgp.n_individuals = num!("count"),
            ("dgp", "months_observed") => self.dgp.months_observed = num!("count"),
            ("dgp", "entry_age_min") => self.dgp.entry_age_min = num!("months"),
            ("dgp", "entry_age_max") => self.dgp.entry_age_max = num!("months"),
            ("dgp", "fe_sd_health") => self.dgp.fe_sd_health = num!("number"),
            ("dgp", "age_slope") => self.dgp.age_slope = num!("number"),
            ("dgp", "age_curve") => self.dgp.age_curve = num!("number"),
            ("dgp", "post_ret_slope_shift") => self.dgp.post_ret_slope_shift = num!("number"),
            ("dgp", "random_walk_sd") => self.dgp.random_walk_sd = num!("number"),
            ("dgp", "theta_h") => self.dgp.theta_h = num!("number"),
            ("dgp", "hazard_base") => self.dgp.hazard_base = num!("number"),
            ("dgp", "hazard_age") => self.dgp.hazard_age = num!("number"),
            ("dgp", "complier_jump") => self.dgp.complier_jump = num!("number"),
            ("dgp", "lambda") => self.dgp.lambda = num!("number"),
            ("dgp", "sigma_nu") => self.dgp.sigma_nu = num!("number"),
            ("dgp", "omega") => self.dgp.omega = num!("number"),
            ("dgp", "xi_sd") => self.dgp.xi_sd = num!("number"),
            ("dgp", "n_conditions") => self.dgp.n_conditions = num!("count"),
            ("dgp", "condition_thresholds") => {
                self.dgp.condition_thresholds = parse_list(value, "threshold", line)?;
            }
            ("dgp", "condition_noise_sd") => self.dgp.condition_noise_sd = num!("number"),
            ("dgp", "sah_cutpoints") => {
                let v: Vec<f64> = parse_list(value, "cutpoint", line)?;
                if v.len() != 4 {
                    return Err(Error::Config(format!(
                        "line {line}: sah_cutpoints needs exactly 4 values"
                    )));
                }
                self.dgp.sah_cutpoints = [v[0], v[1], v[2], v[3]];
            }
            ("dgp", "q_jump") => self.dgp.q_jump = num!("number"),
            ("dgp", "level_jump") => self.dgp.level_jump = num!("number"),
            ("dgp", "married_p") => self.dgp.married_p = num!("number"),
            ("dgp", "health_ins_p") => self.dgp.health_ins_p = num!("number"),
            ("dgp", "state_flip_hazard") => self.dgp.state_flip_hazard = num!("number"),
            ("dgp", "seed") => self.dgp.seed = num!("seed"),
            ("windows", "widths") => {
                self.widths = parse_list(value, "width", line)?;
            }
            ("windows", "fine_grid") => self.fine_grid = parse_bool()?,
            ("design", "age_poly_order") => self.age_poly_order = num!("order"),
            ("design", "fixed_effects") => self.fixed_effects = parse_bool()?,
            ("design", "piecewise_slope") => self.piecewise_slope = parse_bool()?,
            ("mc", "reps") => self.mc_reps = num!("count"),
            ("mc", "lambda_values") => {
                self.mc_lambda_values = parse_list(value, "lambda", line)?;
            }
            ("mc", "sigma_nu_values") => {
                self.mc_sigma_nu_values = parse_list(value, "sigma_nu", line)?;
            }
            ("mc", "p_c_values") => {
                self.mc_p_c_values = parse_list(value, "p_c", line)?;
            }
            ("mc", "n_values") => {
                self.mc_n_values = parse_list(value, "n", line)?;
            }
            ("mc", "master_seed") => self.mc_master_seed = num!("seed"),
            ("pipeline", "import_path") => {
                self.import_path = if value.is_empty() {
                    None
                } else {
                    Some(value.to_string())
                };
            }
            ("pipeline", "run_thinning") => self.run_thinning = parse_bool()?,
            ("pipeline", "run_mc") => self.run_mc = parse_bool()?,
            ("pipeline", "run_variants") => self.run_variants = parse_bool()?,
            ("pipeline", "thin_seed") => self.thin_seed = num!("seed"),
            ("pipeline", "placebo_outcome") => {
                self.placebo_outcome = match value {
                    "count" => PlaceboOutcomeChoice::Count,
                    "index" => PlaceboOutcomeChoice::Index,
                    _ => return Err(bad("placebo_outcome (count|index)")),
                };
            }
            ("", _) => {
                return Err(Error::Config(format!(
                    "line {line}: key '{key}' before any [section]"
                )))
            }
            (s, k) => {
                return Err(Error::Config(format!(
                    "line {line}: unknown key '{k}' in section '[{s}]'"
                )))
            }
        }
        Ok(())
    }
}
