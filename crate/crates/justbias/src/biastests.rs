//! The test batteries: shrinking-window sweeps of the outcome jump at the
//! statutory threshold, the relative-to-objective variants, the indirect
//! OLS-versus-IV comparison, the objective-health placebo, and the
//! robustness variants.
//!
//! A sweep re-estimates the same fixed-effects 2SLS on nested subsamples with
//! centered age inside shrinking month bands. The bias reading is the
//! narrow-window limit: a real health effect of retirement works through
//! transitions and fades out of narrow windows, while a reporting shift
//! survives at any width.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::frame::Frame;
use crate::estimation::{
    normal_critical, normal_p_value, ols_iv_comparison, tsls_on_frame, DesignSpec,
    EstimateResult,
};
use crate::panel::PanelDataset;

/// Ordered window widths in months.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSpec {
    pub widths_months: Vec<u32>,
}

impl WindowSpec {
    pub fn new(widths_months: Vec<u32>) -> Result<Self> {
        if widths_months.is_empty() {
            return Err(Error::Config("window widths must be non-empty".into()));
        }
        for w in widths_months.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Config(
                    "window widths must be strictly increasing".into(),
                ));
            }
        }
        if widths_months[0] == 0 {
            return Err(Error::Config("window widths must be positive".into()));
        }
        Ok(Self { widths_months })
    }

    /// The table layout: 10 through 60 months in steps of ten.
    pub fn table_default() -> Self {
        Self {
            widths_months: vec![10, 20, 30, 40, 50, 60],
        }
    }

    /// Fine grid for traces: every month from 10 to 60.
    pub fn fine_grid() -> Self {
        Self {
            widths_months: (10..=60).collect(),
        }
    }
}

/// What a completed sweep says about reporting bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    NoEvidenceOfBias,
    EvidenceOfBias,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::NoEvidenceOfBias => "NoEvidenceOfBias",
            Verdict::EvidenceOfBias => "EvidenceOfBias",
            Verdict::Inconclusive => "Inconclusive",
        };
        f.write_str(s)
    }
}

/// Quantitative defaults behind the verdict call.
#[derive(Debug, Clone, PartialEq)]
pub struct VerdictRule {
    /// How many of the narrowest widths must be individually insignificant.
    pub narrow_k: usize,
    /// Two-sided significance level on cluster-robust t-ratios.
    pub alpha: f64,
    /// Minimum first-stage F at the narrow widths.
    pub min_first_stage_f: f64,
    /// SE(narrowest) may exceed SE(widest) by at most this factor, guarding
    /// against reading an underpowered null as absence of bias.
    pub se_inflation_cap: f64,
}

impl Default for VerdictRule {
    fn default() -> Self {
        Self {
            narrow_k: 3,
            alpha: 0.05,
            min_first_stage_f: 10.0,
            se_inflation_cap: 1.5,
        }
    }
}

/// Per-width results of one sweep. Failed windows are kept as gaps with the
/// failure reason rather than aborting the sweep.
#[derive(Debug, Clone)]
pub struct WindowSweepResult {
    pub widths: Vec<u32>,
    pub entries: Vec<std::result::Result<EstimateResult, String>>,
    pub warnings: Vec<String>,
    pub verdict: Verdict,
    pub rationale: String,
}

impl WindowSweepResult {
    pub fn result_at(&self, width: u32) -> Option<&EstimateResult> {
        self.widths
            .iter()
            .position(|&w| w == width)
            .and_then(|i| self.entries[i].as_ref().ok())
    }

    fn trace<F: Fn(&EstimateResult) -> f64>(&self, f: F) -> Vec<Option<f64>> {
        self.entries
            .iter()
            .map(|e| e.as_ref().ok().map(&f))
            .collect()
    }

    pub fn coef_trace(&self) -> Vec<Option<f64>> {
        self.trace(|r| r.endog_coef())
    }

    pub fn se_trace(&self) -> Vec<Option<f64>> {
        self.trace(|r| r.endog_se())
    }

    pub fn ci_lo_trace(&self) -> Vec<Option<f64>> {
        let z = normal_critical(0.05);
        self.trace(|r| r.endog_coef() - z * r.endog_se())
    }

    pub fn ci_hi_trace(&self) -> Vec<Option<f64>> {
        let z = normal_critical(0.05);
        self.trace(|r| r.endog_coef() + z * r.endog_se())
    }

    pub fn first_stage_f_trace(&self) -> Vec<Option<f64>> {
        self.trace(|r| r.first_stage_f)
    }

    pub fn n_obs_trace(&self) -> Vec<Option<f64>> {
        self.trace(|r| r.n_obs as f64)
    }
}

/// Rows with centered age in [-w, w-1]; person-level filters are re-applied
/// at estimation time.
pub fn subsample_window(data: &PanelDataset, w: u32) -> Result<PanelDataset> {
    if w == 0 {
        return Err(Error::Config("window width must be at least 1".into()));
    }
    let lo = -(w as i32);
    let hi = w as i32 - 1;
    let rows: Vec<_> = data
        .rows
        .iter()
        .filter(|r| r.x >= lo && r.x <= hi)
        .cloned()
        .collect();
    if rows.is_empty() {
        return Err(crate::error::EstimError::EmptyWindow { width: w }.into());
    }
    Ok(PanelDataset {
        rows,
        n_conditions: data.n_conditions,
        truth: data.truth.clone(),
    })
}

/// Decide the verdict from a completed sweep.
///
/// NoEvidenceOfBias requires the `narrow_k` narrowest widths each
/// insignificant with a healthy first stage, and the narrowest SE within the
/// inflation cap of the widest; EvidenceOfBias requires a significant
/// narrowest width with a healthy first stage; anything else is
/// inconclusive.
pub fn verdict(
    widths: &[u32],
    entries: &[std::result::Result<EstimateResult, String>],
    rule: &VerdictRule,
) -> (Verdict, String) {
    let k = rule.narrow_k.min(widths.len());
    let narrow: Vec<(u32, Option<&EstimateResult>)> = widths
        .iter()
        .zip(entries)
        .take(k)
        .map(|(&w, e)| (w, e.as_ref().ok()))
        .collect();
    if narrow.iter().any(|(_, r)| r.is_none()) {
        let gaps: Vec<String> = narrow
            .iter()
            .filter(|(_, r)| r.is_none())
            .map(|(w, _)| format!("{w}m"))
            .collect();
        return (
            Verdict::Inconclusive,
            format!("narrow windows failed to estimate: {}", gaps.join(", ")),
        );
    }

    let narrowest = narrow[0].1.unwrap();
    let sig = |r: &EstimateResult| normal_p_value(r.endog_t()) < rule.alpha;
    let strong = |r: &EstimateResult| r.first_stage_f >= rule.min_first_stage_f;

    if sig(narrowest) && strong(narrowest) {
        return (
            Verdict::EvidenceOfBias,
            format!(
                "narrowest window ({}m) significant at {:.0}% with first-stage F {:.1}",
                narrow[0].0,
                rule.alpha * 100.0,
                narrowest.first_stage_f
            ),
        );
    }

    let all_insig = narrow.iter().all(|(_, r)| !sig(r.unwrap()));
    let all_strong = narrow.iter().all(|(_, r)| strong(r.unwrap()));
    let widest = widths
        .iter()
        .zip(entries)
        .rev()
        .find_map(|(&w, e)| e.as_ref().ok().map(|r| (w, r)));
    let se_ok = widest
        .map(|(_, wide)| narrowest.endog_se() <= rule.se_inflation_cap * wide.endog_se())
        .unwrap_or(false);

    if all_insig && all_strong && se_ok {
        let (ww, wide) = widest.unwrap();
        return (
            Verdict::NoEvidenceOfBias,
            format!(
                "{} narrowest widths insignificant at {:.0}%, first stages strong, \
                 SE({}m)={:.3} within {:.1}x of SE({}m)={:.3}",
                k,
                rule.alpha * 100.0,
                narrow[0].0,
                narrowest.endog_se(),
                rule.se_inflation_cap,
                ww,
                wide.endog_se()
            ),
        );
    }

    let mut reasons = Vec::new();
    if !all_insig {
        reasons.push("some narrow widths significant without a significant narrowest".into());
    }
    if !all_strong {
        reasons.push(format!(
            "first-stage F below {:.0} at narrow widths",
            rule.min_first_stage_f
        ));
    }
    if !se_ok {
        reasons.push("narrow-window SE exceeds the inflation cap".to_string());
    }
    (Verdict::Inconclusive, reasons.join("; "))
}

/// Controls that may be silently dropped (with a warning) when collinear in
/// a window, as opposed to structural columns whose collinearity is an error.
fn fit_window_with_droppable(
    fr: &Frame,
    spec: &DesignSpec,
    droppable: &[String],
    warnings: &mut Vec<String>,
    width: u32,
) -> std::result::Result<EstimateResult, String> {
    let mut spec = spec.clone();
    loop {
        match tsls_on_frame(&spec, fr) {
            Ok(r) => return Ok(r),
            Err(Error::Estimation(crate::error::EstimError::SingularDesign { columns })) => {
                let removable: Vec<String> = columns
                    .iter()
                    .filter(|c| droppable.contains(c))
                    .cloned()
                    .collect();
                if removable.is_empty() {
                    return Err(crate::error::EstimError::SingularDesign { columns }.to_string());
                }
                spec.exog_controls.retain(|c| !removable.contains(c));
                warnings.push(format!(
                    "{width}m window: dropped collinear controls {}",
                    removable.join(", ")
                ));
            }
            Err(e) => return Err(e.to_string()),
        }
    }
}

fn sweep_frame(
    fr: &Frame,
    windows: &WindowSpec,
    spec: &DesignSpec,
    droppable: &[String],
    rule: &VerdictRule,
) -> WindowSweepResult {
    let fits: Vec<(std::result::Result<EstimateResult, String>, Vec<String>)> = windows
        .widths_months
        .par_iter()
        .map(|&w| {
            let mut warnings = Vec::new();
            let entry = match fr.window(w) {
                Ok(sub) => fit_window_with_droppable(&sub, spec, droppable, &mut warnings, w),
                Err(e) => Err(e.to_string()),
            };
            (entry, warnings)
        })
        .collect();
    let mut entries = Vec::with_capacity(fits.len());
    let mut warnings = Vec::new();
    for (entry, mut warns) in fits {
        entries.push(entry);
        warnings.append(&mut warns);
    }
    let (v, rationale) = verdict(&windows.widths_months, &entries, rule);
    WindowSweepResult {
        widths: windows.widths_months.clone(),
        entries,
        warnings,
        verdict: v,
        rationale,
    }
}

/// Window sweep of the outcome jump in standardized reported health
/// (level-continuity reading: a surviving narrow-window jump is bias).
pub fn sweep_assumption1(
    data: &PanelDataset,
    windows: &WindowSpec,
    spec: &DesignSpec,
) -> Result<WindowSweepResult> {
    spec.validate()?;
    let fr = Frame::from_panel(data);
    Ok(sweep_frame(&fr, windows, spec, &[], &VerdictRule::default()))
}

/// Difference reading: replaces the outcome by standardized subjective minus
/// standardized objective health, so the objective side serves as the
/// control group. When the objective index has no variation the outcome
/// degrades to the standardized subjective outcome alone.
pub fn test_assumption2_difference(
    data: &PanelDataset,
    windows: &WindowSpec,
    spec: &DesignSpec,
) -> Result<WindowSweepResult> {
    spec.validate()?;
    let fr = Frame::from_panel(data);
    let mut spec = spec.clone();
    spec.outcome = "zdiff".into();
    Ok(sweep_frame(&fr, windows, &spec, &[], &VerdictRule::default()))
}

/// Controls reading: standardized subjective health with the condition
/// indicators as additional controls. Collinear condition columns are
/// dropped with a warning.
pub fn test_assumption2_controls(
    data: &PanelDataset,
    windows: &WindowSpec,
    spec: &DesignSpec,
) -> Result<WindowSweepResult> {
    spec.validate()?;
    let fr = Frame::from_panel(data);
    let mut spec = spec.clone();
    spec.outcome = "z_sah".into();
    let conds: Vec<String> = (1..=data.n_conditions).map(|k| format!("cond_{k}")).collect();
    spec.exog_controls.extend(conds.iter().cloned());
    Ok(sweep_frame(&fr, windows, &spec, &conds, &VerdictRule::default()))
}

/// Which objective outcome the placebo sweep uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlaceboOutcome {
    /// Count of diagnosed conditions (the table convention).
    ConditionCount,
    /// The continuous observed-health index.
    ContinuousIndex,
}

/// Placebo: the sweep run on objective health. In a level-continuous world
/// no width shows an effect; a significant narrow window flags a violation
/// of level continuity itself.
pub fn placebo_objective(
    data: &PanelDataset,
    windows: &WindowSpec,
    spec: &DesignSpec,
    outcome: PlaceboOutcome,
) -> Result<WindowSweepResult> {
    spec.validate()?;
    let fr = Frame::from_panel(data);
    let mut spec = spec.clone();
    spec.outcome = match outcome {
        PlaceboOutcome::ConditionCount => "obj_count".into(),
        PlaceboOutcome::ContinuousIndex => "h_objective".into(),
    };
    Ok(sweep_frame(&fr, windows, &spec, &[], &VerdictRule::default()))
}

/// Robustness variants of the main sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Drop the individual fixed effects.
    NoFe,
    /// Linear age control with a post-threshold slope change in both stages.
    PiecewiseSlope,
    /// Poor-health indicator as the dependent variable.
    BinaryOutcome,
    /// Add survey-year dummies, marital status, and the insurance indicator.
    ExtraControls,
}

pub fn run_variant(
    data: &PanelDataset,
    windows: &WindowSpec,
    variant: Variant,
    spec: &DesignSpec,
) -> Result<WindowSweepResult> {
    spec.validate()?;
    let mut fr = Frame::from_panel(data);
    let mut spec = spec.clone();
    let mut droppable: Vec<String> = Vec::new();
    match variant {
        Variant::NoFe => {
            spec.fixed_effects = false;
        }
        Variant::PiecewiseSlope => {
            spec.age_poly_order = 1;
            spec.piecewise_slope = true;
        }
        Variant::BinaryOutcome => {
            spec.outcome = "poor_health".into();
        }
        Variant::ExtraControls => {
            let mut extra = fr.add_survey_year_dummies();
            extra.push("married".into());
            extra.push("health_ins".into());
            spec.exog_controls.extend(extra.iter().cloned());
            droppable = extra;
        }
    }
    Ok(sweep_frame(&fr, windows, &spec, &droppable, &VerdictRule::default()))
}

/// How the conventional OLS-versus-IV comparison classifies the sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dominance {
    /// IV above OLS by more than two SEs of the difference: measurement
    /// error attenuation outweighs any reporting bias.
    AttenuationDominates,
    /// OLS above IV by more than two SEs of the difference.
    JustificationDominates,
    Indistinguishable,
}

impl std::fmt::Display for Dominance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Dominance::AttenuationDominates => "AttenuationDominates",
            Dominance::JustificationDominates => "JustificationDominates",
            Dominance::Indistinguishable => "Indistinguishable",
        };
        f.write_str(s)
    }
}

/// The indirect test: regress retirement on reported health by OLS and by IV
/// with the condition indicators as instruments, on the identical sample.
#[derive(Debug, Clone)]
pub struct IndirectResult {
    pub ols: EstimateResult,
    pub iv: EstimateResult,
    /// iv minus ols on the reported-health coefficient.
    pub diff: f64,
    pub diff_se: f64,
    pub dominance: Dominance,
    /// Set when the objective instruments are jointly weak (F below 10); the
    /// dominance call is then forced to Indistinguishable.
    pub weak_instruments: bool,
}

/// Run the indirect test: retirement on reported health, instrumented by the
/// objective condition indicators, with fixed effects, non-parametric age
/// (year dummies), survey-year dummies, and marital status as controls.
pub fn indirect_test(data: &PanelDataset) -> Result<IndirectResult> {
    let mut fr = Frame::from_panel(data);
    let mut controls = fr.add_age_year_dummies();
    controls.extend(fr.add_survey_year_dummies());
    controls.push("married".into());

    let instruments: Vec<String> =
        (1..=data.n_conditions).map(|k| format!("cond_{k}")).collect();
    if instruments.is_empty() {
        return Err(crate::error::EstimError::TooFewInstruments {
            n_instruments: 0,
            n_endogenous: 1,
        }
        .into());
    }

    let spec = DesignSpec {
        outcome: "retired".into(),
        endogenous: "h_subjective".into(),
        instruments: instruments.clone(),
        exog_controls: controls.clone(),
        fixed_effects: true,
        cluster_by: "person_id".into(),
        age_poly_order: 0,
        piecewise_slope: false,
    };

    // Controls and instruments may go collinear (dummy blocks, rare
    // conditions with no variation); drop those and retry.
    let mut spec = spec;
    let comparison = loop {
        match ols_iv_comparison(&spec, &fr) {
            Ok(c) => break c,
            Err(Error::Estimation(crate::error::EstimError::SingularDesign { columns })) => {
                let drop_controls: Vec<String> = columns
                    .iter()
                    .filter(|c| spec.exog_controls.contains(c))
                    .cloned()
                    .collect();
                let drop_instruments: Vec<String> = columns
                    .iter()
                    .filter(|c| spec.instruments.contains(c))
                    .cloned()
                    .collect();
                if drop_controls.is_empty() && drop_instruments.is_empty() {
                    return Err(
                        crate::error::EstimError::SingularDesign { columns }.into()
                    );
                }
                spec.exog_controls.retain(|c| !drop_controls.contains(c));
                spec.instruments.retain(|c| !drop_instruments.contains(c));
                if spec.instruments.is_empty() {
                    return Err(crate::error::EstimError::TooFewInstruments {
                        n_instruments: 0,
                        n_endogenous: 1,
                    }
                    .into());
                }
            }
            Err(e) => return Err(e),
        }
    };
    let _ = &mut fr;

    let weak = !(comparison.iv.first_stage_f >= 10.0);
    let dominance = if weak {
        Dominance::Indistinguishable
    } else if comparison.diff > 2.0 * comparison.diff_se {
        Dominance::AttenuationDominates
    } else if comparison.diff < -2.0 * comparison.diff_se {
        Dominance::JustificationDominates
    } else {
        Dominance::Indistinguishable
    };

    Ok(IndirectResult {
        ols: comparison.ols,
        iv: comparison.iv,
        diff: comparison.diff,
        diff_se: comparison.diff_se,
        dominance,
        weak_instruments: weak,
    })
}
