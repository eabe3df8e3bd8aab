//! The numerical core: within transformation, OLS, two-stage least squares,
//! cluster-robust covariance, and the first-stage Wald F.
//!
//! Everything is exact closed-form least squares on top of the pivoted-QR
//! solver in [`linalg`]; no iterative optimization. All operations are pure
//! functions of their inputs, so callers may run many fits in parallel.

pub mod frame;
mod linalg;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, EstimError, Result};
use crate::panel::PanelDataset;
use frame::Frame;
pub use linalg::{dependent_columns, lstsq, Lstsq, RankDeficient, RANK_TOL};

/// What to estimate: column names resolved against [`Frame`].
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    pub outcome: String,
    pub endogenous: String,
    /// Excluded instruments; at least one for 2SLS.
    pub instruments: Vec<String>,
    /// Named controls beyond the age polynomial.
    pub exog_controls: Vec<String>,
    pub fixed_effects: bool,
    /// Only clustering by person is supported.
    pub cluster_by: String,
    /// Order of the age polynomial in years: 1 or 2 for the window designs,
    /// 0 when age enters non-parametrically through dummies instead.
    pub age_poly_order: u8,
    /// Adds the post-threshold age slope `x_years_post` to both stages.
    pub piecewise_slope: bool,
}

impl DesignSpec {
    /// Baseline design: standardized reported health on instrumented
    /// retirement with individual fixed effects and a quadratic age control.
    pub fn assumption1() -> Self {
        Self {
            outcome: "z_sah".into(),
            endogenous: "retired".into(),
            instruments: vec!["instrument".into()],
            exog_controls: Vec::new(),
            fixed_effects: true,
            cluster_by: "person_id".into(),
            age_poly_order: 2,
            piecewise_slope: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cluster_by != "person_id" {
            return Err(Error::Config(format!(
                "unsupported cluster_by '{}': must be person_id",
                self.cluster_by
            )));
        }
        if self.age_poly_order > 2 {
            return Err(Error::Config(format!(
                "age_poly_order {} must be 0, 1 or 2",
                self.age_poly_order
            )));
        }
        Ok(())
    }

    /// Control column names implied by this design, age terms first.
    pub fn control_columns(&self) -> Vec<String> {
        let mut cols = Vec::new();
        if self.age_poly_order >= 1 {
            cols.push("x_years".to_string());
        }
        if self.age_poly_order >= 2 {
            cols.push("x_years_sq".into());
        }
        if self.piecewise_slope {
            cols.push("x_years_post".into());
        }
        cols.extend(self.exog_controls.iter().cloned());
        cols
    }
}

/// A fitted equation with cluster-robust inference.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    /// Regressor names, design order.
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub se_cluster: Vec<f64>,
    /// Name of the regressor whose coefficient the tables report.
    pub endogenous: String,
    /// First excluded instrument's first-stage coefficient (NaN for OLS fits).
    pub first_stage_coef: f64,
    pub first_stage_se: f64,
    /// Cluster-robust Wald F on the excluded instruments (NaN for OLS fits).
    pub first_stage_f: f64,
    /// Set when the first-stage F falls below 10.
    pub weak_instruments: bool,
    pub n_obs: usize,
    pub n_individuals: usize,
    /// Persons dropped for lacking retirement variation in this sample.
    pub n_dropped_no_variation: usize,
    /// Persons dropped as singletons after the within transformation.
    pub n_dropped_singletons: usize,
}

impl EstimateResult {
    pub fn coef_of(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.coef[i])
    }

    pub fn se_of(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.se_cluster[i])
    }

    pub fn endog_coef(&self) -> f64 {
        self.coef_of(&self.endogenous).expect("endogenous coefficient")
    }

    pub fn endog_se(&self) -> f64 {
        self.se_of(&self.endogenous).expect("endogenous se")
    }

    pub fn endog_t(&self) -> f64 {
        self.endog_coef() / self.endog_se()
    }
}

/// Two-sided p-value of a t-ratio under the normal reference distribution.
pub fn normal_p_value(t: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let n = Normal::new(0.0, 1.0).unwrap();
    2.0 * (1.0 - n.cdf(t.abs()))
}

/// Two-sided normal critical value at significance level `alpha`.
pub fn normal_critical(alpha: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let n = Normal::new(0.0, 1.0).unwrap();
    n.inverse_cdf(1.0 - alpha / 2.0)
}

/// Center `column` on the mean and sample SD (n-1) of `reference`.
pub fn standardize(column: &[f64], reference: &[f64]) -> std::result::Result<Vec<f64>, EstimError> {
    if reference.len() < 2 {
        return Err(EstimError::ZeroVariance("reference".into()));
    }
    let n = reference.len() as f64;
    let mean = reference.iter().sum::<f64>() / n;
    let var = reference.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    if var <= 0.0 {
        return Err(EstimError::ZeroVariance("reference".into()));
    }
    let sd = var.sqrt();
    Ok(column.iter().map(|v| (v - mean) / sd).collect())
}

/// Result of the within transformation.
#[derive(Debug, Clone)]
pub struct Demeaned {
    /// Kept rows by original index, demeaned column-wise.
    pub matrix: DMatrix<f64>,
    pub kept_rows: Vec<usize>,
    pub n_singleton_persons: usize,
}

/// Subtract person-level means from the named columns. Persons with a single
/// row are dropped and counted; per-person column sums of the result are zero
/// to machine precision.
pub fn within_demean(data: &PanelDataset, columns: &[&str]) -> Result<Demeaned> {
    if data.rows.is_empty() {
        return Err(EstimError::EmptyDesign("empty dataset".into()).into());
    }
    let fr = Frame::from_panel(data);
    let mut kept_rows = Vec::new();
    let mut n_singletons = 0usize;
    let spans = fr.person_spans();
    for (_, span) in &spans {
        if span.len() < 2 {
            n_singletons += 1;
        } else {
            kept_rows.extend(span.clone());
        }
    }
    let mut matrix = DMatrix::zeros(kept_rows.len(), columns.len());
    for (c, name) in columns.iter().enumerate() {
        let col = fr.column(name).map_err(Error::from)?;
        let mut out_i = 0usize;
        for (_, span) in &spans {
            if span.len() < 2 {
                continue;
            }
            let mean: f64 =
                span.clone().map(|i| col[i]).sum::<f64>() / span.len() as f64;
            for i in span.clone() {
                matrix[(out_i, c)] = col[i] - mean;
                out_i += 1;
            }
        }
    }
    Ok(Demeaned {
        matrix,
        kept_rows,
        n_singleton_persons: n_singletons,
    })
}

/// Cluster-robust sandwich covariance for a least-squares fit of X:
/// (XᵀX)⁻¹ (Σ_g Xgᵀu_g u_gᵀX_g) (XᵀX)⁻¹ scaled by G/(G−1)·(N−1)/(N−K).
pub fn cluster_cov(
    residuals: &DVector<f64>,
    x: &DMatrix<f64>,
    cluster_ids: &[u64],
) -> Result<DMatrix<f64>> {
    let fit = lstsq(x, &DVector::zeros(x.nrows())).map_err(|rd| {
        EstimError::SingularDesign {
            columns: rd.dependent_columns.iter().map(|i| format!("col{i}")).collect(),
        }
    })?;
    sandwich(&fit.xtx_inv, x, residuals, cluster_ids)
}

fn sandwich(
    xtx_inv: &DMatrix<f64>,
    x: &DMatrix<f64>,
    u: &DVector<f64>,
    cluster_ids: &[u64],
) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    let k = x.ncols();
    assert_eq!(u.len(), n);
    assert_eq!(cluster_ids.len(), n);
    if n <= k {
        return Err(EstimError::EmptyDesign(format!(
            "{n} observations cannot support {k} regressors"
        ))
        .into());
    }

    // Accumulate per-cluster scores in first-appearance order so the meat is
    // the same floating-point sum regardless of caller-side labeling.
    let mut slot_of: std::collections::HashMap<u64, usize> = std::collections::HashMap::new();
    let mut scores: Vec<DVector<f64>> = Vec::new();
    for i in 0..n {
        let next = scores.len();
        let slot = *slot_of.entry(cluster_ids[i]).or_insert(next);
        if slot == scores.len() {
            scores.push(DVector::zeros(k));
        }
        for c in 0..k {
            scores[slot][c] += x[(i, c)] * u[i];
        }
    }
    let g = scores.len();
    if g < 2 {
        return Err(EstimError::SingleCluster.into());
    }
    let mut meat = DMatrix::zeros(k, k);
    for s in &scores {
        for a in 0..k {
            for b in 0..k {
                meat[(a, b)] += s[a] * s[b];
            }
        }
    }
    let correction =
        g as f64 / (g as f64 - 1.0) * (n as f64 - 1.0) / (n as f64 - k as f64);
    Ok(xtx_inv * meat * xtx_inv * correction)
}

/// OLS with cluster-robust standard errors on explicit arrays.
pub fn ols_fit(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    cluster_ids: &[u64],
    names: &[String],
) -> Result<EstimateResult> {
    assert_eq!(names.len(), x.ncols(), "one name per design column");
    let fit = lstsq(x, y).map_err(|rd| EstimError::SingularDesign {
        columns: rd.dependent_columns.iter().map(|&i| names[i].clone()).collect(),
    })?;
    let u = y - x * &fit.coef;
    let cov = sandwich(&fit.xtx_inv, x, &u, cluster_ids)?;
    let se: Vec<f64> = (0..x.ncols()).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    let n_individuals = {
        let mut ids: Vec<u64> = cluster_ids.to_vec();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    };
    Ok(EstimateResult {
        names: names.to_vec(),
        coef: fit.coef.iter().copied().collect(),
        se_cluster: se,
        endogenous: names[0].clone(),
        first_stage_coef: f64::NAN,
        first_stage_se: f64::NAN,
        first_stage_f: f64::NAN,
        weak_instruments: false,
        n_obs: x.nrows(),
        n_individuals,
        n_dropped_no_variation: 0,
        n_dropped_singletons: 0,
    })
}

/// 2SLS on explicit arrays: one endogenous regressor, excluded instruments,
/// optional exogenous controls, and an automatic intercept.
pub fn tsls_arrays(
    y: &[f64],
    endog: &[f64],
    instruments: &[Vec<f64>],
    controls: &[(String, Vec<f64>)],
    cluster_ids: &[u64],
) -> Result<EstimateResult> {
    if instruments.is_empty() {
        return Err(EstimError::TooFewInstruments {
            n_instruments: 0,
            n_endogenous: 1,
        }
        .into());
    }
    let n = y.len();
    let z_names: Vec<String> =
        (0..instruments.len()).map(|i| format!("instrument_{}", i + 1)).collect();
    let mut w_names: Vec<String> = controls.iter().map(|(n, _)| n.clone()).collect();
    w_names.push("const".into());
    let mut w_cols: Vec<Vec<f64>> = controls.iter().map(|(_, c)| c.clone()).collect();
    w_cols.push(vec![1.0; n]);
    let endog_v = DVector::from_column_slice(endog);
    let y_v = DVector::from_column_slice(y);
    tsls_core(
        &y_v,
        &endog_v,
        "endogenous",
        instruments,
        &z_names,
        &w_cols,
        &w_names,
        cluster_ids,
    )
}

/// Fit the standard 2SLS design against a panel: standardization reference
/// and sample filters are taken from `data` itself. Window sweeps build a
/// [`Frame`] on the full sample instead, keeping the reference fixed.
pub fn tsls_fit(spec: &DesignSpec, data: &PanelDataset) -> Result<EstimateResult> {
    let fr = Frame::from_panel(data);
    tsls_on_frame(spec, &fr)
}

/// Cluster-robust Wald F on the excluded instruments of the first stage.
/// Equals the squared t-ratio when there is a single instrument.
pub fn first_stage_f(spec: &DesignSpec, data: &PanelDataset) -> Result<f64> {
    let fr = Frame::from_panel(data);
    Ok(tsls_on_frame(spec, &fr)?.first_stage_f)
}

struct PreparedDesign {
    y: DVector<f64>,
    endog: DVector<f64>,
    instr_cols: Vec<Vec<f64>>,
    instr_names: Vec<String>,
    control_cols: Vec<Vec<f64>>,
    control_names: Vec<String>,
    cluster: Vec<u64>,
    n_individuals: usize,
    dropped_no_variation: usize,
    dropped_singletons: usize,
}

/// Apply the sample rules and the within transformation.
///
/// Persons without retirement variation in the current sample are dropped
/// (mirroring the labor-force-variation sample rule), then singletons when
/// fixed effects are on. Under fixed effects every column is within-demeaned
/// and no intercept enters; otherwise a constant is appended to the controls.
fn prepare(spec: &DesignSpec, fr: &Frame, need_instruments: bool) -> Result<PreparedDesign> {
    spec.validate()?;
    if need_instruments && spec.instruments.is_empty() {
        return Err(EstimError::TooFewInstruments {
            n_instruments: 0,
            n_endogenous: 1,
        }
        .into());
    }
    if fr.is_empty() {
        return Err(EstimError::EmptyDesign("no rows in sample".into()).into());
    }

    let retired = fr.has_column("retired").then(|| fr.column("retired").unwrap().to_vec());

    let mut kept: Vec<usize> = Vec::with_capacity(fr.len());
    let mut dropped_no_variation = 0usize;
    let mut dropped_singletons = 0usize;
    let mut n_individuals = 0usize;
    for (_, span) in fr.person_spans() {
        if let Some(r) = &retired {
            let first = r[span.start];
            if span.clone().all(|i| r[i] == first) {
                dropped_no_variation += 1;
                continue;
            }
        }
        if spec.fixed_effects && span.len() < 2 {
            dropped_singletons += 1;
            continue;
        }
        n_individuals += 1;
        kept.extend(span);
    }
    if kept.is_empty() {
        return Err(EstimError::EmptyDesign(
            "all persons dropped by sample filters".into(),
        )
        .into());
    }

    let control_names = spec.control_columns();
    let pull = |name: &str| -> Result<Vec<f64>> {
        let col = fr.column(name).map_err(Error::from)?;
        Ok(kept.iter().map(|&i| col[i]).collect())
    };
    let mut y = pull(&spec.outcome)?;
    let mut endog = pull(&spec.endogenous)?;
    let mut instr_cols = Vec::new();
    for name in &spec.instruments {
        instr_cols.push(pull(name)?);
    }
    let mut control_cols = Vec::new();
    for name in &control_names {
        control_cols.push(pull(name)?);
    }

    let cluster: Vec<u64> = kept.iter().map(|&i| fr.person[i]).collect();

    let mut control_names = control_names;
    if spec.fixed_effects {
        demean_by_person(&cluster, &mut y);
        demean_by_person(&cluster, &mut endog);
        for c in instr_cols.iter_mut().chain(control_cols.iter_mut()) {
            demean_by_person(&cluster, c);
        }
    } else {
        control_cols.push(vec![1.0; kept.len()]);
        control_names.push("const".into());
    }

    Ok(PreparedDesign {
        y: DVector::from_vec(y),
        endog: DVector::from_vec(endog),
        instr_cols,
        instr_names: spec.instruments.clone(),
        control_cols,
        control_names,
        cluster,
        n_individuals,
        dropped_no_variation,
        dropped_singletons,
    })
}

fn demean_by_person(person: &[u64], col: &mut [f64]) {
    let mut start = 0usize;
    for i in 1..=person.len() {
        if i == person.len() || person[i] != person[start] {
            let mean: f64 = col[start..i].iter().sum::<f64>() / (i - start) as f64;
            for v in &mut col[start..i] {
                *v -= mean;
            }
            start = i;
        }
    }
}

fn assemble(cols: &[&[f64]]) -> DMatrix<f64> {
    let n = cols.first().map_or(0, |c| c.len());
    let mut m = DMatrix::zeros(n, cols.len());
    for (c, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            m[(i, c)] = v;
        }
    }
    m
}

fn singular(names: &[String], rd: &RankDeficient) -> Error {
    EstimError::SingularDesign {
        columns: rd
            .dependent_columns
            .iter()
            .map(|&i| names.get(i).cloned().unwrap_or_else(|| format!("col{i}")))
            .collect(),
    }
    .into()
}

#[allow(clippy::too_many_arguments)]
fn tsls_core(
    y: &DVector<f64>,
    endog: &DVector<f64>,
    endog_name: &str,
    instr_cols: &[Vec<f64>],
    instr_names: &[String],
    control_cols: &[Vec<f64>],
    control_names: &[String],
    cluster: &[u64],
) -> Result<EstimateResult> {
    let q = instr_cols.len();
    let mut z_refs: Vec<&[f64]> = instr_cols.iter().map(|c| c.as_slice()).collect();
    z_refs.extend(control_cols.iter().map(|c| c.as_slice()));
    let z = assemble(&z_refs);
    let mut z_names: Vec<String> = instr_names.to_vec();
    z_names.extend(control_names.iter().cloned());

    // First stage.
    let first = lstsq(&z, endog).map_err(|rd| singular(&z_names, &rd))?;
    let dhat = &z * &first.coef;
    let u1 = endog - &dhat;
    let fs_cov = sandwich(&first.xtx_inv, &z, &u1, cluster)?;
    let first_stage_coef = first.coef[0];
    let first_stage_se = fs_cov[(0, 0)].max(0.0).sqrt();
    let gamma_q = DVector::from_fn(q, |i, _| first.coef[i]);
    let vq = DMatrix::from_fn(q, q, |i, j| fs_cov[(i, j)]);
    let first_stage_f = match vq.try_inverse() {
        Some(vq_inv) => (gamma_q.transpose() * vq_inv * &gamma_q)[(0, 0)] / q as f64,
        None => f64::NAN,
    };

    // Second stage on fitted values.
    let dhat_col: Vec<f64> = dhat.iter().copied().collect();
    let mut x2_refs: Vec<&[f64]> = vec![&dhat_col];
    x2_refs.extend(control_cols.iter().map(|c| c.as_slice()));
    let x2 = assemble(&x2_refs);
    let mut names: Vec<String> = vec![endog_name.to_string()];
    names.extend(control_names.iter().cloned());
    let second = lstsq(&x2, y).map_err(|rd| singular(&names, &rd))?;

    // Residuals use the actual endogenous regressor.
    let endog_col: Vec<f64> = endog.iter().copied().collect();
    let mut xa_refs: Vec<&[f64]> = vec![&endog_col];
    xa_refs.extend(control_cols.iter().map(|c| c.as_slice()));
    let x_actual = assemble(&xa_refs);
    let u = y - &x_actual * &second.coef;
    let cov = sandwich(&second.xtx_inv, &x2, &u, cluster)?;
    let se: Vec<f64> = (0..x2.ncols()).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();

    let n_individuals = {
        let mut ids = cluster.to_vec();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    };

    Ok(EstimateResult {
        names,
        coef: second.coef.iter().copied().collect(),
        se_cluster: se,
        endogenous: endog_name.to_string(),
        first_stage_coef,
        first_stage_se,
        first_stage_f,
        weak_instruments: !(first_stage_f >= 10.0),
        n_obs: y.len(),
        n_individuals,
        n_dropped_no_variation: 0,
        n_dropped_singletons: 0,
    })
}

/// 2SLS against a prebuilt frame (the window-sweep path).
pub fn tsls_on_frame(spec: &DesignSpec, fr: &Frame) -> Result<EstimateResult> {
    let prep = prepare(spec, fr, true)?;
    let mut res = tsls_core(
        &prep.y,
        &prep.endog,
        &spec.endogenous,
        &prep.instr_cols,
        &prep.instr_names,
        &prep.control_cols,
        &prep.control_names,
        &prep.cluster,
    )?;
    res.n_individuals = prep.n_individuals;
    res.n_dropped_no_variation = prep.dropped_no_variation;
    res.n_dropped_singletons = prep.dropped_singletons;
    Ok(res)
}

/// OLS and 2SLS fits of the same design on the identical sample, with the
/// stacked-moment covariance of the two endogenous coefficients.
#[derive(Debug, Clone)]
pub struct OlsIvComparison {
    pub ols: EstimateResult,
    pub iv: EstimateResult,
    /// iv coefficient minus ols coefficient on the endogenous regressor.
    pub diff: f64,
    /// Delta-method standard error of `diff` from the stacked estimating
    /// equations (accounts for the covariance of the two estimators).
    pub diff_se: f64,
}

/// Fit OLS and 2SLS on the same prepared sample and compare the endogenous
/// coefficients. Both estimators are solved from their stacked moment
/// conditions, so Var(b_iv − b_ols) uses the joint cluster covariance.
pub fn ols_iv_comparison(spec: &DesignSpec, fr: &Frame) -> Result<OlsIvComparison> {
    let prep = prepare(spec, fr, true)?;
    let k = 1 + prep.control_cols.len();

    // OLS block.
    let endog_col: Vec<f64> = prep.endog.iter().copied().collect();
    let mut refs: Vec<&[f64]> = vec![&endog_col];
    refs.extend(prep.control_cols.iter().map(|c| c.as_slice()));
    let x_actual = assemble(&refs);
    let mut names = vec![spec.endogenous.clone()];
    names.extend(prep.control_names.iter().cloned());
    let ols_fit_res = lstsq(&x_actual, &prep.y).map_err(|rd| singular(&names, &rd))?;
    let u_ols = &prep.y - &x_actual * &ols_fit_res.coef;
    let v_ols = sandwich(&ols_fit_res.xtx_inv, &x_actual, &u_ols, &prep.cluster)?;
    let mut ols = EstimateResult {
        names: names.clone(),
        coef: ols_fit_res.coef.iter().copied().collect(),
        se_cluster: (0..k).map(|i| v_ols[(i, i)].max(0.0).sqrt()).collect(),
        endogenous: spec.endogenous.clone(),
        first_stage_coef: f64::NAN,
        first_stage_se: f64::NAN,
        first_stage_f: f64::NAN,
        weak_instruments: false,
        n_obs: prep.y.len(),
        n_individuals: prep.n_individuals,
        n_dropped_no_variation: prep.dropped_no_variation,
        n_dropped_singletons: prep.dropped_singletons,
    };

    // IV block.
    let mut iv = tsls_core(
        &prep.y,
        &prep.endog,
        &spec.endogenous,
        &prep.instr_cols,
        &prep.instr_names,
        &prep.control_cols,
        &prep.control_names,
        &prep.cluster,
    )?;
    iv.n_individuals = prep.n_individuals;
    iv.n_dropped_no_variation = prep.dropped_no_variation;
    iv.n_dropped_singletons = prep.dropped_singletons;

    // Joint covariance of the stacked scores [Xᵀu_ols ; X̂ᵀu_iv]. The IV
    // fitted-design matrix is rebuilt exactly as in the 2SLS fit.
    let mut z_refs: Vec<&[f64]> = prep.instr_cols.iter().map(|c| c.as_slice()).collect();
    z_refs.extend(prep.control_cols.iter().map(|c| c.as_slice()));
    let z = assemble(&z_refs);
    let first = lstsq(&z, &prep.endog).map_err(|rd| singular(&prep.instr_names, &rd))?;
    let dhat = &z * &first.coef;
    let dhat_col: Vec<f64> = dhat.iter().copied().collect();
    let mut x2_refs: Vec<&[f64]> = vec![&dhat_col];
    x2_refs.extend(prep.control_cols.iter().map(|c| c.as_slice()));
    let x2 = assemble(&x2_refs);
    let second = lstsq(&x2, &prep.y).map_err(|rd| singular(&names, &rd))?;
    let u_iv = &prep.y - &x_actual * &second.coef;

    let n = prep.y.len();
    let mut slot_of: std::collections::HashMap<u64, usize> = std::collections::HashMap::new();
    let mut scores: Vec<DVector<f64>> = Vec::new();
    for i in 0..n {
        let next = scores.len();
        let slot = *slot_of.entry(prep.cluster[i]).or_insert(next);
        if slot == scores.len() {
            scores.push(DVector::zeros(2 * k));
        }
        for c in 0..k {
            scores[slot][c] += x_actual[(i, c)] * u_ols[i];
            scores[slot][k + c] += x2[(i, c)] * u_iv[i];
        }
    }
    let g = scores.len();
    if g < 2 {
        return Err(EstimError::SingleCluster.into());
    }
    let mut meat = DMatrix::zeros(2 * k, 2 * k);
    for s in &scores {
        for a in 0..2 * k {
            for b in 0..2 * k {
                meat[(a, b)] += s[a] * s[b];
            }
        }
    }
    let correction = g as f64 / (g as f64 - 1.0) * (n as f64 - 1.0) / (n as f64 - k as f64);
    let mut bread = DMatrix::zeros(2 * k, 2 * k);
    for a in 0..k {
        for b in 0..k {
            bread[(a, b)] = ols_fit_res.xtx_inv[(a, b)];
            bread[(k + a, k + b)] = second.xtx_inv[(a, b)];
        }
    }
    let joint = &bread * meat * bread.transpose() * correction;
    let var_diff = joint[(k, k)] + joint[(0, 0)] - 2.0 * joint[(0, k)];
    let diff = iv.endog_coef() - ols.endog_coef();
    ols.endogenous = spec.endogenous.clone();

    Ok(OlsIvComparison {
        diff,
        diff_se: var_diff.max(0.0).sqrt(),
        ols,
        iv,
    })
}

/// OLS version of a design: the endogenous column enters directly.
pub fn ols_on_frame(spec: &DesignSpec, fr: &Frame) -> Result<EstimateResult> {
    let prep = prepare(spec, fr, false)?;
    let endog_col: Vec<f64> = prep.endog.iter().copied().collect();
    let mut refs: Vec<&[f64]> = vec![&endog_col];
    refs.extend(prep.control_cols.iter().map(|c| c.as_slice()));
    let x = assemble(&refs);
    let mut names = vec![spec.endogenous.clone()];
    names.extend(prep.control_names.iter().cloned());
    let mut res = ols_fit(&prep.y, &x, &prep.cluster, &names)?;
    res.endogenous = spec.endogenous.clone();
    res.n_individuals = prep.n_individuals;
    res.n_dropped_no_variation = prep.dropped_no_variation;
    res.n_dropped_singletons = prep.dropped_singletons;
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::Observation;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obs(person_id: u64, t: i64, x: i32) -> Observation {
        Observation {
            person_id,
            t,
            x,
            birth_year: 1958,
            birth_month: 1,
            retired: 0,
            months_retired: 0,
            h_true: None,
            h_subjective: 0.0,
            h_objective_index: 0.0,
            conditions: 0,
            sah_5pt: 3,
            poor_health: 0,
            married: 1,
            health_ins: 0,
        }
    }

    fn panel(rows: Vec<Observation>) -> PanelDataset {
        PanelDataset {
            rows,
            n_conditions: 0,
            truth: None,
        }
    }

    /// Small panel where retirement flips mid-path for every person, outcomes
    /// driven by a seeded linear model with person intercepts.
    fn fixture_panel(n_persons: u64, months: i64, seed: u64) -> PanelDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for p in 1..=n_persons {
            let alpha: f64 = rng.gen_range(-2.0..2.0);
            // Everyone crosses the threshold mid-path so the demeaned
            // instrument has within-person variation.
            let entry: i32 = rng.gen_range(-(months as i32 - 2)..-1);
            let switch: i64 = rng.gen_range(1..months);
            for t in 0..months {
                let x = entry + t as i32;
                let retired = u8::from(t >= switch && x >= -5);
                let mut o = obs(p, t, x);
                o.retired = retired;
                o.h_subjective = alpha
                    + 0.7 * retired as f64
                    + 0.01 * x as f64
                    + rng.gen_range(-0.5..0.5);
                o.h_objective_index = 0.5 * o.h_subjective + rng.gen_range(-0.2..0.2);
                rows.push(o);
            }
        }
        let p = panel(rows);
        p.validate().unwrap();
        p
    }

    #[test]
    fn within_demean_examples() {
        let mut rows = Vec::new();
        for (i, v) in [1.0, 2.0, 3.0].iter().enumerate() {
            let mut o = obs(1, i as i64, i as i32);
            o.h_subjective = *v;
            rows.push(o);
        }
        let d = within_demean(&panel(rows), &["h_subjective"]).unwrap();
        assert_eq!(
            d.matrix.column(0).iter().copied().collect::<Vec<_>>(),
            vec![-1.0, 0.0, 1.0]
        );

        // Constant column becomes zeros.
        let rows: Vec<Observation> = (0..4)
            .map(|i| {
                let mut o = obs(1, i, i as i32);
                o.h_subjective = 7.5;
                o
            })
            .collect();
        let d = within_demean(&panel(rows), &["h_subjective"]).unwrap();
        assert!(d.matrix.column(0).iter().all(|&v| v == 0.0));

        // Two persons [1,3] and [10,10,10].
        let mut rows = Vec::new();
        for (i, v) in [1.0, 3.0].iter().enumerate() {
            let mut o = obs(1, i as i64, i as i32);
            o.h_subjective = *v;
            rows.push(o);
        }
        for i in 0..3 {
            let mut o = obs(2, i, i as i32);
            o.h_subjective = 10.0;
            rows.push(o);
        }
        let d = within_demean(&panel(rows), &["h_subjective"]).unwrap();
        assert_eq!(
            d.matrix.column(0).iter().copied().collect::<Vec<_>>(),
            vec![-1.0, 1.0, 0.0, 0.0, 0.0]
        );

        assert!(within_demean(&panel(vec![]), &["h_subjective"]).is_err());
    }

    #[test]
    fn within_demean_person_sums_vanish() {
        let data = fixture_panel(12, 8, 3);
        let d = within_demean(&data, &["h_subjective", "h_objective"]).unwrap();
        let mut i = 0usize;
        while i < d.kept_rows.len() {
            let pid = data.rows[d.kept_rows[i]].person_id;
            let mut j = i;
            let mut sum = 0.0;
            while j < d.kept_rows.len() && data.rows[d.kept_rows[j]].person_id == pid {
                sum += d.matrix[(j, 0)];
                j += 1;
            }
            assert!(sum.abs() < 1e-10);
            i = j;
        }
    }

    #[test]
    fn ols_fit_examples() {
        // y = 2x exactly.
        let x = DMatrix::from_row_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let y = DVector::from_row_slice(&[2.0, 4.0, 6.0, 8.0]);
        let r = ols_fit(&y, &x, &[1, 2, 3, 4], &["x".into()]).unwrap();
        assert!((r.coef[0] - 2.0).abs() < 1e-12);
        let resid = &y - &x * DVector::from_row_slice(&r.coef);
        assert!(resid.iter().all(|v| v.abs() < 1e-12));

        // Hand normal equations: slope 0.9, intercept 0.9.
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_row_slice(&[1.0, 2.0, 2.0, 4.0]);
        let r = ols_fit(&y, &x, &[1, 2, 3, 4], &["const".into(), "x".into()]).unwrap();
        assert!((r.coef[0] - 0.9).abs() < 1e-12);
        assert!((r.coef[1] - 0.9).abs() < 1e-12);

        // Duplicate column names the collinear column.
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0]);
        let err = ols_fit(&y, &x, &[1, 2, 3, 4], &["a".into(), "b".into()]).unwrap_err();
        match err {
            Error::Estimation(EstimError::SingularDesign { columns }) => {
                assert!(columns == vec!["a"] || columns == vec!["b"]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn singleton_clusters_reduce_to_hc1() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 40;
        let mut xd = Vec::new();
        let mut yv = Vec::new();
        for i in 0..n {
            let xi: f64 = rng.gen_range(-1.0..1.0);
            xd.extend([1.0, xi]);
            yv.push(0.3 + 0.8 * xi + rng.gen_range(-1.0..1.0) * (1.0 + xi.abs()));
            let _ = i;
        }
        let x = DMatrix::from_row_slice(n, 2, &xd);
        let y = DVector::from_vec(yv);
        let ids: Vec<u64> = (0..n as u64).collect();
        let fit = lstsq(&x, &y).unwrap();
        let u = &y - &x * &fit.coef;
        let v = cluster_cov(&u, &x, &ids).unwrap();

        // HC1 by hand: N/(N-K) * (X'X)^-1 (Σ u_i² x_i x_i') (X'X)^-1.
        let mut meat = DMatrix::zeros(2, 2);
        for i in 0..n {
            for a in 0..2 {
                for b in 0..2 {
                    meat[(a, b)] += u[i] * u[i] * x[(i, a)] * x[(i, b)];
                }
            }
        }
        let hc1 = &fit.xtx_inv * &meat * &fit.xtx_inv * (n as f64 / (n as f64 - 2.0));
        // G = N: the cluster factor is G/(G-1)·(N-1)/(N-K) = N/(N-K).
        for a in 0..2 {
            for b in 0..2 {
                assert!((v[(a, b)] - hc1[(a, b)]).abs() < 1e-10 * hc1[(a, a)].abs().max(1.0));
            }
        }
    }

    #[test]
    fn duplicating_clusters_leaves_coefficients_unchanged() {
        let data = fixture_panel(10, 6, 9);
        let fr = Frame::from_panel(&data);
        let mut spec = DesignSpec::assumption1();
        spec.outcome = "h_subjective".into();
        let base = tsls_on_frame(&spec, &fr).unwrap();

        let mut doubled_rows = data.rows.clone();
        for r in data.rows.clone() {
            let mut r2 = r;
            r2.person_id += 1000;
            doubled_rows.push(r2);
        }
        doubled_rows.sort_by_key(|r| (r.person_id, r.t));
        let doubled = panel(doubled_rows);
        let fr2 = Frame::from_panel(&doubled);
        let twice = tsls_on_frame(&spec, &fr2).unwrap();
        assert!((base.endog_coef() - twice.endog_coef()).abs() < 1e-9);
        assert_eq!(twice.n_individuals, 2 * base.n_individuals);
    }

    #[test]
    fn many_clusters_homoskedastic_near_classical_se() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let g = 500;
        let per = 4;
        let n = g * per;
        let mut xd = Vec::new();
        let mut yv = Vec::new();
        let mut ids = Vec::new();
        for c in 0..g {
            for _ in 0..per {
                let xi: f64 = rng.gen_range(-1.0..1.0);
                // Independent homoskedastic errors (approximately normal).
                let e: f64 = (0..12).map(|_| rng.gen_range(-0.5..0.5)).sum();
                xd.extend([1.0, xi]);
                yv.push(1.0 + 2.0 * xi + e);
                ids.push(c as u64);
            }
        }
        let x = DMatrix::from_row_slice(n, 2, &xd);
        let y = DVector::from_vec(yv);
        let fit = lstsq(&x, &y).unwrap();
        let u = &y - &x * &fit.coef;
        let v = cluster_cov(&u, &x, &ids).unwrap();
        let sigma2 = u.dot(&u) / (n as f64 - 2.0);
        let classical = (sigma2 * fit.xtx_inv[(1, 1)]).sqrt();
        let clustered = v[(1, 1)].sqrt();
        assert!(
            (clustered / classical - 1.0).abs() < 0.10,
            "clustered={clustered} classical={classical}"
        );
    }

    #[test]
    fn single_cluster_errors() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let u = DVector::from_row_slice(&[0.1, -0.2, 0.1]);
        assert!(matches!(
            cluster_cov(&u, &x, &[7, 7, 7]),
            Err(Error::Estimation(EstimError::SingleCluster))
        ));
    }

    #[test]
    fn wald_identity_binary_instrument() {
        // Just-identified, no covariates beyond the intercept: the 2SLS
        // coefficient equals the difference-in-means ratio.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 200;
        let mut y = Vec::new();
        let mut d = Vec::new();
        let mut z = Vec::new();
        let mut ids = Vec::new();
        for i in 0..n {
            let zi = f64::from(rng.gen_bool(0.5));
            let di = f64::from(rng.gen_bool(0.2 + 0.5 * zi));
            y.push(1.0 + 2.5 * di + rng.gen_range(-1.0..1.0));
            d.push(di);
            z.push(zi);
            ids.push((i / 4) as u64);
        }
        let fit = tsls_arrays(&y, &d, &[z.clone()], &[], &ids).unwrap();

        let mean = |sel: &dyn Fn(usize) -> bool, v: &[f64]| {
            let chosen: Vec<f64> = (0..n).filter(|&i| sel(i)).map(|i| v[i]).collect();
            chosen.iter().sum::<f64>() / chosen.len() as f64
        };
        let wald = (mean(&|i| z[i] == 1.0, &y) - mean(&|i| z[i] == 0.0, &y))
            / (mean(&|i| z[i] == 1.0, &d) - mean(&|i| z[i] == 0.0, &d));
        assert!(
            (fit.endog_coef() - wald).abs() < 1e-10,
            "tsls={} wald={wald}",
            fit.endog_coef()
        );
    }

    #[test]
    fn first_stage_f_is_squared_t() {
        let data = fixture_panel(20, 10, 31);
        let fr = Frame::from_panel(&data);
        let mut spec = DesignSpec::assumption1();
        spec.outcome = "h_subjective".into();
        let r = tsls_on_frame(&spec, &fr).unwrap();
        let t = r.first_stage_coef / r.first_stage_se;
        assert!((r.first_stage_f - t * t).abs() < 1e-9);
    }

    #[test]
    fn noise_instrument_is_weak() {
        let data = fixture_panel(60, 10, 41);
        let mut fr = Frame::from_panel(&data);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let noise: Vec<f64> = (0..fr.len()).map(|_| f64::from(rng.gen_bool(0.5))).collect();
        fr.set_column("noise_z", noise);
        let mut spec = DesignSpec::assumption1();
        spec.outcome = "h_subjective".into();
        spec.instruments = vec!["noise_z".into()];
        let r = tsls_on_frame(&spec, &fr).unwrap();
        assert!(r.first_stage_f < 10.0, "F={}", r.first_stage_f);
        assert!(r.weak_instruments);
    }

    #[test]
    fn fwl_demeaned_equals_explicit_dummies() {
        let data = fixture_panel(15, 8, 57);
        let fr = Frame::from_panel(&data);
        let mut spec = DesignSpec::assumption1();
        spec.outcome = "h_subjective".into();
        let within = tsls_on_frame(&spec, &fr).unwrap();

        // Explicit-dummy route on the same retained sample.
        let prep_spec = DesignSpec {
            fixed_effects: false,
            ..spec.clone()
        };
        let mut persons: Vec<u64> = data.rows.iter().map(|r| r.person_id).collect();
        persons.dedup();
        // Keep only persons with retirement variation, as the within path does.
        let varying: Vec<u64> = data
            .person_spans()
            .iter()
            .filter(|(_, span)| {
                let first = data.rows[span.start].retired;
                data.rows[span.clone()].iter().any(|r| r.retired != first)
            })
            .map(|(p, _)| *p)
            .collect();
        let rows: Vec<usize> = (0..data.rows.len())
            .filter(|&i| varying.contains(&data.rows[i].person_id))
            .collect();
        let kept = Frame::from_panel(&data).take_rows(&rows);
        let y: Vec<f64> = kept.column("h_subjective").unwrap().to_vec();
        let d: Vec<f64> = kept.column("retired").unwrap().to_vec();
        let z: Vec<f64> = kept.column("instrument").unwrap().to_vec();
        let mut controls: Vec<(String, Vec<f64>)> = vec![
            ("x_years".into(), kept.column("x_years").unwrap().to_vec()),
            ("x_years_sq".into(), kept.column("x_years_sq").unwrap().to_vec()),
        ];
        for &p in varying.iter().skip(1) {
            let dummy: Vec<f64> =
                kept.person.iter().map(|&q| f64::from(q == p)).collect();
            controls.push((format!("person_{p}"), dummy));
        }
        let lsdv = tsls_arrays(&y, &d, &[z], &controls, &kept.person).unwrap();
        assert!(
            (within.endog_coef() - lsdv.endog_coef()).abs() < 1e-8,
            "within={} lsdv={}",
            within.endog_coef(),
            lsdv.endog_coef()
        );
        let _ = prep_spec;
    }

    #[test]
    fn scale_equivariance_and_relabeling() {
        let data = fixture_panel(18, 9, 71);
        let fr = Frame::from_panel(&data);
        let mut spec = DesignSpec::assumption1();
        spec.outcome = "h_subjective".into();
        let base = tsls_on_frame(&spec, &fr).unwrap();

        let mut scaled_rows = data.rows.clone();
        for r in &mut scaled_rows {
            r.h_subjective *= 3.0;
        }
        let scaled = panel(scaled_rows);
        let r2 = tsls_on_frame(&spec, &Frame::from_panel(&scaled)).unwrap();
        assert!((r2.endog_coef() - 3.0 * base.endog_coef()).abs() < 1e-9);
        assert!((r2.endog_se() - 3.0 * base.endog_se()).abs() < 1e-9);

        // Relabeling persons leaves point estimates untouched.
        let mut relabeled_rows = data.rows.clone();
        for r in &mut relabeled_rows {
            r.person_id = r.person_id * 31 + 5;
        }
        let relabeled = panel(relabeled_rows);
        let r3 = tsls_on_frame(&spec, &Frame::from_panel(&relabeled)).unwrap();
        assert_eq!(r3.endog_coef(), base.endog_coef());

        // Determinism: refitting gives a bit-identical result.
        let again = tsls_on_frame(&spec, &fr).unwrap();
        assert_eq!(again, base);
    }

    #[test]
    fn standardize_examples() {
        let z = standardize(&[0.0, 2.0], &[0.0, 2.0]).unwrap();
        assert!((z[0] + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((z[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);

        assert!(standardize(&[1.0, 1.0], &[3.0, 3.0, 3.0]).is_err());

        let reference: Vec<f64> = (0..50).map(|i| (i as f64).sin() * 2.0 + 1.0).collect();
        let z = standardize(&reference, &reference).unwrap();
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (z.len() as f64 - 1.0);
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_instruments_rejected() {
        let data = fixture_panel(6, 6, 83);
        let fr = Frame::from_panel(&data);
        let mut spec = DesignSpec::assumption1();
        spec.instruments.clear();
        assert!(matches!(
            tsls_on_frame(&spec, &fr),
            Err(Error::Estimation(EstimError::TooFewInstruments { .. }))
        ));
    }
}
