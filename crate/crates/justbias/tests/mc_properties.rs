//! Monte Carlo properties beyond the acceptance gate: power monotonicity,
//! verdict behavior, recovery under the relative-to-objective readings,
//! variant-specific estimands, and diagnostics behavior.

use justbias::biastests::{
    run_variant, sweep_assumption1, test_assumption2_controls, test_assumption2_difference,
    Variant, Verdict, WindowSpec,
};
use justbias::estimation::frame::Frame;
use justbias::estimation::{normal_p_value, ols_iv_comparison, ols_on_frame, DesignSpec};
use justbias::mcstudy::{rejection_rate, run_mc, GridSpec};
use justbias::seeds::child_seed;
use justbias::synthpanel::{simulate_panel, DgpConfig};
use rayon::prelude::*;

const FAITHFUL_SD: f64 = 1.3752;

fn faithful() -> DgpConfig {
    let mut cfg = DgpConfig::default();
    cfg.hazard_base = -4.6;
    cfg.post_ret_slope_shift = 0.010;
    cfg.complier_jump = 0.3;
    cfg
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn mc_se(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
        / (v.len() as f64).sqrt()
}

#[test]
fn power_is_monotone_in_lambda() {
    // Rejection rate non-decreasing in λ per width over a 4-point grid,
    // allowing one inversion within two MC SEs of the rates.
    let base = faithful();
    let windows = WindowSpec::table_default();
    let spec = DesignSpec::assumption1();
    let reps = 300;
    let grid = GridSpec {
        lambda_values: vec![0.0, 0.1 * FAITHFUL_SD, 0.2 * FAITHFUL_SD, 0.3 * FAITHFUL_SD],
        sigma_nu_values: vec![base.sigma_nu],
        p_c_values: vec![0.3],
        n_values: vec![2000],
        reps,
        master_seed: 555,
    };
    let cells = run_mc(&grid, &windows, &base, &spec).unwrap();
    for w in 0..windows.widths_months.len() {
        let mut inversions = 0;
        for pair in cells.windows(2) {
            let (lo, hi) = (pair[0].rejection_rate[w], pair[1].rejection_rate[w]);
            if hi < lo {
                inversions += 1;
                let se = |p: f64| (p * (1.0 - p) / reps as f64).sqrt().max(1e-6);
                let slack = 2.0 * (se(lo).powi(2) + se(hi).powi(2)).sqrt();
                assert!(
                    lo - hi <= slack,
                    "width {}: inversion {lo:.3} -> {hi:.3} beyond 2 MC SEs",
                    windows.widths_months[w]
                );
            }
        }
        assert!(
            inversions <= 1,
            "width {}: {} inversions",
            windows.widths_months[w],
            inversions
        );
    }
    // Power grows visibly at the narrowest width.
    assert!(cells[3].rejection_rate[0] > cells[0].rejection_rate[0] + 0.3);
}

#[test]
fn verdicts_follow_the_injected_world() {
    let windows = WindowSpec::table_default();
    let spec = DesignSpec::assumption1();
    let reps = 60u64;

    // Slope-only real effect: no evidence of bias in the clear majority.
    let verdicts: Vec<Verdict> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut cfg = faithful();
            cfg.n_individuals = 3000;
            cfg.seed = child_seed(661, rep);
            let data = simulate_panel(&cfg).unwrap();
            sweep_assumption1(&data, &windows, &spec).unwrap().verdict
        })
        .collect();
    let no_evidence = verdicts
        .iter()
        .filter(|v| **v == Verdict::NoEvidenceOfBias)
        .count();
    assert!(
        no_evidence as f64 / reps as f64 > 0.5,
        "NoEvidenceOfBias in only {no_evidence}/{reps}"
    );

    // Injected bias of 0.8 SD: evidence, and the narrowest-window estimate
    // recovers it.
    let results: Vec<(Verdict, f64)> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut cfg = faithful();
            cfg.n_individuals = 3000;
            cfg.lambda = 0.8 * FAITHFUL_SD;
            cfg.seed = child_seed(662, rep);
            let data = simulate_panel(&cfg).unwrap();
            let hs: Vec<f64> = data.rows.iter().map(|r| r.h_subjective).collect();
            let sd = {
                let m = mean(&hs);
                (hs.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
                    / (hs.len() as f64 - 1.0))
                    .sqrt()
            };
            let sweep = sweep_assumption1(&data, &windows, &spec).unwrap();
            let est = sweep.entries[0].as_ref().unwrap().endog_coef();
            (sweep.verdict, est - cfg.lambda / sd)
        })
        .collect();
    let evidence = results
        .iter()
        .filter(|(v, _)| *v == Verdict::EvidenceOfBias)
        .count();
    assert!(
        evidence as f64 / reps as f64 > 0.9,
        "EvidenceOfBias in only {evidence}/{reps}"
    );
    let gaps: Vec<f64> = results.iter().map(|(_, g)| *g).collect();
    let bias = mean(&gaps);
    assert!(bias.abs() < 0.15, "recovery gap {bias}");
    assert!(bias.abs() < 3.0 * mc_se(&gaps), "recovery gap {bias} beyond 3 MC SEs");
}

#[test]
fn assumption2_readings_recover_the_bias() {
    let windows = WindowSpec::table_default();
    let spec = DesignSpec::assumption1();
    let reps = 100u64;
    for lambda_mult in [0.0, 0.7] {
        let outcomes: Vec<(f64, f64, bool, bool)> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut cfg = faithful();
                cfg.n_individuals = 3000;
                cfg.lambda = lambda_mult * FAITHFUL_SD;
                cfg.seed = child_seed(771 + lambda_mult as u64, rep);
                let data = simulate_panel(&cfg).unwrap();
                let hs: Vec<f64> = data.rows.iter().map(|r| r.h_subjective).collect();
                let m = mean(&hs);
                let sd = (hs.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
                    / (hs.len() as f64 - 1.0))
                    .sqrt();
                let target = cfg.lambda / sd;
                let diff = test_assumption2_difference(&data, &windows, &spec).unwrap();
                let ctrl = test_assumption2_controls(&data, &windows, &spec).unwrap();
                let d0 = diff.entries[0].as_ref().unwrap();
                let c0 = ctrl.entries[0].as_ref().unwrap();
                (
                    d0.endog_coef() - target,
                    c0.endog_coef() - target,
                    normal_p_value(d0.endog_t()) < 0.05,
                    normal_p_value(c0.endog_t()) < 0.05,
                )
            })
            .collect();
        let dgaps: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
        let cgaps: Vec<f64> = outcomes.iter().map(|o| o.1).collect();
        assert!(
            mean(&dgaps).abs() < 3.0 * mc_se(&dgaps),
            "difference reading bias {} at λ={lambda_mult}·SD",
            mean(&dgaps)
        );
        assert!(
            mean(&cgaps).abs() < 3.0 * mc_se(&cgaps),
            "controls reading bias {} at λ={lambda_mult}·SD",
            mean(&cgaps)
        );
        if lambda_mult == 0.0 {
            let insig = outcomes.iter().filter(|o| !o.3).count() as f64 / reps as f64;
            assert!(insig >= 0.90, "controls reading insignificant in {insig}");
        }
    }
}

#[test]
fn indirect_estimators_agree_without_bias_channels() {
    // With reporting noise and bias both off, OLS and IV estimate the same
    // projection, pinned by a large-sample fit on latent health itself.
    let reps = 80u64;
    let cell = |seed: u64| -> DgpConfig {
        let mut cfg = DgpConfig::default();
        cfg.n_individuals = 1200;
        cfg.complier_jump = 0.3;
        cfg.post_ret_slope_shift = 0.0;
        cfg.random_walk_sd = 0.15;
        cfg.theta_h = 1.2;
        cfg.condition_thresholds = vec![0.23; 7];
        cfg.condition_noise_sd = 1.5;
        cfg.sigma_nu = 0.0;
        cfg.lambda = 0.0;
        cfg.seed = seed;
        cfg
    };

    // Oracle: the within projection of retirement on latent health with the
    // same controls, on a large sample.
    let mut big = cell(child_seed(881, u64::MAX));
    big.n_individuals = 30_000;
    let data = simulate_panel(&big).unwrap();
    let mut fr = Frame::from_panel(&data);
    let mut controls = fr.add_age_year_dummies();
    controls.extend(fr.add_survey_year_dummies());
    controls.push("married".into());
    let spec = DesignSpec {
        outcome: "retired".into(),
        endogenous: "h_true".into(),
        instruments: vec![],
        exog_controls: controls,
        fixed_effects: true,
        cluster_by: "person_id".into(),
        age_poly_order: 0,
        piecewise_slope: false,
    };
    let oracle = ols_on_frame(&spec, &fr).unwrap().endog_coef();

    let pairs: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let cfg = cell(child_seed(881, rep));
            let data = simulate_panel(&cfg).unwrap();
            let r = justbias::biastests::indirect_test(&data).unwrap();
            (r.ols.endog_coef(), r.iv.endog_coef())
        })
        .collect();
    let ols: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let iv: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let gap: Vec<f64> = pairs.iter().map(|p| p.1 - p.0).collect();
    assert!(
        mean(&gap).abs() < 3.0 * mc_se(&gap),
        "OLS {} vs IV {} differ beyond 3 MC SEs",
        mean(&ols),
        mean(&iv)
    );
    assert!(
        (mean(&ols) - oracle).abs() < 3.0 * mc_se(&ols) + 0.01 * oracle.abs(),
        "OLS {} vs oracle {oracle}",
        mean(&ols)
    );
    assert!(
        (mean(&iv) - oracle).abs() < 3.0 * mc_se(&iv) + 0.01 * oracle.abs(),
        "IV {} vs oracle {oracle}",
        mean(&iv)
    );
}

#[test]
fn piecewise_variant_recovers_slope_shift() {
    // Everyone retires at the threshold, so months retired equals the
    // post-threshold age and the slope-shift term (in years) carries twelve
    // times the monthly drift.
    let delta = 0.02;
    let reps = 40u64;
    let windows = WindowSpec::new(vec![40, 60]).unwrap();
    let mut spec = DesignSpec::assumption1();
    spec.outcome = "h_subjective".into();
    let estimates: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut cfg = DgpConfig::default();
            cfg.n_individuals = 800;
            cfg.hazard_base = -30.0;
            cfg.hazard_age = 0.0;
            cfg.theta_h = 0.0;
            cfg.complier_jump = 1.0;
            cfg.post_ret_slope_shift = delta;
            // No curvature: the linear-plus-kink specification is then the
            // true health path and the kink coefficient is exactly 12*delta.
            cfg.age_curve = 0.0;
            cfg.entry_age_min = -53;
            cfg.entry_age_max = 0;
            cfg.seed = child_seed(991, rep);
            let data = simulate_panel(&cfg).unwrap();
            let sweep = run_variant(&data, &windows, Variant::PiecewiseSlope, &spec).unwrap();
            sweep.entries[1]
                .as_ref()
                .unwrap()
                .coef_of("x_years_post")
                .unwrap()
        })
        .collect();
    let m = mean(&estimates);
    let target = 12.0 * delta;
    assert!(
        (m - target).abs() < 3.0 * mc_se(&estimates).max(1e-6) + 1e-3,
        "slope shift {m} vs {target}"
    );
}

#[test]
fn binary_outcome_variant_detects_cutpoint_shift() {
    let windows = WindowSpec::table_default();
    let spec = DesignSpec::assumption1();
    let reps = 60u64;
    for (lambda_mult, expect_sig) in [(1.2, true), (0.0, false)] {
        let sig: usize = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut cfg = faithful();
                cfg.n_individuals = 3000;
                cfg.lambda = lambda_mult * FAITHFUL_SD;
                cfg.seed = child_seed(1100 + lambda_mult as u64, rep);
                let data = simulate_panel(&cfg).unwrap();
                let sweep =
                    run_variant(&data, &windows, Variant::BinaryOutcome, &spec).unwrap();
                let r = sweep.entries[0].as_ref().unwrap();
                usize::from(normal_p_value(r.endog_t()) < 0.05 && r.endog_coef() > 0.0)
            })
            .sum();
        let rate = sig as f64 / reps as f64;
        if expect_sig {
            assert!(rate >= 0.90, "poor-health effect detected in only {rate}");
        } else {
            assert!(rate <= 0.12, "spurious poor-health effect in {rate}");
        }
    }
}

#[test]
fn failed_narrow_windows_are_counted_not_fatal() {
    // A tiny world cannot estimate one-month windows; the cell must still
    // aggregate and report the failures.
    let mut base = DgpConfig::default();
    base.complier_jump = 0.3;
    let grid = GridSpec {
        lambda_values: vec![0.0],
        sigma_nu_values: vec![base.sigma_nu],
        p_c_values: vec![0.3],
        n_values: vec![25],
        reps: 10,
        master_seed: 1200,
    };
    let windows = WindowSpec::new(vec![1, 2, 40]).unwrap();
    let cells = run_mc(&grid, &windows, &base, &DesignSpec::assumption1()).unwrap();
    let cell = &cells[0];
    assert_eq!(cell.failures[0], 10, "one-month windows must all fail");
    assert!(
        cell.failures[2] < 10,
        "wide windows should mostly estimate: {:?}",
        cell.failures
    );
}

#[test]
fn weak_instrument_f_distribution() {
    // A pure-noise instrument stays below the F=10 screen in nearly every
    // replication; a sure complier jump produces an enormous F.
    let reps = 100u64;
    let below: usize = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut cfg = DgpConfig::default();
            cfg.n_individuals = 300;
            cfg.complier_jump = 0.3;
            cfg.seed = child_seed(1300, rep);
            let data = simulate_panel(&cfg).unwrap();
            let mut fr = Frame::from_panel(&data);
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(
                child_seed(1301, rep),
            );
            let noise: Vec<f64> = (0..fr.len())
                .map(|_| f64::from(rand::Rng::gen_bool(&mut rng, 0.5)))
                .collect();
            fr.set_column("noise_z", noise);
            let mut spec = DesignSpec::assumption1();
            spec.instruments = vec!["noise_z".into()];
            match justbias::estimation::tsls_on_frame(&spec, &fr) {
                Ok(r) => usize::from(r.first_stage_f < 10.0),
                Err(_) => 1,
            }
        })
        .sum();
    assert!(
        below as f64 / reps as f64 >= 0.95,
        "noise instrument below F=10 in only {below}/{reps}"
    );

    let mut cfg = DgpConfig::default();
    cfg.n_individuals = 2000;
    cfg.complier_jump = 1.0;
    cfg.hazard_base = -30.0;
    cfg.hazard_age = 0.0;
    cfg.theta_h = 0.0;
    cfg.entry_age_min = -53;
    cfg.entry_age_max = 0;
    let data = simulate_panel(&cfg).unwrap();
    assert!(data.rows.len() >= 100_000);
    let r = justbias::estimation::tsls_fit(&DesignSpec::assumption1(), &data).unwrap();
    assert!(r.first_stage_f > 1000.0, "F = {}", r.first_stage_f);
}

#[test]
fn rejection_rate_under_null_t() {
    // Standard-normal t-ratios reject near the level.
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(77);
    let t: Vec<f64> = (0..10_000)
        .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect();
    let ones = vec![1.0; t.len()];
    let r = rejection_rate(&t, &ones, 0.05).unwrap();
    assert!((r - 0.05).abs() < 0.01);
}

#[test]
fn indirect_dominance_classification() {
    // One replication per regime with the tuned worlds: the classifier calls
    // the dominant channel through the two-SE separation rule.
    let mut attenuation = DgpConfig::default();
    attenuation.n_individuals = 5000;
    attenuation.complier_jump = 0.3;
    attenuation.post_ret_slope_shift = 0.0;
    attenuation.random_walk_sd = 0.15;
    attenuation.theta_h = 1.2;
    attenuation.condition_thresholds = vec![0.23; 7];
    attenuation.condition_noise_sd = 1.5;
    attenuation.sigma_nu = 1.0;
    attenuation.seed = 4100;
    let data = simulate_panel(&attenuation).unwrap();
    let r = justbias::biastests::indirect_test(&data).unwrap();
    assert_eq!(
        r.dominance,
        justbias::biastests::Dominance::AttenuationDominates,
        "diff {} se {}",
        r.diff,
        r.diff_se
    );

    let mut justification = attenuation.clone();
    justification.sigma_nu = 0.0;
    justification.lambda = 1.5;
    justification.seed = 4200;
    let data = simulate_panel(&justification).unwrap();
    let r = justbias::biastests::indirect_test(&data).unwrap();
    assert_eq!(
        r.dominance,
        justbias::biastests::Dominance::JustificationDominates
    );

    // Weak objective instruments force the inconclusive flag.
    let mut weak = attenuation.clone();
    weak.random_walk_sd = 0.0;
    weak.sigma_nu = 1.5;
    weak.n_individuals = 400;
    weak.seed = 4300;
    let data = simulate_panel(&weak).unwrap();
    let r = justbias::biastests::indirect_test(&data).unwrap();
    assert!(r.weak_instruments);
    assert_eq!(
        r.dominance,
        justbias::biastests::Dominance::Indistinguishable
    );

    // Both comparisons run on the identical retained sample.
    assert_eq!(r.ols.n_obs, r.iv.n_obs);
    assert_eq!(r.ols.n_individuals, r.iv.n_individuals);
    let _ = ols_iv_comparison;
}
