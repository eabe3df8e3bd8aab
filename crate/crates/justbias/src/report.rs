//! Report rendering: star-annotated coefficient cells, sweep tables as CSV,
//! and deterministic SVG trace charts.

use crate::biastests::{IndirectResult, WindowSweepResult};
use crate::estimation::{normal_critical, normal_p_value};
use crate::thinning::PairedSeTraces;

/// Significance stars: `***` p<0.01, `**` p<0.05, `*` p<0.1, all strict, on
/// the normal reference distribution.
pub fn stars(t: f64) -> &'static str {
    let p = normal_p_value(t);
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

/// Three decimals for values at least 0.1 in magnitude, four below: the
/// table convention (second stages like `1.087`, first stages like
/// `0.0462`).
fn fmt_val(v: f64) -> String {
    if v.abs() >= 0.1 {
        format!("{v:.3}")
    } else {
        format!("{v:.4}")
    }
}

/// A coefficient cell in the table convention: `1.087** (0.492)`.
pub fn format_cell(coef: f64, se: f64) -> String {
    format!("{}{} ({})", fmt_val(coef), stars(coef / se), fmt_val(se))
}

/// One sweep as CSV: raw numeric columns for machines plus formatted cells.
pub fn sweep_table_csv(sweep: &WindowSweepResult) -> String {
    let mut out = String::new();
    out.push_str(
        "width_months,coef,se,cell,ci_lo,ci_hi,first_stage_coef,first_stage_se,\
         first_stage_cell,first_stage_f,n_obs,n_individuals,dropped_no_variation,\
         dropped_singletons,gap_reason\n",
    );
    let z = normal_critical(0.05);
    for (i, w) in sweep.widths.iter().enumerate() {
        match &sweep.entries[i] {
            Ok(r) => {
                let coef = r.endog_coef();
                let se = r.endog_se();
                out.push_str(&format!(
                    "{w},{coef},{se},{},{},{},{},{},{},{},{},{},{},{},\n",
                    format_cell(coef, se),
                    coef - z * se,
                    coef + z * se,
                    r.first_stage_coef,
                    r.first_stage_se,
                    format_cell(r.first_stage_coef, r.first_stage_se),
                    r.first_stage_f,
                    r.n_obs,
                    r.n_individuals,
                    r.n_dropped_no_variation,
                    r.n_dropped_singletons,
                ));
            }
            Err(reason) => {
                out.push_str(&format!(
                    "{w},,,,,,,,,,,,,,\"{}\"\n",
                    reason.replace('"', "'")
                ));
            }
        }
    }
    if !sweep.warnings.is_empty() {
        out.push_str(&format!(
            "# warnings: {}\n",
            sweep.warnings.join(" | ")
        ));
    }
    out
}

/// The indirect comparison as structured text.
pub fn indirect_report(r: &IndirectResult) -> String {
    let mut out = String::new();
    out.push_str("indirect_test:\n");
    out.push_str(&format!(
        "  ols: {}\n",
        format_cell(r.ols.endog_coef(), r.ols.endog_se())
    ));
    out.push_str(&format!(
        "  iv: {}\n",
        format_cell(r.iv.endog_coef(), r.iv.endog_se())
    ));
    out.push_str(&format!("  iv_minus_ols: {}\n", r.diff));
    out.push_str(&format!("  diff_se: {}\n", r.diff_se));
    out.push_str(&format!("  first_stage_f: {}\n", r.iv.first_stage_f));
    out.push_str(&format!("  weak_instruments: {}\n", r.weak_instruments));
    out.push_str(&format!("  dominance: {}\n", r.dominance));
    out.push_str(&format!("  n_obs: {}\n", r.ols.n_obs));
    out.push_str(&format!("  n_individuals: {}\n", r.ols.n_individuals));
    out
}

/// Paired thinning traces as CSV.
pub fn thinning_table_csv(t: &PairedSeTraces) -> String {
    let mut out = String::from("width_months,se_monthly,se_thinned,thinned_gap_reason\n");
    for (i, w) in t.widths.iter().enumerate() {
        let m = t.se_monthly[i].map(|v| v.to_string()).unwrap_or_default();
        let th = t.se_thinned[i].map(|v| v.to_string()).unwrap_or_default();
        let gap = t.gap_reasons_thinned[i]
            .as_ref()
            .map(|s| format!("\"{}\"", s.replace('"', "'")))
            .unwrap_or_default();
        out.push_str(&format!("{w},{m},{th},{gap}\n"));
    }
    out
}

const SVG_W: f64 = 800.0;
const SVG_H: f64 = 500.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 55.0;

fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

/// Map data series to polyline segments, splitting at gaps; single points
/// render as markers.
fn polyline(
    xs: &[f64],
    ys: &[Option<f64>],
    to_px: &dyn Fn(f64, f64) -> (f64, f64),
    style: &str,
) -> String {
    let mut out = String::new();
    let mut seg: Vec<(f64, f64)> = Vec::new();
    let flush = |seg: &mut Vec<(f64, f64)>, out: &mut String| {
        if seg.len() == 1 {
            let (cx, cy) = seg[0];
            out.push_str(&format!(
                "  <circle cx=\"{}\" cy=\"{}\" r=\"3\" {style}/>\n",
                fmt2(cx),
                fmt2(cy)
            ));
        } else if seg.len() > 1 {
            let pts: Vec<String> = seg
                .iter()
                .map(|(x, y)| format!("{},{}", fmt2(*x), fmt2(*y)))
                .collect();
            out.push_str(&format!(
                "  <polyline fill=\"none\" {style} points=\"{}\"/>\n",
                pts.join(" ")
            ));
        }
        seg.clear();
    };
    for (i, y) in ys.iter().enumerate() {
        match y {
            Some(v) if v.is_finite() => seg.push(to_px(xs[i], *v)),
            _ => flush(&mut seg, &mut out),
        }
    }
    flush(&mut seg, &mut out);
    out
}

/// Render a sweep as an SVG line chart: solid coefficient line, dashed 95%
/// confidence band, dotted standard-error line, window width on the x axis.
pub fn render_trace_svg(sweep: &WindowSweepResult, title: &str) -> String {
    let xs: Vec<f64> = sweep.widths.iter().map(|&w| w as f64).collect();
    let coef = sweep.coef_trace();
    let lo = sweep.ci_lo_trace();
    let hi = sweep.ci_hi_trace();
    let se = sweep.se_trace();

    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for series in [&coef, &lo, &hi, &se] {
        for v in series.iter().flatten() {
            if v.is_finite() {
                ymin = ymin.min(*v);
                ymax = ymax.max(*v);
            }
        }
    }
    if !ymin.is_finite() || !ymax.is_finite() {
        ymin = -1.0;
        ymax = 1.0;
    }
    if (ymax - ymin).abs() < 1e-12 {
        ymin -= 1.0;
        ymax += 1.0;
    }
    let pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;
    let (xmin, xmax) = (xs[0], *xs.last().unwrap());
    let xspan = if (xmax - xmin).abs() < 1e-12 { 1.0 } else { xmax - xmin };

    let plot_w = SVG_W - MARGIN_L - MARGIN_R;
    let plot_h = SVG_H - MARGIN_T - MARGIN_B;
    let to_px = move |x: f64, y: f64| -> (f64, f64) {
        (
            MARGIN_L + (x - xmin) / xspan * plot_w,
            MARGIN_T + (ymax - y) / (ymax - ymin) * plot_h,
        )
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {SVG_W} {SVG_H}\" \
         width=\"{SVG_W}\" height=\"{SVG_H}\">\n"
    ));
    svg.push_str("  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"18\" font-family=\"sans-serif\" font-size=\"14\" \
         text-anchor=\"middle\">{}</text>\n",
        fmt2(SVG_W / 2.0),
        title
    ));

    // Axes.
    let x0 = MARGIN_L;
    let y0 = MARGIN_T + plot_h;
    svg.push_str(&format!(
        "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt2(x0),
        fmt2(MARGIN_T),
        fmt2(x0),
        fmt2(y0)
    ));
    svg.push_str(&format!(
        "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt2(x0),
        fmt2(y0),
        fmt2(MARGIN_L + plot_w),
        fmt2(y0)
    ));

    // Zero line when visible.
    if ymin < 0.0 && ymax > 0.0 {
        let (_, zy) = to_px(xmin, 0.0);
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#cccccc\"/>\n",
            fmt2(x0),
            fmt2(zy),
            fmt2(MARGIN_L + plot_w),
            fmt2(zy)
        ));
    }

    // Ticks.
    for i in 0..=5 {
        let yv = ymin + (ymax - ymin) * i as f64 / 5.0;
        let (_, py) = to_px(xmin, yv);
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt2(x0 - 4.0),
            fmt2(py),
            fmt2(x0),
            fmt2(py)
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{}</text>\n",
            fmt2(x0 - 7.0),
            fmt2(py + 4.0),
            fmt2(yv)
        ));
    }
    let n_xticks = (sweep.widths.len() - 1).min(6).max(1);
    for i in 0..=n_xticks {
        let xv = xmin + xspan * i as f64 / n_xticks as f64;
        let (px, _) = to_px(xv, ymin);
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt2(px),
            fmt2(y0),
            fmt2(px),
            fmt2(y0 + 4.0)
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">{}</text>\n",
            fmt2(px),
            fmt2(y0 + 18.0),
            fmt2(xv)
        ));
    }
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
         text-anchor=\"middle\">window width (months)</text>\n",
        fmt2(MARGIN_L + plot_w / 2.0),
        fmt2(SVG_H - 14.0)
    ));

    // Series: solid coefficients, dashed confidence band, dotted SE.
    svg.push_str(&polyline(&xs, &coef, &to_px, "stroke=\"black\" stroke-width=\"1.5\""));
    svg.push_str(&polyline(
        &xs,
        &lo,
        &to_px,
        "stroke=\"#555555\" stroke-dasharray=\"6,4\"",
    ));
    svg.push_str(&polyline(
        &xs,
        &hi,
        &to_px,
        "stroke=\"#555555\" stroke-dasharray=\"6,4\"",
    ));
    svg.push_str(&polyline(
        &xs,
        &se,
        &to_px,
        "stroke=\"#999999\" stroke-dasharray=\"2,3\"",
    ));

    // Legend.
    let lx = MARGIN_L + plot_w - 170.0;
    let ly = MARGIN_T + 10.0;
    for (i, (style, label)) in [
        ("stroke=\"black\" stroke-width=\"1.5\"", "coefficient"),
        ("stroke=\"#555555\" stroke-dasharray=\"6,4\"", "95% CI"),
        ("stroke=\"#999999\" stroke-dasharray=\"2,3\"", "standard error"),
    ]
    .iter()
    .enumerate()
    {
        let yy = ly + 16.0 * i as f64;
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" {style}/>\n",
            fmt2(lx),
            fmt2(yy),
            fmt2(lx + 30.0),
            fmt2(yy)
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{label}</text>\n",
            fmt2(lx + 36.0),
            fmt2(yy + 4.0)
        ));
    }

    svg.push_str("</svg>\n");
    svg
}
