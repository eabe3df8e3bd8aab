//! Degrade a monthly panel to a biennial survey and compare the precision of
//! the window sweep on both.
//!
//! Each person keeps one row per 24-month block at a uniformly drawn
//! interview phase, so observations that share an age spread over 24 phase
//! groups just as they would under a biennial design with heterogeneous
//! birth months.

use crate::biastests::{sweep_assumption1, WindowSpec};
use crate::error::Result;
use crate::estimation::DesignSpec;
use crate::panel::PanelDataset;
use crate::seeds::child_seed;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A thinned panel plus the per-person interview phase used.
#[derive(Debug, Clone)]
pub struct ThinnedDataset {
    pub panel: PanelDataset,
    /// (person_id, phase in 0..24), dataset order.
    pub phases: Vec<(u64, u32)>,
}

/// Keep rows where (t - phase) is a multiple of 24, with a uniform random
/// phase per person. The random phase avoids a systematic interview-date
/// bias; retained rows are exactly 24 months apart within person.
pub fn thin_biennial(data: &PanelDataset, seed: u64) -> ThinnedDataset {
    let mut phases = Vec::new();
    let mut rows = Vec::new();
    for (pid, span) in data.person_spans() {
        let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, pid));
        let phase: u32 = rng.gen_range(0..24);
        phases.push((pid, phase));
        for row in &data.rows[span] {
            if (row.t - phase as i64).rem_euclid(24) == 0 {
                rows.push(row.clone());
            }
        }
    }
    ThinnedDataset {
        panel: PanelDataset {
            rows,
            n_conditions: data.n_conditions,
            truth: data.truth.clone(),
        },
        phases,
    }
}

/// Aligned standard-error traces of the same sweep on the monthly panel and
/// on its thinned copy. Widths where a panel cannot be estimated appear as
/// gaps.
#[derive(Debug, Clone)]
pub struct PairedSeTraces {
    pub widths: Vec<u32>,
    pub se_monthly: Vec<Option<f64>>,
    pub se_thinned: Vec<Option<f64>>,
    pub gap_reasons_thinned: Vec<Option<String>>,
}

impl PairedSeTraces {
    /// Width cells where both panels produced an estimate.
    pub fn estimable_pairs(&self) -> Vec<(u32, f64, f64)> {
        self.widths
            .iter()
            .zip(self.se_monthly.iter().zip(&self.se_thinned))
            .filter_map(|(&w, (m, t))| match (m, t) {
                (Some(m), Some(t)) => Some((w, *m, *t)),
                _ => None,
            })
            .collect()
    }
}

/// Run the main sweep on both panels and pair the standard errors by width.
pub fn compare_se_traces(
    monthly: &PanelDataset,
    thinned: &ThinnedDataset,
    windows: &WindowSpec,
    spec: &DesignSpec,
) -> Result<PairedSeTraces> {
    let sweep_m = sweep_assumption1(monthly, windows, spec)?;
    let sweep_t = sweep_assumption1(&thinned.panel, windows, spec)?;
    let gap_reasons_thinned = sweep_t
        .entries
        .iter()
        .map(|e| e.as_ref().err().cloned())
        .collect();
    Ok(PairedSeTraces {
        widths: windows.widths_months.clone(),
        se_monthly: sweep_m.se_trace(),
        se_thinned: sweep_t.se_trace(),
        gap_reasons_thinned,
    })
}
