//! Long-format monthly panel: one row per person-month.

use crate::error::{Error, Result};
use crate::synthpanel::DgpConfig;

/// One person-month. `x` is age in months centered at the person's MRA month.
///
/// `h_true` is the latent health index; it is populated for synthetic panels
/// (for oracle checks) and absent on imported data. Binary condition
/// indicators are packed into a bitmask, bit k holding condition k+1.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub person_id: u64,
    /// Calendar month index within the survey.
    pub t: i64,
    pub x: i32,
    pub birth_year: i32,
    pub birth_month: u32,
    pub retired: u8,
    /// Months since the retirement month; the retirement month itself is 0.
    pub months_retired: u32,
    pub h_true: Option<f64>,
    pub h_subjective: f64,
    pub h_objective_index: f64,
    pub conditions: u16,
    pub sah_5pt: u8,
    pub poor_health: u8,
    pub married: u8,
    pub health_ins: u8,
}

impl Observation {
    pub fn condition(&self, k: usize) -> u8 {
        ((self.conditions >> k) & 1) as u8
    }

    pub fn condition_count(&self) -> u32 {
        self.conditions.count_ones()
    }
}

/// Rows sorted by (person_id, t). `truth` echoes the generating configuration
/// for synthetic panels and is withheld on export.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    pub rows: Vec<Observation>,
    pub n_conditions: usize,
    pub truth: Option<DgpConfig>,
}

impl PanelDataset {
    /// Validate the dataset invariants, reporting the first violating row.
    ///
    /// Within each person t must be strictly increasing with no duplicate
    /// (person_id, t), and x must move in lockstep with t (one month of age
    /// per calendar month), which accommodates thinned panels.
    pub fn validate(&self) -> Result<()> {
        if self.n_conditions > 16 {
            return Err(Error::Data(format!(
                "n_conditions {} exceeds the supported maximum of 16",
                self.n_conditions
            )));
        }
        for (i, row) in self.rows.iter().enumerate() {
            let rowno = i + 1;
            if !(1..=5).contains(&row.sah_5pt) {
                return Err(Error::Data(format!(
                    "row {rowno}: sah_5pt {} out of range 1-5",
                    row.sah_5pt
                )));
            }
            for (name, v) in [
                ("retired", row.retired),
                ("poor_health", row.poor_health),
                ("married", row.married),
                ("health_ins", row.health_ins),
            ] {
                if v > 1 {
                    return Err(Error::Data(format!("row {rowno}: {name} {v} not 0/1")));
                }
            }
            if row.poor_health != u8::from(row.sah_5pt >= 4) {
                return Err(Error::Data(format!(
                    "row {rowno}: poor_health {} inconsistent with sah_5pt {}",
                    row.poor_health, row.sah_5pt
                )));
            }
            if i > 0 {
                let prev = &self.rows[i - 1];
                if prev.person_id > row.person_id {
                    return Err(Error::Data(format!(
                        "row {rowno}: rows not sorted by person_id"
                    )));
                }
                if prev.person_id == row.person_id {
                    if prev.t == row.t {
                        return Err(Error::Data(format!(
                            "row {rowno}: duplicate (person_id, t) = ({}, {})",
                            row.person_id, row.t
                        )));
                    }
                    if prev.t > row.t {
                        return Err(Error::Data(format!(
                            "row {rowno}: t not increasing within person {}",
                            row.person_id
                        )));
                    }
                    if row.x as i64 - prev.x as i64 != row.t - prev.t {
                        return Err(Error::Data(format!(
                            "row {rowno}: x does not advance one month per month for person {}",
                            row.person_id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Contiguous row spans per person, in dataset order.
    pub fn person_spans(&self) -> Vec<(u64, std::ops::Range<usize>)> {
        let mut spans = Vec::new();
        let mut start = 0usize;
        for i in 1..=self.rows.len() {
            if i == self.rows.len() || self.rows[i].person_id != self.rows[start].person_id {
                spans.push((self.rows[start].person_id, start..i));
                start = i;
            }
        }
        spans
    }

    pub fn n_individuals(&self) -> usize {
        self.person_spans().len()
    }
}
