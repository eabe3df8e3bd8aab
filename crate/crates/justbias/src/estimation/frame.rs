//! Column view over a panel, with the derived columns the test batteries use.
//!
//! Standardized columns are computed on the rows the frame is built from, so
//! building a frame on the full analysis sample and then taking window
//! subsets keeps narrow-window coefficients on a fixed scale.
//!
//! Available columns, given a panel with k conditions:
//! `retired`, `h_subjective`, `h_objective`, `obj_count`, `sah_5pt`,
//! `poor_health`, `married`, `health_ins`, `cond_1`..`cond_k`, `instrument`,
//! `x_years`, `x_years_sq`, `x_years_post`, `z_sah`, `z_obj`, `zdiff`, and
//! `h_true` when the panel is synthetic. Dummy blocks for age in years and
//! survey year are added on demand.

use crate::error::EstimError;
use crate::panel::PanelDataset;

use super::standardize;

#[derive(Debug, Clone)]
pub struct Frame {
    pub person: Vec<u64>,
    pub t: Vec<i64>,
    pub x_months: Vec<i32>,
    names: Vec<String>,
    cols: Vec<Vec<f64>>,
    /// Columns whose derivation failed on the reference sample, with why.
    missing: Vec<(String, EstimError)>,
}

impl Frame {
    pub fn from_panel(data: &PanelDataset) -> Self {
        let n = data.rows.len();
        let mut frame = Frame {
            person: data.rows.iter().map(|r| r.person_id).collect(),
            t: data.rows.iter().map(|r| r.t).collect(),
            x_months: data.rows.iter().map(|r| r.x).collect(),
            names: Vec::new(),
            cols: Vec::new(),
            missing: Vec::new(),
        };

        let grab = |f: &dyn Fn(&crate::panel::Observation) -> f64| -> Vec<f64> {
            data.rows.iter().map(f).collect()
        };

        frame.push("retired", grab(&|r| r.retired as f64));
        frame.push("h_subjective", grab(&|r| r.h_subjective));
        frame.push("h_objective", grab(&|r| r.h_objective_index));
        frame.push("obj_count", grab(&|r| r.condition_count() as f64));
        frame.push("sah_5pt", grab(&|r| r.sah_5pt as f64));
        frame.push("poor_health", grab(&|r| r.poor_health as f64));
        frame.push("married", grab(&|r| r.married as f64));
        frame.push("health_ins", grab(&|r| r.health_ins as f64));
        for k in 0..data.n_conditions {
            frame.push(
                &format!("cond_{}", k + 1),
                grab(&|r| r.condition(k) as f64),
            );
        }
        if data.rows.iter().all(|r| r.h_true.is_some()) && n > 0 {
            frame.push("h_true", grab(&|r| r.h_true.unwrap()));
        }

        let mut instrument = Vec::with_capacity(n);
        let mut x_years = Vec::with_capacity(n);
        let mut x_years_sq = Vec::with_capacity(n);
        let mut x_years_post = Vec::with_capacity(n);
        for r in &data.rows {
            let post = f64::from(r.x >= 0);
            let xy = r.x as f64 / 12.0;
            instrument.push(post);
            x_years.push(xy);
            x_years_sq.push(xy * xy);
            x_years_post.push(xy * post);
        }
        frame.push("instrument", instrument);
        frame.push("x_years", x_years);
        frame.push("x_years_sq", x_years_sq);
        frame.push("x_years_post", x_years_post);

        // Standardized outcomes on this frame's rows as the reference sample.
        let sah = frame.column("h_subjective").unwrap().to_vec();
        let obj = frame.column("h_objective").unwrap().to_vec();
        match standardize(&sah, &sah) {
            Ok(z_sah) => {
                // A constant objective index carries no usable variation, so
                // the subjective-minus-objective outcome degrades to the
                // standardized subjective outcome alone.
                let z_obj = match standardize(&obj, &obj) {
                    Ok(z) => {
                        frame.push("z_obj", z.clone());
                        z
                    }
                    Err(e) => {
                        frame.missing.push(("z_obj".into(), e));
                        vec![0.0; n]
                    }
                };
                let zdiff: Vec<f64> = z_sah.iter().zip(&z_obj).map(|(a, b)| a - b).collect();
                frame.push("z_sah", z_sah);
                frame.push("zdiff", zdiff);
            }
            Err(e) => {
                frame.missing.push(("z_sah".into(), e.clone()));
                frame.missing.push(("zdiff".into(), e));
                match standardize(&obj, &obj) {
                    Ok(z) => frame.push("z_obj", z),
                    Err(e) => frame.missing.push(("z_obj".into(), e)),
                }
            }
        }

        frame
    }

    fn push(&mut self, name: &str, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.person.len());
        self.names.push(name.to_string());
        self.cols.push(values);
    }

    pub fn len(&self) -> usize {
        self.person.len()
    }

    pub fn is_empty(&self) -> bool {
        self.person.is_empty()
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64], EstimError> {
        if let Some(i) = self.names.iter().position(|n| n == name) {
            return Ok(&self.cols[i]);
        }
        if let Some((_, e)) = self.missing.iter().find(|(n, _)| n == name) {
            return Err(e.clone());
        }
        Err(EstimError::UnknownColumn(name.to_string()))
    }

    /// Add (or replace) a column.
    pub fn set_column(&mut self, name: &str, values: Vec<f64>) {
        assert_eq!(values.len(), self.len(), "column length mismatch");
        if let Some(i) = self.names.iter().position(|n| n == name) {
            self.cols[i] = values;
        } else {
            self.push(name, values);
        }
    }

    /// Rows with centered age in [-w, w-1]: w months on each side given that
    /// the threshold month itself counts as treated.
    pub fn window(&self, w: u32) -> Result<Frame, EstimError> {
        let lo = -(w as i32);
        let hi = w as i32 - 1;
        let keep: Vec<usize> = self
            .x_months
            .iter()
            .enumerate()
            .filter(|(_, &x)| x >= lo && x <= hi)
            .map(|(i, _)| i)
            .collect();
        if keep.is_empty() {
            return Err(EstimError::EmptyWindow { width: w });
        }
        Ok(self.take_rows(&keep))
    }

    pub fn take_rows(&self, keep: &[usize]) -> Frame {
        Frame {
            person: keep.iter().map(|&i| self.person[i]).collect(),
            t: keep.iter().map(|&i| self.t[i]).collect(),
            x_months: keep.iter().map(|&i| self.x_months[i]).collect(),
            names: self.names.clone(),
            cols: self
                .cols
                .iter()
                .map(|c| keep.iter().map(|&i| c[i]).collect())
                .collect(),
            missing: self.missing.clone(),
        }
    }

    /// Contiguous person row spans, in order. Rows are grouped by person by
    /// construction (panels are sorted and subsetting preserves order).
    pub fn person_spans(&self) -> Vec<(u64, std::ops::Range<usize>)> {
        let mut spans = Vec::new();
        let mut start = 0usize;
        for i in 1..=self.person.len() {
            if i == self.person.len() || self.person[i] != self.person[start] {
                spans.push((self.person[start], start..i));
                start = i;
            }
        }
        spans
    }

    /// Add one dummy per distinct age-in-years value except the smallest,
    /// returning the added column names.
    pub fn add_age_year_dummies(&mut self) -> Vec<String> {
        let values: Vec<i32> = self
            .x_months
            .iter()
            .map(|&x| (x as f64 / 12.0).floor() as i32)
            .collect();
        self.add_dummies("age_year", &values)
    }

    /// Add one dummy per distinct survey year except the smallest.
    pub fn add_survey_year_dummies(&mut self) -> Vec<String> {
        let values: Vec<i32> = self.t.iter().map(|&t| (t / 12) as i32).collect();
        self.add_dummies("survey_year", &values)
    }

    fn add_dummies(&mut self, prefix: &str, values: &[i32]) -> Vec<String> {
        let mut levels: Vec<i32> = values.to_vec();
        levels.sort_unstable();
        levels.dedup();
        let mut names = Vec::new();
        for &level in levels.iter().skip(1) {
            let name = format!("{prefix}_{level}");
            let col: Vec<f64> = values.iter().map(|&v| f64::from(v == level)).collect();
            self.set_column(&name, col);
            names.push(name);
        }
        names
    }
}
