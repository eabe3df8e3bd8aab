//! Long-format panel CSV: export of synthetic panels (truth fields withheld)
//! and validated import of externally produced files with the same schema.
//!
//! Header: `person_id,t,birth_year,birth_month,x_months,retired,sah_5pt,`
//! `poor_health,h_subjective,obj_index,cond_1..cond_k,married,health_ins`,
//! one row per person-month, floats in plain decimal text, booleans 0/1.
//! Rows must be grouped by person with increasing t.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::panel::{Observation, PanelDataset};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn header(n_conditions: usize) -> String {
    let mut cols = vec![
        "person_id".to_string(),
        "t".into(),
        "birth_year".into(),
        "birth_month".into(),
        "x_months".into(),
        "retired".into(),
        "sah_5pt".into(),
        "poor_health".into(),
        "h_subjective".into(),
        "obj_index".into(),
    ];
    for k in 1..=n_conditions {
        cols.push(format!("cond_{k}"));
    }
    cols.push("married".into());
    cols.push("health_ins".into());
    cols.join(",")
}

/// Serialize the panel. Latent truth columns are withheld; floats use the
/// shortest round-trip decimal form, so export/import is lossless.
pub fn panel_to_csv(data: &PanelDataset) -> String {
    let mut out = String::with_capacity(64 * (data.rows.len() + 1));
    out.push_str(&header(data.n_conditions));
    out.push('\n');
    for r in &data.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}",
            r.person_id,
            r.t,
            r.birth_year,
            r.birth_month,
            r.x,
            r.retired,
            r.sah_5pt,
            r.poor_health,
            r.h_subjective,
            r.h_objective_index
        ));
        for k in 0..data.n_conditions {
            out.push(',');
            out.push_str(if r.condition(k) == 1 { "1" } else { "0" });
        }
        out.push_str(&format!(",{},{}\n", r.married, r.health_ins));
    }
    out
}

pub fn export_panel_csv(data: &PanelDataset, path: &Path) -> Result<()> {
    fs::write(path, panel_to_csv(data)).map_err(|e| io_err(path, e))
}

/// Parse and validate a panel CSV. Violations are reported with the
/// offending data row number (the header is row 0).
pub fn import_panel_csv(path: &Path) -> Result<PanelDataset> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    panel_from_csv(&text)
}

pub fn panel_from_csv(text: &str) -> Result<PanelDataset> {
    let mut lines = text.lines();
    let head = lines
        .next()
        .ok_or_else(|| Error::Data("empty file: missing header".into()))?;
    let cols: Vec<&str> = head.split(',').collect();

    let fixed_lead = [
        "person_id",
        "t",
        "birth_year",
        "birth_month",
        "x_months",
        "retired",
        "sah_5pt",
        "poor_health",
        "h_subjective",
        "obj_index",
    ];
    for (i, want) in fixed_lead.iter().enumerate() {
        match cols.get(i) {
            Some(got) if got == want => {}
            Some(got) => {
                return Err(Error::Data(format!(
                    "header column {i}: expected '{want}', found '{got}'"
                )))
            }
            None => return Err(Error::Data(format!("missing column '{want}'"))),
        }
    }
    let mut n_conditions = 0usize;
    let mut idx = fixed_lead.len();
    while idx < cols.len() && cols[idx] == format!("cond_{}", n_conditions + 1) {
        n_conditions += 1;
        idx += 1;
    }
    for want in ["married", "health_ins"] {
        match cols.get(idx) {
            Some(got) if *got == want => idx += 1,
            Some(got) => {
                return Err(Error::Data(format!(
                    "header column {idx}: expected '{want}', found '{got}'"
                )))
            }
            None => return Err(Error::Data(format!("missing column '{want}'"))),
        }
    }
    if idx != cols.len() {
        return Err(Error::Data(format!(
            "unexpected trailing header column '{}'",
            cols[idx]
        )));
    }
    let n_fields = cols.len();

    let mut rows: Vec<Observation> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let rowno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_fields {
            return Err(Error::Data(format!(
                "row {rowno}: {} fields, expected {n_fields}",
                fields.len()
            )));
        }
        let parse_u64 = |i: usize, name: &str| -> Result<u64> {
            fields[i]
                .parse()
                .map_err(|_| Error::Data(format!("row {rowno}: bad {name} '{}'", fields[i])))
        };
        let parse_i64 = |i: usize, name: &str| -> Result<i64> {
            fields[i]
                .parse()
                .map_err(|_| Error::Data(format!("row {rowno}: bad {name} '{}'", fields[i])))
        };
        let parse_f64 = |i: usize, name: &str| -> Result<f64> {
            let v: f64 = fields[i]
                .parse()
                .map_err(|_| Error::Data(format!("row {rowno}: bad {name} '{}'", fields[i])))?;
            if !v.is_finite() {
                return Err(Error::Data(format!("row {rowno}: non-finite {name}")));
            }
            Ok(v)
        };
        let parse_bit = |i: usize, name: &str| -> Result<u8> {
            match fields[i] {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(Error::Data(format!(
                    "row {rowno}: {name} '{other}' not 0/1"
                ))),
            }
        };

        let sah: u8 = fields[6]
            .parse()
            .map_err(|_| Error::Data(format!("row {rowno}: bad sah_5pt '{}'", fields[6])))?;
        if !(1..=5).contains(&sah) {
            return Err(Error::Data(format!(
                "row {rowno}: sah_5pt {sah} out of range 1-5"
            )));
        }
        let mut conditions: u16 = 0;
        for k in 0..n_conditions {
            if parse_bit(10 + k, &format!("cond_{}", k + 1))? == 1 {
                conditions |= 1 << k;
            }
        }

        let row = Observation {
            person_id: parse_u64(0, "person_id")?,
            t: parse_i64(1, "t")?,
            birth_year: parse_i64(2, "birth_year")? as i32,
            birth_month: parse_u64(3, "birth_month")? as u32,
            x: parse_i64(4, "x_months")? as i32,
            retired: parse_bit(5, "retired")?,
            months_retired: 0,
            h_true: None,
            h_subjective: parse_f64(8, "h_subjective")?,
            h_objective_index: parse_f64(9, "obj_index")?,
            conditions,
            sah_5pt: sah,
            poor_health: parse_bit(7, "poor_health")?,
            married: parse_bit(10 + n_conditions, "married")?,
            health_ins: parse_bit(11 + n_conditions, "health_ins")?,
        };
        if !(1..=12).contains(&row.birth_month) {
            return Err(Error::Data(format!(
                "row {rowno}: birth_month {} out of range 1-12",
                row.birth_month
            )));
        }
        rows.push(row);
    }

    // Reconstruct months-retired within the observed sample: the first
    // retired row of a spell is month 0 and calendar gaps count.
    let mut i = 0usize;
    while i < rows.len() {
        if rows[i].retired == 1 {
            let same_person_retired =
                i > 0 && rows[i - 1].person_id == rows[i].person_id && rows[i - 1].retired == 1;
            if same_person_retired {
                let gap = (rows[i].t - rows[i - 1].t).max(0) as u32;
                rows[i].months_retired = rows[i - 1].months_retired + gap;
            } else {
                rows[i].months_retired = 0;
            }
        }
        i += 1;
    }

    let data = PanelDataset {
        rows,
        n_conditions,
        truth: None,
    };
    data.validate()?;
    Ok(data)
}
