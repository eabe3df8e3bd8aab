//! Cohort-specific statutory retirement ages and the centered running variable.
//!
//! Singapore's Retirement and Re-employment Act defines three statutory ages
//! that changed by birth cohort: the minimum retirement age (MRA), the pension
//! eligibility age (PEA), and the maximum re-employment age (REA). This module
//! maps a birth month to the three thresholds and converts calendar months of
//! observation into age-in-months centered at the individual's MRA month.

use crate::error::{Error, Result};

/// A calendar year-month. Used both for births and observation months.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BirthMonth {
    pub year: i32,
    /// 1–12.
    pub month: u32,
}

impl BirthMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Data(format!("month {month} out of range 1-12")));
        }
        if !(1930..=1980).contains(&year) {
            return Err(Error::Data(format!(
                "birth year {year} outside supported range 1930-1980"
            )));
        }
        Ok(Self { year, month })
    }

    /// A plain calendar month (observation date), without the birth-cohort
    /// year restriction.
    pub fn calendar(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Data(format!("month {month} out of range 1-12")));
        }
        Ok(Self { year, month })
    }

    /// Months elapsed since year 0, month 1. Total order on calendar months.
    pub fn index(&self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }
}

/// The three statutory thresholds for one birth cohort, in integer years.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatutoryAges {
    pub mra_years: u32,
    pub pea_years: u32,
    pub rea_years: u32,
}

/// Age in months relative to the month the individual reaches the MRA.
/// The MRA month itself maps to 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CenteredAge {
    pub months: i32,
}

/// Month index of a `(year, month)` cutoff, for cohort comparisons.
fn cutoff(year: i32, month: u32) -> i64 {
    year as i64 * 12 + (month as i64 - 1)
}

/// Statutory ages for a birth cohort.
///
/// Cutoffs written like "1960.7" are year-month boundaries with the right-hand
/// cohort inclusive: births in July 1960 or later belong to the MRA-63 cohort.
/// Births before January 1939 predate the earliest tabulated PEA cohort and
/// are rejected as unsupported.
pub fn statutory_ages(birth: BirthMonth) -> Result<StatutoryAges> {
    let b = birth.index();
    if b < cutoff(1939, 1) {
        return Err(Error::Data(format!(
            "unsupported cohort: birth {}-{:02} predates 1939-01",
            birth.year, birth.month
        )));
    }

    let mra_years = if b < cutoff(1960, 7) { 62 } else { 63 };

    let pea_years = if b < cutoff(1950, 1) {
        62
    } else if b < cutoff(1952, 1) {
        63
    } else if b < cutoff(1954, 1) {
        64
    } else {
        65
    };

    let rea_years = if b < cutoff(1952, 7) {
        65
    } else if b < cutoff(1955, 7) {
        67
    } else {
        68
    };

    Ok(StatutoryAges {
        mra_years,
        pea_years,
        rea_years,
    })
}

/// Age at `observation`, in months, centered at the MRA month: the month in
/// which the individual turns exactly MRA maps to 0.
pub fn center_age(birth: BirthMonth, observation: BirthMonth) -> Result<CenteredAge> {
    if observation.index() < birth.index() {
        return Err(Error::Data(format!(
            "observation {}-{:02} precedes birth {}-{:02}",
            observation.year, observation.month, birth.year, birth.month
        )));
    }
    let ages = statutory_ages(birth)?;
    let age_months = observation.index() - birth.index();
    let months = age_months - 12 * ages.mra_years as i64;
    Ok(CenteredAge {
        months: months as i32,
    })
}

/// Threshold indicator: 1 from the MRA month onward, 0 before.
///
/// The MRA month itself counts as treated; retirement incentives bind from
/// the month the statutory age is reached.
pub fn instrument(x: CenteredAge) -> u8 {
    u8::from(x.months >= 0)
}
