//! Baseline covariates, their scaling bounds, and which model uses which.

use serde::{Deserialize, Serialize};

use crate::basis::{categorical_expansion, scale_covariate, CovariateScale};
use crate::error::{Error, Result};

pub const HEMOGLOBIN_SCALE: CovariateScale = CovariateScale::fixed(2.2, 20.0);
pub const STUDY_TIME_SCALE: CovariateScale = CovariateScale::fixed(0.0, 730.0);
pub const INPATIENT_SCALE: CovariateScale = CovariateScale::fixed(0.0, 14.0);

/// First and last day of the study window, relative to index discharge.
pub const STUDY_START: f64 = -365.0;
pub const STUDY_END: f64 = 365.0;

/// Study day (relative to index discharge) mapped onto `[0, 1]`.
pub fn study_time_unit(t: f64) -> f64 {
    scale_covariate(t - STUDY_START, STUDY_TIME_SCALE)
}

/// Hemoglobin in g/dL mapped onto `[0, 1]`.
pub fn hemoglobin_unit(hb: f64) -> f64 {
    scale_covariate(hb, HEMOGLOBIN_SCALE)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sex {
    Male,
    Female,
}

impl Sex {
    pub fn level(self) -> usize {
        match self {
            Sex::Male => 0,
            Sex::Female => 1,
        }
    }

    /// WHO anemia threshold in g/dL.
    pub fn anemia_threshold(self) -> f64 {
        match self {
            Sex::Male => 13.0,
            Sex::Female => 12.0,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m" | "male" => Some(Sex::Male),
            "f" | "female" => Some(Sex::Female),
            _ => None,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Sex::Male => "M",
            Sex::Female => "F",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Race {
    African,
    AfricanAmerican,
    NativeAmerican,
    Asian,
    White,
    Other,
}

impl Race {
    pub const ALL: [Race; 6] = [
        Race::African,
        Race::AfricanAmerican,
        Race::NativeAmerican,
        Race::Asian,
        Race::White,
        Race::Other,
    ];

    pub fn level(self) -> usize {
        Race::ALL.iter().position(|r| *r == self).unwrap()
    }

    pub fn code(self) -> &'static str {
        match self {
            Race::African => "african",
            Race::AfricanAmerican => "african_american",
            Race::NativeAmerican => "native_american",
            Race::Asian => "asian",
            Race::White => "white",
            Race::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().to_ascii_lowercase();
        Race::ALL.iter().copied().find(|r| r.code() == s)
    }
}

/// Per-patient covariates recorded at index discharge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineCovariates {
    pub age: f64,
    pub sex: Sex,
    pub charlson: f64,
    pub supplemental_iron: bool,
    pub renal_disease: bool,
    pub metastatic_tumor: bool,
    pub other_cancer: bool,
    pub surgical_index_admit: bool,
    pub race: Race,
    pub sofa_day1: f64,
    pub rbc_units_day1: f64,
    pub index_icu_days: f64,
    pub index_hospital_days: f64,
    pub total_hospital_duration: f64,
    pub total_ed_duration: f64,
    pub total_emg_duration: f64,
    pub total_hospital_days: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Covariate {
    Age,
    Sex,
    Charlson,
    SupplementalIron,
    RenalDisease,
    MetastaticTumor,
    OtherCancer,
    SurgicalIndexAdmit,
    Race,
    SofaDay1,
    RbcUnitsDay1,
    IndexIcuDays,
    IndexHospitalDays,
    TotalHospitalDuration,
    TotalEdDuration,
    TotalEmgDuration,
    TotalHospitalDays,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovariateKind {
    Continuous(CovariateScale),
    Categorical(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovariateValue {
    Continuous(f64),
    Level(usize),
}

impl Covariate {
    pub const ALL: [Covariate; 17] = [
        Covariate::Age,
        Covariate::Sex,
        Covariate::Charlson,
        Covariate::SupplementalIron,
        Covariate::RenalDisease,
        Covariate::MetastaticTumor,
        Covariate::OtherCancer,
        Covariate::SurgicalIndexAdmit,
        Covariate::Race,
        Covariate::SofaDay1,
        Covariate::RbcUnitsDay1,
        Covariate::IndexIcuDays,
        Covariate::IndexHospitalDays,
        Covariate::TotalHospitalDuration,
        Covariate::TotalEdDuration,
        Covariate::TotalEmgDuration,
        Covariate::TotalHospitalDays,
    ];

    /// Column name in `baseline.csv` and in configuration lists.
    pub fn name(self) -> &'static str {
        match self {
            Covariate::Age => "age",
            Covariate::Sex => "sex",
            Covariate::Charlson => "charlson",
            Covariate::SupplementalIron => "supplemental_iron",
            Covariate::RenalDisease => "renal_disease",
            Covariate::MetastaticTumor => "metastatic_solid_tumor",
            Covariate::OtherCancer => "other_cancer",
            Covariate::SurgicalIndexAdmit => "surgical_index_admit",
            Covariate::Race => "race",
            Covariate::SofaDay1 => "sofa_day1",
            Covariate::RbcUnitsDay1 => "rbc_units_day1",
            Covariate::IndexIcuDays => "index_icu_days",
            Covariate::IndexHospitalDays => "index_hospital_days",
            Covariate::TotalHospitalDuration => "total_hospital_duration",
            Covariate::TotalEdDuration => "total_ed_duration",
            Covariate::TotalEmgDuration => "total_emg_duration",
            Covariate::TotalHospitalDays => "total_hospital_days",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Covariate::ALL.iter().copied().find(|c| c.name() == name.trim())
    }

    pub fn kind(self) -> CovariateKind {
        use CovariateKind::*;
        let c = |lo, hi| Continuous(CovariateScale::fixed(lo, hi));
        match self {
            Covariate::Age => c(16.0, 100.0),
            Covariate::Charlson => c(0.0, 19.0),
            Covariate::SofaDay1 => c(0.0, 20.0),
            Covariate::RbcUnitsDay1 => c(0.0, 107.0),
            Covariate::IndexIcuDays => c(0.0, 30.0),
            Covariate::IndexHospitalDays => c(0.0, 50.0),
            Covariate::TotalHospitalDuration => c(0.0, 83.0),
            Covariate::TotalEdDuration => c(0.0, 62.0),
            Covariate::TotalEmgDuration => c(0.0, 50.0),
            Covariate::TotalHospitalDays => c(0.0, 9.0),
            Covariate::Race => Categorical(Race::ALL.len()),
            Covariate::Sex
            | Covariate::SupplementalIron
            | Covariate::RenalDisease
            | Covariate::MetastaticTumor
            | Covariate::OtherCancer
            | Covariate::SurgicalIndexAdmit => Categorical(2),
        }
    }

    pub fn value(self, b: &BaselineCovariates) -> CovariateValue {
        use CovariateValue::*;
        let flag = |v: bool| Level(if v { 0 } else { 1 });
        match self {
            Covariate::Age => Continuous(b.age),
            Covariate::Sex => Level(b.sex.level()),
            Covariate::Charlson => Continuous(b.charlson),
            Covariate::SupplementalIron => flag(b.supplemental_iron),
            Covariate::RenalDisease => flag(b.renal_disease),
            Covariate::MetastaticTumor => flag(b.metastatic_tumor),
            Covariate::OtherCancer => flag(b.other_cancer),
            Covariate::SurgicalIndexAdmit => flag(b.surgical_index_admit),
            Covariate::Race => Level(b.race.level()),
            Covariate::SofaDay1 => Continuous(b.sofa_day1),
            Covariate::RbcUnitsDay1 => Continuous(b.rbc_units_day1),
            Covariate::IndexIcuDays => Continuous(b.index_icu_days),
            Covariate::IndexHospitalDays => Continuous(b.index_hospital_days),
            Covariate::TotalHospitalDuration => Continuous(b.total_hospital_duration),
            Covariate::TotalEdDuration => Continuous(b.total_ed_duration),
            Covariate::TotalEmgDuration => Continuous(b.total_emg_duration),
            Covariate::TotalHospitalDays => Continuous(b.total_hospital_days),
        }
    }

    /// Width of the linear encoding: one column if continuous, one per level
    /// if categorical.
    pub fn linear_width(self) -> usize {
        match self.kind() {
            CovariateKind::Continuous(_) => 1,
            CovariateKind::Categorical(n) => n,
        }
    }

    /// Append the linear encoding (scaled value, or centered level columns).
    pub fn push_linear(self, b: &BaselineCovariates, out: &mut Vec<f64>) {
        match (self.kind(), self.value(b)) {
            (CovariateKind::Continuous(s), CovariateValue::Continuous(x)) => {
                out.push(scale_covariate(x, s))
            }
            (CovariateKind::Categorical(n), CovariateValue::Level(l)) => {
                out.extend(categorical_expansion(l, n).expect("level within range"))
            }
            _ => unreachable!("covariate kind and value disagree"),
        }
    }
}

/// Which baseline covariates enter which sub-model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCovariates {
    /// Mean of the trend intercept `alpha_0`.
    pub trend_intercept: Vec<Covariate>,
    /// Mean of the log recovery rate.
    pub recovery: Vec<Covariate>,
    /// Admission and discharge hazards.
    pub hazard: Vec<Covariate>,
}

impl Default for ModelCovariates {
    fn default() -> Self {
        Self {
            trend_intercept: Covariate::ALL.to_vec(),
            recovery: vec![
                Covariate::Age,
                Covariate::Sex,
                Covariate::Charlson,
                Covariate::SupplementalIron,
            ],
            hazard: Covariate::ALL.to_vec(),
        }
    }
}

impl ModelCovariates {
    /// Intercept followed by the linear encoding of each trend covariate.
    pub fn trend_intercept_row(&self, b: &BaselineCovariates) -> Vec<f64> {
        let mut row = vec![1.0];
        for c in &self.trend_intercept {
            c.push_linear(b, &mut row);
        }
        row
    }

    pub fn trend_intercept_width(&self) -> usize {
        1 + self.trend_intercept.iter().map(|c| c.linear_width()).sum::<usize>()
    }
}

pub fn parse_covariate_list(s: &str) -> Result<Vec<Covariate>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|name| {
            Covariate::from_name(name)
                .ok_or_else(|| Error::Config(format!("unknown covariate '{}'", name.trim())))
        })
        .collect()
}

pub fn format_covariate_list(list: &[Covariate]) -> String {
    list.iter().map(|c| c.name()).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
pub(crate) fn sample_baseline() -> BaselineCovariates {
    BaselineCovariates {
        age: 58.0,
        sex: Sex::Male,
        charlson: 3.0,
        supplemental_iron: false,
        renal_disease: true,
        metastatic_tumor: false,
        other_cancer: false,
        surgical_index_admit: true,
        race: Race::White,
        sofa_day1: 6.0,
        rbc_units_day1: 2.0,
        index_icu_days: 3.0,
        index_hospital_days: 7.0,
        total_hospital_duration: 4.0,
        total_ed_duration: 1.0,
        total_emg_duration: 0.0,
        total_hospital_days: 2.0,
    }
}
