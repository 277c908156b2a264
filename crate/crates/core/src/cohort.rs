//! Patient records, CSV ingestion, and the counting-process event grid.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design::{BaselineCovariates, Covariate, Race, Sex, STUDY_END, STUDY_START};
use crate::error::{Error, Result};

/// One hemoglobin measurement. `value` is `None` when the measurement is
/// designated missing and should be imputed by the sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HbObservation {
    pub time: f64,
    pub value: Option<f64>,
}

/// One hospital stay. An open stay (no discharge yet) is only allowed as the
/// last stay of a record that is censored while hospitalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HospitalizationRecord {
    pub admit: f64,
    pub discharge: Option<f64>,
    pub is_index: bool,
}

impl HospitalizationRecord {
    pub fn closed(admit: f64, discharge: f64, is_index: bool) -> Self {
        Self {
            admit,
            discharge: Some(discharge),
            is_index,
        }
    }

    /// Whether `t` lies in `[admit, discharge)`.
    pub fn contains(&self, t: f64) -> bool {
        t >= self.admit && self.discharge.is_none_or(|d| t < d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: String,
    pub observations: Vec<HbObservation>,
    pub hospitalizations: Vec<HospitalizationRecord>,
    pub baseline: BaselineCovariates,
    pub end_of_followup: f64,
}

impl PatientRecord {
    pub fn index_stay(&self) -> Option<(usize, &HospitalizationRecord)> {
        self.hospitalizations
            .iter()
            .enumerate()
            .find(|(_, h)| h.is_index)
    }

    /// Hospital state at time `t` (admission instants count as hospitalized).
    pub fn state_at(&self, t: f64) -> u8 {
        u8::from(self.hospitalizations.iter().any(|h| h.contains(t)))
    }

    /// Check every record-level invariant, reporting the first broken rule.
    pub fn validate(&self) -> Result<()> {
        let fail = |rule: &str| Err(Error::data(&self.id, rule));
        let end = self.end_of_followup;
        if !end.is_finite() || end > STUDY_END {
            return fail("end of followup must be finite and at most day 365");
        }
        let mut prev = f64::NEG_INFINITY;
        for o in &self.observations {
            if !(STUDY_START..=STUDY_END).contains(&o.time) {
                return fail("observation time outside [-365, 365]");
            }
            if o.time > end {
                return fail("observation after end of followup");
            }
            if o.time < prev {
                return fail("observations must be ordered by time");
            }
            prev = o.time;
            if let Some(v) = o.value {
                if !(v > 0.0 && v.is_finite()) {
                    return fail("hemoglobin value must be positive");
                }
            }
        }
        let n_index = self.hospitalizations.iter().filter(|h| h.is_index).count();
        if n_index != 1 {
            return fail("exactly one index hospitalization required");
        }
        let last = self.hospitalizations.len() - 1;
        let mut prev_end = f64::NEG_INFINITY;
        for (j, h) in self.hospitalizations.iter().enumerate() {
            if !h.admit.is_finite() || h.admit <= STUDY_START {
                return fail("admission must fall after day -365");
            }
            if h.admit <= prev_end {
                return fail("hospitalizations must be disjoint and strictly ordered");
            }
            match h.discharge {
                Some(d) => {
                    if !(h.admit < d) {
                        return fail("admission must precede discharge");
                    }
                    if d > end {
                        return fail("discharge after end of followup");
                    }
                    prev_end = d;
                }
                None => {
                    if j != last {
                        return fail("only the final hospitalization may be open");
                    }
                    if h.is_index {
                        return fail("index hospitalization must have a discharge");
                    }
                    if h.admit >= end {
                        return fail("admission after end of followup");
                    }
                    prev_end = f64::INFINITY;
                }
            }
        }
        let (_, index) = self.index_stay().unwrap();
        let (a, d) = (index.admit, index.discharge.unwrap());
        if end <= d {
            return fail("end of followup must follow index discharge");
        }
        let during = self
            .observations
            .iter()
            .filter(|o| o.value.is_some() && o.time >= a && o.time <= d)
            .count();
        if during < 2 {
            return fail("at least 2 hemoglobin observations during the index hospitalization");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub patients: Vec<PatientRecord>,
}

impl Cohort {
    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashMap::new();
        for p in &self.patients {
            if seen.insert(p.id.as_str(), ()).is_some() {
                return Err(Error::data(&p.id, "duplicate patient id"));
            }
            p.validate()?;
        }
        Ok(())
    }
}

/// Row counts read from each input file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub patients: usize,
    pub observations: usize,
    pub hospitalizations: usize,
}

pub const OBSERVATIONS_FILE: &str = "observations.csv";
pub const HOSPITALIZATIONS_FILE: &str = "hospitalizations.csv";
pub const BASELINE_FILE: &str = "baseline.csv";
pub const FOLLOWUP_FILE: &str = "followup.csv";

struct Table {
    file: String,
    headers: Vec<String>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read(dir: &Path, name: &str) -> Result<Self> {
        let path = dir.join(name);
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let parse_err = |line: u64, message: String| Error::Parse {
            file: name.to_string(),
            line,
            message,
        };
        let headers = reader
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                parse_err(line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec));
        }
        Ok(Self {
            file: name.to_string(),
            headers,
            rows,
        })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                file: self.file.clone(),
                line: 1,
                message: format!("missing column '{name}'"),
            })
    }

    fn err(&self, line: u64, message: String) -> Error {
        Error::Parse {
            file: self.file.clone(),
            line,
            message,
        }
    }

    fn real(&self, line: u64, rec: &csv::StringRecord, col: usize) -> Result<f64> {
        let s = rec.get(col).unwrap_or("");
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.err(line, format!("invalid number '{s}' in column '{}'", self.headers[col])))
    }

    fn flag(&self, line: u64, rec: &csv::StringRecord, col: usize) -> Result<bool> {
        match rec.get(col).unwrap_or("").to_ascii_lowercase().as_str() {
            "1" | "true" | "yes" => Ok(true),
            "0" | "false" | "no" => Ok(false),
            s => Err(self.err(line, format!("invalid flag '{s}' in column '{}'", self.headers[col]))),
        }
    }
}

fn parse_baseline(t: &Table, line: u64, rec: &csv::StringRecord) -> Result<BaselineCovariates> {
    let col = |c: Covariate| t.column(c.name());
    let real = |c: Covariate| -> Result<f64> { t.real(line, rec, col(c)?) };
    let flag = |c: Covariate| -> Result<bool> { t.flag(line, rec, col(c)?) };
    let sex_s = rec.get(col(Covariate::Sex)?).unwrap_or("");
    let race_s = rec.get(col(Covariate::Race)?).unwrap_or("");
    Ok(BaselineCovariates {
        age: real(Covariate::Age)?,
        sex: Sex::parse(sex_s).ok_or_else(|| t.err(line, format!("unknown sex level '{sex_s}'")))?,
        charlson: real(Covariate::Charlson)?,
        supplemental_iron: flag(Covariate::SupplementalIron)?,
        renal_disease: flag(Covariate::RenalDisease)?,
        metastatic_tumor: flag(Covariate::MetastaticTumor)?,
        other_cancer: flag(Covariate::OtherCancer)?,
        surgical_index_admit: flag(Covariate::SurgicalIndexAdmit)?,
        race: Race::parse(race_s).ok_or_else(|| t.err(line, format!("unknown race level '{race_s}'")))?,
        sofa_day1: real(Covariate::SofaDay1)?,
        rbc_units_day1: real(Covariate::RbcUnitsDay1)?,
        index_icu_days: real(Covariate::IndexIcuDays)?,
        index_hospital_days: real(Covariate::IndexHospitalDays)?,
        total_hospital_duration: real(Covariate::TotalHospitalDuration)?,
        total_ed_duration: real(Covariate::TotalEdDuration)?,
        total_emg_duration: real(Covariate::TotalEmgDuration)?,
        total_hospital_days: real(Covariate::TotalHospitalDays)?,
    })
}

/// Read and validate a cohort from the four CSV files in `dir`. Patients
/// appear in `baseline.csv` order.
pub fn load_cohort(dir: &Path) -> Result<(Cohort, LoadReport)> {
    let baseline = Table::read(dir, BASELINE_FILE)?;
    let followup = Table::read(dir, FOLLOWUP_FILE)?;
    let hosps = Table::read(dir, HOSPITALIZATIONS_FILE)?;
    let obs = Table::read(dir, OBSERVATIONS_FILE)?;

    let mut patients = Vec::with_capacity(baseline.rows.len());
    let mut index: HashMap<String, usize> = HashMap::new();
    let id_col = baseline.column("patient_id")?;
    for (line, rec) in &baseline.rows {
        let id = rec.get(id_col).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(baseline.err(*line, "empty patient_id".into()));
        }
        if index.insert(id.clone(), patients.len()).is_some() {
            return Err(Error::data(id, "duplicate patient id"));
        }
        patients.push(PatientRecord {
            id,
            observations: Vec::new(),
            hospitalizations: Vec::new(),
            baseline: parse_baseline(&baseline, *line, rec)?,
            end_of_followup: f64::NAN,
        });
    }
    let lookup = |t: &Table, line: u64, rec: &csv::StringRecord, col: usize| -> Result<usize> {
        let id = rec.get(col).unwrap_or("");
        index
            .get(id)
            .copied()
            .ok_or_else(|| t.err(line, format!("patient '{id}' not present in {BASELINE_FILE}")))
    };

    let (id_c, end_c) = (followup.column("patient_id")?, followup.column("end_day")?);
    for (line, rec) in &followup.rows {
        let i = lookup(&followup, *line, rec, id_c)?;
        if !patients[i].end_of_followup.is_nan() {
            return Err(Error::data(&patients[i].id, "duplicate followup row"));
        }
        patients[i].end_of_followup = followup.real(*line, rec, end_c)?;
    }

    let id_c = hosps.column("patient_id")?;
    let (a_c, d_c, x_c) = (
        hosps.column("admit_day")?,
        hosps.column("discharge_day")?,
        hosps.column("is_index")?,
    );
    for (line, rec) in &hosps.rows {
        let i = lookup(&hosps, *line, rec, id_c)?;
        let raw_d = rec.get(d_c).unwrap_or("");
        let discharge = if raw_d.is_empty() || raw_d.eq_ignore_ascii_case("na") {
            None
        } else {
            Some(hosps.real(*line, rec, d_c)?)
        };
        patients[i].hospitalizations.push(HospitalizationRecord {
            admit: hosps.real(*line, rec, a_c)?,
            discharge,
            is_index: hosps.flag(*line, rec, x_c)?,
        });
    }

    let id_c = obs.column("patient_id")?;
    let (t_c, v_c) = (obs.column("time_days")?, obs.column("hb_g_dl")?);
    for (line, rec) in &obs.rows {
        let i = lookup(&obs, *line, rec, id_c)?;
        let raw = rec.get(v_c).unwrap_or("");
        let value = if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
            None
        } else {
            Some(obs.real(*line, rec, v_c)?)
        };
        patients[i].observations.push(HbObservation {
            time: obs.real(*line, rec, t_c)?,
            value,
        });
    }

    for p in &mut patients {
        if p.end_of_followup.is_nan() {
            return Err(Error::data(&p.id, "missing followup row"));
        }
        p.observations.sort_by(|a, b| a.time.total_cmp(&b.time));
        p.hospitalizations.sort_by(|a, b| a.admit.total_cmp(&b.admit));
    }
    let cohort = Cohort { patients };
    cohort.validate()?;
    let report = LoadReport {
        patients: cohort.len(),
        observations: obs.rows.len(),
        hospitalizations: hosps.rows.len(),
    };
    Ok((cohort, report))
}

fn flag_str(v: bool) -> &'static str {
    if v {
        "1"
    } else {
        "0"
    }
}

fn writer(dir: &Path, name: &str) -> Result<csv::Writer<File>> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn csv_err(dir: &Path, name: &str) -> impl Fn(csv::Error) -> Error {
    let path = dir.join(name);
    move |e| Error::io(&path, std::io::Error::other(e.to_string()))
}

/// Write the cohort as the four CSV files `load_cohort` reads. Numbers are
/// printed in shortest round-trip form, so load → write → load is lossless.
pub fn write_cohort(cohort: &Cohort, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut w = writer(dir, BASELINE_FILE)?;
    let e = csv_err(dir, BASELINE_FILE);
    let mut header = vec!["patient_id".to_string()];
    header.extend(Covariate::ALL.iter().map(|c| c.name().to_string()));
    w.write_record(&header).map_err(&e)?;
    for p in &cohort.patients {
        let b = &p.baseline;
        w.write_record([
            p.id.clone(),
            b.age.to_string(),
            b.sex.code().to_string(),
            b.charlson.to_string(),
            flag_str(b.supplemental_iron).into(),
            flag_str(b.renal_disease).into(),
            flag_str(b.metastatic_tumor).into(),
            flag_str(b.other_cancer).into(),
            flag_str(b.surgical_index_admit).into(),
            b.race.code().to_string(),
            b.sofa_day1.to_string(),
            b.rbc_units_day1.to_string(),
            b.index_icu_days.to_string(),
            b.index_hospital_days.to_string(),
            b.total_hospital_duration.to_string(),
            b.total_ed_duration.to_string(),
            b.total_emg_duration.to_string(),
            b.total_hospital_days.to_string(),
        ])
        .map_err(&e)?;
    }
    w.flush().map_err(|err| Error::io(dir.join(BASELINE_FILE), err))?;

    let mut w = writer(dir, FOLLOWUP_FILE)?;
    let e = csv_err(dir, FOLLOWUP_FILE);
    w.write_record(["patient_id", "end_day"]).map_err(&e)?;
    for p in &cohort.patients {
        w.write_record([p.id.clone(), p.end_of_followup.to_string()])
            .map_err(&e)?;
    }
    w.flush().map_err(|err| Error::io(dir.join(FOLLOWUP_FILE), err))?;

    let mut w = writer(dir, HOSPITALIZATIONS_FILE)?;
    let e = csv_err(dir, HOSPITALIZATIONS_FILE);
    w.write_record(["patient_id", "admit_day", "discharge_day", "is_index"])
        .map_err(&e)?;
    for p in &cohort.patients {
        for h in &p.hospitalizations {
            w.write_record([
                p.id.clone(),
                h.admit.to_string(),
                h.discharge.map_or(String::new(), |d| d.to_string()),
                flag_str(h.is_index).into(),
            ])
            .map_err(&e)?;
        }
    }
    w.flush().map_err(|err| Error::io(dir.join(HOSPITALIZATIONS_FILE), err))?;

    let mut w = writer(dir, OBSERVATIONS_FILE)?;
    let e = csv_err(dir, OBSERVATIONS_FILE);
    w.write_record(["patient_id", "time_days", "hb_g_dl"]).map_err(&e)?;
    for p in &cohort.patients {
        for o in &p.observations {
            w.write_record([
                p.id.clone(),
                o.time.to_string(),
                o.value.map_or("NA".to_string(), |v| v.to_string()),
            ])
            .map_err(&e)?;
        }
    }
    w.flush().map_err(|err| Error::io(dir.join(OBSERVATIONS_FILE), err))?;
    Ok(())
}

/// One piece `[start, start + delta)` of the counting-process grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridInterval {
    pub start: f64,
    pub delta: f64,
    pub state: u8,
    /// Number of state changes at the right endpoint (0 or 1).
    pub events: u8,
    pub in_risk: bool,
    /// Stay the patient is in (state 1) or most recently left (state 0).
    pub stay: Option<usize>,
}

impl GridInterval {
    pub fn end(&self) -> f64 {
        self.start + self.delta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventGrid {
    pub intervals: Vec<GridInterval>,
    /// Interval whose right endpoint is the index admission.
    pub index_event: Option<usize>,
}

impl EventGrid {
    pub fn total_exposure(&self) -> f64 {
        self.intervals.iter().map(|iv| iv.delta).sum()
    }

    /// Number of in-risk events and in-risk exposure for state `a`.
    pub fn counts(&self, a: u8) -> (u32, f64) {
        self.intervals
            .iter()
            .filter(|iv| iv.in_risk && iv.state == a)
            .fold((0, 0.0), |(n, e), iv| (n + u32::from(iv.events), e + iv.delta))
    }
}

/// Split `[-365, end)` at every state change and into pieces no longer than
/// `max_interval`. Pieces restart at each change point, so a piece always
/// begins at `u + k * max_interval` for the most recent change `u`.
///
/// Stays that start at or after `end` are ignored. A discharge exactly at
/// `end` is an event of the last piece; one after `end` leaves the patient
/// hospitalized to the end.
pub fn event_grid(stays: &[HospitalizationRecord], end: f64, max_interval: f64) -> EventGrid {
    assert!(max_interval > 0.0, "max_interval must be positive");
    // (time, new state, stay index, is index admission)
    let mut changes: Vec<(f64, u8, usize, bool)> = Vec::new();
    for (j, h) in stays.iter().enumerate() {
        if h.admit >= end {
            break;
        }
        changes.push((h.admit, 1, j, h.is_index));
        if let Some(d) = h.discharge.filter(|d| *d <= end) {
            changes.push((d, 0, j, false));
        }
    }
    let mut intervals = Vec::new();
    let mut index_event = None;
    let mut seg_start = STUDY_START;
    let mut state = 0u8;
    let mut stay = None;
    let tol = 1e-9 * max_interval;
    for seg in 0..=changes.len() {
        let (seg_end, next) = match changes.get(seg) {
            Some(&(t, s, j, idx)) => (t, Some((s, j, idx))),
            None => (end, None),
        };
        let mut k = 0usize;
        while seg_start + k as f64 * max_interval < seg_end - tol || (k == 0 && seg_start < seg_end) {
            let start = seg_start + k as f64 * max_interval;
            let stop = (seg_start + (k + 1) as f64 * max_interval).min(seg_end);
            let last = stop >= seg_end - tol;
            let stop = if last { seg_end } else { stop };
            intervals.push(GridInterval {
                start,
                delta: stop - start,
                state,
                events: u8::from(last && next.is_some()),
                in_risk: true,
                stay,
            });
            if last {
                if let Some((_, _, true)) = next {
                    index_event = Some(intervals.len() - 1);
                }
                break;
            }
            k += 1;
        }
        if let Some((s, j, _)) = next {
            state = s;
            stay = Some(j);
        }
        seg_start = seg_end;
    }
    EventGrid {
        intervals,
        index_event,
    }
}

/// Full-followup grid for a record, before index conditioning.
pub fn build_event_grid(p: &PatientRecord, max_interval: f64) -> EventGrid {
    event_grid(&p.hospitalizations, p.end_of_followup, max_interval)
}

/// Remove the index admission from the admission risk set. Everything else,
/// including the index discharge and any pre-index admission, stays in.
pub fn index_conditioning(mut grid: EventGrid) -> Result<EventGrid> {
    let i = grid
        .index_event
        .ok_or_else(|| Error::data("<grid>", "grid has no index admission"))?;
    grid.intervals[i].in_risk = false;
    Ok(grid)
}
