//! Trial data representation, validation and CSV ingestion.
//!
//! The on-disk interchange format is a headered CSV with columns
//! `id,arm,z0,z1,beta,time,event`, `arm` and `event` coded 0/1 and all
//! times in years since randomization.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::Serialize;

use crate::{Error, Result};

const CSV_HEADER: [&str; 7] = ["id", "arm", "z0", "z1", "beta", "time", "event"];

/// Randomized treatment arm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Placebo,
    Treatment,
}

impl Arm {
    pub fn from_u8(value: u8) -> Option<Arm> {
        match value {
            0 => Some(Arm::Placebo),
            1 => Some(Arm::Treatment),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Arm::Placebo => 0,
            Arm::Treatment => 1,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arm::Placebo => write!(f, "placebo"),
            Arm::Treatment => write!(f, "treatment"),
        }
    }
}

/// One trial subject.
///
/// `time` is the observed follow-up in years (event time if `event` is
/// true, censoring time otherwise). `beta` is the post-baseline biomarker;
/// this crate assumes it is always observed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PatientRecord {
    pub id: String,
    pub arm: Arm,
    pub z0: f64,
    pub z1: f64,
    pub beta: f64,
    pub time: f64,
    pub event: bool,
}

impl PatientRecord {
    fn validate(&self) -> Result<()> {
        if self.time < 0.0 {
            return Err(Error::NegativeTime {
                id: self.id.clone(),
            });
        }
        for (field, value) in [
            ("time", self.time),
            ("beta", self.beta),
            ("z0", self.z0),
            ("z1", self.z1),
        ] {
            if !value.is_finite() {
                return Err(Error::NonFiniteField {
                    id: self.id.clone(),
                    field,
                });
            }
        }
        Ok(())
    }
}

/// A validated trial: patient rows plus the responder threshold.
///
/// The biomarker responder indicator is always derived, never stored:
/// a patient responds iff `beta < threshold` (strictly; ties at the
/// threshold count as non-responders).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialDataset {
    patients: Vec<PatientRecord>,
    threshold: f64,
}

impl TrialDataset {
    /// Validates ids, times and biomarker values and requires both arms
    /// to be nonempty.
    pub fn new(patients: Vec<PatientRecord>, threshold: f64) -> Result<TrialDataset> {
        if !threshold.is_finite() {
            return Err(Error::InvalidConfig("threshold must be finite".into()));
        }
        let mut seen = HashSet::with_capacity(patients.len());
        for p in &patients {
            p.validate()?;
            if !seen.insert(p.id.as_str()) {
                return Err(Error::DuplicateId { id: p.id.clone() });
            }
        }
        let d = TrialDataset {
            patients,
            threshold,
        };
        for arm in [Arm::Placebo, Arm::Treatment] {
            if d.arm_patients(arm).next().is_none() {
                return Err(Error::EmptyArm { arm });
            }
        }
        Ok(d)
    }

    /// Bootstrap resamples duplicate patient rows, so they skip the
    /// id-uniqueness check; arm sizes are preserved by construction.
    pub(crate) fn resampled(&self, patients: Vec<PatientRecord>) -> TrialDataset {
        TrialDataset {
            patients,
            threshold: self.threshold,
        }
    }

    pub fn patients(&self) -> &[PatientRecord] {
        &self.patients
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Strict-inequality responder indicator for one record.
    pub fn is_responder(&self, p: &PatientRecord) -> bool {
        p.beta < self.threshold
    }

    pub fn arm_patients(&self, arm: Arm) -> impl Iterator<Item = &PatientRecord> {
        self.patients.iter().filter(move |p| p.arm == arm)
    }

    /// Patients of an arm filtered by responder status.
    pub fn arm_subgroup(&self, arm: Arm, responder: bool) -> Vec<&PatientRecord> {
        self.arm_patients(arm)
            .filter(|p| self.is_responder(p) == responder)
            .collect()
    }
}

/// Observed responder marginals and the derived mixture proportions.
///
/// `pi` is the fraction of placebo-arm responders among the would-be
/// treatment responders; `pi_tilde` the fraction of would-be treatment
/// responders among placebo non-responders. Both follow from the
/// monotonicity assumption (nobody responds on placebo but not on
/// treatment).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StratumProportions {
    /// P(B=1 | treatment arm).
    pub p1_dot: f64,
    /// P(B=1 | placebo arm).
    pub p_dot1: f64,
    pub pi: f64,
    pub pi_tilde: f64,
    /// Set when the empirical proportions violate monotonicity and the
    /// derived quantities were clamped to `pi = 1`, `pi_tilde = 0`.
    pub monotonicity_violated: bool,
    pub treated_responders: usize,
    pub treated_total: usize,
    pub placebo_responders: usize,
    pub placebo_total: usize,
}

/// Reads a trial CSV (schema `id,arm,z0,z1,beta,time,event`).
///
/// Row order is preserved. Parse failures report the 1-based line number.
pub fn load_dataset<P: AsRef<Path>>(path: P, threshold: f64) -> Result<TrialDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));

    let headers = reader.headers().map_err(|e| Error::MalformedRow {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::MalformedRow {
            line: 1,
            message: format!(
                "expected header {:?}, found {:?}",
                CSV_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut patients = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::MalformedRow {
            line: e
                .position()
                .map(|p| p.line())
                .unwrap_or(patients.len() as u64 + 2),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row = parse_row(&record, line)?;
        if !seen.insert(row.id.clone()) {
            return Err(Error::DuplicateId { id: row.id });
        }
        row.validate()?;
        patients.push(row);
    }
    TrialDataset::new(patients, threshold)
}

fn parse_row(record: &csv::StringRecord, line: u64) -> Result<PatientRecord> {
    let malformed = |message: String| Error::MalformedRow { line, message };
    if record.len() != CSV_HEADER.len() {
        return Err(malformed(format!(
            "expected {} fields, found {}",
            CSV_HEADER.len(),
            record.len()
        )));
    }
    let field = |idx: usize| record.get(idx).unwrap_or("").trim();
    let parse_f64 = |idx: usize| -> Result<f64> {
        field(idx)
            .parse::<f64>()
            .map_err(|_| malformed(format!("bad {} value {:?}", CSV_HEADER[idx], field(idx))))
    };
    let parse_binary = |idx: usize| -> Result<u8> {
        match field(idx) {
            "0" => Ok(0),
            "1" => Ok(1),
            other => Err(malformed(format!(
                "bad {} value {:?} (expected 0 or 1)",
                CSV_HEADER[idx], other
            ))),
        }
    };

    let id = field(0).to_string();
    if id.is_empty() {
        return Err(malformed("empty id".into()));
    }
    let arm = Arm::from_u8(parse_binary(1)?).expect("binary arm");
    Ok(PatientRecord {
        id,
        arm,
        z0: parse_f64(2)?,
        z1: parse_f64(3)?,
        beta: parse_f64(4)?,
        time: parse_f64(5)?,
        event: parse_binary(6)? == 1,
    })
}

/// Writes a dataset back out in the CSV schema used by [`load_dataset`].
///
/// Floats use the shortest round-trip representation, so a write/load
/// cycle reproduces the dataset exactly.
pub fn write_dataset<P: AsRef<Path>>(dataset: &TrialDataset, path: P) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    writer
        .write_record(CSV_HEADER)
        .map_err(|e| csv_io_err(path, e))?;
    for p in dataset.patients() {
        writer
            .write_record(&[
                p.id.clone(),
                p.arm.as_u8().to_string(),
                p.z0.to_string(),
                p.z1.to_string(),
                p.beta.to_string(),
                p.time.to_string(),
                u8::from(p.event).to_string(),
            ])
            .map_err(|e| csv_io_err(path, e))?;
    }
    writer.flush().map_err(io_err)
}

fn csv_io_err(path: &Path, e: csv::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    }
}

/// Per-patient responder indicators for one arm, in dataset order.
pub fn responder_mask(dataset: &TrialDataset, arm: Arm) -> Vec<bool> {
    dataset
        .arm_patients(arm)
        .map(|p| dataset.is_responder(p))
        .collect()
}

/// Empirical responder marginals and the mixture proportions they imply.
///
/// If the data violate monotonicity (placebo responder fraction above the
/// treatment one, which resampling noise can produce), the result is
/// clamped to `pi = 1`, `pi_tilde = 0` and flagged instead of erroring.
pub fn stratum_proportions(dataset: &TrialDataset) -> Result<StratumProportions> {
    let count = |arm: Arm| -> (usize, usize) {
        let mut responders = 0;
        let mut total = 0;
        for p in dataset.arm_patients(arm) {
            total += 1;
            if dataset.is_responder(p) {
                responders += 1;
            }
        }
        (responders, total)
    };
    let (treated_responders, treated_total) = count(Arm::Treatment);
    let (placebo_responders, placebo_total) = count(Arm::Placebo);
    if treated_total == 0 {
        return Err(Error::EmptyArm {
            arm: Arm::Treatment,
        });
    }
    if placebo_total == 0 {
        return Err(Error::EmptyArm { arm: Arm::Placebo });
    }
    if treated_responders == 0 {
        return Err(Error::EmptySubgroup(
            "no biomarker responders in the treatment arm".into(),
        ));
    }

    let p1_dot = treated_responders as f64 / treated_total as f64;
    let p_dot1 = placebo_responders as f64 / placebo_total as f64;

    // Cross-multiplied integer counts, so the derived ratios are single
    // correctly-rounded divisions of exact integers.
    let lhs = treated_responders as u128 * placebo_total as u128;
    let rhs = placebo_responders as u128 * treated_total as u128;
    let (pi, pi_tilde, monotonicity_violated) = if lhs < rhs {
        log::warn!(
            "empirical monotonicity violation (P(B=1|treated) = {p1_dot:.4} < \
             P(B=1|placebo) = {p_dot1:.4}); clamping pi to 1, pi_tilde to 0"
        );
        (1.0, 0.0, true)
    } else {
        let pi = (placebo_responders as f64 * treated_total as f64)
            / (treated_responders as f64 * placebo_total as f64);
        let nonresponders = placebo_total - placebo_responders;
        let pi_tilde = if nonresponders == 0 {
            0.0
        } else {
            ((lhs - rhs) as f64) / (treated_total as f64 * nonresponders as f64)
        };
        (pi, pi_tilde, false)
    };

    Ok(StratumProportions {
        p1_dot,
        p_dot1,
        pi,
        pi_tilde,
        monotonicity_violated,
        treated_responders,
        treated_total,
        placebo_responders,
        placebo_total,
    })
}
