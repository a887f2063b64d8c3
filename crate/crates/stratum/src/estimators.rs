//! The analysis methods and estimand assembly.
//!
//! All methods share the treatment-arm responder curve and differ only in
//! how they reconstruct the placebo survival of the would-be responder
//! subgroup:
//!
//! - PPR predicts placebo survival from a Cox model and averages the
//!   predictions over the treated responders' covariates.
//! - WPP reweights the whole placebo arm by the modeled probability of
//!   treatment-arm response.
//! - MEA mixes the placebo-responder curve (weight `pi`) with a
//!   rank-weighted placebo non-responder curve, where the rank weights
//!   interpolate between equi-percentile matching (`delta -> 0`) and
//!   uniform weighting (`delta -> inf`).
//! - The naive baselines use the full placebo arm or the placebo
//!   responders directly.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::cox::{average_predicted_curve, fit_cox};
use crate::data::{stratum_proportions, Arm, PatientRecord, TrialDataset};
use crate::logistic::fit_logistic;
use crate::survival::{
    nelson_aalen, rmst_difference, survival_difference, SurvivalCurve, WeightProvenance,
    WeightVector,
};
use crate::{Error, Result};

/// Covariates entering the PPR/WPP working models.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateSet {
    None,
    Z0,
    Z1,
    #[default]
    Both,
}

impl CovariateSet {
    pub fn extract(&self, p: &PatientRecord) -> Vec<f64> {
        match self {
            CovariateSet::None => Vec::new(),
            CovariateSet::Z0 => vec![p.z0],
            CovariateSet::Z1 => vec![p.z1],
            CovariateSet::Both => vec![p.z0, p.z1],
        }
    }
}

impl fmt::Display for CovariateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            CovariateSet::None => "none",
            CovariateSet::Z0 => "z0",
            CovariateSet::Z1 => "z1",
            CovariateSet::Both => "both",
        };
        write!(f, "{name}")
    }
}

impl FromStr for CovariateSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<CovariateSet> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(CovariateSet::None),
            "z0" => Ok(CovariateSet::Z0),
            "z1" => Ok(CovariateSet::Z1),
            "both" => Ok(CovariateSet::Both),
            other => Err(Error::InvalidConfig(format!(
                "unknown covariate set {other:?} (expected none, z0, z1 or both)"
            ))),
        }
    }
}

/// The placebo reconstruction method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum MethodKind {
    #[serde(rename = "PPR")]
    Ppr,
    #[serde(rename = "WPP")]
    Wpp,
    #[serde(rename = "MEA")]
    Mea,
    #[serde(rename = "NAIVE_FULLPBO")]
    NaiveFullPbo,
    #[serde(rename = "NAIVE_THRES")]
    NaiveThres,
}

/// The placebo populations used by the naive baselines.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NaivePopulation {
    /// Every placebo patient.
    FullPlacebo,
    /// Placebo patients with `beta` below the threshold.
    ThresholdResponders,
}

/// A fully specified analysis method.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MethodSpec {
    pub kind: MethodKind,
    /// MEA sensitivity parameter; required iff `kind` is MEA.
    pub delta: Option<f64>,
    /// Working-model covariates for PPR/WPP.
    pub covariates: CovariateSet,
}

impl MethodSpec {
    pub fn ppr() -> MethodSpec {
        MethodSpec {
            kind: MethodKind::Ppr,
            delta: None,
            covariates: CovariateSet::Both,
        }
    }

    pub fn wpp() -> MethodSpec {
        MethodSpec {
            kind: MethodKind::Wpp,
            delta: None,
            covariates: CovariateSet::Both,
        }
    }

    pub fn mea(delta: f64) -> MethodSpec {
        MethodSpec {
            kind: MethodKind::Mea,
            delta: Some(delta),
            covariates: CovariateSet::Both,
        }
    }

    pub fn naive_full_pbo() -> MethodSpec {
        MethodSpec {
            kind: MethodKind::NaiveFullPbo,
            delta: None,
            covariates: CovariateSet::Both,
        }
    }

    pub fn naive_thres() -> MethodSpec {
        MethodSpec {
            kind: MethodKind::NaiveThres,
            delta: None,
            covariates: CovariateSet::Both,
        }
    }

    pub fn with_covariates(mut self, covariates: CovariateSet) -> MethodSpec {
        self.covariates = covariates;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, self.delta) {
            (MethodKind::Mea, Some(d)) if d.is_finite() && d > 0.0 => Ok(()),
            (MethodKind::Mea, Some(d)) => Err(Error::InvalidConfig(format!(
                "MEA delta must be positive and finite, got {d}"
            ))),
            (MethodKind::Mea, None) => {
                Err(Error::InvalidConfig("MEA requires a delta value".into()))
            }
            (_, Some(_)) => Err(Error::InvalidConfig(
                "delta is only meaningful for MEA".into(),
            )),
            (_, None) => Ok(()),
        }
    }

    /// Human-readable name, e.g. `MEA(delta=0.05)`.
    pub fn label(&self) -> String {
        match self.kind {
            MethodKind::Ppr => "PPR".into(),
            MethodKind::Wpp => "WPP".into(),
            MethodKind::Mea => format!("MEA(delta={})", self.delta.unwrap_or(f64::NAN)),
            MethodKind::NaiveFullPbo => "NAIVE_FULLPBO".into(),
            MethodKind::NaiveThres => "NAIVE_THRES".into(),
        }
    }

    /// Filesystem-friendly name, e.g. `mea_delta0.05`.
    pub fn slug(&self) -> String {
        match self.kind {
            MethodKind::Ppr => "ppr".into(),
            MethodKind::Wpp => "wpp".into(),
            MethodKind::Mea => format!("mea_delta{}", self.delta.unwrap_or(f64::NAN)),
            MethodKind::NaiveFullPbo => "naive_fullpbo".into(),
            MethodKind::NaiveThres => "naive_thres".into(),
        }
    }

    /// The six-method comparison set: PPR, WPP, MEA at two deltas and the
    /// two naive baselines.
    pub fn default_set() -> Vec<MethodSpec> {
        vec![
            MethodSpec::ppr(),
            MethodSpec::wpp(),
            MethodSpec::mea(0.05),
            MethodSpec::mea(50.0),
            MethodSpec::naive_full_pbo(),
            MethodSpec::naive_thres(),
        ]
    }
}

/// Which scalar summary of the two curves is being estimated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimand {
    /// Survival difference at a horizon.
    SurvivalDiff { horizon: f64 },
    /// Restricted-mean difference up to `t_star`.
    RmstDiff { t_star: f64 },
}

impl Estimand {
    pub fn compute(&self, treat: &SurvivalCurve, ctrl: &SurvivalCurve) -> f64 {
        match *self {
            Estimand::SurvivalDiff { horizon } => survival_difference(treat, ctrl, horizon),
            Estimand::RmstDiff { t_star } => rmst_difference(treat, ctrl, t_star),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Estimand::SurvivalDiff { horizon } => format!("delta({horizon})"),
            Estimand::RmstDiff { t_star } => format!("rmst({t_star})"),
        }
    }
}

/// One survival-difference value at a horizon.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct HorizonDelta {
    pub t: f64,
    pub delta: f64,
}

/// Point estimates for one method: the two curves plus the derived
/// survival differences and the restricted-mean difference.
#[derive(Clone, Debug, Serialize)]
pub struct EstimateReport {
    pub method: MethodSpec,
    pub treat_curve: SurvivalCurve,
    pub control_curve: SurvivalCurve,
    pub delta_t: Vec<HorizonDelta>,
    pub delta_rmst: f64,
    pub horizons: Vec<f64>,
    pub t_star: f64,
}

/// Unweighted Nelson-Aalen on the treated biomarker responders. Shared by
/// every method.
pub fn treatment_subgroup_curve(dataset: &TrialDataset) -> Result<SurvivalCurve> {
    let subgroup = dataset.arm_subgroup(Arm::Treatment, true);
    if subgroup.is_empty() {
        return Err(Error::EmptySubgroup(
            "no biomarker responders in the treatment arm".into(),
        ));
    }
    let times: Vec<f64> = subgroup.iter().map(|p| p.time).collect();
    let events: Vec<bool> = subgroup.iter().map(|p| p.event).collect();
    nelson_aalen(&times, &events, &WeightVector::uniform(times.len()))
}

/// PPR: fit a Cox model on the placebo arm and average the predicted
/// curves over the treated responders' covariates.
pub fn ppr_control_curve(dataset: &TrialDataset, covariates: CovariateSet) -> Result<SurvivalCurve> {
    let placebo: Vec<&PatientRecord> = dataset.arm_patients(Arm::Placebo).collect();
    let times: Vec<f64> = placebo.iter().map(|p| p.time).collect();
    let events: Vec<bool> = placebo.iter().map(|p| p.event).collect();
    let rows: Vec<Vec<f64>> = placebo.iter().map(|p| covariates.extract(p)).collect();
    let model = fit_cox(&times, &events, &rows)?;

    let responders = dataset.arm_subgroup(Arm::Treatment, true);
    if responders.is_empty() {
        return Err(Error::EmptySubgroup(
            "no biomarker responders in the treatment arm".into(),
        ));
    }
    let targets: Vec<Vec<f64>> = responders.iter().map(|p| covariates.extract(p)).collect();
    average_predicted_curve(&model, &targets)
}

/// WPP: logistic response model on the treatment arm, predicted response
/// probabilities as weights for a weighted Nelson-Aalen over the whole
/// placebo arm.
pub fn wpp_control_curve(dataset: &TrialDataset, covariates: CovariateSet) -> Result<SurvivalCurve> {
    let treated: Vec<&PatientRecord> = dataset.arm_patients(Arm::Treatment).collect();
    let labels: Vec<bool> = treated.iter().map(|p| dataset.is_responder(p)).collect();
    let rows: Vec<Vec<f64>> = treated.iter().map(|p| covariates.extract(p)).collect();
    let model = fit_logistic(&labels, &rows)?;

    let placebo: Vec<&PatientRecord> = dataset.arm_patients(Arm::Placebo).collect();
    let mut weights = Vec::with_capacity(placebo.len());
    for p in &placebo {
        weights.push(model.predict_probability(&covariates.extract(p))?);
    }
    if weights.iter().sum::<f64>() < 1e-10 {
        return Err(Error::AllWeightsZero);
    }
    let weights = WeightVector::new(weights, WeightProvenance::LogisticModel)?;
    let times: Vec<f64> = placebo.iter().map(|p| p.time).collect();
    let events: Vec<bool> = placebo.iter().map(|p| p.event).collect();
    nelson_aalen(&times, &events, &weights)
}

/// Rank-based MEA weights for the placebo non-responders.
///
/// The patient with the i-th smallest biomarker value gets the empirical
/// quantile `tau = i/(eta+1)` and weight `1/(1 + exp((tau - pi_tilde)/delta))`,
/// a decreasing logistic centered at `pi_tilde`: an indicator of the
/// lowest-ranked fraction `pi_tilde` as `delta -> 0`, uniform 1/2 as
/// `delta -> inf`. Ties keep their input order.
pub fn mea_weights(betas: &[f64], pi_tilde: f64, delta: f64) -> Result<WeightVector> {
    if betas.is_empty() {
        return Err(Error::EmptyInput("no placebo non-responders".into()));
    }
    if !( pi_tilde >= 0.0 && pi_tilde <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "pi_tilde must be in [0, 1], got {pi_tilde}"
        )));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "delta must be positive and finite, got {delta}"
        )));
    }
    if betas.iter().any(|b| !b.is_finite()) {
        return Err(Error::InvalidConfig("non-finite biomarker value".into()));
    }
    let eta = betas.len();
    let mut order: Vec<usize> = (0..eta).collect();
    order.sort_by(|&a, &b| betas[a].total_cmp(&betas[b]));
    let mut weights = vec![0.0; eta];
    for (rank0, &idx) in order.iter().enumerate() {
        let tau = (rank0 + 1) as f64 / (eta + 1) as f64;
        weights[idx] = 1.0 / (1.0 + ((tau - pi_tilde) / delta).exp());
    }
    WeightVector::new(weights, WeightProvenance::MeaRank)
}

/// MEA: mixture `pi * S_responders + (1 - pi) * S_nonresponders(weighted)`
/// on the placebo arm.
pub fn mea_control_curve(dataset: &TrialDataset, delta: f64) -> Result<SurvivalCurve> {
    let props = stratum_proportions(dataset)?;
    let responders = dataset.arm_subgroup(Arm::Placebo, true);
    let nonresponders = dataset.arm_subgroup(Arm::Placebo, false);
    if responders.is_empty() {
        return Err(Error::EmptySubgroup(
            "no biomarker responders in the placebo arm".into(),
        ));
    }
    if nonresponders.is_empty() {
        return Err(Error::EmptySubgroup(
            "no biomarker non-responders in the placebo arm".into(),
        ));
    }

    let times: Vec<f64> = responders.iter().map(|p| p.time).collect();
    let events: Vec<bool> = responders.iter().map(|p| p.event).collect();
    let resp_curve = nelson_aalen(&times, &events, &WeightVector::uniform(times.len()))?;

    let betas: Vec<f64> = nonresponders.iter().map(|p| p.beta).collect();
    let weights = mea_weights(&betas, props.pi_tilde, delta)?;
    let times: Vec<f64> = nonresponders.iter().map(|p| p.time).collect();
    let events: Vec<bool> = nonresponders.iter().map(|p| p.event).collect();
    let nonresp_curve = nelson_aalen(&times, &events, &weights)?;

    mix_curves(props.pi, &resp_curve, &nonresp_curve)
}

/// Convex mixture of two step curves on their merged grid.
fn mix_curves(pi: f64, a: &SurvivalCurve, b: &SurvivalCurve) -> Result<SurvivalCurve> {
    let mut grid: Vec<f64> = a.times().iter().chain(b.times()).copied().collect();
    grid.sort_unstable_by(f64::total_cmp);
    grid.dedup();
    let values: Vec<f64> = grid
        .iter()
        .map(|&t| pi * a.evaluate(t) + (1.0 - pi) * b.evaluate(t))
        .collect();
    SurvivalCurve::new(grid, values)
}

/// The two naive baselines: Nelson-Aalen on the full placebo arm or on the
/// placebo responders only.
pub fn naive_control_curve(
    dataset: &TrialDataset,
    population: NaivePopulation,
) -> Result<SurvivalCurve> {
    let patients: Vec<&PatientRecord> = match population {
        NaivePopulation::FullPlacebo => dataset.arm_patients(Arm::Placebo).collect(),
        NaivePopulation::ThresholdResponders => dataset.arm_subgroup(Arm::Placebo, true),
    };
    if patients.is_empty() {
        return Err(Error::EmptySubgroup(match population {
            NaivePopulation::FullPlacebo => "placebo arm is empty".into(),
            NaivePopulation::ThresholdResponders => {
                "no biomarker responders in the placebo arm".into()
            }
        }));
    }
    let times: Vec<f64> = patients.iter().map(|p| p.time).collect();
    let events: Vec<bool> = patients.iter().map(|p| p.event).collect();
    nelson_aalen(&times, &events, &WeightVector::uniform(times.len()))
}

/// Dispatches to the method's control-curve construction.
pub fn control_curve(dataset: &TrialDataset, method: &MethodSpec) -> Result<SurvivalCurve> {
    method.validate()?;
    match method.kind {
        MethodKind::Ppr => ppr_control_curve(dataset, method.covariates),
        MethodKind::Wpp => wpp_control_curve(dataset, method.covariates),
        MethodKind::Mea => mea_control_curve(dataset, method.delta.expect("validated")),
        MethodKind::NaiveFullPbo => naive_control_curve(dataset, NaivePopulation::FullPlacebo),
        MethodKind::NaiveThres => {
            naive_control_curve(dataset, NaivePopulation::ThresholdResponders)
        }
    }
}

/// Runs one method and assembles the estimand values.
pub fn estimate(
    dataset: &TrialDataset,
    method: &MethodSpec,
    horizons: &[f64],
    t_star: f64,
) -> Result<EstimateReport> {
    method.validate()?;
    if !(t_star > 0.0 && t_star.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "t_star must be positive and finite, got {t_star}"
        )));
    }
    for &h in horizons {
        if !(h >= 0.0 && h.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "horizons must be finite and >= 0, got {h}"
            )));
        }
        if h > t_star {
            log::warn!("horizon {h} exceeds t* = {t_star}");
        }
    }
    let treat_curve = treatment_subgroup_curve(dataset)?;
    let control = control_curve(dataset, method)?;
    let delta_t = horizons
        .iter()
        .map(|&t| HorizonDelta {
            t,
            delta: survival_difference(&treat_curve, &control, t),
        })
        .collect();
    let delta_rmst = rmst_difference(&treat_curve, &control, t_star);
    Ok(EstimateReport {
        method: *method,
        treat_curve,
        control_curve: control,
        delta_t,
        delta_rmst,
        horizons: horizons.to_vec(),
        t_star,
    })
}

/// Approximate hazard ratio from exponential fits.
///
/// Fits `ln S(t) = -lambda t` through the origin by least squares on each
/// curve's own grid and returns `lambda_treat / lambda_ctrl`.
pub fn summarize_hazard_ratio(treat: &SurvivalCurve, ctrl: &SurvivalCurve) -> Result<f64> {
    let rate = |curve: &SurvivalCurve, name: &str| -> Result<f64> {
        if curve.is_unit() {
            return Err(Error::DegenerateCurve(format!(
                "{name} curve has no event times"
            )));
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for (&t, &s) in curve.times().iter().zip(curve.values()) {
            num -= t * s.ln();
            den += t * t;
        }
        Ok(num / den)
    };
    let lambda_treat = rate(treat, "treatment")?;
    let lambda_ctrl = rate(ctrl, "control")?;
    if lambda_ctrl == 0.0 {
        return Err(Error::DegenerateCurve(
            "control curve is identically 1; hazard ratio undefined".into(),
        ));
    }
    Ok(lambda_treat / lambda_ctrl)
}
