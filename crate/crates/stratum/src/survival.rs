//! Step-function survival estimation and curve algebra.
//!
//! Survival curves come out of the (weighted) Nelson-Aalen estimator as
//! `S(t) = exp(-cumulative hazard)`. Tied events share a single hazard
//! increment against the full risk set, and subjects censored at an event
//! time stay in that time's risk set.

use std::io;

use serde::Serialize;

use crate::{Error, Result};

/// Where a weight vector came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightProvenance {
    Uniform,
    LogisticModel,
    MeaRank,
}

/// Nonnegative per-patient weights aligned with a subject list.
#[derive(Clone, Debug, Serialize)]
pub struct WeightVector {
    values: Vec<f64>,
    provenance: WeightProvenance,
}

impl WeightVector {
    pub fn new(values: Vec<f64>, provenance: WeightProvenance) -> Result<WeightVector> {
        let mut any_positive = false;
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidWeight { index, value });
            }
            any_positive |= value > 0.0;
        }
        if !values.is_empty() && !any_positive {
            return Err(Error::AllWeightsZero);
        }
        Ok(WeightVector {
            values,
            provenance,
        })
    }

    pub fn uniform(len: usize) -> WeightVector {
        WeightVector {
            values: vec![1.0; len],
            provenance: WeightProvenance::Uniform,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn provenance(&self) -> WeightProvenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Right-continuous step survival function on a grid of event times.
///
/// `S(t)` is the value at the largest grid time `<= t`, and 1 before the
/// first grid time. An empty grid is the unit curve `S == 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurvivalCurve {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl SurvivalCurve {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<SurvivalCurve> {
        if times.len() != values.len() {
            return Err(Error::InvalidCurve(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        for window in times.windows(2) {
            if !(window[0] < window[1]) {
                return Err(Error::InvalidCurve("times not strictly increasing".into()));
            }
        }
        if let Some(&first) = times.first() {
            if !first.is_finite() || first < 0.0 {
                return Err(Error::InvalidCurve("times must be finite and >= 0".into()));
            }
        }
        if let Some(&last) = times.last() {
            if !last.is_finite() {
                return Err(Error::InvalidCurve("times must be finite".into()));
            }
        }
        let mut prev = 1.0;
        for &v in &values {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidCurve(format!("value {v} outside (0, 1]")));
            }
            if v > prev {
                return Err(Error::InvalidCurve("values increase".into()));
            }
            prev = v;
        }
        Ok(SurvivalCurve { times, values })
    }

    /// The curve that is identically 1 (no events).
    pub fn unit() -> SurvivalCurve {
        SurvivalCurve {
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_unit(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    /// Step evaluation: value at the largest grid time `<= t`, else 1.
    pub fn evaluate(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }

    /// `-ln S(t)`; zero before the first event time.
    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        -self.evaluate(t).ln()
    }

    /// Two-column CSV (`time,survival`), one row per grid point.
    pub fn write_csv<W: io::Write>(&self, mut writer: W) -> io::Result<()> {
        writeln!(writer, "time,survival")?;
        for (t, s) in self.times.iter().zip(&self.values) {
            writeln!(writer, "{t},{s}")?;
        }
        Ok(())
    }

    /// Like [`write_csv`](Self::write_csv) but evaluated on an explicit grid.
    pub fn write_csv_on_grid<W: io::Write>(&self, mut writer: W, grid: &[f64]) -> io::Result<()> {
        writeln!(writer, "time,survival")?;
        for &t in grid {
            writeln!(writer, "{t},{}", self.evaluate(t))?;
        }
        Ok(())
    }
}

/// Weighted Nelson-Aalen estimator.
///
/// The cumulative hazard increments are (weighted events at `s`) /
/// (weighted subjects with `time >= s`) over distinct event times `s`,
/// and `S = exp(-cumhaz)`. Weights are internally rescaled by their
/// maximum, which makes the estimator scale invariant and makes constant
/// weights reproduce the unweighted estimator exactly.
pub fn nelson_aalen(
    times: &[f64],
    events: &[bool],
    weights: &WeightVector,
) -> Result<SurvivalCurve> {
    if times.is_empty() {
        return Err(Error::EmptyInput("no subjects for nelson_aalen".into()));
    }
    if times.len() != events.len() || times.len() != weights.len() {
        return Err(Error::LengthMismatch(format!(
            "{} times, {} events, {} weights",
            times.len(),
            events.len(),
            weights.len()
        )));
    }
    for &t in times {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "follow-up times must be finite and >= 0, got {t}"
            )));
        }
    }
    let w_max = weights.values().iter().cloned().fold(0.0, f64::max);
    if !(w_max > 0.0) {
        return Err(Error::AllWeightsZero);
    }
    let w: Vec<f64> = weights.values().iter().map(|&v| v / w_max).collect();

    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_unstable_by(|&a, &b| times[a].total_cmp(&times[b]));

    let mut at_risk: f64 = w.iter().sum();
    let mut cumhaz = 0.0;
    let mut grid_times = Vec::new();
    let mut grid_values = Vec::new();

    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let mut j = i;
        let mut event_weight = 0.0;
        let mut group_weight = 0.0;
        let mut any_event = false;
        while j < order.len() && times[order[j]] == t {
            let idx = order[j];
            group_weight += w[idx];
            if events[idx] {
                any_event = true;
                event_weight += w[idx];
            }
            j += 1;
        }
        if any_event {
            if event_weight > 0.0 {
                cumhaz += event_weight / at_risk;
            }
            grid_times.push(t);
            grid_values.push((-cumhaz).exp().max(f64::MIN_POSITIVE));
        }
        at_risk -= group_weight;
        i = j;
    }

    SurvivalCurve::new(grid_times, grid_values)
}

/// `S_treat(t) - S_ctrl(t)`.
pub fn survival_difference(treat: &SurvivalCurve, ctrl: &SurvivalCurve, t: f64) -> f64 {
    treat.evaluate(t) - ctrl.evaluate(t)
}

/// Exact integral of `S_treat - S_ctrl` over `[0, t_star]`.
///
/// Both step functions are integrated on their merged grid, so the result
/// is piecewise-constant quadrature with no approximation error. Curves
/// ending before `t_star` are extended flat (logged as a warning).
pub fn rmst_difference(treat: &SurvivalCurve, ctrl: &SurvivalCurve, t_star: f64) -> f64 {
    if !(t_star > 0.0) {
        return 0.0;
    }
    for (name, curve) in [("treatment", treat), ("control", ctrl)] {
        if curve.max_time().unwrap_or(0.0) < t_star {
            log::warn!(
                "{name} curve grid ends at {:?} before t* = {t_star}; extrapolating flat",
                curve.max_time()
            );
        }
    }
    let mut pts: Vec<f64> = Vec::with_capacity(treat.times.len() + ctrl.times.len() + 2);
    pts.push(0.0);
    pts.extend(
        treat
            .times
            .iter()
            .chain(&ctrl.times)
            .copied()
            .filter(|&t| t > 0.0 && t < t_star),
    );
    pts.push(t_star);
    pts.sort_unstable_by(f64::total_cmp);
    pts.dedup();

    let mut integral = 0.0;
    for w in pts.windows(2) {
        integral += (w[1] - w[0]) * (treat.evaluate(w[0]) - ctrl.evaluate(w[0]));
    }
    integral
}

/// Pointwise ratio of cumulative hazards `(-ln S_treat)/(-ln S_ctrl)` on a
/// grid. Points where the control hazard is still zero are undefined and
/// reported as `None`.
pub fn cumulative_hazard_ratio(
    treat: &SurvivalCurve,
    ctrl: &SurvivalCurve,
    grid: &[f64],
) -> Vec<Option<f64>> {
    grid.iter()
        .map(|&t| {
            let denom = ctrl.cumulative_hazard(t);
            if denom > 0.0 && denom.is_finite() {
                Some(treat.cumulative_hazard(t) / denom)
            } else {
                None
            }
        })
        .collect()
}
