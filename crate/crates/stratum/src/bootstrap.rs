//! Nonparametric bootstrap confidence intervals, stratified by arm.
//!
//! Each resample redraws patients with replacement within each arm
//! (preserving arm sizes) and reruns the full estimation pipeline,
//! including responder derivation and model refits. Intervals are
//! percentile (type-7) quantiles of the successful resamples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Arm, PatientRecord, TrialDataset};
use crate::estimators::{control_curve, treatment_subgroup_curve, Estimand, MethodSpec};
use crate::{Error, Result};

/// Fraction of resamples allowed to fail before the whole interval does.
const MAX_FAILURE_FRACTION: f64 = 0.1;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BootstrapConfig {
    pub n_resamples: usize,
    /// Two-sided coverage level, e.g. 0.90.
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            n_resamples: 1000,
            level: 0.90,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    fn validate(&self) -> Result<()> {
        if self.n_resamples < 2 {
            return Err(Error::InvalidConfig(format!(
                "n_resamples must be >= 2, got {}",
                self.n_resamples
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "level must be in (0, 1), got {}",
                self.level
            )));
        }
        Ok(())
    }
}

/// A point estimate with percentile bootstrap bounds.
///
/// Percentile intervals need not cover the point estimate in pathological
/// cases, but `lower <= upper` always holds.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct IntervalEstimate {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub n_failed_resamples: usize,
}

/// Type-7 quantile (linear interpolation of order statistics) of an
/// ascending-sorted slice.
pub fn quantile_type7(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=1.0).contains(&q));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

fn resample_within_arms(dataset: &TrialDataset, rng: &mut ChaCha8Rng) -> TrialDataset {
    let mut rows: Vec<PatientRecord> =
        Vec::with_capacity(dataset.patients().len());
    for arm in [Arm::Placebo, Arm::Treatment] {
        let pool: Vec<&PatientRecord> = dataset.arm_patients(arm).collect();
        for _ in 0..pool.len() {
            rows.push(pool[rng.random_range(0..pool.len())].clone());
        }
    }
    dataset.resampled(rows)
}

/// Generic bootstrap over a vector-valued statistic.
///
/// `stat` must return `width` values per dataset. Resamples run in
/// parallel with one RNG substream per resample index, so results do not
/// depend on scheduling. Resamples where `stat` errors are dropped and
/// counted; more than 10% failures is an error, as is a failing point
/// estimate.
pub fn bootstrap_statistics<F>(
    dataset: &TrialDataset,
    cfg: &BootstrapConfig,
    width: usize,
    stat: F,
) -> Result<Vec<IntervalEstimate>>
where
    F: Fn(&TrialDataset) -> Result<Vec<f64>> + Sync,
{
    cfg.validate()?;
    let points = stat(dataset)?;
    if points.len() != width {
        return Err(Error::LengthMismatch(format!(
            "statistic returned {} values, expected {width}",
            points.len()
        )));
    }

    let replicates: Vec<Option<Vec<f64>>> = (0..cfg.n_resamples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
            let resampled = resample_within_arms(dataset, &mut rng);
            stat(&resampled).ok()
        })
        .collect();

    let n_failed = replicates.iter().filter(|r| r.is_none()).count();
    let limit = (MAX_FAILURE_FRACTION * cfg.n_resamples as f64).floor() as usize;
    if n_failed > limit {
        return Err(Error::ExcessiveResampleFailures {
            failed: n_failed,
            total: cfg.n_resamples,
            limit,
        });
    }

    let alpha = (1.0 - cfg.level) / 2.0;
    let mut intervals = Vec::with_capacity(width);
    for k in 0..width {
        let mut values: Vec<f64> = replicates
            .iter()
            .flatten()
            .map(|r| r[k])
            .collect();
        values.sort_unstable_by(f64::total_cmp);
        intervals.push(IntervalEstimate {
            point: points[k],
            lower: quantile_type7(&values, alpha),
            upper: quantile_type7(&values, 1.0 - alpha),
            n_failed_resamples: n_failed,
        });
    }
    Ok(intervals)
}

/// Bootstrap intervals for several estimands of one method, sharing the
/// resamples (curves are built once per resample).
pub fn bootstrap_intervals(
    dataset: &TrialDataset,
    method: &MethodSpec,
    estimands: &[Estimand],
    cfg: &BootstrapConfig,
) -> Result<Vec<IntervalEstimate>> {
    method.validate()?;
    if estimands.is_empty() {
        return Err(Error::EmptyInput("no estimands".into()));
    }
    let stat = |d: &TrialDataset| -> Result<Vec<f64>> {
        let treat = treatment_subgroup_curve(d)?;
        let ctrl = control_curve(d, method)?;
        Ok(estimands
            .iter()
            .map(|e| e.compute(&treat, &ctrl))
            .collect())
    };
    bootstrap_statistics(dataset, cfg, estimands.len(), stat)
}

/// Bootstrap interval for a single method/estimand pair.
pub fn bootstrap_estimate(
    dataset: &TrialDataset,
    method: &MethodSpec,
    estimand: Estimand,
    cfg: &BootstrapConfig,
) -> Result<IntervalEstimate> {
    Ok(bootstrap_intervals(dataset, method, &[estimand], cfg)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: String, arm: Arm, beta: f64, time: f64, event: bool) -> PatientRecord {
        PatientRecord {
            id,
            arm,
            z0: 0.1 * time,
            z1: -0.2 * beta,
            beta,
            time,
            event,
        }
    }

    fn small_dataset(placebo_responders: usize, placebo_total: usize) -> TrialDataset {
        let mut patients = Vec::new();
        for i in 0..20 {
            let beta = if i < 12 { -0.5 - 0.01 * i as f64 } else { 0.5 };
            patients.push(record(
                format!("t{i}"),
                Arm::Treatment,
                beta,
                0.3 + 0.2 * i as f64,
                i % 3 != 0,
            ));
        }
        for i in 0..placebo_total {
            let beta = if i < placebo_responders {
                -0.5 - 0.01 * i as f64
            } else {
                0.5 + 0.01 * i as f64
            };
            patients.push(record(
                format!("c{i}"),
                Arm::Placebo,
                beta,
                0.4 + 0.18 * i as f64,
                i % 4 != 0,
            ));
        }
        TrialDataset::new(patients, 0.0).unwrap()
    }

    #[test]
    fn constant_statistic_gives_degenerate_interval() {
        let d = small_dataset(5, 10);
        let cfg = BootstrapConfig {
            n_resamples: 50,
            level: 0.9,
            seed: 1,
        };
        let iv = bootstrap_statistics(&d, &cfg, 1, |_| Ok(vec![0.5])).unwrap();
        assert_eq!(iv[0].point, 0.5);
        assert_eq!(iv[0].lower, 0.5);
        assert_eq!(iv[0].upper, 0.5);
        assert_eq!(iv[0].n_failed_resamples, 0);
    }

    #[test]
    fn reproducible_given_seed_and_order_independent() {
        let d = small_dataset(5, 12);
        let cfg = BootstrapConfig {
            n_resamples: 200,
            level: 0.9,
            seed: 42,
        };
        let m = MethodSpec::naive_full_pbo();
        let e = Estimand::RmstDiff { t_star: 3.0 };
        let a = bootstrap_estimate(&d, &m, e, &cfg).unwrap();
        let b = bootstrap_estimate(&d, &m, e, &cfg).unwrap();
        assert_eq!(a.lower, b.lower);
        assert_eq!(a.upper, b.upper);
        assert!(a.lower <= a.upper);

        let other = bootstrap_estimate(
            &d,
            &m,
            e,
            &BootstrapConfig {
                seed: 43,
                ..cfg
            },
        )
        .unwrap();
        assert!(other.lower != a.lower || other.upper != a.upper);
    }

    #[test]
    fn shared_resamples_match_single_estimand_runs() {
        let d = small_dataset(6, 12);
        let cfg = BootstrapConfig {
            n_resamples: 100,
            level: 0.9,
            seed: 7,
        };
        let m = MethodSpec::naive_full_pbo();
        let estimands = [
            Estimand::SurvivalDiff { horizon: 2.0 },
            Estimand::RmstDiff { t_star: 3.0 },
        ];
        let joint = bootstrap_intervals(&d, &m, &estimands, &cfg).unwrap();
        let single = bootstrap_estimate(&d, &m, estimands[1], &cfg).unwrap();
        assert_eq!(joint[1].lower, single.lower);
        assert_eq!(joint[1].upper, single.upper);
    }

    #[test]
    fn excessive_failures_error() {
        // One placebo responder in ten: NAIVE_THRES loses its subgroup in
        // roughly a third of resamples, far beyond the 10% allowance.
        let d = small_dataset(1, 10);
        let cfg = BootstrapConfig {
            n_resamples: 200,
            level: 0.9,
            seed: 3,
        };
        let err =
            bootstrap_estimate(&d, &MethodSpec::naive_thres(), Estimand::RmstDiff { t_star: 3.0 }, &cfg)
                .unwrap_err();
        assert!(matches!(err, Error::ExcessiveResampleFailures { .. }));
    }

    #[test]
    fn failing_point_estimate_errors_immediately() {
        let d = small_dataset(5, 10);
        let cfg = BootstrapConfig::default();
        let err = bootstrap_statistics(&d, &cfg, 1, |_| {
            Err(Error::EmptySubgroup("synthetic".into()))
        })
        .unwrap_err();
        assert!(matches!(err, Error::EmptySubgroup(_)));
    }

    #[test]
    fn quantile_type7_reference_values() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_type7(&xs, 0.0), 1.0);
        assert_eq!(quantile_type7(&xs, 1.0), 4.0);
        assert_eq!(quantile_type7(&xs, 0.5), 2.5);
        assert!((quantile_type7(&xs, 0.05) - 1.15).abs() < 1e-12);
        assert!((quantile_type7(&xs, 0.95) - 3.85).abs() < 1e-12);
        assert_eq!(quantile_type7(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn config_validation() {
        let d = small_dataset(5, 10);
        let bad = BootstrapConfig {
            n_resamples: 1,
            level: 0.9,
            seed: 0,
        };
        assert!(bootstrap_statistics(&d, &bad, 1, |_| Ok(vec![0.0])).is_err());
        let bad = BootstrapConfig {
            n_resamples: 10,
            level: 1.0,
            seed: 0,
        };
        assert!(bootstrap_statistics(&d, &bad, 1, |_| Ok(vec![0.0])).is_err());
    }
}
