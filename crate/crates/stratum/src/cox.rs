//! Cox proportional hazards with a Breslow baseline.
//!
//! The partial likelihood uses the Breslow tie correction, consistent with
//! the Breslow cumulative baseline hazard that accompanies the fit. The
//! solver is Newton-Raphson from a zero start with step-halving whenever a
//! step would decrease the partial likelihood.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use crate::survival::SurvivalCurve;
use crate::{Error, Result};

const GRADIENT_TOL: f64 = 1e-8;
const MAX_ITERATIONS: usize = 50;
const MAX_STEP_HALVINGS: usize = 30;

/// Solver diagnostics recorded on fitted models.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Convergence {
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// A fitted proportional hazards model.
///
/// `baseline_cumhaz` is the Breslow cumulative baseline hazard on the
/// grid of distinct event times of the fitting data. Coefficients of
/// constant covariate columns are fixed at zero (the partial likelihood
/// carries no information about them).
#[derive(Clone, Debug, Serialize)]
pub struct CoxModel {
    pub coefficients: Vec<f64>,
    pub baseline_times: Vec<f64>,
    pub baseline_cumhaz: Vec<f64>,
    pub convergence: Convergence,
}

struct Layout {
    /// Subject indices sorted by descending follow-up time.
    order: Vec<usize>,
    /// Kept (non-constant) column indices.
    kept: Vec<usize>,
}

/// Maximizes the Breslow partial likelihood.
///
/// `covariates` is one row per subject; rows may be empty for a null
/// model, in which case the baseline equals the unweighted Nelson-Aalen
/// cumulative hazard.
pub fn fit_cox(times: &[f64], events: &[bool], covariates: &[Vec<f64>]) -> Result<CoxModel> {
    let n = times.len();
    if n == 0 {
        return Err(Error::EmptyInput("no subjects for fit_cox".into()));
    }
    if events.len() != n || covariates.len() != n {
        return Err(Error::LengthMismatch(format!(
            "{n} times, {} events, {} covariate rows",
            events.len(),
            covariates.len()
        )));
    }
    if !events.iter().any(|&e| e) {
        return Err(Error::NoEvents);
    }
    let p = covariates[0].len();
    for (i, row) in covariates.iter().enumerate() {
        if row.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "non-finite covariate in row {i}"
            )));
        }
    }
    for &t in times {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "follow-up times must be finite and >= 0, got {t}"
            )));
        }
    }

    let mut kept = Vec::new();
    for j in 0..p {
        let first = covariates[0][j];
        if covariates.iter().any(|row| row[j] != first) {
            kept.push(j);
        } else {
            log::warn!("covariate column {j} is constant; coefficient fixed at 0");
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| times[b].total_cmp(&times[a]));
    let layout = Layout { order, kept };

    let k = layout.kept.len();
    let mut beta = DVector::zeros(k);
    let mut iterations = 0;
    let mut gradient_norm = 0.0;
    if k > 0 {
        let (mut ll, mut grad, mut info) = partial_lik(times, events, covariates, &layout, &beta);
        loop {
            gradient_norm = grad.amax();
            if gradient_norm < GRADIENT_TOL {
                break;
            }
            if iterations >= MAX_ITERATIONS {
                return Err(Error::NonConvergence {
                    iterations,
                    gradient_norm,
                });
            }
            iterations += 1;
            let delta = solve_spd(&info, &grad, covariates, &layout)?;
            // Accept any step that does not decrease the likelihood beyond
            // its floating-point evaluation noise; an absolute threshold
            // would reject full Newton steps near the optimum and stall the
            // quadratic convergence.
            let noise = 1e-11 * (1.0 + ll.abs());
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..=MAX_STEP_HALVINGS {
                let candidate = &beta + &delta * step;
                let (ll_new, grad_new, info_new) =
                    partial_lik(times, events, covariates, &layout, &candidate);
                if ll_new.is_finite() && ll_new >= ll - noise {
                    debug_assert!(ll_new >= ll - 10.0 * noise, "partial likelihood decreased");
                    beta = candidate;
                    ll = ll_new;
                    grad = grad_new;
                    info = info_new;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                return Err(Error::NonConvergence {
                    iterations,
                    gradient_norm,
                });
            }
        }
    }

    let mut coefficients = vec![0.0; p];
    for (slot, &j) in layout.kept.iter().enumerate() {
        coefficients[j] = beta[slot];
    }

    let (baseline_times, baseline_cumhaz) =
        breslow_baseline(times, events, covariates, &layout.order, &coefficients);

    Ok(CoxModel {
        coefficients,
        baseline_times,
        baseline_cumhaz,
        convergence: Convergence {
            iterations,
            gradient_norm,
        },
    })
}

/// Breslow partial log-likelihood with gradient and observed information,
/// accumulated over distinct event times with risk sums built by walking
/// the descending time order.
fn partial_lik(
    times: &[f64],
    events: &[bool],
    covariates: &[Vec<f64>],
    layout: &Layout,
    beta: &DVector<f64>,
) -> (f64, DVector<f64>, DMatrix<f64>) {
    let k = layout.kept.len();
    let mut ll = 0.0;
    let mut grad = DVector::zeros(k);
    let mut info = DMatrix::zeros(k, k);

    let mut s0 = 0.0;
    let mut s1 = DVector::zeros(k);
    let mut s2 = DMatrix::zeros(k, k);
    let mut x = DVector::zeros(k);

    let order = &layout.order;
    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let mut j = i;
        let mut d = 0.0;
        let mut event_x = DVector::zeros(k);
        while j < order.len() && times[order[j]] == t {
            let idx = order[j];
            for (slot, &col) in layout.kept.iter().enumerate() {
                x[slot] = covariates[idx][col];
            }
            let risk = x.dot(beta).exp();
            s0 += risk;
            s1.axpy(risk, &x, 1.0);
            s2.syger(risk, &x, &x, 1.0);
            if events[idx] {
                d += 1.0;
                event_x += &x;
                ll += x.dot(beta);
            }
            j += 1;
        }
        if d > 0.0 {
            ll -= d * s0.ln();
            let mean = &s1 / s0;
            grad += &event_x - &mean * d;
            info += (&s2 / s0 - &mean * mean.transpose()) * d;
        }
        i = j;
    }
    // syger fills the lower triangle only; mirror it.
    for r in 0..k {
        for c in (r + 1)..k {
            info[(r, c)] = info[(c, r)];
        }
    }
    (ll, grad, info)
}

/// Solves `info * delta = grad`; a non-positive-definite information
/// matrix means a rank-deficient covariate set.
fn solve_spd(
    info: &DMatrix<f64>,
    grad: &DVector<f64>,
    covariates: &[Vec<f64>],
    layout: &Layout,
) -> Result<DVector<f64>> {
    match Cholesky::new(info.clone()) {
        Some(ch) => Ok(ch.solve(grad)),
        None => Err(Error::RankDeficient {
            column: offending_column(info, layout, covariates),
        }),
    }
}

/// Heuristic identification of which kept column breaks full rank: the
/// first column whose removal restores positive definiteness.
fn offending_column(info: &DMatrix<f64>, layout: &Layout, covariates: &[Vec<f64>]) -> usize {
    let k = layout.kept.len();
    for drop in 0..k {
        let idx: Vec<usize> = (0..k).filter(|&j| j != drop).collect();
        let minor = info.select_rows(&idx).select_columns(&idx);
        if idx.is_empty() || Cholesky::new(minor).is_some() {
            return layout.kept[drop];
        }
    }
    let _ = covariates;
    layout.kept.last().copied().unwrap_or(0)
}

fn breslow_baseline(
    times: &[f64],
    events: &[bool],
    covariates: &[Vec<f64>],
    desc_order: &[usize],
    coefficients: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    // Walk descending times accumulating the risk sum, record d/s0 per
    // distinct event time, then reverse into an ascending cumulative sum.
    let mut s0 = 0.0;
    let mut increments: Vec<(f64, f64)> = Vec::new();
    let mut i = 0;
    while i < desc_order.len() {
        let t = times[desc_order[i]];
        let mut j = i;
        let mut d = 0.0;
        while j < desc_order.len() && times[desc_order[j]] == t {
            let idx = desc_order[j];
            let eta: f64 = covariates[idx]
                .iter()
                .zip(coefficients)
                .map(|(x, b)| x * b)
                .sum();
            s0 += eta.exp();
            if events[idx] {
                d += 1.0;
            }
            j += 1;
        }
        if d > 0.0 {
            increments.push((t, d / s0));
        }
        i = j;
    }
    increments.reverse();
    let mut cum = 0.0;
    let mut grid = Vec::with_capacity(increments.len());
    let mut cumhaz = Vec::with_capacity(increments.len());
    for (t, inc) in increments {
        cum += inc;
        grid.push(t);
        cumhaz.push(cum);
    }
    (grid, cumhaz)
}

/// Predicted survival `S(t|z) = exp(-Lambda0(t) * exp(z . coef))` on the
/// baseline grid.
pub fn predict_survival(model: &CoxModel, z: &[f64]) -> Result<SurvivalCurve> {
    if z.len() != model.coefficients.len() {
        return Err(Error::DimensionMismatch {
            expected: model.coefficients.len(),
            got: z.len(),
        });
    }
    let eta: f64 = z.iter().zip(&model.coefficients).map(|(x, b)| x * b).sum();
    let risk = eta.exp();
    let values = model
        .baseline_cumhaz
        .iter()
        .map(|&l| (-(l * risk)).exp().max(f64::MIN_POSITIVE))
        .collect();
    SurvivalCurve::new(model.baseline_times.clone(), values)
}

/// Pointwise mean of [`predict_survival`] over covariate rows, evaluated
/// on the shared baseline grid.
pub fn average_predicted_curve(model: &CoxModel, rows: &[Vec<f64>]) -> Result<SurvivalCurve> {
    if rows.is_empty() {
        return Err(Error::EmptyInput(
            "no covariate rows to average over".into(),
        ));
    }
    let m = model.baseline_times.len();
    let mut acc = vec![0.0; m];
    for z in rows {
        if z.len() != model.coefficients.len() {
            return Err(Error::DimensionMismatch {
                expected: model.coefficients.len(),
                got: z.len(),
            });
        }
        let eta: f64 = z.iter().zip(&model.coefficients).map(|(x, b)| x * b).sum();
        let risk = eta.exp();
        for (a, &l) in acc.iter_mut().zip(&model.baseline_cumhaz) {
            *a += (-(l * risk)).exp();
        }
    }
    let n = rows.len() as f64;
    let values = acc
        .into_iter()
        .map(|v| (v / n).min(1.0).max(f64::MIN_POSITIVE))
        .collect();
    SurvivalCurve::new(model.baseline_times.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::{nelson_aalen, WeightVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Independent Breslow partial log-likelihood used as a brute-force
    /// oracle (grid search, finite differences). Kept free of any code
    /// shared with the solver.
    fn oracle_loglik(times: &[f64], events: &[bool], x: &[f64], beta: f64) -> f64 {
        let mut ll = 0.0;
        for i in 0..times.len() {
            if !events[i] {
                continue;
            }
            let mut denom = 0.0;
            for j in 0..times.len() {
                if times[j] >= times[i] {
                    denom += (x[j] * beta).exp();
                }
            }
            ll += x[i] * beta - denom.ln();
        }
        ll
    }

    fn grid_argmax(times: &[f64], events: &[bool], x: &[f64]) -> f64 {
        let mut best = (f64::NEG_INFINITY, 0.0);
        let mut b = -5.0;
        while b <= 5.0 {
            let ll = oracle_loglik(times, events, x, b);
            if ll > best.0 {
                best = (ll, b);
            }
            b += 1e-4;
        }
        best.1
    }

    fn oracle_se(times: &[f64], events: &[bool], x: &[f64], beta: f64) -> f64 {
        let h = 1e-4;
        let ll = |b: f64| oracle_loglik(times, events, x, b);
        let second = (ll(beta + h) - 2.0 * ll(beta) + ll(beta - h)) / (h * h);
        (-1.0 / second).sqrt()
    }

    #[test]
    fn zero_covariates_give_null_model_and_nelson_aalen_baseline() {
        let times = [1.0, 2.0, 2.0, 3.5, 4.0];
        let events = [true, true, false, true, false];
        let covs: Vec<Vec<f64>> = times.iter().map(|_| vec![0.0, 0.0]).collect();
        let m = fit_cox(&times, &events, &covs).unwrap();
        assert_eq!(m.coefficients, vec![0.0, 0.0]);

        let na = nelson_aalen(&times, &events, &WeightVector::uniform(5)).unwrap();
        assert_eq!(m.baseline_times.as_slice(), na.times());
        for (l, s) in m.baseline_cumhaz.iter().zip(na.values()) {
            assert!((l - (-s.ln())).abs() < 1e-12);
        }
    }

    #[test]
    fn null_model_with_no_columns_works() {
        let times = [1.0, 2.0];
        let events = [true, true];
        let covs: Vec<Vec<f64>> = vec![vec![], vec![]];
        let m = fit_cox(&times, &events, &covs).unwrap();
        assert!(m.coefficients.is_empty());
        assert!((m.baseline_cumhaz[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn matches_grid_search_oracle_on_small_instances() {
        // Smallest instances with an interior maximizer; a two-subject
        // partial likelihood is monotone in the coefficient.
        let instances: Vec<(Vec<f64>, Vec<bool>, Vec<f64>)> = vec![
            (
                vec![1.0, 2.0, 3.0],
                vec![true, true, true],
                vec![1.0, 0.0, 1.0],
            ),
            (
                vec![1.0, 2.0, 3.0],
                vec![true, true, false],
                vec![1.0, 0.0, 1.0],
            ),
            (
                vec![0.5, 1.0, 2.0, 4.0],
                vec![true, true, true, false],
                vec![0.2, -0.4, 1.0, 0.3],
            ),
            (
                vec![1.0, 1.5, 2.0, 3.0, 4.5, 6.0],
                vec![true, false, true, true, true, false],
                vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
            ),
        ];
        for (times, events, x) in instances {
            let covs: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
            let fitted = fit_cox(&times, &events, &covs).unwrap().coefficients[0];
            let oracle = grid_argmax(&times, &events, &x);
            assert!(
                (fitted - oracle).abs() < 1e-3,
                "fitted {fitted} vs grid argmax {oracle}"
            );
        }
    }

    #[test]
    fn recovers_simulated_coefficient_within_three_se() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200;
        let mut times = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n);
        for _ in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            let lambda = (-3.1 + 0.7 * z).exp();
            let u: f64 = rng.random();
            times.push(-u.ln() / lambda);
            x.push(z);
        }
        let events = vec![true; n];
        let covs: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
        let m = fit_cox(&times, &events, &covs).unwrap();
        let b = m.coefficients[0];
        let se = oracle_se(&times, &events, &x, b);
        assert!(
            (b - 0.7).abs() < 3.0 * se,
            "estimate {b} with se {se} too far from 0.7"
        );
        assert!(m.convergence.gradient_norm < 1e-8);
    }

    #[test]
    fn collinear_columns_report_rank_deficiency() {
        let times = [1.0, 2.0, 3.0, 4.0];
        let events = [true, true, true, false];
        let covs: Vec<Vec<f64>> = [0.5, -1.0, 2.0, 0.0]
            .iter()
            .map(|&v| vec![v, 2.0 * v])
            .collect();
        let err = fit_cox(&times, &events, &covs).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }));
    }

    #[test]
    fn zero_events_is_an_error() {
        let err = fit_cox(&[1.0, 2.0], &[false, false], &[vec![0.0], vec![1.0]]).unwrap_err();
        assert!(matches!(err, Error::NoEvents));
    }

    #[test]
    fn predict_survival_identities() {
        let times = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let events = [true, true, false, true, true, false];
        let covs: Vec<Vec<f64>> = [0.3, -0.5, 1.0, 0.0, 0.7, -1.2]
            .iter()
            .map(|&v| vec![v])
            .collect();
        let m = fit_cox(&times, &events, &covs).unwrap();

        // z = 0 is exactly the baseline survival.
        let base = predict_survival(&m, &[0.0]).unwrap();
        for (v, l) in base.values().iter().zip(&m.baseline_cumhaz) {
            assert_eq!(*v, (-l).exp().max(f64::MIN_POSITIVE));
        }

        // Shifting the linear predictor by ln 2 squares the curve.
        let b = m.coefficients[0];
        let z1 = 0.4;
        let z2 = z1 + 2.0f64.ln() / b;
        let s1 = predict_survival(&m, &[z1]).unwrap();
        let s2 = predict_survival(&m, &[z2]).unwrap();
        for (a, c) in s1.values().iter().zip(s2.values()) {
            assert!((c - a * a).abs() < 1e-12);
        }

        assert!(matches!(
            predict_survival(&m, &[0.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn null_coefficients_ignore_covariates() {
        let times = [1.0, 2.0, 3.0];
        let events = [true, true, true];
        let covs: Vec<Vec<f64>> = vec![vec![5.0], vec![5.0], vec![5.0]];
        let m = fit_cox(&times, &events, &covs).unwrap();
        assert_eq!(m.coefficients, vec![0.0]);
        let a = predict_survival(&m, &[0.0]).unwrap();
        let b = predict_survival(&m, &[123.0]).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn average_predicted_curve_cases() {
        let times = [1.0, 2.0, 3.0, 4.0];
        let events = [true, true, true, true];
        let covs: Vec<Vec<f64>> = [0.0, 1.0, -1.0, 0.5].iter().map(|&v| vec![v]).collect();
        let m = fit_cox(&times, &events, &covs).unwrap();

        let single = average_predicted_curve(&m, &[vec![0.7]]).unwrap();
        let direct = predict_survival(&m, &[0.7]).unwrap();
        assert_eq!(single.values(), direct.values());

        let twin = average_predicted_curve(&m, &[vec![0.7], vec![0.7]]).unwrap();
        assert_eq!(twin.values(), direct.values());

        // Rows with linear predictors 0 and ln 2: mean of exp(-L) and exp(-2L).
        let b = m.coefficients[0];
        let rows = vec![vec![0.0], vec![2.0f64.ln() / b]];
        let avg = average_predicted_curve(&m, &rows).unwrap();
        for (i, &l) in m.baseline_cumhaz.iter().enumerate().take(3) {
            let expected = 0.5 * ((-l).exp() + (-2.0 * l).exp());
            assert!((avg.values()[i] - expected).abs() < 1e-12);
        }

        assert!(matches!(
            average_predicted_curve(&m, &[]),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn monotone_predictions_for_any_z() {
        let times = [1.0, 2.0, 3.0, 4.0, 5.0];
        let events = [true, false, true, true, true];
        let covs: Vec<Vec<f64>> = [0.1, 0.9, -0.4, 0.2, -1.0].iter().map(|&v| vec![v]).collect();
        let m = fit_cox(&times, &events, &covs).unwrap();
        for z in [-2.0, 0.0, 3.0] {
            let s = predict_survival(&m, &[z]).unwrap();
            let mut prev = 1.0;
            for &v in s.values() {
                assert!(v <= prev);
                prev = v;
            }
        }
    }
}
