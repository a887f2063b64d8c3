//! Logistic regression fitted by iteratively reweighted least squares.
//!
//! Fitted on the treatment arm with the responder indicator as outcome;
//! the predicted probabilities become the WPP placebo weights.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use crate::cox::Convergence;
use crate::{Error, Result};

const GRADIENT_TOL: f64 = 1e-8;
const MAX_ITERATIONS: usize = 100;
const MAX_STEP_HALVINGS: usize = 30;
const SEPARATION_NORM: f64 = 1e3;

/// A fitted logistic model `P(y=1|z) = sigmoid(intercept + z . coef)`.
///
/// Constant covariate columns are dropped from the fit and keep a zero
/// coefficient.
#[derive(Clone, Debug, Serialize)]
pub struct LogisticModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub convergence: Convergence,
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(eta))` without overflow.
fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

/// Maximum-likelihood fit via IRLS with step-halving.
///
/// Errors on single-class labels and on complete separation (detected by
/// a diverging coefficient norm).
pub fn fit_logistic(labels: &[bool], covariates: &[Vec<f64>]) -> Result<LogisticModel> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::EmptyInput("no observations for fit_logistic".into()));
    }
    if covariates.len() != n {
        return Err(Error::LengthMismatch(format!(
            "{n} labels, {} covariate rows",
            covariates.len()
        )));
    }
    if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
        return Err(Error::SingleClass);
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

    let mut kept = Vec::new();
    for j in 0..p {
        let first = covariates[0][j];
        if covariates.iter().any(|row| row[j] != first) {
            kept.push(j);
        } else {
            log::warn!("covariate column {j} is constant; dropped as rank deficient");
        }
    }

    // Design matrix with a leading intercept column.
    let k = kept.len() + 1;
    let mut design = DMatrix::zeros(n, k);
    for i in 0..n {
        design[(i, 0)] = 1.0;
        for (slot, &j) in kept.iter().enumerate() {
            design[(i, slot + 1)] = covariates[i][j];
        }
    }
    let y = DVector::from_iterator(n, labels.iter().map(|&l| f64::from(u8::from(l))));

    let loglik = |beta: &DVector<f64>| -> f64 {
        let eta = &design * beta;
        (0..n)
            .map(|i| y[i] * eta[i] - softplus(eta[i]))
            .sum::<f64>()
    };

    let mut beta: DVector<f64> = DVector::zeros(k);
    let mut ll = loglik(&beta);
    let mut iterations = 0;
    let gradient_norm;
    loop {
        let eta = &design * &beta;
        let probs: DVector<f64> = eta.map(sigmoid);
        let grad = design.transpose() * (&y - &probs);
        let norm = grad.amax();
        if norm < GRADIENT_TOL {
            gradient_norm = norm;
            break;
        }
        if iterations >= MAX_ITERATIONS {
            return Err(Error::NonConvergence {
                iterations,
                gradient_norm: norm,
            });
        }
        iterations += 1;

        let mut hessian = DMatrix::zeros(k, k);
        for i in 0..n {
            let w = probs[i] * (1.0 - probs[i]);
            for a in 0..k {
                let da = design[(i, a)];
                for b in a..k {
                    hessian[(b, a)] += w * da * design[(i, b)];
                }
            }
        }
        for a in 0..k {
            for b in (a + 1)..k {
                hessian[(a, b)] = hessian[(b, a)];
            }
        }
        let delta = match Cholesky::new(hessian) {
            Some(ch) => ch.solve(&grad),
            None => {
                // Constant columns are already gone, so this is collinearity
                // between the kept columns.
                return Err(Error::RankDeficient {
                    column: kept.last().copied().unwrap_or(0),
                });
            }
        };

        // Same relative noise allowance as the Cox solver: rejecting
        // rounding-level dips would stall convergence near the optimum.
        let noise = 1e-11 * (1.0 + ll.abs());
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_STEP_HALVINGS {
            let candidate = &beta + &delta * step;
            let ll_new = loglik(&candidate);
            if ll_new.is_finite() && ll_new >= ll - noise {
                debug_assert!(ll_new >= ll - 10.0 * noise, "log-likelihood decreased");
                beta = candidate;
                ll = ll_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConvergence {
                iterations,
                gradient_norm: norm,
            });
        }
        let coef_norm = beta.amax();
        if coef_norm > SEPARATION_NORM {
            return Err(Error::Separation { norm: coef_norm });
        }
    }

    let mut coefficients = vec![0.0; p];
    for (slot, &j) in kept.iter().enumerate() {
        coefficients[j] = beta[slot + 1];
    }
    Ok(LogisticModel {
        intercept: beta[0],
        coefficients,
        convergence: Convergence {
            iterations,
            gradient_norm,
        },
    })
}

impl LogisticModel {
    /// `sigmoid(intercept + z . coef)`, clamped to the open interval (0, 1).
    pub fn predict_probability(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.coefficients.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coefficients.len(),
                got: z.len(),
            });
        }
        let eta = self.intercept
            + z.iter()
                .zip(&self.coefficients)
                .map(|(x, b)| x * b)
                .sum::<f64>();
        Ok(sigmoid(eta)
            .max(f64::MIN_POSITIVE)
            .min(1.0 - f64::EPSILON / 2.0))
    }
}

/// Free-function form of [`LogisticModel::predict_probability`].
pub fn predict_probability(model: &LogisticModel, z: &[f64]) -> Result<f64> {
    model.predict_probability(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Independent log-likelihood for finite-difference standard errors.
    fn oracle_loglik(labels: &[bool], covs: &[Vec<f64>], intercept: f64, coef: &[f64]) -> f64 {
        labels
            .iter()
            .zip(covs)
            .map(|(&y, z)| {
                let eta: f64 =
                    intercept + z.iter().zip(coef).map(|(x, b)| x * b).sum::<f64>();
                if y {
                    eta - softplus(eta)
                } else {
                    -softplus(eta)
                }
            })
            .sum()
    }

    #[test]
    fn balanced_labels_with_zero_covariate() {
        let labels: Vec<bool> = (0..100).map(|i| i % 2 == 0).collect();
        let covs: Vec<Vec<f64>> = vec![vec![0.0]; 100];
        let m = fit_logistic(&labels, &covs).unwrap();
        assert!(m.intercept.abs() < 1e-6);
        assert_eq!(m.coefficients, vec![0.0]);
    }

    #[test]
    fn intercept_only_closed_form() {
        let labels: Vec<bool> = (0..100).map(|i| i < 70).collect();
        let covs: Vec<Vec<f64>> = vec![vec![]; 100];
        let m = fit_logistic(&labels, &covs).unwrap();
        assert!((m.intercept - (7.0f64 / 3.0).ln()).abs() < 1e-8);
        assert!((m.predict_probability(&[]).unwrap() - 0.7).abs() < 1e-8);
    }

    #[test]
    fn recovers_simulated_coefficients_within_three_se() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 500;
        let mut labels = Vec::with_capacity(n);
        let mut covs = Vec::with_capacity(n);
        for _ in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            let prob = sigmoid(1.0 - 2.0 * z);
            labels.push(rng.random::<f64>() < prob);
            covs.push(vec![z]);
        }
        let m = fit_logistic(&labels, &covs).unwrap();

        let h = 1e-4;
        let ll0 = oracle_loglik(&labels, &covs, m.intercept, &m.coefficients);
        let dd_int = (oracle_loglik(&labels, &covs, m.intercept + h, &m.coefficients)
            - 2.0 * ll0
            + oracle_loglik(&labels, &covs, m.intercept - h, &m.coefficients))
            / (h * h);
        let bumped = |d: f64| vec![m.coefficients[0] + d];
        let dd_coef = (oracle_loglik(&labels, &covs, m.intercept, &bumped(h)) - 2.0 * ll0
            + oracle_loglik(&labels, &covs, m.intercept, &bumped(-h)))
            / (h * h);
        let se_int = (-1.0 / dd_int).sqrt();
        let se_coef = (-1.0 / dd_coef).sqrt();
        assert!((m.intercept - 1.0).abs() < 3.0 * se_int);
        assert!((m.coefficients[0] + 2.0).abs() < 3.0 * se_coef);
    }

    #[test]
    fn predictions_and_dimension_checks() {
        let m = LogisticModel {
            intercept: 0.0,
            coefficients: vec![0.0, 0.0],
            convergence: Convergence {
                iterations: 0,
                gradient_norm: 0.0,
            },
        };
        assert_eq!(m.predict_probability(&[3.0, -4.0]).unwrap(), 0.5);
        assert!(matches!(
            m.predict_probability(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn matches_mea_weight_function_with_matching_parameters() {
        // With intercept pi_tilde/delta and slope -1/delta the predicted
        // probability at tau equals the rank-based weight
        // 1/(1 + exp((tau - pi_tilde)/delta)).
        let (pi_tilde, delta) = (0.69, 0.15);
        let m = LogisticModel {
            intercept: pi_tilde / delta,
            coefficients: vec![-1.0 / delta],
            convergence: Convergence {
                iterations: 0,
                gradient_norm: 0.0,
            },
        };
        for tau in [0.1, 0.3, 0.5, 0.69, 0.9] {
            let expected = 1.0 / (1.0 + ((tau - pi_tilde) / delta).exp());
            let got = m.predict_probability(&[tau]).unwrap();
            assert!((got - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_prediction_equals_positive_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 300;
        let mut labels = Vec::with_capacity(n);
        let mut covs = Vec::with_capacity(n);
        for _ in 0..n {
            let z0: f64 = rng.sample(StandardNormal);
            let z1: f64 = rng.sample(StandardNormal);
            labels.push(rng.random::<f64>() < sigmoid(0.3 + 0.8 * z0 - 0.5 * z1));
            covs.push(vec![z0, z1]);
        }
        let m = fit_logistic(&labels, &covs).unwrap();
        let mean_pred: f64 = covs
            .iter()
            .map(|z| m.predict_probability(z).unwrap())
            .sum::<f64>()
            / n as f64;
        let rate = labels.iter().filter(|&&y| y).count() as f64 / n as f64;
        assert!((mean_pred - rate).abs() < 1e-8);
    }

    #[test]
    fn single_class_is_an_error() {
        let labels = vec![true; 10];
        let covs: Vec<Vec<f64>> = vec![vec![0.0]; 10];
        assert!(matches!(
            fit_logistic(&labels, &covs),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn complete_separation_is_an_error() {
        // A narrow class gap forces the coefficient past the divergence
        // threshold before the gradient can vanish.
        let covs: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(f64::from(i) - 19.5) * 1e-3])
            .collect();
        let labels: Vec<bool> = (0..40).map(|i| i >= 20).collect();
        assert!(matches!(
            fit_logistic(&labels, &covs),
            Err(Error::Separation { .. })
        ));
    }
}
