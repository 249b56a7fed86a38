//! Weighted ridge logistic regression.
//!
//! Objective, with x̃ = [1, x] and the intercept left out of the penalty:
//!
//! ```text
//! R(θ) = (1/m) Σ_j w_j ℓ_j(θ) + (λ/2) Σ_{i≥1} θ_i²
//! ℓ_j(θ) = softplus(θᵀx̃_j) − d_j θᵀx̃_j
//! ```
//!
//! Gradient and Hessian are exact; the solver is Newton with step halving.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest accepted ratio of squared Cholesky pivots (min/max). Below this
/// the Hessian is treated as singular.
const PIVOT_RATIO: f64 = 1e-13;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Design matrix with a leading column of ones, plus binary labels.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    design: DMatrix<f64>,
    labels: Vec<f64>,
}

impl TrainingSet {
    /// `features` is m×p (no intercept column).
    pub fn new(features: &DMatrix<f64>, labels: &[u8]) -> Result<Self> {
        let (m, p) = features.shape();
        if labels.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: labels.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::validation(format!(
                "labels must be 0 or 1, got {bad}"
            )));
        }
        let design = DMatrix::from_fn(
            m,
            p + 1,
            |i, j| if j == 0 { 1.0 } else { features[(i, j - 1)] },
        );
        Ok(TrainingSet {
            design,
            labels: labels.iter().map(|&l| l as f64).collect(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: &[u8]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: r.len(),
            });
        }
        Self::new(&DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]), labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of coefficients including the intercept.
    pub fn n_params(&self) -> usize {
        self.design.ncols()
    }

    pub fn augmented_row(&self, j: usize) -> DVector<f64> {
        self.design.row(j).transpose()
    }

    pub fn label(&self, j: usize) -> f64 {
        self.labels[j]
    }

    /// Keeps only the rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> TrainingSet {
        TrainingSet {
            design: self.design.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    fn linear(&self, theta: &DVector<f64>, j: usize) -> f64 {
        self.design
            .row(j)
            .iter()
            .zip(theta.iter())
            .map(|(a, b)| a * b)
            .sum()
    }
}

fn check_inputs(set: &TrainingSet, theta: &DVector<f64>, weights: &[f64]) -> Result<()> {
    if theta.len() != set.n_params() {
        return Err(Error::DimensionMismatch {
            expected: set.n_params(),
            got: theta.len(),
        });
    }
    if weights.len() != set.len() {
        return Err(Error::DimensionMismatch {
            expected: set.len(),
            got: weights.len(),
        });
    }
    Ok(())
}

fn penalized(theta: &DVector<f64>) -> DVector<f64> {
    let mut t = theta.clone();
    t[0] = 0.0;
    t
}

pub fn objective(
    theta: &DVector<f64>,
    set: &TrainingSet,
    weights: &[f64],
    lambda: f64,
) -> Result<f64> {
    check_inputs(set, theta, weights)?;
    let m = set.len() as f64;
    let mut data = 0.0;
    for j in 0..set.len() {
        let z = set.linear(theta, j);
        data += weights[j] * (softplus(z) - set.labels[j] * z);
    }
    let ridge: f64 = theta.iter().skip(1).map(|t| t * t).sum();
    Ok(data / m + 0.5 * lambda * ridge)
}

pub fn objective_gradient(
    theta: &DVector<f64>,
    set: &TrainingSet,
    weights: &[f64],
    lambda: f64,
) -> Result<DVector<f64>> {
    check_inputs(set, theta, weights)?;
    let m = set.len() as f64;
    let mut g = DVector::zeros(set.n_params());
    for j in 0..set.len() {
        let r = weights[j] * (sigmoid(set.linear(theta, j)) - set.labels[j]);
        for (gi, xi) in g.iter_mut().zip(set.design.row(j).iter()) {
            *gi += r * xi;
        }
    }
    Ok(g / m + penalized(theta) * lambda)
}

/// Hessian of the full objective at `theta`.
pub fn objective_hessian(
    theta: &DVector<f64>,
    set: &TrainingSet,
    weights: &[f64],
    lambda: f64,
) -> Result<DMatrix<f64>> {
    check_inputs(set, theta, weights)?;
    let d = set.n_params();
    let m = set.len() as f64;
    let mut h = DMatrix::zeros(d, d);
    for j in 0..set.len() {
        let s = sigmoid(set.linear(theta, j));
        let c = weights[j] * s * (1.0 - s);
        let row = set.design.row(j);
        for a in 0..d {
            let ca = c * row[a];
            for b in a..d {
                h[(a, b)] += ca * row[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            h[(a, b)] /= m;
            h[(b, a)] = h[(a, b)];
        }
    }
    for a in 1..d {
        h[(a, a)] += lambda;
    }
    Ok(h)
}

/// Per-example gradient of the unregularized loss: (σ(θᵀx̃) − d)·x̃.
pub fn loss_gradient(theta: &DVector<f64>, features: &[f64], label: u8) -> Result<DVector<f64>> {
    if features.len() + 1 != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len() - 1,
            got: features.len(),
        });
    }
    let x = augment(features);
    let r = sigmoid(theta.dot(&x)) - label as f64;
    Ok(x * r)
}

pub(crate) fn augment(features: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        features.len() + 1,
        std::iter::once(1.0).chain(features.iter().copied()),
    )
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn spd_factor(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = nalgebra::Cholesky::new(h.clone()).ok_or(Error::NotPositiveDefinite)?;
    let l = chol.unpack();
    let diag = l.diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
        (lo.min(*v), hi.max(*v))
    });
    if !(lo > 0.0) || (lo * lo) < PIVOT_RATIO * hi * hi {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(l)
}

/// Solves (L Lᵀ) x = b.
pub fn spd_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let y = l
        .solve_lower_triangular(b)
        .expect("factor has a positive diagonal");
    l.tr_solve_lower_triangular(&y)
        .expect("factor has a positive diagonal")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// Index 0 is the intercept.
    pub theta: Vec<f64>,
    pub lambda: f64,
    pub tau: f64,
}

impl LogisticModel {
    pub fn n_features(&self) -> usize {
        self.theta.len() - 1
    }

    pub fn theta_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.theta)
    }

    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        Ok(self.theta[0]
            + self.theta[1..]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum::<f64>())
    }

    /// σ(θᵀ[1; x]) for an already-transformed feature vector.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        self.logit(x).map(sigmoid)
    }

    pub fn decide(&self, proba: f64) -> u8 {
        u8::from(proba >= self.tau)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub tau: f64,
    /// Return the last iterate instead of an error when not converged.
    pub best_effort: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            lambda: 1e-4,
            tol: 1e-8,
            max_iter: 100,
            tau: 0.5,
            best_effort: false,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::validation(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::validation(format!(
                "tol must be > 0, got {}",
                self.tol
            )));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::validation(format!(
                "tau must lie in (0, 1), got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: LogisticModel,
    pub report: FitReport,
}

fn sup_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

pub fn fit_weighted(set: &TrainingSet, weights: &[f64], opts: &FitOptions) -> Result<FitOutcome> {
    opts.validate()?;
    if set.is_empty() {
        return Err(Error::validation("cannot fit on zero rows"));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
        return Err(Error::validation(format!(
            "weights must be positive and finite, got {w}"
        )));
    }
    let lambda = opts.lambda;
    let mut theta = DVector::zeros(set.n_params());
    let mut value = objective(&theta, set, weights, lambda)?;
    let mut iterations = 0;
    let mut grad = objective_gradient(&theta, set, weights, lambda)?;

    while sup_norm(&grad) >= opts.tol && iterations < opts.max_iter {
        let h = objective_hessian(&theta, set, weights, lambda)?;
        let l = spd_factor(&h)?;
        let step = spd_solve(&l, &grad);
        let slope = grad.dot(&step);
        let slack = 4.0 * f64::EPSILON * value.abs();

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate = &theta - &step * t;
            let v = objective(&candidate, set, weights, lambda)?;
            if v.is_finite() && v <= value - 1e-4 * t * slope + slack {
                accepted = Some((candidate, v));
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((candidate, v)) => {
                theta = candidate;
                value = v;
                grad = objective_gradient(&theta, set, weights, lambda)?;
            }
            None => break,
        }
    }

    let report = FitReport {
        iterations,
        final_grad_norm: sup_norm(&grad),
        converged: sup_norm(&grad) < opts.tol,
    };
    if !report.converged && !opts.best_effort {
        return Err(Error::NotConverged {
            iterations,
            grad_norm: report.final_grad_norm,
        });
    }
    Ok(FitOutcome {
        model: LogisticModel {
            theta: theta.iter().copied().collect(),
            lambda,
            tau: opts.tau,
        },
        report,
    })
}

/// Monotone recalibration of a logit: p = σ(a·logit + b), a > 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattScaling {
    pub a: f64,
    pub b: f64,
}

impl PlattScaling {
    pub const IDENTITY: PlattScaling = PlattScaling { a: 1.0, b: 0.0 };

    pub fn apply(&self, logit: f64) -> f64 {
        sigmoid(self.a * logit + self.b)
    }
}

/// Fits Platt scaling of `model`'s logits on a holdout set.
///
/// Targets are Platt's smoothed labels, so a separable holdout still has a
/// finite solution. Falls back to the identity map (with a warning) for a
/// single-class holdout or a non-positive fitted slope.
pub fn calibrate_platt(model: &LogisticModel, holdout: &TrainingSet) -> Result<PlattScaling> {
    let n_pos = holdout.labels.iter().filter(|&&l| l == 1.0).count();
    let n_neg = holdout.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        log::warn!("calibration holdout has a single class; using identity map");
        return Ok(PlattScaling::IDENTITY);
    }
    let theta = model.theta_vector();
    if theta.len() != holdout.n_params() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: holdout.n_params(),
        });
    }
    let hi = (n_pos as f64 + 1.0) / (n_pos as f64 + 2.0);
    let lo = 1.0 / (n_neg as f64 + 2.0);
    let data: Vec<(f64, f64)> = (0..holdout.len())
        .map(|j| {
            (
                holdout.linear(&theta, j),
                if holdout.labels[j] == 1.0 { hi } else { lo },
            )
        })
        .collect();

    let loss = |a: f64, b: f64| -> f64 {
        data.iter()
            .map(|&(s, t)| {
                let z = a * s + b;
                softplus(z) - t * z
            })
            .sum()
    };

    let (mut a, mut b) = (1.0, 0.0);
    let mut value = loss(a, b);
    for _ in 0..100 {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(s, t) in &data {
            let p = sigmoid(a * s + b);
            let r = p - t;
            let w = p * (1.0 - p);
            ga += r * s;
            gb += r;
            haa += w * s * s;
            hab += w * s;
            hbb += w;
        }
        if ga.abs().max(gb.abs()) < 1e-10 {
            break;
        }
        let det = haa * hbb - hab * hab;
        if !(det > 0.0) {
            log::warn!("calibration Hessian is singular; using identity map");
            return Ok(PlattScaling::IDENTITY);
        }
        let da = (hbb * ga - hab * gb) / det;
        let db = (haa * gb - hab * ga) / det;
        let mut t = 1.0;
        loop {
            let v = loss(a - t * da, b - t * db);
            if v <= value || t < 1e-10 {
                a -= t * da;
                b -= t * db;
                value = v;
                break;
            }
            t *= 0.5;
        }
    }
    if !(a > 0.0) || !a.is_finite() || !b.is_finite() {
        log::warn!("calibration slope {a} is not positive; using identity map");
        return Ok(PlattScaling::IDENTITY);
    }
    Ok(PlattScaling { a, b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_set(m: usize, p: usize, seed: u64) -> TrainingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let beta: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let x = DMatrix::from_fn(m, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y: Vec<u8> = (0..m)
            .map(|i| {
                let z: f64 = (0..p).map(|j| beta[j] * x[(i, j)]).sum();
                u8::from(rng.random::<f64>() < sigmoid(z))
            })
            .collect();
        TrainingSet::new(&x, &y).unwrap()
    }

    #[test]
    fn sigmoid_and_softplus_are_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
    }

    #[test]
    fn symmetric_labels_give_half() {
        let set = TrainingSet::from_rows(&[vec![0.0], vec![0.0]], &[0, 1]).unwrap();
        let opts = FitOptions {
            lambda: 0.0,
            ..Default::default()
        };
        let fit = fit_weighted(&set, &[1.0, 1.0], &opts).unwrap();
        assert_eq!(fit.model.theta[0], 0.0);
        assert_eq!(fit.model.predict_proba(&[0.0]).unwrap(), 0.5);
    }

    #[test]
    fn separable_data_with_ridge_converges() {
        let rows: Vec<Vec<f64>> = vec![vec![-2.0], vec![-1.0], vec![1.0], vec![2.0]];
        let set = TrainingSet::from_rows(&rows, &[0, 0, 1, 1]).unwrap();
        let opts = FitOptions {
            lambda: 0.1,
            ..Default::default()
        };
        let w = [1.0; 4];
        let fit = fit_weighted(&set, &w, &opts).unwrap();
        assert!(fit.model.theta.iter().all(|t| t.is_finite()));
        let g = objective_gradient(&fit.model.theta_vector(), &set, &w, 0.1).unwrap();
        assert!(sup_norm(&g) < 1e-8);
    }

    #[test]
    fn uniform_weight_scaling_without_ridge() {
        let set = random_set(80, 3, 1);
        let opts = FitOptions {
            lambda: 0.0,
            ..Default::default()
        };
        let a = fit_weighted(&set, &[1.0; 80], &opts).unwrap();
        let b = fit_weighted(&set, &[2.0; 80], &opts).unwrap();
        for (x, y) in a.model.theta.iter().zip(&b.model.theta) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn intercept_only_fits_base_rate() {
        let x = DMatrix::<f64>::zeros(10, 0);
        let labels = [1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
        let set = TrainingSet::new(&x, &labels).unwrap();
        let opts = FitOptions {
            lambda: 0.0,
            tol: 1e-12,
            ..Default::default()
        };
        let fit = fit_weighted(&set, &[1.0; 10], &opts).unwrap();
        assert!((fit.model.predict_proba(&[]).unwrap() - 0.3).abs() < 1e-10);
    }

    #[test]
    fn zero_theta_predicts_half() {
        let m = LogisticModel {
            theta: vec![0.0; 4],
            lambda: 0.0,
            tau: 0.5,
        };
        assert_eq!(m.predict_proba(&[3.0, -1.0, 7.0]).unwrap(), 0.5);
        assert_eq!(m.decide(0.5), 1);
        assert!(matches!(
            m.predict_proba(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn proba_monotone_in_active_coordinate() {
        let m = LogisticModel {
            theta: vec![0.3, 1.5, -0.7],
            lambda: 0.0,
            tau: 0.5,
        };
        let grid: Vec<f64> = (-20..=20)
            .map(|i| m.predict_proba(&[i as f64 * 0.25, 0.4]).unwrap())
            .collect();
        assert!(grid.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn loss_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let theta = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
            let d = u8::from(rng.random::<bool>());
            let loss = |t: &DVector<f64>| {
                let z = t.dot(&augment(&x));
                softplus(z) - d as f64 * z
            };
            let g = loss_gradient(&theta, &x, d).unwrap();
            for i in 0..4 {
                let h = 1e-5;
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[i] += h;
                tm[i] -= h;
                let fd = (loss(&tp) - loss(&tm)) / (2.0 * h);
                assert!(
                    (fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1e-3),
                    "{fd} vs {}",
                    g[i]
                );
            }
        }
    }

    #[test]
    fn loss_gradient_vanishes_at_exact_fit() {
        // σ saturates to exactly 1.0 in f64.
        let theta = DVector::from_vec(vec![800.0, 0.0]);
        let g = loss_gradient(&theta, &[2.0], 1).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn per_example_gradients_sum_to_zero_at_optimum() {
        let set = random_set(120, 3, 4);
        let opts = FitOptions {
            lambda: 0.0,
            ..Default::default()
        };
        let fit = fit_weighted(&set, &[1.0; 120], &opts).unwrap();
        let theta = fit.model.theta_vector();
        let mut total = DVector::zeros(4);
        for j in 0..set.len() {
            let row: Vec<f64> = set.augmented_row(j).iter().skip(1).copied().collect();
            total += loss_gradient(&theta, &row, set.label(j) as u8).unwrap();
        }
        assert!(sup_norm(&total) / 120.0 < 1e-8);
    }

    #[test]
    fn hessian_of_single_row_at_zero() {
        let set = TrainingSet::from_rows(&[vec![0.0, 0.0]], &[1]).unwrap();
        let h = objective_hessian(&DVector::zeros(3), &set, &[1.0], 0.0).unwrap();
        assert_eq!(h[(0, 0)], 0.25);
        assert_eq!(h.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn ridge_bounds_hessian_spectrum() {
        let set = random_set(60, 4, 5);
        let lambda = 0.3;
        let theta = DVector::from_vec(vec![0.2, -0.5, 1.0, 0.1, 0.7]);
        let h = objective_hessian(&theta, &set, &[1.0; 60], lambda).unwrap();
        let sub = h.view((1, 1), (4, 4)).clone_owned();
        let min_eig = sub.symmetric_eigenvalues().min();
        assert!(min_eig >= lambda - 1e-12);
    }

    #[test]
    fn singular_hessian_without_ridge_is_reported() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64]).collect();
        let labels: Vec<u8> = (0..10).map(|i| (i % 3 == 0) as u8).collect();
        let set = TrainingSet::from_rows(&rows, &labels).unwrap();
        let opts = FitOptions {
            lambda: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            fit_weighted(&set, &[1.0; 10], &opts),
            Err(Error::NotPositiveDefinite)
        ));
    }

    #[test]
    fn non_convergence_is_an_error_unless_best_effort() {
        let set = random_set(100, 3, 6);
        let opts = FitOptions {
            max_iter: 1,
            tol: 1e-14,
            ..Default::default()
        };
        assert!(matches!(
            fit_weighted(&set, &[1.0; 100], &opts),
            Err(Error::NotConverged { .. })
        ));
        let fit = fit_weighted(
            &set,
            &[1.0; 100],
            &FitOptions {
                best_effort: true,
                ..opts
            },
        )
        .unwrap();
        assert!(!fit.report.converged);
    }

    #[test]
    fn rejects_bad_weights() {
        let set = random_set(5, 1, 7);
        assert!(fit_weighted(&set, &[1.0, 1.0, 0.0, 1.0, 1.0], &FitOptions::default()).is_err());
    }

    #[test]
    fn platt_fixed_point_on_calibrated_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = LogisticModel {
            theta: vec![0.0, 1.0],
            lambda: 0.0,
            tau: 0.5,
        };
        let rows: Vec<Vec<f64>> = (0..20_000)
            .map(|_| vec![2.0 * rng.sample::<f64, _>(StandardNormal)])
            .collect();
        let labels: Vec<u8> = rows
            .iter()
            .map(|r| u8::from(rng.random::<f64>() < sigmoid(r[0])))
            .collect();
        let holdout = TrainingSet::from_rows(&rows, &labels).unwrap();
        let platt = calibrate_platt(&model, &holdout).unwrap();
        assert!((platt.a - 1.0).abs() < 0.05, "{platt:?}");
        assert!(platt.b.abs() < 0.05, "{platt:?}");
    }

    #[test]
    fn platt_improves_brier_on_overconfident_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let overconfident = LogisticModel {
            theta: vec![0.5, 3.0],
            lambda: 0.0,
            tau: 0.5,
        };
        let draw = |rng: &mut ChaCha8Rng, n: usize| {
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.sample::<f64, _>(StandardNormal)])
                .collect();
            let labels: Vec<u8> = rows
                .iter()
                .map(|r| u8::from(rng.random::<f64>() < sigmoid(r[0])))
                .collect();
            (rows, labels)
        };
        let (cal_rows, cal_labels) = draw(&mut rng, 4000);
        let (test_rows, test_labels) = draw(&mut rng, 4000);
        let platt = calibrate_platt(
            &overconfident,
            &TrainingSet::from_rows(&cal_rows, &cal_labels).unwrap(),
        )
        .unwrap();
        assert!(platt.a > 0.0);
        let brier = |f: &dyn Fn(&[f64]) -> f64| {
            test_rows
                .iter()
                .zip(&test_labels)
                .map(|(r, &l)| (f(r) - l as f64).powi(2))
                .sum::<f64>()
                / test_rows.len() as f64
        };
        let before = brier(&|r| overconfident.predict_proba(r).unwrap());
        let after = brier(&|r| platt.apply(overconfident.logit(r).unwrap()));
        assert!(after < before, "{after} >= {before}");
    }

    #[test]
    fn platt_single_class_is_identity() {
        let model = LogisticModel {
            theta: vec![0.0, 1.0],
            lambda: 0.0,
            tau: 0.5,
        };
        let holdout = TrainingSet::from_rows(&[vec![1.0], vec![2.0]], &[1, 1]).unwrap();
        assert_eq!(
            calibrate_platt(&model, &holdout).unwrap(),
            PlattScaling::IDENTITY
        );
    }
}
