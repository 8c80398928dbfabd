//! Nuisance model fitting: logistic regression by iteratively reweighted
//! least squares and linear regression by ridge-stabilized normal equations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const RIDGE: f64 = 1e-8;
const SEPARATION_BOUND: f64 = 15.0;
const SEPARATION_RIDGE: f64 = 0.1;

/// Result of a nuisance fit: coefficients plus convergence diagnostics.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    /// Set when perfect separation forced a ridge-stabilized refit.
    pub ridged: bool,
}

fn design(features: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = features.len();
    if n == 0 {
        return Err(Error::Estimation("no rows to fit".into()));
    }
    let d = features[0].len();
    if features.iter().any(|r| r.len() != d) {
        return Err(Error::Estimation("ragged feature rows".into()));
    }
    Ok(DMatrix::from_fn(n, d, |i, j| features[i][j]))
}

/// Solve (A + lambda I) x = b for symmetric positive semi-definite A.
fn solve_ridged(a: &DMatrix<f64>, b: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let d = a.nrows();
    let mut m = a.clone();
    for i in 0..d {
        m[(i, i)] += lambda;
    }
    m.cholesky()
        .map(|ch| ch.solve(b))
        .ok_or_else(|| Error::Estimation("normal equations not positive definite".into()))
}

/// Least squares via normal equations with a small ridge.
///
/// Rank deficiency is absorbed by the ridge; exact collinearity is flagged by
/// `ridged` when the unridged system fails outright.
pub fn fit_regression(features: &[Vec<f64>], targets: &[f64]) -> Result<FitResult> {
    let x = design(features)?;
    if targets.len() != x.nrows() {
        return Err(Error::Estimation("targets/features length mismatch".into()));
    }
    if x.nrows() <= x.ncols() {
        return Err(Error::Estimation(format!(
            "need more rows ({}) than features ({})",
            x.nrows(),
            x.ncols()
        )));
    }
    let y = DVector::from_column_slice(targets);
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * y;
    let plain = xtx.clone().cholesky().map(|ch| ch.solve(&xty));
    let (beta, ridged) = match plain {
        Some(b) if b.iter().all(|v| v.is_finite()) => {
            // Still apply the standard tiny ridge for numerical symmetry.
            (solve_ridged(&xtx, &xty, RIDGE)?, false)
        }
        _ => (solve_ridged(&xtx, &xty, RIDGE)?, true),
    };
    Ok(FitResult {
        coefficients: beta.iter().copied().collect(),
        converged: true,
        ridged,
    })
}

/// Logistic regression by IRLS. Labels must be 0/1.
///
/// Perfect separation (diverging coefficients or non-finite steps) triggers a
/// ridge-stabilized refit, flagged in the result.
pub fn fit_logistic(
    features: &[Vec<f64>],
    labels: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<FitResult> {
    if labels.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(Error::Estimation("logistic labels must be 0/1".into()));
    }
    let x = design(features)?;
    if labels.len() != x.nrows() {
        return Err(Error::Estimation("labels/features length mismatch".into()));
    }
    if x.nrows() <= x.ncols() {
        return Err(Error::Estimation(format!(
            "need more rows ({}) than features ({})",
            x.nrows(),
            x.ncols()
        )));
    }
    match irls(&x, labels, max_iter, tol, RIDGE) {
        Ok((beta, converged))
            if beta.iter().all(|b| b.abs() <= SEPARATION_BOUND)
                && !saturated(&x, &beta) =>
        {
            Ok(FitResult {
                coefficients: beta,
                converged,
                ridged: false,
            })
        }
        // Separation or numerical blow-up: refit with a real ridge.
        _ => {
            let (beta, converged) = irls(&x, labels, max_iter, tol, SEPARATION_RIDGE)?;
            Ok(FitResult {
                coefficients: beta,
                converged,
                ridged: true,
            })
        }
    }
}

/// Every fitted probability pinned to 0 or 1: the telltale of separation.
fn saturated(x: &DMatrix<f64>, beta: &[f64]) -> bool {
    let b = DVector::from_column_slice(beta);
    (x * b).iter().all(|eta| {
        let p = 1.0 / (1.0 + (-eta).exp());
        !(1e-4..=1.0 - 1e-4).contains(&p)
    })
}

fn irls(
    x: &DMatrix<f64>,
    labels: &[f64],
    max_iter: usize,
    tol: f64,
    ridge: f64,
) -> Result<(Vec<f64>, bool)> {
    let (n, d) = (x.nrows(), x.ncols());
    let y = DVector::from_column_slice(labels);
    let mut beta = DVector::zeros(d);
    for _ in 0..max_iter {
        let eta = x * &beta;
        let p: DVector<f64> = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
        let w: Vec<f64> = p.iter().map(|pi| (pi * (1.0 - pi)).max(1e-10)).collect();
        // X^T W X and X^T (y - p)
        let mut xtwx = DMatrix::zeros(d, d);
        for i in 0..n {
            let row = x.row(i);
            for a in 0..d {
                for b in a..d {
                    xtwx[(a, b)] += w[i] * row[a] * row[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                xtwx[(a, b)] = xtwx[(b, a)];
            }
        }
        let grad = x.transpose() * (&y - &p) - ridge * &beta;
        let step = solve_ridged(&xtwx, &grad, ridge)?;
        if step.iter().any(|v| !v.is_finite()) {
            return Err(Error::Estimation("IRLS diverged".into()));
        }
        beta += &step;
        if step.amax() < tol {
            return Ok((beta.iter().copied().collect(), true));
        }
    }
    Ok((beta.iter().copied().collect(), false))
}

pub fn predict_linear(coefficients: &[f64], features: &[f64]) -> f64 {
    coefficients
        .iter()
        .zip(features)
        .map(|(c, f)| c * f)
        .sum()
}

pub fn predict_logistic(coefficients: &[f64], features: &[f64]) -> f64 {
    let eta = predict_linear(coefficients, features);
    1.0 / (1.0 + (-eta).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn regression_recovers_slope() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut feats = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..10_000 {
            let x: f64 = rng.gen::<f64>() * 2.0 - 1.0;
            let noise: f64 = (rng.gen::<f64>() - 0.5) * 0.35; // sd ~ 0.1
            feats.push(vec![1.0, x]);
            ys.push(3.0 * x + noise);
        }
        let fit = fit_regression(&feats, &ys).unwrap();
        assert!((fit.coefficients[1] - 3.0).abs() < 0.02, "{:?}", fit.coefficients);
        assert!(!fit.ridged);
    }

    #[test]
    fn regression_constant_target() {
        let feats: Vec<Vec<f64>> = (0..50).map(|i| vec![1.0, i as f64]).collect();
        let ys = vec![4.5; 50];
        let fit = fit_regression(&feats, &ys).unwrap();
        assert!((fit.coefficients[0] - 4.5).abs() < 1e-6);
        assert!(fit.coefficients[1].abs() < 1e-6);
    }

    #[test]
    fn regression_duplicated_column_same_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<f64> = (0..200).map(|_| rng.gen::<f64>()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let plain: Vec<Vec<f64>> = xs.iter().map(|x| vec![1.0, *x]).collect();
        let dup: Vec<Vec<f64>> = xs.iter().map(|x| vec![1.0, *x, *x]).collect();
        let f1 = fit_regression(&plain, &ys).unwrap();
        let f2 = fit_regression(&dup, &ys).unwrap();
        for (a, b) in plain.iter().zip(&dup) {
            let p1 = predict_linear(&f1.coefficients, a);
            let p2 = predict_linear(&f2.coefficients, b);
            assert!((p1 - p2).abs() < 1e-6);
        }
    }

    #[test]
    fn logistic_recovers_slope() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut feats = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..100_000 {
            let z: f64 = rng.gen::<f64>() * 2.0 - 1.0;
            let p = 1.0 / (1.0 + (-2.0 * z).exp());
            feats.push(vec![1.0, z]);
            ys.push(if rng.gen::<f64>() < p { 1.0 } else { 0.0 });
        }
        let fit = fit_logistic(&feats, &ys, 50, 1e-8).unwrap();
        assert!(fit.converged);
        assert!((fit.coefficients[1] - 2.0).abs() < 0.1, "{:?}", fit.coefficients);
    }

    #[test]
    fn logistic_deterministic() {
        let feats: Vec<Vec<f64>> = (0..100)
            .map(|i| vec![1.0, (i as f64 / 50.0) - 1.0])
            .collect();
        let ys: Vec<f64> = (0..100).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect();
        let a = fit_logistic(&feats, &ys, 50, 1e-8).unwrap();
        let b = fit_logistic(&feats, &ys, 50, 1e-8).unwrap();
        assert_eq!(a.coefficients, b.coefficients);
    }

    #[test]
    fn logistic_separation_falls_back_to_ridge() {
        // Perfectly separable: y = 1(x > 0).
        let feats: Vec<Vec<f64>> = (0..100)
            .map(|i| vec![1.0, if i < 50 { -1.0 - i as f64 * 0.01 } else { 1.0 + i as f64 * 0.01 }])
            .collect();
        let ys: Vec<f64> = (0..100).map(|i| if i < 50 { 0.0 } else { 1.0 }).collect();
        let fit = fit_logistic(&feats, &ys, 100, 1e-10).unwrap();
        assert!(fit.ridged);
        assert!(fit.coefficients.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn logistic_all_zero_labels() {
        let feats: Vec<Vec<f64>> = (0..60).map(|i| vec![1.0, i as f64 / 60.0]).collect();
        let ys = vec![0.0; 60];
        let fit = fit_logistic(&feats, &ys, 100, 1e-10).unwrap();
        // Intercept heads to -inf; the ridge fallback caps it.
        assert!(fit.ridged);
        let p = predict_logistic(&fit.coefficients, &[1.0, 0.5]);
        assert!(p < 0.05, "p = {p}");
    }
}
