//! Standard-normal helpers and an independent-observation probit GLM used to
//! initialize the mixed-model fit.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};
use std::sync::LazyLock;

use crate::error::{Error, Result};

static STD_NORMAL: LazyLock<Normal> = LazyLock::new(|| Normal::new(0.0, 1.0).unwrap());

pub fn norm_cdf(x: f64) -> f64 {
    STD_NORMAL.cdf(x)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile. The library inverse is only accurate to about
/// 1e-9, so polish it with Newton steps on the CDF.
pub fn norm_quantile(p: f64) -> f64 {
    let mut x = STD_NORMAL.inverse_cdf(p);
    if !x.is_finite() {
        return x;
    }
    for _ in 0..2 {
        let d = norm_pdf(x);
        if d <= f64::MIN_POSITIVE {
            break;
        }
        x -= (norm_cdf(x) - p) / d;
    }
    x
}

/// Result of an independent-observation probit regression.
#[derive(Debug, Clone)]
pub struct ProbitGlm {
    pub beta: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub converged: bool,
    pub n_iter: usize,
}

/// Fits a probit GLM by Fisher scoring. `y` entries must be 0 or 1.
pub fn probit_glm(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<ProbitGlm> {
    let n = x.nrows();
    let p = x.ncols();
    if y.len() != n {
        return Err(Error::Invalid("response length does not match design".into()));
    }
    let mut beta = DVector::zeros(p);
    let max_iter = 50;
    let tol = 1e-10;
    let mut converged = false;
    let mut n_iter = 0;
    let mut info = DMatrix::zeros(p, p);
    for iter in 0..max_iter {
        let eta = x * &beta;
        let mut score = DVector::zeros(p);
        info.fill(0.0);
        for i in 0..n {
            let e = eta[i].clamp(-8.0, 8.0);
            let mu = norm_cdf(e).clamp(1e-10, 1.0 - 1e-10);
            let phi = norm_pdf(e);
            let v = mu * (1.0 - mu);
            let w = phi * phi / v;
            let s = (y[i] - mu) * phi / v;
            for a in 0..p {
                score[a] += x[(i, a)] * s;
                for b in 0..p {
                    info[(a, b)] += x[(i, a)] * w * x[(i, b)];
                }
            }
        }
        // small ridge keeps near-separated toys solvable
        for a in 0..p {
            info[(a, a)] += 1e-10;
        }
        let chol = nalgebra::Cholesky::new(info.clone())
            .ok_or_else(|| Error::Numerical("singular information matrix in probit GLM".into()))?;
        let step = chol.solve(&score);
        beta += &step;
        n_iter = iter + 1;
        if step.amax() < tol {
            converged = true;
            break;
        }
    }
    let chol = nalgebra::Cholesky::new(info)
        .ok_or_else(|| Error::Numerical("singular information matrix in probit GLM".into()))?;
    let cov = chol.inverse();
    Ok(ProbitGlm {
        beta,
        cov,
        converged,
        n_iter,
    })
}
