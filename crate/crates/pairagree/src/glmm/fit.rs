//! Iterative pseudo-likelihood fit of the probit mixed model.
//!
//! Outer loop: linearize the probit model about the current linear predictor
//! eta = X beta + Z u (subject-specific expansion), forming working responses
//! P = eta + (y - Phi(eta)) / phi(eta) with working weights
//! w = phi(eta)^2 / (Phi(eta)(1 - Phi(eta))).
//! Inner loop: REML-fit the working linear mixed model over the variance
//! components, then solve the mixed-model equations for beta and the EBLUPs.
//! Iterate to a fixed point.

use nalgebra::{DMatrix, DVector};

use super::design::{build_design, DesignBundle, ModelSpec, TimeTrend};
use super::optim::minimize;
use super::probit::{norm_cdf, norm_pdf, norm_quantile, probit_glm};
use super::reml::{
    reml_objective, solve_mme, VarianceComponents, VcLayout, WorkingData,
};
use crate::data::LongDataset;
use crate::error::{Error, Result};

/// Tolerances and iteration caps for [`fit`].
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Maximum outer linearization passes.
    pub max_outer: usize,
    /// Objective-evaluation budget per inner REML optimization.
    pub max_inner_evals: usize,
    /// Outer convergence: max scaled change of (beta, vc) below this.
    pub outer_tol: f64,
    /// Confidence level for intervals.
    pub level: f64,
    /// Compute variance-component standard errors from the numerically
    /// differentiated REML Hessian.
    pub compute_vc_se: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_outer: 100,
            max_inner_evals: 200,
            outer_tol: 1e-6,
            level: 0.95,
            compute_vc_se: true,
        }
    }
}

/// Estimated fixed effects on the latent scale, with their covariance.
#[derive(Debug, Clone)]
pub struct FixedEffects {
    pub beta_1: f64,
    pub beta_2: f64,
    /// Linear time slope; absent when the model has no time trend.
    pub theta: Option<f64>,
    pub cov: DMatrix<f64>,
}

impl FixedEffects {
    pub fn se_beta_1(&self) -> f64 {
        self.cov[(0, 0)].max(0.0).sqrt()
    }

    pub fn se_beta_2(&self) -> f64 {
        self.cov[(1, 1)].max(0.0).sqrt()
    }

    pub fn se_theta(&self) -> Option<f64> {
        self.theta.map(|_| self.cov[(2, 2)].max(0.0).sqrt())
    }
}

/// Full fit output: fixed effects, variance components, EBLUPs and
/// convergence diagnostics.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub fixed: FixedEffects,
    pub vc: VarianceComponents,
    /// Subject EBLUPs, length I.
    pub eblup_gamma: Vec<f64>,
    /// Rater-within-method EBLUPs, J rows of [method 1, method 2];
    /// empty when rater effects are omitted.
    pub eblup_alpha: Vec<[f64; 2]>,
    pub converged: bool,
    pub n_outer_iterations: usize,
    pub final_change: f64,
    pub warnings: Vec<String>,
}

/// Wald test of equal method effects, H0: beta_1 = beta_2.
#[derive(Debug, Clone)]
pub struct WaldTest {
    pub estimate: f64,
    pub std_error: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
}

const ETA_CAP: f64 = 5.0;
const MU_EPS: f64 = 1e-8;
const SEPARATION_RIDGE: f64 = 1e-6;

fn linear_predictor(design: &DesignBundle, beta: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    let mut eta = &design.x * beta;
    for i in 0..design.n_records() {
        eta[i] += u[design.subject_col[i]];
        if let Some(rc) = &design.rater_col {
            eta[i] += u[rc[i]];
        }
    }
    eta
}

fn working_quantities(design: &DesignBundle, eta: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = design.n_records();
    let mut response = DVector::zeros(n);
    let mut weights = DVector::zeros(n);
    for i in 0..n {
        let e = eta[i].clamp(-ETA_CAP, ETA_CAP);
        let mu = norm_cdf(e).clamp(MU_EPS, 1.0 - MU_EPS);
        let phi = norm_pdf(e).max(1e-10);
        response[i] = e + (design.y[i] - mu) / phi;
        weights[i] = (phi * phi / (mu * (1.0 - mu))).clamp(1e-8, 1e8);
    }
    (response, weights)
}

/// Fits the probit GLMM by restricted pseudo-likelihood.
pub fn fit(ds: &LongDataset, spec: ModelSpec, opts: &FitOptions) -> Result<FitResult> {
    if ds.n_subjects() < 2 {
        return Err(Error::SpecMismatch(
            "model fitting requires at least 2 subjects".into(),
        ));
    }
    let design = build_design(ds, spec)?;
    let layout = VcLayout::of(&design);
    let mut warnings = Vec::new();

    // separation guard: constant response overall or within a method
    let report = crate::data::validate(ds);
    let ridge = if report.complete_separation {
        warnings.push(
            "complete separation: constant response; fixed effects ridged".to_string(),
        );
        SEPARATION_RIDGE
    } else {
        0.0
    };

    // initialization: independent-observation probit GLM, zero EBLUPs
    let glm = probit_glm(&design.x, &design.y)?;
    let mut beta = glm.beta;
    let mut u = DVector::zeros(design.n_random());
    let mut params = layout.pack(&VarianceComponents::new(0.1, 0.1, 0.1, 0.0));
    let mut vc = layout.unpack(&params);
    let mut cov_beta = DMatrix::zeros(design.n_fixed(), design.n_fixed());

    let mut converged = false;
    let mut n_outer = 0;
    let mut final_change = f64::INFINITY;
    let mut last_working: Option<(DVector<f64>, DVector<f64>)> = None;
    // step-length control: halved while the outer changes grow (near-separated
    // data can otherwise escalate eta and the variances together), restored
    // once the iteration settles
    let mut damping = 1.0f64;
    let mut prev_change = f64::INFINITY;

    for iter in 0..opts.max_outer {
        n_outer = iter + 1;
        let eta = linear_predictor(&design, &beta, &u);
        let (response, weights) = working_quantities(&design, &eta);
        let mut working = WorkingData::new(&design, response, weights);
        working.ridge = ridge;

        // the first pass explores with a simplex; later passes start at the
        // previous optimum and only need the gradient polish, with a budget
        // that shrinks once the warm starts are good
        let (step, budget) = match iter {
            0 => (0.5, opts.max_inner_evals),
            1..=2 => (0.0, opts.max_inner_evals),
            _ => (0.0, opts.max_inner_evals.min(60)),
        };
        let res = minimize(|x| reml_objective(x, &working), &params, step, budget, 1e-9);
        if !res.fx.is_finite() {
            return Err(Error::Numerical(
                "inner REML optimization failed to find a finite objective".into(),
            ));
        }
        let raw_params = res.x;
        let raw_vc = layout.unpack(&raw_params);
        let sol = solve_mme(&working, &raw_vc)?;

        let mut raw_change = 0.0f64;
        for k in 0..beta.len() {
            raw_change = raw_change.max((sol.beta[k] - beta[k]).abs() / (1.0 + beta[k].abs()));
        }
        for (new, old) in [
            (raw_vc.sigma2_gamma, vc.sigma2_gamma),
            (raw_vc.sigma2_alpha1, vc.sigma2_alpha1),
            (raw_vc.sigma2_alpha2, vc.sigma2_alpha2),
            (raw_vc.rho, vc.rho),
        ] {
            raw_change = raw_change.max((new - old).abs() / (1.0 + old.abs()));
        }

        if iter > 0 && raw_change > prev_change * 1.2 && raw_change > 1e-3 {
            damping = (damping * 0.5).max(0.1);
        } else {
            damping = (damping * 1.6).min(1.0);
        }
        prev_change = raw_change;

        for k in 0..beta.len() {
            beta[k] += damping * (sol.beta[k] - beta[k]);
        }
        for k in 0..u.len() {
            u[k] += damping * (sol.u[k] - u[k]);
        }
        for k in 0..params.len() {
            params[k] += damping * (raw_params[k] - params[k]);
        }
        vc = layout.unpack(&params);
        cov_beta = sol.cov_beta;
        let change = damping * raw_change;
        final_change = change;
        last_working = Some((working.response, working.weights));

        if iter > 0 && change < opts.outer_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push(format!(
            "outer loop did not converge in {} iterations (last change {:.3e})",
            n_outer, final_change
        ));
    }

    // variance-component standard errors from the REML curvature at the
    // final linearization
    if opts.compute_vc_se {
        if let Some((response, weights)) = last_working {
            let mut working = WorkingData::new(&design, response, weights);
            working.ridge = ridge;
            match vc_standard_errors(&params, &layout, &working) {
                Some(se) => {
                    vc.se_sigma2_gamma = se.first().copied();
                    if layout.has_rater {
                        vc.se_sigma2_alpha1 = se.get(1).copied();
                        vc.se_sigma2_alpha2 = se.get(2).copied();
                    }
                    if layout.has_rho {
                        vc.se_rho = se.last().copied();
                    }
                }
                None => warnings.push(
                    "REML Hessian not positive definite; variance-component standard errors unavailable"
                        .to_string(),
                ),
            }
        }
    }

    let i_subjects = design.n_subjects;
    let j_raters = design.n_raters;
    let eblup_gamma: Vec<f64> = (0..i_subjects).map(|k| u[k]).collect();
    let eblup_alpha: Vec<[f64; 2]> = if design.rater_col.is_some() {
        (0..j_raters)
            .map(|j| [u[i_subjects + j], u[i_subjects + j_raters + j]])
            .collect()
    } else {
        Vec::new()
    };

    let fixed = FixedEffects {
        beta_1: beta[0],
        beta_2: beta[1],
        theta: match spec.time_trend {
            TimeTrend::Linear => Some(beta[2]),
            TimeTrend::None => None,
        },
        cov: cov_beta,
    };

    Ok(FitResult {
        spec,
        fixed,
        vc,
        eblup_gamma,
        eblup_alpha,
        converged,
        n_outer_iterations: n_outer,
        final_change,
        warnings,
    })
}

/// Delta-method standard errors on the natural scale, from a central
/// finite-difference Hessian of the REML objective (-2 restricted logL) on
/// the unconstrained scale. Step 1e-4.
fn vc_standard_errors(
    params: &[f64],
    layout: &VcLayout,
    working: &WorkingData,
) -> Option<Vec<f64>> {
    let n = params.len();
    let h = 1e-4;
    let f = |x: &[f64]| reml_objective(x, working);
    let mut hess = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let mut x = params.to_vec();
            let val = if a == b {
                let f0 = f(&x);
                x[a] = params[a] + h;
                let fp = f(&x);
                x[a] = params[a] - h;
                let fm = f(&x);
                (fp - 2.0 * f0 + fm) / (h * h)
            } else {
                x[a] = params[a] + h;
                x[b] = params[b] + h;
                let fpp = f(&x);
                x[b] = params[b] - h;
                let fpm = f(&x);
                x[a] = params[a] - h;
                x[b] = params[b] + h;
                let fmp = f(&x);
                x[b] = params[b] - h;
                let fmm = f(&x);
                (fpp - fpm - fmp + fmm) / (4.0 * h * h)
            };
            hess[(a, b)] = val;
            hess[(b, a)] = val;
        }
    }
    if hess.iter().any(|v| !v.is_finite()) {
        return None;
    }
    // objective is -2 logL, so the observed information is H/2
    let cov = nalgebra::Cholesky::new(hess)?.inverse() * 2.0;
    let vc = layout.unpack(params);
    let mut se = Vec::with_capacity(n);
    let mut k = 0;
    // d sigma^2 / d log sigma^2 = sigma^2
    se.push(vc.sigma2_gamma * cov[(k, k)].max(0.0).sqrt());
    k += 1;
    if layout.has_rater {
        se.push(vc.sigma2_alpha1 * cov[(k, k)].max(0.0).sqrt());
        k += 1;
        se.push(vc.sigma2_alpha2 * cov[(k, k)].max(0.0).sqrt());
        k += 1;
    }
    if layout.has_rho {
        // d rho / d atanh(rho) = 1 - rho^2
        se.push((1.0 - vc.rho * vc.rho) * cov[(k, k)].max(0.0).sqrt());
    }
    Some(se)
}

/// Wald test of beta_1 = beta_2 with a standard-normal reference.
pub fn wald_test(fit: &FitResult, level: f64) -> Result<WaldTest> {
    if !(0.0 < level && level < 1.0) {
        return Err(Error::Invalid(format!("confidence level {level} out of (0, 1)")));
    }
    let estimate = fit.fixed.beta_1 - fit.fixed.beta_2;
    let var = fit.fixed.cov[(0, 0)] + fit.fixed.cov[(1, 1)] - 2.0 * fit.fixed.cov[(0, 1)];
    let std_error = var.max(0.0).sqrt();
    if std_error == 0.0 {
        return Err(Error::Numerical("degenerate fit: zero standard error".into()));
    }
    let statistic = estimate / std_error;
    let p_value = 2.0 * (1.0 - norm_cdf(statistic.abs()));
    let z = norm_quantile(1.0 - (1.0 - level) / 2.0);
    Ok(WaldTest {
        estimate,
        std_error,
        statistic,
        p_value,
        ci_low: estimate - z * std_error,
        ci_high: estimate + z * std_error,
        level,
    })
}
