//! Cross-checks of the REML machinery against independent closed-form or
//! hand-rolled implementations.

use nalgebra::{DMatrix, DVector};
use pairagree::glmm::{
    build_design, fit, norm_cdf, norm_pdf, reml_objective, DesignBundle, FitOptions, ModelSpec,
    RBlock, RaterEffect, ResidualCorrelation, TimeTrend, WorkingData,
};
use pairagree::sim::{generate, replicate_rng, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Balanced one-way random effects layout: `n_groups` groups with `reps`
/// unit-weight records each, intercept-only fixed part, independent residuals.
fn one_way_design(n_groups: usize, reps: usize) -> DesignBundle {
    let n = n_groups * reps;
    DesignBundle {
        x: DMatrix::from_element(n, 1, 1.0),
        y: DVector::zeros(n),
        subject_col: (0..n).map(|i| i / reps).collect(),
        rater_col: None,
        blocks: (0..n)
            .map(|i| RBlock {
                rows: vec![i],
                times: vec![0.0],
            })
            .collect(),
        n_subjects: n_groups,
        n_raters: 0,
        spec: ModelSpec {
            time_trend: TimeTrend::None,
            residual_correlation: ResidualCorrelation::Independent,
            rater_effect: RaterEffect::Omitted,
        },
    }
}

/// The balanced one-way REML criterion has a closed form. With V_i =
/// I_k + s J_k per group: log|V| = n log(1 + k s), X'V^-1 X = nk/(1 + ks),
/// and the GLS intercept is the grand mean, so
/// -2 l_R = n log(1+ks) + log(nk/(1+ks)) + sum_i [r_i'r_i - s (r_i.)^2/(1+ks)].
#[test]
fn one_way_reml_matches_closed_form() {
    let n_groups = 8;
    let reps = 4;
    let design = one_way_design(n_groups, reps);
    let n = n_groups * reps;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let y = DVector::from_fn(n, |i, _| {
        let g = (i / reps) as f64;
        0.3 * g - 1.0 + rng.gen_range(-1.5..1.5)
    });
    let working = WorkingData::new(&design, y.clone(), DVector::from_element(n, 1.0));

    for &s in &[0.05, 0.3, 1.0, 4.2] {
        let k = reps as f64;
        let denom = 1.0 + k * s;
        let grand = y.iter().sum::<f64>() / n as f64;
        let mut quad = 0.0;
        for g in 0..n_groups {
            let mut ss = 0.0;
            let mut rowsum = 0.0;
            for j in 0..reps {
                let r = y[g * reps + j] - grand;
                ss += r * r;
                rowsum += r;
            }
            quad += ss - s * rowsum * rowsum / denom;
        }
        let closed = n_groups as f64 * denom.ln() + ((n as f64) / denom).ln() + quad;
        let obj = reml_objective(&[s.ln()], &working);
        assert!(
            (obj - closed).abs() < 1e-8,
            "s = {s}: objective {obj} vs closed form {closed}"
        );
    }
}

/// The optimizer's value can never beat the objective it reports: re-evaluate
/// the REML criterion at the returned point and at the generating variance
/// components on simulated working data.
#[test]
fn inner_optimum_beats_true_parameters() {
    let cfg = SimConfig::model1(60, 12, 4);
    let ds = generate(&cfg, &mut replicate_rng(17, 0)).unwrap();
    let design = build_design(&ds, ModelSpec::default()).unwrap();
    let n = design.n_records();
    // a fixed linearization: response from the outcomes, constant weights
    let response = DVector::from_fn(n, |i, _| if design.y[i] > 0.5 { 1.2 } else { -1.2 });
    let working = WorkingData::new(&design, response, DVector::from_element(n, 0.64));

    let truth = [
        cfg.sigma2_gamma.ln(),
        cfg.sigma2_alpha1.ln(),
        cfg.sigma2_alpha2.ln(),
        cfg.rho.atanh(),
    ];
    let at_truth = reml_objective(&truth, &working);
    let res = pairagree::glmm::minimize(|x| reml_objective(x, &working), &truth, 0.4, 200, 1e-9);
    assert!(res.fx.is_finite());
    assert!(res.fx <= at_truth + 1e-9, "{} > {}", res.fx, at_truth);
    let re_eval = reml_objective(&res.x, &working);
    assert!((re_eval - res.fx).abs() < 1e-9);
}

/// Test-local probit fit by Newton iteration on the log-likelihood, written
/// independently of the library's Fisher-scoring GLM.
fn newton_probit(x: &DMatrix<f64>, y: &[f64]) -> DVector<f64> {
    let (n, p) = (x.nrows(), x.ncols());
    let mut beta = DVector::<f64>::zeros(p);
    for _ in 0..100 {
        let mut grad = DVector::<f64>::zeros(p);
        let mut hess = DMatrix::<f64>::zeros(p, p);
        for i in 0..n {
            let eta: f64 = (0..p).map(|c| x[(i, c)] * beta[c]).sum();
            let eta = eta.clamp(-7.5, 7.5);
            let cdf = norm_cdf(eta).clamp(1e-12, 1.0 - 1e-12);
            let pdf = norm_pdf(eta);
            // d logL / d eta for a Bernoulli probit observation
            let score = if y[i] > 0.5 { pdf / cdf } else { -pdf / (1.0 - cdf) };
            let curv = score * (score + eta);
            for a in 0..p {
                grad[a] += x[(i, a)] * score;
                for b in 0..p {
                    hess[(a, b)] += x[(i, a)] * curv * x[(i, b)];
                }
            }
        }
        for a in 0..p {
            hess[(a, a)] += 1e-9;
        }
        let step = hess.lu().solve(&grad).unwrap();
        beta += &step;
        if step.amax() < 1e-12 {
            break;
        }
    }
    beta
}

/// When the generating random effects are all zero the mixed model collapses
/// to an ordinary probit regression: the fitted fixed effects must agree with
/// an independent Newton probit fit on the same design.
#[test]
fn zero_variance_fit_collapses_to_probit_regression() {
    let mut cfg = SimConfig::model1(120, 6, 4);
    cfg.sigma2_gamma = 0.0;
    cfg.sigma2_alpha1 = 0.0;
    cfg.sigma2_alpha2 = 0.0;
    cfg.rho = 0.0;
    cfg.beta_1 = 0.9;
    cfg.beta_2 = 0.6;
    cfg.time_slope = -0.3;
    let ds = generate(&cfg, &mut replicate_rng(29, 0)).unwrap();

    let spec = ModelSpec {
        time_trend: TimeTrend::Linear,
        residual_correlation: ResidualCorrelation::Independent,
        rater_effect: RaterEffect::Omitted,
    };
    let opts = FitOptions {
        compute_vc_se: false,
        ..FitOptions::default()
    };
    let res = fit(&ds, spec, &opts).unwrap();
    assert!(res.converged);
    // the subject variance should collapse toward its floor
    assert!(
        res.vc.sigma2_gamma < 0.05,
        "sigma2_gamma = {}",
        res.vc.sigma2_gamma
    );

    let design = build_design(&ds, spec).unwrap();
    let yvals: Vec<f64> = design.y.iter().copied().collect();
    let oracle = newton_probit(&design.x, &yvals);
    assert!(
        (res.fixed.beta_1 - oracle[0]).abs() < 1e-3,
        "beta_1 {} vs {}",
        res.fixed.beta_1,
        oracle[0]
    );
    assert!(
        (res.fixed.beta_2 - oracle[1]).abs() < 1e-3,
        "beta_2 {} vs {}",
        res.fixed.beta_2,
        oracle[1]
    );
    assert!(
        (res.fixed.theta.unwrap() - oracle[2]).abs() < 1e-3,
        "theta {} vs {}",
        res.fixed.theta.unwrap(),
        oracle[2]
    );
}

/// Refitting the identical dataset reproduces every estimate bit for bit.
#[test]
fn fit_is_deterministic() {
    let cfg = SimConfig::model1(40, 8, 3);
    let ds = generate(&cfg, &mut replicate_rng(5, 3)).unwrap();
    let opts = FitOptions::default();
    let a = fit(&ds, ModelSpec::default(), &opts).unwrap();
    let b = fit(&ds, ModelSpec::default(), &opts).unwrap();
    assert_eq!(a.fixed.beta_1.to_bits(), b.fixed.beta_1.to_bits());
    assert_eq!(a.fixed.beta_2.to_bits(), b.fixed.beta_2.to_bits());
    assert_eq!(a.vc.sigma2_gamma.to_bits(), b.vc.sigma2_gamma.to_bits());
    assert_eq!(a.vc.rho.to_bits(), b.vc.rho.to_bits());
    assert_eq!(a.eblup_gamma, b.eblup_gamma);
}

/// The working-model linearization must leave a fit of a pure-noise dataset
/// with both method effects near zero and a Wald p-value that is not
/// degenerate.
#[test]
fn null_dataset_gives_moderate_test() {
    let mut cfg = SimConfig::model1(60, 10, 4);
    cfg.beta_1 = 0.0;
    cfg.beta_2 = 0.0;
    cfg.time_slope = 0.0;
    let ds = generate(&cfg, &mut replicate_rng(41, 0)).unwrap();
    let opts = FitOptions {
        compute_vc_se: false,
        ..FitOptions::default()
    };
    let res = fit(&ds, ModelSpec::default(), &opts).unwrap();
    let test = pairagree::glmm::wald_test(&res, 0.95).unwrap();
    assert!(res.fixed.beta_1.abs() < 0.8);
    assert!(res.fixed.beta_2.abs() < 0.8);
    assert!(test.p_value > 0.0 && test.p_value <= 1.0);
    assert!(test.ci_low < test.ci_high);
}
