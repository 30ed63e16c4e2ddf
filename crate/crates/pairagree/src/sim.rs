//! Synthetic data generation from the probit mixed model and Monte Carlo
//! campaigns: parameter recovery, and size/power of the equal-methods test
//! with and without rater effects.
//!
//! All randomness flows through per-replicate ChaCha streams derived from
//! (seed, replicate index), so campaigns are reproducible regardless of how
//! replicates are scheduled across workers.
//!
//! ```
//! use pairagree::sim::{generate, replicate_rng, SimConfig};
//!
//! let config = SimConfig::model1(30, 8, 3);
//! let a = generate(&config, &mut replicate_rng(config.seed, 4))?;
//! let b = generate(&config, &mut replicate_rng(config.seed, 4))?;
//! assert_eq!(a.records(), b.records());
//! # Ok::<(), pairagree::Error>(())
//! ```

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::agreement::{ba_summary, eblup_summary, model_kappa, naive_kappa, BaScale};
use crate::data::{LongDataset, MeasurementRecord, Method};
use crate::error::{Error, Result};
use crate::glmm::{ar1_matrix, fit, wald_test, FitOptions, ModelSpec};

/// How the two raters of a visit are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RaterAssignment {
    /// A fresh pair of distinct raters at every (subject, time).
    #[default]
    FreshPerVisit,
    /// One pair of distinct raters drawn per subject and reused at all times.
    PersistentPair,
}

/// Generator parameters for one synthetic dataset.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n_subjects: usize,
    pub n_raters: usize,
    /// Balanced number of time points (x_t = t = 1..T), unless
    /// `subject_times` overrides it.
    pub n_times: usize,
    /// Optional per-subject time lists for unbalanced designs.
    pub subject_times: Option<Vec<Vec<f64>>>,
    pub beta_1: f64,
    pub beta_2: f64,
    /// g(x_t) = time_slope * x_t.
    pub time_slope: f64,
    pub sigma2_gamma: f64,
    pub sigma2_alpha1: f64,
    pub sigma2_alpha2: f64,
    pub rho: f64,
    pub seed: u64,
    pub rater_assignment: RaterAssignment,
}

impl SimConfig {
    /// The agreeing-methods setup: beta_1 = beta_2 = 1.6, slope -0.5,
    /// variances (0.8, 0.2, 0.4), rho 0.1.
    pub fn model1(n_subjects: usize, n_raters: usize, n_times: usize) -> SimConfig {
        SimConfig {
            n_subjects,
            n_raters,
            n_times,
            subject_times: None,
            beta_1: 1.6,
            beta_2: 1.6,
            time_slope: -0.5,
            sigma2_gamma: 0.8,
            sigma2_alpha1: 0.2,
            sigma2_alpha2: 0.4,
            rho: 0.1,
            seed: 42,
            rater_assignment: RaterAssignment::FreshPerVisit,
        }
    }

    /// The disagreeing-methods setup: beta_1 = 2.2, beta_2 = 1.6.
    pub fn model2(n_subjects: usize, n_raters: usize, n_times: usize) -> SimConfig {
        SimConfig {
            beta_1: 2.2,
            ..SimConfig::model1(n_subjects, n_raters, n_times)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subjects < 2 || self.n_raters < 2 {
            return Err(Error::Invalid("simulation requires I >= 2 and J >= 2".into()));
        }
        if self.n_times < 1 && self.subject_times.is_none() {
            return Err(Error::Invalid("simulation requires T >= 1".into()));
        }
        if self.sigma2_gamma < 0.0 || self.sigma2_alpha1 < 0.0 || self.sigma2_alpha2 < 0.0 {
            return Err(Error::Invalid("variances must be non-negative".into()));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::Invalid("|rho| must be < 1".into()));
        }
        if let Some(lists) = &self.subject_times {
            if lists.len() != self.n_subjects {
                return Err(Error::Invalid(
                    "subject_times length must equal n_subjects".into(),
                ));
            }
            if lists.iter().any(|l| l.is_empty()) {
                return Err(Error::Invalid("every subject needs at least one time".into()));
            }
        }
        Ok(())
    }

    fn times_of(&self, subject: usize) -> Vec<f64> {
        match &self.subject_times {
            Some(lists) => lists[subject].clone(),
            None => (1..=self.n_times).map(|t| t as f64).collect(),
        }
    }
}

/// The per-replicate random stream: ChaCha seeded by the campaign seed with
/// the replicate index as the stream counter.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate.wrapping_add(1));
    rng
}

/// Draws a latent AR(1) error series over the given times: Cholesky of the
/// AR(1) correlation applied to iid standard normals, unit marginal variance.
pub fn draw_ar1_errors<R: Rng + ?Sized>(times: &[f64], rho: f64, rng: &mut R) -> Result<Vec<f64>> {
    let t = times.len();
    let c = ar1_matrix(times, rho)?;
    let chol = nalgebra::Cholesky::new(c)
        .ok_or_else(|| Error::Numerical("AR(1) correlation not positive definite".into()))?;
    let z = DVector::from_fn(t, |_, _| rng.sample::<f64, _>(StandardNormal));
    let eps = chol.l() * z;
    Ok(eps.iter().copied().collect())
}

/// A generated dataset together with the effects that produced it.
#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub dataset: LongDataset,
    pub gamma: Vec<f64>,
    pub alpha: Vec<[f64; 2]>,
}

/// Generates one dataset from the model. See [`generate_with_effects`] for
/// access to the generating random effects.
pub fn generate<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<LongDataset> {
    Ok(generate_with_effects(config, rng)?.dataset)
}

pub fn generate_with_effects<R: Rng + ?Sized>(
    config: &SimConfig,
    rng: &mut R,
) -> Result<SimulatedDataset> {
    config.validate()?;
    let i_n = config.n_subjects;
    let j_n = config.n_raters;

    let normal = |rng: &mut R, sd: f64| -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        sd * z
    };

    let gamma: Vec<f64> = (0..i_n)
        .map(|_| normal(rng, config.sigma2_gamma.sqrt()))
        .collect();
    let mut alpha = vec![[0.0; 2]; j_n];
    for m in 0..2 {
        let sd = if m == 0 {
            config.sigma2_alpha1.sqrt()
        } else {
            config.sigma2_alpha2.sqrt()
        };
        for a in alpha.iter_mut() {
            a[m] = normal(rng, sd);
        }
    }

    let mut records = Vec::new();
    for i in 0..i_n {
        let times = config.times_of(i);
        let t_n = times.len();

        // rater pair per visit: two distinct raters
        let draw_pair = |rng: &mut R| -> (usize, usize) {
            let j1 = rng.gen_range(0..j_n);
            let mut j2 = rng.gen_range(0..j_n - 1);
            if j2 >= j1 {
                j2 += 1;
            }
            (j1, j2)
        };
        let pairs: Vec<(usize, usize)> = match config.rater_assignment {
            RaterAssignment::FreshPerVisit => (0..t_n).map(|_| draw_pair(rng)).collect(),
            RaterAssignment::PersistentPair => {
                let p = draw_pair(rng);
                vec![p; t_n]
            }
        };

        for m in 0..2 {
            let eps = draw_ar1_errors(&times, config.rho, rng)?;
            let beta = if m == 0 { config.beta_1 } else { config.beta_2 };
            for (k, (&t, &e)) in times.iter().zip(&eps).enumerate() {
                let rater = if m == 0 { pairs[k].0 } else { pairs[k].1 };
                let mu = beta + config.time_slope * t + gamma[i] + alpha[rater][m];
                records.push(MeasurementRecord {
                    subject_index: i,
                    rater_index: rater,
                    method: Method::from_index(m).unwrap(),
                    time: t,
                    outcome: if mu + e > 0.0 { 1 } else { 0 },
                });
            }
        }
    }
    let subject_labels = (0..i_n).map(|i| format!("S{}", i + 1)).collect();
    let rater_labels = (0..j_n).map(|j| format!("R{}", j + 1)).collect();
    let dataset = LongDataset::new(records, subject_labels, rater_labels)?;
    Ok(SimulatedDataset {
        dataset,
        gamma,
        alpha,
    })
}

/// Everything recorded about one fitted replicate.
#[derive(Debug, Clone)]
pub struct ReplicateRecord {
    pub replicate: u64,
    pub converged: bool,
    pub beta_1: f64,
    pub beta_2: f64,
    pub theta: Option<f64>,
    pub sigma2_gamma: f64,
    pub sigma2_alpha1: f64,
    pub sigma2_alpha2: f64,
    pub rho: f64,
    pub icc_m1: f64,
    pub icc_m2: f64,
    pub p_value: f64,
    pub model_kappa: Option<f64>,
    pub naive_kappa: Option<f64>,
    /// Latent-scale Bland-Altman mean difference of this replicate.
    pub ba_mean_diff: f64,
    pub ba_sd_diff: f64,
    /// Fraction of subjects inside the limits of agreement on the
    /// probability scale.
    pub ba_pct_within: f64,
    /// Across-subject correlation between difference and average on the
    /// probability scale.
    pub ba_corr_diff_avg: f64,
}

/// Aggregated campaign output.
#[derive(Debug, Clone)]
pub struct SimCampaignResult {
    pub n_replicates: usize,
    pub n_converged: usize,
    /// Fraction of converged replicates with p <= alpha.
    pub rejection_rate: f64,
    pub alpha: f64,
    /// (mean, sd) over converged replicates.
    pub beta_1: (f64, f64),
    pub beta_2: (f64, f64),
    pub sigma2_gamma: (f64, f64),
    pub sigma2_alpha1: (f64, f64),
    pub sigma2_alpha2: (f64, f64),
    pub rho: (f64, f64),
    pub mean_icc_m1: f64,
    pub mean_icc_m2: f64,
    pub replicates: Option<Vec<ReplicateRecord>>,
}

fn corr(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Fits one generated replicate and extracts the per-replicate record.
pub fn run_replicate(
    config: &SimConfig,
    replicate: u64,
    spec: ModelSpec,
    opts: &FitOptions,
    alpha: f64,
) -> Result<ReplicateRecord> {
    let mut rng = replicate_rng(config.seed, replicate);
    let sim = generate_with_effects(config, &mut rng)?;
    let ds = &sim.dataset;
    let fit_res = fit(ds, spec, opts)?;
    let test = wald_test(&fit_res, 1.0 - alpha)?;
    let iccs = crate::agreement::icc(&fit_res.vc);
    let summaries = eblup_summary(&fit_res, ds);
    let ba = ba_summary(&summaries, BaScale::Latent)?;
    // the latent diagram collapses to a flat line (the subject effect cancels
    // in the difference), so scatter diagnostics come from the probability
    // scale where the probit transform keeps per-subject variation
    let ba_prob = ba_summary(&summaries, BaScale::Probability)?;
    let avgs: Vec<f64> = ba_prob.points.iter().map(|p| p.1).collect();
    let diffs: Vec<f64> = ba_prob.points.iter().map(|p| p.2).collect();
    Ok(ReplicateRecord {
        replicate,
        converged: fit_res.converged,
        beta_1: fit_res.fixed.beta_1,
        beta_2: fit_res.fixed.beta_2,
        theta: fit_res.fixed.theta,
        sigma2_gamma: fit_res.vc.sigma2_gamma,
        sigma2_alpha1: fit_res.vc.sigma2_alpha1,
        sigma2_alpha2: fit_res.vc.sigma2_alpha2,
        rho: fit_res.vc.rho,
        icc_m1: iccs.icc_m1,
        icc_m2: iccs.icc_m2,
        p_value: test.p_value,
        model_kappa: model_kappa(&summaries, 0.95).ok().map(|k| k.kappa),
        naive_kappa: naive_kappa(ds, 0.95).ok().map(|k| k.kappa),
        ba_mean_diff: ba.mean_diff,
        ba_sd_diff: ba.sd_diff,
        ba_pct_within: ba_prob.pct_within,
        ba_corr_diff_avg: corr(&diffs, &avgs),
    })
}

const MAX_NONCONVERGED_FRACTION: f64 = 0.10;

/// Runs `n_replicates` generate-and-fit cycles in parallel and aggregates
/// estimates. Non-converged replicates are excluded from the aggregates; the
/// campaign errors out when more than 10% fail.
pub fn run_recovery(
    config: &SimConfig,
    n_replicates: usize,
    spec: ModelSpec,
    opts: &FitOptions,
    alpha: f64,
    keep_replicates: bool,
) -> Result<SimCampaignResult> {
    if n_replicates == 0 {
        return Err(Error::Invalid("n_replicates must be >= 1".into()));
    }
    let records: Result<Vec<ReplicateRecord>> = (0..n_replicates as u64)
        .into_par_iter()
        .map(|k| run_replicate(config, k, spec, opts, alpha))
        .collect();
    let records = records?;
    aggregate(records, alpha, keep_replicates)
}

fn aggregate(
    records: Vec<ReplicateRecord>,
    alpha: f64,
    keep_replicates: bool,
) -> Result<SimCampaignResult> {
    let n_replicates = records.len();
    let ok: Vec<&ReplicateRecord> = records.iter().filter(|r| r.converged).collect();
    let n_converged = ok.len();
    let failed_fraction = 1.0 - n_converged as f64 / n_replicates as f64;
    if failed_fraction > MAX_NONCONVERGED_FRACTION {
        return Err(Error::Numerical(format!(
            "{:.0}% of replicates failed to converge (cap {:.0}%)",
            failed_fraction * 100.0,
            MAX_NONCONVERGED_FRACTION * 100.0
        )));
    }
    let collect = |f: fn(&ReplicateRecord) -> f64| -> Vec<f64> { ok.iter().map(|r| f(r)).collect() };
    let rejections = ok.iter().filter(|r| r.p_value <= alpha).count();
    Ok(SimCampaignResult {
        n_replicates,
        n_converged,
        rejection_rate: rejections as f64 / n_converged.max(1) as f64,
        alpha,
        beta_1: mean_sd(&collect(|r| r.beta_1)),
        beta_2: mean_sd(&collect(|r| r.beta_2)),
        sigma2_gamma: mean_sd(&collect(|r| r.sigma2_gamma)),
        sigma2_alpha1: mean_sd(&collect(|r| r.sigma2_alpha1)),
        sigma2_alpha2: mean_sd(&collect(|r| r.sigma2_alpha2)),
        rho: mean_sd(&collect(|r| r.rho)),
        mean_icc_m1: mean_sd(&collect(|r| r.icc_m1)).0,
        mean_icc_m2: mean_sd(&collect(|r| r.icc_m2)).0,
        replicates: if keep_replicates { Some(records) } else { None },
    })
}

/// One point of a size/power table.
#[derive(Debug, Clone)]
pub struct PowerPoint {
    pub beta_1: f64,
    pub spec_label: String,
    pub n_replicates: usize,
    pub n_converged: usize,
    pub rejection_rate: f64,
}

/// Sweeps beta_1 over a grid and records the rejection rate of the
/// equal-methods test at level `alpha` under each candidate model spec.
/// Each replicate's dataset is shared across specs.
pub fn run_size_power(
    base: &SimConfig,
    beta1_grid: &[f64],
    n_replicates: usize,
    specs: &[(String, ModelSpec)],
    alpha: f64,
    opts: &FitOptions,
) -> Result<Vec<PowerPoint>> {
    if beta1_grid.is_empty() || specs.is_empty() || n_replicates == 0 {
        return Err(Error::Invalid("empty power grid, spec list or replicate count".into()));
    }
    let mut out = Vec::new();
    for (gi, &b1) in beta1_grid.iter().enumerate() {
        let mut config = base.clone();
        config.beta_1 = b1;

        // one p-value per (replicate, spec); datasets shared across specs
        let per_rep: Result<Vec<Vec<Option<f64>>>> = (0..n_replicates as u64)
            .into_par_iter()
            .map(|k| {
                // distinct streams per grid point
                let stream = (gi as u64) * (n_replicates as u64) + k;
                let mut rng = replicate_rng(config.seed, stream);
                let ds = generate(&config, &mut rng)?;
                let mut pvals = Vec::with_capacity(specs.len());
                for (_, spec) in specs {
                    let fit_res = fit(&ds, *spec, opts)?;
                    if fit_res.converged {
                        let test = wald_test(&fit_res, 1.0 - alpha.min(0.999))?;
                        pvals.push(Some(test.p_value));
                    } else {
                        pvals.push(None);
                    }
                }
                Ok(pvals)
            })
            .collect();
        let per_rep = per_rep?;

        for (si, (label, _)) in specs.iter().enumerate() {
            let pvals: Vec<Option<f64>> = per_rep.iter().map(|r| r[si]).collect();
            let n_converged = pvals.iter().filter(|p| p.is_some()).count();
            let failed = 1.0 - n_converged as f64 / n_replicates as f64;
            if failed > MAX_NONCONVERGED_FRACTION {
                return Err(Error::Numerical(format!(
                    "spec '{label}' at beta_1 = {b1}: {:.0}% non-converged",
                    failed * 100.0
                )));
            }
            let rejections = pvals
                .iter()
                .filter(|p| p.map(|v| v <= alpha).unwrap_or(false))
                .count();
            out.push(PowerPoint {
                beta_1: b1,
                spec_label: label.clone(),
                n_replicates,
                n_converged,
                rejection_rate: rejections as f64 / n_converged.max(1) as f64,
            });
        }
    }
    Ok(out)
}
