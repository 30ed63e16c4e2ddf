//! Agreement measures computed from a fitted model: per-subject latent
//! summaries, Bland-Altman limits of agreement on three scales, model-based
//! and naive Cohen's kappa, and per-method intraclass correlations.
//!
//! ```
//! use pairagree::agreement::{ba_summary, eblup_summary, BaScale};
//! use pairagree::glmm::{fit, FitOptions, ModelSpec};
//! use pairagree::sim::{generate, replicate_rng, SimConfig};
//!
//! let config = SimConfig::model1(40, 10, 3);
//! let data = generate(&config, &mut replicate_rng(config.seed, 0))?;
//! let options = FitOptions { compute_vc_se: false, ..FitOptions::default() };
//! let result = fit(&data, ModelSpec::default(), &options)?;
//! let summaries = eblup_summary(&result, &data);
//! let ba = ba_summary(&summaries, BaScale::Probability)?;
//! assert_eq!(ba.points.len(), 40);
//! assert!(ba.loa_low <= ba.mean_diff && ba.mean_diff <= ba.loa_high);
//! # Ok::<(), pairagree::Error>(())
//! ```

use std::collections::HashMap;

use crate::data::LongDataset;
use crate::error::{Error, Result};
use crate::glmm::{norm_cdf, norm_quantile, FitResult, VarianceComponents};

/// Per-subject latent-scale summary, one value per method: the individual
/// mean level after averaging the time trend and the rater population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubjectSummary {
    pub subject_index: usize,
    pub mu_hat_m1: f64,
    pub mu_hat_m2: f64,
}

/// How subject summaries combine the EBLUPs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EblupWeighting {
    /// Plug the EBLUPs in directly; they are already shrunken posterior
    /// means, so no extra weight is applied.
    #[default]
    PlugIn,
    /// Additionally apply the literal posterior weight
    /// J sigma2_gamma / (J sigma2_gamma + sigma2_alpha_m).
    Reweighted,
}

/// Computes the per-subject summaries mu_hat_{i,m} from a fit:
/// beta_m + mean_t g(x_t) + gamma_i + mean_j alpha_{j,m}.
pub fn eblup_summary(fit: &FitResult, ds: &LongDataset) -> Vec<SubjectSummary> {
    eblup_summary_with(fit, ds, EblupWeighting::PlugIn)
}

pub fn eblup_summary_with(
    fit: &FitResult,
    ds: &LongDataset,
    weighting: EblupWeighting,
) -> Vec<SubjectSummary> {
    let j = fit.eblup_alpha.len();
    let alpha_mean: [f64; 2] = if j > 0 {
        let mut s = [0.0; 2];
        for a in &fit.eblup_alpha {
            s[0] += a[0];
            s[1] += a[1];
        }
        [s[0] / j as f64, s[1] / j as f64]
    } else {
        [0.0, 0.0]
    };
    let weight = |m: usize| -> f64 {
        match weighting {
            EblupWeighting::PlugIn => 1.0,
            EblupWeighting::Reweighted => {
                if j == 0 {
                    1.0
                } else {
                    let sa = if m == 0 {
                        fit.vc.sigma2_alpha1
                    } else {
                        fit.vc.sigma2_alpha2
                    };
                    let jg = j as f64 * fit.vc.sigma2_gamma;
                    jg / (jg + sa)
                }
            }
        }
    };

    (0..ds.n_subjects())
        .map(|i| {
            let times = ds.subject_times(i);
            let g_mean = match fit.fixed.theta {
                Some(theta) => theta * times.iter().sum::<f64>() / times.len() as f64,
                None => 0.0,
            };
            let gamma = fit.eblup_gamma[i];
            let mu = |m: usize| {
                let beta = if m == 0 { fit.fixed.beta_1 } else { fit.fixed.beta_2 };
                beta + g_mean + weight(m) * (gamma + alpha_mean[m])
            };
            SubjectSummary {
                subject_index: i,
                mu_hat_m1: mu(0),
                mu_hat_m2: mu(1),
            }
        })
        .collect()
}

/// Scale on which Bland-Altman quantities are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaScale {
    Latent,
    Probability,
    LogProbability,
}

impl BaScale {
    pub fn label(self) -> &'static str {
        match self {
            BaScale::Latent => "latent",
            BaScale::Probability => "probability",
            BaScale::LogProbability => "log-probability",
        }
    }
}

/// Bland-Altman data and 95% limits of agreement.
#[derive(Debug, Clone)]
pub struct BASummary {
    pub scale: BaScale,
    /// One (average, difference) pair per retained subject, in subject order.
    pub points: Vec<(usize, f64, f64)>,
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    /// Fraction of retained points inside [loa_low, loa_high].
    pub pct_within: f64,
    /// Subjects dropped on the log scale because Phi(mu) underflowed.
    pub dropped_subjects: Vec<usize>,
}

const LOA_MULTIPLIER: f64 = 1.96;
const LOG_SCALE_FLOOR: f64 = 1e-12;

/// Builds the Bland-Altman summary: per subject the average and difference of
/// the two method values on the chosen scale; limits of agreement are
/// mean +/- 1.96 sd (sample sd, denominator I - 1).
pub fn ba_summary(summaries: &[SubjectSummary], scale: BaScale) -> Result<BASummary> {
    let mut points = Vec::with_capacity(summaries.len());
    let mut dropped = Vec::new();
    for s in summaries {
        let (v1, v2) = match scale {
            BaScale::Latent => (s.mu_hat_m1, s.mu_hat_m2),
            BaScale::Probability => (norm_cdf(s.mu_hat_m1), norm_cdf(s.mu_hat_m2)),
            BaScale::LogProbability => {
                let p1 = norm_cdf(s.mu_hat_m1);
                let p2 = norm_cdf(s.mu_hat_m2);
                if p1 < LOG_SCALE_FLOOR || p2 < LOG_SCALE_FLOOR {
                    dropped.push(s.subject_index);
                    continue;
                }
                (p1.ln(), p2.ln())
            }
        };
        points.push((s.subject_index, (v1 + v2) / 2.0, v1 - v2));
    }
    let n = points.len();
    if n < 2 {
        return Err(Error::Invalid(format!(
            "Bland-Altman summary requires at least 2 subjects, got {n}"
        )));
    }
    let mean_diff = points.iter().map(|p| p.2).sum::<f64>() / n as f64;
    let ss: f64 = points.iter().map(|p| (p.2 - mean_diff).powi(2)).sum();
    let sd_diff = (ss / (n - 1) as f64).sqrt();
    let loa_low = mean_diff - LOA_MULTIPLIER * sd_diff;
    let loa_high = mean_diff + LOA_MULTIPLIER * sd_diff;
    let within = points
        .iter()
        .filter(|p| p.2 >= loa_low && p.2 <= loa_high)
        .count();
    Ok(BASummary {
        scale,
        points,
        mean_diff,
        sd_diff,
        loa_low,
        loa_high,
        pct_within: within as f64 / n as f64,
        dropped_subjects: dropped,
    })
}

/// Predicted 0-1 score per subject and method: 1 iff mu_hat > 0 (strict), so
/// a boundary value maps to 0.
pub fn predicted_binary_scores(summaries: &[SubjectSummary]) -> Vec<(u8, u8)> {
    summaries
        .iter()
        .map(|s| {
            (
                if s.mu_hat_m1 > 0.0 { 1 } else { 0 },
                if s.mu_hat_m2 > 0.0 { 1 } else { 0 },
            )
        })
        .collect()
}

/// Cohen's kappa for a 2x2 contingency table with a large-sample confidence
/// interval.
#[derive(Debug, Clone)]
pub struct KappaResult {
    /// Counts: a = both 0, b = method 1 is 1 / method 2 is 0,
    /// c = method 1 is 0 / method 2 is 1, d = both 1.
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
    pub kappa: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_o: f64,
    pub p_e: f64,
    pub level: f64,
    /// True when the large-sample variance degenerates (kappa = 1).
    pub degenerate: bool,
}

/// Chance-corrected agreement kappa = (p_o - p_e) / (1 - p_e), with the
/// large-sample standard error of Fleiss, Cohen and Everitt.
///
/// ```
/// use pairagree::agreement::cohen_kappa;
/// let k = cohen_kappa(40, 10, 10, 40, 0.95).unwrap();
/// assert!((k.kappa - 0.6).abs() < 1e-12);
/// assert!((k.p_o - 0.8).abs() < 1e-12);
/// assert!((k.p_e - 0.5).abs() < 1e-12);
/// ```
pub fn cohen_kappa(a: u64, b: u64, c: u64, d: u64, level: f64) -> Result<KappaResult> {
    let n = a + b + c + d;
    if n == 0 {
        return Err(Error::Invalid("empty contingency table".into()));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::Invalid(format!("confidence level {level} out of (0, 1)")));
    }
    let nf = n as f64;
    // cell proportions p[i][j], i = method 1 category, j = method 2 category
    let p = [
        [a as f64 / nf, c as f64 / nf],
        [b as f64 / nf, d as f64 / nf],
    ];
    let row = [p[0][0] + p[0][1], p[1][0] + p[1][1]]; // method 1 margins
    let col = [p[0][0] + p[1][0], p[0][1] + p[1][1]]; // method 2 margins
    let p_o = p[0][0] + p[1][1];
    let p_e = row[0] * col[0] + row[1] * col[1];
    if (1.0 - p_e).abs() < 1e-15 {
        return Err(Error::Numerical(
            "kappa undefined: expected agreement p_e = 1 (all mass in one margin)".into(),
        ));
    }
    let kappa = (p_o - p_e) / (1.0 - p_e);

    // Fleiss-Cohen-Everitt large-sample variance
    let one_pe = 1.0 - p_e;
    let one_po = 1.0 - p_o;
    let mut term1 = 0.0;
    for i in 0..2 {
        term1 += p[i][i] * (one_pe - (row[i] + col[i]) * one_po).powi(2);
    }
    let mut term2 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            if i != j {
                term2 += p[i][j] * (col[i] + row[j]).powi(2);
            }
        }
    }
    term2 *= one_po * one_po;
    let term3 = (p_o * p_e - 2.0 * p_e + p_o).powi(2);
    let var = ((term1 + term2 - term3) / (nf * one_pe.powi(4))).max(0.0);
    let std_error = var.sqrt();
    let degenerate = std_error == 0.0;

    let z = norm_quantile(1.0 - (1.0 - level) / 2.0);
    let ci_low = (kappa - z * std_error).max(-1.0);
    let ci_high = (kappa + z * std_error).min(1.0);
    Ok(KappaResult {
        a,
        b,
        c,
        d,
        kappa,
        std_error,
        ci_low,
        ci_high,
        p_o,
        p_e,
        level,
        degenerate,
    })
}

/// Builds the model-based contingency table from predicted scores and
/// computes kappa. One count per subject.
pub fn model_kappa(summaries: &[SubjectSummary], level: f64) -> Result<KappaResult> {
    let scores = predicted_binary_scores(summaries);
    let mut counts = [0u64; 4];
    for (y1, y2) in scores {
        match (y1, y2) {
            (0, 0) => counts[0] += 1,
            (1, 0) => counts[1] += 1,
            (0, 1) => counts[2] += 1,
            _ => counts[3] += 1,
        }
    }
    cohen_kappa(counts[0], counts[1], counts[2], counts[3], level)
}

/// Counts the observed (method 1, method 2) pairs per subject-time.
pub fn naive_contingency(ds: &LongDataset) -> (u64, u64, u64, u64) {
    let mut pairs: HashMap<(usize, u64), [Option<u8>; 2]> = HashMap::new();
    for r in ds.records() {
        let slot = pairs
            .entry((r.subject_index, r.time.to_bits()))
            .or_insert([None, None]);
        slot[r.method.index()] = Some(r.outcome);
    }
    let mut counts = [0u64; 4];
    for slot in pairs.values() {
        if let (Some(y1), Some(y2)) = (slot[0], slot[1]) {
            match (y1, y2) {
                (0, 0) => counts[0] += 1,
                (1, 0) => counts[1] += 1,
                (0, 1) => counts[2] += 1,
                _ => counts[3] += 1,
            }
        }
    }
    (counts[0], counts[1], counts[2], counts[3])
}

/// Kappa applied directly to the observed repeated measurements, ignoring
/// their within-subject correlation. Reported for comparison with
/// [`model_kappa`].
pub fn naive_kappa(ds: &LongDataset, level: f64) -> Result<KappaResult> {
    let (a, b, c, d) = naive_contingency(ds);
    cohen_kappa(a, b, c, d, level)
}

/// Per-method intraclass correlation on the latent scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ICCResult {
    pub icc_m1: f64,
    pub icc_m2: f64,
}

/// ICC_m = (sigma2_gamma + 1) / (sigma2_gamma + sigma2_alpha_m + 1).
///
/// ```
/// use pairagree::agreement::icc;
/// use pairagree::glmm::VarianceComponents;
/// let r = icc(&VarianceComponents::new(0.8, 0.2, 0.4, 0.0));
/// assert!((r.icc_m1 - 0.9).abs() < 1e-12);
/// assert!((r.icc_m2 - 0.8181818181818182).abs() < 1e-12);
/// ```
pub fn icc(vc: &VarianceComponents) -> ICCResult {
    let num = vc.sigma2_gamma + 1.0;
    ICCResult {
        icc_m1: num / (vc.sigma2_gamma + vc.sigma2_alpha1 + 1.0),
        icc_m2: num / (vc.sigma2_gamma + vc.sigma2_alpha2 + 1.0),
    }
}
