//! Model specification and design construction for the probit mixed model.
//!
//! The fixed-effect design uses cell-means coding for the two methods (one
//! indicator column per method) plus an optional linear time column. Random
//! effects are subject intercepts and rater-within-method intercepts; the
//! R-side residual is blocked per (subject, method) with an optional AR(1)
//! correlation over that block's observed times.

use nalgebra::{DMatrix, DVector};

use crate::data::{LongDataset, Method};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeTrend {
    None,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualCorrelation {
    Independent,
    Ar1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RaterEffect {
    Included,
    Omitted,
}

/// Model configuration. The link is always probit and the latent residual
/// variance is fixed at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub time_trend: TimeTrend,
    pub residual_correlation: ResidualCorrelation,
    pub rater_effect: RaterEffect,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            time_trend: TimeTrend::Linear,
            residual_correlation: ResidualCorrelation::Ar1,
            rater_effect: RaterEffect::Included,
        }
    }
}

/// AR(1) correlation matrix over possibly unequally spaced times:
/// entry (s, s') = rho^|t_s - t_s'|.
///
/// ```
/// use pairagree::glmm::ar1_matrix;
/// let c = ar1_matrix(&[1.0, 2.0, 3.0], 0.5).unwrap();
/// assert_eq!(c[(0, 1)], 0.5);
/// assert_eq!(c[(0, 2)], 0.25);
/// assert_eq!(c[(1, 1)], 1.0);
/// ```
pub fn ar1_matrix(times: &[f64], rho: f64) -> Result<DMatrix<f64>> {
    if !(rho.abs() < 1.0) {
        return Err(Error::Invalid(format!("AR(1) parameter |rho| must be < 1, got {rho}")));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::Invalid("non-finite time in AR(1) block".into()));
    }
    let n = times.len();
    let mut m = DMatrix::zeros(n, n);
    for s in 0..n {
        for sp in 0..n {
            if s == sp {
                m[(s, sp)] = 1.0;
                continue;
            }
            let gap = (times[s] - times[sp]).abs();
            m[(s, sp)] = if rho >= 0.0 {
                rho.powf(gap)
            } else {
                // rho^gap is only real for integer gaps when rho < 0
                if (gap - gap.round()).abs() > 1e-9 {
                    return Err(Error::Invalid(format!(
                        "negative rho with non-integer time gap {gap}: rho^gap is undefined"
                    )));
                }
                let sign = if gap.round() as i64 % 2 == 0 { 1.0 } else { -1.0 };
                sign * rho.abs().powf(gap)
            };
        }
    }
    Ok(m)
}

/// One residual block: the records of a single (subject, method) cell, in
/// ascending time order.
#[derive(Debug, Clone)]
pub struct RBlock {
    pub rows: Vec<usize>,
    pub times: Vec<f64>,
}

/// Everything the working-model solver needs: fixed design, implicit sparse
/// random-effect incidence, residual block structure and the response.
#[derive(Debug, Clone)]
pub struct DesignBundle {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Per record: Z column of the subject intercept (0..I).
    pub subject_col: Vec<usize>,
    /// Per record: Z column of the rater-within-method intercept
    /// (I + m*J + j), absent when rater effects are omitted.
    pub rater_col: Option<Vec<usize>>,
    pub blocks: Vec<RBlock>,
    pub n_subjects: usize,
    pub n_raters: usize,
    pub spec: ModelSpec,
}

impl DesignBundle {
    pub fn n_records(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_fixed(&self) -> usize {
        self.x.ncols()
    }

    /// Number of random-effect columns.
    pub fn n_random(&self) -> usize {
        match self.spec.rater_effect {
            RaterEffect::Included => self.n_subjects + 2 * self.n_raters,
            RaterEffect::Omitted => self.n_subjects,
        }
    }

    /// Dense Z matrix; intended for small test instances and oracles.
    pub fn z_dense(&self) -> DMatrix<f64> {
        let n = self.n_records();
        let q = self.n_random();
        let mut z = DMatrix::zeros(n, q);
        for i in 0..n {
            z[(i, self.subject_col[i])] = 1.0;
            if let Some(rc) = &self.rater_col {
                z[(i, rc[i])] = 1.0;
            }
        }
        z
    }
}

/// Builds the design for a dataset under a model specification.
pub fn build_design(ds: &LongDataset, spec: ModelSpec) -> Result<DesignBundle> {
    let n = ds.records().len();
    let n_subjects = ds.n_subjects();
    let n_raters = ds.n_raters();
    if spec.rater_effect == RaterEffect::Included && n_raters < 2 {
        return Err(Error::SpecMismatch(
            "rater effects requested but the dataset has fewer than 2 raters".into(),
        ));
    }

    let p = match spec.time_trend {
        TimeTrend::None => 2,
        TimeTrend::Linear => 3,
    };
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    let mut subject_col = Vec::with_capacity(n);
    let mut rater_col = match spec.rater_effect {
        RaterEffect::Included => Some(Vec::with_capacity(n)),
        RaterEffect::Omitted => None,
    };
    for (i, r) in ds.records().iter().enumerate() {
        x[(i, r.method.index())] = 1.0;
        if spec.time_trend == TimeTrend::Linear {
            x[(i, 2)] = r.time;
        }
        y[i] = r.outcome as f64;
        subject_col.push(r.subject_index);
        if let Some(rc) = rater_col.as_mut() {
            rc.push(n_subjects + r.method.index() * n_raters + r.rater_index);
        }
    }

    // records are sorted by (subject, method, time), so blocks are contiguous
    let mut blocks: Vec<RBlock> = Vec::new();
    let mut current: Option<(usize, Method)> = None;
    for (i, r) in ds.records().iter().enumerate() {
        let key = (r.subject_index, r.method);
        if current != Some(key) {
            blocks.push(RBlock {
                rows: Vec::new(),
                times: Vec::new(),
            });
            current = Some(key);
        }
        let b = blocks.last_mut().unwrap();
        b.rows.push(i);
        b.times.push(r.time);
    }

    Ok(DesignBundle {
        x,
        y,
        subject_col,
        rater_col,
        blocks,
        n_subjects,
        n_raters,
        spec,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::MeasurementRecord;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn ar1_rho_zero_is_identity() {
        let m = ar1_matrix(&[1.0, 7.0, 2.5], 0.0).unwrap();
        assert_eq!(m, DMatrix::identity(3, 3));
    }

    #[test]
    fn ar1_lag_powers() {
        let m = ar1_matrix(&[1.0, 2.0, 3.0], 0.5).unwrap();
        assert_relative_eq!(m[(0, 1)], 0.5);
        assert_relative_eq!(m[(0, 2)], 0.25);
        assert_relative_eq!(m[(1, 2)], 0.5);
        for i in 0..3 {
            assert_eq!(m[(i, i)], 1.0);
        }
    }

    #[test]
    fn ar1_honors_unbalanced_gaps() {
        let m = ar1_matrix(&[1.0, 3.0], 0.1).unwrap();
        assert_relative_eq!(m[(0, 1)], 0.01, epsilon = 1e-15);
    }

    #[test]
    fn ar1_rejects_rho_out_of_range() {
        assert!(ar1_matrix(&[1.0, 2.0], 1.0).is_err());
        assert!(ar1_matrix(&[1.0, 2.0], -1.3).is_err());
    }

    #[test]
    fn ar1_negative_rho_integer_gaps() {
        let m = ar1_matrix(&[1.0, 2.0, 3.0], -0.5).unwrap();
        assert_relative_eq!(m[(0, 1)], -0.5);
        assert_relative_eq!(m[(0, 2)], 0.25);
    }

    proptest! {
        #[test]
        fn ar1_is_positive_definite(
            rho in -0.99f64..0.99,
            n in 2usize..20,
        ) {
            // distinct integer times so negative rho stays well defined
            let times: Vec<f64> = (0..n).map(|k| k as f64).collect();
            let m = ar1_matrix(&times, rho).unwrap();
            prop_assert!(nalgebra::Cholesky::new(m).is_some());
        }
    }

    fn toy_dataset() -> LongDataset {
        // 1 subject, 1 rater, both methods at one time point
        let records = vec![
            MeasurementRecord {
                subject_index: 0,
                rater_index: 0,
                method: Method::One,
                time: 1.0,
                outcome: 1,
            },
            MeasurementRecord {
                subject_index: 0,
                rater_index: 0,
                method: Method::Two,
                time: 1.0,
                outcome: 0,
            },
        ];
        LongDataset::new(records, vec!["s1".into()], vec!["r1".into()]).unwrap()
    }

    #[test]
    fn cell_means_coding_is_identity_on_two_method_toy() {
        let ds = toy_dataset();
        let spec = ModelSpec {
            time_trend: TimeTrend::None,
            residual_correlation: ResidualCorrelation::Independent,
            rater_effect: RaterEffect::Omitted,
        };
        let d = build_design(&ds, spec).unwrap();
        assert_eq!(d.x, DMatrix::identity(2, 2));
        assert_eq!(d.blocks.len(), 2);
    }

    #[test]
    fn rater_effect_with_single_rater_is_rejected() {
        let ds = toy_dataset();
        assert!(build_design(&ds, ModelSpec::default()).is_err());
    }

    #[test]
    fn section3_design_dimensions() {
        // I=100, J=30, T=5 balanced paired design
        use crate::sim::{generate, SimConfig};
        use rand::SeedableRng;
        let cfg = SimConfig::model1(100, 30, 5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let ds = generate(&cfg, &mut rng).unwrap();
        let d = build_design(&ds, ModelSpec::default()).unwrap();
        assert_eq!(d.x.nrows(), 1000);
        assert_eq!(d.x.ncols(), 3);
        assert_eq!(d.n_random(), 100 + 2 * 30);
        assert_eq!(d.blocks.len(), 200);

        let no_rater = ModelSpec {
            rater_effect: RaterEffect::Omitted,
            ..ModelSpec::default()
        };
        let d2 = build_design(&ds, no_rater).unwrap();
        assert_eq!(d2.n_random(), 100);
        assert!(d2.rater_col.is_none());
    }
}
