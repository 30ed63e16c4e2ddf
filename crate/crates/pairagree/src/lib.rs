//! Agreement analysis for two binary measurement methods scored by multiple
//! raters over time.
//!
//! The model is a probit mixed model: each binary outcome has success
//! probability `Phi(beta_m + g(x_t) + gamma_i + alpha_jm)` with a subject
//! effect, method-specific rater effects, and AR(1)-correlated latent
//! residuals within each (subject, method) series. Fitting is by restricted
//! pseudo-likelihood: an outer probit linearization around the current linear
//! predictor and an inner REML step for the variance components, solved
//! through Henderson's mixed model equations so no dense covariance matrix is
//! ever formed.
//!
//! From a single fit the crate derives the agreement toolkit:
//!
//! * a Wald test of equal method effects (`beta_1 = beta_2`),
//! * latent-scale Bland-Altman summaries from per-subject EBLUP predictions,
//! * a model-based Cohen's kappa and its naive per-visit counterpart,
//! * per-method intraclass correlations on the latent scale.
//!
//! A simulation module generates data from the same model and runs parameter
//! recovery and size/power campaigns with reproducible per-replicate random
//! streams.
//!
//! ```
//! use pairagree::glmm::{fit, wald_test, FitOptions, ModelSpec};
//! use pairagree::sim::{generate, replicate_rng, SimConfig};
//!
//! let config = SimConfig::model1(40, 10, 3);
//! let data = generate(&config, &mut replicate_rng(config.seed, 0))?;
//! let options = FitOptions {
//!     compute_vc_se: false,
//!     ..FitOptions::default()
//! };
//! let result = fit(&data, ModelSpec::default(), &options)?;
//! let test = wald_test(&result, 0.95)?;
//! assert!(test.p_value > 0.0 && test.p_value <= 1.0);
//! # Ok::<(), pairagree::Error>(())
//! ```

pub mod agreement;
pub mod data;
pub mod error;
pub mod glmm;
pub mod report;
pub mod sim;

pub use error::{Error, Result};
