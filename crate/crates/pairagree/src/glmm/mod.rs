//! Probit generalized linear mixed model: design construction, restricted
//! pseudo-likelihood fitting, and the Wald test of equal method effects.

mod design;
mod fit;
mod optim;
mod probit;
mod reml;

pub use design::{
    ar1_matrix, build_design, DesignBundle, ModelSpec, RBlock, RaterEffect,
    ResidualCorrelation, TimeTrend,
};
pub use fit::{fit, wald_test, FitOptions, FitResult, FixedEffects, WaldTest};
pub use optim::{minimize, OptimResult};
pub use probit::{norm_cdf, norm_pdf, norm_quantile, probit_glm, ProbitGlm};
pub use reml::{
    assemble, reml_objective, solve_mme, Assembled, MmeSolution, VarianceComponents, VcLayout,
    WorkingData, RHO_CAP, VARIANCE_FLOOR,
};
