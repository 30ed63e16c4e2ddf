//! Restricted-likelihood machinery for the working linear mixed model.
//!
//! The working model is P = X beta + Z u + e with
//!   G = blockdiag(sigma2_gamma I, sigma2_alpha1 I, sigma2_alpha2 I),
//!   R = W^{-1/2} blockdiag_b C_b(rho) W^{-1/2},
//! where W holds the probit working weights and C_b is the AR(1) correlation
//! of block b's times. Everything is computed through the Henderson
//! mixed-model equations, exploiting the block structure of R and the sparse
//! incidence Z, so a single evaluation is cheap even for thousands of records.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::design::{ar1_matrix, DesignBundle, ResidualCorrelation};
use crate::error::{Error, Result};

/// Variances are floored here; the latent residual scale is fixed at 1.
pub const VARIANCE_FLOOR: f64 = 1e-10;
/// |rho| is kept strictly inside the unit interval.
pub const RHO_CAP: f64 = 0.99;

/// Estimated variance components of the probit mixed model, with standard
/// errors when available.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceComponents {
    pub sigma2_gamma: f64,
    pub sigma2_alpha1: f64,
    pub sigma2_alpha2: f64,
    pub rho: f64,
    pub se_sigma2_gamma: Option<f64>,
    pub se_sigma2_alpha1: Option<f64>,
    pub se_sigma2_alpha2: Option<f64>,
    pub se_rho: Option<f64>,
}

impl VarianceComponents {
    pub fn new(sigma2_gamma: f64, sigma2_alpha1: f64, sigma2_alpha2: f64, rho: f64) -> Self {
        VarianceComponents {
            sigma2_gamma,
            sigma2_alpha1,
            sigma2_alpha2,
            rho,
            se_sigma2_gamma: None,
            se_sigma2_alpha1: None,
            se_sigma2_alpha2: None,
            se_rho: None,
        }
    }
}

/// Which variance parameters are free, and how they map onto the
/// unconstrained optimizer scale (log variances, atanh rho).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VcLayout {
    pub has_rater: bool,
    pub has_rho: bool,
}

impl VcLayout {
    pub fn of(design: &DesignBundle) -> VcLayout {
        VcLayout {
            has_rater: design.rater_col.is_some(),
            has_rho: design.spec.residual_correlation == ResidualCorrelation::Ar1,
        }
    }

    pub fn n_params(&self) -> usize {
        1 + if self.has_rater { 2 } else { 0 } + if self.has_rho { 1 } else { 0 }
    }

    /// Natural scale -> unconstrained optimizer scale.
    pub fn pack(&self, vc: &VarianceComponents) -> Vec<f64> {
        let mut v = vec![vc.sigma2_gamma.max(VARIANCE_FLOOR).ln()];
        if self.has_rater {
            v.push(vc.sigma2_alpha1.max(VARIANCE_FLOOR).ln());
            v.push(vc.sigma2_alpha2.max(VARIANCE_FLOOR).ln());
        }
        if self.has_rho {
            v.push(vc.rho.clamp(-RHO_CAP, RHO_CAP).atanh());
        }
        v
    }

    /// Unconstrained optimizer scale -> natural scale, with floors applied.
    pub fn unpack(&self, params: &[f64]) -> VarianceComponents {
        assert_eq!(params.len(), self.n_params());
        let mut k = 0;
        let mut next = || {
            let v = params[k];
            k += 1;
            v
        };
        let sg = next().exp().max(VARIANCE_FLOOR);
        let (sa1, sa2) = if self.has_rater {
            (next().exp().max(VARIANCE_FLOOR), next().exp().max(VARIANCE_FLOOR))
        } else {
            (0.0, 0.0)
        };
        let rho = if self.has_rho {
            next().tanh().clamp(-RHO_CAP, RHO_CAP)
        } else {
            0.0
        };
        VarianceComponents::new(sg, sa1, sa2, rho)
    }
}

/// The linearized response and weights of one outer pseudo-likelihood pass,
/// together with the design they refer to.
#[derive(Debug, Clone)]
pub struct WorkingData<'a> {
    pub design: &'a DesignBundle,
    pub response: DVector<f64>,
    pub weights: DVector<f64>,
    /// Ridge added to the fixed-effect diagonal (separation guard).
    pub ridge: f64,
}

impl<'a> WorkingData<'a> {
    pub fn new(design: &'a DesignBundle, response: DVector<f64>, weights: DVector<f64>) -> Self {
        assert_eq!(response.len(), design.n_records());
        assert_eq!(weights.len(), design.n_records());
        WorkingData {
            design,
            response,
            weights,
            ridge: 0.0,
        }
    }

    /// Dense marginal covariance V = Z G Z' + R; for oracles and small tests.
    pub fn v_dense(&self, vc: &VarianceComponents) -> Result<DMatrix<f64>> {
        let d = self.design;
        let n = d.n_records();
        let z = d.z_dense();
        let g = g_diagonal(d, vc);
        let mut v = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                let mut s = 0.0;
                for (k, gk) in g.iter().enumerate() {
                    s += z[(a, k)] * gk * z[(b, k)];
                }
                v[(a, b)] = s;
            }
        }
        for block in &d.blocks {
            let c = block_correlation(d, block, vc.rho)?;
            for (s, &row_s) in block.rows.iter().enumerate() {
                for (t, &row_t) in block.rows.iter().enumerate() {
                    v[(row_s, row_t)] +=
                        c[(s, t)] / (self.weights[row_s].sqrt() * self.weights[row_t].sqrt());
                }
            }
        }
        Ok(v)
    }
}

/// Diagonal of G in Z-column order.
fn g_diagonal(design: &DesignBundle, vc: &VarianceComponents) -> Vec<f64> {
    let i = design.n_subjects;
    let j = design.n_raters;
    let q = design.n_random();
    let mut g = vec![vc.sigma2_gamma.max(VARIANCE_FLOOR); q];
    if design.rater_col.is_some() {
        for c in i..i + j {
            g[c] = vc.sigma2_alpha1.max(VARIANCE_FLOOR);
        }
        for c in i + j..i + 2 * j {
            g[c] = vc.sigma2_alpha2.max(VARIANCE_FLOOR);
        }
    }
    g
}

fn block_correlation(
    design: &DesignBundle,
    block: &super::design::RBlock,
    rho: f64,
) -> Result<DMatrix<f64>> {
    if design.spec.residual_correlation == ResidualCorrelation::Independent || rho == 0.0 {
        Ok(DMatrix::identity(block.rows.len(), block.rows.len()))
    } else {
        ar1_matrix(&block.times, rho)
    }
}

/// Factorized mixed-model equations plus the scalars needed for the REML
/// criterion.
///
/// The subject columns of the Henderson matrix are mutually orthogonal (no
/// residual block spans two subjects), so the system has a block-arrow shape:
/// a diagonal over subjects coupled to a small dense core of fixed-effect and
/// rater columns. Subjects are eliminated analytically and only the Schur
/// complement on the core is factorized.
pub struct Assembled {
    /// Subject diagonal of C, G^-1 included.
    subj_diag: Vec<f64>,
    /// Per-subject coupling to the core: parallel (core index, value) lists.
    coupling_idx: Vec<Vec<usize>>,
    coupling_val: Vec<Vec<f64>>,
    /// Cholesky of the Schur complement on the core [fixed cols, rater cols].
    schur: Cholesky<f64, Dyn>,
    rhs_subj: Vec<f64>,
    rhs_core: DVector<f64>,
    pub y_rinv_y: f64,
    pub logdet_r: f64,
    pub logdet_g: f64,
    pub logdet_c: f64,
    pub n_fixed: usize,
}

/// Lower-triangular forward substitution on the columns of a flat t x c
/// row-major buffer.
fn forward_solve_in_place(l: &DMatrix<f64>, buf: &mut [f64], t: usize, c: usize) {
    for r in 0..t {
        for k in 0..r {
            let lrk = l[(r, k)];
            for j in 0..c {
                buf[r * c + j] -= lrk * buf[k * c + j];
            }
        }
        let inv = 1.0 / l[(r, r)];
        for j in 0..c {
            buf[r * c + j] *= inv;
        }
    }
}

/// Builds and factorizes the Henderson coefficient matrix
/// C = [X'R~X, X'R~Z; Z'R~X, Z'R~Z + G^-1] (R~ = R^-1), blockwise in R.
pub fn assemble(working: &WorkingData, vc: &VarianceComponents) -> Result<Assembled> {
    let d = working.design;
    let p = d.n_fixed();
    let q = d.n_random();
    let n_subj = d.n_subjects;
    // core = fixed columns followed by every non-subject random column
    let nc = p + (q - n_subj);
    let core_of_z = |zcol: usize| p + (zcol - n_subj);

    let mut s0 = DMatrix::<f64>::zeros(nc, nc);
    let mut rhs_core = DVector::<f64>::zeros(nc);
    let mut subj_diag = vec![0.0; n_subj];
    let mut rhs_subj = vec![0.0; n_subj];
    let mut coupling_idx: Vec<Vec<usize>> = vec![Vec::new(); n_subj];
    let mut coupling_val: Vec<Vec<f64>> = vec![Vec::new(); n_subj];
    let mut y_rinv_y = 0.0;
    let mut logdet_r = 0.0;

    let use_ar1 = d.spec.residual_correlation == ResidualCorrelation::Ar1 && vc.rho != 0.0;

    // AR(1) Cholesky factors cached per distinct time pattern; with balanced
    // data every block shares one factor
    let mut chol_cache: Vec<(Vec<u64>, DMatrix<f64>, f64)> = Vec::new();

    // scratch reused across blocks: local columns are the block's distinct
    // core columns; the flat buffer holds [subject | core cols | y] rows
    let mut local_cols: Vec<usize> = Vec::new();
    let mut buf: Vec<f64> = Vec::new();
    for block in &d.blocks {
        let t = block.rows.len();
        let subject = d.subject_col[block.rows[0]];
        debug_assert!(block.rows.iter().all(|&r| d.subject_col[r] == subject));

        local_cols.clear();
        for c in 0..p {
            local_cols.push(c);
        }
        if let Some(rc) = &d.rater_col {
            for &row in &block.rows {
                let c = core_of_z(rc[row]);
                if !local_cols.contains(&c) {
                    local_cols.push(c);
                }
            }
        }
        let l = local_cols.len();
        let width = l + 2;

        // weighted rows [sqrt(w) * (1_subject, core design, response)]
        buf.clear();
        buf.resize(t * width, 0.0);
        for (s, &row) in block.rows.iter().enumerate() {
            let sw = working.weights[row].sqrt();
            let r0 = s * width;
            buf[r0] = sw;
            for c in 0..p {
                buf[r0 + 1 + c] = sw * d.x[(row, c)];
            }
            if let Some(rc) = &d.rater_col {
                let local = local_cols
                    .iter()
                    .position(|&g| g == core_of_z(rc[row]))
                    .unwrap();
                buf[r0 + 1 + local] += sw;
            }
            buf[r0 + 1 + l] = sw * working.response[row];
            logdet_r -= working.weights[row].ln();
        }

        // half-solve: rows become L^-1 rows, so every pairwise product
        // a' C^-1 b is a plain column dot product afterwards
        if use_ar1 {
            let key: Vec<u64> = block.times.iter().map(|v| v.to_bits()).collect();
            let cached = chol_cache.iter().position(|(k, _, _)| *k == key);
            let idx = match cached {
                Some(i) => i,
                None => {
                    let c = ar1_matrix(&block.times, vc.rho)?;
                    let chol = Cholesky::new(c).ok_or_else(|| {
                        Error::Numerical("AR(1) block not positive definite".into())
                    })?;
                    let mut ld = 0.0;
                    for k in 0..t {
                        ld += 2.0 * chol.l_dirty()[(k, k)].ln();
                    }
                    chol_cache.push((key, chol.unpack(), ld));
                    chol_cache.len() - 1
                }
            };
            let (_, lmat, ld) = &chol_cache[idx];
            logdet_r += ld;
            forward_solve_in_place(lmat, &mut buf, t, width);
        }

        // column dot products of the half-solved buffer
        let dot = |a: usize, b: usize| -> f64 {
            let mut s = 0.0;
            for r in 0..t {
                s += buf[r * width + a] * buf[r * width + b];
            }
            s
        };
        subj_diag[subject] += dot(0, 0);
        rhs_subj[subject] += dot(0, 1 + l);
        y_rinv_y += dot(1 + l, 1 + l);
        for (li, &gi) in local_cols.iter().enumerate() {
            rhs_core[gi] += dot(1 + li, 1 + l);
            let cv = dot(0, 1 + li);
            if cv != 0.0 {
                let idxs = &mut coupling_idx[subject];
                match idxs.iter().position(|&g| g == gi) {
                    Some(k) => coupling_val[subject][k] += cv,
                    None => {
                        idxs.push(gi);
                        coupling_val[subject].push(cv);
                    }
                }
            }
            for (lj, &gj) in local_cols.iter().enumerate().skip(li) {
                let v = dot(1 + li, 1 + lj);
                s0[(gi, gj)] += v;
                if gi != gj {
                    s0[(gj, gi)] += v;
                }
            }
        }
    }

    // G^-1 on the random-effect diagonals, ridge on the fixed block
    let g = g_diagonal(d, vc);
    let mut logdet_g = 0.0;
    for (k, gk) in g.iter().enumerate() {
        logdet_g += gk.ln();
        if k < n_subj {
            subj_diag[k] += 1.0 / gk;
        } else {
            let c = core_of_z(k);
            s0[(c, c)] += 1.0 / gk;
        }
    }
    for c in 0..p {
        s0[(c, c)] += working.ridge;
    }

    // Schur complement: S = S0 - sum_i c_i c_i' / d_i over touched entries
    let mut logdet_c = 0.0;
    for i in 0..n_subj {
        let di = subj_diag[i];
        if !(di > 0.0) || !di.is_finite() {
            return Err(Error::Numerical("singular mixed-model equations".into()));
        }
        logdet_c += di.ln();
        let idxs = &coupling_idx[i];
        let vals = &coupling_val[i];
        for (a, &ga) in idxs.iter().enumerate() {
            let va = vals[a] / di;
            for (b, &gb) in idxs.iter().enumerate() {
                s0[(ga, gb)] -= va * vals[b];
            }
        }
    }

    let schur = Cholesky::new(s0)
        .ok_or_else(|| Error::Numerical("singular mixed-model equations".into()))?;
    for k in 0..nc {
        logdet_c += 2.0 * schur.l_dirty()[(k, k)].ln();
    }

    Ok(Assembled {
        subj_diag,
        coupling_idx,
        coupling_val,
        schur,
        rhs_subj,
        rhs_core,
        y_rinv_y,
        logdet_r,
        logdet_g,
        logdet_c,
        n_fixed: p,
    })
}

impl Assembled {
    /// Solves the Henderson system. Returns the solution in global order
    /// [fixed, subjects, other random effects] and the quadratic form
    /// rhs' C^-1 rhs.
    pub fn solve(&self) -> (DVector<f64>, f64) {
        let n_subj = self.subj_diag.len();
        let p = self.n_fixed;
        let nc = self.rhs_core.len();

        // reduced core right-hand side
        let mut rc = self.rhs_core.clone();
        for i in 0..n_subj {
            let ti = self.rhs_subj[i] / self.subj_diag[i];
            for (k, &g) in self.coupling_idx[i].iter().enumerate() {
                rc[g] -= self.coupling_val[i][k] * ti;
            }
        }
        let v = self.schur.solve(&rc);

        // back-substitute the subjects
        let mut sol = DVector::zeros(p + n_subj + (nc - p));
        let mut quad = 0.0;
        for i in 0..n_subj {
            let mut cv = 0.0;
            for (k, &g) in self.coupling_idx[i].iter().enumerate() {
                cv += self.coupling_val[i][k] * v[g];
            }
            let ui = (self.rhs_subj[i] - cv) / self.subj_diag[i];
            sol[p + i] = ui;
            quad += self.rhs_subj[i] * ui;
        }
        for c in 0..p {
            sol[c] = v[c];
            quad += self.rhs_core[c] * v[c];
        }
        for c in p..nc {
            sol[n_subj + c] = v[c];
            quad += self.rhs_core[c] * v[c];
        }
        (sol, quad)
    }

    /// Fixed-effect block of C^-1, which equals (X'V^-1 X)^-1. The fixed
    /// columns live in the core, so this is a corner of the Schur inverse.
    pub fn cov_fixed(&self) -> DMatrix<f64> {
        let p = self.n_fixed;
        let nc = self.rhs_core.len();
        let mut e = DMatrix::<f64>::zeros(nc, p);
        for c in 0..p {
            e[(c, c)] = 1.0;
        }
        let cols = self.schur.solve(&e);
        let mut cov = DMatrix::<f64>::zeros(p, p);
        for a in 0..p {
            for b in 0..p {
                cov[(a, b)] = 0.5 * (cols[(a, b)] + cols[(b, a)]);
            }
        }
        cov
    }
}

/// -2 restricted log-likelihood of the working LMM (up to an additive
/// constant): log|V| + log|X'V^-1 X| + r'V^-1 r, computed through the
/// Henderson-system identity
/// log|V| + log|X'V^-1 X| = log|R| + log|G| + log|C|.
///
/// Returns +infinity when V is numerically singular so optimizers retreat.
pub fn reml_objective(vc_unconstrained: &[f64], working: &WorkingData) -> f64 {
    let layout = VcLayout::of(working.design);
    let vc = layout.unpack(vc_unconstrained);
    match assemble(working, &vc) {
        Ok(asm) => {
            let (_, rhs_quad) = asm.solve();
            let quad = asm.y_rinv_y - rhs_quad;
            let obj = asm.logdet_r + asm.logdet_g + asm.logdet_c + quad;
            if obj.is_finite() {
                obj
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    }
}

/// Mixed-model-equation solution: GLS fixed effects, EBLUP random effects and
/// the fixed-effect covariance (X'V^-1 X)^-1.
#[derive(Debug, Clone)]
pub struct MmeSolution {
    pub beta: DVector<f64>,
    pub u: DVector<f64>,
    pub cov_beta: DMatrix<f64>,
}

pub fn solve_mme(working: &WorkingData, vc: &VarianceComponents) -> Result<MmeSolution> {
    let asm = assemble(working, vc)?;
    let p = asm.n_fixed;
    let (sol, _) = asm.solve();
    let dim = sol.len();
    let beta = DVector::from_fn(p, |k, _| sol[k]);
    let u = DVector::from_fn(dim - p, |k, _| sol[p + k]);
    let cov_beta = asm.cov_fixed();
    Ok(MmeSolution { beta, u, cov_beta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glmm::design::{ModelSpec, RBlock, RaterEffect, TimeTrend};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random-intercept design with arbitrary X, for direct construction in
    /// tests: groups play the subject role, no rater effects, identity R.
    pub(crate) fn grouped_design(
        x: DMatrix<f64>,
        groups: Vec<usize>,
        n_groups: usize,
        times: Vec<f64>,
        correlated: bool,
    ) -> DesignBundle {
        let n = x.nrows();
        assert_eq!(groups.len(), n);
        // one block per record unless correlation is wanted per group
        let blocks = if correlated {
            let mut blocks: Vec<RBlock> = Vec::new();
            for g in 0..n_groups {
                let rows: Vec<usize> = (0..n).filter(|&i| groups[i] == g).collect();
                if rows.is_empty() {
                    continue;
                }
                let ts = rows.iter().map(|&i| times[i]).collect();
                blocks.push(RBlock { rows, times: ts });
            }
            blocks
        } else {
            (0..n)
                .map(|i| RBlock {
                    rows: vec![i],
                    times: vec![times[i]],
                })
                .collect()
        };
        DesignBundle {
            x,
            y: DVector::zeros(n),
            subject_col: groups,
            rater_col: None,
            blocks,
            n_subjects: n_groups,
            n_raters: 0,
            spec: ModelSpec {
                time_trend: TimeTrend::None,
                residual_correlation: if correlated {
                    crate::glmm::design::ResidualCorrelation::Ar1
                } else {
                    crate::glmm::design::ResidualCorrelation::Independent
                },
                rater_effect: RaterEffect::Omitted,
            },
        }
    }

    #[test]
    fn gls_matches_hand_computation_with_diagonal_v() {
        // 3 "subjects", one record each, weights w_i, zero G (floor):
        // V = diag(1/w_i) + floor ~ diag(1/w_i); beta = weighted mean.
        let x = DMatrix::from_element(3, 1, 1.0);
        let design = grouped_design(x, vec![0, 1, 2], 3, vec![1.0, 2.0, 3.0], false);
        let w = [1.0, 2.0, 4.0];
        let y = [1.0, 2.0, 4.0];
        let working = WorkingData::new(
            &design,
            DVector::from_row_slice(&y),
            DVector::from_row_slice(&w),
        );
        let vc = VarianceComponents::new(VARIANCE_FLOOR, 0.0, 0.0, 0.0);
        let sol = solve_mme(&working, &vc).unwrap();
        let wsum: f64 = w.iter().sum();
        let wmean: f64 = w.iter().zip(&y).map(|(wi, yi)| wi * yi).sum::<f64>() / wsum;
        // the floored subject variance perturbs V by 1e-10, so allow that much
        assert_relative_eq!(sol.beta[0], wmean, epsilon = 1e-8);
        assert_relative_eq!(sol.cov_beta[(0, 0)], 1.0 / wsum, epsilon = 1e-6);
        // G -> 0 limit: EBLUPs shrink to zero
        assert!(sol.u.amax() < 1e-6);
    }

    #[test]
    fn henderson_agrees_with_direct_formula_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let n_groups = rng.gen_range(3..6);
            let reps = rng.gen_range(2..4);
            let n = n_groups * reps;
            let x = DMatrix::from_fn(n, 2, |_, c| {
                if c == 0 {
                    1.0
                } else {
                    rng.gen_range(-1.0..1.0)
                }
            });
            let groups: Vec<usize> = (0..n).map(|i| i / reps).collect();
            let times: Vec<f64> = (0..n).map(|i| (i % reps) as f64 + 1.0).collect();
            let design = grouped_design(x.clone(), groups, n_groups, times, true);
            let weights = DVector::from_fn(n, |_, _| rng.gen_range(0.5..2.0));
            let response = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
            let working = WorkingData::new(&design, response.clone(), weights.clone());
            let vc = VarianceComponents::new(
                rng.gen_range(0.05..1.0),
                0.0,
                0.0,
                rng.gen_range(-0.5..0.5),
            );

            let sol = solve_mme(&working, &vc).unwrap();

            // direct formula through dense V
            let v = working.v_dense(&vc).unwrap();
            let vinv = v.clone().try_inverse().unwrap();
            let xt_vi = x.transpose() * &vinv;
            let xtvix = (&xt_vi * &x).try_inverse().unwrap();
            let beta = &xtvix * &xt_vi * &response;
            let z = design.z_dense();
            let g = vec![vc.sigma2_gamma; design.n_random()];
            let resid = &response - &x * &beta;
            let mut u = DVector::zeros(design.n_random());
            let vr = &vinv * &resid;
            for k in 0..design.n_random() {
                let zk = z.column(k);
                u[k] = g[k] * zk.dot(&vr);
            }
            assert!((sol.beta.clone() - beta).amax() < 1e-8);
            assert!((sol.u.clone() - u).amax() < 1e-8);
        }
    }

    #[test]
    fn objective_is_infinite_for_singular_v() {
        // rho at the cap with identical times makes the AR(1) block singular
        let x = DMatrix::from_element(2, 1, 1.0);
        let mut design = grouped_design(x, vec![0, 0], 1, vec![1.0, 1.0], true);
        design.blocks = vec![RBlock {
            rows: vec![0, 1],
            times: vec![1.0, 1.0],
        }];
        let working = WorkingData::new(
            &design,
            DVector::from_row_slice(&[0.3, 0.7]),
            DVector::from_element(2, 1.0),
        );
        // rho -> tanh(atanh(0.99)) = 0.99 but identical times give corr 1
        let obj = reml_objective(&[0.0_f64.ln(), 5.0], &working);
        assert!(obj.is_infinite() || obj > 1e10);
    }

    #[test]
    fn layout_pack_unpack_round_trip() {
        let layout = VcLayout {
            has_rater: true,
            has_rho: true,
        };
        let vc = VarianceComponents::new(0.8, 0.2, 0.4, 0.1);
        let packed = layout.pack(&vc);
        assert_eq!(packed.len(), 4);
        let back = layout.unpack(&packed);
        assert_relative_eq!(back.sigma2_gamma, 0.8, epsilon = 1e-12);
        assert_relative_eq!(back.sigma2_alpha2, 0.4, epsilon = 1e-12);
        assert_relative_eq!(back.rho, 0.1, epsilon = 1e-12);

        let small = VcLayout {
            has_rater: false,
            has_rho: false,
        };
        assert_eq!(small.n_params(), 1);
        let v2 = small.unpack(&[(0.3f64).ln()]);
        assert_eq!(v2.sigma2_alpha1, 0.0);
        assert_eq!(v2.rho, 0.0);
    }
}
