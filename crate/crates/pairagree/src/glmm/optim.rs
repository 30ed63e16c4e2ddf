//! Derivative-free minimization for the inner REML criterion: a Nelder-Mead
//! simplex search followed by a numerical-gradient quasi-Newton polish.

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub n_evals: usize,
}

/// Minimizes `f` starting at `x0`. `max_evals` caps the total number of
/// objective evaluations across both phases. A non-positive `init_step`
/// skips the simplex phase and polishes directly from `x0`, which is the
/// right mode for a warm start already near the optimum.
pub fn minimize<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    init_step: f64,
    max_evals: usize,
    ftol: f64,
) -> OptimResult {
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let (mut best_x, mut best_f) = if init_step > 0.0 {
        let nm_budget = (max_evals * 3) / 5;
        nelder_mead(&mut eval, x0, init_step, nm_budget, ftol, &mut evals)
    } else {
        let f0 = eval(x0, &mut evals);
        (x0.to_vec(), f0)
    };

    let remaining = max_evals.saturating_sub(evals);
    if remaining > 4 * x0.len() {
        let (px, pf) = quasi_newton_polish(&mut eval, &best_x, best_f, remaining, &mut evals);
        if pf < best_f {
            best_x = px;
            best_f = pf;
        }
    }
    OptimResult {
        x: best_x,
        fx: best_f,
        n_evals: evals,
    }
}

fn nelder_mead<E: FnMut(&[f64], &mut usize) -> f64>(
    eval: &mut E,
    x0: &[f64],
    step: f64,
    budget: usize,
    ftol: f64,
    evals: &mut usize,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = eval(x0, evals);
    simplex.push((x0.to_vec(), f0));
    for k in 0..n {
        let mut x = x0.to_vec();
        x[k] += step;
        let fx = eval(&x, evals);
        simplex.push((x, fx));
    }

    while *evals < budget {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let spread = simplex[n].1 - simplex[0].1;
        if spread.abs() < ftol && simplex[0].1.is_finite() {
            break;
        }
        // centroid of all but the worst
        let mut centroid = vec![0.0; n];
        for (x, _) in simplex.iter().take(n) {
            for k in 0..n {
                centroid[k] += x[k] / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let reflect: Vec<f64> = (0..n)
            .map(|k| centroid[k] + (centroid[k] - worst.0[k]))
            .collect();
        let fr = eval(&reflect, evals);
        if fr < simplex[0].1 {
            let expand: Vec<f64> = (0..n)
                .map(|k| centroid[k] + 2.0 * (centroid[k] - worst.0[k]))
                .collect();
            let fe = eval(&expand, evals);
            simplex[n] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflect, fr);
        } else {
            let contract: Vec<f64> = (0..n)
                .map(|k| centroid[k] + 0.5 * (worst.0[k] - centroid[k]))
                .collect();
            let fc = eval(&contract, evals);
            if fc < worst.1 {
                simplex[n] = (contract, fc);
            } else {
                // shrink toward the best vertex
                let best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    for k in 0..n {
                        v.0[k] = best[k] + 0.5 * (v.0[k] - best[k]);
                    }
                    v.1 = eval(&v.0, evals);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    simplex.swap_remove(0)
}

/// Central-difference gradient.
pub fn numerical_gradient<E: FnMut(&[f64], &mut usize) -> f64>(
    eval: &mut E,
    x: &[f64],
    h: f64,
    evals: &mut usize,
) -> Vec<f64> {
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut xp = x.to_vec();
    for k in 0..n {
        xp[k] = x[k] + h;
        let fp = eval(&xp, evals);
        xp[k] = x[k] - h;
        let fm = eval(&xp, evals);
        xp[k] = x[k];
        g[k] = (fp - fm) / (2.0 * h);
    }
    g
}

fn quasi_newton_polish<E: FnMut(&[f64], &mut usize) -> f64>(
    eval: &mut E,
    x0: &[f64],
    f0: f64,
    budget: usize,
    evals: &mut usize,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    let start = *evals;
    let h = 1e-5;
    let mut x = x0.to_vec();
    let mut fx = f0;
    // inverse-Hessian approximation, BFGS-updated
    let mut hinv = vec![vec![0.0; n]; n];
    for k in 0..n {
        hinv[k][k] = 1.0;
    }
    let mut g = numerical_gradient(eval, &x, h, evals);

    for _ in 0..30 {
        if *evals - start + 2 * n + 4 > budget {
            break;
        }
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < 1e-9 {
            break;
        }
        // direction d = -Hinv g
        let mut d = vec![0.0; n];
        for a in 0..n {
            for b in 0..n {
                d[a] -= hinv[a][b] * g[b];
            }
        }
        // backtracking line search (Armijo)
        let slope: f64 = d.iter().zip(&g).map(|(di, gi)| di * gi).sum();
        if slope >= 0.0 {
            // reset to steepest descent
            for a in 0..n {
                for b in 0..n {
                    hinv[a][b] = if a == b { 1.0 } else { 0.0 };
                }
                d[a] = -g[a];
            }
        }
        let slope: f64 = d.iter().zip(&g).map(|(di, gi)| di * gi).sum();
        let mut t = 1.0;
        let mut xn = x.clone();
        let mut fn_ = f64::INFINITY;
        for _ in 0..12 {
            for k in 0..n {
                xn[k] = x[k] + t * d[k];
            }
            fn_ = eval(&xn, evals);
            if fn_ <= fx + 1e-4 * t * slope {
                break;
            }
            t *= 0.5;
        }
        if !(fn_ < fx) {
            break;
        }
        let improvement = fx - fn_;
        let gn = numerical_gradient(eval, &xn, h, evals);
        // BFGS update of Hinv
        let s: Vec<f64> = (0..n).map(|k| xn[k] - x[k]).collect();
        let yv: Vec<f64> = (0..n).map(|k| gn[k] - g[k]).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            // Hinv = (I - rho s y') Hinv (I - rho y s') + rho s s'
            let mut hy = vec![0.0; n];
            for a in 0..n {
                for b in 0..n {
                    hy[a] += hinv[a][b] * yv[b];
                }
            }
            let yhy: f64 = yv.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for a in 0..n {
                for b in 0..n {
                    hinv[a][b] += -rho * (s[a] * hy[b] + hy[a] * s[b])
                        + rho * rho * yhy * s[a] * s[b]
                        + rho * s[a] * s[b];
                }
            }
        }
        x = xn;
        fx = fn_;
        g = gn;
        let step_norm: f64 = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        if step_norm < 1e-10 || improvement <= 0.0 {
            break;
        }
    }
    (x, fx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn finds_quadratic_minimum() {
        let res = minimize(
            |x| (x[0] - 1.5).powi(2) + 3.0 * (x[1] + 0.5).powi(2),
            &[0.0, 0.0],
            0.5,
            200,
            1e-12,
        );
        assert_relative_eq!(res.x[0], 1.5, epsilon = 1e-5);
        assert_relative_eq!(res.x[1], -0.5, epsilon = 1e-5);
        assert!(res.n_evals <= 200);
    }

    #[test]
    fn handles_rosenbrock_reasonably() {
        let res = minimize(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            0.5,
            400,
            1e-14,
        );
        assert!(res.fx < 1e-4, "fx = {}", res.fx);
    }

    #[test]
    fn respects_infinite_regions() {
        let res = minimize(
            |x| {
                if x[0] < 0.0 {
                    f64::INFINITY
                } else {
                    (x[0] - 2.0).powi(2)
                }
            },
            &[1.0],
            0.5,
            150,
            1e-12,
        );
        assert_relative_eq!(res.x[0], 2.0, epsilon = 1e-4);
    }
}
