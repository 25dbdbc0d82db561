//! Log-domain Sinkhorn iterations for entropically regularized transport.
//!
//! The regularizer is `eps * KL(T | mu x nu)`, so the potentials are soft
//! c-transforms of each other and stay finite on zero-mass atoms:
//!
//! ```text
//! f_i = -eps * log sum_j nu_j exp((g_j - C_ij) / eps)
//! g_j = -eps * log sum_i mu_i exp((f_i - C_ij) / eps)
//! T_ij = mu_i nu_j exp((f_i + g_j - C_ij) / eps)
//! ```
//!
//! At the fixed point the regularized value is `<f, mu> + <g, nu>` and its
//! gradient with respect to `nu` is `g`.

use crate::embedding::CostMatrix;

pub(crate) struct SinkhornRun {
    pub flows: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub epsilon: f64,
    pub iterations: usize,
    pub violation: f64,
    pub converged: bool,
}

pub(crate) struct Schedule {
    pub epsilon: f64,
    pub scaling: bool,
    pub tolerance: f64,
    pub max_iters: usize,
}

const SCALING_FACTOR: f64 = 0.5;

pub(crate) fn run(mu: &[f64], nu: &[f64], cost: &CostMatrix, schedule: &Schedule) -> SinkhornRun {
    let p = mu.len();
    let log_mu: Vec<f64> = mu.iter().map(|&x| x.ln()).collect();
    let log_nu: Vec<f64> = nu.iter().map(|&x| x.ln()).collect();
    let mut f = vec![0.0; p];
    let mut g = vec![0.0; p];

    let mut stages = Vec::new();
    if schedule.scaling {
        let mut eps = cost.max().max(schedule.epsilon);
        while eps > schedule.epsilon {
            stages.push(eps);
            eps *= SCALING_FACTOR;
        }
    }
    stages.push(schedule.epsilon);

    let mut iterations = 0;
    let mut violation = f64::INFINITY;
    let last = stages.len() - 1;
    for (stage, &eps) in stages.iter().enumerate() {
        let stage_tol = if stage == last {
            schedule.tolerance
        } else {
            schedule.tolerance.max(1e-4)
        };
        // g is always refreshed first so that the plan (f, g) is column-exact.
        c_transform_cols(&f, &log_mu, cost, eps, &mut g);
        iterations += 1;
        let mut next_f = vec![0.0; p];
        loop {
            c_transform_rows(&g, &log_nu, cost, eps, &mut next_f);
            violation = row_violation(mu, &f, &next_f, eps);
            if violation < stage_tol || iterations >= schedule.max_iters {
                break;
            }
            std::mem::swap(&mut f, &mut next_f);
            c_transform_cols(&f, &log_mu, cost, eps, &mut g);
            iterations += 1;
        }
        if iterations >= schedule.max_iters && violation >= stage_tol {
            break;
        }
    }

    let eps = schedule.epsilon;
    let mut flows = vec![0.0; p * p];
    for i in 0..p {
        if mu[i] <= 0.0 {
            continue;
        }
        for j in 0..p {
            if nu[j] <= 0.0 {
                continue;
            }
            flows[i * p + j] = (log_mu[i] + log_nu[j] + (f[i] + g[j] - cost.get(i, j)) / eps).exp();
        }
    }
    let converged = violation < schedule.tolerance;
    SinkhornRun {
        flows,
        f,
        g,
        epsilon: eps,
        iterations,
        violation,
        converged,
    }
}

/// `out_i = -eps * LSE_j(log_nu_j + (g_j - C_ij) / eps)` over `nu_j > 0`.
fn c_transform_rows(g: &[f64], log_nu: &[f64], cost: &CostMatrix, eps: f64, out: &mut [f64]) {
    let p = g.len();
    let mut terms = Vec::with_capacity(p);
    for (i, slot) in out.iter_mut().enumerate() {
        terms.clear();
        let row = cost.row(i);
        for j in 0..p {
            if log_nu[j].is_finite() {
                terms.push(log_nu[j] + (g[j] - row[j]) / eps);
            }
        }
        *slot = -eps * log_sum_exp(&terms);
    }
}

fn c_transform_cols(f: &[f64], log_mu: &[f64], cost: &CostMatrix, eps: f64, out: &mut [f64]) {
    let p = f.len();
    let mut terms = Vec::with_capacity(p);
    for (j, slot) in out.iter_mut().enumerate() {
        terms.clear();
        for i in 0..p {
            if log_mu[i].is_finite() {
                terms.push(log_mu[i] + (f[i] - cost.get(i, j)) / eps);
            }
        }
        *slot = -eps * log_sum_exp(&terms);
    }
}

/// Row-sum error of the plan built from `(f, g)`, where `next_f` is the
/// c-transform of `g`: row `i` carries `mu_i * exp((f_i - next_f_i) / eps)`.
fn row_violation(mu: &[f64], f: &[f64], next_f: &[f64], eps: f64) -> f64 {
    mu.iter()
        .zip(f.iter().zip(next_f))
        .filter(|(&m, _)| m > 0.0)
        .map(|(&m, (&a, &b))| (m * (((a - b) / eps).exp() - 1.0)).abs())
        .fold(0.0, f64::max)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
