//! Relaxed binary selection optimized by gradient descent.
//!
//! A real logit `w_i` per sentence is turned into a hard 0/1 sample through
//! a binary concrete (logistic-noise sigmoid) relaxation. The forward pass
//! uses the hard sample; the backward pass differentiates the soft sample
//! (straight-through). The loss is the transport cost between document and
//! sampled summary plus a budget penalty.
//!
//! The transport gradient with respect to the summary distribution is the
//! centered target potential of the Sinkhorn plan. Through the mixture
//! `TF_S = sum_i b_i TF_i / sum_i b_i` it becomes
//! `dL/db_i = <g, TF_i - TF_S> / sum_i b_i`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::SelectionProblem;
use crate::ot::{grad_target_marginal, Solver, TransportPlan};
use crate::text::ExtractionVector;

pub const RNG_ALGORITHM: &str = "ChaCha8Rng";

/// Loss substituted when a sample selects no eligible sentence, on top of
/// the budget penalty.
pub const EMPTY_SAMPLE_LOSS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    /// `alpha * |B - sum b|`
    #[default]
    Absolute,
    /// `alpha * (B - sum b)^2`
    Squared,
}

impl Penalty {
    fn value(self, alpha: f64, budget: f64, selected: f64) -> f64 {
        match self {
            Penalty::Absolute => alpha * (budget - selected).abs(),
            Penalty::Squared => alpha * (budget - selected).powi(2),
        }
    }

    /// Derivative with respect to `sum b`.
    fn slope(self, alpha: f64, budget: f64, selected: f64) -> f64 {
        match self {
            Penalty::Absolute => {
                if selected > budget {
                    alpha
                } else if selected < budget {
                    -alpha
                } else {
                    0.0
                }
            }
            Penalty::Squared => 2.0 * alpha * (selected - budget),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipConfig {
    pub iters: usize,
    pub alpha: f64,
    pub lr: f64,
    pub tau: f64,
    pub seed: u64,
    pub penalty: Penalty,
}

impl Default for BipConfig {
    fn default() -> Self {
        BipConfig {
            iters: 200,
            alpha: 1.0,
            lr: 0.1,
            tau: 1.0,
            seed: 0,
            penalty: Penalty::Absolute,
        }
    }
}

impl BipConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::Config("alpha must be nonnegative".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipState {
    pub w: Vec<f64>,
    pub pr: Vec<f64>,
    pub b: Vec<bool>,
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipOutcome {
    pub extraction: ExtractionVector,
    pub state: BipState,
    /// `sigmoid(w)` used to rank sentences for the final pick.
    pub final_scores: Vec<f64>,
    /// OT solves issued; one per iteration unless the sample was empty.
    pub solves: usize,
    pub empty_samples: usize,
    pub rng: String,
}

impl BipOutcome {
    pub fn write_loss_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iteration,loss")?;
        for (t, loss) in self.state.loss_history.iter().enumerate() {
            writeln!(out, "{t},{loss}")?;
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Standard logistic draw, i.e. the difference of two Gumbel(0, 1) draws.
pub fn logistic_noise<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>().clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
    u.ln() - (-u).ln_1p()
}

/// Binary concrete relaxation for a fixed noise draw. Returns
/// `(sample, soft)`; `sample` is `soft` rounded when `hard` is set.
pub fn relaxed_bernoulli(pr: f64, tau: f64, noise: f64, hard: bool) -> (f64, f64) {
    let logit = pr.ln() - (-pr).ln_1p();
    let soft = sigmoid((logit + noise) / tau);
    let sample = if hard {
        if soft >= 0.5 {
            1.0
        } else {
            0.0
        }
    } else {
        soft
    };
    (sample, soft)
}

pub fn gumbel_binary_sample<R: Rng + ?Sized>(
    pr: f64,
    tau: f64,
    hard: bool,
    rng: &mut R,
) -> (f64, f64) {
    relaxed_bernoulli(pr, tau, logistic_noise(rng), hard)
}

/// Loss of one hard selection: transport cost plus budget penalty. A
/// selection with no eligible sentence costs `EMPTY_SAMPLE_LOSS + penalty`.
pub fn bip_loss(
    problem: &SelectionProblem<'_>,
    b: &[bool],
    budget: usize,
    alpha: f64,
    penalty: Penalty,
    solver: &Solver,
) -> Result<f64> {
    let selected: Vec<usize> = problem
        .eligible()
        .iter()
        .copied()
        .filter(|&i| b[i])
        .collect();
    let pen = penalty.value(alpha, budget as f64, b.iter().filter(|&&x| x).count() as f64);
    if selected.is_empty() {
        return Ok(EMPTY_SAMPLE_LOSS + pen);
    }
    let summary = problem.summary_dist(&selected)?;
    let plan = solver.solve(problem.doc_dist(), &summary, problem.cost())?;
    Ok(plan.distance() + pen)
}

/// `dL/db_i` of the transport term for every eligible sentence, given the
/// plan between the document and the mixture `summary`.
fn transport_grad_b(
    problem: &SelectionProblem<'_>,
    plan: &TransportPlan,
    summary: &[f64],
    mass: f64,
) -> Result<Vec<f64>> {
    let g = grad_target_marginal(plan)?;
    let at_summary: f64 = g.iter().zip(summary).map(|(a, b)| a * b).sum();
    let mut out = vec![0.0; problem.sentence_count()];
    for &i in problem.eligible() {
        let at_sentence: f64 = problem.dists()[i].iter().map(|(k, w)| g[k] * w).sum();
        out[i] = (at_sentence - at_summary) / mass;
    }
    Ok(out)
}

fn solve_keep_unconverged(
    solver: &Solver,
    problem: &SelectionProblem<'_>,
    summary: &[f64],
) -> Result<TransportPlan> {
    match solver.solve_with_duals(problem.doc_dist(), summary, problem.cost()) {
        Ok(plan) => Ok(plan),
        Err(Error::NonConvergence {
            plan, violation, ..
        }) => {
            log::debug!("using unconverged sinkhorn plan (violation {violation:e})");
            Ok(*plan)
        }
        Err(e) => Err(e),
    }
}

fn weighted_summary(problem: &SelectionProblem<'_>, weights: &[f64]) -> (Vec<f64>, f64) {
    let mut out = vec![0.0; problem.cost().dim()];
    let mut mass = 0.0;
    for &i in problem.eligible() {
        if weights[i] == 0.0 {
            continue;
        }
        mass += weights[i];
        for (k, w) in problem.dists()[i].iter() {
            out[k] += weights[i] * w;
        }
    }
    out.iter_mut().for_each(|x| *x /= mass);
    (out, mass)
}

/// Regularized transport value between the document and the soft mixture
/// with weights `sigmoid(w_i / tau)`, and its gradient with respect to `w`.
/// No sampling; this is the differentiable core of the optimizer.
pub fn relaxed_objective(
    problem: &SelectionProblem<'_>,
    w: &[f64],
    tau: f64,
    solver: &Solver,
) -> Result<(f64, Vec<f64>)> {
    let soft: Vec<f64> = w.iter().map(|x| sigmoid(x / tau)).collect();
    let mut weights = vec![0.0; w.len()];
    for &i in problem.eligible() {
        weights[i] = soft[i];
    }
    let (summary, mass) = weighted_summary(problem, &weights);
    let plan = solver.solve_with_duals(problem.doc_dist(), &summary, problem.cost())?;
    let db = transport_grad_b(problem, &plan, &summary, mass)?;
    let grad = db
        .iter()
        .zip(&soft)
        .map(|(d, s)| d * s * (1.0 - s) / tau)
        .collect();
    let value = plan.entropic_value().ok_or(Error::MissingDuals)?;
    Ok((value, grad))
}

/// Runs `config.iters` straight-through descent steps and returns the top
/// `min(budget, eligible)` sentences by `sigmoid(w)`. The transport solves
/// always use Sinkhorn, whatever solver kind is configured.
pub fn bip_optimize(
    problem: &SelectionProblem<'_>,
    budget: usize,
    config: &BipConfig,
    solver: &Solver,
) -> Result<BipOutcome> {
    config.validate()?;
    if budget == 0 {
        return Err(Error::Config("budget must be at least 1".into()));
    }
    if problem.eligible().is_empty() {
        return Err(Error::EmptyDocument);
    }
    let n = problem.sentence_count();
    let eligible = problem.eligible();
    let budget_f = budget as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let start = solver.solve_count();

    let mut w = vec![0.0; n];
    let mut b = vec![false; n];
    let mut soft = vec![0.0; n];
    let mut loss_history = Vec::with_capacity(config.iters);
    let mut empty_samples = 0;

    for _ in 0..config.iters {
        b.iter_mut().for_each(|x| *x = false);
        for &i in eligible {
            let (hard, s) = gumbel_binary_sample(sigmoid(w[i]), config.tau, true, &mut rng);
            b[i] = hard == 1.0;
            soft[i] = s;
        }
        let count = b.iter().filter(|&&x| x).count() as f64;
        let pen = config.penalty.value(config.alpha, budget_f, count);
        let slope = config.penalty.slope(config.alpha, budget_f, count);

        let (loss, db) = if count == 0.0 {
            empty_samples += 1;
            (EMPTY_SAMPLE_LOSS + pen, vec![0.0; n])
        } else {
            let weights: Vec<f64> = b.iter().map(|&x| if x { 1.0 } else { 0.0 }).collect();
            let (summary, mass) = weighted_summary(problem, &weights);
            let plan = solve_keep_unconverged(solver, problem, &summary)?;
            let db = transport_grad_b(problem, &plan, &summary, mass)?;
            (plan.distance() + pen, db)
        };
        loss_history.push(loss);

        for &i in eligible {
            let dsoft = soft[i] * (1.0 - soft[i]) / config.tau;
            w[i] -= config.lr * (db[i] + slope) * dsoft;
        }
    }

    let final_scores: Vec<f64> = w.iter().map(|&x| sigmoid(x)).collect();
    let mut order: Vec<usize> = eligible.to_vec();
    order.sort_by(|&a, &b| {
        final_scores[b]
            .total_cmp(&final_scores[a])
            .then(a.cmp(&b))
    });
    order.truncate(budget.min(eligible.len()));
    order.sort_unstable();

    Ok(BipOutcome {
        extraction: ExtractionVector::from_indices(n, &order),
        state: BipState {
            pr: final_scores.clone(),
            w,
            b,
            loss_history,
        },
        final_scores,
        solves: solver.solve_count() - start,
        empty_samples,
        rng: RNG_ALGORITHM.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{CostMatrix, Metric};
    use crate::ot::SolverConfig;
    use crate::text::{sentence_distribution, Distribution};

    fn swap_cost() -> CostMatrix {
        CostMatrix::from_entries(2, vec![0.0, 1.0, 1.0, 0.0], Metric::Euclidean).unwrap()
    }

    #[test]
    fn symmetric_point_is_half() {
        for tau in [0.1, 1.0, 7.0] {
            assert_eq!(relaxed_bernoulli(0.5, tau, 0.0, false), (0.5, 0.5));
        }
    }

    #[test]
    fn zero_temperature_limit_is_hard() {
        let (hard, _) = relaxed_bernoulli(0.3, 1.0, 0.4, true);
        let (soft, _) = relaxed_bernoulli(0.3, 1e-6, 0.4, false);
        assert_eq!(soft, hard);
    }

    #[test]
    fn logistic_noise_is_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws: Vec<f64> = (0..20_000).map(|_| logistic_noise(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / draws.len() as f64;
        assert!(mean.abs() < 0.05, "{mean}");
        // logistic variance is pi^2 / 3
        assert!((var - std::f64::consts::PI.powi(2) / 3.0).abs() < 0.1, "{var}");
    }

    #[test]
    fn confident_probability_samples_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ones = (0..1000)
            .filter(|_| gumbel_binary_sample(0.999, 0.1, true, &mut rng).0 == 1.0)
            .count();
        assert!(ones >= 990, "{ones}");
    }

    #[test]
    fn bip_loss_examples() {
        let dists = vec![sentence_distribution(&[0], 2), sentence_distribution(&[1], 2)];
        let cost = swap_cost();
        let problem = SelectionProblem::new(&dists, &cost).unwrap();
        let exact = Solver::new(SolverConfig::default()).unwrap();
        // whole document, B = n
        let l = bip_loss(&problem, &[true, true], 2, 1.0, Penalty::Absolute, &exact).unwrap();
        assert_eq!(l, 0.0);
        // exactly B selected: pure transport term
        let l = bip_loss(&problem, &[true, false], 1, 1.0, Penalty::Absolute, &exact).unwrap();
        assert_eq!(l, 0.5);
        let l = bip_loss(&problem, &[true, true], 1, 2.0, Penalty::Squared, &exact).unwrap();
        assert_eq!(l, 2.0);
        let l = bip_loss(&problem, &[false, false], 1, 1.0, Penalty::Absolute, &exact).unwrap();
        assert_eq!(l, EMPTY_SAMPLE_LOSS + 1.0);
    }

    #[test]
    fn quarter_instance_loss() {
        // TF_D = (0.5, 0.5); sentence 0 has distribution (0.25, 0.75)
        let dists = vec![
            sentence_distribution(&[0, 1, 1, 1], 2),
            sentence_distribution(&[0, 0, 0, 1], 2),
        ];
        let cost = swap_cost();
        let problem = SelectionProblem::new(&dists, &cost).unwrap();
        let exact = Solver::new(SolverConfig::default()).unwrap();
        let l = bip_loss(&problem, &[true, false], 1, 1.0, Penalty::Absolute, &exact).unwrap();
        assert_eq!(l, 0.25);
    }

    #[test]
    fn picks_min_budget_eligible() {
        let dists = vec![
            sentence_distribution(&[0], 3),
            Distribution::zero(3),
            sentence_distribution(&[1, 2], 3),
        ];
        let cost = CostMatrix::from_entries(
            3,
            vec![0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0],
            Metric::Euclidean,
        )
        .unwrap();
        let problem = SelectionProblem::new(&dists, &cost).unwrap();
        let solver = Solver::new(SolverConfig::sinkhorn()).unwrap();
        for budget in 1..=4 {
            let out = bip_optimize(&problem, budget, &BipConfig::default(), &solver).unwrap();
            assert_eq!(out.extraction.count(), budget.min(2));
            assert!(!out.extraction.is_marked(1));
            assert_eq!(out.state.loss_history.len(), 200);
            assert_eq!(out.solves + out.empty_samples, 200);
        }
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let dists: Vec<Distribution> = [vec![0, 1], vec![1, 2], vec![2, 0, 0], vec![1]]
            .iter()
            .map(|s| sentence_distribution(s, 3))
            .collect();
        let cost = CostMatrix::from_entries(
            3,
            vec![0.0, 0.7, 1.3, 0.7, 0.0, 0.9, 1.3, 0.9, 0.0],
            Metric::Euclidean,
        )
        .unwrap();
        let problem = SelectionProblem::new(&dists, &cost).unwrap();
        let config = BipConfig {
            seed: 42,
            ..BipConfig::default()
        };
        let run = || {
            let solver = Solver::new(SolverConfig::sinkhorn()).unwrap();
            bip_optimize(&problem, 2, &config, &solver).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.extraction, b.extraction);
        let bits = |o: &BipOutcome| -> Vec<u64> {
            o.state.loss_history.iter().map(|x| x.to_bits()).collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn rejects_bad_config() {
        let dists = vec![sentence_distribution(&[0], 1)];
        let cost = CostMatrix::from_entries(1, vec![0.0], Metric::Euclidean).unwrap();
        let problem = SelectionProblem::new(&dists, &cost).unwrap();
        let solver = Solver::new(SolverConfig::sinkhorn()).unwrap();
        for config in [
            BipConfig {
                iters: 0,
                ..BipConfig::default()
            },
            BipConfig {
                lr: 0.0,
                ..BipConfig::default()
            },
            BipConfig {
                tau: -1.0,
                ..BipConfig::default()
            },
            BipConfig {
                alpha: -0.5,
                ..BipConfig::default()
            },
        ] {
            assert!(matches!(
                bip_optimize(&problem, 1, &config, &solver),
                Err(Error::Config(_))
            ));
        }
    }
}
