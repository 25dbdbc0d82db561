//! Optimal transport between two distributions over the same vocabulary.
//!
//! Two solvers share one plan type: an exact transportation simplex for
//! small supports, and log-domain Sinkhorn which also yields dual
//! potentials. [`Solver`] dispatches between them and counts solves.

mod exact;
mod sinkhorn;

use std::io::Write;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::embedding::CostMatrix;
use crate::error::{Error, Result};

const MARGINAL_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    dim: usize,
    flows: Vec<f64>,
    distance: f64,
    duals: Option<(Vec<f64>, Vec<f64>)>,
    /// Regularized objective `<f, mu> + <g, nu>`; Sinkhorn only.
    entropic_value: Option<f64>,
    iterations: usize,
    violation: f64,
}

impl TransportPlan {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn flow(&self, i: usize, j: usize) -> f64 {
        self.flows[i * self.dim + j]
    }

    pub fn flows(&self) -> &[f64] {
        &self.flows
    }

    /// `sum_ij t_ij c_ij` for the returned flows.
    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn duals(&self) -> Option<(&[f64], &[f64])> {
        self.duals.as_ref().map(|(f, g)| (f.as_slice(), g.as_slice()))
    }

    pub fn entropic_value(&self) -> Option<f64> {
        self.entropic_value
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Largest absolute marginal error of the flows.
    pub fn violation(&self) -> f64 {
        self.violation
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.flows.chunks(self.dim).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for row in self.flows.chunks(self.dim) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        out
    }

    /// Writes `source,target,flow,cost,flow_x_cost` rows for every pair in
    /// `rows x cols`, labelled through `label`.
    pub fn write_csv<W: Write>(
        &self,
        cost: &CostMatrix,
        rows: &[usize],
        cols: &[usize],
        label: impl Fn(usize) -> String,
        mut out: W,
    ) -> Result<()> {
        writeln!(out, "source_token,target_token,flow,cost,flow_x_cost")?;
        for &i in rows {
            for &j in cols {
                let flow = self.flow(i, j);
                let c = cost.get(i, j);
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    csv_field(&label(i)),
                    csv_field(&label(j)),
                    flow,
                    c,
                    flow * c
                )?;
            }
        }
        Ok(())
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    /// Transportation simplex; falls back to Sinkhorn above `exact_cap`.
    #[default]
    Exact,
    Sinkhorn,
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(SolverKind::Exact),
            "sinkhorn" => Ok(SolverKind::Sinkhorn),
            other => Err(Error::Config(format!("unknown solver `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub kind: SolverKind,
    /// Absolute entropic weight. `None` means `0.1 * mean(C)`.
    pub epsilon: Option<f64>,
    /// Anneal epsilon geometrically from `max(C)` down to the target.
    pub epsilon_scaling: bool,
    pub tolerance: f64,
    pub max_iters: usize,
    /// Largest vocabulary solved exactly when `kind` is exact.
    pub exact_cap: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            kind: SolverKind::Exact,
            epsilon: None,
            epsilon_scaling: false,
            tolerance: 1e-6,
            max_iters: 2000,
            exact_cap: 64,
        }
    }
}

impl SolverConfig {
    pub fn sinkhorn() -> Self {
        SolverConfig {
            kind: SolverKind::Sinkhorn,
            ..SolverConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::Config("epsilon must be positive".into()));
            }
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        Ok(())
    }

    /// The absolute epsilon used on `cost`.
    pub fn epsilon_for(&self, cost: &CostMatrix) -> f64 {
        match self.epsilon {
            Some(eps) => eps,
            None => {
                let eps = 0.1 * cost.mean();
                if eps > 0.0 {
                    eps
                } else {
                    1.0
                }
            }
        }
    }
}

fn check_marginals(mu: &[f64], nu: &[f64], cost: &CostMatrix) -> Result<()> {
    let p = cost.dim();
    if mu.len() != p || nu.len() != p {
        return Err(Error::InfeasibleMarginals(format!(
            "marginals of length {} and {} for a {p}x{p} cost matrix",
            mu.len(),
            nu.len()
        )));
    }
    for (name, w) in [("source", mu), ("target", nu)] {
        if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InfeasibleMarginals(format!(
                "{name} has a negative or non-finite weight"
            )));
        }
        let total: f64 = w.iter().sum();
        if total == 0.0 {
            return Err(Error::InfeasibleMarginals(format!("{name} is the zero vector")));
        }
        if (total - 1.0).abs() > MARGINAL_SUM_TOL {
            return Err(Error::InfeasibleMarginals(format!("{name} sums to {total}")));
        }
    }
    Ok(())
}

fn marginal_violation(flows: &[f64], mu: &[f64], nu: &[f64]) -> f64 {
    let p = mu.len();
    let mut worst: f64 = 0.0;
    let mut cols = vec![0.0; p];
    for i in 0..p {
        let row = &flows[i * p..(i + 1) * p];
        worst = worst.max((row.iter().sum::<f64>() - mu[i]).abs());
        for (c, x) in cols.iter_mut().zip(row) {
            *c += x;
        }
    }
    cols.iter()
        .zip(nu)
        .fold(worst, |w, (c, n)| w.max((c - n).abs()))
}

fn transport_cost(flows: &[f64], cost: &CostMatrix) -> f64 {
    flows.iter().zip(cost.entries()).map(|(t, c)| t * c).sum()
}

/// Exact optimal plan. Deterministic: Bland's rule on a northwest-corner start.
pub fn solve_exact(mu: &[f64], nu: &[f64], cost: &CostMatrix) -> Result<TransportPlan> {
    check_marginals(mu, nu, cost)?;
    let p = cost.dim();
    let rows: Vec<usize> = (0..p).filter(|&i| mu[i] > 0.0).collect();
    let cols: Vec<usize> = (0..p).filter(|&j| nu[j] > 0.0).collect();
    let supply: Vec<f64> = rows.iter().map(|&i| mu[i]).collect();
    let demand: Vec<f64> = cols.iter().map(|&j| nu[j]).collect();
    let sub_cost: Vec<f64> = rows
        .iter()
        .flat_map(|&i| cols.iter().map(move |&j| (i, j)))
        .map(|(i, j)| cost.get(i, j))
        .collect();

    let sub_flows = exact::transportation_simplex(&supply, &demand, &sub_cost)?;
    let mut flows = vec![0.0; p * p];
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            flows[i * p + j] = sub_flows[a * cols.len() + b];
        }
    }
    let distance = transport_cost(&flows, cost);
    let violation = marginal_violation(&flows, mu, nu);
    Ok(TransportPlan {
        dim: p,
        flows,
        distance,
        duals: None,
        entropic_value: None,
        iterations: 0,
        violation,
    })
}

/// Entropic plan with dual potentials. On hitting `max_iters` the plan is
/// returned inside [`Error::NonConvergence`].
pub fn solve_sinkhorn(
    mu: &[f64],
    nu: &[f64],
    cost: &CostMatrix,
    config: &SolverConfig,
) -> Result<TransportPlan> {
    config.validate()?;
    check_marginals(mu, nu, cost)?;
    let schedule = sinkhorn::Schedule {
        epsilon: config.epsilon_for(cost),
        scaling: config.epsilon_scaling,
        tolerance: config.tolerance,
        max_iters: config.max_iters,
    };
    let run = sinkhorn::run(mu, nu, cost, &schedule);
    let dim = cost.dim();
    let distance = transport_cost(&run.flows, cost);
    let violation = marginal_violation(&run.flows, mu, nu);
    let entropic_value = mu.iter().zip(&run.f).map(|(m, f)| m * f).sum::<f64>()
        + nu.iter().zip(&run.g).map(|(n, g)| n * g).sum::<f64>();
    debug_assert!(run.epsilon > 0.0);
    let plan = TransportPlan {
        dim,
        flows: run.flows,
        distance,
        duals: Some((run.f, run.g)),
        entropic_value: Some(entropic_value),
        iterations: run.iterations,
        violation,
    };
    if run.converged {
        Ok(plan)
    } else {
        Err(Error::NonConvergence {
            iterations: run.iterations,
            violation: run.violation,
            plan: Box::new(plan),
        })
    }
}

/// Solves with the configured method.
pub fn solve(
    mu: &[f64],
    nu: &[f64],
    cost: &CostMatrix,
    config: &SolverConfig,
) -> Result<TransportPlan> {
    match config.kind {
        SolverKind::Exact if cost.dim() <= config.exact_cap => solve_exact(mu, nu, cost),
        _ => solve_sinkhorn(mu, nu, cost, config),
    }
}

pub fn wasserstein(mu: &[f64], nu: &[f64], cost: &CostMatrix, config: &SolverConfig) -> Result<f64> {
    solve(mu, nu, cost, config).map(|plan| plan.distance())
}

/// `1 - d_W(doc, summary)`. Not clamped; large costs give negative scores.
pub fn coverage(
    doc: &[f64],
    summary: &[f64],
    cost: &CostMatrix,
    config: &SolverConfig,
) -> Result<f64> {
    wasserstein(doc, summary, cost, config).map(|d| 1.0 - d)
}

/// Gradient of the regularized value with respect to the target marginal:
/// the target potential shifted to zero mean.
pub fn grad_target_marginal(plan: &TransportPlan) -> Result<Vec<f64>> {
    let (_, g) = plan.duals().ok_or(Error::MissingDuals)?;
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    Ok(g.iter().map(|x| x - mean).collect())
}

/// Configured solver plus a counter of completed solves.
#[derive(Debug)]
pub struct Solver {
    config: SolverConfig,
    solves: AtomicUsize,
}

impl Solver {
    pub fn new(config: SolverConfig) -> Result<Self> {
        config.validate()?;
        Ok(Solver {
            config,
            solves: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn solve_count(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    pub fn solve(&self, mu: &[f64], nu: &[f64], cost: &CostMatrix) -> Result<TransportPlan> {
        self.solves.fetch_add(1, Ordering::Relaxed);
        solve(mu, nu, cost, &self.config)
    }

    /// Always Sinkhorn, regardless of `kind`; for callers that need duals.
    pub fn solve_with_duals(
        &self,
        mu: &[f64],
        nu: &[f64],
        cost: &CostMatrix,
    ) -> Result<TransportPlan> {
        self.solves.fetch_add(1, Ordering::Relaxed);
        solve_sinkhorn(mu, nu, cost, &self.config)
    }

    pub fn coverage(&self, doc: &[f64], summary: &[f64], cost: &CostMatrix) -> Result<f64> {
        self.solve(doc, summary, cost).map(|p| 1.0 - p.distance())
    }
}
