//! Beam search over sentence subsets.
//!
//! Each round extends every kept candidate by one eligible sentence, merges
//! the successors as sets, scores them by coverage and keeps the best `width`.
//! Rounds stop once candidates hold `budget` sentences.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::SelectionProblem;
use crate::ot::Solver;
use crate::text::ExtractionVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub budget: usize,
    pub width: usize,
    /// Return the best of the last beam only, instead of the best candidate
    /// of any size seen during the search.
    pub final_beam_only: bool,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            budget: 3,
            width: 5,
            final_beam_only: false,
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Config("budget must be at least 1".into()));
        }
        if self.width == 0 {
            return Err(Error::Config("beam width must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Sorted sentence indices.
    pub selected: Vec<usize>,
    pub score: f64,
    /// Transport distance in units of `TIE_RESOLUTION * max cost`, rounded.
    /// Candidates on the same level are tied.
    #[serde(skip)]
    pub level: i64,
}

/// Distances closer than this fraction of the largest cost count as equal,
/// so rounding noise cannot reorder tied subsets.
pub const TIE_RESOLUTION: f64 = 1.0 / (1u64 << 36) as f64;

impl Candidate {
    pub fn new(selected: Vec<usize>, score: f64, max_cost: f64) -> Self {
        let level = if max_cost > 0.0 {
            ((1.0 - score) / (max_cost * TIE_RESOLUTION)).round() as i64
        } else {
            0
        };
        Candidate {
            selected,
            score,
            level,
        }
    }
}

/// Lower distance level first, then the lexicographically smaller index set.
pub fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    a.level
        .cmp(&b.level)
        .then_with(|| a.selected.cmp(&b.selected))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamRound {
    pub size: usize,
    pub scored: usize,
    pub kept: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamOutcome {
    pub extraction: ExtractionVector,
    pub best: Candidate,
    pub trace: Vec<BeamRound>,
    /// OT solves issued through the solver during this search.
    pub solves: usize,
}

/// One successor per eligible sentence not already selected.
pub fn generate_successors(selected: &[usize], eligible: &[usize]) -> Vec<Vec<usize>> {
    eligible
        .iter()
        .filter(|i| !selected.contains(i))
        .map(|&i| {
            let mut next = selected.to_vec();
            let at = next.partition_point(|&x| x < i);
            next.insert(at, i);
            next
        })
        .collect()
}

pub fn beam_search(
    problem: &SelectionProblem<'_>,
    config: &BeamConfig,
    solver: &Solver,
) -> Result<BeamOutcome> {
    config.validate()?;
    if problem.eligible().is_empty() {
        return Err(Error::EmptyDocument);
    }
    let start = solver.solve_count();
    let max_cost = problem.cost().max();

    let mut memo: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut beams: Vec<Vec<usize>> = vec![Vec::new()];
    let mut trace = Vec::new();
    let mut best: Option<Candidate> = None;

    while beams.iter().any(|b| b.len() < config.budget) {
        let pool: BTreeSet<Vec<usize>> = beams
            .iter()
            .filter(|b| b.len() < config.budget)
            .flat_map(|b| generate_successors(b, problem.eligible()))
            .collect();
        if pool.is_empty() {
            break;
        }

        let fresh: Vec<Vec<usize>> = pool
            .iter()
            .filter(|s| !memo.contains_key(*s))
            .cloned()
            .collect();
        let scores = fresh
            .par_iter()
            .map(|s| problem.coverage(s, solver))
            .collect::<Result<Vec<f64>>>()?;
        memo.extend(fresh.into_iter().zip(scores));

        let mut ranked: Vec<Candidate> = pool
            .into_iter()
            .map(|selected| {
                let score = memo[&selected];
                Candidate::new(selected, score, max_cost)
            })
            .collect();
        ranked.sort_by(rank);
        let scored = ranked.len();
        ranked.truncate(config.width);

        if let Some(top) = ranked.first() {
            if best.as_ref().is_none_or(|b| rank(top, b) == Ordering::Less) {
                best = Some(top.clone());
            }
        }
        beams = ranked.iter().map(|c| c.selected.clone()).collect();
        trace.push(BeamRound {
            size: ranked.first().map_or(0, |c| c.selected.len()),
            scored,
            kept: ranked,
        });
    }

    let best = if config.final_beam_only {
        trace.last().and_then(|r| r.kept.first()).cloned()
    } else {
        best
    }
    .expect("at least one round runs when a sentence is eligible");

    Ok(BeamOutcome {
        extraction: ExtractionVector::from_indices(problem.sentence_count(), &best.selected),
        best,
        trace,
        solves: solver.solve_count() - start,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{CostMatrix, Metric};
    use crate::ot::SolverConfig;
    use crate::text::{sentence_distribution, Distribution};

    #[test]
    fn first_expansion_is_all_singletons() {
        assert_eq!(
            generate_successors(&[], &[0, 1, 2]),
            vec![vec![0], vec![1], vec![2]]
        );
    }

    #[test]
    fn selected_indices_are_excluded() {
        assert_eq!(generate_successors(&[0], &[0, 1, 2]), vec![vec![0, 1], vec![0, 2]]);
        assert_eq!(generate_successors(&[2], &[0, 1, 2]), vec![vec![0, 2], vec![1, 2]]);
    }

    #[test]
    fn union_merges_insertion_orders() {
        let pool: BTreeSet<Vec<usize>> = [vec![0], vec![1]]
            .iter()
            .flat_map(|b| generate_successors(b, &[0, 1, 2]))
            .collect();
        assert_eq!(
            pool.into_iter().collect::<Vec<_>>(),
            vec![vec![0, 1], vec![0, 2], vec![1, 2]]
        );
    }

    #[test]
    fn ties_prefer_smaller_index_sets() {
        let a = Candidate::new(vec![0, 3], 0.5, 1.0);
        let b = Candidate::new(vec![1], 0.5, 1.0);
        let c = Candidate::new(vec![2], 0.7, 1.0);
        let mut v = vec![b.clone(), a.clone(), c.clone()];
        v.sort_by(rank);
        assert_eq!(v, vec![c, a, b]);
    }

    #[test]
    fn rounding_noise_is_a_tie() {
        let a = Candidate::new(vec![1], 0.8488823801885849, 2.0);
        let b = Candidate::new(vec![0], 0.8488823801885847, 2.0);
        assert_eq!(a.level, b.level);
        assert_eq!(rank(&b, &a), Ordering::Less);
        let c = Candidate::new(vec![2], 0.8488823801, 2.0);
        assert_eq!(rank(&a, &c), Ordering::Less);
    }

    fn line_cost(p: usize) -> CostMatrix {
        let entries = (0..p * p)
            .map(|k| ((k / p) as f64 - (k % p) as f64).abs() * 0.3)
            .collect();
        CostMatrix::from_entries(p, entries, Metric::Euclidean).unwrap()
    }

    #[test]
    fn single_sentence_is_forced() {
        let dists = vec![sentence_distribution(&[0, 1], 2)];
        let cost = line_cost(2);
        let problem = SelectionProblem::new(&dists, &cost).unwrap();
        let solver = Solver::new(SolverConfig::default()).unwrap();
        let out = beam_search(
            &problem,
            &BeamConfig {
                budget: 1,
                width: 5,
                final_beam_only: false,
            },
            &solver,
        )
        .unwrap();
        assert_eq!(out.extraction.marks(), &[true]);
        assert_eq!(out.best.score, 1.0);
        assert_eq!(out.solves, 1);
    }

    #[test]
    fn zero_vector_sentences_never_selected() {
        let dists = vec![
            Distribution::zero(3),
            sentence_distribution(&[0, 1], 3),
            sentence_distribution(&[2], 3),
        ];
        let cost = line_cost(3);
        let problem = SelectionProblem::new(&dists, &cost).unwrap();
        let solver = Solver::new(SolverConfig::default()).unwrap();
        let out = beam_search(
            &problem,
            &BeamConfig {
                budget: 3,
                width: 10,
                final_beam_only: false,
            },
            &solver,
        )
        .unwrap();
        assert!(!out.extraction.is_marked(0));
        assert_eq!(out.best.selected, vec![1, 2]);
        for round in &out.trace {
            assert!(round.kept.iter().all(|c| !c.selected.contains(&0)));
        }
    }

    #[test]
    fn stops_at_budget_and_records_rounds() {
        let dists: Vec<Distribution> = (0..5).map(|i| sentence_distribution(&[i], 5)).collect();
        let cost = line_cost(5);
        let problem = SelectionProblem::new(&dists, &cost).unwrap();
        let solver = Solver::new(SolverConfig::default()).unwrap();
        let config = BeamConfig {
            budget: 2,
            width: 2,
            final_beam_only: true,
        };
        let out = beam_search(&problem, &config, &solver).unwrap();
        assert_eq!(out.trace.len(), 2);
        assert_eq!(out.trace[0].size, 1);
        assert_eq!(out.trace[1].size, 2);
        assert!(out.trace.iter().all(|r| r.kept.len() <= 2));
        assert_eq!(out.extraction.count(), 2);
        assert!(out.solves <= 2 * 2 * 5 + 5);
    }

    #[test]
    fn rejects_bad_config() {
        let dists = vec![sentence_distribution(&[0], 1)];
        let cost = line_cost(1);
        let problem = SelectionProblem::new(&dists, &cost).unwrap();
        let solver = Solver::new(SolverConfig::default()).unwrap();
        for (budget, width) in [(0, 1), (1, 0)] {
            let config = BeamConfig {
                budget,
                width,
                final_beam_only: false,
            };
            assert!(matches!(
                beam_search(&problem, &config, &solver),
                Err(Error::Config(_))
            ));
        }
    }
}
