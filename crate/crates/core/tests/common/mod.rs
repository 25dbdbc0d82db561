//! Independent oracles and random instance generators shared by the
//! integration tests.
#![allow(dead_code)]

use otextsum::embedding::{cost_matrix, CostMatrix, EmbeddingTable, Metric};
use otextsum::objective::SelectionProblem;
use otextsum::ot::{Solver, SolverConfig};
use otextsum::text::{tokenize, Distribution, RawDocument, TokenizeOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random probability vector; each entry is zeroed with probability
/// `zero_prob`, keeping at least one positive entry.
pub fn random_simplex(rng: &mut ChaCha8Rng, p: usize, zero_prob: f64) -> Vec<f64> {
    let mut w: Vec<f64> = (0..p)
        .map(|_| {
            if rng.random::<f64>() < zero_prob {
                0.0
            } else {
                rng.random_range(0.05..1.0)
            }
        })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        w[rng.random_range(0..p)] = 1.0;
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

pub fn random_points(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

/// Pairwise Euclidean distances, computed here rather than by the library.
pub fn euclidean_cost(points: &[Vec<f64>]) -> CostMatrix {
    let p = points.len();
    let mut entries = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            if i != j {
                entries[i * p + j] = points[i]
                    .iter()
                    .zip(&points[j])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
            }
        }
    }
    CostMatrix::from_entries(p, entries, Metric::Euclidean).unwrap()
}

/// Minimum transport cost over every basic feasible solution.
///
/// Basic solutions are spanning trees of the bipartite support graph whose
/// leaf-peeling flows are nonnegative. Trees are generated in Pruefer order
/// (always peel the smallest-index leaf), so each tree is produced once.
/// The search starts from the least-cost greedy vertex and cuts branches
/// whose cost plus a dual lower bound cannot beat the incumbent; every other
/// tree is visited.
pub fn vertex_oracle(mu: &[f64], nu: &[f64], cost: &CostMatrix) -> f64 {
    let rows: Vec<usize> = (0..mu.len()).filter(|&i| mu[i] > 0.0).collect();
    let cols: Vec<usize> = (0..nu.len()).filter(|&j| nu[j] > 0.0).collect();
    let m = rows.len();
    let mut residual: Vec<f64> = rows.iter().map(|&i| mu[i]).collect();
    residual.extend(cols.iter().map(|&j| nu[j]));
    let total = residual.len();
    let mut table = vec![0.0; total * total];
    for a in 0..total {
        for b in 0..total {
            if (a < m) != (b < m) {
                let (r, c) = if a < m { (a, b) } else { (b, a) };
                table[a * total + b] = cost.get(rows[r], cols[c - m]);
            }
        }
    }
    let mut search = Peel {
        m,
        total,
        cost: table,
        best: f64::INFINITY,
        visited: 0,
    };
    search.best = search.greedy(&residual);
    let alive = vec![true; total];
    let obliged = vec![false; total];
    search.go(&mut residual, alive, obliged, 0.0);
    search.best
}

struct Peel {
    m: usize,
    total: usize,
    cost: Vec<f64>,
    best: f64,
    visited: usize,
}

const MASS_TOL: f64 = 1e-12;

impl Peel {
    fn is_row(&self, x: usize) -> bool {
        x < self.m
    }

    fn c(&self, a: usize, b: usize) -> f64 {
        self.cost[a * self.total + b]
    }

    /// Least-cost rule: repeatedly saturate the cheapest open cell. The
    /// result is a vertex, so its cost bounds the optimum from above.
    fn greedy(&self, residual: &[f64]) -> f64 {
        let mut left = residual.to_vec();
        let mut cells: Vec<(usize, usize)> = (0..self.m)
            .flat_map(|a| (self.m..self.total).map(move |b| (a, b)))
            .collect();
        cells.sort_by(|x, y| self.c(x.0, x.1).total_cmp(&self.c(y.0, y.1)));
        let mut value = 0.0;
        for (a, b) in cells {
            let flow = left[a].min(left[b]);
            if flow > 0.0 {
                value += flow * self.c(a, b);
                left[a] -= flow;
                left[b] -= flow;
            }
        }
        value
    }

    /// Dual-feasible potentials built greedily from one side, then the other.
    fn lower_bound(&self, residual: &[f64], alive: &[bool]) -> f64 {
        let left: Vec<usize> = (0..self.total).filter(|&x| alive[x]).collect();
        let (rs, cs): (Vec<usize>, Vec<usize>) = left.iter().partition(|&&x| self.is_row(x));
        let one_side = |first: &[usize], second: &[usize]| -> f64 {
            let mut bound = 0.0;
            let pot: Vec<f64> = first
                .iter()
                .map(|&a| second.iter().map(|&b| self.c(a, b)).fold(f64::INFINITY, f64::min))
                .collect();
            for (k, &a) in first.iter().enumerate() {
                bound += residual[a] * pot[k];
            }
            for &b in second {
                let slack = first
                    .iter()
                    .enumerate()
                    .map(|(k, &a)| self.c(a, b) - pot[k])
                    .fold(f64::INFINITY, f64::min);
                bound += residual[b] * slack;
            }
            bound
        };
        one_side(&rs, &cs).max(one_side(&cs, &rs))
    }

    fn go(&mut self, residual: &mut Vec<f64>, alive: Vec<bool>, obliged: Vec<bool>, spent: f64) {
        let left: Vec<usize> = (0..self.total).filter(|&x| alive[x]).collect();
        let rows_left = left.iter().filter(|&&x| self.is_row(x)).count();
        if rows_left == 0 || rows_left == left.len() {
            return;
        }
        if left.len() == 2 {
            let (a, b) = (left[0], left[1]);
            if obliged[a] || obliged[b] || (residual[a] - residual[b]).abs() > MASS_TOL {
                return;
            }
            self.visited += 1;
            let value = spent + residual[a] * self.c(a, b);
            self.best = self.best.min(value);
            return;
        }
        if spent + self.lower_bound(residual, &alive) >= self.best - 1e-12 {
            return;
        }
        for &leaf in &left {
            if obliged[leaf] {
                continue;
            }
            let mut next_obliged = obliged.clone();
            for &x in left.iter().take_while(|&&x| x < leaf) {
                next_obliged[x] = true;
            }
            let mut partners: Vec<usize> = left
                .iter()
                .copied()
                .filter(|&k| {
                    self.is_row(k) != self.is_row(leaf) && residual[k] + MASS_TOL >= residual[leaf]
                })
                .collect();
            partners.sort_by(|&x, &y| self.c(leaf, x).total_cmp(&self.c(leaf, y)));
            for k in partners {
                let mut o = next_obliged.clone();
                o[k] = false;
                let mut a = alive.clone();
                a[leaf] = false;
                let flow = residual[leaf];
                let saved = residual[k];
                residual[k] = (saved - flow).max(0.0);
                residual[leaf] = 0.0;
                let edge = flow * self.c(leaf, k);
                self.go(residual, a, o, spent + edge);
                residual[k] = saved;
                residual[leaf] = flow;
            }
        }
    }
}

/// Longest common subsequence by enumerating every subsequence of `a`.
pub fn brute_force_lcs<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    assert!(a.len() <= 16);
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let len = mask.count_ones() as usize;
        if len <= best {
            continue;
        }
        let picked: Vec<&T> = (0..a.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| &a[i])
            .collect();
        let mut it = b.iter();
        if picked.iter().all(|x| it.any(|y| y == *x)) {
            best = len;
        }
    }
    best
}

/// A tokenized toy document over words `w0..w{p-1}` with random embeddings.
pub struct ToyDoc {
    pub table: EmbeddingTable,
    pub raw: RawDocument,
    pub dists: Vec<Distribution>,
    pub cost: CostMatrix,
}

impl ToyDoc {
    pub fn problem(&self) -> SelectionProblem<'_> {
        SelectionProblem::new(&self.dists, &self.cost).unwrap()
    }

    /// Same document with every embedding multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> ToyDoc {
        ToyDoc::from_parts(self.table.scaled(factor), self.raw.clone())
    }

    pub fn from_parts(table: EmbeddingTable, raw: RawDocument) -> ToyDoc {
        let options = TokenizeOptions {
            stopwords: None,
            ..TokenizeOptions::default()
        };
        let tok = tokenize(&raw, &table, &options).unwrap();
        let cost = cost_matrix(&tok.vocab, &table, Metric::Euclidean).unwrap();
        let dists = tok.document.distributions(tok.vocab.len());
        ToyDoc {
            table,
            raw,
            dists,
            cost,
        }
    }
}

pub fn toy_table(rng: &mut ChaCha8Rng, p: usize, dim: usize) -> EmbeddingTable {
    let points = random_points(rng, p, dim);
    EmbeddingTable::from_rows(
        points
            .into_iter()
            .enumerate()
            .map(|(i, v)| (format!("w{i}"), v)),
    )
    .unwrap()
}

fn sentence_text(ids: &[usize]) -> String {
    ids.iter()
        .map(|i| format!("w{i}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// `n` sentences of 1 to 5 tokens drawn from a `p`-word vocabulary.
pub fn toy_doc(rng: &mut ChaCha8Rng, n: usize, p: usize, dim: usize) -> ToyDoc {
    let table = toy_table(rng, p, dim);
    let sentences: Vec<String> = (0..n)
        .map(|_| {
            let len = rng.random_range(1..=5);
            let ids: Vec<usize> = (0..len).map(|_| rng.random_range(0..p)).collect();
            sentence_text(&ids)
        })
        .collect();
    ToyDoc::from_parts(table, RawDocument::sentences(sentences))
}

/// A document of `others` equal-length sentences plus their concatenation,
/// inserted at `target`. The concatenation's distribution equals the
/// document's.
pub fn doc_with_centroid_sentence(
    rng: &mut ChaCha8Rng,
    others: usize,
    len: usize,
    p: usize,
    dim: usize,
    target: usize,
) -> ToyDoc {
    let table = toy_table(rng, p, dim);
    let mut sentences: Vec<Vec<usize>> = (0..others)
        .map(|_| (0..len).map(|_| rng.random_range(0..p)).collect())
        .collect();
    let whole: Vec<usize> = sentences.iter().flatten().copied().collect();
    sentences.insert(target, whole);
    ToyDoc::from_parts(
        table,
        RawDocument::sentences(sentences.iter().map(|s| sentence_text(s))),
    )
}

/// Score-descending, then lexicographically smallest, over every nonempty
/// subset of eligible sentences with at most `budget` members. Scores within
/// `1e-11 * max cost` of each other count as tied.
pub fn exhaustive_best(
    problem: &SelectionProblem<'_>,
    budget: usize,
    solver: &Solver,
) -> (Vec<usize>, f64) {
    let eligible = problem.eligible().to_vec();
    let tol = 1e-11 * problem.cost().max();
    let mut best: Option<(Vec<usize>, f64)> = None;
    for mask in 1u32..(1 << eligible.len()) {
        if mask.count_ones() as usize > budget {
            continue;
        }
        let subset: Vec<usize> = (0..eligible.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| eligible[i])
            .collect();
        let score = problem.coverage(&subset, solver).unwrap();
        let better = match &best {
            None => true,
            Some((s, b)) => score > *b + tol || ((score - *b).abs() <= tol && subset < *s),
        };
        if better {
            best = Some((subset, score));
        }
    }
    best.unwrap()
}

pub fn exact_solver() -> Solver {
    Solver::new(SolverConfig::default()).unwrap()
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}
