//! Transportation-problem simplex (MODI potentials, Bland's rule).

use crate::error::{Error, Result};

/// Optimal flows for a balanced `m x n` transportation problem with strictly
/// positive supplies and demands. `cost` is row-major. Returns row-major flows.
pub(crate) fn transportation_simplex(
    supply: &[f64],
    demand: &[f64],
    cost: &[f64],
) -> Result<Vec<f64>> {
    let m = supply.len();
    let n = demand.len();
    debug_assert_eq!(cost.len(), m * n);
    let mut tableau = Tableau::northwest_corner(supply, demand);
    let scale = cost.iter().copied().fold(1.0f64, f64::max);
    let tol = 1e-12 * scale;
    let max_pivots = 100 * (m + n) * (m + n) + 1000;

    let mut u = vec![0.0; m];
    let mut v = vec![0.0; n];
    for _ in 0..max_pivots {
        tableau.potentials(cost, &mut u, &mut v);

        // Bland: first nonbasic cell with negative reduced cost enters.
        let entering = (0..m * n).find(|&cell| {
            tableau.position[cell].is_none() && cost[cell] - u[cell / n] - v[cell % n] < -tol
        });
        let Some(entering) = entering else {
            return Ok(tableau.flows());
        };
        tableau.pivot(entering);
    }
    Err(Error::PivotLimit(max_pivots))
}

struct Tableau {
    m: usize,
    n: usize,
    /// basic cells as flat indices `i * n + j`, parallel to `flow`
    cells: Vec<usize>,
    flow: Vec<f64>,
    /// flat cell -> slot in `cells`
    position: Vec<Option<usize>>,
}

impl Tableau {
    /// Initial basis with exactly `m + n - 1` cells forming a spanning tree.
    fn northwest_corner(supply: &[f64], demand: &[f64]) -> Self {
        let (m, n) = (supply.len(), demand.len());
        let mut t = Tableau {
            m,
            n,
            cells: Vec::with_capacity(m + n - 1),
            flow: Vec::with_capacity(m + n - 1),
            position: vec![None; m * n],
        };
        let mut rs = supply.to_vec();
        let mut cs = demand.to_vec();
        let (mut i, mut j) = (0, 0);
        loop {
            let last = i == m - 1 && j == n - 1;
            // The final cell absorbs the rounding residue of the row side.
            let x = if last { rs[i].max(0.0) } else { rs[i].min(cs[j]) };
            t.position[i * n + j] = Some(t.cells.len());
            t.cells.push(i * n + j);
            t.flow.push(x);
            if last {
                break;
            }
            rs[i] -= x;
            cs[j] -= x;
            if j == n - 1 || (i < m - 1 && rs[i] <= cs[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
        t
    }

    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.m + self.n];
        for (slot, &cell) in self.cells.iter().enumerate() {
            let (i, j) = (cell / self.n, cell % self.n);
            adj[i].push((self.m + j, slot));
            adj[self.m + j].push((i, slot));
        }
        adj
    }

    /// Solves `u_i + v_j = c_ij` on basic cells with `u_0 = 0`.
    fn potentials(&self, cost: &[f64], u: &mut [f64], v: &mut [f64]) {
        let adj = self.adjacency();
        let mut seen = vec![false; self.m + self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        u[0] = 0.0;
        while let Some(node) = stack.pop() {
            for &(next, slot) in &adj[node] {
                if seen[next] {
                    continue;
                }
                seen[next] = true;
                let c = cost[self.cells[slot]];
                if next >= self.m {
                    v[next - self.m] = c - u[node];
                } else {
                    u[next] = c - v[node - self.m];
                }
                stack.push(next);
            }
        }
    }

    /// Basic slots on the tree path from row `i` to column `j`, starting at
    /// the edge incident to row `i`.
    fn tree_path(&self, i: usize, j: usize) -> Vec<usize> {
        let adj = self.adjacency();
        let total = self.m + self.n;
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; total];
        let mut seen = vec![false; total];
        let mut queue = std::collections::VecDeque::from([i]);
        seen[i] = true;
        let target = self.m + j;
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &(next, slot) in &adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = Some((node, slot));
                    queue.push_back(next);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = target;
        while let Some((prev, slot)) = parent[node] {
            path.push(slot);
            node = prev;
        }
        path.reverse();
        path
    }

    fn pivot(&mut self, entering: usize) {
        let (i, j) = (entering / self.n, entering % self.n);
        let path = self.tree_path(i, j);
        // Cells alternate -, +, -, ... along the path; the entering cell is +.
        let minus: Vec<usize> = path.iter().step_by(2).copied().collect();
        let theta = minus
            .iter()
            .map(|&s| self.flow[s])
            .fold(f64::INFINITY, f64::min);
        let leaving = minus
            .iter()
            .copied()
            .filter(|&s| self.flow[s] == theta)
            .min_by_key(|&s| self.cells[s])
            .expect("cycle has a decreasing cell");

        for (k, &slot) in path.iter().enumerate() {
            if k % 2 == 0 {
                self.flow[slot] -= theta;
            } else {
                self.flow[slot] += theta;
            }
        }

        let old = self.cells[leaving];
        self.position[old] = None;
        self.cells[leaving] = entering;
        self.flow[leaving] = theta;
        self.position[entering] = Some(leaving);
    }

    fn flows(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.m * self.n];
        for (&cell, &x) in self.cells.iter().zip(&self.flow) {
            out[cell] = x.max(0.0);
        }
        out
    }
}
