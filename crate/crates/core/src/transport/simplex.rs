//! Transportation simplex (MODI) on a dense cost matrix.
//!
//! The basis is kept as a spanning tree of the bipartite supply/demand graph
//! with exactly `m + n - 1` cells, degenerate zero-valued cells included.
//! Pricing uses the most negative reduced cost and switches to Bland's rule
//! once degenerate pivots start to pile up.

use crate::error::{Error, Result};

pub(crate) struct Solution {
    pub flow: Vec<f64>,
    pub cost: f64,
}

struct Basis {
    m: usize,
    n: usize,
    cells: Vec<(usize, usize)>,
    is_basic: Vec<bool>,
    flow: Vec<f64>,
}

impl Basis {
    /// North-west corner start. Produces a staircase spanning tree.
    fn north_west(supply: &[f64], demand: &[f64]) -> Self {
        let (m, n) = (supply.len(), demand.len());
        let mut rs = supply.to_vec();
        let mut rd = demand.to_vec();
        let mut flow = vec![0.0; m * n];
        let mut is_basic = vec![false; m * n];
        let mut cells = Vec::with_capacity(m + n - 1);
        let (mut i, mut j) = (0, 0);
        loop {
            let q = if i == m - 1 && j == n - 1 {
                // absorb rounding residue on the last cell
                rs[i].max(rd[j]).max(0.0)
            } else {
                rs[i].min(rd[j]).max(0.0)
            };
            flow[i * n + j] = q;
            is_basic[i * n + j] = true;
            cells.push((i, j));
            rs[i] -= q;
            rd[j] -= q;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if j == n - 1 || (i < m - 1 && rs[i] <= rd[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
        debug_assert_eq!(cells.len(), m + n - 1);
        Self {
            m,
            n,
            cells,
            is_basic,
            flow,
        }
    }

    /// Adjacency lists of the tree; nodes `0..m` are rows, `m..m+n` columns.
    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.m + self.n];
        for (slot, &(i, j)) in self.cells.iter().enumerate() {
            adj[i].push((self.m + j, slot));
            adj[self.m + j].push((i, slot));
        }
        adj
    }

    /// Dual potentials with `u[0] = 0` and `u[i] + v[j] = c[i][j]` on the tree.
    fn potentials(&self, cost: &[f64], adj: &[Vec<(usize, usize)>]) -> (Vec<f64>, Vec<f64>) {
        let (m, n) = (self.m, self.n);
        let mut pot = vec![f64::NAN; m + n];
        pot[0] = 0.0;
        let mut stack = vec![0];
        while let Some(node) = stack.pop() {
            for &(next, slot) in &adj[node] {
                if pot[next].is_nan() {
                    let (i, j) = self.cells[slot];
                    let c = cost[i * n + j];
                    pot[next] = c - pot[node];
                    stack.push(next);
                }
            }
        }
        let v = pot.split_off(m);
        (pot, v)
    }

    /// Tree path from column node `m + j` to row node `i`, as basis slots.
    fn path(&self, adj: &[Vec<(usize, usize)>], i: usize, j: usize) -> Vec<usize> {
        let total = self.m + self.n;
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; total];
        let mut seen = vec![false; total];
        let start = self.m + j;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(node) = stack.pop() {
            if node == i {
                break;
            }
            for &(next, slot) in &adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = Some((node, slot));
                    stack.push(next);
                }
            }
        }
        // walk back from i to the start; reverse so slot 0 touches column j
        let mut slots = Vec::new();
        let mut node = i;
        while node != start {
            let (prev, slot) = parent[node].expect("basis is a spanning tree");
            slots.push(slot);
            node = prev;
        }
        slots.reverse();
        slots
    }
}

/// Minimizes `Σ c[i][j] x[i][j]` over couplings of `supply` and `demand`.
/// Both marginals must be non-empty and carry the same total mass.
pub(crate) fn solve(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<Solution> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 {
        return Err(Error::InvalidMeasure("empty marginal".into()));
    }
    debug_assert_eq!(cost.len(), m * n);
    let scale = cost.iter().copied().fold(0.0, f64::max).max(1.0);
    let eps = 1e-13 * scale;

    let mut basis = Basis::north_west(supply, demand);
    let max_iter = 50 * (m + n) * (m + n) + 1000;
    let bland_after = 4 * (m + n) + 50;
    let mut degenerate_run = 0usize;

    for _ in 0..max_iter {
        let adj = basis.adjacency();
        let (u, v) = basis.potentials(cost, &adj);

        let bland = degenerate_run > bland_after;
        let mut entering: Option<(usize, usize)> = None;
        let mut best = -eps;
        'scan: for i in 0..m {
            for j in 0..n {
                if basis.is_basic[i * n + j] {
                    continue;
                }
                let reduced = cost[i * n + j] - u[i] - v[j];
                if reduced < best {
                    entering = Some((i, j));
                    if bland {
                        break 'scan;
                    }
                    best = reduced;
                }
            }
        }
        let Some((ei, ej)) = entering else {
            let flow = basis.flow;
            let total = flow.iter().zip(cost).map(|(x, c)| x * c).sum();
            return Ok(Solution { flow, cost: total });
        };

        let path = basis.path(&adj, ei, ej);
        debug_assert!(path.len() % 2 == 1);
        // slots at even positions lose flow
        let mut leave: Option<usize> = None;
        for &slot in path.iter().step_by(2) {
            let (i, j) = basis.cells[slot];
            let f = basis.flow[i * n + j];
            let better = match leave {
                None => true,
                Some(cur) => {
                    let (ci, cj) = basis.cells[cur];
                    let cf = basis.flow[ci * n + cj];
                    f < cf || (f == cf && i * n + j < ci * n + cj)
                }
            };
            if better {
                leave = Some(slot);
            }
        }
        let leave = leave.expect("cycle has a decreasing cell");
        let (li, lj) = basis.cells[leave];
        let theta = basis.flow[li * n + lj];

        if theta > 0.0 {
            degenerate_run = 0;
        } else {
            degenerate_run += 1;
        }
        for (pos, &slot) in path.iter().enumerate() {
            let (i, j) = basis.cells[slot];
            let f = &mut basis.flow[i * n + j];
            if pos % 2 == 0 {
                *f = (*f - theta).max(0.0);
            } else {
                *f += theta;
            }
        }
        basis.flow[ei * n + ej] = theta;
        basis.flow[li * n + lj] = 0.0;
        basis.is_basic[li * n + lj] = false;
        basis.is_basic[ei * n + ej] = true;
        basis.cells[leave] = (ei, ej);
    }
    Err(Error::Solver(format!(
        "transportation simplex did not converge on a {m}x{n} problem"
    )))
}
