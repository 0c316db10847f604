//! Exact discrete optimal transport via the transportation simplex.
//!
//! The basis is a spanning tree over row and column nodes (`m + n - 1`
//! basic cells). Each pivot computes dual potentials on the tree, picks the
//! most negative reduced cost, and pushes flow around the unique cycle that
//! the entering cell closes. After a run of degenerate pivots the entering
//! rule switches to Bland's (first negative cell in row-major order) so the
//! method cannot cycle.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use super::{CostMatrix, DiscreteMeasure, TransportPlan};
use crate::error::{Error, Result};

const DEGENERATE_PIVOTS_BEFORE_BLAND: usize = 50;

/// Minimum-cost coupling between `source` and `target` under `cost`.
pub fn solve_discrete_ot(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    cost: &CostMatrix,
) -> Result<TransportPlan> {
    cost.check_shape(source.len(), target.len())?;

    // zero-weight atoms are removed and reinserted as zero rows/columns
    let rows: Vec<usize> = (0..source.len()).filter(|&i| source.weights()[i] > 0.0).collect();
    let cols: Vec<usize> = (0..target.len()).filter(|&j| target.weights()[j] > 0.0).collect();
    let supply: Vec<f64> = rows.iter().map(|&i| source.weights()[i]).collect();
    let demand: Vec<f64> = cols.iter().map(|&j| target.weights()[j]).collect();
    let reduced_cost = DMatrix::from_fn(rows.len(), cols.len(), |a, b| cost.get(rows[a], cols[b]));

    let flows = TransportationSimplex::new(supply, demand, reduced_cost).solve()?;

    let mut plan = DMatrix::zeros(source.len(), target.len());
    for ((a, b), w) in flows {
        plan[(rows[a], cols[b])] = w;
    }
    Ok(TransportPlan::with_cost(plan, cost))
}

struct TransportationSimplex {
    supply: Vec<f64>,
    demand: Vec<f64>,
    cost: DMatrix<f64>,
    /// Basic cells and their flow.
    basis: Vec<(usize, usize, f64)>,
}

impl TransportationSimplex {
    fn new(supply: Vec<f64>, demand: Vec<f64>, cost: DMatrix<f64>) -> Self {
        Self {
            supply,
            demand,
            cost,
            basis: Vec::new(),
        }
    }

    fn m(&self) -> usize {
        self.supply.len()
    }

    fn n(&self) -> usize {
        self.demand.len()
    }

    /// Northwest-corner start. Each step advances exactly one of row/column,
    /// so the result is a staircase spanning tree with `m + n - 1` cells.
    fn northwest_corner(&mut self) {
        let (m, n) = (self.m(), self.n());
        let mut a = self.supply.clone();
        let mut b = self.demand.clone();
        let (mut i, mut j) = (0, 0);
        self.basis.clear();
        while i < m && j < n {
            let x = a[i].min(b[j]);
            self.basis.push((i, j, x));
            let row_exhausted = a[i] <= b[j];
            a[i] -= x;
            b[j] -= x;
            if i == m - 1 {
                j += 1;
            } else if j == n - 1 || row_exhausted {
                i += 1;
            } else {
                j += 1;
            }
        }
    }

    /// Adjacency of the basis tree; node `i < m` is a row, `m + j` a column.
    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let m = self.m();
        let mut adj = vec![Vec::new(); m + self.n()];
        for (idx, &(i, j, _)) in self.basis.iter().enumerate() {
            adj[i].push((m + j, idx));
            adj[m + j].push((i, idx));
        }
        adj
    }

    fn potentials(&self, adj: &[Vec<(usize, usize)>]) -> (Vec<f64>, Vec<f64>) {
        let m = self.m();
        let mut u = vec![f64::NAN; m];
        let mut v = vec![f64::NAN; self.n()];
        u[0] = 0.0;
        let mut queue = VecDeque::from([0usize]);
        while let Some(node) = queue.pop_front() {
            for &(next, idx) in &adj[node] {
                let (i, j, _) = self.basis[idx];
                if node < m {
                    if v[j].is_nan() {
                        v[j] = self.cost[(i, j)] - u[i];
                        queue.push_back(next);
                    }
                } else if u[i].is_nan() {
                    u[i] = self.cost[(i, j)] - v[j];
                    queue.push_back(next);
                }
            }
        }
        (u, v)
    }

    /// Basis indices on the tree path from row `r` to column `c`, ordered from `r`.
    fn tree_path(&self, adj: &[Vec<(usize, usize)>], r: usize, c: usize) -> Vec<usize> {
        let target = self.m() + c;
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; adj.len()];
        let mut seen = vec![false; adj.len()];
        seen[r] = true;
        let mut queue = VecDeque::from([r]);
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &(next, idx) in &adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = Some((node, idx));
                    queue.push_back(next);
                }
            }
        }
        let mut edges = Vec::new();
        let mut node = target;
        while let Some((prev, idx)) = parent[node] {
            edges.push(idx);
            node = prev;
        }
        edges.reverse();
        edges
    }

    fn solve(mut self) -> Result<Vec<((usize, usize), f64)>> {
        let (m, n) = (self.m(), self.n());
        self.northwest_corner();
        if m == 1 || n == 1 {
            return Ok(self.basis.iter().map(|&(i, j, x)| ((i, j), x)).collect());
        }

        let scale = self.cost.amax().max(1.0);
        let optimality_tol = 1e-12 * scale;
        let max_pivots = 100 * (m + n) * (m + n) + 1000;
        let mut degenerate_run = 0usize;

        for _ in 0..max_pivots {
            let adj = self.adjacency();
            let (u, v) = self.potentials(&adj);

            let bland = degenerate_run >= DEGENERATE_PIVOTS_BEFORE_BLAND;
            let mut entering: Option<(usize, usize, f64)> = None;
            'scan: for i in 0..m {
                for j in 0..n {
                    let rc = self.cost[(i, j)] - u[i] - v[j];
                    if rc < -optimality_tol {
                        if bland {
                            entering = Some((i, j, rc));
                            break 'scan;
                        }
                        if entering.is_none_or(|(_, _, best)| rc < best) {
                            entering = Some((i, j, rc));
                        }
                    }
                }
            }
            let Some((r, c, _)) = entering else {
                return Ok(self.basis.iter().map(|&(i, j, x)| ((i, j), x)).collect());
            };

            // cycle: +entering, then alternating -,+,... walking back from c to r;
            // with an odd-length path the edges at odd positions from r are donors
            let path = self.tree_path(&adj, r, c);
            let donors: Vec<usize> = path.iter().step_by(2).copied().collect();
            let receivers: Vec<usize> = path.iter().skip(1).step_by(2).copied().collect();

            let mut leaving = donors[0];
            for &idx in &donors[1..] {
                let (li, lj, lx) = self.basis[leaving];
                let (i, j, x) = self.basis[idx];
                if x < lx || (x == lx && (i, j) < (li, lj)) {
                    leaving = idx;
                }
            }
            let theta = self.basis[leaving].2;
            degenerate_run = if theta > 0.0 { 0 } else { degenerate_run + 1 };

            for &idx in &donors {
                self.basis[idx].2 = (self.basis[idx].2 - theta).max(0.0);
            }
            for &idx in &receivers {
                self.basis[idx].2 += theta;
            }
            self.basis[leaving] = (r, c, theta);
        }
        Err(Error::NotConverged {
            what: "transportation simplex",
            iterations: max_pivots,
            residual: f64::NAN,
        })
    }
}
