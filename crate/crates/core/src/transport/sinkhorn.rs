use nalgebra::DMatrix;

use super::{CostMatrix, DiscreteMeasure, TransportPlan};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornOptions {
    /// Regularization strength; `None` picks [`default_gamma`] from the cost matrix.
    pub gamma: Option<f64>,
    pub max_iter: usize,
    /// Tolerance on the L1 residual of the row marginals.
    pub tol: f64,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self {
            gamma: None,
            max_iter: 10_000,
            tol: 1e-9,
        }
    }
}

impl SinkhornOptions {
    pub fn solve(
        &self,
        source: &DiscreteMeasure,
        target: &DiscreteMeasure,
        cost: &CostMatrix,
    ) -> Result<TransportPlan> {
        let gamma = self.gamma.unwrap_or_else(|| default_gamma(cost));
        sinkhorn(source, target, cost, gamma, self.max_iter, self.tol)
    }
}

/// `0.05 ×` the median cost entry (falling back to the largest entry, then 1).
pub fn default_gamma(cost: &CostMatrix) -> f64 {
    let mut entries: Vec<f64> = cost.as_matrix().iter().copied().collect();
    entries.sort_by(f64::total_cmp);
    let median = entries[entries.len() / 2];
    let max = entries.last().copied().unwrap_or(0.0);
    let reference = if median > 0.0 {
        median
    } else if max > 0.0 {
        max
    } else {
        1.0
    };
    0.05 * reference
}

/// Entropy-regularized transport between `source` and `target`.
///
/// Minimizes `Σ w c + γ Σ w log w` over couplings with the given marginals.
/// Updates run on dual potentials in the log domain, and `γ` is annealed
/// geometrically from the cost scale down to the requested value, with each
/// stage warm-started from the previous one. The returned plan's
/// [`TransportPlan::cost`] is the regularized objective.
pub fn sinkhorn(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    cost: &CostMatrix,
    gamma: f64,
    max_iter: usize,
    tol: f64,
) -> Result<TransportPlan> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tol must be positive, got {tol}")));
    }
    cost.check_shape(source.len(), target.len())?;

    let rows: Vec<usize> = (0..source.len()).filter(|&i| source.weights()[i] > 0.0).collect();
    let cols: Vec<usize> = (0..target.len()).filter(|&j| target.weights()[j] > 0.0).collect();
    let log_a: Vec<f64> = rows.iter().map(|&i| source.weights()[i].ln()).collect();
    let log_b: Vec<f64> = cols.iter().map(|&j| target.weights()[j].ln()).collect();
    let a: Vec<f64> = rows.iter().map(|&i| source.weights()[i]).collect();
    let c = DMatrix::from_fn(rows.len(), cols.len(), |i, j| cost.get(rows[i], cols[j]));

    let mut f = vec![0.0; rows.len()];
    let mut g = vec![0.0; cols.len()];
    let mut scratch = vec![0.0; rows.len().max(cols.len())];

    let scale = c.amax().max(gamma);
    let mut stages = Vec::new();
    let mut eps = scale;
    while eps > gamma {
        stages.push(eps);
        eps *= 0.5;
    }
    stages.push(gamma);

    let mut iterations = 0usize;
    let mut residual = f64::INFINITY;
    for (s, &eps) in stages.iter().enumerate() {
        let last = s + 1 == stages.len();
        let stage_tol = if last { tol } else { tol.max(1e-3) };
        let mut checkpoint = f64::INFINITY;
        loop {
            // f-update
            for i in 0..f.len() {
                for j in 0..g.len() {
                    scratch[j] = (g[j] - c[(i, j)]) / eps;
                }
                f[i] = eps * (log_a[i] - log_sum_exp(&scratch[..g.len()]));
            }
            // g-update, columns become exact
            for j in 0..g.len() {
                for i in 0..f.len() {
                    scratch[i] = (f[i] - c[(i, j)]) / eps;
                }
                g[j] = eps * (log_b[j] - log_sum_exp(&scratch[..f.len()]));
            }
            iterations += 1;
            residual = (0..f.len())
                .map(|i| {
                    let row: f64 = (0..g.len())
                        .map(|j| ((f[i] + g[j] - c[(i, j)]) / eps).exp())
                        .sum();
                    (row - a[i]).abs()
                })
                .sum();
            if residual < stage_tol {
                break;
            }
            if iterations % STALL_CHECK == 0 {
                if residual > 0.5 * checkpoint {
                    residual = newton_polish(&mut f, &mut g, &a, &log_b, &c, eps, stage_tol);
                    if residual < stage_tol {
                        break;
                    }
                }
                checkpoint = residual;
            }
            if iterations >= max_iter {
                return Err(Error::NotConverged {
                    what: "sinkhorn",
                    iterations,
                    residual,
                });
            }
        }
    }
    log::trace!("sinkhorn converged in {iterations} iterations, residual {residual:e}");

    let mut plan = DMatrix::zeros(source.len(), target.len());
    let mut objective = 0.0;
    for (a_idx, &i) in rows.iter().enumerate() {
        for (b_idx, &j) in cols.iter().enumerate() {
            let w = ((f[a_idx] + g[b_idx] - c[(a_idx, b_idx)]) / gamma).exp();
            plan[(i, j)] = w;
            if w > 0.0 {
                objective += w * c[(a_idx, b_idx)] + gamma * w * w.ln();
            }
        }
    }
    Ok(TransportPlan::new(plan, objective))
}

/// Sweeps between progress checks; a stage that has not halved its residual
/// over this many sweeps switches to Newton steps.
const STALL_CHECK: usize = 64;

/// Damped Newton ascent on the dual, for couplings where alternating
/// projections contract too slowly. The last column potential is held fixed to
/// remove the `(f + t, g − t)` invariance. Ends with an exact column update and
/// returns the row residual.
fn newton_polish(
    f: &mut [f64],
    g: &mut [f64],
    a: &[f64],
    log_b: &[f64],
    c: &DMatrix<f64>,
    eps: f64,
    tol: f64,
) -> f64 {
    let (m, n) = (f.len(), g.len());
    let b: Vec<f64> = log_b.iter().map(|l| l.exp()).collect();
    let coupling = |f: &[f64], g: &[f64]| DMatrix::from_fn(m, n, |i, j| ((f[i] + g[j] - c[(i, j)]) / eps).exp());
    let gradient = |p: &DMatrix<f64>| {
        let mut r = Vec::with_capacity(m + n);
        r.extend((0..m).map(|i| a[i] - p.row(i).sum()));
        r.extend((0..n).map(|j| b[j] - p.column(j).sum()));
        r
    };
    let l1 = |r: &[f64]| r.iter().map(|x| x.abs()).sum::<f64>();

    let k = m + n - 1;
    let mut p = coupling(f, g);
    let mut grad = gradient(&p);
    for _ in 0..NEWTON_STEPS {
        if l1(&grad) < 0.1 * tol {
            break;
        }
        let mut h = DMatrix::zeros(k, k);
        for i in 0..m {
            h[(i, i)] = p.row(i).sum() / eps;
            for j in 0..n - 1 {
                h[(i, m + j)] = p[(i, j)] / eps;
                h[(m + j, i)] = p[(i, j)] / eps;
            }
        }
        for j in 0..n - 1 {
            h[(m + j, m + j)] = p.column(j).sum() / eps;
        }
        // nearly disconnected blocks of the coupling make h close to singular
        let damping = 1e-12 * h.diagonal().max();
        for r in 0..k {
            h[(r, r)] += damping;
        }
        let rhs = nalgebra::DVector::from_fn(k, |r, _| grad[r]);
        let Some(mut step) = h.cholesky().map(|ch| ch.solve(&rhs)) else {
            break;
        };
        // a potential moving by more than eps rescales its coupling entries by more than e
        let largest = step.amax();
        if largest > eps {
            step *= eps / largest;
        }
        let current = l1(&grad);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let nf: Vec<f64> = (0..m).map(|i| f[i] + t * step[i]).collect();
            let ng: Vec<f64> = (0..n).map(|j| if j + 1 < n { g[j] + t * step[m + j] } else { g[j] }).collect();
            let np = coupling(&nf, &ng);
            let ngrad = gradient(&np);
            if l1(&ngrad) < current {
                f.copy_from_slice(&nf);
                g.copy_from_slice(&ng);
                p = np;
                grad = ngrad;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    let mut scratch = vec![0.0; m];
    for j in 0..n {
        for i in 0..m {
            scratch[i] = (f[i] - c[(i, j)]) / eps;
        }
        g[j] = eps * (log_b[j] - log_sum_exp(&scratch));
    }
    (0..m)
        .map(|i| {
            let row: f64 = (0..n).map(|j| ((f[i] + g[j] - c[(i, j)]) / eps).exp()).sum();
            (row - a[i]).abs()
        })
        .sum()
}

const NEWTON_STEPS: usize = 1000;

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
