use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ClusterModel, CytometrySummary};
use crate::templates::{trimmed_count, Template};
use crate::transport::{rebuild, symmetrize, SpdMatrix};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Settings of a trimmed, eigenvalue-restricted Gaussian clustering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TclustParams {
    pub k: usize,
    /// Trimming level; `⌈n·α⌉` events are discarded.
    pub alpha: f64,
    /// Bound on the ratio of largest to smallest eigenvalue over all clusters.
    pub restriction_c: f64,
    pub max_iter: usize,
    /// Random starts used when no initialization is given.
    pub n_restarts: usize,
    pub seed: u64,
}

impl Default for TclustParams {
    fn default() -> Self {
        Self {
            k: 2,
            alpha: 0.05,
            restriction_c: 1e6,
            max_iter: 100,
            n_restarts: 20,
            seed: 0,
        }
    }
}

impl TclustParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("tclust needs k ≥ 1"));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1), got {}", self.alpha)));
        }
        if !(self.restriction_c >= 1.0) {
            return Err(Error::invalid(format!(
                "restriction_c must be at least 1, got {}",
                self.restriction_c
            )));
        }
        if self.n_restarts == 0 {
            return Err(Error::invalid("n_restarts must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TclustResult {
    /// Fitted clusters with weights summing to one. Clusters that lost all
    /// their events are dropped, so there can be fewer than `k`.
    pub models: Vec<ClusterModel>,
    /// Cluster of each event; `None` for the `⌈n·α⌉` trimmed events.
    pub assignment: Vec<Option<usize>>,
    /// Most likely cluster of every event, trimmed ones included.
    pub best_cluster: Vec<usize>,
    /// `Σ_j Σ_{i∈C_j} log(p_j φ(x_i; m_j, S_j))` over retained events.
    pub objective: f64,
    /// Objective after each concentration step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

impl TclustResult {
    pub fn trimmed(&self) -> usize {
        self.assignment.iter().filter(|a| a.is_none()).count()
    }

    /// The fitted clusters as an unlabelled summary.
    pub fn summary(&self, source_id: impl Into<String>) -> Result<CytometrySummary> {
        CytometrySummary::renormalized(source_id, self.models.clone())
    }
}

/// Trimmed Gaussian clustering with an eigenvalue-ratio restriction.
///
/// Each concentration step scores every event by `max_j log(p_j φ(x; m_j, S_j))`,
/// trims the `⌈n·α⌉` lowest scores, hard-assigns the rest and re-estimates
/// `(p, m, S)` from the retained events, clipping all covariance eigenvalues
/// into `[t, c·t]` with the likelihood-optimal `t`. Iteration stops at an
/// assignment fixpoint or after `max_iter` steps. With `init` a single run
/// starts from it; otherwise the best of `n_restarts` random starts is kept.
pub fn tclust(events: &DMatrix<f64>, params: &TclustParams, init: Option<&[ClusterModel]>) -> Result<TclustResult> {
    params.validate()?;
    let (n, d) = events.shape();
    if n <= params.k * (d + 1) {
        return Err(Error::invalid(format!(
            "tclust with k = {} in dimension {d} needs more than {} events, got {n}",
            params.k,
            params.k * (d + 1)
        )));
    }
    if let Some(init) = init {
        if init.len() != params.k {
            return Err(Error::DimensionMismatch {
                expected: params.k,
                found: init.len(),
            });
        }
        if let Some(m) = init.iter().find(|m| m.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: m.dim(),
            });
        }
        let total: f64 = init.iter().map(|m| m.weight).sum();
        let start = init
            .iter()
            .map(|m| Component {
                weight: m.weight / total,
                mean: m.mean.clone(),
                cov: m.cov.as_matrix().clone(),
            })
            .collect();
        return Run::new(events, params).fit(start);
    }

    let runs: Vec<Result<TclustResult>> = (0..params.n_restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(r as u64);
            let start = random_start(events, params.k, &mut rng)?;
            Run::new(events, params).fit(start)
        })
        .collect();
    pick_best(runs).map(|(r, _)| r)
}

/// Highest objective wins, ties going to the lowest index.
pub(crate) fn pick_best(runs: Vec<Result<TclustResult>>) -> Result<(TclustResult, usize)> {
    let mut best: Option<(TclustResult, usize)> = None;
    let mut errors = Vec::new();
    for (i, run) in runs.into_iter().enumerate() {
        match run {
            Ok(r) => {
                if best.as_ref().is_none_or(|(b, _)| r.objective > b.objective) {
                    best = Some((r, i));
                }
            }
            Err(e) => errors.push(e),
        }
    }
    best.ok_or(Error::AllRunsFailed(errors))
}

/// One tclust run per template, each seeded from the template's clusters.
///
/// Returns the run with the largest objective and the index of its template.
pub fn best_template_init(
    events: &DMatrix<f64>,
    templates: &[Template],
    params: &TclustParams,
) -> Result<(TclustResult, usize)> {
    if templates.is_empty() {
        return Err(Error::invalid("no templates to initialize from"));
    }
    let runs: Vec<Result<TclustResult>> = templates
        .par_iter()
        .map(|t| {
            let p = TclustParams {
                k: t.summary.len(),
                ..*params
            };
            tclust(events, &p, Some(t.summary.clusters()))
        })
        .collect();
    pick_best(runs)
}

#[derive(Debug, Clone)]
struct Component {
    weight: f64,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

/// Means and covariances of `k` random subsets of `d + 1` events, equal weights.
fn random_start(events: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Component>> {
    let (n, d) = events.shape();
    let picked = sample(rng, n, k * (d + 1)).into_vec();
    Ok(picked
        .chunks(d + 1)
        .map(|rows| {
            let (mean, cov) = moments(events, rows);
            Component {
                weight: 1.0 / k as f64,
                mean,
                cov,
            }
        })
        .collect())
}

/// Mean and maximum-likelihood covariance of the given rows.
fn moments(events: &DMatrix<f64>, rows: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
    let d = events.ncols();
    let mut mean = DVector::zeros(d);
    for &r in rows {
        mean += events.row(r).transpose();
    }
    mean /= rows.len() as f64;
    let mut cov = DMatrix::zeros(d, d);
    for &r in rows {
        let c = events.row(r).transpose() - &mean;
        cov += &c * c.transpose();
    }
    cov /= rows.len() as f64;
    (mean, symmetrize(cov))
}

/// Clips the eigenvalues of all covariances into `[t, c·t]`.
///
/// `t` minimizes `Σ_j n_j Σ_l (log e_jl + d_jl / e_jl)` over the clipped
/// values `e = clamp(d, t, c·t)`: on each interval between consecutive
/// critical points `{d_jl} ∪ {d_jl / c}` the optimum has a closed form, and
/// the best interval is kept.
pub fn restrict_eigenvalues(covs: &[DMatrix<f64>], sizes: &[f64], c: f64) -> Result<Vec<SpdMatrix>> {
    let eigs: Vec<SymmetricEigen<f64, Dyn>> = covs.iter().map(|s| SymmetricEigen::new(symmetrize(s.clone()))).collect();
    let values: Vec<Vec<f64>> = eigs
        .iter()
        .map(|e| e.eigenvalues.iter().map(|v| v.max(0.0)).collect())
        .collect();
    let t = restriction_threshold(&values, sizes, c);
    Ok(eigs
        .iter()
        .zip(&values)
        .map(|(e, vals)| {
            let clipped = DVector::from_iterator(vals.len(), vals.iter().map(|v| v.clamp(t, c * t)));
            SpdMatrix::from_trusted(rebuild(&e.eigenvectors, &clipped))
        })
        .collect())
}

fn restriction_threshold(values: &[Vec<f64>], sizes: &[f64], c: f64) -> f64 {
    let all: Vec<(f64, f64)> = values
        .iter()
        .zip(sizes)
        .filter(|(_, n)| **n > 0.0)
        .flat_map(|(v, n)| v.iter().map(move |e| (*e, *n)))
        .collect();
    let max = all.iter().map(|(e, _)| *e).fold(0.0, f64::max);
    let floor = if max > 0.0 { max * 1e-12 } else { 1e-12 };
    let min = all.iter().map(|(e, _)| *e).fold(f64::INFINITY, f64::min);
    if min >= floor && max <= c * min {
        return min;
    }
    let penalty = |t: f64| -> f64 {
        all.iter()
            .map(|&(e, n)| {
                let clipped = e.clamp(t, c * t);
                n * (clipped.ln() + e / clipped)
            })
            .sum()
    };

    let mut points: Vec<f64> = all.iter().flat_map(|&(e, _)| [e, e / c]).filter(|p| *p >= floor).collect();
    points.push(floor);
    points.sort_by(f64::total_cmp);
    points.dedup();
    let mut best = (f64::INFINITY, floor);
    let mut consider = |t: f64| {
        let t = t.max(floor);
        let value = penalty(t);
        if value < best.0 {
            best = (value, t);
        }
    };
    for w in points.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mid = 0.5 * (lo + hi);
        let (mut num, mut den) = (0.0, 0.0);
        for &(e, n) in &all {
            if e < mid {
                num += n * e;
                den += n;
            } else if e > c * mid {
                num += n * e / c;
                den += n;
            }
        }
        if den > 0.0 {
            consider((num / den).clamp(lo, hi));
        }
        consider(lo);
    }
    if let Some(&last) = points.last() {
        consider(last);
    }
    best.1
}

struct Run<'a> {
    events: &'a DMatrix<f64>,
    params: &'a TclustParams,
    trimmed: usize,
}

struct Scored {
    best: Vec<usize>,
    score: Vec<f64>,
}

impl<'a> Run<'a> {
    fn new(events: &'a DMatrix<f64>, params: &'a TclustParams) -> Self {
        Self {
            events,
            params,
            trimmed: trimmed_count(events.nrows(), params.alpha),
        }
    }

    fn restrict(&self, comps: Vec<Component>) -> Result<Vec<Component>> {
        let covs: Vec<DMatrix<f64>> = comps.iter().map(|c| c.cov.clone()).collect();
        let sizes: Vec<f64> = comps.iter().map(|c| c.weight).collect();
        let restricted = restrict_eigenvalues(&covs, &sizes, self.params.restriction_c)?;
        Ok(comps
            .into_iter()
            .zip(restricted)
            .map(|(c, s)| Component {
                cov: s.into_inner(),
                ..c
            })
            .collect())
    }

    fn score(&self, comps: &[Component]) -> Result<Scored> {
        let d = self.events.ncols();
        let prepared: Vec<Option<(f64, Cholesky<f64, Dyn>, &DVector<f64>)>> = comps
            .iter()
            .map(|c| {
                if c.weight <= 0.0 {
                    return Ok(None);
                }
                let chol = Cholesky::new(c.cov.clone())
                    .ok_or_else(|| Error::invalid("cluster covariance is not positive definite"))?;
                let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                Ok(Some((c.weight.ln() - 0.5 * (d as f64 * LN_2PI + log_det), chol, &c.mean)))
            })
            .collect::<Result<_>>()?;
        let n = self.events.nrows();
        let mut best = vec![0; n];
        let mut score = vec![f64::NEG_INFINITY; n];
        for i in 0..n {
            let x = self.events.row(i).transpose();
            for (j, p) in prepared.iter().enumerate() {
                if let Some((constant, chol, mean)) = p {
                    let diff = &x - *mean;
                    let z = chol.l_dirty().solve_lower_triangular(&diff).expect("triangular factor is invertible");
                    let value = constant - 0.5 * z.norm_squared();
                    if value > score[i] {
                        score[i] = value;
                        best[i] = j;
                    }
                }
            }
        }
        Ok(Scored { best, score })
    }

    fn assign(&self, scored: &Scored) -> (Vec<Option<usize>>, f64) {
        let n = scored.score.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scored.score[a].total_cmp(&scored.score[b]).then(b.cmp(&a)));
        let mut assignment: Vec<Option<usize>> = scored.best.iter().map(|&j| Some(j)).collect();
        for &i in order.iter().take(self.trimmed) {
            assignment[i] = None;
        }
        let objective = (0..n).filter(|&i| assignment[i].is_some()).map(|i| scored.score[i]).sum();
        (assignment, objective)
    }

    fn estimate(&self, assignment: &[Option<usize>], k: usize) -> Result<Vec<Component>> {
        let d = self.events.ncols();
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, a) in assignment.iter().enumerate() {
            if let Some(j) = a {
                rows[*j].push(i);
            }
        }
        let retained: usize = rows.iter().map(Vec::len).sum();
        let comps = rows
            .iter()
            .map(|r| {
                if r.is_empty() {
                    Component {
                        weight: 0.0,
                        mean: DVector::zeros(d),
                        cov: DMatrix::identity(d, d),
                    }
                } else {
                    let (mean, cov) = moments(self.events, r);
                    Component {
                        weight: r.len() as f64 / retained as f64,
                        mean,
                        cov,
                    }
                }
            })
            .collect();
        self.restrict(comps)
    }

    fn fit(&self, start: Vec<Component>) -> Result<TclustResult> {
        let k = start.len();
        let mut comps = self.restrict(start)?;
        let mut scored = self.score(&comps)?;
        let (mut assignment, mut objective) = self.assign(&scored);
        let mut trace = vec![objective];
        let mut iterations = 0;
        while iterations < self.params.max_iter {
            iterations += 1;
            comps = self.estimate(&assignment, k)?;
            scored = self.score(&comps)?;
            let (next, next_objective) = self.assign(&scored);
            debug_assert!(
                next_objective >= objective - 1e-8 * objective.abs().max(1.0),
                "tclust objective decreased from {objective} to {next_objective}"
            );
            trace.push(next_objective);
            let settled = next == assignment;
            assignment = next;
            objective = next_objective;
            if settled {
                break;
            }
        }
        self.finish(comps, scored, assignment, objective, trace, iterations)
    }

    fn finish(
        &self,
        comps: Vec<Component>,
        scored: Scored,
        assignment: Vec<Option<usize>>,
        objective: f64,
        objective_trace: Vec<f64>,
        iterations: usize,
    ) -> Result<TclustResult> {
        // drop clusters without weight and renumber the survivors
        let mut remap = vec![None; comps.len()];
        let mut models = Vec::new();
        for (j, c) in comps.into_iter().enumerate() {
            if c.weight > 0.0 {
                remap[j] = Some(models.len());
                models.push(ClusterModel::new(c.mean, SpdMatrix::new(c.cov)?, c.weight.min(1.0), None)?);
            }
        }
        let total: f64 = models.iter().map(|m| m.weight).sum();
        for m in &mut models {
            m.weight /= total;
        }
        Ok(TclustResult {
            models,
            assignment: assignment.iter().map(|a| a.and_then(|j| remap[j])).collect(),
            best_cluster: scored.best.iter().map(|&j| remap[j].expect("events only score on live clusters")).collect(),
            objective,
            objective_trace,
            iterations,
        })
    }
}
