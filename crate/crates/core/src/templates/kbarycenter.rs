use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ClusterModel;
use crate::transport::gaussian_w2_squared;

use super::barycenter::{gaussian_barycenter, BarycenterOptions};

/// Result of [`k_barycenter`].
#[derive(Debug, Clone, PartialEq)]
pub struct KBarycenterFit {
    /// Barycenters, weighted by the normalized mass assigned to each.
    pub centers: Vec<ClusterModel>,
    /// Center of each input model; `None` for trimmed models.
    pub assignment: Vec<Option<usize>>,
    /// `Σ λᵢ W₂²(μᵢ, μ̄_{c(i)})` over retained models.
    pub objective: f64,
    /// Objective after each assignment step of the winning restart.
    pub objective_trace: Vec<f64>,
}

/// Number of models trimmed at level `alpha`: `⌈n·α⌉`.
pub fn trimmed_count(n: usize, alpha: f64) -> usize {
    ((n as f64 * alpha) - 1e-9).ceil().max(0.0) as usize
}

/// (Trimmed) k-barycenter of Gaussian models, the k-means analogue in W₂.
///
/// Model `i` carries mass `λᵢ ∝ weightᵢ`. Each restart seeds the centers
/// k-means++ style in W₂², never drawing among the `⌈n·α⌉` candidates
/// farthest from the current seeds, then alternates: assign to the nearest center,
/// trim the `⌈n·α⌉` models contributing most to the objective, and replace
/// every center by the barycenter of its retained members. A center left
/// without members is moved onto the retained model farthest from its own
/// center. The restart with the lowest objective wins (lowest index on ties).
pub fn k_barycenter(models: &[ClusterModel], k: usize, opts: &BarycenterOptions) -> Result<KBarycenterFit> {
    opts.validate()?;
    let n = models.len();
    if n == 0 {
        return Err(Error::invalid("k-barycenter of an empty set"));
    }
    let d = models[0].dim();
    if let Some(m) = models.iter().find(|m| m.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: m.dim(),
        });
    }
    let trimmed = trimmed_count(n, opts.trim_alpha);
    if k == 0 || k > n - trimmed {
        return Err(Error::invalid(format!(
            "k = {k} but only {} models remain after trimming",
            n - trimmed
        )));
    }
    let total: f64 = models.iter().map(|m| m.weight).sum();
    let lambdas: Vec<f64> = models.iter().map(|m| m.weight / total).collect();

    let runs: Vec<Result<KBarycenterFit>> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(r as u64);
            Lloyd::new(models, &lambdas, k, trimmed, opts).run(&mut rng)
        })
        .collect();

    let mut best: Option<KBarycenterFit> = None;
    let mut errors = Vec::new();
    for run in runs {
        match run {
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| fit.objective < b.objective) {
                    best = Some(fit);
                }
            }
            Err(e) => errors.push(e),
        }
    }
    best.ok_or(Error::AllRunsFailed(errors))
}

struct Lloyd<'a> {
    models: &'a [ClusterModel],
    lambdas: &'a [f64],
    k: usize,
    trimmed: usize,
    opts: &'a BarycenterOptions,
}

impl<'a> Lloyd<'a> {
    fn new(
        models: &'a [ClusterModel],
        lambdas: &'a [f64],
        k: usize,
        trimmed: usize,
        opts: &'a BarycenterOptions,
    ) -> Self {
        Self {
            models,
            lambdas,
            k,
            trimmed,
            opts,
        }
    }

    fn seed(&self, rng: &mut ChaCha8Rng) -> Result<Vec<ClusterModel>> {
        let n = self.models.len();
        let first = WeightedIndex::new(self.lambdas)
            .map_err(|e| Error::invalid(format!("model weights: {e}")))?
            .sample(rng);
        let mut chosen = vec![first];
        let mut nearest: Vec<f64> = (0..n)
            .map(|i| gaussian_w2_squared(&self.models[i], &self.models[first]))
            .collect::<Result<_>>()?;
        while chosen.len() < self.k {
            let mut scores: Vec<f64> = (0..n).map(|i| self.lambdas[i] * nearest[i]).collect();
            // the farthest candidates are the ones trimming would discard
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(b.cmp(&a)));
            for &i in order.iter().take(self.trimmed) {
                scores[i] = 0.0;
            }
            let next = match WeightedIndex::new(&scores) {
                Ok(dist) => dist.sample(rng),
                // every model coincides with a chosen one
                Err(_) => (0..n).find(|i| !chosen.contains(i)).expect("k does not exceed n"),
            };
            chosen.push(next);
            for i in 0..n {
                nearest[i] = nearest[i].min(gaussian_w2_squared(&self.models[i], &self.models[next])?);
            }
        }
        Ok(chosen.into_iter().map(|i| self.models[i].clone()).collect())
    }

    /// Nearest center and its squared distance for every model.
    fn nearest(&self, centers: &[ClusterModel]) -> Result<Vec<(usize, f64)>> {
        self.models
            .iter()
            .map(|m| {
                let mut best = (0, f64::INFINITY);
                for (j, c) in centers.iter().enumerate() {
                    let dist = gaussian_w2_squared(m, c)?;
                    if dist < best.1 {
                        best = (j, dist);
                    }
                }
                Ok(best)
            })
            .collect()
    }

    /// Assignment with the `trimmed` largest contributions removed.
    fn assign(&self, nearest: &[(usize, f64)]) -> (Vec<Option<usize>>, f64) {
        let n = nearest.len();
        let mut order: Vec<usize> = (0..n).collect();
        let contribution = |i: usize| self.lambdas[i] * nearest[i].1;
        order.sort_by(|&a, &b| contribution(b).total_cmp(&contribution(a)).then(b.cmp(&a)));
        let mut assignment: Vec<Option<usize>> = nearest.iter().map(|&(j, _)| Some(j)).collect();
        for &i in order.iter().take(self.trimmed) {
            assignment[i] = None;
        }
        let objective = (0..n).filter(|&i| assignment[i].is_some()).map(contribution).sum();
        (assignment, objective)
    }

    fn run(&self, rng: &mut ChaCha8Rng) -> Result<KBarycenterFit> {
        let mut centers = self.seed(rng)?;
        let mut nearest = self.nearest(&centers)?;
        let (mut assignment, mut objective) = self.assign(&nearest);
        let mut trace = vec![objective];

        for _ in 0..self.opts.max_iter {
            centers = self.update(&centers, &assignment, &nearest)?;
            nearest = self.nearest(&centers)?;
            let (next_assignment, next_objective) = self.assign(&nearest);
            debug_assert!(
                next_objective <= objective + 1e-7 * objective.max(1.0),
                "k-barycenter objective increased from {objective} to {next_objective}"
            );
            trace.push(next_objective);
            let settled = next_assignment == assignment;
            assignment = next_assignment;
            objective = next_objective;
            if settled {
                break;
            }
        }

        let mut mass = vec![0.0; self.k];
        for (i, a) in assignment.iter().enumerate() {
            if let Some(j) = a {
                mass[*j] += self.lambdas[i];
            }
        }
        let retained: f64 = mass.iter().sum();
        let centers = centers
            .into_iter()
            .zip(&mass)
            .map(|(c, m)| c.with_weight((m / retained).max(f64::MIN_POSITIVE)))
            .collect();
        Ok(KBarycenterFit {
            centers,
            assignment,
            objective,
            objective_trace: trace,
        })
    }

    fn update(
        &self,
        centers: &[ClusterModel],
        assignment: &[Option<usize>],
        nearest: &[(usize, f64)],
    ) -> Result<Vec<ClusterModel>> {
        let mut next = Vec::with_capacity(self.k);
        let mut taken: Vec<usize> = Vec::new();
        for j in 0..self.k {
            let members: Vec<usize> = (0..assignment.len()).filter(|&i| assignment[i] == Some(j)).collect();
            if members.is_empty() {
                let far = (0..assignment.len())
                    .filter(|&i| assignment[i].is_some() && !taken.contains(&i))
                    .max_by(|&a, &b| nearest[a].1.total_cmp(&nearest[b].1).then(b.cmp(&a)));
                match far {
                    Some(i) => {
                        taken.push(i);
                        next.push(self.models[i].clone());
                    }
                    None => next.push(centers[j].clone()),
                }
                continue;
            }
            let mass: f64 = members.iter().map(|&i| self.lambdas[i]).sum();
            let group: Vec<ClusterModel> = members.iter().map(|&i| self.models[i].clone()).collect();
            let weights: Vec<f64> = members.iter().map(|&i| self.lambdas[i] / mass).collect();
            let fit = gaussian_barycenter(&group, &weights, self.opts)?;
            next.push(fit.model.with_label(None));
        }
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::SpdMatrix;
    use nalgebra::DVector;

    fn model(x: f64, var: f64) -> ClusterModel {
        ClusterModel::new(DVector::from_element(1, x), SpdMatrix::from_diagonal(&[var]).unwrap(), 0.1, None).unwrap()
    }

    #[test]
    fn trimmed_count_is_ceiling() {
        assert_eq!(trimmed_count(20, 0.1), 2);
        assert_eq!(trimmed_count(21, 0.1), 3);
        assert_eq!(trimmed_count(10, 0.0), 0);
    }

    #[test]
    fn k_equal_to_n_has_zero_objective() {
        let models: Vec<_> = (0..4).map(|i| model(i as f64 * 3.0, 1.0 + i as f64)).collect();
        let fit = k_barycenter(&models, 4, &BarycenterOptions::default()).unwrap();
        assert!(fit.objective.abs() < 1e-20);
        let mut seen: Vec<usize> = fit.assignment.iter().map(|a| a.unwrap()).collect();
        seen.sort();
        assert_eq!(seen, vec![0, 1, 2, 3]);
    }

    #[test]
    fn identical_groups_are_recovered() {
        let mut models = vec![model(0.0, 1.0); 3];
        models.extend(vec![model(50.0, 4.0); 3]);
        let fit = k_barycenter(&models, 2, &BarycenterOptions::default()).unwrap();
        assert_eq!(fit.objective, 0.0);
        let a = fit.assignment[0];
        assert!(fit.assignment[..3].iter().all(|x| *x == a));
        assert!(fit.assignment[3..].iter().all(|x| *x != a));
        for c in &fit.centers {
            assert!(c.same_gaussian(&models[0]) || c.same_gaussian(&models[3]));
        }
    }

    #[test]
    fn outliers_are_trimmed() {
        let mut models: Vec<_> = (0..9).map(|i| model(i as f64 * 0.01, 1.0)).collect();
        models.extend((0..9).map(|i| model(20.0 + i as f64 * 0.01, 1.0)));
        models.push(model(500.0, 1.0));
        models.push(model(-400.0, 1.0));
        let opts = BarycenterOptions {
            trim_alpha: 0.1,
            ..Default::default()
        };
        let fit = k_barycenter(&models, 2, &opts).unwrap();
        assert_eq!(fit.assignment[18], None);
        assert_eq!(fit.assignment[19], None);
        assert!(fit.assignment[..9].iter().all(|x| *x == fit.assignment[0]));
        assert!(fit.assignment[9..18].iter().all(|x| *x == fit.assignment[9]));
        assert_ne!(fit.assignment[0], fit.assignment[9]);
    }

    #[test]
    fn deterministic_given_seed() {
        let models: Vec<_> = (0..12).map(|i| model((i * 7 % 5) as f64, 1.0 + (i % 3) as f64)).collect();
        let opts = BarycenterOptions::default();
        assert_eq!(k_barycenter(&models, 3, &opts).unwrap(), k_barycenter(&models, 3, &opts).unwrap());
    }
}
