//! Independent reference implementations and random fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use otgate::partition::DistanceMatrix;
use otgate::templates::Linkage;
use otgate::{ClusterModel, CytometrySummary, SpdMatrix};

/// Minimum transport cost by enumerating every vertex of the transportation polytope.
///
/// A vertex is a basic feasible solution: a set of `m + n − 1` cells forming a
/// spanning tree of the bipartite row/column graph, with the flows forced by
/// the marginals all nonnegative.
pub fn brute_force_ot(a: &[f64], b: &[f64], cost: &DMatrix<f64>) -> f64 {
    let (m, n) = (a.len(), b.len());
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let size = m + n - 1;
    let mut best = f64::INFINITY;
    let mut pick = Vec::with_capacity(size);
    choose(&cells, size, 0, &mut pick, &mut |basis| {
        if let Some(flow) = tree_flow(a, b, basis) {
            let c: f64 = basis.iter().zip(&flow).map(|(&(i, j), f)| cost[(i, j)] * f).sum();
            best = best.min(c);
        }
    });
    best
}

fn choose<T: Copy>(items: &[T], k: usize, start: usize, pick: &mut Vec<T>, f: &mut impl FnMut(&[T])) {
    if pick.len() == k {
        f(pick);
        return;
    }
    for i in start..items.len() {
        if items.len() - i < k - pick.len() {
            break;
        }
        pick.push(items[i]);
        choose(items, k, i + 1, pick, f);
        pick.pop();
    }
}

/// Flows on a basis, found by repeatedly settling a row or column with a single open cell.
fn tree_flow(a: &[f64], b: &[f64], basis: &[(usize, usize)]) -> Option<Vec<f64>> {
    let (m, n) = (a.len(), b.len());
    let mut row_left = a.to_vec();
    let mut col_left = b.to_vec();
    let mut flow = vec![f64::NAN; basis.len()];
    let mut open: Vec<bool> = vec![true; basis.len()];
    for _ in 0..basis.len() {
        let mut settled = false;
        for node in 0..m + n {
            let incident: Vec<usize> = (0..basis.len())
                .filter(|&e| open[e] && if node < m { basis[e].0 == node } else { basis[e].1 == node - m })
                .collect();
            if incident.len() == 1 {
                let e = incident[0];
                let (i, j) = basis[e];
                let f = if node < m { row_left[i] } else { col_left[j] };
                flow[e] = f;
                row_left[i] -= f;
                col_left[j] -= f;
                open[e] = false;
                settled = true;
                break;
            }
        }
        if !settled {
            // a cycle: not a spanning tree
            return None;
        }
    }
    let balanced = row_left.iter().chain(&col_left).all(|r| r.abs() < 1e-9);
    (balanced && flow.iter().all(|&f| f >= -1e-12)).then_some(flow)
}

/// Minimum cost over all injective assignments of the smaller side into the larger.
pub fn brute_force_assignment(cost: &DMatrix<f64>) -> f64 {
    let c = if cost.nrows() <= cost.ncols() { cost.clone() } else { cost.transpose() };
    let mut used = vec![false; c.ncols()];
    fn go(c: &DMatrix<f64>, row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if row == c.nrows() {
            *best = best.min(acc);
            return;
        }
        for j in 0..c.ncols() {
            if !used[j] {
                used[j] = true;
                go(c, row + 1, used, acc + c[(row, j)], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(&c, 0, &mut used, 0.0, &mut best);
    best
}

/// Agglomeration that recomputes every cluster distance from the original matrix at each step.
///
/// Returns, per merge, the leaves of the merged cluster and the merge height.
pub fn naive_agglomeration(dm: &DMatrix<f64>, linkage: Linkage) -> Vec<(BTreeSet<usize>, f64)> {
    let n = dm.nrows();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut out = Vec::new();
    while clusters.len() > 1 {
        let mut best = (0, 1, f64::INFINITY);
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let pairs = clusters[a].iter().flat_map(|&i| clusters[b].iter().map(move |&j| dm[(i, j)]));
                let d = match linkage {
                    Linkage::Single => pairs.fold(f64::INFINITY, f64::min),
                    Linkage::Complete => pairs.fold(f64::NEG_INFINITY, f64::max),
                    Linkage::Average => {
                        let v: Vec<f64> = pairs.collect();
                        v.iter().sum::<f64>() / v.len() as f64
                    }
                };
                if d < best.2 {
                    best = (a, b, d);
                }
            }
        }
        let (a, b, h) = best;
        let right = clusters.remove(b);
        clusters[a].extend(right);
        out.push((clusters[a].iter().copied().collect(), h));
    }
    out
}

/// Leaves under every merge of a dendrogram, with its height.
pub fn dendrogram_clusters(t: &otgate::templates::Dendrogram) -> Vec<(BTreeSet<usize>, f64)> {
    let n = t.n_leaves();
    let mut members: Vec<BTreeSet<usize>> = (0..n).map(|i| BTreeSet::from([i])).collect();
    let mut out = Vec::new();
    for m in t.merges() {
        let joined: BTreeSet<usize> = members[m.left].union(&members[m.right]).copied().collect();
        members.push(joined.clone());
        out.push((joined, m.height));
    }
    out
}

/// Double loop over ground-truth and predicted label sets.
pub fn naive_f_measure(gt: &[String], pred: &[String]) -> f64 {
    let m = gt.len() as f64;
    let gt_labels: BTreeSet<&String> = gt.iter().collect();
    let pred_labels: BTreeSet<&String> = pred.iter().collect();
    let mut total = 0.0;
    for g in &gt_labels {
        let in_g: Vec<usize> = (0..gt.len()).filter(|&i| &gt[i] == *g).collect();
        let mut best: f64 = 0.0;
        for p in &pred_labels {
            let in_p = pred.iter().filter(|l| l == p).count() as f64;
            let both = in_g.iter().filter(|&&i| &pred[i] == *p).count() as f64;
            let (r, pr) = (both / in_g.len() as f64, both / in_p);
            let f = if r + pr > 0.0 { 2.0 * r * pr / (r + pr) } else { 0.0 };
            best = best.max(f);
        }
        total += in_g.len() as f64 / m * best;
    }
    total
}

pub fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

pub fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> SpdMatrix {
    let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let m = &a * a.transpose() + DMatrix::identity(d, d) * 0.1;
    SpdMatrix::new(0.5 * (&m + m.transpose())).unwrap()
}

pub fn random_model(rng: &mut ChaCha8Rng, d: usize, spread: f64, weight: f64) -> ClusterModel {
    let mean = DVector::from_fn(d, |_, _| spread * rng.sample::<f64, _>(StandardNormal));
    ClusterModel::new(mean, random_spd(rng, d), weight, None).unwrap()
}

pub fn random_summary(rng: &mut ChaCha8Rng, id: &str, k: usize, d: usize) -> CytometrySummary {
    let w = random_weights(rng, k);
    let clusters = w.iter().map(|&w| random_model(rng, d, 5.0, w)).collect();
    CytometrySummary::renormalized(id, clusters).unwrap()
}

pub fn random_distance_matrix(rng: &mut ChaCha8Rng, n: usize) -> DistanceMatrix {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let v = rng.random_range(0.0..10.0);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    DistanceMatrix::new((0..n).map(|i| format!("e{i}")).collect(), m).unwrap()
}

/// Adjusted Rand index between two labellings, from the pair-counting contingency table.
pub fn adjusted_rand_index<A: Ord, B: Ord>(x: &[A], y: &[B]) -> f64 {
    use std::collections::BTreeMap;
    assert_eq!(x.len(), y.len());
    let choose2 = |n: usize| (n * n.saturating_sub(1)) as f64 / 2.0;
    let mut table: BTreeMap<(&A, &B), usize> = BTreeMap::new();
    let mut rows: BTreeMap<&A, usize> = BTreeMap::new();
    let mut cols: BTreeMap<&B, usize> = BTreeMap::new();
    for (a, b) in x.iter().zip(y) {
        *table.entry((a, b)).or_default() += 1;
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
    }
    let index: f64 = table.values().map(|&n| choose2(n)).sum();
    let sa: f64 = rows.values().map(|&n| choose2(n)).sum();
    let sb: f64 = cols.values().map(|&n| choose2(n)).sum();
    let expected = sa * sb / choose2(x.len());
    let max = 0.5 * (sa + sb);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Symmetric square root by eigendecomposition.
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = m.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}
