//! HDBSCAN over a precomputed distance matrix.
//!
//! 1. core distance of `i`: distance to its `min_cluster_size`-th nearest
//!    neighbour, counting `i` itself as the first;
//! 2. mutual reachability `max(core_i, core_j, d_ij)`;
//! 3. minimum spanning tree of the mutual-reachability graph (Prim);
//! 4. single-linkage hierarchy from the sorted tree edges;
//! 5. condensed tree with `λ = 1/distance`, clusters smaller than
//!    `min_cluster_size` falling out as points;
//! 6. excess-of-mass selection, never selecting the root.
//!
//! With `min_cluster_size = 1` a single point can form a cluster; such a
//! point never falls out, and is treated as persisting up to the largest
//! representable `λ` of the tree.

use crate::error::{Error, Result};
use crate::partition::DistanceMatrix;

use super::hierarchy::MetaPartition;

/// Density-based grouping of the matrix items; unclustered items are noise.
pub fn density_cluster(dm: &DistanceMatrix, min_cluster_size: usize) -> Result<MetaPartition> {
    let n = dm.len();
    if n == 0 {
        return Err(Error::invalid("density clustering needs at least one item"));
    }
    if min_cluster_size == 0 {
        return Err(Error::invalid("min_cluster_size must be at least 1"));
    }
    let ids = dm.ids().to_vec();
    if n == 1 {
        let assignment = vec![(min_cluster_size <= 1).then_some(0)];
        return MetaPartition::new(ids, assignment);
    }

    let core = core_distances(dm, min_cluster_size);
    let reach = |i: usize, j: usize| dm.get(i, j).max(core[i]).max(core[j]);
    let edges = minimum_spanning_tree(n, reach);
    let linkage = single_linkage(n, edges);
    let max_dist = linkage.iter().map(|m| m.2).fold(0.0, f64::max);
    let floor = if max_dist > 0.0 { max_dist * 1e-12 } else { 1.0 };
    let tree = CondensedTree::build(n, &linkage, min_cluster_size, floor);
    let selected = tree.select_eom();
    MetaPartition::new(ids, tree.label_points(&selected))
}

fn core_distances(dm: &DistanceMatrix, min_cluster_size: usize) -> Vec<f64> {
    let n = dm.len();
    let k = min_cluster_size.min(n);
    (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| dm.get(i, j)).collect();
            row.sort_by(f64::total_cmp);
            row[k - 1]
        })
        .collect()
}

/// Prim's algorithm on the dense graph; returns `(a, b, weight)` edges.
fn minimum_spanning_tree(n: usize, weight: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize, f64)> {
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        for j in 0..n {
            if !in_tree[j] {
                let w = weight(current, j);
                if w < best[j] {
                    best[j] = w;
                    from[j] = current;
                }
            }
        }
        let next = (0..n)
            .filter(|&j| !in_tree[j])
            .min_by(|&a, &b| best[a].total_cmp(&best[b]).then(a.cmp(&b)))
            .expect("a vertex remains outside the tree");
        edges.push((from[next].min(next), from[next].max(next), best[next]));
        in_tree[next] = true;
        current = next;
    }
    edges
}

/// Merges `(left node, right node, distance, size)` in scipy node numbering.
fn single_linkage(n: usize, mut edges: Vec<(usize, usize, f64)>) -> Vec<(usize, usize, f64, usize)> {
    edges.sort_by(|a, b| a.2.total_cmp(&b.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    let mut size = vec![1usize; 2 * n - 1];
    let find = |parent: &mut Vec<usize>, mut x: usize| {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    };
    let mut merges = Vec::with_capacity(n - 1);
    for (t, (a, b, w)) in edges.into_iter().enumerate() {
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        let node = n + t;
        parent[ra] = node;
        parent[rb] = node;
        size[node] = size[ra] + size[rb];
        merges.push((ra, rb, w, size[node]));
    }
    merges
}

struct CondensedTree {
    n_points: usize,
    /// Parent cluster of each cluster (`None` for the root, cluster 0).
    cluster_parent: Vec<Option<usize>>,
    cluster_birth: Vec<f64>,
    /// `(parent cluster, λ, size)` for clusters splitting off; indexed by child cluster.
    cluster_split: Vec<(f64, usize)>,
    /// Per point: the cluster it falls out of and the λ at which it does.
    point_exit: Vec<(usize, f64)>,
}

impl CondensedTree {
    fn build(n: usize, linkage: &[(usize, usize, f64, usize)], min_size: usize, floor: f64) -> Self {
        let lambda_of = |d: f64| 1.0 / d.max(floor);
        let lambda_cap = 1.0 / floor;
        let node_size = |node: usize| if node < n { 1 } else { linkage[node - n].3 };

        let mut tree = CondensedTree {
            n_points: n,
            cluster_parent: vec![None],
            cluster_birth: vec![0.0],
            cluster_split: vec![(0.0, n)],
            point_exit: vec![(0, 0.0); n],
        };

        // (hierarchy node, cluster it currently belongs to)
        let mut stack = vec![(2 * n - 2, 0usize)];
        while let Some((node, cluster)) = stack.pop() {
            if node < n {
                // only reached by a one-point cluster
                tree.point_exit[node] = (cluster, lambda_cap);
                continue;
            }
            let (left, right, dist, _) = linkage[node - n];
            let lambda = lambda_of(dist);
            let (ls, rs) = (node_size(left), node_size(right));
            match (ls >= min_size, rs >= min_size) {
                (true, true) => {
                    for child in [left, right] {
                        let id = tree.cluster_parent.len();
                        tree.cluster_parent.push(Some(cluster));
                        tree.cluster_birth.push(lambda);
                        tree.cluster_split.push((lambda, node_size(child)));
                        stack.push((child, id));
                    }
                }
                (false, false) => {
                    for child in [left, right] {
                        tree.fall_out(child, cluster, lambda, n, linkage);
                    }
                }
                (true, false) => {
                    tree.fall_out(right, cluster, lambda, n, linkage);
                    stack.push((left, cluster));
                }
                (false, true) => {
                    tree.fall_out(left, cluster, lambda, n, linkage);
                    stack.push((right, cluster));
                }
            }
        }
        tree
    }

    fn fall_out(&mut self, node: usize, cluster: usize, lambda: f64, n: usize, linkage: &[(usize, usize, f64, usize)]) {
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if x < n {
                self.point_exit[x] = (cluster, lambda);
            } else {
                let (l, r, _, _) = linkage[x - n];
                stack.push(l);
                stack.push(r);
            }
        }
    }

    fn n_clusters(&self) -> usize {
        self.cluster_parent.len()
    }

    fn stabilities(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n_clusters()];
        for &(c, lambda) in &self.point_exit {
            s[c] += lambda - self.cluster_birth[c];
        }
        for child in 1..self.n_clusters() {
            let parent = self.cluster_parent[child].expect("non-root clusters have a parent");
            let (lambda, size) = self.cluster_split[child];
            s[parent] += (lambda - self.cluster_birth[parent]) * size as f64;
        }
        s
    }

    /// Excess-of-mass selection; children always carry larger ids than parents.
    fn select_eom(&self) -> Vec<bool> {
        let m = self.n_clusters();
        let mut stability = self.stabilities();
        let mut selected = vec![false; m];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); m];
        for c in 1..m {
            children[self.cluster_parent[c].unwrap()].push(c);
        }
        for c in (1..m).rev() {
            let child_total: f64 = children[c].iter().map(|&ch| stability[ch]).sum();
            if child_total > stability[c] {
                stability[c] = child_total;
            } else {
                selected[c] = true;
                let mut stack = children[c].clone();
                while let Some(d) = stack.pop() {
                    selected[d] = false;
                    stack.extend(children[d].iter().copied());
                }
            }
        }
        selected
    }

    fn label_points(&self, selected: &[bool]) -> Vec<Option<usize>> {
        let owner = |mut c: usize| -> Option<usize> {
            loop {
                if selected[c] {
                    return Some(c);
                }
                c = self.cluster_parent[c]?;
            }
        };
        (0..self.n_points).map(|p| owner(self.point_exit[p].0)).collect()
    }
}
