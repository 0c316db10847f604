use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::partition::DistanceMatrix;

/// Agglomerative linkage criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Linkage {
    Single,
    #[default]
    Complete,
    Average,
}

impl Linkage {
    pub fn name(&self) -> &'static str {
        match self {
            Linkage::Single => "single",
            Linkage::Complete => "complete",
            Linkage::Average => "average",
        }
    }
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            "average" => Ok(Linkage::Average),
            other => Err(Error::invalid(format!("unknown linkage '{other}'"))),
        }
    }
}

/// One agglomeration step. Node ids `< N` are leaves; merge `t` creates node `N + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    /// Number of leaves under the new node.
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    leaves: Vec<String>,
    merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn new(leaves: Vec<String>, merges: Vec<Merge>) -> Result<Self> {
        let n = leaves.len();
        if n == 0 {
            return Err(Error::invalid("dendrogram has no leaves"));
        }
        if merges.len() != n - 1 {
            return Err(Error::invalid(format!(
                "dendrogram with {n} leaves needs {} merges, got {}",
                n - 1,
                merges.len()
            )));
        }
        let mut used = vec![false; 2 * n - 1];
        let mut sizes: Vec<usize> = vec![1; n];
        for (t, m) in merges.iter().enumerate() {
            let node = n + t;
            for child in [m.left, m.right] {
                if child >= node || used[child] {
                    return Err(Error::invalid(format!("merge {t} has invalid child {child}")));
                }
                used[child] = true;
            }
            let size = sizes[m.left] + sizes[m.right];
            if size != m.size {
                return Err(Error::invalid(format!("merge {t} has size {} but joins {size} leaves", m.size)));
            }
            if !m.height.is_finite() || m.height < 0.0 {
                return Err(Error::invalid(format!("merge {t} has invalid height {}", m.height)));
            }
            sizes.push(size);
        }
        Ok(Self { leaves, merges })
    }

    pub fn leaves(&self) -> &[String] {
        &self.leaves
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    /// Height of a node: 0 for leaves, the merge height otherwise.
    pub fn node_height(&self, node: usize) -> f64 {
        let n = self.n_leaves();
        if node < n {
            0.0
        } else {
            self.merges[node - n].height
        }
    }

    pub fn root(&self) -> usize {
        2 * self.n_leaves() - 2
    }
}

/// Agglomerative clustering of a precomputed distance matrix.
///
/// Cluster distances are updated with the Lance–Williams recurrences. Each
/// active cluster lives in the slot of its smallest leaf; the closest pair
/// of slots merges, ties going to the lowest `(slot, slot)` pair.
pub fn hierarchical_cluster(dm: &DistanceMatrix, linkage: Linkage) -> Result<Dendrogram> {
    let n = dm.len();
    if n < 2 {
        return Err(Error::invalid(format!("hierarchical clustering needs at least 2 items, got {n}")));
    }
    let mut d = dm.as_matrix().clone();
    let mut active = vec![true; n];
    let mut node: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut merges = Vec::with_capacity(n - 1);

    for t in 0..n - 1 {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if active[j] && best.is_none_or(|(_, _, h)| d[(i, j)] < h) {
                    best = Some((i, j, d[(i, j)]));
                }
            }
        }
        let (i, j, height) = best.expect("at least two active clusters");
        merges.push(Merge {
            left: node[i],
            right: node[j],
            height,
            size: size[i] + size[j],
        });

        for k in 0..n {
            if !active[k] || k == i || k == j {
                continue;
            }
            let updated = match linkage {
                Linkage::Single => d[(i, k)].min(d[(j, k)]),
                Linkage::Complete => d[(i, k)].max(d[(j, k)]),
                Linkage::Average => {
                    (size[i] as f64 * d[(i, k)] + size[j] as f64 * d[(j, k)]) / (size[i] + size[j]) as f64
                }
            };
            d[(i, k)] = updated;
            d[(k, i)] = updated;
        }
        active[j] = false;
        node[i] = n + t;
        size[i] += size[j];
    }
    Dendrogram::new(dm.ids().to_vec(), merges)
}

/// A grouping of database entries; `None` marks noise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaPartition {
    ids: Vec<String>,
    assignment: Vec<Option<usize>>,
    n_groups: usize,
}

impl MetaPartition {
    /// Groups are renumbered `0..G` in order of their first member.
    pub fn new(ids: Vec<String>, assignment: Vec<Option<usize>>) -> Result<Self> {
        if ids.len() != assignment.len() {
            return Err(Error::DimensionMismatch {
                expected: ids.len(),
                found: assignment.len(),
            });
        }
        let mut remap: Vec<(usize, usize)> = Vec::new();
        let mut canonical = Vec::with_capacity(assignment.len());
        for g in &assignment {
            canonical.push(g.map(|g| match remap.iter().find(|(old, _)| *old == g) {
                Some(&(_, new)) => new,
                None => {
                    let new = remap.len();
                    remap.push((g, new));
                    new
                }
            }));
        }
        Ok(Self {
            ids,
            assignment: canonical,
            n_groups: remap.len(),
        })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn assignment(&self) -> &[Option<usize>] {
        &self.assignment
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Indices of the entries in group `g`.
    pub fn members(&self, g: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == Some(g))
            .collect()
    }

    pub fn noise(&self) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i].is_none()).collect()
    }

    pub fn group_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id).and_then(|i| self.assignment[i])
    }
}

/// Cuts the tree into exactly `k` groups by applying its first `N − k` merges.
pub fn cut_tree(t: &Dendrogram, k: usize) -> Result<MetaPartition> {
    let n = t.n_leaves();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("cannot cut {n} leaves into {k} groups")));
    }
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    for (s, m) in t.merges().iter().take(n - k).enumerate() {
        parent[m.left] = n + s;
        parent[m.right] = n + s;
    }
    let root_of = |mut x: usize| {
        while parent[x] != x {
            x = parent[x];
        }
        x
    };
    let assignment = (0..n).map(|leaf| Some(root_of(leaf))).collect();
    MetaPartition::new(t.leaves().to_vec(), assignment)
}

/// Group count at the widest gap between consecutive merge heights.
pub fn auto_group_count(t: &Dendrogram) -> usize {
    let n = t.n_leaves();
    let heights: Vec<f64> = t.merges().iter().map(|m| m.height).collect();
    let mut best: Option<(usize, f64)> = None;
    // applying the first `m` merges leaves `n - m` groups
    for m in 1..heights.len() {
        let gap = heights[m] - heights[m - 1];
        if best.is_none_or(|(_, g)| gap > g) {
            best = Some((m, gap));
        }
    }
    match best {
        Some((m, gap)) if gap > 0.0 => n - m,
        _ => 1,
    }
}
