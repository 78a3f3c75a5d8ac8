// SPDX-License-Identifier: Apache-2.0

//! HDBSCAN on 2D points.
//!
//! Mutual-reachability distances feed a dense Prim MST, the MST is turned
//! into a single-linkage dendrogram, the dendrogram is condensed with the
//! minimum cluster size and flat clusters are chosen by excess of mass.
//! Points outside every selected cluster are noise.

use std::collections::VecDeque;

use serde::Serialize;

use crate::embed::Point;
use crate::error::{Error, Result};

/// A selected cluster id, or `None` for noise.
pub type Label = Option<usize>;

/// CSV/JSON encoding of a noise label.
pub const NOISE_LABEL: i64 = -1;

pub fn label_code(label: Label) -> i64 {
    label.map_or(NOISE_LABEL, |c| c as i64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClusterResult {
    pub labels: Vec<Label>,
    pub num_clusters: usize,
    pub min_cluster_size: usize,
    /// Neighbour rank used for core distances.
    pub min_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HdbscanParams {
    pub min_cluster_size: usize,
    /// Defaults to `min_cluster_size`; capped at `K - 1`.
    pub min_samples: Option<usize>,
}

impl HdbscanParams {
    pub fn new(min_cluster_size: usize) -> Self {
        Self {
            min_cluster_size,
            min_samples: None,
        }
    }
}

fn euclidean(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Distance from each point to its `k`-th nearest other point.
pub fn core_distances(points: &[Point], k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidParameter("core neighbour count must be at least 1".into()));
    }
    if points.len() <= k {
        return Err(Error::InvalidParameter(format!(
            "need more than {k} points for core distances, got {}",
            points.len()
        )));
    }
    let mut buf = Vec::with_capacity(points.len());
    Ok(points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            buf.clear();
            buf.extend(
                points
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, q)| euclidean(p, q)),
            );
            let (_, kth, _) = buf.select_nth_unstable_by(k - 1, f64::total_cmp);
            *kth
        })
        .collect())
}

/// An MST edge between points `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

fn mutual_reachability(points: &[Point], core: &[f64], i: usize, j: usize) -> f64 {
    euclidean(&points[i], &points[j]).max(core[i]).max(core[j])
}

/// Prim's algorithm on the complete mutual-reachability graph, edges sorted
/// by weight with index tie-breaks.
fn minimum_spanning_tree(points: &[Point], core: &[f64]) -> Vec<Edge> {
    let n = points.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        let mut next_w = f64::INFINITY;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let w = mutual_reachability(points, core, current, j);
            if w < best[j] {
                best[j] = w;
                from[j] = current;
            }
            if next == usize::MAX || best[j] < next_w {
                next = j;
                next_w = best[j];
            }
        }
        in_tree[next] = true;
        edges.push(Edge {
            a: from[next].min(next),
            b: from[next].max(next),
            weight: next_w,
        });
        current = next;
    }
    edges.sort_by(|x, y| {
        x.weight
            .total_cmp(&y.weight)
            .then(x.a.cmp(&y.a))
            .then(x.b.cmp(&y.b))
    });
    edges
}

/// Minimum spanning tree of the mutual-reachability graph with `k_core`
/// neighbours, edges ascending by weight.
pub fn mutual_reachability_mst(points: &[Point], k_core: usize) -> Result<Vec<Edge>> {
    let core = core_distances(points, k_core)?;
    Ok(minimum_spanning_tree(points, &core))
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

/// Internal dendrogram node `K + i`. MST edges of equal weight are merged
/// in one step, so a node may have more than two children and the hierarchy
/// does not depend on how ties were ordered.
#[derive(Debug, Clone)]
struct Merge {
    children: Vec<usize>,
    distance: f64,
    size: usize,
}

fn single_linkage(n: usize, mst: &[Edge]) -> Vec<Merge> {
    // Union-find over points; `node_of[root]` is the dendrogram node currently
    // representing that component.
    let mut uf = UnionFind::new(n);
    let mut node_of: Vec<usize> = (0..n).collect();
    let mut merges: Vec<Merge> = Vec::with_capacity(n.saturating_sub(1));
    for group in mst.chunk_by(|x, y| x.weight == y.weight) {
        let before: Vec<[usize; 2]> = group
            .iter()
            .map(|e| [node_of[uf.find(e.a)], node_of[uf.find(e.b)]])
            .collect();
        for e in group {
            let (ra, rb) = (uf.find(e.a), uf.find(e.b));
            let (keep, drop) = if uf.size[ra] >= uf.size[rb] { (ra, rb) } else { (rb, ra) };
            uf.parent[drop] = keep;
            uf.size[keep] += uf.size[drop];
        }
        let mut pending: Vec<(usize, Vec<usize>)> = Vec::new();
        for (e, nodes) in group.iter().zip(before) {
            let root = uf.find(e.a);
            let slot = match pending.iter().position(|(r, _)| *r == root) {
                Some(p) => p,
                None => {
                    pending.push((root, Vec::new()));
                    pending.len() - 1
                }
            };
            pending[slot].1.extend(nodes);
        }
        for (root, mut children) in pending {
            children.sort_unstable();
            children.dedup();
            merges.push(Merge {
                children,
                distance: group[0].weight,
                size: uf.size[root],
            });
            node_of[root] = n + merges.len() - 1;
        }
    }
    merges
}

fn lambda_of(distance: f64) -> f64 {
    if distance > 0.0 {
        1.0 / distance
    } else {
        f64::INFINITY
    }
}

/// Condensed cluster hierarchy. Cluster 0 is the root; children always have
/// larger ids than their parents.
#[derive(Debug, Clone, PartialEq)]
struct CondensedTree {
    parent: Vec<Option<usize>>,
    birth: Vec<f64>,
    size: Vec<usize>,
    /// For each point, the cluster it leaves and the λ at which it leaves.
    exit: Vec<(usize, f64)>,
}

impl CondensedTree {
    fn num_clusters(&self) -> usize {
        self.parent.len()
    }

    fn children(&self, c: usize) -> impl Iterator<Item = usize> + '_ {
        (c + 1..self.parent.len()).filter(move |&d| self.parent[d] == Some(c))
    }

    /// Excess of mass of every cluster.
    fn stabilities(&self) -> Vec<f64> {
        let gap = |lambda: f64, birth: f64| if lambda == birth { 0.0 } else { lambda - birth };
        let mut s = vec![0.0; self.num_clusters()];
        for &(c, lambda) in &self.exit {
            s[c] += gap(lambda, self.birth[c]);
        }
        for d in 1..self.num_clusters() {
            let p = self.parent[d].expect("non-root clusters have parents");
            s[p] += self.size[d] as f64 * gap(self.birth[d], self.birth[p]);
        }
        s
    }
}

fn condense(n: usize, merges: &[Merge], min_cluster_size: usize) -> CondensedTree {
    let size_of = |node: usize| if node < n { 1 } else { merges[node - n].size };
    let mut tree = CondensedTree {
        parent: vec![None],
        birth: vec![0.0],
        size: vec![n],
        exit: vec![(0, 0.0); n],
    };
    let leave = |tree: &mut CondensedTree, node: usize, cluster: usize, lambda: f64| {
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if x < n {
                tree.exit[x] = (cluster, lambda);
            } else {
                stack.extend(&merges[x - n].children);
            }
        }
    };

    let root = n + merges.len() - 1;
    let mut queue = VecDeque::from([(root, 0usize)]);
    while let Some((node, cluster)) = queue.pop_front() {
        if node < n {
            // A singleton still inside its cluster at the bottom of the tree.
            tree.exit[node] = (cluster, f64::INFINITY);
            continue;
        }
        let m = &merges[node - n];
        let lambda = lambda_of(m.distance);
        let (big, small): (Vec<usize>, Vec<usize>) = m
            .children
            .iter()
            .partition(|&&c| size_of(c) >= min_cluster_size);
        for &child in &small {
            leave(&mut tree, child, cluster, lambda);
        }
        if let [only] = big[..] {
            queue.push_back((only, cluster));
        } else {
            for child in big {
                tree.parent.push(Some(cluster));
                tree.birth.push(lambda);
                tree.size.push(size_of(child));
                queue.push_back((child, tree.parent.len() - 1));
            }
        }
    }
    tree
}

/// Clusters chosen by excess of mass; the root is eligible.
fn select_clusters(tree: &CondensedTree) -> Vec<bool> {
    let stability = tree.stabilities();
    let k = tree.num_clusters();
    let mut keep_self = vec![false; k];
    let mut best = vec![0.0; k];
    for c in (0..k).rev() {
        let children: f64 = tree.children(c).map(|d| best[d]).sum();
        let has_children = tree.children(c).next().is_some();
        if !has_children || stability[c] >= children {
            keep_self[c] = true;
            best[c] = stability[c];
        } else {
            best[c] = children;
        }
    }
    let mut selected = vec![false; k];
    let mut stack = vec![0];
    while let Some(c) = stack.pop() {
        if keep_self[c] {
            selected[c] = true;
        } else {
            stack.extend(tree.children(c));
        }
    }
    selected
}

/// Maps points to selected clusters, numbering clusters by their lowest
/// member index.
fn label_points(tree: &CondensedTree, selected: &[bool]) -> (Vec<Label>, usize) {
    let root_cut = root_membership_cut(tree);
    let mut dense = vec![None; tree.num_clusters()];
    let mut next = 0;
    let labels = tree
        .exit
        .iter()
        .map(|&(c, lambda)| {
            let mut cur = Some(c);
            while let Some(x) = cur {
                if selected[x] {
                    break;
                }
                cur = tree.parent[x];
            }
            let s = cur?;
            if s == 0 && lambda < root_cut {
                return None;
            }
            Some(*dense[s].get_or_insert_with(|| {
                next += 1;
                next - 1
            }))
        })
        .collect();
    (labels, next)
}

/// λ below which points are noise when the root itself is selected: the
/// last level at which anything (a point or a child cluster) leaves the root.
/// This matches the reference implementation's single-cluster labelling.
fn root_membership_cut(tree: &CondensedTree) -> f64 {
    let points = tree.exit.iter().filter(|&&(c, _)| c == 0).map(|&(_, l)| l);
    let children = (1..tree.num_clusters())
        .filter(|&c| tree.parent[c] == Some(0))
        .map(|c| tree.birth[c]);
    points.chain(children).fold(0.0, f64::max)
}

/// Runs HDBSCAN with `min_samples = min_cluster_size`.
pub fn hdbscan(points: &[Point], min_cluster_size: usize) -> Result<ClusterResult> {
    hdbscan_with(points, &HdbscanParams::new(min_cluster_size))
}

/// Full HDBSCAN with explicit parameters.
pub fn hdbscan_with(points: &[Point], params: &HdbscanParams) -> Result<ClusterResult> {
    let n = points.len();
    let mcs = params.min_cluster_size;
    if n < 2 {
        return Err(Error::InvalidParameter(format!("HDBSCAN needs at least 2 points, got {n}")));
    }
    if mcs < 2 {
        return Err(Error::InvalidParameter("min cluster size must be at least 2".into()));
    }
    if params.min_samples == Some(0) {
        return Err(Error::InvalidParameter("min samples must be at least 1".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite embedding coordinates".into()));
    }
    let min_samples = params.min_samples.unwrap_or(mcs).min(n - 1);
    let result = |labels: Vec<Label>, num_clusters| ClusterResult {
        labels,
        num_clusters,
        min_cluster_size: mcs,
        min_samples,
    };
    if n < mcs {
        return Ok(result(vec![None; n], 0));
    }
    if points.iter().all(|p| p == &points[0]) {
        return Ok(result(vec![Some(0); n], 1));
    }
    let core = core_distances(points, min_samples)?;
    let mst = minimum_spanning_tree(points, &core);
    let merges = single_linkage(n, &mst);
    let tree = condense(n, &merges, mcs);
    let selected = select_clusters(&tree);
    let (labels, num_clusters) = label_points(&tree, &selected);
    Ok(result(labels, num_clusters))
}

/// 0-based indices of noise points, ascending.
pub fn outliers(result: &ClusterResult) -> Vec<usize> {
    result
        .labels
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_none())
        .map(|(i, _)| i)
        .collect()
}
