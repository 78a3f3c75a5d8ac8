// SPDX-License-Identifier: Apache-2.0

//! Slow, definition-following reference implementations shared by the
//! integration tests.

#![allow(dead_code)]

use gla::hmm::HmmParams;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Sums the joint probability of `seq` over every hidden path.
pub fn brute_force_likelihood(h: &HmmParams, seq: &[usize]) -> f64 {
    let s = h.num_states();
    let n = seq.len();
    let mut path = vec![0usize; n];
    let mut total = 0.0;
    loop {
        let mut p = h.pi()[path[0]] * h.emit(path[0], seq[0]);
        for t in 1..n {
            p *= h.trans(path[t - 1], path[t]) * h.emit(path[t], seq[t]);
        }
        total += p;
        // Odometer increment over S^n paths.
        let mut t = 0;
        while t < n {
            path[t] += 1;
            if path[t] < s {
                break;
            }
            path[t] = 0;
            t += 1;
        }
        if t == n {
            return total;
        }
    }
}

/// Every sequence of length `n` over `0..alphabet`.
pub fn all_sequences(alphabet: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..alphabet).map(move |a| {
                    let mut s = prefix.clone();
                    s.push(a);
                    s
                })
            })
            .collect();
    }
    out
}

pub fn random_sequence(rng: &mut ChaCha8Rng, len: usize, alphabet: usize) -> Vec<usize> {
    (0..len).map(|_| rng.random_range(0..alphabet)).collect()
}

/// Renumbers cluster ids by first appearance; noise stays `-1`.
pub fn canonical(labels: &[i64]) -> Vec<i64> {
    let mut seen: Vec<i64> = Vec::new();
    labels
        .iter()
        .map(|&l| {
            if l < 0 {
                return -1;
            }
            match seen.iter().position(|&s| s == l) {
                Some(p) => p as i64,
                None => {
                    seen.push(l);
                    seen.len() as i64 - 1
                }
            }
        })
        .collect()
}

fn dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Core distances by full sort, self excluded.
pub fn oracle_core_distances(points: &[[f64; 2]], k: usize) -> Vec<f64> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> = points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| dist(p, q))
                .collect();
            d.sort_by(f64::total_cmp);
            d[k - 1]
        })
        .collect()
}

pub fn mutual_reachability_matrix(points: &[[f64; 2]], k: usize) -> Vec<Vec<f64>> {
    let core = oracle_core_distances(points, k);
    let n = points.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| dist(&points[i], &points[j]).max(core[i]).max(core[j]))
                .collect()
        })
        .collect()
}

/// Minimum spanning-tree weight by enumerating all `n^(n-2)` labelled trees
/// through their Prüfer sequences.
pub fn exhaustive_mst_weight(weights: &[Vec<f64>]) -> f64 {
    let n = weights.len();
    if n == 2 {
        return weights[0][1];
    }
    let len = n - 2;
    let mut code = vec![0usize; len];
    let mut best = f64::INFINITY;
    loop {
        let mut degree = vec![1usize; n];
        for &c in &code {
            degree[c] += 1;
        }
        let mut total = 0.0;
        for &c in &code {
            let leaf = (0..n).find(|&v| degree[v] == 1).expect("a leaf exists");
            total += weights[leaf][c];
            degree[leaf] = 0;
            degree[c] -= 1;
        }
        let last: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
        total += weights[last[0]][last[1]];
        best = best.min(total);

        let mut t = 0;
        while t < len {
            code[t] += 1;
            if code[t] < n {
                break;
            }
            code[t] = 0;
            t += 1;
        }
        if t == len {
            return best;
        }
    }
}

struct OracleCluster {
    parent: Option<usize>,
    birth: f64,
    members: Vec<usize>,
    alive: bool,
    /// λ at which each point that was ever a member left this cluster.
    left: Vec<(usize, f64)>,
}

fn components(members: &[usize], mrd: &[Vec<f64>], below: f64) -> Vec<Vec<usize>> {
    let mut seen = vec![false; members.len()];
    let mut out = Vec::new();
    for start in 0..members.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![members[start]];
        let mut frontier = vec![start];
        while let Some(a) = frontier.pop() {
            for b in 0..members.len() {
                if !seen[b] && mrd[members[a]][members[b]] < below {
                    seen[b] = true;
                    comp.push(members[b]);
                    frontier.push(b);
                }
            }
        }
        out.push(comp);
    }
    out
}

fn lambda(w: f64) -> f64 {
    if w > 0.0 {
        1.0 / w
    } else {
        f64::INFINITY
    }
}

fn gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        a - b
    }
}

/// HDBSCAN straight from the definitions: components of the
/// mutual-reachability graph are recomputed at every distinct edge weight,
/// stabilities are summed per member and the flat selection is the best
/// antichain found by enumerating every subset of clusters. Returns labels
/// with `-1` for noise.
pub fn oracle_hdbscan(points: &[[f64; 2]], mcs: usize, min_samples: Option<usize>) -> Vec<i64> {
    let n = points.len();
    if n < mcs {
        return vec![-1; n];
    }
    if points.iter().all(|p| p == &points[0]) {
        return vec![0; n];
    }
    let k = min_samples.unwrap_or(mcs).min(n - 1);
    let mrd = mutual_reachability_matrix(points, k);
    let mut levels: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| mrd[i][j])
        .collect();
    levels.sort_by(|a, b| b.total_cmp(a));
    levels.dedup();

    let mut clusters = vec![OracleCluster {
        parent: None,
        birth: 0.0,
        members: (0..n).collect(),
        alive: true,
        left: Vec::new(),
    }];
    // Last cluster each point belonged to and the λ it left that cluster at.
    let mut deepest = vec![(0usize, 0.0f64); n];
    for &w in &levels {
        let l = lambda(w);
        for c in 0..clusters.len() {
            if !clusters[c].alive {
                continue;
            }
            let comps = components(&clusters[c].members, &mrd, w);
            let (big, small): (Vec<Vec<usize>>, Vec<Vec<usize>>) =
                comps.into_iter().partition(|comp| comp.len() >= mcs);
            for &p in small.iter().flatten() {
                clusters[c].left.push((p, l));
                deepest[p] = (c, l);
            }
            match big.len() {
                0 => clusters[c].alive = false,
                1 => clusters[c].members = big.into_iter().next().unwrap(),
                _ => {
                    clusters[c].alive = false;
                    for comp in big {
                        for &p in &comp {
                            clusters[c].left.push((p, l));
                        }
                        clusters.push(OracleCluster {
                            parent: Some(c),
                            birth: l,
                            members: comp,
                            alive: true,
                            left: Vec::new(),
                        });
                    }
                }
            }
        }
    }

    let m = clusters.len();
    let stability: Vec<f64> = clusters
        .iter()
        .map(|c| c.left.iter().map(|&(_, l)| gap(l, c.birth)).sum())
        .collect();
    let ancestors = |mut c: usize| {
        let mut chain = vec![c];
        while let Some(p) = clusters[c].parent {
            chain.push(p);
            c = p;
        }
        chain
    };
    let depth: Vec<usize> = (0..m).map(|c| ancestors(c).len() - 1).collect();

    // Best antichain; among equal totals prefer clusters nearer the root.
    let mut best: Option<(f64, usize, u64)> = None;
    for mask in 0u64..(1 << m) {
        let chosen: Vec<usize> = (0..m).filter(|&c| mask >> c & 1 == 1).collect();
        let nested = chosen
            .iter()
            .any(|&c| ancestors(c)[1..].iter().any(|a| mask >> a & 1 == 1));
        if nested {
            continue;
        }
        let total: f64 = chosen.iter().map(|&c| stability[c]).sum();
        let depth_sum: usize = chosen.iter().map(|&c| depth[c]).sum();
        let better = match best {
            None => true,
            Some((bt, bd, _)) => {
                let tol = 1e-12 * bt.abs().max(total.abs()).max(1.0);
                if (total - bt).abs() <= tol {
                    depth_sum < bd
                } else {
                    total > bt
                }
            }
        };
        if better {
            best = Some((total, depth_sum, mask));
        }
    }
    let mask = best.expect("the empty selection always exists").2;

    let root_cut = clusters[0]
        .left
        .iter()
        .map(|&(_, l)| l)
        .fold(0.0, f64::max);
    (0..n)
        .map(|p| {
            let (leaf, exit) = deepest[p];
            match ancestors(leaf).into_iter().find(|&c| mask >> c & 1 == 1) {
                None => -1,
                Some(0) if exit < root_cut => -1,
                Some(c) => c as i64,
            }
        })
        .collect()
}

/// A random small 2D instance: a few Gaussian blobs, sometimes a far point
/// and sometimes an exact duplicate.
pub fn random_instance(rng: &mut ChaCha8Rng, max_points: usize) -> Vec<[f64; 2]> {
    let n = rng.random_range(3..=max_points);
    let blobs = rng.random_range(1..=3);
    let centres: Vec<[f64; 2]> = (0..blobs)
        .map(|_| [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)])
        .collect();
    let spread = rng.random_range(0.2..2.0);
    let mut pts: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            let c = centres[rng.random_range(0..blobs)];
            let u: f64 = rng.random_range(-1.0..1.0);
            let v: f64 = rng.random_range(-1.0..1.0);
            [c[0] + spread * u, c[1] + spread * v]
        })
        .collect();
    if rng.random_bool(0.3) {
        pts[n - 1] = [rng.random_range(30.0..60.0), rng.random_range(30.0..60.0)];
    }
    if n > 3 && rng.random_bool(0.2) {
        pts[1] = pts[0];
    }
    pts
}
