// SPDX-License-Identifier: Apache-2.0

//! Exact t-SNE into two dimensions.
//!
//! Input affinities are Gaussian conditionals on squared Euclidean distances,
//! each row's bandwidth bisected until its entropy matches `ln(perplexity)`,
//! then symmetrised. The embedding minimises `KL(P || Q)` with a Student-t
//! kernel by gradient descent with momentum, per-coordinate gains and early
//! exaggeration.
//!
//! Every per-point sum runs over `j` in index order and row totals are
//! reduced in index order, so serial and parallel runs agree bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauge::FeatureMatrix;
use crate::par::{self, Execution};

const ENTROPY_TOL: f64 = 1e-9;
const MAX_BISECTIONS: usize = 400;
const MIN_GAIN: f64 = 0.01;

pub type Point = [f64; 2];

/// Symmetric joint input probabilities `P`, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    n: usize,
    p: Vec<f64>,
    perplexity: f64,
    row_entropies: Vec<f64>,
}

impl AffinityMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.p[i * self.n..(i + 1) * self.n]
    }

    pub fn perplexity(&self) -> f64 {
        self.perplexity
    }

    /// Entropy (nats) of each calibrated conditional row.
    pub fn row_entropies(&self) -> &[f64] {
        &self.row_entropies
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// One conditional row `p_{·|i}` with its entropy.
struct CalibratedRow {
    probs: Vec<f64>,
    entropy: f64,
}

/// Fills `weights` with the normalised row `exp(-beta * shifted_j)` and
/// returns its entropy.
fn row_at(shifted: &[f64], skip: usize, beta: f64, weights: &mut [f64]) -> f64 {
    let mut z = 0.0;
    let mut weighted = 0.0;
    for (j, (&d, w)) in shifted.iter().zip(weights.iter_mut()).enumerate() {
        if j == skip {
            *w = 0.0;
            continue;
        }
        let e = (-beta * d).exp();
        *w = e;
        z += e;
        weighted += e * d;
    }
    weights.iter_mut().for_each(|w| *w /= z);
    z.ln() + beta * weighted / z
}

/// Bisects the precision of row `i` so its entropy equals `target`.
///
/// When `target` is below the entropy floor set by tied nearest neighbours
/// the sharpest reachable row is returned.
fn calibrate_row(dists: &[f64], i: usize, target: f64) -> CalibratedRow {
    let n = dists.len();
    let dmin = dists
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = dists.iter().map(|&d| d - dmin).collect();
    // Start from the scale of the raw distances: near-ties then stay ties
    // instead of being magnified by a bandwidth fitted to rounding noise.
    let scale: f64 = dists
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &d)| d)
        .sum::<f64>()
        / (n - 1) as f64;

    let mut weights = vec![0.0; n];
    let mut beta = if scale > 0.0 { 1.0 / scale } else { 1.0 };

    let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
    let mut entropy = row_at(&shifted, i, beta, &mut weights);
    for _ in 0..MAX_BISECTIONS {
        let diff = entropy - target;
        if diff.abs() <= ENTROPY_TOL {
            break;
        }
        let next = if diff > 0.0 {
            lo = beta;
            if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 }
        } else {
            hi = beta;
            0.5 * (beta + lo)
        };
        if !next.is_finite() || next == beta {
            break;
        }
        beta = next;
        entropy = row_at(&shifted, i, beta, &mut weights);
    }
    CalibratedRow {
        probs: weights,
        entropy,
    }
}

/// Per-row Gaussian conditionals `p_{j|i}`, each calibrated to `perplexity`.
/// Row `i` has a zero at position `i`.
pub fn conditional_affinities(
    features: &FeatureMatrix,
    perplexity: f64,
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    Ok(calibrated_rows(features, perplexity, exec)?
        .into_iter()
        .map(|r| r.probs)
        .collect())
}

fn calibrated_rows(
    features: &FeatureMatrix,
    perplexity: f64,
    exec: Execution,
) -> Result<Vec<CalibratedRow>> {
    let n = features.rows();
    if n < 3 {
        return Err(Error::InvalidParameter(format!(
            "t-SNE needs at least 3 points, got {n}"
        )));
    }
    if !(perplexity > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "perplexity must exceed 1, got {perplexity}"
        )));
    }
    if perplexity >= n as f64 {
        return Err(Error::PerplexityTooLarge {
            perplexity,
            points: n,
        });
    }
    if features.iter_rows().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(
            "feature matrix holds non-finite values; clamp them first".into(),
        ));
    }
    let target = perplexity.ln();
    Ok(par::map_range(exec, n, |i| {
        let xi = features.row(i);
        let dists: Vec<f64> = (0..n).map(|j| squared_distance(xi, features.row(j))).collect();
        calibrate_row(&dists, i, target)
    }))
}

/// Calibrated, symmetrised input affinities `P_ij = (p_{j|i} + p_{i|j}) / 2K`.
pub fn affinities(features: &FeatureMatrix, perplexity: f64, exec: Execution) -> Result<AffinityMatrix> {
    let rows = calibrated_rows(features, perplexity, exec)?;
    let n = rows.len();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = (rows[i].probs[j] + rows[j].probs[i]) / (2 * n) as f64;
            }
        }
    }
    Ok(AffinityMatrix {
        n,
        p,
        perplexity,
        row_entropies: rows.iter().map(|r| r.entropy).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsneOptions {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch_iter: usize,
    /// Standard deviation of the Gaussian initial layout.
    pub init_std: f64,
}

impl Default for TsneOptions {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            seed: 0,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch_iter: 250,
            init_std: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding2D {
    pub points: Vec<Point>,
    /// KL divergence before each update, followed by the final value.
    pub kl_trace: Vec<f64>,
}

impl Embedding2D {
    pub fn initial_kl(&self) -> f64 {
        self.kl_trace[0]
    }

    pub fn final_kl(&self) -> f64 {
        *self.kl_trace.last().expect("non-empty trace")
    }
}

fn student_t(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    1.0 / (1.0 + dx * dx + dy * dy)
}

/// Sum of the unnormalised Student-t kernel over all ordered pairs.
fn kernel_total(y: &[Point], exec: Execution) -> f64 {
    let n = y.len();
    let rows = par::map_range(exec, n, |i| {
        let mut s = 0.0;
        for j in 0..n {
            if j != i {
                s += student_t(&y[i], &y[j]);
            }
        }
        s
    });
    rows.iter().sum()
}

/// Gradient and KL at `y` in one sweep. `exaggeration` scales `P` in the
/// gradient only; the KL always uses the true `P`.
fn gradient_and_kl(
    p: &AffinityMatrix,
    y: &[Point],
    exaggeration: f64,
    exec: Execution,
) -> (Vec<Point>, f64) {
    let n = y.len();
    let z = kernel_total(y, exec);
    let ln_z = z.ln();
    let rows = par::map_range(exec, n, |i| {
        let prow = p.row(i);
        let mut g = [0.0, 0.0];
        let mut kl = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let w = student_t(&y[i], &y[j]);
            let pij = prow[j];
            let coeff = (exaggeration * pij - w / z) * w;
            g[0] += coeff * (y[i][0] - y[j][0]);
            g[1] += coeff * (y[i][1] - y[j][1]);
            if pij > 0.0 {
                kl += pij * (pij.ln() - w.ln() + ln_z);
            }
        }
        ([4.0 * g[0], 4.0 * g[1]], kl)
    });
    let kl = rows.iter().map(|r| r.1).sum();
    (rows.into_iter().map(|r| r.0).collect(), kl)
}

/// `KL(P || Q(y))`.
pub fn kl_divergence(p: &AffinityMatrix, y: &[Point]) -> f64 {
    gradient_and_kl(p, y, 1.0, Execution::Serial).1
}

/// Analytic `∂KL/∂y_i` for every point.
pub fn kl_gradient(p: &AffinityMatrix, y: &[Point]) -> Vec<Point> {
    gradient_and_kl(p, y, 1.0, Execution::Serial).0
}

/// Seeded Gaussian starting layout.
pub fn initial_layout(n: usize, std: f64, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).expect("positive standard deviation");
    (0..n)
        .map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)])
        .collect()
}

fn recenter(y: &mut [Point]) {
    let n = y.len() as f64;
    let mx = y.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = y.iter().map(|p| p[1]).sum::<f64>() / n;
    for p in y.iter_mut() {
        p[0] -= mx;
        p[1] -= my;
    }
}

/// Optimises a 2D layout for precomputed affinities.
pub fn tsne_from_affinities(p: &AffinityMatrix, opts: &TsneOptions, exec: Execution) -> Result<Embedding2D> {
    if opts.iterations == 0 {
        return Err(Error::InvalidParameter("t-SNE needs at least one iteration".into()));
    }
    if !(opts.learning_rate > 0.0) || !(opts.init_std > 0.0) {
        return Err(Error::InvalidParameter(
            "learning rate and initial spread must be positive".into(),
        ));
    }
    let n = p.len();
    let mut y = initial_layout(n, opts.init_std, opts.seed);
    recenter(&mut y);
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0_f64; 2]; n];
    let mut kl_trace = Vec::with_capacity(opts.iterations + 1);

    for iter in 0..opts.iterations {
        let exaggeration = if iter < opts.exaggeration_iters {
            opts.exaggeration
        } else {
            1.0
        };
        let momentum = if iter < opts.momentum_switch_iter {
            opts.initial_momentum
        } else {
            opts.final_momentum
        };
        let (grad, kl) = gradient_and_kl(p, &y, exaggeration, exec);
        if let Some(i) = grad.iter().position(|g| !g[0].is_finite() || !g[1].is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite t-SNE gradient at point {i}, iteration {iter}"
            )));
        }
        kl_trace.push(kl);
        for i in 0..n {
            for d in 0..2 {
                let g = grad[i][d];
                let gain = &mut gains[i][d];
                *gain = if (g > 0.0) != (update[i][d] > 0.0) {
                    *gain + 0.2
                } else {
                    *gain * 0.8
                };
                *gain = (*gain).max(MIN_GAIN);
                update[i][d] = momentum * update[i][d] - opts.learning_rate * *gain * g;
                y[i][d] += update[i][d];
            }
        }
        recenter(&mut y);
    }
    let (_, kl) = gradient_and_kl(p, &y, 1.0, exec);
    if !kl.is_finite() || y.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("t-SNE diverged".into()));
    }
    kl_trace.push(kl);
    Ok(Embedding2D {
        points: y,
        kl_trace,
    })
}

/// Embeds feature rows in 2D.
pub fn tsne(features: &FeatureMatrix, opts: &TsneOptions, exec: Execution) -> Result<Embedding2D> {
    let p = affinities(features, opts.perplexity, exec)?;
    tsne_from_affinities(&p, opts, exec)
}
