// SPDX-License-Identifier: Apache-2.0

//! Discrete-emission hidden Markov models.
//!
//! Likelihoods use the scaled forward recursion: each step's forward vector
//! is normalised and the log of the normaliser accumulated, so sequences of
//! any length stay representable. Training is single-sequence Baum-Welch
//! with an additive floor on every re-estimated row.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Added to every re-estimated probability before renormalising.
pub const DEFAULT_FLOOR: f64 = 1e-10;

/// Parameters of an HMM with `num_states` hidden states over `num_symbols`
/// symbols. Matrices are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmParams {
    num_states: usize,
    num_symbols: usize,
    pi: Vec<f64>,
    trans: Vec<f64>,
    emit: Vec<f64>,
}

impl HmmParams {
    /// Checks shapes, non-negativity and that every row sums to 1 within 1e-9.
    pub fn new(
        num_states: usize,
        num_symbols: usize,
        pi: Vec<f64>,
        trans: Vec<f64>,
        emit: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_symbols == 0 {
            return Err(Error::InvalidParameter(
                "an HMM needs at least one state and one symbol".into(),
            ));
        }
        if pi.len() != num_states
            || trans.len() != num_states * num_states
            || emit.len() != num_states * num_symbols
        {
            return Err(Error::DimensionMismatch(format!(
                "HMM with {num_states} states and {num_symbols} symbols got pi {}, trans {}, emit {}",
                pi.len(),
                trans.len(),
                emit.len()
            )));
        }
        let params = Self {
            num_states,
            num_symbols,
            pi,
            trans,
            emit,
        };
        params.check_stochastic(1e-9)?;
        Ok(params)
    }

    /// Builds parameters from nested rows.
    pub fn from_rows(pi: Vec<f64>, trans: Vec<Vec<f64>>, emit: Vec<Vec<f64>>) -> Result<Self> {
        let num_states = pi.len();
        let num_symbols = emit.first().map_or(0, Vec::len);
        if trans.iter().any(|r| r.len() != num_states) || emit.iter().any(|r| r.len() != num_symbols)
        {
            return Err(Error::DimensionMismatch("ragged HMM rows".into()));
        }
        Self::new(
            num_states,
            num_symbols,
            pi,
            trans.concat(),
            emit.concat(),
        )
    }

    fn check_stochastic(&self, tol: f64) -> Result<()> {
        let rows = std::iter::once(&self.pi[..])
            .chain(self.trans.chunks(self.num_states))
            .chain(self.emit.chunks(self.num_symbols));
        for row in rows {
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::InvalidParameter(
                    "HMM probabilities must be finite and non-negative".into(),
                ));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::InvalidParameter(format!(
                    "HMM row sums to {sum}, expected 1"
                )));
            }
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_symbols(&self) -> usize {
        self.num_symbols
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn trans(&self, from: usize, to: usize) -> f64 {
        self.trans[from * self.num_states + to]
    }

    pub fn trans_row(&self, from: usize) -> &[f64] {
        &self.trans[from * self.num_states..(from + 1) * self.num_states]
    }

    pub fn emit(&self, state: usize, symbol: usize) -> f64 {
        self.emit[state * self.num_symbols + symbol]
    }

    pub fn emit_row(&self, state: usize) -> &[f64] {
        &self.emit[state * self.num_symbols..(state + 1) * self.num_symbols]
    }

    /// Relabels hidden states: new state `i` is old state `perm[i]`.
    /// The sequence distribution is unchanged.
    pub fn permute_states(&self, perm: &[usize]) -> Result<Self> {
        let s = self.num_states;
        let mut seen = vec![false; s];
        if perm.len() != s || perm.iter().any(|&p| p >= s || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::InvalidParameter(format!(
                "not a permutation of {s} states"
            )));
        }
        let pi = perm.iter().map(|&p| self.pi[p]).collect();
        let mut trans = Vec::with_capacity(s * s);
        for &from in perm {
            trans.extend(perm.iter().map(|&to| self.trans(from, to)));
        }
        let emit = perm
            .iter()
            .flat_map(|&p| self.emit_row(p).iter().copied())
            .collect();
        Ok(Self {
            num_states: s,
            num_symbols: self.num_symbols,
            pi,
            trans,
            emit,
        })
    }

    pub fn to_dump(&self) -> HmmDump {
        HmmDump {
            pi: self.pi.clone(),
            trans: self.trans.chunks(self.num_states).map(<[f64]>::to_vec).collect(),
            emit: self.emit.chunks(self.num_symbols).map(<[f64]>::to_vec).collect(),
        }
    }
}

/// JSON shape of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmDump {
    pub pi: Vec<f64>,
    pub trans: Vec<Vec<f64>>,
    pub emit: Vec<Vec<f64>>,
}

impl TryFrom<HmmDump> for HmmParams {
    type Error = Error;

    fn try_from(dump: HmmDump) -> Result<Self> {
        HmmParams::from_rows(dump.pi, dump.trans, dump.emit)
    }
}

fn dirichlet_row<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    let mut row: Vec<f64> = (0..len)
        .map(|_| {
            let x: f64 = rng.sample(Exp1);
            x.max(f64::MIN_POSITIVE)
        })
        .collect();
    let sum: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= sum);
    row
}

/// Draws every row from a symmetric Dirichlet(1).
pub fn init_random_with<R: Rng>(
    rng: &mut R,
    num_states: usize,
    num_symbols: usize,
) -> Result<HmmParams> {
    if num_states == 0 || num_symbols == 0 {
        return Err(Error::InvalidParameter(
            "an HMM needs at least one state and one symbol".into(),
        ));
    }
    let pi = dirichlet_row(rng, num_states);
    let trans = (0..num_states)
        .flat_map(|_| dirichlet_row(rng, num_states))
        .collect();
    let emit = (0..num_states)
        .flat_map(|_| dirichlet_row(rng, num_symbols))
        .collect();
    Ok(HmmParams {
        num_states,
        num_symbols,
        pi,
        trans,
        emit,
    })
}

pub fn init_random(num_states: usize, num_symbols: usize, seed: u64) -> Result<HmmParams> {
    init_random_with(&mut ChaCha8Rng::seed_from_u64(seed), num_states, num_symbols)
}

fn check_codes(seq: &[usize], num_symbols: usize) -> Result<()> {
    match seq.iter().find(|&&c| c >= num_symbols) {
        Some(&code) => Err(Error::CodeOutOfRange {
            code,
            size: num_symbols,
        }),
        None => Ok(()),
    }
}

/// `ln p(seq)` under `h`; `-inf` when the sequence is impossible.
pub fn log_likelihood(h: &HmmParams, seq: &[usize]) -> Result<f64> {
    if seq.is_empty() {
        return Err(Error::InvalidParameter("empty observation sequence".into()));
    }
    check_codes(seq, h.num_symbols)?;
    Ok(scaled_forward_ll(h, seq, &mut vec![0.0; h.num_states], &mut vec![0.0; h.num_states]))
}

fn scaled_forward_ll(h: &HmmParams, seq: &[usize], alpha: &mut [f64], next: &mut [f64]) -> f64 {
    let s = h.num_states;
    for i in 0..s {
        alpha[i] = h.pi[i] * h.emit(i, seq[0]);
    }
    let mut ll = 0.0;
    let mut scale: f64 = alpha.iter().sum();
    if scale <= 0.0 {
        return f64::NEG_INFINITY;
    }
    ll += scale.ln();
    alpha.iter_mut().for_each(|a| *a /= scale);
    for &obs in &seq[1..] {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (i, &a) in alpha.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (n, &t) in next.iter_mut().zip(h.trans_row(i)) {
                *n += a * t;
            }
        }
        for (j, n) in next.iter_mut().enumerate() {
            *n *= h.emit(j, obs);
        }
        scale = next.iter().sum();
        if scale <= 0.0 {
            return f64::NEG_INFINITY;
        }
        ll += scale.ln();
        for (a, &n) in alpha.iter_mut().zip(next.iter()) {
            *a = n / scale;
        }
    }
    ll
}

/// Stopping and regularisation knobs for [`baum_welch`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub max_iters: usize,
    /// Stop once an iteration improves the log-likelihood by less than this.
    pub tol: f64,
    pub floor: f64,
    /// Independent random initialisations; the best final likelihood wins.
    pub restarts: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-6,
            floor: DEFAULT_FLOOR,
            restarts: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub params: HmmParams,
    /// `ln p(seq | θ_t)` for every accepted parameter set, starting with the
    /// initial draw. Non-decreasing.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
}

impl FitReport {
    pub fn final_log_likelihood(&self) -> f64 {
        *self.log_likelihood_trace.last().expect("trace always holds the initial value")
    }
}

/// Forward-backward statistics for one sequence under one parameter set.
struct Estep {
    log_likelihood: f64,
    /// Expected initial-state occupancy.
    pi: Vec<f64>,
    /// Expected transition counts, S×S.
    trans: Vec<f64>,
    /// Expected emission counts, S×A.
    emit: Vec<f64>,
}

fn e_step(h: &HmmParams, seq: &[usize]) -> Option<Estep> {
    let s = h.num_states;
    let a = h.num_symbols;
    let n = seq.len();
    let mut alpha = vec![0.0; n * s];
    let mut scale = vec![0.0; n];

    for i in 0..s {
        alpha[i] = h.pi[i] * h.emit(i, seq[0]);
    }
    for t in 0..n {
        if t > 0 {
            let (done, rest) = alpha.split_at_mut(t * s);
            let prev = &done[(t - 1) * s..];
            let cur = &mut rest[..s];
            for (j, c) in cur.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (i, &p) in prev.iter().enumerate() {
                    acc += p * h.trans(i, j);
                }
                *c = acc * h.emit(j, seq[t]);
            }
        }
        let row = &mut alpha[t * s..(t + 1) * s];
        let c: f64 = row.iter().sum();
        if !(c > 0.0) {
            return None;
        }
        row.iter_mut().for_each(|x| *x /= c);
        scale[t] = c;
    }

    let mut beta = vec![0.0; n * s];
    beta[(n - 1) * s..].iter_mut().for_each(|b| *b = 1.0);
    for t in (0..n - 1).rev() {
        for i in 0..s {
            let mut acc = 0.0;
            for j in 0..s {
                acc += h.trans(i, j) * h.emit(j, seq[t + 1]) * beta[(t + 1) * s + j];
            }
            beta[t * s + i] = acc / scale[t + 1];
        }
    }

    let mut pi = vec![0.0; s];
    let mut trans = vec![0.0; s * s];
    let mut emit = vec![0.0; s * a];
    for t in 0..n {
        for i in 0..s {
            let gamma = alpha[t * s + i] * beta[t * s + i];
            if t == 0 {
                pi[i] = gamma;
            }
            emit[i * a + seq[t]] += gamma;
        }
        if t + 1 < n {
            for i in 0..s {
                let ai = alpha[t * s + i];
                if ai == 0.0 {
                    continue;
                }
                for j in 0..s {
                    trans[i * s + j] += ai
                        * h.trans(i, j)
                        * h.emit(j, seq[t + 1])
                        * beta[(t + 1) * s + j]
                        / scale[t + 1];
                }
            }
        }
    }

    Some(Estep {
        log_likelihood: scale.iter().map(|c| c.ln()).sum(),
        pi,
        trans,
        emit,
    })
}

fn normalize_with_floor(row: &mut [f64], floor: f64) {
    row.iter_mut().for_each(|x| *x += floor);
    let sum: f64 = row.iter().sum();
    if sum > 0.0 {
        row.iter_mut().for_each(|x| *x /= sum);
    } else {
        let uniform = 1.0 / row.len() as f64;
        row.iter_mut().for_each(|x| *x = uniform);
    }
}

fn m_step(stats: Estep, num_states: usize, num_symbols: usize, floor: f64) -> HmmParams {
    let Estep {
        mut pi,
        mut trans,
        mut emit,
        ..
    } = stats;
    normalize_with_floor(&mut pi, floor);
    trans
        .chunks_mut(num_states)
        .for_each(|row| normalize_with_floor(row, floor));
    emit.chunks_mut(num_symbols)
        .for_each(|row| normalize_with_floor(row, floor));
    HmmParams {
        num_states,
        num_symbols,
        pi,
        trans,
        emit,
    }
}

/// Runs EM from the given starting point.
///
/// An update that would lower the likelihood (possible only through the
/// floor) is rejected and training stops, so the trace never decreases.
pub fn baum_welch_from(init: HmmParams, seq: &[usize], opts: &TrainOptions) -> Result<FitReport> {
    if seq.len() < 2 {
        return Err(Error::InvalidParameter(
            "Baum-Welch needs a sequence of at least two events".into(),
        ));
    }
    check_codes(seq, init.num_symbols)?;
    if !(opts.floor >= 0.0) || !(opts.tol >= 0.0) {
        return Err(Error::InvalidParameter("floor and tolerance must be non-negative".into()));
    }
    let (s, a) = (init.num_states, init.num_symbols);

    let mut params = init;
    let mut stats = e_step(&params, seq).ok_or_else(|| {
        Error::Numerical("initial model assigns the training sequence zero probability".into())
    })?;
    let mut trace = vec![stats.log_likelihood];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        let prev_ll = stats.log_likelihood;
        let candidate = m_step(stats, s, a, opts.floor);
        let Some(next_stats) = e_step(&candidate, seq) else {
            return Err(Error::Numerical(
                "re-estimated model assigns the training sequence zero probability".into(),
            ));
        };
        if !next_stats.log_likelihood.is_finite() {
            return Err(Error::Numerical("non-finite log-likelihood during training".into()));
        }
        let gain = next_stats.log_likelihood - prev_ll;
        if gain < 0.0 {
            converged = true;
            break;
        }
        params = candidate;
        stats = next_stats;
        iterations += 1;
        trace.push(stats.log_likelihood);
        if gain < opts.tol {
            converged = true;
            break;
        }
    }

    Ok(FitReport {
        params,
        log_likelihood_trace: trace,
        iterations_run: iterations,
        converged,
    })
}

/// Fits an HMM with `num_states` states to one sequence over `num_symbols`
/// symbols. Restart `r` draws its initial model from the ChaCha stream `r`
/// of `seed`; the fit with the highest final likelihood is kept (earliest on
/// ties).
pub fn baum_welch(
    seq: &[usize],
    num_states: usize,
    num_symbols: usize,
    seed: u64,
    opts: &TrainOptions,
) -> Result<FitReport> {
    if num_states == 0 {
        return Err(Error::InvalidParameter("need at least one hidden state".into()));
    }
    let mut best: Option<FitReport> = None;
    for restart in 0..opts.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        let init = init_random_with(&mut rng, num_states, num_symbols)?;
        let fit = baum_welch_from(init, seq, opts)?;
        if best
            .as_ref()
            .is_none_or(|b| fit.final_log_likelihood() > b.final_log_likelihood())
        {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}
