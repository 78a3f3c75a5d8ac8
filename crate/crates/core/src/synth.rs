// SPDX-License-Identifier: Apache-2.0

//! Synthetic datasets with known anomalies.

use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::events::{windows_from_sequences, EventAlphabet, Window};

/// Pre-cut sequences with per-sequence anomaly labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    pub sequences: Vec<Vec<usize>>,
    pub alphabet: EventAlphabet,
    /// `true` marks an anomalous sequence.
    pub labels: Vec<bool>,
    pub description: String,
}

impl LabeledDataset {
    pub fn windows(&self) -> Vec<Window> {
        windows_from_sequences(&self.sequences)
    }

    /// 0-based indices of the anomalous sequences.
    pub fn anomalies(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sequence_len(&self) -> usize {
        self.sequences.first().map_or(0, Vec::len)
    }

    /// Writes the sequences back to back, one event name per line.
    pub fn write_events<W: Write>(&self, mut out: W) -> Result<()> {
        for code in self.sequences.iter().flatten() {
            writeln!(out, "{}", self.alphabet.decode(*code).expect("code from alphabet"))?;
        }
        Ok(())
    }

    /// Writes `window_id,label` with 1-based window ids.
    pub fn write_labels<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["window_id", "label"])?;
        for (i, &anomalous) in self.labels.iter().enumerate() {
            w.write_record([(i + 1).to_string(), u8::from(anomalous).to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn abcd() -> EventAlphabet {
    EventAlphabet::from_symbols(["A", "B", "C", "D"])
}

pub const EXPERIMENT1_NORMALS: usize = 60;
pub const EXPERIMENT1_LEN: usize = 20;

/// 60 noisy copies of `(A,B,C,D)×5`, each with two distinct positions
/// overwritten by uniform symbols (possibly unchanged), followed by the
/// reversed pattern `(D,C,B,A)×5` and the constant `A×20`.
pub fn gen_experiment1(seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let template: Vec<usize> = (0..EXPERIMENT1_LEN).map(|i| i % 4).collect();
    let mut sequences: Vec<Vec<usize>> = (0..EXPERIMENT1_NORMALS)
        .map(|_| {
            let mut s = template.clone();
            for pos in sample(&mut rng, EXPERIMENT1_LEN, 2) {
                s[pos] = rng.random_range(0..4);
            }
            s
        })
        .collect();
    sequences.push((0..EXPERIMENT1_LEN).map(|i| 3 - i % 4).collect());
    sequences.push(vec![0; EXPERIMENT1_LEN]);
    let mut labels = vec![false; EXPERIMENT1_NORMALS];
    labels.extend([true, true]);
    LabeledDataset {
        sequences,
        alphabet: abcd(),
        labels,
        description: format!(
            "experiment 1 (seed {seed}): 60 noisy (A,B,C,D)x5, reversed (D,C,B,A)x5, constant Ax20"
        ),
    }
}

/// `(A,A,B,B)×5` followed by `A`.
pub fn experiment2_normal() -> Vec<usize> {
    let mut t1: Vec<usize> = (0..20).map(|i| (i / 2) % 2).collect();
    t1.push(0);
    t1
}

/// `A×6, B×6, (A,B)×4, A`.
pub fn experiment2_anomaly() -> Vec<usize> {
    let mut t2 = vec![0; 6];
    t2.extend([1; 6]);
    t2.extend([0, 1].iter().cycle().take(8));
    t2.push(0);
    t2
}

/// 500 copies of the normal sequence and one copy of the anomaly, last.
pub fn gen_experiment2() -> LabeledDataset {
    let mut sequences = vec![experiment2_normal(); 500];
    sequences.push(experiment2_anomaly());
    let mut labels = vec![false; 500];
    labels.push(true);
    LabeledDataset {
        sequences,
        alphabet: EventAlphabet::from_symbols(["A", "B"]),
        labels,
        description: "experiment 2: 500 copies of (A,A,B,B)x5+A, one (A)x6 (B)x6 (A,B)x4 A".into(),
    }
}

/// Maximum-likelihood first-order Markov transition matrix from bigram counts.
/// Rows of symbols never followed by anything are left at zero.
pub fn bigram_transition_matrix(seq: &[usize], num_symbols: usize) -> Vec<Vec<f64>> {
    let mut counts = vec![vec![0.0; num_symbols]; num_symbols];
    for w in seq.windows(2) {
        counts[w[0]][w[1]] += 1.0;
    }
    for row in &mut counts {
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|c| *c /= total);
        }
    }
    counts
}
