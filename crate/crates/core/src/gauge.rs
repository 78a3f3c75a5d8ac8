// SPDX-License-Identifier: Apache-2.0

//! Gauge sequences and the gauge likelihood map.
//!
//! HMM parameters are not identifiable, so fitted models are compared through
//! the log-likelihoods they assign to a shared, fixed set of gauge sequences.
//! Each fitted window becomes one row of a `K × m_g` feature matrix.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::Window;
use crate::hmm::{log_likelihood, FitReport, HmmParams};
use crate::par::{self, Execution};

/// Value substituted for `-inf` log-likelihoods before embedding.
pub const DEFAULT_CLAMP_FLOOR: f64 = -1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GaugeMode {
    /// `m_g` sequences drawn uniformly over the alphabet.
    Random,
    /// The windows themselves, deduplicated.
    #[value(name = "self")]
    #[serde(rename = "self")]
    SelfWindows,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GaugeSet {
    sequences: Vec<Vec<usize>>,
    length: usize,
    mode: GaugeMode,
}

impl GaugeSet {
    pub fn new(sequences: Vec<Vec<usize>>, mode: GaugeMode) -> Result<Self> {
        let length = sequences
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidParameter("gauge set is empty".into()))?;
        if length == 0 || sequences.iter().any(|g| g.len() != length) {
            return Err(Error::DimensionMismatch(
                "gauge sequences must share one nonzero length".into(),
            ));
        }
        Ok(Self {
            sequences,
            length,
            mode,
        })
    }

    pub fn sequences(&self) -> &[Vec<usize>] {
        &self.sequences
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Common length `n` of every gauge.
    pub fn sequence_len(&self) -> usize {
        self.length
    }

    pub fn mode(&self) -> GaugeMode {
        self.mode
    }
}

/// Picks the gauge set for a batch of equal-length windows.
///
/// `count` is only used in random mode; self mode keeps the first occurrence
/// of each distinct window in window order.
pub fn select_gauges(
    windows: &[Window],
    alphabet_size: usize,
    mode: GaugeMode,
    count: usize,
    seed: u64,
) -> Result<GaugeSet> {
    let first = windows
        .first()
        .ok_or_else(|| Error::InvalidParameter("no windows to gauge".into()))?;
    let length = first.codes.len();
    if windows.iter().any(|w| w.codes.len() != length) {
        return Err(Error::DimensionMismatch("windows differ in length".into()));
    }
    match mode {
        GaugeMode::Random => {
            if count == 0 {
                return Err(Error::InvalidParameter("gauge count must be at least 1".into()));
            }
            if alphabet_size == 0 {
                return Err(Error::InvalidParameter("alphabet is empty".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sequences = (0..count)
                .map(|_| (0..length).map(|_| rng.random_range(0..alphabet_size)).collect())
                .collect();
            GaugeSet::new(sequences, mode)
        }
        GaugeMode::SelfWindows => {
            let mut seen = HashSet::new();
            let sequences = windows
                .iter()
                .filter(|w| seen.insert(w.codes.as_slice()))
                .map(|w| w.codes.clone())
                .collect();
            GaugeSet::new(sequences, mode)
        }
    }
}

/// `ℓ(h)` for one model: `ln p_h(g_i)` for every gauge, in gauge order.
pub fn gauge_vector(h: &HmmParams, gauges: &GaugeSet) -> Result<Vec<f64>> {
    gauges
        .sequences()
        .iter()
        .map(|g| log_likelihood(h, g))
        .collect()
}

/// Row-major `rows × cols` matrix of gauge log-likelihoods.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || cols == 0 {
            return Err(Error::DimensionMismatch("feature matrix is empty".into()));
        }
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged feature rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols)
    }

    /// Replaces every entry below `floor` (including `-inf`) with `floor`;
    /// returns how many entries changed.
    pub fn clamp_below(&mut self, floor: f64) -> usize {
        let mut clamped = 0;
        for x in &mut self.data {
            if !(*x >= floor) {
                *x = floor;
                clamped += 1;
            }
        }
        clamped
    }

    /// Writes the matrix as CSV with header `g1..gM`, one row per window.
    /// Values use the shortest representation that parses back exactly.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record((1..=self.cols).map(|i| format!("g{i}")))?;
        for row in self.iter_rows() {
            w.write_record(row.iter().map(|x| x.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut rows = Vec::new();
        for record in r.records() {
            let record = record?;
            let row = record
                .iter()
                .map(|field| {
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Malformed(format!("feature value {field:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(rows)
    }
}

/// Evaluates every fitted model on every gauge. Row `k` belongs to `fits[k]`.
pub fn feature_matrix(fits: &[FitReport], gauges: &GaugeSet, exec: Execution) -> Result<FeatureMatrix> {
    let symbols = fits
        .first()
        .map(|f| f.params.num_symbols())
        .ok_or_else(|| Error::DimensionMismatch("no fitted models".into()))?;
    if fits.iter().any(|f| f.params.num_symbols() != symbols) {
        return Err(Error::DimensionMismatch(
            "fitted models disagree on the symbol count".into(),
        ));
    }
    let rows = par::try_map_range(exec, fits.len(), |k| gauge_vector(&fits[k].params, gauges))?;
    FeatureMatrix::from_rows(rows)
}
