// SPDX-License-Identifier: Apache-2.0

//! Precision, recall and F1 of a detected outlier set against labels.

use std::collections::BTreeSet;
use std::io::Read;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when some ratio had a zero denominator and was reported as 0.
    pub undefined_ratio: bool,
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let mut undefined = false;
        let mut ratio = |num: f64, den: f64| {
            if den > 0.0 {
                num / den
            } else {
                undefined = true;
                0.0
            }
        };
        let precision = ratio(tp as f64, (tp + fp) as f64);
        let recall = ratio(tp as f64, (tp + fn_) as f64);
        let f1 = ratio(2.0 * precision * recall, precision + recall);
        Self {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision,
            recall,
            f1,
            undefined_ratio: undefined,
        }
    }
}

/// Scores 0-based `detected` ids against 0-based `labeled` ids in `0..total`.
pub fn score(detected: &[usize], labeled: &[usize], total: usize) -> Result<Metrics> {
    if let Some(&id) = detected.iter().chain(labeled).find(|&&id| id >= total) {
        return Err(Error::InvalidParameter(format!(
            "window index {id} outside 0..{total}"
        )));
    }
    let detected: BTreeSet<usize> = detected.iter().copied().collect();
    let labeled: BTreeSet<usize> = labeled.iter().copied().collect();
    let tp = detected.intersection(&labeled).count();
    Ok(Metrics::from_counts(
        tp,
        detected.len() - tp,
        labeled.len() - tp,
    ))
}

/// Reads a `window_id,label` sidecar (1-based ids, label 0 or 1) and returns
/// the 0-based indices labelled anomalous.
pub fn read_labels<R: Read>(input: R) -> Result<Vec<usize>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut anomalous = Vec::new();
    for record in reader.records() {
        let record = record?;
        let field = |i: usize| {
            record
                .get(i)
                .map(str::trim)
                .ok_or_else(|| Error::Malformed(format!("labels row has no column {i}")))
        };
        let id: usize = field(0)?
            .parse()
            .map_err(|e| Error::Malformed(format!("window id: {e}")))?;
        if id == 0 {
            return Err(Error::Malformed("window ids start at 1".into()));
        }
        match field(1)? {
            "1" => anomalous.push(id - 1),
            "0" => {}
            other => return Err(Error::Malformed(format!("label must be 0 or 1, got {other:?}"))),
        }
    }
    Ok(anomalous)
}
