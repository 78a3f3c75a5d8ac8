// SPDX-License-Identifier: Apache-2.0

//! End-to-end orchestration: ingest, window, fit one HMM per window, map the
//! fits to gauge features, embed with t-SNE, cluster with HDBSCAN and report
//! the noise windows.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::cluster::{self, label_code, ClusterResult, HdbscanParams, Label};
use crate::embed::{self, Embedding2D, Point, TsneOptions};
use crate::error::{Error, Result};
use crate::eval::{self, Metrics};
use crate::events::{self, InputFormat, Window};
use crate::gauge::{self, FeatureMatrix, GaugeMode, DEFAULT_CLAMP_FLOOR};
use crate::hmm::{self, FitReport, TrainOptions};
use crate::par::{self, Execution};
use crate::svg;

pub const REPORT_SCHEMA: &str = "gla-report/1";

/// Every knob of a run. Seeds left unset fall back to `seed`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlaConfig {
    pub input: Option<PathBuf>,
    pub format: InputFormat,
    pub app: Option<String>,
    pub window_size: usize,
    /// Defaults to half the window size.
    pub shift: Option<usize>,
    pub states: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub gauge_mode: GaugeMode,
    pub gauge_count: usize,
    pub gauge_seed: Option<u64>,
    pub clamp_floor: f64,
    pub perplexity: f64,
    pub tsne_iters: usize,
    pub tsne_seed: Option<u64>,
    pub learning_rate: f64,
    pub min_cluster_size: usize,
    pub min_samples: Option<usize>,
    pub seed: u64,
    // Output locations stay out of the serialised config so a report does
    // not depend on where it was written.
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    #[serde(skip)]
    pub dump_models: Option<PathBuf>,
    #[serde(skip)]
    pub dump_features: Option<PathBuf>,
    /// Skip training and gauging; read the feature matrix from this CSV.
    pub from_features: Option<PathBuf>,
}

impl Default for GlaConfig {
    fn default() -> Self {
        Self {
            input: None,
            format: InputFormat::Plain,
            app: None,
            window_size: 20,
            shift: None,
            states: 20,
            restarts: 1,
            max_iters: 100,
            tol: 1e-6,
            gauge_mode: GaugeMode::Random,
            gauge_count: 10,
            gauge_seed: None,
            clamp_floor: DEFAULT_CLAMP_FLOOR,
            perplexity: 30.0,
            tsne_iters: 1000,
            tsne_seed: None,
            learning_rate: 200.0,
            min_cluster_size: 20,
            min_samples: None,
            seed: 42,
            out_dir: None,
            labels: None,
            dump_models: None,
            dump_features: None,
            from_features: None,
        }
    }
}

impl GlaConfig {
    pub fn effective_shift(&self) -> usize {
        self.shift.unwrap_or_else(|| events::default_shift(self.window_size))
    }

    pub fn effective_gauge_seed(&self) -> u64 {
        self.gauge_seed.unwrap_or(self.seed)
    }

    pub fn effective_tsne_seed(&self) -> u64 {
        self.tsne_seed.unwrap_or(self.seed)
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            max_iters: self.max_iters,
            tol: self.tol,
            restarts: self.restarts,
            ..TrainOptions::default()
        }
    }

    pub fn tsne_options(&self) -> TsneOptions {
        TsneOptions {
            perplexity: self.perplexity,
            iterations: self.tsne_iters,
            learning_rate: self.learning_rate,
            seed: self.effective_tsne_seed(),
            ..TsneOptions::default()
        }
    }

    pub fn hdbscan_params(&self) -> HdbscanParams {
        HdbscanParams {
            min_cluster_size: self.min_cluster_size,
            min_samples: self.min_samples,
        }
    }

    /// Checks the numeric fields against the preconditions of each stage.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_owned()));
        if self.window_size < 2 {
            return bad("window size must be at least 2");
        }
        if self.shift == Some(0) {
            return bad("shift must be at least 1");
        }
        if self.states == 0 {
            return bad("need at least one hidden state");
        }
        if self.restarts == 0 {
            return bad("need at least one restart");
        }
        if !(self.tol >= 0.0) {
            return bad("tolerance must be non-negative");
        }
        if self.gauge_mode == GaugeMode::Random && self.gauge_count == 0 {
            return bad("gauge count must be at least 1");
        }
        if !self.clamp_floor.is_finite() {
            return bad("clamp floor must be finite");
        }
        if !(self.perplexity > 1.0) {
            return bad("perplexity must exceed 1");
        }
        if self.tsne_iters == 0 {
            return bad("t-SNE needs at least one iteration");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.min_cluster_size < 2 {
            return bad("min cluster size must be at least 2");
        }
        if self.min_samples == Some(0) {
            return bad("min samples must be at least 1");
        }
        Ok(())
    }
}

/// Wall-clock seconds per stage. Kept out of the report so that reports from
/// identical runs are byte-identical.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub ingest: f64,
    pub train: f64,
    pub gauge: f64,
    pub embed: f64,
    pub cluster: f64,
    pub total: f64,
}

/// Everything computed for one batch of windows.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub windows: Vec<Window>,
    /// `None` when features were loaded instead of computed.
    pub fits: Option<Vec<FitReport>>,
    /// Raw gauge log-likelihoods, before clamping.
    pub features: FeatureMatrix,
    pub clamped_entries: usize,
    pub embedding: Embedding2D,
    pub clusters: ClusterResult,
    /// 1-based ids of the noise windows.
    pub outliers: Vec<usize>,
    pub timings: Timings,
}

/// Fits one HMM per window. Window `k` trains from seed `seed + k`.
pub fn fit_windows(
    windows: &[Window],
    num_symbols: usize,
    num_states: usize,
    seed: u64,
    opts: &TrainOptions,
    exec: Execution,
) -> Result<Vec<FitReport>> {
    par::try_map_range(exec, windows.len(), |i| {
        let w = &windows[i];
        hmm::baum_welch(
            &w.codes,
            num_states,
            num_symbols,
            seed.wrapping_add(w.index as u64),
            opts,
        )
    })
}

/// Trains, gauges, embeds and clusters pre-extracted windows.
pub fn analyze_windows(
    windows: &[Window],
    num_symbols: usize,
    config: &GlaConfig,
    exec: Execution,
) -> Result<Analysis> {
    config.validate()?;
    if windows.is_empty() {
        return Err(Error::EmptySeries);
    }
    let mut timings = Timings::default();

    let t = Instant::now();
    let fits = fit_windows(
        windows,
        num_symbols,
        config.states,
        config.seed,
        &config.train_options(),
        exec,
    )
    .map_err(|e| e.in_stage("train"))?;
    timings.train = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let gauges = gauge::select_gauges(
        windows,
        num_symbols,
        config.gauge_mode,
        config.gauge_count,
        config.effective_gauge_seed(),
    )
    .and_then(|g| gauge::feature_matrix(&fits, &g, exec))
    .map_err(|e| e.in_stage("gauge"))?;
    timings.gauge = t.elapsed().as_secs_f64();

    let mut analysis = analyze_features(windows, gauges, config, exec)?;
    analysis.fits = Some(fits);
    analysis.timings.train = timings.train;
    analysis.timings.gauge = timings.gauge;
    Ok(analysis)
}

/// Embeds and clusters an existing feature matrix, one row per window.
pub fn analyze_features(
    windows: &[Window],
    features: FeatureMatrix,
    config: &GlaConfig,
    exec: Execution,
) -> Result<Analysis> {
    config.validate()?;
    if features.rows() != windows.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows for {} windows",
            features.rows(),
            windows.len()
        )));
    }
    let mut timings = Timings::default();

    let t = Instant::now();
    let mut clamped = features.clone();
    let clamped_entries = clamped.clamp_below(config.clamp_floor);
    let embedding =
        embed::tsne(&clamped, &config.tsne_options(), exec).map_err(|e| e.in_stage("embed"))?;
    timings.embed = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let clusters = cluster::hdbscan_with(&embedding.points, &config.hdbscan_params())
        .map_err(|e| e.in_stage("cluster"))?;
    timings.cluster = t.elapsed().as_secs_f64();

    let outliers = cluster::outliers(&clusters)
        .into_iter()
        .map(|i| windows[i].index)
        .collect();
    Ok(Analysis {
        windows: windows.to_vec(),
        fits: None,
        features,
        clamped_entries,
        embedding,
        clusters,
        outliers,
        timings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowRecord {
    pub id: usize,
    pub start: usize,
    /// Cluster id, or -1 for noise.
    pub label: i64,
    pub x: f64,
    pub y: f64,
    pub anomaly: bool,
    /// Final training log-likelihood, when the HMM was trained in this run.
    pub train_log_likelihood: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputSummary {
    pub events: usize,
    pub alphabet: Vec<String>,
    pub windows: usize,
}

/// The `report.json` document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutlierReport {
    pub schema: &'static str,
    pub config: GlaConfig,
    pub input: InputSummary,
    pub num_clusters: usize,
    pub min_samples: usize,
    pub clamped_entries: usize,
    pub outliers: Vec<usize>,
    pub windows: Vec<WindowRecord>,
    pub metrics: Option<Metrics>,
    pub final_kl: f64,
    #[serde(skip)]
    pub timings: Timings,
}

impl OutlierReport {
    pub fn from_analysis(
        analysis: &Analysis,
        config: &GlaConfig,
        input: InputSummary,
        metrics: Option<Metrics>,
    ) -> Self {
        let windows = analysis
            .windows
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let label = analysis.clusters.labels[i];
                let p = analysis.embedding.points[i];
                WindowRecord {
                    id: w.index,
                    start: w.start,
                    label: label_code(label),
                    x: p[0],
                    y: p[1],
                    anomaly: label.is_none(),
                    train_log_likelihood: analysis
                        .fits
                        .as_ref()
                        .map(|f| f[i].final_log_likelihood()),
                }
            })
            .collect();
        Self {
            schema: REPORT_SCHEMA,
            config: config.clone(),
            input,
            num_clusters: analysis.clusters.num_clusters,
            min_samples: analysis.clusters.min_samples,
            clamped_entries: analysis.clamped_entries,
            outliers: analysis.outliers.clone(),
            windows,
            metrics,
            final_kl: analysis.embedding.final_kl(),
            timings: analysis.timings.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Files written so far, removed again if the run fails.
struct Artifacts {
    written: Vec<PathBuf>,
    keep: bool,
}

impl Artifacts {
    fn new() -> Self {
        Self {
            written: Vec::new(),
            keep: false,
        }
    }

    fn create(&mut self, path: PathBuf) -> Result<BufWriter<File>> {
        let file = File::create(&path)?;
        self.written.push(path);
        Ok(BufWriter::new(file))
    }
}

impl Drop for Artifacts {
    fn drop(&mut self) {
        if !self.keep {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}

pub fn write_embedding_csv<W: Write>(out: W, windows: &[Window], points: &[Point]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["window_id", "x", "y"])?;
    for (win, p) in windows.iter().zip(points) {
        w.write_record([win.index.to_string(), p[0].to_string(), p[1].to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_clusters_csv<W: Write>(out: W, windows: &[Window], labels: &[Label]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["window_id", "label"])?;
    for (win, &l) in windows.iter().zip(labels) {
        w.write_record([win.index.to_string(), label_code(l).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Malformed(format!("cannot open {}: {e}", path.display())))
}

/// Runs the whole chain from `config.input` and writes `report.json`,
/// `embedding.csv`, `clusters.csv`, `plot.svg` and `timings.json` into
/// `config.out_dir` (when set), plus any requested dumps.
pub fn run(config: &GlaConfig, exec: Execution) -> Result<OutlierReport> {
    let started = Instant::now();
    config.validate()?;
    let input = config
        .input
        .as_deref()
        .ok_or_else(|| Error::InvalidParameter("no input file given".into()))?;

    let t = Instant::now();
    let series = open(input)
        .and_then(|r| events::ingest(r, config.format, config.app.as_deref()))
        .map_err(|e| e.in_stage("ingest"))?;
    let windows = events::extract_windows(&series, config.window_size, config.effective_shift())
        .map_err(|e| e.in_stage("windows"))?;
    let ingest_secs = t.elapsed().as_secs_f64();

    let labeled = config
        .labels
        .as_deref()
        .map(|p| open(p).and_then(eval::read_labels))
        .transpose()
        .map_err(|e| e.in_stage("labels"))?;

    let mut artifacts = Artifacts::new();
    if let Some(dir) = &config.out_dir {
        fs::create_dir_all(dir)?;
    }

    let mut analysis = match &config.from_features {
        Some(path) => {
            let features = open(path)
                .and_then(FeatureMatrix::read_csv)
                .map_err(|e| e.in_stage("features"))?;
            analyze_features(&windows, features, config, exec)?
        }
        None => analyze_windows(&windows, series.alphabet().len(), config, exec)?,
    };
    analysis.timings.ingest = ingest_secs;

    let metrics = labeled
        .map(|l| {
            let detected: Vec<usize> = analysis.outliers.iter().map(|id| id - 1).collect();
            eval::score(&detected, &l, windows.len())
        })
        .transpose()
        .map_err(|e| e.in_stage("labels"))?;

    let summary = InputSummary {
        events: series.len(),
        alphabet: series.alphabet().symbols().to_vec(),
        windows: windows.len(),
    };
    let mut report = OutlierReport::from_analysis(&analysis, config, summary, metrics);

    let write = |artifacts: &mut Artifacts| -> Result<()> {
        if let Some(path) = &config.dump_features {
            analysis.features.write_csv(artifacts.create(path.clone())?)?;
        }
        if let (Some(dir), Some(fits)) = (&config.dump_models, &analysis.fits) {
            fs::create_dir_all(dir)?;
            for (w, fit) in windows.iter().zip(fits) {
                let out = artifacts.create(dir.join(format!("window_{}.json", w.index)))?;
                serde_json::to_writer_pretty(out, &fit.params.to_dump())?;
            }
        }
        if let Some(dir) = &config.out_dir {
            let mut out = artifacts.create(dir.join("report.json"))?;
            out.write_all(report.to_json()?.as_bytes())?;
            out.flush()?;
            write_embedding_csv(
                artifacts.create(dir.join("embedding.csv"))?,
                &windows,
                &analysis.embedding.points,
            )?;
            write_clusters_csv(
                artifacts.create(dir.join("clusters.csv"))?,
                &windows,
                &analysis.clusters.labels,
            )?;
            let mut out = artifacts.create(dir.join("plot.svg"))?;
            out.write_all(
                svg::render_svg(&analysis.embedding.points, &analysis.clusters.labels).as_bytes(),
            )?;
            out.flush()?;
        }
        Ok(())
    };
    write(&mut artifacts).map_err(|e| e.in_stage("report"))?;

    report.timings.total = started.elapsed().as_secs_f64();
    if let Some(dir) = &config.out_dir {
        let mut out = artifacts.create(dir.join("timings.json"))?;
        serde_json::to_writer_pretty(&mut out, &report.timings)?;
        out.flush()?;
    }
    artifacts.keep = true;
    Ok(report)
}
