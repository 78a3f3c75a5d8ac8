// SPDX-License-Identifier: Apache-2.0

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gla::events::InputFormat;
use gla::gauge::{GaugeMode, DEFAULT_CLAMP_FLOOR};
use gla::par::Execution;
use gla::pipeline::{self, GlaConfig};
use gla::synth::{self, LabeledDataset};
use gla::Error;

#[derive(Parser)]
#[command(name = "gla", version, about = "HMM gauge likelihood analysis for discrete event streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect anomalous windows in an event stream.
    Run(Box<RunArgs>),
    /// Write a synthetic dataset with known anomalies.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = InputFormat::Plain)]
    format: InputFormat,
    /// Keep only syslog records from this program.
    #[arg(long)]
    app: Option<String>,
    #[arg(long, default_value_t = 20)]
    window_size: usize,
    /// Defaults to half the window size.
    #[arg(long)]
    shift: Option<usize>,
    #[arg(long, default_value_t = 20)]
    states: usize,
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, value_enum, default_value_t = GaugeMode::Random)]
    gauge_mode: GaugeMode,
    #[arg(long, default_value_t = 10)]
    gauge_count: usize,
    #[arg(long)]
    gauge_seed: Option<u64>,
    /// Gauge log-likelihoods below this value are raised to it.
    #[arg(long, default_value_t = DEFAULT_CLAMP_FLOOR, allow_negative_numbers = true)]
    clamp_floor: f64,
    #[arg(long, default_value_t = 30.0)]
    perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    tsne_iters: usize,
    #[arg(long)]
    tsne_seed: Option<u64>,
    #[arg(long, default_value_t = 200.0)]
    learning_rate: f64,
    #[arg(long, default_value_t = 20)]
    min_cluster_size: usize,
    #[arg(long)]
    min_samples: Option<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output directory for the report and artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `window_id,label` CSV to score the detected outliers against.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Directory for one JSON model per window.
    #[arg(long)]
    dump_models: Option<PathBuf>,
    #[arg(long)]
    dump_features: Option<PathBuf>,
    /// Skip training and embed a previously dumped feature matrix.
    #[arg(long)]
    from_features: Option<PathBuf>,
    /// Run every stage on one thread.
    #[arg(long)]
    serial: bool,
}

impl RunArgs {
    fn config(self) -> GlaConfig {
        GlaConfig {
            input: Some(self.input),
            format: self.format,
            app: self.app,
            window_size: self.window_size,
            shift: self.shift,
            states: self.states,
            restarts: self.restarts,
            max_iters: self.max_iters,
            tol: self.tol,
            gauge_mode: self.gauge_mode,
            gauge_count: self.gauge_count,
            gauge_seed: self.gauge_seed,
            clamp_floor: self.clamp_floor,
            perplexity: self.perplexity,
            tsne_iters: self.tsne_iters,
            tsne_seed: self.tsne_seed,
            learning_rate: self.learning_rate,
            min_cluster_size: self.min_cluster_size,
            min_samples: self.min_samples,
            seed: self.seed,
            out_dir: self.out,
            labels: self.labels,
            dump_models: self.dump_models,
            dump_features: self.dump_features,
            from_features: self.from_features,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Exp1,
    Exp2,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(value_enum)]
    experiment: Experiment,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Event file, one event per line.
    #[arg(long)]
    out: PathBuf,
    /// Labels sidecar; defaults to `<out>.labels.csv`.
    #[arg(long)]
    labels: Option<PathBuf>,
}

fn run(args: RunArgs) -> Result<(), Error> {
    let exec = if args.serial {
        Execution::Serial
    } else {
        Execution::Parallel
    };
    let report = pipeline::run(&args.config(), exec)?;
    println!(
        "{} windows, {} clusters, {} outliers",
        report.input.windows,
        report.num_clusters,
        report.outliers.len()
    );
    let ids: Vec<String> = report.outliers.iter().map(usize::to_string).collect();
    println!("outlier windows: [{}]", ids.join(", "));
    if let Some(m) = &report.metrics {
        println!(
            "precision {:.4} recall {:.4} f1 {:.4} (tp {} fp {} fn {})",
            m.precision, m.recall, m.f1, m.true_positives, m.false_positives, m.false_negatives
        );
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<(), Error> {
    let data: LabeledDataset = match args.experiment {
        Experiment::Exp1 => synth::gen_experiment1(args.seed),
        Experiment::Exp2 => synth::gen_experiment2(),
    };
    let labels = args.labels.unwrap_or_else(|| {
        let mut name = args.out.clone().into_os_string();
        name.push(".labels.csv");
        PathBuf::from(name)
    });
    data.write_events(BufWriter::new(File::create(&args.out)?))?;
    data.write_labels(BufWriter::new(File::create(&labels)?))?;
    let n = data.sequence_len();
    eprintln!("{}", data.description);
    eprintln!(
        "wrote {} and {}; analyse with --window-size {n} --shift {n}",
        args.out.display(),
        labels.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(*args),
        Command::Synth(args) => synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gla: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
