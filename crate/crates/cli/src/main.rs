use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trailerness::eval::EvalReport;
use trailerness::model::{EarlyStopping, ModelKind};
use trailerness::pipeline::{self, RunConfig, SynthOptions};
use trailerness::{Error, Result, StreamId};

/// Trailer-moment detection: editor labels from trailer matching, per-stream
/// transformer scorers, late fusion and evaluation.
#[derive(Parser)]
#[command(name = "trailerness", version)]
struct Cli {
    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted trailer segments.
    Synth(SynthArgs),
    /// Derive frame labels by matching episode frames against the trailer.
    Labels(RunArgs),
    /// Train one scorer per stream and seed.
    Train(RunArgs),
    /// Write frame-level scores for the test episodes.
    Predict(RunArgs),
    /// Average the predictions of each fusion subset.
    Fuse(RunArgs),
    /// Score fused predictions against the labels.
    Eval(RunArgs),
    /// Run every stage and evaluate all nonempty stream subsets.
    Grid(RunArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for the dataset.
    #[arg(long)]
    out: PathBuf,
    /// JSON file with synth options; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Frames per episode.
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long)]
    trailer_fraction: Option<f64>,
    #[arg(long)]
    signal: Option<f64>,
    /// Salt-and-pepper rate applied to trailer frames.
    #[arg(long)]
    noise_rate: Option<f64>,
    /// Plant arbitrary frame ranges instead of whole clips.
    #[arg(long)]
    unaligned: bool,
    /// Skip rendering frames; labels then come from the planted ground truth.
    #[arg(long)]
    no_frames: bool,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory of the run.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tau: Option<u32>,
    #[arg(long)]
    cut_threshold: Option<f64>,
    /// Comma-separated streams, e.g. `visual-clip,textual-shot`.
    #[arg(long, value_delimiter = ',')]
    streams: Option<Vec<StreamId>>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelKind>,
    /// Fusion subset as `a+b+...`; repeat for several.
    #[arg(long, value_parser = parse_subset)]
    fusion: Vec<Vec<StreamId>>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    l2_normalize: bool,
    #[arg(long)]
    plot_width: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    d_k: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    mlp_hidden: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Early stopping patience in epochs; 0 disables it.
    #[arg(long)]
    patience: Option<u32>,
    #[arg(long)]
    no_positional_encoding: bool,
}

fn parse_model(s: &str) -> std::result::Result<ModelKind, String> {
    match s {
        "transformer" => Ok(ModelKind::Transformer),
        "mlp" => Ok(ModelKind::Mlp),
        "random" => Ok(ModelKind::Random),
        _ => Err(format!("unknown model {s:?} (transformer, mlp, random)")),
    }
}

fn parse_subset(s: &str) -> std::result::Result<Vec<StreamId>, String> {
    s.split('+')
        .map(|p| p.trim().parse::<StreamId>().map_err(|e| e.to_string()))
        .collect()
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig> {
        let mut run = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.manifest {
            run.manifest = v;
        }
        if let Some(v) = self.out {
            run.output_dir = v;
        }
        if let Some(v) = self.tau {
            run.tau = v;
        }
        if let Some(v) = self.cut_threshold {
            run.cut_threshold = v;
        }
        if let Some(v) = self.streams {
            run.streams = v;
        }
        if let Some(v) = self.seeds {
            run.seeds = v;
        }
        if let Some(v) = self.model {
            run.model = v;
        }
        if !self.fusion.is_empty() {
            run.fusion = self.fusion;
        }
        if let Some(v) = self.threshold {
            run.threshold = v;
        }
        if let Some(v) = self.plot_width {
            run.plot_width = v;
        }
        run.l2_normalize |= self.l2_normalize;

        let mut base = run.base_stream_config();
        let mut configs: Vec<_> = std::iter::once(&mut base)
            .chain(run.stream_overrides.values_mut())
            .collect();
        for c in configs.iter_mut() {
            if let Some(v) = self.epochs {
                c.n_epochs = v;
            }
            if let Some(v) = self.d_k {
                c.d_k = v;
            }
            if let Some(v) = self.heads {
                c.n_heads = v;
            }
            if let Some(v) = self.blocks {
                c.n_blocks = v;
            }
            if let Some(v) = self.mlp_hidden {
                c.mlp_hidden = Some(v);
            }
            if let Some(v) = self.lr {
                c.learning_rate = v;
            }
            if let Some(v) = self.alpha {
                c.alpha = v;
            }
            if let Some(v) = self.gamma {
                c.gamma = v;
            }
            if let Some(p) = self.patience {
                c.early_stopping = if p == 0 {
                    EarlyStopping::Off
                } else {
                    EarlyStopping::Patience(p)
                };
            }
            if self.no_positional_encoding {
                c.positional_encoding = false;
            }
        }
        run.stream_config = Some(base);
        Ok(run)
    }
}

impl SynthArgs {
    fn resolve(&self) -> Result<SynthOptions> {
        let mut opts = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                serde_json::from_str(&text).map_err(|e| Error::Json {
                    path: path.clone(),
                    source: e,
                })?
            }
            None => SynthOptions::default(),
        };
        if let Some(v) = self.episodes {
            opts.n_episodes = v;
        }
        if let Some(v) = self.seed {
            opts.seed = v;
        }
        let c = &mut opts.config;
        if let Some(v) = self.frames {
            c.n_frames = v;
        }
        if let Some(v) = self.shots {
            c.n_shots = v;
        }
        if let Some(v) = self.trailer_fraction {
            c.trailer_fraction = v;
        }
        if let Some(v) = self.signal {
            c.signal_strength = v;
        }
        if let Some(v) = self.noise_rate {
            c.noise_rate = v;
        }
        if self.unaligned {
            c.align_to_clips = false;
        }
        if self.no_frames {
            opts.write_frames = false;
        }
        Ok(opts)
    }
}

fn print_reports(reports: &[EvalReport]) {
    for r in reports {
        println!(
            "{:<56} P {:.3} ± {:.3}  R {:.3} ± {:.3}  F1 {:.3} ± {:.3}",
            r.streams.join("+"),
            r.mean.precision,
            r.std.precision,
            r.mean.recall,
            r.std.recall,
            r.mean.f1,
            r.std.f1
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => {
            let opts = args.resolve()?;
            let manifest = pipeline::synthesize(&args.out, &opts)?;
            println!("{}", args.out.join("manifest.json").display());
            log::info!("{} episodes written", manifest.episodes.len());
        }
        Command::Labels(args) => pipeline::run_labels(&args.resolve()?)?,
        Command::Train(args) => pipeline::run_train(&args.resolve()?)?,
        Command::Predict(args) => pipeline::run_predict(&args.resolve()?)?,
        Command::Fuse(args) => pipeline::run_fuse(&args.resolve()?)?,
        Command::Eval(args) => print_reports(&pipeline::run_eval(&args.resolve()?)?),
        Command::Grid(args) => print_reports(&pipeline::run_grid(&args.resolve()?)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
