use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ridgevalley::experiment::{
    channel_image, ingest, run_experiment, to_gray, ExperimentConfig, FilenamePattern, Grayscale,
};
use ridgevalley::features::{
    extract_template, read_template, render_overlay, write_template, Channel,
};
use ridgevalley::fusion_eval::{
    evaluate, fuse_scores, normalize_scores, read_scores_csv, ScoreChannel,
};
use ridgevalley::imaging::load_image;
use ridgevalley::matcher::match_templates;
use ridgevalley::synth::{
    generate_corpus, write_corpus, CorpusSpec, IlluminationParams, RenderMode,
};

#[derive(Parser)]
#[command(
    name = "ridgevalley",
    version,
    about = "Ridge and valley fingerprint templates, matching and evaluation"
)]
struct Cli {
    /// More log output; repeat for debug level.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert an image to grayscale, optionally inverted.
    Convert(ConvertArgs),
    /// Extract a template from an image.
    Extract(ExtractArgs),
    /// Score two template files against each other.
    Match(MatchArgs),
    /// Generate a synthetic corpus with ground truth.
    Synth(SynthArgs),
    /// Run a full experiment over a dataset directory.
    Run(RunArgs),
    /// Recompute reports from score files.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GrayArg {
    Ordinary,
    Luma,
}

impl From<GrayArg> for Grayscale {
    fn from(g: GrayArg) -> Self {
        match g {
            GrayArg::Ordinary => Grayscale::Ordinary,
            GrayArg::Luma => Grayscale::Luma,
        }
    }
}

#[derive(Args)]
struct GrayOpts {
    #[arg(long, value_enum, default_value = "luma")]
    grayscale: GrayArg,
    /// Encoding exponent for Luma conversion.
    #[arg(long, default_value_t = ridgevalley::imaging::DEFAULT_GAMMA)]
    gamma: f64,
}

#[derive(Args)]
struct ConvertArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    gray: GrayOpts,
    #[arg(long)]
    invert: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChannelArg {
    Ridge,
    Valley,
}

#[derive(Args)]
struct ExtractArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    gray: GrayOpts,
    /// The valley channel is extracted from the inverted image.
    #[arg(long, value_enum, default_value = "ridge")]
    channel: ChannelArg,
    /// Experiment config supplying enhancement and feature parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write orientation CSV, binary, skeleton and overlay images here.
    #[arg(long)]
    debug_dir: Option<PathBuf>,
}

#[derive(Args)]
struct MatchArgs {
    probe: PathBuf,
    gallery: PathBuf,
    /// Experiment config supplying matcher parameters.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 10)]
    fingers: usize,
    #[arg(long, default_value_t = 3)]
    impressions: usize,
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 256)]
    height: usize,
    #[arg(long, default_value_t = 30)]
    minutiae: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Shade the ridge surface under a directional light instead of the
    /// contact rendering.
    #[arg(long)]
    contactless: bool,
    #[arg(long, default_value_t = 0.7)]
    azimuth: f64,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_4)]
    elevation: f64,
    /// Write dark-skin colour images instead of grayscale.
    #[arg(long)]
    color: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Directory of images named after the configured pattern.
    #[arg(long)]
    data: PathBuf,
    /// Experiment config (TOML, or JSON by extension); defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// `<channel>=<path>` for each score file, e.g. `ridge=scores_ridge.csv`.
    #[arg(long = "scores", required = true)]
    scores: Vec<String>,
    #[arg(short, long)]
    output: PathBuf,
    /// FAR targets; defaults to the experiment defaults.
    #[arg(long = "far")]
    far: Vec<f64>,
    /// Also fuse the ridge and valley score files.
    #[arg(long)]
    fuse: bool,
    #[arg(long, default_value_t = 0.5)]
    weight: f64,
}

/// Bad arguments detected after parsing.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => {
            ExperimentConfig::from_path(p).with_context(|| format!("loading {}", p.display()))
        }
        None => Ok(ExperimentConfig::default()),
    }
}

fn convert(a: ConvertArgs) -> Result<()> {
    let img = load_image(&a.input)?;
    let gray = to_gray(&img, a.gray.grayscale.into(), a.gray.gamma)?;
    let out = if a.invert {
        ridgevalley::imaging::invert(&gray)
    } else {
        gray
    };
    out.save(&a.output)?;
    log::info!("wrote {} ({})", a.output.display(), out.provenance());
    Ok(())
}

fn extract(a: ExtractArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let img = load_image(&a.input)?;
    let gray = to_gray(&img, a.gray.grayscale.into(), a.gray.gamma)?;
    let channel = match a.channel {
        ChannelArg::Ridge => Channel::Ridge,
        ChannelArg::Valley => Channel::Valley,
    };
    let input = channel_image(&gray, channel);
    let id = a
        .input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ex = extract_template(&input, &cfg.enhance, &cfg.features, id)?;
    write_template(&ex.template, &a.output)?;
    if let Some(dir) = a.debug_dir {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        ex.enhanced.field.write_csv(dir.join("orientation.csv"))?;
        ex.enhanced
            .maps
            .binary
            .to_gray()
            .save(dir.join("binary.png"))?;
        ex.enhanced
            .maps
            .skeleton
            .to_gray()
            .save(dir.join("skeleton.png"))?;
        render_overlay(&input, &ex.template)?.save(dir.join("overlay.png"))?;
    }
    log::info!(
        "{}: {} minutiae, {} singular points",
        a.output.display(),
        ex.template.minutiae.len(),
        ex.template.singularities.len()
    );
    Ok(())
}

fn match_cmd(a: MatchArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let p = read_template(&a.probe)?;
    let g = read_template(&a.gallery)?;
    let outcome = match_templates(&p, &g, &cfg.matcher)?;
    if !outcome.scorable {
        log::warn!("too few minutiae to compare; reporting score 0");
    }
    println!("{}", outcome.score);
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let render = if a.contactless {
        RenderMode::Contactless(IlluminationParams {
            azimuth: a.azimuth,
            elevation: a.elevation,
            ..Default::default()
        })
    } else {
        RenderMode::Contact
    };
    let spec = CorpusSpec {
        fingers: a.fingers,
        impressions: a.impressions,
        width: a.width,
        height: a.height,
        minutiae: a.minutiae,
        render,
        color: a.color,
        seed: a.seed,
        ..Default::default()
    };
    let samples = generate_corpus(&spec)?;
    let paths = write_corpus(&samples, &a.output)?;
    log::info!("wrote {} images to {}", paths.len(), a.output.display());
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(out) = a.output {
        cfg.output_dir = out;
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    let pattern = FilenamePattern::new(&cfg.pattern)?;
    let manifest = ingest(&a.data, &pattern)?;
    log::info!(
        "{} images in {} classes",
        manifest.entries.len(),
        manifest.class_count()
    );
    let outcome = run_experiment(&manifest, &cfg)?;
    for f in &outcome.failures {
        log::warn!("{} ({}): {}", f.0, f.1, f.2);
    }
    for r in &outcome.reports {
        println!(
            "{}: EER {:.6} ({} genuine, {} imposter, {} unscorable)",
            r.channel, r.eer, r.counts.genuine, r.counts.imposter, r.counts.unscorable
        );
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let mut sets = Vec::new();
    for spec in &a.scores {
        let (channel, path) = spec
            .split_once('=')
            .ok_or_else(|| UsageError(format!("expected <channel>=<path>, got {spec:?}")))?;
        let channel: ScoreChannel = channel
            .parse()
            .map_err(|e: ridgevalley::Error| UsageError(e.to_string()))?;
        if sets
            .iter()
            .any(|s: &ridgevalley::fusion_eval::ScoreSet| s.channel == channel)
        {
            bail!(UsageError(format!("{channel} scores given twice")));
        }
        sets.push(read_scores_csv(path, channel)?);
    }
    if a.fuse {
        let find = |c| sets.iter().find(|s| s.channel == c);
        let (Some(r), Some(v)) = (find(ScoreChannel::Ridge), find(ScoreChannel::Valley)) else {
            bail!(UsageError(
                "fusion needs ridge and valley score files".into()
            ));
        };
        let fused = fuse_scores(&normalize_scores(r)?, &normalize_scores(v)?, a.weight)?;
        sets.retain(|s| s.channel != ScoreChannel::Fused);
        sets.push(fused);
    }
    sets.sort_by_key(|s| s.channel);
    let far = if a.far.is_empty() {
        ExperimentConfig::default().far_targets
    } else {
        a.far
    };
    let mut reports = Vec::new();
    for s in &mut sets {
        s.sort();
        reports.push(evaluate(s, &far)?);
    }
    ridgevalley::experiment::emit_report(&reports, &a.output)?;
    for r in &reports {
        println!("{}: EER {:.6}", r.channel, r.eer);
    }
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    match e.downcast_ref::<ridgevalley::Error>() {
        Some(ridgevalley::Error::Io { source, .. }) => match source.kind() {
            std::io::ErrorKind::NotFound | std::io::ErrorKind::InvalidData => 2,
            _ => 3,
        },
        Some(err) if err.is_data_error() => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let outcome = std::panic::catch_unwind(|| match cli.command {
        Command::Convert(a) => convert(a),
        Command::Extract(a) => extract(a),
        Command::Match(a) => match_cmd(a),
        Command::Synth(a) => synth(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
    });
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(3),
    }
}
