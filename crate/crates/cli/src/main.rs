use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cec_core::trainer::{load_summary, metrics_csv_row, run_to_dir_with, ObservationPass, METRICS_CSV_HEADER};
use cec_core::{
    generate, ncr_to_p, CecError, LabeledDataset, MarginForm, ModelKind, RunSummary, SyntheticSpec,
    TrainConfig,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

#[derive(Parser)]
#[command(name = "cec", version, about = "Noisy-label detection by cross-epoch counting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic clustered dataset with open-set label noise.
    Generate(GenerateArgs),
    /// Train on a generated dataset and write the run log.
    Train(TrainArgs),
    /// Summarize one or more finished runs.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output directory.
    #[arg(short, long)]
    out: PathBuf,
    /// Start from a JSON spec file; flags override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    /// Noisy-to-clean ratio.
    #[arg(long)]
    ncr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    extra_classes: Option<usize>,
    /// Within-cluster standard deviation.
    #[arg(long)]
    spread: Option<f64>,
    /// Minimum angle between centroids, in radians.
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    heldout_per_class: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Ablation {
    Cic,
    Tic,
    Curriculum,
    /// Plain training: no counters, no masking.
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Linear,
    Mlp,
}

#[derive(Clone, Copy, ValueEnum)]
enum MarginArg {
    Cosine,
    Angular,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory written by `cec generate`.
    dataset: PathBuf,
    /// Run directory.
    #[arg(short, long, default_value = "run")]
    out: PathBuf,
    /// Start from a JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tau_p: Option<f64>,
    #[arg(long)]
    tau_n: Option<f64>,
    #[arg(long)]
    tau_cic: Option<u32>,
    #[arg(long)]
    tau_tic: Option<u32>,
    #[arg(long)]
    e1: Option<u32>,
    #[arg(long)]
    e2: Option<u32>,
    #[arg(long)]
    e3: Option<u32>,
    #[arg(long)]
    s1: Option<f64>,
    #[arg(long)]
    s2: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long, value_enum)]
    margin_form: Option<MarginArg>,
    #[arg(long)]
    epochs: Option<u32>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    trial_pairs: Option<usize>,
    /// Disable a component; may be repeated.
    #[arg(long, value_enum)]
    ablate: Vec<Ablation>,
    /// Classify samples with a separate pass before each epoch's updates.
    #[arg(long)]
    eval_pass: bool,
    /// Keep per-sample traces in epochs.jsonl.
    #[arg(long)]
    record_samples: bool,
    /// Suppress per-epoch progress lines.
    #[arg(short, long)]
    quiet: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories or summary.json files.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Defaults to JSON for one run and CSV for several.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write to a file instead of stdout.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<CecError> for Failure {
    fn from(e: CecError) -> Self {
        match e {
            CecError::InvalidConfig(_) | CecError::InvalidInput(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CEC_LOG_LEVEL", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn cmd_generate(a: GenerateArgs) -> Result<(), Failure> {
    let mut spec: SyntheticSpec = match &a.spec {
        Some(p) => read_json(p)?,
        None => SyntheticSpec::default(),
    };
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => { $(if let Some(v) = a.$flag { spec.$field = v; })* };
    }
    set!(classes => clean_classes, per_class => samples_per_class, dim => dim, ncr => ncr, seed => seed,
         extra_classes => extra_classes, spread => cluster_spread, separation => class_separation,
         heldout_per_class => heldout_per_class);
    spec.validate()?;

    let ds = generate(&spec).map_err(|e| Failure::Runtime(e.to_string()))?;
    ds.save(&a.out).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!(
        "wrote {}: N={} K={} noisy={} p={:.4} heldout={}",
        a.out.display(),
        ds.len(),
        ds.classes(),
        ds.noise_total(),
        ncr_to_p(spec.ncr),
        ds.heldout_len()
    );
    Ok(())
}

fn resolve_config(a: &TrainArgs) -> Result<TrainConfig, Failure> {
    let mut c: TrainConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    macro_rules! set {
        ($($flag:ident => $($path:ident).+),* $(,)?) => { $(if let Some(v) = a.$flag { c.$($path).+ = v; })* };
    }
    set!(
        tau_p => thresholds.tau_p, tau_n => thresholds.tau_n,
        tau_cic => detector.tau_cic, tau_tic => detector.tau_tic,
        e1 => schedule.e1, e2 => schedule.e2, e3 => schedule.e3, s1 => schedule.s1, s2 => schedule.s2,
        margin => loss.margin, scale => loss.scale,
        epochs => epochs, batch_size => batch_size,
        lr => optimizer.learning_rate, momentum => optimizer.momentum, lr_decay => optimizer.lr_decay,
        seed => seed, trial_pairs => trial_pairs,
    );
    if let Some(f) = a.margin_form {
        c.loss.margin_form = match f {
            MarginArg::Cosine => MarginForm::AdditiveCosine,
            MarginArg::Angular => MarginForm::AdditiveAngular,
        };
    }
    let (hidden, embedding_dim) = match c.model {
        ModelKind::Mlp { hidden, embedding_dim } => (hidden, embedding_dim),
        ModelKind::LinearHead => match ModelKind::default() {
            ModelKind::Mlp { hidden, embedding_dim } => (hidden, embedding_dim),
            ModelKind::LinearHead => (0, 0),
        },
    };
    let mlp = ModelKind::Mlp {
        hidden: a.hidden.unwrap_or(hidden),
        embedding_dim: a.embedding_dim.unwrap_or(embedding_dim),
    };
    match a.model {
        Some(ModelArg::Linear) => c.model = ModelKind::LinearHead,
        Some(ModelArg::Mlp) => c.model = mlp,
        None if matches!(c.model, ModelKind::Mlp { .. }) => c.model = mlp,
        None => {}
    }
    for ab in &a.ablate {
        match ab {
            Ablation::Cic => c.toggles.enable_cic = false,
            Ablation::Tic => c.toggles.enable_tic = false,
            Ablation::Curriculum => c.toggles.enable_curriculum = false,
            Ablation::All => c.toggles = cec_core::Toggles::baseline(),
        }
    }
    if a.eval_pass {
        c.observation_pass = ObservationPass::EvaluationPass;
    }
    if a.record_samples {
        c.record_samples = true;
    }
    c.validate()?;
    Ok(c)
}

#[derive(Serialize)]
struct RunManifest<'a> {
    dataset: &'a Path,
    config_file: Option<&'a Path>,
    output: &'a Path,
    config: &'a TrainConfig,
}

fn cmd_train(a: TrainArgs) -> Result<(), Failure> {
    let config = resolve_config(&a)?;
    println!("config: {}", config.echo());
    let ds = LabeledDataset::load(&a.dataset).map_err(|e| Failure::Runtime(e.to_string()))?;

    fs::create_dir_all(&a.out).map_err(|e| Failure::Runtime(format!("{}: {e}", a.out.display())))?;
    let manifest = RunManifest {
        dataset: &a.dataset,
        config_file: a.config.as_deref(),
        output: &a.out,
        config: &config,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Runtime(e.to_string()))?;
    fs::write(a.out.join("manifest.json"), text + "\n")
        .map_err(|e| Failure::Runtime(format!("{}: {e}", a.out.display())))?;

    let quiet = a.quiet;
    let log = run_to_dir_with(&config, &ds, &a.out, |r| {
        if !quiet {
            println!(
                "epoch {:>3} live={} easy={} hard={} inconsistent={} trained={} removed={} tau_m={:.4} loss={:.4}",
                r.epoch,
                r.live,
                r.easy,
                r.hard,
                r.inconsistent,
                r.participating,
                r.removals.len(),
                r.tau_m,
                r.mean_loss
            );
        }
    })
    .map_err(|e| Failure::Runtime(e.to_string()))?;

    let s = &log.summary;
    println!(
        "done: removed={} precision={:.4} recall={:.4} f1={:.4} accuracy={:.4} eer={} -> {}",
        s.removals.len(),
        s.detection.precision,
        s.detection.recall,
        s.detection.f1,
        s.detection.accuracy,
        s.eer.map(|e| format!("{e:.4}")).unwrap_or_else(|| "n/a".into()),
        a.out.display()
    );
    Ok(())
}

fn report_json(path: &Path, s: &RunSummary) -> serde_json::Value {
    let mut timeline: Vec<(u32, usize)> = Vec::new();
    for ev in &s.removals {
        match timeline.last_mut() {
            Some((epoch, n)) if *epoch == ev.epoch => *n += 1,
            _ => timeline.push((ev.epoch, 1)),
        }
    }
    json!({
        "run": path,
        "ncr": s.ncr,
        "p": s.p,
        "samples": s.samples,
        "noisy": s.noisy,
        "removed": s.removals.len(),
        "precision": s.detection.precision,
        "recall": s.detection.recall,
        "f1": s.detection.f1,
        "accuracy": s.detection.accuracy,
        "eer": s.eer,
        "removal_timeline": timeline.iter().map(|(e, n)| json!({"epoch": e, "removed": n})).collect::<Vec<_>>(),
    })
}

fn cmd_report(a: ReportArgs) -> Result<(), Failure> {
    let mut loaded: Vec<(PathBuf, RunSummary)> = Vec::new();
    for path in &a.runs {
        match load_summary(path) {
            Ok(s) => loaded.push((path.clone(), s)),
            Err(e) => log::warn!("skipping {}: {e}", path.display()),
        }
    }
    if loaded.is_empty() {
        return Err(Failure::Runtime("no readable run logs".into()));
    }
    loaded.sort_by(|x, y| x.1.ncr.total_cmp(&y.1.ncr));

    let format = a.format.unwrap_or(if a.runs.len() == 1 { Format::Json } else { Format::Csv });
    let text = match format {
        Format::Json => {
            let items: Vec<_> = loaded.iter().map(|(p, s)| report_json(p, s)).collect();
            let value = if a.runs.len() == 1 { items.into_iter().next().unwrap() } else { json!(items) };
            serde_json::to_string_pretty(&value).map_err(|e| Failure::Runtime(e.to_string()))? + "\n"
        }
        Format::Csv => {
            let mut out = format!("{METRICS_CSV_HEADER}\n");
            for (_, s) in &loaded {
                out.push_str(&metrics_csv_row(s));
                out.push('\n');
            }
            out
        }
    };
    match &a.out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?,
        None => print!("{text}"),
    }
    Ok(())
}
