//! `glimpse` — experiment driver: train the predictor, evaluate in-context
//! curves, run symbolic baselines, linear probes, interventions, and plot
//! any result CSV. Exit codes: 0 success, 1 usage error, 2 runtime failure.

mod config;
mod reports;
mod svg;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use glimpse_core::interventions::{
    run_addition, run_ood_binding, run_replacement, run_withheld_saccade, InterventionKind,
    InterventionPlan,
};
use glimpse_core::model::{self, evaluate_curve, ModelParams, TrainOptions};
use glimpse_core::oracle::baseline_curve;
use glimpse_core::probes::{
    binding_analysis, collect_probe_data, decode_window, summarize_window, DecoderSettings,
    Offset, TargetSpec,
};
use glimpse_core::worldgen::{generate_scene, scene_to_dump, Scene, TrainConstraint};

use config::{
    load_config_file, parse_field, resolve_out_dir, write_manifest, ExperimentConfig,
};
use svg::{BarChart, LineChart, Series};

/// Errors split by exit code: usage problems (1) vs runtime failures (2).
#[derive(Debug)]
pub struct AppError {
    usage: bool,
    message: String,
}

impl AppError {
    pub fn usage(message: impl Into<String>) -> Self {
        AppError {
            usage: true,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        AppError {
            usage: false,
            message: message.into(),
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl<E: std::error::Error> From<E> for AppError {
    fn from(e: E) -> Self {
        AppError::runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "glimpse",
    about = "Saccade-conditioned token prediction lab",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the GRU predictor on freshly generated scenes
    Train(TrainArgs),
    /// Per-timestep accuracy of a trained checkpoint on unseen scenes
    Eval(EvalArgs),
    /// Monte-Carlo curves for the dictionary and transition-cache agents
    Oracle(OracleArgs),
    /// Linear decoding of labels, positions, and bound tuples
    Probe(ProbeArgs),
    /// Causal experiments on a trained checkpoint
    #[command(subcommand)]
    Intervene(InterveneCmd),
    /// Render a line chart from any result CSV
    Plot(PlotArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// key=value config file; flags override file values
    #[arg(long)]
    config: Option<PathBuf>,
    /// desk | paper | tiny
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long)]
    batch_scenes: Option<usize>,
    #[arg(long)]
    batches: Option<usize>,
    /// Restrict one label to the control position during training
    #[arg(long)]
    constraint: bool,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Log every Nth batch
    #[arg(long, default_value_t = 1)]
    log_every: usize,
    /// Checkpoint every Nth batch (0 = only at the end)
    #[arg(long, default_value_t = 1000)]
    checkpoint_every: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 500)]
    scenes: usize,
    #[arg(long, default_value_t = 60)]
    seq_len: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the test scenes in the line-oriented dump format
    #[arg(long)]
    dump_scenes: bool,
}

#[derive(Args)]
struct OracleArgs {
    /// Fixed token count 4-6; omitted = uniform mix
    #[arg(long)]
    tokens: Option<usize>,
    #[arg(long, default_value_t = 10_000)]
    episodes: usize,
    #[arg(long, default_value_t = 60)]
    seq_len: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 500)]
    scenes: usize,
    #[arg(long, default_value_t = 100)]
    seq_len: usize,
    /// Decoding window as FIRST:LAST in 1-based timesteps
    #[arg(long, default_value = "35:100")]
    window: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum InterveneCmd {
    /// Force a saccade never seen during the warmup walk
    Withheld(WithheldArgs),
    /// Replace one token's label mid-sequence
    Replace(ReplaceArgs),
    /// Add a sixth token mid-sequence
    Add(AddArgs),
    /// Out-of-distribution binding test for a constraint-trained model
    Ood(OodArgs),
}

#[derive(Args)]
struct CommonInterveneArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 500)]
    scenes: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WithheldArgs {
    #[command(flatten)]
    common: CommonInterveneArgs,
    /// Steps walked before the withheld saccade is forced
    #[arg(long, default_value_t = 100)]
    warmup: usize,
}

#[derive(Args)]
struct ReplaceArgs {
    #[command(flatten)]
    common: CommonInterveneArgs,
    #[arg(long, default_value_t = 35)]
    switch: usize,
    #[arg(long, default_value_t = 250)]
    horizon: usize,
}

#[derive(Args)]
struct AddArgs {
    #[command(flatten)]
    common: CommonInterveneArgs,
    #[arg(long, default_value_t = 35)]
    switch: usize,
    /// Defaults to switch + 150
    #[arg(long)]
    horizon: Option<usize>,
}

#[derive(Args)]
struct OodArgs {
    #[command(flatten)]
    common: CommonInterveneArgs,
    #[arg(long, default_value_t = 100)]
    horizon: usize,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Column used for the x axis (default: first column)
    #[arg(long)]
    x: Option<String>,
    /// Comma-separated y columns (default: every other numeric column)
    #[arg(long)]
    y: Option<String>,
    #[arg(long)]
    title: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            ) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.usage { 1 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Probe(args) => cmd_probe(args),
        Command::Intervene(cmd) => match cmd {
            InterveneCmd::Withheld(args) => cmd_intervene_withheld(args),
            InterveneCmd::Replace(args) => cmd_intervene_replace(args),
            InterveneCmd::Add(args) => cmd_intervene_add(args),
            InterveneCmd::Ood(args) => cmd_intervene_ood(args),
        },
        Command::Plot(args) => cmd_plot(args),
    }
}

fn load_params(path: &Path) -> Result<ModelParams<f32>, AppError> {
    let (params, _) = ModelParams::<f32>::load(path)
        .map_err(|e| AppError::runtime(format!("checkpoint {}: {e}", path.display())))?;
    Ok(params)
}

fn resolve_train_config(args: &TrainArgs) -> Result<ExperimentConfig, AppError> {
    let file = match &args.config {
        Some(path) => load_config_file(path)?,
        None => Default::default(),
    };
    let preset = args
        .preset
        .clone()
        .or_else(|| file.get("preset").cloned())
        .unwrap_or_else(|| "desk".to_string());
    let mut model = ExperimentConfig::preset_model(&preset)?;
    if let Some(v) = parse_field(&file, "seed")? {
        model.seed = v;
    }
    if let Some(v) = parse_field(&file, "hidden_size")? {
        model.hidden_size = v;
    }
    if let Some(v) = parse_field(&file, "num_gru_layers")? {
        model.num_gru_layers = v;
    }
    if let Some(v) = parse_field(&file, "seq_len")? {
        model.seq_len = v;
    }
    if let Some(v) = parse_field(&file, "batch_scenes")? {
        model.batch_scenes = v;
    }
    if let Some(v) = parse_field(&file, "total_batches")? {
        model.total_batches = v;
    }
    if let Some(v) = args.seed {
        model.seed = v;
    }
    if let Some(v) = args.hidden {
        model.hidden_size = v;
    }
    if let Some(v) = args.layers {
        model.num_gru_layers = v;
    }
    if let Some(v) = args.seq_len {
        model.seq_len = v;
    }
    if let Some(v) = args.batch_scenes {
        model.batch_scenes = v;
    }
    if let Some(v) = args.batches {
        model.total_batches = v;
    }
    let constraint =
        args.constraint || parse_field::<bool>(&file, "constraint")?.unwrap_or(false);
    let lr = args
        .lr
        .or(parse_field(&file, "lr")?)
        .unwrap_or(1e-3);
    let clip_norm = args
        .clip_norm
        .or(parse_field(&file, "clip_norm")?)
        .unwrap_or(1.0);
    let threads = args
        .threads
        .or(parse_field(&file, "threads")?)
        .unwrap_or_else(glimpse_core::par::default_threads);
    let out_flag = args
        .out
        .clone()
        .or_else(|| file.get("out_dir").map(PathBuf::from));
    let out_dir = resolve_out_dir(out_flag.as_deref(), "train_run");
    Ok(ExperimentConfig {
        preset,
        model,
        constraint,
        lr,
        clip_norm,
        threads,
        out_dir,
    })
}

fn cmd_train(args: TrainArgs) -> Result<(), AppError> {
    let cfg = resolve_train_config(&args)?;
    write_manifest(&cfg.out_dir, "train", &cfg.to_key_values())?;
    let options = TrainOptions {
        constraint: cfg.train_constraint(),
        adam: cfg.adam(),
        clip_norm: cfg.clip_norm,
        log_every: args.log_every,
        checkpoint_every: args.checkpoint_every,
        out_dir: Some(cfg.out_dir.clone()),
        progress: Some(|row| {
            if row.batch % 100 == 0 {
                eprintln!(
                    "batch {:>6}  loss {:.4}  acc(last20) {:.3}",
                    row.batch, row.loss, row.acc_last20
                );
            }
        }),
    };
    let out = model::train::<f32>(cfg.model, &options)
        .map_err(|e| AppError::runtime(e.to_string()))?;
    // loss curve figure from the already-written train_log.csv
    let series = Series {
        name: "loss".into(),
        points: out
            .log
            .iter()
            .map(|r| (r.batch as f64, r.loss))
            .collect(),
        band: None,
    };
    let chart = LineChart {
        title: format!("training loss ({} preset, seed {})", cfg.preset, cfg.model.seed),
        x_label: "batch".into(),
        y_label: "cross-entropy".into(),
        series: vec![series],
        y_range: None,
    };
    std::fs::write(cfg.out_dir.join("train_loss.svg"), chart.render())
        .map_err(|e| AppError::runtime(e.to_string()))?;
    println!(
        "trained {} batches; checkpoint {}",
        out.log.last().map(|r| r.batch + 1).unwrap_or(0),
        cfg.out_dir.join("model.glck").display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), AppError> {
    let out_dir = resolve_out_dir(args.out.as_deref(), "eval_run");
    let params = load_params(&args.checkpoint)?;
    let mut rng = seeded(args.seed);
    let scenes: Vec<Scene> = (0..args.scenes)
        .map(|_| generate_scene(&mut rng, None))
        .collect::<Result<_, _>>()
        .map_err(|e| AppError::runtime(e.to_string()))?;
    let curve = evaluate_curve(&params, &scenes, args.seq_len)
        .map_err(|e| AppError::runtime(e.to_string()))?;
    write_manifest(
        &out_dir,
        "eval",
        &[
            ("checkpoint".into(), args.checkpoint.display().to_string()),
            ("scenes".into(), args.scenes.to_string()),
            ("seq_len".into(), args.seq_len.to_string()),
            ("seed".into(), args.seed.to_string()),
        ],
    )?;
    reports::write_curve_csv(&out_dir.join("eval_curve.csv"), &curve)?;
    if args.dump_scenes {
        let mut dump = String::new();
        for s in &scenes {
            dump.push_str(&scene_to_dump(s));
        }
        std::fs::write(out_dir.join("scenes.txt"), dump)
            .map_err(|e| AppError::runtime(e.to_string()))?;
    }
    let chart = LineChart {
        title: format!("prediction accuracy on {} unseen scenes", args.scenes),
        x_label: "timestep".into(),
        y_label: "accuracy".into(),
        series: vec![Series {
            name: "model".into(),
            points: curve
                .iter()
                .map(|p| (p.timestep as f64, p.accuracy))
                .collect(),
            band: Some(curve.iter().map(|p| (p.ci_low, p.ci_high)).collect()),
        }],
        y_range: Some((0.0, 1.0)),
    };
    std::fs::write(out_dir.join("eval_curve.svg"), chart.render())
        .map_err(|e| AppError::runtime(e.to_string()))?;
    println!("eval curve written to {}", out_dir.display());
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> Result<(), AppError> {
    if let Some(t) = args.tokens {
        if !(4..=6).contains(&t) {
            return Err(AppError::usage("--tokens must be 4, 5, or 6"));
        }
    }
    let out_dir = resolve_out_dir(args.out.as_deref(), "oracle_run");
    let mut rng = seeded(args.seed);
    let curve = baseline_curve(args.tokens, args.episodes, args.seq_len, &mut rng);
    write_manifest(
        &out_dir,
        "oracle",
        &[
            (
                "tokens".into(),
                args.tokens.map(|t| t.to_string()).unwrap_or("mixed".into()),
            ),
            ("episodes".into(), args.episodes.to_string()),
            ("seq_len".into(), args.seq_len.to_string()),
            ("seed".into(), args.seed.to_string()),
        ],
    )?;
    reports::write_oracle_csv(&out_dir.join("oracle_curve.csv"), &curve)?;
    let xs: Vec<f64> = (1..=args.seq_len).map(|t| t as f64).collect();
    let chart = LineChart {
        title: format!("symbolic baselines ({} episodes)", args.episodes),
        x_label: "timestep".into(),
        y_label: "accuracy".into(),
        series: vec![
            Series {
                name: "dictionary".into(),
                points: xs.iter().cloned().zip(curve.oracle_acc.iter().cloned()).collect(),
                band: None,
            },
            Series {
                name: "transition cache".into(),
                points: xs.iter().cloned().zip(curve.cache_acc.iter().cloned()).collect(),
                band: None,
            },
        ],
        y_range: Some((0.0, 1.0)),
    };
    std::fs::write(out_dir.join("oracle_curve.svg"), chart.render())
        .map_err(|e| AppError::runtime(e.to_string()))?;
    println!("oracle curves written to {}", out_dir.display());
    Ok(())
}

fn parse_window(raw: &str) -> Result<(usize, usize), AppError> {
    let parts: Vec<&str> = raw.split(':').collect();
    if parts.len() != 2 {
        return Err(AppError::usage("--window expects FIRST:LAST"));
    }
    let lo = parts[0]
        .parse()
        .map_err(|_| AppError::usage("--window expects integers"))?;
    let hi = parts[1]
        .parse()
        .map_err(|_| AppError::usage("--window expects integers"))?;
    if lo < 1 || hi < lo {
        return Err(AppError::usage("--window must satisfy 1 <= FIRST <= LAST"));
    }
    Ok((lo, hi))
}

fn cmd_probe(args: ProbeArgs) -> Result<(), AppError> {
    let window = parse_window(&args.window)?;
    if window.1 > args.seq_len {
        return Err(AppError::usage("--window must end within --seq-len"));
    }
    let out_dir = resolve_out_dir(args.out.as_deref(), "probe_run");
    let threads = args.threads.unwrap_or_else(glimpse_core::par::default_threads);
    let params = load_params(&args.checkpoint)?;
    write_manifest(
        &out_dir,
        "probe",
        &[
            ("checkpoint".into(), args.checkpoint.display().to_string()),
            ("scenes".into(), args.scenes.to_string()),
            ("seq_len".into(), args.seq_len.to_string()),
            ("window".into(), format!("{}:{}", window.0, window.1)),
            ("seed".into(), args.seed.to_string()),
            ("threads".into(), threads.to_string()),
        ],
    )?;
    eprintln!("collecting activations over {} pentagon scenes", args.scenes);
    let ds = collect_probe_data(&params, args.scenes, args.seq_len, window, args.seed, threads)
        .map_err(|e| AppError::runtime(e.to_string()))?;
    let settings = DecoderSettings::default();
    let mut layer_reports = Vec::new();
    let mut extras = Vec::new();
    for li in 0..ds.layers.len() {
        let name = ds.layers[li].name();
        eprintln!("decoding layer {name}");
        layer_reports.push(binding_analysis(&ds, li, &settings, threads));
        extras.push((
            name.clone(),
            TargetSpec::Label(Offset::T2),
            decode_window(&ds, li, TargetSpec::Label(Offset::T2), &settings, threads),
        ));
        extras.push((
            name,
            TargetSpec::Position(Offset::T2),
            decode_window(&ds, li, TargetSpec::Position(Offset::T2), &settings, threads),
        ));
    }
    reports::write_probe_csv(&out_dir.join("probe_report.csv"), &layer_reports, &extras)?;
    reports::write_probe_summary_csv(
        &out_dir.join("probe_summary.csv"),
        &layer_reports,
        &extras,
    )?;

    // decoding bar chart: components per layer
    let categories: Vec<String> = layer_reports.iter().map(|r| r.layer.name()).collect();
    let chart = BarChart {
        title: "label and position decoding (window mean)".into(),
        y_label: "accuracy".into(),
        categories: categories.clone(),
        series: vec![
            (
                "label t".into(),
                layer_reports.iter().map(|r| summarize_window(&r.label_t).mean).collect(),
            ),
            (
                "label t+1".into(),
                layer_reports.iter().map(|r| summarize_window(&r.label_t1).mean).collect(),
            ),
            (
                "position t".into(),
                layer_reports.iter().map(|r| summarize_window(&r.pos_t).mean).collect(),
            ),
            (
                "position t+1".into(),
                layer_reports.iter().map(|r| summarize_window(&r.pos_t1).mean).collect(),
            ),
        ],
        y_range: (0.0, 1.0),
    };
    std::fs::write(out_dir.join("probe_decoding.svg"), chart.render())
        .map_err(|e| AppError::runtime(e.to_string()))?;

    // binding excess chart: tuple accuracy minus baseline per layer
    let chart = BarChart {
        title: "tuple decoding minus product baseline".into(),
        y_label: "accuracy - baseline".into(),
        categories,
        series: layer_reports[0]
            .tuples
            .iter()
            .enumerate()
            .map(|(ti, t)| {
                let name = format!(
                    "{} ({})",
                    t.spec.offset_name(),
                    if t.spec.congruent() == Some(true) {
                        "congruent"
                    } else {
                        "incongruent"
                    }
                );
                (
                    name,
                    layer_reports.iter().map(|r| r.tuples[ti].excess.mean).collect(),
                )
            })
            .collect(),
        y_range: (-0.5, 0.5),
    };
    std::fs::write(out_dir.join("probe_binding.svg"), chart.render())
        .map_err(|e| AppError::runtime(e.to_string()))?;
    println!("probe reports written to {}", out_dir.display());
    Ok(())
}

fn cmd_intervene_withheld(args: WithheldArgs) -> Result<(), AppError> {
    let out_dir = resolve_out_dir(args.common.out.as_deref(), "withheld_run");
    let threads = args.common.threads.unwrap_or_else(glimpse_core::par::default_threads);
    let params = load_params(&args.common.checkpoint)?;
    let report = run_withheld_saccade(
        &params,
        args.common.scenes,
        args.warmup,
        args.common.seed,
        threads,
    )
    .map_err(|e| AppError::runtime(e.to_string()))?;
    write_manifest(
        &out_dir,
        "intervene withheld",
        &[
            ("checkpoint".into(), args.common.checkpoint.display().to_string()),
            ("scenes".into(), args.common.scenes.to_string()),
            ("warmup".into(), args.warmup.to_string()),
            ("seed".into(), args.common.seed.to_string()),
        ],
    )?;
    reports::write_withheld_csv(&out_dir.join("withheld.csv"), &report)?;
    let chart = BarChart {
        title: format!(
            "withheld-saccade query after {} steps (N={})",
            args.warmup, args.common.scenes
        ),
        y_label: "accuracy".into(),
        categories: vec!["model".into(), "dictionary".into(), "cache".into()],
        series: vec![(
            "accuracy".into(),
            vec![
                report.model.rate(),
                report.oracle.rate(),
                report.cache.rate(),
            ],
        )],
        y_range: (0.0, 1.0),
    };
    std::fs::write(out_dir.join("withheld.svg"), chart.render())
        .map_err(|e| AppError::runtime(e.to_string()))?;
    println!(
        "withheld query: model {:.3}, dictionary {:.3}, cache {:.3} -> {}",
        report.model.rate(),
        report.oracle.rate(),
        report.cache.rate(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_intervene_replace(args: ReplaceArgs) -> Result<(), AppError> {
    let out_dir = resolve_out_dir(args.common.out.as_deref(), "replace_run");
    let threads = args.common.threads.unwrap_or_else(glimpse_core::par::default_threads);
    let params = load_params(&args.common.checkpoint)?;
    let plan = InterventionPlan {
        kind: InterventionKind::Replace,
        switch_timestep: args.switch,
        horizon: args.horizon,
    };
    plan.validate().map_err(|e| AppError::usage(e.to_string()))?;
    let report = run_replacement(&params, args.common.scenes, plan, args.common.seed, threads)
        .map_err(|e| AppError::runtime(e.to_string()))?;
    write_manifest(
        &out_dir,
        "intervene replace",
        &[
            ("checkpoint".into(), args.common.checkpoint.display().to_string()),
            ("scenes".into(), args.common.scenes.to_string()),
            ("switch".into(), args.switch.to_string()),
            ("horizon".into(), args.horizon.to_string()),
            ("seed".into(), args.common.seed.to_string()),
        ],
    )?;
    reports::write_replacement_csv(&out_dir.join("replace.csv"), &report)?;
    let xs = |f: &dyn Fn(&glimpse_core::interventions::ReplacementRow) -> f64| -> Vec<(f64, f64)> {
        report
            .rows
            .iter()
            .filter(|r| r.changed.trials > 0)
            .map(|r| (r.timestep as f64, f(r)))
            .collect()
    };
    let chart = LineChart {
        title: format!(
            "label replacement at t={} (N={})",
            args.switch, args.common.scenes
        ),
        x_label: "timestep".into(),
        y_label: "accuracy / error share".into(),
        series: vec![
            Series {
                name: "changed position".into(),
                points: xs(&|r| r.changed.rate()),
                band: None,
            },
            Series {
                name: "unchanged positions".into(),
                points: report
                    .rows
                    .iter()
                    .filter(|r| r.unchanged.trials > 0)
                    .map(|r| (r.timestep as f64, r.unchanged.rate()))
                    .collect(),
                band: None,
            },
            Series {
                name: "error: original label".into(),
                points: xs(&|r| r.err_original.rate()),
                band: None,
            },
            Series {
                name: "error: other labels".into(),
                points: xs(&|r| r.err_other.rate()),
                band: None,
            },
        ],
        y_range: Some((0.0, 1.0)),
    };
    std::fs::write(out_dir.join("replace.svg"), chart.render())
        .map_err(|e| AppError::runtime(e.to_string()))?;
    println!("replacement report written to {}", out_dir.display());
    Ok(())
}

fn cmd_intervene_add(args: AddArgs) -> Result<(), AppError> {
    let out_dir = resolve_out_dir(args.common.out.as_deref(), "add_run");
    let threads = args.common.threads.unwrap_or_else(glimpse_core::par::default_threads);
    let params = load_params(&args.common.checkpoint)?;
    let horizon = args.horizon.unwrap_or(args.switch + 150);
    let plan = InterventionPlan {
        kind: InterventionKind::Add,
        switch_timestep: args.switch,
        horizon,
    };
    plan.validate().map_err(|e| AppError::usage(e.to_string()))?;
    let report = run_addition(&params, args.common.scenes, plan, args.common.seed, threads)
        .map_err(|e| AppError::runtime(e.to_string()))?;
    write_manifest(
        &out_dir,
        "intervene add",
        &[
            ("checkpoint".into(), args.common.checkpoint.display().to_string()),
            ("scenes".into(), args.common.scenes.to_string()),
            ("switch".into(), args.switch.to_string()),
            ("horizon".into(), horizon.to_string()),
            ("seed".into(), args.common.seed.to_string()),
        ],
    )?;
    reports::write_addition_csv(&out_dir.join("add.csv"), &report)?;
    let chart = LineChart {
        title: format!("token addition at t={} (N={})", args.switch, args.common.scenes),
        x_label: "timestep".into(),
        y_label: "accuracy".into(),
        series: vec![
            Series {
                name: "new token".into(),
                points: report
                    .rows
                    .iter()
                    .filter(|r| r.new_pos.trials > 0)
                    .map(|r| (r.timestep as f64, r.new_pos.rate()))
                    .collect(),
                band: None,
            },
            Series {
                name: "old tokens".into(),
                points: report
                    .rows
                    .iter()
                    .filter(|r| r.old_pos.trials > 0)
                    .map(|r| (r.timestep as f64, r.old_pos.rate()))
                    .collect(),
                band: None,
            },
        ],
        y_range: Some((0.0, 1.0)),
    };
    std::fs::write(out_dir.join("add.svg"), chart.render())
        .map_err(|e| AppError::runtime(e.to_string()))?;
    println!("addition report written to {}", out_dir.display());
    Ok(())
}

fn cmd_intervene_ood(args: OodArgs) -> Result<(), AppError> {
    let out_dir = resolve_out_dir(args.common.out.as_deref(), "ood_run");
    let threads = args.common.threads.unwrap_or_else(glimpse_core::par::default_threads);
    let params = load_params(&args.common.checkpoint)?;
    let constraint = TrainConstraint::default();
    let report = run_ood_binding(
        &params,
        &constraint,
        args.common.scenes,
        args.horizon,
        args.common.seed,
        threads,
    )
    .map_err(|e| AppError::runtime(e.to_string()))?;
    write_manifest(
        &out_dir,
        "intervene ood",
        &[
            ("checkpoint".into(), args.common.checkpoint.display().to_string()),
            ("scenes".into(), args.common.scenes.to_string()),
            ("horizon".into(), args.horizon.to_string()),
            ("seed".into(), args.common.seed.to_string()),
        ],
    )?;
    reports::write_ood_csv(&out_dir.join("ood.csv"), &report)?;
    let chart = LineChart {
        title: format!("out-of-distribution binding (N={})", args.common.scenes),
        x_label: "timestep".into(),
        y_label: "accuracy".into(),
        series: vec![
            Series {
                name: "restricted label, novel quadrants".into(),
                points: report
                    .rows
                    .iter()
                    .filter(|r| r.k_token.trials > 0)
                    .map(|r| (r.timestep as f64, r.k_token.rate()))
                    .collect(),
                band: None,
            },
            Series {
                name: "other label at control position".into(),
                points: report
                    .rows
                    .iter()
                    .filter(|r| r.control_token.trials > 0)
                    .map(|r| (r.timestep as f64, r.control_token.rate()))
                    .collect(),
                band: None,
            },
        ],
        y_range: Some((0.0, 1.0)),
    };
    std::fs::write(out_dir.join("ood.svg"), chart.render())
        .map_err(|e| AppError::runtime(e.to_string()))?;
    println!("ood report written to {}", out_dir.display());
    Ok(())
}

fn cmd_plot(args: PlotArgs) -> Result<(), AppError> {
    let (header, rows) = reports::read_numeric_csv(&args.csv)?;
    if rows.is_empty() {
        return Err(AppError::usage("CSV has no data rows"));
    }
    let x_col = match &args.x {
        Some(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| AppError::usage(format!("no column named '{name}'")))?,
        None => 0,
    };
    let y_cols: Vec<usize> = match &args.y {
        Some(list) => list
            .split(',')
            .map(|name| {
                header
                    .iter()
                    .position(|h| h == name.trim())
                    .ok_or_else(|| AppError::usage(format!("no column named '{name}'")))
            })
            .collect::<Result<_, _>>()?,
        None => (0..header.len())
            .filter(|&c| c != x_col && rows.iter().any(|r| r[c].is_finite()))
            .collect(),
    };
    if y_cols.is_empty() {
        return Err(AppError::usage("no numeric y columns to plot"));
    }
    let series: Vec<Series> = y_cols
        .iter()
        .map(|&c| Series {
            name: header[c].clone(),
            points: rows
                .iter()
                .filter(|r| r[x_col].is_finite() && r[c].is_finite())
                .map(|r| (r[x_col], r[c]))
                .collect(),
            band: None,
        })
        .collect();
    let chart = LineChart {
        title: args
            .title
            .unwrap_or_else(|| args.csv.display().to_string()),
        x_label: header[x_col].clone(),
        y_label: "value".into(),
        series,
        y_range: None,
    };
    std::fs::write(&args.out, chart.render())
        .map_err(|e| AppError::runtime(e.to_string()))?;
    println!("chart written to {}", args.out.display());
    Ok(())
}

fn seeded(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
