use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aliformer::attention::{extract_attention_stats, LayerKind};
use aliformer::checkpoint::Checkpoint;
use aliformer::data::{
    load_dataset, make_windows, prepare, synthetic_schema, write_dataset, FeatureSchema,
    PreparedData, SeriesRecord, SplitMode, SynthConfig,
};
use aliformer::error::{Error, ErrorKind, Result};
use aliformer::eval::{
    ablation_rows, ablation_table, collect_attention_maps, evaluate, plots, run_ablation, sweep,
    what_if, Intervention, Scenario, SweepParam, Variant, WhatIfSpec,
};
use aliformer::model::ModelConfig;
use aliformer::scalar::Scalar;
use aliformer::train::{train, TrainConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(
    name = "aliformer",
    version,
    about = "Knowledge-guided transformer for sales forecasting"
)]
struct Cli {
    /// TOML file with [schema], [model], [train] and [data] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Precision::F64)]
    precision: Precision,
    /// Single-threaded, bit-reproducible execution.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Score a checkpoint on one split.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Report metrics in original units.
        #[arg(long)]
        denorm: bool,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Train full, wo/future and wo/AliAttention variants and compare.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Forecast under altered future knowledge.
    Whatif {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        series: String,
        /// Window start row within the series; defaults to the last window.
        #[arg(long)]
        offset: Option<usize>,
        /// TOML file with [[scenario]] tables.
        #[arg(long, conflicts_with = "column")]
        scenarios: Option<PathBuf>,
        /// Knowledge column for a single inline scenario.
        #[arg(long, requires = "start", requires = "end")]
        column: Option<String>,
        #[arg(long, group = "intervention")]
        scale: Option<f64>,
        #[arg(long, group = "intervention")]
        set: Option<f64>,
        #[arg(long, group = "intervention")]
        historical_mean: Option<usize>,
        /// First horizon step (1-based window position in T+1..=T+L).
        #[arg(long)]
        start: Option<usize>,
        #[arg(long)]
        end: Option<usize>,
        #[arg(long)]
        denorm: bool,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Sensitivity curve over n_layers or p2.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Export attention-weight histograms and knowledge-branch proportions.
    AttnStats {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value_t = 50)]
        bins: usize,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
        range: Option<Vec<f64>>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Dataset utilities.
    Data {
        #[command(subcommand)]
        cmd: DataCommand,
    },
}

#[derive(Subcommand)]
enum DataCommand {
    /// Generate a synthetic promotion dataset and its config.
    Synth {
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        series: usize,
        #[arg(long, default_value_t = 60)]
        history_len: usize,
        #[arg(long, default_value_t = 10)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        extra_len: usize,
    },
    /// Load a dataset and report problems.
    Validate {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Per-column summary statistics.
    Stats {
        #[command(flatten)]
        data: DataArgs,
    },
}

#[derive(Args, Clone, Default)]
struct DataArgs {
    /// CSV or JSON-lines dataset.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Train/val/test ratios.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    split_ratios: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    split_mode: Option<SplitArg>,
    #[arg(long)]
    split_seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    ById,
    Chronological,
}

#[derive(Args, Clone, Default)]
struct ModelArgs {
    #[arg(long)]
    d_x: Option<usize>,
    #[arg(long)]
    n_layers: Option<usize>,
    #[arg(long)]
    n_heads: Option<usize>,
    #[arg(long)]
    d_ff: Option<usize>,
    #[arg(long)]
    layer_kind: Option<LayerKind>,
    #[arg(long)]
    use_future_knowledge: Option<bool>,
}

#[derive(Args, Clone, Default)]
struct TrainArgs {
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    p1: Option<f64>,
    #[arg(long)]
    p2: Option<f64>,
    #[arg(long)]
    span_len: Option<usize>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    train_stride: Option<usize>,
    #[arg(long)]
    val_stride: Option<usize>,
    #[arg(long)]
    checked: bool,
}

/// Contents of `--config`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    schema: Option<FeatureSchema>,
    model: ModelSection,
    train: TrainConfig,
    data: DataSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ModelSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    d_x: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_layers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_heads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    d_ff: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    layer_kind: Option<LayerKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    use_future_knowledge: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DataSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    path: Option<PathBuf>,
    split_ratios: [f64; 3],
    split_mode: SplitMode,
    split_seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            path: None,
            split_ratios: [0.7, 0.1, 0.2],
            split_mode: SplitMode::ById,
            split_seed: 0,
        }
    }
}

#[derive(Debug, Deserialize)]
struct ScenarioFile {
    scenario: Vec<Scenario>,
}

struct Ctx {
    file: ConfigFile,
    /// Directory of the config file; relative data paths resolve against it.
    base: PathBuf,
    seed: Option<u64>,
    precision: Precision,
}

impl Ctx {
    fn load(cli: &Cli) -> Result<Self> {
        let (file, base) = match &cli.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| {
                    Error::Config(format!("cannot read config {}: {e}", p.display()))
                })?;
                let file: ConfigFile = toml::from_str(&text)?;
                (file, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (ConfigFile::default(), PathBuf::new()),
        };
        Ok(Ctx {
            file,
            base,
            seed: cli.seed,
            precision: cli.precision,
        })
    }

    fn schema(&self) -> Result<FeatureSchema> {
        let schema = match &self.file.schema {
            Some(s) => s.clone(),
            None => synthetic_schema(60, 10)?,
        };
        schema.validate()?;
        Ok(schema)
    }

    fn data_section(&self, a: &DataArgs) -> Result<DataSection> {
        let mut d = self.file.data.clone();
        if let Some(p) = &a.data {
            d.path = Some(p.clone());
        } else if let Some(p) = &d.path {
            d.path = Some(self.base.join(p));
        }
        if let Some(r) = &a.split_ratios {
            d.split_ratios = [r[0], r[1], r[2]];
        }
        if let Some(m) = a.split_mode {
            d.split_mode = match m {
                SplitArg::ById => SplitMode::ById,
                SplitArg::Chronological => SplitMode::Chronological,
            };
        }
        if let Some(s) = a.split_seed {
            d.split_seed = s;
        }
        Ok(d)
    }

    fn records(&self, a: &DataArgs, schema: &FeatureSchema) -> Result<Vec<SeriesRecord>> {
        let d = self.data_section(a)?;
        let path = d
            .path
            .ok_or_else(|| Error::Config("no dataset given (use --data or [data] path)".into()))?;
        let report = load_dataset(&path, schema)?;
        for w in &report.warnings {
            log::warn!("{w}");
        }
        if report.skipped_short > 0 {
            log::warn!(
                "{} series shorter than T + L were skipped",
                report.skipped_short
            );
        }
        Ok(report.records)
    }

    fn prepared(&self, a: &DataArgs, schema: &FeatureSchema) -> Result<PreparedData> {
        let d = self.data_section(a)?;
        let records = self.records(a, schema)?;
        prepare(&records, schema, d.split_ratios, d.split_mode, d.split_seed)
    }

    fn model_config(&self, a: &ModelArgs, schema: &FeatureSchema) -> Result<ModelConfig> {
        let m = &self.file.model;
        let d_x = a.d_x.or(m.d_x).unwrap_or(64);
        let mut cfg = ModelConfig::with_size(
            schema,
            d_x,
            a.n_layers.or(m.n_layers).unwrap_or(4),
            a.n_heads.or(m.n_heads).unwrap_or(4),
        );
        if let Some(v) = a.d_ff.or(m.d_ff) {
            cfg.d_ff = v;
        }
        if let Some(v) = a.layer_kind.or(m.layer_kind) {
            cfg.layer_kind = v;
        }
        if let Some(v) = a.use_future_knowledge.or(m.use_future_knowledge) {
            cfg.use_future_knowledge = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn train_config(&self, a: &TrainArgs) -> Result<TrainConfig> {
        let mut t = self.file.train.clone();
        macro_rules! over {
            ($($f:ident),*) => { $( if let Some(v) = a.$f { t.$f = v; } )* };
        }
        over!(
            lr,
            beta1,
            beta2,
            eps,
            batch_size,
            epochs,
            p1,
            p2,
            clip_norm,
            train_stride,
            val_stride
        );
        if a.span_len.is_some() {
            t.span_len = a.span_len;
        }
        if a.checked {
            t.checked = true;
        }
        // a lone --p2 implies p1 = 1 - p2, and vice versa
        match (a.p1, a.p2) {
            (None, Some(p2)) => t.p1 = 1.0 - p2,
            (Some(p1), None) => t.p2 = 1.0 - p1,
            _ => {}
        }
        if let Some(s) = self.seed {
            t.seed = s;
        }
        t.validate()?;
        Ok(t)
    }
}

fn pick_split<'a>(
    data: &'a PreparedData,
    split: &str,
) -> Result<(&'a [SeriesRecord], &'a [SeriesRecord])> {
    match split {
        "train" => Ok((&data.raw.train, &data.normalized.train)),
        "val" => Ok((&data.raw.val, &data.normalized.val)),
        "test" => Ok((&data.raw.test, &data.normalized.test)),
        _ => Err(Error::Config(format!(
            "unknown split {split:?} (train, val or test)"
        ))),
    }
}

fn load_checkpoint<F: Scalar>(path: &Path, schema: &FeatureSchema) -> Result<Checkpoint<F>> {
    let ck = Checkpoint::<F>::load_for_schema(path, schema)?;
    if ck.norm.is_none() {
        return Err(Error::Checkpoint(
            "checkpoint carries no normalization statistics".into(),
        ));
    }
    Ok(ck)
}

/// Split of the checkpoint's own dataset, normalized with its stored statistics.
fn checkpoint_split<F: Scalar>(
    ctx: &Ctx,
    data: &DataArgs,
    path: &Path,
    split: &str,
) -> Result<(Checkpoint<F>, Vec<SeriesRecord>, FeatureSchema)> {
    let schema = ctx.schema()?;
    let ck = load_checkpoint::<F>(path, &schema)?;
    let prepared = ctx.prepared(data, &schema)?;
    let (raw, _) = pick_split(&prepared, split)?;
    let norm = ck.norm.as_ref().expect("checked on load");
    let records = norm.apply(raw, &schema)?;
    Ok((ck, records, schema))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))
}

fn cmd_train<F: Scalar>(
    ctx: &Ctx,
    data: &DataArgs,
    model: &ModelArgs,
    tr: &TrainArgs,
    out: &Path,
) -> Result<()> {
    let schema = ctx.schema()?;
    let mc = ctx.model_config(model, &schema)?;
    let tc = ctx.train_config(tr)?;
    let prepared = ctx.prepared(data, &schema)?;
    log::info!(
        "training on {} series ({} val, {} test)",
        prepared.normalized.train.len(),
        prepared.normalized.val.len(),
        prepared.normalized.test.len()
    );
    let outcome = train::<F>(
        &prepared.normalized.train,
        &prepared.normalized.val,
        &schema,
        &mc,
        &tc,
    )?;
    for e in &outcome.history {
        match e.val_loss {
            Some(v) => println!(
                "epoch {:>3}  train {:.6}  val {:.6}",
                e.epoch, e.train_loss, v
            ),
            None => println!("epoch {:>3}  train {:.6}", e.epoch, e.train_loss),
        }
    }
    println!("best epoch {}", outcome.best_epoch);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    Checkpoint::from_outcome(outcome, Some(prepared.norm)).save(out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_evaluate<F: Scalar>(
    ctx: &Ctx,
    data: &DataArgs,
    checkpoint: &Path,
    split: &str,
    denorm: bool,
    json: Option<&Path>,
) -> Result<()> {
    let (ck, records, schema) = checkpoint_split::<F>(ctx, data, checkpoint, split)?;
    let norm = denorm.then(|| ck.norm.as_ref().expect("checked on load"));
    let report = evaluate(&ck.model, &records, &schema, split, norm)?;
    print!("{}", report.to_table());
    if let Some(p) = json {
        fs::write(p, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn cmd_ablate<F: Scalar>(
    ctx: &Ctx,
    data: &DataArgs,
    model: &ModelArgs,
    tr: &TrainArgs,
    out: &Path,
) -> Result<()> {
    let schema = ctx.schema()?;
    let mc = ctx.model_config(model, &schema)?;
    let tc = ctx.train_config(tr)?;
    let prepared = ctx.prepared(data, &schema)?;
    let runs = run_ablation::<F>(&prepared.normalized, &schema, &mc, &tc, &Variant::ALL)?;
    print!("{}", ablation_table(&runs));
    ensure_dir(out)?;
    let path = plots::write_ablation(&ablation_rows(&runs), out)?;
    println!("wrote {}", path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_whatif<F: Scalar>(
    ctx: &Ctx,
    data: &DataArgs,
    checkpoint: &Path,
    series: &str,
    offset: Option<usize>,
    scenarios: Vec<Scenario>,
    denorm: bool,
    out: &Path,
) -> Result<()> {
    let schema = ctx.schema()?;
    let ck = load_checkpoint::<F>(checkpoint, &schema)?;
    let records = ctx.records(data, &schema)?;
    let record = records
        .iter()
        .find(|r| r.series_id == series)
        .ok_or_else(|| Error::Data(format!("series `{series}` not found")))?;
    let window = schema.window_len();
    let last = record
        .len()
        .checked_sub(window)
        .ok_or_else(|| Error::Data(format!("series `{series}` is shorter than one window")))?;
    let offset = offset.unwrap_or(last);
    let norm = ck.norm.as_ref().expect("checked on load");
    let result = what_if(&ck.model, norm, record, offset, &scenarios, denorm)?;
    let rows = result.rows();
    for r in &rows {
        println!(
            "{:<16} step {:>3}  {:<10} {:.6}",
            r.scenario, r.step, r.target, r.value
        );
    }
    ensure_dir(out)?;
    let path = plots::write_whatif(&rows, out)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_sweep<F: Scalar>(
    ctx: &Ctx,
    data: &DataArgs,
    model: &ModelArgs,
    tr: &TrainArgs,
    param: &str,
    values: &[f64],
    out: &Path,
) -> Result<()> {
    let param: SweepParam = param.parse()?;
    let schema = ctx.schema()?;
    let mc = ctx.model_config(model, &schema)?;
    let tc = ctx.train_config(tr)?;
    let prepared = ctx.prepared(data, &schema)?;
    let rows = sweep::<F>(param, values, &prepared.normalized, &schema, &mc, &tc)?;
    println!(
        "{:<10} {:>10} {:>10} {:>10}",
        "param", "value", "avg_mse", "avg_mae"
    );
    for r in &rows {
        println!(
            "{:<10} {:>10} {:>10.4} {:>10.4}",
            r.param, r.value, r.avg_mse, r.avg_mae
        );
    }
    ensure_dir(out)?;
    let path = plots::write_sweep(&rows, out)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_attn_stats<F: Scalar>(
    ctx: &Ctx,
    data: &DataArgs,
    checkpoint: &Path,
    split: &str,
    bins: usize,
    range: Option<(f64, f64)>,
    out: &Path,
) -> Result<()> {
    let (ck, records, schema) = checkpoint_split::<F>(ctx, data, checkpoint, split)?;
    let windows = make_windows::<F>(&records, &schema, 1)?;
    if windows.is_empty() {
        return Err(Error::Data(format!("split `{split}` has no windows")));
    }
    let maps = collect_attention_maps(&ck.model, &windows)?;
    let stats = extract_attention_stats(&maps, bins, range)?;
    for p in &stats.proportions {
        println!(
            "layer {:>2}  knowledge-branch proportion {:.4}",
            p.layer, p.proportion
        );
    }
    ensure_dir(out)?;
    let (h, p) = plots::write_attention_stats(&stats, out)?;
    println!("wrote {} and {}", h.display(), p.display());
    Ok(())
}

fn cmd_synth(
    ctx: &Ctx,
    out: &Path,
    series: usize,
    history_len: usize,
    horizon: usize,
    extra_len: usize,
) -> Result<()> {
    let cfg = SynthConfig {
        n_series: series,
        history_len,
        horizon,
        extra_len,
        seed: ctx.seed.unwrap_or(0),
        ..SynthConfig::default()
    };
    let set = aliformer::data::generate_synthetic(&cfg)?;
    ensure_dir(out)?;
    let data_path = out.join("data.csv");
    write_dataset(&data_path, &set.records, &set.schema)?;
    let config = ConfigFile {
        schema: Some(set.schema),
        data: DataSection {
            path: Some(PathBuf::from("data.csv")),
            ..DataSection::default()
        },
        ..ConfigFile::default()
    };
    let cfg_path = out.join("config.toml");
    fs::write(&cfg_path, toml::to_string(&config).map_err(Error::TomlSer)?)?;
    println!(
        "wrote {} series to {} and {}",
        series,
        data_path.display(),
        cfg_path.display()
    );
    Ok(())
}

fn cmd_validate(ctx: &Ctx, data: &DataArgs) -> Result<()> {
    let schema = ctx.schema()?;
    let path = ctx
        .data_section(data)?
        .path
        .ok_or_else(|| Error::Config("no dataset given (use --data or [data] path)".into()))?;
    let report = load_dataset(&path, &schema)?;
    for w in &report.warnings {
        println!("warning: {w}");
    }
    let windows: usize = report
        .records
        .iter()
        .map(|r| aliformer::data::window_count(r.len(), schema.window_len(), 1))
        .sum();
    println!(
        "ok: {} series, {} stride-1 windows, {} skipped as too short",
        report.records.len(),
        windows,
        report.skipped_short
    );
    Ok(())
}

fn cmd_stats(ctx: &Ctx, data: &DataArgs) -> Result<()> {
    let schema = ctx.schema()?;
    let records = ctx.records(data, &schema)?;
    let rows: usize = records.iter().map(SeriesRecord::len).sum();
    println!("{} series, {} rows", records.len(), rows);
    println!(
        "{:<16} {:>10} {:>12} {:>12} {:>12} {:>12}",
        "column", "group", "mean", "std", "min", "max"
    );
    let summarize = |name: &str, group: &str, values: Vec<f64>| {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        println!("{name:<16} {group:>10} {mean:>12.4} {std:>12.4} {min:>12.4} {max:>12.4}");
    };
    for (c, col) in schema.statistic_columns().iter().enumerate() {
        summarize(
            &col.name,
            "statistic",
            records
                .iter()
                .flat_map(|r| r.statistics.iter().map(move |row| row[c]))
                .collect(),
        );
    }
    for (c, col) in schema.knowledge_columns().iter().enumerate() {
        summarize(
            &col.name,
            "knowledge",
            records
                .iter()
                .flat_map(|r| r.knowledge.iter().map(move |row| row[c]))
                .collect(),
        );
    }
    Ok(())
}

fn inline_scenario(
    column: String,
    scale: Option<f64>,
    set: Option<f64>,
    historical_mean: Option<usize>,
    start: usize,
    end: usize,
) -> Result<Scenario> {
    let intervention = match (scale, set, historical_mean) {
        (Some(factor), None, None) => Intervention::Scale { factor },
        (None, Some(value), None) => Intervention::SetConstant { value },
        (None, None, Some(days)) => Intervention::HistoricalMean { days },
        _ => {
            return Err(Error::Config(
                "give exactly one of --scale, --set, --historical-mean".into(),
            ))
        }
    };
    let name = match intervention {
        Intervention::Scale { factor } => format!("{column} x{factor}"),
        Intervention::SetConstant { value } => format!("{column} = {value}"),
        Intervention::HistoricalMean { days } => format!("{column} {days}-day mean"),
    };
    Ok(Scenario {
        name,
        changes: vec![WhatIfSpec {
            column,
            intervention,
            start,
            end,
        }],
    })
}

fn dispatch<F: Scalar>(ctx: &Ctx, cmd: Command) -> Result<()> {
    match cmd {
        Command::Train {
            data,
            model,
            train,
            out,
        } => cmd_train::<F>(ctx, &data, &model, &train, &out),
        Command::Evaluate {
            data,
            checkpoint,
            split,
            denorm,
            json,
        } => cmd_evaluate::<F>(ctx, &data, &checkpoint, &split, denorm, json.as_deref()),
        Command::Ablate {
            data,
            model,
            train,
            out,
        } => cmd_ablate::<F>(ctx, &data, &model, &train, &out),
        Command::Whatif {
            data,
            checkpoint,
            series,
            offset,
            scenarios,
            column,
            scale,
            set,
            historical_mean,
            start,
            end,
            denorm,
            out,
        } => {
            let scenarios = match (scenarios, column) {
                (Some(path), _) => {
                    let text = fs::read_to_string(&path).map_err(|e| {
                        Error::Config(format!("cannot read {}: {e}", path.display()))
                    })?;
                    toml::from_str::<ScenarioFile>(&text)?.scenario
                }
                (None, Some(column)) => vec![inline_scenario(
                    column,
                    scale,
                    set,
                    historical_mean,
                    start.expect("required by clap"),
                    end.expect("required by clap"),
                )?],
                (None, None) => {
                    return Err(Error::Config("give --scenarios FILE or --column".into()))
                }
            };
            cmd_whatif::<F>(
                ctx,
                &data,
                &checkpoint,
                &series,
                offset,
                scenarios,
                denorm,
                &out,
            )
        }
        Command::Sweep {
            data,
            model,
            train,
            param,
            values,
            out,
        } => cmd_sweep::<F>(ctx, &data, &model, &train, &param, &values, &out),
        Command::AttnStats {
            data,
            checkpoint,
            split,
            bins,
            range,
            out,
        } => {
            let range = range.map(|r| (r[0], r[1]));
            cmd_attn_stats::<F>(ctx, &data, &checkpoint, &split, bins, range, &out)
        }
        Command::Data { cmd } => match cmd {
            DataCommand::Synth {
                out,
                series,
                history_len,
                horizon,
                extra_len,
            } => cmd_synth(ctx, &out, series, history_len, horizon, extra_len),
            DataCommand::Validate { data } => cmd_validate(ctx, &data),
            DataCommand::Stats { data } => cmd_stats(ctx, &data),
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if cli.deterministic {
        log::debug!("deterministic mode: single-threaded execution");
    }
    let result = Ctx::load(&cli).and_then(|ctx| match ctx.precision {
        Precision::F32 => dispatch::<f32>(&ctx, cli.cmd),
        Precision::F64 => dispatch::<f64>(&ctx, cli.cmd),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numeric => 4,
            })
        }
    }
}
