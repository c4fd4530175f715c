//! Batch front end for the forecaster: synthesize data, train, evaluate,
//! forecast, verify gradients, and sweep ablation arms.
//!
//! Configuration is flat key=value text. Each command merges, in order, the
//! `--config` file, positional `KEY=VALUE` overrides, and named flags, so the
//! most specific source wins; unknown keys are rejected and the effective
//! configuration is echoed before any work starts.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or config error.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use periodnet::checkpoint::Checkpoint;
use periodnet::data::{
    load_csv, make_windows, merge_columns, normalize, split_chrono, synth_series, write_csv,
    SeriesFrame, SplitSpec, SynthComponent,
};
use periodnet::model::{Activation, GroupingKind, MixerKind, ModelConfig, PeriodNet};
use periodnet::train::{
    ablation_run, evaluate, history_csv, train, AblationArm, Dataset, Predictor, TrainConfig,
};
use periodnet::{finite_diff_check, Tensor};

/// A check that ran to completion and found the artifact wanting; mapped to
/// exit code 1, unlike config/data errors which exit 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Verification(String);

// ── Command line ─────────────────────────────────────────────────────

#[derive(Parser)]
#[command(name = "periodnet", version, about = "Period-attention time-series forecaster")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic sinusoid CSV.
    Synth(SynthArgs),
    /// Train a model; writes a checkpoint and a loss-history CSV.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one chronological split of a dataset.
    Eval(EvalArgs),
    /// Forecast one horizon past the end of an input CSV.
    Forecast(ForecastArgs),
    /// Verify analytic gradients against central differences.
    Gradcheck(GradcheckArgs),
    /// Train every ablation arm on one shared preprocessing of a corpus.
    Ablate(AblateArgs),
}

/// Flags shared by the commands that build a model from scratch. Named flags
/// are folded into the key=value stream last, so they win over both the
/// config file and positional overrides.
#[derive(Args)]
struct ModelFlags {
    /// Flat key=value config file (# comments and blank lines ignored).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed for initialization, shuffling, and synthetic draws.
    #[arg(long)]
    seed: Option<u64>,
    /// Token mixer: pam, spam, or full.
    #[arg(long)]
    mixer: Option<String>,
    /// Variable grouping: identity, joint (or 0), or a group count.
    #[arg(long)]
    groups: Option<String>,
    /// Comma-separated per-block period schedule (maps to `periods`).
    #[arg(long)]
    period: Option<String>,
    /// Forecast horizon T.
    #[arg(long)]
    horizon: Option<usize>,
    /// History window length L.
    #[arg(long)]
    input_len: Option<usize>,
    /// Extra KEY=VALUE overrides; later entries win.
    #[arg(value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ModelFlags {
    fn pairs(&self) -> Result<Vec<(String, String)>> {
        let mut pairs = base_pairs(self.config.as_deref(), &self.set)?;
        let mut flag = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k.to_string(), v));
            }
        };
        flag("seed", self.seed.map(|s| s.to_string()));
        flag("mixer", self.mixer.clone());
        flag("groups", self.groups.clone());
        flag("periods", self.period.clone());
        flag("horizon", self.horizon.map(|h| h.to_string()));
        flag("input_len", self.input_len.map(|l| l.to_string()));
        Ok(pairs)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Output CSV path.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Flat key=value config file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for the noise generator (channel j draws from seed + j).
    #[arg(long)]
    seed: Option<u64>,
    /// KEY=VALUE overrides: n, channels, components, trend, noise, seed.
    #[arg(value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset CSV.
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    /// Where to write the trained checkpoint.
    #[arg(long, value_name = "FILE", default_value = "model.ckpt")]
    checkpoint: PathBuf,
    /// Where to write the per-epoch loss history CSV.
    #[arg(long, value_name = "FILE", default_value = "history.csv")]
    out: PathBuf,
    #[command(flatten)]
    flags: ModelFlags,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to evaluate.
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,
    /// Dataset CSV; split chronologically with the training conventions.
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    /// Flat key=value config file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// KEY=VALUE overrides: segment, split, stride.
    #[arg(value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct ForecastArgs {
    /// Checkpoint holding the model and its normalization stats.
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,
    /// Input CSV; the last L rows feed the model.
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    /// Output forecast CSV.
    #[arg(long, value_name = "FILE", default_value = "forecast.csv")]
    out: PathBuf,
    /// Must equal the model's trained horizon; the architecture fixes T.
    #[arg(long)]
    horizon: Option<usize>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[command(flatten)]
    flags: ModelFlags,
    /// Inject a detached-duplicate gradient bug (negative control).
    #[arg(long, hide = true)]
    corrupt: bool,
}

#[derive(Args)]
struct AblateArgs {
    /// Corpus CSV; defaults to a built-in three-channel synthetic corpus.
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    /// Output results CSV (same dialect the loader reads back).
    #[arg(long, value_name = "FILE", default_value = "ablation.csv")]
    out: PathBuf,
    #[command(flatten)]
    flags: ModelFlags,
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(if err.is::<Verification>() { 1 } else { 2 });
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::Synth(args) => cmd_synth(args),
        Cmd::Train(args) => cmd_train(args),
        Cmd::Eval(args) => cmd_eval(args),
        Cmd::Forecast(args) => cmd_forecast(args),
        Cmd::Gradcheck(args) => cmd_gradcheck(args),
        Cmd::Ablate(args) => cmd_ablate(args),
    }
}

// ── Key=value plumbing ───────────────────────────────────────────────

fn read_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("config file {}", path.display()))?;
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            anyhow!("config file {} line {}: expected key=value, got {line:?}", path.display(), i + 1)
        })?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Config file first, then positional overrides.
fn base_pairs(config: Option<&Path>, set: &[String]) -> Result<Vec<(String, String)>> {
    let mut pairs = match config {
        Some(path) => read_config_file(path)?,
        None => Vec::new(),
    };
    for item in set {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| anyhow!("override {item:?}: expected KEY=VALUE"))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, want: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| anyhow!("key {key:?}: expected {want}: {value:?}"))
}

fn parse_split(value: &str) -> Result<SplitSpec> {
    let parts: Vec<&str> = value.split(':').collect();
    if parts.len() != 3 {
        bail!("key \"split\": expected train:val:test ratios, got {value:?}");
    }
    let r: Vec<u32> = parts
        .iter()
        .map(|p| parse_num("split", p, "an integer ratio"))
        .collect::<Result<_>>()?;
    Ok(SplitSpec::new(r[0], r[1], r[2])?)
}

fn parse_grouping(value: &str) -> Result<GroupingKind> {
    Ok(match value.trim() {
        "identity" => GroupingKind::Identity,
        "joint" | "0" => GroupingKind::Joint,
        other => GroupingKind::Groups(parse_num("groups", other, "identity, joint, or a count")?),
    })
}

fn parse_mixer(value: &str) -> Result<MixerKind> {
    Ok(match value.trim() {
        "pam" => MixerKind::Pam,
        "spam" => MixerKind::Spam,
        "full" => MixerKind::Full,
        other => bail!("mixer {other:?}: expected pam, spam, or full"),
    })
}

fn parse_predictor(value: &str) -> Result<Predictor> {
    Ok(match value.trim() {
        "pd" => Predictor::Pd,
        "fcn" => Predictor::Fcn,
        other => bail!("predictor {other:?}: expected pd or fcn"),
    })
}

/// Everything a training-style command needs, built from one key stream.
/// Model keys fall through to the model config, which rejects unknowns.
struct Settings {
    model: ModelConfig,
    train: TrainConfig,
    split: SplitSpec,
    stride: usize,
}

impl Settings {
    fn build(base: ModelConfig, pairs: &[(String, String)]) -> Result<Self> {
        let mut s = Settings {
            model: base,
            train: TrainConfig::default(),
            split: SplitSpec::default(),
            stride: 1,
        };
        for (k, v) in pairs {
            match k.as_str() {
                "lr" => s.train.lr = parse_num(k, v, "a learning rate")?,
                "batch" => s.train.batch = parse_num(k, v, "a batch size")?,
                "max_epochs" => s.train.max_epochs = parse_num(k, v, "an epoch count")?,
                "patience" => s.train.patience = parse_num(k, v, "an epoch count")?,
                "seed" => s.train.seed = parse_num(k, v, "a seed")?,
                "max_steps" => {
                    s.train.max_steps = match v.trim() {
                        "none" => None,
                        other => Some(parse_num(k, other, "none or a step count")?),
                    }
                }
                "split" => s.split = parse_split(v)?,
                "stride" => s.stride = parse_num(k, v, "a positive stride")?,
                _ => s.model.apply_kv(k, v)?,
            }
        }
        s.model.validate()?;
        s.train.validate()?;
        Ok(s)
    }

    fn echo(&self, with_data_keys: bool) {
        println!("effective config:");
        for (k, v) in self.model.to_kv() {
            println!("  {k}={v}");
        }
        let t = &self.train;
        println!("  lr={}", t.lr);
        println!("  batch={}", t.batch);
        println!("  max_epochs={}", t.max_epochs);
        println!("  patience={}", t.patience);
        println!("  seed={}", t.seed);
        match t.max_steps {
            Some(n) => println!("  max_steps={n}"),
            None => println!("  max_steps=none"),
        }
        if with_data_keys {
            println!("  split={}:{}:{}", self.split.train, self.split.val, self.split.test);
            println!("  stride={}", self.stride);
        }
    }
}

fn load_frame(path: &Path) -> Result<SeriesFrame> {
    load_csv(path).with_context(|| format!("dataset {}", path.display()))
}

fn load_ckpt(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("checkpoint {}", path.display()))
}

// ── synth ────────────────────────────────────────────────────────────

fn parse_components(value: &str) -> Result<Vec<SynthComponent>> {
    let mut out = Vec::new();
    for item in value.split(',') {
        let f: Vec<&str> = item.split(':').collect();
        if f.len() < 2 || f.len() > 3 {
            bail!("component {item:?}: expected period:amplitude[:phase]");
        }
        out.push(SynthComponent::new(
            parse_num("components", f[0], "a period")?,
            parse_num("components", f[1], "an amplitude")?,
            if f.len() == 3 { parse_num("components", f[2], "a phase")? } else { 0.0 },
        ));
    }
    Ok(out)
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let mut pairs = base_pairs(args.config.as_deref(), &args.set)?;
    if let Some(seed) = args.seed {
        pairs.push(("seed".into(), seed.to_string()));
    }
    let (mut n, mut channels, mut trend, mut noise, mut seed) = (960usize, 1usize, 0.0, 0.0, 0u64);
    let mut components = vec![SynthComponent::new(24.0, 1.0, 0.0)];
    for (k, v) in &pairs {
        match k.as_str() {
            "n" => n = parse_num(k, v, "a row count")?,
            "channels" => channels = parse_num(k, v, "a channel count")?,
            "components" => components = parse_components(v)?,
            "trend" => trend = parse_num(k, v, "a slope")?,
            "noise" => noise = parse_num(k, v, "a standard deviation")?,
            "seed" => seed = parse_num(k, v, "a seed")?,
            _ => bail!("unknown config key {k:?}"),
        }
    }
    if channels == 0 {
        bail!("key \"channels\": must be positive");
    }
    let comp_str: Vec<String> = components
        .iter()
        .map(|c| format!("{}:{}:{}", c.period, c.amplitude, c.phase))
        .collect();
    println!("effective config:");
    println!("  n={n}");
    println!("  channels={channels}");
    println!("  components={}", comp_str.join(","));
    println!("  trend={trend}");
    println!("  noise={noise}");
    println!("  seed={seed}");

    let frame = if channels == 1 {
        synth_series(n, &components, trend, noise, seed)?
    } else {
        let columns: Vec<SeriesFrame> = (0..channels)
            .map(|j| {
                let mut f = synth_series(n, &components, trend, noise, seed + j as u64)?;
                f.names = vec![format!("v{j}")];
                Ok(f)
            })
            .collect::<Result<_>>()?;
        merge_columns(&columns)?
    };
    write_csv(&frame, &args.out)?;
    println!("wrote {} rows x {} variables to {}", frame.len(), frame.width(), args.out.display());
    Ok(())
}

// ── train ────────────────────────────────────────────────────────────

fn cmd_train(args: TrainArgs) -> Result<()> {
    let frame = load_frame(&args.data)?;
    let s = Settings::build(ModelConfig::new(frame.width(), 96, 48), &args.flags.pairs()?)?;
    s.echo(true);
    let data = Dataset::prepare(&frame, s.split, s.model.l, s.model.horizon, s.stride)?;
    println!(
        "prepared {} train / {} val / {} test windows (prep hash {:08x})",
        data.train.len(),
        data.val.len(),
        data.test.len(),
        data.prep_hash()
    );
    let model = PeriodNet::init(s.model.clone(), &mut ChaCha8Rng::seed_from_u64(s.train.seed))?;
    let (ckpt, history) = train(&model, &data, &s.train)?;
    ckpt.save(&args.checkpoint)
        .with_context(|| format!("checkpoint {}", args.checkpoint.display()))?;
    std::fs::write(&args.out, history_csv(&history))
        .with_context(|| format!("history {}", args.out.display()))?;
    println!(
        "wrote checkpoint to {} and history ({} epochs) to {}",
        args.checkpoint.display(),
        history.len(),
        args.out.display()
    );
    let (mse, mae) = evaluate(&ckpt, &data.val)?;
    println!("summary: val mse={mse} mae={mae}");
    Ok(())
}

// ── eval ─────────────────────────────────────────────────────────────

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let ckpt = load_ckpt(&args.checkpoint)?;
    let frame = load_frame(&args.data)?;
    let (mut segment, mut split, mut stride) = ("test".to_string(), SplitSpec::default(), 1usize);
    for (k, v) in &base_pairs(args.config.as_deref(), &args.set)? {
        match k.as_str() {
            "segment" => match v.trim() {
                seg @ ("train" | "val" | "test") => segment = seg.to_string(),
                other => bail!("key \"segment\": expected train, val, or test, got {other:?}"),
            },
            "split" => split = parse_split(v)?,
            "stride" => stride = parse_num(k, v, "a positive stride")?,
            _ => bail!("unknown config key {k:?}"),
        }
    }
    println!("effective config:");
    for (k, v) in ckpt.config.to_kv() {
        println!("  {k}={v}");
    }
    println!("  segment={segment}");
    println!("  split={}:{}:{}", split.train, split.val, split.test);
    println!("  stride={stride}");

    let (tr, va, te) = split_chrono(&frame, split)?;
    let seg = match segment.as_str() {
        "train" => tr,
        "val" => va,
        _ => te,
    };
    let z = normalize(&seg, &ckpt.stats)?;
    let windows = make_windows(&z, ckpt.config.l, ckpt.config.horizon, stride)?;
    let (mse, mae) = evaluate(&ckpt, &windows)?;
    println!("eval {segment}: {} windows, mse={mse} mae={mae}", windows.len());
    Ok(())
}

// ── forecast ─────────────────────────────────────────────────────────

fn cmd_forecast(args: ForecastArgs) -> Result<()> {
    let ckpt = load_ckpt(&args.checkpoint)?;
    let cfg = &ckpt.config;
    if let Some(h) = args.horizon {
        if h != cfg.horizon {
            bail!(
                "horizon {h} requested, but the model's horizon is fixed at {} by its prediction head",
                cfg.horizon
            );
        }
    }
    let frame = load_frame(&args.data)?;
    println!("effective config:");
    for (k, v) in cfg.to_kv() {
        println!("  {k}={v}");
    }
    if frame.len() < cfg.l {
        bail!("input {} has {} rows; the model window needs {}", args.data.display(), frame.len(), cfg.l);
    }
    let tail = frame.slice_rows(frame.len() - cfg.l, cfg.l)?;
    let z = normalize(&tail, &ckpt.stats)?;
    let pred = ckpt.restore()?.forward(&z.values)?;
    let out = ckpt.stats.invert(&pred)?;
    // Input timestamps are opaque strings, so forecast rows get relative
    // stamps; fixed width keeps them strictly increasing for the loader.
    let stamps = (1..=cfg.horizon).map(|k| format!("t+{k:04}")).collect();
    let fc = SeriesFrame::new(stamps, out, ckpt.stats.names.clone())?;
    write_csv(&fc, &args.out)?;
    println!("wrote {} x {} forecast to {}", cfg.horizon, cfg.c, args.out.display());
    Ok(())
}

// ── gradcheck ────────────────────────────────────────────────────────

/// Small enough that central differences over every element stay fast.
fn tiny_config() -> ModelConfig {
    let mut cfg = ModelConfig::new(2, 12, 6);
    cfg.d = 4;
    cfg.heads = 2;
    cfg.p_list = vec![3, 3];
    cfg.r = 2;
    cfg.grouping = GroupingKind::Groups(2);
    cfg.ffn_width = 8;
    // GELU keeps central differences off ReLU's kink.
    cfg.activation = Activation::Gelu;
    cfg
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<()> {
    const H: f64 = 1e-5;
    const TOL: f64 = 1e-4;
    let s = Settings::build(tiny_config(), &args.flags.pairs()?)?;
    println!("effective config:");
    for (k, v) in s.model.to_kv() {
        println!("  {k}={v}");
    }
    println!("  seed={}", s.train.seed);
    println!("  h={H}");
    println!("  tol={TOL}");

    let seed = s.train.seed;
    let model = PeriodNet::init(s.model.clone(), &mut ChaCha8Rng::seed_from_u64(seed))?;
    // Redraw at std 0.2: under the 0.02 init some layer norms sit on
    // near-zero-variance rows where the f''' ~ 1/sigma^3 truncation term of
    // central differences swamps the tolerance at h = 1e-5.
    let mut redraw = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    for (_, t) in model.named_parameters() {
        let fresh = Tensor::randn_param(&t.shape(), 0.2, &mut redraw)?;
        t.set_data(&fresh.data())?;
    }
    let x = Tensor::randn_param(
        &[s.model.l, s.model.c],
        1.0,
        &mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(2)),
    )?;
    let target = Tensor::randn_param(
        &[s.model.horizon, s.model.c],
        1.0,
        &mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(3)),
    )?;
    let params = model.named_parameters();
    let first = params[0].1.clone();
    let report = finite_diff_check(
        || {
            let err = model.forward(&x)?.sub(&target)?;
            let loss = err.mul(&err)?.mean()?;
            if !args.corrupt {
                return Ok(loss);
            }
            // The frozen factor is rebuilt from live data on every call, so
            // the numeric derivative sees both factors move while the graph
            // differentiates only one — the classic detached-duplicate bug.
            let frozen = Tensor::from_vec(first.data(), &first.shape())?;
            loss.add(&first.mul(&frozen)?.sum()?.scale(0.05)?)
        },
        &params,
        H,
        TOL,
    )?;
    for e in &report.entries {
        println!(
            "  {}[{}]: analytic {:+.6e}, numeric {:+.6e}, rel err {:.2e}",
            e.name, e.index, e.analytic, e.numeric, e.rel_err
        );
    }
    if !report.passed() {
        let w = report.worst().expect("non-empty report");
        return Err(Verification(format!(
            "gradient check failed: worst parameter {} (rel err {:.2e} at index {}, tol {TOL})",
            w.name, w.rel_err, w.index
        ))
        .into());
    }
    println!(
        "gradient check: PASS — {} parameters, max rel err {:.2e}",
        report.entries.len(),
        report.max_rel_err()
    );
    Ok(())
}

// ── ablate ───────────────────────────────────────────────────────────

/// Three noisy sinusoid channels with distinct periods; small enough to
/// sweep every arm in seconds.
fn builtin_corpus() -> Result<SeriesFrame> {
    let mut columns = Vec::new();
    for (i, period) in [6.0, 8.0, 12.0].into_iter().enumerate() {
        let mut f = synth_series(
            240,
            &[SynthComponent::new(period, 1.0, 0.3 * i as f64)],
            0.0,
            0.05,
            40 + i as u64,
        )?;
        f.names = vec![format!("v{i}")];
        columns.push(f);
    }
    Ok(merge_columns(&columns)?)
}

fn parse_list<T>(value: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    value.split(',').map(|item| f(item.trim())).collect()
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let frame = match &args.data {
        Some(path) => load_frame(path)?,
        None => builtin_corpus()?,
    };
    // Sweep keys are peeled off first; the rest configure the shared base.
    let mut groups = vec![
        GroupingKind::Joint,
        GroupingKind::Groups(1),
        GroupingKind::Groups(2),
        GroupingKind::Groups(4),
        GroupingKind::Groups(8),
    ];
    let mut mixers = vec![MixerKind::Pam, MixerKind::Spam];
    let mut predictors = vec![Predictor::Pd, Predictor::Fcn];
    let mut rest = Vec::new();
    for (k, v) in args.flags.pairs()? {
        match k.as_str() {
            "sweep_groups" => groups = parse_list(&v, parse_grouping)?,
            "sweep_mixers" => mixers = parse_list(&v, parse_mixer)?,
            "sweep_predictors" => predictors = parse_list(&v, parse_predictor)?,
            _ => rest.push((k, v)),
        }
    }
    let s = Settings::build(ModelConfig::new(frame.width(), 24, 8), &rest)?;
    if s.split != SplitSpec::default() || s.stride != 1 {
        bail!("the ablation harness fixes split=6:2:2 and stride=1 so every arm shares one preprocessing");
    }

    //  Union of three one-factor sweeps around the base config, deduplicated.
    let mut arms: Vec<AblationArm> = Vec::new();
    let base_arm = |mixer, predictor, grouping| AblationArm { mixer, predictor, grouping };
    for &g in &groups {
        arms.push(base_arm(s.model.mixer, Predictor::Pd, g));
    }
    for &m in &mixers {
        arms.push(base_arm(m, Predictor::Pd, s.model.grouping));
    }
    for &p in &predictors {
        arms.push(base_arm(s.model.mixer, p, s.model.grouping));
    }
    let mut seen = Vec::new();
    arms.retain(|a| {
        if seen.contains(a) {
            false
        } else {
            seen.push(*a);
            true
        }
    });

    s.echo(false);
    let labels: Vec<String> = arms.iter().map(AblationArm::label).collect();
    println!("  arms={}", labels.join(","));

    let report = ablation_run(&frame, &s.model, &s.train, &arms)?;
    std::fs::write(&args.out, report.to_csv())
        .with_context(|| format!("results {}", args.out.display()))?;
    print!("{}", report.render());
    println!("wrote {} arms to {}", report.rows.len(), args.out.display());
    Ok(())
}
