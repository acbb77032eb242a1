//! Command-line front end.
//!
//! Every subcommand accepts `--config <file>`, a flat `key = value` file whose
//! keys are flag names without the leading dashes. Values from the file are
//! applied first, so flags given on the command line win.

use std::collections::HashSet;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::model::{InitScheme, Model};
use crate::optimizer::PidGains;
use crate::sparse_tensor::{self, SparseTensor, TensorShape};
use crate::trainer::{self, DataSplits, OptimizerKind, TrainConfig, Variant, SUMMARY_HEADER};

#[derive(Debug, Parser)]
#[command(
    name = "lft",
    version,
    about = "Sparse tensor completion with PID-refined latent factorization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split a COO file into train/val/test files.
    #[command(args_override_self = true)]
    Split(SplitArgs),
    /// Train a model and write it together with the per-epoch report.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Print the RMSE of a model on a COO file.
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Predict values for a list of (i,j,k) queries.
    #[command(args_override_self = true)]
    Impute(ImputeArgs),
    /// Train several optimizer variants from a shared initialization.
    #[command(args_override_self = true)]
    Compare(CompareArgs),
    /// Generate a synthetic low-rank tensor.
    #[command(args_override_self = true)]
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// Flat `key = value` file with default flag values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// COO file to split.
    #[arg(long)]
    input: PathBuf,
    /// Directory receiving train.csv, val.csv and test.csv.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value = "2,2,6", value_parser = parse_ratios)]
    ratios: (f64, f64, f64),
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tensor shape as I,J,K (default: bounding box of the indices).
    #[arg(long, value_parser = parse_shape)]
    shape: Option<TensorShape>,
}

#[derive(Debug, Args)]
struct TrainFlags {
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// sgd, pid_linear or pid_nonlinear.
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    #[arg(long)]
    kp: Option<f64>,
    #[arg(long)]
    ki: Option<f64>,
    #[arg(long)]
    kd: Option<f64>,
    #[arg(long = "alpha-i")]
    alpha_i: Option<f64>,
    #[arg(long = "alpha-d")]
    alpha_d: Option<f64>,
    #[arg(long = "max-epochs")]
    max_epochs: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    /// Reshuffle training entries every epoch.
    #[arg(long)]
    shuffle: Option<bool>,
    /// Bound on each PID integral accumulator; `none` disables it.
    #[arg(long = "integral-clamp", value_parser = parse_clamp)]
    integral_clamp: Option<Option<f64>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Lower end of the uniform factor initialization.
    #[arg(long = "init-low")]
    init_low: Option<f64>,
    /// Upper end of the uniform factor initialization.
    #[arg(long = "init-high")]
    init_high: Option<f64>,
}

impl TrainFlags {
    fn config(&self) -> Result<TrainConfig> {
        let base = TrainConfig::default();
        let g = base.gains;
        let gains = PidGains::new(
            self.kp.unwrap_or(g.k_p),
            self.ki.unwrap_or(g.k_i),
            self.kd.unwrap_or(g.k_d),
            self.alpha_i.unwrap_or(g.alpha_i),
            self.alpha_d.unwrap_or(g.alpha_d),
        )?;
        let cfg = TrainConfig {
            eta: self.eta.unwrap_or(base.eta),
            lambda: self.lambda.unwrap_or(base.lambda),
            rank: self.rank.unwrap_or(base.rank),
            gains,
            max_epochs: self.max_epochs.unwrap_or(base.max_epochs),
            tol: self.tol.unwrap_or(base.tol),
            patience: self.patience.unwrap_or(base.patience),
            shuffle: self.shuffle.unwrap_or(base.shuffle),
            seed: self.seed,
            optimizer: self.optimizer.unwrap_or(base.optimizer),
            integral_clamp: self.integral_clamp.unwrap_or(base.integral_clamp),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn init(&self) -> Result<InitScheme> {
        let base = InitScheme::with_seed(self.seed);
        InitScheme::uniform(
            self.init_low.unwrap_or(base.low),
            self.init_high.unwrap_or(base.high),
            self.seed,
        )
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Training set (COO).
    #[arg(long)]
    input: PathBuf,
    /// Validation set (COO) monitored for termination.
    #[arg(long)]
    val: PathBuf,
    /// Where to write the trained model.
    #[arg(long)]
    output: PathBuf,
    /// Where to write the per-epoch table (default: stdout).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Model shape as I,J,K (default: bounding box of train and val).
    #[arg(long, value_parser = parse_shape)]
    shape: Option<TensorShape>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// COO file to score.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Debug, Args)]
struct ImputeArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    model: PathBuf,
    /// Query file: `i,j,k` per line (a fourth column is ignored).
    #[arg(long)]
    input: PathBuf,
    /// Output COO file (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Full COO file, or the training set when --val and --test are given.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, requires = "test")]
    val: Option<PathBuf>,
    #[arg(long, requires = "val")]
    test: Option<PathBuf>,
    /// Directory receiving one report per variant and summary.csv.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value = "2,2,6", value_parser = parse_ratios)]
    ratios: (f64, f64, f64),
    /// Comma-separated optimizer names.
    #[arg(
        long,
        default_value = "sgd,pid_linear,pid_nonlinear",
        value_delimiter = ','
    )]
    variants: Vec<OptimizerKind>,
    #[arg(long, value_parser = parse_shape)]
    shape: Option<TensorShape>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, value_parser = parse_shape)]
    shape: TensorShape,
    #[arg(long, default_value_t = 3)]
    rank: usize,
    #[arg(long, default_value_t = 0.5)]
    density: f64,
    #[arg(long = "noise-sd", default_value_t = 0.0)]
    noise_sd: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output COO file (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_triple<T: std::str::FromStr>(s: &str) -> std::result::Result<(T, T, T), String> {
    let parts: Vec<&str> = s.split([',', ':']).map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated values, got {s:?}"));
    }
    let p = |x: &str| x.parse::<T>().map_err(|_| format!("bad number {x:?}"));
    Ok((p(parts[0])?, p(parts[1])?, p(parts[2])?))
}

fn parse_ratios(s: &str) -> std::result::Result<(f64, f64, f64), String> {
    parse_triple(s)
}

fn parse_shape(s: &str) -> std::result::Result<TensorShape, String> {
    let (i, j, k) = parse_triple(s)?;
    TensorShape::new(i, j, k).map_err(|e| e.to_string())
}

fn parse_clamp(s: &str) -> std::result::Result<Option<f64>, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| format!("expected a number or `none`, got {s:?}"))
}

/// Runs the tool with the given arguments (program name first), writing
/// normal output to stdout and diagnostics to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = io::stdout();
    let stderr = io::stderr();
    run_with_io(args, &mut stdout.lock(), &mut stderr.lock())
}

/// Like [`run`] with explicit output streams. Returns the process exit code.
pub fn run_with_io<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(args) => args,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if !e.use_stderr() {
                let _ = write!(out, "{e}");
                return 0;
            }
            let rendered = e.to_string();
            let line = rendered.lines().next().unwrap_or("error: bad arguments");
            let _ = writeln!(err, "{line}");
            return 2;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

/// Splices the entries of a `--config` file in front of the flags given
/// after the subcommand name.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut config = None;
    let mut iter = args.iter().skip(1);
    while let Some(a) = iter.next() {
        let a = a.to_string_lossy();
        if a == "--config" {
            config = iter.next().cloned();
        } else if let Some(rest) = a.strip_prefix("--config=") {
            config = Some(OsString::from(rest));
        }
    }
    let Some(path) = config else {
        return Ok(args);
    };
    let path = PathBuf::from(path);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::from(e).context(path.display().to_string()))?;
    let extra = config_args(&text).map_err(|e| e.context(path.display().to_string()))?;
    let Some(sub) = args
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
    else {
        return Ok(args);
    };
    let at = sub + 2;
    let mut expanded = args[..at].to_vec();
    expanded.extend(extra);
    expanded.extend_from_slice(&args[at..]);
    Ok(expanded)
}

fn config_args(text: &str) -> Result<Vec<OsString>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |reason: &str| Error::Parse {
            line: idx + 1,
            reason: reason.to_string(),
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err("expected `key = value`"))?;
        let key = key.trim().trim_start_matches("--");
        let value = value.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(parse_err("bad key"));
        }
        if key == "config" {
            return Err(parse_err("config files cannot include other config files"));
        }
        if !seen.insert(key.to_string()) {
            return Err(parse_err(&format!("key `{key}` given twice")));
        }
        out.push(OsString::from(format!("--{key}")));
        out.push(OsString::from(value));
    }
    Ok(out)
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Split(a) => split(a),
        Command::Train(a) => train(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Impute(a) => impute(a, out),
        Command::Compare(a) => compare(a, out),
        Command::Synth(a) => synth(a, out),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::from(e).context(path.display().to_string()))
}

fn split(a: SplitArgs) -> Result<()> {
    let t = sparse_tensor::load_coo_path(&a.input, a.shape)?;
    let (train, val, test) = t.split(a.ratios, a.seed).map_err(|e| e.context("split"))?;
    fs::create_dir_all(&a.output)
        .map_err(|e| Error::from(e).context(a.output.display().to_string()))?;
    for (name, part) in [
        ("train.csv", &train),
        ("val.csv", &val),
        ("test.csv", &test),
    ] {
        let path = a.output.join(name);
        sparse_tensor::save(part, create(&path)?)?;
    }
    Ok(())
}

fn union_shape(parts: &[&SparseTensor]) -> TensorShape {
    let dim = |f: fn(&TensorShape) -> usize| parts.iter().map(|p| f(&p.shape())).max().unwrap_or(1);
    TensorShape {
        n_stations: dim(|s| s.n_stations),
        n_metrics: dim(|s| s.n_metrics),
        n_slots: dim(|s| s.n_slots),
    }
}

fn train(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = a.train.config()?;
    let init = a.train.init()?;
    let train_set = sparse_tensor::load_coo_path(&a.input, a.shape)?;
    let val_set = sparse_tensor::load_coo_path(&a.val, a.shape)?;
    let shape = a
        .shape
        .unwrap_or_else(|| union_shape(&[&train_set, &val_set]));
    let mut model = Model::init(shape, cfg.rank, &init)?;
    let report =
        trainer::train(&mut model, &train_set, &val_set, &cfg).map_err(|e| e.context("train"))?;
    model.save(create(&a.output)?)?;
    match &a.report {
        Some(path) => report.write_table(create(path)?)?,
        None => report.write_table(&mut *out)?,
    }
    Ok(())
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let model = Model::load_path(&a.model)?;
    let set = sparse_tensor::load_coo_path(&a.input, Some(model.shape()))?;
    let value = trainer::rmse(&model, &set)?;
    writeln!(out, "{value}")?;
    Ok(())
}

fn read_queries(path: &Path) -> Result<Vec<(usize, usize, usize)>> {
    let file = File::open(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    let mut queries = Vec::new();
    let mut first = true;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let header = std::mem::take(&mut first) && fields[0].parse::<f64>().is_err();
        if header {
            continue;
        }
        let bad = |reason: String| {
            Error::Parse {
                line: idx + 1,
                reason,
            }
            .context(path.display().to_string())
        };
        if fields.len() != 3 && fields.len() != 4 {
            return Err(bad(format!("expected 3 or 4 fields, got {}", fields.len())));
        }
        let index = |x: &str| {
            x.parse::<usize>()
                .map_err(|_| bad(format!("bad index {x:?}")))
        };
        queries.push((index(fields[0])?, index(fields[1])?, index(fields[2])?));
    }
    Ok(queries)
}

fn impute(a: ImputeArgs, out: &mut dyn Write) -> Result<()> {
    let model = Model::load_path(&a.model)?;
    let queries = read_queries(&a.input)?;
    let mut rows = Vec::with_capacity(queries.len());
    for (i, j, k) in queries {
        rows.push((
            i,
            j,
            k,
            model.predict(i, j, k).map_err(|e| e.context("impute"))?,
        ));
    }
    let write_rows = |sink: &mut dyn Write| -> Result<()> {
        writeln!(sink, "{}", sparse_tensor::COO_HEADER)?;
        for (i, j, k, v) in &rows {
            writeln!(sink, "{i},{j},{k},{v:.16e}")?;
        }
        sink.flush()?;
        Ok(())
    };
    match &a.output {
        Some(path) => write_rows(&mut create(path)?),
        None => write_rows(out),
    }
}

fn compare(a: CompareArgs, out: &mut dyn Write) -> Result<()> {
    let base = a.train.config()?;
    let init = a.train.init()?;
    let data = match (&a.val, &a.test) {
        (Some(val), Some(test)) => DataSplits::new(
            sparse_tensor::load_coo_path(&a.input, a.shape)?,
            sparse_tensor::load_coo_path(val, a.shape)?,
            sparse_tensor::load_coo_path(test, a.shape)?,
        ),
        _ => DataSplits::from_tensor(
            &sparse_tensor::load_coo_path(&a.input, a.shape)?,
            a.ratios,
            a.train.seed,
        )?,
    };
    let shape = a
        .shape
        .unwrap_or_else(|| union_shape(&[&data.train, &data.val, &data.test]));
    let data = DataSplits::new(
        data.train.reshaped(shape)?,
        data.val.reshaped(shape)?,
        data.test.reshaped(shape)?,
    );
    let mut seen = HashSet::new();
    let mut variants = Vec::new();
    for kind in &a.variants {
        if !seen.insert(*kind) {
            return Err(Error::invalid(format!("variant {kind} listed twice")));
        }
        variants.push(Variant::new(
            kind.name(),
            TrainConfig {
                optimizer: *kind,
                ..base
            },
        ));
    }
    let results = trainer::compare(&variants, &data, &init).map_err(|e| e.context("compare"))?;
    fs::create_dir_all(&a.output)
        .map_err(|e| Error::from(e).context(a.output.display().to_string()))?;
    let mut summary = create(&a.output.join("summary.csv"))?;
    writeln!(summary, "{SUMMARY_HEADER}")?;
    writeln!(out, "{SUMMARY_HEADER}")?;
    for r in &results {
        r.report
            .write_table(create(&a.output.join(format!("{}.csv", r.name)))?)?;
        writeln!(summary, "{}", r.summary_line())?;
        writeln!(out, "{}", r.summary_line())?;
    }
    summary.flush()?;
    Ok(())
}

fn synth(a: SynthArgs, out: &mut dyn Write) -> Result<()> {
    let t = sparse_tensor::synth_lowrank(a.shape, a.rank, a.density, a.noise_sd, a.seed)?;
    match &a.output {
        Some(path) => sparse_tensor::save(&t, create(path)?),
        None => sparse_tensor::save(&t, out),
    }
}
