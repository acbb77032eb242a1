//! Epoch-level training, evaluation and benchmarking of optimizer variants.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{InitScheme, Model};
use crate::optimizer::{self, PidGains, PidState, DEFAULT_INTEGRAL_CLAMP};
use crate::rng::{self, SplitMix64};
use crate::sparse_tensor::{SparseTensor, TensorShape};

/// Which update rule drives training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    /// Plain SGD on the instant error.
    Sgd,
    /// PID-refined error with both nonlinearity exponents forced to 1.
    PidLinear,
    /// PID-refined error with the configured exponents.
    PidNonlinear,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 3] = [
        OptimizerKind::Sgd,
        OptimizerKind::PidLinear,
        OptimizerKind::PidNonlinear,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::PidLinear => "pid_linear",
            OptimizerKind::PidNonlinear => "pid_nonlinear",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OptimizerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown optimizer `{s}` (expected sgd, pid_linear or pid_nonlinear)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub eta: f64,
    pub lambda: f64,
    pub rank: usize,
    pub gains: PidGains,
    pub max_epochs: usize,
    /// Convergence threshold on the change in validation RMSE.
    pub tol: f64,
    /// Consecutive sub-`tol` changes required to stop.
    pub patience: usize,
    pub shuffle: bool,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Bound on PID integral accumulators; `None` disables clamping.
    pub integral_clamp: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: 0.01,
            lambda: 0.01,
            rank: 10,
            gains: PidGains::new(1.0, 0.01, 0.1, 0.5, 0.5).expect("valid default gains"),
            max_epochs: 500,
            tol: 1e-5,
            patience: 5,
            shuffle: true,
            seed: 0,
            optimizer: OptimizerKind::PidNonlinear,
            integral_clamp: Some(DEFAULT_INTEGRAL_CLAMP),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::invalid(format!("eta must be > 0, got {}", self.eta)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.rank == 0 {
            return Err(Error::invalid("rank must be >= 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("max_epochs must be >= 1"));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::invalid(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be >= 1"));
        }
        if let Some(c) = self.integral_clamp {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::invalid(format!(
                    "integral clamp must be > 0, got {c}"
                )));
            }
        }
        self.gains.validate()
    }

    /// Gains actually applied by the configured optimizer.
    pub fn effective_gains(&self) -> Option<PidGains> {
        match self.optimizer {
            OptimizerKind::Sgd => None,
            OptimizerKind::PidLinear => Some(PidGains {
                alpha_i: 1.0,
                alpha_d: 1.0,
                ..self.gains
            }),
            OptimizerKind::PidNonlinear => Some(self.gains),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_rmse: f64,
    pub val_rmse: f64,
    /// Cumulative time spent in update steps.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub converged: bool,
    pub curve: Vec<EpochStats>,
    pub final_val_rmse: f64,
}

impl TrainReport {
    pub fn total_seconds(&self) -> f64 {
        self.curve.last().map_or(0.0, |p| p.seconds)
    }

    pub fn best_val_rmse(&self) -> f64 {
        self.curve
            .iter()
            .map(|p| p.val_rmse)
            .fold(f64::INFINITY, f64::min)
    }

    /// First epoch whose validation RMSE is at or below `threshold`.
    pub fn epochs_to_reach(&self, threshold: f64) -> Option<usize> {
        self.curve
            .iter()
            .find(|p| p.val_rmse <= threshold)
            .map(|p| p.epoch)
    }

    /// Writes `epoch,train_rmse,val_rmse,seconds` rows under a header.
    pub fn write_table<W: Write>(&self, mut sink: W) -> Result<()> {
        writeln!(sink, "epoch,train_rmse,val_rmse,seconds")?;
        for p in &self.curve {
            writeln!(
                sink,
                "{},{},{},{:.6}",
                p.epoch, p.train_rmse, p.val_rmse, p.seconds
            )?;
        }
        sink.flush()?;
        Ok(())
    }
}

/// Root mean squared residual of `model` over `set`.
pub fn rmse(model: &Model, set: &SparseTensor) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::NoEntries);
    }
    let shape = model.shape();
    let mut sum = 0.0;
    for e in set.entries() {
        shape.check(e.i, e.j, e.k)?;
        let r = e.value - model.predict_unchecked(e.i, e.j, e.k);
        sum += r * r;
    }
    Ok((sum / set.len() as f64).sqrt())
}

fn check_fits(shape: TensorShape, set: &SparseTensor, what: &str) -> Result<()> {
    for e in set.entries() {
        shape
            .check(e.i, e.j, e.k)
            .map_err(|err| Error::ShapeMismatch(format!("{what} set: {err}")))?;
    }
    Ok(())
}

/// Trains `model` in place.
///
/// Each epoch optionally reshuffles the visiting order (a Fisher–Yates pass
/// over the previous order, driven by one [`SplitMix64`] stream seeded with
/// `cfg.seed`), applies one update per training entry, then evaluates RMSE
/// on both sets. Training stops after `max_epochs`, or once the validation
/// RMSE has moved by less than `tol` for `patience` consecutive epochs
/// (`converged = true`).
pub fn train(
    model: &mut Model,
    train_set: &SparseTensor,
    val_set: &SparseTensor,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if model.rank() != cfg.rank {
        return Err(Error::ShapeMismatch(format!(
            "model rank {} differs from configured rank {}",
            model.rank(),
            cfg.rank
        )));
    }
    check_fits(model.shape(), train_set, "training")?;
    check_fits(model.shape(), val_set, "validation")?;

    let entries = train_set.entries();
    let gains = cfg.effective_gains();
    let mut state = PidState::new(entries.len()).with_integral_clamp(cfg.integral_clamp)?;
    let mut order: Vec<usize> = (0..entries.len()).collect();
    let mut rng = SplitMix64::new(cfg.seed);

    let mut curve = Vec::with_capacity(cfg.max_epochs.min(1024));
    let mut elapsed = Duration::ZERO;
    let mut streak = 0;
    let mut converged = false;
    let mut prev_val: Option<f64> = None;

    for epoch in 1..=cfg.max_epochs {
        if cfg.shuffle {
            rng::shuffle(&mut order, &mut rng);
        }
        let started = Instant::now();
        for &slot in &order {
            let e = &entries[slot];
            match &gains {
                None => optimizer::sgd_step(model, e, cfg.eta, cfg.lambda)?,
                Some(g) => {
                    optimizer::pid_sgd_step(model, &mut state, slot, e, cfg.eta, cfg.lambda, g)?
                }
            }
        }
        elapsed += started.elapsed();

        let val_rmse = rmse(model, val_set)?;
        curve.push(EpochStats {
            epoch,
            train_rmse: rmse(model, train_set)?,
            val_rmse,
            seconds: elapsed.as_secs_f64(),
        });

        if let Some(prev) = prev_val {
            if (val_rmse - prev).abs() < cfg.tol {
                streak += 1;
            } else {
                streak = 0;
            }
        }
        prev_val = Some(val_rmse);
        if streak >= cfg.patience {
            converged = true;
            break;
        }
    }

    Ok(TrainReport {
        epochs_run: curve.len(),
        converged,
        final_val_rmse: curve.last().map_or(f64::NAN, |p| p.val_rmse),
        curve,
    })
}

/// Training, validation and test partitions sharing one index space.
#[derive(Debug, Clone)]
pub struct DataSplits {
    pub train: SparseTensor,
    pub val: SparseTensor,
    pub test: SparseTensor,
}

impl DataSplits {
    pub fn new(train: SparseTensor, val: SparseTensor, test: SparseTensor) -> Self {
        Self { train, val, test }
    }

    pub fn from_tensor(t: &SparseTensor, ratios: (f64, f64, f64), seed: u64) -> Result<Self> {
        let (train, val, test) = t.split(ratios, seed)?;
        Ok(Self { train, val, test })
    }

    /// Smallest shape covering all three sets.
    pub fn shape(&self) -> TensorShape {
        let (a, b, c) = (self.train.shape(), self.val.shape(), self.test.shape());
        TensorShape {
            n_stations: a.n_stations.max(b.n_stations).max(c.n_stations),
            n_metrics: a.n_metrics.max(b.n_metrics).max(c.n_metrics),
            n_slots: a.n_slots.max(b.n_slots).max(c.n_slots),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    pub config: TrainConfig,
}

impl Variant {
    pub fn new(name: impl Into<String>, config: TrainConfig) -> Self {
        Self {
            name: name.into(),
            config,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub name: String,
    pub config: TrainConfig,
    pub report: TrainReport,
    pub test_rmse: f64,
}

impl Comparison {
    /// `name,final_val_rmse,test_rmse,epochs,seconds`
    pub fn summary_line(&self) -> String {
        format!(
            "{},{},{},{},{:.6}",
            self.name,
            self.report.final_val_rmse,
            self.test_rmse,
            self.report.epochs_run,
            self.report.total_seconds()
        )
    }
}

pub const SUMMARY_HEADER: &str = "name,final_val_rmse,test_rmse,epochs,seconds";

/// Trains every variant from the same initial model on the same data.
/// Runs execute in parallel; results keep the order of `variants`.
pub fn compare(
    variants: &[Variant],
    data: &DataSplits,
    shared_init: &InitScheme,
) -> Result<Vec<Comparison>> {
    let first = variants
        .first()
        .ok_or_else(|| Error::invalid("compare needs at least one variant"))?;
    if let Some(v) = variants.iter().find(|v| v.config.rank != first.config.rank) {
        return Err(Error::invalid(format!(
            "variant `{}` has rank {} but `{}` has rank {}",
            v.name, v.config.rank, first.name, first.config.rank
        )));
    }
    let start = Model::init(data.shape(), first.config.rank, shared_init)?;
    variants
        .par_iter()
        .map(|v| {
            let mut model = start.clone();
            let report = train(&mut model, &data.train, &data.val, &v.config)
                .map_err(|e| e.context(format!("variant `{}`", v.name)))?;
            Ok(Comparison {
                name: v.name.clone(),
                config: v.config,
                report,
                test_rmse: rmse(&model, &data.test)?,
            })
        })
        .collect()
}

/// Candidate values for [`grid_search`]; the product is enumerated with
/// `etas` outermost and `gains` innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub etas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub gains: Vec<PidGains>,
}

impl Grid {
    pub fn configs(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::with_capacity(self.etas.len() * self.lambdas.len() * self.gains.len());
        for &eta in &self.etas {
            for &lambda in &self.lambdas {
                for &gains in &self.gains {
                    out.push(TrainConfig {
                        eta,
                        lambda,
                        gains,
                        ..*base
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCandidate {
    pub config: TrainConfig,
    /// Final validation RMSE, `+inf` for diverged runs.
    pub score: f64,
    pub epochs_run: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub best: TrainConfig,
    pub best_index: usize,
    pub candidates: Vec<GridCandidate>,
}

/// Trains every grid combination from the same initial model and returns
/// the one with the lowest final validation RMSE. Ties go to fewer epochs,
/// then to the earlier grid position. A diverged run scores `+inf`.
pub fn grid_search(
    grid: &Grid,
    base: &TrainConfig,
    data: &DataSplits,
    init: &InitScheme,
) -> Result<GridOutcome> {
    let configs = grid.configs(base);
    if configs.is_empty() {
        return Err(Error::invalid(
            "grid search needs at least one candidate per axis",
        ));
    }
    let start = Model::init(data.shape(), base.rank, init)?;
    let candidates: Vec<GridCandidate> = configs
        .par_iter()
        .map(|cfg| {
            let mut model = start.clone();
            match train(&mut model, &data.train, &data.val, cfg) {
                Ok(report) => {
                    let score = if report.final_val_rmse.is_finite() {
                        report.final_val_rmse
                    } else {
                        f64::INFINITY
                    };
                    Ok(GridCandidate {
                        config: *cfg,
                        score,
                        epochs_run: report.epochs_run,
                        converged: report.converged,
                    })
                }
                Err(e) if e.is_divergence() => Ok(GridCandidate {
                    config: *cfg,
                    score: f64::INFINITY,
                    epochs_run: usize::MAX,
                    converged: false,
                }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let best_index = (0..candidates.len())
        .min_by(|&x, &y| {
            let (a, b) = (&candidates[x], &candidates[y]);
            a.score
                .total_cmp(&b.score)
                .then(a.epochs_run.cmp(&b.epochs_run))
                .then(x.cmp(&y))
        })
        .expect("non-empty grid");
    Ok(GridOutcome {
        best: candidates[best_index].config,
        best_index,
        candidates,
    })
}
