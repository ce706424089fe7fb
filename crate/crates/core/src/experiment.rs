//! Multi-trial training experiments, aggregation, grid search and CSV
//! output.

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    load_idx_images, load_returns_csv, sequential_split, window_series, SplitIndices, Standardizer, VarProcess,
};
use crate::error::{Error, Result};
use crate::nn::{Model, ModelSpec};
use crate::optim::{OptimConfig, Optimizer};
use crate::regularization::RegConfig;
use crate::stats;
use crate::tensor::Tensor;
use crate::train::{batch_gradient, mean_mse};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSourceKind {
    Synth,
    Csv,
    Idx,
}

/// Parameters of the synthetic VAR(1) generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub d: usize,
    pub t: usize,
    pub spectral_radius: f64,
    pub noise_sd: f64,
    /// Fixes the generated series across trials; drawn from each trial's
    /// generator when absent.
    pub seed: Option<u64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            d: 7,
            t: 2000,
            spectral_radius: 0.6,
            noise_sd: 1.0,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSourceKind,
    /// CSV or IDX file, relative to the working directory.
    pub path: Option<PathBuf>,
    pub synth: SynthConfig,
    pub window: usize,
    /// Per-column standardization of series data, fitted on the training
    /// rows.
    pub standardize: bool,
    /// Reshuffle training batches every epoch.
    pub shuffle: bool,
    /// Use only the first `limit` series rows or images.
    pub limit: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSourceKind::Synth,
            path: None,
            synth: SynthConfig::default(),
            window: 10,
            standardize: true,
            shuffle: false,
            limit: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub optim: OptimConfig,
    #[serde(default)]
    pub reg: RegConfig,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Require at least two trials so standard errors exist.
    #[serde(default = "default_true")]
    pub error_bars: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_epochs() -> usize {
    30
}

fn default_batch() -> usize {
    50
}

fn default_trials() -> usize {
    5
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn new(model: ModelSpec) -> Self {
        Self {
            model,
            data: DataConfig::default(),
            optim: OptimConfig::default(),
            reg: RegConfig::default(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            n_trials: default_trials(),
            seed: 0,
            error_bars: true,
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.optim.validate()?;
        self.reg.validate()?;
        if self.n_trials == 0 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        if self.error_bars && self.n_trials < 2 {
            return Err(Error::Config("standard errors need n_trials >= 2 (or set error_bars to false)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        let d = &self.data;
        match (d.source, &self.model) {
            (DataSourceKind::Synth, ModelSpec::StackedLstm { layer_sizes, .. }) => {
                if layer_sizes[0] != d.synth.d {
                    return Err(Error::Config(format!(
                        "model input size {} does not match data.synth.d = {}",
                        layer_sizes[0], d.synth.d
                    )));
                }
                if !(d.synth.spectral_radius > 0.0 && d.synth.spectral_radius < 1.0) {
                    return Err(Error::Config("data.synth.spectral_radius must lie in (0, 1)".into()));
                }
            }
            (DataSourceKind::Csv, ModelSpec::StackedLstm { .. }) | (DataSourceKind::Idx, ModelSpec::ConvAutoencoder { .. }) => {
                match &d.path {
                    Some(p) if p.is_file() => {}
                    Some(p) => return Err(Error::Config(format!("data file {} does not exist", p.display()))),
                    None => return Err(Error::Config("data.path is required for file sources".into())),
                }
            }
            (src, _) => {
                return Err(Error::Config(format!(
                    "data source {src:?} cannot feed a {} model",
                    match self.model {
                        ModelSpec::StackedLstm { .. } => "stacked LSTM",
                        ModelSpec::ConvAutoencoder { .. } => "convolutional autoencoder",
                    }
                )))
            }
        }
        if d.window == 0 {
            return Err(Error::Config("data.window must be positive".into()));
        }
        Ok(())
    }
}

/// Examples of one trial with their chronological split.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub inputs: Vec<Tensor>,
    pub targets: Vec<Tensor>,
    pub split: SplitIndices,
}

impl Dataset {
    fn refs(&self, r: Range<usize>) -> (Vec<&Tensor>, Vec<&Tensor>) {
        (self.inputs[r.clone()].iter().collect(), self.targets[r].iter().collect())
    }
}

/// Builds the dataset for one trial, drawing any randomness from `rng`.
pub fn build_dataset(config: &ExperimentConfig, rng: &mut impl Rng) -> Result<Dataset> {
    let d = &config.data;
    match d.source {
        DataSourceKind::Synth | DataSourceKind::Csv => {
            let mut series = if d.source == DataSourceKind::Synth {
                let s = &d.synth;
                match s.seed {
                    Some(seed) => {
                        let mut own = ChaCha8Rng::seed_from_u64(seed);
                        VarProcess::random(s.d, s.spectral_radius, s.noise_sd, &mut own)?.simulate(s.t, &mut own)?
                    }
                    None => VarProcess::random(s.d, s.spectral_radius, s.noise_sd, rng)?.simulate(s.t, rng)?,
                }
            } else {
                load_returns_csv(d.path.as_ref().unwrap())?
            };
            if let Some(limit) = d.limit {
                let cols = series.shape()[1];
                let rows = limit.min(series.shape()[0]);
                series = Tensor::new(vec![rows, cols], series.data()[..rows * cols].to_vec())?;
            }
            let t = series.shape()[0];
            if t <= d.window {
                return Err(Error::InsufficientData(format!("series of length {t} is too short for window {}", d.window)));
            }
            let split = sequential_split(t - d.window)?;
            if d.standardize {
                let st = Standardizer::fit(&series, 0..split.train.end + d.window)?;
                series = st.apply(&series)?;
            }
            let w = window_series(&series, d.window)?;
            Ok(Dataset {
                inputs: w.inputs,
                targets: w.targets,
                split,
            })
        }
        DataSourceKind::Idx => {
            let images = load_idx_images(d.path.as_ref().unwrap())?;
            let (n, h, w) = (images.shape()[0], images.shape()[2], images.shape()[3]);
            let n = d.limit.map_or(n, |l| l.min(n));
            if config.model.input_width() != h * w {
                return Err(Error::Config(format!(
                    "images are {h}x{w} but the model expects {} values",
                    config.model.input_width()
                )));
            }
            let inputs: Vec<Tensor> = (0..n)
                .map(|i| Tensor::new(vec![1, h, w], images.slab(i).to_vec()))
                .collect::<Result<_>>()?;
            Ok(Dataset {
                targets: inputs.clone(),
                inputs,
                split: sequential_split(n)?,
            })
        }
    }
}

/// Per-epoch losses of one seed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialResult {
    pub seed: u64,
    pub initial_train_mse: f64,
    pub initial_val_mse: f64,
    pub train_mse: Vec<f64>,
    pub val_mse: Vec<f64>,
    pub test_mse: f64,
    /// Activation parameters after training, in model order.
    pub activation_params: Vec<f64>,
    pub wall_time_secs: f64,
}

impl TrialResult {
    /// Lowest validation MSE seen, including the initial model when no
    /// epoch ran.
    pub fn min_val_mse(&self) -> f64 {
        self.val_mse.iter().copied().fold(
            if self.val_mse.is_empty() { self.initial_val_mse } else { f64::INFINITY },
            f64::min,
        )
    }
}

/// Trains one model from scratch. Every random draw (data, initialization,
/// shuffling) comes from a generator seeded with `seed`.
pub fn run_trial(config: &ExperimentConfig, seed: u64) -> Result<TrialResult> {
    let start = Instant::now();
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = build_dataset(config, &mut rng)?;
    let mut model = Model::init(&config.model, &mut rng)?;
    let mut opt = Optimizer::new(config.optim.clone(), &model)?;

    let (train_x, train_y) = data.refs(data.split.train.clone());
    let (val_x, val_y) = data.refs(data.split.val.clone());
    let (test_x, test_y) = data.refs(data.split.test.clone());
    if train_x.is_empty() || val_x.is_empty() || test_x.is_empty() {
        return Err(Error::InsufficientData("every split needs at least one example".into()));
    }

    let initial_train_mse = mean_mse(&model, &train_x, &train_y)?;
    let initial_val_mse = mean_mse(&model, &val_x, &val_y)?;
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut train_mse = Vec::with_capacity(config.epochs);
    let mut val_mse = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        if config.data.shuffle {
            order.shuffle(&mut rng);
        }
        for batch in order.chunks(config.batch_size) {
            let bx: Vec<&Tensor> = batch.iter().map(|&i| train_x[i]).collect();
            let by: Vec<&Tensor> = batch.iter().map(|&i| train_y[i]).collect();
            let (_, grads) = batch_gradient(&model, &bx, &by, &config.reg)?;
            opt.step(&mut model, &grads)?;
        }
        train_mse.push(mean_mse(&model, &train_x, &train_y)?);
        val_mse.push(mean_mse(&model, &val_x, &val_y)?);
    }
    let test_mse = mean_mse(&model, &test_x, &test_y)?;
    use crate::nn::{ParamRole, Parameterized};
    Ok(TrialResult {
        seed,
        initial_train_mse,
        initial_val_mse,
        train_mse,
        val_mse,
        test_mse,
        activation_params: model.gather(ParamRole::ACTIVATION),
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub split: &'static str,
    pub mean_mse: f64,
    pub stderr_mse: f64,
    pub n_trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub trials: Vec<TrialResult>,
    pub curves: Vec<CurvePoint>,
}

impl ExperimentResult {
    pub fn min_val_mse(&self) -> Vec<f64> {
        self.trials.iter().map(TrialResult::min_val_mse).collect()
    }

    pub fn test_mse(&self) -> Vec<f64> {
        self.trials.iter().map(|t| t.test_mse).collect()
    }
}

/// Epoch-wise mean and standard error across trials. Trials are sorted by
/// seed first, so completion order does not matter.
pub fn aggregate(trials: &[TrialResult]) -> Vec<CurvePoint> {
    let mut sorted: Vec<&TrialResult> = trials.iter().collect();
    sorted.sort_by_key(|t| t.seed);
    let epochs = sorted.iter().map(|t| t.train_mse.len()).min().unwrap_or(0);
    let mut out = Vec::with_capacity(2 * epochs);
    for e in 0..epochs {
        for (split, pick) in [("train", 0), ("val", 1)] {
            let vals: Vec<f64> = sorted
                .iter()
                .map(|t| if pick == 0 { t.train_mse[e] } else { t.val_mse[e] })
                .collect();
            out.push(CurvePoint {
                epoch: e + 1,
                split,
                mean_mse: stats::mean(&vals),
                stderr_mse: stats::std_error(&vals),
                n_trials: vals.len(),
            });
        }
    }
    out
}

/// Runs `n_trials` seeds (`seed`, `seed + 1`, ...) in parallel.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let trials = (0..config.n_trials as u64)
        .into_par_iter()
        .map(|i| run_trial(config, config.seed + i))
        .collect::<Result<Vec<_>>>()?;
    let curves = aggregate(&trials);
    Ok(ExperimentResult { trials, curves })
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// Writes `curves.csv`, `trials.csv` and `final.csv` into `dir`.
pub fn write_outputs(result: &ExperimentResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut w = csv::Writer::from_path(dir.join("curves.csv"))?;
    w.write_record(["epoch", "split", "mean_mse", "stderr_mse", "n_trials"])?;
    for c in &result.curves {
        w.write_record([c.epoch.to_string(), c.split.into(), fmt(c.mean_mse), fmt(c.stderr_mse), c.n_trials.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(dir.join("curves.csv"), e))?;

    let mut trials: Vec<&TrialResult> = result.trials.iter().collect();
    trials.sort_by_key(|t| t.seed);

    let mut w = csv::Writer::from_path(dir.join("trials.csv"))?;
    w.write_record(["seed", "epoch", "train_mse", "val_mse"])?;
    for t in &trials {
        for (e, (tr, va)) in t.train_mse.iter().zip(&t.val_mse).enumerate() {
            w.write_record([t.seed.to_string(), (e + 1).to_string(), fmt(*tr), fmt(*va)])?;
        }
    }
    w.flush().map_err(|e| Error::io(dir.join("trials.csv"), e))?;

    let mut w = csv::Writer::from_path(dir.join("final.csv"))?;
    w.write_record(["seed", "test_mse"])?;
    for t in &trials {
        w.write_record([t.seed.to_string(), fmt(t.test_mse)])?;
    }
    w.flush().map_err(|e| Error::io(dir.join("final.csv"), e))?;
    Ok(())
}

/// Reads the `test_mse` column of a `final.csv`.
pub fn read_final_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let col = r
        .headers()?
        .iter()
        .position(|h| h == "test_mse")
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            row: 1,
            column: 0,
            reason: "no test_mse column".into(),
        })?;
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            let cell = rec.get(col).unwrap_or("");
            cell.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                row: i + 2,
                column: col + 1,
                reason: format!("`{cell}` is not a number"),
            })
        })
        .collect()
}

/// `lo·(hi/lo)^(j/(n−1))` for `j = 0..n`, endpoints exact.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) || n < 2 {
        return Err(Error::Parameter(format!(
            "grid needs 0 < lo < hi and at least 2 points, got lo={lo}, hi={hi}, n={n}"
        )));
    }
    let ratio = hi / lo;
    Ok((0..n)
        .map(|j| match j {
            0 => lo,
            j if j == n - 1 => hi,
            j => lo * ratio.powf(j as f64 / (n - 1) as f64),
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridAxis {
    Lr,
    RegDelta1,
    RegDelta2,
}

impl std::str::FromStr for GridAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lr" => Ok(GridAxis::Lr),
            "reg_delta1" => Ok(GridAxis::RegDelta1),
            "reg_delta2" => Ok(GridAxis::RegDelta2),
            other => Err(Error::Parameter(format!("unknown grid axis `{other}` (lr, reg_delta1, reg_delta2)"))),
        }
    }
}

impl GridAxis {
    pub fn apply(self, config: &mut ExperimentConfig, value: f64) {
        match self {
            GridAxis::Lr => config.optim.lr = value,
            GridAxis::RegDelta1 => config.reg.delta1 = value,
            GridAxis::RegDelta2 => config.reg.delta2 = value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridPoint {
    pub value: f64,
    pub mean_min_val_mse: f64,
    pub stderr_min_val_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridResult {
    pub axis: GridAxis,
    pub points: Vec<GridPoint>,
    pub best: usize,
}

/// Index of the smallest objective; ties keep the first.
pub fn argmin(values: &[f64]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_nan())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
}

pub fn grid_search(config: &ExperimentConfig, axis: GridAxis, lo: f64, hi: f64, n_points: usize) -> Result<GridResult> {
    let grid = geometric_grid(lo, hi, n_points)?;
    let points = grid
        .iter()
        .map(|&value| {
            let mut cfg = config.clone();
            axis.apply(&mut cfg, value);
            let res = run_experiment(&cfg)?;
            let mins = res.min_val_mse();
            Ok(GridPoint {
                value,
                mean_min_val_mse: stats::mean(&mins),
                stderr_min_val_mse: stats::std_error(&mins),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = argmin(&points.iter().map(|p| p.mean_min_val_mse).collect::<Vec<_>>())
        .ok_or_else(|| Error::Domain("every grid point produced NaN".into()))?;
    Ok(GridResult { axis, points, best })
}

pub fn write_grid_csv(result: &GridResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["value", "mean_min_val_mse", "stderr_min_val_mse", "best"])?;
    for (i, p) in result.points.iter().enumerate() {
        w.write_record([fmt(p.value), fmt(p.mean_min_val_mse), fmt(p.stderr_min_val_mse), (i == result.best).to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
