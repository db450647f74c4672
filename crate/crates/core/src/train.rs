//! Imitation learning: the network's cost map goes through the soft
//! navigation surrogate, and the resulting steering is regressed onto the
//! demonstrator's steering.

use std::fmt::Write as _;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::CheckpointError;
use crate::gridmap::{load_grid, save_grid, GridError, LayeredGrid};
use crate::io_util::write_atomic_str;
use crate::model::{CamelModel, ForwardOptions, ModelError, INPUT_COLS, INPUT_ROWS};
use crate::nav::{soft_steering, NavContext, NavError};
use crate::tensor::{AdamConfig, AdamState, Tape, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("need at least {needed} records, got {got}")]
    TooFewRecords { needed: usize, got: usize },
    #[error("cannot evaluate an empty set")]
    EmptySet,
    #[error("non-finite loss at epoch {epoch} on record {record} (prediction {prediction}, label {label})")]
    NonFinite {
        epoch: usize,
        record: u64,
        prediction: f64,
        label: f64,
    },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("invalid record {id}: {detail}")]
    Record { id: u64, detail: String },
    #[error("dataset index line {line}: {detail}")]
    Index { line: usize, detail: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Nav(#[from] NavError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// One demonstration: a sensed grid, the bearing to the goal, and the
/// demonstrator's command.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub id: u64,
    pub grid: LayeredGrid,
    pub bearing: f64,
    pub steering: f64,
    /// Recorded for reference; the loss does not use it.
    pub throttle: f64,
}

impl DatasetRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |detail: &str| {
            Err(TrainError::Record {
                id: self.id,
                detail: detail.to_string(),
            })
        };
        if (self.grid.rows, self.grid.cols) != (INPUT_ROWS, INPUT_COLS) {
            return bad("grid is not 40x28");
        }
        if !self.grid.data.iter().all(|v| v.is_finite()) {
            return bad("grid has non-finite values");
        }
        if !self.bearing.is_finite() {
            return bad("bearing is not finite");
        }
        if !(-1.0..=1.0).contains(&self.steering) {
            return bad("steering outside [-1, 1]");
        }
        if !(0.0..=1.0).contains(&self.throttle) {
            return bad("throttle outside [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Weight decay for the first `weight_decay_period` epochs; doubled after
    /// each period.
    pub weight_decay: f64,
    pub weight_decay_period: usize,
    /// Train, validation, and test shares, summing to 10.
    pub split: [usize; 3],
    /// Seeds the split and the per-epoch shuffles.
    pub seed: u64,
    /// Seeds the initial weights.
    pub init_seed: u64,
    /// Softmin temperature of the surrogate during training.
    pub tau: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 1e-4,
            weight_decay: 1e-5,
            weight_decay_period: 100,
            split: [7, 2, 1],
            seed: 0,
            init_seed: 0,
            tau: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.split.iter().sum::<usize>() != 10 {
            return bad("split shares must sum to 10");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if self.weight_decay_period == 0 {
            return bad("weight_decay_period must be at least 1");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive");
        }
        Ok(())
    }

    /// Weight decay in force during `epoch` (0-based).
    pub fn weight_decay_at(&self, epoch: usize) -> f64 {
        let doublings = (epoch / self.weight_decay_period).min(1000) as i32;
        self.weight_decay * 2f64.powi(doublings)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Shuffle with `seed` and cut into `floor(a n / 10)`, `floor(b n / 10)`,
/// and the rest.
pub fn split_with<T>(mut records: Vec<T>, shares: [usize; 3], seed: u64) -> Result<Split<T>> {
    let n = records.len();
    if n < 10 {
        return Err(TrainError::TooFewRecords { needed: 10, got: n });
    }
    if shares.iter().sum::<usize>() != 10 {
        return Err(TrainError::Config("split shares must sum to 10".into()));
    }
    records.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n * shares[0] / 10;
    let n_val = n * shares[1] / 10;
    let test = records.split_off(n_train + n_val);
    let val = records.split_off(n_train);
    Ok(Split {
        train: records,
        val,
        test,
    })
}

/// The 7:2:1 split.
pub fn split<T>(records: Vec<T>, seed: u64) -> Result<Split<T>> {
    split_with(records, [7, 2, 1], seed)
}

/// Surrogate steering for one record, on an existing tape.
fn predict_on<'t>(
    tape: &'t Tape,
    params: &[crate::tensor::Var<'t>],
    record: &DatasetRecord,
    nav: &NavContext,
) -> Result<crate::tensor::Var<'t>> {
    let x = tape.constant(record.grid.to_tensor());
    let out = CamelModel::forward_with(params, x, ForwardOptions::default())?;
    Ok(soft_steering(out.cost, INPUT_ROWS, INPUT_COLS, &nav.with_bearing(record.bearing))?)
}

/// Steering the soft pipeline derives from the model's cost map.
pub fn predict_steering(model: &CamelModel, record: &DatasetRecord, nav: &NavContext) -> Result<f64> {
    let tape = Tape::new();
    let params = model.bind(&tape, false);
    Ok(predict_on(&tape, &params, record, nav)?.item())
}

/// Mean squared steering error over `records`. Parameters are untouched.
pub fn evaluate(model: &CamelModel, records: &[DatasetRecord], nav: &NavContext) -> Result<f64> {
    if records.is_empty() {
        return Err(TrainError::EmptySet);
    }
    let mut total = 0.0;
    for r in records {
        let e = predict_steering(model, r, nav)? - r.steering;
        total += e * e;
    }
    Ok(total / records.len() as f64)
}

/// Loss and parameter gradients for one record.
pub fn record_gradients(model: &CamelModel, record: &DatasetRecord, nav: &NavContext) -> Result<(f64, f64, Vec<Tensor>)> {
    let tape = Tape::new();
    let params = model.bind(&tape, true);
    let y_hat = predict_on(&tape, &params, record, nav)?;
    let y = tape.constant(Tensor::scalar(record.steering));
    let loss = y_hat.mse(y)?;
    tape.backward(loss)?;
    let grads = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();
    Ok((loss.item(), y_hat.item(), grads))
}

/// Order in which `epoch` visits `n` training records.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mix = seed ^ (epoch as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix));
    order
}

/// One pass of per-record Adam updates in a shuffled order; returns the mean
/// loss seen before each update.
pub fn train_epoch(
    model: &mut CamelModel,
    optimizer: &mut AdamState,
    records: &[DatasetRecord],
    nav: &NavContext,
    seed: u64,
    epoch: usize,
) -> Result<f64> {
    if records.is_empty() {
        return Err(TrainError::EmptySet);
    }
    let mut total = 0.0;
    for i in epoch_order(records.len(), seed, epoch) {
        let r = &records[i];
        let (loss, prediction, grads) = record_gradients(model, r, nav)?;
        if !loss.is_finite() {
            return Err(TrainError::NonFinite {
                epoch,
                record: r.id,
                prediction,
                label: r.steering,
            });
        }
        optimizer.step(model.params_mut(), &grads)?;
        total += loss;
    }
    Ok(total / records.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights with the lowest validation loss.
    pub best: CamelModel,
    pub best_epoch: usize,
    pub best_val: f64,
    pub curve: Vec<EpochLoss>,
    /// Weights after the last epoch.
    pub last: CamelModel,
}

/// Train from `model`, evaluating on `val` after every epoch and keeping the
/// best weights. `on_epoch` sees each epoch's losses and whether they set a
/// new best.
pub fn train_loop(
    cfg: &TrainConfig,
    nav: &NavContext,
    model: CamelModel,
    train: &[DatasetRecord],
    val: &[DatasetRecord],
    mut on_epoch: impl FnMut(&EpochLoss, bool, &CamelModel) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let nav = nav.with_tau(cfg.tau);
    nav.validate()?;
    let mut model = model;
    let mut optimizer = AdamState::new(
        model.params(),
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut best: Option<(usize, f64, CamelModel)> = None;
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        optimizer.weight_decay = cfg.weight_decay_at(epoch);
        let train_mse = train_epoch(&mut model, &mut optimizer, train, &nav, cfg.seed, epoch)?;
        let val_mse = evaluate(&model, val, &nav)?;
        let row = EpochLoss {
            epoch,
            train_mse,
            val_mse,
        };
        let improved = best.as_ref().is_none_or(|(_, b, _)| val_mse < *b);
        if improved {
            best = Some((epoch, val_mse, model.clone()));
        }
        on_epoch(&row, improved, &model)?;
        curve.push(row);
    }
    let (best_epoch, best_val, best) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_val,
        curve,
        last: model,
    })
}

pub fn loss_curve_csv(curve: &[EpochLoss]) -> String {
    let mut s = String::from("epoch,train_mse,val_mse\n");
    for e in curve {
        let _ = writeln!(s, "{},{},{}", e.epoch, e.train_mse, e.val_mse);
    }
    s
}

/// One line of a dataset index. `grid` is relative to the index file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexEntry {
    pub id: u64,
    pub grid: PathBuf,
    pub bearing: f64,
    pub steering: f64,
    pub throttle: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    /// LiDAR returns behind the grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
}

pub const INDEX_FILE: &str = "index.jsonl";
const GRID_DIR: &str = "grids";

/// Where a record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordOrigin {
    pub scene: u64,
    pub step: usize,
    pub points: usize,
}

/// Write grids under `dir/grids/` and the index to `dir/index.jsonl`.
/// `origin` optionally tags each record with where it came from.
pub fn write_dataset(dir: &Path, records: &[DatasetRecord], origin: &[RecordOrigin]) -> Result<PathBuf> {
    let mut index = String::new();
    for (i, r) in records.iter().enumerate() {
        r.validate()?;
        let rel = Path::new(GRID_DIR).join(format!("{:06}.cmlg", r.id));
        save_grid(&dir.join(&rel), &r.grid)?;
        let entry = IndexEntry {
            id: r.id,
            grid: rel,
            bearing: r.bearing,
            steering: r.steering,
            throttle: r.throttle,
            scene: origin.get(i).map(|o| o.scene),
            step: origin.get(i).map(|o| o.step),
            points: origin.get(i).map(|o| o.points),
        };
        index.push_str(&serde_json::to_string(&entry).expect("index entries serialize"));
        index.push('\n');
    }
    let path = dir.join(INDEX_FILE);
    write_atomic_str(&path, &index)?;
    Ok(path)
}

pub fn read_index(path: &Path) -> Result<Vec<IndexEntry>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line).map_err(|e| TrainError::Index {
            line: i + 1,
            detail: e.to_string(),
        })?;
        out.push(entry);
    }
    Ok(out)
}

/// Load every record of an index, resolving grid paths against its directory.
pub fn load_dataset(index: &Path) -> Result<Vec<DatasetRecord>> {
    let base = index.parent().unwrap_or(Path::new("."));
    read_index(index)?
        .into_iter()
        .map(|e| {
            let record = DatasetRecord {
                id: e.id,
                grid: load_grid(&base.join(&e.grid))?,
                bearing: e.bearing,
                steering: e.steering,
                throttle: e.throttle,
            };
            record.validate()?;
            Ok(record)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridmap::CHANNELS;

    fn uniform_grid(v: f64) -> LayeredGrid {
        LayeredGrid {
            rows: INPUT_ROWS,
            cols: INPUT_COLS,
            data: vec![v; CHANNELS * INPUT_ROWS * INPUT_COLS],
            occupancy: vec![true; INPUT_ROWS * INPUT_COLS],
        }
    }

    fn record(id: u64, steering: f64, seed: u64) -> DatasetRecord {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut grid = uniform_grid(0.0);
        for v in &mut grid.data {
            *v = rand::Rng::random_range(&mut rng, 0.0..1.0);
        }
        DatasetRecord {
            id,
            grid,
            bearing: 0.3,
            steering,
            throttle: 0.5,
        }
    }

    #[test]
    fn split_sizes() {
        let s = split((0..4000).collect::<Vec<_>>(), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (2800, 800, 400));
        let s = split((0..10).collect::<Vec<_>>(), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (7, 2, 1));
        let s = split((0..500).collect::<Vec<_>>(), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (350, 100, 50));
    }

    #[test]
    fn split_is_a_seeded_partition() {
        let a = split((0..57).collect::<Vec<_>>(), 9).unwrap();
        assert_eq!(a, split((0..57).collect::<Vec<_>>(), 9).unwrap());
        let mut all: Vec<_> = a.train.iter().chain(&a.val).chain(&a.test).copied().collect();
        all.sort();
        assert_eq!(all, (0..57).collect::<Vec<_>>());
        assert!(matches!(split(vec![0; 9], 0), Err(TrainError::TooFewRecords { .. })));
    }

    #[test]
    fn weight_decay_doubles_per_period() {
        let c = TrainConfig::default();
        assert_eq!(c.weight_decay_at(0), 1e-5);
        assert_eq!(c.weight_decay_at(99), 1e-5);
        assert_eq!(c.weight_decay_at(100), 2e-5);
        assert_eq!(c.weight_decay_at(299), 4e-5);
        assert!((0..300).all(|e| c.weight_decay_at(e + 1) >= c.weight_decay_at(e)));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { split: [7, 2, 2], ..Default::default() }.validate().is_err());
    }

    #[test]
    fn symmetric_record_has_zero_loss_and_gradient() {
        let r = DatasetRecord {
            id: 0,
            grid: uniform_grid(0.4),
            bearing: 0.0,
            steering: 0.0,
            throttle: 0.5,
        };
        let (loss, pred, grads) = record_gradients(&CamelModel::init(3), &r, &NavContext::default()).unwrap();
        assert_eq!(pred, 0.0);
        assert_eq!(loss, 0.0);
        assert!(grads.iter().all(|g| g.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn evaluate_leaves_parameters_alone() {
        let model = CamelModel::init(2);
        let before = model.clone();
        let recs: Vec<_> = (0..3).map(|i| record(i, 0.2, i)).collect();
        let mse = evaluate(&model, &recs, &NavContext::default()).unwrap();
        assert!(mse.is_finite());
        assert_eq!(model, before);
        assert!(matches!(evaluate(&model, &[], &NavContext::default()), Err(TrainError::EmptySet)));
    }

    #[test]
    fn evaluate_is_mean_squared_error() {
        let model = CamelModel::init(5);
        let nav = NavContext::default();
        let recs: Vec<_> = (0..4).map(|i| record(i, if i % 2 == 0 { 0.5 } else { -0.5 }, i)).collect();
        let expected = recs
            .iter()
            .map(|r| (predict_steering(&model, r, &nav).unwrap() - r.steering).powi(2))
            .sum::<f64>()
            / 4.0;
        assert_eq!(evaluate(&model, &recs, &nav).unwrap(), expected);
    }

    #[test]
    fn single_record_overfits() {
        let cfg = TrainConfig {
            epochs: 50,
            learning_rate: 1e-3,
            ..Default::default()
        };
        let recs = vec![record(1, 0.6, 11)];
        let out = train_loop(&cfg, &NavContext::default(), CamelModel::init(1), &recs, &recs, |_, _, _| Ok(())).unwrap();
        let losses: Vec<f64> = out.curve.iter().map(|e| e.train_mse).collect();
        let windows: Vec<f64> = losses.chunks(10).map(|w| w.iter().sum::<f64>() / w.len() as f64).collect();
        assert!(windows.windows(2).all(|w| w[1] < w[0]), "{windows:?}");
        assert!(out.curve.iter().all(|e| out.best_val <= e.val_mse));
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainConfig {
            epochs: 2,
            ..Default::default()
        };
        let recs: Vec<_> = (0..3).map(|i| record(i, 0.1 * i as f64, i)).collect();
        let run = || {
            train_loop(&cfg, &NavContext::default(), CamelModel::init(4), &recs, &recs, |_, _, _| Ok(()))
                .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.last, b.last);
    }

    #[test]
    fn loss_csv_has_one_row_per_epoch() {
        let curve = vec![
            EpochLoss {
                epoch: 0,
                train_mse: 0.5,
                val_mse: 0.25,
            };
            3
        ];
        let csv = loss_curve_csv(&curve);
        assert_eq!(csv.lines().count(), 4);
        assert_eq!(csv.lines().next(), Some("epoch,train_mse,val_mse"));
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let recs: Vec<_> = (0..3).map(|i| record(i, -0.2, i)).collect();
        let index = write_dataset(
            dir.path(),
            &recs,
            &[(7, 0), (7, 1), (8, 0)].map(|(scene, step)| RecordOrigin { scene, step, points: 9 }),
        ).unwrap();
        assert_eq!(std::fs::read_to_string(&index).unwrap().lines().count(), 3);
        assert_eq!(load_dataset(&index).unwrap(), recs);
        assert_eq!(read_index(&index).unwrap()[2].scene, Some(8));
    }

    #[test]
    fn bad_index_lines_are_located() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(INDEX_FILE);
        std::fs::write(&path, "{\"id\":1}\n").unwrap();
        assert!(matches!(read_index(&path), Err(TrainError::Index { line: 1, .. })));
    }
}
