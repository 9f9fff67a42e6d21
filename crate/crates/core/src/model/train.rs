use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{loss, Gradients, Mlp};
use crate::datagen::DatasetRecord;
use crate::error::{Error, Result};
use crate::heatmap::{encode_record, NormStats};
use crate::magnetics::FRAME_LEN;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Learning-rate schedule over epochs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine decay from the base rate to `floor` times it at the last epoch.
    Cosine { floor: f64 },
}

impl LrSchedule {
    /// Rate for `epoch` (1-based) out of `epochs`.
    pub fn rate(&self, base: f64, epoch: usize, epochs: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine { floor } => {
                let t = if epochs > 1 { (epoch - 1) as f64 / (epochs - 1) as f64 } else { 0.0 };
                base * (floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Requested minibatch size; capped at the training-set size.
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub schedule: LrSchedule,
    /// Stop after this many epochs without a new best validation loss.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 2000,
            max_epochs: 200,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            schedule: LrSchedule::Constant,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if let LrSchedule::Cosine { floor } = self.schedule {
            if !(0.0..=1.0).contains(&floor) {
                return Err(Error::Config(format!("cosine floor {floor} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Normalised inputs and targets, one sample per row.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainData {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
}

impl TrainData {
    pub fn from_records<'a>(
        records: impl IntoIterator<Item = &'a DatasetRecord>,
        norm: &NormStats,
        grid: usize,
    ) -> Result<Self> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut n = 0;
        for r in records {
            xs.extend_from_slice(&norm.normalize_frame(&r.hall));
            ys.extend(norm.normalize_heatmap(&encode_record(r, grid)?).values);
            n += 1;
        }
        Ok(TrainData {
            x: Array2::from_shape_vec((n, FRAME_LEN), xs).map_err(|e| Error::Shape(e.to_string()))?,
            y: Array2::from_shape_vec((n, grid * grid), ys).map_err(|e| Error::Shape(e.to_string()))?,
        })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss (epoch 0 is
    /// the initialisation).
    pub model: Mlp,
    pub best_epoch: usize,
    pub initial_val_loss: f64,
    pub best_val_loss: f64,
    pub log: Vec<EpochLog>,
}

const EVAL_CHUNK: usize = 4096;

/// Mean squared error of the raw network output over a whole split.
pub fn evaluate_loss(model: &Mlp, data: &TrainData) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Usage("cannot evaluate loss on an empty split".into()));
    }
    let mut total = 0.0;
    let mut start = 0;
    while start < data.len() {
        let end = (start + EVAL_CHUNK).min(data.len());
        let rows = ndarray::s![start..end, ..];
        let out = model.forward(data.x.slice(rows))?;
        total += loss(out.view(), data.y.slice(rows))? * (end - start) as f64;
        start = end;
    }
    Ok(total / data.len() as f64)
}

struct Adam {
    m: Gradients,
    v: Gradients,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn zeros_like(model: &Mlp) -> Gradients {
    Gradients {
        weights: model.layers.iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect(),
        biases: model.layers.iter().map(|l| ndarray::Array1::zeros(l.bias.len())).collect(),
    }
}

fn adam_step(p: &mut f64, g: f64, m: &mut f64, v: &mut f64, lr: f64, c1: f64, c2: f64) {
    *m = BETA1 * *m + (1.0 - BETA1) * g;
    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
}

impl Adam {
    fn step(&mut self, model: &mut Mlp, g: &Gradients, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (i, layer) in model.layers.iter_mut().enumerate() {
            ndarray::Zip::from(&mut layer.weights)
                .and(&g.weights[i])
                .and(&mut self.m.weights[i])
                .and(&mut self.v.weights[i])
                .for_each(|p, &g, m, v| adam_step(p, g, m, v, lr, c1, c2));
            ndarray::Zip::from(&mut layer.bias)
                .and(&g.biases[i])
                .and(&mut self.m.biases[i])
                .and(&mut self.v.biases[i])
                .for_each(|p, &g, m, v| adam_step(p, g, m, v, lr, c1, c2));
        }
    }
}

fn sgd_step(model: &mut Mlp, g: &Gradients, lr: f64) {
    for (i, layer) in model.layers.iter_mut().enumerate() {
        layer.weights.scaled_add(-lr, &g.weights[i]);
        layer.bias.scaled_add(-lr, &g.biases[i]);
    }
}

/// Minibatch training with per-epoch shuffling and validation-based model
/// selection.
pub fn train(model: Mlp, train: &TrainData, val: &TrainData, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Usage("training split is empty".into()));
    }
    if train.x.ncols() != model.input_len() || train.y.ncols() != model.output_len() {
        return Err(Error::Shape(format!(
            "training data is {}->{} but the network is {}->{}",
            train.x.ncols(),
            train.y.ncols(),
            model.input_len(),
            model.output_len()
        )));
    }
    let batch = config.batch_size.min(train.len());
    let mut rng = crate::seed::stream(config.seed, "train/shuffle");
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut model = model;
    let mut adam = Adam {
        m: zeros_like(&model),
        v: zeros_like(&model),
        t: 0,
    };

    let initial_val_loss = evaluate_loss(&model, val)?;
    let mut best = (0, initial_val_loss, model.clone());
    let mut log = Vec::with_capacity(config.max_epochs);
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let lr = config.schedule.rate(config.learning_rate, epoch, config.max_epochs);
        let mut sum = 0.0;
        for idx in order.chunks(batch) {
            let x = train.x.select(Axis(0), idx);
            let y = train.y.select(Axis(0), idx);
            let (l, g) = model.backward(x.view(), y.view())?;
            if !l.is_finite() {
                return Err(Error::Training { epoch, loss: l });
            }
            sum += l * idx.len() as f64;
            match config.optimizer {
                OptimizerKind::Adam => adam.step(&mut model, &g, lr),
                OptimizerKind::Sgd => sgd_step(&mut model, &g, lr),
            }
        }
        let val_loss = evaluate_loss(&model, val)?;
        if !val_loss.is_finite() {
            return Err(Error::Training { epoch, loss: val_loss });
        }
        let train_loss = sum / train.len() as f64;
        log::debug!("epoch {epoch}: train {train_loss:.6e} val {val_loss:.6e}");
        log.push(EpochLog { epoch, train_loss, val_loss });
        if val_loss < best.1 {
            best = (epoch, val_loss, model.clone());
        }
        if let Some(p) = config.patience {
            if epoch - best.0 >= p {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model: best.2,
        best_epoch: best.0,
        initial_val_loss,
        best_val_loss: best.1,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Inputs one-hot-ish in the first channel; targets a fixed function of it.
    fn toy(n: usize, seed: u64) -> TrainData {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((n, 9));
        let mut y = Array2::zeros((n, 100));
        for i in 0..n {
            let k = rng.random_range(0..10);
            x[[i, 0]] = k as f64 / 9.0;
            x[[i, 1]] = rng.random::<f64>();
            y[[i, k * 10 + 3]] = 0.8;
        }
        TrainData { x, y }
    }

    fn cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            batch_size: 32,
            max_epochs: epochs,
            seed: 9,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_reduces_loss_and_selects_best() {
        let (tr, va) = (toy(400, 1), toy(100, 2));
        let m = Mlp::init(&[9, 16, 100], 3).unwrap();
        let init_train = evaluate_loss(&m, &tr).unwrap();
        let out = train(m, &tr, &va, &cfg(20)).unwrap();
        assert!(out.log[0].train_loss < init_train);
        assert!(out.best_val_loss <= out.initial_val_loss);
        assert!(out.best_epoch <= 20);
        let min = out.log.iter().map(|l| l.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(out.best_val_loss, min.min(out.initial_val_loss));
        assert_eq!(evaluate_loss(&out.model, &va).unwrap(), out.best_val_loss);
    }

    #[test]
    fn training_is_deterministic() {
        let (tr, va) = (toy(200, 1), toy(50, 2));
        let a = train(Mlp::init(&[9, 16, 100], 3).unwrap(), &tr, &va, &cfg(5)).unwrap();
        let b = train(Mlp::init(&[9, 16, 100], 3).unwrap(), &tr, &va, &cfg(5)).unwrap();
        assert_eq!(a, b);
        let mut other = cfg(5);
        other.seed = 10;
        let c = train(Mlp::init(&[9, 16, 100], 3).unwrap(), &tr, &va, &other).unwrap();
        assert_ne!(a.model, c.model);
    }

    #[test]
    fn divergence_is_reported() {
        let (tr, va) = (toy(64, 1), toy(16, 2));
        let mut c = cfg(50);
        c.optimizer = OptimizerKind::Sgd;
        c.learning_rate = 1e6;
        match train(Mlp::init(&[9, 16, 100], 3).unwrap(), &tr, &va, &c) {
            Err(Error::Training { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {:?}", other.map(|o| o.best_epoch)),
        }
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let s = LrSchedule::Cosine { floor: 0.01 };
        assert_eq!(s.rate(2.0, 1, 11), 2.0);
        assert!((s.rate(2.0, 11, 11) - 0.02).abs() < 1e-15);
        assert!((s.rate(2.0, 6, 11) - 1.01).abs() < 1e-12);
        assert_eq!(LrSchedule::Constant.rate(2.0, 7, 11), 2.0);
        let bad = TrainConfig { schedule: LrSchedule::Cosine { floor: 1.5 }, ..cfg(3) };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn oversized_batch_is_capped_and_patience_stops() {
        let (tr, va) = (toy(10, 1), toy(10, 2));
        let mut c = cfg(100);
        c.batch_size = 2000;
        c.patience = Some(3);
        let out = train(Mlp::init(&[9, 4, 100], 3).unwrap(), &tr, &va, &c).unwrap();
        assert!(out.log.len() <= 100);
        let bad = TrainConfig { learning_rate: 0.0, ..cfg(1) };
        assert!(matches!(train(Mlp::init(&[9, 4, 100], 3).unwrap(), &tr, &va, &bad), Err(Error::Config(_))));
    }
}
