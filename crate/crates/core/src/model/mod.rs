//! Fully connected heatmap regressor with hand-written backpropagation.
//!
//! Weights of layer `l` are stored as a `fan_in x fan_out` matrix so a batch
//! `X` (rows are samples) propagates as `X W + b`. Hidden layers use ReLU and
//! the output layer is the identity; [`Mlp::predict`] clamps to `[0, 1]`.

mod checkpoint;
mod train;

pub use checkpoint::{Checkpoint, Provenance, CHECKPOINT_FORMAT};
pub use train::{evaluate_loss, train, EpochLog, LrSchedule, OptimizerKind, TrainConfig, TrainData, TrainOutcome};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Layer sizes of the full-size network.
pub const FULL_LAYERS: [usize; 6] = [9, 600, 2000, 2000, 2000, 100];
/// Layer sizes of the fast surrogate.
pub const SMALL_LAYERS: [usize; 7] = [9, 128, 128, 128, 128, 128, 100];
/// Two-hidden-layer network used by quick checks.
pub const TINY_LAYERS: [usize; 4] = [9, 64, 64, 100];

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Parameter gradients, laid out like [`Mlp::layers`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Mlp {
    /// He-initialised network: weights drawn from `N(0, 2 / fan_in)`, zero
    /// biases.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self> {
        check_sizes(sizes)?;
        let mut rng = crate::seed::stream(seed, "mlp/init");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let normal = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).expect("positive sd");
                Layer {
                    weights: Array2::from_shape_simple_fn((w[0], w[1]), || normal.sample(&mut rng)),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Ok(Mlp { layers })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        check_sizes(sizes)?;
        Ok(Mlp {
            layers: sizes
                .windows(2)
                .map(|w| Layer {
                    weights: Array2::zeros((w[0], w[1])),
                    bias: Array1::zeros(w[1]),
                })
                .collect(),
        })
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].weights.nrows()];
        s.extend(self.layers.iter().map(|l| l.weights.ncols()));
        s
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().expect("at least one layer").weights.ncols()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_len() {
            return Err(Error::Usage(format!(
                "network expects {} inputs per sample, got {}",
                self.input_len(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Move each first-layer hyperplane through a training input drawn at
    /// random, keeping the weights. Normalised inputs fill only a thin sliver
    /// of the unit cube, so hyperplanes through the origin rarely cut it.
    pub fn anchor_first_layer(&mut self, x: ArrayView2<f64>, seed: u64) -> Result<()> {
        self.check_input(&x)?;
        if x.nrows() == 0 {
            return Err(Error::Usage("no inputs to anchor on".into()));
        }
        let mut rng = crate::seed::stream(seed, "mlp/anchor");
        let first = &mut self.layers[0];
        for j in 0..first.bias.len() {
            let r = rng.random_range(0..x.nrows());
            first.bias[j] = -x.row(r).dot(&first.weights.column(j));
        }
        Ok(())
    }

    /// Raw (unclamped) outputs for a batch of normalised frames.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.trace(x)?.pop().expect("trace holds the output"))
    }

    /// Inference path: forward followed by a clamp to `[0, 1]`.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut y = self.forward(x)?;
        y.mapv_inplace(|v| v.clamp(0.0, 1.0));
        Ok(y)
    }

    /// Activations of every layer, starting with the input itself.
    fn trace(&self, x: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
        self.check_input(&x)?;
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&layer.weights);
            z += &layer.bias;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        Ok(acts)
    }

    /// Mean squared error and its gradient for one batch.
    pub fn backward(&self, x: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<(f64, Gradients)> {
        let acts = self.trace(x)?;
        let out = acts.last().expect("output");
        let l = loss(out.view(), target)?;
        let scale = 2.0 / out.len() as f64;
        let mut delta = (out - &target) * scale;
        let n = self.layers.len();
        let mut gw = Vec::with_capacity(n);
        let mut gb = Vec::with_capacity(n);
        for i in (0..n).rev() {
            gw.push(acts[i].t().dot(&delta));
            gb.push(delta.sum_axis(Axis(0)));
            if i > 0 {
                let mut prev = delta.dot(&self.layers[i].weights.t());
                Zip::from(&mut prev).and(&acts[i]).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = prev;
            }
        }
        gw.reverse();
        gb.reverse();
        Ok((l, Gradients { weights: gw, biases: gb }))
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::Shape(format!("invalid layer sizes {sizes:?}")));
    }
    Ok(())
}

/// Mean squared error over every element of the batch.
pub fn loss(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::Usage(format!(
            "prediction shape {:?} does not match target shape {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    let sum: f64 = Zip::from(&pred).and(&target).fold(0.0, |acc, &p, &t| acc + (p - t) * (p - t));
    Ok(sum / pred.len() as f64)
}
