//! Small fully connected networks with hand-written backpropagation.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NN_STREAM: u64 = 0x4e4e_494e;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`
    pub w: Array2<f64>,
    pub b: Option<Array1<f64>>,
}

/// tanh on every hidden layer, identity on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyNet {
    pub sizes: Vec<usize>,
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// Mean over samples of `‖f(x) − x‖²`.
    Reconstruction,
    /// Mean over samples of `‖f(x) − c‖²`.
    Svdd { center: Array1<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainHyper {
    pub lr: f64,
    pub epochs: usize,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper { lr: 0.01, epochs: 300 }
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub net: TinyNet,
    /// Loss before each update, then the final loss.
    pub losses: Vec<f64>,
}

impl TinyNet {
    /// Weights and biases uniform in `±1/√fan_in`.
    pub fn new(sizes: &[usize], bias: bool, seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("bad layer sizes {sizes:?}")));
        }
        let mut rng = crate::rng::stream(seed, NN_STREAM);
        let layers = sizes
            .windows(2)
            .map(|io| {
                let r = 1.0 / (io[0] as f64).sqrt();
                let w = Array2::from_shape_simple_fn((io[1], io[0]), || rng.gen_range(-r..r));
                let b = bias.then(|| Array1::from_shape_simple_fn(io[1], || rng.gen_range(-r..r)));
                Layer { w, b }
            })
            .collect();
        Ok(TinyNet { sizes: sizes.to_vec(), layers })
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// Activations of every layer, input first.
    fn activations(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut acts = vec![x.to_owned()];
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = acts[l].dot(&layer.w.t());
            if let Some(b) = &layer.b {
                z += b;
            }
            if l < last {
                z.mapv_inplace(f64::tanh);
            }
            acts.push(z);
        }
        acts
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.activations(x).pop().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.as_ref().map_or(0, |b| b.len())).sum()
    }

    /// Parameters in layer order, weights (row-major) then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            v.extend(l.w.iter());
            if let Some(b) = &l.b {
                v.extend(b.iter());
            }
        }
        v
    }

    pub fn set_flat_params(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.n_params(), "parameter vector length");
        let mut it = v.iter().copied();
        for l in &mut self.layers {
            l.w.iter_mut().for_each(|x| *x = it.next().unwrap());
            if let Some(b) = &mut l.b {
                b.iter_mut().for_each(|x| *x = it.next().unwrap());
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.w.iter().all(|x| x.is_finite()) && l.b.iter().flatten().all(|x| x.is_finite()))
    }
}

fn targets<'a>(x: ArrayView2<'a, f64>, out: &Array2<f64>, obj: &Objective) -> Result<Array2<f64>> {
    match obj {
        Objective::Reconstruction => {
            if out.dim() != x.dim() {
                return Err(Error::Config("reconstruction needs output size equal to input size".into()));
            }
            Ok(out - &x)
        }
        Objective::Svdd { center } => {
            if center.len() != out.ncols() {
                return Err(Error::Config("svdd center size differs from output size".into()));
            }
            Ok(out - center)
        }
    }
}

/// Per-sample objective values `‖f(x) − target‖²`.
pub fn sample_losses(net: &TinyNet, x: ArrayView2<f64>, obj: &Objective) -> Result<Array1<f64>> {
    let r = targets(x, &net.forward(x), obj)?;
    Ok(r.map_axis(Axis(1), |row| row.dot(&row)))
}

pub fn loss(net: &TinyNet, x: ArrayView2<f64>, obj: &Objective) -> Result<f64> {
    Ok(sample_losses(net, x, obj)?.mean().unwrap_or(0.0))
}

/// Loss and its gradient, flattened in [`TinyNet::flat_params`] order.
pub fn gradients(net: &TinyNet, x: ArrayView2<f64>, obj: &Objective) -> Result<(f64, Vec<f64>)> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::InvalidInput("no training inputs".into()));
    }
    if x.ncols() != net.input_dim() {
        return Err(Error::InvalidInput(format!("input width {} != {}", x.ncols(), net.input_dim())));
    }
    let acts = net.activations(x);
    let r = targets(x, acts.last().unwrap(), obj)?;
    let loss = r.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let mut g = r * (2.0 / n as f64);
    let mut per_layer = Vec::with_capacity(net.layers.len());
    for l in (0..net.layers.len()).rev() {
        let layer = &net.layers[l];
        let dw = g.t().dot(&acts[l]);
        let db = layer.b.as_ref().map(|_| g.sum_axis(Axis(0)));
        if l > 0 {
            g = g.dot(&layer.w) * acts[l].mapv(|a| 1.0 - a * a);
        }
        per_layer.push((dw, db));
    }
    per_layer.reverse();
    let mut flat = Vec::with_capacity(net.n_params());
    for (dw, db) in per_layer {
        flat.extend(dw.iter());
        if let Some(db) = db {
            flat.extend(db.iter());
        }
    }
    Ok((loss, flat))
}

/// Mean network output over `x`.
pub fn svdd_center(net: &TinyNet, x: ArrayView2<f64>) -> Array1<f64> {
    net.forward(x).mean_axis(Axis(0)).expect("non-empty inputs")
}

/// Full-batch gradient descent.
pub fn train_network(mut net: TinyNet, x: ArrayView2<f64>, obj: &Objective, hyper: &TrainHyper) -> Result<Trained> {
    if !(hyper.lr.is_finite() && hyper.lr > 0.0) {
        return Err(Error::Config("learning rate must be positive".into()));
    }
    let mut losses = Vec::with_capacity(hyper.epochs + 1);
    let mut params = net.flat_params();
    for epoch in 0..hyper.epochs {
        let (l, grad) = gradients(&net, x, obj)?;
        if !l.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged { epoch, loss: l });
        }
        losses.push(l);
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= hyper.lr * g;
        }
        net.set_flat_params(&params);
    }
    let last = loss(&net, x, obj)?;
    if !last.is_finite() {
        return Err(Error::TrainingDiverged { epoch: hyper.epochs, loss: last });
    }
    losses.push(last);
    Ok(Trained { net, losses })
}
