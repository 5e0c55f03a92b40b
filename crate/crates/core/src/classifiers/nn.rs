use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{Schema, WideMatrix};
use crate::prelude::*;
use crate::{par, rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NnOptions {
    pub hidden: usize,
    pub decay: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for NnOptions {
    fn default() -> Self {
        NnOptions { hidden: 18, decay: 0.4, epochs: 2000, learning_rate: 0.01, seed: 0 }
    }
}

/// Single hidden layer of logistic units with a softmax output. Inputs are
/// standardized with the stored training mean and sd before the first layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralNet {
    pub input_dim: usize,
    pub hidden_units: usize,
    pub n_classes: usize,
    /// `hidden * input_dim`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `n_classes * hidden`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub decay: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub x_mean: Vec<f64>,
    pub x_sd: Vec<f64>,
    /// Objective before each epoch and after the last.
    pub loss_trace: Vec<f64>,
    pub schema: Schema,
}

const CHUNK: usize = 256;

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl NeuralNet {
    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// All weights in the order `w1, b1, w2, b2`.
    pub fn params(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    pub fn set_params(&mut self, theta: &[f64]) {
        let (a, rest) = theta.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, d) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2.copy_from_slice(d);
    }

    fn standardize(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(self.x_mean.iter().zip(&self.x_sd)).map(|(x, (m, s))| (x - m) / s).collect()
    }

    /// Hidden activations and output probabilities for one standardized row.
    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (h_n, p) = (self.hidden_units, self.input_dim);
        let h: Vec<f64> = (0..h_n)
            .map(|j| sigmoid(self.b1[j] + self.w1[j * p..(j + 1) * p].iter().zip(x).map(|(w, v)| w * v).sum::<f64>()))
            .collect();
        let mut o: Vec<f64> = (0..self.n_classes)
            .map(|k| self.b2[k] + self.w2[k * h_n..(k + 1) * h_n].iter().zip(&h).map(|(w, v)| w * v).sum::<f64>())
            .collect();
        let m = o.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        o.iter_mut().for_each(|v| *v = (*v - m).exp());
        let s: f64 = o.iter().sum();
        o.iter_mut().for_each(|v| *v /= s);
        (h, o)
    }

    /// Training objective `(sum_i CE_i + decay/2 * sum w^2) / N` over
    /// already-standardized rows, with its gradient in [`params`] order.
    ///
    /// [`params`]: NeuralNet::params
    fn objective(&self, xs: &[f64], y: &[usize]) -> (f64, Vec<f64>) {
        let n = y.len();
        let (p, h_n, k) = (self.input_dim, self.hidden_units, self.n_classes);
        let np = self.n_params();
        let (o_b1, o_w2) = (self.w1.len(), self.w1.len() + self.b1.len());
        let o_b2 = o_w2 + self.w2.len();
        let (ce, mut g) = par::chunked_sum(n, CHUNK, np, |range| {
            let mut g = vec![0.0; np];
            let mut ce = 0.0;
            let mut dh = vec![0.0; h_n];
            for i in range {
                let x = &xs[i * p..(i + 1) * p];
                let (h, o) = self.forward(x);
                ce -= o[y[i]].max(f64::MIN_POSITIVE).ln();
                dh.iter_mut().for_each(|v| *v = 0.0);
                for c in 0..k {
                    let d = o[c] - f64::from(u8::from(c == y[i]));
                    g[o_b2 + c] += d;
                    for j in 0..h_n {
                        g[o_w2 + c * h_n + j] += d * h[j];
                        dh[j] += d * self.w2[c * h_n + j];
                    }
                }
                for j in 0..h_n {
                    let dz = dh[j] * h[j] * (1.0 - h[j]);
                    g[o_b1 + j] += dz;
                    for (gw, xv) in g[j * p..(j + 1) * p].iter_mut().zip(x) {
                        *gw += dz * xv;
                    }
                }
            }
            (ce, g)
        });
        let theta = self.params();
        let sq: f64 = theta.iter().map(|w| w * w).sum();
        for (gi, w) in g.iter_mut().zip(&theta) {
            *gi = (*gi + self.decay * w) / n as f64;
        }
        ((ce + 0.5 * self.decay * sq) / n as f64, g)
    }

    fn standardized(&self, w: &WideMatrix) -> Vec<f64> {
        (0..w.n_rows).flat_map(|i| self.standardize(w.row(i))).collect()
    }

    /// Training objective and its backpropagated gradient on `w`.
    pub fn loss_and_gradient(&self, w: &WideMatrix) -> Result<(f64, Vec<f64>)> {
        self.schema.check(w)?;
        Ok(self.objective(&self.standardized(w), &w.y))
    }

    pub fn predict_proba(&self, w: &WideMatrix) -> Result<Vec<f64>> {
        self.schema.check(w)?;
        Ok(par::map_indexed(w.n_rows, |i| self.forward(&self.standardize(w.row(i))).1).concat())
    }
}

/// Full-batch gradient descent from uniform(-0.5, 0.5) weights.
pub fn fit_nn(w: &WideMatrix, opts: &NnOptions) -> Result<NeuralNet> {
    if w.n_rows == 0 {
        return Err(Error::arg("no training rows"));
    }
    if opts.hidden == 0 {
        return Err(Error::arg("the hidden layer needs at least one unit"));
    }
    if !(opts.learning_rate > 0.0) || !(opts.decay >= 0.0) {
        return Err(Error::arg("learning rate must be positive and decay nonnegative"));
    }
    let (n, p, k) = (w.n_rows, w.n_cols, w.n_classes());
    let x_mean: Vec<f64> = (0..p).map(|j| w.column(j).iter().sum::<f64>() / n as f64).collect();
    let x_sd: Vec<f64> = (0..p)
        .map(|j| {
            let v = w.column(j).iter().map(|x| (x - x_mean[j]) * (x - x_mean[j])).sum::<f64>() / n as f64;
            if v > 0.0 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let mut r = rng::stream(opts.seed, &[0]);
    let mut draw = |m: usize| -> Vec<f64> { (0..m).map(|_| r.random_range(-0.5..0.5)).collect() };
    let mut net = NeuralNet {
        input_dim: p,
        hidden_units: opts.hidden,
        n_classes: k,
        w1: draw(opts.hidden * p),
        b1: draw(opts.hidden),
        w2: draw(k * opts.hidden),
        b2: draw(k),
        decay: opts.decay,
        epochs: opts.epochs,
        learning_rate: opts.learning_rate,
        seed: opts.seed,
        x_mean,
        x_sd,
        loss_trace: Vec::with_capacity(opts.epochs + 1),
        schema: Schema::of(w),
    };
    let xs = net.standardized(w);
    let mut theta = net.params();
    for epoch in 0..=opts.epochs {
        let (loss, g) = net.objective(&xs, &w.y);
        if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "training loss became non-finite at epoch {epoch}; use a smaller learning rate than {}",
                opts.learning_rate
            )));
        }
        net.loss_trace.push(loss);
        if epoch == opts.epochs {
            break;
        }
        theta.iter_mut().zip(&g).for_each(|(t, gi)| *t -= opts.learning_rate * gi);
        net.set_params(&theta);
    }
    Ok(net)
}

pub fn nn_predict_proba(net: &NeuralNet, w: &WideMatrix) -> Result<Vec<f64>> {
    net.predict_proba(w)
}
