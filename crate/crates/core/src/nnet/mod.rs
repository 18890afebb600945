//! Bias-free feedforward rectifier networks.
//!
//! Layer `i` computes `s_i = W_i a_{i−1}` and `a_i = rect(s_i)`; the last
//! layer feeds either a softmax or an identity head. Parameters live in one
//! flat vector where layer `i` is stored row-major, so the incoming weights of
//! each neuron are contiguous.

pub mod io;
mod train;

pub use train::{predict_error, train, Optimizer, TrainConfig, TrainRecord};

use std::ops::Range;

use ndarray::{s, Array2, ArrayView2, ArrayViewMut2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// Class probabilities; pairs with the categorical loss.
    Softmax,
    /// Raw outputs; pairs with the mean square error.
    Identity,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    widths: Vec<usize>,
    head: Head,
}

impl NetSpec {
    /// `widths` lists input, hidden and output sizes; at least one hidden layer.
    pub fn new(widths: Vec<usize>, head: Head) -> Result<Self> {
        if widths.len() < 3 {
            return Err(Error::InvalidArgument("a network needs at least one hidden layer".into()));
        }
        if widths.contains(&0) {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        Ok(Self { widths, head })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layout(&self) -> ParamLayout {
        let mut offset = 0;
        let layers = self
            .widths
            .windows(2)
            .map(|w| {
                let shape = LayerShape { fan_out: w[1], fan_in: w[0], offset };
                offset += w[0] * w[1];
                shape
            })
            .collect();
        ParamLayout { layers, len: offset }
    }

    pub fn num_params(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1]).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub fan_out: usize,
    pub fan_in: usize,
    pub offset: usize,
}

impl LayerShape {
    pub fn len(&self) -> usize {
        self.fan_in * self.fan_out
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Maps `(layer, neuron)` to contiguous slices of the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    layers: Vec<LayerShape>,
    len: usize,
}

impl ParamLayout {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn layer_range(&self, layer: usize) -> Range<usize> {
        let l = self.layers[layer];
        l.offset..l.offset + l.len()
    }

    pub fn neuron_range(&self, layer: usize, neuron: usize) -> Range<usize> {
        let l = self.layers[layer];
        let start = l.offset + neuron * l.fan_in;
        start..start + l.fan_in
    }
}

/// Flat weights plus the layout that interprets them.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: ParamLayout,
}

impl ParamVector {
    pub fn new(layout: ParamLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::DimensionMismatch { expected: layout.len(), got: values.len() });
        }
        Ok(Self { values, layout })
    }

    pub fn zeros(layout: ParamLayout) -> Self {
        Self { values: vec![0.0; layout.len()], layout }
    }

    /// Same layout, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.layout.clone(), values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `W_i` as a `fan_out × fan_in` view.
    pub fn layer(&self, i: usize) -> ArrayView2<'_, f64> {
        let l = self.layout.layers[i];
        ArrayView2::from_shape((l.fan_out, l.fan_in), &self.values[self.layout.layer_range(i)]).unwrap()
    }

    pub fn layer_mut(&mut self, i: usize) -> ArrayViewMut2<'_, f64> {
        let l = self.layout.layers[i];
        let range = self.layout.layer_range(i);
        ArrayViewMut2::from_shape((l.fan_out, l.fan_in), &mut self.values[range]).unwrap()
    }

    pub fn neuron(&self, layer: usize, neuron: usize) -> &[f64] {
        &self.values[self.layout.neuron_range(layer, neuron)]
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

fn check_params(spec: &NetSpec, theta: &ParamVector) -> Result<()> {
    if theta.layout != spec.layout() {
        return Err(Error::DimensionMismatch { expected: spec.num_params(), got: theta.len() });
    }
    Ok(())
}

fn check_input(spec: &NetSpec, x: &ArrayView2<f64>) -> Result<()> {
    if x.ncols() != spec.input_dim() {
        return Err(Error::DimensionMismatch { expected: spec.input_dim(), got: x.ncols() });
    }
    Ok(())
}

/// Every intermediate quantity of one forward pass over a batch.
#[derive(Clone, Debug)]
pub struct Forward<'x> {
    input: ArrayView2<'x, f64>,
    pre: Vec<Array2<f64>>,
    hidden: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl<'x> Forward<'x> {
    pub fn num_layers(&self) -> usize {
        self.pre.len()
    }

    /// `a_{i−1}`, the input consumed by layer `i` (the data for `i = 0`).
    pub fn layer_input(&self, i: usize) -> ArrayView2<'_, f64> {
        if i == 0 {
            self.input.view()
        } else {
            self.hidden[i - 1].view()
        }
    }

    /// `s_i = a_{i−1} W_iᵀ`, one row per example.
    pub fn pre_activation(&self, i: usize) -> &Array2<f64> {
        &self.pre[i]
    }

    /// `a_i` for a hidden layer `i`.
    pub fn hidden(&self, i: usize) -> &Array2<f64> {
        &self.hidden[i]
    }

    pub fn logits(&self) -> &Array2<f64> {
        self.pre.last().unwrap()
    }

    /// Head output: probabilities for softmax, logits for identity.
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

fn relu(s: &Array2<f64>) -> Array2<f64> {
    s.mapv(|v| v.max(0.0))
}

pub(crate) fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
    p
}

/// Runs the network on every row of `x`, keeping all intermediates.
pub fn forward<'x>(spec: &NetSpec, theta: &ParamVector, x: ArrayView2<'x, f64>) -> Result<Forward<'x>> {
    check_params(spec, theta)?;
    check_input(spec, &x)?;
    let layers = spec.num_layers();
    let mut pre = Vec::with_capacity(layers);
    let mut hidden = Vec::with_capacity(layers - 1);
    for i in 0..layers {
        let a = if i == 0 { x.view() } else { hidden.last().map(|h: &Array2<f64>| h.view()).unwrap() };
        let s = a.dot(&theta.layer(i).t());
        if i + 1 < layers {
            hidden.push(relu(&s));
        }
        pre.push(s);
    }
    let output = match spec.head {
        Head::Softmax => softmax_rows(pre.last().unwrap()),
        Head::Identity => pre.last().unwrap().clone(),
    };
    Ok(Forward { input: x, pre, hidden, output })
}

/// Logits only, without retaining intermediates.
pub fn logits(spec: &NetSpec, theta: &ParamVector, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_params(spec, theta)?;
    check_input(spec, &x)?;
    let layers = spec.num_layers();
    let mut a = x.dot(&theta.layer(0).t());
    for i in 1..layers {
        a.mapv_inplace(|v| v.max(0.0));
        a = a.dot(&theta.layer(i).t());
    }
    Ok(a)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Misclassification rate, `1 − accuracy`.
    ZeroOne,
    /// Cross-entropy of the softmax of the logits.
    Categorical,
    /// `(1/c) Σ (f(x)_i − y_i)²` against one-hot targets, on the head output.
    Mse,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::ZeroOne => "zero-one",
            LossKind::Categorical => "categorical",
            LossKind::Mse => "mse",
        }
    }
}

fn check_labels(labels: &[usize], n: usize, classes: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: labels.len() });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    Ok(())
}

pub(crate) fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose largest logit is not the label.
pub(crate) fn zero_one_from_logits(logits: &Array2<f64>, labels: &[usize]) -> f64 {
    let wrong = logits.rows().into_iter().zip(labels).filter(|(row, &y)| argmax(row.view()) != y).count();
    wrong as f64 / labels.len() as f64
}

pub(crate) fn categorical_from_logits(logits: &Array2<f64>, labels: &[usize]) -> f64 {
    let total: f64 = logits
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &y)| {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - row[y]
        })
        .sum();
    total / labels.len() as f64
}

fn mse(output: &Array2<f64>, labels: &[usize]) -> f64 {
    let c = output.ncols() as f64;
    let total: f64 = output
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &y)| {
            row.iter()
                .enumerate()
                .map(|(i, &v)| {
                    let t = if i == y { 1.0 } else { 0.0 };
                    (v - t) * (v - t)
                })
                .sum::<f64>()
                / c
        })
        .sum();
    total / labels.len() as f64
}

/// Mean loss of a forward pass over the batch.
pub fn loss(kind: LossKind, fwd: &Forward, labels: &[usize]) -> Result<f64> {
    check_labels(labels, fwd.output.nrows(), fwd.output.ncols())?;
    Ok(match kind {
        LossKind::ZeroOne => zero_one_from_logits(fwd.logits(), labels),
        LossKind::Categorical => categorical_from_logits(fwd.logits(), labels),
        LossKind::Mse => mse(&fwd.output, labels),
    })
}

/// `∂ mean-loss / ∂ s_l` for each row.
fn output_delta(spec: &NetSpec, fwd: &Forward, labels: &[usize], kind: LossKind) -> Result<Array2<f64>> {
    let n = labels.len() as f64;
    match kind {
        LossKind::ZeroOne => Err(Error::NotDifferentiable("zero-one")),
        LossKind::Categorical => {
            let mut d = softmax_rows(fwd.logits());
            for (mut row, &y) in d.rows_mut().into_iter().zip(labels) {
                row[y] -= 1.0;
            }
            d.mapv_inplace(|v| v / n);
            Ok(d)
        }
        LossKind::Mse => {
            let c = fwd.output.ncols() as f64;
            let mut g = fwd.output.clone();
            for (mut row, &y) in g.rows_mut().into_iter().zip(labels) {
                row[y] -= 1.0;
            }
            g.mapv_inplace(|v| 2.0 * v / (c * n));
            if spec.head == Head::Softmax {
                let p = &fwd.output;
                for (mut grow, prow) in g.rows_mut().into_iter().zip(p.rows()) {
                    let dot = grow.dot(&prow);
                    grow.zip_mut_with(&prow, |gv, &pv| *gv = pv * (*gv - dot));
                }
            }
            Ok(g)
        }
    }
}

/// Propagates output deltas to every layer: entry `i` is `∂/∂s_i`, one row per
/// example.
pub(crate) fn backprop_deltas(theta: &ParamVector, fwd: &Forward, delta_out: Array2<f64>) -> Vec<Array2<f64>> {
    let layers = fwd.num_layers();
    let mut deltas = vec![Array2::zeros((0, 0)); layers];
    let mut delta = delta_out;
    for i in (0..layers).rev() {
        if i > 0 {
            let mut prev = delta.dot(&theta.layer(i));
            prev.zip_mut_with(&fwd.pre[i - 1], |d, &s| {
                if s <= 0.0 {
                    *d = 0.0;
                }
            });
            deltas[i] = std::mem::replace(&mut delta, prev);
        } else {
            deltas[0] = std::mem::replace(&mut delta, Array2::zeros((0, 0)));
        }
    }
    deltas
}

/// Loss value and gradient of the mean batch loss.
#[derive(Clone, Debug)]
pub struct Gradient {
    pub loss: f64,
    pub grad: ParamVector,
}

/// Reverse-mode gradient of the mean loss over the rows of `x`.
pub fn grad(spec: &NetSpec, theta: &ParamVector, x: ArrayView2<f64>, labels: &[usize], kind: LossKind) -> Result<Gradient> {
    if kind == LossKind::ZeroOne {
        return Err(Error::NotDifferentiable("zero-one"));
    }
    let fwd = forward(spec, theta, x)?;
    let value = loss(kind, &fwd, labels)?;
    let delta_out = output_delta(spec, &fwd, labels, kind)?;
    let deltas = backprop_deltas(theta, &fwd, delta_out);
    let mut g = ParamVector::zeros(theta.layout.clone());
    for (i, d) in deltas.iter().enumerate() {
        let gw = d.t().dot(&fwd.layer_input(i));
        g.layer_mut(i).assign(&gw);
    }
    Ok(Gradient { loss: value, grad: g })
}

/// Mean loss over a whole dataset, evaluated in chunks.
pub fn dataset_loss(spec: &NetSpec, theta: &ParamVector, x: ArrayView2<f64>, labels: &[usize], kind: LossKind) -> Result<f64> {
    const CHUNK: usize = 8192;
    check_labels(labels, x.nrows(), spec.output_dim())?;
    let mut total = 0.0;
    let mut start = 0;
    while start < x.nrows() {
        let end = (start + CHUNK).min(x.nrows());
        let xb = x.slice(s![start..end, ..]);
        let yb = &labels[start..end];
        let part = match kind {
            LossKind::ZeroOne => zero_one_from_logits(&logits(spec, theta, xb)?, yb),
            LossKind::Categorical => categorical_from_logits(&logits(spec, theta, xb)?, yb),
            LossKind::Mse => mse(forward(spec, theta, xb)?.output(), yb),
        };
        total += part * (end - start) as f64;
        start = end;
    }
    Ok(total / x.nrows() as f64)
}

/// Helper for callers that hold rows of a larger matrix.
pub(crate) fn select_rows(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}
