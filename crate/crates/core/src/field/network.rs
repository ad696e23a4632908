use std::collections::BTreeSet;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};

use super::{CoordinateSample, FfmConfig};
use crate::error::{invalid, CoilError, Result};
use crate::geometry::{Coordinate, Geometry};
use crate::tomo::Sinogram;

/// Shape of `N_φ`.
///
/// Hidden layers are numbered from 1. A layer index `k` in `skip_layers`
/// means the input `γ(v)` is concatenated onto the output of hidden layer
/// `k` before it enters layer `k + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_width: usize,
    pub num_hidden_layers: usize,
    pub penultimate_width: usize,
    pub skip_layers: BTreeSet<usize>,
}

impl MlpConfig {
    /// Skip after every even hidden layer short of the last one.
    pub fn even_skips(num_hidden_layers: usize) -> BTreeSet<usize> {
        (2..num_hidden_layers.saturating_sub(1)).step_by(2).collect()
    }

    /// 16 ReLU layers of 256, a 128-wide linear layer and 7 skips.
    pub fn paper(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_width: 256,
            num_hidden_layers: 16,
            penultimate_width: 128,
            skip_layers: Self::even_skips(16),
        }
    }

    /// 4 ReLU layers of 64, a 32-wide linear layer and one skip.
    pub fn desk(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_width: 64,
            num_hidden_layers: 4,
            penultimate_width: 32,
            skip_layers: Self::even_skips(4),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_width == 0 || self.num_hidden_layers == 0 || self.penultimate_width == 0 {
            return Err(invalid("MLP widths and depth must be positive"));
        }
        for &k in &self.skip_layers {
            if k < 2 || k % 2 != 0 || k + 2 > self.num_hidden_layers {
                return Err(invalid(format!(
                    "skip layer {k} not in {{2, 4, ..., {}}}",
                    self.num_hidden_layers.saturating_sub(2)
                )));
            }
        }
        Ok(())
    }

    /// `(rows, cols)` of every affine layer, output head last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.num_hidden_layers + 2);
        shapes.push((self.hidden_width, self.input_dim));
        for k in 1..self.num_hidden_layers {
            let extra = if self.skip_layers.contains(&k) { self.input_dim } else { 0 };
            shapes.push((self.hidden_width, self.hidden_width + extra));
        }
        shapes.push((self.penultimate_width, self.hidden_width));
        shapes.push((1, self.penultimate_width));
        shapes
    }

    pub fn num_params(&self) -> usize {
        self.layer_shapes().iter().map(|(r, c)| r * c + r).sum()
    }
}

/// One affine layer, `y = W x + b` with `W` of shape `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { weights: Array2::zeros((rows, cols)), bias: Array1::zeros(rows) }
    }
}

/// A trained (or initialised) measurement field `M_φ`.
///
/// Parameters are flattened layer by layer, weights row-major then bias;
/// gradients use the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralField {
    pub ffm: FfmConfig,
    pub mlp: MlpConfig,
    /// Hidden layers, then the penultimate layer, then the output head.
    pub layers: Vec<Dense>,
}

/// Activations kept from the forward pass for backpropagation.
struct Tape {
    /// Input matrix of each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Array2<f64>>,
    output: Array1<f64>,
}

impl NeuralField {
    pub fn zeros(ffm: FfmConfig, mlp: MlpConfig) -> Result<Self> {
        mlp.validate()?;
        if mlp.input_dim != ffm.output_dim() {
            return Err(invalid(format!(
                "MLP input dim {} does not match FFM output dim {}",
                mlp.input_dim,
                ffm.output_dim()
            )));
        }
        let layers = mlp.layer_shapes().into_iter().map(|(r, c)| Dense::zeros(r, c)).collect();
        Ok(Self { ffm, mlp, layers })
    }

    pub fn head(&self) -> &Dense {
        self.layers.last().expect("field has an output head")
    }

    pub fn head_mut(&mut self) -> &mut Dense {
        self.layers.last_mut().expect("field has an output head")
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(invalid(format!("expected {} parameters, got {}", self.num_params(), values.len())));
        }
        for (p, v) in self.params_mut().zip(values) {
            *p = *v;
        }
        Ok(())
    }

    /// `γ(v)` for a batch of coordinates, one row each.
    pub fn encode(&self, coords: impl ExactSizeIterator<Item = Coordinate>) -> Array2<f64> {
        let d = self.ffm.output_dim();
        let mut out = Array2::zeros((coords.len(), d));
        for (mut row, c) in out.rows_mut().into_iter().zip(coords) {
            self.ffm.encode_into(&c, row.as_slice_mut().expect("standard layout"));
        }
        out
    }

    fn run(&self, features: ArrayView2<f64>, keep: bool) -> Result<Tape> {
        let h = self.mlp.num_hidden_layers;
        let mut inputs = Vec::new();
        let mut pre = Vec::new();
        let mut act = features.to_owned();
        for (idx, layer) in self.layers.iter().enumerate() {
            // layer idx is hidden layer idx + 1; skip after hidden layer idx
            if idx > 0 && idx < h && self.mlp.skip_layers.contains(&idx) {
                act = concatenate![Axis(1), act, features];
            }
            let mut z = act.dot(&layer.weights.t());
            z += &layer.bias;
            if z.iter().any(|v| !v.is_finite()) {
                return Err(CoilError::NumericOverflow { layer: idx });
            }
            let next = if idx < h { z.mapv(|v| v.max(0.0)) } else { z.clone() };
            if keep {
                inputs.push(act);
                if idx < h {
                    pre.push(z);
                }
            }
            act = next;
        }
        let output = act.column(0).to_owned();
        Ok(Tape { inputs, pre, output })
    }

    /// Outputs for a batch of pre-encoded features.
    pub fn forward_features(&self, features: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(self.run(features, false)?.output)
    }

    /// Sum over the batch of `scale · (M(v) − r)²` and its gradient.
    ///
    /// `scale` is applied to every term, so passing `1/N` for a chunk of a
    /// batch of size `N` lets callers accumulate chunk results.
    pub(crate) fn loss_and_grad_features(
        &self,
        features: ArrayView2<f64>,
        targets: &[f64],
        scale: f64,
    ) -> Result<(f64, Vec<Dense>)> {
        let tape = self.run(features, true)?;
        let resid = &tape.output - &Array1::from(targets.to_vec());
        let loss = scale * resid.iter().map(|r| r * r).sum::<f64>();

        let h = self.mlp.num_hidden_layers;
        let width = self.mlp.hidden_width;
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        // dL/d(layer output), shape (N, out)
        let mut delta = (resid * (2.0 * scale)).insert_axis(Axis(1));
        for idx in (0..self.layers.len()).rev() {
            if idx < h {
                let mask = tape.pre[idx].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                delta = delta * mask;
            }
            let input = &tape.inputs[idx];
            let gw = delta.t().dot(input);
            let gb = delta.sum_axis(Axis(0));
            grads.push(Dense { weights: gw, bias: gb });
            if idx > 0 {
                let d_in = delta.dot(&self.layers[idx].weights);
                // drop the γ(v) columns appended by a skip
                delta = if idx < h && self.mlp.skip_layers.contains(&idx) {
                    d_in.slice(s![.., ..width]).to_owned()
                } else {
                    d_in
                };
            }
        }
        grads.reverse();
        Ok((loss, grads))
    }
}

pub(crate) fn flatten(grads: &[Dense]) -> Vec<f64> {
    let mut out = Vec::new();
    for g in grads {
        out.extend(g.weights.iter());
        out.extend(g.bias.iter());
    }
    out
}

pub fn field_forward(field: &NeuralField, v: &Coordinate) -> Result<f64> {
    let features = field.encode(std::iter::once(*v));
    Ok(field.forward_features(features.view())?[0])
}

/// Mean squared error over `batch` and its exact gradient with respect to
/// every parameter, flattened in [`NeuralField::params`] order.
pub fn field_loss_and_grad(field: &NeuralField, batch: &[CoordinateSample]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(invalid("loss needs a nonempty batch"));
    }
    let features = field.encode(batch.iter().map(|s| s.coordinate));
    let targets: Vec<f64> = batch.iter().map(|s| s.response).collect();
    let (loss, grads) = field.loss_and_grad_features(features.view(), &targets, 1.0 / batch.len() as f64)?;
    Ok((loss, flatten(&grads)))
}

/// Rows per forward chunk when querying many coordinates.
const QUERY_CHUNK: usize = 4096;

/// Evaluate the field at every coordinate and assemble a sinogram on
/// `target_geometry` (the coordinates must be in its view-major order).
pub fn query_field(field: &NeuralField, coordinates: &[Coordinate], target_geometry: &Geometry) -> Result<Sinogram> {
    let expected = target_geometry.num_views() * target_geometry.num_detectors();
    if coordinates.len() != expected {
        return Err(invalid(format!(
            "{} coordinates do not fill a {}x{} geometry",
            coordinates.len(),
            target_geometry.num_views(),
            target_geometry.num_detectors()
        )));
    }
    let mut responses = Vec::with_capacity(expected);
    for chunk in coordinates.chunks(QUERY_CHUNK) {
        let features = field.encode(chunk.iter().copied());
        responses.extend(field.forward_features(features.view())?);
    }
    Sinogram::new(target_geometry.clone(), responses)
}
