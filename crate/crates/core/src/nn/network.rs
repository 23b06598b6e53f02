//! Sequential network evaluation with cached activations and exact backprop.

use std::collections::BTreeMap;

use rand::{Rng, RngCore};

use super::gemm::gemm;
use super::kernels::{conv_backward, conv_forward, maxpool_forward, ConvGeom};
use super::spec::{bias_name, weight_name, LayerSpec, NetworkSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// How dropout layers behave during a forward pass.
pub enum DropoutMode<'a> {
    /// Dropout is the identity. Deterministic.
    Off,
    /// Draw fresh Bernoulli keep-masks from the stream, scaling kept units
    /// by `1 / (1 - p)`.
    Sample(&'a mut dyn RngCore),
    /// Reuse the masks recorded in an earlier trace.
    Replay(&'a [Option<Vec<f64>>]),
}

impl DropoutMode<'_> {
    pub fn is_off(&self) -> bool {
        matches!(self, DropoutMode::Off)
    }
}

/// Everything a forward pass produced, kept for backprop and feature extraction.
#[derive(Debug, Clone)]
pub struct ActivationTrace {
    input: Tensor,
    outputs: Vec<Tensor>,
    dropout_masks: Vec<Option<Vec<f64>>>,
    pool_argmax: Vec<Option<Vec<usize>>>,
    final_dense: usize,
}

impl ActivationTrace {
    pub fn input(&self) -> &Tensor {
        &self.input
    }

    /// Output of every layer, in order.
    pub fn layer_outputs(&self) -> &[Tensor] {
        &self.outputs
    }

    pub fn logits(&self) -> &Tensor {
        self.outputs.last().expect("network has layers")
    }

    /// The last hidden layer activation: the input of the final dense layer.
    pub fn penultimate(&self) -> &Tensor {
        self.layer_input(self.final_dense)
    }

    /// Per-layer dropout multipliers (`0` or `1/(1-p)`); `None` where the
    /// layer is not dropout or dropout was off.
    pub fn dropout_masks(&self) -> &[Option<Vec<f64>>] {
        &self.dropout_masks
    }

    pub fn batch_len(&self) -> usize {
        self.input.batch_len()
    }

    fn layer_input(&self, i: usize) -> &Tensor {
        if i == 0 {
            &self.input
        } else {
            &self.outputs[i - 1]
        }
    }
}

/// Deterministic outputs of a forward pass, without the per-layer cache.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub logits: Tensor,
    pub penultimate: Tensor,
}

impl Inference {
    pub fn predictions(&self) -> Vec<usize> {
        (0..self.logits.batch_len())
            .map(|i| Tensor::argmax(self.logits.row(i)))
            .collect()
    }
}

/// Gradients from one backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub input: Option<Tensor>,
    pub params: BTreeMap<String, Tensor>,
}

/// A network specification together with its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    params: BTreeMap<String, Tensor>,
}

const INFER_CHUNK: usize = 256;

impl Network {
    /// Pairs a spec with named weights, checking names and shapes.
    pub fn new(spec: NetworkSpec, params: BTreeMap<String, Tensor>) -> Result<Self> {
        spec.shape_check()?;
        let wanted = spec.param_shapes();
        if wanted.len() != params.len() {
            return Err(Error::Shape(format!(
                "spec has {} weight tensors, got {}",
                wanted.len(),
                params.len()
            )));
        }
        for (name, shape) in &wanted {
            match params.get(name) {
                Some(t) if t.shape() == shape.as_slice() => {}
                Some(t) => {
                    return Err(Error::Shape(format!(
                        "{name}: expected {shape:?}, got {:?}",
                        t.shape()
                    )))
                }
                None => return Err(Error::Shape(format!("missing weight {name}"))),
            }
        }
        Ok(Self { spec, params })
    }

    /// Kaiming-uniform (fan-in, ReLU gain) weights and zero biases.
    pub fn init<R: Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Result<Self> {
        spec.shape_check()?;
        let mut params = BTreeMap::new();
        for (i, layer) in spec.layers.iter().enumerate() {
            if let Some((ws, bs)) = layer.param_shapes() {
                let bound = (6.0 / layer.fan_in() as f64).sqrt();
                let w = Tensor::from_fn(&ws, |_| rng.gen_range(-bound..bound));
                params.insert(weight_name(i), w);
                params.insert(bias_name(i), Tensor::zeros(&bs));
            }
        }
        Self::new(spec, params)
    }

    /// All weights and biases zero.
    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        let params = spec
            .param_shapes()
            .into_iter()
            .map(|(n, s)| (n, Tensor::zeros(&s)))
            .collect();
        Self::new(spec, params)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor> {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut BTreeMap<String, Tensor> {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    /// Replaces one weight tensor, keeping its shape.
    pub fn set_param(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no weight named {name}")))?;
        if slot.shape() != value.shape() {
            return Err(Error::Shape(format!(
                "{name}: expected {:?}, got {:?}",
                slot.shape(),
                value.shape()
            )));
        }
        *slot = value;
        Ok(())
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        if batch.rank() != self.spec.input_shape.len() + 1
            || batch.shape()[1..] != self.spec.input_shape[..]
        {
            return Err(Error::Shape(format!(
                "batch {:?} does not match input shape {:?}",
                batch.shape(),
                self.spec.input_shape
            )));
        }
        Ok(())
    }

    /// Runs the network over a batch (leading dimension = samples), caching
    /// every layer's output.
    pub fn forward(&self, batch: &Tensor, mut mode: DropoutMode<'_>) -> Result<ActivationTrace> {
        self.check_batch(batch)?;
        let n = batch.batch_len();
        let layers = &self.spec.layers;
        let mut outputs: Vec<Tensor> = Vec::with_capacity(layers.len());
        let mut masks = vec![None; layers.len()];
        let mut argmaxes = vec![None; layers.len()];

        for (i, layer) in layers.iter().enumerate() {
            let x = if i == 0 { batch } else { &outputs[i - 1] };
            let sample_shape = &x.shape()[1..];
            let out_sample = layer.output_shape(sample_shape)?;
            let mut out_shape = vec![n];
            out_shape.extend_from_slice(&out_sample);
            let out = match *layer {
                LayerSpec::Conv2d {
                    kernel,
                    padding,
                    stride,
                    ..
                } => {
                    let g = ConvGeom::new(sample_shape, kernel, padding, stride);
                    let mut out = vec![0.0; out_shape.iter().product()];
                    conv_forward(
                        &g,
                        n,
                        x.data(),
                        self.params[&weight_name(i)].data(),
                        self.params[&bias_name(i)].data(),
                        &mut out,
                    );
                    Tensor::from_parts(out_shape, out)
                }
                LayerSpec::MaxPool2d { size, stride } => {
                    let len = out_shape.iter().product();
                    let mut out = vec![0.0; len];
                    let mut am = vec![0usize; len];
                    let (c, h, w) = (sample_shape[0], sample_shape[1], sample_shape[2]);
                    maxpool_forward(n, c, h, w, size, stride, x.data(), &mut out, &mut am);
                    argmaxes[i] = Some(am);
                    Tensor::from_parts(out_shape, out)
                }
                LayerSpec::Relu => {
                    Tensor::from_parts(out_shape, x.data().iter().map(|v| v.max(0.0)).collect())
                }
                LayerSpec::Dropout { p } => {
                    let mask: Option<Vec<f64>> = match &mut mode {
                        DropoutMode::Off => None,
                        DropoutMode::Sample(_) if p == 0.0 => None,
                        DropoutMode::Sample(rng) => {
                            let scale = 1.0 / (1.0 - p);
                            Some(
                                (0..x.len())
                                    .map(|_| if rng.gen::<f64>() < p { 0.0 } else { scale })
                                    .collect(),
                            )
                        }
                        DropoutMode::Replay(saved) => match saved.get(i) {
                            Some(Some(m)) if m.len() == x.len() => Some(m.clone()),
                            Some(None) => None,
                            _ => {
                                return Err(Error::Shape(format!(
                                    "replayed dropout mask for layer {i} does not fit"
                                )))
                            }
                        },
                    };
                    let out = match &mask {
                        Some(m) => x.data().iter().zip(m).map(|(v, s)| v * s).collect(),
                        None => x.data().to_vec(),
                    };
                    masks[i] = mask;
                    Tensor::from_parts(out_shape, out)
                }
                LayerSpec::Flatten => Tensor::from_parts(out_shape, x.data().to_vec()),
                LayerSpec::Dense { inputs, outputs: o } => {
                    let w = self.params[&weight_name(i)].data();
                    let b = self.params[&bias_name(i)].data();
                    let mut out = Vec::with_capacity(n * o);
                    for _ in 0..n {
                        out.extend_from_slice(b);
                    }
                    gemm(n, inputs, o, x.data(), false, w, true, 1.0, &mut out);
                    Tensor::from_parts(out_shape, out)
                }
            };
            outputs.push(out);
        }
        Ok(ActivationTrace {
            input: batch.clone(),
            outputs,
            dropout_masks: masks,
            pool_argmax: argmaxes,
            final_dense: self.spec.final_dense_index(),
        })
    }

    /// Deterministic (dropout off) logits and penultimate features, evaluated
    /// in chunks so large batches do not hold every layer in memory.
    pub fn infer(&self, batch: &Tensor) -> Result<Inference> {
        self.check_batch(batch)?;
        let n = batch.batch_len();
        let k = self.spec.class_count;
        let j = self.spec.penultimate_width();
        let mut logits = Vec::with_capacity(n * k);
        let mut pen = Vec::with_capacity(n * j);
        let mut start = 0;
        while start < n {
            let end = (start + INFER_CHUNK).min(n);
            let idx: Vec<usize> = (start..end).collect();
            let chunk = if start == 0 && end == n {
                batch.clone()
            } else {
                batch.select_rows(&idx)
            };
            let trace = self.forward(&chunk, DropoutMode::Off)?;
            logits.extend_from_slice(trace.logits().data());
            pen.extend_from_slice(trace.penultimate().data());
            start = end;
        }
        Ok(Inference {
            logits: Tensor::from_parts(vec![n, k], logits),
            penultimate: Tensor::from_parts(vec![n, j], pen),
        })
    }

    /// Deterministic class predictions.
    pub fn predict(&self, batch: &Tensor) -> Result<Vec<usize>> {
        Ok(self.infer(batch)?.predictions())
    }

    /// Backpropagates `grad_logits` (`[N, K]`) through a trace produced by
    /// this network. Dropout masks and pooling choices from the trace are reused.
    pub fn backward(
        &self,
        trace: &ActivationTrace,
        grad_logits: &Tensor,
        want_input: bool,
        want_params: bool,
    ) -> Result<Gradients> {
        let n = trace.batch_len();
        if grad_logits.shape() != trace.logits().shape() {
            return Err(Error::Shape(format!(
                "gradient {:?} does not match logits {:?}",
                grad_logits.shape(),
                trace.logits().shape()
            )));
        }
        let layers = &self.spec.layers;
        let first_needed = if want_input {
            0
        } else if want_params {
            layers.iter().position(|l| l.has_params()).unwrap_or(layers.len())
        } else {
            layers.len()
        };
        let mut params = BTreeMap::new();
        let mut grad = grad_logits.data().to_vec();

        for i in (first_needed..layers.len()).rev() {
            let x = trace.layer_input(i);
            let need_dx = i > first_needed || want_input;
            grad = match layers[i] {
                LayerSpec::Conv2d {
                    kernel,
                    padding,
                    stride,
                    out_channels,
                    ..
                } => {
                    let g = ConvGeom::new(&x.shape()[1..], kernel, padding, stride);
                    let w = &self.params[&weight_name(i)];
                    let mut dw = vec![0.0; w.len()];
                    let mut db = vec![0.0; out_channels];
                    let mut dx = if need_dx { vec![0.0; x.len()] } else { Vec::new() };
                    conv_backward(
                        &g,
                        n,
                        x.data(),
                        w.data(),
                        &grad,
                        &mut dw,
                        &mut db,
                        need_dx.then_some(dx.as_mut_slice()),
                    );
                    if want_params {
                        params.insert(weight_name(i), Tensor::from_parts(w.shape().to_vec(), dw));
                        params.insert(bias_name(i), Tensor::from_parts(vec![out_channels], db));
                    }
                    dx
                }
                LayerSpec::MaxPool2d { .. } => {
                    let am = trace.pool_argmax[i].as_ref().expect("pool indices recorded");
                    let mut dx = vec![0.0; x.len()];
                    for (g, &src) in grad.iter().zip(am) {
                        dx[src] += g;
                    }
                    dx
                }
                LayerSpec::Relu => {
                    let out = trace.outputs[i].data();
                    grad.iter()
                        .zip(out)
                        .map(|(g, &o)| if o > 0.0 { *g } else { 0.0 })
                        .collect()
                }
                LayerSpec::Dropout { .. } => match &trace.dropout_masks[i] {
                    Some(m) => grad.iter().zip(m).map(|(g, s)| g * s).collect(),
                    None => grad,
                },
                LayerSpec::Flatten => grad,
                LayerSpec::Dense { inputs, outputs: o } => {
                    let w = self.params[&weight_name(i)].data();
                    if want_params {
                        let mut dw = vec![0.0; o * inputs];
                        gemm(o, n, inputs, &grad, true, x.data(), false, 0.0, &mut dw);
                        let mut db = vec![0.0; o];
                        for row in grad.chunks_exact(o) {
                            for (d, g) in db.iter_mut().zip(row) {
                                *d += g;
                            }
                        }
                        params.insert(weight_name(i), Tensor::from_parts(vec![o, inputs], dw));
                        params.insert(bias_name(i), Tensor::from_parts(vec![o], db));
                    }
                    if need_dx {
                        let mut dx = vec![0.0; n * inputs];
                        gemm(n, o, inputs, &grad, false, w, false, 0.0, &mut dx);
                        dx
                    } else {
                        Vec::new()
                    }
                }
            };
        }
        let input = want_input.then(|| Tensor::from_parts(trace.input.shape().to_vec(), grad));
        Ok(Gradients { input, params })
    }

    /// Gradient of each sample's cross-entropy loss with respect to its own
    /// input (the per-sample losses are summed, so rows do not interact).
    pub fn input_gradient(&self, trace: &ActivationTrace, labels: &[usize]) -> Result<Tensor> {
        let g = softmax_minus_onehot(trace.logits(), labels, 1.0)?;
        Ok(self.backward(trace, &g, true, false)?.input.expect("requested"))
    }

    /// Gradient of the batch-mean cross-entropy loss with respect to every weight.
    pub fn param_gradients(
        &self,
        trace: &ActivationTrace,
        labels: &[usize],
    ) -> Result<BTreeMap<String, Tensor>> {
        let n = trace.batch_len().max(1);
        let g = softmax_minus_onehot(trace.logits(), labels, 1.0 / n as f64)?;
        Ok(self.backward(trace, &g, false, true)?.params)
    }
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Row-wise softmax of a `[N, K]` tensor.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let k = logits.row_len();
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks_exact(k.max(1)) {
        out.extend(softmax(row));
    }
    Tensor::from_parts(logits.shape().to_vec(), out)
}

/// Mean natural-log cross-entropy of `[N, K]` logits against labels.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let k = logits.row_len();
    check_labels(logits, labels)?;
    let mut total = 0.0;
    for (row, &y) in logits.data().chunks_exact(k).zip(labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    Ok(total / labels.len().max(1) as f64)
}

fn check_labels(logits: &Tensor, labels: &[usize]) -> Result<()> {
    let k = logits.row_len();
    if labels.len() != logits.batch_len() {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {}",
            labels.len(),
            logits.batch_len()
        )));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange { label, classes: k });
    }
    Ok(())
}

fn softmax_minus_onehot(logits: &Tensor, labels: &[usize], scale: f64) -> Result<Tensor> {
    check_labels(logits, labels)?;
    let mut g = softmax_rows(logits);
    let k = logits.row_len();
    for (row, &y) in g.data_mut().chunks_exact_mut(k).zip(labels) {
        row[y] -= 1.0;
        row.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(g)
}
