//! Layer-sequence descriptions and the fixed per-dataset architectures.

use serde::{Deserialize, Serialize};

use crate::data::DatasetId;
use crate::error::{Error, Result};

/// One layer of a sequential network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
        stride: usize,
    },
    MaxPool2d {
        size: usize,
        stride: usize,
    },
    Relu,
    Dropout {
        p: f64,
    },
    Flatten,
    Dense {
        inputs: usize,
        outputs: usize,
    },
}

impl LayerSpec {
    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, padding: usize) -> Self {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            padding,
            stride: 1,
        }
    }

    pub fn pool2() -> Self {
        LayerSpec::MaxPool2d { size: 2, stride: 2 }
    }

    pub fn dropout(p: f64) -> Self {
        LayerSpec::Dropout { p }
    }

    pub fn dense(inputs: usize, outputs: usize) -> Self {
        LayerSpec::Dense { inputs, outputs }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. })
    }

    /// Weight and bias shapes, if the layer is trainable.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => Some((
                vec![out_channels, in_channels, kernel, kernel],
                vec![out_channels],
            )),
            LayerSpec::Dense { inputs, outputs } => Some((vec![outputs, inputs], vec![outputs])),
            _ => None,
        }
    }

    /// Fan-in used by weight initialisation.
    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv2d {
                in_channels, kernel, ..
            } => in_channels * kernel * kernel,
            LayerSpec::Dense { inputs, .. } => inputs,
            _ => 0,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } => {
                if kernel % 2 == 0 || in_channels == 0 || out_channels == 0 || stride == 0 {
                    return Err(Error::InvalidArgument(format!("bad conv layer {self:?}")));
                }
            }
            LayerSpec::MaxPool2d { size, stride } => {
                if size == 0 || stride == 0 {
                    return Err(Error::InvalidArgument(format!("bad pool layer {self:?}")));
                }
            }
            LayerSpec::Dropout { p } => {
                if !(0.0..1.0).contains(&p) {
                    return Err(Error::InvalidArgument(format!("dropout p={p} not in [0,1)")));
                }
            }
            LayerSpec::Dense { inputs, outputs } => {
                if inputs == 0 || outputs == 0 {
                    return Err(Error::InvalidArgument(format!("bad dense layer {self:?}")));
                }
            }
            LayerSpec::Relu | LayerSpec::Flatten => {}
        }
        Ok(())
    }

    /// Output sample shape for a given input sample shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.validate()?;
        let mismatch = || Error::Shape(format!("layer {self:?} cannot take input {input:?}"));
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                padding,
                stride,
            } => {
                let &[c, h, w] = input else {
                    return Err(mismatch());
                };
                if c != in_channels || h + 2 * padding < kernel || w + 2 * padding < kernel {
                    return Err(mismatch());
                }
                Ok(vec![
                    out_channels,
                    (h + 2 * padding - kernel) / stride + 1,
                    (w + 2 * padding - kernel) / stride + 1,
                ])
            }
            LayerSpec::MaxPool2d { size, stride } => {
                let &[c, h, w] = input else {
                    return Err(mismatch());
                };
                if h < size || w < size {
                    return Err(mismatch());
                }
                Ok(vec![c, (h - size) / stride + 1, (w - size) / stride + 1])
            }
            LayerSpec::Relu | LayerSpec::Dropout { .. } => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense { inputs, outputs } => {
                if input != [inputs] {
                    return Err(mismatch());
                }
                Ok(vec![outputs])
            }
        }
    }
}

/// A sequential network: input sample shape, layers, and class count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub class_count: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input_shape: Vec<usize>, class_count: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = Self {
            input_shape,
            class_count,
            layers,
        };
        spec.shape_check()?;
        Ok(spec)
    }

    /// Propagates shapes through every layer. Returns the output sample shape
    /// of each layer; fails unless the last one is `[class_count]`.
    pub fn shape_check(&self) -> Result<Vec<Vec<usize>>> {
        if self.class_count < 2 {
            return Err(Error::InvalidArgument("need at least two classes".into()));
        }
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut current = self.input_shape.clone();
        for layer in &self.layers {
            current = layer.output_shape(&current)?;
            shapes.push(current.clone());
        }
        if current != [self.class_count] {
            return Err(Error::Shape(format!(
                "network ends in {current:?}, expected [{}]",
                self.class_count
            )));
        }
        if !matches!(self.layers.last(), Some(LayerSpec::Dense { .. })) {
            return Err(Error::Shape("last layer must be dense".into()));
        }
        Ok(shapes)
    }

    /// Index of the final dense layer; its input is the penultimate feature vector.
    pub fn final_dense_index(&self) -> usize {
        self.layers
            .iter()
            .rposition(|l| matches!(l, LayerSpec::Dense { .. }))
            .expect("shape-checked spec ends in a dense layer")
    }

    /// Width of the penultimate feature vector.
    pub fn penultimate_width(&self) -> usize {
        match self.layers[self.final_dense_index()] {
            LayerSpec::Dense { inputs, .. } => inputs,
            _ => unreachable!(),
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn has_dropout(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l, LayerSpec::Dropout { p } if *p > 0.0))
    }

    /// `(name, shape)` of every trainable tensor, in layer order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            if let Some((w, b)) = layer.param_shapes() {
                out.push((weight_name(i), w));
                out.push((bias_name(i), b));
            }
        }
        out
    }
}

pub fn weight_name(layer: usize) -> String {
    format!("layer{layer}.weight")
}

pub fn bias_name(layer: usize) -> String {
    format!("layer{layer}.bias")
}

/// Which of the two networks of a dataset to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Cnn,
    Mlp,
}

/// Returns the fixed architecture for a dataset.
///
/// The MNIST Digit CNN uses unpadded convolutions followed by a 2x2 max-pool
/// (28 -> 26 -> 24 -> 12, 12*12*20 = 2880) so that the flatten width matches
/// the 2880-wide dense layer. The final dense layer produces raw logits.
pub fn build_architecture(dataset: DatasetId, kind: ModelKind) -> NetworkSpec {
    use LayerSpec::{Flatten, Relu};
    let k = dataset.class_count();
    let layers = match (dataset, kind) {
        (DatasetId::MnistDigit, ModelKind::Cnn) => vec![
            LayerSpec::conv(1, 10, 3, 0),
            Relu,
            LayerSpec::conv(10, 20, 3, 0),
            Relu,
            LayerSpec::pool2(),
            LayerSpec::dropout(0.5),
            Flatten,
            LayerSpec::dense(2880, 128),
            Relu,
            LayerSpec::dropout(0.5),
            LayerSpec::dense(128, k),
        ],
        (DatasetId::MnistFashion, ModelKind::Cnn) => vec![
            LayerSpec::conv(1, 32, 3, 1),
            Relu,
            LayerSpec::pool2(),
            LayerSpec::conv(32, 32, 3, 1),
            Relu,
            LayerSpec::pool2(),
            LayerSpec::conv(32, 64, 3, 1),
            Relu,
            LayerSpec::dropout(0.25),
            LayerSpec::conv(64, 64, 3, 1),
            Relu,
            LayerSpec::dropout(0.25),
            Flatten,
            LayerSpec::dense(3136, 600),
            Relu,
            LayerSpec::dropout(0.5),
            LayerSpec::dense(600, 128),
            Relu,
            LayerSpec::dense(128, k),
        ],
        (DatasetId::Cifar10, ModelKind::Cnn) => vec![
            LayerSpec::conv(3, 32, 3, 1),
            Relu,
            LayerSpec::conv(32, 64, 3, 1),
            Relu,
            LayerSpec::pool2(),
            LayerSpec::conv(64, 128, 3, 1),
            Relu,
            LayerSpec::conv(128, 128, 3, 1),
            Relu,
            LayerSpec::pool2(),
            LayerSpec::dropout(0.5),
            LayerSpec::conv(128, 256, 3, 1),
            Relu,
            LayerSpec::conv(256, 256, 3, 1),
            Relu,
            LayerSpec::pool2(),
            Flatten,
            LayerSpec::dense(4096, 1024),
            Relu,
            LayerSpec::dropout(0.5),
            LayerSpec::dense(1024, 256),
            Relu,
            LayerSpec::dropout(0.5),
            LayerSpec::dense(256, k),
        ],
        (DatasetId::MnistDigit, ModelKind::Mlp) => mlp(&[128, 512, 1024, 128], k),
        (DatasetId::MnistFashion, ModelKind::Mlp) => mlp(&[128, 512, 1024, 512], k),
        (DatasetId::Cifar10, ModelKind::Mlp) => mlp(&[256, 512, 1024, 512], k),
    };
    let input_shape = match kind {
        ModelKind::Cnn => dataset.image_shape().to_vec(),
        ModelKind::Mlp => vec![build_architecture(dataset, ModelKind::Cnn).penultimate_width()],
    };
    NetworkSpec::new(input_shape, k, layers)
        .unwrap_or_else(|e| panic!("built-in {dataset:?} {kind:?} architecture is inconsistent: {e}"))
}

fn mlp(widths: &[usize], classes: usize) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    for pair in widths.windows(2) {
        layers.push(LayerSpec::dense(pair[0], pair[1]));
        layers.push(LayerSpec::Relu);
    }
    layers.push(LayerSpec::dense(*widths.last().unwrap(), classes));
    layers
}
