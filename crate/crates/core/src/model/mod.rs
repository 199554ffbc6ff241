//! Source IR: layer topology and binary parameters of a binarized network.

mod file;
mod threshold;

use std::fmt;

use thiserror::Error;

pub use file::{load_model, save_model, FORMAT_VERSION};
pub use threshold::{bn_binarize, canonical, derive_threshold};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {msg}")]
    Schema { path: String, msg: String },
    #[error("{path}: expected {expected} weight bits, got {got}")]
    WeightLength {
        path: String,
        expected: usize,
        got: usize,
    },
    #[error("{path}: sigma must be positive, got {sigma}")]
    Sigma { path: String, sigma: f64 },
    #[error("layers[{layer}]: {msg}")]
    ShapeChain { layer: usize, msg: String },
}

impl ModelError {
    pub(crate) fn at(self, prefix: &str) -> Self {
        let join = |p: String| {
            if p.is_empty() {
                prefix.to_string()
            } else {
                format!("{prefix}.{p}")
            }
        };
        match self {
            ModelError::Schema { path, msg } => ModelError::Schema {
                path: join(path),
                msg,
            },
            ModelError::Sigma { path, sigma } => ModelError::Sigma {
                path: join(path),
                sigma,
            },
            other => other,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Shape {
            height,
            width,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.height == 1 && self.width == 1 {
            write!(f, "{}", self.channels)
        } else {
            write!(f, "{}x{}x{}", self.height, self.width, self.channels)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pool {
    None,
    Or2x2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerKind {
    /// Same-padded, stride-1 binary convolution, optionally followed by
    /// 2x2 OR pooling.
    BinConv { kh: usize, kw: usize, pool: Pool },
    /// Fully connected layer over the flattened `(channel, y, x)` input.
    BinFc { binarize_output: bool },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_maps: usize,
    pub out_maps: usize,
}

impl LayerSpec {
    /// Receptive field size `IF * kh * kw` (input width for fc layers).
    pub fn n_rf(&self) -> usize {
        match self.kind {
            LayerKind::BinConv { kh, kw, .. } => self.in_maps * kh * kw,
            LayerKind::BinFc { .. } => self.in_maps,
        }
    }

    pub fn binarizes(&self) -> bool {
        match self.kind {
            LayerKind::BinConv { .. } => true,
            LayerKind::BinFc { binarize_output } => binarize_output,
        }
    }

    pub fn is_conv(&self) -> bool {
        matches!(self.kind, LayerKind::BinConv { .. })
    }
}

/// Batch-norm record for one output map, including the convolution bias.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchNormParams {
    pub mu: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub beta: f64,
    pub bias: f64,
}

/// Comparison direction applied to the popcount.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Geq,
    Leq,
    Const1,
    Const0,
}

impl Sign {
    pub fn as_str(self) -> &'static str {
        match self {
            Sign::Geq => "GEQ",
            Sign::Leq => "LEQ",
            Sign::Const1 => "CONST1",
            Sign::Const0 => "CONST0",
        }
    }

    pub fn parse(s: &str) -> Option<Sign> {
        Some(match s {
            "GEQ" => Sign::Geq,
            "LEQ" => Sign::Leq,
            "CONST1" => Sign::Const1,
            "CONST0" => Sign::Const0,
            _ => return None,
        })
    }
}

/// Parameters of one output map.
///
/// Weight bit `i` pairs with receptive-field bit `i`, where
/// `i = (if * kh + ky) * kw + kx`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NeuronParams {
    pub weights: Vec<bool>,
    pub thresh: i64,
    pub sign: Sign,
}

impl NeuronParams {
    /// Applies the folded comparison to a popcount value.
    pub fn fire(&self, phi: i64) -> bool {
        match self.sign {
            Sign::Geq => phi >= self.thresh,
            Sign::Leq => phi <= self.thresh,
            Sign::Const1 => true,
            Sign::Const0 => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Layer {
    pub spec: LayerSpec,
    pub neurons: Vec<NeuronParams>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BnnModel {
    pub name: String,
    pub input: Shape,
    pub layers: Vec<Layer>,
}

impl BnnModel {
    /// Builds a model from parts and runs the full validation.
    pub fn new(name: impl Into<String>, input: Shape, layers: Vec<Layer>) -> Result<Self, ModelError> {
        let m = BnnModel {
            name: name.into(),
            input,
            layers,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let s = self.input;
        if s.height == 0 || s.width == 0 || s.channels == 0 {
            return Err(ModelError::Schema {
                path: "input".into(),
                msg: "all dimensions must be >= 1".into(),
            });
        }
        if self.layers.is_empty() {
            return Err(ModelError::Schema {
                path: "layers".into(),
                msg: "model has no layers".into(),
            });
        }
        let last = self.layers.len() - 1;
        let mut cur = s;
        for (i, layer) in self.layers.iter().enumerate() {
            let spec = &layer.spec;
            if spec.out_maps == 0 || spec.in_maps == 0 {
                return Err(ModelError::ShapeChain {
                    layer: i,
                    msg: "in_maps and out_maps must be >= 1".into(),
                });
            }
            match spec.kind {
                LayerKind::BinConv { kh, kw, pool } => {
                    if i == last {
                        return Err(ModelError::ShapeChain {
                            layer: i,
                            msg: "the final layer must be a non-binarizing binfc".into(),
                        });
                    }
                    if kh % 2 == 0 || kw % 2 == 0 {
                        return Err(ModelError::ShapeChain {
                            layer: i,
                            msg: format!("filter size {kh}x{kw} must be odd"),
                        });
                    }
                    if spec.in_maps != cur.channels {
                        return Err(ModelError::ShapeChain {
                            layer: i,
                            msg: format!(
                                "in_maps {} does not match incoming {} channels",
                                spec.in_maps, cur.channels
                            ),
                        });
                    }
                    cur = Shape::new(cur.height, cur.width, spec.out_maps);
                    if pool == Pool::Or2x2 {
                        if cur.height % 2 != 0 || cur.width % 2 != 0 {
                            return Err(ModelError::ShapeChain {
                                layer: i,
                                msg: format!(
                                    "or2x2 pooling needs even dimensions, got {}x{}",
                                    cur.height, cur.width
                                ),
                            });
                        }
                        cur = Shape::new(cur.height / 2, cur.width / 2, cur.channels);
                    }
                }
                LayerKind::BinFc { binarize_output } => {
                    if binarize_output == (i == last) {
                        return Err(ModelError::ShapeChain {
                            layer: i,
                            msg: "exactly the final layer must have binarize_output=false".into(),
                        });
                    }
                    if spec.in_maps != cur.len() {
                        return Err(ModelError::ShapeChain {
                            layer: i,
                            msg: format!(
                                "in_maps {} does not match flattened input width {}",
                                spec.in_maps,
                                cur.len()
                            ),
                        });
                    }
                    cur = Shape::new(1, 1, spec.out_maps);
                }
            }
            if layer.neurons.len() != spec.out_maps {
                return Err(ModelError::Schema {
                    path: format!("layers[{i}].neurons"),
                    msg: format!(
                        "expected {} neurons, got {}",
                        spec.out_maps,
                        layer.neurons.len()
                    ),
                });
            }
            let n_rf = spec.n_rf();
            for (m, n) in layer.neurons.iter().enumerate() {
                if n.weights.len() != n_rf {
                    return Err(ModelError::WeightLength {
                        path: format!("layers[{i}].neurons[{m}].weights"),
                        expected: n_rf,
                        got: n.weights.len(),
                    });
                }
                if spec.binarizes() && canonical(n.thresh, n.sign, n_rf) != (n.thresh, n.sign) {
                    return Err(ModelError::Schema {
                        path: format!("layers[{i}].neurons[{m}]"),
                        msg: format!(
                            "threshold {} {} is not canonical for N_RF={n_rf}",
                            n.sign.as_str(),
                            n.thresh
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    /// Input shape of every layer (the first entry is the model input).
    pub fn layer_inputs(&self) -> Vec<Shape> {
        let mut out = vec![self.input];
        out.extend(self.layer_shapes());
        out.pop();
        out
    }

    /// Output shape of every layer, after pooling.
    pub fn layer_shapes(&self) -> Vec<Shape> {
        let mut cur = self.input;
        self.layers
            .iter()
            .map(|l| {
                cur = match l.spec.kind {
                    LayerKind::BinConv { pool, .. } => {
                        let s = Shape::new(cur.height, cur.width, l.spec.out_maps);
                        match pool {
                            Pool::None => s,
                            Pool::Or2x2 => Shape::new(s.height / 2, s.width / 2, s.channels),
                        }
                    }
                    LayerKind::BinFc { .. } => Shape::new(1, 1, l.spec.out_maps),
                };
                cur
            })
            .collect()
    }

    /// Number of classes scored by the final layer.
    pub fn num_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.spec.out_maps)
    }
}
