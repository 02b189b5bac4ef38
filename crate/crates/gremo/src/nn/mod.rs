//! From-scratch CNN engine: layer specs, parameter store, forward/backward
//! passes, loss, optimizer, augmentation, training loop, and model files.
//!
//! All math is plain f64 on row-major tensors. Weight values are kept exactly
//! representable in f32 because model files store f32; a freshly initialized
//! model therefore survives a save/load round trip bit for bit.

pub mod adam;
pub mod augment;
pub mod io;
pub mod layers;
pub mod loss;
pub mod train;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

pub use layers::{layer_backward, layer_forward, ForwardCache};

/// One layer of the network. Spatial tensors are [height, width, channels].
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    Flatten,
    Dense {
        out: usize,
    },
    Dropout {
        rate: f64,
    },
    Softmax,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Softmax => "softmax",
        }
    }

    fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Dense { .. })
    }
}

/// Network architecture: input volume, class count, ordered layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub input_shape: [usize; 3],
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    /// Checks the layer chain and returns each layer's output shape.
    ///
    /// The task is fixed three-way classification, so `num_classes` must be 3
    /// and the final layer must be softmax over exactly that many values.
    pub fn validate(&self) -> Result<Vec<Vec<usize>>> {
        if self.num_classes != 3 {
            return Err(Error::InvalidArg(format!(
                "num_classes must be 3, got {}",
                self.num_classes
            )));
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidArg("model has no layers".into()));
        }
        let mut shape: Vec<usize> = self.input_shape.to_vec();
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArg(format!(
                "input shape {:?} has a zero extent",
                self.input_shape
            )));
        }
        let mut out_shapes = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let cfg = |msg: String| Error::LayerConfig { layer: i, msg };
            shape = match *layer {
                LayerSpec::Conv {
                    out_channels,
                    kernel: (kh, kw),
                    stride,
                    padding,
                } => {
                    if shape.len() != 3 {
                        return Err(cfg(format!("conv expects a rank-3 input, got {shape:?}")));
                    }
                    if out_channels == 0 || kh == 0 || kw == 0 || stride == 0 {
                        return Err(cfg("conv needs positive channels, kernel, stride".into()));
                    }
                    let (h, w) = (shape[0], shape[1]);
                    if h + 2 * padding < kh || w + 2 * padding < kw {
                        return Err(cfg(format!(
                            "kernel {kh}x{kw} exceeds padded input {h}x{w} (padding {padding})"
                        )));
                    }
                    vec![
                        (h + 2 * padding - kh) / stride + 1,
                        (w + 2 * padding - kw) / stride + 1,
                        out_channels,
                    ]
                }
                LayerSpec::Relu => shape,
                LayerSpec::MaxPool { kernel, stride } => {
                    if shape.len() != 3 {
                        return Err(cfg(format!("maxpool expects a rank-3 input, got {shape:?}")));
                    }
                    if kernel == 0 || stride == 0 {
                        return Err(cfg("maxpool needs positive kernel and stride".into()));
                    }
                    let (h, w) = (shape[0], shape[1]);
                    if h < kernel || w < kernel {
                        return Err(cfg(format!(
                            "pool window {kernel} exceeds input {h}x{w}"
                        )));
                    }
                    vec![(h - kernel) / stride + 1, (w - kernel) / stride + 1, shape[2]]
                }
                LayerSpec::Flatten => vec![shape.iter().product()],
                LayerSpec::Dense { out } => {
                    if shape.len() != 1 {
                        return Err(cfg(format!(
                            "dense expects a flattened rank-1 input, got {shape:?}"
                        )));
                    }
                    if out == 0 {
                        return Err(cfg("dense needs a positive output width".into()));
                    }
                    vec![out]
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(cfg(format!("dropout rate {rate} outside [0, 1)")));
                    }
                    shape
                }
                LayerSpec::Softmax => {
                    if i != last {
                        return Err(cfg("softmax is only valid as the final layer".into()));
                    }
                    if shape.len() != 1 {
                        return Err(cfg(format!("softmax expects a rank-1 input, got {shape:?}")));
                    }
                    shape
                }
            };
            out_shapes.push(shape.clone());
        }
        if !matches!(self.layers[last], LayerSpec::Softmax) {
            return Err(Error::LayerConfig {
                layer: last,
                msg: "the final layer must be softmax".into(),
            });
        }
        if shape != vec![self.num_classes] {
            return Err(Error::LayerConfig {
                layer: last,
                msg: format!(
                    "network ends with shape {shape:?}, expected [{}]",
                    self.num_classes
                ),
            });
        }
        Ok(out_shapes)
    }

    /// Weight and bias shapes for each layer; None for parameterless layers.
    pub fn param_shapes(&self) -> Result<Vec<Option<(Vec<usize>, Vec<usize>)>>> {
        let outs = self.validate()?;
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let input: &[usize] = if i == 0 {
                &self.input_shape
            } else {
                &outs[i - 1]
            };
            shapes.push(match *layer {
                LayerSpec::Conv {
                    out_channels,
                    kernel: (kh, kw),
                    ..
                } => Some((vec![out_channels, kh, kw, input[2]], vec![out_channels])),
                LayerSpec::Dense { out } => Some((vec![out, input[0]], vec![out])),
                _ => None,
            });
        }
        Ok(shapes)
    }
}

/// The architecture used for the full-size emotion classifier: seven 3x3
/// conv blocks (32 32 / 64 64 / 128 128 128) with three 2x2 pools, then
/// 1024- and 512-wide dense layers with dropout 0.5.
pub fn reference_spec() -> ModelSpec {
    use LayerSpec::*;
    let conv = |out_channels| Conv {
        out_channels,
        kernel: (3, 3),
        stride: 1,
        padding: 1,
    };
    let pool = MaxPool { kernel: 2, stride: 2 };
    ModelSpec {
        input_shape: [64, 64, 3],
        num_classes: 3,
        layers: vec![
            conv(32),
            Relu,
            conv(32),
            Relu,
            pool.clone(),
            conv(64),
            Relu,
            conv(64),
            Relu,
            pool.clone(),
            conv(128),
            Relu,
            conv(128),
            Relu,
            conv(128),
            Relu,
            pool,
            Flatten,
            Dense { out: 1024 },
            Relu,
            Dropout { rate: 0.5 },
            Dense { out: 512 },
            Relu,
            Dropout { rate: 0.5 },
            Dense { out: 3 },
            Softmax,
        ],
    }
}

/// Weights and bias for one parameterized layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Tensor,
    pub bias: Tensor,
}

/// Per-layer parameters, indexed in layer order; `None` for layers without
/// parameters. Also reused as the container for gradients and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    pub entries: Vec<Option<LayerParams>>,
}

impl ParamStore {
    /// He-uniform weights (limit sqrt(6 / fan_in)) and zero biases.
    /// Values are rounded through f32 so they match their on-disk form.
    pub fn init(spec: &ModelSpec, rng: &mut ChaCha8Rng) -> Result<ParamStore> {
        let shapes = spec.param_shapes()?;
        let mut entries = Vec::with_capacity(shapes.len());
        for (layer, maybe) in spec.layers.iter().zip(shapes) {
            entries.push(match maybe {
                None => None,
                Some((w_shape, b_shape)) => {
                    let fan_in: usize = match layer {
                        LayerSpec::Conv { .. } => w_shape[1] * w_shape[2] * w_shape[3],
                        LayerSpec::Dense { .. } => w_shape[1],
                        _ => unreachable!(),
                    };
                    let limit = (6.0 / fan_in as f64).sqrt();
                    let n: usize = w_shape.iter().product();
                    let data = (0..n)
                        .map(|_| rng.random_range(-limit..limit) as f32 as f64)
                        .collect();
                    Some(LayerParams {
                        weights: Tensor::new(w_shape, data)?,
                        bias: Tensor::zeros(b_shape),
                    })
                }
            });
        }
        Ok(ParamStore { entries })
    }

    pub fn zeros_like(&self) -> ParamStore {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| {
                    e.as_ref().map(|p| LayerParams {
                        weights: Tensor::zeros(p.weights.shape().to_vec()),
                        bias: Tensor::zeros(p.bias.shape().to_vec()),
                    })
                })
                .collect(),
        }
    }

    /// Elementwise accumulate, used to sum per-sample gradients.
    pub fn add_assign(&mut self, other: &ParamStore) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::Internal(
                "parameter stores have different layer counts".into(),
            ));
        }
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            match (a, b) {
                (None, None) => {}
                (Some(a), Some(b)) => {
                    if a.weights.shape() != b.weights.shape() || a.bias.shape() != b.bias.shape() {
                        return Err(Error::Internal(
                            "parameter stores have mismatched tensor shapes".into(),
                        ));
                    }
                    for (x, y) in a.weights.data_mut().iter_mut().zip(b.weights.data()) {
                        *x += y;
                    }
                    for (x, y) in a.bias.data_mut().iter_mut().zip(b.bias.data()) {
                        *x += y;
                    }
                }
                _ => {
                    return Err(Error::Internal(
                        "parameter stores disagree on which layers have parameters".into(),
                    ))
                }
            }
        }
        Ok(())
    }
}

/// Runs the network, returning the output and one cache per layer.
/// `training` enables dropout, which then draws its masks from `rng`.
pub fn forward_pass(
    spec: &ModelSpec,
    params: &ParamStore,
    input: &Tensor,
    training: bool,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(Tensor, Vec<ForwardCache>)> {
    if input.shape() != spec.input_shape {
        return Err(Error::ShapeMismatch {
            layer: 0,
            expected: spec.input_shape.to_vec(),
            got: input.shape().to_vec(),
        });
    }
    if params.entries.len() != spec.layers.len() {
        return Err(Error::Internal(format!(
            "parameter store has {} entries for {} layers",
            params.entries.len(),
            spec.layers.len()
        )));
    }
    let mut x = input.clone();
    let mut caches = Vec::with_capacity(spec.layers.len());
    for (i, layer) in spec.layers.iter().enumerate() {
        if layer.has_params() != params.entries[i].is_some() {
            return Err(Error::Internal(format!(
                "layer {i} ({}) and parameter store disagree",
                layer.kind()
            )));
        }
        let (y, cache) = layer_forward(
            layer,
            params.entries[i].as_ref(),
            &x,
            training,
            rng.as_deref_mut(),
        )
        .map_err(|e| e.with_layer(i))?;
        caches.push(cache);
        x = y;
    }
    Ok((x, caches))
}

/// Backpropagates from the gradient at the softmax input (the logits), as
/// produced by the cross-entropy loss, and returns per-layer parameter
/// gradients. The final softmax layer is folded into that loss gradient and
/// is skipped here.
pub fn backward_pass(
    spec: &ModelSpec,
    params: &ParamStore,
    caches: &[ForwardCache],
    grad_logits: &Tensor,
) -> Result<ParamStore> {
    if caches.len() != spec.layers.len() {
        return Err(Error::Internal(format!(
            "{} caches for {} layers",
            caches.len(),
            spec.layers.len()
        )));
    }
    if !matches!(spec.layers.last(), Some(LayerSpec::Softmax)) {
        return Err(Error::Internal(
            "backward_pass expects a softmax-terminated network".into(),
        ));
    }
    let mut grads = params.zeros_like();
    let mut g = grad_logits.clone();
    for i in (0..spec.layers.len() - 1).rev() {
        let (gin, gparams) = layer_backward(
            &spec.layers[i],
            params.entries[i].as_ref(),
            &caches[i],
            &g,
        )
        .map_err(|e| e.with_layer(i))?;
        grads.entries[i] = gparams;
        g = gin;
    }
    Ok(grads)
}

/// A trained network ready for inference.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub spec: ModelSpec,
    pub params: ParamStore,
}

impl Classifier {
    pub fn new(spec: ModelSpec, params: ParamStore) -> Result<Classifier> {
        let shapes = spec.param_shapes()?;
        if params.entries.len() != shapes.len() {
            return Err(Error::WeightsMismatch(format!(
                "{} parameter entries for {} layers",
                params.entries.len(),
                shapes.len()
            )));
        }
        for (i, (entry, expected)) in params.entries.iter().zip(&shapes).enumerate() {
            match (entry, expected) {
                (None, None) => {}
                (Some(p), Some((w, b))) => {
                    if p.weights.shape() != &w[..] || p.bias.shape() != &b[..] {
                        return Err(Error::WeightsMismatch(format!(
                            "layer {i}: expected weights {w:?} bias {b:?}, got {:?} {:?}",
                            p.weights.shape(),
                            p.bias.shape()
                        )));
                    }
                }
                _ => {
                    return Err(Error::WeightsMismatch(format!(
                        "layer {i}: parameter presence does not match the layer kind"
                    )))
                }
            }
        }
        Ok(Classifier { spec, params })
    }

    /// Class probabilities for one preprocessed face, inference mode.
    pub fn predict_probs(&self, input: &Tensor) -> Result<[f64; 3]> {
        let (out, _) = forward_pass(&self.spec, &self.params, input, false, None)?;
        let d = out.data();
        if d.len() != 3 {
            return Err(Error::Internal(format!(
                "classifier produced {} outputs, expected 3",
                d.len()
            )));
        }
        Ok([d[0], d[1], d[2]])
    }
}

/// Fresh classifier with seeded He-uniform initialization.
pub fn init_classifier(spec: ModelSpec, seed: u64) -> Result<Classifier> {
    let mut rng = rng::stream_rng(seed, rng::STREAM_INIT, 0);
    let params = ParamStore::init(&spec, &mut rng)?;
    Classifier::new(spec, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> ModelSpec {
        ModelSpec {
            input_shape: [4, 4, 1],
            num_classes: 3,
            layers: vec![
                LayerSpec::Conv {
                    out_channels: 2,
                    kernel: (3, 3),
                    stride: 1,
                    padding: 1,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool { kernel: 2, stride: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { out: 3 },
                LayerSpec::Softmax,
            ],
        }
    }

    #[test]
    fn validate_reports_shapes_along_the_chain() {
        let shapes = tiny_spec().validate().unwrap();
        assert_eq!(
            shapes,
            vec![
                vec![4, 4, 2],
                vec![4, 4, 2],
                vec![2, 2, 2],
                vec![8],
                vec![3],
                vec![3],
            ]
        );
    }

    #[test]
    fn validate_rejects_misplaced_softmax_and_bad_ends() {
        let mut spec = tiny_spec();
        spec.layers.insert(1, LayerSpec::Softmax);
        assert!(matches!(
            spec.validate(),
            Err(Error::LayerConfig { layer: 1, .. })
        ));

        let mut spec = tiny_spec();
        spec.layers.pop();
        assert!(spec.validate().is_err());

        let mut spec = tiny_spec();
        spec.num_classes = 4;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn validate_rejects_oversized_windows() {
        let mut spec = tiny_spec();
        spec.layers[2] = LayerSpec::MaxPool { kernel: 9, stride: 2 };
        assert!(matches!(
            spec.validate(),
            Err(Error::LayerConfig { layer: 2, .. })
        ));
    }

    #[test]
    fn reference_spec_is_valid_and_ends_in_three_classes() {
        let spec = reference_spec();
        let shapes = spec.validate().unwrap();
        assert_eq!(shapes.last().unwrap(), &vec![3]);
        // three pools: 64 -> 32 -> 16 -> 8 before flattening
        assert_eq!(shapes[16], vec![8, 8, 128]);
        assert_eq!(shapes[17], vec![8 * 8 * 128]);
    }

    #[test]
    fn param_shapes_follow_the_channel_chain() {
        let shapes = tiny_spec().param_shapes().unwrap();
        assert_eq!(
            shapes[0],
            Some((vec![2, 3, 3, 1], vec![2]))
        );
        assert_eq!(shapes[4], Some((vec![3, 8], vec![3])));
        assert!(shapes[1].is_none());
    }

    #[test]
    fn init_draws_within_he_limit_and_zero_biases() {
        let spec = tiny_spec();
        let mut rng = crate::rng::stream_rng(9, crate::rng::STREAM_INIT, 0);
        let params = ParamStore::init(&spec, &mut rng).unwrap();
        let conv = params.entries[0].as_ref().unwrap();
        let limit = (6.0f64 / 9.0).sqrt();
        assert!(conv.weights.data().iter().all(|w| w.abs() <= limit));
        assert!(conv.bias.data().iter().all(|&b| b == 0.0));
        // not all equal: the draw actually happened
        let first = conv.weights.data()[0];
        assert!(conv.weights.data().iter().any(|&w| w != first));
    }

    #[test]
    fn forward_pass_rejects_wrong_input_shape() {
        let spec = tiny_spec();
        let params = ParamStore::init(&spec, &mut crate::rng::stream_rng(1, 1, 0)).unwrap();
        let bad = Tensor::zeros(vec![5, 4, 1]);
        assert!(matches!(
            forward_pass(&spec, &params, &bad, false, None),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn classifier_outputs_a_distribution() {
        let c = init_classifier(tiny_spec(), 11).unwrap();
        let input = Tensor::filled(vec![4, 4, 1], 0.5);
        let p = c.predict_probs(&input).unwrap();
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x > 0.0));
    }
}
