//! Per-layer forward and backward passes.
//!
//! Forward returns the output plus a cache holding exactly what backward
//! needs. Backward consumes the cache and the output gradient and returns the
//! input gradient plus parameter gradients for conv and dense layers.

use super::{LayerParams, LayerSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

/// Values saved by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub enum ForwardCache {
    Conv { input: Tensor },
    Relu { input: Tensor },
    MaxPool { input_shape: Vec<usize>, argmax: Vec<usize> },
    Flatten { input_shape: Vec<usize> },
    Dense { input: Tensor },
    /// Survivor scale per element (0 or 1/(1-rate)); None in inference mode.
    Dropout { mask: Option<Vec<f64>> },
    Softmax { output: Tensor },
}

pub fn layer_forward(
    layer: &LayerSpec,
    params: Option<&LayerParams>,
    input: &Tensor,
    training: bool,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(Tensor, ForwardCache)> {
    match *layer {
        LayerSpec::Conv { out_channels, kernel, stride, padding } => {
            let p = params.ok_or_else(|| missing_params("conv"))?;
            conv_forward(out_channels, kernel, stride, padding, p, input)
        }
        LayerSpec::Relu => {
            let out = input.map(|v| if v > 0.0 { v } else { 0.0 });
            Ok((out, ForwardCache::Relu { input: input.clone() }))
        }
        LayerSpec::MaxPool { kernel, stride } => maxpool_forward(kernel, stride, input),
        LayerSpec::Flatten => {
            let out = input.reshape(vec![input.len()])?;
            Ok((out, ForwardCache::Flatten { input_shape: input.shape().to_vec() }))
        }
        LayerSpec::Dense { .. } => {
            let p = params.ok_or_else(|| missing_params("dense"))?;
            dense_forward(p, input)
        }
        LayerSpec::Dropout { rate } => dropout_forward(rate, input, training, rng),
        LayerSpec::Softmax => softmax_forward(input),
    }
}

/// Returns (input gradient, parameter gradients).
pub fn layer_backward(
    layer: &LayerSpec,
    params: Option<&LayerParams>,
    cache: &ForwardCache,
    grad_out: &Tensor,
) -> Result<(Tensor, Option<LayerParams>)> {
    match (layer, cache) {
        (
            &LayerSpec::Conv { out_channels, kernel, stride, padding },
            ForwardCache::Conv { input },
        ) => {
            let p = params.ok_or_else(|| missing_params("conv"))?;
            conv_backward(out_channels, kernel, stride, padding, p, input, grad_out)
        }
        (LayerSpec::Relu, ForwardCache::Relu { input }) => {
            expect_len(input.len(), grad_out)?;
            let data = input
                .data()
                .iter()
                .zip(grad_out.data())
                .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                .collect();
            Ok((Tensor::new(input.shape().to_vec(), data)?, None))
        }
        (&LayerSpec::MaxPool { .. }, ForwardCache::MaxPool { input_shape, argmax }) => {
            expect_len(argmax.len(), grad_out)?;
            let mut gin = Tensor::zeros(input_shape.clone());
            let gd = gin.data_mut();
            for (o, &src) in argmax.iter().enumerate() {
                gd[src] += grad_out.data()[o];
            }
            Ok((gin, None))
        }
        (LayerSpec::Flatten, ForwardCache::Flatten { input_shape }) => {
            Ok((grad_out.reshape(input_shape.clone())?, None))
        }
        (LayerSpec::Dense { .. }, ForwardCache::Dense { input }) => {
            let p = params.ok_or_else(|| missing_params("dense"))?;
            dense_backward(p, input, grad_out)
        }
        (LayerSpec::Dropout { .. }, ForwardCache::Dropout { mask }) => {
            let data: Vec<f64> = match mask {
                Some(m) => {
                    expect_len(m.len(), grad_out)?;
                    grad_out.data().iter().zip(m).map(|(&g, &s)| g * s).collect()
                }
                None => grad_out.data().to_vec(),
            };
            Ok((Tensor::new(grad_out.shape().to_vec(), data)?, None))
        }
        (LayerSpec::Softmax, ForwardCache::Softmax { output }) => {
            expect_len(output.len(), grad_out)?;
            // dL/dx_i = y_i * (g_i - sum_j g_j y_j)
            let dot: f64 = grad_out
                .data()
                .iter()
                .zip(output.data())
                .map(|(&g, &y)| g * y)
                .sum();
            let data = output
                .data()
                .iter()
                .zip(grad_out.data())
                .map(|(&y, &g)| y * (g - dot))
                .collect();
            Ok((Tensor::new(output.shape().to_vec(), data)?, None))
        }
        (layer, _) => Err(Error::CacheMismatch { layer: 0, kind: layer.kind() }),
    }
}

fn missing_params(kind: &str) -> Error {
    Error::Internal(format!("{kind} layer called without parameters"))
}

fn expect_len(expected: usize, grad_out: &Tensor) -> Result<()> {
    if grad_out.len() != expected {
        return Err(Error::ShapeMismatch {
            layer: 0,
            expected: vec![expected],
            got: grad_out.shape().to_vec(),
        });
    }
    Ok(())
}

/// Valid kernel index range so that base + k stays inside [0, extent).
#[inline]
fn kernel_bounds(base: i64, kernel: usize, extent: usize) -> (usize, usize) {
    let lo = (-base).max(0) as usize;
    let hi = (extent as i64 - base).clamp(0, kernel as i64) as usize;
    (lo, hi.max(lo))
}

fn conv_output_shape(
    (kh, kw): (usize, usize),
    stride: usize,
    padding: usize,
    input: &Tensor,
    weights: &Tensor,
) -> Result<(usize, usize, usize)> {
    if weights.rank() != 4 {
        return Err(Error::Internal(format!(
            "conv weights must be rank 4, got {:?}",
            weights.shape()
        )));
    }
    if input.rank() != 3 {
        return Err(Error::LayerConfig {
            layer: 0,
            msg: format!("conv expects a rank-3 input, got {:?}", input.shape()),
        });
    }
    let (h, w, c) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    if weights.shape()[3] != c {
        return Err(Error::ShapeMismatch {
            layer: 0,
            expected: vec![h, w, weights.shape()[3]],
            got: input.shape().to_vec(),
        });
    }
    if h + 2 * padding < kh || w + 2 * padding < kw || stride == 0 {
        return Err(Error::LayerConfig {
            layer: 0,
            msg: format!(
                "kernel {kh}x{kw} stride {stride} does not fit input {h}x{w} with padding {padding}"
            ),
        });
    }
    Ok((
        (h + 2 * padding - kh) / stride + 1,
        (w + 2 * padding - kw) / stride + 1,
        c,
    ))
}

fn conv_forward(
    out_channels: usize,
    (kh, kw): (usize, usize),
    stride: usize,
    padding: usize,
    p: &LayerParams,
    input: &Tensor,
) -> Result<(Tensor, ForwardCache)> {
    if p.weights.rank() != 4
        || p.weights.shape()[..3] != [out_channels, kh, kw]
        || p.bias.shape() != [out_channels]
    {
        return Err(Error::Internal("conv parameters do not match the layer spec".into()));
    }
    let (oh, ow, c_in) = conv_output_shape((kh, kw), stride, padding, input, &p.weights)?;
    let (h, w) = (input.shape()[0], input.shape()[1]);
    let mut out = Tensor::zeros(vec![oh, ow, out_channels]);
    let id = input.data();
    let wd = p.weights.data();
    let bd = p.bias.data();
    let od = out.data_mut();
    let mut oi = 0;
    for oy in 0..oh {
        let base_y = (oy * stride) as i64 - padding as i64;
        let (ky0, ky1) = kernel_bounds(base_y, kh, h);
        for ox in 0..ow {
            let base_x = (ox * stride) as i64 - padding as i64;
            let (kx0, kx1) = kernel_bounds(base_x, kw, w);
            for oc in 0..out_channels {
                let mut acc = bd[oc];
                for ky in ky0..ky1 {
                    let iy = (base_y + ky as i64) as usize;
                    for kx in kx0..kx1 {
                        let ix = (base_x + kx as i64) as usize;
                        let woff = ((oc * kh + ky) * kw + kx) * c_in;
                        let ioff = (iy * w + ix) * c_in;
                        for ci in 0..c_in {
                            acc += id[ioff + ci] * wd[woff + ci];
                        }
                    }
                }
                od[oi] = acc;
                oi += 1;
            }
        }
    }
    Ok((out, ForwardCache::Conv { input: input.clone() }))
}

fn conv_backward(
    out_channels: usize,
    (kh, kw): (usize, usize),
    stride: usize,
    padding: usize,
    p: &LayerParams,
    input: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Option<LayerParams>)> {
    let (oh, ow, c_in) = conv_output_shape((kh, kw), stride, padding, input, &p.weights)?;
    if grad_out.shape() != [oh, ow, out_channels] {
        return Err(Error::ShapeMismatch {
            layer: 0,
            expected: vec![oh, ow, out_channels],
            got: grad_out.shape().to_vec(),
        });
    }
    let (h, w) = (input.shape()[0], input.shape()[1]);
    let mut gin = Tensor::zeros(input.shape().to_vec());
    let mut gw = Tensor::zeros(p.weights.shape().to_vec());
    let mut gb = Tensor::zeros(vec![out_channels]);
    let id = input.data();
    let wd = p.weights.data();
    let god = grad_out.data();
    let gid = gin.data_mut();
    let gwd = gw.data_mut();
    let gbd = gb.data_mut();
    let mut oi = 0;
    for oy in 0..oh {
        let base_y = (oy * stride) as i64 - padding as i64;
        let (ky0, ky1) = kernel_bounds(base_y, kh, h);
        for ox in 0..ow {
            let base_x = (ox * stride) as i64 - padding as i64;
            let (kx0, kx1) = kernel_bounds(base_x, kw, w);
            for oc in 0..out_channels {
                let g = god[oi];
                oi += 1;
                gbd[oc] += g;
                for ky in ky0..ky1 {
                    let iy = (base_y + ky as i64) as usize;
                    for kx in kx0..kx1 {
                        let ix = (base_x + kx as i64) as usize;
                        let woff = ((oc * kh + ky) * kw + kx) * c_in;
                        let ioff = (iy * w + ix) * c_in;
                        for ci in 0..c_in {
                            gwd[woff + ci] += g * id[ioff + ci];
                            gid[ioff + ci] += g * wd[woff + ci];
                        }
                    }
                }
            }
        }
    }
    Ok((gin, Some(LayerParams { weights: gw, bias: gb })))
}

fn maxpool_forward(kernel: usize, stride: usize, input: &Tensor) -> Result<(Tensor, ForwardCache)> {
    if input.rank() != 3 {
        return Err(Error::LayerConfig {
            layer: 0,
            msg: format!("maxpool expects a rank-3 input, got {:?}", input.shape()),
        });
    }
    let (h, w, c) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    if kernel == 0 || stride == 0 || h < kernel || w < kernel {
        return Err(Error::LayerConfig {
            layer: 0,
            msg: format!("pool window {kernel} stride {stride} does not fit input {h}x{w}"),
        });
    }
    let oh = (h - kernel) / stride + 1;
    let ow = (w - kernel) / stride + 1;
    let mut out = Tensor::zeros(vec![oh, ow, c]);
    let mut argmax = vec![0usize; oh * ow * c];
    let id = input.data();
    let od = out.data_mut();
    let mut oi = 0;
    for oy in 0..oh {
        for ox in 0..ow {
            for ci in 0..c {
                // ties keep the first (scan-order) maximum
                let mut best = f64::NEG_INFINITY;
                let mut best_at = 0usize;
                for ky in 0..kernel {
                    let iy = oy * stride + ky;
                    for kx in 0..kernel {
                        let ix = ox * stride + kx;
                        let idx = (iy * w + ix) * c + ci;
                        if id[idx] > best {
                            best = id[idx];
                            best_at = idx;
                        }
                    }
                }
                od[oi] = best;
                argmax[oi] = best_at;
                oi += 1;
            }
        }
    }
    Ok((
        out,
        ForwardCache::MaxPool { input_shape: input.shape().to_vec(), argmax },
    ))
}

fn dense_forward(p: &LayerParams, input: &Tensor) -> Result<(Tensor, ForwardCache)> {
    let (n_out, n_in) = (p.weights.shape()[0], p.weights.shape()[1]);
    if input.rank() != 1 || input.len() != n_in {
        return Err(Error::ShapeMismatch {
            layer: 0,
            expected: vec![n_in],
            got: input.shape().to_vec(),
        });
    }
    let id = input.data();
    let wd = p.weights.data();
    let mut data = Vec::with_capacity(n_out);
    for o in 0..n_out {
        let row = &wd[o * n_in..(o + 1) * n_in];
        let mut acc = p.bias.data()[o];
        for (x, w) in id.iter().zip(row) {
            acc += x * w;
        }
        data.push(acc);
    }
    Ok((
        Tensor::new(vec![n_out], data)?,
        ForwardCache::Dense { input: input.clone() },
    ))
}

fn dense_backward(
    p: &LayerParams,
    input: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Option<LayerParams>)> {
    let (n_out, n_in) = (p.weights.shape()[0], p.weights.shape()[1]);
    if grad_out.len() != n_out {
        return Err(Error::ShapeMismatch {
            layer: 0,
            expected: vec![n_out],
            got: grad_out.shape().to_vec(),
        });
    }
    if input.len() != n_in {
        return Err(Error::ShapeMismatch {
            layer: 0,
            expected: vec![n_in],
            got: input.shape().to_vec(),
        });
    }
    let id = input.data();
    let wd = p.weights.data();
    let god = grad_out.data();
    let mut gw = Tensor::zeros(vec![n_out, n_in]);
    let mut gin = Tensor::zeros(vec![n_in]);
    {
        let gwd = gw.data_mut();
        let gid = gin.data_mut();
        for o in 0..n_out {
            let g = god[o];
            let row = &wd[o * n_in..(o + 1) * n_in];
            let grow = &mut gwd[o * n_in..(o + 1) * n_in];
            for i in 0..n_in {
                grow[i] += g * id[i];
                gid[i] += g * row[i];
            }
        }
    }
    let gb = Tensor::new(vec![n_out], god.to_vec())?;
    Ok((gin, Some(LayerParams { weights: gw, bias: gb })))
}

fn dropout_forward(
    rate: f64,
    input: &Tensor,
    training: bool,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(Tensor, ForwardCache)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::LayerConfig {
            layer: 0,
            msg: format!("dropout rate {rate} outside [0, 1)"),
        });
    }
    if !training {
        return Ok((input.clone(), ForwardCache::Dropout { mask: None }));
    }
    let rng = rng.ok_or_else(|| {
        Error::Internal("dropout in training mode requires an rng".into())
    })?;
    let keep_scale = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..input.len())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep_scale })
        .collect();
    let data = input.data().iter().zip(&mask).map(|(&x, &s)| x * s).collect();
    Ok((
        Tensor::new(input.shape().to_vec(), data)?,
        ForwardCache::Dropout { mask: Some(mask) },
    ))
}

fn softmax_forward(input: &Tensor) -> Result<(Tensor, ForwardCache)> {
    if input.rank() != 1 || input.is_empty() {
        return Err(Error::LayerConfig {
            layer: 0,
            msg: format!("softmax expects a non-empty rank-1 input, got {:?}", input.shape()),
        });
    }
    let max = input.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = input.data().iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let out = Tensor::new(input.shape().to_vec(), exps.iter().map(|e| e / sum).collect())?;
    Ok((out.clone(), ForwardCache::Softmax { output: out }))
}
