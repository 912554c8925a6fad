//! Per-layer forward and backward kernels on HWC activations.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Same,
    Valid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        pad: Padding,
        stride: usize,
    },
    Relu,
    MaxPool {
        window: usize,
        stride: usize,
    },
    Dropout {
        rate: f64,
    },
    Flatten,
    /// Fully connected; flattens its input implicitly.
    Dense {
        width: usize,
    },
    Sigmoid,
    Softmax {
        temperature: f64,
    },
}

impl LayerSpec {
    pub fn conv(out_channels: usize, kernel: usize) -> Self {
        LayerSpec::Conv {
            out_channels,
            kernel,
            pad: Padding::Same,
            stride: 1,
        }
    }

    pub fn max_pool(window: usize) -> Self {
        LayerSpec::MaxPool {
            window,
            stride: window,
        }
    }

    pub fn dense(width: usize) -> Self {
        LayerSpec::Dense { width }
    }

    pub fn dropout(rate: f64) -> Self {
        LayerSpec::Dropout { rate }
    }

    pub fn softmax() -> Self {
        LayerSpec::Softmax { temperature: 1.0 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::Softmax { .. } => "softmax",
        }
    }
}

/// Geometry of a convolution on an `h x w x cin` input.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(h: usize, w: usize, cin: usize, cout: usize, k: usize, stride: usize, pad: Padding) -> Option<Self> {
        let p = match pad {
            Padding::Same => k / 2,
            Padding::Valid => 0,
        };
        if h + 2 * p < k || w + 2 * p < k || stride == 0 {
            return None;
        }
        let ho = (h + 2 * p - k) / stride + 1;
        let wo = (w + 2 * p - k) / stride + 1;
        Some(ConvGeom {
            h,
            w,
            cin,
            cout,
            k,
            stride,
            pad: p,
            ho,
            wo,
        })
    }

    /// Input row/col for an output coordinate and kernel offset, if inside.
    #[inline]
    fn source(&self, o: usize, kk: usize, limit: usize) -> Option<usize> {
        let pos = (o * self.stride + kk) as isize - self.pad as isize;
        (pos >= 0 && (pos as usize) < limit).then_some(pos as usize)
    }
}

/// Weight layout is `[k][k][cin][cout]`.
pub(crate) fn conv_forward(g: &ConvGeom, input: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; g.ho * g.wo * g.cout];
    for oy in 0..g.ho {
        for ox in 0..g.wo {
            let o = (oy * g.wo + ox) * g.cout;
            let acc = &mut out[o..o + g.cout];
            acc.copy_from_slice(bias);
            for ky in 0..g.k {
                let Some(iy) = g.source(oy, ky, g.h) else { continue };
                for kx in 0..g.k {
                    let Some(ix) = g.source(ox, kx, g.w) else { continue };
                    let base_in = (iy * g.w + ix) * g.cin;
                    let base_w = (ky * g.k + kx) * g.cin;
                    for ci in 0..g.cin {
                        let xv = input[base_in + ci];
                        if xv == 0.0 {
                            continue;
                        }
                        let wrow = &weight[(base_w + ci) * g.cout..(base_w + ci + 1) * g.cout];
                        for (a, wv) in acc.iter_mut().zip(wrow) {
                            *a += xv * wv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Returns the input gradient and accumulates weight/bias gradients when
/// `param_grads` is given.
pub(crate) fn conv_backward(
    g: &ConvGeom,
    input: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    mut param_grads: Option<(&mut [f64], &mut [f64])>,
) -> Vec<f64> {
    let mut grad_in = vec![0.0; g.h * g.w * g.cin];
    for oy in 0..g.ho {
        for ox in 0..g.wo {
            let o = (oy * g.wo + ox) * g.cout;
            let go = &grad_out[o..o + g.cout];
            if let Some((_, gb)) = param_grads.as_mut() {
                for (b, v) in gb.iter_mut().zip(go) {
                    *b += v;
                }
            }
            for ky in 0..g.k {
                let Some(iy) = g.source(oy, ky, g.h) else { continue };
                for kx in 0..g.k {
                    let Some(ix) = g.source(ox, kx, g.w) else { continue };
                    let base_in = (iy * g.w + ix) * g.cin;
                    let base_w = (ky * g.k + kx) * g.cin;
                    for ci in 0..g.cin {
                        let wrange = (base_w + ci) * g.cout..(base_w + ci + 1) * g.cout;
                        let wrow = &weight[wrange.clone()];
                        let mut s = 0.0;
                        for (wv, gv) in wrow.iter().zip(go) {
                            s += wv * gv;
                        }
                        grad_in[base_in + ci] += s;
                        if let Some((gw, _)) = param_grads.as_mut() {
                            let xv = input[base_in + ci];
                            if xv != 0.0 {
                                for (dw, gv) in gw[wrange].iter_mut().zip(go) {
                                    *dw += xv * gv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    grad_in
}

/// Returns the pooled output and the flat input index chosen for every
/// output cell. Ties keep the first maximum in scan order.
pub(crate) fn maxpool_forward(
    input: &[f64],
    (h, w, c): (usize, usize, usize),
    window: usize,
    stride: usize,
) -> (Vec<f64>, Vec<usize>) {
    let ho = (h - window) / stride + 1;
    let wo = (w - window) / stride + 1;
    let mut out = vec![f64::NEG_INFINITY; ho * wo * c];
    let mut arg = vec![0usize; ho * wo * c];
    for oy in 0..ho {
        for ox in 0..wo {
            for ch in 0..c {
                let o = (oy * wo + ox) * c + ch;
                for dy in 0..window {
                    for dx in 0..window {
                        let i = ((oy * stride + dy) * w + ox * stride + dx) * c + ch;
                        if input[i] > out[o] {
                            out[o] = input[i];
                            arg[o] = i;
                        }
                    }
                }
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool_backward(grad_out: &[f64], arg: &[usize], in_len: usize) -> Vec<f64> {
    let mut grad_in = vec![0.0; in_len];
    for (g, &i) in grad_out.iter().zip(arg) {
        grad_in[i] += g;
    }
    grad_in
}

/// Weight layout is `[n_in][n_out]`.
pub(crate) fn dense_forward(input: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let m = bias.len();
    let mut out = bias.to_vec();
    for (i, &xv) in input.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        for (o, wv) in out.iter_mut().zip(&weight[i * m..(i + 1) * m]) {
            *o += xv * wv;
        }
    }
    out
}

pub(crate) fn dense_backward(
    input: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    param_grads: Option<(&mut [f64], &mut [f64])>,
) -> Vec<f64> {
    let m = grad_out.len();
    let grad_in = input
        .iter()
        .enumerate()
        .map(|(i, _)| {
            weight[i * m..(i + 1) * m]
                .iter()
                .zip(grad_out)
                .map(|(w, g)| w * g)
                .sum()
        })
        .collect();
    if let Some((gw, gb)) = param_grads {
        for (b, g) in gb.iter_mut().zip(grad_out) {
            *b += g;
        }
        for (i, &xv) in input.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            for (dw, g) in gw[i * m..(i + 1) * m].iter_mut().zip(grad_out) {
                *dw += xv * g;
            }
        }
    }
    grad_in
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `softmax(z / temperature)` with max subtraction.
pub(crate) fn softmax(z: &[f64], temperature: f64) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| ((v - max) / temperature).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
