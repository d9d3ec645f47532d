//! Forward and backward passes of the fixed building blocks: stride-2 3×3
//! convolution with tanh, global average pooling and dense layers.

/// A `C×H×W` stack of feature maps, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Maps {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Maps {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Maps {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }
}

pub const KERNEL: usize = 3;

/// Output side length of a stride-2, pad-1, 3×3 convolution.
pub fn conv_out_len(len: usize) -> usize {
    len.div_ceil(2)
}

/// Valid output-column range for kernel column `k`: input index `2·o + k − 1`
/// must land in `[0, len)`.
#[inline]
fn out_range(k: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    let lo = if k == 0 { 1 } else { 0 };
    // 2·o + k − 1 <= in_len − 1  <=>  o <= (in_len − k) / 2
    let hi = if in_len >= k {
        ((in_len - k) / 2 + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// `tanh(conv(input) + bias)`; `weight` is `[out][in][3][3]`.
pub fn conv_tanh_forward(input: &Maps, weight: &[f64], bias: &[f64], out_channels: usize) -> Maps {
    let (cin, h, w) = (input.channels, input.height, input.width);
    let (ho, wo) = (conv_out_len(h), conv_out_len(w));
    let mut out = Maps::zeros(out_channels, ho, wo);
    let plane = ho * wo;
    for o in 0..out_channels {
        let dst = &mut out.data[o * plane..(o + 1) * plane];
        dst.fill(bias[o]);
        for i in 0..cin {
            let src = input.plane(i);
            for ky in 0..KERNEL {
                let (oy_lo, oy_hi) = out_range(ky, h, ho);
                for kx in 0..KERNEL {
                    let wv = weight[((o * cin + i) * KERNEL + ky) * KERNEL + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (ox_lo, ox_hi) = out_range(kx, w, wo);
                    for oy in oy_lo..oy_hi {
                        let iy = 2 * oy + ky - 1;
                        let row = &src[iy * w..(iy + 1) * w];
                        let drow = &mut dst[oy * wo..(oy + 1) * wo];
                        for ox in ox_lo..ox_hi {
                            drow[ox] += wv * row[2 * ox + kx - 1];
                        }
                    }
                }
            }
        }
        dst.iter_mut().for_each(|v| *v = v.tanh());
    }
    out
}

/// Backpropagates through `tanh(conv(input))` given `d_out` with respect to
/// the activations. Accumulates into `d_weight` / `d_bias` and, when
/// requested, returns the gradient with respect to `input`.
pub fn conv_tanh_backward(
    input: &Maps,
    output: &Maps,
    d_out: &[f64],
    weight: &[f64],
    d_weight: &mut [f64],
    d_bias: &mut [f64],
    want_input_grad: bool,
) -> Option<Vec<f64>> {
    let (cin, h, w) = (input.channels, input.height, input.width);
    let (cout, ho, wo) = (output.channels, output.height, output.width);
    let plane = ho * wo;
    let d_pre: Vec<f64> = output
        .data
        .iter()
        .zip(d_out)
        .map(|(a, d)| d * (1.0 - a * a))
        .collect();
    let mut d_in = want_input_grad.then(|| vec![0.0; cin * h * w]);

    for o in 0..cout {
        let dp = &d_pre[o * plane..(o + 1) * plane];
        d_bias[o] += dp.iter().sum::<f64>();
        for i in 0..cin {
            let src = input.plane(i);
            for ky in 0..KERNEL {
                let (oy_lo, oy_hi) = out_range(ky, h, ho);
                for kx in 0..KERNEL {
                    let widx = ((o * cin + i) * KERNEL + ky) * KERNEL + kx;
                    let (ox_lo, ox_hi) = out_range(kx, w, wo);
                    let mut acc = 0.0;
                    for oy in oy_lo..oy_hi {
                        let iy = 2 * oy + ky - 1;
                        let row = &src[iy * w..(iy + 1) * w];
                        let drow = &dp[oy * wo..(oy + 1) * wo];
                        for ox in ox_lo..ox_hi {
                            acc += drow[ox] * row[2 * ox + kx - 1];
                        }
                    }
                    d_weight[widx] += acc;
                    if let Some(d_in) = d_in.as_mut() {
                        let wv = weight[widx];
                        let dst = &mut d_in[i * h * w..(i + 1) * h * w];
                        for oy in oy_lo..oy_hi {
                            let iy = 2 * oy + ky - 1;
                            let drow = &dp[oy * wo..(oy + 1) * wo];
                            let row = &mut dst[iy * w..(iy + 1) * w];
                            for ox in ox_lo..ox_hi {
                                row[2 * ox + kx - 1] += wv * drow[ox];
                            }
                        }
                    }
                }
            }
        }
    }
    d_in
}

pub fn global_avg_pool(maps: &Maps) -> Vec<f64> {
    let n = (maps.height * maps.width) as f64;
    (0..maps.channels)
        .map(|c| maps.plane(c).iter().sum::<f64>() / n)
        .collect()
}

/// `W x + b` with `W` stored `[out][in]`.
pub fn dense(weight: &[f64], bias: &[f64], x: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    bias.iter()
        .enumerate()
        .map(|(o, b)| {
            b + weight[o * n_in..(o + 1) * n_in]
                .iter()
                .zip(x)
                .map(|(w, v)| w * v)
                .sum::<f64>()
        })
        .collect()
}

/// Accumulates `dW += dy xᵀ`, `db += dy` and returns `Wᵀ dy`.
pub fn dense_backward(
    weight: &[f64],
    x: &[f64],
    dy: &[f64],
    d_weight: &mut [f64],
    d_bias: &mut [f64],
) -> Vec<f64> {
    let n_in = x.len();
    let mut dx = vec![0.0; n_in];
    for (o, &g) in dy.iter().enumerate() {
        d_bias[o] += g;
        let wrow = &weight[o * n_in..(o + 1) * n_in];
        let drow = &mut d_weight[o * n_in..(o + 1) * n_in];
        for k in 0..n_in {
            drow[k] += g * x[k];
            dx[k] += g * wrow[k];
        }
    }
    dx
}
