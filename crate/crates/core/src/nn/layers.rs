//! Differentiable building blocks. Every forward pass is paired with an
//! explicit backward pass that maps the output gradient to parameter and
//! input gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Variance floor for statistics pooling.
pub const STD_FLOOR_VARIANCE: f64 = 1e-10;

/// Valid (unpadded) 1-d convolution over a `[channels, time]` input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    /// `[out_channels, in_channels, kernel]`
    pub weight: Tensor,
    /// `[out_channels]`
    pub bias: Tensor,
    pub stride: usize,
}

#[derive(Debug, Clone)]
pub struct Conv1dGrad {
    pub weight: Tensor,
    pub bias: Tensor,
    pub input: Tensor,
}

impl Conv1d {
    pub fn new(weight: Tensor, bias: Tensor, stride: usize) -> Result<Self> {
        let [out, _, k] = weight.shape() else {
            return Err(Error::Shape(format!(
                "conv weight must be 3-d, got {:?}",
                weight.shape()
            )));
        };
        if bias.shape() != [*out] {
            return Err(Error::Shape(format!(
                "conv bias {:?} does not match {out} output channels",
                bias.shape()
            )));
        }
        if *k == 0 || stride == 0 {
            return Err(Error::Config("kernel and stride must be at least 1".into()));
        }
        Ok(Conv1d {
            weight,
            bias,
            stride,
        })
    }

    pub fn init<R: Rng>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = Tensor::kaiming_uniform(
            &[out_channels, in_channels, kernel],
            in_channels * kernel,
            rng,
        );
        Conv1d::new(weight, Tensor::zeros(&[out_channels]), stride)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn n_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn output_len(&self, t: usize) -> Result<usize> {
        let k = self.kernel();
        if t < k {
            return Err(Error::Shape(format!(
                "conv input has {t} frames, kernel needs {k}"
            )));
        }
        Ok(1 + (t - k) / self.stride)
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize)> {
        let (c, t) = x.dims2()?;
        if c != self.in_channels() || x.shape().len() != 2 {
            return Err(Error::Shape(format!(
                "conv expects [{}, T] input, got {:?}",
                self.in_channels(),
                x.shape()
            )));
        }
        Ok((c, t))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (cin, t) = self.check_input(x)?;
        let t_out = self.output_len(t)?;
        let (cout, k, s) = (self.out_channels(), self.kernel(), self.stride);
        let w = self.weight.data();
        let xd = x.data();
        let mut y = vec![0.0; cout * t_out];
        for (c, yrow) in y.chunks_mut(t_out).enumerate() {
            yrow.fill(self.bias.data()[c]);
            for i in 0..cin {
                let xrow = &xd[i * t..(i + 1) * t];
                for kk in 0..k {
                    let wv = w[(c * cin + i) * k + kk];
                    if s == 1 {
                        for (yv, xv) in yrow.iter_mut().zip(&xrow[kk..kk + t_out]) {
                            *yv += wv * xv;
                        }
                    } else {
                        for (j, yv) in yrow.iter_mut().enumerate() {
                            *yv += wv * xrow[j * s + kk];
                        }
                    }
                }
            }
        }
        Tensor::new(vec![cout, t_out], y)?.finite("conv1d output")
    }

    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<Conv1dGrad> {
        let (cin, t) = self.check_input(x)?;
        let t_out = self.output_len(t)?;
        let (cout, k, s) = (self.out_channels(), self.kernel(), self.stride);
        if grad_out.shape() != [cout, t_out] {
            return Err(Error::Shape(format!(
                "conv grad {:?} vs output [{cout}, {t_out}]",
                grad_out.shape()
            )));
        }
        let w = self.weight.data();
        let xd = x.data();
        let g = grad_out.data();
        let mut gw = vec![0.0; w.len()];
        let mut gb = vec![0.0; cout];
        let mut gx = vec![0.0; cin * t];
        for c in 0..cout {
            let grow = &g[c * t_out..(c + 1) * t_out];
            gb[c] = grow.iter().sum();
            for i in 0..cin {
                let xrow = &xd[i * t..(i + 1) * t];
                let gxrow = &mut gx[i * t..(i + 1) * t];
                for kk in 0..k {
                    let widx = (c * cin + i) * k + kk;
                    let wv = w[widx];
                    let mut acc = 0.0;
                    if s == 1 {
                        for ((gv, xv), gxv) in grow
                            .iter()
                            .zip(&xrow[kk..kk + t_out])
                            .zip(&mut gxrow[kk..kk + t_out])
                        {
                            acc += gv * xv;
                            *gxv += wv * gv;
                        }
                    } else {
                        for (j, gv) in grow.iter().enumerate() {
                            acc += gv * xrow[j * s + kk];
                            gxrow[j * s + kk] += wv * gv;
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
        Ok(Conv1dGrad {
            weight: Tensor::new(self.weight.shape().to_vec(), gw)?,
            bias: Tensor::new(vec![cout], gb)?,
            input: Tensor::new(vec![cin, t], gx)?,
        })
    }
}

/// `y = W x + b`, applied to a vector or to every column of a matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    /// `[out, in]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct AffineGrad {
    pub weight: Tensor,
    pub bias: Tensor,
    pub input: Tensor,
}

impl Affine {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        let [out, _] = weight.shape() else {
            return Err(Error::Shape(format!(
                "affine weight must be 2-d, got {:?}",
                weight.shape()
            )));
        };
        if bias.shape() != [*out] {
            return Err(Error::Shape(format!(
                "affine bias {:?} does not match {out} outputs",
                bias.shape()
            )));
        }
        Ok(Affine { weight, bias })
    }

    pub fn init<R: Rng>(d_in: usize, d_out: usize, rng: &mut R) -> Result<Self> {
        Affine::new(
            Tensor::kaiming_uniform(&[d_out, d_in], d_in, rng),
            Tensor::zeros(&[d_out]),
        )
    }

    pub fn d_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn d_out(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn n_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize)> {
        let (d, t) = x.dims2()?;
        if d != self.d_in() {
            return Err(Error::Shape(format!(
                "affine expects {} inputs, got {:?}",
                self.d_in(),
                x.shape()
            )));
        }
        Ok((d, t))
    }

    fn out_shape(&self, x: &Tensor, t: usize) -> Vec<usize> {
        if x.shape().len() == 1 {
            vec![self.d_out()]
        } else {
            vec![self.d_out(), t]
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (din, t) = self.check_input(x)?;
        let dout = self.d_out();
        let w = self.weight.data();
        let xd = x.data();
        let mut y = vec![0.0; dout * t];
        for (o, yrow) in y.chunks_mut(t).enumerate() {
            yrow.fill(self.bias.data()[o]);
            for i in 0..din {
                let wv = w[o * din + i];
                for (yv, xv) in yrow.iter_mut().zip(&xd[i * t..(i + 1) * t]) {
                    *yv += wv * xv;
                }
            }
        }
        Tensor::new(self.out_shape(x, t), y)?.finite("affine output")
    }

    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<AffineGrad> {
        let (din, t) = self.check_input(x)?;
        let dout = self.d_out();
        if grad_out.len() != dout * t {
            return Err(Error::Shape(format!(
                "affine grad {:?} vs output [{dout}, {t}]",
                grad_out.shape()
            )));
        }
        let w = self.weight.data();
        let xd = x.data();
        let g = grad_out.data();
        let mut gw = vec![0.0; dout * din];
        let mut gb = vec![0.0; dout];
        let mut gx = vec![0.0; din * t];
        for o in 0..dout {
            let grow = &g[o * t..(o + 1) * t];
            gb[o] = grow.iter().sum();
            for i in 0..din {
                let xrow = &xd[i * t..(i + 1) * t];
                gw[o * din + i] = grow.iter().zip(xrow).map(|(a, b)| a * b).sum();
                let wv = w[o * din + i];
                for (gxv, gv) in gx[i * t..(i + 1) * t].iter_mut().zip(grow) {
                    *gxv += wv * gv;
                }
            }
        }
        Ok(AffineGrad {
            weight: Tensor::new(self.weight.shape().to_vec(), gw)?,
            bias: Tensor::new(vec![dout], gb)?,
            input: Tensor::new(x.shape().to_vec(), gx)?,
        })
    }
}

pub fn relu(x: &Tensor) -> Result<Tensor> {
    let data = x.data().iter().map(|v| v.max(0.0)).collect();
    Tensor::new(x.shape().to_vec(), data)?.finite("relu output")
}

/// Gradient of ReLU; the subgradient at 0 is taken as 0.
pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if x.shape() != grad_out.shape() {
        return Err(Error::Shape("relu grad shape mismatch".into()));
    }
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(xv, g)| if *xv > 0.0 { *g } else { 0.0 })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// `x0 + mean(x - x0)`: equal to the naive mean up to rounding, and
/// exactly `x0` for a constant row.
fn shifted_mean(row: &[f64]) -> f64 {
    let Some(&x0) = row.first() else {
        return f64::NAN;
    };
    x0 + row.iter().map(|v| v - x0).sum::<f64>() / row.len() as f64
}

fn channel_stats(x: &Tensor) -> Result<(usize, usize, Vec<f64>, Vec<f64>)> {
    let (c, t) = x.dims2()?;
    let mut means = Vec::with_capacity(c);
    let mut vars = Vec::with_capacity(c);
    for ch in 0..c {
        let row = &x.data()[ch * t..(ch + 1) * t];
        let mean = shifted_mean(row);
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t as f64;
        means.push(mean);
        vars.push(var);
    }
    Ok((c, t, means, vars))
}

/// Per-channel mean followed by per-channel population standard deviation,
/// `sqrt(max(var, 1e-10))`.
pub fn stats_pool(x: &Tensor) -> Result<Tensor> {
    let (_, _, means, vars) = channel_stats(x)?;
    let mut out = means;
    out.extend(vars.iter().map(|v| v.max(STD_FLOOR_VARIANCE).sqrt()));
    Tensor::from_vec(out)?.finite("stats_pool output")
}

pub fn stats_pool_backward(x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    let (c, t, means, vars) = channel_stats(x)?;
    if grad_out.len() != 2 * c {
        return Err(Error::Shape(format!(
            "stats_pool grad has {} values, expected {}",
            grad_out.len(),
            2 * c
        )));
    }
    let g = grad_out.data();
    let tf = t as f64;
    let mut gx = vec![0.0; c * t];
    for ch in 0..c {
        let g_mean = g[ch] / tf;
        // Below the floor the std is constant, so its gradient vanishes.
        let g_std = if vars[ch] > STD_FLOOR_VARIANCE {
            g[c + ch] / (tf * vars[ch].sqrt())
        } else {
            0.0
        };
        let row = &x.data()[ch * t..(ch + 1) * t];
        for (gv, xv) in gx[ch * t..(ch + 1) * t].iter_mut().zip(row) {
            *gv = g_mean + g_std * (xv - means[ch]);
        }
    }
    Tensor::new(vec![c, t], gx)
}

pub fn avg_pool(x: &Tensor) -> Result<Tensor> {
    let (c, t) = x.dims2()?;
    let out = (0..c)
        .map(|ch| shifted_mean(&x.data()[ch * t..(ch + 1) * t]))
        .collect();
    Tensor::from_vec(out)?.finite("avg_pool output")
}

pub fn avg_pool_backward(x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    let (c, t) = x.dims2()?;
    if grad_out.len() != c {
        return Err(Error::Shape("avg_pool grad shape mismatch".into()));
    }
    let mut gx = Vec::with_capacity(c * t);
    for ch in 0..c {
        gx.extend(std::iter::repeat_n(grad_out.data()[ch] / t as f64, t));
    }
    Tensor::new(vec![c, t], gx)
}

/// Cross-entropy of `softmax(logits)` against `label`, with its gradient
/// `softmax - onehot`.
pub fn softmax_xent(logits: &Tensor, label: usize) -> Result<(f64, Tensor)> {
    let z = logits.data();
    if label >= z.len() {
        return Err(Error::Index {
            index: label,
            len: z.len(),
        });
    }
    logits.check_finite("logits")?;
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (z[label] - max);
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    Ok((loss, Tensor::new(logits.shape().to_vec(), grad)?))
}

/// Softmax probabilities, max-subtracted.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
