//! Layer implementations. Spatial tensors are `(batch, channels, height, width)`;
//! 1-d signals use `height = 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::model::Mode;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Hyperparameters of a layer, without its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        padding: [usize; 2],
    },
    BatchNorm {
        channels: usize,
        eps: f64,
        momentum: f64,
    },
    Relu,
    MaxPool {
        window: [usize; 2],
    },
    GlobalAvgPool,
    Flatten,
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Dropout {
        rate: f64,
    },
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::BatchNorm { .. } => "batchnorm",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::GlobalAvgPool => "gap",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Dropout { .. } => "dropout",
        }
    }

    /// Output shape (without batch) for a given input shape (without batch).
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = |expected: Vec<usize>| NnError::Shape {
            layer: self.name(),
            expected,
            got: input.to_vec(),
        };
        match *self {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                padding,
            } => match input {
                &[c, h, w]
                    if c == in_channels && h + 2 * padding[0] >= kernel[0] && w + 2 * padding[1] >= kernel[1] =>
                {
                    Ok(vec![
                        out_channels,
                        h + 2 * padding[0] + 1 - kernel[0],
                        w + 2 * padding[1] + 1 - kernel[1],
                    ])
                }
                _ => Err(bad(vec![in_channels, 0, 0])),
            },
            LayerSpec::BatchNorm { channels, .. } => {
                if input.first() == Some(&channels) {
                    Ok(input.to_vec())
                } else {
                    Err(bad(vec![channels]))
                }
            }
            LayerSpec::Relu | LayerSpec::Dropout { .. } => Ok(input.to_vec()),
            LayerSpec::MaxPool { window } => match input {
                &[c, h, w] => Ok(vec![c, h / window[0], w / window[1]]),
                _ => Err(bad(vec![0, 0, 0])),
            },
            LayerSpec::GlobalAvgPool => match input {
                &[c, _, _] => Ok(vec![c]),
                _ => Err(bad(vec![0, 0, 0])),
            },
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense { inputs, outputs } => {
                if input == [inputs] {
                    Ok(vec![outputs])
                } else {
                    Err(bad(vec![inputs]))
                }
            }
        }
    }
}

fn check_shape(layer: &'static str, x: &[usize], expected: &[usize]) -> Result<()> {
    if x.len() == expected.len() + 1 && &x[1..] == expected {
        Ok(())
    } else {
        Err(NnError::Shape {
            layer,
            expected: expected.to_vec(),
            got: x.get(1..).unwrap_or_default().to_vec(),
        })
    }
}

/// Uniform in `[-b, b]` with `b = sqrt(6 / fan_in)`, i.e. variance `2 / fan_in`.
fn kaiming<T: Scalar>(rng: &mut ChaCha8Rng, fan_in: usize, n: usize) -> Vec<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    (0..n).map(|_| T::of(rng.random_range(-bound..bound))).collect()
}

#[derive(Debug, Clone)]
pub struct Conv<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 2],
    pub padding: [usize; 2],
    /// `(out, in * kh * kw)`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub grad_weight: Vec<T>,
    pub grad_bias: Vec<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv<T> {
    fn patch(&self) -> usize {
        self.in_channels * self.kernel[0] * self.kernel[1]
    }

    fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            h + 2 * self.padding[0] + 1 - self.kernel[0],
            w + 2 * self.padding[1] + 1 - self.kernel[1],
        )
    }

    /// Unfolds one `(C, H, W)` item into `(C * kh * kw, oh * ow)` columns.
    fn im2col(&self, x: &[T], h: usize, w: usize, cols: &mut [T]) {
        let [kh, kw] = self.kernel;
        let [ph, pw] = self.padding;
        let (oh, ow) = self.out_hw(h, w);
        let plane = oh * ow;
        for c in 0..self.in_channels {
            let xc = &x[c * h * w..(c + 1) * h * w];
            for ki in 0..kh {
                for kj in 0..kw {
                    let row = (c * kh + ki) * kw + kj;
                    let dst = &mut cols[row * plane..(row + 1) * plane];
                    // valid ox: 0 <= ox + kj - pw < w
                    let lo = pw.saturating_sub(kj);
                    let hi = (w + pw).saturating_sub(kj).min(ow);
                    for oy in 0..oh {
                        let seg = &mut dst[oy * ow..(oy + 1) * ow];
                        let iy = oy + ki;
                        if iy < ph || iy - ph >= h || lo >= hi {
                            seg.fill(T::zero());
                            continue;
                        }
                        let src = &xc[(iy - ph) * w..(iy - ph + 1) * w];
                        seg[..lo].fill(T::zero());
                        seg[lo..hi].copy_from_slice(&src[lo + kj - pw..hi + kj - pw]);
                        seg[hi..].fill(T::zero());
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[T], h: usize, w: usize, dx: &mut [T]) {
        let [kh, kw] = self.kernel;
        let [ph, pw] = self.padding;
        let (oh, ow) = self.out_hw(h, w);
        let plane = oh * ow;
        for c in 0..self.in_channels {
            let dxc = &mut dx[c * h * w..(c + 1) * h * w];
            for ki in 0..kh {
                for kj in 0..kw {
                    let row = (c * kh + ki) * kw + kj;
                    let src = &cols[row * plane..(row + 1) * plane];
                    let lo = pw.saturating_sub(kj);
                    let hi = (w + pw).saturating_sub(kj).min(ow);
                    if lo >= hi {
                        continue;
                    }
                    for oy in 0..oh {
                        let iy = oy + ki;
                        if iy < ph || iy - ph >= h {
                            continue;
                        }
                        let dst = &mut dxc[(iy - ph) * w..(iy - ph + 1) * w];
                        for (d, &s) in dst[lo + kj - pw..hi + kj - pw]
                            .iter_mut()
                            .zip(&src[oy * ow + lo..oy * ow + hi])
                        {
                            *d = *d + s;
                        }
                    }
                }
            }
        }
    }

    fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let spec = self.spec();
        let (h, w) = match x.shape.as_slice() {
            &[_, c, h, w] if c == self.in_channels => (h, w),
            _ => return Err(check_shape("conv", &x.shape, &[self.in_channels, 0, 0]).unwrap_err()),
        };
        let out_shape = spec.output_shape(&[self.in_channels, h, w])?;
        let (oh, ow) = (out_shape[1], out_shape[2]);
        let b = x.batch();
        let k = self.patch();
        let mut cols = vec![T::zero(); k * oh * ow];
        let mut out = Tensor::zeros(&[b, self.out_channels, oh, ow]);
        let out_len = self.out_channels * oh * ow;
        for i in 0..b {
            self.im2col(x.item(i), h, w, &mut cols);
            let y = &mut out.data[i * out_len..(i + 1) * out_len];
            for (o, row) in y.chunks_mut(oh * ow).enumerate() {
                row.fill(self.bias[o]);
            }
            T::gemm(
                self.out_channels,
                k,
                oh * ow,
                T::one(),
                &self.weight,
                false,
                &cols,
                false,
                T::one(),
                y,
            );
        }
        self.input = Some(x);
        Ok(out)
    }

    fn backward(&mut self, g: Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let x = self.input.take().ok_or(NnError::NoForward("conv"))?;
        let (h, w) = (x.shape[2], x.shape[3]);
        let (oh, ow) = self.out_hw(h, w);
        check_shape("conv backward", &g.shape, &[self.out_channels, oh, ow])?;
        let k = self.patch();
        let plane = oh * ow;
        let mut cols = vec![T::zero(); k * plane];
        let mut dcols = vec![T::zero(); k * plane];
        let mut dx = need_input_grad.then(|| Tensor::zeros(&x.shape));
        let in_len = x.item_len();
        for i in 0..x.batch() {
            let gi = g.item(i);
            for (o, row) in gi.chunks(plane).enumerate() {
                self.grad_bias[o] = self.grad_bias[o] + row.iter().copied().sum::<T>();
            }
            self.im2col(x.item(i), h, w, &mut cols);
            // dW += dY * cols^T
            T::gemm(
                self.out_channels,
                plane,
                k,
                T::one(),
                gi,
                false,
                &cols,
                true,
                T::one(),
                &mut self.grad_weight,
            );
            if let Some(dx) = dx.as_mut() {
                // dcols = W^T * dY
                T::gemm(
                    k,
                    self.out_channels,
                    plane,
                    T::one(),
                    &self.weight,
                    true,
                    gi,
                    false,
                    T::zero(),
                    &mut dcols,
                );
                self.col2im(&dcols, h, w, &mut dx.data[i * in_len..(i + 1) * in_len]);
            }
        }
        self.input = Some(x);
        Ok(dx)
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::Conv {
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            kernel: self.kernel,
            padding: self.padding,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    pub channels: usize,
    pub eps: f64,
    pub momentum: f64,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub grad_gamma: Vec<T>,
    pub grad_beta: Vec<T>,
    cache: Option<BnCache<T>>,
}

#[derive(Debug, Clone)]
struct BnCache<T> {
    x_hat: Vec<T>,
    inv_std: Vec<T>,
    train: bool,
}

impl<T: Scalar> BatchNorm<T> {
    /// `(batch, channels, per-channel extent)` of a tensor.
    fn dims(&self, shape: &[usize]) -> Result<(usize, usize)> {
        if shape.len() < 2 || shape[1] != self.channels {
            return Err(NnError::Shape {
                layer: "batchnorm",
                expected: vec![self.channels],
                got: shape.get(1..).unwrap_or_default().to_vec(),
            });
        }
        Ok((shape[0], shape[2..].iter().product()))
    }

    #[allow(clippy::needless_range_loop)]
    fn forward(&mut self, mut x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (b, s) = self.dims(&x.shape)?;
        let c = self.channels;
        let m = b * s;
        let eps = T::of(self.eps);
        let mut inv_std = vec![T::zero(); c];
        let mut means = Vec::with_capacity(c);
        let train = mode == Mode::Train;
        if train {
            if b < 2 {
                return Err(NnError::SingleSampleBatch(b));
            }
            let mf = T::of(m as f64);
            let mom = T::of(self.momentum);
            for ch in 0..c {
                let mut sum = T::zero();
                for i in 0..b {
                    let off = (i * c + ch) * s;
                    sum = sum + x.data[off..off + s].iter().copied().sum::<T>();
                }
                let mean = sum / mf;
                let mut ss = T::zero();
                for i in 0..b {
                    let off = (i * c + ch) * s;
                    ss = ss + x.data[off..off + s].iter().map(|&v| (v - mean) * (v - mean)).sum::<T>();
                }
                let var = ss / mf;
                inv_std[ch] = T::one() / (var + eps).sqrt();
                let unbiased = ss / T::of((m.max(2) - 1) as f64);
                self.running_mean[ch] = (T::one() - mom) * self.running_mean[ch] + mom * mean;
                self.running_var[ch] = (T::one() - mom) * self.running_var[ch] + mom * unbiased;
                means.push(mean);
            }
        } else {
            for ch in 0..c {
                inv_std[ch] = T::one() / (self.running_var[ch] + eps).sqrt();
                means.push(self.running_mean[ch]);
            }
        }
        // one pass: x_hat into the cache, gamma * x_hat + beta in place
        let mut x_hat = vec![T::zero(); x.data.len()];
        for i in 0..b {
            for ch in 0..c {
                let off = (i * c + ch) * s;
                let (mean, inv, g, be) = (means[ch], inv_std[ch], self.gamma[ch], self.beta[ch]);
                for (v, h) in x.data[off..off + s].iter_mut().zip(&mut x_hat[off..off + s]) {
                    *h = (*v - mean) * inv;
                    *v = *h * g + be;
                }
            }
        }
        self.cache = Some(BnCache { x_hat, inv_std, train });
        Ok(x)
    }

    fn backward(&mut self, mut g: Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or(NnError::NoForward("batchnorm"))?;
        let (b, s) = self.dims(&g.shape)?;
        let c = self.channels;
        let mf = T::of((b * s) as f64);
        for ch in 0..c {
            let mut sum_dy = T::zero();
            let mut sum_dy_xhat = T::zero();
            for i in 0..b {
                let off = (i * c + ch) * s;
                for (dy, xh) in g.data[off..off + s].iter().zip(&cache.x_hat[off..off + s]) {
                    sum_dy = sum_dy + *dy;
                    sum_dy_xhat = sum_dy_xhat + *dy * *xh;
                }
            }
            self.grad_beta[ch] = self.grad_beta[ch] + sum_dy;
            self.grad_gamma[ch] = self.grad_gamma[ch] + sum_dy_xhat;
            let k = self.gamma[ch] * cache.inv_std[ch];
            let (mean_dy, mean_dy_xhat) = (sum_dy / mf, sum_dy_xhat / mf);
            for i in 0..b {
                let off = (i * c + ch) * s;
                let dys = &mut g.data[off..off + s];
                if cache.train {
                    for (dy, &xh) in dys.iter_mut().zip(&cache.x_hat[off..off + s]) {
                        *dy = k * (*dy - mean_dy - xh * mean_dy_xhat);
                    }
                } else {
                    for dy in dys {
                        *dy = k * *dy;
                    }
                }
            }
        }
        self.cache = Some(cache);
        Ok(g)
    }
}

#[derive(Debug, Clone)]
pub struct MaxPool {
    pub window: [usize; 2],
    argmax: Option<(Vec<usize>, Vec<u32>)>,
}

impl MaxPool {
    fn forward<T: Scalar>(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let (b, c, h, w) = match x.shape.as_slice() {
            &[b, c, h, w] => (b, c, h, w),
            _ => return Err(check_shape("maxpool", &x.shape, &[0, 0, 0]).unwrap_err()),
        };
        let [wh, ww] = self.window;
        let (oh, ow) = (h / wh, w / ww);
        let mut out = Tensor::zeros(&[b, c, oh, ow]);
        let mut arg = vec![0u32; b * c * oh * ow];
        if self.window == [2, 2] {
            for plane in 0..b * c {
                let xp = &x.data[plane * h * w..(plane + 1) * h * w];
                let (op, ap) = (
                    &mut out.data[plane * oh * ow..(plane + 1) * oh * ow],
                    &mut arg[plane * oh * ow..(plane + 1) * oh * ow],
                );
                for oy in 0..oh {
                    let (r0, r1) = (2 * oy * w, (2 * oy + 1) * w);
                    for ox in 0..ow {
                        // same scan order and tie-breaking as the general path
                        let mut best = r0 + 2 * ox;
                        for idx in [r0 + 2 * ox + 1, r1 + 2 * ox, r1 + 2 * ox + 1] {
                            if xp[idx] > xp[best] {
                                best = idx;
                            }
                        }
                        op[oy * ow + ox] = xp[best];
                        ap[oy * ow + ox] = best as u32;
                    }
                }
            }
            self.argmax = Some((x.shape, arg));
            return Ok(out);
        }
        for plane in 0..b * c {
            let xp = &x.data[plane * h * w..(plane + 1) * h * w];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = oy * wh * w + ox * ww;
                    for dy in 0..wh {
                        for dx in 0..ww {
                            let idx = (oy * wh + dy) * w + ox * ww + dx;
                            if xp[idx] > xp[best] {
                                best = idx;
                            }
                        }
                    }
                    let o = plane * oh * ow + oy * ow + ox;
                    out.data[o] = xp[best];
                    arg[o] = best as u32;
                }
            }
        }
        self.argmax = Some((x.shape, arg));
        Ok(out)
    }

    fn backward<T: Scalar>(&mut self, g: Tensor<T>) -> Result<Tensor<T>> {
        let (shape, arg) = self.argmax.as_ref().ok_or(NnError::NoForward("maxpool"))?;
        let (h, w) = (shape[2], shape[3]);
        let out_plane = g.shape[2] * g.shape[3];
        let mut dx = Tensor::zeros(shape);
        for ((gp, ap), dp) in g
            .data
            .chunks(out_plane)
            .zip(arg.chunks(out_plane))
            .zip(dx.data.chunks_mut(h * w))
        {
            for (&gv, &a) in gp.iter().zip(ap) {
                dp[a as usize] = dp[a as usize] + gv;
            }
        }
        Ok(dx)
    }
}

#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `(outputs, inputs)`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub grad_weight: Vec<T>,
    pub grad_bias: Vec<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        check_shape("dense", &x.shape, &[self.inputs])?;
        let b = x.batch();
        let mut out = Tensor::zeros(&[b, self.outputs]);
        for row in out.data.chunks_mut(self.outputs) {
            row.copy_from_slice(&self.bias);
        }
        T::gemm(
            b,
            self.inputs,
            self.outputs,
            T::one(),
            &x.data,
            false,
            &self.weight,
            true,
            T::one(),
            &mut out.data,
        );
        self.input = Some(x);
        Ok(out)
    }

    fn backward(&mut self, g: Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let x = self.input.as_ref().ok_or(NnError::NoForward("dense"))?;
        check_shape("dense backward", &g.shape, &[self.outputs])?;
        let b = x.batch();
        for row in g.data.chunks(self.outputs) {
            for (gb, &v) in self.grad_bias.iter_mut().zip(row) {
                *gb = *gb + v;
            }
        }
        // dW += dY^T X
        T::gemm(
            self.outputs,
            b,
            self.inputs,
            T::one(),
            &g.data,
            true,
            &x.data,
            false,
            T::one(),
            &mut self.grad_weight,
        );
        Ok(need_input_grad.then(|| {
            let mut dx = Tensor::zeros(&x.shape);
            T::gemm(
                b,
                self.outputs,
                self.inputs,
                T::one(),
                &g.data,
                false,
                &self.weight,
                false,
                T::zero(),
                &mut dx.data,
            );
            dx
        }))
    }
}

#[derive(Debug, Clone)]
pub struct Dropout<T> {
    pub rate: f64,
    rng: ChaCha8Rng,
    mask: Option<Vec<T>>,
}

impl<T: Scalar> Dropout<T> {
    fn forward(&mut self, mut x: Tensor<T>, mode: Mode) -> Tensor<T> {
        if mode == Mode::Eval || self.rate == 0.0 {
            self.mask = None;
            return x;
        }
        let scale = T::of(1.0 / (1.0 - self.rate));
        let mask: Vec<T> = (0..x.data.len())
            .map(|_| {
                if self.rng.random::<f64>() < self.rate {
                    T::zero()
                } else {
                    scale
                }
            })
            .collect();
        for (v, &m) in x.data.iter_mut().zip(&mask) {
            *v = *v * m;
        }
        self.mask = Some(mask);
        x
    }

    fn backward(&mut self, mut g: Tensor<T>) -> Tensor<T> {
        if let Some(mask) = &self.mask {
            for (v, &m) in g.data.iter_mut().zip(mask) {
                *v = *v * m;
            }
        }
        g
    }

    pub fn rng_state(&self) -> ([u8; 32], u64, u128) {
        (self.rng.get_seed(), self.rng.get_stream(), self.rng.get_word_pos())
    }

    pub fn set_rng_state(&mut self, seed: [u8; 32], stream: u64, word_pos: u128) {
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);
        self.rng = rng;
    }
}

#[derive(Debug, Clone)]
pub enum Layer<T> {
    Conv(Conv<T>),
    BatchNorm(BatchNorm<T>),
    Relu { positive: Option<Vec<bool>> },
    MaxPool(MaxPool),
    GlobalAvgPool { input_shape: Option<Vec<usize>> },
    Flatten { input_shape: Option<Vec<usize>> },
    Dense(Dense<T>),
    Dropout(Dropout<T>),
}

impl<T: Scalar> Layer<T> {
    /// Fresh layer; weights drawn from `rng`, dropout gets its own stream.
    pub fn from_spec(spec: &LayerSpec, rng: &mut ChaCha8Rng) -> Self {
        match *spec {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                padding,
            } => {
                let fan_in = in_channels * kernel[0] * kernel[1];
                Layer::Conv(Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    padding,
                    weight: kaiming(rng, fan_in, out_channels * fan_in),
                    bias: vec![T::zero(); out_channels],
                    grad_weight: vec![T::zero(); out_channels * fan_in],
                    grad_bias: vec![T::zero(); out_channels],
                    input: None,
                })
            }
            LayerSpec::BatchNorm {
                channels,
                eps,
                momentum,
            } => Layer::BatchNorm(BatchNorm {
                channels,
                eps,
                momentum,
                gamma: vec![T::one(); channels],
                beta: vec![T::zero(); channels],
                running_mean: vec![T::zero(); channels],
                running_var: vec![T::one(); channels],
                grad_gamma: vec![T::zero(); channels],
                grad_beta: vec![T::zero(); channels],
                cache: None,
            }),
            LayerSpec::Relu => Layer::Relu { positive: None },
            LayerSpec::MaxPool { window } => Layer::MaxPool(MaxPool { window, argmax: None }),
            LayerSpec::GlobalAvgPool => Layer::GlobalAvgPool { input_shape: None },
            LayerSpec::Flatten => Layer::Flatten { input_shape: None },
            LayerSpec::Dense { inputs, outputs } => Layer::Dense(Dense {
                inputs,
                outputs,
                weight: kaiming(rng, inputs, inputs * outputs),
                bias: vec![T::zero(); outputs],
                grad_weight: vec![T::zero(); inputs * outputs],
                grad_bias: vec![T::zero(); outputs],
                input: None,
            }),
            LayerSpec::Dropout { rate } => Layer::Dropout(Dropout {
                rate,
                rng: ChaCha8Rng::seed_from_u64(rng.random()),
                mask: None,
            }),
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv(c) => c.spec(),
            Layer::BatchNorm(b) => LayerSpec::BatchNorm {
                channels: b.channels,
                eps: b.eps,
                momentum: b.momentum,
            },
            Layer::Relu { .. } => LayerSpec::Relu,
            Layer::MaxPool(p) => LayerSpec::MaxPool { window: p.window },
            Layer::GlobalAvgPool { .. } => LayerSpec::GlobalAvgPool,
            Layer::Flatten { .. } => LayerSpec::Flatten,
            Layer::Dense(d) => LayerSpec::Dense {
                inputs: d.inputs,
                outputs: d.outputs,
            },
            Layer::Dropout(d) => LayerSpec::Dropout { rate: d.rate },
        }
    }

    pub fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        match self {
            Layer::Conv(c) => c.forward(x),
            Layer::BatchNorm(b) => b.forward(x, mode),
            Layer::Relu { positive } => {
                let mut x = x;
                let mask: Vec<bool> = x.data.iter().map(|&v| v > T::zero()).collect();
                for (v, &p) in x.data.iter_mut().zip(&mask) {
                    *v = if p { *v } else { T::zero() };
                }
                *positive = Some(mask);
                Ok(x)
            }
            Layer::MaxPool(p) => p.forward(x),
            Layer::GlobalAvgPool { input_shape } => {
                let (b, c, s) = match x.shape.as_slice() {
                    &[b, c, h, w] if h * w > 0 => (b, c, h * w),
                    _ => return Err(check_shape("gap", &x.shape, &[0, 0, 0]).unwrap_err()),
                };
                let inv = T::of(1.0 / s as f64);
                let data = x.data.chunks(s).map(|p| p.iter().copied().sum::<T>() * inv).collect();
                *input_shape = Some(x.shape.clone());
                Ok(Tensor::from_vec(&[b, c], data))
            }
            Layer::Flatten { input_shape } => {
                let b = x.batch();
                let n = x.item_len();
                *input_shape = Some(x.shape.clone());
                Ok(Tensor::from_vec(&[b, n], x.data))
            }
            Layer::Dense(d) => d.forward(x),
            Layer::Dropout(d) => Ok(d.forward(x, mode)),
        }
    }

    /// Accumulates parameter gradients and returns the input gradient
    /// (`None` only when `need_input_grad` is false and the layer can skip it).
    pub fn backward(&mut self, g: Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        match self {
            Layer::Conv(c) => c.backward(g, need_input_grad),
            Layer::BatchNorm(b) => b.backward(g).map(Some),
            Layer::Relu { positive } => {
                let mask = positive.as_ref().ok_or(NnError::NoForward("relu"))?;
                let mut g = g;
                for (v, &p) in g.data.iter_mut().zip(mask) {
                    *v = if p { *v } else { T::zero() };
                }
                Ok(Some(g))
            }
            Layer::MaxPool(p) => p.backward(g).map(Some),
            Layer::GlobalAvgPool { input_shape } => {
                let shape = input_shape.as_ref().ok_or(NnError::NoForward("gap"))?;
                let s = shape[2] * shape[3];
                let inv = T::of(1.0 / s as f64);
                let mut dx = Tensor::zeros(shape);
                for (plane, &gv) in g.data.iter().enumerate() {
                    dx.data[plane * s..(plane + 1) * s].fill(gv * inv);
                }
                Ok(Some(dx))
            }
            Layer::Flatten { input_shape } => {
                let shape = input_shape.as_ref().ok_or(NnError::NoForward("flatten"))?;
                Ok(Some(Tensor::from_vec(shape, g.data)))
            }
            Layer::Dense(d) => d.backward(g, need_input_grad),
            Layer::Dropout(d) => Ok(Some(d.backward(g))),
        }
    }

    /// Trainable `(parameter, gradient)` pairs.
    pub fn params_mut(&mut self) -> Vec<(&mut Vec<T>, &mut Vec<T>)> {
        match self {
            Layer::Conv(c) => vec![(&mut c.weight, &mut c.grad_weight), (&mut c.bias, &mut c.grad_bias)],
            Layer::BatchNorm(b) => vec![(&mut b.gamma, &mut b.grad_gamma), (&mut b.beta, &mut b.grad_beta)],
            Layer::Dense(d) => vec![(&mut d.weight, &mut d.grad_weight), (&mut d.bias, &mut d.grad_bias)],
            _ => Vec::new(),
        }
    }

    /// Everything a checkpoint must persist, trainable or not, in a fixed order.
    pub fn state(&self) -> Vec<&Vec<T>> {
        match self {
            Layer::Conv(c) => vec![&c.weight, &c.bias],
            Layer::BatchNorm(b) => vec![&b.gamma, &b.beta, &b.running_mean, &b.running_var],
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            _ => Vec::new(),
        }
    }

    pub fn state_mut(&mut self) -> Vec<&mut Vec<T>> {
        match self {
            Layer::Conv(c) => vec![&mut c.weight, &mut c.bias],
            Layer::BatchNorm(b) => vec![&mut b.gamma, &mut b.beta, &mut b.running_mean, &mut b.running_var],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            _ => Vec::new(),
        }
    }

    /// Drops cached activations.
    pub fn clear_cache(&mut self) {
        match self {
            Layer::Conv(c) => c.input = None,
            Layer::BatchNorm(b) => b.cache = None,
            Layer::Relu { positive } => *positive = None,
            Layer::MaxPool(p) => p.argmax = None,
            Layer::GlobalAvgPool { input_shape } | Layer::Flatten { input_shape } => *input_shape = None,
            Layer::Dense(d) => d.input = None,
            Layer::Dropout(d) => d.mask = None,
        }
    }
}
