//! Minimal dense layers with hand-written backward passes.
//!
//! Every layer doubles as its own gradient container: `zeros_like` yields a
//! structurally identical value whose tensors accumulate gradients, so a
//! model and its gradient can be walked in lockstep through [`ParamSet`].

use rand::Rng;

use crate::scalar::Scalar;

/// Row-major dense tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape/data mismatch");
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.shape)
    }

    pub fn fill_uniform<R: Rng>(&mut self, rng: &mut R, bound: f64) {
        for v in &mut self.data {
            *v = T::lit(rng.gen_range(-bound..=bound));
        }
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = T::zero());
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: T) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

/// Named, hierarchically-addressed parameter tensors.
pub trait ParamSet<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>);
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>);

    fn named_params(&self, prefix: &str) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        self.visit(prefix, &mut out);
        out
    }

    fn named_params_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        self.visit_mut(prefix, &mut out);
        out
    }

    fn num_params(&self) -> usize {
        self.named_params("").iter().map(|(_, t)| t.data.len()).sum()
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}/{name}")
    }
}

/// Square-kernel 2-D convolution over `[C, H, W]` tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub pad: usize,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        Conv2d {
            weight: Tensor::zeros(&[out_ch, in_ch, kernel, kernel]),
            bias: Tensor::zeros(&[out_ch]),
            stride,
            pad,
        }
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        let fan_in = self.in_channels() * self.kernel() * self.kernel();
        self.weight.fill_uniform(rng, (6.0 / fan_in as f64).sqrt());
        self.bias.fill_zero();
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape[2]
    }

    pub fn zeros_like(&self) -> Self {
        Conv2d {
            weight: self.weight.zeros_like(),
            bias: self.bias.zeros_like(),
            stride: self.stride,
            pad: self.pad,
        }
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        let k = self.kernel();
        (
            (h + 2 * self.pad - k) / self.stride + 1,
            (w + 2 * self.pad - k) / self.stride + 1,
        )
    }

    /// Range of output coordinates whose input tap `o*stride + k - pad`
    /// lands inside `[0, n)`.
    fn valid_range(&self, k: usize, n_in: usize, n_out: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = if k >= self.pad { 0 } else { (self.pad - k).div_ceil(s) };
        // o*s + k - pad <= n_in - 1  =>  o <= (n_in - 1 + pad - k) / s
        let top = n_in + self.pad;
        let hi = if top > k { ((top - 1 - k) / s + 1).min(n_out) } else { 0 };
        (lo, hi.max(lo))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let (ci, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
        assert_eq!(ci, self.in_channels(), "conv input channels");
        let k = self.kernel();
        let (oh, ow) = self.output_size(h, w);
        let co = self.out_channels();
        let mut y = Tensor::zeros(&[co, oh, ow]);
        let s = self.stride;
        for o in 0..co {
            let plane = &mut y.data[o * oh * ow..(o + 1) * oh * ow];
            plane.iter_mut().for_each(|v| *v = self.bias.data[o]);
            for i in 0..ci {
                let xin = &x.data[i * h * w..(i + 1) * h * w];
                for ky in 0..k {
                    let (oy0, oy1) = self.valid_range(ky, h, oh);
                    for kx in 0..k {
                        let wv = self.weight.data[((o * ci + i) * k + ky) * k + kx];
                        let (ox0, ox1) = self.valid_range(kx, w, ow);
                        for oy in oy0..oy1 {
                            let iy = oy * s + ky - self.pad;
                            let row = &mut plane[oy * ow..(oy + 1) * ow];
                            let xrow = &xin[iy * w..(iy + 1) * w];
                            for ox in ox0..ox1 {
                                row[ox] += wv * xrow[ox * s + kx - self.pad];
                            }
                        }
                    }
                }
            }
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and returns the input
    /// gradient when `need_input_grad` is set.
    pub fn backward(
        &self,
        x: &Tensor<T>,
        gy: &Tensor<T>,
        grad: &mut Conv2d<T>,
        need_input_grad: bool,
    ) -> Option<Tensor<T>> {
        let (ci, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
        let k = self.kernel();
        let (oh, ow) = (gy.shape[1], gy.shape[2]);
        let co = self.out_channels();
        let s = self.stride;
        let mut gx = need_input_grad.then(|| Tensor::zeros(&[ci, h, w]));
        for o in 0..co {
            let gplane = &gy.data[o * oh * ow..(o + 1) * oh * ow];
            grad.bias.data[o] += gplane.iter().copied().sum::<T>();
            for i in 0..ci {
                let xin = &x.data[i * h * w..(i + 1) * h * w];
                for ky in 0..k {
                    let (oy0, oy1) = self.valid_range(ky, h, oh);
                    for kx in 0..k {
                        let widx = ((o * ci + i) * k + ky) * k + kx;
                        let wv = self.weight.data[widx];
                        let (ox0, ox1) = self.valid_range(kx, w, ow);
                        let mut acc = T::zero();
                        for oy in oy0..oy1 {
                            let iy = oy * s + ky - self.pad;
                            let grow = &gplane[oy * ow..(oy + 1) * ow];
                            let xrow = &xin[iy * w..(iy + 1) * w];
                            for ox in ox0..ox1 {
                                acc += grow[ox] * xrow[ox * s + kx - self.pad];
                            }
                            if let Some(gx) = gx.as_mut() {
                                let gxrow = &mut gx.data[i * h * w + iy * w..i * h * w + (iy + 1) * w];
                                for ox in ox0..ox1 {
                                    gxrow[ox * s + kx - self.pad] += wv * grow[ox];
                                }
                            }
                        }
                        grad.weight.data[widx] += acc;
                    }
                }
            }
        }
        gx
    }
}

impl<T: Scalar> ParamSet<T> for Conv2d<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        out.push((join(prefix, "weight"), &self.weight));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        out.push((join(prefix, "bias"), &mut self.bias));
    }
}

/// 2x2 transposed convolution with stride 2 (exact 2x upsampling).
#[derive(Debug, Clone, PartialEq)]
pub struct Deconv2x2<T> {
    /// `[out, in, 2, 2]`
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Deconv2x2<T> {
    pub fn new(in_ch: usize, out_ch: usize) -> Self {
        Deconv2x2 {
            weight: Tensor::zeros(&[out_ch, in_ch, 2, 2]),
            bias: Tensor::zeros(&[out_ch]),
        }
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        let fan_in = self.weight.shape[1];
        self.weight.fill_uniform(rng, (6.0 / fan_in as f64).sqrt());
        self.bias.fill_zero();
    }

    pub fn zeros_like(&self) -> Self {
        Deconv2x2 {
            weight: self.weight.zeros_like(),
            bias: self.bias.zeros_like(),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let (ci, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
        let co = self.weight.shape[0];
        let (oh, ow) = (2 * h, 2 * w);
        let mut y = Tensor::zeros(&[co, oh, ow]);
        for o in 0..co {
            let plane = &mut y.data[o * oh * ow..(o + 1) * oh * ow];
            plane.iter_mut().for_each(|v| *v = self.bias.data[o]);
            for i in 0..ci {
                let xin = &x.data[i * h * w..(i + 1) * h * w];
                for dy in 0..2 {
                    for dx in 0..2 {
                        let wv = self.weight.data[((o * ci + i) * 2 + dy) * 2 + dx];
                        for iy in 0..h {
                            let row = &mut plane[(2 * iy + dy) * ow..(2 * iy + dy + 1) * ow];
                            for ix in 0..w {
                                row[2 * ix + dx] += wv * xin[iy * w + ix];
                            }
                        }
                    }
                }
            }
        }
        y
    }

    pub fn backward(
        &self,
        x: &Tensor<T>,
        gy: &Tensor<T>,
        grad: &mut Deconv2x2<T>,
        need_input_grad: bool,
    ) -> Option<Tensor<T>> {
        let (ci, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
        let co = self.weight.shape[0];
        let (oh, ow) = (2 * h, 2 * w);
        let mut gx = need_input_grad.then(|| Tensor::zeros(&[ci, h, w]));
        for o in 0..co {
            let gplane = &gy.data[o * oh * ow..(o + 1) * oh * ow];
            grad.bias.data[o] += gplane.iter().copied().sum::<T>();
            for i in 0..ci {
                let xin = &x.data[i * h * w..(i + 1) * h * w];
                for dy in 0..2 {
                    for dx in 0..2 {
                        let widx = ((o * ci + i) * 2 + dy) * 2 + dx;
                        let wv = self.weight.data[widx];
                        let mut acc = T::zero();
                        for iy in 0..h {
                            let grow = &gplane[(2 * iy + dy) * ow..(2 * iy + dy + 1) * ow];
                            for ix in 0..w {
                                let g = grow[2 * ix + dx];
                                acc += g * xin[iy * w + ix];
                                if let Some(gx) = gx.as_mut() {
                                    gx.data[i * h * w + iy * w + ix] += wv * g;
                                }
                            }
                        }
                        grad.weight.data[widx] += acc;
                    }
                }
            }
        }
        gx
    }
}

impl<T: Scalar> ParamSet<T> for Deconv2x2<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        out.push((join(prefix, "weight"), &self.weight));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        out.push((join(prefix, "bias"), &mut self.bias));
    }
}

/// Fully connected layer `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    /// `[out, in]`
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(input: usize, output: usize) -> Self {
        Linear {
            weight: Tensor::zeros(&[output, input]),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        let fan_in = self.weight.shape[1];
        self.weight.fill_uniform(rng, (6.0 / fan_in as f64).sqrt());
        self.bias.fill_zero();
    }

    /// Small-variance init for output layers.
    pub fn init_scaled<R: Rng>(&mut self, rng: &mut R, std_like: f64) {
        self.weight.fill_uniform(rng, std_like * 3f64.sqrt());
        self.bias.fill_zero();
    }

    pub fn zeros_like(&self) -> Self {
        Linear {
            weight: self.weight.zeros_like(),
            bias: self.bias.zeros_like(),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        let n = self.in_features();
        assert_eq!(x.len(), n, "linear input width");
        self.weight
            .data
            .chunks_exact(n)
            .zip(&self.bias.data)
            .map(|(row, &b)| b + row.iter().zip(x).map(|(&w, &v)| w * v).sum::<T>())
            .collect()
    }

    pub fn backward(&self, x: &[T], gy: &[T], grad: &mut Linear<T>, need_input_grad: bool) -> Option<Vec<T>> {
        let n = self.in_features();
        let mut gx = need_input_grad.then(|| vec![T::zero(); n]);
        for (o, &g) in gy.iter().enumerate() {
            grad.bias.data[o] += g;
            if g == T::zero() {
                continue;
            }
            let grow = &mut grad.weight.data[o * n..(o + 1) * n];
            for (gw, &v) in grow.iter_mut().zip(x) {
                *gw += g * v;
            }
            if let Some(gx) = gx.as_mut() {
                let wrow = &self.weight.data[o * n..(o + 1) * n];
                for (a, &w) in gx.iter_mut().zip(wrow) {
                    *a += g * w;
                }
            }
        }
        gx
    }
}

impl<T: Scalar> ParamSet<T> for Linear<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        out.push((join(prefix, "weight"), &self.weight));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        out.push((join(prefix, "bias"), &mut self.bias));
    }
}

pub fn relu_inplace<T: Scalar>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

/// Masks `grad` where the post-activation output was zero.
pub fn relu_backward_inplace<T: Scalar>(activated: &[T], grad: &mut [T]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}
