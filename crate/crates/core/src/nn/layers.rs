use ndarray::{Array1, Array2, ArrayD, Axis, Ix2, Ix4, IxDyn};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::tensor::{col2im, conv_out, from_channel_major, im2col, to_channel_major};
use crate::Scalar;

/// A trainable tensor with its accumulated gradient.
#[derive(Clone, Debug)]
pub struct Param<T> {
    pub value: ArrayD<T>,
    pub grad: ArrayD<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: ArrayD<T>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Param { value, grad }
    }

    fn uniform<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Self {
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        Self::new(ArrayD::from_shape_simple_fn(IxDyn(shape), || T::of(dist.sample(rng))))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }
}

/// One differentiable stage of a network.
///
/// `forward` runs in training mode and caches whatever `backward` needs;
/// `backward` accumulates parameter gradients and returns the input gradient.
/// `infer` is the cache-free evaluation path and takes `&self`.
pub trait Layer<T: Scalar>: Send + Sync {
    fn forward(&mut self, x: ArrayD<T>) -> ArrayD<T>;
    fn backward(&mut self, dy: ArrayD<T>) -> ArrayD<T>;
    fn infer(&self, x: ArrayD<T>) -> ArrayD<T>;

    fn params(&self) -> Vec<&Param<T>> {
        Vec::new()
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }
    /// Non-trainable state that must survive a checkpoint (batch-norm statistics).
    fn buffers(&self) -> Vec<&ArrayD<T>> {
        Vec::new()
    }
    fn buffers_mut(&mut self) -> Vec<&mut ArrayD<T>> {
        Vec::new()
    }
    /// Parameter values followed by buffers; the checkpoint order.
    fn state(&self) -> Vec<&ArrayD<T>> {
        let mut out: Vec<&ArrayD<T>> = self.params().into_iter().map(|p| &p.value).collect();
        out.extend(self.buffers());
        out
    }
    fn state_mut(&mut self) -> Vec<&mut ArrayD<T>> {
        self.params_mut().into_iter().map(|p| &mut p.value).collect()
    }
}

fn take_cache<C>(cache: &mut Option<C>, layer: &str) -> C {
    cache.take().unwrap_or_else(|| panic!("{layer}: backward called without a forward"))
}

pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Array2<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Linear {
            weight: Param::uniform(&[outputs, inputs], bound, rng),
            bias: Param::uniform(&[outputs], bound, rng),
            input: None,
        }
    }

    fn apply(&self, x: &Array2<T>) -> Array2<T> {
        let w = self.weight.value.view().into_dimensionality::<Ix2>().expect("2-d weight");
        let b = self.bias.value.view().into_dimensionality::<ndarray::Ix1>().expect("1-d bias");
        x.dot(&w.t()) + b
    }
}

impl<T: Scalar> Layer<T> for Linear<T> {
    fn forward(&mut self, x: ArrayD<T>) -> ArrayD<T> {
        let x = x.into_dimensionality::<Ix2>().expect("linear input is (N, F)");
        let y = self.apply(&x);
        self.input = Some(x);
        y.into_dyn()
    }

    fn backward(&mut self, dy: ArrayD<T>) -> ArrayD<T> {
        let x = take_cache(&mut self.input, "linear");
        let dy = dy.into_dimensionality::<Ix2>().expect("linear grad is (N, F)");
        let w = self.weight.value.view().into_dimensionality::<Ix2>().expect("2-d weight");
        let mut gw = self.weight.grad.view_mut().into_dimensionality::<Ix2>().expect("2-d grad");
        ndarray::linalg::general_mat_mul(T::one(), &dy.t(), &x, T::one(), &mut gw);
        self.bias.grad += &dy.sum_axis(Axis(0)).into_dyn();
        dy.dot(&w).into_dyn()
    }

    fn infer(&self, x: ArrayD<T>) -> ArrayD<T> {
        let x = x.into_dimensionality::<Ix2>().expect("linear input is (N, F)");
        self.apply(&x).into_dyn()
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// 2-d convolution; weight stored as (out, in*k*k).
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    kernel: usize,
    stride: usize,
    pad: usize,
    input_grad: bool,
    cache: Option<(Array2<T>, Shape4)>,
}

/// Input shape (N, C, H, W) saved for the backward pass.
type Shape4 = (usize, usize, usize, usize);

impl<T: Scalar> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = inputs * kernel * kernel;
        let bound = 1.0 / (fan_in as f64).sqrt();
        Conv2d {
            weight: Param::uniform(&[outputs, fan_in], bound, rng),
            bias: Param::uniform(&[outputs], bound, rng),
            kernel,
            stride,
            pad,
            input_grad: true,
            cache: None,
        }
    }

    /// Skip the input gradient; for a first layer fed with data.
    /// `backward` then returns an empty array.
    pub fn without_input_grad(mut self) -> Self {
        self.input_grad = false;
        self
    }

    fn apply(&self, cols: &Array2<T>, n: usize, ho: usize, wo: usize) -> ArrayD<T> {
        let w = self.weight.value.view().into_dimensionality::<Ix2>().expect("2-d weight");
        let mut out = w.dot(cols);
        for (mut row, &b) in out.rows_mut().into_iter().zip(self.bias.value.iter()) {
            row += b;
        }
        from_channel_major(out.view(), n, ho, wo).into_dyn()
    }
}

impl<T: Scalar> Layer<T> for Conv2d<T> {
    fn forward(&mut self, x: ArrayD<T>) -> ArrayD<T> {
        let x = x.into_dimensionality::<Ix4>().expect("conv input is (N, C, H, W)");
        let (n, c, h, w) = x.dim();
        let cols = im2col(x.view(), self.kernel, self.stride, self.pad);
        let ho = conv_out(h, self.kernel, self.stride, self.pad);
        let wo = conv_out(w, self.kernel, self.stride, self.pad);
        let y = self.apply(&cols, n, ho, wo);
        self.cache = Some((cols, (n, c, h, w)));
        y
    }

    fn backward(&mut self, dy: ArrayD<T>) -> ArrayD<T> {
        let (cols, shape) = take_cache(&mut self.cache, "conv2d");
        let dy = dy.into_dimensionality::<Ix4>().expect("conv grad is 4-d");
        let dmat = to_channel_major(dy.view());
        let w = self.weight.value.view().into_dimensionality::<Ix2>().expect("2-d weight");
        let mut gw = self.weight.grad.view_mut().into_dimensionality::<Ix2>().expect("2-d grad");
        ndarray::linalg::general_mat_mul(T::one(), &dmat, &cols.t(), T::one(), &mut gw);
        self.bias.grad += &dmat.sum_axis(Axis(1)).into_dyn();
        if !self.input_grad {
            return ArrayD::zeros(IxDyn(&[0]));
        }
        let dcols = w.t().dot(&dmat);
        col2im(dcols.view(), shape, self.kernel, self.stride, self.pad).into_dyn()
    }

    fn infer(&self, x: ArrayD<T>) -> ArrayD<T> {
        let x = x.into_dimensionality::<Ix4>().expect("conv input is (N, C, H, W)");
        let (n, _, h, w) = x.dim();
        let cols = im2col(x.view(), self.kernel, self.stride, self.pad);
        let ho = conv_out(h, self.kernel, self.stride, self.pad);
        let wo = conv_out(w, self.kernel, self.stride, self.pad);
        self.apply(&cols, n, ho, wo)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Transposed convolution (fractionally strided); weight stored as (in, out*k*k).
pub struct ConvTranspose2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    outputs: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    cache: Option<(Array2<T>, (usize, usize, usize))>,
}

impl<T: Scalar> ConvTranspose2d<T> {
    pub fn new<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / ((outputs * kernel * kernel) as f64).sqrt();
        ConvTranspose2d {
            weight: Param::uniform(&[inputs, outputs * kernel * kernel], bound, rng),
            bias: Param::uniform(&[outputs], bound, rng),
            outputs,
            kernel,
            stride,
            pad,
            cache: None,
        }
    }

    fn out_len(&self, len: usize) -> usize {
        (len - 1) * self.stride + self.kernel - 2 * self.pad
    }

    fn apply(&self, xmat: &Array2<T>, n: usize, h: usize, w: usize) -> ArrayD<T> {
        let wm = self.weight.value.view().into_dimensionality::<Ix2>().expect("2-d weight");
        let cols = wm.t().dot(xmat);
        let (ho, wo) = (self.out_len(h), self.out_len(w));
        let mut y = col2im(cols.view(), (n, self.outputs, ho, wo), self.kernel, self.stride, self.pad);
        for mut sample in y.outer_iter_mut() {
            for (mut plane, &b) in sample.outer_iter_mut().zip(self.bias.value.iter()) {
                plane += b;
            }
        }
        y.into_dyn()
    }
}

impl<T: Scalar> Layer<T> for ConvTranspose2d<T> {
    fn forward(&mut self, x: ArrayD<T>) -> ArrayD<T> {
        let x = x.into_dimensionality::<Ix4>().expect("deconv input is (N, C, H, W)");
        let (n, _, h, w) = x.dim();
        let xmat = to_channel_major(x.view());
        let y = self.apply(&xmat, n, h, w);
        self.cache = Some((xmat, (n, h, w)));
        y
    }

    fn backward(&mut self, dy: ArrayD<T>) -> ArrayD<T> {
        let (xmat, (n, h, w)) = take_cache(&mut self.cache, "conv_transpose2d");
        let dy = dy.into_dimensionality::<Ix4>().expect("deconv grad is 4-d");
        self.bias.grad += &dy.sum_axis(Axis(0)).sum_axis(Axis(1)).sum_axis(Axis(1)).into_dyn();
        let dcols = im2col(dy.view(), self.kernel, self.stride, self.pad);
        let wm = self.weight.value.view().into_dimensionality::<Ix2>().expect("2-d weight");
        let mut gw = self.weight.grad.view_mut().into_dimensionality::<Ix2>().expect("2-d grad");
        ndarray::linalg::general_mat_mul(T::one(), &xmat, &dcols.t(), T::one(), &mut gw);
        let dx = wm.dot(&dcols);
        from_channel_major(dx.view(), n, h, w).into_dyn()
    }

    fn infer(&self, x: ArrayD<T>) -> ArrayD<T> {
        let x = x.into_dimensionality::<Ix4>().expect("deconv input is (N, C, H, W)");
        let (n, _, h, w) = x.dim();
        self.apply(&to_channel_major(x.view()), n, h, w)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Batch normalization over axis 1 of an (N, C, ...) tensor.
pub struct BatchNorm<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: ArrayD<T>,
    pub running_var: ArrayD<T>,
    momentum: T,
    eps: T,
    cache: Option<(ArrayD<T>, Array1<T>)>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: Param::new(ArrayD::from_elem(IxDyn(&[channels]), T::one())),
            beta: Param::new(ArrayD::zeros(IxDyn(&[channels]))),
            running_mean: ArrayD::zeros(IxDyn(&[channels])),
            running_var: ArrayD::from_elem(IxDyn(&[channels]), T::one()),
            momentum: T::of(0.1),
            eps: T::of(1e-5),
            cache: None,
        }
    }

    /// View as (N, C, L).
    fn grouped(x: ArrayD<T>) -> (ArrayD<T>, Vec<usize>) {
        let shape = x.shape().to_vec();
        let rest: usize = shape[2..].iter().product();
        let g = x.into_shape_with_order(IxDyn(&[shape[0], shape[1], rest])).expect("contiguous");
        (g, shape)
    }
}

impl<T: Scalar> Layer<T> for BatchNorm<T> {
    fn forward(&mut self, x: ArrayD<T>) -> ArrayD<T> {
        let (x, shape) = Self::grouped(x.as_standard_layout().into_owned());
        let (n, c, l) = (shape[0], shape[1], x.shape()[2]);
        let m = n * l;
        let mt = T::of_usize(m);
        let mut xhat = x;
        let mut inv_std = Array1::<T>::zeros(c);
        for ch in 0..c {
            let mut plane = xhat.index_axis_mut(Axis(1), ch);
            let mean = plane.sum() / mt;
            let var = plane.fold(T::zero(), |acc, &v| acc + (v - mean) * (v - mean)) / mt;
            let istd = T::one() / (var + self.eps).sqrt();
            plane.mapv_inplace(|v| (v - mean) * istd);
            inv_std[ch] = istd;
            let unbiased = if m > 1 { var * mt / T::of_usize(m - 1) } else { var };
            let one_m = T::one() - self.momentum;
            self.running_mean[ch] = one_m * self.running_mean[ch] + self.momentum * mean;
            self.running_var[ch] = one_m * self.running_var[ch] + self.momentum * unbiased;
        }
        let mut y = xhat.clone();
        for ch in 0..c {
            let (g, b) = (self.gamma.value[ch], self.beta.value[ch]);
            y.index_axis_mut(Axis(1), ch).mapv_inplace(|v| g * v + b);
        }
        self.cache = Some((xhat, inv_std));
        y.into_shape_with_order(IxDyn(&shape)).expect("same size")
    }

    fn backward(&mut self, dy: ArrayD<T>) -> ArrayD<T> {
        let (xhat, inv_std) = take_cache(&mut self.cache, "batchnorm");
        let (dy, shape) = Self::grouped(dy.as_standard_layout().into_owned());
        let c = shape[1];
        let mt = T::of_usize(xhat.shape()[0] * xhat.shape()[2]);
        let mut dx = dy.clone();
        for ch in 0..c {
            let dyc = dy.index_axis(Axis(1), ch);
            let xh = xhat.index_axis(Axis(1), ch);
            let dbeta = dyc.sum();
            let dgamma = (&dyc * &xh).sum();
            self.beta.grad[ch] += dbeta;
            self.gamma.grad[ch] += dgamma;
            let scale = self.gamma.value[ch] * inv_std[ch] / mt;
            let mut dxc = dx.index_axis_mut(Axis(1), ch);
            ndarray::Zip::from(&mut dxc).and(&xh).for_each(|d, &x| {
                *d = scale * (mt * *d - dbeta - x * dgamma);
            });
        }
        dx.into_shape_with_order(IxDyn(&shape)).expect("same size")
    }

    fn infer(&self, x: ArrayD<T>) -> ArrayD<T> {
        let (mut x, shape) = Self::grouped(x.as_standard_layout().into_owned());
        for ch in 0..shape[1] {
            let istd = T::one() / (self.running_var[ch] + self.eps).sqrt();
            let (g, b, mean) = (self.gamma.value[ch], self.beta.value[ch], self.running_mean[ch]);
            x.index_axis_mut(Axis(1), ch).mapv_inplace(|v| g * (v - mean) * istd + b);
        }
        x.into_shape_with_order(IxDyn(&shape)).expect("same size")
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }
    fn buffers(&self) -> Vec<&ArrayD<T>> {
        vec![&self.running_mean, &self.running_var]
    }
    fn buffers_mut(&mut self) -> Vec<&mut ArrayD<T>> {
        vec![&mut self.running_mean, &mut self.running_var]
    }
    fn state_mut(&mut self) -> Vec<&mut ArrayD<T>> {
        vec![&mut self.gamma.value, &mut self.beta.value, &mut self.running_mean, &mut self.running_var]
    }
}

/// Leaky ReLU; a slope of zero gives a plain ReLU.
pub struct LeakyRelu<T> {
    slope: T,
    input: Option<ArrayD<T>>,
}

impl<T: Scalar> LeakyRelu<T> {
    pub fn new(slope: f64) -> Self {
        LeakyRelu { slope: T::of(slope), input: None }
    }

    pub fn relu() -> Self {
        Self::new(0.0)
    }
}

impl<T: Scalar> Layer<T> for LeakyRelu<T> {
    fn forward(&mut self, x: ArrayD<T>) -> ArrayD<T> {
        let y = self.infer(x.clone());
        self.input = Some(x);
        y
    }

    fn backward(&mut self, mut dy: ArrayD<T>) -> ArrayD<T> {
        let x = take_cache(&mut self.input, "leaky_relu");
        let slope = self.slope;
        ndarray::Zip::from(&mut dy).and(&x).for_each(|d, &v| {
            if v <= T::zero() {
                *d *= slope;
            }
        });
        dy
    }

    fn infer(&self, mut x: ArrayD<T>) -> ArrayD<T> {
        let slope = self.slope;
        x.mapv_inplace(|v| if v > T::zero() { v } else { v * slope });
        x
    }
}

/// (N, ...) -> (N, F).
#[derive(Default)]
pub struct Flatten {
    shape: Option<Vec<usize>>,
}

impl<T: Scalar> Layer<T> for Flatten {
    fn forward(&mut self, x: ArrayD<T>) -> ArrayD<T> {
        self.shape = Some(x.shape().to_vec());
        self.infer(x)
    }

    fn backward(&mut self, dy: ArrayD<T>) -> ArrayD<T> {
        let shape = take_cache(&mut self.shape, "flatten");
        dy.into_shape_with_order(IxDyn(&shape)).expect("same size")
    }

    fn infer(&self, x: ArrayD<T>) -> ArrayD<T> {
        let n = x.shape()[0];
        let f = x.len() / n.max(1);
        x.as_standard_layout().into_owned().into_shape_with_order(IxDyn(&[n, f])).expect("same size")
    }
}

/// (N, C*H*W) -> (N, C, H, W).
pub struct Unflatten {
    dims: [usize; 3],
}

impl Unflatten {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Unflatten { dims: [channels, height, width] }
    }
}

impl<T: Scalar> Layer<T> for Unflatten {
    fn forward(&mut self, x: ArrayD<T>) -> ArrayD<T> {
        self.infer(x)
    }

    fn backward(&mut self, dy: ArrayD<T>) -> ArrayD<T> {
        let n = dy.shape()[0];
        dy.as_standard_layout().into_owned().into_shape_with_order(IxDyn(&[n, self.dims.iter().product()])).expect("same size")
    }

    fn infer(&self, x: ArrayD<T>) -> ArrayD<T> {
        let n = x.shape()[0];
        let [c, h, w] = self.dims;
        x.as_standard_layout().into_owned().into_shape_with_order(IxDyn(&[n, c, h, w])).expect("same size")
    }
}

/// Layers applied in order.
#[derive(Default)]
pub struct Sequential<T> {
    layers: Vec<Box<dyn Layer<T>>>,
}

impl<T: Scalar> Sequential<T> {
    pub fn new() -> Self {
        Sequential { layers: Vec::new() }
    }

    pub fn push(mut self, layer: impl Layer<T> + 'static) -> Self {
        self.layers.push(Box::new(layer));
        self
    }
}

impl<T: Scalar> Layer<T> for Sequential<T> {
    fn forward(&mut self, x: ArrayD<T>) -> ArrayD<T> {
        self.layers.iter_mut().fold(x, |x, l| l.forward(x))
    }

    fn backward(&mut self, dy: ArrayD<T>) -> ArrayD<T> {
        self.layers.iter_mut().rev().fold(dy, |d, l| l.backward(d))
    }

    fn infer(&self, x: ArrayD<T>) -> ArrayD<T> {
        self.layers.iter().fold(x, |x, l| l.infer(x))
    }

    fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
    fn buffers(&self) -> Vec<&ArrayD<T>> {
        self.layers.iter().flat_map(|l| l.buffers()).collect()
    }
    fn buffers_mut(&mut self) -> Vec<&mut ArrayD<T>> {
        self.layers.iter_mut().flat_map(|l| l.buffers_mut()).collect()
    }
    fn state(&self) -> Vec<&ArrayD<T>> {
        self.layers.iter().flat_map(|l| l.state()).collect()
    }
    fn state_mut(&mut self) -> Vec<&mut ArrayD<T>> {
        self.layers.iter_mut().flat_map(|l| l.state_mut()).collect()
    }
}
