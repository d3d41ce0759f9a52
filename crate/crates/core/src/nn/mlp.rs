use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::matrix::{gemm_into, Matrix};
use crate::error::{ensure, Error, Result};
use crate::scalar::{sigmoid, softplus, Scalar};

/// Lower clamp applied to positive outputs (and both ends of the sigmoid)
/// before any log or reciprocal is taken downstream.
pub const OUTPUT_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum HiddenActivation {
    #[default]
    ReLU,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum OutputActivation {
    #[default]
    Identity,
    /// `max(softplus(z), 1e-6)`
    Softplus,
    /// `clamp(sigmoid(z), 1e-6, 1 - 1e-6)`
    Sigmoid,
}

impl OutputActivation {
    /// Activated value and its derivative w.r.t. the pre-activation.
    /// The derivative is zero wherever the clamp is active.
    #[inline]
    pub fn apply<T: Scalar>(self, z: T) -> (T, T) {
        let lo = T::lit(OUTPUT_CLAMP);
        match self {
            OutputActivation::Identity => (z, T::one()),
            OutputActivation::Softplus => {
                let v = softplus(z);
                if v > lo {
                    (v, sigmoid(z))
                } else {
                    (lo, T::zero())
                }
            }
            OutputActivation::Sigmoid => {
                let s = sigmoid(z);
                let hi = T::one() - lo;
                if s < lo {
                    (lo, T::zero())
                } else if s > hi {
                    (hi, T::zero())
                } else {
                    (s, s * (T::one() - s))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
    pub seed: u64,
}

impl MlpConfig {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims,
            output_dim,
            hidden_activation: HiddenActivation::ReLU,
            output_activation: OutputActivation::Identity,
            seed: 0,
        }
    }

    pub fn with_output(mut self, act: OutputActivation) -> Self {
        self.output_activation = act;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.input_dim >= 1, Config, "input_dim must be >= 1");
        ensure!(self.output_dim >= 1, Config, "output_dim must be >= 1");
        ensure!(!self.hidden_dims.is_empty(), Config, "hidden_dims must be non-empty");
        ensure!(self.hidden_dims.iter().all(|&h| h >= 1), Config, "hidden dims must be >= 1");
        Ok(())
    }

    fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim];
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.output_dim);
        dims
    }
}

/// One dense layer; `weight` is `fan_in x fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    fn zeros_like(&self) -> Self {
        Self {
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: vec![T::zero(); self.bias.len()],
        }
    }

    fn param_count(&self) -> usize {
        self.weight.as_slice().len() + self.bias.len()
    }
}

/// Feed-forward network: ReLU hidden layers and a configurable output head.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Layer<T>>,
    output_activation: OutputActivation,
    /// Bumped on every parameter update; ties caches to a parameter state.
    generation: u64,
}

/// Activations recorded by [`Mlp::forward`] for a later [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    /// Input to each layer; entry 0 is the network input.
    layer_inputs: Vec<Matrix<T>>,
    /// Derivative of the output activation at each output entry.
    output_slope: Matrix<T>,
    generation: u64,
    dims: Vec<usize>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn batch_size(&self) -> usize {
        self.layer_inputs.first().map_or(0, Matrix::rows)
    }
}

/// Parameter gradients; shapes mirror the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(mlp: &Mlp<T>) -> Self {
        Self { layers: mlp.layers.iter().map(Layer::zeros_like).collect() }
    }

    pub fn accumulate(&mut self, other: &Self) -> Result<()> {
        ensure!(self.layers.len() == other.layers.len(), Shape, "gradient layer counts differ");
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            ensure!(a.weight.shape() == b.weight.shape(), Shape, "gradient weight shapes differ");
            for (x, &y) in a.weight.as_mut_slice().iter_mut().zip(b.weight.as_slice()) {
                *x += y;
            }
            for (x, &y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
        Ok(())
    }

    /// Flattened in the same order as [`Mlp::param`].
    pub fn flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }
}

impl<T: Scalar> Mlp<T> {
    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights, zero biases.
    pub fn new(config: &MlpConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let dims = config.dims();
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weight = Matrix::from_fn(fan_in, fan_out, |_, _| T::lit(rng.random_range(-bound..bound)));
                Layer { weight, bias: vec![T::zero(); fan_out] }
            })
            .collect();
        Ok(Self { layers, output_activation: config.output_activation, generation: 0 })
    }

    /// Builds a network from explicit layers (ReLU between them).
    pub fn from_layers(layers: Vec<Layer<T>>, output_activation: OutputActivation) -> Result<Self> {
        ensure!(!layers.is_empty(), Config, "at least one layer required");
        for (i, l) in layers.iter().enumerate() {
            ensure!(
                l.weight.rows() >= 1 && l.weight.cols() >= 1,
                Config,
                "layer {i} has an empty weight matrix"
            );
            ensure!(l.bias.len() == l.weight.cols(), Shape, "layer {i} bias length mismatch");
        }
        for (i, w) in layers.windows(2).enumerate() {
            ensure!(
                w[0].weight.cols() == w[1].weight.rows(),
                Shape,
                "layer {i} output {} does not feed layer {} input {}",
                w[0].weight.cols(),
                i + 1,
                w[1].weight.rows()
            );
        }
        Ok(Self { layers, output_activation, generation: 0 })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.cols()
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output_activation
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| l.weight.shape()).collect()
    }

    fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.weight.cols()));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    fn locate(&self, mut index: usize) -> (usize, bool, usize) {
        for (li, l) in self.layers.iter().enumerate() {
            let nw = l.weight.as_slice().len();
            if index < nw {
                return (li, true, index);
            }
            index -= nw;
            if index < l.bias.len() {
                return (li, false, index);
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    /// Parameter by flat index: per layer, weights row-major then bias.
    pub fn param(&self, index: usize) -> T {
        let (li, is_w, i) = self.locate(index);
        if is_w {
            self.layers[li].weight.as_slice()[i]
        } else {
            self.layers[li].bias[i]
        }
    }

    pub fn set_param(&mut self, index: usize, value: T) {
        let (li, is_w, i) = self.locate(index);
        if is_w {
            self.layers[li].weight.as_mut_slice()[i] = value;
        } else {
            self.layers[li].bias[i] = value;
        }
        self.generation += 1;
    }

    fn check_input(&self, inputs: &Matrix<T>) -> Result<()> {
        ensure!(
            inputs.cols() == self.input_dim(),
            Shape,
            "network expects {} input columns, got {}",
            self.input_dim(),
            inputs.cols()
        );
        ensure!(inputs.is_finite(), Numeric, "network input contains NaN/Inf");
        Ok(())
    }

    fn affine(layer: &Layer<T>, input: &Matrix<T>) -> Matrix<T> {
        let mut z = Matrix::zeros(input.rows(), layer.weight.cols());
        for r in 0..z.rows() {
            z.row_mut(r).copy_from_slice(&layer.bias);
        }
        gemm_into(input, false, &layer.weight, false, T::one(), &mut z);
        z
    }

    /// Outputs only; no cache is kept.
    pub fn predict(&self, inputs: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(inputs)?;
        let mut a = inputs.clone();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let z = Self::affine(layer, &a);
            a = if li < last {
                z.map(|v| v.max(T::zero()))
            } else {
                let act = self.output_activation;
                z.map(|v| act.apply(v).0)
            };
        }
        ensure!(a.is_finite(), Numeric, "network output is not finite");
        Ok(a)
    }

    pub fn forward(&self, inputs: &Matrix<T>) -> Result<(Matrix<T>, ForwardCache<T>)> {
        self.check_input(inputs)?;
        let last = self.layers.len() - 1;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        layer_inputs.push(inputs.clone());
        let mut outputs = None;
        let mut slope = None;
        for (li, layer) in self.layers.iter().enumerate() {
            let z = Self::affine(layer, &layer_inputs[li]);
            if li < last {
                layer_inputs.push(z.map(|v| v.max(T::zero())));
            } else {
                let mut out = z.clone();
                let mut d = z;
                let act = self.output_activation;
                for (o, s) in out.as_mut_slice().iter_mut().zip(d.as_mut_slice()) {
                    let (v, dv) = act.apply(*o);
                    *o = v;
                    *s = dv;
                }
                outputs = Some(out);
                slope = Some(d);
            }
        }
        let outputs = outputs.expect("at least one layer");
        ensure!(outputs.is_finite(), Numeric, "network output is not finite");
        let cache = ForwardCache {
            layer_inputs,
            output_slope: slope.expect("at least one layer"),
            generation: self.generation,
            dims: self.dims(),
        };
        Ok((outputs, cache))
    }

    /// Backpropagates `output_grad` (gradient of a scalar loss w.r.t. the
    /// activated outputs) into parameter gradients.
    pub fn backward(&self, cache: &ForwardCache<T>, output_grad: &Matrix<T>) -> Result<Gradients<T>> {
        self.backward_impl(cache, output_grad, false).map(|(g, _)| g)
    }

    /// Like [`Mlp::backward`], also returning the gradient w.r.t. the inputs.
    pub fn backward_with_input_grad(
        &self,
        cache: &ForwardCache<T>,
        output_grad: &Matrix<T>,
    ) -> Result<(Gradients<T>, Matrix<T>)> {
        self.backward_impl(cache, output_grad, true).map(|(g, d)| (g, d.expect("requested")))
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache<T>,
        output_grad: &Matrix<T>,
        want_input_grad: bool,
    ) -> Result<(Gradients<T>, Option<Matrix<T>>)> {
        if cache.generation != self.generation || cache.dims != self.dims() {
            return Err(Error::Usage(
                "forward cache does not belong to the current network parameters".into(),
            ));
        }
        ensure!(
            output_grad.shape() == cache.output_slope.shape(),
            Shape,
            "output gradient {:?} vs forward output {:?}",
            output_grad.shape(),
            cache.output_slope.shape()
        );
        ensure!(output_grad.is_finite(), Numeric, "output gradient contains NaN/Inf");

        let mut delta = output_grad.clone();
        for (d, &s) in delta.as_mut_slice().iter_mut().zip(cache.output_slope.as_slice()) {
            *d *= s;
        }
        let mut grads: Vec<Layer<T>> = Vec::with_capacity(self.layers.len());
        let mut input_grad = None;
        for li in (0..self.layers.len()).rev() {
            let input = &cache.layer_inputs[li];
            let layer = &self.layers[li];
            let mut dw = Matrix::zeros(layer.weight.rows(), layer.weight.cols());
            gemm_into(input, true, &delta, false, T::zero(), &mut dw);
            let db = delta.column_sums();
            grads.push(Layer { weight: dw, bias: db });
            if li > 0 || want_input_grad {
                let mut da = Matrix::zeros(delta.rows(), layer.weight.rows());
                gemm_into(&delta, false, &layer.weight, true, T::zero(), &mut da);
                if li > 0 {
                    // ReLU: slope 1 where the activation is positive, 0 otherwise (incl. at 0).
                    for (g, &a) in da.as_mut_slice().iter_mut().zip(input.as_slice()) {
                        if a <= T::zero() {
                            *g = T::zero();
                        }
                    }
                    delta = da;
                } else {
                    input_grad = Some(da);
                }
            }
        }
        grads.reverse();
        let grads = Gradients { layers: grads };
        ensure!(grads.is_finite(), Numeric, "gradient is not finite");
        Ok((grads, input_grad))
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer<T>] {
        self.generation += 1;
        &mut self.layers
    }
}
