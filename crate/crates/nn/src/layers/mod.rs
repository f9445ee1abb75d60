mod conv;
mod dense;
mod pool;
mod projection;
mod simple;

use std::fmt;
use std::str::FromStr;

use rand::Rng;

pub use conv::{conv2d_direct, conv_axis, Conv2d, Padding};
pub use dense::Dense;
pub use pool::AvgPool2d;
pub use projection::Projection;
pub use simple::{Dropout, Flatten, Relu};

use crate::activations::Activations;
use crate::error::{NnError, Result};

/// Activation fused into a conv2d or dense layer.
///
/// `Softmax` marks the output head: the layer emits logits and the softmax
/// is applied inside [`crate::loss::softmax_cross_entropy`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Activation {
    #[default]
    Linear,
    Relu,
    Softmax,
}

impl Activation {
    pub(crate) fn apply(self, v: &mut [f64]) {
        if self == Activation::Relu {
            v.iter_mut().for_each(|x| *x = x.max(0.0));
        }
    }

    /// Turns `∂L/∂y` into `∂L/∂(pre-activation)` given the outputs `y`.
    pub(crate) fn backprop(self, y: &[f64], g: &mut [f64]) {
        if self == Activation::Relu {
            for (g, y) in g.iter_mut().zip(y) {
                if *y <= 0.0 {
                    *g = 0.0;
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Softmax => "softmax",
        })
    }
}

impl FromStr for Activation {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "none" => Ok(Activation::Linear),
            "relu" => Ok(Activation::Relu),
            "softmax" => Ok(Activation::Softmax),
            other => Err(NnError::Config(format!("unknown activation '{other}'"))),
        }
    }
}

/// `len` draws from `U[−a, a]` with `a = √(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(rng: &mut impl Rng, len: usize, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len).map(|_| rng.gen_range(-a..=a)).collect()
}

/// Whether a forward pass is part of training (dropout active, caches kept
/// for backward) or evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunMode {
    Train,
    Eval,
}

#[derive(Clone, Debug)]
pub enum Layer {
    Conv2d(Conv2d),
    AvgPool2d(AvgPool2d),
    Projection(Box<Projection>),
    Flatten(Flatten),
    Dense(Dense),
    Relu(Relu),
    Dropout(Dropout),
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::AvgPool2d(_) => "avgpool",
            Layer::Projection(_) => "tensor_projection",
            Layer::Flatten(_) => "flatten",
            Layer::Dense(_) => "dense",
            Layer::Relu(_) => "relu",
            Layer::Dropout(_) => "dropout",
        }
    }

    pub fn output_dims(&self) -> [usize; 3] {
        match self {
            Layer::Conv2d(l) => l.output_dims(),
            Layer::AvgPool2d(l) => l.output_dims(),
            Layer::Projection(l) => l.output_dims(),
            Layer::Flatten(l) => l.output_dims(),
            Layer::Dense(l) => [l.units(), 1, 1],
            Layer::Relu(l) => l.dims(),
            Layer::Dropout(l) => l.dims(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv2d(l) => l.param_count(),
            Layer::Projection(l) => l.param_count(),
            Layer::Dense(l) => l.param_count(),
            _ => 0,
        }
    }

    pub fn forward(&mut self, x: &Activations, mode: RunMode, step: u64) -> Result<Activations> {
        let training = mode == RunMode::Train;
        match self {
            Layer::Conv2d(l) => l.forward(x),
            Layer::AvgPool2d(l) => l.forward(x),
            Layer::Projection(l) => l.forward(x, training),
            Layer::Flatten(l) => l.forward(x),
            Layer::Dense(l) => l.forward(x),
            Layer::Relu(l) => l.forward(x),
            Layer::Dropout(l) => l.forward(x, training, step),
        }
    }

    pub fn backward(&mut self, dy: &Activations) -> Result<Activations> {
        match self {
            Layer::Conv2d(l) => l.backward(dy),
            Layer::AvgPool2d(l) => l.backward(dy),
            Layer::Projection(l) => l.backward(dy),
            Layer::Flatten(l) => l.backward(dy),
            Layer::Dense(l) => l.backward(dy),
            Layer::Relu(l) => l.backward(dy),
            Layer::Dropout(l) => l.backward(dy),
        }
    }

    /// Parameter blocks in a fixed order.
    pub fn params(&self) -> Vec<&[f64]> {
        match self {
            Layer::Conv2d(l) => vec![&l.weight, &l.bias],
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            Layer::Projection(l) => l.params(),
            _ => Vec::new(),
        }
    }

    /// Mutable parameter blocks, in the order of [`Layer::params`].
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::Conv2d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Projection(l) => l.layer.weights_mut().into_iter().flatten().map(|m| m.as_mut_slice()).collect(),
            _ => Vec::new(),
        }
    }

    /// Parameter blocks paired with the gradients of the last backward pass.
    pub fn params_and_grads(&mut self) -> Vec<(&mut [f64], &[f64])> {
        match self {
            Layer::Conv2d(l) => vec![(&mut l.weight[..], &l.dweight[..]), (&mut l.bias[..], &l.dbias[..])],
            Layer::Dense(l) => vec![(&mut l.weight[..], &l.dweight[..]), (&mut l.bias[..], &l.dbias[..])],
            Layer::Projection(l) => l.params_and_grads(),
            _ => Vec::new(),
        }
    }

    pub fn clear_cache(&mut self) {
        match self {
            Layer::Conv2d(l) => l.clear_cache(),
            Layer::AvgPool2d(l) => l.clear_cache(),
            Layer::Projection(l) => l.layer.clear_cache(),
            Layer::Dense(l) => l.clear_cache(),
            Layer::Relu(l) => l.clear_cache(),
            Layer::Dropout(l) => l.clear_cache(),
            Layer::Flatten(_) => {}
        }
    }
}
