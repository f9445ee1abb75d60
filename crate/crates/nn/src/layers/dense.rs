use rand::Rng;
use tenproj_core::gemm::{gemm, MatMut, MatRef};

use super::{glorot_uniform, Activation};
use crate::activations::Activations;
use crate::error::{NnError, Result};

#[derive(Clone, Debug)]
struct DenseCache {
    input: Activations,
    output: Activations,
}

/// Affine map `y = W x + b` on flattened samples. `W` is `out × in`,
/// column-major.
#[derive(Clone, Debug)]
pub struct Dense {
    inputs: usize,
    units: usize,
    activation: Activation,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub dweight: Vec<f64>,
    pub dbias: Vec<f64>,
    cache: Option<DenseCache>,
}

impl Dense {
    pub fn new(inputs: usize, units: usize, activation: Activation, rng: &mut impl Rng) -> Result<Self> {
        if inputs == 0 || units == 0 {
            return Err(NnError::Config(format!("dense needs positive sizes, got {inputs} -> {units}")));
        }
        Ok(Self {
            inputs,
            units,
            activation,
            weight: glorot_uniform(rng, inputs * units, inputs, units),
            bias: vec![0.0; units],
            dweight: vec![0.0; inputs * units],
            dbias: vec![0.0; units],
            cache: None,
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn units(&self) -> usize {
        self.units
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&mut self, x: &Activations) -> Result<Activations> {
        x.expect_dims([self.inputs, 1, 1], "dense")?;
        let n = x.n();
        let mut out = Activations::zeros(n, [self.units, 1, 1]);
        for i in 0..n {
            out.sample_mut(i).copy_from_slice(&self.bias);
        }
        gemm(
            1.0,
            MatRef::col_major(&self.weight, self.units, self.inputs),
            MatRef::col_major(x.as_slice(), self.inputs, n),
            1.0,
            MatMut::col_major(out.as_mut_slice(), self.units, n),
        );
        self.activation.apply(out.as_mut_slice());
        self.cache = Some(DenseCache {
            input: x.clone(),
            output: out.clone(),
        });
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Activations) -> Result<Activations> {
        let cache = self.cache.as_ref().ok_or(NnError::NoForwardCache("dense"))?;
        dy.expect_dims([self.units, 1, 1], "dense backward")?;
        let n = cache.input.n();
        if dy.n() != n {
            return Err(NnError::Shape(format!("dense backward got {} samples for {n}", dy.n())));
        }
        let mut g = dy.clone();
        self.activation.backprop(cache.output.as_slice(), g.as_mut_slice());
        let gm = MatRef::col_major(g.as_slice(), self.units, n);
        gemm(
            1.0,
            gm,
            MatRef::col_major(cache.input.as_slice(), self.inputs, n).t(),
            0.0,
            MatMut::col_major(&mut self.dweight, self.units, self.inputs),
        );
        self.dbias.fill(0.0);
        for i in 0..n {
            for (db, v) in self.dbias.iter_mut().zip(g.sample(i)) {
                *db += v;
            }
        }
        let mut dx = Activations::zeros(n, [self.inputs, 1, 1]);
        gemm(
            1.0,
            MatRef::col_major(&self.weight, self.units, self.inputs).t(),
            gm,
            0.0,
            MatMut::col_major(dx.as_mut_slice(), self.inputs, n),
        );
        Ok(dx)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
