use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::activations::Activations;
use crate::error::{NnError, Result};

/// Standalone `max(0, x)`.
#[derive(Clone, Debug)]
pub struct Relu {
    dims: [usize; 3],
    output: Option<Activations>,
}

impl Relu {
    pub fn new(dims: [usize; 3]) -> Self {
        Self { dims, output: None }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn forward(&mut self, x: &Activations) -> Result<Activations> {
        x.expect_dims(self.dims, "relu")?;
        let mut out = x.clone();
        out.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
        self.output = Some(out.clone());
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Activations) -> Result<Activations> {
        let out = self.output.as_ref().ok_or(NnError::NoForwardCache("relu"))?;
        if dy.dims() != out.dims() || dy.n() != out.n() {
            return Err(NnError::Shape("relu backward shape differs from forward".into()));
        }
        let mut dx = dy.clone();
        for (g, y) in dx.as_mut_slice().iter_mut().zip(out.as_slice()) {
            if *y <= 0.0 {
                *g = 0.0;
            }
        }
        Ok(dx)
    }

    pub fn clear_cache(&mut self) {
        self.output = None;
    }
}

/// Relabels each sample as a `[len, 1, 1]` vector. The element order is the
/// column-major storage order, so this is a no-op on the data.
#[derive(Clone, Debug)]
pub struct Flatten {
    in_dims: [usize; 3],
}

impl Flatten {
    pub fn new(in_dims: [usize; 3]) -> Self {
        Self { in_dims }
    }

    pub fn input_dims(&self) -> [usize; 3] {
        self.in_dims
    }

    pub fn output_dims(&self) -> [usize; 3] {
        [self.in_dims.iter().product(), 1, 1]
    }

    pub fn forward(&self, x: &Activations) -> Result<Activations> {
        x.expect_dims(self.in_dims, "flatten")?;
        x.clone().reshape(self.output_dims())
    }

    pub fn backward(&self, dy: &Activations) -> Result<Activations> {
        dy.expect_dims(self.output_dims(), "flatten backward")?;
        dy.clone().reshape(self.in_dims)
    }
}

/// Inverted dropout: in training, each unit is zeroed with probability `p`
/// and survivors are scaled by `1 / (1 − p)`; in evaluation it is the
/// identity.
///
/// The mask for a step is drawn from ChaCha8 keyed by `seed`, stream
/// `stream`, at a word offset derived from the step counter, so it depends
/// only on `(seed, stream, step)`.
#[derive(Clone, Debug)]
pub struct Dropout {
    dims: [usize; 3],
    p: f64,
    seed: u64,
    stream: u64,
    mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(dims: [usize; 3], p: f64, seed: u64, stream: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(NnError::Config(format!("dropout probability must be in [0, 1), got {p}")));
        }
        Ok(Self {
            dims,
            p,
            seed,
            stream,
            mask: None,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn probability(&self) -> f64 {
        self.p
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    pub fn forward(&mut self, x: &Activations, training: bool, step: u64) -> Result<Activations> {
        x.expect_dims(self.dims, "dropout")?;
        if !training || self.p == 0.0 {
            self.mask = Some(vec![1.0; x.as_slice().len()]);
            return Ok(x.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(u128::from(step) << 40);
        let keep = 1.0 / (1.0 - self.p);
        let mask: Vec<f64> = (0..x.as_slice().len())
            .map(|_| if rng.gen::<f64>() < self.p { 0.0 } else { keep })
            .collect();
        let mut out = x.clone();
        for (v, m) in out.as_mut_slice().iter_mut().zip(&mask) {
            *v *= m;
        }
        self.mask = Some(mask);
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Activations) -> Result<Activations> {
        let mask = self.mask.as_ref().ok_or(NnError::NoForwardCache("dropout"))?;
        if dy.as_slice().len() != mask.len() {
            return Err(NnError::Shape("dropout backward shape differs from forward".into()));
        }
        let mut dx = dy.clone();
        for (g, m) in dx.as_mut_slice().iter_mut().zip(mask) {
            *g *= m;
        }
        Ok(dx)
    }

    pub fn clear_cache(&mut self) {
        self.mask = None;
    }
}
