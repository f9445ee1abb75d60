use crate::error::{NnError, Result};

/// A batch of `n` samples, each a `h × w × c` block stored column-major
/// (`h` fastest), one sample after the other.
///
/// Flattened activations use dims `[f, 1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Activations {
    n: usize,
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Activations {
    pub fn zeros(n: usize, dims: [usize; 3]) -> Self {
        Self {
            n,
            dims,
            data: vec![0.0; n * dims.iter().product::<usize>()],
        }
    }

    pub fn from_vec(n: usize, dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        let expected = n * dims.iter().product::<usize>();
        if data.len() != expected {
            return Err(NnError::Shape(format!(
                "{} values for {n} samples of {dims:?} (expected {expected})",
                data.len()
            )));
        }
        Ok(Self { n, dims, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn sample_len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let len = self.sample_len();
        &self.data[i * len..(i + 1) * len]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [f64] {
        let len = self.sample_len();
        &mut self.data[i * len..(i + 1) * len]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Same data under new per-sample dims of equal size.
    pub fn reshape(self, dims: [usize; 3]) -> Result<Self> {
        if dims.iter().product::<usize>() != self.sample_len() {
            return Err(NnError::Shape(format!("cannot reshape {:?} to {dims:?}", self.dims)));
        }
        Ok(Self { dims, ..self })
    }

    pub fn get(&self, i: usize, y: usize, x: usize, c: usize) -> f64 {
        let [h, w, _] = self.dims;
        self.sample(i)[y + h * (x + w * c)]
    }

    /// Samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.sample_len());
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        Self {
            n: indices.len(),
            dims: self.dims,
            data,
        }
    }

    pub(crate) fn expect_dims(&self, dims: [usize; 3], layer: &str) -> Result<()> {
        if self.dims != dims {
            return Err(NnError::Shape(format!(
                "{layer} expects samples of {dims:?}, got {:?}",
                self.dims
            )));
        }
        Ok(())
    }
}
