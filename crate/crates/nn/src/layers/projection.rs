use tenproj_core::{Matrix, Mode, ProjectionConfig, Tensor3, TensorProjectionLayer};

use crate::activations::Activations;
use crate::error::{NnError, Result};

/// Network adapter around [`TensorProjectionLayer`]: sample `(h, w, c)`
/// maps to tensor modes `(1, 2, 3)`.
#[derive(Clone, Debug)]
pub struct Projection {
    pub layer: TensorProjectionLayer,
    pub grads: [Option<Matrix>; 3],
}

impl Projection {
    pub fn new(config: ProjectionConfig) -> Result<Self> {
        Ok(Self {
            layer: TensorProjectionLayer::new(config)?,
            grads: [None, None, None],
        })
    }

    pub fn input_dims(&self) -> [usize; 3] {
        self.layer.input_dims()
    }

    pub fn output_dims(&self) -> [usize; 3] {
        self.layer.output_dims()
    }

    pub fn param_count(&self) -> usize {
        self.layer.param_count()
    }

    fn to_tensors(x: &Activations) -> Result<Vec<Tensor3>> {
        (0..x.n())
            .map(|i| Ok(Tensor3::from_col_major(x.dims(), x.sample(i).to_vec())?))
            .collect()
    }

    fn from_tensors(ts: Vec<Tensor3>, dims: [usize; 3]) -> Result<Activations> {
        let n = ts.len();
        let data: Vec<f64> = ts.into_iter().flat_map(Tensor3::into_vec).collect();
        Activations::from_vec(n, dims, data)
    }

    pub fn forward(&mut self, x: &Activations, training: bool) -> Result<Activations> {
        x.expect_dims(self.input_dims(), "tensor projection")?;
        let xs = Self::to_tensors(x)?;
        let zs = if training {
            self.layer.forward(&xs)?
        } else {
            self.layer.infer(&xs)?
        };
        Self::from_tensors(zs, self.output_dims())
    }

    pub fn backward(&mut self, dy: &Activations) -> Result<Activations> {
        dy.expect_dims(self.output_dims(), "tensor projection backward")?;
        let g = self.layer.backward(&Self::to_tensors(dy)?)?;
        self.grads = g.dw;
        Self::from_tensors(g.dx, self.input_dims())
    }

    /// `(Wₖ, ∂L/∂Wₖ)` for every enabled mode with a stored gradient.
    pub fn params_and_grads(&mut self) -> Vec<(&mut [f64], &[f64])> {
        self.layer
            .weights_mut()
            .into_iter()
            .zip(&self.grads)
            .filter_map(|(w, g)| Some((w?.as_mut_slice(), g.as_ref()?.as_slice())))
            .collect()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        Mode::ALL
            .iter()
            .filter_map(|&m| self.layer.weight(m).map(Matrix::as_slice))
            .collect()
    }

    pub fn check_grads(&self) -> Result<()> {
        for mode in Mode::ALL {
            if self.layer.is_enabled(mode) && self.grads[mode.axis()].is_none() {
                return Err(NnError::NoForwardCache("tensor projection"));
            }
        }
        Ok(())
    }
}
