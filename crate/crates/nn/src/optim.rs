use crate::error::{NnError, Result};

pub const DEFAULT_LR: f64 = 0.001;
pub const DEFAULT_RHO: f64 = 0.9;
pub const DEFAULT_DELTA: f64 = 1e-7;

/// One RMSProp update, elementwise:
/// `acc ← ρ·acc + (1−ρ)·g²`, `θ ← θ − lr·g / (√acc + δ)`.
pub fn rmsprop_update(params: &mut [f64], grads: &[f64], acc: &mut [f64], lr: f64, rho: f64, delta: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != acc.len() {
        return Err(NnError::Shape(format!(
            "rmsprop: {} params, {} grads, {} accumulators",
            params.len(),
            grads.len(),
            acc.len()
        )));
    }
    for ((p, g), a) in params.iter_mut().zip(grads).zip(acc.iter_mut()) {
        *a = rho * *a + (1.0 - rho) * g * g;
        *p -= lr * g / (a.sqrt() + delta);
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RmsProp {
    pub lr: f64,
    pub rho: f64,
    pub delta: f64,
    acc: Vec<Vec<f64>>,
}

impl Default for RmsProp {
    fn default() -> Self {
        Self::new(DEFAULT_LR, DEFAULT_RHO, DEFAULT_DELTA)
    }
}

impl RmsProp {
    pub fn new(lr: f64, rho: f64, delta: f64) -> Self {
        Self {
            lr,
            rho,
            delta,
            acc: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(NnError::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(NnError::Config(format!("rho must be in [0, 1), got {}", self.rho)));
        }
        if !(self.delta > 0.0) {
            return Err(NnError::Config(format!("delta must be positive, got {}", self.delta)));
        }
        Ok(())
    }

    /// Squared-gradient accumulators, one per parameter block.
    pub fn accumulators(&self) -> &[Vec<f64>] {
        &self.acc
    }

    /// Updates every block. Accumulators are created on the first call and
    /// must keep matching the block layout afterwards.
    pub fn step(&mut self, blocks: Vec<(&mut [f64], &[f64])>) -> Result<()> {
        if self.acc.is_empty() {
            self.acc = blocks.iter().map(|(p, _)| vec![0.0; p.len()]).collect();
        }
        if self.acc.len() != blocks.len() {
            return Err(NnError::Shape(format!(
                "rmsprop state has {} blocks, got {}",
                self.acc.len(),
                blocks.len()
            )));
        }
        for ((p, g), a) in blocks.into_iter().zip(self.acc.iter_mut()) {
            rmsprop_update(p, g, a, self.lr, self.rho, self.delta)?;
        }
        Ok(())
    }
}
