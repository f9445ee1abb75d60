//! Central finite differences and gradient comparison.
//!
//! The oracle only evaluates a scalar function at perturbed parameter
//! vectors. [`check_projection_layer`] wires it to the projection layer,
//! calling the analytic backward pass solely to obtain the block under test.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::projection::{ProjectionConfig, TensorProjectionLayer};
use crate::tensor::{Mode, Tensor3};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_TOL_ABS: f64 = 1e-8;

/// Central-difference gradient of `f` at `params`:
/// `(f(θ + h·eᵢ) − f(θ − h·eᵢ)) / 2h` for every coordinate.
pub fn central_diff_gradient<F>(mut f: F, params: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {step}")));
    }
    let mut theta = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + step;
        let plus = f(&theta);
        theta[i] = orig - step;
        let minus = f(&theta);
        theta[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "objective at coordinate {i}: f(+h) = {plus}, f(-h) = {minus}"
            )));
        }
        grad.push((plus - minus) / (2.0 * step));
    }
    Ok(grad)
}

/// Outcome of comparing an analytic gradient against a numeric one.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Entry with the largest relative error.
    pub worst_index: usize,
    pub step: f64,
    pub tol: f64,
    pub tol_abs: f64,
    pub passed: bool,
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} max_rel={:.3e} max_abs={:.3e} worst_index={} (tol={:.0e}, tol_abs={:.0e}, h={:.0e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.max_rel_error,
            self.max_abs_error,
            self.worst_index,
            self.tol,
            self.tol_abs,
            self.step
        )
    }
}

/// Entrywise comparison. The relative error of an entry is
/// `|a − n| / max(|a|, |n|, tol_abs)`; an entry passes when its relative
/// error is within `tol` or its absolute error is within `tol_abs`.
pub fn compare_gradients(analytic: &[f64], numeric: &[f64], tol: f64, tol_abs: f64) -> Result<GradCheckReport> {
    if analytic.len() != numeric.len() {
        return Err(Error::ShapeMismatch(format!(
            "analytic gradient has {} entries, numeric has {}",
            analytic.len(),
            numeric.len()
        )));
    }
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_index: 0,
        step: DEFAULT_STEP,
        tol,
        tol_abs,
        passed: true,
    };
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let abs = (a - n).abs();
        let rel = abs / a.abs().max(n.abs()).max(tol_abs);
        if !(rel <= tol || abs <= tol_abs) {
            report.passed = false;
        }
        if rel > report.max_rel_error || rel.is_nan() {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
        report.max_abs_error = report.max_abs_error.max(abs);
    }
    Ok(report)
}

/// Finite-difference `f` at `params` and compare against `analytic`.
pub fn check_gradient<F>(f: F, params: &[f64], analytic: &[f64], step: f64, tol: f64, tol_abs: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    let numeric = central_diff_gradient(f, params, step)?;
    let mut report = compare_gradients(analytic, &numeric, tol, tol_abs)?;
    report.step = step;
    Ok(report)
}

/// Reports for every gradient block of a projection layer.
#[derive(Clone, Debug)]
pub struct ProjectionCheck {
    /// One report per enabled mode.
    pub dw: [Option<GradCheckReport>; 3],
    /// All input gradients of the batch, concatenated.
    pub dx: GradCheckReport,
}

impl ProjectionCheck {
    pub fn passed(&self) -> bool {
        self.dx.passed && self.dw.iter().flatten().all(|r| r.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.dw
            .iter()
            .flatten()
            .map(|r| r.max_rel_error)
            .fold(self.dx.max_rel_error, f64::max)
    }
}

fn half_squared_norm(zs: &[Tensor3]) -> f64 {
    zs.iter()
        .flat_map(|z| z.as_slice())
        .map(|v| 0.5 * v * v)
        .sum()
}

/// Checks `backward` of a layer built from `config` against central
/// differences of `L = ½ Σᵢ ‖Zᵢ‖²` on `batch` inputs drawn uniformly from
/// `[−1, 1]` with `input_seed`.
pub fn check_projection_layer(
    config: &ProjectionConfig,
    batch: usize,
    input_seed: u64,
    step: f64,
    tol: f64,
    tol_abs: f64,
) -> Result<ProjectionCheck> {
    let mut layer = TensorProjectionLayer::new(config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(input_seed);
    let dims = config.input_dims;
    let xs: Vec<Tensor3> = (0..batch)
        .map(|_| Tensor3::from_fn(dims, |_, _, _| rng.gen_range(-1.0..=1.0)))
        .collect();

    let zs = layer.forward(&xs)?;
    let grads = layer.backward(&zs)?;

    let mut dw: [Option<GradCheckReport>; 3] = [None, None, None];
    for mode in Mode::ALL {
        let (Some(w), Some(analytic)) = (layer.weight(mode), &grads.dw[mode.axis()]) else {
            continue;
        };
        let (rows, cols) = w.shape();
        let objective = |theta: &[f64]| {
            let mut probe = layer.clone();
            probe
                .weight_mut(mode)
                .expect("enabled mode has a weight")
                .as_mut_slice()
                .copy_from_slice(theta);
            debug_assert_eq!(theta.len(), rows * cols);
            probe.infer(&xs).map(|z| half_squared_norm(&z)).unwrap_or(f64::NAN)
        };
        dw[mode.axis()] = Some(check_gradient(objective, w.as_slice(), analytic.as_slice(), step, tol, tol_abs)?);
    }

    let len = xs.first().map_or(0, Tensor3::len);
    let flat_x: Vec<f64> = xs.iter().flat_map(|x| x.as_slice().iter().copied()).collect();
    let flat_dx: Vec<f64> = grads.dx.iter().flat_map(|d| d.as_slice().iter().copied()).collect();
    let objective = |theta: &[f64]| {
        let probe: Vec<Tensor3> = theta
            .chunks(len.max(1))
            .map(|c| Tensor3::from_col_major(dims, c.to_vec()).expect("chunk matches dims"))
            .collect();
        layer.infer(&probe).map(|z| half_squared_norm(&z)).unwrap_or(f64::NAN)
    };
    let dx = check_gradient(objective, &flat_x, &flat_dx, step, tol, tol_abs)?;
    Ok(ProjectionCheck { dw, dx })
}
