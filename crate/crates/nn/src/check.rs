//! Finite-difference checks of network layers and whole models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tenproj_core::gradcheck::{check_gradient, GradCheckReport};

use crate::activations::Activations;
use crate::error::Result;
use crate::layers::RunMode;
use crate::loss::softmax_cross_entropy;
use crate::model::{LayerSpec, ModelSpec, Network};

/// Tolerances and step for a check run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub step: f64,
    pub tol: f64,
    pub tol_abs: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            step: tenproj_core::gradcheck::DEFAULT_STEP,
            tol: tenproj_core::gradcheck::DEFAULT_TOL,
            tol_abs: tenproj_core::gradcheck::DEFAULT_TOL_ABS,
        }
    }
}

/// A report with a label naming the block it covers.
#[derive(Clone, Debug)]
pub struct NamedReport {
    pub name: String,
    pub report: GradCheckReport,
}

fn uniform(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Checks one layer under `L = Σ r ⊙ y` for a fixed random readout `r`:
/// one report per parameter block plus one for the input gradient.
/// Forward passes run in training mode with a frozen step, so dropout
/// masks stay fixed.
pub fn check_layer(spec: &LayerSpec, input: [usize; 3], n: usize, seed: u64, tol: Tolerance) -> Result<Vec<NamedReport>> {
    let model = ModelSpec {
        input,
        layers: vec![spec.clone()],
    };
    let mut net = Network::build(&model, seed)?;
    let x = Activations::from_vec(n, input, uniform(seed.wrapping_add(1), n * input.iter().product::<usize>()))?;
    let y = net.forward(&x, RunMode::Train)?;
    let r = uniform(seed.wrapping_add(2), y.as_slice().len());
    let dx = net.backward(&Activations::from_vec(n, y.dims(), r.clone())?)?;
    let grads: Vec<Vec<f64>> = net.params_and_grads().into_iter().map(|(_, g)| g.to_vec()).collect();
    let params: Vec<Vec<f64>> = net.layers()[0].params().iter().map(|p| p.to_vec()).collect();

    let mut out = Vec::new();
    for (b, (theta, analytic)) in params.iter().zip(&grads).enumerate() {
        let mut probe = net.clone();
        let f = |t: &[f64]| {
            probe.layers_mut()[0].params_mut()[b].copy_from_slice(t);
            probe
                .forward(&x, RunMode::Train)
                .map(|y| dot(y.as_slice(), &r))
                .unwrap_or(f64::NAN)
        };
        out.push(NamedReport {
            name: format!("{} param block {}", spec.kind(), b + 1),
            report: check_gradient(f, theta, analytic, tol.step, tol.tol, tol.tol_abs)?,
        });
    }
    let mut probe = net.clone();
    let f = |t: &[f64]| {
        Activations::from_vec(n, input, t.to_vec())
            .and_then(|xp| probe.forward(&xp, RunMode::Train))
            .map(|y| dot(y.as_slice(), &r))
            .unwrap_or(f64::NAN)
    };
    out.push(NamedReport {
        name: format!("{} input", spec.kind()),
        report: check_gradient(f, x.as_slice(), dx.as_slice(), tol.step, tol.tol, tol.tol_abs)?,
    });
    Ok(out)
}

/// Checks every parameter block of a model against the mean softmax
/// cross-entropy loss on a random batch with labels `i mod classes`.
pub fn check_model(spec: &ModelSpec, n: usize, seed: u64, tol: Tolerance) -> Result<Vec<NamedReport>> {
    let mut net = Network::build(spec, seed)?;
    let input = spec.input;
    let x = Activations::from_vec(n, input, uniform(seed.wrapping_add(1), n * input.iter().product::<usize>()))?;
    let classes = net.output_dims()[0];
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    net.loss_and_gradients(&x, &labels)?;
    let grads: Vec<Vec<f64>> = net.params_and_grads().into_iter().map(|(_, g)| g.to_vec()).collect();

    let mut out = Vec::new();
    let mut block = 0;
    for li in 0..net.layers().len() {
        let params: Vec<Vec<f64>> = net.layers()[li].params().iter().map(|p| p.to_vec()).collect();
        for (b, theta) in params.iter().enumerate() {
            let mut probe = net.clone();
            let f = |t: &[f64]| {
                probe.layers_mut()[li].params_mut()[b].copy_from_slice(t);
                probe
                    .forward(&x, RunMode::Train)
                    .and_then(|z| softmax_cross_entropy(&z, &labels))
                    .map(|(l, _)| l)
                    .unwrap_or(f64::NAN)
            };
            out.push(NamedReport {
                name: format!("layer {} ({}) block {}", li + 1, net.layers()[li].kind(), b + 1),
                report: check_gradient(f, theta, &grads[block], tol.step, tol.tol, tol.tol_abs)?,
            });
            block += 1;
        }
    }
    Ok(out)
}
