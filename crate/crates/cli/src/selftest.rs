//! The `selftest` command: fast internal consistency checks that need no
//! data files.

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tenproj_core::gradcheck::{check_projection_layer, DEFAULT_STEP, DEFAULT_TOL, DEFAULT_TOL_ABS};
use tenproj_core::projection::orthogonalize;
use tenproj_core::structure::kronecker3;
use tenproj_core::{linalg, Matrix, Mode, ProjectionConfig, Tensor3};
use tenproj_nn::checkpoint;
use tenproj_nn::{model1_tp, model2_avgpool, Activation, Activations, LayerSpec, ModelSpec, Network, RmsProp, RunMode};

#[derive(Clone, Debug)]
pub struct SelftestLine {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..=1.0))
}

fn structural(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let dims = [3, 4, 5];
    let x = Tensor3::from_fn(dims, |_, _, _| rng.gen_range(-1.0..=1.0));
    let mut worst: f64 = 0.0;
    for mode in Mode::ALL {
        let back = Tensor3::fold(&x.unfold(mode), mode, dims)?;
        worst = worst.max(back.max_abs_diff(&x));
    }
    let us = [random_matrix(rng, 3, 2), random_matrix(rng, 4, 3), random_matrix(rng, 5, 2)];
    let mut z = x.clone();
    for (mode, u) in Mode::ALL.into_iter().zip(&us) {
        z = z.kmode_product(mode, &u.transpose())?;
    }
    let q = z.dims();
    // brute force over all index tuples
    let mut naive = Tensor3::zeros(q);
    for (i, j, k) in (0..q[0]).flat_map(|i| (0..q[1]).flat_map(move |j| (0..q[2]).map(move |k| (i, j, k)))) {
        let mut s = 0.0;
        for a in 0..dims[0] {
            for b in 0..dims[1] {
                for c in 0..dims[2] {
                    s += x.get(a, b, c) * us[0].as_slice()[a + dims[0] * i] * us[1].as_slice()[b + dims[1] * j]
                        * us[2].as_slice()[c + dims[2] * k];
                }
            }
        }
        naive.set(i, j, k, s);
    }
    worst = worst.max(naive.max_abs_diff(&z));
    let kron = kronecker3(&us[2].transpose(), &us[1].transpose(), &us[0].transpose());
    let vz = kron.mul_vec(x.as_slice());
    let dv = vz.iter().zip(z.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    worst = worst.max(dv);
    Ok((worst <= 1e-12, format!("max deviation {worst:.2e}")))
}

fn orthogonality(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let eps = 0.05;
    let w = random_matrix(rng, 5, 3);
    let o = orthogonalize(&w, eps)?;
    let utu = o.u.t_matmul(&o.u);
    let minv = linalg::spd_power(&o.m, -1.0)?;
    let expected = Matrix::identity(3).sub(&minv.scale(eps * eps));
    let dev = utu.max_abs_diff(&expected);
    let defect = utu.sub(&Matrix::identity(3));
    let norm2 = linalg::sym_eig(&defect)?.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let bound = eps * eps / linalg::sym_eig(&o.m)?.min_value();
    let ok = dev <= 1e-10 && norm2 <= bound * (1.0 + 1e-12);
    Ok((ok, format!("identity deviation {dev:.2e}, ‖UᵀU − I‖₂ {norm2:.3e} ≤ {bound:.3e}")))
}

fn param_counts() -> Result<(bool, String)> {
    let counts = |spec: &ModelSpec| -> Result<Vec<usize>> {
        Ok(Network::build(spec, 0)?.summary().iter().map(|s| s.params).collect())
    };
    let c1 = counts(&model1_tp())?;
    let c2 = counts(&model2_avgpool())?;
    let ok = c1 == [320, 0, 18496, 196, 0, 2_007_680, 0, 6410] && c2[3] == 0;
    Ok((ok, format!("model1_tp {c1:?}, model2_avgpool {c2:?}")))
}

fn projection_gradient() -> Result<(bool, String)> {
    let cfg = ProjectionConfig::new([4, 3, 2], [2, 2, 2]).with_seed(1);
    let check = check_projection_layer(&cfg, 3, 2, DEFAULT_STEP, DEFAULT_TOL, DEFAULT_TOL_ABS)?;
    Ok((check.passed(), format!("max rel error {:.2e}", check.max_rel_error())))
}

/// Two well-separated synthetic classes; a small network must drive the
/// loss down and survive a checkpoint roundtrip unchanged.
fn tiny_training(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let spec = ModelSpec {
        input: [4, 4, 2],
        layers: vec![
            LayerSpec::TensorProjection {
                output: [2, 2, 2],
                enabled: None,
                eps: tenproj_core::projection::DEFAULT_EPS,
                jacobian_mode: tenproj_core::JacobianMode::Exact,
            },
            LayerSpec::Flatten,
            LayerSpec::Dense {
                units: 2,
                activation: Activation::Softmax,
            },
        ],
    };
    let n = 32;
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let data: Vec<f64> = labels
        .iter()
        .flat_map(|&l| {
            let shift = if l == 0 { -0.5 } else { 0.5 };
            (0..32).map(|_| shift + 0.3 * rng.gen_range(-1.0..=1.0)).collect::<Vec<_>>()
        })
        .collect();
    let x = Activations::from_vec(n, [4, 4, 2], data)?;
    let mut net = Network::build(&spec, 7)?;
    let mut opt = RmsProp::new(0.01, 0.9, 1e-7);
    let first = net.train_step(&x, &labels, &mut opt)?;
    let mut last = first;
    for _ in 0..40 {
        last = net.train_step(&x, &labels, &mut opt)?;
    }
    let before = net.forward(&x, RunMode::Eval)?;
    let bytes = checkpoint::encode(&net);
    let mut copy = Network::build(&spec, 99)?;
    checkpoint::decode_into(&bytes, &mut copy, std::path::Path::new("<memory>"))?;
    let after = copy.forward(&x, RunMode::Eval)?;
    let same = before.as_slice() == after.as_slice();
    Ok((
        last < 0.5 * first && same,
        format!("loss {first:.4} → {last:.4}, checkpoint roundtrip identical: {same}"),
    ))
}

pub fn run_selftest(seed: u64) -> Vec<SelftestLine> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut record = |name: &'static str, r: Result<(bool, String)>| {
        let (passed, detail) = r.unwrap_or_else(|e| (false, format!("error: {e:#}")));
        out.push(SelftestLine { name, passed, detail });
    };
    record("structural identities", structural(&mut rng));
    record("orthogonality defect", orthogonality(&mut rng));
    record("parameter accounting", param_counts());
    record("projection gradient", projection_gradient());
    record("tiny training", tiny_training(&mut rng));
    out
}
