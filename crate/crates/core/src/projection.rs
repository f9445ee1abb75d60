//! The TensorProjection layer.
//!
//! Each sample `X` of shape `p1 × p2 × p3` is mapped to
//! `Z = X ×₁ U₁ᵀ ×₂ U₂ᵀ ×₃ U₃ᵀ` of shape `q1 × q2 × q3`, where every
//! `Uₖ = Wₖ (Wₖᵀ Wₖ + εₖ² I)^{-1/2}` is a near-orthonormal `pₖ × qₖ` matrix
//! obtained from an unconstrained trainable `Wₖ`. Modes can be disabled,
//! in which case `qₖ = pₖ`, `Uₖ = I` and the mode carries no parameters.
//!
//! Two backward implementations are provided. [`TensorProjectionLayer::backward`]
//! works with k-mode products and `q × q` matrix algebra only.
//! [`TensorProjectionLayer::backward_reference`] materializes every Jacobian
//! (commutation and mode-permutation matrices included) and exists to
//! cross-check the fast path on small shapes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gemm::gemm;
use crate::linalg::{inv_sqrt_derivative_apply, inv_sqrt_jacobian, inv_sqrt_with_eig, SymEig};
use crate::matrix::Matrix;
use crate::structure::{commutation_matrix, kronecker, kronecker3, mode_permutation_matrix};
use crate::tensor::{Mode, Tensor3};

pub use crate::linalg::JacobianMode;

/// Default `εₖ` for every mode.
pub const DEFAULT_EPS: f64 = 0.01;

/// Shape and hyperparameters of a [`TensorProjectionLayer`].
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionConfig {
    pub input_dims: [usize; 3],
    pub output_dims: [usize; 3],
    pub eps: [f64; 3],
    pub enabled: [bool; 3],
    pub jacobian_mode: JacobianMode,
    pub seed: u64,
}

impl ProjectionConfig {
    /// Projects every mode whose output size is smaller than its input
    /// size; modes with `q = p` start out disabled.
    pub fn new(input_dims: [usize; 3], output_dims: [usize; 3]) -> Self {
        let enabled = [0, 1, 2].map(|k| output_dims[k] != input_dims[k]);
        Self {
            input_dims,
            output_dims,
            eps: [DEFAULT_EPS; 3],
            enabled,
            jacobian_mode: JacobianMode::Exact,
            seed: 0,
        }
    }

    pub fn with_enabled(mut self, enabled: [bool; 3]) -> Self {
        self.enabled = enabled;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = [eps; 3];
        self
    }

    pub fn with_jacobian_mode(mut self, mode: JacobianMode) -> Self {
        self.jacobian_mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for k in 0..3 {
            let (p, q) = (self.input_dims[k], self.output_dims[k]);
            if p == 0 || q == 0 {
                return Err(Error::InvalidParameter(format!(
                    "mode {} has a zero dimension ({p} -> {q})",
                    k + 1
                )));
            }
            if self.enabled[k] && q > p {
                return Err(Error::InvalidParameter(format!(
                    "mode {} projects {p} -> {q}; output must not exceed input",
                    k + 1
                )));
            }
            if !self.enabled[k] && q != p {
                return Err(Error::InvalidParameter(format!(
                    "mode {} is disabled but changes size {p} -> {q}",
                    k + 1
                )));
            }
            if !(self.eps[k] > 0.0 && self.eps[k].is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "eps for mode {} must be positive and finite, got {}",
                    k + 1,
                    self.eps[k]
                )));
            }
        }
        Ok(())
    }

    /// Trainable scalars: `Σ pₖ·qₖ` over enabled modes.
    pub fn param_count(&self) -> usize {
        (0..3)
            .filter(|&k| self.enabled[k])
            .map(|k| self.input_dims[k] * self.output_dims[k])
            .sum()
    }
}

/// `U = W G` with `G = M^{-1/2}` and `M = WᵀW + ε²I`.
#[derive(Clone, Debug)]
pub struct Orthogonalized {
    pub u: Matrix,
    pub g: Matrix,
    pub m: Matrix,
    pub eig: SymEig,
}

/// Orthogonalizing reparameterization of a `p × q` matrix `W`.
pub fn orthogonalize(w: &Matrix, eps: f64) -> Result<Orthogonalized> {
    if !w.is_finite() {
        return Err(Error::NonFinite("projection weights".into()));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let q = w.cols();
    // WᵀW filled from one triangle so M is exactly symmetric
    let mut m = Matrix::zeros(q, q);
    for j in 0..q {
        for i in 0..=j {
            let dot: f64 = w.column(i).iter().zip(w.column(j)).map(|(a, b)| a * b).sum();
            m[(i, j)] = dot;
            m[(j, i)] = dot;
        }
        m[(j, j)] += eps * eps;
    }
    let (g, eig) = inv_sqrt_with_eig(&m)?;
    let u = w.matmul(&g);
    Ok(Orthogonalized { u, g, m, eig })
}

/// Pulls a gradient with respect to `U` back to `W` through
/// `U = W (WᵀW + ε²I)^{-1/2}`:
/// `dW = dU·G + W (S + Sᵀ)` with `S = (∂G/∂M)*(Wᵀ dU)`.
pub fn pullback_to_w(w: &Matrix, ortho: &Orthogonalized, du: &Matrix, mode: JacobianMode) -> Matrix {
    let s = inv_sqrt_derivative_apply(&ortho.eig, mode, &w.t_matmul(du));
    let sym = s.add(&s.transpose());
    du.matmul(&ortho.g).add(&w.matmul(&sym))
}

/// Materialized `∂vec(U)/∂vec(W)`, a `pq × pq` matrix:
/// `Gᵀ ⊗ I_p + (I_q ⊗ W) · ∂vec(G)/∂vec(M) · ∂vec(M)/∂vec(W)` with
/// `∂vec(M)/∂vec(W) = K_{q,q}(I_q ⊗ Wᵀ) + I_q ⊗ Wᵀ`.
pub fn dvec_u_dvec_w(w: &Matrix, eps: f64, mode: JacobianMode) -> Result<Matrix> {
    let ortho = orthogonalize(w, eps)?;
    let (p, q) = w.shape();
    let direct = kronecker(&ortho.g.transpose(), &Matrix::identity(p));
    let dg_dm = inv_sqrt_jacobian(&ortho.m, mode)?;
    let dm_dw = dvec_m_dvec_w(w)?;
    let through_g = kronecker(&Matrix::identity(q), w).matmul(&dg_dm).matmul(&dm_dw);
    Ok(direct.add(&through_g))
}

/// `∂vec(WᵀW + ε²I)/∂vec(W) = K_{q,q}(I_q ⊗ Wᵀ) + I_q ⊗ Wᵀ`.
pub fn dvec_m_dvec_w(w: &Matrix) -> Result<Matrix> {
    let q = w.cols();
    let i_wt = kronecker(&Matrix::identity(q), &w.transpose());
    Ok(commutation_matrix(q, q)?.matmul(&i_wt).add(&i_wt))
}

/// Gradients produced by one backward pass.
#[derive(Clone, Debug)]
pub struct LayerGradients {
    /// `∂L/∂Wₖ` for enabled modes, summed over the batch.
    pub dw: [Option<Matrix>; 3],
    /// `∂L/∂Xᵢ` for every sample.
    pub dx: Vec<Tensor3>,
}

#[derive(Clone, Debug)]
struct ForwardCache {
    inputs: Vec<Tensor3>,
    projections: [Option<Orthogonalized>; 3],
}

/// Trainable multilinear projection of 3-order tensors.
#[derive(Clone, Debug)]
pub struct TensorProjectionLayer {
    config: ProjectionConfig,
    weights: [Option<Matrix>; 3],
    cache: Option<ForwardCache>,
}

impl TensorProjectionLayer {
    /// Creates a layer with `Wₖ` drawn uniformly from `[−a, a]`,
    /// `a = √(6 / (pₖ + qₖ))`, using `config.seed`.
    pub fn new(config: ProjectionConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let weights = [0, 1, 2].map(|k| {
            config.enabled[k].then(|| {
                let (p, q) = (config.input_dims[k], config.output_dims[k]);
                let bound = (6.0 / (p + q) as f64).sqrt();
                Matrix::from_fn(p, q, |_, _| rng.gen_range(-bound..=bound))
            })
        });
        Ok(Self {
            config,
            weights,
            cache: None,
        })
    }

    /// Creates a layer with explicit weights, one per enabled mode.
    pub fn with_weights(config: ProjectionConfig, weights: [Option<Matrix>; 3]) -> Result<Self> {
        config.validate()?;
        for k in 0..3 {
            let expected = (config.input_dims[k], config.output_dims[k]);
            match (&weights[k], config.enabled[k]) {
                (Some(w), true) if w.shape() == expected => {}
                (None, false) => {}
                (w, enabled) => {
                    return Err(Error::ShapeMismatch(format!(
                        "mode {} (enabled: {enabled}) expects {}, got {:?}",
                        k + 1,
                        if enabled {
                            format!("a {}x{} weight", expected.0, expected.1)
                        } else {
                            "no weight".to_string()
                        },
                        w.as_ref().map(|w| w.shape())
                    )));
                }
            }
        }
        Ok(Self {
            config,
            weights,
            cache: None,
        })
    }

    pub fn config(&self) -> &ProjectionConfig {
        &self.config
    }

    pub fn input_dims(&self) -> [usize; 3] {
        self.config.input_dims
    }

    pub fn output_dims(&self) -> [usize; 3] {
        self.config.output_dims
    }

    pub fn jacobian_mode(&self) -> JacobianMode {
        self.config.jacobian_mode
    }

    pub fn set_jacobian_mode(&mut self, mode: JacobianMode) {
        self.config.jacobian_mode = mode;
    }

    pub fn is_enabled(&self, mode: Mode) -> bool {
        self.config.enabled[mode.axis()]
    }

    pub fn param_count(&self) -> usize {
        self.config.param_count()
    }

    pub fn weight(&self, mode: Mode) -> Option<&Matrix> {
        self.weights[mode.axis()].as_ref()
    }

    /// Mutable access to `Wₖ`. Invalidates the forward cache.
    pub fn weight_mut(&mut self, mode: Mode) -> Option<&mut Matrix> {
        self.cache = None;
        self.weights[mode.axis()].as_mut()
    }

    /// Mutable access to all weights at once. Invalidates the forward cache.
    pub fn weights_mut(&mut self) -> [Option<&mut Matrix>; 3] {
        self.cache = None;
        let [a, b, c] = &mut self.weights;
        [a.as_mut(), b.as_mut(), c.as_mut()]
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    /// Current `(Uₖ, Gₖ, Mₖ)` for every enabled mode.
    pub fn projections(&self) -> Result<[Option<Orthogonalized>; 3]> {
        let mut out: [Option<Orthogonalized>; 3] = [None, None, None];
        for k in 0..3 {
            if let Some(w) = &self.weights[k] {
                out[k] = Some(orthogonalize(w, self.config.eps[k])?);
            }
        }
        Ok(out)
    }

    fn check_inputs(&self, xs: &[Tensor3], dims: [usize; 3], what: &str) -> Result<()> {
        for (i, x) in xs.iter().enumerate() {
            if x.dims() != dims {
                return Err(Error::ShapeMismatch(format!(
                    "{what} {i} has dims {:?}, expected {dims:?}",
                    x.dims()
                )));
            }
        }
        Ok(())
    }

    /// `Zᵢ = Xᵢ ×₁ U₁ᵀ ×₂ U₂ᵀ ×₃ U₃ᵀ` for every sample, caching what the
    /// backward pass needs.
    pub fn forward(&mut self, xs: &[Tensor3]) -> Result<Vec<Tensor3>> {
        self.check_inputs(xs, self.config.input_dims, "input")?;
        let projections = self.projections()?;
        let transposed = transposed_projections(&projections);
        let out = xs
            .iter()
            .map(|x| apply_modes(x, &transposed, None))
            .collect::<Result<Vec<_>>>()?;
        self.cache = Some(ForwardCache {
            inputs: xs.to_vec(),
            projections,
        });
        Ok(out)
    }

    /// Forward pass without caching.
    pub fn infer(&self, xs: &[Tensor3]) -> Result<Vec<Tensor3>> {
        self.check_inputs(xs, self.config.input_dims, "input")?;
        let transposed = transposed_projections(&self.projections()?);
        xs.iter().map(|x| apply_modes(x, &transposed, None)).collect()
    }

    fn cache_for(&self, dz: &[Tensor3]) -> Result<&ForwardCache> {
        let cache = self.cache.as_ref().ok_or(Error::NoForwardCache)?;
        if dz.len() != cache.inputs.len() {
            return Err(Error::ShapeMismatch(format!(
                "backward got {} upstream gradients for a batch of {}",
                dz.len(),
                cache.inputs.len()
            )));
        }
        self.check_inputs(dz, self.config.output_dims, "upstream gradient")?;
        Ok(cache)
    }

    /// Backward pass using k-mode products only.
    ///
    /// `dXᵢ = dZᵢ ×₁ U₁ ×₂ U₂ ×₃ U₃`. For an enabled mode k,
    /// `∂L/∂Uₖ = Σᵢ unfoldₖ(Xᵢ ×ⱼ Uⱼᵀ, j ≠ k) · unfoldₖ(dZᵢ)ᵀ`, which is then
    /// pulled back to `Wₖ` with [`pullback_to_w`]. The batch contribution is
    /// a plain sum over samples in index order.
    pub fn backward(&self, dz: &[Tensor3]) -> Result<LayerGradients> {
        let cache = self.cache_for(dz)?;
        let projections = &cache.projections;
        let plain: [Option<Matrix>; 3] = [0, 1, 2].map(|k| projections[k].as_ref().map(|o| o.u.clone()));
        let transposed = transposed_projections(projections);

        let dx = dz
            .iter()
            .map(|d| apply_modes(d, &plain, None))
            .collect::<Result<Vec<_>>>()?;

        let mut dw: [Option<Matrix>; 3] = [None, None, None];
        for mode in Mode::ALL {
            let k = mode.axis();
            let (Some(ortho), Some(w)) = (&projections[k], &self.weights[k]) else {
                continue;
            };
            let mut du = Matrix::zeros(w.rows(), w.cols());
            for (x, d) in cache.inputs.iter().zip(dz) {
                let partial = apply_modes(x, &transposed, Some(mode))?;
                let lhs = partial.unfold(mode);
                let rhs = d.unfold(mode);
                gemm(1.0, lhs.view(), rhs.view().t(), 1.0, du.view_mut());
            }
            dw[k] = Some(pullback_to_w(w, ortho, &du, self.config.jacobian_mode));
        }
        Ok(LayerGradients { dw, dx })
    }

    /// `Uₖ` from the forward cache, or the identity for a disabled mode.
    fn cached_u(&self, cache: &ForwardCache, mode: Mode) -> Matrix {
        match &cache.projections[mode.axis()] {
            Some(o) => o.u.clone(),
            None => Matrix::identity(self.config.input_dims[mode.axis()]),
        }
    }

    /// Materialized `∂vec(Zᵢ)/∂vec(Uₖ)` for the cached projections:
    ///
    /// * k = 1: `P⁽¹⁾ [{(U₃ᵀ ⊗ U₂ᵀ) Xᵢ₍₁₎ᵀ} ⊗ I_{q1}] K_{p1,q1}`
    /// * k = 2: `P⁽²⁾ [{(U₃ᵀ ⊗ U₁ᵀ) Xᵢ₍₂₎ᵀ} ⊗ I_{q2}] K_{p2,q2}`
    /// * k = 3: `P⁽³⁾ [{(U₂ᵀ ⊗ U₁ᵀ) Xᵢ₍₃₎ᵀ} ⊗ I_{q3}] K_{p3,q3}`
    ///
    /// For a disabled mode the Jacobian is taken at `Uₖ = I`.
    pub fn dvec_z_dvec_u(&self, mode: Mode, x: &Tensor3) -> Result<Matrix> {
        let cache = self.cache.as_ref().ok_or(Error::NoForwardCache)?;
        if x.dims() != self.config.input_dims {
            return Err(Error::ShapeMismatch(format!(
                "sample has dims {:?}, expected {:?}",
                x.dims(),
                self.config.input_dims
            )));
        }
        let [lo, hi] = mode.others();
        let outer = kronecker(
            &self.cached_u(cache, hi).transpose(),
            &self.cached_u(cache, lo).transpose(),
        );
        let inner = outer.matmul_t(&x.unfold(mode));
        let (p, q) = (self.config.input_dims[mode.axis()], self.config.output_dims[mode.axis()]);
        let block = kronecker(&inner, &Matrix::identity(q));
        let perm = mode_permutation_matrix(mode, self.config.output_dims);
        Ok(perm.matmul(&block).matmul(&commutation_matrix(p, q)?))
    }

    /// Backward pass with every Jacobian materialized. Quadratic in the
    /// tensor size; meant for verification on small shapes.
    pub fn backward_reference(&self, dz: &[Tensor3]) -> Result<LayerGradients> {
        let cache = self.cache_for(dz)?;
        let u = Mode::ALL.map(|m| self.cached_u(cache, m));
        let dz_dx = kronecker3(&u[2].transpose(), &u[1].transpose(), &u[0].transpose());
        let dx = dz
            .iter()
            .map(|d| Tensor3::from_col_major(self.config.input_dims, dz_dx.vec_mul(d.as_slice())))
            .collect::<Result<Vec<_>>>()?;

        let mut dw: [Option<Matrix>; 3] = [None, None, None];
        for mode in Mode::ALL {
            let k = mode.axis();
            let Some(w) = &self.weights[k] else { continue };
            let mut dl_du = vec![0.0; w.rows() * w.cols()];
            for (x, d) in cache.inputs.iter().zip(dz) {
                let row = self.dvec_z_dvec_u(mode, x)?.vec_mul(d.as_slice());
                for (acc, v) in dl_du.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            let du_dw = dvec_u_dvec_w(w, self.config.eps[k], self.config.jacobian_mode)?;
            dw[k] = Some(Matrix::from_col_major(w.rows(), w.cols(), du_dw.vec_mul(&dl_du))?);
        }
        Ok(LayerGradients { dw, dx })
    }
}

fn transposed_projections(projections: &[Option<Orthogonalized>; 3]) -> [Option<Matrix>; 3] {
    [0, 1, 2].map(|k| projections[k].as_ref().map(|o| o.u.transpose()))
}

/// Applies `x ×ₖ mats[k]` for every present matrix, skipping `skip`.
fn apply_modes(x: &Tensor3, mats: &[Option<Matrix>; 3], skip: Option<Mode>) -> Result<Tensor3> {
    let mut cur: Option<Tensor3> = None;
    for mode in Mode::ALL {
        if Some(mode) == skip {
            continue;
        }
        if let Some(m) = &mats[mode.axis()] {
            let next = cur.as_ref().unwrap_or(x).kmode_product(mode, m)?;
            cur = Some(next);
        }
    }
    Ok(cur.unwrap_or_else(|| x.clone()))
}
