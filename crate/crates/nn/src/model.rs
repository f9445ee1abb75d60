//! Layer specifications, model construction and the training step.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tenproj_core::{JacobianMode, ProjectionConfig};

use crate::activations::Activations;
use crate::error::{NnError, Result};
use crate::layers::{Activation, AvgPool2d, Conv2d, Dense, Dropout, Flatten, Layer, Padding, Projection, Relu, RunMode};
use crate::loss::{correct_count, softmax_cross_entropy};
use crate::optim::RmsProp;

#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Conv2d {
        filters: usize,
        kernel: [usize; 2],
        stride: [usize; 2],
        padding: Padding,
        activation: Activation,
    },
    AvgPool {
        pool: [usize; 2],
        truncate: bool,
    },
    TensorProjection {
        output: [usize; 3],
        /// `None` projects exactly the modes whose size changes.
        enabled: Option<[bool; 3]>,
        eps: f64,
        jacobian_mode: JacobianMode,
    },
    Flatten,
    Dense {
        units: usize,
        activation: Activation,
    },
    Dropout {
        p: f64,
    },
    Relu,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::AvgPool { .. } => "avgpool",
            LayerSpec::TensorProjection { .. } => "tensor_projection",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Relu => "relu",
        }
    }
}

fn fmt_pair(p: [usize; 2]) -> String {
    format!("{}x{}", p[0], p[1])
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Conv2d {
                filters,
                kernel,
                stride,
                padding,
                activation,
            } => write!(
                f,
                "conv2d filters={filters} kernel={} stride={} padding={} activation={activation}",
                fmt_pair(*kernel),
                fmt_pair(*stride),
                match padding {
                    Padding::Same => "same",
                    Padding::Valid => "valid",
                }
            ),
            LayerSpec::AvgPool { pool, truncate } => {
                write!(f, "avgpool pool={} truncate={truncate}", fmt_pair(*pool))
            }
            LayerSpec::TensorProjection {
                output,
                enabled,
                eps,
                jacobian_mode,
            } => {
                write!(f, "tensor_projection output={}x{}x{}", output[0], output[1], output[2])?;
                if let Some(e) = enabled {
                    let flags: Vec<&str> = e.iter().map(|&b| if b { "1" } else { "0" }).collect();
                    write!(f, " modes={}", flags.join(","))?;
                }
                write!(f, " eps={eps} jacobian={jacobian_mode}")
            }
            LayerSpec::Flatten => f.write_str("flatten"),
            LayerSpec::Dense { units, activation } => write!(f, "dense units={units} activation={activation}"),
            LayerSpec::Dropout { p } => write!(f, "dropout p={p}"),
            LayerSpec::Relu => f.write_str("relu"),
        }
    }
}

/// Input shape plus an ordered list of layers.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    /// Sets eps and the Jacobian variant of every projection layer.
    pub fn with_projection_settings(mut self, eps: f64, mode: JacobianMode) -> Self {
        for l in &mut self.layers {
            if let LayerSpec::TensorProjection {
                eps: e, jacobian_mode, ..
            } = l
            {
                *e = eps;
                *jacobian_mode = mode;
            }
        }
        self
    }

    /// Same text format that [`parse_model_spec`] reads.
    pub fn to_text(&self) -> String {
        let [h, w, c] = self.input;
        let mut s = format!("input {h}x{w}x{c}\n");
        for l in &self.layers {
            s.push_str(&l.to_string());
            s.push('\n');
        }
        s
    }
}

fn conv3x3(filters: usize) -> LayerSpec {
    LayerSpec::Conv2d {
        filters,
        kernel: [3, 3],
        stride: [1, 1],
        padding: Padding::Same,
        activation: Activation::Relu,
    }
}

const POOL2: LayerSpec = LayerSpec::AvgPool {
    pool: [2, 2],
    truncate: false,
};

fn classifier_head() -> [LayerSpec; 4] {
    [
        LayerSpec::Flatten,
        LayerSpec::Dense {
            units: 640,
            activation: Activation::Relu,
        },
        LayerSpec::Dropout { p: 0.5 },
        LayerSpec::Dense {
            units: 10,
            activation: Activation::Softmax,
        },
    ]
}

/// Fashion-MNIST classifier with a projection layer after the second
/// convolution: 28×28×1 → … → 14×14×64 → 7×7×64 → … → 10.
pub fn model1_tp() -> ModelSpec {
    let mut layers = vec![
        conv3x3(32),
        POOL2,
        conv3x3(64),
        LayerSpec::TensorProjection {
            output: [7, 7, 64],
            enabled: None,
            eps: tenproj_core::projection::DEFAULT_EPS,
            jacobian_mode: JacobianMode::Exact,
        },
    ];
    layers.extend(classifier_head());
    ModelSpec {
        input: [28, 28, 1],
        layers,
    }
}

/// The same classifier with the projection replaced by 2×2 average pooling.
pub fn model2_avgpool() -> ModelSpec {
    let mut layers = vec![conv3x3(32), POOL2, conv3x3(64), POOL2];
    layers.extend(classifier_head());
    ModelSpec {
        input: [28, 28, 1],
        layers,
    }
}

fn parse_pair(v: &str, what: &str) -> Result<[usize; 2]> {
    let parts: Vec<&str> = v.split('x').collect();
    match parts.as_slice() {
        [a] => {
            let n = parse_usize(a, what)?;
            Ok([n, n])
        }
        [a, b] => Ok([parse_usize(a, what)?, parse_usize(b, what)?]),
        _ => Err(NnError::Config(format!("{what}: expected AxB, got '{v}'"))),
    }
}

fn parse_triple(v: &str, what: &str) -> Result<[usize; 3]> {
    let parts: Vec<&str> = v.split('x').collect();
    match parts.as_slice() {
        [a, b, c] => Ok([parse_usize(a, what)?, parse_usize(b, what)?, parse_usize(c, what)?]),
        _ => Err(NnError::Config(format!("{what}: expected AxBxC, got '{v}'"))),
    }
}

fn parse_usize(v: &str, what: &str) -> Result<usize> {
    v.trim()
        .parse()
        .map_err(|_| NnError::Config(format!("{what}: '{v}' is not a non-negative integer")))
}

fn parse_f64(v: &str, what: &str) -> Result<f64> {
    v.trim()
        .parse()
        .map_err(|_| NnError::Config(format!("{what}: '{v}' is not a number")))
}

fn parse_bool(v: &str, what: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(NnError::Config(format!("{what}: '{v}' is not a boolean"))),
    }
}

/// Parses a model spec: an `input HxWxC` line followed by one layer per
/// line, `kind key=value ...`. `#` starts a comment.
///
/// ```text
/// input 28x28x1
/// conv2d filters=32 kernel=3x3 stride=1x1 padding=same activation=relu
/// avgpool pool=2x2
/// tensor_projection output=7x7x64 eps=0.01 jacobian=exact
/// flatten
/// dense units=10 activation=softmax
/// ```
pub fn parse_model_spec(text: &str) -> Result<ModelSpec> {
    let mut input = None;
    let mut layers = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = |e: NnError| NnError::Config(format!("line {}: {e}", lineno + 1));
        let mut words = line.split_whitespace();
        let kind = words.next().unwrap_or_default();
        if kind == "input" {
            let v = words.next().ok_or_else(|| at(NnError::Config("missing input shape".into())))?;
            input = Some(parse_triple(v, "input").map_err(at)?);
            continue;
        }
        let mut kv = Vec::new();
        for w in words {
            let (k, v) = w
                .split_once('=')
                .ok_or_else(|| at(NnError::Config(format!("expected key=value, got '{w}'"))))?;
            kv.push((k, v));
        }
        layers.push(parse_layer(kind, &kv).map_err(at)?);
    }
    let input = input.ok_or_else(|| NnError::Config("model spec has no input line".into()))?;
    Ok(ModelSpec { input, layers })
}

fn parse_layer(kind: &str, kv: &[(&str, &str)]) -> Result<LayerSpec> {
    let unknown = |k: &str| Err(NnError::Config(format!("unknown key '{k}' for {kind}")));
    match kind {
        "conv2d" => {
            let (mut filters, mut kernel, mut stride) = (None, [3, 3], [1, 1]);
            let (mut padding, mut activation) = (Padding::Same, Activation::Linear);
            for &(k, v) in kv {
                match k {
                    "filters" => filters = Some(parse_usize(v, k)?),
                    "kernel" => kernel = parse_pair(v, k)?,
                    "stride" => stride = parse_pair(v, k)?,
                    "padding" => {
                        padding = match v {
                            "same" => Padding::Same,
                            "valid" => Padding::Valid,
                            _ => return Err(NnError::Config(format!("padding: '{v}' is not same|valid"))),
                        }
                    }
                    "activation" => activation = v.parse()?,
                    _ => return unknown(k),
                }
            }
            let filters = filters.ok_or_else(|| NnError::Config("conv2d needs filters=".into()))?;
            Ok(LayerSpec::Conv2d {
                filters,
                kernel,
                stride,
                padding,
                activation,
            })
        }
        "avgpool" => {
            let (mut pool, mut truncate) = ([2, 2], false);
            for &(k, v) in kv {
                match k {
                    "pool" => pool = parse_pair(v, k)?,
                    "truncate" => truncate = parse_bool(v, k)?,
                    _ => return unknown(k),
                }
            }
            Ok(LayerSpec::AvgPool { pool, truncate })
        }
        "tensor_projection" => {
            let mut output = None;
            let mut enabled = None;
            let mut eps = tenproj_core::projection::DEFAULT_EPS;
            let mut jacobian_mode = JacobianMode::Exact;
            for &(k, v) in kv {
                match k {
                    "output" => output = Some(parse_triple(v, k)?),
                    "modes" => {
                        let flags = v.split(',').map(|f| parse_bool(f, k)).collect::<Result<Vec<_>>>()?;
                        let flags: [bool; 3] = flags
                            .try_into()
                            .map_err(|_| NnError::Config("modes: expected three flags".into()))?;
                        enabled = Some(flags);
                    }
                    "eps" => eps = parse_f64(v, k)?,
                    "jacobian" => jacobian_mode = v.parse().map_err(|e| NnError::Config(format!("{e}")))?,
                    _ => return unknown(k),
                }
            }
            let output = output.ok_or_else(|| NnError::Config("tensor_projection needs output=".into()))?;
            Ok(LayerSpec::TensorProjection {
                output,
                enabled,
                eps,
                jacobian_mode,
            })
        }
        "dense" => {
            let (mut units, mut activation) = (None, Activation::Linear);
            for &(k, v) in kv {
                match k {
                    "units" => units = Some(parse_usize(v, k)?),
                    "activation" => activation = v.parse()?,
                    _ => return unknown(k),
                }
            }
            let units = units.ok_or_else(|| NnError::Config("dense needs units=".into()))?;
            Ok(LayerSpec::Dense { units, activation })
        }
        "dropout" => {
            let mut p = 0.5;
            for &(k, v) in kv {
                match k {
                    "p" => p = parse_f64(v, k)?,
                    _ => return unknown(k),
                }
            }
            Ok(LayerSpec::Dropout { p })
        }
        "flatten" | "relu" => {
            if let Some((k, _)) = kv.first() {
                return unknown(k);
            }
            Ok(if kind == "flatten" { LayerSpec::Flatten } else { LayerSpec::Relu })
        }
        other => Err(NnError::Config(format!("unknown layer kind '{other}'"))),
    }
}

/// One row of [`Network::summary`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSummary {
    pub kind: &'static str,
    pub output_dims: [usize; 3],
    pub params: usize,
}

/// A sequential network built from a [`ModelSpec`].
#[derive(Clone, Debug)]
pub struct Network {
    spec: ModelSpec,
    layers: Vec<Layer>,
    step: u64,
}

impl Network {
    /// Builds and initializes every layer. Layer `i` draws its initial
    /// weights from ChaCha8 stream `2i` of `seed`; dropout layers use
    /// stream `2i + 1`.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let mut dims = spec.input;
        if dims.contains(&0) {
            return Err(NnError::Config(format!("input shape {dims:?} has a zero dimension")));
        }
        let mut layers = Vec::with_capacity(spec.layers.len());
        let last = spec.layers.len().saturating_sub(1);
        for (i, ls) in spec.layers.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(2 * i as u64);
            let at = |e: NnError| NnError::Config(format!("layer {} ({}): {e}", i + 1, ls.kind()));
            let layer = match *ls {
                LayerSpec::Conv2d {
                    filters,
                    kernel,
                    stride,
                    padding,
                    activation,
                } => Layer::Conv2d(Conv2d::new(dims, filters, kernel, stride, padding, activation, &mut rng).map_err(at)?),
                LayerSpec::AvgPool { pool, truncate } => Layer::AvgPool2d(AvgPool2d::new(dims, pool, truncate).map_err(at)?),
                LayerSpec::TensorProjection {
                    output,
                    enabled,
                    eps,
                    jacobian_mode,
                } => {
                    let mut config = ProjectionConfig::new(dims, output)
                        .with_eps(eps)
                        .with_jacobian_mode(jacobian_mode)
                        .with_seed(rng.gen());
                    if let Some(e) = enabled {
                        config = config.with_enabled(e);
                    }
                    Layer::Projection(Box::new(Projection::new(config).map_err(at)?))
                }
                LayerSpec::Flatten => Layer::Flatten(Flatten::new(dims)),
                LayerSpec::Dense { units, activation } => {
                    let [f, a, b] = dims;
                    if a != 1 || b != 1 {
                        return Err(at(NnError::Shape(format!(
                            "dense expects a flat input, got {dims:?}; insert a flatten layer"
                        ))));
                    }
                    if activation == Activation::Softmax && i != last {
                        return Err(at(NnError::Config("softmax is only allowed on the last layer".into())));
                    }
                    Layer::Dense(Dense::new(f, units, activation, &mut rng).map_err(at)?)
                }
                LayerSpec::Dropout { p } => Layer::Dropout(Dropout::new(dims, p, seed, 2 * i as u64 + 1).map_err(at)?),
                LayerSpec::Relu => Layer::Relu(Relu::new(dims)),
            };
            dims = layer.output_dims();
            layers.push(layer);
        }
        Ok(Self {
            spec: spec.clone(),
            layers,
            step: 0,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dims(&self) -> [usize; 3] {
        self.spec.input
    }

    pub fn output_dims(&self) -> [usize; 3] {
        self.layers.last().map_or(self.spec.input, Layer::output_dims)
    }

    /// Number of training steps taken so far; keys the dropout masks.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn summary(&self) -> Vec<LayerSummary> {
        self.layers
            .iter()
            .map(|l| LayerSummary {
                kind: l.kind(),
                output_dims: l.output_dims(),
                params: l.param_count(),
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        count_params(self)
    }

    /// Forward pass through every layer, returning the final output
    /// (logits for a softmax head).
    pub fn forward(&mut self, x: &Activations, mode: RunMode) -> Result<Activations> {
        x.expect_dims(self.spec.input, "network input")?;
        let mut cur = x.clone();
        for layer in &mut self.layers {
            cur = layer.forward(&cur, mode, self.step)?;
        }
        Ok(cur)
    }

    /// Backpropagates `dy` (gradient of the loss with respect to the final
    /// output), leaving parameter gradients in every layer.
    pub fn backward(&mut self, dy: &Activations) -> Result<Activations> {
        let mut cur = dy.clone();
        for layer in self.layers.iter_mut().rev() {
            cur = layer.backward(&cur)?;
        }
        Ok(cur)
    }

    /// Parameter blocks with their current gradients, in layer order.
    pub fn params_and_grads(&mut self) -> Vec<(&mut [f64], &[f64])> {
        self.layers.iter_mut().flat_map(Layer::params_and_grads).collect()
    }

    /// Loss and gradient on one mini-batch, without updating parameters.
    pub fn loss_and_gradients(&mut self, x: &Activations, labels: &[usize]) -> Result<f64> {
        let logits = self.forward(x, RunMode::Train)?;
        let (loss, dlogits) = softmax_cross_entropy(&logits, labels)?;
        self.backward(&dlogits)?;
        Ok(loss)
    }

    /// One optimizer step on a mini-batch; returns the batch loss.
    pub fn train_step(&mut self, x: &Activations, labels: &[usize], opt: &mut RmsProp) -> Result<f64> {
        let loss = self.loss_and_gradients(x, labels)?;
        opt.step(self.params_and_grads())?;
        for layer in &mut self.layers {
            layer.clear_cache();
        }
        self.step += 1;
        Ok(loss)
    }

    /// Mean loss and accuracy in evaluation mode, processed in chunks of
    /// `batch_size` samples.
    pub fn evaluate(&mut self, x: &Activations, labels: &[usize], batch_size: usize) -> Result<(f64, f64)> {
        if x.n() == 0 {
            return Err(NnError::EmptyDataset);
        }
        if batch_size == 0 {
            return Err(NnError::Config("batch size must be positive".into()));
        }
        if labels.len() != x.n() {
            return Err(NnError::Shape(format!("{} labels for {} samples", labels.len(), x.n())));
        }
        let (mut loss, mut correct) = (0.0, 0);
        let indices: Vec<usize> = (0..x.n()).collect();
        for chunk in indices.chunks(batch_size) {
            let xb = x.select(chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let logits = self.forward(&xb, RunMode::Eval)?;
            let (l, _) = softmax_cross_entropy(&logits, &yb)?;
            loss += l * chunk.len() as f64;
            correct += correct_count(&logits, &yb);
        }
        for layer in &mut self.layers {
            layer.clear_cache();
        }
        Ok((loss / x.n() as f64, correct as f64 / x.n() as f64))
    }
}

/// Total trainable scalars.
pub fn count_params(model: &Network) -> usize {
    model.layers.iter().map(Layer::param_count).sum()
}
