use rand::Rng;
use tenproj_core::gemm::{gemm, MatMut, MatRef};

use super::{glorot_uniform, Activation};
use crate::activations::Activations;
use crate::error::{NnError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Zero-pad so the output has `ceil(in / stride)` positions.
    Same,
    /// No padding.
    Valid,
}

/// Output length and leading pad along one spatial axis.
pub fn conv_axis(input: usize, kernel: usize, stride: usize, padding: Padding) -> Result<(usize, usize)> {
    if kernel == 0 || stride == 0 {
        return Err(NnError::Config("kernel and stride must be positive".into()));
    }
    match padding {
        Padding::Same => {
            let out = input.div_ceil(stride);
            let total = ((out - 1) * stride + kernel).saturating_sub(input);
            Ok((out, total / 2))
        }
        Padding::Valid => {
            if input < kernel {
                return Err(NnError::Shape(format!("kernel {kernel} larger than input {input}")));
            }
            Ok(((input - kernel) / stride + 1, 0))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Geometry {
    in_dims: [usize; 3],
    out_hw: [usize; 2],
    kernel: [usize; 2],
    stride: [usize; 2],
    pad: [usize; 2],
}

impl Geometry {
    fn patch_len(&self) -> usize {
        self.kernel[0] * self.kernel[1] * self.in_dims[2]
    }

    fn positions(&self) -> usize {
        self.out_hw[0] * self.out_hw[1]
    }

    /// Input coordinate feeding output `o` through kernel offset `d` on `axis`.
    #[inline]
    fn source(&self, axis: usize, o: usize, d: usize) -> Option<usize> {
        let pos = (o * self.stride[axis] + d).checked_sub(self.pad[axis])?;
        (pos < self.in_dims[axis]).then_some(pos)
    }

    /// Column-major `positions × patch_len` patch matrix of one sample.
    /// Column `dy + kh·(dx + kw·ci)` holds that kernel tap for every output.
    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let [h, w, cin] = self.in_dims;
        let [kh, kw] = self.kernel;
        let [oh, ow] = self.out_hw;
        let rows = self.positions();
        for ci in 0..cin {
            for dx in 0..kw {
                for dy in 0..kh {
                    let col = &mut cols[(dy + kh * (dx + kw * ci)) * rows..][..rows];
                    for ox in 0..ow {
                        let src_x = self.source(1, ox, dx);
                        for oy in 0..oh {
                            col[oy + oh * ox] = match (self.source(0, oy, dy), src_x) {
                                (Some(iy), Some(ix)) => x[iy + h * (ix + w * ci)],
                                _ => 0.0,
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Geometry::im2col`]: scatter-adds patch gradients.
    fn col2im(&self, cols: &[f64], dx_out: &mut [f64]) {
        let [h, w, cin] = self.in_dims;
        let [kh, kw] = self.kernel;
        let [oh, ow] = self.out_hw;
        let rows = self.positions();
        for ci in 0..cin {
            for dx in 0..kw {
                for dy in 0..kh {
                    let col = &cols[(dy + kh * (dx + kw * ci)) * rows..][..rows];
                    for ox in 0..ow {
                        let Some(ix) = self.source(1, ox, dx) else { continue };
                        for oy in 0..oh {
                            if let Some(iy) = self.source(0, oy, dy) {
                                dx_out[iy + h * (ix + w * ci)] += col[oy + oh * ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
struct ConvCache {
    cols: Vec<Vec<f64>>,
    output: Activations,
}

/// 2-D cross-correlation with bias and a fused activation.
///
/// The weight is a column-major `(kh·kw·c_in) × c_out` matrix whose row
/// `dy + kh·(dx + kw·ci)` is kernel tap `(dy, dx)` of input channel `ci`.
#[derive(Clone, Debug)]
pub struct Conv2d {
    geom: Geometry,
    filters: usize,
    padding: Padding,
    activation: Activation,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub dweight: Vec<f64>,
    pub dbias: Vec<f64>,
    cache: Option<ConvCache>,
}

impl Conv2d {
    pub fn new(
        in_dims: [usize; 3],
        filters: usize,
        kernel: [usize; 2],
        stride: [usize; 2],
        padding: Padding,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if filters == 0 || in_dims.contains(&0) {
            return Err(NnError::Config(format!(
                "conv2d needs positive sizes, got input {in_dims:?} and {filters} filters"
            )));
        }
        if activation == Activation::Softmax {
            return Err(NnError::Config("softmax is only supported on the last dense layer".into()));
        }
        let (oh, pad_y) = conv_axis(in_dims[0], kernel[0], stride[0], padding)?;
        let (ow, pad_x) = conv_axis(in_dims[1], kernel[1], stride[1], padding)?;
        let geom = Geometry {
            in_dims,
            out_hw: [oh, ow],
            kernel,
            stride,
            pad: [pad_y, pad_x],
        };
        let k = geom.patch_len();
        let fan_in = k;
        let fan_out = kernel[0] * kernel[1] * filters;
        let weight = glorot_uniform(rng, k * filters, fan_in, fan_out);
        Ok(Self {
            geom,
            filters,
            padding,
            activation,
            weight,
            bias: vec![0.0; filters],
            dweight: vec![0.0; k * filters],
            dbias: vec![0.0; filters],
            cache: None,
        })
    }

    pub fn input_dims(&self) -> [usize; 3] {
        self.geom.in_dims
    }

    pub fn output_dims(&self) -> [usize; 3] {
        [self.geom.out_hw[0], self.geom.out_hw[1], self.filters]
    }

    pub fn kernel(&self) -> [usize; 2] {
        self.geom.kernel
    }

    pub fn stride(&self) -> [usize; 2] {
        self.geom.stride
    }

    pub fn padding(&self) -> Padding {
        self.padding
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&mut self, x: &Activations) -> Result<Activations> {
        x.expect_dims(self.geom.in_dims, "conv2d")?;
        let rows = self.geom.positions();
        let k = self.geom.patch_len();
        let mut out = Activations::zeros(x.n(), self.output_dims());
        let mut all_cols = Vec::with_capacity(x.n());
        for i in 0..x.n() {
            let mut cols = vec![0.0; rows * k];
            self.geom.im2col(x.sample(i), &mut cols);
            let y = out.sample_mut(i);
            for (co, b) in self.bias.iter().enumerate() {
                y[co * rows..(co + 1) * rows].fill(*b);
            }
            gemm(
                1.0,
                MatRef::col_major(&cols, rows, k),
                MatRef::col_major(&self.weight, k, self.filters),
                1.0,
                MatMut::col_major(y, rows, self.filters),
            );
            all_cols.push(cols);
        }
        self.activation.apply(out.as_mut_slice());
        self.cache = Some(ConvCache {
            cols: all_cols,
            output: out.clone(),
        });
        Ok(out)
    }

    /// Overwrites `dweight`/`dbias` with batch sums and returns the input
    /// gradient.
    pub fn backward(&mut self, dy: &Activations) -> Result<Activations> {
        let cache = self.cache.as_ref().ok_or(NnError::NoForwardCache("conv2d"))?;
        dy.expect_dims(self.output_dims(), "conv2d backward")?;
        if dy.n() != cache.cols.len() {
            return Err(NnError::Shape(format!(
                "conv2d backward got {} samples for a batch of {}",
                dy.n(),
                cache.cols.len()
            )));
        }
        let rows = self.geom.positions();
        let k = self.geom.patch_len();
        let mut dpre = dy.clone();
        self.activation.backprop(cache.output.as_slice(), dpre.as_mut_slice());

        self.dweight.fill(0.0);
        self.dbias.fill(0.0);
        let mut dx = Activations::zeros(dy.n(), self.geom.in_dims);
        let mut dcols = vec![0.0; rows * k];
        for (i, cols) in cache.cols.iter().enumerate() {
            let g = dpre.sample(i);
            gemm(
                1.0,
                MatRef::col_major(cols, rows, k).t(),
                MatRef::col_major(g, rows, self.filters),
                1.0,
                MatMut::col_major(&mut self.dweight, k, self.filters),
            );
            for (co, db) in self.dbias.iter_mut().enumerate() {
                *db += g[co * rows..(co + 1) * rows].iter().sum::<f64>();
            }
            gemm(
                1.0,
                MatRef::col_major(g, rows, self.filters),
                MatRef::col_major(&self.weight, k, self.filters).t(),
                0.0,
                MatMut::col_major(&mut dcols, rows, k),
            );
            self.geom.col2im(&dcols, dx.sample_mut(i));
        }
        Ok(dx)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

/// Direct-loop convolution, the reference the im2col path is tested against.
pub fn conv2d_direct(conv: &Conv2d, x: &Activations) -> Result<Activations> {
    let g = &conv.geom;
    x.expect_dims(g.in_dims, "conv2d")?;
    let [h, w, cin] = g.in_dims;
    let [kh, kw] = g.kernel;
    let [oh, ow] = g.out_hw;
    let k = g.patch_len();
    let mut out = Activations::zeros(x.n(), conv.output_dims());
    for i in 0..x.n() {
        let xs = x.sample(i);
        let ys = out.sample_mut(i);
        for co in 0..conv.filters {
            for ox in 0..ow {
                for oy in 0..oh {
                    let mut acc = conv.bias[co];
                    for ci in 0..cin {
                        for dx in 0..kw {
                            for dy in 0..kh {
                                if let (Some(iy), Some(ix)) = (g.source(0, oy, dy), g.source(1, ox, dx)) {
                                    acc += xs[iy + h * (ix + w * ci)] * conv.weight[dy + kh * (dx + kw * ci) + k * co];
                                }
                            }
                        }
                    }
                    ys[oy + oh * (ox + ow * co)] = acc;
                }
            }
        }
    }
    conv.activation.apply(out.as_mut_slice());
    Ok(out)
}
