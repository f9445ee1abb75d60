use crate::activations::Activations;
use crate::error::{NnError, Result};

/// Non-overlapping `ph × pw` mean pooling (stride equals the window).
#[derive(Clone, Debug)]
pub struct AvgPool2d {
    in_dims: [usize; 3],
    pool: [usize; 2],
    truncate: bool,
    batch: Option<usize>,
}

impl AvgPool2d {
    /// Spatial sizes must divide by the window unless `truncate` is set, in
    /// which case trailing rows and columns are dropped.
    pub fn new(in_dims: [usize; 3], pool: [usize; 2], truncate: bool) -> Result<Self> {
        if pool.contains(&0) {
            return Err(NnError::Config("pool window must be positive".into()));
        }
        for axis in 0..2 {
            if in_dims[axis] < pool[axis] {
                return Err(NnError::Shape(format!(
                    "avgpool window {pool:?} larger than input {in_dims:?}"
                )));
            }
            if !truncate && !in_dims[axis].is_multiple_of(pool[axis]) {
                return Err(NnError::Shape(format!(
                    "avgpool window {pool:?} does not divide input {in_dims:?}; enable truncation to drop the remainder"
                )));
            }
        }
        Ok(Self {
            in_dims,
            pool,
            truncate,
            batch: None,
        })
    }

    pub fn input_dims(&self) -> [usize; 3] {
        self.in_dims
    }

    pub fn output_dims(&self) -> [usize; 3] {
        [self.in_dims[0] / self.pool[0], self.in_dims[1] / self.pool[1], self.in_dims[2]]
    }

    pub fn pool(&self) -> [usize; 2] {
        self.pool
    }

    pub fn truncate(&self) -> bool {
        self.truncate
    }

    pub fn forward(&mut self, x: &Activations) -> Result<Activations> {
        x.expect_dims(self.in_dims, "avgpool")?;
        let [h, w, c] = self.in_dims;
        let [oh, ow, _] = self.output_dims();
        let [ph, pw] = self.pool;
        let scale = 1.0 / (ph * pw) as f64;
        let mut out = Activations::zeros(x.n(), self.output_dims());
        for i in 0..x.n() {
            let xs = x.sample(i);
            let ys = out.sample_mut(i);
            for ch in 0..c {
                for ox in 0..ow {
                    for oy in 0..oh {
                        let mut acc = 0.0;
                        for dx in 0..pw {
                            for dy in 0..ph {
                                acc += xs[(oy * ph + dy) + h * ((ox * pw + dx) + w * ch)];
                            }
                        }
                        ys[oy + oh * (ox + ow * ch)] = acc * scale;
                    }
                }
            }
        }
        self.batch = Some(x.n());
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Activations) -> Result<Activations> {
        let n = self.batch.ok_or(NnError::NoForwardCache("avgpool"))?;
        dy.expect_dims(self.output_dims(), "avgpool backward")?;
        if dy.n() != n {
            return Err(NnError::Shape(format!("avgpool backward got {} samples for {n}", dy.n())));
        }
        let [h, w, c] = self.in_dims;
        let [oh, ow, _] = self.output_dims();
        let [ph, pw] = self.pool;
        let scale = 1.0 / (ph * pw) as f64;
        let mut dx = Activations::zeros(n, self.in_dims);
        for i in 0..n {
            let gs = dy.sample(i);
            let xs = dx.sample_mut(i);
            for ch in 0..c {
                for ox in 0..ow {
                    for oy in 0..oh {
                        let g = gs[oy + oh * (ox + ow * ch)] * scale;
                        for dxp in 0..pw {
                            for dyp in 0..ph {
                                xs[(oy * ph + dyp) + h * ((ox * pw + dxp) + w * ch)] = g;
                            }
                        }
                    }
                }
            }
        }
        Ok(dx)
    }

    pub fn clear_cache(&mut self) {
        self.batch = None;
    }
}
