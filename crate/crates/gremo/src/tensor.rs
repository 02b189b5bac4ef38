//! Dense row-major tensor over f64.
//!
//! Images are [height, width, channels], conv weights are
//! [out_channels, kernel_h, kernel_w, in_channels], dense weights are
//! [out, in]. The last axis varies fastest.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::TensorSize {
                shape,
                expected,
                got: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; len],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Same data under a new shape with an equal element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(Error::TensorSize {
                shape,
                expected,
                got: self.data.len(),
            });
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    /// Flat offset of [y, x, c] in a rank-3 tensor.
    #[inline]
    pub fn at3(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.shape[1] + x) * self.shape[2] + c
    }

    pub fn get3(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.at3(y, x, c)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Bilinear sample of channel `c` at continuous (y, x); positions outside the
/// image contribute zero.
pub fn bilinear_sample(img: &Tensor, y: f64, x: f64, c: usize) -> f64 {
    let (h, w) = (img.shape()[0] as i64, img.shape()[1] as i64);
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    let (y0, x0) = (y0 as i64, x0 as i64);
    let fetch = |yy: i64, xx: i64| -> f64 {
        if yy < 0 || yy >= h || xx < 0 || xx >= w {
            0.0
        } else {
            img.get3(yy as usize, xx as usize, c)
        }
    };
    fetch(y0, x0) * (1.0 - fy) * (1.0 - fx)
        + fetch(y0, x0 + 1) * (1.0 - fy) * fx
        + fetch(y0 + 1, x0) * fy * (1.0 - fx)
        + fetch(y0 + 1, x0 + 1) * fy * fx
}
