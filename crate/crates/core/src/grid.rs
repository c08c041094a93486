//! Uniform 1D grid functions on [-1, 1] and the finite-difference stencils
//! shared by every module.

use crate::error::{MuskatError, Result};
use serde::{Deserialize, Serialize};

/// Values at `N + 1` uniformly spaced nodes `x_i = -1 + 2i/N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFn1D {
    values: Vec<f64>,
}

impl GridFn1D {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 {
            return Err(MuskatError::Invalid(format!(
                "grid function needs at least 3 nodes, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(MuskatError::Invalid(format!("non-finite grid value at node {i}")));
        }
        Ok(Self { values })
    }

    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..=n).map(|i| f(node(n, i))).collect();
        Self { values }
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n + 1] }
    }

    /// Number of intervals.
    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    pub fn spacing(&self) -> f64 {
        2.0 / self.n() as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        node(self.n(), i)
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..=self.n()).map(|i| self.x(i)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_grid(&self, other: &GridFn1D) -> Result<()> {
        if self.values.len() != other.values.len() {
            return Err(MuskatError::Invalid(format!(
                "grid mismatch: {} vs {} nodes",
                self.values.len(),
                other.values.len()
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFn1D {
        GridFn1D { values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn first_derivative(&self) -> GridFn1D {
        GridFn1D { values: d1(&self.values, self.spacing()) }
    }

    pub fn second_derivative(&self) -> GridFn1D {
        GridFn1D { values: d2(&self.values, self.spacing()) }
    }

    /// Staggered differences `(f_{i+1} - f_i)/h` at the `N` midpoints.
    pub fn midpoint_slopes(&self) -> Vec<f64> {
        midpoint_diff(&self.values, self.spacing())
    }

    pub fn trapezoid(&self) -> f64 {
        trapezoid(&self.values, self.spacing())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn node(n: usize, i: usize) -> f64 {
    // Symmetric evaluation keeps x_i = -x_{N-i} bitwise.
    let nf = n as f64;
    let k = 2.0 * i as f64 - nf;
    k / nf
}

/// Trapezoid weights on a uniform grid with spacing `h`.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n + 1];
    w[0] = 0.5 * h;
    w[n] = 0.5 * h;
    w
}

pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    let n = values.len() - 1;
    let inner: f64 = values[1..n].iter().sum();
    h * (inner + 0.5 * (values[0] + values[n]))
}

/// Composite Simpson rule; `values.len() - 1` must be even.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len() - 1;
    assert!(n % 2 == 0, "simpson needs an even number of intervals");
    let mut acc = values[0] + values[n];
    for (i, v) in values.iter().enumerate().take(n).skip(1) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * h / 3.0
}

/// Second-order first derivative: centered inside, one-sided at the ends.
pub fn d1(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len() - 1;
    let mut out = vec![0.0; n + 1];
    for i in 1..n {
        out[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
    }
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    out[n] = (3.0 * f[n] - 4.0 * f[n - 1] + f[n - 2]) / (2.0 * h);
    out
}

/// Second-order second derivative: centered inside, four-point one-sided at the ends.
pub fn d2(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len() - 1;
    let h2 = h * h;
    let mut out = vec![0.0; n + 1];
    for i in 1..n {
        out[i] = (f[i + 1] - 2.0 * f[i] + f[i - 1]) / h2;
    }
    if n >= 3 {
        out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h2;
        out[n] = (2.0 * f[n] - 5.0 * f[n - 1] + 4.0 * f[n - 2] - f[n - 3]) / h2;
    } else {
        out[0] = out[1];
        out[n] = out[n - 1];
    }
    out
}

pub fn midpoint_diff(f: &[f64], h: f64) -> Vec<f64> {
    f.windows(2).map(|p| (p[1] - p[0]) / h).collect()
}

/// `(f'(x_0), f''(x_0))` from `f_0..f_4` with third-order one-sided stencils.
fn end_derivatives(g: [f64; 5], h: f64) -> (f64, f64) {
    let p = (-11.0 * g[0] + 18.0 * g[1] - 9.0 * g[2] + 2.0 * g[3]) / (6.0 * h);
    let pp = (35.0 * g[0] - 104.0 * g[1] + 114.0 * g[2] - 56.0 * g[3] + 11.0 * g[4]) / (12.0 * h * h);
    (p, pp)
}

/// Curvature `h''/(1+h'^2)^{3/2}`: centered inside, third-order one-sided at
/// the ends so the boundary does not dominate the error.
pub fn curvature(h: &GridFn1D) -> Result<GridFn1D> {
    if h.n() < 8 {
        return Err(MuskatError::Invalid(format!(
            "curvature needs at least 9 nodes, got {}",
            h.n() + 1
        )));
    }
    let mut dh = h.first_derivative().into_values();
    let mut ddh = h.second_derivative().into_values();
    let (f, n, dx) = (h.values(), h.n(), h.spacing());
    (dh[0], ddh[0]) = end_derivatives([f[0], f[1], f[2], f[3], f[4]], dx);
    let (p, pp) = end_derivatives([f[n], f[n - 1], f[n - 2], f[n - 3], f[n - 4]], dx);
    (dh[n], ddh[n]) = (-p, pp);
    let values = dh.iter().zip(&ddh).map(|(p, pp)| pp / (1.0 + p * p).powf(1.5)).collect();
    GridFn1D::new(values)
}
