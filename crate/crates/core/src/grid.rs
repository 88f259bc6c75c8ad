//! Periodic Fourier grid in x and Chebyshev–Gauss–Lobatto grid in y.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result, C64};

#[derive(Clone)]
pub struct PeriodicGrid {
    n: usize,
    length: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for PeriodicGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicGrid")
            .field("n", &self.n)
            .field("length", &self.length)
            .finish()
    }
}

impl PartialEq for PeriodicGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.length == other.length
    }
}

impl PeriodicGrid {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "periodic grid needs an even size ≥ 4, got {n}"
            )));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "torus length {length} must be positive"
            )));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        Ok(Self {
            n,
            length,
            fwd,
            inv,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.node(j)).collect()
    }

    /// Signed mode index of FFT slot `j`.
    pub fn mode_index(&self, j: usize) -> i64 {
        if j <= self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }

    pub fn wavenumber(&self, j: usize) -> f64 {
        2.0 * PI * self.mode_index(j) as f64 / self.length
    }

    pub fn is_nyquist(&self, j: usize) -> bool {
        j == self.n / 2
    }

    /// Fourier symbol of `∂_x^order` at slot `j`; odd orders vanish at Nyquist.
    pub fn derivative_symbol(&self, j: usize, order: u32) -> C64 {
        if order % 2 == 1 && self.is_nyquist(j) {
            return C64::new(0.0, 0.0);
        }
        C64::new(0.0, self.wavenumber(j)).powu(order)
    }

    /// Unnormalised forward transform in place.
    pub fn forward(&self, data: &mut [C64]) {
        self.fwd.process(data);
    }

    /// Inverse transform in place, including the `1/n` factor.
    pub fn inverse(&self, data: &mut [C64]) {
        self.inv.process(data);
        let s = 1.0 / self.n as f64;
        data.iter_mut().for_each(|z| *z *= s);
    }

    pub fn derivative(&self, f: &[C64], order: u32) -> Vec<C64> {
        let mut d = f.to_vec();
        if order == 0 {
            return d;
        }
        self.forward(&mut d);
        for (j, z) in d.iter_mut().enumerate() {
            *z *= self.derivative_symbol(j, order);
        }
        self.inverse(&mut d);
        d
    }

    pub fn derivative_real(&self, f: &[f64], order: u32) -> Vec<f64> {
        let c: Vec<C64> = f.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.derivative(&c, order).iter().map(|z| z.re).collect()
    }

    /// Trigonometric interpolant of the samples at an arbitrary `x`.
    pub fn interpolate(&self, coeffs: &[C64], x: f64) -> C64 {
        let n = self.n;
        let mut s = C64::new(0.0, 0.0);
        for (j, c) in coeffs.iter().enumerate() {
            let k = self.wavenumber(j);
            if self.is_nyquist(j) {
                s += c * (k * x).cos();
            } else {
                s += c * C64::from_polar(1.0, k * x);
            }
        }
        s / n as f64
    }

    pub fn coefficients(&self, f: &[C64]) -> Vec<C64> {
        let mut d = f.to_vec();
        self.forward(&mut d);
        d
    }

    /// Ratio of the largest coefficient in the top quarter of the spectrum
    /// to the peak coefficient (0 for the zero function).
    pub fn spectral_tail(&self, f: &[C64]) -> f64 {
        let c = self.coefficients(f);
        let peak = c.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if peak == 0.0 {
            return 0.0;
        }
        let cutoff = self.n as i64 / 4;
        let tail = c
            .iter()
            .enumerate()
            .filter(|(j, _)| self.mode_index(*j).abs() > cutoff)
            .map(|(_, z)| z.norm())
            .fold(0.0, f64::max);
        tail / peak
    }

    /// Distance on the torus.
    pub fn distance(&self, a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(self.length);
        d.min(self.length - d)
    }
}

/// Chebyshev–Gauss–Lobatto nodes on `[0,1]` with `y_0 = 0` (the free
/// boundary side) and `y_{n-1} = 1` (the bottom).
#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    d1: DMatrix<f64>,
    d2: DMatrix<f64>,
}

impl ChebyshevGrid {
    pub fn new(n: usize) -> Result<Self> {
        Self::on_interval(n, 1.0)
    }

    /// CGL nodes on `[0, depth]`.
    pub fn on_interval(n: usize, depth: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidInput(format!(
                "Chebyshev grid needs at least 3 nodes, got {n}"
            )));
        }
        if !(depth > 0.0) {
            return Err(Error::InvalidInput(
                "interval length must be positive".into(),
            ));
        }
        let theta = |i: usize| PI * i as f64 / (n - 1) as f64;
        let nodes: Vec<f64> = (0..n)
            .map(|i| depth * (theta(i) / 2.0).sin().powi(2))
            .collect();
        let weights: Vec<f64> = (0..n)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n - 1 {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        let mut d1 = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                if i != j {
                    // y_i - y_j = depth * sin((θi+θj)/2) sin((θi-θj)/2), cancellation-free
                    let diff = depth
                        * ((theta(i) + theta(j)) / 2.0).sin()
                        * ((theta(i) - theta(j)) / 2.0).sin();
                    let v = (weights[j] / weights[i]) / diff;
                    d1[(i, j)] = v;
                    row += v;
                }
            }
            d1[(i, i)] = -row;
        }
        let d2 = &d1 * &d1;
        Ok(Self {
            nodes,
            weights,
            d1,
            d2,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn d1(&self) -> &DMatrix<f64> {
        &self.d1
    }

    pub fn d2(&self) -> &DMatrix<f64> {
        &self.d2
    }

    /// Barycentric interpolation of nodal values at `y`.
    pub fn interpolate(&self, values: &[C64], y: f64) -> C64 {
        let mut num = C64::new(0.0, 0.0);
        let mut den = 0.0;
        for (j, (&yj, &w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let d = y - yj;
            if d == 0.0 {
                return values[j];
            }
            let c = w / d;
            num += values[j] * c;
            den += c;
        }
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourier_derivative_of_sine_is_spectral() {
        let g = PeriodicGrid::new(32, 2.0 * PI).unwrap();
        let f: Vec<C64> = g
            .nodes()
            .iter()
            .map(|x| C64::new((3.0 * x).sin(), 0.0))
            .collect();
        let d = g.derivative(&f, 1);
        let d2 = g.derivative(&f, 2);
        for (j, x) in g.nodes().iter().enumerate() {
            assert!((d[j].re - 3.0 * (3.0 * x).cos()).abs() < 1e-12);
            assert!((d2[j].re + 9.0 * (3.0 * x).sin()).abs() < 1e-11);
        }
        let c = g.coefficients(&f);
        assert!((g.interpolate(&c, 0.123).re - (0.369f64).sin()).abs() < 1e-13);
    }

    #[test]
    fn chebyshev_differentiates_polynomials_exactly() {
        let c = ChebyshevGrid::new(9).unwrap();
        assert_eq!(c.nodes()[0], 0.0);
        assert!((c.nodes()[8] - 1.0).abs() < 1e-15);
        let f: Vec<f64> = c.nodes().iter().map(|y| y.powi(4) - 2.0 * y).collect();
        let fv = nalgebra::DVector::from_vec(f);
        let d = c.d1() * &fv;
        let dd = c.d2() * &fv;
        for (i, y) in c.nodes().iter().enumerate() {
            assert!((d[i] - (4.0 * y.powi(3) - 2.0)).abs() < 1e-12);
            assert!((dd[i] - 12.0 * y * y).abs() < 1e-10);
        }
        let vals: Vec<C64> = c.nodes().iter().map(|y| C64::new(y * y, 0.0)).collect();
        assert!((c.interpolate(&vals, 0.37).re - 0.37 * 0.37).abs() < 1e-14);
    }
}
