//! Flattening of `Ω_g = {0 < y' < h(x')}` onto the strip `Q = T_L × (0,1)`
//! via `(x', y') ↦ (x', 1 − y'/h(x'))`, and the transformed coefficients.
//!
//! With `β = 1 − y` and `H = ν + g` (componentwise):
//!
//! ```text
//! a11 = 1        a12 = β g_x / H        a22 = (1 + β² g_x²) / H²
//! a2  = (β/H) (2 g_x²/H − g_xx)
//! b10 = −g_x     b20 = −(1 + g_x²)/H    b11 = 0     b21 = 1/H
//! α   = 1 / (1 + H² + β² g_x²)
//! ```

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::grid::PeriodicGrid;
use crate::holder::SampledFunction;
use crate::strip::{StripField, StripGrid};
use crate::{Error, Result, C64};

/// Interface state: `f = ν𝟙 + g` with `g` real, `E`-valued, sampled on the torus.
#[derive(Debug, Clone)]
pub struct InterfaceProfile {
    nu: f64,
    grid: PeriodicGrid,
    g: Vec<Vec<f64>>,
    gx: Vec<Vec<f64>>,
    gxx: Vec<Vec<f64>>,
    height: Vec<f64>,
    h_min: f64,
}

impl PartialEq for InterfaceProfile {
    fn eq(&self, other: &Self) -> bool {
        self.nu == other.nu
            && self.grid == other.grid
            && self.g == other.g
            && self.h_min == other.h_min
    }
}

impl InterfaceProfile {
    /// `components[c][i]` is `g_c` at node `i`. Uses `h_min = 1e-6 ν`.
    pub fn new(nu: f64, grid: PeriodicGrid, components: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_h_min(nu, grid, components, 1e-6 * nu)
    }

    pub fn with_h_min(
        nu: f64,
        grid: PeriodicGrid,
        components: Vec<Vec<f64>>,
        h_min: f64,
    ) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "offset ν = {nu} must be positive"
            )));
        }
        if components.is_empty() || components.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::InvalidInput(
                "profile needs ≥1 component sampled on every node".into(),
            ));
        }
        if components.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("profile samples must be finite".into()));
        }
        if !(h_min > 0.0) {
            return Err(Error::InvalidInput("h_min must be positive".into()));
        }
        let gx: Vec<Vec<f64>> = components
            .iter()
            .map(|c| grid.derivative_real(c, 1))
            .collect();
        let gxx: Vec<Vec<f64>> = components
            .iter()
            .map(|c| grid.derivative_real(c, 2))
            .collect();
        let m = components.len();
        let xs = grid.nodes();
        let mut height = vec![0.0; grid.len()];
        for i in 0..grid.len() {
            let mut s = 0.0;
            for (c, comp) in components.iter().enumerate() {
                let hc = nu + comp[i];
                if !(hc >= h_min) {
                    return Err(Error::DegenerateDomain {
                        x: xs[i],
                        component: c,
                        height: hc,
                    });
                }
                s += hc * hc;
            }
            height[i] = (s / m as f64).sqrt();
        }
        Ok(Self {
            nu,
            grid,
            g: components,
            gx,
            gxx,
            height,
            h_min,
        })
    }

    pub fn flat(nu: f64, grid: PeriodicGrid, dim: usize) -> Result<Self> {
        let n = grid.len();
        Self::new(nu, grid, vec![vec![0.0; n]; dim])
    }

    /// Samples `f(component, x)` on the grid.
    pub fn from_fn(
        nu: f64,
        grid: PeriodicGrid,
        dim: usize,
        f: impl Fn(usize, f64) -> f64,
    ) -> Result<Self> {
        let xs = grid.nodes();
        let comps = (0..dim)
            .map(|c| xs.iter().map(|&x| f(c, x)).collect())
            .collect();
        Self::new(nu, grid, comps)
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn h_min(&self) -> f64 {
        self.h_min
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn g(&self, c: usize) -> &[f64] {
        &self.g[c]
    }

    pub fn gx(&self, c: usize) -> &[f64] {
        &self.gx[c]
    }

    pub fn gxx(&self, c: usize) -> &[f64] {
        &self.gxx[c]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.g
    }

    /// Scalar height `‖ν𝟙 + g‖ / ‖𝟙‖` at the nodes.
    pub fn height(&self) -> &[f64] {
        &self.height
    }

    /// Same offset and grid, new samples.
    pub fn with_components(&self, components: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_h_min(self.nu, self.grid.clone(), components, self.h_min)
    }

    pub fn scaled(&self, a: f64) -> Result<Self> {
        self.with_components(
            self.g
                .iter()
                .map(|c| c.iter().map(|v| a * v).collect())
                .collect(),
        )
    }

    /// `g + eps·dir`.
    pub fn perturbed(&self, eps: f64, dir: &[Vec<f64>]) -> Result<Self> {
        self.with_components(
            self.g
                .iter()
                .zip(dir)
                .map(|(c, d)| c.iter().zip(d).map(|(a, b)| a + eps * b).collect())
                .collect(),
        )
    }

    /// Largest top-quarter Fourier coefficient relative to the peak, over components.
    pub fn spectral_tail(&self) -> f64 {
        self.g
            .iter()
            .map(|c| {
                self.grid
                    .spectral_tail(&c.iter().map(|&v| C64::new(v, 0.0)).collect::<Vec<_>>())
            })
            .fold(0.0, f64::max)
    }

    /// Fails when the profile is not spectrally resolved (tail above `1e-8` of peak).
    pub fn check_resolved(&self) -> Result<()> {
        let t = self.spectral_tail();
        if t > 1e-8 {
            return Err(Error::InvalidInput(format!(
                "profile is not resolved on {} nodes: spectral tail {t:e} exceeds 1e-8 of the peak",
                self.grid.len()
            )));
        }
        Ok(())
    }

    /// `g` as a sampled function with spectral derivatives attached.
    pub fn sampled(&self) -> SampledFunction {
        let comps: Vec<Vec<C64>> = self
            .g
            .iter()
            .map(|c| c.iter().map(|&v| C64::new(v, 0.0)).collect())
            .collect();
        SampledFunction::periodic(&self.grid, &comps).expect("profile grid is valid")
    }

    /// Height at an arbitrary abscissa via trigonometric interpolation of `g`.
    pub fn height_at(&self, x: f64) -> f64 {
        let m = self.dim();
        let mut s = 0.0;
        for c in &self.g {
            let coeffs = self
                .grid
                .coefficients(&c.iter().map(|&v| C64::new(v, 0.0)).collect::<Vec<_>>());
            let hc = self.nu + self.grid.interpolate(&coeffs, x).re;
            s += hc * hc;
        }
        (s / m as f64).sqrt()
    }

    pub fn map_forward(&self, xp: f64, yp: f64) -> Result<(f64, f64)> {
        let h = self.height_at(xp);
        let tol = 1e-14 * h;
        if !(yp >= -tol && yp <= h + tol) {
            return Err(Error::OutsideDomain(format!(
                "y' = {yp} outside [0, h(x')] = [0, {h}]"
            )));
        }
        Ok((xp, 1.0 - yp / h))
    }

    pub fn map_inverse(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        if !(0.0..=1.0).contains(&y) {
            return Err(Error::OutsideDomain(format!(
                "strip coordinate y = {y} outside [0, 1]"
            )));
        }
        Ok((x, (1.0 - y) * self.height_at(x)))
    }

    /// `υ(x, y) = u(x, (1−y) h(x))` on the strip grid. `u` returns an `E`-vector.
    pub fn pushforward(
        &self,
        grid: &Arc<StripGrid>,
        u: impl Fn(f64, f64) -> Vec<C64>,
    ) -> Result<StripField> {
        check_grid(self, grid)?;
        let xs = grid.x().nodes();
        let ys = grid.y().nodes().to_vec();
        let m = grid.dim();
        let mut f = StripField::zeros(grid.clone());
        for (iy, &y) in ys.iter().enumerate() {
            for (ix, &x) in xs.iter().enumerate() {
                let v = u(x, (1.0 - y) * self.height[ix]);
                if v.len() != m {
                    return Err(Error::InvalidInput(
                        "pushforward callback returned wrong dimension".into(),
                    ));
                }
                for (c, z) in v.into_iter().enumerate() {
                    f.set(c, iy, ix, z);
                }
            }
        }
        Ok(f)
    }

    /// Evaluator of a strip field on `Ω_g`: `u(x', y') = υ(x', 1 − y'/h(x'))`.
    pub fn pullback<'a>(&'a self, field: &'a StripField) -> PulledBack<'a> {
        let grid = field.grid();
        let nx = grid.nx();
        let coeffs = (0..grid.dim() * grid.ny())
            .map(|lane| grid.x().coefficients(&field.lane(lane)[..nx]))
            .collect();
        PulledBack {
            profile: self,
            field,
            coeffs,
        }
    }
}

fn check_grid(p: &InterfaceProfile, grid: &StripGrid) -> Result<()> {
    if grid.x() != p.grid() || grid.dim() != p.dim() {
        return Err(Error::InvalidInput(
            "strip grid does not match the profile's torus or dimension".into(),
        ));
    }
    Ok(())
}

pub struct PulledBack<'a> {
    profile: &'a InterfaceProfile,
    field: &'a StripField,
    coeffs: Vec<Vec<C64>>,
}

impl PulledBack<'_> {
    pub fn eval(&self, xp: f64, yp: f64) -> Result<Vec<C64>> {
        let (x, y) = self.profile.map_forward(xp, yp)?;
        let grid = self.field.grid();
        let ny = grid.ny();
        let mut out = Vec::with_capacity(grid.dim());
        for c in 0..grid.dim() {
            let col: Vec<C64> = (0..ny)
                .map(|iy| grid.x().interpolate(&self.coeffs[c * ny + iy], x))
                .collect();
            out.push(grid.y().interpolate(&col, y.clamp(0.0, 1.0)));
        }
        Ok(out)
    }
}

/// Coefficient fields on the strip grid. Interior fields use index
/// `(c*ny + iy)*nx + ix`, boundary fields `c*nx + ix`.
#[derive(Debug, Clone)]
pub struct TransformedCoefficients {
    pub dim: usize,
    pub nx: usize,
    pub ny: usize,
    pub a12: Vec<f64>,
    pub a22: Vec<f64>,
    pub a2: Vec<f64>,
    pub alpha: Vec<f64>,
    pub b10: Vec<f64>,
    pub b20: Vec<f64>,
    pub b21: Vec<f64>,
    pub beta: Vec<f64>,
}

impl TransformedCoefficients {
    pub fn a11(&self) -> f64 {
        1.0
    }

    pub fn b11(&self) -> f64 {
        0.0
    }

    pub fn at(&self, c: usize, iy: usize, ix: usize) -> usize {
        (c * self.ny + iy) * self.nx + ix
    }
}

pub fn coefficients(p: &InterfaceProfile, grid: &StripGrid) -> Result<TransformedCoefficients> {
    check_grid(p, grid)?;
    let (m, nx, ny) = (p.dim(), grid.nx(), grid.ny());
    let beta: Vec<f64> = grid.y().nodes().iter().map(|y| 1.0 - y).collect();
    let xs = grid.x().nodes();
    let n = m * nx * ny;
    let mut c = TransformedCoefficients {
        dim: m,
        nx,
        ny,
        a12: vec![0.0; n],
        a22: vec![0.0; n],
        a2: vec![0.0; n],
        alpha: vec![0.0; n],
        b10: vec![0.0; m * nx],
        b20: vec![0.0; m * nx],
        b21: vec![0.0; m * nx],
        beta: beta.clone(),
    };
    for comp in 0..m {
        for ix in 0..nx {
            let hc = p.nu + p.g[comp][ix];
            if !(hc >= p.h_min) {
                return Err(Error::DegenerateDomain {
                    x: xs[ix],
                    component: comp,
                    height: hc,
                });
            }
            let gx = p.gx[comp][ix];
            let gxx = p.gxx[comp][ix];
            c.b10[comp * nx + ix] = -gx;
            c.b20[comp * nx + ix] = -(1.0 + gx * gx) / hc;
            c.b21[comp * nx + ix] = 1.0 / hc;
            for (iy, &b) in beta.iter().enumerate() {
                let k = (comp * ny + iy) * nx + ix;
                c.a12[k] = b * gx / hc;
                c.a22[k] = (1.0 + b * b * gx * gx) / (hc * hc);
                c.a2[k] = (b / hc) * (2.0 * gx * gx / hc - gxx);
                c.alpha[k] = 1.0 / (1.0 + hc * hc + b * b * gx * gx);
            }
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EllipticityReport {
    /// min over nodes and components of (least eigenvalue − α).
    pub margin: f64,
    /// min over nodes of (16-direction Rayleigh minimum − least eigenvalue); never below −1e-12.
    pub direction_gap: f64,
    pub min_alpha: f64,
    pub pass: bool,
}

pub fn ellipticity_floor(c: &TransformedCoefficients) -> EllipticityReport {
    let mut margin = f64::INFINITY;
    let mut gap = f64::INFINITY;
    let mut min_alpha = f64::INFINITY;
    let dirs: Vec<(f64, f64)> = (0..16)
        .map(|k| {
            let t = std::f64::consts::PI * k as f64 / 16.0;
            (t.cos(), t.sin())
        })
        .collect();
    for k in 0..c.a12.len() {
        let (a, b, d) = (1.0, c.a12[k], c.a22[k]);
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        let lmin = mean - rad;
        margin = margin.min(lmin - c.alpha[k]);
        min_alpha = min_alpha.min(c.alpha[k]);
        let q = dirs
            .iter()
            .map(|(x, y)| a * x * x + 2.0 * b * x * y + d * y * y)
            .fold(f64::INFINITY, f64::min);
        gap = gap.min(q - lmin);
    }
    EllipticityReport {
        margin,
        direction_gap: gap,
        min_alpha,
        pass: margin >= -1e-10 && gap >= -1e-12 * (1.0 + margin.abs()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn flat_coefficients_match_closed_form() {
        let grid = PeriodicGrid::new(16, 2.0 * PI).unwrap();
        let p = InterfaceProfile::flat(1.0, grid.clone(), 1).unwrap();
        let sg = Arc::new(StripGrid::new(grid, 9, 1).unwrap());
        let c = coefficients(&p, &sg).unwrap();
        assert!(c.a12.iter().all(|&v| v == 0.0));
        assert!(c.a22.iter().all(|&v| v == 1.0));
        assert!(c.a2.iter().all(|&v| v == 0.0));
        assert!(c.b20.iter().all(|&v| v == -1.0));
        assert!(c.b21.iter().all(|&v| v == 1.0));
        assert!(c.alpha.iter().all(|&v| v == 0.5));
        let r = ellipticity_floor(&c);
        assert!((r.margin - 0.5).abs() < 1e-15 && r.pass);
    }

    #[test]
    fn flat_margin_formula_for_general_offset() {
        for nu in [0.3, 1.0, 2.5] {
            let grid = PeriodicGrid::new(8, 1.0).unwrap();
            let p = InterfaceProfile::flat(nu, grid.clone(), 2).unwrap();
            let sg = StripGrid::new(grid, 5, 2).unwrap();
            let r = ellipticity_floor(&coefficients(&p, &sg).unwrap());
            let expect = f64::min(1.0, 1.0 / (nu * nu)) - 1.0 / (1.0 + nu * nu);
            assert!((r.margin - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn degenerate_component_is_rejected() {
        let grid = PeriodicGrid::new(8, 1.0).unwrap();
        let err = InterfaceProfile::new(1.0, grid, vec![vec![-1.0; 8]]).unwrap_err();
        assert!(matches!(err, Error::DegenerateDomain { .. }));
        assert!(err.to_string().contains("ellipticity"));
    }

    #[test]
    fn maps_send_boundaries_to_strip_edges() {
        let grid = PeriodicGrid::new(16, 2.0 * PI).unwrap();
        let p = InterfaceProfile::flat(1.0, grid, 1).unwrap();
        assert_eq!(p.map_forward(0.0, 1.0).unwrap(), (0.0, 0.0));
        assert_eq!(p.map_forward(0.7, 0.0).unwrap(), (0.7, 1.0));
        assert!(p.map_forward(0.7, 1.5).is_err());
        assert!(p.map_inverse(0.7, -0.1).is_err());
    }
}
