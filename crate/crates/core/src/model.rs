//! Constant-coefficient problems: decay generators of the frozen operator,
//! multiplier solutions on the half-plane and on the unit-depth strip,
//! multiplier decay profiles and the half-plane coercivity probe.
//!
//! The frozen operator is `−∂²_x − 2 a12 ∂_x∂_y − a22 ∂²_y + A + μ²`. A mode
//! `e^{ikx}` decays in y as `exp(−Λ(η)y)` with `η = −k`, where `Λ(η)` is the
//! right-half-plane root of `−a22 Λ² − 2i a12 η Λ + (A + μ² + η²) = 0`.

use std::sync::Arc;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::geometry::TransformedCoefficients;
use crate::grid::PeriodicGrid;
use crate::holder::{h2alpha_norm, SampledFunction, TensorGrid};
use crate::linalg::{eigenvalues, identity, op_norm};
use crate::operator::{expm, sqrtm, SectorialOperator};
use crate::strip::{StripField, StripGrid};
use crate::{par, CMat, CVec, Error, Result, C64};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Frozen principal coefficients, one pair per component of `E`.
#[derive(Debug, Clone)]
pub struct FrozenCoefficients {
    a12: Vec<f64>,
    a22: Vec<f64>,
    a: SectorialOperator,
    mu: f64,
}

impl FrozenCoefficients {
    pub fn new(a12: Vec<f64>, a22: Vec<f64>, a: SectorialOperator, mu: f64) -> Result<Self> {
        let m = a.dim();
        if a12.len() != m || a22.len() != m {
            return Err(Error::InvalidInput(format!(
                "need {m} coefficient pairs, one per component"
            )));
        }
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "shift μ = {mu} must be finite and ≥ 0"
            )));
        }
        for c in 0..m {
            if !(a22[c] > 0.0) || !a12[c].is_finite() {
                return Err(Error::InvalidInput(format!(
                    "a22 = {} must be positive",
                    a22[c]
                )));
            }
            let gap = a22[c] - a12[c] * a12[c];
            if !(gap > 0.0) {
                return Err(Error::Ellipticity { margin: gap });
            }
        }
        Ok(Self { a12, a22, a, mu })
    }

    pub fn uniform(a12: f64, a22: f64, a: SectorialOperator, mu: f64) -> Result<Self> {
        let m = a.dim();
        Self::new(vec![a12; m], vec![a22; m], a, mu)
    }

    /// Values at `(x_ix, 0)`.
    pub fn at_boundary(
        c: &TransformedCoefficients,
        a: SectorialOperator,
        ix: usize,
        mu: f64,
    ) -> Result<Self> {
        let a12 = (0..c.dim).map(|k| c.a12[c.at(k, 0, ix)]).collect();
        let a22 = (0..c.dim).map(|k| c.a22[c.at(k, 0, ix)]).collect();
        Self::new(a12, a22, a, mu)
    }

    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Self::new(self.a12.clone(), self.a22.clone(), self.a.clone(), mu)
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn a12(&self) -> &[f64] {
        &self.a12
    }

    pub fn a22(&self) -> &[f64] {
        &self.a22
    }

    pub fn operator(&self) -> &SectorialOperator {
        &self.a
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `min_c (a22 − a12²)`.
    pub fn ellipticity_gap(&self) -> f64 {
        self.a12
            .iter()
            .zip(&self.a22)
            .map(|(b, d)| d - b * b)
            .fold(f64::INFINITY, f64::min)
    }

    fn is_uniform(&self) -> bool {
        self.a12.iter().all(|&v| v == self.a12[0]) && self.a22.iter().all(|&v| v == self.a22[0])
    }

    /// `A + μ² + η²`.
    pub fn shifted(&self, eta: f64) -> CMat {
        self.a.entries() + identity(self.dim()) * C64::new(self.mu * self.mu + eta * eta, 0.0)
    }

    /// `p(ξ) + A + μ²` with `p(ξ) = ξ₁² + 2 a12 ξ₁ξ₂ + a22 ξ₂²` per component.
    pub fn symbol(&self, xi1: f64, xi2: f64) -> CMat {
        let mut s = self.a.entries().clone();
        for c in 0..self.dim() {
            s[(c, c)] += xi1 * xi1
                + 2.0 * self.a12[c] * xi1 * xi2
                + self.a22[c] * xi2 * xi2
                + self.mu * self.mu;
        }
        s
    }

    /// `‖−a22 Λ² − 2i a12 η Λ + A_μ‖`.
    pub fn quadratic_residual(&self, eta: f64, lambda: &CMat) -> f64 {
        let m = self.dim();
        let l2 = lambda * lambda;
        let mut r = self.shifted(eta);
        for i in 0..m {
            for j in 0..m {
                r[(i, j)] -=
                    l2[(i, j)] * self.a22[i] + I * (2.0 * self.a12[i] * eta) * lambda[(i, j)];
            }
        }
        op_norm(&r)
    }
}

#[derive(Debug, Clone)]
pub struct DecayGenerator {
    pub eta: f64,
    pub lambda: CMat,
    /// Quadratic residual relative to `‖A_μ‖`.
    pub residual: f64,
}

impl DecayGenerator {
    pub fn min_re(&self) -> f64 {
        eigenvalues(&self.lambda)
            .iter()
            .map(|z| z.re)
            .fold(f64::INFINITY, f64::min)
    }

    /// `N(η, y) = exp(−Λ y)`.
    pub fn propagator(&self, y: f64) -> CMat {
        if y == 0.0 {
            return identity(self.lambda.nrows());
        }
        expm(&(&self.lambda * C64::new(-y, 0.0)))
    }
}

pub fn decay_generator(fc: &FrozenCoefficients, eta: f64) -> Result<DecayGenerator> {
    let m = fc.dim();
    let am = fc.shifted(eta);
    let lambda = if fc.is_uniform() {
        let (a12, a22) = (fc.a12[0], fc.a22[0]);
        let arg = &am * C64::new(a22, 0.0) - identity(m) * C64::new(a12 * a12 * eta * eta, 0.0);
        let s = sqrtm(&arg)?;
        (s - identity(m) * (I * a12 * eta)) / C64::new(a22, 0.0)
    } else {
        companion_root(fc, eta, &am)?
    };
    let residual = fc.quadratic_residual(eta, &lambda) / op_norm(&am).max(f64::MIN_POSITIVE);
    let gen = DecayGenerator {
        eta,
        lambda,
        residual,
    };
    if !(residual <= 1e-10) {
        return Err(Error::MatrixFunction(format!(
            "decay generator at η = {eta} has quadratic residual {residual:e}"
        )));
    }
    let re = gen.min_re();
    if !(re > 0.0) {
        return Err(Error::MatrixFunction(format!(
            "decay generator at η = {eta} has spectrum with Re = {re}"
        )));
    }
    Ok(gen)
}

/// Stable invariant subspace of the first-order companion system, through
/// the Newton iteration for the matrix sign function.
fn companion_root(fc: &FrozenCoefficients, eta: f64, am: &CMat) -> Result<CMat> {
    let m = fc.dim();
    let n = 2 * m;
    let mut c = CMat::zeros(n, n);
    for i in 0..m {
        c[(i, m + i)] = C64::new(1.0, 0.0);
        for j in 0..m {
            c[(m + i, j)] = am[(i, j)] / fc.a22[i];
        }
        c[(m + i, m + i)] = I * (2.0 * eta * fc.a12[i] / fc.a22[i]);
    }
    let mut s = c;
    for _ in 0..100 {
        let inv = s.clone().try_inverse().ok_or_else(|| {
            Error::MatrixFunction(format!(
                "companion matrix at η = {eta} has an eigenvalue on the imaginary axis"
            ))
        })?;
        let det = s.determinant().norm();
        let g = if det > 0.0 && det.is_finite() {
            det.powf(-1.0 / n as f64)
        } else {
            1.0
        };
        let next = (&s * C64::new(g, 0.0) + inv * C64::new(1.0 / g, 0.0)) * C64::new(0.5, 0.0);
        let change = op_norm(&(&next - &s));
        s = next;
        if change <= 1e-13 * op_norm(&s) {
            break;
        }
    }
    let p = (identity(n) - s) * C64::new(0.5, 0.0);
    let svd = p.svd(true, false);
    let u = svd.u.expect("left vectors requested");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut v = CMat::zeros(n, m);
    for (k, &col) in order.iter().take(m).enumerate() {
        v.set_column(k, &u.column(col));
    }
    let v1 = v.rows(0, m).into_owned();
    let v2 = v.rows(m, m).into_owned();
    let v1inv = v1.try_inverse().ok_or_else(|| {
        Error::MatrixFunction(format!(
            "stable subspace at η = {eta} is not a graph over the trace"
        ))
    })?;
    let mut lambda = -(v2 * v1inv);
    let mut res = fc.quadratic_residual(eta, &lambda);
    for _ in 0..20 {
        let next = newton_correction(fc, eta, am, &lambda)?;
        let r = fc.quadratic_residual(eta, &next);
        if !(r < res) {
            break;
        }
        lambda = next;
        res = r;
        if res <= 1e-14 * op_norm(am) {
            break;
        }
    }
    Ok(lambda)
}

/// One Newton step on `F(Λ) = −D22 Λ² − 2iη D12 Λ + A_μ`.
fn newton_correction(fc: &FrozenCoefficients, eta: f64, am: &CMat, lambda: &CMat) -> Result<CMat> {
    let m = fc.dim();
    let d22 = CMat::from_diagonal(&CVec::from_iterator(
        m,
        fc.a22.iter().map(|&v| C64::new(v, 0.0)),
    ));
    let d12 = CMat::from_diagonal(&CVec::from_iterator(
        m,
        fc.a12.iter().map(|&v| I * (2.0 * eta * v)),
    ));
    let f = am - &d22 * lambda * lambda - &d12 * lambda;
    let mut jac = CMat::zeros(m * m, m * m);
    for col in 0..m * m {
        let mut h = CMat::zeros(m, m);
        h[(col % m, col / m)] = C64::new(1.0, 0.0);
        let dh = -(&d22 * (lambda * &h + &h * lambda)) - &d12 * &h;
        for (k, z) in dh.iter().enumerate() {
            jac[(k, col)] = *z;
        }
    }
    let rhs = CVec::from_iterator(m * m, f.iter().map(|z| -z));
    let step = jac.lu().solve(&rhs).ok_or_else(|| {
        Error::MatrixFunction(format!(
            "singular Newton system for the decay generator at η = {eta}"
        ))
    })?;
    Ok(lambda + CMat::from_column_slice(m, m, step.as_slice()))
}

/// Solution operators of one x-mode on the unit-depth strip with `∂_y u = 0`
/// at `y = 1`: `u(y) = e^{−Λy} a + e^{−Λ̃(1−y)} b`.
#[derive(Debug, Clone)]
pub struct StripMode {
    pub k: f64,
    pub forward: DecayGenerator,
    pub backward: DecayGenerator,
    top: CMat,
    bottom: CMat,
    e_bwd: CMat,
}

pub fn strip_mode(fc: &FrozenCoefficients, k: f64) -> Result<StripMode> {
    let m = fc.dim();
    let forward = decay_generator(fc, -k)?;
    let backward = decay_generator(fc, k)?;
    let e_fwd = forward.propagator(1.0);
    let e_bwd = backward.propagator(1.0);
    let mut sys = CMat::zeros(2 * m, 2 * m);
    sys.view_mut((0, 0), (m, m)).copy_from(&identity(m));
    sys.view_mut((0, m), (m, m)).copy_from(&e_bwd);
    sys.view_mut((m, 0), (m, m))
        .copy_from(&(-(&forward.lambda * &e_fwd)));
    sys.view_mut((m, m), (m, m)).copy_from(&backward.lambda);
    let mut rhs = CMat::zeros(2 * m, m);
    rhs.view_mut((0, 0), (m, m)).copy_from(&identity(m));
    let x = sys.lu().solve(&rhs).ok_or(Error::Singular {
        lambda: C64::new(k, 0.0),
    })?;
    Ok(StripMode {
        k,
        top: x.rows(0, m).into_owned(),
        bottom: x.rows(m, m).into_owned(),
        forward,
        backward,
        e_bwd,
    })
}

impl StripMode {
    /// Matrix taking the trace to `u(y)`.
    pub fn eval(&self, y: f64) -> CMat {
        self.forward.propagator(y) * &self.top + self.backward.propagator(1.0 - y) * &self.bottom
    }

    /// Matrix taking the trace to `∂_y u(y)`.
    pub fn eval_dy(&self, y: f64) -> CMat {
        -(&self.forward.lambda * self.forward.propagator(y) * &self.top)
            + &self.backward.lambda * self.backward.propagator(1.0 - y) * &self.bottom
    }

    /// `Λ_eff` with `∂_y u(0) = −Λ_eff u(0)`.
    pub fn dtn(&self) -> CMat {
        &self.forward.lambda * &self.top - &self.backward.lambda * &self.e_bwd * &self.bottom
    }
}

fn transform(x: &PeriodicGrid, comps: &[Vec<C64>]) -> Vec<Vec<C64>> {
    comps.iter().map(|c| x.coefficients(c)).collect()
}

/// Frozen-coefficient solution on the strip grid: Dirichlet datum `ψ` on
/// `y = 0`, homogeneous Neumann on `y = 1`.
pub fn strip_dirichlet_solve(
    fc: &FrozenCoefficients,
    grid: &Arc<StripGrid>,
    psi: &[Vec<C64>],
) -> Result<StripField> {
    let (m, nx, ny) = (grid.dim(), grid.nx(), grid.ny());
    check_datum(psi, m, nx)?;
    let hat = transform(grid.x(), psi);
    let ys = grid.y().nodes().to_vec();
    let cols = par::map(nx, |j| -> Result<Vec<C64>> {
        let mode = strip_mode(fc, grid.x().wavenumber(j))?;
        let p = CVec::from_iterator(m, (0..m).map(|c| hat[c][j]));
        let mut out = vec![C64::new(0.0, 0.0); m * ny];
        for (iy, &y) in ys.iter().enumerate() {
            let v = mode.eval(y) * &p;
            for c in 0..m {
                out[c * ny + iy] = v[c];
            }
        }
        Ok(out)
    });
    let mut field = StripField::zeros(grid.clone());
    let vals = field.values_mut();
    for (j, col) in cols.into_iter().enumerate() {
        let col = col?;
        for l in 0..m * ny {
            vals[l * nx + j] = col[l];
        }
    }
    for lane in vals.chunks_mut(nx) {
        grid.x().inverse(lane);
    }
    Ok(field)
}

fn check_datum(psi: &[Vec<C64>], m: usize, nx: usize) -> Result<()> {
    if psi.len() != m || psi.iter().any(|c| c.len() != nx) {
        return Err(Error::InvalidInput(format!(
            "datum must have {m} components of length {nx}"
        )));
    }
    Ok(())
}

/// Field on `T_L × {y_k}` (truncated half-plane), stored as `(c*ny + iy)*nx + ix`.
#[derive(Debug, Clone)]
pub struct HalfPlaneField {
    pub x: PeriodicGrid,
    pub y: Vec<f64>,
    pub dim: usize,
    pub values: Vec<C64>,
    /// Set when the datum's spectral tail exceeded `1e-6` of its peak.
    pub unresolved: bool,
}

impl HalfPlaneField {
    pub fn zeros(x: PeriodicGrid, y: Vec<f64>, dim: usize) -> Self {
        let n = dim * y.len() * x.len();
        Self {
            x,
            y,
            dim,
            values: vec![C64::new(0.0, 0.0); n],
            unresolved: false,
        }
    }

    pub fn get(&self, c: usize, iy: usize, ix: usize) -> C64 {
        self.values[(c * self.y.len() + iy) * self.x.len() + ix]
    }

    pub fn trace(&self, iy: usize) -> Vec<Vec<C64>> {
        let (nx, ny) = (self.x.len(), self.y.len());
        (0..self.dim)
            .map(|c| self.values[(c * ny + iy) * nx..(c * ny + iy + 1) * nx].to_vec())
            .collect()
    }

    pub fn dx(&self, order: u32) -> Self {
        let mut out = self.clone();
        for lane in out.values.chunks_mut(self.x.len()) {
            let d = self.x.derivative(lane, order);
            lane.copy_from_slice(&d);
        }
        out
    }

    pub fn apply_matrix(&self, a: &CMat) -> Self {
        let per = self.y.len() * self.x.len();
        let mut out = Self::zeros(self.x.clone(), self.y.clone(), self.dim);
        for c in 0..self.dim {
            for d in 0..self.dim {
                for k in 0..per {
                    out.values[c * per + k] += a[(c, d)] * self.values[d * per + k];
                }
            }
        }
        out
    }

    /// Node-major copy (`node = iy*nx + ix`) for tensor-grid Hölder norms.
    pub fn node_major(&self) -> Vec<C64> {
        let per = self.y.len() * self.x.len();
        let mut out = vec![C64::new(0.0, 0.0); self.values.len()];
        for c in 0..self.dim {
            for k in 0..per {
                out[k * self.dim + c] = self.values[c * per + k];
            }
        }
        out
    }

    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Default truncation depth `10 / √(1 + μ² + λ_min(A))`.
pub fn default_depth(fc: &FrozenCoefficients) -> f64 {
    let lmin = fc.a.min_re_eigenvalue().max(0.0);
    10.0 / (1.0 + fc.mu * fc.mu + lmin).sqrt()
}

/// `∂_y^order u` for the half-plane Dirichlet problem, per mode `(−Λ)^order e^{−Λy} ψ̂`.
fn dirichlet_y_derivatives(
    fc: &FrozenCoefficients,
    x: &PeriodicGrid,
    psi: &[Vec<C64>],
    y: &[f64],
    max_order: usize,
) -> Result<Vec<HalfPlaneField>> {
    let (m, nx, ny) = (fc.dim(), x.len(), y.len());
    check_datum(psi, m, nx)?;
    let unresolved = psi.iter().any(|c| x.spectral_tail(c) > 1e-6);
    let hat = transform(x, psi);
    let cols = par::map(nx, |j| -> Result<Vec<Vec<C64>>> {
        let gen = decay_generator(fc, -x.wavenumber(j))?;
        let p = CVec::from_iterator(m, (0..m).map(|c| hat[c][j]));
        let neg = -gen.lambda.clone();
        let mut outs = vec![vec![C64::new(0.0, 0.0); m * ny]; max_order + 1];
        for (iy, &yv) in y.iter().enumerate() {
            let mut v = gen.propagator(yv) * &p;
            for out in outs.iter_mut() {
                for c in 0..m {
                    out[c * ny + iy] = v[c];
                }
                v = &neg * v;
            }
        }
        Ok(outs)
    });
    let mut fields: Vec<HalfPlaneField> = (0..=max_order)
        .map(|_| HalfPlaneField {
            unresolved,
            ..HalfPlaneField::zeros(x.clone(), y.to_vec(), m)
        })
        .collect();
    for (j, col) in cols.into_iter().enumerate() {
        let col = col?;
        for (f, c) in fields.iter_mut().zip(col) {
            for l in 0..m * ny {
                f.values[l * nx + j] = c[l];
            }
        }
    }
    for f in fields.iter_mut() {
        for lane in f.values.chunks_mut(nx) {
            x.inverse(lane);
        }
    }
    Ok(fields)
}

/// `u = F⁻¹ N_μ(η, y) F ψ` at the requested depths.
pub fn halfplane_dirichlet_solve(
    fc: &FrozenCoefficients,
    x: &PeriodicGrid,
    psi: &[Vec<C64>],
    y: &[f64],
) -> Result<HalfPlaneField> {
    Ok(dirichlet_y_derivatives(fc, x, psi, y, 0)?.remove(0))
}

/// Discrete wavenumbers of the torus plus a ×4 refinement on `[−k₁, k₁]`.
pub fn default_eta_grid(x: &PeriodicGrid) -> Vec<f64> {
    let mut etas: Vec<f64> = (0..x.len()).map(|j| x.wavenumber(j)).collect();
    let k1 = x.wavenumber(1);
    for q in [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0] {
        etas.push(q * k1 / 4.0);
    }
    etas.sort_by(f64::total_cmp);
    etas
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiplierProfiles {
    pub y: Vec<f64>,
    /// From `q₀ = A N_μ`.
    pub phi0: Vec<f64>,
    /// From `q_j = |μ|^{2−j} η^j N_μ`, `j = 0, 1, 2`.
    pub phi: [Vec<f64>; 3],
}

/// `max_η ‖q(η,y)‖ + (1+|η|)^{1/2} ‖∂_η q(η,y)‖` for each multiplier family.
pub fn multiplier_profiles(
    fc: &FrozenCoefficients,
    y: &[f64],
    etas: &[f64],
) -> Result<MultiplierProfiles> {
    let mu = fc.mu;
    let a = fc.a.entries().clone();
    let weight = |j: usize, eta: f64| mu.powi(2 - j as i32) * eta.powi(j as i32);
    let per_eta = par::map(etas.len(), |e| -> Result<Vec<[f64; 4]>> {
        let eta = etas[e];
        let h = 1e-5 * (1.0 + eta.abs());
        let g0 = decay_generator(fc, eta)?;
        let gp = decay_generator(fc, eta + h)?;
        let gm = decay_generator(fc, eta - h)?;
        let envelope = (1.0 + eta.abs()).sqrt();
        let mut rows = Vec::with_capacity(y.len());
        for &yv in y {
            let (n0, np, nm) = (g0.propagator(yv), gp.propagator(yv), gm.propagator(yv));
            let mut row = [0.0; 4];
            let q0 = &a * &n0;
            let dq0 = (&a * &np - &a * &nm) / C64::new(2.0 * h, 0.0);
            row[0] = op_norm(&q0) + envelope * op_norm(&dq0);
            for j in 0..3 {
                let q = &n0 * C64::new(weight(j, eta), 0.0);
                let dq = (&np * C64::new(weight(j, eta + h), 0.0)
                    - &nm * C64::new(weight(j, eta - h), 0.0))
                    / C64::new(2.0 * h, 0.0);
                row[j + 1] = op_norm(&q) + envelope * op_norm(&dq);
            }
            rows.push(row);
        }
        Ok(rows)
    });
    let mut phi0 = vec![0.0f64; y.len()];
    let mut phi = [
        vec![0.0f64; y.len()],
        vec![0.0; y.len()],
        vec![0.0; y.len()],
    ];
    for rows in per_eta {
        for (iy, r) in rows?.iter().enumerate() {
            phi0[iy] = phi0[iy].max(r[0]);
            for j in 0..3 {
                phi[j][iy] = phi[j][iy].max(r[j + 1]);
            }
        }
    }
    Ok(MultiplierProfiles {
        y: y.to_vec(),
        phi0,
        phi,
    })
}

/// Fits `Φ(y) ≈ C exp(−ω |λ₀| y)` on the second half of the samples, with
/// `|λ₀|` the spectral radius of `Λ(0, μ)`. Returns `ω`.
pub fn fitted_decay_rate(fc: &FrozenCoefficients, y: &[f64], profile: &[f64]) -> Result<f64> {
    let lam0 = eigenvalues(&decay_generator(fc, 0.0)?.lambda)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let start = y.len() / 2;
    let pts: Vec<(f64, f64)> = y[start..]
        .iter()
        .zip(&profile[start..])
        .filter(|(_, p)| **p > 0.0)
        .map(|(a, p)| (*a, p.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InvalidInput(
            "not enough positive profile samples to fit a rate".into(),
        ));
    }
    let n = pts.len() as f64;
    let (sx, sy) = pts
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let (mx, my) = (sx / n, sy / n);
    let (num, den) = pts.iter().fold((0.0, 0.0), |acc, p| {
        (acc.0 + (p.0 - mx) * (p.1 - my), acc.1 + (p.0 - mx).powi(2))
    });
    Ok(-(num / den) / lam0)
}

/// Reflection solve for a source on a uniform y-grid starting at 0,
/// followed by the Dirichlet correction. Refuses `μ < mu_min`.
pub fn halfplane_inhomogeneous_solve(
    fc: &FrozenCoefficients,
    source: &HalfPlaneField,
    psi: &[Vec<C64>],
    mu_min: f64,
) -> Result<HalfPlaneField> {
    if fc.mu < mu_min {
        return Err(Error::InvalidInput(format!(
            "μ = {} is below the coercivity threshold {mu_min}",
            fc.mu
        )));
    }
    let (m, nx, ny) = (source.dim, source.x.len(), source.y.len());
    if m != fc.dim() || ny < 3 {
        return Err(Error::InvalidInput(
            "source dimension or y-grid size is unusable".into(),
        ));
    }
    let dy = source.y[1] - source.y[0];
    let uniform = source.y[0] == 0.0
        && source
            .y
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dy).abs() <= 1e-12 * dy.abs().max(1.0));
    if !uniform || !(dy > 0.0) {
        return Err(Error::InvalidInput(
            "source must live on a uniform y-grid starting at 0".into(),
        ));
    }
    let period = 2 * (ny - 1);
    let depth2 = dy * period as f64;
    let fft_y = FftPlanner::new().plan_fft_forward(period);
    let ifft_y = FftPlanner::new().plan_fft_inverse(period);

    // even reflection, then x and y transforms: ext[c][r][ix]
    let mut ext = vec![vec![C64::new(0.0, 0.0); period * nx]; m];
    for (c, e) in ext.iter_mut().enumerate() {
        for r in 0..period {
            let src = if r < ny { r } else { period - r };
            let base = (c * ny + src) * nx;
            e[r * nx..(r + 1) * nx].copy_from_slice(&source.values[base..base + nx]);
            source.x.forward(&mut e[r * nx..(r + 1) * nx]);
        }
        let mut col = vec![C64::new(0.0, 0.0); period];
        for j in 0..nx {
            for r in 0..period {
                col[r] = e[r * nx + j];
            }
            fft_y.process(&mut col);
            for r in 0..period {
                e[r * nx + j] = col[r];
            }
        }
    }
    let xi2 = |r: usize| {
        let q = if r <= period / 2 {
            r as i64
        } else {
            r as i64 - period as i64
        };
        2.0 * std::f64::consts::PI * q as f64 / depth2
    };
    for r in 0..period {
        for j in 0..nx {
            let sym = fc.symbol(source.x.wavenumber(j), xi2(r));
            let rhs = CVec::from_iterator(m, (0..m).map(|c| ext[c][r * nx + j]));
            let sol = sym.lu().solve(&rhs).ok_or(Error::Singular {
                lambda: C64::new(fc.mu * fc.mu, 0.0),
            })?;
            for c in 0..m {
                ext[c][r * nx + j] = sol[c];
            }
        }
    }
    let mut u1 = HalfPlaneField::zeros(source.x.clone(), source.y.clone(), m);
    let scale = 1.0 / period as f64;
    for (c, e) in ext.iter_mut().enumerate() {
        let mut col = vec![C64::new(0.0, 0.0); period];
        for j in 0..nx {
            for r in 0..period {
                col[r] = e[r * nx + j];
            }
            ifft_y.process(&mut col);
            for r in 0..period {
                e[r * nx + j] = col[r] * scale;
            }
        }
        for iy in 0..ny {
            let row = &mut e[iy * nx..(iy + 1) * nx];
            source.x.inverse(row);
            let base = (c * ny + iy) * nx;
            u1.values[base..base + nx].copy_from_slice(row);
        }
    }
    let trace = u1.trace(0);
    check_datum(psi, m, nx)?;
    let corr: Vec<Vec<C64>> = psi
        .iter()
        .zip(&trace)
        .map(|(p, t)| p.iter().zip(t).map(|(a, b)| a - b).collect())
        .collect();
    let u2 = halfplane_dirichlet_solve(fc, &source.x, &corr, &source.y)?;
    let mut u = u1;
    for (a, b) in u.values.iter_mut().zip(&u2.values) {
        *a += b;
    }
    u.unresolved = u2.unresolved;
    Ok(u)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeRow {
    pub mu: f64,
    pub sample: usize,
    pub nx: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoercivityReport {
    pub rows: Vec<ProbeRow>,
    pub max_ratio: f64,
    /// Largest over smallest of the per-μ maximal ratios.
    pub mu_spread: f64,
}

impl CoercivityReport {
    pub fn from_rows(rows: Vec<ProbeRow>) -> Self {
        let mut mus: Vec<f64> = rows.iter().map(|r| r.mu).collect();
        mus.sort_by(f64::total_cmp);
        mus.dedup();
        let per_mu: Vec<f64> = mus
            .iter()
            .map(|&mu| {
                rows.iter()
                    .filter(|r| r.mu == mu)
                    .map(|r| r.ratio)
                    .fold(0.0, f64::max)
            })
            .collect();
        let max_ratio = per_mu.iter().cloned().fold(0.0, f64::max);
        let min_ratio = per_mu.iter().cloned().fold(f64::INFINITY, f64::min);
        Self {
            rows,
            max_ratio,
            mu_spread: max_ratio / min_ratio,
        }
    }
}

/// Ratio of `Σ_j |μ|^{2−j}‖∂^j_x u‖ + Σ_{ij}‖∂_i∂_j u‖ + ‖Au‖` (discrete `C^α`
/// on the truncated half-plane) to `‖ψ‖_{h^{2,α}(A)}`.
pub fn halfplane_coercivity_probe(
    fc: &FrozenCoefficients,
    x: &PeriodicGrid,
    ensemble: &[Vec<Vec<C64>>],
    mus: &[f64],
    alpha: f64,
    ny: usize,
) -> Result<CoercivityReport> {
    if ensemble.is_empty() || mus.is_empty() {
        return Err(Error::InvalidInput(
            "coercivity probe needs data and shifts".into(),
        ));
    }
    let m = fc.dim();
    let mut rows = Vec::new();
    for (s, psi) in ensemble.iter().enumerate() {
        let rhs = h2alpha_norm(&SampledFunction::periodic(x, psi)?, alpha, &fc.a)?;
        if !(rhs > 0.0) {
            return Err(Error::InvalidInput(
                "zero datum in coercivity ensemble".into(),
            ));
        }
        for &mu in mus {
            let f = fc.with_mu(mu)?;
            let depth = default_depth(&f);
            let y: Vec<f64> = (0..ny)
                .map(|i| depth * i as f64 / (ny - 1) as f64)
                .collect();
            let tg = TensorGrid::new(x.len(), x.length(), y.clone());
            let norm = |h: &HalfPlaneField| -> Result<f64> {
                Ok(tg.holder(&[&h.node_major()], m, alpha)?.total)
            };
            let mut d = dirichlet_y_derivatives(&f, x, psi, &y, 2)?;
            let uyy = d.pop().expect("three orders");
            let uy = d.pop().expect("three orders");
            let u = d.pop().expect("three orders");
            let ux = u.dx(1);
            let uxx = u.dx(2);
            let uxy = uy.dx(1);
            let mut lhs = mu * mu * norm(&u)? + mu * norm(&ux)? + norm(&uxx)?;
            lhs += norm(&uxx)? + 2.0 * norm(&uxy)? + norm(&uyy)?;
            lhs += norm(&u.apply_matrix(fc.a.entries()))?;
            rows.push(ProbeRow {
                mu,
                sample: s,
                nx: x.len(),
                lhs,
                rhs,
                ratio: lhs / rhs,
            });
        }
    }
    Ok(CoercivityReport::from_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn scalar_fc(a: f64, a12: f64, a22: f64, mu: f64) -> FrozenCoefficients {
        FrozenCoefficients::uniform(
            a12,
            a22,
            SectorialOperator::diagonal(&[a], 1.5, 4.0).unwrap(),
            mu,
        )
        .unwrap()
    }

    #[test]
    fn unit_generator() {
        let g = decay_generator(&scalar_fc(1.0, 0.0, 1.0, 0.0), 0.0).unwrap();
        assert!((g.lambda[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn companion_route_agrees_with_closed_form() {
        let a = SectorialOperator::new(
            CMat::from_row_slice(
                2,
                2,
                &[
                    C64::new(2.0, 0.0),
                    C64::new(0.5, 0.1),
                    C64::new(0.2, 0.0),
                    C64::new(1.5, 0.0),
                ],
            ),
            1.5,
            4.0,
        )
        .unwrap();
        let fc = FrozenCoefficients::uniform(0.3, 1.2, a.clone(), 1.0).unwrap();
        for eta in [-5.0, -0.5, 0.0, 2.0, 9.0] {
            let closed = decay_generator(&fc, eta).unwrap();
            let comp = companion_root(&fc, eta, &fc.shifted(eta)).unwrap();
            assert!(op_norm(&(&closed.lambda - &comp)) < 1e-9 * op_norm(&comp));
        }
        let mixed = FrozenCoefficients::new(vec![0.3, -0.1], vec![1.2, 0.8], a, 1.0).unwrap();
        let g = decay_generator(&mixed, 3.0).unwrap();
        assert!(g.residual < 1e-12 && g.min_re() > 0.0);
    }

    #[test]
    fn constant_datum_decays_like_exponential() {
        let x = PeriodicGrid::new(16, 2.0 * PI).unwrap();
        let fc = scalar_fc(1.0, 0.0, 1.0, 0.0);
        let y = [0.0, 0.5, 2.0];
        let u = halfplane_dirichlet_solve(&fc, &x, &[vec![C64::new(3.0, 0.0); 16]], &y).unwrap();
        for (iy, yv) in y.iter().enumerate() {
            assert!((u.get(0, iy, 5).re - 3.0 * (-yv).exp()).abs() < 1e-13);
        }
    }

    #[test]
    fn flat_strip_symbol_is_tanh() {
        let nu: f64 = 1.0;
        let fc = scalar_fc(2.0, 0.0, 1.0 / (nu * nu), 0.5);
        let k = 3.0;
        let r = nu * (2.0f64 + 0.25 + k * k).sqrt();
        let d = strip_mode(&fc, k).unwrap().dtn();
        assert!((d[(0, 0)].re - r * r.tanh()).abs() < 1e-12);
    }
}
