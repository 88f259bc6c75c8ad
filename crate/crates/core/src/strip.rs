//! Variable-coefficient elliptic solves on the strip `Q`.
//!
//! Collocation is Fourier in x and Chebyshev–Gauss–Lobatto in y. Row `iy = 0`
//! (Γ₀, the image of the free boundary) carries either the Dirichlet trace or
//! the oblique operator `B₀`; row `iy = ny−1` (Γ₁, the bottom) carries
//! `B₁ = b21 ∂_y`. The system is solved by GMRES, preconditioned with the
//! x-averaged (frozen) operator, which decouples into one dense
//! `(m·ny)²` block per Fourier mode.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use serde::{Deserialize, Serialize};

use crate::geometry::{coefficients, ellipticity_floor, InterfaceProfile, TransformedCoefficients};
use crate::grid::{ChebyshevGrid, PeriodicGrid};
use crate::holder::{default_interp, hk_alpha_norm, SampledFunction, TensorGrid};
use crate::linalg::{gmres, vec_norm, GmresOptions};
use crate::model::{CoercivityReport, ProbeRow};
use crate::operator::SectorialOperator;
use crate::{par, Error, Result, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct StripGrid {
    x: PeriodicGrid,
    y: ChebyshevGrid,
    dim: usize,
}

impl StripGrid {
    pub fn new(x: PeriodicGrid, ny: usize, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("field dimension must be ≥ 1".into()));
        }
        Ok(Self {
            x,
            y: ChebyshevGrid::new(ny)?,
            dim,
        })
    }

    pub fn with_size(nx: usize, ny: usize, length: f64, dim: usize) -> Result<Arc<Self>> {
        Ok(Arc::new(Self::new(
            PeriodicGrid::new(nx, length)?,
            ny,
            dim,
        )?))
    }

    pub fn x(&self) -> &PeriodicGrid {
        &self.x
    }

    pub fn y(&self) -> &ChebyshevGrid {
        &self.y
    }

    pub fn nx(&self) -> usize {
        self.x.len()
    }

    pub fn ny(&self) -> usize {
        self.y.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn size(&self) -> usize {
        self.dim * self.nx() * self.ny()
    }

    pub fn index(&self, c: usize, iy: usize, ix: usize) -> usize {
        (c * self.ny() + iy) * self.nx() + ix
    }
}

/// `E`-valued field on the strip grid, stored as `(c*ny + iy)*nx + ix`.
#[derive(Debug, Clone)]
pub struct StripField {
    grid: Arc<StripGrid>,
    values: Vec<C64>,
}

impl StripField {
    pub fn zeros(grid: Arc<StripGrid>) -> Self {
        let n = grid.size();
        Self {
            grid,
            values: vec![C64::new(0.0, 0.0); n],
        }
    }

    pub fn from_values(grid: Arc<StripGrid>, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.size() {
            return Err(Error::InvalidInput(
                "field length differs from grid size".into(),
            ));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Arc<StripGrid>, f: impl Fn(usize, f64, f64) -> C64) -> Self {
        let xs = grid.x().nodes();
        let ys = grid.y().nodes().to_vec();
        let mut out = Self::zeros(grid.clone());
        for c in 0..grid.dim() {
            for (iy, &y) in ys.iter().enumerate() {
                for (ix, &x) in xs.iter().enumerate() {
                    out.values[grid.index(c, iy, ix)] = f(c, x, y);
                }
            }
        }
        out
    }

    pub fn grid(&self) -> &Arc<StripGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn get(&self, c: usize, iy: usize, ix: usize) -> C64 {
        self.values[self.grid.index(c, iy, ix)]
    }

    pub fn set(&mut self, c: usize, iy: usize, ix: usize, z: C64) {
        let k = self.grid.index(c, iy, ix);
        self.values[k] = z;
    }

    /// Row of x-samples for lane `c*ny + iy`.
    pub fn lane(&self, lane: usize) -> &[C64] {
        let nx = self.grid.nx();
        &self.values[lane * nx..(lane + 1) * nx]
    }

    /// Trace at row `iy`, one vector per component.
    pub fn trace(&self, iy: usize) -> Vec<Vec<C64>> {
        let ny = self.grid.ny();
        (0..self.grid.dim())
            .map(|c| self.lane(c * ny + iy).to_vec())
            .collect()
    }

    pub fn dx(&self, order: u32) -> StripField {
        let mut out = self.clone();
        let nx = self.grid.nx();
        let x = self.grid.x().clone();
        par::for_each_chunk(&mut out.values, nx, |_, lane| {
            x.forward(lane);
            for (j, z) in lane.iter_mut().enumerate() {
                *z *= x.derivative_symbol(j, order);
            }
            x.inverse(lane);
        });
        out
    }

    fn apply_y(&self, d: &DMatrix<f64>) -> StripField {
        let (m, ny, nx) = (self.grid.dim(), self.grid.ny(), self.grid.nx());
        let mut out = StripField::zeros(self.grid.clone());
        for c in 0..m {
            for i in 0..ny {
                let dst = (c * ny + i) * nx;
                for j in 0..ny {
                    let w = d[(i, j)];
                    if w == 0.0 {
                        continue;
                    }
                    let src = (c * ny + j) * nx;
                    for ix in 0..nx {
                        let v = self.values[src + ix] * w;
                        out.values[dst + ix] += v;
                    }
                }
            }
        }
        out
    }

    pub fn dy(&self) -> StripField {
        self.apply_y(self.grid.y().d1())
    }

    pub fn dyy(&self) -> StripField {
        self.apply_y(self.grid.y().d2())
    }

    /// Values reordered node-major (`node = iy*nx + ix`, then component).
    pub fn node_major(&self) -> Vec<C64> {
        let (m, ny, nx) = (self.grid.dim(), self.grid.ny(), self.grid.nx());
        let mut out = vec![C64::new(0.0, 0.0); m * nx * ny];
        for c in 0..m {
            for iy in 0..ny {
                for ix in 0..nx {
                    out[(iy * nx + ix) * m + c] = self.values[(c * ny + iy) * nx + ix];
                }
            }
        }
        out
    }

    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn axpy(&mut self, a: C64, other: &StripField) {
        for (v, o) in self.values.iter_mut().zip(&other.values) {
            *v += a * o;
        }
    }

    /// Applies the `m×m` matrix at every node.
    pub fn apply_matrix(&self, a: &crate::CMat) -> StripField {
        let (m, ny, nx) = (self.grid.dim(), self.grid.ny(), self.grid.nx());
        let mut out = StripField::zeros(self.grid.clone());
        for c in 0..m {
            for d in 0..m {
                let w = a[(c, d)];
                for k in 0..ny * nx {
                    out.values[c * ny * nx + k] += w * self.values[d * ny * nx + k];
                }
            }
        }
        out
    }

    /// Largest top-quarter Fourier coefficient in x relative to the peak.
    pub fn x_spectral_tail(&self) -> f64 {
        let lanes = self.grid.dim() * self.grid.ny();
        (0..lanes)
            .map(|l| self.grid.x().spectral_tail(self.lane(l)))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary0 {
    Dirichlet,
    Oblique,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
    /// Solves whose preconditioned residual stays above this are errors.
    pub accept: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            restart: 60,
            max_iter: 600,
            accept: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    /// `‖b − Au‖ / ‖b‖` of the collocation system.
    pub residual: f64,
    pub preconditioned_residual: f64,
}

/// Collocation operator for `(B(g) + μ²)` with boundary rows.
pub struct DiscreteStripOperator {
    grid: Arc<StripGrid>,
    coeffs: TransformedCoefficients,
    a: Vec<C64>,
    mu: f64,
    bc0: Boundary0,
    blocks: Vec<LU<C64, Dyn, Dyn>>,
    settings: SolverSettings,
}

impl std::fmt::Debug for DiscreteStripOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscreteStripOperator")
            .field("nx", &self.grid.nx())
            .field("ny", &self.grid.ny())
            .field("dim", &self.grid.dim())
            .field("mu", &self.mu)
            .field("bc0", &self.bc0)
            .finish()
    }
}

pub fn assemble(
    p: &InterfaceProfile,
    a: &SectorialOperator,
    mu: f64,
    grid: &Arc<StripGrid>,
    bc0: Boundary0,
) -> Result<DiscreteStripOperator> {
    let coeffs = coefficients(p, grid)?;
    let rep = ellipticity_floor(&coeffs);
    if !rep.pass {
        return Err(Error::Ellipticity { margin: rep.margin });
    }
    DiscreteStripOperator::from_coefficients(grid.clone(), coeffs, a, mu, bc0)
}

impl DiscreteStripOperator {
    pub fn from_coefficients(
        grid: Arc<StripGrid>,
        coeffs: TransformedCoefficients,
        a: &SectorialOperator,
        mu: f64,
        bc0: Boundary0,
    ) -> Result<Self> {
        let m = grid.dim();
        if a.dim() != m || coeffs.dim != m || coeffs.nx != grid.nx() || coeffs.ny != grid.ny() {
            return Err(Error::InvalidInput(
                "operator, coefficients and grid disagree in size".into(),
            ));
        }
        let amat: Vec<C64> = (0..m * m).map(|k| a.entries()[(k / m, k % m)]).collect();
        let mut op = Self {
            grid,
            coeffs,
            a: amat,
            mu,
            bc0,
            blocks: Vec::new(),
            settings: SolverSettings::default(),
        };
        op.blocks = op.build_blocks()?;
        Ok(op)
    }

    pub fn with_settings(mut self, settings: SolverSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn settings(&self) -> SolverSettings {
        self.settings
    }

    pub fn grid(&self) -> &Arc<StripGrid> {
        &self.grid
    }

    pub fn coefficients(&self) -> &TransformedCoefficients {
        &self.coeffs
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn bc0(&self) -> Boundary0 {
        self.bc0
    }

    /// x-averaged coefficients, `[c*ny + iy]`.
    fn averaged(&self, field: &[f64]) -> Vec<f64> {
        let (m, ny, nx) = (self.grid.dim(), self.grid.ny(), self.grid.nx());
        (0..m * ny)
            .map(|l| field[l * nx..(l + 1) * nx].iter().sum::<f64>() / nx as f64)
            .collect()
    }

    fn averaged_boundary(&self, field: &[f64]) -> Vec<f64> {
        let (m, nx) = (self.grid.dim(), self.grid.nx());
        (0..m)
            .map(|c| field[c * nx..(c + 1) * nx].iter().sum::<f64>() / nx as f64)
            .collect()
    }

    fn build_blocks(&self) -> Result<Vec<LU<C64, Dyn, Dyn>>> {
        let (m, ny, nx) = (self.grid.dim(), self.grid.ny(), self.grid.nx());
        let a12 = self.averaged(&self.coeffs.a12);
        let a22 = self.averaged(&self.coeffs.a22);
        let a2 = self.averaged(&self.coeffs.a2);
        let b10 = self.averaged_boundary(&self.coeffs.b10);
        let b20 = self.averaged_boundary(&self.coeffs.b20);
        let b21 = self.averaged_boundary(&self.coeffs.b21);
        let d1 = self.grid.y().d1();
        let d2 = self.grid.y().d2();
        let mu2 = self.mu * self.mu;
        let n = m * ny;
        let blocks = par::map(nx, |j| {
            let s1 = self.grid.x().derivative_symbol(j, 1);
            let s2 = self.grid.x().derivative_symbol(j, 2);
            let mut mat = DMatrix::<C64>::zeros(n, n);
            for c in 0..m {
                let l = |iy: usize| c * ny + iy;
                // Γ₀
                match self.bc0 {
                    Boundary0::Dirichlet => mat[(l(0), l(0))] = C64::new(1.0, 0.0),
                    Boundary0::Oblique => {
                        for jy in 0..ny {
                            mat[(l(0), l(jy))] += b20[c] * d1[(0, jy)];
                        }
                        mat[(l(0), l(0))] += s1 * b10[c];
                    }
                }
                // Γ₁
                for jy in 0..ny {
                    mat[(l(ny - 1), l(jy))] = C64::new(b21[c] * d1[(ny - 1, jy)], 0.0);
                }
                for iy in 1..ny - 1 {
                    let k = c * ny + iy;
                    for jy in 0..ny {
                        mat[(l(iy), l(jy))] += s1 * (-2.0 * a12[k] * d1[(iy, jy)])
                            - a22[k] * d2[(iy, jy)]
                            + a2[k] * d1[(iy, jy)];
                    }
                    mat[(l(iy), l(iy))] += -s2 + mu2;
                    for d in 0..m {
                        mat[(l(iy), d * ny + iy)] += self.a[c * m + d];
                    }
                }
            }
            let lu = mat.lu();
            if lu.is_invertible() {
                Ok(lu)
            } else {
                Err(Error::Solver {
                    context: format!(
                        "frozen preconditioner block for mode {j} is singular (μ = {})",
                        self.mu
                    ),
                    residual: f64::INFINITY,
                    iterations: 0,
                })
            }
        });
        blocks.into_iter().collect()
    }

    /// Collocation residual rows `out = L u`.
    pub fn apply(&self, u: &[C64], out: &mut [C64]) {
        let (m, ny, nx) = (self.grid.dim(), self.grid.ny(), self.grid.nx());
        let field = StripField {
            grid: self.grid.clone(),
            values: u.to_vec(),
        };
        let ux = field.dx(1);
        let uxx = field.dx(2);
        let uy = field.dy();
        let uyy = field.dyy();
        let uxy = ux.dy();
        let mu2 = self.mu * self.mu;
        let c = &self.coeffs;
        for comp in 0..m {
            for iy in 0..ny {
                for ix in 0..nx {
                    let k = (comp * ny + iy) * nx + ix;
                    out[k] = if iy == 0 {
                        match self.bc0 {
                            Boundary0::Dirichlet => u[k],
                            Boundary0::Oblique => {
                                ux.values[k] * c.b10[comp * nx + ix]
                                    + uy.values[k] * c.b20[comp * nx + ix]
                            }
                        }
                    } else if iy == ny - 1 {
                        uy.values[k] * c.b21[comp * nx + ix]
                    } else {
                        let mut s = -uxx.values[k]
                            - uxy.values[k] * (2.0 * c.a12[k])
                            - uyy.values[k] * c.a22[k]
                            + uy.values[k] * c.a2[k]
                            + u[k] * mu2;
                        for d in 0..m {
                            s += self.a[comp * m + d] * u[(d * ny + iy) * nx + ix];
                        }
                        s
                    };
                }
            }
        }
    }

    /// Frozen-operator inverse applied to `r`.
    pub fn precondition(&self, r: &[C64], out: &mut [C64]) {
        let (m, ny, nx) = (self.grid.dim(), self.grid.ny(), self.grid.nx());
        let mut hat = r.to_vec();
        for lane in hat.chunks_mut(nx) {
            self.grid.x().forward(lane);
        }
        let sols = par::map(nx, |j| {
            let v = DVector::from_iterator(m * ny, (0..m * ny).map(|l| hat[l * nx + j]));
            self.blocks[j]
                .solve(&v)
                .expect("block factorisation checked at assembly")
        });
        for (j, s) in sols.iter().enumerate() {
            for l in 0..m * ny {
                hat[l * nx + j] = s[l];
            }
        }
        for lane in hat.chunks_mut(nx) {
            self.grid.x().inverse(lane);
        }
        out.copy_from_slice(&hat);
    }

    /// Solves `L u = rhs` where `rhs` holds interior sources and the Γ₀/Γ₁ data in its boundary rows.
    pub fn solve(&self, rhs: &StripField) -> Result<(StripField, SolveStats)> {
        let b = rhs.values();
        let n = b.len();
        let mut x = vec![C64::new(0.0, 0.0); n];
        let s = self.settings;
        let out = gmres(
            |v, o| self.apply(v, o),
            |v, o| self.precondition(v, o),
            b,
            &mut x,
            GmresOptions {
                tol: s.tol,
                restart: s.restart,
                max_iter: s.max_iter,
            },
        );
        let mut r = vec![C64::new(0.0, 0.0); n];
        self.apply(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let bn = vec_norm(b);
        let residual = if bn > 0.0 { vec_norm(&r) / bn } else { 0.0 };
        if !(out.residual <= s.accept) {
            return Err(Error::Solver {
                context: format!("strip solve (μ = {}, {:?} on Γ₀)", self.mu, self.bc0),
                residual: out.residual,
                iterations: out.iterations,
            });
        }
        let stats = SolveStats {
            iterations: out.iterations,
            residual,
            preconditioned_residual: out.residual,
        };
        Ok((
            StripField {
                grid: self.grid.clone(),
                values: x,
            },
            stats,
        ))
    }

    fn boundary_rhs(
        &self,
        interior: Option<&StripField>,
        gamma0: Option<&[Vec<C64>]>,
        gamma1: Option<&[Vec<C64>]>,
    ) -> Result<StripField> {
        let (m, ny, nx) = (self.grid.dim(), self.grid.ny(), self.grid.nx());
        let mut rhs = match interior {
            Some(f) => {
                if f.grid.as_ref() != self.grid.as_ref() {
                    return Err(Error::InvalidInput(
                        "source field lives on a different grid".into(),
                    ));
                }
                f.clone()
            }
            None => StripField::zeros(self.grid.clone()),
        };
        for (row, data) in [(0, gamma0), (ny - 1, gamma1)] {
            for c in 0..m {
                for ix in 0..nx {
                    let v = match data {
                        Some(d) => {
                            if d.len() != m || d[c].len() != nx {
                                return Err(Error::InvalidInput(
                                    "boundary datum has the wrong shape".into(),
                                ));
                            }
                            d[c][ix]
                        }
                        None => C64::new(0.0, 0.0),
                    };
                    rhs.set(c, row, ix, v);
                }
            }
        }
        Ok(rhs)
    }

    /// General data `(F, ψ₀, ψ₁)`: interior source, Γ₀ datum, Γ₁ datum for `B₁u`.
    pub fn solve_data(
        &self,
        f: Option<&StripField>,
        psi0: Option<&[Vec<C64>]>,
        psi1: Option<&[Vec<C64>]>,
    ) -> Result<(StripField, SolveStats)> {
        self.solve(&self.boundary_rhs(f, psi0, psi1)?)
    }

    /// `K(g)ψ`: homogeneous interior, trace `ψ` on Γ₀, `B₁u = 0` on Γ₁.
    pub fn solve_k(&self, psi: &[Vec<C64>]) -> Result<(StripField, SolveStats)> {
        if self.bc0 != Boundary0::Dirichlet {
            return Err(Error::InvalidInput(
                "K(g) needs the Dirichlet row on Γ₀".into(),
            ));
        }
        self.solve_data(None, Some(psi), None)
    }

    /// `S(g)F`: source `F`, zero trace on Γ₀, `B₁w = 0` on Γ₁.
    pub fn solve_s(&self, f: &StripField) -> Result<(StripField, SolveStats)> {
        if self.bc0 != Boundary0::Dirichlet {
            return Err(Error::InvalidInput(
                "S(g) needs the Dirichlet row on Γ₀".into(),
            ));
        }
        self.solve_data(Some(f), None, None)
    }
}

/// `K(g)ψ` with a fresh assembly.
pub fn solve_k(
    p: &InterfaceProfile,
    a: &SectorialOperator,
    mu: f64,
    grid: &Arc<StripGrid>,
    psi: &[Vec<C64>],
) -> Result<StripField> {
    Ok(assemble(p, a, mu, grid, Boundary0::Dirichlet)?
        .solve_k(psi)?
        .0)
}

/// `S(g)F` with a fresh assembly.
pub fn solve_s(
    p: &InterfaceProfile,
    a: &SectorialOperator,
    mu: f64,
    grid: &Arc<StripGrid>,
    f: &StripField,
) -> Result<StripField> {
    Ok(assemble(p, a, mu, grid, Boundary0::Dirichlet)?
        .solve_s(f)?
        .0)
}

type SourceFn = Box<dyn Fn(usize, f64, f64) -> C64 + Send + Sync>;
type EdgeFn = Box<dyn Fn(usize, f64) -> C64 + Send + Sync>;

/// Data `(F, ψ₀, ψ₁)` given as functions so that it can be sampled on any grid.
/// `ψ₁` prescribes `(ν + g) B₁ u = ∂_y u` on Γ₁.
pub struct StripDatum {
    pub source: SourceFn,
    pub gamma0: EdgeFn,
    pub gamma1: EdgeFn,
}

impl std::fmt::Debug for StripDatum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("StripDatum")
    }
}

impl StripDatum {
    pub fn new(
        source: impl Fn(usize, f64, f64) -> C64 + Send + Sync + 'static,
        gamma0: impl Fn(usize, f64) -> C64 + Send + Sync + 'static,
        gamma1: impl Fn(usize, f64) -> C64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            source: Box::new(source),
            gamma0: Box::new(gamma0),
            gamma1: Box::new(gamma1),
        }
    }

    /// `F = f·cos(kx)(1−y)`, `ψ₀ = a·sin(kx)`, `ψ₁ = b·cos(kx)` on every component.
    pub fn sinusoid(k: f64, f: f64, a: f64, b: f64) -> Self {
        Self::new(
            move |_, x, y| C64::new(f * (k * x).cos() * (1.0 - y), 0.0),
            move |_, x| C64::new(a * (k * x).sin(), 0.0),
            move |_, x| C64::new(b * (k * x).cos(), 0.0),
        )
    }

    fn edge(f: &EdgeFn, x: &PeriodicGrid, m: usize) -> Vec<Vec<C64>> {
        (0..m)
            .map(|c| x.nodes().iter().map(|&v| f(c, v)).collect())
            .collect()
    }
}

/// Ratio of `Σ_{|β|≤2} ‖∂^β u‖_{C^α} + ‖Au‖_{C^α}` to
/// `‖F‖_{C^α} + ‖ψ₀‖_{h^{2,α}(A)} + ‖ψ₁‖_{h^{1,α}(A)}` for the strip problem
/// with Dirichlet trace `ψ₀`, one row per `(μ, datum)`.
pub fn strip_coercivity_probe(
    p: &InterfaceProfile,
    a: &SectorialOperator,
    mus: &[f64],
    ensemble: &[StripDatum],
    alpha: f64,
    ny: usize,
) -> Result<CoercivityReport> {
    if ensemble.is_empty() || mus.is_empty() {
        return Err(Error::InvalidInput(
            "coercivity probe needs data and shifts".into(),
        ));
    }
    let grid = Arc::new(StripGrid::new(p.grid().clone(), ny, p.dim())?);
    let (m, x) = (p.dim(), grid.x().clone());
    let tg = TensorGrid::new(x.len(), x.length(), grid.y().nodes().to_vec());
    let norm =
        |u: &StripField| -> Result<f64> { Ok(tg.holder(&[&u.node_major()], m, alpha)?.total) };
    let interp = default_interp(a, alpha)?;
    let height: Vec<Vec<f64>> = (0..m)
        .map(|c| p.g(c).iter().map(|g| p.nu() + g).collect())
        .collect();
    let mut rows = Vec::new();
    for &mu in mus {
        let op = assemble(p, a, mu, &grid, Boundary0::Dirichlet)?;
        for (s, d) in ensemble.iter().enumerate() {
            let f = StripField::from_fn(grid.clone(), |c, xv, yv| (d.source)(c, xv, yv));
            let psi0 = StripDatum::edge(&d.gamma0, &x, m);
            let psi1 = StripDatum::edge(&d.gamma1, &x, m);
            let rhs = norm(&f)?
                + hk_alpha_norm(&SampledFunction::periodic(&x, &psi0)?, 2, alpha, &interp)?
                + hk_alpha_norm(&SampledFunction::periodic(&x, &psi1)?, 1, alpha, &interp)?;
            if !(rhs > 0.0) {
                return Err(Error::InvalidInput(
                    "zero datum in coercivity ensemble".into(),
                ));
            }
            let b1: Vec<Vec<C64>> = psi1
                .iter()
                .zip(&height)
                .map(|(r, h)| r.iter().zip(h).map(|(z, h)| z / h).collect())
                .collect();
            let (u, _) = op.solve_data(Some(&f), Some(&psi0), Some(&b1))?;
            let (ux, uy) = (u.dx(1), u.dy());
            let mut lhs = norm(&u)? + norm(&ux)? + norm(&uy)?;
            lhs += norm(&u.dx(2))? + 2.0 * norm(&ux.dy())? + norm(&u.dyy())?;
            lhs += norm(&u.apply_matrix(a.entries()))?;
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

    fn flat_setup(
        nx: usize,
        ny: usize,
        nu: f64,
        a: f64,
    ) -> (InterfaceProfile, SectorialOperator, Arc<StripGrid>) {
        let x = PeriodicGrid::new(nx, 2.0 * PI).unwrap();
        let p = InterfaceProfile::flat(nu, x.clone(), 1).unwrap();
        let op = SectorialOperator::diagonal(&[a], 1.5, 4.0).unwrap();
        let g = Arc::new(StripGrid::new(x, ny, 1).unwrap());
        (p, op, g)
    }

    #[test]
    fn constant_datum_on_flat_profile_matches_cosh_profile() {
        let (p, a, g) = flat_setup(16, 21, 1.3, 2.0);
        let psi = vec![vec![C64::new(0.7, 0.0); 16]];
        let u = solve_k(&p, &a, 0.0, &g, &psi).unwrap();
        let s = 1.3 * 2f64.sqrt();
        for (iy, &y) in g.y().nodes().iter().enumerate() {
            let exact = 0.7 * (s * (1.0 - y)).cosh() / s.cosh();
            for ix in 0..16 {
                assert!((u.get(0, iy, ix).re - exact).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let (p, a, g) = flat_setup(8, 9, 1.0, 1.0);
        let u = solve_k(&p, &a, 0.0, &g, &[vec![C64::new(0.0, 0.0); 8]]).unwrap();
        assert_eq!(u.max_norm(), 0.0);
    }

    #[test]
    fn operator_action_on_y_polynomial() {
        let (p, a, g) = flat_setup(8, 9, 2.0, 1.5);
        let op = assemble(&p, &a, 0.5, &g, Boundary0::Dirichlet).unwrap();
        let u = StripField::from_fn(g.clone(), |_, _, y| C64::new(y * y * y - y, 0.0));
        let mut out = vec![C64::new(0.0, 0.0); g.size()];
        op.apply(u.values(), &mut out);
        for (iy, &y) in g.y().nodes().iter().enumerate().skip(1).take(7) {
            // −(1/ν²) u'' + (A + μ²) u with ν = 2
            let exact = -(6.0 * y) / 4.0 + (1.5 + 0.25) * (y * y * y - y);
            assert!((out[g.index(0, iy, 3)].re - exact).abs() < 1e-10);
        }
        // Γ₁ row: b21 u_y(1) = (1/ν)(3 − 1)
        assert!((out[g.index(0, 8, 0)].re - 1.0).abs() < 1e-10);
    }
}
