//! The interface operator `O(g) = B₀(g) K(g) g`, its derivative, frozen
//! per-mode versions and the diagnostics built on them.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{InterfaceProfile, TransformedCoefficients};
use crate::grid::PeriodicGrid;
use crate::holder::{default_interp, hk_alpha_norm, SampledFunction};
use crate::linalg::{eigenvalues, identity};
use crate::model::{strip_mode, FrozenCoefficients};
use crate::operator::SectorialOperator;
use crate::strip::{
    assemble, Boundary0, DiscreteStripOperator, SolveStats, SolverSettings, StripField, StripGrid,
};
use crate::{par, CMat, CVec, Error, Result, C64};

/// Trace functions: `[component][x-node]`.
pub type Trace = Vec<Vec<C64>>;

pub fn real_trace(g: &[Vec<f64>]) -> Trace {
    g.iter()
        .map(|c| c.iter().map(|&v| C64::new(v, 0.0)).collect())
        .collect()
}

fn zip_map(a: &Trace, b: &Trace, f: impl Fn(C64, C64) -> C64) -> Trace {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| f(*p, *q)).collect())
        .collect()
}

pub fn trace_add(a: &Trace, b: &Trace) -> Trace {
    zip_map(a, b, |p, q| p + q)
}

pub fn trace_sub(a: &Trace, b: &Trace) -> Trace {
    zip_map(a, b, |p, q| p - q)
}

pub fn trace_scale(a: &Trace, s: C64) -> Trace {
    a.iter()
        .map(|c| c.iter().map(|z| z * s).collect())
        .collect()
}

pub fn trace_max(a: &Trace) -> f64 {
    a.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Discrete `L²(T_L)` norm, summed over components.
pub fn trace_l2(x: &PeriodicGrid, a: &Trace) -> f64 {
    (a.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>() * x.spacing()).sqrt()
}

/// Random real trigonometric polynomial with modes `1..=kmax`, amplitudes `~ 1/(1+k²)`.
pub fn random_trace(x: &PeriodicGrid, dim: usize, kmax: usize, rng: &mut impl Rng) -> Trace {
    let xs = x.nodes();
    let w = 2.0 * std::f64::consts::PI / x.length();
    (0..dim)
        .map(|_| {
            let coeffs: Vec<(f64, f64)> = (1..=kmax)
                .map(|k| {
                    let s = 1.0 / (1.0 + (k * k) as f64);
                    (s * rng.gen_range(-1.0..1.0), s * rng.gen_range(-1.0..1.0))
                })
                .collect();
            xs.iter()
                .map(|&xv| {
                    let v: f64 = coeffs
                        .iter()
                        .enumerate()
                        .map(|(i, (a, b))| {
                            let k = (i + 1) as f64 * w;
                            a * (k * xv).cos() + b * (k * xv).sin()
                        })
                        .sum();
                    C64::new(v, 0.0)
                })
                .collect()
        })
        .collect()
}

/// `O(g)` together with `υ = K(g) g`.
#[derive(Debug, Clone)]
pub struct DtnApplication {
    pub value: Trace,
    pub upsilon: StripField,
    pub stats: SolveStats,
}

/// Solver state at one profile: the assembled Dirichlet operator and `υ`.
pub struct DtnEvaluator {
    profile: InterfaceProfile,
    a: SectorialOperator,
    mu: f64,
    op: DiscreteStripOperator,
    upsilon: StripField,
    upsilon_x: StripField,
    upsilon_y: StripField,
    upsilon_xy: StripField,
    upsilon_yy: StripField,
    value: Trace,
    stats: SolveStats,
    /// `H`, `g_x`, `g_xx` per component on the x grid.
    geo: [Vec<Vec<f64>>; 3],
}

impl std::fmt::Debug for DtnEvaluator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DtnEvaluator")
            .field("mu", &self.mu)
            .field("op", &self.op)
            .finish()
    }
}

/// Parts of the derivative in the order `B₀Kψ`, `∂B₀[ψ, υ]`, `−B₀S ∂B[ψ, υ]`.
#[derive(Debug, Clone)]
pub struct DerivativeParts {
    pub dirichlet: Trace,
    pub boundary: Trace,
    pub interior: Trace,
}

impl DerivativeParts {
    pub fn total(&self) -> Trace {
        trace_add(&trace_add(&self.dirichlet, &self.boundary), &self.interior)
    }
}

/// `∂B(g)[ψ, υ]` split as `G1 = −2 ∂a12 υ_xy`, `G2 = −∂a22 υ_yy`,
/// `G3 = ∂A υ` and `G4 = ∂a2 υ_y`.
#[derive(Debug, Clone)]
pub struct InteriorDerivative {
    pub parts: [StripField; 4],
}

impl InteriorDerivative {
    pub fn total(&self) -> StripField {
        let mut s = self.parts[0].clone();
        for p in &self.parts[1..] {
            s.axpy(C64::new(1.0, 0.0), p);
        }
        s
    }
}

/// Derivative of the family `A(g)`. Constant here.
fn operator_derivative(grid: &Arc<StripGrid>) -> StripField {
    StripField::zeros(grid.clone())
}

impl DtnEvaluator {
    pub fn new(p: &InterfaceProfile, a: &SectorialOperator, mu: f64, ny: usize) -> Result<Self> {
        let grid = Arc::new(StripGrid::new(p.grid().clone(), ny, p.dim())?);
        Self::on_grid(p, a, mu, &grid)
    }

    pub fn on_grid(
        p: &InterfaceProfile,
        a: &SectorialOperator,
        mu: f64,
        grid: &Arc<StripGrid>,
    ) -> Result<Self> {
        Self::on_grid_with(p, a, mu, grid, SolverSettings::default())
    }

    pub fn with_settings(
        p: &InterfaceProfile,
        a: &SectorialOperator,
        mu: f64,
        ny: usize,
        settings: SolverSettings,
    ) -> Result<Self> {
        let grid = Arc::new(StripGrid::new(p.grid().clone(), ny, p.dim())?);
        Self::on_grid_with(p, a, mu, &grid, settings)
    }

    pub fn on_grid_with(
        p: &InterfaceProfile,
        a: &SectorialOperator,
        mu: f64,
        grid: &Arc<StripGrid>,
        settings: SolverSettings,
    ) -> Result<Self> {
        if a.dim() != p.dim() {
            return Err(Error::InvalidInput(
                "operator and profile dimensions differ".into(),
            ));
        }
        let op = assemble(p, a, mu, grid, Boundary0::Dirichlet)?.with_settings(settings);
        let (upsilon, stats) = op.solve_k(&real_trace(p.components()))?;
        let upsilon_x = upsilon.dx(1);
        let upsilon_y = upsilon.dy();
        let upsilon_xy = upsilon_x.dy();
        let upsilon_yy = upsilon.dyy();
        let mut ev = Self {
            profile: p.clone(),
            a: a.clone(),
            mu,
            op,
            upsilon,
            upsilon_x,
            upsilon_y,
            upsilon_xy,
            upsilon_yy,
            value: Vec::new(),
            stats,
            geo: [
                (0..p.dim())
                    .map(|c| p.g(c).iter().map(|g| p.nu() + g).collect())
                    .collect(),
                (0..p.dim()).map(|c| p.gx(c).to_vec()).collect(),
                (0..p.dim()).map(|c| p.gxx(c).to_vec()).collect(),
            ],
        };
        ev.value = ev.b0(&ev.upsilon_x, &ev.upsilon_y);
        Ok(ev)
    }

    /// Copy with every coefficient and every derivative of `υ` replaced by
    /// its value on the vertical line through node `ix`. The `y` dependence is
    /// kept.
    pub fn frozen_in_x(&self, ix: usize) -> Result<Self> {
        let grid = self.grid().clone();
        let (m, ny, nx) = (grid.dim(), grid.ny(), grid.nx());
        if ix >= nx {
            return Err(Error::InvalidInput(format!(
                "freeze index {ix} is not a grid node"
            )));
        }
        let flatten = |v: &mut [f64], lanes: usize| {
            for l in 0..lanes {
                let row = &mut v[l * nx..(l + 1) * nx];
                let c = row[ix];
                row.iter_mut().for_each(|z| *z = c);
            }
        };
        let mut coeffs = self.coefficients().clone();
        for v in [
            &mut coeffs.a12,
            &mut coeffs.a22,
            &mut coeffs.a2,
            &mut coeffs.alpha,
            &mut coeffs.b10,
            &mut coeffs.b20,
            &mut coeffs.b21,
            &mut coeffs.beta,
        ] {
            let lanes = v.len() / nx;
            flatten(v, lanes);
        }
        let freeze_field = |f: &StripField| {
            let mut out = f.clone();
            for l in 0..m * ny {
                let c = f.values()[l * nx + ix];
                out.values_mut()[l * nx..(l + 1) * nx]
                    .iter_mut()
                    .for_each(|z| *z = c);
            }
            out
        };
        let op = DiscreteStripOperator::from_coefficients(
            grid,
            coeffs,
            &self.a,
            self.mu,
            Boundary0::Dirichlet,
        )?
        .with_settings(self.op.settings());
        let geo = self
            .geo
            .clone()
            .map(|g| g.into_iter().map(|c| vec![c[ix]; nx]).collect());
        let mut ev = Self {
            profile: self.profile.clone(),
            a: self.a.clone(),
            mu: self.mu,
            op,
            upsilon: freeze_field(&self.upsilon),
            upsilon_x: freeze_field(&self.upsilon_x),
            upsilon_y: freeze_field(&self.upsilon_y),
            upsilon_xy: freeze_field(&self.upsilon_xy),
            upsilon_yy: freeze_field(&self.upsilon_yy),
            value: Vec::new(),
            stats: self.stats,
            geo,
        };
        ev.value = ev.b0(&ev.upsilon_x, &ev.upsilon_y);
        Ok(ev)
    }

    pub fn profile(&self) -> &InterfaceProfile {
        &self.profile
    }

    pub fn operator(&self) -> &SectorialOperator {
        &self.a
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn grid(&self) -> &Arc<StripGrid> {
        self.op.grid()
    }

    pub fn coefficients(&self) -> &TransformedCoefficients {
        self.op.coefficients()
    }

    pub fn upsilon(&self) -> &StripField {
        &self.upsilon
    }

    /// `∂_y υ` on the strip grid.
    pub fn upsilon_y(&self) -> &StripField {
        &self.upsilon_y
    }

    pub fn value(&self) -> &Trace {
        &self.value
    }

    pub fn stats(&self) -> SolveStats {
        self.stats
    }

    pub fn application(&self) -> DtnApplication {
        DtnApplication {
            value: self.value.clone(),
            upsilon: self.upsilon.clone(),
            stats: self.stats,
        }
    }

    /// `b10 ∂_x u + b20 ∂_y u` on Γ₀ from precomputed derivatives.
    fn b0(&self, ux: &StripField, uy: &StripField) -> Trace {
        let c = self.coefficients();
        let nx = c.nx;
        let (tx, ty) = (ux.trace(0), uy.trace(0));
        (0..c.dim)
            .map(|k| {
                (0..nx)
                    .map(|i| tx[k][i] * c.b10[k * nx + i] + ty[k][i] * c.b20[k * nx + i])
                    .collect()
            })
            .collect()
    }

    fn b0_of(&self, u: &StripField) -> Trace {
        self.b0(&u.dx(1), &u.dy())
    }

    fn check_direction(&self, psi: &Trace) -> Result<()> {
        let nx = self.grid().nx();
        if psi.len() != self.profile.dim() || psi.iter().any(|c| c.len() != nx) {
            return Err(Error::InvalidInput("direction has the wrong shape".into()));
        }
        Ok(())
    }

    /// `∂B₀(g)[ψ, υ] = −ψ_x υ_x + (−2 g_x ψ_x / H + (1 + g_x²) ψ / H²) υ_y` on Γ₀.
    pub fn boundary_derivative(&self, psi: &Trace) -> Result<Trace> {
        self.check_direction(psi)?;
        let x = self.grid().x();
        let (tx, ty) = (self.upsilon_x.trace(0), self.upsilon_y.trace(0));
        let [hh, gg, _] = &self.geo;
        Ok(psi
            .iter()
            .enumerate()
            .map(|(c, ps)| {
                let px = x.derivative(ps, 1);
                (0..ps.len())
                    .map(|i| {
                        let (h, gx) = (hh[c][i], gg[c][i]);
                        let db20 = px[i] * (-2.0 * gx / h) + ps[i] * ((1.0 + gx * gx) / (h * h));
                        -px[i] * tx[c][i] + db20 * ty[c][i]
                    })
                    .collect()
            })
            .collect())
    }

    /// `∂B(g)[ψ, υ]` on the strip grid.
    pub fn interior_derivative(&self, psi: &Trace) -> Result<InteriorDerivative> {
        self.check_direction(psi)?;
        let grid = self.grid().clone();
        let (m, nx) = (grid.dim(), grid.nx());
        let x = grid.x();
        let beta: Vec<f64> = grid.y().nodes().iter().map(|y| 1.0 - y).collect();
        let [hh, gg, ggxx] = &self.geo;
        let mut g1 = StripField::zeros(grid.clone());
        let mut g2 = StripField::zeros(grid.clone());
        let mut g4 = StripField::zeros(grid.clone());
        for c in 0..m {
            let ps = &psi[c];
            let px = x.derivative(ps, 1);
            let pxx = x.derivative(ps, 2);
            for (iy, &b) in beta.iter().enumerate() {
                for ix in 0..nx {
                    let (h, gx, gxx) = (hh[c][ix], gg[c][ix], ggxx[c][ix]);
                    let (v, vx, vxx) = (ps[ix], px[ix], pxx[ix]);
                    let da12 = (vx / h - v * (gx / (h * h))) * b;
                    let da22 = vx * (2.0 * b * b * gx / (h * h))
                        - v * (2.0 * (1.0 + b * b * gx * gx) / (h * h * h));
                    let da2 =
                        (vx * (4.0 * gx / (h * h)) - v * (4.0 * gx * gx / (h * h * h)) - vxx / h
                            + v * (gxx / (h * h)))
                            * b;
                    let k = grid.index(c, iy, ix);
                    g1.values_mut()[k] = da12 * -2.0 * self.upsilon_xy.values()[k];
                    g2.values_mut()[k] = -da22 * self.upsilon_yy.values()[k];
                    g4.values_mut()[k] = da2 * self.upsilon_y.values()[k];
                }
            }
        }
        Ok(InteriorDerivative {
            parts: [g1, g2, operator_derivative(&grid), g4],
        })
    }

    /// Each term of `∂O(g)ψ` separately (two strip solves).
    pub fn derivative_parts(&self, psi: &Trace) -> Result<DerivativeParts> {
        let (k, _) = self.op.solve_k(psi)?;
        let dirichlet = self.b0_of(&k);
        let boundary = self.boundary_derivative(psi)?;
        let (w, _) = self.op.solve_s(&self.interior_derivative(psi)?.total())?;
        let interior = trace_scale(&self.b0_of(&w), C64::new(-1.0, 0.0));
        Ok(DerivativeParts {
            dirichlet,
            boundary,
            interior,
        })
    }

    /// `∂O(g)ψ` with a single strip solve for `K ψ − S ∂B[ψ, υ]`.
    pub fn derivative(&self, psi: &Trace) -> Result<Trace> {
        let mut src = self.interior_derivative(psi)?.total();
        src.values_mut().iter_mut().for_each(|z| *z = -*z);
        let (v, _) = self.op.solve_data(Some(&src), Some(psi), None)?;
        Ok(trace_add(&self.b0_of(&v), &self.boundary_derivative(psi)?))
    }

    /// `w_g = υ_y / H` and `k_g = α / a22` on Γ₀, as `[component][x]`.
    pub fn w1_fields(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let c = self.coefficients();
        let nx = c.nx;
        let ty = self.upsilon_y.trace(0);
        let w = (0..c.dim)
            .map(|k| (0..nx).map(|i| ty[k][i].re / self.geo[0][k][i]).collect())
            .collect();
        let kg = (0..c.dim)
            .map(|k| {
                (0..nx)
                    .map(|i| c.alpha[c.at(k, 0, i)] / c.a22[c.at(k, 0, i)])
                    .collect()
            })
            .collect();
        (w, kg)
    }
}

pub fn dtn_apply(
    p: &InterfaceProfile,
    a: &SectorialOperator,
    mu: f64,
    ny: usize,
) -> Result<DtnApplication> {
    Ok(DtnEvaluator::new(p, a, mu, ny)?.application())
}

pub fn dtn_derivative(
    p: &InterfaceProfile,
    a: &SectorialOperator,
    mu: f64,
    ny: usize,
    psi: &Trace,
) -> Result<Trace> {
    DtnEvaluator::new(p, a, mu, ny)?.derivative(psi)
}

/// Constant-coefficient operators at `(x₀, 0)`, one `m×m` block per Fourier slot.
#[derive(Debug, Clone)]
pub struct FrozenOperatorSet {
    pub x0: f64,
    pub mu: f64,
    pub grid: PeriodicGrid,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    pub w0: Vec<f64>,
    pub o10: Vec<CMat>,
    pub o20: Vec<CMat>,
    /// `O₃₀ₖ` from `G1..G4`.
    pub o30_parts: [Vec<CMat>; 4],
    pub o30: Vec<CMat>,
    pub o0: Vec<CMat>,
}

/// Boundary values entering the frozen operators, one entry per component.
#[derive(Debug, Clone)]
struct FreezePoint {
    h: Vec<f64>,
    gx: Vec<f64>,
    gxx: Vec<f64>,
    ux: Vec<f64>,
    uy: Vec<f64>,
    uxy: Vec<f64>,
    uyy: Vec<f64>,
}

fn sum_blocks(parts: &[&Vec<CMat>]) -> Vec<CMat> {
    (0..parts[0].len())
        .map(|j| {
            parts
                .iter()
                .skip(1)
                .fold(parts[0][j].clone(), |acc, p| acc + &p[j])
        })
        .collect()
}

fn build_set(
    fc: &FrozenCoefficients,
    grid: &PeriodicGrid,
    x0: f64,
    fp: &FreezePoint,
    b2_sign: f64,
) -> Result<FrozenOperatorSet> {
    let m = fc.dim();
    let nx = grid.len();
    let b1: Vec<f64> = fp.gx.iter().map(|g| -g).collect();
    let b2: Vec<f64> = fp
        .gx
        .iter()
        .zip(&fp.h)
        .map(|(g, h)| b2_sign * -(1.0 + g * g) / h)
        .collect();
    let a = fc.operator().entries().clone();
    let mu2 = fc.mu() * fc.mu();
    let blocks = par::map(nx, |j| -> Result<[CMat; 6]> {
        let s1 = grid.derivative_symbol(j, 1);
        let s2 = grid.derivative_symbol(j, 2);
        let lam = strip_mode(fc, grid.wavenumber(j))?.dtn();
        let d = |v: Vec<C64>| CMat::from_diagonal(&CVec::from_vec(v));
        let b2lam = d(b2.iter().map(|&v| C64::new(v, 0.0)).collect()) * &lam;
        let o10 = d(b1.iter().map(|&v| s1 * v).collect()) - &b2lam;
        let o20 = d((0..m)
            .map(|c| {
                let h = fp.h[c];
                -s1 * fp.ux[c]
                    + (C64::new((1.0 + fp.gx[c] * fp.gx[c]) / h, 0.0) - s1 * (2.0 * fp.gx[c] / h))
                        * (fp.uy[c] / h)
            })
            .collect());
        let a_eff = &a + identity(m) * (C64::new(mu2, 0.0) - s2);
        let a_inv = a_eff.try_inverse().ok_or(Error::Singular {
            lambda: C64::new(mu2, 0.0) - s2,
        })?;
        let solve_part = |g: Vec<C64>| -> CMat { -(&b2lam * &a_inv * d(g)) };
        let h = &fp.h;
        let g1 = (0..m).map(|c| {
            let (c0, c1) = (
                2.0 * fp.gx[c] * fp.uxy[c] / (h[c] * h[c]),
                -2.0 * fp.uxy[c] / h[c],
            );
            C64::new(c0, 0.0) + s1 * c1
        });
        let g2 = (0..m).map(|c| {
            let c0 = 2.0 * (1.0 + fp.gx[c] * fp.gx[c]) * fp.uyy[c] / h[c].powi(3);
            let c1 = -2.0 * fp.gx[c] * fp.uyy[c] / (h[c] * h[c]);
            C64::new(c0, 0.0) + s1 * c1
        });
        let g4 = (0..m).map(|c| {
            let c0 =
                (fp.gxx[c] / (h[c] * h[c]) - 4.0 * fp.gx[c] * fp.gx[c] / h[c].powi(3)) * fp.uy[c];
            let c1 = 4.0 * fp.gx[c] * fp.uy[c] / (h[c] * h[c]);
            let c2 = -fp.uy[c] / h[c];
            C64::new(c0, 0.0) + s1 * c1 + s2 * c2
        });
        Ok([
            o10,
            o20,
            solve_part(g1.collect()),
            solve_part(g2.collect()),
            CMat::zeros(m, m),
            solve_part(g4.collect()),
        ])
    });
    let mut cols: [Vec<CMat>; 6] = Default::default();
    for b in blocks {
        for (col, blk) in cols.iter_mut().zip(b?) {
            col.push(blk);
        }
    }
    let [o10, o20, p1, p2, p3, p4] = cols;
    let o30 = sum_blocks(&[&p1, &p2, &p3, &p4]);
    let o0 = sum_blocks(&[&o10, &o20, &o30]);
    let w0 = (0..m).map(|c| fp.uy[c] / fp.h[c]).collect();
    Ok(FrozenOperatorSet {
        x0,
        mu: fc.mu(),
        grid: grid.clone(),
        b1,
        b2,
        w0,
        o10,
        o20,
        o30_parts: [p1, p2, p3, p4],
        o30,
        o0,
    })
}

fn freeze_point(ev: &DtnEvaluator, ix0: usize) -> FreezePoint {
    let p = ev.profile();
    let m = p.dim();
    let ny = ev.grid().ny();
    let at = |f: &StripField, c: usize| f.lane(c * ny)[ix0].re;
    FreezePoint {
        h: (0..m).map(|c| p.nu() + p.g(c)[ix0]).collect(),
        gx: (0..m).map(|c| p.gx(c)[ix0]).collect(),
        gxx: (0..m).map(|c| p.gxx(c)[ix0]).collect(),
        ux: (0..m).map(|c| at(&ev.upsilon_x, c)).collect(),
        uy: (0..m).map(|c| at(&ev.upsilon_y, c)).collect(),
        uxy: (0..m).map(|c| at(&ev.upsilon_xy, c)).collect(),
        uyy: (0..m).map(|c| at(&ev.upsilon_yy, c)).collect(),
    }
}

impl FrozenOperatorSet {
    pub fn from_evaluator(ev: &DtnEvaluator, ix0: usize) -> Result<Self> {
        Self::with_b20_sign(ev, ix0, 1.0)
    }

    /// Same construction with `b20` multiplied by `sign`; `−1` gives the
    /// reversed-orientation counterexample.
    pub fn with_b20_sign(ev: &DtnEvaluator, ix0: usize, sign: f64) -> Result<Self> {
        let nx = ev.grid().nx();
        if ix0 >= nx {
            return Err(Error::InvalidInput(format!(
                "freeze index {ix0} is not a grid node"
            )));
        }
        let fc = FrozenCoefficients::at_boundary(
            ev.coefficients(),
            ev.operator().clone(),
            ix0,
            ev.mu(),
        )?;
        let x = ev.grid().x().clone();
        build_set(&fc, &x, x.node(ix0), &freeze_point(ev, ix0), sign)
    }

    pub fn dim(&self) -> usize {
        self.o0.first().map_or(0, |b| b.nrows())
    }

    /// Applies the per-slot blocks to a trace.
    pub fn apply(blocks: &[CMat], x: &PeriodicGrid, u: &Trace) -> Trace {
        let m = u.len();
        let hat: Vec<Vec<C64>> = u.iter().map(|c| x.coefficients(c)).collect();
        let mut out = vec![vec![C64::new(0.0, 0.0); x.len()]; m];
        for (j, b) in blocks.iter().enumerate() {
            let v = b * CVec::from_iterator(m, (0..m).map(|c| hat[c][j]));
            for c in 0..m {
                out[c][j] = v[c];
            }
        }
        for c in out.iter_mut() {
            x.inverse(c);
        }
        out
    }

    /// `O₁₀ + t (O₂₀ + O₃₀)`.
    pub fn interpolated(&self, t: f64) -> Vec<CMat> {
        (0..self.o10.len())
            .map(|j| &self.o10[j] + (&self.o20[j] + &self.o30[j]) * C64::new(t, 0.0))
            .collect()
    }
}

pub fn frozen_set(
    p: &InterfaceProfile,
    a: &SectorialOperator,
    ix0: usize,
    mu: f64,
    ny: usize,
) -> Result<FrozenOperatorSet> {
    FrozenOperatorSet::from_evaluator(&DtnEvaluator::new(p, a, mu, ny)?, ix0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartReport {
    pub name: String,
    pub min_re_unshifted: f64,
    pub min_re: f64,
    pub half_angle: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SectorReport {
    pub x0: f64,
    /// Shift `μ₀²` added to every part.
    pub shift: f64,
    pub parts: Vec<PartReport>,
    pub resolvent_lower: f64,
    pub resolvent_upper: f64,
    pub resolvent_ratio: f64,
    pub generates_analytic_semigroup: bool,
    pub pass: bool,
}

/// Numerical range half-angle of a block via its support function.
fn numerical_range_angle(b: &CMat) -> f64 {
    let m = b.nrows();
    if m == 1 {
        return b[(0, 0)].arg().abs();
    }
    let mut worst = 0.0f64;
    for s in 0..72 {
        let th = 2.0 * std::f64::consts::PI * s as f64 / 72.0;
        let rot = b * C64::from_polar(1.0, -th);
        let herm = (&rot + rot.adjoint()) * C64::new(0.5, 0.0);
        let eig = herm.symmetric_eigen();
        let (k, _) =
            eig.eigenvalues
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
                );
        let v = eig.eigenvectors.column(k).into_owned();
        let z = (v.adjoint() * b * &v)[(0, 0)];
        worst = worst.max(z.arg().abs());
    }
    worst
}

fn part_report(name: &str, blocks: &[CMat], shift: f64) -> PartReport {
    let m = blocks[0].nrows();
    let mut min_un = f64::INFINITY;
    let mut angle = 0.0f64;
    for b in blocks {
        for z in eigenvalues(b) {
            min_un = min_un.min(z.re);
        }
        angle = angle.max(numerical_range_angle(
            &(b + identity(m) * C64::new(shift, 0.0)),
        ));
    }
    let min_re = min_un + shift;
    let pass = min_re > 0.0 && angle < std::f64::consts::FRAC_PI_2 + 0.1;
    PartReport {
        name: name.into(),
        min_re_unshifted: min_un,
        min_re,
        half_angle: angle,
        pass,
    }
}

fn h_norm(
    x: &PeriodicGrid,
    u: &Trace,
    order: usize,
    alpha: f64,
    interp: &crate::operator::InterpolationNorm,
) -> Result<f64> {
    hk_alpha_norm(&SampledFunction::periodic(x, u)?, order, alpha, interp)
}

/// Spectrum, numerical-range sector and two-sided bound
/// `C₁‖u‖_{h^{2,α}(A)} ≤ ‖(O₀ + μ₀²)u‖_{h^{1,α}(A)} ≤ C₂‖u‖_{h^{2,α}(A)}` over random `u`.
pub fn sector_report(
    set: &FrozenOperatorSet,
    a: &SectorialOperator,
    mu0: f64,
    alpha: f64,
    samples: usize,
    seed: u64,
) -> Result<SectorReport> {
    let shift = mu0 * mu0;
    let parts = vec![
        part_report("O10", &set.o10, shift),
        part_report("O20", &set.o20, shift),
        part_report("O30", &set.o30, shift),
        part_report("O0", &set.o0, shift),
    ];
    let m = set.dim();
    let x = &set.grid;
    let shifted: Vec<CMat> = set
        .o0
        .iter()
        .map(|b| b + identity(m) * C64::new(shift, 0.0))
        .collect();
    let interp = default_interp(a, alpha)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..samples.max(1) {
        let u = random_trace(x, m, (x.len() / 8).max(1), &mut rng);
        let v = FrozenOperatorSet::apply(&shifted, x, &u);
        let r = h_norm(x, &v, 1, alpha, &interp)? / h_norm(x, &u, 2, alpha, &interp)?;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    let ratio = hi / lo;
    let generates = parts.iter().all(|p| p.pass);
    let pass = generates && ratio.is_finite() && ratio < 1e3;
    Ok(SectorReport {
        x0: set.x0,
        shift,
        parts,
        resolvent_lower: lo,
        resolvent_upper: hi,
        resolvent_ratio: ratio,
        generates_analytic_semigroup: generates,
        pass,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub in_w1: bool,
    /// `inf_x (w_g + k_g)`, minimum over components.
    pub margin: f64,
    pub witness_x: f64,
    pub in_vnu: bool,
    /// `inf_x (k_f − ∂_y u_f)` for the physical comparison problem.
    pub vnu_margin: f64,
}

/// `W₁` margin from an evaluator already holding `υ = K(g) g`.
pub fn w1_margin(ev: &DtnEvaluator) -> (f64, f64) {
    let (w, k) = ev.w1_fields();
    let xs = ev.grid().x().nodes();
    let mut best = (f64::INFINITY, 0.0);
    for c in 0..w.len() {
        for i in 0..xs.len() {
            let v = w[c][i] + k[c][i];
            if v < best.0 {
                best = (v, xs[i]);
            }
        }
    }
    best
}

pub fn admissibility(
    p: &InterfaceProfile,
    a: &SectorialOperator,
    mu: f64,
    ny: usize,
) -> Result<AdmissibilityReport> {
    let ev = DtnEvaluator::new(p, a, mu, ny)?;
    admissibility_from(&ev)
}

pub fn admissibility_from(ev: &DtnEvaluator) -> Result<AdmissibilityReport> {
    let p = ev.profile();
    let (margin, witness_x) = w1_margin(ev);
    let vnu_margin = vnu_margin(p, ev.operator(), ev.grid())?;
    Ok(AdmissibilityReport {
        in_w1: margin > 0.0,
        margin,
        witness_x,
        in_vnu: vnu_margin > 0.0,
        vnu_margin,
    })
}

/// Solves `−Δu + Au = 0` under `u = f` on the interface and `∂_y u = 0` on
/// the bottom, and compares `∂_y u` on the interface with `k_f`.
fn vnu_margin(p: &InterfaceProfile, a: &SectorialOperator, grid: &Arc<StripGrid>) -> Result<f64> {
    let m = p.dim();
    let f: Vec<Vec<f64>> = (0..m)
        .map(|c| p.g(c).iter().map(|g| p.nu() + g).collect())
        .collect();
    let op = assemble(p, a, 0.0, grid, Boundary0::Dirichlet)?;
    let (u, _) = op.solve_k(&real_trace(&f))?;
    let uy = u.dy().trace(0);
    let x = p.grid();
    let fx: Vec<Vec<f64>> = f.iter().map(|c| x.derivative_real(c, 1)).collect();
    let mut worst = f64::INFINITY;
    for i in 0..x.len() {
        let fn2: f64 = (0..m).map(|c| f[c][i] * f[c][i]).sum();
        let fxn2: f64 = (0..m).map(|c| fx[c][i] * fx[c][i]).sum();
        let kf = fn2 / ((1.0 + fn2.sqrt() + fxn2) * (1.0 + fxn2));
        for c in 0..m {
            // physical ∂_{y'} = −(1/H) ∂_y at the interface
            let dy = -uy[c][i].re / f[c][i];
            worst = worst.min(kf - dy);
        }
        if fn2 == 0.0 {
            worst = worst.min(0.0);
        }
    }
    Ok(worst)
}

/// Septic smooth step on `[0, 1]`, symmetric: `s(1 − t) = 1 − s(t)`.
fn smooth_step(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t.powi(4) * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t.powi(3))
}

/// Raised-cosine partition of unity `cos²(π s(|x − x_j|/h) / 2)` with
/// `J = ⌈L/δ⌉` equally spaced centres and half-width `h = L/J ≤ δ`, so each
/// bump is supported in `(x_j − δ, x_j + δ)`. The smooth step makes each bump `C³`.
pub fn partition(x: &PeriodicGrid, delta: f64) -> Result<Vec<Vec<f64>>> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidInput(format!("δ = {delta} not in (0, 1]")));
    }
    let l = x.length();
    let j = ((l / delta) * (1.0 - 1e-12)).ceil().max(2.0) as usize;
    let h = l / j as f64;
    let xs = x.nodes();
    Ok((0..j)
        .map(|p| {
            let centre = p as f64 * h;
            xs.iter()
                .map(|&xv| {
                    let mut s = 0.0;
                    for img in -1..=1 {
                        let d = (xv - centre + img as f64 * l).abs();
                        if d < h {
                            s += (std::f64::consts::FRAC_PI_2 * smooth_step(d / h))
                                .cos()
                                .powi(2);
                        }
                    }
                    s
                })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchResidual {
    pub centre: f64,
    /// `‖φ_j ∂O_t υ − O_j (φ_j υ)‖_{h^{1,α}(A)}`.
    pub residual: f64,
    /// `‖(∂O_t − O_j)(φ_j υ)‖_{h^{1,α}(A)}`.
    pub freezing: f64,
    /// `‖∂O_t(φ_j υ) − φ_j ∂O_t υ‖_{h^{1,α}(A)}`.
    pub commutator: f64,
    /// `freezing / ‖φ_j υ‖_{h^{2,α}(A)}`.
    pub surrogate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub delta: f64,
    pub t: f64,
    pub patches: Vec<PatchResidual>,
    pub max_residual: f64,
    pub max_freezing: f64,
    pub max_commutator: f64,
    pub max_surrogate: f64,
}

fn mul_trace(phi: &[f64], u: &Trace) -> Trace {
    u.iter()
        .map(|c| c.iter().zip(phi).map(|(z, p)| z * *p).collect())
        .collect()
}

/// `∂O_t(g) = O₁ + t (O₂ + O₃)` applied to `v`.
fn interpolated_derivative(ev: &DtnEvaluator, v: &Trace, t: f64) -> Result<Trace> {
    let parts = ev.derivative_parts(v)?;
    Ok(trace_add(
        &parts.dirichlet,
        &trace_scale(
            &trace_add(&parts.boundary, &parts.interior),
            C64::new(t, 0.0),
        ),
    ))
}

pub fn localization_residual(
    ev: &DtnEvaluator,
    delta: f64,
    v: &Trace,
    t: f64,
    alpha: f64,
) -> Result<LocalizationReport> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidInput(format!("t = {t} not in [0, 1]")));
    }
    let x = ev.grid().x().clone();
    let phis = partition(&x, delta)?;
    let interp = default_interp(ev.operator(), alpha)?;
    let dv = interpolated_derivative(ev, v, t)?;
    let mut patches = Vec::with_capacity(phis.len());
    for phi in &phis {
        let centre_ix = phi
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc },
            )
            .0;
        let frozen = ev.frozen_in_x(centre_ix)?;
        let phiv = mul_trace(phi, v);
        let frozen_local = interpolated_derivative(&frozen, &phiv, t)?;
        let d_local = interpolated_derivative(ev, &phiv, t)?;
        let phi_dv = mul_trace(phi, &dv);
        let residual = h_norm(&x, &trace_sub(&phi_dv, &frozen_local), 1, alpha, &interp)?;
        let freezing = h_norm(&x, &trace_sub(&d_local, &frozen_local), 1, alpha, &interp)?;
        let commutator = h_norm(&x, &trace_sub(&d_local, &phi_dv), 1, alpha, &interp)?;
        let denom = h_norm(&x, &phiv, 2, alpha, &interp)?;
        let surrogate = if denom > 0.0 { freezing / denom } else { 0.0 };
        patches.push(PatchResidual {
            centre: x.node(centre_ix),
            residual,
            freezing,
            commutator,
            surrogate,
        });
    }
    let fold = |f: fn(&PatchResidual) -> f64| patches.iter().map(f).fold(0.0, f64::max);
    Ok(LocalizationReport {
        delta,
        t,
        max_residual: fold(|p| p.residual),
        max_freezing: fold(|p| p.freezing),
        max_commutator: fold(|p| p.commutator),
        max_surrogate: fold(|p| p.surrogate),
        patches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn setup(nx: usize, amp: f64) -> (InterfaceProfile, SectorialOperator) {
        let x = PeriodicGrid::new(nx, 2.0 * PI).unwrap();
        let p = InterfaceProfile::from_fn(1.0, x, 1, |_, xv| amp * xv.sin()).unwrap();
        (p, SectorialOperator::diagonal(&[1.0], 1.5, 4.0).unwrap())
    }

    #[test]
    fn equilibrium_has_zero_value() {
        let (p, a) = setup(16, 0.0);
        let app = dtn_apply(&p, &a, 0.0, 13).unwrap();
        assert_eq!(trace_max(&app.value), 0.0);
    }

    #[test]
    fn single_solve_derivative_matches_parts() {
        let (p, a) = setup(16, 0.1);
        let ev = DtnEvaluator::new(&p, &a, 0.0, 13).unwrap();
        let x = p.grid().clone();
        let psi = real_trace(&[x.nodes().iter().map(|v| (2.0 * v).cos()).collect()]);
        let d1 = ev.derivative(&psi).unwrap();
        let d2 = ev.derivative_parts(&psi).unwrap().total();
        assert!(trace_max(&trace_sub(&d1, &d2)) < 1e-9);
    }

    #[test]
    fn partition_sums_to_one() {
        let x = PeriodicGrid::new(32, 3.0).unwrap();
        for delta in [1.0, 0.5, 0.25, 0.2] {
            let phis = partition(&x, delta).unwrap();
            for i in 0..32 {
                let s: f64 = phis.iter().map(|p| p[i]).sum();
                assert!((s - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn flat_frozen_parts_vanish_and_sum() {
        let (p, a) = setup(16, 0.0);
        let set = frozen_set(&p, &a, 0, 0.0, 13).unwrap();
        for j in 0..16 {
            assert_eq!(crate::linalg::op_norm(&set.o20[j]), 0.0);
            assert_eq!(crate::linalg::op_norm(&set.o30[j]), 0.0);
            assert!(crate::linalg::op_norm(&(&set.o0[j] - &set.o10[j])) < 1e-15);
        }
    }
}
