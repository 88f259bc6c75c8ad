//! Discrete Hölder norms: `C^γ`, `C^{k,γ}` and the `h^{k,α}(A)` scale whose
//! pointwise values are measured in `D_A(α,∞)`.
//!
//! Seminorms sweep every node pair; nothing is pruned.

use serde::{Deserialize, Serialize};

use crate::grid::PeriodicGrid;
use crate::operator::{InterpolationNorm, InterpolationNormSpec, SectorialOperator};
use crate::{par, Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    Periodic { period: f64 },
    Interval,
}

/// `E`-valued samples on a 1-D grid, node-major (`values[i*dim + c]`).
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    grid: Vec<f64>,
    domain: Domain,
    dim: usize,
    values: Vec<C64>,
    derivatives: Vec<Vec<C64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderNormReport {
    pub sup_norm: f64,
    pub seminorm: f64,
    pub total: f64,
    pub witness_pair: (f64, f64),
}

impl SampledFunction {
    pub fn new(grid: Vec<f64>, domain: Domain, dim: usize, values: Vec<C64>) -> Result<Self> {
        if grid.len() < 4 {
            return Err(Error::InvalidInput(format!(
                "need at least 4 nodes, got {}",
                grid.len()
            )));
        }
        if dim == 0 || values.len() != grid.len() * dim {
            return Err(Error::InvalidInput(
                "values must hold dim entries per node".into(),
            ));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput(
                "grid must be strictly increasing".into(),
            ));
        }
        if values
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::InvalidInput("values must be finite".into()));
        }
        Ok(Self {
            grid,
            domain,
            dim,
            values,
            derivatives: Vec::new(),
        })
    }

    /// Samples on a periodic grid with spectral derivatives up to order 2.
    /// `components[c][i]` is component `c` at node `i`.
    pub fn periodic(grid: &PeriodicGrid, components: &[Vec<C64>]) -> Result<Self> {
        let dim = components.len();
        let n = grid.len();
        if components.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidInput(
                "component length differs from grid size".into(),
            ));
        }
        let interleave = |cols: &[Vec<C64>]| {
            let mut v = vec![C64::new(0.0, 0.0); n * dim];
            for (c, col) in cols.iter().enumerate() {
                for (i, z) in col.iter().enumerate() {
                    v[i * dim + c] = *z;
                }
            }
            v
        };
        let d1: Vec<Vec<C64>> = components.iter().map(|c| grid.derivative(c, 1)).collect();
        let d2: Vec<Vec<C64>> = components.iter().map(|c| grid.derivative(c, 2)).collect();
        let mut f = Self::new(
            grid.nodes(),
            Domain::Periodic {
                period: grid.length(),
            },
            dim,
            interleave(components),
        )?;
        f.derivatives = vec![interleave(&d1), interleave(&d2)];
        Ok(f)
    }

    pub fn with_derivatives(mut self, derivatives: Vec<Vec<C64>>) -> Result<Self> {
        if derivatives.iter().any(|d| d.len() != self.values.len()) {
            return Err(Error::InvalidInput(
                "derivative samples must match values".into(),
            ));
        }
        self.derivatives = derivatives;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn deriv_order_available(&self) -> usize {
        self.derivatives.len()
    }

    /// Samples of the `order`-th derivative (order 0 is the function).
    pub fn derivative(&self, order: usize) -> Option<&[C64]> {
        match order {
            0 => Some(&self.values),
            k => self.derivatives.get(k - 1).map(|v| v.as_slice()),
        }
    }

    pub fn node(&self, i: usize) -> &[C64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    fn distance(&self, i: usize, j: usize) -> f64 {
        let d = (self.grid[i] - self.grid[j]).abs();
        match self.domain {
            Domain::Periodic { period } => d.min(period - d),
            Domain::Interval => d,
        }
    }
}

fn diff_norm(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

fn euclid(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Max over pairs `i < j` of `quotient(i, j)`, with the first maximiser in
/// lexicographic order as witness.
fn pair_sweep<Q>(n: usize, quotient: Q) -> (f64, usize, usize)
where
    Q: Fn(usize, usize) -> f64 + Sync + Send,
{
    let rows = par::map(n, |i| {
        let mut best = (0.0f64, i + 1);
        for j in i + 1..n {
            let q = quotient(i, j);
            if q > best.0 {
                best = (q, j);
            }
        }
        best
    });
    let mut out = (0.0, 0, 1.min(n.saturating_sub(1)));
    for (i, (q, j)) in rows.into_iter().enumerate() {
        if q > out.0 {
            out = (q, i, j);
        }
    }
    out
}

/// `C^γ` report of one sampled array with a caller-supplied pointwise norm.
fn holder_report_with<N, D>(
    f: &SampledFunction,
    samples: &[C64],
    gamma: f64,
    norm: N,
    dnorm: D,
) -> HolderNormReport
where
    N: Fn(&[C64]) -> f64 + Sync,
    D: Fn(&[C64], &[C64]) -> f64 + Sync + Send,
{
    let dim = f.dim;
    let node = |i: usize| &samples[i * dim..(i + 1) * dim];
    let sup = (0..f.len()).map(|i| norm(node(i))).fold(0.0, f64::max);
    let (semi, i, j) = pair_sweep(f.len(), |i, j| {
        dnorm(node(i), node(j)) / f.distance(i, j).powf(gamma)
    });
    HolderNormReport {
        sup_norm: sup,
        seminorm: semi,
        total: sup + semi,
        witness_pair: (f.grid[i], f.grid[j]),
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "Hölder exponent {gamma} not in (0, 1]"
        )));
    }
    Ok(())
}

/// `‖f‖_∞`, `[f]^γ` with the Euclidean norm of `E`.
pub fn holder_seminorm(f: &SampledFunction, gamma: f64) -> Result<HolderNormReport> {
    check_gamma(gamma)?;
    Ok(holder_report_with(f, &f.values, gamma, euclid, diff_norm))
}

/// `Σ_{k≤order} ‖f^{(k)}‖_∞ + [f^{(order)}]^γ` in the Euclidean norm.
pub fn ck_gamma_norm(f: &SampledFunction, order: usize, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let mut total = 0.0;
    for k in 0..=order {
        let s = f
            .derivative(k)
            .ok_or_else(|| Error::InvalidInput(format!("derivative of order {k} not attached")))?;
        let rep = holder_report_with(f, s, gamma, euclid, diff_norm);
        total += rep.sup_norm;
        if k == order {
            total += rep.seminorm;
        }
    }
    Ok(total)
}

/// `‖f‖_{C^order} + [f^{(order)}]^α`, pointwise values measured in the
/// discrete `D_A(α,∞)` norm.
pub fn hk_alpha_norm(
    f: &SampledFunction,
    order: usize,
    alpha: f64,
    interp: &InterpolationNorm,
) -> Result<f64> {
    check_gamma(alpha)?;
    if interp.dim() != f.dim {
        return Err(Error::InvalidInput(
            "interpolation norm dimension differs from the function".into(),
        ));
    }
    let mut total = 0.0;
    let dim = f.dim;
    for k in 0..=order {
        let s = f
            .derivative(k)
            .ok_or_else(|| Error::InvalidInput(format!("derivative of order {k} not attached")))?;
        let sup = (0..f.len())
            .map(|i| interp.eval(&s[i * dim..(i + 1) * dim]))
            .fold(0.0, f64::max);
        total += sup;
        if k == order {
            let (semi, _, _) = pair_sweep(f.len(), |i, j| {
                let d: Vec<C64> = (0..dim).map(|c| s[i * dim + c] - s[j * dim + c]).collect();
                interp.eval(&d) / f.distance(i, j).powf(alpha)
            });
            total += semi;
        }
    }
    Ok(total)
}

/// Default interpolation-norm evaluator for Hölder exponent `alpha`.
pub fn default_interp(a: &SectorialOperator, alpha: f64) -> Result<InterpolationNorm> {
    InterpolationNorm::new(a, &InterpolationNormSpec::log_spaced(alpha, 64)?)
}

/// `‖g‖_{h^{2,α}(A)}`.
pub fn h2alpha_norm(g: &SampledFunction, alpha: f64, a: &SectorialOperator) -> Result<f64> {
    if g.deriv_order_available() < 2 {
        return Err(Error::InvalidInput(
            "h^{2,α} norm needs two attached derivatives".into(),
        ));
    }
    hk_alpha_norm(g, 2, alpha, &default_interp(a, alpha)?)
}

/// Tensor grid `T_L × {y_k}` for Hölder norms of fields on the strip or the
/// truncated half-plane. Node index is `iy*nx + ix`.
#[derive(Debug, Clone)]
pub struct TensorGrid {
    nx: usize,
    period: f64,
    y: Vec<f64>,
}

impl TensorGrid {
    pub fn new(nx: usize, period: f64, y: Vec<f64>) -> Self {
        Self { nx, period, y }
    }

    pub fn nodes(&self) -> usize {
        self.nx * self.y.len()
    }

    /// `1/dist^γ` indexed by `[dxi][iy][jy]`.
    fn inverse_distance_table(&self, gamma: f64) -> Vec<f64> {
        let ny = self.y.len();
        let h = self.period / self.nx as f64;
        let nd = self.nx / 2 + 1;
        let mut t = vec![0.0; nd * ny * ny];
        for d in 0..nd {
            let dx = d as f64 * h;
            for a in 0..ny {
                for b in 0..ny {
                    let dy = self.y[a] - self.y[b];
                    let r = (dx * dx + dy * dy).sqrt();
                    t[(d * ny + a) * ny + b] = if r > 0.0 { r.powf(-gamma) } else { 0.0 };
                }
            }
        }
        t
    }

    /// `C^γ` report of a field given as several channels sharing one node
    /// layout (`channel[node*dim + c]`); the pointwise norm is the sum of the
    /// channels' Euclidean norms (e.g. `‖u‖ + ‖Au‖` for the graph norm).
    pub fn holder(&self, channels: &[&[C64]], dim: usize, gamma: f64) -> Result<HolderNormReport> {
        check_gamma(gamma)?;
        let n = self.nodes();
        if channels.iter().any(|c| c.len() != n * dim) {
            return Err(Error::InvalidInput(
                "channel length differs from grid".into(),
            ));
        }
        let ny = self.y.len();
        let nx = self.nx;
        let table = self.inverse_distance_table(gamma);
        let point = |i: usize| -> f64 {
            channels
                .iter()
                .map(|ch| euclid(&ch[i * dim..(i + 1) * dim]))
                .sum()
        };
        let sup = (0..n).map(point).fold(0.0, f64::max);
        let (semi, i, j) = pair_sweep(n, |i, j| {
            let (iy, ix) = (i / nx, i % nx);
            let (jy, jx) = (j / nx, j % nx);
            let d = ix.abs_diff(jx);
            let d = d.min(nx - d);
            let w = table[(d * ny + iy) * ny + jy];
            let mut s = 0.0;
            for ch in channels {
                let mut acc = 0.0;
                for c in 0..dim {
                    acc += (ch[i * dim + c] - ch[j * dim + c]).norm_sqr();
                }
                s += acc.sqrt();
            }
            s * w
        });
        let h = self.period / nx as f64;
        let wx = |k: usize| (k % nx) as f64 * h;
        let wit = (wx(i), wx(j));
        Ok(HolderNormReport {
            sup_norm: sup,
            seminorm: semi,
            total: sup + semi,
            witness_pair: wit,
        })
    }
}
