//! Dense helpers and a restarted GMRES for the matrix-free strip and trace solves.

use crate::{CMat, C64};

pub fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Spectral norm of a small matrix.
pub fn op_norm(m: &CMat) -> f64 {
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].norm();
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn diag(values: &[C64]) -> CMat {
    CMat::from_diagonal(&nalgebra::DVector::from_column_slice(values))
}

pub fn scalar(z: C64, n: usize) -> CMat {
    CMat::identity(n, n) * z
}

/// Eigenvalues via complex Schur form.
pub fn eigenvalues(m: &CMat) -> Vec<C64> {
    if m.nrows() == 1 {
        return vec![m[(0, 0)]];
    }
    if m.nrows() == 2 {
        // closed form is cheaper and exact enough for 2x2 symbols
        let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        let tr = a + d;
        let disc = ((a - d) * (a - d) + b * c * 4.0).sqrt();
        return vec![(tr + disc) * 0.5, (tr - disc) * 0.5];
    }
    let (_, t) = m.clone().schur().unpack();
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct GmresOptions {
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            restart: 60,
            max_iter: 600,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct GmresOutcome {
    pub iterations: usize,
    /// Relative residual of the preconditioned system.
    pub residual: f64,
    pub converged: bool,
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn givens(a: C64, b: C64) -> (f64, C64) {
    if b.norm() == 0.0 {
        return (1.0, zero());
    }
    if a.norm() == 0.0 {
        return (0.0, b.conj() / b.norm());
    }
    let t = (a.norm_sqr() + b.norm_sqr()).sqrt();
    (a.norm() / t, (a / a.norm()) * b.conj() / t)
}

/// Left-preconditioned restarted GMRES: minimises `‖M⁻¹(b − Ax)‖`.
/// `x` holds the initial guess on entry and the solution on exit.
pub fn gmres<A, P>(
    apply: A,
    precond: P,
    b: &[C64],
    x: &mut [C64],
    opts: GmresOptions,
) -> GmresOutcome
where
    A: Fn(&[C64], &mut [C64]),
    P: Fn(&[C64], &mut [C64]),
{
    let n = b.len();
    let mut pb = vec![zero(); n];
    precond(b, &mut pb);
    let bnorm = vec_norm(&pb);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = zero());
        return GmresOutcome {
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
    }
    let k = opts.restart.max(1);
    let mut total = 0;
    let mut tmp = vec![zero(); n];
    let mut res = f64::INFINITY;
    let mut best_stall = 0;
    loop {
        // r = M⁻¹(b − A x)
        apply(x, &mut tmp);
        for i in 0..n {
            tmp[i] = b[i] - tmp[i];
        }
        let mut r = vec![zero(); n];
        precond(&tmp, &mut r);
        let beta = vec_norm(&r);
        let prev = res;
        res = beta / bnorm;
        if res <= opts.tol || total >= opts.max_iter {
            return GmresOutcome {
                iterations: total,
                residual: res,
                converged: res <= opts.tol,
            };
        }
        // restarts that no longer reduce the residual mean we hit the rounding floor
        if res > 0.5 * prev {
            best_stall += 1;
            if best_stall >= 2 {
                return GmresOutcome {
                    iterations: total,
                    residual: res,
                    converged: res <= opts.tol,
                };
            }
        }
        let mut basis: Vec<Vec<C64>> = Vec::with_capacity(k + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut h = vec![vec![zero(); k]; k + 1];
        let mut cs = vec![0.0; k];
        let mut sn = vec![zero(); k];
        let mut g = vec![zero(); k + 1];
        g[0] = C64::new(beta, 0.0);
        let mut used = 0;
        for j in 0..k {
            apply(&basis[j], &mut tmp);
            let mut w = vec![zero(); n];
            precond(&tmp, &mut w);
            for _pass in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(v, &w);
                    h[i][j] += c;
                    for (wi, vi) in w.iter_mut().zip(v) {
                        *wi -= c * vi;
                    }
                }
            }
            let hn = vec_norm(&w);
            h[j + 1][j] = C64::new(hn, 0.0);
            for i in 0..j {
                let (c, s) = (cs[i], sn[i]);
                let t = h[i][j] * c + s * h[i + 1][j];
                h[i + 1][j] = -s.conj() * h[i][j] + h[i + 1][j] * c;
                h[i][j] = t;
            }
            let (c, s) = givens(h[j][j], h[j + 1][j]);
            cs[j] = c;
            sn[j] = s;
            h[j][j] = h[j][j] * c + s * h[j + 1][j];
            h[j + 1][j] = zero();
            g[j + 1] = -s.conj() * g[j];
            g[j] *= c;
            used = j + 1;
            total += 1;
            let est = g[j + 1].norm() / bnorm;
            if est <= opts.tol || hn == 0.0 || total >= opts.max_iter {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        // back substitution
        let mut y = vec![zero(); used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for l in i + 1..used {
                s -= h[i][l] * y[l];
            }
            y[i] = s / h[i][i];
        }
        for (l, yl) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&basis[l]) {
                *xi += yl * vi;
            }
        }
    }
}
