//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::Rng;
use stripflow::geometry::InterfaceProfile;
use stripflow::grid::PeriodicGrid;
use stripflow::operator::SectorialOperator;
use stripflow::{CMat, CVec, C64};

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn torus(n: usize) -> PeriodicGrid {
    PeriodicGrid::new(n, 2.0 * PI).unwrap()
}

pub fn scalar_op(a: f64) -> SectorialOperator {
    SectorialOperator::diagonal(&[a], 1.5, 4.0).unwrap()
}

/// Non-normal 2×2 operator with spectrum {2, 1.5}.
pub fn pair_op() -> SectorialOperator {
    SectorialOperator::new(
        CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.5, 0.1), c(0.2, 0.0), c(1.5, 0.0)]),
        1.5,
        4.0,
    )
    .unwrap()
}

pub fn sine_profile(n: usize, amp: f64, k: f64) -> InterfaceProfile {
    InterfaceProfile::from_fn(1.0, torus(n), 1, |_, x| amp * (k * x).sin()).unwrap()
}

/// Random trigonometric polynomial `Σ_{k≤kmax} a_k cos(kx) + b_k sin(kx)`
/// with coefficients summing (in modulus) to at most `amp`.
pub fn random_trig(rng: &mut impl Rng, kmax: usize, amp: f64) -> Vec<(usize, f64, f64)> {
    let raw: Vec<(usize, f64, f64)> = (1..=kmax)
        .map(|k| (k, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let total: f64 = raw.iter().map(|(_, a, b)| a.abs() + b.abs()).sum();
    raw.into_iter()
        .map(|(k, a, b)| (k, amp * a / total, amp * b / total))
        .collect()
}

pub fn eval_trig(modes: &[(usize, f64, f64)], x: f64) -> f64 {
    modes
        .iter()
        .map(|&(k, a, b)| a * (k as f64 * x).cos() + b * (k as f64 * x).sin())
        .sum()
}

pub fn eval_trig_dx(modes: &[(usize, f64, f64)], x: f64, order: u32) -> f64 {
    modes
        .iter()
        .map(|&(k, a, b)| {
            let k = k as f64;
            match order % 4 {
                0 => a * (k * x).cos() + b * (k * x).sin(),
                1 => k * (-a * (k * x).sin() + b * (k * x).cos()),
                2 => -k * k * (a * (k * x).cos() + b * (k * x).sin()),
                _ => k * k * k * (a * (k * x).sin() - b * (k * x).cos()),
            }
        })
        .sum()
}

pub fn random_profile(rng: &mut impl Rng, n: usize, amp: f64) -> InterfaceProfile {
    let modes = random_trig(rng, 3, amp);
    InterfaceProfile::from_fn(1.0, torus(n), 1, |_, x| eval_trig(&modes, x)).unwrap()
}

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

/// Second-order finite-difference solve of the x-mode ODE
/// `−a22 v'' − 2ik a12 v' + (A + μ² + k²) v = f` on `[0, depth]` with
/// `v(0) = v0`, `v(depth) = 0`, by block Thomas elimination. Returns the
/// solution on the `n + 1` uniform nodes.
pub fn fd_mode_solve(
    a: &CMat,
    a12: f64,
    a22: f64,
    mu: f64,
    k: f64,
    depth: f64,
    n: usize,
    v0: &CVec,
    f: impl Fn(f64) -> CVec,
) -> Vec<CVec> {
    let m = a.nrows();
    let h = depth / n as f64;
    let eye = CMat::identity(m, m);
    let lo = c(-a22 / (h * h), k * a12 / h);
    let up = c(-a22 / (h * h), -k * a12 / h);
    let diag = a + &eye * c(2.0 * a22 / (h * h) + mu * mu + k * k, 0.0);
    let mut cp: Vec<CMat> = Vec::with_capacity(n);
    let mut dp: Vec<CVec> = Vec::with_capacity(n);
    for j in 1..n {
        let mut rhs = f(j as f64 * h);
        let piv = if j == 1 {
            rhs -= v0 * lo;
            diag.clone()
        } else {
            rhs -= &dp[j - 2] * lo;
            &diag - &cp[j - 2] * lo
        };
        let lu = piv.lu();
        cp.push(
            lu.solve(&(&eye * up))
                .expect("FD pivot block is invertible"),
        );
        dp.push(lu.solve(&rhs).expect("FD pivot block is invertible"));
    }
    let mut v = vec![CVec::zeros(m); n + 1];
    v[0] = v0.clone();
    for j in (1..n).rev() {
        v[j] = &dp[j - 1] - &cp[j - 1] * &v[j + 1];
    }
    v
}

/// Richardson-extrapolated FD solution at `y = depth·q/8`, `q = 0..=8`,
/// from meshes of `n` and `n/2` intervals (`n` divisible by 16).
pub fn fd_mode_oracle(
    a: &CMat,
    a12: f64,
    a22: f64,
    mu: f64,
    k: f64,
    depth: f64,
    n: usize,
    v0: &CVec,
    f: impl Fn(f64) -> CVec + Copy,
) -> Vec<CVec> {
    let fine = fd_mode_solve(a, a12, a22, mu, k, depth, n, v0, f);
    let coarse = fd_mode_solve(a, a12, a22, mu, k, depth, n / 2, v0, f);
    (0..=8)
        .map(|q| (&fine[q * n / 8] * c(4.0, 0.0) - &coarse[q * n / 16]) / c(3.0, 0.0))
        .collect()
}

/// Least-squares slope of `log e` against `log h`.
pub fn loglog_slope(h: &[f64], e: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = h.iter().zip(e).map(|(a, b)| (a.ln(), b.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    num / den
}
