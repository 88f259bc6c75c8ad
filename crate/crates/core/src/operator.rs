//! The positive operator `A` on `E = C^m`: resolvents, fractional powers,
//! the semigroup `exp(-tA)` and the interpolation norm of `D_A(θ,∞)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::linalg::{eigenvalues, op_norm};
use crate::{CMat, CVec, Error, Result, C64};

#[derive(Debug, Clone)]
pub struct SectorialOperator {
    entries: CMat,
    sector_angle: f64,
    bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PositivityReport {
    pub pass: bool,
    pub worst_ratio: f64,
    pub witness: [f64; 2],
    pub min_re_eigenvalue: f64,
    pub samples: usize,
    pub note: Option<String>,
}

impl SectorialOperator {
    pub fn new(entries: CMat, sector_angle: f64, bound: f64) -> Result<Self> {
        if entries.nrows() == 0 || entries.nrows() != entries.ncols() {
            return Err(Error::InvalidInput(format!(
                "operator must be square and nonempty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::InvalidInput(
                "operator entries must be finite".into(),
            ));
        }
        if !(0.0..PI).contains(&sector_angle) {
            return Err(Error::InvalidInput(format!(
                "sector angle {sector_angle} not in [0, π)"
            )));
        }
        if !(bound > 0.0) {
            return Err(Error::InvalidInput(format!(
                "positivity bound M = {bound} must be > 0"
            )));
        }
        Ok(Self {
            entries,
            sector_angle,
            bound,
        })
    }

    /// Real diagonal operator, handy in tests and scenarios.
    pub fn diagonal(values: &[f64], sector_angle: f64, bound: f64) -> Result<Self> {
        let d: Vec<C64> = values.iter().map(|&v| C64::new(v, 0.0)).collect();
        Self::new(crate::linalg::diag(&d), sector_angle, bound)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn sector_angle(&self) -> f64 {
        self.sector_angle
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn is_real(&self) -> bool {
        self.entries.iter().all(|z| z.im == 0.0)
    }

    pub fn eigenvalues(&self) -> Vec<C64> {
        eigenvalues(&self.entries)
    }

    /// Smallest real part in the spectrum.
    pub fn min_re_eigenvalue(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn norm(&self) -> f64 {
        op_norm(&self.entries)
    }

    /// The published sample grid: 7 rays across `[-φ, φ]`, 24 log-spaced radii
    /// in `[1e-3, 1e6]`, plus `λ = 0`.
    pub fn default_samples(&self) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0)];
        for r in 0..7 {
            let theta = -self.sector_angle + 2.0 * self.sector_angle * r as f64 / 6.0;
            for k in 0..24 {
                let rad = 10f64.powf(-3.0 + 9.0 * k as f64 / 23.0);
                out.push(C64::from_polar(rad, theta));
            }
        }
        out
    }

    pub fn validate_sectorial(&self, samples: &[C64]) -> Result<PositivityReport> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("no λ samples".into()));
        }
        let tol = 1e-9;
        for l in samples {
            if l.norm() > 0.0 && l.arg().abs() > self.sector_angle + tol {
                return Err(Error::InvalidInput(format!(
                    "sample λ = {l} lies outside the sector"
                )));
            }
        }
        let min_re = self.min_re_eigenvalue();
        let mut worst = 0.0;
        let mut witness = samples[0];
        for &l in samples {
            match self.resolvent(l) {
                Ok(r) => {
                    let ratio = (1.0 + l.norm()) * op_norm(&r);
                    if !(ratio <= worst) {
                        worst = ratio;
                        witness = l;
                    }
                }
                Err(_) => {
                    return Ok(PositivityReport {
                        pass: false,
                        worst_ratio: f64::INFINITY,
                        witness: [l.re, l.im],
                        min_re_eigenvalue: min_re,
                        samples: samples.len(),
                        note: Some("A + λ is singular at the witness".into()),
                    })
                }
            }
        }
        let pass = worst <= self.bound && min_re > 0.0;
        Ok(PositivityReport {
            pass,
            worst_ratio: worst,
            witness: [witness.re, witness.im],
            min_re_eigenvalue: min_re,
            samples: samples.len(),
            note: None,
        })
    }

    pub fn resolvent(&self, lambda: C64) -> Result<CMat> {
        let n = self.dim();
        let shifted = &self.entries + CMat::identity(n, n) * lambda;
        let scale = op_norm(&shifted).max(1.0);
        let lu = shifted.clone().lu();
        let inv = lu.try_inverse().ok_or(Error::Singular { lambda })?;
        let resid = op_norm(&(&shifted * &inv - CMat::identity(n, n)));
        // reject numerically singular shifts whose inverse is garbage
        if !inv.iter().all(|z| z.re.is_finite() && z.im.is_finite())
            || resid > 1e-6
            || op_norm(&inv) * scale > 1e14
        {
            return Err(Error::Singular { lambda });
        }
        Ok(inv)
    }

    /// `A^θ` on the principal branch via Schur–Parlett.
    pub fn frac_power(&self, theta: f64) -> Result<CMat> {
        if self.min_re_eigenvalue() <= 0.0 {
            return Err(Error::MatrixFunction(
                "fractional power needs spectrum in Re > 0".into(),
            ));
        }
        if theta == 0.0 {
            return Ok(CMat::identity(self.dim(), self.dim()));
        }
        if theta == 1.0 {
            return Ok(self.entries.clone());
        }
        if theta == 0.5 {
            return sqrtm(&self.entries);
        }
        funm(
            &self.entries,
            |z| (z.ln() * theta).exp(),
            |z| (z.ln() * (theta - 1.0)).exp() * theta,
        )
    }

    /// `U(t) = exp(-tA)`.
    pub fn semigroup(&self, t: f64) -> Result<CMat> {
        if !(t >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "semigroup time t = {t} must be ≥ 0"
            )));
        }
        Ok(expm(&(&self.entries * C64::new(-t, 0.0))))
    }

    pub fn apply(&self, u: &[C64]) -> Vec<C64> {
        let v = &self.entries * CVec::from_column_slice(u);
        v.as_slice().to_vec()
    }
}

/// Matrix exponential (Padé scaling and squaring).
pub fn expm(m: &CMat) -> CMat {
    if m.nrows() == 1 {
        return CMat::from_element(1, 1, m[(0, 0)].exp());
    }
    m.clone().exp()
}

/// Principal square root via the Björck–Hammarling recurrence on the Schur form.
pub fn sqrtm(m: &CMat) -> Result<CMat> {
    let n = m.nrows();
    if n == 1 {
        let z = m[(0, 0)];
        check_branch(z)?;
        return Ok(CMat::from_element(1, 1, z.sqrt()));
    }
    let (q, t) = m.clone().schur().unpack();
    let mut r = CMat::zeros(n, n);
    for i in 0..n {
        check_branch(t[(i, i)])?;
        r[(i, i)] = t[(i, i)].sqrt();
    }
    for j in 1..n {
        for i in (0..j).rev() {
            let mut s = t[(i, j)];
            for k in i + 1..j {
                s -= r[(i, k)] * r[(k, j)];
            }
            let d = r[(i, i)] + r[(j, j)];
            if d.norm() == 0.0 {
                return Err(Error::MatrixFunction(
                    "square root undefined: eigenvalue pair sums to zero".into(),
                ));
            }
            r[(i, j)] = s / d;
        }
    }
    Ok(&q * r * q.adjoint())
}

fn check_branch(z: C64) -> Result<()> {
    let scale = z.norm();
    if scale == 0.0 || (z.re < 0.0 && z.im.abs() <= 1e-12 * scale) {
        return Err(Error::MatrixFunction(format!(
            "eigenvalue {z} touches the principal branch cut"
        )));
    }
    Ok(())
}

/// Schur–Parlett evaluation of an analytic `f` with derivative `df`.
/// Confluent eigenvalues are handled only for 2×2 Jordan-type couplings;
/// larger clusters report an error.
pub fn funm(m: &CMat, f: impl Fn(C64) -> C64, df: impl Fn(C64) -> C64) -> Result<CMat> {
    let n = m.nrows();
    if n == 1 {
        return Ok(CMat::from_element(1, 1, f(m[(0, 0)])));
    }
    let (q, t) = m.clone().schur().unpack();
    let scale = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let tol = 1e-8 * scale;
    let mut fm = CMat::zeros(n, n);
    for i in 0..n {
        fm[(i, i)] = f(t[(i, i)]);
    }
    for p in 1..n {
        for i in 0..n - p {
            let j = i + p;
            let mut s = t[(i, j)] * (fm[(j, j)] - fm[(i, i)]);
            let mut sum = C64::new(0.0, 0.0);
            for k in i + 1..j {
                sum += t[(i, k)] * fm[(k, j)] - fm[(i, k)] * t[(k, j)];
            }
            s += sum;
            let gap = t[(j, j)] - t[(i, i)];
            if gap.norm() > tol {
                fm[(i, j)] = s / gap;
            } else if chained(&t, &fm, i, j, tol, 1e-12 * scale) {
                return Err(Error::MatrixFunction(
                    "defective eigenvalue cluster beyond Schur–Parlett tolerance".into(),
                ));
            } else if sum.norm() <= 1e-12 * scale {
                fm[(i, j)] = df((t[(i, i)] + t[(j, j)]) * 0.5) * t[(i, j)];
            } else {
                return Err(Error::MatrixFunction(
                    "defective eigenvalue cluster beyond Schur–Parlett tolerance".into(),
                ));
            }
        }
    }
    Ok(&q * fm * q.adjoint())
}

/// A confluent pair `(i, j)` coupled through a third confluent index: the
/// first-derivative update would silently drop the higher-order terms.
fn chained(t: &CMat, fm: &CMat, i: usize, j: usize, tol: f64, eps: f64) -> bool {
    (i + 1..j).any(|k| {
        (t[(k, k)] - t[(i, i)]).norm() <= tol
            && (t[(i, k)].norm() > eps || fm[(i, k)].norm() > eps)
            && t[(k, j)].norm() > eps
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterpolationNormSpec {
    pub theta: f64,
    pub t_grid: Vec<f64>,
}

impl InterpolationNormSpec {
    /// `points` log-spaced values in `[1e-6, 1]`.
    pub fn log_spaced(theta: f64, points: usize) -> Result<Self> {
        let n = points.max(2);
        let t_grid = (0..n)
            .map(|k| 10f64.powf(-6.0 + 6.0 * k as f64 / (n - 1) as f64))
            .collect();
        Self::new(theta, t_grid)
    }

    pub fn new(theta: f64, t_grid: Vec<f64>) -> Result<Self> {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::InvalidInput(format!("θ = {theta} not in (0, 1]")));
        }
        if t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput(
                "t grid must be nonempty and strictly increasing".into(),
            ));
        }
        if t_grid[0] <= 0.0 || *t_grid.last().unwrap() > 1.0 {
            return Err(Error::InvalidInput("t grid must lie in (0, 1]".into()));
        }
        Ok(Self { theta, t_grid })
    }
}

/// Precomputed `t^{1-θ} A exp(-tA)` on the t-grid; evaluates the discrete
/// `D_A(θ,∞)` norm of vectors.
#[derive(Debug, Clone)]
pub struct InterpolationNorm {
    kernels: Vec<CMat>,
}

impl InterpolationNorm {
    pub fn new(a: &SectorialOperator, spec: &InterpolationNormSpec) -> Result<Self> {
        let kernels = spec
            .t_grid
            .iter()
            .map(|&t| Ok(a.entries() * a.semigroup(t)? * C64::new(t.powf(1.0 - spec.theta), 0.0)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { kernels })
    }

    pub fn dim(&self) -> usize {
        self.kernels.first().map(|k| k.nrows()).unwrap_or(0)
    }

    pub fn eval(&self, u: &[C64]) -> f64 {
        let m = u.len();
        let mut best: f64 = 0.0;
        for k in &self.kernels {
            let mut s = 0.0;
            for i in 0..m {
                let mut acc = C64::new(0.0, 0.0);
                for j in 0..m {
                    acc += k[(i, j)] * u[j];
                }
                s += acc.norm_sqr();
            }
            best = best.max(s);
        }
        best.sqrt()
    }
}

/// `max_t t^{1-θ} ‖A U(t) u‖` over the spec's grid.
pub fn interp_norm(a: &SectorialOperator, u: &[C64], spec: &InterpolationNormSpec) -> Result<f64> {
    if u.len() != a.dim() {
        return Err(Error::InvalidInput(format!(
            "vector length {} ≠ dim {}",
            u.len(),
            a.dim()
        )));
    }
    Ok(InterpolationNorm::new(a, spec)?.eval(u))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn scalar_identity_passes_on_closed_half_plane() {
        let a = SectorialOperator::diagonal(&[1.0], PI / 2.0, 2.0).unwrap();
        let mut samples = vec![c(0.0, 0.0)];
        for th in [0.0, PI / 2.0, -PI / 2.0] {
            for k in 0..20 {
                samples.push(C64::from_polar(
                    10f64.powf(-3.0 + 7.0 * k as f64 / 19.0),
                    th,
                ));
            }
        }
        let rep = a.validate_sectorial(&samples).unwrap();
        assert!(rep.pass);
        assert!(rep.worst_ratio <= 2f64.sqrt() + 1e-12);
    }

    #[test]
    fn nilpotent_operator_fails() {
        let m = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let a = SectorialOperator::new(m, PI / 2.0, 10.0).unwrap();
        let rep = a.validate_sectorial(&a.default_samples()).unwrap();
        assert!(!rep.pass);
    }

    #[test]
    fn resolvent_examples() {
        let a = SectorialOperator::diagonal(&[1.0, 1.0], 1.0, 2.0).unwrap();
        let r = a.resolvent(c(1.0, 0.0)).unwrap();
        assert!((r - CMat::identity(2, 2) * c(0.5, 0.0)).norm() < 1e-15);
        let a1 = SectorialOperator::diagonal(&[1.0], 1.0, 2.0).unwrap();
        assert!((a1.resolvent(c(0.0, 0.0)).unwrap()[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
        assert!(matches!(
            SectorialOperator::diagonal(&[0.0], 1.0, 2.0)
                .unwrap()
                .resolvent(c(0.0, 0.0)),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn powers_and_semigroup_examples() {
        let a = SectorialOperator::diagonal(&[4.0], 1.0, 2.0).unwrap();
        assert!((a.frac_power(0.5).unwrap()[(0, 0)] - c(2.0, 0.0)).norm() < 1e-14);
        let i2 = SectorialOperator::diagonal(&[1.0, 1.0], 1.0, 2.0).unwrap();
        assert!((i2.frac_power(0.5).unwrap() - CMat::identity(2, 2)).norm() < 1e-14);
        assert!((i2.frac_power(0.3).unwrap() - CMat::identity(2, 2)).norm() < 1e-14);
        let one = SectorialOperator::diagonal(&[1.0], 1.0, 2.0).unwrap();
        assert!((one.semigroup(2f64.ln()).unwrap()[(0, 0)] - c(0.5, 0.0)).norm() < 1e-15);
        assert!((one.semigroup(0.0).unwrap()[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
        assert!(one.semigroup(-1.0).is_err());
    }

    #[test]
    fn jordan_block_fractional_power() {
        // [[2,1],[0,2]]^θ = [[2^θ, θ 2^{θ-1}], [0, 2^θ]]
        let m = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)]);
        let a = SectorialOperator::new(m, 1.0, 10.0).unwrap();
        let p = a.frac_power(0.3).unwrap();
        assert!((p[(0, 0)] - c(2f64.powf(0.3), 0.0)).norm() < 1e-12);
        assert!((p[(0, 1)] - c(0.3 * 2f64.powf(-0.7), 0.0)).norm() < 1e-10);
    }

    #[test]
    fn branch_cut_is_refused() {
        assert!(sqrtm(&CMat::from_element(1, 1, c(-1.0, 0.0))).is_err());
    }

    #[test]
    fn interp_norm_scalar_matches_dense_sweep() {
        let a = SectorialOperator::diagonal(&[1.0], 1.0, 2.0).unwrap();
        let spec = InterpolationNormSpec::log_spaced(0.5, 200).unwrap();
        let v = interp_norm(&a, &[c(1.0, 0.0)], &spec).unwrap();
        // oracle: dense uniform sweep of t^{1/2} e^{-t} on (0,1]
        let oracle = (1..=100_000)
            .map(|k| {
                let t = k as f64 / 100_000.0;
                t.sqrt() * (-t).exp()
            })
            .fold(0.0, f64::max);
        assert!((v - oracle).abs() < 1e-3 * oracle, "{v} vs {oracle}");
        assert_eq!(interp_norm(&a, &[c(0.0, 0.0)], &spec).unwrap(), 0.0);
    }
}
