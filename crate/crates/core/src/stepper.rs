//! Linearly implicit Euler for `dg/dt + O(g) = r g` on the trace space.
//!
//! `r` is an optional linear forcing (zero for the plain flow) used to drive
//! profiles towards the edge of the admissible set.

use serde::{Deserialize, Serialize};

use crate::dtn::{admissibility_from, real_trace, trace_l2, w1_margin, DtnEvaluator, Trace};
use crate::geometry::InterfaceProfile;
use crate::holder::h2alpha_norm;
use crate::linalg::{gmres, GmresOptions};
use crate::model::{strip_mode, FrozenCoefficients};
use crate::operator::SectorialOperator;
use crate::strip::SolverSettings;
use crate::{CMat, CVec, Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    SemiImplicitEuler,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub mu_solve: f64,
    /// Defaults to `10³‖g₀‖_{h^{2,α}} + 1`.
    pub breakdown_norm_cap: Option<f64>,
    /// Defaults to `10⁻³` times the initial W₁ margin.
    pub boundary_margin_floor: Option<f64>,
    pub output_stride: usize,
    pub ramp_rate: f64,
    pub alpha: f64,
    pub ny: usize,
    /// Rebuild `∂O` every this many steps; 1 means every step.
    pub jacobian_interval: usize,
    #[serde(default)]
    pub solver: SolverSettings,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            dt: 0.02,
            t_end: 1.0,
            scheme: Scheme::SemiImplicitEuler,
            mu_solve: 0.0,
            breakdown_norm_cap: None,
            boundary_margin_floor: None,
            output_stride: 1,
            ramp_rate: 0.0,
            alpha: 0.5,
            ny: 17,
            jacobian_interval: 1,
            solver: SolverSettings::default(),
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(m.into()));
        if !(self.dt > 0.0 && self.t_end > 0.0 && self.dt < self.t_end) {
            return bad("need 0 < dt < t_end");
        }
        if self.breakdown_norm_cap.is_some_and(|c| !(c > 0.0))
            || self.boundary_margin_floor.is_some_and(|c| !(c > 0.0))
        {
            return bad("breakdown caps must be positive");
        }
        if self.output_stride == 0 || self.jacobian_interval == 0 {
            return bad("output_stride and jacobian_interval must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("α must lie in (0, 1)");
        }
        if self.ny < 3 {
            return bad("ny must be at least 3");
        }
        if !self.mu_solve.is_finite() || !self.ramp_rate.is_finite() || self.mu_solve < 0.0 {
            return bad("mu_solve must be finite and nonnegative, ramp_rate finite");
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round().max(1.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Completed,
    NormBlowup,
    BoundaryApproach,
    SolverFailure,
}

impl Status {
    pub fn is_breakdown(self) -> bool {
        matches!(self, Status::NormBlowup | Status::BoundaryApproach)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Check {
    Ok,
    NormBlowup,
    BoundaryApproach,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Thresholds {
    pub norm_cap: f64,
    pub margin_floor: f64,
}

impl Thresholds {
    pub fn resolve(cfg: &EvolutionConfig, h2alpha0: f64, margin0: f64) -> Self {
        Self {
            norm_cap: cfg.breakdown_norm_cap.unwrap_or(1e3 * h2alpha0 + 1.0),
            margin_floor: cfg.boundary_margin_floor.unwrap_or(1e-3 * margin0),
        }
    }
}

/// Norm blow-up is checked first, so at most one flag is raised.
pub fn detect_breakdown(t: &Thresholds, h2alpha: f64, margin: f64) -> Check {
    if !(h2alpha <= t.norm_cap) {
        Check::NormBlowup
    } else if !(margin >= t.margin_floor) {
        Check::BoundaryApproach
    } else {
        Check::Ok
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepStats {
    pub iterations: usize,
    /// Relative residual of the linear step system.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub step: usize,
    pub t: f64,
    pub h2alpha: f64,
    pub w1_margin: f64,
    pub l2: f64,
    pub step_residual: f64,
    pub strip_residual: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub profiles: Vec<InterfaceProfile>,
    pub diagnostics: Vec<DiagnosticRow>,
    pub status: Status,
    pub thresholds: Thresholds,
    /// Error text when `status` is `SolverFailure`.
    pub failure: Option<String>,
}

impl Trajectory {
    pub fn last(&self) -> &InterfaceProfile {
        self.profiles
            .last()
            .expect("trajectory holds the initial profile")
    }
}

/// Per-mode inverse of `I + dt(∂O_flat − r)`, the flat operator taken at the
/// mean height of each component.
struct FlatPreconditioner {
    blocks: Vec<CMat>,
}

impl FlatPreconditioner {
    fn new(p: &InterfaceProfile, a: &SectorialOperator, mu: f64, dt: f64, r: f64) -> Result<Self> {
        let m = p.dim();
        let hbar: f64 = (0..m)
            .map(|c| p.g(c).iter().map(|g| p.nu() + g).sum::<f64>())
            .sum::<f64>()
            / (m * p.grid().len()) as f64;
        let fc = FrozenCoefficients::uniform(0.0, 1.0 / (hbar * hbar), a.clone(), mu)?;
        let x = p.grid();
        let blocks = crate::par::map(x.len(), |j| -> Result<CMat> {
            let o = strip_mode(&fc, x.wavenumber(j))?.dtn() / C64::new(hbar, 0.0);
            let b = CMat::identity(m, m)
                + (o - CMat::identity(m, m) * C64::new(r, 0.0)) * C64::new(dt, 0.0);
            b.try_inverse().ok_or(Error::Singular {
                lambda: C64::new(1.0 / dt, 0.0),
            })
        });
        Ok(Self {
            blocks: blocks.into_iter().collect::<Result<_>>()?,
        })
    }

    fn apply(&self, x: &crate::grid::PeriodicGrid, m: usize, v: &[C64], out: &mut [C64]) {
        let n = x.len();
        let hat: Vec<Vec<C64>> = (0..m)
            .map(|c| x.coefficients(&v[c * n..(c + 1) * n]))
            .collect();
        let mut res = vec![vec![C64::new(0.0, 0.0); n]; m];
        for (j, b) in self.blocks.iter().enumerate() {
            let w = b * CVec::from_iterator(m, (0..m).map(|c| hat[c][j]));
            for c in 0..m {
                res[c][j] = w[c];
            }
        }
        for (c, r) in res.iter_mut().enumerate() {
            x.inverse(r);
            out[c * n..(c + 1) * n].copy_from_slice(r);
        }
    }
}

fn flatten(t: &Trace) -> Vec<C64> {
    t.iter().flatten().copied().collect()
}

fn unflatten(v: &[C64], m: usize) -> Trace {
    v.chunks(v.len() / m).map(|c| c.to_vec()).collect()
}

/// One step with `∂O` taken from `jac` and `O(g_n)` from `cur`.
fn step_with(
    cur: &DtnEvaluator,
    jac: &DtnEvaluator,
    dt: f64,
    r: f64,
) -> Result<(Vec<Vec<f64>>, StepStats)> {
    let p = cur.profile();
    let (m, x) = (p.dim(), p.grid().clone());
    let g = real_trace(p.components());
    let rhs: Vec<C64> = flatten(cur.value())
        .iter()
        .zip(flatten(&g))
        .map(|(o, gv)| -(o - gv * r) * dt)
        .collect();
    let pre = FlatPreconditioner::new(jac.profile(), jac.operator(), jac.mu(), dt, r)?;
    let failed = std::cell::RefCell::new(None);
    let apply = |v: &[C64], out: &mut [C64]| match jac.derivative(&unflatten(v, m)) {
        Ok(d) => {
            for ((o, vi), di) in out.iter_mut().zip(v).zip(flatten(&d)) {
                *o = vi + (di - vi * r) * dt;
            }
        }
        Err(e) => {
            failed.borrow_mut().get_or_insert(e);
            out.iter_mut().for_each(|o| *o = C64::new(0.0, 0.0));
        }
    };
    let mut delta = vec![C64::new(0.0, 0.0); rhs.len()];
    let out = gmres(
        apply,
        |v, o| pre.apply(&x, m, v, o),
        &rhs,
        &mut delta,
        GmresOptions {
            tol: 1e-11,
            restart: 40,
            max_iter: 200,
        },
    );
    if let Some(e) = failed.into_inner() {
        return Err(e);
    }
    if !(out.residual <= 1e-8) {
        return Err(Error::Solver {
            context: "implicit step".into(),
            residual: out.residual,
            iterations: out.iterations,
        });
    }
    let d = unflatten(&delta, m);
    let next = (0..m)
        .map(|c| {
            p.g(c)
                .iter()
                .zip(&d[c])
                .map(|(gv, dv)| gv + dv.re)
                .collect()
        })
        .collect();
    Ok((
        next,
        StepStats {
            iterations: out.iterations,
            residual: out.residual,
        },
    ))
}

/// `g_{n+1}` from `g_n` solving `(I + dt(∂O(g_n) − r))δ = −dt(O(g_n) − r g_n)`.
pub fn step(
    p: &InterfaceProfile,
    a: &SectorialOperator,
    dt: f64,
    mu_solve: f64,
    ny: usize,
    ramp_rate: f64,
) -> Result<(InterfaceProfile, StepStats)> {
    let ev = DtnEvaluator::new(p, a, mu_solve, ny)?;
    let (g, stats) = step_with(&ev, &ev, dt, ramp_rate)?;
    Ok((p.with_components(g)?, stats))
}

fn l2(p: &InterfaceProfile) -> f64 {
    trace_l2(p.grid(), &real_trace(p.components()))
}

/// Errors that mean the profile has left the admissible geometry.
fn is_geometric(e: &Error) -> bool {
    matches!(
        e,
        Error::DegenerateDomain { .. } | Error::Ellipticity { .. }
    )
}

pub fn evolve(
    p0: &InterfaceProfile,
    a: &SectorialOperator,
    cfg: &EvolutionConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let ev0 = DtnEvaluator::with_settings(p0, a, cfg.mu_solve, cfg.ny, cfg.solver)?;
    let adm = admissibility_from(&ev0)?;
    if !adm.in_w1 {
        return Err(Error::Inadmissible {
            margin: adm.margin,
            vnu_margin: adm.vnu_margin,
        });
    }
    let h0 = h2alpha_norm(&p0.sampled(), cfg.alpha, a)?;
    let thresholds = Thresholds::resolve(cfg, h0, adm.margin);
    let mut traj = Trajectory {
        times: vec![0.0],
        profiles: vec![p0.clone()],
        diagnostics: vec![DiagnosticRow {
            step: 0,
            t: 0.0,
            h2alpha: h0,
            w1_margin: adm.margin,
            l2: l2(p0),
            step_residual: 0.0,
            strip_residual: ev0.stats().residual,
        }],
        status: Status::Completed,
        thresholds,
        failure: None,
    };
    let n = cfg.steps();
    let mut ev = ev0;
    let mut jac: Option<DtnEvaluator> = None;
    for k in 1..=n {
        let t = k as f64 * cfg.dt;
        if (k - 1) % cfg.jacobian_interval == 0 {
            jac = None;
        }
        let outcome = (|| -> Result<(DtnEvaluator, StepStats)> {
            let (g, stats) = step_with(&ev, jac.as_ref().unwrap_or(&ev), cfg.dt, cfg.ramp_rate)?;
            let p = ev.profile().with_components(g)?;
            Ok((
                DtnEvaluator::with_settings(&p, a, cfg.mu_solve, cfg.ny, cfg.solver)?,
                stats,
            ))
        })();
        let (next, stats) = match outcome {
            Ok(v) => v,
            Err(e) => {
                traj.status = if is_geometric(&e) {
                    Status::BoundaryApproach
                } else {
                    Status::SolverFailure
                };
                traj.failure = Some(e.to_string());
                break;
            }
        };
        let p = next.profile().clone();
        let h2 = h2alpha_norm(&p.sampled(), cfg.alpha, a)?;
        let margin = w1_margin(&next).0;
        let check = detect_breakdown(&thresholds, h2, margin);
        if check != Check::Ok || k % cfg.output_stride == 0 || k == n {
            traj.times.push(t);
            traj.profiles.push(p);
            traj.diagnostics.push(DiagnosticRow {
                step: k,
                t,
                h2alpha: h2,
                w1_margin: margin,
                l2: l2(next.profile()),
                step_residual: stats.residual,
                strip_residual: next.stats().residual,
            });
        }
        match check {
            Check::NormBlowup => {
                traj.status = Status::NormBlowup;
                break;
            }
            Check::BoundaryApproach => {
                traj.status = Status::BoundaryApproach;
                break;
            }
            Check::Ok => {}
        }
        if cfg.jacobian_interval > 1 && jac.is_none() {
            jac = Some(ev);
        }
        ev = next;
    }
    Ok(traj)
}

/// Physical picture of one profile.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    /// `f = ν + g` per component.
    pub interface: Vec<Vec<f64>>,
    /// `(x', y', u(x', y'))` on `Ω_f`, `y'` from the bottom up to the interface.
    pub samples: Vec<(f64, f64, Vec<C64>)>,
    /// `max |f_t + √(1+f_x²) ∂u/∂n|` with `f_t = −O(g)`.
    pub kinetic_residual: f64,
    /// `max |O(g)|`.
    pub kinetic_scale: f64,
}

/// Pulls `υ = K(g)g` back to `Ω_f` and checks the kinetic condition with the
/// normal derivative taken by one-sided differences in `y'`.
pub fn reconstruct(
    p: &InterfaceProfile,
    a: &SectorialOperator,
    mu_solve: f64,
    ny: usize,
    rows: usize,
) -> Result<Reconstruction> {
    let ev = DtnEvaluator::new(p, a, mu_solve, ny)?;
    let grid = ev.grid().clone();
    let (m, x) = (p.dim(), p.grid().clone());
    let interface: Vec<Vec<f64>> = (0..m)
        .map(|c| p.g(c).iter().map(|g| p.nu() + g).collect())
        .collect();
    let pb = p.pullback(ev.upsilon());
    let mut samples = Vec::with_capacity(rows * x.len());
    for xp in x.nodes() {
        let top = p.height_at(xp);
        for r in 0..rows {
            let yp = top * r as f64 / (rows.max(2) - 1) as f64;
            samples.push((xp, yp, pb.eval(xp, yp)?));
        }
    }
    let value = ev.value();
    let ny = grid.ny();
    let mut worst = 0.0f64;
    for c in 0..m {
        let f = &interface[c];
        let fx = x.derivative_real(f, 1);
        for (ix, (&h, &fxv)) in f.iter().zip(&fx).enumerate() {
            let lane: Vec<C64> = (0..ny).map(|iy| ev.upsilon().get(c, iy, ix)).collect();
            // u(x', h − s) = υ(x', s/h)
            let u = |s: f64| grid.y().interpolate(&lane, s / h);
            let e = 1e-4 * h;
            let uyp = (u(0.0) * 3.0 - u(e) * 4.0 + u(2.0 * e)) / (2.0 * e);
            let ut = -fxv * x.derivative_real(p.g(c), 1)[ix] + (1.0 + fxv * fxv) * uyp.re;
            worst = worst.max((ut - value[c][ix].re).abs());
        }
    }
    let scale = value.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(Reconstruction {
        interface,
        samples,
        kinetic_residual: worst,
        kinetic_scale: scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;
    use std::f64::consts::PI;

    #[test]
    fn breakdown_flags_exclusive() {
        let t = Thresholds {
            norm_cap: 10.0,
            margin_floor: 0.1,
        };
        assert_eq!(detect_breakdown(&t, 1.0, 0.5), Check::Ok);
        assert_eq!(detect_breakdown(&t, 11.0, 0.0), Check::NormBlowup);
        assert_eq!(detect_breakdown(&t, 1.0, 0.05), Check::BoundaryApproach);
        assert_eq!(detect_breakdown(&t, f64::NAN, 0.5), Check::NormBlowup);
    }

    #[test]
    fn flat_profile_is_fixed() {
        let x = PeriodicGrid::new(16, 2.0 * PI).unwrap();
        let p = InterfaceProfile::flat(1.0, x, 1).unwrap();
        let a = SectorialOperator::diagonal(&[1.0], 1.5, 4.0).unwrap();
        let (q, _) = step(&p, &a, 0.05, 0.0, 13, 0.0).unwrap();
        assert!(q.components()[0].iter().all(|v| v.abs() < 1e-12));
    }
}
