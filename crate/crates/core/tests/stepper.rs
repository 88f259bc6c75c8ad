mod common;

use common::{scalar_op, sine_profile, torus};
use proptest::prelude::*;
use stripflow::dtn::admissibility;
use stripflow::geometry::InterfaceProfile;
use stripflow::stepper::{
    detect_breakdown, evolve, reconstruct, step, Check, EvolutionConfig, Status, Thresholds,
};
use stripflow::Error;

fn max_abs(p: &InterfaceProfile) -> f64 {
    p.components()
        .iter()
        .flatten()
        .fold(0.0f64, |a, v| a.max(v.abs()))
}

#[test]
fn equilibrium_survives_a_hundred_steps() {
    let p = InterfaceProfile::flat(1.0, torus(32), 1).unwrap();
    let cfg = EvolutionConfig {
        dt: 0.05,
        t_end: 5.0,
        ..Default::default()
    };
    let tr = evolve(&p, &scalar_op(1.0), &cfg).unwrap();
    assert_eq!(cfg.steps(), 100);
    assert_eq!(tr.status, Status::Completed);
    assert!(max_abs(tr.last()) < 1e-10);
}

#[test]
fn small_sinusoid_decays_monotonically() {
    let p = sine_profile(32, 1e-3, 1.0);
    let cfg = EvolutionConfig {
        dt: 0.02,
        t_end: 1.0,
        ..Default::default()
    };
    let tr = evolve(&p, &scalar_op(1.0), &cfg).unwrap();
    assert_eq!(tr.status, Status::Completed);
    assert_eq!(tr.diagnostics.len(), 51);
    let l2: Vec<f64> = tr.diagnostics.iter().map(|d| d.l2).collect();
    assert!(l2.windows(2).all(|w| w[1] < w[0]), "{l2:?}");
}

/// One linearly implicit step of a single mode multiplies it by `1/(1 + dt σ_k)`.
#[test]
fn one_step_matches_mode_symbol() {
    for k in [1.0f64, 2.0, 4.0] {
        let p = sine_profile(32, 1e-4, k);
        let dt = 0.1;
        let (q, stats) = step(&p, &scalar_op(1.0), dt, 0.0, 17, 0.0).unwrap();
        assert!(stats.residual < 1e-8);
        let r = (1.0 + k * k).sqrt();
        let expect = 1.0 / (1.0 + dt * r * r.tanh());
        let ix = (std::f64::consts::FRAC_PI_2 / k / p.grid().spacing()).round() as usize;
        let ratio = q.g(0)[ix] / p.g(0)[ix];
        assert!(
            (ratio - expect).abs() < 1e-4,
            "k = {k}: {ratio} vs {expect}"
        );
    }
}

#[test]
fn restarting_reproduces_the_flow() {
    let p = sine_profile(32, 0.05, 1.0);
    let a = scalar_op(1.0);
    let cfg = |t_end| EvolutionConfig {
        dt: 0.05,
        t_end,
        ..Default::default()
    };
    let whole = evolve(&p, &a, &cfg(0.4)).unwrap();
    let half = evolve(&p, &a, &cfg(0.2)).unwrap();
    let rest = evolve(half.last(), &a, &cfg(0.2)).unwrap();
    let diff = whole
        .last()
        .g(0)
        .iter()
        .zip(rest.last().g(0))
        .map(|(u, v)| (u - v).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-10, "{diff:e}");
}

#[test]
fn growth_forcing_ends_at_the_boundary() {
    let p = sine_profile(32, 0.05, 1.0);
    let cfg = EvolutionConfig {
        dt: 0.05,
        t_end: 6.0,
        ramp_rate: 3.0,
        output_stride: 5,
        ..Default::default()
    };
    let tr = evolve(&p, &scalar_op(1.0), &cfg).unwrap();
    assert_eq!(tr.status, Status::BoundaryApproach, "{:?}", tr.failure);
    assert!(tr.failure.is_none());
    let last = tr.diagnostics.last().unwrap();
    assert!(last.w1_margin < tr.thresholds.margin_floor);
    assert!(last.h2alpha <= tr.thresholds.norm_cap);
    assert!(*tr.times.last().unwrap() < 6.0);
}

#[test]
fn inadmissible_start_is_refused() {
    // large amplitude at short wavelength leaves W₁
    let p = sine_profile(32, 0.5, 4.0);
    let rep = admissibility(&p, &scalar_op(1.0), 0.0, 17).unwrap();
    assert!(!rep.in_w1 && rep.margin < 0.0);
    assert!(matches!(
        evolve(&p, &scalar_op(1.0), &EvolutionConfig::default()),
        Err(Error::Inadmissible { .. })
    ));
}

#[test]
fn reconstruction_satisfies_the_kinetic_condition() {
    let p = InterfaceProfile::from_fn(1.0, torus(32), 1, |_, v| 0.2 * v.sin()).unwrap();
    let rec = reconstruct(&p, &scalar_op(1.0), 0.0, 17, 5).unwrap();
    assert!(
        rec.kinetic_residual < 1e-6 * rec.kinetic_scale,
        "{} vs {}",
        rec.kinetic_residual,
        rec.kinetic_scale
    );
    for (xp, yp, _) in &rec.samples {
        assert!(*yp >= 0.0 && *yp <= 1.0 + 0.2 * xp.sin() + 1e-12);
    }
}

#[test]
fn bad_configs_are_rejected() {
    for cfg in [
        EvolutionConfig {
            dt: 0.0,
            ..Default::default()
        },
        EvolutionConfig {
            dt: 0.1,
            t_end: -1.0,
            ..Default::default()
        },
        EvolutionConfig {
            output_stride: 0,
            ..Default::default()
        },
    ] {
        assert!(cfg.validate().is_err());
    }
}

proptest! {
    #[test]
    fn at_most_one_breakdown_flag(cap in 0.1f64..10.0, floor in -1.0f64..1.0, h in prop_oneof![0.0f64..20.0, Just(f64::NAN)], m in -2.0f64..2.0) {
        let t = Thresholds { norm_cap: cap, margin_floor: floor };
        let check = detect_breakdown(&t, h, m);
        let blow = !(h <= cap);
        let boundary = !(m >= floor);
        match check {
            Check::NormBlowup => prop_assert!(blow),
            Check::BoundaryApproach => prop_assert!(!blow && boundary),
            Check::Ok => prop_assert!(!blow && !boundary),
        }
    }
}
