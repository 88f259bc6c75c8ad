mod common;

use common::{c, loglog_slope, scalar_op, sine_profile, torus};
use proptest::prelude::*;
use stripflow::dtn::{
    dtn_apply, frozen_set, partition, real_trace, sector_report, trace_add, trace_max, trace_scale,
    trace_sub, DtnEvaluator, Trace,
};
use stripflow::geometry::InterfaceProfile;
use stripflow::linalg::op_norm;
use stripflow::C64;

const NY: usize = 15;

fn o(p: &InterfaceProfile) -> Trace {
    dtn_apply(p, &scalar_op(1.0), 0.0, NY).unwrap().value
}

fn directions(n: usize) -> Vec<Vec<Vec<f64>>> {
    let x = torus(n).nodes();
    vec![
        vec![x.iter().map(|v| v.cos()).collect()],
        vec![x.iter().map(|v| (2.0 * v).sin()).collect()],
        vec![x.iter().map(|v| 0.5 + (3.0 * v).cos()).collect()],
    ]
}

#[test]
fn central_differences_converge_at_second_order() {
    let profiles = [
        sine_profile(32, 0.1, 1.0),
        InterfaceProfile::from_fn(1.0, torus(32), 1, |_, v| {
            0.15 * (2.0 * v).cos() - 0.05 * v.sin()
        })
        .unwrap(),
        InterfaceProfile::from_fn(1.3, torus(32), 1, |_, v| {
            0.2 * (v.sin() + 0.3 * (3.0 * v).cos())
        })
        .unwrap(),
    ];
    let a = scalar_op(1.0);
    for p in &profiles {
        let ev = DtnEvaluator::new(p, &a, 0.0, NY).unwrap();
        for dir in directions(32) {
            let d = ev.derivative(&real_trace(&dir)).unwrap();
            let scale = trace_max(&d);
            let err = |eps: f64| {
                let fd = trace_scale(
                    &trace_sub(
                        &o(&p.perturbed(eps, &dir).unwrap()),
                        &o(&p.perturbed(-eps, &dir).unwrap()),
                    ),
                    c(0.5 / eps, 0.0),
                );
                trace_max(&trace_sub(&fd, &d)) / scale
            };
            let eps = [0.04, 0.02, 0.01];
            let errs: Vec<f64> = eps.iter().map(|&e| err(e)).collect();
            let slope = loglog_slope(&eps, &errs);
            assert!((slope - 2.0).abs() < 0.2, "slope {slope}, errors {errs:?}");
            assert!(err(1e-4) < 1e-5);
        }
    }
}

#[test]
fn derivative_is_linear() {
    let p = sine_profile(32, 0.1, 1.0);
    let ev = DtnEvaluator::new(&p, &scalar_op(1.0), 0.0, NY).unwrap();
    let dirs = directions(32);
    let (u, v) = (real_trace(&dirs[0]), real_trace(&dirs[1]));
    let s = c(-1.7, 0.3);
    let lhs = ev.derivative(&trace_add(&u, &trace_scale(&v, s))).unwrap();
    let rhs = trace_add(
        &ev.derivative(&u).unwrap(),
        &trace_scale(&ev.derivative(&v).unwrap(), s),
    );
    assert!(trace_max(&trace_sub(&lhs, &rhs)) < 1e-10 * trace_max(&lhs));
}

#[test]
fn flat_linearization_is_diagonal_in_fourier_modes() {
    let x = torus(32);
    let p = InterfaceProfile::flat(1.0, x.clone(), 1).unwrap();
    let ev = DtnEvaluator::new(&p, &scalar_op(1.0), 0.0, 21).unwrap();
    for k in [0i64, 1, 3, 7] {
        let mode: Trace = vec![x
            .nodes()
            .iter()
            .map(|v| C64::from_polar(1.0, k as f64 * v))
            .collect()];
        let d = ev.derivative(&mode).unwrap();
        let hat: Vec<C64> = x.coefficients(&d[0]).iter().map(|z| z / 32.0).collect();
        let j = k as usize;
        let diag = hat[j].norm();
        let leak = hat
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != j)
            .map(|(_, z)| z.norm())
            .fold(0.0, f64::max);
        assert!(leak < 1e-8 * diag, "k = {k}: leak {leak:e}");
        let r = (1.0 + (k * k) as f64).sqrt();
        let sigma = r * r.tanh();
        assert!(
            (hat[j].re - sigma).abs() < 1e-6 * sigma,
            "k = {k}: {} vs {sigma}",
            hat[j]
        );
    }
}

#[test]
fn frozen_parts_sum_and_generate() {
    let p = sine_profile(32, 0.1, 1.0);
    let a = scalar_op(1.0);
    let set = frozen_set(&p, &a, 5, 0.0, NY).unwrap();
    for j in 0..32 {
        let sum = &set.o10[j] + &set.o20[j] + &set.o30[j];
        assert!(op_norm(&(&set.o0[j] - sum)) <= 1e-12 * op_norm(&set.o0[j]).max(1.0));
    }
    let rep = sector_report(&set, &a, 4.0, 0.5, 8, 1).unwrap();
    assert!(rep.pass, "{rep:?}");
    assert!(rep
        .parts
        .iter()
        .all(|p| p.min_re > 0.0 && p.half_angle < std::f64::consts::FRAC_PI_2 + 0.1));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_of_unity(n_pow in 4u32..8, length in 1.0f64..20.0, delta in 0.05f64..1.0) {
        let x = stripflow::grid::PeriodicGrid::new(1 << n_pow, length).unwrap();
        let phis = partition(&x, delta).unwrap();
        let nodes = x.nodes();
        let h = length / phis.len() as f64;
        prop_assert!(h <= delta * (1.0 + 1e-12));
        for (i, &xv) in nodes.iter().enumerate() {
            let s: f64 = phis.iter().map(|p| p[i]).sum();
            prop_assert!((s - 1.0).abs() < 1e-13);
            for (jp, p) in phis.iter().enumerate() {
                prop_assert!(p[i] >= 0.0);
                if p[i] > 0.0 {
                    prop_assert!(x.distance(xv, jp as f64 * h) < delta + 1e-12);
                }
            }
        }
    }
}
