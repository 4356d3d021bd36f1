use gcpinn_core::domain::DomainBox;
use gcpinn_core::mapping::{GeometricMapping, PWL_SEGMENTS};
use proptest::prelude::*;

fn unit() -> DomainBox {
    DomainBox::unit(1)
}

proptest! {
    #[test]
    fn torus_is_periodic(x in 0.0f64..1.0, k in -3i32..3) {
        let m = GeometricMapping::torus(unit());
        let a = m.map_point(&[x]).unwrap()[0];
        let b = m.map_point(&[x + f64::from(k)]).unwrap()[0];
        prop_assert!((a - b).abs() <= 1e-14 || ((a - b).abs() - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn torus_derivatives_are_trivial(x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let m = GeometricMapping::torus(DomainBox::unit(2));
        prop_assert_eq!(m.jacobian(&[x, y]).unwrap(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        prop_assert!(m.hessian(&[x, y]).unwrap().iter().flatten().flatten().all(|&h| h == 0.0));
    }

    #[test]
    fn radial_is_monotone_and_normalized(alpha in 0.5f64..100.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let m = GeometricMapping::radial(alpha, unit());
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-9);
        prop_assert!(m.map_point(&[lo]).unwrap()[0] < m.map_point(&[hi]).unwrap()[0]);
        prop_assert!((m.map_point(&[1.0]).unwrap()[0] - 1.0).abs() < 1e-14);
        prop_assert!(m.jacobian(&[hi]).unwrap()[0][0] > 0.0);
    }

    #[test]
    fn radial_jacobian_follows_closed_form(alpha in 0.5f64..100.0, r in 1e-3f64..1e3) {
        let m = GeometricMapping::radial(alpha, unit());
        let want = alpha / ((1.0 + alpha * r) * (1.0 + alpha).ln());
        let got = m.jacobian(&[r]).unwrap()[0][0];
        prop_assert!((got / want - 1.0).abs() < 1e-12);
    }

    #[test]
    fn local_stretch_fixes_center(beta in 1.0f64..100.0, c in 0.1f64..0.9) {
        let m = GeometricMapping::local_stretch(beta, vec![c], unit());
        prop_assert!((m.map_point(&[c]).unwrap()[0] - c).abs() < 1e-15);
        prop_assert!((m.jacobian(&[c]).unwrap()[0][0] - beta).abs() < 1e-10 * beta);
    }

    #[test]
    fn local_stretch_is_odd_about_center(beta in 1.0f64..100.0, y in 0.0f64..0.5) {
        let m = GeometricMapping::local_stretch(beta, vec![0.5], unit());
        let a = m.map_point(&[0.5 + y]).unwrap()[0] - 0.5;
        let b = m.map_point(&[0.5 - y]).unwrap()[0] - 0.5;
        prop_assert!((a + b).abs() < 1e-14);
    }

    #[test]
    fn saturating_stays_in_unit_interval(x in -2.0f64..3.0) {
        let m = GeometricMapping::saturating(50.0, 0.5, unit());
        let v = m.map_point(&[x]).unwrap()[0];
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!(m.jacobian(&[x]).unwrap()[0][0] >= 0.0);
    }

    #[test]
    fn saturating_collapses_far_from_center(off in 0.35f64..0.5, side in prop::bool::ANY) {
        let m = GeometricMapping::saturating(50.0, 0.5, unit());
        let x = if side { 0.5 + off } else { 0.5 - off };
        prop_assert!(m.jacobian(&[x]).unwrap()[0][0] < 1e-5);
    }

    #[test]
    fn pwl_is_monotone_with_fixed_ends(
        logits in prop::collection::vec(-3.0f64..3.0, PWL_SEGMENTS),
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
    ) {
        let mut m = GeometricMapping::pwl(unit());
        m.set_params(&logits);
        prop_assert!(m.map_point(&[0.0]).unwrap()[0].abs() < 1e-15);
        prop_assert!((m.map_point(&[1.0]).unwrap()[0] - 1.0).abs() < 1e-14);
        let inc = m.pwl_increments().unwrap();
        prop_assert!((inc[0].iter().sum::<f64>() - 1.0).abs() < 1e-14);
        prop_assert!(inc[0].iter().all(|&s| s > 0.0));
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-12);
        prop_assert!(m.map_point(&[lo]).unwrap()[0] < m.map_point(&[hi]).unwrap()[0]);
    }
}

#[test]
fn radial_decay_is_inverse_linear_at_large_radius() {
    let m = GeometricMapping::radial(20.0, unit());
    let scaled: Vec<f64> = [10.0, 100.0, 1000.0]
        .iter()
        .map(|&r| r * m.jacobian(&[r]).unwrap()[0][0])
        .collect();
    let hi = scaled.iter().copied().fold(0.0, f64::max);
    let lo = scaled.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(hi / lo <= 1.2, "{scaled:?}");
}

#[test]
fn local_stretch_identity_limit_is_bounded_by_the_gate() {
    // Away from the center the deviation is w * |tanh(beta y) - y| with the
    // gate w = exp(-beta y^2).
    let beta = 10.0f64;
    let m = GeometricMapping::local_stretch(beta, vec![0.0], unit());
    for i in 0..50 {
        let y = 3.0 / beta.sqrt() + 0.02 * f64::from(i);
        let dev = (m.map_point(&[y]).unwrap()[0] - y).abs();
        let bound = (-beta * y * y).exp() * ((beta * y).tanh() - y).abs();
        assert!((dev - bound).abs() <= 1e-15 + 1e-12 * bound);
    }
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(GeometricMapping::radial(0.0, unit()).validate().is_err());
    assert!(GeometricMapping::local_stretch(-1.0, vec![0.5], unit()).validate().is_err());
    assert!(GeometricMapping::local_stretch(10.0, vec![0.5, 0.5], unit()).validate().is_err());
}
