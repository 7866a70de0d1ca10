use transonic::axisym::*;
use transonic::background::*;
use transonic::coeffs::*;
use transonic::potential::*;
use transonic::profile::Profile;
use transonic::sonic::*;

#[test]
fn irrotational_sonic_curve_moves_linearly_with_epsilon() {
    let bg = solve_background(&asset_gas(), ASSET_R0, ASSET_R1, 129).unwrap();
    let c = compute_coeffs(&bg);
    let (_, hi) = admissible_l0_interval(&c).unwrap();
    let ctl = PotentialControls::new(hi + 2.0, 8);
    let mut dev = Vec::new();
    for eps in [1e-3, 2e-3] {
        let bc = BoundaryPerturbation2D::irrotational(eps, Profile::cos(1.0), Profile::sin(1.0));
        let (it, _) = solve_irrotational(&bg, &c, None, &bc, &ctl).unwrap();
        let curve = locate_sonic_2d(&it.to_field(bg.gas.b0, bg.gas.a0, bg.gas.gamma), bg.r_c).unwrap();
        assert!(curve.max_root_residual <= 1e-12);
        assert!(curve.nonexceptional_margin > 0.1);
        assert!(curve.c1_deviation < 50.0 * eps, "{}", curve.c1_deviation);
        dev.push(curve.c1_deviation);
    }
    assert!((dev[1] / dev[0] - 2.0).abs() < 0.25, "{dev:?}");
}

#[test]
fn axisymmetric_sonic_surface_returns_to_the_cylinder() {
    let bg = solve_background(&asset_gas(), ASSET_R0, ASSET_R1, 33).unwrap();
    let data = AxisymData {
        epsilon: 1e-3,
        q1: Profile::bump(1.0, 0.0, 1.0),
        q2: Profile::bump(1.0, 0.2, 1.0),
        q3: Profile::bump(1.0, -0.2, 1.0),
        b1: Profile::bump(1.0, 0.0, 1.0),
        a1: Profile::bump(0.5, 0.0, 1.0),
    };
    let (f, _) = solve_axisym(&bg, &data, &AxisymControls::new(16.0, 257)).unwrap();
    assert!(locate_sonic_axisym(&f, bg.r_c).unwrap().dev_end < 1e-4);
    let s = locate_sonic_axisym(&f, discrete_sonic_radius(&bg).unwrap()).unwrap();
    assert!(s.max_dev > 1e-5);
    assert!(s.dev_end < s.dev_half);
}
