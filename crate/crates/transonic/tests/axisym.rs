use transonic::axisym::*;
use transonic::background::*;
use transonic::profile::Profile;

fn data(eps: f64) -> AxisymData {
    AxisymData {
        epsilon: eps,
        q1: Profile::bump(1.0, 0.0, 1.0),
        q2: Profile::bump(1.0, 0.2, 1.0),
        q3: Profile::bump(1.0, -0.2, 1.0),
        b1: Profile::bump(1.0, 0.0, 1.0),
        a1: Profile::bump(0.5, 0.0, 1.0),
    }
}

fn bg(n: usize) -> BackgroundProfile {
    solve_background(&asset_gas(), ASSET_R0, ASSET_R1, n).unwrap()
}

#[test]
fn compact_data_converges_with_decaying_tail() {
    let bg = bg(33);
    let (f, rep) = solve_axisym(&bg, &data(1e-3), &AxisymControls::new(16.0, 257)).unwrap();
    assert!(rep.max_contraction < 0.5, "{:?}", rep.contraction_factors);
    assert!(rep.characteristics.reevaluated.iter().all(|&d| d < 1e-8), "{:?}", rep.characteristics);
    assert!(rep.tail_end < rep.tail_half, "{} {}", rep.tail_end, rep.tail_half);
    assert!(rep.barrier.bound_respected && rep.barrier.max_principle_gap <= 0.0, "{:?}", rep.barrier);
    assert!(rep.barrier.decay.iter().all(|d| d.holds));
    assert!(rep.transported_extent < 2.0);
    assert_eq!(f.nx(), 257);
}

#[test]
fn deviation_scales_linearly_in_epsilon() {
    let bg = bg(33);
    let ctl = AxisymControls::new(16.0, 257);
    let dev: Vec<f64> = [1e-3, 2e-3, 4e-3].iter().map(|&e| solve_axisym(&bg, &data(e), &ctl).unwrap().1.max_deviation).collect();
    for w in dev.windows(2) {
        assert!((w[1] / w[0] / 2.0 - 1.0).abs() < 0.25, "{dev:?}");
    }
}

#[test]
fn potential_data_leaves_flow_irrotational() {
    let bg = bg(33);
    let d = AxisymData { q2: Profile::zero(), b1: Profile::zero(), a1: Profile::zero(), ..data(1e-3) };
    let (_, rep) = solve_axisym(&bg, &d, &AxisymControls::new(8.0, 129)).unwrap();
    assert!(rep.g2_sup < 1e-12, "{}", rep.g2_sup);
    assert!(rep.vorticity_sup[0] < 1e-12 && rep.vorticity_sup[1] < 1e-12, "{:?}", rep.vorticity_sup);
    assert!(rep.max_deviation > 1e-5);
}

#[test]
fn swirl_data_is_carried_into_angular_velocity() {
    let bg = bg(33);
    let d = AxisymData { q2: Profile::bump(1.0, 0.0, 1.0), ..AxisymData::zero(1e-3) };
    let (f, _) = solve_axisym(&bg, &d, &AxisymControls::new(8.0, 129)).unwrap();
    let k = f.nx() / 2;
    let i = f.nr() - 1;
    // on the entry circle the foot is the node itself
    assert!((f.u2[[i, k]] - bg.u_b2[i] - 1e-3).abs() < 1e-14);
    let ru2_inner = f.r_grid[0] * (f.u2[[0, k]] - bg.u_b2[0]);
    assert!((ru2_inner - bg.r1 * 1e-3).abs() < 1e-5, "{ru2_inner}");
}

#[test]
fn doubling_the_strip_shrinks_the_tail() {
    let bg = bg(17);
    let rep = far_field_decay_check(&bg, &data(1e-3), &AxisymControls::new(8.0, 65)).unwrap();
    assert!(rep.decays, "{rep:?}");
}

#[test]
fn mass_residual_converges_for_wide_data() {
    // wide bumps keep the grids in the asymptotic range; narrow ones need much finer meshes
    let d = AxisymData {
        epsilon: 1e-3,
        q1: Profile::bump(1.0, 0.0, 3.0),
        q2: Profile::bump(1.0, 0.0, 3.0),
        q3: Profile::bump(1.0, 0.0, 3.0),
        b1: Profile::bump(1.0, 0.0, 3.0),
        a1: Profile::zero(),
    };
    let res: Vec<f64> = [(17, 129), (33, 257), (65, 513)]
        .iter()
        .map(|&(nr, nx)| solve_axisym(&bg(nr), &d, &AxisymControls::new(8.0, nx)).unwrap().1.mass_residual)
        .collect();
    let order = (res[1] / res[2]).log2();
    assert!(order > 1.5, "{res:?}");
}
